fn main() {
    std::process::exit(bicoh::cli::run(std::env::args_os()));
}
