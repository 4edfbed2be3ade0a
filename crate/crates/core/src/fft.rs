//! Thin helpers over rustfft shared by the filter bank and the generators.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Smallest length >= `n` whose only prime factors are 2, 3 and 5.
pub fn smooth_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

pub fn forward(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

/// Unnormalized inverse transform.
pub fn inverse(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(buf.len()).process(buf);
}

pub fn real_spectrum(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward(&mut buf);
    buf
}

/// Frequency in Hz of FFT bin `k` for a transform of length `n` (negative above n/2).
pub fn bin_freq(k: usize, n: usize, fs: f64) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    k * fs / n as f64
}

/// Zero-phase brick-wall band-pass keeping |f| in [lo, hi].
pub fn bandpass(x: &[f64], fs: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = x.len();
    let mut spec = real_spectrum(x);
    for (k, v) in spec.iter_mut().enumerate() {
        let f = bin_freq(k, n, fs).abs();
        if f < lo || f > hi {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    inverse(&mut spec);
    spec.iter().map(|v| v.re / n as f64).collect()
}

/// Analytic signal of a real sequence: negative frequencies removed, positive doubled.
/// A delay in seconds can be folded in as a linear phase (circular shift).
pub fn analytic(x: &[f64], fs: f64, delay: f64) -> Vec<Complex64> {
    let n = x.len();
    let mut spec = real_spectrum(x);
    for (k, v) in spec.iter_mut().enumerate() {
        let scale = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else if k < (n + 1) / 2 {
            2.0
        } else {
            0.0
        };
        let f = bin_freq(k, n, fs);
        let rot = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * delay);
        *v *= scale * if delay == 0.0 { Complex64::new(1.0, 0.0) } else { rot };
    }
    inverse(&mut spec);
    spec.iter().map(|v| v / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_lengths() {
        assert_eq!(smooth_len(1), 1);
        assert_eq!(smooth_len(7), 8);
        assert_eq!(smooth_len(31), 32);
        assert_eq!(smooth_len(121), 125);
    }

    #[test]
    fn analytic_of_cosine_has_unit_envelope() {
        let fs = 100.0;
        let x: Vec<f64> = (0..1000).map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / fs).cos()).collect();
        let a = analytic(&x, fs, 0.0);
        for v in &a {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }
}
