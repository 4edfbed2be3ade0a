//! Single-sideband filter bank: windowed complex demodulation of a real
//! signal into a band × frame array.
//!
//! Band `k` at frame `m`, whose window is centred on sample `t_m`, is
//!
//! ```text
//! S[k, m] = Σ_n h_k[n − t_m] · x[n] · exp(−i 2π c_k n / fs)
//! ```
//!
//! The phase is referenced to absolute time, so a tone at the band centre
//! demodulates to a constant and a delay of `d` samples rotates band `k` by
//! `exp(−i 2π c_k d / fs)`. Frame centres sit on multiples of the hop; frames
//! whose window would run past either end of the signal are dropped.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft::smooth_len;

/// Gaussian windows are cut at ±4 standard deviations.
pub const GAUSSIAN_TRUNCATION: f64 = 4.0;
/// Frame rate over highest band edge used by the default hop.
pub const OVERSAMPLE_FACTOR: f64 = 4.0;

/// Uniformly sampled real time series.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    fs: f64,
    id: Option<String>,
}

impl Signal {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return invalid(format!("sampling rate must be positive, got {fs}"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Signal { samples, fs, id: None })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Gaussian,
    Hann,
    /// Rectangular segments of the FFT reference estimator. Not a valid
    /// filter-bank window: its transform has negative lobes and no fixed
    /// half-maximum width.
    Boxcar,
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(WindowKind::Gaussian),
            "hann" | "hanning" => Ok(WindowKind::Hann),
            "boxcar" => Ok(WindowKind::Boxcar),
            other => Err(Error::UnsupportedWindow(other.to_string())),
        }
    }
}

/// One filter of the bank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BandSpec {
    pub center: f64,
    /// Full width at half maximum of the filter's amplitude response (Hz).
    pub bandwidth: f64,
    pub window_kind: WindowKind,
    pub index: usize,
    /// Use the window's autocorrelation instead of the window itself, which
    /// squares the frequency response.
    #[serde(default)]
    pub squared_response: bool,
}

impl BandSpec {
    pub fn new(center: f64, bandwidth: f64, window_kind: WindowKind) -> Self {
        BandSpec { center, bandwidth, window_kind, index: 0, squared_response: false }
    }

    pub fn squared(mut self) -> Self {
        self.squared_response = true;
        self
    }

    pub fn top_edge(&self) -> f64 {
        self.center.abs() + self.bandwidth / 2.0
    }

    pub(crate) fn window_key(&self) -> WindowKey {
        WindowKey { kind: self.window_kind, bw_bits: self.bandwidth.to_bits(), squared: self.squared_response }
    }

    /// Sampled window of this band at rate `fs`.
    pub fn window(&self, fs: f64) -> Result<Vec<f64>> {
        let w = window_samples(self.window_kind, self.bandwidth, fs)?;
        Ok(if self.squared_response { autocorrelate(&w) } else { w })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) struct WindowKey {
    kind: WindowKind,
    bw_bits: u64,
    squared: bool,
}

/// Symmetric, unit-energy analysis window whose amplitude response has a full
/// width at half maximum of `bandwidth`.
///
/// Gaussian: σ_f = bw / (2√(2 ln 2)), truncated at ±4σ_t. Hann: 2·fs/bw + 1
/// taps with zero end points, whose main lobe is bw wide at half amplitude.
pub fn window_samples(kind: WindowKind, bandwidth: f64, fs: f64) -> Result<Vec<f64>> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return invalid(format!("window bandwidth must be positive, got {bandwidth}"));
    }
    if !(fs.is_finite() && fs > 0.0) {
        return invalid(format!("sampling rate must be positive, got {fs}"));
    }
    let mut w = match kind {
        WindowKind::Gaussian => {
            let sigma_f = bandwidth / (2.0 * (2.0 * 2f64.ln()).sqrt());
            let sigma_n = fs / (2.0 * PI * sigma_f);
            let half = (GAUSSIAN_TRUNCATION * sigma_n).ceil() as isize;
            (-half..=half).map(|n| (-(n as f64).powi(2) / (2.0 * sigma_n * sigma_n)).exp()).collect::<Vec<_>>()
        }
        WindowKind::Hann => {
            let half = (fs / bandwidth).round().max(1.0) as usize;
            let rise: Vec<f64> = (0..=half).map(|n| (PI * n as f64 / (2 * half) as f64).sin().powi(2)).collect();
            rise.iter().chain(rise.iter().rev().skip(1)).copied().collect()
        }
        WindowKind::Boxcar => return Err(Error::UnsupportedWindow("boxcar".into())),
    };
    let energy = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v /= energy);
    Ok(w)
}

/// Full autocorrelation of a window, rescaled to unit energy.
pub fn autocorrelate(w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let mut r = vec![0.0; 2 * n - 1];
    for (lag, slot) in r.iter_mut().enumerate() {
        let d = lag as isize - (n as isize - 1);
        *slot = (0..n as isize)
            .filter(|&i| i + d >= 0 && i + d < n as isize)
            .map(|i| w[i as usize] * w[(i + d) as usize])
            .sum();
    }
    let energy = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    r.iter_mut().for_each(|v| *v /= energy);
    r
}

/// Bank of half-overlapping bands with centres `f_min, f_min + bw/2, …` up to
/// `f_max`. Bands whose upper edge would pass Nyquist are left out.
pub fn design_bank(fs: f64, f_min: f64, f_max: f64, bandwidth: f64, window_kind: WindowKind) -> Result<Vec<BandSpec>> {
    design_bank_spaced(fs, f_min, f_max, bandwidth, bandwidth / 2.0, window_kind)
}

/// [`design_bank`] with an explicit centre spacing.
pub fn design_bank_spaced(
    fs: f64,
    f_min: f64,
    f_max: f64,
    bandwidth: f64,
    spacing: f64,
    window_kind: WindowKind,
) -> Result<Vec<BandSpec>> {
    if !(fs.is_finite() && fs > 0.0) {
        return invalid(format!("sampling rate must be positive, got {fs}"));
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return invalid(format!("bandwidth must be positive, got {bandwidth}"));
    }
    if bandwidth >= fs {
        return invalid(format!("bandwidth {bandwidth} Hz is not below the sampling rate {fs} Hz"));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return invalid(format!("band spacing must be positive, got {spacing}"));
    }
    if !(f_min >= 0.0 && f_min < f_max) {
        return invalid(format!("empty frequency range [{f_min}, {f_max}]"));
    }
    let nyquist = fs / 2.0;
    if f_max > nyquist {
        return Err(Error::Nyquist(format!("range top {f_max} Hz above Nyquist {nyquist} Hz")));
    }
    let tol = 1e-9 * spacing;
    let mut bands = Vec::new();
    let mut i = 0usize;
    loop {
        let center = f_min + i as f64 * spacing;
        if center > f_max + tol {
            break;
        }
        if center + bandwidth / 2.0 <= nyquist + tol {
            bands.push(BandSpec { center, bandwidth, window_kind, index: bands.len(), squared_response: false });
        }
        i += 1;
    }
    if bands.is_empty() {
        return Err(Error::Nyquist(format!("no band of width {bandwidth} Hz fits in [{f_min}, {f_max}] below Nyquist")));
    }
    Ok(bands)
}

/// `max(1, ⌊fs / (4 f_top)⌋)`.
pub fn default_hop(fs: f64, f_top: f64) -> usize {
    if f_top <= 0.0 {
        return 1;
    }
    ((fs / (OVERSAMPLE_FACTOR * f_top)).floor() as usize).max(1)
}

/// Complex band × frame array.
#[derive(Clone, Debug)]
pub struct Decomposition {
    values: Array2<Complex64>,
    bands: Vec<BandSpec>,
    hop: usize,
    source_fs: f64,
    first_center: usize,
}

impl Decomposition {
    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn bands(&self) -> &[BandSpec] {
        &self.bands
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn source_fs(&self) -> f64 {
        self.source_fs
    }

    pub fn frame_rate(&self) -> f64 {
        self.source_fs / self.hop as f64
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_bands(&self) -> usize {
        self.values.nrows()
    }

    /// Sample index (in the source signal) of the centre of frame 0.
    pub fn first_center(&self) -> usize {
        self.first_center
    }

    pub fn center_sample(&self, frame: usize) -> usize {
        self.first_center + frame * self.hop
    }

    pub fn row(&self, band: usize) -> &[Complex64] {
        self.values.row(band).to_slice().expect("row-major storage")
    }

    /// Multiplies every value of band `i` by `factors[i]`.
    pub(crate) fn rotate_rows(&mut self, factors: &[Complex64]) {
        for (mut row, f) in self.values.rows_mut().into_iter().zip(factors) {
            row.mapv_inplace(|v| v * f);
        }
    }

    /// Re-expresses the frame grid in units of a coarser parent sampling:
    /// sample `i` of this decomposition's source was sample `origin + i·step`
    /// of a signal sampled at `parent_fs`.
    pub(crate) fn rebase(mut self, origin: usize, step: usize, parent_fs: f64) -> Self {
        self.first_center = origin + self.first_center * step;
        self.hop *= step;
        self.source_fs = parent_fs;
        self
    }
}

/// Filters `signal` through every band and samples the output every `hop`
/// samples.
///
/// The convolution runs through one forward transform per band of length
/// P = hop·Q and a length-Q inverse of the spectrum folded Q-periodically,
/// which yields the hop-decimated output directly. P ≥ N, and the kept
/// frames never reach past the signal, so circular wrap never enters.
pub fn demodulate(signal: &Signal, bands: &[BandSpec], hop: usize) -> Result<Decomposition> {
    if hop == 0 {
        return invalid("hop must be at least 1");
    }
    if bands.is_empty() {
        return invalid("empty band list");
    }
    let fs = signal.fs();
    let x = signal.samples();
    let n = x.len();

    let mut windows: HashMap<WindowKey, Vec<f64>> = HashMap::new();
    for b in bands {
        if !(b.bandwidth.is_finite() && b.bandwidth > 0.0) || !b.center.is_finite() {
            return invalid(format!("bad band {b:?}"));
        }
        if let std::collections::hash_map::Entry::Vacant(e) = windows.entry(b.window_key()) {
            e.insert(b.window(fs)?);
        }
    }
    let longest = windows.values().map(Vec::len).max().unwrap_or(1);
    let half = (longest - 1) / 2;
    if n < 2 * longest {
        return Err(Error::SignalTooShort { needed: 2 * longest, got: n });
    }
    let first_center = half.div_ceil(hop) * hop;
    let last_allowed = n - 1 - half;
    if first_center > last_allowed {
        return Err(Error::SignalTooShort { needed: first_center + half + 1, got: n });
    }
    let n_frames = (last_allowed - first_center) / hop + 1;

    let q = smooth_len(n.div_ceil(hop));
    let p = q * hop;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p);
    let inv = planner.plan_fft_inverse(q);

    let kernels: HashMap<WindowKey, Vec<Complex64>> = windows
        .iter()
        .map(|(key, w)| {
            let wh = (w.len() - 1) / 2;
            let mut buf = vec![Complex64::new(0.0, 0.0); p];
            for (i, &v) in w.iter().enumerate() {
                let j = (i as isize - wh as isize).rem_euclid(p as isize) as usize;
                buf[j] = Complex64::new(v, 0.0);
            }
            fwd.process(&mut buf);
            (*key, buf)
        })
        .collect();

    let start = first_center / hop;
    let rows: Vec<Vec<Complex64>> = bands
        .par_iter()
        .map(|band| {
            let kernel = &kernels[&band.window_key()];
            let mut buf = vec![Complex64::new(0.0, 0.0); p];
            for (i, (&xi, slot)) in x.iter().zip(buf.iter_mut()).enumerate() {
                *slot = xi * carrier(band.center, i, fs);
            }
            fwd.process(&mut buf);
            let mut folded = vec![Complex64::new(0.0, 0.0); q];
            for (k, (v, h)) in buf.iter().zip(kernel.iter()).enumerate() {
                folded[k % q] += v * h;
            }
            inv.process(&mut folded);
            let scale = 1.0 / p as f64;
            folded[start..start + n_frames].iter().map(|v| v * scale).collect()
        })
        .collect();

    let mut values = Array2::zeros((bands.len(), n_frames));
    for (k, row) in rows.into_iter().enumerate() {
        values.row_mut(k).assign(&ndarray::Array1::from(row));
    }
    Ok(Decomposition { values, bands: bands.to_vec(), hop, source_fs: fs, first_center })
}

/// `exp(−i 2π f n / fs)` with the phase reduced to one cycle before scaling.
pub(crate) fn carrier(f: f64, n: usize, fs: f64) -> Complex64 {
    let cycles = f * n as f64 / fs;
    let frac = cycles - cycles.floor();
    Complex64::from_polar(1.0, -2.0 * PI * frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).cos()).collect()
    }

    /// Amplitude response of a window at frequency offset `df`.
    fn response(w: &[f64], df: f64, fs: f64) -> f64 {
        let half = (w.len() - 1) as f64 / 2.0;
        w.iter().enumerate().map(|(i, &v)| v * (2.0 * PI * df * (i as f64 - half) / fs).cos()).sum()
    }

    fn fwhm(w: &[f64], fs: f64, bw: f64) -> f64 {
        let peak = response(w, 0.0, fs);
        let (mut lo, mut hi) = (0.0, 2.0 * bw);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if response(w, mid, fs) > 0.5 * peak {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        2.0 * lo
    }

    #[test]
    fn bank_spacing_examples() {
        let b = design_bank(1000.0, 0.0, 500.0, 2.0, WindowKind::Hann).unwrap();
        assert_eq!(b.len(), 500);
        assert_eq!(b[0].center, 0.0);
        assert_eq!(b[1].center, 1.0);
        assert_eq!(b[499].center, 499.0);
        let b = design_bank(500.0, 6.0, 10.0, 1.0, WindowKind::Gaussian).unwrap();
        let centers: Vec<f64> = b.iter().map(|b| b.center).collect();
        assert_eq!(centers, vec![6.0, 6.5, 7.0, 7.5, 8.0, 8.5, 9.0, 9.5, 10.0]);
        assert!(matches!(design_bank(100.0, 0.0, 60.0, 2.0, WindowKind::Hann), Err(Error::Nyquist(_))));
    }

    #[test]
    fn bank_guards() {
        assert!(design_bank(100.0, 0.0, 40.0, 100.0, WindowKind::Hann).is_err());
        assert!(design_bank(100.0, 10.0, 10.0, 2.0, WindowKind::Hann).is_err());
        assert!(design_bank(100.0, 20.0, 10.0, 2.0, WindowKind::Hann).is_err());
        for b in design_bank(100.0, 0.0, 50.0, 4.0, WindowKind::Gaussian).unwrap() {
            assert!(b.center + b.bandwidth / 2.0 <= 50.0);
            assert!(b.center - b.bandwidth / 2.0 >= -50.0);
        }
    }

    #[test]
    fn windows_are_symmetric_unit_energy_with_matching_width() {
        for (kind, bw, fs) in [
            (WindowKind::Gaussian, 2.0, 1000.0),
            (WindowKind::Gaussian, 1.0, 250.0),
            (WindowKind::Gaussian, 40.0, 500.0),
            (WindowKind::Hann, 1.0, 500.0),
            (WindowKind::Hann, 2.0, 100.0),
        ] {
            let w = window_samples(kind, bw, fs).unwrap();
            let n = w.len();
            for i in 0..n {
                assert_eq!(w[i], w[n - 1 - i]);
            }
            let e: f64 = w.iter().map(|v| v * v).sum();
            assert!((e - 1.0).abs() < 1e-12);
            let width = fwhm(&w, fs, bw);
            assert!((width - bw).abs() <= 0.05 * bw, "{kind:?} bw {bw}: fwhm {width}");
        }
    }

    #[test]
    fn gaussian_response_is_non_negative() {
        let fs = 1000.0;
        let w = window_samples(WindowKind::Gaussian, 2.0, fs).unwrap();
        for i in 0..2000 {
            let df = i as f64 * 0.25;
            // Truncation sidelobes only.
            assert!(response(&w, df, fs) >= -1e-3 * response(&w, 0.0, fs));
        }
    }

    #[test]
    fn hann_length_is_two_over_bandwidth() {
        let w = window_samples(WindowKind::Hann, 1.0, 500.0).unwrap();
        assert_eq!(w.len(), 1001);
    }

    #[test]
    fn window_guards() {
        assert!(window_samples(WindowKind::Gaussian, 0.0, 1000.0).is_err());
        assert!(window_samples(WindowKind::Gaussian, 2.0, 0.0).is_err());
        assert!(matches!(window_samples(WindowKind::Boxcar, 2.0, 100.0), Err(Error::UnsupportedWindow(_))));
        assert!(matches!("kaiser".parse::<WindowKind>(), Err(Error::UnsupportedWindow(_))));
    }

    #[test]
    fn squared_response_window_squares_the_transform() {
        let fs = 200.0;
        let w = window_samples(WindowKind::Gaussian, 2.0, fs).unwrap();
        let r = autocorrelate(&w);
        for df in [0.0, 0.5, 1.0, 2.0] {
            let a = response(&w, df, fs);
            let b = response(&r, df, fs);
            let ratio0 = response(&r, 0.0, fs) / response(&w, 0.0, fs).powi(2);
            assert!((b - ratio0 * a * a).abs() < 1e-9 * ratio0);
        }
    }

    #[test]
    fn tone_at_centre_demodulates_to_constant() {
        let fs = 200.0;
        let x = cosine(10.0, fs, 4000);
        let sig = Signal::new(x, fs).unwrap();
        let band = BandSpec::new(10.0, 2.0, WindowKind::Gaussian);
        let d = demodulate(&sig, &[band], 5).unwrap();
        let row = d.row(0);
        let m0 = row[row.len() / 2];
        for v in row {
            assert!((v.norm() - m0.norm()).abs() < 0.05 * m0.norm());
            assert!((v - m0).norm() < 1e-3 * m0.norm());
        }
    }

    #[test]
    fn zero_signal_gives_zero_decomposition() {
        let sig = Signal::new(vec![0.0; 3000], 100.0).unwrap();
        let bands = design_bank(100.0, 0.0, 20.0, 2.0, WindowKind::Gaussian).unwrap();
        let d = demodulate(&sig, &bands, 2).unwrap();
        assert!(d.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn short_or_bad_input_is_rejected() {
        assert!(matches!(Signal::new(vec![0.0, f64::NAN], 10.0), Err(Error::NonFinite(1))));
        let sig = Signal::new(vec![1.0; 100], 100.0).unwrap();
        let band = BandSpec::new(10.0, 2.0, WindowKind::Gaussian);
        assert!(matches!(demodulate(&sig, &[band], 1), Err(Error::SignalTooShort { .. })));
    }

    #[test]
    fn dc_band_of_real_input_is_real() {
        let fs = 100.0;
        let x: Vec<f64> = (0..3000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let sig = Signal::new(x, fs).unwrap();
        let d = demodulate(&sig, &[BandSpec::new(0.0, 2.0, WindowKind::Gaussian)], 3).unwrap();
        let scale = d.row(0).iter().map(|v| v.norm()).fold(0.0, f64::max);
        for v in d.row(0) {
            assert!(v.im.abs() <= 1e-12 * scale.max(1.0));
        }
    }
}
