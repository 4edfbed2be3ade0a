//! Seedable synthetic signals.
//!
//! A [`SimRecipe`] is a list of components plus optional noise. Each
//! component draws from its own ChaCha stream, keyed by the master seed and a
//! hash of the component's own description, so reordering components does
//! not change what any of them renders.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demod::Signal;
use crate::error::{invalid, Error, Result};
use crate::fft;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SimRecipe {
    /// Seconds.
    pub duration: f64,
    /// Hz.
    pub fs: f64,
    pub seed: u64,
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    OneOverF,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Spectral exponent for `one_over_f`.
    #[serde(default = "one")]
    pub exponent: f64,
    /// Noise power relative to the summed components, in dB. 0 dB means
    /// equal total power.
    pub level_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComponentSpec {
    /// `cos θt + (1 − cos θt)·cos γt`.
    SineAmPac {
        theta: f64,
        gamma: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `cos θt + cos γt + ½cos(γ−θ)t − ½cos(γ+θ)t`; the FO envelope is
    /// `√(1 + sin²θt)`.
    FmPair {
        theta: f64,
        gamma: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Band-limited noise in `fo_band` whose envelope follows the phase of
    /// band-limited noise in `so_band`: `(1 + cos(k·φ(t − delay)))/2`.
    NestedNoise {
        #[serde(default = "default_so_band")]
        so_band: (f64, f64),
        #[serde(default = "default_fo_band")]
        fo_band: (f64, f64),
        /// Seconds by which the FO envelope lags the SO phase.
        #[serde(default)]
        delay: f64,
        #[serde(default = "default_harmonic")]
        harmonic: u32,
        #[serde(default = "one")]
        so_amplitude: f64,
        #[serde(default = "one")]
        fo_amplitude: f64,
    },
    /// `exp(κ cos φ(t))`, scaled to a peak of 1, with φ the phase of
    /// band-limited noise in `so_band` (a pure tone when the band is a point).
    TransientTrain {
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default = "default_so_band")]
        so_band: (f64, f64),
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// A feature waveform placed at the events of a point process.
    PointProcessFeature {
        process: PointProcessSpec,
        feature: FeatureSpec,
        #[serde(default)]
        phase_policy: PhasePolicy,
    },
    /// `cos(2πf1 t + φ1) + cos(2πf2 t + φ2) + cos(2π(f1+f2)t + φ3)`.
    QpcTriple {
        f1: f64,
        f2: f64,
        #[serde(default)]
        phase: TriplePhase,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn default_so_band() -> (f64, f64) {
    (6.0, 10.0)
}
fn default_fo_band() -> (f64, f64) {
    (30.0, 80.0)
}
fn default_harmonic() -> u32 {
    1
}
fn default_kappa() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointProcessSpec {
    Poisson { rate: f64 },
    Periodic { period: f64 },
    PeriodicJittered { period: f64, jitter_sd: f64 },
}

/// Gaussian-windowed cosine; `freq = 0` gives a plain bump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Gabor {
    pub freq: f64,
    /// Standard deviation of the envelope, seconds.
    pub width: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Offset of the envelope centre from the event time, seconds.
    #[serde(default)]
    pub delay: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    #[serde(default)]
    pub so: Option<Gabor>,
    #[serde(default)]
    pub fo: Option<Gabor>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhasePolicy {
    #[default]
    Locked,
    /// Independent uniform FO carrier phase per event.
    RandomPerEvent,
    /// Gaussian FO carrier phase jitter per event, radians.
    Jittered { sd: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TriplePhase {
    #[default]
    Locked,
    /// The sum-frequency phase is redrawn every `segment` seconds.
    RandomPerSegment { segment: f64 },
}

impl SimRecipe {
    /// Parses a recipe; errors carry the JSON path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let recipe: SimRecipe = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Format(format!("at {path}: {}", e.into_inner()))
        })?;
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return invalid(format!("fs must be positive, got {}", self.fs));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) || self.n_samples() < 2 {
            return invalid("duration·fs must be at least 2 samples");
        }
        let nyq = self.fs / 2.0;
        let below = |what: &str, f: f64| -> Result<()> {
            if f > nyq {
                Err(Error::Nyquist(format!("{what} at {f} Hz exceeds {nyq} Hz")))
            } else {
                Ok(())
            }
        };
        let band = |what: &str, (lo, hi): (f64, f64)| -> Result<()> {
            if !(lo >= 0.0 && lo <= hi) {
                return invalid(format!("{what} band ({lo}, {hi}) is not ordered"));
            }
            below(what, hi)
        };
        for (i, c) in self.components.iter().enumerate() {
            let at = |msg: String| Error::InvalidParameter(format!("components[{i}]: {msg}"));
            match c {
                ComponentSpec::SineAmPac { theta, gamma, .. } | ComponentSpec::FmPair { theta, gamma, .. } => {
                    if !(*theta > 0.0 && gamma - theta > 0.0) {
                        return Err(at(format!("need 0 < theta < gamma, got theta {theta}, gamma {gamma}")));
                    }
                    below("gamma + theta", gamma + theta)?;
                }
                ComponentSpec::NestedNoise { so_band, fo_band, harmonic, .. } => {
                    band("so", *so_band)?;
                    band("fo", *fo_band)?;
                    if so_band.1 >= fo_band.0 {
                        return Err(at("so band must lie below fo band".into()));
                    }
                    if *harmonic == 0 {
                        return Err(at("harmonic must be at least 1".into()));
                    }
                }
                ComponentSpec::TransientTrain { kappa, so_band, .. } => {
                    band("so", *so_band)?;
                    if !(*kappa > 0.0) {
                        return Err(at(format!("kappa must be positive, got {kappa}")));
                    }
                }
                ComponentSpec::PointProcessFeature { process, feature, phase_policy } => {
                    match process {
                        PointProcessSpec::Poisson { rate } if !(*rate > 0.0) => {
                            return Err(at(format!("rate must be positive, got {rate}")))
                        }
                        PointProcessSpec::Periodic { period } | PointProcessSpec::PeriodicJittered { period, .. }
                            if !(*period > 0.0) =>
                        {
                            return Err(at(format!("period must be positive, got {period}")))
                        }
                        PointProcessSpec::PeriodicJittered { jitter_sd, .. } if !(*jitter_sd >= 0.0) => {
                            return Err(at("jitter_sd must be non-negative".into()))
                        }
                        _ => {}
                    }
                    if feature.so.is_none() && feature.fo.is_none() {
                        return Err(at("feature needs an so or fo part".into()));
                    }
                    for g in feature.so.iter().chain(&feature.fo) {
                        if !(g.width > 0.0 && g.freq >= 0.0) {
                            return Err(at("gabor width must be positive and freq non-negative".into()));
                        }
                        below("feature", g.freq)?;
                    }
                    if let PhasePolicy::Jittered { sd } = phase_policy {
                        if !(*sd >= 0.0) {
                            return Err(at("phase jitter must be non-negative".into()));
                        }
                    }
                }
                ComponentSpec::QpcTriple { f1, f2, phase, .. } => {
                    if !(*f1 > 0.0 && *f2 > 0.0) {
                        return Err(at("f1 and f2 must be positive".into()));
                    }
                    below("f1 + f2", f1 + f2)?;
                    if let TriplePhase::RandomPerSegment { segment } = phase {
                        if !(*segment > 0.0) {
                            return Err(at("segment must be positive".into()));
                        }
                    }
                }
            }
        }
        if let Some(n) = &self.noise {
            if !n.level_db.is_finite() {
                return invalid("noise level must be finite");
            }
        }
        Ok(())
    }
}

/// Independent stream for one component.
fn component_rng(seed: u64, key: &str, occurrence: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(key.as_bytes());
    h.update((occurrence as u64).to_le_bytes());
    let d = h.finalize();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from_le_bytes(d[..8].try_into().expect("8 bytes")));
    rng
}

fn white(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit_std(mut x: Vec<f64>) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    for v in &mut x {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
    x
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Instantaneous phase of a band: band-limited noise, or a tone with a
/// random start phase when the band is a single frequency.
fn so_phase(band: (f64, f64), n: usize, fs: f64, delay: f64, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    if band.0 == band.1 {
        let p0 = rng.random::<f64>() * 2.0 * PI;
        let phase = (0..n).map(|i| 2.0 * PI * band.0 * (i as f64 / fs - delay) + p0).collect();
        let wave = (0..n).map(|i| (2.0 * PI * band.0 * i as f64 / fs + p0).cos() * 2f64.sqrt()).collect();
        return (wave, phase);
    }
    let so = unit_std(fft::bandpass(&white(n, rng), fs, band.0, band.1));
    let phase = fft::analytic(&so, fs, delay).iter().map(|v| v.arg()).collect();
    (so, phase)
}

fn cos_at(f: f64, t: f64, p: f64) -> f64 {
    (2.0 * PI * f * t + p).cos()
}

fn render_component(c: &ComponentSpec, n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let t = |i: usize| i as f64 / fs;
    Ok(match c {
        ComponentSpec::SineAmPac { theta, gamma, amplitude } => (0..n)
            .map(|i| {
                let s = cos_at(*theta, t(i), 0.0);
                amplitude * (s + (1.0 - s) * cos_at(*gamma, t(i), 0.0))
            })
            .collect(),
        ComponentSpec::FmPair { theta, gamma, amplitude } => (0..n)
            .map(|i| {
                let ti = t(i);
                amplitude
                    * (cos_at(*theta, ti, 0.0) + cos_at(*gamma, ti, 0.0) + 0.5 * cos_at(gamma - theta, ti, 0.0)
                        - 0.5 * cos_at(gamma + theta, ti, 0.0))
            })
            .collect(),
        ComponentSpec::NestedNoise { so_band, fo_band, delay, harmonic, so_amplitude, fo_amplitude } => {
            let (so, phase) = so_phase(*so_band, n, fs, *delay, rng);
            let fo = unit_std(fft::bandpass(&white(n, rng), fs, fo_band.0, fo_band.1));
            let k = *harmonic as f64;
            (0..n)
                .map(|i| so_amplitude * so[i] + fo_amplitude * fo[i] * (1.0 + (k * phase[i]).cos()) / 2.0)
                .collect()
        }
        ComponentSpec::TransientTrain { kappa, so_band, amplitude } => {
            let (_, phase) = so_phase(*so_band, n, fs, 0.0, rng);
            let raw: Vec<f64> = phase.iter().map(|p| kappa * p.cos()).collect();
            let top = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            raw.iter().map(|v| amplitude * (v - top).exp()).collect()
        }
        ComponentSpec::PointProcessFeature { process, feature, phase_policy } => {
            render_point_process(process, feature, phase_policy, n, fs, rng)?
        }
        ComponentSpec::QpcTriple { f1, f2, phase, amplitude } => {
            let p1 = rng.random::<f64>() * 2.0 * PI;
            let p2 = rng.random::<f64>() * 2.0 * PI;
            let seg_len = match phase {
                TriplePhase::Locked => usize::MAX,
                TriplePhase::RandomPerSegment { segment } => ((segment * fs).round() as usize).max(1),
            };
            let mut p3 = p1 + p2;
            (0..n)
                .map(|i| {
                    if seg_len != usize::MAX && i % seg_len == 0 {
                        p3 = rng.random::<f64>() * 2.0 * PI;
                    }
                    let ti = t(i);
                    amplitude * (cos_at(*f1, ti, p1) + cos_at(*f2, ti, p2) + cos_at(f1 + f2, ti, p3))
                })
                .collect()
        }
    })
}

fn event_times(process: &PointProcessSpec, duration: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    match process {
        PointProcessSpec::Poisson { rate } => {
            let exp = Exp::new(*rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut t = exp.sample(rng);
            while t < duration {
                out.push(t);
                t += exp.sample(rng);
            }
        }
        PointProcessSpec::Periodic { period } => {
            let mut k = 0.0;
            while k * period < duration {
                out.push(k * period);
                k += 1.0;
            }
        }
        PointProcessSpec::PeriodicJittered { period, jitter_sd } => {
            let jitter = Normal::new(0.0, *jitter_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut k = 0.0;
            while k * period < duration {
                let t = k * period + jitter.sample(rng);
                if (0.0..duration).contains(&t) {
                    out.push(t);
                }
                k += 1.0;
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyEventSet);
    }
    Ok(out)
}

fn mean_interval(process: &PointProcessSpec) -> f64 {
    match process {
        PointProcessSpec::Poisson { rate } => 1.0 / rate,
        PointProcessSpec::Periodic { period } | PointProcessSpec::PeriodicJittered { period, .. } => *period,
    }
}

/// Half-extent of a Gabor part around its event, seconds.
fn reach(g: &Gabor) -> f64 {
    g.delay.abs() + 5.0 * g.width
}

fn render_point_process(
    process: &PointProcessSpec,
    feature: &FeatureSpec,
    policy: &PhasePolicy,
    n: usize,
    fs: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let duration = n as f64 / fs;
    let events = event_times(process, duration, rng)?;
    let extent = feature.so.iter().chain(&feature.fo).map(reach).fold(0.0, f64::max);
    if 2.0 * extent > mean_interval(process) {
        log::warn!(
            "feature spans {:.3} s, longer than the mean inter-event interval {:.3} s",
            2.0 * extent,
            mean_interval(process)
        );
    }
    let jitter = match policy {
        PhasePolicy::Jittered { sd } => Some(Normal::new(0.0, *sd).map_err(|e| Error::InvalidParameter(e.to_string()))?),
        _ => None,
    };
    let mut x = vec![0.0; n];
    let mut add = |g: &Gabor, event: f64, phase: f64| {
        let centre = event + g.delay;
        let lo = (((centre - 5.0 * g.width) * fs).floor().max(0.0)) as usize;
        let hi = ((((centre + 5.0 * g.width) * fs).ceil()) as usize).min(n.saturating_sub(1));
        for (i, slot) in x.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let t = i as f64 / fs;
            let u = (t - centre) / g.width;
            *slot += g.amplitude * (-0.5 * u * u).exp() * (2.0 * PI * g.freq * (t - event) + phase).cos();
        }
    };
    for &e in &events {
        let fo_phase = match policy {
            PhasePolicy::Locked => 0.0,
            PhasePolicy::RandomPerEvent => rng.random::<f64>() * 2.0 * PI,
            PhasePolicy::Jittered { .. } => jitter.as_ref().expect("set above").sample(rng),
        };
        if let Some(g) = &feature.so {
            add(g, e, 0.0);
        }
        if let Some(g) = &feature.fo {
            add(g, e, fo_phase);
        }
    }
    Ok(x)
}

/// Renders a recipe.
pub fn gen(recipe: &SimRecipe) -> Result<Signal> {
    recipe.validate()?;
    let n = recipe.n_samples();
    let fs = recipe.fs;
    let mut total = vec![0.0; n];
    let mut seen: Vec<String> = Vec::new();
    for c in &recipe.components {
        let key = serde_json::to_string(c)?;
        let occurrence = seen.iter().filter(|k| **k == key).count();
        let mut rng = component_rng(recipe.seed, &key, occurrence);
        let part = render_component(c, n, fs, &mut rng)?;
        for (t, p) in total.iter_mut().zip(&part) {
            *t += p;
        }
        seen.push(key);
    }
    if let Some(spec) = &recipe.noise {
        let mut rng = component_rng(recipe.seed, "noise", 0);
        let raw = match spec.kind {
            NoiseKind::White => unit_std(white(n, &mut rng)),
            NoiseKind::OneOverF => one_over_f(n, fs, spec.exponent, &mut rng),
        };
        let p_sig = power(&total);
        let target = if p_sig > 0.0 { p_sig } else { 1.0 } * 10f64.powf(spec.level_db / 10.0);
        let scale = (target / power(&raw)).sqrt();
        for (t, r) in total.iter_mut().zip(&raw) {
            *t += scale * r;
        }
    }
    Signal::new(total, fs)
}

/// Places `feature` at the events of `process` as a standalone signal.
pub fn gen_point_process_signal(
    process: &PointProcessSpec,
    feature: &FeatureSpec,
    phase_policy: &PhasePolicy,
    duration: f64,
    fs: f64,
    seed: u64,
) -> Result<Signal> {
    gen(&SimRecipe {
        duration,
        fs,
        seed,
        components: vec![ComponentSpec::PointProcessFeature {
            process: process.clone(),
            feature: feature.clone(),
            phase_policy: phase_policy.clone(),
        }],
        noise: None,
    })
}

fn one_over_f(n: usize, fs: f64, exponent: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut spec = fft::real_spectrum(&white(n, rng));
    let first = fs / n as f64;
    for (k, v) in spec.iter_mut().enumerate() {
        let f = fft::bin_freq(k, n, fs).abs().max(first);
        *v *= f.powf(-exponent / 2.0);
    }
    fft::inverse(&mut spec);
    unit_std(spec.iter().map(|v: &Complex64| v.re).collect())
}

/// Gaussian noise with power spectrum ∝ 1/f^exponent, unit variance. The DC
/// bin takes the scale of the first non-DC bin.
pub fn gen_one_over_f(duration: f64, fs: f64, seed: u64, exponent: f64) -> Result<Signal> {
    let n = (duration * fs).round() as usize;
    if n < 2 {
        return invalid("duration·fs must be at least 2 samples");
    }
    let mut rng = component_rng(seed, "one_over_f", 0);
    Signal::new(one_over_f(n, fs, exponent, &mut rng), fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recipe(components: Vec<ComponentSpec>, noise: Option<NoiseSpec>) -> SimRecipe {
        SimRecipe { duration: 10.0, fs: 500.0, seed: 7, components, noise }
    }

    fn line_amplitudes(x: &[f64], fs: f64) -> Vec<(f64, f64)> {
        let n = x.len();
        let spec = fft::real_spectrum(x);
        (0..n / 2).map(|k| (k as f64 * fs / n as f64, 2.0 * spec[k].norm() / n as f64)).collect()
    }

    #[test]
    fn am_pac_has_four_lines() {
        let r = recipe(vec![ComponentSpec::SineAmPac { theta: 6.0, gamma: 60.0, amplitude: 1.0 }], None);
        let s = gen(&r).unwrap();
        let lines: Vec<(f64, f64)> = line_amplitudes(s.samples(), 500.0).into_iter().filter(|l| l.1 > 1e-6).collect();
        let freqs: Vec<f64> = lines.iter().map(|l| l.0).collect();
        assert_eq!(freqs, vec![6.0, 54.0, 60.0, 66.0]);
        let amps: Vec<f64> = lines.iter().map(|l| l.1).collect();
        for (a, e) in amps.iter().zip([1.0, 0.5, 1.0, 0.5]) {
            assert!((a - e).abs() < 1e-9, "{amps:?}");
        }
    }

    #[test]
    fn fm_envelope_range() {
        let fs = 1000.0;
        let n = 20000;
        let (theta, gamma) = (1.0, 10.0);
        // FO part only: subtract the SO line.
        let r = SimRecipe {
            duration: n as f64 / fs,
            fs,
            seed: 1,
            components: vec![ComponentSpec::FmPair { theta, gamma, amplitude: 1.0 }],
            noise: None,
        };
        let s = gen(&r).unwrap();
        let fo: Vec<f64> =
            s.samples().iter().enumerate().map(|(i, v)| v - cos_at(theta, i as f64 / fs, 0.0)).collect();
        let env: Vec<f64> = fft::analytic(&fo, fs, 0.0).iter().map(|v| v.norm()).collect();
        let lo = env.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = env.iter().cloned().fold(0.0, f64::max);
        assert!((lo - 1.0).abs() < 1e-6 && (hi - 2f64.sqrt()).abs() < 1e-6, "{lo} {hi}");
    }

    #[test]
    fn deterministic_and_order_independent() {
        let a = ComponentSpec::NestedNoise {
            so_band: (6.0, 10.0),
            fo_band: (30.0, 80.0),
            delay: 0.0,
            harmonic: 1,
            so_amplitude: 1.0,
            fo_amplitude: 1.0,
        };
        let b = ComponentSpec::QpcTriple { f1: 11.0, f2: 19.0, phase: TriplePhase::Locked, amplitude: 1.0 };
        let r1 = recipe(vec![a.clone(), b.clone()], Some(NoiseSpec { kind: NoiseKind::White, exponent: 1.0, level_db: 0.0 }));
        let r2 = recipe(vec![b, a], r1.noise.clone());
        let s1 = gen(&r1).unwrap();
        assert_eq!(s1.samples(), gen(&r1).unwrap().samples());
        let s2 = gen(&r2).unwrap();
        for (x, y) in s1.samples().iter().zip(s2.samples()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_level_is_calibrated() {
        for db in [-10.0, 0.0, 6.0] {
            let clean = recipe(vec![ComponentSpec::SineAmPac { theta: 6.0, gamma: 60.0, amplitude: 1.0 }], None);
            let noisy = SimRecipe {
                noise: Some(NoiseSpec { kind: NoiseKind::OneOverF, exponent: 1.0, level_db: db }),
                ..clean.clone()
            };
            let c = gen(&clean).unwrap();
            let x = gen(&noisy).unwrap();
            let nz: Vec<f64> = x.samples().iter().zip(c.samples()).map(|(a, b)| a - b).collect();
            let measured = 10.0 * (power(&nz) / power(c.samples())).log10();
            assert!((measured - db).abs() < 0.5, "{measured} vs {db}");
        }
    }

    #[test]
    fn transient_train_is_non_negative_with_unit_peak() {
        let r = recipe(vec![ComponentSpec::TransientTrain { kappa: 10.0, so_band: (6.0, 10.0), amplitude: 1.0 }], None);
        let s = gen(&r).unwrap();
        assert!(s.samples().iter().all(|&v| v >= 0.0));
        let top = s.samples().iter().cloned().fold(0.0, f64::max);
        assert!((top - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_event_set_is_an_error() {
        let feature = FeatureSpec { so: Some(Gabor { freq: 8.0, width: 0.02, amplitude: 1.0, delay: 0.0 }), fo: None };
        let r = gen_point_process_signal(&PointProcessSpec::Poisson { rate: 1e-9 }, &feature, &PhasePolicy::Locked, 1.0, 200.0, 3);
        assert!(matches!(r, Err(Error::EmptyEventSet)));
    }

    #[test]
    fn validation_rejects_bad_components() {
        let bad = recipe(vec![ComponentSpec::SineAmPac { theta: 60.0, gamma: 6.0, amplitude: 1.0 }], None);
        assert!(gen(&bad).is_err());
        let nyq = recipe(vec![ComponentSpec::QpcTriple { f1: 200.0, f2: 100.0, phase: TriplePhase::Locked, amplitude: 1.0 }], None);
        assert!(matches!(gen(&nyq), Err(Error::Nyquist(_))));
    }

    #[test]
    fn malformed_json_reports_path() {
        let text = r#"{"duration": 1, "fs": 100, "seed": 1, "components": [{"kind": "sine_am_pac", "theta": "six", "gamma": 60}]}"#;
        let err = SimRecipe::from_json(text).unwrap_err().to_string();
        assert!(err.contains("components[0]"), "{err}");
    }

    #[test]
    fn one_over_f_slope_and_white_reduction() {
        let fs = 200.0;
        let mut slopes = Vec::new();
        for seed in 0..20 {
            let s = gen_one_over_f(100.0, fs, seed, 1.0).unwrap();
            let spec = fft::real_spectrum(s.samples());
            let n = s.len();
            // one decade, 5 to 50 Hz
            let pts: Vec<(f64, f64)> = (1..n / 2)
                .map(|k| (k as f64 * fs / n as f64, spec[k].norm_sqr()))
                .filter(|(f, _)| (5.0..=50.0).contains(f))
                .map(|(f, p)| (f.log10(), p.log10()))
                .collect();
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
            slopes.push(sxy / sxx);
        }
        let mean = slopes.iter().sum::<f64>() / 20.0;
        assert!((mean + 1.0).abs() < 0.1, "slope {mean}");
        let s = gen_one_over_f(10.0, fs, 1, 1.0).unwrap();
        let var = power(s.samples());
        assert!((var - 1.0).abs() < 1e-9);
    }
}
