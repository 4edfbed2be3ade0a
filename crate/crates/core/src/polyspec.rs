//! Bispectral accumulation over demodulated frames.
//!
//! For frequency-ordered legs the direct estimate is
//!
//! ```text
//! B[j,k] = Σ_m S1[j,m] · S2[k,m] · conj(S3[l,m]),   c3[l] ≈ c1[j] + c2[k]
//! A[j,k] = Σ_m |S1 S2 S3*|
//! ```
//!
//! `B / A` is a weighted mean phase vector (magnitude-sum bicoherence) and
//! `B / (√Σ|S1S2|² √Σ|S3|²)` the rms form. The expected null level of the
//! magnitude-sum form is
//!
//! ```text
//! ε = √(K · Σ|S1S2S3*|²) / Σ|S1S2S3*|
//! ```
//!
//! where `K = Σ_Δ ρ1(Δ)ρ2(Δ)ρ3(Δ)` counts how many neighbouring frames share
//! each frame's data (ρ is the normalized window autocorrelation at a lag of
//! Δ hops). With non-overlapping frames `K = 1`.

use std::collections::HashMap;
use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::demod::{carrier, default_hop, demodulate, BandSpec, Decomposition, Signal, WindowKind};
use crate::error::{invalid, Error, Result};
use crate::fft;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Bbb,
    Nnb,
    Bbn,
    Nbb,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bbb" => Ok(Variant::Bbb),
            "nnb" => Ok(Variant::Nnb),
            "bbn" => Ok(Variant::Bbn),
            "nbb" => Ok(Variant::Nbb),
            other => invalid(format!("unknown estimator kind {other:?}")),
        }
    }
}

/// Narrow/broad window assignment over the three legs (ω1, ω2, ω1+ω2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EstimatorKind {
    pub variant: Variant,
    pub bw_narrow: f64,
    pub bw_broad: f64,
}

impl EstimatorKind {
    pub fn new(variant: Variant, bw_narrow: f64, bw_broad: f64) -> Result<Self> {
        if !(bw_broad.is_finite() && bw_broad > 0.0) {
            return invalid(format!("broad bandwidth must be positive, got {bw_broad}"));
        }
        if variant != Variant::Bbb && !(bw_narrow > 0.0 && bw_narrow < bw_broad) {
            return invalid(format!(
                "{variant:?} needs 0 < narrow bandwidth < broad bandwidth, got {bw_narrow} and {bw_broad}"
            ));
        }
        Ok(EstimatorKind { variant, bw_narrow, bw_broad })
    }

    pub fn bbb(bandwidth: f64) -> Self {
        EstimatorKind { variant: Variant::Bbb, bw_narrow: bandwidth, bw_broad: bandwidth }
    }

    pub fn leg_bandwidths(&self) -> [f64; 3] {
        let (n, b) = (self.bw_narrow, self.bw_broad);
        match self.variant {
            Variant::Bbb => [b, b, b],
            Variant::Nnb => [n, n, b],
            Variant::Bbn => [b, b, n],
            Variant::Nbb => [n, b, b],
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.variant == Variant::Bbb
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Symmetric estimate; cells with ω1 > ω2 are exchange copies.
    PrincipalTriangle,
    FullQuadrant,
    FullPlane,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Rms,
    MagnitudeSum,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rms" => Ok(Normalization::Rms),
            "magsum" | "magnitude_sum" => Ok(Normalization::MagnitudeSum),
            other => invalid(format!("unknown normalization {other:?}")),
        }
    }
}

/// Raw accumulators of a coupling estimate over a two-axis grid.
#[derive(Clone, Debug)]
pub struct BispecGrid {
    pub b: Array2<Complex64>,
    pub a: Array2<f64>,
    pub eps: Array2<f64>,
    /// `√Σ|left|² · √Σ|right|²`, the rms normalizer.
    pub rms_den: Array2<f64>,
    /// False where no leg-3 band matched or nothing accumulated.
    pub valid: Array2<bool>,
    /// Index into `bands3` of the matched third leg.
    pub leg3: Array2<Option<usize>>,
    pub n_frames: usize,
    pub bands1: Vec<BandSpec>,
    pub bands2: Vec<BandSpec>,
    pub bands3: Vec<BandSpec>,
    pub domain: Domain,
    pub kind: EstimatorKind,
    /// Power applied to the first leg (1 for the bispectrum).
    pub power: u32,
    pub fs: f64,
    pub hop: usize,
    /// One representative band per leg, used to rebuild the windows.
    pub leg_templates: [BandSpec; 3],
}

impl BispecGrid {
    pub fn shape(&self) -> (usize, usize) {
        self.b.dim()
    }

    pub fn axis1(&self) -> Vec<f64> {
        self.bands1.iter().map(|b| b.center).collect()
    }

    pub fn axis2(&self) -> Vec<f64> {
        self.bands2.iter().map(|b| b.center).collect()
    }
}

/// Normalized coupling values.
#[derive(Clone, Debug)]
pub struct Bicoherence {
    pub beta: Array2<Complex64>,
    /// `|beta|`, or the signed corrected magnitude after [`bias_correct`].
    pub magnitude: Array2<f64>,
    pub valid: Array2<bool>,
    pub normalization: Normalization,
    pub bias_corrected: bool,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub domain: Domain,
    pub kind: EstimatorKind,
    pub power: u32,
    pub fs: f64,
    pub hop: usize,
    pub leg_templates: [BandSpec; 3],
}

/// Read access shared by raw grids and normalized planes.
pub trait CouplingPlane {
    fn values(&self) -> ArrayView2<'_, Complex64>;
    fn valid_mask(&self) -> &Array2<bool>;
    fn freq1(&self) -> Vec<f64>;
    fn freq2(&self) -> Vec<f64>;
    fn leg_windows(&self) -> &[BandSpec; 3];
    fn sample_rate(&self) -> f64;
    fn frame_hop(&self) -> usize;
}

impl CouplingPlane for BispecGrid {
    fn values(&self) -> ArrayView2<'_, Complex64> {
        self.b.view()
    }
    fn valid_mask(&self) -> &Array2<bool> {
        &self.valid
    }
    fn freq1(&self) -> Vec<f64> {
        self.axis1()
    }
    fn freq2(&self) -> Vec<f64> {
        self.axis2()
    }
    fn leg_windows(&self) -> &[BandSpec; 3] {
        &self.leg_templates
    }
    fn sample_rate(&self) -> f64 {
        self.fs
    }
    fn frame_hop(&self) -> usize {
        self.hop
    }
}

impl CouplingPlane for Bicoherence {
    fn values(&self) -> ArrayView2<'_, Complex64> {
        self.beta.view()
    }
    fn valid_mask(&self) -> &Array2<bool> {
        &self.valid
    }
    fn freq1(&self) -> Vec<f64> {
        self.axis1.clone()
    }
    fn freq2(&self) -> Vec<f64> {
        self.axis2.clone()
    }
    fn leg_windows(&self) -> &[BandSpec; 3] {
        &self.leg_templates
    }
    fn sample_rate(&self) -> f64 {
        self.fs
    }
    fn frame_hop(&self) -> usize {
        self.hop
    }
}

// ---------------------------------------------------------------------------
// Per-cell accumulation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CellSums {
    pub sum: Complex64,
    pub abs: f64,
    pub abs_sq: f64,
    pub left_sq: f64,
    pub right_sq: f64,
}

impl CellSums {
    /// Sums of `left[m] · conj(right[m])` over `n` frames.
    pub(crate) fn accumulate(n: usize, left: impl Fn(usize) -> Complex64, right: impl Fn(usize) -> Complex64) -> Self {
        let mut s = CellSums::default();
        for m in 0..n {
            let l = left(m);
            let r = right(m);
            let p = l * r.conj();
            let p2 = p.norm_sqr();
            s.sum += p;
            s.abs += p2.sqrt();
            s.abs_sq += p2;
            s.left_sq += l.norm_sqr();
            s.right_sq += r.norm_sqr();
        }
        s
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.abs == 0.0
    }

    /// Null level of `|sum| / abs`, given the summed frame-correlation profile.
    pub(crate) fn bias(&self, k_eff: f64) -> f64 {
        if self.abs > 0.0 {
            ((k_eff * self.abs_sq).sqrt() / self.abs).min(1.0)
        } else {
            1.0
        }
    }
}

/// Normalized window autocorrelation at lags `0, step, 2·step, …`.
pub(crate) fn lag_profile(window: &[f64], step: usize) -> Vec<f64> {
    let e: f64 = window.iter().map(|v| v * v).sum();
    let mut out = Vec::new();
    let mut lag = 0;
    while lag < window.len() {
        let r: f64 = window.iter().zip(&window[lag..]).map(|(a, b)| a * b).sum();
        out.push(r / e);
        lag += step.max(1);
    }
    out
}

/// `1 + 2 Σ_{Δ≥1} R(Δ)(1 − Δ/M)` for the elementwise product R of the profiles.
pub(crate) fn effective_overlap(profiles: &[(&[f64], u32)], n_frames: usize) -> f64 {
    if n_frames <= 1 {
        return 1.0;
    }
    let max_lag = profiles.iter().map(|(p, _)| p.len()).min().unwrap_or(1).min(n_frames);
    let mut k = 1.0;
    for d in 1..max_lag {
        let r: f64 = profiles.iter().map(|(p, pow)| p[d].powi(*pow as i32)).product();
        k += 2.0 * r * (1.0 - d as f64 / n_frames as f64);
    }
    k
}

/// Common frame grid of several decompositions.
#[derive(Clone, Debug)]
pub(crate) struct FrameAlign {
    pub offsets: Vec<usize>,
    pub count: usize,
    pub first_center: usize,
    pub hop: usize,
    pub fs: f64,
}

pub(crate) fn align(decs: &[&Decomposition]) -> Result<FrameAlign> {
    let hop = decs[0].hop();
    let fs = decs[0].source_fs();
    for d in decs {
        if d.hop() != hop || d.source_fs() != fs {
            return Err(Error::FrameMismatch(format!(
                "hop {} at {} Hz vs hop {} at {} Hz",
                d.hop(),
                d.source_fs(),
                hop,
                fs
            )));
        }
        if d.first_center() % hop != decs[0].first_center() % hop {
            return Err(Error::FrameMismatch("frame centres are not on a common lattice".into()));
        }
    }
    let start = decs.iter().map(|d| d.first_center()).max().unwrap_or(0);
    let end = decs.iter().map(|d| d.center_sample(d.n_frames().saturating_sub(1))).min().unwrap_or(0);
    if decs.iter().any(|d| d.n_frames() == 0) || end < start {
        return Err(Error::FrameMismatch("no frames in common".into()));
    }
    let count = (end - start) / hop + 1;
    let offsets = decs.iter().map(|d| (start - d.first_center()) / hop).collect();
    Ok(FrameAlign { offsets, count, first_center: start, hop, fs })
}

/// Nearest band to `target`; ties go to the lower centre. `None` when the
/// nearest centre misses by half its bandwidth or more.
pub fn match_leg3(target: f64, bank: &[BandSpec]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in bank.iter().enumerate() {
        let d = (b.center - target).abs();
        best = match best {
            None => Some((i, d)),
            Some((bi, bd)) => {
                if d < bd || (d == bd && b.center < bank[bi].center) {
                    Some((i, d))
                } else {
                    Some((bi, bd))
                }
            }
        };
    }
    best.filter(|&(i, d)| d < bank[i].bandwidth / 2.0).map(|(i, _)| i)
}

fn in_range(c: f64, (lo, hi): (f64, f64)) -> bool {
    let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
    c >= lo - tol && c <= hi + tol
}

/// Mismatches below this fraction of a bandwidth count as exact.
const EXACT_MATCH: f64 = 1e-9;

struct TripleCell {
    sums: CellSums,
    leg3: Option<usize>,
}

/// `Σ_m S1^power · S2 · conj(S3)` with leg 3 re-referenced to the exact
/// target frequency when its band centre is off by δ.
#[allow(clippy::too_many_arguments)]
fn triple_cell(
    s1: &[Complex64],
    s2: &[Complex64],
    s3: &[Complex64],
    power: u32,
    delta: f64,
    bw3: f64,
    al: &FrameAlign,
) -> CellSums {
    let lift = |m: usize| {
        let v = s1[m];
        let mut acc = v;
        for _ in 1..power {
            acc *= v;
        }
        acc * s2[m]
    };
    if delta.abs() <= EXACT_MATCH * bw3 {
        CellSums::accumulate(al.count, lift, |m| s3[m])
    } else {
        CellSums::accumulate(al.count, lift, |m| {
            let t = al.first_center + m * al.hop;
            s3[m] * carrier(delta, t, al.fs)
        })
    }
}

pub(crate) struct LegSlices<'a> {
    pub dec: &'a Decomposition,
    pub offset: usize,
}

impl<'a> LegSlices<'a> {
    pub fn row(&self, band: usize) -> &'a [Complex64] {
        &self.dec.row(band)[self.offset..]
    }
}

fn profiles_for(bands: &[BandSpec], fs: f64, hop: usize) -> Result<Vec<Vec<f64>>> {
    let mut cache: HashMap<crate::demod::WindowKey, usize> = HashMap::new();
    let mut uniq: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::with_capacity(bands.len());
    for b in bands {
        let idx = match cache.get(&b.window_key()) {
            Some(&i) => i,
            None => {
                uniq.push(lag_profile(&b.window(fs)?, hop));
                cache.insert(b.window_key(), uniq.len() - 1);
                uniq.len() - 1
            }
        };
        out.push(uniq[idx].clone());
    }
    Ok(out)
}

fn check_oversampling(al: &FrameAlign, f_top: f64) -> Result<()> {
    let frame_rate = al.fs / al.hop as f64;
    let needed = (crate::demod::OVERSAMPLE_FACTOR * f_top).min(al.fs);
    if frame_rate + 1e-9 < needed {
        return invalid(format!(
            "frame rate {frame_rate} Hz is below {needed} Hz needed for bands up to {f_top} Hz; use a smaller hop"
        ));
    }
    Ok(())
}

/// Which decompositions feed the three legs.
#[derive(Clone, Copy)]
pub enum Legs<'a> {
    Single(&'a Decomposition),
    Three(&'a Decomposition, &'a Decomposition, &'a Decomposition),
}

impl<'a> Legs<'a> {
    fn parts(&self) -> [&'a Decomposition; 3] {
        match *self {
            Legs::Single(d) => [d, d, d],
            Legs::Three(a, b, c) => [a, b, c],
        }
    }
}

/// Direct bispectral estimate over the bands of leg 1 within `range1` and of
/// leg 2 within `range2`.
pub fn estimate_bispectrum(legs: Legs<'_>, kind: &EstimatorKind, range1: (f64, f64), range2: (f64, f64)) -> Result<BispecGrid> {
    if let Legs::Single(_) = legs {
        if !kind.is_symmetric() {
            return invalid(format!("{:?} needs separate narrow and broad decompositions", kind.variant));
        }
    }
    let symmetric = kind.is_symmetric() && matches!(legs, Legs::Single(_));
    estimate_power(legs.parts(), kind, range1, range2, 1, symmetric)
}

/// `Σ_m S1^k · S2 · conj(S3)` with leg 3 matched to `k·ω1 + ω2`.
pub fn kmode_coupling(decomp: &Decomposition, k: u32, range1: (f64, f64), range2: (f64, f64)) -> Result<BispecGrid> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    let bw = decomp.bands().first().map(|b| b.bandwidth).unwrap_or(1.0);
    let kind = EstimatorKind::bbb(bw);
    estimate_power([decomp, decomp, decomp], &kind, range1, range2, k, k == 1)
}

fn estimate_power(
    parts: [&Decomposition; 3],
    kind: &EstimatorKind,
    range1: (f64, f64),
    range2: (f64, f64),
    power: u32,
    symmetric: bool,
) -> Result<BispecGrid> {
    let [d1, d2, d3] = parts;
    let al = align(&parts)?;
    let axis1: Vec<usize> = (0..d1.n_bands()).filter(|&i| in_range(d1.bands()[i].center, range1)).collect();
    let axis2: Vec<usize> = (0..d2.n_bands()).filter(|&i| in_range(d2.bands()[i].center, range2)).collect();
    if axis1.is_empty() || axis2.is_empty() {
        return invalid(format!("requested ranges {range1:?} × {range2:?} select no bands"));
    }
    let (n1, n2) = (axis1.len(), axis2.len());
    let bands1: Vec<BandSpec> = axis1.iter().map(|&i| d1.bands()[i].clone()).collect();
    let bands2: Vec<BandSpec> = axis2.iter().map(|&i| d2.bands()[i].clone()).collect();
    let bank3 = d3.bands();

    // Cell plan: matched leg 3, and for symmetric grids the mirror source.
    let pos1: HashMap<usize, usize> = axis1.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let pos2: HashMap<usize, usize> = axis2.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let mut plan = Vec::with_capacity(n1 * n2);
    let mut f_top: f64 = 0.0;
    for (p1, &j) in axis1.iter().enumerate() {
        for (p2, &k) in axis2.iter().enumerate() {
            let c1 = d1.bands()[j].center;
            let c2 = d2.bands()[k].center;
            let leg3 = match_leg3(power as f64 * c1 + c2, bank3);
            if let Some(l) = leg3 {
                f_top = f_top.max(bank3[l].top_edge()).max(bands1[p1].top_edge()).max(bands2[p2].top_edge());
            }
            let mirror = if symmetric && c1 > c2 {
                match (pos1.get(&k), pos2.get(&j)) {
                    (Some(&q1), Some(&q2)) => Some((q1, q2)),
                    _ => None,
                }
            } else {
                None
            };
            plan.push((p1, p2, j, k, leg3, mirror));
        }
    }
    check_oversampling(&al, f_top)?;

    let l1 = LegSlices { dec: d1, offset: al.offsets[0] };
    let l2 = LegSlices { dec: d2, offset: al.offsets[1] };
    let l3 = LegSlices { dec: d3, offset: al.offsets[2] };
    let prof1 = profiles_for(d1.bands(), al.fs, al.hop)?;
    let prof2 = profiles_for(d2.bands(), al.fs, al.hop)?;
    let prof3 = profiles_for(bank3, al.fs, al.hop)?;

    let computed: Vec<Option<(TripleCell, f64)>> = plan
        .par_iter()
        .map(|&(_, _, j, k, leg3, mirror)| {
            if mirror.is_some() {
                return None;
            }
            let cell = match leg3 {
                None => TripleCell { sums: CellSums::default(), leg3: None },
                Some(l) => {
                    let c1 = d1.bands()[j].center;
                    let c2 = d2.bands()[k].center;
                    let delta = power as f64 * c1 + c2 - bank3[l].center;
                    let sums = triple_cell(l1.row(j), l2.row(k), l3.row(l), power, delta, bank3[l].bandwidth, &al);
                    TripleCell { sums, leg3: Some(l) }
                }
            };
            let k_eff = match leg3 {
                Some(l) => effective_overlap(&[(&prof1[j], power), (&prof2[k], 1), (&prof3[l], 1)], al.count),
                None => 1.0,
            };
            Some((cell, k_eff))
        })
        .collect();

    let mut grid = empty_grid(n1, n2, al.count, bands1, bands2, bank3.to_vec(), *kind, power, &al, symmetric);
    for (idx, entry) in computed.iter().enumerate() {
        if let Some((cell, k_eff)) = entry {
            let (p1, p2, ..) = plan[idx];
            write_cell(&mut grid, p1, p2, &cell.sums, cell.leg3, *k_eff);
        }
    }
    for &(p1, p2, _, _, _, mirror) in &plan {
        if let Some((q1, q2)) = mirror {
            grid.b[[p1, p2]] = grid.b[[q1, q2]];
            grid.a[[p1, p2]] = grid.a[[q1, q2]];
            grid.eps[[p1, p2]] = grid.eps[[q1, q2]];
            grid.rms_den[[p1, p2]] = grid.rms_den[[q1, q2]];
            grid.valid[[p1, p2]] = grid.valid[[q1, q2]];
            grid.leg3[[p1, p2]] = grid.leg3[[q1, q2]];
        }
    }
    Ok(grid)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn empty_grid(
    n1: usize,
    n2: usize,
    n_frames: usize,
    bands1: Vec<BandSpec>,
    bands2: Vec<BandSpec>,
    bands3: Vec<BandSpec>,
    kind: EstimatorKind,
    power: u32,
    al: &FrameAlign,
    symmetric: bool,
) -> BispecGrid {
    let t3 = bands3.first().cloned().unwrap_or_else(|| bands2[0].clone());
    let leg_templates = [bands1[0].clone(), bands2[0].clone(), t3];
    BispecGrid {
        b: Array2::zeros((n1, n2)),
        a: Array2::zeros((n1, n2)),
        eps: Array2::ones((n1, n2)),
        rms_den: Array2::zeros((n1, n2)),
        valid: Array2::from_elem((n1, n2), false),
        leg3: Array2::from_elem((n1, n2), None),
        n_frames,
        bands1,
        bands2,
        bands3,
        domain: if symmetric { Domain::PrincipalTriangle } else { Domain::FullQuadrant },
        kind,
        power,
        fs: al.fs,
        hop: al.hop,
        leg_templates,
    }
}

pub(crate) fn write_cell(grid: &mut BispecGrid, p1: usize, p2: usize, s: &CellSums, leg3: Option<usize>, k_eff: f64) {
    grid.b[[p1, p2]] = s.sum;
    grid.a[[p1, p2]] = s.abs;
    grid.eps[[p1, p2]] = s.bias(k_eff);
    grid.rms_den[[p1, p2]] = s.left_sq.sqrt() * s.right_sq.sqrt();
    grid.valid[[p1, p2]] = leg3.is_some() && !s.is_empty();
    grid.leg3[[p1, p2]] = leg3;
}

/// Cross-bispectrum `E[X_i(ω1) X_j(ω2 − ω1/2) X_j*(ω2 + ω1/2)]`.
///
/// Axis 1 takes the bands of `decomp_i` within `range1`; axis 2 the band
/// centres of `decomp_j` within `range2`. Legs 2 and 3 are matched in the
/// bank of `decomp_j` at `ω2 ∓ ω1/2`, so that bank needs a spacing of half
/// the axis-1 spacing for exact alignment.
pub fn cross_bispectrum(
    decomp_i: &Decomposition,
    decomp_j: &Decomposition,
    kind: &EstimatorKind,
    range1: (f64, f64),
    range2: (f64, f64),
) -> Result<BispecGrid> {
    let al = align(&[decomp_i, decomp_j])?;
    let bank1 = decomp_i.bands();
    let bank2 = decomp_j.bands();
    let axis1: Vec<usize> = (0..bank1.len()).filter(|&i| in_range(bank1[i].center, range1)).collect();
    let axis2: Vec<usize> = (0..bank2.len()).filter(|&i| in_range(bank2[i].center, range2)).collect();
    if axis1.is_empty() || axis2.is_empty() {
        return invalid(format!("requested ranges {range1:?} × {range2:?} select no bands"));
    }
    let li = LegSlices { dec: decomp_i, offset: al.offsets[0] };
    let lj = LegSlices { dec: decomp_j, offset: al.offsets[1] };
    let prof1 = profiles_for(bank1, al.fs, al.hop)?;
    let prof2 = profiles_for(bank2, al.fs, al.hop)?;

    let mut f_top: f64 = 0.0;
    let mut plan = Vec::new();
    for (p1, &a) in axis1.iter().enumerate() {
        for (p2, &b) in axis2.iter().enumerate() {
            let w1 = bank1[a].center;
            let w2 = bank2[b].center;
            let lo = match_leg3(w2 - w1 / 2.0, bank2);
            let hi = match_leg3(w2 + w1 / 2.0, bank2);
            if let (Some(l), Some(h)) = (lo, hi) {
                f_top = f_top.max(bank2[l].top_edge()).max(bank2[h].top_edge()).max(bank1[a].top_edge());
            }
            plan.push((p1, p2, a, lo, hi));
        }
    }
    check_oversampling(&al, f_top)?;

    let cells: Vec<(CellSums, Option<usize>, f64)> = plan
        .par_iter()
        .map(|&(_, _, a, lo, hi)| match (lo, hi) {
            (Some(l), Some(h)) => {
                let delta = bank1[a].center + bank2[l].center - bank2[h].center;
                let sums = triple_cell(li.row(a), lj.row(l), lj.row(h), 1, delta, bank2[h].bandwidth, &al);
                let k_eff = effective_overlap(&[(&prof1[a], 1), (&prof2[l], 1), (&prof2[h], 1)], al.count);
                (sums, Some(h), k_eff)
            }
            _ => (CellSums::default(), None, 1.0),
        })
        .collect();

    let bands1: Vec<BandSpec> = axis1.iter().map(|&i| bank1[i].clone()).collect();
    let bands2: Vec<BandSpec> = axis2.iter().map(|&i| bank2[i].clone()).collect();
    let mut grid = empty_grid(axis1.len(), axis2.len(), al.count, bands1, bands2, bank2.to_vec(), *kind, 1, &al, false);
    for (&(p1, p2, ..), (sums, leg3, k_eff)) in plan.iter().zip(cells.iter()) {
        write_cell(&mut grid, p1, p2, sums, *leg3, *k_eff);
    }
    Ok(grid)
}

// ---------------------------------------------------------------------------
// Normalization and bias correction
// ---------------------------------------------------------------------------

pub fn normalize(grid: &BispecGrid, normalization: Normalization) -> Result<Bicoherence> {
    if grid.n_frames == 0 {
        return invalid("grid has no frames");
    }
    let (n1, n2) = grid.shape();
    let mut beta = Array2::zeros((n1, n2));
    let mut valid = grid.valid.clone();
    for ((p1, p2), v) in valid.indexed_iter_mut() {
        let den = match normalization {
            Normalization::MagnitudeSum => grid.a[[p1, p2]],
            Normalization::Rms => grid.rms_den[[p1, p2]],
        };
        if *v && den > 0.0 {
            beta[[p1, p2]] = grid.b[[p1, p2]] / den;
        } else {
            *v = false;
        }
    }
    let magnitude = beta.mapv(|b: Complex64| b.norm());
    Ok(Bicoherence {
        beta,
        magnitude,
        valid,
        normalization,
        bias_corrected: false,
        axis1: grid.axis1(),
        axis2: grid.axis2(),
        domain: grid.domain,
        kind: grid.kind,
        power: grid.power,
        fs: grid.fs,
        hop: grid.hop,
        leg_templates: grid.leg_templates.clone(),
    })
}

/// `(|β| − ε)/(1 − ε)` with the phase of β re-attached. The corrected
/// magnitude keeps its sign in [`Bicoherence::magnitude`].
pub fn bias_correct(bic: &Bicoherence, grid: &BispecGrid) -> Result<Bicoherence> {
    if bic.normalization != Normalization::MagnitudeSum {
        return invalid("bias correction is defined for magnitude-sum normalization only");
    }
    if bic.bias_corrected {
        return invalid("input is already bias corrected");
    }
    if bic.beta.dim() != grid.eps.dim() {
        return invalid("bicoherence and grid shapes differ");
    }
    let mut out = bic.clone();
    for ((p1, p2), v) in out.valid.indexed_iter_mut() {
        let eps = grid.eps[[p1, p2]];
        if !*v || eps >= 1.0 {
            *v = false;
            out.beta[[p1, p2]] = ZERO;
            out.magnitude[[p1, p2]] = 0.0;
            continue;
        }
        let b = bic.beta[[p1, p2]];
        let mag = b.norm();
        let corrected = (mag - eps) / (1.0 - eps);
        let phase = if mag > 0.0 { b / mag } else { Complex64::new(1.0, 0.0) };
        out.beta[[p1, p2]] = phase * corrected;
        out.magnitude[[p1, p2]] = corrected;
    }
    out.bias_corrected = true;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Symmetry expansion
// ---------------------------------------------------------------------------

/// For every cell of the full plane, the principal-triangle source cell and
/// whether the value must be conjugated.
type SourceMap = Array2<Option<(usize, usize, bool)>>;

fn symmetry_map(axis1: &[f64], axis2: &[f64], domain: Domain, symmetric: bool) -> Result<(Vec<f64>, SourceMap)> {
    if !symmetric || domain != Domain::PrincipalTriangle {
        return Err(Error::Symmetry(
            "expansion needs a symmetric (BBB) estimate on the principal triangle; asymmetric kernels break the symmetry".into(),
        ));
    }
    if axis1 != axis2 || axis1.len() < 2 {
        return Err(Error::Symmetry("expansion needs identical axes".into()));
    }
    let step = axis1[1] - axis1[0];
    if axis1[0].abs() > 1e-9 * step || axis1.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step) {
        return Err(Error::Symmetry("expansion needs a uniform axis starting at 0 Hz".into()));
    }
    let n = axis1.len() as i64;
    let full: Vec<f64> = (-(n - 1)..n).map(|i| i as f64 * step).collect();
    let size = full.len();
    let mut map = Array2::from_elem((size, size), None);
    for (r, c) in (0..size).flat_map(|r| (0..size).map(move |c| (r, c))) {
        let x = r as i64 - (n - 1);
        let y = c as i64 - (n - 1);
        let z = -x - y;
        let perms = [(x, y), (y, x), (x, z), (z, x), (y, z), (z, y)];
        let mut found = None;
        'search: for conj in [false, true] {
            for &(p, q) in &perms {
                let (p, q) = if conj { (-p, -q) } else { (p, q) };
                if p >= 0 && q >= p && q < n {
                    found = Some((p as usize, q as usize, conj));
                    break 'search;
                }
            }
        }
        map[[r, c]] = found;
    }
    Ok((full, map))
}

/// Populates the full (ω1, ω2) plane from a principal-triangle estimate via
/// the twelve-fold symmetry of the bispectrum of a real signal.
pub fn expand_symmetry(grid: &BispecGrid) -> Result<BispecGrid> {
    let (full, map) = symmetry_map(&grid.axis1(), &grid.axis2(), grid.domain, grid.kind.is_symmetric())?;
    let size = full.len();
    let template = &grid.bands1[0];
    let bands: Vec<BandSpec> = full
        .iter()
        .enumerate()
        .map(|(i, &c)| BandSpec { center: c, index: i, ..template.clone() })
        .collect();
    let mut out = BispecGrid {
        b: Array2::zeros((size, size)),
        a: Array2::zeros((size, size)),
        eps: Array2::ones((size, size)),
        rms_den: Array2::zeros((size, size)),
        valid: Array2::from_elem((size, size), false),
        leg3: Array2::from_elem((size, size), None),
        bands1: bands.clone(),
        bands2: bands,
        domain: Domain::FullPlane,
        ..grid.clone()
    };
    for ((r, c), src) in map.indexed_iter() {
        if let Some((p, q, conj)) = *src {
            let v = grid.b[[p, q]];
            out.b[[r, c]] = if conj { v.conj() } else { v };
            out.a[[r, c]] = grid.a[[p, q]];
            out.eps[[r, c]] = grid.eps[[p, q]];
            out.rms_den[[r, c]] = grid.rms_den[[p, q]];
            out.valid[[r, c]] = grid.valid[[p, q]];
        }
    }
    Ok(out)
}

/// [`expand_symmetry`] for normalized planes.
pub fn expand_symmetry_bic(bic: &Bicoherence) -> Result<Bicoherence> {
    let (full, map) = symmetry_map(&bic.axis1, &bic.axis2, bic.domain, bic.kind.is_symmetric())?;
    let size = full.len();
    let mut out = Bicoherence {
        beta: Array2::zeros((size, size)),
        magnitude: Array2::zeros((size, size)),
        valid: Array2::from_elem((size, size), false),
        axis1: full.clone(),
        axis2: full,
        domain: Domain::FullPlane,
        ..bic.clone()
    };
    for ((r, c), src) in map.indexed_iter() {
        if let Some((p, q, conj)) = *src {
            let v = bic.beta[[p, q]];
            out.beta[[r, c]] = if conj { v.conj() } else { v };
            out.magnitude[[r, c]] = bic.magnitude[[p, q]];
            out.valid[[r, c]] = bic.valid[[p, q]];
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reference estimator
// ---------------------------------------------------------------------------

/// Segment-averaged FFT triple product on plain periodogram bins.
///
/// Non-overlapping rectangular segments of `segment_len` samples; axes are
/// the FFT bins with frequency in `freq_range`. `b` and `a` are means over
/// segments rather than sums, and ε uses `K = 1`.
pub fn oracle_bispectrum(signal: &Signal, segment_len: usize, freq_range: (f64, f64)) -> Result<BispecGrid> {
    let x = signal.samples();
    let fs = signal.fs();
    if segment_len < 2 || x.len() < 4 * segment_len {
        return invalid(format!("need at least four segments of {segment_len} samples, got {}", x.len()));
    }
    let n_seg = x.len() / segment_len;
    let l = segment_len;
    let df = fs / l as f64;
    let bins: Vec<usize> = (0..=l / 2).filter(|&k| in_range(k as f64 * df, freq_range)).collect();
    if bins.is_empty() {
        return invalid("frequency range selects no FFT bins");
    }
    let spectra: Vec<Vec<Complex64>> = (0..n_seg).map(|s| fft::real_spectrum(&x[s * l..(s + 1) * l])).collect();
    let nb = bins.len();
    let bands: Vec<BandSpec> = (0..=l / 2)
        .map(|k| BandSpec { center: k as f64 * df, bandwidth: df, window_kind: WindowKind::Boxcar, index: k, squared_response: false })
        .collect();
    let al = FrameAlign { offsets: vec![0], count: n_seg, first_center: l / 2, hop: l, fs };
    let axis_bands: Vec<BandSpec> = bins.iter().map(|&k| bands[k].clone()).collect();
    let mut grid = empty_grid(nb, nb, n_seg, axis_bands.clone(), axis_bands, bands, EstimatorKind::bbb(df), 1, &al, true);
    for (p1, &j) in bins.iter().enumerate() {
        for (p2, &k) in bins.iter().enumerate() {
            if j + k > l / 2 {
                continue;
            }
            let s = CellSums::accumulate(n_seg, |m| spectra[m][j] * spectra[m][k], |m| spectra[m][j + k]);
            let scale = 1.0 / n_seg as f64;
            grid.b[[p1, p2]] = s.sum * scale;
            grid.a[[p1, p2]] = s.abs * scale;
            grid.eps[[p1, p2]] = s.bias(1.0);
            grid.rms_den[[p1, p2]] = (s.left_sq * scale).sqrt() * (s.right_sq * scale).sqrt();
            grid.valid[[p1, p2]] = !s.is_empty();
            grid.leg3[[p1, p2]] = Some(j + k);
        }
    }
    Ok(grid)
}

// ---------------------------------------------------------------------------
// Signal-level convenience
// ---------------------------------------------------------------------------

/// Everything needed to go from a signal to a [`BispecGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BispecRequest {
    pub kind: EstimatorKind,
    pub window: WindowKind,
    pub range1: (f64, f64),
    pub range2: (f64, f64),
    /// Axis spacing; defaults to half of each leg's bandwidth.
    #[serde(default)]
    pub step: Option<f64>,
    /// Frame hop in samples; defaults to [`default_hop`].
    #[serde(default)]
    pub hop: Option<usize>,
}

impl BispecRequest {
    pub fn new(kind: EstimatorKind, range1: (f64, f64), range2: (f64, f64)) -> Self {
        BispecRequest { kind, window: WindowKind::Gaussian, range1, range2, step: None, hop: None }
    }
}

fn lattice(range: (f64, f64), step: f64) -> Vec<f64> {
    let lo = (range.0 / step - 1e-9).ceil().max(0.0) as i64;
    let hi = (range.1 / step + 1e-9).floor() as i64;
    (lo..=hi).map(|i| i as f64 * step).collect()
}

fn bank_from(centers: &[f64], bw: f64, window: WindowKind) -> Vec<BandSpec> {
    centers
        .iter()
        .enumerate()
        .map(|(i, &c)| BandSpec { center: c, bandwidth: bw, window_kind: window, index: i, squared_response: false })
        .collect()
}

/// Designs the leg banks, demodulates and estimates.
///
/// BBB uses one bank holding both axes and every sum on a lattice of
/// multiples of the step. The asymmetric kinds get one bank per leg, the
/// third built from the exact sums so that every cell matches without
/// re-referencing.
pub fn bispectrum_of(signal: &Signal, req: &BispecRequest) -> Result<BispecGrid> {
    let fs = signal.fs();
    let nyquist = fs / 2.0;
    let [bw1, bw2, bw3] = req.kind.leg_bandwidths();
    for (lo, hi) in [req.range1, req.range2] {
        if !(lo >= 0.0 && lo <= hi && hi <= nyquist) {
            return invalid(format!("frequency range ({lo}, {hi}) must lie within [0, {nyquist}]"));
        }
    }
    let fits = |c: f64, bw: f64| c + bw / 2.0 <= nyquist + 1e-9;
    if req.kind.is_symmetric() {
        let step = req.step.unwrap_or(bw1 / 2.0);
        let a1 = lattice(req.range1, step);
        let a2 = lattice(req.range2, step);
        let mut idx: Vec<i64> = a1.iter().chain(&a2).map(|c| (c / step).round() as i64).collect();
        for &c1 in &a1 {
            for &c2 in &a2 {
                idx.push(((c1 + c2) / step).round() as i64);
            }
        }
        idx.sort_unstable();
        idx.dedup();
        let centers: Vec<f64> = idx.iter().map(|&i| i as f64 * step).filter(|&c| fits(c, bw1)).collect();
        if centers.is_empty() {
            return invalid("no band fits below Nyquist");
        }
        let bank = bank_from(&centers, bw1, req.window);
        let f_top = bank.iter().map(BandSpec::top_edge).fold(0.0, f64::max);
        let hop = req.hop.unwrap_or_else(|| default_hop(fs, f_top));
        let d = demodulate(signal, &bank, hop)?;
        estimate_bispectrum(Legs::Single(&d), &req.kind, req.range1, req.range2)
    } else {
        let c1 = lattice(req.range1, req.step.unwrap_or(bw1 / 2.0));
        let c2 = lattice(req.range2, req.step.unwrap_or(bw2 / 2.0));
        let c1: Vec<f64> = c1.into_iter().filter(|&c| fits(c, bw1)).collect();
        let c2: Vec<f64> = c2.into_iter().filter(|&c| fits(c, bw2)).collect();
        let mut c3: Vec<f64> = c1.iter().flat_map(|a| c2.iter().map(move |b| a + b)).filter(|&c| fits(c, bw3)).collect();
        c3.sort_by(f64::total_cmp);
        c3.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        if c1.is_empty() || c2.is_empty() || c3.is_empty() {
            return invalid("no band fits below Nyquist");
        }
        let banks = [bank_from(&c1, bw1, req.window), bank_from(&c2, bw2, req.window), bank_from(&c3, bw3, req.window)];
        let f_top = banks.iter().flatten().map(BandSpec::top_edge).fold(0.0, f64::max);
        let hop = req.hop.unwrap_or_else(|| default_hop(fs, f_top));
        let d1 = demodulate(signal, &banks[0], hop)?;
        let d2 = demodulate(signal, &banks[1], hop)?;
        let d3 = demodulate(signal, &banks[2], hop)?;
        estimate_bispectrum(Legs::Three(&d1, &d2, &d3), &req.kind, req.range1, req.range2)
    }
}

/// Wrapped absolute phase difference in [0, π].
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}
