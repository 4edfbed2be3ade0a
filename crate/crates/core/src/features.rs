//! Reading a bicoherence plane: regions, harmonic lattices, delays and the
//! AM/FM peak phase contrast.
//!
//! Regions for a slow band (SO) and a fast band (FO), first quadrant only:
//!
//! ```text
//!   outside     one axis in SO, the other in FO
//!   inside_so   both axes in SO
//!   inside_fo   both axes in FO
//!   transition  one axis in FO, the other within one SO width below FO
//!   unassigned  everything else
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::polyspec::{phase_distance, Bicoherence, CouplingPlane};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub version: u32,
    /// Minimum outside score for a coupling verdict.
    pub outside_min: f64,
    /// Maximum transition/outside ratio for a PAC-like verdict.
    pub transition_ratio: f64,
    /// Relative closeness of transition and outside scores for a transient verdict.
    pub transient_tolerance: f64,
    pub lattice_min: f64,
    pub fo_consistency_min: f64,
    /// Minimum |β| at both peaks for a reliable phase contrast.
    pub contrast_gate: f64,
    /// Lags where the window overlap falls below this are not searched.
    pub taper_floor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        serde_json::from_str(include_str!("../defaults/thresholds_v1.json")).expect("bundled thresholds parse")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Outside,
    InsideSo,
    InsideFo,
    Transition,
    Unassigned,
}

#[derive(Clone, Debug)]
pub struct RegionPartition {
    pub so_range: (f64, f64),
    pub fo_range: (f64, f64),
    pub labels: Array2<Region>,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
}

impl RegionPartition {
    pub fn cells(&self, region: Region) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels.indexed_iter().filter(move |(_, r)| **r == region).map(|(ij, _)| ij)
    }
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    let tol = 1e-9 * (1.0 + hi.abs());
    x >= lo - tol && x <= hi + tol
}

pub fn partition(plane: &impl CouplingPlane, so_range: (f64, f64), fo_range: (f64, f64)) -> Result<RegionPartition> {
    partition_axes(&plane.freq1(), &plane.freq2(), so_range, fo_range)
}

pub fn partition_axes(axis1: &[f64], axis2: &[f64], so_range: (f64, f64), fo_range: (f64, f64)) -> Result<RegionPartition> {
    let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi;
    if !ordered(so_range) || !ordered(fo_range) {
        return invalid(format!("ranges must be ordered and non-negative, got {so_range:?} and {fo_range:?}"));
    }
    if so_range.1 >= fo_range.0 {
        return invalid(format!("slow range {so_range:?} must lie below fast range {fo_range:?}"));
    }
    let width = so_range.1 - so_range.0;
    let gap = ((fo_range.0 - width).max(so_range.1), fo_range.0);
    let in_gap = |x: f64| x >= gap.0 && x < gap.1 && !within(x, so_range);
    let label = |x: f64, y: f64| {
        if x <= 0.0 || y <= 0.0 {
            return Region::Unassigned;
        }
        let (xs, ys) = (within(x, so_range), within(y, so_range));
        let (xf, yf) = (within(x, fo_range), within(y, fo_range));
        if (xs && yf) || (xf && ys) {
            Region::Outside
        } else if xs && ys {
            Region::InsideSo
        } else if xf && yf {
            Region::InsideFo
        } else if (xf && in_gap(y)) || (yf && in_gap(x)) {
            Region::Transition
        } else {
            Region::Unassigned
        }
    };
    let labels = Array2::from_shape_fn((axis1.len(), axis2.len()), |(i, j)| label(axis1[i], axis2[j]));
    Ok(RegionPartition { so_range, fo_range, labels, axis1: axis1.to_vec(), axis2: axis2.to_vec() })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Verdicts {
    pub pac_like: bool,
    pub transient_like: bool,
    pub fo_self_consistent: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DelayEstimate {
    /// Seconds by which the FO envelope follows the SO phase.
    pub tau: f64,
    /// Half of one frame period, seconds.
    pub uncertainty: f64,
    /// Within half an SO period of zero.
    pub concurrent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FeatureReport {
    /// Mean signed bias-corrected magnitude per region; `None` for empty regions.
    pub outside_score: Option<f64>,
    pub inside_so_score: Option<f64>,
    pub inside_fo_score: Option<f64>,
    pub transition_score: Option<f64>,
    pub lattice_score: Option<f64>,
    pub delay: Option<DelayEstimate>,
    pub verdicts: Verdicts,
    pub thresholds_version: u32,
}

fn mean_score(bic: &Bicoherence, part: &RegionPartition, region: Region) -> Option<f64> {
    let vals: Vec<f64> = part.cells(region).filter(|&c| bic.valid[c]).map(|c| bic.magnitude[c]).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn check_partition(bic: &Bicoherence, part: &RegionPartition) -> Result<()> {
    if part.labels.dim() != bic.beta.dim() || part.axis1 != bic.axis1 || part.axis2 != bic.axis2 {
        return invalid("partition was built for a different grid");
    }
    Ok(())
}

/// Region scores and the flags that depend on them alone. The lattice and
/// delay inputs are filled in by [`analyze`].
pub fn score_regions(bic: &Bicoherence, part: &RegionPartition, th: &Thresholds) -> Result<FeatureReport> {
    if !bic.bias_corrected {
        return invalid("region scores expect a bias-corrected bicoherence");
    }
    check_partition(bic, part)?;
    let outside = mean_score(bic, part, Region::Outside);
    let transition = mean_score(bic, part, Region::Transition);
    let inside_fo = mean_score(bic, part, Region::InsideFo);
    let mut report = FeatureReport {
        outside_score: outside,
        inside_so_score: mean_score(bic, part, Region::InsideSo),
        inside_fo_score: inside_fo,
        transition_score: transition,
        lattice_score: None,
        delay: None,
        verdicts: Verdicts::default(),
        thresholds_version: th.version,
    };
    report.verdicts = verdicts(&report, th);
    Ok(report)
}

fn verdicts(r: &FeatureReport, th: &Thresholds) -> Verdicts {
    let outside = r.outside_score.unwrap_or(0.0);
    let coupled = outside >= th.outside_min;
    let separated = match r.transition_score {
        Some(t) => t <= th.transition_ratio * outside,
        None => true,
    };
    let concurrent = r.delay.map(|d| d.concurrent).unwrap_or(true);
    let close = match r.transition_score {
        Some(t) => (t - outside).abs() <= th.transient_tolerance * outside.abs().max(t.abs()),
        None => false,
    };
    let lattice = r.lattice_score.map(|l| l >= th.lattice_min).unwrap_or(false);
    Verdicts {
        pac_like: coupled && separated && concurrent,
        transient_like: close && lattice,
        fo_self_consistent: r.inside_fo_score.map(|s| s >= th.fo_consistency_min).unwrap_or(false),
    }
}

fn nearest(axis: &[f64], f: f64) -> Option<usize> {
    if axis.len() < 2 {
        return axis.first().filter(|&&c| (c - f).abs() < 1e-9).map(|_| 0);
    }
    let step = (axis[1] - axis[0]).abs();
    let (i, d) = axis
        .iter()
        .enumerate()
        .map(|(i, &c)| (i, (c - f).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    (d <= step / 2.0 + 1e-9).then_some(i)
}

fn axis_step(axis: &[f64]) -> Option<f64> {
    (axis.len() >= 2).then(|| (axis[1] - axis[0]).abs())
}

/// Mean |β| on lattice nodes (nθ, mθ) over the mean off-lattice |β| in the
/// same annulus. Annuli are rings of width θ about the origin; a cell is off
/// the lattice when it lies more than θ/4 from every node. Only quadrant I
/// is used.
pub fn lattice_score(plane: &impl CouplingPlane, fundamental: f64) -> Result<f64> {
    let (a1, a2) = (plane.freq1(), plane.freq2());
    let step = axis_step(&a1).into_iter().chain(axis_step(&a2)).fold(0.0, f64::max);
    if !(fundamental > 0.0) || step == 0.0 || fundamental / 2.0 < step - 1e-9 {
        return invalid(format!("fundamental {fundamental} Hz is not resolvable on a {step} Hz grid"));
    }
    let vals = plane.values();
    let valid = plane.valid_mask();
    let ring = |x: f64, y: f64| (x.hypot(y) / fundamental).floor() as usize;
    // Per ring: node magnitudes, and sum and count of off-lattice magnitudes.
    let mut on: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut off: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let top1 = a1.iter().cloned().fold(0.0, f64::max);
    let top2 = a2.iter().cloned().fold(0.0, f64::max);
    for n in 1..=((top1 / fundamental).floor() as usize) {
        for m in 1..=((top2 / fundamental).floor() as usize) {
            let (x, y) = (n as f64 * fundamental, m as f64 * fundamental);
            if let (Some(i), Some(j)) = (nearest(&a1, x), nearest(&a2, y)) {
                if valid[[i, j]] && (a1[i] - x).abs() <= step / 2.0 + 1e-9 && (a2[j] - y).abs() <= step / 2.0 + 1e-9 {
                    on.entry(ring(x, y)).or_default().push(vals[[i, j]].norm());
                }
            }
        }
    }
    for (i, &x) in a1.iter().enumerate() {
        for (j, &y) in a2.iter().enumerate() {
            if x <= 0.0 || y <= 0.0 || !valid[[i, j]] {
                continue;
            }
            let dx = x - (x / fundamental).round() * fundamental;
            let dy = y - (y / fundamental).round() * fundamental;
            if dx.hypot(dy) > fundamental / 4.0 {
                let e = off.entry(ring(x, y)).or_insert((0.0, 0));
                e.0 += vals[[i, j]].norm();
                e.1 += 1;
            }
        }
    }
    let (mut num, mut den, mut nodes) = (0.0, 0.0, 0usize);
    for (r, mags) in &on {
        let Some(&(sum, count)) = off.get(r).filter(|o| o.1 > 0) else { continue };
        num += mags.iter().sum::<f64>();
        den += mags.len() as f64 * sum / count as f64;
        nodes += mags.len();
    }
    if nodes == 0 {
        return Err(Error::Masked("no lattice node shares an annulus with off-lattice cells".into()));
    }
    Ok(if den > 0.0 { num / den } else if num > 0.0 { f64::INFINITY } else { 1.0 })
}

/// `I(τ, ω2) = Σ_{ω1 ∈ SO, ω1 > 0} B(ω1, ω2) e^{i2πω1τ}` on the FO rows.
#[derive(Clone, Debug)]
pub struct ImpulseResponse {
    /// Seconds.
    pub tau: Vec<f64>,
    pub omega2: Vec<f64>,
    /// τ × ω2.
    pub values: Array2<Complex64>,
    /// Window overlap at each lag; `profile` has been divided by it.
    pub taper: Vec<f64>,
    /// Mean |I| over FO rows, taper corrected.
    pub profile: Vec<f64>,
    /// Seconds by which the FO envelope follows the SO phase.
    pub delay: f64,
    pub frame_period: f64,
}

/// Relative overlap of the leg-1 window against legs 2 and 3 at each lag.
fn lag_taper(plane: &impl CouplingPlane, lags: &[i64]) -> Result<Vec<f64>> {
    let fs = plane.sample_rate();
    let [l1, l2, l3] = plane.leg_windows();
    let (w1, w2, w3) = (l1.window(fs)?, l2.window(fs)?, l3.window(fs)?);
    // Centre-align windows of different lengths.
    let c1 = (w1.len() as i64 - 1) / 2;
    let c2 = (w2.len() as i64 - 1) / 2;
    let c3 = (w3.len() as i64 - 1) / 2;
    let at = |w: &[f64], c: i64, n: i64| -> f64 {
        let i = n + c;
        if i >= 0 && (i as usize) < w.len() {
            w[i as usize]
        } else {
            0.0
        }
    };
    let span = c1.max(c2).max(c3);
    let overlap = |lag: i64| -> f64 { (-span..=span).map(|n| at(&w1, c1, n + lag) * at(&w2, c2, n) * at(&w3, c3, n)).sum() };
    let zero = overlap(0);
    if zero <= 0.0 {
        return invalid("legs have no common window support");
    }
    Ok(lags.iter().map(|&l| overlap(l) / zero).collect())
}

pub fn impulse_response(plane: &impl CouplingPlane, part: &RegionPartition, taper_floor: f64) -> Result<ImpulseResponse> {
    let (a1, a2) = (plane.freq1(), plane.freq2());
    if part.axis1 != a1 || part.axis2 != a2 {
        return invalid("partition was built for a different grid");
    }
    let vals = plane.values();
    let valid = plane.valid_mask();
    let so_cols: Vec<usize> = (0..a1.len()).filter(|&i| a1[i] > 0.0 && within(a1[i], part.so_range)).collect();
    let fo_rows: Vec<usize> = (0..a2.len())
        .filter(|&j| within(a2[j], part.fo_range) && so_cols.iter().any(|&i| part.labels[[i, j]] == Region::Outside))
        .collect();
    if fo_rows.is_empty() {
        return Err(Error::Masked("outside region is empty".into()));
    }
    if so_cols.iter().all(|&i| fo_rows.iter().all(|&j| !valid[[i, j]])) {
        return Err(Error::Masked("every cell of the slow support is masked".into()));
    }
    let fs = plane.sample_rate();
    let hop = plane.frame_hop() as i64;
    let frame_period = hop as f64 / fs;
    // Sampling ω1 at step δ makes I periodic in τ with period 1/δ.
    let spacing = so_cols.windows(2).map(|w| a1[w[1]] - a1[w[0]]).fold(f64::INFINITY, f64::min);
    let alias = if spacing.is_finite() { 0.5 / spacing } else { 60.0 };
    // Search out to where the window overlap has decayed.
    let mut lags = vec![0i64];
    loop {
        let next = lags.len() as i64 / 2 * hop + hop;
        let t = lag_taper(plane, &[next])?[0];
        if t < taper_floor || next as f64 / fs >= alias {
            break;
        }
        lags.insert(0, -next);
        lags.push(next);
    }
    let taper = lag_taper(plane, &lags)?;
    let tau: Vec<f64> = lags.iter().map(|&l| l as f64 / fs).collect();
    let mut values = Array2::zeros((tau.len(), fo_rows.len()));
    for (r, &t) in tau.iter().enumerate() {
        for (c, &j) in fo_rows.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &i in &so_cols {
                if valid[[i, j]] {
                    acc += vals[[i, j]] * Complex64::from_polar(1.0, 2.0 * PI * a1[i] * t);
                }
            }
            values[[r, c]] = acc;
        }
    }
    let profile: Vec<f64> = (0..tau.len())
        .map(|r| values.row(r).iter().map(|v| v.norm()).sum::<f64>() / fo_rows.len() as f64 / taper[r])
        .collect();
    let (k, _) = profile
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty lag grid");
    let mut peak = tau[k];
    if k > 0 && k + 1 < profile.len() {
        let (y0, y1, y2) = (profile[k - 1], profile[k], profile[k + 1]);
        let den = y0 - 2.0 * y1 + y2;
        if den < 0.0 {
            peak += 0.5 * (y0 - y2) / den * frame_period;
        }
    }
    Ok(ImpulseResponse {
        tau,
        omega2: fo_rows.iter().map(|&j| a2[j]).collect(),
        values,
        taper,
        profile,
        delay: -peak,
        frame_period,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PhaseContrast {
    /// |arg β(θ, γ−θ) − arg β(θ, γ)| wrapped to [0, π].
    pub contrast: f64,
    /// Both peaks clear the magnitude gate.
    pub reliable: bool,
}

/// Phase difference of the two peaks produced by a modulated carrier at γ
/// and its modulating frequency θ. Near 0 for amplitude modulation, near π
/// when one sideband is inverted.
pub fn peak_phase_contrast(plane: &impl CouplingPlane, theta: f64, gamma: f64, gate: f64) -> Result<PhaseContrast> {
    let (a1, a2) = (plane.freq1(), plane.freq2());
    let valid = plane.valid_mask();
    let vals = plane.values();
    let find = |x: f64, y: f64| -> Result<Complex64> {
        match (nearest(&a1, x), nearest(&a2, y)) {
            (Some(i), Some(j)) if valid[[i, j]] => Ok(vals[[i, j]]),
            _ => Err(Error::Masked(format!("cell ({x}, {y}) is masked or off the grid"))),
        }
    };
    let lower = find(theta, gamma - theta)?;
    let upper = find(theta, gamma)?;
    Ok(PhaseContrast {
        contrast: phase_distance(lower.arg(), upper.arg()),
        reliable: lower.norm() >= gate && upper.norm() >= gate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FeatureConfig {
    pub so_range: (f64, f64),
    pub fo_range: (f64, f64),
    /// Lattice fundamental; defaults to the middle of the slow range.
    #[serde(default)]
    pub fundamental: Option<f64>,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
}

/// Region scores, lattice score, delay and verdicts for one bias-corrected
/// plane. The impulse response is returned when the outside score clears
/// its threshold.
pub fn analyze(bic: &Bicoherence, cfg: &FeatureConfig) -> Result<(FeatureReport, Option<ImpulseResponse>)> {
    let th = cfg.thresholds.clone().unwrap_or_default();
    let part = partition(bic, cfg.so_range, cfg.fo_range)?;
    let mut report = score_regions(bic, &part, &th)?;
    let fundamental = cfg.fundamental.unwrap_or((cfg.so_range.0 + cfg.so_range.1) / 2.0);
    report.lattice_score = match lattice_score(bic, fundamental) {
        Ok(v) => Some(v),
        Err(Error::Masked(_)) => None,
        Err(e) => return Err(e),
    };
    let mut irf = None;
    if report.outside_score.unwrap_or(0.0) >= th.outside_min {
        if let Ok(ir) = impulse_response(bic, &part, th.taper_floor) {
            let half_period = 0.5 / cfg.so_range.1.max(1e-9);
            report.delay = Some(DelayEstimate {
                tau: ir.delay,
                uncertainty: ir.frame_period / 2.0,
                concurrent: ir.delay.abs() < half_period,
            });
            irf = Some(ir);
        }
    }
    report.verdicts = verdicts(&report, &th);
    Ok((report, irf))
}
