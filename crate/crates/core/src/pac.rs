//! Phase-power coherence and its bispectral counterpart.
//!
//! ```text
//! P(γ, t)  = |H_γ(t)|²                      squared FO envelope, at the frame rate
//! Q(γ,θ,t) = θ-band demodulate of P(γ, ·)
//! φ(θ, γ)  = Σ_m G(θ, m) · conj(Q(γ, θ, m))  G: θ-band demodulate of the signal
//! ```
//!
//! Expanding P shows φ(θ, γ) is a triple product with legs at θ, γ − θ/2 and
//! γ + θ/2, the θ leg seen through the squared θ response. [`pac_as_nbb`]
//! computes that triple product directly.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::demod::{carrier, default_hop, demodulate, BandSpec, Decomposition, Signal};
use crate::error::{invalid, Result};
use crate::polyspec::{
    align, effective_overlap, empty_grid, lag_profile, match_leg3, write_cell, BispecGrid, CellSums, EstimatorKind,
    Variant,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// |H|², the form with an exact bispectral reading.
    #[default]
    Power,
    /// |H|. Only approximately bispectral.
    Amplitude,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scaling {
    Fixed,
    /// γ bandwidth of each θ row is `ratio · θ`.
    Proportional { ratio: f64 },
}

/// Coupling values on a θ × γ grid. Raw sums live in `grid`, so
/// [`crate::polyspec::normalize`] and [`crate::polyspec::bias_correct`] apply
/// unchanged.
#[derive(Clone, Debug)]
pub struct PacGrid {
    pub grid: BispecGrid,
    pub scaling: Scaling,
    pub envelope: Envelope,
    /// γ bandwidth used for each θ row.
    pub gamma_bandwidths: Vec<f64>,
}

impl PacGrid {
    pub fn phi(&self) -> &Array2<Complex64> {
        &self.grid.b
    }

    pub fn theta_bands(&self) -> &[BandSpec] {
        &self.grid.bands1
    }

    pub fn gamma_bands(&self) -> &[BandSpec] {
        &self.grid.bands2
    }
}

fn check_regime(theta: &[BandSpec], gamma: &[BandSpec]) -> Result<()> {
    if theta.is_empty() || gamma.is_empty() {
        return invalid("theta and gamma banks must be non-empty");
    }
    let widest = theta.iter().map(|b| b.bandwidth).fold(0.0, f64::max);
    let narrowest = gamma.iter().map(|b| b.bandwidth).fold(f64::INFINITY, f64::min);
    if widest >= narrowest {
        return invalid(format!(
            "theta bandwidth {widest} Hz must be below gamma bandwidth {narrowest} Hz"
        ));
    }
    Ok(())
}

/// Hop that samples both the θ bands and the FO envelope fluctuations.
pub fn pac_hop(fs: f64, theta: &[BandSpec], gamma: &[BandSpec]) -> usize {
    let top = theta.iter().map(BandSpec::top_edge).fold(0.0, f64::max);
    let env = gamma.iter().map(|b| b.bandwidth).fold(0.0, f64::max);
    default_hop(fs, top.max(env))
}

fn envelope_decomposition(
    h: &Decomposition,
    row: usize,
    theta: &[BandSpec],
    envelope: Envelope,
) -> Result<Decomposition> {
    let p: Vec<f64> = h
        .row(row)
        .iter()
        .map(|v| match envelope {
            Envelope::Power => v.norm_sqr(),
            Envelope::Amplitude => v.norm(),
        })
        .collect();
    let origin = h.first_center();
    let fs = h.source_fs();
    let env = Signal::new(p, h.frame_rate())?;
    let mut q = demodulate(&env, theta, 1)?.rebase(origin, h.hop(), fs);
    // Re-reference each θ row to absolute signal time.
    let rot: Vec<Complex64> = theta.iter().map(|b| carrier(b.center, origin, fs)).collect();
    q.rotate_rows(&rot);
    Ok(q)
}

fn phase_power_rows(
    signal: &Signal,
    theta: &[BandSpec],
    gamma: &[BandSpec],
    hop: usize,
    envelope: Envelope,
) -> Result<(Vec<Vec<(CellSums, f64)>>, usize, crate::polyspec::FrameAlign)> {
    let fs = signal.fs();
    let g = demodulate(signal, theta, hop)?;
    let h = demodulate(signal, gamma, hop)?;
    let qs: Vec<Decomposition> = (0..gamma.len())
        .into_par_iter()
        .map(|r| envelope_decomposition(&h, r, theta, envelope))
        .collect::<Result<_>>()?;
    let mut parts: Vec<&Decomposition> = vec![&g];
    parts.extend(qs.iter());
    let al = align(&parts)?;
    let g_prof: Vec<Vec<f64>> = theta.iter().map(|b| Ok(lag_profile(&b.window(fs)?, hop))).collect::<Result<_>>()?;
    let q_prof: Vec<Vec<f64>> = theta
        .iter()
        .map(|b| Ok(lag_profile(&b.window(fs / hop as f64)?, 1)))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<(CellSums, f64)>> = (0..theta.len())
        .into_par_iter()
        .map(|i| {
            let gi = &g.row(i)[al.offsets[0]..];
            (0..gamma.len())
                .map(|j| {
                    let qi = &qs[j].row(i)[al.offsets[j + 1]..];
                    let s = CellSums::accumulate(al.count, |m| gi[m], |m| qi[m]);
                    let k = effective_overlap(&[(&g_prof[i], 1), (&q_prof[i], 1)], al.count);
                    (s, k)
                })
                .collect()
        })
        .collect();
    Ok((rows, al.count, al))
}

/// φ(θ, γ) over every pair of a θ band and a γ band.
pub fn phase_power_coherence(
    signal: &Signal,
    theta_bands: &[BandSpec],
    gamma_bands: &[BandSpec],
    hop: Option<usize>,
    envelope: Envelope,
) -> Result<PacGrid> {
    check_regime(theta_bands, gamma_bands)?;
    let fs = signal.fs();
    for b in gamma_bands.iter().chain(theta_bands) {
        if b.top_edge() > fs / 2.0 + 1e-9 {
            return Err(crate::Error::Nyquist(format!("band at {} Hz, bandwidth {} Hz", b.center, b.bandwidth)));
        }
    }
    let hop = hop.unwrap_or_else(|| pac_hop(fs, theta_bands, gamma_bands));
    let (rows, n_frames, al) = phase_power_rows(signal, theta_bands, gamma_bands, hop, envelope)?;
    let kind = pac_kind(theta_bands, gamma_bands)?;
    let mut grid = empty_grid(
        theta_bands.len(),
        gamma_bands.len(),
        n_frames,
        theta_bands.to_vec(),
        gamma_bands.to_vec(),
        gamma_bands.to_vec(),
        kind,
        1,
        &al,
        false,
    );
    for (i, row) in rows.iter().enumerate() {
        for (j, (s, k)) in row.iter().enumerate() {
            write_cell(&mut grid, i, j, s, Some(j), *k);
        }
    }
    grid.leg_templates[0] = theta_bands[0].clone().squared();
    let gbw = vec![gamma_bands[0].bandwidth; theta_bands.len()];
    Ok(PacGrid { grid, scaling: Scaling::Fixed, envelope, gamma_bandwidths: gbw })
}

fn pac_kind(theta: &[BandSpec], gamma: &[BandSpec]) -> Result<EstimatorKind> {
    EstimatorKind::new(Variant::Nbb, theta[0].bandwidth, gamma[0].bandwidth)
}

fn exact_lookup(bank: &[BandSpec], center: f64) -> Option<usize> {
    match_leg3(center, bank).filter(|&i| (bank[i].center - center).abs() <= 1e-9 * (1.0 + center.abs()))
}

fn unique_bank(centers: impl Iterator<Item = f64>, template: &BandSpec) -> Vec<BandSpec> {
    let mut c: Vec<f64> = centers.collect();
    c.sort_by(f64::total_cmp);
    c.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + a.abs()));
    c.into_iter()
        .enumerate()
        .map(|(i, center)| BandSpec { center, index: i, ..template.clone() })
        .collect()
}

/// The NBB triple product matching [`phase_power_coherence`] cell by cell.
///
/// Cell (θ, γ) holds `Σ_m S_θ · S_{γ−θ/2} · conj(S_{γ+θ/2})`, with the θ leg
/// filtered by the squared θ response and the other two legs by the γ
/// window.
pub fn pac_as_nbb(
    signal: &Signal,
    theta_bands: &[BandSpec],
    gamma_bands: &[BandSpec],
    hop: Option<usize>,
) -> Result<PacGrid> {
    check_regime(theta_bands, gamma_bands)?;
    let fs = signal.fs();
    let hop = hop.unwrap_or_else(|| pac_hop(fs, theta_bands, gamma_bands));
    let leg1: Vec<BandSpec> = theta_bands.iter().map(|b| b.clone().squared()).collect();
    let template = &gamma_bands[0];
    let lower = unique_bank(
        gamma_bands.iter().flat_map(|g| theta_bands.iter().map(move |t| g.center - t.center / 2.0)),
        template,
    );
    let upper = unique_bank(
        gamma_bands.iter().flat_map(|g| theta_bands.iter().map(move |t| g.center + t.center / 2.0)),
        template,
    );
    if let Some(b) = upper.iter().find(|b| b.top_edge() > fs / 2.0 + 1e-9) {
        return Err(crate::Error::Nyquist(format!("band at {} Hz, bandwidth {} Hz", b.center, b.bandwidth)));
    }
    let d1 = demodulate(signal, &leg1, hop)?;
    let d2 = demodulate(signal, &lower, hop)?;
    let d3 = demodulate(signal, &upper, hop)?;
    let al = align(&[&d1, &d2, &d3])?;
    let prof = |bank: &[BandSpec]| -> Result<Vec<Vec<f64>>> {
        bank.iter().map(|b| Ok(lag_profile(&b.window(fs)?, hop))).collect()
    };
    let (p1, p2, p3) = (prof(&leg1)?, prof(&lower)?, prof(&upper)?);
    let cells: Vec<Vec<(CellSums, Option<usize>, f64)>> = (0..theta_bands.len())
        .into_par_iter()
        .map(|i| {
            let s1 = &d1.row(i)[al.offsets[0]..];
            gamma_bands
                .iter()
                .map(|g| {
                    let t = theta_bands[i].center;
                    match (exact_lookup(&lower, g.center - t / 2.0), exact_lookup(&upper, g.center + t / 2.0)) {
                        (Some(l), Some(u)) => {
                            let s2 = &d2.row(l)[al.offsets[1]..];
                            let s3 = &d3.row(u)[al.offsets[2]..];
                            let s = CellSums::accumulate(al.count, |m| s1[m] * s2[m], |m| s3[m]);
                            let k = effective_overlap(&[(&p1[i], 1), (&p2[l], 1), (&p3[u], 1)], al.count);
                            (s, Some(u), k)
                        }
                        _ => (CellSums::default(), None, 1.0),
                    }
                })
                .collect()
        })
        .collect();
    let kind = pac_kind(theta_bands, gamma_bands)?;
    let mut grid = empty_grid(
        theta_bands.len(),
        gamma_bands.len(),
        al.count,
        theta_bands.to_vec(),
        gamma_bands.to_vec(),
        upper,
        kind,
        1,
        &al,
        false,
    );
    for (i, row) in cells.iter().enumerate() {
        for (j, (s, l3, k)) in row.iter().enumerate() {
            write_cell(&mut grid, i, j, s, *l3, *k);
        }
    }
    grid.leg_templates = [leg1[0].clone(), template.clone(), template.clone()];
    let gbw = vec![template.bandwidth; theta_bands.len()];
    Ok(PacGrid { grid, scaling: Scaling::Fixed, envelope: Envelope::Power, gamma_bandwidths: gbw })
}

/// Phase-power coherence with the γ bandwidth of each θ row set to
/// `ratio · θ`. Rows whose γ bands would not fit below Nyquist, or would be
/// no wider than the θ band, are masked.
pub fn variable_bandwidth_pac(
    signal: &Signal,
    theta_bands: &[BandSpec],
    gamma_centers: &[f64],
    ratio: f64,
    hop: Option<usize>,
) -> Result<PacGrid> {
    if !(ratio > 1.0 && ratio.is_finite()) {
        return invalid(format!("bandwidth ratio must exceed 1, got {ratio}"));
    }
    if theta_bands.is_empty() || gamma_centers.is_empty() {
        return invalid("theta bands and gamma centres must be non-empty");
    }
    let fs = signal.fs();
    let nyq = fs / 2.0;
    let window = theta_bands[0].window_kind;
    let bank_for = |theta: &BandSpec| -> Vec<BandSpec> {
        let bw = ratio * theta.center;
        gamma_centers.iter().enumerate().map(|(j, &c)| BandSpec { index: j, ..BandSpec::new(c, bw, window) }).collect()
    };
    let usable = |theta: &BandSpec, bank: &[BandSpec]| {
        let bw = ratio * theta.center;
        bw > theta.bandwidth && bank.iter().all(|b| b.top_edge() <= nyq + 1e-9 && b.center - bw / 2.0 >= -1e-9)
    };
    // A shared hop keeps every row on one frame lattice.
    let widest = theta_bands
        .iter()
        .filter(|t| usable(t, &bank_for(t)))
        .map(|t| ratio * t.center)
        .fold(0.0, f64::max);
    let top = theta_bands.iter().map(BandSpec::top_edge).fold(0.0, f64::max);
    let hop = hop.unwrap_or_else(|| default_hop(fs, top.max(widest)));

    let nominal: Vec<BandSpec> =
        gamma_centers.iter().enumerate().map(|(j, &c)| BandSpec { index: j, ..BandSpec::new(c, widest.max(1.0), window) }).collect();
    let mut out: Option<BispecGrid> = None;
    let mut gbw = vec![f64::NAN; theta_bands.len()];
    let mut rows: Vec<(usize, BispecGrid)> = Vec::new();
    for (i, t) in theta_bands.iter().enumerate() {
        let bank = bank_for(t);
        if !usable(t, &bank) {
            continue;
        }
        let row = phase_power_coherence(signal, std::slice::from_ref(t), &bank, Some(hop), Envelope::Power)?;
        gbw[i] = ratio * t.center;
        rows.push((i, row.grid));
    }
    for (i, row) in rows {
        let g = out.get_or_insert_with(|| {
            let mut g = row.clone();
            let n = theta_bands.len();
            let m = gamma_centers.len();
            g.b = Array2::zeros((n, m));
            g.a = Array2::zeros((n, m));
            g.eps = Array2::ones((n, m));
            g.rms_den = Array2::zeros((n, m));
            g.valid = Array2::from_elem((n, m), false);
            g.leg3 = Array2::from_elem((n, m), None);
            g.bands1 = theta_bands.to_vec();
            g.bands2 = nominal.clone();
            g.bands3 = nominal.clone();
            g
        });
        g.n_frames = g.n_frames.min(row.n_frames);
        for j in 0..gamma_centers.len() {
            g.b[[i, j]] = row.b[[0, j]];
            g.a[[i, j]] = row.a[[0, j]];
            g.eps[[i, j]] = row.eps[[0, j]];
            g.rms_den[[i, j]] = row.rms_den[[0, j]];
            g.valid[[i, j]] = row.valid[[0, j]];
            g.leg3[[i, j]] = row.leg3[[0, j]];
        }
    }
    let grid = match out {
        Some(g) => g,
        None => return invalid("every theta row is masked under proportional scaling"),
    };
    Ok(PacGrid { grid, scaling: Scaling::Proportional { ratio }, envelope: Envelope::Power, gamma_bandwidths: gbw })
}
