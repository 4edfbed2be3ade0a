use bicoh::arrayfile::{ArrayFile, Axis, Data, Dtype};
use bicoh::demod::{default_hop, demodulate, design_bank, design_bank_spaced, Decomposition, Signal, WindowKind};
use bicoh::features::{partition_axes, Region};
use bicoh::polyspec::{
    cross_bispectrum, estimate_bispectrum, kmode_coupling, normalize, BispecGrid, EstimatorKind, Legs, Normalization,
};
use bicoh::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: f64 = 64.0;
const BW: f64 = 4.0;

fn noisy_tones(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<f64> = (0..3).map(|_| rng.random_range(2.0..14.0)).collect();
    let ph: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            let tones: f64 = f.iter().zip(&ph).map(|(f, p)| (std::f64::consts::TAU * f * t + p).cos()).sum();
            tones + rng.random_range(-1.0..1.0)
        })
        .collect()
}

fn decompose(x: Vec<f64>) -> Decomposition {
    let bank = design_bank(FS, 0.0, 30.0, BW, WindowKind::Gaussian).unwrap();
    let hop = default_hop(FS, 32.0);
    demodulate(&Signal::new(x, FS).unwrap(), &bank, hop).unwrap()
}

fn bbb(d: &Decomposition) -> BispecGrid {
    estimate_bispectrum(Legs::Single(d), &EstimatorKind::bbb(BW), (0.0, 14.0), (0.0, 14.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn scaling_the_input_scales_b_cubically_and_leaves_beta(seed in 0u64..1000, a in 0.1f64..10.0) {
        let x = noisy_tones(seed, 512);
        let g = bbb(&decompose(x.clone()));
        let h = bbb(&decompose(x.iter().map(|v| v * a).collect()));
        let (bg, bh) = (normalize(&g, Normalization::MagnitudeSum).unwrap(), normalize(&h, Normalization::MagnitudeSum).unwrap());
        let top = g.b.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for ((ij, v), w) in g.b.indexed_iter().zip(h.b.iter()) {
            prop_assert!((v * a.powi(3) - w).norm() <= 1e-9 * top * a.powi(3), "cell {:?}", ij);
            if g.valid[ij] {
                prop_assert!((bg.beta[ij] - bh.beta[ij]).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn symmetric_estimate_is_exchange_symmetric(seed in 0u64..1000) {
        let g = bbb(&decompose(noisy_tones(seed, 512)));
        for ((i, j), v) in g.b.indexed_iter() {
            prop_assert_eq!(*v, g.b[[j, i]]);
        }
    }

    #[test]
    fn magnitude_sum_bounds(seed in 0u64..1000) {
        let g = bbb(&decompose(noisy_tones(seed, 512)));
        let b = normalize(&g, Normalization::MagnitudeSum).unwrap();
        for (ij, ok) in g.valid.indexed_iter() {
            if *ok {
                prop_assert!(g.b[ij].norm() <= g.a[ij] * (1.0 + 1e-12));
                prop_assert!(b.magnitude[ij] <= 1.0 + 1e-12);
                prop_assert!(g.eps[ij] > 0.0 && g.eps[ij] <= 1.0);
            }
        }
    }

    #[test]
    fn first_power_coupling_is_the_bispectrum(seed in 0u64..1000) {
        let d = decompose(noisy_tones(seed, 512));
        let k1 = kmode_coupling(&d, 1, (0.0, 14.0), (0.0, 14.0)).unwrap();
        let g = bbb(&d);
        prop_assert_eq!(&k1.b, &g.b);
        prop_assert_eq!(&k1.eps, &g.eps);
    }

    #[test]
    fn cross_bispectrum_of_a_channel_with_itself(seed in 0u64..1000) {
        let x = noisy_tones(seed, 512);
        let bank = design_bank_spaced(FS, 0.0, 30.0, BW, 1.0, WindowKind::Gaussian).unwrap();
        let hop = default_hop(FS, 32.0);
        let d = demodulate(&Signal::new(x, FS).unwrap(), &bank, hop).unwrap();
        let cross = cross_bispectrum(&d, &d, &EstimatorKind::bbb(BW), (2.0, 8.0), (8.0, 14.0)).unwrap();
        let direct = estimate_bispectrum(Legs::Three(&d, &d, &d), &EstimatorKind::bbb(BW), (0.0, 30.0), (0.0, 30.0)).unwrap();
        let (a1, a2) = (cross.axis1(), cross.axis2());
        let (d1, d2) = (direct.axis1(), direct.axis2());
        let find = |axis: &[f64], f: f64| axis.iter().position(|&c| (c - f).abs() < 1e-9);
        let mut compared = 0;
        for ((i, j), v) in cross.b.indexed_iter() {
            if !cross.valid[[i, j]] {
                continue;
            }
            // Only cells whose legs fall on bank centres compare directly.
            let (Some(p), Some(q)) = (find(&d1, a1[i]), find(&d2, a2[j] - a1[i] / 2.0)) else { continue };
            prop_assert!((v - direct.b[[p, q]]).norm() <= 1e-9 * (1.0 + v.norm()));
            compared += 1;
        }
        prop_assert!(compared > 0);
    }

    #[test]
    fn delay_rotates_band_values_and_shifts_frames(seed in 0u64..1000, k in 1usize..4) {
        let long = noisy_tones(seed, 520);
        let hop = default_hop(FS, 32.0);
        let d = k * hop;
        let late = decompose(long[..512].to_vec());
        let early = decompose(long[d..d + 512].to_vec());
        // late(n) = early(n − d): frame m of `late` sees frame m − k of `early`.
        let top = early.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (b, band) in early.bands().iter().enumerate() {
            let rot = Complex64::from_polar(1.0, -std::f64::consts::TAU * band.center * d as f64 / FS);
            for m in k..late.n_frames() {
                let want = early.row(b)[m - k] * rot;
                prop_assert!((late.row(b)[m] - want).norm() <= 1e-6 * top);
            }
        }
    }

    #[test]
    fn delay_by_whole_hops_only_touches_edge_frames(seed in 0u64..1000, k in 1usize..4) {
        let long = noisy_tones(seed, 520);
        let hop = default_hop(FS, 32.0);
        let d = k * hop;
        let (late, early) = (decompose(long[..512].to_vec()), decompose(long[d..d + 512].to_vec()));
        let peak = |dec: &Decomposition| dec.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        let bound = 2.0 * k as f64 * peak(&late).max(peak(&early)).powi(3);
        let (g, h) = (bbb(&late), bbb(&early));
        for (v, w) in g.b.iter().zip(h.b.iter()) {
            prop_assert!((v.norm() - w.norm()).abs() <= bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn every_quadrant_one_cell_gets_exactly_one_label(
        so_lo in 0.5f64..5.0, so_w in 1.0f64..6.0, gap in 0.5f64..10.0, fo_w in 5.0f64..40.0, step in 0.25f64..2.0,
    ) {
        let so = (so_lo, so_lo + so_w);
        let fo = (so.1 + gap, so.1 + gap + fo_w);
        let axis: Vec<f64> = (0..((fo.1 + 5.0) / step) as usize).map(|i| i as f64 * step).collect();
        let part = partition_axes(&axis, &axis, so, fo).unwrap();
        let regions = [Region::Outside, Region::InsideSo, Region::InsideFo, Region::Transition, Region::Unassigned];
        let total: usize = regions.iter().map(|&r| part.cells(r).count()).sum();
        prop_assert_eq!(total, axis.len() * axis.len());
        let inside = |x: f64, r: (f64, f64)| x >= r.0 - 1e-9 && x <= r.1 + 1e-9;
        for ((i, j), r) in part.labels.indexed_iter() {
            let (x, y) = (axis[i], axis[j]);
            if x <= 0.0 || y <= 0.0 {
                prop_assert_eq!(*r, Region::Unassigned);
            } else if (inside(x, so) && inside(y, fo)) || (inside(x, fo) && inside(y, so)) {
                prop_assert_eq!(*r, Region::Outside);
            } else if inside(x, so) && inside(y, so) {
                prop_assert_eq!(*r, Region::InsideSo);
            } else if inside(x, fo) && inside(y, fo) {
                prop_assert_eq!(*r, Region::InsideFo);
            } else {
                prop_assert!(matches!(r, Region::Transition | Region::Unassigned));
            }
        }
    }

    #[test]
    fn array_files_round_trip(
        rows in 1usize..6, cols in 1usize..6, complex in any::<bool>(), seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rows * cols;
        let data = if complex {
            Data::Complex((0..n).map(|_| Complex64::new(rng.random::<f64>() * 1e6 - 5e5, rng.random::<f64>())).collect())
        } else {
            Data::Real((0..n).map(|_| rng.random::<f64>() * 1e-3).collect())
        };
        let valid: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let axes = vec![
            Axis::new("omega1", "Hz", &(0..rows).map(|i| i as f64 * 0.5).collect::<Vec<_>>()),
            Axis::new("omega2", "Hz", &(0..cols).map(|i| (i as f64).sqrt()).collect::<Vec<_>>()),
        ];
        let f = ArrayFile::new(data, axes, Dtype::F64).unwrap().with_mask(&valid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        f.write(&dir.path().join("a")).unwrap();
        let g = ArrayFile::read(&dir.path().join("a")).unwrap();
        prop_assert_eq!(g.mask().unwrap().unwrap(), valid);
        prop_assert_eq!(f, g);
    }
}
