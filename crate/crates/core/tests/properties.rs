use proptest::prelude::*;
use swem_core::{
    adaptive_weights, affinity_features, classify_coarse, estimate_responsibilities,
    maximize_bases_weighted, read_values, swem_step, BasisSet, ClassState, FeatureMatrix,
    KernelParams, Matrix, SoftMask, WeightMode, WeightVector,
};

/// Rows with entries in `[-1, 1]`, nudged away from the origin.
fn rows(n: usize, c: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, n * c).prop_map(move |mut v| {
        for r in v.chunks_mut(c) {
            if r.iter().map(|x| x * x).sum::<f64>() < 1e-4 {
                r[0] += 1.0;
            }
        }
        Matrix::from_vec(n, c, v).unwrap()
    })
}

fn soft_mask(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0],
        n,
    )
}

#[derive(Debug, Clone)]
struct Case {
    x: Matrix,
    fg: Matrix,
    bg: Matrix,
    mask: Vec<f64>,
    tau: f64,
    iterations: usize,
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..40, 1usize..6, 1usize..6)
        .prop_flat_map(|(n, c, k)| {
            (
                rows(n, c),
                rows(k, c),
                rows(k, c),
                soft_mask(n),
                0.02f64..1.0,
                1usize..5,
            )
        })
        .prop_map(|(x, fg, bg, mask, tau, iterations)| Case {
            x,
            fg,
            bg,
            mask,
            tau,
            iterations,
        })
}

fn step(c: &Case, fg: &ClassState, bg: &ClassState, mode: WeightMode) -> swem_core::SwemStepResult {
    swem_step(
        &FeatureMatrix::new(c.x.clone()).unwrap(),
        &SoftMask::new(c.mask.clone()).unwrap(),
        fg,
        bg,
        &KernelParams::with_tau(c.tau).unwrap(),
        c.iterations,
        mode,
    )
    .unwrap()
}

fn fresh(m: &Matrix) -> ClassState {
    ClassState::from_bases(BasisSet::new(m.clone()).unwrap())
}

proptest! {
    #[test]
    fn responsibilities_are_row_stochastic(c in case()) {
        let x = FeatureMatrix::new(c.x.clone()).unwrap();
        let z = estimate_responsibilities(&x, &BasisSet::new(c.fg.clone()).unwrap(),
            &KernelParams::with_tau(c.tau).unwrap()).unwrap();
        for r in z.iter_rows() {
            prop_assert!(r.iter().all(|&v| v >= 0.0));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn weighted_means_stay_in_hull(c in case(), w in prop::collection::vec(0.05f64..1.0, 40)) {
        let x = FeatureMatrix::new(c.x.clone()).unwrap();
        let params = KernelParams::with_tau(c.tau).unwrap();
        let z = estimate_responsibilities(&x, &BasisSet::new(c.fg.clone()).unwrap(), &params).unwrap();
        let w = WeightVector::new(w[..x.rows()].to_vec()).unwrap();
        // a basis the data never reaches has no defined mean
        let Ok(mu) = maximize_bases_weighted(&x, &z, &w, &params) else { return Ok(()) };
        let max_norm = x.iter_rows().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
        for r in mu.iter_rows() {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm <= max_norm * (1.0 + 1e-12));
            for (j, &v) in r.iter().enumerate() {
                let lo = x.iter_rows().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = x.iter_rows().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn mass_never_decreases(c in case(), adaptive in any::<bool>()) {
        let mode = if adaptive { WeightMode::Adaptive } else { WeightMode::Fixed };
        let first = step(&c, &fresh(&c.fg), &fresh(&c.bg), mode);
        let second = step(&c, &first.fg, &first.bg, mode);
        for (old, new) in [(&first.fg, &second.fg), (&first.bg, &second.bg)] {
            for (a, b) in old.acc.beta.iter().zip(&new.acc.beta) {
                prop_assert!(b >= a);
            }
        }
    }

    #[test]
    fn bases_are_alpha_over_beta(c in case(), adaptive in any::<bool>()) {
        let mode = if adaptive { WeightMode::Adaptive } else { WeightMode::Fixed };
        let s = step(&c, &fresh(&c.fg), &fresh(&c.bg), mode);
        for state in [&s.fg, &s.bg] {
            for k in 0..state.bases.rows() {
                let beta = state.acc.beta[k];
                if beta <= 1e-8 {
                    continue;
                }
                for (m, a) in state.bases.row(k).iter().zip(state.acc.alpha.row(k)) {
                    let want = a / beta;
                    prop_assert!((m - want).abs() <= 1e-12 * want.abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn lazy_bases_are_untouched(c in case(), adaptive in any::<bool>()) {
        let mode = if adaptive { WeightMode::Adaptive } else { WeightMode::Fixed };
        let eps = KernelParams::default().epsilon;
        let first = step(&c, &fresh(&c.fg), &fresh(&c.bg), mode);
        let second = step(&c, &first.fg, &first.bg, mode);
        for (old, new, commit) in [
            (&first.fg, &second.fg, &second.fg_commit),
            (&first.bg, &second.bg, &second.bg_commit),
        ] {
            let z = &commit.responsibilities;
            let w = commit.weights.as_slice();
            for k in 0..old.bases.rows() {
                let mass: f64 = (0..z.rows()).map(|n| z.get(n, k) * w[n]).sum();
                if mass >= eps {
                    continue;
                }
                prop_assert_eq!(old.bases.row(k), new.bases.row(k));
                prop_assert_eq!(old.acc.alpha.row(k), new.acc.alpha.row(k));
                prop_assert_eq!(old.acc.beta[k].to_bits(), new.acc.beta[k].to_bits());
            }
        }
    }

    #[test]
    fn adaptive_weights_bounded_by_mask(c in case()) {
        let s = step(&c, &fresh(&c.fg), &fresh(&c.bg), WeightMode::Adaptive);
        for (n, &m) in c.mask.iter().enumerate() {
            let wf = s.fg_commit.weights.as_slice()[n];
            let wb = s.bg_commit.weights.as_slice()[n];
            prop_assert!((0.0..=m).contains(&wf));
            prop_assert!((0.0..=1.0 - m).contains(&wb));
        }
        let x = FeatureMatrix::new(c.x.clone()).unwrap();
        let mask = SoftMask::new(c.mask.clone()).unwrap();
        let p = classify_coarse(&x, &s.fg.bases, &s.bg.bases, &KernelParams::with_tau(c.tau).unwrap()).unwrap();
        let (wf, wb) = adaptive_weights(&mask, &p).unwrap();
        for (n, &m) in c.mask.iter().enumerate() {
            prop_assert!((0.0..=m).contains(&wf.as_slice()[n]));
            prop_assert!((0.0..=1.0 - m).contains(&wb.as_slice()[n]));
        }
    }

    #[test]
    fn scaling_a_frame_keeps_assignments(c in case(), scale in 0.01f64..100.0) {
        let params = KernelParams::with_tau(c.tau).unwrap();
        let x = FeatureMatrix::new(c.x.clone()).unwrap();
        let scaled: Vec<f64> = c.x.as_slice().iter().map(|v| v * scale).collect();
        let xs = FeatureMatrix::new(Matrix::from_vec(c.x.rows(), c.x.cols(), scaled).unwrap()).unwrap();
        let fg = BasisSet::new(c.fg.clone()).unwrap();
        let bg = BasisSet::new(c.bg.clone()).unwrap();
        let z = estimate_responsibilities(&x, &fg, &params).unwrap();
        let zs = estimate_responsibilities(&xs, &fg, &params).unwrap();
        for (a, b) in z.as_slice().iter().zip(zs.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let p = classify_coarse(&x, &fg, &bg, &params).unwrap();
        let ps = classify_coarse(&xs, &fg, &bg, &params).unwrap();
        for (a, b) in p.fg.iter().zip(&ps.fg) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn affinity_is_order_free(c in case(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let params = KernelParams::with_tau(c.tau).unwrap();
        let q = FeatureMatrix::new(c.x.clone()).unwrap();
        let fg = BasisSet::new(c.fg.clone()).unwrap();
        let bg = BasisSet::new(c.bg.clone()).unwrap();
        let k = fg.count();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pf: Vec<usize> = (0..k).collect();
        let mut pb = pf.clone();
        pf.shuffle(&mut rng);
        pb.shuffle(&mut rng);
        let s = affinity_features(&q, &fg, &bg, k, &params).unwrap();
        let sp = affinity_features(&q, &fg.permuted(&pf), &bg.permuted(&pb), k, &params).unwrap();
        prop_assert_eq!(s.matrix(), sp.matrix());
        // strictly inside (0, 1) in exact arithmetic; a kernel ratio below
        // 2^-53 rounds to the boundary in f64
        for &v in s.matrix().as_slice() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        // swapping the classes mirrors S
        let swapped = affinity_features(&q, &bg, &fg, k, &params).unwrap();
        for (a, b) in s.matrix().as_slice().iter().zip(swapped.matrix().as_slice()) {
            prop_assert!((a + b - 1.0).abs() <= 1e-12);
        }
        let values = Matrix::from_vec(2 * k, 2, (0..4 * k).map(|i| i as f64).collect()).unwrap();
        let keys = BasisSet::concat(&fg, &bg).unwrap();
        let v = read_values(&q, &keys, &values, &params).unwrap();
        let perm: Vec<usize> = pf.iter().copied().chain(pb.iter().map(|&i| i + k)).collect();
        let vp = read_values(&q, &keys.permuted(&perm), &values.select_rows(&perm), &params).unwrap();
        for (a, b) in v.as_slice().iter().zip(vp.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
