use cspr::fuzzy::MembershipShape;
use cspr::linalg::{solve_generalized_eig, RealMatrix};
use cspr::spatial::{apply_filter, fit_cspr, CovarianceMode, CsprConfig, LabeledTrialSet, Objective};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
    let g = random_matrix(n, n, rng);
    let mut a = g.matmul(&g.transpose()).unwrap();
    for i in 0..n {
        a.set(i, i, a.get(i, i) + 0.5);
    }
    a
}

/// Trials with channel gains that depend on the target, so every class
/// covariance differs.
fn toy_set(channels: usize, trials: usize, samples: usize, seed: u64) -> LabeledTrialSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(trials);
    let mut targets = Vec::with_capacity(trials);
    for n in 0..trials {
        let y = n as f64 / trials as f64 + rng.random_range(0.0..1e-3);
        let gains: Vec<f64> = (0..channels)
            .map(|c| 1.0 + (c as f64 + 1.0) * y * if c % 2 == 0 { 1.0 } else { -0.5 })
            .collect();
        data.push(RealMatrix::from_fn(channels, samples, |c, _| {
            gains[c].abs() * rng.random_range(-1.0..1.0)
        }));
        targets.push(y);
    }
    LabeledTrialSet::new(data, targets, 64.0).unwrap()
}

fn config(objective: Objective, mode: CovarianceMode) -> CsprConfig {
    CsprConfig {
        classes: 3,
        filters_per_class: 2,
        objective,
        shape: MembershipShape::Triangular,
        mode,
        ridge: 0.0,
    }
}

fn max_abs_diff(a: &RealMatrix, b: &RealMatrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenvalues_invariant_under_congruence(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(n, &mut rng);
        let b = random_spd(n, &mut rng);
        let mut m = random_matrix(n, n, &mut rng).scaled(0.3);
        for i in 0..n {
            m.set(i, i, m.get(i, i) + 1.0);
        }
        let a2 = m.transpose().matmul(&a).unwrap().matmul(&m).unwrap();
        let b2 = m.transpose().matmul(&b).unwrap().matmul(&m).unwrap();
        let r1 = solve_generalized_eig(&a, &b, n, 0.0).unwrap();
        let r2 = solve_generalized_eig(&a2, &b2, n, 0.0).unwrap();
        for (l1, l2) in r1.eigenvalues.iter().zip(&r2.eigenvalues) {
            prop_assert!((l1 - l2).abs() <= 1e-7 * l1.abs().max(1.0), "{l1} vs {l2}");
        }
        // M w' must be parallel to w for well separated eigenvalues
        for j in 0..n {
            let gap = r1.eigenvalues.iter().enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, l)| (l - r1.eigenvalues[j]).abs())
                .fold(f64::INFINITY, f64::min);
            if gap < 1e-2 * r1.eigenvalues[0] {
                continue;
            }
            let w = r1.eigenvectors.column(j);
            let mw = m.mul_vec(&r2.eigenvectors.column(j)).unwrap();
            let norm = mw.iter().map(|v| v * v).sum::<f64>().sqrt();
            let cos: f64 = w.iter().zip(&mw).map(|(x, y)| x * y).sum::<f64>() / norm;
            prop_assert!(cos.abs() > 1.0 - 1e-8, "column {j}: |cos| = {}", cos.abs());
        }
    }

    #[test]
    fn filters_invariant_to_trial_scale(scale in 1e-3f64..1e3, seed in 0u64..1000) {
        let data = toy_set(4, 30, 64, seed);
        let scaled = data.map_trials(|t| Ok(t.scaled(scale))).unwrap();
        for mode in [CovarianceMode::MeanTrial, CovarianceMode::WeightedCov] {
            let cfg = CsprConfig { ridge: 1e-8, ..config(Objective::Ovr, mode) };
            let a = fit_cspr(&data, &cfg).unwrap();
            let b = fit_cspr(&scaled, &cfg).unwrap();
            prop_assert!(max_abs_diff(a.weights(), b.weights()) < 1e-7);
        }
    }

    #[test]
    fn filters_invariant_to_affine_target_change(gain in 0.01f64..100.0, shift in -50.0f64..50.0, seed in 0u64..1000) {
        let data = toy_set(4, 30, 64, seed);
        let (trials, y, fs) = data.clone().into_parts();
        let y2: Vec<f64> = y.iter().map(|v| gain * v + shift).collect();
        let moved = LabeledTrialSet::new(trials, y2, fs).unwrap();
        let cfg = config(Objective::Ovr, CovarianceMode::WeightedCov);
        let a = fit_cspr(&data, &cfg).unwrap();
        let b = fit_cspr(&moved, &cfg).unwrap();
        prop_assert!(max_abs_diff(a.weights(), b.weights()) < 1e-6);
    }

    #[test]
    fn filter_application_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
        let data = toy_set(5, 24, 48, seed);
        let bank = fit_cspr(&data, &config(Objective::Ovr, CovarianceMode::MeanTrial)).unwrap();
        let (x, y) = (&data.trials()[0], &data.trials()[1]);
        let combo = x.scaled(a).add(&y.scaled(b)).unwrap();
        let lhs = apply_filter(&bank, &combo).unwrap();
        let rhs = apply_filter(&bank, x).unwrap().scaled(a)
            .add(&apply_filter(&bank, y).unwrap().scaled(b)).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-10);
    }
}

#[test]
fn channel_permutation_permutes_filter_rows() {
    let data = toy_set(6, 40, 64, 3);
    let perm = [3usize, 0, 5, 1, 4, 2];
    let permuted = data
        .map_trials(|t| Ok(RealMatrix::from_fn(6, t.cols(), |c, s| t.get(perm[c], s))))
        .unwrap();
    for mode in [CovarianceMode::MeanTrial, CovarianceMode::WeightedCov] {
        let cfg = config(Objective::Ovr, mode);
        let a = fit_cspr(&data, &cfg).unwrap();
        let b = fit_cspr(&permuted, &cfg).unwrap();
        let expect = RealMatrix::from_fn(6, a.outputs(), |c, j| a.weights().get(perm[c], j));
        assert!(max_abs_diff(&expect, b.weights()) < 1e-8, "{mode:?}");
        for (ea, eb) in a
            .eigenvalues()
            .iter()
            .flatten()
            .zip(b.eigenvalues().iter().flatten())
        {
            assert!((ea - eb).abs() < 1e-9 * ea.abs().max(1.0));
        }
    }
}

#[test]
fn ovr_and_ova_share_filters_and_ranking() {
    for seed in 0..5 {
        let data = toy_set(5, 45, 64, seed);
        for mode in [CovarianceMode::MeanTrial, CovarianceMode::WeightedCov] {
            let ovr = fit_cspr(&data, &config(Objective::Ovr, mode)).unwrap();
            let ova = fit_cspr(&data, &config(Objective::Ova, mode)).unwrap();
            assert!(max_abs_diff(ovr.weights(), ova.weights()) < 1e-7);
            for (lr, la) in ovr
                .eigenvalues()
                .iter()
                .flatten()
                .zip(ova.eigenvalues().iter().flatten())
            {
                assert!((lr / (1.0 + lr) - la).abs() < 1e-10, "{lr} -> {la}");
            }
        }
    }
}
