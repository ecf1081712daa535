use std::f64::consts::PI;

use cspr::datagen::{generate_trials, SynthSpec};
use cspr::harness::{
    cc, evaluate_split, repeat_folds, rmse, run_cv, sweep_k, EvalConfig, FeatureSet, FeatureStage, Regressor,
    RegressorKind,
};
use cspr::linalg::RealMatrix;
use cspr::regression::complement;
use cspr::spatial::{apply_filter, fit_cspr, CovarianceMode, CsprConfig, LabeledTrialSet};

fn log_var(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).ln()
}

/// One channel carries a 10 Hz tone whose power in dB is the target; the
/// others carry fixed tones.
fn tone_world(n: usize) -> LabeledTrialSet {
    let fs = 128.0;
    let mut trials = Vec::new();
    let mut targets = Vec::new();
    for i in 0..n {
        let db = -6.0 + 12.0 * ((i * 37) % n) as f64 / n as f64;
        let amp = 10f64.powf(db / 20.0);
        trials.push(RealMatrix::from_fn(3, 384, |c, t| {
            let t = t as f64 / fs;
            match c {
                0 => amp * (2.0 * PI * 10.0 * t).sin(),
                1 => (2.0 * PI * 6.0 * t + 0.3).sin(),
                _ => 0.5 * (2.0 * PI * 11.0 * t).cos(),
            }
        }));
        targets.push(db);
    }
    LabeledTrialSet::new(trials, targets, fs).unwrap()
}

#[test]
fn noiseless_linear_features_give_near_perfect_lasso() {
    let data = tone_world(60);
    let cfg = EvalConfig {
        feature_sets: vec![FeatureSet::Raw],
        regressors: vec![RegressorKind::Lasso],
        repeats: 2,
        ..EvalConfig::default()
    };
    let report = run_cv(&data, &cfg).unwrap();
    let s = report.summary_for(FeatureSet::Raw, RegressorKind::Lasso).unwrap();
    assert!(s.mean_cc.unwrap() > 0.99, "{s:?}");
}

fn small_world(seed: u64) -> LabeledTrialSet {
    generate_trials(
        &SynthSpec {
            channels: 8,
            samples: 256,
            trials: 80,
            ..SynthSpec::default()
        },
        seed,
    )
    .unwrap()
    .data
}

fn quick_config() -> EvalConfig {
    EvalConfig {
        repeats: 2,
        filters_per_class: 2,
        ..EvalConfig::default()
    }
}

#[test]
fn reports_are_identical_across_runs_and_thread_counts() {
    let data = small_world(4);
    let cfg = quick_config();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_cv(&data, &cfg).unwrap().to_json().unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(1));
    assert_eq!(one, run(4));
}

#[test]
fn test_fold_never_reaches_fitting() {
    let data = small_world(9);
    let cfg = EvalConfig {
        regressors: vec![RegressorKind::Knn],
        ..quick_config()
    };
    let n = data.len();
    let folds = repeat_folds(n, &cfg, 0).unwrap();
    let test = &folds[2];
    let train = complement(n, test);
    let records = evaluate_split(&data, &train, test, &cfg, 0, 2).unwrap();

    // refit with the test fold deleted from the data entirely
    let kept = data.subset(&train).unwrap();
    let kept_refs = kept.trial_refs();
    let all_refs = data.trial_refs();
    let test_trials: Vec<&RealMatrix> = test.iter().map(|&i| all_refs[i]).collect();
    let test_y: Vec<f64> = test.iter().map(|&i| data.targets()[i]).collect();
    for (set, rec) in cfg.feature_sets.iter().zip(&records) {
        let stage = FeatureStage::fit(*set, &kept_refs, kept.targets(), &cfg).unwrap();
        let xtr = stage
            .extract(&kept_refs, kept.sample_rate(), &cfg.features)
            .unwrap();
        let xte = stage
            .extract(&test_trials, data.sample_rate(), &cfg.features)
            .unwrap();
        let model = Regressor::fit(RegressorKind::Knn, &xtr, kept.targets(), &cfg, 0).unwrap();
        let pred = model.predict(&xte).unwrap();
        assert_eq!(rec.feature_set, *set);
        assert_eq!(rec.rmse, rmse(&pred, &test_y).unwrap());
        assert_eq!(rec.cc, Some(cc(&pred, &test_y).unwrap()));
    }
}

#[test]
fn noiseless_recovery_reaches_the_oracle() {
    let spec = SynthSpec {
        trials: 300,
        noise_ratio: 0.0,
        ..SynthSpec::default()
    };
    let world = generate_trials(&spec, 21).unwrap();
    let y = world.data.targets();
    let unmix = world.mixing.column(0);
    let oracle: Vec<f64> = world
        .data
        .trials()
        .iter()
        .map(|t| {
            let s: Vec<f64> = (0..t.cols())
                .map(|j| (0..t.rows()).map(|c| unmix[c] * t.get(c, j)).sum())
                .collect();
            log_var(&s)
        })
        .collect();
    let oracle_cc = cc(&oracle, y).unwrap().abs();
    assert!(oracle_cc > 0.99);

    for mode in [CovarianceMode::MeanTrial, CovarianceMode::WeightedCov] {
        let bank = fit_cspr(
            &world.data,
            &CsprConfig {
                classes: 3,
                filters_per_class: 1,
                mode,
                ..CsprConfig::default()
            },
        )
        .unwrap();
        let best = (0..bank.outputs())
            .map(|j| {
                let feats: Vec<f64> = world
                    .data
                    .trials()
                    .iter()
                    .map(|t| log_var(apply_filter(&bank, t).unwrap().row(j)))
                    .collect();
                cc(&feats, y).unwrap().abs()
            })
            .fold(0.0, f64::max);
        assert!(best >= oracle_cc - 0.05, "{mode:?}: {best} vs oracle {oracle_cc}");
    }
}

#[test]
fn filtering_beats_every_raw_channel() {
    let world = generate_trials(&SynthSpec::default(), 5).unwrap();
    let y = world.data.targets();
    let trials = world.data.trials();
    let unmix = world.mixing.column(0);
    let project = |w: &[f64]| -> Vec<f64> {
        trials
            .iter()
            .map(|t| {
                let s: Vec<f64> = (0..t.cols())
                    .map(|j| (0..t.rows()).map(|c| w[c] * t.get(c, j)).sum())
                    .collect();
                log_var(&s)
            })
            .collect()
    };
    let oracle_cc = cc(&project(&unmix), y).unwrap().abs();
    let best_raw = (0..world.data.channels())
        .map(|c| {
            let f: Vec<f64> = trials.iter().map(|t| log_var(t.row(c))).collect();
            cc(&f, y).unwrap().abs()
        })
        .fold(0.0, f64::max);
    assert!(best_raw <= oracle_cc, "raw {best_raw} vs oracle {oracle_cc}");

    // filters fitted on one half, scored on the other
    let half = world.data.len() / 2;
    let train = world.data.subset(&(0..half).collect::<Vec<_>>()).unwrap();
    let bank = fit_cspr(
        &train,
        &CsprConfig {
            filters_per_class: 1,
            ..CsprConfig::default()
        },
    )
    .unwrap();
    let held: Vec<usize> = (half..world.data.len()).collect();
    let held_y: Vec<f64> = held.iter().map(|&i| y[i]).collect();
    let filtered = (0..bank.outputs())
        .map(|j| {
            let f: Vec<f64> = held
                .iter()
                .map(|&i| log_var(apply_filter(&bank, &trials[i]).unwrap().row(j)))
                .collect();
            cc(&f, &held_y).unwrap().abs()
        })
        .fold(0.0, f64::max);
    assert!(
        filtered >= best_raw + 0.1,
        "filtered {filtered} vs raw {best_raw}"
    );
}

#[test]
fn two_classes_do_no_better_than_three() {
    let world = generate_trials(
        &SynthSpec {
            trials: 300,
            samples: 512,
            ..SynthSpec::default()
        },
        13,
    )
    .unwrap();
    let cfg = EvalConfig {
        feature_sets: vec![FeatureSet::Ovr],
        regressors: vec![RegressorKind::Knn],
        repeats: 5,
        filters_per_class: 4,
        ..EvalConfig::default()
    };
    let table = sweep_k(&world.data, &cfg, &[2, 3]).unwrap();
    let k2 = table
        .row(2, FeatureSet::Ovr, RegressorKind::Knn)
        .unwrap()
        .mean_cc
        .unwrap();
    let k3 = table
        .row(3, FeatureSet::Ovr, RegressorKind::Knn)
        .unwrap()
        .mean_cc
        .unwrap();
    // soft: allow a small sampling margin
    assert!(k2 <= k3 + 0.02, "K=2 {k2} vs K=3 {k3}");
}
