//! Repeated k-fold evaluation, parameter sweeps, attribute-noise robustness
//! and training-time measurement.
//!
//! Every random choice draws from a ChaCha stream keyed by
//! `(seed, repeat, fold, purpose)`, so results do not depend on how jobs are
//! scheduled across threads.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_trials, SynthSpec};
use crate::error::{Error, Result};
use crate::features::{extract_features, fmt_f64, FeatureConfig, SpatialTransform};
use crate::fuzzy::MembershipShape;
use crate::linalg::{RealMatrix, DEFAULT_RIDGE};
use crate::regression::{
    complement, fold_assignment, lasso_cv_fit, KnnModel, LassoCvConfig, LassoModel, DEFAULT_K,
};
use crate::spatial::{fit_cspr_refs, CovarianceMode, CsprConfig, FilterBank, LabeledTrialSet, Objective};

/// Root mean square error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Pearson correlation; undefined when either input is constant.
pub fn cc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (a, b) = (p - mp, t - mt);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    let scale = |m: f64| 1e-24 * n * m.abs().max(1.0).powi(2);
    if sxx <= scale(mp) || syy <= scale(mt) {
        return Err(Error::UndefinedCorrelation(
            "correlation of a constant vector".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension(format!(
            "metric inputs must be equal non-zero lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Raw,
    Car,
    Ovr,
    Ova,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [FeatureSet::Raw, FeatureSet::Car, FeatureSet::Ovr, FeatureSet::Ova];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Raw => "raw",
            FeatureSet::Car => "car",
            FeatureSet::Ovr => "ovr",
            FeatureSet::Ova => "ova",
        }
    }

    fn objective(self) -> Option<Objective> {
        match self {
            FeatureSet::Ovr => Some(Objective::Ovr),
            FeatureSet::Ova => Some(Objective::Ova),
            _ => None,
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown feature set {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Lasso,
    Knn,
}

impl RegressorKind {
    pub fn name(self) -> &'static str {
        match self {
            RegressorKind::Lasso => "lasso",
            RegressorKind::Knn => "knn",
        }
    }
}

impl std::str::FromStr for RegressorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" => Ok(RegressorKind::Lasso),
            "knn" => Ok(RegressorKind::Knn),
            _ => Err(Error::InvalidParameter(format!("unknown regressor {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub feature_sets: Vec<FeatureSet>,
    pub regressors: Vec<RegressorKind>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub classes: usize,
    pub filters_per_class: usize,
    pub shape: MembershipShape,
    pub mode: CovarianceMode,
    pub ridge: f64,
    /// Percentage of rows per feature column replaced by uniform noise.
    pub noise_percent: f64,
    pub knn_k: usize,
    pub lasso: LassoCvConfig,
    pub features: FeatureConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            feature_sets: FeatureSet::ALL.to_vec(),
            regressors: vec![RegressorKind::Lasso, RegressorKind::Knn],
            folds: 5,
            repeats: 10,
            seed: 0,
            classes: 3,
            filters_per_class: 21,
            shape: MembershipShape::Triangular,
            mode: CovarianceMode::MeanTrial,
            ridge: DEFAULT_RIDGE,
            noise_percent: 0.0,
            knn_k: DEFAULT_K,
            lasso: LassoCvConfig::default(),
            features: FeatureConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if !(0.0..=100.0).contains(&self.noise_percent) {
            return bad("noise percentage must lie in [0, 100]");
        }
        if self.feature_sets.is_empty() || self.regressors.is_empty() {
            return bad("at least one feature set and one regressor are required");
        }
        Ok(())
    }

    pub fn cspr(&self, objective: Objective) -> CsprConfig {
        CsprConfig {
            classes: self.classes,
            filters_per_class: self.filters_per_class,
            objective,
            shape: self.shape,
            mode: self.mode,
            ridge: self.ridge,
        }
    }
}

/// What a stream of random numbers is used for within one job.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Purpose {
    Shuffle = 1,
    TrainNoise = 2,
    TestNoise = 3,
    InnerFolds = 4,
}

fn stream_rng(seed: u64, repeat: usize, fold: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((repeat as u64) << 40) | ((fold as u64) << 8) | purpose as u64);
    rng
}

/// Replaces, in every column, exactly `round(q% · N)` rows chosen without
/// replacement by uniform draws between the column's minimum and maximum.
pub fn inject_attribute_noise<R: Rng + ?Sized>(
    features: &RealMatrix,
    percent: f64,
    rng: &mut R,
) -> Result<RealMatrix> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::InvalidParameter(format!(
            "noise percentage must lie in [0, 100], got {percent}"
        )));
    }
    let (n, d) = features.shape();
    let count = (percent / 100.0 * n as f64).round() as usize;
    let mut out = features.clone();
    if count == 0 {
        return Ok(out);
    }
    for j in 0..d {
        let col = features.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for i in sample(rng, n, count).into_iter() {
            let v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Spatial stage of a pipeline, fitted on training trials only.
#[derive(Debug, Clone)]
pub enum FeatureStage {
    Raw,
    Car,
    Bank(FilterBank),
}

impl FeatureStage {
    pub fn fit(
        set: FeatureSet,
        trials: &[&RealMatrix],
        targets: &[f64],
        config: &EvalConfig,
    ) -> Result<Self> {
        Ok(match set.objective() {
            None if set == FeatureSet::Raw => FeatureStage::Raw,
            None => FeatureStage::Car,
            Some(obj) => FeatureStage::Bank(fit_cspr_refs(trials, targets, &config.cspr(obj))?),
        })
    }

    pub fn transform(&self) -> SpatialTransform<'_> {
        match self {
            FeatureStage::Raw => SpatialTransform::Raw,
            FeatureStage::Car => SpatialTransform::Car,
            FeatureStage::Bank(b) => SpatialTransform::Bank(b),
        }
    }

    pub fn extract(&self, trials: &[&RealMatrix], fs: f64, config: &FeatureConfig) -> Result<RealMatrix> {
        Ok(extract_features(trials, fs, self.transform(), config)?.values)
    }
}

/// A fitted regressor of either kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regressor {
    Lasso(LassoModel),
    Knn(KnnModel),
}

impl Regressor {
    pub fn fit(
        kind: RegressorKind,
        x: &RealMatrix,
        y: &[f64],
        config: &EvalConfig,
        seed: u64,
    ) -> Result<Self> {
        Ok(match kind {
            RegressorKind::Lasso => Regressor::Lasso(lasso_cv_fit(x, y, &config.lasso, seed)?),
            RegressorKind::Knn => Regressor::Knn(KnnModel::fit(x, y, config.knn_k)?),
        })
    }

    pub fn predict(&self, x: &RealMatrix) -> Result<Vec<f64>> {
        match self {
            Regressor::Lasso(m) => m.predict(x),
            Regressor::Knn(m) => m.predict(x),
        }
    }
}

/// Scores of one method on one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub feature_set: FeatureSet,
    pub regressor: RegressorKind,
    pub repeat: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub rmse: f64,
    /// Missing when predictions or targets are constant.
    pub cc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub feature_set: FeatureSet,
    pub regressor: RegressorKind,
    pub mean_rmse: f64,
    pub mean_cc: Option<f64>,
    pub missing_cc: usize,
}

/// Percentage improvement of `new` over `base` for one regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub regressor: RegressorKind,
    pub base: FeatureSet,
    pub new: FeatureSet,
    pub rmse_percent: f64,
    pub cc_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub trials: usize,
    pub records: Vec<FoldRecord>,
    pub summary: Vec<MethodSummary>,
    pub improvements: Vec<Improvement>,
    pub flags: Vec<String>,
}

/// Fold assignment for one repeat.
pub fn repeat_folds(n: usize, config: &EvalConfig, repeat: usize) -> Result<Vec<Vec<usize>>> {
    let seed = stream_rng(config.seed, repeat, 0, Purpose::Shuffle).next_u64();
    fold_assignment(n, config.folds, seed)
}

/// Scores every configured method on one train/test split.
///
/// Fitting code only sees the training rows; test targets are used for
/// scoring alone.
pub fn evaluate_split(
    data: &LabeledTrialSet,
    train: &[usize],
    test: &[usize],
    config: &EvalConfig,
    repeat: usize,
    fold: usize,
) -> Result<Vec<FoldRecord>> {
    evaluate_split_cached(data, train, test, config, repeat, fold, &[])
}

/// Features of the untrained spatial stages for every trial.
fn fixed_features(data: &LabeledTrialSet, config: &EvalConfig) -> Result<Vec<(FeatureSet, RealMatrix)>> {
    let refs = data.trial_refs();
    config
        .feature_sets
        .iter()
        .filter(|f| f.objective().is_none())
        .map(|&f| {
            let stage = FeatureStage::fit(f, &[], &[], config)?;
            Ok((f, stage.extract(&refs, data.sample_rate(), &config.features)?))
        })
        .collect()
}

fn evaluate_split_cached(
    data: &LabeledTrialSet,
    train: &[usize],
    test: &[usize],
    config: &EvalConfig,
    repeat: usize,
    fold: usize,
    fixed: &[(FeatureSet, RealMatrix)],
) -> Result<Vec<FoldRecord>> {
    let refs = data.trial_refs();
    let train_trials: Vec<&RealMatrix> = train.iter().map(|&i| refs[i]).collect();
    let test_trials: Vec<&RealMatrix> = test.iter().map(|&i| refs[i]).collect();
    let train_y: Vec<f64> = train.iter().map(|&i| data.targets()[i]).collect();
    let test_y: Vec<f64> = test.iter().map(|&i| data.targets()[i]).collect();
    let fs = data.sample_rate();

    let mut records = Vec::new();
    for &set in &config.feature_sets {
        let (mut xtr, mut xte) = match fixed.iter().find(|(f, _)| *f == set) {
            Some((_, all)) => (all.select_rows(train)?, all.select_rows(test)?),
            None => {
                let stage = FeatureStage::fit(set, &train_trials, &train_y, config)?;
                (
                    stage.extract(&train_trials, fs, &config.features)?,
                    stage.extract(&test_trials, fs, &config.features)?,
                )
            }
        };
        if config.noise_percent > 0.0 {
            let mut rng = stream_rng(config.seed, repeat, fold, Purpose::TrainNoise);
            xtr = inject_attribute_noise(&xtr, config.noise_percent, &mut rng)?;
            let mut rng = stream_rng(config.seed, repeat, fold, Purpose::TestNoise);
            xte = inject_attribute_noise(&xte, config.noise_percent, &mut rng)?;
        }
        let inner_seed = stream_rng(config.seed, repeat, fold, Purpose::InnerFolds).next_u64();
        for &kind in &config.regressors {
            let model = Regressor::fit(kind, &xtr, &train_y, config, inner_seed)?;
            let pred = model.predict(&xte)?;
            records.push(FoldRecord {
                feature_set: set,
                regressor: kind,
                repeat,
                fold,
                n_train: train.len(),
                n_test: test.len(),
                rmse: rmse(&pred, &test_y)?,
                cc: match cc(&pred, &test_y) {
                    Ok(v) => Some(v),
                    Err(Error::UndefinedCorrelation(_)) => None,
                    Err(e) => return Err(e),
                },
            });
        }
    }
    Ok(records)
}

/// Repeated k-fold cross-validation of every configured method.
pub fn run_cv(data: &LabeledTrialSet, config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    let n = data.len();
    if n < config.folds {
        return Err(Error::InvalidParameter(format!(
            "{n} trials cannot fill {} folds",
            config.folds
        )));
    }
    let splits: Vec<(usize, usize, Vec<usize>)> = (0..config.repeats)
        .map(|r| repeat_folds(n, config, r))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .enumerate()
        .flat_map(|(r, folds)| folds.into_iter().enumerate().map(move |(f, t)| (r, f, t)))
        .collect();
    if let Some((_, _, t)) = splits.iter().find(|(_, _, t)| t.len() < 2 || n - t.len() < 2) {
        return Err(Error::InvalidParameter(format!(
            "degenerate fold of {} test trials out of {n}",
            t.len()
        )));
    }

    let fixed = fixed_features(data, config)?;
    let records: Vec<FoldRecord> = splits
        .par_iter()
        .map(|(r, f, test)| evaluate_split_cached(data, &complement(n, test), test, config, *r, *f, &fixed))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let (summary, flags) = summarize(&records, config);
    let improvements = improvements(&summary, config);
    Ok(EvalReport {
        config: config.clone(),
        trials: n,
        records,
        summary,
        improvements,
        flags,
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean over folds within each repeat, then over repeats.
fn summarize(records: &[FoldRecord], config: &EvalConfig) -> (Vec<MethodSummary>, Vec<String>) {
    let mut summary = Vec::new();
    let mut flags = Vec::new();
    for &set in &config.feature_sets {
        for &kind in &config.regressors {
            let mine: Vec<&FoldRecord> = records
                .iter()
                .filter(|r| r.feature_set == set && r.regressor == kind)
                .collect();
            let mut rmse_by_repeat = Vec::new();
            let mut cc_by_repeat = Vec::new();
            for r in 0..config.repeats {
                let rows: Vec<&&FoldRecord> = mine.iter().filter(|x| x.repeat == r).collect();
                if let Some(m) = mean(&rows.iter().map(|x| x.rmse).collect::<Vec<_>>()) {
                    rmse_by_repeat.push(m);
                }
                if let Some(m) = mean(&rows.iter().filter_map(|x| x.cc).collect::<Vec<_>>()) {
                    cc_by_repeat.push(m);
                }
            }
            let missing = mine.iter().filter(|x| x.cc.is_none()).count();
            if missing > 0 {
                flags.push(format!(
                    "{}/{}: correlation undefined on {missing} folds, excluded from means",
                    set.name(),
                    kind.name()
                ));
            }
            summary.push(MethodSummary {
                feature_set: set,
                regressor: kind,
                mean_rmse: mean(&rmse_by_repeat).unwrap_or(f64::NAN),
                mean_cc: mean(&cc_by_repeat),
                missing_cc: missing,
            });
        }
    }
    (summary, flags)
}

fn improvements(summary: &[MethodSummary], config: &EvalConfig) -> Vec<Improvement> {
    let mut out = Vec::new();
    for &kind in &config.regressors {
        let find = |s: FeatureSet| summary.iter().find(|m| m.feature_set == s && m.regressor == kind);
        for &new in &config.feature_sets {
            for &base in &config.feature_sets {
                if base == new {
                    continue;
                }
                let (b, n) = (find(base).expect("summary row"), find(new).expect("summary row"));
                out.push(Improvement {
                    regressor: kind,
                    base,
                    new,
                    rmse_percent: (b.mean_rmse - n.mean_rmse) / b.mean_rmse * 100.0,
                    cc_percent: match (b.mean_cc, n.mean_cc) {
                        (Some(bc), Some(nc)) if bc != 0.0 => Some((nc - bc) / bc * 100.0),
                        _ => None,
                    },
                });
            }
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl EvalReport {
    pub fn summary_for(&self, set: FeatureSet, kind: RegressorKind) -> Option<&MethodSummary> {
        self.summary
            .iter()
            .find(|m| m.feature_set == set && m.regressor == kind)
    }

    /// Mean CC of one method in each repeat.
    pub fn repeat_cc(&self, set: FeatureSet, kind: RegressorKind) -> Vec<Option<f64>> {
        self.per_repeat(set, kind, |r| r.cc)
    }

    /// Mean RMSE of one method in each repeat.
    pub fn repeat_rmse(&self, set: FeatureSet, kind: RegressorKind) -> Vec<Option<f64>> {
        self.per_repeat(set, kind, |r| Some(r.rmse))
    }

    fn per_repeat(
        &self,
        set: FeatureSet,
        kind: RegressorKind,
        value: impl Fn(&FoldRecord) -> Option<f64>,
    ) -> Vec<Option<f64>> {
        (0..self.config.repeats)
            .map(|r| {
                let vals: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|x| x.feature_set == set && x.regressor == kind && x.repeat == r)
                    .filter_map(&value)
                    .collect();
                mean(&vals)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per repeat, fold and method.
    pub fn records_csv(&self) -> String {
        let mut s = String::from("feature_set,regressor,repeat,fold,n_train,n_test,rmse,cc\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.feature_set.name(),
                r.regressor.name(),
                r.repeat,
                r.fold,
                r.n_train,
                r.n_test,
                fmt_f64(r.rmse),
                opt(r.cc)
            );
        }
        s
    }

    /// Mean RMSE and CC of every method.
    pub fn performance_csv(&self) -> String {
        let mut s = String::from("regressor,feature_set,mean_rmse,mean_cc,missing_cc\n");
        for m in &self.summary {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                m.regressor.name(),
                m.feature_set.name(),
                fmt_f64(m.mean_rmse),
                opt(m.mean_cc),
                m.missing_cc
            );
        }
        s
    }

    /// Pairwise percentage improvements.
    pub fn improvement_csv(&self) -> String {
        let mut s = String::from("regressor,new,base,rmse_improvement_percent,cc_improvement_percent\n");
        for i in &self.improvements {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                i.regressor.name(),
                i.new.name(),
                i.base.name(),
                fmt_f64(i.rmse_percent),
                opt(i.cc_percent)
            );
        }
        s
    }
}

/// Mean scores for one parameter setting, or the reason it could not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub feature_set: FeatureSet,
    pub regressor: RegressorKind,
    pub mean_rmse: Option<f64>,
    pub mean_cc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// `"classes"` or `"filters_per_class"`.
    pub parameter: String,
    pub config: EvalConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},feature_set,regressor,mean_rmse,mean_cc,error\n",
            self.parameter
        );
        for r in &self.rows {
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.value,
                r.feature_set.name(),
                r.regressor.name(),
                opt(r.mean_rmse),
                opt(r.mean_cc),
                err
            );
        }
        s
    }

    pub fn row(&self, value: usize, set: FeatureSet, kind: RegressorKind) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.value == value && r.feature_set == set && r.regressor == kind)
    }
}

pub const SWEEP_CLASSES: [usize; 6] = [2, 3, 4, 5, 6, 7];
pub const SWEEP_FILTERS: [usize; 7] = [5, 10, 20, 30, 40, 50, 60];
pub const SWEEP_REPEATS: usize = 5;

fn sweep(
    data: &LabeledTrialSet,
    config: &EvalConfig,
    parameter: &str,
    values: &[usize],
    apply: impl Fn(&mut EvalConfig, usize),
) -> Result<SweepTable> {
    let mut base = config.clone();
    base.feature_sets.retain(|f| f.objective().is_some());
    if base.feature_sets.is_empty() {
        return Err(Error::InvalidParameter(
            "sweeps need at least one spatial-filter feature set (ovr or ova)".into(),
        ));
    }
    base.validate()?;
    let mut rows = Vec::new();
    for &value in values {
        let mut cfg = base.clone();
        apply(&mut cfg, value);
        let outcome = if cfg.filters_per_class > data.channels() {
            Err(Error::Dimension(format!(
                "{} filters per class exceed {} channels",
                cfg.filters_per_class,
                data.channels()
            )))
        } else {
            run_cv(data, &cfg)
        };
        for &set in &cfg.feature_sets {
            for &kind in &cfg.regressors {
                rows.push(match &outcome {
                    Ok(rep) => {
                        let m = rep.summary_for(set, kind).expect("summary row");
                        SweepRow {
                            value,
                            feature_set: set,
                            regressor: kind,
                            mean_rmse: Some(m.mean_rmse),
                            mean_cc: m.mean_cc,
                            error: None,
                        }
                    }
                    Err(e) => SweepRow {
                        value,
                        feature_set: set,
                        regressor: kind,
                        mean_rmse: None,
                        mean_cc: None,
                        error: Some(e.to_string()),
                    },
                });
            }
        }
    }
    Ok(SweepTable {
        parameter: parameter.into(),
        config: base,
        rows,
    })
}

/// Scores for each number of fuzzy classes; `F` is taken from `config`.
pub fn sweep_k(data: &LabeledTrialSet, config: &EvalConfig, ks: &[usize]) -> Result<SweepTable> {
    sweep(data, config, "classes", ks, |c, v| c.classes = v)
}

/// Scores for each number of filters per class; `K` is taken from `config`.
pub fn sweep_f(data: &LabeledTrialSet, config: &EvalConfig, fs: &[usize]) -> Result<SweepTable> {
    sweep(data, config, "filters_per_class", fs, |c, v| {
        c.filters_per_class = v
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub percent: f64,
    pub feature_set: FeatureSet,
    pub regressor: RegressorKind,
    pub mean_rmse: f64,
    pub mean_cc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTable {
    pub config: EvalConfig,
    pub rows: Vec<NoiseRow>,
}

pub const NOISE_LEVELS: [f64; 5] = [0.0, 10.0, 20.0, 30.0, 40.0];

/// Repeats the evaluation at each attribute-noise level.
pub fn noise_robustness(data: &LabeledTrialSet, config: &EvalConfig, levels: &[f64]) -> Result<NoiseTable> {
    let mut rows = Vec::new();
    for &q in levels {
        let cfg = EvalConfig {
            noise_percent: q,
            ..config.clone()
        };
        let rep = run_cv(data, &cfg)?;
        rows.extend(rep.summary.iter().map(|m| NoiseRow {
            percent: q,
            feature_set: m.feature_set,
            regressor: m.regressor,
            mean_rmse: m.mean_rmse,
            mean_cc: m.mean_cc,
        }));
    }
    Ok(NoiseTable {
        config: config.clone(),
        rows,
    })
}

impl NoiseTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("noise_percent,feature_set,regressor,mean_rmse,mean_cc\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt_f64(r.percent),
                r.feature_set.name(),
                r.regressor.name(),
                fmt_f64(r.mean_rmse),
                opt(r.mean_cc)
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingSpec {
    pub sizes: Vec<usize>,
    pub channels: usize,
    pub samples: usize,
    pub classes: usize,
    pub filters_per_class: usize,
    pub mode: CovarianceMode,
    pub objective: Objective,
    /// Distinct synthetic trials; larger sizes reuse them cyclically.
    pub pool: usize,
    pub runs: usize,
    pub seed: u64,
}

impl Default for TimingSpec {
    fn default() -> Self {
        Self {
            sizes: (1..=10).map(|i| 200 * i).collect(),
            channels: 62,
            samples: 768,
            classes: 3,
            filters_per_class: 21,
            mode: CovarianceMode::MeanTrial,
            objective: Objective::Ovr,
            pool: 200,
            runs: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub trials: usize,
    /// Median wall time over the runs, in seconds.
    pub seconds: f64,
    pub runs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub spec: TimingSpec,
    pub rows: Vec<TimingRow>,
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

impl TimingTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("trials,median_seconds\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{}", r.trials, fmt_f64(r.seconds));
        }
        s
    }
}

/// Least-squares line `y = a + b·x` and its coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "linear fit needs distinct x values".into(),
        ));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((intercept, slope, r2))
}

/// Times filter fitting at each training-set size.
pub fn measure_training_time(spec: &TimingSpec) -> Result<TimingTable> {
    if spec.sizes.is_empty() || spec.runs == 0 || spec.pool == 0 {
        return Err(Error::InvalidParameter(
            "timing needs at least one size, one run and a non-empty pool".into(),
        ));
    }
    let world = generate_trials(
        &SynthSpec {
            channels: spec.channels,
            samples: spec.samples,
            trials: spec.pool,
            sources: 3.min(spec.channels),
            ..SynthSpec::default()
        },
        spec.seed,
    )?;
    let pool = world.data.trial_refs();
    let pool_y = world.data.targets();
    let cfg = CsprConfig {
        classes: spec.classes,
        filters_per_class: spec.filters_per_class,
        objective: spec.objective,
        shape: MembershipShape::Triangular,
        mode: spec.mode,
        ridge: DEFAULT_RIDGE,
    };
    let mut rows = Vec::with_capacity(spec.sizes.len());
    for &n in &spec.sizes {
        let trials: Vec<&RealMatrix> = (0..n).map(|i| pool[i % pool.len()]).collect();
        // distinct targets so percentile classes never collapse
        let targets: Vec<f64> = (0..n)
            .map(|i| pool_y[i % pool_y.len()] + 1e-9 * (i / pool_y.len()) as f64)
            .collect();
        let mut runs = Vec::with_capacity(spec.runs);
        for _ in 0..spec.runs {
            let start = Instant::now();
            let bank = fit_cspr_refs(&trials, &targets, &cfg)?;
            runs.push(start.elapsed().as_secs_f64());
            drop(bank);
        }
        let mut sorted = runs.clone();
        sorted.sort_by(f64::total_cmp);
        rows.push(TimingRow {
            trials: n,
            seconds: sorted[sorted.len() / 2],
            runs,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.trials as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    let (intercept, slope, r_squared) = if rows.len() >= 2 {
        linear_fit(&xs, &ys)?
    } else {
        (ys[0], 0.0, 1.0)
    };
    Ok(TimingTable {
        spec: spec.clone(),
        rows,
        intercept,
        slope,
        r_squared,
    })
}
