//! Spatial filters: common average reference, multiclass CSP for crisp
//! labels, and its fuzzy-class generalization for continuous targets.
//!
//! For each class `k` the filters `W_k` are the leading generalized
//! eigenvectors of `(Σ̄_k, D_k)`, where `D_k` sums the class covariances of
//! the other classes (one-versus-rest) or of all classes (one-versus-all).
//! The complete bank concatenates `[W_1, …, W_K]` column-wise and filters a
//! trial as `Wᵀ X`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::{build_partition, FuzzyPartition, MembershipShape};
use crate::linalg::{accumulate_outer, solve_generalized_eig, trial_covariance, RealMatrix, DEFAULT_RIDGE};

/// Classes whose total membership is at or below this are degenerate.
const MIN_CLASS_WEIGHT: f64 = 1e-12;

/// Which classes enter the denominator of each class's Rayleigh quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Every class except `k`.
    #[default]
    Ovr,
    /// Every class including `k`.
    Ova,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ovr" => Ok(Self::Ovr),
            "ova" => Ok(Self::Ova),
            other => Err(Error::InvalidParameter(format!("unknown objective {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterVariant {
    CsprOvr,
    CsprOva,
    CspOvr,
    CspOva,
}

impl FilterVariant {
    fn new(fuzzy: bool, objective: Objective) -> Self {
        match (fuzzy, objective) {
            (true, Objective::Ovr) => Self::CsprOvr,
            (true, Objective::Ova) => Self::CsprOva,
            (false, Objective::Ovr) => Self::CspOvr,
            (false, Objective::Ova) => Self::CspOva,
        }
    }
}

/// How a class covariance is formed from membership-weighted trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    /// Covariance of the membership-weighted mean trial.
    #[default]
    MeanTrial,
    /// Membership-weighted mean of per-trial covariances.
    WeightedCov,
}

impl std::str::FromStr for CovarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean-trial" | "meantrial" => Ok(Self::MeanTrial),
            "weighted-cov" | "weightedcov" => Ok(Self::WeightedCov),
            other => Err(Error::InvalidParameter(format!(
                "unknown covariance mode {other:?}"
            ))),
        }
    }
}

/// Trials of uniform shape with one continuous target each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrialSet {
    trials: Vec<RealMatrix>,
    targets: Vec<f64>,
    sample_rate: f64,
}

impl LabeledTrialSet {
    pub fn new(trials: Vec<RealMatrix>, targets: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::InvalidParameter("trial set is empty".into()));
        }
        if trials.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} trials but {} targets",
                trials.len(),
                targets.len()
            )));
        }
        check_uniform(trials.iter())?;
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("targets must be finite".into()));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self {
            trials,
            targets,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.trials[0].rows()
    }

    pub fn samples(&self) -> usize {
        self.trials[0].cols()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn trials(&self) -> &[RealMatrix] {
        &self.trials
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn trial_refs(&self) -> Vec<&RealMatrix> {
        self.trials.iter().collect()
    }

    /// Copy holding only the listed trials, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut trials = Vec::with_capacity(indices.len());
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            let t = self.trials.get(i).ok_or_else(|| {
                Error::Dimension(format!("trial {i} out of range for {} trials", self.len()))
            })?;
            trials.push(t.clone());
            targets.push(self.targets[i]);
        }
        Self::new(trials, targets, self.sample_rate)
    }

    /// Applies `f` to every trial, keeping targets and rate.
    pub fn map_trials(&self, f: impl Fn(&RealMatrix) -> Result<RealMatrix>) -> Result<Self> {
        let trials = self.trials.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(trials, self.targets.clone(), self.sample_rate)
    }

    pub fn into_parts(self) -> (Vec<RealMatrix>, Vec<f64>, f64) {
        (self.trials, self.targets, self.sample_rate)
    }
}

fn check_uniform<'a>(mut trials: impl Iterator<Item = &'a RealMatrix>) -> Result<(usize, usize)> {
    let first = trials
        .next()
        .ok_or_else(|| Error::InvalidParameter("no trials given".into()))?;
    let shape = first.shape();
    for (i, t) in trials.enumerate() {
        if t.shape() != shape {
            return Err(Error::Dimension(format!(
                "trial {} has shape {:?}, expected {:?}",
                i + 1,
                t.shape(),
                shape
            )));
        }
    }
    Ok(shape)
}

/// Subtracts the cross-channel mean from every channel at each sample.
pub fn car_filter(trial: &RealMatrix) -> Result<RealMatrix> {
    let (c, s) = trial.shape();
    if c < 2 {
        return Err(Error::InvalidParameter(format!(
            "common average reference needs at least 2 channels, got {c}"
        )));
    }
    let mut mean = vec![0.0; s];
    for ch in 0..c {
        for (m, v) in mean.iter_mut().zip(trial.row(ch)) {
            *m += v;
        }
    }
    let inv = 1.0 / c as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let mut out = trial.clone();
    for ch in 0..c {
        for (o, m) in out.row_mut(ch).iter_mut().zip(&mean) {
            *o -= m;
        }
    }
    Ok(out)
}

/// Membership of every training target in `class`.
fn class_weights(targets: &[f64], partition: &FuzzyPartition, class: usize) -> Vec<f64> {
    targets.iter().map(|&y| partition.membership(class, y)).collect()
}

fn check_class(partition: &FuzzyPartition, class: usize) -> Result<()> {
    if class >= partition.num_classes() {
        return Err(Error::InvalidParameter(format!(
            "class index {class} out of range for {} classes",
            partition.num_classes()
        )));
    }
    Ok(())
}

/// Membership-weighted mean trial `Σ μ_k(y_n) X_n / Σ μ_k(y_n)` of class
/// `class` (0-based).
pub fn fuzzy_mean_trial(
    data: &LabeledTrialSet,
    partition: &FuzzyPartition,
    class: usize,
) -> Result<RealMatrix> {
    check_class(partition, class)?;
    let weights = class_weights(data.targets(), partition, class);
    weighted_mean_trial(&data.trial_refs(), &weights, class)
}

fn weighted_mean_trial(trials: &[&RealMatrix], weights: &[f64], class: usize) -> Result<RealMatrix> {
    let total = total_weight(weights, class)?;
    let (c, s) = trials[0].shape();
    let mut mean = RealMatrix::zeros(c, s);
    for (t, &w) in trials.iter().zip(weights) {
        if w != 0.0 {
            mean.add_scaled(w / total, t)?;
        }
    }
    Ok(mean)
}

fn total_weight(weights: &[f64], class: usize) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if !(total > MIN_CLASS_WEIGHT) {
        return Err(Error::DegenerateClass {
            class: class + 1,
            reason: format!("total membership {total:e} is zero"),
        });
    }
    Ok(total)
}

/// Class covariance `Σ̄_k` of class `class` (0-based).
pub fn class_covariance(
    data: &LabeledTrialSet,
    partition: &FuzzyPartition,
    class: usize,
    mode: CovarianceMode,
) -> Result<RealMatrix> {
    check_class(partition, class)?;
    let weights = class_weights(data.targets(), partition, class);
    weighted_class_covariance(&data.trial_refs(), &weights, mode, class)
}

fn weighted_class_covariance(
    trials: &[&RealMatrix],
    weights: &[f64],
    mode: CovarianceMode,
    class: usize,
) -> Result<RealMatrix> {
    match mode {
        CovarianceMode::MeanTrial => trial_covariance(&weighted_mean_trial(trials, weights, class)?),
        CovarianceMode::WeightedCov => {
            let total = total_weight(weights, class)?;
            let (c, s) = trials[0].shape();
            if s < 2 {
                return Err(Error::DegenerateTrial(format!(
                    "covariance needs at least 2 samples, got {s}"
                )));
            }
            let mut cov = RealMatrix::zeros(c, c);
            let norm = 1.0 / (total * (s - 1) as f64);
            for (t, &w) in trials.iter().zip(weights) {
                if w != 0.0 {
                    accumulate_outer(t, w * norm, &mut cov);
                }
            }
            Ok(cov)
        }
    }
}

/// Settings for fitting a fuzzy-class spatial filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsprConfig {
    /// Number of fuzzy classes `K`.
    pub classes: usize,
    /// Filters kept per class `F`.
    pub filters_per_class: usize,
    pub objective: Objective,
    pub shape: MembershipShape,
    pub mode: CovarianceMode,
    /// Relative ridge on each denominator.
    pub ridge: f64,
}

impl Default for CsprConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            filters_per_class: 21,
            objective: Objective::Ovr,
            shape: MembershipShape::Triangular,
            mode: CovarianceMode::MeanTrial,
            ridge: DEFAULT_RIDGE,
        }
    }
}

/// A learned `C × (K·F)` spatial filter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    weights: RealMatrix,
    eigenvalues: Vec<Vec<f64>>,
    variant: FilterVariant,
    mode: CovarianceMode,
    ridge: f64,
    partition: Option<FuzzyPartition>,
}

impl FilterBank {
    /// Filter matrix, columns grouped by class.
    pub fn weights(&self) -> &RealMatrix {
        &self.weights
    }

    /// Per-class generalized eigenvalues, non-increasing within each class.
    pub fn eigenvalues(&self) -> &[Vec<f64>] {
        &self.eigenvalues
    }

    pub fn classes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn filters_per_class(&self) -> usize {
        self.eigenvalues[0].len()
    }

    pub fn channels(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn variant(&self) -> FilterVariant {
        self.variant
    }

    pub fn mode(&self) -> CovarianceMode {
        self.mode
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn partition(&self) -> Option<&FuzzyPartition> {
        self.partition.as_ref()
    }

    /// Filter `j` of class `class` (both 0-based).
    pub fn filter(&self, class: usize, j: usize) -> Vec<f64> {
        self.weights.column(class * self.filters_per_class() + j)
    }
}

/// Fits a fuzzy-class filter bank to a labeled trial set.
pub fn fit_cspr(data: &LabeledTrialSet, config: &CsprConfig) -> Result<FilterBank> {
    fit_cspr_refs(&data.trial_refs(), data.targets(), config)
}

/// As [`fit_cspr`], over borrowed trials.
pub fn fit_cspr_refs(trials: &[&RealMatrix], targets: &[f64], config: &CsprConfig) -> Result<FilterBank> {
    if trials.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} trials but {} targets",
            trials.len(),
            targets.len()
        )));
    }
    let (c, _) = check_uniform(trials.iter().copied())?;
    check_filter_count(config.filters_per_class, c)?;
    let partition = build_partition(targets, config.classes, config.shape)?;
    let weights: Vec<Vec<f64>> = (0..config.classes)
        .map(|k| class_weights(targets, &partition, k))
        .collect();
    let (w, eigenvalues) = fit_from_weights(
        trials,
        &weights,
        config.filters_per_class,
        config.objective,
        config.mode,
        config.ridge,
    )?;
    Ok(FilterBank {
        weights: w,
        eigenvalues,
        variant: FilterVariant::new(true, config.objective),
        mode: config.mode,
        ridge: config.ridge,
        partition: Some(partition),
    })
}

/// Multiclass CSP for crisp labels `0..classes`.
pub fn fit_csp(
    trials: &[&RealMatrix],
    labels: &[usize],
    classes: usize,
    filters_per_class: usize,
    objective: Objective,
    mode: CovarianceMode,
    ridge: f64,
) -> Result<FilterBank> {
    if trials.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} trials but {} labels",
            trials.len(),
            labels.len()
        )));
    }
    if classes < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let (c, _) = check_uniform(trials.iter().copied())?;
    check_filter_count(filters_per_class, c)?;
    let weights: Vec<Vec<f64>> = (0..classes)
        .map(|k| labels.iter().map(|&l| if l == k { 1.0 } else { 0.0 }).collect())
        .collect();
    let (w, eigenvalues) = fit_from_weights(trials, &weights, filters_per_class, objective, mode, ridge)?;
    Ok(FilterBank {
        weights: w,
        eigenvalues,
        variant: FilterVariant::new(false, objective),
        mode,
        ridge,
        partition: None,
    })
}

fn check_filter_count(f: usize, c: usize) -> Result<()> {
    if f == 0 || f > c {
        return Err(Error::Dimension(format!(
            "filters per class must lie in 1..={c} for {c} channels, got {f}"
        )));
    }
    Ok(())
}

fn fit_from_weights(
    trials: &[&RealMatrix],
    weights: &[Vec<f64>],
    f: usize,
    objective: Objective,
    mode: CovarianceMode,
    ridge: f64,
) -> Result<(RealMatrix, Vec<Vec<f64>>)> {
    let k = weights.len();
    let c = trials[0].rows();
    let covs = weights
        .iter()
        .enumerate()
        .map(|(class, w)| weighted_class_covariance(trials, w, mode, class))
        .collect::<Result<Vec<_>>>()?;

    let mut bank = RealMatrix::zeros(c, k * f);
    let mut eigenvalues = Vec::with_capacity(k);
    for class in 0..k {
        let mut denom = RealMatrix::zeros(c, c);
        for (i, cov) in covs.iter().enumerate() {
            if i != class || objective == Objective::Ova {
                denom.add_scaled(1.0, cov)?;
            }
        }
        let sol = solve_generalized_eig(&covs[class], &denom, f, ridge).map_err(|e| match e {
            Error::SingularDenominator(msg) => {
                Error::SingularDenominator(format!("class {}: {msg}", class + 1))
            }
            other => other,
        })?;
        for j in 0..f {
            for ch in 0..c {
                bank.set(ch, class * f + j, sol.eigenvectors.get(ch, j));
            }
        }
        eigenvalues.push(sol.eigenvalues);
    }
    Ok((bank, eigenvalues))
}

/// Filters a trial: `Wᵀ X`, one output row per filter.
pub fn apply_filter(bank: &FilterBank, trial: &RealMatrix) -> Result<RealMatrix> {
    if trial.rows() != bank.channels() {
        return Err(Error::Dimension(format!(
            "trial has {} channels, filter bank expects {}",
            trial.rows(),
            bank.channels()
        )));
    }
    bank.weights.t_matmul(trial)
}

const BANK_FORMAT: &str = "cspr-filter-bank";
const BANK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankHeader {
    format: String,
    version: u32,
    channels: usize,
    columns: usize,
    classes: usize,
    filters_per_class: usize,
    variant: FilterVariant,
    mode: CovarianceMode,
    ridge: f64,
    eigenvalues: Vec<Vec<f64>>,
    partition: Option<FuzzyPartition>,
}

impl FilterBank {
    /// Writes a one-line JSON header, a newline, then the filter matrix as
    /// little-endian `f64` in column-major order.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = BankHeader {
            format: BANK_FORMAT.into(),
            version: BANK_VERSION,
            channels: self.channels(),
            columns: self.outputs(),
            classes: self.classes(),
            filters_per_class: self.filters_per_class(),
            variant: self.variant,
            mode: self.mode,
            ridge: self.ridge,
            eigenvalues: self.eigenvalues.clone(),
            partition: self.partition.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for v in self.weights.to_column_major() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<Self> {
        let mut line = Vec::new();
        input.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(Error::Format(
                "filter bank header is not newline-terminated".into(),
            ));
        }
        let header: BankHeader = serde_json::from_slice(&line[..line.len() - 1])
            .map_err(|e| Error::Format(format!("filter bank header: {e}")))?;
        if header.format != BANK_FORMAT || header.version != BANK_VERSION {
            return Err(Error::Format(format!(
                "unsupported filter bank format {} v{}",
                header.format, header.version
            )));
        }
        if header.classes * header.filters_per_class != header.columns
            || header.eigenvalues.len() != header.classes
            || header
                .eigenvalues
                .iter()
                .any(|e| e.len() != header.filters_per_class)
        {
            return Err(Error::Format("filter bank header dimensions disagree".into()));
        }
        let n = header.channels * header.columns;
        let mut payload = vec![0u8; n * 8];
        input
            .read_exact(&mut payload)
            .map_err(|e| Error::Format(format!("filter bank payload: {e}")))?;
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes after filter bank payload",
                rest.len()
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let weights = RealMatrix::from_column_major(header.channels, header.columns, &values)
            .map_err(|e| Error::Format(format!("filter bank payload: {e}")))?;
        Ok(Self {
            weights,
            eigenvalues: header.eigenvalues,
            variant: header.variant,
            mode: header.mode,
            ridge: header.ridge,
            partition: header.partition,
        })
    }
}
