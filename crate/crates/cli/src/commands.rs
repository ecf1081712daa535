use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cspr::datagen::{generate_session, generate_trials, SessionSpec, SynthSpec};
use cspr::features::{extract_features, FeatureConfig, FeatureMatrix, SpatialTransform};
use cspr::fuzzy::MembershipShape;
use cspr::harness::{
    measure_training_time, noise_robustness, run_cv, sweep_f, sweep_k, EvalConfig, FeatureSet, RegressorKind,
    TimingSpec, NOISE_LEVELS, SWEEP_CLASSES, SWEEP_FILTERS, SWEEP_REPEATS,
};
use cspr::io::{encode_session, encode_trial_set, read_session, read_trial_set, FileBlob};
use cspr::linalg::RealMatrix;
use cspr::preprocess::{preprocess_subject, PreprocessConfig};
use cspr::spatial::{
    apply_filter, fit_cspr, CovarianceMode, CsprConfig, FilterBank, LabeledTrialSet, Objective,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::{commit, json_blob, load_config, with_path};
use crate::{Command, Format, GlobalArgs};

pub fn dispatch(global: &GlobalArgs, command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => synth(global, a),
        Command::Preprocess(a) => preprocess(global, a),
        Command::FitFilters(a) => fit_filters(global, a),
        Command::ApplyFilters(a) => apply_filters(global, a),
        Command::Features(a) => features(global, a),
        Command::Eval(a) => eval(global, a),
        Command::SweepK(a) => sweep(global, a, Sweep::Classes),
        Command::SweepF(a) => sweep(global, a, Sweep::Filters),
        Command::NoiseRobustness(a) => noise(global, a),
        Command::Timing(a) => timing(global, a),
    }
}

fn set_opt<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn load_trials(path: &Path) -> Result<LabeledTrialSet, CliError> {
    Ok(read_trial_set(path)?)
}

fn load_bank(path: &Path) -> Result<FilterBank, CliError> {
    let file = File::open(path).map_err(|e| with_path(path, e))?;
    Ok(FilterBank::read_from(BufReader::new(file))?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Fixed-length labelled trials.
    #[default]
    Trials,
    /// A continuous recording with stimulus events and response times.
    Session,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthRun {
    pub kind: SynthKind,
    pub seed: u64,
    pub trials: SynthSpec,
    pub session: SessionSpec,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// What to generate.
    #[arg(long, value_enum)]
    pub kind: Option<SynthKind>,
    /// Number of channels.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Number of latent sources.
    #[arg(long)]
    pub sources: Option<usize>,
    /// Sampling rate in Hz.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Sensor noise std relative to the mean channel signal std.
    #[arg(long)]
    pub noise_ratio: Option<f64>,
    /// Trials to generate (trial sets only).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Samples per trial (trial sets only).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Stimulus events to generate (sessions only).
    #[arg(long)]
    pub events: Option<usize>,
}

fn synth(global: &GlobalArgs, a: SynthArgs) -> Result<(), CliError> {
    let mut run: SynthRun = load_config(global.config.as_deref())?;
    set_opt(&mut run.kind, &a.kind);
    set_opt(&mut run.seed, &global.seed);
    let (t, s) = (&mut run.trials, &mut run.session);
    set_opt(&mut t.channels, &a.channels);
    set_opt(&mut s.channels, &a.channels);
    set_opt(&mut t.sources, &a.sources);
    set_opt(&mut s.sources, &a.sources);
    set_opt(&mut t.sample_rate_hz, &a.sample_rate);
    set_opt(&mut s.sample_rate_hz, &a.sample_rate);
    set_opt(&mut t.noise_ratio, &a.noise_ratio);
    set_opt(&mut s.noise_ratio, &a.noise_ratio);
    set_opt(&mut t.trials, &a.trials);
    set_opt(&mut t.samples, &a.samples);
    set_opt(&mut s.events, &a.events);

    let blobs = match run.kind {
        SynthKind::Trials => {
            let world = generate_trials(&run.trials, run.seed)?;
            let mut blobs = encode_trial_set(&world.data, "trials")?;
            blobs.push(json_blob(
                "truth.json",
                &Truth {
                    mixing: &world.mixing,
                    latent: &world.latent,
                },
            )?);
            blobs
        }
        SynthKind::Session => encode_session(&generate_session(&run.session, run.seed)?, "session")?,
    };
    commit(global, "synth", &[], &run, blobs)
}

#[derive(Serialize)]
struct Truth<'a> {
    mixing: &'a RealMatrix,
    latent: &'a [f64],
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Session manifests belonging to one subject.
    #[arg(required = true)]
    pub sessions: Vec<PathBuf>,
    /// Pre-stimulus window in seconds.
    #[arg(long)]
    pub window: Option<f64>,
    /// Response-time smoothing window in seconds.
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Band-pass edges in Hz, e.g. `--band 1 20`.
    #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
    pub band: Option<Vec<f64>>,
    /// Skip temporal filtering.
    #[arg(long, conflicts_with = "band")]
    pub no_bandpass: bool,
    /// FIR length (odd).
    #[arg(long)]
    pub taps: Option<usize>,
    /// Decimate to this rate first.
    #[arg(long)]
    pub target_rate: Option<f64>,
}

fn preprocess(global: &GlobalArgs, a: PreprocessArgs) -> Result<(), CliError> {
    let mut cfg: PreprocessConfig = load_config(global.config.as_deref())?;
    set_opt(&mut cfg.window_s, &a.window);
    set_opt(&mut cfg.smoothing_s, &a.smoothing);
    set_opt(&mut cfg.num_taps, &a.taps);
    if let Some(band) = &a.band {
        cfg.bandpass = Some((band[0], band[1]));
    }
    if a.no_bandpass {
        cfg.bandpass = None;
    }
    if a.target_rate.is_some() {
        cfg.target_rate_hz = a.target_rate;
    }
    let sessions = a
        .sessions
        .iter()
        .map(|p| read_session(p))
        .collect::<Result<Vec<_>, _>>()?;
    let out = preprocess_subject(&sessions, &cfg)?;
    let mut blobs = encode_trial_set(&out.trials, "trials")?;
    blobs.push(match global.format {
        Format::Json => json_blob("targets.json", &out.targets)?,
        Format::Csv => FileBlob::new("targets.csv", targets_csv(&out.targets).into_bytes()),
    });
    commit(global, "preprocess", &a.sessions, &cfg, blobs)
}

fn targets_csv(t: &cspr::preprocess::CleanTargets) -> String {
    let mut s = String::from("session,event_index,overlap_removed,clipped,epoched,response_speed\n");
    for e in &t.events {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.session,
            e.event_index,
            e.overlap_removed,
            e.clipped,
            e.epoched,
            e.response_speed.map(cspr::features::fmt_f64).unwrap_or_default()
        ));
    }
    s
}

/// Flags shared by every command that fits spatial filters.
#[derive(Debug, Args)]
pub struct FilterFlags {
    /// Number of fuzzy classes K.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Filters kept per class F.
    #[arg(long)]
    pub filters_per_class: Option<usize>,
    /// Membership function shape: triangular or gaussian.
    #[arg(long)]
    pub shape: Option<MembershipShape>,
    /// Class covariance: mean-trial or weighted-cov.
    #[arg(long)]
    pub mode: Option<CovarianceMode>,
    /// Relative ridge added to each denominator.
    #[arg(long)]
    pub ridge: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trial-set manifest.
    pub input: PathBuf,
    #[command(flatten)]
    pub filter: FilterFlags,
    /// Denominator: ovr or ova.
    #[arg(long)]
    pub objective: Option<Objective>,
}

fn fit_filters(global: &GlobalArgs, a: FitArgs) -> Result<(), CliError> {
    let mut cfg: CsprConfig = load_config(global.config.as_deref())?;
    set_opt(&mut cfg.classes, &a.filter.classes);
    set_opt(&mut cfg.filters_per_class, &a.filter.filters_per_class);
    set_opt(&mut cfg.shape, &a.filter.shape);
    set_opt(&mut cfg.mode, &a.filter.mode);
    set_opt(&mut cfg.ridge, &a.filter.ridge);
    set_opt(&mut cfg.objective, &a.objective);
    let data = load_trials(&a.input)?;
    let bank = fit_cspr(&data, &cfg)?;
    let mut bytes = Vec::new();
    bank.write_to(&mut bytes)?;
    commit(
        global,
        "fit-filters",
        std::slice::from_ref(&a.input),
        &cfg,
        vec![FileBlob::new("filters.bank", bytes)],
    )
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    /// Trial-set manifest.
    pub input: PathBuf,
    /// Filter bank written by fit-filters.
    #[arg(long)]
    pub filters: PathBuf,
}

fn apply_filters(global: &GlobalArgs, a: ApplyArgs) -> Result<(), CliError> {
    if global.config.is_some() {
        return Err(CliError::Usage("apply-filters takes no config file".into()));
    }
    let data = load_trials(&a.input)?;
    let bank = load_bank(&a.filters)?;
    let filtered = data.map_trials(|t| apply_filter(&bank, t))?;
    let inputs = [a.input, a.filters];
    commit(
        global,
        "apply-filters",
        &inputs,
        &serde_json::Value::Null,
        encode_trial_set(&filtered, "filtered")?,
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    /// Channels as recorded.
    #[default]
    Raw,
    /// Common average reference.
    Car,
    /// A fitted filter bank, given with --filters.
    Bank,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesRun {
    pub transform: TransformKind,
    pub features: FeatureConfig,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Trial-set manifest.
    pub input: PathBuf,
    /// Spatial transform applied before band powers.
    #[arg(long, value_enum)]
    pub transform: Option<TransformKind>,
    /// Filter bank for `--transform bank`.
    #[arg(long)]
    pub filters: Option<PathBuf>,
    /// Welch segment length in samples.
    #[arg(long)]
    pub segment_len: Option<usize>,
}

#[derive(Serialize)]
struct FeaturesDoc<'a> {
    labels: &'a [String],
    targets: Option<&'a [f64]>,
    rows: Vec<&'a [f64]>,
}

fn features(global: &GlobalArgs, a: FeaturesArgs) -> Result<(), CliError> {
    let mut run: FeaturesRun = load_config(global.config.as_deref())?;
    set_opt(&mut run.transform, &a.transform);
    if a.segment_len.is_some() {
        run.features.segment_len = a.segment_len;
    }
    let data = load_trials(&a.input)?;
    let mut inputs = vec![a.input.clone()];
    let bank = match (run.transform, &a.filters) {
        (TransformKind::Bank, Some(p)) => {
            inputs.push(p.clone());
            Some(load_bank(p)?)
        }
        (TransformKind::Bank, None) => {
            return Err(CliError::Usage("--transform bank needs --filters".into()))
        }
        (_, Some(_)) => {
            return Err(CliError::Usage(
                "--filters only applies to --transform bank".into(),
            ))
        }
        (_, None) => None,
    };
    let transform = match &bank {
        Some(b) => SpatialTransform::Bank(b),
        None if run.transform == TransformKind::Car => SpatialTransform::Car,
        None => SpatialTransform::Raw,
    };
    let fm = extract_features(&data.trial_refs(), data.sample_rate(), transform, &run.features)?
        .with_targets(data.targets().to_vec())?;
    let blob = match global.format {
        Format::Csv => FileBlob::new("features.csv", feature_csv(&fm)?),
        Format::Json => json_blob(
            "features.json",
            &FeaturesDoc {
                labels: &fm.labels,
                targets: fm.targets.as_deref(),
                rows: (0..fm.values.rows()).map(|i| fm.values.row(i)).collect(),
            },
        )?,
    };
    commit(global, "features", &inputs, &run, vec![blob])
}

fn feature_csv(fm: &FeatureMatrix) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    fm.write_csv(&mut bytes)?;
    Ok(bytes)
}

/// Evaluation flags shared by eval, the sweeps and the noise study.
#[derive(Debug, Args)]
pub struct EvalFlags {
    /// Feature pipelines, comma separated: raw, car, ovr, ova.
    #[arg(long, value_delimiter = ',')]
    pub feature_sets: Option<Vec<FeatureSet>>,
    /// Regressors, comma separated: lasso, knn.
    #[arg(long, value_delimiter = ',')]
    pub regressors: Option<Vec<RegressorKind>>,
    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Independently shuffled cross-validation repeats.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Percentage of feature entries per column replaced by uniform noise.
    #[arg(long)]
    pub noise_percent: Option<f64>,
    /// Neighbours used by kNN.
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[command(flatten)]
    pub filter: FilterFlags,
}

impl EvalFlags {
    fn apply(&self, cfg: &mut EvalConfig, seed: Option<u64>) {
        set_opt(&mut cfg.feature_sets, &self.feature_sets);
        set_opt(&mut cfg.regressors, &self.regressors);
        set_opt(&mut cfg.folds, &self.folds);
        set_opt(&mut cfg.repeats, &self.repeats);
        set_opt(&mut cfg.noise_percent, &self.noise_percent);
        set_opt(&mut cfg.knn_k, &self.knn_k);
        set_opt(&mut cfg.classes, &self.filter.classes);
        set_opt(&mut cfg.filters_per_class, &self.filter.filters_per_class);
        set_opt(&mut cfg.shape, &self.filter.shape);
        set_opt(&mut cfg.mode, &self.filter.mode);
        set_opt(&mut cfg.ridge, &self.filter.ridge);
        set_opt(&mut cfg.seed, &seed);
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trial-set manifest.
    pub input: PathBuf,
    #[command(flatten)]
    pub eval: EvalFlags,
}

fn eval(global: &GlobalArgs, a: EvalArgs) -> Result<(), CliError> {
    let mut cfg: EvalConfig = load_config(global.config.as_deref())?;
    a.eval.apply(&mut cfg, global.seed);
    let data = load_trials(&a.input)?;
    let report = run_cv(&data, &cfg)?;
    let mut blobs = vec![match global.format {
        Format::Json => FileBlob::new("report.json", report.to_json()?.into_bytes()),
        Format::Csv => FileBlob::new("report.csv", report.records_csv().into_bytes()),
    }];
    if global.plot_data {
        blobs.push(FileBlob::new(
            "performance.csv",
            report.performance_csv().into_bytes(),
        ));
        blobs.push(FileBlob::new(
            "improvement.csv",
            report.improvement_csv().into_bytes(),
        ));
    }
    commit(global, "eval", std::slice::from_ref(&a.input), &cfg, blobs)
}

#[derive(Debug, Clone, Copy)]
enum Sweep {
    Classes,
    Filters,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepRun {
    /// Swept values; the command's standard grid when empty.
    pub values: Vec<usize>,
    pub eval: EvalConfig,
}

impl Default for SweepRun {
    fn default() -> Self {
        Self {
            values: Vec::new(),
            eval: EvalConfig {
                repeats: SWEEP_REPEATS,
                ..EvalConfig::default()
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Trial-set manifest.
    pub input: PathBuf,
    /// Values to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<usize>>,
    #[command(flatten)]
    pub eval: EvalFlags,
}

fn sweep(global: &GlobalArgs, a: SweepArgs, which: Sweep) -> Result<(), CliError> {
    let mut run: SweepRun = load_config(global.config.as_deref())?;
    set_opt(&mut run.values, &a.values);
    a.eval.apply(&mut run.eval, global.seed);
    if run.values.is_empty() {
        run.values = match which {
            Sweep::Classes => SWEEP_CLASSES.to_vec(),
            Sweep::Filters => SWEEP_FILTERS.to_vec(),
        };
    }
    let data = load_trials(&a.input)?;
    let (name, table) = match which {
        Sweep::Classes => ("sweep-k", sweep_k(&data, &run.eval, &run.values)?),
        Sweep::Filters => ("sweep-f", sweep_f(&data, &run.eval, &run.values)?),
    };
    let csv = || FileBlob::new(format!("{name}.csv"), table.to_csv().into_bytes());
    let mut blobs = vec![match global.format {
        Format::Json => FileBlob::new(format!("{name}.json"), table.to_json()?.into_bytes()),
        Format::Csv => csv(),
    }];
    if global.plot_data && global.format == Format::Json {
        blobs.push(csv());
    }
    commit(global, name, std::slice::from_ref(&a.input), &run, blobs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseRun {
    pub levels: Vec<f64>,
    pub eval: EvalConfig,
}

impl Default for NoiseRun {
    fn default() -> Self {
        Self {
            levels: NOISE_LEVELS.to_vec(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Trial-set manifest.
    pub input: PathBuf,
    /// Noise percentages, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[command(flatten)]
    pub eval: EvalFlags,
}

fn noise(global: &GlobalArgs, a: NoiseArgs) -> Result<(), CliError> {
    let mut run: NoiseRun = load_config(global.config.as_deref())?;
    set_opt(&mut run.levels, &a.levels);
    a.eval.apply(&mut run.eval, global.seed);
    let data = load_trials(&a.input)?;
    let table = noise_robustness(&data, &run.eval, &run.levels)?;
    let csv = || FileBlob::new("noise-robustness.csv", table.to_csv().into_bytes());
    let mut blobs = vec![match global.format {
        Format::Json => FileBlob::new("noise-robustness.json", table.to_json()?.into_bytes()),
        Format::Csv => csv(),
    }];
    if global.plot_data && global.format == Format::Json {
        blobs.push(csv());
    }
    commit(
        global,
        "noise-robustness",
        std::slice::from_ref(&a.input),
        &run,
        blobs,
    )
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    /// Training-set sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Channels of the synthetic data.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Samples per synthetic trial.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Timed runs per size; the median is reported.
    #[arg(long)]
    pub runs: Option<usize>,
    #[command(flatten)]
    pub filter: FilterFlags,
    /// Denominator: ovr or ova.
    #[arg(long)]
    pub objective: Option<Objective>,
}

fn timing(global: &GlobalArgs, a: TimingArgs) -> Result<(), CliError> {
    let mut spec: TimingSpec = load_config(global.config.as_deref())?;
    set_opt(&mut spec.sizes, &a.sizes);
    set_opt(&mut spec.channels, &a.channels);
    set_opt(&mut spec.samples, &a.samples);
    set_opt(&mut spec.runs, &a.runs);
    set_opt(&mut spec.classes, &a.filter.classes);
    set_opt(&mut spec.filters_per_class, &a.filter.filters_per_class);
    set_opt(&mut spec.mode, &a.filter.mode);
    set_opt(&mut spec.objective, &a.objective);
    set_opt(&mut spec.seed, &global.seed);
    if a.filter.shape.is_some() || a.filter.ridge.is_some() {
        return Err(CliError::Usage(
            "timing fixes the shape and ridge at their defaults".into(),
        ));
    }
    let table = measure_training_time(&spec)?;
    let csv = || FileBlob::new("timing.csv", table.to_csv().into_bytes());
    let mut blobs = vec![match global.format {
        Format::Json => FileBlob::new("timing.json", table.to_json()?.into_bytes()),
        Format::Csv => csv(),
    }];
    if global.plot_data && global.format == Format::Json {
        blobs.push(csv());
    }
    commit(global, "timing", &[], &spec, blobs)
}
