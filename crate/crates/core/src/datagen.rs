//! Synthetic recordings with planted spatial sources.
//!
//! Each trial is `A s + e`: `A` has random orthonormal columns, the sources
//! `s` are white noise band-passed to 4–13 Hz and rescaled per trial, and
//! `e` is white sensor noise. Source 1's log-variance drives the target
//! through an affine link; the other sources vary independently of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{design_bandpass, FirFilter};
use crate::error::{Error, Result};
use crate::linalg::{dot, RealMatrix};
use crate::preprocess::{Event, SessionRecord};
use crate::spatial::LabeledTrialSet;

const SOURCE_BAND_HZ: (f64, f64) = (4.0, 13.0);
const SOURCE_TAPS: usize = 129;
/// Cap on the latent z-score so the affine link stays positive.
const Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub channels: usize,
    pub samples: usize,
    pub sample_rate_hz: f64,
    pub trials: usize,
    pub sources: usize,
    /// Standard deviation of source 1's natural log-variance.
    pub target_spread: f64,
    /// Standard deviation of the other sources' natural log-variance.
    pub distractor_spread: f64,
    /// Mean variance of each other source relative to source 1.
    pub distractor_power: f64,
    /// Sensor noise std as a fraction of the mean per-channel signal std.
    pub noise_ratio: f64,
    /// `y = offset + slope · z` with `z` the standardized log-variance.
    pub target_offset: f64,
    pub target_slope: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            channels: 16,
            samples: 768,
            sample_rate_hz: 256.0,
            trials: 600,
            sources: 3,
            target_spread: 1.0,
            distractor_spread: 1.0,
            distractor_power: 1.0,
            noise_ratio: 0.1,
            target_offset: 1.0,
            target_slope: 0.25,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.channels == 0 || self.sources == 0 {
            return bad("channels and sources must be positive".into());
        }
        if self.sources > self.channels {
            return bad(format!(
                "{} sources cannot be mixed into {} channels",
                self.sources, self.channels
            ));
        }
        if self.samples <= SOURCE_TAPS {
            return bad(format!("need more than {SOURCE_TAPS} samples per trial"));
        }
        if !(self.sample_rate_hz > 2.0 * SOURCE_BAND_HZ.1) {
            return bad(format!("sample rate must exceed {} Hz", 2.0 * SOURCE_BAND_HZ.1));
        }
        if !(self.noise_ratio >= 0.0) || !(self.target_spread >= 0.0) || !(self.distractor_spread >= 0.0) {
            return bad("noise ratio and spreads must be non-negative".into());
        }
        if !(self.distractor_power > 0.0 && self.distractor_power.is_finite()) {
            return bad("distractor power must be positive".into());
        }
        if !(self.target_offset - Z_LIMIT * self.target_slope.abs() > 0.0) {
            return bad("target link must stay positive over ±3 standard deviations".into());
        }
        Ok(())
    }

    fn noise_std(&self) -> f64 {
        // orthonormal columns spread the total mean source variance over C channels
        let total = 1.0 + (self.sources - 1) as f64 * self.distractor_power;
        self.noise_ratio * (total / self.channels as f64).sqrt()
    }
}

/// Generated trials with the ground truth needed by oracle checks.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub data: LabeledTrialSet,
    /// `C × c` mixing matrix with orthonormal columns.
    pub mixing: RealMatrix,
    /// Per-trial latent z-score of source 1.
    pub latent: Vec<f64>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= Z_LIMIT {
            return z;
        }
    }
}

/// Random `C × c` matrix with orthonormal columns.
///
/// Columns start as random sign vectors and are orthogonalized by
/// Gram-Schmidt, so every source reaches every channel with comparable
/// weight. The first column is left untouched at `±1/√C`.
pub fn random_orthonormal(channels: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<RealMatrix> {
    if cols > channels || cols == 0 {
        return Err(Error::InvalidParameter(format!(
            "{cols} orthonormal columns do not fit in {channels} dimensions"
        )));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut attempts = 0;
    while basis.len() < cols {
        attempts += 1;
        let mut v: Vec<f64> = if attempts <= 100 * cols {
            (0..channels)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect()
        } else {
            // sign vectors can run out in tiny dimensions
            (0..channels).map(|_| StandardNormal.sample(rng)).collect()
        };
        // two passes keep the columns orthogonal to rounding precision
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 * (channels as f64).sqrt() {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Ok(RealMatrix::from_fn(channels, cols, |i, j| basis[j][i]))
}

/// Band-limited noise of `len` samples with unit empirical variance,
/// scaled to `variance`.
fn band_limited(rng: &mut ChaCha8Rng, filter: &FirFilter, len: usize, variance: f64) -> Result<Vec<f64>> {
    let pad = filter.edge_len();
    let white: Vec<f64> = (0..len + 2 * pad).map(|_| StandardNormal.sample(rng)).collect();
    let mut s = filter.filtfilt(&white)?[pad..pad + len].to_vec();
    let mean = s.iter().sum::<f64>() / len as f64;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (len as f64 - 1.0);
    let scale = (variance / var).sqrt();
    s.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    Ok(s)
}

fn log_variance(z: f64, spread: f64) -> f64 {
    // mean variance stays one
    spread * z - 0.5 * spread * spread
}

fn mix(mixing: &RealMatrix, sources: &[Vec<f64>], noise_std: f64, rng: &mut ChaCha8Rng) -> RealMatrix {
    let (c, k) = mixing.shape();
    let len = sources[0].len();
    RealMatrix::from_fn(c, len, |ch, t| {
        let mut v = 0.0;
        for (j, src) in sources.iter().enumerate().take(k) {
            v += mixing.get(ch, j) * src[t];
        }
        if noise_std > 0.0 {
            let e: f64 = StandardNormal.sample(rng);
            v += noise_std * e;
        }
        v
    })
}

/// Generates a labelled trial set; identical seeds give identical output.
pub fn generate_trials(spec: &SynthSpec, seed: u64) -> Result<SynthWorld> {
    spec.validate()?;
    if spec.trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let mixing = random_orthonormal(spec.channels, spec.sources, &mut rng_for(seed, 0))?;
    let filter = design_bandpass(
        SOURCE_BAND_HZ.0,
        SOURCE_BAND_HZ.1,
        spec.sample_rate_hz,
        SOURCE_TAPS,
    )?;
    let noise_std = spec.noise_std();

    let trials = (0..spec.trials)
        .into_par_iter()
        .map(|n| -> Result<(RealMatrix, f64)> {
            let mut rng = rng_for(seed, n as u64 + 1);
            let z = truncated_normal(&mut rng);
            let mut sources = Vec::with_capacity(spec.sources);
            sources.push(band_limited(
                &mut rng,
                &filter,
                spec.samples,
                log_variance(z, spec.target_spread).exp(),
            )?);
            for _ in 1..spec.sources {
                let u = truncated_normal(&mut rng);
                let var = spec.distractor_power * log_variance(u, spec.distractor_spread).exp();
                sources.push(band_limited(&mut rng, &filter, spec.samples, var)?);
            }
            Ok((mix(&mixing, &sources, noise_std, &mut rng), z))
        })
        .collect::<Result<Vec<_>>>()?;

    let (trials, latent): (Vec<RealMatrix>, Vec<f64>) = trials.into_iter().unzip();
    let targets = latent
        .iter()
        .map(|z| spec.target_offset + spec.target_slope * z)
        .collect();
    Ok(SynthWorld {
        data: LabeledTrialSet::new(trials, targets, spec.sample_rate_hz)?,
        mixing,
        latent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionSpec {
    pub subject_id: String,
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub events: usize,
    pub sources: usize,
    pub target_spread: f64,
    pub distractor_spread: f64,
    pub distractor_power: f64,
    pub noise_ratio: f64,
    pub target_offset: f64,
    pub target_slope: f64,
    /// Inter-stimulus gap range in seconds.
    pub min_gap_s: f64,
    pub max_gap_s: f64,
    /// Onset of the first stimulus.
    pub first_onset_s: f64,
    /// Lag-one correlation of the latent state between stimuli.
    pub drift: f64,
    /// Fraction of responses turned into lapses.
    pub outlier_fraction: f64,
    /// Multiplier applied to a lapse's response time.
    pub outlier_scale: f64,
}

impl Default for SessionSpec {
    fn default() -> Self {
        Self {
            subject_id: "synth01".into(),
            channels: 16,
            sample_rate_hz: 256.0,
            events: 200,
            sources: 3,
            target_spread: 1.0,
            distractor_spread: 1.0,
            distractor_power: 1.0,
            noise_ratio: 0.1,
            target_offset: 2.0,
            target_slope: 0.5,
            min_gap_s: 2.0,
            max_gap_s: 10.0,
            first_onset_s: 4.0,
            drift: 0.9,
            outlier_fraction: 0.02,
            outlier_scale: 10.0,
        }
    }
}

/// Generates a continuous session whose response speed tracks source 1's
/// variance in the interval before each stimulus.
pub fn generate_session(spec: &SessionSpec, seed: u64) -> Result<SessionRecord> {
    let trial_like = SynthSpec {
        channels: spec.channels,
        samples: SOURCE_TAPS + 1,
        sample_rate_hz: spec.sample_rate_hz,
        trials: spec.events,
        sources: spec.sources,
        target_spread: spec.target_spread,
        distractor_spread: spec.distractor_spread,
        distractor_power: spec.distractor_power,
        noise_ratio: spec.noise_ratio,
        target_offset: spec.target_offset,
        target_slope: spec.target_slope,
    };
    trial_like.validate()?;
    if spec.events == 0 {
        return Err(Error::InvalidParameter("need at least one event".into()));
    }
    if !(spec.min_gap_s > 0.0 && spec.max_gap_s >= spec.min_gap_s) {
        return Err(Error::InvalidParameter(
            "gap range must satisfy 0 < min ≤ max".into(),
        ));
    }
    if !(spec.first_onset_s > 0.0) || !(spec.drift.abs() < 1.0) {
        return Err(Error::InvalidParameter(
            "first onset must be positive and |drift| < 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.outlier_fraction) || !(spec.outlier_scale >= 1.0) {
        return Err(Error::InvalidParameter(
            "outlier fraction in [0, 1] and scale ≥ 1 required".into(),
        ));
    }

    let mut rng = rng_for(seed, 0);
    let mixing = random_orthonormal(spec.channels, spec.sources, &mut rng)?;
    let mut onsets = Vec::with_capacity(spec.events);
    let mut t = spec.first_onset_s;
    for _ in 0..spec.events {
        onsets.push(t);
        t += rng.random_range(spec.min_gap_s..=spec.max_gap_s);
    }
    let innovation = (1.0 - spec.drift * spec.drift).sqrt();
    let mut latent = Vec::with_capacity(spec.events);
    let mut z = truncated_normal(&mut rng);
    for _ in 0..spec.events {
        latent.push(z);
        z = (spec.drift * z + innovation * truncated_normal(&mut rng)).clamp(-Z_LIMIT, Z_LIMIT);
    }
    let events: Vec<Event> = latent
        .iter()
        .zip(&onsets)
        .map(|(&z, &onset_s)| {
            let mut rt_s = 1.0 / (spec.target_offset + spec.target_slope * z);
            if rng.random::<f64>() < spec.outlier_fraction {
                rt_s *= spec.outlier_scale;
            }
            Event { onset_s, rt_s }
        })
        .collect();

    let fs = spec.sample_rate_hz;
    let total = ((onsets[spec.events - 1] + 2.0) * fs).ceil() as usize;
    // source-1 variance is piecewise constant over each pre-stimulus interval
    let mut boundaries: Vec<usize> = onsets.iter().map(|t| (t * fs).round() as usize).collect();
    boundaries.push(total);
    let filter = design_bandpass(SOURCE_BAND_HZ.0, SOURCE_BAND_HZ.1, fs, SOURCE_TAPS)?;
    let mut sources = Vec::with_capacity(spec.sources);
    let mut primary = band_limited(&mut rng, &filter, total, 1.0)?;
    let mut start = 0;
    for (n, &end) in boundaries.iter().enumerate() {
        let z = latent[n.min(spec.events - 1)];
        let scale = log_variance(z, spec.target_spread).exp().sqrt();
        primary[start..end].iter_mut().for_each(|v| *v *= scale);
        start = end;
    }
    sources.push(primary);
    for _ in 1..spec.sources {
        let mut s = band_limited(&mut rng, &filter, total, 1.0)?;
        let mut start = 0;
        for &end in &boundaries {
            let u = truncated_normal(&mut rng);
            let scale = (spec.distractor_power * log_variance(u, spec.distractor_spread).exp()).sqrt();
            s[start..end].iter_mut().for_each(|v| *v *= scale);
            start = end;
        }
        sources.push(s);
    }
    let noise_std = trial_like.noise_std();
    let data = mix(&mixing, &sources, noise_std, &mut rng);
    SessionRecord::new(spec.subject_id.clone(), fs, data, events)
}
