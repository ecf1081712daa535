//! Epoching and response-time cleanup.
//!
//! The subject-level pipeline is fixed:
//!
//! 1. drop events whose pre-stimulus window overlaps the previous event's
//!    window and response (per session, previous raw event);
//! 2. clip response times at `θ = mean + 3·std` pooled over the subject;
//! 3. replace each response time by the mean over a 60 s window centred on
//!    its onset (per session, surviving events only);
//! 4. convert to response speed `1 / RT`;
//! 5. band-pass the continuous recording and epoch the surviving events.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dsp::{decimation_factor, design_bandpass, downsample, filter_trial, DEFAULT_NUM_TAPS};
use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::spatial::LabeledTrialSet;

/// Pre-stimulus window length in seconds.
pub const DEFAULT_WINDOW_S: f64 = 3.0;

/// Width of the centred response-time smoothing window in seconds.
pub const DEFAULT_SMOOTHING_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub onset_s: f64,
    pub rt_s: f64,
}

/// One continuous recording with its stimulus events.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub subject_id: String,
    pub sample_rate_hz: f64,
    /// `C × T` continuous data.
    pub data: RealMatrix,
    pub events: Vec<Event>,
}

impl SessionRecord {
    pub fn new(
        subject_id: impl Into<String>,
        sample_rate_hz: f64,
        data: RealMatrix,
        events: Vec<Event>,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = events.iter().position(|e| !(e.rt_s > 0.0 && e.rt_s.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "event {i} has non-positive response time {}",
                events[i].rt_s
            )));
        }
        if events.iter().any(|e| !e.onset_s.is_finite()) {
            return Err(Error::NonFinite("event onsets must be finite".into()));
        }
        if let Some(i) = events.windows(2).position(|w| w[1].onset_s <= w[0].onset_s) {
            return Err(Error::InvalidParameter(format!(
                "event onsets must be strictly increasing (events {i} and {})",
                i + 1
            )));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            sample_rate_hz,
            data,
            events,
        })
    }

    pub fn channels(&self) -> usize {
        self.data.rows()
    }

    pub fn duration_s(&self) -> f64 {
        self.data.cols() as f64 / self.sample_rate_hz
    }
}

/// A trial cut from a session, tagged with the event it precedes.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub event_index: usize,
    pub trial: RealMatrix,
}

/// Cuts `[t_n − window_s, t_n)` before each listed event.
///
/// Events whose window starts before the recording or ends after it are
/// skipped with a logged warning.
pub fn epoch(session: &SessionRecord, event_indices: &[usize], window_s: f64) -> Result<Vec<Epoch>> {
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epoch window must be positive, got {window_s}"
        )));
    }
    let fs = session.sample_rate_hz;
    let len = (window_s * fs).round() as usize;
    if len == 0 {
        return Err(Error::InvalidParameter(format!(
            "epoch window of {window_s} s holds no samples at {fs} Hz"
        )));
    }
    let total = session.data.cols();
    let mut out = Vec::with_capacity(event_indices.len());
    for &idx in event_indices {
        let ev = session
            .events
            .get(idx)
            .ok_or_else(|| Error::InvalidParameter(format!("event index {idx} out of range")))?;
        if ev.onset_s < window_s {
            warn!(
                "{}: skipping event {idx} at {:.3} s, onset precedes the {window_s} s window",
                session.subject_id, ev.onset_s
            );
            continue;
        }
        let start = ((ev.onset_s - window_s) * fs).round() as usize;
        if start + len > total {
            warn!(
                "{}: skipping event {idx} at {:.3} s, window runs past the recording",
                session.subject_id, ev.onset_s
            );
            continue;
        }
        let mut data = Vec::with_capacity(session.channels() * len);
        for ch in 0..session.channels() {
            data.extend_from_slice(&session.data.row(ch)[start..start + len]);
        }
        out.push(Epoch {
            event_index: idx,
            trial: RealMatrix::new(session.channels(), len, data)?,
        });
    }
    Ok(out)
}

/// Indices of events that survive overlap removal.
///
/// Event `n` is dropped when `t_n − t_{n−1} < RT_{n−1} + window_s`, where
/// `n − 1` is the previous event in the input whether or not it survived.
/// The first event is always kept.
pub fn remove_overlaps(events: &[Event], window_s: f64) -> Vec<usize> {
    let mut kept = Vec::with_capacity(events.len());
    for (n, ev) in events.iter().enumerate() {
        if n == 0 {
            kept.push(0);
            continue;
        }
        let prev = &events[n - 1];
        if ev.onset_s - prev.onset_s >= prev.rt_s + window_s {
            kept.push(n);
        }
    }
    kept
}

/// Response times after outlier clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clipped {
    pub values: Vec<f64>,
    pub theta: f64,
    pub clipped: Vec<bool>,
}

/// Clips values above `θ = mean + 3·std` (sample std, `n − 1`) to `θ`.
pub fn threshold_outliers(rts: &[f64]) -> Result<Clipped> {
    if rts.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "outlier threshold needs at least 2 response times, got {}",
            rts.len()
        )));
    }
    if let Some(bad) = rts.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "response times must be positive and finite, got {bad}"
        )));
    }
    let n = rts.len() as f64;
    let mean = rts.iter().sum::<f64>() / n;
    let var = rts.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let theta = mean + 3.0 * var.sqrt();
    let clipped: Vec<bool> = rts.iter().map(|&v| v > theta).collect();
    let values = rts.iter().map(|&v| v.min(theta)).collect();
    Ok(Clipped {
        values,
        theta,
        clipped,
    })
}

/// Mean of all values whose onsets lie within `±window_s/2` of each onset.
pub fn smooth_rts(onsets_s: &[f64], rts: &[f64], window_s: f64) -> Result<Vec<f64>> {
    if onsets_s.len() != rts.len() {
        return Err(Error::Dimension(format!(
            "{} onsets but {} response times",
            onsets_s.len(),
            rts.len()
        )));
    }
    if !(window_s >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "smoothing window must be non-negative, got {window_s}"
        )));
    }
    let half = window_s / 2.0;
    let mut out = Vec::with_capacity(rts.len());
    let mut lo = 0;
    let mut hi = 0;
    for &t in onsets_s {
        while lo < onsets_s.len() && onsets_s[lo] < t - half {
            lo += 1;
        }
        while hi < onsets_s.len() && onsets_s[hi] <= t + half {
            hi += 1;
        }
        let window = &rts[lo..hi];
        out.push(window.iter().sum::<f64>() / window.len() as f64);
    }
    Ok(out)
}

/// `1 / RT` for every response time.
pub fn to_response_speed(rts: &[f64]) -> Result<Vec<f64>> {
    rts.iter()
        .map(|&rt| {
            if rt > 0.0 && rt.is_finite() {
                Ok(1.0 / rt)
            } else {
                Err(Error::InvalidParameter(format!(
                    "response time must be positive, got {rt}"
                )))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub window_s: f64,
    pub smoothing_s: f64,
    /// Band-pass edges in Hz; `None` skips temporal filtering.
    pub bandpass: Option<(f64, f64)>,
    pub num_taps: usize,
    /// Working rate; data at an integer multiple is decimated first.
    pub target_rate_hz: Option<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            window_s: DEFAULT_WINDOW_S,
            smoothing_s: DEFAULT_SMOOTHING_S,
            bandpass: Some((1.0, 20.0)),
            num_taps: DEFAULT_NUM_TAPS,
            target_rate_hz: None,
        }
    }
}

/// Per-event outcome of the target pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub session: usize,
    pub event_index: usize,
    pub overlap_removed: bool,
    pub clipped: bool,
    pub epoched: bool,
    pub response_speed: Option<f64>,
}

/// Cleaned targets with the subject threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanTargets {
    pub subject_id: String,
    pub theta: f64,
    pub events: Vec<EventOutcome>,
}

#[derive(Debug, Clone)]
pub struct PreprocessOutput {
    pub trials: LabeledTrialSet,
    pub targets: CleanTargets,
}

/// Runs the full subject-level pipeline over all of a subject's sessions.
pub fn preprocess_subject(sessions: &[SessionRecord], config: &PreprocessConfig) -> Result<PreprocessOutput> {
    let first = sessions
        .first()
        .ok_or_else(|| Error::InvalidParameter("no sessions to preprocess".into()))?;
    let subject = first.subject_id.clone();
    if let Some(s) = sessions.iter().find(|s| s.subject_id != subject) {
        return Err(Error::InvalidParameter(format!(
            "sessions mix subjects {subject:?} and {:?}",
            s.subject_id
        )));
    }
    if sessions.iter().any(|s| s.sample_rate_hz != first.sample_rate_hz) {
        return Err(Error::InvalidParameter("sessions differ in sample rate".into()));
    }

    let kept: Vec<Vec<usize>> = sessions
        .iter()
        .map(|s| remove_overlaps(&s.events, config.window_s))
        .collect();
    let pooled: Vec<f64> = sessions
        .iter()
        .zip(&kept)
        .flat_map(|(s, k)| k.iter().map(move |&i| s.events[i].rt_s))
        .collect();
    let theta = threshold_outliers(&pooled)?.theta;

    let mut outcomes = Vec::new();
    let mut trials = Vec::new();
    let mut targets = Vec::new();
    let mut rate = first.sample_rate_hz;

    for (si, (session, kept)) in sessions.iter().zip(&kept).enumerate() {
        let raw: Vec<f64> = kept.iter().map(|&i| session.events[i].rt_s).collect();
        let clipped: Vec<f64> = raw.iter().map(|&v| v.min(theta)).collect();
        let onsets: Vec<f64> = kept.iter().map(|&i| session.events[i].onset_s).collect();
        let smoothed = smooth_rts(&onsets, &clipped, config.smoothing_s)?;
        let speeds = to_response_speed(&smoothed)?;

        let session = match config.target_rate_hz {
            Some(to) => {
                let factor = decimation_factor(session.sample_rate_hz, to)?;
                let data = downsample(&session.data, factor, session.sample_rate_hz)?;
                SessionRecord {
                    data,
                    sample_rate_hz: session.sample_rate_hz / factor as f64,
                    ..session.clone()
                }
            }
            None => session.clone(),
        };
        rate = session.sample_rate_hz;
        let session = match config.bandpass {
            Some((lo, hi)) => {
                let filter = design_bandpass(lo, hi, rate, config.num_taps)?;
                SessionRecord {
                    data: filter_trial(&filter, &session.data)?,
                    ..session
                }
            }
            None => session,
        };

        let epochs = epoch(&session, kept, config.window_s)?;
        let epoched: Vec<usize> = epochs.iter().map(|e| e.event_index).collect();
        for ep in epochs {
            let pos = kept
                .binary_search(&ep.event_index)
                .expect("epoch of a kept event");
            trials.push(ep.trial);
            targets.push(speeds[pos]);
        }
        for n in 0..session.events.len() {
            let pos = kept.binary_search(&n).ok();
            outcomes.push(EventOutcome {
                session: si,
                event_index: n,
                overlap_removed: pos.is_none(),
                clipped: pos.is_some_and(|p| raw[p] > theta),
                epoched: epoched.contains(&n),
                response_speed: pos.map(|p| speeds[p]),
            });
        }
    }

    if trials.is_empty() {
        return Err(Error::InvalidParameter(
            "no events survived overlap removal and epoching".into(),
        ));
    }
    Ok(PreprocessOutput {
        trials: LabeledTrialSet::new(trials, targets, rate)?,
        targets: CleanTargets {
            subject_id: subject,
            theta,
            events: outcomes,
        },
    })
}
