//! On-disk formats for sessions and trial sets.
//!
//! Both are a JSON manifest naming a sibling binary payload of little-endian
//! `f64`. Session payloads are channel-major (`C × T`); trial-set payloads
//! hold each trial in turn, channel-major within the trial.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::preprocess::{Event, SessionRecord};
use crate::spatial::LabeledTrialSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionManifest {
    subject_id: String,
    sample_rate_hz: f64,
    channels: usize,
    events: Vec<Event>,
    data_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrialSetManifest {
    sample_rate_hz: f64,
    channels: usize,
    samples: usize,
    trials: usize,
    targets: Vec<f64>,
    data_file: String,
}

pub fn encode_f64s(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format(format!(
            "payload of {} bytes is not a whole number of f64 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect())
}

/// Writes `bytes` to a temporary sibling and renames it into place, so a
/// failed run never leaves a truncated file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn payload_path(manifest: &Path, data_file: &str) -> PathBuf {
    manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(data_file)
}

fn manifest_stem(manifest: &Path) -> Result<String> {
    manifest
        .file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::InvalidParameter(format!("bad manifest path {}", manifest.display())))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes the payload first so a manifest never names a missing file.
fn write_blobs(manifest: &Path, blobs: Vec<FileBlob>) -> Result<()> {
    let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
    let (head, payloads) = blobs.split_first().expect("manifest blob");
    for blob in payloads {
        write_atomic(&dir.join(&blob.name), &blob.bytes)?;
    }
    write_atomic(manifest, &head.bytes)
}

/// Reads a whole file, naming it in any I/O error.
fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_manifest<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_file(path)?;
    serde_json::from_slice(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn read_payload(path: &Path, expected: Option<usize>) -> Result<Vec<f64>> {
    let bytes = read_file(path)?;
    let values = decode_f64s(&bytes)?;
    if let Some(n) = expected {
        if values.len() != n {
            return Err(Error::Format(format!(
                "{} holds {} values, expected {n}",
                path.display(),
                values.len()
            )));
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format(format!(
            "{} contains non-finite samples",
            path.display()
        )));
    }
    Ok(values)
}

/// A named file held in memory until it is written.
#[derive(Debug, Clone, PartialEq)]
pub struct FileBlob {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl FileBlob {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            bytes,
        }
    }
}

/// Encodes a session as manifest `<stem>.json` plus payload `<stem>.f64`.
pub fn encode_session(session: &SessionRecord, stem: &str) -> Result<Vec<FileBlob>> {
    let data_file = format!("{stem}.f64");
    let manifest = SessionManifest {
        subject_id: session.subject_id.clone(),
        sample_rate_hz: session.sample_rate_hz,
        channels: session.channels(),
        events: session.events.clone(),
        data_file: data_file.clone(),
    };
    Ok(vec![
        FileBlob::new(format!("{stem}.json"), json_bytes(&manifest)?),
        FileBlob::new(data_file, encode_f64s(session.data.data())),
    ])
}

/// Writes the session manifest to `path` and its payload next to it.
pub fn write_session(session: &SessionRecord, path: &Path) -> Result<()> {
    write_blobs(path, encode_session(session, &manifest_stem(path)?)?)
}

pub fn read_session(path: &Path) -> Result<SessionRecord> {
    let m: SessionManifest = read_manifest(path)?;
    if m.channels == 0 {
        return Err(Error::Format(format!("{}: zero channels", path.display())));
    }
    let values = read_payload(&payload_path(path, &m.data_file), None)?;
    if values.is_empty() || values.len() % m.channels != 0 {
        return Err(Error::Format(format!(
            "{}: {} samples do not divide into {} channels",
            m.data_file,
            values.len(),
            m.channels
        )));
    }
    let t = values.len() / m.channels;
    let data = RealMatrix::new(m.channels, t, values)?;
    SessionRecord::new(m.subject_id, m.sample_rate_hz, data, m.events)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Encodes a trial set as manifest `<stem>.json` plus payload `<stem>.f64`.
pub fn encode_trial_set(set: &LabeledTrialSet, stem: &str) -> Result<Vec<FileBlob>> {
    let data_file = format!("{stem}.f64");
    let manifest = TrialSetManifest {
        sample_rate_hz: set.sample_rate(),
        channels: set.channels(),
        samples: set.samples(),
        trials: set.len(),
        targets: set.targets().to_vec(),
        data_file: data_file.clone(),
    };
    let mut bytes = Vec::with_capacity(set.len() * set.channels() * set.samples() * 8);
    for trial in set.trials() {
        bytes.extend(encode_f64s(trial.data()));
    }
    Ok(vec![
        FileBlob::new(format!("{stem}.json"), json_bytes(&manifest)?),
        FileBlob::new(data_file, bytes),
    ])
}

pub fn write_trial_set(set: &LabeledTrialSet, path: &Path) -> Result<()> {
    write_blobs(path, encode_trial_set(set, &manifest_stem(path)?)?)
}

pub fn read_trial_set(path: &Path) -> Result<LabeledTrialSet> {
    let m: TrialSetManifest = read_manifest(path)?;
    if m.targets.len() != m.trials {
        return Err(Error::Format(format!(
            "{}: {} targets for {} trials",
            path.display(),
            m.targets.len(),
            m.trials
        )));
    }
    let per_trial = m.channels * m.samples;
    let values = read_payload(&payload_path(path, &m.data_file), Some(per_trial * m.trials))?;
    let trials = values
        .chunks_exact(per_trial.max(1))
        .map(|chunk| RealMatrix::new(m.channels, m.samples, chunk.to_vec()))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    LabeledTrialSet::new(trials, m.targets, m.sample_rate_hz)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = RealMatrix::from_fn(3, 50, |c, t| (c as f64 + 1.0) / 7.0 * t as f64);
        let events = vec![
            Event {
                onset_s: 3.5,
                rt_s: 0.41,
            },
            Event {
                onset_s: 9.25,
                rt_s: 1.0 / 3.0,
            },
        ];
        let session = SessionRecord::new("s07", 10.0, data, events).unwrap();
        let path = dir.path().join("session.json");
        write_session(&session, &path).unwrap();
        assert!(dir.path().join("session.f64").exists());
        assert_eq!(read_session(&path).unwrap(), session);
    }

    #[test]
    fn trial_set_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let trials: Vec<RealMatrix> = (0..4)
            .map(|n| RealMatrix::from_fn(2, 5, |c, t| (n * 10 + c) as f64 + t as f64 / 3.0))
            .collect();
        let set = LabeledTrialSet::new(trials, vec![0.1, 0.2, 0.3, 0.4], 256.0).unwrap();
        let path = dir.path().join("trials.json");
        write_trial_set(&set, &path).unwrap();
        let back = read_trial_set(&path).unwrap();
        assert_eq!(back.trials(), set.trials());
        assert_eq!(back.targets(), set.targets());
    }

    #[test]
    fn truncated_payload_and_unknown_keys_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let set = LabeledTrialSet::new(vec![RealMatrix::zeros(2, 4); 2], vec![1.0, 2.0], 8.0).unwrap();
        let path = dir.path().join("t.json");
        write_trial_set(&set, &path).unwrap();
        let payload = dir.path().join("t.f64");
        let bytes = fs::read(&payload).unwrap();
        fs::write(&payload, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_trial_set(&path), Err(Error::Format(_))));

        let text = fs::read_to_string(&path)
            .unwrap()
            .replacen('{', "{\"extra\": 1,", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(read_trial_set(&path), Err(Error::Format(_))));
    }

    #[test]
    fn missing_payload_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        fs::write(
            &path,
            r#"{"subject_id":"a","sample_rate_hz":10,"channels":1,"events":[],"data_file":"nope.f64"}"#,
        )
        .unwrap();
        assert!(matches!(read_session(&path), Err(Error::Io(_))));
    }
}
