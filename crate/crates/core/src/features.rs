//! Band-power feature extraction and the feature CSV format.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{band_bins, mean_power_db, WelchEstimator};
use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::spatial::{apply_filter, car_filter, FilterBank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Band {
    pub fn new(name: &str, low_hz: f64, high_hz: f64) -> Self {
        Self {
            name: name.to_string(),
            low_hz,
            high_hz,
        }
    }

    pub fn theta() -> Self {
        Self::new("theta", 4.0, 8.0)
    }

    pub fn alpha() -> Self {
        Self::new("alpha", 8.0, 13.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Welch segment length in samples; one second of data when unset.
    pub segment_len: Option<usize>,
    pub overlap_fraction: f64,
    pub bands: Vec<Band>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            segment_len: None,
            overlap_fraction: 0.5,
            bands: vec![Band::theta(), Band::alpha()],
        }
    }
}

/// Spatial transform applied to each trial before band powers are taken.
#[derive(Debug, Clone, Copy)]
pub enum SpatialTransform<'a> {
    Raw,
    Car,
    Bank(&'a FilterBank),
}

/// `N × d` band powers in dB with one label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: RealMatrix,
    pub labels: Vec<String>,
    pub targets: Option<Vec<f64>>,
}

/// Extracts per-channel (or per-filter) band powers for every trial.
///
/// Columns are ordered channel-major: all bands of output 0, then all bands
/// of output 1, and so on.
pub fn extract_features(
    trials: &[&RealMatrix],
    sample_rate_hz: f64,
    transform: SpatialTransform<'_>,
    config: &FeatureConfig,
) -> Result<FeatureMatrix> {
    let first = trials
        .first()
        .ok_or_else(|| Error::InvalidParameter("no trials to extract features from".into()))?;
    let shape = first.shape();
    if let Some(bad) = trials.iter().position(|t| t.shape() != shape) {
        return Err(Error::Dimension(format!(
            "trial {bad} has shape {:?}, expected {:?}",
            trials[bad].shape(),
            shape
        )));
    }
    if config.bands.is_empty() {
        return Err(Error::InvalidParameter("no frequency bands configured".into()));
    }
    let segment_len = config
        .segment_len
        .unwrap_or_else(|| sample_rate_hz.round() as usize)
        .min(shape.1);
    let welch = WelchEstimator::new(sample_rate_hz, segment_len, config.overlap_fraction)?;
    let freqs = welch.freqs();
    let band_bins = config
        .bands
        .iter()
        .map(|b| band_bins(&freqs, b.low_hz, b.high_hz))
        .collect::<Result<Vec<_>>>()?;

    let labels = column_labels(transform, shape.0, &config.bands);
    let width = labels.len();

    let rows = trials
        .par_iter()
        .map(|trial| {
            let spatial = match transform {
                SpatialTransform::Raw => None,
                SpatialTransform::Car => Some(car_filter(trial)?),
                SpatialTransform::Bank(bank) => Some(apply_filter(bank, trial)?),
            };
            let signal = spatial.as_ref().unwrap_or(trial);
            let mut row = Vec::with_capacity(width);
            for ch in 0..signal.rows() {
                let power = welch.power(signal.row(ch))?;
                row.extend(band_bins.iter().map(|bins| mean_power_db(&power, bins)));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FeatureMatrix {
        values: RealMatrix::new(trials.len(), width, rows.concat())?,
        labels,
        targets: None,
    })
}

fn column_labels(transform: SpatialTransform<'_>, channels: usize, bands: &[Band]) -> Vec<String> {
    let outputs: Vec<String> = match transform {
        SpatialTransform::Raw => (0..channels).map(|c| format!("ch{c}")).collect(),
        SpatialTransform::Car => (0..channels).map(|c| format!("car{c}")).collect(),
        SpatialTransform::Bank(bank) => (0..bank.classes())
            .flat_map(|k| (0..bank.filters_per_class()).map(move |j| format!("k{}f{}", k + 1, j + 1)))
            .collect(),
    };
    outputs
        .iter()
        .flat_map(|o| bands.iter().map(move |b| format!("{o}_{}", b.name)))
        .collect()
}

impl FeatureMatrix {
    pub fn with_targets(mut self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.values.rows() {
            return Err(Error::Dimension(format!(
                "{} targets for {} feature rows",
                targets.len(),
                self.values.rows()
            )));
        }
        self.targets = Some(targets);
        Ok(self)
    }

    /// CSV with a header of column labels (plus `target` when present);
    /// values carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = self.labels.join(",");
        if self.targets.is_some() {
            header.push_str(",target");
        }
        writeln!(out, "{header}")?;
        for i in 0..self.values.rows() {
            let mut fields: Vec<String> = self.values.row(i).iter().map(|v| fmt_f64(*v)).collect();
            if let Some(t) = &self.targets {
                fields.push(fmt_f64(t[i]));
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
