//! Fuzzy classes over a continuous target.
//!
//! `K` class peaks are placed at the empirical percentiles `100·k/(K+1)`,
//! `k = 1..K`, of the training targets. Triangular classes rise from the
//! previous peak and fall to the next one; Gaussian classes use separate left
//! and right spreads chosen so that neighbouring classes cross at the midpoint
//! between their peaks with membership 0.5. The first and last classes are
//! shoulders: membership stays at 1 beyond the outermost peaks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `2·sqrt(2·ln 2)`: full width at half maximum of a unit Gaussian.
const FWHM_FACTOR: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MembershipShape {
    #[default]
    Triangular,
    Gaussian,
}

impl std::str::FromStr for MembershipShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" | "tri" => Ok(Self::Triangular),
            "gaussian" | "gauss" => Ok(Self::Gaussian),
            other => Err(Error::InvalidParameter(format!(
                "unknown membership shape {other:?}"
            ))),
        }
    }
}

/// Left and right Gaussian spreads of one class. `None` marks a shoulder side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpread {
    pub left: Option<f64>,
    pub right: Option<f64>,
}

/// `K` fuzzy classes with strictly ascending peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionDoc")]
pub struct FuzzyPartition {
    shape: MembershipShape,
    k: usize,
    peaks: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    spreads: Vec<GaussianSpread>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionDoc {
    shape: MembershipShape,
    k: usize,
    peaks: Vec<f64>,
    #[serde(default)]
    #[allow(dead_code)]
    spreads: Vec<GaussianSpread>,
}

impl TryFrom<PartitionDoc> for FuzzyPartition {
    type Error = Error;

    fn try_from(doc: PartitionDoc) -> Result<Self> {
        if doc.k != doc.peaks.len() {
            return Err(Error::Format(format!(
                "partition declares k = {} but lists {} peaks",
                doc.k,
                doc.peaks.len()
            )));
        }
        // Spreads are a pure function of the peaks; recompute rather than trust.
        FuzzyPartition::from_peaks(doc.peaks, doc.shape)
    }
}

/// Percentile levels `100·k/(K+1)` for `k = 1..K`.
pub fn percentile_points(k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 fuzzy classes, got {k}"
        )));
    }
    Ok((1..=k).map(|i| 100.0 * i as f64 / (k + 1) as f64).collect())
}

/// Linear-interpolation percentile: sort ascending, take rank
/// `h = p/100·(n−1)` and interpolate between `floor(h)` and `ceil(h)`.
pub fn empirical_percentile(values: &[f64], p: f64) -> Result<f64> {
    let sorted = sorted_finite(values)?;
    percentile_of_sorted(&sorted, p)
}

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("percentile of empty input".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "percentile input contains non-finite values".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

fn percentile_of_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "percentile must lie in [0, 100], got {p}"
        )));
    }
    let h = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Builds `k` fuzzy classes from the training targets.
pub fn build_partition(train_targets: &[f64], k: usize, shape: MembershipShape) -> Result<FuzzyPartition> {
    let levels = percentile_points(k)?;
    let sorted = sorted_finite(train_targets)?;
    let distinct = 1 + sorted.windows(2).filter(|w| w[1] > w[0]).count();
    if distinct < k {
        return Err(Error::DegeneratePartition(format!(
            "{k} classes need at least {k} distinct targets, found {distinct}"
        )));
    }
    let peaks = levels
        .iter()
        .map(|&p| percentile_of_sorted(&sorted, p))
        .collect::<Result<Vec<_>>>()?;
    FuzzyPartition::from_peaks(peaks, shape)
}

impl FuzzyPartition {
    /// Builds a partition directly from its class peaks.
    pub fn from_peaks(peaks: Vec<f64>, shape: MembershipShape) -> Result<Self> {
        let k = peaks.len();
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 fuzzy classes, got {k}"
            )));
        }
        if peaks.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("partition peaks must be finite".into()));
        }
        if let Some(i) = peaks.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::DegeneratePartition(format!(
                "peaks {} and {} coincide or descend ({} then {})",
                i + 1,
                i + 2,
                peaks[i],
                peaks[i + 1]
            )));
        }
        let spreads = match shape {
            MembershipShape::Triangular => Vec::new(),
            MembershipShape::Gaussian => (0..k)
                .map(|i| GaussianSpread {
                    left: (i > 0).then(|| (peaks[i] - peaks[i - 1]) / FWHM_FACTOR),
                    right: (i + 1 < k).then(|| (peaks[i + 1] - peaks[i]) / FWHM_FACTOR),
                })
                .collect(),
        };
        Ok(Self {
            shape,
            k,
            peaks,
            spreads,
        })
    }

    pub fn shape(&self) -> MembershipShape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn peaks(&self) -> &[f64] {
        &self.peaks
    }

    /// Gaussian spreads per class; empty for triangular partitions.
    pub fn spreads(&self) -> &[GaussianSpread] {
        &self.spreads
    }

    /// Membership of `y` in class `class` (0-based).
    pub fn membership(&self, class: usize, y: f64) -> f64 {
        match self.shape {
            MembershipShape::Triangular => self.triangular(class, y),
            MembershipShape::Gaussian => self.gaussian(class, y),
        }
    }

    /// Memberships of `y` in all classes.
    pub fn memberships(&self, y: f64) -> Vec<f64> {
        (0..self.k).map(|c| self.membership(c, y)).collect()
    }

    fn triangular(&self, class: usize, y: f64) -> f64 {
        let p = &self.peaks;
        let peak = p[class];
        if y <= peak {
            if class == 0 {
                return 1.0;
            }
            let foot = p[class - 1];
            if y <= foot {
                0.0
            } else {
                (y - foot) / (peak - foot)
            }
        } else {
            if class + 1 == self.k {
                return 1.0;
            }
            let foot = p[class + 1];
            if y >= foot {
                0.0
            } else {
                (foot - y) / (foot - peak)
            }
        }
    }

    fn gaussian(&self, class: usize, y: f64) -> f64 {
        let peak = self.peaks[class];
        let spread = &self.spreads[class];
        let sigma = if y <= peak { spread.left } else { spread.right };
        match sigma {
            None => 1.0,
            Some(s) => {
                let z = (y - peak) / s;
                (-0.5 * z * z).exp()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn percentile_levels() {
        assert_eq!(percentile_points(3).unwrap(), vec![25.0, 50.0, 75.0]);
        let two = percentile_points(2).unwrap();
        assert!(close(two[0], 100.0 / 3.0, 1e-12) && close(two[1], 200.0 / 3.0, 1e-12));
        assert_eq!(
            percentile_points(7).unwrap(),
            vec![12.5, 25.0, 37.5, 50.0, 62.5, 75.0, 87.5]
        );
        assert!(percentile_points(1).is_err());
    }

    #[test]
    fn percentile_interpolation() {
        let nine: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(empirical_percentile(&nine, 25.0).unwrap(), 3.0);
        assert_eq!(empirical_percentile(&[1.0, 2.0, 3.0, 4.0], 50.0).unwrap(), 2.5);
        assert_eq!(empirical_percentile(&[4.0, -2.0, 9.0], 0.0).unwrap(), -2.0);
        assert_eq!(empirical_percentile(&[4.0, -2.0, 9.0], 100.0).unwrap(), 9.0);
        assert!(empirical_percentile(&[], 50.0).is_err());
        assert!(empirical_percentile(&[1.0], 101.0).is_err());
    }

    #[test]
    fn triangular_partition_from_one_to_nine() {
        let targets: Vec<f64> = (1..=9).map(f64::from).collect();
        let part = build_partition(&targets, 3, MembershipShape::Triangular).unwrap();
        assert_eq!(part.peaks(), &[3.0, 5.0, 7.0]);
        let m = part.memberships(4.0);
        assert!(close(m[0], 0.5, 1e-15) && close(m[1], 0.5, 1e-15) && m[2] == 0.0);
    }

    #[test]
    fn triangular_membership_examples() {
        let part = FuzzyPartition::from_peaks(vec![3.0, 5.0, 7.0], MembershipShape::Triangular).unwrap();
        assert_eq!(part.memberships(5.0), vec![0.0, 1.0, 0.0]);
        assert_eq!(part.memberships(0.0), vec![1.0, 0.0, 0.0]);
        assert_eq!(part.memberships(6.0), vec![0.0, 0.5, 0.5]);
        assert_eq!(part.memberships(100.0), vec![0.0, 0.0, 1.0]);
        for (k, &p) in part.peaks().iter().enumerate() {
            assert_eq!(part.membership(k, p), 1.0);
        }
    }

    #[test]
    fn gaussian_classes_cross_at_half() {
        let part = FuzzyPartition::from_peaks(vec![1.0, 2.0, 4.5, 5.0], MembershipShape::Gaussian).unwrap();
        for k in 0..3 {
            let mid = 0.5 * (part.peaks()[k] + part.peaks()[k + 1]);
            assert!(close(part.membership(k, mid), 0.5, 1e-12));
            assert!(close(part.membership(k + 1, mid), 0.5, 1e-12));
        }
        for (k, &p) in part.peaks().iter().enumerate() {
            assert_eq!(part.membership(k, p), 1.0);
        }
        assert_eq!(part.membership(0, -50.0), 1.0);
        assert_eq!(part.membership(3, 50.0), 1.0);
        // asymmetric: class 1 has a narrow left side and a wide right side
        let s = part.spreads()[1];
        assert!(s.left.unwrap() < s.right.unwrap());
    }

    #[test]
    fn coincident_peaks_rejected() {
        let heavy_ties = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 3.0];
        assert!(matches!(
            build_partition(&heavy_ties, 3, MembershipShape::Triangular),
            Err(Error::DegeneratePartition(_))
        ));
        assert!(matches!(
            build_partition(&[1.0, 1.0, 2.0], 3, MembershipShape::Triangular),
            Err(Error::DegeneratePartition(_))
        ));
    }

    #[test]
    fn crisp_binary_targets_give_crisp_memberships() {
        let targets: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        let part = build_partition(&targets, 2, MembershipShape::Triangular).unwrap();
        assert_eq!(part.peaks(), &[0.0, 1.0]);
        assert_eq!(part.memberships(0.0), vec![1.0, 0.0]);
        assert_eq!(part.memberships(1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let part = FuzzyPartition::from_peaks(vec![0.5, 1.0, 1.75], MembershipShape::Gaussian).unwrap();
        let text = serde_json::to_string(&part).unwrap();
        let back: FuzzyPartition = serde_json::from_str(&text).unwrap();
        assert_eq!(part, back);
        let bad = r#"{"shape":"triangular","k":2,"peaks":[2.0,1.0]}"#;
        assert!(serde_json::from_str::<FuzzyPartition>(bad).is_err());
        let wrong_k = r#"{"shape":"triangular","k":3,"peaks":[1.0,2.0]}"#;
        assert!(serde_json::from_str::<FuzzyPartition>(wrong_k).is_err());
    }
}
