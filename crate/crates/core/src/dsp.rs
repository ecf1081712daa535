//! Temporal processing: windowed-sinc FIR design, zero-phase filtering,
//! integer-factor decimation, Welch PSD estimation and band power.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;

/// Power floor applied before converting to decibels.
pub const POWER_FLOOR: f64 = 1e-20;

/// Default band-pass length at 256 Hz.
pub const DEFAULT_NUM_TAPS: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hamming,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hamming => {
                if n == 1 {
                    return vec![1.0];
                }
                let denom = (n - 1) as f64;
                (0..n)
                    .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FirBand {
    BandPass { low_hz: f64, high_hz: f64 },
    LowPass { cutoff_hz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirDesign {
    pub band: FirBand,
    pub sample_rate_hz: f64,
    pub num_taps: usize,
    pub window: Window,
}

/// Linear-phase FIR filter with an odd number of symmetric taps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    taps: Vec<f64>,
    design: FirDesign,
}

fn check_taps(num_taps: usize) -> Result<()> {
    if num_taps < 3 || num_taps.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "tap count must be odd and at least 3, got {num_taps}"
        )));
    }
    Ok(())
}

/// Unit-DC-gain windowed-sinc low-pass.
fn windowed_sinc(cutoff_hz: f64, sample_rate_hz: f64, window: &[f64]) -> Vec<f64> {
    let n = window.len();
    let fc = cutoff_hz / sample_rate_hz;
    let mid = (n - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = window
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let m = i as f64 - mid;
            let sinc = if m == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * m).sin() / (std::f64::consts::PI * m)
            };
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Hamming-windowed sinc band-pass, scaled to unit gain at the band centre.
pub fn design_bandpass(low_hz: f64, high_hz: f64, sample_rate_hz: f64, num_taps: usize) -> Result<FirFilter> {
    check_taps(num_taps)?;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < sample_rate_hz / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "band-pass edges must satisfy 0 < low < high < fs/2, got [{low_hz}, {high_hz}] at {sample_rate_hz} Hz"
        )));
    }
    let window = Window::Hamming.coefficients(num_taps);
    let upper = windowed_sinc(high_hz, sample_rate_hz, &window);
    let lower = windowed_sinc(low_hz, sample_rate_hz, &window);
    let mut taps: Vec<f64> = upper.iter().zip(&lower).map(|(u, l)| u - l).collect();
    let design = FirDesign {
        band: FirBand::BandPass { low_hz, high_hz },
        sample_rate_hz,
        num_taps,
        window: Window::Hamming,
    };
    let centre = magnitude_response(&taps, 0.5 * (low_hz + high_hz), sample_rate_hz);
    taps.iter_mut().for_each(|t| *t /= centre);
    symmetrize_taps(&mut taps);
    Ok(FirFilter { taps, design })
}

/// Hamming-windowed sinc low-pass with unit DC gain.
pub fn design_lowpass(cutoff_hz: f64, sample_rate_hz: f64, num_taps: usize) -> Result<FirFilter> {
    check_taps(num_taps)?;
    if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "low-pass cutoff must lie in (0, fs/2), got {cutoff_hz} at {sample_rate_hz} Hz"
        )));
    }
    let mut taps = windowed_sinc(cutoff_hz, sample_rate_hz, &Window::Hamming.coefficients(num_taps));
    symmetrize_taps(&mut taps);
    Ok(FirFilter {
        taps,
        design: FirDesign {
            band: FirBand::LowPass { cutoff_hz },
            sample_rate_hz,
            num_taps,
            window: Window::Hamming,
        },
    })
}

fn symmetrize_taps(taps: &mut [f64]) {
    let n = taps.len();
    for i in 0..n / 2 {
        let v = 0.5 * (taps[i] + taps[n - 1 - i]);
        taps[i] = v;
        taps[n - 1 - i] = v;
    }
}

fn magnitude_response(taps: &[f64], freq_hz: f64, sample_rate_hz: f64) -> f64 {
    let omega = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz;
    let (re, im) = taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, h)| {
        let phase = omega * n as f64;
        (re + h * phase.cos(), im - h * phase.sin())
    });
    re.hypot(im)
}

impl FirFilter {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn design(&self) -> &FirDesign {
        &self.design
    }

    pub fn num_taps(&self) -> usize {
        self.taps.len()
    }

    /// Magnitude of the single-pass frequency response at `freq_hz`.
    pub fn gain(&self, freq_hz: f64) -> f64 {
        magnitude_response(&self.taps, freq_hz, self.design.sample_rate_hz)
    }

    pub fn gain_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.gain(freq_hz).max(POWER_FLOOR).log10()
    }

    /// Zero-phase filtering of one channel.
    /// Samples at each end of a [`filtfilt`](Self::filtfilt) output that
    /// depend on the edge padding.
    pub fn edge_len(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        if n <= self.taps.len() {
            return Err(Error::InvalidParameter(format!(
                "signal of {n} samples is not longer than the {}-tap filter",
                self.taps.len()
            )));
        }
        let pad = (3 * self.taps.len()).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        // mirror about the end points
        ext.extend((1..=pad).rev().map(|i| x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| x[n - 1 - i]));

        let mut y = convolve_causal(&self.taps, &ext);
        y.reverse();
        let mut y = convolve_causal(&self.taps, &y);
        y.reverse();
        Ok(y[pad..pad + n].to_vec())
    }
}

fn convolve_causal(taps: &[f64], x: &[f64]) -> Vec<f64> {
    if taps.len() * x.len() > DIRECT_CONVOLUTION_LIMIT {
        return convolve_causal_fft(taps, x);
    }
    let m = taps.len();
    let mut y = vec![0.0; x.len()];
    for (i, yi) in y.iter_mut().enumerate() {
        let start = (i + 1).saturating_sub(m);
        let mut acc = 0.0;
        for (k, xv) in x[start..=i].iter().rev().enumerate() {
            acc += taps[k] * xv;
        }
        *yi = acc;
    }
    y
}

/// Above this many multiply-adds the FFT path is used.
const DIRECT_CONVOLUTION_LIMIT: usize = 4_000_000;

/// Overlap-add convolution truncated to `x.len()` outputs.
fn convolve_causal_fft(taps: &[f64], x: &[f64]) -> Vec<f64> {
    let m = taps.len();
    let size = (4 * m).next_power_of_two();
    let block = size - m + 1;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut h: Vec<Complex<f64>> = taps.iter().map(|&t| Complex::new(t, 0.0)).collect();
    h.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut h);

    let mut y = vec![0.0; x.len() + m - 1];
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    let scale = 1.0 / size as f64;
    for (b, chunk) in x.chunks(block).enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (dst, &v) in buf.iter_mut().zip(chunk) {
            dst.re = v;
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&h).for_each(|(a, hv)| *a *= hv);
        inv.process(&mut buf);
        let offset = b * block;
        for (i, c) in buf.iter().take(chunk.len() + m - 1).enumerate() {
            y[offset + i] += c.re * scale;
        }
    }
    y.truncate(x.len());
    y
}

/// Zero-phase forward-backward filtering of every channel of a trial.
///
/// Edge transients leave a small residual offset, so each filtered channel
/// is re-centred afterwards.
pub fn filter_trial(filter: &FirFilter, trial: &RealMatrix) -> Result<RealMatrix> {
    let (c, s) = trial.shape();
    let mut data = Vec::with_capacity(c * s);
    for ch in 0..c {
        let mut y = filter.filtfilt(trial.row(ch))?;
        let mean = y.iter().sum::<f64>() / s as f64;
        y.iter_mut().for_each(|v| *v -= mean);
        data.extend(y);
    }
    RealMatrix::new(c, s, data)
}

/// Integer decimation factor between two rates.
pub fn decimation_factor(from_hz: f64, to_hz: f64) -> Result<usize> {
    if !(from_hz > 0.0 && to_hz > 0.0 && to_hz <= from_hz) {
        return Err(Error::InvalidParameter(format!(
            "cannot downsample from {from_hz} Hz to {to_hz} Hz"
        )));
    }
    let ratio = from_hz / to_hz;
    let factor = ratio.round();
    if (ratio - factor).abs() > 1e-9 * ratio {
        return Err(Error::InvalidParameter(format!(
            "{from_hz} Hz to {to_hz} Hz is a non-integer factor {ratio}"
        )));
    }
    Ok(factor as usize)
}

/// Anti-aliases at 0.45 × the new Nyquist frequency, then keeps every
/// `factor`-th sample.
pub fn downsample(trial: &RealMatrix, factor: usize, sample_rate_hz: f64) -> Result<RealMatrix> {
    if factor == 0 {
        return Err(Error::InvalidParameter("downsampling factor must be ≥ 1".into()));
    }
    if factor == 1 {
        return Ok(trial.clone());
    }
    let (c, s) = trial.shape();
    let new_nyquist = sample_rate_hz / (2.0 * factor as f64);
    let mut taps = 20 * factor + 1;
    if taps >= s {
        taps = if s % 2 == 0 { s - 1 } else { s - 2 };
    }
    let lowpass = design_lowpass(0.45 * new_nyquist, sample_rate_hz, taps)?;
    let kept = s.div_ceil(factor);
    let mut data = Vec::with_capacity(c * kept);
    for ch in 0..c {
        let smooth = lowpass.filtfilt(trial.row(ch))?;
        data.extend(smooth.into_iter().step_by(factor));
    }
    RealMatrix::new(c, kept, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchParams {
    pub segment_len: usize,
    pub overlap_fraction: f64,
    pub window: Window,
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub params: WelchParams,
}

/// Reusable Welch estimator for a fixed rate and segment length.
pub struct WelchEstimator {
    params: WelchParams,
    sample_rate_hz: f64,
    window: Vec<f64>,
    step: usize,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for WelchEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WelchEstimator")
            .field("params", &self.params)
            .field("sample_rate_hz", &self.sample_rate_hz)
            .finish()
    }
}

impl WelchEstimator {
    pub fn new(sample_rate_hz: f64, segment_len: usize, overlap_fraction: f64) -> Result<Self> {
        if segment_len < 2 {
            return Err(Error::InvalidParameter(format!(
                "segment length must be at least 2, got {segment_len}"
            )));
        }
        if !(0.0..1.0).contains(&overlap_fraction) {
            return Err(Error::InvalidParameter(format!(
                "overlap must lie in [0, 1), got {overlap_fraction}"
            )));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        let overlap = (overlap_fraction * segment_len as f64).round() as usize;
        let step = (segment_len - overlap).max(1);
        let window = Window::Hamming.coefficients(segment_len);
        let power: f64 = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(segment_len);
        Ok(Self {
            params: WelchParams {
                segment_len,
                overlap_fraction,
                window: Window::Hamming,
            },
            sample_rate_hz,
            window,
            step,
            scale: 1.0 / (sample_rate_hz * power),
            fft,
        })
    }

    pub fn params(&self) -> WelchParams {
        self.params
    }

    pub fn num_bins(&self) -> usize {
        self.params.segment_len / 2 + 1
    }

    pub fn freqs(&self) -> Vec<f64> {
        let n = self.params.segment_len as f64;
        (0..self.num_bins())
            .map(|k| k as f64 * self.sample_rate_hz / n)
            .collect()
    }

    /// Averaged one-sided periodogram of `signal`.
    pub fn power(&self, signal: &[f64]) -> Result<Vec<f64>> {
        let n = self.params.segment_len;
        if signal.len() < n {
            return Err(Error::InvalidParameter(format!(
                "signal of {} samples is shorter than the {n}-sample segment",
                signal.len()
            )));
        }
        let bins = self.num_bins();
        let mut acc = vec![0.0; bins];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let segments = (signal.len() - n) / self.step + 1;
        for seg in 0..segments {
            let start = seg * self.step;
            for (b, (x, w)) in buf
                .iter_mut()
                .zip(signal[start..start + n].iter().zip(&self.window))
            {
                *b = Complex::new(x * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
        }
        let norm = self.scale / segments as f64;
        for (k, a) in acc.iter_mut().enumerate() {
            let one_sided = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            *a *= norm * one_sided;
        }
        Ok(acc)
    }

    pub fn estimate(&self, signal: &[f64]) -> Result<PsdEstimate> {
        Ok(PsdEstimate {
            freqs: self.freqs(),
            power: self.power(signal)?,
            params: self.params,
        })
    }
}

/// Welch PSD with Hamming-windowed segments.
pub fn welch_psd(
    signal: &[f64],
    sample_rate_hz: f64,
    segment_len: usize,
    overlap_fraction: f64,
) -> Result<PsdEstimate> {
    WelchEstimator::new(sample_rate_hz, segment_len, overlap_fraction)?.estimate(signal)
}

/// Indices of bins with `low ≤ f ≤ high`.
pub(crate) fn band_bins(freqs: &[f64], low_hz: f64, high_hz: f64) -> Result<Vec<usize>> {
    let nyquist = freqs.last().copied().unwrap_or(0.0);
    if !(low_hz >= 0.0 && low_hz <= high_hz && high_hz <= nyquist) {
        return Err(Error::InvalidParameter(format!(
            "band [{low_hz}, {high_hz}] Hz outside spectrum [0, {nyquist}] Hz"
        )));
    }
    let bins: Vec<usize> = freqs
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= low_hz && f <= high_hz)
        .map(|(i, _)| i)
        .collect();
    if bins.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no frequency bins inside [{low_hz}, {high_hz}] Hz"
        )));
    }
    Ok(bins)
}

pub(crate) fn mean_power_db(power: &[f64], bins: &[usize]) -> f64 {
    let mean = bins.iter().map(|&i| power[i]).sum::<f64>() / bins.len() as f64;
    10.0 * mean.max(POWER_FLOOR).log10()
}

/// `10·log10` of the mean PSD over bins in `[low_hz, high_hz]`.
pub fn band_power_db(psd: &PsdEstimate, low_hz: f64, high_hz: f64) -> Result<f64> {
    let bins = band_bins(&psd.freqs, low_hz, high_hz)?;
    Ok(mean_power_db(&psd.power, &bins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const FS: f64 = 256.0;

    fn sine(freq: f64, amp: f64, n: usize, fs: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    /// Direct DFT magnitude of the taps, independent of `FirFilter::gain`.
    fn dft_gain(taps: &[f64], f: f64, fs: f64) -> f64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (n, h) in taps.iter().enumerate() {
            let ph = -2.0 * std::f64::consts::PI * f * n as f64 / fs;
            re += h * ph.cos();
            im += h * ph.sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn bandpass_taps_are_symmetric() {
        let f = design_bandpass(1.0, 20.0, FS, 255).unwrap();
        let t = f.taps();
        for i in 0..t.len() {
            assert!((t[i] - t[t.len() - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn bandpass_centre_and_dc_gain() {
        let f = design_bandpass(1.0, 20.0, FS, 255).unwrap();
        let centre = 20.0 * dft_gain(f.taps(), 10.5, FS).log10();
        assert!(centre.abs() <= 1.0, "centre gain {centre} dB");
        let dc = 20.0 * dft_gain(f.taps(), 0.0, FS).max(1e-300).log10();
        assert!(dc <= -40.0, "dc gain {dc} dB");
    }

    #[test]
    fn bandpass_passband_ripple_and_upper_stopband() {
        let f = design_bandpass(1.0, 20.0, FS, 255).unwrap();
        let mut freq = 3.0;
        while freq <= 18.0 {
            let g = 20.0 * dft_gain(f.taps(), freq, FS).log10();
            assert!(g.abs() <= 1.0, "ripple {g} dB at {freq} Hz");
            freq += 0.25;
        }
        // high + 0.5·(high − low)
        let stop = 20.0 * dft_gain(f.taps(), 29.5, FS).log10();
        assert!(stop <= -40.0, "stopband {stop} dB");
    }

    #[test]
    fn bandpass_lower_stopband_when_transition_fits() {
        // 0.5·low is only reachable when the transition band (≈3.3·fs/N) fits
        // below the lower edge; 8–13 Hz leaves 4 Hz.
        let f = design_bandpass(8.0, 13.0, FS, 255).unwrap();
        assert!(20.0 * dft_gain(f.taps(), 4.0, FS).log10() <= -40.0);
        assert!(20.0 * dft_gain(f.taps(), 15.5, FS).log10() <= -40.0);
    }

    #[test]
    fn bandpass_rejects_bad_edges() {
        assert!(design_bandpass(0.0, 20.0, FS, 255).is_err());
        assert!(design_bandpass(20.0, 10.0, FS, 255).is_err());
        assert!(design_bandpass(1.0, 128.0, FS, 255).is_err());
        assert!(design_bandpass(1.0, 20.0, FS, 254).is_err());
        assert!(design_bandpass(1.0, 20.0, FS, 1).is_err());
    }

    #[test]
    fn in_band_sine_passes() {
        let f = design_bandpass(1.0, 20.0, FS, 255).unwrap();
        let x = sine(10.0, 1.0, 768, FS);
        let y = f.filtfilt(&x).unwrap();
        assert!((rms(&y) / rms(&x) - 1.0).abs() < 0.1);
    }

    #[test]
    fn out_of_band_sine_is_removed() {
        let f = design_bandpass(1.0, 20.0, FS, 255).unwrap();
        let x = sine(40.0, 1.0, 768, FS);
        let y = f.filtfilt(&x).unwrap();
        // outside the edges the output no longer depends on the padding
        let edge = f.edge_len();
        let steady = &y[edge..768 - edge];
        assert!(rms(steady) <= 0.01 * rms(&x));
        assert!(20.0 * (rms(steady) / rms(&x)).log10() <= -40.0);
    }

    #[test]
    fn dc_offset_is_removed() {
        let f = design_bandpass(1.0, 20.0, FS, 255).unwrap();
        let x: Vec<f64> = sine(10.0, 1.0, 768, FS).iter().map(|v| v + 5.0).collect();
        let trial = RealMatrix::new(1, 768, x).unwrap();
        let y = filter_trial(&f, &trial).unwrap();
        let mean = y.row(0).iter().sum::<f64>() / 768.0;
        assert!(mean.abs() <= 1e-3 * rms(y.row(0)), "mean {mean}");
    }

    #[test]
    fn filtering_is_zero_phase() {
        let f = design_bandpass(1.0, 20.0, FS, 255).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise: Vec<f64> = (0..2048).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = f.filtfilt(&noise).unwrap();
        let y = f.filtfilt(&x).unwrap();
        let mut best = (0i64, f64::MIN);
        for lag in -20i64..=20 {
            let mut acc = 0.0;
            for i in 100..1900 {
                acc += x[i] * y[(i as i64 + lag) as usize];
            }
            if acc > best.1 {
                best = (lag, acc);
            }
        }
        assert_eq!(best.0, 0);
    }

    #[test]
    fn short_trial_rejected() {
        let f = design_bandpass(1.0, 20.0, FS, 255).unwrap();
        assert!(filter_trial(&f, &RealMatrix::zeros(2, 200)).is_err());
    }

    #[test]
    fn downsample_identity_and_sine() {
        let x = RealMatrix::new(1, 512, sine(4.0, 1.0, 512, FS)).unwrap();
        assert_eq!(downsample(&x, 1, FS).unwrap(), x);
        let y = downsample(&x, 2, FS).unwrap();
        assert_eq!(y.cols(), 256);
        let expected = sine(4.0, 1.0, 256, FS / 2.0);
        let peak = y.row(0)[32..224].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 0.05, "peak {peak}");
        for (a, b) in y.row(0)[32..224].iter().zip(&expected[32..224]) {
            assert!((a - b).abs() < 0.05);
        }
    }

    #[test]
    fn downsample_suppresses_aliases() {
        // impulse train plus a tone above the new Nyquist frequency; both are
        // periodic over the analysed span, so the DFT sees no leakage
        let n = 1024;
        let mut x = sine(100.0, 1.0, n, FS);
        for i in (0..n).step_by(64) {
            x[i] += 1.0;
        }
        let trial = RealMatrix::new(1, n, x).unwrap();
        let lowpass = design_lowpass(0.45 * 64.0, FS, 41).unwrap();
        let smooth = lowpass.filtfilt(trial.row(0)).unwrap();
        let span = &smooth[128..896];
        // bins of 1/3 Hz; the new Nyquist (64 Hz) is bin 192
        let total: f64 = (1..384).map(|k| dft_power(span, k)).sum();
        let high: f64 = (192..384).map(|k| dft_power(span, k)).sum();
        assert!(high / total < 1e-3, "residual fraction {}", high / total);

        let y = downsample(&trial, 2, FS).unwrap();
        // 100 Hz aliases to 28 Hz at 128 Hz: bin 84 of a 3 s span
        let alias = dft_power(&y.row(0)[64..448], 84);
        let tone_in = dft_power(&sine(100.0, 1.0, 768, FS), 300);
        assert!(alias < 1e-3 * tone_in, "alias {alias} vs {tone_in}");
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let taps: Vec<f64> = (0..63).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let direct = {
            let mut y = vec![0.0; x.len()];
            for i in 0..x.len() {
                for k in 0..taps.len().min(i + 1) {
                    y[i] += taps[k] * x[i - k];
                }
            }
            y
        };
        let fast = convolve_causal_fft(&taps, &x);
        let err = direct
            .iter()
            .zip(&fast)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    fn dft_power(x: &[f64], k: usize) -> f64 {
        let n = x.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let ph = -2.0 * std::f64::consts::PI * k as f64 * i as f64 / n;
            re += v * ph.cos();
            im += v * ph.sin();
        }
        re * re + im * im
    }

    #[test]
    fn decimation_factor_requires_integer_ratio() {
        assert_eq!(decimation_factor(512.0, 256.0).unwrap(), 2);
        assert!(decimation_factor(1000.0, 256.0).is_err());
    }

    #[test]
    fn white_noise_welch_integrates_to_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let est = WelchEstimator::new(FS, 256, 0.5).unwrap();
        let df = FS / 256.0;
        let mut mean = 0.0;
        for _ in 0..50 {
            let x: Vec<f64> = (0..2048).map(|_| StandardNormal.sample(&mut rng)).collect();
            mean += est.power(&x).unwrap().iter().sum::<f64>() * df / 50.0;
        }
        assert!((mean - 1.0).abs() < 0.15, "integral {mean}");
    }

    #[test]
    fn sine_peak_bin() {
        let psd = welch_psd(&sine(10.0, 1.0, 768, FS), FS, 256, 0.5).unwrap();
        let (argmax, _) = psd
            .power
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &p)| if p > b.1 { (i, p) } else { b });
        assert!((psd.freqs[argmax] - 10.0).abs() <= 1.0);
        assert!(psd.freqs.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*psd.freqs.last().unwrap(), 128.0);
    }

    #[test]
    fn zero_signal_and_short_signal() {
        let psd = welch_psd(&[0.0; 512], FS, 256, 0.5).unwrap();
        assert!(psd.power.iter().all(|&p| p == 0.0));
        assert!(welch_psd(&[0.0; 100], FS, 256, 0.5).is_err());
        assert!(welch_psd(&[0.0; 512], FS, 256, 1.0).is_err());
    }

    #[test]
    fn band_power_examples() {
        let flat = PsdEstimate {
            freqs: (0..=128).map(f64::from).collect(),
            power: vec![1.0; 129],
            params: WelchParams {
                segment_len: 256,
                overlap_fraction: 0.5,
                window: Window::Hamming,
            },
        };
        assert_eq!(band_power_db(&flat, 4.0, 8.0).unwrap(), 0.0);
        assert!(band_power_db(&flat, 4.2, 4.8).is_err());
        assert!(band_power_db(&flat, 100.0, 200.0).is_err());

        let x = sine(10.0, 1.0, 768, FS);
        let psd = welch_psd(&x, FS, 256, 0.5).unwrap();
        let alpha = band_power_db(&psd, 8.0, 13.0).unwrap();
        let theta = band_power_db(&psd, 4.0, 8.0).unwrap();
        assert!(alpha - theta >= 10.0);

        let louder: Vec<f64> = x.iter().map(|v| 10.0 * v).collect();
        let psd10 = welch_psd(&louder, FS, 256, 0.5).unwrap();
        for (lo, hi) in [(4.0, 8.0), (8.0, 13.0), (20.0, 40.0)] {
            let d = band_power_db(&psd10, lo, hi).unwrap() - band_power_db(&psd, lo, hi).unwrap();
            assert!((d - 20.0).abs() < 0.1);
        }
        let zero = welch_psd(&[0.0; 512], FS, 256, 0.5).unwrap();
        assert_eq!(band_power_db(&zero, 4.0, 8.0).unwrap(), -200.0);
    }

    #[test]
    fn doubling_amplitude_adds_six_db() {
        let psd1 = welch_psd(&sine(10.0, 1.0, 768, FS), FS, 256, 0.5).unwrap();
        let psd2 = welch_psd(&sine(10.0, 2.0, 768, FS), FS, 256, 0.5).unwrap();
        let d = band_power_db(&psd2, 8.0, 13.0).unwrap() - band_power_db(&psd1, 8.0, 13.0).unwrap();
        assert!((d - 6.02).abs() <= 0.2);
    }
}
