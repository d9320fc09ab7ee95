//! Short-time acoustic features: 20 per frame (time-domain, spectral-shape,
//! and flux measures) over 25 ms frames with 50% overlap by default, plus the
//! compact 3-column stimulus representation (PC1, RMS, broadband flux).

use crate::error::{Error, Result};
use crate::signal;
use crate::timeseries::TimeSeriesMatrix;
use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameWindow {
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameSpec {
    pub frame_ms: f64,
    pub hop_fraction: f64,
    pub window: FrameWindow,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            frame_ms: 25.0,
            hop_fraction: 0.5,
            window: FrameWindow::Rectangular,
        }
    }
}

pub const FEATURE_COUNT: usize = 20;
pub const SUB_BANDS: usize = 10;
/// Lower edge of the sub-band flux bands; the upper edge is Nyquist.
pub const SUB_BAND_LOW_HZ: f64 = 50.0;

pub fn feature_labels() -> Vec<String> {
    let mut labels: Vec<String> = [
        "zcr",
        "centroid",
        "high_low_ratio",
        "spread",
        "rolloff",
        "entropy",
        "flatness",
        "roughness",
        "rms",
        "flux",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for b in 1..=SUB_BANDS {
        labels.push(format!("subflux_{b}"));
    }
    labels
}

/// Index of the RMS column in the feature order.
pub const RMS_COL: usize = 8;
/// Index of the broadband flux column.
pub const FLUX_COL: usize = 9;

/// Extracts the 20 frame-level features. The output frame rate is
/// `1/(frame_ms * hop_fraction)`; 80 Hz at the defaults.
pub fn extract_features(audio: &[f64], fs: f64, spec: &FrameSpec) -> Result<TimeSeriesMatrix> {
    if !(spec.hop_fraction > 0.0 && spec.hop_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "hop fraction {} outside (0, 1]",
            spec.hop_fraction
        )));
    }
    let frame_len = (spec.frame_ms / 1000.0 * fs).round() as usize;
    if frame_len < 4 {
        return Err(Error::Config(format!(
            "frame of {frame_len} samples too short at fs {fs}"
        )));
    }
    if audio.len() < frame_len {
        return Err(Error::Input(format!(
            "signal of {} samples shorter than one {frame_len}-sample frame",
            audio.len()
        )));
    }
    let nyquist = fs / 2.0;
    if nyquist <= SUB_BAND_LOW_HZ {
        return Err(Error::Config(format!(
            "sampling rate {fs} Hz leaves no room above the {SUB_BAND_LOW_HZ} Hz sub-band floor"
        )));
    }
    let hop = ((frame_len as f64) * spec.hop_fraction).round().max(1.0) as usize;
    let n_frames = (audio.len() - frame_len) / hop + 1;

    let n_bins = frame_len / 2 + 1;
    let bin_hz = fs / frame_len as f64;
    // geometric sub-band edges from the floor to Nyquist
    let band_ratio = (nyquist / SUB_BAND_LOW_HZ).powf(1.0 / SUB_BANDS as f64);
    let band_of = |freq: f64| -> Option<usize> {
        if freq < SUB_BAND_LOW_HZ {
            return None;
        }
        let b = (freq / SUB_BAND_LOW_HZ).ln() / band_ratio.ln();
        Some((b.floor() as usize).min(SUB_BANDS - 1))
    };

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(frame_len);
    let window: Vec<f64> = match spec.window {
        FrameWindow::Rectangular => vec![1.0; frame_len],
        FrameWindow::Hann => (0..frame_len)
            .map(|i| {
                0.5 * (1.0
                    - (2.0 * std::f64::consts::PI * i as f64 / (frame_len - 1) as f64).cos())
            })
            .collect(),
    };

    let mut out = Array2::zeros((n_frames, FEATURE_COUNT));
    let mut prev_norm_mag: Option<Vec<f64>> = None;
    for t in 0..n_frames {
        let frame = &audio[t * hop..t * hop + frame_len];

        // time-domain features on the raw frame
        let zcr = frame
            .windows(2)
            .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
            .count() as f64;
        let rms = (frame.iter().map(|v| v * v).sum::<f64>() / frame_len as f64).sqrt();

        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&window)
            .map(|(&v, &w)| Complex::new(v * w, 0.0))
            .collect();
        fft.process(&mut buf);
        let mag: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm()).collect();
        let total: f64 = mag.iter().sum();
        let norm_mag: Vec<f64> = if total > 0.0 {
            mag.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; n_bins]
        };

        // spectral shape
        let centroid = if total > 0.0 {
            mag.iter()
                .enumerate()
                .map(|(k, v)| k as f64 * bin_hz * v)
                .sum::<f64>()
                / total
        } else {
            0.0
        };
        let spread = if total > 0.0 {
            (mag.iter()
                .enumerate()
                .map(|(k, v)| {
                    let d = k as f64 * bin_hz - centroid;
                    d * d * v
                })
                .sum::<f64>()
                / total)
                .sqrt()
        } else {
            0.0
        };
        let max_mag = mag.iter().cloned().fold(0.0_f64, f64::max);
        let min_mag = mag.iter().cloned().fold(f64::INFINITY, f64::min);
        let high_low = max_mag / min_mag.max(1e-12);
        let rolloff = {
            let mut acc = 0.0;
            let mut hz = 0.0;
            for (k, v) in mag.iter().enumerate() {
                acc += v;
                if acc >= 0.85 * total {
                    hz = k as f64 * bin_hz;
                    break;
                }
            }
            hz
        };
        let entropy = if total > 0.0 {
            let h: f64 = norm_mag
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum();
            h / (n_bins as f64).ln()
        } else {
            0.0
        };
        let flatness = {
            // smooth the spectrum over a few bins first: the raw per-bin
            // magnitudes of a noise frame scatter enough (Rayleigh) to pull
            // the geometric mean well below the arithmetic mean even for a
            // perfectly flat spectrum
            let half = 4usize;
            let smoothed: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let lo = k.saturating_sub(half);
                    let hi = (k + half + 1).min(n_bins);
                    mag[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
                })
                .collect();
            let floored: Vec<f64> = smoothed.iter().map(|&v| v.max(1e-12)).collect();
            let log_mean = floored.iter().map(|v| v.ln()).sum::<f64>() / n_bins as f64;
            let arith = floored.iter().sum::<f64>() / n_bins as f64;
            log_mean.exp() / arith
        };
        let roughness = {
            // local maxima above 10% of the frame's peak magnitude
            let thresh = 0.1 * max_mag;
            let peaks: Vec<f64> = (1..n_bins.saturating_sub(1))
                .filter(|&k| mag[k] > mag[k - 1] && mag[k] > mag[k + 1] && mag[k] >= thresh)
                .map(|k| k as f64 * bin_hz)
                .collect();
            if peaks.len() < 2 {
                0.0
            } else {
                let mut sum = 0.0;
                let mut n = 0usize;
                for i in 0..peaks.len() {
                    for j in i + 1..peaks.len() {
                        sum += (peaks[j] - peaks[i]).abs();
                        n += 1;
                    }
                }
                sum / n as f64
            }
        };

        // flux features against the previous frame's normalized spectrum;
        // defined as 0 on the first frame
        let (flux, band_flux) = match &prev_norm_mag {
            None => (0.0, vec![0.0; SUB_BANDS]),
            Some(prev) => {
                let mut sq_sum = 0.0;
                let mut bands = vec![0.0; SUB_BANDS];
                for k in 0..n_bins {
                    let d = prev[k] - norm_mag[k];
                    sq_sum += d * d;
                    if let Some(b) = band_of(k as f64 * bin_hz) {
                        bands[b] += d * d;
                    }
                }
                (sq_sum.sqrt(), bands)
            }
        };
        prev_norm_mag = Some(norm_mag);

        let row = [
            zcr, centroid, high_low, spread, rolloff, entropy, flatness, roughness, rms, flux,
        ];
        for (j, v) in row.iter().enumerate() {
            out[[t, j]] = *v;
        }
        for (b, v) in band_flux.iter().enumerate() {
            out[[t, 10 + b]] = *v;
        }
    }

    let frame_rate = 1000.0 / (spec.frame_ms * spec.hop_fraction);
    TimeSeriesMatrix::new(out, frame_rate)?.with_labels(feature_labels())
}

/// Compact stimulus: PC1 of the standardized features plus the raw RMS and
/// broadband flux columns. Constant feature columns are excluded from the
/// PCA with a warning.
pub fn stimulus_3d(features: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    if features.channels() != FEATURE_COUNT {
        return Err(Error::Shape(format!(
            "expected {FEATURE_COUNT} feature columns, got {}",
            features.channels()
        )));
    }
    let m = features.samples();
    if m < 2 {
        return Err(Error::Input("need at least 2 frames".into()));
    }
    // standardize, dropping constant columns
    let mut keep = Vec::new();
    let mut cols = Vec::new();
    for j in 0..FEATURE_COUNT {
        let col = features.data.column(j);
        let mean = col.mean().unwrap();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0);
        if var <= 1e-24 {
            eprintln!("warning: constant feature column {j} excluded from PC1");
            continue;
        }
        let sd = var.sqrt();
        keep.push(j);
        cols.push(col.iter().map(|v| (v - mean) / sd).collect::<Vec<f64>>());
    }
    if keep.is_empty() {
        return Err(Error::DegenerateVariance(
            "all feature columns are constant".into(),
        ));
    }
    let mut std_mat = Array2::zeros((m, keep.len()));
    for (jj, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            std_mat[[i, jj]] = *v;
        }
    }
    let std_ts = TimeSeriesMatrix::new(std_mat, features.fs_hz)?;
    let pca = signal::fit_pca(&std_ts, 1)?;
    let pc1 = signal::apply_pca(&pca, &std_ts)?;

    let mut out = Array2::zeros((m, 3));
    for i in 0..m {
        out[[i, 0]] = pc1.data[[i, 0]];
        out[[i, 1]] = features.data[[i, RMS_COL]];
        out[[i, 2]] = features.data[[i, FLUX_COL]];
    }
    let mut ts = TimeSeriesMatrix::new(out, features.fs_hz)?;
    ts.burn_in = features.burn_in;
    ts.channel_labels = Some(vec!["pc1".into(), "rms".into(), "flux".into()]);
    Ok(ts)
}
