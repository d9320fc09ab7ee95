//! Preprocessing chain: audio envelope extraction with resampling, zero-phase
//! FIR band-pass filtering, a dyadic 21-band FIR filterbank, PCA stages, and
//! time-lag embedding. All filters are symmetric (linear-phase) windowed-sinc
//! designs applied centered, so no stage introduces cross-signal lag.

use crate::error::{Error, Result};
use crate::linalg;
use crate::timeseries::TimeSeriesMatrix;
use ndarray::{s, Array1, Array2};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// FIR design and convolution
// ---------------------------------------------------------------------------

fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Windowed-sinc low-pass taps with unit DC gain; `taps` must be odd.
fn lowpass_taps(cutoff_hz: f64, fs: f64, taps: usize) -> Vec<f64> {
    debug_assert!(taps % 2 == 1);
    let fc = cutoff_hz / fs;
    let mid = taps / 2;
    let win = hamming(taps);
    // build one half and mirror it so symmetry is bit-exact
    let mut h = vec![0.0; taps];
    for i in 0..=mid {
        let n = (mid - i) as f64;
        let sinc = if n == 0.0 {
            2.0 * fc
        } else {
            (2.0 * std::f64::consts::PI * fc * n).sin() / (std::f64::consts::PI * n)
        };
        let v = sinc * win[i];
        h[i] = v;
        h[taps - 1 - i] = v;
    }
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Band-pass taps as the difference of two low-passes; symmetric, zero DC gain
/// up to window leakage.
fn bandpass_taps(low_hz: f64, high_hz: f64, fs: f64, taps: usize) -> Vec<f64> {
    let hi = lowpass_taps(high_hz, fs, taps);
    let lo = lowpass_taps(low_hz, fs, taps);
    hi.iter().zip(&lo).map(|(a, b)| a - b).collect()
}

/// "Same"-size convolution with an odd-length symmetric kernel, centered so a
/// symmetric kernel is exactly zero-phase. Falls back to FFT convolution for
/// long kernels. Edges are zero-padded.
pub(crate) fn conv_same_centered(x: &[f64], h: &[f64]) -> Vec<f64> {
    debug_assert!(h.len() % 2 == 1);
    let half = h.len() / 2;
    if h.len() <= 64 || x.len() < 2 * h.len() {
        let mut y = vec![0.0; x.len()];
        for (i, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &hv) in h.iter().enumerate() {
                let idx = i as isize + k as isize - half as isize;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += hv * x[idx as usize];
                }
            }
            *out = acc;
        }
        return y;
    }
    let full = x.len() + h.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);
    let mut xa: Vec<Complex<f64>> = x
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut ha: Vec<Complex<f64>> = h
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fft.process(&mut xa);
    fft.process(&mut ha);
    for (a, b) in xa.iter_mut().zip(&ha) {
        *a *= b;
    }
    ifft.process(&mut xa);
    let scale = 1.0 / size as f64;
    (half..half + x.len()).map(|i| xa[i].re * scale).collect()
}

fn odd_at_least(n: usize) -> usize {
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

// ---------------------------------------------------------------------------
// Envelope
// ---------------------------------------------------------------------------

/// Audio envelope: square, smooth with a rectangular window of `smooth_ms`,
/// anti-alias low-pass, resample to `fs_out`, optional cube-root compression.
/// Never negative; ringing undershoot from the anti-alias filter is clamped.
pub fn envelope(
    audio: &[f64],
    fs_in: f64,
    fs_out: f64,
    smooth_ms: f64,
    compress: bool,
) -> Result<TimeSeriesMatrix> {
    if audio.is_empty() {
        return Err(Error::Input("envelope of empty signal".into()));
    }
    if fs_in < 2.0 * fs_out {
        return Err(Error::Config(format!(
            "input rate {fs_in} must be at least twice the output rate {fs_out}"
        )));
    }
    let squared: Vec<f64> = audio.iter().map(|v| v * v).collect();

    let win_len = odd_at_least(((smooth_ms / 1000.0 * fs_in).round() as usize).max(1));
    let win = vec![1.0 / win_len as f64; win_len];
    let smoothed = conv_same_centered(&squared, &win);

    // anti-alias low-pass before decimation
    let cutoff = 0.4 * fs_out;
    let transition = 0.25 * fs_out;
    let taps = odd_at_least((3.3 * fs_in / transition).ceil() as usize);
    let lp = lowpass_taps(cutoff, fs_in, taps);
    let filtered = conv_same_centered(&smoothed, &lp);

    // linear-interpolation resample
    let m_out = ((audio.len() as f64) * fs_out / fs_in).floor() as usize;
    if m_out == 0 {
        return Err(Error::Input("signal shorter than one output sample".into()));
    }
    let ratio = fs_in / fs_out;
    let mut out = Vec::with_capacity(m_out);
    for k in 0..m_out {
        let t = k as f64 * ratio;
        let i = t.floor() as usize;
        let frac = t - i as f64;
        let a = filtered[i.min(filtered.len() - 1)];
        let b = filtered[(i + 1).min(filtered.len() - 1)];
        let mut v = a + frac * (b - a);
        if v < 0.0 {
            v = 0.0;
        }
        out.push(if compress { v.cbrt() } else { v });
    }
    let burn = ((taps / 2 + win_len / 2) as f64 / ratio).ceil() as usize;
    let mut ts = TimeSeriesMatrix::new(
        Array2::from_shape_vec((m_out, 1), out).expect("shape"),
        fs_out,
    )?;
    ts.burn_in = burn.min(m_out);
    Ok(ts)
}

// ---------------------------------------------------------------------------
// Band-pass
// ---------------------------------------------------------------------------

/// Zero-phase FIR band-pass (forward-backward, so the magnitude response is
/// squared and phase cancels exactly).
pub fn bandpass(x: &TimeSeriesMatrix, low_hz: f64, high_hz: f64) -> Result<TimeSeriesMatrix> {
    let fs = x.fs_hz;
    if !(low_hz > 0.0 && high_hz > low_hz && high_hz < fs / 2.0) {
        return Err(Error::Config(format!(
            "invalid band {low_hz}-{high_hz} Hz at fs {fs} Hz"
        )));
    }
    let transition = low_hz.min(fs / 2.0 - high_hz).max(0.005 * fs);
    let taps = odd_at_least((3.3 * fs / transition).ceil() as usize);
    if x.samples() < taps {
        return Err(Error::Input(format!(
            "recording of {} samples is shorter than the {taps}-tap filter for band {low_hz}-{high_hz} Hz",
            x.samples()
        )));
    }
    let h = bandpass_taps(low_hz, high_hz, fs, taps);
    let mut out = Array2::zeros(x.data.dim());
    for (c, col) in x.data.columns().into_iter().enumerate() {
        let fwd = conv_same_centered(col.as_standard_layout().as_slice().unwrap(), &h);
        let back = conv_same_centered(&fwd, &h);
        out.column_mut(c)
            .iter_mut()
            .zip(back)
            .for_each(|(o, v)| *o = v);
    }
    let mut ts = TimeSeriesMatrix::new(out, fs)?;
    ts.channel_labels = x.channel_labels.clone();
    ts.burn_in = x.burn_in.max(taps - 1).min(x.samples());
    Ok(ts)
}

// ---------------------------------------------------------------------------
// Filterbank
// ---------------------------------------------------------------------------

pub const FILTERBANK_SIZE: usize = 21;
pub const FILTERBANK_ORDER: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandFilter {
    pub low_hz: f64,
    pub high_hz: f64,
    pub taps: Vec<f64>,
}

/// 21 FIR band-passes with geometrically spaced center frequencies (0.25 Hz
/// up to 0.8x Nyquist), each one octave wide, order 64. The top band's upper
/// edge is clamped below Nyquist.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterBank {
    pub filters: Vec<BandFilter>,
    pub fs_hz: f64,
}

impl FilterBank {
    pub fn dyadic(fs: f64) -> Result<FilterBank> {
        if fs <= 1.0 {
            return Err(Error::Config(format!("sampling rate {fs} too low for the filterbank")));
        }
        let f_lo = 0.25;
        let f_hi = 0.8 * fs / 2.0;
        let ratio = (f_hi / f_lo).powf(1.0 / (FILTERBANK_SIZE as f64 - 1.0));
        let taps_n = FILTERBANK_ORDER + 1;
        let sqrt2 = std::f64::consts::SQRT_2;
        let filters = (0..FILTERBANK_SIZE)
            .map(|k| {
                let fc = f_lo * ratio.powi(k as i32);
                let low = fc / sqrt2;
                let high = (fc * sqrt2).min(0.99 * fs / 2.0);
                BandFilter {
                    low_hz: low,
                    high_hz: high,
                    taps: bandpass_taps(low, high, fs, taps_n),
                }
            })
            .collect();
        Ok(FilterBank { filters, fs_hz: fs })
    }
}

/// Convolves every channel with every band filter (zero-phase, centered);
/// output channel order is channel-major, filter-minor.
pub fn apply_filterbank(x: &TimeSeriesMatrix, fb: &FilterBank) -> Result<TimeSeriesMatrix> {
    if (x.fs_hz - fb.fs_hz).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "filterbank designed for {} Hz applied to {} Hz data",
            fb.fs_hz, x.fs_hz
        )));
    }
    let (m, c) = x.data.dim();
    let nf = fb.filters.len();
    let mut out = Array2::zeros((m, c * nf));
    for ch in 0..c {
        let col = x.data.column(ch).to_owned();
        let col_slice = col.as_slice().unwrap();
        for (fi, f) in fb.filters.iter().enumerate() {
            let y = conv_same_centered(col_slice, &f.taps);
            out.column_mut(ch * nf + fi)
                .iter_mut()
                .zip(y)
                .for_each(|(o, v)| *o = v);
        }
    }
    let mut ts = TimeSeriesMatrix::new(out, x.fs_hz)?;
    ts.burn_in = x.burn_in.max(FILTERBANK_ORDER).min(m);
    Ok(ts)
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaTransform {
    #[serde(with = "crate::serde_util::vec1")]
    pub mean: Array1<f64>,
    /// `c x k`, orthonormal columns, descending explained variance.
    #[serde(with = "crate::serde_util::mat")]
    pub components: Array2<f64>,
    #[serde(with = "crate::serde_util::vec1")]
    pub explained_variance: Array1<f64>,
}

pub fn fit_pca(x: &TimeSeriesMatrix, k: usize) -> Result<PcaTransform> {
    let c = x.channels();
    if k == 0 || k > c {
        return Err(Error::Config(format!("PCA k={k} out of range 1..={c}")));
    }
    let mut centered = x.data.clone();
    let mean = linalg::center_columns(&mut centered);
    let cov = linalg::covariance(centered.view(), centered.view(), true)?;
    let eig = linalg::sym_eig(cov.view())?;
    Ok(PcaTransform {
        mean,
        components: eig.eigenvectors.slice(s![.., ..k]).to_owned(),
        explained_variance: eig.eigenvalues.slice(s![..k]).to_owned(),
    })
}

pub fn apply_pca(t: &PcaTransform, x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    if x.channels() != t.components.nrows() {
        return Err(Error::Shape(format!(
            "input has {} channels, PCA expects {}",
            x.channels(),
            t.components.nrows()
        )));
    }
    let mut centered = x.data.clone();
    for mut row in centered.rows_mut() {
        row -= &t.mean;
    }
    let mut ts = TimeSeriesMatrix::new(centered.dot(&t.components), x.fs_hz)?;
    ts.burn_in = x.burn_in;
    Ok(ts)
}

/// Maps components back to channel space: `S C' + mean`.
pub fn pca_reconstruct(t: &PcaTransform, scores: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    if scores.channels() != t.components.ncols() {
        return Err(Error::Shape(format!(
            "scores have {} columns, PCA has {}",
            scores.channels(),
            t.components.ncols()
        )));
    }
    let mut rec = scores.data.dot(&t.components.t());
    for mut row in rec.rows_mut() {
        row += &t.mean;
    }
    let mut ts = TimeSeriesMatrix::new(rec, scores.fs_hz)?;
    ts.burn_in = scores.burn_in;
    Ok(ts)
}

// ---------------------------------------------------------------------------
// Time-lag embedding
// ---------------------------------------------------------------------------

/// Stacks delayed copies of each channel: output column `ch*lags + j` holds
/// the channel delayed by j samples, zero-padded at the start.
pub fn time_lag(x: &TimeSeriesMatrix, lags: usize) -> Result<TimeSeriesMatrix> {
    let (m, c) = x.data.dim();
    if lags == 0 {
        return Err(Error::Config("lags must be at least 1".into()));
    }
    if lags >= m {
        return Err(Error::Config(format!(
            "lags {lags} must be smaller than the {m}-sample recording"
        )));
    }
    let mut out = Array2::zeros((m, c * lags));
    for ch in 0..c {
        for j in 0..lags {
            for i in j..m {
                out[[i, ch * lags + j]] = x.data[[i - j, ch]];
            }
        }
    }
    let mut ts = TimeSeriesMatrix::new(out, x.fs_hz)?;
    ts.burn_in = x.burn_in.max(lags).min(m);
    Ok(ts)
}
