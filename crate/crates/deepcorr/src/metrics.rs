//! Evaluation statistics: Pearson correlation, Fisher z-score averaging,
//! Cohen's d' over aligned/misaligned segment classification, and a paired
//! one-tailed t-test with p-values from a continued-fraction incomplete-beta
//! evaluation.

use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Outcome of the aligned-vs-misaligned segment classification probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentClassResult {
    pub segment_seconds: f64,
    pub aligned_corrs: Vec<f64>,
    pub misaligned_corrs: Vec<f64>,
    pub d_prime: f64,
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "pearson lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!(
            "pearson needs at least 2 samples, got {n}"
        )));
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..n {
        let da = a[i] - ma;
        let db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    // effectively-constant inputs: tolerate mean-subtraction rounding noise
    let floor_a = (f64::EPSILON * n as f64 * (1.0 + ma.abs())).powi(2);
    let floor_b = (f64::EPSILON * n as f64 * (1.0 + mb.abs())).powi(2);
    if saa <= floor_a || sbb <= floor_b {
        return Err(Error::DegenerateVariance(
            "pearson input has zero variance".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Fisher z-score averaging: atanh, arithmetic mean, tanh back.
///
/// Three invariants hold bit-exactly, not just to rounding error:
/// - order invariance: positive and negative z-values are summed separately
///   in sorted order, so any permutation of the input yields the same bits;
/// - antisymmetry: atanh/tanh are evaluated on magnitudes with the sign
///   reapplied, and the final mean is `(pos - neg) / n`, so negating every
///   input negates the result exactly;
/// - idempotence: a sequence of identical values returns that value, since
///   the arithmetic mean of equal terms is the term itself.
pub fn z_average(corrs: &[f64]) -> Result<f64> {
    if corrs.is_empty() {
        return Err(Error::Input("z_average of empty sequence".into()));
    }
    for &r in corrs {
        if !(-1.0..=1.0).contains(&r) || r.abs() >= 1.0 {
            return Err(Error::Numeric(format!(
                "z_average requires |r| < 1, got {r}"
            )));
        }
    }
    if corrs.windows(2).all(|w| w[0] == w[1]) {
        return Ok(corrs[0]);
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for &r in corrs {
        let z = r.abs().atanh();
        if r > 0.0 {
            pos.push(z);
        } else if r < 0.0 {
            neg.push(z);
        }
    }
    pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sum = pos.iter().sum::<f64>() - neg.iter().sum::<f64>();
    let mean = sum / corrs.len() as f64;
    Ok(mean.abs().tanh().copysign(mean))
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Cohen's d': `|mu1 - mu2| / sqrt((var1 + var2)/2)` with n-1 variances.
pub fn cohens_d_prime(aligned: &[f64], misaligned: &[f64]) -> Result<f64> {
    if aligned.len() < 2 || misaligned.len() < 2 {
        return Err(Error::DegenerateSample(
            "d' needs at least 2 values per class".into(),
        ));
    }
    let (m1, v1) = mean_var(aligned);
    let (m2, v2) = mean_var(misaligned);
    let pooled = 0.5 * (v1 + v2);
    if pooled == 0.0 {
        return Err(Error::DegenerateVariance(
            "both segment classes have zero variance".into(),
        ));
    }
    Ok((m1 - m2).abs() / pooled.sqrt())
}

/// Samples aligned and misaligned windows from dimension 1 of the two
/// projected signals and computes d' on the per-segment correlations.
/// Misaligned pairs are drawn from the same recording with starts at least
/// one segment length apart.
pub fn segment_classify(
    stimulus: &TimeSeriesMatrix,
    response: &TimeSeriesMatrix,
    seg_seconds: f64,
    n_segments: usize,
    rng_seed: u64,
) -> Result<SegmentClassResult> {
    let m = stimulus.samples().min(response.samples());
    let seg_len = (seg_seconds * stimulus.fs_hz).round() as usize;
    if seg_len < 2 || seg_len > m {
        return Err(Error::Input(format!(
            "segment of {seg_len} samples does not fit a recording of {m}"
        )));
    }
    if n_segments == 0 {
        return Err(Error::Config("n_segments must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let col = |ts: &TimeSeriesMatrix, start: usize| -> Vec<f64> {
        ts.data
            .column(0)
            .iter()
            .skip(start)
            .take(seg_len)
            .cloned()
            .collect()
    };
    let max_start = m - seg_len;
    let mut aligned = Vec::with_capacity(n_segments);
    let mut misaligned = Vec::with_capacity(n_segments);
    let mut draws = 0usize;
    while aligned.len() < n_segments {
        draws += 1;
        if draws > n_segments * 100 {
            return Err(Error::DegenerateVariance(
                "could not draw enough non-constant aligned segments".into(),
            ));
        }
        let s = rng.gen_range(0..=max_start);
        if let Ok(r) = pearson(&col(stimulus, s), &col(response, s)) {
            aligned.push(r);
        }
    }
    draws = 0;
    while misaligned.len() < n_segments {
        draws += 1;
        if draws > n_segments * 1000 {
            return Err(Error::Input(
                "recording too short to draw misaligned segment pairs".into(),
            ));
        }
        let s1 = rng.gen_range(0..=max_start);
        let s2 = rng.gen_range(0..=max_start);
        if s1.abs_diff(s2) < seg_len {
            continue;
        }
        if let Ok(r) = pearson(&col(stimulus, s1), &col(response, s2)) {
            misaligned.push(r);
        }
    }
    let d_prime = cohens_d_prime(&aligned, &misaligned)?;
    Ok(SegmentClassResult {
        segment_seconds: seg_seconds,
        aligned_corrs: aligned,
        misaligned_corrs: misaligned,
        d_prime,
    })
}

/// Per-segment correlations of aligned windows only; the degenerate case of a
/// window spanning the whole recording is allowed here.
pub fn aligned_segment_corrs(
    stimulus: &TimeSeriesMatrix,
    response: &TimeSeriesMatrix,
    seg_seconds: f64,
    n_segments: usize,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    let m = stimulus.samples().min(response.samples());
    let seg_len = (seg_seconds * stimulus.fs_hz).round() as usize;
    if seg_len < 2 || seg_len > m {
        return Err(Error::Input(format!(
            "segment of {seg_len} samples does not fit a recording of {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let max_start = m - seg_len;
    (0..n_segments)
        .map(|_| {
            let s = rng.gen_range(0..=max_start);
            let a: Vec<f64> = stimulus
                .data
                .column(0)
                .iter()
                .skip(s)
                .take(seg_len)
                .cloned()
                .collect();
            let b: Vec<f64> = response
                .data
                .column(0)
                .iter()
                .skip(s)
                .take(seg_len)
                .cloned()
                .collect();
            pearson(&a, &b)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    Greater,
}

/// Paired one-tailed t-test. Returns `(t, p)` with `p = P(T_{n-1} > t)`.
pub fn paired_t_test(a: &[f64], b: &[f64], _alternative: Alternative) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::DegenerateSample(
            "t-test needs at least 2 pairs".into(),
        ));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, var) = mean_var(&diffs);
    if var == 0.0 {
        return Err(Error::DegenerateVariance(
            "paired differences have zero variance".into(),
        ));
    }
    let t = mean / (var / n as f64).sqrt();
    let df = (n - 1) as f64;
    let p = student_t_sf(t, df);
    Ok((t, p))
}

/// Survival function of the Student t distribution, `P(T > t)`.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let half = 0.5 * inc_beta(0.5 * df, 0.5, x);
    if t >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

/// Regularized incomplete beta function I_x(a, b), continued-fraction form.
fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-14;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos log-gamma.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0];
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        let b = [1.0, 2.0, 4.0];
        assert!((pearson(&a, &b).unwrap() - 0.98198).abs() < 1e-5);
    }

    #[test]
    fn pearson_affine_invariance() {
        let a = [0.3, -1.2, 0.7, 2.0, -0.5];
        let b = [1.0, 0.2, -0.4, 1.5, 0.9];
        let r0 = pearson(&a, &b).unwrap();
        let a2: Vec<f64> = a.iter().map(|x| 3.5 * x + 7.0).collect();
        let r1 = pearson(&a2, &b).unwrap();
        assert!((r0 - r1).abs() < 1e-12);
    }

    #[test]
    fn pearson_constant_errors() {
        let a = [1.0, 1.0, 1.0];
        let b = [1.0, 2.0, 3.0];
        assert!(matches!(
            pearson(&a, &b),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn z_average_cases() {
        assert!((z_average(&[0.4, 0.4, 0.4]).unwrap() - 0.4).abs() < 1e-12);
        assert!(z_average(&[0.6, -0.6]).unwrap().abs() < 1e-12);
        let expected = ((0.9_f64.atanh() + 0.1_f64.atanh()) / 2.0).tanh();
        assert!((z_average(&[0.9, 0.1]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.656295).abs() < 1e-4);
        assert!(matches!(z_average(&[1.0]), Err(Error::Numeric(_))));
        // order invariance is exact: the mean is a symmetric reduction
        let xs = [0.1, -0.5, 0.8, 0.3];
        let mut sh = xs;
        sh.reverse();
        assert_eq!(z_average(&xs).unwrap(), z_average(&sh).unwrap());
    }

    #[test]
    fn d_prime_cases() {
        let a = [0.5, 0.6, 0.4, 0.5];
        assert!(cohens_d_prime(&a, &a).unwrap().abs() < 1e-12);
        // mu1=1, mu2=0, sigma1=sigma2=1 (sample std) -> 1
        let h = std::f64::consts::SQRT_2 / 2.0;
        let x = [1.0 - h, 1.0 + h];
        let y = [-h, h];
        assert!((cohens_d_prime(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        // shift and common positive scale invariance
        let b = [0.1, 0.0, 0.2, 0.15];
        let d0 = cohens_d_prime(&a, &b).unwrap();
        let shift: Vec<f64> = a.iter().map(|v| v + 3.0).collect();
        let shift_b: Vec<f64> = b.iter().map(|v| v + 3.0).collect();
        assert!((cohens_d_prime(&shift, &shift_b).unwrap() - d0).abs() < 1e-10);
        let sa: Vec<f64> = a.iter().map(|v| v * 4.0).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * 4.0).collect();
        assert!((cohens_d_prime(&sa, &sb).unwrap() - d0).abs() < 1e-10);
    }

    #[test]
    fn t_test_contracts() {
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(matches!(
            paired_t_test(&a, &a, Alternative::Greater),
            Err(Error::DegenerateVariance(_))
        ));
        let b = [0.001, -0.002, 0.0015, -0.001];
        let shifted: Vec<f64> = b.iter().map(|x| x + 1.0).collect();
        let (_, p) = paired_t_test(&shifted, &[0.0; 4], Alternative::Greater).unwrap();
        assert!(p < 0.01, "p = {p}");
    }

    #[test]
    fn t_sf_reference_values() {
        // Reference values from the standard t-distribution tables.
        assert!((student_t_sf(2.0, 10.0) - 0.036694).abs() < 1e-5);
        assert!((student_t_sf(0.0, 5.0) - 0.5).abs() < 1e-12);
        assert!((student_t_sf(-2.0, 10.0) - 0.963306).abs() < 1e-5);
    }

    #[test]
    fn aligned_segment_covering_everything_equals_whole_correlation() {
        let m = 640;
        let mut s = Array2::zeros((m, 1));
        let mut r = Array2::zeros((m, 1));
        for i in 0..m {
            let t = i as f64 / 64.0;
            s[[i, 0]] = (2.0 * std::f64::consts::PI * 3.0 * t).sin();
            r[[i, 0]] = s[[i, 0]] + 0.1 * ((i * 7919 % 101) as f64 / 101.0 - 0.5);
        }
        let st = TimeSeriesMatrix::new(s, 64.0).unwrap();
        let rt = TimeSeriesMatrix::new(r, 64.0).unwrap();
        let whole = pearson(
            st.data.column(0).as_slice().unwrap(),
            rt.data.column(0).as_slice().unwrap(),
        )
        .unwrap();
        let res = aligned_segment_corrs(&st, &rt, m as f64 / 64.0, 1, 0).unwrap();
        assert_eq!(res.len(), 1);
        assert!((res[0] - whole).abs() < 1e-12);

        let half = segment_classify(&st, &rt, 2.0, 4, 0).unwrap();
        assert_eq!(half.aligned_corrs.len(), 4);
        assert_eq!(half.misaligned_corrs.len(), 4);
        assert!(half.d_prime >= 0.0);
    }
}
