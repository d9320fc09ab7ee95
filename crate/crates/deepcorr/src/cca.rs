//! Two-view linear CCA: projection matrices maximizing the Pearson
//! correlation of the projections, obtained from the SVD of the whitened
//! cross-covariance `C_xx^{-1/2} C_xy C_yy^{-1/2}`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::timeseries::TimeSeriesMatrix;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Stimulus,
    Response,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearCcaModel {
    #[serde(with = "crate::serde_util::mat")]
    pub proj_x: Array2<f64>,
    #[serde(with = "crate::serde_util::mat")]
    pub proj_y: Array2<f64>,
    #[serde(with = "crate::serde_util::vec1")]
    pub canon_corr: Array1<f64>,
    #[serde(with = "crate::serde_util::vec1")]
    pub mean_x: Array1<f64>,
    #[serde(with = "crate::serde_util::vec1")]
    pub mean_y: Array1<f64>,
    pub ridge_used: f64,
    /// Number of whitening eigenvalues that hit the conditioning floor.
    pub clamped_eigenvalues: usize,
}

impl LinearCcaModel {
    pub fn dims(&self) -> usize {
        self.proj_x.ncols()
    }

    /// Canonical correlations clamped into [0, 1] for reporting; finite-sample
    /// ridge effects can push the raw values marginally above 1.
    pub fn canon_corr_clamped(&self) -> Array1<f64> {
        self.canon_corr.mapv(|r| r.clamp(0.0, 1.0))
    }
}

/// Fits a `d`-dimensional linear CCA on aligned views. `ridge` is added to
/// both auto-covariances before whitening; pass 0 to rely purely on the
/// eigenvalue floor.
pub fn fit_cca(
    x: &TimeSeriesMatrix,
    y: &TimeSeriesMatrix,
    d: usize,
    ridge: f64,
) -> Result<LinearCcaModel> {
    fit_cca_mats(&x.data, &y.data, d, ridge)
}

/// Same as `fit_cca` on bare matrices.
pub fn fit_cca_mats(
    x: &Array2<f64>,
    y: &Array2<f64>,
    d: usize,
    ridge: f64,
) -> Result<LinearCcaModel> {
    let m = x.nrows();
    let (d1, d2) = (x.ncols(), y.ncols());
    if y.nrows() != m {
        return Err(Error::Shape(format!(
            "views have {m} and {} samples",
            y.nrows()
        )));
    }
    if d == 0 || d > d1.min(d2) {
        return Err(Error::Config(format!(
            "d={d} out of range 1..={}",
            d1.min(d2)
        )));
    }
    if m <= d1.max(d2) {
        return Err(Error::DegenerateSample(format!(
            "need more samples ({m}) than dimensions ({})",
            d1.max(d2)
        )));
    }
    let mut xc = x.clone();
    let mut yc = y.clone();
    let mean_x = linalg::center_columns(&mut xc);
    let mean_y = linalg::center_columns(&mut yc);

    let cxx = linalg::covariance(xc.view(), xc.view(), true)?;
    let cyy = linalg::covariance(yc.view(), yc.view(), true)?;
    let cxy = linalg::covariance(xc.view(), yc.view(), true)?;

    let wx = linalg::inv_sqrt_sym(cxx.view(), ridge)?;
    let wy = linalg::inv_sqrt_sym(cyy.view(), ridge)?;

    let t = wx.matrix.dot(&cxy).dot(&wy.matrix);
    let svd = linalg::svd(t.view())?;

    let proj_x = wx.matrix.dot(&svd.u.slice(ndarray::s![.., ..d]));
    let proj_y = wy.matrix.dot(&svd.v.slice(ndarray::s![.., ..d]));
    let canon_corr = svd.singular_values.slice(ndarray::s![..d]).to_owned();

    Ok(LinearCcaModel {
        proj_x,
        proj_y,
        canon_corr,
        mean_x,
        mean_y,
        ridge_used: ridge,
        clamped_eigenvalues: wx.clamped + wy.clamped,
    })
}

/// Centers by the stored training mean and applies the selected view's
/// projection.
pub fn project(
    model: &LinearCcaModel,
    x: &TimeSeriesMatrix,
    which: View,
) -> Result<TimeSeriesMatrix> {
    let out = project_mat(model, &x.data, which)?;
    let mut ts = TimeSeriesMatrix::new(out, x.fs_hz)?;
    ts.burn_in = x.burn_in;
    Ok(ts)
}

pub fn project_mat(model: &LinearCcaModel, x: &Array2<f64>, which: View) -> Result<Array2<f64>> {
    let (proj, mean) = match which {
        View::Stimulus => (&model.proj_x, &model.mean_x),
        View::Response => (&model.proj_y, &model.mean_y),
    };
    if x.ncols() != proj.nrows() {
        return Err(Error::Shape(format!(
            "input has {} channels, projection expects {}",
            x.ncols(),
            proj.nrows()
        )));
    }
    let mut centered = x.clone();
    for mut row in centered.rows_mut() {
        row -= mean;
    }
    Ok(centered.dot(proj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pearson;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_ts(rng: &mut impl Rng, m: usize, c: usize) -> TimeSeriesMatrix {
        let data = Array2::from_shape_fn((m, c), |_| rng.gen_range(-1.0..1.0));
        TimeSeriesMatrix::new(data, 64.0).unwrap()
    }

    #[test]
    fn identical_views_give_unit_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_ts(&mut rng, 400, 4);
        let model = fit_cca(&x, &x, 4, 0.0).unwrap();
        for &r in model.canon_corr.iter() {
            assert!((r - 1.0).abs() < 1e-8, "corr {r}");
        }
    }

    #[test]
    fn orthogonal_map_gives_unit_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_ts(&mut rng, 500, 3);
        // orthogonal Q from the QR of a random matrix, via SVD here
        let raw = Array2::from_shape_fn((3, 3), |_| rng.gen_range(-1.0..1.0));
        let svd = crate::linalg::svd(raw.view()).unwrap();
        let q = svd.u.dot(&svd.v.t());
        let y_data = x.data.dot(&q);
        let y = TimeSeriesMatrix::new(y_data, 64.0).unwrap();
        let model = fit_cca(&x, &y, 3, 0.0).unwrap();
        for &r in model.canon_corr.iter() {
            assert!((r - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn shared_latent_recovers_population_correlation() {
        // x = a z + noise, y = b z + noise; per-direction SNR 1 gives
        // view-view correlation snr/(1+snr) = 0.5. Oracle: the generative
        // construction, not the fit path.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 100_000;
        let mut x = Array2::zeros((m, 3));
        let mut y = Array2::zeros((m, 3));
        let gauss = rand_distr::StandardNormal;
        for i in 0..m {
            let z: f64 = rng.sample(gauss);
            for j in 0..3 {
                let a = if j == 0 { 1.0 } else { 0.0 };
                let nx: f64 = rng.sample(gauss);
                let ny: f64 = rng.sample(gauss);
                x[[i, j]] = a * z + nx;
                y[[i, j]] = a * z + ny;
            }
        }
        let xt = TimeSeriesMatrix::new(x, 64.0).unwrap();
        let yt = TimeSeriesMatrix::new(y, 64.0).unwrap();
        let model = fit_cca(&xt, &yt, 1, 0.0).unwrap();
        assert!(
            (model.canon_corr[0] - 0.5).abs() < 0.02,
            "rho1 {}",
            model.canon_corr[0]
        );
    }

    #[test]
    fn projection_reproduces_canon_corr_and_affine_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 800;
        let mut x = random_ts(&mut rng, m, 3);
        let mut y = random_ts(&mut rng, m, 3);
        // inject shared structure
        for i in 0..m {
            let z = rng.gen_range(-1.0..1.0);
            x.data[[i, 0]] += 2.0 * z;
            y.data[[i, 1]] += 2.0 * z;
        }
        let model = fit_cca(&x, &y, 2, 0.0).unwrap();
        let px = project(&model, &x, View::Stimulus).unwrap();
        let py = project(&model, &y, View::Response).unwrap();
        for k in 0..2 {
            let r = pearson(
                px.data.column(k).to_vec().as_slice(),
                py.data.column(k).to_vec().as_slice(),
            )
            .unwrap();
            assert!(
                (r - model.canon_corr[k]).abs() < 1e-6,
                "dim {k}: {r} vs {}",
                model.canon_corr[k]
            );
        }
        // uncorrelated across canonical dimensions on training data
        let r01 = pearson(
            px.data.column(0).to_vec().as_slice(),
            py.data.column(1).to_vec().as_slice(),
        )
        .unwrap();
        assert!(r01.abs() < 1e-6);

        // scaling either view's columns leaves canon_corr unchanged
        let mut xs = x.clone();
        for (j, scale) in [3.0, 0.2, 11.0].iter().enumerate() {
            xs.data.column_mut(j).mapv_inplace(|v| v * scale);
        }
        let model2 = fit_cca(&xs, &y, 2, 0.0).unwrap();
        for k in 0..2 {
            assert!((model2.canon_corr[k] - model.canon_corr[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn config_and_sample_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_ts(&mut rng, 50, 3);
        assert!(matches!(fit_cca(&x, &x, 4, 0.0), Err(Error::Config(_))));
        assert!(matches!(fit_cca(&x, &x, 0, 0.0), Err(Error::Config(_))));
        let tiny = random_ts(&mut rng, 3, 3);
        assert!(matches!(
            fit_cca(&tiny, &tiny, 1, 0.0),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn brute_force_grid_matches_top_correlation() {
        // D1=D2=2, d=1: compare against direct maximization of the
        // correlation over unit-direction pairs on a 1 degree grid.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = 500;
        let mut x = Array2::zeros((m, 2));
        let mut y = Array2::zeros((m, 2));
        for i in 0..m {
            let z = rng.gen_range(-1.0..1.0_f64);
            x[[i, 0]] = z + 0.4 * rng.gen_range(-1.0..1.0);
            x[[i, 1]] = rng.gen_range(-1.0..1.0);
            y[[i, 0]] = rng.gen_range(-1.0..1.0);
            y[[i, 1]] = 0.8 * z + 0.4 * rng.gen_range(-1.0..1.0);
        }
        let xt = TimeSeriesMatrix::new(x.clone(), 64.0).unwrap();
        let yt = TimeSeriesMatrix::new(y.clone(), 64.0).unwrap();
        let model = fit_cca(&xt, &yt, 1, 0.0).unwrap();

        let mut best = 0.0_f64;
        let step = std::f64::consts::PI / 180.0;
        let proj = |m: &Array2<f64>, th: f64| -> Vec<f64> {
            let (c, s) = (th.cos(), th.sin());
            m.rows().into_iter().map(|r| r[0] * c + r[1] * s).collect()
        };
        for ia in 0..180 {
            let px = proj(&x, ia as f64 * step);
            for ib in 0..180 {
                let py = proj(&y, ib as f64 * step);
                let r = pearson(&px, &py).unwrap().abs();
                best = best.max(r);
            }
        }
        assert!(
            (model.canon_corr[0] - best).abs() < 1e-3,
            "cca {} vs grid {best}",
            model.canon_corr[0]
        );
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_ts(&mut rng, 100, 3);
        let model = fit_cca(&x, &x, 2, 1e-6).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: LinearCcaModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.proj_x, model.proj_x);
        assert_eq!(back.canon_corr, model.canon_corr);
    }
}
