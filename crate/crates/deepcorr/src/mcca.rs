//! Multiway CCA across N >= 2 views: per-view linear transforms maximizing
//! inter-set correlation, solved as the generalized eigenproblem
//! `R v = lambda D v` on the stacked cross-covariance blocks.

use crate::error::{Error, Result};
use crate::linalg;
use crate::timeseries::TimeSeriesMatrix;
use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MccaModel {
    /// Per-view transform matrices, `proj[n]` is `d_n x d`.
    #[serde(with = "crate::serde_util::mat_list")]
    pub proj: Vec<Array2<f64>>,
    /// Per-view least-squares back-projections (`d x d_n`), fitted on the
    /// training data for rank-d denoising.
    #[serde(with = "crate::serde_util::mat_list")]
    pub recon: Vec<Array2<f64>>,
    #[serde(with = "crate::serde_util::vec1")]
    pub eigenvalues: Array1<f64>,
    pub view_dims: Vec<usize>,
    #[serde(with = "crate::serde_util::vec1_list")]
    pub means: Vec<Array1<f64>>,
    pub ridge_used: f64,
}

impl MccaModel {
    pub fn n_views(&self) -> usize {
        self.proj.len()
    }

    pub fn dims(&self) -> usize {
        self.proj[0].ncols()
    }

    /// Training-data ISC implied by an eigenvalue: `(lambda - 1)/(N - 1)`.
    pub fn isc_from_eigenvalue(&self, k: usize) -> f64 {
        (self.eigenvalues[k] - 1.0) / (self.n_views() as f64 - 1.0)
    }
}

/// Fits multiway CCA on N aligned views. The top-d stacked eigenvectors are
/// split into per-view transform columns; each stacked vector is scaled so
/// its total within-set variance equals N (average unit variance per view),
/// which keeps the eigen-residual and the ISC/eigenvalue relation intact.
pub fn fit_mcca(views: &[TimeSeriesMatrix], d: usize, ridge: f64) -> Result<MccaModel> {
    let mats: Vec<&Array2<f64>> = views.iter().map(|v| &v.data).collect();
    fit_mcca_mats(&mats, d, ridge)
}

pub fn fit_mcca_mats(views: &[&Array2<f64>], d: usize, ridge: f64) -> Result<MccaModel> {
    let n = views.len();
    if n < 2 {
        return Err(Error::Config(format!("MCCA needs at least 2 views, got {n}")));
    }
    let m = views[0].nrows();
    for (i, v) in views.iter().enumerate() {
        if v.nrows() != m {
            return Err(Error::Shape(format!(
                "view {i} has {} samples, expected {m}",
                v.nrows()
            )));
        }
    }
    let view_dims: Vec<usize> = views.iter().map(|v| v.ncols()).collect();
    let min_dim = *view_dims.iter().min().unwrap();
    if d == 0 || d > min_dim {
        return Err(Error::Config(format!("d={d} out of range 1..={min_dim}")));
    }
    if m < 2 {
        return Err(Error::DegenerateSample("MCCA needs at least 2 samples".into()));
    }

    let mut centered = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    for v in views {
        let mut c = (*v).clone();
        means.push(linalg::center_columns(&mut c));
        centered.push(c);
    }

    let total: usize = view_dims.iter().sum();
    let offsets: Vec<usize> = view_dims
        .iter()
        .scan(0usize, |acc, &w| {
            let o = *acc;
            *acc += w;
            Some(o)
        })
        .collect();

    let mut r = Array2::zeros((total, total));
    let mut dm = Array2::zeros((total, total));
    for j in 0..n {
        for k in j..n {
            let block = linalg::covariance(centered[j].view(), centered[k].view(), true)?;
            let (oj, ok) = (offsets[j], offsets[k]);
            r.slice_mut(s![oj..oj + view_dims[j], ok..ok + view_dims[k]])
                .assign(&block);
            if j != k {
                r.slice_mut(s![ok..ok + view_dims[k], oj..oj + view_dims[j]])
                    .assign(&block.t());
            } else {
                dm.slice_mut(s![oj..oj + view_dims[j], oj..oj + view_dims[j]])
                    .assign(&block);
            }
        }
    }

    let eig = linalg::generalized_sym_eig(r.view(), dm.view(), ridge)?;

    let mut proj: Vec<Array2<f64>> = view_dims.iter().map(|&w| Array2::zeros((w, d))).collect();
    for col in 0..d {
        let v = eig.eigenvectors.column(col).to_owned();
        // within-set variance v' D v, rescaled to N
        let dv = dm.dot(&v);
        let wvar: f64 = v.iter().zip(dv.iter()).map(|(a, b)| a * b).sum();
        let scale = if wvar > 0.0 {
            (n as f64 / wvar).sqrt()
        } else {
            1.0
        };
        for (vi, &off) in offsets.iter().enumerate() {
            for row in 0..view_dims[vi] {
                proj[vi][[row, col]] = v[off + row] * scale;
            }
        }
    }

    // Least-squares reconstruction from shared components, per view.
    let mut recon = Vec::with_capacity(n);
    for vi in 0..n {
        let s_n = centered[vi].dot(&proj[vi]);
        let gram = s_n.t().dot(&s_n);
        let gram_na = linalg::to_na(gram.view());
        let rhs = s_n.t().dot(&centered[vi]);
        let rhs_na = linalg::to_na(rhs.view());
        let solved = gram_na
            .lu()
            .solve(&rhs_na)
            .ok_or_else(|| Error::Numeric("singular component Gram matrix in MCCA".into()))?;
        recon.push(linalg::from_na(&solved));
    }

    let eigenvalues = eig.eigenvalues.slice(s![..d]).to_owned();
    Ok(MccaModel {
        proj,
        recon,
        eigenvalues,
        view_dims,
        means,
        ridge_used: ridge,
    })
}

/// Inter-set correlation of one shared dimension across N projected views:
/// the ratio of between-set to within-set covariance, normalized by N-1.
pub fn isc(projections: &[TimeSeriesMatrix], dim: usize) -> Result<f64> {
    let n = projections.len();
    if n < 2 {
        return Err(Error::Config("ISC needs at least 2 projections".into()));
    }
    let m = projections[0].samples();
    let d = projections[0].channels();
    for p in projections {
        if p.samples() != m || p.channels() != d {
            return Err(Error::Shape("ISC projections must share shape".into()));
        }
    }
    if dim >= d {
        return Err(Error::Config(format!("dim {dim} out of range 0..{d}")));
    }
    let cols: Vec<Array1<f64>> = projections
        .iter()
        .map(|p| {
            let mut c = p.data.column(dim).to_owned();
            let mean = c.mean().unwrap();
            c -= mean;
            c
        })
        .collect();
    let mut r_b = 0.0;
    let mut r_w = 0.0;
    for j in 0..n {
        for k in 0..n {
            let cov = cols[j].dot(&cols[k]) / (m as f64 - 1.0);
            if j == k {
                r_w += cov;
            } else {
                r_b += cov;
            }
        }
    }
    if r_w <= 0.0 {
        return Err(Error::DegenerateVariance(
            "zero within-set covariance in ISC".into(),
        ));
    }
    Ok(r_b / ((n as f64 - 1.0) * r_w))
}

/// Projects one view onto the shared dimensions; with `back_project` set the
/// components are mapped back to the original channel space through the
/// stored least-squares reconstruction (rank-d denoising).
pub fn denoise(
    model: &MccaModel,
    view_index: usize,
    x: &TimeSeriesMatrix,
    back_project: bool,
) -> Result<TimeSeriesMatrix> {
    if view_index >= model.n_views() {
        return Err(Error::Config(format!(
            "view index {view_index} out of range 0..{}",
            model.n_views()
        )));
    }
    if x.channels() != model.view_dims[view_index] {
        return Err(Error::Shape(format!(
            "view {view_index} expects {} channels, got {}",
            model.view_dims[view_index],
            x.channels()
        )));
    }
    let mut centered = x.data.clone();
    for mut row in centered.rows_mut() {
        row -= &model.means[view_index];
    }
    let components = centered.dot(&model.proj[view_index]);
    let out = if back_project {
        let mut rec = components.dot(&model.recon[view_index]);
        for mut row in rec.rows_mut() {
            row += &model.means[view_index];
        }
        rec
    } else {
        components
    };
    let mut ts = TimeSeriesMatrix::new(out, x.fs_hz)?;
    ts.burn_in = x.burn_in;
    Ok(ts)
}
