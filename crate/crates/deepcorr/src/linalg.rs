//! Dense real linear algebra primitives: covariance estimation, symmetric
//! eigendecomposition, SVD, and inverse matrix square roots with ridge
//! regularization.
//!
//! Everything operates on `ndarray::Array2<f64>` in row-major order. The
//! eigen/SVD backends are delegated to nalgebra; results are re-sorted
//! descending and given a deterministic sign convention so projections are
//! reproducible across runs and platforms.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Relative eigenvalue floor used inside `inv_sqrt_sym`: eigenvalues below
/// `EIG_FLOOR_REL * lambda_max` are clamped to that floor before the -1/2
/// power.
pub const EIG_FLOOR_REL: f64 = 1e-10;

/// Symmetric eigendecomposition, eigenvalues sorted descending and
/// eigenvector columns paired to them.
#[derive(Debug, Clone)]
pub struct SymEigResult {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

/// Thin SVD with singular values sorted descending.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub v: Array2<f64>,
}

/// Result of `inv_sqrt_sym`. `clamped` counts how many eigenvalues hit the
/// floor, so callers can surface ill-conditioning without failing.
#[derive(Debug, Clone)]
pub struct InvSqrtResult {
    pub matrix: Array2<f64>,
    pub clamped: usize,
}

pub(crate) fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().cloned())
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Checks that every entry of `a` is finite.
pub fn check_finite(a: ArrayView2<f64>, what: &str) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{what} contains non-finite entries")));
    }
    Ok(())
}

/// Subtracts the column means from `x` in place and returns the means.
pub fn center_columns(x: &mut Array2<f64>) -> Array1<f64> {
    let means = x.mean_axis(Axis(0)).expect("non-empty matrix");
    for mut row in x.rows_mut() {
        row -= &means;
    }
    means
}

/// Sample covariance `(1/(m-1)) X̄ᵀ Ȳ`. When `centered` is true the inputs
/// are taken as already column-mean-centered and centering is skipped.
pub fn covariance(x: ArrayView2<f64>, y: ArrayView2<f64>, centered: bool) -> Result<Array2<f64>> {
    let m = x.nrows();
    if y.nrows() != m {
        return Err(Error::Shape(format!(
            "covariance row counts differ: {} vs {}",
            m,
            y.nrows()
        )));
    }
    if m < 2 {
        return Err(Error::DegenerateSample(format!(
            "covariance needs at least 2 samples, got {m}"
        )));
    }
    if centered {
        Ok(x.t().dot(&y) / (m as f64 - 1.0))
    } else {
        let mut xo = x.to_owned();
        let mut yo = y.to_owned();
        center_columns(&mut xo);
        center_columns(&mut yo);
        Ok(xo.t().dot(&yo) / (m as f64 - 1.0))
    }
}

/// Largest absolute entry of a matrix (0 for empty).
pub fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn require_symmetric(a: ArrayView2<f64>, tol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = max_abs(a).max(1.0);
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[[i, j]] - a[[j, i]]).abs() > tol * scale {
                return Err(Error::Symmetry(format!(
                    "entries ({i},{j}) and ({j},{i}) differ by {}",
                    (a[[i, j]] - a[[j, i]]).abs()
                )));
            }
        }
    }
    Ok(())
}

/// Flips eigenvector / singular-vector columns so the largest-magnitude entry
/// of each `u` column is non-negative; `v`, when present, is flipped to match.
fn fix_signs(u: &mut Array2<f64>, mut v: Option<&mut Array2<f64>>) {
    for j in 0..u.ncols() {
        let col = u.column(j);
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for (i, val) in col.iter().enumerate() {
            if val.abs() > best_abs {
                best_abs = val.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            u.column_mut(j).mapv_inplace(|x| -x);
            if let Some(ref mut vm) = v {
                vm.column_mut(j).mapv_inplace(|x| -x);
            }
        }
    }
}

/// Symmetric eigendecomposition of `a`, eigenvalues descending.
pub fn sym_eig(a: ArrayView2<f64>) -> Result<SymEigResult> {
    require_symmetric(a, 1e-8)?;
    check_finite(a, "sym_eig input")?;
    let p = a.nrows();
    // Symmetrize so tiny asymmetries never reach the backend.
    let mut s = a.to_owned();
    for i in 0..p {
        for j in 0..p {
            let avg = 0.5 * (a[[i, j]] + a[[j, i]]);
            s[[i, j]] = avg;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(to_na(s.view()));
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = Array2::zeros((p, p));
    for (out_j, &src_j) in order.iter().enumerate() {
        for i in 0..p {
            eigenvectors[[i, out_j]] = eig.eigenvectors[(i, src_j)];
        }
    }
    fix_signs(&mut eigenvectors, None);
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

/// `(A + ridge·I)^{-1/2}` for symmetric `A`, via eigendecomposition.
/// Eigenvalues below `EIG_FLOOR_REL * lambda_max` (after the ridge shift) are
/// clamped to the floor; the count of clamped values is reported in the
/// result instead of failing.
pub fn inv_sqrt_sym(a: ArrayView2<f64>, ridge: f64) -> Result<InvSqrtResult> {
    require_symmetric(a, 1e-8)?;
    if ridge < 0.0 {
        return Err(Error::Config(format!("ridge must be >= 0, got {ridge}")));
    }
    let p = a.nrows();
    let mut shifted = a.to_owned();
    for i in 0..p {
        shifted[[i, i]] += ridge;
    }
    let eig = sym_eig(shifted.view())?;
    let lambda_max = eig.eigenvalues[0].max(0.0);
    let floor = if lambda_max > 0.0 {
        EIG_FLOOR_REL * lambda_max
    } else {
        EIG_FLOOR_REL
    };
    let mut clamped = 0usize;
    let inv_sqrt_vals: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            let l = if l < floor {
                clamped += 1;
                floor
            } else {
                l
            };
            1.0 / l.sqrt()
        })
        .collect();
    // V diag(l^-1/2) Vᵀ
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &s) in inv_sqrt_vals.iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|x| x * s);
    }
    let mut matrix = scaled.dot(&v.t());
    // Exact symmetry for downstream symmetry checks.
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = 0.5 * (matrix[[i, j]] + matrix[[j, i]]);
            matrix[[i, j]] = avg;
            matrix[[j, i]] = avg;
        }
    }
    Ok(InvSqrtResult { matrix, clamped })
}

/// Thin SVD `A = U diag(s) Vᵀ`, singular values descending, with the same
/// deterministic sign convention as `sym_eig`.
pub fn svd(a: ArrayView2<f64>) -> Result<SvdResult> {
    check_finite(a, "svd input")?;
    let svd = to_na(a)
        .svd_unordered(true, true)
        ;
    let u_na = svd.u.expect("requested U");
    let v_t_na = svd.v_t.expect("requested Vt");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap()
    });
    let singular_values = Array1::from_iter(order.iter().map(|&i| svd.singular_values[i]));
    let mut u = Array2::zeros((a.nrows(), k));
    let mut v = Array2::zeros((a.ncols(), k));
    for (out_j, &src_j) in order.iter().enumerate() {
        for i in 0..a.nrows() {
            u[[i, out_j]] = u_na[(i, src_j)];
        }
        for i in 0..a.ncols() {
            v[[i, out_j]] = v_t_na[(src_j, i)];
        }
    }
    fix_signs(&mut u, Some(&mut v));
    Ok(SvdResult {
        u,
        singular_values,
        v,
    })
}

/// Solves the generalized symmetric eigenproblem `R v = λ D v` by whitening
/// with `D^{-1/2}`: eigendecompose `D^{-1/2} R D^{-1/2}` and map the vectors
/// back by `v = D^{-1/2} w`. Eigenvalues descending.
pub fn generalized_sym_eig(
    r: ArrayView2<f64>,
    d: ArrayView2<f64>,
    ridge: f64,
) -> Result<SymEigResult> {
    if r.nrows() != d.nrows() || r.ncols() != d.ncols() || r.nrows() != r.ncols() {
        return Err(Error::Shape(format!(
            "generalized_sym_eig needs matching square matrices, got {}x{} and {}x{}",
            r.nrows(),
            r.ncols(),
            d.nrows(),
            d.ncols()
        )));
    }
    let w = inv_sqrt_sym(d, ridge)?;
    let transformed = w.matrix.dot(&r).dot(&w.matrix);
    let eig = sym_eig(transformed.view())?;
    let eigenvectors = w.matrix.dot(&eig.eigenvectors);
    Ok(SymEigResult {
        eigenvalues: eig.eigenvalues,
        eigenvectors,
    })
}

/// Scale-relative default ridge: `1e-6 · trace(A) / p`.
pub fn default_ridge(a: ArrayView2<f64>) -> f64 {
    let p = a.nrows().max(1) as f64;
    1e-6 * a.diag().sum() / p
}
