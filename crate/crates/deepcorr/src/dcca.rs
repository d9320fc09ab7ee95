//! Deep CCA: the correlation objective is the trace norm of the whitened
//! cross-covariance of the two network outputs, maximized by gradient ascent
//! with analytic gradients. Training selects among random initializations by
//! validation correlation, early-stops on validation correlation, and fits a
//! final linear-CCA readout on the train-set network outputs.

use crate::cca::{self, LinearCcaModel, View};
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics;
use crate::neural::{Activation, DenseNetwork, Mode};
use crate::timeseries::TimeSeriesMatrix;
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DccaHyper {
    /// Shared output dimensionality.
    pub d: usize,
    pub eta: f64,
    pub batch: usize,
    pub dropout: f64,
    /// Maximum epochs; early stopping may end training sooner.
    pub epochs: usize,
    pub seeds_tried: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Hidden layer widths for both networks.
    pub hidden: Vec<usize>,
    /// Hidden layers use leaky ReLU (slope 0.1) when set; all-linear otherwise.
    pub nonlinear: bool,
    pub seed: u64,
}

impl Default for DccaHyper {
    fn default() -> Self {
        DccaHyper {
            d: 1,
            eta: 1e-3,
            batch: 2048,
            dropout: 0.0,
            epochs: 50,
            seeds_tried: 3,
            patience: 10,
            hidden: vec![60, 60],
            nonlinear: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DccaModel {
    pub net_x: DenseNetwork,
    pub net_y: DenseNetwork,
    pub readout_cca: LinearCcaModel,
    pub hyper: DccaHyper,
}

/// Train/validation row indices into aligned views.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Split {
    /// Leading fraction for training, remainder for validation.
    pub fn leading_fraction(m: usize, train_frac: f64) -> Self {
        let cut = ((m as f64) * train_frac).round() as usize;
        Split {
            train: (0..cut).collect(),
            val: (cut..m).collect(),
        }
    }
}

/// Default stabilizing ridge for batch covariances: `1e-4 * trace / d`.
pub fn objective_ridge(h: ArrayView2<f64>) -> f64 {
    let d = h.ncols().max(1) as f64;
    let m = h.nrows() as f64;
    let mut mean = vec![0.0; h.ncols()];
    for row in h.rows() {
        for (j, v) in row.iter().enumerate() {
            mean[j] += v;
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    let mut trace = 0.0;
    for row in h.rows() {
        for (j, v) in row.iter().enumerate() {
            let c = v - mean[j];
            trace += c * c;
        }
    }
    trace /= (m - 1.0).max(1.0);
    1e-4 * trace / d
}

/// Correlation objective and its analytic gradients: rho is the sum of
/// singular values of the whitened cross-covariance of the centered batches;
/// `ridge` is added to both auto-covariances before whitening.
///
/// The computation runs on a canonical ordering of the two batches so that
/// swapping the arguments swaps the two gradients bit-for-bit.
pub fn corr_objective(
    hx: ArrayView2<f64>,
    hy: ArrayView2<f64>,
    ridge: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if hx.dim() == hy.dim() && lex_greater(hx, hy) {
        let (rho, gy, gx) = corr_objective_ordered(hy, hx, ridge)?;
        return Ok((rho, gx, gy));
    }
    corr_objective_ordered(hx, hy, ridge)
}

fn lex_greater(a: ArrayView2<f64>, b: ArrayView2<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Greater => return true,
            std::cmp::Ordering::Less => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

fn corr_objective_ordered(
    hx: ArrayView2<f64>,
    hy: ArrayView2<f64>,
    ridge: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let (m, d) = hx.dim();
    if hy.dim() != (m, d) {
        return Err(Error::Shape(format!(
            "batch shapes differ: {:?} vs {:?}",
            hx.dim(),
            hy.dim()
        )));
    }
    if m <= d {
        return Err(Error::DegenerateSample(format!(
            "batch of {m} samples cannot estimate {d}-dimensional correlation"
        )));
    }
    let mut xc = hx.to_owned();
    let mut yc = hy.to_owned();
    linalg::center_columns(&mut xc);
    linalg::center_columns(&mut yc);

    let cxx = linalg::covariance(xc.view(), xc.view(), true)?;
    let cyy = linalg::covariance(yc.view(), yc.view(), true)?;
    let cxy = linalg::covariance(xc.view(), yc.view(), true)?;

    let wx = linalg::inv_sqrt_sym(cxx.view(), ridge)?.matrix;
    let wy = linalg::inv_sqrt_sym(cyy.view(), ridge)?.matrix;

    let t = wx.dot(&cxy).dot(&wy);
    let svd = linalg::svd(t.view())?;
    let rho = svd.singular_values.sum();

    let u = &svd.u;
    let v = &svd.v;
    let sdiag = Array2::from_diag(&svd.singular_values);

    let nab_xy = wx.dot(u).dot(&v.t()).dot(&wy);
    let nab_xx = wx.dot(u).dot(&sdiag).dot(&u.t()).dot(&wx) * -0.5;
    let nab_yy = wy.dot(v).dot(&sdiag).dot(&v.t()).dot(&wy) * -0.5;

    let scale = 1.0 / (m as f64 - 1.0);
    let grad_hx = (xc.dot(&nab_xx) * 2.0 + yc.dot(&nab_xy.t())) * scale;
    let grad_hy = (yc.dot(&nab_yy) * 2.0 + xc.dot(&nab_xy)) * scale;

    Ok((rho, grad_hx, grad_hy))
}

fn select_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn eval_rho(net_x: &DenseNetwork, net_y: &DenseNetwork, x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    let (hx, _) = net_x.forward(x.view(), Mode::Eval)?;
    let (hy, _) = net_y.forward(y.view(), Mode::Eval)?;
    let ridge = 0.5 * (objective_ridge(hx.view()) + objective_ridge(hy.view()));
    let (rho, _, _) = corr_objective(hx.view(), hy.view(), ridge)?;
    Ok(rho)
}

fn build_net(input: usize, hyper: &DccaHyper, seed: u64) -> Result<DenseNetwork> {
    let mut dims = vec![input];
    dims.extend_from_slice(&hyper.hidden);
    dims.push(hyper.d);
    let n_layers = dims.len() - 1;
    let mut activations = Vec::with_capacity(n_layers);
    let mut dropout = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let last = k == n_layers - 1;
        if last || !hyper.nonlinear {
            activations.push(Activation::Linear);
        } else {
            activations.push(Activation::LeakyRelu { slope: 0.1 });
        }
        dropout.push(if last { 0.0 } else { hyper.dropout });
    }
    DenseNetwork::new(&dims, &activations, &dropout, seed)
}

/// Contiguous batch blocks over the training indices, order shuffled per
/// epoch; a short tail block is merged into its predecessor so every batch
/// stays larger than d.
fn batch_blocks(train: &[usize], batch: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut blocks: Vec<Vec<usize>> = train.chunks(batch).map(|c| c.to_vec()).collect();
    if blocks.len() > 1 {
        let last_len = blocks.last().unwrap().len();
        if last_len <= d {
            let tail = blocks.pop().unwrap();
            blocks.last_mut().unwrap().extend(tail);
        }
    }
    blocks.shuffle(rng);
    blocks
}

/// Trains deep CCA on aligned views. For each candidate seed the validation
/// correlation of the untrained networks is measured and the best start is
/// kept; minibatch gradient ascent then runs with early stopping on
/// validation correlation, restoring the best-scoring parameters. `log`
/// receives one JSON line per epoch (epoch, train rho, validation rho, wall
/// seconds) when provided.

/// Classifies a training-step error: numeric failures (divergence under
/// extreme hyperparameters) become `None` so the caller can stop early and
/// restore the best parameters seen so far; anything else propagates.
pub(crate) fn soften<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(
            Error::Numeric(_)
            | Error::DegenerateSample(_)
            | Error::DegenerateVariance(_)
            | Error::Symmetry(_),
        ) => Ok(None),
        Err(other) => Err(other),
    }
}

pub fn train_dcca(
    x: &TimeSeriesMatrix,
    y: &TimeSeriesMatrix,
    split: &Split,
    hyper: &DccaHyper,
    mut log: Option<&mut dyn Write>,
) -> Result<DccaModel> {
    if x.samples() != y.samples() {
        return Err(Error::Shape(format!(
            "views have {} and {} samples",
            x.samples(),
            y.samples()
        )));
    }
    if hyper.batch <= hyper.d {
        return Err(Error::Config(format!(
            "batch size {} must exceed d={}",
            hyper.batch, hyper.d
        )));
    }
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Config("train and validation splits must be non-empty".into()));
    }

    let x_train = select_rows(&x.data, &split.train);
    let y_train = select_rows(&y.data, &split.train);
    let x_val = select_rows(&x.data, &split.val);
    let y_val = select_rows(&y.data, &split.val);

    // seed selection: best validation rho before any training
    let mut best: Option<(f64, DenseNetwork, DenseNetwork)> = None;
    for s in 0..hyper.seeds_tried.max(1) {
        let base = hyper.seed.wrapping_add(s as u64);
        let net_x = build_net(x.channels(), hyper, base.wrapping_mul(2))?;
        let net_y = build_net(y.channels(), hyper, base.wrapping_mul(2).wrapping_add(1))?;
        let rho = eval_rho(&net_x, &net_y, &x_val, &y_val)?;
        if best.as_ref().map_or(true, |(b, _, _)| rho > *b) {
            best = Some((rho, net_x, net_y));
        }
    }
    let (init_rho, mut net_x, mut net_y) = best.unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(0x5eed));
    let mut best_val = init_rho;
    let mut best_nets: Option<(DenseNetwork, DenseNetwork)> = Some((net_x.clone(), net_y.clone()));
    let mut stale = 0usize;
    let start = Instant::now();

    'epochs: for epoch in 0..hyper.epochs {
        let mut train_rho_sum = 0.0;
        let mut n_batches = 0usize;
        for block in batch_blocks(&split.train, hyper.batch, hyper.d, &mut rng) {
            let xb = select_rows(&x.data, &block);
            let yb = select_rows(&y.data, &block);
            let Some((hx, tape_x)) = soften(net_x.forward(xb.view(), Mode::Train(&mut rng)))?
            else {
                break 'epochs;
            };
            let Some((hy, tape_y)) = soften(net_y.forward(yb.view(), Mode::Train(&mut rng)))?
            else {
                break 'epochs;
            };
            let ridge = 0.5 * (objective_ridge(hx.view()) + objective_ridge(hy.view()));
            let Some((rho, grad_hx, grad_hy)) =
                soften(corr_objective(hx.view(), hy.view(), ridge))?
            else {
                break 'epochs;
            };
            if !rho.is_finite() {
                break 'epochs;
            }
            let Some(gx) = soften(net_x.backward(&tape_x, grad_hx.view()))? else {
                break 'epochs;
            };
            let Some(gy) = soften(net_y.backward(&tape_y, grad_hy.view()))? else {
                break 'epochs;
            };
            if soften(net_x.ascend(&gx, hyper.eta))?.is_none() {
                break 'epochs;
            }
            if soften(net_y.ascend(&gy, hyper.eta))?.is_none() {
                break 'epochs;
            }
            train_rho_sum += rho;
            n_batches += 1;
        }
        let train_rho = train_rho_sum / n_batches as f64;
        let Some(val_rho) = soften(eval_rho(&net_x, &net_y, &x_val, &y_val))? else {
            break 'epochs;
        };
        if !val_rho.is_finite() {
            break 'epochs;
        }
        if let Some(w) = log.as_deref_mut() {
            writeln!(
                w,
                "{}",
                serde_json::json!({
                    "epoch": epoch,
                    "train_rho": train_rho,
                    "val_rho": val_rho,
                    "wall_s": start.elapsed().as_secs_f64(),
                })
            )
            .map_err(Error::Io)?;
        }
        if val_rho > best_val {
            best_val = val_rho;
            best_nets = Some((net_x.clone(), net_y.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }
    if let Some((bx, by)) = best_nets {
        net_x = bx;
        net_y = by;
    }

    // final linear readout on train-set outputs; no ridge, so canon_corr is
    // the exact Pearson correlation of the projected training outputs
    let (hx, _) = net_x.forward(x_train.view(), Mode::Eval)?;
    let (hy, _) = net_y.forward(y_train.view(), Mode::Eval)?;
    let readout_cca = cca::fit_cca_mats(&hx, &hy, hyper.d, 0.0)?;

    Ok(DccaModel {
        net_x,
        net_y,
        readout_cca,
        hyper: hyper.clone(),
    })
}

/// Per-dimension Pearson correlations of the readout-projected network
/// outputs on held-out data.
pub fn evaluate_dcca(
    model: &DccaModel,
    x: &TimeSeriesMatrix,
    y: &TimeSeriesMatrix,
) -> Result<Vec<f64>> {
    if x.samples() != y.samples() {
        return Err(Error::Shape(format!(
            "views have {} and {} samples",
            x.samples(),
            y.samples()
        )));
    }
    let (hx, _) = model.net_x.forward(x.data.view(), Mode::Eval)?;
    let (hy, _) = model.net_y.forward(y.data.view(), Mode::Eval)?;
    let px = cca::project_mat(&model.readout_cca, &hx, View::Stimulus)?;
    let py = cca::project_mat(&model.readout_cca, &hy, View::Response)?;
    (0..px.ncols())
        .map(|k| metrics::pearson(&px.column(k).to_vec(), &py.column(k).to_vec()))
        .collect()
}
