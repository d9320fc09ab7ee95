//! Deep multiway CCA: N encoders map their views into a shared d-dimensional
//! code space trained to maximize the sum of pairwise correlations, while N
//! decoders reconstruct every view from the concatenated codes; the joint
//! objective trades correlation against reconstruction error.

use crate::dcca::{corr_objective, objective_ridge, soften, Split};
use crate::error::{Error, Result};
use crate::neural::{Activation, DenseNetwork, Gradients, Mode};
use crate::timeseries::TimeSeriesMatrix;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmccaHyper {
    /// Per-view shared code dimensionality.
    pub d: usize,
    pub eta: f64,
    pub batch: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub seeds_tried: usize,
    pub patience: usize,
    /// Reconstruction trade-off weight (lambda in the joint cost).
    pub mse_weight: f64,
    /// Encoder hidden widths.
    pub enc_hidden: Vec<usize>,
    /// Decoder hidden widths; the decoder output layer is always linear.
    pub dec_hidden: Vec<usize>,
    /// Hidden layers use leaky ReLU (slope 0.1) when set; all-linear otherwise.
    pub nonlinear: bool,
    pub seed: u64,
}

impl Default for DmccaHyper {
    fn default() -> Self {
        DmccaHyper {
            d: 10,
            eta: 1e-3,
            batch: 2048,
            dropout: 0.0,
            epochs: 50,
            seeds_tried: 3,
            patience: 10,
            mse_weight: 0.1,
            enc_hidden: vec![60, 60],
            dec_hidden: vec![60, 110],
            nonlinear: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmccaModel {
    pub encoders: Vec<DenseNetwork>,
    pub decoders: Vec<DenseNetwork>,
    pub mse_weight: f64,
    pub hyper: DmccaHyper,
}

#[derive(Debug, Clone)]
pub struct DmccaGrads {
    pub encoders: Vec<Gradients>,
    pub decoders: Vec<Gradients>,
}

/// Sum of the pairwise correlation objective over all ordered view pairs
/// (each unordered pair counted twice), with the matching per-code gradients.
pub fn total_pairwise_corr(
    codes: &[ArrayView2<f64>],
    ridge: f64,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let n = codes.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "pairwise correlation needs at least 2 codes, got {n}"
        )));
    }
    let shape = codes[0].dim();
    for (i, c) in codes.iter().enumerate() {
        if c.dim() != shape {
            return Err(Error::Shape(format!(
                "code {i} has shape {:?}, expected {shape:?}",
                c.dim()
            )));
        }
    }
    let mut rho_total = 0.0;
    let mut grads: Vec<Array2<f64>> = codes.iter().map(|c| Array2::zeros(c.dim())).collect();
    for j in 0..n {
        for k in (j + 1)..n {
            let (rho, gj, gk) = corr_objective(codes[j], codes[k], ridge)?;
            rho_total += 2.0 * rho;
            grads[j].scaled_add(2.0, &gj);
            grads[k].scaled_add(2.0, &gk);
        }
    }
    Ok((rho_total, grads))
}

fn build_encoder(input: usize, hyper: &DmccaHyper, seed: u64) -> Result<DenseNetwork> {
    build_net(input, &hyper.enc_hidden, hyper.d, hyper, seed)
}

fn build_decoder(n_views: usize, output: usize, hyper: &DmccaHyper, seed: u64) -> Result<DenseNetwork> {
    build_net(n_views * hyper.d, &hyper.dec_hidden, output, hyper, seed)
}

fn build_net(
    input: usize,
    hidden: &[usize],
    output: usize,
    hyper: &DmccaHyper,
    seed: u64,
) -> Result<DenseNetwork> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
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

/// Joint cost on one batch: `E = rho_total - mse_weight * sum_n MSE_n`, with
/// gradients for ascent. The correlation term reaches only the encoders; the
/// reconstruction term backpropagates through each decoder into all encoders
/// via the concatenated code. `rng` enables training-mode dropout; pass None
/// for a deterministic evaluation pass.
pub fn dmcca_cost(
    model: &DmccaModel,
    views: &[ArrayView2<f64>],
    ridge: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, f64, Vec<f64>, DmccaGrads)> {
    let n = model.encoders.len();
    if views.len() != n {
        return Err(Error::Shape(format!(
            "{} views supplied to a {n}-view model",
            views.len()
        )));
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
    let d = model.hyper.d;

    // encoder forwards and concatenated code
    let mut codes = Vec::with_capacity(n);
    let mut enc_tapes = Vec::with_capacity(n);
    for (enc, v) in model.encoders.iter().zip(views) {
        let mode = match rng.as_deref_mut() {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        let (h, tape) = enc.forward(*v, mode)?;
        codes.push(h);
        enc_tapes.push(tape);
    }
    let mut y = Array2::zeros((m, n * d));
    for (i, c) in codes.iter().enumerate() {
        y.slice_mut(s![.., i * d..(i + 1) * d]).assign(c);
    }

    // correlation term
    let code_views: Vec<ArrayView2<f64>> = codes.iter().map(|c| c.view()).collect();
    let (rho_total, mut code_grads) = total_pairwise_corr(&code_views, ridge)?;

    // reconstruction term: decoders read the full concatenated code
    let mut mse = Vec::with_capacity(n);
    let mut dec_grads = Vec::with_capacity(n);
    let mut y_grad = Array2::zeros(y.dim());
    for (i, dec) in model.decoders.iter().enumerate() {
        let mode = match rng.as_deref_mut() {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        let (xh, tape) = dec.forward(y.view(), mode)?;
        let resid = &xh - &views[i];
        let d_n = views[i].ncols();
        let mse_i = resid.iter().map(|v| v * v).sum::<f64>() / (m * d_n) as f64;
        mse.push(mse_i);
        // dE/dxh = -mse_weight * 2 (xh - x) / (m * d_n); computed even when
        // the weight is zero so the zero-weighted path is exercised
        let upstream = &resid * (-model.mse_weight * 2.0 / (m * d_n) as f64);
        let g = dec.backward(&tape, upstream.view())?;
        // gradient w.r.t. the decoder input (the concatenated code)
        let input_grad = decoder_input_gradient(dec, &tape, upstream.view())?;
        y_grad += &input_grad;
        dec_grads.push(g);
    }
    for (i, cg) in code_grads.iter_mut().enumerate() {
        *cg += &y_grad.slice(s![.., i * d..(i + 1) * d]);
    }

    let mut enc_grads = Vec::with_capacity(n);
    for ((enc, tape), cg) in model.encoders.iter().zip(&enc_tapes).zip(&code_grads) {
        enc_grads.push(enc.backward(tape, cg.view())?);
    }

    let e = rho_total - model.mse_weight * mse.iter().sum::<f64>();
    Ok((
        e,
        rho_total,
        mse,
        DmccaGrads {
            encoders: enc_grads,
            decoders: dec_grads,
        },
    ))
}

/// Gradient of a decoder's scalar loss contribution w.r.t. its input batch,
/// obtained by chaining the upstream gradient back through every layer.
fn decoder_input_gradient(
    net: &DenseNetwork,
    tape: &crate::neural::ForwardTape,
    upstream: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    net.input_gradient(tape, upstream)
}

fn select_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn eval_rho_total(model: &DmccaModel, views: &[Array2<f64>]) -> Result<f64> {
    let mut codes = Vec::with_capacity(views.len());
    for (enc, v) in model.encoders.iter().zip(views) {
        let (h, _) = enc.forward(v.view(), Mode::Eval)?;
        codes.push(h);
    }
    let ridge = codes.iter().map(|c| objective_ridge(c.view())).sum::<f64>() / codes.len() as f64;
    let code_views: Vec<ArrayView2<f64>> = codes.iter().map(|c| c.view()).collect();
    let (rho, _) = total_pairwise_corr(&code_views, ridge)?;
    Ok(rho)
}

/// Trains the deep multiway model by minibatch gradient ascent on the joint
/// cost, with seed selection and validation early-stopping on the total
/// pairwise correlation. `log` receives one JSON line per epoch.
pub fn train_dmcca(
    views: &[TimeSeriesMatrix],
    split: &Split,
    hyper: &DmccaHyper,
    mut log: Option<&mut dyn Write>,
) -> Result<DmccaModel> {
    let n = views.len();
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 views, got {n}")));
    }
    let m = views[0].samples();
    for (i, v) in views.iter().enumerate() {
        if v.samples() != m {
            return Err(Error::Shape(format!(
                "view {i} has {} samples, expected {m}",
                v.samples()
            )));
        }
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

    let val_views: Vec<Array2<f64>> = views
        .iter()
        .map(|v| select_rows(&v.data, &split.val))
        .collect();

    // seed selection on untrained validation correlation
    let mut best: Option<(f64, DmccaModel)> = None;
    for s in 0..hyper.seeds_tried.max(1) {
        let base = hyper.seed.wrapping_add(s as u64).wrapping_mul(2 * n as u64 + 1);
        let mut encoders = Vec::with_capacity(n);
        let mut decoders = Vec::with_capacity(n);
        for (i, v) in views.iter().enumerate() {
            encoders.push(build_encoder(v.channels(), hyper, base.wrapping_add(i as u64))?);
            decoders.push(build_decoder(
                n,
                v.channels(),
                hyper,
                base.wrapping_add((n + i) as u64),
            )?);
        }
        let candidate = DmccaModel {
            encoders,
            decoders,
            mse_weight: hyper.mse_weight,
            hyper: hyper.clone(),
        };
        let rho = eval_rho_total(&candidate, &val_views)?;
        if best.as_ref().map_or(true, |(b, _)| rho > *b) {
            best = Some((rho, candidate));
        }
    }
    let (init_rho, mut model) = best.unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(0xd3cca));
    let mut best_val = init_rho;
    let mut best_model: Option<DmccaModel> = Some(model.clone());
    let mut stale = 0usize;
    let start = Instant::now();

    'epochs: for epoch in 0..hyper.epochs {
        let mut blocks: Vec<Vec<usize>> = split
            .train
            .chunks(hyper.batch)
            .map(|c| c.to_vec())
            .collect();
        if blocks.len() > 1 && blocks.last().unwrap().len() <= hyper.d {
            let tail = blocks.pop().unwrap();
            blocks.last_mut().unwrap().extend(tail);
        }
        blocks.shuffle(&mut rng);

        let mut e_sum = 0.0;
        let mut n_batches = 0usize;
        for block in blocks {
            let batch_views: Vec<Array2<f64>> = views
                .iter()
                .map(|v| select_rows(&v.data, &block))
                .collect();
            let batch_refs: Vec<ArrayView2<f64>> = batch_views.iter().map(|v| v.view()).collect();
            // estimate the stabilizer from one eval pass over the codes
            let ridge = {
                let mut acc = 0.0;
                for (enc, v) in model.encoders.iter().zip(&batch_refs) {
                    let Some((h, _)) = soften(enc.forward(*v, Mode::Eval))? else {
                        break 'epochs;
                    };
                    acc += objective_ridge(h.view());
                }
                acc / n as f64
            };
            let Some((e, rho, _, grads)) =
                soften(dmcca_cost(&model, &batch_refs, ridge, Some(&mut rng)))?
            else {
                break 'epochs;
            };
            if !e.is_finite() || !rho.is_finite() {
                break 'epochs;
            }
            for (enc, g) in model.encoders.iter_mut().zip(&grads.encoders) {
                if soften(enc.ascend(g, hyper.eta))?.is_none() {
                    break 'epochs;
                }
            }
            for (dec, g) in model.decoders.iter_mut().zip(&grads.decoders) {
                if soften(dec.ascend(g, hyper.eta))?.is_none() {
                    break 'epochs;
                }
            }
            e_sum += e;
            n_batches += 1;
        }
        let Some(val_rho) = soften(eval_rho_total(&model, &val_views))? else {
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
                    "train_cost": e_sum / n_batches as f64,
                    "val_rho_total": val_rho,
                    "wall_s": start.elapsed().as_secs_f64(),
                })
            )
            .map_err(Error::Io)?;
        }
        if val_rho > best_val {
            best_val = val_rho;
            best_model = Some(model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }
    if let Some(b) = best_model {
        model = b;
    }
    Ok(model)
}

/// Eval-mode encoder pass for one view: the denoised d-dimensional
/// representation fed to downstream linear or deep CCA.
pub fn encode(model: &DmccaModel, view_index: usize, x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    if view_index >= model.encoders.len() {
        return Err(Error::Config(format!(
            "view index {view_index} out of range 0..{}",
            model.encoders.len()
        )));
    }
    let (h, _) = model.encoders[view_index].forward(x.data.view(), Mode::Eval)?;
    let mut ts = TimeSeriesMatrix::new(h, x.fs_hz)?;
    ts.burn_in = x.burn_in;
    Ok(ts)
}

/// Denoised channel-space reconstruction of every view: encode all views in
/// eval mode, concatenate the codes, and run each view's decoder. The output
/// keeps each view's original channel count, so it can feed the same
/// downstream chain as the raw data.
pub fn reconstruct(
    model: &DmccaModel,
    views: &[TimeSeriesMatrix],
) -> Result<Vec<TimeSeriesMatrix>> {
    let n = model.encoders.len();
    if views.len() != n {
        return Err(Error::Shape(format!(
            "{} views supplied to a {n}-view model",
            views.len()
        )));
    }
    let m = views[0].samples();
    let d = model.hyper.d;
    let mut y = Array2::zeros((m, n * d));
    for (i, (enc, v)) in model.encoders.iter().zip(views).enumerate() {
        if v.samples() != m {
            return Err(Error::Shape(format!(
                "view {i} has {} samples, expected {m}",
                v.samples()
            )));
        }
        let (h, _) = enc.forward(v.data.view(), Mode::Eval)?;
        y.slice_mut(s![.., i * d..(i + 1) * d]).assign(&h);
    }
    let mut out = Vec::with_capacity(n);
    for (i, dec) in model.decoders.iter().enumerate() {
        let (xh, _) = dec.forward(y.view(), Mode::Eval)?;
        let mut ts = TimeSeriesMatrix::new(xh, views[i].fs_hz)?;
        ts.burn_in = views[i].burn_in;
        out.push(ts);
    }
    Ok(out)
}
