//! Config-driven analysis pipelines: six stimulus-response decoders built
//! from the linear/deep CCA and multiway stages, with cross-validation,
//! deterministic seeding, JSON reports, and hyperparameter sweeps.
//!
//! Pipeline wiring:
//! - `lcca` / `dcca`: per-subject two-view stage only.
//! - `lmlc` / `lmdc`: linear multiway stage first (lagged stimulus + raw
//!   responses), denoised responses back-projected to channel space, then a
//!   per-subject linear/deep two-view stage.
//! - `dmlc` / `dmdc`: deep multiway stage first; each subject's decoder
//!   reconstruction (channel space) is the denoised series fed to the
//!   two-view stage.
//!
//! When `preprocessing.filterbank` is on, two-view stage inputs are the
//! filterbank-expanded stimulus (channels x 21) and the response chain
//! PCA -> filterbank -> PCA; when off, raw series feed the stage directly
//! (useful for synthetic data whose channels need no spectral expansion).

use crate::cca::{self, View};
use crate::dcca::{self, DccaHyper, Split};
use crate::dmcca::{self, DmccaHyper};
use crate::error::{Error, Result};
use crate::mcca;
use crate::metrics::{self, Alternative};
use crate::signal::{self, FilterBank, FILTERBANK_ORDER};
use crate::timeseries::TimeSeriesMatrix;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Current config schema version; configs with any other value are rejected.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Lcca,
    Dcca,
    Lmlc,
    Lmdc,
    Dmlc,
    Dmdc,
}

impl PipelineKind {
    /// Pipelines whose first stage is a multiway model across all views.
    pub fn is_multiway(self) -> bool {
        matches!(
            self,
            PipelineKind::Lmlc | PipelineKind::Lmdc | PipelineKind::Dmlc | PipelineKind::Dmdc
        )
    }

    /// Pipelines whose per-subject stage is the deep two-view model.
    pub fn deep_final_stage(self) -> bool {
        matches!(
            self,
            PipelineKind::Dcca | PipelineKind::Lmdc | PipelineKind::Dmdc
        )
    }

    pub fn all() -> [PipelineKind; 6] {
        [
            PipelineKind::Lcca,
            PipelineKind::Dcca,
            PipelineKind::Lmlc,
            PipelineKind::Lmdc,
            PipelineKind::Dmlc,
            PipelineKind::Dmdc,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Lcca => "lcca",
            PipelineKind::Dcca => "dcca",
            PipelineKind::Lmlc => "lmlc",
            PipelineKind::Lmdc => "lmdc",
            PipelineKind::Dmlc => "dmlc",
            PipelineKind::Dmdc => "dmdc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusFeature {
    Envelope,
    Pc1,
    Rms,
    Flux,
}

fn default_band_low() -> f64 {
    0.1
}
fn default_band_high() -> f64 {
    12.0
}
fn default_pca_response() -> usize {
    60
}
fn default_pca_final() -> usize {
    139
}
fn default_true() -> bool {
    true
}

/// Spectral conditioning applied before the two-view stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessingConfig {
    /// Response band-pass lower edge in Hz (applied when `filterbank` is on).
    #[serde(default = "default_band_low")]
    pub band_low_hz: f64,
    /// Response band-pass upper edge in Hz.
    #[serde(default = "default_band_high")]
    pub band_high_hz: f64,
    /// First response PCA dimension (clamped to the channel count).
    #[serde(default = "default_pca_response")]
    pub pca_response: usize,
    /// Final response PCA dimension after filterbank expansion.
    #[serde(default = "default_pca_final")]
    pub pca_final: usize,
    /// Whether to run the band-pass / filterbank / PCA chain at all.
    #[serde(default = "default_true")]
    pub filterbank: bool,
}

impl Default for PreprocessingConfig {
    fn default() -> Self {
        PreprocessingConfig {
            band_low_hz: default_band_low(),
            band_high_hz: default_band_high(),
            pca_response: default_pca_response(),
            pca_final: default_pca_final(),
            filterbank: true,
        }
    }
}

fn default_lags() -> usize {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusConfig {
    /// Which audio-derived feature the CLI feeds in as the stimulus series.
    /// Echoed in reports; `run_pipeline` receives the series already built.
    #[serde(default = "default_feature")]
    pub feature: StimulusFeature,
    /// Time-lag embedding depth d_s for the multiway stage's stimulus view.
    #[serde(default = "default_lags")]
    pub lags: usize,
}

fn default_feature() -> StimulusFeature {
    StimulusFeature::Envelope
}

impl Default for StimulusConfig {
    fn default() -> Self {
        StimulusConfig {
            feature: default_feature(),
            lags: default_lags(),
        }
    }
}

fn default_d() -> usize {
    1
}
fn default_mcca_d() -> usize {
    10
}
fn default_eta() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    2048
}
fn default_mse_weight() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    20
}
fn default_seeds() -> usize {
    3
}
fn default_patience() -> usize {
    10
}
fn default_hidden() -> Vec<usize> {
    vec![60, 60]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Two-view stage output dimension.
    #[serde(default = "default_d")]
    pub d: usize,
    /// Multiway stage output dimension.
    #[serde(default = "default_mcca_d")]
    pub mcca_d: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_mse_weight")]
    pub mse_weight: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Candidate initialization seeds tried before training.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Hidden layer widths of the deep two-view networks; the `depth` sweep
    /// rewrites this as `[60; depth]`.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Absolute whitening ridge override; when absent, a scale-relative
    /// default (1e-6 x mean channel variance) is used per stage.
    #[serde(default)]
    pub ridge: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: default_d(),
            mcca_d: default_mcca_d(),
            eta: default_eta(),
            batch: default_batch(),
            dropout: 0.0,
            mse_weight: default_mse_weight(),
            epochs: default_epochs(),
            seeds: default_seeds(),
            patience: default_patience(),
            hidden: default_hidden(),
            ridge: None,
        }
    }
}

fn default_folds() -> usize {
    5
}
fn default_train_frac() -> f64 {
    0.8
}
fn default_val_frac() -> f64 {
    0.1
}
fn default_test_frac() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_val_frac")]
    pub val_frac: f64,
    #[serde(default = "default_test_frac")]
    pub test_frac: f64,
    /// Temporal (contiguous-block) splits by default; set false for a
    /// seeded random row split.
    #[serde(default = "default_true")]
    pub contiguous: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: default_folds(),
            train_frac: default_train_frac(),
            val_frac: default_val_frac(),
            test_frac: default_test_frac(),
            contiguous: true,
        }
    }
}

fn default_segment_seconds() -> Vec<f64> {
    vec![1.0, 5.0, 30.0]
}
fn default_n_segments() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Segment lengths for the match-vs-mismatch d-prime table.
    #[serde(default = "default_segment_seconds")]
    pub segment_seconds: Vec<f64>,
    #[serde(default = "default_n_segments")]
    pub n_segments: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            segment_seconds: default_segment_seconds(),
            n_segments: default_n_segments(),
        }
    }
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub pipeline: PipelineKind,
    #[serde(default)]
    pub preprocessing: PreprocessingConfig,
    #[serde(default)]
    pub stimulus: StimulusConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(pipeline: PipelineKind) -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            pipeline,
            preprocessing: PreprocessingConfig::default(),
            stimulus: StimulusConfig::default(),
            model: ModelConfig::default(),
            cv: CvConfig::default(),
            report: ReportConfig::default(),
            seed: 0,
        }
    }

    /// Parse a JSON config. Unknown keys anywhere in the document are
    /// rejected, as is any schema version other than [`SCHEMA_VERSION`].
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let frac_sum = self.cv.train_frac + self.cv.val_frac + self.cv.test_frac;
        if (frac_sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "cv split fractions must sum to 1, got {frac_sum}"
            )));
        }
        if self.cv.train_frac <= 0.0 || self.cv.val_frac <= 0.0 || self.cv.test_frac <= 0.0 {
            return Err(Error::Config("cv split fractions must be positive".into()));
        }
        if self.cv.folds == 0 {
            return Err(Error::Config("cv.folds must be >= 1".into()));
        }
        if self.model.d == 0 || self.model.mcca_d == 0 {
            return Err(Error::Config("model dimensions must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.model.dropout
            )));
        }
        if self.stimulus.lags == 0 {
            return Err(Error::Config("stimulus.lags must be >= 1".into()));
        }
        if self.preprocessing.band_low_hz >= self.preprocessing.band_high_hz {
            return Err(Error::Config(format!(
                "band edges out of order: {} >= {}",
                self.preprocessing.band_low_hz, self.preprocessing.band_high_hz
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject: usize,
    /// First canonical dimension's held-out correlation.
    pub correlation: f64,
    /// Held-out correlation of every output dimension.
    pub per_dimension: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub seed: u64,
    pub subjects: Vec<SubjectResult>,
}

/// Column counts observed at each preprocessing stage (subject 0, fold 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDims {
    pub stimulus_cols: usize,
    pub response_pca: usize,
    pub response_filterbank: usize,
    pub response_final: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPrimeRow {
    pub segment_seconds: f64,
    pub d_prime: f64,
    pub aligned_mean: f64,
    pub misaligned_mean: f64,
    /// One-tailed paired t-test of aligned vs. misaligned correlations.
    pub t_statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub library_version: String,
    pub config: PipelineConfig,
    pub stage_dims: StageDims,
    pub folds: Vec<FoldReport>,
    /// Fisher-z average of every per-fold per-subject correlation;
    /// recomputable from the `folds` table alone.
    pub overall: f64,
    /// Match-vs-mismatch table from the first fold's held-out block
    /// (subject 0). Empty when segments do not fit the held-out block.
    pub d_prime: Vec<DPrimeRow>,
    pub wall_clock_s: f64,
}

impl RunReport {
    /// Serialize with the wall-clock field zeroed, for byte-comparable
    /// determinism checks.
    pub fn to_json_stable(&self) -> Result<String> {
        let mut clone = self.clone();
        clone.wall_clock_s = 0.0;
        Ok(serde_json::to_string_pretty(&clone)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// SplitMix64 finalizer; used to derive independent per-fold and
/// per-subject seeds from the master seed.
fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fold_seed(master: u64, fold: usize) -> u64 {
    mix_seed(master ^ mix_seed(fold as u64 + 1))
}

fn take_rows(x: &TimeSeriesMatrix, rows: &[usize]) -> TimeSeriesMatrix {
    let mut out = Array2::zeros((rows.len(), x.channels()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&x.data.row(r));
    }
    TimeSeriesMatrix {
        data: out,
        fs_hz: x.fs_hz,
        channel_labels: x.channel_labels.clone(),
        burn_in: 0,
    }
}

fn truncate_rows(x: &TimeSeriesMatrix, m: usize) -> TimeSeriesMatrix {
    TimeSeriesMatrix {
        data: x.data.slice(ndarray::s![..m, ..]).to_owned(),
        fs_hz: x.fs_hz,
        channel_labels: x.channel_labels.clone(),
        burn_in: x.burn_in.min(m),
    }
}

/// Scale-relative default ridge: 1e-6 x mean channel variance.
fn relative_ridge(mats: &[&TimeSeriesMatrix]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for ts in mats {
        let m = ts.samples().max(2) as f64;
        for col in ts.data.columns() {
            let mean = col.sum() / m;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            total += var;
            count += 1;
        }
    }
    if count == 0 {
        1e-6
    } else {
        1e-6 * total / count as f64
    }
}

struct FoldRows {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn build_fold_rows(cfg: &PipelineConfig, start: usize, m: usize) -> Result<Vec<FoldRows>> {
    let usable = m.saturating_sub(start);
    let test_len = ((cfg.cv.test_frac * usable as f64).round() as usize).max(1);
    let val_len = ((cfg.cv.val_frac * usable as f64).round() as usize).max(1);
    if test_len + val_len + 2 > usable {
        return Err(Error::DegenerateSample(format!(
            "recording too short for cv splits: {usable} usable samples"
        )));
    }
    let mut ids: Vec<usize> = (start..m).collect();
    if !cfg.cv.contiguous {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed ^ 0x5011_7));
        ids.shuffle(&mut rng);
    }
    let mut folds = Vec::with_capacity(cfg.cv.folds);
    for f in 0..cfg.cv.folds {
        let offset = f * usable / cfg.cv.folds;
        let pick = |lo: usize, len: usize| -> Vec<usize> {
            (0..len).map(|i| ids[(lo + i) % usable]).collect()
        };
        let test = pick(offset, test_len);
        let val = pick(offset + test_len, val_len);
        let train = pick(offset + test_len + val_len, usable - test_len - val_len);
        folds.push(FoldRows { train, val, test });
    }
    Ok(folds)
}

/// Prefix an error message with the pipeline stage and fold for traceability.
fn stage_ctx(e: Error, stage: &str, fold: usize) -> Error {
    let tag = |msg: String| format!("fold {fold}, stage {stage}: {msg}");
    match e {
        Error::Shape(m) => Error::Shape(tag(m)),
        Error::Config(m) => Error::Config(tag(m)),
        Error::DegenerateSample(m) => Error::DegenerateSample(tag(m)),
        Error::DegenerateVariance(m) => Error::DegenerateVariance(tag(m)),
        Error::Symmetry(m) => Error::Symmetry(tag(m)),
        Error::Numeric(m) => Error::Numeric(tag(m)),
        Error::State(m) => Error::State(tag(m)),
        Error::Input(m) => Error::Input(tag(m)),
        Error::Data(m) => Error::Data(tag(m)),
        other => other,
    }
}

struct FoldOutput {
    subjects: Vec<SubjectResult>,
    dims: StageDims,
    /// Subject 0's held-out canonical projections (stimulus, response),
    /// kept only for the fold used in the d-prime table.
    proj: Option<(TimeSeriesMatrix, TimeSeriesMatrix)>,
}

fn run_fold(
    cfg: &PipelineConfig,
    fold: usize,
    stim_cca: &TimeSeriesMatrix,
    stim_lagged: Option<&TimeSeriesMatrix>,
    responses: &[TimeSeriesMatrix],
    rows: &FoldRows,
    want_proj: bool,
) -> Result<FoldOutput> {
    let seed = fold_seed(cfg.seed, fold);

    // Stage 1: multiway denoising, when configured.
    let denoised: Vec<TimeSeriesMatrix> = match cfg.pipeline {
        PipelineKind::Lcca | PipelineKind::Dcca => responses.to_vec(),
        PipelineKind::Lmlc | PipelineKind::Lmdc => {
            let lag = stim_lagged.expect("multiway pipeline without lagged stimulus");
            let mut train_views = Vec::with_capacity(responses.len() + 1);
            train_views.push(take_rows(lag, &rows.train));
            for r in responses {
                train_views.push(take_rows(r, &rows.train));
            }
            let min_dim = train_views.iter().map(|v| v.channels()).min().unwrap();
            let d = cfg.model.mcca_d.min(min_dim);
            let refs: Vec<&TimeSeriesMatrix> = train_views.iter().collect();
            let ridge = cfg.model.ridge.unwrap_or_else(|| relative_ridge(&refs));
            let model = mcca::fit_mcca(&train_views, d, ridge)
                .map_err(|e| stage_ctx(e, "linear multiway", fold))?;
            responses
                .iter()
                .enumerate()
                .map(|(i, r)| mcca::denoise(&model, i + 1, r, true))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| stage_ctx(e, "linear multiway denoise", fold))?
        }
        PipelineKind::Dmlc | PipelineKind::Dmdc => {
            let lag = stim_lagged.expect("multiway pipeline without lagged stimulus");
            let mut views = Vec::with_capacity(responses.len() + 1);
            views.push(lag.clone());
            views.extend(responses.iter().cloned());
            let min_dim = views.iter().map(|v| v.channels()).min().unwrap();
            let hyper = DmccaHyper {
                d: cfg.model.mcca_d.min(min_dim),
                eta: cfg.model.eta,
                batch: cfg.model.batch,
                dropout: cfg.model.dropout,
                epochs: cfg.model.epochs,
                seeds_tried: cfg.model.seeds,
                patience: cfg.model.patience,
                mse_weight: cfg.model.mse_weight,
                seed,
                ..DmccaHyper::default()
            };
            let split = Split {
                train: rows.train.clone(),
                val: rows.val.clone(),
            };
            let model = dmcca::train_dmcca(&views, &split, &hyper, None)
                .map_err(|e| stage_ctx(e, "deep multiway", fold))?;
            // Decoder reconstructions keep the original channel counts, so
            // the two-view stage sees the same dimensions as the raw data.
            let mut recon = dmcca::reconstruct(&model, &views)
                .map_err(|e| stage_ctx(e, "deep multiway reconstruct", fold))?;
            recon.remove(0); // drop the stimulus view
            recon
        }
    };

    // Stage 2: per-subject two-view decoding.
    let mut subjects = Vec::with_capacity(denoised.len());
    let mut dims = StageDims {
        stimulus_cols: stim_cca.channels(),
        response_pca: 0,
        response_filterbank: 0,
        response_final: 0,
    };
    let mut proj = None;

    for (s, resp) in denoised.iter().enumerate() {
        let (resp_cca, sdims) = if cfg.preprocessing.filterbank {
            let k1 = cfg.preprocessing.pca_response.min(resp.channels());
            let p1 = signal::fit_pca(&take_rows(resp, &rows.train), k1)
                .map_err(|e| stage_ctx(e, "response pca", fold))?;
            let r1 = signal::apply_pca(&p1, resp)
                .map_err(|e| stage_ctx(e, "response pca", fold))?;
            let fb = FilterBank::dyadic(r1.fs_hz)
                .map_err(|e| stage_ctx(e, "response filterbank", fold))?;
            let r2 = signal::apply_filterbank(&r1, &fb)
                .map_err(|e| stage_ctx(e, "response filterbank", fold))?;
            let k2 = cfg.preprocessing.pca_final.min(r2.channels());
            let p2 = signal::fit_pca(&take_rows(&r2, &rows.train), k2)
                .map_err(|e| stage_ctx(e, "response final pca", fold))?;
            let r3 = signal::apply_pca(&p2, &r2)
                .map_err(|e| stage_ctx(e, "response final pca", fold))?;
            let fb_cols = r2.channels();
            (r3, (k1, fb_cols, k2))
        } else {
            let c = resp.channels();
            (resp.clone(), (c, c, c))
        };
        if s == 0 {
            dims.response_pca = sdims.0;
            dims.response_filterbank = sdims.1;
            dims.response_final = sdims.2;
        }

        let d = cfg
            .model
            .d
            .min(stim_cca.channels())
            .min(resp_cca.channels());
        let stim_test = take_rows(stim_cca, &rows.test);
        let resp_test = take_rows(&resp_cca, &rows.test);

        let (per_dimension, proj_pair) = if cfg.pipeline.deep_final_stage() {
            let hyper = DccaHyper {
                d,
                eta: cfg.model.eta,
                batch: cfg.model.batch,
                dropout: cfg.model.dropout,
                epochs: cfg.model.epochs,
                seeds_tried: cfg.model.seeds,
                patience: cfg.model.patience,
                hidden: cfg.model.hidden.clone(),
                nonlinear: true,
                seed: mix_seed(seed ^ (s as u64 + 1)),
            };
            let split = Split {
                train: rows.train.clone(),
                val: rows.val.clone(),
            };
            let model = dcca::train_dcca(stim_cca, &resp_cca, &split, &hyper, None)
                .map_err(|e| stage_ctx(e, "deep two-view", fold))?;
            let corrs = dcca::evaluate_dcca(&model, &stim_test, &resp_test)
                .map_err(|e| stage_ctx(e, "deep two-view evaluate", fold))?;
            let pair = if want_proj && s == 0 {
                let (hx, _) = model
                    .net_x
                    .forward(stim_test.data.view(), crate::neural::Mode::Eval)
                    .map_err(|e| stage_ctx(e, "deep two-view project", fold))?;
                let (hy, _) = model
                    .net_y
                    .forward(resp_test.data.view(), crate::neural::Mode::Eval)
                    .map_err(|e| stage_ctx(e, "deep two-view project", fold))?;
                let px = cca::project_mat(&model.readout_cca, &hx, View::Stimulus)
                    .map_err(|e| stage_ctx(e, "deep two-view project", fold))?;
                let py = cca::project_mat(&model.readout_cca, &hy, View::Response)
                    .map_err(|e| stage_ctx(e, "deep two-view project", fold))?;
                Some((
                    TimeSeriesMatrix::new(px, stim_test.fs_hz)?,
                    TimeSeriesMatrix::new(py, stim_test.fs_hz)?,
                ))
            } else {
                None
            };
            (corrs, pair)
        } else {
            let stim_train = take_rows(stim_cca, &rows.train);
            let resp_train = take_rows(&resp_cca, &rows.train);
            let ridge = cfg
                .model
                .ridge
                .unwrap_or_else(|| relative_ridge(&[&stim_train, &resp_train]));
            let model = cca::fit_cca(&stim_train, &resp_train, d, ridge)
                .map_err(|e| stage_ctx(e, "linear two-view", fold))?;
            let px = cca::project(&model, &stim_test, View::Stimulus)
                .map_err(|e| stage_ctx(e, "linear two-view project", fold))?;
            let py = cca::project(&model, &resp_test, View::Response)
                .map_err(|e| stage_ctx(e, "linear two-view project", fold))?;
            let mut corrs = Vec::with_capacity(d);
            for k in 0..d {
                let a: Vec<f64> = px.data.column(k).to_vec();
                let b: Vec<f64> = py.data.column(k).to_vec();
                corrs.push(
                    metrics::pearson(&a, &b)
                        .map_err(|e| stage_ctx(e, "linear two-view evaluate", fold))?,
                );
            }
            let pair = if want_proj && s == 0 {
                Some((px, py))
            } else {
                None
            };
            (corrs, pair)
        };

        if s == 0 {
            proj = proj_pair;
        }
        subjects.push(SubjectResult {
            subject: s,
            correlation: per_dimension[0],
            per_dimension,
        });
    }

    Ok(FoldOutput {
        subjects,
        dims,
        proj,
    })
}

/// Run one pipeline over an in-memory stimulus series and one response
/// series per subject. The stimulus is expected to already be the configured
/// feature (envelope or acoustic-feature column); the CLI builds it from
/// audio before calling this.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    stimulus: &TimeSeriesMatrix,
    responses: &[TimeSeriesMatrix],
) -> Result<RunReport> {
    let t0 = Instant::now();
    cfg.validate()?;
    if responses.is_empty() {
        return Err(Error::Config("at least one response subject required".into()));
    }
    if cfg.pipeline.is_multiway() && responses.len() < 2 {
        return Err(Error::Config(format!(
            "pipeline {} needs >= 2 subjects, got {}",
            cfg.pipeline.name(),
            responses.len()
        )));
    }
    let m = responses
        .iter()
        .map(TimeSeriesMatrix::samples)
        .chain(std::iter::once(stimulus.samples()))
        .min()
        .unwrap();
    let stimulus = truncate_rows(stimulus, m);
    let responses: Vec<TimeSeriesMatrix> =
        responses.iter().map(|r| truncate_rows(r, m)).collect();

    // Global temporal conditioning (fold-independent).
    let stim_cca = if cfg.preprocessing.filterbank {
        let fb = FilterBank::dyadic(stimulus.fs_hz)?;
        signal::apply_filterbank(&stimulus, &fb)?
    } else {
        stimulus.clone()
    };
    let responses: Vec<TimeSeriesMatrix> = if cfg.preprocessing.filterbank {
        responses
            .iter()
            .map(|r| {
                signal::bandpass(
                    r,
                    cfg.preprocessing.band_low_hz,
                    cfg.preprocessing.band_high_hz,
                )
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        responses
    };
    let stim_lagged = if cfg.pipeline.is_multiway() {
        Some(signal::time_lag(&stimulus, cfg.stimulus.lags)?)
    } else {
        None
    };

    // Transients from every filtering stage (including the per-fold response
    // filterbank, which always runs on the full contiguous recording) are
    // confined to the first `burn` samples; cross-validation rows start
    // after them.
    let mut burn = stim_cca.burn_in.max(stimulus.burn_in);
    for r in &responses {
        burn = burn.max(r.burn_in);
    }
    if cfg.preprocessing.filterbank {
        burn = burn.max(FILTERBANK_ORDER);
    }
    if cfg.pipeline.is_multiway() {
        burn = burn.max(cfg.stimulus.lags);
    }

    let fold_rows = build_fold_rows(cfg, burn, m)?;
    let outputs: Vec<FoldOutput> = (0..cfg.cv.folds)
        .into_par_iter()
        .map(|f| {
            run_fold(
                cfg,
                f,
                &stim_cca,
                stim_lagged.as_ref(),
                &responses,
                &fold_rows[f],
                f == 0,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut folds = Vec::with_capacity(outputs.len());
    let mut all_corrs = Vec::new();
    for (f, out) in outputs.iter().enumerate() {
        for s in &out.subjects {
            all_corrs.push(s.correlation);
        }
        folds.push(FoldReport {
            fold: f,
            seed: fold_seed(cfg.seed, f),
            subjects: out.subjects.clone(),
        });
    }
    let overall = metrics::z_average(&all_corrs)?;

    // d-prime table from fold 0's held-out block, when it is a contiguous
    // time range (temporal cv) and long enough for the requested segments.
    let mut d_prime = Vec::new();
    let fold0_contiguous = fold_rows[0]
        .test
        .windows(2)
        .all(|w| w[1] == w[0] + 1);
    if fold0_contiguous {
        if let Some((ps, pr)) = &outputs[0].proj {
            for (i, &secs) in cfg.report.segment_seconds.iter().enumerate() {
                let sc = match metrics::segment_classify(
                    ps,
                    pr,
                    secs,
                    cfg.report.n_segments,
                    mix_seed(cfg.seed ^ 0xD00D ^ ((i as u64) << 32)),
                ) {
                    Ok(sc) => sc,
                    Err(Error::Input(_)) => continue,
                    Err(e) => return Err(e),
                };
                let n = sc.aligned_corrs.len().min(sc.misaligned_corrs.len());
                let (t, p) = metrics::paired_t_test(
                    &sc.aligned_corrs[..n],
                    &sc.misaligned_corrs[..n],
                    Alternative::Greater,
                )?;
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
                d_prime.push(DPrimeRow {
                    segment_seconds: secs,
                    d_prime: sc.d_prime,
                    aligned_mean: mean(&sc.aligned_corrs),
                    misaligned_mean: mean(&sc.misaligned_corrs),
                    t_statistic: t,
                    p_value: p,
                });
            }
        }
    }

    Ok(RunReport {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        stage_dims: outputs[0].dims.clone(),
        folds,
        overall,
        d_prime,
        wall_clock_s: t0.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Dropout,
    Batch,
    D,
    DS,
    MseWeight,
    Depth,
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dropout" => Ok(SweepParameter::Dropout),
            "batch" => Ok(SweepParameter::Batch),
            "d" => Ok(SweepParameter::D),
            "d_s" => Ok(SweepParameter::DS),
            "mse_weight" => Ok(SweepParameter::MseWeight),
            "depth" => Ok(SweepParameter::Depth),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' \
                 (expected dropout|batch|d|d_s|mse_weight|depth)"
            ))),
        }
    }
}

fn apply_sweep_value(cfg: &mut PipelineConfig, param: SweepParameter, value: f64) -> Result<()> {
    let as_count = |v: f64, what: &str| -> Result<usize> {
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Config(format!(
                "{what} sweep value must be a non-negative integer, got {v}"
            )));
        }
        Ok(v as usize)
    };
    match param {
        SweepParameter::Dropout => cfg.model.dropout = value,
        SweepParameter::Batch => cfg.model.batch = as_count(value, "batch")?,
        SweepParameter::D => cfg.model.d = as_count(value, "d")?,
        SweepParameter::DS => cfg.stimulus.lags = as_count(value, "d_s")?,
        SweepParameter::MseWeight => cfg.model.mse_weight = value,
        SweepParameter::Depth => cfg.model.hidden = vec![60; as_count(value, "depth")?],
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: f64,
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub library_version: String,
    pub parameter: SweepParameter,
    pub config: PipelineConfig,
    pub entries: Vec<SweepEntry>,
    pub wall_clock_s: f64,
}

impl SweepReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Run the pipeline once per parameter value on identical fold splits and
/// the same master seed, collecting the overall correlation per value.
pub fn sweep(
    cfg: &PipelineConfig,
    parameter: SweepParameter,
    values: &[f64],
    stimulus: &TimeSeriesMatrix,
    responses: &[TimeSeriesMatrix],
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let t0 = Instant::now();
    let mut entries = Vec::with_capacity(values.len());
    for &value in values {
        let mut run_cfg = cfg.clone();
        apply_sweep_value(&mut run_cfg, parameter, value)?;
        run_cfg.validate()?;
        let report = run_pipeline(&run_cfg, stimulus, responses)?;
        entries.push(SweepEntry {
            value,
            overall: report.overall,
        });
    }
    Ok(SweepReport {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        parameter,
        config: cfg.clone(),
        entries,
        wall_clock_s: t0.elapsed().as_secs_f64(),
    })
}

/// Per-subject bar chart of the first fold's held-out correlations.
pub fn render_subject_bars(report: &RunReport) -> String {
    let mut labels = Vec::new();
    let mut values = Vec::new();
    if let Some(fold) = report.folds.first() {
        for s in &fold.subjects {
            labels.push(format!("sub{}", s.subject));
            values.push(s.correlation);
        }
    }
    crate::plot::bar_chart(
        &format!("{} held-out correlation (fold 0)", report.config.pipeline.name()),
        &labels,
        &values,
    )
}

/// Sensitivity (d-prime) versus segment length.
pub fn render_d_prime_curve(report: &RunReport) -> String {
    let xs: Vec<f64> = report.d_prime.iter().map(|r| r.segment_seconds).collect();
    let ys: Vec<f64> = report.d_prime.iter().map(|r| r.d_prime).collect();
    crate::plot::line_chart("sensitivity vs segment length (s)", &xs, &ys)
}

/// Overall correlation versus swept parameter value.
pub fn render_sweep_curve(report: &SweepReport) -> String {
    let xs: Vec<f64> = report.entries.iter().map(|e| e.value).collect();
    let ys: Vec<f64> = report.entries.iter().map(|e| e.overall).collect();
    crate::plot::line_chart(
        &format!("overall correlation vs {:?}", report.parameter),
        &xs,
        &ys,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, SynthSpec};

    fn small_bundle(seed: u64) -> (TimeSeriesMatrix, Vec<TimeSeriesMatrix>) {
        let spec = SynthSpec {
            n_views: 3,
            latent_dim: 1,
            view_dims: vec![4, 6, 6],
            snr_db: vec![0.0; 3],
            m: 4000,
            seed,
            ..SynthSpec::desk_default()
        };
        let bundle = synth::generate(&spec).unwrap();
        let mut views = bundle.views.into_iter();
        let stim = views.next().unwrap();
        (stim, views.collect())
    }

    fn fast_cfg(kind: PipelineKind) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(kind);
        cfg.preprocessing.filterbank = false;
        cfg.stimulus.lags = 4;
        cfg.model.mcca_d = 3;
        cfg.model.epochs = 3;
        cfg.model.seeds = 1;
        cfg.model.batch = 1024;
        cfg.model.hidden = vec![16];
        cfg.cv.folds = 2;
        cfg
    }

    #[test]
    fn config_round_trip_and_unknown_key_rejection() {
        let cfg = PipelineConfig::new(PipelineKind::Lcca);
        let json = serde_json::to_string(&cfg).unwrap();
        let back = PipelineConfig::from_json(&json).unwrap();
        assert_eq!(cfg, back);

        let bad = r#"{"pipeline": "lcca", "not_a_key": 1}"#;
        match PipelineConfig::from_json(bad) {
            Err(Error::Config(msg)) => assert!(msg.contains("not_a_key")),
            other => panic!("expected config error, got {other:?}"),
        }

        let bad_version = r#"{"pipeline": "lcca", "schema_version": 99}"#;
        assert!(matches!(
            PipelineConfig::from_json(bad_version),
            Err(Error::Config(_))
        ));

        let bad_frac =
            r#"{"pipeline": "lcca", "cv": {"train_frac": 0.5, "val_frac": 0.1, "test_frac": 0.1}}"#;
        assert!(matches!(
            PipelineConfig::from_json(bad_frac),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lcca_recovers_population_correlation() {
        let (stim, resp) = small_bundle(7);
        let mut cfg = fast_cfg(PipelineKind::Lcca);
        cfg.cv.folds = 3;
        let report = run_pipeline(&cfg, &stim, &resp).unwrap();
        // 0 dB linear mixing: population view-view correlation is 0.5;
        // m=4000 keeps sampling noise within a loose band.
        assert!(
            (report.overall - 0.5).abs() < 0.08,
            "overall {}",
            report.overall
        );
        assert_eq!(report.folds.len(), 3);
        assert_eq!(report.folds[0].subjects.len(), 2);
    }

    #[test]
    fn overall_recomputable_from_folds() {
        let (stim, resp) = small_bundle(3);
        let cfg = fast_cfg(PipelineKind::Lcca);
        let report = run_pipeline(&cfg, &stim, &resp).unwrap();
        let corrs: Vec<f64> = report
            .folds
            .iter()
            .flat_map(|f| f.subjects.iter().map(|s| s.correlation))
            .collect();
        assert_eq!(metrics::z_average(&corrs).unwrap(), report.overall);
    }

    #[test]
    fn deterministic_reports() {
        let (stim, resp) = small_bundle(11);
        let cfg = fast_cfg(PipelineKind::Lmlc);
        let a = run_pipeline(&cfg, &stim, &resp).unwrap();
        let b = run_pipeline(&cfg, &stim, &resp).unwrap();
        assert_eq!(a.to_json_stable().unwrap(), b.to_json_stable().unwrap());
    }

    #[test]
    fn multiway_needs_two_subjects() {
        let (stim, resp) = small_bundle(1);
        let cfg = fast_cfg(PipelineKind::Lmlc);
        let err = run_pipeline(&cfg, &stim, &resp[..1]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn sweep_rejects_unknown_parameter_and_runs_known() {
        assert!("nope".parse::<SweepParameter>().is_err());
        let (stim, resp) = small_bundle(5);
        let cfg = fast_cfg(PipelineKind::Lcca);
        let report = sweep(
            &cfg,
            "d".parse().unwrap(),
            &[1.0, 2.0],
            &stim,
            &resp,
        )
        .unwrap();
        assert_eq!(report.entries.len(), 2);
        assert_eq!(report.entries[0].value, 1.0);
    }

    #[test]
    fn d_prime_table_present_for_temporal_cv() {
        let (stim, resp) = small_bundle(9);
        let mut cfg = fast_cfg(PipelineKind::Lcca);
        cfg.report.segment_seconds = vec![0.5, 2.0];
        cfg.report.n_segments = 50;
        let report = run_pipeline(&cfg, &stim, &resp).unwrap();
        assert_eq!(report.d_prime.len(), 2);
        // aligned correlations should dominate misaligned on this bundle
        assert!(report.d_prime[1].d_prime > 0.5);
    }

    #[test]
    fn svg_rendering_smoke() {
        let (stim, resp) = small_bundle(2);
        let cfg = fast_cfg(PipelineKind::Lcca);
        let report = run_pipeline(&cfg, &stim, &resp).unwrap();
        assert!(render_subject_bars(&report).contains("</svg>"));
        assert!(render_d_prime_curve(&report).contains("</svg>"));
    }
}
