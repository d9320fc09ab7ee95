//! Command-line front end: config-driven pipeline runs, hyperparameter
//! sweeps, synthetic data generation, acoustic feature extraction, and
//! report rendering.

use clap::{Parser, Subcommand, ValueEnum};
use deepcorr::error::{Error, Result};
use deepcorr::features::{self, FrameSpec};
use deepcorr::metrics;
use deepcorr::pipeline::{
    self, PipelineConfig, RunReport, SweepParameter,
};
use deepcorr::synth::{self, SynthSpec};
use deepcorr::timeseries::{self, FileFormat, TimeSeriesMatrix};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "deepcorr",
    version,
    about = "Linear and deep canonical correlation pipelines for \
             stimulus-response decoding"
)]
struct Cli {
    /// JSON configuration file (pipeline config, or synth spec for `synth`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for reports, plots, and generated data (default: .).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Master seed override; takes precedence over the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for fold-parallel execution (default: all cores).
    /// Results are identical at any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    #[value(name = "raw-f64")]
    RawF64,
}

impl From<FormatArg> for FileFormat {
    fn from(f: FormatArg) -> FileFormat {
        match f {
            FormatArg::Csv => FileFormat::Csv,
            FormatArg::RawF64 => FileFormat::RawF64,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured pipeline with cross-validation and write the
    /// report plus SVG plots.
    Fit {
        /// Stimulus series file.
        #[arg(long, required_unless_present = "synthetic")]
        stimulus: Option<PathBuf>,
        /// Response series file, one per subject (repeat the flag).
        #[arg(long = "response", required_unless_present = "synthetic")]
        responses: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Use the built-in synthetic bundle instead of data files.
        #[arg(long)]
        synthetic: bool,
    },
    /// Check an existing report: recompute the overall correlation from its
    /// per-fold entries and print the summary tables.
    Evaluate {
        /// Path to a report JSON written by `fit`.
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the pipeline once per parameter value on identical fold splits.
    Sweep {
        /// One of: dropout, batch, d, d_s, mse_weight, depth.
        #[arg(long)]
        parameter: String,
        /// Comma-separated values to sweep over.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, required_unless_present = "synthetic")]
        stimulus: Option<PathBuf>,
        #[arg(long = "response", required_unless_present = "synthetic")]
        responses: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[arg(long)]
        synthetic: bool,
    },
    /// Generate a synthetic bundle and export it as time-series files.
    Synth {
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Extract the 20-column acoustic feature series from a single-channel
    /// audio file (CSV or raw-f64 with sample rate metadata).
    Features {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Re-render the SVG plots from an existing report JSON.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not configure thread pool: {e}");
            std::process::exit(2);
        }
    }
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn out_dir(cli_dir: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = cli_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_pipeline_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<PipelineConfig> {
    let path = path
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let text = fs::read_to_string(path)?;
    let mut cfg = PipelineConfig::from_json(&text)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Load the stimulus and responses either from files or from the built-in
/// synthetic bundle (first view = stimulus, remaining views = subjects).
fn load_data(
    synthetic: bool,
    stimulus: &Option<PathBuf>,
    responses: &[PathBuf],
    format: FormatArg,
    seed: u64,
) -> Result<(TimeSeriesMatrix, Vec<TimeSeriesMatrix>)> {
    if synthetic {
        let spec = SynthSpec {
            seed,
            ..SynthSpec::desk_default()
        };
        let bundle = synth::generate(&spec)?;
        let mut views = bundle.views.into_iter();
        let stim = views.next().expect("bundle has views");
        return Ok((stim, views.collect()));
    }
    let stim_path = stimulus
        .as_ref()
        .ok_or_else(|| Error::Config("--stimulus is required without --synthetic".into()))?;
    if responses.is_empty() {
        return Err(Error::Config(
            "at least one --response is required without --synthetic".into(),
        ));
    }
    let stim = timeseries::ingest(stim_path, format.into())?;
    let resp = responses
        .iter()
        .map(|p| timeseries::ingest(p, format.into()))
        .collect::<Result<Vec<_>>>()?;
    Ok((stim, resp))
}

fn write_report_outputs(dir: &Path, report: &RunReport) -> Result<()> {
    fs::write(dir.join("report.json"), report.to_json()?)?;
    fs::write(
        dir.join("subject_correlations.svg"),
        pipeline::render_subject_bars(report),
    )?;
    if !report.d_prime.is_empty() {
        fs::write(
            dir.join("d_prime.svg"),
            pipeline::render_d_prime_curve(report),
        )?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Fit {
            stimulus,
            responses,
            format,
            synthetic,
        } => {
            let cfg = load_pipeline_config(&cli.config, cli.seed)?;
            let (stim, resp) = load_data(*synthetic, stimulus, responses, *format, cfg.seed)?;
            let report = pipeline::run_pipeline(&cfg, &stim, &resp)?;
            let dir = out_dir(&cli.out_dir)?;
            write_report_outputs(&dir, &report)?;
            println!(
                "pipeline {}: overall correlation {:.6} over {} folds x {} subjects",
                cfg.pipeline.name(),
                report.overall,
                report.folds.len(),
                report.folds.first().map_or(0, |f| f.subjects.len()),
            );
            println!("report written to {}", dir.join("report.json").display());
            Ok(())
        }
        Command::Evaluate { report } => {
            let text = fs::read_to_string(report)?;
            let parsed: RunReport =
                serde_json::from_str(&text).map_err(|e| Error::Data(format!("report: {e}")))?;
            let corrs: Vec<f64> = parsed
                .folds
                .iter()
                .flat_map(|f| f.subjects.iter().map(|s| s.correlation))
                .collect();
            let recomputed = metrics::z_average(&corrs)?;
            println!(
                "pipeline {}: {} folds, {} subjects",
                parsed.config.pipeline.name(),
                parsed.folds.len(),
                parsed.folds.first().map_or(0, |f| f.subjects.len()),
            );
            for fold in &parsed.folds {
                for s in &fold.subjects {
                    println!(
                        "fold {} subject {}: r = {:.6}",
                        fold.fold, s.subject, s.correlation
                    );
                }
            }
            println!("overall (reported):   {:.12}", parsed.overall);
            println!("overall (recomputed): {recomputed:.12}");
            if recomputed != parsed.overall {
                return Err(Error::Data(
                    "overall correlation does not match its per-fold entries".into(),
                ));
            }
            for row in &parsed.d_prime {
                println!(
                    "segment {:>6.1} s: d' = {:.3}, t = {:.2}, p = {:.2e}",
                    row.segment_seconds, row.d_prime, row.t_statistic, row.p_value
                );
            }
            Ok(())
        }
        Command::Sweep {
            parameter,
            values,
            stimulus,
            responses,
            format,
            synthetic,
        } => {
            let cfg = load_pipeline_config(&cli.config, cli.seed)?;
            let param: SweepParameter = parameter.parse()?;
            let (stim, resp) = load_data(*synthetic, stimulus, responses, *format, cfg.seed)?;
            let report = pipeline::sweep(&cfg, param, values, &stim, &resp)?;
            let dir = out_dir(&cli.out_dir)?;
            fs::write(dir.join("sweep.json"), report.to_json()?)?;
            fs::write(
                dir.join("sweep.svg"),
                pipeline::render_sweep_curve(&report),
            )?;
            for e in &report.entries {
                println!("{parameter} = {:>10}: overall = {:.6}", e.value, e.overall);
            }
            println!("sweep written to {}", dir.join("sweep.json").display());
            Ok(())
        }
        Command::Synth { format } => {
            let mut spec = match &cli.config {
                Some(path) => {
                    let text = fs::read_to_string(path)?;
                    serde_json::from_str::<SynthSpec>(&text)
                        .map_err(|e| Error::Config(format!("synth spec: {e}")))?
                }
                None => SynthSpec::desk_default(),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let bundle = synth::generate(&spec)?;
            let dir = out_dir(&cli.out_dir)?;
            let ext = match format {
                FormatArg::Csv => "csv",
                FormatArg::RawF64 => "f64",
            };
            let write = |ts: &TimeSeriesMatrix, path: &Path| -> Result<()> {
                match format {
                    FormatArg::Csv => timeseries::write_csv(ts, path),
                    FormatArg::RawF64 => timeseries::write_raw(ts, path),
                }
            };
            write(&bundle.latent, &dir.join(format!("latent.{ext}")))?;
            for (i, v) in bundle.views.iter().enumerate() {
                write(v, &dir.join(format!("view{i}.{ext}")))?;
            }
            let summary = serde_json::json!({
                "spec": spec,
                "population_corr": bundle.population_corr,
                "empirical_snr_db": bundle.empirical_snr_db,
            });
            fs::write(
                dir.join("bundle.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            println!(
                "wrote {} views of {} samples to {}",
                bundle.views.len(),
                bundle.views[0].samples(),
                dir.display()
            );
            Ok(())
        }
        Command::Features { audio, format } => {
            let ts = timeseries::ingest(audio, (*format).into())?;
            if ts.channels() != 1 {
                return Err(Error::Input(format!(
                    "expected single-channel audio, got {} channels",
                    ts.channels()
                )));
            }
            let samples: Vec<f64> = ts.data.column(0).to_vec();
            let feats = features::extract_features(&samples, ts.fs_hz, &FrameSpec::default())?;
            let stim3 = features::stimulus_3d(&feats)?;
            let dir = out_dir(&cli.out_dir)?;
            timeseries::write_csv(&feats, &dir.join("features.csv"))?;
            timeseries::write_csv(&stim3, &dir.join("stimulus_3d.csv"))?;
            println!(
                "extracted {} frames x {} features at {} Hz",
                feats.samples(),
                feats.channels(),
                feats.fs_hz
            );
            Ok(())
        }
        Command::Report { report } => {
            let text = fs::read_to_string(report)?;
            let parsed: RunReport =
                serde_json::from_str(&text).map_err(|e| Error::Data(format!("report: {e}")))?;
            let dir = out_dir(&cli.out_dir)?;
            write_report_outputs(&dir, &parsed)?;
            println!("plots written to {}", dir.display());
            Ok(())
        }
    }
}
