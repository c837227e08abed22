//! Command-line surface: synthetic data generation, training, evaluation,
//! ablation grids, forecasting, and checkpoint inspection.
//!
//! Every command reads an optional TOML config plus flag overrides; all
//! randomness flows from a single `--seed`. Exit codes: 0 success, 1 usage,
//! 2 data error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use pose_forecast::checkpoint::{inspect_checkpoint, load_checkpoint, save_checkpoint};
use pose_forecast::data::synth::{generate_synthetic, SyntheticTaskSpec};
use pose_forecast::data::{
    corpus_windows, load_sequences, write_sequences, write_sequences_binary, Sequence,
    SequenceRecord, WindowSpec,
};
use pose_forecast::error::Error;
use pose_forecast::eval::{
    evaluate, format_ablation_table, run_ablation, AblationAxis, Baseline, BaselineForecaster,
    Forecaster, ModelForecaster,
};
use pose_forecast::exec::Exec;
use pose_forecast::model::{count_parameters, ModelConfig};
use pose_forecast::train::{format_loss_curve, train_with_callback, TrainConfig};

#[derive(Parser)]
#[command(
    name = "pose-forecast",
    about = "Forecast future 3D body poses from past poses, head orientation, and egocentric object boxes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic reach-task corpus.
    SynthGen(SynthGenArgs),
    /// Train a model on a sequence file and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a trivial baseline, printing per-horizon MPJPE.
    Evaluate(EvaluateArgs),
    /// Retrain over one config axis and print a comparison table.
    Ablate(AblateArgs),
    /// Dump model forecasts as a loadable sequence file.
    Forecast(ForecastArgs),
    /// Print checkpoint metadata.
    InspectCheckpoint(InspectArgs),
}

#[derive(Args)]
struct SynthGenArgs {
    /// Output sequence file.
    #[arg(long)]
    out: PathBuf,
    /// Number of sequences.
    #[arg(long, default_value_t = 20)]
    sequences: usize,
    /// Task layout: `walk-reach` (full script) or `conditioned-reach`
    /// (10 standing frames + 30 reach frames, varied target).
    #[arg(long, default_value = "walk-reach")]
    task: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Joint noise std-dev in meters (overrides the task default).
    #[arg(long)]
    noise: Option<f64>,
    /// Write the binary format instead of JSON lines.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Training sequence file.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// TOML config with [model], [train], [windows] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    /// Window stride override.
    #[arg(long)]
    stride: Option<usize>,
    /// Write the per-epoch loss table here.
    #[arg(long)]
    loss_curve: Option<PathBuf>,
    /// Also write the checkpoint every N epochs.
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Evaluation sequence file.
    #[arg(long)]
    data: PathBuf,
    /// Trained checkpoint to evaluate.
    #[arg(long, conflicts_with = "baseline")]
    checkpoint: Option<PathBuf>,
    /// Baseline to evaluate: zero_velocity or constant_velocity.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stride: Option<usize>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Training sequence file.
    #[arg(long)]
    train_data: PathBuf,
    /// Held-out evaluation sequence file.
    #[arg(long)]
    eval_data: PathBuf,
    /// Axis: head, dynamic, static, objects, repeat-nodes, pose-residual,
    /// fuse-residual.
    #[arg(long)]
    axis: String,
    /// Comma-separated grid values, e.g. `0,1,2,3`.
    #[arg(long)]
    values: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output sequence file holding one predicted sequence per window.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    stride: Option<usize>,
    /// Keep only the first N windows.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct InspectArgs {
    checkpoint: PathBuf,
}

/// Optional TOML config file sections; omitted fields fall back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    model: ModelConfig,
    train: TrainConfig,
    windows: WindowsSection,
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct WindowsSection {
    t_in: usize,
    t_out: usize,
    stride: usize,
}

impl Default for WindowsSection {
    fn default() -> Self {
        WindowsSection {
            t_in: 10,
            t_out: 30,
            stride: 1,
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<FileConfig, Error> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            toml::from_str(&text)
                .map_err(|e| Error::invalid(format!("config {}: {e}", p.display())))
        }
    }
}

fn window_spec(cfg: &FileConfig, stride: Option<usize>) -> WindowSpec {
    WindowSpec {
        t_in: cfg.windows.t_in,
        t_out: cfg.windows.t_out,
        stride: stride.unwrap_or(cfg.windows.stride),
        objects_per_category: cfg.model.objects_per_category,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with zero exit
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                Error::InvalidArgument(_) => 1,
                e if e.is_numeric() => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let exec = Exec::Parallel;
    match cli.command {
        Command::SynthGen(args) => {
            let mut spec = match args.task.as_str() {
                "walk-reach" => SyntheticTaskSpec::default(),
                "conditioned-reach" => SyntheticTaskSpec::conditioned_reach(args.seed),
                other => {
                    return Err(Error::invalid(format!(
                        "unknown task `{other}` (walk-reach, conditioned-reach)"
                    )))
                }
            };
            spec.seed = args.seed;
            if let Some(noise) = args.noise {
                spec.noise_std = noise;
            }
            let seqs = generate_synthetic(&spec, args.sequences, exec)?;
            if args.binary {
                write_sequences_binary(&args.out, &seqs)?;
            } else {
                write_sequences(&args.out, &seqs)?;
            }
            println!(
                "wrote {} sequences ({} frames each) to {}",
                seqs.len(),
                seqs.first().map(|s| s.len()).unwrap_or(0),
                args.out.display()
            );
            Ok(())
        }

        Command::Train(args) => {
            let mut cfg = load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.train.seed = seed;
            }
            if let Some(epochs) = args.epochs {
                cfg.train.epochs = epochs;
            }
            if let Some(batch) = args.batch_size {
                cfg.train.batch_size = batch;
            }
            if let Some(lr0) = args.lr0 {
                cfg.train.lr0 = lr0;
            }
            let wspec = window_spec(&cfg, args.stride);
            if cfg.model.t_in != wspec.t_in || cfg.model.t_total != wspec.t_in + wspec.t_out {
                return Err(Error::invalid(format!(
                    "config contradiction: model expects t_in {} / t_total {}, windows give {} / {}",
                    cfg.model.t_in,
                    cfg.model.t_total,
                    wspec.t_in,
                    wspec.t_in + wspec.t_out
                )));
            }
            let seqs = load_sequences(&args.data)?;
            let windows = corpus_windows(&seqs, &wspec, exec)?;
            if windows.is_empty() {
                return Err(Error::Data(format!(
                    "no {}+{}-frame windows in {}",
                    wspec.t_in,
                    wspec.t_out,
                    args.data.display()
                )));
            }
            println!(
                "training on {} windows from {} sequences (seed {})",
                windows.len(),
                seqs.len(),
                cfg.train.seed
            );
            let every = args.checkpoint_every.unwrap_or(0);
            let out_path = args.out.clone();
            let model_cfg = cfg.model.clone();
            let outcome = train_with_callback(
                &windows,
                &cfg.model,
                &cfg.train,
                exec,
                |stats, params| {
                    println!(
                        "epoch {:>3}  lr {:.6}  loss {:.6}",
                        stats.epoch, stats.lr, stats.mean_loss
                    );
                    if every > 0 && (stats.epoch + 1) % every == 0 {
                        save_checkpoint(&out_path, params, &model_cfg)?;
                    }
                    Ok(())
                },
            )?;
            save_checkpoint(&args.out, &outcome.params, &cfg.model)?;
            if let Some(curve_path) = &args.loss_curve {
                std::fs::write(curve_path, format_loss_curve(&outcome.curve)).map_err(|e| {
                    Error::Io {
                        path: curve_path.clone(),
                        source: e,
                    }
                })?;
            }
            println!(
                "saved checkpoint ({} parameters) to {}",
                count_parameters(&outcome.params),
                args.out.display()
            );
            Ok(())
        }

        Command::Evaluate(args) => {
            let cfg = load_config(&args.config)?;
            let seqs = load_sequences(&args.data)?;
            let report = match (&args.checkpoint, &args.baseline) {
                (Some(ckpt), None) => {
                    let (params, model_cfg) = load_checkpoint(ckpt)?;
                    let wspec = WindowSpec {
                        t_in: model_cfg.t_in,
                        t_out: model_cfg.t_total - model_cfg.t_in,
                        stride: args.stride.unwrap_or(cfg.windows.stride),
                        objects_per_category: model_cfg.objects_per_category,
                    };
                    let windows = corpus_windows(&seqs, &wspec, exec)?;
                    let forecaster = ModelForecaster {
                        params: &params,
                        cfg: &model_cfg,
                    };
                    evaluate(&forecaster, &windows, exec)?
                }
                (None, Some(name)) => {
                    let kind = Baseline::from_str(name)?;
                    let wspec = window_spec(&cfg, args.stride);
                    let windows = corpus_windows(&seqs, &wspec, exec)?;
                    let forecaster = BaselineForecaster {
                        kind,
                        t_out: wspec.t_out,
                    };
                    evaluate(&forecaster, &windows, exec)?
                }
                _ => {
                    return Err(Error::invalid(
                        "evaluate needs exactly one of --checkpoint or --baseline",
                    ))
                }
            };
            print!("{}", report.table());
            println!("samples: {}  fingerprint: {}", report.samples, report.fingerprint);
            if let Some(json_path) = &args.json {
                let json = serde_json::to_string_pretty(&report)
                    .map_err(|e| Error::Data(e.to_string()))?;
                std::fs::write(json_path, json).map_err(|e| Error::Io {
                    path: json_path.clone(),
                    source: e,
                })?;
            }
            Ok(())
        }

        Command::Ablate(args) => {
            let mut cfg = load_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.train.seed = seed;
            }
            if let Some(epochs) = args.epochs {
                cfg.train.epochs = epochs;
            }
            let axis = AblationAxis::from_str(&args.axis)?;
            let values: Vec<u32> = args
                .values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::invalid(format!("bad grid value `{v}`")))
                })
                .collect::<Result<_, _>>()?;
            if values.is_empty() {
                return Err(Error::invalid("ablate: empty value list"));
            }
            let train_seqs = load_sequences(&args.train_data)?;
            let eval_seqs = load_sequences(&args.eval_data)?;
            let wspec = window_spec(&cfg, args.stride);
            let points = run_ablation(
                &train_seqs,
                &eval_seqs,
                &wspec,
                &cfg.model,
                &cfg.train,
                axis,
                &values,
                exec,
            )?;
            for p in &points {
                if let Some(reason) = &p.skipped {
                    eprintln!("skipped {} = {}: {reason}", args.axis, p.value);
                }
            }
            print!("{}", format_ablation_table(&args.axis, &points));
            Ok(())
        }

        Command::Forecast(args) => {
            let (params, model_cfg) = load_checkpoint(&args.checkpoint)?;
            let seqs = load_sequences(&args.data)?;
            let wspec = WindowSpec {
                t_in: model_cfg.t_in,
                t_out: model_cfg.t_total - model_cfg.t_in,
                stride: args.stride.unwrap_or(wspec_default_stride(&model_cfg)),
                objects_per_category: model_cfg.objects_per_category,
            };
            let mut windows = corpus_windows(&seqs, &wspec, exec)?;
            if let Some(limit) = args.limit {
                windows.truncate(limit);
            }
            if windows.is_empty() {
                return Err(Error::Data("forecast: no windows in input".into()));
            }
            let forecaster = ModelForecaster {
                params: &params,
                cfg: &model_cfg,
            };
            let mut out_seqs = Vec::with_capacity(windows.len());
            for w in &windows {
                let pred = forecaster.forecast(w)?;
                let n = pred.shape()[1];
                let t_out = pred.shape()[2];
                let records = (0..t_out)
                    .map(|f| SequenceRecord {
                        frame: f as u64,
                        pose: (0..n)
                            .map(|j| {
                                [
                                    pred.at(&[0, j, f]),
                                    pred.at(&[1, j, f]),
                                    pred.at(&[2, j, f]),
                                ]
                            })
                            .collect(),
                        head_dir: last_head_dir(w),
                        head_pos: [0.0, 0.0, 0.0],
                        objects: vec![],
                    })
                    .collect();
                out_seqs.push(Sequence { records });
            }
            write_sequences(&args.out, &out_seqs)?;
            println!(
                "wrote {} forecast sequences to {}",
                out_seqs.len(),
                args.out.display()
            );
            Ok(())
        }

        Command::InspectCheckpoint(args) => {
            let info = inspect_checkpoint(&args.checkpoint)?;
            println!("version: {}", info.version);
            println!(
                "config: {}",
                serde_json::to_string(&info.config).map_err(|e| Error::Data(e.to_string()))?
            );
            println!("parameters ({} arrays, {} scalars):", info.params.len(), info.total_scalars);
            for (name, shape) in &info.params {
                println!("  {name:<24} {shape:?}");
            }
            Ok(())
        }
    }
}

fn wspec_default_stride(cfg: &ModelConfig) -> usize {
    cfg.t_total
}

fn last_head_dir(w: &pose_forecast::data::Window) -> [f64; 3] {
    let t = w.head_in.shape()[1];
    [
        w.head_in.at(&[0, t - 1]),
        w.head_in.at(&[1, t - 1]),
        w.head_in.at(&[2, t - 1]),
    ]
}
