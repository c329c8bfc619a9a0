//! Command-line front end.
//!
//! Every subcommand reads the flat run configuration (`--config`, then
//! `--set key=value` overrides in order) and prints the effective
//! configuration to stderr before doing any work. Tables go to stdout.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::accountant::{dataset_flops, CostConfig};
use crate::baselines::{combined_sweep, threshold_csv, threshold_sweep};
use crate::error::{Error, Result};
use crate::harness::checkpoint::load_checkpoint;
use crate::harness::compare::{baseline_compare, baseline_csv};
use crate::harness::config::RunConfig;
use crate::harness::eval::{evaluate, evaluate_dense};
use crate::harness::pipeline::{build_backbone, dataset, run_curriculum, train, RunDir};
use crate::harness::visualize::{annotations_csv, visualize};
use crate::model::Model;
use crate::policy::TrainState;

#[derive(Debug, Parser)]
#[command(
    name = "iared",
    version,
    about = "Interpreter-driven token dropping for vision transformers"
)]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CheckpointArg {
    /// Model checkpoint to load.
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain the backbone, then run the interpreter curriculum.
    Train {
        /// Run directory; an unfinished run in it is resumed.
        #[arg(long)]
        out: PathBuf,
        /// Stop after this many curriculum epochs.
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Accuracy, per-group keep ratios and the FLOPs table on the test split.
    Eval {
        #[command(flatten)]
        ckpt: CheckpointArg,
        /// Keep every token (dense backbone).
        #[arg(long)]
        keep_all: bool,
    },
    /// Write per-group heatmaps and reduction strips for test images.
    Visualize {
        #[command(flatten)]
        ckpt: CheckpointArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Greedy evaluation over evenly spaced thresholds.
    SweepThreshold {
        /// Inclusive range such as `0.48..0.52`.
        range: String,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[command(flatten)]
        ckpt: CheckpointArg,
    },
    /// Retrain the curriculum from one backbone for each reward penalty.
    SweepTau {
        /// Comma-separated penalties for wrong predictions.
        #[arg(long, default_value = "0.5,1.0,1.5", value_delimiter = ',')]
        taus: Vec<f64>,
        /// Also train with the linear reward.
        #[arg(long)]
        with_linear: bool,
        /// Backbone checkpoint; trained from the configuration when absent.
        #[arg(long)]
        backbone: Option<PathBuf>,
    },
    /// Pruning-only, token-only and combined accuracy/FLOPs curves.
    SweepPrune {
        #[command(flatten)]
        ckpt: CheckpointArg,
        #[arg(
            long,
            default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7",
            value_delimiter = ','
        )]
        ratios: Vec<f64>,
        #[arg(long, default_value = "0.4,0.45,0.5,0.55,0.6", value_delimiter = ',')]
        thresholds: Vec<f64>,
    },
    /// Random, attention and learned dropping at one matched rate.
    BaselineCompare {
        #[command(flatten)]
        ckpt: CheckpointArg,
        #[arg(long, default_value_t = 0.3)]
        ratio: f64,
    },
}

/// Parses `a..b` into `steps` evenly spaced values including both ends.
pub fn parse_range(range: &str, steps: usize) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("range {range:?} is not of the form a..b"));
    let (a, b) = range.split_once("..").ok_or_else(bad)?;
    let (a, b): (f64, f64) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    match steps {
        0 => Err(Error::Config("need at least one step".into())),
        1 => Ok(vec![a]),
        _ => Ok((0..steps)
            .map(|i| a + (b - a) * i as f64 / (steps - 1) as f64)
            .collect()),
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Io(_) => 3,
        Error::Checkpoint(_) => 4,
        _ => 1,
    }
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<Model> {
    let mut model = load_checkpoint(path)?.model;
    let want = cfg.model()?;
    if model.cfg.vit != want.vit {
        return Err(Error::Config(format!(
            "{} does not match the configured image and model shape",
            path.display()
        )));
    }
    model.set_threshold(cfg.threshold)?;
    Ok(model)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    write!(err, "{}", cfg.dump())?;

    match cli.command {
        Command::Train {
            out: dir,
            max_epochs,
        } => {
            let dir = RunDir::new(dir);
            let r = train(&cfg, &dir, max_epochs)?;
            writeln!(
                out,
                "epochs={} finished={} checkpoint={}",
                r.epochs_run,
                r.finished,
                dir.checkpoint().display()
            )?;
        }
        Command::Eval { ckpt, keep_all } => {
            let model = load_model(&ckpt.checkpoint, &cfg)?;
            let test = dataset(&cfg)?.test;
            let (report, traces) = if keep_all {
                evaluate_dense(&model, &test)?
            } else {
                evaluate(&model, &test)?
            };
            let cost = if keep_all {
                CostConfig::dense(&model.cfg)
            } else {
                CostConfig::from_model(&model.cfg)
            };
            let live: Vec<Vec<usize>> = traces.into_iter().map(|t| t.block_live).collect();
            let flops = dataset_flops(&cost, &live)?;
            writeln!(
                out,
                "accuracy={:.6} mean_keep_ratio={:.6} group_keep={}",
                report.accuracy,
                report.mean_keep_ratio,
                fmt_list(&report.keep_ratios)
            )?;
            write!(out, "{}", flops.to_csv())?;
        }
        Command::Visualize {
            ckpt,
            out: dir,
            count,
        } => {
            let model = load_model(&ckpt.checkpoint, &cfg)?;
            let images: Vec<_> = dataset(&cfg)?
                .test
                .into_iter()
                .take(count)
                .map(|s| s.image)
                .collect();
            let (files, rows) = visualize(&model, &images, &dir)?;
            write!(out, "{}", annotations_csv(&rows))?;
            writeln!(err, "wrote {} files to {}", files.len(), dir.display())?;
        }
        Command::SweepThreshold { range, steps, ckpt } => {
            let model = load_model(&ckpt.checkpoint, &cfg)?;
            let rows = threshold_sweep(&model, &dataset(&cfg)?.test, &parse_range(&range, steps)?)?;
            write!(out, "{}", threshold_csv(&rows))?;
        }
        Command::SweepTau {
            taus,
            with_linear,
            backbone,
        } => {
            let data = dataset(&cfg)?;
            let backbone = match backbone {
                Some(p) => load_model(&p, &cfg)?,
                None => build_backbone(&cfg, &data.train, err)?,
            };
            writeln!(out, "tau,squared,accuracy,mean_keep_ratio,flops")?;
            let cost = CostConfig::from_model(&backbone.cfg);
            for squared in std::iter::once(true).chain(with_linear.then_some(false)) {
                for &tau in &taus {
                    let mut c = cfg.clone();
                    c.tau = tau;
                    c.squared_reward = squared;
                    let mut model = backbone.clone();
                    let mut state = TrainState::new(c.seed);
                    run_curriculum(
                        &c,
                        &mut model,
                        &mut state,
                        &data.train,
                        err,
                        None,
                        |_, _| Ok(()),
                    )?;
                    let (report, traces) = evaluate(&model, &data.test)?;
                    let live: Vec<Vec<usize>> = traces.into_iter().map(|t| t.block_live).collect();
                    writeln!(
                        out,
                        "{tau},{squared},{:.6},{:.6},{:.0}",
                        report.accuracy,
                        report.mean_keep_ratio,
                        dataset_flops(&cost, &live)?.total
                    )?;
                }
            }
        }
        Command::SweepPrune {
            ckpt,
            ratios,
            thresholds,
        } => {
            let model = load_model(&ckpt.checkpoint, &cfg)?;
            let curves = combined_sweep(&model, &dataset(&cfg)?.test, &thresholds, &ratios)?;
            write!(out, "{}", curves.to_csv())?;
        }
        Command::BaselineCompare { ckpt, ratio } => {
            let model = load_model(&ckpt.checkpoint, &cfg)?;
            let rows = baseline_compare(&model, &dataset(&cfg)?.test, ratio, cfg.seed)?;
            write!(out, "{}", baseline_csv(&rows))?;
        }
    }
    Ok(())
}

/// Parses the process arguments, runs, and maps failures to exit codes:
/// 2 for configuration and usage errors, 3 for I/O, 4 for bad checkpoints,
/// 1 otherwise.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (mut out, mut err) = (std::io::stdout().lock(), std::io::stderr());
    match run(cli, &mut out, &mut err) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_includes_both_ends() {
        let v = parse_range("0.48..0.52", 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v[0], 0.48);
        assert_eq!(v[4], 0.52);
        assert!((v[2] - 0.5).abs() < 1e-12);
        assert!(matches!(parse_range("0.5", 3), Err(Error::Config(_))));
    }

    #[test]
    fn arguments_parse() {
        let cli = Cli::try_parse_from([
            "iared",
            "--set",
            "seed=3",
            "sweep-threshold",
            "0.4..0.6",
            "--checkpoint",
            "m.ckpt",
        ])
        .unwrap();
        assert_eq!(cli.overrides, ["seed=3"]);
        assert!(matches!(
            cli.command,
            Command::SweepThreshold { steps: 5, .. }
        ));
        assert!(Cli::try_parse_from(["iared", "eval", "--checkpoint", "m", "--bogus"]).is_err());
    }

    #[test]
    fn missing_checkpoint_is_io_error() {
        let cli =
            Cli::try_parse_from(["iared", "eval", "--checkpoint", "/nonexistent/m.ckpt"]).unwrap();
        let e = run(cli, &mut Vec::new(), &mut Vec::new()).unwrap_err();
        assert_eq!(exit_code(&e), 3);
        let cli =
            Cli::try_parse_from(["iared", "--set", "colour=red", "eval", "--checkpoint", "m"])
                .unwrap();
        assert_eq!(
            exit_code(&run(cli, &mut Vec::new(), &mut Vec::new()).unwrap_err()),
            2
        );
    }
}
