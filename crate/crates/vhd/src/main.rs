use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use vhd::commands;
use vhd::config::{RunConfig, TrainKind};
use vhd::{Result, VhdError};

#[derive(Parser)]
#[command(name = "vhd", version, about = "Set-based video highlight detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory
    #[arg(long)]
    force: bool,
    /// Extra `key=value` overrides, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-category corpus and manifest
    GenSynth(Common),
    /// Train a single-head set model
    TrainSl {
        #[command(flatten)]
        common: Common,
        /// Ablation flags, e.g. no-transformer
        #[arg(long)]
        ablation: Option<String>,
    },
    /// Train coarse and fine learners with mutual distillation
    TrainDl {
        #[command(flatten)]
        common: Common,
        /// Ablation flags: coarse-only, fine-only, no-distill, no-transformer
        #[arg(long)]
        ablation: Option<String>,
    },
    /// Write per-segment score tracks
    Score(ScoreArgs),
    /// Write score tracks and a metrics report
    Eval(ScoreArgs),
    /// Train and evaluate once per value of set_size or lambda
    Sweep {
        #[command(flatten)]
        common: Common,
        /// set_size (or N) | lambda
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values
        #[arg(long)]
        values: Option<String>,
    },
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// sl | coarse | fine | averaged
    #[arg(long)]
    mode: Option<String>,
}

fn resolve(common: &Common, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| VhdError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    for (k, v) in extra {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth(c) => {
            let cfg = resolve(&c, &[])?;
            commands::gen_synth(&cfg, c.force).map(|_| ())
        }
        Command::TrainSl { common, ablation } => {
            let cfg = resolve(&common, &[("ablation", ablation)])?;
            commands::train(&cfg, TrainKind::Sl, common.force)
        }
        Command::TrainDl { common, ablation } => {
            let cfg = resolve(&common, &[("ablation", ablation)])?;
            commands::train(&cfg, TrainKind::Dl, common.force)
        }
        Command::Score(a) => {
            let cfg = score_config(&a)?;
            commands::score(&cfg, false, a.common.force)
        }
        Command::Eval(a) => {
            let cfg = score_config(&a)?;
            commands::score(&cfg, true, a.common.force)
        }
        Command::Sweep { common, axis, values } => {
            let cfg = resolve(&common, &[("sweep_axis", axis), ("sweep_values", values)])?;
            for (v, m) in commands::sweep(&cfg, common.force)? {
                println!("{v},{m}");
            }
            Ok(())
        }
    }
}

fn score_config(a: &ScoreArgs) -> Result<RunConfig> {
    let ckpt = a.checkpoint.as_ref().map(|p| p.display().to_string());
    resolve(&a.common, &[("checkpoint", ckpt), ("score_mode", a.mode.clone())])
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
