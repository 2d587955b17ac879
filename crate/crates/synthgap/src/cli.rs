//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{AblationKind, Arm, Direction, ExperimentConfig};
use crate::dataset::{generate_dataset, MANIFEST};
use crate::error::{Error, Result};
use crate::lab::{Lab, SweepResult};
use crate::report::{write_reports, ReportTable};
use crate::run::{replay_run, Workspace, WORKSPACE_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "synthgap",
    version,
    about = "Probe the synthetic-to-real accuracy gap with layer-transfer experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML experiment configuration; defaults apply to anything omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed of the study (overrides `seeds.seed`).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Sweep points to run concurrently.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    pub jobs: usize,
    /// Overwrite existing datasets.
    #[arg(long, global = true)]
    pub force: bool,
    /// Workspace root (else `output.workspace`, then $SYNTHGAP_WORKSPACE, then ./workspace).
    #[arg(long, global = true, value_name = "PATH")]
    pub workspace: Option<PathBuf>,
    /// Print per-epoch progress to standard error.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the real and synthetic-proxy datasets.
    Generate {
        /// Fidelity of the proxy dataset (overrides `dataset.fidelity`).
        #[arg(long)]
        fidelity: Option<f64>,
    },
    /// Run an experiment protocol.
    #[command(subcommand)]
    Run(RunCommand),
    /// Write tables, plots and curve fits for every recorded sweep.
    Report {
        /// Print the fitted coefficients of reduction sweeps.
        #[arg(long)]
        fit: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArmsArg {
    Both,
    SyntheticFrozenPrefix,
    None,
}

#[derive(Debug, Subcommand)]
pub enum RunCommand {
    /// Train on real and on proxy data; report the accuracy gap.
    Baseline,
    /// Freeze the first N units of a pretrained model, retrain the rest.
    TransferSweep {
        #[arg(long, value_enum)]
        direction: Option<DirectionArg>,
        /// Inclusive range `A..B` or a comma-separated list.
        #[arg(long, value_name = "LIST")]
        n: Option<String>,
    },
    /// Fine-tune on reduced real data with and without synthetic pretraining.
    ReduceSweep {
        /// Comma-separated fractions in descending order.
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        arms: Option<ArmsArg>,
    },
    /// Normalization, augmentation, texture or fidelity ablation.
    Ablate {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
    /// Re-execute a completed run from its materialized specification.
    Replay { run_dir: PathBuf, out_dir: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    RealToSynth,
    SynthToReal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Normalization,
    Augmentation,
    Texture,
    Fidelity,
}

/// Parse `A..B` (inclusive) or `a,b,c`.
pub fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot parse N list {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn resolve_workspace(global: &GlobalArgs, cfg: &ExperimentConfig) -> PathBuf {
    global
        .workspace
        .clone()
        .or_else(|| cfg.output.workspace.clone())
        .or_else(|| std::env::var_os(WORKSPACE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("workspace"))
}

fn load_config(global: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seeds.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_sweep(result: &SweepResult) {
    let table = ReportTable {
        title: result.id.clone(),
        rows: result
            .baselines
            .iter()
            .chain(&result.rows)
            .map(|r| crate::report::ReportRow {
                experiment: format!("{}:{}", r.protocol, r.param),
                top1_mean: r.stats.map(|s| s.top1_mean),
                top1_std: r.stats.map(|s| s.top1_std),
                top5_mean: r.stats.map(|s| s.top5_mean),
                top5_std: r.stats.map(|s| s.top5_std),
                train_loss: r.final_train_loss,
                run_dir: r.run_dir.clone(),
            })
            .collect(),
    };
    print!("{}", table.to_text());
    for r in result.rows.iter().filter(|r| !r.is_complete()) {
        if let crate::lab::PointStatus::Failed(e) = &r.status {
            println!("failed {}: {e}", r.param);
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    let ws = Workspace::new(resolve_workspace(&cli.global, &cfg));
    match cli.command {
        Command::Generate { fidelity } => {
            if let Some(phi) = fidelity {
                cfg.dataset.fidelity = phi;
                cfg.validate()?;
            }
            for spec in [cfg.real_spec(), cfg.proxy_spec(cfg.dataset.fidelity)] {
                let dir = ws.dataset_path(&spec);
                if dir.join(MANIFEST).exists() && !cli.global.force {
                    return Err(Error::Config(format!("{} already exists (use --force to overwrite)", dir.display())));
                }
                let h = generate_dataset(&spec, &dir)?;
                let m = h.manifest();
                println!(
                    "{}: {} train + {} val records, {}x{}x3, fidelity {}, channel mean [{:.4}, {:.4}, {:.4}]",
                    dir.display(),
                    m.train_count,
                    m.val_count,
                    m.shape.height,
                    m.shape.width,
                    spec.effective_fidelity(),
                    m.channel_stats.mean[0],
                    m.channel_stats.mean[1],
                    m.channel_stats.mean[2]
                );
            }
            Ok(())
        }
        Command::Run(run) => {
            if let RunCommand::Replay { run_dir, out_dir } = &run {
                let r = replay_run(&ws, run_dir, out_dir)?;
                println!("replayed {} into {}", run_dir.display(), r.dir.display());
                return Ok(());
            }
            match &run {
                RunCommand::TransferSweep { direction, n } => {
                    if let Some(d) = direction {
                        cfg.protocol.direction = match d {
                            DirectionArg::RealToSynth => Direction::RealToSynth,
                            DirectionArg::SynthToReal => Direction::SynthToReal,
                        };
                    }
                    if let Some(n) = n {
                        cfg.protocol.n = parse_n_list(n)?;
                    }
                }
                RunCommand::ReduceSweep { fractions, arms } => {
                    if let Some(f) = fractions {
                        cfg.protocol.fractions = f.clone();
                    }
                    if let Some(a) = arms {
                        cfg.protocol.arms = match a {
                            ArmsArg::Both => vec![Arm::SyntheticFrozenPrefix, Arm::None],
                            ArmsArg::SyntheticFrozenPrefix => vec![Arm::SyntheticFrozenPrefix],
                            ArmsArg::None => vec![Arm::None],
                        };
                    }
                }
                RunCommand::Ablate { kind: Some(k) } => {
                    cfg.protocol.ablation = match k {
                        KindArg::Normalization => AblationKind::Normalization,
                        KindArg::Augmentation => AblationKind::Augmentation,
                        KindArg::Texture => AblationKind::Texture,
                        KindArg::Fidelity => AblationKind::Fidelity,
                    };
                }
                _ => {}
            }
            cfg.validate()?;
            let mut lab = Lab::new(ws, cfg.clone())?;
            lab.jobs = cli.global.jobs;
            lab.progress = cli.global.verbose;
            let result = match run {
                RunCommand::Baseline => lab.run_baselines()?,
                RunCommand::TransferSweep { .. } => {
                    lab.run_transfer_sweep(cfg.protocol.direction, &cfg.transfer_points())?
                }
                RunCommand::ReduceSweep { .. } => {
                    lab.run_data_reduction_sweep(&cfg.protocol.fractions, &cfg.protocol.arms)?
                }
                RunCommand::Ablate { .. } => lab.run_ablation(cfg.protocol.ablation)?,
                RunCommand::Replay { .. } => unreachable!("handled above"),
            };
            print_sweep(&result);
            if let Some(gap) = result.gap_pp() {
                println!("gap (real - synthetic, top-1): {gap:.2} pp");
            }
            result.into_result().map(|_| ())
        }
        Command::Report { fit } => {
            let reports = write_reports(&ws)?;
            for r in &reports {
                println!(
                    "{} ({}): {} files under {}",
                    r.id,
                    r.protocol,
                    r.files.len(),
                    ws.reports_dir().join(&r.id).display()
                );
                if let Some(gap) = r.gap_pp {
                    println!("  gap {gap:.2} pp");
                }
                if fit {
                    for (arm, f) in &r.fits {
                        println!(
                            "  fit {arm}: a = {:.6}, b = {:.6}, rms = {:.6} (n = {})",
                            f.a, f.b, f.rms_residual, f.n_points
                        );
                    }
                }
            }
            Ok(())
        }
    }
}

/// Parse arguments, run, and map errors to exit codes.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
