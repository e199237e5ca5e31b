//! Command-line driver: runs configurations and scenario presets, sweeps
//! the gradient-drop lab, optimizes switch thresholds, and renders reports
//! from results directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gradsim::config::{preset, RunConfig, PRESET_NAMES};
use gradsim::queueing::{
    optimize_thresholds, queue_losses, CostModel, QueueingModel, SelReading,
};
use gradsim::runner::{report, run_preset, run_variant, write_summary_csv};
use gradsim::sgdlab::{
    fit_cost_curves, sweep, DropPolicy, Granularity, LayerBand, MagBand, SweepRow, ToyTask,
};

#[derive(Parser)]
#[command(
    name = "gradsim",
    version,
    about = "Deterministic packet-level simulator for distributed-training traffic"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a TOML configuration file.
    Run {
        /// Path to the configuration.
        config: PathBuf,
        /// Override the seed list, comma separated.
        #[arg(long)]
        seeds: Option<String>,
        /// Output root (defaults to the config's run.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Label for the results directory (defaults to the config label
        /// or the file stem).
        #[arg(long)]
        label: Option<String>,
    },
    /// Run a named scenario preset (all its variants), or list presets.
    Preset {
        /// Preset name; omit with --list to enumerate.
        name: Option<String>,
        #[arg(long)]
        list: bool,
        /// Override the seed list, comma separated.
        #[arg(long)]
        seeds: Option<String>,
        /// Output root.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Print a fully-resolved default configuration to stdout.
    ExampleConfig,
    /// Optimize per-queue selective and total thresholds against a
    /// queueing model and a convergence-cost model.
    OptimizeThresholds(OptArgs),
    /// Sweep gradient-drop policies on a toy task and fit per-queue
    /// tolerance curves.
    DropLab(DropLabArgs),
    /// Summarize a results directory: table to stdout, plots to disk.
    Report {
        dir: PathBuf,
    },
}

#[derive(Args)]
struct OptArgs {
    /// Total service rate, packets per unit time.
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// Total arrival rate, packets per unit time.
    #[arg(long, default_value_t = 0.8)]
    lambda: f64,
    /// Unimportant-traffic fraction, 0..1.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Number of priority queues (ignored when --shares is given).
    #[arg(long, default_value_t = 4)]
    queues: usize,
    /// Per-queue arrival shares, comma separated; must sum to 1.
    #[arg(long)]
    shares: Option<String>,
    /// Total buffer budget, packets.
    #[arg(long, default_value_t = 120)]
    budget: u32,
    /// Selective-loss reading: "standard" or "printed".
    #[arg(long, default_value = "standard")]
    reading: String,
    /// Cost model: "flat", or "anchored" with --slope.
    #[arg(long, default_value = "anchored")]
    cost: String,
    /// Slope of the anchored cost curves.
    #[arg(long, default_value_t = 30.0)]
    slope: f64,
    /// Load a fitted cost model (TOML from drop-lab) instead of --cost.
    #[arg(long)]
    cost_file: Option<PathBuf>,
    /// Write per-queue thresholds and losses as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DropLabArgs {
    /// Task: "linreg", "mlp-regression", or "mlp-classification".
    #[arg(long, default_value = "linreg")]
    task: String,
    /// Task construction seed (data, init, labels).
    #[arg(long, default_value_t = 7)]
    task_seed: u64,
    /// Policies to sweep, comma separated. Known names: uniform,
    /// layer-front-20, layer-middle-20, layer-back-20, mag-smallest-20,
    /// mag-medium-20, mag-largest-20.
    #[arg(long, default_value = "uniform,mag-smallest-20,mag-largest-20,layer-front-20,layer-back-20")]
    policies: String,
    /// Drop-fraction grid, comma separated.
    #[arg(long, default_value = "0,0.01,0.02,0.05,0.1,0.2")]
    grid: String,
    /// Training seeds, comma separated.
    #[arg(long, default_value = "11,12,13,14,15")]
    seeds: String,
    /// Simulated data-parallel workers.
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Drop granularity: 0 for single elements, otherwise the block size
    /// in gradients.
    #[arg(long, default_value_t = 0)]
    block: usize,
    /// Queues to expand the fitted model across.
    #[arg(long, default_value_t = 4)]
    queues: usize,
    /// Output directory for sweep.csv and cost_model.toml.
    #[arg(long, default_value = "drop-lab")]
    out: PathBuf,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        bail!("empty seed list");
    }
    Ok(seeds)
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number {s:?}")))
        .collect()
}

fn parse_reading(text: &str) -> Result<SelReading> {
    match text {
        "standard" => Ok(SelReading::Standard),
        "printed" => Ok(SelReading::Printed),
        other => bail!("unknown reading {other:?} (expected standard or printed)"),
    }
}

fn make_policy(name: &str) -> Result<Box<dyn Fn(f64) -> DropPolicy>> {
    let f: Box<dyn Fn(f64) -> DropPolicy> = match name {
        "uniform" => Box::new(|p| DropPolicy::Uniform { p }),
        "layer-front-20" => Box::new(|p| DropPolicy::LayerBand { band: LayerBand::Front20, p }),
        "layer-middle-20" => Box::new(|p| DropPolicy::LayerBand { band: LayerBand::Middle20, p }),
        "layer-back-20" => Box::new(|p| DropPolicy::LayerBand { band: LayerBand::Back20, p }),
        "mag-smallest-20" => {
            Box::new(|p| DropPolicy::MagnitudeBand { band: MagBand::Smallest20, p })
        }
        "mag-medium-20" => Box::new(|p| DropPolicy::MagnitudeBand { band: MagBand::Medium20, p }),
        "mag-largest-20" => {
            Box::new(|p| DropPolicy::MagnitudeBand { band: MagBand::Largest20, p })
        }
        other => bail!("unknown policy {other:?}"),
    };
    Ok(f)
}

fn cmd_run(
    config: &Path,
    seeds: Option<String>,
    out: Option<PathBuf>,
    label: Option<String>,
) -> Result<()> {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(s) = seeds {
        cfg.run.seeds = parse_seeds(&s)?;
    }
    let out_root = out.unwrap_or_else(|| PathBuf::from(&cfg.run.out_dir));
    let label = label
        .or_else(|| (!cfg.label.is_empty()).then(|| cfg.label.clone()))
        .or_else(|| config.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "run".into());
    let dir = out_root.join(&label);
    let rows = run_variant(&cfg, &label, &dir)?;
    write_summary_csv(&dir.join("summary.csv"), &rows)?;
    println!("{}", report(&dir)?);
    println!("results: {}", dir.display());
    Ok(())
}

fn cmd_preset(
    name: Option<String>,
    list: bool,
    seeds: Option<String>,
    out: &Path,
) -> Result<()> {
    if list || name.is_none() {
        for n in PRESET_NAMES {
            let p = preset(n).unwrap();
            println!("{n}: {} variants", p.variants.len());
            for line in &p.expected {
                println!("  - {line}");
            }
        }
        return Ok(());
    }
    let name = name.unwrap();
    let p = preset(&name)
        .with_context(|| format!("unknown preset {name:?}; try --list"))?;
    let seed_override = seeds.map(|s| parse_seeds(&s)).transpose()?;
    run_preset(&p, out, seed_override.as_deref())?;
    let dir = out.join(&name);
    println!("{}", report(&dir)?);
    println!("results: {}", dir.display());
    Ok(())
}

fn cmd_optimize(a: &OptArgs) -> Result<()> {
    let shares = match &a.shares {
        Some(text) => {
            let v = parse_f64_list(text)?;
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                bail!("--shares must sum to 1 (got {sum})");
            }
            v
        }
        None => {
            if a.queues == 0 {
                bail!("--queues must be positive");
            }
            vec![1.0 / a.queues as f64; a.queues]
        }
    };
    let n = shares.len();
    let model =
        QueueingModel { mu: a.mu, lambda: a.lambda, theta: a.theta, arrival_shares: shares };
    let reading = parse_reading(&a.reading)?;
    let cost = match &a.cost_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let m: CostModel<f64> = toml::from_str(&text)
                .with_context(|| format!("parsing cost model {}", path.display()))?;
            if m.n_queues() != n {
                bail!("cost model covers {} queues, model has {n}", m.n_queues());
            }
            m
        }
        None => match a.cost.as_str() {
            "flat" => CostModel::flat(n),
            "anchored" => CostModel::anchored(n, a.slope),
            other => bail!("unknown cost model {other:?} (expected flat or anchored)"),
        },
    };
    let best = optimize_thresholds(&model, &cost, a.budget, reading)?;
    let losses = queue_losses(&model, &best.s, &best.l, reading)?;
    println!("objective: {:.6}", best.cost);
    println!("{:>5} {:>8} {:>8} {:>10} {:>12} {:>12}", "queue", "S", "L", "rho", "selective", "overflow");
    for (i, q) in losses.iter().enumerate() {
        println!(
            "{:>5} {:>8} {:>8} {:>10.4} {:>12.6} {:>12.6}",
            i, best.s[i], best.l[i], q.rho, q.selective, q.overflow
        );
    }
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["queue", "s", "l", "rho", "selective", "overflow"])?;
        for (i, q) in losses.iter().enumerate() {
            w.write_record([
                i.to_string(),
                best.s[i].to_string(),
                best.l[i].to_string(),
                format!("{}", q.rho),
                format!("{}", q.selective),
                format!("{}", q.overflow),
            ])?;
        }
        w.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["policy", "p", "seed", "epochs", "final_metric"])?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            format!("{}", r.p),
            r.seed.to_string(),
            r.epochs.to_string(),
            format!("{}", r.final_metric),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_drop_lab(a: &DropLabArgs) -> Result<()> {
    let task: ToyTask<f32> = match a.task.as_str() {
        "linreg" => ToyTask::linreg(a.task_seed),
        "mlp-regression" => ToyTask::mlp_regression(a.task_seed),
        "mlp-classification" => ToyTask::mlp_classification(a.task_seed),
        other => bail!("unknown task {other:?}"),
    };
    let baseline = task
        .validate(a.task_seed ^ 0x5eed)
        .map_err(|e| anyhow::anyhow!("task does not converge without drops: {e}"))?;
    let gran = if a.block == 0 { Granularity::Element } else { Granularity::Block(a.block) };
    let grid = parse_f64_list(&a.grid)?;
    let seeds = parse_seeds(&a.seeds)?;
    if a.workers == 0 {
        bail!("--workers must be positive");
    }

    fs::create_dir_all(&a.out)?;
    let mut all_rows = Vec::new();
    for name in a.policies.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let make = make_policy(name)?;
        eprintln!("sweeping {name} over {} rates x {} seeds", grid.len(), seeds.len());
        all_rows.extend(sweep(&task, make.as_ref(), gran, a.workers, &grid, &seeds));
    }
    let sweep_path = a.out.join("sweep.csv");
    write_sweep_csv(&sweep_path, &all_rows)?;
    println!("wrote {} ({} rows, baseline {} epochs)", sweep_path.display(), all_rows.len(), baseline);

    match fit_cost_curves(&all_rows, baseline as f64, a.queues) {
        Ok(model) => {
            let path = a.out.join("cost_model.toml");
            fs::write(&path, toml::to_string_pretty(&model)?)?;
            for (i, (s, l)) in model.small.iter().zip(&model.large).enumerate() {
                println!(
                    "queue {i}: small knee {:.4} slope {:.2}, large knee {:.4} slope {:.2}",
                    s.knee, s.slope, l.knee, l.slope
                );
            }
            println!("wrote {}", path.display());
        }
        Err(e) => println!("no cost model fitted: {e}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { config, seeds, out, label } => cmd_run(&config, seeds, out, label),
        Cmd::Preset { name, list, seeds, out } => cmd_preset(name, list, seeds, &out),
        Cmd::ExampleConfig => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
        Cmd::OptimizeThresholds(a) => cmd_optimize(&a),
        Cmd::DropLab(a) => cmd_drop_lab(&a),
        Cmd::Report { dir } => {
            println!("{}", report(&dir)?);
            Ok(())
        }
    }
}
