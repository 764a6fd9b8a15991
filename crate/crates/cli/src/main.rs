use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use graphal_core::acquisition::AcquisitionKind;
use graphal_core::datasets::checkerboard_cell;
use graphal_core::experiment::{
    build_dataset, prepare, run_paired, run_prepared, write_outputs, DatasetKind, ExperimentConfig, UpdateMode,
};
use graphal_core::graph::LaplacianKind;
use graphal_core::lookahead::FprimeAt;
use graphal_core::posterior::ModelKind;
use graphal_core::Parallelism;

#[derive(Parser)]
#[command(name = "graphal", version, about = "Graph-based semi-supervised active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an active-learning experiment and write accuracy curves.
    Run(RunArgs),
    /// Run matched-seed probit experiments with full retraining and with NA updates.
    CompareNa(RunArgs),
    /// Run an experiment and report the query locations of every trial.
    Choices(RunArgs),
    /// Write a dataset as CSV (`index,label,<features>`).
    ExportDataset(ExportArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, default_value = "checkerboard", value_parser = parse::<DatasetKind>)]
    dataset: DatasetKind,
    /// Seeds the dataset; trial seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkerboard point count.
    #[arg(long)]
    points: Option<usize>,
    /// Checkerboard cells per side.
    #[arg(long)]
    grid: Option<usize>,
    /// MNIST images drawn per digit.
    #[arg(long)]
    per_digit: Option<usize>,
    /// Directory holding the MNIST IDX files.
    #[arg(long, env = "GRAPHAL_MNIST_DIR")]
    mnist_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "probit", value_parser = parse::<ModelKind>)]
    model: ModelKind,
    #[arg(long, default_value = "mc", value_parser = parse::<AcquisitionKind>)]
    acq: AcquisitionKind,
    /// Queries per trial (dataset default when omitted).
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value = "na", value_parser = parse::<UpdateMode>)]
    update: UpdateMode,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Neighbours per node; 0 builds the full kernel graph.
    #[arg(long)]
    knn: Option<usize>,
    /// Kernel length scale.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, value_parser = parse::<LaplacianKind>)]
    laplacian: Option<LaplacianKind>,
    /// Initial labels per class.
    #[arg(long)]
    per_class: Option<usize>,
    /// In NA mode, refit from scratch every this many queries (0 = never).
    #[arg(long)]
    refresh_every: Option<usize>,
    /// Evaluate F′ in the NA covariance update at the current mean instead of
    /// the updated one.
    #[arg(long)]
    fprime_at_current: bool,
    /// Disable the thread pool for candidate scoring.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

fn parse<T: std::str::FromStr<Err = graphal_core::Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: graphal_core::Error| e.to_string())
}

fn base_config(data: &DataArgs) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults_for(data.dataset);
    cfg.seed = data.seed;
    if let Some(v) = data.points {
        cfg.checkerboard_points = v;
    }
    if let Some(v) = data.grid {
        cfg.checkerboard_grid = v;
    }
    if let Some(v) = data.per_digit {
        cfg.mnist_per_digit = v;
    }
    if let Some(dir) = &data.mnist_dir {
        for p in [&mut cfg.mnist_images, &mut cfg.mnist_labels] {
            *p = dir.join(p.file_name().expect("default MNIST path has a file name"));
        }
    }
    cfg
}

fn config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = base_config(&a.data).with(a.model, a.acq);
    cfg.n_trials = a.trials;
    cfg.update_mode = a.update;
    if let Some(v) = a.queries {
        cfg.n_queries = v;
    }
    if let Some(v) = a.tau {
        cfg.tau = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(k) = a.knn {
        cfg.knn = (k > 0).then_some(k);
    }
    if let Some(v) = a.scale {
        cfg.length_scale = v;
    }
    if let Some(v) = a.laplacian {
        cfg.laplacian = v;
    }
    if let Some(v) = a.per_class {
        cfg.per_class = v;
    }
    if let Some(v) = a.refresh_every {
        cfg.refresh_every = v;
    }
    if a.fprime_at_current {
        cfg.fprime_at = FprimeAt::Current;
    }
    if a.sequential {
        cfg.parallelism = Parallelism::Sequential;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: &RunArgs) -> Result<()> {
    let cfg = config(a)?;
    let prep = prepare(&cfg).context("building dataset and prior")?;
    let res = run_prepared(&prep, &cfg)?;
    write_outputs(&res, &prep.dataset, &a.out)?;
    for t in &res.trials {
        println!(
            "trial {}: final accuracy {:.4} ({} full fits, {:.1?})",
            t.trial,
            t.accuracy.last().unwrap(),
            t.stats.full_fits,
            t.elapsed
        );
    }
    println!("{}: mean final accuracy {:.4} -> {}", cfg.label(), res.final_mean(), a.out.display());
    Ok(())
}

fn compare_na(a: &RunArgs) -> Result<()> {
    let cfg = config(a)?;
    let prep = prepare(&cfg).context("building dataset and prior")?;
    let cmp = run_paired(&prep, &cfg, [UpdateMode::Retrain, UpdateMode::Na])?;
    write_outputs(&cmp.first, &prep.dataset, &a.out.join("retrain"))?;
    write_outputs(&cmp.second, &prep.dataset, &a.out.join("na"))?;
    cmp.write_csv(&a.out.join("comparison.csv"))?;
    let gaps: Vec<f64> = cmp.first.trials.iter().flat_map(|t| t.na_gap.iter().copied()).collect();
    if !gaps.is_empty() {
        let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let max_gap = gaps.iter().copied().fold(0.0, f64::max);
        println!("NA mean vs retrained MAP, relative gap: mean {mean_gap:.3e}, max {max_gap:.3e}");
    }
    println!(
        "retrain final {:.4}, NA final {:.4}, mean |difference| over steps {:.4} -> {}",
        cmp.first.final_mean(),
        cmp.second.final_mean(),
        cmp.mean_abs_diff(),
        a.out.display()
    );
    Ok(())
}

fn choices(a: &RunArgs) -> Result<()> {
    let cfg = config(a)?;
    let prep = prepare(&cfg).context("building dataset and prior")?;
    let res = run_prepared(&prep, &cfg)?;
    write_outputs(&res, &prep.dataset, &a.out)?;
    for t in &res.trials {
        let path = a.out.join(format!("choices_trial_{}.csv", t.trial));
        if cfg.dataset == DatasetKind::Checkerboard {
            let cells: BTreeSet<_> = t
                .queries
                .iter()
                .map(|&(k, _)| {
                    let p = prep.dataset.features.row(k);
                    checkerboard_cell(p[0], p[1], cfg.checkerboard_grid)
                })
                .collect();
            println!(
                "trial {}: {} queries over {} of {} cells -> {}",
                t.trial,
                t.queries.len(),
                cells.len(),
                cfg.checkerboard_grid.pow(2),
                path.display()
            );
        } else {
            println!("trial {}: {} queries -> {}", t.trial, t.queries.len(), path.display());
        }
    }
    Ok(())
}

fn export(a: &ExportArgs) -> Result<()> {
    let ds = build_dataset(&base_config(&a.data))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let f = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    ds.write_csv(BufWriter::new(f))?;
    info!("wrote {} points to {}", ds.n_points(), a.out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(a) => run(a),
        Command::CompareNa(a) => compare_na(a),
        Command::Choices(a) => choices(a),
        Command::ExportDataset(a) => export(a),
    }
}
