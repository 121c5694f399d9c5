use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dimple_cli::grid::{Axis, ConfigError, ExperimentGrid, PAPER_REPLICATIONS};
use dimple_cli::harness::{self, CellStatus};
use dimple_cli::{plot, selftest};
use dimple_core::cluster::{cluster_baseline, cluster_tensor};
use dimple_core::metrics::misclassification_rate;
use dimple_core::netgen::{build_ground_truth, estimate_sparsity, sample_adjacency};
use dimple_core::{hooi, io as dio, ClusterConfig, ClusterContext, HooiConfig, ModelConfig, ThresholdMode};

#[derive(Parser)]
#[command(name = "dimple", version, about = "Between-layer clustering of signed multiplex networks")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a model instance and one adjacency sample.
    Generate {
        /// Model JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cluster the layers of an adjacency tensor stored as SMT1.
    Cluster {
        /// SMT1 adjacency file.
        #[arg(long)]
        input: PathBuf,
        /// Number of layer groups M.
        #[arg(long)]
        groups: usize,
        /// Dimension of each group's latent space (one value is broadcast).
        #[arg(long, value_delimiter = ',', default_value = "3")]
        k: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Method::Tensor)]
        algorithm: Method,
        /// Fixed threshold on |W W^T| instead of the adaptive one.
        #[arg(long)]
        threshold: Option<f64>,
        /// True labels CSV, to report R_BL.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment grid.
    Bench {
        /// Grid JSON.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the grid's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the full replication count of the published study.
        #[arg(long)]
        paper: bool,
        /// Overrides the grid's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw SVG panels from a summary CSV.
    Plot {
        /// Summary CSV, or a directory holding one.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = PlotAxis::N)]
        axis: PlotAxis,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Noiseless end-to-end checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Tensor,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotAxis {
    N,
    #[value(name = "L", alias = "l")]
    L,
}

enum Outcome {
    Ok,
    ErrorRows,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ErrorRows) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Generate { config, out, seed } => generate(&config, &out, seed),
        Command::Cluster { input, groups, k, algorithm, threshold, truth, out, seed } => {
            cluster(&input, groups, &k, algorithm, threshold, truth.as_deref(), &out, seed)
        }
        Command::Bench { config, out, paper, seed } => bench(&config, out, paper, seed),
        Command::Plot { input, axis, out } => {
            let summary = if input.is_dir() { input.join(harness::SUMMARY_FILE) } else { input };
            let axis = match axis {
                PlotAxis::N => Axis::N,
                PlotAxis::L => Axis::L,
            };
            for p in plot::plot_summary(&summary, axis, &out)? {
                println!("{}", p.display());
            }
            Ok(Outcome::Ok)
        }
        Command::Selftest { seed } => {
            let checks = selftest::run(seed);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                Ok(Outcome::Ok)
            } else {
                bail!("{} selftest check(s) failed", checks.iter().filter(|c| !c.passed).count())
            }
        }
    }
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())).into())
}

fn generate(config: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let mut model: ModelConfig = serde_json::from_str(&read_config(config)?).map_err(|e| ConfigError(format!("invalid model: {e}")))?;
    if let Some(s) = seed {
        model.seed = s;
    }
    model.validate().map_err(|e| ConfigError(e.to_string()))?;
    let gt = build_ground_truth(&model)?;
    let a = sample_adjacency(&gt.p, model.seed);
    fs::create_dir_all(out)?;
    dio::write_smt1(&a, BufWriter::new(File::create(out.join("adjacency.smt1"))?))?;
    dio::write_labels_csv("group", &gt.labels, BufWriter::new(File::create(out.join("labels.csv"))?))?;
    dio::write_probability_dump(&gt.p, BufWriter::new(File::create(out.join("probability.bin"))?))?;
    println!("n = {}, L = {}, edges = {}, rho_hat = {:.4}", model.n, model.layers, a.triplets().len(), estimate_sparsity(&a));
    Ok(Outcome::Ok)
}

#[allow(clippy::too_many_arguments)]
fn cluster(input: &Path, groups: usize, k: &[usize], method: Method, threshold: Option<f64>, truth: Option<&Path>, out: &Path, seed: u64) -> Result<Outcome> {
    let k: Vec<usize> = match k.len() {
        1 => vec![k[0]; groups],
        len if len == groups => k.to_vec(),
        len => return Err(ConfigError(format!("--k has {len} values for {groups} groups")).into()),
    };
    let a = dio::read_smt1(BufReader::new(File::open(input).with_context(|| format!("opening {}", input.display()))?))?;
    let mut cfg = ClusterConfig { seed, ..ClusterConfig::new(groups) };
    if let Some(t) = threshold {
        cfg.threshold_mode = ThresholdMode::Manual(t);
    }
    cfg.validate(a.layers()).map_err(|e| ConfigError(e.to_string()))?;
    fs::create_dir_all(out)?;
    let result = match method {
        Method::Tensor => {
            let hcfg = HooiConfig::for_model(a.n(), a.layers(), &k, false).map_err(|e| ConfigError(e.to_string()))?;
            let fitted = hooi::fit(a.tensor(), &hcfg)?;
            dio::write_factor_csv("u", &fitted.u, BufWriter::new(File::create(out.join("u.csv"))?))?;
            dio::write_factor_csv("w", &fitted.w, BufWriter::new(File::create(out.join("w.csv"))?))?;
            let ctx = ClusterContext { n: a.n(), layers: a.layers(), m: groups, k: k[0], rho_hat: estimate_sparsity(&a) };
            cluster_tensor(&fitted.w, &cfg, &ctx)?
        }
        Method::Baseline => {
            // without labels every layer gets the first group's dimension
            cluster_baseline(&a, &vec![k[0]; a.layers()], &cfg)?
        }
    };
    dio::write_labels_csv("group", &result.labels, BufWriter::new(File::create(out.join("clusters.csv"))?))?;
    if let Some(t) = result.threshold_used {
        println!("threshold = {t}");
    }
    if let Some(path) = truth {
        let s = dio::read_labels_csv(BufReader::new(File::open(path)?), groups)?;
        println!("R_BL = {}", misclassification_rate(&result.labels, &s)?.r_bl);
    }
    Ok(Outcome::Ok)
}

fn bench(config: &Path, out: Option<PathBuf>, paper: bool, seed: Option<u64>) -> Result<Outcome> {
    let mut grid = ExperimentGrid::from_json(&read_config(config)?)?;
    if let Some(o) = out {
        grid.output_dir = o;
    }
    if paper {
        grid.replications = PAPER_REPLICATIONS;
    }
    if let Some(s) = seed {
        grid.base_seed = s;
    }
    let outcome = harness::run_grid(&grid, |n, layers, status| {
        let what = match status {
            CellStatus::Computed => "done",
            CellStatus::Resumed => "resumed",
        };
        eprintln!("cell n = {n}, L = {layers}: {what}");
    })?;
    println!("{}", outcome.results_path.display());
    println!("{}", outcome.summary_path.display());
    let errors = outcome.error_rows();
    if errors > 0 {
        eprintln!("{errors} error row(s)");
        Ok(Outcome::ErrorRows)
    } else {
        Ok(Outcome::Ok)
    }
}
