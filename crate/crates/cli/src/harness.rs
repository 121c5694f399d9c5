//! Simulation harness: generate, sample, cluster and score over a grid.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dimple_core::cluster::{cluster_baseline, cluster_tensor};
use dimple_core::hooi::{self, true_factors};
use dimple_core::linalg::sin_theta;
use dimple_core::metrics::misclassification_rate;
use dimple_core::netgen::{build_ground_truth, estimate_sparsity, sample_adjacency};
use dimple_core::rng::{derive_seed, tag};
use dimple_core::{ClusterConfig, ClusterContext, FactorPair, GroundTruth, HooiConfig, ModelConfig, SignedAdjacencyTensor, ThresholdMode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{Algorithm, ExperimentGrid};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CHECKPOINT_DIR: &str = "cells";

/// One algorithm on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub n: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    pub c: f64,
    pub d: f64,
    pub distribution: String,
    pub replication: usize,
    pub seed: u64,
    pub r_bl: Option<f64>,
    pub sin_theta_u: Option<f64>,
    pub sin_theta_w: Option<f64>,
    /// Absent from `results.csv`; kept in checkpoints and `timings.csv`.
    #[serde(default)]
    pub wall_time_ms: f64,
    pub hooi_iters: Option<usize>,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

/// The deterministic columns of a [`ResultRow`]. Wall time goes to a separate
/// file so that result tables are reproducible byte for byte.
#[derive(Serialize)]
struct ResultRecord<'a> {
    algorithm: Algorithm,
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    c: f64,
    d: f64,
    distribution: &'a str,
    replication: usize,
    seed: u64,
    r_bl: Option<f64>,
    sin_theta_u: Option<f64>,
    sin_theta_w: Option<f64>,
    hooi_iters: Option<usize>,
    error: Option<&'a str>,
}

impl<'a> From<&'a ResultRow> for ResultRecord<'a> {
    fn from(r: &'a ResultRow) -> Self {
        Self {
            algorithm: r.algorithm,
            n: r.n,
            layers: r.layers,
            c: r.c,
            d: r.d,
            distribution: &r.distribution,
            replication: r.replication,
            seed: r.seed,
            r_bl: r.r_bl,
            sin_theta_u: r.sin_theta_u,
            sin_theta_w: r.sin_theta_w,
            hooi_iters: r.hooi_iters,
            error: r.error.as_deref(),
        }
    }
}

#[derive(Serialize)]
struct TimingRecord {
    algorithm: Algorithm,
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    replication: usize,
    wall_time_ms: f64,
}

/// Per-cell aggregate over replications without errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub n: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    pub c: f64,
    pub d: f64,
    pub distribution: String,
    pub replications: usize,
    pub errors: usize,
    pub mean_r_bl: Option<f64>,
    pub stderr_r_bl: Option<f64>,
    pub mean_sin_theta_u: Option<f64>,
    pub mean_sin_theta_w: Option<f64>,
    pub mean_hooi_iters: Option<f64>,
}

/// Settings shared by every cell of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub algorithms: Vec<Algorithm>,
    pub sbm: bool,
    pub threshold_mode: ThresholdMode,
}

impl RunSettings {
    pub fn from_grid(grid: &ExperimentGrid) -> Self {
        Self { algorithms: grid.algorithms.clone(), sbm: grid.sbm, threshold_mode: grid.threshold_mode }
    }
}

/// Seed of replication `rep` in cell `(n, L)`. It does not depend on the
/// algorithm, so all algorithms see the same sample.
pub fn replication_seed(base_seed: u64, n: usize, layers: usize, rep: usize) -> u64 {
    derive_seed(base_seed, &[tag::REPLICATION, n as u64, layers as u64, rep as u64])
}

/// Runs every algorithm on one sampled instance of `model` (whose `seed`
/// drives both generation and sampling). Failures become error rows.
pub fn run_cell(model: &ModelConfig, settings: &RunSettings, replication: usize) -> Vec<ResultRow> {
    let row = |algorithm: Algorithm| ResultRow {
        algorithm,
        n: model.n,
        layers: model.layers,
        c: model.b_range.0,
        d: model.b_range.1,
        distribution: model.latent.name().to_string(),
        replication,
        seed: model.seed,
        r_bl: None,
        sin_theta_u: None,
        sin_theta_w: None,
        wall_time_ms: 0.0,
        hooi_iters: None,
        error: None,
    };
    let gt = match build_ground_truth(model) {
        Ok(gt) => gt,
        Err(e) => {
            return settings.algorithms.iter().map(|&a| ResultRow { error: Some(e.to_string()), ..row(a) }).collect();
        }
    };
    let adjacency = sample_adjacency(&gt.p, model.seed);
    let truth = if settings.algorithms.contains(&Algorithm::Tensor) { true_factors(&gt).ok() } else { None };
    settings
        .algorithms
        .iter()
        .map(|&algorithm| {
            let mut out = row(algorithm);
            let start = Instant::now();
            let result = match algorithm {
                Algorithm::Tensor => run_tensor(model, settings, &gt, &adjacency, truth.as_ref(), &mut out),
                Algorithm::Baseline => run_baseline(model, settings, &gt, &adjacency, &mut out),
            };
            out.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            if let Err(e) = result {
                out.error = Some(e.to_string());
            }
            out
        })
        .collect()
}

fn cluster_config(model: &ModelConfig, settings: &RunSettings) -> ClusterConfig {
    ClusterConfig { threshold_mode: settings.threshold_mode, seed: model.seed, ..ClusterConfig::new(model.num_groups()) }
}

fn run_tensor(
    model: &ModelConfig,
    settings: &RunSettings,
    gt: &GroundTruth,
    a: &SignedAdjacencyTensor,
    truth: Option<&FactorPair>,
    out: &mut ResultRow,
) -> dimple_core::Result<()> {
    let cfg = HooiConfig::for_model(model.n, model.layers, &model.k, settings.sbm)?;
    let fitted = hooi::fit(a.tensor(), &cfg)?;
    out.hooi_iters = Some(fitted.iterations_run);
    if let Some(t) = truth {
        out.sin_theta_u = sin_theta(&t.u, &fitted.u).ok().map(|s| s.spectral);
        out.sin_theta_w = sin_theta(&t.w, &fitted.w).ok().map(|s| s.spectral);
    }
    let k_mean = (cfg.rank_u as f64 / model.num_groups() as f64).round() as usize;
    let ctx = ClusterContext { n: model.n, layers: model.layers, m: model.num_groups(), k: k_mean, rho_hat: estimate_sparsity(a) };
    let res = cluster_tensor(&fitted.w, &cluster_config(model, settings), &ctx)?;
    out.r_bl = Some(misclassification_rate(&res.labels, &gt.labels)?.r_bl);
    Ok(())
}

fn run_baseline(model: &ModelConfig, settings: &RunSettings, gt: &GroundTruth, a: &SignedAdjacencyTensor, out: &mut ResultRow) -> dimple_core::Result<()> {
    let shift = usize::from(settings.sbm);
    let k: Vec<usize> = gt.labels.as_slice().iter().map(|&g| model.k[g].saturating_sub(shift).max(1)).collect();
    let res = cluster_baseline(a, &k, &cluster_config(model, settings))?;
    out.r_bl = Some(misclassification_rate(&res.labels, &gt.labels)?.r_bl);
    Ok(())
}

/// All replications of one cell, in replication order.
pub fn run_replications(grid: &ExperimentGrid, n: usize, layers: usize) -> Vec<ResultRow> {
    let settings = RunSettings::from_grid(grid);
    (0..grid.replications)
        .into_par_iter()
        .flat_map_iter(|rep| {
            let model = grid.cell_model(n, layers, replication_seed(grid.base_seed, n, layers, rep));
            run_cell(&model, &settings, rep)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Computed,
    Resumed,
}

/// Rows and aggregates of a finished grid.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub results_path: PathBuf,
    pub summary_path: PathBuf,
}

impl GridOutcome {
    pub fn error_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_error()).count()
    }
}

pub fn checkpoint_path(output_dir: &Path, n: usize, layers: usize) -> PathBuf {
    output_dir.join(CHECKPOINT_DIR).join(format!("n{n}_L{layers}.csv"))
}

/// Runs every cell, reusing complete checkpoints in `output_dir/cells`, and
/// writes the result, summary and timing tables. `progress` is called once
/// per cell.
pub fn run_grid(grid: &ExperimentGrid, mut progress: impl FnMut(usize, usize, CellStatus)) -> io::Result<GridOutcome> {
    let dir = &grid.output_dir;
    fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
    let mut rows = Vec::new();
    for (n, layers) in grid.cells() {
        let path = checkpoint_path(dir, n, layers);
        let expected = expected_rows(grid, n, layers);
        let (cell_rows, status) = match read_rows(&path) {
            Ok(existing) if matches_plan(&existing, &expected) => (existing, CellStatus::Resumed),
            _ => {
                let fresh = run_replications(grid, n, layers);
                write_atomic(&path, |w| write_rows(w, &fresh))?;
                (fresh, CellStatus::Computed)
            }
        };
        progress(n, layers, status);
        rows.extend(cell_rows);
    }
    let summary = summarize(&rows);
    let results_path = dir.join(RESULTS_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    write_atomic(&results_path, |w| write_results(w, &rows))?;
    write_atomic(&summary_path, |w| write_summary(w, &summary))?;
    write_atomic(&dir.join(TIMINGS_FILE), |w| write_timings(w, &rows))?;
    Ok(GridOutcome { rows, summary, results_path, summary_path })
}

/// `(algorithm, replication, seed)` of every row a cell must contain.
fn expected_rows(grid: &ExperimentGrid, n: usize, layers: usize) -> Vec<(Algorithm, usize, u64)> {
    (0..grid.replications)
        .flat_map(|rep| {
            let seed = replication_seed(grid.base_seed, n, layers, rep);
            grid.algorithms.iter().map(move |&a| (a, rep, seed))
        })
        .collect()
}

fn matches_plan(rows: &[ResultRow], plan: &[(Algorithm, usize, u64)]) -> bool {
    rows.len() == plan.len() && rows.iter().zip(plan).all(|(r, &(a, rep, seed))| r.algorithm == a && r.replication == rep && r.seed == seed)
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn io::Write) -> io::Result<()>) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = io::BufWriter::new(fs::File::create(&tmp)?);
        write(&mut file)?;
        io::Write::flush(&mut file)?;
    }
    fs::rename(tmp, path)
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_all<T: Serialize>(w: &mut dyn io::Write, items: impl IntoIterator<Item = T>) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for item in items {
        wr.serialize(item).map_err(csv_err)?;
    }
    wr.flush()
}

/// Full rows including wall time, as stored in checkpoints.
pub fn write_rows(w: &mut dyn io::Write, rows: &[ResultRow]) -> io::Result<()> {
    write_all(w, rows)
}

pub fn write_results(w: &mut dyn io::Write, rows: &[ResultRow]) -> io::Result<()> {
    write_all(w, rows.iter().map(ResultRecord::from))
}

fn write_timings(w: &mut dyn io::Write, rows: &[ResultRow]) -> io::Result<()> {
    write_all(
        w,
        rows.iter().map(|r| TimingRecord { algorithm: r.algorithm, n: r.n, layers: r.layers, replication: r.replication, wall_time_ms: r.wall_time_ms }),
    )
}

pub fn write_summary(w: &mut dyn io::Write, summary: &[SummaryRow]) -> io::Result<()> {
    write_all(w, summary)
}

pub fn read_rows(path: &Path) -> io::Result<Vec<ResultRow>> {
    csv::Reader::from_path(path).map_err(csv_err)?.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

pub fn read_summary(path: &Path) -> io::Result<Vec<SummaryRow>> {
    csv::Reader::from_path(path).map_err(csv_err)?.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Standard error of the mean with the `k - 1` variance; zero for one value.
fn stderr(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    Some((var / v.len() as f64).sqrt())
}

/// Aggregates rows per `(algorithm, n, L)`, in first-appearance order of the
/// cells and algorithm order within a cell.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, usize, Algorithm)> = Vec::new();
    for r in rows {
        let key = (r.n, r.layers, r.algorithm);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(n, layers, algorithm)| {
            let cell: Vec<&ResultRow> = rows.iter().filter(|r| r.n == n && r.layers == layers && r.algorithm == algorithm).collect();
            let ok: Vec<&ResultRow> = cell.iter().copied().filter(|r| !r.is_error()).collect();
            let collect = |f: fn(&ResultRow) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let r_bl = collect(|r| r.r_bl);
            let first = cell[0];
            SummaryRow {
                algorithm,
                n,
                layers,
                c: first.c,
                d: first.d,
                distribution: first.distribution.clone(),
                replications: cell.len(),
                errors: cell.len() - ok.len(),
                mean_r_bl: mean(&r_bl),
                stderr_r_bl: stderr(&r_bl),
                mean_sin_theta_u: mean(&collect(|r| r.sin_theta_u)),
                mean_sin_theta_w: mean(&collect(|r| r.sin_theta_w)),
                mean_hooi_iters: mean(&collect(|r| r.hooi_iters.map(|i| i as f64))),
            }
        })
        .collect()
}
