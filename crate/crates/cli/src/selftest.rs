//! Noiseless end-to-end checks, run by `dimple selftest`.

use std::time::{Duration, Instant};

use dimple_core::cluster::cluster_tensor;
use dimple_core::hooi::{self, core_tensor, init_factors, iterate_centered, reconstruct, true_factors};
use dimple_core::linalg::sin_theta;
use dimple_core::metrics::misclassification_rate;
use dimple_core::netgen::{build_ground_truth, sample_adjacency};
use dimple_core::tensor::frobenius_norm;
use dimple_core::{ClusterConfig, ClusterContext, HooiConfig, LatentDist, LayerLabels, ModelConfig};

/// Outcome of running the tensor pipeline on the noiseless signal.
#[derive(Debug, Clone)]
pub struct NoiselessOutcome {
    pub sin_theta_u: f64,
    pub sin_theta_w: f64,
    pub r_bl: f64,
    pub elapsed: Duration,
}

pub fn noiseless_model(n: usize, layers: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        n,
        layers,
        k: vec![3, 3, 3],
        pi: vec![],
        latent: LatentDist::TruncatedNormal { sigma: 1.0, covariance: None },
        b_range: (-0.05, 0.05),
        seed,
    }
}

/// Spectral start, power iterations and layer clustering on the centered
/// population tensor, scored against the population factors and labels.
pub fn noiseless_pipeline(model: &ModelConfig) -> dimple_core::Result<NoiselessOutcome> {
    let start = Instant::now();
    let gt = build_ground_truth(model)?;
    let signal = gt.centered_signal();
    let mut cfg = HooiConfig::for_model(model.n, model.layers, &model.k, false)?;
    cfg.hollow = false;
    let init = init_factors(&signal, &cfg)?;
    let fitted = iterate_centered(&signal, &init, &cfg)?;
    let ctx = ClusterContext { n: model.n, layers: model.layers, m: model.num_groups(), k: model.k[0], rho_hat: 1.0 };
    let cluster_cfg = ClusterConfig { seed: model.seed, ..ClusterConfig::new(model.num_groups()) };
    let labels = cluster_tensor(&fitted.w, &cluster_cfg, &ctx)?.labels;
    let truth = true_factors(&gt)?;
    Ok(NoiselessOutcome {
        sin_theta_u: sin_theta(&truth.u, &fitted.u)?.spectral,
        sin_theta_w: sin_theta(&truth.w, &fitted.w)?.spectral,
        r_bl: misclassification_rate(&labels, &gt.labels)?.r_bl,
        elapsed: start.elapsed(),
    })
}

/// `|P~ - core x1 U x2 U x3 W|_F / |P~|_F` for the population factors.
pub fn tucker_residual(model: &ModelConfig) -> dimple_core::Result<f64> {
    let gt = build_ground_truth(model)?;
    let signal = gt.centered_signal();
    let truth = true_factors(&gt)?;
    let core = core_tensor(&signal, &truth.u, &truth.w)?;
    let back = reconstruct(&core, &truth.u, &truth.w)?;
    Ok(frobenius_norm(&signal.sub(&back)?) / frobenius_norm(&signal))
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: dimple_core::Result<(bool, String)>) -> Check {
    match result {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

/// Runs every check; each is independent of the others.
pub fn run(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check(
        "noiseless recovery",
        noiseless_pipeline(&noiseless_model(150, 120, seed)).map(|o| {
            let ok = o.sin_theta_u <= 1e-6 && o.sin_theta_w <= 1e-6 && o.r_bl == 0.0;
            (ok, format!("sin U = {:.2e}, sin W = {:.2e}, R_BL = {}, {:.1?}", o.sin_theta_u, o.sin_theta_w, o.r_bl, o.elapsed))
        }),
    ));
    out.push(check(
        "tucker identity",
        tucker_residual(&noiseless_model(100, 60, seed.wrapping_add(1))).map(|r| (r <= 1e-8, format!("relative residual {r:.2e}"))),
    ));
    out.push(check(
        "label permutation",
        (|| {
            let truth = LayerLabels::new((0..30).map(|l| l % 3).collect(), 3)?;
            let relabeled = LayerLabels::new(truth.as_slice().iter().map(|&g| (g + 1) % 3).collect(), 3)?;
            let r = misclassification_rate(&relabeled, &truth)?.r_bl;
            Ok((r == 0.0, format!("R_BL = {r}")))
        })(),
    ));
    out.push(check(
        "sampling determinism",
        (|| {
            let gt = build_ground_truth(&noiseless_model(60, 20, seed))?;
            let a = sample_adjacency(&gt.p, seed);
            let b = sample_adjacency(&gt.p, seed);
            let cfg = HooiConfig::for_model(60, 20, &[3, 3, 3], false)?;
            let fa = hooi::fit(a.tensor(), &cfg)?;
            let fb = hooi::fit(b.tensor(), &cfg)?;
            let same = a.tensor().as_slice() == b.tensor().as_slice() && fa.w.matrix() == fb.w.matrix();
            Ok((same, "two runs from one seed".to_string()))
        })(),
    ));
    out
}
