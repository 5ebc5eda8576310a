//! Runners for the stochastic variants: the quadratic-testbed run over the
//! one-norm ball and the sketched completion run with factor export.

use std::path::Path;

use condgrad::derive_seed;
use condgrad::fw::{frank_wolfe_vector, FwConfig, L1Ball, ToleranceRule};
use condgrad::problems::{make_rectangular_completion, relative_metrics, LeastSquaresSum, VectorObjective};
use condgrad::sketch::write_factors;
use condgrad::ssvrf::{ssvrf_run, SsvrfOptions};
use condgrad::svrf::{svrf_run, SvrfConfig, SvrfVariant};
use nalgebra::{DMatrix, DVector};

use crate::config::{AlphaPolicy, ExperimentConfig};
use crate::metrics::MetricRow;

/// Reference minimum of the quadratic testbed over the unit one-norm ball,
/// from a long exact-oracle deterministic run.
pub fn testbed_reference_minimum(objective: &LeastSquaresSum, alpha: f64, iters: usize) -> f64 {
    let config = FwConfig {
        gap_tol: f64::NEG_INFINITY,
        tolerance: ToleranceRule::Exact,
        max_iter: iters,
        ..FwConfig::default()
    };
    let mut x0 = DVector::zeros(objective.dim());
    x0[0] = alpha;
    frank_wolfe_vector(objective, L1Ball::new(alpha), &x0, &config)
        .expect("deterministic reference run")
        .trace
        .final_objective
}

/// Runs the variance-reduced solver on the least-squares testbed across
/// seeds and emits one row per epoch. `rel_obj` is the normalized
/// suboptimality `(f(x_t) − f*)/(f(start) − f*)` against a deterministic
/// reference minimum.
pub fn run_svrf(config: &ExperimentConfig) -> Result<Vec<MetricRow>, String> {
    let alpha = match config.alpha_policy {
        AlphaPolicy::Explicit(a) => a,
        AlphaPolicy::NuclearOfTruth => 1.0,
    };
    let objective = LeastSquaresSum::random(config.terms, config.dim, config.noise_scale, 7_777);
    let fstar = testbed_reference_minimum(&objective, alpha, 100_000);
    let variant_name = if config.stable_variant { "svrf-stable" } else { "svrf-restart" };
    let experiment_id = format!("svrf-quadratic-d{}-n{}", config.terms, config.dim);

    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let mut run_cfg =
            SvrfConfig::new(1.0, 2.0 * alpha, config.delta, config.epochs, derive_seed(seed, 0x5F));
        run_cfg.variant =
            if config.stable_variant { SvrfVariant::Stable } else { SvrfVariant::Restart };
        run_cfg.batch_multiplier = config.batch_multiplier;
        let mut x0 = DVector::zeros(config.dim);
        x0[0] = alpha;
        let start = std::time::Instant::now();
        let (_, trace) =
            svrf_run(&objective, &L1Ball::adversarial(alpha), &x0, &run_cfg).map_err(|e| e.to_string())?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let denom = (trace.snapshot_objectives[0] - fstar).max(f64::MIN_POSITIVE);
        for (t, &obj) in trace.snapshot_objectives.iter().enumerate().skip(1) {
            let k_end = trace.rows.iter().filter(|r| r.epoch <= t).map(|r| r.k).max();
            let slack = trace.rows.iter().rfind(|r| r.epoch == t).map(|r| r.slack);
            rows.push(MetricRow {
                experiment_id: experiment_id.clone(),
                variant: variant_name.into(),
                seed,
                t: Some(t),
                k: k_end,
                wall_ms,
                rel_obj: Some((obj - fstar) / denom),
                rel_err: None,
                gap: None,
                eps_k: slack,
                xi: None,
                lambda_rel_err: None,
                bound_ratio: None,
            });
        }
    }
    Ok(rows)
}

/// Runs the sketched solver on a rectangular completion instance across
/// seeds; emits epoch-level rows with the relative error of the epoch
/// reconstructions and writes the final factors next to `out_stem` when
/// given.
pub fn run_ssvrf(
    config: &ExperimentConfig,
    out_stem: Option<&Path>,
) -> Result<Vec<MetricRow>, String> {
    let inst = make_rectangular_completion(
        config.m,
        config.n,
        config.rank,
        config.noise_scale,
        config.sample_rate,
        derive_seed(config.seeds[0], 0x1257),
    )
    .map_err(|e| e.to_string())?;
    let alpha = match config.alpha_policy {
        AlphaPolicy::NuclearOfTruth => inst.truth_nuclear_norm(),
        AlphaPolicy::Explicit(a) => a,
    };
    let (m, n) = inst.dims();
    let d = inst.num_observed();
    let r = config.target_rank;
    let experiment_id = format!("ssvrf-{m}x{n}-r{r}");

    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let mut run_cfg = SvrfConfig::new(1.0, 2.0 * alpha, config.delta, config.epochs, seed);
        run_cfg.batch_multiplier = config.batch_multiplier;
        if config.stable_variant {
            run_cfg.variant = SvrfVariant::Stable;
        }
        let opts = SsvrfOptions {
            shadow: config.shadow,
            record_dual_trace: false,
            reconstruct_each_epoch: true,
        };
        let start = std::time::Instant::now();
        let out = ssvrf_run(&inst, alpha, r, &run_cfg, &opts).map_err(|e| e.to_string())?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;

        let expected_floats = m * (2 * r + 1) + (4 * r + 3) * n + d;
        if out.peak_decision_floats != expected_floats {
            return Err(format!(
                "decision-variable audit failed: {} floats vs expected {}",
                out.peak_decision_floats, expected_floats
            ));
        }
        if let Some(dev) = out.shadow_dual_deviation {
            if dev > 1e-10 {
                return Err(format!("shadow dual deviation {dev} exceeds 1e-10"));
            }
        }

        for (t_idx, (u, s, v)) in out.epoch_factors.iter().enumerate() {
            let xhat = u * DMatrix::from_diagonal(s) * v.transpose();
            let (rel_obj, rel_err) = relative_metrics(&xhat, &inst).map_err(|e| e.to_string())?;
            rows.push(MetricRow {
                experiment_id: experiment_id.clone(),
                variant: "ssvrf".into(),
                seed,
                t: Some(t_idx + 1),
                k: None,
                wall_ms,
                rel_obj: Some(rel_obj),
                rel_err: Some(rel_err),
                gap: None,
                eps_k: None,
                xi: None,
                lambda_rel_err: None,
                bound_ratio: None,
            });
        }

        if let (Some(stem), true) = (out_stem, seed == config.seeds[0]) {
            write_factors(stem, &out.u, &out.sigma, &out.v).map_err(|e| e.to_string())?;
        }
    }
    Ok(rows)
}
