//! Oracle micro-benchmark: times the PSD-restricted oracle on a completion
//! gradient across residual tolerances and reports accuracy diagnostics.

use std::time::Instant;

use condgrad::derive_seed;
use condgrad::lmo::{lmo_psd_nuclear, oracle_suboptimality, AtomKind, DomainSpec, GradientView};
use condgrad::problems::{completion_objective, make_symmetric_completion, Scaling};
use condgrad::spectral::{dense_symmetric_spectrum, LinearOperator};
use nalgebra::DMatrix;

use crate::config::{AlphaPolicy, ExperimentConfig};
use crate::metrics::MetricRow;

/// For each tolerance in the grid and each seed, queries the oracle at the
/// gradient of the zero iterate and records timing, achieved error, and
/// eigenvalue accuracy against the dense reference.
pub fn run_lmo_bench(config: &ExperimentConfig) -> Result<Vec<MetricRow>, String> {
    let inst = make_symmetric_completion(
        config.n,
        config.rank,
        config.noise_scale,
        config.sample_rate,
        derive_seed(config.seeds[0], 0xB0B),
    )
    .map_err(|e| e.to_string())?;
    let alpha = match config.alpha_policy {
        AlphaPolicy::NuclearOfTruth => inst.truth_nuclear_norm(),
        AlphaPolicy::Explicit(a) => a,
    };
    let objective = completion_objective(&inst, Scaling::Total).map_err(|e| e.to_string())?;
    let x0 = DMatrix::zeros(config.n, config.n);
    let grad = objective.gradient(&x0);

    let dense = grad.to_dense();
    let (lams, _) = dense_symmetric_spectrum(&dense);
    let lam_min = lams[0];
    let grad_norm2 = lam_min.abs().max(lams[lams.len() - 1].abs());
    let domain = DomainSpec::PsdNuclear { alpha };
    let experiment_id = format!("lmo-bench-n{}-r{}", config.n, config.rank);

    let mut rows = Vec::new();
    for (cell, &xi) in config.xi_grid.iter().enumerate() {
        for &seed in &config.seeds {
            let t0 = Instant::now();
            let answer =
                lmo_psd_nuclear(&grad, alpha, xi, derive_seed(seed, cell as u64)).map_err(|e| e.to_string())?;
            let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
            let eps_k = oracle_suboptimality(&domain, GradientView::Matrix(&grad), &answer)
                .map_err(|e| e.to_string())?;
            let lambda_rel_err = match &answer.atom {
                AtomKind::RankOne(a) if !a.zero && lam_min != 0.0 => {
                    Some((answer.inner / alpha - lam_min).abs() / lam_min.abs())
                }
                _ => None,
            };
            rows.push(MetricRow {
                experiment_id: experiment_id.clone(),
                variant: "lmo-psd".into(),
                seed,
                t: None,
                k: Some(cell),
                wall_ms,
                rel_obj: None,
                rel_err: None,
                gap: None,
                eps_k: Some(eps_k),
                xi: Some(xi),
                lambda_rel_err,
                bound_ratio: if eps_k > 0.0 { Some(xi * alpha * grad_norm2 / eps_k) } else { None },
            });
        }
    }
    Ok(rows)
}
