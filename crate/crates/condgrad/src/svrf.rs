//! Variance-reduced stochastic conditional gradient for finite sums.
//!
//! The gradient estimator follows the snapshot scheme: at a point `x` with
//! snapshot `x₀`, each sample is `∇f_i(x) − ∇f_i(x₀) + ∇f(x₀)` for a
//! uniformly drawn term index, unbiased for `∇f(x)` with variance that
//! vanishes as both points approach the optimum. Epoch `t` takes a fresh
//! snapshot, then runs inner steps whose minibatch size grows linearly in
//! the step counter while the stepsize decays as `2/(k+1)`.
//!
//! Two variants differ only in the step counter: the restarting one resets
//! `k` to 1 at every epoch, the stable one lets `k` keep increasing so the
//! stepsize never jumps back up.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::fw::{LmoTolerance, VectorDomain};
use crate::problems::VectorFiniteSum;

/// Default schedules for epoch `t ≥ 1` and inner step `k ≥ 1`:
/// stepsize `2/(k+1)`, minibatch `96(k+1)`, epoch length `2^{t+3} − 2`,
/// oracle slack `(L·D²/2)·γ_k·δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedules {
    pub gamma: f64,
    pub batch_size: usize,
    pub epoch_length: usize,
    pub slack: f64,
}

/// The four default schedule values at `(k, t)`.
pub fn default_schedules(k: usize, t: usize, smoothness: f64, diameter: f64, delta: f64) -> Schedules {
    Schedules {
        gamma: stepsize(k),
        batch_size: batch_size(k, 1.0),
        epoch_length: epoch_length(t, 1.0),
        slack: oracle_slack(k, smoothness, diameter, delta),
    }
}

pub fn stepsize(k: usize) -> f64 {
    2.0 / (k as f64 + 1.0)
}

pub fn batch_size(k: usize, multiplier: f64) -> usize {
    let exact = 96.0 * (k as f64 + 1.0) * multiplier;
    (exact.ceil() as usize).max(1)
}

pub fn epoch_length(t: usize, multiplier: f64) -> usize {
    let exact = (2f64.powi(t as i32 + 3) - 2.0) * multiplier;
    (exact.round() as usize).max(1)
}

pub fn oracle_slack(k: usize, smoothness: f64, diameter: f64, delta: f64) -> f64 {
    0.5 * smoothness * diameter * diameter * stepsize(k) * delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvrfVariant {
    /// Inner counter resets to 1 at each snapshot.
    Restart,
    /// Inner counter keeps increasing across snapshots.
    Stable,
}

#[derive(Debug, Clone)]
pub struct SvrfConfig {
    /// Oracle slack multiplier δ ≥ 0 (0 requests exact subproblem answers).
    pub delta: f64,
    /// Smoothness constant shared by every term of the finite sum.
    pub smoothness: f64,
    /// Euclidean diameter of the feasible set.
    pub diameter: f64,
    /// Number of epochs T.
    pub epochs: usize,
    pub variant: SvrfVariant,
    /// Multiplier on the minibatch schedule (1.0 reproduces the default).
    pub batch_multiplier: f64,
    /// Multiplier on the epoch-length schedule (1.0 reproduces the default).
    pub epoch_multiplier: f64,
    pub seed: u64,
    /// Evaluate the objective at every inner iterate (a full data pass per
    /// step); snapshots are always evaluated.
    pub record_objective: bool,
}

impl SvrfConfig {
    pub fn new(smoothness: f64, diameter: f64, delta: f64, epochs: usize, seed: u64) -> Self {
        Self {
            delta,
            smoothness,
            diameter,
            epochs,
            variant: SvrfVariant::Restart,
            batch_multiplier: 1.0,
            epoch_multiplier: 1.0,
            seed,
            record_objective: false,
        }
    }
}

/// Per-inner-iteration record.
#[derive(Debug, Clone)]
pub struct InnerRow {
    pub epoch: usize,
    pub k: usize,
    pub batch_size: usize,
    pub objective: Option<f64>,
    pub slack: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EpochTrace {
    pub rows: Vec<InnerRow>,
    /// Objective at the snapshot points: entry 0 is the post-initialization
    /// point, entry `t` the iterate after epoch `t`.
    pub snapshot_objectives: Vec<f64>,
}

/// One variance-reduced gradient sample averaged over a minibatch:
/// `∇f(x₀) + (1/|batch|) Σ_i (∇f_i(x) − ∇f_i(x₀))`, accumulated in batch
/// order. With `x == x₀` the correction cancels exactly and the snapshot
/// gradient is returned unchanged.
pub fn variance_reduced_gradient(
    objective: &dyn VectorFiniteSum,
    x: &DVector<f64>,
    x0: &DVector<f64>,
    full_grad_x0: &DVector<f64>,
    batch: &[usize],
) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(objective.dim());
    let mut term_x = DVector::zeros(objective.dim());
    let mut term_x0 = DVector::zeros(objective.dim());
    variance_reduced_gradient_into(objective, x, x0, full_grad_x0, batch, &mut out, &mut term_x, &mut term_x0)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn variance_reduced_gradient_into(
    objective: &dyn VectorFiniteSum,
    x: &DVector<f64>,
    x0: &DVector<f64>,
    full_grad_x0: &DVector<f64>,
    batch: &[usize],
    out: &mut DVector<f64>,
    term_x: &mut DVector<f64>,
    term_x0: &mut DVector<f64>,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty minibatch".into()));
    }
    let d = objective.terms();
    out.fill(0.0);
    for &i in batch {
        if i >= d {
            return Err(Error::InvalidParameter(format!("term index {i} out of range (d={d})")));
        }
        objective.term_gradient_into(i, x, term_x);
        objective.term_gradient_into(i, x0, term_x0);
        for j in 0..out.len() {
            out[j] += term_x[j] - term_x0[j];
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for j in 0..out.len() {
        out[j] = out[j] * inv + full_grad_x0[j];
    }
    Ok(())
}

/// Runs the variance-reduced solver over a vector domain.
///
/// Initialization takes one oracle step at the starting point's gradient
/// with slack `(L·D²/2)·δ` (the schedule at stepsize 1), landing on an
/// atom. Each epoch then snapshots the iterate, computes its full gradient,
/// and performs the inner loop; the final iterate and the epoch trace are
/// returned.
pub fn svrf_run(
    objective: &dyn VectorFiniteSum,
    domain: &dyn VectorDomain,
    x_init: &DVector<f64>,
    config: &SvrfConfig,
) -> Result<(DVector<f64>, EpochTrace)> {
    if config.delta < 0.0 {
        return Err(Error::InvalidParameter(format!("delta must be >= 0, got {}", config.delta)));
    }
    if !domain.is_feasible(x_init) {
        return Err(Error::InvalidInput("starting point is infeasible for the domain".into()));
    }
    let dim = objective.dim();
    let slack0 = 0.5 * config.smoothness * config.diameter * config.diameter * config.delta;
    let tol0 = if config.delta > 0.0 { LmoTolerance::Slack(slack0) } else { LmoTolerance::ExactMin };

    // Initialization: one oracle answer at the start gradient becomes x₀.
    let g_start = objective.gradient(x_init);
    let init_answer = domain.lmo(&g_start, tol0)?;
    let mut x = x_init.clone();
    domain.apply_atom(&mut x, 1.0, &init_answer.atom);

    let mut trace = EpochTrace::default();
    trace.snapshot_objectives.push(objective.value(&x));

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xBA7C4));
    let mut batch: Vec<usize> = Vec::new();
    let mut reduced = DVector::zeros(dim);
    let mut term_x = DVector::zeros(dim);
    let mut term_x0 = DVector::zeros(dim);
    let d = objective.terms();

    let mut global_k = 0usize;
    for t in 1..=config.epochs {
        let snapshot = x.clone();
        let full_grad = objective.gradient(&snapshot);
        let epoch_end = epoch_length(t, config.epoch_multiplier);
        let k_range = match config.variant {
            SvrfVariant::Restart => 1..=epoch_end,
            SvrfVariant::Stable => (global_k + 1)..=epoch_end,
        };
        for k in k_range {
            let m_k = batch_size(k, config.batch_multiplier);
            batch.clear();
            batch.extend((0..m_k).map(|_| rng.random_range(0..d)));
            variance_reduced_gradient_into(
                objective,
                &x,
                &snapshot,
                &full_grad,
                &batch,
                &mut reduced,
                &mut term_x,
                &mut term_x0,
            )?;
            let slack = oracle_slack(k, config.smoothness, config.diameter, config.delta);
            let tol =
                if config.delta > 0.0 { LmoTolerance::Slack(slack) } else { LmoTolerance::ExactMin };
            let answer = domain.lmo(&reduced, tol)?;
            domain.apply_atom(&mut x, stepsize(k), &answer.atom);
            trace.rows.push(InnerRow {
                epoch: t,
                k,
                batch_size: m_k,
                objective: config.record_objective.then(|| objective.value(&x)),
                slack,
            });
        }
        global_k = epoch_end;
        trace.snapshot_objectives.push(objective.value(&x));
    }
    Ok((x, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fw::{
        frank_wolfe_vector, FwConfig, L1Ball, Stepsize, ToleranceRule,
    };
    use crate::problems::{HalfSquaredNorm, LeastSquaresSum, VectorObjective};
    use rand::Rng;

    #[test]
    fn schedule_values_at_small_indices() {
        let s = default_schedules(1, 1, 1.0, 2.0, 0.5);
        assert_eq!(s.gamma, 1.0);
        assert_eq!(s.batch_size, 192);
        assert_eq!(s.epoch_length, 14);
        // slack = (L·D²/2)·γ·δ = 2·1·0.5 = 1.0
        assert_eq!(s.slack, 1.0);

        let s3 = default_schedules(3, 2, 1.0, 2.0, 0.5);
        assert_eq!(s3.gamma, 0.5);
        assert_eq!(s3.slack, 0.5);
        assert_eq!(s3.epoch_length, 30);
        assert_eq!(s3.batch_size, 384);
    }

    #[test]
    fn epoch_lengths_double() {
        assert_eq!(epoch_length(1, 1.0), 14);
        assert_eq!(epoch_length(2, 1.0), 30);
        assert_eq!(epoch_length(3, 1.0), 62);
        assert_eq!(epoch_length(4, 1.0), 126);
    }

    #[test]
    fn reduced_gradient_at_snapshot_is_exact() {
        let obj = LeastSquaresSum::random(30, 10, 0.1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = DVector::from_fn(10, |_, _| rng.random::<f64>() - 0.5);
        let full = obj.gradient(&x0);
        let g = variance_reduced_gradient(&obj, &x0, &x0, &full, &[4, 9, 9, 0]).unwrap();
        assert_eq!(g.as_slice(), full.as_slice());
    }

    #[test]
    fn reduced_gradient_full_batch_recovers_gradient() {
        let obj = LeastSquaresSum::random(25, 8, 0.2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DVector::from_fn(8, |_, _| rng.random::<f64>() - 0.5);
        let x0 = DVector::from_fn(8, |_, _| rng.random::<f64>() - 0.5);
        let full0 = obj.gradient(&x0);
        let batch: Vec<usize> = (0..25).collect();
        let g = variance_reduced_gradient(&obj, &x, &x0, &full0, &batch).unwrap();
        let exact = obj.gradient(&x);
        assert!((&g - &exact).norm() <= 1e-14 * exact.norm().max(1.0));
    }

    #[test]
    fn reduced_gradient_rejects_empty_and_out_of_range() {
        let obj = LeastSquaresSum::random(5, 3, 0.0, 1);
        let x = DVector::zeros(3);
        let full = obj.gradient(&x);
        assert!(variance_reduced_gradient(&obj, &x, &x, &full, &[]).is_err());
        assert!(variance_reduced_gradient(&obj, &x, &x, &full, &[5]).is_err());
    }

    #[test]
    fn reduced_gradient_is_unbiased() {
        // Monte-Carlo mean over singleton batches within 3 standard errors.
        let obj = LeastSquaresSum::random(40, 12, 0.3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DVector::from_fn(12, |_, _| rng.random::<f64>() - 0.5);
        let x0 = DVector::from_fn(12, |_, _| rng.random::<f64>() - 0.5);
        let full0 = obj.gradient(&x0);
        let exact = obj.gradient(&x);
        let samples = 10_000;
        let mut mean = DVector::zeros(12);
        let mut sq_dev = 0.0;
        for _ in 0..samples {
            let i = rng.random_range(0..obj.terms());
            let g = variance_reduced_gradient(&obj, &x, &x0, &full0, &[i]).unwrap();
            sq_dev += (&g - &exact).norm_squared();
            mean += g;
        }
        mean /= samples as f64;
        let per_sample_std = (sq_dev / samples as f64).sqrt();
        let std_err = per_sample_std / (samples as f64).sqrt();
        assert!(
            (&mean - &exact).norm() <= 3.0 * std_err,
            "|mean - grad| = {} vs 3·SE = {}",
            (&mean - &exact).norm(),
            3.0 * std_err
        );
    }

    #[test]
    fn variance_bound_from_suboptimality() {
        // Consistent system: the unconstrained optimum has value 0 and zero
        // gradient, so the second moment of the reduced gradient deviation
        // is at most 6L(2(f(x) − f*) + (f(x₀) − f*)).
        let obj = LeastSquaresSum::consistent(50, 15, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DVector::from_fn(15, |_, _| 0.4 * (rng.random::<f64>() - 0.5));
        let x0 = DVector::from_fn(15, |_, _| 0.4 * (rng.random::<f64>() - 0.5));
        let full0 = obj.gradient(&x0);
        let exact = obj.gradient(&x);
        let samples = 10_000;
        let mut second_moment = 0.0;
        for _ in 0..samples {
            let i = rng.random_range(0..obj.terms());
            let g = variance_reduced_gradient(&obj, &x, &x0, &full0, &[i]).unwrap();
            second_moment += (&g - &exact).norm_squared();
        }
        second_moment /= samples as f64;
        let bound = 6.0 * obj.term_smoothness() * (2.0 * obj.value(&x) + obj.value(&x0));
        assert!(
            second_moment <= 1.1 * bound,
            "moment {second_moment} vs 1.1x bound {}",
            1.1 * bound
        );
    }

    #[test]
    fn single_term_run_matches_deterministic_driver() {
        // With one term the estimator collapses to the full gradient, so the
        // stable variant retraces the deterministic driver started from the
        // initialization atom (stepsize sequences align after the shift).
        let obj = HalfSquaredNorm { dim: 6 };
        let domain = L1Ball::adversarial(1.0);
        let delta = 0.2;
        let mut config = SvrfConfig::new(1.0, 2.0, delta, 3, 123);
        config.variant = SvrfVariant::Stable;
        config.record_objective = true;
        let mut x_init = DVector::zeros(6);
        x_init[0] = 1.0;
        let (x_final, trace) = svrf_run(&obj, &domain, &x_init, &config).unwrap();

        // Deterministic reference: starting point = initialization atom.
        let g0 = obj.gradient(&x_init);
        let slack0 = 0.5 * 1.0 * 4.0 * delta;
        let init = domain.lmo(&g0, LmoTolerance::Slack(slack0)).unwrap();
        let mut x0 = x_init.clone();
        domain.apply_atom(&mut x0, 1.0, &init.atom);
        let total_iters = trace.rows.len();
        // The driver's step j corresponds to inner step k = j+1, so the
        // standard rule 2/(j+2) equals the inner stepsize 2/(k+1).
        let fw_config = FwConfig {
            gap_tol: f64::NEG_INFINITY,
            stepsize: Stepsize::standard(),
            tolerance: ToleranceRule::StepProportional {
                smoothness: 1.0,
                diameter: 2.0,
                delta,
            },
            max_iter: total_iters,
            time_budget_s: None,
            seed: 0,
        };
        struct Shifted<'a>(&'a HalfSquaredNorm);
        impl VectorObjective for Shifted<'_> {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn value(&self, x: &DVector<f64>) -> f64 {
                self.0.value(x)
            }
            fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
                self.0.gradient(x)
            }
            fn smoothness(&self) -> f64 {
                1.0
            }
        }
        let run = frank_wolfe_vector(&Shifted(&obj), domain, &x0, &fw_config).unwrap();
        // Compare final objectives; trajectories agree step by step, so the
        // endpoints must match tightly.
        let _ = x_final;
        let last = trace.rows.last().unwrap().objective.unwrap();
        assert!(
            (run.trace.final_objective - last).abs() <= 1e-12 * last.max(1.0),
            "svrf {last} vs fw {}",
            run.trace.final_objective
        );
    }

    #[test]
    fn restart_and_stable_agree_during_the_first_epoch() {
        // Identical seeds process identical batches while both variants use
        // the same step counter; the schedules diverge from epoch 2 onward
        // by construction (the restart variant resets the counter).
        let obj = LeastSquaresSum::random(20, 6, 0.1, 13);
        let domain = L1Ball::new(1.0);
        let mut x_init = DVector::zeros(6);
        x_init[2] = -1.0;
        let mut config = SvrfConfig::new(1.0, 2.0, 0.1, 1, 99);
        config.record_objective = true;
        let (xr, tr) = svrf_run(&obj, &domain, &x_init, &config).unwrap();
        config.variant = SvrfVariant::Stable;
        let (xs, ts) = svrf_run(&obj, &domain, &x_init, &config).unwrap();
        assert_eq!(xr.as_slice(), xs.as_slice());
        assert_eq!(tr.rows.len(), ts.rows.len());
        for (a, b) in tr.rows.iter().zip(&ts.rows) {
            assert_eq!(a.objective, b.objective);
        }
    }

    #[test]
    fn epoch_inner_counts_match_schedules() {
        let obj = LeastSquaresSum::random(10, 4, 0.1, 2);
        let domain = L1Ball::new(1.0);
        let x_init = DVector::zeros(4);
        let mut config = SvrfConfig::new(1.0, 2.0, 0.0, 3, 5);
        config.batch_multiplier = 0.02; // keep the test cheap
        let (_, trace) = svrf_run(&obj, &domain, &x_init, &config).unwrap();
        for t in 1..=3usize {
            let count = trace.rows.iter().filter(|r| r.epoch == t).count();
            assert_eq!(count, epoch_length(t, 1.0));
        }

        config.variant = SvrfVariant::Stable;
        let (_, trace) = svrf_run(&obj, &domain, &x_init, &config).unwrap();
        let mut prev_end = 0usize;
        for t in 1..=3usize {
            let count = trace.rows.iter().filter(|r| r.epoch == t).count();
            assert_eq!(count, epoch_length(t, 1.0) - prev_end);
            prev_end = epoch_length(t, 1.0);
        }
    }

    #[test]
    fn iterates_stay_feasible_and_trend_downward() {
        let obj = LeastSquaresSum::random(60, 10, 0.05, 4);
        let domain = L1Ball::new(1.0);
        let x_init = DVector::zeros(10);
        let mut config = SvrfConfig::new(1.0, 2.0, 0.1, 4, 77);
        config.batch_multiplier = 0.1;
        config.variant = SvrfVariant::Stable;
        let (x, trace) = svrf_run(&obj, &domain, &x_init, &config).unwrap();
        assert!(domain.is_feasible(&x));
        // Weak single-trajectory check: the end of the last epoch is no
        // worse than the end of the first.
        let first = trace.snapshot_objectives[1];
        let last = *trace.snapshot_objectives.last().unwrap();
        assert!(last <= first, "last epoch {last} vs first epoch {first}");
    }
}
