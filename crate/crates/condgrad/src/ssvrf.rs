//! Sketched variance-reduced conditional gradient for matrix completion.
//!
//! The decision variable never exists as a dense matrix. The run keeps
//! exactly three things: the dual variable `z = A(W)` (the iterate's image
//! under the entry-sampling measurement), its epoch snapshot, and the
//! two-sided sketch of the iterate. Gradients of the mean-scaled squared
//! loss live entirely in measurement space; the oracle query is lifted to a
//! sparse matrix over the observed set only, so the eigensolver's
//! matrix-vector products cost `O(|O|)`. The final factorization comes from
//! the sketch reconstruction.
//!
//! [`dense_reference_run`] is the same loop with a dense iterate instead of
//! the sketch, kept in lockstep (same seed streams, same update arithmetic)
//! so validation can compare dual traces; it is a reference facility, not a
//! production path.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::lmo::{lmo_nuclear, AtomKind};
use crate::problems::{completion_objective, CompletionInstance, CompletionObjective, Scaling};
use crate::sketch::{sketch_init, sketch_reconstruct, sketch_update, SketchState};
use crate::svrf::{batch_size, epoch_length, oracle_slack, stepsize, EpochTrace, InnerRow, SvrfConfig, SvrfVariant};

const STREAM_SKETCH: u64 = 0x5EEDC0;
const STREAM_BATCH: u64 = 0x5EEDC1;

fn lmo_seed(base: u64, t: usize, k: usize) -> u64 {
    derive_seed(base, 0x10_0000_0000u64 ^ ((t as u64) << 32) ^ k as u64)
}

/// Convex blend of one measurement (or matrix) entry toward a rank-one
/// atom entry. The sketched run and the dense reference share this exact
/// expression so their trajectories agree bitwise.
#[inline]
fn blend_entry(old: f64, gamma: f64, scaled_u_i: f64, v_j: f64) -> f64 {
    (1.0 - gamma) * old + gamma * (scaled_u_i * v_j)
}

/// Dual variable `z = A(W)` together with its epoch snapshot.
#[derive(Debug, Clone)]
pub struct DualState {
    z: Vec<f64>,
    snapshot: Vec<f64>,
}

impl DualState {
    fn new(d: usize) -> Self {
        Self { z: vec![0.0; d], snapshot: vec![0.0; d] }
    }
    pub fn z(&self) -> &[f64] {
        &self.z
    }
    pub fn snapshot(&self) -> &[f64] {
        &self.snapshot
    }
}

/// Measurement-space reduced gradient for the mean-scaled squared loss:
/// `full_grad_z0 + (1/|batch|) Σ ((z_e − c_e) − (z0_e − c_e))·δ_e`,
/// accumulated in batch order. Its lift through the measurement adjoint is
/// the matrix-space estimator.
pub fn dual_gradient(
    objective: &CompletionObjective,
    z: &[f64],
    z0: &[f64],
    full_grad_z0: &[f64],
    batch: &[usize],
) -> Result<Vec<f64>> {
    if objective.scaling() != Scaling::Mean {
        return Err(Error::InvalidInput("dual gradients require the mean scaling".into()));
    }
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty minibatch".into()));
    }
    let d = objective.terms();
    if z.len() != d || z0.len() != d || full_grad_z0.len() != d {
        return Err(Error::InvalidInput("measurement-space vector length mismatch".into()));
    }
    let c = objective.observed_values();
    let mut acc = vec![0.0; d];
    for &e in batch {
        if e >= d {
            return Err(Error::InvalidParameter(format!("sample index {e} out of range (d={d})")));
        }
        acc[e] += (z[e] - c[e]) - (z0[e] - c[e]);
    }
    let inv = 1.0 / batch.len() as f64;
    for e in 0..d {
        acc[e] = acc[e] * inv + full_grad_z0[e];
    }
    Ok(acc)
}

/// Full measurement-space gradient at a snapshot: `(z0 − c)/d`.
fn full_dual_gradient(c: &[f64], z0: &[f64]) -> Vec<f64> {
    let d = z0.len() as f64;
    z0.iter().zip(c).map(|(&z, &cv)| (z - cv) / d).collect()
}

/// Mean-scaled objective value from the dual variable.
fn dual_objective(c: &[f64], z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&ze, &ce) in z.iter().zip(c) {
        let r = ze - ce;
        acc += 0.5 * r * r;
    }
    acc / z.len() as f64
}

#[derive(Debug, Clone, Default)]
pub struct SsvrfOptions {
    /// Maintain a dense shadow iterate and record the worst deviations
    /// between the production state and the shadow (debug facility; defeats
    /// the memory guarantee while enabled).
    pub shadow: bool,
    /// Record the dual variable after every inner step.
    pub record_dual_trace: bool,
    /// Reconstruct a factorization at the end of every epoch.
    pub reconstruct_each_epoch: bool,
}

/// Result of a sketched run.
pub struct SsvrfOutput {
    /// Final rank-`r` factorization `X̂ = U·diag(σ)·Vᵀ`.
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
    pub trace: EpochTrace,
    /// Per-epoch factorizations when requested.
    pub epoch_factors: Vec<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)>,
    /// Dual variable after every inner step when requested.
    pub dual_trace: Vec<Vec<f64>>,
    /// Floats held for the decision variable: both sketch buffers plus the
    /// dual vector, `m(2r+1) + (4r+3)n + d`.
    pub peak_decision_floats: usize,
    /// Worst relative deviation `|z_e − (A·shadow)_e|` over the run
    /// (shadow mode only).
    pub shadow_dual_deviation: Option<f64>,
    /// Worst relative deviation of the sketch buffers from the directly
    /// sketched shadow (shadow mode only).
    pub shadow_sketch_deviation: Option<f64>,
}

/// Runs the sketched solver on a completion instance over the nuclear ball
/// of radius `alpha`, with target rank `rank` and the epoch/batch schedules
/// of `config`. The iterate starts at zero.
pub fn ssvrf_run(
    inst: &CompletionInstance,
    alpha: f64,
    rank: usize,
    config: &SvrfConfig,
    opts: &SsvrfOptions,
) -> Result<SsvrfOutput> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let objective = completion_objective(inst, Scaling::Mean)?;
    let meas = objective.measurement().clone();
    let c = objective.observed_values().to_vec();
    let d = meas.len();
    let (m, n) = inst.dims();

    let mut sketch: SketchState = sketch_init(m, n, rank, derive_seed(config.seed, STREAM_SKETCH))?;
    let mut dual = DualState::new(d);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_BATCH));

    let mut shadow: Option<DMatrix<f64>> = opts.shadow.then(|| DMatrix::zeros(m, n));
    let mut shadow_dual_dev = 0.0f64;
    let mut shadow_sketch_dev = 0.0f64;

    let mut trace = EpochTrace::default();
    trace.snapshot_objectives.push(dual_objective(&c, &dual.z));
    let mut dual_trace: Vec<Vec<f64>> = Vec::new();
    let mut epoch_factors = Vec::new();

    let mut grad_matrix = meas.zero_pattern();
    let mut acc = vec![0.0f64; d];
    let mut global_k = 0usize;

    for t in 1..=config.epochs {
        dual.snapshot.copy_from_slice(&dual.z);
        let full0 = full_dual_gradient(&c, &dual.snapshot);
        let epoch_end = epoch_length(t, config.epoch_multiplier);
        let k_range = match config.variant {
            SvrfVariant::Restart => 1..=epoch_end,
            SvrfVariant::Stable => (global_k + 1)..=epoch_end,
        };
        for k in k_range {
            let m_k = batch_size(k, config.batch_multiplier);
            acc.fill(0.0);
            for _ in 0..m_k {
                let e = rng.random_range(0..d);
                acc[e] += (dual.z[e] - c[e]) - (dual.snapshot[e] - c[e]);
            }
            let inv = 1.0 / m_k as f64;
            {
                let values = grad_matrix.values_mut();
                for e in 0..d {
                    values[e] = acc[e] * inv + full0[e];
                }
            }

            let slack = oracle_slack(k, config.smoothness, config.diameter, config.delta);
            let grad_norm = grad_matrix.frobenius_norm();
            let xi = if grad_norm > 0.0 && slack > 0.0 {
                (slack / (alpha * grad_norm)).clamp(1e-14, 1.0)
            } else {
                1e-14
            };
            let answer = lmo_nuclear(&grad_matrix, alpha, xi, lmo_seed(config.seed, t, k))?;
            let atom = match &answer.atom {
                AtomKind::RankOne(a) => a,
                AtomKind::Coordinate { .. } => unreachable!("nuclear oracle returns rank-one atoms"),
            };

            let gamma = stepsize(k);
            for (idx, &(i, j)) in meas.observed().iter().enumerate() {
                let scaled_u_i = atom.scale * atom.left[i as usize];
                dual.z[idx] = blend_entry(dual.z[idx], gamma, scaled_u_i, atom.right[j as usize]);
            }
            sketch_update(&mut sketch, 1.0 - gamma, gamma * atom.scale, &atom.left, &atom.right)?;

            if let Some(w) = shadow.as_mut() {
                for j in 0..n {
                    let v_j = atom.right[j];
                    for i in 0..m {
                        let scaled_u_i = atom.scale * atom.left[i];
                        w[(i, j)] = blend_entry(w[(i, j)], gamma, scaled_u_i, v_j);
                    }
                }
                let scale = w.norm().max(1e-30);
                for (idx, &(i, j)) in meas.observed().iter().enumerate() {
                    let dev = (dual.z[idx] - w[(i as usize, j as usize)]).abs() / scale;
                    shadow_dual_dev = shadow_dual_dev.max(dev);
                }
                let yc_direct = &*w * sketch.psi();
                let yr_direct = sketch.phi() * &*w;
                let denom = yc_direct.norm().max(yr_direct.norm()).max(1e-30);
                shadow_sketch_dev = shadow_sketch_dev
                    .max((sketch.column_sketch() - &yc_direct).norm() / denom)
                    .max((sketch.row_sketch() - &yr_direct).norm() / denom);
            }

            trace.rows.push(InnerRow {
                epoch: t,
                k,
                batch_size: m_k,
                objective: config.record_objective.then(|| dual_objective(&c, &dual.z)),
                slack,
            });
            if opts.record_dual_trace {
                dual_trace.push(dual.z.clone());
            }
        }
        global_k = epoch_end;
        trace.snapshot_objectives.push(dual_objective(&c, &dual.z));
        if opts.reconstruct_each_epoch {
            epoch_factors.push(sketch_reconstruct(&sketch, rank)?);
        }
    }

    let peak_decision_floats = sketch.buffer_floats() + dual.z.len();
    let (u, sigma, v) = sketch_reconstruct(&sketch, rank)?;
    Ok(SsvrfOutput {
        u,
        sigma,
        v,
        trace,
        epoch_factors,
        dual_trace,
        peak_decision_floats,
        shadow_dual_deviation: opts.shadow.then_some(shadow_dual_dev),
        shadow_sketch_deviation: opts.shadow.then_some(shadow_sketch_dev),
    })
}

/// Dense-iterate twin of [`ssvrf_run`] used for validation: identical seed
/// streams, schedules, oracle calls, and update arithmetic, but the iterate
/// is a dense matrix and the "dual trace" is read off its observed entries.
/// Returns the final dense iterate and the per-step dual trace.
pub fn dense_reference_run(
    inst: &CompletionInstance,
    alpha: f64,
    config: &SvrfConfig,
) -> Result<(DMatrix<f64>, Vec<Vec<f64>>)> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let objective = completion_objective(inst, Scaling::Mean)?;
    let meas = objective.measurement().clone();
    let c = objective.observed_values().to_vec();
    let d = meas.len();
    let (m, n) = inst.dims();

    let mut x = DMatrix::<f64>::zeros(m, n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_BATCH));
    let mut grad_matrix = meas.zero_pattern();
    let mut acc = vec![0.0f64; d];
    let mut z_trace = Vec::new();
    let mut global_k = 0usize;

    for t in 1..=config.epochs {
        let snapshot = x.clone();
        // Full gradient from the dense snapshot, in measurement space.
        let z0: Vec<f64> = meas.observed().iter().map(|&(i, j)| snapshot[(i as usize, j as usize)]).collect();
        let full0 = full_dual_gradient(&c, &z0);
        let epoch_end = epoch_length(t, config.epoch_multiplier);
        let k_range = match config.variant {
            SvrfVariant::Restart => 1..=epoch_end,
            SvrfVariant::Stable => (global_k + 1)..=epoch_end,
        };
        for k in k_range {
            let m_k = batch_size(k, config.batch_multiplier);
            acc.fill(0.0);
            for _ in 0..m_k {
                let e = rng.random_range(0..d);
                let (i, j) = meas.observed()[e];
                let current = x[(i as usize, j as usize)];
                acc[e] += (current - c[e]) - (z0[e] - c[e]);
            }
            let inv = 1.0 / m_k as f64;
            {
                let values = grad_matrix.values_mut();
                for e in 0..d {
                    values[e] = acc[e] * inv + full0[e];
                }
            }

            let slack = oracle_slack(k, config.smoothness, config.diameter, config.delta);
            let grad_norm = grad_matrix.frobenius_norm();
            let xi = if grad_norm > 0.0 && slack > 0.0 {
                (slack / (alpha * grad_norm)).clamp(1e-14, 1.0)
            } else {
                1e-14
            };
            let answer = lmo_nuclear(&grad_matrix, alpha, xi, lmo_seed(config.seed, t, k))?;
            let atom = match &answer.atom {
                AtomKind::RankOne(a) => a,
                AtomKind::Coordinate { .. } => unreachable!(),
            };

            let gamma = stepsize(k);
            for j in 0..n {
                let v_j = atom.right[j];
                for i in 0..m {
                    let scaled_u_i = atom.scale * atom.left[i];
                    x[(i, j)] = blend_entry(x[(i, j)], gamma, scaled_u_i, v_j);
                }
            }
            z_trace.push(meas.apply(&x));
        }
        global_k = epoch_end;
    }
    Ok((x, z_trace))
}
