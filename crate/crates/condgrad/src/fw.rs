//! Deterministic conditional-gradient driver with approximate oracles.
//!
//! One loop serves every domain: compute the gradient, ask the domain's
//! linear minimization oracle (exact, fixed residual tolerance, or a slack
//! schedule proportional to the stepsize), stop once the duality gap
//! `(x − v)ᵀ∇f(x)` falls below the requested tolerance, otherwise blend
//! `x ← (1−γ_k)x + γ_k v` with `γ_k = 2/(k+2)`.
//!
//! Iterates are stored densely here; the memory-frugal path lives in
//! [`crate::ssvrf`].

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::lmo::{lmo_l1, lmo_nuclear, lmo_psd_nuclear, AtomKind, DomainSpec, OracleAnswer};
use crate::problems::{CompletionObjective, SparseEntries, VectorObjective};

/// Stepsize schedule `γ_k = 2/(k + offset)`, `k` counted from zero.
#[derive(Debug, Clone, Copy)]
pub enum Stepsize {
    Harmonic { offset: f64 },
}

impl Stepsize {
    /// The standard rule `γ_k = 2/(k+2)` (so `γ_0 = 1`).
    pub fn standard() -> Self {
        Stepsize::Harmonic { offset: 2.0 }
    }

    pub fn gamma(&self, k: usize) -> f64 {
        match *self {
            Stepsize::Harmonic { offset } => 2.0 / (k as f64 + offset),
        }
    }
}

/// Per-iteration subproblem accuracy.
#[derive(Debug, Clone, Copy)]
pub enum ToleranceRule {
    /// Solve the subproblem to machine accuracy.
    Exact,
    /// Fixed residual tolerance handed to the spectral solver.
    ConstantXi(f64),
    /// Inner-product slack `ε_k = (L·D²/2)·γ_k·δ`, shrinking with the
    /// stepsize.
    StepProportional { smoothness: f64, diameter: f64, delta: f64 },
}

impl ToleranceRule {
    pub fn tolerance_for(&self, gamma_k: f64) -> LmoTolerance {
        match *self {
            ToleranceRule::Exact => LmoTolerance::ExactMin,
            ToleranceRule::ConstantXi(xi) => LmoTolerance::ResidualXi(xi),
            ToleranceRule::StepProportional { smoothness, diameter, delta } => {
                LmoTolerance::Slack(0.5 * smoothness * diameter * diameter * gamma_k * delta)
            }
        }
    }
}

/// Accuracy request handed to a domain oracle for one call.
#[derive(Debug, Clone, Copy)]
pub enum LmoTolerance {
    /// Exact minimization (machine-precision residual for matrix domains).
    ExactMin,
    /// Allowed inner-product suboptimality `ε ≥ 0`.
    Slack(f64),
    /// Residual tolerance for the iterative spectral solver.
    ResidualXi(f64),
}

impl LmoTolerance {
    /// The number recorded in traces: `ε_k` for slack requests, `ξ` for
    /// residual requests, 0 for exact.
    pub fn trace_value(&self) -> f64 {
        match *self {
            LmoTolerance::ExactMin => 0.0,
            LmoTolerance::Slack(e) => e,
            LmoTolerance::ResidualXi(x) => x,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FwConfig {
    /// Stop once the duality gap falls to this value or below. Use
    /// `f64::NEG_INFINITY` to disable gap stopping.
    pub gap_tol: f64,
    pub stepsize: Stepsize,
    pub tolerance: ToleranceRule,
    pub max_iter: usize,
    /// Budget on accumulated algorithm time (gradient + oracle + update),
    /// checked once per iteration after the oracle call.
    pub time_budget_s: Option<f64>,
    pub seed: u64,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self {
            gap_tol: 0.0,
            stepsize: Stepsize::standard(),
            tolerance: ToleranceRule::Exact,
            max_iter: 1000,
            time_budget_s: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GapMet,
    MaxIter,
    TimeBudget,
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub k: usize,
    /// Cumulative algorithm seconds up to and including this oracle call.
    pub elapsed_s: f64,
    /// Objective at the pre-update iterate the oracle was queried at.
    pub objective: f64,
    pub gap: f64,
    /// Scheduled tolerance: `ε_k` or `ξ` depending on the rule.
    pub tol_used: f64,
    pub atom: String,
}

#[derive(Debug, Clone)]
pub struct IterateTrace {
    pub rows: Vec<TraceRow>,
    pub termination: Termination,
    pub final_objective: f64,
}

/// Successful run: final iterate plus the complete trace.
#[derive(Debug, Clone)]
pub struct FwRun<Pt> {
    pub point: Pt,
    pub trace: IterateTrace,
}

/// Failed run: the underlying error plus whatever trace had accumulated.
#[derive(Debug)]
pub struct FwAbort {
    pub error: Error,
    pub trace: IterateTrace,
}

/// Everything the driver needs from a concrete problem: objective value,
/// gradient, an oracle for the linear subproblem, the convex update, and a
/// feasibility check for starting points.
pub trait FwProblem {
    type Point: Clone;
    type Grad;

    fn value(&self, x: &Self::Point) -> f64;
    fn gradient(&self, x: &Self::Point) -> Self::Grad;
    fn lmo(&self, grad: &Self::Grad, tol: LmoTolerance, seed: u64) -> Result<OracleAnswer>;
    fn grad_dot_point(&self, grad: &Self::Grad, x: &Self::Point) -> f64;
    /// `x ← (1−γ)x + γ·atom`.
    fn apply_atom(&self, x: &mut Self::Point, gamma: f64, atom: &AtomKind);
    fn is_feasible(&self, x: &Self::Point) -> bool;
}

/// Snapshot handed to an optional per-iteration observer. Observer time is
/// excluded from the algorithm clock.
pub struct IterationEvent<'a, P: FwProblem + ?Sized> {
    pub k: usize,
    /// Pre-update iterate the gradient and oracle answer refer to.
    pub point: &'a P::Point,
    pub gradient: &'a P::Grad,
    pub answer: &'a OracleAnswer,
    pub gap: f64,
    pub elapsed_s: f64,
}

/// Runs the conditional-gradient loop.
///
/// The oracle is queried at the pre-update iterate; the loop breaks before
/// updating when the duality gap meets `gap_tol`, so the returned point is
/// the certified one. Oracle failures abort with the partial trace.
pub fn frank_wolfe<P: FwProblem>(
    problem: &P,
    x_init: &P::Point,
    config: &FwConfig,
    mut observer: Option<&mut dyn FnMut(&IterationEvent<'_, P>)>,
) -> std::result::Result<FwRun<P::Point>, FwAbort> {
    let empty = |termination| IterateTrace { rows: Vec::new(), termination, final_objective: f64::NAN };
    if !problem.is_feasible(x_init) {
        return Err(FwAbort {
            error: Error::InvalidInput("starting point is infeasible for the domain".into()),
            trace: empty(Termination::MaxIter),
        });
    }

    let mut x = x_init.clone();
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut elapsed = 0.0f64;
    let mut termination = Termination::MaxIter;

    for k in 0..config.max_iter {
        let clock = Instant::now();
        let gamma = config.stepsize.gamma(k);
        let tol = config.tolerance.tolerance_for(gamma);
        let grad = problem.gradient(&x);
        let answer = match problem.lmo(&grad, tol, derive_seed(config.seed, k as u64)) {
            Ok(a) => a,
            Err(error) => {
                return Err(FwAbort {
                    error,
                    trace: IterateTrace {
                        rows,
                        termination: Termination::MaxIter,
                        final_objective: problem.value(&x),
                    },
                })
            }
        };
        let gap = problem.grad_dot_point(&grad, &x) - answer.inner;
        elapsed += clock.elapsed().as_secs_f64();

        // Diagnostics off the algorithm clock.
        let objective = problem.value(&x);
        rows.push(TraceRow {
            k,
            elapsed_s: elapsed,
            objective,
            gap,
            tol_used: tol.trace_value(),
            atom: answer.atom_summary(),
        });
        if let Some(obs) = observer.as_deref_mut() {
            obs(&IterationEvent { k, point: &x, gradient: &grad, answer: &answer, gap, elapsed_s: elapsed });
        }

        if gap <= config.gap_tol {
            termination = Termination::GapMet;
            break;
        }

        let clock = Instant::now();
        problem.apply_atom(&mut x, gamma, &answer.atom);
        elapsed += clock.elapsed().as_secs_f64();

        if let Some(budget) = config.time_budget_s {
            if elapsed >= budget {
                termination = Termination::TimeBudget;
                break;
            }
        }
    }

    let final_objective = problem.value(&x);
    Ok(FwRun { point: x, trace: IterateTrace { rows, termination, final_objective } })
}

/// Duality gap `(x − v)ᵀ∇f(x)` for vector iterates.
pub fn duality_gap_vector(x: &DVector<f64>, grad: &DVector<f64>, answer: &OracleAnswer) -> f64 {
    grad.dot(x) - answer.inner
}

/// Duality gap for matrix iterates with a sparse gradient.
pub fn duality_gap_matrix(x: &DMatrix<f64>, grad: &SparseEntries, answer: &OracleAnswer) -> f64 {
    grad.dot_dense(x) - answer.inner
}

// ---------------------------------------------------------------------------
// Vector domain: the one-norm ball.
// ---------------------------------------------------------------------------

/// Oracle + geometry of a vector feasible set. Shared by the deterministic
/// and stochastic drivers.
pub trait VectorDomain: Sync {
    fn lmo(&self, grad: &DVector<f64>, tol: LmoTolerance) -> Result<OracleAnswer>;
    fn apply_atom(&self, x: &mut DVector<f64>, gamma: f64, atom: &AtomKind);
    fn is_feasible(&self, x: &DVector<f64>) -> bool;
    fn diameter(&self) -> f64;
}

/// One-norm ball of radius `alpha`, with an optional adversarial mode that
/// degrades slack-tolerance answers to exactly the allowed suboptimality.
#[derive(Debug, Clone, Copy)]
pub struct L1Ball {
    pub alpha: f64,
    pub adversarial: bool,
}

impl L1Ball {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, adversarial: false }
    }

    /// Worst oracle permitted by a slack tolerance: answers land exactly at
    /// `min + ε` (clipped to the feasible range of inner products).
    pub fn adversarial(alpha: f64) -> Self {
        Self { alpha, adversarial: true }
    }
}

impl VectorDomain for L1Ball {
    fn lmo(&self, grad: &DVector<f64>, tol: LmoTolerance) -> Result<OracleAnswer> {
        let exact = lmo_l1(grad, self.alpha)?;
        let slack = match tol {
            LmoTolerance::Slack(e) if self.adversarial && e > 0.0 => e,
            _ => return Ok(exact),
        };
        let min_inner = exact.inner; // −alpha·max|g|
        if min_inner == 0.0 {
            return Ok(exact);
        }
        let (index, vertex_value) = match exact.atom {
            AtomKind::Coordinate { index, value } => (index, value),
            _ => unreachable!("one-norm oracle returns coordinate atoms"),
        };
        // Scale the vertex so the inner product is exactly min + slack.
        let theta = (1.0 - slack / (-min_inner)).clamp(-1.0, 1.0);
        let value = theta * vertex_value;
        let inner = value * grad[index];
        Ok(OracleAnswer { atom: AtomKind::Coordinate { index, value }, inner, tolerance_used: 0.0 })
    }

    fn apply_atom(&self, x: &mut DVector<f64>, gamma: f64, atom: &AtomKind) {
        let keep = 1.0 - gamma;
        match *atom {
            AtomKind::Coordinate { index, value } => {
                *x *= keep;
                x[index] += gamma * value;
            }
            _ => unreachable!("one-norm domain expects coordinate atoms"),
        }
    }

    fn is_feasible(&self, x: &DVector<f64>) -> bool {
        let norm1: f64 = x.iter().map(|v| v.abs()).sum();
        norm1 <= self.alpha * (1.0 + 1e-10)
    }

    fn diameter(&self) -> f64 {
        2.0 * self.alpha
    }
}

/// A vector objective paired with a vector domain.
pub struct VectorProblem<'a, D: VectorDomain> {
    pub objective: &'a dyn VectorObjective,
    pub domain: D,
}

impl<D: VectorDomain> FwProblem for VectorProblem<'_, D> {
    type Point = DVector<f64>;
    type Grad = DVector<f64>;

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.objective.value(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.objective.gradient(x)
    }
    fn lmo(&self, grad: &DVector<f64>, tol: LmoTolerance, _seed: u64) -> Result<OracleAnswer> {
        self.domain.lmo(grad, tol)
    }
    fn grad_dot_point(&self, grad: &DVector<f64>, x: &DVector<f64>) -> f64 {
        grad.dot(x)
    }
    fn apply_atom(&self, x: &mut DVector<f64>, gamma: f64, atom: &AtomKind) {
        self.domain.apply_atom(x, gamma, atom)
    }
    fn is_feasible(&self, x: &DVector<f64>) -> bool {
        self.domain.is_feasible(x)
    }
}

// ---------------------------------------------------------------------------
// Matrix domains: nuclear ball and its PSD restriction.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixBall {
    Nuclear,
    PsdNuclear,
}

/// Completion objective over a nuclear-type ball; the matrix flavor of
/// [`FwProblem`] with dense iterates and sparse gradients.
pub struct CompletionProblem<'a> {
    pub objective: &'a CompletionObjective,
    pub ball: MatrixBall,
    pub alpha: f64,
}

impl CompletionProblem<'_> {
    pub fn domain_spec(&self) -> DomainSpec {
        match self.ball {
            MatrixBall::Nuclear => DomainSpec::Nuclear { alpha: self.alpha },
            MatrixBall::PsdNuclear => DomainSpec::PsdNuclear { alpha: self.alpha },
        }
    }

    /// Maps an accuracy request to the residual tolerance of the spectral
    /// solver. Slack requests use the conservative bound
    /// `ε ≤ ξ·alpha·‖G‖` with the Frobenius norm standing in for the
    /// operator norm, so the resulting residual tolerance only over-delivers.
    fn xi_for(&self, grad: &SparseEntries, tol: LmoTolerance) -> f64 {
        const XI_FLOOR: f64 = 1e-14;
        match tol {
            LmoTolerance::ExactMin => XI_FLOOR,
            LmoTolerance::ResidualXi(xi) => xi,
            LmoTolerance::Slack(e) => {
                let scale = self.alpha * grad.frobenius_norm();
                if scale > 0.0 {
                    (e / scale).clamp(XI_FLOOR, 1.0)
                } else {
                    XI_FLOOR
                }
            }
        }
    }
}

impl FwProblem for CompletionProblem<'_> {
    type Point = DMatrix<f64>;
    type Grad = SparseEntries;

    fn value(&self, x: &DMatrix<f64>) -> f64 {
        self.objective.value(x)
    }
    fn gradient(&self, x: &DMatrix<f64>) -> SparseEntries {
        self.objective.gradient(x)
    }
    fn lmo(&self, grad: &SparseEntries, tol: LmoTolerance, seed: u64) -> Result<OracleAnswer> {
        let xi = self.xi_for(grad, tol);
        match self.ball {
            MatrixBall::Nuclear => lmo_nuclear(grad, self.alpha, xi, seed),
            MatrixBall::PsdNuclear => lmo_psd_nuclear(grad, self.alpha, xi, seed),
        }
    }
    fn grad_dot_point(&self, grad: &SparseEntries, x: &DMatrix<f64>) -> f64 {
        grad.dot_dense(x)
    }
    fn apply_atom(&self, x: &mut DMatrix<f64>, gamma: f64, atom: &AtomKind) {
        let keep = 1.0 - gamma;
        match atom {
            AtomKind::RankOne(a) if !a.zero => {
                for j in 0..x.ncols() {
                    let coeff = gamma * (a.scale * a.right[j]);
                    for i in 0..x.nrows() {
                        x[(i, j)] = keep * x[(i, j)] + coeff * a.left[i];
                    }
                }
            }
            AtomKind::RankOne(_) => {
                *x *= keep;
            }
            AtomKind::Coordinate { .. } => {
                unreachable!("matrix domain expects rank-one atoms")
            }
        }
    }
    fn is_feasible(&self, x: &DMatrix<f64>) -> bool {
        let tol = 1e-10 * self.alpha.max(1.0);
        match self.ball {
            MatrixBall::Nuclear => {
                let svd = x.clone().svd(false, false);
                let nuclear: f64 = svd.singular_values.iter().sum();
                nuclear <= self.alpha + tol
            }
            MatrixBall::PsdNuclear => {
                if x.nrows() != x.ncols() {
                    return false;
                }
                let (values, _) = crate::spectral::dense_symmetric_spectrum(x);
                let nuclear: f64 = values.iter().map(|v| v.abs()).sum();
                values[0] >= -tol && nuclear <= self.alpha + tol
            }
        }
    }
}

/// Convenience runner for vector problems.
pub fn frank_wolfe_vector<D: VectorDomain>(
    objective: &dyn VectorObjective,
    domain: D,
    x_init: &DVector<f64>,
    config: &FwConfig,
) -> std::result::Result<FwRun<DVector<f64>>, FwAbort> {
    let problem = VectorProblem { objective, domain };
    frank_wolfe(&problem, x_init, config, None)
}

/// Convenience runner for completion problems, used by tests and the
/// benchmark harness.
pub fn frank_wolfe_completion<'a>(
    objective: &'a CompletionObjective,
    ball: MatrixBall,
    alpha: f64,
    x_init: &DMatrix<f64>,
    config: &FwConfig,
    observer: Option<&mut dyn FnMut(&IterationEvent<'_, CompletionProblem<'a>>)>,
) -> std::result::Result<FwRun<DMatrix<f64>>, FwAbort> {
    let problem = CompletionProblem { objective, ball, alpha };
    frank_wolfe(&problem, x_init, config, observer)
}

pub type VectorRun = FwRun<DVector<f64>>;
pub type MatrixRun = FwRun<DMatrix<f64>>;
