//! Linear minimization oracles over three atomic domains.
//!
//! Each oracle answers `argmin ⟨g, v⟩` over its domain with a single extreme
//! point (atom). The one-norm oracle is exact; the matrix oracles inherit an
//! approximation contract from the iterative solvers in [`crate::spectral`]
//! and report the tolerance they were run at. Ties break toward the smallest
//! index so traces are reproducible.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spectral::{
    default_max_iter, dense_symmetric_spectrum, extreme_eigenpair, top_singular_pair, EigenSide,
    LinearOperator,
};

/// Feasible region for the linear subproblem, with its radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainSpec {
    /// `{x : ‖x‖₁ ≤ alpha}`
    L1 { alpha: f64 },
    /// `{X : ‖X‖_* ≤ alpha}`
    Nuclear { alpha: f64 },
    /// `{X : ‖X‖_* ≤ alpha, X ⪰ 0}`
    PsdNuclear { alpha: f64 },
}

impl DomainSpec {
    pub fn alpha(&self) -> f64 {
        match *self {
            DomainSpec::L1 { alpha }
            | DomainSpec::Nuclear { alpha }
            | DomainSpec::PsdNuclear { alpha } => alpha,
        }
    }

    /// Euclidean diameter of the domain (`2·alpha` for all three balls).
    pub fn diameter(&self) -> f64 {
        2.0 * self.alpha()
    }
}

/// Rank-one matrix atom `scale · left · rightᵀ`, or the zero matrix when
/// `zero` is set.
#[derive(Debug, Clone)]
pub struct RankOneAtom {
    pub scale: f64,
    pub left: DVector<f64>,
    pub right: DVector<f64>,
    pub zero: bool,
}

impl RankOneAtom {
    pub fn zero_atom(rows: usize, cols: usize) -> Self {
        let mut left = DVector::zeros(rows);
        let mut right = DVector::zeros(cols);
        left[0] = 1.0;
        right[0] = 1.0;
        Self { scale: 0.0, left, right, zero: true }
    }

    /// Materializes the atom densely (test and reference paths only).
    pub fn to_dense(&self) -> DMatrix<f64> {
        if self.zero {
            return DMatrix::zeros(self.left.len(), self.right.len());
        }
        let mut out = DMatrix::zeros(self.left.len(), self.right.len());
        for j in 0..self.right.len() {
            let c = self.scale * self.right[j];
            for i in 0..self.left.len() {
                out[(i, j)] = c * self.left[i];
            }
        }
        out
    }
}

/// Oracle answer: the atom, its inner product with the query gradient, and
/// the residual tolerance the spectral solver was run at (0 for exact
/// oracles).
#[derive(Debug, Clone)]
pub enum AtomKind {
    /// Signed scaled basis vector `value · e_index` (one-norm ball).
    Coordinate { index: usize, value: f64 },
    /// Rank-one matrix atom (nuclear and PSD-restricted balls).
    RankOne(RankOneAtom),
}

#[derive(Debug, Clone)]
pub struct OracleAnswer {
    pub atom: AtomKind,
    pub inner: f64,
    pub tolerance_used: f64,
}

impl OracleAnswer {
    /// Short human-readable atom tag for traces.
    pub fn atom_summary(&self) -> String {
        match &self.atom {
            AtomKind::Coordinate { index, value } => format!("e{index}*{value:.3e}"),
            AtomKind::RankOne(a) if a.zero => "zero".to_string(),
            AtomKind::RankOne(a) => format!("rank1*{:.3e}", a.scale),
        }
    }
}

/// Exact linear minimization over the one-norm ball.
///
/// Returns `−alpha·sign(g_i)·e_i` for the smallest index `i` attaining
/// `max_j |g_j|`, with `sign(0) = +1`. A zero gradient yields the atom at
/// index 0 with inner product 0 (any feasible point is optimal).
pub fn lmo_l1(g: &DVector<f64>, alpha: f64) -> Result<OracleAnswer> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let mut best_index = 0usize;
    let mut best_abs = f64::NEG_INFINITY;
    for (i, &gi) in g.iter().enumerate() {
        if !gi.is_finite() {
            return Err(Error::InvalidInput(format!("gradient entry {i} is not finite")));
        }
        if gi.abs() > best_abs {
            best_abs = gi.abs();
            best_index = i;
        }
    }
    if g.is_empty() {
        return Err(Error::InvalidInput("empty gradient".to_string()));
    }
    let sign = if g[best_index] < 0.0 { -1.0 } else { 1.0 };
    let value = -alpha * sign;
    let inner = value * g[best_index];
    Ok(OracleAnswer {
        atom: AtomKind::Coordinate { index: best_index, value },
        inner,
        tolerance_used: 0.0,
    })
}

/// Approximate linear minimization over the nuclear-norm ball.
///
/// Computes a top singular pair of the query at residual tolerance `xi` and
/// returns `−alpha·u·vᵀ`. For a zero query any feasible point is optimal;
/// the returned atom uses an arbitrary unit pair with inner product 0.
pub fn lmo_nuclear(
    g: &dyn LinearOperator,
    alpha: f64,
    xi: f64,
    seed: u64,
) -> Result<OracleAnswer> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let max_iter = default_max_iter(g.nrows(), g.ncols());
    let pair = top_singular_pair(g, xi.max(f64::MIN_POSITIVE), seed, max_iter)?;
    let atom = RankOneAtom { scale: -alpha, left: pair.left, right: pair.right, zero: false };
    let inner = inner_with_rank_one(g, &atom);
    Ok(OracleAnswer { atom: AtomKind::RankOne(atom), inner, tolerance_used: xi })
}

/// Approximate linear minimization over the PSD-restricted nuclear ball.
///
/// If the approximate smallest eigenvalue of the symmetric query is
/// nonnegative the zero matrix is optimal; otherwise the answer is
/// `alpha·v·vᵀ` for the corresponding eigenvector.
pub fn lmo_psd_nuclear(
    g: &dyn LinearOperator,
    alpha: f64,
    xi: f64,
    seed: u64,
) -> Result<OracleAnswer> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if !g.is_symmetric() {
        return Err(Error::InvalidInput(
            "PSD-restricted oracle requires a symmetric query".to_string(),
        ));
    }
    let max_iter = default_max_iter(g.nrows(), g.ncols());
    let pair = extreme_eigenpair(g, EigenSide::Smallest, xi.max(f64::MIN_POSITIVE), seed, max_iter)?;
    if pair.value >= 0.0 {
        let atom = RankOneAtom::zero_atom(g.nrows(), g.ncols());
        return Ok(OracleAnswer { atom: AtomKind::RankOne(atom), inner: 0.0, tolerance_used: xi });
    }
    let atom = RankOneAtom { scale: alpha, left: pair.right.clone(), right: pair.right, zero: false };
    let inner = inner_with_rank_one(g, &atom);
    Ok(OracleAnswer { atom: AtomKind::RankOne(atom), inner, tolerance_used: xi })
}

/// `⟨G, scale·u·vᵀ⟩ = scale · uᵀ(Gv)`, recomputed from the operator.
fn inner_with_rank_one(g: &dyn LinearOperator, atom: &RankOneAtom) -> f64 {
    if atom.zero {
        return 0.0;
    }
    let mut gv = vec![0.0; g.nrows()];
    g.matvec(atom.right.as_slice(), &mut gv);
    let mut acc = 0.0;
    for i in 0..g.nrows() {
        acc += atom.left[i] * gv[i];
    }
    atom.scale * acc
}

/// Query gradient handed to [`oracle_suboptimality`]: a vector for the
/// one-norm domain, an operator for the matrix domains.
pub enum GradientView<'a> {
    Vector(&'a DVector<f64>),
    Matrix(&'a dyn LinearOperator),
}

/// Achieved suboptimality of an oracle answer: `⟨G, atom⟩` minus the exact
/// minimum of the linear subproblem, the latter computed with a dense
/// machine-precision reference.
///
/// Nonnegative up to floating-point noise (at most `1e-8` times the scale
/// `alpha·‖G‖`).
pub fn oracle_suboptimality(
    domain: &DomainSpec,
    grad: GradientView<'_>,
    answer: &OracleAnswer,
) -> Result<f64> {
    let alpha = domain.alpha();
    let exact_min = match (domain, &grad) {
        (DomainSpec::L1 { .. }, GradientView::Vector(g)) => {
            let max_abs = g.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            -alpha * max_abs
        }
        (DomainSpec::Nuclear { .. }, GradientView::Matrix(g)) => {
            let dense = g.to_dense();
            let svd = dense.svd(false, false);
            let sigma1 = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
            -alpha * sigma1
        }
        (DomainSpec::PsdNuclear { .. }, GradientView::Matrix(g)) => {
            let dense = g.to_dense();
            let (values, _) = dense_symmetric_spectrum(&dense);
            alpha * values[0].min(0.0)
        }
        _ => {
            return Err(Error::InvalidInput(
                "gradient view does not match the domain kind".to_string(),
            ))
        }
    };
    Ok(answer.inner - exact_min)
}
