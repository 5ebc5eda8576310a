//! Matrix-completion instances, measurement operators, and objectives.
//!
//! Instances are generated from a low-rank factor plus (optionally
//! symmetrized) Gaussian noise, with entries observed independently at a
//! fixed sample rate. The squared-error objective comes in two scalings:
//! the total form `½‖P_O(X) − P_O(C)‖_F²` used by the deterministic solver
//! and benchmarks, and the mean form `(1/d)Σ ½(x_e − c_e)²` whose terms are
//! each 1-smooth, as the stochastic variants require.
//!
//! The module also hosts the small dense vector objectives (half squared
//! norm, least-squares finite sums) used as solver testbeds.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spectral::LinearOperator;
use crate::textfmt::format_g17;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Sparse matrix stored as explicit (row, col, value) entries.
///
/// For symmetric-tagged values both `(i, j)` and `(j, i)` are stored, the
/// diagonal once. Gradients over an observed set reuse one of these with the
/// index pattern fixed and only the values rewritten.
#[derive(Debug, Clone)]
pub struct SparseEntries {
    rows: usize,
    cols: usize,
    indices: Vec<(u32, u32)>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseEntries {
    pub fn new(
        rows: usize,
        cols: usize,
        indices: Vec<(u32, u32)>,
        values: Vec<f64>,
        symmetric: bool,
    ) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "index/value length mismatch: {} vs {}",
                indices.len(),
                values.len()
            )));
        }
        let mut seen = HashSet::with_capacity(indices.len());
        for &(i, j) in &indices {
            if i as usize >= rows || j as usize >= cols {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) out of bounds for {rows}x{cols}"
                )));
            }
            if !seen.insert(((i as u64) << 32) | j as u64) {
                return Err(Error::InvalidInput(format!("duplicate entry ({i}, {j})")));
            }
        }
        if symmetric {
            if rows != cols {
                return Err(Error::InvalidInput("symmetric tag requires a square matrix".into()));
            }
            for (&(i, j), &v) in indices.iter().zip(values.iter()) {
                if i != j {
                    let mirror = indices
                        .iter()
                        .position(|&(a, b)| a == j && b == i)
                        .ok_or_else(|| {
                            Error::InvalidInput(format!("missing mirror of ({i}, {j})"))
                        })?;
                    if values[mirror] != v {
                        return Err(Error::InvalidInput(format!(
                            "asymmetric values at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(Self { rows, cols, indices, values, symmetric })
    }

    /// Pattern-only constructor with zero values (no validation fees on the
    /// hot path; indices must already be unique and in bounds).
    pub(crate) fn from_pattern(rows: usize, cols: usize, indices: Vec<(u32, u32)>, symmetric: bool) -> Self {
        let values = vec![0.0; indices.len()];
        Self { rows, cols, indices, values, symmetric }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn indices(&self) -> &[(u32, u32)] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Trace inner product with a dense matrix over the stored entries.
    pub fn dot_dense(&self, x: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for (&(i, j), &v) in self.indices.iter().zip(self.values.iter()) {
            acc += v * x[(i as usize, j as usize)];
        }
        acc
    }
}

impl LinearOperator for SparseEntries {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (&(i, j), &v) in self.indices.iter().zip(self.values.iter()) {
            out[i as usize] += v * x[j as usize];
        }
    }
    fn rmatvec(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (&(i, j), &v) in self.indices.iter().zip(self.values.iter()) {
            out[j as usize] += v * y[i as usize];
        }
    }
    fn to_dense(&self) -> DMatrix<f64> {
        let mut dense = DMatrix::zeros(self.rows, self.cols);
        for (&(i, j), &v) in self.indices.iter().zip(self.values.iter()) {
            dense[(i as usize, j as usize)] = v;
        }
        dense
    }
}

/// Entry-sampling linear measurement `X ↦ (X_e)_{e ∈ O}` with its adjoint.
#[derive(Debug, Clone)]
pub struct EntrySampling {
    rows: usize,
    cols: usize,
    observed: Vec<(u32, u32)>,
    symmetric: bool,
}

impl EntrySampling {
    pub fn new(rows: usize, cols: usize, observed: Vec<(u32, u32)>, symmetric: bool) -> Self {
        Self { rows, cols, observed, symmetric }
    }

    /// Number of measurements.
    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn observed(&self) -> &[(u32, u32)] {
        &self.observed
    }

    /// Applies the measurement map to a dense matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.observed
            .iter()
            .map(|&(i, j)| x[(i as usize, j as usize)])
            .collect()
    }

    /// Applies the map to a rank-one matrix `scale·u·vᵀ` without forming it.
    pub fn apply_rank_one(&self, scale: f64, u: &DVector<f64>, v: &DVector<f64>) -> Vec<f64> {
        self.observed
            .iter()
            .map(|&(i, j)| (scale * u[i as usize]) * v[j as usize])
            .collect()
    }

    /// Adjoint: lifts a measurement-space vector to a sparse matrix over the
    /// observed set.
    pub fn adjoint(&self, y: &[f64]) -> SparseEntries {
        assert_eq!(y.len(), self.observed.len(), "measurement length mismatch");
        SparseEntries {
            rows: self.rows,
            cols: self.cols,
            indices: self.observed.clone(),
            values: y.to_vec(),
            symmetric: false,
        }
    }

    /// Sparse buffer with the observed pattern and zero values, symmetric
    /// tag inherited from the instance.
    pub fn zero_pattern(&self) -> SparseEntries {
        SparseEntries::from_pattern(self.rows, self.cols, self.observed.clone(), self.symmetric)
    }
}

/// Observation scaling of the completion objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// `f(X) = ½ Σ_e (x_e − c_e)²` with smoothness constant 1.
    Total,
    /// `f(X) = (1/d) Σ_e ½ (x_e − c_e)²`; each term is 1-smooth.
    Mean,
}

/// A generated (or hand-built) matrix-completion instance.
#[derive(Debug, Clone)]
pub struct CompletionInstance {
    rows: usize,
    cols: usize,
    symmetric: bool,
    sample_rate: f64,
    noise_scale: f64,
    seed: u64,
    factor_left: DMatrix<f64>,
    factor_right: Option<DMatrix<f64>>,
    truth: DMatrix<f64>,
    noisy: DMatrix<f64>,
    observed: Vec<(u32, u32)>,
}

impl CompletionInstance {
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }
    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    /// Ground truth `X⁰`.
    pub fn truth(&self) -> &DMatrix<f64> {
        &self.truth
    }
    /// Noisy observations source `C = X⁰ + E`.
    pub fn noisy(&self) -> &DMatrix<f64> {
        &self.noisy
    }
    pub fn observed(&self) -> &[(u32, u32)] {
        &self.observed
    }
    pub fn num_observed(&self) -> usize {
        self.observed.len()
    }
    pub fn factor_left(&self) -> &DMatrix<f64> {
        &self.factor_left
    }
    /// Second factor of rectangular instances (`X⁰ = W₁W₂ᵀ`); `None` for
    /// symmetric ones.
    pub fn factor_right(&self) -> Option<&DMatrix<f64>> {
        self.factor_right.as_ref()
    }

    /// The entry-sampling measurement map over the observed set.
    pub fn measurement(&self) -> EntrySampling {
        EntrySampling::new(self.rows, self.cols, self.observed.clone(), self.symmetric)
    }

    /// Nuclear norm of the ground truth, the radius used by the benchmark
    /// experiments. Exact trace for symmetric instances (the truth is PSD),
    /// dense SVD otherwise.
    pub fn truth_nuclear_norm(&self) -> f64 {
        if self.symmetric {
            self.factor_left.iter().map(|w| w * w).sum()
        } else {
            let svd = self.truth.clone().svd(false, false);
            svd.singular_values.iter().sum()
        }
    }

    /// Builds an instance from explicit parts, validating the invariants:
    /// symmetric instances need a symmetric `C`, a mirrored observed set,
    /// and a PSD truth by construction (`X⁰ = W Wᵀ`).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        factor_left: DMatrix<f64>,
        factor_right: Option<DMatrix<f64>>,
        noisy: DMatrix<f64>,
        observed: Vec<(u32, u32)>,
        sample_rate: f64,
        noise_scale: f64,
        symmetric: bool,
        seed: u64,
    ) -> Result<Self> {
        let truth = match &factor_right {
            Some(w2) => &factor_left * w2.transpose(),
            None => symmetric_gram(&factor_left),
        };
        let (rows, cols) = (truth.nrows(), truth.ncols());
        if noisy.nrows() != rows || noisy.ncols() != cols {
            return Err(Error::InvalidInput("noisy matrix shape mismatch".into()));
        }
        let mut seen = HashSet::new();
        for &(i, j) in &observed {
            if i as usize >= rows || j as usize >= cols {
                return Err(Error::InvalidInput(format!("observed ({i},{j}) out of bounds")));
            }
            if !seen.insert(((i as u64) << 32) | j as u64) {
                return Err(Error::InvalidInput(format!("duplicate observation ({i},{j})")));
            }
        }
        if symmetric {
            if factor_right.is_some() || rows != cols {
                return Err(Error::InvalidInput(
                    "symmetric instance needs a single factor and square shape".into(),
                ));
            }
            for &(i, j) in &observed {
                if i != j && !seen.contains(&(((j as u64) << 32) | i as u64)) {
                    return Err(Error::InvalidInput(format!(
                        "observed set is not mirrored at ({i},{j})"
                    )));
                }
            }
            for j in 0..cols {
                for i in 0..j {
                    if noisy[(i, j)] != noisy[(j, i)] {
                        return Err(Error::InvalidInput("noisy matrix is not symmetric".into()));
                    }
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            symmetric,
            sample_rate,
            noise_scale,
            seed,
            factor_left,
            factor_right,
            truth,
            noisy,
            observed,
        })
    }

    /// Writes the observations as plain text: a header
    /// `m n symmetric p noise_scale seed`, then one `i j value` line per
    /// observed entry with 1-based indices and 17-significant-digit floats.
    pub fn write_observations(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            self.rows,
            self.cols,
            if self.symmetric { 1 } else { 0 },
            format_g17(self.sample_rate),
            format_g17(self.noise_scale),
            self.seed
        );
        for &(i, j) in &self.observed {
            let _ = writeln!(
                out,
                "{} {} {}",
                i + 1,
                j + 1,
                format_g17(self.noisy[(i as usize, j as usize)])
            );
        }
        std::fs::write(path, out)
    }
}

/// Observation-side view parsed back from the plain-text format.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
    pub sample_rate: f64,
    pub noise_scale: f64,
    pub seed: u64,
    /// 0-based entries `(i, j, value)`.
    pub entries: Vec<(u32, u32, f64)>,
}

/// Parses the plain-text observation format written by
/// [`CompletionInstance::write_observations`].
pub fn read_observations(path: &Path) -> Result<ObservedData> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty observation file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(Error::InvalidInput(format!(
            "header must have 6 fields, got {}",
            fields.len()
        )));
    }
    let parse_err = |what: &str| Error::InvalidInput(format!("bad header field: {what}"));
    let rows: usize = fields[0].parse().map_err(|_| parse_err("rows"))?;
    let cols: usize = fields[1].parse().map_err(|_| parse_err("cols"))?;
    let symmetric = match fields[2] {
        "0" => false,
        "1" => true,
        _ => return Err(parse_err("symmetric flag")),
    };
    let sample_rate: f64 = fields[3].parse().map_err(|_| parse_err("sample rate"))?;
    let noise_scale: f64 = fields[4].parse().map_err(|_| parse_err("noise scale"))?;
    let seed: u64 = fields[5].parse().map_err(|_| parse_err("seed"))?;
    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::InvalidInput(format!("line {}: expected 3 fields", lineno + 2)));
        }
        let i: u32 = f[0]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {}: bad row index", lineno + 2)))?;
        let j: u32 = f[1]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {}: bad col index", lineno + 2)))?;
        let v: f64 = f[2]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {}: bad value", lineno + 2)))?;
        if i == 0 || j == 0 {
            return Err(Error::InvalidInput(format!("line {}: indices are 1-based", lineno + 2)));
        }
        entries.push((i - 1, j - 1, v));
    }
    Ok(ObservedData { rows, cols, symmetric, sample_rate, noise_scale, seed, entries })
}

/// `X⁰ = W Wᵀ`, computed on the upper triangle and mirrored so the result is
/// exactly symmetric.
fn symmetric_gram(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let r = w.ncols();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let mut acc = 0.0;
            for k in 0..r {
                acc += w[(i, k)] * w[(j, k)];
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    out
}

fn validate_generator_params(rows: usize, cols: usize, rank: usize, noise_scale: f64, p: f64) -> Result<()> {
    if rank == 0 || rank > rows.min(cols) {
        return Err(Error::InvalidParameter(format!(
            "rank must satisfy 1 <= r <= min(m, n), got r={rank} for {rows}x{cols}"
        )));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("sample rate must be in (0, 1], got {p}")));
    }
    if !noise_scale.is_finite() || noise_scale < 0.0 {
        return Err(Error::InvalidParameter(format!("noise scale must be >= 0, got {noise_scale}")));
    }
    Ok(())
}

/// Symmetric completion instance: `X⁰ = W Wᵀ` with `W` an `n×r` standard
/// normal factor, symmetric noise `E = noise_scale·(L + Lᵀ)`, and each
/// upper-triangular index (diagonal included) observed independently with
/// probability `p`, then mirrored.
pub fn make_symmetric_completion(
    n: usize,
    rank: usize,
    noise_scale: f64,
    p: f64,
    seed: u64,
) -> Result<CompletionInstance> {
    validate_generator_params(n, n, rank, noise_scale, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DMatrix::from_fn(n, rank, |_, _| normal(&mut rng));
    let truth = symmetric_gram(&w);
    let mut noisy = truth.clone();
    if noise_scale > 0.0 {
        let l = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
        for j in 0..n {
            for i in 0..=j {
                let e = noise_scale * (l[(i, j)] + l[(j, i)]);
                noisy[(i, j)] += e;
                noisy[(j, i)] = noisy[(i, j)];
            }
        }
    }
    let mut observed = Vec::new();
    for i in 0..n {
        for j in i..n {
            if rng.random::<f64>() < p {
                observed.push((i as u32, j as u32));
                if i != j {
                    observed.push((j as u32, i as u32));
                }
            }
        }
    }
    Ok(CompletionInstance {
        rows: n,
        cols: n,
        symmetric: true,
        sample_rate: p,
        noise_scale,
        seed,
        factor_left: w,
        factor_right: None,
        truth,
        noisy,
        observed,
    })
}

/// Rectangular completion instance: `X⁰ = W₁W₂ᵀ`, noise `E = noise_scale·L`,
/// every entry observed independently with probability `p`.
///
/// Not equivalent to [`make_symmetric_completion`] at `m = n` even on a
/// shared seed: the truth is a two-factor product, the noise is not
/// symmetrized, and the observation scheme samples every entry rather than
/// mirrored upper-triangular indices.
pub fn make_rectangular_completion(
    m: usize,
    n: usize,
    rank: usize,
    noise_scale: f64,
    p: f64,
    seed: u64,
) -> Result<CompletionInstance> {
    validate_generator_params(m, n, rank, noise_scale, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1 = DMatrix::from_fn(m, rank, |_, _| normal(&mut rng));
    let w2 = DMatrix::from_fn(n, rank, |_, _| normal(&mut rng));
    let truth = &w1 * w2.transpose();
    let mut noisy = truth.clone();
    if noise_scale > 0.0 {
        for j in 0..n {
            for i in 0..m {
                noisy[(i, j)] += noise_scale * normal(&mut rng);
            }
        }
    }
    let mut observed = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random::<f64>() < p {
                observed.push((i as u32, j as u32));
            }
        }
    }
    Ok(CompletionInstance {
        rows: m,
        cols: n,
        symmetric: false,
        sample_rate: p,
        noise_scale,
        seed,
        factor_left: w1,
        factor_right: Some(w2),
        truth,
        noisy,
        observed,
    })
}

/// Squared-error objective over the observed entries of an instance.
#[derive(Debug, Clone)]
pub struct CompletionObjective {
    measurement: EntrySampling,
    observed_values: Vec<f64>,
    scaling: Scaling,
}

/// Builds the completion objective in the requested scaling. Errors on an
/// empty observation set.
pub fn completion_objective(inst: &CompletionInstance, scaling: Scaling) -> Result<CompletionObjective> {
    let measurement = inst.measurement();
    if measurement.is_empty() {
        return Err(Error::InvalidParameter("instance has no observed entries".into()));
    }
    let observed_values = measurement.apply(inst.noisy());
    Ok(CompletionObjective { measurement, observed_values, scaling })
}

impl CompletionObjective {
    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    /// Number of terms `d = |O|`.
    pub fn terms(&self) -> usize {
        self.observed_values.len()
    }

    pub fn measurement(&self) -> &EntrySampling {
        &self.measurement
    }

    /// Observed values `c_e` in measurement order.
    pub fn observed_values(&self) -> &[f64] {
        &self.observed_values
    }

    /// Smoothness constant of the full objective: 1 for the total scaling,
    /// `1/d` for the mean scaling.
    pub fn smoothness(&self) -> f64 {
        match self.scaling {
            Scaling::Total => 1.0,
            Scaling::Mean => 1.0 / self.terms() as f64,
        }
    }

    /// Smoothness constant of each term under the mean scaling.
    pub fn term_smoothness(&self) -> f64 {
        1.0
    }

    pub fn value(&self, x: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for (&(i, j), &c) in self.measurement.observed().iter().zip(&self.observed_values) {
            let r = x[(i as usize, j as usize)] - c;
            acc += 0.5 * r * r;
        }
        match self.scaling {
            Scaling::Total => acc,
            Scaling::Mean => acc / self.terms() as f64,
        }
    }

    /// Gradient as sparse entries over the observed set.
    pub fn gradient(&self, x: &DMatrix<f64>) -> SparseEntries {
        let mut g = self.measurement.zero_pattern();
        self.gradient_into(x, &mut g);
        g
    }

    /// Writes the gradient into a buffer sharing the observed pattern.
    pub fn gradient_into(&self, x: &DMatrix<f64>, out: &mut SparseEntries) {
        debug_assert_eq!(out.nnz(), self.terms());
        let scale = match self.scaling {
            Scaling::Total => 1.0,
            Scaling::Mean => 1.0 / self.terms() as f64,
        };
        for (idx, (&(i, j), &c)) in self
            .measurement
            .observed()
            .iter()
            .zip(&self.observed_values)
            .enumerate()
        {
            out.values_mut()[idx] = scale * (x[(i as usize, j as usize)] - c);
        }
    }

    /// Gradient of the `index`-th term under the mean scaling: a single
    /// entry `(x_e − c_e)` at the observed coordinate. Returns
    /// `(i, j, value)`.
    pub fn term_gradient(&self, index: usize, x: &DMatrix<f64>) -> (u32, u32, f64) {
        let (i, j) = self.measurement.observed()[index];
        let c = self.observed_values[index];
        (i, j, x[(i as usize, j as usize)] - c)
    }
}

/// Relative objective and relative distance-to-truth of an iterate.
///
/// `rel_obj = ‖P_O(X) − P_O(C)‖_F² / ‖P_O(C)‖_F²` and
/// `rel_err = ‖X − X⁰‖_F² / ‖X⁰‖_F²`.
pub fn relative_metrics(x: &DMatrix<f64>, inst: &CompletionInstance) -> Result<(f64, f64)> {
    if x.nrows() != inst.rows || x.ncols() != inst.cols {
        return Err(Error::InvalidInput(format!(
            "iterate is {}x{}, instance is {}x{}",
            x.nrows(),
            x.ncols(),
            inst.rows,
            inst.cols
        )));
    }
    let truth_norm2: f64 = inst.truth.iter().map(|v| v * v).sum();
    if truth_norm2 == 0.0 {
        return Err(Error::DegenerateInstance("ground truth has zero Frobenius norm".into()));
    }
    let mut data_num = 0.0;
    let mut data_den = 0.0;
    for &(i, j) in &inst.observed {
        let c = inst.noisy[(i as usize, j as usize)];
        let r = x[(i as usize, j as usize)] - c;
        data_num += r * r;
        data_den += c * c;
    }
    if data_den == 0.0 {
        return Err(Error::DegenerateInstance("observed data has zero norm".into()));
    }
    let mut err_num = 0.0;
    for j in 0..inst.cols {
        for i in 0..inst.rows {
            let r = x[(i, j)] - inst.truth[(i, j)];
            err_num += r * r;
        }
    }
    Ok((data_num / data_den, err_num / truth_norm2))
}

// ---------------------------------------------------------------------------
// Dense vector objectives used as solver testbeds.
// ---------------------------------------------------------------------------

/// Differentiable objective on dense vectors.
pub trait VectorObjective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Smoothness (gradient Lipschitz) constant of the full objective.
    fn smoothness(&self) -> f64;
}

/// Finite-sum objective `f = (1/d) Σ f_i` with per-term gradient access.
///
/// Implementations must compute `gradient` as the index-order average of the
/// term gradients so that full-batch reduced gradients collapse cleanly.
pub trait VectorFiniteSum: VectorObjective {
    fn terms(&self) -> usize;
    /// Writes `∇f_i(x)` into `out`.
    fn term_gradient_into(&self, index: usize, x: &DVector<f64>, out: &mut DVector<f64>);
    /// Smoothness constant shared by every term.
    fn term_smoothness(&self) -> f64;
}

/// `f(x) = ½‖x‖²`, the minimal smooth testbed (one term, L = 1).
#[derive(Debug, Clone)]
pub struct HalfSquaredNorm {
    pub dim: usize,
}

impl VectorObjective for HalfSquaredNorm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.norm_squared()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn smoothness(&self) -> f64 {
        1.0
    }
}

impl VectorFiniteSum for HalfSquaredNorm {
    fn terms(&self) -> usize {
        1
    }
    fn term_gradient_into(&self, _index: usize, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(x);
    }
    fn term_smoothness(&self) -> f64 {
        1.0
    }
}

/// Least-squares finite sum `f(x) = (1/d) Σ ½(aᵢᵀx − bᵢ)²`.
///
/// Rows are normalized to unit Euclidean norm at construction so every term
/// is exactly 1-smooth.
#[derive(Debug, Clone)]
pub struct LeastSquaresSum {
    rows: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl LeastSquaresSum {
    /// Random unit-norm rows; `rhs = A·target + noise_scale·ε` with a sparse
    /// random target inside the unit one-norm ball.
    pub fn random(d: usize, dim: usize, noise_scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = DMatrix::from_fn(d, dim, |_, _| normal(&mut rng));
        for i in 0..d {
            let norm = rows.row(i).norm();
            if norm > 0.0 {
                for j in 0..dim {
                    rows[(i, j)] /= norm;
                }
            }
        }
        let mut target: DVector<f64> = DVector::zeros(dim);
        for k in 0..(dim / 4).max(1) {
            target[(k * 3) % dim] = if k % 2 == 0 { 0.4 } else { -0.3 };
        }
        let l1: f64 = target.iter().map(|t: &f64| t.abs()).sum::<f64>().max(1.0);
        target /= 2.0 * l1;
        let mut rhs = &rows * &target;
        if noise_scale > 0.0 {
            for i in 0..d {
                rhs[i] += noise_scale * normal(&mut rng);
            }
        }
        Self { rows, rhs }
    }

    /// Consistent system `rhs = A·target`, so the unconstrained minimum is 0
    /// with a zero gradient at the target.
    pub fn consistent(d: usize, dim: usize, seed: u64) -> Self {
        Self::random(d, dim, 0.0, seed)
    }

    pub fn residual(&self, index: usize, x: &DVector<f64>) -> f64 {
        self.rows.row(index).transpose().dot(x) - self.rhs[index]
    }
}

impl VectorObjective for LeastSquaresSum {
    fn dim(&self) -> usize {
        self.rows.ncols()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        let d = self.terms();
        let mut acc = 0.0;
        for i in 0..d {
            let r = self.residual(i, x);
            acc += 0.5 * r * r;
        }
        acc / d as f64
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = self.terms();
        let mut acc = DVector::zeros(self.dim());
        for i in 0..d {
            let r = self.residual(i, x);
            for j in 0..self.dim() {
                acc[j] += r * self.rows[(i, j)];
            }
        }
        acc / d as f64
    }
    fn smoothness(&self) -> f64 {
        // Rows are unit norm, so each term is 1-smooth and so is the mean.
        1.0
    }
}

impl VectorFiniteSum for LeastSquaresSum {
    fn terms(&self) -> usize {
        self.rows.nrows()
    }
    fn term_gradient_into(&self, index: usize, x: &DVector<f64>, out: &mut DVector<f64>) {
        let r = self.residual(index, x);
        for j in 0..self.dim() {
            out[j] = r * self.rows[(index, j)];
        }
    }
    fn term_smoothness(&self) -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetric_full_sampling_zero_noise() {
        let inst = make_symmetric_completion(4, 2, 0.0, 1.0, 7).unwrap();
        assert_eq!(inst.noisy(), inst.truth());
        assert_eq!(inst.num_observed(), 16);
        // Mirrored and symmetric by construction.
        for &(i, j) in inst.observed() {
            assert!(inst.observed().contains(&(j, i)));
            assert_eq!(inst.noisy()[(i as usize, j as usize)], inst.noisy()[(j as usize, i as usize)]);
        }
    }

    #[test]
    fn symmetric_truth_is_psd_and_exact() {
        let inst = make_symmetric_completion(12, 3, 0.1, 0.8, 3).unwrap();
        let (values, _) = crate::spectral::dense_symmetric_spectrum(inst.truth());
        assert!(values[0] >= -1e-10);
        // C - X0 is the declared noise, symmetric.
        let e = inst.noisy() - inst.truth();
        assert!((e.transpose() - &e).norm() == 0.0);
    }

    #[test]
    fn observed_fraction_within_binomial_band() {
        // Upper-triangular count (diagonal included) is Binomial(N, p) with
        // N = n(n+1)/2; the [0.7, 0.9] band at p = 0.8 has failure
        // probability below 1e-10 by an exact tail computation.
        let n = 50usize;
        let p = 0.8;
        let total = n * (n + 1) / 2;
        let lo = (0.7 * total as f64).ceil() as usize;
        let hi = (0.9 * total as f64).floor() as usize;
        let outside = binomial_tail_below(total, p, lo) + binomial_tail_above(total, p, hi);
        assert!(outside < 1e-10, "band failure probability {outside:e}");

        let inst = make_symmetric_completion(n, 5, 0.1, p, 1).unwrap();
        let mut upper = 0usize;
        for &(i, j) in inst.observed() {
            if i <= j {
                upper += 1;
            }
        }
        let fraction = upper as f64 / total as f64;
        assert!((0.7..=0.9).contains(&fraction), "fraction {fraction}");
    }

    /// Exact binomial CDF tails in log space (test oracle).
    fn binomial_tail_below(n: usize, p: f64, k: usize) -> f64 {
        (0..k).map(|i| binomial_pmf(n, p, i)).sum()
    }

    fn binomial_tail_above(n: usize, p: f64, k: usize) -> f64 {
        ((k + 1)..=n).map(|i| binomial_pmf(n, p, i)).sum()
    }

    fn binomial_pmf(n: usize, p: f64, k: usize) -> f64 {
        let ln = ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
        ln.exp()
    }

    fn ln_choose(n: usize, k: usize) -> f64 {
        ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
    }

    fn ln_factorial(n: usize) -> f64 {
        (1..=n).map(|i| (i as f64).ln()).sum()
    }

    #[test]
    fn rectangular_tiny_full_sampling() {
        let inst = make_rectangular_completion(3, 2, 1, 0.0, 1.0, 0).unwrap();
        assert_eq!(inst.num_observed(), 6);
        assert_eq!(inst.noisy(), inst.truth());
        assert!(!inst.is_symmetric());
    }

    #[test]
    fn rectangular_observed_count_within_binomial_band() {
        let inst = make_rectangular_completion(40, 30, 3, 0.1, 0.5, 2).unwrap();
        let total = 40 * 30;
        // Binomial(1200, 0.5): +-5 sigma is about +-87.
        let mean = 600.0;
        let dev = 5.0 * (total as f64 * 0.25).sqrt();
        let count = inst.num_observed() as f64;
        assert!((count - mean).abs() <= dev, "count {count}");
        let outside = binomial_tail_below(total, 0.5, (mean - dev) as usize)
            + binomial_tail_above(total, 0.5, (mean + dev) as usize);
        assert!(outside < 1e-5);
    }

    #[test]
    fn square_rectangular_differs_from_symmetric_on_shared_seed() {
        // The two generators use different factorizations and sampling
        // schemes; a square rectangular instance is not the symmetric one.
        let sym = make_symmetric_completion(8, 2, 0.1, 0.8, 5).unwrap();
        let rect = make_rectangular_completion(8, 8, 2, 0.1, 0.8, 5).unwrap();
        assert!(sym.noisy() != rect.noisy());
        assert!(sym.observed() != rect.observed());
    }

    #[test]
    fn paper_scale_symmetric_family_generates() {
        // The full-scale experimental family: n = 1000, low rank, dense
        // noise, 80% sampling. Desk experiments run smaller, but generation
        // at this size must work.
        let inst = make_symmetric_completion(1000, 10, 0.1, 0.8, 11).unwrap();
        assert_eq!(inst.dims(), (1000, 1000));
        let total_upper = 1000 * 1001 / 2;
        let mut upper = 0usize;
        for &(i, j) in inst.observed() {
            if i <= j {
                upper += 1;
            }
        }
        let fraction = upper as f64 / total_upper as f64;
        assert!((0.75..=0.85).contains(&fraction), "fraction {fraction}");
        assert!(inst.truth_nuclear_norm() > 0.0);
    }

    #[test]
    fn generators_reject_bad_parameters() {
        assert!(make_symmetric_completion(4, 0, 0.0, 0.5, 1).is_err());
        assert!(make_symmetric_completion(4, 5, 0.0, 0.5, 1).is_err());
        assert!(make_symmetric_completion(4, 2, 0.0, 0.0, 1).is_err());
        assert!(make_symmetric_completion(4, 2, 0.0, 1.5, 1).is_err());
        assert!(make_rectangular_completion(4, 3, 2, -0.1, 0.5, 1).is_err());
    }

    #[test]
    fn generators_are_deterministic_per_seed() {
        let a = make_symmetric_completion(10, 2, 0.1, 0.7, 42).unwrap();
        let b = make_symmetric_completion(10, 2, 0.1, 0.7, 42).unwrap();
        assert_eq!(a.noisy(), b.noisy());
        assert_eq!(a.observed(), b.observed());
        let c = make_symmetric_completion(10, 2, 0.1, 0.7, 43).unwrap();
        assert!(a.noisy() != c.noisy());
    }

    #[test]
    fn objective_at_data_is_zero() {
        let inst = make_symmetric_completion(6, 2, 0.05, 0.9, 5).unwrap();
        let obj = completion_objective(&inst, Scaling::Total).unwrap();
        assert_eq!(obj.value(inst.noisy()), 0.0);
        let g = obj.gradient(inst.noisy());
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_observation_hand_arithmetic() {
        // One observed entry c_11 = 2 (0-based (0,0)); at X = 0 the total
        // objective is 2 and the gradient entry is -2.
        let factor = DMatrix::from_element(1, 1, 0.0);
        let noisy = DMatrix::from_element(1, 1, 2.0);
        let inst = CompletionInstance::from_parts(
            factor,
            None,
            noisy,
            vec![(0, 0)],
            1.0,
            0.0,
            true,
            0,
        )
        .unwrap();
        let obj = completion_objective(&inst, Scaling::Total).unwrap();
        let x = DMatrix::zeros(1, 1);
        assert_eq!(obj.value(&x), 2.0);
        let g = obj.gradient(&x);
        assert_eq!(g.values(), &[-2.0]);
    }

    #[test]
    fn mean_scaling_full_gradient_is_term_average() {
        let inst = make_rectangular_completion(10, 10, 2, 0.1, 0.6, 9).unwrap();
        let obj = completion_objective(&inst, Scaling::Mean).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = DMatrix::from_fn(10, 10, |_, _| normal(&mut rng));
        let g = obj.gradient(&x);
        let d = obj.terms();
        for (idx, &(i, j)) in obj.measurement().observed().iter().enumerate() {
            let (ti, tj, tv) = obj.term_gradient(idx, &x);
            assert_eq!((ti, tj), (i, j));
            let avg = tv / d as f64;
            assert!((g.values()[idx] - avg).abs() <= 1e-12 * avg.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let inst = make_symmetric_completion(5, 2, 0.1, 0.9, 12).unwrap();
        let obj = completion_objective(&inst, Scaling::Total).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(5, 5, |_, _| normal(&mut rng));
        let g = obj.gradient(&x).to_dense();
        let h = 1e-5;
        let mut max_dev = 0.0f64;
        for j in 0..5 {
            for i in 0..5 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[(i, j)] += h;
                xm[(i, j)] -= h;
                let fd = (obj.value(&xp) - obj.value(&xm)) / (2.0 * h);
                max_dev = max_dev.max((fd - g[(i, j)]).abs());
            }
        }
        assert!(max_dev <= 1e-6, "max deviation {max_dev}");
    }

    #[test]
    fn quadratic_upper_bound_holds() {
        let inst = make_symmetric_completion(8, 2, 0.1, 0.8, 77).unwrap();
        for (scaling, l) in [(Scaling::Total, 1.0), (Scaling::Mean, f64::NAN)] {
            let obj = completion_objective(&inst, scaling).unwrap();
            let l = if l.is_nan() { obj.smoothness() } else { l };
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            for _ in 0..100 {
                let x = DMatrix::from_fn(8, 8, |_, _| normal(&mut rng));
                let y = DMatrix::from_fn(8, 8, |_, _| normal(&mut rng));
                let g = obj.gradient(&y);
                let diff = &x - &y;
                let lin = g.dot_dense(&diff);
                let dist2: f64 = diff.iter().map(|v| v * v).sum();
                let bound = obj.value(&y) + lin + 0.5 * l * dist2;
                assert!(obj.value(&x) <= bound + 1e-10 * bound.abs().max(1.0));
            }
        }
    }

    #[test]
    fn measurement_adjoint_identity() {
        let inst = make_rectangular_completion(9, 7, 2, 0.1, 0.5, 21).unwrap();
        let meas = inst.measurement();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x = DMatrix::from_fn(9, 7, |_, _| normal(&mut rng));
            let y: Vec<f64> = (0..meas.len()).map(|_| normal(&mut rng)).collect();
            let ax = meas.apply(&x);
            let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
            let aty = meas.adjoint(&y);
            let rhs = aty.dot_dense(&x);
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            assert!((lhs - rhs).abs() / scale <= 1e-10);
        }
    }

    #[test]
    fn rank_one_application_matches_dense() {
        let inst = make_rectangular_completion(6, 5, 1, 0.0, 0.8, 4).unwrap();
        let meas = inst.measurement();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = DVector::from_fn(6, |_, _| normal(&mut rng));
        let v = DVector::from_fn(5, |_, _| normal(&mut rng));
        let dense = &u * v.transpose() * (-2.5);
        let from_rank_one = meas.apply_rank_one(-2.5, &u, &v);
        let from_dense = meas.apply(&dense);
        for (a, b) in from_rank_one.iter().zip(&from_dense) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn relative_metrics_examples() {
        let inst = make_symmetric_completion(6, 2, 0.0, 1.0, 8).unwrap();
        let (rel_obj, rel_err) = relative_metrics(inst.truth(), &inst).unwrap();
        assert_eq!(rel_err, 0.0);
        assert!(rel_obj <= 1e-30);

        let zero = DMatrix::zeros(6, 6);
        let (rel_obj, rel_err) = relative_metrics(&zero, &inst).unwrap();
        assert_eq!(rel_obj, 1.0);
        assert_eq!(rel_err, 1.0);

        // X = 2·X0 on a noiseless fully observed instance: both metrics 1.
        let doubled = inst.truth() * 2.0;
        let (rel_obj, rel_err) = relative_metrics(&doubled, &inst).unwrap();
        // Direct norm computation oracle.
        let num: f64 = inst.truth().iter().map(|v| v * v).sum();
        let expected = num / num;
        assert_relative_eq!(rel_obj, expected, max_relative = 1e-12);
        assert_relative_eq!(rel_err, expected, max_relative = 1e-12);
    }

    #[test]
    fn empty_observation_set_is_an_error() {
        let factor = DMatrix::from_element(2, 1, 1.0);
        let noisy = symmetric_gram(&factor);
        let inst =
            CompletionInstance::from_parts(factor, None, noisy, vec![], 0.5, 0.0, true, 0).unwrap();
        assert!(matches!(
            completion_objective(&inst, Scaling::Total),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn sparse_entries_validation() {
        assert!(SparseEntries::new(2, 2, vec![(0, 0), (0, 0)], vec![1.0, 2.0], false).is_err());
        assert!(SparseEntries::new(2, 2, vec![(2, 0)], vec![1.0], false).is_err());
        assert!(SparseEntries::new(2, 2, vec![(0, 1)], vec![1.0], true).is_err());
        let ok = SparseEntries::new(2, 2, vec![(0, 1), (1, 0)], vec![3.0, 3.0], true);
        assert!(ok.is_ok());
    }

    #[test]
    fn observation_round_trip() {
        let inst = make_symmetric_completion(7, 2, 0.1, 0.6, 33).unwrap();
        let dir = std::env::temp_dir().join("condgrad_obs_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("inst.txt");
        inst.write_observations(&path).unwrap();
        let data = read_observations(&path).unwrap();
        assert_eq!(data.rows, 7);
        assert_eq!(data.cols, 7);
        assert!(data.symmetric);
        assert_eq!(data.seed, 33);
        assert_eq!(data.entries.len(), inst.num_observed());
        for (&(i, j), &(ri, rj, rv)) in inst.observed().iter().zip(&data.entries) {
            assert_eq!((i, j), (ri, rj));
            assert_eq!(rv.to_bits(), inst.noisy()[(i as usize, j as usize)].to_bits());
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn least_squares_sum_gradient_consistency() {
        let obj = LeastSquaresSum::random(40, 12, 0.1, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = DVector::from_fn(12, |_, _| normal(&mut rng));
        let g = obj.gradient(&x);
        let mut acc = DVector::zeros(12);
        let mut tg = DVector::zeros(12);
        for i in 0..obj.terms() {
            obj.term_gradient_into(i, &x, &mut tg);
            acc += &tg;
        }
        acc /= obj.terms() as f64;
        assert!((&g - &acc).norm() <= 1e-10 * g.norm().max(1.0));
    }

    #[test]
    fn least_squares_rows_are_unit_norm() {
        let obj = LeastSquaresSum::random(15, 8, 0.0, 1);
        for i in 0..15 {
            assert_relative_eq!(obj.rows.row(i).norm(), 1.0, max_relative = 1e-12);
        }
    }
}
