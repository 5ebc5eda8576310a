//! Two-sided randomized sketch of a streamed matrix.
//!
//! The sketch keeps `Y^C = XΨ` and `Y^R = ΦX` for Gaussian test matrices
//! `Ψ (n×(2r+1))` and `Φ ((4r+3)×m)`, supports the rank-one linear update
//! `X ← β₁X + β₂uvᵀ` in `O((m+n)·r)` time without ever forming `X`, and
//! reconstructs a rank-`r` factorization by thin QR of the column sketch, a
//! small least-squares solve, and a truncated SVD. The sketch sizes are
//! exactly the ones the reconstruction error guarantee is stated for.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spectral::{pinv_solve, thin_qr, truncated_svd};
use crate::textfmt::format_g17;

/// Sketch buffers plus the test matrices that define them.
///
/// The decision-variable memory footprint is `Y^C` and `Y^R` only:
/// `m(2r+1) + (4r+3)n` floats.
#[derive(Debug, Clone)]
pub struct SketchState {
    psi: DMatrix<f64>,
    phi: DMatrix<f64>,
    y_cols: DMatrix<f64>,
    y_rows: DMatrix<f64>,
    rank: usize,
    seed: u64,
}

/// Draws the test matrices (`Ψ` first, then `Φ`, both column-major order)
/// and zero-initializes the sketch buffers.
pub fn sketch_init(m: usize, n: usize, rank: usize, seed: u64) -> Result<SketchState> {
    if rank == 0 {
        return Err(Error::InvalidParameter("sketch rank must be >= 1".into()));
    }
    let k = 2 * rank + 1;
    let l = 4 * rank + 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |_: usize, _: usize| -> f64 { StandardNormal.sample(&mut rng) };
    let psi = DMatrix::from_fn(n, k, &mut normal);
    let phi = DMatrix::from_fn(l, m, &mut normal);
    Ok(SketchState {
        psi,
        phi,
        y_cols: DMatrix::zeros(m, k),
        y_rows: DMatrix::zeros(l, n),
        rank,
        seed,
    })
}

impl SketchState {
    pub fn dims(&self) -> (usize, usize) {
        (self.y_cols.nrows(), self.y_rows.ncols())
    }
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }
    pub fn column_sketch(&self) -> &DMatrix<f64> {
        &self.y_cols
    }
    pub fn row_sketch(&self) -> &DMatrix<f64> {
        &self.y_rows
    }

    /// Number of floats held for the decision variable (both buffers).
    pub fn buffer_floats(&self) -> usize {
        self.y_cols.len() + self.y_rows.len()
    }
}

/// Applies the linear update `X ← β₁X + β₂·u·vᵀ` to both sketches:
/// `Y^C ← β₁Y^C + β₂·u·(vᵀΨ)` and `Y^R ← β₁Y^R + β₂·(Φu)·vᵀ`.
pub fn sketch_update(
    state: &mut SketchState,
    beta1: f64,
    beta2: f64,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<()> {
    let (m, n) = state.dims();
    if u.len() != m || v.len() != n {
        return Err(Error::InvalidInput(format!(
            "rank-one update dims {}x{} do not match sketch dims {m}x{n}",
            u.len(),
            v.len()
        )));
    }
    let vt_psi = state.psi.tr_mul(v); // (2r+1)
    state.y_cols.ger(beta2, u, &vt_psi, beta1);
    let phi_u = &state.phi * u; // (4r+3)
    state.y_rows.ger(beta2, &phi_u, v, beta1);
    Ok(())
}

/// Reconstructs a rank-`r` factorization `(U, Σ, V)` with `X̂ = UΣVᵀ`:
/// thin QR of the column sketch, `B` from a least-squares solve against the
/// row sketch, then the truncated SVD of `B` lifted through `Q`. The
/// triangular factor of the QR step is not used.
pub fn sketch_reconstruct(
    state: &SketchState,
    rank: usize,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    if rank == 0 {
        return Err(Error::InvalidParameter("reconstruction rank must be >= 1".into()));
    }
    let (q, _r) = thin_qr(&state.y_cols)?;
    let phi_q = &state.phi * &q;
    let b = pinv_solve(&phi_q, &state.y_rows)?;
    let (u_b, sigma, v_b) = truncated_svd(&b, rank)?;
    Ok((&q * u_b, sigma, v_b))
}

/// Writes the factors as three plain-text arrays (`U` of size m×r, `Σ` of
/// length r, `V` of size n×r), one row per line, space-separated,
/// 17-significant-digit floats. Files are `<stem>_U.txt`, `<stem>_S.txt`,
/// `<stem>_V.txt`.
pub fn write_factors(
    stem: &Path,
    u: &DMatrix<f64>,
    sigma: &DVector<f64>,
    v: &DMatrix<f64>,
) -> std::io::Result<()> {
    let render = |m: &DMatrix<f64>| {
        let mut out = String::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", format_g17(m[(i, j)]));
            }
            out.push('\n');
        }
        out
    };
    let with_suffix = |suffix: &str| {
        let mut name = stem.file_name().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(suffix);
        stem.with_file_name(name)
    };
    std::fs::write(with_suffix("_U.txt"), render(u))?;
    let mut sig = String::new();
    for i in 0..sigma.len() {
        let _ = writeln!(sig, "{}", format_g17(sigma[i]));
    }
    std::fs::write(with_suffix("_S.txt"), sig)?;
    std::fs::write(with_suffix("_V.txt"), render(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn reconstruct_dense(state: &SketchState, rank: usize) -> DMatrix<f64> {
        let (u, s, v) = sketch_reconstruct(state, rank).unwrap();
        &u * DMatrix::from_diagonal(&s) * v.transpose()
    }

    #[test]
    fn init_dimensions_and_determinism() {
        let s = sketch_init(10, 8, 2, 42).unwrap();
        assert_eq!(s.psi().shape(), (8, 5));
        assert_eq!(s.phi().shape(), (11, 10));
        assert!(s.column_sketch().iter().all(|&x| x == 0.0));
        assert!(s.row_sketch().iter().all(|&x| x == 0.0));
        assert_eq!(s.buffer_floats(), 10 * 5 + 11 * 8);

        let s2 = sketch_init(10, 8, 2, 42).unwrap();
        assert_eq!(s.psi(), s2.psi());
        assert_eq!(s.phi(), s2.phi());
        let s3 = sketch_init(10, 8, 2, 43).unwrap();
        assert!(s.psi() != s3.psi());
    }

    #[test]
    fn fresh_state_reconstructs_zero() {
        let s = sketch_init(7, 6, 2, 5).unwrap();
        let x = reconstruct_dense(&s, 2);
        assert!(x.iter().all(|&v| v.abs() <= 1e-12));
    }

    #[test]
    fn noop_update_leaves_state_unchanged() {
        let mut s = sketch_init(6, 5, 1, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = DVector::from_fn(6, |_, _| normal(&mut rng));
        let v = DVector::from_fn(5, |_, _| normal(&mut rng));
        sketch_update(&mut s, 1.0, 1.0, &u, &v).unwrap();
        let yc = s.column_sketch().clone();
        let yr = s.row_sketch().clone();
        sketch_update(&mut s, 1.0, 0.0, &u, &v).unwrap();
        assert_eq!(s.column_sketch(), &yc);
        assert_eq!(s.row_sketch(), &yr);
    }

    #[test]
    fn update_dims_are_checked() {
        let mut s = sketch_init(6, 5, 1, 9).unwrap();
        let u = DVector::zeros(5);
        let v = DVector::zeros(5);
        assert!(sketch_update(&mut s, 1.0, 1.0, &u, &v).is_err());
    }

    #[test]
    fn single_rank_one_matches_direct_sketch() {
        let mut s = sketch_init(9, 7, 2, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = DVector::from_fn(9, |_, _| normal(&mut rng));
        let v = DVector::from_fn(7, |_, _| normal(&mut rng));
        sketch_update(&mut s, 0.0, 1.0, &u, &v).unwrap();
        let dense = &u * v.transpose();
        let yc_direct = &dense * s.psi();
        let yr_direct = s.phi() * &dense;
        assert!((s.column_sketch() - &yc_direct).norm() <= 1e-12 * yc_direct.norm());
        assert!((s.row_sketch() - &yr_direct).norm() <= 1e-12 * yr_direct.norm());
    }

    #[test]
    fn sketch_is_linear_in_the_update_stream() {
        // A stream of scaled rank-one updates sketches to the same buffers
        // as the directly sketched accumulated matrix.
        let (m, n, r) = (12, 10, 3);
        let mut s = sketch_init(m, n, r, 31).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut shadow = DMatrix::<f64>::zeros(m, n);
        for step in 0..25 {
            let u = DVector::from_fn(m, |_, _| normal(&mut rng));
            let v = DVector::from_fn(n, |_, _| normal(&mut rng));
            let beta1 = if step % 3 == 0 { 1.0 } else { 1.0 - 0.5f64.powi(step % 7 + 1) };
            let beta2: f64 = rng.random::<f64>() - 0.5;
            sketch_update(&mut s, beta1, beta2, &u, &v).unwrap();
            shadow = beta1 * shadow + beta2 * &u * v.transpose();
        }
        let yc_direct = &shadow * s.psi();
        let yr_direct = s.phi() * &shadow;
        assert!((s.column_sketch() - &yc_direct).norm() <= 1e-12 * yc_direct.norm().max(1.0));
        assert!((s.row_sketch() - &yr_direct).norm() <= 1e-12 * yr_direct.norm().max(1.0));
    }

    #[test]
    fn exact_rank_one_recovery() {
        let mut s = sketch_init(15, 11, 1, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = DVector::from_fn(15, |_, _| normal(&mut rng));
        let v = DVector::from_fn(11, |_, _| normal(&mut rng));
        sketch_update(&mut s, 0.0, 1.0, &u, &v).unwrap();
        let dense = &u * v.transpose();
        let xhat = reconstruct_dense(&s, 1);
        assert!((&xhat - &dense).norm() <= 1e-8 * dense.norm());
    }

    #[test]
    fn reconstruction_rank_is_bounded() {
        let (m, n, r) = (14, 12, 3);
        let mut s = sketch_init(m, n, r, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let u = DVector::from_fn(m, |_, _| normal(&mut rng));
            let v = DVector::from_fn(n, |_, _| normal(&mut rng));
            sketch_update(&mut s, 0.9, 0.3, &u, &v).unwrap();
        }
        let (u, sigma, v) = sketch_reconstruct(&s, r).unwrap();
        assert_eq!(u.ncols(), r);
        assert_eq!(v.ncols(), r);
        assert_eq!(sigma.len(), r);
        let xhat = &u * DMatrix::from_diagonal(&sigma) * v.transpose();
        let svd = xhat.svd(false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let numerical_rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-10 * smax.max(1.0))
            .count();
        assert!(numerical_rank <= r);
    }

    #[test]
    fn exact_rank_r_recovery_with_flat_spectrum() {
        // Rank equal to the sketch rank with all singular values identical:
        // recovery must be exact to rounding for every draw.
        let n = 50;
        let r = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(909);
        let a = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
        let (qa, _) = thin_qr(&a).unwrap();
        let b = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
        let (qb, _) = thin_qr(&b).unwrap();
        let sigma = DVector::from_fn(n, |i, _| if i < r { 1.0 } else { 0.0 });
        let x = &qa * DMatrix::from_diagonal(&sigma) * qb.transpose();
        for draw in 0..10u64 {
            let mut s = sketch_init(n, n, r, crate::derive_seed(50_000, 7 * draw + 2)).unwrap();
            for j in 0..n {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                let col = x.column(j).clone_owned();
                sketch_update(&mut s, 1.0, 1.0, &col, &e).unwrap();
            }
            let xhat = reconstruct_dense(&s, r);
            let rel = (&xhat - &x).norm() / x.norm();
            assert!(rel <= 1e-8, "draw {draw}: relative error {rel}");
        }
    }

    #[test]
    fn mean_error_within_oversampling_bound_smoke() {
        // Small Monte-Carlo version of the reconstruction-error check; the
        // full three-spectrum suite lives in the acceptance tests.
        let n = 20;
        let r = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        // Geometric spectrum 0.6^i via random orthogonal factors.
        let a = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
        let (qa, _) = thin_qr(&a).unwrap();
        let b = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
        let (qb, _) = thin_qr(&b).unwrap();
        let sigma = DVector::from_fn(n, |i, _| 0.6f64.powi(i as i32));
        let x = &qa * DMatrix::from_diagonal(&sigma) * qb.transpose();
        let tail: f64 = (r..n).map(|i| sigma[i] * sigma[i]).sum::<f64>().sqrt();

        let draws = 30;
        let mut total = 0.0;
        for d in 0..draws {
            let mut s = sketch_init(n, n, r, 9000 + d).unwrap();
            // Feed X column by column as rank-one updates.
            for j in 0..n {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                let col = x.column(j).clone_owned();
                sketch_update(&mut s, 1.0, 1.0, &col, &e).unwrap();
            }
            let xhat = reconstruct_dense(&s, r);
            total += (&x - &xhat).norm();
        }
        let mean = total / draws as f64;
        let bound = 3.0 * 2.0f64.sqrt() * tail;
        assert!(mean <= bound * 1.05, "mean {mean} vs bound {bound}");
    }

    #[test]
    fn factor_files_round_trip() {
        let mut s = sketch_init(5, 4, 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = DVector::from_fn(5, |_, _| normal(&mut rng));
        let v = DVector::from_fn(4, |_, _| normal(&mut rng));
        sketch_update(&mut s, 0.0, 1.0, &u, &v).unwrap();
        let (fu, fs, fv) = sketch_reconstruct(&s, 1).unwrap();
        let dir = std::env::temp_dir().join("condgrad_sketch_test");
        std::fs::create_dir_all(&dir).unwrap();
        let stem = dir.join("factors");
        write_factors(&stem, &fu, &fs, &fv).unwrap();
        let text = std::fs::read_to_string(dir.join("factors_U.txt")).unwrap();
        let first: f64 = text.split_whitespace().next().unwrap().parse().unwrap();
        assert_eq!(first.to_bits(), fu[(0, 0)].to_bits());
        for suffix in ["factors_U.txt", "factors_S.txt", "factors_V.txt"] {
            std::fs::remove_file(dir.join(suffix)).ok();
        }
    }
}
