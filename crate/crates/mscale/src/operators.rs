//! Column-defined bounded linear operators `ℓ¹ → ℓ²` and the explicit
//! operator driving the divergence example.
//!
//! The example operator is committed to memory as dense columns: column 1
//! carries a geometric tail `η_m = sqrt(c0/M^m)` and every later column `j`
//! couples only indices `j` and `j+1`, scaled by `j/b`. The adjoint is read
//! off the same columns so there is a single source of truth for the matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqspace::SeqVector;

/// Smallest scale growth factor for which the divergence guarantee holds,
/// `1/(3 − 2√2)`.
pub fn m_threshold() -> f64 {
    1.0 / (3.0 - 2.0 * std::f64::consts::SQRT_2)
}

/// Constant pack of the divergence example.
///
/// `delta`, `b` and `c0` are pinned functions of `(m, alpha0)`:
/// `δ = (3 − 1/M)/4`, `b = δ(1−δ)(M−1)/(2M)`, `c0 = bM³/(2α₀δ(1−δ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CexParams {
    pub m: f64,
    pub alpha0: f64,
    pub delta: f64,
    pub b: f64,
    pub c0: f64,
}

/// Builds the full constant pack from the scale growth factor and the base
/// fidelity weight. Rejects `M ≤ 1` and `α₀ ≤ 0`.
pub fn derive_constants(m: f64, alpha0: f64) -> Result<CexParams> {
    if !m.is_finite() || m <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "scale growth factor M must be finite and > 1, got {m}"
        )));
    }
    if !alpha0.is_finite() || alpha0 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "base fidelity weight alpha0 must be finite and > 0, got {alpha0}"
        )));
    }
    let delta = (3.0 - 1.0 / m) / 4.0;
    let b = delta * (1.0 - delta) * (m - 1.0) / (2.0 * m);
    let c0 = b * m.powi(3) / (2.0 * alpha0 * delta * (1.0 - delta));
    Ok(CexParams {
        m,
        alpha0,
        delta,
        b,
        c0,
    })
}

impl CexParams {
    /// Fidelity weight at scale `n`: `α₀·Mⁿ`.
    pub fn lambda(&self, n: u32) -> f64 {
        self.alpha0 * self.m.powi(n as i32)
    }

    /// Geometric column coefficient `η_j = sqrt(c0/M^j)`.
    ///
    /// Evaluated in log space once `M^j` would leave the f64 range; underflows
    /// to 0 for astronomically large `j`.
    pub fn eta(&self, j: u32) -> f64 {
        debug_assert!(j >= 1);
        let exponent = j as f64 * self.m.ln();
        if exponent < 700.0 {
            (self.c0 / self.m.powi(j as i32)).sqrt()
        } else {
            (0.5 * (self.c0.ln() - exponent)).exp()
        }
    }

    /// Companion coefficient `μ_j = −δ·η_j`.
    pub fn mu(&self, j: u32) -> f64 {
        -self.delta * self.eta(j)
    }

    /// `c0/M^k`, evaluated in log space for large `k`.
    pub(crate) fn geometric(&self, k: u32) -> f64 {
        let exponent = k as f64 * self.m.ln();
        if exponent < 700.0 {
            self.c0 / self.m.powi(k as i32)
        } else {
            (self.c0.ln() - exponent).exp()
        }
    }

    /// Whether the divergence guarantee `(3 − 1/M)² ≥ 8` holds.
    ///
    /// A hair of slack keeps the boundary value `M = 3 + 2√2` on the
    /// guaranteed side under f64 rounding.
    pub fn divergence_guaranteed(&self) -> bool {
        let q = 3.0 - 1.0 / self.m;
        q * q >= 8.0 - 1e-12
    }
}

/// Dense column-major linear map between finite truncations.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOp {
    dim_in: usize,
    dim_out: usize,
    cols: Vec<Vec<f64>>,
}

impl LinearOp {
    /// Builds an operator from explicit columns (`cols[j-1]` is the image of
    /// the basis vector `e_j`). All columns must have the same length.
    pub fn from_columns(dim_out: usize, cols: Vec<Vec<f64>>) -> Result<Self> {
        for (j, col) in cols.iter().enumerate() {
            if col.len() != dim_out {
                return Err(Error::DimensionMismatch(format!(
                    "column {} has length {}, expected {dim_out}",
                    j + 1,
                    col.len()
                )));
            }
            if let Some(pos) = col.iter().position(|c| !c.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "column {} row {} is {}",
                    j + 1,
                    pos + 1,
                    col[pos]
                )));
            }
        }
        Ok(Self {
            dim_in: cols.len(),
            dim_out,
            cols,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let cols = (0..dim)
            .map(|j| {
                let mut col = vec![0.0; dim];
                col[j] = 1.0;
                col
            })
            .collect();
        Self {
            dim_in: dim,
            dim_out: dim,
            cols,
        }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    /// Column `j` (1-based): the image of `e_j`.
    pub fn col(&self, j: usize) -> &[f64] {
        assert!(
            j >= 1 && j <= self.dim_in,
            "column index {j} out of 1..={}",
            self.dim_in
        );
        &self.cols[j - 1]
    }

    /// Applies the operator: `Σ_j x_j·col(j)`. Inputs shorter than `dim_in`
    /// are zero-padded; longer inputs are rejected by assertion.
    pub fn apply(&self, x: &SeqVector) -> SeqVector {
        let mut out = vec![0.0; self.dim_out];
        self.apply_into(x.coeffs(), &mut out);
        SeqVector::from_raw(out)
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert!(x.len() <= self.dim_in, "input dimension exceeds dim_in");
        assert_eq!(out.len(), self.dim_out);
        out.fill(0.0);
        for (xj, col) in x.iter().zip(self.cols.iter()) {
            if *xj == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(col.iter()) {
                *o += xj * c;
            }
        }
    }

    /// Adjoint application: entry `j` of the result is `⟨w, col(j)⟩`.
    pub fn adjoint_apply(&self, w: &SeqVector) -> SeqVector {
        let mut out = vec![0.0; self.dim_in];
        self.adjoint_into(w.coeffs(), &mut out);
        SeqVector::from_raw(out)
    }

    pub(crate) fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        assert!(w.len() <= self.dim_out, "input dimension exceeds dim_out");
        assert_eq!(out.len(), self.dim_in);
        for (o, col) in out.iter_mut().zip(self.cols.iter()) {
            *o = col.iter().zip(w.iter()).map(|(c, w)| c * w).sum();
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.cols
            .iter()
            .flat_map(|col| col.iter())
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Row-major dense rows, for CSV export.
    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; self.dim_in]; self.dim_out];
        for (j, col) in self.cols.iter().enumerate() {
            for (i, c) in col.iter().enumerate() {
                rows[i][j] = *c;
            }
        }
        rows
    }
}

/// Truncation error committed by cutting column 1 at dimension `d`:
/// `Σ_{m>d} η_m² = c0·M^{−d}/(M−1)`.
pub fn counterexample_tail_error(p: &CexParams, d: usize) -> f64 {
    p.geometric(d as u32) / (p.m - 1.0)
}

/// Materializes the example operator truncated to `d × d`.
///
/// Column 1 holds `η_2+μ_2` at row 2 and `η_m` at rows `3..=d`; column `j ≥ 2`
/// holds `(j/b)(η_j+μ_j)` at row `j` and `−(j/b)μ_{j+1}` at row `j+1` (the
/// latter dropped when `j+1 > d`).
pub fn build_counterexample_operator(p: &CexParams, d: usize) -> Result<LinearOp> {
    if d < 3 {
        return Err(Error::InvalidParameter(format!(
            "truncation dimension must be at least 3, got {d}"
        )));
    }
    let mut cols = Vec::with_capacity(d);
    let mut col1 = vec![0.0; d];
    col1[1] = p.eta(2) + p.mu(2);
    for m in 3..=d {
        col1[m - 1] = p.eta(m as u32);
    }
    cols.push(col1);
    for j in 2..=d {
        let mut col = vec![0.0; d];
        let scale = j as f64 / p.b;
        col[j - 1] = scale * (p.eta(j as u32) + p.mu(j as u32));
        if j < d {
            col[j] = -scale * p.mu(j as u32 + 1);
        }
        cols.push(col);
    }
    LinearOp::from_columns(d, cols)
}

fn seed_from_env() -> u64 {
    std::env::var("MSCALE_SEED")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .unwrap_or(12345)
}

/// Upper bound on the `ℓ²→ℓ²` norm of the truncated matrix: a power-iteration
/// estimate inflated by 1.01, capped by the Frobenius norm.
///
/// The start vector is pseudo-random; `MSCALE_SEED` fixes it.
pub fn operator_norm_upper(op: &LinearOp, iters: usize) -> f64 {
    operator_norm_upper_seeded(op, iters, seed_from_env())
}

pub fn operator_norm_upper_seeded(op: &LinearOp, iters: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    assert!(iters >= 1, "power iteration needs at least one step");
    let frob = op.frobenius_norm();
    if frob == 0.0 {
        return 0.0;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..op.dim_in()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 {
        x[0] = 1.0;
    } else {
        x.iter_mut().for_each(|v| *v /= nx);
    }
    let mut ax = vec![0.0; op.dim_out()];
    let mut atax = vec![0.0; op.dim_in()];
    let mut sigma = 0.0;
    for _ in 0..iters {
        op.apply_into(&x, &mut ax);
        sigma = ax.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sigma == 0.0 {
            break;
        }
        op.adjoint_into(&ax, &mut atax);
        let norm = atax.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        for (xi, yi) in x.iter_mut().zip(atax.iter()) {
            *xi = yi / norm;
        }
    }
    (sigma * 1.01).min(frob)
}

/// Smallest-singular-value estimate for a truncated matrix with
/// `dim_in ≤ dim_out`: one-sided Jacobi SVD up to dimension 256, inverse power
/// iteration on the normal matrix beyond that.
pub fn min_singular_estimate(op: &LinearOp) -> Result<f64> {
    if op.dim_in() > op.dim_out() {
        return Err(Error::InvalidParameter(format!(
            "min_singular_estimate needs dim_in <= dim_out, got {}x{}",
            op.dim_out(),
            op.dim_in()
        )));
    }
    if op.dim_in().max(op.dim_out()) <= 256 {
        jacobi_min_singular(op)
    } else {
        inverse_power_min_singular(op)
    }
}

fn jacobi_min_singular(op: &LinearOp) -> Result<f64> {
    let n = op.dim_in();
    let mut cols: Vec<Vec<f64>> = (1..=n).map(|j| op.col(j).to_vec()).collect();
    let frob2: f64 = cols.iter().flat_map(|c| c.iter()).map(|v| v * v).sum();
    if frob2 == 0.0 {
        return Ok(0.0);
    }
    // Columns at rounding-noise scale never decorrelate; freeze them instead
    // of chasing their mutual angles forever.
    let floor2 = frob2 * f64::EPSILON * f64::EPSILON;
    let tol = 1e-14;
    let max_sweeps = 100;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut app, mut aqq, mut apq) = (0.0, 0.0, 0.0);
                for (vp, vq) in cols[p].iter().zip(cols[q].iter()) {
                    app += vp * vp;
                    aqq += vq * vq;
                    apq += vp * vq;
                }
                if app <= floor2 || aqq <= floor2 {
                    continue;
                }
                let rel = apq.abs() / (app * aqq).sqrt();
                off = off.max(rel);
                if rel <= tol {
                    continue;
                }
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..cols[p].len() {
                    let vp = cols[p][i];
                    let vq = cols[q][i];
                    cols[p][i] = c * vp - s * vq;
                    cols[q][i] = s * vp + c * vq;
                }
            }
        }
        if off <= tol {
            let min_sigma = cols
                .iter()
                .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            return Ok(min_sigma);
        }
    }
    Err(Error::NoConvergence(format!(
        "one-sided Jacobi SVD did not reach tolerance in {max_sweeps} sweeps"
    )))
}

#[allow(clippy::needless_range_loop)] // symmetric fill reads clearer indexed
fn inverse_power_min_singular(op: &LinearOp) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let n = op.dim_in();
    // Normal matrix N = AᵀA with a relative jitter so the Cholesky factor
    // exists even when the truncation is numerically singular.
    let mut normal = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = op
                .col(i + 1)
                .iter()
                .zip(op.col(j + 1).iter())
                .map(|(a, b)| a * b)
                .sum();
            normal[i][j] = v;
            normal[j][i] = v;
        }
    }
    let trace: f64 = (0..n).map(|i| normal[i][i]).sum();
    let jitter = 1e-14 * trace.max(f64::MIN_POSITIVE) / n as f64;
    for (i, row) in normal.iter_mut().enumerate() {
        row[i] += jitter;
    }
    let chol = cholesky(&normal).ok_or_else(|| {
        Error::NoConvergence("normal matrix is not positive definite after jitter".into())
    })?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed_from_env());
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut x);
    let mut prev = f64::INFINITY;
    for _ in 0..500 {
        let mut y = chol_solve(&chol, &x);
        normalize(&mut y);
        // Rayleigh quotient of the normal matrix at y.
        let ny: f64 = (0..n)
            .map(|i| {
                y[i] * normal[i]
                    .iter()
                    .zip(y.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum();
        let sigma = (ny - jitter).max(0.0).sqrt();
        if (sigma - prev).abs() <= 1e-12 * prev.max(1e-300) {
            return Ok(sigma);
        }
        prev = sigma;
        x = y;
    }
    Err(Error::NoConvergence(
        "inverse power iteration did not stabilize in 500 steps".into(),
    ))
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

#[allow(clippy::needless_range_loop)]
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    x
}

/// Result of driving the kernel recursion `γ_j = −γ₁·b/j` through the
/// truncated operator.
#[derive(Debug, Clone)]
pub struct KernelCheck {
    /// The candidate kernel direction `γ₁·(1, −b/2, …, −b/D)`.
    pub gamma: SeqVector,
    /// `ℓ²` norm of the image restricted to rows `1..D−1` (the truncation
    /// boundary row is excluded).
    pub defect: f64,
}

/// Builds the harmonically-decaying kernel direction of the `ℓ²` extension
/// and measures how exactly the truncated matrix annihilates it.
pub fn kernel_recursion_check(p: &CexParams, gamma1: f64, d: usize) -> Result<KernelCheck> {
    if !gamma1.is_finite() {
        return Err(Error::NonFinite("gamma1 must be finite".into()));
    }
    let op = build_counterexample_operator(p, d)?;
    let mut coeffs = vec![0.0; d];
    coeffs[0] = gamma1;
    for j in 2..=d {
        coeffs[j - 1] = -gamma1 * p.b / j as f64;
    }
    let gamma = SeqVector::from_raw(coeffs);
    let image = op.apply(&gamma);
    let defect = image.coeffs()[..d - 1]
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    Ok(KernelCheck { gamma, defect })
}
