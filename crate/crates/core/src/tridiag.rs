//! Symmetric tridiagonal eigensolver: Sturm-sequence bisection for the
//! smallest eigenvalues, inverse iteration for eigenvectors.
//!
//! Only the K smallest pairs of a large matrix are ever needed here
//! (K ~ tens, n ~ 10^4), which makes bisection + inverse iteration the right
//! tool: O(K n log(1/eps)) and no dense factorization.

use crate::error::{Error, Result};

/// Number of eigenvalues of the symmetric tridiagonal matrix (diag, off)
/// strictly below `x`, via the LDLT pivot signs (Sturm sequence).
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let n = diag.len();
    if n == 0 {
        return 0;
    }
    let pivmin = pivot_guard(off);
    let mut count = 0usize;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..n {
        let q_safe = if q.abs() < pivmin { if q >= 0.0 { pivmin } else { -pivmin } } else { q };
        q = (diag[i] - x) - off[i - 1] * off[i - 1] / q_safe;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn pivot_guard(off: &[f64]) -> f64 {
    let max_e2 = off.iter().fold(0.0f64, |m, &e| m.max(e * e));
    (max_e2.max(1.0)) * f64::MIN_POSITIVE / f64::EPSILON
}

/// The `k_count` smallest eigenvalues, ascending, each located by bisection
/// to near machine precision.
pub fn smallest_eigenvalues(diag: &[f64], off: &[f64], k_count: usize) -> Result<Vec<f64>> {
    let n = diag.len();
    if k_count == 0 || k_count > n {
        return Err(Error::EigenSolver(format!(
            "requested {k_count} eigenvalues from a {n}x{n} matrix"
        )));
    }
    // Gershgorin enclosure
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for i in 0..n {
        let e_left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let e_right = if i < n - 1 { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - e_left - e_right);
        hi = hi.max(diag[i] + e_left + e_right);
    }
    let width = (hi - lo).max(1.0);
    lo -= 1e-12 * width;
    hi += 1e-12 * width;

    let mut eigenvalues = Vec::with_capacity(k_count);
    let mut lower = lo;
    for k in 0..k_count {
        // invariant: count(a) <= k < count(b)
        let mut a = lower;
        let mut b = hi;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if (b - a) <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
            if sturm_count(diag, off, mid) <= k {
                a = mid;
            } else {
                b = mid;
            }
        }
        let lambda = 0.5 * (a + b);
        if !lambda.is_finite() {
            return Err(Error::EigenSolver("bisection produced a non-finite eigenvalue".into()));
        }
        eigenvalues.push(lambda);
        lower = a; // later eigenvalues lie to the right
    }
    Ok(eigenvalues)
}

/// Eigenvector for an eigenvalue previously located by bisection, via
/// inverse iteration with partial pivoting. `neighbors` are already-computed
/// eigenvectors of nearby eigenvalues to orthogonalize against (only needed
/// when the spectrum is tight; harmless otherwise).
pub fn eigenvector(
    diag: &[f64],
    off: &[f64],
    lambda: f64,
    index: usize,
    neighbors: &[&[f64]],
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut v = seed_vector(n, index);
    normalize(&mut v);
    let mut residual = f64::MAX;
    for sweep in 0..6 {
        let mut w = solve_shifted(diag, off, lambda, &v);
        for nb in neighbors {
            let dot: f64 = w.iter().zip(nb.iter()).map(|(a, b)| a * b).sum();
            for (wi, bi) in w.iter_mut().zip(nb.iter()) {
                *wi -= dot * bi;
            }
        }
        normalize(&mut w);
        residual = residual_norm(diag, off, lambda, &w);
        v = w;
        // two sweeps minimum: the second squares the off-mode contamination
        if sweep >= 1 && residual < 1e-11 * scale_of(diag, off) {
            break;
        }
    }
    if residual > 1e-6 * scale_of(diag, off) {
        return Err(Error::EigenSolver(format!(
            "inverse iteration stalled at residual {residual:.3e} for eigenvalue {lambda:.6e}"
        )));
    }
    Ok(v)
}

fn scale_of(diag: &[f64], off: &[f64]) -> f64 {
    let d = diag.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let e = off.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    d.max(e).max(1.0)
}

fn residual_norm(diag: &[f64], off: &[f64], lambda: f64, v: &[f64]) -> f64 {
    let n = v.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut r = (diag[i] - lambda) * v[i];
        if i > 0 {
            r += off[i - 1] * v[i - 1];
        }
        if i < n - 1 {
            r += off[i] * v[i + 1];
        }
        worst = worst.max(r.abs());
    }
    worst
}

/// Deterministic pseudo-random start so runs are reproducible; a plain
/// constant vector can be orthogonal to interior eigenvectors by symmetry.
fn seed_vector(n: usize, index: usize) -> Vec<f64> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64 ^ (index as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        // xorshift64*
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        let r = state.wrapping_mul(0x2545_f491_4f6c_dd1d);
        v.push((r >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
    }
    v
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Solve (T - lambda I) w = rhs by Gaussian elimination with partial
/// pivoting; U carries two superdiagonals. Near-singular pivots are guarded,
/// which is exactly the regime inverse iteration exploits.
fn solve_shifted(diag: &[f64], off: &[f64], lambda: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let guard = pivot_guard(off).max(f64::MIN_POSITIVE * 1e20);
    let mut b: Vec<f64> = diag.iter().map(|&v| v - lambda).collect();
    let mut c = vec![0.0f64; n];
    c[..n - 1].copy_from_slice(off);
    let mut d = vec![0.0f64; n]; // fill-in second superdiagonal
    let mut x: Vec<f64> = rhs.to_vec();

    for i in 0..n - 1 {
        let sub = off[i];
        if sub.abs() > b[i].abs() {
            // swap rows i and i+1
            let (bi, ci) = (b[i], c[i]);
            b[i] = sub;
            c[i] = b[i + 1];
            d[i] = if i + 2 < n { c[i + 1] } else { 0.0 };
            let m = bi / b[i];
            b[i + 1] = ci - m * c[i];
            if i + 2 < n {
                c[i + 1] = -m * d[i];
            }
            x.swap(i, i + 1);
            let xi = x[i];
            x[i + 1] -= m * xi;
        } else {
            let pivot = if b[i].abs() < guard { guard.copysign(b[i]) } else { b[i] };
            b[i] = pivot;
            let m = sub / pivot;
            b[i + 1] -= m * c[i];
            let xi = x[i];
            x[i + 1] -= m * xi;
        }
    }

    // back substitution
    let fix = |p: f64| if p.abs() < guard { guard.copysign(if p == 0.0 { 1.0 } else { p }) } else { p };
    x[n - 1] /= fix(b[n - 1]);
    if n >= 2 {
        x[n - 2] = (x[n - 2] - c[n - 2] * x[n - 1]) / fix(b[n - 2]);
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (x[i] - c[i] * x[i + 1] - d[i] * x[i + 2]) / fix(b[i]);
    }
    // rescale to avoid overflow chains in the caller
    let max = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max > 0.0 && max.is_finite() {
        for v in x.iter_mut() {
            *v /= max;
        }
    }
    x
}
