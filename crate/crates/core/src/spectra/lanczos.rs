//! Lanczos tridiagonalization with full reorthogonalization and constant-
//! vector deflation. Extreme Ritz values come from Sturm-sequence bisection
//! on the tridiagonal matrix; residuals from the last component of the Ritz
//! vector, obtained by inverse iteration.

use crate::error::{Error, Result};
use crate::rng::substream;
use rand::Rng;

pub(crate) struct LanczosResult {
    pub min: f64,
    pub max: f64,
    pub residual_min: f64,
    pub residual_max: f64,
    pub dim: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Number of eigenvalues of the tridiagonal `(diag, off)` strictly below `x`,
/// by the classic LDL^T Sturm count.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let tiny = 1e-300;
    let mut count = 0;
    let mut d = diag[0] - x;
    if d < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let denom = if d.abs() < tiny {
            if d < 0.0 {
                -tiny
            } else {
                tiny
            }
        } else {
            d
        };
        d = diag[i] - x - off[i - 1] * off[i - 1] / denom;
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Extreme eigenvalues of the tridiagonal by bisection.
fn tridiag_extremes(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let m = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r =
            off.get(i).copied().unwrap_or(0.0).abs() + if i > 0 { off[i - 1].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    if m == 1 {
        return (diag[0], diag[0]);
    }
    let bisect = |want_count: usize| -> f64 {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..120 {
            let mid = 0.5 * (a + b);
            if sturm_count(diag, off, mid) >= want_count {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };
    (bisect(1), bisect(m))
}

/// Solves `(T - shift I) y = rhs` by LU with safeguarded pivots: near-zero
/// pivots are perturbed. The solve only feeds the residual weight, where a
/// tiny shift perturbation is immaterial.
fn tridiag_shifted_solve(diag: &[f64], off: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut d: Vec<f64> = diag.iter().map(|&a| a - shift).collect();
    let mut b: Vec<f64> = rhs.to_vec();
    let scale = diag.iter().fold(0.0f64, |a, &x| a.max(x.abs())) + 1.0;
    let eps = 1e-13 * scale;
    for i in 0..m {
        if d[i].abs() < eps {
            d[i] = if d[i] < 0.0 { -eps } else { eps };
        }
        if i + 1 < m {
            let factor = off[i] / d[i];
            d[i + 1] -= factor * off[i];
            b[i + 1] -= factor * b[i];
        }
    }
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let upper = if i + 1 < m { off[i] * y[i + 1] } else { 0.0 };
        y[i] = (b[i] - upper) / d[i];
    }
    y
}

/// Last-component weight of the Ritz vector at `theta`, via two steps of
/// inverse iteration on the tridiagonal.
fn ritz_last_component(diag: &[f64], off: &[f64], theta: f64) -> f64 {
    let m = diag.len();
    if m == 1 {
        return 1.0;
    }
    let mut y = vec![1.0 / (m as f64).sqrt(); m];
    for _ in 0..2 {
        y = tridiag_shifted_solve(diag, off, theta, &y);
        let n = norm(&y);
        if !(n.is_finite() && n > 0.0) {
            return 1.0;
        }
        for v in &mut y {
            *v /= n;
        }
    }
    y[m - 1].abs()
}

/// Extreme eigenvalues of a symmetric operator restricted to the orthogonal
/// complement of `deflate`, by Lanczos with full reorthogonalization.
pub(crate) fn extreme_eigenvalues<F: Fn(&[f64], &mut [f64])>(
    n: usize,
    matvec: F,
    deflate: &[Vec<f64>],
    seed: u64,
    rel_tol: f64,
    max_dim: usize,
) -> Result<LanczosResult> {
    // orthonormalize the deflation basis
    let mut defl: Vec<Vec<f64>> = Vec::new();
    for v in deflate {
        let mut v = v.clone();
        for q in &defl {
            let c = dot(q, &v);
            axpy(&mut v, -c, q);
        }
        let nv = norm(&v);
        if nv > 1e-12 {
            for x in &mut v {
                *x /= nv;
            }
            defl.push(v);
        }
    }
    let max_krylov = (n - defl.len()).min(max_dim);
    if max_krylov == 0 {
        return Err(Error::input(
            "operator has no directions left after deflation",
        ));
    }

    let mut rng = substream(seed, "lanczos", 0);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    for q in &defl {
        let c = dot(q, &v);
        axpy(&mut v, -c, q);
    }
    let nv = norm(&v);
    if nv < 1e-14 {
        return Err(Error::Internal("degenerate start vector".into()));
    }
    for x in &mut v {
        *x /= nv;
    }

    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut op_scale = 1e-30f64;

    let check = |alphas: &[f64], betas: &[f64], beta_next: f64| -> (f64, f64, f64, f64) {
        let (tmin, tmax) = tridiag_extremes(alphas, betas);
        let res_min = beta_next * ritz_last_component(alphas, betas, tmin);
        let res_max = beta_next * ritz_last_component(alphas, betas, tmax);
        (tmin, tmax, res_min, res_max)
    };

    loop {
        let j = alphas.len();
        let vj = basis[j].clone();
        matvec(&vj, &mut w);
        if j > 0 {
            let beta_prev = betas[j - 1];
            let v_prev = basis[j - 1].clone();
            axpy(&mut w, -beta_prev, &v_prev);
        }
        let alpha = dot(&basis[j], &w);
        axpy(&mut w, -alpha, &basis[j]);
        // full reorthogonalization, two passes
        for _ in 0..2 {
            for q in defl.iter().chain(basis.iter()) {
                let c = dot(q, &w);
                if c != 0.0 {
                    axpy(&mut w, -c, q);
                }
            }
        }
        alphas.push(alpha);
        op_scale = op_scale.max(alpha.abs());
        let beta = norm(&w);
        op_scale = op_scale.max(beta);

        let exhausted = alphas.len() == max_krylov;
        let breakdown = beta <= 1e-12 * op_scale;
        let should_check = exhausted || breakdown || alphas.len().is_multiple_of(10);
        if should_check {
            let (tmin, tmax, res_min, res_max) = check(&alphas, &betas, beta);
            let spread = (tmax - tmin).abs().max(1e-30);
            let tol_min = rel_tol * tmin.abs().max(1e-8 * spread);
            let tol_max = rel_tol * tmax.abs().max(1e-8 * spread);
            if breakdown || (res_min <= tol_min && res_max <= tol_max) {
                return Ok(LanczosResult {
                    min: tmin,
                    max: tmax,
                    residual_min: res_min,
                    residual_max: res_max,
                    dim: alphas.len(),
                });
            }
            if exhausted {
                return Err(Error::Solver(format!(
                    "extreme eigenvalues not converged after {} Lanczos steps (residuals {res_min:.3e}, {res_max:.3e})",
                    alphas.len()
                )));
            }
        }

        betas.push(beta);
        let mut next = w.clone();
        for x in &mut next {
            *x /= beta;
        }
        basis.push(next);
    }
}
