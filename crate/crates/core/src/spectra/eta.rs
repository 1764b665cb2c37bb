//! Expansion-constant estimation: minimize the p-Poincaré quotient
//!
//! ```text
//! R(f) = #G * sum_{edges {x,y}} ||f(x)-f(y)||_p^p / sum_{ordered (x,y)} ||f(x)-f(y)||_p^p
//! ```
//!
//! over nonconstant `f : V -> R^d`. For p = 2 the minimizer is found by a
//! three-term subspace descent on the quotient (exact minimization over
//! span{f, grad, previous iterate} each step); for other exponents by
//! projected subgradient descent with backtracking, multiple restarts and a
//! p = 2 warm start. For scalar targets every run is rounded over threshold
//! cuts (whose quotient value is exponent-free) and polished by single-vertex
//! moves. The reported value is the minimum found: an upper bound on the
//! true infimum, exact on instances small enough for the rounding to cover.

use crate::error::{Error, Result};
use crate::graph::SimpleGraph;
use crate::rng::substream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct EtaEstimate {
    pub value: f64,
    pub p: f64,
    pub dim: usize,
    pub restarts: usize,
    /// set when the quotient is undefined (fewer than two vertices)
    pub degenerate: bool,
}

struct PQuotient<'a> {
    g: &'a SimpleGraph,
    p: f64,
    d: usize,
    n: usize,
}

fn binom(n: u64, k: u64) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// `|x|^p` with fast paths for the common exponents.
#[inline]
fn powp(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x.abs()
    } else if p == 4.0 {
        let s = x * x;
        s * s
    } else {
        x.abs().powf(p)
    }
}

/// `p |x|^{p-1} sign(x)`, the derivative of `|x|^p` (a subgradient at 0).
#[inline]
fn powp_grad(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if p == 2.0 {
        2.0 * x
    } else if p == 1.0 {
        x.signum()
    } else if p == 4.0 {
        4.0 * x * x * x
    } else {
        p * x.abs().powf(p - 1.0) * x.signum()
    }
}

impl<'a> PQuotient<'a> {
    fn new(g: &'a SimpleGraph, p: f64, d: usize) -> Self {
        PQuotient { g, p, d, n: g.n() }
    }

    fn coord<'b>(&self, f: &'b [f64], c: usize) -> impl Iterator<Item = f64> + 'b {
        let d = self.d;
        f.iter().skip(c).step_by(d).copied()
    }

    fn edge_energy(&self, f: &[f64]) -> f64 {
        let p = self.p;
        let d = self.d;
        let mut acc = 0.0;
        for (u, v) in self.g.edges() {
            let (u, v) = (u as usize * d, v as usize * d);
            for c in 0..d {
                acc += powp(f[u + c] - f[v + c], p);
            }
        }
        acc
    }

    /// Ordered-pair energy, coordinate-separable. Fast paths: O(n) moment
    /// formulas for even integer p, an O(n log n) sorted prefix sum for
    /// p = 1, and an O(n^2) fallback otherwise.
    fn pair_energy(&self, f: &[f64]) -> f64 {
        let n = self.n as f64;
        let p = self.p;
        let mut acc = 0.0;
        for c in 0..self.d {
            if p == 2.0 {
                let (mut s1, mut s2) = (0.0, 0.0);
                for x in self.coord(f, c) {
                    s1 += x;
                    s2 += x * x;
                }
                acc += 2.0 * n * s2 - 2.0 * s1 * s1;
            } else if p == 1.0 {
                let mut vals: Vec<f64> = self.coord(f, c).collect();
                vals.sort_by(f64::total_cmp);
                let mut sub = 0.0;
                for (k, &x) in vals.iter().enumerate() {
                    sub += (2.0 * k as f64 - (n - 1.0)) * x;
                }
                acc += 2.0 * sub;
            } else if p.fract() == 0.0 && (p as u64).is_multiple_of(2) {
                let q = p as u64;
                let mut sums = vec![0.0f64; q as usize + 1];
                for x in self.coord(f, c) {
                    let mut pw = 1.0;
                    for s in sums.iter_mut() {
                        *s += pw;
                        pw *= x;
                    }
                }
                for i in 0..=q {
                    let sign = if (q - i).is_multiple_of(2) { 1.0 } else { -1.0 };
                    acc += sign * binom(q, i) * sums[i as usize] * sums[(q - i) as usize];
                }
            } else {
                let vals: Vec<f64> = self.coord(f, c).collect();
                for (i, &a) in vals.iter().enumerate() {
                    for &b in &vals[i + 1..] {
                        acc += 2.0 * powp(a - b, p);
                    }
                }
            }
        }
        acc
    }

    fn value(&self, f: &[f64]) -> f64 {
        let den = self.pair_energy(f);
        if den <= 0.0 {
            return f64::INFINITY;
        }
        self.n as f64 * self.edge_energy(f) / den
    }

    fn edge_grad(&self, f: &[f64], out: &mut [f64]) {
        let p = self.p;
        let d = self.d;
        out.iter_mut().for_each(|x| *x = 0.0);
        for (u, v) in self.g.edges() {
            let (ub, vb) = (u as usize * d, v as usize * d);
            for c in 0..d {
                let g = powp_grad(f[ub + c] - f[vb + c], p);
                out[ub + c] += g;
                out[vb + c] -= g;
            }
        }
    }

    fn pair_grad(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n as f64;
        let p = self.p;
        let d = self.d;
        out.iter_mut().for_each(|x| *x = 0.0);
        for c in 0..d {
            if p == 2.0 {
                let s1: f64 = self.coord(f, c).sum();
                for (z, x) in self.coord(f, c).enumerate() {
                    out[z * d + c] = 4.0 * (n * x - s1);
                }
            } else if p == 1.0 {
                // subgradient from ranks; ties contribute zero
                let mut idx: Vec<usize> = (0..self.n).collect();
                idx.sort_by(|&i, &j| f[i * d + c].total_cmp(&f[j * d + c]));
                let vals: Vec<f64> = idx.iter().map(|&i| f[i * d + c]).collect();
                for (rank, &i) in idx.iter().enumerate() {
                    let x = vals[rank];
                    let below = vals.partition_point(|&v| v < x);
                    let above = self.n - vals.partition_point(|&v| v <= x);
                    out[i * d + c] = 2.0 * (below as f64 - above as f64);
                }
            } else if p.fract() == 0.0 && (p as u64).is_multiple_of(2) {
                let q = (p as u64) - 1; // odd
                let mut sums = vec![0.0f64; q as usize + 1];
                for x in self.coord(f, c) {
                    let mut pw = 1.0;
                    for s in sums.iter_mut() {
                        *s += pw;
                        pw *= x;
                    }
                }
                for (z, x) in self.coord(f, c).enumerate() {
                    let mut acc = 0.0;
                    for i in 0..=q {
                        let sign = if (q - i).is_multiple_of(2) { 1.0 } else { -1.0 };
                        acc += sign * binom(q, i) * x.powi(i as i32) * sums[(q - i) as usize];
                    }
                    out[z * d + c] = 2.0 * p * acc;
                }
            } else {
                let vals: Vec<f64> = self.coord(f, c).collect();
                for (z, &x) in vals.iter().enumerate() {
                    let mut acc = 0.0;
                    for &y in &vals {
                        acc += powp_grad(x - y, p);
                    }
                    out[z * d + c] = 2.0 * acc;
                }
            }
        }
    }

    /// Gradient (subgradient for p = 1) of the quotient.
    fn quotient_grad(&self, f: &[f64], num: f64, den: f64, out: &mut [f64]) {
        let mut gn = vec![0.0; f.len()];
        let mut gd = vec![0.0; f.len()];
        self.edge_grad(f, &mut gn);
        self.pair_grad(f, &mut gd);
        let scale = self.n as f64 / den;
        let ratio = num / den;
        for i in 0..f.len() {
            out[i] = scale * (gn[i] - ratio * gd[i]);
        }
    }
}

fn project_zero_mean(f: &mut [f64], d: usize) {
    let n = f.len() / d;
    for c in 0..d {
        let mean: f64 = f.iter().skip(c).step_by(d).sum::<f64>() / n as f64;
        for v in f.iter_mut().skip(c).step_by(d) {
            *v -= mean;
        }
    }
}

fn normalize(f: &mut [f64]) -> bool {
    let n: f64 = f.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-300 {
        return false;
    }
    for x in f.iter_mut() {
        *x /= n;
    }
    true
}

/// p = 2 path: exact minimization over span{f, grad, previous f} per step.
fn minimize_p2(q: &PQuotient, f0: &[f64], max_iter: usize) -> (f64, Vec<f64>) {
    let mut f = f0.to_vec();
    project_zero_mean(&mut f, q.d);
    if !normalize(&mut f) {
        return (f64::INFINITY, f);
    }
    let bilinear_n = |u: &[f64], v: &[f64]| -> f64 {
        let d = q.d;
        let mut acc = 0.0;
        for (a, b) in q.g.edges() {
            let (ab, bb) = (a as usize * d, b as usize * d);
            for c in 0..d {
                acc += (u[ab + c] - u[bb + c]) * (v[ab + c] - v[bb + c]);
            }
        }
        acc
    };
    let bilinear_d = |u: &[f64], v: &[f64]| -> f64 {
        let d = q.d;
        let n = q.n as f64;
        let mut acc = 0.0;
        for c in 0..d {
            let (mut su, mut sv, mut dotc) = (0.0, 0.0, 0.0);
            for (a, b) in u.iter().skip(c).step_by(d).zip(v.iter().skip(c).step_by(d)) {
                su += a;
                sv += b;
                dotc += a * b;
            }
            acc += 2.0 * n * dotc - 2.0 * su * sv;
        }
        acc
    };

    let mut prev: Option<Vec<f64>> = None;
    let mut grad = vec![0.0; f.len()];
    let mut best = q.value(&f);
    let mut stall = 0usize;
    for _ in 0..max_iter {
        let num = q.edge_energy(&f);
        let den = q.pair_energy(&f);
        if den <= 0.0 {
            break;
        }
        q.quotient_grad(&f, num, den, &mut grad);
        let gnorm: f64 = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm < 1e-13 * best.max(1.0) {
            break;
        }

        // orthonormal basis of the trial subspace
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for cand in [Some(f.clone()), Some(grad.clone()), prev.clone()]
            .into_iter()
            .flatten()
        {
            let mut v = cand;
            project_zero_mean(&mut v, q.d);
            for b in &basis {
                let c: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= c * bi;
                }
            }
            if normalize(&mut v) {
                let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nv > 0.5 {
                    basis.push(v);
                }
            }
        }
        if basis.len() < 2 {
            break;
        }
        let k = basis.len();
        let nm = DMatrix::from_fn(k, k, |i, j| bilinear_n(&basis[i], &basis[j]));
        let dm = DMatrix::from_fn(k, k, |i, j| bilinear_d(&basis[i], &basis[j]));
        let Some(chol) = nalgebra::Cholesky::new(dm.clone()) else {
            break;
        };
        let l = chol.l();
        let Some(linv_n) = l.clone().solve_lower_triangular(&nm) else {
            break;
        };
        let Some(mid_t) = l.clone().solve_lower_triangular(&linv_n.transpose()) else {
            break;
        };
        let mid = 0.5 * (&mid_t + mid_t.transpose());
        let eig = nalgebra::SymmetricEigen::new(mid);
        let (mut arg, mut lo) = (0, f64::INFINITY);
        for (i, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev < lo {
                lo = ev;
                arg = i;
            }
        }
        let y: DVector<f64> = eig.eigenvectors.column(arg).into();
        let Some(coeff) = l.transpose().solve_upper_triangular(&y) else {
            break;
        };
        let mut new_f = vec![0.0; f.len()];
        for (i, b) in basis.iter().enumerate() {
            for (nf, &bv) in new_f.iter_mut().zip(b) {
                *nf += coeff[i] * bv;
            }
        }
        project_zero_mean(&mut new_f, q.d);
        if !normalize(&mut new_f) {
            break;
        }
        prev = Some(f.clone());
        f = new_f;
        let val = q.value(&f);
        if val < best - 1e-13 * best.max(1.0) {
            best = best.min(val);
            stall = 0;
        } else {
            best = best.min(val);
            stall += 1;
            if stall >= 12 {
                break;
            }
        }
    }
    (best.min(q.value(&f)), f)
}

/// General-p path: projected subgradient descent with backtracking.
fn minimize_general(q: &PQuotient, f0: &[f64], max_iter: usize) -> (f64, Vec<f64>) {
    let mut f = f0.to_vec();
    project_zero_mean(&mut f, q.d);
    if !normalize(&mut f) {
        return (f64::INFINITY, f);
    }
    let mut cur = q.value(&f);
    let mut best = cur;
    let mut best_f = f.clone();
    let mut grad = vec![0.0; f.len()];
    let mut alpha = 0.25f64;
    let mut stall = 0usize;
    for _ in 0..max_iter {
        let num = q.edge_energy(&f);
        let den = q.pair_energy(&f);
        if den <= 0.0 {
            break;
        }
        q.quotient_grad(&f, num, den, &mut grad);
        let gnorm: f64 = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm < 1e-14 * cur.max(1.0) {
            break;
        }
        let mut a = (alpha * 2.0).min(1e3);
        let mut improved = false;
        for _ in 0..25 {
            let mut trial: Vec<f64> = f
                .iter()
                .zip(&grad)
                .map(|(x, g)| x - a * g / gnorm)
                .collect();
            project_zero_mean(&mut trial, q.d);
            if normalize(&mut trial) {
                let tv = q.value(&trial);
                if tv < cur - 1e-16 {
                    f = trial;
                    cur = tv;
                    alpha = a;
                    improved = true;
                    break;
                }
            }
            a *= 0.5;
            if a < 1e-16 {
                break;
            }
        }
        if cur < best - 1e-13 * best.max(1.0) {
            best = cur;
            best_f = f.clone();
            stall = 0;
        } else {
            stall += 1;
        }
        if !improved {
            alpha = (alpha * 0.5).max(1e-12);
            stall += 1;
        }
        if stall >= 30 {
            break;
        }
    }
    (best, best_f)
}

/// Best threshold cut of a scalar function: the quotient of an indicator is
/// `n * cut(S) / (2 |S| |V \ S|)`, independent of the exponent.
fn best_threshold_cut(g: &SimpleGraph, f: &[f64]) -> (f64, Vec<bool>) {
    let n = g.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| f[j].total_cmp(&f[i]).then(i.cmp(&j)));
    let mut in_s = vec![false; n];
    let mut cut = 0i64;
    let mut best = f64::INFINITY;
    let mut best_k = 0usize;
    for (k, &v) in order.iter().enumerate().take(n - 1) {
        let mut inside = 0i64;
        for &u in g.neighbors(v as u32) {
            if in_s[u as usize] {
                inside += 1;
            }
        }
        cut += g.degree(v as u32) as i64 - 2 * inside;
        in_s[v] = true;
        let k = k + 1;
        let val = n as f64 * cut as f64 / (2.0 * k as f64 * (n - k) as f64);
        if val < best {
            best = val;
            best_k = k;
        }
    }
    let mut side = vec![false; n];
    for &v in order.iter().take(best_k) {
        side[v] = true;
    }
    (best, side)
}

/// First-improvement single-vertex moves on a cut.
fn polish_cut(g: &SimpleGraph, side: &mut [bool]) -> f64 {
    let n = g.n();
    let mut k = side.iter().filter(|&&s| s).count();
    let mut cut = 0i64;
    for (u, v) in g.edges() {
        if side[u as usize] != side[v as usize] {
            cut += 1;
        }
    }
    let value = |cut: i64, k: usize| {
        if k == 0 || k == n {
            f64::INFINITY
        } else {
            n as f64 * cut as f64 / (2.0 * k as f64 * (n - k) as f64)
        }
    };
    let mut cur = value(cut, k);
    for _ in 0..20 * n {
        let mut moved = false;
        for v in 0..n {
            let (mut same, mut other) = (0i64, 0i64);
            for &u in g.neighbors(v as u32) {
                if side[u as usize] == side[v] {
                    same += 1;
                } else {
                    other += 1;
                }
            }
            let new_cut = cut + same - other;
            let new_k = if side[v] { k - 1 } else { k + 1 };
            let nv = value(new_cut, new_k);
            if nv < cur - 1e-15 {
                side[v] = !side[v];
                cut = new_cut;
                k = new_k;
                cur = nv;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    cur
}

/// Infimum estimate of the p-Poincaré quotient over `l_p^d`-valued
/// nonconstant functions on the graph.
pub fn eta(g: &SimpleGraph, p: f64, dim: usize, restarts: usize, seed: u64) -> Result<EtaEstimate> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::input(format!(
            "exponent p = {p} must lie in [1, inf)"
        )));
    }
    if dim == 0 {
        return Err(Error::input("target dimension must be >= 1"));
    }
    if restarts == 0 {
        return Err(Error::input("need at least one restart"));
    }
    let n = g.n();
    if n <= 1 {
        return Ok(EtaEstimate {
            value: f64::INFINITY,
            p,
            dim,
            restarts,
            degenerate: true,
        });
    }
    if !g.is_connected() {
        // indicator of a component makes the edge energy vanish
        return Ok(EtaEstimate {
            value: 0.0,
            p,
            dim,
            restarts,
            degenerate: false,
        });
    }
    let q = PQuotient::new(g, p, dim);
    let len = n * dim;
    let max_iter = if p == 2.0 { 5_000 } else { 800 };

    let random_start = |r: u64| -> Vec<f64> {
        let mut rng = substream(seed, "eta-restart", r);
        (0..len).map(|_| rng.gen::<f64>() - 0.5).collect()
    };

    // spectral warm start for p != 2
    let warm: Option<Vec<f64>> = if p != 2.0 {
        let q2 = PQuotient::new(g, 2.0, dim);
        Some(minimize_p2(&q2, &random_start(u64::MAX), 5_000).1)
    } else {
        None
    };

    let mut starts: Vec<Vec<f64>> = (0..restarts as u64).map(random_start).collect();
    if let Some(w) = warm {
        starts.push(w);
    }

    let results: Vec<f64> = starts
        .into_par_iter()
        .map(|f0| {
            let (val, fmin) = if p == 2.0 {
                minimize_p2(&q, &f0, max_iter)
            } else {
                minimize_general(&q, &f0, max_iter)
            };
            let mut best = val;
            if dim == 1 {
                let (rv, mut side) = best_threshold_cut(g, &fmin);
                best = best.min(rv);
                best = best.min(polish_cut(g, &mut side));
            }
            best
        })
        .collect();

    let value = results.iter().copied().fold(f64::INFINITY, f64::min);
    if !value.is_finite() {
        return Ok(EtaEstimate {
            value: f64::INFINITY,
            p,
            dim,
            restarts,
            degenerate: true,
        });
    }
    Ok(EtaEstimate {
        value,
        p,
        dim,
        restarts,
        degenerate: false,
    })
}
