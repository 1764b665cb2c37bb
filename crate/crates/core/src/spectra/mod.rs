//! Spectral estimators for a built level graph: the Laplacian eigenvalue
//! `lambda_2`, expansion constants `eta(p, d)`, the measure-weighted action
//! gap `kappa_hat`, the restricted Markov-operator norm, the factor-4
//! equivalence of the two Poincaré formulations, and the quantitative
//! margins tying them together.

mod eta;
mod lanczos;

pub use eta::{eta, EtaEstimate};

use crate::error::{Error, Result};
use crate::graph::SimpleGraph;
use crate::net::AhlforsEstimate;
use crate::warpgraph::WarpedGraph;
use lanczos::extreme_eigenvalues;

#[derive(Clone, Debug)]
pub struct Lambda2Result {
    pub value: f64,
    pub connected: bool,
    pub dim: usize,
    pub residual: f64,
}

/// Second-smallest eigenvalue of the combinatorial Laplacian of the union
/// graph (unweighted, simple), by Lanczos with the constant vector deflated.
/// Disconnected graphs return 0 with the flag cleared.
pub fn lambda2(g: &SimpleGraph) -> Result<Lambda2Result> {
    let n = g.n();
    if n == 0 {
        return Err(Error::input("empty graph"));
    }
    if n == 1 {
        return Ok(Lambda2Result {
            value: 0.0,
            connected: true,
            dim: 0,
            residual: 0.0,
        });
    }
    if !g.is_connected() {
        return Ok(Lambda2Result {
            value: 0.0,
            connected: false,
            dim: 0,
            residual: 0.0,
        });
    }
    let ones = vec![1.0; n];
    let res = extreme_eigenvalues(
        n,
        |x, out| g.laplacian_matvec(x, out),
        &[ones],
        0x5eed_1a2b,
        1e-8,
        700,
    )?;
    Ok(Lambda2Result {
        value: res.min.max(0.0),
        connected: true,
        dim: res.dim,
        residual: res.residual_min,
    })
}

#[derive(Clone, Debug)]
pub struct KappaResult {
    pub value: f64,
    /// support of the symmetrized weights is connected
    pub support_connected: bool,
    pub dim: usize,
    pub residual: f64,
}

fn validate_measures(n: usize, measures: &[f64]) -> Result<()> {
    if measures.len() != n {
        return Err(Error::input("measures must cover every vertex"));
    }
    if measures.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::input("measures must be positive and finite"));
    }
    let total: f64 = measures.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::input(format!(
            "measures must sum to 1 (got {total})"
        )));
    }
    Ok(())
}

/// Action spectral gap of the level: the smallest nonzero generalized
/// eigenvalue of `(L_W, L_mu)` where `L_W` is the Laplacian of the
/// symmetrized type-1 weights and `L_mu` the complete-graph Laplacian with
/// weights `mu_z mu_y`. Equivalently the second-smallest eigenvalue of
/// `D_mu^{-1/2} L_W D_mu^{-1/2}`. Disconnected weighted support yields 0.
pub fn kappa_hat(graph: &WarpedGraph, measures: &[f64]) -> Result<KappaResult> {
    let n = graph.n();
    validate_measures(n, measures)?;
    if n == 1 {
        return Ok(KappaResult {
            value: 0.0,
            support_connected: true,
            dim: 0,
            residual: 0.0,
        });
    }
    let rows = graph.symmetrized_rows();
    let support = SimpleGraph::from_edges(
        n,
        rows.iter().enumerate().flat_map(|(z, row)| {
            row.iter()
                .filter(move |&&(y, w)| w > 0.0 && y as usize != z)
                .map(move |&(y, _)| (z as u32, y))
        }),
    );
    if !support.is_connected() {
        return Ok(KappaResult {
            value: 0.0,
            support_connected: false,
            dim: 0,
            residual: 0.0,
        });
    }
    let sqrt_mu: Vec<f64> = measures.iter().map(|&m| m.sqrt()).collect();
    let degrees: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(z, row)| {
            row.iter()
                .filter(|&&(y, _)| y as usize != z)
                .map(|&(_, w)| w)
                .sum()
        })
        .collect();
    let matvec = |x: &[f64], out: &mut [f64]| {
        for z in 0..n {
            let u_z = x[z] / sqrt_mu[z];
            let mut acc = degrees[z] * u_z;
            for &(y, w) in &rows[z] {
                if y as usize != z {
                    acc -= w * x[y as usize] / sqrt_mu[y as usize];
                }
            }
            out[z] = acc / sqrt_mu[z];
        }
    };
    let res = extreme_eigenvalues(n, matvec, std::slice::from_ref(&sqrt_mu), 0x6a77, 1e-8, 700)?;
    Ok(KappaResult {
        value: res.min.max(0.0),
        support_connected: true,
        dim: res.dim,
        residual: res.residual_min,
    })
}

#[derive(Clone, Debug)]
pub struct MarkovResult {
    pub value: f64,
    /// worst relative deviation of a generator row mass from the cell measure
    pub max_row_deficit: f64,
    pub renormalized: bool,
    pub dim: usize,
    pub residual: f64,
}

/// Norm of the averaged transition operator restricted to zero-average
/// functions, in the symmetric representation.
///
/// The kernel is the symmetrized weight matrix `W` normalized by the
/// empirical stationary mass `nu_z = (Σ_y W(z,y)) / #S`, so the restricted
/// norm is bounded by 1 structurally; sampling deficits are absorbed into
/// `nu` and reported.
pub fn markov_norm(graph: &WarpedGraph, measures: &[f64]) -> Result<MarkovResult> {
    let n = graph.n();
    let gens = graph.gen_count();
    if gens == 0 {
        return Err(Error::input("markov operator undefined without generators"));
    }
    validate_measures(n, measures)?;
    if n == 1 {
        return Ok(MarkovResult {
            value: 0.0,
            max_row_deficit: 0.0,
            renormalized: false,
            dim: 0,
            residual: 0.0,
        });
    }
    let mut max_row_deficit = 0.0f64;
    for s in 0..gens {
        for (z, row) in graph.raw_weights(s).iter().enumerate() {
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            max_row_deficit = max_row_deficit.max((sum - measures[z]).abs() / measures[z]);
        }
    }
    let rows = graph.symmetrized_rows();
    let nu: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().map(|&(_, w)| w).sum::<f64>() / gens as f64)
        .collect();
    let sqrt_nu: Vec<f64> = nu
        .iter()
        .map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 })
        .collect();
    let mut deflate: Vec<f64> = sqrt_nu.clone();
    for (d, &v) in deflate.iter_mut().zip(&nu) {
        if v == 0.0 {
            *d = 0.0;
        }
    }
    let matvec = |x: &[f64], out: &mut [f64]| {
        for z in 0..n {
            let mut acc = 0.0;
            for &(y, w) in &rows[z] {
                acc += w * x[y as usize] / sqrt_nu[y as usize];
            }
            out[z] = acc / (gens as f64 * sqrt_nu[z]);
        }
    };
    let res = extreme_eigenvalues(n, matvec, &[deflate], 0x3a11, 1e-8, 700)?;
    let raw = res.min.abs().max(res.max.abs());
    debug_assert!(raw <= 1.0 + 1e-9, "restricted norm {raw} above 1");
    Ok(MarkovResult {
        value: raw.min(1.0),
        max_row_deficit,
        renormalized: max_row_deficit > 1e-9,
        dim: res.dim,
        residual: res.residual_min.max(res.residual_max),
    })
}

#[derive(Clone, Debug)]
pub struct FormRatio {
    pub ratio: f64,
    /// the zero function carries no information; flagged, ratio fixed at 1
    pub degenerate: bool,
}

/// Ratio `||g|| / ||f||` for `g(x,y) = f(x) - f(y)` on a finite probability
/// space, with `||g||^2 = Σ_{z,y} mu_z mu_y ||f(z)-f(y)||^2` and
/// `||f||^2 = Σ_z mu_z ||f(z)||^2`. For zero-average `f` the value lies in
/// `[1/2, 2]`.
pub fn pairwise_form_ratio(measures: &[f64], f: &[Vec<f64>]) -> Result<FormRatio> {
    let n = measures.len();
    if f.len() != n || n == 0 {
        return Err(Error::input("function and measure lengths differ"));
    }
    let d = f[0].len();
    if f.iter().any(|v| v.len() != d) || d == 0 {
        return Err(Error::input("inconsistent target dimension"));
    }
    validate_measures(n, measures)?;
    let mut mean = vec![0.0; d];
    let mut scale = 0.0f64;
    for (z, fz) in f.iter().enumerate() {
        for (c, &v) in fz.iter().enumerate() {
            mean[c] += measures[z] * v;
            scale = scale.max(v.abs());
        }
    }
    let mean_norm: f64 = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    if mean_norm > 1e-9 * (1.0 + scale) {
        return Err(Error::input(format!(
            "function must have zero average (|mean| = {mean_norm:.3e})"
        )));
    }
    let f_sq: f64 = f
        .iter()
        .zip(measures)
        .map(|(fz, &m)| m * fz.iter().map(|v| v * v).sum::<f64>())
        .sum();
    if f_sq == 0.0 {
        return Ok(FormRatio {
            ratio: 1.0,
            degenerate: true,
        });
    }
    let mut g_sq = 0.0;
    for (z, fz) in f.iter().enumerate() {
        for (y, fy) in f.iter().enumerate() {
            let diff: f64 = fz.iter().zip(fy).map(|(a, b)| (a - b) * (a - b)).sum();
            g_sq += measures[z] * measures[y] * diff;
        }
    }
    Ok(FormRatio {
        ratio: (g_sq / f_sq).sqrt(),
        degenerate: false,
    })
}

/// Quantitative margins between the measured expansion constant and the
/// bounds the action gap induces.
#[derive(Clone, Debug)]
pub struct MarginRecord {
    /// `kappa_hat / (#S K^3)`; expansion should not fall below it
    pub forward_bound: f64,
    /// `eta(2,1) - forward_bound`
    pub forward_margin: f64,
    /// `eta(2,1) / (2 K^3 D)`; the action gap should not fall below it
    pub reverse_bound: f64,
    /// `kappa_hat - reverse_bound`
    pub reverse_margin: f64,
}

/// Margins from the scalar p = 2 expansion constant, the action gap, the
/// cell-uniformity constant `K`, the max degree, and the formal symmetric
/// generator count (s and s^{-1} counted separately).
pub fn expansion_margins(
    eta21: f64,
    kappa: f64,
    k_hat: f64,
    d_max: usize,
    formal_gen_count: usize,
) -> Result<MarginRecord> {
    if formal_gen_count == 0 {
        return Err(Error::input("margins need at least one generator"));
    }
    if !(k_hat > 0.0) || !eta21.is_finite() || !kappa.is_finite() {
        return Err(Error::input(
            "margins need finite eta, kappa and positive K",
        ));
    }
    let k3 = k_hat.powi(3);
    let forward_bound = kappa / (formal_gen_count as f64 * k3);
    let reverse_bound = eta21 / (2.0 * k3 * d_max.max(1) as f64);
    Ok(MarginRecord {
        forward_bound,
        forward_margin: eta21 - forward_bound,
        reverse_bound,
        reverse_margin: kappa - reverse_bound,
    })
}

#[derive(Clone, Debug)]
pub struct EtaEntry {
    pub p: f64,
    pub dim: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SolverMeta {
    pub lambda2_dim: usize,
    pub lambda2_residual: f64,
    pub kappa_dim: usize,
    pub kappa_residual: f64,
    pub eta_restarts: usize,
    pub seed: u64,
}

/// One level's spectral summary.
#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub t: f64,
    pub n_vertices: usize,
    pub lambda2: f64,
    pub lambda2_connected: bool,
    pub eta: Vec<EtaEntry>,
    pub kappa_hat: f64,
    pub kappa_support_connected: bool,
    pub markov_norm: f64,
    pub k_hat: f64,
    pub c_hat: f64,
    pub m_hat: f64,
    pub d_max: usize,
    pub formal_gen_count: usize,
    pub forward_margin: f64,
    pub reverse_margin: f64,
    pub solver: SolverMeta,
}

impl SpectralReport {
    pub fn eta_value(&self, p: f64, dim: usize) -> Option<f64> {
        self.eta
            .iter()
            .find(|e| (e.p - p).abs() < 1e-12 && e.dim == dim)
            .map(|e| e.value)
    }
}

/// Runs every estimator on a built graph. Requires cell measures on the
/// graph; `p_list` gives the exponents evaluated at scalar targets.
pub fn spectral_report(
    graph: &WarpedGraph,
    ahlfors: &AhlforsEstimate,
    p_list: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<SpectralReport> {
    let measures = graph.cell_measure().to_vec();
    if measures.is_empty() {
        return Err(Error::input("graph carries no cell measures"));
    }
    let union = graph.union_simple();
    let l2 = lambda2(&union)?;
    let mut ps: Vec<f64> = p_list.to_vec();
    ps.sort_by(f64::total_cmp);
    ps.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let eta_entries: Vec<EtaEntry> = ps
        .iter()
        .map(|&p| {
            eta(&union, p, 1, restarts, seed).map(|e| EtaEntry {
                p,
                dim: 1,
                value: e.value,
            })
        })
        .collect::<Result<_>>()?;
    let kappa = kappa_hat(graph, &measures)?;
    let markov = markov_norm(graph, &measures)?;
    let d_max = union.max_degree();
    let k_hat = ahlfors.k_hat();
    let eta21 = eta_entries
        .iter()
        .find(|e| (e.p - 2.0).abs() < 1e-12 && e.dim == 1)
        .map(|e| e.value);
    let (fwd, rev) = match eta21 {
        Some(e21) if e21.is_finite() => {
            let m = expansion_margins(e21, kappa.value, k_hat, d_max, graph.formal_gen_count())?;
            (m.forward_margin, m.reverse_margin)
        }
        _ => (f64::NAN, f64::NAN),
    };
    Ok(SpectralReport {
        t: graph.t(),
        n_vertices: graph.n(),
        lambda2: l2.value,
        lambda2_connected: l2.connected,
        eta: eta_entries,
        kappa_hat: kappa.value,
        kappa_support_connected: kappa.support_connected,
        markov_norm: markov.value,
        k_hat,
        c_hat: ahlfors.big_c,
        m_hat: ahlfors.m,
        d_max,
        formal_gen_count: graph.formal_gen_count(),
        forward_margin: fwd,
        reverse_margin: rev,
        solver: SolverMeta {
            lambda2_dim: l2.dim,
            lambda2_residual: l2.residual,
            kappa_dim: kappa.dim,
            kappa_residual: kappa.residual,
            eta_restarts: restarts,
            seed,
        },
    })
}
