//! Quasi-isometry transfer of expansion constants, exercised with edge
//! subdivision as an explicit witness.
//!
//! For a `(C, A)`-quasi-isometry with co-density radius `B` between families
//! of degree-`D` graphs, a p = 1 expansion constant `eta` on the source
//! transfers to `1 / (K_A^3 K_B^2 K_{C+A}^2 / eta + 2 K_B^2)` on the image,
//! where `K_r` is the largest possible number of vertices in a radius-`r`
//! ball of a degree-`D` graph. The p = 1 constant is the one transferred
//! exactly; exponent independence carries it to other p qualitatively.

use crate::error::{Error, Result};
use crate::graph::SimpleGraph;
use crate::spectra::eta;

/// Parameters of a quasi-isometry between bounded-degree graph families:
/// multiplicative constant `C >= 1`, additive slack `A >= 0`, co-density
/// radius `B >= 0`, and a degree bound `D` valid for both families.
#[derive(Clone, Copy, Debug)]
pub struct QIParams {
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub degree: usize,
}

/// Largest number of vertices in a ball of radius `r` in a graph of max
/// degree `d`: the degree-`d` tree bound `1 + d ((d-1)^ceil(r) - 1)/(d - 2)`,
/// with small-degree special cases.
pub fn ball_size(degree: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 1.0;
    }
    let k = r.ceil();
    match degree {
        0 => 1.0,
        1 => 2.0,
        2 => 2.0 * k + 1.0,
        d => {
            let d = d as f64;
            1.0 + d * ((d - 1.0).powf(k) - 1.0) / (d - 2.0)
        }
    }
}

impl QIParams {
    pub fn new(c: f64, a: f64, b: f64, degree: usize) -> Result<QIParams> {
        if !(c >= 1.0) || !(a >= 0.0) || !(b >= 0.0) {
            return Err(Error::input("need C >= 1, A >= 0, B >= 0"));
        }
        Ok(QIParams { c, a, b, degree })
    }

    /// Fibre-size bound: an `A`-ball in the source.
    pub fn k_a(&self) -> f64 {
        ball_size(self.degree, self.a)
    }

    /// `B`-ball bound in the image.
    pub fn k_b(&self) -> f64 {
        ball_size(self.degree, self.b)
    }

    /// `(C + A)`-ball bound in the image.
    pub fn k_ca(&self) -> f64 {
        ball_size(self.degree, self.c + self.a)
    }
}

/// p = 1 expansion constant valid for any family quasi-isometric to one with
/// constant `eta_g` under the given parameters.
pub fn transfer_bound(eta_g: f64, params: &QIParams) -> Result<f64> {
    if !(eta_g > 0.0) {
        return Err(Error::input("transfer_bound requires eta > 0"));
    }
    let ka = params.k_a();
    let kb = params.k_b();
    let kca = params.k_ca();
    Ok(1.0 / (ka.powi(3) * kb.powi(2) * kca.powi(2) / eta_g + 2.0 * kb.powi(2)))
}

/// Replaces every edge by a path of `k + 1` edges. The inclusion of the
/// original vertices is a quasi-isometry with `C = k + 1`, `A = 0`,
/// co-density `B = ceil(k/2)`, and degree bound `max(D, 2)`.
pub fn subdivide(g: &SimpleGraph, k: usize) -> Result<(SimpleGraph, QIParams)> {
    if k < 1 {
        return Err(Error::input("subdivision requires k >= 1"));
    }
    let n = g.n();
    let mut edges = Vec::new();
    let mut next = n as u32;
    for (u, v) in g.edges() {
        let mut prev = u;
        for _ in 0..k {
            edges.push((prev, next));
            prev = next;
            next += 1;
        }
        edges.push((prev, v));
    }
    let sub = SimpleGraph::from_edges(next as usize, edges);
    let params = QIParams::new(
        (k + 1) as f64,
        0.0,
        (k as f64 / 2.0).ceil(),
        g.max_degree().max(2),
    )?;
    Ok((sub, params))
}

#[derive(Clone, Debug)]
pub struct QiRow {
    pub n_original: usize,
    pub n_subdivided: usize,
    pub eta_original: f64,
    pub eta_subdivided: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct QiInvarianceReport {
    pub rows: Vec<QiRow>,
    pub family_eta: f64,
    pub violations: usize,
}

/// Subdivides each family member and checks that its measured p = 1
/// expansion stays above the bound transferred from the family's minimum.
/// Violations are reported, not thrown.
pub fn qi_invariance_check(
    family: &[SimpleGraph],
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<QiInvarianceReport> {
    if family.is_empty() {
        return Err(Error::input("empty family"));
    }
    let etas: Vec<f64> = family
        .iter()
        .map(|g| eta(g, 1.0, 1, restarts, seed).map(|e| e.value))
        .collect::<Result<_>>()?;
    let family_eta = etas.iter().copied().fold(f64::INFINITY, f64::min);
    if !(family_eta > 0.0) || !family_eta.is_finite() {
        return Err(Error::input(
            "family is not an expander at p = 1; transfer undefined",
        ));
    }
    let mut rows = Vec::new();
    let mut violations = 0;
    for (g, &eta_orig) in family.iter().zip(&etas) {
        let (sub, mut params) = subdivide(g, k)?;
        params.degree = params.degree.max(sub.max_degree());
        let eta_sub = eta(&sub, 1.0, 1, restarts, seed ^ 0x51b)?.value;
        let bound = transfer_bound(family_eta, &params)?;
        let margin = eta_sub - bound;
        if margin < 0.0 {
            violations += 1;
        }
        rows.push(QiRow {
            n_original: g.n(),
            n_subdivided: sub.n(),
            eta_original: eta_orig,
            eta_subdivided: eta_sub,
            bound,
            margin,
        });
    }
    Ok(QiInvarianceReport {
        rows,
        family_eta,
        violations,
    })
}
