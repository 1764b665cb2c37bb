//! Level graphs of an action: typed edges with Monte-Carlo measure weights,
//! degree accounting against the measured regularity constants, and a
//! shortest-path estimator for the warped metric.
//!
//! Vertices are the net points. A type-1 edge `y ~_s z` is witnessed when a
//! sample from the cell of `z` lands in the cell of `y` under the generator
//! `s`; its weight accumulates the sampled mass of `U_z ∩ s^{-1} U_y`.
//! Type-2 edges join net points at distance at most `3/t` (exact test, no
//! sampling). The `Type1Only` variant omits type-2 edges.

use crate::error::{Error, Result};
use crate::graph::SimpleGraph;
use crate::net::{build_net, AhlforsEstimate, Net, NetParams};
use crate::rng::substream;
use crate::spaces::{Action, Point};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Type1Only,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "full" => Ok(Variant::Full),
            "type1_only" => Ok(Variant::Type1Only),
            other => Err(Error::config(format!("unknown variant '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Type1Only => "type1_only",
        }
    }
}

/// Raw ingredients of a warped graph; used by the sampling builder, the TSV
/// loader, and hand-built test instances.
pub struct GraphParts {
    pub t: f64,
    pub n: usize,
    pub variant: Variant,
    /// `weights[s][z]` lists `(y, w_s(z, y))` including the diagonal.
    pub weights: Vec<Vec<Vec<(u32, f64)>>>,
    /// Sorted neighbor lists for the `d <= 3/t` relation, no self entries.
    pub type2: Vec<Vec<u32>>,
    pub cell_measure: Vec<f64>,
    pub lipschitz: Vec<f64>,
    pub inverse_index: Vec<usize>,
    pub formal_gen_count: usize,
    pub n_per_cell: usize,
    pub seed: u64,
    pub space_name: String,
}

pub struct WarpedGraph {
    t: f64,
    n: usize,
    variant: Variant,
    weights: Vec<Vec<Vec<(u32, f64)>>>,
    /// `W = Σ_s (w_s(z,y) + w_{s^{-1}}(y,z)) / 2`, stored exactly symmetric,
    /// diagonal included.
    symmetrized: Vec<Vec<(u32, f64)>>,
    type2: Vec<Vec<u32>>,
    cell_measure: Vec<f64>,
    lipschitz: Vec<f64>,
    inverse_index: Vec<usize>,
    formal_gen_count: usize,
    n_per_cell: usize,
    seed: u64,
    space_name: String,
    pub warnings: Vec<String>,
}

impl WarpedGraph {
    pub fn from_parts(parts: GraphParts) -> Result<WarpedGraph> {
        let GraphParts {
            t,
            n,
            variant,
            mut weights,
            type2,
            cell_measure,
            lipschitz,
            inverse_index,
            formal_gen_count,
            n_per_cell,
            seed,
            space_name,
        } = parts;
        let gens = weights.len();
        if lipschitz.len() != gens || inverse_index.len() != gens {
            return Err(Error::input("per-generator metadata length mismatch"));
        }
        if inverse_index.iter().any(|&i| i >= gens.max(1)) {
            return Err(Error::input("inverse index out of range"));
        }
        if type2.len() != n && variant == Variant::Full {
            return Err(Error::input("type-2 adjacency must cover every vertex"));
        }
        if !cell_measure.is_empty() && cell_measure.len() != n {
            return Err(Error::input("cell measures must cover every vertex"));
        }
        for rows in &mut weights {
            if rows.len() != n {
                return Err(Error::input("weight rows must cover every vertex"));
            }
            for row in rows.iter_mut() {
                row.sort_unstable_by_key(|&(y, _)| y);
            }
        }

        // W(z,y) = (A(z,y) + A(y,z)) / 2 for A = Σ_s w_s; exact symmetry by
        // accumulating unordered slots and mirroring
        let mut acc: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for rows in &weights {
            for (z, row) in rows.iter().enumerate() {
                let z = z as u32;
                for &(y, w) in row {
                    if z == y {
                        *acc.entry((z, z)).or_insert(0.0) += w;
                    } else {
                        *acc.entry((z.min(y), z.max(y))).or_insert(0.0) += 0.5 * w;
                    }
                }
            }
        }
        let mut symmetrized = vec![Vec::new(); n];
        for (&(z, y), &w) in &acc {
            symmetrized[z as usize].push((y, w));
            if z != y {
                symmetrized[y as usize].push((z, w));
            }
        }
        for row in &mut symmetrized {
            row.sort_unstable_by_key(|&(y, _)| y);
        }

        Ok(WarpedGraph {
            t,
            n,
            variant,
            weights,
            symmetrized,
            type2,
            cell_measure,
            lipschitz,
            inverse_index,
            formal_gen_count,
            n_per_cell,
            seed,
            space_name,
            warnings: Vec::new(),
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn gen_count(&self) -> usize {
        self.weights.len()
    }

    pub fn formal_gen_count(&self) -> usize {
        self.formal_gen_count
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn cell_measure(&self) -> &[f64] {
        &self.cell_measure
    }

    /// Attaches cell measures to a graph loaded without them.
    pub fn set_cell_measure(&mut self, measures: Vec<f64>) -> Result<()> {
        if measures.len() != self.n {
            return Err(Error::input("cell measures must cover every vertex"));
        }
        self.cell_measure = measures;
        Ok(())
    }

    pub fn n_per_cell(&self) -> usize {
        self.n_per_cell
    }

    pub fn space_name(&self) -> &str {
        &self.space_name
    }

    /// Raw per-generator weights `w_s(z, ·)` including the diagonal.
    pub fn raw_weights(&self, s: usize) -> &[Vec<(u32, f64)>] {
        &self.weights[s]
    }

    /// Symmetrized weight matrix rows (diagonal included).
    pub fn symmetrized_rows(&self) -> &[Vec<(u32, f64)>] {
        &self.symmetrized
    }

    pub fn type2_neighbors(&self) -> &[Vec<u32>] {
        &self.type2
    }

    /// Largest deviation of `Σ_y w_s(z, y)` from the cell measure, over all
    /// generators and cells. Zero-sample cells show up here as full deficit.
    pub fn mass_conservation_max_error(&self) -> f64 {
        if self.cell_measure.is_empty() {
            return f64::NAN;
        }
        let mut worst = 0.0f64;
        for rows in &self.weights {
            for (z, row) in rows.iter().enumerate() {
                let sum: f64 = row.iter().map(|&(_, w)| w).sum();
                worst = worst.max((sum - self.cell_measure[z]).abs());
            }
        }
        worst
    }

    /// Support of the symmetrized generator relation `~_s`, excluding self
    /// loops: neighbors witnessed from either direction.
    pub fn type1_neighbors(&self, s: usize) -> Vec<Vec<u32>> {
        let inv = self.inverse_index[s];
        let mut sets: Vec<std::collections::BTreeSet<u32>> = vec![Default::default(); self.n];
        for (z, row) in self.weights[s].iter().enumerate() {
            for &(y, w) in row {
                if w > 0.0 && y as usize != z {
                    sets[z].insert(y);
                    sets[y as usize].insert(z as u32);
                }
            }
        }
        for (y, row) in self.weights[inv].iter().enumerate() {
            for &(z, w) in row {
                if w > 0.0 && z as usize != y {
                    sets[z as usize].insert(y as u32);
                    sets[y].insert(z);
                }
            }
        }
        sets.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Union graph of the active edge types, unweighted and simple.
    pub fn union_simple(&self) -> SimpleGraph {
        let mut edges = Vec::new();
        for (z, row) in self.symmetrized.iter().enumerate() {
            for &(y, w) in row {
                if w > 0.0 && y as usize != z {
                    edges.push((z as u32, y));
                }
            }
        }
        if self.variant == Variant::Full {
            for (z, nbrs) in self.type2.iter().enumerate() {
                for &y in nbrs {
                    edges.push((z as u32, y));
                }
            }
        }
        SimpleGraph::from_edges(self.n, edges)
    }

    /// `(witnessed type-1 unordered edges, type-2 unordered edges)`.
    pub fn edge_counts(&self) -> (usize, usize) {
        let t1 = self
            .symmetrized
            .iter()
            .enumerate()
            .map(|(z, row)| {
                row.iter()
                    .filter(|&&(y, w)| w > 0.0 && (y as usize) > z)
                    .count()
            })
            .sum();
        let t2 = self.type2.iter().map(Vec::len).sum::<usize>() / 2;
        (t1, t2)
    }
}

/// Builds `G(t)` (or `G'(t)` for `Type1Only`) over the given net.
///
/// Each cell is sampled by rejection through `assign_cell` from the box
/// around its net point; every accepted sample `u` contributes
/// `mu(U_z)/n_accepted` to `w_s(z, owner(s u))`. Cells whose sampling budget
/// is exhausted keep only type-2 edges and are reported as warnings.
pub fn build_graph(
    net: &Net,
    action: &Action,
    n_per_cell: usize,
    seed: u64,
    variant: Variant,
) -> Result<WarpedGraph> {
    if net.space() != action.space() {
        return Err(Error::input("net and action are over different spaces"));
    }
    if n_per_cell < 30 {
        return Err(Error::input("n_per_cell must be at least 30"));
    }
    if net.cell_measure.len() != net.len() {
        return Err(Error::input(
            "net has no cell measures; run estimate_cell_measures first",
        ));
    }
    let space = *net.space();
    let n = net.len();
    let gens = action.generator_count();
    let t = net.t();

    struct CellSample {
        rows: Vec<BTreeMap<u32, f64>>,
        accepted: usize,
    }

    let per_cell: Vec<CellSample> = (0..n)
        .into_par_iter()
        .map(|z| {
            let mut rng = substream(seed, "graph-cell", z as u64);
            let zp = *net.point(z as u32);
            let budget = 200 * n_per_cell;
            let mut accepted_pts = Vec::with_capacity(n_per_cell);
            for _ in 0..budget {
                if accepted_pts.len() == n_per_cell {
                    break;
                }
                let u = space.uniform_in_box(&zp, 1.0 / t, &mut rng);
                if net.assign_cell(&u) == z as u32 {
                    accepted_pts.push(u);
                }
            }
            let accepted = accepted_pts.len();
            let mut rows = vec![BTreeMap::new(); gens];
            if accepted > 0 {
                let mass = net.cell_measure[z] / accepted as f64;
                for u in &accepted_pts {
                    for (s, row) in rows.iter_mut().enumerate() {
                        let v = net.assign_cell(&action.apply_fast(s, u));
                        *row.entry(v).or_insert(0.0) += mass;
                    }
                }
            }
            CellSample { rows, accepted }
        })
        .collect();

    let mut warnings = Vec::new();
    for (z, cs) in per_cell.iter().enumerate() {
        if cs.accepted == 0 {
            warnings.push(format!(
                "cell {z}: no samples accepted within budget; cell keeps only type-2 edges"
            ));
        } else if cs.accepted < n_per_cell {
            warnings.push(format!(
                "cell {z}: only {}/{} samples accepted",
                cs.accepted, n_per_cell
            ));
        }
    }

    let mut weights: Vec<Vec<Vec<(u32, f64)>>> = vec![vec![Vec::new(); n]; gens];
    for (z, cs) in per_cell.into_iter().enumerate() {
        for (s, row) in cs.rows.into_iter().enumerate() {
            weights[s][z] = row.into_iter().collect();
        }
    }

    let type2: Vec<Vec<u32>> = if variant == Variant::Full {
        (0..n)
            .into_par_iter()
            .map(|z| {
                net.index()
                    .within(net.point(z as u32), 3.0 / t)
                    .into_iter()
                    .filter(|&(y, _)| y as usize != z)
                    .map(|(y, _)| y)
                    .collect()
            })
            .collect()
    } else {
        vec![Vec::new(); n]
    };

    let mut graph = WarpedGraph::from_parts(GraphParts {
        t,
        n,
        variant,
        weights,
        type2,
        cell_measure: net.cell_measure.clone(),
        lipschitz: action.lipschitz_constants().to_vec(),
        inverse_index: (0..gens).map(|s| action.inverse_index(s)).collect(),
        formal_gen_count: action.formal_generator_count(),
        n_per_cell,
        seed,
        space_name: space.name(),
    })?;
    graph.warnings = warnings;
    Ok(graph)
}

/// Measured degrees by edge type together with the theoretical bounds
/// `C 8^m` (type 2) and `C (2 L_s + 4)^m` per generator.
#[derive(Clone, Debug)]
pub struct DegreeReport {
    pub max_degree: usize,
    pub mean_degree: f64,
    pub max_type2: usize,
    pub mean_type2: f64,
    pub per_gen_max: Vec<usize>,
    pub bound_type2: f64,
    pub bound_per_gen: Vec<f64>,
    pub bound_total: f64,
    pub violation: bool,
}

pub fn degree_report(
    graph: &WarpedGraph,
    ahlfors: &AhlforsEstimate,
    lipschitz: &[f64],
) -> Result<DegreeReport> {
    if lipschitz.len() != graph.gen_count() {
        return Err(Error::input("lipschitz constants do not match generators"));
    }
    let n = graph.n();
    let union = graph.union_simple();
    let max_degree = union.max_degree();
    let mean_degree =
        (0..n).map(|v| union.degree(v as u32)).sum::<usize>() as f64 / n.max(1) as f64;
    let max_type2 = graph
        .type2_neighbors()
        .iter()
        .map(Vec::len)
        .max()
        .unwrap_or(0);
    let mean_type2 =
        graph.type2_neighbors().iter().map(Vec::len).sum::<usize>() as f64 / n.max(1) as f64;
    let per_gen_max: Vec<usize> = (0..graph.gen_count())
        .map(|s| {
            graph
                .type1_neighbors(s)
                .iter()
                .map(Vec::len)
                .max()
                .unwrap_or(0)
        })
        .collect();

    let bound_type2 = ahlfors.big_c * 8f64.powf(ahlfors.m);
    let bound_per_gen: Vec<f64> = lipschitz
        .iter()
        .map(|&l| ahlfors.big_c * (2.0 * l + 4.0).powf(ahlfors.m))
        .collect();
    let bound_total = bound_type2 + bound_per_gen.iter().sum::<f64>();
    let violation = max_type2 as f64 > bound_type2
        || per_gen_max
            .iter()
            .zip(&bound_per_gen)
            .any(|(&d, &b)| d as f64 > b)
        || max_degree as f64 > bound_total;
    Ok(DegreeReport {
        max_degree,
        mean_degree,
        max_type2,
        mean_type2,
        per_gen_max,
        bound_type2,
        bound_per_gen,
        bound_total,
        violation,
    })
}

/// Shortest-path estimator for the warped metric at one level.
///
/// An auxiliary net at resolution `1/(rho t)` carries metric edges of weight
/// `t d(x, y)` between fine-net points within `3/(rho t)` and unit-weight
/// warp edges from each fine-net point to the owner of its generator images.
/// Any path realizes a legal chain, so the estimate upper-bounds the warped
/// distance and converges to it as `rho` grows.
pub struct WarpedDistanceField {
    t: f64,
    rho: f64,
    fine: Net,
    adj: Vec<Vec<(u32, f64)>>,
    pub warnings: Vec<String>,
}

pub fn build_field(action: &Action, t: f64, rho: f64, seed: u64) -> Result<WarpedDistanceField> {
    if !(rho >= 4.0) {
        return Err(Error::input("field resolution rho must be >= 4"));
    }
    if !(t >= 1.0) {
        return Err(Error::input("level t must be >= 1"));
    }
    let space = *action.space();
    let fine = build_net(space, rho * t, seed, &NetParams::default())?;
    let warnings = fine.warnings.clone();
    let m = fine.len();
    let connect = 3.0 / (rho * t);
    let adj: Vec<Vec<(u32, f64)>> = (0..m)
        .into_par_iter()
        .map(|z| {
            let zp = fine.point(z as u32);
            let mut out: Vec<(u32, f64)> = fine
                .index()
                .within(zp, connect)
                .into_iter()
                .filter(|&(y, _)| y as usize != z)
                .map(|(y, d)| (y, t * d))
                .collect();
            for s in 0..action.generator_count() {
                let v = fine.assign_cell(&action.apply_fast(s, zp));
                if v as usize != z {
                    out.push((v, 1.0));
                }
            }
            out
        })
        .collect();
    Ok(WarpedDistanceField {
        t,
        rho,
        fine,
        adj,
        warnings,
    })
}

impl WarpedDistanceField {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn fine_net(&self) -> &Net {
        &self.fine
    }

    fn dijkstra(&self, src: u32, target: Option<u32>) -> Vec<f64> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = std::collections::BinaryHeap::new();
        dist[src as usize] = 0.0;
        heap.push(HeapEntry { d: 0.0, v: src });
        while let Some(HeapEntry { d, v }) = heap.pop() {
            if d > dist[v as usize] {
                continue;
            }
            if target == Some(v) {
                break;
            }
            for &(u, w) in &self.adj[v as usize] {
                let nd = d + w;
                if nd < dist[u as usize] {
                    dist[u as usize] = nd;
                    heap.push(HeapEntry { d: nd, v: u });
                }
            }
        }
        dist
    }

    /// Estimated warped distance between the levels of `x` and `y`:
    /// shortest path from owner node to owner node.
    pub fn warped_distance(&self, x: &Point, y: &Point) -> Result<f64> {
        let src = self.fine.assign_cell(x);
        let tgt = self.fine.assign_cell(y);
        let d = self.dijkstra(src, Some(tgt))[tgt as usize];
        if !d.is_finite() {
            return Err(Error::Internal(
                "auxiliary graph disconnected; increase rho".into(),
            ));
        }
        Ok(d)
    }

    /// All-target distances from the owner node of `x`.
    pub fn distances_from(&self, x: &Point) -> Vec<f64> {
        self.dijkstra(self.fine.assign_cell(x), None)
    }
}

struct HeapEntry {
    d: f64,
    v: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.v == other.v
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // min-heap on distance, then on vertex id for determinism
        other
            .d
            .total_cmp(&self.d)
            .then_with(|| other.v.cmp(&self.v))
    }
}

/// Comparison of graph distance against the estimated warped distance on
/// sampled vertex pairs. Violations are reported, not thrown.
#[derive(Clone, Debug)]
pub struct BiLipschitzReport {
    pub pairs: usize,
    pub slack: f64,
    /// count of pairs with `d_hat > 3 d_G + slack`
    pub violations_forward: usize,
    /// count of pairs with `d_G > 2 ceil(d_hat) + slack`
    pub violations_backward: usize,
    /// worst `d_hat - 3 d_G` over sampled pairs
    pub worst_forward_excess: f64,
    /// worst `d_G - 2 ceil(d_hat)` over sampled pairs
    pub worst_backward_excess: f64,
}

pub fn bilipschitz_check(
    graph: &WarpedGraph,
    net: &Net,
    field: &WarpedDistanceField,
    n_pairs: usize,
    seed: u64,
    slack: f64,
) -> Result<BiLipschitzReport> {
    if graph.n() != net.len() {
        return Err(Error::input("graph and net sizes differ"));
    }
    if (graph.t() - field.t()).abs() > 1e-9 {
        return Err(Error::input("graph and field are at different levels"));
    }
    let union = graph.union_simple();
    let n = graph.n() as u32;
    let mut rng = substream(seed, "bilip", 0);
    let mut by_src: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for _ in 0..n_pairs {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        by_src.entry(a).or_default().push(b);
    }
    let mut report = BiLipschitzReport {
        pairs: 0,
        slack,
        violations_forward: 0,
        violations_backward: 0,
        worst_forward_excess: f64::NEG_INFINITY,
        worst_backward_excess: f64::NEG_INFINITY,
    };
    for (&a, targets) in &by_src {
        let hops = union.bfs_distances(a);
        let dhat_all = field.distances_from(net.point(a));
        for &b in targets {
            let dg = hops[b as usize];
            if dg == u32::MAX {
                return Err(Error::input("union graph is disconnected"));
            }
            let tgt = field.fine_net().assign_cell(net.point(b));
            let dhat = dhat_all[tgt as usize];
            if !dhat.is_finite() {
                return Err(Error::Internal("auxiliary graph disconnected".into()));
            }
            let dg = dg as f64;
            report.pairs += 1;
            let fwd = dhat - 3.0 * dg;
            let bwd = dg - 2.0 * dhat.ceil();
            report.worst_forward_excess = report.worst_forward_excess.max(fwd);
            report.worst_backward_excess = report.worst_backward_excess.max(bwd);
            if fwd > slack {
                report.violations_forward += 1;
            }
            if bwd > slack {
                report.violations_backward += 1;
            }
        }
    }
    Ok(report)
}

/// Tab-separated edge list `src dst type gen weight`; diagonal mass is kept
/// as type-1 self rows so the loader reconstructs the full kernel.
pub fn write_graph_tsv(graph: &WarpedGraph, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# space\t{}", graph.space_name)?;
    writeln!(w, "# t\t{}", graph.t)?;
    writeln!(w, "# n\t{}", graph.n)?;
    writeln!(w, "# variant\t{}", graph.variant.name())?;
    writeln!(w, "# formal_gen_count\t{}", graph.formal_gen_count)?;
    writeln!(w, "# n_per_cell\t{}", graph.n_per_cell)?;
    writeln!(w, "# seed\t{}", graph.seed)?;
    let lip: Vec<String> = graph.lipschitz.iter().map(|l| l.to_string()).collect();
    writeln!(w, "# lipschitz\t{}", lip.join(","))?;
    let inv: Vec<String> = graph.inverse_index.iter().map(|i| i.to_string()).collect();
    writeln!(w, "# inverse_index\t{}", inv.join(","))?;
    for (s, rows) in graph.weights.iter().enumerate() {
        for (z, row) in rows.iter().enumerate() {
            for &(y, weight) in row {
                writeln!(w, "{z}\t{y}\t1\t{s}\t{weight}")?;
            }
        }
    }
    for (z, nbrs) in graph.type2.iter().enumerate() {
        for &y in nbrs {
            if (z as u32) < y {
                writeln!(w, "{z}\t{y}\t2\t-1\t1")?;
            }
        }
    }
    Ok(())
}

pub fn read_graph_tsv(path: &Path) -> Result<WarpedGraph> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut t = None;
    let mut n = None;
    let mut variant = Variant::Full;
    let mut formal = 0usize;
    let mut n_per_cell = 0usize;
    let mut seed = 0u64;
    let mut space_name = String::new();
    let mut lipschitz = Vec::new();
    let mut inverse_index = Vec::new();
    let mut t1: Vec<(usize, u32, u32, f64)> = Vec::new();
    let mut t2: Vec<(u32, u32)> = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let mut it = rest.split('\t');
            match (it.next(), it.next()) {
                (Some("t"), Some(v)) => t = v.parse().ok(),
                (Some("n"), Some(v)) => n = v.parse().ok(),
                (Some("variant"), Some(v)) => variant = Variant::parse(v)?,
                (Some("formal_gen_count"), Some(v)) => formal = v.parse().unwrap_or(0),
                (Some("n_per_cell"), Some(v)) => n_per_cell = v.parse().unwrap_or(0),
                (Some("seed"), Some(v)) => seed = v.parse().unwrap_or(0),
                (Some("space"), Some(v)) => space_name = v.to_string(),
                (Some("lipschitz"), Some(v)) => {
                    lipschitz = v
                        .split(',')
                        .map(|x| x.parse::<f64>().map_err(|e| Error::input(e.to_string())))
                        .collect::<Result<_>>()?
                }
                (Some("inverse_index"), Some(v)) => {
                    inverse_index = v
                        .split(',')
                        .map(|x| x.parse::<usize>().map_err(|e| Error::input(e.to_string())))
                        .collect::<Result<_>>()?
                }
                _ => {}
            }
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::input(format!("malformed graph line: {line}")));
        }
        let src: u32 = f[0].parse().map_err(|_| Error::input("bad src"))?;
        let dst: u32 = f[1].parse().map_err(|_| Error::input("bad dst"))?;
        match f[2] {
            "1" => {
                let gen: usize = f[3].parse().map_err(|_| Error::input("bad gen"))?;
                let weight: f64 = f[4].parse().map_err(|_| Error::input("bad weight"))?;
                t1.push((gen, src, dst, weight));
            }
            "2" => t2.push((src, dst)),
            other => return Err(Error::input(format!("unknown edge type {other}"))),
        }
    }
    let n = n.ok_or_else(|| Error::input("graph file missing n header"))?;
    let t = t.ok_or_else(|| Error::input("graph file missing t header"))?;
    let gens = lipschitz.len();
    let mut weights = vec![vec![Vec::new(); n]; gens];
    for (g, src, dst, w) in t1 {
        if g >= gens {
            return Err(Error::input("generator id out of range in graph file"));
        }
        weights[g][src as usize].push((dst, w));
    }
    let mut type2 = vec![Vec::new(); n];
    for (src, dst) in t2 {
        type2[src as usize].push(dst);
        type2[dst as usize].push(src);
    }
    for row in &mut type2 {
        row.sort_unstable();
    }
    WarpedGraph::from_parts(GraphParts {
        t,
        n,
        variant,
        weights,
        type2,
        cell_measure: Vec::new(),
        lipschitz,
        inverse_index,
        formal_gen_count: formal,
        n_per_cell,
        seed,
        space_name,
    })
}

/// DOT rendering for small graphs.
pub fn write_graph_dot(graph: &WarpedGraph, path: &Path) -> Result<()> {
    if graph.n() > 500 {
        return Err(Error::input("DOT export is limited to 500 vertices"));
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "graph level_t{} {{", graph.t.round() as i64)?;
    for (z, row) in graph.symmetrized.iter().enumerate() {
        for &(y, weight) in row {
            if weight > 0.0 && (z as u32) < y {
                writeln!(w, "  {z} -- {y} [label=\"{weight:.4}\"];")?;
            }
        }
    }
    if graph.variant == Variant::Full {
        for (z, nbrs) in graph.type2.iter().enumerate() {
            for &y in nbrs {
                if (z as u32) < y {
                    writeln!(w, "  {z} -- {y} [style=dashed];")?;
                }
            }
        }
    }
    writeln!(w, "}}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{default_radii, estimate_cell_measures, verify_ahlfors};
    use crate::spaces::{Generator, Space};

    fn quarter_net() -> Net {
        let c = Space::circle();
        let pts = vec![
            Point::new(&[0.0]).unwrap(),
            Point::new(&[0.25]).unwrap(),
            Point::new(&[0.5]).unwrap(),
            Point::new(&[0.75]).unwrap(),
        ];
        let net = Net::from_points(c, 4.0, pts).unwrap();
        let est = estimate_cell_measures(&net, 20_000, 3).unwrap();
        net.with_measures(est)
    }

    #[test]
    fn identity_action_has_no_offdiagonal_type1() {
        let net = quarter_net();
        let action = Action::new(Space::circle(), vec![Generator::Identity]).unwrap();
        let g = build_graph(&net, &action, 60, 5, Variant::Full).unwrap();
        let (t1, t2) = g.edge_counts();
        assert_eq!(t1, 0, "identity should only produce diagonal mass");
        assert!(t2 > 0);
        // graph reduces to the 3/t relation
        let union = g.union_simple();
        for (z, nbrs) in g.type2_neighbors().iter().enumerate() {
            assert_eq!(union.neighbors(z as u32), &nbrs[..]);
        }
    }

    #[test]
    fn half_rotation_pairs_antipodal_cells() {
        // cells are arcs around 0, 1/4, 1/2, 3/4; rotation by 1/2 maps each
        // arc exactly onto its antipode
        let net = quarter_net();
        let action = Action::new(
            Space::circle(),
            vec![Generator::Rotation { shift: vec![0.5] }],
        )
        .unwrap();
        let g = build_graph(&net, &action, 60, 7, Variant::Type1Only).unwrap();
        let nbrs = g.type1_neighbors(0);
        assert_eq!(nbrs[0], vec![2]);
        assert_eq!(nbrs[1], vec![3]);
        assert_eq!(nbrs[2], vec![0]);
        assert_eq!(nbrs[3], vec![1]);
    }

    #[test]
    fn mass_is_conserved_and_w_symmetric() {
        let t2s = Space::flat_torus(2).unwrap();
        let net = build_net(t2s, 6.0, 11, &NetParams::default()).unwrap();
        let est = estimate_cell_measures(&net, 20_000, 13).unwrap();
        let net = net.with_measures(est);
        let action = Action::new(
            t2s,
            vec![Generator::Automorphism {
                matrix: vec![1, 2, 0, 1],
            }],
        )
        .unwrap();
        let g = build_graph(&net, &action, 80, 17, Variant::Full).unwrap();
        assert!(g.mass_conservation_max_error() < 1e-12);
        // exact symmetry of the stored symmetrized matrix
        let rows = g.symmetrized_rows();
        for (z, row) in rows.iter().enumerate() {
            for &(y, w) in row {
                let back = rows[y as usize]
                    .iter()
                    .find(|&&(x, _)| x as usize == z)
                    .map(|&(_, w)| w)
                    .unwrap();
                assert!((w - back).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn expansion_is_monotone_under_edge_addition() {
        // the full graph is an edge superset of the type-1-only variant over
        // the same net, so lambda2 (hence eta(2,1)) cannot drop
        let t2s = Space::flat_torus(2).unwrap();
        let net = build_net(t2s, 7.0, 83, &NetParams::default()).unwrap();
        let est = estimate_cell_measures(&net, 20_000, 87).unwrap();
        let net = net.with_measures(est);
        let action = Action::new(
            t2s,
            vec![Generator::Automorphism {
                matrix: vec![1, 2, 0, 1],
            }],
        )
        .unwrap();
        let full = build_graph(&net, &action, 60, 91, Variant::Full).unwrap();
        let prime = build_graph(&net, &action, 60, 91, Variant::Type1Only).unwrap();
        let l2_full = crate::spectra::lambda2(&full.union_simple()).unwrap().value;
        let l2_prime = crate::spectra::lambda2(&prime.union_simple())
            .unwrap()
            .value;
        assert!(
            l2_full >= l2_prime - 1e-9,
            "lambda2 {l2_full} < type-1-only {l2_prime}"
        );
        let e_full = crate::spectra::eta(&full.union_simple(), 2.0, 1, 4, 3)
            .unwrap()
            .value;
        let e_prime = crate::spectra::eta(&prime.union_simple(), 2.0, 1, 4, 3)
            .unwrap()
            .value;
        assert!(
            e_full >= e_prime - 1e-6,
            "eta {e_full} < type-1-only {e_prime}"
        );
    }

    #[test]
    fn adjacent_vertices_are_warped_close() {
        // a graph edge moves the warped distance by at most 3 (plus the
        // discretization slack of the field)
        let t2s = Space::flat_torus(2).unwrap();
        let net = build_net(t2s, 6.0, 93, &NetParams::default()).unwrap();
        let est = estimate_cell_measures(&net, 20_000, 97).unwrap();
        let net = net.with_measures(est);
        let action = Action::new(
            t2s,
            vec![Generator::Automorphism {
                matrix: vec![1, 2, 0, 1],
            }],
        )
        .unwrap();
        let g = build_graph(&net, &action, 60, 101, Variant::Full).unwrap();
        let field = build_field(&action, net.t(), 8.0, 103).unwrap();
        let union = g.union_simple();
        let mut checked = 0;
        for z in 0..net.len().min(12) {
            let from = net.point(z as u32);
            let dhat_all = field.distances_from(from);
            for &y in union.neighbors(z as u32) {
                let tgt = field.fine_net().assign_cell(net.point(y));
                let dhat = dhat_all[tgt as usize];
                assert!(dhat <= 3.0 + 2.0, "edge ({z},{y}): d_hat = {dhat}");
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn type1_only_edges_are_subset_of_full() {
        let t2s = Space::flat_torus(2).unwrap();
        let net = build_net(t2s, 6.0, 19, &NetParams::default()).unwrap();
        let est = estimate_cell_measures(&net, 20_000, 23).unwrap();
        let net = net.with_measures(est);
        let action = Action::new(
            t2s,
            vec![Generator::Automorphism {
                matrix: vec![1, 2, 0, 1],
            }],
        )
        .unwrap();
        let full = build_graph(&net, &action, 60, 29, Variant::Full).unwrap();
        let prime = build_graph(&net, &action, 60, 29, Variant::Type1Only).unwrap();
        let full_edges: std::collections::BTreeSet<_> = full.union_simple().edges().collect();
        let prime_edges: std::collections::BTreeSet<_> = prime.union_simple().edges().collect();
        assert!(prime_edges.is_subset(&full_edges));
        assert!(prime_edges.len() < full_edges.len());
    }

    #[test]
    fn type2_relation_is_exact_distance_test() {
        let t2s = Space::flat_torus(2).unwrap();
        let net = build_net(t2s, 5.0, 31, &NetParams::default()).unwrap();
        let est = estimate_cell_measures(&net, 10_000, 3).unwrap();
        let net = net.with_measures(est);
        let action = Action::new(t2s, vec![Generator::Identity]).unwrap();
        let g = build_graph(&net, &action, 40, 1, Variant::Full).unwrap();
        for z in 0..net.len() {
            for y in 0..net.len() {
                if z == y {
                    continue;
                }
                let d = t2s.dist(net.point(z as u32), net.point(y as u32));
                let related = g.type2_neighbors()[z].contains(&(y as u32));
                assert_eq!(
                    related,
                    d <= 3.0 / net.t(),
                    "pair ({z},{y}) at distance {d}"
                );
            }
        }
    }

    #[test]
    fn single_vertex_graph_has_zero_degrees() {
        let t2s = Space::flat_torus(2).unwrap();
        let net = build_net(t2s, 1.0, 2, &NetParams::default()).unwrap();
        let est = estimate_cell_measures(&net, 100, 5).unwrap();
        let net = net.with_measures(est);
        let action = Action::new(t2s, vec![Generator::Identity]).unwrap();
        let g = build_graph(&net, &action, 30, 3, Variant::Full).unwrap();
        let ahl = verify_ahlfors(t2s, 8, &default_radii(&t2s, 0.1, 0.5, 4), 2000, 7).unwrap();
        let report = degree_report(&g, &ahl, g.lipschitz()).unwrap();
        assert_eq!(report.max_degree, 0);
        assert_eq!(report.max_type2, 0);
        assert!(!report.violation);
    }

    #[test]
    fn circle_rips_degrees_obey_arc_count_and_bound() {
        let c = Space::circle();
        let net = build_net(c, 8.0, 3, &NetParams::default()).unwrap();
        let est = estimate_cell_measures(&net, 10_000, 3).unwrap();
        let net = net.with_measures(est);
        let action = Action::new(c, vec![Generator::Identity]).unwrap();
        let g = build_graph(&net, &action, 30, 3, Variant::Full).unwrap();
        let ahl = verify_ahlfors(c, 24, &default_radii(&c, 0.05, 0.7, 8), 4000, 9).unwrap();
        let report = degree_report(&g, &ahl, g.lipschitz()).unwrap();
        // arc-counting oracle: neighbors within 3/t on a max 1/t-separated
        // circle net number between 2 and 6
        assert!(
            (2..=6).contains(&report.max_type2),
            "type-2 max degree {}",
            report.max_type2
        );
        for z in 0..net.len() {
            let deg = g.type2_neighbors()[z].len();
            assert!((2..=6).contains(&deg), "vertex {z} degree {deg}");
        }
        assert!(report.max_type2 as f64 <= report.bound_type2);
        assert!(!report.violation);
    }

    #[test]
    fn shear_graph_degrees_within_measured_bound() {
        let t2s = Space::flat_torus(2).unwrap();
        let net = build_net(t2s, 8.0, 41, &NetParams::default()).unwrap();
        let est = estimate_cell_measures(&net, 40_000, 43).unwrap();
        let net = net.with_measures(est);
        let action = Action::new(
            t2s,
            vec![
                Generator::Automorphism {
                    matrix: vec![1, 2, 0, 1],
                },
                Generator::Automorphism {
                    matrix: vec![1, 0, 2, 1],
                },
            ],
        )
        .unwrap();
        let g = build_graph(&net, &action, 120, 47, Variant::Full).unwrap();
        let ahl = verify_ahlfors(t2s, 24, &default_radii(&t2s, 0.05, 0.6, 10), 4000, 53).unwrap();
        let report = degree_report(&g, &ahl, g.lipschitz()).unwrap();
        assert!(!report.violation, "{report:?}");
    }

    #[test]
    fn field_without_generators_tracks_scaled_metric() {
        let c = Space::circle();
        let action = Action::new(c, vec![]).unwrap();
        let t = 4.0;
        let rho = 8.0;
        let field = build_field(&action, t, rho, 5).unwrap();
        let mut rng = crate::rng::substream(5, "field-test", 0);
        for _ in 0..50 {
            let x = c.uniform(&mut rng);
            let y = c.uniform(&mut rng);
            let d = field.warped_distance(&x, &y).unwrap();
            let exact = t * c.dist(&x, &y);
            // snapping costs at most a couple of fine-net hops
            assert!(d <= exact * 1.25 + 0.5, "d = {d}, t*dist = {exact}");
            assert!(d + 0.5 >= exact * 0.75, "d = {d}, t*dist = {exact}");
        }
    }

    #[test]
    fn warp_edge_realizes_generator_jump() {
        let c = Space::circle();
        let alpha = 2f64.sqrt() - 1.0;
        let action = Action::new(c, vec![Generator::Rotation { shift: vec![alpha] }]).unwrap();
        let t = 8.0;
        let field = build_field(&action, t, 8.0, 7).unwrap();
        let x = Point::new(&[0.0]).unwrap();
        let sx = action.apply(0, &x).unwrap();
        let d = field.warped_distance(&x, &sx).unwrap();
        assert!(
            d <= 1.0 + 0.5,
            "single warp edge should cost about 1, got {d}"
        );
        // k-step orbit: chains of k warp edges bound the distance
        for k in 2..=4u32 {
            let mut y = x;
            for _ in 0..k {
                y = action.apply(0, &y).unwrap();
            }
            let dk = field.warped_distance(&x, &y).unwrap();
            assert!(
                dk <= k as f64 + 1.0,
                "orbit distance {dk} exceeds {k} + slack"
            );
        }
    }

    #[test]
    fn bilipschitz_bounds_hold_on_sampled_pairs() {
        let t2s = Space::flat_torus(2).unwrap();
        let net = build_net(t2s, 6.0, 61, &NetParams::default()).unwrap();
        let est = estimate_cell_measures(&net, 20_000, 67).unwrap();
        let net = net.with_measures(est);
        let action = Action::new(
            t2s,
            vec![Generator::Automorphism {
                matrix: vec![1, 2, 0, 1],
            }],
        )
        .unwrap();
        let g = build_graph(&net, &action, 60, 71, Variant::Full).unwrap();
        let field = build_field(&action, net.t(), 8.0, 73).unwrap();
        let report = bilipschitz_check(&g, &net, &field, 60, 79, 2.0).unwrap();
        assert_eq!(report.violations_forward, 0, "{report:?}");
        assert_eq!(report.violations_backward, 0, "{report:?}");
    }

    #[test]
    fn graph_tsv_roundtrip() {
        let net = quarter_net();
        let action = Action::new(
            Space::circle(),
            vec![Generator::Rotation { shift: vec![0.5] }],
        )
        .unwrap();
        let g = build_graph(&net, &action, 60, 7, Variant::Full).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsv");
        write_graph_tsv(&g, &path).unwrap();
        let back = read_graph_tsv(&path).unwrap();
        assert_eq!(back.n(), g.n());
        assert_eq!(back.gen_count(), g.gen_count());
        assert_eq!(back.formal_gen_count(), g.formal_gen_count());
        for s in 0..g.gen_count() {
            assert_eq!(back.raw_weights(s), g.raw_weights(s));
        }
        assert_eq!(back.type2_neighbors(), g.type2_neighbors());
    }
}
