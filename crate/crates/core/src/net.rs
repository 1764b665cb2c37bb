//! 1/t-separated maximal nets, their Voronoi partitions, Monte-Carlo cell
//! measures, and Ahlfors-regularity constants.
//!
//! The net is grown greedily from uniform candidates; a candidate is kept iff
//! it is at least 1/t from every kept point, and construction stops once a
//! long enough rejection streak certifies maximality probabilistically.
//! Voronoi cells of such a net satisfy `B(z, 1/2t) ⊆ U_z ⊆ B(z, 1/t)`:
//! separation gives the inner ball, maximality the outer.

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::spaces::{Point, Space};
use rayon::prelude::*;
use std::io::{BufRead, Write};
use std::path::Path;

/// Grid-bucket spatial index over `[0,1)^d` with wrap-around.
///
/// Bucket width is `1/cells >= 1/resolution`, so nearest and range queries
/// touch O(1) buckets for nets at separation `1/resolution`.
pub struct GridIndex {
    space: Space,
    cells: usize,
    buckets: Vec<Vec<u32>>,
    points: Vec<Point>,
}

impl GridIndex {
    pub fn new(space: Space, resolution: f64) -> GridIndex {
        let cells = (resolution.floor() as usize).max(1);
        GridIndex {
            space,
            cells,
            buckets: vec![Vec::new(); cells.pow(space.dim() as u32)],
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, id: u32) -> &Point {
        &self.points[id as usize]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn bucket_coords(&self, p: &Point) -> [usize; crate::spaces::MAX_DIM] {
        let mut out = [0usize; crate::spaces::MAX_DIM];
        for (i, &c) in p.coords().iter().enumerate() {
            out[i] = ((c * self.cells as f64) as usize).min(self.cells - 1);
        }
        out
    }

    fn bucket_index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        for &c in coords.iter().take(self.space.dim()) {
            idx = idx * self.cells + c;
        }
        idx
    }

    pub fn insert(&mut self, p: Point) -> u32 {
        let id = self.points.len() as u32;
        let bc = self.bucket_coords(&p);
        let bi = self.bucket_index(&bc[..self.space.dim()]);
        self.buckets[bi].push(id);
        self.points.push(p);
        id
    }

    /// Visits every bucket at Chebyshev ring `k` around `base`, each exactly
    /// once under wrap-around.
    fn for_each_ring_bucket(&self, base: &[usize], k: usize, mut f: impl FnMut(&Vec<u32>)) {
        let dim = self.space.dim();
        let cells = self.cells as i64;
        let mut offsets = [0i64; crate::spaces::MAX_DIM];
        self.ring_rec(base, k, 0, dim, cells, &mut offsets, &mut f);
    }

    #[allow(clippy::too_many_arguments)]
    fn ring_rec(
        &self,
        base: &[usize],
        k: usize,
        axis: usize,
        dim: usize,
        cells: i64,
        offsets: &mut [i64; crate::spaces::MAX_DIM],
        f: &mut impl FnMut(&Vec<u32>),
    ) {
        if axis == dim {
            if offsets[..dim]
                .iter()
                .map(|o| o.unsigned_abs() as usize)
                .max()
                != Some(k)
            {
                return;
            }
            let mut coords = [0usize; crate::spaces::MAX_DIM];
            for i in 0..dim {
                coords[i] = ((base[i] as i64 + offsets[i]).rem_euclid(cells)) as usize;
            }
            f(&self.buckets[self.bucket_index(&coords[..dim])]);
            return;
        }
        let k = k as i64;
        for o in -k..=k {
            // on an even-sized cyclic grid, offset -k and +k alias at k = cells/2
            if 2 * k == cells && o == k {
                continue;
            }
            offsets[axis] = o;
            self.ring_rec(base, k as usize, axis + 1, dim, cells, offsets, f);
        }
    }

    fn max_ring(&self) -> usize {
        self.cells / 2
    }

    /// True iff some stored point lies strictly within `r` of `q`.
    pub fn has_within(&self, q: &Point, r: f64) -> bool {
        let base = self.bucket_coords(q);
        let width = 1.0 / self.cells as f64;
        let k_max = self.max_ring().min((r / width) as usize + 1);
        for k in 0..=k_max {
            let mut hit = false;
            self.for_each_ring_bucket(&base[..self.space.dim()], k, |bucket| {
                if !hit {
                    for &id in bucket {
                        if self.space.dist(q, &self.points[id as usize]) < r {
                            hit = true;
                            break;
                        }
                    }
                }
            });
            if hit {
                return true;
            }
        }
        false
    }

    /// Nearest stored point; exact ties resolved to the lowest id.
    pub fn nearest(&self, q: &Point) -> (u32, f64) {
        assert!(!self.points.is_empty(), "nearest on empty index");
        let base = self.bucket_coords(q);
        let width = 1.0 / self.cells as f64;
        let mut best_id = u32::MAX;
        let mut best = f64::INFINITY;
        for k in 0..=self.max_ring() {
            self.for_each_ring_bucket(&base[..self.space.dim()], k, |bucket| {
                for &id in bucket {
                    let d = self.space.dist(q, &self.points[id as usize]);
                    if d < best || (d == best && id < best_id) {
                        best = d;
                        best_id = id;
                    }
                }
            });
            // any point in ring >= k+1 is at distance >= k*width, which
            // cannot beat or tie a best strictly below that
            if best < k as f64 * width {
                break;
            }
        }
        (best_id, best)
    }

    /// All stored points within distance `r` (inclusive), sorted by id.
    pub fn within(&self, q: &Point, r: f64) -> Vec<(u32, f64)> {
        let base = self.bucket_coords(q);
        let width = 1.0 / self.cells as f64;
        let k_max = self.max_ring().min((r / width) as usize + 1);
        let mut out = Vec::new();
        for k in 0..=k_max {
            self.for_each_ring_bucket(&base[..self.space.dim()], k, |bucket| {
                for &id in bucket {
                    let d = self.space.dist(q, &self.points[id as usize]);
                    if d <= r {
                        out.push((id, d));
                    }
                }
            });
        }
        out.sort_by_key(|&(id, _)| id);
        out
    }
}

/// Tunables for the greedy net construction.
#[derive(Clone, Copy, Debug)]
pub struct NetParams {
    /// Stop after this many consecutive rejections per kept point.
    pub streak_factor: usize,
    /// Hard cap on total candidates; exhausting it yields a warning, not an
    /// error, carrying the achieved density.
    pub max_candidates: usize,
    /// Sample size for the post-construction density check.
    pub density_check_samples: usize,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams {
            streak_factor: 200,
            max_candidates: 100_000_000,
            density_check_samples: 1000,
        }
    }
}

/// A maximal 1/t-separated point set with Voronoi cell assignment and
/// (optionally) estimated cell measures.
pub struct Net {
    space: Space,
    t: f64,
    index: GridIndex,
    pub cell_measure: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl Net {
    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        self.index.points()
    }

    pub fn point(&self, id: u32) -> &Point {
        self.index.point(id)
    }

    pub fn index(&self) -> &GridIndex {
        &self.index
    }

    /// Voronoi owner of `x`: the nearest net point, lowest id on exact ties.
    pub fn assign_cell(&self, x: &Point) -> u32 {
        self.index.nearest(x).0
    }

    /// Builds a net from given points, validating separation (used by tests
    /// and by the TSV loader). Density is the caller's responsibility.
    pub fn from_points(space: Space, t: f64, points: Vec<Point>) -> Result<Net> {
        if t < 1.0 {
            return Err(Error::input(format!("level t = {t} must be >= 1")));
        }
        let mut index = GridIndex::new(space, t);
        for (i, p) in points.iter().enumerate() {
            if p.dim() != space.dim() {
                return Err(Error::input("net point dimension mismatch"));
            }
            if index.has_within(p, 1.0 / t) {
                return Err(Error::input(format!(
                    "separation violated: point {i} is within 1/t of an earlier point"
                )));
            }
            index.insert(*p);
        }
        if index.is_empty() {
            return Err(Error::input("net must contain at least one point"));
        }
        Ok(Net {
            space,
            t,
            index,
            cell_measure: Vec::new(),
            n_samples: 0,
            seed: 0,
            warnings: Vec::new(),
        })
    }
}

/// Greedy maximal construction of a 1/t-separated net.
pub fn build_net(space: Space, t: f64, seed: u64, params: &NetParams) -> Result<Net> {
    if !(t >= 1.0) {
        return Err(Error::input(format!("level t = {t} must be >= 1")));
    }
    let mut rng = substream(seed, "net", 0);
    let mut index = GridIndex::new(space, t);
    let sep = 1.0 / t;
    let mut streak = 0usize;
    let mut candidates = 0usize;
    let mut warnings = Vec::new();
    // alternate greedy filling with a density certificate; a sample that
    // lands farther than 1/t from the net is itself a legal net point, so
    // certificate failures feed back as insertions until the check passes
    'rounds: for round in 0..50 {
        loop {
            let budget = params.streak_factor * index.len().max(1);
            if streak >= budget {
                break;
            }
            if candidates >= params.max_candidates {
                warnings.push(format!(
                    "candidate budget {} exhausted before rejection streak {} (streak reached {})",
                    params.max_candidates, budget, streak
                ));
                break 'rounds;
            }
            candidates += 1;
            let c = space.uniform(&mut rng);
            if index.has_within(&c, sep) {
                streak += 1;
            } else {
                index.insert(c);
                streak = 0;
            }
        }

        let mut worst: Option<(Point, f64)> = None;
        let checks = params.density_check_samples.max(10 * index.len());
        for _ in 0..checks {
            let x = space.uniform(&mut rng);
            let d = index.nearest(&x).1;
            if d > sep && worst.is_none_or(|(_, w)| d > w) {
                worst = Some((x, d));
            }
        }
        match worst {
            None => break,
            Some((x, d)) => {
                index.insert(x);
                streak = 0;
                if round == 49 {
                    warnings.push(format!(
                        "density certificate failed: sampled point at distance {d:.6} > 1/t = {sep:.6} (achieved density {:.3}/t)",
                        d * t
                    ));
                }
            }
        }
    }

    Ok(Net {
        space,
        t,
        index,
        cell_measure: Vec::new(),
        n_samples: 0,
        seed,
        warnings,
    })
}

/// Empirical Voronoi cell measures from `n` uniform samples.
pub struct MeasureEstimate {
    pub measures: Vec<f64>,
    pub floored_cells: Vec<u32>,
    pub n: usize,
}

/// Routes `n` uniform samples through `assign_cell` and returns normalized
/// counts. Cells that receive no samples are floored at `1/(n + #Z)` via
/// additive smoothing (applied to all cells so the total stays exactly 1).
pub fn estimate_cell_measures(net: &Net, n: usize, seed: u64) -> Result<MeasureEstimate> {
    let z = net.len();
    if n < 10 * z {
        return Err(Error::input(format!(
            "measure estimation needs n >= 10 * #Z = {}, got {n}",
            10 * z
        )));
    }
    let chunks = 64usize;
    let per_chunk = n / chunks;
    let remainder = n % chunks;
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, "measures", c as u64);
            let mut counts = vec![0u64; z];
            let m = per_chunk + usize::from(c < remainder);
            for _ in 0..m {
                let x = net.space.uniform(&mut rng);
                counts[net.assign_cell(&x) as usize] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; z],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let floored: Vec<u32> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(i, _)| i as u32)
        .collect();
    let measures: Vec<f64> = if floored.is_empty() {
        counts.iter().map(|&c| c as f64 / n as f64).collect()
    } else {
        counts
            .iter()
            .map(|&c| (c as f64 + 1.0) / (n as f64 + z as f64))
            .collect()
    };
    Ok(MeasureEstimate {
        measures,
        floored_cells: floored,
        n,
    })
}

impl Net {
    /// Attaches estimated cell measures; records a warning for floored cells.
    pub fn with_measures(mut self, est: MeasureEstimate) -> Net {
        if !est.floored_cells.is_empty() {
            self.warnings.push(format!(
                "{} cell(s) received zero samples; measures floored at 1/(n + #Z)",
                est.floored_cells.len()
            ));
        }
        self.cell_measure = est.measures;
        self.n_samples = est.n;
        self
    }
}

/// Two-sided power-law control of ball measures: for every sampled `(y, r)`,
/// `c r^m <= mu(B(y,r)) <= c C r^m` with the constants below.
#[derive(Clone, Debug)]
pub struct AhlforsEstimate {
    pub c: f64,
    pub m: f64,
    pub big_c: f64,
    pub radii: Vec<f64>,
    pub residual: f64,
}

impl AhlforsEstimate {
    /// Cell-measure uniformity constant `K = C * 2^m`.
    pub fn k_hat(&self) -> f64 {
        self.big_c * 2f64.powf(self.m)
    }
}

/// Monte-Carlo ball-measure sampling with a log-log least-squares fit for
/// the exponent `m`; `c` is set to the smallest observed ratio `mu/r^m` so
/// the lower bound holds on every sample, and `C` to the largest ratio
/// relative to that `c`.
pub fn verify_ahlfors(
    space: Space,
    n_centers: usize,
    radii: &[f64],
    n: usize,
    seed: u64,
) -> Result<AhlforsEstimate> {
    if radii.len() < 2 {
        return Err(Error::input("verify_ahlfors requires at least 2 radii"));
    }
    if radii
        .iter()
        .any(|&r| !(r > 0.0 && r <= space.diameter() + 1e-12))
    {
        return Err(Error::input(format!(
            "radii must lie in (0, diameter = {}]",
            space.diameter()
        )));
    }
    if n_centers == 0 || n == 0 {
        return Err(Error::input("n_centers and n must be positive"));
    }

    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);

    // one shared sample set per center, reused across radii
    let ball_measures: Vec<Vec<f64>> = (0..n_centers)
        .into_par_iter()
        .map(|ci| {
            let mut rng = substream(seed, "ahlfors", ci as u64);
            let center = space.uniform(&mut rng);
            let mut dists: Vec<f64> = (0..n)
                .map(|_| {
                    let x = space.uniform(&mut rng);
                    space.dist(&center, &x)
                })
                .collect();
            dists.sort_by(f64::total_cmp);
            radii
                .iter()
                .map(|&r| {
                    let cnt = dists.partition_point(|&d| d <= r);
                    cnt as f64 / n as f64
                })
                .collect()
        })
        .collect();

    // least squares on log mu vs log r, aggregating centers per radius
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (j, &r) in radii.iter().enumerate() {
        let mean: f64 = ball_measures.iter().map(|b| b[j]).sum::<f64>() / n_centers as f64;
        if mean > 0.0 {
            xs.push(r.ln());
            ys.push(mean.ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::input(
            "too few radii with nonzero ball measure; increase n or radii",
        ));
    }
    let k = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let m = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    let intercept = (sy - m * sx) / k;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (m * x + intercept);
            e * e
        })
        .sum::<f64>()
        / k)
        .sqrt();

    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    for b in &ball_measures {
        for (j, &r) in radii.iter().enumerate() {
            if b[j] > 0.0 {
                let ratio = b[j] / r.powf(m);
                min_ratio = min_ratio.min(ratio);
                max_ratio = max_ratio.max(ratio);
            }
        }
    }
    if !(min_ratio > 0.0 && min_ratio.is_finite()) {
        return Err(Error::input("degenerate ball-measure samples"));
    }
    Ok(AhlforsEstimate {
        c: min_ratio,
        m,
        big_c: max_ratio / min_ratio,
        radii,
        residual,
    })
}

/// Log-spaced default radii spanning `[lo, hi] * diameter`.
pub fn default_radii(space: &Space, lo_rel: f64, hi_rel: f64, count: usize) -> Vec<f64> {
    let d = space.diameter();
    let (lo, hi) = (lo_rel * d, hi_rel * d);
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

/// Writes the net as TSV: metadata comments, then one line per vertex with
/// `id  coords...  measure`.
pub fn write_net_tsv(net: &Net, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# space\t{}", net.space.name())?;
    writeln!(w, "# t\t{}", net.t)?;
    writeln!(w, "# seed\t{}", net.seed)?;
    writeln!(w, "# n_samples\t{}", net.n_samples)?;
    for (i, p) in net.points().iter().enumerate() {
        let coords: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
        let m = net.cell_measure.get(i).copied().unwrap_or(f64::NAN);
        writeln!(w, "{i}\t{}\t{m}", coords.join("\t"))?;
    }
    Ok(())
}

pub fn read_net_tsv(path: &Path) -> Result<Net> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut space = None;
    let mut t = None;
    let mut seed = 0u64;
    let mut n_samples = 0usize;
    let mut points = Vec::new();
    let mut measures = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let mut it = rest.split('\t');
            match (it.next(), it.next()) {
                (Some("space"), Some(v)) => space = Some(Space::parse(v)?),
                (Some("t"), Some(v)) => {
                    t = Some(v.parse::<f64>().map_err(|e| Error::input(e.to_string()))?)
                }
                (Some("seed"), Some(v)) => {
                    seed = v
                        .parse()
                        .map_err(|e: std::num::ParseIntError| Error::input(e.to_string()))?
                }
                (Some("n_samples"), Some(v)) => {
                    n_samples = v
                        .parse()
                        .map_err(|e: std::num::ParseIntError| Error::input(e.to_string()))?
                }
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::input(format!("malformed net line: {line}")));
        }
        let coords: Vec<f64> = fields[1..fields.len() - 1]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::input(e.to_string())))
            .collect::<Result<_>>()?;
        let m: f64 = fields[fields.len() - 1]
            .parse()
            .map_err(|e: std::num::ParseFloatError| Error::input(e.to_string()))?;
        points.push(Point::new(&coords)?);
        measures.push(m);
    }
    let space = space.ok_or_else(|| Error::input("net file missing space header"))?;
    let t = t.ok_or_else(|| Error::input("net file missing t header"))?;
    let mut net = Net::from_points(space, t, points)?;
    net.cell_measure = measures;
    net.seed = seed;
    net.n_samples = n_samples;
    Ok(net)
}
