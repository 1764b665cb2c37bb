//! Compact metric measure spaces and Lipschitz group actions on them.
//!
//! Built-in spaces are the circle of circumference 1 and the flat d-torus
//! `[0,1)^d` with the wrapped Euclidean metric and normalized Lebesgue
//! measure. Actions are finite symmetric sets of measure-preserving
//! Lipschitz self-maps: toral automorphisms given by integer matrices of
//! determinant ±1, rotations, and the identity.

use crate::error::{Error, Result};
use crate::rng::substream;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest supported coordinate dimension for built-in spaces.
pub const MAX_DIM: usize = 3;

/// A point of a built-in space, canonically represented in `[0,1)^d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    coords: [f64; MAX_DIM],
    dim: u8,
}

fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can return exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::input(format!(
                "point dimension {} outside supported range 1..={}",
                coords.len(),
                MAX_DIM
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::input("point has non-finite coordinate"));
        }
        let mut arr = [0.0; MAX_DIM];
        for (slot, &c) in arr.iter_mut().zip(coords) {
            *slot = wrap_unit(c);
        }
        Ok(Point {
            coords: arr,
            dim: coords.len() as u8,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    /// Circle of circumference 1 (the 1-torus).
    Circle,
    /// Flat torus `[0,1)^d`, wrapped Euclidean metric.
    FlatTorus,
}

/// A compact geodesic metric measure space with total measure 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Space {
    kind: SpaceKind,
    dim: usize,
}

impl Space {
    pub fn circle() -> Space {
        Space {
            kind: SpaceKind::Circle,
            dim: 1,
        }
    }

    pub fn flat_torus(dim: usize) -> Result<Space> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::config(format!(
                "torus dimension {dim} outside supported range 1..={MAX_DIM}"
            )));
        }
        Ok(Space {
            kind: SpaceKind::FlatTorus,
            dim,
        })
    }

    /// Parses `"circle"` or `"t1"`..`"t3"`.
    pub fn parse(name: &str) -> Result<Space> {
        match name {
            "circle" => Ok(Space::circle()),
            "t1" => Space::flat_torus(1),
            "t2" => Space::flat_torus(2),
            "t3" => Space::flat_torus(3),
            other => Err(Error::config(format!("unknown space '{other}'"))),
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            SpaceKind::Circle => "circle".to_string(),
            SpaceKind::FlatTorus => format!("t{}", self.dim),
        }
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diameter(&self) -> f64 {
        (self.dim as f64).sqrt() / 2.0
    }

    /// Total mass of the (probability) measure.
    pub fn total_measure(&self) -> f64 {
        1.0
    }

    /// Wrapped Euclidean distance. Errors on dimension mismatch.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        if x.dim() != self.dim || y.dim() != self.dim {
            return Err(Error::input(format!(
                "dimension mismatch: space is {}-dimensional, points are {} and {}",
                self.dim,
                x.dim(),
                y.dim()
            )));
        }
        Ok(self.dist(x, y))
    }

    /// Unchecked distance for hot paths; callers validate dimensions once.
    pub(crate) fn dist(&self, x: &Point, y: &Point) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let d = (x.coords[i] - y.coords[i]).abs();
            let d = d.min(1.0 - d);
            acc += d * d;
        }
        acc.sqrt()
    }

    pub fn uniform(&self, rng: &mut impl Rng) -> Point {
        let mut arr = [0.0; MAX_DIM];
        for slot in arr.iter_mut().take(self.dim) {
            *slot = rng.gen::<f64>();
        }
        Point {
            coords: arr,
            dim: self.dim as u8,
        }
    }

    /// Uniform sample from the coordinate box of half-width `h` around
    /// `center`, wrapped. Falls back to a full uniform coordinate when the
    /// box covers the whole circle factor.
    pub fn uniform_in_box(&self, center: &Point, h: f64, rng: &mut impl Rng) -> Point {
        let mut arr = [0.0; MAX_DIM];
        for (slot, &c) in arr.iter_mut().zip(center.coords()) {
            *slot = if 2.0 * h >= 1.0 {
                rng.gen::<f64>()
            } else {
                wrap_unit(c + rng.gen_range(-h..h))
            };
        }
        Point {
            coords: arr,
            dim: self.dim as u8,
        }
    }
}

/// One self-map of a space. Stored in canonical form: all-zero rotations
/// and identity matrices normalize to `Identity`.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Identity,
    /// `x -> x + shift (mod 1)`, an isometry.
    Rotation {
        shift: Vec<f64>,
    },
    /// `x -> A x (mod 1)` for an integer matrix with determinant ±1.
    /// Row-major `dim x dim`.
    Automorphism {
        matrix: Vec<i64>,
    },
}

fn det_i64(m: &[i64], d: usize) -> i64 {
    match d {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => unreachable!("dimension checked at construction"),
    }
}

fn inverse_i64(m: &[i64], d: usize) -> Vec<i64> {
    let det = det_i64(m, d);
    debug_assert!(det == 1 || det == -1);
    match d {
        1 => vec![m[0]], // m[0] = ±1 is its own inverse
        2 => {
            // adjugate / det with det = ±1
            vec![det * m[3], -det * m[1], -det * m[2], det * m[0]]
        }
        3 => {
            let c = |i: usize, j: usize| m[3 * i + j];
            let cof = [
                c(1, 1) * c(2, 2) - c(1, 2) * c(2, 1),
                -(c(1, 0) * c(2, 2) - c(1, 2) * c(2, 0)),
                c(1, 0) * c(2, 1) - c(1, 1) * c(2, 0),
                -(c(0, 1) * c(2, 2) - c(0, 2) * c(2, 1)),
                c(0, 0) * c(2, 2) - c(0, 2) * c(2, 0),
                -(c(0, 0) * c(2, 1) - c(0, 1) * c(2, 0)),
                c(0, 1) * c(1, 2) - c(0, 2) * c(1, 1),
                -(c(0, 0) * c(1, 2) - c(0, 2) * c(1, 0)),
                c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0),
            ];
            // transpose of cofactor matrix, divided by det = ±1
            let mut inv = vec![0i64; 9];
            for i in 0..3 {
                for j in 0..3 {
                    inv[3 * i + j] = det * cof[3 * j + i];
                }
            }
            inv
        }
        _ => unreachable!(),
    }
}

impl Generator {
    /// Map equality with a wrap-aware tolerance on rotation vectors, so the
    /// float round trip `s -> s^{-1} -> s` cannot spawn near-duplicates.
    fn same_map(&self, other: &Generator) -> bool {
        match (self, other) {
            (Generator::Identity, Generator::Identity) => true,
            (Generator::Rotation { shift: a }, Generator::Rotation { shift: b }) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(&x, &y)| {
                        let d = (x - y).abs();
                        d.min(1.0 - d) <= 1e-12
                    })
            }
            (Generator::Automorphism { matrix: a }, Generator::Automorphism { matrix: b }) => {
                a == b
            }
            _ => false,
        }
    }

    fn canonical(self, dim: usize) -> Result<Generator> {
        match self {
            Generator::Identity => Ok(Generator::Identity),
            Generator::Rotation { shift } => {
                if shift.len() != dim {
                    return Err(Error::config(format!(
                        "rotation vector has length {}, space dimension is {dim}",
                        shift.len()
                    )));
                }
                let shift: Vec<f64> = shift.into_iter().map(wrap_unit).collect();
                if shift.iter().all(|&s| s == 0.0) {
                    Ok(Generator::Identity)
                } else {
                    Ok(Generator::Rotation { shift })
                }
            }
            Generator::Automorphism { matrix } => {
                if matrix.len() != dim * dim {
                    return Err(Error::config(format!(
                        "matrix has {} entries, expected {}",
                        matrix.len(),
                        dim * dim
                    )));
                }
                let det = det_i64(&matrix, dim);
                if det != 1 && det != -1 {
                    return Err(Error::config(format!(
                        "matrix determinant {det} is not ±1; the map is not an invertible automorphism"
                    )));
                }
                let is_id =
                    (0..dim).all(|i| (0..dim).all(|j| matrix[dim * i + j] == i64::from(i == j)));
                if is_id {
                    Ok(Generator::Identity)
                } else {
                    Ok(Generator::Automorphism { matrix })
                }
            }
        }
    }

    /// Inverse map, in canonical form.
    pub fn inverse(&self, dim: usize) -> Generator {
        match self {
            Generator::Identity => Generator::Identity,
            Generator::Rotation { shift } => {
                let inv: Vec<f64> = shift.iter().map(|&s| wrap_unit(-s)).collect();
                if inv.iter().all(|&s| s == 0.0) {
                    Generator::Identity
                } else {
                    Generator::Rotation { shift: inv }
                }
            }
            Generator::Automorphism { matrix } => Generator::Automorphism {
                matrix: inverse_i64(matrix, dim),
            },
        }
    }

    fn apply(&self, x: &Point, dim: usize) -> Point {
        let mut arr = [0.0; MAX_DIM];
        match self {
            Generator::Identity => return *x,
            Generator::Rotation { shift } => {
                for i in 0..dim {
                    arr[i] = wrap_unit(x.coords[i] + shift[i]);
                }
            }
            Generator::Automorphism { matrix } => {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for j in 0..dim {
                        acc += matrix[dim * i + j] as f64 * x.coords[j];
                    }
                    arr[i] = wrap_unit(acc);
                }
            }
        }
        Point {
            coords: arr,
            dim: dim as u8,
        }
    }

    /// Exact Lipschitz constant on the flat torus: 1 for isometries, the
    /// largest singular value for an integer automorphism.
    fn lipschitz(&self, dim: usize) -> f64 {
        match self {
            Generator::Identity | Generator::Rotation { .. } => 1.0,
            Generator::Automorphism { matrix } => {
                let m = nalgebra::DMatrix::from_fn(dim, dim, |i, j| matrix[dim * i + j] as f64);
                m.svd(false, false).singular_values.max()
            }
        }
    }
}

/// A finite symmetric generating set acting on a space.
///
/// Construction appends any missing inverses (dedup by map, so an involution
/// is stored once) and precomputes exact per-generator Lipschitz constants.
#[derive(Clone, Debug)]
pub struct Action {
    space: Space,
    generators: Vec<Generator>,
    lipschitz: Vec<f64>,
    inverse_index: Vec<usize>,
}

impl Action {
    pub fn new(space: Space, generators: Vec<Generator>) -> Result<Action> {
        let dim = space.dim();
        let mut gens: Vec<Generator> = Vec::new();
        for g in generators {
            let g = g.canonical(dim)?;
            if !gens.iter().any(|h| h.same_map(&g)) {
                gens.push(g);
            }
        }
        // symmetric closure: add inverses not already present as maps
        let mut i = 0;
        while i < gens.len() {
            let inv = gens[i].inverse(dim);
            if !gens.iter().any(|h| h.same_map(&inv)) {
                gens.push(inv);
            }
            i += 1;
        }
        let inverse_index = gens
            .iter()
            .map(|g| {
                let inv = g.inverse(dim);
                gens.iter().position(|h| h.same_map(&inv)).expect("closure")
            })
            .collect();
        let lipschitz = gens.iter().map(|g| g.lipschitz(dim)).collect();
        Ok(Action {
            space,
            generators: gens,
            lipschitz,
            inverse_index,
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    /// Number of stored generator maps (inverse-closed, deduplicated).
    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    /// Size of the symmetric generating set counting `s` and `s^{-1}` as
    /// distinct symbols even when they coincide as maps. Self-inverse maps
    /// therefore count twice. Quantitative bounds that sum over the formal
    /// symmetric set use this count.
    pub fn formal_generator_count(&self) -> usize {
        self.generators.len()
            + self
                .generators
                .iter()
                .enumerate()
                .filter(|(i, _)| self.inverse_index[*i] == *i)
                .count()
    }

    /// Index of the stored map equal to the inverse of generator `s`.
    pub fn inverse_index(&self, s: usize) -> usize {
        self.inverse_index[s]
    }

    /// Applies generator `s` to `x`.
    pub fn apply(&self, s: usize, x: &Point) -> Result<Point> {
        let g = self
            .generators
            .get(s)
            .ok_or_else(|| Error::input(format!("generator index {s} out of range")))?;
        if x.dim() != self.space.dim() {
            return Err(Error::input("point dimension does not match action space"));
        }
        Ok(g.apply(x, self.space.dim()))
    }

    pub(crate) fn apply_fast(&self, s: usize, x: &Point) -> Point {
        self.generators[s].apply(x, self.space.dim())
    }

    /// Exact per-generator Lipschitz constants.
    pub fn lipschitz_constants(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn max_lipschitz(&self) -> f64 {
        self.lipschitz.iter().fold(1.0, |a, &b| a.max(b))
    }

    /// Sampled per-generator distortion maxima `d(sx, sy)/d(x, y)`.
    ///
    /// Pairs are drawn at log-spaced separations so the supremum is probed at
    /// small scales where it is attained; zero-distance pairs are resampled.
    /// The sampled value approaches the exact constant from below.
    pub fn lipschitz_estimate(&self, n_pairs: usize, seed: u64) -> Result<Vec<f64>> {
        if n_pairs == 0 {
            return Err(Error::input("lipschitz_estimate requires n_pairs >= 1"));
        }
        let dim = self.space.dim();
        let mut out = Vec::with_capacity(self.generators.len());
        for (s, _) in self.generators.iter().enumerate() {
            let mut rng = substream(seed, "lipschitz", s as u64);
            let mut best: f64 = 0.0;
            let mut drawn = 0;
            while drawn < n_pairs {
                let x = self.space.uniform(&mut rng);
                // displacement of magnitude exactly `scale` in a random
                // direction; scales stay well above f64 wrap noise so the
                // sampled ratio cannot drift past the analytic constant
                let scale = 10f64.powf(rng.gen_range(-5.0..-1.0));
                let mut dir = [0.0; MAX_DIM];
                let mut norm = 0.0;
                for d in dir.iter_mut().take(dim) {
                    *d = rng.gen::<f64>() - 0.5;
                    norm += *d * *d;
                }
                let norm = norm.sqrt();
                if norm < 1e-6 {
                    continue;
                }
                let mut arr = [0.0; MAX_DIM];
                for i in 0..dim {
                    arr[i] = wrap_unit(x.coords[i] + scale * dir[i] / norm);
                }
                let y = Point {
                    coords: arr,
                    dim: dim as u8,
                };
                let base = self.space.dist(&x, &y);
                if base == 0.0 {
                    continue; // resample, never divide by zero
                }
                drawn += 1;
                let image = self
                    .space
                    .dist(&self.apply_fast(s, &x), &self.apply_fast(s, &y));
                best = best.max(image / base);
            }
            out.push(best);
        }
        Ok(out)
    }

    /// Chi-square statistic for uniformity of the pushforward of uniform
    /// samples under generator `s`, against `boxes_per_axis^dim` equal cells.
    /// Returns `(statistic, degrees_of_freedom)`.
    pub fn measure_preservation_statistic(
        &self,
        s: usize,
        boxes_per_axis: usize,
        n: usize,
        seed: u64,
    ) -> Result<(f64, usize)> {
        if boxes_per_axis < 2 || n == 0 {
            return Err(Error::input("need boxes_per_axis >= 2 and n >= 1"));
        }
        if s >= self.generators.len() {
            return Err(Error::input(format!("generator index {s} out of range")));
        }
        let dim = self.space.dim();
        let k = boxes_per_axis.pow(dim as u32);
        let mut counts = vec![0u64; k];
        let mut rng = substream(seed, "pushforward", s as u64);
        for _ in 0..n {
            let x = self.space.uniform(&mut rng);
            let y = self.apply_fast(s, &x);
            let mut idx = 0;
            for i in 0..dim {
                let b = ((y.coords[i] * boxes_per_axis as f64) as usize).min(boxes_per_axis - 1);
                idx = idx * boxes_per_axis + b;
            }
            counts[idx] += 1;
        }
        let expected = n as f64 / k as f64;
        let stat = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        Ok((stat, k - 1))
    }
}

/// Declarative form of a generator, as read from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorConfig {
    Identity,
    Rotation { vector: Vec<f64> },
    Matrix { entries: Vec<Vec<i64>> },
}

impl GeneratorConfig {
    fn to_generator(&self) -> Generator {
        match self {
            GeneratorConfig::Identity => Generator::Identity,
            GeneratorConfig::Rotation { vector } => Generator::Rotation {
                shift: vector.clone(),
            },
            GeneratorConfig::Matrix { entries } => Generator::Automorphism {
                matrix: entries.iter().flatten().copied().collect(),
            },
        }
    }
}

/// Key-value declaration of a space and action; inverses are added
/// automatically unless already present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionConfig {
    pub space: String,
    pub generators: Vec<GeneratorConfig>,
}

impl ActionConfig {
    pub fn from_toml(text: &str) -> Result<ActionConfig> {
        toml::from_str(text).map_err(|e| Error::config(format!("action config: {e}")))
    }

    pub fn from_path(path: &std::path::Path) -> Result<ActionConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn build(&self) -> Result<(Space, Action)> {
        let space = Space::parse(&self.space)?;
        let gens = self.generators.iter().map(|g| g.to_generator()).collect();
        let action = Action::new(space, gens)?;
        Ok((space, action))
    }
}
