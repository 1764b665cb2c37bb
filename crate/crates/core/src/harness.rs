//! Level sweeps, control experiments, verdicts, and file emission.
//!
//! A family run builds the net, graph, and spectral report for each level of
//! a strictly increasing grid, appends one CSV row per level, and reduces
//! the rows to a verdict. The verdict thresholds are artifact policy (the
//! underlying statement is asymptotic); they are documented in the output
//! headers so downstream readers can re-derive the verdict from the rows.

use crate::error::{Error, Result};
use crate::net::{
    build_net, default_radii, estimate_cell_measures, verify_ahlfors, AhlforsEstimate, Net,
    NetParams,
};
use crate::rng::derive_seed;
use crate::spaces::{Action, ActionConfig, GeneratorConfig, Space};
use crate::spectra::{spectral_report, EtaEntry, SolverMeta, SpectralReport};
use crate::warpgraph::{build_graph, degree_report, Variant, WarpedGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

fn default_measure_samples() -> usize {
    200_000
}
fn default_samples_per_cell() -> usize {
    200
}
fn default_streak_factor() -> usize {
    200
}
fn default_eta_restarts() -> usize {
    8
}
fn default_ahlfors_centers() -> usize {
    24
}
fn default_ahlfors_samples() -> usize {
    5000
}

/// Sampling budgets for one family run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    #[serde(default = "default_measure_samples")]
    pub measure_samples: usize,
    #[serde(default = "default_samples_per_cell")]
    pub samples_per_cell: usize,
    #[serde(default = "default_streak_factor")]
    pub streak_factor: usize,
    #[serde(default = "default_eta_restarts")]
    pub eta_restarts: usize,
    #[serde(default = "default_ahlfors_centers")]
    pub ahlfors_centers: usize,
    #[serde(default = "default_ahlfors_samples")]
    pub ahlfors_samples: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            measure_samples: default_measure_samples(),
            samples_per_cell: default_samples_per_cell(),
            streak_factor: default_streak_factor(),
            eta_restarts: default_eta_restarts(),
            ahlfors_centers: default_ahlfors_centers(),
            ahlfors_samples: default_ahlfors_samples(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub generators: Vec<GeneratorConfig>,
}

fn default_variant() -> Variant {
    Variant::Full
}

/// Full description of a family experiment. Round-trips through TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub space: String,
    pub levels: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub p_list: Vec<f64>,
    pub out_dir: String,
    pub action: ActionSpec,
    #[serde(default)]
    pub budgets: Budgets,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        Space::parse(&self.space)?;
        if self.levels.len() < 2 {
            return Err(Error::config("need at least two levels"));
        }
        if self.levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("levels must be strictly increasing"));
        }
        if self.levels.iter().any(|&t| !(t >= 1.0)) {
            return Err(Error::config("levels must be >= 1"));
        }
        if !self.p_list.iter().any(|&p| (p - 2.0).abs() < 1e-12) {
            return Err(Error::config(
                "p_list must contain 2 (the verdict reads eta(2,1))",
            ));
        }
        if self.p_list.iter().any(|&p| !(p >= 1.0)) {
            return Err(Error::config("exponents must lie in [1, inf)"));
        }
        let b = &self.budgets;
        if b.measure_samples == 0
            || b.samples_per_cell < 30
            || b.streak_factor == 0
            || b.eta_restarts == 0
            || b.ahlfors_centers == 0
            || b.ahlfors_samples == 0
        {
            return Err(Error::config(
                "budgets must be positive (>= 30 samples/cell)",
            ));
        }
        Ok(())
    }

    pub fn build_action(&self) -> Result<(Space, Action)> {
        ActionConfig {
            space: self.space.clone(),
            generators: self.action.generators.clone(),
        }
        .build()
    }
}

/// Net and graph for one level.
pub struct LevelArtifacts {
    pub net: Net,
    pub graph: WarpedGraph,
}

/// Builds net, measures, and graph for one level; all randomness derives
/// from `level_seed` through named substreams.
pub fn build_level(
    space: Space,
    action: &Action,
    t: f64,
    level_seed: u64,
    budgets: &Budgets,
    variant: Variant,
) -> Result<LevelArtifacts> {
    let params = NetParams {
        streak_factor: budgets.streak_factor,
        ..NetParams::default()
    };
    let net = build_net(space, t, derive_seed(level_seed, "net", 0), &params)?;
    // the configured budget is honored strictly: a level too large for it
    // aborts the sweep (rows of completed levels are retained)
    let est = estimate_cell_measures(
        &net,
        budgets.measure_samples,
        derive_seed(level_seed, "measures", 0),
    )?;
    let net = net.with_measures(est);
    let graph = build_graph(
        &net,
        action,
        budgets.samples_per_cell,
        derive_seed(level_seed, "graph", 0),
        variant,
    )?;
    Ok(LevelArtifacts { net, graph })
}

/// `(report, warnings, violations)` of one completed level.
pub type LevelOutput = (SpectralReport, Vec<String>, Vec<String>);

/// One level end to end: build artifacts, run every estimator, and collect
/// warnings plus invariant violations.
#[allow(clippy::too_many_arguments)]
pub fn run_level(
    space: Space,
    action: &Action,
    ahlfors: &AhlforsEstimate,
    t: f64,
    level_seed: u64,
    budgets: &Budgets,
    p_list: &[f64],
    variant: Variant,
) -> Result<LevelOutput> {
    let arts = build_level(space, action, t, level_seed, budgets, variant)?;
    let mut warnings: Vec<String> = arts
        .net
        .warnings
        .iter()
        .chain(arts.graph.warnings.iter())
        .map(|w| format!("t={t}: {w}"))
        .collect();
    let report = spectral_report(
        &arts.graph,
        ahlfors,
        p_list,
        budgets.eta_restarts,
        derive_seed(level_seed, "spectra", 0),
    )?;
    let mut violations = Vec::new();
    let degrees = degree_report(&arts.graph, ahlfors, arts.graph.lipschitz())?;
    if degrees.violation {
        violations.push(format!(
            "t={t}: max degree {} exceeds bound {:.2}",
            degrees.max_degree, degrees.bound_total
        ));
    }
    if report.forward_margin.is_finite() && report.forward_margin < -1e-2 {
        violations.push(format!(
            "t={t}: forward margin {} below -0.01",
            report.forward_margin
        ));
    }
    if !report.lambda2_connected {
        warnings.push(format!("t={t}: union graph disconnected"));
    }
    Ok((report, warnings, violations))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    ExpanderConsistent,
    NonExpanderConsistent,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::ExpanderConsistent => "expander-consistent",
            Verdict::NonExpanderConsistent => "non-expander-consistent",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// Artifact policy for reducing a row series to a verdict. The growth gate
/// applies to the expander branch; decay alone suffices for the
/// non-expander branch so slow-growing spaces (the circle) are decidable on
/// the same grid.
#[derive(Clone, Copy, Debug)]
pub struct VerdictPolicy {
    pub growth_min: f64,
    pub eta_flat_ratio: f64,
    pub kappa_flat_ratio: f64,
    pub decay_factor: f64,
    pub monotone_slack: f64,
}

impl Default for VerdictPolicy {
    fn default() -> Self {
        VerdictPolicy {
            growth_min: 16.0,
            eta_flat_ratio: 0.5,
            kappa_flat_ratio: 0.5,
            decay_factor: 4.0,
            monotone_slack: 0.10,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrendStats {
    pub growth: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_first: f64,
    pub eta_last: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

#[derive(Clone, Debug)]
pub struct FamilyVerdict {
    pub rows: Vec<SpectralReport>,
    pub trend: TrendStats,
    pub verdict: Verdict,
}

/// Pure reduction of per-level rows to a verdict.
pub fn decide_verdict(rows: &[SpectralReport], policy: &VerdictPolicy) -> Result<FamilyVerdict> {
    if rows.len() < 2 {
        return Err(Error::input("verdict needs at least two levels"));
    }
    let etas: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.eta_value(2.0, 1)
                .ok_or_else(|| Error::input("rows are missing eta(2,1)"))
        })
        .collect::<Result<_>>()?;
    let growth = rows.last().unwrap().n_vertices as f64 / rows[0].n_vertices as f64;
    let eta_min = etas.iter().copied().fold(f64::INFINITY, f64::min);
    let eta_max = etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kappas: Vec<f64> = rows.iter().map(|r| r.kappa_hat).collect();
    let kappa_min = kappas.iter().copied().fold(f64::INFINITY, f64::min);
    let kappa_max = kappas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let trend = TrendStats {
        growth,
        eta_min,
        eta_max,
        eta_first: etas[0],
        eta_last: *etas.last().unwrap(),
        kappa_min,
        kappa_max,
    };
    let flat_eta = eta_min >= policy.eta_flat_ratio * eta_max;
    let flat_kappa = kappa_min >= policy.kappa_flat_ratio * kappa_max;
    let monotone_down = etas
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + policy.monotone_slack));
    let decayed = trend.eta_last <= trend.eta_first / policy.decay_factor;
    let verdict = if growth >= policy.growth_min && flat_eta && flat_kappa {
        Verdict::ExpanderConsistent
    } else if monotone_down && decayed {
        Verdict::NonExpanderConsistent
    } else {
        Verdict::Inconclusive
    };
    Ok(FamilyVerdict {
        rows: rows.to_vec(),
        trend,
        verdict,
    })
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

pub const CSV_HEADER: &str =
    "t,n_vertices,lambda2,eta_p1,eta_p2,eta_p4,kappa_hat,markov_norm,K_hat,D_max,fwd_margin";

pub fn csv_row(r: &SpectralReport) -> String {
    let eta_at = |p: f64| r.eta_value(p, 1).unwrap_or(f64::NAN);
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        fmt(r.t),
        r.n_vertices,
        fmt(r.lambda2),
        fmt(eta_at(1.0)),
        fmt(eta_at(2.0)),
        fmt(eta_at(4.0)),
        fmt(r.kappa_hat),
        fmt(r.markov_norm),
        fmt(r.k_hat),
        r.d_max,
        fmt(r.forward_margin),
    )
}

fn policy_header(policy: &VerdictPolicy) -> String {
    format!(
        "# verdict policy (artifact thresholds, not derived quantities): expander-consistent iff #Z growth >= {} and min eta(2,1) >= {} * max and min kappa >= {} * max; non-expander-consistent iff eta(2,1) is monotone decreasing ({}% slack) by >= {}x; any strictly increasing level grid is accepted",
        policy.growth_min,
        policy.eta_flat_ratio,
        policy.kappa_flat_ratio,
        policy.monotone_slack * 100.0,
        policy.decay_factor
    )
}

#[derive(Debug)]
pub struct FamilyOutcome {
    pub verdict: FamilyVerdict,
    pub csv_path: PathBuf,
    pub warnings: Vec<String>,
    pub violations: Vec<String>,
}

/// Runs every level of the config, writes `report.csv` and `verdict.txt`
/// under the output directory, and returns the verdict. If a level fails,
/// the rows of the levels before it are retained in the CSV and the error
/// is propagated.
pub fn run_family(config: &ExperimentConfig) -> Result<FamilyOutcome> {
    run_family_with_policy(config, &VerdictPolicy::default())
}

pub fn run_family_with_policy(
    config: &ExperimentConfig,
    policy: &VerdictPolicy,
) -> Result<FamilyOutcome> {
    config.validate()?;
    let (space, action) = config.build_action()?;
    let ahlfors = verify_ahlfors(
        space,
        config.budgets.ahlfors_centers,
        &default_radii(&space, 0.05, 0.7, 10),
        config.budgets.ahlfors_samples,
        derive_seed(config.seed, "ahlfors-root", 0),
    )?;

    let results: Vec<Result<LevelOutput>> = config
        .levels
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            run_level(
                space,
                &action,
                &ahlfors,
                t,
                derive_seed(config.seed, "level", i as u64),
                &config.budgets,
                &config.p_list,
                config.variant,
            )
        })
        .collect();

    let out_dir = PathBuf::from(&config.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join("report.csv");
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut violations = Vec::new();
    let mut failure: Option<Error> = None;
    for res in results {
        match res {
            Ok((report, mut warns, mut viols)) => {
                rows.push(report);
                warnings.append(&mut warns);
                violations.append(&mut viols);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
        writeln!(w, "{}", policy_header(policy))?;
        writeln!(
            w,
            "# space={} seed={} variant={} samples_per_cell={} measure_samples={} eta_restarts={}",
            config.space,
            config.seed,
            config.variant.name(),
            config.budgets.samples_per_cell,
            config.budgets.measure_samples,
            config.budgets.eta_restarts,
        )?;
        writeln!(w, "{CSV_HEADER}")?;
        for r in &rows {
            writeln!(w, "{}", csv_row(r))?;
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }

    let verdict = decide_verdict(&rows, policy)?;
    let verdict_path = out_dir.join("verdict.txt");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&verdict_path)?);
    writeln!(w, "verdict: {}", verdict.verdict)?;
    writeln!(
        w,
        "growth: {}  eta(2,1) min/max: {}/{}  kappa min/max: {}/{}",
        fmt(verdict.trend.growth),
        fmt(verdict.trend.eta_min),
        fmt(verdict.trend.eta_max),
        fmt(verdict.trend.kappa_min),
        fmt(verdict.trend.kappa_max),
    )?;
    writeln!(w, "{}", policy_header(policy))?;
    drop(w);

    Ok(FamilyOutcome {
        verdict,
        csv_path,
        warnings,
        violations,
    })
}

/// Reads rows back from a report CSV. Only the columns in the CSV schema
/// are recovered; the remaining report fields are filled with defaults.
pub fn read_report_csv(path: &Path) -> Result<Vec<SpectralReport>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') || line.starts_with("t,") {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::input(format!("malformed CSV row: {line}")));
        }
        let parse = |s: &str| -> Result<f64> {
            if s == "NaN" {
                Ok(f64::NAN)
            } else {
                s.parse()
                    .map_err(|e: std::num::ParseFloatError| Error::input(e.to_string()))
            }
        };
        let mut eta = Vec::new();
        for (p, idx) in [(1.0, 3usize), (2.0, 4), (4.0, 5)] {
            let v = parse(f[idx])?;
            if !v.is_nan() {
                eta.push(EtaEntry {
                    p,
                    dim: 1,
                    value: v,
                });
            }
        }
        rows.push(SpectralReport {
            t: parse(f[0])?,
            n_vertices: f[1].parse().map_err(|_| Error::input("bad n_vertices"))?,
            lambda2: parse(f[2])?,
            lambda2_connected: true,
            eta,
            kappa_hat: parse(f[6])?,
            kappa_support_connected: true,
            markov_norm: parse(f[7])?,
            k_hat: parse(f[8])?,
            c_hat: f64::NAN,
            m_hat: f64::NAN,
            d_max: f[9].parse().map_err(|_| Error::input("bad D_max"))?,
            formal_gen_count: 0,
            forward_margin: parse(f[10])?,
            reverse_margin: f64::NAN,
            solver: SolverMeta::default(),
        });
    }
    Ok(rows)
}

/// Writes plot-ready tab-separated series from a verdict: `(t, eta_p)` per
/// exponent present in every row, `(t, kappa)`, `(t, #Z)`, and the forward
/// margin when available. Returns the created paths.
pub fn emit_plots(verdict: &FamilyVerdict, out: &Path) -> Result<Vec<PathBuf>> {
    if verdict.rows.len() < 2 {
        return Err(Error::input("plots need at least two levels"));
    }
    std::fs::create_dir_all(out)?;
    let mut created = Vec::new();
    let mut write_series = |name: &str, series: Vec<(f64, String)>| -> Result<()> {
        let path = out.join(name);
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(w, "t\tvalue")?;
        for (t, v) in series {
            writeln!(w, "{}\t{}", fmt(t), v)?;
        }
        created.push(path);
        Ok(())
    };

    // exponents present in every row
    let mut ps: Vec<f64> = verdict.rows[0].eta.iter().map(|e| e.p).collect();
    ps.retain(|&p| verdict.rows.iter().all(|r| r.eta_value(p, 1).is_some()));
    for &p in &ps {
        let name = if p.fract() == 0.0 {
            format!("eta_p{}.tsv", p as i64)
        } else {
            format!("eta_p{p}.tsv")
        };
        write_series(
            &name,
            verdict
                .rows
                .iter()
                .map(|r| (r.t, fmt(r.eta_value(p, 1).unwrap())))
                .collect(),
        )?;
    }
    write_series(
        "kappa.tsv",
        verdict
            .rows
            .iter()
            .map(|r| (r.t, fmt(r.kappa_hat)))
            .collect(),
    )?;
    write_series(
        "nz.tsv",
        verdict
            .rows
            .iter()
            .map(|r| (r.t, r.n_vertices.to_string()))
            .collect(),
    )?;
    if verdict.rows.iter().any(|r| r.forward_margin.is_finite()) {
        write_series(
            "fwd_margin.tsv",
            verdict
                .rows
                .iter()
                .map(|r| (r.t, fmt(r.forward_margin)))
                .collect(),
        )?;
    }
    Ok(created)
}
