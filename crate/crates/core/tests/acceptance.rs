//! Acceptance suite: every exit criterion, one test each, printing a
//! PASS/FAIL line with the measured quantities.
//!
//! Run with:
//!
//! ```text
//! cargo test -p warpcone --test acceptance -- --nocapture
//! ```
//!
//! The torus-action fixture (nets, graphs and family sweeps for the shear
//! pair with Lipschitz constant 1 + sqrt(2)) is built once and shared.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use warpcone::graph::SimpleGraph;
use warpcone::harness::ActionSpec;
use warpcone::harness::{
    build_level, run_family, Budgets, ExperimentConfig, FamilyOutcome, LevelArtifacts, Verdict,
};
use warpcone::net::{default_radii, verify_ahlfors, AhlforsEstimate};
use warpcone::qi::qi_invariance_check;
use warpcone::rng::substream;
use warpcone::spaces::{Action, GeneratorConfig, Space};
use warpcone::spectra::{eta, lambda2, pairwise_form_ratio, SpectralReport};
use warpcone::warpgraph::{bilipschitz_check, build_field, degree_report};

use rand::Rng;

fn check(criterion: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance criterion {criterion} failed: {detail}");
}

fn shear_generators() -> Vec<GeneratorConfig> {
    vec![
        GeneratorConfig::Matrix {
            entries: vec![vec![1, 2], vec![0, 1]],
        },
        GeneratorConfig::Matrix {
            entries: vec![vec![1, 0], vec![2, 1]],
        },
    ]
}

fn sl2z_config(levels: Vec<f64>, out_dir: String) -> ExperimentConfig {
    ExperimentConfig {
        space: "t2".into(),
        levels,
        seed: 7,
        variant: warpcone::warpgraph::Variant::Full,
        p_list: vec![1.0, 2.0, 4.0],
        out_dir,
        action: ActionSpec {
            generators: shear_generators(),
        },
        budgets: Budgets::default(),
    }
}

struct Fixture {
    _tmp: tempfile::TempDir,
    action: Action,
    ahlfors: AhlforsEstimate,
    /// artifacts at the degree/bi-Lipschitz levels t = 8, 16, 32
    levels: Vec<(f64, LevelArtifacts)>,
    /// verdict sweep over t = {14, 20, 28, 40, 64}
    verdict_outcome: FamilyOutcome,
    verdict_secs: f64,
    /// p-floor sweep over the settled window t = {32, 40, 52, 64}
    pfloor_rows: Vec<SpectralReport>,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let tmp = tempfile::tempdir().expect("tempdir");
        let t2 = Space::flat_torus(2).unwrap();
        let cfg = sl2z_config(
            vec![14.0, 20.0, 28.0, 40.0, 64.0],
            tmp.path().join("verdict").to_string_lossy().into_owned(),
        );
        let (_, action) = cfg.build_action().unwrap();
        let ahlfors = verify_ahlfors(t2, 24, &default_radii(&t2, 0.05, 0.7, 10), 5000, 41).unwrap();
        let budgets = Budgets::default();
        let levels = [8.0f64, 16.0, 32.0]
            .iter()
            .map(|&t| {
                let arts = build_level(
                    t2,
                    &action,
                    t,
                    warpcone::rng::derive_seed(7, "acceptance-level", t as u64),
                    &budgets,
                    warpcone::warpgraph::Variant::Full,
                )
                .unwrap();
                (t, arts)
            })
            .collect();

        let start = Instant::now();
        let verdict_outcome = run_family(&cfg).unwrap();
        let verdict_secs = start.elapsed().as_secs_f64();

        let pfloor_cfg = sl2z_config(
            vec![32.0, 40.0, 52.0, 64.0],
            tmp.path().join("pfloor").to_string_lossy().into_owned(),
        );
        let pfloor_rows = run_family(&pfloor_cfg).unwrap().verdict.rows;

        Fixture {
            _tmp: tmp,
            action,
            ahlfors,
            levels,
            verdict_outcome,
            verdict_secs,
            pfloor_rows,
        }
    })
}

fn random_connected_graph(rng: &mut impl Rng, n_max: usize) -> SimpleGraph {
    let n = rng.gen_range(10..=n_max);
    let mut edges: Vec<(u32, u32)> = (0..n as u32).map(|v| (v, (v + 1) % n as u32)).collect();
    for _ in 0..(3 * n / 2) {
        edges.push((rng.gen_range(0..n as u32), rng.gen_range(0..n as u32)));
    }
    SimpleGraph::from_edges(n, edges)
}

fn dense_lambda2(g: &SimpleGraph) -> f64 {
    let n = g.n();
    let mut l = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (u, v) in g.edges() {
        let (u, v) = (u as usize, v as usize);
        l[(u, u)] += 1.0;
        l[(v, v)] += 1.0;
        l[(u, v)] -= 1.0;
        l[(v, u)] -= 1.0;
    }
    let mut eigs: Vec<f64> = nalgebra::SymmetricEigen::new(l)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(f64::total_cmp);
    eigs[1]
}

#[test]
fn criterion_1_solver_matches_dense_oracle() {
    let start = Instant::now();
    let mut rng = substream(2024, "acceptance-1", 0);
    let mut worst_l2_rel: f64 = 0.0;
    let mut worst_eta_abs: f64 = 0.0;
    for trial in 0..50u64 {
        let g = random_connected_graph(&mut rng, 200);
        let fast = lambda2(&g).unwrap().value;
        let dense = dense_lambda2(&g);
        worst_l2_rel = worst_l2_rel.max((fast - dense).abs() / dense.max(1e-300));
        let e = eta(&g, 2.0, 1, 4, trial).unwrap().value;
        worst_eta_abs = worst_eta_abs.max((e - dense / 2.0).abs());
    }
    let elapsed = start.elapsed();
    check(
        1,
        "solver vs dense oracle",
        worst_l2_rel <= 1e-8 && worst_eta_abs <= 1e-6 && elapsed < Duration::from_secs(60),
        &format!(
            "50 graphs <= 200 vertices: max lambda2 rel err {worst_l2_rel:.2e} (<= 1e-8), max |eta(2,1) - lambda2/2| {worst_eta_abs:.2e} (<= 1e-6), {elapsed:.1?} (< 1 min)"
        ),
    );
}

#[test]
fn criterion_2_pairwise_form_ratio_bounds() {
    let start = Instant::now();
    let mut rng = substream(2024, "acceptance-2", 0);
    let mut violations = 0usize;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=100);
        let d = rng.gen_range(1..=3);
        let mut mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = mu.iter().sum();
        for m in &mut mu {
            *m /= total;
        }
        let mut f: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        for c in 0..d {
            let mean: f64 = f.iter().zip(&mu).map(|(fz, &m)| m * fz[c]).sum();
            for fz in &mut f {
                fz[c] -= mean;
            }
        }
        let r = pairwise_form_ratio(&mu, &f).unwrap();
        if !r.degenerate {
            lo = lo.min(r.ratio);
            hi = hi.max(r.ratio);
            if !(0.5..=2.0).contains(&r.ratio) {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        2,
        "factor-4 form equivalence",
        violations == 0 && elapsed < Duration::from_secs(10),
        &format!(
            "1000 zero-average functions on <= 100 atoms: ratios in [{lo:.4}, {hi:.4}] within [0.5, 2.0], {violations} violations, {elapsed:.1?} (< 10 s)"
        ),
    );
}

#[test]
fn criterion_3_degree_bound_with_measured_constants() {
    let start = Instant::now();
    let fx = fixture();
    // the shear pair has Lipschitz constant 1 + sqrt(2) exactly
    let lip_max = fx
        .action
        .lipschitz_constants()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    assert!((lip_max - (1.0 + 2f64.sqrt())).abs() < 1e-12);
    let mut detail = String::new();
    let mut all_ok = true;
    let mut max_degrees = Vec::new();
    for (t, arts) in &fx.levels {
        let report = degree_report(&arts.graph, &fx.ahlfors, arts.graph.lipschitz()).unwrap();
        all_ok &= !report.violation;
        max_degrees.push(report.max_degree as f64);
        detail.push_str(&format!(
            "t={t}: #Z={} max_deg={} bound={:.1}; ",
            arts.net.len(),
            report.max_degree,
            report.bound_total
        ));
    }
    let spread = max_degrees
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        / max_degrees.iter().cloned().fold(f64::INFINITY, f64::min);
    let elapsed = start.elapsed();
    check(
        3,
        "degree bound",
        all_ok && spread <= 2.0 && elapsed < Duration::from_secs(600),
        &format!(
            "{detail}max-degree spread {spread:.2}x (<= 2x), C_hat={:.2} m_hat={:.2} L={lip_max:.4}, {elapsed:.1?} (< 10 min)",
            fx.ahlfors.big_c, fx.ahlfors.m
        ),
    );
}

#[test]
fn criterion_4_bilipschitz_comparison() {
    let start = Instant::now();
    let fx = fixture();
    let mut detail = String::new();
    let mut violations = 0usize;
    for (i, (t, arts)) in fx.levels.iter().enumerate() {
        let field = build_field(&fx.action, *t, 8.0, 9000 + i as u64).unwrap();
        let report =
            bilipschitz_check(&arts.graph, &arts.net, &field, 100, 77 + i as u64, 2.0).unwrap();
        violations += report.violations_forward + report.violations_backward;
        detail.push_str(&format!(
            "t={t}: worst d_hat - 3d_G = {:.2}, worst d_G - 2 ceil(d_hat) = {:.2}; ",
            report.worst_forward_excess, report.worst_backward_excess
        ));
    }
    let elapsed = start.elapsed();
    check(
        4,
        "bi-Lipschitz bounds",
        violations == 0,
        &format!(
            "{detail}{violations} violations over 100 pairs/level (slack 2, rho 8), {elapsed:.1?}"
        ),
    );
}

#[test]
fn criterion_5_forward_inequality_margins() {
    let fx = fixture();
    let mut worst = f64::INFINITY;
    for row in &fx.verdict_outcome.verdict.rows {
        assert!(
            row.forward_margin.is_finite(),
            "missing margin at t={}",
            row.t
        );
        worst = worst.min(row.forward_margin);
    }
    check(
        5,
        "forward gap-to-expansion inequality",
        worst >= -1e-2,
        &format!(
            "min forward margin {worst:.4} over levels {:?} (>= -0.01)",
            fx.verdict_outcome
                .verdict
                .rows
                .iter()
                .map(|r| r.t)
                .collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_6_family_verdict_controls() {
    let fx = fixture();
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();

    let rotation = ExperimentConfig {
        space: "circle".into(),
        levels: vec![12.0, 24.0, 48.0, 96.0, 192.0, 384.0],
        seed: 7,
        variant: warpcone::warpgraph::Variant::Full,
        p_list: vec![2.0],
        out_dir: tmp.path().join("rotation").to_string_lossy().into_owned(),
        action: ActionSpec {
            generators: vec![GeneratorConfig::Rotation {
                vector: vec![0.5 * (5f64.sqrt() - 1.0)],
            }],
        },
        budgets: Budgets {
            eta_restarts: 4,
            ..Budgets::default()
        },
    };
    let rotation_outcome = run_family(&rotation).unwrap();

    let identity = ExperimentConfig {
        space: "t2".into(),
        levels: vec![6.0, 12.0, 24.0, 48.0],
        seed: 7,
        variant: warpcone::warpgraph::Variant::Full,
        p_list: vec![2.0],
        out_dir: tmp.path().join("identity").to_string_lossy().into_owned(),
        action: ActionSpec {
            generators: vec![GeneratorConfig::Identity],
        },
        budgets: Budgets {
            eta_restarts: 4,
            ..Budgets::default()
        },
    };
    let identity_outcome = run_family(&identity).unwrap();

    let controls_secs = start.elapsed().as_secs_f64();
    let total_secs = controls_secs + fx.verdict_secs;
    let sl2 = fx.verdict_outcome.verdict.verdict;
    let rot = rotation_outcome.verdict.verdict;
    let idv = identity_outcome.verdict.verdict;
    let pass = sl2 == Verdict::ExpanderConsistent
        && rot == Verdict::NonExpanderConsistent
        && idv == Verdict::NonExpanderConsistent
        && total_secs < 1200.0;
    check(
        6,
        "family trend verdicts",
        pass,
        &format!(
            "shear pair: {sl2} (growth {:.1}x, eta ratio {:.2}); rotation: {rot} (eta {:.3} -> {:.3}); identity: {idv} (eta {:.3} -> {:.3}); {total_secs:.0} s total (< 20 min)",
            fx.verdict_outcome.verdict.trend.growth,
            fx.verdict_outcome.verdict.trend.eta_min / fx.verdict_outcome.verdict.trend.eta_max,
            rotation_outcome.verdict.trend.eta_first,
            rotation_outcome.verdict.trend.eta_last,
            identity_outcome.verdict.trend.eta_first,
            identity_outcome.verdict.trend.eta_last,
        ),
    );
}

/// Exhaustive p = 1 oracle: by the layer-cake decomposition the infimum over
/// scalar functions equals the minimum over vertex cuts of
/// `n cut(S) / (2 |S| |V - S|)`.
fn exhaustive_eta1(g: &SimpleGraph) -> f64 {
    let n = g.n();
    assert!(n <= 20);
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) - 1 {
        let side: Vec<bool> = (0..n).map(|v| mask & (1 << v) != 0).collect();
        let cut = g
            .edges()
            .filter(|&(u, v)| side[u as usize] != side[v as usize])
            .count();
        let k = side.iter().filter(|&&s| s).count();
        best = best.min(n as f64 * cut as f64 / (2.0 * k as f64 * (n - k) as f64));
    }
    best
}

#[test]
fn criterion_7_p_robustness() {
    let fx = fixture();
    let mut detail = String::new();
    let mut floors_ok = true;
    for p in [1.0, 2.0, 4.0] {
        let vals: Vec<f64> = fx
            .pfloor_rows
            .iter()
            .map(|r| r.eta_value(p, 1).unwrap())
            .collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        floors_ok &= lo >= 0.5 * hi && lo > 0.0;
        detail.push_str(&format!(
            "p={p}: min/max {lo:.3}/{hi:.3} = {:.2}; ",
            lo / hi
        ));
    }

    // exhaustive oracle on graphs with <= 8 vertices
    let small: Vec<(&str, SimpleGraph)> = vec![
        ("C4", SimpleGraph::cycle(4)),
        ("K4", SimpleGraph::complete(4)),
        ("P5", SimpleGraph::path(5)),
        ("C7", SimpleGraph::cycle(7)),
        (
            "K23",
            SimpleGraph::from_edges(5, [(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)]),
        ),
        (
            "Q3",
            SimpleGraph::from_edges(
                8,
                (0u32..8).flat_map(|u| (0u32..3).map(move |b| (u, u ^ (1 << b)))),
            ),
        ),
    ];
    let mut worst_oracle_err: f64 = 0.0;
    for (name, g) in &small {
        let got = eta(g, 1.0, 1, 8, 5).unwrap().value;
        let want = exhaustive_eta1(g);
        let err = (got - want).abs();
        worst_oracle_err = worst_oracle_err.max(err);
        assert!(err <= 1e-6, "{name}: optimizer {got} vs exhaustive {want}");
    }
    check(
        7,
        "p-robust expansion floors",
        floors_ok,
        &format!(
            "{detail}small-graph p=1 exhaustive-oracle max err {worst_oracle_err:.2e} (<= 1e-6)"
        ),
    );
}

#[test]
fn criterion_8_transfer_bound_under_subdivision() {
    let start = Instant::now();
    let fx = fixture();
    let complete_family: Vec<SimpleGraph> = [4usize, 7, 10, 14, 19, 24, 30]
        .iter()
        .map(|&n| SimpleGraph::complete(n))
        .collect();
    let complete = qi_invariance_check(&complete_family, 1, 6, 11).unwrap();

    let warped_family: Vec<SimpleGraph> = fx
        .levels
        .iter()
        .filter(|(t, _)| *t <= 16.0)
        .map(|(_, arts)| arts.graph.union_simple())
        .collect();
    assert_eq!(warped_family.len(), 2);
    let warped = qi_invariance_check(&warped_family, 1, 6, 13).unwrap();

    let min_margin = complete
        .rows
        .iter()
        .chain(warped.rows.iter())
        .map(|r| r.margin)
        .fold(f64::INFINITY, f64::min);
    let elapsed = start.elapsed();
    check(
        8,
        "quasi-isometry transfer bound",
        complete.violations == 0 && warped.violations == 0,
        &format!(
            "complete family eta1 {:.2}, warped family eta1 {:.2}; min margin {min_margin:.3e}, 0 violations, {elapsed:.1?}",
            complete.family_eta, warped.family_eta
        ),
    );
}

#[test]
fn criterion_9_determinism() {
    let fx = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let cfg_b = sl2z_config(
        vec![14.0, 20.0, 28.0, 40.0, 64.0],
        tmp.path().join("b").to_string_lossy().into_owned(),
    );
    let outcome_b = run_family(&cfg_b).unwrap();
    let bytes_a = std::fs::read(&fx.verdict_outcome.csv_path).unwrap();
    let bytes_b = std::fs::read(&outcome_b.csv_path).unwrap();
    check(
        9,
        "byte-identical reruns",
        bytes_a == bytes_b,
        &format!(
            "two runs of the same config and seed: {} vs {} bytes, identical = {}",
            bytes_a.len(),
            bytes_b.len(),
            bytes_a == bytes_b
        ),
    );
}
