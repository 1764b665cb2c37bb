//! Command-line driver: build nets and level graphs, run the spectral
//! estimators, check quasi-isometry transfer, and sweep whole families.
//!
//! Exit code 0 means no invariant violations were observed.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use warpcone::harness::{self, csv_row, ExperimentConfig, CSV_HEADER};
use warpcone::net::{
    build_net, default_radii, estimate_cell_measures, read_net_tsv, verify_ahlfors, write_net_tsv,
    NetParams,
};
use warpcone::qi::qi_invariance_check;
use warpcone::rng::derive_seed;
use warpcone::spaces::{ActionConfig, Space};
use warpcone::spectra::spectral_report;
use warpcone::warpgraph::{
    build_graph, degree_report, read_graph_tsv, write_graph_dot, write_graph_tsv, Variant,
};

#[derive(Parser)]
#[command(
    name = "warpcone",
    about = "Level graphs of group actions with spectral-gap and expansion estimators",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a maximal 1/t-separated net with estimated cell measures.
    Net {
        /// Space name: circle, t1, t2, t3.
        #[arg(long)]
        space: String,
        /// Level (t >= 1).
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Uniform samples for cell-measure estimation.
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the level graph over an existing net.
    Graph {
        #[arg(long)]
        net: PathBuf,
        /// Action declaration (TOML).
        #[arg(long)]
        action: PathBuf,
        #[arg(long = "samples-per-cell", default_value_t = 200)]
        samples_per_cell: usize,
        /// full (both edge types) or type1_only.
        #[arg(long, default_value = "full")]
        variant: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional DOT rendering for small graphs.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Run every spectral estimator on a built graph; appends a CSV row.
    Spectrum {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        net: PathBuf,
        /// Exponents, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 4.0])]
        p: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 3)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subdivide graphs and verify the expansion transfer bound at p = 1.
    QiCheck {
        /// Graph TSV paths, comma separated.
        #[arg(long, value_delimiter = ',')]
        graphs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        subdivide: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 3)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep a level grid from a config file and emit the verdict.
    Family {
        #[arg(long)]
        config: PathBuf,
    },
    /// Emit plot-ready series from a report CSV.
    Plots {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Cmd) -> warpcone::Result<Vec<String>> {
    let mut violations = Vec::new();
    match cmd {
        Cmd::Net {
            space,
            t,
            seed,
            samples,
            out,
        } => {
            let space = Space::parse(&space)?;
            let net = build_net(space, t, seed, &NetParams::default())?;
            for w in &net.warnings {
                eprintln!("warning: {w}");
            }
            let est = estimate_cell_measures(
                &net,
                samples.max(10 * net.len()),
                derive_seed(seed, "measures", 0),
            )?;
            let net = net.with_measures(est);
            write_net_tsv(&net, &out)?;
            println!(
                "net: {} vertices at t = {t} -> {}",
                net.len(),
                out.display()
            );
        }
        Cmd::Graph {
            net,
            action,
            samples_per_cell,
            variant,
            seed,
            out,
            dot,
        } => {
            let net = read_net_tsv(&net)?;
            let (space, action) = ActionConfig::from_path(&action)?.build()?;
            if space != *net.space() {
                return Err(warpcone::Error::input(
                    "action space does not match the net's space",
                ));
            }
            let variant = Variant::parse(&variant)?;
            let graph = build_graph(&net, &action, samples_per_cell, seed, variant)?;
            for w in &graph.warnings {
                eprintln!("warning: {w}");
            }
            write_graph_tsv(&graph, &out)?;
            let (t1, t2) = graph.edge_counts();
            println!(
                "graph: {} vertices, {} type-1 edges, {} type-2 edges -> {}",
                graph.n(),
                t1,
                t2,
                out.display()
            );
            if let Some(dot) = dot {
                write_graph_dot(&graph, &dot)?;
                println!("dot -> {}", dot.display());
            }
        }
        Cmd::Spectrum {
            graph,
            net,
            p,
            restarts,
            seed,
            out,
        } => {
            let net = read_net_tsv(&net)?;
            let mut graph = read_graph_tsv(&graph)?;
            if graph.n() != net.len() {
                return Err(warpcone::Error::input("graph and net sizes differ"));
            }
            graph.set_cell_measure(net.cell_measure.clone())?;
            let space = *net.space();
            let ahlfors = verify_ahlfors(
                space,
                24,
                &default_radii(&space, 0.05, 0.7, 10),
                5000,
                derive_seed(seed, "ahlfors", 0),
            )?;
            let report = spectral_report(&graph, &ahlfors, &p, restarts, seed)?;
            let degrees = degree_report(&graph, &ahlfors, graph.lipschitz())?;
            if degrees.violation {
                violations.push(format!(
                    "max degree {} exceeds bound {:.2}",
                    degrees.max_degree, degrees.bound_total
                ));
            }
            if report.forward_margin.is_finite() && report.forward_margin < -1e-2 {
                violations.push(format!(
                    "forward margin {} below -0.01",
                    report.forward_margin
                ));
            }
            let fresh = !out.exists();
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&out)?;
            use std::io::Write;
            if fresh {
                writeln!(file, "{CSV_HEADER}")?;
            }
            writeln!(file, "{}", csv_row(&report))?;
            println!(
                "t = {}: lambda2 = {:.6}, kappa = {:.6}, markov = {:.6} -> {}",
                report.t,
                report.lambda2,
                report.kappa_hat,
                report.markov_norm,
                out.display()
            );
        }
        Cmd::QiCheck {
            graphs,
            subdivide,
            restarts,
            seed,
            out,
        } => {
            let mut family = Vec::new();
            for path in &graphs {
                family.push(read_graph_tsv(path)?.union_simple());
            }
            let report = qi_invariance_check(&family, subdivide, restarts, seed)?;
            use std::io::Write;
            let mut w = std::io::BufWriter::new(std::fs::File::create(&out)?);
            writeln!(
                w,
                "n_original,n_subdivided,eta1_original,eta1_subdivided,bound,margin"
            )?;
            for row in &report.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    row.n_original,
                    row.n_subdivided,
                    row.eta_original,
                    row.eta_subdivided,
                    row.bound,
                    row.margin
                )?;
            }
            if report.violations > 0 {
                violations.push(format!("{} transfer-bound violations", report.violations));
            }
            println!(
                "qi-check: {} graphs, family eta1 = {:.6}, {} violations -> {}",
                report.rows.len(),
                report.family_eta,
                report.violations,
                out.display()
            );
        }
        Cmd::Family { config } => {
            let config = ExperimentConfig::from_path(&config)?;
            let outcome = harness::run_family(&config)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            violations.extend(outcome.violations.iter().cloned());
            println!("verdict: {}", outcome.verdict.verdict);
            println!(
                "growth {:.2}x, eta(2,1) in [{:.6}, {:.6}], kappa in [{:.6}, {:.6}]",
                outcome.verdict.trend.growth,
                outcome.verdict.trend.eta_min,
                outcome.verdict.trend.eta_max,
                outcome.verdict.trend.kappa_min,
                outcome.verdict.trend.kappa_max
            );
            println!("rows -> {}", outcome.csv_path.display());
        }
        Cmd::Plots { report, out } => {
            let rows = harness::read_report_csv(&report)?;
            let verdict = harness::decide_verdict(&rows, &harness::VerdictPolicy::default())?;
            let files = harness::emit_plots(&verdict, &out)?;
            println!("plots: {} series -> {}", files.len(), out.display());
        }
    }
    Ok(violations)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in &violations {
                eprintln!("invariant violation: {v}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
