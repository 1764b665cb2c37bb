// `!(x >= c)` is used deliberately in input validation so NaN fails too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Finite level graphs of finitely generated group actions on compact
//! metric measure spaces, with estimators for the spectral quantities that
//! tie the action gap to the expansion of the graph family.
//!
//! The pipeline: pick a maximal `1/t`-separated net on the space, take its
//! Voronoi partition, connect cells that a generator maps across (weighted
//! by sampled mass) and cells within `3/t` of each other, then estimate
//! `lambda_2`, p-Poincaré expansion constants, the measure-weighted action
//! gap, and the restricted Markov norm per level. The harness sweeps levels,
//! reduces the rows to an expander/non-expander verdict, and transfers
//! expansion constants across explicit quasi-isometries.

pub mod error;
pub mod graph;
pub mod harness;
pub mod net;
pub mod qi;
pub mod rng;
pub mod spaces;
pub mod spectra;
pub mod warpgraph;

pub use error::{Error, Result};
pub use graph::SimpleGraph;
pub use harness::{
    decide_verdict, emit_plots, run_family, Budgets, ExperimentConfig, FamilyOutcome,
    FamilyVerdict, Verdict, VerdictPolicy,
};
pub use net::{build_net, estimate_cell_measures, verify_ahlfors, AhlforsEstimate, Net, NetParams};
pub use qi::{qi_invariance_check, subdivide, transfer_bound, QIParams};
pub use spaces::{Action, ActionConfig, Generator, GeneratorConfig, Point, Space};
pub use spectra::{
    eta, expansion_margins, kappa_hat, lambda2, markov_norm, pairwise_form_ratio, spectral_report,
    SpectralReport,
};
pub use warpgraph::{
    bilipschitz_check, build_field, build_graph, degree_report, Variant, WarpedDistanceField,
    WarpedGraph,
};
