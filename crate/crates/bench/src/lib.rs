//! Shared fixtures for the pipeline benchmarks.

use warpcone::net::{build_net, estimate_cell_measures, Net, NetParams};
use warpcone::spaces::{Action, Generator, Space};
use warpcone::warpgraph::{build_graph, Variant, WarpedGraph};

pub fn shear_action() -> (Space, Action) {
    let t2 = Space::flat_torus(2).unwrap();
    let action = Action::new(
        t2,
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
    (t2, action)
}

pub fn measured_net(space: Space, t: f64, seed: u64) -> Net {
    let net = build_net(space, t, seed, &NetParams::default()).unwrap();
    let est = estimate_cell_measures(&net, (10 * net.len()).max(50_000), seed ^ 1).unwrap();
    net.with_measures(est)
}

pub fn level_graph(net: &Net, action: &Action) -> WarpedGraph {
    build_graph(net, action, 100, 7, Variant::Full).unwrap()
}
