//! Property tests for the construction invariants.

use proptest::prelude::*;
use warpcone::graph::SimpleGraph;
use warpcone::net::{build_net, NetParams};
use warpcone::qi::{transfer_bound, QIParams};
use warpcone::rng::substream;
use warpcone::spaces::Space;
use warpcone::spectra::{eta, lambda2, pairwise_form_ratio};

use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Every constructed net is exactly 1/t-separated; density holds up to
    /// the quantified slack of the probabilistic maximality certificate:
    /// a rejection streak of 200 #Z can leave uncovered pockets of measure
    /// ~1/(200 #Z), whose depth excess stays within a few percent of the
    /// separation radius. Voronoi ownership inside the inner ball is exact.
    #[test]
    fn net_separation_and_density(t in 1.5f64..12.0, seed in 0u64..500, circle: bool) {
        let space = if circle { Space::circle() } else { Space::flat_torus(2).unwrap() };
        let net = build_net(space, t, seed, &NetParams::default()).unwrap();
        prop_assert!(net.warnings.is_empty(), "{:?}", net.warnings);
        let pts = net.points();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                prop_assert!(space.distance(&pts[i], &pts[j]).unwrap() >= 1.0 / t);
            }
        }
        let mut rng = substream(seed, "prop-density", 1);
        for _ in 0..200 {
            let x = space.uniform(&mut rng);
            let (owner, d) = net.index().nearest(&x);
            prop_assert!(d <= 1.05 / t, "gap {d} > 1.05/{t}");
            prop_assert_eq!(net.assign_cell(&x), owner);
            for (z, dz) in net.index().within(&x, 0.5 / t) {
                if dz < 0.5 / t {
                    prop_assert_eq!(owner, z);
                }
            }
        }
    }

    /// The transfer bound grows with the source expansion constant and
    /// shrinks as any ball-size constant grows.
    #[test]
    fn transfer_bound_monotonicity(
        eta_lo in 0.01f64..1.0,
        bump in 0.01f64..5.0,
        c in 1.0f64..4.0,
        a in 0.0f64..2.0,
        b in 0.0f64..2.0,
        degree in 3usize..8,
    ) {
        let params = QIParams::new(c, a, b, degree).unwrap();
        let lo = transfer_bound(eta_lo, &params).unwrap();
        let hi = transfer_bound(eta_lo + bump, &params).unwrap();
        prop_assert!(hi > lo, "not increasing in eta: {hi} <= {lo}");

        // growing the degree grows every K_r, shrinking the bound
        let looser = QIParams::new(c, a + 1.0, b + 1.0, degree + 2).unwrap();
        prop_assert!(transfer_bound(eta_lo, &looser).unwrap() <= lo);
    }

    /// The factor-4 equivalence holds for arbitrary zero-average data.
    #[test]
    fn form_ratio_in_band(n in 2usize..40, seed in 0u64..1000) {
        let mut rng = substream(seed, "prop-form", 0);
        let mut mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = mu.iter().sum();
        for m in &mut mu { *m /= total; }
        let mut f: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let mean: f64 = f.iter().zip(&mu).map(|(fz, &m)| m * fz[0]).sum();
        for fz in &mut f { fz[0] -= mean; }
        let r = pairwise_form_ratio(&mu, &f).unwrap();
        prop_assert!(r.degenerate || (0.5 - 1e-9..=2.0 + 1e-9).contains(&r.ratio));
    }

    /// eta(2,1) agrees with lambda2/2 on random connected graphs: two
    /// independent estimator paths.
    #[test]
    fn eta_matches_half_lambda2(n in 4usize..24, seed in 0u64..300) {
        let mut rng = substream(seed, "prop-eta", 0);
        let mut edges: Vec<(u32, u32)> = (0..n as u32).map(|v| (v, (v + 1) % n as u32)).collect();
        for _ in 0..n {
            edges.push((rng.gen_range(0..n as u32), rng.gen_range(0..n as u32)));
        }
        let g = SimpleGraph::from_edges(n, edges);
        let l2 = lambda2(&g).unwrap().value;
        let e = eta(&g, 2.0, 1, 4, seed).unwrap().value;
        prop_assert!((e - l2 / 2.0).abs() < 1e-6, "eta {e} vs lambda2/2 {}", l2 / 2.0);
    }
}
