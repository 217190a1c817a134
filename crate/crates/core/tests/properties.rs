use proptest::prelude::*;

use rgnn_lab::bisim;
use rgnn_lab::gallery;
use rgnn_lab::generate::{self, red_green_palette};
use rgnn_lab::semantics;
use rgnn_lab::transform::{self, Variant};
use rgnn_lab::verify;
use rgnn_lab::{Graph, RVector, Rational};

fn graph(max_n: usize, palette: Vec<RVector>) -> impl Strategy<Value = Graph> {
    (any::<u64>(), 1..=max_n, 0i64..=4, prop::bool::ANY).prop_map(move |(seed, n, p, loops)| {
        let loops = if loops { Rational::new(1, 4) } else { Rational::zero() };
        generate::random_graph(&mut generate::rng(seed), n, &Rational::new(p, 4), &loops, &palette).unwrap()
    })
}

fn two_labels() -> Vec<RVector> {
    vec![RVector::from_ints(&[0]), RVector::from_ints(&[1])]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graph_json_roundtrip(g in graph(8, red_green_palette())) {
        prop_assert_eq!(Graph::from_json(&g.to_json()).unwrap(), g);
    }

    #[test]
    fn colour_refinement_matches_pruning(g in graph(6, two_labels())) {
        let colour = bisim::refine(&g);
        prop_assert!(bisim::is_stable(&g, &colour));
        let oracle = bisim::greatest_bisimulation(&g);
        for u in 0..g.len() {
            for v in 0..g.len() {
                prop_assert_eq!(colour[u] == colour[v], oracle[u][v]);
            }
        }
    }

    #[test]
    fn random_covers_are_bisimilar(g in graph(6, two_labels()), k in 1usize..=3, seed in any::<u64>()) {
        let (cover, base, z) = bisim::random_cover(&mut generate::rng(seed), &g, k).unwrap();
        prop_assert!(bisim::check_graded_bisimulation(&cover, &base, &z).ok);
        prop_assert!(bisim::is_totally_surjective(&z, &cover, &base));
        let p = bisim::coarsest_graded_bisimulation(&cover, &base).unwrap();
        prop_assert!(z.pairs().all(|(u, v)| p.block_of(false, u) == p.block_of(true, v)));
        prop_assert!(bisim::check_graded_bisimulation(&cover, &base, &bisim::partition_relation(&p)).ok);
    }

    #[test]
    fn halting_runs_agree_across_covers(g in graph(6, red_green_palette()), seed in any::<u64>()) {
        let (cover, base, z) = bisim::random_cover(&mut generate::rng(seed), &g, 2).unwrap();
        for e in gallery::halting_entries().into_iter().filter(|e| e.palette == red_green_palette()) {
            let h = e.as_halting().unwrap();
            let a = semantics::run_halting(h, &cover, 100).unwrap();
            let b = semantics::run_halting(h, &base, 100).unwrap();
            prop_assert_eq!(a.k, b.k);
            prop_assert!(z.pairs().all(|(u, v)| a.output[u] == b.output[v]));
        }
    }

    #[test]
    fn c2h_preserves_outputs(g in graph(8, red_green_palette())) {
        for e in gallery::converging() {
            let conv = semantics::run_converging(e.base(), &g, 100).unwrap();
            let h = transform::to_halting(e.base()).unwrap();
            let halt = semantics::run_halting(&h, &g, 100).unwrap();
            prop_assert_eq!(&halt.output, &conv.output);
            prop_assert_eq!(halt.k, conv.k + 1);
        }
    }

    #[test]
    fn h2c_runs_verify(g in graph(8, red_green_palette()), simple in prop::bool::ANY) {
        let e = gallery::get("reach-red").unwrap();
        let variant = if simple { Variant::Simple } else { Variant::General };
        let v = verify::verify_on_graph(e.as_halting().unwrap(), &g, variant, e.bound.as_ref(), 100).unwrap();
        prop_assert!(v.report.all_pass(), "{:?}", v.report.failures.first());
        let truth = semantics::run_halting(e.as_halting().unwrap(), &g, 100).unwrap();
        prop_assert!(v.report.components.values().all(|c| c.k_gamma.unwrap() <= truth.k));
    }

    #[test]
    fn trace_file_roundtrip(g in graph(6, red_green_palette())) {
        let e = gallery::get("counter-k").unwrap();
        let c = transform::to_converging(e.as_halting().unwrap()).unwrap();
        let t = semantics::trace_converging(&c.derived, &g, 100, Some(&c.observer)).unwrap();
        let text = semantics::trace_to_string(&t);
        let back = semantics::read_trace(text.as_bytes(), g.ids()).unwrap();
        prop_assert_eq!(semantics::trace_to_string(&back), text);
        let th = semantics::trace_halting(e.as_halting().unwrap(), &g, 100).unwrap();
        let text = semantics::trace_to_string(&th);
        let back = semantics::read_trace(text.as_bytes(), g.ids()).unwrap();
        prop_assert_eq!(back.k_gamma, th.k_gamma);
    }
}
