//! Randomized invariants over the public API: the algebraic identities that
//! must hold for every representable input, checked with shrinking.

use proptest::prelude::*;

use measure_infinity::density::{core_truncated_volume, oscillating_density_1d, CoreSpec};
use measure_infinity::dieudonne::choose_p;
use measure_infinity::function::{CylinderBody, Monomial, ProductFunction};
use measure_infinity::jessen::tail_integrate;
use measure_infinity::parallelepiped::{MeasureValue, Parallelepiped};
use measure_infinity::rgg::{
    build_graph, format_point_list, greedy_walk, parse_point_list, PointCloud,
};
use measure_infinity::sequences::{TailDescriptor, TailedSequence};

const TOL: f64 = 1e-9;

fn length_tail() -> impl Strategy<Value = TailDescriptor> {
    prop_oneof![
        (0.5f64..1.5).prop_map(TailDescriptor::Constant),
        (-0.5f64..0.5).prop_map(|a| TailDescriptor::PowerDrift { base: 1.0, a, p: 3.0 }),
        (-0.5f64..0.5, 0.3f64..0.8)
            .prop_map(|(a, q)| TailDescriptor::GeometricDrift { base: 1.0, a, q }),
        proptest::collection::vec(0.4f64..1.6, 1..=3).prop_map(TailDescriptor::Periodic),
    ]
}

/// A shift whose tail combines with `lengths` inside the descriptor family.
fn compatible_shift(lengths: &TailDescriptor, scale: f64) -> TailDescriptor {
    match lengths {
        TailDescriptor::Constant(_) => TailDescriptor::Constant(scale),
        TailDescriptor::PowerDrift { p, .. } => {
            TailDescriptor::PowerDrift { base: scale, a: -scale / 2.0, p: *p }
        }
        TailDescriptor::GeometricDrift { q, .. } => {
            TailDescriptor::GeometricDrift { base: scale, a: scale / 2.0, q: *q }
        }
        TailDescriptor::Periodic(cycle) => {
            TailDescriptor::Periodic(cycle.iter().map(|v| v * scale).collect())
        }
        TailDescriptor::Opaque { .. } => unreachable!("strategies emit no opaque tails"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_preserves_volume_classification(
        lower_prefix in proptest::collection::vec(-2.0f64..2.0, 0..3),
        lower_level in -1.0f64..1.0,
        lengths_prefix in proptest::collection::vec(0.1f64..2.0, 0..3),
        lengths_tail in length_tail(),
        shift_scale in -3.0f64..3.0,
        constant_shift in proptest::bool::ANY,
    ) {
        let lower = TailedSequence::new(lower_prefix, TailDescriptor::Constant(lower_level)).unwrap();
        let lengths = TailedSequence::new(lengths_prefix, lengths_tail.clone()).unwrap();
        let bx = Parallelepiped::new(lower.clone(), lower.add(&lengths).unwrap()).unwrap();
        let shift_tail = if constant_shift {
            TailDescriptor::Constant(shift_scale)
        } else {
            compatible_shift(&lengths_tail, shift_scale)
        };
        let shift = TailedSequence::new(vec![], shift_tail).unwrap();

        let moved = bx.translate(&shift).unwrap();
        let v0 = bx.volume(TOL).unwrap();
        let v1 = moved.volume(TOL).unwrap();
        prop_assert_eq!(std::mem::discriminant(&v0), std::mem::discriminant(&v1));
        if let (
            MeasureValue::Finite { value: a, err: ea },
            MeasureValue::Finite { value: b, err: eb },
        ) = (&v0, &v1)
        {
            prop_assert!((a - b).abs() <= ea + eb + 1e-15);
        }
    }

    #[test]
    fn deviation_index_bounds_all_later_sides(
        lengths_prefix in proptest::collection::vec(0.2f64..3.0, 0..4),
        a in -0.8f64..0.8,
        q in 0.3f64..0.9,
        eps in 1e-3f64..0.3,
    ) {
        let lengths = TailedSequence::new(
            lengths_prefix,
            TailDescriptor::GeometricDrift { base: 1.0, a, q },
        ).unwrap();
        let lower = TailedSequence::constant(0.0);
        let bx = Parallelepiped::new(lower.clone(), lower.add(&lengths).unwrap()).unwrap();
        let n = bx.tail_deviation_index(eps).unwrap();
        let sides = bx.lengths();
        for i in n..n + 1_000 {
            prop_assert!((sides.term(i) - 1.0).abs() < eps, "side {} deviates", i);
        }
    }

    #[test]
    fn truncated_core_volumes_shrink_geometrically(
        delta in 0.1f64..0.9,
        big_d in 0u64..6,
        extra in 1u64..30,
    ) {
        let spec = CoreSpec::new(Parallelepiped::unit_cube(), delta, 1e-12).unwrap();
        let v1 = core_truncated_volume(&spec, big_d, big_d + extra).unwrap();
        let v2 = core_truncated_volume(&spec, big_d, big_d + extra + 1).unwrap();
        prop_assert!(v2 <= v1);
        // One more retained coordinate multiplies the volume by delta.
        prop_assert!((v2 - v1 * delta).abs() <= 1e-12 * v1.max(1.0));
    }

    #[test]
    fn pointwise_algebra_matches_termwise_arithmetic(
        x_prefix in proptest::collection::vec(-2.0f64..2.0, 0..3),
        y_prefix in proptest::collection::vec(-2.0f64..2.0, 0..3),
        bases in (-1.0f64..1.0, -1.0f64..1.0),
        amps in (-1.0f64..1.0, -1.0f64..1.0),
        q in 0.3f64..0.8,
    ) {
        let x = TailedSequence::new(
            x_prefix,
            TailDescriptor::GeometricDrift { base: bases.0, a: amps.0, q },
        ).unwrap();
        let y = TailedSequence::new(
            y_prefix,
            TailDescriptor::GeometricDrift { base: bases.1, a: amps.1, q },
        ).unwrap();
        let sum = x.add(&y).unwrap();
        let diff = x.sub(&y).unwrap();
        let hi = x.max(&y).unwrap();
        let lo = x.min(&y).unwrap();
        for i in 1..=50u64 {
            let (xi, yi) = (x.term(i), y.term(i));
            prop_assert!((sum.term(i) - (xi + yi)).abs() <= 1e-12);
            prop_assert!((diff.term(i) - (xi - yi)).abs() <= 1e-12);
            prop_assert!((hi.term(i) - xi.max(yi)).abs() <= 1e-12);
            prop_assert!((lo.term(i) - xi.min(yi)).abs() <= 1e-12);
        }
    }

    #[test]
    fn tower_collapses_for_cylinder_polynomials(
        support in proptest::collection::btree_set(1u64..=7, 1..=3),
        coeffs in proptest::collection::vec(-2.0f64..2.0, 1..=3),
        exps in proptest::collection::vec(0u32..=3, 9),
        d2 in 1u64..=7,
        d1_frac in 0.0f64..1.0,
    ) {
        let support: Vec<u64> = support.into_iter().collect();
        let monomials: Vec<Monomial> = coeffs
            .iter()
            .enumerate()
            .map(|(m, &c)| {
                Monomial::new(c, (0..support.len()).map(|j| exps[3 * m + j]).collect())
            })
            .collect();
        let f = ProductFunction::cylinder(support, CylinderBody::Polynomial(monomials)).unwrap();
        let d1 = (d1_frac * d2 as f64) as u64;
        let deep = tail_integrate(&f, d2).unwrap();
        let composed = tail_integrate(deep.function(), d1).unwrap();
        let direct = tail_integrate(&f, d1).unwrap();
        prop_assert_eq!(composed.function(), direct.function());
        let refined = deep.refine(d1).unwrap();
        prop_assert_eq!(refined.function(), direct.function());
    }

    #[test]
    fn block_size_search_matches_linear_scan(
        a in 1e-6f64..0.2,
        beta in 0.5f64..1.0,
    ) {
        let p = choose_p(a, beta).unwrap();
        let feasible = |p: u64| -> bool {
            let t = (beta / a).ln();
            let side = 1.0 - t / p as f64;
            if !(side > 0.5) {
                return false;
            }
            let mu_c = side.powi(p as i32);
            let mu_d = mu_c + t * side.powi(p as i32 - 1);
            let scale = a / beta;
            let l = (1.0 / a).ln();
            mu_c >= scale / 2.0 && mu_d >= 0.5 * scale * l && mu_d <= 2.0 * scale * l
        };
        prop_assert!(feasible(p));
        // Linear scan from below: everything smaller is infeasible.
        for q in 1..p {
            prop_assert!(!feasible(q), "p = {} but {} is already feasible", p, q);
        }
    }

    #[test]
    fn radius_graphs_are_symmetric_and_strict(
        coords in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40),
        radius in 0.05f64..0.5,
    ) {
        let points: Vec<Vec<f64>> = coords.iter().map(|&(x, y)| vec![x, y]).collect();
        let cloud = PointCloud::from_points(&points).unwrap();
        let graph = build_graph(&cloud, radius).unwrap();
        let n = points.len();
        let r2 = radius * radius;
        let mut edges = 0u64;
        for u in 0..n {
            let nb = graph.neighbors(u);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]), "unsorted adjacency");
            for v in 0..n {
                let d2: f64 = points[u]
                    .iter()
                    .zip(&points[v])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let adjacent = nb.binary_search(&(v as u32)).is_ok();
                prop_assert_eq!(adjacent, u != v && d2 < r2);
                let back = graph.neighbors(v).binary_search(&(u as u32)).is_ok();
                prop_assert_eq!(adjacent, back, "asymmetric edge");
            }
            edges += nb.len() as u64;
        }
        prop_assert_eq!(graph.edge_count(), edges / 2);
    }

    #[test]
    fn greedy_walks_strictly_descend(
        coords in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40),
        radius in 0.1f64..0.6,
        start_frac in 0.0f64..1.0,
        query in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        let points: Vec<Vec<f64>> = coords.iter().map(|&(x, y)| vec![x, y]).collect();
        let cloud = PointCloud::from_points(&points).unwrap();
        let graph = build_graph(&cloud, radius).unwrap();
        let start = (start_frac * points.len() as f64) as usize % points.len();
        let query = [query.0, query.1];
        let walk = greedy_walk(&cloud, &graph, start, &query).unwrap();
        let dist = |v: usize| -> f64 {
            points[v]
                .iter()
                .zip(&query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        prop_assert_eq!(walk.path[0], start);
        for pair in walk.path.windows(2) {
            prop_assert!(dist(pair[1]) < dist(pair[0]));
        }
        for &w in graph.neighbors(walk.terminal) {
            prop_assert!(dist(w as usize) >= dist(walk.terminal));
        }
    }

    #[test]
    fn point_lists_round_trip_exactly(
        coords in proptest::collection::vec(
            proptest::collection::vec(-10.0f64..10.0, 3),
            1..20,
        ),
    ) {
        let text = format_point_list(&coords);
        let parsed = parse_point_list(&text, 3).unwrap();
        prop_assert_eq!(parsed, coords);
    }

    #[test]
    fn oscillation_rows_are_a_stable_prefix(m in 2u32..20) {
        let shorter = oscillating_density_1d(m - 1).unwrap();
        let longer = oscillating_density_1d(m).unwrap();
        prop_assert!(shorter.rows.len() < longer.rows.len());
        for (a, b) in shorter.rows.iter().zip(&longer.rows) {
            prop_assert_eq!(a.k, b.k);
            prop_assert_eq!(a.radius, b.radius);
            prop_assert_eq!(a.average, b.average);
        }
    }
}
