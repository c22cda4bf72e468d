use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use qmod_core::elliptic::{mu, mu_inv};
use qmod_core::geometry::{
    equal_area_q1, equal_area_q2, equal_area_t, polygon_area, similarity, validate_polygon,
};
use qmod_core::mesh::{refine, triangulate, RefinementMarking};
use qmod_core::{Domain, Point, Polygon, Quadrilateral};

/// Star-shaped loop around the origin, counter-clockwise.
fn star_polygon() -> impl Strategy<Value = Vec<Point>> {
    (4usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(0.2f64..0.8, n),
            prop::collection::vec(0.5f64..2.0, n),
        )
            .prop_map(move |(jitter, radii)| {
                (0..n)
                    .map(|k| {
                        let theta = 2.0 * PI * (k as f64 + jitter[k]) / n as f64;
                        Point::polar(radii[k], theta)
                    })
                    .collect()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validation_is_idempotent(pts in star_polygon()) {
        let p = validate_polygon(pts).unwrap();
        let again = validate_polygon(p.vertices().to_vec()).unwrap();
        prop_assert_eq!(p, again);
    }

    #[test]
    fn clockwise_input_is_reversed(pts in star_polygon()) {
        let ccw = validate_polygon(pts.clone()).unwrap();
        let (cw, reversed) = Polygon::new(pts.into_iter().rev().collect()).unwrap();
        prop_assert!(reversed);
        prop_assert!((cw.area() - ccw.area()).abs() <= 1e-12 * ccw.area());
    }

    #[test]
    fn similarity_scales_area(
        pts in star_polygon(),
        scale in 0.1f64..10.0,
        rot in -PI..PI,
        tx in -5.0f64..5.0,
        ty in -5.0f64..5.0,
    ) {
        let p = validate_polygon(pts).unwrap();
        let q = similarity(&p, scale, rot, Point::new(tx, ty)).unwrap();
        let expected = scale * scale * polygon_area(&p);
        prop_assert!((polygon_area(&q) - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn arcs_partition_edges(pts in star_polygon(), picks in prop::collection::btree_set(0usize..12, 4)) {
        let n = pts.len();
        let mut marked: Vec<usize> = picks.into_iter().map(|i| i % n).collect();
        marked.sort_unstable();
        marked.dedup();
        prop_assume!(marked.len() == 4);
        let q = Quadrilateral::new(pts, [marked[0], marked[1], marked[2], marked[3]]).unwrap();
        let mut seen = vec![false; n];
        for j in 0..4 {
            let edges = q.arc_edges(j);
            prop_assert!(!edges.is_empty());
            for e in edges {
                prop_assert!(!seen[e]);
                seen[e] = true;
                prop_assert_eq!(q.arc_of_edge(e), j);
            }
        }
        prop_assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn equal_area_trapezoid_matches(
        r in 0.05f64..2.0,
        s in 0.05f64..2.0,
        alpha in 0.0..=FRAC_PI_2,
        beta in FRAC_PI_2..=PI,
    ) {
        let t = equal_area_t(r, s, alpha, beta);
        prop_assume!(t.is_ok());
        let t = t.unwrap();
        let a1 = validate_polygon(equal_area_q1(r, s, alpha, beta).to_vec()).unwrap().area();
        let a2 = validate_polygon(equal_area_q2(r, s, t).to_vec()).unwrap().area();
        prop_assert!(t > 0.0);
        prop_assert!((a1 - a2).abs() <= 1e-10 * a1.max(1.0));
    }

    #[test]
    fn mu_round_trip(ln_r in -30.0f64..-1e-6) {
        let r = ln_r.exp();
        let y = mu(r).unwrap();
        let back = mu_inv(y).unwrap();
        prop_assert!((back - r).abs() <= 1e-10 * r);
    }

    #[test]
    fn refinement_conserves_area(seed in prop::collection::vec(any::<bool>(), 1..200)) {
        let q = qmod_core::geometry::quad_from_points([
            Point::new(2.0, 1.0), Point::new(0.0, 1.0), Point::new(0.0, 0.0), Point::new(1.0, 0.0),
        ]).unwrap();
        let mesh = triangulate(&Domain::from(q), 0.1).unwrap();
        let n = mesh.triangle_count();
        let marked: Vec<usize> = (0..n).filter(|&i| seed[i % seed.len()]).collect();
        let fine = refine(&mesh, &RefinementMarking { indicators: vec![0.0; n], marked }).unwrap();
        prop_assert!((fine.total_area() - 1.5).abs() <= 1e-12);
        prop_assert_eq!(fine.euler_characteristic(), 1);
        prop_assert!(fine.check().is_ok());
    }
}
