//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_3, LN_2};
use std::process::ExitCode;
use std::time::Instant;

use qmod_core::elliptic::{asymptotic_modulus, bowman_modulus};
use qmod_core::experiments::{
    exp_duplication, exp_sum_inequality, run_sweep, Experiment, SweepParams,
};
use qmod_core::fem::{assemble_and_solve, assemble_stiffness, BoundaryConditions, DEFAULT_REL_TOL};
use qmod_core::geometry::{quad_from_points, regular_polygon};
use qmod_core::mesh::{triangulate, RefinementMarking};
use qmod_core::modulus::{quad_modulus, ring_capacity, DEFAULT_MAX_DOFS, DEFAULT_TOL};
use qmod_core::{AdaptiveOptions, Domain, ModulusResult, Point, Quadrilateral, RingCondenser};

/// Slack for comparisons that are exact in real arithmetic.
const ROUNDING: f64 = 1e-12;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn p(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

fn quad(z: [Point; 4]) -> Quadrilateral {
    quad_from_points(z).expect("valid quadrilateral")
}

fn default_modulus(q: &Quadrilateral) -> ModulusResult {
    quad_modulus(q, DEFAULT_TOL, DEFAULT_MAX_DOFS).expect("solve succeeds")
}

fn contains(r: &ModulusResult, x: f64) -> bool {
    r.lower <= x + ROUNDING * x && x <= r.upper + ROUNDING * x
}

fn rectangle_exactness() -> Outcome {
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    let mut ok = true;
    for h in [0.5, 1.0, 2.0, 5.0] {
        let t = Instant::now();
        let r = default_modulus(&quad([p(1.0, h), p(0.0, h), p(0.0, 0.0), p(1.0, 0.0)]));
        let secs = t.elapsed().as_secs_f64();
        let rel = (r.value - h).abs() / h;
        ok &= rel <= 1e-3 && contains(&r, h) && secs <= 60.0;
        worst = worst.max(rel);
        slowest = slowest.max(secs);
    }
    outcome(
        ok,
        format!("max rel err {worst:.2e}, slowest {slowest:.2}s"),
    )
}

fn sample_quads() -> Vec<(&'static str, Quadrilateral)> {
    let l_shape = Quadrilateral::new(
        vec![
            p(0.0, 0.0),
            p(2.0, 0.0),
            p(2.0, 1.0),
            p(1.0, 1.0),
            p(1.0, 2.0),
            p(0.0, 2.0),
        ],
        [0, 1, 4, 5],
    )
    .expect("valid L-shape");
    vec![
        (
            "rectangle",
            quad([p(1.0, 2.0), p(0.0, 2.0), p(0.0, 0.0), p(1.0, 0.0)]),
        ),
        (
            "square",
            quad([p(1.0, 1.0), p(0.0, 1.0), p(0.0, 0.0), p(1.0, 0.0)]),
        ),
        (
            "trapezoid h=2",
            quad([p(1.0, 2.0), p(0.0, 1.0), p(0.0, 0.0), p(1.0, 0.0)]),
        ),
        (
            "trapezoid h=3",
            quad([p(1.0, 3.0), p(0.0, 2.0), p(0.0, 0.0), p(1.0, 0.0)]),
        ),
        ("L-shape", l_shape),
    ]
}

fn reciprocity_bracket() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, q) in sample_quads() {
        // tightening the tolerance refines further; the product must not grow
        let products: Vec<f64> = [1e-2, 1e-3, DEFAULT_TOL]
            .iter()
            .map(|&tol| {
                quad_modulus(&q, tol, DEFAULT_MAX_DOFS)
                    .unwrap()
                    .reciprocity_product()
            })
            .collect();
        let product = *products.last().unwrap();
        let shrinking = products.windows(2).all(|w| w[1] <= w[0] + ROUNDING);
        ok &= (1.0 - ROUNDING..=1.002).contains(&product) && shrinking;
        parts.push(format!(
            "{name} {:.2e}→{:.2e}",
            products[0] - 1.0,
            product - 1.0
        ));
    }
    outcome(ok, format!("product − 1: {}", parts.join(", ")))
}

fn bowman_cross_validation() -> Outcome {
    let mut worst = 0.0f64;
    for h in [1.5, 2.0, 3.0] {
        let r = default_modulus(&quad([
            p(1.0, h),
            p(0.0, h - 1.0),
            p(0.0, 0.0),
            p(1.0, 0.0),
        ]));
        worst = worst.max((r.value - bowman_modulus(h).unwrap()).abs());
    }
    outcome(worst <= 2e-3, format!("max |FEM − M(h)| = {worst:.2e}"))
}

fn bounds_and_asymptotics() -> Outcome {
    let hs: Vec<f64> = (0..8).map(|k| 1.5 + 0.5 * k as f64).collect();
    let bounded = hs.iter().all(|&h| {
        let m = bowman_modulus(h).unwrap();
        h - 1.0 <= m && m <= h
    });
    let gaps: Vec<f64> = [2.0, 3.0, 4.0, 5.0]
        .iter()
        .map(|&h| (bowman_modulus(h).unwrap() - asymptotic_modulus(h)).abs())
        .collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let at4 = gaps[2];
    outcome(
        bounded && decreasing && at4 <= 1e-3,
        format!(
            "gaps {:.1e} {:.1e} {:.1e} {:.1e}",
            gaps[0], gaps[1], gaps[2], gaps[3]
        ),
    )
}

fn sum_inequality() -> Outcome {
    let t = Instant::now();
    let grid: Vec<f64> = (0..12).map(|k| 1.25 + 0.25 * k as f64).collect();
    let mut min_slack = f64::INFINITY;
    for &h in &grid {
        for &k in &grid {
            let r = exp_sum_inequality(h, k).unwrap();
            min_slack = min_slack.min(r.upper_slack.min(r.lower_slack));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        min_slack >= 0.0 && secs < 1.0,
        format!("min slack {min_slack:.4e} over 144 points, {secs:.3}s"),
    )
}

fn duplication_equality() -> Outcome {
    let opts = AdaptiveOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for h in [0.5, 1.0, 2.0] {
        let r = exp_duplication(p(1.0, h), p(0.0, h), &opts).unwrap();
        ok &= r.g.abs() <= r.bracket() + ROUNDING && r.g.abs() <= 5e-3;
        parts.push(format!(
            "h={h}: |g|={:.1e} ≤ {:.1e}",
            r.g.abs(),
            r.bracket()
        ));
    }
    outcome(ok, parts.join(", "))
}

fn square_cases() -> Outcome {
    let unit = default_modulus(&quad([p(1.0, 1.0), p(0.0, 1.0), p(0.0, 0.0), p(1.0, 0.0)]));
    let a = p(1.3, 0.4);
    let b = p(0.5 - a.y, a.x - 0.5);
    let one = p(1.0, 0.0);
    let tilted = default_modulus(&quad([a, b, one - a, one - b]));
    let (e1, e2) = ((unit.value - 1.0).abs(), (tilted.value - 1.0).abs());
    outcome(
        e1 <= 1e-3 && e2 <= 1e-3,
        format!("unit {e1:.1e}, tilted {e2:.1e}"),
    )
}

fn ring_annulus() -> Outcome {
    let t = Instant::now();
    let outer = regular_polygon(96, p(0.0, 0.0), 2.0, 0.0).unwrap();
    let inner = regular_polygon(96, p(0.0, 0.0), 1.0, 0.0).unwrap();
    let ring = RingCondenser::new(outer, inner).unwrap();
    let r = ring_capacity(&ring, DEFAULT_TOL, DEFAULT_MAX_DOFS).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let rel = (r.modulus - LN_2).abs() / LN_2;
    outcome(
        rel <= 0.02 && secs <= 120.0,
        format!(
            "modulus {:.6} (rel {rel:.2e}), {} dofs, {secs:.2}s",
            r.modulus, r.dofs
        ),
    )
}

fn conjecture_sweeps() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for experiment in [Experiment::Trans, Experiment::Dupl, Experiment::Area] {
        let grid = experiment.default_grid();
        let params = SweepParams::defaults(experiment);
        let first = run_sweep(experiment, &grid, &params, &|_, _| {}).unwrap();
        let second = run_sweep(experiment, &grid, &params, &|_, _| {}).unwrap();
        let deterministic = first.to_csv() == second.to_csv();
        let s = first.summary();
        let negative = first
            .records
            .iter()
            .filter(|r| !r.skipped && r.delta < 0.0)
            .count();
        ok &= deterministic && s.records == grid.len();
        let min = s.min_delta.map_or("none".to_string(), |(d, x, y)| {
            format!("{d:.2e} at ({x:.2}, {y:.2})")
        });
        parts.push(format!(
            "{experiment} {}x{}: deterministic={deterministic}, violated={}, indeterminate={}, skipped={}, negative-signed={negative} (review), min {min}",
            grid.nx, grid.ny, s.violated, s.indeterminate, s.skipped
        ));
        if s.violated > 0 {
            for r in first
                .records
                .iter()
                .filter(|r| !r.skipped && r.delta < -r.bracket)
            {
                println!(
                    "    review {experiment}: x={} y={} delta={:.3e} bracket={:.3e}",
                    r.x, r.y, r.delta, r.bracket
                );
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ok &= secs <= 1800.0;
    outcome(ok, format!("{}; {secs:.1}s total", parts.join("; ")))
}

fn solver_properties() -> Outcome {
    let q = quad([p(1.0, 2.0), p(0.0, 1.0), p(0.0, 0.0), p(1.0, 0.0)]);
    let bc = BoundaryConditions::quadrilateral();
    let mut mesh = triangulate(&Domain::from(q.clone()), 0.02).unwrap();
    let mut symmetric = true;
    let mut monotone = true;
    let mut max_principle = true;
    let mut last = f64::INFINITY;
    for _ in 0..5 {
        symmetric &= assemble_stiffness(&mesh).max_asymmetry() == 0.0;
        let sol = assemble_and_solve(&mesh, &bc, DEFAULT_REL_TOL).unwrap();
        monotone &= sol.energy <= last + 1e-12;
        last = sol.energy;
        max_principle &= sol
            .nodal_values
            .iter()
            .all(|&v| (-1e-8..=1.0 + 1e-8).contains(&v));
        let ind = qmod_core::fem::element_error_indicators(&mesh, &sol);
        let marking = RefinementMarking::dorfler(ind.indicators, 0.5);
        mesh = mesh.refine_marked(&marking.marked).unwrap().mesh;
    }

    let base = default_modulus(&q);
    let mut invariant = true;
    for scale in [0.5, 3.0] {
        for rot in [0.0, FRAC_PI_3] {
            let r = default_modulus(&q.transformed(scale, rot, p(0.3, -1.2)).unwrap());
            invariant &= r.lower <= base.upper + ROUNDING && base.lower <= r.upper + ROUNDING;
        }
    }
    outcome(
        symmetric && monotone && max_principle && invariant,
        format!("symmetric={symmetric} monotone={monotone} max-principle={max_principle} similarity={invariant}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("rectangle exactness", rectangle_exactness),
        ("reciprocity bracket", reciprocity_bracket),
        (
            "closed-form trapezoid cross-validation",
            bowman_cross_validation,
        ),
        ("trapezoid bounds and asymptotics", bounds_and_asymptotics),
        ("sum inequality grid", sum_inequality),
        ("duplication equality", duplication_equality),
        ("square cases", square_cases),
        ("ring annulus", ring_annulus),
        ("conjecture sweeps", conjecture_sweeps),
        ("solver properties", solver_properties),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
