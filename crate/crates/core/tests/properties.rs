use std::f64::consts::{PI, TAU};

use approx::assert_relative_eq;
use proptest::prelude::*;
use tubelab_core::bounds::{betti_bound, betti_bound_limit, jacobian_bound_rhs, TubeParams};
use tubelab_core::count::{GeodesicCounter, SolverOptions};
use tubelab_core::loops::{loop_betti_sum, BettiTable};
use tubelab_core::metric::{
    eval_metric_jet, jacobi_operator, parse_metric, riemann, Metric, ModelSpace,
};

const WAVY: &str = "dim 2\n\
    domain x1 in (-2, 2)\n\
    domain x2 in (-2, 2)\n\
    g11 = 1 + 0.3*sin(x1)*cos(x2)\n\
    g12 = 0.1*x1*x2\n\
    g22 = exp(0.2*x1) + 0.1*x2^2\n";

fn wavy() -> Metric {
    Metric::from_source(WAVY).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jet_matches_finite_differences(x1 in -1.5f64..1.5, x2 in -1.5f64..1.5) {
        let m = wavy();
        let x = [x1, x2];
        let jet = eval_metric_jet(&m, &x, 2).unwrap();
        let h = 1e-5;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let (gp, gm) = (m.g(&xp).unwrap(), m.g(&xm).unwrap());
            for i in 0..2 {
                for j in 0..2 {
                    let fd = (gp[2 * i + j] - gm[2 * i + j]) / (2.0 * h);
                    prop_assert!((jet.dg(k, i, j) - fd).abs() < 1e-8, "dg {k}{i}{j}: {} vs {fd}", jet.dg(k, i, j));
                    let jp = eval_metric_jet(&m, &xp, 1).unwrap();
                    let jm = eval_metric_jet(&m, &xm, 1).unwrap();
                    for l in 0..2 {
                        let fd2 = (jp.dg(l, i, j) - jm.dg(l, i, j)) / (2.0 * h);
                        prop_assert!((jet.ddg(k, l, i, j) - fd2).abs() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn curvature_symmetries(x1 in -1.5f64..1.5, x2 in -1.5f64..1.5) {
        let c = riemann(&wavy(), &[x1, x2]).unwrap();
        prop_assert!(c.bianchi_residual() < 1e-12);
        prop_assert!(c.antisymmetry_residual() < 1e-12);
    }

    #[test]
    fn jacobi_operator_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0.0f64..(2.0 * PI)) {
        let m = ModelSpace::perturbed_sphere(1.0, 0.1).metric().unwrap();
        let x = [1.1, 0.4];
        let g = m.g(&x).unwrap();
        let (c, s) = (t.cos(), t.sin());
        let gd = [c / g[0].sqrt(), s / g[3].sqrt()];
        let u = [0.3, -1.2];
        let v = [0.7, 0.5];
        let w: Vec<f64> = (0..2).map(|i| a * u[i] + b * v[i]).collect();
        let lu = jacobi_operator(&m, &x, &gd, &u).unwrap();
        let lv = jacobi_operator(&m, &x, &gd, &v).unwrap();
        let lw = jacobi_operator(&m, &x, &gd, &w).unwrap();
        for i in 0..2 {
            prop_assert!((lw[i] - (a * lu[i] + b * lv[i])).abs() < 1e-12 * (1.0 + lw[i].abs()));
        }
        let self_image = jacobi_operator(&m, &x, &gd, &gd).unwrap();
        prop_assert!(self_image.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn printed_metric_parses_back(r in 0.2f64..5.0, k in -2.0f64..2.0, n in 2usize..5) {
        for model in [ModelSpace::RoundSphere { radius: r, dim: n }, ModelSpace::SpaceForm { curvature: k, dim: n }] {
            let once = parse_metric(&model.source()).unwrap();
            let twice = parse_metric(&once.to_string()).unwrap();
            prop_assert_eq!(once.to_string(), twice.to_string());
            let x: Vec<f64> = (0..n).map(|i| 0.3 + 0.1 * i as f64).collect();
            let (a, b) = (Metric::new(once), Metric::new(twice));
            prop_assert_eq!(a.g(&x).unwrap(), b.g(&x).unwrap());
        }
    }

    #[test]
    fn bound_rhs_is_sinh_power(sigma in 0.0f64..20.0, r in 0.5f64..50.0, m in 1usize..4) {
        let tp = TubeParams::new(r, m + 1).unwrap();
        let direct = (2.0 * r / PI * (sigma * PI / (2.0 * r)).sinh()).powi(2 * m as i32);
        let rhs = jacobian_bound_rhs(sigma, &tp, m);
        prop_assert!((rhs - direct).abs() <= 1e-12 * direct.max(1e-300) || (rhs == 0.0 && direct == 0.0), "{rhs} {direct}");
    }

    #[test]
    fn betti_sums_increase(n in 2usize..8, k in 1usize..500) {
        let t = BettiTable { n };
        prop_assert!(t.partial_sum(k + 1) >= t.partial_sum(k));
        prop_assert_eq!(t.partial_sum(k), t.partial_sum_enumerated(k));
        let sphere = ModelSpace::RoundSphere { radius: 1.0, dim: n };
        prop_assert_eq!(loop_betti_sum(&sphere, k).unwrap(), t.partial_sum(k));
    }

    #[test]
    fn betti_bound_decreases_in_r(k in 1usize..50, c in 0.5f64..5.0, r in 0.5f64..20.0) {
        let vol = 4.0 * PI;
        let small = betti_bound(k, c, &TubeParams::new(r, 2).unwrap(), vol).unwrap();
        let large = betti_bound(k, c, &TubeParams::new(2.0 * r, 2).unwrap(), vol).unwrap();
        let limit = betti_bound_limit(k, c, 2, vol).unwrap();
        prop_assert!(small >= large && large >= limit * (1.0 - 1e-12));
    }

    #[test]
    fn round_distance_is_a_metric(a in 0.1f64..3.0, b in 0.0f64..TAU, c in 0.1f64..3.0, d in 0.0f64..TAU, e in 0.1f64..3.0, f in 0.0f64..TAU) {
        let s = ModelSpace::unit_sphere();
        let (p, q, r) = ([a, b], [c, d], [e, f]);
        let pq = s.round_distance(&p, &q).unwrap();
        prop_assert!((pq - s.round_distance(&q, &p).unwrap()).abs() < 1e-14);
        prop_assert!(pq <= PI + 1e-15 && pq >= 0.0);
        prop_assert!(pq <= s.round_distance(&p, &r).unwrap() + s.round_distance(&r, &q).unwrap() + 1e-12);
        let dot = a.cos() * c.cos() + a.sin() * c.sin() * (b - d).cos();
        prop_assert!((pq - dot.clamp(-1.0, 1.0).acos()).abs() < 1e-6);
    }
}

#[test]
fn betti_bound_converges_to_flat_limit() {
    let vol = 4.0 * PI;
    for k in [1, 10, 100] {
        let limit = betti_bound_limit(k, 4.0, 2, vol).unwrap();
        let mut previous = f64::INFINITY;
        for r in [1e1, 1e3, 1e6] {
            let b = betti_bound(k, 4.0, &TubeParams::new(r, 2).unwrap(), vol).unwrap();
            let gap = (b - limit) / limit;
            assert!(gap >= -1e-12 && gap < previous, "k = {k}, R = {r}: {gap}");
            previous = gap;
        }
        assert!(previous < 1e-6);
        let at_inf = betti_bound(k, 4.0, &TubeParams::new(f64::INFINITY, 2).unwrap(), vol).unwrap();
        assert_relative_eq!(at_inf, limit, max_relative = 1e-12);
    }
}

#[test]
fn counts_grow_with_length() {
    let m = ModelSpace::unit_sphere().metric().unwrap();
    let p = [PI / 2.0, 0.0];
    let counter = GeodesicCounter::new(
        &m,
        &p,
        20.0,
        SolverOptions {
            directions: 96,
            ..SolverOptions::default()
        },
        3,
    )
    .unwrap();
    for x in [[1.0, 2.0], [2.5, 0.3], [PI / 2.0, 4.0]] {
        let mut last = 0;
        for t in [1.0, 3.0, 6.0, 9.0, 12.0, 15.0, 20.0] {
            let c = counter.count(&x, t).unwrap().count;
            assert!(c >= last, "x = {x:?}, T = {t}: {c} < {last}");
            last = c;
        }
        assert!(last >= 6);
    }
}
