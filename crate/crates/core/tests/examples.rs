//! Worked values on the model spaces, computed by hand from closed forms.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use tubelab_core::bounds::{
    betti_bound, betti_bound_limit, betti_bound_surface, jacobian_bound_rhs, max_tube_radius,
    sinh_kernel, TubeParams,
};
use tubelab_core::count::{sphere_count_oracle, GeodesicCounter, SolverOptions};
use tubelab_core::jacobi::{
    cartan_matrix, compute_riccati, conjugate_points, exp_jacobian, gram_matrix, pole_mass,
    propagate_jacobi_grid, schwarzian_curvature, uniform_grid, wronskian_defects, GramMode,
    JacobiFrame, SchwarzianOptions,
};
use tubelab_core::loops::{gromov_check, loop_betti_sum, CountSource};
use tubelab_core::metric::{jacobi_operator, sectional, Metric, ModelSpace};

fn frame(model: &ModelSpace, p: &[f64], v: &[f64], length: f64) -> JacobiFrame {
    let m = model.metric().unwrap();
    propagate_jacobi_grid(&m, p, v, None, length, &uniform_grid(length, 0.01), 1e-12).unwrap()
}

fn equator(length: f64) -> JacobiFrame {
    frame(
        &ModelSpace::unit_sphere(),
        &[PI / 2.0, 0.0],
        &[0.0, 1.0],
        length,
    )
}

#[test]
fn polar_source_is_the_round_metric() {
    let m = Metric::from_source("dim 2\ng11 = 1\ng12 = 0\ng22 = sin(x1)^2\n").unwrap();
    let x = [0.7, 1.3];
    let g = m.g(&x).unwrap();
    assert_relative_eq!(g[3], 0.7f64.sin().powi(2), max_relative = 1e-15);
    assert_relative_eq!(
        sectional(&m, &x, &[1.0, 0.0], &[0.0, 1.0]).unwrap(),
        1.0,
        epsilon = 1e-9
    );
}

#[test]
fn sectional_curvatures() {
    let r2 = ModelSpace::RoundSphere {
        radius: 2.0,
        dim: 3,
    }
    .metric()
    .unwrap();
    let k = sectional(&r2, &[1.0, 1.2, 0.4], &[1.0, 0.5, 0.0], &[0.0, 1.0, 2.0]).unwrap();
    assert_relative_eq!(k, 0.25, epsilon = 1e-9);
    let h = ModelSpace::SpaceForm {
        curvature: -1.0,
        dim: 3,
    }
    .metric()
    .unwrap();
    let k = sectional(&h, &[0.2, -0.1, 0.3], &[1.0, 0.0, 0.3], &[0.0, 1.0, 0.0]).unwrap();
    assert_relative_eq!(k, -1.0, epsilon = 1e-9);
}

#[test]
fn jacobi_operator_on_space_forms() {
    for k in [-1.0, 0.5] {
        let m = ModelSpace::SpaceForm {
            curvature: k,
            dim: 3,
        }
        .metric()
        .unwrap();
        let x = [0.1, 0.2, -0.3];
        // conformal factor 2/(1 + K|x|²) makes λ⁻¹e_i orthonormal
        let lambda = 2.0 / (1.0 + k * 0.14);
        let gd = [1.0 / lambda, 0.0, 0.0];
        let v = [0.0, 0.7, -0.2];
        let out = jacobi_operator(&m, &x, &gd, &v).unwrap();
        for i in 0..3 {
            assert!((out[i] - k * v[i]).abs() < 1e-10, "{out:?}");
        }
    }
}

#[test]
fn gram_and_jacobian_on_the_sphere() {
    let jf = equator(4.0);
    let g = gram_matrix(&jf, PI / 2.0, GramMode::Normal).unwrap();
    assert!((g[(0, 0)] - 1.0).abs() < 1e-9);
    assert!((exp_jacobian(&jf, PI / 2.0).unwrap() - 1.0).abs() < 1e-9);
    assert!(exp_jacobian(&jf, PI).unwrap() < 1e-7);
    let e = ModelSpace::Euclidean { dim: 3 };
    let jf = frame(&e, &[0.0, 0.0, 0.0], &[0.0, 0.6, 0.8], 3.0);
    assert!((exp_jacobian(&jf, 2.0).unwrap() - 4.0).abs() < 1e-10);
}

#[test]
fn wronskians_stay_small() {
    let jf = equator(10.0);
    assert!(wronskian_defects(&jf, 10.0).unwrap().max() < 1e-8);
    let h = frame(
        &ModelSpace::SpaceForm {
            curvature: -1.0,
            dim: 2,
        },
        &[0.0, 0.0],
        &[0.5, 0.0],
        5.0,
    );
    assert!(wronskian_defects(&h, 5.0).unwrap().max() < 1e-7);
}

#[test]
fn conjugate_points_on_spheres() {
    let cps = conjugate_points(&equator(10.0), 0.0, 10.0).unwrap();
    let got: Vec<f64> = cps.iter().map(|c| c.sigma).collect();
    assert_eq!(got.len(), 3);
    for (g, w) in got.iter().zip([PI, 2.0 * PI, 3.0 * PI]) {
        assert!((g - w).abs() < 1e-6);
    }
    let r2 = frame(
        &ModelSpace::RoundSphere {
            radius: 2.0,
            dim: 2,
        },
        &[PI / 2.0, 0.0],
        &[0.0, 0.5],
        13.0,
    );
    let got: Vec<f64> = conjugate_points(&r2, 0.0, 13.0)
        .unwrap()
        .iter()
        .map(|c| c.sigma)
        .collect();
    assert_eq!(got.len(), 2);
    assert!((got[0] - 2.0 * PI).abs() < 1e-6 && (got[1] - 4.0 * PI).abs() < 1e-6);
}

#[test]
fn cartan_matrix_of_sine() {
    let s = equator(2.0).at(1.0).unwrap();
    let a = s.h.view((0, 0), (1, 1)).into_owned();
    let da = s.dh.view((0, 0), (1, 1)).into_owned();
    let c = cartan_matrix(&a, &da).unwrap();
    assert!((c[(0, 0)] - 1.0 / 1.0f64.tan()).abs() < 1e-9);
}

#[test]
fn schwarzian_of_cot_and_coth() {
    let jf = equator(2.0);
    let rm = compute_riccati(&jf, 0.05).unwrap();
    let r = schwarzian_curvature(&rm, &jf, 1.0, &SchwarzianOptions::default()).unwrap();
    assert!((r.recovered[(0, 0)] - 1.0).abs() < 1e-4);
    let jf = frame(
        &ModelSpace::SpaceForm {
            curvature: -1.0,
            dim: 2,
        },
        &[0.0, 0.0],
        &[0.5, 0.0],
        2.0,
    );
    let rm = compute_riccati(&jf, 0.05).unwrap();
    let r = schwarzian_curvature(&rm, &jf, 1.0, &SchwarzianOptions::default()).unwrap();
    assert!((r.recovered[(0, 0)] + 1.0).abs() < 1e-4);
}

#[test]
fn residues_and_masses() {
    let jf = equator(4.0);
    let rm = compute_riccati(&jf, 0.05).unwrap();
    let p0 = pole_mass(&rm, &jf, 0.0, 0.05, Some(PI / 2.0)).unwrap();
    assert!((&p0.c - DMatrix::<f64>::identity(2, 2)).amax() < 1e-6);
    assert!((p0.mu.unwrap() - DMatrix::<f64>::identity(2, 2) * (2.0 * PI)).amax() < 1e-5);
    let p1 = pole_mass(&rm, &jf, PI, 0.05, None).unwrap();
    assert!((p1.c[(0, 0)] - 1.0).abs() < 1e-6);
    // σ·f̃(σ) → id as σ → 0
    let s = jf.at(1e-3).unwrap();
    let ft = s.h.clone().try_inverse().unwrap() * &s.xi * 1e-3;
    assert!((ft - DMatrix::<f64>::identity(2, 2)).amax() < 1e-6);
}

#[test]
fn sinh_kernel_and_rhs_values() {
    let tp = TubeParams::new(PI / 2.0, 2).unwrap();
    assert_relative_eq!(sinh_kernel(1.0, &tp), 1.0f64.sinh(), max_relative = 1e-14);
    assert_relative_eq!(
        jacobian_bound_rhs(2.0, &tp, 1),
        2.0f64.sinh().powi(2),
        max_relative = 1e-12
    );
    assert!((jacobian_bound_rhs(2.0, &tp, 1) - 13.15412).abs() < 1e-5);
}

#[test]
fn betti_bound_values() {
    let vol = 4.0 * PI;
    let flat = TubeParams::new(f64::INFINITY, 2).unwrap();
    assert_relative_eq!(
        betti_bound(10, 4.0, &flat, vol).unwrap(),
        400.0,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        betti_bound_limit(10, 4.0, 2, vol).unwrap(),
        400.0,
        max_relative = 1e-14
    );
    let tp = TubeParams::new(PI / 2.0, 2).unwrap();
    let want = (1.0f64.cosh() - 1.0) / 2.0;
    assert_relative_eq!(
        betti_bound(1, 1.0, &tp, vol).unwrap(),
        want,
        max_relative = 1e-10
    );
    assert_relative_eq!(
        betti_bound_surface(1, 1.0, &tp, vol).unwrap(),
        want,
        max_relative = 1e-14
    );
    for k in [1, 5, 10] {
        let limit = betti_bound_limit(k, 4.0, 2, vol).unwrap();
        let g3 = betti_bound(k, 4.0, &TubeParams::new(1e3, 2).unwrap(), vol).unwrap() / limit - 1.0;
        let g6 = betti_bound(k, 4.0, &TubeParams::new(1e6, 2).unwrap(), vol).unwrap() / limit - 1.0;
        assert!(g3 <= 1e-3 && g6 <= 1e-9, "k = {k}: {g3} {g6}");
    }
}

#[test]
fn tube_radius_from_curvature() {
    assert_relative_eq!(max_tube_radius(-1.0).unwrap(), PI / 2.0);
    assert!(max_tube_radius(0.0).unwrap().is_infinite());
    assert_relative_eq!(max_tube_radius(-4.0).unwrap(), PI / 4.0);
}

#[test]
fn sphere_counts() {
    assert_eq!(sphere_count_oracle(PI / 2.0, 5.0 * PI, 1.0).unwrap(), 5);
    assert_eq!(sphere_count_oracle(PI / 2.0, 2.0 * PI, 1.0).unwrap(), 2);
    let m = ModelSpace::unit_sphere().metric().unwrap();
    let c = GeodesicCounter::new(
        &m,
        &[PI / 2.0, 0.0],
        5.0 * PI,
        SolverOptions {
            directions: 128,
            ..SolverOptions::default()
        },
        1,
    )
    .unwrap();
    let r = c.count(&[PI / 2.0, PI / 2.0], 5.0 * PI).unwrap();
    assert_eq!(r.count, 5);
    let mut lengths: Vec<f64> = r.found.iter().map(|f| f.length).collect();
    lengths.sort_by(f64::total_cmp);
    for (l, j) in lengths.iter().zip([1.0, 3.0, 5.0, 7.0, 9.0]) {
        assert!((l - j * PI / 2.0).abs() < 1e-8, "{lengths:?}");
    }
}

#[test]
fn loop_space_chain() {
    let s2 = ModelSpace::unit_sphere();
    assert_eq!(loop_betti_sum(&s2, 10).unwrap(), 10);
    assert_eq!(
        loop_betti_sum(
            &ModelSpace::RoundSphere {
                radius: 1.0,
                dim: 3
            },
            5
        )
        .unwrap(),
        3
    );
    let rep = gromov_check(
        &s2,
        &[PI / 2.0, 0.0],
        &[PI / 2.0, PI / 2.0],
        4.0,
        10,
        &CountSource::SphereOracle,
    )
    .unwrap();
    assert!(rep.passed());
    let counts: Vec<usize> = rep.rows.iter().map(|r| r.count).collect();
    assert_eq!(&counts[..5], &[1, 3, 4, 5, 6]);
}
