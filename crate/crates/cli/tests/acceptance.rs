//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion.
//!
//! Reference values are computed here from closed forms and enumerations,
//! independently of the library code under test.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use tubelab_core::bounds::{
    betti_bound, betti_bound_limit, verify_pointwise_bound, BoundOptions, TubeParams,
};
use tubelab_core::count::{integrate_counts, AreaOptions, GeodesicCounter, SolverOptions};
use tubelab_core::geodesic::centred_start;
use tubelab_core::jacobi::{
    compute_riccati, determinant_identity_defect, pole_mass, propagate_jacobi_grid,
    schwarzian_curvature_adaptive, uniform_grid, wronskian_from, JacobiFrame, RiccatiMatrix,
    SchwarzianOptions,
};
use tubelab_core::loops::{gromov_check, loop_betti_sum, CountSource};
use tubelab_core::metric::{min_sectional_estimate, ModelSpace, SamplerConfig};
use tubelab_core::seed::stream;
use tubelab_core::Error;

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sn(k: f64, s: f64) -> f64 {
    match k {
        k if k > 0.0 => (k.sqrt() * s).sin() / k.sqrt(),
        k if k < 0.0 => ((-k).sqrt() * s).sinh() / (-k).sqrt(),
        _ => s,
    }
}

fn cs(k: f64, s: f64) -> f64 {
    match k {
        k if k > 0.0 => (k.sqrt() * s).cos(),
        k if k < 0.0 => ((-k).sqrt() * s).cosh(),
        _ => 1.0,
    }
}

fn model_set() -> Vec<ModelSpace> {
    vec![
        ModelSpace::SpaceForm {
            curvature: -1.0,
            dim: 2,
        },
        ModelSpace::SpaceForm {
            curvature: -1.0,
            dim: 3,
        },
        ModelSpace::SpaceForm {
            curvature: 0.0,
            dim: 3,
        },
        ModelSpace::SpaceForm {
            curvature: 1.0,
            dim: 2,
        },
        ModelSpace::SpaceForm {
            curvature: 1.0,
            dim: 3,
        },
        ModelSpace::RoundSphere {
            radius: 1.0,
            dim: 2,
        },
        ModelSpace::RoundSphere {
            radius: 2.0,
            dim: 2,
        },
        ModelSpace::RoundSphere {
            radius: 1.0,
            dim: 3,
        },
        ModelSpace::Euclidean { dim: 3 },
        ModelSpace::perturbed_sphere(1.0, 0.1),
    ]
}

struct Sampled {
    jf: JacobiFrame,
    rm: RiccatiMatrix,
}

/// A geodesic through a random midpoint, resampled when it leaves the chart.
fn random_geodesic<R: Rng>(
    model: &ModelSpace,
    rng: &mut R,
    length: f64,
    step: f64,
    tol: f64,
) -> Result<(Sampled, usize), Error> {
    let m = model.metric()?;
    let mut retries = 0;
    loop {
        let (mid, dir) = model.sample_geodesic_midpoint(rng);
        let attempt = centred_start(&m, &mid, &dir, length, tol).and_then(|(p, v)| {
            propagate_jacobi_grid(&m, &p, &v, None, length, &uniform_grid(length, step), tol)
        });
        match attempt {
            Ok(jf) => {
                let rm = compute_riccati(&jf, 0.05)?;
                return Ok((Sampled { jf, rm }, retries));
            }
            Err(Error::ChartExit { .. } | Error::StepUnderflow { .. }) if retries < 20 => {
                retries += 1
            }
            Err(e) => return Err(e),
        }
    }
}

fn criterion_1() -> Outcome {
    let cases = [
        ModelSpace::SpaceForm {
            curvature: -1.0,
            dim: 2,
        },
        ModelSpace::SpaceForm {
            curvature: -1.0,
            dim: 3,
        },
        ModelSpace::SpaceForm {
            curvature: 0.0,
            dim: 3,
        },
        ModelSpace::SpaceForm {
            curvature: 1.0,
            dim: 2,
        },
        ModelSpace::SpaceForm {
            curvature: 1.0,
            dim: 3,
        },
        ModelSpace::RoundSphere {
            radius: 1.0,
            dim: 2,
        },
        ModelSpace::RoundSphere {
            radius: 2.0,
            dim: 2,
        },
    ];
    let length = 10.0;
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    let mut ok = true;
    let mut notes = Vec::new();
    for model in &cases {
        let k = match model {
            ModelSpace::SpaceForm { curvature, .. } => *curvature,
            ModelSpace::RoundSphere { radius, .. } => 1.0 / (radius * radius),
            _ => unreachable!(),
        };
        let m = model.metric().map_err(|e| e.to_string())?;
        let n = model.dim();
        let t0 = Instant::now();
        let (mid, dir) = match model {
            // through the origin of the conformal chart
            ModelSpace::SpaceForm { curvature, .. } if *curvature < 0.0 => {
                let mut d = vec![0.0; n];
                d[0] = 0.6;
                d[1] = 0.8;
                (vec![0.0; n], d)
            }
            _ => model.sample_geodesic_midpoint(&mut stream(11, "acceptance/closed-form")),
        };
        let (p, v) = centred_start(&m, &mid, &dir, length, 1e-13).map_err(|e| e.to_string())?;
        let jf =
            propagate_jacobi_grid(&m, &p, &v, None, length, &uniform_grid(length, 0.05), 1e-13)
                .map_err(|e| format!("{}: {e}", model.label()))?;
        let secs = t0.elapsed().as_secs_f64();
        let mut err = 0.0f64;
        for s in &jf.samples {
            let mut h = DMatrix::from_diagonal_element(n, n, sn(k, s.sigma));
            let mut xi = DMatrix::from_diagonal_element(n, n, cs(k, s.sigma));
            h[(n - 1, n - 1)] = s.sigma;
            xi[(n - 1, n - 1)] = 1.0;
            err = err.max((&s.h - h).amax()).max((&s.xi - xi).amax());
        }
        worst = worst.max(err);
        slowest = slowest.max(secs);
        if err > 1e-7 || secs > 5.0 {
            ok = false;
            notes.push(format!("{} err {err:.2e} in {secs:.2}s", model.label()));
        }
    }
    let detail = format!(
        "closed-form jacobi fields: max |H - sn|, |Xi - cs| = {worst:.2e} over sigma <= 10 on {} geodesics, slowest {slowest:.2}s {}",
        cases.len(),
        notes.join("; ")
    );
    verdict(ok, detail)
}

struct SuiteStats {
    geodesics: usize,
    retries: usize,
    wronskian: f64,
    wronskian_fail: Vec<String>,
    det: f64,
    det_points: usize,
    det_fail: Vec<String>,
    residue: f64,
    residue_fail: Vec<String>,
}

/// Criteria 2, 3 and the residue half of 6 share one set of random geodesics.
fn geodesic_suite() -> Result<SuiteStats, String> {
    let mut st = SuiteStats {
        geodesics: 0,
        retries: 0,
        wronskian: 0.0,
        wronskian_fail: Vec::new(),
        det: 0.0,
        det_points: 0,
        det_fail: Vec::new(),
        residue: 0.0,
        residue_fail: Vec::new(),
    };
    for model in model_set() {
        let mut rng = stream(2, &format!("acceptance/suite/{}", model.label()));
        for i in 0..20 {
            let length = 2.0 + 8.0 * rng.random::<f64>();
            let (g, retries) = random_geodesic(&model, &mut rng, length, 0.05, 1e-10)
                .map_err(|e| format!("{}: {e}", model.label()))?;
            st.retries += retries;
            st.geodesics += 1;
            let tag = format!("{} #{i}", model.label());
            for (j, s) in g.jf.samples.iter().enumerate() {
                let w = wronskian_from(s).max() / (1.0 + s.sigma);
                st.wronskian = st.wronskian.max(w);
                if w > 1e-7 {
                    st.wronskian_fail.push(format!("{tag} at {:.3}", s.sigma));
                }
                if !g.rm.masked[j] {
                    let d = determinant_identity_defect(&g.rm, &g.jf, s.sigma)
                        .map_err(|e| e.to_string())?;
                    st.det_points += 1;
                    st.det = st.det.max(d);
                    if d > 1e-5 {
                        st.det_fail
                            .push(format!("{tag} at {:.3}: {d:.2e}", s.sigma));
                    }
                }
            }
            let pm = pole_mass(&g.rm, &g.jf, 0.0, 0.05, None).map_err(|e| format!("{tag}: {e}"))?;
            let n = g.jf.n;
            let r = (&pm.c - DMatrix::<f64>::identity(n, n)).amax();
            st.residue = st.residue.max(r);
            if r > 1e-6 {
                st.residue_fail.push(format!("{tag}: {r:.2e}"));
            }
        }
    }
    Ok(st)
}

fn criterion_2(st: &SuiteStats) -> Outcome {
    verdict(
        st.wronskian_fail.is_empty(),
        format!(
            "wronskian identities: max d/(1+sigma) = {:.2e} on {} geodesics ({} chart-exit redraws) {}",
            st.wronskian,
            st.geodesics,
            st.retries,
            st.wronskian_fail.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
        ),
    )
}

fn criterion_3(st: &SuiteStats) -> Outcome {
    verdict(
        st.det_fail.is_empty() && st.det_points > 0,
        format!(
            "determinant identity: max relative defect {:.2e} over {} samples at distance >= 0.05 from poles {}",
            st.det,
            st.det_points,
            st.det_fail.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
        ),
    )
}

fn criterion_4() -> Outcome {
    let model = ModelSpace::unit_sphere();
    let m = model.metric().map_err(|e| e.to_string())?;
    let mut starts = vec![(vec![PI / 2.0, 0.0], vec![0.0, 1.0])];
    let mut rng = stream(4, "acceptance/conjugate");
    for _ in 0..3 {
        let (mid, dir) = model.sample_geodesic_midpoint(&mut rng);
        starts.push(centred_start(&m, &mid, &dir, 10.0, 1e-12).map_err(|e| e.to_string())?);
    }
    let expected = [PI, 2.0 * PI, 3.0 * PI];
    let (mut oracle_gap, mut list_gap) = (0.0f64, 0.0f64);
    let mut ok = true;
    for (p, v) in &starts {
        let jf = propagate_jacobi_grid(&m, p, v, None, 10.0, &uniform_grid(10.0, 0.05), 1e-12)
            .map_err(|e| e.to_string())?;
        let rm = compute_riccati(&jf, 0.05).map_err(|e| e.to_string())?;
        let det: Vec<f64> = rm.conjugate.iter().map(|c| c.sigma).collect();
        let ft: Vec<f64> = rm.f_tilde_poles.iter().map(|p| p.sigma).collect();
        if det.len() != expected.len() || ft.len() != expected.len() {
            ok = false;
            continue;
        }
        for i in 0..3 {
            oracle_gap = oracle_gap.max((det[i] - expected[i]).abs());
            list_gap = list_gap.max((det[i] - ft[i]).abs());
        }
    }
    ok &= oracle_gap <= 1e-6 && list_gap <= 1e-6;
    verdict(
        ok,
        format!(
            "conjugate points on unit S2: max |sigma - k pi| = {oracle_gap:.2e}, max |det-zero - f~-pole| = {list_gap:.2e} on {} geodesics",
            starts.len()
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    let mut points = 0;
    for (k, n) in [(-1.0, 2), (-1.0, 3), (0.0, 2), (0.0, 3), (1.0, 2), (1.0, 3)] {
        let model = ModelSpace::SpaceForm {
            curvature: k,
            dim: n,
        };
        let mut rng = stream(5, &format!("acceptance/schwarzian/{}", model.label()));
        for _ in 0..3 {
            let (g, _) =
                random_geodesic(&model, &mut rng, 3.0, 0.01, 1e-10).map_err(|e| e.to_string())?;
            for sigma in [0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 2.75] {
                let r = schwarzian_curvature_adaptive(
                    &g.rm,
                    &g.jf,
                    sigma,
                    &SchwarzianOptions::default(),
                    1e-5,
                )
                .map_err(|e| format!("{} at {sigma}: {e}", model.label()))?;
                let normal = r.recovered.view((0, 0), (n - 1, n - 1)).into_owned();
                let e = (normal - DMatrix::<f64>::from_diagonal_element(n - 1, n - 1, k)).amax();
                worst = worst.max(e);
                points += 1;
            }
        }
    }
    verdict(worst <= 1e-4, format!("schwarzian curvature: max |R_N - K id| = {worst:.2e} over {points} points, K in {{-1, 0, 1}}"))
}

fn criterion_6(st: &SuiteStats) -> Outcome {
    let model = ModelSpace::unit_sphere();
    let m = model.metric().map_err(|e| e.to_string())?;
    let r = PI / 2.0;
    let jf = propagate_jacobi_grid(
        &m,
        &[PI / 2.0, 0.0],
        &[0.0, 1.0],
        None,
        4.0,
        &uniform_grid(4.0, 0.01),
        1e-12,
    )
    .map_err(|e| e.to_string())?;
    let rm = compute_riccati(&jf, 0.05).map_err(|e| e.to_string())?;
    let pm = pole_mass(&rm, &jf, 0.0, 0.05, Some(r)).map_err(|e| e.to_string())?;
    let mu = pm.mu.ok_or("no mass returned for a finite radius")?;
    let t_ok = pm.t.is_some_and(|t| (t - 1.0).abs() < 1e-15);
    let mu_gap = (mu - DMatrix::<f64>::identity(2, 2) * (PI * PI / r)).amax();
    verdict(
        st.residue_fail.is_empty() && mu_gap <= 1e-5 && t_ok,
        format!(
            "pole masses: max |res_0 f~ - id| = {:.2e} on {} geodesics; |mu(t = 1) - pi^2/R id| = {mu_gap:.2e} at R = pi/2 {}",
            st.residue,
            st.geodesics,
            st.residue_fail.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let r = PI / 2.0;
    let mut notes = Vec::new();
    let mut ok = true;
    // equality case
    let mut eq_gap = 0.0f64;
    let mut eq_abs = 0.0f64;
    for n in [2, 3] {
        let model = ModelSpace::SpaceForm {
            curvature: -1.0,
            dim: n,
        };
        let mut rng = stream(7, &format!("acceptance/sinh-eq/{n}"));
        for _ in 0..3 {
            let (g, _) =
                random_geodesic(&model, &mut rng, 5.0, 0.05, 1e-12).map_err(|e| e.to_string())?;
            let tp = TubeParams::new(r, n).map_err(|e| e.to_string())?;
            let rep = verify_pointwise_bound(&g.jf, &g.rm, &tp, &BoundOptions::default());
            for rec in &rep.records {
                let oracle = rec.sigma.sinh().powi(2 * (n as i32 - 1));
                eq_gap = eq_gap.max((rec.lhs - rec.rhs).abs() / rec.rhs.max(1.0));
                eq_gap = eq_gap.max((rec.rhs - oracle).abs() / oracle.max(1.0));
                eq_abs = eq_abs.max((rec.lhs - rec.rhs).abs());
            }
        }
    }
    if eq_gap > 1e-7 {
        ok = false;
    }
    notes.push(format!(
        "equality on K = -1: max |lhs - rhs| / max(1, rhs) = {eq_gap:.2e} (absolute {eq_abs:.2e})"
    ));
    // inequality cases
    let models = [
        ModelSpace::SpaceForm {
            curvature: -1.0,
            dim: 2,
        },
        ModelSpace::SpaceForm {
            curvature: -0.5,
            dim: 3,
        },
        ModelSpace::SpaceForm {
            curvature: 0.0,
            dim: 2,
        },
        ModelSpace::SpaceForm {
            curvature: 1.0,
            dim: 3,
        },
        ModelSpace::RoundSphere {
            radius: 1.0,
            dim: 2,
        },
        ModelSpace::RoundSphere {
            radius: 2.0,
            dim: 3,
        },
        ModelSpace::perturbed_sphere(1.0, 0.1),
    ];
    let (mut violations, mut records) = (0usize, 0usize);
    for model in &models {
        let m = model.metric().map_err(|e| e.to_string())?;
        let est = min_sectional_estimate(
            &m,
            &SamplerConfig {
                seed: 7,
                ..SamplerConfig::default()
            },
        );
        let certified = model.certified_tube_radius().is_some_and(|c| r <= c);
        let is_perturbed = matches!(model, ModelSpace::PerturbedSphere { .. });
        if is_perturbed && certified {
            ok = false;
            notes.push("perturbed sphere reported as certified".into());
        }
        let mut rng = stream(7, &format!("acceptance/sinh/{}", model.label()));
        for _ in 0..5 {
            let (g, _) =
                random_geodesic(model, &mut rng, 5.0, 0.05, 1e-10).map_err(|e| e.to_string())?;
            let tp = TubeParams::new(r, model.dim()).map_err(|e| e.to_string())?;
            let opts = BoundOptions {
                sectional: Some(est.clone()),
                certified,
                ..BoundOptions::default()
            };
            let rep = verify_pointwise_bound(&g.jf, &g.rm, &tp, &opts);
            violations += rep.violations;
            records += rep.records.len();
            if rep.curvature_ok != Some(true) {
                ok = false;
                notes.push(format!("{}: sampled curvature below -1", model.label()));
            }
            if is_perturbed && !rep.conjecture_mode {
                ok = false;
                notes.push("conjecture mode not flagged for the perturbed sphere".into());
            }
            if !is_perturbed && rep.conjecture_mode {
                ok = false;
                notes.push(format!(
                    "{}: conjecture mode set on a certified model",
                    model.label()
                ));
            }
        }
    }
    if violations > 0 {
        ok = false;
    }
    notes.push(format!("{violations} violations over {records} samples on {} models (perturbed in conjecture mode)", models.len()));
    verdict(ok, format!("sinh bound at R = pi/2: {}", notes.join("; ")))
}

fn criterion_8() -> Outcome {
    let t0 = Instant::now();
    let m = ModelSpace::unit_sphere()
        .metric()
        .map_err(|e| e.to_string())?;
    let opts = AreaOptions {
        volume: Some(4.0 * PI),
        ..AreaOptions::default()
    };
    let rep = integrate_counts(&m, &[PI / 2.0, 0.0], 2.0 * PI, 100_000, 8, &opts)
        .map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let target = 8.0 * PI;
    let mc_rel = (rep.mc_estimate - target).abs() / target;
    let quad_gap = (rep.jacobian_integral - target).abs();
    verdict(
        mc_rel <= 0.02 && quad_gap <= 1e-6 && secs <= 120.0,
        format!(
            "area formula on unit S2, T = 2 pi: |mc - 8 pi| / 8 pi = {mc_rel:.2e} (N = {}), |quad - 8 pi| = {quad_gap:.2e}, {secs:.1}s",
            rep.samples
        ),
    )
}

/// Geodesics from `p` to `x` on the unit sphere have lengths `d + 2πj` and
/// `2π − d + 2πj`; counts those shorter than `t`.
fn enumerate_sphere(d: f64, t: f64) -> usize {
    let mut c = 0;
    for j in 0.. {
        let a = d + 2.0 * PI * j as f64;
        let b = 2.0 * PI - d + 2.0 * PI * j as f64;
        if a >= t {
            break;
        }
        c += 1;
        if b < t {
            c += 1;
        }
    }
    c
}

fn embed(x: &[f64]) -> [f64; 3] {
    [x[0].cos(), x[0].sin() * x[1].cos(), x[0].sin() * x[1].sin()]
}

fn criterion_9() -> Outcome {
    let m = ModelSpace::unit_sphere()
        .metric()
        .map_err(|e| e.to_string())?;
    let p = [PI / 2.0, 0.0];
    let t_max = 6.0 * PI;
    let counter = GeodesicCounter::new(&m, &p, t_max, SolverOptions::default(), 9)
        .map_err(|e| e.to_string())?;
    let mut rng = stream(9, "acceptance/count");
    let pe = embed(&p);
    let (mut pairs, mut mismatches) = (0, Vec::new());
    while pairs < 50 {
        // uniform on the sphere: z = cos(theta) uniform, phi uniform
        let theta = (1.0 - 2.0 * rng.random::<f64>()).acos();
        let phi = 2.0 * PI * rng.random::<f64>();
        let x = [theta, phi];
        let xe = embed(&x);
        let dot: f64 = pe.iter().zip(&xe).map(|(a, b)| a * b).sum();
        let d = dot.clamp(-1.0, 1.0).acos();
        if !(0.05..=PI - 0.05).contains(&d) || !m.contains(&x) {
            continue;
        }
        let t = t_max * (1.0 - rng.random::<f64>());
        let got = counter.count(&x, t).map_err(|e| e.to_string())?;
        let want = enumerate_sphere(d, t);
        if got.count != want {
            mismatches.push(format!("d = {d:.4}, T = {t:.4}: {} vs {want}", got.count));
        }
        pairs += 1;
    }
    verdict(
        mismatches.is_empty(),
        format!("geodesic counts on unit S2: {} of {pairs} random (d, T <= 6 pi) pairs match the enumeration {}", pairs - mismatches.len(), mismatches.join("; ")),
    )
}

fn criterion_10() -> Outcome {
    let s2 = ModelSpace::unit_sphere();
    let c = 4.0;
    let p = [PI / 2.0, 0.0];
    let x = [PI / 2.0, PI / 2.0];
    let solver = SolverOptions {
        directions: 128,
        ..SolverOptions::default()
    };
    let rep = gromov_check(
        &s2,
        &p,
        &x,
        c,
        20,
        &CountSource::Numeric { solver, seed: 10 },
    )
    .map_err(|e| e.to_string())?;
    let d = PI / 2.0;
    let mut ok = true;
    let mut notes = Vec::new();
    for row in &rep.rows {
        // loop space of S2: one class in every degree
        let betti = row.k;
        let want = enumerate_sphere(d, c * row.k as f64);
        if row.betti != betti || row.count != want || betti > row.count {
            ok = false;
            notes.push(format!(
                "k = {}: betti {} count {} expected {want}",
                row.k, row.betti, row.count
            ));
        }
    }
    let tp_inf = TubeParams::new(f64::INFINITY, 2).map_err(|e| e.to_string())?;
    let tp_big = TubeParams::new(1e6, 2).map_err(|e| e.to_string())?;
    let vol = 4.0 * PI;
    let (mut thm_min, mut lim_gap, mut inf_gap) = (f64::INFINITY, 0.0f64, 0.0f64);
    for k in 1..=100 {
        let betti = loop_betti_sum(&s2, k).map_err(|e| e.to_string())? as f64;
        let closed = (c * k as f64).powi(2) / 4.0;
        thm_min = thm_min.min(closed - betti);
        let limit = betti_bound_limit(k, c, 2, vol).map_err(|e| e.to_string())?;
        let big = betti_bound(k, c, &tp_big, vol).map_err(|e| e.to_string())?;
        let inf = betti_bound(k, c, &tp_inf, vol).map_err(|e| e.to_string())?;
        lim_gap = lim_gap.max((big - limit).abs() / limit);
        inf_gap = inf_gap
            .max((limit - closed).abs() / closed)
            .max((inf - closed).abs() / closed);
    }
    ok &= thm_min >= 0.0 && lim_gap <= 1e-6 && inf_gap <= 1e-12;
    verdict(
        ok,
        format!(
            "gromov and theorem chain on unit S2, C = 4: betti <= count for k <= 20 (numeric counter), min((Ck)^2/4 - betti) = {thm_min} for k <= 100, \
             rel |bound(R = 1e6) - limit| = {lim_gap:.2e}, limit vs (Ck)^2/4 {inf_gap:.1e} {}",
            notes.join("; ")
        ),
    )
}

fn run_cli(args: &[&str], out: &Path) -> Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_tubelab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    Ok(status.status.code().unwrap_or(-1))
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap_or_default(),
            )
        })
        .collect();
    v.sort();
    v
}

fn criterion_11() -> Outcome {
    let runs: [&[&str]; 7] = [
        &["identities", "--metric", "perturbed:0.1", "--seed", "5"],
        &["conjugate", "--metric", "sphere:1:3", "--seed", "5"],
        &["schwarzian", "--metric", "hyperbolic:3", "--seed", "5"],
        &[
            "bounds",
            "--metric",
            "perturbed:0.1",
            "--R",
            "1.5707963267948966",
            "--seed",
            "5",
        ],
        &[
            "count",
            "--metric",
            "sphere:1",
            "--samples",
            "8",
            "--length",
            "12",
            "--directions",
            "64",
            "--seed",
            "5",
        ],
        &[
            "area",
            "--metric",
            "sphere:1",
            "--samples",
            "10000",
            "--directions",
            "128",
            "--seed",
            "5",
        ],
        &[
            "gromov",
            "--space",
            "S2",
            "--C",
            "4",
            "--kmax",
            "5",
            "--directions",
            "64",
            "--seed",
            "5",
        ],
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    let mut diffs = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let a = tmp.path().join(format!("{i}a"));
        let b = tmp.path().join(format!("{i}b"));
        let (ca, cb) = (run_cli(args, &a)?, run_cli(args, &b)?);
        if ca != cb || ca == 2 || ca == 3 {
            diffs.push(format!("{}: exit {ca} / {cb}", args[0]));
            continue;
        }
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        if fa.is_empty() || fa != fb {
            diffs.push(format!("{}: csv outputs differ", args[0]));
        }
        files += fa.len();
    }
    verdict(
        diffs.is_empty(),
        format!(
            "determinism: {files} csv files byte-identical across two runs of {} experiments {}",
            runs.len(),
            diffs.join("; ")
        ),
    )
}

fn main() {
    let t0 = Instant::now();
    let suite = geodesic_suite();
    let shared = |f: fn(&SuiteStats) -> Outcome| -> Outcome {
        match &suite {
            Ok(st) => f(st),
            Err(e) => Err(format!("random geodesic suite failed: {e}")),
        }
    };
    let results: Vec<(usize, Outcome)> = vec![
        (1, criterion_1()),
        (2, shared(criterion_2)),
        (3, shared(criterion_3)),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, shared(criterion_6)),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9()),
        (10, criterion_10()),
        (11, criterion_11()),
    ];
    let mut failed = 0;
    for (i, r) in &results {
        match r {
            Ok(d) => println!("[PASS] {i:>2} {d}"),
            Err(d) => {
                failed += 1;
                println!("[FAIL] {i:>2} {d}");
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1}s",
        results.len() - failed,
        results.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
