//! The ten experiments behind the subcommands.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use tubelab_core::bounds::{verify_pointwise_bound, BoundOptions, TubeParams};
use tubelab_core::count::{
    integrate_counts, sphere_count_oracle, AreaOptions, GeodesicCounter, SolverOptions,
};
use tubelab_core::geodesic::centred_start;
use tubelab_core::jacobi::{
    compute_riccati, determinant_identity_defect, exp_jacobian, exp_jacobian_full, gram_from,
    pole_mass, propagate_jacobi_grid, schwarzian_curvature_adaptive, uniform_grid, wronskian_from,
    GramMode, JacobiFrame, RiccatiMatrix, SchwarzianOptions,
};
use tubelab_core::loops::{gromov_check, theorem_check, CountSource};
use tubelab_core::metric::{min_sectional_estimate, Metric, ModelSpace, SamplerConfig};
use tubelab_core::seed::{derive_seed, stream};
use tubelab_core::Error;

use crate::config::{parse_space, resolve_metric, Experiment, ResolvedMetric, RunConfig};
use crate::output::{format_float, Cell, Summary, Table};

/// Pole neighbourhood excluded from identity checks.
pub const POLE_DELTA: f64 = 0.05;
const POLE_WINDOW: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) | RunError::Io(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunError::Config(m) | RunError::Numeric(m) | RunError::Io(m) => m,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::InvalidParameter(_) | Error::UnsupportedSpace(_) => {
                RunError::Config(e.to_string())
            }
            _ => RunError::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Summary,
}

fn config_err(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

fn metric_of(cfg: &RunConfig) -> Result<ResolvedMetric, RunError> {
    if let Some(spec) = &cfg.metric {
        return resolve_metric(spec).map_err(|e| config_err(e.0));
    }
    if let Some(space) = &cfg.space {
        let model = parse_space(space).map_err(|e| config_err(e.0))?;
        return Ok(ResolvedMetric {
            label: model.label(),
            metric: model.metric()?,
            model: Some(model),
        });
    }
    Err(config_err(
        "no metric given (use --metric, --space or [metric] source)",
    ))
}

fn space_of(cfg: &RunConfig) -> Result<ModelSpace, RunError> {
    if let Some(space) = &cfg.space {
        return parse_space(space).map_err(|e| config_err(e.0));
    }
    match metric_of(cfg)?.model {
        Some(m) => Ok(m),
        None => Err(config_err(
            "loop-space experiments need a model space (--space S2, S3, ...)",
        )),
    }
}

fn single_c(cfg: &RunConfig) -> Result<f64, RunError> {
    match cfg.c.as_slice() {
        [c] => Ok(*c),
        [] => Err(config_err(format!("{} needs --C", cfg.experiment.name()))),
        _ => Err(config_err(format!(
            "{} takes a single C; use sweep for a list",
            cfg.experiment.name()
        ))),
    }
}

fn tube_radius(cfg: &RunConfig, rm: &ResolvedMetric) -> Result<f64, RunError> {
    if let Some(r) = cfg.radius {
        return Ok(r);
    }
    rm.model
        .as_ref()
        .and_then(ModelSpace::certified_tube_radius)
        .ok_or_else(|| config_err("no tube radius is certified for this metric; pass --R"))
}

/// Base point `(π/2, …, π/2, 0)` of the polar chart, or the box centre.
fn base_point(m: &Metric, model: Option<&ModelSpace>) -> Vec<f64> {
    let n = m.dim();
    match model {
        Some(ModelSpace::RoundSphere { .. } | ModelSpace::PerturbedSphere { .. }) => {
            let mut p = vec![PI / 2.0; n];
            p[n - 1] = 0.0;
            p
        }
        _ => box_centre(m),
    }
}

fn box_centre(m: &Metric) -> Vec<f64> {
    m.domain()
        .iter()
        .map(|&(lo, hi)| match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        })
        .collect()
}

fn unit(m: &Metric, x: &[f64], v: &[f64]) -> Result<Vec<f64>, RunError> {
    let s = m.norm(x, v)?;
    if !(s > 0.0 && s.is_finite()) {
        return Err(config_err("direction must be a nonzero tangent vector"));
    }
    Ok(v.iter().map(|c| c / s).collect())
}

fn check_dim(what: &str, v: &[f64], n: usize) -> Result<(), RunError> {
    if v.len() != n {
        return Err(config_err(format!(
            "{what} has {} coordinates, the metric has dimension {n}",
            v.len()
        )));
    }
    Ok(())
}

/// Start point and unit velocity of the experiment geodesic.
fn geodesic_start(cfg: &RunConfig, rm: &ResolvedMetric) -> Result<(Vec<f64>, Vec<f64>), RunError> {
    let m = &rm.metric;
    let n = m.dim();
    if let Some(p) = &cfg.point {
        check_dim("--point", p, n)?;
        let mut e = vec![0.0; n];
        e[n - 1] = 1.0;
        let d = cfg.direction.clone().unwrap_or(e);
        check_dim("--direction", &d, n)?;
        let v = unit(m, p, &d)?;
        return Ok((p.clone(), v));
    }
    let (mid, dir) = match &rm.model {
        Some(model) => model.sample_geodesic_midpoint(&mut stream(cfg.seed, "cli/geodesic")),
        None => {
            let mut e = vec![0.0; n];
            e[n - 1] = 1.0;
            (box_centre(m), e)
        }
    };
    let dir = cfg.direction.clone().unwrap_or(dir);
    check_dim("--direction", &dir, n)?;
    Ok(centred_start(m, &mid, &dir, cfg.length, cfg.tol.ode)?)
}

struct Geodesic {
    p: Vec<f64>,
    v: Vec<f64>,
    jf: JacobiFrame,
    rm: RiccatiMatrix,
}

fn propagate(cfg: &RunConfig, rm: &ResolvedMetric, step: f64) -> Result<Geodesic, RunError> {
    let (p, v) = geodesic_start(cfg, rm)?;
    let grid = uniform_grid(cfg.length, step);
    let jf = propagate_jacobi_grid(&rm.metric, &p, &v, None, cfg.length, &grid, cfg.tol.ode)?;
    let ric = compute_riccati(&jf, POLE_DELTA)?;
    Ok(Geodesic { p, v, jf, rm: ric })
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|c| format_float(*c))
        .collect::<Vec<_>>()
        .join(",")
}

fn header(cfg: &RunConfig, exercised: &[&str], metric: &str) -> Summary {
    let mut s = Summary::default();
    s.put("tubelab_version", env!("CARGO_PKG_VERSION"));
    s.put("core_version", tubelab_core::VERSION);
    s.put("experiment", cfg.experiment.name());
    s.put("exercised", exercised.join("; "));
    s.put("metric", metric);
    s.put("seed", cfg.seed);
    let t = &cfg.tol;
    for (k, v) in [
        ("tolerance.ode", t.ode),
        ("tolerance.identity", t.identity),
        ("tolerance.determinant", t.determinant),
        ("tolerance.oracle", t.oracle),
        ("tolerance.conjugate", t.conjugate),
        ("tolerance.schwarzian", t.schwarzian),
        ("tolerance.residue", t.residue),
        ("tolerance.bound", t.bound),
        ("tolerance.area", t.area),
    ] {
        s.put(k, format_float(v));
    }
    s
}

fn put_geodesic(s: &mut Summary, cfg: &RunConfig, g: &Geodesic) {
    s.put("param.length", format_float(cfg.length));
    s.put("param.sigma_step", format_float(cfg.sigma_step));
    s.put("param.start_point", fmt_vec(&g.p));
    s.put("param.start_velocity", fmt_vec(&g.v));
    s.put("poles", fmt_vec(&g.rm.poles()));
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, RunError> {
    match cfg.experiment {
        Experiment::Identities => identities(cfg),
        Experiment::Jacobian => jacobian(cfg),
        Experiment::Conjugate => conjugate(cfg),
        Experiment::Schwarzian => schwarzian(cfg),
        Experiment::Bounds => bounds(cfg),
        Experiment::Count => count(cfg),
        Experiment::Area => area(cfg),
        Experiment::Gromov => gromov(cfg),
        Experiment::Theorem => theorem(cfg),
        Experiment::Sweep => sweep(cfg),
    }
}

fn trajectory_table(jf: &JacobiFrame) -> Table {
    let n = jf.n;
    let mut cols = vec!["sigma".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=n).map(|i| format!("v{i}")));
    for i in 1..=n {
        cols.extend((1..=n).map(|a| format!("e{i}{a}")));
    }
    let names: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("trajectory.csv", &names);
    for s in &jf.samples {
        let mut row = vec![Cell::F(s.sigma)];
        row.extend(s.x.iter().chain(&s.v).map(|c| Cell::F(*c)));
        row.extend(s.frame.transpose().iter().map(|c| Cell::F(*c)));
        t.push(row);
    }
    t
}

fn identities(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let rm = metric_of(cfg)?;
    let g = propagate(cfg, &rm, cfg.sigma_step)?;
    let mut t = Table::new(
        "jacobi.csv",
        &[
            "sigma",
            "det_gram_normal",
            "exp_jacobian",
            "d1",
            "d2",
            "d3",
            "det_identity_defect",
            "masked",
        ],
    );
    let (mut worst_w, mut worst_det) = (0.0f64, 0.0f64);
    let (mut w_fail, mut det_fail, mut det_points) = (0usize, 0usize, 0usize);
    for (i, s) in g.jf.samples.iter().enumerate() {
        let det = gram_from(s, GramMode::Normal).determinant();
        let jac = if s.sigma > 0.0 {
            exp_jacobian(&g.jf, s.sigma)?
        } else {
            0.0
        };
        let w = wronskian_from(s);
        let scaled = w.max() / (1.0 + s.sigma);
        worst_w = worst_w.max(scaled);
        if w.max() > cfg.tol.identity * (1.0 + s.sigma) {
            w_fail += 1;
        }
        let masked = g.rm.masked[i];
        let defect = if masked {
            f64::NAN
        } else {
            determinant_identity_defect(&g.rm, &g.jf, s.sigma)?
        };
        if !masked {
            det_points += 1;
            worst_det = worst_det.max(defect);
            if defect > cfg.tol.determinant {
                det_fail += 1;
            }
        }
        t.push(vec![
            s.sigma.into(),
            det.into(),
            jac.into(),
            w.d1.into(),
            w.d2.into(),
            w.d3.into(),
            defect.into(),
            masked.into(),
        ]);
    }
    let mut s = header(
        cfg,
        &[
            "wronskian identity",
            "determinant identity for the normal block of -f~'",
        ],
        &rm.label,
    );
    put_geodesic(&mut s, cfg, &g);
    s.put_f("max_wronskian_over_1_plus_sigma", worst_w);
    s.put_f("max_det_identity_defect", worst_det);
    s.check(
        "wronskian",
        w_fail == 0,
        format!(
            "{w_fail} of {} samples above tol*(1+sigma)",
            g.jf.samples.len()
        ),
    );
    s.check(
        "determinant_identity",
        det_fail == 0 && det_points > 0,
        format!("{det_fail} of {det_points} unmasked samples above tolerance"),
    );
    Ok(Outcome {
        tables: vec![t, trajectory_table(&g.jf)],
        summary: s,
    })
}

fn sn(k: f64, s: f64) -> f64 {
    if k > 0.0 {
        (k.sqrt() * s).sin() / k.sqrt()
    } else if k < 0.0 {
        ((-k).sqrt() * s).sinh() / (-k).sqrt()
    } else {
        s
    }
}

fn cs(k: f64, s: f64) -> f64 {
    if k > 0.0 {
        (k.sqrt() * s).cos()
    } else if k < 0.0 {
        ((-k).sqrt() * s).cosh()
    } else {
        1.0
    }
}

fn jacobian(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let rm = metric_of(cfg)?;
    let g = propagate(cfg, &rm, cfg.sigma_step)?;
    let k = rm
        .model
        .as_ref()
        .and_then(ModelSpace::closed_form_curvature);
    let n = g.jf.n;
    let mut t = Table::new(
        "jacobian.csv",
        &[
            "sigma",
            "exp_jacobian",
            "exp_jacobian_full",
            "closed_form",
            "h_error",
            "xi_error",
        ],
    );
    let mut worst = 0.0f64;
    for s in g.jf.samples.iter().filter(|s| s.sigma > 0.0) {
        let jac = exp_jacobian(&g.jf, s.sigma)?;
        let full = exp_jacobian_full(&g.jf, s.sigma)?;
        let (closed, h_err, xi_err) = match k {
            Some(k) => {
                let mut h = DMatrix::from_diagonal_element(n, n, sn(k, s.sigma));
                let mut xi = DMatrix::from_diagonal_element(n, n, cs(k, s.sigma));
                h[(n - 1, n - 1)] = s.sigma;
                xi[(n - 1, n - 1)] = 1.0;
                let he = (&s.h - h).amax();
                let xe = (&s.xi - xi).amax();
                worst = worst.max(he).max(xe);
                (sn(k, s.sigma).abs().powi(n as i32 - 1), he, xe)
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        t.push(vec![
            s.sigma.into(),
            jac.into(),
            full.into(),
            closed.into(),
            h_err.into(),
            xi_err.into(),
        ]);
    }
    let mut s = header(
        cfg,
        &[
            "exponential-map jacobian from the normal gram determinant",
            "constant-curvature jacobi fields",
        ],
        &rm.label,
    );
    put_geodesic(&mut s, cfg, &g);
    match k {
        Some(k) => {
            s.put_f("curvature", k);
            s.put_f("max_frame_error", worst);
            s.check(
                "closed_form",
                worst <= cfg.tol.oracle,
                format!("max |H - sn|, |Xi - cs| = {}", format_float(worst)),
            );
        }
        None => s.put("curvature", "none (no closed form)"),
    }
    Ok(Outcome {
        tables: vec![t],
        summary: s,
    })
}

fn conjugate(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let rm = metric_of(cfg)?;
    let g = propagate(cfg, &rm, cfg.sigma_step)?;
    let k = rm
        .model
        .as_ref()
        .and_then(ModelSpace::closed_form_curvature);
    let oracle: Vec<f64> = match k {
        Some(k) if k > 0.0 => (1..)
            .map(|j| j as f64 * PI / k.sqrt())
            .take_while(|s| *s < cfg.length)
            .collect(),
        _ => Vec::new(),
    };
    let cps = &g.rm.conjugate;
    let fts = &g.rm.f_tilde_poles;
    let rows = cps.len().max(fts.len()).max(oracle.len());
    let mut t = Table::new(
        "conjugate.csv",
        &["index", "sigma", "multiplicity", "f_tilde_pole", "oracle"],
    );
    let (mut pair_gap, mut oracle_gap) = (0.0f64, 0.0f64);
    for i in 0..rows {
        let cp = cps.get(i);
        let ft = fts.get(i).map(|p| p.sigma);
        let or = oracle.get(i).copied();
        if let (Some(c), Some(f)) = (cp, ft) {
            pair_gap = pair_gap.max((c.sigma - f).abs());
        }
        if let (Some(c), Some(o)) = (cp, or) {
            oracle_gap = oracle_gap.max((c.sigma - o).abs());
        }
        t.push(vec![
            (i + 1).into(),
            cp.map(|c| c.sigma).into(),
            cp.map_or(Cell::S(String::new()), |c| c.multiplicity.into()),
            ft.into(),
            or.into(),
        ]);
    }
    let radius = cfg
        .radius
        .or_else(|| {
            rm.model
                .as_ref()
                .and_then(ModelSpace::certified_tube_radius)
        })
        .filter(|r| r.is_finite());
    let mut poles = Table::new(
        "poles.csv",
        &[
            "sigma",
            "residue_trace",
            "residue_min_eigenvalue",
            "fit_residual",
            "t",
            "mu_trace",
        ],
    );
    let mut zero_gap = f64::NAN;
    for sigma in g.rm.poles() {
        match pole_mass(&g.rm, &g.jf, sigma, POLE_WINDOW, radius) {
            Ok(pm) => {
                if sigma == 0.0 {
                    zero_gap = (&pm.c - DMatrix::<f64>::identity(g.jf.n, g.jf.n)).amax();
                }
                poles.push(vec![
                    sigma.into(),
                    pm.c.trace().into(),
                    pm.min_eigenvalue.into(),
                    pm.residual.into(),
                    pm.t.into(),
                    pm.mu.as_ref().map(|m| m.trace()).into(),
                ]);
            }
            Err(Error::PoorFit { residual, .. }) => poles.push(vec![
                sigma.into(),
                f64::NAN.into(),
                f64::NAN.into(),
                residual.into(),
                f64::NAN.into(),
                f64::NAN.into(),
            ]),
            Err(e) => return Err(e.into()),
        }
    }
    let mut s = header(
        cfg,
        &[
            "conjugate points as zeros of det H",
            "poles of f~ = H^-1 Xi",
            "residues of f~",
        ],
        &rm.label,
    );
    put_geodesic(&mut s, cfg, &g);
    s.put("det_zero_count", cps.len());
    s.put("f_tilde_pole_count", fts.len());
    let tol = cfg.tol.conjugate;
    s.check(
        "pole_lists_coincide",
        cps.len() == fts.len() && pair_gap <= tol,
        format!(
            "{} zeros of det H, {} poles of f~, max gap {}",
            cps.len(),
            fts.len(),
            format_float(pair_gap)
        ),
    );
    if k.is_some_and(|k| k > 0.0) {
        s.check(
            "oracle",
            cps.len() == oracle.len() && oracle_gap <= tol,
            format!(
                "{} expected at j*pi/sqrt(K), max gap {}",
                oracle.len(),
                format_float(oracle_gap)
            ),
        );
    }
    s.check(
        "residue_at_zero",
        zero_gap <= cfg.tol.residue,
        format!("max |c - id| = {}", format_float(zero_gap)),
    );
    Ok(Outcome {
        tables: vec![t, poles],
        summary: s,
    })
}

fn schwarzian(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let rm = metric_of(cfg)?;
    // dense grid so the stencil samples are nodes of the frame solution
    let g = propagate(cfg, &rm, 0.01_f64.min(cfg.sigma_step))?;
    let k = rm
        .model
        .as_ref()
        .and_then(ModelSpace::closed_form_curvature);
    let base = SchwarzianOptions::default();
    let mut t = Table::new(
        "schwarzian.csv",
        &[
            "sigma",
            "defect",
            "noise",
            "invariance_defect",
            "recovered_trace",
            "frame_trace",
            "oracle_error",
        ],
    );
    let n = g.jf.n;
    let (mut worst, mut worst_oracle, mut used, mut skipped) = (0.0f64, 0.0f64, 0usize, 0usize);
    let lo = 0.15;
    let hi = cfg.length - 0.15;
    let points: Vec<f64> = uniform_grid(cfg.length, cfg.sigma_step)
        .into_iter()
        .filter(|s| *s >= lo && *s <= hi)
        .collect();
    for sigma in points {
        match schwarzian_curvature_adaptive(&g.rm, &g.jf, sigma, &base, 0.1 * cfg.tol.schwarzian) {
            Ok(r) => {
                used += 1;
                worst = worst.max(r.defect);
                let oracle_err = k.map(|k| {
                    let normal = r.recovered.view((0, 0), (n - 1, n - 1)).into_owned();
                    (normal - DMatrix::<f64>::from_diagonal_element(n - 1, n - 1, k)).amax()
                });
                if let Some(e) = oracle_err {
                    worst_oracle = worst_oracle.max(e);
                }
                t.push(vec![
                    sigma.into(),
                    r.defect.into(),
                    r.noise.into(),
                    r.invariance_defect.into(),
                    r.recovered.trace().into(),
                    r.frame_curvature.trace().into(),
                    oracle_err.into(),
                ]);
            }
            Err(
                Error::Masked { .. } | Error::DerivativeNoise { .. } | Error::Conditioning { .. },
            ) => {
                skipped += 1;
                t.push(vec![
                    sigma.into(),
                    Cell::F(f64::NAN),
                    Cell::F(f64::NAN),
                    Cell::F(f64::NAN),
                    Cell::F(f64::NAN),
                    Cell::F(f64::NAN),
                    Cell::F(f64::NAN),
                ]);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut s = header(
        cfg,
        &[
            "jacobi curvature from the schwarzian of f~",
            "invariance of the schwarzian under f -> f~",
        ],
        &rm.label,
    );
    put_geodesic(&mut s, cfg, &g);
    s.put("points_used", used);
    s.put("points_skipped", skipped);
    let tol = cfg.tol.schwarzian;
    s.check(
        "schwarzian",
        used > 0 && worst <= tol,
        format!("max defect {} over {used} points", format_float(worst)),
    );
    if let Some(k) = k {
        s.check(
            "curvature_oracle",
            used > 0 && worst_oracle <= tol,
            format!("max |R_N - {k} id| = {}", format_float(worst_oracle)),
        );
    }
    Ok(Outcome {
        tables: vec![t],
        summary: s,
    })
}

fn bounds(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let rm = metric_of(cfg)?;
    let radius = tube_radius(cfg, &rm)?;
    let g = propagate(cfg, &rm, cfg.sigma_step)?;
    let tp = TubeParams::new(radius, g.jf.n)?;
    let sectional = min_sectional_estimate(
        &rm.metric,
        &SamplerConfig {
            seed: derive_seed(cfg.seed, "cli/sectional"),
            ..SamplerConfig::default()
        },
    );
    let certified = rm
        .model
        .as_ref()
        .and_then(ModelSpace::certified_tube_radius)
        .is_some_and(|r| radius <= r);
    let opts = BoundOptions {
        tol: cfg.tol.bound,
        sectional: Some(sectional.clone()),
        certified,
        ..BoundOptions::default()
    };
    let rep = verify_pointwise_bound(&g.jf, &g.rm, &tp, &opts);
    let mut t = Table::new("bounds.csv", &["sigma", "lhs", "rhs", "margin"]);
    for r in &rep.records {
        t.push(vec![
            r.sigma.into(),
            r.lhs.into(),
            r.rhs.into(),
            r.margin.into(),
        ]);
    }
    let mut s = header(
        cfg,
        &["pointwise sinh comparison for the exponential-map jacobian"],
        &rm.label,
    );
    put_geodesic(&mut s, cfg, &g);
    s.put_f("param.R", radius);
    s.put("conjecture_mode", rep.conjecture_mode);
    s.put(
        "curvature_ok",
        rep.curvature_ok
            .map_or("unknown".to_string(), |b| b.to_string()),
    );
    s.put_f("sampled_min_sectional", sectional.min);
    s.put_f("curvature_floor", tp.curvature_floor());
    s.put_f("max_relative_gap", rep.max_relative_gap);
    s.check(
        "sinh_bound",
        rep.passed(),
        format!(
            "{} violations over {} samples",
            rep.violations,
            rep.records.len()
        ),
    );
    Ok(Outcome {
        tables: vec![t],
        summary: s,
    })
}

/// Chart coordinates of a unit vector in `R^(n+1)`, inverse of the polar embedding.
fn polar_coordinates(y: &[f64]) -> Vec<f64> {
    let n = y.len() - 1;
    let mut x = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let tail = y[i + 1..].iter().map(|c| c * c).sum::<f64>().sqrt();
        x.push(tail.atan2(y[i]));
    }
    x.push(y[n].atan2(y[n - 1]).rem_euclid(2.0 * PI));
    x
}

fn solver(cfg: &RunConfig, directions: usize) -> SolverOptions {
    SolverOptions {
        directions: cfg.directions.unwrap_or(directions),
        sigma_step: cfg.sigma_step,
        ode_tol: cfg.tol.ode,
        ..SolverOptions::default()
    }
}

fn count(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let rm = metric_of(cfg)?;
    let Some(model @ ModelSpace::RoundSphere { radius: r, .. }) = rm.model.clone() else {
        return Err(config_err(
            "count compares against the round-sphere enumeration; use --metric sphere:r[:n]",
        ));
    };
    let n = model.dim();
    let p = base_point(&rm.metric, Some(&model));
    let t_max = cfg.length;
    let counter = GeodesicCounter::new(&rm.metric, &p, t_max, solver(cfg, 256), cfg.seed)?;
    let mut rng = stream(cfg.seed, "cli/count/pairs");
    let mut t = Table::new("count.csv", &["d", "T", "count", "oracle"]);
    let (mut mismatches, mut irregular) = (0usize, 0usize);
    while t.rows.len() < cfg.samples {
        let y = loop {
            let g: Vec<f64> = (0..=n).map(|_| gaussian(&mut rng)).collect();
            let s = g.iter().map(|c| c * c).sum::<f64>().sqrt();
            if s > 1e-9 {
                break g.iter().map(|c| c / s).collect::<Vec<_>>();
            }
        };
        let x = polar_coordinates(&y);
        let d = model.round_distance(&p, &x).expect("round sphere");
        if d < 0.05 || d > PI * r - 0.05 {
            continue;
        }
        let big_t = t_max * (1.0 - rng.random::<f64>());
        let res = counter.count(&x, big_t)?;
        let oracle = sphere_count_oracle(d, big_t, r)?;
        if !res.regular {
            irregular += 1;
        }
        if res.count != oracle {
            mismatches += 1;
        }
        t.push(vec![
            d.into(),
            big_t.into(),
            res.count.into(),
            oracle.into(),
        ]);
    }
    let mut s = header(
        cfg,
        &[
            "geodesic counting by inverting the exponential map",
            "round-sphere enumeration of geodesics",
        ],
        &rm.label,
    );
    s.put("param.base_point", fmt_vec(&p));
    s.put_f("param.T_max", t_max);
    s.put("param.samples", cfg.samples);
    s.put("param.directions", counter.opts.directions);
    s.put("irregular_queries", irregular);
    s.check(
        "count_oracle",
        mismatches == 0,
        format!(
            "{mismatches} of {} counts differ from the enumeration",
            cfg.samples
        ),
    );
    Ok(Outcome {
        tables: vec![t],
        summary: s,
    })
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; the seeded stream keeps it reproducible
    let u = 1.0 - rng.random::<f64>();
    let v = rng.random::<f64>();
    (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
}

fn area(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let rm = metric_of(cfg)?;
    let p = match &cfg.point {
        Some(p) => {
            check_dim("--point", p, rm.metric.dim())?;
            p.clone()
        }
        None => base_point(&rm.metric, rm.model.as_ref()),
    };
    let mut opts = AreaOptions {
        volume: rm.model.as_ref().and_then(ModelSpace::volume),
        ..AreaOptions::default()
    };
    opts.solver.ode_tol = cfg.tol.ode;
    opts.solver.sigma_step = cfg.sigma_step;
    if let Some(d) = cfg.directions {
        opts.solver.directions = d;
    }
    let rep = integrate_counts(&rm.metric, &p, cfg.length, cfg.samples, cfg.seed, &opts)?;
    let mut t = Table::new("area.csv", &["T", "mc", "quad", "stderr"]);
    t.push(vec![
        rep.t.into(),
        rep.mc_estimate.into(),
        rep.jacobian_integral.into(),
        rep.mc_stderr.into(),
    ]);
    let rel = rep.discrepancy.abs() / rep.jacobian_integral.abs();
    let z = rep.discrepancy_in_stderr();
    let mut s = header(
        cfg,
        &[
            "area formula for the exponential map",
            "monte carlo count integral",
        ],
        &rm.label,
    );
    s.put("param.base_point", fmt_vec(&p));
    s.put_f("param.T", cfg.length);
    s.put("param.samples", cfg.samples);
    s.put("proposals", rep.proposals);
    s.put_f("volume", rep.volume);
    s.put_f("quad_error", rep.quad_error);
    s.put("irregular_samples", rep.irregular);
    s.put("breakpoints", fmt_vec(&rep.breakpoints));
    s.put_f("relative_discrepancy", rel);
    s.put_f("discrepancy_z", z);
    s.check(
        "relative_discrepancy",
        rel <= cfg.tol.area,
        format!("|mc - quad| / quad = {}", format_float(rel)),
    );
    s.check(
        "z_score",
        z <= 3.0,
        format!(
            "|mc - quad| / sqrt(stderr^2 + quad_error^2) = {}",
            format_float(z)
        ),
    );
    Ok(Outcome {
        tables: vec![t],
        summary: s,
    })
}

const LOOP_COLUMNS: [&str; 5] = ["k", "betti_sum", "count_or_bound", "margin", "pass"];

fn gromov(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let space = space_of(cfg)?;
    let c = single_c(cfg)?;
    let m = space.metric()?;
    let n = m.dim();
    let p = base_point(&m, Some(&space));
    let x = match &cfg.point {
        Some(x) => {
            check_dim("--point", x, n)?;
            x.clone()
        }
        None => {
            let mut x = p.clone();
            x[n - 1] += PI / 2.0;
            x
        }
    };
    let source = if cfg.oracle {
        CountSource::SphereOracle
    } else {
        CountSource::Numeric {
            solver: solver(cfg, 128),
            seed: cfg.seed,
        }
    };
    let rep = gromov_check(&space, &p, &x, c, cfg.k_max, &source)?;
    let mut t = Table::new("gromov.csv", &LOOP_COLUMNS);
    for r in &rep.rows {
        t.push(vec![
            r.k.into(),
            r.betti.into(),
            r.count.into(),
            Cell::I(r.count as i64 - r.betti as i64),
            r.pass.into(),
        ]);
    }
    let mut s = header(
        cfg,
        &["loop-space betti sums", "geodesic counts n(p, Ck, x)"],
        &space.label(),
    );
    s.put_f("param.C", c);
    s.put("param.kmax", cfg.k_max);
    s.put("param.p", fmt_vec(&p));
    s.put("param.x", fmt_vec(&x));
    s.put(
        "count_source",
        if cfg.oracle {
            "sphere enumeration"
        } else {
            "numeric counter"
        },
    );
    s.put(
        "distance",
        rep.distance.map_or("unknown".into(), format_float),
    );
    s.put(
        "first_failure",
        rep.first_failure.map_or("none".into(), |k| k.to_string()),
    );
    s.check(
        "betti_le_count",
        rep.passed(),
        format!("{} values of k checked", rep.rows.len()),
    );
    Ok(Outcome {
        tables: vec![t],
        summary: s,
    })
}

fn theorem_inputs(cfg: &RunConfig) -> Result<(ModelSpace, f64, f64), RunError> {
    let space = space_of(cfg)?;
    let radius = match cfg.radius {
        Some(r) => r,
        None => space
            .certified_tube_radius()
            .ok_or_else(|| config_err("no tube radius is certified for this space; pass --R"))?,
    };
    let vol = space
        .volume()
        .ok_or_else(|| config_err(format!("no closed-form volume for {}", space.label())))?;
    Ok((space, radius, vol))
}

fn theorem(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let c = single_c(cfg)?;
    let (space, radius, vol) = theorem_inputs(cfg)?;
    let rep = theorem_check(&space, c, cfg.k_max, radius, vol)?;
    let mut t = Table::new("theorem.csv", &LOOP_COLUMNS);
    for r in &rep.rows {
        t.push(vec![
            r.k.into(),
            r.betti.into(),
            r.bound.into(),
            r.margin.into(),
            r.pass.into(),
        ]);
    }
    let mut s = header(
        cfg,
        &[
            "loop-space betti sums",
            "betti bound from the sinh volume comparison",
        ],
        &space.label(),
    );
    s.put_f("param.C", c);
    s.put("param.kmax", cfg.k_max);
    s.put_f("param.R", radius);
    s.put_f("volume", vol);
    s.put("certified", rep.certified);
    s.put(
        "growth_exponent",
        rep.growth_exponent.map_or("none".into(), format_float),
    );
    s.put(
        "first_failure",
        rep.first_failure.map_or("none".into(), |k| k.to_string()),
    );
    s.check(
        "betti_le_bound",
        rep.passed(),
        format!("{} values of k checked", rep.rows.len()),
    );
    Ok(Outcome {
        tables: vec![t],
        summary: s,
    })
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, RunError> {
    if cfg.c.is_empty() {
        return Err(config_err("sweep needs --C, e.g. --C 1,2,4"));
    }
    let (space, radius, vol) = theorem_inputs(cfg)?;
    let mut t = Table::new(
        "sweep.csv",
        &["C", "k", "betti_sum", "count_or_bound", "margin", "pass"],
    );
    let mut s = header(
        cfg,
        &["loop-space betti sums", "betti bound over a range of C"],
        &space.label(),
    );
    s.put("param.C", fmt_vec(&cfg.c));
    s.put("param.kmax", cfg.k_max);
    s.put_f("param.R", radius);
    s.put_f("volume", vol);
    for &c in &cfg.c {
        let rep = theorem_check(&space, c, cfg.k_max, radius, vol)?;
        for r in &rep.rows {
            t.push(vec![
                c.into(),
                r.k.into(),
                r.betti.into(),
                r.bound.into(),
                r.margin.into(),
                r.pass.into(),
            ]);
        }
        s.put(
            &format!("first_failure.C={}", format_float(c)),
            rep.first_failure.map_or("none".into(), |k| k.to_string()),
        );
    }
    Ok(Outcome {
        tables: vec![t],
        summary: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_inverse() {
        let m = ModelSpace::RoundSphere {
            radius: 1.0,
            dim: 3,
        };
        let x = [0.7, 2.1, 5.0];
        let y = [
            0.7f64.cos(),
            0.7f64.sin() * 2.1f64.cos(),
            0.7f64.sin() * 2.1f64.sin() * 5.0f64.cos(),
            0.7f64.sin() * 2.1f64.sin() * 5.0f64.sin(),
        ];
        let back = polar_coordinates(&y);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(m.round_distance(&x, &back).unwrap() < 1e-12);
    }

    #[test]
    fn error_classes() {
        assert_eq!(
            RunError::from(Error::InvalidParameter("x".into())).exit_code(),
            2
        );
        assert_eq!(
            RunError::from(Error::StepUnderflow { sigma: 1.0 }).exit_code(),
            3
        );
    }
}
