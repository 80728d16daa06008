//! Geodesic flow with a parallel orthonormal frame and optional Jacobi
//! blocks, integrated as a single ODE system.

pub mod ode;

use crate::error::{Error, Result};
use crate::metric::{eval_metric_jet, Connection, Metric};
use ode::{integrate, GbsOptions, OdeSystem, Solution};

/// Which Jacobi matrix solutions travel with the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobiBlocks {
    None,
    /// `H` with `H(0) = 0`, `H'(0) = id`.
    HOnly,
    /// `Ξ` with `Ξ(0) = id`, `Ξ'(0) = 0`, followed by `H`.
    Both,
}

/// Flow state layout: `[x, v, E, (Ξ, Ξ'), (H, H')]`; matrices row-major,
/// frame vectors are the columns of `E`.
#[derive(Debug, Clone, Copy)]
pub struct FlowLayout {
    pub n: usize,
    pub frame: bool,
    pub blocks: JacobiBlocks,
}

impl FlowLayout {
    pub fn new(n: usize, frame: bool, blocks: JacobiBlocks) -> Self {
        assert!(
            frame || blocks == JacobiBlocks::None,
            "Jacobi blocks need the frame"
        );
        FlowLayout { n, frame, blocks }
    }

    pub fn x(&self) -> usize {
        0
    }
    pub fn v(&self) -> usize {
        self.n
    }
    pub fn e(&self) -> usize {
        2 * self.n
    }
    fn after_frame(&self) -> usize {
        2 * self.n + if self.frame { self.n * self.n } else { 0 }
    }
    pub fn xi(&self) -> Option<usize> {
        (self.blocks == JacobiBlocks::Both).then(|| self.after_frame())
    }
    pub fn h(&self) -> Option<usize> {
        let nn = self.n * self.n;
        match self.blocks {
            JacobiBlocks::None => None,
            JacobiBlocks::HOnly => Some(self.after_frame()),
            JacobiBlocks::Both => Some(self.after_frame() + 2 * nn),
        }
    }
    pub fn len(&self) -> usize {
        let nn = self.n * self.n;
        self.after_frame()
            + match self.blocks {
                JacobiBlocks::None => 0,
                JacobiBlocks::HOnly => 2 * nn,
                JacobiBlocks::Both => 4 * nn,
            }
    }

    /// Initial state from a point, unit velocity and (if carried) frame.
    pub fn initial(&self, p: &[f64], v: &[f64], frame: Option<&[f64]>) -> Vec<f64> {
        let n = self.n;
        let nn = n * n;
        let mut y = vec![0.0; self.len()];
        y[..n].copy_from_slice(p);
        y[n..2 * n].copy_from_slice(v);
        if self.frame {
            y[2 * n..2 * n + nn].copy_from_slice(frame.expect("frame required"));
        }
        if let Some(o) = self.xi() {
            for i in 0..n {
                y[o + i * n + i] = 1.0;
            }
        }
        if let Some(o) = self.h() {
            for i in 0..n {
                y[o + nn + i * n + i] = 1.0;
            }
        }
        y
    }
}

/// Geodesic flow vector field on the layout above.
pub struct FlowSystem<'a> {
    pub metric: &'a Metric,
    pub layout: FlowLayout,
}

impl<'a> FlowSystem<'a> {
    pub fn new(metric: &'a Metric, frame: bool, blocks: JacobiBlocks) -> Self {
        FlowSystem {
            metric,
            layout: FlowLayout::new(metric.dim(), frame, blocks),
        }
    }
}

/// `K_ab = ⟨e_a, R(e_b, v)v⟩`, symmetrized.
pub(crate) fn frame_curvature(conn: &Connection, g: &[f64], v: &[f64], e: &[f64]) -> Vec<f64> {
    let n = conn.n;
    let r = conn.riemann();
    // W^i_k = R^i_jkl v^j v^l
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                for l in 0..n {
                    acc += r[((i * n + j) * n + k) * n + l] * v[j] * v[l];
                }
            }
            w[i * n + k] = acc;
        }
    }
    // WE and gE
    let mut we = vec![0.0; n * n];
    let mut ge = vec![0.0; n * n];
    for i in 0..n {
        for b in 0..n {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for k in 0..n {
                s1 += w[i * n + k] * e[k * n + b];
                s2 += g[i * n + k] * e[k * n + b];
            }
            we[i * n + b] = s1;
            ge[i * n + b] = s2;
        }
    }
    let mut kmat = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            kmat[a * n + b] = (0..n).map(|i| ge[i * n + a] * we[i * n + b]).sum();
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            let s = 0.5 * (kmat[a * n + b] + kmat[b * n + a]);
            kmat[a * n + b] = s;
            kmat[b * n + a] = s;
        }
    }
    kmat
}

impl OdeSystem for FlowSystem<'_> {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let lay = &self.layout;
        let n = lay.n;
        let nn = n * n;
        let x = &y[..n];
        let v = &y[n..2 * n];
        let order = if lay.blocks == JacobiBlocks::None {
            1
        } else {
            2
        };
        let jet = eval_metric_jet(self.metric, x, order)?;
        let conn = Connection::from_jet(&jet);
        dy[..n].copy_from_slice(v);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    acc += conn.gamma(i, j, k) * v[j] * v[k];
                }
            }
            dy[n + i] = -acc;
        }
        if !lay.frame {
            return Ok(());
        }
        let e = &y[2 * n..2 * n + nn];
        for i in 0..n {
            for a in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        acc += conn.gamma(i, j, k) * v[j] * e[k * n + a];
                    }
                }
                dy[2 * n + i * n + a] = -acc;
            }
        }
        if lay.blocks == JacobiBlocks::None {
            return Ok(());
        }
        let kmat = frame_curvature(&conn, &jet.g, v, e);
        let mut blocks = Vec::with_capacity(2);
        if let Some(o) = lay.xi() {
            blocks.push(o);
        }
        if let Some(o) = lay.h() {
            blocks.push(o);
        }
        for o in blocks {
            for idx in 0..nn {
                dy[o + idx] = y[o + nn + idx];
            }
            for a in 0..n {
                for c in 0..n {
                    let mut acc = 0.0;
                    for b in 0..n {
                        acc += kmat[a * n + b] * y[o + b * n + c];
                    }
                    dy[o + nn + a * n + c] = -acc;
                }
            }
        }
        Ok(())
    }

    fn project(&self, _t: f64, y: &mut [f64]) {
        let lay = self.layout;
        let n = lay.n;
        let Ok(jet) = eval_metric_jet(self.metric, &y[..n], 0) else {
            return;
        };
        let speed = jet.inner(&y[n..2 * n], &y[n..2 * n]).sqrt();
        if (speed - 1.0).abs() > 1e-12 && speed > 0.0 {
            for c in &mut y[n..2 * n] {
                *c /= speed;
            }
        }
        if lay.frame {
            let (head, tail) = y.split_at_mut(2 * n);
            let e = &mut tail[..n * n];
            let v = &head[n..2 * n];
            if frame_defect(&jet.g, n, e, v) > 1e-10 {
                orthonormalize_frame(&jet.g, n, e, v);
            }
        }
    }
}

fn g_dot(g: &[f64], n: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[i * n + j] * a[i] * b[j];
        }
    }
    s
}

fn column(e: &[f64], n: usize, a: usize) -> Vec<f64> {
    (0..n).map(|i| e[i * n + a]).collect()
}

/// `max(|EᵀgE − id|, |e_n − v|)` entrywise.
pub fn frame_defect(g: &[f64], n: usize, e: &[f64], v: &[f64]) -> f64 {
    let cols: Vec<Vec<f64>> = (0..n).map(|a| column(e, n, a)).collect();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in a..n {
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((g_dot(g, n, &cols[a], &cols[b]) - target).abs());
        }
    }
    for i in 0..n {
        worst = worst.max((cols[n - 1][i] - v[i]).abs());
    }
    worst
}

/// Modified Gram–Schmidt in the `g` inner product with `e_n = v` held fixed.
pub fn orthonormalize_frame(g: &[f64], n: usize, e: &mut [f64], v: &[f64]) {
    let mut cols: Vec<Vec<f64>> = (0..n).map(|a| column(e, n, a)).collect();
    let vn = g_dot(g, n, v, v).sqrt();
    cols[n - 1] = v.iter().map(|c| c / vn).collect();
    for a in 0..n - 1 {
        let mut c = cols[a].clone();
        for b in std::iter::once(n - 1).chain(0..a) {
            let p = g_dot(g, n, &c, &cols[b]);
            for i in 0..n {
                c[i] -= p * cols[b][i];
            }
        }
        let nc = g_dot(g, n, &c, &c).sqrt();
        cols[a] = c.iter().map(|x| x / nc).collect();
    }
    for a in 0..n {
        for i in 0..n {
            e[i * n + a] = cols[a][i];
        }
    }
}

/// Completes a unit vector `v` to a `g`-orthonormal frame with `e_n = v`,
/// starting from the coordinate axes.
pub fn complete_frame(m: &Metric, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = m.dim();
    let g = m.g(p)?;
    let vn = g_dot(&g, n, v, v).sqrt();
    let mut cols: Vec<Vec<f64>> = vec![v.iter().map(|c| c / vn).collect()];
    for axis in 0..n {
        if cols.len() == n {
            break;
        }
        let mut c = vec![0.0; n];
        c[axis] = 1.0;
        let scale = g_dot(&g, n, &c, &c).sqrt();
        for b in &cols {
            let pr = g_dot(&g, n, &c, b);
            for i in 0..n {
                c[i] -= pr * b[i];
            }
        }
        let nc = g_dot(&g, n, &c, &c).sqrt();
        if nc > 0.1 * scale {
            cols.push(c.iter().map(|x| x / nc).collect());
        }
    }
    let mut e = vec![0.0; n * n];
    for (a, col) in cols
        .iter()
        .skip(1)
        .chain(std::iter::once(&cols[0]))
        .enumerate()
    {
        for i in 0..n {
            e[i * n + a] = col[i];
        }
    }
    Ok(e)
}

fn check_unit(m: &Metric, p: &[f64], v: &[f64], tol: f64) -> Result<()> {
    let norm = m.norm(p, v)?;
    if (norm - 1.0).abs() > tol {
        return Err(Error::NonUnitTangent { norm });
    }
    Ok(())
}

fn check_frame(m: &Metric, p: &[f64], v: &[f64], e0: &[f64]) -> Result<()> {
    let n = m.dim();
    if e0.len() != n * n {
        return Err(Error::InvalidParameter(format!(
            "frame must have {} entries",
            n * n
        )));
    }
    let defect = frame_defect(&m.g(p)?, n, e0, v);
    if defect > 1e-8 {
        return Err(Error::NonOrthonormalFrame { defect });
    }
    Ok(())
}

/// Runs the flow from `σ = 0` to `length`, stopping at each value of `grid`.
pub fn run_flow(
    m: &Metric,
    p: &[f64],
    v: &[f64],
    e0: Option<&[f64]>,
    blocks: JacobiBlocks,
    length: f64,
    grid: &[f64],
    opts: &GbsOptions,
) -> Result<Solution> {
    let sys = FlowSystem::new(m, e0.is_some(), blocks);
    let y0 = sys.layout.initial(p, v, e0);
    integrate(&sys, 0.0, &y0, length, grid, opts)
}

/// As [`run_flow`], keeping the part of the solution integrated before a
/// chart exit or other failure.
pub fn run_flow_partial(
    m: &Metric,
    p: &[f64],
    v: &[f64],
    e0: Option<&[f64]>,
    blocks: JacobiBlocks,
    length: f64,
    grid: &[f64],
    opts: &GbsOptions,
) -> (Solution, Option<Error>) {
    let sys = FlowSystem::new(m, e0.is_some(), blocks);
    let y0 = sys.layout.initial(p, v, e0);
    ode::integrate_partial(&sys, 0.0, &y0, length, grid, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSample {
    pub sigma: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Row-major `n × n`; column `a` is `e_a`, column `n` is `γ̇`.
    pub frame: Vec<f64>,
}

/// Unit-speed geodesic with its parallel frame, sampled at accepted steps
/// (or at requested outputs), plus the data needed to evaluate it anywhere.
#[derive(Debug, Clone)]
pub struct GeodesicTrajectory {
    pub n: usize,
    pub length: f64,
    pub tol: f64,
    pub p: Vec<f64>,
    pub v0: Vec<f64>,
    pub frame0: Vec<f64>,
    pub samples: Vec<GeodesicSample>,
    solution: Solution,
}

impl GeodesicTrajectory {
    fn from_solution(
        n: usize,
        length: f64,
        tol: f64,
        p: &[f64],
        v0: &[f64],
        e0: &[f64],
        sol: Solution,
        use_outputs: bool,
    ) -> Self {
        let lay = FlowLayout::new(n, true, JacobiBlocks::None);
        let make = |sigma: f64, y: &[f64]| GeodesicSample {
            sigma,
            x: y[..n].to_vec(),
            v: y[n..2 * n].to_vec(),
            frame: y[lay.e()..lay.e() + n * n].to_vec(),
        };
        let samples = if use_outputs {
            (0..sol.out_t.len())
                .map(|i| make(sol.out_t[i], sol.output(i)))
                .collect()
        } else {
            (0..sol.t.len())
                .map(|i| make(sol.t[i], sol.node(i)))
                .collect()
        };
        GeodesicTrajectory {
            n,
            length,
            tol,
            p: p.to_vec(),
            v0: v0.to_vec(),
            frame0: e0.to_vec(),
            samples,
            solution: sol,
        }
    }

    pub fn endpoint(&self) -> &[f64] {
        &self.solution.last()[..self.n]
    }

    pub fn end_velocity(&self) -> &[f64] {
        &self.solution.last()[self.n..2 * self.n]
    }

    pub fn end_frame(&self) -> &[f64] {
        let n = self.n;
        &self.solution.last()[2 * n..2 * n + n * n]
    }

    pub fn stats(&self) -> ode::Stats {
        self.solution.stats
    }

    /// Dense evaluation at any `σ ∈ [0, length]`.
    pub fn at(&self, m: &Metric, sigma: f64) -> Result<GeodesicSample> {
        let sys = FlowSystem::new(m, true, JacobiBlocks::None);
        let y = self.solution.eval(&sys, sigma)?;
        let n = self.n;
        Ok(GeodesicSample {
            sigma,
            x: y[..n].to_vec(),
            v: y[n..2 * n].to_vec(),
            frame: y[2 * n..2 * n + n * n].to_vec(),
        })
    }

    /// Largest `||γ̇|_g − 1|` over the samples.
    pub fn speed_defect(&self, m: &Metric) -> Result<f64> {
        let mut worst = 0.0f64;
        for s in &self.samples {
            worst = worst.max((m.norm(&s.x, &s.v)? - 1.0).abs());
        }
        Ok(worst)
    }

    /// Largest frame orthonormality / alignment defect over the samples.
    pub fn frame_defect(&self, m: &Metric) -> Result<f64> {
        let mut worst = 0.0f64;
        for s in &self.samples {
            worst = worst.max(frame_defect(&m.g(&s.x)?, self.n, &s.frame, &s.v));
        }
        Ok(worst)
    }
}

fn default_opts(tol: f64) -> GbsOptions {
    GbsOptions::with_tol(tol)
}

/// Integrates the unit-speed geodesic from `(p, v_unit)` over `[0, length]`
/// with a parallel frame completed from the coordinate axes.
pub fn integrate_geodesic(
    m: &Metric,
    p: &[f64],
    v_unit: &[f64],
    length: f64,
    tol: f64,
) -> Result<GeodesicTrajectory> {
    integrate_geodesic_sampled(m, p, v_unit, length, tol, &[])
}

/// As [`integrate_geodesic`], with samples exactly at `sigmas` (when nonempty).
pub fn integrate_geodesic_sampled(
    m: &Metric,
    p: &[f64],
    v_unit: &[f64],
    length: f64,
    tol: f64,
    sigmas: &[f64],
) -> Result<GeodesicTrajectory> {
    if !(length > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "length must be positive, got {length}"
        )));
    }
    check_unit(m, p, v_unit, 1e-10)?;
    let e0 = complete_frame(m, p, v_unit)?;
    let sol = run_flow(
        m,
        p,
        v_unit,
        Some(&e0),
        JacobiBlocks::None,
        length,
        sigmas,
        &default_opts(tol),
    )?;
    Ok(GeodesicTrajectory::from_solution(
        m.dim(),
        length,
        tol,
        p,
        v_unit,
        &e0,
        sol,
        !sigmas.is_empty(),
    ))
}

/// Re-transports a user frame `E0` (g-orthonormal, last column `γ̇(0)`)
/// along the trajectory's geodesic.
pub fn parallel_transport_frame(
    m: &Metric,
    traj: &GeodesicTrajectory,
    e0: &[f64],
) -> Result<GeodesicTrajectory> {
    check_frame(m, &traj.p, &traj.v0, e0)?;
    let grid: Vec<f64> = traj.samples.iter().map(|s| s.sigma).collect();
    let sol = run_flow(
        m,
        &traj.p,
        &traj.v0,
        Some(e0),
        JacobiBlocks::None,
        traj.length,
        &grid,
        &default_opts(traj.tol),
    )?;
    Ok(GeodesicTrajectory::from_solution(
        m.dim(),
        traj.length,
        traj.tol,
        &traj.p,
        &traj.v0,
        e0,
        sol,
        true,
    ))
}

/// `exp_p(w)`: endpoint of the unit-speed geodesic in direction `w` after length `|w|_g`.
pub fn exp_map(m: &Metric, p: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    exp_map_tol(m, p, w, 1e-12)
}

pub fn exp_map_tol(m: &Metric, p: &[f64], w: &[f64], tol: f64) -> Result<Vec<f64>> {
    let len = m.norm(p, w)?;
    if !(len > 0.0) {
        return Err(Error::InvalidParameter(
            "exp_map needs a nonzero vector".into(),
        ));
    }
    let v: Vec<f64> = w.iter().map(|c| c / len).collect();
    let sol = run_flow(
        m,
        p,
        &v,
        None,
        JacobiBlocks::None,
        len,
        &[],
        &default_opts(tol),
    )?;
    Ok(sol.last()[..m.dim()].to_vec())
}

/// Integrates backwards from a midpoint so that the returned start point and
/// unit velocity trace a geodesic of the given length centred on `mid`.
pub fn centred_start(
    m: &Metric,
    mid: &[f64],
    dir: &[f64],
    length: f64,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.dim();
    let norm = m.norm(mid, dir)?;
    let back: Vec<f64> = dir.iter().map(|c| -c / norm).collect();
    let sol = run_flow(
        m,
        mid,
        &back,
        None,
        JacobiBlocks::None,
        0.5 * length,
        &[],
        &default_opts(tol),
    )?;
    let y = sol.last();
    let p = y[..n].to_vec();
    let mut v: Vec<f64> = y[n..2 * n].iter().map(|c| -c).collect();
    let s = m.norm(&p, &v)?;
    v.iter_mut().for_each(|c| *c /= s);
    Ok((p, v))
}
