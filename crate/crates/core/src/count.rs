//! Counting geodesics from `p` to `x` of length below `T`, and the area
//! formula comparing averaged counts with the integrated exponential-map
//! Jacobian.
//!
//! Starts come from a table of the exponential map on a polar grid in
//! `T_pM`. Each table node carries the endpoint and its derivatives along
//! the ray and across rays (the latter from the `H` block), so on surfaces
//! a cell is a bicubic Hermite patch that can be inverted directly. Roots of
//! the patches are then polished by Newton's method on the true exponential
//! map, with the differential `E(σ) H(σ) E₀ᵀ g_p / σ`, and re-verified by an
//! independent tighter integration.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geodesic::ode::GbsOptions;
use crate::geodesic::{complete_frame, exp_map_tol, run_flow, run_flow_partial, JacobiBlocks};
use crate::jacobi::{conjugate_points, gram_from, propagate_jacobi_grid, uniform_grid, GramMode};
use crate::metric::{christoffel, sampling_box, Metric};
use crate::quadrature::{gauss_legendre, panels};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Rays in the start table (per great circle of directions).
    pub directions: usize,
    pub sigma_step: f64,
    pub ode_tol: f64,
    /// Largest accepted `|exp_p(v) − x|_g`.
    pub root_tol: f64,
    /// Dedupe radius in `T_pM`; `None` means `1e-4·T` after polishing and a
    /// quarter of the radial step for table-only counts.
    pub dedupe: Option<f64>,
    /// Polish table roots on the true exponential map and re-verify them.
    /// Without it counts come from the table alone.
    pub polish: bool,
    /// Roots whose Jacobian falls below this mark the query irregular.
    pub regular_threshold: f64,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            directions: 256,
            sigma_step: 0.05,
            ode_tol: 1e-10,
            root_tol: 1e-8,
            dedupe: None,
            polish: true,
            regular_threshold: 1e-6,
            max_newton: 12,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.directions >= 8
            && self.sigma_step > 0.0
            && self.ode_tol > 0.0
            && self.root_tol > 0.0
            && self.dedupe.is_none_or(|d| d > 0.0)
            && self.max_newton >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid solver options {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct CountQuery {
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    pub t: f64,
    pub solver: SolverOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoundGeodesic {
    pub v: Vec<f64>,
    pub length: f64,
    pub residual: f64,
    /// Residual from the independent integration at `ode_tol/100`.
    pub verified_residual: Option<f64>,
    /// `|Jac exp_p|` at `v`.
    pub jacobian: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Coverage {
    pub rays: usize,
    /// Extra rays integrated to split rejected cells.
    pub refined_rays: usize,
    pub sigma_step: f64,
    pub theta_step: f64,
    /// Rays cut short by a chart exit.
    pub truncated_rays: usize,
    pub candidates: usize,
    /// Candidates dropped because polishing or verification failed.
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountResult {
    pub count: usize,
    /// Sorted by length.
    pub found: Vec<FoundGeodesic>,
    pub regular: bool,
    pub coverage: Coverage,
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

/// Endpoint plus the differential of `exp_p` at each node (higher dimensions).
#[derive(Debug, Clone)]
struct Ray {
    u: Vec<f64>,
    /// Nodes that were integrated before any chart exit.
    valid: usize,
    data: Vec<f64>,
}

/// Surface node: endpoint, `∂/∂σ`, `∂/∂θ` and `∂²/∂σ∂θ`.
type Node = [f64; 8];

/// Split factor per side for rejected cells, and the deepest refinement.
const REFINE: usize = 4;
const MAX_LEVEL: usize = 3;

/// Bicubic Hermite patch over one polar cell of `T_pM`.
#[derive(Debug, Clone)]
struct Patch {
    /// Corners at `(σ₀, θ₀)`, `(σ₁, θ₀)`, `(σ₀, θ₁)`, `(σ₁, θ₁)`.
    corners: [Node; 4],
    sigma0: f64,
    theta0: f64,
    ds: f64,
    dt: f64,
}

const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

impl Patch {
    /// Cell between rays `a` and `b` (at `θ₀` and `θ₁`) and nodes `ia`, `ib`.
    /// Periodic coordinates of the corners are moved onto the branch of the
    /// first corner; rays passing a pole on opposite sides differ by a period.
    fn new(
        a: &[Node],
        b: &[Node],
        (ia, ib): (usize, usize),
        sigma0: f64,
        theta0: f64,
        (ds, dt): (f64, f64),
        periods: &[Option<f64>; 2],
    ) -> Self {
        let mut corners = [a[ia], a[ib], b[ia], b[ib]];
        for d in 0..2 {
            if let Some(p) = periods[d] {
                let base = corners[0][d];
                for c in corners.iter_mut().skip(1) {
                    c[d] -= ((c[d] - base) / p).round() * p;
                }
            }
        }
        Patch {
            corners,
            sigma0,
            theta0,
            ds,
            dt,
        }
    }

    fn corner(&self, ci: usize, di: usize) -> &Node {
        &self.corners[ci + 2 * di]
    }

    /// Edges agree with the trapezoid rule on their end derivatives. Fails
    /// where the chart is singular along the way (rays passing on either
    /// side of a coordinate pole).
    fn consistent(&self) -> bool {
        let edges = [
            ((0usize, 0usize), (1usize, 0usize), 2usize, self.ds),
            ((0, 1), (1, 1), 2, self.ds),
            ((0, 0), (0, 1), 4, self.dt),
            ((1, 0), (1, 1), 4, self.dt),
        ];
        edges.iter().all(|&((ca, da), (cb, db), off, h)| {
            let a = self.corner(ca, da);
            let b = self.corner(cb, db);
            (0..2).all(|d| {
                let (da_, db_) = (h * a[off + d], h * b[off + d]);
                let mismatch = (b[d] - a[d] - 0.5 * (da_ + db_)).abs();
                mismatch <= 0.2 * da_.abs().max(db_.abs()) + 1e-7
            })
        })
    }

    /// Value and partials in local `(s, t) ∈ [0, 1]²`.
    fn eval(&self, s: f64, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let (hs, dhs) = hermite(s);
        let (ht, dht) = hermite(t);
        let mut val = [0.0; 2];
        let mut ds = [0.0; 2];
        let mut dt = [0.0; 2];
        let (a, b) = (self.ds, self.dt);
        for (ci, di) in CORNERS {
            let nd = self.corner(ci, di);
            // basis indices: value → 0/2, derivative → 1/3
            let (bs0, bs1) = (2 * ci, 2 * ci + 1);
            let (bt0, bt1) = (2 * di, 2 * di + 1);
            for d in 0..2 {
                let terms = [
                    (hs[bs0], ht[bt0], dhs[bs0], dht[bt0], nd[d]),
                    (hs[bs1], ht[bt0], dhs[bs1], dht[bt0], a * nd[2 + d]),
                    (hs[bs0], ht[bt1], dhs[bs0], dht[bt1], b * nd[4 + d]),
                    (hs[bs1], ht[bt1], dhs[bs1], dht[bt1], a * b * nd[6 + d]),
                ];
                for (p_s, p_t, q_s, q_t, c) in terms {
                    val[d] += p_s * p_t * c;
                    ds[d] += q_s * p_t * c;
                    dt[d] += p_s * q_t * c;
                }
            }
        }
        (val, ds, dt)
    }

    fn newton(&self, m: &Metric, x: &[f64], start: (f64, f64)) -> Option<(f64, f64, f64)> {
        let (mut s, mut t) = start;
        let scale = 1.0 + x[0].abs() + x[1].abs();
        for _ in 0..30 {
            let (val, ds, dt) = self.eval(s, t);
            let r = m.chart_difference(&val, x);
            let det = ds[0] * dt[1] - ds[1] * dt[0];
            if r[0].abs().max(r[1].abs()) <= 1e-13 * scale {
                let tol = 1e-9;
                return (s >= -tol && s <= 1.0 + tol && t >= -tol && t <= 1.0 + tol)
                    .then_some((s, t, det));
            }
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            let mut a = -(dt[1] * r[0] - dt[0] * r[1]) / det;
            let mut b = -(-ds[1] * r[0] + ds[0] * r[1]) / det;
            let step = a.abs().max(b.abs());
            if step > 0.5 {
                a *= 0.5 / step;
                b *= 0.5 / step;
            }
            s += a;
            t += b;
            if !(-0.6..=1.6).contains(&s) || !(-0.6..=1.6).contains(&t) {
                return None;
            }
        }
        None
    }

    /// Padded bounding box `[lo0, lo1, hi0, hi1]`, reduced into the first period.
    fn bbox(&self, periods: &[Option<f64>; 2]) -> [f64; 4] {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut pad = [0.0f64; 2];
        for nd in &self.corners {
            for d in 0..2 {
                lo[d] = lo[d].min(nd[d]);
                hi[d] = hi[d].max(nd[d]);
                pad[d] = pad[d].max((self.ds * nd[2 + d]).abs() + (self.dt * nd[4 + d]).abs());
            }
        }
        for d in 0..2 {
            let w = 0.3 * pad[d] + 1e-9 * (1.0 + lo[d].abs());
            lo[d] -= w;
            hi[d] += w;
            if let Some(p) = periods[d] {
                let k = (lo[d] / p).floor();
                lo[d] -= k * p;
                hi[d] -= k * p;
            }
        }
        [lo[0], lo[1], hi[0], hi[1]]
    }
}

/// Tabulated exponential map at `p` over `|v| ≤ t_max`.
#[derive(Debug, Clone)]
pub struct ExpTable {
    metric: Metric,
    n: usize,
    p: Vec<f64>,
    g_p: Vec<f64>,
    /// `g_p`-orthonormal basis of `T_pM` (surfaces).
    basis: Vec<Vec<f64>>,
    t_max: f64,
    dsigma: f64,
    dtheta: f64,
    theta0: f64,
    ray_count: usize,
    /// Extra rays integrated to split rejected cells (surfaces).
    refined_rays: usize,
    rays: Vec<Ray>,
    patches: Vec<Patch>,
    grid: Option<CellGrid>,
    truncated: usize,
    gopts: GbsOptions,
}

#[derive(Debug, Clone)]
struct CellGrid {
    lo: [f64; 2],
    width: [f64; 2],
    count: [usize; 2],
    period: [Option<f64>; 2],
    buckets: Vec<Vec<u32>>,
    bbox: Vec<[f64; 4]>,
}

fn reduce(x: f64, period: Option<f64>) -> f64 {
    match period {
        Some(p) => x.rem_euclid(p),
        None => x,
    }
}

impl CellGrid {
    fn bucket_range(&self, d: usize, lo: f64, hi: f64) -> Vec<usize> {
        let c = self.count[d];
        let a = ((lo - self.lo[d]) / self.width[d]).floor() as i64;
        let b = ((hi - self.lo[d]) / self.width[d]).floor() as i64;
        if self.period[d].is_some() {
            if b - a + 1 >= c as i64 {
                return (0..c).collect();
            }
            (a..=b).map(|k| k.rem_euclid(c as i64) as usize).collect()
        } else {
            let a = a.clamp(0, c as i64 - 1) as usize;
            let b = b.clamp(0, c as i64 - 1) as usize;
            (a..=b).collect()
        }
    }

    fn bucket_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for d in 0..2 {
            let xr = reduce(x[d], self.period[d]);
            let k = ((xr - self.lo[d]) / self.width[d]).floor();
            if self.period[d].is_some() {
                idx[d] = (k as i64).rem_euclid(self.count[d] as i64) as usize;
            } else {
                if k < 0.0 || k >= self.count[d] as f64 {
                    return None;
                }
                idx[d] = k as usize;
            }
        }
        Some(idx[0] * self.count[1] + idx[1])
    }

    fn in_bbox(&self, cell: usize, x: &[f64]) -> bool {
        let b = &self.bbox[cell];
        (0..2).all(|d| {
            let (lo, hi) = (b[d], b[d + 2]);
            match self.period[d] {
                Some(p) => (x[d] - lo).rem_euclid(p) <= hi - lo,
                None => x[d] >= lo && x[d] <= hi,
            }
        })
    }
}

fn hermite(s: f64) -> ([f64; 4], [f64; 4]) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        [
            2.0 * s3 - 3.0 * s2 + 1.0,
            s3 - 2.0 * s2 + s,
            -2.0 * s3 + 3.0 * s2,
            s3 - s2,
        ],
        [
            6.0 * s2 - 6.0 * s,
            3.0 * s2 - 4.0 * s + 1.0,
            -6.0 * s2 + 6.0 * s,
            3.0 * s2 - 2.0 * s,
        ],
    )
}

impl ExpTable {
    /// Integrates the rays of the table. Directions are offset by a
    /// seed-derived fraction of the angular step. On surfaces, cells that
    /// fail the consistency check or are cut by a chart exit are split by
    /// extra rays, up to `MAX_LEVEL` times.
    pub fn build(
        m: &Metric,
        p: &[f64],
        t_max: f64,
        opts: &SolverOptions,
        seed_root: u64,
    ) -> Result<Self> {
        opts.validate()?;
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "table length must be positive, got {t_max}"
            )));
        }
        let n = m.dim();
        if n < 2 {
            return Err(Error::UnsupportedSpace(
                "counting needs dimension at least 2".into(),
            ));
        }
        let g_p = m.g(p)?;
        let nodes = (t_max / opts.sigma_step).ceil().max(1.0) as usize + 1;
        let dsigma = t_max / (nodes - 1) as f64;
        let grid: Vec<f64> = (0..nodes)
            .map(|i| {
                if i + 1 == nodes {
                    t_max
                } else {
                    i as f64 * dsigma
                }
            })
            .collect();
        let mut rng = seed::stream(seed_root, "count/directions");
        let frac: f64 = 0.25 + 0.5 * rng.random::<f64>();

        let mut table = ExpTable {
            metric: m.clone(),
            n,
            p: p.to_vec(),
            g_p: g_p.clone(),
            basis: Vec::new(),
            t_max,
            dsigma,
            dtheta: 2.0 * PI / opts.directions as f64,
            theta0: 0.0,
            ray_count: 0,
            refined_rays: 0,
            rays: Vec::new(),
            patches: Vec::new(),
            grid: None,
            truncated: 0,
            gopts: GbsOptions::with_tol(opts.ode_tol),
        };
        table.theta0 = frac * table.dtheta;

        if n == 2 {
            table.basis = orthonormal_basis(&g_p, n);
            let mcount = opts.directions;
            let mut rays = Vec::with_capacity(mcount);
            for j in 0..mcount {
                let (nodes, cut) =
                    table.surface_ray(table.theta0 + j as f64 * table.dtheta, &grid, t_max)?;
                table.truncated += cut as usize;
                rays.push(nodes);
            }
            table.ray_count = mcount;
            let periods = [m.period(0), m.period(1)];
            let mut rejected: Vec<Vec<f64>> = vec![Vec::new(); mcount];
            for j in 0..mcount {
                let (a, b) = (&rays[j], &rays[(j + 1) % mcount]);
                for i in 0..nodes - 1 {
                    let theta = table.theta0 + j as f64 * table.dtheta;
                    if a.len() > i + 1 && b.len() > i + 1 {
                        let patch = Patch::new(
                            a,
                            b,
                            (i, i + 1),
                            grid[i],
                            theta,
                            (dsigma, table.dtheta),
                            &periods,
                        );
                        if patch.consistent() {
                            table.patches.push(patch);
                            continue;
                        }
                    }
                    rejected[j].push(grid[i]);
                }
            }
            for (j, cells) in rejected.into_iter().enumerate() {
                if !cells.is_empty() {
                    let theta = table.theta0 + j as f64 * table.dtheta;
                    table.refine(theta, table.dtheta, dsigma, &cells, 1)?;
                }
            }
            table.build_grid();
        } else {
            let dirs = sphere_directions(&g_p, n, opts.directions * opts.directions / 4, &mut rng);
            table.ray_count = dirs.len();
            for u in dirs {
                let e0 = complete_frame(m, p, &u)?;
                let (sol, err) = run_flow_partial(
                    m,
                    p,
                    &u,
                    Some(&e0),
                    JacobiBlocks::HOnly,
                    t_max,
                    &grid,
                    &table.gopts,
                );
                table.truncated += err.is_some() as usize;
                let mut data = Vec::with_capacity(sol.out_t.len() * (n + n * n));
                for k in 0..sol.out_t.len() {
                    table.push_node(&mut data, sol.out_t[k], sol.output(k), &e0)?;
                }
                table.rays.push(Ray {
                    u,
                    valid: sol.out_t.len(),
                    data,
                });
            }
        }
        Ok(table)
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    fn direction(&self, theta: f64) -> Vec<f64> {
        (0..self.n)
            .map(|i| theta.cos() * self.basis[0][i] + theta.sin() * self.basis[1][i])
            .collect()
    }

    /// `du/dθ` for `u = cos θ b₁ + sin θ b₂`, i.e. `u` rotated by a quarter turn.
    fn direction_derivative(&self, u: &[f64]) -> Vec<f64> {
        let c = g_dot(&self.g_p, 2, u, &self.basis[0]);
        let s = g_dot(&self.g_p, 2, u, &self.basis[1]);
        (0..2)
            .map(|i| -s * self.basis[0][i] + c * self.basis[1][i])
            .collect()
    }

    /// Nodes of the ray at angle `theta` on `grid`, and whether a chart exit cut it short.
    fn surface_ray(&self, theta: f64, grid: &[f64], length: f64) -> Result<(Vec<Node>, bool)> {
        let u = self.direction(theta);
        let du = self.direction_derivative(&u);
        let e0 = vec![du[0], u[0], du[1], u[1]];
        let (sol, err) = run_flow_partial(
            &self.metric,
            &self.p,
            &u,
            Some(&e0),
            JacobiBlocks::HOnly,
            length,
            grid,
            &self.gopts,
        );
        let mut data = Vec::with_capacity(sol.out_t.len() * 8);
        for k in 0..sol.out_t.len() {
            self.push_node(&mut data, sol.out_t[k], sol.output(k), &e0)?;
        }
        let nodes = data
            .chunks_exact(8)
            .map(|c| c.try_into().expect("node width"))
            .collect();
        Ok((nodes, err.is_some()))
    }

    /// Splits the cells `[σ, σ + ds] × [theta, theta + dt]` (one per entry of
    /// `sigmas`) into `REFINE²` sub-cells from `REFINE + 1` fresh rays.
    fn refine(&mut self, theta: f64, dt: f64, ds: f64, sigmas: &[f64], level: usize) -> Result<()> {
        let (sub_dt, sub_ds) = (dt / REFINE as f64, ds / REFINE as f64);
        let mut grid: Vec<f64> = sigmas
            .iter()
            .flat_map(|&s| (0..=REFINE).map(move |l| s + l as f64 * sub_ds))
            .map(|s| s.min(self.t_max))
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * ds);
        let length = *grid.last().expect("nonempty grid");
        let mut rays = Vec::with_capacity(REFINE + 1);
        for k in 0..=REFINE {
            rays.push(
                self.surface_ray(theta + k as f64 * sub_dt, &grid, length)?
                    .0,
            );
        }
        self.refined_rays += REFINE + 1;
        let pos = |s: f64| grid.partition_point(|g| *g < s - 1e-9 * ds);
        let periods = [self.metric.period(0), self.metric.period(1)];
        let mut rejected: Vec<Vec<f64>> = vec![Vec::new(); REFINE];
        for &s in sigmas {
            for l in 0..REFINE {
                let s0 = s + l as f64 * sub_ds;
                let (ia, ib) = (pos(s0), pos(s0 + sub_ds));
                for k in 0..REFINE {
                    let (a, b) = (&rays[k], &rays[k + 1]);
                    if a.len() > ib && b.len() > ib {
                        let th = theta + k as f64 * sub_dt;
                        let patch = Patch::new(a, b, (ia, ib), s0, th, (sub_ds, sub_dt), &periods);
                        if patch.consistent() {
                            self.patches.push(patch);
                            continue;
                        }
                    }
                    rejected[k].push(s0);
                }
            }
        }
        if level < MAX_LEVEL {
            for (k, cells) in rejected.into_iter().enumerate() {
                if !cells.is_empty() {
                    self.refine(theta + k as f64 * sub_dt, sub_dt, sub_ds, &cells, level + 1)?;
                }
            }
        }
        Ok(())
    }

    fn push_node(&self, data: &mut Vec<f64>, sigma: f64, y: &[f64], e0: &[f64]) -> Result<()> {
        let n = self.n;
        let nn = n * n;
        let x = &y[..n];
        let v = &y[n..2 * n];
        let e = &y[2 * n..2 * n + nn];
        let h = &y[2 * n + nn..2 * n + 2 * nn];
        let dh = &y[2 * n + 2 * nn..2 * n + 3 * nn];
        if n == 2 {
            // J = E H c with c = (1, 0): the field across rays.
            let mut j = [0.0; 2];
            let mut dj = [0.0; 2];
            let gamma = christoffel(&self.metric, x)?;
            for i in 0..2 {
                for a in 0..2 {
                    let mut de = 0.0;
                    for jj in 0..2 {
                        for k in 0..2 {
                            de -= gamma[(i * 2 + jj) * 2 + k] * v[jj] * e[k * 2 + a];
                        }
                    }
                    j[i] += e[i * 2 + a] * h[a * 2];
                    dj[i] += de * h[a * 2] + e[i * 2 + a] * dh[a * 2];
                }
            }
            data.extend_from_slice(&[x[0], x[1], v[0], v[1], j[0], j[1], dj[0], dj[1]]);
        } else {
            data.extend_from_slice(x);
            data.extend(differential(&self.g_p, n, sigma, e, h, e0).iter());
        }
        Ok(())
    }

    fn build_grid(&mut self) {
        let periods = [self.metric.period(0), self.metric.period(1)];
        let bbox: Vec<[f64; 4]> = self.patches.iter().map(|p| p.bbox(&periods)).collect();
        let mut glo = [f64::INFINITY; 2];
        let mut ghi = [f64::NEG_INFINITY; 2];
        for b in &bbox {
            for d in 0..2 {
                glo[d] = glo[d].min(b[d]);
                ghi[d] = ghi[d].max(b[d + 2]);
            }
        }
        let per_dim = ((bbox.len() as f64 / 4.0).sqrt().ceil() as usize).max(1);
        let mut grid = CellGrid {
            lo: [0.0; 2],
            width: [1.0; 2],
            count: [per_dim; 2],
            period: periods,
            buckets: Vec::new(),
            bbox,
        };
        for d in 0..2 {
            match periods[d] {
                Some(p) => {
                    grid.lo[d] = 0.0;
                    grid.width[d] = p / per_dim as f64;
                }
                None => {
                    if !glo[d].is_finite() {
                        glo[d] = 0.0;
                        ghi[d] = 1.0;
                    }
                    grid.lo[d] = glo[d];
                    grid.width[d] = ((ghi[d] - glo[d]) / per_dim as f64).max(1e-12);
                }
            }
        }
        grid.buckets = vec![Vec::new(); per_dim * per_dim];
        for (cell, b) in grid.bbox.iter().enumerate() {
            let r0 = grid.bucket_range(0, b[0], b[2]);
            let r1 = grid.bucket_range(1, b[1], b[3]);
            for &a in &r0 {
                for &c in &r1 {
                    grid.buckets[a * per_dim + c].push(cell as u32);
                }
            }
        }
        self.grid = Some(grid);
    }

    /// Roots of the surface patches: `(σ, θ, |Jac exp_p|)` with `σ < limit`.
    fn patch_roots(&self, x: &[f64], limit: f64) -> Vec<(f64, f64, f64)> {
        let grid = self.grid.as_ref().expect("surface table");
        let Some(bucket) = grid.bucket_of(x) else {
            return Vec::new();
        };
        let sqrt_det = self
            .metric
            .g(x)
            .map(|g| (g[0] * g[3] - g[1] * g[2]).max(0.0).sqrt())
            .unwrap_or(f64::NAN);
        let mut out = Vec::new();
        for &cell in &grid.buckets[bucket] {
            let cell = cell as usize;
            let patch = &self.patches[cell];
            if patch.sigma0 >= limit || !grid.in_bbox(cell, x) {
                continue;
            }
            for start in [
                (0.5, 0.5),
                (0.15, 0.15),
                (0.85, 0.85),
                (0.15, 0.85),
                (0.85, 0.15),
            ] {
                if let Some((s, t, det)) = patch.newton(&self.metric, x, start) {
                    let sigma = patch.sigma0 + s * patch.ds;
                    let theta = patch.theta0 + t * patch.dt;
                    let jac = if sigma > 0.0 {
                        det.abs() / (patch.ds * patch.dt) * sqrt_det / sigma
                    } else {
                        0.0
                    };
                    out.push((sigma, theta, jac));
                    break;
                }
            }
        }
        out.retain(|r| r.0 < limit);
        out
    }

    /// Starts near `x` in higher dimensions: nodes whose linearized solve
    /// lands within a couple of grid steps.
    fn linear_starts(&self, x: &[f64], limit: f64) -> Vec<Vec<f64>> {
        let n = self.n;
        let stride = n + n * n;
        let reach = 2.0
            * self
                .dsigma
                .max(self.t_max * 2.0 * PI / (self.rays.len() as f64).sqrt());
        let mut out = Vec::new();
        for ray in &self.rays {
            for i in 1..ray.valid {
                let sigma = i as f64 * self.dsigma;
                if sigma >= limit + self.dsigma {
                    break;
                }
                let nd = &ray.data[i * stride..(i + 1) * stride];
                let r = self.metric.chart_difference(x, &nd[..n]);
                let d = DMatrix::from_row_slice(n, n, &nd[n..]);
                let Some(w) = d.lu().solve(&DVector::from_column_slice(&r)) else {
                    continue;
                };
                let wn = g_dot(&self.g_p, n, w.as_slice(), w.as_slice()).sqrt();
                if wn <= reach {
                    out.push((0..n).map(|k| sigma * ray.u[k] + w[k]).collect());
                }
            }
        }
        out
    }
}

/// Differential of `exp_p` at `σu` in chart components: `E(σ) H(σ) E₀ᵀ g_p / σ`.
fn differential(g_p: &[f64], n: usize, sigma: f64, e: &[f64], h: &[f64], e0: &[f64]) -> Vec<f64> {
    let e = DMatrix::from_row_slice(n, n, e);
    let h = DMatrix::from_row_slice(n, n, h);
    let e0 = DMatrix::from_row_slice(n, n, e0);
    let g = DMatrix::from_row_slice(n, n, g_p);
    let d = if sigma > 0.0 {
        e * h * e0.transpose() * g / sigma
    } else {
        DMatrix::identity(n, n)
    };
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(d[(i, j)]);
        }
    }
    out
}

fn orthonormal_basis(g: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for axis in 0..n {
        let mut c = vec![0.0; n];
        c[axis] = 1.0;
        for b in &basis {
            let pr = g_dot(g, n, &c, b);
            for i in 0..n {
                c[i] -= pr * b[i];
            }
        }
        let nc = g_dot(g, n, &c, &c).sqrt();
        basis.push(c.iter().map(|v| v / nc).collect());
    }
    basis
}

/// Unit directions in `(T_pM, g_p)`: a Fibonacci lattice for `n = 3`,
/// seeded Gaussian samples otherwise.
fn sphere_directions<R: Rng>(g: &[f64], n: usize, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let basis = orthonormal_basis(g, n);
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let coords: Vec<f64> = if n == 3 {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                vec![r * phi.cos(), r * phi.sin(), z]
            } else {
                loop {
                    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                    let r2: f64 = v.iter().map(|a| a * a).sum();
                    if r2 > 1e-4 && r2 <= 1.0 {
                        break v.iter().map(|a| a / r2.sqrt()).collect();
                    }
                }
            };
            (0..n)
                .map(|i| (0..n).map(|a| coords[a] * basis[a][i]).sum())
                .collect()
        })
        .collect()
}

/// Reusable counter for one base point.
#[derive(Debug, Clone)]
pub struct GeodesicCounter {
    pub table: ExpTable,
    pub opts: SolverOptions,
}

struct Shot {
    end: Vec<f64>,
    d: DMatrix<f64>,
    jacobian: f64,
}

impl GeodesicCounter {
    pub fn new(
        m: &Metric,
        p: &[f64],
        t_max: f64,
        opts: SolverOptions,
        seed_root: u64,
    ) -> Result<Self> {
        let table = ExpTable::build(m, p, t_max, &opts, seed_root)?;
        Ok(GeodesicCounter { table, opts })
    }

    fn metric(&self) -> &Metric {
        &self.table.metric
    }

    fn shoot(&self, v: &[f64]) -> Result<Shot> {
        let m = self.metric();
        let n = self.table.n;
        let p = &self.table.p;
        let sigma = g_dot(&self.table.g_p, n, v, v).sqrt();
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter("zero shooting vector".into()));
        }
        let u: Vec<f64> = v.iter().map(|c| c / sigma).collect();
        let e0 = complete_frame(m, p, &u)?;
        let sol = run_flow(
            m,
            p,
            &u,
            Some(&e0),
            JacobiBlocks::HOnly,
            sigma,
            &[],
            &GbsOptions::with_tol(self.opts.ode_tol),
        )?;
        let y = sol.last();
        let nn = n * n;
        let e = &y[2 * n..2 * n + nn];
        let h = &y[2 * n + nn..2 * n + 2 * nn];
        let d = DMatrix::from_row_slice(n, n, &differential(&self.table.g_p, n, sigma, e, h, &e0));
        let hm = DMatrix::from_row_slice(n, n, h);
        let hn = hm.view((0, 0), (n - 1, n - 1)).determinant();
        Ok(Shot {
            end: y[..n].to_vec(),
            d,
            jacobian: hn.abs() / sigma.powi(n as i32 - 1),
        })
    }

    fn residual_norm(&self, x: &[f64], end: &[f64]) -> f64 {
        let r = self.metric().chart_difference(end, x);
        let n = self.table.n;
        match self.metric().g(x) {
            Ok(g) => g_dot(&g, n, &r, &r).max(0.0).sqrt(),
            Err(_) => f64::INFINITY,
        }
    }

    /// Damped Newton on `v ↦ exp_p(v) − x`.
    fn polish(&self, x: &[f64], v0: Vec<f64>) -> Option<(Vec<f64>, f64, f64)> {
        let n = self.table.n;
        let mut v = v0;
        let mut shot = self.shoot(&v).ok()?;
        let mut res = self.residual_norm(x, &shot.end);
        for _ in 0..self.opts.max_newton {
            if res <= 1e-3 * self.opts.root_tol {
                break;
            }
            let r = self.metric().chart_difference(&shot.end, x);
            let w = shot.d.clone().lu().solve(&DVector::from_column_slice(&r))?;
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..6 {
                let trial: Vec<f64> = (0..n).map(|k| v[k] - lambda * w[k]).collect();
                if let Ok(s) = self.shoot(&trial) {
                    let rn = self.residual_norm(x, &s.end);
                    if rn < res {
                        v = trial;
                        shot = s;
                        res = rn;
                        improved = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (res <= self.opts.root_tol).then_some((v, res, shot.jacobian))
    }

    /// Geodesics from the table's base point to `x` with length `< t`.
    pub fn count(&self, x: &[f64], t: f64) -> Result<CountResult> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "T must be positive, got {t}"
            )));
        }
        if t > self.table.t_max * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "T = {t} exceeds the table length {}",
                self.table.t_max
            )));
        }
        let n = self.table.n;
        let margin = if self.opts.polish {
            2.0 * self.table.dsigma
        } else {
            0.0
        };
        let limit = (t + margin).min(self.table.t_max * (1.0 + 1e-12));
        let mut coverage = Coverage {
            rays: self.table.ray_count,
            refined_rays: self.table.refined_rays,
            sigma_step: self.table.dsigma,
            theta_step: if n == 2 { self.table.dtheta } else { f64::NAN },
            truncated_rays: self.table.truncated,
            ..Default::default()
        };
        let mut found: Vec<FoundGeodesic> = Vec::new();
        if n == 2 {
            let roots = self.table.patch_roots(x, limit);
            coverage.candidates = roots.len();
            for (sigma, theta, jac) in roots {
                let v: Vec<f64> = self
                    .table
                    .direction(theta)
                    .iter()
                    .map(|c| c * sigma)
                    .collect();
                if self.opts.polish {
                    match self.polish(x, v) {
                        Some((v, res, jac)) => found.push(self.make_found(v, res, jac)),
                        None => coverage.rejected += 1,
                    }
                } else {
                    found.push(FoundGeodesic {
                        v,
                        length: sigma,
                        residual: f64::NAN,
                        verified_residual: None,
                        jacobian: jac,
                    });
                }
            }
        } else {
            let starts = self.table.linear_starts(x, limit);
            coverage.candidates = starts.len();
            for v in starts {
                match self.polish(x, v) {
                    Some((v, res, jac)) => found.push(self.make_found(v, res, jac)),
                    None => coverage.rejected += 1,
                }
            }
        }
        found.retain(|f| f.length < t);
        found.sort_by(|a, b| a.length.total_cmp(&b.length));
        let radius = self.opts.dedupe.unwrap_or(if self.opts.polish {
            1e-4 * t
        } else {
            0.25 * self.table.dsigma
        });
        let mut unique: Vec<FoundGeodesic> = Vec::new();
        for f in found {
            let dup = unique.iter().any(|u| {
                let d: Vec<f64> = (0..n).map(|k| u.v[k] - f.v[k]).collect();
                g_dot(&self.table.g_p, n, &d, &d).sqrt() < radius
            });
            if !dup {
                unique.push(f);
            }
        }
        if self.opts.polish {
            let vtol = self.opts.ode_tol / 100.0;
            let before = unique.len();
            unique.retain_mut(
                |f| match exp_map_tol(self.metric(), &self.table.p, &f.v, vtol) {
                    Ok(end) => {
                        let r = self.residual_norm(x, &end);
                        f.verified_residual = Some(r);
                        r <= self.opts.root_tol
                    }
                    Err(_) => false,
                },
            );
            coverage.rejected += before - unique.len();
        }
        let regular = unique
            .iter()
            .all(|f| f.jacobian >= self.opts.regular_threshold);
        Ok(CountResult {
            count: unique.len(),
            found: unique,
            regular,
            coverage,
        })
    }

    fn make_found(&self, v: Vec<f64>, residual: f64, jacobian: f64) -> FoundGeodesic {
        let n = self.table.n;
        let length = g_dot(&self.table.g_p, n, &v, &v).sqrt();
        FoundGeodesic {
            v,
            length,
            residual,
            verified_residual: None,
            jacobian,
        }
    }
}

/// `n(p, T, x)` for a single query.
pub fn count_geodesics(m: &Metric, q: &CountQuery) -> Result<CountResult> {
    let counter = GeodesicCounter::new(m, &q.p, q.t, q.solver.clone(), q.seed)?;
    counter.count(&q.x, q.t)
}

/// Geodesics between points at distance `d` on a round sphere of radius `r`
/// with length at most `T`: lengths `2πrk + d` (`k ≥ 0`) and `2πrk − d` (`k ≥ 1`).
pub fn sphere_count_oracle(d: f64, t: f64, r: f64) -> Result<usize> {
    if !(r > 0.0) || !(d > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sphere oracle needs d, r > 0 and T ≥ 0, got d = {d}, T = {t}, r = {r}"
        )));
    }
    if d >= PI * r * (1.0 - 1e-12) {
        return Err(Error::Antipodal);
    }
    let c = 2.0 * PI * r;
    let mut count = 0;
    let mut k = 0usize;
    while c * k as f64 + d <= t {
        count += 1;
        k += 1;
    }
    let mut k = 1usize;
    while c * k as f64 - d <= t {
        count += 1;
        k += 1;
    }
    Ok(count)
}

#[derive(Debug, Clone)]
pub struct AreaOptions {
    pub solver: SolverOptions,
    /// Riemannian volume of `M`; estimated from the sampler when absent.
    pub volume: Option<f64>,
    /// Chart box for sampling; the metric domain when absent.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Directions of the product quadrature (per great circle).
    pub quad_directions: usize,
    pub quad_order: usize,
    pub quad_panel: f64,
}

impl Default for AreaOptions {
    fn default() -> Self {
        AreaOptions {
            solver: SolverOptions {
                polish: false,
                directions: 512,
                ..Default::default()
            },
            volume: None,
            bounds: None,
            quad_directions: 16,
            quad_order: 12,
            quad_panel: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaReport {
    pub t: f64,
    pub samples: usize,
    pub proposals: usize,
    pub volume: f64,
    pub mc_estimate: f64,
    pub mc_stderr: f64,
    pub jacobian_integral: f64,
    pub quad_error: f64,
    pub discrepancy: f64,
    /// Samples flagged irregular by the counter.
    pub irregular: usize,
    /// Conjugate points used as quadrature breakpoints (first direction).
    pub breakpoints: Vec<f64>,
}

impl AreaReport {
    /// `|discrepancy|` over the combined uncertainty `√(stderr² + quad_error²)`.
    pub fn discrepancy_in_stderr(&self) -> f64 {
        let u = self.mc_stderr.hypot(self.quad_error);
        if u > 0.0 {
            self.discrepancy.abs() / u
        } else if self.discrepancy == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianIntegral {
    pub value: f64,
    /// Largest change under a lower Gauss–Legendre order or half the
    /// directions on the same Jacobi frames, plus `ode_tol·|value|` for the
    /// propagation itself.
    pub error: f64,
    /// Conjugate points used as panel breaks on the first direction.
    pub breakpoints: Vec<f64>,
}

/// `∫₀^T ∫_{S^{n−1}} |Jac exp_p| σ^{n−1} dθ dσ` with `|Jac exp_p| σ^{n−1} = |det H_N|`,
/// by a product rule: trapezoid (and Gauss–Legendre in the polar angle for
/// `n = 3`) over directions, Gauss–Legendre panels split at conjugate points
/// along each ray.
pub fn jacobian_integral(
    m: &Metric,
    p: &[f64],
    t: f64,
    opts: &AreaOptions,
) -> Result<JacobianIntegral> {
    let n = m.dim();
    let g = m.g(p)?;
    let basis = orthonormal_basis(&g, n);
    // (direction, weight, index along the periodic angle)
    let mut dirs: Vec<(Vec<f64>, f64, usize)> = Vec::new();
    let q = opts.quad_directions.max(4) / 2 * 2;
    match n {
        2 => {
            for j in 0..q {
                let th = 2.0 * PI * (j as f64 + 0.5) / q as f64;
                let u = (0..2)
                    .map(|i| th.cos() * basis[0][i] + th.sin() * basis[1][i])
                    .collect();
                dirs.push((u, 2.0 * PI / q as f64, j));
            }
        }
        3 => {
            let (zs, ws) = gauss_legendre(q / 2);
            for (z, wz) in zs.iter().zip(&ws) {
                let r = (1.0 - z * z).sqrt();
                for j in 0..q {
                    let ph = 2.0 * PI * (j as f64 + 0.5) / q as f64;
                    let c = [r * ph.cos(), r * ph.sin(), *z];
                    let u = (0..3)
                        .map(|i| (0..3).map(|a| c[a] * basis[a][i]).sum())
                        .collect();
                    dirs.push((u, wz * 2.0 * PI / q as f64, j));
                }
            }
        }
        _ => {
            return Err(Error::UnsupportedSpace(format!(
                "direction quadrature for n = {n}"
            )))
        }
    }
    if t == 0.0 {
        return Ok(JacobianIntegral {
            value: 0.0,
            error: 0.0,
            breakpoints: Vec::new(),
        });
    }
    let rules = [
        gauss_legendre(opts.quad_order),
        gauss_legendre(opts.quad_order.saturating_sub(4).max(2)),
    ];
    let (mut total, mut coarse, mut half) = (0.0, 0.0, 0.0);
    let mut first_breaks = None;
    for (u, wdir, j) in dirs {
        let jf = propagate_jacobi_grid(
            m,
            p,
            &u,
            None,
            t,
            &uniform_grid(t, 0.05_f64.min(t)),
            opts.solver.ode_tol,
        )?;
        let breaks: Vec<f64> = conjugate_points(&jf, 0.0, t)?
            .into_iter()
            .map(|c| c.sigma)
            .collect();
        let mut ray = [0.0; 2];
        for (a, b) in panels(0.0, t, &breaks, opts.quad_panel) {
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            for (r, (xg, wg)) in ray.iter_mut().zip(&rules) {
                for (xi, wi) in xg.iter().zip(wg) {
                    let s = jf.at(c + h * xi)?;
                    *r += wi
                        * h
                        * gram_from(&s, GramMode::Normal)
                            .determinant()
                            .max(0.0)
                            .sqrt();
                }
            }
        }
        if first_breaks.is_none() {
            first_breaks = Some(breaks);
        }
        total += wdir * ray[0];
        coarse += wdir * ray[1];
        if j % 2 == 0 {
            half += 2.0 * wdir * ray[0];
        }
    }
    let error =
        (total - coarse).abs().max((total - half).abs()) + opts.solver.ode_tol * total.abs();
    Ok(JacobianIntegral {
        value: total,
        error,
        breakpoints: first_breaks.unwrap_or_default(),
    })
}

/// Monte Carlo estimate of `∫_M n(p, T, x) dμ(x)` against the Jacobian integral.
pub fn integrate_counts(
    m: &Metric,
    p: &[f64],
    t: f64,
    samples: usize,
    seed_root: u64,
    opts: &AreaOptions,
) -> Result<AreaReport> {
    if !(t > 0.0) || samples == 0 {
        return Err(Error::InvalidParameter(format!(
            "need T > 0 and samples > 0, got T = {t}, N = {samples}"
        )));
    }
    let n = m.dim();
    let quad = jacobian_integral(m, p, t, opts)?;
    let counter = GeodesicCounter::new(m, p, t, opts.solver.clone(), seed_root)?;
    let bx = sampling_box(m, opts.bounds.as_deref());
    let box_vol: f64 = bx.iter().map(|(a, b)| b - a).product();
    let density = |x: &[f64]| -> f64 {
        m.g(x)
            .map(|g| {
                DMatrix::from_row_slice(n, n, &g)
                    .determinant()
                    .max(0.0)
                    .sqrt()
            })
            .unwrap_or(0.0)
    };
    let mut rng = seed::stream(seed_root, "area/density-bound");
    let mut bound = 0.0f64;
    for _ in 0..4096 {
        let x: Vec<f64> = bx
            .iter()
            .map(|(a, b)| a + (b - a) * rng.random::<f64>())
            .collect();
        bound = bound.max(density(&x));
    }
    bound *= 1.05;
    if !(bound > 0.0) {
        return Err(Error::InvalidParameter(
            "volume density vanishes on the sampling box".into(),
        ));
    }
    let mut rng = seed::stream(seed_root, "area/samples");
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut proposals = 0usize;
    let mut irregular = 0usize;
    let mut accepted = 0usize;
    while accepted < samples {
        proposals += 1;
        let x: Vec<f64> = bx
            .iter()
            .map(|(a, b)| a + (b - a) * rng.random::<f64>())
            .collect();
        let u: f64 = rng.random();
        if u * bound > density(&x) {
            continue;
        }
        accepted += 1;
        let c = counter.count(&x, t)?;
        if !c.regular {
            irregular += 1;
        }
        let k = c.count as f64;
        sum += k;
        sum2 += k * k;
    }
    let volume = opts
        .volume
        .unwrap_or(box_vol * bound * accepted as f64 / proposals as f64);
    let nf = samples as f64;
    let mean = sum / nf;
    let var = if samples > 1 {
        ((sum2 - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    let mc = volume * mean;
    let stderr = volume * (var / nf).sqrt();
    Ok(AreaReport {
        t,
        samples,
        proposals,
        volume,
        mc_estimate: mc,
        mc_stderr: stderr,
        jacobian_integral: quad.value,
        quad_error: quad.error,
        discrepancy: mc - quad.value,
        irregular,
        breakpoints: quad.breakpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::ModelSpace;

    #[test]
    fn oracle_examples() {
        assert_eq!(sphere_count_oracle(PI / 2.0, 5.0 * PI, 1.0).unwrap(), 5);
        assert_eq!(sphere_count_oracle(1.0, 1.0, 1.0).unwrap(), 1);
        assert_eq!(sphere_count_oracle(PI / 2.0, 2.0 * PI, 1.0).unwrap(), 2);
        assert_eq!(sphere_count_oracle(1.0, 0.5, 1.0).unwrap(), 0);
        assert!(matches!(
            sphere_count_oracle(PI, 10.0, 1.0),
            Err(Error::Antipodal)
        ));
    }

    #[test]
    fn sphere_counts_match_oracle() {
        let m = ModelSpace::unit_sphere().metric().unwrap();
        let p = [PI / 2.0, 0.3];
        let counter = GeodesicCounter::new(&m, &p, 5.0 * PI, SolverOptions::default(), 7).unwrap();
        let x = [PI / 2.0, 0.3 + PI / 2.0];
        let r = counter.count(&x, 5.0 * PI).unwrap();
        assert_eq!(
            r.count,
            5,
            "{:?}",
            r.found.iter().map(|f| f.length).collect::<Vec<_>>()
        );
        for (f, l) in r.found.iter().zip([0.5, 1.5, 2.5, 3.5, 4.5]) {
            assert!((f.length - l * PI).abs() < 1e-7);
            assert!(f.verified_residual.unwrap() <= 1e-8);
        }
        assert!(r.regular);
        assert_eq!(counter.count(&x, 1.0).unwrap().count, 0);
        let off = [1.0, 2.0];
        let r = counter.count(&off, 2.0 * PI).unwrap();
        assert_eq!(r.count, 2);
    }

    #[test]
    fn euclidean_unique() {
        let m = ModelSpace::Euclidean { dim: 2 }.metric().unwrap();
        let r = count_geodesics(
            &m,
            &CountQuery {
                p: vec![0.0, 0.0],
                x: vec![0.6, -0.8],
                t: 2.0,
                solver: SolverOptions::default(),
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(r.count, 1);
        assert!((r.found[0].length - 1.0).abs() < 1e-9);
        let m3 = ModelSpace::Euclidean { dim: 3 }.metric().unwrap();
        let opts = SolverOptions {
            directions: 24,
            sigma_step: 0.25,
            ..Default::default()
        };
        let r = count_geodesics(
            &m3,
            &CountQuery {
                p: vec![0.0; 3],
                x: vec![0.3, 0.4, 1.2],
                t: 2.0,
                solver: opts,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(r.count, 1);
        assert!((r.found[0].length - 1.3).abs() < 1e-9);
    }

    #[test]
    fn table_only_matches_polished() {
        let m = ModelSpace::unit_sphere().metric().unwrap();
        let p = [PI / 2.0, 0.0];
        let fast = GeodesicCounter::new(
            &m,
            &p,
            2.0 * PI,
            SolverOptions {
                polish: false,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        let mut rng = seed::stream(3, "test");
        for _ in 0..50 {
            let x = [
                0.3 + 2.5 * rng.random::<f64>(),
                2.0 * PI * rng.random::<f64>(),
            ];
            assert_eq!(fast.count(&x, 2.0 * PI).unwrap().count, 2, "{x:?}");
        }
    }

    #[test]
    fn sphere_jacobian_integral() {
        let m = ModelSpace::unit_sphere().metric().unwrap();
        let q = jacobian_integral(&m, &[PI / 2.0, 0.0], 2.0 * PI, &AreaOptions::default()).unwrap();
        assert!((q.value - 8.0 * PI).abs() < 1e-6, "{q:?}");
        assert!(q.error < 1e-6);
        assert!((q.breakpoints[0] - PI).abs() < 1e-8);
    }
}
