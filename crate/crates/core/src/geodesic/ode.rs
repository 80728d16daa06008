//! Gragg–Bulirsch–Stoer extrapolation integrator with step and order control.
//!
//! Each macro step runs the modified midpoint rule with the substep sequence
//! 2, 4, 6, … and extrapolates in `h²` (Aitken–Neville). The difference of
//! the last two diagonal entries is the embedded error estimate; step and
//! row count follow the usual work-per-unit-step heuristics.
//!
//! Output at prescribed abscissae is obtained by clipping macro steps so that
//! they land exactly on the requested points. Evaluation at other points
//! re-integrates from the nearest stored node.

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
    /// Called on every accepted state; may pull the state back onto invariant manifolds.
    fn project(&self, _t: f64, _y: &mut [f64]) {}
}

#[derive(Debug, Clone)]
pub struct GbsOptions {
    /// Mixed absolute/relative tolerance: component scale is `tol·(1 + |y_i|)`.
    pub tol: f64,
    /// First trial step; `0` picks a default.
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Maximum number of extrapolation rows (at most 12).
    pub max_rows: usize,
}

impl Default for GbsOptions {
    fn default() -> Self {
        GbsOptions {
            tol: 1e-10,
            h_init: 0.0,
            h_min: 1e-12,
            h_max: 2.0,
            max_steps: 200_000,
            max_rows: 9,
        }
    }
}

impl GbsOptions {
    pub fn with_tol(tol: f64) -> Self {
        GbsOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Accepted nodes of one integration plus the values at requested outputs.
#[derive(Debug, Clone)]
pub struct Solution {
    pub dim: usize,
    pub t: Vec<f64>,
    /// Node states, flattened with stride `dim`.
    pub y: Vec<f64>,
    pub out_t: Vec<f64>,
    pub out_y: Vec<f64>,
    pub stats: Stats,
    pub opts: GbsOptions,
}

impl Solution {
    pub fn node(&self, i: usize) -> &[f64] {
        &self.y[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.out_y[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.t.len() - 1)
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    fn forward(&self) -> bool {
        self.t_end() >= self.t[0]
    }

    /// State at `t` by re-integrating from the nearest node at or before `t`.
    pub fn eval<S: OdeSystem>(&self, sys: &S, t: f64) -> Result<Vec<f64>> {
        let (lo, hi) = if self.forward() {
            (self.t[0], self.t_end())
        } else {
            (self.t_end(), self.t[0])
        };
        if !(t >= lo - 1e-14 * (1.0 + hi.abs()) && t <= hi + 1e-14 * (1.0 + hi.abs())) {
            return Err(Error::OutOfRange { sigma: t, lo, hi });
        }
        let idx = if self.forward() {
            self.t.partition_point(|&s| s <= t).saturating_sub(1)
        } else {
            self.t.partition_point(|&s| s >= t).saturating_sub(1)
        };
        if self.t[idx] == t {
            return Ok(self.node(idx).to_vec());
        }
        if idx + 1 < self.t.len() && self.t[idx + 1] == t {
            return Ok(self.node(idx + 1).to_vec());
        }
        let opts = GbsOptions {
            h_init: t - self.t[idx],
            ..self.opts.clone()
        };
        let sub = integrate(sys, self.t[idx], self.node(idx), t, &[], &opts)?;
        Ok(sub.last().to_vec())
    }
}

const SAFE1: f64 = 0.65;
const SAFE2: f64 = 0.94;

fn is_chart_failure(e: &Error) -> bool {
    matches!(e, Error::Domain(_) | Error::NotPositiveDefinite { .. })
}

/// Integrates from `(t0, y0)` to `t_end`, landing exactly on each value of
/// `outputs` (which must be ordered in the direction of integration and lie
/// within the span).
pub fn integrate<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    outputs: &[f64],
    opts: &GbsOptions,
) -> Result<Solution> {
    match integrate_partial(sys, t0, y0, t_end, outputs, opts) {
        (sol, None) => Ok(sol),
        (_, Some(e)) => Err(e),
    }
}

fn check_outputs(t0: f64, t_end: f64, outputs: &[f64]) -> Result<()> {
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let (lo, hi) = if dir > 0.0 { (t0, t_end) } else { (t_end, t0) };
    for w in outputs.windows(2) {
        if (w[1] - w[0]) * dir < 0.0 {
            return Err(Error::InvalidParameter(
                "output abscissae must be ordered along the integration".into(),
            ));
        }
    }
    for &s in outputs {
        if s < lo || s > hi {
            return Err(Error::OutOfRange { sigma: s, lo, hi });
        }
    }
    Ok(())
}

/// As [`integrate`], but keeps what was integrated before a failure: the
/// returned solution covers `[t0, sol.t_end()]` and the error (if any) says
/// why integration stopped there.
pub fn integrate_partial<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    outputs: &[f64],
    opts: &GbsOptions,
) -> (Solution, Option<Error>) {
    let n = sys.dim();
    assert_eq!(y0.len(), n, "state dimension mismatch");
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let km = opts.max_rows.clamp(3, 12);
    let nseq: Vec<usize> = (1..=km).map(|j| 2 * j).collect();
    let mut work_a = vec![0.0; km];
    work_a[0] = nseq[0] as f64;
    for j in 1..km {
        work_a[j] = work_a[j - 1] + (nseq[j] - 1) as f64;
    }

    let mut sol = Solution {
        dim: n,
        t: vec![t0],
        y: y0.to_vec(),
        out_t: Vec::with_capacity(outputs.len()),
        out_y: Vec::with_capacity(outputs.len() * n),
        stats: Stats::default(),
        opts: opts.clone(),
    };
    if let Err(e) = check_outputs(t0, t_end, outputs) {
        return (sol, Some(e));
    }
    let mut next_out = 0usize;
    while next_out < outputs.len() && outputs[next_out] == t0 {
        sol.out_t.push(t0);
        sol.out_y.extend_from_slice(y0);
        next_out += 1;
    }
    if t_end == t0 {
        return (sol, None);
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f0 = vec![0.0; n];
    if let Err(e) = sys.rhs(t, &y, &mut f0) {
        return (sol, Some(e));
    }
    sol.stats.evaluations += 1;

    let span = (t_end - t0).abs();
    let mut h = if opts.h_init != 0.0 {
        opts.h_init.abs()
    } else {
        span.min(opts.h_max).min(0.2)
    };
    h = h.min(opts.h_max).max(opts.h_min);
    let mut k = (km / 2).max(2).min(km - 2);
    let mut last_rejected = false;

    // Extrapolation tableau: rows of states.
    let mut table: Vec<Vec<f64>> = vec![vec![0.0; n]; km];
    let mut z0 = vec![0.0; n];
    let mut z1 = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut hopt = vec![0.0; km];
    let mut work = vec![0.0; km];

    loop {
        if sol.stats.accepted + sol.stats.rejected >= opts.max_steps {
            return (sol, Some(Error::StepUnderflow { sigma: t }));
        }
        let remaining = (t_end - t) * dir;
        let target = if next_out < outputs.len() {
            (outputs[next_out] - t) * dir
        } else {
            remaining
        };
        let clipped = h >= target;
        let h_eff = if clipped { target } else { h };
        let hs = h_eff * dir;

        // Rows of the tableau until acceptance or rejection.
        let mut outcome: Option<(bool, usize)> = None;
        let mut chart_fail = false;
        'rows: for j in 0..=(k + 1).min(km - 1) {
            let m = nseq[j];
            let hj = hs / m as f64;
            for i in 0..n {
                z0[i] = y[i];
                z1[i] = y[i] + hj * f0[i];
            }
            for step in 1..m {
                if let Err(e) = sys.rhs(t + step as f64 * hj, &z1, &mut dz) {
                    if is_chart_failure(&e) {
                        chart_fail = true;
                        break 'rows;
                    }
                    return (sol, Some(e));
                }
                sol.stats.evaluations += 1;
                for i in 0..n {
                    let znew = z0[i] + 2.0 * hj * dz[i];
                    z0[i] = z1[i];
                    z1[i] = znew;
                }
            }
            // Aitken–Neville in h², in place: after row j, table[l] = T_{j,l}.
            for i in 0..n {
                let mut cur = z1[i];
                for l in 1..=j {
                    let old = table[l - 1][i];
                    table[l - 1][i] = cur;
                    let ratio = (nseq[j] as f64 / nseq[j - l] as f64).powi(2) - 1.0;
                    cur += (cur - old) / ratio;
                }
                table[j][i] = cur;
            }
            if j == 0 {
                continue;
            }
            let mut err = 0.0;
            for i in 0..n {
                let sc = opts.tol * (1.0 + y[i].abs().max(table[j][i].abs()));
                let d = (table[j][i] - table[j - 1][i]) / sc;
                err += d * d;
            }
            err = (err / n as f64).sqrt();
            if !err.is_finite() {
                chart_fail = true;
                break 'rows;
            }
            let expo = 1.0 / (2 * j + 1) as f64;
            let facinv = ((err / SAFE1).powf(expo) / SAFE2).clamp(0.25, 50.0);
            hopt[j] = h_eff / facinv;
            work[j] = work_a[j] / hopt[j];

            if j + 1 >= k {
                if err <= 1.0 {
                    outcome = Some((true, j));
                    break 'rows;
                }
                let predict = if j + 1 == k {
                    ((nseq[(k + 1).min(km - 1)] * nseq[k]) as f64 / (nseq[0] * nseq[0]) as f64)
                        .powi(2)
                } else if j == k {
                    (nseq[(k + 1).min(km - 1)] as f64 / nseq[0] as f64).powi(2)
                } else {
                    0.0
                };
                if err > predict || j > k || j == km - 1 {
                    outcome = Some((false, j));
                    break 'rows;
                }
            }
        }

        if chart_fail {
            sol.stats.rejected += 1;
            h = h_eff * 0.25;
            last_rejected = true;
            if h < opts.h_min {
                return (sol, Some(Error::ChartExit { sigma: t }));
            }
            continue;
        }

        let (accepted, kc) = outcome.expect("row loop ends with a decision");
        let k_new = if kc <= 1 {
            2.min(km - 2)
        } else if work[kc - 1] < 0.8 * work[kc] && kc > 2 {
            kc - 1
        } else if work[kc] < 0.9 * work[kc - 1] && !last_rejected {
            (kc + 1).min(km - 2)
        } else {
            kc
        };
        let mut h_new = if k_new > kc {
            hopt[kc] * work_a[k_new] / work_a[kc]
        } else {
            hopt[k_new.min(kc)]
        };

        if accepted {
            let mut y_new = table[kc].clone();
            let t_new = if clipped {
                if next_out < outputs.len() {
                    outputs[next_out]
                } else {
                    t_end
                }
            } else {
                t + hs
            };
            sys.project(t_new, &mut y_new);
            if let Err(e) = sys.rhs(t_new, &y_new, &mut f0) {
                if is_chart_failure(&e) {
                    sol.stats.rejected += 1;
                    h = h_eff * 0.25;
                    last_rejected = true;
                    if h < opts.h_min {
                        return (sol, Some(Error::ChartExit { sigma: t_new }));
                    }
                    // Restore f0 at the current state.
                    if let Err(e) = sys.rhs(t, &y, &mut f0) {
                        return (sol, Some(e));
                    }
                    continue;
                }
                return (sol, Some(e));
            }
            sol.stats.evaluations += 1;
            sol.stats.accepted += 1;
            t = t_new;
            y = y_new;
            sol.t.push(t);
            sol.y.extend_from_slice(&y);
            while next_out < outputs.len() && outputs[next_out] == t {
                sol.out_t.push(t);
                sol.out_y.extend_from_slice(&y);
                next_out += 1;
            }
            if last_rejected {
                h_new = h_new.min(h_eff);
            }
            if clipped {
                h_new = h_new.max(h);
            }
            k = k_new.max(2);
            h = h_new.min(opts.h_max);
            last_rejected = false;
            if t == t_end {
                break;
            }
        } else {
            sol.stats.rejected += 1;
            k = k_new.min(kc).max(2);
            h = h_new.min(h_eff);
            last_rejected = true;
            if h < opts.h_min {
                return (sol, Some(Error::StepUnderflow { sigma: t }));
            }
        }
    }
    (sol, None)
}
