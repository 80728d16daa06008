//! Matrix Jacobi solutions `Ξ`, `H` along a geodesic, expressed in the
//! parallel frame, and the quantities read off from them.
//!
//! Column `j` of `H` is the Jacobi field with `J(0) = 0`, `J'(0) = e_j`;
//! column `j` of `Ξ` has `J(0) = e_j`, `J'(0) = 0`. The last frame vector is
//! `γ̇`, so the last column of `H` is `σ e_n` and the normal block is the
//! up-left `(n−1) × (n−1)` sub-matrix.

pub mod fit;
pub mod riccati;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geodesic::ode::{GbsOptions, Solution};
use crate::geodesic::{
    complete_frame, run_flow, FlowLayout, FlowSystem, GeodesicTrajectory, JacobiBlocks,
};
use crate::metric::Metric;

pub use riccati::{
    compute_riccati, determinant_identity_defect, f_tilde_poles, pole_mass, schwarzian_curvature,
    schwarzian_curvature_adaptive, PoleMass, RiccatiMatrix, SchwarzianOptions, SchwarzianReport,
};

#[derive(Debug, Clone)]
pub struct JacobiSample {
    pub sigma: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub frame: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub dxi: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub dh: DMatrix<f64>,
}

impl JacobiSample {
    fn from_state(lay: &FlowLayout, sigma: f64, y: &[f64]) -> Self {
        let n = lay.n;
        let nn = n * n;
        let mat = |o: usize| DMatrix::from_row_slice(n, n, &y[o..o + nn]);
        let xo = lay.xi().expect("frame carries both blocks");
        let ho = lay.h().expect("frame carries both blocks");
        JacobiSample {
            sigma,
            x: y[..n].to_vec(),
            v: y[n..2 * n].to_vec(),
            frame: mat(lay.e()),
            xi: mat(xo),
            dxi: mat(xo + nn),
            h: mat(ho),
            dh: mat(ho + nn),
        }
    }

    /// Normal block of `H`.
    pub fn h_normal(&self) -> DMatrix<f64> {
        let k = self.h.nrows() - 1;
        self.h.view((0, 0), (k, k)).into_owned()
    }

    pub fn dh_normal(&self) -> DMatrix<f64> {
        let k = self.h.nrows() - 1;
        self.dh.view((0, 0), (k, k)).into_owned()
    }

    pub fn xi_normal(&self) -> DMatrix<f64> {
        let k = self.xi.nrows() - 1;
        self.xi.view((0, 0), (k, k)).into_owned()
    }
}

/// Sampled `Ξ, Ξ', H, H'` along one geodesic, with dense evaluation.
#[derive(Debug, Clone)]
pub struct JacobiFrame {
    pub n: usize,
    pub tol: f64,
    pub length: f64,
    pub p: Vec<f64>,
    pub v0: Vec<f64>,
    pub frame0: Vec<f64>,
    pub samples: Vec<JacobiSample>,
    metric: Metric,
    solution: Solution,
}

impl JacobiFrame {
    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.sigma).collect()
    }

    /// Sample at `sigma`: the stored one if `sigma` is a sample abscissa,
    /// otherwise a dense re-integration from the nearest node.
    pub fn at(&self, sigma: f64) -> Result<JacobiSample> {
        if !(sigma >= -1e-12 && sigma <= self.length * (1.0 + 1e-14) + 1e-14) {
            return Err(Error::OutOfRange {
                sigma,
                lo: 0.0,
                hi: self.length,
            });
        }
        let i = self.samples.partition_point(|s| s.sigma < sigma);
        for j in [i.saturating_sub(1), i] {
            if let Some(s) = self.samples.get(j) {
                if (s.sigma - sigma).abs() <= 1e-13 * (1.0 + sigma.abs()) {
                    return Ok(s.clone());
                }
            }
        }
        let sys = FlowSystem::new(&self.metric, true, JacobiBlocks::Both);
        let y = self.solution.eval(&sys, sigma.clamp(0.0, self.length))?;
        Ok(JacobiSample::from_state(&sys.layout, sigma, &y))
    }
}

/// Propagates both Jacobi blocks jointly with the geodesic and frame of
/// `traj`, sampled at the trajectory's sample abscissae.
pub fn propagate_jacobi(m: &Metric, traj: &GeodesicTrajectory, tol: f64) -> Result<JacobiFrame> {
    let grid: Vec<f64> = traj.samples.iter().map(|s| s.sigma).collect();
    propagate_jacobi_grid(
        m,
        &traj.p,
        &traj.v0,
        Some(&traj.frame0),
        traj.length,
        &grid,
        tol,
    )
}

/// Propagates from `(p, v)` over `[0, length]`, sampled at `grid`. Without
/// an explicit frame one is completed from the coordinate axes.
pub fn propagate_jacobi_grid(
    m: &Metric,
    p: &[f64],
    v: &[f64],
    frame0: Option<&[f64]>,
    length: f64,
    grid: &[f64],
    tol: f64,
) -> Result<JacobiFrame> {
    let e0 = match frame0 {
        Some(e) => e.to_vec(),
        None => complete_frame(m, p, v)?,
    };
    let opts = GbsOptions::with_tol(tol);
    let sol = run_flow(m, p, v, Some(&e0), JacobiBlocks::Both, length, grid, &opts)?;
    let lay = FlowLayout::new(m.dim(), true, JacobiBlocks::Both);
    let samples = (0..sol.out_t.len())
        .map(|i| JacobiSample::from_state(&lay, sol.out_t[i], sol.output(i)))
        .collect();
    Ok(JacobiFrame {
        n: m.dim(),
        tol,
        length,
        p: p.to_vec(),
        v0: v.to_vec(),
        frame0: e0,
        samples,
        metric: m.clone(),
        solution: sol,
    })
}

/// Uniform grid `0, step, 2·step, …` up to and including `length`.
pub fn uniform_grid(length: f64, step: f64) -> Vec<f64> {
    let k = (length / step).round() as usize;
    let mut g: Vec<f64> = (0..=k)
        .map(|i| i as f64 * step)
        .filter(|s| *s <= length)
        .collect();
    if (g.last().copied().unwrap_or(0.0) - length).abs() > 1e-12 {
        g.push(length);
    } else if let Some(last) = g.last_mut() {
        *last = length;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramMode {
    /// `(⟨J_i, J_j⟩)` for the normal fields `1 ≤ i, j ≤ n−1`.
    Normal,
    /// All `n` fields including `J_n = σ e_n`; `√det / σ` recovers the
    /// normal Jacobian (see [`exp_jacobian_full`]).
    Full,
}

pub fn gram_from(s: &JacobiSample, mode: GramMode) -> DMatrix<f64> {
    let h = match mode {
        GramMode::Normal => s.h.columns(0, s.h.ncols() - 1).into_owned(),
        GramMode::Full => s.h.clone(),
    };
    let g = h.transpose() * &h;
    (&g + g.transpose()) * 0.5
}

pub fn gram_matrix(jf: &JacobiFrame, sigma: f64, mode: GramMode) -> Result<DMatrix<f64>> {
    Ok(gram_from(&jf.at(sigma)?, mode))
}

fn checked_sqrt_det(det: f64) -> Result<f64> {
    if det < -1e-12 {
        return Err(Error::NegativeDeterminant { det });
    }
    Ok(det.max(0.0).sqrt())
}

/// `|Jac exp_p|` at `(σ, θ)`: square root of the normal Gram determinant.
pub fn exp_jacobian(jf: &JacobiFrame, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exp_jacobian needs σ > 0, got {sigma}"
        )));
    }
    checked_sqrt_det(gram_matrix(jf, sigma, GramMode::Normal)?.determinant())
}

/// Same quantity from the full Gram matrix: `√det(full) / σ`.
pub fn exp_jacobian_full(jf: &JacobiFrame, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exp_jacobian needs σ > 0, got {sigma}"
        )));
    }
    Ok(checked_sqrt_det(gram_matrix(jf, sigma, GramMode::Full)?.determinant())? / sigma)
}

pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WronskianDefects {
    /// `‖Ξᵀ H' − Ξ'ᵀ H − id‖`
    pub d1: f64,
    /// `‖Hᵀ H' − H'ᵀ H‖`
    pub d2: f64,
    /// `‖Ξᵀ Ξ' − Ξ'ᵀ Ξ‖`
    pub d3: f64,
}

impl WronskianDefects {
    pub fn max(&self) -> f64 {
        self.d1.max(self.d2).max(self.d3)
    }
}

pub fn wronskian_from(s: &JacobiSample) -> WronskianDefects {
    let n = s.h.nrows();
    let w1 = s.xi.transpose() * &s.dh - s.dxi.transpose() * &s.h - DMatrix::<f64>::identity(n, n);
    let w2 = s.h.transpose() * &s.dh - s.dh.transpose() * &s.h;
    let w3 = s.xi.transpose() * &s.dxi - s.dxi.transpose() * &s.xi;
    WronskianDefects {
        d1: op_norm(&w1),
        d2: op_norm(&w2),
        d3: op_norm(&w3),
    }
}

pub fn wronskian_defects(jf: &JacobiFrame, sigma: f64) -> Result<WronskianDefects> {
    Ok(wronskian_from(&jf.at(sigma)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugatePoint {
    pub sigma: f64,
    pub multiplicity: usize,
    /// Located through a sign change of `det H_N` (otherwise through a
    /// minimum of the relative smallest singular value).
    pub sign_change: bool,
}

fn normal_det(s: &JacobiSample) -> f64 {
    s.h_normal().determinant()
}

/// Relative smallest singular value of `H_N`.
fn normal_rho(s: &JacobiSample) -> f64 {
    let hn = s.h_normal();
    if hn.is_empty() {
        return f64::INFINITY;
    }
    let sv = hn.clone().singular_values();
    let scale = sv.max().max(op_norm(&s.dh_normal())).max(f64::MIN_POSITIVE);
    sv.min() / scale
}

fn multiplicity(s: &JacobiSample) -> usize {
    let hn = s.h_normal();
    let scale = op_norm(&hn).max(op_norm(&s.dh_normal())).max(1e-300);
    hn.singular_values()
        .iter()
        .filter(|v| **v <= 1e-6 * scale)
        .count()
}

/// Conjugate points in `(lo, hi]`: zeros of `det H_N` from sign changes on
/// the sample grid refined by bisection, plus rank drops without a sign
/// change (even multiplicity) found as minima of the relative smallest
/// singular value and refined by golden-section search.
pub fn conjugate_points(jf: &JacobiFrame, lo: f64, hi: f64) -> Result<Vec<ConjugatePoint>> {
    if jf.n < 2 {
        return Ok(Vec::new());
    }
    let floor = lo.max(1e-9);
    let idx: Vec<usize> = (0..jf.samples.len())
        .filter(|&i| jf.samples[i].sigma > floor && jf.samples[i].sigma <= hi)
        .collect();
    let mut found: Vec<ConjugatePoint> = Vec::new();
    if idx.len() < 2 {
        return Ok(found);
    }
    let dets: Vec<f64> = idx.iter().map(|&i| normal_det(&jf.samples[i])).collect();
    let rhos: Vec<f64> = idx.iter().map(|&i| normal_rho(&jf.samples[i])).collect();
    let sig: Vec<f64> = idx.iter().map(|&i| jf.samples[i].sigma).collect();

    for w in 0..sig.len() - 1 {
        let (da, db) = (dets[w], dets[w + 1]);
        if da == 0.0 {
            found.push(ConjugatePoint {
                sigma: sig[w],
                multiplicity: multiplicity(&jf.samples[idx[w]]),
                sign_change: true,
            });
            continue;
        }
        if da * db < 0.0 {
            let (mut a, mut b) = (sig[w], sig[w + 1]);
            let mut fa = da;
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if b - a <= 1e-13 * (1.0 + mid.abs()) {
                    break;
                }
                let fm = normal_det(&jf.at(mid)?);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fm * fa < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            let s = 0.5 * (a + b);
            found.push(ConjugatePoint {
                sigma: s,
                multiplicity: multiplicity(&jf.at(s)?).max(1),
                sign_change: true,
            });
        }
    }

    let step = sig.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    for w in 1..sig.len() - 1 {
        if !(rhos[w] <= rhos[w - 1] && rhos[w] <= rhos[w + 1] && rhos[w] < 2.0 * step) {
            continue;
        }
        if found.iter().any(|c| (c.sigma - sig[w]).abs() <= 1.5 * step) {
            continue;
        }
        let rho_at = |s: f64| -> Result<f64> { Ok(normal_rho(&jf.at(s)?)) };
        let (mut a, mut b) = (sig[w - 1], sig[w + 1]);
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - gr * (b - a);
        let mut d = a + gr * (b - a);
        let (mut fc, mut fd) = (rho_at(c)?, rho_at(d)?);
        while b - a > 1e-11 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = rho_at(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = rho_at(d)?;
            }
        }
        let s = 0.5 * (a + b);
        let sample = jf.at(s)?;
        if normal_rho(&sample) <= 1e-6 {
            found.push(ConjugatePoint {
                sigma: s,
                multiplicity: multiplicity(&sample).max(1),
                sign_change: false,
            });
        }
    }
    found.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
    found.dedup_by(|a, b| (a.sigma - b.sigma).abs() < 1e-6);
    Ok(found)
}

/// Cartan matrix `C(A) = A' A⁻¹`.
pub fn cartan_matrix(a: &DMatrix<f64>, a_prime: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = a.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !(cond < 1e12) {
        return Err(Error::Conditioning { cond });
    }
    let inv = a
        .clone()
        .try_inverse()
        .ok_or(Error::Conditioning { cond })?;
    Ok(a_prime * inv)
}

/// Cartan matrix of a sampled family, with `A(σ)` and `A'(σ)` from a local
/// least-squares quartic through the seven samples nearest to `sigma`.
pub fn cartan_matrix_sampled(
    sigmas: &[f64],
    mats: &[DMatrix<f64>],
    sigma: f64,
) -> Result<DMatrix<f64>> {
    let m = sigmas.len();
    if m < 5 || mats.len() != m {
        return Err(Error::InvalidParameter("need at least five samples".into()));
    }
    let (lo, hi) = (sigmas[0], sigmas[m - 1]);
    if sigma < lo || sigma > hi {
        return Err(Error::OutOfRange { sigma, lo, hi });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        (sigmas[a] - sigma)
            .abs()
            .total_cmp(&(sigmas[b] - sigma).abs())
    });
    let pick: Vec<usize> = order.into_iter().take(7.min(m)).collect();
    let deg = 4.min(pick.len() - 1);
    let scale = pick
        .iter()
        .map(|&i| (sigmas[i] - sigma).abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut v = DMatrix::<f64>::zeros(pick.len(), deg + 1);
    for (r, &i) in pick.iter().enumerate() {
        let s = (sigmas[i] - sigma) / scale;
        for p in 0..=deg {
            v[(r, p)] = s.powi(p as i32);
        }
    }
    let pinv = v
        .pseudo_inverse(1e-14)
        .map_err(|e| Error::InvalidParameter(e.into()))?;
    let (rows, cols) = mats[0].shape();
    let mut a0 = DMatrix::zeros(rows, cols);
    let mut a1 = DMatrix::zeros(rows, cols);
    for (r, &i) in pick.iter().enumerate() {
        a0 += &mats[i] * pinv[(0, r)];
        a1 += &mats[i] * (pinv[(1, r)] / scale);
    }
    cartan_matrix(&a0, &a1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::ModelSpace;
    use std::f64::consts::PI;

    fn sphere_frame(length: f64) -> JacobiFrame {
        let m = ModelSpace::unit_sphere().metric().unwrap();
        let grid = uniform_grid(length, 0.05);
        propagate_jacobi_grid(
            &m,
            &[PI / 2.0, 0.0],
            &[0.0, 1.0],
            None,
            length,
            &grid,
            1e-12,
        )
        .unwrap()
    }

    #[test]
    fn sphere_closed_forms() {
        let jf = sphere_frame(10.0);
        for s in &jf.samples {
            assert!((s.h[(0, 0)] - s.sigma.sin()).abs() < 1e-9);
            assert!((s.xi[(0, 0)] - s.sigma.cos()).abs() < 1e-9);
            assert!((s.h[(1, 1)] - s.sigma).abs() < 1e-9);
            assert!(s.h[(0, 1)].abs() < 1e-9 && s.h[(1, 0)].abs() < 1e-9);
        }
        let g = gram_matrix(&jf, PI / 2.0, GramMode::Normal).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((exp_jacobian(&jf, PI / 2.0).unwrap() - 1.0).abs() < 1e-9);
        assert!(exp_jacobian(&jf, PI).unwrap() < 1e-7);
        assert!((exp_jacobian_full(&jf, 1.3).unwrap() - 1.3f64.sin()).abs() < 1e-9);
        let d = wronskian_defects(&jf, 10.0).unwrap();
        assert!(d.max() < 1e-8, "{d:?}");
    }

    #[test]
    fn sphere_conjugate_points() {
        let jf = sphere_frame(10.0);
        let cps = conjugate_points(&jf, 0.0, 10.0).unwrap();
        assert_eq!(cps.len(), 3);
        for (k, c) in cps.iter().enumerate() {
            assert!((c.sigma - (k + 1) as f64 * PI).abs() < 1e-8, "{c:?}");
            assert_eq!(c.multiplicity, 1);
        }
    }

    #[test]
    fn even_multiplicity_is_found() {
        let m = ModelSpace::RoundSphere {
            radius: 1.0,
            dim: 3,
        }
        .metric()
        .unwrap();
        let grid = uniform_grid(4.0, 0.05);
        let jf = propagate_jacobi_grid(
            &m,
            &[PI / 2.0, PI / 2.0, 0.0],
            &[0.0, 0.0, 1.0],
            None,
            4.0,
            &grid,
            1e-12,
        )
        .unwrap();
        let cps = conjugate_points(&jf, 0.0, 4.0).unwrap();
        assert_eq!(cps.len(), 1);
        assert!((cps[0].sigma - PI).abs() < 1e-7);
        assert_eq!(cps[0].multiplicity, 2);
        assert!(!cps[0].sign_change);
    }

    #[test]
    fn cartan_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        let c = cartan_matrix(&(&id * 2.0), &id).unwrap();
        assert!((c[(0, 0)] - 0.5).abs() < 1e-15);
        let sig: Vec<f64> = (0..21).map(|i| 0.5 + i as f64 * 0.05).collect();
        let mats: Vec<_> = sig.iter().map(|s| &id * s.exp()).collect();
        let c = cartan_matrix_sampled(&sig, &mats, 1.0).unwrap();
        assert!((c[(0, 0)] - 1.0).abs() < 1e-5 && c[(0, 1)].abs() < 1e-9);
        let mats: Vec<_> = sig.iter().map(|s| &id * *s).collect();
        let c = cartan_matrix_sampled(&sig, &mats, 1.0).unwrap();
        assert!((c[(1, 1)] - 1.0).abs() < 1e-9);
        let jf = sphere_frame(2.0);
        let s = jf.at(1.0).unwrap();
        let c = cartan_matrix(&s.h_normal(), &s.dh_normal()).unwrap();
        assert!((c[(0, 0)] - 1f64.cos() / 1f64.sin()).abs() < 1e-9);
        assert!(cartan_matrix(&DMatrix::zeros(2, 2), &id).is_err());
    }

    #[test]
    fn dense_matches_samples() {
        let jf = sphere_frame(3.0);
        let a = jf.at(1.2345).unwrap();
        assert!((a.h[(0, 0)] - 1.2345f64.sin()).abs() < 1e-10);
        assert!(matches!(jf.at(3.5), Err(Error::OutOfRange { .. })));
    }
}
