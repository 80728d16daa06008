//! Comparison bounds for a manifold admitting a tube of radius `R`: the sinh
//! kernel, the Jacobian bound, the Riccati lower bound and the Betti-sum
//! integrals.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::jacobi::riccati::RiccatiMatrix;
use crate::jacobi::{gram_from, GramMode, JacobiFrame};
use crate::metric::models::{sphere_area, unit_ball_volume};
use crate::metric::SectionalEstimate;
use crate::quadrature::{integrate_adaptive, QuadOptions};

/// Tube radius `R` (possibly infinite), dimension, and `a = π/(2R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeParams {
    pub radius: f64,
    pub n: usize,
    pub a: f64,
}

impl TubeParams {
    pub fn new(radius: f64, n: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tube radius must be positive, got {radius}"
            )));
        }
        if n < 1 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        let a = if radius.is_infinite() {
            0.0
        } else {
            PI / (2.0 * radius)
        };
        Ok(TubeParams { radius, n, a })
    }

    /// Curvature lower bound `−π²/(4R²) = −a²` equivalent to the radius.
    pub fn curvature_floor(&self) -> f64 {
        -self.a * self.a
    }
}

fn sinh_over_a(sigma: f64, a: f64) -> f64 {
    if a == 0.0 {
        sigma
    } else {
        (a * sigma).sinh() / a
    }
}

/// `(sinh(aσ)/a)^(n−1)`, with the limit `σ^(n−1)` at `a = 0`.
pub fn sinh_kernel(sigma: f64, tp: &TubeParams) -> f64 {
    sinh_over_a(sigma, tp.a).powi(tp.n as i32 - 1)
}

/// `(R²/π²)^m (e^{σπ/R} + e^{−σπ/R} − 2)^m`, evaluated without cancellation
/// as `(R/π)^{2m} (e^{x/2} − e^{−x/2})^{2m}` with `x = σπ/R`.
pub fn jacobian_bound_rhs(sigma: f64, tp: &TubeParams, m: usize) -> f64 {
    if tp.radius.is_infinite() {
        return sigma.powi(2 * m as i32);
    }
    let x = sigma * PI / tp.radius;
    let d = (0.5 * x).exp_m1() - (-0.5 * x).exp_m1();
    ((tp.radius / PI) * d).powi(2 * m as i32)
}

/// `(π²/R²)·t/(t−1)²` with `t = e^{πσ/R}`; `1/σ²` for `R = ∞`.
pub fn riccati_lower_bound(sigma: f64, tp: &TubeParams) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "riccati bound needs σ > 0, got {sigma}"
        )));
    }
    if tp.radius.is_infinite() {
        return Ok(1.0 / (sigma * sigma));
    }
    let x = sigma * PI / tp.radius;
    // t/(t−1)² = 1/(e^{x/2} − e^{−x/2})²
    let d = (0.5 * x).exp_m1() - (-0.5 * x).exp_m1();
    Ok((PI / tp.radius).powi(2) / (d * d))
}

/// Which Gram determinant is compared: the normal `(n−1)`-block against
/// exponent `n−1`, or the full `n × n` matrix against exponent `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    Normal,
    Full,
}

#[derive(Debug, Clone)]
pub struct BoundOptions {
    pub exponent: Exponent,
    /// Relative slack: a violation is `lhs − rhs > tol·max(1, rhs)`.
    pub tol: f64,
    /// Curvature sample for the metric, if one was taken.
    pub sectional: Option<SectionalEstimate>,
    /// Whether a tube of the given radius is known to exist.
    pub certified: bool,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            exponent: Exponent::Normal,
            tol: 1e-7,
            sectional: None,
            certified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRecord {
    pub sigma: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub masked: bool,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub params: TubeParams,
    pub exponent: Exponent,
    pub tol: f64,
    pub records: Vec<BoundRecord>,
    pub violations: usize,
    /// Largest `|lhs − rhs| / max(1, rhs)` over the records.
    pub max_relative_gap: f64,
    /// No tube certified; only curvature information backs the check.
    pub conjecture_mode: bool,
    /// `Some(false)` when sampled sectional curvature falls below `−π²/(4R²)`.
    pub curvature_ok: Option<bool>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Compares `det(Gram)` (equal to `1/det(−f̃')` on the chosen block) with
/// [`jacobian_bound_rhs`] at every frame sample.
pub fn verify_pointwise_bound(
    jf: &JacobiFrame,
    rm: &RiccatiMatrix,
    tp: &TubeParams,
    opts: &BoundOptions,
) -> BoundReport {
    let (mode, m) = match opts.exponent {
        Exponent::Normal => (GramMode::Normal, tp.n - 1),
        Exponent::Full => (GramMode::Full, tp.n),
    };
    let mut records = Vec::with_capacity(jf.samples.len());
    let mut violations = 0;
    let mut gap = 0.0f64;
    for (i, s) in jf.samples.iter().enumerate() {
        let lhs = gram_from(s, mode).determinant();
        let rhs = jacobian_bound_rhs(s.sigma, tp, m);
        let scale = rhs.max(1.0);
        if lhs - rhs > opts.tol * scale {
            violations += 1;
        }
        gap = gap.max((lhs - rhs).abs() / scale);
        records.push(BoundRecord {
            sigma: s.sigma,
            lhs,
            rhs,
            margin: rhs - lhs,
            masked: rm.masked.get(i).copied().unwrap_or(false),
        });
    }
    let floor = tp.curvature_floor();
    let curvature_ok = opts
        .sectional
        .as_ref()
        .map(|e| e.min >= floor - 1e-9 * (1.0 + floor.abs()));
    BoundReport {
        params: *tp,
        exponent: opts.exponent,
        tol: opts.tol,
        records,
        violations,
        max_relative_gap: gap,
        conjecture_mode: !opts.certified,
        curvature_ok,
    }
}

fn check_betti_args(k: usize, c: f64, vol: f64) -> Result<()> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if !(c > 0.0) || !(vol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "C and Vol(M) must be positive, got C = {c}, vol = {vol}"
        )));
    }
    Ok(())
}

/// `ω_{n−1}/Vol(M) ∫₀^{Ck} (sinh(aσ)/a)^{n−1} dσ` by adaptive quadrature.
pub fn betti_bound(k: usize, c: f64, tp: &TubeParams, vol: f64) -> Result<f64> {
    check_betti_args(k, c, vol)?;
    let upper = c * k as f64;
    let q = integrate_adaptive(|s| sinh_kernel(s, tp), 0.0, upper, &QuadOptions::default())?;
    Ok(sphere_area(tp.n - 1) * q.value / vol)
}

/// Closed form of [`betti_bound`] for surfaces: `ω₁(cosh(aCk) − 1)/(a² Vol(M))`.
pub fn betti_bound_surface(k: usize, c: f64, tp: &TubeParams, vol: f64) -> Result<f64> {
    check_betti_args(k, c, vol)?;
    if tp.n != 2 {
        return Err(Error::InvalidParameter("closed form needs n = 2".into()));
    }
    let l = c * k as f64;
    let integral = if tp.a == 0.0 {
        0.5 * l * l
    } else {
        // cosh(x) − 1 = 2 sinh²(x/2)
        2.0 * (0.5 * tp.a * l).sinh().powi(2) / (tp.a * tp.a)
    };
    Ok(2.0 * PI * integral / vol)
}

/// `Vol(Bⁿ(1)) (Ck)ⁿ / Vol(M)`, the `R = ∞` value.
pub fn betti_bound_limit(k: usize, c: f64, n: usize, vol: f64) -> Result<f64> {
    check_betti_args(k, c, vol)?;
    Ok(unit_ball_volume(n) * (c * k as f64).powi(n as i32) / vol)
}

/// Largest tube radius compatible with a sectional curvature lower bound.
pub fn max_tube_radius(k_min: f64) -> Result<f64> {
    if !k_min.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "curvature bound must be finite, got {k_min}"
        )));
    }
    Ok(if k_min < 0.0 {
        PI / (2.0 * (-k_min).sqrt())
    } else {
        f64::INFINITY
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobi::riccati::compute_riccati;
    use crate::jacobi::{propagate_jacobi_grid, uniform_grid};
    use crate::metric::ModelSpace;

    fn tp(r: f64, n: usize) -> TubeParams {
        TubeParams::new(r, n).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(sinh_kernel(2.0, &tp(f64::INFINITY, 3)), 4.0);
        assert!((sinh_kernel(1.0, &tp(PI / 2.0, 2)) - 1f64.sinh()).abs() < 1e-15);
        assert_eq!(sinh_kernel(0.0, &tp(PI / 2.0, 2)), 0.0);
    }

    #[test]
    fn rhs_values() {
        assert!((jacobian_bound_rhs(2.0, &tp(PI / 2.0, 2), 1) - 2f64.sinh().powi(2)).abs() < 1e-12);
        assert_eq!(jacobian_bound_rhs(0.0, &tp(PI / 2.0, 2), 1), 0.0);
        assert_eq!(jacobian_bound_rhs(3.0, &tp(f64::INFINITY, 2), 1), 9.0);
    }

    #[test]
    fn riccati_bound_values() {
        let t = tp(PI / 2.0, 2);
        assert!((riccati_lower_bound(1.0, &t).unwrap() - 1.0 / 1f64.sinh().powi(2)).abs() < 1e-14);
        let s = 1e-6;
        assert!((riccati_lower_bound(s, &t).unwrap() * s * s - 1.0).abs() < 1e-9);
        assert!(riccati_lower_bound(0.0, &t).is_err());
    }

    #[test]
    fn betti_values() {
        let inf = tp(f64::INFINITY, 2);
        assert!((betti_bound(10, 4.0, &inf, 4.0 * PI).unwrap() - 400.0).abs() < 1e-9);
        let half = tp(PI / 2.0, 2);
        let expect = (1f64.cosh() - 1.0) / 2.0;
        assert!((betti_bound(1, 1.0, &half, 4.0 * PI).unwrap() - expect).abs() < 1e-12);
        assert!((betti_bound_surface(1, 1.0, &half, 4.0 * PI).unwrap() - expect).abs() < 1e-15);
        assert!((betti_bound_limit(10, 4.0, 2, 4.0 * PI).unwrap() - 400.0).abs() < 1e-10);
        assert!(betti_bound(0, 1.0, &half, 1.0).is_err());
    }

    #[test]
    fn radius_from_curvature() {
        assert!((max_tube_radius(-1.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!(max_tube_radius(0.0).unwrap().is_infinite());
        assert!((max_tube_radius(-4.0).unwrap() - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn hyperbolic_bound_is_tight() {
        let m = ModelSpace::SpaceForm {
            curvature: -1.0,
            dim: 2,
        }
        .metric()
        .unwrap();
        let jf = propagate_jacobi_grid(
            &m,
            &[0.0, 0.0],
            &[0.5, 0.0],
            None,
            3.0,
            &uniform_grid(3.0, 0.1),
            1e-12,
        )
        .unwrap();
        let rm = compute_riccati(&jf, 0.05).unwrap();
        let rep = verify_pointwise_bound(&jf, &rm, &tp(PI / 2.0, 2), &BoundOptions::default());
        assert!(rep.passed());
        assert!(rep.max_relative_gap < 1e-8, "{}", rep.max_relative_gap);
        assert_eq!(rep.records[0].lhs, 0.0);
    }
}
