//! The Riccati matrix `f = Ξ⁻¹H`, its inverse `f̃ = H⁻¹Ξ`, pole structure,
//! the determinant identity, Schwarzian curvature recovery and pole masses.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::fit::LocalFit;
use super::{
    conjugate_points, gram_from, op_norm, ConjugatePoint, GramMode, JacobiFrame, JacobiSample,
};
use crate::error::{Error, Result};
use crate::metric::jacobi_operator;

const COND_LIMIT: f64 = 1e12;

fn cond(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    sv.max() / sv.min()
}

fn inverse_checked(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = cond(a);
    if !(c < COND_LIMIT) {
        return Err(Error::Conditioning { cond: c });
    }
    a.clone()
        .try_inverse()
        .ok_or(Error::Conditioning { cond: c })
}

fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn block(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    a.view((0, 0), (k, k)).into_owned()
}

pub fn f_of(s: &JacobiSample) -> Result<DMatrix<f64>> {
    Ok(inverse_checked(&s.xi)? * &s.h)
}

pub fn f_tilde_of(s: &JacobiSample) -> Result<DMatrix<f64>> {
    Ok(inverse_checked(&s.h)? * &s.xi)
}

/// `−f̃'` from the Wronskian identity: `(HᵀH)⁻¹`.
pub fn neg_df_tilde_identity(s: &JacobiSample) -> Result<DMatrix<f64>> {
    inverse_checked(&gram_from(s, GramMode::Full))
}

/// `−f̃'` by the product rule: `−H⁻¹(Ξ' − H' f̃)`.
pub fn neg_df_tilde_product(s: &JacobiSample) -> Result<DMatrix<f64>> {
    let hinv = inverse_checked(&s.h)?;
    let ft = &hinv * &s.xi;
    Ok(-(hinv * (&s.dxi - &s.dh * ft)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtPole {
    pub sigma: f64,
    /// `‖f̃‖ > 1e6` at the refined location.
    pub large: bool,
}

/// Sampled Riccati data with pole metadata.
#[derive(Debug, Clone)]
pub struct RiccatiMatrix {
    pub n: usize,
    pub delta: f64,
    pub sigma: Vec<f64>,
    pub f: Vec<Option<DMatrix<f64>>>,
    pub f_tilde: Vec<Option<DMatrix<f64>>>,
    /// Primary `−f̃'`: `(HᵀH)⁻¹`.
    pub neg_df_tilde: Vec<Option<DMatrix<f64>>>,
    /// Central differences of `f̃` on the grid, where both neighbours are unmasked.
    pub neg_df_tilde_fd: Vec<Option<DMatrix<f64>>>,
    pub pole_distance: Vec<f64>,
    pub masked: Vec<bool>,
    /// Zeros of `det H_N` (conjugate points).
    pub conjugate: Vec<ConjugatePoint>,
    /// Jumps of the positive inertia of `f̃_N`.
    pub f_tilde_poles: Vec<FtPole>,
    /// Largest relative gap between the difference quotient and `(HᵀH)⁻¹`.
    pub fd_cross_check: f64,
}

impl RiccatiMatrix {
    /// Pole locations used for masking, including the structural pole at 0.
    pub fn poles(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.conjugate.iter().map(|c| c.sigma))
            .collect()
    }

    pub fn distance_to_pole(&self, sigma: f64) -> f64 {
        self.poles()
            .iter()
            .map(|p| (p - sigma).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_masked(&self, sigma: f64) -> bool {
        self.distance_to_pole(sigma) < self.delta
    }
}

fn inertia(f_tilde_n: &DMatrix<f64>) -> usize {
    sym(f_tilde_n)
        .symmetric_eigenvalues()
        .iter()
        .filter(|v| **v > 0.0)
        .count()
}

fn normal_inertia(s: &JacobiSample) -> Option<usize> {
    let k = s.h.nrows() - 1;
    let hn = block(&s.h, k);
    let inv = hn.try_inverse()?;
    Some(inertia(&(inv * block(&s.xi, k))))
}

/// Poles of `f̃_N` located independently of `det H`: the positive inertia of
/// `sym f̃_N` can only increase by crossing a pole (between poles `f̃'` is
/// negative definite), so each increase on the grid is bisected.
pub fn f_tilde_poles(jf: &JacobiFrame, lo: f64, hi: f64) -> Result<Vec<FtPole>> {
    if jf.n < 2 {
        return Ok(Vec::new());
    }
    let pts: Vec<(f64, usize)> = jf
        .samples
        .iter()
        .filter(|s| s.sigma > lo.max(1e-9) && s.sigma <= hi)
        .filter_map(|s| normal_inertia(s).map(|c| (s.sigma, c)))
        .collect();
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let ((mut a, ca), (mut b, cb)) = (w[0], w[1]);
        if cb <= ca {
            continue;
        }
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if b - a <= 1e-13 * (1.0 + mid) {
                break;
            }
            match normal_inertia(&jf.at(mid)?) {
                Some(c) if c > ca => b = mid,
                Some(_) => a = mid,
                None => {
                    a = mid;
                    b = mid;
                }
            }
        }
        let s = 0.5 * (a + b);
        let sample = jf.at(s)?;
        let k = jf.n - 1;
        let large = block(&sample.h, k)
            .try_inverse()
            .map(|inv| op_norm(&(inv * block(&sample.xi, k))) > 1e6)
            .unwrap_or(true);
        out.push(FtPole { sigma: s, large });
    }
    Ok(out)
}

/// Samples `f`, `f̃` and `−f̃'` over the frame grid, masking within `delta`
/// of every pole of `f̃` (including `σ = 0`).
pub fn compute_riccati(jf: &JacobiFrame, delta: f64) -> Result<RiccatiMatrix> {
    let lo = 0.0;
    let hi = jf.length;
    let conjugate = conjugate_points(jf, lo, hi)?;
    let ft_poles = f_tilde_poles(jf, lo, hi)?;
    let mut rm = RiccatiMatrix {
        n: jf.n,
        delta,
        sigma: jf.sigmas(),
        f: Vec::new(),
        f_tilde: Vec::new(),
        neg_df_tilde: Vec::new(),
        neg_df_tilde_fd: Vec::new(),
        pole_distance: Vec::new(),
        masked: Vec::new(),
        conjugate,
        f_tilde_poles: ft_poles,
        fd_cross_check: 0.0,
    };
    for s in &jf.samples {
        let d = rm.distance_to_pole(s.sigma);
        let masked = d < delta;
        rm.pole_distance.push(d);
        rm.masked.push(masked);
        rm.f.push(f_of(s).ok());
        if masked {
            rm.f_tilde.push(None);
            rm.neg_df_tilde.push(None);
        } else {
            rm.f_tilde.push(Some(f_tilde_of(s)?));
            rm.neg_df_tilde.push(Some(neg_df_tilde_identity(s)?));
        }
    }
    let m = rm.sigma.len();
    rm.neg_df_tilde_fd = vec![None; m];
    for i in 1..m.saturating_sub(1) {
        if let (Some(a), Some(b), Some(id)) =
            (&rm.f_tilde[i - 1], &rm.f_tilde[i + 1], &rm.neg_df_tilde[i])
        {
            let fd = -(b - a) / (rm.sigma[i + 1] - rm.sigma[i - 1]);
            let rel = op_norm(&(&fd - id)) / op_norm(id).max(1e-300);
            rm.fd_cross_check = rm.fd_cross_check.max(rel);
            rm.neg_df_tilde_fd[i] = Some(fd);
        }
    }
    Ok(rm)
}

/// Relative gap between `det(normal Gram)` and `1 / det` of the up-left
/// `(n−1) × (n−1)` block of `−f̃'`, with `−f̃'` taken from the product rule
/// (independent of the Gram matrix itself).
pub fn determinant_identity_defect(
    rm: &RiccatiMatrix,
    jf: &JacobiFrame,
    sigma: f64,
) -> Result<f64> {
    if rm.is_masked(sigma) {
        return Err(Error::Masked { sigma });
    }
    let s = jf.at(sigma)?;
    let lhs = gram_from(&s, GramMode::Normal).determinant();
    let k = jf.n - 1;
    let rhs = 1.0 / block(&neg_df_tilde_product(&s)?, k).determinant();
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300))
}

#[derive(Debug, Clone)]
pub struct SchwarzianOptions {
    pub h: f64,
    pub half: usize,
    pub degree: usize,
    /// Largest acceptable derivative-error estimate, relative to `max(1, ‖R‖)`.
    pub noise_limit: f64,
}

impl Default for SchwarzianOptions {
    fn default() -> Self {
        SchwarzianOptions {
            h: 0.01,
            half: 5,
            degree: 5,
            noise_limit: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchwarzianReport {
    pub sigma: f64,
    /// `½ H {f̃} H⁻¹`.
    pub recovered: DMatrix<f64>,
    /// `(⟨e_a, R(e_b, γ̇)γ̇⟩)` from the curvature tensor.
    pub frame_curvature: DMatrix<f64>,
    pub defect: f64,
    /// Estimated error of the recovered matrix from step halving.
    pub noise: f64,
    /// `‖{f̃} − f̃{f}f̃⁻¹‖`, with `{f}` assembled from Cartan matrices; `None`
    /// when `Ξ` is singular inside the stencil.
    pub invariance_defect: Option<f64>,
}

fn schwarzian_from(d: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let inv = inverse_checked(&d[1])?;
    let a = &d[3] * &inv;
    let b = &d[2] * &inv;
    Ok(a - (&b * &b) * 1.5)
}

/// Recovers the Jacobi curvature from the Schwarzian of `f̃`:
/// `R_γ = ½ H (f̃'''(f̃')⁻¹ − 3/2 (f̃''(f̃')⁻¹)²) H⁻¹`, with derivatives from
/// local polynomial fits of dense samples.
pub fn schwarzian_curvature(
    rm: &RiccatiMatrix,
    jf: &JacobiFrame,
    sigma: f64,
    opts: &SchwarzianOptions,
) -> Result<SchwarzianReport> {
    if rm.is_masked(sigma) {
        return Err(Error::Masked { sigma });
    }
    let half = opts.half;
    let reach = 2.0 * half as f64 * opts.h;
    if sigma - reach < 0.0 || sigma + reach > jf.length {
        return Err(Error::OutOfRange {
            sigma,
            lo: reach,
            hi: jf.length - reach,
        });
    }
    let fine = LocalFit::new(half, opts.degree, opts.h);
    let coarse = LocalFit::new(half, opts.degree, 2.0 * opts.h);
    // Samples at σ + k h for k = −2·half ..= 2·half.
    let m = 4 * half + 1;
    let mut samples = Vec::with_capacity(m);
    for k in 0..m {
        samples.push(jf.at(sigma + (k as f64 - 2.0 * half as f64) * opts.h)?);
    }
    let fts: Vec<DMatrix<f64>> = samples.iter().map(f_tilde_of).collect::<Result<_>>()?;
    let centre = &samples[2 * half];

    let s_fine = schwarzian_from(&fine.derivatives(&fts[half..=3 * half]))?;
    let coarse_pts: Vec<DMatrix<f64>> = (0..=2 * half).map(|k| fts[2 * k].clone()).collect();
    let s_coarse = schwarzian_from(&coarse.derivatives(&coarse_pts))?;

    let hinv = inverse_checked(&centre.h)?;
    let recovered = &centre.h * &s_fine * &hinv * 0.5;
    let recovered_coarse = &centre.h * &s_coarse * &hinv * 0.5;
    // Fit error scales like h⁴, so the halving difference over-estimates by ~15.
    let noise = op_norm(&(&recovered - &recovered_coarse)) / 15.0;

    let n = jf.n;
    let frame = &centre.frame;
    let mut kmat = DMatrix::zeros(n, n);
    let g = DMatrix::from_row_slice(n, n, &jf.metric().g(&centre.x)?);
    for b in 0..n {
        let eb: Vec<f64> = frame.column(b).iter().copied().collect();
        let r = jacobi_operator(jf.metric(), &centre.x, &centre.v, &eb)?;
        let rv = nalgebra::DVector::from_vec(r);
        for a in 0..n {
            kmat[(a, b)] = (frame.column(a).transpose() * &g * &rv)[(0, 0)];
        }
    }
    let defect = op_norm(&(&recovered - &kmat));
    if noise > opts.noise_limit * op_norm(&recovered).max(1.0) {
        return Err(Error::DerivativeNoise { estimate: noise });
    }

    let invariance_defect = (|| -> Option<f64> {
        // f' = Ξ⁻¹(H' − Ξ'f) is exact on samples; the fit supplies f'' and f'''.
        // f has its own poles where Ξ degenerates, so its stencil is finer.
        let ffit = LocalFit::new(half, opts.degree, opts.h / 4.0);
        let dfs: Vec<DMatrix<f64>> = ffit
            .abscissae(sigma)
            .into_iter()
            .map(|t| {
                let s = jf.at(t).ok()?;
                let xinv = inverse_checked(&s.xi).ok()?;
                let f = &xinv * &s.h;
                Some(xinv * (&s.dh - &s.dxi * f))
            })
            .collect::<Option<_>>()?;
        let d = ffit.derivatives(&dfs);
        let c = super::cartan_matrix(&d[0], &d[1]).ok()?;
        let dc = &d[2] * inverse_checked(&d[0]).ok()? - &c * &c;
        let sf = dc - (&c * &c) * 0.5;
        let ft = &fts[2 * half];
        let conj = ft * sf * ft.clone().try_inverse()?;
        Some(op_norm(&(&s_fine - conj)))
    })();

    Ok(SchwarzianReport {
        sigma,
        recovered,
        frame_curvature: kmat,
        defect,
        noise,
        invariance_defect,
    })
}

/// [`schwarzian_curvature`] with the stencil step halved (up to four times)
/// until the error estimate drops below `target`; returns the quietest attempt.
pub fn schwarzian_curvature_adaptive(
    rm: &RiccatiMatrix,
    jf: &JacobiFrame,
    sigma: f64,
    opts: &SchwarzianOptions,
    target: f64,
) -> Result<SchwarzianReport> {
    let mut best: Option<SchwarzianReport> = None;
    let mut last_err = None;
    for i in 0..5 {
        let o = SchwarzianOptions {
            h: opts.h / f64::from(1u32 << i),
            ..opts.clone()
        };
        match schwarzian_curvature(rm, jf, sigma, &o) {
            Ok(r) => {
                let done = r.noise <= target;
                if best.as_ref().is_none_or(|b| r.noise < b.noise) {
                    best = Some(r);
                }
                if done {
                    break;
                }
            }
            Err(e @ (Error::DerivativeNoise { .. } | Error::Conditioning { .. })) => {
                last_err = Some(e)
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(r) => Ok(r),
        None => Err(last_err.expect("at least one attempt")),
    }
}

/// Residue data of `f̃` at one pole.
#[derive(Debug, Clone)]
pub struct PoleMass {
    pub sigma: f64,
    /// Symmetrized residue matrix.
    pub c: DMatrix<f64>,
    /// Constant term of the fit.
    pub b: DMatrix<f64>,
    /// RMS fit residual relative to the largest sampled entry.
    pub residual: f64,
    pub min_eigenvalue: f64,
    /// `t = e^{πσ/R}` and `μ = (π² t / R) c` when `R` is finite.
    pub t: Option<f64>,
    pub mu: Option<DMatrix<f64>>,
}

impl PoleMass {
    pub fn is_positive(&self, tol: f64) -> bool {
        self.min_eigenvalue >= -tol
    }
}

/// Least-squares fit `f̃(σ) ≈ c/(σ−σ_j) + b + b₁s + b₂s² + b₃s³` with
/// `s = σ − σ_j`, over `w/20 ≤ |s| ≤ w` (one-sided where the window would
/// leave the sampled range).
pub fn pole_mass(
    rm: &RiccatiMatrix,
    jf: &JacobiFrame,
    sigma_j: f64,
    window: f64,
    tube_radius: Option<f64>,
) -> Result<PoleMass> {
    if !(window > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "pole window must be positive, got {window}"
        )));
    }
    for p in rm.poles() {
        let d = (p - sigma_j).abs();
        if d > 1e-6 && d <= window * 1.05 {
            return Err(Error::InvalidParameter(format!(
                "window {window} around {sigma_j} contains another pole at {p}"
            )));
        }
    }
    let inner = window / 20.0;
    let per_side = 24;
    let mut offsets = Vec::new();
    for i in 0..per_side {
        let s = inner + (window - inner) * i as f64 / (per_side - 1) as f64;
        if sigma_j + s <= jf.length {
            offsets.push(s);
        }
        if sigma_j - s >= 0.0 {
            offsets.push(-s);
        }
    }
    let basis = 5;
    if offsets.len() < 2 * basis {
        return Err(Error::InvalidParameter(
            "pole window leaves too few samples".into(),
        ));
    }
    let mut v = DMatrix::<f64>::zeros(offsets.len(), basis);
    for (r, s) in offsets.iter().enumerate() {
        let u = s / window;
        v[(r, 0)] = window / s;
        v[(r, 1)] = 1.0;
        v[(r, 2)] = u;
        v[(r, 3)] = u * u;
        v[(r, 4)] = u * u * u;
    }
    let pinv = v
        .clone()
        .pseudo_inverse(1e-14)
        .map_err(|e| Error::InvalidParameter(e.into()))?;
    let n = jf.n;
    let vals: Vec<DMatrix<f64>> = offsets
        .iter()
        .map(|s| jf.at(sigma_j + s).and_then(|x| f_tilde_of(&x)))
        .collect::<Result<_>>()?;
    let mut coef = vec![DMatrix::<f64>::zeros(n, n); basis];
    for (r, val) in vals.iter().enumerate() {
        for (q, c) in coef.iter_mut().enumerate() {
            *c += val * pinv[(q, r)];
        }
    }
    let mut resid = 0.0;
    let mut scale = 0.0f64;
    for (r, val) in vals.iter().enumerate() {
        let mut pred = DMatrix::<f64>::zeros(n, n);
        for (q, c) in coef.iter().enumerate() {
            pred += c * v[(r, q)];
        }
        resid += (val - pred).norm_squared();
        scale = scale.max(val.amax());
    }
    let residual = (resid / (vals.len() * n * n) as f64).sqrt() / scale.max(1e-300);
    let threshold = 1e-6;
    if residual > threshold {
        return Err(Error::PoorFit {
            residual,
            threshold,
        });
    }
    let c = sym(&(&coef[0] * window));
    let min_eigenvalue = c.clone().symmetric_eigenvalues().min();
    let (t, mu) = match tube_radius {
        Some(r) if r.is_finite() && r > 0.0 => {
            let t = (PI * sigma_j / r).exp();
            (Some(t), Some(&c * (PI * PI * t / r)))
        }
        _ => (None, None),
    };
    Ok(PoleMass {
        sigma: sigma_j,
        c,
        b: coef[1].clone(),
        residual,
        min_eigenvalue,
        t,
        mu,
    })
}
