//! Catalogue of test manifolds. Every variant lowers to metric source text.

use std::f64::consts::PI;

use rand::Rng;

use super::expr::format_number;
use super::{parse_metric, Metric};
use crate::error::{Error, Result};

/// Margin kept between polar chart boxes and the coordinate poles.
pub const POLAR_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpace {
    /// Hyperspherical polar chart: `x1..x(n-1)` in `(0, π)`, `xn` periodic.
    RoundSphere {
        radius: f64,
        dim: usize,
    },
    /// Conformal chart `4|dx|²/(1 + K|x|²)²` (flat identity chart when `K = 0`).
    SpaceForm {
        curvature: f64,
        dim: usize,
    },
    Euclidean {
        dim: usize,
    },
    /// `r²(1 + ε h)(dθ² + sin²θ dφ²)` on the polar chart of the 2-sphere.
    PerturbedSphere {
        radius: f64,
        epsilon: f64,
        perturbation: String,
    },
}

fn coef(c: f64) -> String {
    if c == 1.0 {
        String::new()
    } else {
        format!("{}*", format_number(c))
    }
}

impl ModelSpace {
    pub fn unit_sphere() -> Self {
        ModelSpace::RoundSphere {
            radius: 1.0,
            dim: 2,
        }
    }

    pub fn perturbed_sphere(radius: f64, epsilon: f64) -> Self {
        ModelSpace::PerturbedSphere {
            radius,
            epsilon,
            perturbation: "cos(x1)".into(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpace::RoundSphere { dim, .. }
            | ModelSpace::SpaceForm { dim, .. }
            | ModelSpace::Euclidean { dim } => *dim,
            ModelSpace::PerturbedSphere { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim_ok = |n: usize, lo: usize| (lo..=super::jet::MAX_DIM).contains(&n);
        let ok = match self {
            ModelSpace::RoundSphere { radius, dim } => {
                *radius > 0.0 && radius.is_finite() && dim_ok(*dim, 2)
            }
            ModelSpace::SpaceForm { curvature, dim } => curvature.is_finite() && dim_ok(*dim, 2),
            ModelSpace::Euclidean { dim } => dim_ok(*dim, 1),
            ModelSpace::PerturbedSphere {
                radius, epsilon, ..
            } => *radius > 0.0 && epsilon.abs() < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid model space {self:?}"
            )))
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpace::RoundSphere { radius, dim } => format!("sphere(r={radius}, n={dim})"),
            ModelSpace::SpaceForm { curvature, dim } => {
                format!("spaceform(K={curvature}, n={dim})")
            }
            ModelSpace::Euclidean { dim } => format!("euclidean(n={dim})"),
            ModelSpace::PerturbedSphere {
                radius,
                epsilon,
                perturbation,
            } => {
                format!("perturbed(r={radius}, eps={epsilon}, h={perturbation})")
            }
        }
    }

    /// Metric source text for this model.
    pub fn source(&self) -> String {
        let mut s = String::new();
        match self {
            ModelSpace::RoundSphere { radius, dim } => {
                let n = *dim;
                s += &format!("dim {n}\n");
                for i in 1..n {
                    s += &format!("domain x{i} in ({POLAR_MARGIN}, pi - {POLAR_MARGIN})\n");
                }
                s += &format!("period x{n} = 2*pi\n");
                let c = radius * radius;
                for k in 1..=n {
                    let mut term = format_number(c);
                    for i in 1..k {
                        term += &format!("*sin(x{i})^2");
                    }
                    s += &format!("g{k}{k} = {term}\n");
                }
            }
            ModelSpace::SpaceForm { curvature, dim } => {
                let n = *dim;
                let k = *curvature;
                s += &format!("dim {n}\n");
                if k == 0.0 {
                    s += "g = identity\n";
                    return s;
                }
                let half = if k < 0.0 {
                    1.0 / (-k).sqrt()
                } else {
                    50.0 / k.sqrt()
                };
                for i in 1..=n {
                    s += &format!(
                        "domain x{i} in ({}, {})\n",
                        format_number(-half),
                        format_number(half)
                    );
                }
                let r2 = (1..=n)
                    .map(|i| format!("x{i}^2"))
                    .collect::<Vec<_>>()
                    .join("+");
                let sign = if k < 0.0 { "-" } else { "+" };
                let factor = format!("4/(1{sign}{}({r2}))^2", coef(k.abs()));
                for i in 1..=n {
                    s += &format!("g{i}{i} = {factor}\n");
                }
            }
            ModelSpace::Euclidean { dim } => {
                s += &format!("dim {dim}\ng = identity\n");
            }
            ModelSpace::PerturbedSphere {
                radius,
                epsilon,
                perturbation,
            } => {
                let c = format_number(radius * radius);
                let eps = format_number(*epsilon);
                s += "dim 2\n";
                s += &format!("domain x1 in ({POLAR_MARGIN}, pi - {POLAR_MARGIN})\n");
                s += "period x2 = 2*pi\n";
                s += &format!("g11 = {c}*(1+{eps}*({perturbation}))\n");
                s += &format!("g22 = {c}*(1+{eps}*({perturbation}))*sin(x1)^2\n");
            }
        }
        s
    }

    pub fn metric(&self) -> Result<Metric> {
        self.validate()?;
        Ok(Metric::new(parse_metric(&self.source())?))
    }

    /// Constant sectional curvature, when the model has one.
    pub fn closed_form_curvature(&self) -> Option<f64> {
        match self {
            ModelSpace::RoundSphere { radius, .. } => Some(1.0 / (radius * radius)),
            ModelSpace::SpaceForm { curvature, .. } => Some(*curvature),
            ModelSpace::Euclidean { .. } => Some(0.0),
            ModelSpace::PerturbedSphere { .. } => None,
        }
    }

    /// Tube radius known to be admissible for the model; `None` means no
    /// tube is certified (conjecture mode).
    pub fn certified_tube_radius(&self) -> Option<f64> {
        match self.closed_form_curvature() {
            Some(k) if k < 0.0 => Some(PI / (2.0 * (-k).sqrt())),
            Some(_) => Some(f64::INFINITY),
            None => None,
        }
    }

    /// Riemannian volume for compact models.
    pub fn volume(&self) -> Option<f64> {
        match self {
            ModelSpace::RoundSphere { radius, dim } => {
                Some(sphere_area(*dim) * radius.powi(*dim as i32))
            }
            ModelSpace::SpaceForm { curvature, dim } if *curvature > 0.0 => {
                Some(sphere_area(*dim) / curvature.powf(*dim as f64 / 2.0))
            }
            _ => None,
        }
    }

    /// Geodesic distance on a round sphere, through the embedding of the
    /// hyperspherical chart in `R^(n+1)`.
    pub fn round_distance(&self, p: &[f64], x: &[f64]) -> Option<f64> {
        let ModelSpace::RoundSphere { radius, dim } = self else {
            return None;
        };
        let (a, b) = (sphere_embedding(p, *dim), sphere_embedding(x, *dim));
        // half-angle form, accurate near 0 and π where acos is not
        let diff = a
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v).powi(2))
            .sum::<f64>()
            .sqrt();
        let sum = a
            .iter()
            .zip(&b)
            .map(|(u, v)| (u + v).powi(2))
            .sum::<f64>()
            .sqrt();
        Some(radius * 2.0 * diff.atan2(sum))
    }

    /// Midpoint and chart direction (not normalized) of a random test geodesic.
    ///
    /// The samples are chosen so that a unit-speed geodesic of moderate
    /// length through the midpoint stays well inside the chart box.
    pub fn sample_geodesic_midpoint<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let jitter = |rng: &mut R, s: f64| (rng.random::<f64>() * 2.0 - 1.0) * s;
        match self {
            ModelSpace::RoundSphere { .. } | ModelSpace::PerturbedSphere { .. } => {
                let mut x: Vec<f64> = (0..n - 1).map(|_| PI / 2.0 + jitter(rng, 0.25)).collect();
                x.push(rng.random::<f64>() * 2.0 * PI);
                let mut v: Vec<f64> = (0..n - 1).map(|_| jitter(rng, 0.3)).collect();
                v.push(1.0);
                (x, v)
            }
            ModelSpace::SpaceForm { curvature, .. } if *curvature > 0.0 => {
                let rho = 1.0 / curvature.sqrt();
                let phi = rng.random::<f64>() * 2.0 * PI;
                let r = rho * (1.0 + jitter(rng, 0.15));
                let mut x = vec![0.0; n];
                x[0] = r * phi.cos();
                x[1] = r * phi.sin();
                for xi in x.iter_mut().skip(2) {
                    *xi = jitter(rng, 0.15 * rho);
                }
                let mut v: Vec<f64> = (0..n).map(|_| jitter(rng, 0.3)).collect();
                v[0] = -phi.sin() + jitter(rng, 0.3);
                v[1] = phi.cos() + jitter(rng, 0.3);
                (x, v)
            }
            ModelSpace::SpaceForm { curvature, .. } if *curvature < 0.0 => {
                let s = 0.3 / (-curvature).sqrt();
                let x = (0..n).map(|_| jitter(rng, s)).collect();
                (x, random_direction(rng, n))
            }
            _ => {
                let x = (0..n).map(|_| jitter(rng, 1.0)).collect();
                (x, random_direction(rng, n))
            }
        }
    }
}

fn sphere_embedding(x: &[f64], n: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(n + 1);
    let mut prod = 1.0;
    for xi in &x[..n] {
        y.push(prod * xi.cos());
        prod *= xi.sin();
    }
    y.push(prod);
    y
}

fn random_direction<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let r2: f64 = v.iter().map(|a| a * a).sum();
        if r2 > 1e-4 && r2 <= 1.0 {
            return v;
        }
    }
}

/// `Γ(m/2)` for a positive integer `m`.
pub fn gamma_half(m: usize) -> f64 {
    assert!(m >= 1);
    let (mut x, mut g) = if m % 2 == 0 {
        (1.0, 1.0)
    } else {
        (0.5, PI.sqrt())
    };
    while 2.0 * x < m as f64 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Area of the unit sphere `S^k ⊂ R^(k+1)`: `2π^((k+1)/2) / Γ((k+1)/2)`.
pub fn sphere_area(k: usize) -> f64 {
    2.0 * PI.powf((k + 1) as f64 / 2.0) / gamma_half(k + 1)
}

/// Volume of the unit ball in `R^n`: `π^(n/2) / Γ(n/2 + 1)`.
pub fn unit_ball_volume(n: usize) -> f64 {
    PI.powf(n as f64 / 2.0) / gamma_half(n + 2)
}
