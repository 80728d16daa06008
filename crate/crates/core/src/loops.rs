//! Betti sums of loop spaces of model spaces, and the chain
//! `Σ dim H_i(ΩM) ≤ n(p, Ck, x)` and `Σ dim H_i(ΩM) ≤ Betti bound`.

use crate::bounds::{betti_bound, TubeParams};
use crate::count::{sphere_count_oracle, GeodesicCounter, SolverOptions};
use crate::error::{Error, Result};
use crate::metric::ModelSpace;

/// `dim H_i(ΩSⁿ; F)`: one in degrees divisible by `n − 1`, zero otherwise,
/// for every coefficient field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BettiTable {
    pub n: usize,
}

impl BettiTable {
    pub fn for_space(space: &ModelSpace) -> Result<Self> {
        let n = space.dim();
        let sphere = match space {
            ModelSpace::RoundSphere { .. } | ModelSpace::PerturbedSphere { .. } => true,
            ModelSpace::SpaceForm { curvature, .. } => *curvature > 0.0,
            ModelSpace::Euclidean { .. } => false,
        };
        if !sphere || n < 2 {
            return Err(Error::UnsupportedSpace(format!(
                "no loop-space Betti table for {}",
                space.label()
            )));
        }
        Ok(BettiTable { n })
    }

    pub fn dim_h(&self, i: usize) -> usize {
        usize::from(i % (self.n - 1) == 0)
    }

    /// `Σ_{i<k} dim H_i` by the closed rule `⌊(k−1)/(n−1)⌋ + 1`.
    pub fn partial_sum(&self, k: usize) -> usize {
        assert!(k >= 1);
        (k - 1) / (self.n - 1) + 1
    }

    pub fn partial_sum_enumerated(&self, k: usize) -> usize {
        (0..k).map(|i| self.dim_h(i)).sum()
    }
}

pub fn loop_betti_sum(space: &ModelSpace, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(BettiTable::for_space(space)?.partial_sum(k))
}

/// How geodesic counts are obtained for the Gromov check.
#[derive(Debug, Clone)]
pub enum CountSource {
    /// One counter table at `T = C·k_max`, counts read off the sorted lengths.
    Numeric { solver: SolverOptions, seed: u64 },
    /// Closed-form enumeration on a round sphere.
    SphereOracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GromovRow {
    pub k: usize,
    pub t: f64,
    pub betti: usize,
    pub count: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GromovReport {
    pub c: f64,
    pub distance: Option<f64>,
    pub rows: Vec<GromovRow>,
    pub first_failure: Option<usize>,
}

impl GromovReport {
    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }
}

/// Compares `Σ_{i<k} dim H_i(ΩM)` with `n(p, Ck, x)` for `k = 1..=k_max`.
pub fn gromov_check(
    space: &ModelSpace,
    p: &[f64],
    x: &[f64],
    c: f64,
    k_max: usize,
    source: &CountSource,
) -> Result<GromovReport> {
    if !(c > 0.0 && c.is_finite()) || k_max == 0 {
        return Err(Error::InvalidParameter(format!(
            "need C > 0 and k_max ≥ 1, got C = {c}, k_max = {k_max}"
        )));
    }
    let table = BettiTable::for_space(space)?;
    let distance = space.round_distance(p, x);
    let t_max = c * k_max as f64;
    let counts: Box<dyn Fn(f64) -> Result<usize>> = match source {
        CountSource::Numeric { solver, seed } => {
            let m = space.metric()?;
            let counter = GeodesicCounter::new(&m, p, t_max, solver.clone(), *seed)?;
            let all = counter.count(x, t_max)?;
            if !all.regular {
                return Err(Error::InvalidParameter(
                    "x is not a regular value of exp_p".into(),
                ));
            }
            let lengths: Vec<f64> = all.found.iter().map(|f| f.length).collect();
            Box::new(move |t| Ok(lengths.iter().filter(|l| **l < t).count()))
        }
        CountSource::SphereOracle => {
            let (Some(d), ModelSpace::RoundSphere { radius, .. }) = (distance, space) else {
                return Err(Error::UnsupportedSpace(
                    "the sphere oracle needs a round sphere".into(),
                ));
            };
            let r = *radius;
            Box::new(move |t| sphere_count_oracle(d, t, r))
        }
    };
    let mut rows = Vec::with_capacity(k_max);
    let mut first_failure = None;
    for k in 1..=k_max {
        let t = c * k as f64;
        let betti = table.partial_sum(k);
        let count = counts(t)?;
        let pass = betti <= count;
        if !pass && first_failure.is_none() {
            first_failure = Some(k);
        }
        rows.push(GromovRow {
            k,
            t,
            betti,
            count,
            pass,
        });
    }
    Ok(GromovReport {
        c,
        distance,
        rows,
        first_failure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremRow {
    pub k: usize,
    pub betti: usize,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub c: f64,
    pub radius: f64,
    pub volume: f64,
    /// `R` does not exceed the model's certified tube radius.
    pub certified: bool,
    pub rows: Vec<TheoremRow>,
    pub first_failure: Option<usize>,
    /// Log-log slope of the positive margins against `k`.
    pub growth_exponent: Option<f64>,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }
}

/// Tabulates `betti_bound(k, C, R, vol) − Σ_{i<k} dim H_i(ΩM)` for `k = 1..=k_max`.
pub fn theorem_check(
    space: &ModelSpace,
    c: f64,
    k_max: usize,
    radius: f64,
    vol: f64,
) -> Result<TheoremReport> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    let table = BettiTable::for_space(space)?;
    let tp = TubeParams::new(radius, space.dim())?;
    let certified = space.certified_tube_radius().is_some_and(|r| radius <= r);
    let mut rows = Vec::with_capacity(k_max);
    let mut first_failure = None;
    for k in 1..=k_max {
        let betti = table.partial_sum(k);
        let bound = betti_bound(k, c, &tp, vol)?;
        let margin = bound - betti as f64;
        let pass = margin >= 0.0;
        if !pass && first_failure.is_none() {
            first_failure = Some(k);
        }
        rows.push(TheoremRow {
            k,
            betti,
            bound,
            margin,
            pass,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.margin > 0.0)
        .map(|r| ((r.k as f64).ln(), r.margin.ln()))
        .collect();
    Ok(TheoremReport {
        c,
        radius,
        volume: vol,
        certified,
        rows,
        first_failure,
        growth_exponent: loglog_slope(&pts),
    })
}

fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
