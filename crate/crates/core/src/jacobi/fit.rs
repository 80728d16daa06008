//! Local least-squares polynomial fits for derivatives of sampled data.

use nalgebra::DMatrix;

/// Precomputed weights so that `Σ_k w[d][k] y_k` is the `d`-th derivative at
/// the centre of equally spaced samples `y_k = y(σ + (k − half)h)`.
#[derive(Debug, Clone)]
pub struct LocalFit {
    pub half: usize,
    pub degree: usize,
    pub h: f64,
    weights: Vec<Vec<f64>>,
}

impl LocalFit {
    pub fn new(half: usize, degree: usize, h: f64) -> Self {
        let m = 2 * half + 1;
        assert!(degree < m, "fit needs more samples than coefficients");
        let mut v = DMatrix::<f64>::zeros(m, degree + 1);
        for k in 0..m {
            let s = k as f64 - half as f64;
            for p in 0..=degree {
                v[(k, p)] = s.powi(p as i32);
            }
        }
        let pinv = v
            .clone()
            .pseudo_inverse(1e-14)
            .expect("Vandermonde pseudo-inverse");
        let mut weights = Vec::new();
        let mut fact = 1.0;
        for d in 0..=degree.min(3) {
            if d > 0 {
                fact *= d as f64;
            }
            let scale = fact / h.powi(d as i32);
            weights.push((0..m).map(|k| pinv[(d, k)] * scale).collect());
        }
        LocalFit {
            half,
            degree,
            h,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        2 * self.half + 1
    }

    /// Sample abscissae around `sigma`.
    pub fn abscissae(&self, sigma: f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| sigma + (k as f64 - self.half as f64) * self.h)
            .collect()
    }

    /// Derivatives `0..=3` (as far as the degree allows) of matrix samples.
    pub fn derivatives(&self, samples: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        assert_eq!(samples.len(), self.len());
        let (r, c) = samples[0].shape();
        self.weights
            .iter()
            .map(|w| {
                let mut acc = DMatrix::zeros(r, c);
                for (wk, s) in w.iter().zip(samples) {
                    acc += s * *wk;
                }
                acc
            })
            .collect()
    }

    pub fn scalar_derivatives(&self, samples: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(samples).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        let fit = LocalFit::new(5, 5, 0.1);
        let f = |s: f64| 1.0 + 2.0 * s - s * s + 0.5 * s.powi(3) + 0.25 * s.powi(5);
        let ys: Vec<f64> = fit.abscissae(0.3).into_iter().map(f).collect();
        let d = fit.scalar_derivatives(&ys);
        let s = 0.3f64;
        assert!((d[0] - f(s)).abs() < 1e-12);
        assert!((d[1] - (2.0 - 2.0 * s + 1.5 * s * s + 1.25 * s.powi(4))).abs() < 1e-10);
        assert!((d[2] - (-2.0 + 3.0 * s + 5.0 * s.powi(3))).abs() < 1e-8);
        assert!((d[3] - (3.0 + 15.0 * s * s)).abs() < 1e-6);
    }

    #[test]
    fn smooth_function_third_derivative() {
        let fit = LocalFit::new(5, 5, 0.01);
        let ys: Vec<f64> = fit.abscissae(1.0).into_iter().map(f64::sin).collect();
        let d = fit.scalar_derivatives(&ys);
        assert!((d[3] + 1f64.cos()).abs() < 1e-6);
    }
}
