//! Exact-likelihood benchmark simulators with analytically known posteriors
//! (used to score the pipeline against ground truth).

use super::IidMatrix;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

/// θ = (λ, μ): column 1 iid Poisson(λ), column 2 iid from the scale mixture
/// ½N(μ,1) + ½N(μ,0.01).
pub fn simulate_poisson_mixture<R: Rng + ?Sized>(
    theta: &[f64],
    n_sim: usize,
    rng: &mut R,
) -> Result<IidMatrix> {
    let (lambda, mu) = (theta[0], theta[1]);
    if n_sim == 0 {
        return Err(Error::InvalidArgument("n_sim must be ≥ 1".into()));
    }
    let pois = Poisson::new(lambda)
        .map_err(|e| Error::InvalidArgument(format!("Poisson(λ={lambda}): {e}")))?;
    let mut data = Vec::with_capacity(n_sim * 2);
    for _ in 0..n_sim {
        let x1: f64 = pois.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        // Scale mixture: sd 1 or sd 0.1 (variance 0.01) with equal weight.
        let sd = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.1 };
        data.push(x1);
        data.push(mu + sd * z);
    }
    IidMatrix::new(n_sim, 2, data)
}

/// θ ∈ R⁵ → bivariate normal rows with μ = (θ₁, θ₂), standard deviations
/// s₁ = θ₃², s₂ = θ₄², correlation ρ = tanh(θ₅).
pub fn simulate_bivariate_gaussian<R: Rng + ?Sized>(
    theta: &[f64],
    n_sim: usize,
    rng: &mut R,
) -> Result<IidMatrix> {
    if n_sim == 0 {
        return Err(Error::InvalidArgument("n_sim must be ≥ 1".into()));
    }
    let (m1, m2) = (theta[0], theta[1]);
    let s1 = theta[2] * theta[2];
    let s2 = theta[3] * theta[3];
    let rho = theta[4].tanh();
    let cross = (1.0 - rho * rho).sqrt();
    let mut data = Vec::with_capacity(n_sim * 2);
    for _ in 0..n_sim {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        data.push(m1 + s1 * z1);
        data.push(m2 + s2 * (rho * z1 + cross * z2));
    }
    IidMatrix::new(n_sim, 2, data)
}

/// θ ∈ R^d → a single observation y ~ N_d(θ, I) (the summary is y itself).
pub fn simulate_twisted_gaussian<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> Result<IidMatrix> {
    let data = theta
        .iter()
        .map(|&t| {
            let z: f64 = StandardNormal.sample(rng);
            t + z
        })
        .collect();
    IidMatrix::new(1, theta.len(), data)
}

/// Maximum-likelihood summaries of a 2-column matrix: the two means, the two
/// variances, and the covariance, all with population (1/n) divisors.
pub fn gaussian_mle_summaries(m: &IidMatrix) -> Result<Vec<f64>> {
    if m.cols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "Gaussian MLE summaries need 2 columns, found {}",
            m.cols()
        )));
    }
    let n = m.rows() as f64;
    let mean1 = m.col_mean(0);
    let mean2 = m.col_mean(1);
    let (mut v1, mut v2, mut cv) = (0.0, 0.0, 0.0);
    for i in 0..m.rows() {
        let d1 = m.get(i, 0) - mean1;
        let d2 = m.get(i, 1) - mean2;
        v1 += d1 * d1;
        v2 += d2 * d2;
        cv += d1 * d2;
    }
    Ok(vec![mean1, mean2, v1 / n, v2 / n, cv / n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn poisson_column_obeys_law_of_large_numbers() {
        let mut rng = crate::rng::master_rng(21);
        let m = simulate_poisson_mixture(&[3.0, 0.0], 1_000_000, &mut rng).unwrap();
        assert!((m.col_mean(0) - 3.0).abs() < 0.01, "mean {}", m.col_mean(0));
        assert!(m.column(0).all(|v| v >= 0.0 && v.fract() == 0.0));
    }

    #[test]
    fn mixture_column_variance_is_half_plus_half() {
        let mut rng = crate::rng::master_rng(22);
        let m = simulate_poisson_mixture(&[3.0, 0.0], 400_000, &mut rng).unwrap();
        let mean = m.col_mean(1);
        let var =
            m.column(1).map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m.rows() as f64);
        assert!((mean).abs() < 0.01);
        // ½·1 + ½·0.01 = 0.505.
        assert!((var - 0.505).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn single_row_shape() {
        let mut rng = crate::rng::master_rng(23);
        let m = simulate_poisson_mixture(&[1.0, 2.0], 1, &mut rng).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let run = || {
            let mut rng = crate::rng::master_rng(77);
            simulate_bivariate_gaussian(&[-0.7, -2.9, -1.0, -0.9, 0.6], 100, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bivariate_moments_match_parameterization() {
        let theta = [-0.7, -2.9, -1.0, -0.9, 0.6];
        let mut rng = crate::rng::master_rng(24);
        let m = simulate_bivariate_gaussian(&theta, 400_000, &mut rng).unwrap();
        let s = gaussian_mle_summaries(&m).unwrap();
        let s1 = theta[2] * theta[2]; // sd of column 1
        let s2 = theta[3] * theta[3];
        let rho = theta[4].tanh();
        assert_relative_eq!(s[0], -0.7, epsilon = 0.02);
        assert_relative_eq!(s[1], -2.9, epsilon = 0.02);
        assert_relative_eq!(s[2], s1 * s1, epsilon = 0.02);
        assert_relative_eq!(s[3], s2 * s2, epsilon = 0.02);
        assert_relative_eq!(s[4], rho * s1 * s2, epsilon = 0.02);
    }

    #[test]
    fn twisted_observation_centers_on_theta() {
        let theta: Vec<f64> = (0..30).map(|k| k as f64 / 3.0).collect();
        let mut rng = crate::rng::master_rng(25);
        // Average many single draws: ≈ θ coordinatewise.
        let reps = 20_000;
        let mut acc = vec![0.0; 30];
        for _ in 0..reps {
            let m = simulate_twisted_gaussian(&theta, &mut rng).unwrap();
            for (a, j) in acc.iter_mut().zip(0..30) {
                *a += m.get(0, j);
            }
        }
        for (a, t) in acc.iter().zip(&theta) {
            assert!((a / reps as f64 - t).abs() < 0.05);
        }
    }

    #[test]
    fn gaussian_mle_uses_population_divisors() {
        let m = IidMatrix::new(2, 2, vec![0.0, 0.0, 2.0, 4.0]).unwrap();
        let s = gaussian_mle_summaries(&m).unwrap();
        // Deviations ±1 and ±2 → variances 1 and 4, covariance 2 (all /n).
        assert_eq!(s, vec![1.0, 2.0, 1.0, 4.0, 2.0]);
    }
}
