//! Weighted-sample basics shared across the pipeline: normalized weights,
//! effective sample size, weighted moments, ECDF, and quantiles.

use crate::{Error, Result};

/// Validate nonnegative weights with positive total and return them
/// normalized to sum 1.
pub fn normalize_weights(w: &[f64]) -> Result<Vec<f64>> {
    if w.is_empty() {
        return Err(Error::Empty("weight vector is empty".into()));
    }
    if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("weights sum to zero".into()));
    }
    Ok(w.iter().map(|x| x / total).collect())
}

/// Kish effective sample size `1 / Σ w̄²` of normalized weights.
pub fn effective_sample_size(w_norm: &[f64]) -> f64 {
    1.0 / w_norm.iter().map(|x| x * x).sum::<f64>()
}

/// Weighted mean with normalized weights.
pub fn weighted_mean(y: &[f64], w_norm: &[f64]) -> f64 {
    y.iter().zip(w_norm).map(|(a, b)| a * b).sum()
}

/// Weighted population variance with normalized weights.
pub fn weighted_var(y: &[f64], w_norm: &[f64]) -> f64 {
    let m = weighted_mean(y, w_norm);
    y.iter().zip(w_norm).map(|(a, b)| b * (a - m) * (a - m)).sum()
}

/// Atoms sorted ascending with their normalized weights and cumulative
/// weights — the reusable form for ECDF/quantile queries.
#[derive(Debug, Clone)]
pub struct SortedWeighted {
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    cum: Vec<f64>,
}

impl SortedWeighted {
    pub fn new(y: &[f64], w: &[f64]) -> Result<Self> {
        if y.len() != w.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} atoms vs {} weights",
                y.len(),
                w.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("atoms must be finite".into()));
        }
        let w = normalize_weights(w)?;
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let ws: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
        let mut cum = Vec::with_capacity(ws.len());
        let mut acc = 0.0;
        for &wi in &ws {
            acc += wi;
            // Nonnegative summands overshoot 1 only by rounding; a CDF may not.
            cum.push(acc.min(1.0));
        }
        // Guard against rounding drift at the top.
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        Ok(SortedWeighted { y: ys, w: ws, cum })
    }

    /// Right-continuous ECDF: `F(t) = Σ w 1(y ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        // partition_point gives the count of atoms ≤ t.
        let k = self.y.partition_point(|&v| v <= t);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    /// Generalized inverse ECDF: smallest atom whose cumulative weight
    /// reaches `p` (p clamped to (0,1]).
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(f64::MIN_POSITIVE, 1.0);
        let k = self.cum.partition_point(|&c| c < p);
        self.y[k.min(self.y.len() - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normalization_and_ess() {
        let w = normalize_weights(&[1.0, 1.0, 2.0]).unwrap();
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0);
        // ESS of (¼,¼,½) = 1/(1/16+1/16+1/4) = 8/3.
        assert_relative_eq!(effective_sample_size(&w), 8.0 / 3.0);
        assert!(normalize_weights(&[0.0, 0.0]).is_err());
        assert!(normalize_weights(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn ecdf_and_quantiles_are_inverse_like() {
        let sw = SortedWeighted::new(&[3.0, 1.0, 2.0], &[0.25, 0.5, 0.25]).unwrap();
        assert_relative_eq!(sw.cdf(0.5), 0.0);
        assert_relative_eq!(sw.cdf(1.0), 0.5);
        assert_relative_eq!(sw.cdf(2.5), 0.75);
        assert_relative_eq!(sw.cdf(9.0), 1.0);
        assert_eq!(sw.quantile(0.5), 1.0);
        assert_eq!(sw.quantile(0.500001), 2.0);
        assert_eq!(sw.quantile(1.0), 3.0);
    }

    #[test]
    fn cdf_never_exceeds_one_despite_rounding() {
        // The first five normalized weights sum to 1 + 1 ulp; with trailing
        // zero-weight atoms (the shape forest weights take) the overshoot
        // lands on interior cumulative entries, and the ECDF must still cap.
        let w = [
            0.46562265437810535,
            0.9433567169983137,
            0.6489745531369242,
            0.9009004917506227,
            0.11320596465314436,
            0.0,
            0.0,
        ];
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let sw = SortedWeighted::new(&y, &w).unwrap();
        for t in [5.0, 5.5, 6.0, 6.5, 7.0, 100.0] {
            assert!(sw.cdf(t) <= 1.0, "F({t}) = {} exceeds 1", sw.cdf(t));
        }
    }

    #[test]
    fn weighted_moments() {
        let w = normalize_weights(&[1.0, 3.0]).unwrap();
        let y = [0.0, 4.0];
        assert_relative_eq!(weighted_mean(&y, &w), 3.0);
        // E[(y−3)²] = ¼·9 + ¾·1 = 3.
        assert_relative_eq!(weighted_var(&y, &w), 3.0);
    }
}
