//! Exponential-family network simulation by Metropolis edge toggles, and the
//! unit-information (g-) prior built from an observed network's MPLE fit.

use crate::models::{MvnPrior, PriorSpec};
use crate::netstats::{self, ErgmStatSpec, Network};
use crate::{Error, Result};
use rand::Rng;

/// Metropolis edge-toggle chain targeting the exponential-family model
/// `f(x) ∝ exp(θᵀ g(x))` over undirected simple graphs.
///
/// Each step proposes a uniformly random dyad and toggles it with acceptance
/// probability `min(1, exp(±θᵀΔ))`, where Δ is the dyad's change-statistic
/// vector and the sign matches the toggle direction. The acceptance ratio is
/// exactly the likelihood ratio of the toggled and current graphs, so the
/// chain needs no normalizing constant.
pub struct ErgmChain {
    net: Network,
    theta: Vec<f64>,
    spec: ErgmStatSpec,
}

impl ErgmChain {
    /// Start from the empty graph on `n` nodes.
    pub fn new(theta: &[f64], spec: &ErgmStatSpec, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument("ERGM simulation needs n ≥ 3".into()));
        }
        if theta.len() != spec.len() {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} entries, spec has {} statistics",
                theta.len(),
                spec.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("theta must be finite".into()));
        }
        Ok(ErgmChain { net: Network::new(n, false), theta: theta.to_vec(), spec: spec.clone() })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// One proposed toggle (may be rejected).
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let n = self.net.node_count();
        let (i, j) = loop {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                break (a.min(b), a.max(b));
            }
        };
        let delta = netstats::change_stats(&self.net, i, j, &self.spec);
        let mut log_ratio: f64 =
            delta.stats.iter().zip(&self.theta).map(|(d, t)| d * t).sum();
        if !log_ratio.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite change-statistic score at dyad ({i},{j})"
            )));
        }
        if self.net.has_edge(i, j) {
            log_ratio = -log_ratio;
        }
        if log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp() {
            if self.net.has_edge(i, j) {
                self.net.remove_edge(i, j)?;
            } else {
                self.net.add_edge(i, j)?;
            }
        }
        Ok(())
    }
}

/// Draw one network from the exponential-family model after `burn` proposed
/// toggles (a common default is 20·n²).
pub fn simulate_ergm<R: Rng + ?Sized>(
    theta: &[f64],
    spec: &ErgmStatSpec,
    n: usize,
    burn: usize,
    rng: &mut R,
) -> Result<Network> {
    if burn == 0 {
        return Err(Error::InvalidArgument("burn-in must be ≥ 1".into()));
    }
    let mut chain = ErgmChain::new(theta, spec, n)?;
    for _ in 0..burn {
        chain.step(rng)?;
    }
    Ok(chain.net)
}

/// Unit-information prior from observed data: `θ ~ N(0, g·(−H)⁻¹)` with `H`
/// the pseudo-log-likelihood Hessian at the observed network's offset MPLE.
pub fn build_g_prior(net: &Network, spec: &ErgmStatSpec, g: f64) -> Result<PriorSpec> {
    if !(g > 0.0) {
        return Err(Error::InvalidArgument(format!("g must be positive, got {g}")));
    }
    let offset = netstats::size_offset(net.node_count());
    let beta = netstats::mple(net, spec, offset)?;
    let h = netstats::pseudo_hessian(net, spec, &beta, offset)?;
    let neg_h = -h;
    let q = spec.len();
    let chol = nalgebra::Cholesky::new(neg_h.clone()).ok_or_else(|| {
        Error::Degenerate("pseudo-likelihood information matrix not positive-definite".into())
    })?;
    let inv = chol.inverse();
    let mut cov = vec![0.0; q * q];
    for a in 0..q {
        for b in 0..q {
            // Exact symmetry for the prior validator.
            cov[a * q + b] = 0.5 * (inv[(a, b)] + inv[(b, a)]) * g;
        }
    }
    Ok(PriorSpec::Mvn(MvnPrior::new(vec![0.0; q], cov)?))
}
