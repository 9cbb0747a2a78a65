//! Exponential-family network statistics: global values, change statistics,
//! and the size-offset maximum pseudo-likelihood estimator (MPLE).
//!
//! The MPLE treats each dyad as an independent logistic observation with
//! linear predictor `βᵀΔ + offset·Δ_edge`, where Δ is the change-statistic
//! vector of the dyad (statistics with the edge present minus absent) and the
//! offset coefficient is fixed, not estimated. With the offset at `log(1/n)`
//! the fitted coefficients are comparable across network sizes, which is what
//! makes them usable as ABC summaries.

use super::stats::sorted_intersection_size;
use super::Network;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// One network sufficient statistic.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ErgmStat {
    /// Number of edges.
    EdgeCount,
    /// Number of 2-stars: Σ_v C(deg v, 2). Undirected only.
    Kstar2,
    /// Number of triangles. Undirected only.
    Triangles,
    /// Geometrically weighted degree with fixed decay. Undirected only.
    GwDegree { decay: f64 },
    /// Mean degree: 2·edges/n undirected, edges/n directed.
    MeanDegree,
}

impl ErgmStat {
    fn needs_undirected(self) -> bool {
        matches!(self, ErgmStat::Kstar2 | ErgmStat::Triangles | ErgmStat::GwDegree { .. })
    }

    /// Short name used in report column headers.
    pub fn label(self) -> String {
        match self {
            ErgmStat::EdgeCount => "edges".into(),
            ErgmStat::Kstar2 => "kstar2".into(),
            ErgmStat::Triangles => "triangles".into(),
            ErgmStat::GwDegree { decay } => format!("gwdegree({decay:.4})"),
            ErgmStat::MeanDegree => "meandeg".into(),
        }
    }
}

/// Ordered list of statistics defining an exponential-family network model
/// (or the regressor set of an MPLE fit).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErgmStatSpec {
    stats: Vec<ErgmStat>,
}

impl ErgmStatSpec {
    pub fn new(stats: Vec<ErgmStat>) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::InvalidArgument("statistic list is empty".into()));
        }
        for s in &stats {
            if let ErgmStat::GwDegree { decay } = s {
                if !(*decay > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "gw-degree decay must be > 0, got {decay}"
                    )));
                }
            }
        }
        Ok(ErgmStatSpec { stats })
    }

    pub fn stats(&self) -> &[ErgmStat] {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects empty lists
    }

    fn needs_undirected(&self) -> bool {
        self.stats.iter().any(|s| s.needs_undirected())
    }
}

/// Change-statistic vector of one dyad: per-statistic `g(x⁺) − g(x⁻)` plus
/// the always-1 edge-count component that carries the fixed offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeStatVector {
    pub stats: Vec<f64>,
    /// Change in edge count when the dyad toggles on: always 1.
    pub edge: f64,
}

/// Current values of all statistics in the spec.
pub fn global_stats(net: &Network, spec: &ErgmStatSpec) -> Result<Vec<f64>> {
    if net.is_directed() && spec.needs_undirected() {
        return Err(Error::InvalidArgument(
            "kstar2/triangles/gw-degree require an undirected network".into(),
        ));
    }
    let n = net.node_count() as f64;
    spec.stats
        .iter()
        .map(|s| {
            Ok(match *s {
                ErgmStat::EdgeCount => net.edge_count() as f64,
                ErgmStat::Kstar2 => super::stats::count_kstar2(net)? as f64,
                ErgmStat::Triangles => super::stats::count_triangles(net)? as f64,
                ErgmStat::GwDegree { decay } => super::stats::gw_degree(net, decay)?,
                ErgmStat::MeanDegree => {
                    let scale = if net.is_directed() { 1.0 } else { 2.0 };
                    scale * net.edge_count() as f64 / n
                }
            })
        })
        .collect()
}

/// Change statistics of dyad `(i, j)`, independent of whether the edge is
/// currently present: each entry is the statistic with the edge on minus with
/// the edge off. Runs in O(deg i + deg j).
///
/// Statistics that are only defined for undirected networks assume one; the
/// public fitting/simulation entry points validate that up front.
pub fn change_stats(net: &Network, i: usize, j: usize, spec: &ErgmStatSpec) -> ChangeStatVector {
    debug_assert!(i != j, "change statistics of a self-loop");
    let present = net.has_edge(i, j);
    let n = net.node_count() as f64;
    // Degrees with the (i,j) edge excluded.
    let (di0, dj0) = if net.is_directed() {
        (net.degree_out(i) - usize::from(present), net.degree_in(j) - usize::from(present))
    } else {
        (net.degree(i) - usize::from(present), net.degree(j) - usize::from(present))
    };
    let stats = spec
        .stats
        .iter()
        .map(|s| match *s {
            ErgmStat::EdgeCount => 1.0,
            ErgmStat::Kstar2 => (di0 + dj0) as f64,
            ErgmStat::Triangles => {
                // Common neighbors of i and j. Self-loops are forbidden, so
                // neither i nor j can land in the intersection and no
                // exclusion is needed.
                sorted_intersection_size(net.neighbors_out(i), net.neighbors_out(j)) as f64
            }
            ErgmStat::GwDegree { decay } => {
                let q = 1.0 - (-decay).exp();
                q.powi(di0 as i32) + q.powi(dj0 as i32)
            }
            ErgmStat::MeanDegree => {
                if net.is_directed() {
                    1.0 / n
                } else {
                    2.0 / n
                }
            }
        })
        .collect();
    ChangeStatVector { stats, edge: 1.0 }
}

/// Offset coefficient `log(1/n)` that makes MPLE coefficients comparable
/// across network sizes.
pub fn size_offset(n: usize) -> f64 {
    (1.0 / n as f64).ln()
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Dyad-independence pseudo-log-likelihood at `beta` with the given fixed
/// offset coefficient on the edge-count change component.
pub fn pseudo_log_lik(net: &Network, spec: &ErgmStatSpec, beta: &[f64], offset_coef: f64) -> Result<f64> {
    if beta.len() != spec.len() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries, spec has {} statistics",
            beta.len(),
            spec.len()
        )));
    }
    let (design, response) = dyad_design(net, spec)?;
    let mut ll = 0.0;
    for (row, &y) in design.iter().zip(&response) {
        let eta: f64 =
            row.iter().zip(beta).map(|(d, b)| d * b).sum::<f64>() + offset_coef;
        ll += y * eta - log1p_exp(eta);
    }
    Ok(ll)
}

/// Change-statistic design matrix over dyads (i<j undirected, all ordered
/// pairs directed) and the 0/1 edge responses.
fn dyad_design(net: &Network, spec: &ErgmStatSpec) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if net.is_directed() && spec.needs_undirected() {
        return Err(Error::InvalidArgument(
            "kstar2/triangles/gw-degree require an undirected network".into(),
        ));
    }
    let n = net.node_count();
    if n < 2 {
        return Err(Error::Degenerate("MPLE needs at least one dyad".into()));
    }
    let mut design = Vec::new();
    let mut response = Vec::new();
    for i in 0..n {
        let j_start = if net.is_directed() { 0 } else { i + 1 };
        for j in j_start..n {
            if i == j {
                continue;
            }
            design.push(change_stats(net, i, j, spec).stats);
            response.push(if net.has_edge(i, j) { 1.0 } else { 0.0 });
        }
    }
    Ok((design, response))
}

/// Hessian of the pseudo-log-likelihood at `beta`: `−XᵀWX` with
/// `W = diag(p(1−p))` over dyads. Negative semidefinite by construction.
pub fn pseudo_hessian(
    net: &Network,
    spec: &ErgmStatSpec,
    beta: &[f64],
    offset_coef: f64,
) -> Result<DMatrix<f64>> {
    if beta.len() != spec.len() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries, spec has {} statistics",
            beta.len(),
            spec.len()
        )));
    }
    let (design, _) = dyad_design(net, spec)?;
    let q = spec.len();
    let mut h = DMatrix::zeros(q, q);
    for row in &design {
        let eta: f64 = row.iter().zip(beta).map(|(d, b)| d * b).sum::<f64>() + offset_coef;
        let p = 1.0 / (1.0 + (-eta).exp());
        let w = p * (1.0 - p);
        for a in 0..q {
            for b in 0..q {
                h[(a, b)] -= w * row[a] * row[b];
            }
        }
    }
    Ok(h)
}

/// Maximum pseudo-likelihood estimate of the per-statistic coefficients, the
/// offset coefficient held fixed.
///
/// Newton–Raphson with step halving; the returned gradient infinity-norm is
/// below 1e-8. Separation (coefficients escaping past 25 in absolute value),
/// an iteration cap of 50, or a singular Hessian all raise
/// [`Error::InfiniteMple`] so reference-table filters can drop the row.
pub fn mple(net: &Network, spec: &ErgmStatSpec, offset_coef: f64) -> Result<Vec<f64>> {
    const MAX_ABS: f64 = 25.0;
    const MAX_STEPS: usize = 50;
    const GRAD_TOL: f64 = 1e-10;

    let (design, response) = dyad_design(net, spec)?;
    let q = spec.len();
    let m = design.len();
    let x = DMatrix::from_fn(m, q, |r, c| design[r][c]);
    let y = DVector::from_vec(response);

    let ll_at = |beta: &DVector<f64>| -> f64 {
        let eta = &x * beta;
        eta.iter()
            .zip(y.iter())
            .map(|(&e, &yy)| {
                let e = e + offset_coef;
                yy * e - log1p_exp(e)
            })
            .sum()
    };

    let mut beta = DVector::zeros(q);
    let mut ll = ll_at(&beta);
    for _step in 0..MAX_STEPS {
        let eta = &x * &beta;
        let p: DVector<f64> =
            DVector::from_iterator(m, eta.iter().map(|&e| 1.0 / (1.0 + (-(e + offset_coef)).exp())));
        let grad = x.transpose() * (&y - &p);
        // Fisher information XᵀWX with W = diag(p(1−p)).
        let mut info = DMatrix::zeros(q, q);
        for r in 0..m {
            let w = p[r] * (1.0 - p[r]);
            for a in 0..q {
                for b in a..q {
                    info[(a, b)] += w * x[(r, a)] * x[(r, b)];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        let chol = nalgebra::Cholesky::new(info).ok_or_else(|| {
            Error::InfiniteMple("singular Hessian in pseudo-likelihood Newton step".into())
        })?;
        let full_step = chol.solve(&grad);
        // Converged only when both the gradient and the Newton step are tiny:
        // under separation the gradient underflows while the step stays O(1),
        // so a gradient-only check would wrongly accept a diverging fit.
        if grad.amax() < GRAD_TOL && full_step.amax() < 1e-6 {
            return Ok(beta.iter().copied().collect());
        }
        // Step-halving keeps the concave objective non-decreasing.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta + scale * &full_step;
            let cand_ll = ll_at(&cand);
            if cand_ll >= ll - 1e-12 {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // Gradient above tolerance but no ascent step exists: numerically
            // flat ridge, report as divergence.
            return Err(Error::InfiniteMple("no ascent step found".into()));
        }
        if beta.amax() > MAX_ABS {
            return Err(Error::InfiniteMple(format!(
                "coefficient magnitude exceeded {MAX_ABS} (separation)"
            )));
        }
    }
    Err(Error::InfiniteMple(format!("no convergence within {MAX_STEPS} Newton steps")))
}
