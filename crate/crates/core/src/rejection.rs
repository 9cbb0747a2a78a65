//! q%-nearest-neighbor rejection sampler: the classical accept/reject
//! baseline run side by side with the forest pipeline. Accepts the ⌈qN⌉
//! table rows closest to the observed summaries in (standardized) Euclidean
//! distance, summarizes the accepted parameter draws under equal weights,
//! and extracts mode/MLE point estimates from a kernel density built on the
//! accepted cloud. A forest-importance pre-selection step can first shrink
//! the summary set to the parameter dimension.

use crate::density::{sj_bandwidth, weighted_kde};
use crate::drf::{train, ForestConfig};
use crate::inference::{
    argmax_lowest, summarize_weighted, ModeMle, ParamReport, PosteriorReport,
};
use crate::models::{prior_log_density, PriorSpec};
use crate::reftable::ReferenceTable;
use crate::rng::derive_seed;
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

/// Outcome of the nearest-neighbor acceptance step.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionResult {
    /// Accepted row indices, ordered by (distance, index) ascending.
    pub accepted: Vec<usize>,
    /// Realized tolerance: the largest accepted distance.
    pub epsilon: f64,
    /// Equal weights over the accepted rows (each 1/k).
    pub weights: Vec<f64>,
}

/// Euclidean distance from each table row's summaries to `s_x`, optionally
/// per-column standardized by the table's column standard deviations.
/// Zero-variance columns contribute their raw difference.
fn distances(x: &[Vec<f64>], s_x: &[f64], standardize: bool) -> Vec<f64> {
    let p = s_x.len();
    let n = x.len();
    let scale: Vec<f64> = if standardize {
        (0..p)
            .map(|c| {
                let mean = x.iter().map(|r| r[c]).sum::<f64>() / n as f64;
                let var =
                    x.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
                let sd = var.sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; p]
    };
    x.par_iter()
        .map(|r| {
            r.iter()
                .zip(s_x)
                .zip(&scale)
                .map(|((&v, &s), &sc)| ((v - s) / sc).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Accepts the ⌈qN⌉ rows of `table` nearest to `s_x`. Distance ties at the
/// acceptance boundary break toward the lowest row index.
pub fn reject(
    table: &ReferenceTable,
    s_x: &[f64],
    q: f64,
    standardize: bool,
) -> Result<RejectionResult> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "acceptance fraction q must lie in (0, 1], got {q}"
        )));
    }
    if s_x.len() != table.meta().summary_names.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed summaries vs {} summary columns",
            s_x.len(),
            table.meta().summary_names.len()
        )));
    }
    if s_x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "observed summary vector has a non-finite entry".into(),
        ));
    }
    let x = table.summaries_matrix();
    let n = x.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    let d = distances(&x, s_x, standardize);
    let mut order: Vec<usize> = (0..n).collect();
    order.select_nth_unstable_by(k - 1, |&a, &b| {
        d[a].total_cmp(&d[b]).then(a.cmp(&b))
    });
    let mut accepted: Vec<usize> = order[..k].to_vec();
    accepted.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let epsilon = d[*accepted.last().expect("k ≥ 1")];
    let weights = vec![1.0 / k as f64; k];
    Ok(RejectionResult { accepted, epsilon, weights })
}

/// Kernel flavor for the accepted-cloud density estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KdeKind {
    /// One multivariate Gaussian kernel with normal-reference bandwidth
    /// matrix H = k^{−2/(d+4)}·Σ̂.
    Multivariate,
    /// Product of univariate Gaussian kernels with per-dimension
    /// Sheather–Jones bandwidths.
    Product,
}

impl KdeKind {
    /// Multivariate up to six dimensions, product beyond: the covariance
    /// estimate behind the multivariate kernel degrades as dimension grows.
    pub fn default_for_dim(d: usize) -> Self {
        if d <= 6 {
            KdeKind::Multivariate
        } else {
            KdeKind::Product
        }
    }
}

/// Multivariate Gaussian KDE over the accepted points with bandwidth matrix
/// H = k^{−2/(d+4)}·Σ̂ (sample covariance).
struct MvKde {
    points: Vec<DVector<f64>>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    /// −log k − ½·log det(2πH).
    log_norm: f64,
}

impl MvKde {
    fn new(thetas: &[Vec<f64>]) -> Result<Self> {
        let k = thetas.len();
        let d = thetas[0].len();
        let mut mean = vec![0.0; d];
        for row in thetas {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= k as f64);
        let mut cov = DMatrix::zeros(d, d);
        for row in thetas {
            for i in 0..d {
                for j in 0..=i {
                    cov[(i, j)] += (row[i] - mean[i]) * (row[j] - mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let v = cov[(i, j)] / (k as f64 - 1.0);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let factor = (k as f64).powf(-2.0 / (d as f64 + 4.0));
        let h = cov * factor;
        let chol = Cholesky::new(h).ok_or_else(|| {
            Error::Degenerate(
                "sample covariance of the accepted draws is singular".into(),
            )
        })?;
        let half_log_det: f64 =
            (0..d).map(|i| chol.l()[(i, i)].ln()).sum();
        let log_norm = -(k as f64).ln()
            - half_log_det
            - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        let points = thetas.iter().map(|r| DVector::from_column_slice(r)).collect();
        Ok(MvKde { points, chol, log_norm })
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        let mut best = f64::NEG_INFINITY;
        let quads: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                let z = self.chol.l_dirty().solve_lower_triangular(&(&t - p));
                match z {
                    Some(z) => -0.5 * z.norm_squared(),
                    None => f64::NEG_INFINITY,
                }
            })
            .collect();
        for &q in &quads {
            best = best.max(q);
        }
        if best == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = quads.iter().map(|&q| (q - best).exp()).sum();
        best + sum.ln() + self.log_norm
    }
}

/// Log-density evaluator over the accepted cloud, by kernel kind.
enum AcceptedKde {
    Multivariate(MvKde),
    Product(Vec<crate::density::MarginalDensity>),
}

impl AcceptedKde {
    fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            AcceptedKde::Multivariate(kde) => kde.log_density(theta),
            AcceptedKde::Product(margins) => margins
                .iter()
                .zip(theta)
                .map(|(m, &t)| m.log_density(t))
                .sum(),
        }
    }
}

fn build_kde(thetas: &[Vec<f64>], kind: KdeKind) -> Result<AcceptedKde> {
    match kind {
        KdeKind::Multivariate => Ok(AcceptedKde::Multivariate(MvKde::new(thetas)?)),
        KdeKind::Product => {
            let k = thetas.len();
            let d = thetas[0].len();
            let w = vec![1.0; k];
            let mut margins = Vec::with_capacity(d);
            for dim in 0..d {
                let col: Vec<f64> = thetas.iter().map(|r| r[dim]).collect();
                let h = sj_bandwidth(&col, &w)?;
                margins.push(weighted_kde(&col, &w, h, None)?);
            }
            Ok(AcceptedKde::Product(margins))
        }
    }
}

/// Mode and MLE of the accepted-cloud kernel density, scanned over the
/// accepted points themselves (ties → lowest index). The kernel kind
/// defaults by dimension when `kind` is `None`. Requires k ≥ d+1 accepted
/// draws for the multivariate kernel and k ≥ 3 for the product kernel, and
/// errors on any zero-variance parameter dimension.
pub fn kde_mode_mle(
    accepted_thetas: &[Vec<f64>],
    prior: &PriorSpec,
    kind: Option<KdeKind>,
) -> Result<ModeMle> {
    let k = accepted_thetas.len();
    if k == 0 {
        return Err(Error::Empty("no accepted parameter draws".into()));
    }
    let d = accepted_thetas[0].len();
    if d == 0 || accepted_thetas.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch(
            "accepted parameter rows have unequal or zero dimension".into(),
        ));
    }
    if accepted_thetas.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "accepted parameter draws must be finite".into(),
        ));
    }
    if prior.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "prior has {} dimensions, accepted draws have {d}",
            prior.dim()
        )));
    }
    let kind = kind.unwrap_or_else(|| KdeKind::default_for_dim(d));
    let min_k = match kind {
        KdeKind::Multivariate => d + 1,
        KdeKind::Product => 3,
    };
    if k < min_k {
        return Err(Error::InvalidArgument(format!(
            "{k} accepted draws are too few for a {kind:?} kernel in {d} dimensions (need ≥ {min_k})"
        )));
    }
    for dim in 0..d {
        let first = accepted_thetas[0][dim];
        if accepted_thetas.iter().all(|r| r[dim] == first) {
            return Err(Error::Degenerate(format!(
                "accepted draws are constant in dimension {dim}; no density scale"
            )));
        }
    }

    let kde = build_kde(accepted_thetas, kind)?;
    let scores: Vec<f64> = accepted_thetas
        .par_iter()
        .map(|t| kde.log_density(t))
        .collect();
    let ratios: Vec<f64> = accepted_thetas
        .par_iter()
        .zip(scores.par_iter())
        .map(|(t, &s)| {
            if s == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            match prior_log_density(prior, t) {
                Ok(pr) if pr.is_finite() => s - pr,
                _ => f64::NEG_INFINITY,
            }
        })
        .collect();
    let mode_index = argmax_lowest(&scores).ok_or_else(|| {
        Error::Degenerate("kernel density vanishes at every accepted draw".into())
    })?;
    let mle_index = argmax_lowest(&ratios).ok_or_else(|| {
        Error::Degenerate(
            "density-to-prior ratio vanishes at every accepted draw".into(),
        )
    })?;
    Ok(ModeMle {
        mode: accepted_thetas[mode_index].clone(),
        mode_index,
        mode_log_density: scores[mode_index],
        mle: accepted_thetas[mle_index].clone(),
        mle_index,
        mle_log_ratio: ratios[mle_index],
    })
}

/// Picks the `target_dim` most parameter-informative summary columns: one
/// regression forest per parameter dimension ranks the summaries by split
/// importance, ranks are summed across dimensions, and the lowest rank sums
/// win (ties → lowest column index). Returns ascending column indices.
pub fn preselect(
    table: &ReferenceTable,
    model_index: u32,
    target_dim: usize,
    cfg: &ForestConfig,
) -> Result<Vec<usize>> {
    let p = table.meta().summary_names.len();
    if target_dim == 0 || target_dim > p {
        return Err(Error::InvalidArgument(format!(
            "target dimension {target_dim} outside 1..={p}"
        )));
    }
    let m = model_index as usize;
    if m == 0 || m > table.meta().models.len() {
        return Err(Error::InvalidArgument(format!(
            "model index {model_index} outside 1..={}",
            table.meta().models.len()
        )));
    }
    let d = table.meta().models[m - 1].param_names.len();
    let x = table.summaries_matrix();
    let mut rank_sum = vec![0usize; p];
    for k in 0..d {
        let y = table.theta_column(model_index, k)?;
        let fc = ForestConfig { seed: derive_seed(cfg.seed, k as u64), ..cfg.clone() };
        let imp = train(&x, &y, &fc)?.importance();
        // Rank 0 = most important; importance ties break to the lower index.
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
        for (rank, &col) in order.iter().enumerate() {
            rank_sum[col] += rank;
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| rank_sum[a].cmp(&rank_sum[b]).then(a.cmp(&b)));
    let mut selected = order[..target_dim].to_vec();
    selected.sort_unstable();
    Ok(selected)
}

/// Knobs for the rejection-sampler report.
#[derive(Debug, Clone)]
pub struct RejectionOptions {
    /// Acceptance fraction q ∈ (0, 1].
    pub q: f64,
    /// Standardize summary columns before the distance computation.
    pub standardize: bool,
    /// Shrink the summary set to the parameter dimension by forest
    /// importance before computing distances.
    pub preselect: bool,
    /// Kernel for the mode/MLE density; `None` picks by dimension.
    pub kde: Option<KdeKind>,
    /// Forest settings for the pre-selection step (ignored otherwise).
    pub forest: ForestConfig,
}

impl Default for RejectionOptions {
    fn default() -> Self {
        RejectionOptions {
            q: 0.01,
            standardize: true,
            preselect: false,
            kde: None,
            forest: ForestConfig::default(),
        }
    }
}

/// Method label for a given option set: pre-selection wins the "select"
/// label; otherwise an explicitly forced kernel is named, and the
/// dimension-defaulted kernel keeps the plain label.
pub(crate) fn method_label(opts: &RejectionOptions) -> &'static str {
    if opts.preselect {
        "rejectionABCselect"
    } else {
        match opts.kde {
            Some(KdeKind::Multivariate) => "rejectionABCkern",
            Some(KdeKind::Product) => "rejectionABCprodkern",
            None => "rejectionABC",
        }
    }
}

/// Runs the rejection baseline for one model and emits the same report
/// schema as the forest pipeline: equal-weight summaries over the accepted
/// draws, kernel-density mode and MLE, no copula, and the realized
/// acceptance count as the candidate-set size.
pub fn rejection_report(
    table: &ReferenceTable,
    model: &crate::models::ModelSpec,
    model_index: u32,
    s_x: &[f64],
    opts: &RejectionOptions,
) -> Result<PosteriorReport> {
    Ok(rejection_detailed(table, model, model_index, s_x, opts)?.report)
}

/// [`rejection_report`], also returning the accepted parameter columns and
/// their (equal) weights for downstream metric computation.
pub fn rejection_detailed(
    table: &ReferenceTable,
    model: &crate::models::ModelSpec,
    model_index: u32,
    s_x: &[f64],
    opts: &RejectionOptions,
) -> Result<crate::inference::AnalysisArtifacts> {
    let m = model_index as usize;
    if m == 0 || m > table.meta().models.len() {
        return Err(Error::InvalidArgument(format!(
            "model index {model_index} outside 1..={}",
            table.meta().models.len()
        )));
    }
    if model.name != table.meta().models[m - 1].name {
        return Err(Error::InvalidArgument(format!(
            "model spec '{}' does not match table model '{}'",
            model.name,
            table.meta().models[m - 1].name
        )));
    }
    let reduced = table.restrict_to_model(model_index)?;
    let d = model.dim();

    let (sub_table, sub_sx): (ReferenceTable, Vec<f64>);
    let (work_table, work_sx): (&ReferenceTable, &[f64]) = if opts.preselect {
        let cols = preselect(&reduced, model_index, d.min(s_x.len()), &opts.forest)?;
        sub_table = project_summaries(&reduced, &cols)?;
        sub_sx = cols.iter().map(|&c| s_x[c]).collect();
        (&sub_table, &sub_sx)
    } else {
        (&reduced, s_x)
    };

    let result = reject(work_table, work_sx, opts.q, opts.standardize)?;
    let thetas: Vec<Vec<f64>> = result
        .accepted
        .iter()
        .map(|&i| work_table.rows()[i].theta.clone())
        .collect();

    let mm = kde_mode_mle(&thetas, &model.prior, opts.kde)?;
    let names = &table.meta().models[m - 1].param_names;
    let mut params = Vec::with_capacity(d);
    for k in 0..d {
        let col: Vec<f64> = thetas.iter().map(|r| r[k]).collect();
        let s = summarize_weighted(&names[k], &col, &result.weights)?;
        params.push(ParamReport {
            name: s.name,
            mean: s.mean,
            sd: s.sd,
            q2_5: s.quantiles[0],
            q25: s.quantiles[1],
            median: s.quantiles[2],
            q75: s.quantiles[3],
            q97_5: s.quantiles[4],
            mode: mm.mode[k],
            mle: mm.mle[k],
        });
    }
    let report = PosteriorReport {
        method: method_label(opts).into(),
        model_name: model.name.clone(),
        model_index,
        model_probs: None,
        params,
        copula: None,
        dropped_rows: table.meta().dropped.clone(),
        pseudo_obs_dropped: 0,
        candidate_count: result.accepted.len() as u64,
    };
    report.validate()?;
    let atoms: Vec<Vec<f64>> =
        (0..d).map(|k| thetas.iter().map(|r| r[k]).collect()).collect();
    let weights = vec![result.weights.clone(); d];
    Ok(crate::inference::AnalysisArtifacts { report, atoms, weights })
}

/// The same table restricted to a subset of summary columns (ascending
/// indices), with summary names filtered to match.
fn project_summaries(table: &ReferenceTable, cols: &[usize]) -> Result<ReferenceTable> {
    let p = table.meta().summary_names.len();
    if cols.iter().any(|&c| c >= p) {
        return Err(Error::InvalidArgument(format!(
            "summary column index outside 0..{p}"
        )));
    }
    let mut meta = table.meta().clone();
    meta.summary_names =
        cols.iter().map(|&c| meta.summary_names[c].clone()).collect();
    let rows = table
        .rows()
        .iter()
        .map(|r| crate::reftable::TableRow {
            model_index: r.model_index,
            theta: r.theta.clone(),
            summaries: cols.iter().map(|&c| r.summaries[c]).collect(),
        })
        .collect();
    ReferenceTable::from_parts(meta, rows)
}
