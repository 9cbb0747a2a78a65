//! Posterior reporting: weighted marginal summaries, joint-posterior
//! assembly (forest weights → marginal CDFs → pseudo-observations → fitted
//! t-copula), candidate-scan mode and maximum-likelihood estimates, and
//! forest-classifier model selection — plus the `analyze` driver that runs
//! the whole chain for one observed summary vector.

use crate::copula::{fit_t_copula, MetaTPosterior, PseudoObsMatrix, TCopulaFit};
use crate::density::{histogram_density, sj_bandwidth, weighted_kde};
use crate::drf::{class_probs, train, train_classifier, Forest, ForestConfig};
use crate::models::{prior_log_density, DimKind, DimSpec, ModelSpec, ParamSpace, PriorSpec};
use crate::reftable::ReferenceTable;
use crate::rng::{derive_seed, stream_rng};
use crate::wstats::{normalize_weights, SortedWeighted};
use crate::{Error, Result};
use rayon::prelude::*;

/// Quantile levels reported for every parameter, in ascending order.
pub const QUANTILE_LEVELS: [f64; 5] = [0.025, 0.25, 0.50, 0.75, 0.975];

/// How many extra joint-posterior draws the mode/MLE search adds when the
/// caller asks for augmentation without giving a count.
pub const DEFAULT_EXTRA_DRAWS: usize = 100_000;

/// Marginal density estimator used inside the joint posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MarginalMethod {
    /// Weighted histogram with plug-in bin count.
    Histogram,
    /// Weighted Gaussian KDE with Sheather–Jones bandwidth, reflected at
    /// finite support bounds.
    Kde,
}

impl MarginalMethod {
    /// Histograms below six parameters, KDE from six up: histogram bins stay
    /// well-populated only while the candidate density per dimension is high.
    pub fn default_for_dim(d: usize) -> Self {
        if d < 6 {
            MarginalMethod::Histogram
        } else {
            MarginalMethod::Kde
        }
    }
}

/// Weighted summary of one parameter's marginal posterior.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Values at `QUANTILE_LEVELS`, nondecreasing.
    pub quantiles: [f64; 5],
}

/// Summary of a single weighted sample: mean, standard deviation, and the
/// report quantiles, all under the normalized weight vector.
pub fn summarize_weighted(name: &str, y: &[f64], w: &[f64]) -> Result<ParamSummary> {
    let w = normalize_weights(w)?;
    if y.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values vs {} weights",
            y.len(),
            w.len()
        )));
    }
    let mean = crate::wstats::weighted_mean(y, &w);
    let sd = crate::wstats::weighted_var(y, &w).max(0.0).sqrt();
    let sw = SortedWeighted::new(y, &w)?;
    let mut quantiles = [0.0; 5];
    for (slot, &p) in quantiles.iter_mut().zip(QUANTILE_LEVELS.iter()) {
        *slot = sw.quantile(p);
    }
    Ok(ParamSummary { name: name.to_string(), mean, sd, quantiles })
}

/// Marginal posterior summaries for every parameter of one model: forest `k`
/// supplies the weights for parameter `k`, evaluated at the observed summary
/// vector `s_x` over the rows of `table` belonging to `model_index`.
pub fn summarize(
    forests: &[Forest],
    table: &ReferenceTable,
    model_index: u32,
    s_x: &[f64],
) -> Result<Vec<ParamSummary>> {
    let m = model_index as usize;
    if m == 0 || m > table.meta().models.len() {
        return Err(Error::InvalidArgument(format!(
            "model index {model_index} outside 1..={}",
            table.meta().models.len()
        )));
    }
    let meta = &table.meta().models[m - 1];
    if forests.len() != meta.param_names.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} forests vs {} parameters of model '{}'",
            forests.len(),
            meta.param_names.len(),
            meta.name
        )));
    }
    let mut out = Vec::with_capacity(forests.len());
    for (k, forest) in forests.iter().enumerate() {
        let y = table.theta_column(model_index, k)?;
        let w = forest.weights(s_x)?;
        out.push(summarize_weighted(&meta.param_names[k], &y, w.as_slice())?);
    }
    Ok(out)
}

/// Joint posterior assembled from per-parameter forests: the meta-t object
/// plus the copula fit diagnostics and the number of table rows whose
/// pseudo-observation fell on the unit-cube boundary and was excluded from
/// the copula fit.
#[derive(Debug, Clone)]
pub struct JointFit {
    pub posterior: MetaTPosterior,
    /// `None` for one-parameter models (no dependence to fit).
    pub copula: Option<TCopulaFit>,
    pub pseudo_dropped: usize,
}

/// KDE support for one parameter dimension. Jittering shifts a discrete
/// dimension's support down by one (θ = θ* − u with u ∈ (0,1)); a fully
/// unbounded dimension needs no reflection.
fn kde_bounds(dim: &DimSpec) -> Option<(f64, f64)> {
    let lo = match dim.kind {
        DimKind::DiscreteInteger => dim.lo - 1.0,
        DimKind::Continuous => dim.lo,
    };
    if lo.is_infinite() && dim.hi.is_infinite() {
        None
    } else {
        Some((lo, dim.hi))
    }
}

/// Builds the joint posterior for `model_index` from its per-parameter
/// forests: weighted marginal CDFs, marginal densities by `method`,
/// pseudo-observations at the table's own parameter draws, and (for two or
/// more parameters) a fitted t-copula. `space`, when given, supplies support
/// bounds for KDE boundary reflection.
pub fn fit_joint(
    forests: &[Forest],
    table: &ReferenceTable,
    model_index: u32,
    s_x: &[f64],
    method: MarginalMethod,
    space: Option<&ParamSpace>,
) -> Result<JointFit> {
    let m = model_index as usize;
    if m == 0 || m > table.meta().models.len() {
        return Err(Error::InvalidArgument(format!(
            "model index {model_index} outside 1..={}",
            table.meta().models.len()
        )));
    }
    let meta = &table.meta().models[m - 1];
    let d = meta.param_names.len();
    if forests.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} forests vs {} parameters of model '{}'",
            forests.len(),
            d,
            meta.name
        )));
    }
    if let Some(sp) = space {
        if sp.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "parameter space has {} dimensions, model '{}' has {}",
                sp.dim(),
                meta.name,
                d
            )));
        }
    }

    let mut columns = Vec::with_capacity(d);
    let mut cdfs = Vec::with_capacity(d);
    let mut marginals = Vec::with_capacity(d);
    for (k, forest) in forests.iter().enumerate() {
        let y = table.theta_column(model_index, k)?;
        let w = forest.weights(s_x)?;
        cdfs.push(SortedWeighted::new(&y, w.as_slice())?);
        let marginal = match method {
            MarginalMethod::Histogram => histogram_density(&y, w.as_slice())?,
            MarginalMethod::Kde => {
                let h = sj_bandwidth(&y, w.as_slice())?;
                let bounds = space.and_then(|sp| kde_bounds(&sp.dims()[k]));
                weighted_kde(&y, w.as_slice(), h, bounds)?
            }
        };
        marginals.push(marginal);
        columns.push(y);
    }

    let (copula, pseudo_dropped) = if d >= 2 {
        let u = PseudoObsMatrix::from_cdfs(&cdfs, &columns)?;
        let dropped = u.dropped_count();
        (Some(fit_t_copula(&u)?), dropped)
    } else {
        (None, 0)
    };
    let params = copula.as_ref().map(|fit| fit.params.clone());
    Ok(JointFit {
        posterior: MetaTPosterior::new(marginals, cdfs, params)?,
        copula,
        pseudo_dropped,
    })
}

/// Result of the candidate-scan point-estimate search.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMle {
    /// Candidate maximizing the joint posterior density.
    pub mode: Vec<f64>,
    pub mode_index: usize,
    pub mode_log_density: f64,
    /// Candidate maximizing the posterior-to-prior density ratio.
    pub mle: Vec<f64>,
    pub mle_index: usize,
    pub mle_log_ratio: f64,
}

/// First index attaining the maximum of `scores`; `None` when every score is
/// −∞ (no candidate carries density).
pub(crate) fn argmax_lowest(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Scans a finite candidate set for the posterior mode (argmax of the joint
/// posterior log-density) and the maximum-likelihood estimate (argmax of the
/// posterior-to-prior log-ratio). Ties resolve to the lowest candidate
/// index; candidates scoring −∞ never win. Errors if every candidate scores
/// −∞ for either target.
pub fn mode_mle_from_candidates(
    post: &MetaTPosterior,
    prior: &PriorSpec,
    candidates: &[Vec<f64>],
) -> Result<ModeMle> {
    let d = post.dim();
    if prior.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "prior has {} dimensions, posterior has {}",
            prior.dim(),
            d
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set is empty".into()));
    }
    for (j, c) in candidates.iter().enumerate() {
        if c.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "candidate {j} has {} coordinates, expected {d}",
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "candidate {j} has a non-finite coordinate"
            )));
        }
    }

    let post_scores: Vec<f64> =
        candidates.par_iter().map(|c| post.log_density(c)).collect();
    let ratio_scores: Vec<f64> = candidates
        .par_iter()
        .zip(post_scores.par_iter())
        .map(|(c, &lp)| {
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            match prior_log_density(prior, c) {
                Ok(pr) if pr.is_finite() => lp - pr,
                // Outside the prior support the likelihood ratio is
                // undefined; such a candidate never wins.
                _ => f64::NEG_INFINITY,
            }
        })
        .collect();

    let mode_index = argmax_lowest(&post_scores).ok_or_else(|| {
        Error::Degenerate("every candidate has zero posterior density".into())
    })?;
    let mle_index = argmax_lowest(&ratio_scores).ok_or_else(|| {
        Error::Degenerate(
            "every candidate has zero posterior-to-prior density ratio".into(),
        )
    })?;
    Ok(ModeMle {
        mode: candidates[mode_index].clone(),
        mode_index,
        mode_log_density: post_scores[mode_index],
        mle: candidates[mle_index].clone(),
        mle_index,
        mle_log_ratio: ratio_scores[mle_index],
    })
}

/// Candidate-scan mode/MLE over `n_plus` fresh draws from the joint
/// posterior itself. Equivalent to drawing the candidates with
/// [`MetaTPosterior::sample`] and calling [`mode_mle_from_candidates`].
pub fn mode_mle_extra_draws<R: rand::Rng + ?Sized>(
    post: &MetaTPosterior,
    prior: &PriorSpec,
    n_plus: usize,
    rng: &mut R,
) -> Result<ModeMle> {
    if n_plus == 0 {
        return Err(Error::InvalidArgument(
            "extra draw count must be at least 1".into(),
        ));
    }
    let candidates = post.sample(n_plus, rng);
    mode_mle_from_candidates(post, prior, &candidates)
}

/// Outcome of forest-classifier model selection.
#[derive(Debug, Clone)]
pub struct ModelChoice {
    /// Posterior model probabilities, aligned with the table's model order.
    pub probs: Vec<f64>,
    /// 1-based index of the highest-probability model (ties → lowest index).
    pub best: u32,
    /// The table restricted to the chosen model's rows.
    pub reduced: ReferenceTable,
}

/// Selects among the table's models at the observed summary vector: a
/// classification forest on (summaries → model label) yields weights at
/// `s_x`, the weighted label frequencies are the model probabilities, and
/// the argmax (ties → lowest index) picks the model. Requires at least two
/// models, each with at least one retained row.
pub fn select_model(
    table: &ReferenceTable,
    s_x: &[f64],
    cfg: &ForestConfig,
) -> Result<ModelChoice> {
    let m_count = table.meta().models.len();
    if m_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "model selection needs at least two models, table has {m_count}"
        )));
    }
    let labels: Vec<usize> =
        table.model_labels().iter().map(|&l| l as usize).collect();
    for (m, meta) in table.meta().models.iter().enumerate() {
        if !labels.contains(&(m + 1)) {
            return Err(Error::Empty(format!(
                "model '{}' has no retained rows to train on",
                meta.name
            )));
        }
    }
    let x = table.summaries_matrix();
    let forest = train_classifier(&x, &labels, m_count, cfg)?;
    let w = forest.weights(s_x)?;
    let probs = class_probs(&labels, w.as_slice(), m_count)?;
    let best = argmax_lowest(&probs)
        .ok_or_else(|| Error::Degenerate("all model probabilities vanish".into()))?
        as u32
        + 1;
    let reduced = table.restrict_to_model(best)?;
    Ok(ModelChoice { probs, best, reduced })
}

/// One parameter's row in the posterior report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamReport {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q97_5: f64,
    pub mode: f64,
    pub mle: f64,
}

/// Fitted copula parameters in plain-vector form.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CopulaReport {
    /// Degrees of freedom ν.
    pub nu: f64,
    /// Correlation matrix ρ, row by row.
    pub rho: Vec<Vec<f64>>,
    /// Whether ν landed at the Gaussian-limit bound during fitting.
    pub gaussian_limit: bool,
}

/// Full posterior report for one observed dataset: chosen model, optional
/// model probabilities, per-parameter summaries and point estimates, the
/// fitted copula, and run diagnostics.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PosteriorReport {
    /// Method label, e.g. "copulaABCdrf" or a rejection-sampler variant.
    pub method: String,
    pub model_name: String,
    /// 1-based index of the reported model within the table's model list.
    pub model_index: u32,
    /// Posterior model probabilities (table model order); present only when
    /// the table holds two or more models.
    pub model_probs: Option<Vec<f64>>,
    pub params: Vec<ParamReport>,
    /// `None` for one-parameter models.
    pub copula: Option<CopulaReport>,
    /// Simulation-stage dropped-row counts, one per model.
    pub dropped_rows: Vec<u64>,
    /// Rows excluded from the copula fit for boundary pseudo-observations.
    pub pseudo_obs_dropped: u64,
    /// Size of the candidate set scanned for the mode and MLE.
    pub candidate_count: u64,
}

impl PosteriorReport {
    /// Internal-consistency checks: ordered quantiles bracketing the median,
    /// nonnegative spreads, and model probabilities forming a distribution.
    pub fn validate(&self) -> Result<()> {
        for p in &self.params {
            if !(p.sd >= 0.0) {
                return Err(Error::Degenerate(format!(
                    "parameter '{}' has negative or NaN s.d. {}",
                    p.name, p.sd
                )));
            }
            let q = [p.q2_5, p.q25, p.median, p.q75, p.q97_5];
            if q.iter().any(|v| !v.is_finite()) || q.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Degenerate(format!(
                    "parameter '{}' has disordered quantiles {q:?}",
                    p.name
                )));
            }
        }
        if let Some(probs) = &self.model_probs {
            if probs.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
                return Err(Error::Degenerate(format!(
                    "model probabilities {probs:?} outside [0, 1]"
                )));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-8 {
                return Err(Error::Degenerate(format!(
                    "model probabilities sum to {total}, not 1"
                )));
            }
        }
        Ok(())
    }

    /// CSV rendering: one row per parameter under a fixed header.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("parameter,mean,median,mode,MLE,s.d.,q2.5,q25,q75,q97.5\n");
        for p in &self.params {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                p.name, p.mean, p.median, p.mode, p.mle, p.sd, p.q2_5, p.q25, p.q75, p.q97_5
            ));
        }
        out
    }

    /// Pretty-printed JSON rendering of the full report.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))
    }
}

/// Knobs for the end-to-end analysis driver.
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    /// Forest settings shared by the selection classifier and every
    /// per-parameter forest; `forest.seed` is the master seed for the run.
    pub forest: ForestConfig,
    /// Marginal estimator; `None` picks by dimension (histogram below six).
    pub marginal: Option<MarginalMethod>,
    /// Extra joint-posterior draws appended to the mode/MLE candidate set;
    /// `None` scans only the table's own parameter draws.
    pub extra_draws: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { forest: ForestConfig::default(), marginal: None, extra_draws: None }
    }
}

/// Converts the copula correlation matrix to row-major nested vectors.
fn rho_rows(rho: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..rho.nrows())
        .map(|i| (0..rho.ncols()).map(|j| rho[(i, j)]).collect())
        .collect()
}

/// A posterior report plus the weighted atoms behind its marginals, for
/// downstream metric computation (e.g. KS distances against an exact CDF).
#[derive(Debug, Clone)]
pub struct AnalysisArtifacts {
    pub report: PosteriorReport,
    /// Per-parameter atom values (the reduced table's parameter columns).
    pub atoms: Vec<Vec<f64>>,
    /// Per-parameter weights over those atoms.
    pub weights: Vec<Vec<f64>>,
}

/// Runs the full inference chain for one observed summary vector: model
/// selection when the table holds several models, one forest per parameter
/// of the chosen model, marginal summaries, the joint meta-t posterior, and
/// the candidate-scan mode and MLE (candidates are the reduced table's
/// parameter draws, plus `extra_draws` fresh posterior draws when asked).
///
/// Seed layout, from `cfg.forest.seed` as master: stream 0 seeds the
/// selection classifier, streams 1..=d the per-parameter forests, and
/// stream d+1 the extra-draw sampler.
pub fn analyze(
    table: &ReferenceTable,
    models: &[ModelSpec],
    s_x: &[f64],
    cfg: &AnalysisConfig,
) -> Result<PosteriorReport> {
    Ok(analyze_detailed(table, models, s_x, cfg)?.report)
}

/// [`analyze`], also returning the per-parameter weighted atoms.
pub fn analyze_detailed(
    table: &ReferenceTable,
    models: &[ModelSpec],
    s_x: &[f64],
    cfg: &AnalysisConfig,
) -> Result<AnalysisArtifacts> {
    let meta = table.meta();
    if models.len() != meta.models.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} model specs vs {} models in the table",
            models.len(),
            meta.models.len()
        )));
    }
    for (spec, m) in models.iter().zip(&meta.models) {
        if spec.name != m.name {
            return Err(Error::InvalidArgument(format!(
                "model spec '{}' does not match table model '{}'",
                spec.name, m.name
            )));
        }
    }
    if s_x.len() != meta.summary_names.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed summaries vs {} summary columns",
            s_x.len(),
            meta.summary_names.len()
        )));
    }
    if s_x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "observed summary vector has a non-finite entry".into(),
        ));
    }

    let master = cfg.forest.seed;
    let (model_probs, best, reduced) = if models.len() > 1 {
        let sel_cfg = ForestConfig { seed: derive_seed(master, 0), ..cfg.forest.clone() };
        let choice = select_model(table, s_x, &sel_cfg)?;
        (Some(choice.probs), choice.best, choice.reduced)
    } else {
        (None, 1, table.restrict_to_model(1)?)
    };

    let model = &models[(best - 1) as usize];
    let d = model.dim();
    let x = reduced.summaries_matrix();
    let mut forests = Vec::with_capacity(d);
    for k in 0..d {
        let y = reduced.theta_column(best, k)?;
        let fc = ForestConfig {
            seed: derive_seed(master, (k + 1) as u64),
            ..cfg.forest.clone()
        };
        forests.push(train(&x, &y, &fc)?);
    }

    let mut atoms = Vec::with_capacity(d);
    let mut weight_cols = Vec::with_capacity(d);
    for (k, forest) in forests.iter().enumerate() {
        atoms.push(reduced.theta_column(best, k)?);
        weight_cols.push(forest.weights(s_x)?.into_vec());
    }

    let summaries = summarize(&forests, &reduced, best, s_x)?;
    let method = cfg.marginal.unwrap_or_else(|| MarginalMethod::default_for_dim(d));
    let fit = fit_joint(&forests, &reduced, best, s_x, method, Some(&model.space))?;

    let mut candidates: Vec<Vec<f64>> =
        reduced.rows().iter().map(|r| r.theta.clone()).collect();
    if let Some(n_plus) = cfg.extra_draws {
        if n_plus == 0 {
            return Err(Error::InvalidArgument(
                "extra draw count must be at least 1".into(),
            ));
        }
        let mut rng = stream_rng(master, (d + 1) as u64);
        candidates.extend(fit.posterior.sample(n_plus, &mut rng));
    }
    let mm = mode_mle_from_candidates(&fit.posterior, &model.prior, &candidates)?;

    let params = summaries
        .iter()
        .enumerate()
        .map(|(k, s)| ParamReport {
            name: s.name.clone(),
            mean: s.mean,
            sd: s.sd,
            q2_5: s.quantiles[0],
            q25: s.quantiles[1],
            median: s.quantiles[2],
            q75: s.quantiles[3],
            q97_5: s.quantiles[4],
            mode: mm.mode[k],
            mle: mm.mle[k],
        })
        .collect();
    let copula = fit.copula.as_ref().map(|c| CopulaReport {
        nu: c.params.nu(),
        rho: rho_rows(c.params.rho()),
        gaussian_limit: c.gaussian_limit,
    });

    let report = PosteriorReport {
        method: "copulaABCdrf".into(),
        model_name: model.name.clone(),
        model_index: best,
        model_probs,
        params,
        copula,
        dropped_rows: meta.dropped.clone(),
        pseudo_obs_dropped: fit.pseudo_dropped as u64,
        candidate_count: candidates.len() as u64,
    };
    report.validate()?;
    Ok(AnalysisArtifacts { report, atoms, weights: weight_cols })
}
