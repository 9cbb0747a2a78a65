//! Evaluation harness: weighted Kolmogorov–Smirnov distance and test
//! statistic, exact-posterior oracles for the benchmark models (conjugate
//! gamma, dense two-dimensional grids), and a replicated-experiment driver
//! that runs the inference methods side by side on simulated data and
//! aggregates accuracy metrics into mean (sd) tables.

use std::f64::consts::{FRAC_1_SQRT_2, LN_10, LN_2, SQRT_2};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

use crate::drf::ForestConfig;
use crate::inference::{analyze_detailed, AnalysisConfig, MarginalMethod};
use crate::models::{Dataset, ModelKind, ModelSpec};
use crate::reftable;
use crate::rejection::{rejection_detailed, RejectionOptions};
use crate::rng::{derive_seed, stream_rng};
use crate::{Error, Result};

/// 95th-percentile critical value for the finite-sample KS test statistic.
pub const KS_CRITICAL_95: f64 = 1.358;
/// 99th-percentile critical value for the finite-sample KS test statistic.
pub const KS_CRITICAL_99: f64 = 1.628;

/// Weighted one-sample Kolmogorov–Smirnov comparison of an atomic
/// distribution against a reference CDF.
///
/// Returns `(distance, test_statistic)`. The distance is the supremum over
/// atom locations `t` of the larger gap between `f0(t)` and the weighted
/// empirical CDF evaluated from the right and from the left. The test
/// statistic multiplies the distance by the finite-sample factor
/// `√N + 0.12 + 0.11/√N`, where `N = 1/Σwᵢ²` is the effective sample size of
/// the (normalized) weights; compare it against [`KS_CRITICAL_95`] or
/// [`KS_CRITICAL_99`]. Weights need not be pre-normalized; they must be
/// nonnegative, finite, and not all zero.
pub fn weighted_ks(atoms: &[f64], w: &[f64], f0: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if atoms.is_empty() {
        return Err(Error::Empty("weighted KS needs at least one atom".into()));
    }
    if atoms.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} atoms but {} weights",
            atoms.len(),
            w.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&t, &wi)) in atoms.iter().zip(w).enumerate() {
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("atom {i} is {t}")));
        }
        if !wi.is_finite() || wi < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "weight {i} is {wi}; weights must be finite and nonnegative"
            )));
        }
        total += wi;
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Degenerate(format!("weights sum to {total}")));
    }

    let mut idx: Vec<usize> = (0..atoms.len()).collect();
    idx.sort_unstable_by(|&a, &b| atoms[a].total_cmp(&atoms[b]));
    // Merge equal atoms so each location is evaluated once; the left limit at
    // a location is the cumulative weight strictly below it.
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for &i in &idx {
        let (t, wi) = (atoms[i], w[i] / total);
        match points.last_mut() {
            Some((last, acc)) if *last == t => *acc += wi,
            _ => points.push((t, wi)),
        }
    }

    let mut distance = 0.0f64;
    let mut below = 0.0f64;
    let mut cum = 0.0f64;
    for &(t, wi) in &points {
        // Nonnegative summands overshoot 1 only by rounding; a CDF may not.
        cum = (cum + wi).min(1.0);
        let f = f0(t);
        if !f.is_finite() || !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidArgument(format!(
                "reference CDF returned {f} at {t}; a CDF maps into [0, 1]"
            )));
        }
        distance = distance.max((cum - f).abs()).max((below - f).abs());
        below = cum;
    }

    let n_eff = 1.0 / w.iter().map(|&wi| (wi / total) * (wi / total)).sum::<f64>();
    let root = n_eff.sqrt();
    Ok((distance, (root + 0.12 + 0.11 / root) * distance))
}

/// Gamma posterior for a Poisson rate under a conjugate gamma prior.
#[derive(Debug, Clone, Copy)]
pub struct GammaPosterior {
    shape: f64,
    rate: f64,
    dist: Gamma,
}

impl GammaPosterior {
    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Posterior mean, shape/rate.
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// Posterior standard deviation, √shape/rate.
    pub fn sd(&self) -> f64 {
        self.shape.sqrt() / self.rate
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t > 0.0 {
            self.dist.pdf(t)
        } else {
            0.0
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t > 0.0 {
            self.dist.cdf(t)
        } else {
            0.0
        }
    }

    /// Quantile (inverse CDF) at level `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "quantile level {p} outside (0, 1)"
            )));
        }
        Ok(self.dist.inverse_cdf(p))
    }
}

/// Exact posterior for a Poisson rate: counts x₁..x_n with a Gamma(a, b)
/// prior (shape a, rate b) give Gamma(a + Σx, b + n).
pub fn exact_poisson_posterior(counts: &[f64], a: f64, b: f64) -> Result<GammaPosterior> {
    if counts.is_empty() {
        return Err(Error::Empty(
            "the conjugate update needs at least one count".into(),
        ));
    }
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "prior shape {a} and rate {b} must be positive and finite"
        )));
    }
    let mut sum = 0.0;
    for (i, &x) in counts.iter().enumerate() {
        if !x.is_finite() || x < 0.0 || x.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "count {i} is {x}; counts must be nonnegative integers"
            )));
        }
        sum += x;
    }
    let shape = a + sum;
    let rate = b + counts.len() as f64;
    let dist = Gamma::new(shape, rate)
        .map_err(|e| Error::Numeric(format!("gamma(shape {shape}, rate {rate}): {e}")))?;
    Ok(GammaPosterior { shape, rate, dist })
}

/// Grid points per axis used by the posterior-grid constructors.
pub const GRID_SIDE: usize = 400;

/// Posterior over a rectangle, numerically normalized on a grid of cell
/// centers. Marginal CDFs are step functions over the centers; with
/// [`GRID_SIDE`] points per axis the discretization error of a marginal CDF
/// stays below one cell's mass.
#[derive(Debug, Clone)]
pub struct GridPosterior2d {
    xs: Vec<f64>,
    ys: Vec<f64>,
    marg_x: Vec<f64>,
    marg_y: Vec<f64>,
    cum_x: Vec<f64>,
    cum_y: Vec<f64>,
}

impl GridPosterior2d {
    /// Evenly spaced cell centers covering `range` with `side` cells.
    pub fn axis_centers(range: (f64, f64), side: usize) -> Vec<f64> {
        let (lo, hi) = range;
        let width = (hi - lo) / side as f64;
        (0..side).map(|i| lo + (i as f64 + 0.5) * width).collect()
    }

    /// Normalize `exp(log_density)` over the rectangle and keep both
    /// marginals. The log density may return −∞ (zero density) but not NaN
    /// or +∞, and must not vanish on the whole grid.
    pub fn from_log_density(
        x_range: (f64, f64),
        y_range: (f64, f64),
        side: usize,
        log_density: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidArgument(
                "a grid needs at least two cells per axis".into(),
            ));
        }
        for (lo, hi) in [x_range, y_range] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "grid range ({lo}, {hi}) must be finite with lo < hi"
                )));
            }
        }
        let xs = Self::axis_centers(x_range, side);
        let ys = Self::axis_centers(y_range, side);

        let (f, ys_ref) = (&log_density, &ys);
        let logs: Vec<f64> = xs
            .par_iter()
            .flat_map_iter(move |&x| ys_ref.iter().map(move |&y| f(x, y)))
            .collect();
        let mut max = f64::NEG_INFINITY;
        for &l in &logs {
            if l.is_nan() || l == f64::INFINITY {
                return Err(Error::Numeric(format!("log density returned {l}")));
            }
            if l > max {
                max = l;
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::Degenerate(
                "the density vanishes on the whole grid".into(),
            ));
        }

        let mut mass: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = mass.iter().sum();
        for v in &mut mass {
            *v /= total;
        }
        let mut marg_x = vec![0.0; side];
        let mut marg_y = vec![0.0; side];
        for i in 0..side {
            for j in 0..side {
                let v = mass[i * side + j];
                marg_x[i] += v;
                marg_y[j] += v;
            }
        }
        let cum_x = running_cdf(&marg_x);
        let cum_y = running_cdf(&marg_y);
        Ok(GridPosterior2d {
            xs,
            ys,
            marg_x,
            marg_y,
            cum_x,
            cum_y,
        })
    }

    /// First-axis cell centers (ascending).
    pub fn x_atoms(&self) -> &[f64] {
        &self.xs
    }

    /// First-axis marginal masses (same order, summing to one).
    pub fn x_weights(&self) -> &[f64] {
        &self.marg_x
    }

    pub fn y_atoms(&self) -> &[f64] {
        &self.ys
    }

    pub fn y_weights(&self) -> &[f64] {
        &self.marg_y
    }

    pub fn mean_x(&self) -> f64 {
        self.xs.iter().zip(&self.marg_x).map(|(x, w)| x * w).sum()
    }

    pub fn mean_y(&self) -> f64 {
        self.ys.iter().zip(&self.marg_y).map(|(y, w)| y * w).sum()
    }

    /// First-axis marginal CDF (right-continuous step function).
    pub fn cdf_x(&self, t: f64) -> f64 {
        step_cdf(&self.xs, &self.cum_x, t)
    }

    /// Second-axis marginal CDF.
    pub fn cdf_y(&self, t: f64) -> f64 {
        step_cdf(&self.ys, &self.cum_y, t)
    }
}

fn running_cdf(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(w.len());
    for &v in w {
        acc += v;
        out.push(acc.min(1.0));
    }
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

fn step_cdf(atoms: &[f64], cum: &[f64], t: f64) -> f64 {
    let k = atoms.partition_point(|&c| c <= t);
    if k == 0 {
        0.0
    } else {
        cum[k - 1]
    }
}

/// Log likelihood of the location parameter of the equal-weight scale
/// mixture ½N(μ, 1) + ½N(μ, 0.01) given observations `locs`.
fn location_log_lik(locs: &[f64], mu: f64) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
    locs.iter()
        .map(|&x| {
            let z = x - mu;
            let wide = -0.5 * z * z - HALF_LN_2PI;
            let narrow = -50.0 * z * z - HALF_LN_2PI + LN_10;
            let (hi, lo) = if wide >= narrow {
                (wide, narrow)
            } else {
                (narrow, wide)
            };
            hi + (lo - hi).exp().ln_1p() - LN_2
        })
        .sum()
}

/// Exact two-dimensional posterior for the Poisson/scale-mixture benchmark
/// on a [`GRID_SIDE`]² grid: the first axis is the Poisson rate λ (conjugate
/// Gamma(½, 0.1) prior), the second the mixture location μ (flat prior on
/// [−10, 10]). The λ range covers the conjugate posterior to ±10 sd; the μ
/// range is the likelihood's high-density region found by a coarse scan.
pub fn poisson_mixture_grid(counts: &[f64], locs: &[f64]) -> Result<GridPosterior2d> {
    if counts.len() != locs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} counts but {} locations",
            counts.len(),
            locs.len()
        )));
    }
    let conj = exact_poisson_posterior(counts, 0.5, 0.1)?;
    for (i, &x) in locs.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::InvalidArgument(format!("location {i} is {x}")));
        }
    }
    let n = counts.len() as f64;
    let sum_x: f64 = counts.iter().sum();

    let lam_lo = (conj.mean() - 10.0 * conj.sd()).max(0.0);
    let lam_hi = conj.mean() + 10.0 * conj.sd();

    // The location posterior can be far narrower than its [−10, 10] support
    // (down to sd 0.1/√n); scan the log likelihood and keep the region
    // within 30 nats of its peak so the grid resolves it.
    let scan = 4000usize;
    let coarse: Vec<(f64, f64)> = (0..=scan)
        .map(|k| {
            let mu = -10.0 + 20.0 * k as f64 / scan as f64;
            (mu, location_log_lik(locs, mu))
        })
        .collect();
    let peak = coarse.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let threshold = peak - 30.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(mu, v) in &coarse {
        if v >= threshold {
            lo = lo.min(mu);
            hi = hi.max(mu);
        }
    }
    let pad = 20.0 / scan as f64;
    let mu_lo = (lo - pad).max(-10.0);
    let mu_hi = (hi + pad).min(10.0);

    // The location term depends only on μ: precompute it per column instead
    // of re-summing over the data in every one of the side² cells.
    let ys = GridPosterior2d::axis_centers((mu_lo, mu_hi), GRID_SIDE);
    let loc_ll: Vec<f64> = ys.par_iter().map(|&mu| location_log_lik(locs, mu)).collect();
    GridPosterior2d::from_log_density((lam_lo, lam_hi), (mu_lo, mu_hi), GRID_SIDE, |lam, mu| {
        let rate_part = if lam > 0.0 {
            (sum_x - 0.5) * lam.ln() - (n + 0.1) * lam
        } else {
            f64::NEG_INFINITY
        };
        let j = ys.partition_point(|&c| c < mu).min(ys.len() - 1);
        rate_part + loc_ll[j]
    })
}

/// Exact posterior for the first two coordinates of the high-dimensional
/// twisted-normal benchmark given its single observation `(x1, x2, …)`.
///
/// The prior bends θ₂ around the parabola b·(θ₁² − 100) and the likelihood
/// is N(θ, I); coordinates beyond the second are independent of the first
/// two with posterior N(x_k/3, ⅓) and take no part in the grid. The θ₁
/// range is the high-density region of the θ₂-integrated posterior found by
/// a coarse scan, so distant curvature modes are covered when present.
pub fn twisted_grid(b: f64, x1: f64, x2: f64) -> Result<GridPosterior2d> {
    for (name, v) in [("b", b), ("x1", x1), ("x2", x2)] {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} is {v}")));
        }
    }
    // θ₂ | θ₁ is N((m + x₂)/2, ½) with m = b(θ₁² − 100); integrating θ₂ out
    // leaves −θ₁²/200 − (x₁−θ₁)²/2 − (m−x₂)²/4 up to a constant.
    let reduced = |t1: f64| {
        let m = b * (t1 * t1 - 100.0);
        -t1 * t1 / 200.0 - 0.5 * (x1 - t1) * (x1 - t1) - 0.25 * (m - x2) * (m - x2)
    };
    let scan_lo = (-30.0f64).min(x1 - 6.0);
    let scan_hi = (30.0f64).max(x1 + 6.0);
    let scan = 6000usize;
    let coarse: Vec<(f64, f64)> = (0..=scan)
        .map(|k| {
            let t1 = scan_lo + (scan_hi - scan_lo) * k as f64 / scan as f64;
            (t1, reduced(t1))
        })
        .collect();
    let peak = coarse.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let threshold = peak - 30.0;
    let mut t1_lo = f64::INFINITY;
    let mut t1_hi = f64::NEG_INFINITY;
    for &(t1, v) in &coarse {
        if v >= threshold {
            t1_lo = t1_lo.min(t1);
            t1_hi = t1_hi.max(t1);
        }
    }
    let pad = (scan_hi - scan_lo) / scan as f64;
    t1_lo -= pad;
    t1_hi += pad;

    // Cover every conditional θ₂ mean over the retained θ₁ range to ±6
    // conditional sd.
    let mut c_lo = f64::INFINITY;
    let mut c_hi = f64::NEG_INFINITY;
    for k in 0..=400 {
        let t1 = t1_lo + (t1_hi - t1_lo) * k as f64 / 400.0;
        let c = 0.5 * (b * (t1 * t1 - 100.0) + x2);
        c_lo = c_lo.min(c);
        c_hi = c_hi.max(c);
    }
    let t2_lo = c_lo - 6.0 * FRAC_1_SQRT_2;
    let t2_hi = c_hi + 6.0 * FRAC_1_SQRT_2;

    GridPosterior2d::from_log_density((t1_lo, t1_hi), (t2_lo, t2_hi), GRID_SIDE, |t1, t2| {
        let m = b * (t1 * t1 - 100.0);
        -t1 * t1 / 200.0
            - 0.5 * (t2 - m) * (t2 - m)
            - 0.5 * (x1 - t1) * (x1 - t1)
            - 0.5 * (x2 - t2) * (x2 - t2)
    })
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(z / SQRT_2))
}

/// Inference method run inside a replicated experiment.
#[derive(Debug, Clone)]
pub enum MethodSpec {
    /// Full pipeline: per-parameter forests, copula joint, mode/MLE.
    CopulaAbcDrf,
    /// Nearest-neighbor rejection with the given options; the options'
    /// forest settings are replaced by the experiment's per-replica forest
    /// configuration before each run.
    Rejection(RejectionOptions),
}

impl MethodSpec {
    /// Report tag this method produces.
    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::CopulaAbcDrf => "copulaABCdrf",
            MethodSpec::Rejection(opts) => crate::rejection::method_label(opts),
        }
    }
}

/// Replicated-experiment description: one generative model, the true
/// parameter, data and table sizes, and the methods to score.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// True parameter θ₀ generating each replica's observed data.
    pub truth: Vec<f64>,
    /// Observed-data size n (rows for iid models, nodes for networks).
    pub n_obs: usize,
    /// Simulated-dataset size per reference-table row.
    pub n_sim: usize,
    /// Reference-table rows N.
    pub n_rows: usize,
    pub replicas: usize,
    pub methods: Vec<MethodSpec>,
    /// Forest settings; the seed field is re-derived per replica and method.
    pub forest: ForestConfig,
    /// Marginal estimator override for the full pipeline.
    pub marginal: Option<MarginalMethod>,
    /// Extra joint draws for the full pipeline's mode/MLE candidate set.
    pub extra_draws: Option<usize>,
    /// Master seed; replica r derives its own seed family from it.
    pub seed: u64,
}

/// Summary of an experiment configuration embedded in every metrics bundle
/// so a run can be reproduced from its output alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub model: String,
    pub truth: Vec<f64>,
    pub param_names: Vec<String>,
    pub n_obs: usize,
    pub n_sim: usize,
    pub n_rows: usize,
    pub replicas: usize,
    pub methods: Vec<String>,
    pub trees: usize,
    pub min_leaf: usize,
    pub marginal: Option<String>,
    pub extra_draws: Option<usize>,
    pub seed: u64,
}

impl ConfigEcho {
    fn new(cfg: &ExperimentConfig) -> Self {
        ConfigEcho {
            model: cfg.model.name.clone(),
            truth: cfg.truth.clone(),
            param_names: cfg.model.space.names().to_vec(),
            n_obs: cfg.n_obs,
            n_sim: cfg.n_sim,
            n_rows: cfg.n_rows,
            replicas: cfg.replicas,
            methods: cfg.methods.iter().map(|m| m.label().to_string()).collect(),
            trees: cfg.forest.trees,
            min_leaf: cfg.forest.min_leaf,
            marginal: cfg.marginal.map(|m| {
                match m {
                    MarginalMethod::Histogram => "histogram",
                    MarginalMethod::Kde => "kde",
                }
                .to_string()
            }),
            extra_draws: cfg.extra_draws,
            seed: cfg.seed,
        }
    }
}

/// Scores of one method on one parameter in one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMetrics {
    pub name: String,
    pub estimate_mean: f64,
    pub estimate_median: f64,
    pub estimate_mode: f64,
    pub estimate_mle: f64,
    /// |posterior mean − truth|.
    pub abs_error: f64,
    /// (posterior mean − truth)².
    pub sq_error: f64,
    /// Truth inside the central 95% interval.
    pub cover95: bool,
    /// Truth inside the interquartile (50%) interval.
    pub cover50: bool,
    /// Weighted KS distance to the exact marginal, where an oracle exists.
    pub ks_distance: Option<f64>,
    /// Matching KS test statistic.
    pub ks_stat: Option<f64>,
}

/// One method's scores on one simulated replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: usize,
    pub method: String,
    /// Replica-level seed every stream of this run derives from.
    pub seed: u64,
    /// Wall-clock method runtime. Kept out of the aggregate CSV so that
    /// output is identical across machines and thread counts.
    pub runtime_secs: f64,
    pub params: Vec<ParamMetrics>,
}

/// Per-replica metric records with the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaMetrics {
    pub config: ConfigEcho,
    pub records: Vec<ReplicaRecord>,
}

/// One aggregated cell: the mean over replicas and, with two or more
/// replicas, the sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub parameter: String,
    pub statistic: String,
    pub mean: f64,
    pub sd: Option<f64>,
}

fn mean_sd(vals: &[f64]) -> (f64, Option<f64>) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        (mean, None)
    } else {
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, Some(var.sqrt()))
    }
}

impl ReplicaMetrics {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Mean (sd) of every statistic, grouped by method and parameter.
    /// Methods appear in first-recorded order, parameters in model order,
    /// statistics in a fixed list; rows for the KS columns appear only where
    /// an exact-marginal oracle supplied them.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut methods: Vec<&str> = Vec::new();
        for r in &self.records {
            if !methods.iter().any(|m| *m == r.method) {
                methods.push(&r.method);
            }
        }
        let mut rows = Vec::new();
        for method in methods {
            let recs: Vec<&ReplicaRecord> =
                self.records.iter().filter(|r| r.method == method).collect();
            let n_params = recs[0].params.len();
            for pi in 0..n_params {
                let cells: Vec<&ParamMetrics> = recs.iter().map(|r| &r.params[pi]).collect();
                let name = &cells[0].name;
                let mut push = |stat: &str, vals: Vec<f64>| {
                    if vals.is_empty() {
                        return;
                    }
                    let (mean, sd) = mean_sd(&vals);
                    rows.push(AggregateRow {
                        method: method.to_string(),
                        parameter: name.clone(),
                        statistic: stat.to_string(),
                        mean,
                        sd,
                    });
                };
                push("mean", cells.iter().map(|c| c.estimate_mean).collect());
                push("median", cells.iter().map(|c| c.estimate_median).collect());
                push("mode", cells.iter().map(|c| c.estimate_mode).collect());
                push("MLE", cells.iter().map(|c| c.estimate_mle).collect());
                let mae: Vec<f64> = cells.iter().map(|c| c.abs_error).collect();
                let mse: Vec<f64> = cells.iter().map(|c| c.sq_error).collect();
                let (mae_mean, _) = mean_sd(&mae);
                let (mse_mean, _) = mean_sd(&mse);
                // Mean of squares dominates the squared mean of absolutes.
                debug_assert!(mse_mean >= mae_mean * mae_mean * (1.0 - 1e-12) - 1e-300);
                push("MAE", mae);
                push("MSE", mse);
                push(
                    "cover95",
                    cells.iter().map(|c| f64::from(c.cover95)).collect(),
                );
                push(
                    "cover50",
                    cells.iter().map(|c| f64::from(c.cover50)).collect(),
                );
                push(
                    "KS-dist",
                    cells.iter().filter_map(|c| c.ks_distance).collect(),
                );
                push("KS-stat", cells.iter().filter_map(|c| c.ks_stat).collect());
            }
        }
        rows
    }

    /// Aggregate table as CSV (`method,parameter,statistic,mean,sd`; the sd
    /// field is empty with a single replica). Contains no runtimes, so equal
    /// seeds give byte-identical output.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,parameter,statistic,mean,sd\n");
        for row in self.aggregate() {
            out.push_str(&format!(
                "{},{},{},{:.16e},",
                row.method, row.parameter, row.statistic, row.mean
            ));
            if let Some(sd) = row.sd {
                out.push_str(&format!("{sd:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Full bundle (config echo plus per-replica records, runtimes included)
    /// as pretty-printed JSON.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("metrics serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("metrics JSON: {e}"),
        })
    }
}

fn validate_config(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.truth.len() != cfg.model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "truth has {} entries for a {}-parameter model",
            cfg.truth.len(),
            cfg.model.dim()
        )));
    }
    if !cfg.model.space.contains(&cfg.truth) {
        return Err(Error::InvalidArgument(
            "the true parameter lies outside the model's parameter space".into(),
        ));
    }
    if cfg.replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be ≥ 1".into()));
    }
    if cfg.n_obs == 0 || cfg.n_sim == 0 || cfg.n_rows == 0 {
        return Err(Error::InvalidArgument(
            "n_obs, n_sim, and n_rows must all be ≥ 1".into(),
        ));
    }
    Ok(())
}

type RefCdf = Box<dyn Fn(f64) -> f64>;

/// Reference-CDF oracle per parameter for models with an exact posterior;
/// `None` entries mark parameters without one.
fn marginal_oracles(model: &ModelSpec, data: &Dataset) -> Result<Vec<Option<RefCdf>>> {
    match &model.kind {
        ModelKind::PoissonMixture => {
            let m = data.as_iid()?;
            let counts: Vec<f64> = m.column(0).collect();
            let locs: Vec<f64> = m.column(1).collect();
            let conj = exact_poisson_posterior(&counts, 0.5, 0.1)?;
            let grid = poisson_mixture_grid(&counts, &locs)?;
            Ok(vec![
                Some(Box::new(move |t| conj.cdf(t))),
                Some(Box::new(move |t| grid.cdf_y(t))),
            ])
        }
        ModelKind::TwistedGaussian { b } => {
            let m = data.as_iid()?;
            let x: Vec<f64> = (0..m.cols()).map(|j| m.get(0, j)).collect();
            let grid = Arc::new(twisted_grid(*b, x[0], x[1])?);
            let mut out: Vec<Option<RefCdf>> = Vec::with_capacity(x.len());
            let g = grid.clone();
            out.push(Some(Box::new(move |t| g.cdf_x(t))));
            out.push(Some(Box::new(move |t| grid.cdf_y(t))));
            for &xk in &x[2..] {
                // Prior N(0, ½) and unit-variance likelihood: N(x_k/3, ⅓).
                let center = xk / 3.0;
                let sd = (1.0f64 / 3.0).sqrt();
                out.push(Some(Box::new(move |t| std_normal_cdf((t - center) / sd))));
            }
            Ok(out)
        }
        _ => Ok((0..model.dim()).map(|_| None).collect()),
    }
}

fn run_replica(cfg: &ExperimentConfig, replica: usize) -> Result<Vec<ReplicaRecord>> {
    let seed_r = derive_seed(cfg.seed, replica as u64);
    let mut obs_rng = stream_rng(seed_r, 0);
    let data = cfg.model.simulate(&cfg.truth, cfg.n_obs, &mut obs_rng)?;
    let s_x = cfg.model.summaries(&data)?;
    let table = reftable::build(
        std::slice::from_ref(&cfg.model),
        &[1.0],
        cfg.n_rows,
        cfg.n_sim,
        derive_seed(seed_r, 1),
    )?;
    let oracles = marginal_oracles(&cfg.model, &data)?;

    let mut records = Vec::with_capacity(cfg.methods.len());
    for (mi, spec) in cfg.methods.iter().enumerate() {
        let started = Instant::now();
        let method_seed = derive_seed(seed_r, 2 + mi as u64);
        let artifacts = match spec {
            MethodSpec::CopulaAbcDrf => {
                let mut forest = cfg.forest.clone();
                forest.seed = method_seed;
                analyze_detailed(
                    &table,
                    std::slice::from_ref(&cfg.model),
                    &s_x,
                    &AnalysisConfig {
                        forest,
                        marginal: cfg.marginal,
                        extra_draws: cfg.extra_draws,
                    },
                )?
            }
            MethodSpec::Rejection(opts) => {
                let mut opts = opts.clone();
                opts.forest = cfg.forest.clone();
                opts.forest.seed = method_seed;
                rejection_detailed(&table, &cfg.model, 1, &s_x, &opts)?
            }
        };
        let runtime_secs = started.elapsed().as_secs_f64();

        let mut params = Vec::with_capacity(cfg.truth.len());
        for (k, truth_k) in cfg.truth.iter().enumerate() {
            let p = &artifacts.report.params[k];
            let (ks_distance, ks_stat) = match &oracles[k] {
                Some(f0) => {
                    let (d, s) = weighted_ks(&artifacts.atoms[k], &artifacts.weights[k], f0)?;
                    (Some(d), Some(s))
                }
                None => (None, None),
            };
            params.push(ParamMetrics {
                name: p.name.clone(),
                estimate_mean: p.mean,
                estimate_median: p.median,
                estimate_mode: p.mode,
                estimate_mle: p.mle,
                abs_error: (p.mean - truth_k).abs(),
                sq_error: (p.mean - truth_k) * (p.mean - truth_k),
                cover95: p.q2_5 <= *truth_k && *truth_k <= p.q97_5,
                cover50: p.q25 <= *truth_k && *truth_k <= p.q75,
                ks_distance,
                ks_stat,
            });
        }
        records.push(ReplicaRecord {
            replica,
            method: artifacts.report.method.clone(),
            seed: seed_r,
            runtime_secs,
            params,
        });
    }
    Ok(records)
}

/// Run every configured method on `replicas` fresh simulated datasets and
/// score each against the truth (and against exact marginals where an
/// oracle exists). Replicas run in parallel on independently derived seeds;
/// within a replica all methods share the same data and reference table.
pub fn replicate_experiment(cfg: &ExperimentConfig) -> Result<ReplicaMetrics> {
    validate_config(cfg)?;
    let config = ConfigEcho::new(cfg);
    if cfg.methods.is_empty() {
        return Ok(ReplicaMetrics {
            config,
            records: Vec::new(),
        });
    }
    let nested: Vec<Vec<ReplicaRecord>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| run_replica(cfg, r))
        .collect::<Result<_>>()?;
    Ok(ReplicaMetrics {
        config,
        records: nested.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::Distribution;

    #[test]
    fn single_atom_distance_is_half() {
        let (d, stat) = weighted_ks(&[2.0], &[1.0], |_| 0.5).unwrap();
        assert_relative_eq!(d, 0.5);
        assert_relative_eq!(stat, (1.0 + 0.12 + 0.11) * 0.5, max_relative = 1e-12);
    }

    #[test]
    fn uniform_weights_match_classical_ks() {
        for seed in 0..5u64 {
            let mut rng = stream_rng(9_100, seed);
            let n = 40;
            let atoms: Vec<f64> = (0..n)
                .map(|_| {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    z
                })
                .collect();
            let w = vec![1.0 / n as f64; n];
            let (d, stat) = weighted_ks(&atoms, &w, std_normal_cdf).unwrap();

            // Classical one-sample statistic computed the long way.
            let mut sorted = atoms.clone();
            sorted.sort_by(f64::total_cmp);
            let mut d_classical = 0.0f64;
            for (i, &t) in sorted.iter().enumerate() {
                let f = std_normal_cdf(t);
                let hi = (i + 1) as f64 / n as f64;
                let lo = i as f64 / n as f64;
                d_classical = d_classical.max((hi - f).abs()).max((lo - f).abs());
            }
            assert_relative_eq!(d, d_classical, max_relative = 1e-12);
            let root = (n as f64).sqrt();
            assert_relative_eq!(
                stat,
                (root + 0.12 + 0.11 / root) * d_classical,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn duplicate_atoms_merge_without_changing_the_statistic() {
        let atoms = vec![1.0, 1.0, 2.0];
        let w = vec![0.25, 0.25, 0.5];
        let merged_atoms = vec![1.0, 2.0];
        let f0 = |t: f64| ((t - 0.5) / 2.0).clamp(0.0, 1.0);
        let (d_dup, _) = weighted_ks(&atoms, &w, f0).unwrap();
        let (d_merged, _) = weighted_ks(&merged_atoms, &[0.5, 0.5], f0).unwrap();
        assert_relative_eq!(d_dup, d_merged, max_relative = 1e-12);
        assert_relative_eq!(d_dup, 0.25, max_relative = 1e-12);
    }

    #[test]
    fn null_calibration_stays_below_the_critical_value() {
        let n = 10_000usize;
        let mut below = 0usize;
        for sim in 0..200u64 {
            let mut rng = stream_rng(9_200, sim);
            let atoms: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let w = vec![1.0 / n as f64; n];
            let (_, stat) = weighted_ks(&atoms, &w, |t| t.clamp(0.0, 1.0)).unwrap();
            if stat < KS_CRITICAL_95 {
                below += 1;
            }
        }
        assert!(below >= 186, "only {below}/200 null statistics below 1.358");
    }

    #[test]
    fn weighted_ks_rejects_bad_input() {
        assert!(matches!(
            weighted_ks(&[], &[], |_| 0.5),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            weighted_ks(&[1.0, 2.0], &[1.0], |_| 0.5),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            weighted_ks(&[1.0], &[-0.5], |_| 0.5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            weighted_ks(&[f64::NAN], &[1.0], |_| 0.5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            weighted_ks(&[1.0, 2.0], &[0.0, 0.0], |_| 0.5),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            weighted_ks(&[1.0], &[1.0], |_| 1.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn conjugate_posterior_arithmetic() {
        let counts = vec![3.0; 100];
        let post = exact_poisson_posterior(&counts, 0.5, 0.1).unwrap();
        assert_relative_eq!(post.shape(), 300.5);
        assert_relative_eq!(post.rate(), 100.1);
        assert_relative_eq!(post.mean(), 300.5 / 100.1, max_relative = 1e-14);
        let q = post.quantile(0.975).unwrap();
        assert_relative_eq!(post.cdf(q), 0.975, max_relative = 1e-6);
        assert!(post.quantile(0.025).unwrap() < post.mean());
    }

    #[test]
    fn conjugate_posterior_rejects_bad_input() {
        assert!(matches!(
            exact_poisson_posterior(&[], 0.5, 0.1),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            exact_poisson_posterior(&[-1.0], 0.5, 0.1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            exact_poisson_posterior(&[2.5], 0.5, 0.1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            exact_poisson_posterior(&[f64::NAN], 0.5, 0.1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            exact_poisson_posterior(&[3.0], 0.0, 0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn gamma_cdf_matches_simpson_quadrature() {
        let counts = vec![3.0; 100];
        let post = exact_poisson_posterior(&counts, 0.5, 0.1).unwrap();
        for &t in &[2.5, 2.8, 3.0, 3.2, 3.6] {
            // Composite Simpson over [0, t].
            let steps = 100_000usize;
            let h = t / steps as f64;
            let mut acc = post.pdf(0.0) + post.pdf(t);
            for k in 1..steps {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * post.pdf(k as f64 * h);
            }
            let quad = acc * h / 3.0;
            assert!(
                (post.cdf(t) - quad).abs() < 1e-8,
                "cdf({t}) = {} vs quadrature {quad}",
                post.cdf(t)
            );
        }
    }

    /// Deterministic synthetic mixture data: half the residuals wide, half
    /// narrow, centered on `mu`.
    fn synthetic_mixture_data(n: usize, lambda_pattern: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
        let counts: Vec<f64> = (0..n)
            .map(|i| lambda_pattern[i % lambda_pattern.len()])
            .collect();
        let locs: Vec<f64> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let spread = if i % 4 < 2 { 0.9 } else { 0.07 };
                mu + sign * spread * (0.3 + 0.6 * ((i / 4) as f64 / n as f64))
            })
            .collect();
        (counts, locs)
    }

    #[test]
    fn grid_rate_marginal_matches_the_conjugate_posterior() {
        let (counts, locs) = synthetic_mixture_data(100, &[2.0, 3.0, 4.0, 3.0], 0.0);
        let conj = exact_poisson_posterior(&counts, 0.5, 0.1).unwrap();
        let grid = poisson_mixture_grid(&counts, &locs).unwrap();
        assert_relative_eq!(grid.mean_x(), conj.mean(), max_relative = 1e-3);
        for &p in &[0.1, 0.25, 0.5, 0.75, 0.9] {
            let t = conj.quantile(p).unwrap();
            assert!(
                (grid.cdf_x(t) - p).abs() < 0.01,
                "grid CDF {} at the conjugate {p} quantile",
                grid.cdf_x(t)
            );
        }
    }

    #[test]
    fn grid_location_marginal_matches_quadrature() {
        let (counts, locs) = synthetic_mixture_data(100, &[3.0], 0.4);
        let grid = poisson_mixture_grid(&counts, &locs).unwrap();

        // Independent route: hand-written mixture density integrated by
        // composite Simpson on a fine fixed grid over the full support.
        let log_mix = |mu: f64| -> f64 {
            locs.iter()
                .map(|&x| {
                    let z = x - mu;
                    let wide = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                    let narrow =
                        (-z * z / 0.02).exp() / (0.1 * (2.0 * std::f64::consts::PI).sqrt());
                    (0.5 * wide + 0.5 * narrow).ln()
                })
                .sum()
        };
        let steps = 400_000usize;
        let h = 20.0 / steps as f64;
        let peak = (0..=steps)
            .map(|k| log_mix(-10.0 + k as f64 * h))
            .fold(f64::NEG_INFINITY, f64::max);
        let simpson = |upto: f64, weigh: &dyn Fn(f64) -> f64| -> f64 {
            let mut acc = 0.0;
            for k in 0..=steps {
                let mu = -10.0 + k as f64 * h;
                if mu > upto {
                    break;
                }
                let w = if k == 0 || k == steps {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * weigh(mu) * (log_mix(mu) - peak).exp();
            }
            acc * h / 3.0
        };
        let total = simpson(10.0, &|_| 1.0);
        let mean = simpson(10.0, &|mu| mu) / total;
        assert_relative_eq!(grid.mean_y(), mean, epsilon = 1e-3);
        for &t in &[mean - 0.02, mean, mean + 0.02] {
            let f = simpson(t, &|_| 1.0) / total;
            assert!(
                (grid.cdf_y(t) - f).abs() < 0.01,
                "grid location CDF {} vs quadrature {f} at {t}",
                grid.cdf_y(t)
            );
        }
    }

    #[test]
    fn grid_edges_carry_no_mass() {
        let (counts, locs) = synthetic_mixture_data(100, &[2.0, 4.0], -1.3);
        let grid = poisson_mixture_grid(&counts, &locs).unwrap();
        for w in [
            grid.x_weights()[0],
            *grid.x_weights().last().unwrap(),
            grid.y_weights()[0],
            *grid.y_weights().last().unwrap(),
        ] {
            assert!(w < 1e-6, "edge cell holds mass {w}");
        }
        let twisted = twisted_grid(0.1, 10.0, 0.0).unwrap();
        for w in [
            twisted.x_weights()[0],
            *twisted.x_weights().last().unwrap(),
            twisted.y_weights()[0],
            *twisted.y_weights().last().unwrap(),
        ] {
            assert!(w < 1e-6, "twisted edge cell holds mass {w}");
        }
        assert_relative_eq!(grid.x_weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(grid.y_weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn twisted_grid_matches_reduced_quadrature() {
        let (b, x1, x2) = (0.1, 10.0, 0.0);
        let grid = twisted_grid(b, x1, x2).unwrap();

        // Independent route: integrate θ₂ out analytically, then integrate
        // the reduced θ₁ density by composite Simpson.
        let reduced = |t1: f64| -> f64 {
            let m = b * (t1 * t1 - 100.0);
            -t1 * t1 / 200.0 - 0.5 * (x1 - t1) * (x1 - t1) - 0.25 * (m - x2) * (m - x2)
        };
        let (lo, hi) = (0.0, 20.0);
        let steps = 200_000usize;
        let h = (hi - lo) / steps as f64;
        let peak = (0..=steps)
            .map(|k| reduced(lo + k as f64 * h))
            .fold(f64::NEG_INFINITY, f64::max);
        let integrate = |weigh: &dyn Fn(f64) -> f64| -> f64 {
            let mut acc = 0.0;
            for k in 0..=steps {
                let t1 = lo + k as f64 * h;
                let w = if k == 0 || k == steps {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * weigh(t1) * (reduced(t1) - peak).exp();
            }
            acc * h / 3.0
        };
        let total = integrate(&|_| 1.0);
        let mean_t1 = integrate(&|t| t) / total;
        // θ₂ | θ₁ has mean (m(θ₁) + x₂)/2.
        let mean_t2 = integrate(&|t| 0.5 * (b * (t * t - 100.0) + x2)) / total;
        assert_relative_eq!(grid.mean_x(), mean_t1, epsilon = 0.02);
        assert_relative_eq!(grid.mean_y(), mean_t2, epsilon = 0.02);
        assert!(grid.mean_x() > 9.0 && grid.mean_x() < 11.0);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(
            GridPosterior2d::from_log_density((0.0, 1.0), (0.0, 1.0), 1, |_, _| 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            GridPosterior2d::from_log_density((1.0, 0.0), (0.0, 1.0), 4, |_, _| 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            GridPosterior2d::from_log_density((0.0, 1.0), (0.0, 1.0), 4, |_, _| f64::NAN),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            GridPosterior2d::from_log_density(
                (0.0, 1.0),
                (0.0, 1.0),
                4,
                |_, _| f64::NEG_INFINITY
            ),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            poisson_mixture_grid(&[1.0, 2.0], &[0.0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            twisted_grid(f64::NAN, 0.0, 0.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn conjugate_interval_coverage_over_replicas() {
        let truth = 3.0;
        let mut covered = 0;
        for r in 0..10u64 {
            let mut rng = stream_rng(derive_seed(9_300, r), 0);
            let pois = rand_distr::Poisson::new(truth).unwrap();
            let counts: Vec<f64> = (0..60).map(|_| pois.sample(&mut rng)).collect();
            let post = exact_poisson_posterior(&counts, 0.5, 0.1).unwrap();
            let lo = post.quantile(0.025).unwrap();
            let hi = post.quantile(0.975).unwrap();
            if lo <= truth && truth <= hi {
                covered += 1;
            }
        }
        assert!(
            (7..=10).contains(&covered),
            "95% interval covered the truth in {covered}/10 replicas"
        );
    }

    fn smoke_config() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSpec::poisson_mixture(),
            truth: vec![3.0, 0.0],
            n_obs: 50,
            n_sim: 30,
            n_rows: 1_500,
            replicas: 2,
            methods: vec![
                MethodSpec::CopulaAbcDrf,
                MethodSpec::Rejection(RejectionOptions {
                    q: 0.05,
                    ..RejectionOptions::default()
                }),
            ],
            forest: ForestConfig {
                trees: 150,
                ..ForestConfig::default()
            },
            marginal: None,
            extra_draws: None,
            seed: 2_024,
        }
    }

    #[test]
    fn replicated_experiment_scores_both_methods() {
        let cfg = smoke_config();
        let metrics = replicate_experiment(&cfg).unwrap();

        assert_eq!(metrics.records.len(), 4);
        assert_eq!(metrics.records[0].method, "copulaABCdrf");
        assert_eq!(metrics.records[1].method, "rejectionABC");
        assert_eq!(metrics.records[2].replica, 1);
        assert_eq!(metrics.records[0].seed, derive_seed(2_024, 0));
        assert_eq!(metrics.config.methods, vec!["copulaABCdrf", "rejectionABC"]);
        for rec in &metrics.records {
            assert_eq!(rec.params.len(), 2);
            assert_eq!(rec.params[0].name, "lambda");
            assert_eq!(rec.params[1].name, "mu");
            assert!(rec.runtime_secs >= 0.0);
            for p in &rec.params {
                let d = p.ks_distance.expect("oracle marginals exist");
                assert!((0.0..=1.0).contains(&d));
                assert!(p.ks_stat.unwrap() >= 0.0);
                assert!(p.abs_error >= 0.0 && p.sq_error >= 0.0);
            }
        }

        let rows = metrics.aggregate();
        for method in ["copulaABCdrf", "rejectionABC"] {
            for param in ["lambda", "mu"] {
                let get = |stat: &str| {
                    rows.iter()
                        .find(|r| r.method == method && r.parameter == param && r.statistic == stat)
                        .unwrap_or_else(|| panic!("missing {method}/{param}/{stat}"))
                };
                let mae = get("MAE");
                let mse = get("MSE");
                assert!(mse.mean >= mae.mean * mae.mean * (1.0 - 1e-12));
                for stat in ["cover95", "cover50"] {
                    let c = get(stat).mean;
                    assert!((0.0..=1.0).contains(&c));
                }
                assert!(get("KS-dist").mean <= 1.0);
                assert!(mae.sd.is_some(), "two replicas give a sample sd");
            }
        }

        // Point estimates should land near the truth even at smoke scale.
        let lambda_mean = rows
            .iter()
            .find(|r| {
                r.method == "copulaABCdrf" && r.parameter == "lambda" && r.statistic == "mean"
            })
            .unwrap()
            .mean;
        assert!(
            (lambda_mean - 3.0).abs() < 1.0,
            "λ posterior mean averaged {lambda_mean}"
        );
    }

    #[test]
    fn replicated_experiment_is_deterministic() {
        let cfg = smoke_config();
        let a = replicate_experiment(&cfg).unwrap();
        let b = replicate_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());

        let rt = ReplicaMetrics::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(rt, a);
    }

    #[test]
    fn zero_methods_give_an_empty_table() {
        let mut cfg = smoke_config();
        cfg.methods.clear();
        let metrics = replicate_experiment(&cfg).unwrap();
        assert!(metrics.is_empty());
        assert!(metrics.aggregate().is_empty());
        assert_eq!(metrics.to_csv(), "method,parameter,statistic,mean,sd\n");
    }

    #[test]
    fn experiment_config_validation() {
        let mut cfg = smoke_config();
        cfg.truth = vec![3.0];
        assert!(matches!(
            replicate_experiment(&cfg),
            Err(Error::DimensionMismatch(_))
        ));

        let mut cfg = smoke_config();
        cfg.truth = vec![-1.0, 0.0];
        assert!(matches!(
            replicate_experiment(&cfg),
            Err(Error::InvalidArgument(_))
        ));

        let mut cfg = smoke_config();
        cfg.replicas = 0;
        assert!(matches!(
            replicate_experiment(&cfg),
            Err(Error::InvalidArgument(_))
        ));

        let mut cfg = smoke_config();
        cfg.n_rows = 0;
        assert!(matches!(
            replicate_experiment(&cfg),
            Err(Error::InvalidArgument(_))
        ));
    }
}
