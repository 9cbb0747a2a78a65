//! Generative model registry: parameter spaces, priors, simulators, and
//! summary maps for every benchmark and network model in scope.
//!
//! A [`ModelSpec`] bundles what the inference pipeline needs to turn a
//! parameter draw into a summary-statistic row: a prior to draw from, a
//! simulator producing a [`Dataset`] (an iid matrix or a network), and a
//! [`SummarySpec`] mapping the dataset to reals. The same summary map is
//! applied to observed data, so summaries must be comparable across dataset
//! sizes — network models use size-invariant statistics or offset-MPLE
//! coefficients for exactly that reason.

mod bench;
mod ergm_sim;
mod growers;

pub use ergm_sim::{build_g_prior, simulate_ergm, ErgmChain};
pub use growers::{grow_dmc, grow_dmr, grow_nlpa, grow_price};

use crate::netstats::{self, ErgmStat, ErgmStatSpec, Network};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::Distribution;
use statrs::function::gamma::ln_gamma;

/// Kind of a single parameter dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DimKind {
    Continuous,
    /// Integer-valued; jittered to a continuous value inside the table.
    DiscreteInteger,
}

/// One parameter dimension: kind plus support bounds (may be infinite).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DimSpec {
    pub kind: DimKind,
    pub lo: f64,
    pub hi: f64,
}

/// Parameter-space metadata: dimension names, kinds, and supports.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamSpace {
    names: Vec<String>,
    dims: Vec<DimSpec>,
}

impl ParamSpace {
    pub fn new(names: Vec<String>, dims: Vec<DimSpec>) -> Result<Self> {
        if names.is_empty() || names.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} names vs {} dims (need ≥ 1 of each)",
                names.len(),
                dims.len()
            )));
        }
        for (name, d) in names.iter().zip(&dims) {
            if !(d.lo < d.hi) {
                return Err(Error::InvalidArgument(format!(
                    "dim {name}: lower bound {} not below upper {}",
                    d.lo, d.hi
                )));
            }
            if d.kind == DimKind::DiscreteInteger {
                for b in [d.lo, d.hi] {
                    if b.is_finite() && b.fract() != 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "dim {name}: discrete bounds must be integers, got {b}"
                        )));
                    }
                }
            }
        }
        Ok(ParamSpace { names, dims })
    }

    /// All-continuous space from (name, lo, hi) triples.
    pub fn continuous(spec: &[(&str, f64, f64)]) -> Result<Self> {
        Self::new(
            spec.iter().map(|(n, _, _)| n.to_string()).collect(),
            spec.iter()
                .map(|&(_, lo, hi)| DimSpec { kind: DimKind::Continuous, lo, hi })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dims(&self) -> &[DimSpec] {
        &self.dims
    }

    /// Closed-support containment check (infinite bounds always pass).
    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dims.len()
            && theta.iter().zip(&self.dims).all(|(&t, d)| t >= d.lo && t <= d.hi && t.is_finite())
    }
}

/// Independent one-dimensional prior marginal.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Marginal1d {
    Uniform { lo: f64, hi: f64 },
    Gamma { shape: f64, rate: f64 },
    /// Uniform over the integers lo..=hi; pairs with a `DiscreteInteger`
    /// dimension, whose table values are jittered downstream.
    UniformInt { lo: i64, hi: i64 },
}

impl Marginal1d {
    fn validate(&self) -> Result<()> {
        match *self {
            Marginal1d::Uniform { lo, hi } if lo < hi => Ok(()),
            Marginal1d::Uniform { lo, hi } => Err(Error::InvalidArgument(format!(
                "uniform bounds ({lo},{hi}) not increasing"
            ))),
            Marginal1d::Gamma { shape, rate } if shape > 0.0 && rate > 0.0 => Ok(()),
            Marginal1d::Gamma { shape, rate } => Err(Error::InvalidArgument(format!(
                "gamma(shape={shape}, rate={rate}) needs positive parameters"
            ))),
            Marginal1d::UniformInt { lo, hi } if lo <= hi => Ok(()),
            Marginal1d::UniformInt { lo, hi } => Err(Error::InvalidArgument(format!(
                "integer-uniform bounds ({lo},{hi}) out of order"
            ))),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal1d::Uniform { lo, hi } => rng.random_range(lo..hi),
            Marginal1d::Gamma { shape, rate } => {
                rand_distr::Gamma::new(shape, 1.0 / rate).expect("validated").sample(rng)
            }
            Marginal1d::UniformInt { lo, hi } => rng.random_range(lo..=hi) as f64,
        }
    }

    fn log_density(&self, x: f64) -> f64 {
        match *self {
            Marginal1d::Uniform { lo, hi } => {
                if x > lo && x < hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Marginal1d::Gamma { shape, rate } => {
                if x > 0.0 {
                    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
                } else {
                    f64::NEG_INFINITY
                }
            }
            // Probability mass on the atoms; −∞ off the integer lattice.
            Marginal1d::UniformInt { lo, hi } => {
                if x.fract() == 0.0 && x >= lo as f64 && x <= hi as f64 {
                    -((hi - lo + 1) as f64).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Multivariate normal prior with dense covariance (stored row-major).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MvnPrior {
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl MvnPrior {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "covariance has {} entries, expected {}",
                cov.len(),
                d * d
            )));
        }
        let m = nalgebra::DMatrix::from_row_slice(d, d, &cov);
        if (m.clone() - m.transpose()).amax() > 1e-10 * (1.0 + m.amax()) {
            return Err(Error::InvalidArgument("covariance not symmetric".into()));
        }
        if nalgebra::Cholesky::new(m).is_none() {
            return Err(Error::InvalidArgument("covariance not positive-definite".into()));
        }
        Ok(MvnPrior { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Covariance entry (i, j).
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.mean.len() + j]
    }

    fn chol(&self) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
        let d = self.dim();
        nalgebra::Cholesky::new(nalgebra::DMatrix::from_row_slice(d, d, &self.cov))
            .expect("validated SPD")
    }
}

/// Prior over the full parameter vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum PriorSpec {
    /// Independent per-dimension marginals (uniform / gamma mix allowed).
    PerDim(Vec<Marginal1d>),
    /// Multivariate normal, e.g. the unit-information g-prior.
    Mvn(MvnPrior),
    /// Banana-shaped prior of the twisted-Gaussian benchmark with curvature
    /// `b`: unnormalized log density
    /// `−θ₁²/200 − (θ₂ − bθ₁² + 100b)²/2 − Σ_{k≥3} θ_k²`.
    Twisted { b: f64, dims: usize },
}

impl PriorSpec {
    pub fn per_dim(marginals: Vec<Marginal1d>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidArgument("prior needs at least one dimension".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(PriorSpec::PerDim(marginals))
    }

    pub fn uniform(bounds: &[(f64, f64)]) -> Result<Self> {
        Self::per_dim(bounds.iter().map(|&(lo, hi)| Marginal1d::Uniform { lo, hi }).collect())
    }

    pub fn twisted(b: f64, dims: usize) -> Result<Self> {
        if dims < 2 {
            return Err(Error::InvalidArgument("twisted prior needs at least 2 dims".into()));
        }
        if !b.is_finite() {
            return Err(Error::InvalidArgument("twisted curvature must be finite".into()));
        }
        Ok(PriorSpec::Twisted { b, dims })
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::PerDim(m) => m.len(),
            PriorSpec::Mvn(m) => m.dim(),
            PriorSpec::Twisted { dims, .. } => *dims,
        }
    }

    /// True when the log density is constant on its support (bounded uniform
    /// box, possibly with integer-uniform dimensions, which stay flat after
    /// jittering). Mode and MLE extraction coincide in that case.
    pub fn is_flat(&self) -> bool {
        matches!(self, PriorSpec::PerDim(m)
            if m.iter().all(|mm| matches!(
                mm,
                Marginal1d::Uniform { .. } | Marginal1d::UniformInt { .. }
            )))
    }
}

/// Draw a parameter vector from the prior.
pub fn sample_prior<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> Vec<f64> {
    match prior {
        PriorSpec::PerDim(marginals) => marginals.iter().map(|m| m.sample(rng)).collect(),
        PriorSpec::Mvn(mvn) => {
            let d = mvn.dim();
            let z = nalgebra::DVector::from_iterator(
                d,
                (0..d).map(|_| rand_distr::StandardNormal.sample(rng)),
            );
            let x = mvn.chol().l() * z;
            mvn.mean.iter().zip(x.iter()).map(|(m, v)| m + v).collect()
        }
        PriorSpec::Twisted { b, dims } => {
            let mut theta = Vec::with_capacity(*dims);
            let z0: f64 = rand_distr::StandardNormal.sample(rng);
            let t1 = 10.0 * z0;
            theta.push(t1);
            let z1: f64 = rand_distr::StandardNormal.sample(rng);
            theta.push(b * t1 * t1 - 100.0 * b + z1);
            for _ in 2..*dims {
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                theta.push(z / std::f64::consts::SQRT_2);
            }
            theta
        }
    }
}

/// Log prior density at `theta`; −∞ outside the support. The twisted prior
/// is unnormalized (sufficient for mode/MLE ratios).
pub fn prior_log_density(prior: &PriorSpec, theta: &[f64]) -> Result<f64> {
    if theta.len() != prior.dim() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} dims, prior has {}",
            theta.len(),
            prior.dim()
        )));
    }
    Ok(match prior {
        PriorSpec::PerDim(marginals) => {
            marginals.iter().zip(theta).map(|(m, &x)| m.log_density(x)).sum()
        }
        PriorSpec::Mvn(mvn) => {
            let d = mvn.dim();
            let chol = mvn.chol();
            let diff = nalgebra::DVector::from_iterator(
                d,
                theta.iter().zip(mvn.mean.iter()).map(|(t, m)| t - m),
            );
            let solved = chol.solve(&diff);
            let logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
            -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + diff.dot(&solved))
        }
        PriorSpec::Twisted { b, dims: _ } => {
            let t1 = theta[0];
            let t2 = theta[1];
            let tail: f64 = theta[2..].iter().map(|t| t * t).sum();
            -t1 * t1 / 200.0 - (t2 - b * t1 * t1 + 100.0 * b).powi(2) / 2.0 - tail
        }
    })
}

/// Row-major iid data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IidMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl IidMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}×{cols} matrix with {} entries",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(IidMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }

    pub fn col_mean(&self, j: usize) -> f64 {
        self.column(j).sum::<f64>() / self.rows as f64
    }

    /// Parse a comma- or whitespace-separated numeric matrix.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let values: Vec<f64> = trimmed
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map_err(|e| Error::Parse {
                        line: idx + 1,
                        msg: format!("bad number {t:?}: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            match cols {
                None => cols = Some(values.len()),
                Some(c) if c != values.len() => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("expected {c} columns, found {}", values.len()),
                    })
                }
                _ => {}
            }
            data.extend(values);
            rows += 1;
        }
        IidMatrix::new(rows, cols.unwrap_or(0), data)
    }
}

/// A simulated or observed dataset.
#[derive(Debug, Clone)]
pub enum Dataset {
    Iid(IidMatrix),
    Net(Network),
}

impl Dataset {
    pub fn as_iid(&self) -> Result<&IidMatrix> {
        match self {
            Dataset::Iid(m) => Ok(m),
            Dataset::Net(_) => Err(Error::InvalidArgument(
                "expected an iid data matrix, found a network".into(),
            )),
        }
    }

    pub fn as_net(&self) -> Result<&Network> {
        match self {
            Dataset::Net(n) => Ok(n),
            Dataset::Iid(_) => Err(Error::InvalidArgument(
                "expected a network, found an iid data matrix".into(),
            )),
        }
    }
}

/// One network-valued summary statistic (possibly multi-component).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum NetSummary {
    Density,
    AvgLocalClustering,
    GlobalClustering,
    /// Mean shortest-path length over reachable ordered pairs.
    MeanPath,
    /// Degree assortativity; NaN on regular graphs (row then dropped).
    Assortativity,
    MeanDegree,
    /// Coefficient of a single-statistic offset-MPLE fit.
    MpleSingle(ErgmStat),
    /// All coefficients of a joint offset-MPLE fit (one value per statistic).
    MpleJoint(ErgmStatSpec),
    /// Two values: gw-degree coefficient at the pseudo-likelihood-maximizing
    /// decay, and that decay itself (profile over a fixed grid, one local
    /// refinement pass).
    GwDegreeProfile,
}

impl NetSummary {
    fn labels(&self) -> Vec<String> {
        match self {
            NetSummary::Density => vec!["density".into()],
            NetSummary::AvgLocalClustering => vec!["avg_local_clust".into()],
            NetSummary::GlobalClustering => vec!["global_clust".into()],
            NetSummary::MeanPath => vec!["mean_path".into()],
            NetSummary::Assortativity => vec!["assortativity".into()],
            NetSummary::MeanDegree => vec!["mean_degree".into()],
            NetSummary::MpleSingle(stat) => vec![format!("mple_{}", stat.label())],
            NetSummary::MpleJoint(spec) => {
                spec.stats().iter().map(|s| format!("mple_{}", s.label())).collect()
            }
            NetSummary::GwDegreeProfile => vec!["gwd_coef".into(), "gwd_decay".into()],
        }
    }
}

/// Map from a dataset to its summary-statistic vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum SummarySpec {
    /// Per-column means of an iid matrix.
    ColumnMeans,
    /// MLEs (population divisors) of the two means, two variances, and the
    /// covariance of a 2-column iid matrix.
    GaussianMle,
    /// The single data row itself (high-dimensional benchmark).
    IdentityRow,
    /// Network statistics; `skeletonize` collapses directed networks first so
    /// directed and undirected models share one summary map.
    NetworkStats { stats: Vec<NetSummary>, skeletonize: bool },
}

impl SummarySpec {
    /// Column labels of the summary vector, known without simulating.
    /// `IdentityRow` needs the data dimension, supplied by the model.
    pub fn labels(&self, identity_cols: usize) -> Vec<String> {
        match self {
            SummarySpec::ColumnMeans => (1..=identity_cols).map(|j| format!("mean{j}")).collect(),
            SummarySpec::GaussianMle => {
                vec!["mean1".into(), "mean2".into(), "var1".into(), "var2".into(), "cov12".into()]
            }
            SummarySpec::IdentityRow => (1..=identity_cols).map(|j| format!("y{j}")).collect(),
            SummarySpec::NetworkStats { stats, .. } => {
                stats.iter().flat_map(|s| s.labels()).collect()
            }
        }
    }

    /// Apply the map. MPLE divergence, degenerate statistics, and similar
    /// conditions surface as errors so table builders can drop the row.
    pub fn compute(&self, data: &Dataset) -> Result<Vec<f64>> {
        match self {
            SummarySpec::ColumnMeans => {
                let m = data.as_iid()?;
                Ok((0..m.cols()).map(|j| m.col_mean(j)).collect())
            }
            SummarySpec::GaussianMle => bench::gaussian_mle_summaries(data.as_iid()?),
            SummarySpec::IdentityRow => {
                let m = data.as_iid()?;
                if m.rows() != 1 {
                    return Err(Error::InvalidArgument(format!(
                        "identity summary expects a single data row, found {}",
                        m.rows()
                    )));
                }
                Ok((0..m.cols()).map(|j| m.get(0, j)).collect())
            }
            SummarySpec::NetworkStats { stats, skeletonize } => {
                let net = data.as_net()?;
                let skel;
                let net = if *skeletonize && net.is_directed() {
                    skel = net.skeleton();
                    &skel
                } else {
                    net
                };
                let offset = netstats::size_offset(net.node_count());
                let mut out = Vec::new();
                for stat in stats {
                    match stat {
                        NetSummary::Density => out.push(netstats::density(net)?),
                        NetSummary::AvgLocalClustering => {
                            out.push(netstats::clustering_avg_local(net)?)
                        }
                        NetSummary::GlobalClustering => out.push(netstats::clustering_global(net)?),
                        NetSummary::MeanPath => out.push(netstats::mean_path(net)?),
                        NetSummary::Assortativity => out.push(netstats::assortativity_degree(net)?),
                        NetSummary::MeanDegree => {
                            let scale = if net.is_directed() { 1.0 } else { 2.0 };
                            out.push(scale * net.edge_count() as f64 / net.node_count() as f64)
                        }
                        NetSummary::MpleSingle(stat) => {
                            let spec = ErgmStatSpec::new(vec![*stat])?;
                            out.push(netstats::mple(net, &spec, offset)?[0]);
                        }
                        NetSummary::MpleJoint(spec) => {
                            out.extend(netstats::mple(net, spec, offset)?)
                        }
                        NetSummary::GwDegreeProfile => {
                            let (coef, decay) = gw_degree_profile(net, offset)?;
                            out.push(coef);
                            out.push(decay);
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Profile the offset pseudo-likelihood of a single gw-degree statistic over
/// a decay grid (0.05..3.0 step 0.05, one 0.005-step local refinement) and
/// return (coefficient, decay) at the maximum.
fn gw_degree_profile(net: &Network, offset: f64) -> Result<(f64, f64)> {
    let fit = |decay: f64| -> Option<(f64, f64)> {
        let spec = ErgmStatSpec::new(vec![ErgmStat::GwDegree { decay }]).ok()?;
        let beta = netstats::mple(net, &spec, offset).ok()?;
        let pll = netstats::pseudo_log_lik(net, &spec, &beta, offset).ok()?;
        Some((beta[0], pll))
    };
    let scan = |lo: f64, hi: f64, step: f64| -> Option<(f64, f64, f64)> {
        let mut best: Option<(f64, f64, f64)> = None; // (pll, decay, coef)
        let mut decay = lo;
        while decay <= hi + 1e-12 {
            if let Some((coef, pll)) = fit(decay) {
                if best.map_or(true, |(b, _, _)| pll > b) {
                    best = Some((pll, decay, coef));
                }
            }
            decay += step;
        }
        best
    };
    let (_, coarse_decay, _) = scan(0.05, 3.0, 0.05)
        .ok_or_else(|| Error::InfiniteMple("gw-degree profile: no decay admits a finite fit".into()))?;
    let (_, decay, coef) = scan(
        (coarse_decay - 0.045).max(1e-3),
        coarse_decay + 0.045,
        0.005,
    )
    .expect("refinement grid contains the feasible coarse point");
    Ok((coef, decay))
}

/// Which generative process a [`ModelSpec`] runs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ModelKind {
    /// θ = (λ, μ): column 1 ~ Poisson(λ), column 2 ~ ½N(μ,1) + ½N(μ,0.01).
    PoissonMixture,
    /// θ ∈ R⁵: bivariate normal with μ=(θ₁,θ₂), sd s₁=θ₃², s₂=θ₄²,
    /// correlation tanh(θ₅).
    BivariateGaussian,
    /// θ ∈ R^d: one observation y ~ N_d(θ, I), banana prior with curvature b.
    TwistedGaussian { b: f64 },
    /// Directed citation growth; new node cites Binomial(n0,p) existing
    /// nodes, attachment weight k0 + indegree. θ = (k0, p).
    Price { n0: usize },
    /// Undirected nonlinear preferential attachment, weight degree^α,
    /// truncated-Binomial(n0,p) edges per arrival. θ = (α, p).
    Nlpa { n0: usize },
    /// Duplication-mutation-complementation growth. θ = (q_mod, q_con).
    Dmc,
    /// Duplication with random mutation. θ = (q_del, q_new).
    Dmr,
    /// Exponential-family network model sampled by edge-toggle MCMC;
    /// θ holds one coefficient per statistic. `burn` of `None` means 20·n².
    Ergm { stats: ErgmStatSpec, burn: Option<usize> },
}

/// A named generative model: prior, simulator, and summary map.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub space: ParamSpace,
    pub prior: PriorSpec,
    pub kind: ModelKind,
    pub summaries: SummarySpec,
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Summary-column labels (needs no simulation).
    pub fn summary_labels(&self) -> Vec<String> {
        let identity_cols = match &self.kind {
            ModelKind::PoissonMixture | ModelKind::BivariateGaussian => 2,
            ModelKind::TwistedGaussian { .. } => self.dim(),
            _ => 0,
        };
        self.summaries.labels(identity_cols)
    }

    /// Simulate a dataset of size `n_sim` (rows for iid models, nodes for
    /// network models; the high-dimensional benchmark always yields its
    /// single-row observation).
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        n_sim: usize,
        rng: &mut R,
    ) -> Result<Dataset> {
        if !self.space.contains(theta) {
            return Err(Error::InvalidArgument(format!(
                "theta {theta:?} outside the support of model {}",
                self.name
            )));
        }
        match &self.kind {
            ModelKind::PoissonMixture => {
                Ok(Dataset::Iid(bench::simulate_poisson_mixture(theta, n_sim, rng)?))
            }
            ModelKind::BivariateGaussian => {
                Ok(Dataset::Iid(bench::simulate_bivariate_gaussian(theta, n_sim, rng)?))
            }
            ModelKind::TwistedGaussian { .. } => {
                Ok(Dataset::Iid(bench::simulate_twisted_gaussian(theta, rng)?))
            }
            ModelKind::Price { n0 } => {
                Ok(Dataset::Net(grow_price(theta[0], theta[1], n_sim, *n0, rng)?))
            }
            ModelKind::Nlpa { n0 } => {
                Ok(Dataset::Net(grow_nlpa(theta[0], theta[1], n_sim, *n0, rng)?))
            }
            ModelKind::Dmc => Ok(Dataset::Net(grow_dmc(theta[0], theta[1], n_sim, rng)?)),
            ModelKind::Dmr => Ok(Dataset::Net(grow_dmr(theta[0], theta[1], n_sim, rng)?)),
            ModelKind::Ergm { stats, burn } => {
                let burn = burn.unwrap_or(20 * n_sim * n_sim);
                Ok(Dataset::Net(simulate_ergm(theta, stats, n_sim, burn, rng)?))
            }
        }
    }

    /// Apply the model's summary map to a dataset.
    pub fn summaries(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.summaries.compute(data)
    }
}

/// Registry constructors with the standard priors and summary maps.
impl ModelSpec {
    /// Poisson/normal-scale-mixture pair: λ ~ Gamma(½, 0.1), μ ~ U(−10,10);
    /// summaries are the two column means.
    pub fn poisson_mixture() -> Self {
        ModelSpec {
            name: "poisson-mixture".into(),
            space: ParamSpace::continuous(&[
                ("lambda", 0.0, f64::INFINITY),
                ("mu", -10.0, 10.0),
            ])
            .expect("static space"),
            prior: PriorSpec::per_dim(vec![
                Marginal1d::Gamma { shape: 0.5, rate: 0.1 },
                Marginal1d::Uniform { lo: -10.0, hi: 10.0 },
            ])
            .expect("static prior"),
            kind: ModelKind::PoissonMixture,
            summaries: SummarySpec::ColumnMeans,
        }
    }

    /// Five-parameter bivariate Gaussian with four symmetric posterior modes.
    pub fn bivariate_gaussian() -> Self {
        ModelSpec {
            name: "bivariate-gaussian".into(),
            space: ParamSpace::continuous(&[
                ("theta1", -3.0, 3.0),
                ("theta2", -4.0, 4.0),
                ("theta3", -3.0, 3.0),
                ("theta4", -3.0, 3.0),
                ("theta5", -3.0, 3.0),
            ])
            .expect("static space"),
            prior: PriorSpec::uniform(&[
                (-3.0, 3.0),
                (-4.0, 4.0),
                (-3.0, 3.0),
                (-3.0, 3.0),
                (-3.0, 3.0),
            ])
            .expect("static prior"),
            kind: ModelKind::BivariateGaussian,
            summaries: SummarySpec::GaussianMle,
        }
    }

    /// High-dimensional twisted Gaussian with banana prior, curvature b=0.1.
    pub fn twisted_gaussian(dims: usize) -> Result<Self> {
        let b = 0.1;
        let names = (1..=dims).map(|k| format!("theta{k}")).collect();
        let dimspecs = (0..dims)
            .map(|_| DimSpec { kind: DimKind::Continuous, lo: f64::NEG_INFINITY, hi: f64::INFINITY })
            .collect();
        Ok(ModelSpec {
            name: format!("twisted-gaussian-d{dims}"),
            space: ParamSpace::new(names, dimspecs)?,
            prior: PriorSpec::twisted(b, dims)?,
            kind: ModelKind::TwistedGaussian { b },
            summaries: SummarySpec::IdentityRow,
        })
    }

    /// Citation growth: k0 ~ U(0.9, 1.1), p ~ U(0, 0.1); summaries are the
    /// gw-degree profile pair plus the triangle MPLE coefficient, computed on
    /// the undirected skeleton.
    pub fn price(n0: usize) -> Self {
        ModelSpec {
            name: "price".into(),
            space: ParamSpace::continuous(&[("k0", 0.9, 1.1), ("p", 0.0, 0.1)])
                .expect("static space"),
            prior: PriorSpec::uniform(&[(0.9, 1.1), (0.0, 0.1)]).expect("static prior"),
            kind: ModelKind::Price { n0 },
            summaries: SummarySpec::NetworkStats {
                stats: vec![
                    NetSummary::GwDegreeProfile,
                    NetSummary::MpleSingle(ErgmStat::Triangles),
                ],
                skeletonize: true,
            },
        }
    }

    /// Nonlinear preferential attachment: α ~ U(0,3), p ~ U(0,0.2);
    /// raw size-invariant summaries.
    pub fn nlpa(n0: usize) -> Self {
        ModelSpec {
            name: "nlpa".into(),
            space: ParamSpace::continuous(&[("alpha", 0.0, 3.0), ("p", 0.0, 0.2)])
                .expect("static space"),
            prior: PriorSpec::uniform(&[(0.0, 3.0), (0.0, 0.2)]).expect("static prior"),
            kind: ModelKind::Nlpa { n0 },
            summaries: SummarySpec::NetworkStats {
                stats: vec![
                    NetSummary::Density,
                    NetSummary::AvgLocalClustering,
                    NetSummary::MeanPath,
                ],
                skeletonize: true,
            },
        }
    }

    /// Duplication-mutation-complementation: q_mod ~ U(0.15,0.35),
    /// q_con ~ U(0,1); single-statistic MPLE summaries.
    pub fn dmc() -> Self {
        ModelSpec {
            name: "dmc".into(),
            space: ParamSpace::continuous(&[("qmod", 0.15, 0.35), ("qcon", 0.0, 1.0)])
                .expect("static space"),
            prior: PriorSpec::uniform(&[(0.15, 0.35), (0.0, 1.0)]).expect("static prior"),
            kind: ModelKind::Dmc,
            summaries: SummarySpec::NetworkStats {
                stats: vec![
                    NetSummary::MpleSingle(ErgmStat::MeanDegree),
                    NetSummary::MpleSingle(ErgmStat::Triangles),
                ],
                skeletonize: true,
            },
        }
    }

    /// Duplication with random mutation: q_del ~ U(0.15,0.35), q_new ~ U(0,1);
    /// raw clustering/assortativity summaries (assortativity NaN drops rows).
    pub fn dmr() -> Self {
        ModelSpec {
            name: "dmr".into(),
            space: ParamSpace::continuous(&[("qdel", 0.15, 0.35), ("qnew", 0.0, 1.0)])
                .expect("static space"),
            prior: PriorSpec::uniform(&[(0.15, 0.35), (0.0, 1.0)]).expect("static prior"),
            kind: ModelKind::Dmr,
            summaries: SummarySpec::NetworkStats {
                stats: vec![
                    NetSummary::AvgLocalClustering,
                    NetSummary::GlobalClustering,
                    NetSummary::Assortativity,
                ],
                skeletonize: true,
            },
        }
    }

    /// Two-statistic exponential-family model (2-stars + triangles) with a
    /// caller-supplied prior (typically the g-prior built from observed data)
    /// and joint-MPLE summaries.
    pub fn ergm(stats: ErgmStatSpec, prior: PriorSpec) -> Result<Self> {
        let q = stats.len();
        if prior.dim() != q {
            return Err(Error::DimensionMismatch(format!(
                "prior dim {} vs {} statistics",
                prior.dim(),
                q
            )));
        }
        let names = stats.stats().iter().map(|s| format!("beta_{}", s.label())).collect();
        let dims = (0..q)
            .map(|_| DimSpec { kind: DimKind::Continuous, lo: f64::NEG_INFINITY, hi: f64::INFINITY })
            .collect();
        Ok(ModelSpec {
            name: "ergm".into(),
            space: ParamSpace::new(names, dims)?,
            prior,
            kind: ModelKind::Ergm { stats: stats.clone(), burn: None },
            summaries: SummarySpec::NetworkStats {
                stats: vec![NetSummary::MpleJoint(stats)],
                skeletonize: false,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_prior_samples_stay_inside() {
        let prior = PriorSpec::uniform(&[(0.9, 1.1), (0.0, 0.1)]).unwrap();
        let mut rng = crate::rng::master_rng(11);
        for _ in 0..200 {
            let theta = sample_prior(&prior, &mut rng);
            assert!(theta[0] > 0.9 && theta[0] < 1.1);
            assert!(theta[1] > 0.0 && theta[1] < 0.1);
        }
    }

    #[test]
    fn gamma_prior_is_positive() {
        let prior = PriorSpec::per_dim(vec![Marginal1d::Gamma { shape: 0.5, rate: 0.1 }]).unwrap();
        let mut rng = crate::rng::master_rng(12);
        for _ in 0..200 {
            assert!(sample_prior(&prior, &mut rng)[0] > 0.0);
        }
    }

    #[test]
    fn shrinking_uniform_concentrates() {
        let eps = 1e-9;
        let prior = PriorSpec::uniform(&[(2.0, 2.0 + eps)]).unwrap();
        let mut rng = crate::rng::master_rng(13);
        let theta = sample_prior(&prior, &mut rng);
        assert!((theta[0] - 2.0).abs() <= eps);
    }

    #[test]
    fn unit_square_log_density() {
        let prior = PriorSpec::uniform(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_relative_eq!(prior_log_density(&prior, &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(
            prior_log_density(&prior, &[1.5, 0.5]).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn twisted_prior_exponent_cancels() {
        let prior = PriorSpec::twisted(0.1, 30).unwrap();
        let mut theta = vec![0.0; 30];
        theta[1] = -10.0;
        assert_relative_eq!(prior_log_density(&prior, &theta).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let prior = PriorSpec::uniform(&[(0.0, 1.0)]).unwrap();
        assert!(prior_log_density(&prior, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn mvn_log_density_matches_quadratic_form() {
        let mvn = MvnPrior::new(vec![1.0, -1.0], vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let prior = PriorSpec::Mvn(mvn);
        let theta = [0.3, 0.7];
        // Direct dense evaluation.
        let (a, b, c) = (2.0, 0.5, 1.0);
        let det: f64 = a * c - b * b;
        let inv = [[c / det, -b / det], [-b / det, a / det]];
        let d0 = theta[0] - 1.0;
        let d1 = theta[1] + 1.0;
        let quad = d0 * (inv[0][0] * d0 + inv[0][1] * d1) + d1 * (inv[1][0] * d0 + inv[1][1] * d1);
        let expect = -0.5 * (2.0 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad);
        assert_relative_eq!(
            prior_log_density(&prior, &theta).unwrap(),
            expect,
            epsilon = 1e-10
        );
    }

    #[test]
    fn mvn_prior_rejects_non_pd_covariance() {
        assert!(MvnPrior::new(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn twisted_prior_sampler_matches_density_shape() {
        // Mean of θ2 under the banana prior is E[bθ1²] − 100b = 100b − 100b = 0.
        let prior = PriorSpec::twisted(0.1, 3).unwrap();
        let mut rng = crate::rng::master_rng(99);
        let n = 20_000;
        let mut sum2 = 0.0;
        for _ in 0..n {
            sum2 += sample_prior(&prior, &mut rng)[1];
        }
        assert!((sum2 / n as f64).abs() < 0.3, "θ2 prior mean {}", sum2 / n as f64);
    }

    #[test]
    fn summary_labels_have_expected_arity() {
        assert_eq!(ModelSpec::poisson_mixture().summary_labels(), vec!["mean1", "mean2"]);
        assert_eq!(ModelSpec::bivariate_gaussian().summary_labels().len(), 5);
        assert_eq!(ModelSpec::twisted_gaussian(30).unwrap().summary_labels().len(), 30);
        assert_eq!(ModelSpec::price(10).summary_labels(), vec![
            "gwd_coef",
            "gwd_decay",
            "mple_triangles"
        ]);
        assert_eq!(ModelSpec::dmr().summary_labels().len(), 3);
    }
}
