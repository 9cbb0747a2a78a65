//! Distributional random forest: a CART ensemble whose splits maximize a
//! kernel two-sample discrepancy between child response distributions,
//! yielding test-point weights that estimate the full conditional law of the
//! response given a summary vector.
//!
//! Each tree grows on a without-replacement subsample. At a node, a random
//! subset of covariates is scanned; candidate thresholds are midpoints of
//! consecutive distinct in-node values (capped at a quantile-spaced subset),
//! each scored by the squared maximum mean discrepancy (MMD) between the left
//! and right response samples under a Gaussian kernel with a node-level
//! median-heuristic bandwidth. The kernel is approximated with random Fourier
//! features drawn once per tree, and the score is scaled by
//! `n_l·n_r/(n_l+n_r)²` to discourage degenerate one-versus-rest splits.
//! Prediction drops a summary vector down every tree and averages leaf
//! co-membership indicators into a weight vector over training rows; weighted
//! CDFs, quantiles, moments, and class probabilities then read conditional
//! distributions straight off the training responses. Categorical responses
//! (model selection) reuse the same machinery on one-hot embeddings.

use crate::container::{ByteReader, ByteWriter, KIND_FOREST};
use crate::rng::stream_rng;
use crate::wstats::SortedWeighted;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::path::Path;

pub use crate::wstats::{weighted_mean, weighted_var};

/// Splits whose best score does not exceed this are treated as noise: the
/// node stays a leaf instead of splitting on floating-point dust.
const SPLIT_TOL: f64 = 1e-12;

fn std_normal(rng: &mut (impl Rng + ?Sized)) -> f64 {
    StandardNormal.sample(rng)
}

/// Fast simultaneous sine/cosine for the feature embeddings, which are
/// evaluated billions of times per forest. Range-reduces by π/2 and applies
/// the classical double-precision kernel polynomials; the code is branchless
/// (quadrant handled by arithmetic sign selection) so the compiler can
/// vectorize embedding loops. Absolute error is ~1e-15 for moderate angles
/// and degrades to ~|x|·2e-16 for huge ones, far below anything a kernel
/// split heuristic can resolve; NaN propagates like the library routine.
#[inline(always)]
fn fast_sin_cos(x: f64) -> (f64, f64) {
    const FRAC_2_PI: f64 = 0.636_619_772_367_581_3;
    const PIO2_HI: f64 = 1.570_796_326_794_896_6;
    const PIO2_LO: f64 = 6.123_233_995_736_766e-17;
    // floor(t + 0.5) rather than round(): both pick an integer within half a
    // unit of t (any such k is a valid reduction), but floor is a single
    // instruction while round-half-away-from-zero is a library call.
    let k = (x * FRAC_2_PI + 0.5).floor();
    let r = (x - k * PIO2_HI) - k * PIO2_LO;
    let r2 = r * r;
    let s = r + r * r2 * (-1.666_666_666_666_663_2e-1
        + r2 * (8.333_333_333_322_489e-3
            + r2 * (-1.984_126_982_985_795e-4
                + r2 * (2.755_731_370_707_007e-6
                    + r2 * (-2.505_076_025_340_686_3e-8
                        + r2 * 1.589_690_995_211_55e-10)))));
    let c = 1.0 - 0.5 * r2
        + r2 * r2 * (4.166_666_666_666_660_2e-2
            + r2 * (-1.388_888_888_887_411e-3
                + r2 * (2.480_158_728_947_673e-5
                    + r2 * (-2.755_731_435_139_066_4e-7
                        + r2 * (2.087_572_321_298_175e-9
                            + r2 * -1.135_964_755_778_819_5e-11)))));
    // Quadrant q = k mod 4 selects swap and signs, all branch-free:
    //   sin(r + qπ/2):  q0 → s, q1 → c, q2 → −s, q3 → −c
    //   cos(r + qπ/2):  q0 → c, q1 → −s, q2 → −c, q3 → s
    let q = k - 4.0 * (k * 0.25).floor();
    let odd = q - 2.0 * (q * 0.5).floor();
    let ge2 = (q * 0.5).floor();
    let sin_sign = 1.0 - 2.0 * ge2;
    let cos_sign = 1.0 - 2.0 * (odd + ge2 - 2.0 * odd * ge2);
    let sin_v = s + (c - s) * odd;
    let cos_v = c + (s - c) * odd;
    (sin_sign * sin_v, cos_sign * cos_v)
}

/// Bandwidth rule for the split kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// Median pairwise response distance within the node (per-node adaptive).
    MedianHeuristic,
    /// Fixed bandwidth, mainly for diagnostics and tests.
    Fixed(f64),
}

/// Forest hyperparameters. Every default is overridable per experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    /// Number of trees (B).
    pub trees: usize,
    /// Fraction of training rows subsampled without replacement per tree.
    pub subsample_fraction: f64,
    /// Minimum rows in a leaf; nodes smaller than twice this never split.
    pub min_leaf: usize,
    /// Covariates tried per split; `None` means ⌈√p⌉.
    pub mtry: Option<usize>,
    /// Random Fourier feature pairs (L) approximating the Gaussian kernel.
    pub rff_features: usize,
    /// Cap on candidate thresholds per covariate per node.
    pub max_thresholds: usize,
    /// Split-kernel bandwidth rule.
    pub bandwidth: BandwidthRule,
    /// Master seed; tree b draws from an independent stream derived from it.
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 2000,
            subsample_fraction: 0.5,
            min_leaf: 5,
            mtry: None,
            rff_features: 50,
            max_thresholds: 256,
            bandwidth: BandwidthRule::MedianHeuristic,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::InvalidArgument("forest needs at least one tree".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "subsample fraction {} outside (0, 1]",
                self.subsample_fraction
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidArgument("min leaf size must be ≥ 1".into()));
        }
        if self.rff_features == 0 {
            return Err(Error::InvalidArgument("need ≥ 1 random Fourier feature".into()));
        }
        if self.max_thresholds == 0 {
            return Err(Error::InvalidArgument("need ≥ 1 candidate threshold".into()));
        }
        if self.mtry == Some(0) {
            return Err(Error::InvalidArgument("mtry must be ≥ 1 when given".into()));
        }
        if let BandwidthRule::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidArgument(format!("fixed bandwidth {h} must be positive")));
            }
        }
        Ok(())
    }
}

/// One tree node: an axis-aligned split or a leaf holding the in-bag training
/// rows that landed there. `count` on splits records the in-node row count so
/// variable importance is recomputable from the stored structure alone.
#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { rows: Vec<u32> },
    Split { covariate: u32, threshold: f64, count: u32, left: u32, right: u32 },
}

/// A grown tree: `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// In-bag rows of the leaf a test point falls into.
    fn leaf_rows(&self, s: &[f64]) -> &[u32] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { rows } => return rows,
                Node::Split { covariate, threshold, left, right, .. } => {
                    at = if s[*covariate as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Rows in the bag this tree was grown on (root node size).
    fn bag_size(&self) -> usize {
        match &self.nodes[0] {
            Node::Leaf { rows } => rows.len(),
            Node::Split { count, .. } => *count as usize,
        }
    }
}

/// A trained forest over `train_rows` rows of `covariates` summary columns.
/// `classes == 0` marks a scalar-response (regression) forest; a positive
/// value marks a categorical forest over 1-based labels `1..=classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    covariates: usize,
    train_rows: usize,
    classes: usize,
    config: ForestConfig,
}

/// Normalized relevance weights over training rows for one test point.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
}

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }
}

/// Row-major covariate matrix with O(1) cell access.
struct FlatMatrix {
    data: Vec<f64>,
    cols: usize,
}

impl FlatMatrix {
    fn get(&self, row: u32, col: usize) -> f64 {
        self.data[row as usize * self.cols + col]
    }
}

/// Response container shared by regression and classification training.
enum Response<'a> {
    Scalar(&'a [f64]),
    /// 0-based labels with the number of classes; embedded one-hot for the
    /// kernel computations.
    OneHot { labels: &'a [u32], classes: usize },
}

impl Response<'_> {
    /// Embedding dimension fed to the random features.
    fn dim(&self) -> usize {
        match self {
            Response::Scalar(_) => 1,
            Response::OneHot { classes, .. } => *classes,
        }
    }

    /// Do the given rows carry more than one distinct response value?
    fn has_spread(&self, rows: &[u32]) -> bool {
        match self {
            Response::Scalar(y) => {
                let first = y[rows[0] as usize];
                rows.iter().any(|&r| y[r as usize] != first)
            }
            Response::OneHot { labels, .. } => {
                let first = labels[rows[0] as usize];
                rows.iter().any(|&r| labels[r as usize] != first)
            }
        }
    }

    /// Median pairwise response distance over the rows (the kernel bandwidth
    /// heuristic). Falls back to the mean pairwise distance when ties put the
    /// median at zero; returns 0 only when all responses coincide.
    fn median_pairwise(&self, rows: &[u32]) -> f64 {
        match self {
            Response::Scalar(y) => {
                let mut vals: Vec<f64> = rows.iter().map(|&r| y[r as usize]).collect();
                median_pairwise_scalar(&mut vals)
            }
            Response::OneHot { labels, classes } => {
                // One-hot points are at mutual distance √2 (different class)
                // or 0 (same class); the median is one of those two values.
                let mut counts = vec![0u64; *classes];
                for &r in rows {
                    counts[labels[r as usize] as usize] += 1;
                }
                let n = rows.len() as u64;
                let pairs = n * (n - 1) / 2;
                let same: u64 = counts.iter().map(|&c| c * (c - 1) / 2).sum();
                let diff = pairs - same;
                if diff == 0 {
                    0.0
                } else if 2 * same >= pairs {
                    // Median collapses to zero; use the mean distance instead.
                    std::f64::consts::SQRT_2 * diff as f64 / pairs as f64
                } else {
                    std::f64::consts::SQRT_2
                }
            }
        }
    }

    /// Write the 2L-dimensional random-feature embedding of row `r` into
    /// `out` (cosines in the first half, sines in the second) for angles
    /// ⟨ω_l/h, y_r⟩. The 1/√L normalization is folded into the score instead
    /// of the features.
    fn fill_features(&self, r: u32, omegas: &[f64], inv_h: f64, out: &mut [f64]) {
        let l_count = out.len() / 2;
        let (cos_half, sin_half) = out.split_at_mut(l_count);
        match self {
            Response::Scalar(y) => {
                let v = y[r as usize] * inv_h;
                for l in 0..l_count {
                    let (s, c) = fast_sin_cos(omegas[l] * v);
                    cos_half[l] = c;
                    sin_half[l] = s;
                }
            }
            Response::OneHot { labels, classes } => {
                let lab = labels[r as usize] as usize;
                for l in 0..l_count {
                    let (s, c) = fast_sin_cos(omegas[l * classes + lab] * inv_h);
                    cos_half[l] = c;
                    sin_half[l] = s;
                }
            }
        }
    }
}

/// Median of the n(n−1)/2 pairwise absolute differences, located by value
/// bisection with a two-pointer count (O(n log n + n·iterations) instead of
/// materializing all pairs). Ties that push the median to zero fall back to
/// the mean pairwise difference.
fn median_pairwise_scalar(vals: &mut [f64]) -> f64 {
    vals.sort_unstable_by(f64::total_cmp);
    median_pairwise_from_sorted(vals)
}

/// The same median, assuming `vals` is already ascending. Large samples are
/// decimated to at most 512 evenly strided order statistics first — a stride
/// view of a sorted sample is still sorted, and a kernel bandwidth only needs
/// a couple of significant digits.
fn median_pairwise_from_sorted(vals: &[f64]) -> f64 {
    const DECIMATE_ABOVE: usize = 512;
    if vals.len() > DECIMATE_ABOVE {
        let stride = vals.len().div_ceil(DECIMATE_ABOVE);
        let dec: Vec<f64> = vals.iter().step_by(stride).copied().collect();
        return median_pairwise_from_sorted(&dec);
    }
    // Small samples (the bulk of tree nodes) materialize every pairwise
    // difference and select the median directly — cheaper than bisection and
    // exact. The zero-median tie fallback matches the bisection path.
    let n = vals.len();
    if (2..=64).contains(&n) {
        let pairs = n * (n - 1) / 2;
        let mut diffs = Vec::with_capacity(pairs);
        for j in 1..n {
            for i in 0..j {
                diffs.push(vals[j] - vals[i]);
            }
        }
        let half = pairs.div_ceil(2);
        let (_, med, _) = diffs.select_nth_unstable_by(half - 1, f64::total_cmp);
        if *med > 0.0 {
            return *med;
        }
        let sum: f64 = vals
            .iter()
            .enumerate()
            .map(|(j, &v)| v * (2 * j as i64 + 1 - n as i64) as f64)
            .sum();
        return (sum / pairs as f64).max(0.0);
    }
    let pairs = (n as u64) * (n as u64 - 1) / 2;
    let half = pairs.div_ceil(2);
    let count_le = |t: f64| -> u64 {
        let mut c = 0u64;
        let mut i = 0usize;
        for j in 0..n {
            while vals[j] - vals[i] > t {
                i += 1;
            }
            c += (j - i) as u64;
        }
        c
    };
    let full = vals[n - 1] - vals[0];
    if !(full > 0.0) {
        return 0.0;
    }
    if count_le(0.0) >= half {
        // Heavily tied sample: mean pairwise difference via sorted prefix
        // coefficients Σ_j y_(j)·(2j+1−n).
        let sum: f64 =
            vals.iter().enumerate().map(|(j, &v)| v * (2 * j as i64 + 1 - n as i64) as f64).sum();
        return (sum / pairs as f64).max(0.0);
    }
    let (mut lo, mut hi) = (0.0, full);
    for _ in 0..60 {
        // Nine significant digits are far beyond what a bandwidth needs and
        // each extra iteration costs a full two-pointer pass.
        if hi - lo <= 1e-9 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if count_le(mid) >= half {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Random Fourier feature map for a Gaussian kernel on scalar responses, the
/// public face of the split-scoring machinery.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    /// Frequencies already scaled by 1/bandwidth.
    omegas: Vec<f64>,
}

impl FeatureMap {
    /// Draw `features` base frequencies ω ~ N(0,1) and scale them for a
    /// Gaussian kernel `exp(−(x−y)²/(2·bandwidth²))`.
    pub fn gaussian<R: Rng + ?Sized>(
        features: usize,
        bandwidth: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if features == 0 {
            return Err(Error::InvalidArgument("need ≥ 1 random feature".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth {bandwidth} must be positive")));
        }
        let omegas = (0..features)
            .map(|_| std_normal(rng) / bandwidth)
            .collect();
        Ok(FeatureMap { omegas })
    }

    pub fn features(&self) -> usize {
        self.omegas.len()
    }
}

/// Squared-MMD split score between two scalar response samples under the
/// feature map's approximated Gaussian kernel, scaled by n_l·n_r/(n_l+n_r)².
pub fn mmd_split_score(y_left: &[f64], y_right: &[f64], fm: &FeatureMap) -> Result<f64> {
    if y_left.is_empty() || y_right.is_empty() {
        return Err(Error::Empty("both split sides need at least one response".into()));
    }
    if y_left.iter().chain(y_right).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite response value".into()));
    }
    let l_count = fm.omegas.len();
    let f_dim = 2 * l_count;
    let mut sum_l = vec![0.0; f_dim];
    let mut sum_r = vec![0.0; f_dim];
    let mut buf = vec![0.0; f_dim];
    let embed = |v: f64, out: &mut [f64]| {
        for l in 0..l_count {
            let (s, c) = (fm.omegas[l] * v).sin_cos();
            out[l] = c;
            out[l_count + l] = s;
        }
    };
    for &v in y_left {
        embed(v, &mut buf);
        for (acc, &x) in sum_l.iter_mut().zip(&buf) {
            *acc += x;
        }
    }
    for &v in y_right {
        embed(v, &mut buf);
        for (acc, &x) in sum_r.iter_mut().zip(&buf) {
            *acc += x;
        }
    }
    let mut total = sum_l.clone();
    for (t, &r) in total.iter_mut().zip(&sum_r) {
        *t += r;
    }
    Ok(scaled_mmd_from_sums(&sum_l, &total, y_left.len(), y_right.len(), fm.omegas.len()))
}

/// The one scoring formula shared by training and the public scorer:
/// ‖μ_left − μ_right‖²/L scaled by n_l·n_r/(n_l+n_r)², computed from the
/// left-side and whole-node feature sums.
fn scaled_mmd_from_sums(
    sum_left: &[f64],
    sum_total: &[f64],
    n_left: usize,
    n_right: usize,
    features: usize,
) -> f64 {
    let (nl, nr) = (n_left as f64, n_right as f64);
    let mut raw = 0.0;
    for (&sl, &st) in sum_left.iter().zip(sum_total) {
        let d = sl / nl - (st - sl) / nr;
        raw += d * d;
    }
    let n = nl + nr;
    raw / features as f64 * (nl * nr) / (n * n)
}

/// Train a regression forest of the summary matrix against one scalar
/// response column (one parameter dimension of the reference table).
pub fn train(x: &[Vec<f64>], y: &[f64], cfg: &ForestConfig) -> Result<Forest> {
    let resp = Response::Scalar(y);
    train_impl(x, y.len(), &resp, 0, cfg)
}

/// Train a classification forest on 1-based labels `1..=classes` (model
/// selection trains on the reference table's model-index column).
pub fn train_classifier(
    x: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    cfg: &ForestConfig,
) -> Result<Forest> {
    if classes == 0 {
        return Err(Error::InvalidArgument("need ≥ 1 class".into()));
    }
    let mut embedded = Vec::with_capacity(labels.len());
    for (i, &lab) in labels.iter().enumerate() {
        if lab == 0 || lab > classes {
            return Err(Error::InvalidArgument(format!(
                "label {lab} at row {i} outside 1..={classes}"
            )));
        }
        embedded.push((lab - 1) as u32);
    }
    let resp = Response::OneHot { labels: &embedded, classes };
    train_impl(x, labels.len(), &resp, classes, cfg)
}

fn train_impl(
    x: &[Vec<f64>],
    y_len: usize,
    resp: &Response<'_>,
    classes: usize,
    cfg: &ForestConfig,
) -> Result<Forest> {
    cfg.validate()?;
    let n = x.len();
    if n != y_len {
        return Err(Error::DimensionMismatch(format!("{n} covariate rows vs {y_len} responses")));
    }
    if n < 2 * cfg.min_leaf {
        return Err(Error::InvalidArgument(format!(
            "{n} rows cannot host two leaves of ≥ {}",
            cfg.min_leaf
        )));
    }
    let p = x[0].len();
    if p == 0 {
        return Err(Error::InvalidArgument("need ≥ 1 covariate column".into()));
    }
    let mut data = Vec::with_capacity(n * p);
    for (i, row) in x.iter().enumerate() {
        if row.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} covariates, row 0 has {p}",
                row.len()
            )));
        }
        for &v in row {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite covariate in row {i}")));
            }
            data.push(v);
        }
    }
    if let Response::Scalar(vals) = resp {
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite response at row {i}")));
        }
    }
    let flat = FlatMatrix { data, cols: p };
    let trees: Vec<Tree> = (0..cfg.trees)
        .into_par_iter()
        .map(|b| grow_tree(&flat, n, resp, cfg, b as u64))
        .collect();
    Ok(Forest { trees, covariates: p, train_rows: n, classes, config: cfg.clone() })
}

/// A node's row set during growth: once in ascending training-index order
/// (the canonical leaf representation), once per covariate in value order,
/// and — for scalar responses — once in response order. Keeping the orders
/// and splitting them by stable partition removes all per-node sorting from
/// the hot path.
struct NodeRows {
    asc: Vec<u32>,
    by_cov: Vec<Vec<u32>>,
    by_y: Vec<u32>,
}

/// Per-tree scratch reused across nodes so the hot path never touches the
/// allocator: feature embeddings are overwritten (never re-zeroed), and `pos`
/// maps a training row to its local index within the node being split.
struct GrowScratch {
    pos: Vec<u32>,
    feats: Vec<f64>,
    total: Vec<f64>,
    sum_left: Vec<f64>,
    vals: Vec<f64>,
    cuts: Vec<(f64, usize)>,
    chosen: Vec<(f64, usize)>,
}

/// Grow one tree on an independent random stream so the forest is identical
/// for any thread count.
fn grow_tree(flat: &FlatMatrix, n: usize, resp: &Response<'_>, cfg: &ForestConfig, b: u64) -> Tree {
    let mut rng = stream_rng(cfg.seed, b);
    let n_bag = ((cfg.subsample_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut bag: Vec<u32> =
        rand::seq::index::sample(&mut rng, n, n_bag).into_iter().map(|i| i as u32).collect();
    bag.sort_unstable();
    let omegas: Vec<f64> = (0..cfg.rff_features * resp.dim())
        .map(|_| std_normal(&mut rng))
        .collect();
    let by_cov: Vec<Vec<u32>> = (0..flat.cols)
        .map(|q| {
            let mut v = bag.clone();
            v.sort_unstable_by(|&a, &b| flat.get(a, q).total_cmp(&flat.get(b, q)).then(a.cmp(&b)));
            v
        })
        .collect();
    let by_y = match resp {
        Response::Scalar(y) => {
            let mut v = bag.clone();
            v.sort_unstable_by(|&a, &b| {
                y[a as usize].total_cmp(&y[b as usize]).then(a.cmp(&b))
            });
            v
        }
        // The classifier bandwidth comes from class counts, not an order.
        Response::OneHot { .. } => Vec::new(),
    };

    let f_dim = 2 * cfg.rff_features;
    let mut scratch = GrowScratch {
        pos: vec![0u32; n],
        feats: vec![0.0; n_bag * f_dim],
        total: vec![0.0; f_dim],
        sum_left: vec![0.0; f_dim],
        vals: Vec::with_capacity(n_bag),
        cuts: Vec::with_capacity(n_bag),
        chosen: Vec::with_capacity(cfg.max_thresholds),
    };
    let mut nodes = vec![Node::Leaf { rows: Vec::new() }];
    let mut work = vec![(0usize, NodeRows { asc: bag, by_cov, by_y })];
    while let Some((at, rows)) = work.pop() {
        match try_split(flat, resp, cfg, &omegas, &rows, &mut scratch, &mut rng) {
            None => nodes[at] = Node::Leaf { rows: rows.asc },
            Some((covariate, threshold, left_rows, right_rows)) => {
                let left = nodes.len() as u32;
                nodes.push(Node::Leaf { rows: Vec::new() });
                nodes.push(Node::Leaf { rows: Vec::new() });
                nodes[at] = Node::Split {
                    covariate,
                    threshold,
                    count: rows.asc.len() as u32,
                    left,
                    right: left + 1,
                };
                work.push((left as usize, left_rows));
                work.push((left as usize + 1, right_rows));
            }
        }
    }
    Tree { nodes }
}

type SplitChoice = (u32, f64, NodeRows, NodeRows);

/// Find the best (covariate, threshold) pair at a node, or `None` when the
/// node is too small, the response has no spread, or every candidate scores
/// at the noise floor.
fn try_split(
    flat: &FlatMatrix,
    resp: &Response<'_>,
    cfg: &ForestConfig,
    omegas: &[f64],
    node: &NodeRows,
    scratch: &mut GrowScratch,
    rng: &mut impl Rng,
) -> Option<SplitChoice> {
    let rows = &node.asc;
    let n = rows.len();
    if n < 2 * cfg.min_leaf || !resp.has_spread(rows) {
        return None;
    }
    let h = match cfg.bandwidth {
        BandwidthRule::Fixed(v) => v,
        BandwidthRule::MedianHeuristic => match resp {
            Response::Scalar(y) => {
                scratch.vals.clear();
                scratch.vals.extend(node.by_y.iter().map(|&r| y[r as usize]));
                median_pairwise_from_sorted(&scratch.vals)
            }
            Response::OneHot { .. } => resp.median_pairwise(rows),
        },
    };
    if !(h > 0.0) {
        return None;
    }
    let inv_h = 1.0 / h;
    let l = cfg.rff_features;
    let f_dim = 2 * l;
    let pos = &mut scratch.pos[..];
    let feats = &mut scratch.feats[..n * f_dim];
    let total = &mut scratch.total[..];
    total.fill(0.0);
    for (i, &r) in rows.iter().enumerate() {
        pos[r as usize] = i as u32;
        let slot = &mut feats[i * f_dim..(i + 1) * f_dim];
        resp.fill_features(r, omegas, inv_h, slot);
        for (t, &v) in total.iter_mut().zip(slot.iter()) {
            *t += v;
        }
    }

    let p = flat.cols;
    let mtry = cfg.mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).clamp(1, p);
    let candidates: Vec<usize> = if mtry >= p {
        (0..p).collect()
    } else {
        let mut picks = rand::seq::index::sample(rng, p, mtry).into_vec();
        picks.sort_unstable();
        picks
    };

    // Ties in score keep the first maximum; covariates ascend and thresholds
    // ascend within each covariate, so ties break toward the lowest covariate
    // index, then the lowest threshold.
    let mut best: Option<(f64, u32, f64)> = None;
    let sum_left = &mut scratch.sum_left[..];
    for &q in &candidates {
        let order = &node.by_cov[q];
        // Cut points: (threshold, rows-on-the-left count) between consecutive
        // distinct values. When the midpoint rounds up to the right value the
        // left value itself still separates the groups exactly.
        let cuts = &mut scratch.cuts;
        cuts.clear();
        let mut i = 0usize;
        while i < n {
            let v = flat.get(order[i], q);
            let mut j = i + 1;
            while j < n && flat.get(order[j], q) == v {
                j += 1;
            }
            if j < n {
                let w = flat.get(order[j], q);
                let mid = 0.5 * (v + w);
                cuts.push((if mid < w { mid } else { v }, j));
            }
            i = j;
        }
        if cuts.is_empty() {
            continue;
        }
        let chosen: &[(f64, usize)] = if cuts.len() <= cfg.max_thresholds {
            cuts
        } else {
            // Quantile-spaced subset: walk evenly spaced targets through the
            // in-node empirical mass and keep the first cut at or past each.
            let m = cfg.max_thresholds;
            let out = &mut scratch.chosen;
            out.clear();
            let mut k = 0usize;
            for t in 1..=m {
                let target = t as f64 * n as f64 / (m as f64 + 1.0);
                while k < cuts.len() && (cuts[k].1 as f64) < target {
                    k += 1;
                }
                if k == cuts.len() {
                    break;
                }
                if out.last() != Some(&cuts[k]) {
                    out.push(cuts[k]);
                }
            }
            out
        };
        sum_left.fill(0.0);
        let mut consumed = 0usize;
        for &(threshold, cut) in chosen {
            while consumed < cut {
                let slot = &feats[pos[order[consumed] as usize] as usize * f_dim..][..f_dim];
                for (acc, &v) in sum_left.iter_mut().zip(slot) {
                    *acc += v;
                }
                consumed += 1;
            }
            let (n_l, n_r) = (cut, n - cut);
            if n_l < cfg.min_leaf || n_r < cfg.min_leaf {
                continue;
            }
            let score = scaled_mmd_from_sums(sum_left, total, n_l, n_r, l);
            if best.is_none_or(|(s, _, _)| score > s) {
                best = Some((score, q as u32, threshold));
            }
        }
    }

    let (score, covariate, threshold) = best?;
    if score <= SPLIT_TOL {
        return None;
    }
    let goes_left = |r: u32| flat.get(r, covariate as usize) <= threshold;
    let split_list = |list: &[u32]| {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &r in list {
            if goes_left(r) {
                left.push(r);
            } else {
                right.push(r);
            }
        }
        (left, right)
    };
    let (asc_l, asc_r) = split_list(rows);
    let (y_l, y_r) = split_list(&node.by_y);
    let mut left = NodeRows { asc: asc_l, by_cov: Vec::with_capacity(p), by_y: y_l };
    let mut right = NodeRows { asc: asc_r, by_cov: Vec::with_capacity(p), by_y: y_r };
    for q in 0..p {
        let (lq, rq) = split_list(&node.by_cov[q]);
        left.by_cov.push(lq);
        right.by_cov.push(rq);
    }
    Some((covariate, threshold, left, right))
}

impl Forest {
    /// Number of summary columns the forest was trained on.
    pub fn covariates(&self) -> usize {
        self.covariates
    }

    /// Number of training rows weights are defined over.
    pub fn train_rows(&self) -> usize {
        self.train_rows
    }

    /// Class count for categorical forests; 0 for regression forests.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    /// Relevance weights of every training row for a test summary vector:
    /// w_j = (1/B) Σ_b 1[j co-leafed with the test point in tree b] / |leaf_b|.
    /// The formula already sums to one; no renormalization is applied.
    pub fn weights(&self, s_test: &[f64]) -> Result<WeightVector> {
        if s_test.len() != self.covariates {
            return Err(Error::DimensionMismatch(format!(
                "test point has {} covariates, forest has {}",
                s_test.len(),
                self.covariates
            )));
        }
        if s_test.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite test covariate".into()));
        }
        let mut w = vec![0.0; self.train_rows];
        let inv_b = 1.0 / self.trees.len() as f64;
        for tree in &self.trees {
            let rows = tree.leaf_rows(s_test);
            let share = inv_b / rows.len() as f64;
            for &r in rows {
                w[r as usize] += share;
            }
        }
        debug_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        Ok(WeightVector { w })
    }

    /// Weights for many test points, computed in parallel.
    pub fn weights_batch(&self, tests: &[Vec<f64>]) -> Result<Vec<WeightVector>> {
        tests.par_iter().map(|s| self.weights(s)).collect()
    }

    /// Per-covariate split importance: each split contributes the fraction of
    /// its tree's bag flowing through it, summed and normalized to one. A
    /// forest with no splits at all reports a uniform profile.
    pub fn importance(&self) -> Vec<f64> {
        let mut scores = vec![0.0; self.covariates];
        for tree in &self.trees {
            let bag = tree.bag_size() as f64;
            for node in &tree.nodes {
                if let Node::Split { covariate, count, .. } = node {
                    scores[*covariate as usize] += *count as f64 / bag;
                }
            }
        }
        let total: f64 = scores.iter().sum();
        if total > 0.0 {
            scores.iter_mut().for_each(|v| *v /= total);
        } else {
            scores.iter_mut().for_each(|v| *v = 1.0 / self.covariates as f64);
        }
        scores
    }
}

/// Weighted empirical CDF Σ w_j·1(y_j ≤ t) (right-continuous in t).
pub fn weighted_cdf(y: &[f64], w: &[f64], t: f64) -> f64 {
    debug_assert_eq!(y.len(), w.len());
    y.iter().zip(w).filter(|(&v, _)| v <= t).map(|(_, &wi)| wi).sum()
}

/// Generalized-inverse quantile inf{t : cdf(t) ≥ u} of the weighted sample.
pub fn weighted_quantile(y: &[f64], w: &[f64], u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level {u} outside (0, 1)")));
    }
    Ok(SortedWeighted::new(y, w)?.quantile(u))
}

/// Class probabilities P̂(m) = Σ_j w_j·1(labels_j = m) over 1-based labels.
pub fn class_probs(labels: &[usize], w: &[f64], classes: usize) -> Result<Vec<f64>> {
    if labels.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} weights",
            labels.len(),
            w.len()
        )));
    }
    let mut probs = vec![0.0; classes];
    for (i, (&lab, &wi)) in labels.iter().zip(w).enumerate() {
        if lab == 0 || lab > classes {
            return Err(Error::InvalidArgument(format!(
                "label {lab} at row {i} outside 1..={classes}"
            )));
        }
        probs[lab - 1] += wi;
    }
    Ok(probs)
}

impl Forest {
    /// Serialize to an in-memory container image.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(KIND_FOREST);
        w.u32(self.covariates as u32);
        w.u64(self.train_rows as u64);
        w.u32(self.classes as u32);
        let c = &self.config;
        w.u32(c.trees as u32);
        w.f64(c.subsample_fraction);
        w.u32(c.min_leaf as u32);
        match c.mtry {
            None => w.u8(0),
            Some(m) => {
                w.u8(1);
                w.u32(m as u32);
            }
        }
        w.u32(c.rff_features as u32);
        w.u32(c.max_thresholds as u32);
        match c.bandwidth {
            BandwidthRule::MedianHeuristic => w.u8(0),
            BandwidthRule::Fixed(h) => {
                w.u8(1);
                w.f64(h);
            }
        }
        w.u64(c.seed);
        w.u32(self.trees.len() as u32);
        for tree in &self.trees {
            w.u32(tree.nodes.len() as u32);
            for node in &tree.nodes {
                match node {
                    Node::Leaf { rows } => {
                        w.u8(0);
                        w.u32_slice(rows);
                    }
                    Node::Split { covariate, threshold, count, left, right } => {
                        w.u8(1);
                        w.u32(*covariate);
                        w.f64(*threshold);
                        w.u32(*count);
                        w.u32(*left);
                        w.u32(*right);
                    }
                }
            }
        }
        w.into_bytes()
    }

    /// Reconstruct a forest from a container image, validating structure.
    pub fn from_bytes(buf: &[u8]) -> Result<Forest> {
        let mut r = ByteReader::open(buf, KIND_FOREST)?;
        let covariates = r.u32()? as usize;
        let train_rows = r.u64()? as usize;
        let classes = r.u32()? as usize;
        let trees_cfg = r.u32()? as usize;
        let subsample_fraction = r.f64()?;
        let min_leaf = r.u32()? as usize;
        let mtry = match r.u8()? {
            0 => None,
            1 => Some(r.u32()? as usize),
            tag => return Err(r.corrupt(format!("bad mtry tag {tag}"))),
        };
        let rff_features = r.u32()? as usize;
        let max_thresholds = r.u32()? as usize;
        let bandwidth = match r.u8()? {
            0 => BandwidthRule::MedianHeuristic,
            1 => BandwidthRule::Fixed(r.f64()?),
            tag => return Err(r.corrupt(format!("bad bandwidth tag {tag}"))),
        };
        let seed = r.u64()?;
        let config = ForestConfig {
            trees: trees_cfg,
            subsample_fraction,
            min_leaf,
            mtry,
            rff_features,
            max_thresholds,
            bandwidth,
            seed,
        };
        config.validate()?;
        let n_trees = r.u32()? as usize;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            if n_nodes == 0 {
                return Err(r.corrupt("tree with zero nodes"));
            }
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let node = match r.u8()? {
                    0 => {
                        let rows = r.u32_vec()?;
                        if rows.iter().any(|&x| x as usize >= train_rows) {
                            return Err(r.corrupt("leaf row index out of range"));
                        }
                        Node::Leaf { rows }
                    }
                    1 => {
                        let covariate = r.u32()?;
                        if covariate as usize >= covariates {
                            return Err(r.corrupt("split covariate out of range"));
                        }
                        let threshold = r.f64()?;
                        let count = r.u32()?;
                        let left = r.u32()?;
                        let right = r.u32()?;
                        if left as usize >= n_nodes || right as usize >= n_nodes {
                            return Err(r.corrupt("split child index out of range"));
                        }
                        Node::Split { covariate, threshold, count, left, right }
                    }
                    tag => return Err(r.corrupt(format!("bad node tag {tag}"))),
                };
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        r.finish()?;
        Ok(Forest { trees, covariates, train_rows, classes, config })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Forest> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Forest::from_bytes(&bytes)
    }
}
