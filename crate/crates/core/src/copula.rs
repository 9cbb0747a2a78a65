//! t-copula machinery: Student-t CDF/quantile, copula log-density,
//! maximum-likelihood fitting on pseudo-observations, and the meta-t
//! posterior that stitches estimated marginals into a joint density.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::density::MarginalDensity;
use crate::wstats::SortedWeighted;
use crate::{Error, Result};

/// Degrees-of-freedom search bounds for fitting. Evaluation accepts any
/// positive ν; estimates at the upper bound are flagged as the Gaussian
/// limit.
pub const NU_MIN: f64 = 1.0;
pub const NU_MAX: f64 = 1000.0;

/// Standard normal quantile via the inverse error function.
pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * statrs::function::erf::erf_inv(2.0 * p - 1.0)
}

/// Student-t CDF with `nu` degrees of freedom, evaluated through the
/// regularized incomplete beta function.
pub fn student_t_cdf(x: f64, nu: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let tail = 0.5 * beta_reg(nu / 2.0, 0.5, nu / (nu + x * x));
    if x < 0.0 { tail } else { 1.0 - tail }
}

/// Log density of the Student-t distribution with `nu` degrees of freedom.
pub fn student_t_log_pdf(x: f64, nu: f64) -> f64 {
    ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()
}

/// Student-t quantile by safeguarded Newton iteration inside a bisection
/// bracket on the beta-function CDF; converges to relative tolerance 1e-12.
pub fn student_t_quantile(p: f64, nu: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile probability must lie strictly in (0,1), got {p}"
        )));
    }
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "degrees of freedom must be positive and finite, got {nu}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Work on the lower tail (x < 0) and flip at the end.
    let pl = p.min(1.0 - p);
    // Bracket [lo, 0] with T(lo) <= pl.
    let mut lo = -1.0;
    let mut expansions = 0;
    while student_t_cdf(lo, nu) > pl {
        lo *= 2.0;
        expansions += 1;
        if expansions > 400 {
            return Err(Error::Numeric(format!(
                "student-t quantile bracket failed to expand for p = {p}, nu = {nu}"
            )));
        }
    }
    let mut hi = 0.0;
    let mut x = std_normal_quantile(pl).clamp(lo, hi);
    if !x.is_finite() {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = student_t_cdf(x, nu) - pl;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            break;
        }
        let pdf = student_t_log_pdf(x, nu).exp();
        let newton = x - f / pdf;
        x = if pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let x = 0.5 * (lo + hi);
    Ok(if p < 0.5 { x } else { -x })
}

/// Validated t-copula parameters with a cached Cholesky factor of the
/// scale matrix.
#[derive(Debug, Clone)]
pub struct TCopulaParams {
    nu: f64,
    rho: DMatrix<f64>,
    l: DMatrix<f64>,
    half_log_det: f64,
}

impl TCopulaParams {
    /// Validates ν > 0 and ρ symmetric, unit-diagonal, positive-definite.
    pub fn new(nu: f64, rho: DMatrix<f64>) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "copula degrees of freedom must be positive and finite, got {nu}"
            )));
        }
        if !rho.is_square() || rho.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "copula scale matrix must be square and nonempty".into(),
            ));
        }
        let d = rho.nrows();
        for i in 0..d {
            if (rho[(i, i)] - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "scale matrix diagonal entry ({i},{i}) = {} is not 1",
                    rho[(i, i)]
                )));
            }
            for j in (i + 1)..d {
                if (rho[(i, j)] - rho[(j, i)]).abs() > 1e-10 {
                    return Err(Error::InvalidArgument(format!(
                        "scale matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let chol = nalgebra::Cholesky::new(rho.clone()).ok_or_else(|| {
            Error::Degenerate("copula scale matrix is not positive-definite".into())
        })?;
        let l = chol.l();
        let half_log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
        Ok(TCopulaParams { nu, rho, l, half_log_det })
    }

    /// Identity scale matrix copula of dimension `d`.
    pub fn identity(nu: f64, d: usize) -> Result<Self> {
        TCopulaParams::new(nu, DMatrix::identity(d, d))
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    /// Squared Mahalanobis norm zᵀρ⁻¹z via the cached factor.
    fn mahalanobis(&self, z: &DVector<f64>) -> f64 {
        let x = self
            .l
            .solve_lower_triangular(z)
            .expect("cached Cholesky factor has positive diagonal");
        x.norm_squared()
    }

    /// Log density of the d-variate t distribution t_{d,ν,ρ} at `z`.
    pub fn mvt_log_pdf(&self, z: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        let m = self.mahalanobis(z);
        ln_gamma((self.nu + d) / 2.0)
            - ln_gamma(self.nu / 2.0)
            - 0.5 * d * (self.nu * std::f64::consts::PI).ln()
            - self.half_log_det
            - 0.5 * (self.nu + d) * (m / self.nu).ln_1p()
    }
}

/// Log t-copula density at a strictly interior point of the unit cube:
/// `log t_{d,ν,ρ}(z) − Σ log t_ν(z_k)` with `z_k = T_ν⁻¹(u_k)`.
pub fn t_copula_log_density(u: &[f64], params: &TCopulaParams) -> Result<f64> {
    if u.len() != params.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, copula has dimension {}",
            u.len(),
            params.dim()
        )));
    }
    if u.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidArgument(
            "copula density needs coordinates strictly inside (0,1)".into(),
        ));
    }
    let mut z = DVector::zeros(u.len());
    let mut uni_sum = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        let zk = student_t_quantile(uk, params.nu)?;
        z[k] = zk;
        uni_sum += student_t_log_pdf(zk, params.nu);
    }
    Ok(params.mvt_log_pdf(&z) - uni_sum)
}

/// Draws `n` rows from the t-copula: z ~ t_{d,ν,ρ}, u_k = T_ν(z_k).
pub fn sample_t_copula<R: Rng + ?Sized>(
    params: &TCopulaParams,
    n: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let d = params.dim();
    let chi2 = Gamma::new(params.nu / 2.0, 2.0).expect("nu validated positive");
    (0..n)
        .map(|_| {
            let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let w: f64 = chi2.sample(rng);
            let scale = (params.nu / w).sqrt();
            let z = &params.l * eps * scale;
            (0..d).map(|k| student_t_cdf(z[k], params.nu)).collect()
        })
        .collect()
}

/// Pseudo-observation matrix: rows of estimated-CDF values retained only
/// when every coordinate is strictly inside (0,1).
#[derive(Debug, Clone)]
pub struct PseudoObsMatrix {
    rows: Vec<Vec<f64>>,
    kept: Vec<usize>,
    dropped: usize,
    d: usize,
}

impl PseudoObsMatrix {
    /// Filters a full matrix of CDF values, dropping and counting rows with
    /// any boundary coordinate (0 or 1). Values outside [0,1] or NaN are
    /// rejected outright.
    pub fn from_matrix(u: &[Vec<f64>]) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::Empty("pseudo-observation matrix has no rows".into()));
        }
        let d = u[0].len();
        if d == 0 {
            return Err(Error::Empty("pseudo-observation rows have no columns".into()));
        }
        let mut rows = Vec::new();
        let mut kept = Vec::new();
        let mut dropped = 0usize;
        for (j, row) in u.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {j} has {} columns, expected {d}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| v.is_nan() || v < 0.0 || v > 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "row {j} holds a value outside [0,1]; CDF estimates are corrupt"
                )));
            }
            if row.iter().all(|&v| v > 0.0 && v < 1.0) {
                rows.push(row.clone());
                kept.push(j);
            } else {
                dropped += 1;
            }
        }
        if rows.is_empty() {
            return Err(Error::Empty(
                "every pseudo-observation row hit the CDF boundary".into(),
            ));
        }
        Ok(PseudoObsMatrix { rows, kept, dropped, d })
    }

    /// Builds pseudo-observations from per-parameter weighted CDFs applied
    /// to the parameter columns themselves: `u_k^{(j)} = F̂_k(θ_k^{(j)})`.
    pub fn from_cdfs(cdfs: &[SortedWeighted], columns: &[Vec<f64>]) -> Result<Self> {
        if cdfs.len() != columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} CDF evaluators vs {} parameter columns",
                cdfs.len(),
                columns.len()
            )));
        }
        if columns.is_empty() {
            return Err(Error::Empty("no parameter columns".into()));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(
                "parameter columns have unequal lengths".into(),
            ));
        }
        let u: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                cdfs.iter()
                    .zip(columns)
                    .map(|(f, c)| f.cdf(c[j]))
                    .collect()
            })
            .collect();
        PseudoObsMatrix::from_matrix(&u)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Original row indices of the retained rows.
    pub fn kept_indices(&self) -> &[usize] {
        &self.kept
    }

    pub fn dropped_count(&self) -> usize {
        self.dropped
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Result of a t-copula fit: parameters, the accepted log-likelihood value
/// after each outer iteration, and whether ν landed at the Gaussian-limit
/// bound.
#[derive(Debug, Clone)]
pub struct TCopulaFit {
    pub params: TCopulaParams,
    pub log_lik_trace: Vec<f64>,
    pub gaussian_limit: bool,
}

/// Cholesky factor with ridge repair: on failure adds 1e-8 to the diagonal
/// and renormalizes back to unit diagonal, warning each time.
fn chol_with_repair(rho: &mut DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    for attempt in 0..6 {
        if let Some(chol) = nalgebra::Cholesky::new(rho.clone()) {
            let l = chol.l();
            let half_log_det: f64 = (0..rho.nrows()).map(|i| l[(i, i)].ln()).sum();
            return Ok((l, half_log_det));
        }
        log::warn!(
            "scale matrix iterate not positive-definite (attempt {}); applying ridge repair",
            attempt + 1
        );
        let d = rho.nrows();
        for i in 0..d {
            rho[(i, i)] += 1e-8;
        }
        let diag: Vec<f64> = (0..d).map(|i| rho[(i, i)].sqrt()).collect();
        for i in 0..d {
            for j in 0..d {
                rho[(i, j)] /= diag[i] * diag[j];
            }
        }
    }
    Err(Error::Numeric(
        "scale matrix iterate stayed non-positive-definite after ridge repairs".into(),
    ))
}

/// Copula log-likelihood of quantile-transformed rows `z` under (ν, L).
fn copula_log_lik(z: &[DVector<f64>], nu: f64, l: &DMatrix<f64>, half_log_det: f64) -> f64 {
    let d = z[0].len() as f64;
    let mv_const = ln_gamma((nu + d) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * d * (nu * std::f64::consts::PI).ln()
        - half_log_det;
    let uni_const =
        ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    let mut ll = 0.0;
    for zj in z {
        let x = l
            .solve_lower_triangular(zj)
            .expect("factor has positive diagonal");
        let m = x.norm_squared();
        ll += mv_const - 0.5 * (nu + d) * (m / nu).ln_1p();
        for &zk in zj.iter() {
            ll -= uni_const - 0.5 * (nu + 1.0) * (zk * zk / nu).ln_1p();
        }
    }
    ll
}

/// Quantile-transforms the pseudo-observations at a given ν.
fn transform_rows(u: &PseudoObsMatrix, nu: f64) -> Result<Vec<DVector<f64>>> {
    u.rows()
        .iter()
        .map(|row| {
            let mut z = DVector::zeros(row.len());
            for (k, &v) in row.iter().enumerate() {
                z[k] = student_t_quantile(v, nu)?;
            }
            Ok(z)
        })
        .collect()
}

/// One latent-scale-weighted correlation fixed-point pass for ρ at fixed ν.
fn cm_rho_step(z: &[DVector<f64>], rho: &DMatrix<f64>, nu: f64) -> Result<DMatrix<f64>> {
    let d = rho.nrows();
    let n = z.len() as f64;
    let mut current = rho.clone();
    for _ in 0..50 {
        let (l, _) = chol_with_repair(&mut current)?;
        let mut s = DMatrix::zeros(d, d);
        for zj in z {
            let x = l
                .solve_lower_triangular(zj)
                .expect("factor has positive diagonal");
            let kappa = (nu + d as f64) / (nu + x.norm_squared());
            for a in 0..d {
                for b in a..d {
                    s[(a, b)] += kappa * zj[a] * zj[b];
                }
            }
        }
        s /= n;
        for a in 0..d {
            for b in 0..a {
                s[(a, b)] = s[(b, a)];
            }
        }
        let diag: Vec<f64> = (0..d).map(|i| s[(i, i)].sqrt()).collect();
        let mut next = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                next[(a, b)] = s[(a, b)] / (diag[a] * diag[b]);
            }
        }
        let delta = (&next - &current).abs().max();
        current = next;
        if delta < 1e-10 {
            break;
        }
    }
    chol_with_repair(&mut current)?;
    Ok(current)
}

/// Golden-section maximization of `f` on [a, b], returning the best
/// evaluated point (endpoints included).
fn golden_max(a: f64, b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (a, b);
    let mut best = {
        let fa = f(a);
        let fb = f(b);
        if fa >= fb { (a, fa) } else { (b, fb) }
    };
    let mut c = hi - INVPHI * (hi - lo);
    let mut d = lo + INVPHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INVPHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INVPHI * (hi - lo);
            fd = f(d);
        }
        let (x, fx) = if fc >= fd { (c, fc) } else { (d, fd) };
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Fits (ν, ρ) by maximum likelihood on the retained pseudo-observations.
///
/// Coordinate ascent: ρ by the latent-scale-weighted correlation fixed
/// point at fixed ν, ν by golden-section search on the profiled
/// log-likelihood over log ν ∈ [log 1, log 1000]. Every candidate update is
/// accepted only when it does not lower the log-likelihood, so the recorded
/// trace is monotone by construction; this is asserted before returning.
/// Convergence: successive outer log-likelihoods within 1e-8, or 200 outer
/// iterations.
pub fn fit_t_copula(u: &PseudoObsMatrix) -> Result<TCopulaFit> {
    let n = u.len();
    let d = u.dim();
    if n < d + 2 {
        return Err(Error::Empty(format!(
            "need at least d+2 = {} retained rows to fit a {d}-dimensional copula, got {n}",
            d + 2
        )));
    }
    // Initialize ρ from the correlation of normal scores.
    let scores: Vec<DVector<f64>> = u
        .rows()
        .iter()
        .map(|row| DVector::from_iterator(d, row.iter().map(|&v| std_normal_quantile(v))))
        .collect();
    let mut rho = {
        let mut s = DMatrix::zeros(d, d);
        for zj in &scores {
            for a in 0..d {
                for b in 0..d {
                    s[(a, b)] += zj[a] * zj[b];
                }
            }
        }
        s /= n as f64;
        let diag: Vec<f64> = (0..d).map(|i| s[(i, i)].sqrt()).collect();
        let mut r = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                r[(a, b)] = s[(a, b)] / (diag[a] * diag[b]);
            }
        }
        chol_with_repair(&mut r)?;
        r
    };
    let mut nu = 20.0_f64;
    let mut z = transform_rows(u, nu)?;
    let mut current_ll = {
        let (l, hld) = chol_with_repair(&mut rho)?;
        copula_log_lik(&z, nu, &l, hld)
    };
    let mut trace = vec![current_ll];
    let (ln_lo, ln_hi) = (NU_MIN.ln(), NU_MAX.ln());
    for outer in 0..200 {
        // ρ update at fixed ν.
        let rho_cand = cm_rho_step(&z, &rho, nu)?;
        {
            let mut rc = rho_cand.clone();
            let (l, hld) = chol_with_repair(&mut rc)?;
            let ll = copula_log_lik(&z, nu, &l, hld);
            if ll >= current_ll {
                rho = rc;
                current_ll = ll;
            }
        }
        // ν update at fixed ρ; the first pass searches the full range,
        // later passes a ±1 window in log ν around the current value.
        let (a, b) = if outer == 0 {
            (ln_lo, ln_hi)
        } else {
            ((nu.ln() - 1.0).max(ln_lo), (nu.ln() + 1.0).min(ln_hi))
        };
        let (l, hld) = chol_with_repair(&mut rho)?;
        let mut cache: Option<(f64, Vec<DVector<f64>>)> = None;
        let (best_ln_nu, best_ll) = golden_max(a, b, 1e-3, |ln_nu| {
            let cand_nu = ln_nu.exp();
            match transform_rows(u, cand_nu) {
                Ok(zc) => {
                    let ll = copula_log_lik(&zc, cand_nu, &l, hld);
                    if cache.as_ref().is_none_or(|(stored_ll, _)| ll > *stored_ll) {
                        cache = Some((ll, zc));
                    }
                    ll
                }
                Err(_) => f64::NEG_INFINITY,
            }
        });
        if best_ll >= current_ll {
            nu = best_ln_nu.exp();
            current_ll = best_ll;
            if let Some((cached_ll, zc)) = cache.take() {
                if cached_ll == best_ll {
                    z = zc;
                } else {
                    z = transform_rows(u, nu)?;
                }
            } else {
                z = transform_rows(u, nu)?;
            }
        }
        let prev = *trace.last().expect("trace seeded");
        trace.push(current_ll);
        if current_ll - prev < 1e-8 {
            break;
        }
    }
    for w in trace.windows(2) {
        assert!(
            w[1] >= w[0],
            "copula fit log-likelihood decreased: {} -> {}",
            w[0],
            w[1]
        );
    }
    let params = TCopulaParams::new(nu, rho)?;
    let gaussian_limit = nu >= NU_MAX * (1.0 - 1e-6);
    Ok(TCopulaFit { params, log_lik_trace: trace, gaussian_limit })
}

/// The reconstructed joint posterior: per-parameter marginal densities and
/// weighted CDF/quantile evaluators tied together by a fitted t-copula
/// (`None` = independence).
#[derive(Debug, Clone)]
pub struct MetaTPosterior {
    marginals: Vec<MarginalDensity>,
    cdfs: Vec<SortedWeighted>,
    copula: Option<TCopulaParams>,
}

impl MetaTPosterior {
    pub fn new(
        marginals: Vec<MarginalDensity>,
        cdfs: Vec<SortedWeighted>,
        copula: Option<TCopulaParams>,
    ) -> Result<Self> {
        if marginals.len() != cdfs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} marginal densities vs {} CDF evaluators",
                marginals.len(),
                cdfs.len()
            )));
        }
        if marginals.is_empty() {
            return Err(Error::Empty("meta-t posterior needs at least one marginal".into()));
        }
        if let Some(params) = &copula {
            if params.dim() != marginals.len() {
                return Err(Error::DimensionMismatch(format!(
                    "copula dimension {} vs {} marginals",
                    params.dim(),
                    marginals.len()
                )));
            }
        }
        Ok(MetaTPosterior { marginals, cdfs, copula })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn copula(&self) -> Option<&TCopulaParams> {
        self.copula.as_ref()
    }

    /// Joint log density: copula term at u = F̂(θ) plus the sum of marginal
    /// log densities. Returns −∞ when any marginal vanishes or any CDF
    /// value hits the boundary (never errors).
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.dim() {
            return f64::NEG_INFINITY;
        }
        let mut marg_sum = 0.0;
        let mut u = Vec::with_capacity(self.dim());
        for ((m, f), &t) in self.marginals.iter().zip(&self.cdfs).zip(theta) {
            let ld = m.log_density(t);
            if ld == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            marg_sum += ld;
            u.push(f.cdf(t));
        }
        match &self.copula {
            None => marg_sum,
            Some(params) => {
                if u.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                    return f64::NEG_INFINITY;
                }
                match t_copula_log_density(&u, params) {
                    Ok(c) => c + marg_sum,
                    Err(_) => f64::NEG_INFINITY,
                }
            }
        }
    }

    /// Draws `n_plus` joint samples: z ~ t_{d,ν,ρ}, u = T_ν(z), θ_k the
    /// weighted marginal quantile at u_k. With an independence copula the
    /// coordinates are drawn from independent uniforms.
    pub fn sample<R: Rng + ?Sized>(&self, n_plus: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let d = self.dim();
        let u_rows: Vec<Vec<f64>> = match &self.copula {
            Some(params) => sample_t_copula(params, n_plus, rng),
            None => (0..n_plus)
                .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
                .collect(),
        };
        u_rows
            .into_iter()
            .map(|u| {
                u.iter()
                    .zip(&self.cdfs)
                    .map(|(&uk, f)| f.quantile(uk))
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::weighted_kde;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;

    /// Scaled one-sample KS statistic against a CDF: (√n+0.12+0.11/√n)·D.
    fn scaled_ks(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        sample.sort_by(f64::total_cmp);
        let n = sample.len() as f64;
        let mut d_max = 0.0_f64;
        for (i, &x) in sample.iter().enumerate() {
            let f = cdf(x);
            d_max = d_max
                .max((f - i as f64 / n).abs())
                .max(((i + 1) as f64 / n - f).abs());
        }
        (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d_max
    }

    #[test]
    fn t_cdf_matches_closed_forms() {
        for x in [-3.0f64, -1.2, -0.3, 0.0, 0.7, 2.5] {
            let c1 = 0.5 + x.atan() / std::f64::consts::PI;
            assert_relative_eq!(student_t_cdf(x, 1.0), c1, epsilon = 1e-12);
            let c2 = 0.5 * (1.0 + x / (2.0 + x * x).sqrt());
            assert_relative_eq!(student_t_cdf(x, 2.0), c2, epsilon = 1e-12);
            // Symmetry.
            assert_relative_eq!(
                student_t_cdf(x, 7.3) + student_t_cdf(-x, 7.3),
                1.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn t_quantile_matches_closed_forms_and_round_trips() {
        // ν=1: tan(π(p − ½)).
        for p in [0.01, 0.25, 0.75, 0.9, 0.999] {
            let expect = (std::f64::consts::PI * (p - 0.5)).tan();
            assert_relative_eq!(student_t_quantile(p, 1.0).unwrap(), expect, max_relative = 1e-10);
        }
        // ν=2: (2p−1)·√(2/(4p(1−p))).
        let p = 0.9f64;
        let expect = (2.0 * p - 1.0) * (2.0 / (4.0 * p * (1.0 - p))).sqrt();
        assert_relative_eq!(student_t_quantile(p, 2.0).unwrap(), expect, max_relative = 1e-10);
        // Round trips across tail and center for assorted ν.
        for nu in [1.0, 2.5, 5.0, 30.0, 400.0] {
            for p in [1e-6, 1e-3, 0.2, 0.5, 0.77, 1.0 - 1e-3, 1.0 - 1e-6] {
                let x = student_t_quantile(p, nu).unwrap();
                assert!(
                    (student_t_cdf(x, nu) - p).abs() < 1e-10,
                    "round trip failed at p={p}, nu={nu}"
                );
            }
        }
        // Large ν approaches the normal quantile.
        let q = student_t_quantile(0.975, 1e6).unwrap();
        assert!((q - 1.959964).abs() < 1e-4, "got {q}");
        assert!(student_t_quantile(0.0, 5.0).is_err());
        assert!(student_t_quantile(1.0, 5.0).is_err());
    }

    #[test]
    fn copula_density_closed_form_at_center() {
        // d=2, ν=1, ρ=I at u=(½,½): c = π/2.
        let params = TCopulaParams::identity(1.0, 2).unwrap();
        let lc = t_copula_log_density(&[0.5, 0.5], &params).unwrap();
        assert_relative_eq!(lc.exp(), std::f64::consts::FRAC_PI_2, max_relative = 1e-10);
    }

    #[test]
    fn copula_density_independence_limit() {
        let params = TCopulaParams::identity(1e6, 2).unwrap();
        let lc = t_copula_log_density(&[0.3, 0.7], &params).unwrap();
        assert!(lc.abs() < 1e-3, "log copula density at huge nu was {lc}");
    }

    #[test]
    fn copula_density_exchangeable_symmetry() {
        let rho = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let params = TCopulaParams::new(4.0, rho).unwrap();
        for (a, b) in [(0.1, 0.8), (0.33, 0.9), (0.5, 0.02)] {
            let l1 = t_copula_log_density(&[a, b], &params).unwrap();
            let l2 = t_copula_log_density(&[b, a], &params).unwrap();
            assert_relative_eq!(l1, l2, epsilon = 1e-12);
        }
        assert!(t_copula_log_density(&[0.0, 0.5], &params).is_err());
        assert!(t_copula_log_density(&[0.5, 1.0], &params).is_err());
    }

    #[test]
    fn copula_density_integrates_to_one() {
        // Substituting u = T_ν(z), the copula mass over (0,1)² equals
        // ∫∫ c(T(z₁),T(z₂)) t_ν(z₁) t_ν(z₂) dz, evaluated with z = tan(v)
        // to compactify; this exercises the full u → z round trip.
        for (nu, r) in [(2.0, 0.0), (2.0, 0.5), (10.0, 0.0), (10.0, 0.5)] {
            let rho = DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
            let params = TCopulaParams::new(nu, rho).unwrap();
            let half_pi = std::f64::consts::FRAC_PI_2;
            let m = 240usize;
            let dv = (2.0 * half_pi - 2e-9) / m as f64;
            let grid: Vec<f64> = (0..=m).map(|i| -half_pi + 1e-9 + i as f64 * dv).collect();
            let mut mass = 0.0;
            for (i, &v1) in grid.iter().enumerate() {
                let wi = simpson_w(i, m);
                let z1 = v1.tan();
                let u1 = student_t_cdf(z1, nu);
                if !(u1 > 0.0 && u1 < 1.0) {
                    continue;
                }
                let jac1 = student_t_log_pdf(z1, nu).exp() / v1.cos().powi(2);
                for (j, &v2) in grid.iter().enumerate() {
                    let z2 = v2.tan();
                    let u2 = student_t_cdf(z2, nu);
                    if !(u2 > 0.0 && u2 < 1.0) {
                        continue;
                    }
                    let jac2 = student_t_log_pdf(z2, nu).exp() / v2.cos().powi(2);
                    let c = t_copula_log_density(&[u1, u2], &params).unwrap().exp();
                    mass += wi * simpson_w(j, m) * c * jac1 * jac2;
                }
            }
            mass *= dv * dv / 9.0;
            assert!(
                (mass - 1.0).abs() < 1e-3,
                "copula mass at nu={nu}, rho={r} was {mass}"
            );
        }
    }

    fn simpson_w(i: usize, m: usize) -> f64 {
        if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    }

    #[test]
    fn params_validation_rejects_bad_inputs() {
        let bad_diag = DMatrix::from_row_slice(2, 2, &[1.1, 0.0, 0.0, 1.0]);
        assert!(TCopulaParams::new(5.0, bad_diag).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.3, 1.0]);
        assert!(TCopulaParams::new(5.0, asym).is_err());
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0]);
        assert!(TCopulaParams::new(5.0, not_pd).is_err());
        assert!(TCopulaParams::identity(0.0, 2).is_err());
        assert!(TCopulaParams::identity(f64::NAN, 2).is_err());
    }

    #[test]
    fn pseudo_obs_filters_boundary_rows() {
        let atoms: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        let w = vec![1.0; 9];
        let cdf = SortedWeighted::new(&atoms, &w).unwrap();
        // θ at the median atom: u = fraction of atoms ≤ 5 = 5/9.
        assert_relative_eq!(cdf.cdf(5.0), 5.0 / 9.0, max_relative = 1e-12);
        // Column 0 contains a value below every atom (u = 0): that row drops.
        let columns = vec![vec![0.5, 5.0, 9.0], vec![2.0, 3.0, 4.0]];
        let cdfs = vec![cdf.clone(), SortedWeighted::new(&atoms, &w).unwrap()];
        let po = PseudoObsMatrix::from_cdfs(&cdfs, &columns).unwrap();
        assert_eq!(po.dropped_count(), 2, "rows with u=0 or u=1 must drop");
        assert_eq!(po.len(), 1);
        assert_eq!(po.kept_indices(), &[1]);
        assert_relative_eq!(po.rows()[0][0], 5.0 / 9.0, max_relative = 1e-12);

        // Every row touches the boundary → nothing left to fit on.
        let all_boundary = vec![vec![0.0, 0.5], vec![0.5, 1.0]];
        assert!(matches!(
            PseudoObsMatrix::from_matrix(&all_boundary),
            Err(Error::Empty(_))
        ));
        // Out-of-range values are corrupt, not droppable.
        assert!(matches!(
            PseudoObsMatrix::from_matrix(&[vec![1.5, 0.5]]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn sampled_copula_margins_are_uniform_and_tau_matches() {
        let rho = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.7, 1.0]);
        let params = TCopulaParams::new(5.0, rho).unwrap();
        let mut rng = stream_rng(77, 0);
        let draws = sample_t_copula(&params, 10_000, &mut rng);
        for k in 0..2 {
            let mut col: Vec<f64> = draws.iter().map(|r| r[k]).collect();
            let stat = scaled_ks(&mut col, |x| x.clamp(0.0, 1.0));
            assert!(stat < 1.628, "margin {k} KS statistic {stat} too large");
        }
        // Kendall tau identity: τ = (2/π)·asin(ρ₁₂).
        let mut concordant_minus_discordant = 0i64;
        let n = draws.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let s = (draws[i][0] - draws[j][0]) * (draws[i][1] - draws[j][1]);
                concordant_minus_discordant += if s > 0.0 { 1 } else { -1 };
            }
        }
        let tau = concordant_minus_discordant as f64 / (n * (n - 1) / 2) as f64;
        let expect = (2.0 / std::f64::consts::PI) * 0.7_f64.asin();
        assert!(
            (tau - expect).abs() < 0.05,
            "empirical tau {tau} vs implied {expect}"
        );
    }

    #[test]
    fn fit_on_independent_uniforms_finds_no_dependence() {
        let mut rng = stream_rng(101, 0);
        let u: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let po = PseudoObsMatrix::from_matrix(&u).unwrap();
        let fit = fit_t_copula(&po).unwrap();
        let r12 = fit.params.rho()[(0, 1)];
        assert!(r12.abs() < 0.05, "spurious correlation {r12}");
        // The degrees of freedom are weakly identified when the data carry no
        // dependence, so the fitted value itself is noisy. What must hold is
        // that the fitted copula carries almost no information relative to the
        // independence copula (density identically one, log-likelihood zero),
        // and that heavy tail dependence is not fabricated.
        let ll = *fit.log_lik_trace.last().unwrap();
        assert!(
            ll.abs() < 10.0,
            "log-likelihood {ll} should be near zero on independent data"
        );
        assert!(
            fit.params.nu() > 10.0,
            "tail dependence fabricated on independent data: nu = {}",
            fit.params.nu()
        );
        // The optimum must be at least as good as the Gaussian limit with the
        // same correlation, otherwise the profile search failed.
        let gauss = TCopulaParams::new(1000.0, fit.params.rho().clone()).unwrap();
        let ll_gauss: f64 = po
            .rows()
            .iter()
            .map(|r| t_copula_log_density(r, &gauss).unwrap())
            .sum();
        assert!(
            ll >= ll_gauss - 1e-6,
            "optimizer stopped at {ll}, below the Gaussian-limit value {ll_gauss}"
        );
    }

    #[test]
    fn fit_recovers_synthetic_parameters_with_monotone_trace() {
        let rho = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let truth = TCopulaParams::new(5.0, rho).unwrap();
        let mut rng = stream_rng(55, 1);
        let u = sample_t_copula(&truth, 10_000, &mut rng);
        let po = PseudoObsMatrix::from_matrix(&u).unwrap();
        let fit = fit_t_copula(&po).unwrap();
        let r12 = fit.params.rho()[(0, 1)];
        assert!(
            (r12 - 0.5).abs() < 0.05,
            "scale estimate {r12} too far from 0.5"
        );
        assert!(
            (fit.params.nu() - 5.0).abs() < 2.0,
            "degrees of freedom estimate {} too far from 5",
            fit.params.nu()
        );
        assert!(!fit.gaussian_limit);
        for w in fit.log_lik_trace.windows(2) {
            assert!(w[1] >= w[0], "trace decreased: {} -> {}", w[0], w[1]);
        }
        assert!(fit.log_lik_trace.len() >= 2);
    }

    #[test]
    fn meta_t_univariate_equals_marginal() {
        let marg = weighted_kde(&[0.0, 1.0, 2.0], &[1.0, 2.0, 1.0], 0.5, None).unwrap();
        let cdf = SortedWeighted::new(&[0.0, 1.0, 2.0], &[1.0, 2.0, 1.0]).unwrap();
        let post = MetaTPosterior::new(vec![marg.clone()], vec![cdf], None).unwrap();
        for t in [-1.0, 0.3, 1.9] {
            assert_relative_eq!(
                post.log_density(&[t]),
                marg.log_density(t),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn meta_t_independence_matches_product_density() {
        let m1 = weighted_kde(&[0.0, 0.5], &[1.0, 1.0], 0.3, None).unwrap();
        let m2 = weighted_kde(&[-1.0, 1.0], &[2.0, 1.0], 0.4, None).unwrap();
        let c1 = SortedWeighted::new(&[0.0, 0.5], &[1.0, 1.0]).unwrap();
        let c2 = SortedWeighted::new(&[-1.0, 1.0], &[2.0, 1.0]).unwrap();
        let post =
            MetaTPosterior::new(vec![m1.clone(), m2.clone()], vec![c1, c2], None).unwrap();
        for t in [[0.2, -0.5], [0.4, 0.9], [-0.3, 0.0]] {
            let direct = m1.log_density(t[0]) + m2.log_density(t[1]);
            assert!(
                (post.log_density(&t) - direct).abs() < 1e-10,
                "independence meta-t differs from product density at {t:?}"
            );
        }
    }

    #[test]
    fn meta_t_outside_support_is_neg_infinity() {
        let marg = weighted_kde(&[0.5], &[1.0], 0.2, Some((0.0, 1.0))).unwrap();
        let cdf = SortedWeighted::new(&[0.5], &[1.0]).unwrap();
        let post = MetaTPosterior::new(vec![marg], vec![cdf], None).unwrap();
        assert_eq!(post.log_density(&[2.0]), f64::NEG_INFINITY);
        assert_eq!(post.log_density(&[0.4, 0.4]), f64::NEG_INFINITY);
    }

    #[test]
    fn meta_t_sampling_margins_ignore_correlation() {
        // Margins of the meta-t draws depend only on the marginal quantiles,
        // not on ρ; compare empirical CDFs under ρ₁₂ = 0 and 0.8.
        let atoms: Vec<f64> = (1..=10_000).map(|i| i as f64 / 10_001.0).collect();
        let w = vec![1.0; atoms.len()];
        let cdf = SortedWeighted::new(&atoms, &w).unwrap();
        let marg = weighted_kde(&atoms, &w, 0.05, None).unwrap();
        let build = |r: f64| {
            let rho = DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
            MetaTPosterior::new(
                vec![marg.clone(), marg.clone()],
                vec![cdf.clone(), cdf.clone()],
                Some(TCopulaParams::new(8.0, rho).unwrap()),
            )
            .unwrap()
        };
        let mut rng0 = stream_rng(31, 0);
        let mut rng8 = stream_rng(31, 1);
        let d0 = build(0.0).sample(10_000, &mut rng0);
        let d8 = build(0.8).sample(10_000, &mut rng8);
        for k in 0..2 {
            let mut a: Vec<f64> = d0.iter().map(|r| r[k]).collect();
            let mut b: Vec<f64> = d8.iter().map(|r| r[k]).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            // Two-sample KS distance via merged evaluation points.
            let ecdf = |s: &[f64], x: f64| s.partition_point(|&v| v <= x) as f64 / s.len() as f64;
            let mut d_max = 0.0_f64;
            for &x in a.iter().chain(b.iter()) {
                d_max = d_max.max((ecdf(&a, x) - ecdf(&b, x)).abs());
            }
            assert!(d_max < 0.03, "margin {k} shifted by rho: KS distance {d_max}");
        }
    }

    #[test]
    fn meta_t_uniform_marginal_sampling_is_uniform() {
        // ρ=I, large ν, uniform marginal atoms: draws should be ~U(0,1).
        let atoms: Vec<f64> = (1..=10_000).map(|i| i as f64 / 10_001.0).collect();
        let w = vec![1.0; atoms.len()];
        let cdf = SortedWeighted::new(&atoms, &w).unwrap();
        let marg = weighted_kde(&atoms, &w, 0.05, None).unwrap();
        let post = MetaTPosterior::new(
            vec![marg.clone(), marg.clone()],
            vec![cdf.clone(), cdf.clone()],
            Some(TCopulaParams::identity(900.0, 2).unwrap()),
        )
        .unwrap();
        let mut rng = stream_rng(13, 5);
        let draws = post.sample(10_000, &mut rng);
        assert_eq!(draws.len(), 10_000);
        for k in 0..2 {
            let mut col: Vec<f64> = draws.iter().map(|r| r[k]).collect();
            let stat = scaled_ks(&mut col, |x| x.clamp(0.0, 1.0));
            assert!(stat < 1.628, "margin {k} KS statistic {stat}");
        }
        let one = post.sample(1, &mut rng);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 2);
        assert!(one[0].iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
