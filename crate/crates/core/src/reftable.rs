//! Reference-table construction and persistence.
//!
//! A reference table is the simulation backbone of the inference pipeline:
//! `N` attempted rows, each holding a model index drawn from the model prior,
//! a parameter vector drawn from that model's prior (integer-valued
//! dimensions jittered to continuous values), and the summary statistics of a
//! dataset simulated under those parameters. Rows whose simulation or summary
//! computation fails — or produces any non-finite value — are dropped and
//! counted rather than resampled, so the retained rows remain an honest
//! sample from the joint prior-predictive restricted to usable outcomes.
//!
//! Construction is parallel over rows with a per-row derived RNG stream, so
//! the table is identical for any worker count. Persistence offers a
//! bit-exact binary container and a plain-text CSV export (17 significant
//! digits) for interoperability.

use crate::container::{ByteReader, ByteWriter, KIND_REFERENCE_TABLE};
use crate::models::{sample_prior, DimKind, ModelSpec};
use crate::rng::stream_rng;
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;

/// One retained row: which model, which (jittered) parameters, and the
/// summary statistics of the simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    /// 1-based model index.
    pub model_index: u32,
    /// Parameter draw; discrete dimensions carry the jittered value θ* − u.
    pub theta: Vec<f64>,
    /// Finite summary statistics of the simulated dataset.
    pub summaries: Vec<f64>,
}

/// Everything about one model the table needs to label and interpret its
/// rows. The prior is kept as a human-readable description: rows already
/// realize it, and downstream stages work from the live `ModelSpec`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub name: String,
    pub param_names: Vec<String>,
    pub param_kinds: Vec<DimKind>,
    pub prior_desc: String,
}

/// Table-level metadata: per-model descriptions, shared summary names, and
/// the build provenance (sizes, seed, drop counts, creation time).
#[derive(Debug, Clone, PartialEq)]
pub struct TableMeta {
    pub models: Vec<ModelMeta>,
    pub summary_names: Vec<String>,
    pub n_sim: u32,
    pub seed: u64,
    /// Rows attempted (retained + dropped).
    pub requested_rows: u64,
    /// Dropped-row count per model (same order as `models`).
    pub dropped: Vec<u64>,
    /// Unix seconds at build time; informational only.
    pub created_unix: u64,
}

/// Simulated (model, parameter, summary) rows plus their metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    meta: TableMeta,
    rows: Vec<TableRow>,
}

/// The uniform draw behind one jittered dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterRecord {
    /// Which dimension was jittered.
    pub dim: usize,
    /// The U(0,1) draw, strictly inside the interval.
    pub u: f64,
}

/// Continue an integer parameter to a real one: θ = θ* − u with u ~ U(0,1).
/// The integer is always recoverable as ⌊θ + 1⌋.
pub fn jitter<R: Rng + ?Sized>(theta_star: i64, dim: usize, rng: &mut R) -> (f64, JitterRecord) {
    let mut u: f64 = rng.random();
    while u <= 0.0 {
        u = rng.random();
    }
    (theta_star as f64 - u, JitterRecord { dim, u })
}

/// Invert [`jitter`]: ⌊θ + 1⌋ recovers the original integer exactly.
pub fn unjitter(theta: f64) -> i64 {
    (theta + 1.0).floor() as i64
}

/// Draw a categorical index from cumulative weights already summing to one.
fn sample_model<R: Rng + ?Sized>(prior: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in prior.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    prior.len() - 1
}

/// Simulate one row; `None` means the row is dropped (the model index is
/// still reported so drops can be attributed).
fn build_row(
    models: &[ModelSpec],
    model_prior: &[f64],
    n_sim: usize,
    seed: u64,
    row: u64,
) -> (usize, Option<TableRow>) {
    let mut rng = stream_rng(seed, row);
    let m = if models.len() == 1 { 0 } else { sample_model(model_prior, &mut rng) };
    let model = &models[m];
    let theta_star = sample_prior(&model.prior, &mut rng);
    let outcome = model
        .simulate(&theta_star, n_sim, &mut rng)
        .and_then(|data| model.summaries(&data));
    let summaries = match outcome {
        Ok(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => return (m, None),
    };
    if !theta_star.iter().all(|v| v.is_finite()) {
        return (m, None);
    }
    // Jitter after simulation: the simulator consumes the integer value, the
    // table stores the continued one.
    let mut theta = theta_star;
    for (k, dim) in model.space.dims().iter().enumerate() {
        if dim.kind == DimKind::DiscreteInteger {
            let (v, _) = jitter(theta[k] as i64, k, &mut rng);
            theta[k] = v;
        }
    }
    (m, Some(TableRow { model_index: m as u32 + 1, theta, summaries }))
}

/// Build a reference table of `n_rows` attempted rows: draw a model from
/// `model_prior`, parameters from its prior, simulate a dataset of size
/// `n_sim`, summarize, and drop-and-count any row whose summaries fail or
/// come out non-finite. Parallel over rows; the result depends only on the
/// arguments, not the worker count.
pub fn build(
    models: &[ModelSpec],
    model_prior: &[f64],
    n_rows: usize,
    n_sim: usize,
    seed: u64,
) -> Result<ReferenceTable> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("need at least one model".into()));
    }
    if n_rows == 0 || n_sim == 0 {
        return Err(Error::InvalidArgument(format!(
            "table needs n_rows ≥ 1 and n_sim ≥ 1, got {n_rows} and {n_sim}"
        )));
    }
    if model_prior.len() != models.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} model-prior entries for {} models",
            model_prior.len(),
            models.len()
        )));
    }
    if model_prior.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument("model prior must be nonnegative and finite".into()));
    }
    let total: f64 = model_prior.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("model prior sums to {total}, expected 1")));
    }
    let summary_names = models[0].summary_labels();
    for model in &models[1..] {
        if model.summary_labels() != summary_names {
            return Err(Error::InvalidArgument(format!(
                "models must share one summary map; '{}' computes {:?}, '{}' computes {:?}",
                models[0].name,
                summary_names,
                model.name,
                model.summary_labels()
            )));
        }
    }

    let outcomes: Vec<(usize, Option<TableRow>)> = (0..n_rows as u64)
        .into_par_iter()
        .map(|row| build_row(models, model_prior, n_sim, seed, row))
        .collect();

    let mut dropped = vec![0u64; models.len()];
    let mut rows = Vec::with_capacity(n_rows);
    for (m, outcome) in outcomes {
        match outcome {
            Some(row) => rows.push(row),
            None => dropped[m] += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!(
            "all {n_rows} attempted rows were dropped (every simulation failed or produced \
             non-finite summaries)"
        )));
    }
    let created_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = TableMeta {
        models: models
            .iter()
            .map(|m| ModelMeta {
                name: m.name.clone(),
                param_names: m.space.names().to_vec(),
                param_kinds: m.space.dims().iter().map(|d| d.kind).collect(),
                prior_desc: format!("{:?}", m.prior),
            })
            .collect(),
        summary_names,
        n_sim: n_sim as u32,
        seed,
        requested_rows: n_rows as u64,
        dropped,
        created_unix,
    };
    Ok(ReferenceTable { meta, rows })
}

impl ReferenceTable {
    /// Assemble a table from parts, validating the row shapes against the
    /// metadata (used by deserialization and by table-restriction helpers).
    pub fn from_parts(meta: TableMeta, rows: Vec<TableRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("reference table needs at least one row".into()));
        }
        if meta.models.is_empty() || meta.dropped.len() != meta.models.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} models with {} drop counters",
                meta.models.len(),
                meta.dropped.len()
            )));
        }
        let p = meta.summary_names.len();
        for (i, row) in rows.iter().enumerate() {
            let m = row.model_index as usize;
            if m == 0 || m > meta.models.len() {
                return Err(Error::InvalidArgument(format!(
                    "row {i}: model index {m} outside 1..={}",
                    meta.models.len()
                )));
            }
            let d = meta.models[m - 1].param_names.len();
            if row.theta.len() != d || row.summaries.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "row {i}: {} parameters and {} summaries, expected {d} and {p}",
                    row.theta.len(),
                    row.summaries.len()
                )));
            }
            if row.theta.iter().chain(&row.summaries).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i}: non-finite value")));
            }
        }
        Ok(ReferenceTable { meta, rows })
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Total dropped rows across models.
    pub fn dropped_total(&self) -> u64 {
        self.meta.dropped.iter().sum()
    }

    /// 1-based model label of every row (classifier training target).
    pub fn model_labels(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.model_index).collect()
    }

    /// Summary matrix over all rows (forest covariates).
    pub fn summaries_matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.summaries.clone()).collect()
    }

    /// One parameter column across the rows of one 1-based model index.
    pub fn theta_column(&self, model_index: u32, dim: usize) -> Result<Vec<f64>> {
        let m = model_index as usize;
        if m == 0 || m > self.meta.models.len() {
            return Err(Error::InvalidArgument(format!(
                "model index {model_index} outside 1..={}",
                self.meta.models.len()
            )));
        }
        let d = self.meta.models[m - 1].param_names.len();
        if dim >= d {
            return Err(Error::InvalidArgument(format!(
                "parameter index {dim} outside 0..{d} for model '{}'",
                self.meta.models[m - 1].name
            )));
        }
        Ok(self
            .rows
            .iter()
            .filter(|r| r.model_index == model_index)
            .map(|r| r.theta[dim])
            .collect())
    }

    /// The sub-table containing only one model's rows (the reduced table used
    /// after model selection). Metadata is preserved.
    pub fn restrict_to_model(&self, model_index: u32) -> Result<ReferenceTable> {
        let rows: Vec<TableRow> =
            self.rows.iter().filter(|r| r.model_index == model_index).cloned().collect();
        if rows.is_empty() {
            return Err(Error::Empty(format!("no rows for model index {model_index}")));
        }
        Ok(ReferenceTable { meta: self.meta.clone(), rows })
    }

    /// Serialize to the versioned binary container (bit-exact round trip).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(KIND_REFERENCE_TABLE);
        w.u32(self.meta.models.len() as u32);
        for m in &self.meta.models {
            w.string(&m.name);
            w.u32(m.param_names.len() as u32);
            for name in &m.param_names {
                w.string(name);
            }
            for kind in &m.param_kinds {
                w.u8(match kind {
                    DimKind::Continuous => 0,
                    DimKind::DiscreteInteger => 1,
                });
            }
            w.string(&m.prior_desc);
        }
        w.u32(self.meta.summary_names.len() as u32);
        for name in &self.meta.summary_names {
            w.string(name);
        }
        w.u32(self.meta.n_sim);
        w.u64(self.meta.seed);
        w.u64(self.meta.requested_rows);
        for &d in &self.meta.dropped {
            w.u64(d);
        }
        w.u64(self.meta.created_unix);
        w.u64(self.rows.len() as u64);
        for row in &self.rows {
            w.u32(row.model_index);
            w.f64_slice(&row.theta);
            w.f64_slice(&row.summaries);
        }
        w.into_bytes()
    }

    /// Deserialize from [`Self::to_bytes`] output, validating shapes and
    /// finiteness; errors carry the byte offset of the first problem.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, KIND_REFERENCE_TABLE)?;
        let n_models = r.u32()? as usize;
        if n_models == 0 {
            return Err(r.corrupt("zero models"));
        }
        let mut models = Vec::with_capacity(n_models);
        for _ in 0..n_models {
            let name = r.string()?;
            let d = r.u32()? as usize;
            if d == 0 {
                return Err(r.corrupt("zero parameter dimensions"));
            }
            let mut param_names = Vec::with_capacity(d);
            for _ in 0..d {
                param_names.push(r.string()?);
            }
            let mut param_kinds = Vec::with_capacity(d);
            for _ in 0..d {
                param_kinds.push(match r.u8()? {
                    0 => DimKind::Continuous,
                    1 => DimKind::DiscreteInteger,
                    k => return Err(r.corrupt(&format!("unknown dimension kind {k}"))),
                });
            }
            let prior_desc = r.string()?;
            models.push(ModelMeta { name, param_names, param_kinds, prior_desc });
        }
        let n_summaries = r.u32()? as usize;
        let mut summary_names = Vec::with_capacity(n_summaries);
        for _ in 0..n_summaries {
            summary_names.push(r.string()?);
        }
        let n_sim = r.u32()?;
        let seed = r.u64()?;
        let requested_rows = r.u64()?;
        let mut dropped = Vec::with_capacity(n_models);
        for _ in 0..n_models {
            dropped.push(r.u64()?);
        }
        let created_unix = r.u64()?;
        let n_rows = r.u64()? as usize;
        let mut rows = Vec::new();
        for i in 0..n_rows {
            let model_index = r.u32()?;
            if model_index == 0 || model_index as usize > n_models {
                return Err(r.corrupt(&format!(
                    "row {i}: model index {model_index} outside 1..={n_models}"
                )));
            }
            let theta = r.f64_vec()?;
            let summaries = r.f64_vec()?;
            rows.push(TableRow { model_index, theta, summaries });
        }
        r.finish()?;
        let meta = TableMeta {
            models,
            summary_names,
            n_sim,
            seed,
            requested_rows,
            dropped,
            created_unix,
        };
        Self::from_parts(meta, rows)
    }

    /// Write the binary container to a file.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Read a binary container from a file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Plain-text CSV of the rows at 17 significant digits. Columns: model
    /// index, parameters (named when all models agree on names, positional
    /// otherwise; blank cells pad models of lower dimension), summaries.
    pub fn to_csv(&self) -> String {
        let d_max = self.meta.models.iter().map(|m| m.param_names.len()).max().unwrap_or(0);
        let shared_names = self
            .meta
            .models
            .iter()
            .all(|m| m.param_names == self.meta.models[0].param_names);
        let mut out = String::new();
        out.push_str("model");
        for k in 0..d_max {
            out.push(',');
            if shared_names {
                out.push_str(&self.meta.models[0].param_names[k]);
            } else {
                out.push_str(&format!("theta{}", k + 1));
            }
        }
        for name in &self.meta.summary_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.model_index.to_string());
            for k in 0..d_max {
                out.push(',');
                if let Some(&v) = row.theta.get(k) {
                    out.push_str(&format!("{v:.16e}"));
                }
            }
            for &v in &row.summaries {
                out.push(',');
                out.push_str(&format!("{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Write the CSV export to a file.
    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
