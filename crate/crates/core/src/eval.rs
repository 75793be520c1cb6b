//! Leave-one-out retrieval evaluation.
//!
//! Every point in turn is the single query; all remaining points are ranked by
//! the method's scores and the top `at_k` are checked against the query's
//! class label. Precision and recall are reported in percent.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::baselines::{euclidean_rank, manifold_rank, KernelGraphConfig};
use crate::dataset::{DataMatrix, LabeledDataset};
use crate::ranking::{rank_order, QueryVector, RanSolver, RankConfig};
use crate::{Error, Result};

/// Precision and recall (percent) of the first `at_k` entries of `ranking`.
///
/// Relevant items are those in `ranking` whose label is `query_label`; the
/// ranking is expected to already exclude the query itself.
pub fn precision_recall_at_k(
    ranking: &[usize],
    labels: &[i64],
    query_label: i64,
    at_k: usize,
) -> Result<(f64, f64)> {
    if at_k == 0 || at_k > ranking.len() {
        return Err(Error::invalid(format!(
            "at_k must be in 1..={}, got {at_k}",
            ranking.len()
        )));
    }
    let label = |i: usize| {
        labels.get(i).copied().ok_or_else(|| {
            Error::invalid(format!(
                "ranked index {i} has no label ({} labels)",
                labels.len()
            ))
        })
    };
    let mut relevant_total = 0usize;
    for &i in ranking {
        relevant_total += usize::from(label(i)? == query_label);
    }
    if relevant_total == 0 {
        return Err(Error::UndefinedRecall { label: query_label });
    }
    let mut hits = 0usize;
    for &i in &ranking[..at_k] {
        hits += usize::from(label(i)? == query_label);
    }
    Ok((
        100.0 * hits as f64 / at_k as f64,
        100.0 * hits as f64 / relevant_total as f64,
    ))
}

/// A ranking function over a fixed dataset.
pub trait RankingMethod: Sync {
    fn name(&self) -> String;

    /// Scores for every point; higher is more relevant.
    fn score(&self, y: &QueryVector) -> Result<Vec<f64>>;

    /// Parameters echoed into reports.
    fn config_echo(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Adaptive-neighbor ranking.
pub struct RanMethod {
    solver: RanSolver,
}

impl RanMethod {
    pub fn new(data: &DataMatrix, cfg: RankConfig) -> Result<Self> {
        Ok(Self {
            solver: RanSolver::new(data, cfg)?,
        })
    }
}

impl RankingMethod for RanMethod {
    fn name(&self) -> String {
        "ran".into()
    }

    fn score(&self, y: &QueryVector) -> Result<Vec<f64>> {
        Ok(self.solver.solve(y)?.scores)
    }

    fn config_echo(&self) -> serde_json::Value {
        json!({ "rank": self.solver.config() })
    }
}

pub struct EuclideanMethod<'a> {
    pub data: &'a DataMatrix,
}

impl RankingMethod for EuclideanMethod<'_> {
    fn name(&self) -> String {
        "euclidean".into()
    }

    fn score(&self, y: &QueryVector) -> Result<Vec<f64>> {
        euclidean_rank(self.data, y)
    }
}

pub struct ManifoldRankingMethod<'a> {
    pub data: &'a DataMatrix,
    pub cfg: KernelGraphConfig,
}

impl RankingMethod for ManifoldRankingMethod<'_> {
    fn name(&self) -> String {
        "mr".into()
    }

    fn score(&self, y: &QueryVector) -> Result<Vec<f64>> {
        manifold_rank(self.data, y, &self.cfg)
    }

    fn config_echo(&self) -> serde_json::Value {
        json!({ "kernel_graph": self.cfg })
    }
}

/// Reads one `index,score` CSV into a dense score vector of length `n`.
/// Indices missing from the file score `-inf`.
pub fn read_score_file<R: Read>(reader: R, n: usize) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut scores = vec![f64::NEG_INFINITY; n];
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.len() != 2 {
            return Err(Error::Parse {
                row,
                column: rec.len().min(2) + 1,
                message: "expected index,score".into(),
            });
        }
        let i: usize = rec[0].parse().map_err(|_| Error::Parse {
            row,
            column: 1,
            message: format!("not an index: {:?}", &rec[0]),
        })?;
        let s: f64 = rec[1].parse().map_err(|_| Error::Parse {
            row,
            column: 2,
            message: format!("not a number: {:?}", &rec[1]),
        })?;
        if i >= n {
            return Err(Error::invalid(format!(
                "score index {i} out of range for {n} points"
            )));
        }
        if s.is_nan() {
            return Err(Error::Parse {
                row,
                column: 2,
                message: "NaN score".into(),
            });
        }
        scores[i] = s;
    }
    Ok(scores)
}

/// Precomputed scores from an outside tool, one file per query point.
///
/// The directory holds `<query index>.csv` files in `index,score` format.
pub struct ExternalScores {
    name: String,
    by_query: BTreeMap<usize, Vec<f64>>,
}

impl ExternalScores {
    pub fn new(name: impl Into<String>, by_query: BTreeMap<usize, Vec<f64>>) -> Self {
        Self {
            name: name.into(),
            by_query,
        }
    }

    pub fn load_dir(name: impl Into<String>, dir: impl AsRef<Path>, n: usize) -> Result<Self> {
        let mut by_query = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(q) = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<usize>().ok())
            else {
                continue;
            };
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            by_query.insert(q, read_score_file(std::fs::File::open(&path)?, n)?);
        }
        Ok(Self::new(name, by_query))
    }
}

impl RankingMethod for ExternalScores {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn score(&self, y: &QueryVector) -> Result<Vec<f64>> {
        match y.queries() {
            [q] => self
                .by_query
                .get(q)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("no external scores for query {q}"))),
            _ => Err(Error::invalid(
                "external scores are keyed by a single query",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub query: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub at_k: usize,
    pub per_query: Vec<QueryEval>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub config_echo: serde_json::Value,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "method,at_k,queries,mean_precision,mean_recall";

    /// One summary line matching [`Self::CSV_HEADER`], percentages to 2 decimals.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.2},{:.2}",
            self.method,
            self.at_k,
            self.per_query.len(),
            self.mean_precision,
            self.mean_recall
        )
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        writeln!(out, "{}", self.csv_row())?;
        Ok(())
    }
}

fn check_classes(dataset: &LabeledDataset) -> Result<()> {
    for (label, count) in dataset.class_counts() {
        if count < 2 {
            return Err(Error::invalid(format!(
                "class {label} has {count} member; every class needs at least 2"
            )));
        }
    }
    Ok(())
}

/// Uses each point once as the sole query and averages precision/recall@`at_k`.
///
/// Queries run in parallel; the report is assembled in query order and the
/// first failing query (by index) is the one reported.
pub fn evaluate_method(
    dataset: &LabeledDataset,
    method: &dyn RankingMethod,
    at_k: usize,
) -> Result<EvalReport> {
    let n = dataset.len();
    check_classes(dataset)?;
    if at_k == 0 || at_k > n - 1 {
        return Err(Error::invalid(format!(
            "at_k must be in 1..={}, got {at_k}",
            n - 1
        )));
    }
    let results: Vec<Result<QueryEval>> = (0..n)
        .into_par_iter()
        .map(|q| {
            let wrap = |e: Error| Error::Query {
                query: q,
                source: Box::new(e),
            };
            let y = QueryVector::from_indices(n, &[q]).map_err(wrap)?;
            let scores = method.score(&y).map_err(wrap)?;
            if scores.len() != n {
                return Err(wrap(Error::DimensionMismatch {
                    expected: n,
                    got: scores.len(),
                }));
            }
            if scores.iter().any(|s| s.is_nan()) {
                return Err(wrap(Error::NonFinite("NaN score".into())));
            }
            let order = rank_order(&scores, &[q]);
            let (precision, recall) =
                precision_recall_at_k(&order, &dataset.labels, dataset.labels[q], at_k)
                    .map_err(wrap)?;
            Ok(QueryEval {
                query: q,
                precision,
                recall,
            })
        })
        .collect();

    let per_query = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mean_precision = per_query.iter().map(|e| e.precision).sum::<f64>() / n as f64;
    let mean_recall = per_query.iter().map(|e| e.recall).sum::<f64>() / n as f64;
    Ok(EvalReport {
        method: method.name(),
        at_k,
        per_query,
        mean_precision,
        mean_recall,
        config_echo: method.config_echo(),
    })
}

/// One row of a neighbor-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub report: EvalReport,
}

/// Evaluates adaptive-neighbor ranking at each `k`, in the given order.
pub fn sweep_k(
    dataset: &LabeledDataset,
    k_values: &[usize],
    template: &RankConfig,
    at_k: usize,
) -> Result<Vec<SweepPoint>> {
    if k_values.is_empty() {
        return Err(Error::invalid("k sweep needs at least one value"));
    }
    for &k in k_values {
        RankConfig {
            k,
            ..template.clone()
        }
        .validate(dataset.len())?;
    }
    k_values
        .iter()
        .map(|&k| {
            let method = RanMethod::new(
                &dataset.data,
                RankConfig {
                    k,
                    ..template.clone()
                },
            )?;
            Ok(SweepPoint {
                k,
                report: evaluate_method(dataset, &method, at_k)?,
            })
        })
        .collect()
}

/// `k,precision,recall` lines for plotting, percentages to 2 decimals.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut out: W) -> Result<()> {
    writeln!(out, "k,precision,recall")?;
    for p in points {
        writeln!(
            out,
            "{},{:.2},{:.2}",
            p.k, p.report.mean_precision, p.report.mean_recall
        )?;
    }
    Ok(())
}
