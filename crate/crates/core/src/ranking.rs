//! Joint ranking: alternate between the score system
//! `(2 lambda L_S + U) f = U y` and the per-point neighbor assignment until
//! the scores stop moving.
//!
//! The objective tracked per iteration is
//!
//! ```text
//! sum_ij (||x_i - x_j||^2 s_ij + gamma_i s_ij^2) + 2 lambda f^T L_S f + (f - y)^T U (f - y)
//! ```
//!
//! with `U_ii = query_weight` on queries and 1 elsewhere.

use serde::{Deserialize, Serialize};

use crate::affinity::{
    assign_from_distances, laplacian, pairwise_sq_dists, GammaChoice, GammaResult, Laplacian,
    SparseAffinity, SqDistances,
};
use crate::dataset::DataMatrix;
use crate::linalg::{norm2, solve_spd};
use crate::{Error, Result};

/// Relative residual the score solve must reach.
pub const SCORE_RESIDUAL_TOL: f64 = 1e-8;

/// Binary query indicator over the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryVector {
    n: usize,
    /// Sorted, deduplicated.
    queries: Vec<usize>,
}

impl QueryVector {
    pub fn from_indices(n: usize, queries: &[usize]) -> Result<Self> {
        if let Some(&q) = queries.iter().find(|&&q| q >= n) {
            return Err(Error::invalid(format!(
                "query index {q} out of range for {n} points"
            )));
        }
        let mut queries = queries.to_vec();
        queries.sort_unstable();
        queries.dedup();
        if queries.is_empty() {
            return Err(Error::invalid("at least one query is required"));
        }
        Ok(Self { n, queries })
    }

    /// From a 0/1 indicator.
    pub fn from_indicator(y: &[f64]) -> Result<Self> {
        if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid(format!(
                "query indicator entries must be 0 or 1, got {v}"
            )));
        }
        let idx: Vec<usize> = y
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(i, _)| i)
            .collect();
        Self::from_indices(y.len(), &idx)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn queries(&self) -> &[usize] {
        &self.queries
    }

    pub fn is_query(&self, i: usize) -> bool {
        self.queries.binary_search(&i).is_ok()
    }

    pub fn indicator(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &q in &self.queries {
            y[q] = 1.0;
        }
        y
    }

    /// Diagonal of `U`.
    pub fn fidelity_weights(&self, query_weight: f64) -> Vec<f64> {
        let mut u = vec![1.0; self.n];
        for &q in &self.queries {
            u[q] = query_weight;
        }
        u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    /// Neighbors per point.
    pub k: usize,
    /// Weight of the smoothness term.
    pub lambda: f64,
    /// Finite stand-in for the infinite fidelity weight on queries.
    pub query_weight: f64,
    pub max_iters: usize,
    /// Stop once `||f_t - f_{t-1}|| / ||f_{t-1}||` drops below this.
    pub tol: f64,
    /// Freezes every `gamma_i` to this value instead of re-deriving it from
    /// the current distances each iteration.
    pub gamma_override: Option<f64>,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            k: 10,
            lambda: 1.0,
            query_weight: 1e8,
            max_iters: 50,
            tol: 1e-6,
            gamma_override: None,
        }
    }
}

impl RankConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k >= n {
            return Err(Error::invalid(format!(
                "k must be in 1..={}, got {}",
                n - 1,
                self.k
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.query_weight >= 1e6 && self.query_weight.is_finite()) {
            return Err(Error::invalid(format!(
                "query_weight must be finite and >= 1e6, got {}",
                self.query_weight
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if let Some(g) = self.gamma_override {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::invalid(format!(
                    "gamma override must be positive, got {g}"
                )));
            }
        }
        Ok(())
    }

    fn gamma_choice(&self) -> GammaChoice {
        self.gamma_override
            .map_or(GammaChoice::Auto, GammaChoice::Fixed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankResult {
    pub scores: Vec<f64>,
    pub affinity: SparseAffinity,
    pub gamma: GammaResult,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// JSON-facing view of a [`RankResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub gamma_mean: f64,
}

impl RankResult {
    pub fn summary(&self) -> RankSummary {
        RankSummary {
            scores: self.scores.clone(),
            iterations: self.iterations,
            converged: self.converged,
            objective_trace: self.objective_trace.clone(),
            gamma_mean: self.gamma.mean,
        }
    }
}

/// Solves `(2 lambda L + U) f = U y`.
///
/// The system is symmetric positive definite, so the solution is unique; the
/// returned scores satisfy `||(2 lambda L + U) f - U y|| <= 1e-8 ||U y||`.
pub fn solve_scores(
    l: &Laplacian,
    y: &QueryVector,
    lambda: f64,
    query_weight: f64,
) -> Result<Vec<f64>> {
    let n = l.n();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if !(query_weight > 0.0 && query_weight.is_finite()) {
        return Err(Error::invalid(format!(
            "query_weight must be positive, got {query_weight}"
        )));
    }
    let u = y.fidelity_weights(query_weight);
    let uy: Vec<f64> = y.indicator().iter().zip(&u).map(|(a, b)| a * b).collect();
    if lambda == 0.0 {
        return Ok(y.indicator());
    }
    let system = l.matrix().scaled_plus_diagonal(2.0 * lambda, &u);
    Ok(solve_spd(&system, &uy, SCORE_RESIDUAL_TOL)?.x)
}

fn objective_from_parts(
    dx: &SqDistances,
    s: &SparseAffinity,
    l: &Laplacian,
    f: &[f64],
    y: &QueryVector,
    lambda: f64,
    query_weight: f64,
    gamma: &GammaResult,
) -> f64 {
    let graph: f64 = s
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let g = gamma.per_row[i];
            row.iter()
                .map(|&(j, w)| dx.get(i, j) * w + g * w * w)
                .sum::<f64>()
        })
        .sum();
    let smooth = 2.0 * lambda * l.quad_form(f);
    let fidelity: f64 = f
        .iter()
        .zip(y.indicator())
        .zip(y.fidelity_weights(query_weight))
        .map(|((fi, yi), ui)| ui * (fi - yi) * (fi - yi))
        .sum();
    graph + smooth + fidelity
}

/// Value of the joint objective for a given graph and score vector, using
/// the per-row `gamma_i`.
pub fn objective_value(
    data: &DataMatrix,
    s: &SparseAffinity,
    f: &[f64],
    y: &QueryVector,
    cfg: &RankConfig,
    gamma: &GammaResult,
) -> Result<f64> {
    let n = data.n();
    for len in [s.n(), f.len(), y.len(), gamma.per_row.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    Ok(objective_from_parts(
        &pairwise_sq_dists(data),
        s,
        &laplacian(s),
        f,
        y,
        cfg.lambda,
        cfg.query_weight,
        gamma,
    ))
}

/// Reusable solver for one dataset and configuration.
///
/// Feature distances and the initial graph do not depend on the query, so
/// they are computed once and shared by every [`RanSolver::solve`] call.
#[derive(Debug, Clone)]
pub struct RanSolver {
    cfg: RankConfig,
    dx: SqDistances,
    initial: (SparseAffinity, GammaResult),
}

impl RanSolver {
    pub fn new(data: &DataMatrix, cfg: RankConfig) -> Result<Self> {
        cfg.validate(data.n())?;
        let dx = pairwise_sq_dists(data);
        let initial = assign_from_distances(&dx, None, cfg.lambda, cfg.k, cfg.gamma_choice())?;
        Ok(Self { cfg, dx, initial })
    }

    pub fn config(&self) -> &RankConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.dx.n()
    }

    pub fn solve(&self, y: &QueryVector) -> Result<RankResult> {
        let n = self.n();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        let cfg = &self.cfg;
        let (mut s, mut gamma) = self.initial.clone();
        let mut l = laplacian(&s);
        let mut prev: Option<Vec<f64>> = None;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut f = Vec::new();

        for iter in 1..=cfg.max_iters {
            f = solve_scores(&l, y, cfg.lambda, cfg.query_weight)?;
            if let Some(bad) = f.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "score {bad} = {} at iteration {iter}",
                    f[bad]
                )));
            }

            (s, gamma) =
                assign_from_distances(&self.dx, Some(&f), cfg.lambda, cfg.k, cfg.gamma_choice())?;
            l = laplacian(&s);
            trace.push(objective_from_parts(
                &self.dx,
                &s,
                &l,
                &f,
                y,
                cfg.lambda,
                cfg.query_weight,
                &gamma,
            ));

            if let Some(p) = &prev {
                let diff: f64 = f
                    .iter()
                    .zip(p)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if diff / norm2(p).max(1e-12) < cfg.tol {
                    converged = true;
                    break;
                }
            }
            prev = Some(f.clone());
        }

        Ok(RankResult {
            scores: f,
            affinity: s,
            gamma,
            iterations: trace.len(),
            objective_trace: trace,
            converged,
        })
    }
}

/// Runs the alternating solver from a fresh distance-only graph.
pub fn ran_solve(data: &DataMatrix, y: &QueryVector, cfg: &RankConfig) -> Result<RankResult> {
    RanSolver::new(data, cfg.clone())?.solve(y)
}

/// Indices outside `exclude`, by descending score, ties by ascending index.
pub fn rank_order(f: &[f64], exclude: &[usize]) -> Vec<usize> {
    let mut skip = vec![false; f.len()];
    for &e in exclude {
        if e < f.len() {
            skip[e] = true;
        }
    }
    let mut order: Vec<usize> = (0..f.len()).filter(|&i| !skip[i]).collect();
    order.sort_by(|&a, &b| f[b].total_cmp(&f[a]).then(a.cmp(&b)));
    order
}
