//! Adaptive neighbor assignment.
//!
//! Each point `i` gets a sparse probability vector `s_i` over the other points
//! that minimizes `sum_j d_ij s_ij + gamma_i s_ij^2` on the simplex, i.e. the
//! Euclidean projection of `-d_i / (2 gamma_i)` onto the probability simplex.
//! The KKT conditions give `s_ij = (eta - d_ij / (2 gamma_i))_+`; choosing
//!
//! ```text
//! gamma_i = k/2 * d_(k+1) - 1/2 * sum_{j<=k} d_(j)
//! ```
//!
//! over the ascending-sorted candidate distances places exactly `k` points in
//! the support. Self is never a candidate and the diagonal of `S` is zero.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DataMatrix;
use crate::linalg::CsrMatrix;
use crate::{Error, Result};

/// Dense symmetric matrix of squared Euclidean distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SqDistances {
    n: usize,
    values: Vec<f64>,
}

impl SqDistances {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// `||x_i - x_j||^2` for every pair, summed coordinate-wise (no norm expansion,
/// so there is no cancellation for nearby points).
pub fn pairwise_sq_dists(data: &DataMatrix) -> SqDistances {
    let n = data.n();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        let xi = data.row(i);
        for j in (i + 1)..n {
            let d: f64 = xi
                .iter()
                .zip(data.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    SqDistances { n, values }
}

/// Distances from one point to all points, including itself at `self_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceVector {
    entries: Vec<f64>,
    self_index: usize,
}

impl DistanceVector {
    pub fn new(entries: Vec<f64>, self_index: usize) -> Result<Self> {
        if self_index >= entries.len() {
            return Err(Error::invalid(format!(
                "self index {self_index} out of range for {} entries",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid(format!(
                "distance {bad} must be finite and nonnegative, got {}",
                entries[bad]
            )));
        }
        let mut entries = entries;
        entries[self_index] = 0.0;
        Ok(Self {
            entries,
            self_index,
        })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn self_index(&self) -> usize {
        self.self_index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// How `gamma_i` is chosen for a row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaChoice {
    /// Largest value that still gives exactly `k` neighbors.
    Auto,
    Fixed(f64),
}

/// One solved row: sparse weights sorted by column index, plus the `gamma_i`
/// that produced them (0 for the uniform tie fallback).
#[derive(Debug, Clone, PartialEq)]
pub struct RowAssignment {
    pub weights: Vec<(usize, f64)>,
    pub gamma: f64,
}

/// Candidate `(distance, index)` pairs for the `count` nearest non-self points,
/// ascending, ties broken by index.
fn nearest_candidates(d: &[f64], self_index: usize, count: usize) -> Vec<(f64, usize)> {
    let mut cand: Vec<(f64, usize)> = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != self_index)
        .map(|(j, &dj)| (dj, j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if count < cand.len() {
        cand.select_nth_unstable_by(count, cmp);
        cand.truncate(count);
    }
    cand.sort_unstable_by(cmp);
    cand
}

/// `gamma_i` from the k nearest and the (k+1)-th sorted distances.
///
/// When all other points are neighbors there is no (k+1)-th candidate; the
/// nearest distance reflected through the k-th, `2 d_(k) - d_(1)`, stands in
/// for it. That keeps gamma invariant to shifting all distances and strictly
/// inside the exact-k interval whenever `d_(1) < d_(k)`.
fn auto_gamma(sorted: &[f64], k: usize) -> f64 {
    let sum_k: f64 = sorted[..k].iter().sum();
    let next = match sorted.get(k) {
        Some(&d) => d,
        None => 2.0 * sorted[k - 1] - sorted[0],
    };
    0.5 * (k as f64 * next - sum_k)
}

/// Treats gamma as zero when it is within rounding of the terms it came from.
fn is_degenerate(gamma: f64, sorted: &[f64], k: usize) -> bool {
    let scale = k as f64
        * sorted[..=k.min(sorted.len() - 1)]
            .iter()
            .fold(0.0_f64, |m, &d| m.max(d));
    gamma <= 8.0 * f64::EPSILON * scale
}

/// Closed-form simplex solution over the ascending `sorted` distances.
///
/// The support size `m <= k` is the largest with `2 gamma + sum_{j<=m} (d_j -
/// d_m) > 0`, and `s_j = 1/m + (mean_{<=m} d - d_j) / (2 gamma)`. With auto
/// gamma and `d_(k) < d_(k+1)` that gives `m = k`.
fn simplex_weights(sorted: &[f64], k: usize, gamma: f64) -> Vec<f64> {
    let mut m = 1;
    let mut prefix = sorted[0];
    let mut support_sum = prefix;
    for t in 2..=k {
        prefix += sorted[t - 1];
        if 2.0 * gamma + prefix - t as f64 * sorted[t - 1] > 0.0 {
            m = t;
            support_sum = prefix;
        } else {
            break;
        }
    }
    let mean = support_sum / m as f64;
    let inv_m = 1.0 / m as f64;
    sorted[..m]
        .iter()
        .map(|&dj| inv_m + (mean - dj) / (2.0 * gamma))
        .collect()
}

/// Solves one row of the neighbor assignment.
///
/// Ties in the sorted candidates that collapse `gamma_i` to zero fall back to
/// uniform `1/k` weights on the first `k` candidates.
pub fn assign_neighbors_row(
    d: &DistanceVector,
    k: usize,
    gamma: GammaChoice,
) -> Result<RowAssignment> {
    let candidates = d.len() - 1;
    if k == 0 || k > candidates {
        return Err(Error::invalid(format!(
            "k must be in 1..={candidates}, got {k}"
        )));
    }
    Ok(assign_row_unchecked(d.entries(), d.self_index(), k, gamma))
}

fn assign_row_unchecked(
    d: &[f64],
    self_index: usize,
    k: usize,
    gamma: GammaChoice,
) -> RowAssignment {
    let cand = nearest_candidates(d, self_index, k + 1);
    let sorted: Vec<f64> = cand.iter().map(|c| c.0).collect();

    let (gamma_i, degenerate) = match gamma {
        GammaChoice::Auto => {
            let g = auto_gamma(&sorted, k);
            (g, is_degenerate(g, &sorted, k))
        }
        GammaChoice::Fixed(g) => (g, false),
    };

    let mut weights: Vec<(usize, f64)> = if degenerate {
        let w = 1.0 / k as f64;
        cand[..k].iter().map(|&(_, j)| (j, w)).collect()
    } else {
        simplex_weights(&sorted, k, gamma_i)
            .into_iter()
            .zip(&cand)
            .map(|(w, &(_, j))| (j, w))
            .filter(|&(_, w)| w > 0.0)
            .collect()
    };
    weights.sort_unstable_by_key(|&(j, _)| j);

    RowAssignment {
        weights,
        gamma: if degenerate { 0.0 } else { gamma_i.max(0.0) },
    }
}

/// Per-row regularization weights and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaResult {
    pub per_row: Vec<f64>,
    pub mean: f64,
}

impl GammaResult {
    pub fn from_per_row(per_row: Vec<f64>) -> Self {
        let mean = if per_row.is_empty() {
            0.0
        } else {
            per_row.iter().sum::<f64>() / per_row.len() as f64
        };
        Self { per_row, mean }
    }

    pub fn uniform(n: usize, gamma: f64) -> Self {
        Self::from_per_row(vec![gamma; n])
    }
}

/// Row-sparse learned affinity `S`. Row `i` lists `(j, s_ij)` sorted by `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseAffinity {
    n: usize,
    k: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseAffinity {
    /// Wraps rows without checking the simplex invariants; see [`Self::validate`].
    pub fn from_rows(n: usize, k: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rows.len(),
            });
        }
        for row in &mut rows {
            if row.iter().any(|&(j, _)| j >= n) {
                return Err(Error::invalid("column index out of range"));
            }
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        Ok(Self { n, k, rows })
    }

    /// An edgeless graph.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            k: 0,
            rows: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |p| self.rows[i][p].1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Checks row sums (within `tol`), weight range, row sparsity and the zero
    /// diagonal.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() > self.k {
                return Err(Error::invalid(format!(
                    "row {i} has {} nonzeros, more than k = {}",
                    row.len(),
                    self.k
                )));
            }
            let mut sum = 0.0;
            for &(j, w) in row {
                if j == i && w != 0.0 {
                    return Err(Error::invalid(format!("row {i} has a self weight {w}")));
                }
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::invalid(format!(
                        "weight ({i}, {j}) = {w} outside [0, 1]"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > tol {
                return Err(Error::invalid(format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Coordinate triplets `i,j,weight`, one nonzero per line.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                writeln!(out, "{i},{j},{w}")?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_triplets<R: Read>(reader: R, n: usize, k: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = vec![Vec::new(); n];
        for (r, rec) in rdr.records().enumerate() {
            let row = r + 1;
            let rec = rec.map_err(|e| Error::Parse {
                row,
                column: 0,
                message: e.to_string(),
            })?;
            if rec.len() != 3 {
                return Err(Error::Parse {
                    row,
                    column: rec.len().min(3) + 1,
                    message: "expected i,j,weight".into(),
                });
            }
            let idx = |c: usize| {
                rec[c].parse::<usize>().map_err(|_| Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("not an index: {:?}", &rec[c]),
                })
            };
            let (i, j) = (idx(0)?, idx(1)?);
            let w: f64 = rec[2].parse().map_err(|_| Error::Parse {
                row,
                column: 3,
                message: format!("not a number: {:?}", &rec[2]),
            })?;
            if i >= n {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            rows[i].push((j, w));
        }
        Self::from_rows(n, k, rows)
    }
}

/// Builds row distance vectors `d_ij = d^x_ij + lambda (f_i - f_j)^2` and
/// solves every row. Rows are independent; the parallel map preserves order
/// so the result matches a sequential run bit for bit.
pub fn assign_from_distances(
    dx: &SqDistances,
    scores: Option<&[f64]>,
    lambda: f64,
    k: usize,
    gamma: GammaChoice,
) -> Result<(SparseAffinity, GammaResult)> {
    let n = dx.n();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "k must be in 1..={}, got {k}",
            n - 1
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if let GammaChoice::Fixed(g) = gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::invalid(format!(
                "fixed gamma must be positive, got {g}"
            )));
        }
    }
    if let Some(f) = scores {
        if f.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f.len(),
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ranking scores".into()));
        }
    }

    let solved: Vec<RowAssignment> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, i| {
                let row = dx.row(i);
                match scores {
                    Some(f) if lambda > 0.0 => {
                        for j in 0..n {
                            let df = f[i] - f[j];
                            buf[j] = row[j] + lambda * df * df;
                        }
                    }
                    _ => buf.copy_from_slice(row),
                }
                assign_row_unchecked(buf, i, k, gamma)
            },
        )
        .collect();

    let mut rows = Vec::with_capacity(n);
    let mut per_row = Vec::with_capacity(n);
    for r in solved {
        rows.push(r.weights);
        per_row.push(r.gamma);
    }
    Ok((
        SparseAffinity { n, k, rows },
        GammaResult::from_per_row(per_row),
    ))
}

/// Neighbor assignment for every point with auto gamma. Without `scores` only
/// feature distances are used, which is how `S` is initialized.
pub fn assign_all_neighbors(
    data: &DataMatrix,
    scores: Option<&[f64]>,
    lambda: f64,
    k: usize,
) -> Result<(SparseAffinity, GammaResult)> {
    assign_from_distances(
        &pairwise_sq_dists(data),
        scores,
        lambda,
        k,
        GammaChoice::Auto,
    )
}

/// Per-point gamma from feature distances alone, and its mean.
pub fn compute_gamma(data: &DataMatrix, k: usize) -> Result<GammaResult> {
    let n = data.n();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "k must be in 1..={}, got {k}",
            n - 1
        )));
    }
    let dx = pairwise_sq_dists(data);
    let per_row = (0..n)
        .map(|i| {
            let sorted: Vec<f64> = nearest_candidates(dx.row(i), i, k + 1)
                .into_iter()
                .map(|c| c.0)
                .collect();
            let g = auto_gamma(&sorted, k);
            if is_degenerate(g, &sorted, k) {
                0.0
            } else {
                g
            }
        })
        .collect();
    Ok(GammaResult::from_per_row(per_row))
}

/// Symmetrized graph Laplacian `L = D - (S + S^T)/2`, stored sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: CsrMatrix,
}

impl Laplacian {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// `v^T L v`
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.matrix.quad_form(v)
    }

    /// Builds from an arbitrary symmetric weight list (used by tests and
    /// callers assembling their own graphs).
    pub fn from_matrix(matrix: CsrMatrix) -> Self {
        Self { matrix }
    }
}

pub fn laplacian(s: &SparseAffinity) -> Laplacian {
    let n = s.n();
    let mut triplets = Vec::with_capacity(4 * s.nnz());
    for (i, row) in s.rows().iter().enumerate() {
        for &(j, w) in row {
            if i == j {
                continue;
            }
            let h = 0.5 * w;
            triplets.push((i, j, -h));
            triplets.push((j, i, -h));
            triplets.push((i, i, h));
            triplets.push((j, j, h));
        }
    }
    Laplacian {
        matrix: CsrMatrix::from_triplets(n, triplets),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dv(d: &[f64]) -> DistanceVector {
        // candidates after a leading self entry
        let mut e = vec![0.0];
        e.extend_from_slice(d);
        DistanceVector::new(e, 0).unwrap()
    }

    fn dense_weights(r: &RowAssignment, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(j, w) in &r.weights {
            out[j] = w;
        }
        out
    }

    #[test]
    fn three_four_five() {
        let m = DataMatrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let d = pairwise_sq_dists(&m);
        assert_eq!(d.get(0, 1), 25.0);
        assert_eq!(d.get(1, 0), 25.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn worked_row_example() {
        let r = assign_neighbors_row(&dv(&[1.0, 2.0, 4.0]), 2, GammaChoice::Auto).unwrap();
        assert!((r.gamma - 2.5).abs() < 1e-12);
        let w = dense_weights(&r, 4);
        assert!((w[1] - 0.6).abs() < 1e-12);
        assert!((w[2] - 0.4).abs() < 1e-12);
        assert_eq!(w[3], 0.0);
    }

    #[test]
    fn k_one_picks_nearest() {
        let r = assign_neighbors_row(&dv(&[3.0, 0.5, 2.0]), 1, GammaChoice::Auto).unwrap();
        assert_eq!(r.weights, vec![(2, 1.0)]);
    }

    #[test]
    fn all_ties_fall_back_to_uniform() {
        let r = assign_neighbors_row(&dv(&[2.0; 5]), 3, GammaChoice::Auto).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(r.weights, vec![(1, third), (2, third), (3, third)]);
        assert_eq!(r.gamma, 0.0);
    }

    #[test]
    fn boundary_tie_shrinks_support() {
        // d_(2) == d_(3): gamma sits on the lower bound and s_(2) hits zero
        let r = assign_neighbors_row(&dv(&[1.0, 2.0, 2.0]), 2, GammaChoice::Auto).unwrap();
        assert!((r.gamma - 0.5).abs() < 1e-15);
        assert_eq!(r.weights, vec![(1, 1.0)]);
    }

    #[test]
    fn full_support_uses_reflected_gamma() {
        // k = n - 1: no (k+1)-th candidate
        let r = assign_neighbors_row(&dv(&[1.0, 2.0, 4.0]), 3, GammaChoice::Auto).unwrap();
        // next = 2*4 - 1 = 7, gamma = (3*7 - 7)/2 = 7
        assert!((r.gamma - 7.0).abs() < 1e-12);
        assert_eq!(r.weights.len(), 3);
        let sum: f64 = r.weights.iter().map(|w| w.1).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_k_and_bad_distances() {
        assert!(assign_neighbors_row(&dv(&[1.0, 2.0]), 3, GammaChoice::Auto).is_err());
        assert!(assign_neighbors_row(&dv(&[1.0, 2.0]), 0, GammaChoice::Auto).is_err());
        assert!(DistanceVector::new(vec![0.0, -1.0], 0).is_err());
        assert!(DistanceVector::new(vec![0.0, f64::NAN], 0).is_err());
        assert!(DistanceVector::new(vec![0.0, 1.0], 2).is_err());
    }

    #[test]
    fn fixed_gamma_matches_formula_inside_interval() {
        // interval for k = 2 over [1,2,4] is (0.5, 2.5]
        let r = assign_neighbors_row(&dv(&[1.0, 2.0, 4.0]), 2, GammaChoice::Fixed(1.0)).unwrap();
        let w = dense_weights(&r, 4);
        // eta = 1/2 + 3/4 = 1.25; s = 1.25 - d/2
        assert!((w[1] - 0.75).abs() < 1e-15);
        assert!((w[2] - 0.25).abs() < 1e-15);
        // small gamma: only the nearest survives
        let r = assign_neighbors_row(&dv(&[1.0, 2.0, 4.0]), 2, GammaChoice::Fixed(0.1)).unwrap();
        assert_eq!(r.weights, vec![(1, 1.0)]);
    }

    #[test]
    fn collinear_nearest_neighbors() {
        let m = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![10.0]]).unwrap();
        let (s, _) = assign_all_neighbors(&m, None, 1.0, 1).unwrap();
        assert_eq!(s.row(0), &[(1, 1.0)]);
        // point 1 is equidistant from 0 and 2; the index tie-break picks 0
        assert_eq!(s.row(1), &[(0, 1.0)]);
        assert_eq!(s.row(2), &[(1, 1.0)]);
        assert_eq!(s.row(3), &[(2, 1.0)]);
    }

    #[test]
    fn scores_absent_equals_constant_scores() {
        let m = DataMatrix::from_rows(&[
            vec![0.0, 1.0],
            vec![1.5, 0.2],
            vec![2.0, 2.0],
            vec![-1.0, 0.3],
            vec![0.4, 0.4],
        ])
        .unwrap();
        let a = assign_all_neighbors(&m, None, 3.0, 2).unwrap();
        let b = assign_all_neighbors(&m, Some(&[0.7; 5]), 3.0, 2).unwrap();
        assert_eq!(a, b);
        a.0.validate(1e-10).unwrap();
    }

    #[test]
    fn gamma_examples() {
        let m = DataMatrix::from_rows(&vec![vec![1.0, 1.0]; 4]).unwrap();
        let g = compute_gamma(&m, 2).unwrap();
        assert_eq!(g.per_row, vec![0.0; 4]);
        assert_eq!(g.mean, 0.0);

        // points 0, 1, 3 on a line: d from point 0 is [1, 9]
        let m = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let g = compute_gamma(&m, 1).unwrap();
        // rows: 0 -> (1, 9), 1 -> (1, 4), 2 -> (4, 9)
        assert_eq!(g.per_row, vec![4.0, 1.5, 2.5]);
        assert!((g.mean - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn laplacian_small_cases() {
        let l = laplacian(&SparseAffinity::empty(3));
        assert_eq!(l.matrix().nnz(), 0);

        let s = SparseAffinity::from_rows(2, 1, vec![vec![(1, 1.0)], vec![(0, 1.0)]]).unwrap();
        assert_eq!(
            laplacian(&s).matrix().to_dense(),
            vec![vec![1.0, -1.0], vec![-1.0, 1.0]]
        );
    }

    #[test]
    fn triplet_csv_round_trip() {
        let m = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.5], vec![4.0]]).unwrap();
        let (s, _) = assign_all_neighbors(&m, None, 0.0, 2).unwrap();
        let mut buf = Vec::new();
        s.write_triplets(&mut buf).unwrap();
        let back = SparseAffinity::read_triplets(buf.as_slice(), 4, 2).unwrap();
        assert_eq!(back, s);
        assert!(SparseAffinity::read_triplets("0,1\n".as_bytes(), 4, 2).is_err());
    }

    #[test]
    fn validate_catches_violations() {
        let bad_sum =
            SparseAffinity::from_rows(2, 1, vec![vec![(1, 0.5)], vec![(0, 1.0)]]).unwrap();
        assert!(bad_sum.validate(1e-10).is_err());
        let self_loop =
            SparseAffinity::from_rows(2, 1, vec![vec![(0, 1.0)], vec![(0, 1.0)]]).unwrap();
        assert!(self_loop.validate(1e-10).is_err());
        let too_many = SparseAffinity::from_rows(
            3,
            1,
            vec![vec![(1, 0.5), (2, 0.5)], vec![(0, 1.0)], vec![(0, 1.0)]],
        )
        .unwrap();
        assert!(too_many.validate(1e-10).is_err());
    }

    fn distance_row() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (3usize..15).prop_flat_map(|n| (proptest::collection::vec(0.0f64..10.0, n), 1usize..n - 1))
    }

    proptest! {
        #[test]
        fn weights_decrease_with_distance((d, k) in distance_row()) {
            let r = assign_neighbors_row(&dv(&d), k, GammaChoice::Auto).unwrap();
            let mut by_dist: Vec<(f64, f64)> = r.weights.iter().map(|&(j, w)| (d[j - 1], w)).collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            for pair in by_dist.windows(2) {
                if pair[0].0 < pair[1].0 {
                    prop_assert!(pair[0].1 > pair[1].1);
                }
            }
        }

        #[test]
        fn exact_k_support_for_distinct_distances((d, k) in distance_row()) {
            let mut sorted = d.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
            let r = assign_neighbors_row(&dv(&d), k, GammaChoice::Auto).unwrap();
            prop_assert_eq!(r.weights.len(), k);
            let sum: f64 = r.weights.iter().map(|w| w.1).sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
        }

        #[test]
        fn shift_invariance((d, k) in distance_row(), c in 0.0f64..5.0) {
            let a = assign_neighbors_row(&dv(&d), k, GammaChoice::Auto).unwrap();
            let shifted: Vec<f64> = d.iter().map(|x| x + c).collect();
            let b = assign_neighbors_row(&dv(&shifted), k, GammaChoice::Auto).unwrap();
            prop_assert!((a.gamma - b.gamma).abs() <= 1e-9 * (1.0 + a.gamma));
            let (wa, wb) = (dense_weights(&a, d.len() + 1), dense_weights(&b, d.len() + 1));
            for (x, y) in wa.iter().zip(&wb) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
