//! Fixed-graph reference rankers: plain Euclidean distance to the nearest
//! query, and manifold ranking on a Gaussian-kernel graph.

use serde::{Deserialize, Serialize};

use crate::affinity::pairwise_sq_dists;
use crate::dataset::DataMatrix;
use crate::linalg::{solve_spd, CsrMatrix};
use crate::ranking::QueryVector;
use crate::{Error, Result};

/// `-min_q ||x_i - x_q||`: closer to some query ranks higher, queries score 0.
pub fn euclidean_rank(data: &DataMatrix, y: &QueryVector) -> Result<Vec<f64>> {
    if y.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: y.len(),
        });
    }
    Ok(data
        .rows()
        .map(|xi| {
            let nearest = y
                .queries()
                .iter()
                .map(|&q| {
                    xi.iter()
                        .zip(data.row(q))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            0.0 - nearest.sqrt()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelGraphConfig {
    /// Gaussian bandwidth; `None` uses the median pairwise distance.
    pub sigma: Option<f64>,
    /// Keep only each point's k strongest edges before symmetrizing.
    pub k_sparsify: Option<usize>,
    /// Diffusion damping in (0, 1).
    pub alpha: f64,
}

impl Default for KernelGraphConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            k_sparsify: None,
            alpha: 0.99,
        }
    }
}

impl KernelGraphConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("sigma must be positive, got {s}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if let Some(k) = self.k_sparsify {
            if k == 0 || k >= n {
                return Err(Error::invalid(format!(
                    "k_sparsify must be in 1..={}, got {k}",
                    n - 1
                )));
            }
        }
        Ok(())
    }
}

/// Median of the `n(n-1)/2` pairwise Euclidean distances.
pub fn median_pairwise_distance(data: &DataMatrix) -> f64 {
    let dx = pairwise_sq_dists(data);
    let n = data.n();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| dx.get(i, j).sqrt())
        .collect();
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

/// Symmetrically normalized kernel graph `D^{-1/2} W D^{-1/2}`. Isolated
/// vertices get an all-zero row.
pub fn normalized_kernel_graph(data: &DataMatrix, cfg: &KernelGraphConfig) -> Result<CsrMatrix> {
    let n = data.n();
    cfg.validate(n)?;
    let sigma = match cfg.sigma {
        Some(s) => s,
        None => {
            let s = median_pairwise_distance(data);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        }
    };
    let dx = pairwise_sq_dists(data);
    let denom = 2.0 * sigma * sigma;
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i * n + j] = (-dx.get(i, j) / denom).exp();
            }
        }
    }

    if let Some(k) = cfg.k_sparsify {
        let mut keep = vec![false; n * n];
        for i in 0..n {
            let mut nbrs: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            nbrs.sort_by(|&a, &b| dx.get(i, a).total_cmp(&dx.get(i, b)).then(a.cmp(&b)));
            for &j in &nbrs[..k] {
                keep[i * n + j] = true;
            }
        }
        let mut sparse = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let a = if keep[i * n + j] { w[i * n + j] } else { 0.0 };
                let b = if keep[j * n + i] { w[j * n + i] } else { 0.0 };
                sparse[i * n + j] = a.max(b);
            }
        }
        w = sparse;
    }

    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = w[i * n..(i + 1) * n].iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();

    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = w[i * n + j] * inv_sqrt_deg[i] * inv_sqrt_deg[j];
            if v != 0.0 {
                triplets.push((i, j, v));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, triplets))
}

/// Manifold ranking: `f = (I - alpha S) ^{-1} y` on the normalized kernel graph.
pub fn manifold_rank(
    data: &DataMatrix,
    y: &QueryVector,
    cfg: &KernelGraphConfig,
) -> Result<Vec<f64>> {
    if y.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: y.len(),
        });
    }
    let s = normalized_kernel_graph(data, cfg)?;
    let system = s.scaled_plus_diagonal(-cfg.alpha, &vec![1.0; data.n()]);
    let yv = y.indicator();
    Ok(solve_spd(&system, &yv, 1e-8)?.x)
}
