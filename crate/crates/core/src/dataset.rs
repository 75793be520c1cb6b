//! Feature matrices, labeled corpora, synthetic manifolds and CSV interchange.
//!
//! All randomness goes through [`ChaCha8Rng`] seeded with `seed_from_u64`, so a
//! given `(arguments, seed)` pair yields bit-identical data on every platform.
//! Gaussian noise is drawn with `rand_distr::Normal`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major `n x d` feature matrix. One row per data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 points, got {n}")));
        }
        if d < 1 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) = {}",
                pos / d,
                pos % d,
                values[pos]
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: rows[bad].len(),
            });
        }
        Self::new(rows.len(), d, rows.concat())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows picked out by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.d, values)
    }
}

/// A data matrix with one integer class label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub data: DataMatrix,
    pub labels: Vec<i64>,
}

impl LabeledDataset {
    pub fn new(data: DataMatrix, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != data.n() {
            return Err(Error::DimensionMismatch {
                expected: data.n(),
                got: labels.len(),
            });
        }
        Ok(Self { data, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member count per class, ordered by label.
    pub fn class_counts(&self) -> BTreeMap<i64, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    /// Draws `per_class` members of every class without replacement.
    ///
    /// Output keeps the original relative order of the chosen rows. Classes
    /// smaller than `per_class` are rejected.
    pub fn stratified_subset(&self, per_class: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            by_class.entry(l).or_default().push(i);
        }
        let mut chosen = Vec::with_capacity(per_class * by_class.len());
        for (label, members) in by_class.iter_mut() {
            if members.len() < per_class {
                return Err(Error::invalid(format!(
                    "class {label} has {} members, fewer than {per_class}",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            chosen.extend_from_slice(&members[..per_class]);
        }
        chosen.sort_unstable();
        let labels = chosen.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.data.select_rows(&chosen)?, labels)
    }
}

fn noise(noise_sd: f64) -> Result<Normal<f64>> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::invalid(format!(
            "noise standard deviation must be finite and >= 0, got {noise_sd}"
        )));
    }
    Normal::new(0.0, noise_sd).map_err(|e| Error::invalid(e.to_string()))
}

/// Two interleaved half circles.
///
/// Upper moon: `(cos t, sin t)`, lower moon: `(1 - cos t, 0.5 - sin t)`, with
/// `t` evenly spaced over `[0, pi]` (both ends included) and isotropic
/// Gaussian noise. Rows `0..n_per_moon` are the
/// upper moon (label 0), the rest the lower moon (label 1).
pub fn gen_two_moons(n_per_moon: usize, noise_sd: f64, seed: u64) -> Result<LabeledDataset> {
    if n_per_moon < 2 {
        return Err(Error::invalid(format!(
            "n_per_moon must be at least 2, got {n_per_moon}"
        )));
    }
    let normal = noise(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(4 * n_per_moon);
    let mut labels = Vec::with_capacity(2 * n_per_moon);
    for moon in 0..2 {
        for i in 0..n_per_moon {
            let t = std::f64::consts::PI * i as f64 / (n_per_moon - 1) as f64;
            let (x, y) = if moon == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            values.push(x + normal.sample(&mut rng));
            values.push(y + normal.sample(&mut rng));
            labels.push(moon);
        }
    }
    LabeledDataset::new(DataMatrix::new(2 * n_per_moon, 2, values)?, labels)
}

/// Three concentric noisy circles, labeled 0/1/2 from the inside out.
///
/// Angles are evenly spaced over `[0, 2pi)`; only the noise is random.
pub fn gen_three_rings(
    n_per_ring: usize,
    radii: [f64; 3],
    noise_sd: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_per_ring < 1 {
        return Err(Error::invalid("n_per_ring must be positive"));
    }
    if !(radii[0] > 0.0 && radii[0] < radii[1] && radii[1] < radii[2] && radii[2].is_finite()) {
        return Err(Error::invalid(format!(
            "radii must be positive and strictly increasing, got {radii:?}"
        )));
    }
    let normal = noise(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(6 * n_per_ring);
    let mut labels = Vec::with_capacity(3 * n_per_ring);
    for (ring, &r) in radii.iter().enumerate() {
        for i in 0..n_per_ring {
            let theta = std::f64::consts::TAU * i as f64 / n_per_ring as f64;
            values.push(r * theta.cos() + normal.sample(&mut rng));
            values.push(r * theta.sin() + normal.sample(&mut rng));
            labels.push(ring as i64);
        }
    }
    LabeledDataset::new(DataMatrix::new(3 * n_per_ring, 2, values)?, labels)
}

/// Reads a headerless numeric CSV. See [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<usize>) -> Result<LabeledDataset> {
    read_csv(File::open(path)?, label_column)
}

/// Parses a rectangular, headerless numeric CSV.
///
/// When `label_column` is given that column holds integer class labels and is
/// dropped from the features; otherwise every label is 0.
pub fn read_csv<R: Read>(reader: R, label_column: Option<usize>) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                row,
                column: record.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        if let Some(lc) = label_column {
            if lc >= w {
                return Err(Error::invalid(format!(
                    "label column {lc} out of range for {w} columns"
                )));
            }
        }
        for (c, field) in record.iter().enumerate() {
            let parse_err = |message: String| Error::Parse {
                row,
                column: c + 1,
                message,
            };
            if Some(c) == label_column {
                labels.push(parse_label(field).map_err(parse_err)?);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(format!("not a number: {field:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(format!("non-finite value {field:?}")));
                }
                values.push(v);
            }
        }
        n += 1;
    }

    let width = width.ok_or_else(|| Error::Empty("CSV has no rows".into()))?;
    let d = width - usize::from(label_column.is_some());
    if label_column.is_none() {
        labels = vec![0; n];
    }
    LabeledDataset::new(DataMatrix::new(n, d, values)?, labels)
}

fn parse_label(field: &str) -> std::result::Result<i64, String> {
    if let Ok(l) = field.parse::<i64>() {
        return Ok(l);
    }
    match field.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(format!("not an integer label: {field:?}")),
    }
}

/// Writes features followed by the label as the last column.
pub fn write_csv<W: Write>(dataset: &LabeledDataset, mut out: W) -> Result<()> {
    let mut line = String::new();
    for (row, label) in dataset.data.rows().zip(&dataset.labels) {
        line.clear();
        for v in row {
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&label.to_string());
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, std::io::BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    /// Each row to mean 0, variance 1.
    ZscorePerPoint,
    /// Each column to mean 0, variance 1.
    ZscorePerFeature,
    None,
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub data: DataMatrix,
    /// Rows (per-point mode) or columns (per-feature mode) with zero variance.
    /// These were centered only.
    pub zero_variance: Vec<usize>,
}

impl Normalized {
    pub fn has_warning(&self) -> bool {
        !self.zero_variance.is_empty()
    }
}

/// Z-score normalization using the population variance.
pub fn normalize(data: &DataMatrix, mode: NormalizeMode) -> Normalized {
    let (n, d) = (data.n(), data.d());
    let mut values = data.values().to_vec();
    let mut zero_variance = Vec::new();

    // Visits one axis slice through a stride so rows and columns share code.
    let mut standardize = |start: usize, stride: usize, len: usize, id: usize| {
        let idx = |t: usize| start + t * stride;
        let mean = (0..len).map(|t| values[idx(t)]).sum::<f64>() / len as f64;
        let var = (0..len)
            .map(|t| (values[idx(t)] - mean).powi(2))
            .sum::<f64>()
            / len as f64;
        let sd = var.sqrt();
        let scale = if sd > 0.0 {
            1.0 / sd
        } else {
            zero_variance.push(id);
            0.0
        };
        for t in 0..len {
            let v = &mut values[idx(t)];
            *v = (*v - mean) * scale;
        }
    };

    match mode {
        NormalizeMode::ZscorePerPoint => (0..n).for_each(|i| standardize(i * d, 1, d, i)),
        NormalizeMode::ZscorePerFeature => (0..d).for_each(|c| standardize(c, d, n, c)),
        NormalizeMode::None => {}
    }

    Normalized {
        data: DataMatrix::new(n, d, values).expect("normalization keeps shape and finiteness"),
        zero_variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_matrix_rejects_bad_shapes() {
        assert!(DataMatrix::new(1, 2, vec![0.0, 0.0]).is_err());
        assert!(DataMatrix::new(2, 0, vec![]).is_err());
        assert!(DataMatrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(matches!(
            DataMatrix::new(2, 1, vec![0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn two_moons_noiseless_endpoints() {
        let ds = gen_two_moons(2, 0.0, 0).unwrap();
        assert_eq!(ds.data.n(), 4);
        assert_eq!(ds.data.row(0), &[1.0, 0.0]);
        let end = ds.data.row(1);
        assert!((end[0] + 1.0).abs() < 1e-15 && end[1].abs() < 1e-15);
        assert_eq!(ds.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn two_moons_counts() {
        let ds = gen_two_moons(100, 0.1, 7).unwrap();
        assert_eq!(ds.data.n(), 200);
        assert_eq!(
            ds.class_counts().into_iter().collect::<Vec<_>>(),
            vec![(0, 100), (1, 100)]
        );
        assert!(ds.data.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn two_moons_noiseless_half_planes() {
        let ds = gen_two_moons(50, 0.0, 3).unwrap();
        for (row, &l) in ds.data.rows().zip(&ds.labels) {
            // every point must lie on its parametric arc
            if l == 0 {
                assert!(row[1] >= 0.0);
                assert!((row[0].hypot(row[1]) - 1.0).abs() < 1e-12);
            } else {
                assert!(row[1] <= 0.5);
                assert!(((1.0 - row[0]).hypot(0.5 - row[1]) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_moons_rejects_bad_args() {
        assert!(gen_two_moons(1, 0.1, 0).is_err());
        assert!(gen_two_moons(10, -0.1, 0).is_err());
        assert!(gen_two_moons(10, f64::NAN, 0).is_err());
    }

    #[test]
    fn three_rings_noiseless_radius() {
        let ds = gen_three_rings(4, [1.0, 2.0, 3.0], 0.0, 0).unwrap();
        for (row, &l) in ds.data.rows().zip(&ds.labels) {
            let r = row[0].hypot(row[1]);
            assert!((r - (l + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn three_rings_counts_and_mean_radius() {
        let ds = gen_three_rings(60, [1.0, 2.0, 3.0], 0.05, 1).unwrap();
        assert_eq!(ds.data.n(), 180);
        let counts = ds.class_counts();
        assert!(counts.values().all(|&c| c == 60));
        for ring in 0..3 {
            let norms: Vec<f64> = ds
                .data
                .rows()
                .zip(&ds.labels)
                .filter(|(_, &l)| l == ring)
                .map(|(r, _)| r[0].hypot(r[1]))
                .collect();
            let mean = norms.iter().sum::<f64>() / norms.len() as f64;
            assert!(
                (mean - (ring + 1) as f64).abs() < 0.05,
                "ring {ring}: {mean}"
            );
        }
    }

    #[test]
    fn three_rings_rejects_unordered_radii() {
        assert!(gen_three_rings(5, [1.0, 1.0, 3.0], 0.0, 0).is_err());
        assert!(gen_three_rings(5, [3.0, 2.0, 1.0], 0.0, 0).is_err());
        assert!(gen_three_rings(5, [0.0, 2.0, 3.0], 0.0, 0).is_err());
    }

    #[test]
    fn generators_are_pure() {
        assert_eq!(
            gen_two_moons(30, 0.1, 9).unwrap(),
            gen_two_moons(30, 0.1, 9).unwrap()
        );
        assert_ne!(
            gen_two_moons(30, 0.1, 9).unwrap(),
            gen_two_moons(30, 0.1, 10).unwrap()
        );
        assert_eq!(
            gen_two_moons(30, 0.0, 9).unwrap(),
            gen_two_moons(30, 0.0, 10).unwrap()
        );
        assert_eq!(
            gen_three_rings(30, [1.0, 2.0, 3.0], 0.1, 9).unwrap(),
            gen_three_rings(30, [1.0, 2.0, 3.0], 0.1, 9).unwrap()
        );
    }

    #[test]
    fn csv_with_label_column() {
        let ds = read_csv("1,2,0\n3,4,0\n5,6,1".as_bytes(), Some(2)).unwrap();
        assert_eq!((ds.data.n(), ds.data.d()), (3, 2));
        assert_eq!(ds.data.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(ds.labels, vec![0, 0, 1]);
    }

    #[test]
    fn csv_without_labels_defaults_to_zero() {
        let ds = read_csv("1,2\n3,4\n".as_bytes(), None).unwrap();
        assert_eq!(ds.labels, vec![0, 0]);
        assert_eq!(ds.data.d(), 2);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            read_csv("".as_bytes(), None),
            Err(Error::Empty(_))
        ));
        match read_csv("a,b,label\n1,2,0\n3,4,1".as_bytes(), Some(2)) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (1, 1)),
            other => panic!("expected parse error, got {other:?}"),
        }
        match read_csv("1,2\n3,4,5\n".as_bytes(), None) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match read_csv("1,2\n3,x\n".as_bytes(), None) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(read_csv("1,2\n3,4\n".as_bytes(), Some(5)).is_err());
        assert!(read_csv("1,2.5\n3,4\n".as_bytes(), Some(1)).is_err());
    }

    #[test]
    fn csv_round_trip_file() {
        let ds = gen_three_rings(7, [1.0, 2.0, 3.5], 0.3, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rings.csv");
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path, Some(2)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn normalize_modes() {
        let m = DataMatrix::from_rows(&[vec![1.0, 3.0], vec![5.0, 5.0]]).unwrap();
        let z = normalize(&m, NormalizeMode::ZscorePerPoint);
        assert_eq!(z.data.row(0), &[-1.0, 1.0]);
        assert_eq!(z.data.row(1), &[0.0, 0.0]);
        assert_eq!(z.zero_variance, vec![1]);
        assert!(z.has_warning());

        let same = normalize(&m, NormalizeMode::None);
        assert_eq!(same.data, m);
        assert!(!same.has_warning());

        let f = normalize(&m, NormalizeMode::ZscorePerFeature);
        assert_eq!(f.data.row(0), &[-1.0, -1.0]);
        assert_eq!(f.data.row(1), &[1.0, 1.0]);
    }

    #[test]
    fn stratified_subset_picks_exact_counts() {
        let ds = gen_three_rings(20, [1.0, 2.0, 3.0], 0.1, 2).unwrap();
        let sub = ds.stratified_subset(5, 11).unwrap();
        assert_eq!(sub.len(), 15);
        assert!(sub.class_counts().values().all(|&c| c == 5));
        assert_eq!(sub, ds.stratified_subset(5, 11).unwrap());
        assert!(ds.stratified_subset(21, 0).is_err());
    }
}
