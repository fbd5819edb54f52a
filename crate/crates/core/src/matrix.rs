//! Prediction and weight matrices.
//!
//! Rows index base detectors (`m`), columns index samples (`n`); column 0 is
//! the input text and columns `1..=N` its paraphrases. Nothing downstream
//! treats column 0 specially.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix must have at least one row and one column (got {rows}x{cols})")]
    EmptyShape { rows: usize, cols: usize },
    #[error("expected {expected} values for the given shape, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("ragged rows: row {row} has {got} entries, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },
    #[error("probability at ({row}, {col}) is {value}, outside [0, 1]")]
    NotAProbability { row: usize, col: usize, value: f64 },
    #[error("weight at ({row}, {col}) is {value}; weights must be finite and non-negative")]
    InvalidWeight { row: usize, col: usize, value: f64 },
    #[error("all intermediate weights are zero")]
    AllZeroWeights,
    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("decision threshold must lie strictly inside (0, 1), got {0}")]
    InvalidThreshold(f64),
}

/// Binary label; `Harmful` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Benign,
    Harmful,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Benign),
            1 => Some(Label::Harmful),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Benign => 0,
            Label::Harmful => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.as_u8())
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Benign => Label::Harmful,
            Label::Harmful => Label::Benign,
        }
    }

    /// Probability mass a harmfulness probability `p` puts on this label.
    pub fn likelihood(self, p: f64) -> f64 {
        match self {
            Label::Harmful => p,
            Label::Benign => 1.0 - p,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// `M x (N+1)` matrix of harmfulness probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl PredictionMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, MatrixError> {
        check_shape(rows, cols, values.len())?;
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(MatrixError::NotAProbability {
                    row: i / cols,
                    col: i % cols,
                    value: v,
                });
            }
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatrixError> {
        let (r, c, values) = flatten_rows(rows)?;
        Self::new(r, c, values)
    }

    /// Number of base detectors, `M`.
    pub fn detectors(&self) -> usize {
        self.rows
    }

    /// Number of samples including the input, `N + 1`.
    pub fn samples(&self) -> usize {
        self.cols
    }

    /// Number of generated samples, `N`.
    pub fn generated(&self) -> usize {
        self.cols - 1
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.cols + n]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.cols..(m + 1) * self.cols]
    }

    pub fn column(&self, n: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        (0..self.rows).map(move |m| self.get(m, n))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|m| self.row(m).to_vec()).collect()
    }

    /// Reorders columns so that output column `j` is input column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.cols);
        let mut values = Vec::with_capacity(self.values.len());
        for m in 0..self.rows {
            values.extend(perm.iter().map(|&n| self.get(m, n)));
        }
        Self { rows: self.rows, cols: self.cols, values }
    }

    /// Reorders rows so that output row `i` is input row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.rows);
        let mut values = Vec::with_capacity(self.values.len());
        for &m in perm {
            values.extend_from_slice(self.row(m));
        }
        Self { rows: self.rows, cols: self.cols, values }
    }
}

/// Non-negative weights over the same grid as a [`PredictionMatrix`]. Holds
/// either intermediate (unnormalized) weights or normalized ones.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, MatrixError> {
        check_shape(rows, cols, values.len())?;
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MatrixError::InvalidWeight {
                    row: i / cols,
                    col: i % cols,
                    value: v,
                });
            }
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatrixError> {
        let (r, c, values) = flatten_rows(rows)?;
        Self::new(r, c, values)
    }

    pub fn uniform(rows: usize, cols: usize) -> Result<Self, MatrixError> {
        check_shape(rows, cols, rows * cols)?;
        let w = 1.0 / (rows * cols) as f64;
        Ok(Self { rows, cols, values: vec![w; rows * cols] })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.cols + n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.total() - 1.0).abs() <= tol
    }

    /// Divides every intermediate weight by the grand total.
    pub fn normalize(&self) -> Result<WeightMatrix, MatrixError> {
        normalize_weights(self)
    }
}

fn check_shape(rows: usize, cols: usize, len: usize) -> Result<(), MatrixError> {
    if rows == 0 || cols == 0 {
        return Err(MatrixError::EmptyShape { rows, cols });
    }
    if rows * cols != len {
        return Err(MatrixError::LengthMismatch { expected: rows * cols, got: len });
    }
    Ok(())
}

fn flatten_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<(usize, usize, Vec<f64>), MatrixError> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.as_ref().len());
    let mut values = Vec::with_capacity(r * c);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != c {
            return Err(MatrixError::RaggedRows { row: i, expected: c, got: row.len() });
        }
        values.extend_from_slice(row);
    }
    Ok((r, c, values))
}

/// Probability threshold for turning an aggregate into a label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionConfig {
    pub epsilon: f64,
}

impl DecisionConfig {
    pub fn new(epsilon: f64) -> Result<Self, MatrixError> {
        let cfg = Self { epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MatrixError> {
        if self.epsilon > 0.0 && self.epsilon < 1.0 {
            Ok(())
        } else {
            Err(MatrixError::InvalidThreshold(self.epsilon))
        }
    }
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self { epsilon: 0.5 }
    }
}

/// Plain average over every cell of the matrix.
pub fn aggregate_uniform(p: &PredictionMatrix) -> f64 {
    p.values.iter().sum::<f64>() / p.values.len() as f64
}

/// `p <= epsilon` is benign, anything above is harmful.
pub fn classify(p_bar: f64, cfg: DecisionConfig) -> Label {
    if p_bar <= cfg.epsilon {
        Label::Benign
    } else {
        Label::Harmful
    }
}

pub fn normalize_weights(w: &WeightMatrix) -> Result<WeightMatrix, MatrixError> {
    let total = w.total();
    if total <= 0.0 {
        return Err(MatrixError::AllZeroWeights);
    }
    Ok(WeightMatrix {
        rows: w.rows,
        cols: w.cols,
        values: w.values.iter().map(|v| v / total).collect(),
    })
}

/// `sum_{m,n} w_{m,n} p_{m,n}`, i.e. `tr(W^T P)`. `w` must be normalized;
/// the residual rounding of its total is divided out.
pub fn aggregate_weighted(p: &PredictionMatrix, w: &WeightMatrix) -> Result<f64, MatrixError> {
    if p.shape() != w.shape() {
        return Err(MatrixError::ShapeMismatch {
            left_rows: p.rows,
            left_cols: p.cols,
            right_rows: w.rows,
            right_cols: w.cols,
        });
    }
    let s: f64 = p.values.iter().zip(&w.values).map(|(a, b)| a * b).sum();
    Ok((s / w.total()).clamp(0.0, 1.0))
}

/// Per-column and per-row means and population variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub col_mean: Vec<f64>,
    pub col_var: Vec<f64>,
    pub row_mean: Vec<f64>,
    pub row_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStats {
    pub moments: Moments,
    /// Brier score of each column against the label, `e_n`.
    pub col_brier: Vec<f64>,
    /// Brier score of each row against the label, `e_m`.
    pub row_brier: Vec<f64>,
}

fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (count, sum) = xs.clone().fold((0usize, 0.0), |(c, s), x| (c + 1, s + x));
    let n = count as f64;
    let mean = sum / n;
    // corrected two-pass: removes the rounding error of the first pass
    let (sq, dev) = xs.fold((0.0, 0.0), |(sq, dev), x| (sq + (x - mean) * (x - mean), dev + (x - mean)));
    ((mean + dev / n), (sq - dev * dev / n).max(0.0) / n)
}

pub fn moments(p: &PredictionMatrix) -> Moments {
    let (col_mean, col_var) = (0..p.cols).map(|n| mean_var(p.column(n))).unzip();
    let (row_mean, row_var) = (0..p.rows)
        .map(|m| mean_var(p.row(m).iter().copied()))
        .unzip();
    Moments { col_mean, col_var, row_mean, row_var }
}

pub fn matrix_stats(p: &PredictionMatrix, y: Label) -> MatrixStats {
    let y = y.as_f64();
    let col_brier = (0..p.cols)
        .map(|n| p.column(n).map(|v| (v - y) * (v - y)).sum::<f64>() / p.rows as f64)
        .collect();
    let row_brier = (0..p.rows)
        .map(|m| p.row(m).iter().map(|v| (v - y) * (v - y)).sum::<f64>() / p.cols as f64)
        .collect();
    MatrixStats { moments: moments(p), col_brier, row_brier }
}

/// Row sums (per-detector weight) and column sums (per-sample weight).
pub fn marginals(w: &WeightMatrix) -> (Vec<f64>, Vec<f64>) {
    let rows = w.values.chunks(w.cols).map(|r| r.iter().sum()).collect();
    let cols = (0..w.cols)
        .map(|n| (0..w.rows).map(|m| w.get(m, n)).sum())
        .collect();
    (rows, cols)
}
