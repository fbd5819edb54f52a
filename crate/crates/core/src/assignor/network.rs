//! Inference network mapping a prediction matrix to posterior means.
//!
//! Every probability is lifted to a `d`-vector (`p * u + b`). Each row is
//! encoded by one single-head self-attention block and each column by a
//! second block; both are mean-pooled, so the encoder has no notion of
//! position and is equivariant to row and column permutations. A two-layer
//! ReLU MLP maps `[z_m; z_n]` to the posterior mean of cell `(m, n)`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use super::AssignorError;
use crate::matrix::PredictionMatrix;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssignorConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for AssignorConfig {
    fn default() -> Self {
        Self { embed_dim: 16, hidden_dim: 32 }
    }
}

/// Single-head self-attention with an output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    pub value: Array2<f64>,
    pub output: Array2<f64>,
    pub output_bias: Array1<f64>,
}

impl AttentionBlock {
    fn zeros(d: usize) -> Self {
        Self {
            query: Array2::zeros((d, d)),
            key: Array2::zeros((d, d)),
            value: Array2::zeros((d, d)),
            output: Array2::zeros((d, d)),
            output_bias: Array1::zeros(d),
        }
    }

    fn scale(&self) -> f64 {
        1.0 / (self.query.ncols() as f64).sqrt()
    }

    fn forward(&self, x: Array2<f64>) -> (Array1<f64>, AttentionCache) {
        let q = x.dot(&self.query);
        let k = x.dot(&self.key);
        let v = x.dot(&self.value);
        let mut a = q.dot(&k.t()) * self.scale();
        for mut row in a.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |acc, &s| acc.max(s));
            row.mapv_inplace(|s| (s - max).exp());
            let total = row.sum();
            row /= total;
        }
        let h = a.dot(&v);
        let h_mean = h.mean_axis(Axis(0)).expect("non-empty sequence");
        let z = h_mean.dot(&self.output) + &self.output_bias;
        (z, AttentionCache { x, q, k, v, a, h_mean })
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, cache: &AttentionCache, dz: ArrayView1<f64>, grad: &mut AttentionBlock) -> Array2<f64> {
        let len = cache.x.nrows();
        let scale = self.scale();
        grad.output += &outer(cache.h_mean.view(), dz);
        grad.output_bias += &dz;
        // every position receives the same upstream gradient through the mean
        let dh_row = self.output.dot(&dz) / len as f64;
        let dh = Array2::from_shape_fn((len, dh_row.len()), |(_, j)| dh_row[j]);
        let da = dh.dot(&cache.v.t());
        let dv = cache.a.t().dot(&dh);
        let mut ds = &cache.a * &da;
        for (mut ds_row, a_row) in ds.rows_mut().into_iter().zip(cache.a.rows()) {
            let dot = ds_row.sum();
            ds_row.zip_mut_with(&a_row, |d, &a| *d -= a * dot);
        }
        let dq = ds.dot(&cache.k) * scale;
        let dk = ds.t().dot(&cache.q) * scale;
        grad.query += &cache.x.t().dot(&dq);
        grad.key += &cache.x.t().dot(&dk);
        grad.value += &cache.x.t().dot(&dv);
        dq.dot(&self.query.t()) + dk.dot(&self.key.t()) + dv.dot(&self.value.t())
    }
}

#[derive(Debug, Clone)]
struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    a: Array2<f64>,
    h_mean: Array1<f64>,
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Learnable parameters of the weight assignor. The same type doubles as a
/// gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignorParams {
    pub config: AssignorConfig,
    pub lift_scale: Array1<f64>,
    pub lift_bias: Array1<f64>,
    pub row_attention: AttentionBlock,
    pub col_attention: AttentionBlock,
    /// `h x 2d`; the first `d` columns read the row code, the rest the column code.
    pub hidden_weight: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub output_weight: Array1<f64>,
    /// Length-1 tensor holding the scalar output bias.
    pub output_bias: Array1<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    rows: usize,
    cols: usize,
    row_caches: Vec<AttentionCache>,
    col_caches: Vec<AttentionCache>,
    z_row: Array2<f64>,
    z_col: Array2<f64>,
    /// `rows*cols x h` hidden pre-activations, row-major over cells.
    hidden_pre: Array2<f64>,
}

impl AssignorParams {
    pub fn zeros(config: AssignorConfig) -> Self {
        let (d, h) = (config.embed_dim, config.hidden_dim);
        Self {
            config,
            lift_scale: Array1::zeros(d),
            lift_bias: Array1::zeros(d),
            row_attention: AttentionBlock::zeros(d),
            col_attention: AttentionBlock::zeros(d),
            hidden_weight: Array2::zeros((h, 2 * d)),
            hidden_bias: Array1::zeros(h),
            output_weight: Array1::zeros(h),
            output_bias: Array1::zeros(1),
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` weights, zero biases, and an output bias
    /// chosen so a flat 3x3 matrix of 0.5 maps to posterior means of 1.0.
    pub fn init(config: AssignorConfig, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let (d, h) = (config.embed_dim, config.hidden_dim);
        let mut fill = |shape: (usize, usize), fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
            Array2::from_shape_simple_fn(shape, || rng.sample(dist))
        };
        let lift_scale = fill((1, d), 1).remove_axis(Axis(0));
        let lift_bias = fill((1, d), 1).remove_axis(Axis(0));
        let mut block = || AttentionBlock {
            query: fill((d, d), d),
            key: fill((d, d), d),
            value: fill((d, d), d),
            output: fill((d, d), d),
            output_bias: Array1::zeros(d),
        };
        let row_attention = block();
        let col_attention = block();
        let hidden_weight = fill((h, 2 * d), 2 * d);
        let output_weight = fill((1, h), h).remove_axis(Axis(0));
        let mut params = Self {
            config,
            lift_scale,
            lift_bias,
            row_attention,
            col_attention,
            hidden_weight,
            hidden_bias: Array1::zeros(h),
            output_weight,
            output_bias: Array1::zeros(1),
        };
        let reference = PredictionMatrix::new(3, 3, vec![0.5; 9]).expect("valid reference");
        let (phi, _) = params.forward(&reference).expect("finite at init");
        let mean = phi.iter().sum::<f64>() / phi.len() as f64;
        params.output_bias[0] = 1.0 - mean;
        params
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, data)| data.len()).sum()
    }

    /// Named tensors in canonical order: `(name, shape, row-major data)`.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        fn t1(a: &Array1<f64>) -> (Vec<usize>, &[f64]) {
            (vec![a.len()], a.as_slice().expect("contiguous"))
        }
        fn t2(a: &Array2<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("contiguous"))
        }
        let entries: Vec<(&'static str, (Vec<usize>, &[f64]))> = vec![
            ("lift.scale", t1(&self.lift_scale)),
            ("lift.bias", t1(&self.lift_bias)),
            ("row_attention.query", t2(&self.row_attention.query)),
            ("row_attention.key", t2(&self.row_attention.key)),
            ("row_attention.value", t2(&self.row_attention.value)),
            ("row_attention.output", t2(&self.row_attention.output)),
            ("row_attention.output_bias", t1(&self.row_attention.output_bias)),
            ("col_attention.query", t2(&self.col_attention.query)),
            ("col_attention.key", t2(&self.col_attention.key)),
            ("col_attention.value", t2(&self.col_attention.value)),
            ("col_attention.output", t2(&self.col_attention.output)),
            ("col_attention.output_bias", t1(&self.col_attention.output_bias)),
            ("mlp.hidden_weight", t2(&self.hidden_weight)),
            ("mlp.hidden_bias", t1(&self.hidden_bias)),
            ("mlp.output_weight", t1(&self.output_weight)),
            ("mlp.output_bias", t1(&self.output_bias)),
        ];
        entries.into_iter().map(|(n, (s, d))| (n, s, d)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        fn m1(a: &mut Array1<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("contiguous")
        }
        fn m2(a: &mut Array2<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("contiguous")
        }
        vec![
            m1(&mut self.lift_scale),
            m1(&mut self.lift_bias),
            m2(&mut self.row_attention.query),
            m2(&mut self.row_attention.key),
            m2(&mut self.row_attention.value),
            m2(&mut self.row_attention.output),
            m1(&mut self.row_attention.output_bias),
            m2(&mut self.col_attention.query),
            m2(&mut self.col_attention.key),
            m2(&mut self.col_attention.value),
            m2(&mut self.col_attention.output),
            m1(&mut self.col_attention.output_bias),
            m2(&mut self.hidden_weight),
            m1(&mut self.hidden_bias),
            m1(&mut self.output_weight),
            m1(&mut self.output_bias),
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, _, d)| d.iter().copied()).collect()
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.parameter_count());
        let mut offset = 0;
        for t in self.tensors_mut() {
            let len = t.len();
            t.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
    }

    pub(crate) fn copy_tensor(&mut self, index: usize, data: &[f64]) -> bool {
        match self.tensors_mut().into_iter().nth(index) {
            Some(t) if t.len() == data.len() => {
                t.copy_from_slice(data);
                true
            }
            _ => false,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    /// Posterior means for every cell, row-major.
    pub fn forward(&self, p: &PredictionMatrix) -> Result<(Vec<f64>, ForwardCache), AssignorError> {
        let (rows, cols) = p.shape();
        let d = self.config.embed_dim;
        let lift = |v: f64| &self.lift_scale * v + &self.lift_bias;

        let mut row_caches = Vec::with_capacity(rows);
        let mut z_row = Array2::zeros((rows, d));
        for m in 0..rows {
            let mut x = Array2::zeros((cols, d));
            for n in 0..cols {
                x.row_mut(n).assign(&lift(p.get(m, n)));
            }
            let (z, cache) = self.row_attention.forward(x);
            z_row.row_mut(m).assign(&z);
            row_caches.push(cache);
        }
        let mut col_caches = Vec::with_capacity(cols);
        let mut z_col = Array2::zeros((cols, d));
        for n in 0..cols {
            let mut x = Array2::zeros((rows, d));
            for m in 0..rows {
                x.row_mut(m).assign(&lift(p.get(m, n)));
            }
            let (z, cache) = self.col_attention.forward(x);
            z_col.row_mut(n).assign(&z);
            col_caches.push(cache);
        }

        // W1 [z_m; z_n] = W1_row z_m + W1_col z_n, so project each code once
        let w_row = self.hidden_weight.slice(s![.., ..d]);
        let w_col = self.hidden_weight.slice(s![.., d..]);
        let proj_row = z_row.dot(&w_row.t());
        let proj_col = z_col.dot(&w_col.t()) + &self.hidden_bias;
        let h = self.config.hidden_dim;
        let mut hidden_pre = Array2::zeros((rows * cols, h));
        let mut phi = Vec::with_capacity(rows * cols);
        for m in 0..rows {
            for n in 0..cols {
                let mut pre = hidden_pre.row_mut(m * cols + n);
                pre.assign(&proj_row.row(m));
                pre += &proj_col.row(n);
                let out = pre
                    .iter()
                    .zip(&self.output_weight)
                    .map(|(&a, &w)| a.max(0.0) * w)
                    .sum::<f64>()
                    + self.output_bias[0];
                if !out.is_finite() {
                    return Err(AssignorError::NonFiniteActivation { row: m, col: n });
                }
                phi.push(out);
            }
        }
        Ok((phi, ForwardCache { rows, cols, row_caches, col_caches, z_row, z_col, hidden_pre }))
    }

    /// Gradient of a scalar loss with respect to every parameter, given
    /// `dL/dphi` for each cell (row-major).
    pub fn backward(&self, p: &PredictionMatrix, cache: &ForwardCache, dphi: &[f64]) -> AssignorParams {
        let (rows, cols) = (cache.rows, cache.cols);
        assert_eq!(dphi.len(), rows * cols);
        let d = self.config.embed_dim;
        let h = self.config.hidden_dim;
        let mut grad = AssignorParams::zeros(self.config);

        // MLP: sum hidden gradients per row and per column before touching W1
        let mut da_row_sum = Array2::<f64>::zeros((rows, h));
        let mut da_col_sum = Array2::<f64>::zeros((cols, h));
        for m in 0..rows {
            for n in 0..cols {
                let g = dphi[m * cols + n];
                let pre = cache.hidden_pre.row(m * cols + n);
                grad.output_bias[0] += g;
                for j in 0..h {
                    if pre[j] > 0.0 {
                        grad.output_weight[j] += g * pre[j];
                        let da = g * self.output_weight[j];
                        da_row_sum[[m, j]] += da;
                        da_col_sum[[n, j]] += da;
                    }
                }
            }
        }
        grad.hidden_bias = da_col_sum.sum_axis(Axis(0));
        grad.hidden_weight
            .slice_mut(s![.., ..d])
            .assign(&da_row_sum.t().dot(&cache.z_row));
        grad.hidden_weight
            .slice_mut(s![.., d..])
            .assign(&da_col_sum.t().dot(&cache.z_col));
        let dz_row = da_row_sum.dot(&self.hidden_weight.slice(s![.., ..d]));
        let dz_col = da_col_sum.dot(&self.hidden_weight.slice(s![.., d..]));

        // attention blocks, then the shared scalar lift
        let mut dlift = Array2::<f64>::zeros((rows * cols, d));
        for m in 0..rows {
            let dx = self
                .row_attention
                .backward(&cache.row_caches[m], dz_row.row(m), &mut grad.row_attention);
            for n in 0..cols {
                let mut r = dlift.row_mut(m * cols + n);
                r += &dx.row(n);
            }
        }
        for n in 0..cols {
            let dx = self
                .col_attention
                .backward(&cache.col_caches[n], dz_col.row(n), &mut grad.col_attention);
            for m in 0..rows {
                let mut r = dlift.row_mut(m * cols + n);
                r += &dx.row(m);
            }
        }
        accumulate_lift(p, dlift.view(), &mut grad);
        grad
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &AssignorParams, scale: f64) {
        let src = other.flatten();
        let mut offset = 0;
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v += scale * src[offset];
                offset += 1;
            }
        }
    }
}

fn accumulate_lift(p: &PredictionMatrix, dlift: ArrayView2<f64>, grad: &mut AssignorParams) {
    for (cell, &pv) in p.as_slice().iter().enumerate() {
        let row = dlift.row(cell);
        grad.lift_scale.scaled_add(pv, &row);
        grad.lift_bias += &row;
    }
}
