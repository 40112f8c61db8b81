//! Dense feed-forward networks over a flat parameter vector.
//!
//! Parameters live in one contiguous [`ParamVector`] whose layout is fixed:
//! for every layer in order, the weight matrix `[fan_in x fan_out]` in
//! row-major order (row = input unit) followed by the bias vector of length
//! `fan_out`. Direction vectors, checkpoints and merges all rely on this order.
//!
//! Hidden layers apply the configured activation; the output layer is a plain
//! affine map. For classification the softmax is folded into the loss.

use std::ops::{Deref, DerefMut, Range};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a` and input `z`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

impl LossKind {
    pub fn code(self) -> u8 {
        match self {
            LossKind::Mse => 0,
            LossKind::SoftmaxCrossEntropy => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LossKind::Mse),
            1 => Some(LossKind::SoftmaxCrossEntropy),
            _ => None,
        }
    }
}

/// Architecture of a dense network plus the seed of its initialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Input dimension first, output dimension last.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub loss_kind: LossKind,
    pub init_seed: u64,
}

/// Where one layer's weights and bias sit inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

impl ModelSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, loss_kind: LossKind) -> Self {
        Self {
            layer_widths,
            activation,
            loss_kind,
            init_seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(format!(
                "layer_widths needs at least 2 entries, got {}",
                self.layer_widths.len()
            )));
        }
        if let Some(pos) = self.layer_widths.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("layer width {pos} is zero")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weights = offset..offset + fan_in * fan_out;
                let bias = weights.end..weights.end + fan_out;
                offset = bias.end;
                LayerLayout {
                    fan_in,
                    fan_out,
                    weights,
                    bias,
                }
            })
            .collect()
    }
}

macro_rules! flat_vector {
    ($name:ident) => {
        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn norm(&self) -> f64 {
                self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(values: Vec<f64>) -> Self {
                Self(values)
            }
        }
    };
}

/// All trainable weights of a model in canonical order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);
flat_vector!(ParamVector);

/// A gradient with respect to a [`ParamVector`], same layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradient(Vec<f64>);
flat_vector!(Gradient);

impl ParamVector {
    /// `self + scale * direction`, element-wise.
    pub fn offset(&self, direction: &[f64], scale: f64) -> ParamVector {
        ParamVector(
            self.0
                .iter()
                .zip(direction)
                .map(|(p, d)| p + scale * d)
                .collect(),
        )
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("matrix data length", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::dim("matrix row length", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Paired inputs and targets. Classification targets are one-hot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl Batch {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::dim("batch target rows", inputs.rows(), targets.rows()));
        }
        if inputs.rows() == 0 {
            return Err(Error::Config("batch has no samples".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Batch {
        Batch {
            inputs: self.inputs.select_rows(indices),
            targets: self.targets.select_rows(indices),
        }
    }

    /// Index of the largest target entry per row (lowest index on ties).
    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| argmax(self.targets.row(i))).collect()
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.inputs.cols() != spec.input_dim() {
            return Err(Error::dim("batch input dim", spec.input_dim(), self.inputs.cols()));
        }
        if self.targets.cols() != spec.output_dim() {
            return Err(Error::dim(
                "batch target dim",
                spec.output_dim(),
                self.targets.cols(),
            ));
        }
        Ok(())
    }
}

/// Index of the maximum, breaking ties toward the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Xavier-uniform weights, zero biases, driven entirely by `spec.init_seed`.
pub fn init_model(spec: &ModelSpec) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
    let mut params = vec![0.0; spec.param_count()];
    for layer in spec.layers() {
        let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
        for w in &mut params[layer.weights] {
            *w = rng.random_range(-limit..=limit);
        }
    }
    Ok(ParamVector(params))
}

fn check_params(params: &ParamVector, spec: &ModelSpec) -> Result<()> {
    spec.validate()?;
    if params.len() != spec.param_count() {
        return Err(Error::dim("parameter count", spec.param_count(), params.len()));
    }
    Ok(())
}

/// `out = input * W + b` for every row of `input`.
fn affine(input: &Matrix, params: &[f64], layer: &LayerLayout) -> Matrix {
    let w = &params[layer.weights.clone()];
    let b = &params[layer.bias.clone()];
    let mut out = Matrix::zeros(input.rows(), layer.fan_out);
    for s in 0..input.rows() {
        let x = input.row(s);
        let z = out.row_mut(s);
        z.copy_from_slice(b);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let w_row = &w[i * layer.fan_out..(i + 1) * layer.fan_out];
            for (zj, &wij) in z.iter_mut().zip(w_row) {
                *zj += xi * wij;
            }
        }
    }
    out
}

/// Per-layer pre-activations and activations kept for the backward pass.
struct Tape {
    /// `pre[l]` is the affine output of layer `l`.
    pre: Vec<Matrix>,
    /// `post[l]` is the input of layer `l` (`post[0]` is the batch input).
    post: Vec<Matrix>,
}

fn run_forward(params: &ParamVector, spec: &ModelSpec, inputs: &Matrix, keep: bool) -> (Matrix, Option<Tape>) {
    let layers = spec.layers();
    let last = layers.len() - 1;
    let mut tape = keep.then(|| Tape {
        pre: Vec::with_capacity(layers.len()),
        post: vec![inputs.clone()],
    });
    let mut current = inputs.clone();
    for (l, layer) in layers.iter().enumerate() {
        let z = affine(&current, params, layer);
        if l == last {
            if let Some(t) = tape.as_mut() {
                t.pre.push(z.clone());
            }
            current = z;
        } else {
            let mut a = z.clone();
            for v in &mut a.data {
                *v = spec.activation.apply(*v);
            }
            if let Some(t) = tape.as_mut() {
                t.pre.push(z);
                t.post.push(a.clone());
            }
            current = a;
        }
    }
    (current, tape)
}

/// Predictions `[n_samples x output_dim]`; logits for classification.
pub fn forward(params: &ParamVector, spec: &ModelSpec, batch: &Batch) -> Result<Matrix> {
    check_params(params, spec)?;
    if batch.inputs.cols() != spec.input_dim() {
        return Err(Error::dim("batch input dim", spec.input_dim(), batch.inputs.cols()));
    }
    let (out, _) = run_forward(params, spec, &batch.inputs, false);
    if !out.data.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite network output".into()));
    }
    Ok(out)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Mean squared error, or mean softmax cross-entropy in log-sum-exp form.
pub fn loss(predictions: &Matrix, targets: &Matrix, kind: LossKind) -> Result<f64> {
    if predictions.rows() != targets.rows() {
        return Err(Error::dim("target rows", predictions.rows(), targets.rows()));
    }
    if predictions.cols() != targets.cols() {
        return Err(Error::dim("target cols", predictions.cols(), targets.cols()));
    }
    if predictions.data.iter().chain(&targets.data).any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in loss input".into()));
    }
    let n = predictions.rows() as f64;
    let value = match kind {
        LossKind::Mse => {
            let sum: f64 = predictions
                .data
                .iter()
                .zip(&targets.data)
                .map(|(p, t)| (p - t) * (p - t))
                .sum();
            sum / (n * predictions.cols() as f64)
        }
        LossKind::SoftmaxCrossEntropy => {
            let mut sum = 0.0;
            for s in 0..predictions.rows() {
                let z = predictions.row(s);
                let lse = log_sum_exp(z);
                for (zk, tk) in z.iter().zip(targets.row(s)) {
                    if *tk != 0.0 {
                        sum += tk * (lse - zk);
                    }
                }
            }
            sum / n
        }
    };
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {value}")));
    }
    Ok(value)
}

/// Forward pass followed by the loss.
pub fn evaluate_loss(params: &ParamVector, spec: &ModelSpec, batch: &Batch) -> Result<f64> {
    batch.check(spec)?;
    let pred = forward(params, spec, batch)?;
    loss(&pred, &batch.targets, spec.loss_kind)
}

/// Loss and its exact gradient with respect to every parameter.
pub fn backward(params: &ParamVector, spec: &ModelSpec, batch: &Batch) -> Result<(f64, Gradient)> {
    check_params(params, spec)?;
    batch.check(spec)?;
    let (out, tape) = run_forward(params, spec, &batch.inputs, true);
    let tape = tape.expect("tape requested");
    if !out.data.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite network output".into()));
    }
    let value = loss(&out, &batch.targets, spec.loss_kind)?;

    let n = out.rows() as f64;
    let mut delta = out.clone();
    match spec.loss_kind {
        LossKind::Mse => {
            let scale = 2.0 / (n * out.cols() as f64);
            for (d, t) in delta.data.iter_mut().zip(&batch.targets.data) {
                *d = scale * (*d - t);
            }
        }
        LossKind::SoftmaxCrossEntropy => {
            for s in 0..out.rows() {
                let lse = log_sum_exp(out.row(s));
                let t = batch.targets.row(s);
                let t_sum: f64 = t.iter().sum();
                for (d, tk) in delta.row_mut(s).iter_mut().zip(t) {
                    *d = (t_sum * (*d - lse).exp() - tk) / n;
                }
            }
        }
    }

    let layers = spec.layers();
    let mut grad = vec![0.0; params.len()];
    for (l, layer) in layers.iter().enumerate().rev() {
        let input = &tape.post[l];
        let gw = &mut grad[layer.weights.clone()];
        for s in 0..input.rows() {
            let x = input.row(s);
            let d = delta.row(s);
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let g_row = &mut gw[i * layer.fan_out..(i + 1) * layer.fan_out];
                for (g, &dj) in g_row.iter_mut().zip(d) {
                    *g += xi * dj;
                }
            }
        }
        let gb = &mut grad[layer.bias.clone()];
        for s in 0..delta.rows() {
            for (g, &dj) in gb.iter_mut().zip(delta.row(s)) {
                *g += dj;
            }
        }
        if l == 0 {
            break;
        }
        let w = &params[layer.weights.clone()];
        let z_prev = &tape.pre[l - 1];
        let a_prev = &tape.post[l];
        let mut next = Matrix::zeros(delta.rows(), layer.fan_in);
        for s in 0..delta.rows() {
            let d = delta.row(s);
            let out_row = next.row_mut(s);
            for (i, o) in out_row.iter_mut().enumerate() {
                let w_row = &w[i * layer.fan_out..(i + 1) * layer.fan_out];
                let back: f64 = w_row.iter().zip(d).map(|(w, d)| w * d).sum();
                *o = back * spec.activation.derivative(z_prev.get(s, i), a_prev.get(s, i));
            }
        }
        delta = next;
    }

    let grad = Gradient(grad);
    if !grad.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok((value, grad))
}

/// Central-difference gradient, one coordinate at a time. Test oracle only.
pub fn finite_diff_grad(params: &ParamVector, spec: &ModelSpec, batch: &Batch, h: f64) -> Result<Gradient> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    check_params(params, spec)?;
    let mut probe = params.clone();
    let mut grad = vec![0.0; params.len()];
    for (i, g) in grad.iter_mut().enumerate() {
        let original = probe[i];
        probe[i] = original + h;
        let up = evaluate_loss(&probe, spec, batch)?;
        probe[i] = original - h;
        let down = evaluate_loss(&probe, spec, batch)?;
        probe[i] = original;
        *g = (up - down) / (2.0 * h);
    }
    Ok(Gradient(grad))
}

/// One layer's parameters unpacked from the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `[fan_in x fan_out]`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

pub fn unflatten(params: &ParamVector, spec: &ModelSpec) -> Result<Vec<LayerParams>> {
    check_params(params, spec)?;
    spec.layers()
        .into_iter()
        .map(|layer| {
            Ok(LayerParams {
                weights: Matrix::from_vec(
                    layer.fan_in,
                    layer.fan_out,
                    params[layer.weights].to_vec(),
                )?,
                bias: params[layer.bias].to_vec(),
            })
        })
        .collect()
}

pub fn flatten(layers: &[LayerParams]) -> ParamVector {
    let mut out = Vec::new();
    for layer in layers {
        out.extend_from_slice(layer.weights.as_slice());
        out.extend_from_slice(&layer.bias);
    }
    ParamVector(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_1x1(w: f64, b: f64) -> (ModelSpec, ParamVector) {
        let spec = ModelSpec::new(vec![1, 1], Activation::Tanh, LossKind::Mse);
        (spec, ParamVector::new(vec![w, b]))
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = ModelSpec::new(vec![4, 8, 3], Activation::Relu, LossKind::SoftmaxCrossEntropy).with_seed(42);
        let a = init_model(&spec).unwrap();
        let b = init_model(&spec).unwrap();
        assert_eq!(a.len(), spec.param_count());
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        for layer in spec.layers() {
            assert!(a[layer.bias].iter().all(|&v| v == 0.0));
            let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            assert!(a[layer.weights].iter().all(|v| v.abs() <= limit));
        }
    }

    #[test]
    fn param_count_follows_layout() {
        let spec = ModelSpec::new(vec![2, 3, 1], Activation::Tanh, LossKind::Mse);
        assert_eq!(spec.param_count(), 13);
        let layers = spec.layers();
        assert_eq!(layers[0].weights, 0..6);
        assert_eq!(layers[0].bias, 6..9);
        assert_eq!(layers[1].weights, 9..12);
        assert_eq!(layers[1].bias, 12..13);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let short = ModelSpec::new(vec![3], Activation::Tanh, LossKind::Mse);
        assert!(matches!(init_model(&short), Err(Error::Config(_))));
        let zero = ModelSpec::new(vec![3, 0, 2], Activation::Tanh, LossKind::Mse);
        assert!(matches!(init_model(&zero), Err(Error::Config(_))));
    }

    #[test]
    fn zero_params_predict_zero() {
        let spec = ModelSpec::new(vec![3, 5, 2], Activation::Tanh, LossKind::Mse);
        let params = ParamVector::zeros(spec.param_count());
        let batch = Batch::new(
            Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![3.0, 3.0, 3.0]]).unwrap(),
            Matrix::zeros(2, 2),
        )
        .unwrap();
        let out = forward(&params, &spec, &batch).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_affine_by_hand() {
        let (spec, params) = linear_1x1(2.0, 1.0);
        let batch = Batch::new(Matrix::from_rows(&[vec![3.0]]).unwrap(), Matrix::zeros(1, 1)).unwrap();
        let out = forward(&params, &spec, &batch).unwrap();
        assert_eq!(out.as_slice(), &[7.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let (spec, params) = linear_1x1(2.0, 1.0);
        let batch = Batch::new(Matrix::zeros(1, 2), Matrix::zeros(1, 1)).unwrap();
        assert!(matches!(forward(&params, &spec, &batch), Err(Error::Dimension { .. })));
        let short = ParamVector::new(vec![1.0]);
        let ok = Batch::new(Matrix::zeros(1, 1), Matrix::zeros(1, 1)).unwrap();
        assert!(matches!(forward(&short, &spec, &ok), Err(Error::Dimension { .. })));
    }

    #[test]
    fn loss_closed_forms() {
        let p = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let t = Matrix::zeros(1, 2);
        assert_eq!(loss(&p, &t, LossKind::Mse).unwrap(), 2.5);
        assert_eq!(loss(&p, &p, LossKind::Mse).unwrap(), 0.0);

        let k = 5;
        let logits = Matrix::from_rows(&[vec![0.7; k], vec![-3.0; k]]).unwrap();
        let mut onehot = Matrix::zeros(2, k);
        onehot.row_mut(0)[1] = 1.0;
        onehot.row_mut(1)[4] = 1.0;
        let ce = loss(&logits, &onehot, LossKind::SoftmaxCrossEntropy).unwrap();
        assert!((ce - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_is_finite_for_large_logits() {
        let logits = Matrix::from_rows(&[vec![1e3, -1e3, 0.0], vec![-1e3, -1e3, 1e3]]).unwrap();
        let mut onehot = Matrix::zeros(2, 3);
        onehot.row_mut(0)[1] = 1.0;
        onehot.row_mut(1)[2] = 1.0;
        let ce = loss(&logits, &onehot, LossKind::SoftmaxCrossEntropy).unwrap();
        assert!(ce.is_finite());
        assert!((ce - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn nan_loss_input_is_numeric_error() {
        let p = Matrix::from_rows(&[vec![f64::NAN]]).unwrap();
        let t = Matrix::zeros(1, 1);
        assert!(matches!(loss(&p, &t, LossKind::Mse), Err(Error::Numeric(_))));
    }

    #[test]
    fn hand_derived_linear_gradient() {
        // y = w*x with x=1, t=0, w=3: loss 9, dL/dw = 6, dL/db = 6.
        let (spec, params) = linear_1x1(3.0, 0.0);
        let batch = Batch::new(Matrix::from_rows(&[vec![1.0]]).unwrap(), Matrix::zeros(1, 1)).unwrap();
        let (l, g) = backward(&params, &spec, &batch).unwrap();
        assert_eq!(l, 9.0);
        assert_eq!(&g[..], &[6.0, 6.0]);
    }

    #[test]
    fn stationary_point_of_quadratic_fit() {
        // Fit y = w*x + b to points on y = 2x + 1: the exact solution has zero gradient.
        let (spec, params) = linear_1x1(2.0, 1.0);
        let xs = [-1.0, 0.0, 2.0];
        let batch = Batch::new(
            Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap(),
            Matrix::from_rows(&xs.iter().map(|&x| vec![2.0 * x + 1.0]).collect::<Vec<_>>()).unwrap(),
        )
        .unwrap();
        let (l, g) = backward(&params, &spec, &batch).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
        let fd = finite_diff_grad(&params, &spec, &batch, 1e-4).unwrap();
        assert!(fd.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn central_difference_exact_on_quadratic() {
        let (spec, params) = linear_1x1(0.3, -1.2);
        let batch = Batch::new(
            Matrix::from_rows(&[vec![1.5], vec![-0.5]]).unwrap(),
            Matrix::from_rows(&[vec![2.0], vec![0.25]]).unwrap(),
        )
        .unwrap();
        let (_, g) = backward(&params, &spec, &batch).unwrap();
        let fd = finite_diff_grad(&params, &spec, &batch, 1e-3).unwrap();
        for (a, b) in g.iter().zip(fd.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn finite_diff_rejects_bad_step() {
        let (spec, params) = linear_1x1(1.0, 0.0);
        let batch = Batch::new(Matrix::zeros(1, 1), Matrix::zeros(1, 1)).unwrap();
        assert!(finite_diff_grad(&params, &spec, &batch, 0.0).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn unflatten_round_trip() {
        let spec = ModelSpec::new(vec![3, 4, 2], Activation::Tanh, LossKind::Mse).with_seed(9);
        let params = init_model(&spec).unwrap();
        let layers = unflatten(&params, &spec).unwrap();
        assert_eq!(layers[0].weights.rows(), 3);
        assert_eq!(layers[0].weights.cols(), 4);
        assert_eq!(flatten(&layers), params);
    }
}
