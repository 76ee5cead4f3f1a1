//! The 784-200-200-10 multilayer perceptron: hand-written forward and
//! backward passes, the momentum optimizer step, and the parameter-vector
//! algebra used by synchronization and consensus.
//!
//! Parameters live in one flat `f64` buffer; matrix views are taken over
//! sub-ranges so the heavy lifting goes through BLAS while vector algebra
//! (norms, linear combinations, optimizer updates) stays simple slice code.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use crate::dataset::Dataset;
use crate::{Error, Result};

pub const INPUT_DIM: usize = 784;
pub const HIDDEN_DIM: usize = 200;
pub const NUM_CLASSES: usize = 10;

const L1_W: usize = INPUT_DIM * HIDDEN_DIM;
const L1_B: usize = HIDDEN_DIM;
const L2_W: usize = HIDDEN_DIM * HIDDEN_DIM;
const L2_B: usize = HIDDEN_DIM;
const OUT_W: usize = HIDDEN_DIM * NUM_CLASSES;
const OUT_B: usize = NUM_CLASSES;

/// Total number of scalar parameters (784*200 + 200 + 200*200 + 200 + 200*10 + 10).
pub const PARAM_COUNT: usize = L1_W + L1_B + L2_W + L2_B + OUT_W + OUT_B;

const L1_W_OFF: usize = 0;
const L1_B_OFF: usize = L1_W_OFF + L1_W;
const L2_W_OFF: usize = L1_B_OFF + L1_B;
const L2_B_OFF: usize = L2_W_OFF + L2_W;
const OUT_W_OFF: usize = L2_B_OFF + L2_B;
const OUT_B_OFF: usize = OUT_W_OFF + OUT_W;

/// Full weight/bias set of one device's network, stored flat in layer order
/// (layer1 weights row-major, layer1 bias, layer2 weights, layer2 bias,
/// output weights, output bias).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    data: Vec<f64>,
}

/// Same shape as [`ModelParams`]; produced by [`loss_and_grad`].
pub type GradientVector = ModelParams;

impl ModelParams {
    pub fn zeros() -> Self {
        ModelParams {
            data: vec![0.0; PARAM_COUNT],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        if data.len() != PARAM_COUNT {
            return Err(Error::Shape {
                op: "ModelParams::from_vec",
                expected: PARAM_COUNT.to_string(),
                got: data.len().to_string(),
            });
        }
        Ok(ModelParams { data })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn layer1_weights(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((INPUT_DIM, HIDDEN_DIM), &self.data[L1_W_OFF..L1_B_OFF]).unwrap()
    }

    pub fn layer1_bias(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[L1_B_OFF..L2_W_OFF])
    }

    pub fn layer2_weights(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((HIDDEN_DIM, HIDDEN_DIM), &self.data[L2_W_OFF..L2_B_OFF]).unwrap()
    }

    pub fn layer2_bias(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[L2_B_OFF..OUT_W_OFF])
    }

    pub fn output_weights(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((HIDDEN_DIM, NUM_CLASSES), &self.data[OUT_W_OFF..OUT_B_OFF]).unwrap()
    }

    pub fn output_bias(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[OUT_B_OFF..])
    }

    fn weight_view_mut(&mut self, off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((rows, cols), &mut self.data[off..off + rows * cols]).unwrap()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Bitwise equality (distinguishes -0.0 from 0.0, unlike `==`).
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.data
            .iter()
            .zip(&other.data)
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Momentum optimizer state; velocity starts at all-zeros.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub velocity: ModelParams,
}

impl OptimizerState {
    pub fn new() -> Self {
        OptimizerState {
            velocity: ModelParams::zeros(),
        }
    }
}

impl Default for OptimizerState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 10,
            learning_rate: 0.01,
            momentum: 0.5,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("batch_size must be a positive integer".to_string());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            problems.push(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

/// Draw fresh parameters: each layer's weights and biases are uniform on
/// [-1/sqrt(fan_in), +1/sqrt(fan_in)], where fan_in is the layer's input
/// width. Fill order is fixed (layer order, weights before bias) so a given
/// stream always produces the same parameters.
pub fn init_params<R: Rng>(rng: &mut R) -> ModelParams {
    let mut p = ModelParams::zeros();
    let layers = [
        (L1_W_OFF, L1_W + L1_B, INPUT_DIM),
        (L2_W_OFF, L2_W + L2_B, HIDDEN_DIM),
        (OUT_W_OFF, OUT_W + OUT_B, HIDDEN_DIM),
    ];
    for (off, len, fan_in) in layers {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in &mut p.data[off..off + len] {
            *v = rng.random_range(-bound..=bound);
        }
    }
    p
}

fn check_inputs(op: &'static str, inputs: &ArrayView2<'_, f64>) -> Result<()> {
    if inputs.ncols() != INPUT_DIM {
        return Err(Error::Shape {
            op,
            expected: format!("B x {INPUT_DIM}"),
            got: format!("{} x {}", inputs.nrows(), inputs.ncols()),
        });
    }
    Ok(())
}

fn affine(inputs: &ArrayView2<'_, f64>, weights: &ArrayView2<'_, f64>, bias: &ArrayView1<'_, f64>) -> Array2<f64> {
    let mut out = inputs.dot(weights);
    out += bias;
    out
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|x| if x > 0.0 { x } else { 0.0 });
}

/// Class logits for a batch: relu(relu(x W1 + b1) W2 + b2) W3 + b3.
pub fn forward(params: &ModelParams, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_inputs("forward", &inputs)?;
    let mut h1 = affine(&inputs, &params.layer1_weights(), &params.layer1_bias());
    relu_inplace(&mut h1);
    let mut h2 = affine(&h1.view(), &params.layer2_weights(), &params.layer2_bias());
    relu_inplace(&mut h2);
    Ok(affine(&h2.view(), &params.output_weights(), &params.output_bias()))
}

/// Mean softmax cross-entropy over the batch and the mean per-sample
/// gradient with respect to every parameter.
pub fn loss_and_grad(
    params: &ModelParams,
    inputs: ArrayView2<'_, f64>,
    labels: &[u8],
) -> Result<(f64, GradientVector)> {
    check_inputs("loss_and_grad", &inputs)?;
    let b = inputs.nrows();
    if b == 0 || labels.is_empty() {
        return Err(Error::EmptyInput { op: "loss_and_grad" });
    }
    if labels.len() != b {
        return Err(Error::Shape {
            op: "loss_and_grad",
            expected: format!("{b} labels"),
            got: labels.len().to_string(),
        });
    }

    let mut h1 = affine(&inputs, &params.layer1_weights(), &params.layer1_bias());
    relu_inplace(&mut h1);
    let mut h2 = affine(&h1.view(), &params.layer2_weights(), &params.layer2_bias());
    relu_inplace(&mut h2);
    let logits = affine(&h2.view(), &params.output_weights(), &params.output_bias());

    // Stable softmax + cross-entropy; dz3 = (softmax - onehot) / B.
    let mut dz3 = logits.clone();
    let mut loss = 0.0;
    for (i, mut row) in dz3.rows_mut().into_iter().enumerate() {
        let label = labels[i] as usize;
        if label >= NUM_CLASSES {
            return Err(Error::LabelOutOfRange {
                index: i,
                value: labels[i],
            });
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        loss += sum.ln() + max - logits[(i, label)];
        for v in row.iter_mut() {
            *v /= sum;
        }
        row[label] -= 1.0;
    }
    loss /= b as f64;
    dz3.mapv_inplace(|x| x / b as f64);

    let mut grad = GradientVector::zeros();

    // Output layer.
    general_mat_mul_into(&h2.t(), &dz3.view(), grad.weight_view_mut(OUT_W_OFF, HIDDEN_DIM, NUM_CLASSES));
    column_sums_into(&dz3.view(), &mut grad.data[OUT_B_OFF..OUT_B_OFF + OUT_B]);

    // Hidden layer 2.
    let mut dz2 = dz3.dot(&params.output_weights().t());
    relu_backward_inplace(&mut dz2, &h2);
    general_mat_mul_into(&h1.t(), &dz2.view(), grad.weight_view_mut(L2_W_OFF, HIDDEN_DIM, HIDDEN_DIM));
    column_sums_into(&dz2.view(), &mut grad.data[L2_B_OFF..L2_B_OFF + L2_B]);

    // Hidden layer 1.
    let mut dz1 = dz2.dot(&params.layer2_weights().t());
    relu_backward_inplace(&mut dz1, &h1);
    general_mat_mul_into(&inputs.t(), &dz1.view(), grad.weight_view_mut(L1_W_OFF, INPUT_DIM, HIDDEN_DIM));
    column_sums_into(&dz1.view(), &mut grad.data[L1_B_OFF..L1_B_OFF + L1_B]);

    Ok((loss, grad))
}

fn general_mat_mul_into(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>, mut out: ArrayViewMut2<'_, f64>) {
    ndarray::linalg::general_mat_mul(1.0, a, b, 0.0, &mut out);
}

fn column_sums_into(a: &ArrayView2<'_, f64>, out: &mut [f64]) {
    let sums = a.sum_axis(Axis(0));
    out.copy_from_slice(sums.as_slice().unwrap());
}

/// Zero the upstream gradient wherever the activation was clipped.
fn relu_backward_inplace(dz: &mut Array2<f64>, activated: &Array2<f64>) {
    ndarray::Zip::from(dz).and(activated).for_each(|d, &a| {
        if a <= 0.0 {
            *d = 0.0;
        }
    });
}

/// v <- mu*v + g; w <- w - eta*v. The velocity stores the running gradient
/// average and the learning rate is applied after the velocity update.
pub fn momentum_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    grad: &GradientVector,
    hp: &Hyperparams,
) {
    let mu = hp.momentum;
    let eta = hp.learning_rate;
    let w = params.data.as_mut_slice();
    let v = state.velocity.data.as_mut_slice();
    let g = grad.data.as_slice();
    for i in 0..PARAM_COUNT {
        v[i] = mu * v[i] + g[i];
        w[i] -= eta * v[i];
    }
}

/// 2-norm of the concatenation of all parameter tensors.
pub fn param_norm(params: &ModelParams) -> f64 {
    params.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Entrywise linear combination of parameter sets.
pub fn combine(terms: &[(f64, &ModelParams)]) -> Result<ModelParams> {
    if terms.is_empty() {
        return Err(Error::EmptyInput { op: "combine" });
    }
    let mut out = ModelParams::zeros();
    for (coeff, params) in terms {
        let o = out.data.as_mut_slice();
        let p = params.data.as_slice();
        for i in 0..PARAM_COUNT {
            o[i] += coeff * p[i];
        }
    }
    Ok(out)
}

/// Rows evaluated per chunk; fixed so parallel evaluation reduces in a
/// schedule-independent order.
const EVAL_CHUNK: usize = 2000;

/// Fraction of `labels` whose argmax logit matches; argmax ties break to the
/// lowest class index.
pub fn evaluate_accuracy(params: &ModelParams, inputs: ArrayView2<'_, f64>, labels: &[u8]) -> Result<f64> {
    check_inputs("evaluate_accuracy", &inputs)?;
    if inputs.nrows() == 0 {
        return Err(Error::EmptyInput {
            op: "evaluate_accuracy",
        });
    }
    let n = inputs.nrows();
    let correct: usize = chunk_ranges(n)
        .into_iter()
        .map(|(start, end)| {
            let logits = forward(params, inputs.slice(ndarray::s![start..end, ..]))?;
            let mut hits = 0usize;
            for (row, &label) in logits.rows().into_iter().zip(&labels[start..end]) {
                if argmax_lowest(row.as_slice().unwrap()) == label as usize {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(correct as f64 / n as f64)
}

/// Mean softmax cross-entropy of `params` over an input matrix (used for the
/// global objective at the average parameters).
pub fn mean_loss(params: &ModelParams, inputs: ArrayView2<'_, f64>, labels: &[u8]) -> Result<f64> {
    check_inputs("mean_loss", &inputs)?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::EmptyInput { op: "mean_loss" });
    }
    // Ordered per-chunk partial sums keep the reduction deterministic.
    let partials: Vec<f64> = chunk_ranges(n)
        .into_iter()
        .map(|(start, end)| {
            let logits = forward(params, inputs.slice(ndarray::s![start..end, ..]))?;
            let mut total = 0.0;
            for (row, &label) in logits.rows().into_iter().zip(&labels[start..end]) {
                let r = row.as_slice().unwrap();
                let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = r.iter().map(|v| (v - max).exp()).sum();
                total += sum.ln() + max - r[label as usize];
            }
            Ok(total)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(partials.iter().sum::<f64>() / n as f64)
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .step_by(EVAL_CHUNK)
        .map(|s| (s, (s + EVAL_CHUNK).min(n)))
        .collect()
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Convenience wrapper evaluating against a whole dataset with unit-range
/// pixels (tests and tooling; experiment code pre-materializes inputs).
pub fn evaluate_accuracy_on(params: &ModelParams, data: &Dataset) -> Result<f64> {
    evaluate_accuracy(params, data.images(), data.labels())
}
