//! Classifier families trained on frozen embeddings: a linear softmax probe
//! and a dense-skip MLP, with closed-form backward passes.
//!
//! Both are instances of [`Network`]: a stack of rectified affine layers where
//! every layer (and the head) reads the raw input concatenated with the
//! outputs of all earlier hidden layers. A linear probe is the zero-hidden-layer
//! case.

mod checkpoint;
mod params;
mod sampling;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use params::{BlockSpec, ParamSet};
pub use sampling::{predict_hard, sample_pseudo_labels};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::math::{kernels, mean_cross_entropy, mean_squared_error, softmax_in_place, Matrix, Targets};
use crate::rng::seeded;

/// Number of hidden layers in the dense-skip MLP.
pub const SKIP_MLP_DEPTH: usize = 3;
/// Hidden width used by the reference MLP configuration.
pub const DEFAULT_HIDDEN_WIDTH: usize = 1024;

/// Which classifier family to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    Linear,
    SkipMlp { hidden_width: usize },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Linear => "linear",
            ModelSpec::SkipMlp { .. } => "mlp",
        }
    }

    fn hidden(&self) -> Vec<usize> {
        match *self {
            ModelSpec::Linear => Vec::new(),
            ModelSpec::SkipMlp { hidden_width } => vec![hidden_width; SKIP_MLP_DEPTH],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// Class probabilities; trained with cross-entropy.
    Softmax,
    /// Raw outputs; trained with mean squared error.
    Identity,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `n x (d + sum of hidden widths)`: input followed by every hidden output.
    features: Vec<f64>,
    rows: usize,
    outputs: Matrix,
    tag: (u64, u64),
}

impl ForwardTrace {
    pub fn outputs(&self) -> &Matrix {
        &self.outputs
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    hidden: Vec<usize>,
    output_dim: usize,
    output: OutputKind,
    params: ParamSet,
}

impl Network {
    /// Zero-initialized network with the given hidden widths.
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, output: OutputKind) -> Self {
        assert!(input_dim > 0 && output_dim > 0, "network dimensions must be positive");
        let mut layout = Vec::new();
        let mut in_cols = input_dim;
        for (l, &w) in hidden.iter().enumerate() {
            layout.push((format!("hidden{l}.weight"), w, in_cols));
            layout.push((format!("hidden{l}.bias"), w, 1));
            in_cols += w;
        }
        layout.push(("head.weight".to_string(), output_dim, in_cols));
        layout.push(("head.bias".to_string(), output_dim, 1));
        Self {
            input_dim,
            hidden,
            output_dim,
            output,
            params: ParamSet::zeros(layout),
        }
    }

    pub fn linear_probe(input_dim: usize, classes: usize) -> Self {
        Self::new(input_dim, Vec::new(), classes, OutputKind::Softmax)
    }

    pub fn skip_mlp(input_dim: usize, classes: usize, hidden_width: usize) -> Self {
        Self::new(input_dim, vec![hidden_width; SKIP_MLP_DEPTH], classes, OutputKind::Softmax)
    }

    /// Dense-skip body with a linear regression head of width `output_dim`.
    pub fn skip_regressor(input_dim: usize, output_dim: usize, hidden_width: usize) -> Self {
        Self::new(input_dim, vec![hidden_width; SKIP_MLP_DEPTH], output_dim, OutputKind::Identity)
    }

    /// Classifier of the given family, initialized from `seed`.
    pub fn classifier(spec: ModelSpec, input_dim: usize, classes: usize, seed: u64) -> Self {
        let mut net = Self::new(input_dim, spec.hidden(), classes, OutputKind::Softmax);
        net.init_uniform(&mut seeded(seed));
        net
    }

    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// fan-in `f` is drawn from `U(-sqrt(1/f), sqrt(1/f))`.
    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        let blocks = self.params.blocks().to_vec();
        let values = self.params.values_mut();
        for pair in blocks.chunks(2) {
            let fan_in = pair[0].cols;
            let bound = (1.0 / fan_in as f64).sqrt();
            for block in pair {
                for v in &mut values[block.range()] {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn output_kind(&self) -> OutputKind {
        self.output
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden
    }

    /// Input width of each hidden layer followed by the head's input width.
    pub fn layer_input_widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 1);
        let mut acc = self.input_dim;
        widths.push(acc);
        for &w in &self.hidden {
            acc += w;
            widths.push(acc);
        }
        widths
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn feature_width(&self) -> usize {
        self.input_dim + self.hidden.iter().sum::<usize>()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardTrace)> {
        if x.cols() != self.input_dim {
            return Err(dim_err(format!(
                "input has {} columns, model expects {}",
                x.cols(),
                self.input_dim
            )));
        }
        let n = x.rows();
        let stride = self.feature_width();
        let mut features = vec![0.0; n * stride];
        for (r, row) in x.iter_rows().enumerate() {
            features[r * stride..r * stride + self.input_dim].copy_from_slice(row);
        }
        let mut in_cols = self.input_dim;
        for (l, &w) in self.hidden.iter().enumerate() {
            kernels::affine_append(
                &mut features,
                stride,
                in_cols,
                self.params.block_at(2 * l),
                self.params.block_at(2 * l + 1),
                true,
            );
            in_cols += w;
        }
        let head = 2 * self.hidden.len();
        let mut out = Matrix::zeros(n, self.output_dim);
        kernels::affine(
            &features,
            stride,
            stride,
            self.params.block_at(head),
            self.params.block_at(head + 1),
            out.data_mut(),
        );
        if self.output == OutputKind::Softmax {
            for r in 0..n {
                softmax_in_place(out.row_mut(r));
            }
        }
        let trace = ForwardTrace {
            features,
            rows: n,
            outputs: out.clone(),
            tag: self.params.tag(),
        };
        Ok((out, trace))
    }

    /// Forward pass without keeping the trace.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x).map(|(out, _)| out)
    }

    /// Training loss of `outputs` against `targets`: mean cross-entropy for
    /// softmax networks, mean squared error for regression networks.
    pub fn loss(&self, outputs: &Matrix, targets: Targets<'_>) -> Result<f64> {
        match (self.output, targets) {
            (OutputKind::Softmax, t) => mean_cross_entropy(outputs, t),
            (OutputKind::Identity, Targets::Soft(t)) => mean_squared_error(outputs, t),
            (OutputKind::Identity, Targets::Hard(_)) => {
                Err(dim_err("regression network needs real-valued targets"))
            }
        }
    }

    /// `weight` times the gradient of the mean training loss with respect to
    /// every parameter, flattened in block order.
    ///
    /// Soft targets are treated as constants.
    pub fn backward(&self, trace: &ForwardTrace, targets: Targets<'_>, weight: f64) -> Result<Vec<f64>> {
        self.check_trace(trace)?;
        let n = trace.rows;
        if targets.len() != n {
            return Err(dim_err(format!("{} targets for a batch of {n}", targets.len())));
        }
        let k = self.output_dim;
        let mut d_out = trace.outputs.clone();
        match (self.output, targets) {
            (OutputKind::Softmax, Targets::Hard(y)) => {
                for (r, &label) in y.iter().enumerate() {
                    if label >= k {
                        return Err(dim_err(format!("label {label} out of range for {k} classes")));
                    }
                    d_out.row_mut(r)[label] -= 1.0;
                }
            }
            (_, Targets::Soft(t)) => {
                if t.cols() != k {
                    return Err(dim_err(format!("targets have {} columns, model has {k} outputs", t.cols())));
                }
                for (d, tv) in d_out.data_mut().iter_mut().zip(t.data()) {
                    *d -= tv;
                }
            }
            (OutputKind::Identity, Targets::Hard(_)) => {
                return Err(dim_err("regression network needs real-valued targets"));
            }
        }
        let scale = match self.output {
            OutputKind::Softmax => weight / n.max(1) as f64,
            OutputKind::Identity => 2.0 * weight / (n * k).max(1) as f64,
        };
        for d in d_out.data_mut() {
            *d *= scale;
        }
        self.backward_from_output_grad(trace, &d_out)
    }

    /// Parameter gradient given the gradient with respect to the head's
    /// pre-activation outputs (logits for softmax networks).
    pub fn backward_from_output_grad(&self, trace: &ForwardTrace, d_out: &Matrix) -> Result<Vec<f64>> {
        self.check_trace(trace)?;
        let n = trace.rows;
        if d_out.rows() != n || d_out.cols() != self.output_dim {
            return Err(dim_err("output gradient shape does not match the trace"));
        }
        let stride = self.feature_width();
        let d = self.input_dim;
        let features = &trace.features;
        let blocks = self.params.blocks();
        let mut grads = vec![0.0; self.params.len()];
        let mut d_features = vec![0.0; n * stride];

        let head = 2 * self.hidden.len();
        {
            let (gw, gb) = grad_pair(&mut grads, &blocks[head], &blocks[head + 1]);
            kernels::weight_grad(d_out.data(), self.output_dim, features, stride, stride, gw, gb);
            kernels::input_grad(
                d_out.data(),
                self.output_dim,
                self.params.block_at(head),
                stride,
                d,
                stride,
                &mut d_features,
                stride,
            );
        }

        let widths = self.layer_input_widths();
        for l in (0..self.hidden.len()).rev() {
            let in_cols = widths[l];
            let w = self.hidden[l];
            let mut dz = vec![0.0; n * w];
            for r in 0..n {
                let base = r * stride + in_cols;
                for o in 0..w {
                    if features[base + o] > 0.0 {
                        dz[r * w + o] = d_features[base + o];
                    }
                }
            }
            let (gw, gb) = grad_pair(&mut grads, &blocks[2 * l], &blocks[2 * l + 1]);
            kernels::weight_grad(&dz, w, features, stride, in_cols, gw, gb);
            kernels::input_grad(&dz, w, self.params.block_at(2 * l), in_cols, d, in_cols, &mut d_features, stride);
        }
        Ok(grads)
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        if trace.tag != self.params.tag() {
            return Err(Error::StaleTrace {
                trace: trace.tag,
                model: self.params.tag(),
            });
        }
        Ok(())
    }
}

fn grad_pair<'a>(grads: &'a mut [f64], w: &BlockSpec, b: &BlockSpec) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(w.offset + w.len(), b.offset);
    grads[w.offset..b.offset + b.len()].split_at_mut(w.len())
}
