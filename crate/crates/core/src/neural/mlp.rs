use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NeuralError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `max(x, 0)`; the derivative at exactly 0 is taken to be 0.
    Relu,
    Identity,
}

/// Fully connected layer `y = act(x · W + b)` with `W` stored `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
            activation,
        }
    }

    /// Uniform initialization, He-scaled for ReLU layers and LeCun-scaled
    /// for linear ones. Biases start at zero.
    pub fn random(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let gain = match activation {
            Activation::Relu => 6.0,
            Activation::Identity => 3.0,
        };
        let limit = (gain / input as f64).sqrt();
        let weight = Array2::from_shape_fn((input, output), |_| rng.random_range(-limit..limit));
        Self {
            weight,
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Intermediates recorded by [`Mlp::forward_traced`]: the input of every
/// layer and the final output.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl MlpTrace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    /// Post-activation values of layer `l`.
    pub(crate) fn activation(&self, l: usize) -> &Array2<f64> {
        if l + 1 < self.inputs.len() {
            &self.inputs[l + 1]
        } else {
            &self.output
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weight: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weight.len());
        for (w, b) in self.weight.iter().zip(&self.bias) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::InvalidConfig(
                "an MLP needs at least one layer".into(),
            ));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(NeuralError::DimensionMismatch {
                    what: format!("layer {} input", l + 1),
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
        }
        for (l, d) in layers.iter().enumerate() {
            if d.bias.len() != d.output_dim() {
                return Err(NeuralError::DimensionMismatch {
                    what: format!("layer {l} bias"),
                    expected: d.output_dim(),
                    got: d.bias.len(),
                });
            }
            if d.weight.iter().chain(d.bias.iter()).any(|v| !v.is_finite()) {
                return Err(NeuralError::NonFiniteParameter(format!("layer {l}")));
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialized MLP over `sizes` (input, hidden..., output).
    /// Every layer uses `hidden` except the last, which uses `last`.
    pub fn random(
        sizes: &[usize],
        hidden: Activation,
        last: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                Dense::random(
                    sizes[l],
                    sizes[l + 1],
                    if l + 1 == n { last } else { hidden },
                    rng,
                )
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Dense::output_dim));
        s
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|d| d.weight.len() + d.bias.len())
            .sum()
    }

    fn check_input(&self, cols: usize) -> Result<(), NeuralError> {
        if cols != self.input_dim() {
            return Err(NeuralError::DimensionMismatch {
                what: "MLP input".into(),
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    fn apply(layer: &Dense, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&layer.weight);
        y += &layer.bias;
        if layer.activation == Activation::Relu {
            y.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
        }
        y
    }

    /// Row-wise forward pass.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(x.ncols())?;
        let mut h = Self::apply(&self.layers[0], &x);
        for layer in &self.layers[1..] {
            h = Self::apply(layer, &h.view());
        }
        Ok(h)
    }

    pub fn forward_traced(&self, x: Array2<f64>) -> Result<MlpTrace, NeuralError> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for layer in &self.layers {
            let next = Self::apply(layer, &h.view());
            inputs.push(h);
            h = next;
        }
        Ok(MlpTrace { inputs, output: h })
    }

    fn check_trace(&self, trace: &MlpTrace, upstream: &Array2<f64>) -> Result<(), NeuralError> {
        if trace.inputs.len() != self.layers.len() || upstream.dim() != trace.output.dim() {
            return Err(NeuralError::DimensionMismatch {
                what: "upstream gradient vs recorded forward pass".into(),
                expected: trace.output.len(),
                got: upstream.len(),
            });
        }
        Ok(())
    }

    /// Reverse pass: parameter gradients, plus the gradient with respect to
    /// the input rows when `want_input` is set.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        upstream: Array2<f64>,
        want_input: bool,
    ) -> Result<(MlpGrads, Option<Array2<f64>>), NeuralError> {
        self.check_trace(trace, &upstream)?;
        let n = self.layers.len();
        let mut weight = Vec::with_capacity(n);
        let mut bias = Vec::with_capacity(n);
        let mut g = upstream;
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if layer.activation == Activation::Relu {
                g.zip_mut_with(trace.activation(l), |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            weight.push(trace.inputs[l].t().dot(&g));
            bias.push(g.sum_axis(Axis(0)));
            if l > 0 || want_input {
                g = g.dot(&layer.weight.t());
            }
        }
        weight.reverse();
        bias.reverse();
        Ok((MlpGrads { weight, bias }, want_input.then_some(g)))
    }

    /// Gradient with respect to the input rows only.
    pub fn backward_input(
        &self,
        trace: &MlpTrace,
        upstream: Array2<f64>,
    ) -> Result<Array2<f64>, NeuralError> {
        self.check_trace(trace, &upstream)?;
        let mut g = upstream;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.activation == Activation::Relu {
                g.zip_mut_with(trace.activation(l), |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            g = g.dot(&layer.weight.t());
        }
        Ok(g)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weight: self
                .layers
                .iter()
                .map(|d| Array2::zeros(d.weight.dim()))
                .collect(),
            bias: self
                .layers
                .iter()
                .map(|d| Array1::zeros(d.bias.len()))
                .collect(),
        }
    }

    /// Mutable parameter slices in `[w0, b0, w1, b1, ...]` order.
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for d in &mut self.layers {
            out.push(d.weight.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn block_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|l| {
                [
                    format!("{prefix}.layer{l}.weight"),
                    format!("{prefix}.layer{l}.bias"),
                ]
            })
            .collect()
    }

    /// True if any pre-activation of a ReLU layer in the trace is within
    /// `margin` of the kink at zero. Used to skip finite-difference checks at
    /// non-smooth points.
    pub fn near_kink(&self, trace: &MlpTrace, margin: f64) -> bool {
        self.layers.iter().enumerate().any(|(l, layer)| {
            if layer.activation != Activation::Relu {
                return false;
            }
            let pre = trace.inputs[l].dot(&layer.weight) + &layer.bias;
            pre.iter().any(|v| v.abs() < margin)
        })
    }
}
