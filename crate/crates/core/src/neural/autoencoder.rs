use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp, MlpGrads, MlpTrace};
use super::NeuralError;
use crate::geometry::PointCloud3;

/// A point in the autoencoder's latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentCode(Vec<f64>);

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self, NeuralError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFiniteParameter("latent code".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `(1 − t)·self + t·other`.
    pub fn lerp(&self, other: &LatentCode, t: f64) -> LatentCode {
        LatentCode(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect(),
        )
    }
}

impl AsRef<[f64]> for LatentCode {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Layer widths of the autoencoder.
///
/// The encoder applies a shared per-point MLP (`3 → point_widths...`, ReLU
/// on every layer), takes the coordinate-wise max over points, then a head
/// MLP (`last point width → head_widths... → latent_dim`, no activation on
/// the final layer). The decoder maps `latent_dim → decoder_widths... →
/// 3·n_points` with ReLU between layers and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub latent_dim: usize,
    pub n_points: usize,
    pub point_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::desk(32, 256)
    }
}

impl Architecture {
    /// PointNet-sized network: five per-point layers up to 1024 features,
    /// a 512-wide head and a 256-512-1024-2048 decoder.
    pub fn reference(latent_dim: usize, n_points: usize) -> Self {
        Self {
            latent_dim,
            n_points,
            point_widths: vec![64, 64, 64, 128, 1024],
            head_widths: vec![512],
            decoder_widths: vec![256, 512, 1024, 2048],
        }
    }

    /// Narrower layers with the same layer counts, for small datasets on a
    /// single core.
    pub fn desk(latent_dim: usize, n_points: usize) -> Self {
        Self {
            latent_dim,
            n_points,
            point_widths: vec![32, 32, 64, 64, 128],
            head_widths: vec![64],
            decoder_widths: vec![64, 128, 256, 512],
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let widths = self
            .point_widths
            .iter()
            .chain(&self.head_widths)
            .chain(&self.decoder_widths);
        if self.latent_dim == 0
            || self.n_points == 0
            || self.point_widths.is_empty()
            || widths.clone().any(|&w| w == 0)
        {
            return Err(NeuralError::InvalidConfig(
                "all dimensions must be positive".into(),
            ));
        }
        if self.latent_dim >= 3 * self.n_points {
            return Err(NeuralError::InvalidConfig(format!(
                "latent dimension {} must be below 3·n_points = {}",
                self.latent_dim,
                3 * self.n_points
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub point: Mlp,
    pub head: Mlp,
}

/// Forward intermediates of a batched encoder pass.
pub struct EncoderTrace {
    point: MlpTrace,
    /// For each cloud and pooled feature, the row of the stacked point matrix
    /// that attained the maximum.
    argmax: Vec<Vec<usize>>,
    /// Point count of every cloud in the batch.
    sizes: Vec<usize>,
    head: MlpTrace,
}

impl EncoderTrace {
    pub fn codes(&self) -> &Array2<f64> {
        self.head.output()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGrads {
    pub point: MlpGrads,
    pub head: MlpGrads,
}

fn stack(clouds: &[&PointCloud3]) -> Array2<f64> {
    let rows: usize = clouds.iter().map(|c| c.len()).sum();
    let mut x = Array2::zeros((rows, 3));
    let mut r = 0;
    for c in clouds {
        for p in c.points() {
            x[[r, 0]] = p[0];
            x[[r, 1]] = p[1];
            x[[r, 2]] = p[2];
            r += 1;
        }
    }
    x
}

impl Encoder {
    pub fn feature_dim(&self) -> usize {
        self.point.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.head.output_dim()
    }

    fn pool(
        &self,
        features: &Array2<f64>,
        clouds: &[&PointCloud3],
    ) -> (Array2<f64>, Vec<Vec<usize>>) {
        let f = self.feature_dim();
        let mut pooled = Array2::from_elem((clouds.len(), f), f64::NEG_INFINITY);
        let mut argmax = vec![vec![0usize; f]; clouds.len()];
        let mut start = 0;
        for (b, c) in clouds.iter().enumerate() {
            for r in start..start + c.len() {
                let row = features.row(r);
                for (k, &v) in row.iter().enumerate() {
                    if v > pooled[[b, k]] {
                        pooled[[b, k]] = v;
                        argmax[b][k] = r;
                    }
                }
            }
            start += c.len();
        }
        (pooled, argmax)
    }

    pub fn encode_batch(&self, clouds: &[&PointCloud3]) -> Result<Array2<f64>, NeuralError> {
        Ok(self.encode_traced(clouds)?.head.output().clone())
    }

    pub fn encode_traced(&self, clouds: &[&PointCloud3]) -> Result<EncoderTrace, NeuralError> {
        let point = self.point.forward_traced(stack(clouds))?;
        let (pooled, argmax) = self.pool(point.output(), clouds);
        let head = self.head.forward_traced(pooled)?;
        Ok(EncoderTrace {
            point,
            argmax,
            sizes: clouds.iter().map(|c| c.len()).collect(),
            head,
        })
    }

    /// True if the traced pass sits within `margin` of a non-smooth point:
    /// a ReLU pre-activation near zero, or a pooled feature whose two
    /// largest values (within one cloud) are closer than `margin`.
    pub fn near_kink(&self, trace: &EncoderTrace, margin: f64) -> bool {
        if self.point.near_kink(&trace.point, margin) || self.head.near_kink(&trace.head, margin) {
            return true;
        }
        let features = trace.point.output();
        let mut start = 0;
        for &n in &trace.sizes {
            for k in 0..self.feature_dim() {
                let mut top = [f64::NEG_INFINITY; 2];
                for r in start..start + n {
                    let v = features[[r, k]];
                    if v > top[0] {
                        top = [v, top[0]];
                    } else if v > top[1] {
                        top[1] = v;
                    }
                }
                if top[0] - top[1] < margin {
                    return true;
                }
            }
            start += n;
        }
        false
    }

    /// Backpropagates `upstream` (batch × latent) into encoder parameters.
    pub fn backward(
        &self,
        trace: &EncoderTrace,
        upstream: Array2<f64>,
    ) -> Result<EncoderGrads, NeuralError> {
        let (head, pooled_grad) = self.head.backward(&trace.head, upstream, true)?;
        let pooled_grad = pooled_grad.expect("input gradient requested");
        let mut feature_grad = Array2::zeros(trace.point.output().dim());
        for (b, rows) in trace.argmax.iter().enumerate() {
            for (k, &r) in rows.iter().enumerate() {
                feature_grad[[r, k]] += pooled_grad[[b, k]];
            }
        }
        let (point, _) = self.point.backward(&trace.point, feature_grad, false)?;
        Ok(EncoderGrads { point, head })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub encoder: Encoder,
    pub decoder: Mlp,
    n_points: usize,
}

impl Autoencoder {
    pub fn new(encoder: Encoder, decoder: Mlp) -> Result<Self, NeuralError> {
        if encoder.point.input_dim() != 3 {
            return Err(NeuralError::DimensionMismatch {
                what: "encoder point input".into(),
                expected: 3,
                got: encoder.point.input_dim(),
            });
        }
        if encoder.feature_dim() != encoder.head.input_dim() {
            return Err(NeuralError::DimensionMismatch {
                what: "encoder head input".into(),
                expected: encoder.feature_dim(),
                got: encoder.head.input_dim(),
            });
        }
        if encoder.latent_dim() != decoder.input_dim() {
            return Err(NeuralError::DimensionMismatch {
                what: "decoder input".into(),
                expected: encoder.latent_dim(),
                got: decoder.input_dim(),
            });
        }
        if !decoder.output_dim().is_multiple_of(3) {
            return Err(NeuralError::DimensionMismatch {
                what: "decoder output (multiple of 3)".into(),
                expected: decoder.output_dim() / 3 * 3,
                got: decoder.output_dim(),
            });
        }
        let n_points = decoder.output_dim() / 3;
        Ok(Self {
            encoder,
            decoder,
            n_points,
        })
    }

    pub fn random(arch: &Architecture, rng: &mut impl Rng) -> Result<Self, NeuralError> {
        arch.validate()?;
        let mut point_sizes = vec![3];
        point_sizes.extend(&arch.point_widths);
        let mut head_sizes = vec![*arch.point_widths.last().unwrap()];
        head_sizes.extend(&arch.head_widths);
        head_sizes.push(arch.latent_dim);
        let mut dec_sizes = vec![arch.latent_dim];
        dec_sizes.extend(&arch.decoder_widths);
        dec_sizes.push(3 * arch.n_points);
        let encoder = Encoder {
            point: Mlp::random(&point_sizes, Activation::Relu, Activation::Relu, rng),
            head: Mlp::random(&head_sizes, Activation::Relu, Activation::Identity, rng),
        };
        let decoder = Mlp::random(&dec_sizes, Activation::Relu, Activation::Identity, rng);
        Self::new(encoder, decoder)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Permutation-invariant embedding of a cloud of any size.
    pub fn encode(&self, cloud: &PointCloud3) -> Result<LatentCode, NeuralError> {
        let codes = self.encoder.encode_batch(&[cloud])?;
        LatentCode::new(codes.row(0).to_vec())
    }

    pub fn decode(&self, code: &LatentCode) -> Result<PointCloud3, NeuralError> {
        self.check_code(code)?;
        let x = Array2::from_shape_vec((1, code.dim()), code.values().to_vec()).expect("shape");
        let y = self.decoder.forward(x.view())?;
        Ok(PointCloud3::from_flat(
            y.as_slice().expect("standard layout"),
        )?)
    }

    pub fn check_code(&self, code: &LatentCode) -> Result<(), NeuralError> {
        if code.dim() != self.latent_dim() {
            return Err(NeuralError::DimensionMismatch {
                what: "latent code".into(),
                expected: self.latent_dim(),
                got: code.dim(),
            });
        }
        Ok(())
    }

    /// Decoder forward pass on one code, keeping intermediates for
    /// [`Autoencoder::decode_backward`]. Returns the flat `3N` output.
    pub fn decode_traced(&self, code: &[f64]) -> Result<MlpTrace, NeuralError> {
        if code.len() != self.latent_dim() {
            return Err(NeuralError::DimensionMismatch {
                what: "latent code".into(),
                expected: self.latent_dim(),
                got: code.len(),
            });
        }
        self.decoder
            .forward_traced(Array2::from_shape_vec((1, code.len()), code.to_vec()).expect("shape"))
    }

    /// Gradient with respect to the latent code given the gradient on the
    /// decoded points.
    pub fn decode_backward(
        &self,
        trace: &MlpTrace,
        point_grad: &[[f64; 3]],
    ) -> Result<Vec<f64>, NeuralError> {
        let flat: Vec<f64> = point_grad.iter().flatten().copied().collect();
        let upstream = Array2::from_shape_vec((1, flat.len()), flat).map_err(|_| {
            NeuralError::DimensionMismatch {
                what: "decoded point gradient".into(),
                expected: 3 * self.n_points,
                got: 3 * point_grad.len(),
            }
        })?;
        let g = self.decoder.backward_input(trace, upstream)?;
        Ok(g.row(0).to_vec())
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.point.parameter_count()
            + self.encoder.head.parameter_count()
            + self.decoder.parameter_count()
    }

    pub(crate) fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.point.blocks_mut();
        v.extend(self.encoder.head.blocks_mut());
        v.extend(self.decoder.blocks_mut());
        v
    }

    pub(crate) fn block_names(&self) -> Vec<String> {
        let mut v = self.encoder.point.block_names("encoder.point");
        v.extend(self.encoder.head.block_names("encoder.head"));
        v.extend(self.decoder.block_names("decoder"));
        v
    }
}

/// Rows of a `B × 3N` decoder output as clouds of `[f64; 3]`.
pub(crate) fn rows_to_points(out: &Array2<f64>) -> Vec<Vec<[f64; 3]>> {
    out.axis_iter(Axis(0))
        .map(|row| {
            row.as_slice()
                .expect("contiguous row")
                .chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect()
        })
        .collect()
}

pub(crate) fn points_to_rows(grads: &[Vec<[f64; 3]>]) -> Array2<f64> {
    let cols = grads.first().map_or(0, |g| 3 * g.len());
    let flat: Vec<f64> = grads
        .iter()
        .flat_map(|g| g.iter().flatten().copied())
        .collect();
    Array2::from_shape_vec((grads.len(), cols), flat).expect("equal-size clouds")
}
