//! Dense multilayer perceptron: the representation network mapping inputs in
//! R^d to latent vectors in R^D, with explicit forward caching and exact
//! chain-rule backpropagation.
//!
//! `backward` differentiates the scalar sum over the batch of
//! `<upstream row, representation row>`; the 1/N of the batch-mean loss is
//! owned by the caller (the trainer), so exactly one place controls it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

/// Negative-side slope used by [`Activation::LeakyRelu`].
pub const LEAKY_RELU_SLOPE: f64 = 0.01;

/// Elementwise activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Leaky ReLU with slope [`LEAKY_RELU_SLOPE`] on the negative side.
    LeakyRelu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_RELU_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Activation> {
        match s {
            "relu" => Ok(Activation::Relu),
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Spec(format!("unknown activation '{other}'"))),
        }
    }
}

/// One dense layer: `out_dim x in_dim` weights, `out_dim` biases, activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> LayerSpec {
        LayerSpec {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Validate that the layer dims are positive and chain.
fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Spec("encoder needs at least one layer".into()));
    }
    for (k, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::Spec(format!("layer {k} has a zero dimension")));
        }
    }
    for k in 1..specs.len() {
        if specs[k].in_dim != specs[k - 1].out_dim {
            return Err(Error::Spec(format!(
                "layer {k} in_dim {} does not chain with previous out_dim {}",
                specs[k].in_dim,
                specs[k - 1].out_dim
            )));
        }
    }
    Ok(())
}

/// Dense MLP with per-layer weight matrices (row-major, `out_dim x in_dim`)
/// and bias vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    specs: Vec<LayerSpec>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Per-layer pre-activations and activations for one mini-batch, as produced
/// by [`forward`] and consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    pre_activations: Vec<Matrix>,
    activations: Vec<Matrix>,
}

/// Parameter gradients mirroring the shapes of [`EncoderModel`].
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Initialise an encoder with zero biases and weights drawn from the
/// zero-mean uniform fan-in rule U(-1/sqrt(in_dim), 1/sqrt(in_dim)).
///
/// Draw order is layer by layer, row-major within each weight matrix, so the
/// result is fully determined by the generator's seed.
pub fn init_encoder(specs: &[LayerSpec], rng: &mut SeededRng) -> Result<EncoderModel> {
    validate_specs(specs)?;
    let mut weights = Vec::with_capacity(specs.len());
    let mut biases = Vec::with_capacity(specs.len());
    for s in specs {
        let scale = 1.0 / (s.in_dim as f64).sqrt();
        let mut w = Matrix::zeros(s.out_dim, s.in_dim);
        for v in w.data_mut() {
            *v = rng.uniform(-scale, scale);
        }
        weights.push(w);
        biases.push(vec![0.0; s.out_dim]);
    }
    Ok(EncoderModel {
        specs: specs.to_vec(),
        weights,
        biases,
    })
}

impl EncoderModel {
    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    /// Latent dimension D (the final layer's out_dim).
    pub fn latent_dim(&self) -> usize {
        self.specs.last().unwrap().out_dim
    }

    pub fn num_layers(&self) -> usize {
        self.specs.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.specs
            .iter()
            .map(|s| s.out_dim * s.in_dim + s.out_dim)
            .sum()
    }

    /// Flatten all parameters in the canonical order: per layer, weight
    /// matrix row-major, then biases. Gradients use the same order.
    pub fn params_to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    /// Overwrite all parameters from a flat vector in the canonical order.
    pub fn set_params_from_vec(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.data().len();
            w.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
            b.copy_from_slice(&flat[off..off + b.len()]);
            off += b.len();
        }
        Ok(())
    }

    /// Rebuild a model from specs plus a flat parameter vector.
    pub fn from_flat(specs: &[LayerSpec], flat: &[f64]) -> Result<EncoderModel> {
        validate_specs(specs)?;
        let mut model = EncoderModel {
            specs: specs.to_vec(),
            weights: specs
                .iter()
                .map(|s| Matrix::zeros(s.out_dim, s.in_dim))
                .collect(),
            biases: specs.iter().map(|s| vec![0.0; s.out_dim]).collect(),
        };
        model.set_params_from_vec(flat)?;
        Ok(model)
    }

    #[cfg(test)]
    pub(crate) fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }
}

/// Run the encoder on a batch (one sample per row), returning the latent
/// representations and the cache needed for [`backward`].
pub fn forward(model: &EncoderModel, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if batch.cols() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "batch width {} does not match encoder input dim {}",
            batch.cols(),
            model.input_dim()
        )));
    }
    if !batch.is_finite() {
        return Err(Error::Input("batch contains NaN or Inf".into()));
    }
    let b = batch.rows();
    let mut pre_activations = Vec::with_capacity(model.num_layers());
    let mut activations = Vec::with_capacity(model.num_layers());
    let mut current = batch;

    for (l, spec) in model.specs.iter().enumerate() {
        let w = &model.weights[l];
        let bias = &model.biases[l];
        let mut pre = Matrix::zeros(b, spec.out_dim);
        for i in 0..b {
            let x = current.row(i);
            let out = pre.row_mut(i);
            for (j, o) in out.iter_mut().enumerate() {
                let wr = w.row(j);
                let mut acc = bias[j];
                for (wv, xv) in wr.iter().zip(x) {
                    acc += wv * xv;
                }
                *o = acc;
            }
        }
        let mut act = pre.clone();
        for v in act.data_mut() {
            *v = spec.activation.apply(*v);
        }
        pre_activations.push(pre);
        activations.push(act);
        current = activations.last().unwrap();
    }

    let reps = activations.last().unwrap().clone();
    Ok((
        reps,
        ForwardCache {
            input: batch.clone(),
            pre_activations,
            activations,
        },
    ))
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    fn check_against(&self, model: &EncoderModel, grad_r: &Matrix) -> Result<()> {
        if self.pre_activations.len() != model.num_layers() {
            return Err(Error::Cache(format!(
                "cache has {} layers, model has {}",
                self.pre_activations.len(),
                model.num_layers()
            )));
        }
        if self.input.cols() != model.input_dim() {
            return Err(Error::Cache(format!(
                "cache input width {} vs model input dim {}",
                self.input.cols(),
                model.input_dim()
            )));
        }
        for (l, spec) in model.specs.iter().enumerate() {
            if self.pre_activations[l].cols() != spec.out_dim
                || self.pre_activations[l].rows() != self.input.rows()
            {
                return Err(Error::Cache(format!("layer {l} shape mismatch")));
            }
        }
        if grad_r.rows() != self.input.rows() || grad_r.cols() != model.latent_dim() {
            return Err(Error::Cache(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                grad_r.rows(),
                grad_r.cols(),
                self.input.rows(),
                model.latent_dim()
            )));
        }
        Ok(())
    }
}

/// Exact parameter gradients of `sum over batch of <grad_r row, r row>`.
///
/// `cache` must come from [`forward`] on the same model and batch.
pub fn backward(
    model: &EncoderModel,
    cache: &ForwardCache,
    grad_r: &Matrix,
) -> Result<EncoderGrads> {
    cache.check_against(model, grad_r)?;
    let b = cache.batch_size();
    let layers = model.num_layers();

    let mut grads = EncoderGrads {
        weights: model
            .specs
            .iter()
            .map(|s| Matrix::zeros(s.out_dim, s.in_dim))
            .collect(),
        biases: model.specs.iter().map(|s| vec![0.0; s.out_dim]).collect(),
    };

    // delta = d(sum)/d(pre-activation of current layer)
    let mut delta = grad_r.clone();
    for l in (0..layers).rev() {
        let spec = &model.specs[l];
        let pre = &cache.pre_activations[l];
        for i in 0..b {
            let dr = delta.row_mut(i);
            let pr = pre.row(i);
            for (d, z) in dr.iter_mut().zip(pr) {
                *d *= spec.activation.derivative(*z);
            }
        }

        let layer_input: &Matrix = if l == 0 {
            &cache.input
        } else {
            &cache.activations[l - 1]
        };

        // grad_W[l] = sum_b delta_b (outer) x_b ; grad_bias[l] = sum_b delta_b
        let gw = &mut grads.weights[l];
        let gb = &mut grads.biases[l];
        for i in 0..b {
            let d = delta.row(i);
            let x = layer_input.row(i);
            for (j, dj) in d.iter().enumerate() {
                gb[j] += dj;
                let row = gw.row_mut(j);
                for (rv, xv) in row.iter_mut().zip(x) {
                    *rv += dj * xv;
                }
            }
        }

        if l > 0 {
            // delta_prev = delta . W  (per row)
            let w = &model.weights[l];
            let mut next = Matrix::zeros(b, spec.in_dim);
            for i in 0..b {
                let d = delta.row(i);
                let out = next.row_mut(i);
                for (j, dj) in d.iter().enumerate() {
                    let wr = w.row(j);
                    for (ov, wv) in out.iter_mut().zip(wr) {
                        *ov += dj * wv;
                    }
                }
            }
            delta = next;
        }
    }

    Ok(grads)
}

impl EncoderGrads {
    /// Flatten in the same canonical order as [`EncoderModel::params_to_vec`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_difference_gradient, stream, SeededRng};
    use approx::assert_abs_diff_eq;

    fn toy_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::new(2, 4, Activation::Relu),
            LayerSpec::new(4, 2, Activation::Tanh),
        ]
    }

    #[test]
    fn init_is_deterministic_given_seed() {
        let mut a = SeededRng::stream(42, stream::INIT, 0);
        let mut b = SeededRng::stream(42, stream::INIT, 0);
        let m1 = init_encoder(&toy_specs(), &mut a).unwrap();
        let m2 = init_encoder(&toy_specs(), &mut b).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn init_biases_are_zero_and_weights_bounded() {
        let specs = vec![LayerSpec::new(100, 3, Activation::Identity)];
        let mut rng = SeededRng::new(1);
        let m = init_encoder(&specs, &mut rng).unwrap();
        assert!(m.biases()[0].iter().all(|b| *b == 0.0));
        assert!(m.weights()[0].data().iter().all(|w| w.abs() <= 0.1));
    }

    #[test]
    fn init_rejects_non_chaining_dims() {
        let specs = vec![
            LayerSpec::new(2, 4, Activation::Relu),
            LayerSpec::new(3, 2, Activation::Tanh),
        ];
        let mut rng = SeededRng::new(1);
        assert!(matches!(
            init_encoder(&specs, &mut rng),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn forward_zero_model_gives_zero_tanh_output() {
        let specs = toy_specs();
        let mut rng = SeededRng::new(0);
        let mut m = init_encoder(&specs, &mut rng).unwrap();
        let zeros = vec![0.0; m.param_count()];
        m.set_params_from_vec(&zeros).unwrap();
        let batch = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let (reps, _) = forward(&m, &batch).unwrap();
        assert!(reps.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer_with_identity_weights_passes_input_through() {
        let specs = vec![LayerSpec::new(3, 3, Activation::Identity)];
        let mut rng = SeededRng::new(0);
        let mut m = init_encoder(&specs, &mut rng).unwrap();
        let mut flat = vec![0.0; m.param_count()];
        // weight matrix = I (row-major), biases zero
        for i in 0..3 {
            flat[i * 3 + i] = 1.0;
        }
        m.set_params_from_vec(&flat).unwrap();
        let batch = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let (reps, _) = forward(&m, &batch).unwrap();
        assert_eq!(reps.row(0), &[1.0, 2.0, 3.0]);
    }

    /// Separately coded layer-by-layer reference evaluation.
    fn reference_forward(model: &EncoderModel, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (l, spec) in model.specs().iter().enumerate() {
            let mut next = vec![0.0; spec.out_dim];
            for (j, nj) in next.iter_mut().enumerate() {
                let mut z = model.biases()[l][j];
                for i in 0..spec.in_dim {
                    z += model.weights()[l].get(j, i) * cur[i];
                }
                *nj = spec.activation.apply(z);
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn forward_matches_reference_implementation() {
        let specs = vec![
            LayerSpec::new(5, 7, Activation::LeakyRelu),
            LayerSpec::new(7, 4, Activation::Relu),
            LayerSpec::new(4, 3, Activation::Tanh),
        ];
        let mut rng = SeededRng::new(17);
        let m = init_encoder(&specs, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..5).map(|_| rng.normal()).collect())
            .collect();
        let batch = Matrix::from_rows(&rows).unwrap();
        let (reps, _) = forward(&m, &batch).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let expect = reference_forward(&m, row);
            for (a, b) in reps.row(i).iter().zip(&expect) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn forward_rejects_bad_width_and_non_finite() {
        let mut rng = SeededRng::new(17);
        let m = init_encoder(&toy_specs(), &mut rng).unwrap();
        let wrong = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(forward(&m, &wrong), Err(Error::Dimension(_))));
        let nan = Matrix::from_rows(&[vec![f64::NAN, 0.0]]).unwrap();
        assert!(matches!(forward(&m, &nan), Err(Error::Input(_))));
    }

    #[test]
    fn forward_is_batch_order_equivariant() {
        let mut rng = SeededRng::new(23);
        let m = init_encoder(&toy_specs(), &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2).map(|_| rng.normal()).collect())
            .collect();
        let batch = Matrix::from_rows(&rows).unwrap();
        let perm = [2usize, 0, 3, 1];
        let permuted_rows: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let permuted = Matrix::from_rows(&permuted_rows).unwrap();
        let (r1, _) = forward(&m, &batch).unwrap();
        let (r2, _) = forward(&m, &permuted).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(r1.row(i), r2.row(k));
        }
    }

    #[test]
    fn tanh_output_norm_is_bounded_by_sqrt_d() {
        let mut rng = SeededRng::new(29);
        let m = init_encoder(&toy_specs(), &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..32)
            .map(|_| (0..2).map(|_| rng.uniform(-50.0, 50.0)).collect())
            .collect();
        let (reps, _) = forward(&m, &Matrix::from_rows(&rows).unwrap()).unwrap();
        let bound = (m.latent_dim() as f64).sqrt();
        for i in 0..reps.rows() {
            assert!(crate::numerics::l2_norm(reps.row(i)) <= bound);
        }
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let mut rng = SeededRng::new(31);
        let m = init_encoder(&toy_specs(), &mut rng).unwrap();
        let batch = Matrix::from_rows(&[vec![0.3, -0.8]]).unwrap();
        let (_, cache) = forward(&m, &batch).unwrap();
        let grads = backward(&m, &cache, &Matrix::zeros(1, 2)).unwrap();
        assert!(grads.to_vec().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn backward_single_linear_layer_is_outer_product() {
        let specs = vec![LayerSpec::new(3, 2, Activation::Identity)];
        let mut rng = SeededRng::new(37);
        let m = init_encoder(&specs, &mut rng).unwrap();
        let x = vec![0.5, -1.0, 2.0];
        let g = vec![2.0, -3.0];
        let batch = Matrix::from_rows(std::slice::from_ref(&x)).unwrap();
        let (_, cache) = forward(&m, &batch).unwrap();
        let upstream = Matrix::from_rows(std::slice::from_ref(&g)).unwrap();
        let grads = backward(&m, &cache, &upstream).unwrap();
        for j in 0..2 {
            for i in 0..3 {
                assert_abs_diff_eq!(grads.weights[0].get(j, i), g[j] * x[i], epsilon = 1e-15);
            }
            assert_abs_diff_eq!(grads.biases[0][j], g[j], epsilon = 1e-15);
        }
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let mut rng = SeededRng::new(41);
        let m = init_encoder(&toy_specs(), &mut rng).unwrap();
        let other_specs = vec![LayerSpec::new(2, 2, Activation::Tanh)];
        let other = init_encoder(&other_specs, &mut rng).unwrap();
        let batch = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let (_, cache) = forward(&other, &batch).unwrap();
        assert!(matches!(
            backward(&m, &cache, &Matrix::zeros(1, 2)),
            Err(Error::Cache(_))
        ));
    }

    /// Relative error with an absolute floor for near-zero gradients, where
    /// central differences are dominated by round-off noise.
    fn rel_err(a: f64, f: f64) -> f64 {
        (a - f).abs() / a.abs().max(f.abs()).max(1e-4)
    }

    #[test]
    fn backward_matches_finite_differences() {
        // >= 20 random (model, batch, upstream) triples; smooth activations
        // everywhere, widths <= 16, batch <= 8.
        let mut rng = SeededRng::new(4242);
        let mut worst = 0.0f64;
        for case in 0..20 {
            let d_in = 1 + rng.next_below(6);
            let d_mid = 1 + rng.next_below(16);
            let d_out = 1 + rng.next_below(6);
            let act = if case % 2 == 0 {
                Activation::Tanh
            } else {
                Activation::LeakyRelu
            };
            let specs = vec![
                LayerSpec::new(d_in, d_mid, act),
                LayerSpec::new(d_mid, d_out, Activation::Tanh),
            ];
            let m = init_encoder(&specs, &mut rng).unwrap();
            let b = 1 + rng.next_below(8);
            let rows: Vec<Vec<f64>> = (0..b)
                .map(|_| (0..d_in).map(|_| rng.normal()).collect())
                .collect();
            let batch = Matrix::from_rows(&rows).unwrap();
            let up_rows: Vec<Vec<f64>> = (0..b)
                .map(|_| (0..d_out).map(|_| rng.normal()).collect())
                .collect();
            let upstream = Matrix::from_rows(&up_rows).unwrap();

            let (_, cache) = forward(&m, &batch).unwrap();
            let analytic = backward(&m, &cache, &upstream).unwrap().to_vec();

            let specs_clone = specs.clone();
            let scalar = |theta: &[f64]| {
                let model = EncoderModel::from_flat(&specs_clone, theta).unwrap();
                let (reps, _) = forward(&model, &batch).unwrap();
                let mut s = 0.0;
                for i in 0..b {
                    for (g, r) in upstream.row(i).iter().zip(reps.row(i)) {
                        s += g * r;
                    }
                }
                s
            };
            let fd =
                finite_difference_gradient(scalar, &m.params_to_vec(), 1e-5).unwrap();
            for (a, f) in analytic.iter().zip(&fd) {
                worst = worst.max(rel_err(*a, *f));
            }
        }
        assert!(worst < 1e-5, "max relative error {worst}");
    }
}
