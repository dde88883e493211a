//! The centre-enhanced discriminative objective and its analytic gradients,
//! plus the baseline heads (plain BCE, hypersphere compactness, labelled
//! attract/repel) used for comparison runs.
//!
//! The loss replaces the linear logit of BCE-with-logits by a radial one,
//!
//! ```text
//! a = (alpha / sqrt(D)) * ||r - c||_2
//! loss(a, y) = w1 * y * softplus(-a) + w0 * (1 - y) * softplus(a)
//! ```
//!
//! which equals the weighted negative log-likelihood of sigmoid(a) under the
//! label. Its representation gradient is always radial:
//!
//! ```text
//! grad_r = w_y * (sigmoid(a) - y) * (alpha / sqrt(D)) * (r - c) / ||r - c||
//! ```
//!
//! so descent steps pull normals (y = 0) toward the centre and push
//! anomalies (y = 1) outward, monotonically in the distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l2_distance, stable_sigmoid, stable_softplus, Matrix, SeededRng};

/// Guard constant for the anomaly branch of [`sad_loss`].
pub const SAD_EPS: f64 = 1e-6;

/// Whether the centre is a constant or a trained parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentreMode {
    Fixed,
    Learnable,
}

/// Radial-logit configuration: scale, class weights, and the centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Radial scale alpha > 0.
    pub alpha: f64,
    /// Weight of the normal class (y = 0).
    pub w0: f64,
    /// Weight of the anomaly class (y = 1).
    pub w1: f64,
    /// Centre of normality in latent space; length D.
    pub centre: Vec<f64>,
    pub centre_mode: CentreMode,
}

impl ObjectiveConfig {
    pub fn new(
        alpha: f64,
        w0: f64,
        w1: f64,
        centre: Vec<f64>,
        centre_mode: CentreMode,
    ) -> Result<ObjectiveConfig> {
        if !(alpha > 0.0) || !(w0 > 0.0) || !(w1 > 0.0) {
            return Err(Error::Spec(format!(
                "alpha, w0, w1 must be strictly positive (alpha={alpha}, w0={w0}, w1={w1})"
            )));
        }
        if centre.is_empty() {
            return Err(Error::Spec("centre must have positive length".into()));
        }
        Ok(ObjectiveConfig {
            alpha,
            w0,
            w1,
            centre,
            centre_mode,
        })
    }

    /// Default configuration: alpha = 1, unit weights, fixed centre at the
    /// origin of a `latent_dim`-dimensional latent space.
    pub fn at_origin(latent_dim: usize) -> ObjectiveConfig {
        ObjectiveConfig {
            alpha: 1.0,
            w0: 1.0,
            w1: 1.0,
            centre: vec![0.0; latent_dim],
            centre_mode: CentreMode::Fixed,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.centre.len()
    }

    fn check_dim(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.centre.len() {
            return Err(Error::Dimension(format!(
                "representation has length {}, centre has length {}",
                r.len(),
                self.centre.len()
            )));
        }
        Ok(())
    }
}

/// Per-sample gradient of the radial objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSampleGrad {
    /// Gradient with respect to the representation r.
    pub grad_r: Vec<f64>,
    /// Gradient with respect to the centre; zero under a fixed centre,
    /// elementwise `-grad_r` under a learnable one.
    pub grad_c: Vec<f64>,
}

fn check_label(y: u8) -> Result<()> {
    if y > 1 {
        return Err(Error::Label(y));
    }
    Ok(())
}

/// Radial logit a = (alpha / sqrt(D)) * ||r - c||.
pub fn radial_logit(r: &[f64], cfg: &ObjectiveConfig) -> Result<f64> {
    cfg.check_dim(r)?;
    let dist = l2_distance(r, &cfg.centre)?;
    Ok(cfg.alpha / (cfg.latent_dim() as f64).sqrt() * dist)
}

/// Weighted softplus cross-entropy on the radial logit.
pub fn cedl_loss(a: f64, y: u8, cfg: &ObjectiveConfig) -> Result<f64> {
    check_label(y)?;
    let y = y as f64;
    Ok(cfg.w1 * y * stable_softplus(-a) + cfg.w0 * (1.0 - y) * stable_softplus(a))
}

/// Mean per-sample loss over a batch of representations.
pub fn cedl_batch_loss(
    representations: &Matrix,
    labels: &[u8],
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    if representations.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if labels.len() != representations.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} representations",
            labels.len(),
            representations.rows()
        )));
    }
    let mut total = 0.0;
    for i in 0..representations.rows() {
        let a = radial_logit(representations.row(i), cfg)?;
        total += cedl_loss(a, labels[i], cfg)?;
    }
    Ok(total / representations.rows() as f64)
}

/// Analytic per-sample gradient.
///
/// At the singularity r = c the norm is not differentiable; the minimum-norm
/// subgradient (zero) is returned.
pub fn cedl_grad(r: &[f64], y: u8, cfg: &ObjectiveConfig) -> Result<PerSampleGrad> {
    cfg.check_dim(r)?;
    check_label(y)?;
    let d = cfg.latent_dim();
    let dist = l2_distance(r, &cfg.centre)?;
    if dist == 0.0 {
        return Ok(PerSampleGrad {
            grad_r: vec![0.0; d],
            grad_c: vec![0.0; d],
        });
    }
    let scale = cfg.alpha / (d as f64).sqrt();
    let a = scale * dist;
    let w = if y == 1 { cfg.w1 } else { cfg.w0 };
    let coeff = w * (stable_sigmoid(a) - y as f64) * scale / dist;
    let grad_r: Vec<f64> = r
        .iter()
        .zip(&cfg.centre)
        .map(|(ri, ci)| coeff * (ri - ci))
        .collect();
    let grad_c = match cfg.centre_mode {
        CentreMode::Fixed => vec![0.0; d],
        CentreMode::Learnable => grad_r.iter().map(|g| -g).collect(),
    };
    Ok(PerSampleGrad { grad_r, grad_c })
}

/// Class-imbalance ratio N_normal / N_anomalous, assigned as w1 (with
/// w0 = 1) so the minority positive class is upweighted.
pub fn weight_ratio(n_normal: usize, n_anomalous: usize) -> Result<f64> {
    if n_normal == 0 || n_anomalous == 0 {
        return Err(Error::DegenerateSplit(format!(
            "weight ratio needs both classes, got {n_normal} normal / {n_anomalous} anomalous"
        )));
    }
    Ok(n_normal as f64 / n_anomalous as f64)
}

/// Linear scoring head for the plain BCE baseline: z = <u, r> + b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BceHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BceHead {
    /// Fan-in uniform init matching the encoder's rule; zero bias.
    pub fn init(dim: usize, rng: &mut SeededRng) -> BceHead {
        let scale = 1.0 / (dim as f64).sqrt();
        BceHead {
            weights: (0..dim).map(|_| rng.uniform(-scale, scale)).collect(),
            bias: 0.0,
        }
    }

    pub fn logit(&self, r: &[f64]) -> Result<f64> {
        if r.len() != self.weights.len() {
            return Err(Error::Dimension(format!(
                "head has dim {}, representation {}",
                self.weights.len(),
                r.len()
            )));
        }
        Ok(self.weights.iter().zip(r).map(|(u, x)| u * x).sum::<f64>() + self.bias)
    }
}

/// Loss and gradients of the BCE head evaluated on one sample.
#[derive(Debug, Clone)]
pub struct BceHeadEval {
    pub loss: f64,
    pub grad_r: Vec<f64>,
    pub grad_weights: Vec<f64>,
    pub grad_bias: f64,
}

/// Standard (unweighted) binary cross-entropy with logits on a linear head.
pub fn bce_head_loss(r: &[f64], y: u8, head: &BceHead) -> Result<BceHeadEval> {
    check_label(y)?;
    let z = head.logit(r)?;
    let y = y as f64;
    let loss = y * stable_softplus(-z) + (1.0 - y) * stable_softplus(z);
    let dz = stable_sigmoid(z) - y;
    Ok(BceHeadEval {
        loss,
        grad_r: head.weights.iter().map(|u| dz * u).collect(),
        grad_weights: r.iter().map(|x| dz * x).collect(),
        grad_bias: dz,
    })
}

/// Hypersphere compactness loss ||r - c||^2 with gradient 2(r - c).
pub fn svdd_loss(r: &[f64], c: &[f64]) -> Result<(f64, Vec<f64>)> {
    if r.len() != c.len() {
        return Err(Error::Dimension(format!(
            "svdd_loss: lengths {} and {}",
            r.len(),
            c.len()
        )));
    }
    let sq: f64 = r.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
    let grad = r.iter().zip(c).map(|(a, b)| 2.0 * (a - b)).collect();
    Ok((sq, grad))
}

/// Labelled attract/repel loss: ||r - c||^2 for normals, 1/(||r - c||^2 + eps)
/// for anomalies.
pub fn sad_loss(r: &[f64], y: u8, c: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
    check_label(y)?;
    if !(eps > 0.0) {
        return Err(Error::Spec(format!("sad_loss needs eps > 0, got {eps}")));
    }
    let (sq, grad_sq) = svdd_loss(r, c)?;
    if y == 0 {
        return Ok((sq, grad_sq));
    }
    let denom = sq + eps;
    let loss = 1.0 / denom;
    let coeff = -1.0 / (denom * denom);
    Ok((loss, grad_sq.iter().map(|g| coeff * g).collect()))
}
