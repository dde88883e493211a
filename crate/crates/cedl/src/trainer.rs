//! End-to-end training loop: seeded mini-batching, loss aggregation, Adam
//! updates, and best-average-loss checkpointing, shared by the radial
//! objective and every baseline head.
//!
//! The per-epoch average is the total per-sample loss divided by the sample
//! count (not a mean of batch means), so ragged final batches cannot skew
//! the checkpoint criterion.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::encoder::{backward, forward, EncoderModel};
use crate::error::{Error, Result};
use crate::numerics::{stream, stream_seed, Matrix, SeededRng};
use crate::objective::{
    bce_head_loss, cedl_grad, cedl_loss, radial_logit, sad_loss, svdd_loss, BceHead,
    CentreMode, ObjectiveConfig, SAD_EPS,
};
use crate::optimizer::{adam_step, AdamState};

/// Which loss drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Radial-logit cross-entropy.
    Cedl,
    /// Plain BCE on a linear head over the representation.
    Bce,
    /// Hypersphere compactness (one-class; ignores labels).
    Svdd,
    /// Labelled attract/repel around the centre.
    Sad,
}

impl ObjectiveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveKind::Cedl => "cedl",
            ObjectiveKind::Bce => "bce",
            ObjectiveKind::Svdd => "svdd",
            ObjectiveKind::Sad => "sad",
        }
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ObjectiveKind> {
        match s {
            "cedl" => Ok(ObjectiveKind::Cedl),
            "bce" => Ok(ObjectiveKind::Bce),
            "svdd" => Ok(ObjectiveKind::Svdd),
            "sad" => Ok(ObjectiveKind::Sad),
            other => Err(Error::Config(format!("unknown objective '{other}'"))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub objective: ObjectiveKind,
    pub objective_cfg: ObjectiveConfig,
    pub shuffle: bool,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Spec("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Spec("batch size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Spec(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Outcome of a training run, carrying the best (lowest average loss) state.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub best_loss: f64,
    pub best_epoch: usize,
    /// Encoder parameters at the best epoch.
    pub model: EncoderModel,
    /// Objective config at the best epoch (centre updated when learnable).
    pub objective_cfg: ObjectiveConfig,
    /// Linear head at the best epoch, present only for the BCE objective.
    pub head: Option<BceHead>,
}

/// Mini-batch index schedule: a permutation (seeded) or the identity,
/// chunked into `batch_size` pieces with the final piece possibly smaller.
pub fn batch_iterator(
    n: usize,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> Vec<Vec<usize>> {
    assert!(n >= 1 && batch_size >= 1);
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        SeededRng::new(seed).shuffle(&mut order);
    }
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// The schedule used for one epoch; depends only on (n, batch_size, seed,
/// shuffle, epoch) and never on the objective.
pub(crate) fn epoch_schedule(n: usize, cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    batch_iterator(
        n,
        cfg.batch_size,
        stream_seed(cfg.seed, stream::SHUFFLE, epoch as u64),
        cfg.shuffle,
    )
}

/// Per-sample losses and representation gradients for one batch, under the
/// configured objective. Head gradients (BCE only) are averaged over the
/// batch; centre gradients (learnable centre only) likewise.
struct BatchEval {
    sample_loss_sum: f64,
    grad_r: Matrix,
    grad_head: Option<(Vec<f64>, f64)>,
    grad_centre: Option<Vec<f64>>,
}

fn eval_batch(
    reps: &Matrix,
    labels: &[u8],
    cfg: &TrainConfig,
    objective: &ObjectiveConfig,
    head: Option<&BceHead>,
) -> Result<BatchEval> {
    let b = reps.rows();
    let inv_b = 1.0 / b as f64;
    let mut grad_r = Matrix::zeros(b, reps.cols());
    let mut sum = 0.0;
    let mut grad_head = None;
    let mut grad_centre = None;

    match cfg.objective {
        ObjectiveKind::Cedl => {
            let learnable = objective.centre_mode == CentreMode::Learnable;
            let mut gc = vec![0.0; objective.latent_dim()];
            for i in 0..b {
                let r = reps.row(i);
                let a = radial_logit(r, objective)?;
                sum += cedl_loss(a, labels[i], objective)?;
                let g = cedl_grad(r, labels[i], objective)?;
                for (dst, src) in grad_r.row_mut(i).iter_mut().zip(&g.grad_r) {
                    *dst = src * inv_b;
                }
                if learnable {
                    for (c, s) in gc.iter_mut().zip(&g.grad_c) {
                        *c += s * inv_b;
                    }
                }
            }
            if learnable {
                grad_centre = Some(gc);
            }
        }
        ObjectiveKind::Bce => {
            let head = head.expect("bce training carries a head");
            let mut gu = vec![0.0; head.weights.len()];
            let mut gb = 0.0;
            for i in 0..b {
                let eval = bce_head_loss(reps.row(i), labels[i], head)?;
                sum += eval.loss;
                for (dst, src) in grad_r.row_mut(i).iter_mut().zip(&eval.grad_r) {
                    *dst = src * inv_b;
                }
                for (u, s) in gu.iter_mut().zip(&eval.grad_weights) {
                    *u += s * inv_b;
                }
                gb += eval.grad_bias * inv_b;
            }
            grad_head = Some((gu, gb));
        }
        ObjectiveKind::Svdd => {
            for i in 0..b {
                let (loss, g) = svdd_loss(reps.row(i), &objective.centre)?;
                sum += loss;
                for (dst, src) in grad_r.row_mut(i).iter_mut().zip(&g) {
                    *dst = src * inv_b;
                }
            }
        }
        ObjectiveKind::Sad => {
            for i in 0..b {
                let (loss, g) = sad_loss(reps.row(i), labels[i], &objective.centre, SAD_EPS)?;
                sum += loss;
                for (dst, src) in grad_r.row_mut(i).iter_mut().zip(&g) {
                    *dst = src * inv_b;
                }
            }
        }
    }

    Ok(BatchEval {
        sample_loss_sum: sum,
        grad_r,
        grad_head,
        grad_centre,
    })
}

/// Total trainable parameter count: encoder, plus head (BCE), plus centre
/// (learnable mode). Flat order is encoder params, then head weights and
/// bias, then centre coordinates.
fn total_params(model: &EncoderModel, cfg: &TrainConfig) -> usize {
    let mut n = model.param_count();
    if cfg.objective == ObjectiveKind::Bce {
        n += model.latent_dim() + 1;
    }
    if cfg.objective == ObjectiveKind::Cedl
        && cfg.objective_cfg.centre_mode == CentreMode::Learnable
    {
        n += cfg.objective_cfg.latent_dim();
    }
    n
}

/// Train an encoder on a labelled dataset.
///
/// Per epoch: seeded shuffle (when enabled), fixed-size batches, forward,
/// batch loss, backward, one Adam step; the state with the lowest epoch
/// average loss is retained. Fully deterministic given the config seed.
///
/// Supervised objectives (cedl, bce, sad) require both classes in the
/// dataset; the compactness objective (svdd) ignores labels.
pub fn train(ds: &Dataset, model: &EncoderModel, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if ds.feature_width() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "dataset width {} does not match encoder input dim {}",
            ds.feature_width(),
            model.input_dim()
        )));
    }
    if cfg.objective_cfg.latent_dim() != model.latent_dim() {
        return Err(Error::Dimension(format!(
            "centre has length {}, encoder latent dim is {}",
            cfg.objective_cfg.latent_dim(),
            model.latent_dim()
        )));
    }
    if cfg.objective != ObjectiveKind::Svdd
        && (ds.count_label(0) == 0 || ds.count_label(1) == 0)
    {
        return Err(Error::DegenerateSplit(format!(
            "objective '{}' needs both classes in the training set",
            cfg.objective.as_str()
        )));
    }

    let mut model = model.clone();
    let mut objective = cfg.objective_cfg.clone();
    let mut head = if cfg.objective == ObjectiveKind::Bce {
        let mut rng = SeededRng::stream(cfg.seed, stream::INIT, 1);
        Some(BceHead::init(model.latent_dim(), &mut rng))
    } else {
        None
    };

    let n_params = total_params(&model, cfg);
    let mut adam = AdamState::new(cfg.learning_rate, n_params)?;

    let n = ds.len();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best = (model.clone(), objective.clone(), head.clone());

    for epoch in 0..cfg.epochs {
        let mut total_sample_loss = 0.0;
        for (batch_no, idx) in epoch_schedule(n, cfg, epoch).into_iter().enumerate() {
            let (batch, labels) = ds.batch(&idx);
            let (reps, cache) = forward(&model, &batch)?;
            let eval = eval_batch(&reps, &labels, cfg, &objective, head.as_ref())?;
            if !eval.sample_loss_sum.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    batch: batch_no + 1,
                });
            }
            total_sample_loss += eval.sample_loss_sum;

            let encoder_grads = backward(&model, &cache, &eval.grad_r)?;
            let mut flat_grads = encoder_grads.to_vec();
            let mut flat_params = model.params_to_vec();
            if let Some((gu, gb)) = &eval.grad_head {
                let h = head.as_ref().unwrap();
                flat_params.extend_from_slice(&h.weights);
                flat_params.push(h.bias);
                flat_grads.extend_from_slice(gu);
                flat_grads.push(*gb);
            }
            if let Some(gc) = &eval.grad_centre {
                flat_params.extend_from_slice(&objective.centre);
                flat_grads.extend_from_slice(gc);
            }

            adam_step(&mut adam, &mut flat_params, &flat_grads)?;

            let enc_n = model.param_count();
            model.set_params_from_vec(&flat_params[..enc_n])?;
            let mut off = enc_n;
            if eval.grad_head.is_some() {
                let h = head.as_mut().unwrap();
                let d = h.weights.len();
                h.weights.copy_from_slice(&flat_params[off..off + d]);
                h.bias = flat_params[off + d];
                off += d + 1;
            }
            if eval.grad_centre.is_some() {
                let d = objective.centre.len();
                objective.centre.copy_from_slice(&flat_params[off..off + d]);
            }
        }

        let avg = total_sample_loss / n as f64;
        epoch_losses.push(avg);
        if avg < best_loss {
            best_loss = avg;
            best_epoch = epoch + 1;
            best = (model.clone(), objective.clone(), head.clone());
        }
    }

    let (model, objective_cfg, head) = best;
    Ok(TrainReport {
        epoch_losses,
        best_loss,
        best_epoch,
        model,
        objective_cfg,
        head,
    })
}
