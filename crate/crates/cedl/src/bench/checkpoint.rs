//! Checkpoint serialization.
//!
//! Layout: one magic line (`CEDL1`), one JSON header line carrying the layer
//! specs, objective configuration, optimizer constants and provenance, then
//! a raw little-endian `f64` payload — encoder parameters in canonical order
//! (per layer: weights row-major, then biases), followed by the linear-head
//! weights and bias when a head is present. The header's `param_count`
//! pins the payload length, so truncation is detected on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderModel, LayerSpec};
use crate::error::{Error, Result};
use crate::objective::{BceHead, CentreMode, ObjectiveConfig};
use crate::optimizer::{ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::trainer::ObjectiveKind;

pub const CHECKPOINT_MAGIC: &str = "CEDL1";

/// Optimizer constants recorded for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerInfo {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerInfo {
    pub fn adam(learning_rate: f64) -> OptimizerInfo {
        OptimizerInfo {
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// Training provenance stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub objective_kind: ObjectiveKind,
    pub optimizer: OptimizerInfo,
}

/// A trained model plus everything needed to replay its scores exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EncoderModel,
    pub objective: ObjectiveConfig,
    pub head: Option<BceHead>,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    layer_specs: Vec<LayerSpec>,
    alpha: f64,
    w0: f64,
    w1: f64,
    centre: Vec<f64>,
    centre_mode: CentreMode,
    head_dim: Option<usize>,
    param_count: usize,
    provenance: Provenance,
}

/// Write a checkpoint; the same checkpoint always produces identical bytes.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut payload = ckpt.model.params_to_vec();
    if let Some(head) = &ckpt.head {
        payload.extend_from_slice(&head.weights);
        payload.push(head.bias);
    }
    let header = Header {
        layer_specs: ckpt.model.specs().to_vec(),
        alpha: ckpt.objective.alpha,
        w0: ckpt.objective.w0,
        w1: ckpt.objective.w1,
        centre: ckpt.objective.centre.clone(),
        centre_mode: ckpt.objective.centre_mode,
        head_dim: ckpt.head.as_ref().map(|h| h.weights.len()),
        param_count: payload.len(),
        provenance: ckpt.provenance.clone(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(serde_json::to_string(&header)?.as_bytes());
    out.push(b'\n');
    for v in &payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::create_dir_all(path.parent().unwrap_or_else(|| Path::new(".")))?;
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Load and validate a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let magic_end = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing magic line".into()))?;
    let magic = std::str::from_utf8(&bytes[..magic_end])
        .map_err(|_| Error::Checkpoint("magic line is not UTF-8".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic '{magic}', expected '{CHECKPOINT_MAGIC}'"
        )));
    }
    let rest = &bytes[magic_end + 1..];
    let header_end = rest
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
    let header: Header = serde_json::from_slice(&rest[..header_end])
        .map_err(|e| Error::Checkpoint(format!("header does not parse: {e}")))?;

    let payload = &rest[header_end + 1..];
    let expected = header.param_count * 8;
    if payload.len() != expected {
        return Err(Error::Integrity(format!(
            "payload holds {} bytes, header promises {expected}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let model_count: usize = header
        .layer_specs
        .iter()
        .map(|s| s.out_dim * s.in_dim + s.out_dim)
        .sum();
    let head_count = header.head_dim.map_or(0, |d| d + 1);
    if model_count + head_count != header.param_count {
        return Err(Error::Integrity(format!(
            "specs imply {} parameters, header promises {}",
            model_count + head_count,
            header.param_count
        )));
    }

    let model = EncoderModel::from_flat(&header.layer_specs, &values[..model_count])?;
    let head = header.head_dim.map(|d| BceHead {
        weights: values[model_count..model_count + d].to_vec(),
        bias: values[model_count + d],
    });
    let objective = ObjectiveConfig::new(
        header.alpha,
        header.w0,
        header.w1,
        header.centre,
        header.centre_mode,
    )?;
    if objective.latent_dim() != model.latent_dim() {
        return Err(Error::Integrity(format!(
            "centre length {} vs latent dim {}",
            objective.latent_dim(),
            model.latent_dim()
        )));
    }
    Ok(Checkpoint {
        model,
        objective,
        head,
        provenance: header.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_encoder, Activation};
    use crate::numerics::{stream, Matrix, SeededRng};

    fn sample_checkpoint() -> Checkpoint {
        let specs = vec![
            LayerSpec::new(3, 5, Activation::Relu),
            LayerSpec::new(5, 2, Activation::Tanh),
        ];
        let mut rng = SeededRng::stream(9, stream::INIT, 0);
        let model = init_encoder(&specs, &mut rng).unwrap();
        Checkpoint {
            objective: ObjectiveConfig::new(
                1.5,
                1.0,
                7.25,
                vec![0.0, 0.0],
                CentreMode::Fixed,
            )
            .unwrap(),
            head: None,
            provenance: Provenance {
                seed: 9,
                best_loss: 0.123456789123456789,
                best_epoch: 17,
                objective_kind: ObjectiveKind::Cedl,
                optimizer: OptimizerInfo::adam(1e-4),
            },
            model,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact_and_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&ckpt, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        assert_eq!(loaded, ckpt);
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn roundtrip_preserves_head() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.ckpt");
        let mut ckpt = sample_checkpoint();
        ckpt.head = Some(BceHead {
            weights: vec![0.25, -0.75],
            bias: 1.5,
        });
        ckpt.provenance.objective_kind = ObjectiveKind::Bce;
        save_checkpoint(&ckpt, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&sample_checkpoint(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn truncation_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        save_checkpoint(&sample_checkpoint(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Integrity(_))));
    }

    #[test]
    fn loaded_model_scores_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        let mut rng = SeededRng::new(55);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..3).map(|_| rng.normal()).collect())
            .collect();
        let batch = Matrix::from_rows(&rows).unwrap();
        let before = crate::eval::score(&ckpt.model, &ckpt.objective, &batch).unwrap();
        let after = crate::eval::score(&loaded.model, &loaded.objective, &batch).unwrap();
        assert_eq!(before, after);
    }
}
