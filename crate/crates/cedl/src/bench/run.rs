//! Protocol runners: single experiments, the class-rotation protocol, the
//! anomaly-proportion sweep, checkpoint evaluation, and embedding export.
//!
//! Every emitted byte (result records, checkpoints, embedding files) is
//! fully determined by the configuration and seed. Wall-clock timings go to
//! stderr only, never into persisted records.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::{save_checkpoint, Checkpoint, OptimizerInfo, Provenance};
use super::config::{
    binary_clusters, class_clusters, spike_list, DataSource, ExperimentConfig, Modality,
    SyntheticSpec,
};
use crate::data::{
    chronological_split, gen_class_clusters, gen_gaussian_clusters, gen_spike_series,
    load_csv, load_svmlight, stratified_split, subsample_anomaly_proportion, window_series,
    ChannelStats, ClassLabelledDataset, Dataset, LabelledSeries, Sample, SeriesWindowSpec,
    Standardize,
};
use crate::encoder::forward;
use crate::error::{Error, Result};
use crate::eval::{score, MetricReport, ScoredSet};
use crate::numerics::{l2_distance, stable_sigmoid, stream, SeededRng};
use crate::objective::{weight_ratio, CentreMode, ObjectiveConfig};
use crate::trainer::{train, ObjectiveKind, TrainConfig, TrainReport};

/// One line of `results.jsonl`: everything needed to regenerate a table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment_id: String,
    /// Which protocol cell produced this record ("single", "rot-class-K",
    /// "sweep-I-OBJECTIVE").
    pub cell: String,
    pub config_digest: String,
    pub objective: ObjectiveKind,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    /// Anomaly fraction actually present in the training cell (not the
    /// requested one).
    pub realized_anomaly_fraction: f64,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub metrics: MetricReport,
    /// Metrics on normals plus training-distribution anomalies only
    /// (rotation cells).
    pub seen: Option<MetricReport>,
    /// Metrics on normals plus anomalies never shown in training
    /// (rotation cells).
    pub unseen: Option<MetricReport>,
    /// Checkpoint file name relative to the output directory.
    pub checkpoint: String,
}

/// Seed for rotation cell `class`: the master seed plus the class index.
pub fn rotation_cell_seed(master: u64, class: usize) -> u64 {
    master.wrapping_add(class as u64)
}

/// Seed for sweep point `index`: the master seed plus 1000 * index, so the
/// first point replays the master lineage exactly.
pub fn sweep_cell_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(1000 * index as u64)
}

fn load_tabular(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.source {
        DataSource::Csv {
            path,
            label_column,
            header,
        } => load_csv(path, *label_column, *header),
        DataSource::Svmlight { path } => load_svmlight(path),
        DataSource::Synthetic(SyntheticSpec::Clusters { seed, clusters }) => {
            gen_gaussian_clusters(&binary_clusters(clusters)?, *seed)
        }
        DataSource::Synthetic(SyntheticSpec::Spikes { .. }) => Err(Error::Config(
            "spike series need the series modality".into(),
        )),
    }
}

fn load_series(cfg: &ExperimentConfig) -> Result<LabelledSeries> {
    match &cfg.source {
        DataSource::Synthetic(SyntheticSpec::Spikes {
            seed,
            length,
            channels,
            noise_stdev,
            spikes,
        }) => gen_spike_series(*length, *channels, &spike_list(spikes), *noise_stdev, *seed),
        DataSource::Csv {
            path,
            label_column,
            header,
        } => {
            // one timestep per row: channel values plus a per-timestep label
            let ds = load_csv(path, *label_column, *header)?;
            let values = ds.samples().iter().map(|s| s.features.clone()).collect();
            let labels = ds.labels();
            LabelledSeries::new(values, labels)
        }
        _ => Err(Error::Config(
            "series modality needs a CSV of timesteps or a spike-series spec".into(),
        )),
    }
}

fn load_classes(cfg: &ExperimentConfig) -> Result<ClassLabelledDataset> {
    match &cfg.source {
        DataSource::Synthetic(SyntheticSpec::Clusters { seed, clusters }) => {
            gen_class_clusters(&class_clusters(clusters), *seed)
        }
        DataSource::Csv {
            path,
            label_column,
            header,
        } => ClassLabelledDataset::from_csv(path, *label_column, *header),
        _ => Err(Error::Config(
            "classes modality needs a CSV or a clusters spec".into(),
        )),
    }
}

/// Load and split per the configured modality.
fn prepare_split(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match cfg.modality {
        Modality::Tabular => {
            let ds = load_tabular(cfg)?;
            stratified_split(&ds, cfg.train_fraction, cfg.seed)
        }
        Modality::Series => {
            let series = load_series(cfg)?;
            let (train_seg, test_seg) = chronological_split(&series, cfg.train_fraction)?;
            let spec = SeriesWindowSpec {
                window_length: cfg.window_length,
                stride: cfg.stride,
            };
            let standardize = if cfg.per_window_standardize {
                Standardize::PerWindow
            } else {
                Standardize::TrainStats(ChannelStats::from_series(&train_seg)?)
            };
            let train = window_series(&train_seg, &spec, &standardize)?;
            let test = window_series(&test_seg, &spec, &standardize)?;
            Ok((train, test))
        }
        Modality::LabelledClasses => Err(Error::Protocol(
            "class-labelled data is consumed by the rotation protocol".into(),
        )),
    }
}

/// Anomaly scores for a test set under a trained state: the head probability
/// for the BCE baseline, the centre distance otherwise.
fn test_scores(report: &TrainReport, kind: ObjectiveKind, test: &Dataset) -> Result<Vec<f64>> {
    let batch = test.features_matrix();
    match kind {
        ObjectiveKind::Bce => {
            let head = report
                .head
                .as_ref()
                .ok_or_else(|| Error::Protocol("bce state carries no head".into()))?;
            let (reps, _) = forward(&report.model, &batch)?;
            (0..reps.rows())
                .map(|i| Ok(stable_sigmoid(head.logit(reps.row(i))?)))
                .collect()
        }
        _ => Ok(score(&report.model, &report.objective_cfg, &batch)?
            .into_iter()
            .map(|s| s.distance)
            .collect()),
    }
}

struct CellOutcome {
    record: ResultRecord,
    checkpoint: Checkpoint,
    scores: Vec<f64>,
}

/// Train one protocol cell and evaluate it on the given test set.
fn train_and_eval(
    cfg: &ExperimentConfig,
    cell: &str,
    seed: u64,
    kind: ObjectiveKind,
    train_ds: &Dataset,
    test_ds: &Dataset,
) -> Result<CellOutcome> {
    if train_ds.is_empty() || test_ds.is_empty() {
        return Err(Error::InsufficientData(
            "train and test sets must both be non-empty".into(),
        ));
    }
    // the compactness objective trains on normal samples only
    let train_used = if kind == ObjectiveKind::Svdd {
        let normals: Vec<usize> = (0..train_ds.len())
            .filter(|&i| train_ds.samples()[i].label == 0)
            .collect();
        if normals.is_empty() {
            return Err(Error::DegenerateSplit(
                "svdd training needs normal samples".into(),
            ));
        }
        train_ds.subset(&normals, &format!("{}|normals", train_ds.provenance()))
    } else {
        train_ds.clone()
    };

    let w1 = if kind == ObjectiveKind::Cedl {
        weight_ratio(train_used.count_label(0), train_used.count_label(1))?
    } else {
        1.0
    };

    let specs = cfg.encoder.layer_specs(train_used.feature_width())?;
    let mut init_rng = SeededRng::stream(seed, stream::INIT, 0);
    let model = crate::encoder::init_encoder(&specs, &mut init_rng)?;
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed,
        objective: kind,
        objective_cfg: ObjectiveConfig::new(
            cfg.alpha,
            1.0,
            w1,
            vec![0.0; cfg.encoder.latent],
            cfg.centre_mode,
        )?,
        shuffle: cfg.shuffle,
    };
    let report = train(&train_used, &model, &train_cfg)?;

    let scores = test_scores(&report, kind, test_ds)?;
    let scored = ScoredSet::new(scores.clone(), test_ds.labels())?;
    let metrics = MetricReport::from_scored(&scored)?;

    let checkpoint = Checkpoint {
        model: report.model.clone(),
        objective: report.objective_cfg.clone(),
        head: report.head.clone(),
        provenance: Provenance {
            seed,
            best_loss: report.best_loss,
            best_epoch: report.best_epoch,
            objective_kind: kind,
            optimizer: OptimizerInfo::adam(cfg.learning_rate),
        },
    };
    let record = ResultRecord {
        experiment_id: cfg.id.clone(),
        cell: cell.to_string(),
        config_digest: cfg.digest(),
        objective: kind,
        seed,
        train_size: train_used.len(),
        test_size: test_ds.len(),
        realized_anomaly_fraction: train_used.anomaly_fraction(),
        best_loss: report.best_loss,
        best_epoch: report.best_epoch,
        metrics,
        seen: None,
        unseen: None,
        checkpoint: format!("checkpoints/{}-{}.ckpt", cfg.id, cell),
    };
    Ok(CellOutcome {
        record,
        checkpoint,
        scores,
    })
}

/// Append a record to `results.jsonl` and write the cell checkpoint.
fn persist(cfg: &ExperimentConfig, outcome: &CellOutcome) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(cfg.out_dir.join("results.jsonl"))?;
    writeln!(f, "{}", serde_json::to_string(&outcome.record)?)?;
    save_checkpoint(
        &outcome.checkpoint,
        &cfg.out_dir.join(&outcome.record.checkpoint),
    )?;
    Ok(())
}

/// Load, split, train, score, and persist one experiment.
pub fn run_single(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let started = Instant::now();
    let inner = || -> Result<ResultRecord> {
        cfg.validate()?;
        let (train_ds, test_ds) = prepare_split(cfg)?;
        let outcome =
            train_and_eval(cfg, "single", cfg.seed, cfg.objective, &train_ds, &test_ds)?;
        persist(cfg, &outcome)?;
        Ok(outcome.record)
    };
    let record = inner().map_err(|e| e.in_experiment(&cfg.id))?;
    eprintln!(
        "[{}] single: {:.2}s (auroc {:.4})",
        cfg.id,
        started.elapsed().as_secs_f64(),
        record.metrics.auroc
    );
    Ok(record)
}

/// The class-rotation protocol: class 0 is the normal class, every other
/// class takes one turn as the known training anomaly, and each cell is
/// tested on all classes (every non-zero class counted anomalous) with
/// seen/unseen breakdowns.
pub fn run_rotation(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let inner = || -> Result<Vec<ResultRecord>> {
        cfg.validate()?;
        let data = load_classes(cfg)?;
        let classes = data.distinct_classes();
        if classes.len() < 3 {
            return Err(Error::Protocol(format!(
                "rotation needs at least 3 classes, got {}",
                classes.len()
            )));
        }
        if !classes.contains(&0) {
            return Err(Error::Protocol("class 0 (normal) is absent".into()));
        }

        let test_samples: Vec<Sample> = data
            .features
            .iter()
            .zip(&data.classes)
            .map(|(f, c)| Sample {
                features: f.clone(),
                label: u8::from(*c != 0),
            })
            .collect();
        let test_ds = Dataset::new(test_samples, "rotation-test")?;

        let mut records = Vec::new();
        for &k in classes.iter().filter(|&&k| k != 0) {
            let started = Instant::now();
            let train_idx: Vec<usize> = (0..data.len())
                .filter(|&i| data.classes[i] == 0 || data.classes[i] == k)
                .collect();
            // leakage check: no unseen-class sample may enter training
            assert!(
                train_idx.iter().all(|&i| {
                    let c = data.classes[i];
                    c == 0 || c == k
                }),
                "rotation cell {k} leaked an unseen class into training"
            );
            let train_samples: Vec<Sample> = train_idx
                .iter()
                .map(|&i| Sample {
                    features: data.features[i].clone(),
                    label: u8::from(data.classes[i] == k),
                })
                .collect();
            let train_ds = Dataset::new(train_samples, &format!("rotation-train-{k}"))?;

            let cell = format!("rot-class-{k}");
            let cell_seed = rotation_cell_seed(cfg.seed, k);
            let mut outcome =
                train_and_eval(cfg, &cell, cell_seed, cfg.objective, &train_ds, &test_ds)?;

            let subset_metrics = |keep: &dyn Fn(usize) -> bool| -> Result<MetricReport> {
                let mut scores = Vec::new();
                let mut labels = Vec::new();
                for i in 0..data.len() {
                    if keep(data.classes[i]) {
                        scores.push(outcome.scores[i]);
                        labels.push(u8::from(data.classes[i] != 0));
                    }
                }
                MetricReport::from_scored(&ScoredSet::new(scores, labels)?)
            };
            outcome.record.seen = Some(subset_metrics(&|c| c == 0 || c == k)?);
            outcome.record.unseen = Some(subset_metrics(&|c| c != k)?);

            persist(cfg, &outcome)?;
            eprintln!(
                "[{}] {}: {:.2}s (auroc {:.4}, unseen {:.4})",
                cfg.id,
                cell,
                started.elapsed().as_secs_f64(),
                outcome.record.metrics.auroc,
                outcome.record.unseen.as_ref().unwrap().auroc
            );
            records.push(outcome.record);
        }
        Ok(records)
    };
    inner().map_err(|e| e.in_experiment(&cfg.id))
}

/// Train one model per (proportion, objective) pair on anomaly-subsampled
/// training sets, comparing the radial objective against the BCE baseline
/// on a shared test split.
pub fn run_proportion_sweep(
    cfg: &ExperimentConfig,
    proportions: &[f64],
) -> Result<Vec<ResultRecord>> {
    let inner = || -> Result<Vec<ResultRecord>> {
        cfg.validate()?;
        if proportions.is_empty() {
            return Err(Error::Config("no proportions to sweep".into()));
        }
        let (train_ds, test_ds) = prepare_split(cfg)?;

        // fail on the first infeasible proportion before any training starts
        let n_norm = train_ds.count_label(0);
        let n_anom = train_ds.count_label(1);
        for &p in proportions {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("proportion {p} is not in (0, 1)")));
            }
            let required = (p * n_norm as f64 / (1.0 - p)).round() as usize;
            if required > n_anom {
                return Err(Error::Capacity {
                    requested: p,
                    max_achievable: n_anom as f64 / (n_anom + n_norm) as f64,
                });
            }
        }

        let mut records = Vec::new();
        for (i, &p) in proportions.iter().enumerate() {
            let cell_seed = sweep_cell_seed(cfg.seed, i);
            let sub = subsample_anomaly_proportion(&train_ds, p, cell_seed)?;
            for kind in [ObjectiveKind::Cedl, ObjectiveKind::Bce] {
                let started = Instant::now();
                let cell = format!("sweep-{i}-{}", kind.as_str());
                let outcome =
                    train_and_eval(cfg, &cell, cell_seed, kind, &sub, &test_ds)?;
                persist(cfg, &outcome)?;
                eprintln!(
                    "[{}] {} (p={p}): {:.2}s (aupr {:.4})",
                    cfg.id,
                    cell,
                    started.elapsed().as_secs_f64(),
                    outcome.record.metrics.aupr
                );
                records.push(outcome.record);
            }
        }
        Ok(records)
    };
    inner().map_err(|e| e.in_experiment(&cfg.id))
}

/// Write one CSV row per sample: label, the D latent coordinates, the raw
/// centre distance, and the probabilistic score. Row order follows the
/// dataset; re-exporting from the same checkpoint is byte-identical.
pub fn export_embeddings(ckpt: &Checkpoint, ds: &Dataset, out_path: &Path) -> Result<()> {
    if ds.feature_width() != ckpt.model.input_dim() {
        return Err(Error::Dimension(format!(
            "dataset width {} vs checkpoint input dim {}",
            ds.feature_width(),
            ckpt.model.input_dim()
        )));
    }
    let (reps, _) = forward(&ckpt.model, &ds.features_matrix())?;
    let d = ckpt.model.latent_dim();
    let scale = ckpt.objective.alpha / (d as f64).sqrt();

    let mut out = String::new();
    out.push_str("label");
    for j in 0..d {
        out.push_str(&format!(",r{j}"));
    }
    out.push_str(",distance,score\n");
    for (i, sample) in ds.samples().iter().enumerate() {
        let row = reps.row(i);
        let distance = l2_distance(row, &ckpt.objective.centre)?;
        out.push_str(&format!("{}", sample.label));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{distance},{}\n", stable_sigmoid(scale * distance)));
    }
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(out_path, out)?;
    Ok(())
}

/// Score a dataset with a saved checkpoint: the head probability for BCE
/// checkpoints, the centre distance otherwise.
pub fn eval_checkpoint(ckpt: &Checkpoint, ds: &Dataset) -> Result<MetricReport> {
    if ds.feature_width() != ckpt.model.input_dim() {
        return Err(Error::Dimension(format!(
            "dataset width {} vs checkpoint input dim {}",
            ds.feature_width(),
            ckpt.model.input_dim()
        )));
    }
    let batch = ds.features_matrix();
    let scores: Vec<f64> = match (&ckpt.head, ckpt.provenance.objective_kind) {
        (Some(head), ObjectiveKind::Bce) => {
            let (reps, _) = forward(&ckpt.model, &batch)?;
            let mut out = Vec::with_capacity(reps.rows());
            for i in 0..reps.rows() {
                out.push(stable_sigmoid(head.logit(reps.row(i))?));
            }
            out
        }
        _ => score(&ckpt.model, &ckpt.objective, &batch)?
            .into_iter()
            .map(|s| s.distance)
            .collect(),
    };
    MetricReport::from_scored(&ScoredSet::new(scores, ds.labels())?)
}

/// Resolve a data source string of the form `csv:PATH` or `svmlight:PATH`
/// into a loaded dataset (used by the checkpoint-facing CLI verbs).
pub fn load_dataset_arg(
    source: &str,
    label_column: Option<usize>,
    header: bool,
) -> Result<Dataset> {
    match source.split_once(':') {
        Some(("csv", path)) => load_csv(Path::new(path), label_column, header),
        Some(("svmlight", path)) => load_svmlight(Path::new(path)),
        _ => Err(Error::Config(format!(
            "data source must be 'csv:PATH' or 'svmlight:PATH', got '{source}'"
        ))),
    }
}

/// Output directory after applying the `CEDL_OUT_DIR` environment override.
pub fn resolve_out_dir(configured: &Path) -> PathBuf {
    match std::env::var_os("CEDL_OUT_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured.to_path_buf(),
    }
}
