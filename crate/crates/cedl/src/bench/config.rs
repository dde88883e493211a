//! Experiment configuration: typed config, the flat `key = value` file
//! format, and a digest that is stable under key reordering.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ClassClusterSpec, ClusterSpec, Spike};
use crate::encoder::{Activation, LayerSpec};
use crate::error::{Error, Result};
use crate::objective::CentreMode;
use crate::trainer::ObjectiveKind;

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        label_column: Option<usize>,
        header: bool,
    },
    Svmlight {
        path: PathBuf,
    },
    Synthetic(SyntheticSpec),
}

/// Synthetic generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticSpec {
    /// Isotropic Gaussian blobs. `group` is the binary label under the
    /// tabular modality and the class index under the classes modality.
    Clusters {
        seed: u64,
        clusters: Vec<ClusterConfig>,
    },
    /// Noise series with additive labelled spikes.
    Spikes {
        seed: u64,
        length: usize,
        channels: usize,
        noise_stdev: f64,
        spikes: Vec<SpikeConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub mean: Vec<f64>,
    pub stdev: f64,
    pub count: usize,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeConfig {
    pub position: usize,
    pub magnitude: f64,
}

/// How the raw source is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    /// Feature rows with binary labels; stratified split.
    Tabular,
    /// Timestep rows; chronological split then sliding windows.
    Series,
    /// Feature rows with multi-class labels; rotation protocol only.
    LabelledClasses,
}

/// Encoder shape: hidden widths with one activation, then a projection to
/// the latent dimension with its own (usually bounding) activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl EncoderConfig {
    pub fn layer_specs(&self, input_dim: usize) -> Result<Vec<LayerSpec>> {
        if input_dim == 0 {
            return Err(Error::Spec("input dimension is zero".into()));
        }
        let mut specs = Vec::new();
        let mut prev = input_dim;
        for &h in &self.hidden {
            specs.push(LayerSpec::new(prev, h, self.hidden_activation));
            prev = h;
        }
        specs.push(LayerSpec::new(prev, self.latent, self.output_activation));
        Ok(specs)
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub modality: Modality,
    pub source: DataSource,
    pub encoder: EncoderConfig,
    pub objective: ObjectiveKind,
    pub alpha: f64,
    pub centre_mode: CentreMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Stratified train fraction (tabular) or chronological cut (series).
    pub train_fraction: f64,
    pub window_length: usize,
    pub stride: usize,
    /// Z-score each window with its own statistics instead of the training
    /// segment's.
    pub per_window_standardize: bool,
    /// Anomaly proportions visited by the sweep protocol.
    pub proportions: Vec<f64>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Tabular benchmark defaults: hidden 1000/256/64 with relu, tanh output
    /// to a 32-dim latent, Adam at 1e-4, batch 64, 100 epochs, seed 42,
    /// stratified 60/40 split.
    pub fn tabular_defaults(id: &str, source: DataSource) -> ExperimentConfig {
        ExperimentConfig {
            id: id.to_string(),
            modality: Modality::Tabular,
            source,
            encoder: EncoderConfig {
                hidden: vec![1000, 256, 64],
                latent: 32,
                hidden_activation: Activation::Relu,
                output_activation: Activation::Tanh,
            },
            objective: ObjectiveKind::Cedl,
            alpha: 1.0,
            centre_mode: CentreMode::Fixed,
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-4,
            seed: 42,
            shuffle: true,
            train_fraction: 0.6,
            window_length: 100,
            stride: 1,
            per_window_standardize: false,
            proportions: vec![0.01, 0.05, 0.10, 0.15, 0.20],
            out_dir: PathBuf::from("runs"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Config("experiment id is empty".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.encoder.latent == 0 {
            return Err(Error::Config("latent dimension must be >= 1".into()));
        }
        match &self.source {
            DataSource::Csv { path, .. } | DataSource::Svmlight { path } => {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "dataset file '{}' does not exist",
                        path.display()
                    )));
                }
            }
            DataSource::Synthetic(_) => {}
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical (sorted-key) JSON form, with the output
    /// directory blanked so relocating results does not change identity.
    pub fn digest(&self) -> String {
        let mut copy = self.clone();
        copy.out_dir = PathBuf::new();
        let value = serde_json::to_value(&copy).expect("config serializes");
        let canonical = canonical_json(&value);
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Render a JSON value with object keys sorted, independent of insertion
/// order.
fn canonical_json(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let inner: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", serde_json::to_string(k).unwrap(), canonical_json(&map[*k])))
                .collect();
            format!("{{{}}}", inner.join(","))
        }
        serde_json::Value::Array(xs) => {
            let inner: Vec<String> = xs.iter().map(canonical_json).collect();
            format!("[{}]", inner.join(","))
        }
        other => other.to_string(),
    }
}

/// Parse a flat `key = value` file ('#' starts a comment) into a map.
pub fn parse_kv_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    parse_kv_text(&text, &path.display().to_string())
}

pub fn parse_kv_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
            path: origin.to_string(),
            line: lineno + 1,
            msg: "expected 'key = value'".into(),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Config(format!("cannot parse '{key} = {raw}'"))),
    }
}

fn parse_bool(map: &BTreeMap<String, String>, key: &str) -> Result<Option<bool>> {
    match map.get(key).map(|s| s.as_str()) {
        None => Ok(None),
        Some("true") | Some("1") => Ok(Some(true)),
        Some("false") | Some("0") => Ok(Some(false)),
        Some(other) => Err(Error::Config(format!("'{key}' must be true or false, got '{other}'"))),
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, key: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::Config(format!("cannot parse element '{s}' of '{key}'")))
        })
        .collect()
}

fn parse_synthetic(map: &BTreeMap<String, String>) -> Result<SyntheticSpec> {
    let kind = map
        .get("synthetic.kind")
        .ok_or_else(|| Error::Config("synthetic source needs 'synthetic.kind'".into()))?;
    let seed = parse_field::<u64>(map, "synthetic.seed")?
        .or(parse_field::<u64>(map, "seed")?)
        .unwrap_or(42);
    match kind.as_str() {
        "clusters" => {
            let mut clusters = Vec::new();
            for i in 0.. {
                let key = format!("synthetic.cluster.{i}");
                let Some(raw) = map.get(&key) else { break };
                let parts: Vec<&str> = raw.split('|').map(|s| s.trim()).collect();
                if parts.len() != 4 {
                    return Err(Error::Config(format!(
                        "'{key}' needs 'mean | stdev | count | group'"
                    )));
                }
                clusters.push(ClusterConfig {
                    mean: parse_list(parts[0], &key)?,
                    stdev: parts[1]
                        .parse()
                        .map_err(|_| Error::Config(format!("bad stdev in '{key}'")))?,
                    count: parts[2]
                        .parse()
                        .map_err(|_| Error::Config(format!("bad count in '{key}'")))?,
                    group: parts[3]
                        .parse()
                        .map_err(|_| Error::Config(format!("bad group in '{key}'")))?,
                });
            }
            if clusters.is_empty() {
                return Err(Error::Config(
                    "clusters source needs at least 'synthetic.cluster.0'".into(),
                ));
            }
            Ok(SyntheticSpec::Clusters { seed, clusters })
        }
        "spikes" => {
            let mut spikes = Vec::new();
            for i in 0.. {
                let key = format!("synthetic.spike.{i}");
                let Some(raw) = map.get(&key) else { break };
                let parts: Vec<&str> = raw.split('|').map(|s| s.trim()).collect();
                if parts.len() != 2 {
                    return Err(Error::Config(format!(
                        "'{key}' needs 'position | magnitude'"
                    )));
                }
                spikes.push(SpikeConfig {
                    position: parts[0]
                        .parse()
                        .map_err(|_| Error::Config(format!("bad position in '{key}'")))?,
                    magnitude: parts[1]
                        .parse()
                        .map_err(|_| Error::Config(format!("bad magnitude in '{key}'")))?,
                });
            }
            Ok(SyntheticSpec::Spikes {
                seed,
                length: parse_field(map, "synthetic.length")?
                    .ok_or_else(|| Error::Config("spikes source needs 'synthetic.length'".into()))?,
                channels: parse_field(map, "synthetic.channels")?.unwrap_or(1),
                noise_stdev: parse_field(map, "synthetic.noise")?.unwrap_or(0.1),
                spikes,
            })
        }
        other => Err(Error::Config(format!("unknown synthetic kind '{other}'"))),
    }
}

impl ExperimentConfig {
    /// Build a config from a flat key map; unset keys take the tabular
    /// defaults. Documented keys are listed in the project README.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
        let source = match map.get("source").map(|s| s.as_str()) {
            Some("synthetic") => DataSource::Synthetic(parse_synthetic(map)?),
            Some(raw) => {
                let (kind, path) = raw.split_once(':').ok_or_else(|| {
                    Error::Config(format!(
                        "source must be 'csv:PATH', 'svmlight:PATH' or 'synthetic', got '{raw}'"
                    ))
                })?;
                match kind {
                    "csv" => DataSource::Csv {
                        path: PathBuf::from(path),
                        label_column: match map.get("label_column").map(|s| s.as_str()) {
                            None | Some("last") => None,
                            Some(idx) => Some(idx.parse().map_err(|_| {
                                Error::Config(format!("bad label_column '{idx}'"))
                            })?),
                        },
                        header: parse_bool(map, "header")?.unwrap_or(false),
                    },
                    "svmlight" => DataSource::Svmlight {
                        path: PathBuf::from(path),
                    },
                    other => {
                        return Err(Error::Config(format!("unknown source kind '{other}'")))
                    }
                }
            }
            None => return Err(Error::Config("missing 'source'".into())),
        };

        let mut cfg = ExperimentConfig::tabular_defaults(
            map.get("id").map(|s| s.as_str()).unwrap_or("experiment"),
            source,
        );

        if let Some(m) = map.get("modality") {
            cfg.modality = match m.as_str() {
                "tabular" => Modality::Tabular,
                "series" => Modality::Series,
                "classes" => Modality::LabelledClasses,
                other => return Err(Error::Config(format!("unknown modality '{other}'"))),
            };
        }
        if let Some(raw) = map.get("hidden") {
            cfg.encoder.hidden = parse_list(raw, "hidden")?;
        }
        if let Some(v) = parse_field(map, "latent")? {
            cfg.encoder.latent = v;
        }
        if let Some(a) = parse_field(map, "hidden_activation")? {
            cfg.encoder.hidden_activation = a;
        }
        if let Some(a) = parse_field(map, "output_activation")? {
            cfg.encoder.output_activation = a;
        }
        if let Some(o) = parse_field(map, "objective")? {
            cfg.objective = o;
        }
        if let Some(v) = parse_field(map, "alpha")? {
            cfg.alpha = v;
        }
        if let Some(m) = map.get("centre_mode") {
            cfg.centre_mode = match m.as_str() {
                "fixed" => CentreMode::Fixed,
                "learnable" => CentreMode::Learnable,
                other => return Err(Error::Config(format!("unknown centre mode '{other}'"))),
            };
        }
        if let Some(v) = parse_field(map, "epochs")? {
            cfg.epochs = v;
        }
        if let Some(v) = parse_field(map, "batch")? {
            cfg.batch_size = v;
        }
        if let Some(v) = parse_field(map, "lr")? {
            cfg.learning_rate = v;
        }
        if let Some(v) = parse_field(map, "seed")? {
            cfg.seed = v;
        }
        if let Some(v) = parse_bool(map, "shuffle")? {
            cfg.shuffle = v;
        }
        if let Some(v) = parse_field(map, "train_fraction")? {
            cfg.train_fraction = v;
        }
        if let Some(v) = parse_field(map, "window_length")? {
            cfg.window_length = v;
        }
        if let Some(v) = parse_field(map, "stride")? {
            cfg.stride = v;
        }
        if let Some(m) = map.get("standardize") {
            cfg.per_window_standardize = match m.as_str() {
                "train" => false,
                "window" => true,
                other => {
                    return Err(Error::Config(format!(
                        "standardize must be 'train' or 'window', got '{other}'"
                    )))
                }
            };
        }
        if let Some(raw) = map.get("proportions") {
            cfg.proportions = parse_list(raw, "proportions")?;
        }
        if let Some(dir) = map.get("out_dir") {
            cfg.out_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }
}

/// Binary-label cluster specs from the config form (tabular modality).
pub fn binary_clusters(clusters: &[ClusterConfig]) -> Result<Vec<ClusterSpec>> {
    clusters
        .iter()
        .map(|c| {
            if c.group > 1 {
                return Err(Error::Config(format!(
                    "cluster group {} is not a binary label; use the classes modality",
                    c.group
                )));
            }
            Ok(ClusterSpec {
                mean: c.mean.clone(),
                stdev: c.stdev,
                count: c.count,
                label: c.group as u8,
            })
        })
        .collect()
}

/// Class-labelled cluster specs from the config form (classes modality).
pub fn class_clusters(clusters: &[ClusterConfig]) -> Vec<ClassClusterSpec> {
    clusters
        .iter()
        .map(|c| ClassClusterSpec {
            mean: c.mean.clone(),
            stdev: c.stdev,
            count: c.count,
            class: c.group,
        })
        .collect()
}

/// Spike structs from the config form.
pub fn spike_list(spikes: &[SpikeConfig]) -> Vec<Spike> {
    spikes
        .iter()
        .map(|s| Spike {
            position: s.position,
            magnitude: s.magnitude,
        })
        .collect()
}
