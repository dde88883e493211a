//! Dataset ingestion, splitting, time-series windowing, standardization,
//! anomaly-proportion subsampling, and synthetic generators.
//!
//! File formats:
//! * CSV — comma-separated decimal reals, optional single header line,
//!   binary label column (default: last).
//! * SVMLight — `label( idx:val)*` lines with 1-based ascending indices;
//!   labels in {-1, 0} map to normal, {1, +1} to anomalous; densified to
//!   the corpus-wide maximum index.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{stream, Matrix, SeededRng};

/// One labelled feature record: label 0 = normal, 1 = anomaly.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: u8,
}

/// An ordered collection of samples with uniform feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    feature_width: usize,
    provenance: String,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, provenance: &str) -> Result<Dataset> {
        if samples.is_empty() {
            return Err(Error::InsufficientData("dataset has no samples".into()));
        }
        let feature_width = samples[0].features.len();
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_width {
                return Err(Error::Dimension(format!(
                    "sample {i} has width {}, expected {feature_width}",
                    s.features.len()
                )));
            }
            if s.label > 1 {
                return Err(Error::Label(s.label));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("sample {i} has a non-finite feature")));
            }
        }
        Ok(Dataset {
            samples,
            feature_width,
            provenance: provenance.to_string(),
        })
    }

    /// Build without the non-empty check; splits at extreme fractions may
    /// legitimately produce an empty side.
    fn from_parts(samples: Vec<Sample>, feature_width: usize, provenance: &str) -> Dataset {
        Dataset {
            samples,
            feature_width,
            provenance: provenance.to_string(),
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Fraction of anomalous samples.
    pub fn anomaly_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.count_label(1) as f64 / self.len() as f64
    }

    /// All features as a matrix (one sample per row).
    pub fn features_matrix(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self.samples.iter().map(|s| s.features.clone()).collect();
        Matrix::from_rows(&rows).expect("uniform width by construction")
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Gather the samples at `idx` into a batch matrix plus labels.
    pub fn batch(&self, idx: &[usize]) -> (Matrix, Vec<u8>) {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| self.samples[i].features.clone()).collect();
        let labels = idx.iter().map(|&i| self.samples[i].label).collect();
        (Matrix::from_rows(&rows).expect("uniform width"), labels)
    }

    /// Keep only the samples at the given (sorted or unsorted) indices,
    /// preserving dataset order.
    pub fn subset(&self, idx: &[usize], provenance: &str) -> Dataset {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        let samples = sorted.iter().map(|&i| self.samples[i].clone()).collect();
        Dataset::from_parts(samples, self.feature_width, provenance)
    }
}

fn parse_cell(path: &str, line: usize, col: usize, cell: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Format {
        path: path.to_string(),
        line,
        msg: format!("column {col}: cannot parse '{}' as a real number", cell.trim()),
    })
}

/// Load a CSV file of real-valued features plus a binary label column.
///
/// `label_column` is zero-based; `None` selects the last column.
pub fn load_csv(path: &Path, label_column: Option<usize>, header: bool) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let path_s = path.display().to_string();
    let mut samples = Vec::new();
    let mut width: Option<usize> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if header && lineno == 0 {
            continue;
        }
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        let label_idx = label_column.unwrap_or(cells.len() - 1);
        if label_idx >= cells.len() {
            return Err(Error::Format {
                path: path_s,
                line,
                msg: format!(
                    "label column {label_idx} out of range for {} columns",
                    cells.len()
                ),
            });
        }
        let mut features = Vec::with_capacity(cells.len() - 1);
        let mut label = 0u8;
        for (col, cell) in cells.iter().enumerate() {
            let v = parse_cell(&path_s, line, col + 1, cell)?;
            if col == label_idx {
                label = match v {
                    v if v == 0.0 => 0,
                    v if v == 1.0 => 1,
                    _ => {
                        return Err(Error::Format {
                            path: path_s,
                            line,
                            msg: format!("label column {}: '{v}' is not 0 or 1", col + 1),
                        })
                    }
                };
            } else {
                features.push(v);
            }
        }
        match width {
            None => width = Some(features.len()),
            Some(w) if w != features.len() => {
                return Err(Error::Format {
                    path: path_s,
                    line,
                    msg: format!("row has {} feature columns, expected {w}", features.len()),
                })
            }
            _ => {}
        }
        samples.push(Sample { features, label });
    }
    Dataset::new(samples, &format!("csv:{path_s}"))
}

/// Write a dataset as CSV (features, then label last). Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for s in ds.samples() {
        let mut cells: Vec<String> = s.features.iter().map(|v| format!("{v}")).collect();
        cells.push(format!("{}", s.label));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Load an SVMLight file, densifying sparse rows to the corpus maximum index.
pub fn load_svmlight(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let path_s = path.display().to_string();
    let mut rows: Vec<(u8, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut tokens = raw.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label_val: f64 = label_tok.parse().map_err(|_| Error::Format {
            path: path_s.clone(),
            line,
            msg: format!("cannot parse label '{label_tok}'"),
        })?;
        let label = match label_val {
            v if v == -1.0 || v == 0.0 => 0u8,
            v if v == 1.0 => 1u8,
            _ => {
                return Err(Error::Format {
                    path: path_s,
                    line,
                    msg: format!("label '{label_tok}' is not in {{-1, 0, 1, +1}}"),
                })
            }
        };
        let mut pairs = Vec::new();
        let mut last_index = 0usize;
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Format {
                path: path_s.clone(),
                line,
                msg: format!("malformed feature pair '{tok}'"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| Error::Format {
                path: path_s.clone(),
                line,
                msg: format!("bad feature index '{idx_s}'"),
            })?;
            if idx == 0 {
                return Err(Error::Format {
                    path: path_s,
                    line,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if idx <= last_index {
                return Err(Error::Format {
                    path: path_s,
                    line,
                    msg: format!("feature index {idx} is not ascending"),
                });
            }
            let val: f64 = val_s.parse().map_err(|_| Error::Format {
                path: path_s.clone(),
                line,
                msg: format!("bad feature value '{val_s}'"),
            })?;
            last_index = idx;
            max_index = max_index.max(idx);
            pairs.push((idx, val));
        }
        rows.push((label, pairs));
    }

    let samples = rows
        .into_iter()
        .map(|(label, pairs)| {
            let mut features = vec![0.0; max_index];
            for (idx, val) in pairs {
                features[idx - 1] = val;
            }
            Sample { features, label }
        })
        .collect();
    Dataset::new(samples, &format!("svmlight:{path_s}"))
}

/// Stratified train/test split: per class, `round(fraction * count)` samples
/// go to train, selected by a seeded shuffle; both outputs preserve the
/// original sample order. Shuffle stream: `(SHUFFLE, 0)` under `seed`.
pub fn stratified_split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::Spec(format!(
            "train fraction must be in (0, 1], got {train_fraction}"
        )));
    }
    let n0 = ds.count_label(0);
    let n1 = ds.count_label(1);
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateSplit(format!(
            "stratified split needs both classes, got {n0} normal / {n1} anomalous"
        )));
    }
    let mut rng = SeededRng::stream(seed, stream::SHUFFLE, 0);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for label in [0u8, 1u8] {
        let mut class_idx: Vec<usize> = ds
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        rng.shuffle(&mut class_idx);
        let k = (train_fraction * class_idx.len() as f64).round() as usize;
        let k = k.min(class_idx.len());
        train_idx.extend_from_slice(&class_idx[..k]);
        test_idx.extend_from_slice(&class_idx[k..]);
    }
    let src = ds.provenance();
    Ok((
        ds.subset(&train_idx, &format!("{src}|train")),
        ds.subset(&test_idx, &format!("{src}|test")),
    ))
}

/// Keep all normals plus a seeded-random selection of anomalies so that
/// anomalies form fraction `p` of the result. Sampling stream:
/// `(SAMPLING, 0)` under `seed`. Output preserves original order.
pub fn subsample_anomaly_proportion(train: &Dataset, p: f64, seed: u64) -> Result<Dataset> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Spec(format!("proportion must be in (0, 1), got {p}")));
    }
    let normals: Vec<usize> = (0..train.len())
        .filter(|&i| train.samples()[i].label == 0)
        .collect();
    let mut anomalies: Vec<usize> = (0..train.len())
        .filter(|&i| train.samples()[i].label == 1)
        .collect();
    let n_norm = normals.len();
    let required = (p * n_norm as f64 / (1.0 - p)).round() as usize;
    if required > anomalies.len() {
        let max_achievable = anomalies.len() as f64 / (anomalies.len() + n_norm) as f64;
        return Err(Error::Capacity {
            requested: p,
            max_achievable,
        });
    }
    let mut rng = SeededRng::stream(seed, stream::SAMPLING, 0);
    rng.shuffle(&mut anomalies);
    let mut keep = normals;
    keep.extend_from_slice(&anomalies[..required]);
    Ok(train.subset(&keep, &format!("{}|p={p}", train.provenance())))
}

/// Multivariate time series with one binary label per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSeries {
    /// T rows of C channel values.
    pub values: Vec<Vec<f64>>,
    /// One label per timestep.
    pub labels: Vec<u8>,
}

impl LabelledSeries {
    pub fn new(values: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<LabelledSeries> {
        if values.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} timesteps vs {} labels",
                values.len(),
                labels.len()
            )));
        }
        let c = values.first().map_or(0, |r| r.len());
        if values.iter().any(|r| r.len() != c) {
            return Err(Error::Dimension("ragged channel widths".into()));
        }
        Ok(LabelledSeries { values, labels })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.values.first().map_or(0, |r| r.len())
    }
}

/// Split a series into leading train and trailing test segments without
/// shuffling: the first `floor(fraction * T)` timesteps go to train.
pub fn chronological_split(
    series: &LabelledSeries,
    fraction: f64,
) -> Result<(LabelledSeries, LabelledSeries)> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "chronological split needs at least 2 timesteps, got {}",
            series.len()
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Spec(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let cut = (fraction * series.len() as f64).floor() as usize;
    Ok((
        LabelledSeries {
            values: series.values[..cut].to_vec(),
            labels: series.labels[..cut].to_vec(),
        },
        LabelledSeries {
            values: series.values[cut..].to_vec(),
            labels: series.labels[cut..].to_vec(),
        },
    ))
}

/// Per-channel mean and standard deviation, computed once on the training
/// segment and applied to every segment. A zero-variance channel gets
/// stdev 1 so standardization stays defined.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub means: Vec<f64>,
    pub stdevs: Vec<f64>,
}

impl ChannelStats {
    pub fn from_series(series: &LabelledSeries) -> Result<ChannelStats> {
        if series.is_empty() {
            return Err(Error::InsufficientData("empty series".into()));
        }
        let c = series.channels();
        let t = series.len() as f64;
        let mut means = vec![0.0; c];
        for row in &series.values {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= t;
        }
        let mut stdevs = vec![0.0; c];
        for row in &series.values {
            for ((s, v), m) in stdevs.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut stdevs {
            *s = (*s / t).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Ok(ChannelStats { means, stdevs })
    }
}

/// How window features are standardized.
#[derive(Debug, Clone, PartialEq)]
pub enum Standardize {
    /// Use fixed per-channel statistics from the training segment
    /// (leakage-free default).
    TrainStats(ChannelStats),
    /// Z-score each window with its own per-channel statistics.
    PerWindow,
}

/// Sliding-window extraction parameters. A window is anomalous iff any
/// covered timestep is anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesWindowSpec {
    pub window_length: usize,
    pub stride: usize,
}

impl Default for SeriesWindowSpec {
    fn default() -> SeriesWindowSpec {
        SeriesWindowSpec {
            window_length: 100,
            stride: 1,
        }
    }
}

/// Slice a labelled series into overlapping standardized windows, flattened
/// timestep-major to width `window_length * channels`.
pub fn window_series(
    series: &LabelledSeries,
    spec: &SeriesWindowSpec,
    standardize: &Standardize,
) -> Result<Dataset> {
    if spec.window_length == 0 || spec.stride == 0 {
        return Err(Error::Spec("window length and stride must be >= 1".into()));
    }
    if series.len() < spec.window_length {
        return Err(Error::InsufficientData(format!(
            "series of length {} is shorter than window {}",
            series.len(),
            spec.window_length
        )));
    }
    if let Standardize::TrainStats(stats) = standardize {
        if stats.means.len() != series.channels() {
            return Err(Error::Dimension(format!(
                "stats cover {} channels, series has {}",
                stats.means.len(),
                series.channels()
            )));
        }
    }
    let c = series.channels();
    let count = (series.len() - spec.window_length) / spec.stride + 1;
    let mut samples = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * spec.stride;
        let end = start + spec.window_length;
        let rows = &series.values[start..end];
        let window_stats;
        let stats = match standardize {
            Standardize::TrainStats(s) => s,
            Standardize::PerWindow => {
                let sub = LabelledSeries {
                    values: rows.to_vec(),
                    labels: vec![0; rows.len()],
                };
                window_stats = ChannelStats::from_series(&sub)?;
                &window_stats
            }
        };
        let mut features = Vec::with_capacity(spec.window_length * c);
        for row in rows {
            for j in 0..c {
                features.push((row[j] - stats.means[j]) / stats.stdevs[j]);
            }
        }
        let label = u8::from(series.labels[start..end].iter().any(|l| *l == 1));
        samples.push(Sample { features, label });
    }
    Dataset::new(samples, "series-windows")
}

/// One isotropic Gaussian blob of labelled points.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub mean: Vec<f64>,
    pub stdev: f64,
    pub count: usize,
    pub label: u8,
}

/// Draw labelled Gaussian clusters; sample order is spec order then draw
/// index. Sampling stream: `(SAMPLING, 0)` under `seed`.
pub fn gen_gaussian_clusters(specs: &[ClusterSpec], seed: u64) -> Result<Dataset> {
    let dim = specs
        .first()
        .map(|s| s.mean.len())
        .ok_or_else(|| Error::Spec("no cluster specs".into()))?;
    for (k, s) in specs.iter().enumerate() {
        if s.mean.len() != dim {
            return Err(Error::Spec(format!(
                "cluster {k} has dim {}, expected {dim}",
                s.mean.len()
            )));
        }
        if !(s.stdev > 0.0) {
            return Err(Error::Spec(format!("cluster {k} stdev must be > 0")));
        }
        if s.label > 1 {
            return Err(Error::Label(s.label));
        }
    }
    let mut rng = SeededRng::stream(seed, stream::SAMPLING, 0);
    let mut samples = Vec::new();
    for s in specs {
        for _ in 0..s.count {
            let features = s.mean.iter().map(|m| m + s.stdev * rng.normal()).collect();
            samples.push(Sample {
                features,
                label: s.label,
            });
        }
    }
    Dataset::new(samples, "synthetic-gaussian")
}

/// An additive spike on every channel at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Spike {
    pub position: usize,
    pub magnitude: f64,
}

/// Gaussian-noise baseline series with additive spikes; spike timesteps are
/// labelled anomalous. Sampling stream: `(SAMPLING, 0)` under `seed`.
pub fn gen_spike_series(
    length: usize,
    channels: usize,
    spikes: &[Spike],
    noise_stdev: f64,
    seed: u64,
) -> Result<LabelledSeries> {
    if length == 0 || channels == 0 {
        return Err(Error::Spec("length and channels must be >= 1".into()));
    }
    if !(noise_stdev >= 0.0) {
        return Err(Error::Spec("noise stdev must be >= 0".into()));
    }
    for s in spikes {
        if s.position >= length {
            return Err(Error::Spec(format!(
                "spike position {} out of range for length {length}",
                s.position
            )));
        }
    }
    let mut rng = SeededRng::stream(seed, stream::SAMPLING, 0);
    let mut values: Vec<Vec<f64>> = (0..length)
        .map(|_| (0..channels).map(|_| noise_stdev * rng.normal()).collect())
        .collect();
    let mut labels = vec![0u8; length];
    for s in spikes {
        for v in &mut values[s.position] {
            *v += s.magnitude;
        }
        labels[s.position] = 1;
    }
    LabelledSeries::new(values, labels)
}

/// Feature records carrying their original multi-class labels, as required
/// by the class-rotation protocol. Class 0 is the normal class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLabelledDataset {
    pub features: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
    pub feature_width: usize,
}

impl ClassLabelledDataset {
    pub fn new(features: Vec<Vec<f64>>, classes: Vec<usize>) -> Result<ClassLabelledDataset> {
        if features.is_empty() {
            return Err(Error::InsufficientData("no samples".into()));
        }
        if features.len() != classes.len() {
            return Err(Error::Shape(format!(
                "{} samples vs {} class labels",
                features.len(),
                classes.len()
            )));
        }
        let feature_width = features[0].len();
        if features.iter().any(|f| f.len() != feature_width) {
            return Err(Error::Dimension("ragged feature widths".into()));
        }
        Ok(ClassLabelledDataset {
            features,
            classes,
            feature_width,
        })
    }

    /// Load a CSV whose class column holds non-negative integers.
    pub fn from_csv(path: &Path, class_column: Option<usize>, header: bool) -> Result<ClassLabelledDataset> {
        let text = fs::read_to_string(path)?;
        let path_s = path.display().to_string();
        let mut features = Vec::new();
        let mut classes = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            if header && lineno == 0 {
                continue;
            }
            if raw.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = raw.split(',').collect();
            let class_idx = class_column.unwrap_or(cells.len() - 1);
            if class_idx >= cells.len() {
                return Err(Error::Format {
                    path: path_s,
                    line,
                    msg: format!("class column {class_idx} out of range"),
                });
            }
            let mut row = Vec::with_capacity(cells.len() - 1);
            let mut class = 0usize;
            for (col, cell) in cells.iter().enumerate() {
                if col == class_idx {
                    class = cell.trim().parse().map_err(|_| Error::Format {
                        path: path_s.clone(),
                        line,
                        msg: format!("column {}: bad class '{}'", col + 1, cell.trim()),
                    })?;
                } else {
                    row.push(parse_cell(&path_s, line, col + 1, cell)?);
                }
            }
            features.push(row);
            classes.push(class);
        }
        ClassLabelledDataset::new(features, classes)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Distinct classes in ascending order.
    pub fn distinct_classes(&self) -> Vec<usize> {
        let mut cs = self.classes.clone();
        cs.sort_unstable();
        cs.dedup();
        cs
    }
}

/// Gaussian blobs with multi-class labels, for rotation-protocol runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassClusterSpec {
    pub mean: Vec<f64>,
    pub stdev: f64,
    pub count: usize,
    pub class: usize,
}

/// Draw class-labelled Gaussian clusters; sample order is spec order then
/// draw index. Sampling stream: `(SAMPLING, 0)` under `seed`.
pub fn gen_class_clusters(specs: &[ClassClusterSpec], seed: u64) -> Result<ClassLabelledDataset> {
    let dim = specs
        .first()
        .map(|s| s.mean.len())
        .ok_or_else(|| Error::Spec("no cluster specs".into()))?;
    for (k, s) in specs.iter().enumerate() {
        if s.mean.len() != dim {
            return Err(Error::Spec(format!("cluster {k} has dim {}", s.mean.len())));
        }
        if !(s.stdev > 0.0) {
            return Err(Error::Spec(format!("cluster {k} stdev must be > 0")));
        }
    }
    let mut rng = SeededRng::stream(seed, stream::SAMPLING, 0);
    let mut features = Vec::new();
    let mut classes = Vec::new();
    for s in specs {
        for _ in 0..s.count {
            features.push(s.mean.iter().map(|m| m + s.stdev * rng.normal()).collect());
            classes.push(s.class);
        }
    }
    ClassLabelledDataset::new(features, classes)
}
