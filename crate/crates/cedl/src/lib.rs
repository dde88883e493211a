//! Centre-enhanced discriminative learning for supervised anomaly detection.
//!
//! This crate trains a dense encoder so that normal samples collapse toward
//! a centre in latent space while labelled anomalies are pushed outward. The
//! trick is a radial reparameterisation of binary cross-entropy: instead of
//! a linear logit, the loss uses `a = (alpha / sqrt(D)) * ||r - c||`, so the
//! gradient on every representation points along the radial axis and the
//! anomaly probability `sigmoid(a)` is a monotone function of the distance
//! to the centre. Scoring at inference is plain Euclidean distance — no
//! post-hoc calibration or thresholding step.
//!
//! The pieces:
//!
//! * [`numerics`] — stable nonlinearities, a deterministic in-repo RNG, and
//!   the finite-difference oracle used to validate every analytic gradient.
//! * [`encoder`] — a dense MLP with explicit forward caching and exact
//!   backpropagation.
//! * [`objective`] — the radial loss, its gradients, class weighting, and
//!   the baseline heads (plain BCE, hypersphere compactness, attract/repel).
//! * [`optimizer`] — bias-corrected Adam and plain SGD on flat slices.
//! * [`data`] — CSV/SVMLight loaders, stratified and chronological splits,
//!   sliding windows, subsampling, and synthetic generators.
//! * [`trainer`] — the mini-batch loop with best-loss checkpointing.
//! * [`eval`] — distance/probability scoring, AUROC, average precision,
//!   best F1.
//! * [`bench`] — experiment configs, protocol runners (single runs, class
//!   rotation, anomaly-proportion sweeps), checkpoint files, result
//!   records, and embedding export.
//!
//! Determinism is a design constraint throughout: every stochastic choice
//! flows from an explicit seed through [`numerics::SeededRng`], so a
//! (config, seed) pair fixes every emitted byte.
//!
//! # Example
//!
//! Train on a small synthetic problem and score a held-out split:
//!
//! ```
//! use cedl::data::{gen_gaussian_clusters, stratified_split, ClusterSpec};
//! use cedl::encoder::{init_encoder, Activation, LayerSpec};
//! use cedl::eval::{score, MetricReport, ScoredSet};
//! use cedl::numerics::{stream, SeededRng};
//! use cedl::objective::ObjectiveConfig;
//! use cedl::trainer::{train, ObjectiveKind, TrainConfig};
//!
//! # fn main() -> cedl::Result<()> {
//! let ds = gen_gaussian_clusters(
//!     &[
//!         ClusterSpec { mean: vec![0.0, 0.0], stdev: 0.3, count: 200, label: 0 },
//!         ClusterSpec { mean: vec![4.0, 0.0], stdev: 0.3, count: 40, label: 1 },
//!     ],
//!     7,
//! )?;
//! let (train_ds, test_ds) = stratified_split(&ds, 0.6, 42)?;
//!
//! let specs = vec![
//!     LayerSpec::new(2, 16, Activation::Relu),
//!     LayerSpec::new(16, 2, Activation::Tanh),
//! ];
//! let mut rng = SeededRng::stream(42, stream::INIT, 0);
//! let model = init_encoder(&specs, &mut rng)?;
//!
//! let cfg = TrainConfig {
//!     epochs: 50,
//!     batch_size: 32,
//!     learning_rate: 0.01,
//!     seed: 42,
//!     objective: ObjectiveKind::Cedl,
//!     objective_cfg: ObjectiveConfig::at_origin(2),
//!     shuffle: true,
//! };
//! let report = train(&train_ds, &model, &cfg)?;
//!
//! let scores = score(&report.model, &report.objective_cfg, &test_ds.features_matrix())?;
//! let scored = ScoredSet::new(
//!     scores.iter().map(|s| s.distance).collect(),
//!     test_ds.labels(),
//! )?;
//! let metrics = MetricReport::from_scored(&scored)?;
//! assert!(metrics.auroc > 0.9);
//! # Ok(())
//! # }
//! ```
//!
//! The `examples/` directory exercises every major capability end to end;
//! the `cedl-bench` binary drives the same runners from the command line.

pub mod bench;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod objective;
pub mod optimizer;
pub mod trainer;

pub use error::{Error, Result};
