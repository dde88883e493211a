//! Experiment orchestration: configuration, protocol runners, checkpoint
//! files, result records, and embedding export.

pub mod checkpoint;
pub mod config;
pub mod run;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, OptimizerInfo, Provenance,
    CHECKPOINT_MAGIC,
};
pub use config::{
    parse_kv_file, parse_kv_text, ClusterConfig, DataSource, EncoderConfig,
    ExperimentConfig, Modality, SpikeConfig, SyntheticSpec,
};
pub use run::{
    eval_checkpoint, export_embeddings, load_dataset_arg, resolve_out_dir,
    rotation_cell_seed, run_proportion_sweep, run_rotation, run_single, sweep_cell_seed,
    ResultRecord,
};
