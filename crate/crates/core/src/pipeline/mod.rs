//! Files, sample assembly, synthetic data, training and evaluation.

mod assemble;
mod checkpoint;
mod config;
mod eval;
mod format;
mod split;
mod synth;
mod train;

pub use assemble::{
    apply_ablation, assemble_sample, descriptors, extract_features, fit_codebook, prepare_tracks,
    segment_pose, select_participants, to_sample, FeatureScaler, PersonSegment, ProviderSet, RecordFeatures,
    SegmentFeatures,
};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Ablation, ModelConfig, PipelineConfig, TrainConfig};
pub use eval::{evaluate, EvalReport, Prediction};
pub use format::{ingest, parse_poses, write_poses, Dataset, VideoRecord, DEFAULT_FPS, POSE_FORMAT, POSE_VERSION};
pub use split::{leave_one_out, stratified_split, subset};
pub use synth::{synth_generate, ClassSpec, SyntheticSet, SyntheticSpec, EMBEDDINGS_FILE, POSES_FILE};
pub use train::{fit_samples, model_dims, train, Fit};
