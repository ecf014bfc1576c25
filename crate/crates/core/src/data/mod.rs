//! Feature ingestion, segment handling, balanced batching and synthetic data.

mod batch;
mod feature;
mod manifest;
mod segments;
mod synth;

pub use batch::{crop_segments, prepare_crop, Minibatch, TrainSample, TrainingSet, PER_CLASS};
pub use feature::{FeatureTensor, FEATURE_MAGIC};
pub use manifest::{read_ground_truth, write_ground_truth, DatasetManifest, Split, VideoRecord};
pub use segments::{aggregate_segments, fuse_audio, permutation, shuffle_segments};
pub use synth::{
    class_name, synth_dataset, write_synth_dataset, SynthConfig, SynthDataset, SynthPaths,
    SynthVideo,
};
