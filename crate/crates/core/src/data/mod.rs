//! Training data: sample enumeration, splits, normalization, augmentation,
//! the synthetic generator and on-disk corpora.

mod augment;
mod corpus;
mod dataset;
mod index;
mod normalize;
mod sample;
mod split;
mod synthetic;

pub use augment::{apply_plan, augment_flow, augment_interpolation, AugmentConfig, AugmentPlan};
pub use corpus::{
    format_manifest, load_manifest, load_sequence, parse_manifest, write_corpus, DatasetConfig, ManifestEntry,
    MANIFEST_NAME,
};
pub use dataset::{Dataset, Sequence};
pub use index::{
    flow_quadruple, index_flow_samples, index_interpolation_samples, SampleKind, SampleSpec, INTERP_OFFSETS, SPACINGS,
};
pub use normalize::{joint_stats, normalize_frames, NormStats, STD_EPSILON};
pub use sample::{stack_inputs, RawSample, Target, TrainingSample};
pub use split::{split_train_val, Split, SplitPolicy};
pub use synthetic::{
    generate_synthetic_corpus, generate_synthetic_sequence, Layer, Shape, SyntheticConfig, SyntheticScene,
    SyntheticSequence,
};
