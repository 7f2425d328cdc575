//! Pitch records, labels, protocol splits, the synthetic generator and preprocessing.

pub mod labels;
pub mod preprocess;
pub mod record;
pub mod splits;
pub mod synth;

pub use labels::{label_pitches, Label, LabeledPitch};
pub use preprocess::{
    clip_from_tensor, clip_to_tensor, preprocess_clip, preprocess_corpus, preprocess_to_dir,
    preprocess_to_dir_with_progress, ClipDir, ClipSource, FlowDir, FlowSource, FlowStore,
    PreprocessParams, PreprocessSummary,
};
pub use record::{Handedness, InjuryType, Manifest, PitchRecord};
pub use splits::{
    build_protocol, partition_pitchers, split_half, Cohort, Direction, Protocol, SplitAudit,
    SplitPlan,
};
pub use synth::{synth_generate, PitcherProfile, SynthCorpus, SynthParams};
