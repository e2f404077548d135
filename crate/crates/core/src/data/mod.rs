//! Samples, the FDS1 file format, preprocessing rules, user-level splits and
//! the synthetic corpus generator.

mod dir;
mod fds;
mod preprocess;
mod sample;
mod split;
mod synth;

pub use dir::{read_dataset, write_dataset, MANIFEST};
pub use fds::{load_fds, write_fds, FDS_MAGIC, FLAG_GLASS};
pub use preprocess::{
    detect_low_illumination, downsample_for_mlp, exclude_sparse_users, preprocess_sample,
    preprocess_users, Exclusion, PreprocessStats, Preprocessed, DARK_FRAME_LEVEL,
    MAX_INVALID_RUN, MAX_INVALID_TOTAL, MLP_FRAMES, MLP_SOURCE_FRAMES, SPARSE_USER_MAX,
};
pub use sample::{FederatedSplit, ManifestUser, Sample, UserDataset};
pub use split::{kfold_user_folds, test_user_count, user_independent_split};
pub use synth::{draw_profiles, synth_generate, SynthSpec, UserProfile};
