//! Dataset container I/O, synthetic ERP generation, and train/val splitting.
//!
//! One directory holds one dataset: `manifest.json` (UTF-8), `epochs.f32le`
//! (little-endian float32, epochs concatenated, each epoch channel-major)
//! and `labels.csv` (`epoch_index,subject,session,class`, LF endings).

mod condition;
mod container;
mod split;
mod synthetic;

pub use condition::{ClassLabel, ConditionKey};
pub use container::{load_epochs, save_epochs, ClassCount, DatasetManifest};
pub use split::split_train_val;
pub use synthetic::{bump_channels, generate_synthetic, SyntheticSpec};
