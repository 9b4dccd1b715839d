//! Similarity metrics between real and generated epoch sets: classifier
//! performance (ABA), domain-invariant (SWD), image-domain (FID over a
//! trained compact extractor), domain-specific (PAD, PLD, SD-MD), and the
//! within-session / between-session baselines used to interpret them.

mod aba;
mod baseline;
mod evaluate;
mod evoked;
mod fid;
mod fx;
mod lda;
mod report;
mod swd;

pub use aba::{aba, AbaConfig, AbaResult, AbaUnit};
pub use baseline::{
    between_session_baseline, fid_between_sessions, fid_random_half, fid_subject_split,
    BaselineEntry, BaselineResult, PairMetric,
};
pub use evaluate::{evaluate_sets, EvalOptions, MetricKind};
pub use evoked::{
    evoked, evoked_of, pad, pld, sd_md, select_p300_channel, EvokedResponse, PeakWindow,
};
pub use fid::{fid, fid_from_features};
pub use fx::{train_feature_extractor, FeatureExtractor, FxConfig, FxMeta, CHECKPOINT_KIND_FX};
pub use lda::{balanced_accuracy, lda_features, lda_fit, LdaModel};
pub use report::{ClassScope, MetricReport, MetricRow, REPORT_HEADER};
pub use swd::swd;
