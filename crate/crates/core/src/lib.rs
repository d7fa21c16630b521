//! Uncertainty-aware place recognition: descriptor scoring, retrieval under
//! batch and online protocols, and metrics that grade how well an uncertainty
//! estimate separates correct from incorrect matches.

pub mod error;
pub mod io;
pub mod metrics;
pub mod protocol;
pub mod retrieval;
pub mod scoring;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use metrics::{
    auer, auroc, error_rejection_curve, evaluate, precision_recall_curve, recall_at_k, roc_curve, CurveKind,
    CurveSeries, Evaluation, MetricSummary, RocConvention,
};
pub use protocol::{
    recombine_split, run_batch, run_session, split_by_error_type, LabeledRun, Mode, ProtocolConfig, RunCounts,
};
pub use retrieval::{threshold_decision, Decision, Retriever};
pub use scoring::{cosine_similarity, mls_score, stun_uncertainty, ScorePair};
pub use types::{
    DescriptorSet, ErrorType, Gaussian, LabeledCandidate, Method, MethodConfig, MlsConvention, Pose,
    Prediction, SetKind, SetParts, UncertaintySource,
};
