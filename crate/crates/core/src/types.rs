//! Shared domain types: descriptors, descriptor sets, predictions and method
//! configuration.
//!
//! Descriptor values and variances are stored as `f32`, the precision of the
//! on-disk container. All arithmetic on them happens in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position in meters. Planar data leaves `z = 0`.
pub type Pose = [f64; 3];

pub fn pose_distance(a: &Pose, b: &Pose) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// A single place embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor(Vec<f32>);

impl Descriptor {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch("descriptor has no dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { field: "descriptor", entry: 0 });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Borrowed Gaussian embedding: per-dimension mean and variance (sigma squared).
#[derive(Clone, Copy, Debug)]
pub struct Gaussian<'a> {
    pub mean: &'a [f32],
    pub variance: &'a [f32],
}

/// Owned Gaussian embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticDescriptor {
    mean: Vec<f32>,
    variance: Vec<f32>,
}

impl ProbabilisticDescriptor {
    pub fn new(mean: Vec<f32>, variance: Vec<f32>) -> Result<Self> {
        if mean.is_empty() || mean.len() != variance.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean has {} dimensions, variance has {}",
                mean.len(),
                variance.len()
            )));
        }
        if mean.iter().chain(&variance).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { field: "descriptor", entry: 0 });
        }
        if let Some(dim) = variance.iter().position(|&v| v <= 0.0) {
            return Err(Error::NonPositiveVariance { entry: 0, dim });
        }
        Ok(Self { mean, variance })
    }

    pub fn view(&self) -> Gaussian<'_> {
        Gaussian { mean: &self.mean, variance: &self.variance }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    /// One member, no variances.
    Plain,
    /// One member (the mean) plus per-dimension variances.
    Probabilistic,
    /// Several members (ensemble models or dropout passes), no variances.
    MultiMember,
}

/// Raw, unvalidated contents of a [`DescriptorSet`].
///
/// Every member is a row-major `count × dim` array; `variances` uses the same
/// layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SetParts {
    pub count: usize,
    pub dim: usize,
    pub members: Vec<Vec<f32>>,
    pub variances: Option<Vec<f32>>,
    pub poses: Option<Vec<Pose>>,
    pub timestamps: Option<Vec<f64>>,
    pub label: String,
}

impl SetParts {
    /// Single-member set from one row per entry.
    pub fn from_rows(rows: Vec<Vec<f32>>) -> Result<Self> {
        Self::from_member_rows(vec![rows])
    }

    /// Multi-member set from `members[m][entry]` rows.
    pub fn from_member_rows(members: Vec<Vec<Vec<f32>>>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::DimensionMismatch("set has no members".into()))?;
        let count = first.len();
        let dim = first.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(members.len());
        for (m, rows) in members.into_iter().enumerate() {
            if rows.len() != count {
                return Err(Error::DimensionMismatch(format!(
                    "member {m} has {} descriptors, expected {count}",
                    rows.len()
                )));
            }
            let mut data = Vec::with_capacity(count * dim);
            for (i, row) in rows.into_iter().enumerate() {
                if row.len() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "member {m} entry {i} has dimension {}, expected {dim}",
                        row.len()
                    )));
                }
                data.extend(row);
            }
            flat.push(data);
        }
        Ok(Self { count, dim, members: flat, ..Self::default() })
    }

    pub fn with_variance_rows(mut self, rows: Vec<Vec<f32>>) -> Result<Self> {
        if rows.len() != self.count || rows.iter().any(|r| r.len() != self.dim) {
            return Err(Error::DimensionMismatch("variance rows do not match the descriptor layout".into()));
        }
        self.variances = Some(rows.into_iter().flatten().collect());
        Ok(self)
    }

    pub fn with_poses(mut self, poses: Vec<Pose>) -> Self {
        self.poses = Some(poses);
        self
    }

    pub fn with_timestamps(mut self, timestamps: Vec<f64>) -> Self {
        self.timestamps = Some(timestamps);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// A validated database or query set of `N` descriptors of dimension `L`,
/// with `M` parallel members.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    parts: SetParts,
}

/// Checks every layout invariant and wraps the parts into a [`DescriptorSet`].
pub fn validate_set(parts: SetParts) -> Result<DescriptorSet> {
    let SetParts { count, dim, members, variances, poses, timestamps, .. } = &parts;
    let (count, dim) = (*count, *dim);
    if dim == 0 {
        return Err(Error::DimensionMismatch("descriptor dimension must be at least 1".into()));
    }
    if members.is_empty() {
        return Err(Error::DimensionMismatch("set has no members".into()));
    }
    for (m, data) in members.iter().enumerate() {
        if data.len() != count * dim {
            return Err(Error::DimensionMismatch(format!(
                "member {m} holds {} values, expected {count} x {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { field: "descriptor", entry: pos / dim });
        }
    }
    if let Some(var) = variances {
        if members.len() != 1 {
            return Err(Error::DimensionMismatch("variances are only allowed on single-member sets".into()));
        }
        if var.len() != count * dim {
            return Err(Error::DimensionMismatch(format!(
                "variances hold {} values, expected {count} x {dim}",
                var.len()
            )));
        }
        for (pos, &v) in var.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { field: "variance", entry: pos / dim });
            }
            if v <= 0.0 {
                return Err(Error::NonPositiveVariance { entry: pos / dim, dim: pos % dim });
            }
        }
    }
    if let Some(poses) = poses {
        if poses.len() != count {
            return Err(Error::DimensionMismatch(format!("{} poses for {count} entries", poses.len())));
        }
        if let Some(entry) = poses.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteValue { field: "pose", entry });
        }
    }
    if let Some(ts) = timestamps {
        if ts.len() != count {
            return Err(Error::DimensionMismatch(format!("{} timestamps for {count} entries", ts.len())));
        }
        if let Some(entry) = ts.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { field: "timestamp", entry });
        }
    }
    Ok(DescriptorSet { parts })
}

impl DescriptorSet {
    pub fn new(parts: SetParts) -> Result<Self> {
        validate_set(parts)
    }

    pub fn parts(&self) -> &SetParts {
        &self.parts
    }

    pub fn into_parts(self) -> SetParts {
        self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.count
    }

    pub fn is_empty(&self) -> bool {
        self.parts.count == 0
    }

    pub fn dim(&self) -> usize {
        self.parts.dim
    }

    pub fn member_count(&self) -> usize {
        self.parts.members.len()
    }

    pub fn label(&self) -> &str {
        &self.parts.label
    }

    pub fn kind(&self) -> SetKind {
        match (self.member_count(), self.parts.variances.is_some()) {
            (1, false) => SetKind::Plain,
            (1, true) => SetKind::Probabilistic,
            _ => SetKind::MultiMember,
        }
    }

    pub fn descriptor(&self, member: usize, entry: usize) -> &[f32] {
        let dim = self.parts.dim;
        &self.parts.members[member][entry * dim..(entry + 1) * dim]
    }

    pub fn variance(&self, entry: usize) -> Option<&[f32]> {
        let dim = self.parts.dim;
        self.parts.variances.as_ref().map(|v| &v[entry * dim..(entry + 1) * dim])
    }

    /// Mean (member 0) and variance of a probabilistic entry.
    pub fn gaussian(&self, entry: usize) -> Option<Gaussian<'_>> {
        self.variance(entry).map(|variance| Gaussian { mean: self.descriptor(0, entry), variance })
    }

    pub fn poses(&self) -> Option<&[Pose]> {
        self.parts.poses.as_deref()
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.parts.timestamps.as_deref()
    }

    /// Timestamp of an entry; sets stored without timestamps report 0.
    pub fn timestamp(&self, entry: usize) -> f64 {
        self.parts.timestamps.as_ref().map_or(0.0, |t| t[entry])
    }

    /// Session sets must have timestamps that never decrease.
    pub fn check_session_order(&self) -> Result<()> {
        let ts = self.timestamps().ok_or(Error::MissingTimestamps)?;
        for (i, pair) in ts.windows(2).enumerate() {
            if pair[1] < pair[0] {
                return Err(Error::TimestampOrderViolation {
                    entry: i + 1,
                    previous: pair[0],
                    current: pair[1],
                });
            }
        }
        Ok(())
    }

    /// The same entries restricted to the first `members` members.
    pub fn with_members(&self, members: usize) -> Result<Self> {
        if members == 0 || members > self.member_count() {
            return Err(Error::MemberCountMismatch { query: members, database: self.member_count() });
        }
        let mut parts = self.parts.clone();
        parts.members.truncate(members);
        validate_set(parts)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    None,
    IncorrectMatch,
    NoMatch,
}

/// One of the top-K candidates kept on a prediction for Recall@K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledCandidate {
    pub index: usize,
    pub score: f64,
    /// Whether the candidate lies within the revisit radius of the query.
    pub hit: bool,
}

/// A labeled query-to-database match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub query_index: usize,
    pub predicted_index: Option<usize>,
    pub score: f64,
    /// Spread of the member scores of the predicted pair; 0 for single-member methods.
    pub score_variance: f64,
    pub uncertainty: f64,
    pub correct: bool,
    pub error_type: ErrorType,
    pub has_match: bool,
    pub candidates: Vec<LabeledCandidate>,
}

impl Prediction {
    /// Checks the correctness/error-type/has-match coupling.
    pub fn is_consistent(&self) -> bool {
        let typed = match self.error_type {
            ErrorType::None => self.correct,
            ErrorType::IncorrectMatch => !self.correct && self.has_match,
            ErrorType::NoMatch => !self.correct && !self.has_match,
        };
        typed && (!self.correct || self.has_match)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Standard,
    Ppe,
    Stun,
    Dropout,
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Standard, Method::Ppe, Method::Stun, Method::Dropout, Method::Ensemble];

    pub fn name(self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::Ppe => "ppe",
            Method::Stun => "stun",
            Method::Dropout => "dropout",
            Method::Ensemble => "ensemble",
        }
    }
}

/// Scalar uncertainty used by the multi-member methods.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintySource {
    #[default]
    NegativeMeanSimilarity,
    SimilarityVariance,
}

/// Form of the squared mean term in the mutual likelihood score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlsConvention {
    /// `(mu_q - mu_n)^2`: the score grows as the embeddings align.
    #[default]
    Difference,
    /// `(mu_q + mu_n)^2`.
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub top_k: usize,
    #[serde(default)]
    pub uncertainty_source: UncertaintySource,
    #[serde(default)]
    pub mls_convention: MlsConvention,
}

impl MethodConfig {
    pub fn new(method: Method, top_k: usize) -> Self {
        Self {
            method,
            top_k,
            uncertainty_source: UncertaintySource::default(),
            mls_convention: MlsConvention::default(),
        }
    }

    pub fn with_uncertainty_source(mut self, source: UncertaintySource) -> Self {
        self.uncertainty_source = source;
        self
    }

    pub fn with_mls_convention(mut self, convention: MlsConvention) -> Self {
        self.mls_convention = convention;
        self
    }
}
