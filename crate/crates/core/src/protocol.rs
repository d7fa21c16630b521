//! Evaluation regimes that turn retrieval output into labeled predictions.
//!
//! *Batch*: every query of one traversal against the full database of
//! another. *Session*: a single run evaluated online, where query `i` sees the
//! earlier entries recorded at least `exclusion_window` seconds before it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::{check_method_data, Retriever, UnlabeledPrediction};
use crate::types::{
    pose_distance, DescriptorSet, ErrorType, LabeledCandidate, MethodConfig, Pose, Prediction,
};

pub const BATCH_REVISIT_RADIUS: f64 = 25.0;
pub const SESSION_REVISIT_RADIUS: f64 = 10.0;
pub const SESSION_EXCLUSION_WINDOW: f64 = 90.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Batch,
    Session,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub mode: Mode,
    /// Meters. A prediction within this distance of the query is a revisit.
    pub revisit_radius: f64,
    /// Seconds hidden before each session query; ignored in batch mode.
    pub exclusion_window: f64,
}

impl ProtocolConfig {
    pub fn batch() -> Self {
        Self { mode: Mode::Batch, revisit_radius: BATCH_REVISIT_RADIUS, exclusion_window: 0.0 }
    }

    pub fn session() -> Self {
        Self {
            mode: Mode::Session,
            revisit_radius: SESSION_REVISIT_RADIUS,
            exclusion_window: SESSION_EXCLUSION_WINDOW,
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.revisit_radius = radius;
        self
    }

    pub fn with_exclusion_window(mut self, seconds: f64) -> Self {
        self.exclusion_window = seconds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.revisit_radius.is_nan() || self.revisit_radius <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "revisit radius must be positive, got {}",
                self.revisit_radius
            )));
        }
        if !self.exclusion_window.is_finite() || self.exclusion_window < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "exclusion window must be a finite non-negative number, got {}",
                self.exclusion_window
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub total: usize,
    pub with_match: usize,
    pub correct: usize,
    pub incorrect_match: usize,
    pub no_match: usize,
    pub skipped_empty_visible: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledRun {
    pub predictions: Vec<Prediction>,
    /// Queries that had no visible database entry and were not scored.
    pub skipped: Vec<usize>,
    pub counts: RunCounts,
    /// Candidate list length requested from retrieval.
    pub top_k: usize,
}

impl LabeledRun {
    pub fn from_predictions(predictions: Vec<Prediction>, skipped: Vec<usize>, top_k: usize) -> Self {
        let mut counts = RunCounts {
            total: predictions.len() + skipped.len(),
            skipped_empty_visible: skipped.len(),
            ..RunCounts::default()
        };
        for p in &predictions {
            counts.with_match += usize::from(p.has_match);
            match p.error_type {
                ErrorType::None => counts.correct += 1,
                ErrorType::IncorrectMatch => counts.incorrect_match += 1,
                ErrorType::NoMatch => counts.no_match += 1,
            }
        }
        Self { predictions, skipped, counts, top_k }
    }
}

fn require_poses(set: &DescriptorSet) -> Result<&[Pose]> {
    set.poses().ok_or(Error::MissingPoses)
}

fn label(
    raw: UnlabeledPrediction,
    query_pose: &Pose,
    db_poses: &[Pose],
    radius: f64,
    has_match: bool,
) -> Prediction {
    let hit = |index: usize| pose_distance(query_pose, &db_poses[index]) <= radius;
    let top = *raw.predicted();
    let correct = has_match && hit(top.index);
    let error_type = match (correct, has_match) {
        (true, _) => ErrorType::None,
        (false, true) => ErrorType::IncorrectMatch,
        (false, false) => ErrorType::NoMatch,
    };
    let candidates = raw
        .candidates
        .entries()
        .iter()
        .map(|e| LabeledCandidate { index: e.index, score: e.score, hit: hit(e.index) })
        .collect();
    Prediction {
        query_index: raw.query_index,
        predicted_index: Some(top.index),
        score: top.score,
        score_variance: top.variance,
        uncertainty: raw.uncertainty,
        correct,
        error_type,
        has_match,
        candidates,
    }
}

fn collect_run(outcomes: Vec<Option<Prediction>>, top_k: usize) -> LabeledRun {
    let mut predictions = Vec::with_capacity(outcomes.len());
    let mut skipped = Vec::new();
    for (q, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Some(p) => predictions.push(p),
            None => skipped.push(q),
        }
    }
    LabeledRun::from_predictions(predictions, skipped, top_k)
}

/// Evaluates every query against the full database.
///
/// Queries without any database entry inside the revisit radius are labeled
/// `NoMatch` and flagged through `has_match = false`.
pub fn run_batch(
    queries: &DescriptorSet,
    database: &DescriptorSet,
    config: &ProtocolConfig,
    method: &MethodConfig,
) -> Result<LabeledRun> {
    config.validate()?;
    check_method_data(queries, database, method)?;
    let q_poses = require_poses(queries)?;
    let db_poses = require_poses(database)?;
    let retriever = Retriever::new(database, *method);
    let visible: Vec<usize> = (0..database.len()).collect();
    let radius = config.revisit_radius;

    let outcomes = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            if visible.is_empty() {
                return Ok(None);
            }
            let pose = &q_poses[q];
            let has_match = db_poses.iter().any(|p| pose_distance(pose, p) <= radius);
            let raw = retriever.predict(queries, q, &visible)?;
            Ok(Some(label(raw, pose, db_poses, radius, has_match)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_run(outcomes, method.top_k))
}

/// Number of leading entries visible to query `q`: earlier entries whose
/// timestamp is at most `t_q - exclusion_window` (inclusive).
pub fn visible_prefix(timestamps: &[f64], q: usize, exclusion_window: f64) -> usize {
    let cutoff = timestamps[q] - exclusion_window;
    timestamps[..q].partition_point(|&t| t <= cutoff)
}

/// Online evaluation of a single run against its own past.
pub fn run_session(
    run: &DescriptorSet,
    config: &ProtocolConfig,
    method: &MethodConfig,
) -> Result<LabeledRun> {
    config.validate()?;
    run.check_session_order()?;
    let timestamps = run.timestamps().ok_or(Error::MissingTimestamps)?;
    let poses = require_poses(run)?;
    check_method_data(run, run, method)?;
    let retriever = Retriever::new(run, *method);
    let radius = config.revisit_radius;

    let outcomes = (0..run.len())
        .into_par_iter()
        .map(|q| {
            let count = visible_prefix(timestamps, q, config.exclusion_window);
            if count == 0 {
                return Ok(None);
            }
            let pose = &poses[q];
            let has_match = poses[..count].iter().any(|p| pose_distance(pose, p) <= radius);
            let visible: Vec<usize> = (0..count).collect();
            let raw = retriever.predict(run, q, &visible)?;
            Ok(Some(label(raw, pose, poses, radius, has_match)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_run(outcomes, method.top_k))
}

/// Splits a run into (correct + incorrect-match, correct + no-match) sub-runs.
/// Both keep the skipped list of the original run.
pub fn split_by_error_type(run: &LabeledRun) -> (LabeledRun, LabeledRun) {
    let keep = |kind: ErrorType| {
        let preds = run
            .predictions
            .iter()
            .filter(|p| p.error_type == ErrorType::None || p.error_type == kind)
            .cloned()
            .collect();
        LabeledRun::from_predictions(preds, run.skipped.clone(), run.top_k)
    };
    (keep(ErrorType::IncorrectMatch), keep(ErrorType::NoMatch))
}

/// Inverse of [`split_by_error_type`].
pub fn recombine_split(incorrect_match: &LabeledRun, no_match: &LabeledRun) -> LabeledRun {
    let mut predictions: Vec<Prediction> = incorrect_match.predictions.clone();
    predictions.extend(no_match.predictions.iter().filter(|p| p.error_type == ErrorType::NoMatch).cloned());
    predictions.sort_by_key(|p| p.query_index);
    LabeledRun::from_predictions(predictions, incorrect_match.skipped.clone(), incorrect_match.top_k)
}
