//! Similarity and uncertainty formulas for the five retrieval baselines.
//!
//! Everything here is a pure function over borrowed slices. Accumulation is in
//! `f64` with a fixed summation order, so every caller that goes through these
//! helpers sees bit-identical scores for identical inputs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Gaussian, MlsConvention};

const LANES: usize = 8;

/// Dot product accumulated in `f64` over eight interleaved partial sums.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f64 =
        ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let mut acc = [0.0f64; LANES];
    for (x, y) in ca.zip(cb) {
        let (x, y): (&[f32; LANES], &[f32; LANES]) = (x.try_into().unwrap(), y.try_into().unwrap());
        for k in 0..LANES {
            acc[k] += f64::from(x[k]) * f64::from(y[k]);
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub fn l2_norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine from a precomputed dot product and norms. Shared by the public
/// function and the ranking loop so both produce the same bits.
#[inline]
pub(crate) fn cosine_from_parts(dot: f64, norm_q: f64, norm_d: f64) -> f64 {
    dot / (norm_q * norm_d)
}

fn check_dims(q: usize, d: usize) -> Result<()> {
    if q != d {
        return Err(Error::DimensionMismatch(format!("query has dimension {q}, database entry has {d}")));
    }
    Ok(())
}

/// `q . d / (|q| |d|)`.
pub fn cosine_similarity(q: &[f32], d: &[f32]) -> Result<f64> {
    check_dims(q.len(), d.len())?;
    let (nq, nd) = (l2_norm(q), l2_norm(d));
    if nq == 0.0 || nd == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(cosine_from_parts(dot(q, d), nq, nd))
}

/// Uncertainty of a single-model prediction: the negated best similarity.
pub fn standard_uncertainty(best_score: f64) -> f64 {
    -best_score
}

/// Mutual likelihood score between two Gaussian embeddings.
pub fn mls_score(q: Gaussian<'_>, d: Gaussian<'_>, convention: MlsConvention) -> Result<f64> {
    check_dims(q.mean.len(), d.mean.len())?;
    check_dims(q.mean.len(), q.variance.len())?;
    check_dims(d.mean.len(), d.variance.len())?;
    for var in [q.variance, d.variance] {
        if let Some(dim) = var.iter().position(|&v| v.is_nan() || v <= 0.0) {
            return Err(Error::NonPositiveVariance { entry: 0, dim });
        }
    }
    Ok(mls_unchecked(q, d, convention))
}

/// [`mls_score`] without argument checks; variances must be positive.
pub(crate) fn mls_unchecked(q: Gaussian<'_>, d: Gaussian<'_>, convention: MlsConvention) -> f64 {
    let mut acc = 0.0;
    for l in 0..q.mean.len() {
        let (mq, md) = (f64::from(q.mean[l]), f64::from(d.mean[l]));
        let var = f64::from(q.variance[l]) + f64::from(d.variance[l]);
        let delta = match convention {
            MlsConvention::Difference => mq - md,
            MlsConvention::Sum => mq + md,
        };
        acc += delta * delta / var + var.ln();
    }
    -0.5 * acc - 0.5 * q.mean.len() as f64 * (2.0 * PI).ln()
}

/// Query-only uncertainty of the student-teacher baseline: the summed
/// per-dimension variance.
///
/// The sum differs from the per-dimension average by the constant factor `1/L`,
/// so every rank-based metric is the same under either reading.
pub fn stun_uncertainty(variance: &[f32]) -> f64 {
    variance.iter().map(|&v| f64::from(v)).sum()
}

/// Gaussian summary of the M member similarities of one query-database pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub mean: f64,
    /// Population variance (divides by M); 0 for a single member.
    pub variance: f64,
}

impl ScorePair {
    pub fn single(score: f64) -> Self {
        Self { mean: score, variance: 0.0 }
    }

    /// Mean and population variance of per-member scores.
    ///
    /// # Panics
    /// If `scores` is empty.
    pub fn from_member_scores(scores: &[f64]) -> Self {
        assert!(!scores.is_empty(), "at least one member score is required");
        // a rounded mean of equal scores can drift off the score itself
        if scores.iter().all(|&s| s == scores[0]) {
            return Self::single(scores[0]);
        }
        let m = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / m;
        let variance = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / m;
        Self { mean, variance }
    }
}

/// Pairs member `m` of the query with member `m` of the database entry and
/// summarizes the M cosine similarities.
pub fn multi_member_scores(q_members: &[&[f32]], d_members: &[&[f32]]) -> Result<ScorePair> {
    if q_members.len() != d_members.len() || q_members.is_empty() {
        return Err(Error::MemberCountMismatch { query: q_members.len(), database: d_members.len() });
    }
    let scores =
        q_members.iter().zip(d_members).map(|(q, d)| cosine_similarity(q, d)).collect::<Result<Vec<_>>>()?;
    Ok(ScorePair::from_member_scores(&scores))
}
