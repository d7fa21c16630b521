//! Brute-force reference implementations used to cross-check the metric and
//! protocol code. They share no code path with `metrics`, `protocol`,
//! `retrieval` or `scoring`: plain nested loops, toy scale only.

use crate::error::{Error, Result};
use crate::protocol::{LabeledRun, RunCounts};
use crate::types::{
    DescriptorSet, ErrorType, LabeledCandidate, Method, MethodConfig, MlsConvention, Prediction,
    UncertaintySource,
};

/// Exhaustive pairwise AuROC in percent: how often an incorrect prediction is
/// more uncertain than a correct one, ties counting half.
pub fn oracle_auroc(correct: &[f64], incorrect: &[f64]) -> Result<f64> {
    if correct.is_empty() {
        return Err(Error::DegenerateClass("correct"));
    }
    if incorrect.is_empty() {
        return Err(Error::DegenerateClass("incorrect"));
    }
    let mut greater: u64 = 0;
    let mut ties: u64 = 0;
    for &c in correct {
        for &i in incorrect {
            if i > c {
                greater += 1;
            } else if i == c {
                ties += 1;
            }
        }
    }
    let pairs = correct.len() as f64 * incorrect.len() as f64;
    Ok((greater as f64 + 0.5 * ties as f64) / pairs * 100.0)
}

/// Inputs to [`oracle_label`].
#[derive(Clone, Copy, Debug)]
pub enum OracleInput<'a> {
    Batch { queries: &'a DescriptorSet, database: &'a DescriptorSet, radius: f64 },
    Session { run: &'a DescriptorSet, radius: f64, exclusion_window: f64 },
}

fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..a.len() {
        let (x, y) = (a[k] as f64, b[k] as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn naive_mls(q: &DescriptorSet, qi: usize, d: &DescriptorSet, di: usize, conv: MlsConvention) -> f64 {
    let (mq, vq) = (q.descriptor(0, qi), q.variance(qi).unwrap());
    let (md, vd) = (d.descriptor(0, di), d.variance(di).unwrap());
    let mut acc = 0.0;
    for l in 0..mq.len() {
        let s = vq[l] as f64 + vd[l] as f64;
        let m = match conv {
            MlsConvention::Difference => mq[l] as f64 - md[l] as f64,
            MlsConvention::Sum => mq[l] as f64 + md[l] as f64,
        };
        acc += m * m / s + s.ln();
    }
    -0.5 * acc - 0.5 * mq.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// (mean score, member variance) for one pair.
fn naive_score(
    q: &DescriptorSet,
    qi: usize,
    d: &DescriptorSet,
    di: usize,
    config: &MethodConfig,
) -> (f64, f64) {
    match config.method {
        Method::Standard | Method::Stun => (naive_cosine(q.descriptor(0, qi), d.descriptor(0, di)), 0.0),
        Method::Ppe => (naive_mls(q, qi, d, di, config.mls_convention), 0.0),
        Method::Dropout | Method::Ensemble => {
            let m = q.member_count();
            let scores: Vec<f64> =
                (0..m).map(|k| naive_cosine(q.descriptor(k, qi), d.descriptor(k, di))).collect();
            let mut sum = 0.0;
            for s in &scores {
                sum += s;
            }
            let mean = sum / m as f64;
            let mut var = 0.0;
            for s in &scores {
                var += (s - mean) * (s - mean);
            }
            (mean, var / m as f64)
        }
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Labels every query with nested loops: visibility by scanning the whole
/// database, prediction by argmax (first index wins ties), then error typing.
///
/// # Panics
/// On sets lacking poses, timestamps (session) or variances (PPE/STUN); the
/// oracle is test scaffolding and does not validate.
pub fn oracle_label(input: OracleInput<'_>, config: &MethodConfig) -> LabeledRun {
    let (queries, database, radius) = match input {
        OracleInput::Batch { queries, database, radius } => (queries, database, radius),
        OracleInput::Session { run, radius, .. } => (run, run, radius),
    };
    let q_poses = queries.poses().expect("query poses");
    let d_poses = database.poses().expect("database poses");

    let mut predictions = Vec::new();
    let mut skipped = Vec::new();
    let mut counts = RunCounts::default();

    for qi in 0..queries.len() {
        counts.total += 1;
        let mut visible = Vec::new();
        for di in 0..database.len() {
            let is_visible = match input {
                OracleInput::Batch { .. } => true,
                OracleInput::Session { run, exclusion_window, .. } => {
                    let ts = run.timestamps().expect("timestamps");
                    di < qi && ts[di] <= ts[qi] - exclusion_window
                }
            };
            if is_visible {
                visible.push(di);
            }
        }
        if visible.is_empty() {
            skipped.push(qi);
            counts.skipped_empty_visible += 1;
            continue;
        }

        let mut has_match = false;
        for &di in &visible {
            if dist(&q_poses[qi], &d_poses[di]) <= radius {
                has_match = true;
            }
        }

        let mut scored: Vec<(usize, f64, f64)> = Vec::new();
        for &di in &visible {
            let (mean, var) = naive_score(queries, qi, database, di, config);
            scored.push((di, mean, var));
        }
        // insertion sort: descending score, earlier index first on ties
        let mut ranked: Vec<(usize, f64, f64)> = Vec::new();
        for entry in scored {
            let pos = ranked.iter().position(|r| entry.1 > r.1).unwrap_or(ranked.len());
            ranked.insert(pos, entry);
        }
        ranked.truncate(config.top_k);
        let (best, best_score, best_var) = ranked[0];

        let uncertainty = match config.method {
            Method::Stun => {
                let mut sum = 0.0;
                for &v in queries.variance(qi).expect("query variances") {
                    sum += v as f64;
                }
                sum
            }
            Method::Dropout | Method::Ensemble
                if config.uncertainty_source == UncertaintySource::SimilarityVariance =>
            {
                best_var
            }
            _ => -best_score,
        };

        let correct = has_match && dist(&q_poses[qi], &d_poses[best]) <= radius;
        let error_type = if correct {
            counts.correct += 1;
            ErrorType::None
        } else if has_match {
            counts.incorrect_match += 1;
            ErrorType::IncorrectMatch
        } else {
            counts.no_match += 1;
            ErrorType::NoMatch
        };
        if has_match {
            counts.with_match += 1;
        }
        let candidates = ranked
            .iter()
            .map(|&(index, score, _)| LabeledCandidate {
                index,
                score,
                hit: dist(&q_poses[qi], &d_poses[index]) <= radius,
            })
            .collect();
        predictions.push(Prediction {
            query_index: qi,
            predicted_index: Some(best),
            score: best_score,
            score_variance: best_var,
            uncertainty,
            correct,
            error_type,
            has_match,
            candidates,
        });
    }
    LabeledRun { predictions, skipped, counts, top_k: config.top_k }
}
