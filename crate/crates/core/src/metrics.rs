//! Recall@K, ROC / AuROC, error-versus-rejection / AuER and precision-recall
//! curves over a [`LabeledRun`].
//!
//! Thresholds sweep the distinct uncertainty values with the inclusive test
//! `U <= lambda`. Undefined metrics (an empty class, no matchable query) are
//! errors here and become `None` in [`MetricSummary`]; they are never NaN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::LabeledRun;
use crate::types::Prediction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Roc,
    AcceptedShareRoc,
    ErrorRejection,
    PrecisionRecall,
    RecallAtK,
}

impl CurveKind {
    pub fn file_stem(self) -> &'static str {
        match self {
            CurveKind::Roc => "roc",
            CurveKind::AcceptedShareRoc => "accepted_share_roc",
            CurveKind::ErrorRejection => "error_rejection",
            CurveKind::PrecisionRecall => "precision_recall",
            CurveKind::RecallAtK => "recall_at_k",
        }
    }
}

/// Which false-positive-rate denominator the ROC uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RocConvention {
    /// `FPR = |U_I <= l| / |U_I|`.
    #[default]
    Standard,
    /// `FPR = |U_I <= l| / (|U_C <= l| + |U_I <= l|)`, the incorrect share
    /// of accepted predictions.
    AcceptedShare,
}

/// Ordered `(x, y)` points.
///
/// ROC: `x = FPR`, `y = TPR`. Error-rejection: `x = rejection`, `y = error`.
/// Precision-recall: `x = recall`, `y = precision`. Recall@K: `x = K`,
/// `y = recall` as a fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
}

impl CurveSeries {
    fn expect(&self, kinds: &[CurveKind], expected: &'static str) -> Result<()> {
        if kinds.contains(&self.kind) {
            Ok(())
        } else {
            Err(Error::WrongCurveKind { found: self.kind, expected })
        }
    }
}

/// Trapezoidal area under points taken in order.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

/// Uncertainties of correct (`U_C`) and incorrect (`U_I`) predictions.
pub fn uncertainty_partition(predictions: &[Prediction]) -> (Vec<f64>, Vec<f64>) {
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for p in predictions {
        if p.correct {
            correct.push(p.uncertainty);
        } else {
            incorrect.push(p.uncertainty);
        }
    }
    (correct, incorrect)
}

/// Sorted `(uncertainty, is_correct)` pairs grouped into distinct thresholds,
/// returning cumulative `(threshold, correct <= t, incorrect <= t)`.
fn cumulative_counts(correct: &[f64], incorrect: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut all: Vec<(f64, bool)> =
        correct.iter().map(|&u| (u, true)).chain(incorrect.iter().map(|&u| (u, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut c, mut i) = (0, 0);
    for (k, &(u, is_correct)) in all.iter().enumerate() {
        if is_correct {
            c += 1;
        } else {
            i += 1;
        }
        let last_of_group = all.get(k + 1).is_none_or(|next| next.0 != u);
        if last_of_group {
            out.push((u, c, i));
        }
    }
    out
}

/// Drops interior points of purely vertical or horizontal runs. The area is
/// unchanged and fewer terms keep the trapezoid sum exact on step curves.
fn collapse_axis_runs(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for p in points {
        if out.last() == Some(&p) {
            continue;
        }
        if out.len() >= 2 {
            let (a, b) = (out[out.len() - 2], out[out.len() - 1]);
            if (a.0 == b.0 && b.0 == p.0) || (a.1 == b.1 && b.1 == p.1) {
                out.pop();
            }
        }
        out.push(p);
    }
    out
}

pub fn roc_curve(correct: &[f64], incorrect: &[f64], convention: RocConvention) -> Result<CurveSeries> {
    if correct.is_empty() {
        return Err(Error::DegenerateClass("correct"));
    }
    if incorrect.is_empty() {
        return Err(Error::DegenerateClass("incorrect"));
    }
    let (n_c, n_i) = (correct.len() as f64, incorrect.len() as f64);
    let counts = cumulative_counts(correct, incorrect);
    // the -inf sentinel accepts nothing; the largest threshold and +inf accept everything
    let mut points = vec![(0.0, 0.0)];
    match convention {
        RocConvention::Standard => {
            points.extend(counts.iter().map(|&(_, c, i)| (i as f64 / n_i, c as f64 / n_c)));
            Ok(CurveSeries { kind: CurveKind::Roc, points: collapse_axis_runs(points) })
        }
        RocConvention::AcceptedShare => {
            points.extend(counts.iter().map(|&(_, c, i)| (i as f64 / (c + i) as f64, c as f64 / n_c)));
            // this rate is not monotone in the threshold; order by x so the
            // area is that of a function of x
            points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            points.dedup();
            Ok(CurveSeries { kind: CurveKind::AcceptedShareRoc, points })
        }
    }
}

/// Area under a ROC curve, in percent.
pub fn auroc(curve: &CurveSeries) -> Result<f64> {
    curve.expect(&[CurveKind::Roc, CurveKind::AcceptedShareRoc], "roc")?;
    Ok(trapezoid(&curve.points) * 100.0)
}

pub fn auroc_from_uncertainties(
    correct: &[f64],
    incorrect: &[f64],
    convention: RocConvention,
) -> Result<f64> {
    auroc(&roc_curve(correct, incorrect, convention)?)
}

/// Sparsification curve: remaining error while rejecting the most uncertain
/// predictions, from rejection 0 up to the fully rejected point `(1, 0)`.
pub fn error_rejection_curve(correct: &[f64], incorrect: &[f64]) -> Result<CurveSeries> {
    let total = correct.len() + incorrect.len();
    if total == 0 {
        return Err(Error::EmptyRun);
    }
    let counts = cumulative_counts(correct, incorrect);
    let mut points: Vec<(f64, f64)> = counts
        .iter()
        .rev()
        .map(|&(_, c, i)| {
            let accepted = c + i;
            ((total - accepted) as f64 / total as f64, i as f64 / accepted as f64)
        })
        .collect();
    points.push((1.0, 0.0));
    Ok(CurveSeries { kind: CurveKind::ErrorRejection, points })
}

/// Area under the error-rejection curve, in `[0, 1]`.
pub fn auer(curve: &CurveSeries) -> Result<f64> {
    curve.expect(&[CurveKind::ErrorRejection], "error_rejection")?;
    Ok(trapezoid(&curve.points))
}

/// Precision and recall of "accept iff `U <= lambda`" over all distinct
/// thresholds. Recall is relative to the queries that have a true match.
pub fn precision_recall_curve(run: &LabeledRun) -> Result<CurveSeries> {
    if run.predictions.is_empty() {
        return Err(Error::EmptyRun);
    }
    let matchable = run.predictions.iter().filter(|p| p.has_match).count();
    if matchable == 0 {
        return Err(Error::NoMatchableQueries);
    }
    let (correct, incorrect) = uncertainty_partition(&run.predictions);
    let mut points: Vec<(f64, f64)> = cumulative_counts(&correct, &incorrect)
        .into_iter()
        .map(|(_, c, i)| (c as f64 / matchable as f64, c as f64 / (c + i) as f64))
        .collect();
    // leading incorrect predictions all map to (0, 0)
    points.dedup();
    Ok(CurveSeries { kind: CurveKind::PrecisionRecall, points })
}

/// Percentage of matchable queries with a true match among their top `k`.
pub fn recall_at_k(run: &LabeledRun, k: usize) -> Result<f64> {
    if k == 0 || k > run.top_k {
        return Err(Error::KExceedsCandidates { requested: k, available: run.top_k });
    }
    let mut matchable = 0usize;
    let mut found = 0usize;
    for p in run.predictions.iter().filter(|p| p.has_match) {
        matchable += 1;
        if p.candidates.iter().take(k).any(|c| c.hit) {
            found += 1;
        }
    }
    if matchable == 0 {
        return Err(Error::NoMatchableQueries);
    }
    Ok(100.0 * found as f64 / matchable as f64)
}

/// Recall@K for every K from 1 to the run's candidate length.
pub fn recall_curve(run: &LabeledRun) -> Result<CurveSeries> {
    let points = (1..=run.top_k)
        .map(|k| recall_at_k(run, k).map(|r| (k as f64, r / 100.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveSeries { kind: CurveKind::RecallAtK, points })
}

/// Headline numbers of a run. `None` marks an undefined metric.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub recall_at_1: Option<f64>,
    pub k: usize,
    pub recall_at_k: Option<f64>,
    pub auroc: Option<f64>,
    pub auroc_accepted_share: Option<f64>,
    pub auer: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub summary: MetricSummary,
    pub curves: Vec<CurveSeries>,
}

/// Computes every metric and curve that is defined for `run`.
pub fn evaluate(run: &LabeledRun) -> Evaluation {
    let (correct, incorrect) = uncertainty_partition(&run.predictions);
    let roc = roc_curve(&correct, &incorrect, RocConvention::Standard).ok();
    let accepted_share_roc = roc_curve(&correct, &incorrect, RocConvention::AcceptedShare).ok();
    let er = error_rejection_curve(&correct, &incorrect).ok();
    let summary = MetricSummary {
        recall_at_1: recall_at_k(run, 1).ok(),
        k: run.top_k,
        recall_at_k: recall_at_k(run, run.top_k).ok(),
        auroc: roc.as_ref().and_then(|c| auroc(c).ok()),
        auroc_accepted_share: accepted_share_roc.as_ref().and_then(|c| auroc(c).ok()),
        auer: er.as_ref().and_then(|c| auer(c).ok()),
    };
    let curves = [roc, accepted_share_roc, er, precision_recall_curve(run).ok(), recall_curve(run).ok()]
        .into_iter()
        .flatten()
        .collect();
    Evaluation { summary, curves }
}
