//! Exhaustive retrieval: scores a query against the visible part of a
//! database, keeps the top-K candidates and attaches the method's uncertainty.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{self, ScorePair};
use crate::types::{DescriptorSet, Method, MethodConfig, SetKind, UncertaintySource};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub index: usize,
    /// The method's ranking score (cosine, MLS or mean member cosine).
    pub score: f64,
    /// Variance of the member scores; 0 for single-member methods.
    pub variance: f64,
}

/// Top candidates ordered by descending score, ties broken by the lower
/// database index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedCandidates {
    entries: Vec<RankedEntry>,
}

impl RankedCandidates {
    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn top(&self) -> Option<&RankedEntry> {
        self.entries.first()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn by_rank(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then(a.index.cmp(&b.index))
}

/// Orders already-scored entries and keeps the best `k`.
pub fn rank_scored(mut entries: Vec<RankedEntry>, k: usize) -> RankedCandidates {
    if k == 0 {
        entries.clear();
    } else if entries.len() > k {
        entries.select_nth_unstable_by(k - 1, by_rank);
        entries.truncate(k);
    }
    entries.sort_by(by_rank);
    RankedCandidates { entries }
}

/// Retrieval output before ground-truth labeling.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledPrediction {
    pub query_index: usize,
    pub candidates: RankedCandidates,
    pub uncertainty: f64,
}

impl UnlabeledPrediction {
    pub fn predicted(&self) -> &RankedEntry {
        // rank never returns an empty list for a nonempty visible set
        &self.candidates.entries[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

/// Accept (declare correct) iff `uncertainty <= lambda`.
pub fn threshold_decision(uncertainty: f64, lambda: f64) -> Decision {
    if uncertainty <= lambda {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

fn mismatch(method: Method, reason: impl Into<String>) -> Error {
    Error::MethodDataMismatch { method: method.name(), reason: reason.into() }
}

/// Checks that a query set and database carry what `config.method` needs.
pub fn check_method_data(
    queries: &DescriptorSet,
    database: &DescriptorSet,
    config: &MethodConfig,
) -> Result<()> {
    let method = config.method;
    if config.top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be at least 1".into()));
    }
    if queries.dim() != database.dim() {
        return Err(Error::DimensionMismatch(format!(
            "queries have dimension {}, database has {}",
            queries.dim(),
            database.dim()
        )));
    }
    match method {
        Method::Standard => Ok(()),
        Method::Ppe => {
            if queries.kind() != SetKind::Probabilistic || database.kind() != SetKind::Probabilistic {
                return Err(mismatch(method, "queries and database must both carry variances"));
            }
            Ok(())
        }
        Method::Stun => {
            if queries.kind() != SetKind::Probabilistic {
                return Err(mismatch(method, "queries must carry variances"));
            }
            Ok(())
        }
        Method::Dropout | Method::Ensemble => {
            if queries.member_count() != database.member_count() {
                return Err(Error::MemberCountMismatch {
                    query: queries.member_count(),
                    database: database.member_count(),
                });
            }
            Ok(())
        }
    }
}

/// A database prepared for repeated queries under one method. Holds
/// per-member norms so each query only pays for dot products.
#[derive(Debug)]
pub struct Retriever<'a> {
    database: &'a DescriptorSet,
    config: MethodConfig,
    norms: Vec<Vec<f64>>,
}

impl<'a> Retriever<'a> {
    pub fn new(database: &'a DescriptorSet, config: MethodConfig) -> Self {
        let members = match config.method {
            Method::Dropout | Method::Ensemble => database.member_count(),
            Method::Ppe => 0,
            Method::Standard | Method::Stun => 1,
        };
        let norms = (0..members)
            .map(|m| (0..database.len()).map(|i| scoring::l2_norm(database.descriptor(m, i))).collect())
            .collect();
        Self { database, config, norms }
    }

    pub fn config(&self) -> &MethodConfig {
        &self.config
    }

    fn cosine(&self, queries: &DescriptorSet, q: usize, q_norm: f64, m: usize, i: usize) -> Result<f64> {
        let d_norm = self.norms[m][i];
        if d_norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        let dot = scoring::dot(queries.descriptor(m, q), self.database.descriptor(m, i));
        Ok(scoring::cosine_from_parts(dot, q_norm, d_norm))
    }

    fn query_norms(&self, queries: &DescriptorSet, q: usize) -> Result<Vec<f64>> {
        (0..self.norms.len())
            .map(|m| {
                let n = scoring::l2_norm(queries.descriptor(m, q));
                if n == 0.0 {
                    Err(Error::ZeroVector)
                } else {
                    Ok(n)
                }
            })
            .collect()
    }

    fn score_entry(&self, queries: &DescriptorSet, q: usize, q_norms: &[f64], i: usize) -> Result<ScorePair> {
        match self.config.method {
            Method::Standard | Method::Stun => {
                Ok(ScorePair::single(self.cosine(queries, q, q_norms[0], 0, i)?))
            }
            Method::Ppe => {
                let (Some(gq), Some(gd)) = (queries.gaussian(q), self.database.gaussian(i)) else {
                    return Err(mismatch(Method::Ppe, "missing variances"));
                };
                Ok(ScorePair::single(scoring::mls_unchecked(gq, gd, self.config.mls_convention)))
            }
            Method::Dropout | Method::Ensemble => {
                let scores = q_norms
                    .iter()
                    .enumerate()
                    .map(|(m, &n)| self.cosine(queries, q, n, m, i))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ScorePair::from_member_scores(&scores))
            }
        }
    }

    /// Top-K visible database entries for query `q`.
    ///
    /// `queries` must have passed [`check_method_data`] against this database.
    pub fn rank(&self, queries: &DescriptorSet, q: usize, visible: &[usize]) -> Result<RankedCandidates> {
        if visible.is_empty() {
            return Err(Error::EmptyVisibleSet);
        }
        let q_norms = self.query_norms(queries, q)?;
        let scored = visible
            .iter()
            .map(|&i| {
                self.score_entry(queries, q, &q_norms, i).map(|p| RankedEntry {
                    index: i,
                    score: p.mean,
                    variance: p.variance,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(rank_scored(scored, self.config.top_k))
    }

    /// Ranks and attaches the scalar uncertainty of the top-1 prediction.
    pub fn predict(
        &self,
        queries: &DescriptorSet,
        q: usize,
        visible: &[usize],
    ) -> Result<UnlabeledPrediction> {
        let candidates = self.rank(queries, q, visible)?;
        let top = candidates.entries[0];
        let uncertainty = match (self.config.method, self.config.uncertainty_source) {
            (Method::Stun, _) => match queries.variance(q) {
                Some(var) => scoring::stun_uncertainty(var),
                None => return Err(mismatch(Method::Stun, "queries must carry variances")),
            },
            (Method::Dropout | Method::Ensemble, UncertaintySource::SimilarityVariance) => top.variance,
            _ => scoring::standard_uncertainty(top.score),
        };
        Ok(UnlabeledPrediction { query_index: q, candidates, uncertainty })
    }
}

/// One-shot [`Retriever::rank`] with data checks.
pub fn rank(
    queries: &DescriptorSet,
    q: usize,
    database: &DescriptorSet,
    visible: &[usize],
    config: &MethodConfig,
) -> Result<RankedCandidates> {
    check_method_data(queries, database, config)?;
    Retriever::new(database, *config).rank(queries, q, visible)
}

/// One-shot [`Retriever::predict`] with data checks.
pub fn predict(
    queries: &DescriptorSet,
    q: usize,
    database: &DescriptorSet,
    visible: &[usize],
    config: &MethodConfig,
) -> Result<UnlabeledPrediction> {
    check_method_data(queries, database, config)?;
    Retriever::new(database, *config).predict(queries, q, visible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{validate_set, SetParts};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn plain(rows: Vec<Vec<f32>>) -> DescriptorSet {
        validate_set(SetParts::from_rows(rows).unwrap()).unwrap()
    }

    fn probabilistic(rows: Vec<Vec<f32>>, var: Vec<Vec<f32>>) -> DescriptorSet {
        validate_set(SetParts::from_rows(rows).unwrap().with_variance_rows(var).unwrap()).unwrap()
    }

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn standard_picks_dominant_alignment() {
        let db = plain(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let q = plain(vec![vec![0.9, 0.1]]);
        let cfg = MethodConfig::new(Method::Standard, 2);
        let ranked = rank(&q, 0, &db, &all(2), &cfg).unwrap();
        assert_eq!(ranked.top().unwrap().index, 0);
        assert_eq!(ranked.len(), 2);
        assert!(ranked.entries()[0].score >= ranked.entries()[1].score);
    }

    #[test]
    fn ensemble_means_break_ties_by_index() {
        let from = |index, scores: &[f64]| {
            let p = ScorePair::from_member_scores(scores);
            RankedEntry { index, score: p.mean, variance: p.variance }
        };
        let ranked = rank_scored(vec![from(1, &[0.95, 0.85]), from(0, &[0.8, 1.0])], 2);
        assert_eq!(ranked.top().unwrap().index, 0);
        assert_abs_diff_eq!(ranked.top().unwrap().score, 0.9, epsilon = 1e-12);
        // exactly equal means
        let ranked = rank_scored(vec![from(1, &[1.0, 0.75]), from(0, &[0.75, 1.0])], 1);
        assert_eq!(ranked.entries(), &[from(0, &[0.75, 1.0])]);
    }

    #[test]
    fn empty_visible_set_is_an_error() {
        let db = plain(vec![vec![1.0, 0.0]]);
        for method in Method::ALL {
            let cfg = MethodConfig::new(method, 1);
            let r = Retriever::new(&db, cfg).rank(&db, 0, &[]);
            assert!(matches!(r, Err(Error::EmptyVisibleSet)), "{method:?}");
        }
    }

    #[test]
    fn top_k_is_capped_by_visible_size() {
        let db = plain(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let cfg = MethodConfig::new(Method::Standard, 10);
        let ranked = rank(&db, 0, &db, &[1, 2], &cfg).unwrap();
        assert_eq!(ranked.entries().iter().map(|e| e.index).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn standard_uncertainty_is_negated_best_cosine() {
        let db = plain(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let q = plain(vec![vec![0.95, (1.0f64 - 0.95 * 0.95).sqrt() as f32]]);
        let p = predict(&q, 0, &db, &all(2), &MethodConfig::new(Method::Standard, 1)).unwrap();
        assert_eq!(p.uncertainty, -p.predicted().score);
        assert_abs_diff_eq!(p.uncertainty, -0.95, epsilon = 1e-6);
    }

    #[test]
    fn stun_uncertainty_ignores_the_winner() {
        let q = probabilistic(vec![vec![1.0, 0.0]], vec![vec![0.2, 0.3]]);
        let cfg = MethodConfig::new(Method::Stun, 1);
        for db in [plain(vec![vec![1.0, 0.0], vec![0.0, 1.0]]), plain(vec![vec![-1.0, 0.2]])] {
            let p = predict(&q, 0, &db, &all(db.len()), &cfg).unwrap();
            assert_abs_diff_eq!(p.uncertainty, 0.5, epsilon = 1e-7);
        }
    }

    #[test]
    fn ensemble_variance_uncertainty() {
        // member 0: cos = 0.8, member 1: cos = 1.0
        let q = validate_set(
            SetParts::from_member_rows(vec![vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]]).unwrap(),
        )
        .unwrap();
        let db = validate_set(
            SetParts::from_member_rows(vec![vec![vec![0.8, 0.6]], vec![vec![1.0, 0.0]]]).unwrap(),
        )
        .unwrap();
        let cfg = MethodConfig::new(Method::Ensemble, 1)
            .with_uncertainty_source(UncertaintySource::SimilarityVariance);
        let p = predict(&q, 0, &db, &[0], &cfg).unwrap();
        assert_abs_diff_eq!(p.predicted().score, 0.9, epsilon = 1e-7);
        assert_abs_diff_eq!(p.uncertainty, 0.01, epsilon = 1e-7);

        let neg = predict(&q, 0, &db, &[0], &MethodConfig::new(Method::Dropout, 1)).unwrap();
        assert_eq!(neg.uncertainty, -neg.predicted().score);
    }

    #[test]
    fn ppe_ranks_by_mls() {
        let q = probabilistic(vec![vec![1.0, 0.0]], vec![vec![1.0, 1.0]]);
        let db = probabilistic(vec![vec![-1.0, 0.0], vec![1.0, 0.1]], vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let p = predict(&q, 0, &db, &all(2), &MethodConfig::new(Method::Ppe, 2)).unwrap();
        assert_eq!(p.predicted().index, 1);
        let expected =
            crate::scoring::mls_score(q.gaussian(0).unwrap(), db.gaussian(1).unwrap(), Default::default())
                .unwrap();
        assert_eq!(p.uncertainty, -expected);
    }

    #[test]
    fn method_data_mismatches() {
        let plain_set = plain(vec![vec![1.0, 0.0]]);
        for method in [Method::Ppe, Method::Stun] {
            let r = check_method_data(&plain_set, &plain_set, &MethodConfig::new(method, 1));
            assert!(matches!(r, Err(Error::MethodDataMismatch { .. })));
        }
        let multi = validate_set(
            SetParts::from_member_rows(vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]]).unwrap(),
        )
        .unwrap();
        let r = check_method_data(&multi, &plain_set, &MethodConfig::new(Method::Ensemble, 1));
        assert!(matches!(r, Err(Error::MemberCountMismatch { .. })));
        let r = check_method_data(&plain_set, &plain_set, &MethodConfig::new(Method::Standard, 0));
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn zero_descriptor_is_reported() {
        let db = plain(vec![vec![0.0, 0.0]]);
        let q = plain(vec![vec![1.0, 0.0]]);
        let r = rank(&q, 0, &db, &[0], &MethodConfig::new(Method::Standard, 1));
        assert!(matches!(r, Err(Error::ZeroVector)));
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        assert_eq!(threshold_decision(0.4, 0.5), Decision::Accept);
        assert_eq!(threshold_decision(0.6, 0.5), Decision::Reject);
        assert_eq!(threshold_decision(0.5, 0.5), Decision::Accept);
    }

    fn random_rows(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
        proptest::collection::vec(
            proptest::collection::vec(-1.0f32..1.0, dim)
                .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3)),
            n,
        )
    }

    proptest! {
        #[test]
        fn rank_ignores_visible_order(
            rows in random_rows(12, 4),
            query in random_rows(1, 4),
            k in 1usize..8,
            shift in 0usize..12,
        ) {
            // duplicate a row so ties occur
            let mut rows = rows;
            rows[7] = rows[3].clone();
            let db = plain(rows);
            let q = plain(query);
            let cfg = MethodConfig::new(Method::Standard, k);
            let base = rank(&q, 0, &db, &all(12), &cfg).unwrap();
            let mut shuffled = all(12);
            shuffled.rotate_left(shift);
            shuffled.reverse();
            prop_assert_eq!(&base, &rank(&q, 0, &db, &shuffled, &cfg).unwrap());
            for pair in base.entries().windows(2) {
                prop_assert!(pair[0].score >= pair[1].score);
                if pair[0].score == pair[1].score {
                    prop_assert!(pair[0].index < pair[1].index);
                }
            }
        }

        #[test]
        fn single_member_ensemble_matches_standard(
            rows in random_rows(9, 5),
            query in random_rows(2, 5),
        ) {
            let db = plain(rows);
            let q = plain(query);
            for qi in 0..2 {
                let s = predict(&q, qi, &db, &all(9), &MethodConfig::new(Method::Standard, 3)).unwrap();
                let e = predict(&q, qi, &db, &all(9), &MethodConfig::new(Method::Ensemble, 3)).unwrap();
                prop_assert_eq!(s.uncertainty.to_bits(), e.uncertainty.to_bits());
                prop_assert_eq!(s.candidates, e.candidates);
            }
        }

        #[test]
        fn increasing_transform_keeps_decision_order(
            a in -5.0f64..5.0, b in -5.0f64..5.0,
        ) {
            let f = |u: f64| 3.0 * u + 7.0;
            prop_assert_eq!(a.partial_cmp(&b), f(a).partial_cmp(&f(b)));
            prop_assert_eq!(a.partial_cmp(&b), a.exp().partial_cmp(&b.exp()));
            prop_assert_eq!(threshold_decision(a, b), threshold_decision(f(a), f(b)));
        }
    }
}
