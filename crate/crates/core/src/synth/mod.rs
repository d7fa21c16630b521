//! Seeded synthetic descriptor worlds with known ground truth.
//!
//! Each place owns a latent unit vector. An observation of a place is the
//! latent plus isotropic Gaussian noise, renormalized; the `M` members of an
//! observation are independent noise draws around the same latent, which is
//! how ensemble members and dropout passes are simulated. Places sit ten
//! revisit radii apart, and observations of one place stay within one radius
//! of each other.

pub mod oracle;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_set, DescriptorSet, Pose, SetParts};

/// Distance between neighbouring place centres, in revisit radii.
pub const PLACE_SPACING_RADII: f64 = 10.0;

const MIN_VARIANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    /// One database observation per known place, then independent queries.
    #[default]
    Batch,
    /// A single timed run that wanders between new and earlier places.
    Session { step_seconds: f64, revisit_probability: f64 },
}

/// Configuration document for [`generate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    /// Number of known places, at least 2.
    pub places: usize,
    pub dim: usize,
    /// Per-dimension standard deviation of the observation noise.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "one")]
    pub members: usize,
    /// Query count (batch) or run length (session).
    pub queries: usize,
    /// Batch only: share of queries taken at places absent from the database.
    #[serde(default)]
    pub novel_fraction: f64,
    #[serde(default = "default_radius")]
    pub revisit_radius: f64,
    /// Log-normal spread of the per-observation noise scale. 0 gives every
    /// observation the same noise level.
    #[serde(default)]
    pub difficulty_spread: f64,
    /// Emit per-dimension variances (single-member sets only).
    #[serde(default)]
    pub probabilistic: bool,
    #[serde(default)]
    pub layout: Layout,
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn default_radius() -> f64 {
    crate::protocol::BATCH_REVISIT_RADIUS
}

impl WorldSpec {
    pub fn batch(places: usize, dim: usize, queries: usize, seed: u64) -> Self {
        Self {
            places,
            dim,
            noise_sigma: 0.0,
            members: 1,
            queries,
            novel_fraction: 0.0,
            revisit_radius: default_radius(),
            difficulty_spread: 0.0,
            probabilistic: false,
            layout: Layout::Batch,
            seed,
        }
    }

    pub fn session(places: usize, dim: usize, steps: usize, seed: u64) -> Self {
        Self {
            revisit_radius: crate::protocol::SESSION_REVISIT_RADIUS,
            layout: Layout::Session { step_seconds: 10.0, revisit_probability: 0.5 },
            ..Self::batch(places, dim, steps, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        if self.places < 2 {
            return fail("at least two places are required");
        }
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.members == 0 {
            return fail("members must be at least 1");
        }
        if self.queries == 0 {
            return fail("queries must be at least 1");
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return fail("noise_sigma must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.novel_fraction) {
            return fail("novel_fraction must lie in [0, 1]");
        }
        if !self.revisit_radius.is_finite() || self.revisit_radius <= 0.0 {
            return fail("revisit_radius must be finite and positive");
        }
        if !self.difficulty_spread.is_finite() || self.difficulty_spread < 0.0 {
            return fail("difficulty_spread must be finite and non-negative");
        }
        if self.probabilistic && self.members != 1 {
            return fail("probabilistic worlds have a single member");
        }
        if let Layout::Session { step_seconds, revisit_probability } = self.layout {
            if !step_seconds.is_finite() || step_seconds <= 0.0 {
                return fail("step_seconds must be finite and positive");
            }
            if !(0.0..=1.0).contains(&revisit_probability) {
                return fail("revisit_probability must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// One observation in the world: the place it shows (`None` for a place the
/// database never sees), where, and when.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub place: Option<usize>,
    pub pose: Pose,
    pub timestamp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    pub spec: WorldSpec,
    /// Unit-norm latent vector per known place.
    pub latents: Vec<Vec<f64>>,
    pub database_visits: Vec<Visit>,
    pub query_visits: Vec<Visit>,
}

/// Generated sets. In session layout `queries` and `database` are the same run.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub world: SyntheticWorld,
    pub queries: DescriptorSet,
    pub database: DescriptorSet,
}

impl SyntheticData {
    /// Query places that do not appear in the database.
    pub fn novel_query_count(&self) -> usize {
        self.world.query_visits.iter().filter(|v| v.place.is_none()).count()
    }
}

struct Generator {
    rng: ChaCha8Rng,
    spec: WorldSpec,
}

impl Generator {
    fn unit_vector(&mut self) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..self.spec.dim).map(|_| self.rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }

    fn place_centre(&self, slot: usize) -> Pose {
        [slot as f64 * PLACE_SPACING_RADII * self.spec.revisit_radius, 0.0, 0.0]
    }

    /// Uniform point in a disc of radius `r/2` around the centre, so any two
    /// observations of a place are within `r` of each other.
    fn jittered(&mut self, centre: Pose) -> Pose {
        let max = 0.49 * self.spec.revisit_radius;
        let r = max * self.rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * self.rng.random::<f64>();
        [centre[0] + r * theta.cos(), centre[1] + r * theta.sin(), centre[2]]
    }

    /// Members and (optionally) variances of one observation of `latent`.
    fn observe(&mut self, latent: &[f64]) -> (Vec<Vec<f32>>, Vec<f32>) {
        let spread = self.spec.difficulty_spread;
        let scale = if spread > 0.0 {
            self.spec.noise_sigma * (spread * self.rng.sample::<f64, _>(StandardNormal)).exp()
        } else {
            self.spec.noise_sigma
        };
        let mut members = Vec::with_capacity(self.spec.members);
        for _ in 0..self.spec.members {
            let mut v: Vec<f64> =
                latent.iter().map(|&x| x + scale * self.rng.sample::<f64, _>(StandardNormal)).collect();
            let mut norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                v = latent.to_vec();
                norm = 1.0;
            }
            members.push(v.iter().map(|x| (x / norm) as f32).collect());
        }
        let variance = if self.spec.probabilistic {
            let base = (scale * scale).max(MIN_VARIANCE);
            (0..self.spec.dim)
                .map(|_| (base * (0.1 * self.rng.sample::<f64, _>(StandardNormal)).exp()) as f32)
                .map(|v| v.max(MIN_VARIANCE as f32))
                .collect()
        } else {
            Vec::new()
        };
        (members, variance)
    }

    fn build_set(
        &mut self,
        visits: &[Visit],
        latents: &[Vec<f64>],
        novel: &[Vec<f64>],
        timed: bool,
        label: &str,
    ) -> Result<DescriptorSet> {
        let (n, dim, m) = (visits.len(), self.spec.dim, self.spec.members);
        let mut members = vec![Vec::with_capacity(n * dim); m];
        let mut variances = Vec::new();
        let mut novel_iter = novel.iter();
        for visit in visits {
            let latent = match visit.place {
                Some(p) => &latents[p],
                None => novel_iter.next().expect("one novel latent per novel visit"),
            };
            let (obs, var) = self.observe(latent);
            for (dst, src) in members.iter_mut().zip(obs) {
                dst.extend(src);
            }
            variances.extend(var);
        }
        let parts = SetParts {
            count: n,
            dim,
            members,
            variances: self.spec.probabilistic.then_some(variances),
            poses: Some(visits.iter().map(|v| v.pose).collect()),
            timestamps: timed.then(|| visits.iter().map(|v| v.timestamp).collect()),
            label: label.to_string(),
        };
        validate_set(parts)
    }
}

/// Builds query and database sets for `spec`. Identical specs give
/// bit-identical output.
pub fn generate(spec: &WorldSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut gen = Generator { rng: ChaCha8Rng::seed_from_u64(spec.seed), spec: spec.clone() };
    let latents: Vec<Vec<f64>> = (0..spec.places).map(|_| gen.unit_vector()).collect();

    match spec.layout {
        Layout::Batch => {
            let database_visits: Vec<Visit> = (0..spec.places)
                .map(|p| {
                    let pose = gen.jittered(gen.place_centre(p));
                    Visit { place: Some(p), pose, timestamp: 0.0 }
                })
                .collect();
            let novel_count = (spec.novel_fraction * spec.queries as f64).round() as usize;
            let mut query_visits: Vec<Visit> = (0..spec.queries - novel_count)
                .map(|_| {
                    let p = gen.rng.random_range(0..spec.places);
                    let pose = gen.jittered(gen.place_centre(p));
                    Visit { place: Some(p), pose, timestamp: 0.0 }
                })
                .collect();
            // novel places continue the line past the last known place
            query_visits.extend((0..novel_count).map(|k| {
                let pose = gen.jittered(gen.place_centre(spec.places + 1 + k));
                Visit { place: None, pose, timestamp: 0.0 }
            }));
            query_visits.shuffle(&mut gen.rng);
            let novel: Vec<Vec<f64>> = (0..novel_count).map(|_| gen.unit_vector()).collect();

            let database = gen.build_set(&database_visits, &latents, &[], false, "synthetic-database")?;
            let queries = gen.build_set(&query_visits, &latents, &novel, false, "synthetic-queries")?;
            Ok(SyntheticData {
                world: SyntheticWorld { spec: spec.clone(), latents, database_visits, query_visits },
                queries,
                database,
            })
        }
        Layout::Session { step_seconds, revisit_probability } => {
            let mut visited: Vec<usize> = Vec::new();
            let mut visits = Vec::with_capacity(spec.queries);
            for step in 0..spec.queries {
                let fresh_left = visited.len() < spec.places;
                let revisit =
                    !visited.is_empty() && (!fresh_left || gen.rng.random::<f64>() < revisit_probability);
                let place = if revisit {
                    visited[gen.rng.random_range(0..visited.len())]
                } else {
                    visited.push(visited.len());
                    visited.len() - 1
                };
                let pose = gen.jittered(gen.place_centre(place));
                visits.push(Visit { place: Some(place), pose, timestamp: step as f64 * step_seconds });
            }
            let run = gen.build_set(&visits, &latents, &[], true, "synthetic-run")?;
            Ok(SyntheticData {
                world: SyntheticWorld {
                    spec: spec.clone(),
                    latents,
                    database_visits: visits.clone(),
                    query_visits: visits,
                },
                queries: run.clone(),
                database: run,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::recall_at_k;
    use crate::protocol::{run_batch, run_session, ProtocolConfig};
    use crate::types::{pose_distance, Method, MethodConfig, SetKind};

    #[test]
    fn noiseless_worlds_are_perfectly_recalled() {
        let mut spec = WorldSpec::batch(30, 8, 60, 7);
        spec.members = 3;
        let data = generate(&spec).unwrap();
        for method in [Method::Standard, Method::Dropout, Method::Ensemble] {
            let run = run_batch(
                &data.queries,
                &data.database,
                &ProtocolConfig::batch(),
                &MethodConfig::new(method, 1),
            )
            .unwrap();
            assert_eq!(recall_at_k(&run, 1).unwrap(), 100.0, "{method:?}");
            assert_eq!(run.counts.incorrect_match, 0);
        }
        spec.members = 1;
        spec.probabilistic = true;
        let data = generate(&spec).unwrap();
        for method in [Method::Ppe, Method::Stun] {
            let run = run_batch(
                &data.queries,
                &data.database,
                &ProtocolConfig::batch(),
                &MethodConfig::new(method, 1),
            )
            .unwrap();
            assert_eq!(recall_at_k(&run, 1).unwrap(), 100.0, "{method:?}");
        }
    }

    #[test]
    fn novel_fraction_is_exact() {
        let mut spec = WorldSpec::batch(10, 4, 50, 3);
        spec.novel_fraction = 0.2;
        spec.noise_sigma = 0.1;
        let data = generate(&spec).unwrap();
        assert_eq!(data.novel_query_count(), 10);
        let run = run_batch(
            &data.queries,
            &data.database,
            &ProtocolConfig::batch(),
            &MethodConfig::new(Method::Standard, 1),
        )
        .unwrap();
        let without = run.predictions.iter().filter(|p| !p.has_match).count();
        assert_eq!(without, 10);
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let mut spec = WorldSpec::batch(12, 6, 20, 99);
        spec.noise_sigma = 0.3;
        spec.members = 4;
        spec.difficulty_spread = 0.5;
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let mut other = spec.clone();
        other.seed = 100;
        assert_ne!(generate(&spec).unwrap().queries, generate(&other).unwrap().queries);
    }

    #[test]
    fn layout_geometry() {
        let mut spec = WorldSpec::batch(8, 4, 40, 5);
        spec.novel_fraction = 0.25;
        let data = generate(&spec).unwrap();
        let w = &data.world;
        for (a, va) in w.latents.iter().enumerate() {
            let norm = va.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "latent {a}");
        }
        for q in &w.query_visits {
            for d in &w.database_visits {
                let dist = pose_distance(&q.pose, &d.pose);
                if q.place.is_some() && q.place == d.place {
                    assert!(dist <= spec.revisit_radius);
                } else {
                    assert!(dist > 5.0 * spec.revisit_radius);
                }
            }
        }
    }

    #[test]
    fn probabilistic_and_session_sets() {
        let mut spec = WorldSpec::session(20, 6, 80, 11);
        spec.probabilistic = true;
        spec.noise_sigma = 0.2;
        let data = generate(&spec).unwrap();
        assert_eq!(data.queries.kind(), SetKind::Probabilistic);
        data.queries.check_session_order().unwrap();
        let run = run_session(&data.queries, &ProtocolConfig::session(), &MethodConfig::new(Method::Stun, 3))
            .unwrap();
        assert_eq!(run.counts.total, 80);
        assert_eq!(run.counts.skipped_empty_visible, 9);
    }

    #[test]
    fn invalid_specs() {
        let good = WorldSpec::batch(4, 4, 4, 0);
        let cases: Vec<fn(&mut WorldSpec)> = vec![
            |s| s.places = 1,
            |s| s.dim = 0,
            |s| s.members = 0,
            |s| s.noise_sigma = -1.0,
            |s| s.novel_fraction = 1.5,
            |s| {
                s.members = 2;
                s.probabilistic = true;
            },
            |s| s.layout = Layout::Session { step_seconds: 0.0, revisit_probability: 0.5 },
        ];
        for mutate in cases {
            let mut spec = good.clone();
            mutate(&mut spec);
            assert!(matches!(generate(&spec), Err(Error::InvalidSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn spec_document_round_trip() {
        let json = r#"{"places": 5, "dim": 3, "queries": 7, "seed": 1,
            "layout": {"kind": "session", "step_seconds": 5.0, "revisit_probability": 0.3}}"#;
        let spec: WorldSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.members, 1);
        assert_eq!(spec.revisit_radius, 25.0);
        let back: WorldSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
