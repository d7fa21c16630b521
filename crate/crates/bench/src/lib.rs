//! Fixtures shared by the benchmarks.

use uapr_core::synth::{generate, SyntheticData, WorldSpec};
use uapr_core::Method;

/// Batch world sized for `method`: probabilistic for PPE and STUN, five
/// members for dropout and ensembles, a single member otherwise.
pub fn world_for(method: Method, places: usize, dim: usize, queries: usize) -> SyntheticData {
    let mut spec = WorldSpec::batch(places, dim, queries, 42);
    spec.noise_sigma = 0.15;
    spec.novel_fraction = 0.1;
    match method {
        Method::Ppe | Method::Stun => spec.probabilistic = true,
        Method::Dropout | Method::Ensemble => spec.members = 5,
        Method::Standard => {}
    }
    generate(&spec).expect("benchmark spec is valid")
}

/// Two uncertainty samples of `n` values each with partial overlap.
pub fn uncertainty_classes(n: usize) -> (Vec<f64>, Vec<f64>) {
    // low-discrepancy values keep the fixture free of an RNG dependency
    let golden = 0.618_033_988_749_895;
    let correct = (0..n).map(|i| (i as f64 * golden).fract()).collect();
    let incorrect = (0..n).map(|i| 0.3 + (i as f64 * golden * 1.5).fract()).collect();
    (correct, incorrect)
}
