#![allow(dead_code)]

use badgd::risk::{empirical_risk, point_gradient, point_loss, risk_gradient};
use badgd::{Dataset, Example, ModelWeights, Trigger};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/two_point.csv");

pub fn two_point() -> Dataset {
    Dataset::from_rows(&[(vec![1.0, 0.0], 1.0), (vec![0.0, 2.0], -1.0)]).unwrap()
}

pub fn weights(v: &[f64]) -> ModelWeights {
    ModelWeights::new(v.to_vec()).unwrap()
}

pub struct Instance {
    pub data: Dataset,
    pub w: ModelWeights,
    pub v: Trigger,
}

fn entries(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-10.0..=10.0)).collect()
}

/// Random instance with `feature_dim ≤ 8`, `n ≤ 32`, entries in `[−10, 10]`.
pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=8);
    let n = rng.random_range(1..=32);
    let examples = (0..n)
        .map(|_| {
            let x = entries(&mut rng, dim);
            Example::new(x, rng.random_range(-10.0..=10.0)).unwrap()
        })
        .collect();
    let w = ModelWeights::new(entries(&mut rng, dim)).unwrap();
    let x_v = entries(&mut rng, dim);
    let v = Trigger::manual(x_v, rng.random_range(-10.0..=10.0)).unwrap();
    Instance {
        data: Dataset::new(examples).unwrap(),
        w,
        v,
    }
}

/// `1 +` the largest loss or gradient norm entering an identity; the unit
/// in which floating-point error of the direct differences accumulates.
pub fn magnitude(inst: &Instance) -> f64 {
    let e = inst.v.as_example().unwrap();
    1.0 + [
        point_loss(&inst.w, &e).unwrap(),
        empirical_risk(&inst.w, &inst.data).unwrap(),
        point_gradient(&inst.w, &e).unwrap().norm(),
        risk_gradient(&inst.w, &inst.data).unwrap().norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}
