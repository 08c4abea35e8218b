//! Random-search oracle for trigger objectives.
//!
//! Independent of the closed-form constructors: candidates are drawn
//! uniformly from the feasible set and the best one is polished by
//! coordinate search. It only needs to be independent, not optimal.
//!
//! Candidate `i` is drawn from its own stream keyed by `(seed, i)`, so the
//! result does not depend on the rayon thread count.
//!
//! Refinement schedule: per-coordinate steps start at `x_norm_max/4` for
//! feature coordinates and `B/4` for the response. A sweep tries `+h` and
//! `−h` on every coordinate, projecting back onto the feasible set, and
//! keeps any strict improvement. A sweep without improvement halves all
//! steps. Refinement stops once the response step falls below `1e-12·B` or
//! after [`MAX_SWEEPS`] sweeps.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Objective, TriggerConstraints};
use crate::dataset::{SufficientStats, Trigger, TriggerKind};
use crate::error::{check_dim, Error, Result};
use crate::risk::ModelWeights;
use crate::seed;

const MAX_SWEEPS: usize = 10_000;

/// Where candidate features come from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SearchRegion {
    /// `‖x_v‖₂ ≤ x_norm_max`.
    #[default]
    Ball,
    /// `x_v` fixed; only `y_v` is searched.
    FixedFeatures(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub region: SearchRegion,
    pub refine: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            region: SearchRegion::Ball,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub trigger: Trigger,
    pub value: f64,
    pub candidates: usize,
    pub best_candidate: usize,
}

struct Problem<'a> {
    objective: &'a Objective,
    w: &'a ModelWeights,
    stats: &'a SufficientStats,
    constraints: &'a TriggerConstraints,
}

impl Problem<'_> {
    fn trigger(&self, x: DVector<f64>, y: f64) -> Trigger {
        Trigger {
            kind: TriggerKind::Manual,
            x_v: x,
            y_v: y,
            trigger_scale: None,
            response_bound: Some(self.constraints.response_bound),
        }
    }

    fn value(&self, x: &DVector<f64>, y: f64) -> f64 {
        // Inputs were dimension-checked up front; evaluation cannot fail.
        self.objective
            .evaluate(self.w, self.stats, &self.trigger(x.clone(), y))
            .unwrap_or(f64::NEG_INFINITY)
    }

    fn project(&self, x: &mut DVector<f64>, y: &mut f64, fixed: bool) {
        let b = self.constraints.response_bound;
        *y = y.clamp(-b, b);
        if !fixed {
            let norm = x.norm();
            if norm > self.constraints.x_norm_max {
                *x *= self.constraints.x_norm_max / norm;
            }
        }
    }
}

fn sample(
    region: &SearchRegion,
    dim: usize,
    c: &TriggerConstraints,
    seed: u64,
    index: usize,
) -> (DVector<f64>, f64) {
    let mut rng = seed::substream(seed, index as u64, seed::TAG_SEARCH);
    let x = match region {
        SearchRegion::FixedFeatures(x) => x.clone(),
        SearchRegion::Ball => {
            let dir = loop {
                let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let n = g.norm();
                if n > 0.0 {
                    break g / n;
                }
            };
            let u: f64 = rng.random();
            dir * (c.x_norm_max * u.powf(1.0 / dim as f64))
        }
    };
    let y = c.response_bound * (2.0 * rng.random::<f64>() - 1.0);
    (x, y)
}

fn refine(p: &Problem<'_>, fixed: bool, mut x: DVector<f64>, mut y: f64, mut best: f64) -> (DVector<f64>, f64, f64) {
    let dim = x.len();
    let mut hx = p.constraints.x_norm_max / 4.0;
    let mut hy = p.constraints.response_bound / 4.0;
    let y_floor = 1e-12 * p.constraints.response_bound;
    let coords = if fixed { 1 } else { dim + 1 };
    for _ in 0..MAX_SWEEPS {
        if hy < y_floor {
            break;
        }
        let mut improved = false;
        for c in 0..coords {
            for sign in [1.0, -1.0] {
                let (mut cx, mut cy) = (x.clone(), y);
                if c + 1 == coords {
                    cy += sign * hy;
                } else {
                    cx[c] += sign * hx;
                }
                p.project(&mut cx, &mut cy, fixed);
                let v = p.value(&cx, cy);
                if v > best {
                    (x, y, best) = (cx, cy, v);
                    improved = true;
                }
            }
        }
        if !improved {
            hx *= 0.5;
            hy *= 0.5;
        }
    }
    (x, y, best)
}

/// Best of `budget` random feasible candidates, optionally refined.
///
/// Ties between candidates go to the lowest index.
pub fn oracle_search(
    objective: &Objective,
    w: &ModelWeights,
    stats: &SufficientStats,
    constraints: &TriggerConstraints,
    budget: usize,
    seed: u64,
    options: &SearchOptions,
) -> Result<OracleResult> {
    if budget == 0 {
        return Err(Error::invalid("budget", "must be at least 1"));
    }
    constraints.validate()?;
    let dim = stats.feature_dim();
    check_dim(dim, w.len())?;
    if let SearchRegion::FixedFeatures(x) = &options.region {
        check_dim(dim, x.len())?;
    }
    let problem = Problem {
        objective,
        w,
        stats,
        constraints,
    };
    let (best_index, best_value) = (0..budget)
        .into_par_iter()
        .map(|i| {
            let (x, y) = sample(&options.region, dim, constraints, seed, i);
            (i, problem.value(&x, y))
        })
        .reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    let (mut x, mut y) = sample(&options.region, dim, constraints, seed, best_index);
    let mut value = best_value;
    if options.refine {
        let fixed = matches!(options.region, SearchRegion::FixedFeatures(_));
        (x, y, value) = refine(&problem, fixed, x, y, value);
    }
    Ok(OracleResult {
        trigger: problem.trigger(x, y),
        value,
        candidates: budget,
        best_candidate: best_index,
    })
}
