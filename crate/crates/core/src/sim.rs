//! Gradient descent, noisy gradient descent, and the likelihood-ratio
//! distinguisher between clean and backdoored noisy updates.
//!
//! Noise is drawn with `rand_distr::StandardNormal` (a ziggurat sampler)
//! from ChaCha8 streams. Trial `i` under hypothesis `h` uses the stream keyed
//! by `(seed, i, h)`, so parallel runs are reproducible and the clean and
//! backdoored streams are independent.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_bad_dataset, Dataset, Trigger};
use crate::error::{check_dim, Error, Result};
use crate::gdp::{gaussian_tradeoff, std_normal_quantile};
use crate::risk::{empirical_risk, risk_gradient, ModelWeights};
use crate::seed;

/// Settings for noisy gradient descent `w ← w − γ(∇L(w, D) + η)`,
/// `η ~ N(0, σ²I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyGdConfig {
    pub gamma: f64,
    pub sigma: f64,
    pub steps: usize,
    pub seed: u64,
}

impl NoisyGdConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid("sigma", format!("must be finite and nonnegative, got {}", self.sigma)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        Ok(())
    }

    /// Standard deviation of the update increment, `σ_γ = γσ`.
    pub fn sigma_gamma(&self) -> f64 {
        self.gamma * self.sigma
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("gamma", format!("must be positive and finite, got {gamma}")))
    }
}

/// `w − γ·∇L(w, D)`.
pub fn gd_step(w: &ModelWeights, d: &Dataset, gamma: f64) -> Result<ModelWeights> {
    check_gamma(gamma)?;
    let g = risk_gradient(w, d)?;
    step_with(w, &g, None, gamma)
}

/// `w − γ·(∇L(w, D) + noise)`.
pub fn noisy_gd_step(
    w: &ModelWeights,
    d: &Dataset,
    cfg: &NoisyGdConfig,
    noise: &DVector<f64>,
) -> Result<ModelWeights> {
    check_gamma(cfg.gamma)?;
    check_dim(d.feature_dim(), noise.len())?;
    let g = risk_gradient(w, d)?;
    step_with(w, &g, Some(noise), cfg.gamma)
}

fn step_with(
    w: &ModelWeights,
    grad: &DVector<f64>,
    noise: Option<&DVector<f64>>,
    gamma: f64,
) -> Result<ModelWeights> {
    let dir = match noise {
        Some(n) => grad + n,
        None => grad.clone(),
    };
    ModelWeights::from_vector(w.as_vector() - dir * gamma)
}

fn raw_step(w: &DVector<f64>, grad: &DVector<f64>, noise: &DVector<f64>, gamma: f64) -> DVector<f64> {
    w - (grad + noise) * gamma
}

fn draw_noise<R: Rng>(rng: &mut R, dim: usize, sigma: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

/// `count` one-step increments `w' − w` of noisy gradient descent on `d`.
pub fn noisy_increments(
    w: &ModelWeights,
    d: &Dataset,
    cfg: &NoisyGdConfig,
    count: usize,
) -> Result<Vec<DVector<f64>>> {
    cfg.validate()?;
    let g = risk_gradient(w, d)?;
    let dim = w.len();
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::substream(cfg.seed, i as u64, seed::TAG_MOMENTS);
            let noise = draw_noise(&mut rng, dim, cfg.sigma);
            raw_step(w.as_vector(), &g, &noise, cfg.gamma) - w.as_vector()
        })
        .collect())
}

/// Weights and risks along a run. `risks[k]` is the risk of `weights[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub weights: Vec<ModelWeights>,
    pub risks: Vec<f64>,
    /// Set when a step produced a non-finite weight or risk; the run stops
    /// before recording it.
    pub diverged: bool,
}

impl Trajectory {
    /// CSV with header `step,risk,w_0,…,w_{d-1}`.
    pub fn to_csv(&self) -> String {
        let dim = self.weights.first().map_or(0, |w| w.len());
        let mut out = String::from("step,risk");
        for j in 0..dim {
            let _ = write!(out, ",w_{j}");
        }
        out.push('\n');
        for (k, (w, r)) in self.weights.iter().zip(&self.risks).enumerate() {
            let _ = write!(out, "{k},{r}");
            for v in w.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Runs `cfg.steps` steps from `w0`. Step `k` of a noisy run draws its noise
/// from the stream keyed by `(cfg.seed, k)`.
pub fn run_trajectory(w0: &ModelWeights, d: &Dataset, cfg: &NoisyGdConfig, noisy: bool) -> Result<Trajectory> {
    cfg.validate()?;
    let mut weights = vec![w0.clone()];
    let mut risks = vec![empirical_risk(w0, d)?];
    let dim = w0.len();
    let mut diverged = false;
    for k in 0..cfg.steps {
        let w = weights.last().expect("nonempty");
        let g = risk_gradient(w, d)?;
        let next = if noisy {
            let mut rng = seed::substream(cfg.seed, k as u64, seed::TAG_TRAJECTORY);
            raw_step(w.as_vector(), &g, &draw_noise(&mut rng, dim, cfg.sigma), cfg.gamma)
        } else {
            w.as_vector() - g * cfg.gamma
        };
        let Ok(next) = ModelWeights::from_vector(next) else {
            diverged = true;
            break;
        };
        let risk = empirical_risk(&next, d)?;
        if !risk.is_finite() {
            diverged = true;
            break;
        }
        weights.push(next);
        risks.push(risk);
    }
    Ok(Trajectory {
        weights,
        risks,
        diverged,
    })
}

/// Log-likelihood ratio `Wᵀ·Δw` between `N(μ0, σ_γ²I)` and `N(μ1, σ_γ²I)`,
/// `W = (μ1 − μ0)/σ_γ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrStatistic {
    direction: DVector<f64>,
    center: f64,
    snr: f64,
}

impl LlrStatistic {
    pub fn new(mu0: &DVector<f64>, mu1: &DVector<f64>, sigma_gamma: f64) -> Result<Self> {
        if !(sigma_gamma.is_finite() && sigma_gamma > 0.0) {
            return Err(Error::invalid("sigma_gamma", format!("must be positive, got {sigma_gamma}")));
        }
        check_dim(mu0.len(), mu1.len())?;
        let shift = mu1 - mu0;
        let direction = &shift / (sigma_gamma * sigma_gamma);
        let center = direction.dot(&((mu0 + mu1) * 0.5));
        let snr = shift.norm() / sigma_gamma;
        Ok(Self {
            direction,
            center,
            snr,
        })
    }

    /// `d = ‖μ1 − μ0‖/σ_γ`.
    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn raw(&self, delta_w: &DVector<f64>) -> f64 {
        self.direction.dot(delta_w)
    }

    /// Shifted by `Wᵀ(μ0 + μ1)/2` so that it is `N(−d²/2, d²)` under the
    /// clean hypothesis and `N(d²/2, d²)` under the backdoored one.
    pub fn recentered(&self, delta_w: &DVector<f64>) -> f64 {
        self.raw(delta_w) - self.center
    }
}

/// `Wᵀ·Δw` with `W = (μ1 − μ0)/σ_γ²`.
pub fn llr_statistic(
    delta_w: &DVector<f64>,
    mu0: &DVector<f64>,
    mu1: &DVector<f64>,
    sigma_gamma: f64,
) -> Result<f64> {
    check_dim(mu0.len(), delta_w.len())?;
    Ok(LlrStatistic::new(mu0, mu1, sigma_gamma)?.raw(delta_w))
}

/// Empirical error rates of the size-α likelihood-ratio test at one α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguisherResult {
    pub alpha: f64,
    /// Rejection threshold on the recentered statistic, the `1 − α`
    /// quantile of `N(−d²/2, d²)`.
    pub threshold: f64,
    pub est_type1: f64,
    pub est_type2: f64,
    pub trials: usize,
    /// Binomial standard error of `est_type2` at the analytic type-II value.
    pub std_err: f64,
    pub analytic_type2: f64,
}

impl DistinguisherResult {
    pub fn est_power(&self) -> f64 {
        1.0 - self.est_type2
    }

    pub fn analytic_power(&self) -> f64 {
        1.0 - self.analytic_type2
    }

    /// Whether `est_type2` lies within `k` standard errors of the analytic value.
    pub fn within(&self, k: f64) -> bool {
        (self.est_type2 - self.analytic_type2).abs() <= k * self.std_err
    }

    pub fn csv_header() -> &'static str {
        "alpha,threshold,est_type1,est_type2,std_err,trials"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.alpha, self.threshold, self.est_type1, self.est_type2, self.std_err, self.trials
        )
    }
}

pub fn distinguisher_csv(results: &[DistinguisherResult]) -> String {
    let mut out = format!("{}\n", DistinguisherResult::csv_header());
    for r in results {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub const MIN_TRIALS: usize = 1000;

/// Simulates `trials` one-step noisy updates from `w` on each of `d0` and
/// `d0 ∪ {v}` and runs the likelihood-ratio test at each α.
///
/// Thresholds come from the analytic null. When the two update distributions
/// coincide the statistic is identically equal to the threshold, and the test
/// rejects ties with probability α.
pub fn monte_carlo_tradeoff(
    w: &ModelWeights,
    d0: &Dataset,
    v: &Trigger,
    cfg: &NoisyGdConfig,
    alphas: &[f64],
    trials: usize,
) -> Result<Vec<DistinguisherResult>> {
    cfg.validate()?;
    if cfg.sigma <= 0.0 {
        return Err(Error::invalid("sigma", "the distinguisher needs sigma > 0"));
    }
    if trials < MIN_TRIALS {
        return Err(Error::invalid("trials", format!("must be at least {MIN_TRIALS}, got {trials}")));
    }
    let d1 = make_bad_dataset(d0, v)?;
    let g0 = risk_gradient(w, d0)?;
    let g1 = risk_gradient(w, &d1)?;
    let llr = LlrStatistic::new(&(&g0 * -cfg.gamma), &(&g1 * -cfg.gamma), cfg.sigma_gamma())?;
    let d = llr.snr();

    let simulate = |grad: &DVector<f64>, tag: u64| -> Vec<(f64, f64)> {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed::substream(cfg.seed, i as u64, tag);
                let noise = draw_noise(&mut rng, w.len(), cfg.sigma);
                let next = raw_step(w.as_vector(), grad, &noise, cfg.gamma);
                let stat = llr.recentered(&(next - w.as_vector()));
                (stat, rng.random::<f64>())
            })
            .collect()
    };
    let clean = simulate(&g0, seed::TAG_CLEAN);
    let bad = simulate(&g1, seed::TAG_BACKDOORED);

    let n = trials as f64;
    alphas
        .iter()
        .map(|&alpha| {
            let analytic = gaussian_tradeoff(d, alpha)?;
            let threshold = -0.5 * d * d - d * std_normal_quantile(alpha)?;
            let rejects = |&(s, u): &(f64, f64)| s > threshold || (s == threshold && u < alpha);
            let type1 = clean.iter().filter(|p| rejects(p)).count() as f64 / n;
            let type2 = bad.iter().filter(|p| !rejects(p)).count() as f64 / n;
            let b = analytic.type2;
            Ok(DistinguisherResult {
                alpha,
                threshold,
                est_type1: type1,
                est_type2: type2,
                trials,
                std_err: (b * (1.0 - b) / n).sqrt(),
                analytic_type2: b,
            })
        })
        .collect()
}
