//! Trigger objectives, their square-loss reductions, and closed-form constructors.
//!
//! Three objectives are tracked, each with its own scaling convention:
//!
//! | objective      | unscaled value                                  | scaled value             | factor          |
//! |----------------|-------------------------------------------------|--------------------------|-----------------|
//! | risk warp      | `J = ℓ(w, v) − L(w, D0)`                         | risk gap `L(D1) − L(D0)`  | `1/(n+1)`       |
//! | grad warp      | `‖G‖`, `G = (S_yx − y_v x_v) + (x_v x_vᵀ − S_xx)w` | `‖∇L(D1) − ∇L(D0)‖`       | `2/(n+1)`       |
//! | grad-dist warp | `‖G‖`                                            | SNR `d`                  | `2/((n+1)σ)`    |
//!
//! Reports always carry both values and the factor between them.

mod search;

pub use search::{oracle_search, OracleResult, SearchOptions, SearchRegion};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::{Trigger, TriggerKind, SufficientStats};
use crate::error::{check_dim, Error, Result};
use crate::risk::{square_loss_gradient_gap_direction, ModelWeights};

/// Feasible set and scale for trigger construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerConstraints {
    /// ℓ2 bound on `x_v`, used by the search oracle.
    pub x_norm_max: f64,
    /// `B` in `|y_v| ≤ B`.
    pub response_bound: f64,
    /// Multiplier applied to `w` by the constructors.
    pub trigger_scale: f64,
}

impl TriggerConstraints {
    pub fn new(x_norm_max: f64, response_bound: f64, trigger_scale: f64) -> Result<Self> {
        let c = Self {
            x_norm_max,
            response_bound,
            trigger_scale,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("x_norm_max", self.x_norm_max),
            ("response_bound", self.response_bound),
            ("trigger_scale", self.trigger_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which distortion an objective measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "lowercase")]
pub enum Objective {
    RiskWarp,
    GradWarp,
    GradDistWarp { gamma: f64, sigma: f64 },
}

impl Objective {
    pub fn kind(&self) -> TriggerKind {
        match self {
            Objective::RiskWarp => TriggerKind::RiskWarp,
            Objective::GradWarp => TriggerKind::GradWarp,
            Objective::GradDistWarp { .. } => TriggerKind::GradDistWarp,
        }
    }

    /// The quantity the search oracle maximizes: `J`, `‖G‖`, or the
    /// definitional SNR.
    pub fn evaluate(&self, w: &ModelWeights, stats: &SufficientStats, v: &Trigger) -> Result<f64> {
        match *self {
            Objective::RiskWarp => riskwarp_objective(w, stats, v),
            Objective::GradWarp => gradwarp_objective(w, stats, v),
            Objective::GradDistWarp { gamma, sigma } => {
                graddistwarp_snr(w, stats, v, gamma, sigma).map(|s| s.definitional)
            }
        }
    }
}

fn check_inputs(w: &ModelWeights, stats: &SufficientStats, v: &Trigger) -> Result<()> {
    check_dim(stats.feature_dim(), w.len())?;
    check_dim(stats.feature_dim(), v.x_v.len())
}

/// `J(w; v, D0) = [y_v² − S_y] + 2wᵀ(S_yx − y_v x_v) + wᵀ(x_v x_vᵀ − S_xx)w`,
/// which equals `ℓ(w, v) − L(w, D0)` when `stats` come from `D0`.
pub fn riskwarp_objective(w: &ModelWeights, stats: &SufficientStats, v: &Trigger) -> Result<f64> {
    check_inputs(w, stats, v)?;
    let w = w.as_vector();
    let xw = v.x_v.dot(w);
    let cross = w.dot(&stats.s_yx) - v.y_v * xw;
    let quad = xw * xw - w.dot(&(&stats.s_xx * w));
    Ok((v.y_v * v.y_v - stats.s_y) + 2.0 * cross + quad)
}

fn nonzero_norm_sq(w: &ModelWeights) -> Result<f64> {
    let n2 = w.norm_squared();
    if n2 > 0.0 {
        Ok(n2)
    } else {
        Err(Error::ZeroWeights)
    }
}

/// Risk-warp trigger `v = (−trigger_scale·w, B)`.
pub fn make_riskwarp_trigger(w: &ModelWeights, constraints: &TriggerConstraints) -> Result<Trigger> {
    constraints.validate()?;
    nonzero_norm_sq(w)?;
    Ok(Trigger {
        kind: TriggerKind::RiskWarp,
        x_v: w.as_vector() * -constraints.trigger_scale,
        y_v: constraints.response_bound,
        trigger_scale: Some(constraints.trigger_scale),
        response_bound: Some(constraints.response_bound),
    })
}

/// Distortion of the risk-warp trigger written out term by term:
/// `B² − S_y + 2wᵀS_yx + 2αB‖w‖² + α²‖w‖⁴ − wᵀS_xx w` with `α = trigger_scale`.
pub fn riskwarp_distortion(
    w: &ModelWeights,
    stats: &SufficientStats,
    constraints: &TriggerConstraints,
) -> Result<f64> {
    check_dim(stats.feature_dim(), w.len())?;
    let (a, b) = (constraints.trigger_scale, constraints.response_bound);
    let w = w.as_vector();
    let n2 = w.norm_squared();
    Ok(b * b - stats.s_y + 2.0 * w.dot(&stats.s_yx) + 2.0 * a * b * n2 + a * a * n2 * n2
        - w.dot(&(&stats.s_xx * w)))
}

/// `‖(S_yx − y_v x_v) + (x_v x_vᵀ − S_xx)w‖₂`. Equals `(n+1)/2` times the
/// norm of the gradient gap.
pub fn gradwarp_objective(w: &ModelWeights, stats: &SufficientStats, v: &Trigger) -> Result<f64> {
    check_inputs(w, stats, v)?;
    Ok(square_loss_gradient_gap_direction(w, stats, v)?.norm())
}

/// Grad-warp trigger `v = (α·w, ⟨w, S_yx⟩ / (α‖w‖²))` with `α = trigger_scale`.
pub fn make_gradwarp_trigger(
    w: &ModelWeights,
    constraints: &TriggerConstraints,
    stats: &SufficientStats,
) -> Result<Trigger> {
    constraints.validate()?;
    check_dim(stats.feature_dim(), w.len())?;
    let n2 = nonzero_norm_sq(w)?;
    let a = constraints.trigger_scale;
    if a == 0.0 {
        return Err(Error::invalid("trigger_scale", "must be nonzero"));
    }
    Ok(Trigger {
        kind: TriggerKind::GradWarp,
        x_v: w.as_vector() * a,
        y_v: w.dot(&stats.s_yx) / (a * n2),
        trigger_scale: Some(a),
        response_bound: Some(constraints.response_bound),
    })
}

/// Distortion of the grad-warp trigger written out:
/// `‖S_yx − (⟨w, S_yx⟩/‖w‖²)·w + α²‖w‖²·w − S_xx·w‖₂`.
pub fn gradwarp_distortion(w: &ModelWeights, stats: &SufficientStats, trigger_scale: f64) -> Result<f64> {
    check_dim(stats.feature_dim(), w.len())?;
    let n2 = nonzero_norm_sq(w)?;
    let w = w.as_vector();
    let proj = w * (w.dot(&stats.s_yx) / n2);
    let v = &stats.s_yx - proj + w * (trigger_scale * trigger_scale * n2) - &stats.s_xx * w;
    Ok(v.norm())
}

/// Grad-dist-warp trigger: the same point as [`make_gradwarp_trigger`].
pub fn make_graddistwarp_trigger(
    w: &ModelWeights,
    constraints: &TriggerConstraints,
    stats: &SufficientStats,
) -> Result<Trigger> {
    let mut t = make_gradwarp_trigger(w, constraints, stats)?;
    t.kind = TriggerKind::GradDistWarp;
    Ok(t)
}

/// Signal-to-noise ratio of the one-step noisy update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrForms {
    /// `‖μ(D1) − μ(D0)‖₂ / σ_γ` with `μ(D) = −γ∇L(w; D)` and `σ_γ = γσ`.
    /// This is the value used downstream.
    pub definitional: f64,
    /// `‖G‖ / (√(γ(n+1)/2)·σ)`, kept for comparison.
    pub reduced: f64,
}

fn check_noise(gamma: f64, sigma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
    }
    Ok(())
}

/// SNR from second moments. The definitional form builds both update means
/// from `stats` and `stats` with `v` appended; `n` is `stats.n`.
pub fn graddistwarp_snr(
    w: &ModelWeights,
    stats: &SufficientStats,
    v: &Trigger,
    gamma: f64,
    sigma: f64,
) -> Result<SnrForms> {
    check_noise(gamma, sigma)?;
    check_inputs(w, stats, v)?;
    let bad = stats.with_point(&v.x_v, v.y_v)?;
    let mean = |s: &SufficientStats| -> Result<DVector<f64>> {
        Ok(crate::risk::risk_gradient_from_stats(w, s)? * -gamma)
    };
    let definitional = (mean(&bad)? - mean(stats)?).norm() / (gamma * sigma);
    let np1 = stats.n as f64 + 1.0;
    let reduced = gradwarp_objective(w, stats, v)? / ((gamma * np1 / 2.0).sqrt() * sigma);
    Ok(SnrForms {
        definitional,
        reduced,
    })
}

/// Objective value of a trigger in both conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerReport {
    pub trigger: Trigger,
    /// `J` for risk warp, `‖G‖` for grad and grad-dist warp.
    pub objective_value: f64,
    /// Risk gap, gradient-gap norm, or SNR.
    pub objective_value_scaled: f64,
    /// `objective_value_scaled = scale_factor · objective_value`.
    pub scale_factor: f64,
    pub scale_label: String,
    pub oracle_best: Option<OracleResult>,
}

impl TriggerReport {
    pub fn new(
        objective: &Objective,
        w: &ModelWeights,
        stats: &SufficientStats,
        trigger: Trigger,
    ) -> Result<Self> {
        let np1 = stats.n as f64 + 1.0;
        let (value, factor, label) = match *objective {
            Objective::RiskWarp => (riskwarp_objective(w, stats, &trigger)?, 1.0 / np1, "1/(n+1)"),
            Objective::GradWarp => (gradwarp_objective(w, stats, &trigger)?, 2.0 / np1, "2/(n+1)"),
            Objective::GradDistWarp { gamma, sigma } => {
                check_noise(gamma, sigma)?;
                (
                    gradwarp_objective(w, stats, &trigger)?,
                    2.0 / (np1 * sigma),
                    "2/((n+1)*sigma)",
                )
            }
        };
        Ok(Self {
            trigger,
            objective_value: value,
            objective_value_scaled: value * factor,
            scale_factor: factor,
            scale_label: label.to_string(),
            oracle_best: None,
        })
    }
}
