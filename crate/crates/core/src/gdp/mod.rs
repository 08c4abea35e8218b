//! Gaussian differential privacy: tradeoff curves, the μ-GDP ↔ (ε, δ)
//! relation, and the ε solver.
//!
//! A single noisy update whose mean shifts by `d` noise units is `d`-GDP.
//! It is then `(ε, δ(ε))`-DP for every `ε ≥ 0` with
//!
//! ```text
//! δ(ε) = Φ(−ε/μ + μ/2) − e^ε·Φ(−ε/μ − μ/2)
//! ```
//!
//! [`epsilon_of_mu`] inverts this by bisection and is the canonical budget.
//! [`budget_lower_bound`] reports the closed-form bound `ln 2 + ln(δ − Φ(μ/2))`
//! alongside it. That bound only exists when `δ > Φ(μ/2) ≥ 1/2`, so for the
//! small δ used in practice it is absent.

mod normal;

pub use normal::{erfc, std_normal_cdf, std_normal_pdf, std_normal_quantile};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper end of the initial ε bracket.
pub const EPSILON_BRACKET: f64 = 100.0;
const EPSILON_CAP: f64 = 1.0e4;

/// Two unit-variance Gaussians whose means differ by `mean_gap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPair {
    pub mean_gap: f64,
}

impl GaussianPair {
    pub fn new(mean_gap: f64) -> Result<Self> {
        check_gap(mean_gap)?;
        Ok(Self { mean_gap })
    }

    pub fn tradeoff(&self, alpha: f64) -> Result<TradeoffPoint> {
        gaussian_tradeoff(self.mean_gap, alpha)
    }
}

fn check_gap(d: f64) -> Result<()> {
    if d.is_finite() && d >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("mean_gap", format!("must be finite and nonnegative, got {d}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

/// Type-II error and power of the most powerful size-α test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    /// `Φ(Φ⁻¹(1−α) − d)`, the tradeoff function value.
    pub type2: f64,
    /// `1 − Φ(Φ⁻¹(1−α) − d)`.
    pub power: f64,
}

pub fn gaussian_tradeoff(d: f64, alpha: f64) -> Result<TradeoffPoint> {
    check_gap(d)?;
    check_alpha(alpha)?;
    // Φ⁻¹(1−α) = −Φ⁻¹(α), which avoids rounding 1−α for tiny α.
    let z = -std_normal_quantile(alpha)?;
    Ok(TradeoffPoint {
        type2: std_normal_cdf(z - d),
        power: std_normal_cdf(d - z),
    })
}

/// Sampled tradeoff curve, sorted by α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub mean_gap: f64,
    pub alphas: Vec<f64>,
    pub type2: Vec<f64>,
    pub power: Vec<f64>,
}

impl TradeoffCurve {
    /// Evaluates the Gaussian tradeoff at each α (sorted and deduplicated).
    pub fn gaussian(mean_gap: f64, alphas: &[f64]) -> Result<Self> {
        let mut alphas = alphas.to_vec();
        for &a in &alphas {
            check_alpha(a)?;
        }
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        let points = alphas
            .iter()
            .map(|&a| gaussian_tradeoff(mean_gap, a))
            .collect::<Result<Vec<_>>>()?;
        let curve = Self {
            mean_gap,
            type2: points.iter().map(|p| p.type2).collect(),
            power: points.iter().map(|p| 1.0 - p.type2).collect(),
            alphas,
        };
        curve.check_invariants()?;
        Ok(curve)
    }

    /// Type-II values in `[0, 1]`, nonincreasing in α, and `power = 1 − type2`.
    pub fn check_invariants(&self) -> Result<()> {
        if self.type2.len() != self.alphas.len() || self.power.len() != self.alphas.len() {
            return Err(Error::invalid("curve", "column lengths differ"));
        }
        if self.type2.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::invalid("curve", "type-II value outside [0, 1]"));
        }
        if self.type2.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("curve", "type-II error increases with alpha"));
        }
        if self.type2.iter().zip(&self.power).any(|(b, p)| *p != 1.0 - b) {
            return Err(Error::invalid("curve", "power is not 1 - type2"));
        }
        Ok(())
    }

    /// CSV with header `alpha,type2,power`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,type2,power\n");
        for ((a, b), p) in self.alphas.iter().zip(&self.type2).zip(&self.power) {
            let _ = writeln!(out, "{a},{b},{p}");
        }
        out
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && mu > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("mu", format!("must be positive and finite, got {mu}")))
    }
}

/// `δ(ε) = Φ(−ε/μ + μ/2) − e^ε·Φ(−ε/μ − μ/2)`.
pub fn delta_of_epsilon(epsilon: f64, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid("epsilon", format!("must be finite and nonnegative, got {epsilon}")));
    }
    let a = std_normal_cdf(-epsilon / mu + mu / 2.0);
    let b = std_normal_cdf(-epsilon / mu - mu / 2.0);
    // e^ε·b via logs so large ε never meets inf·0.
    let tail = if b > 0.0 { (epsilon + b.ln()).exp() } else { 0.0 };
    Ok((a - tail).max(0.0))
}

/// Smallest ε with `δ(ε) ≤ delta` for a `mu`-GDP mechanism.
///
/// Returns 0 when `δ(0) ≤ delta`. Otherwise bisects on `[0, 100]`
/// (doubling the upper end if needed) down to adjacent floats, which
/// leaves `|δ(ε) − delta|` far below 1e-10.
pub fn epsilon_of_mu(mu: f64, delta: f64) -> Result<f64> {
    check_mu(mu)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let f = |eps: f64| delta_of_epsilon(eps, mu).unwrap_or(0.0);
    if f(0.0) <= delta {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = EPSILON_BRACKET;
    while f(hi) > delta {
        lo = hi;
        hi *= 2.0;
        if hi > EPSILON_CAP {
            return Err(Error::invalid("mu", format!("epsilon exceeds {EPSILON_CAP} for mu = {mu}")));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if (f(lo) - delta).abs() < (f(hi) - delta).abs() { lo } else { hi })
}

/// The closed-form budget bound, when its logarithm is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum BudgetBound {
    Value { epsilon_lower: f64 },
    Absent { reason: String },
}

impl BudgetBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            BudgetBound::Value { epsilon_lower } => Some(*epsilon_lower),
            BudgetBound::Absent { .. } => None,
        }
    }
}

/// `ln 2 + ln(δ − Φ(μ/2))` when `δ > Φ(μ/2)`.
pub fn budget_lower_bound(mu: f64, delta: f64) -> BudgetBound {
    if !(mu.is_finite() && mu >= 0.0) || !delta.is_finite() {
        return BudgetBound::Absent {
            reason: format!("invalid input (mu = {mu}, delta = {delta})"),
        };
    }
    let arg = delta - std_normal_cdf(mu / 2.0);
    if arg > 0.0 {
        BudgetBound::Value {
            epsilon_lower: std::f64::consts::LN_2 + arg.ln(),
        }
    } else {
        BudgetBound::Absent {
            reason: format!("delta - Phi(mu/2) = {arg} is not positive"),
        }
    }
}

/// `(ε, δ)` paired with the GDP parameter it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub mu: f64,
}

/// Treats the SNR `d` of a single noisy update as its GDP parameter.
pub fn snr_to_budget(d: f64, delta: f64) -> Result<PrivacyBudget> {
    check_gap(d)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let epsilon = if d == 0.0 { 0.0 } else { epsilon_of_mu(d, delta)? };
    Ok(PrivacyBudget { epsilon, delta, mu: d })
}
