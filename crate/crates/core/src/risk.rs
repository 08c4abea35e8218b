//! Square loss, empirical risk, gradients, and the clean-vs-bad gap identities.
//!
//! Gradients keep the factor −2 of `∇ℓ = −2(y − ⟨w, x⟩)x`; there is no ½
//! normalization of the loss anywhere in the crate.
//!
//! Every gap operation returns the direct difference of two evaluations next
//! to its closed form, so each identity checks itself.

use std::ops::Deref;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_bad_dataset, sufficient_stats, Dataset, Example, SufficientStats, Trigger};
use crate::error::{check_dim, Error, Result};
use crate::serde_nalgebra;

/// Model weights `w`, finite element-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelWeights(#[serde(with = "serde_nalgebra::vector")] DVector<f64>);

impl ModelWeights {
    pub fn new(w: impl Into<Vec<f64>>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(w.into()))
    }

    pub fn from_vector(w: DVector<f64>) -> Result<Self> {
        if w.iter().all(|v| v.is_finite()) {
            Ok(Self(w))
        } else {
            Err(Error::NonFinite("model weights"))
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for ModelWeights {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Per-example loss. Only the square loss `(y − ⟨w, x⟩)²` is implemented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Square,
}

impl LossKind {
    pub fn loss(self, w: &DVector<f64>, x: &DVector<f64>, y: f64) -> f64 {
        match self {
            LossKind::Square => {
                let r = y - w.dot(x);
                r * r
            }
        }
    }

    pub fn gradient(self, w: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64> {
        match self {
            LossKind::Square => x * (-2.0 * (y - w.dot(x))),
        }
    }
}

pub fn point_loss(w: &ModelWeights, e: &Example) -> Result<f64> {
    check_dim(w.len(), e.dim())?;
    Ok(LossKind::Square.loss(w, e.x(), e.y()))
}

/// `L(w, D) = (1/n) Σ ℓ(w, (x_i, y_i))`.
pub fn empirical_risk(w: &ModelWeights, d: &Dataset) -> Result<f64> {
    check_dim(w.len(), d.feature_dim())?;
    let total: f64 = d.iter().map(|e| LossKind::Square.loss(w, e.x(), e.y())).sum();
    Ok(total / d.len() as f64)
}

pub fn point_gradient(w: &ModelWeights, e: &Example) -> Result<DVector<f64>> {
    check_dim(w.len(), e.dim())?;
    Ok(LossKind::Square.gradient(w, e.x(), e.y()))
}

/// Full-batch gradient `∇L(w, D)`, the mean of per-example gradients.
pub fn risk_gradient(w: &ModelWeights, d: &Dataset) -> Result<DVector<f64>> {
    check_dim(w.len(), d.feature_dim())?;
    let mut g = DVector::zeros(w.len());
    for e in d.iter() {
        g += LossKind::Square.gradient(w, e.x(), e.y());
    }
    Ok(g / d.len() as f64)
}

/// Square-loss gradient from second moments: `2(S_xx·w − S_yx)`.
pub fn risk_gradient_from_stats(w: &ModelWeights, stats: &SufficientStats) -> Result<DVector<f64>> {
    check_dim(stats.feature_dim(), w.len())?;
    Ok((&stats.s_xx * w.as_vector() - &stats.s_yx) * 2.0)
}

/// Both sides of `∇L(w, D1) = (1 − 1/(n+1))·∇L(w, D0) + (1/(n+1))·∇ℓ(w, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureCheck {
    #[serde(with = "serde_nalgebra::vector")]
    pub lhs: DVector<f64>,
    #[serde(with = "serde_nalgebra::vector")]
    pub rhs: DVector<f64>,
    /// Max-norm of `lhs − rhs`.
    pub gap: f64,
}

pub fn mixture_identity_check(w: &ModelWeights, d0: &Dataset, v: &Trigger) -> Result<MixtureCheck> {
    let d1 = make_bad_dataset(d0, v)?;
    let lhs = risk_gradient(w, &d1)?;
    let weight = 1.0 / (d0.len() as f64 + 1.0);
    let rhs = risk_gradient(w, d0)? * (1.0 - weight) + point_gradient(w, &v.as_example()?)? * weight;
    let gap = (&lhs - &rhs).amax();
    Ok(MixtureCheck { lhs, rhs, gap })
}

/// `L(w, D1) − L(w, D0)` computed directly and as `(ℓ(w, v) − L(w, D0))/(n+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskGap {
    pub direct: f64,
    pub closed_form: f64,
}

impl RiskGap {
    pub fn discrepancy(&self) -> f64 {
        (self.direct - self.closed_form).abs()
    }
}

pub fn risk_gap(w: &ModelWeights, d0: &Dataset, v: &Trigger) -> Result<RiskGap> {
    let d1 = make_bad_dataset(d0, v)?;
    let clean = empirical_risk(w, d0)?;
    let direct = empirical_risk(w, &d1)? - clean;
    let closed_form = (point_loss(w, &v.as_example()?)? - clean) / (d0.len() as f64 + 1.0);
    Ok(RiskGap { direct, closed_form })
}

/// `∇L(w, D1) − ∇L(w, D0)` three ways: direct difference, the
/// `(∇ℓ(w, v) − ∇L(w, D0))/(n+1)` closed form, and the square-loss form
/// `(2/(n+1))·[(S_yx − y_v x_v) + (x_v x_vᵀ − S_xx)·w]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientGap {
    #[serde(with = "serde_nalgebra::vector")]
    pub direct: DVector<f64>,
    #[serde(with = "serde_nalgebra::vector")]
    pub closed_form: DVector<f64>,
    #[serde(with = "serde_nalgebra::vector")]
    pub from_stats: DVector<f64>,
}

impl GradientGap {
    /// Largest max-norm disagreement between the three routes.
    pub fn discrepancy(&self) -> f64 {
        (&self.direct - &self.closed_form)
            .amax()
            .max((&self.direct - &self.from_stats).amax())
    }
}

pub fn gradient_gap(w: &ModelWeights, d0: &Dataset, v: &Trigger) -> Result<GradientGap> {
    let d1 = make_bad_dataset(d0, v)?;
    let clean = risk_gradient(w, d0)?;
    let direct = risk_gradient(w, &d1)? - &clean;
    let np1 = d0.len() as f64 + 1.0;
    let closed_form = (point_gradient(w, &v.as_example()?)? - clean) / np1;
    let from_stats = square_loss_gradient_gap_direction(w, &sufficient_stats(d0), v)? * (2.0 / np1);
    Ok(GradientGap {
        direct,
        closed_form,
        from_stats,
    })
}

/// `(S_yx − y_v x_v) + (x_v x_vᵀ − S_xx)·w`, the unscaled gradient-gap vector.
pub fn square_loss_gradient_gap_direction(
    w: &ModelWeights,
    stats: &SufficientStats,
    v: &Trigger,
) -> Result<DVector<f64>> {
    check_dim(stats.feature_dim(), w.len())?;
    check_dim(stats.feature_dim(), v.x_v.len())?;
    let xw = v.x_v.dot(w.as_vector());
    Ok(&stats.s_yx - &v.x_v * v.y_v + &v.x_v * xw - &stats.s_xx * w.as_vector())
}
