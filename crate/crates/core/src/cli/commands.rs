use serde::{Deserialize, Serialize};

use super::config::{DataSource, RunConfig, TriggerSpec};
use crate::dataset::{sufficient_stats, Dataset, SufficientStats, Trigger, TriggerKind};
use crate::error::{Error, Result};
use crate::gdp::{
    budget_lower_bound, delta_of_epsilon, snr_to_budget, BudgetBound, PrivacyBudget, TradeoffCurve,
};
use crate::risk::{
    empirical_risk, gradient_gap, mixture_identity_check, point_gradient, point_loss, risk_gap,
    risk_gradient, GradientGap, MixtureCheck, ModelWeights, RiskGap,
};
use crate::sim::{monte_carlo_tradeoff, run_trajectory, DistinguisherResult, NoisyGdConfig, Trajectory};
use crate::triggers::{
    graddistwarp_snr, gradwarp_distortion, gradwarp_objective, make_graddistwarp_trigger,
    make_gradwarp_trigger, make_riskwarp_trigger, oracle_search, riskwarp_distortion,
    riskwarp_objective, Objective, OracleResult, SearchOptions, SnrForms, TriggerConstraints,
    TriggerReport,
};

/// Absolute tolerance of the audit identities, before scaling by input magnitude.
const IDENTITY_TOL: f64 = 1e-10;
/// Allowed `|δ(ε) − δ|` after inverting the budget.
const EPSILON_RESIDUAL_TOL: f64 = 1e-8;
/// Monte Carlo points must lie within this many standard errors.
const MC_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub source: DataSource,
    pub feature_dim: usize,
    #[serde(flatten)]
    pub stats: SufficientStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub n: usize,
    pub trigger: Trigger,
    /// `L(D1) − L(D0)`, both ways.
    pub risk_gap: RiskGap,
    /// `(n+1)` times the risk gap: the stats-based objective `J`.
    pub risk_gap_unscaled: f64,
    pub gradient_gap: GradientGap,
    /// `‖∇L(D1) − ∇L(D0)‖₂`.
    pub gradient_gap_norm: f64,
    /// `(n+1)/2` times the gradient-gap norm: `‖G‖`.
    pub gradient_gap_norm_unscaled: f64,
    pub mixture: MixtureCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputsEcho {
    pub data: DataSource,
    pub weights: Vec<f64>,
    pub trigger_source: String,
    pub constraints: TriggerConstraints,
    pub gamma: f64,
    pub sigma: f64,
    pub delta: f64,
    pub trials: usize,
    pub alphas: Vec<f64>,
    pub oracle_budget: usize,
    pub seed: u64,
}

/// Search oracle against the audited trigger, on the same objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub objective: String,
    pub trigger_value: f64,
    pub oracle_value: f64,
    /// `oracle_value − trigger_value`; positive when random search found a
    /// point outside the constructor's restricted family that does better.
    pub oracle_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub inputs: InputsEcho,
    pub stats: SufficientStats,
    pub trigger: TriggerReport,
    pub gap: GapReport,
    pub snr: SnrForms,
    pub analytic_curve: TradeoffCurve,
    pub monte_carlo: Vec<DistinguisherResult>,
    pub budget: PrivacyBudget,
    pub closed_form_bound: BudgetBound,
    pub oracle: Option<OracleComparison>,
    pub checks: Vec<Check>,
    pub consistent: bool,
}

struct Prepared {
    data: Dataset,
    stats: SufficientStats,
    w: ModelWeights,
    trigger: Trigger,
    constraints: TriggerConstraints,
    objective: Objective,
    source: String,
}

fn load(cfg: &RunConfig) -> Result<(Dataset, SufficientStats, ModelWeights)> {
    let data = cfg.data.load()?;
    let stats = sufficient_stats(&data);
    let w = cfg.weights.resolve(data.feature_dim())?;
    log::info!("loaded {} examples of dimension {}", data.len(), data.feature_dim());
    Ok((data, stats, w))
}

fn objective_for(kind: TriggerKind, cfg: &RunConfig) -> Objective {
    match kind {
        TriggerKind::RiskWarp => Objective::RiskWarp,
        TriggerKind::GradWarp => Objective::GradWarp,
        TriggerKind::GradDistWarp | TriggerKind::Manual => Objective::GradDistWarp {
            gamma: cfg.gamma,
            sigma: cfg.sigma,
        },
    }
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let (data, stats, w) = load(cfg)?;
    let mut constraints = TriggerConstraints::new(cfg.x_norm_max.unwrap_or(1.0), cfg.bound, cfg.scale)?;
    let (trigger, source) = match &cfg.trigger {
        TriggerSpec::Construct { kind } => {
            let t = match kind {
                TriggerKind::RiskWarp => make_riskwarp_trigger(&w, &constraints)?,
                TriggerKind::GradWarp => make_gradwarp_trigger(&w, &constraints, &stats)?,
                TriggerKind::GradDistWarp => make_graddistwarp_trigger(&w, &constraints, &stats)?,
                TriggerKind::Manual => return Err(Error::invalid("kind", "manual triggers need --xv and --yv")),
            };
            (t, format!("constructed {kind}"))
        }
        TriggerSpec::Manual { x_v, y_v } => (Trigger::manual(x_v.clone(), *y_v)?, "manual".to_string()),
        TriggerSpec::File { path } => (TriggerSpec::load_file(path)?, format!("file {}", path.display())),
    };
    if trigger.x_v.len() != data.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: data.feature_dim(),
            found: trigger.x_v.len(),
        });
    }
    if cfg.x_norm_max.is_none() {
        constraints.x_norm_max = trigger.x_v.norm().max(1.0);
    }
    let objective = objective_for(trigger.kind, cfg);
    log::info!("trigger {} ({source}): x_v = {:?}, y_v = {}", trigger.kind, trigger.x_v.as_slice(), trigger.y_v);
    Ok(Prepared {
        data,
        stats,
        w,
        trigger,
        constraints,
        objective,
        source,
    })
}

fn trigger_report(p: &Prepared, cfg: &RunConfig) -> Result<TriggerReport> {
    let mut report = TriggerReport::new(&p.objective, &p.w, &p.stats, p.trigger.clone())?;
    if cfg.oracle_budget > 0 {
        let oracle = oracle_search(
            &p.objective,
            &p.w,
            &p.stats,
            &p.constraints,
            cfg.oracle_budget,
            cfg.seed,
            &SearchOptions::default(),
        )?;
        log::info!("oracle search over {} candidates: best {}", oracle.candidates, oracle.value);
        report.oracle_best = Some(oracle);
    }
    Ok(report)
}

fn gap_report(p: &Prepared) -> Result<GapReport> {
    let n = p.data.len();
    let np1 = n as f64 + 1.0;
    let rg = risk_gap(&p.w, &p.data, &p.trigger)?;
    let gg = gradient_gap(&p.w, &p.data, &p.trigger)?;
    let mixture = mixture_identity_check(&p.w, &p.data, &p.trigger)?;
    let norm = gg.direct.norm();
    log::info!("risk gap {}, gradient gap norm {norm}", rg.direct);
    Ok(GapReport {
        n,
        trigger: p.trigger.clone(),
        risk_gap_unscaled: rg.direct * np1,
        risk_gap: rg,
        gradient_gap: gg,
        gradient_gap_norm: norm,
        gradient_gap_norm_unscaled: norm * np1 / 2.0,
        mixture,
    })
}

pub fn cmd_stats(cfg: &RunConfig) -> Result<StatsReport> {
    let data = cfg.data.load()?;
    let stats = sufficient_stats(&data);
    log::info!("stats over {} examples", stats.n);
    Ok(StatsReport {
        source: cfg.data.clone(),
        feature_dim: stats.feature_dim(),
        stats,
    })
}

pub fn cmd_trigger(cfg: &RunConfig) -> Result<TriggerReport> {
    let p = prepare(cfg)?;
    trigger_report(&p, cfg)
}

pub fn cmd_gap(cfg: &RunConfig) -> Result<GapReport> {
    gap_report(&prepare(cfg)?)
}

pub fn cmd_tradeoff(mu: f64, alphas: &[f64]) -> Result<TradeoffCurve> {
    let curve = TradeoffCurve::gaussian(mu, alphas)?;
    log::info!("tradeoff curve at mu = {mu} over {} levels", curve.alphas.len());
    Ok(curve)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Trajectory> {
    let (data, _, w) = load(cfg)?;
    let sim = NoisyGdConfig {
        gamma: cfg.gamma,
        sigma: cfg.sigma,
        steps: cfg.steps,
        seed: cfg.seed,
    };
    let traj = run_trajectory(&w, &data, &sim, cfg.noisy)?;
    log::info!("simulated {} steps (diverged: {})", traj.risks.len().saturating_sub(1), traj.diverged);
    Ok(traj)
}

struct Checks {
    scale: f64,
    list: Vec<Check>,
}

impl Checks {
    fn close(&mut self, name: &str, a: f64, b: f64, factor: f64) {
        let tol = IDENTITY_TOL * self.scale * factor;
        let diff = (a - b).abs();
        self.push(name, diff, tol, diff <= tol);
    }

    fn push(&mut self, name: &str, value: f64, tolerance: f64, passed: bool) {
        self.list.push(Check {
            name: name.to_string(),
            passed: passed && value.is_finite(),
            value,
            tolerance,
        });
    }
}

/// Runs the whole pipeline at the configured weights. `consistent` is true
/// iff every entry of `checks` passed.
pub fn cmd_audit(cfg: &RunConfig) -> Result<AuditReport> {
    if cfg.sigma.is_nan() || cfg.sigma <= 0.0 {
        return Err(Error::invalid(
            "sigma",
            format!("the audit needs sigma > 0 for the noisy update and its distinguisher, got {}", cfg.sigma),
        ));
    }
    let p = prepare(cfg)?;
    let np1 = p.data.len() as f64 + 1.0;
    let trigger = trigger_report(&p, cfg)?;
    let gap = gap_report(&p)?;
    let snr = graddistwarp_snr(&p.w, &p.stats, &p.trigger, cfg.gamma, cfg.sigma)?;
    log::info!("snr {} (reduced form {})", snr.definitional, snr.reduced);

    let mu = snr.definitional;
    let analytic_curve = TradeoffCurve::gaussian(mu, &cfg.alphas)?;
    let monte_carlo = if cfg.trials > 0 {
        let sim = NoisyGdConfig {
            gamma: cfg.gamma,
            sigma: cfg.sigma,
            steps: 1,
            seed: cfg.seed,
        };
        let mc = monte_carlo_tradeoff(&p.w, &p.data, &p.trigger, &sim, &analytic_curve.alphas, cfg.trials)?;
        log::info!("monte carlo: {} trials per hypothesis at {} levels", cfg.trials, mc.len());
        mc
    } else {
        Vec::new()
    };
    let budget = snr_to_budget(mu, cfg.delta)?;
    let closed_form_bound = budget_lower_bound(mu, cfg.delta);
    log::info!("epsilon {} at delta {}", budget.epsilon, budget.delta);

    let j = riskwarp_objective(&p.w, &p.stats, &p.trigger)?;
    let g = gradwarp_objective(&p.w, &p.stats, &p.trigger)?;
    let loss_v = point_loss(&p.w, &p.trigger.as_example()?)?;
    let risk0 = empirical_risk(&p.w, &p.data)?;
    let grad_v = point_gradient(&p.w, &p.trigger.as_example()?)?.norm();
    let grad0 = risk_gradient(&p.w, &p.data)?.norm();
    let mut checks = Checks {
        scale: 1.0 + [loss_v, risk0, grad_v, grad0, j.abs(), g].into_iter().fold(0.0, f64::max),
        list: Vec::new(),
    };

    checks.close("mixture_identity", gap.mixture.gap, 0.0, 1.0);
    checks.close("risk_gap_closed_form", gap.risk_gap.discrepancy(), 0.0, 1.0);
    checks.close("gradient_gap_closed_form", gap.gradient_gap.discrepancy(), 0.0, 1.0);
    checks.close("risk_objective_scaling", j, gap.risk_gap_unscaled, np1);
    checks.close("gradient_objective_scaling", g, gap.gradient_gap_norm_unscaled, np1);
    checks.close("snr_definition", snr.definitional * cfg.sigma, gap.gradient_gap_norm, 1.0);
    if p.trigger.trigger_scale.is_some() {
        match p.trigger.kind {
            TriggerKind::RiskWarp => {
                checks.close("riskwarp_distortion", riskwarp_distortion(&p.w, &p.stats, &p.constraints)?, j, 1.0)
            }
            TriggerKind::GradWarp | TriggerKind::GradDistWarp => checks.close(
                "gradwarp_distortion",
                gradwarp_distortion(&p.w, &p.stats, p.constraints.trigger_scale)?,
                g,
                1.0,
            ),
            TriggerKind::Manual => {}
        }
    }

    // Identical update distributions have δ(ε) = 0 everywhere.
    let delta_at = if mu == 0.0 { 0.0 } else { delta_of_epsilon(budget.epsilon, mu)? };
    let residual = delta_at - cfg.delta;
    if budget.epsilon > 0.0 {
        checks.push("epsilon_residual", residual.abs(), EPSILON_RESIDUAL_TOL, residual.abs() <= EPSILON_RESIDUAL_TOL);
    } else {
        checks.push("epsilon_residual", residual.max(0.0), 0.0, residual <= 0.0);
    }
    checks.push("curve_invariants", 0.0, 0.0, analytic_curve.check_invariants().is_ok());
    for r in &monte_carlo {
        let dev = (r.est_type2 - r.analytic_type2).abs();
        checks.push(
            &format!("monte_carlo_alpha_{}", r.alpha),
            dev,
            MC_SIGMAS * r.std_err,
            r.within(MC_SIGMAS),
        );
    }

    let oracle = trigger.oracle_best.as_ref().map(|o: &OracleResult| OracleComparison {
        objective: p.objective.kind().to_string(),
        trigger_value: trigger.objective_value,
        oracle_value: o.value,
        oracle_margin: o.value - trigger.objective_value,
    });

    let consistent = checks.list.iter().all(|c| c.passed);
    log::info!("{} checks, consistent: {consistent}", checks.list.len());
    let report = AuditReport {
        inputs: InputsEcho {
            data: cfg.data.clone(),
            weights: p.w.as_vector().iter().copied().collect(),
            trigger_source: p.source.clone(),
            constraints: p.constraints,
            gamma: cfg.gamma,
            sigma: cfg.sigma,
            delta: cfg.delta,
            trials: cfg.trials,
            alphas: analytic_curve.alphas.clone(),
            oracle_budget: cfg.oracle_budget,
            seed: cfg.seed,
        },
        stats: p.stats,
        trigger,
        gap,
        snr,
        analytic_curve,
        monte_carlo,
        budget,
        closed_form_bound,
        oracle,
        checks: checks.list,
        consistent,
    };
    ensure_round_trip(&report)?;
    Ok(report)
}

/// JSON has no NaN or infinity, so a report with either would not parse
/// back to itself.
fn ensure_round_trip(report: &AuditReport) -> Result<()> {
    let text = serde_json::to_string(report)?;
    match serde_json::from_str::<AuditReport>(&text) {
        Ok(back) if back == *report => Ok(()),
        _ => Err(Error::NonFinite("audit report")),
    }
}
