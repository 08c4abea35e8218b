//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use badgd::dataset::sufficient_stats;
use badgd::gdp::{
    budget_lower_bound, delta_of_epsilon, epsilon_of_mu, gaussian_tradeoff, std_normal_cdf, BudgetBound,
};
use badgd::risk::{gradient_gap, mixture_identity_check, risk_gap, risk_gradient};
use badgd::sim::{monte_carlo_tradeoff, noisy_increments};
use badgd::triggers::{
    graddistwarp_snr, gradwarp_distortion, gradwarp_objective, make_gradwarp_trigger, make_riskwarp_trigger,
    riskwarp_distortion, riskwarp_objective,
};
use badgd::{NoisyGdConfig, Trigger, TriggerConstraints};
use common::{instance, magnitude, two_point, weights, FIXTURE};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

const INSTANCES: u64 = 1000;
const IDENTITY_TOL: f64 = 1e-10;
const GRID: usize = 10_000;
const GRID_TOL: f64 = 1e-9;
const MC_TRIALS: usize = 100_000;
const MC_SE: f64 = 3.0;
const DELTA_ROUND_TRIP_TOL: f64 = 1e-8;
const BOUND_TOL: f64 = 1e-12;
const MOMENT_SAMPLES: usize = 100_000;
const MOMENT_MEAN_SIGMAS: f64 = 4.0;
const MOMENT_VAR_REL: f64 = 0.05;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e(err: badgd::Error) -> String {
    err.to_string()
}

fn linspace(lo: f64, hi: f64, k: usize) -> impl Iterator<Item = f64> {
    (0..k).map(move |i| if i + 1 == k { hi } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 })
}

fn gap_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let m = magnitude(&inst);
        let mix = mixture_identity_check(&inst.w, &inst.data, &inst.v).map_err(e)?.gap;
        let rg = risk_gap(&inst.w, &inst.data, &inst.v).map_err(e)?.discrepancy();
        let gg = gradient_gap(&inst.w, &inst.data, &inst.v).map_err(e)?.discrepancy();
        for (name, err) in [("mixture", mix), ("risk gap", rg), ("gradient gap", gg)] {
            ensure(err <= IDENTITY_TOL * m, || format!("instance {seed}: {name} off by {err:e} (scale {m:e})"))?;
            worst = worst.max(err / m);
        }
    }
    Ok(format!("{INSTANCES} instances, worst scaled error {worst:.1e}"))
}

fn stats_reductions() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let m = magnitude(&inst);
        let np1 = inst.data.len() as f64 + 1.0;
        let stats = sufficient_stats(&inst.data);
        let rg = risk_gap(&inst.w, &inst.data, &inst.v).map_err(e)?.direct;
        let gap = gradient_gap(&inst.w, &inst.data, &inst.v).map_err(e)?.direct.norm();
        let j = riskwarp_objective(&inst.w, &stats, &inst.v).map_err(e)?;
        let g = gradwarp_objective(&inst.w, &stats, &inst.v).map_err(e)?;
        let snr_a = graddistwarp_snr(&inst.w, &stats, &inst.v, 0.05, 2.0).map_err(e)?.definitional;
        let snr_b = graddistwarp_snr(&inst.w, &stats, &inst.v, 5.0, 2.0).map_err(e)?.definitional;
        for (name, err, unit) in [
            ("J vs (n+1)·risk gap", (j - np1 * rg).abs(), np1),
            ("‖G‖ vs (n+1)/2·‖gradient gap‖", (g - np1 / 2.0 * gap).abs(), np1),
            ("SNR vs ‖gradient gap‖/σ", (snr_a - gap / 2.0).abs(), 1.0),
            ("SNR learning-rate cancellation", (snr_a - snr_b).abs(), 1.0),
        ] {
            ensure(err <= IDENTITY_TOL * m * unit, || format!("instance {seed}: {name} off by {err:e}"))?;
            worst = worst.max(err / (m * unit));
        }
    }
    Ok(format!("{INSTANCES} instances, worst scaled error {worst:.1e}"))
}

fn riskwarp_restricted_optimality() -> Outcome {
    let data = two_point();
    let stats = sufficient_stats(&data);
    let w = weights(&[1.0, 0.0]);
    let c = TriggerConstraints::new(1.0, 2.0, 1.0).map_err(e)?;
    let v = make_riskwarp_trigger(&w, &c).map_err(e)?;
    let j = riskwarp_objective(&w, &stats, &v).map_err(e)?;
    let closed = riskwarp_distortion(&w, &stats, &c).map_err(e)?;
    ensure((j - 8.5).abs() <= IDENTITY_TOL && (closed - 8.5).abs() <= IDENTITY_TOL, || {
        format!("fixture objective {j}, closed form {closed}, expected 8.5")
    })?;

    let mut cases = vec![(w, stats, c)];
    for seed in 0..100 {
        let inst = instance(seed);
        let scale = 0.1 + (seed % 7) as f64 * 0.5;
        let bound = 0.5 + (seed % 5) as f64 * 3.0;
        cases.push((inst.w, sufficient_stats(&inst.data), TriggerConstraints::new(1.0, bound, scale).map_err(e)?));
    }
    for (k, (w, stats, c)) in cases.iter().enumerate() {
        let v = make_riskwarp_trigger(w, c).map_err(e)?;
        let j = riskwarp_objective(w, stats, &v).map_err(e)?;
        let closed = riskwarp_distortion(w, stats, c).map_err(e)?;
        let unit = 1.0 + j.abs() + stats.s_y + (w.norm() * c.trigger_scale).powi(2) * w.norm_squared();
        ensure((closed - j).abs() <= IDENTITY_TOL * unit, || {
            format!("case {k}: closed form {closed} vs direct {j}")
        })?;
        for y in linspace(-c.response_bound, c.response_bound, GRID) {
            let mut u = v.clone();
            u.y_v = y;
            let val = riskwarp_objective(w, stats, &u).map_err(e)?;
            ensure(val <= j + GRID_TOL, || format!("case {k}: y_v = {y} gives {val} > {j}"))?;
        }
    }
    Ok(format!("fixture J = 8.5; {} cases × {GRID} grid points", cases.len()))
}

fn gradwarp_completing_square() -> Outcome {
    let data = two_point();
    let stats = sufficient_stats(&data);
    let w = weights(&[1.0, 0.0]);
    let c = TriggerConstraints::new(1.0, 1.0, 1.0).map_err(e)?;
    let closed = gradwarp_distortion(&w, &stats, 1.0).map_err(e)?;
    let v = make_gradwarp_trigger(&w, &c, &stats).map_err(e)?;
    let direct = gradwarp_objective(&w, &stats, &v).map_err(e)?;
    ensure((closed - 1.118034).abs() <= 1e-6 && (closed - direct).abs() <= IDENTITY_TOL, || {
        format!("fixture distortion {closed}, direct {direct}, expected ≈1.118034")
    })?;

    let mut cases = vec![(w, stats, c)];
    for seed in 0..100 {
        let inst = instance(seed);
        let scale = 0.1 + (seed % 7) as f64 * 0.5;
        cases.push((inst.w, sufficient_stats(&inst.data), TriggerConstraints::new(1.0, 1.0, scale).map_err(e)?));
    }
    for (k, (w, stats, c)) in cases.iter().enumerate() {
        let v = make_gradwarp_trigger(w, c, stats).map_err(e)?;
        // The completed square: ‖S_yx − y·x_v‖² with x_v = α·w held fixed.
        let square = |y: f64| (&stats.s_yx - &v.x_v * y).norm_squared();
        let best = square(v.y_v);
        let reach = 1.0 + 2.0 * v.y_v.abs();
        for y in linspace(v.y_v - reach, v.y_v + reach, GRID) {
            let val = square(y);
            ensure(val >= best - GRID_TOL, || format!("case {k}: y_v = {y} gives {val} < {best}"))?;
        }
        let closed = gradwarp_distortion(w, stats, c.trigger_scale).map_err(e)?;
        let direct = gradwarp_objective(w, stats, &v).map_err(e)?;
        let unit = 1.0 + direct + stats.s_xx.norm() * w.norm() + c.trigger_scale.powi(2) * w.norm().powi(3);
        ensure((closed - direct).abs() <= IDENTITY_TOL * unit, || {
            format!("case {k}: closed form {closed} vs direct {direct}")
        })?;
    }
    Ok(format!("fixture ≈ {closed:.6}; {} cases × {GRID} grid points", cases.len()))
}

fn monte_carlo_vs_analytic() -> Outcome {
    let alphas = [0.01, 0.05, 0.2];
    let data = two_point();
    let stats = sufficient_stats(&data);
    let w = weights(&[1.0, 0.0]);
    let v = make_gradwarp_trigger(&w, &TriggerConstraints::new(1.0, 1.0, 1.0).map_err(e)?, &stats).map_err(e)?;
    let gap = gradient_gap(&w, &data, &v).map_err(e)?.direct.norm();
    // At the least-squares fit a trigger on the fitted line moves nothing.
    let w_fit = weights(&[1.0, -0.5]);
    let on_fit = Trigger::manual(vec![1.0, 0.0], 1.0).map_err(e)?;

    let mut lines = Vec::new();
    for (k, d) in [0.0, 0.5, 1.0, 2.0].into_iter().enumerate() {
        let (w, v, sigma) = if d == 0.0 { (&w_fit, &on_fit, 1.0) } else { (&w, &v, gap / d) };
        let cfg = NoisyGdConfig {
            gamma: 0.1,
            sigma,
            steps: 1,
            seed: 1000 + k as u64,
        };
        let results = monte_carlo_tradeoff(w, &data, v, &cfg, &alphas, MC_TRIALS).map_err(e)?;
        for r in &results {
            let type2 = gaussian_tradeoff(d, r.alpha).map_err(e)?.type2;
            let power = 1.0 - type2;
            let se = (type2 * (1.0 - type2) / MC_TRIALS as f64).sqrt();
            let z2 = (r.est_type2 - type2).abs() / se;
            let zp = (r.est_power() - power).abs() / se;
            ensure(z2 <= MC_SE && zp <= MC_SE, || {
                format!("d = {d}, α = {}: type2 {} vs {type2} ({z2:.2} SE)", r.alpha, r.est_type2)
            })?;
            lines.push(format!("{z2:.2}"));
        }
    }
    Ok(format!("12 points, |z| = [{}]", lines.join(", ")))
}

fn delta_engine() -> Outcome {
    for mu in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let values: Vec<f64> = linspace(0.0, 5.0, 501)
            .map(|eps| delta_of_epsilon(eps, mu).map_err(e))
            .collect::<Result<_, _>>()?;
        for (i, pair) in values.windows(2).enumerate() {
            ensure(pair[1] < pair[0], || {
                format!("μ = {mu}: δ not strictly decreasing at grid step {i} ({} → {})", pair[0], pair[1])
            })?;
        }
    }
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    for mu in [0.1, 0.5, 1.0, 2.0, 3.0, 4.0] {
        for delta in [1e-6, 1e-5, 1e-3, 1e-2, 0.1, 0.3] {
            let eps = epsilon_of_mu(mu, delta).map_err(e)?;
            let back = delta_of_epsilon(eps, mu).map_err(e)?;
            if eps > 0.0 {
                worst = worst.max((back - delta).abs());
                solved += 1;
                ensure((back - delta).abs() <= DELTA_ROUND_TRIP_TOL, || {
                    format!("μ = {mu}, δ = {delta}: ε = {eps} gives δ = {back}")
                })?;
            } else {
                ensure(back <= delta, || format!("μ = {mu}, δ = {delta}: ε = 0 but δ(0) = {back}"))?;
            }
        }
    }
    let at_zero = delta_of_epsilon(0.0, 1.0).map_err(e)?;
    ensure((at_zero - 0.382925).abs() <= 1e-6, || format!("δ(0; μ=1) = {at_zero}"))?;
    Ok(format!("δ(0; μ=1) = {at_zero:.6}; {solved} inversions, worst residual {worst:.1e}"))
}

fn epsilon_monotone_in_mu() -> Outcome {
    let mut violations = Vec::new();
    for delta in [1e-5, 1e-3, 1e-1] {
        let mut prev = 0.0;
        for k in 1..=40 {
            let mu = k as f64 / 10.0;
            let eps = epsilon_of_mu(mu, delta).map_err(e)?;
            if eps < prev {
                violations.push(format!("δ = {delta}, μ = {mu}: {eps} < {prev}"));
            }
            prev = eps;
        }
    }
    ensure(violations.is_empty(), || violations.join("; "))?;
    Ok("120 grid points, 0 violations".to_string())
}

fn closed_form_bound_handling() -> Outcome {
    let (mut present, mut absent) = (0, 0);
    for k in 0..=80 {
        let mu = k as f64 * 0.05;
        for delta in [1e-5, 1e-3, 0.1, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99] {
            let arg = delta - std_normal_cdf(mu / 2.0);
            let bound = budget_lower_bound(mu, delta);
            serde_json::to_string(&bound).map_err(|err| err.to_string())?;
            match (&bound, arg > 0.0) {
                (BudgetBound::Value { epsilon_lower }, true) => {
                    let want = std::f64::consts::LN_2 + arg.ln();
                    ensure(epsilon_lower.is_finite() && (epsilon_lower - want).abs() <= BOUND_TOL, || {
                        format!("μ = {mu}, δ = {delta}: {epsilon_lower} vs {want}")
                    })?;
                    present += 1;
                }
                (BudgetBound::Absent { reason }, false) => {
                    ensure(!reason.is_empty(), || format!("μ = {mu}, δ = {delta}: empty reason"))?;
                    absent += 1;
                }
                _ => return Err(format!("μ = {mu}, δ = {delta}: got {bound:?} with argument {arg}")),
            }
        }
    }
    Ok(format!("{present} values, {absent} absent-with-reason"))
}

fn increment_moments() -> Outcome {
    let mut cases = vec![(two_point(), weights(&[1.0, 0.0]), 0.1, 1.0)];
    let inst = instance(17);
    cases.push((inst.data, inst.w, 0.01, 3.0));
    let mut summary = Vec::new();
    for (k, (data, w, gamma, sigma)) in cases.into_iter().enumerate() {
        let cfg = NoisyGdConfig {
            gamma,
            sigma,
            steps: 1,
            seed: 77 + k as u64,
        };
        let samples = noisy_increments(&w, &data, &cfg, MOMENT_SAMPLES).map_err(e)?;
        let mean_want = risk_gradient(&w, &data).map_err(e)? * -gamma;
        let sg = cfg.sigma_gamma();
        let n = MOMENT_SAMPLES as f64;
        for i in 0..w.len() {
            let mean = samples.iter().map(|s| s[i]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            ensure((mean - mean_want[i]).abs() <= MOMENT_MEAN_SIGMAS * sg / n.sqrt(), || {
                format!("case {k}, coord {i}: mean {mean} vs {}", mean_want[i])
            })?;
            ensure((var / (sg * sg) - 1.0).abs() <= MOMENT_VAR_REL, || {
                format!("case {k}, coord {i}: variance {var} vs {}", sg * sg)
            })?;
        }
        summary.push(format!("dim {}", w.len()));
    }
    Ok(format!("{MOMENT_SAMPLES} samples each, {}", summary.join(" and ")))
}

fn audit_determinism() -> Outcome {
    let run = |threads: &str| -> Result<Vec<u8>, String> {
        let o = Command::new(env!("CARGO_BIN_EXE_badgd"))
            .args(["audit", "--data", FIXTURE, "--weights", "1,0", "--seed", "2024", "--trials", "20000"])
            .env("RAYON_NUM_THREADS", threads)
            .env_remove("BADGD_SEED")
            .output()
            .map_err(|err| err.to_string())?;
        ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
        Ok(o.stdout)
    };
    let (a, b, c) = (run("4")?, run("4")?, run("1")?);
    ensure(a == b, || "two runs differ".to_string())?;
    ensure(a == c, || "one thread and four threads differ".to_string())?;
    Ok(format!("{} bytes identical across 3 runs (1 and 4 threads)", a.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gap identities over random instances", gap_identities, Some(Duration::from_secs(5))),
        ("stats-based reductions and scaling constants", stats_reductions, None),
        ("risk-warp restricted optimality", riskwarp_restricted_optimality, None),
        ("grad-warp completing the square", gradwarp_completing_square, None),
        ("Gaussian tradeoff vs Monte Carlo", monte_carlo_vs_analytic, Some(Duration::from_secs(60))),
        ("privacy-profile engine", delta_engine, None),
        ("ε nondecreasing in μ", epsilon_monotone_in_mu, None),
        ("closed-form bound handling", closed_form_bound_handling, None),
        ("noisy increment moments", increment_moments, None),
        ("audit determinism", audit_determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".to_string()));
        let took = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(limit)) if took > *limit => Err(format!("took {took:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  criterion {:>2}: {name} ({took:.2?}) {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {:>2}: {name} ({took:.2?}) {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
