//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p incidence-core --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use incidence_core::cmd::{
    cmd_estimate, competitive_inversion, sigma_sensitivity_sweep, CmdOptions, MomentVector, ParamBox, SweepConfig,
};
use incidence_core::econometrics::{
    elasticity_postprocess, event_study, matching_did, pooled_did, DesignSpec, Frame, MatchConfig, Placebo,
};
use incidence_core::economy::{markdown, profit_maximize, EconomyParams};
use incidence_core::elasticity::{
    competitive_limit_elasticities, numeric_responses, reform_effect, revenue_tax_elasticities_analytic,
    verify_composition, FdOptions, Shock,
};
use incidence_core::panel::{generate_panel, replication_seed, PanelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

const REPS: u64 = 200;
const ATT: f64 = 0.09;
const PHI1: f64 = -0.133;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn share(v: &[bool]) -> f64 {
    v.iter().filter(|b| **b).count() as f64 / v.len() as f64
}

fn markdown_identity() -> Outcome {
    let m = markdown(2.78).unwrap();
    let gap = (m - 0.3597).abs();
    let closed_form = (m - 1.0 / 2.78).abs();
    outcome(
        gap <= 1e-12,
        format!(
            "markdown(2.78) = {m:.15}, |m - 0.3597| = {gap:.2e} (tolerance 1e-12); \
             |m - 1/2.78| = {closed_form:.1e}; rounds to {m:.4} / {m:.2}"
        ),
    )
}

fn foc_identity() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = FdOptions::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s_l = rng.random_range(0.2..0.8);
        let p = EconomyParams {
            s_l,
            s_k: 1.0 - s_l,
            eps: rng.random_range(0.5..50.0),
            rho: rng.random_range(-2.0..0.9),
            eta: rng.random_range(1.1..5.0),
            theta: rng.random_range(1.0..1.4),
            ..Default::default()
        };
        worst = worst.max(verify_composition(&p, &opts).unwrap().residual);
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 60.0,
        format!("max residual {worst:.2e} over 100 points, {secs:.2} s"),
    )
}

fn competitive_limit() -> Outcome {
    let opts = FdOptions::default();
    let mut worst: f64 = 0.0;
    for rho in [-1.0, 0.0, 0.5] {
        for eta in [1.5, 3.0] {
            let p = EconomyParams {
                eps: 1e5,
                rho,
                eta,
                ..Default::default()
            };
            let eq = profit_maximize(&p).unwrap();
            let (el, ek) =
                competitive_limit_elasticities(eq.labor_cost_share, 1.0 - eq.labor_cost_share, rho, eta).unwrap();
            let r = numeric_responses(Shock::Theta, &p, &opts).unwrap();
            worst = worst.max(rel(r.l, el)).max(rel(r.k, ek));
        }
    }
    outcome(worst < 0.01, format!("max relative gap {worst:.2e} on 6 grid points"))
}

fn revenue_tax() -> Outcome {
    let opts = FdOptions::default();
    let full = EconomyParams {
        eps: 1e6,
        tau_rev: 0.015,
        m: 1.0,
        ..Default::default()
    };
    let (nu, xi) = revenue_tax_elasticities_analytic(&full).unwrap();
    let r = numeric_responses(Shock::TauRev, &full, &opts).unwrap();
    let gap = rel(r.revenue, nu).max(rel(r.k, xi));
    let few = EconomyParams {
        tau_rev: 0.015,
        m: 0.015,
        ..Default::default()
    };
    let s = numeric_responses(Shock::TauRev, &few, &opts).unwrap();
    let largest = [s.l, s.k, s.q, s.lambda, s.revenue]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    outcome(
        gap < 1e-3 && largest < 0.01,
        format!("m=1 gap {gap:.2e}; largest |elasticity| at tau=m=0.015 is {largest:.2e}"),
    )
}

fn cmd_moments(p: &EconomyParams, phi2: f64) -> MomentVector {
    let m = reform_effect(p, PHI1, phi2, &FdOptions::default()).unwrap();
    let b = [m.beta_l, m.beta_k, m.beta_r];
    let mut vcov = [[0.0; 3]; 3];
    for i in 0..3 {
        vcov[i][i] = (0.01 * b[i]).powi(2);
    }
    MomentVector {
        beta_l: b[0],
        beta_k: b[1],
        beta_r: b[2],
        vcov,
    }
}

fn cmd_recovery() -> Outcome {
    let t = Instant::now();
    let phi2 = 1.015f64.ln();
    let truth = EconomyParams {
        eps: 2.78,
        eta: 2.0,
        rho: 0.3,
        tau_rev: 0.015,
        m: 0.015,
        ..Default::default()
    };
    let clean = cmd_moments(&truth, phi2);
    let bounds = ParamBox::default();
    let r = cmd_estimate(&clean, PHI1, phi2, &truth, &bounds, &CmdOptions::default()).unwrap();
    let exact = rel(r.eps_hat, 2.78).max(rel(r.eta_hat, 2.0)).max(rel(r.rho_hat, 0.3));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut errors = [Vec::new(), Vec::new(), Vec::new()];
    for rep in 0..20 {
        let mut m = clean.clone();
        for (i, b) in [&mut m.beta_l, &mut m.beta_k, &mut m.beta_r].into_iter().enumerate() {
            *b += Normal::new(0.0, clean.vcov[i][i].sqrt()).unwrap().sample(&mut rng);
        }
        let opts = CmdOptions {
            seed: rep,
            ..Default::default()
        };
        let r = cmd_estimate(&m, PHI1, phi2, &truth, &bounds, &opts).unwrap();
        errors[0].push(rel(r.eps_hat, 2.78));
        errors[1].push(rel(r.eta_hat, 2.0));
        errors[2].push(rel(r.rho_hat, 0.3));
    }
    let medians: Vec<f64> = errors
        .iter_mut()
        .map(|e| {
            e.sort_by(f64::total_cmp);
            0.5 * (e[9] + e[10])
        })
        .collect();
    let worst_median = medians.iter().cloned().fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        exact < 1e-3 && worst_median < 0.10 && secs < 300.0,
        format!(
            "noiseless max rel error {exact:.2e}; noisy medians eps {:.3} eta {:.3} rho {:.3}; {secs:.1} s",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn sweep_property() -> Outcome {
    let cfg = SweepConfig::default();
    let table = sigma_sensitivity_sweep(&cfg).unwrap();
    let comp = *cfg.eps_grid.last().unwrap();
    let largest_finite = cfg.eps_grid[cfg.eps_grid.len() - 2];
    let smallest = cfg.eps_grid[0];
    let mut monotone = true;
    let mut converges = true;
    let mut ratios = Vec::new();
    for (j, &eta) in cfg.eta_grid.iter().enumerate() {
        let column: Vec<_> = cfg.eps_grid.iter().map(|&e| table.column(e)[j]).collect();
        for pair in column.windows(2) {
            if let (Some(a), Some(b)) = (pair[0].sigma_hat, pair[1].sigma_hat) {
                monotone &= b <= a + 1e-9;
            }
        }
        let last = column.last().unwrap();
        let Some(reference) = last.sigma_hat else { continue };
        let inv = competitive_inversion(cfg.beta_l, cfg.phi1, last.labor_cost_share.unwrap(), eta);
        converges &= rel(reference, inv) < 0.01;
        let bias = |eps: f64| {
            let cell = column.iter().find(|c| c.eps == eps).unwrap();
            cell.sigma_hat.map(|s| s / reference - 1.0)
        };
        if let (Some(lo), Some(hi)) = (bias(smallest), bias(largest_finite)) {
            ratios.push(lo / hi);
        }
    }
    debug_assert!(comp > largest_finite);
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        monotone && converges && !ratios.is_empty() && min_ratio >= 10.0,
        format!(
            "monotone {monotone}, competitive column matches inversion {converges}, \
             min bias ratio eps={smallest}/eps={largest_finite} = {min_ratio:.1} over {} eta values",
            ratios.len()
        ),
    )
}

/// Per-replication statistics for the panel criteria.
struct Replication {
    beta_iv: f64,
    se_iv: f64,
    covered: bool,
    wald_gap: f64,
    delta_gap: f64,
    delta_se: f64,
    pre_pass: Vec<bool>,
    pre_joint_ok: bool,
    pretrend_rejected: bool,
    placebo_t: f64,
}

fn replicate(r: u64) -> Replication {
    let mut cfg = PanelConfig::default();
    cfg.workers.enabled = false;
    let seed = replication_seed(20_240, r);
    let data = generate_panel(&cfg, seed).unwrap();
    let f = Frame::from_firm_rows(&data.firm_rows).unwrap();
    let spec = DesignSpec::firm("log_employment");
    let did = pooled_did(&f, &spec).unwrap();
    let iv = &did.iv.coefficients[0];
    let delta = did.reduced_form.coef("eligible_now").unwrap();

    let es = event_study(&f, &spec).unwrap();
    let pre_pass = es.pre().map(|c| (c.estimate / c.se).abs() < 1.96).collect();
    let pre_joint_ok = es.pretrend_test().unwrap().p_value >= 0.05;

    let mut confounded = cfg.clone();
    confounded.sectors.pretrend = 0.01;
    let data = generate_panel(&confounded, seed).unwrap();
    let g = Frame::from_firm_rows(&data.firm_rows).unwrap();
    let pretrend_rejected = event_study(&g, &spec).unwrap().pretrend_test().unwrap().p_value < 0.05;

    let placebo = MatchConfig {
        placebo: Some(Placebo {
            share: 0.3,
            year: 2012,
            seed,
        }),
        ..Default::default()
    };
    let placebo_t = matching_did(&f, &placebo).unwrap().estimate.t;

    Replication {
        beta_iv: did.beta_iv,
        se_iv: iv.se,
        covered: iv.ci_low <= ATT && ATT <= iv.ci_high,
        wald_gap: (did.beta_iv - did.wald_ratio).abs(),
        delta_gap: did.delta - did.pi * ATT,
        delta_se: delta.se,
        pre_pass,
        pre_joint_ok,
        pretrend_rejected,
        placebo_t,
    }
}

fn estimator_correctness(reps: &[Replication]) -> Outcome {
    let betas: Vec<f64> = reps.iter().map(|r| r.beta_iv).collect();
    let (mean, sd) = mean_sd(&betas);
    let mc_se = sd / (betas.len() as f64).sqrt();
    let z = (mean - ATT) / mc_se;
    let gaps: Vec<f64> = reps.iter().map(|r| r.delta_gap).collect();
    let (gap_mean, gap_sd) = mean_sd(&gaps);
    let gap_se = gap_sd / (gaps.len() as f64).sqrt();
    let mean_delta_se = reps.iter().map(|r| r.delta_se).sum::<f64>() / reps.len() as f64;
    let wald = reps.iter().map(|r| r.wald_gap).fold(0.0, f64::max);
    outcome(
        z.abs() <= 0.5 && gap_mean.abs() <= 3.0 * gap_se && wald <= 1e-10,
        format!(
            "IV mean {mean:.5} (MC SE {mc_se:.5}, {z:+.2} SE from {ATT}); \
             reduced form minus pi*{ATT}: mean {gap_mean:+.5}, MC SE {gap_se:.5}, mean per-rep SE {mean_delta_se:.5}; \
             max Wald gap {wald:.1e}"
        ),
    )
}

fn inference(reps: &[Replication]) -> Outcome {
    let coverage = share(&reps.iter().map(|r| r.covered).collect::<Vec<_>>());
    let sandwich = (0..3).map(common::sandwich_oracle_gap).fold(0.0, f64::max);
    let mean_se = reps.iter().map(|r| r.se_iv).sum::<f64>() / reps.len() as f64;
    outcome(
        (0.92..=0.98).contains(&coverage) && sandwich < 1e-10,
        format!("coverage {coverage:.3} (mean SE {mean_se:.5}); sandwich oracle gap {sandwich:.1e}"),
    )
}

fn hdfe_oracle() -> Outcome {
    let gaps: Vec<f64> = [(100, 1), (250, 2), (500, 3)]
        .iter()
        .map(|&(n, s)| common::dense_oracle_gap(n, s))
        .collect();
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    outcome(
        worst < 1e-8,
        format!("max coefficient gap {worst:.1e} on 100/250/500-row designs"),
    )
}

fn event_study_validity(reps: &[Replication]) -> Outcome {
    let k = reps[0].pre_pass.len();
    let per_coefficient: Vec<f64> = (0..k)
        .map(|i| share(&reps.iter().map(|r| r.pre_pass[i]).collect::<Vec<_>>()))
        .collect();
    let all_at_once = share(&reps.iter().map(|r| r.pre_pass.iter().all(|p| *p)).collect::<Vec<_>>());
    let joint = share(&reps.iter().map(|r| r.pre_joint_ok).collect::<Vec<_>>());
    let power = share(&reps.iter().map(|r| r.pretrend_rejected).collect::<Vec<_>>());
    let min_coef = per_coefficient.iter().cloned().fold(1.0, f64::min);
    outcome(
        min_coef >= 0.90 && joint >= 0.90 && power >= 0.90,
        format!(
            "pre |t|<1.96 rates {per_coefficient:.3?} (all in same rep {all_at_once:.3}); \
             joint pre-trend test not rejected {joint:.3}; rejection under 0.01/yr pre-trend {power:.3}"
        ),
    )
}

fn placebo_matching(reps: &[Replication]) -> Outcome {
    let ts: Vec<f64> = reps.iter().map(|r| r.placebo_t).collect();
    let pass = share(&ts.iter().map(|t| t.abs() < 1.96).collect::<Vec<_>>());
    let (mean, sd) = mean_sd(&ts);
    outcome(
        pass >= 0.90,
        format!("|t|<1.96 in {pass:.3} of reps (t mean {mean:+.3}, sd {sd:.3})"),
    )
}

fn postprocessing() -> Outcome {
    let e = elasticity_postprocess(0.0944, PHI1).unwrap();
    outcome((e + 0.71).abs() <= 0.005, format!("0.0944 / -0.133 = {e:.5}"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "markdown identity", markdown_identity()),
        (2, "labor FOC composition", foc_identity()),
        (3, "competitive limit", competitive_limit()),
        (4, "revenue-tax formulas", revenue_tax()),
        (5, "CMD generate-and-recover", cmd_recovery()),
        (6, "sigma sweep property", sweep_property()),
    ];
    let t = Instant::now();
    let reps: Vec<Replication> = (0..REPS).into_par_iter().map(replicate).collect();
    let mc_secs = t.elapsed().as_secs_f64();
    results.push((7, "pooled IV correctness", estimator_correctness(&reps)));
    results.push((8, "cluster-robust inference", inference(&reps)));
    results.push((9, "HDFE dense oracle", hdfe_oracle()));
    results.push((10, "event-study validity", event_study_validity(&reps)));
    results.push((11, "placebo matching DiD", placebo_matching(&reps)));
    results.push((12, "elasticity post-processing", postprocessing()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("acceptance {id:>2} {tag} {name}: {}", o.detail);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({REPS} panel replications in {mc_secs:.0} s, total {:.0} s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
