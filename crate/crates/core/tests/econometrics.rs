mod common;

use incidence_core::econometrics::*;
use incidence_core::panel::{generate_panel, PanelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_panel(seed: u64) -> Frame {
    let mut cfg = PanelConfig {
        n_firms: 1500,
        ..Default::default()
    };
    cfg.workers.enabled = false;
    let d = generate_panel(&cfg, seed).unwrap();
    Frame::from_firm_rows(&d.firm_rows).unwrap()
}

#[test]
fn two_way_absorption_matches_dense_dummies() {
    for (n, seed) in [(120usize, 3u64), (300, 4), (500, 5)] {
        let gap = common::dense_oracle_gap(n, seed);
        assert!(gap < 1e-8, "n={n}: {gap}");
    }
}

#[test]
fn cluster_covariance_matches_explicit_sandwich() {
    for seed in 0..3 {
        let gap = common::sandwich_oracle_gap(seed);
        assert!(gap < 1e-10, "{gap}");
    }
}

#[test]
fn pooled_iv_equals_wald_ratio() {
    for seed in 0..3 {
        let f = small_panel(seed);
        let d = pooled_did(&f, &DesignSpec::firm("log_employment")).unwrap();
        assert!((d.beta_iv - d.wald_ratio).abs() < 1e-10);
        assert!(d.iv.first_stage[0].f_stat > 10.0);
        assert!(d.pi > 0.4 && d.pi < 0.9, "pi = {}", d.pi);
    }
}

#[test]
fn row_order_does_not_matter() {
    let f = small_panel(4);
    let mut order: Vec<usize> = (0..f.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let g = f.take(&order);
    let spec = DesignSpec::firm("log_employment");
    let (a, b) = (pooled_did(&f, &spec).unwrap(), pooled_did(&g, &spec).unwrap());
    for (x, y) in [
        (&a.iv, &b.iv),
        (&a.first_stage, &b.first_stage),
        (&a.reduced_form, &b.reduced_form),
    ] {
        for (c, d) in x.coefficients.iter().zip(&y.coefficients) {
            assert!((c.estimate - d.estimate).abs() < 1e-12);
            assert!((c.se - d.se).abs() < 1e-12);
        }
    }
    let (ea, eb) = (event_study(&f, &spec).unwrap(), event_study(&g, &spec).unwrap());
    for (c, d) in ea.profile.iter().zip(&eb.profile) {
        assert!((c.estimate - d.estimate).abs() < 1e-12 && (c.se - d.se).abs() < 1e-12);
    }
}

#[test]
fn event_study_recovers_step_and_flags_empty_horizons() {
    let f = small_panel(5);
    let es = event_study(&f, &DesignSpec::firm("log_employment")).unwrap();
    assert_eq!(es.profile.len(), 7);
    assert!(es.omitted.is_empty());
    assert!((es.post_mean() - 0.09).abs() < 0.03, "post mean {}", es.post_mean());
    for c in es.pre() {
        assert!(c.estimate.abs() < 4.0 * c.se + 1e-3);
    }

    let wide = DesignSpec {
        window: [-8, 3],
        ..DesignSpec::firm("log_employment")
    };
    let es = event_study(&f, &wide).unwrap();
    assert!(es.omitted.contains(&-8) && es.omitted.contains(&-7));
    assert!(es.profile.iter().all(|c| c.k > -7));

    let mut csv = Vec::new();
    es.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("k,beta,se\n"));
    assert!(text.contains("\n-1,0,0\n"));
    assert!(es.svg().starts_with("<svg"));
}

#[test]
fn event_study_detects_injected_pretrend() {
    let mut cfg = PanelConfig {
        n_firms: 3000,
        ..Default::default()
    };
    cfg.workers.enabled = false;
    cfg.sectors.pretrend = 0.02;
    let d = generate_panel(&cfg, 8).unwrap();
    let f = Frame::from_firm_rows(&d.firm_rows).unwrap();
    let es = event_study(&f, &DesignSpec::firm("log_employment")).unwrap();
    assert!(es.pretrend_test().unwrap().p_value < 0.01);
}

#[test]
fn twin_controls_are_all_matched() {
    // every treated unit has an untreated twin with identical pre-period data
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 8];
    for u in 0..30 {
        let base = [
            rng.random::<f64>() * 3.0,
            rng.random::<f64>() + 7.0,
            rng.random_range(0..20) as f64,
        ];
        for twin in 0..2 {
            for year in 2008..2016 {
                let treated = twin == 0 && year >= 2012;
                let row = [
                    (2 * u + twin) as f64,
                    year as f64,
                    base[0] + if treated { 0.09 } else { 0.0 } + 0.01 * ((year * 7 + u) % 5) as f64,
                    base[1],
                    base[2],
                    treated as u8 as f64,
                    (u % 6) as f64,
                    0.0,
                ];
                for (c, v) in cols.iter_mut().zip(row) {
                    c.push(v);
                }
            }
        }
    }
    let names = [
        "firm_id",
        "year",
        "log_employment",
        "log_avg_wage",
        "hires",
        "treated_now",
        "sector_5d",
        "state",
    ];
    let mut f = Frame::new();
    for (n, c) in names.iter().zip(cols) {
        f.set_numeric(n, c).unwrap();
    }
    f.set_numeric("sector_1d", vec![0.0; f.len()]).unwrap();
    let m = matching_did(&f, &MatchConfig::default()).unwrap();
    assert_eq!(m.treated_units, 30);
    assert_eq!(m.unmatched_treated, 0);
    for (t, c) in &m.pairs {
        assert_eq!(*c, t + 1.0);
    }
    assert!((m.estimate.estimate - 0.09).abs() < 1e-10);
}

#[test]
fn matched_and_iv_estimates_agree() {
    let mut cfg = PanelConfig::default();
    cfg.workers.enabled = false;
    let d = generate_panel(&cfg, 21).unwrap();
    let f = Frame::from_firm_rows(&d.firm_rows).unwrap();
    let iv = pooled_did(&f, &DesignSpec::firm("log_employment")).unwrap();
    let m = matching_did(&f, &MatchConfig::default()).unwrap();
    let se = (iv.iv.coefficients[0].se.powi(2) + m.estimate.se.powi(2)).sqrt();
    assert!((iv.beta_iv - m.estimate.estimate).abs() < 1.96 * se);
    assert!(m.matched_pairs > 0 && m.matched_pairs + m.unmatched_treated == m.treated_units);
}

#[test]
fn balance_regressions() {
    let f = small_panel(6);
    let b = balance_check(&f, &BalanceConfig::default()).unwrap();
    assert_eq!(b.baseline.coefficients.len(), 4);
    assert_eq!(b.twfe.coefficients.len(), 3);

    // eligibility itself as a covariate: exact fit
    let mut g = f.clone();
    let ever: Vec<f64> = f
        .column("cohort")
        .unwrap()
        .iter()
        .map(|c| c.is_finite() as u8 as f64)
        .collect();
    g.set_numeric("ever", ever).unwrap();
    g.set_numeric("constant", vec![2.0; g.len()]).unwrap();
    let cfg = BalanceConfig {
        covariates: vec!["ever".into()],
        ..Default::default()
    };
    let b = balance_check(&g, &cfg).unwrap();
    assert!((b.baseline.coef("ever").unwrap().estimate - 1.0).abs() < 1e-10);
    assert!((b.baseline.r2 - 1.0).abs() < 1e-10);

    let cfg = BalanceConfig {
        covariates: vec!["log_employment".into(), "constant".into()],
        ..Default::default()
    };
    let b = balance_check(&g, &cfg).unwrap();
    assert!(b.twfe.dropped.contains(&"constant".to_string()));
    assert!(b.twfe.coef("constant").is_none());
}

#[test]
fn worker_design_runs_on_base_employer() {
    let cfg = PanelConfig {
        n_firms: 600,
        ..Default::default()
    };
    let d = generate_panel(&cfg, 2).unwrap();
    let f = Frame::from_worker_rows(&d.worker_rows).unwrap();
    let r = pooled_did(&f, &DesignSpec::worker("log_net_earnings")).unwrap();
    assert!((r.beta_iv - r.wald_ratio).abs() < 1e-10);
    assert!(r.iv.clusters >= 2);
}

#[test]
fn csv_round_trip_gives_same_estimates() {
    let mut cfg = PanelConfig {
        n_firms: 800,
        ..Default::default()
    };
    cfg.workers.enabled = false;
    let d = generate_panel(&cfg, 12).unwrap();
    let mut buf = Vec::new();
    d.write_firm_csv(&mut buf).unwrap();
    let a = Frame::from_firm_rows(&d.firm_rows).unwrap();
    let b = Frame::from_csv(buf.as_slice()).unwrap();
    let spec = DesignSpec::firm("log_employment");
    let (ra, rb) = (pooled_did(&a, &spec).unwrap(), pooled_did(&b, &spec).unwrap());
    assert!((ra.beta_iv - rb.beta_iv).abs() < 1e-9);
}

#[test]
fn postprocessing() {
    assert!((elasticity_postprocess(0.0944, -0.133).unwrap() + 0.7098).abs() < 1e-4);
    assert!(elasticity_postprocess(1.0, 0.0).is_err());
    let c = compare_cost_change(-0.133, 1.12, 1.31);
    assert!((c.statutory - (1.12f64 / 1.31).ln()).abs() < 1e-15);
}
