//! Reform designs built on the regression engine: pooled eligibility IV,
//! event-study IV, matched difference-in-differences and balance checks.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::{group_ids, Frame};
use super::regression::{ols, tsls, Coefficient, EstimateReport, RegressionSpec, WaldTest};
use crate::error::{Error, Result};
use crate::plot::{coefficient_chart, Estimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subsample {
    pub column: String,
    /// Label (categorical column) or number (numeric column) to keep.
    pub equals: String,
}

/// Column roles shared by the reform designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSpec {
    pub outcome: String,
    pub unit: String,
    pub time: String,
    /// Actual treatment indicator `D`.
    pub treated: String,
    /// Current eligibility indicator `L`.
    pub eligible: String,
    /// First eligible year of the unit's sector (empty for never eligible).
    pub cohort: String,
    pub controls: Vec<String>,
    pub fixed_effects: Vec<Vec<String>>,
    pub cluster: Vec<String>,
    pub subsample: Option<Subsample>,
    /// Event window `[first, last]`; `k = -1` is always the reference.
    pub window: [i32; 2],
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self::firm("log_employment")
    }
}

fn keys(k: &[&str]) -> Vec<String> {
    k.iter().map(|s| s.to_string()).collect()
}

impl DesignSpec {
    /// Firm-year layout: firm, year and sector1 x year effects, clusters at
    /// 5-digit sector x state.
    pub fn firm(outcome: &str) -> Self {
        Self {
            outcome: outcome.into(),
            unit: "firm_id".into(),
            time: "year".into(),
            treated: "treated_now".into(),
            eligible: "eligible_now".into(),
            cohort: "cohort".into(),
            controls: Vec::new(),
            fixed_effects: vec![keys(&["firm_id"]), keys(&["year"]), keys(&["sector_1d", "year"])],
            cluster: keys(&["sector_5d", "state"]),
            subsample: None,
            window: [-4, 3],
        }
    }

    /// Worker-year layout: treatment and eligibility follow the base
    /// employer; worker, current-firm and base sector1 x year effects;
    /// clusters at the base employer's 5-digit sector x state.
    pub fn worker(outcome: &str) -> Self {
        Self {
            outcome: outcome.into(),
            unit: "worker_id".into(),
            time: "year".into(),
            treated: "treated_base_now".into(),
            eligible: "eligible_base_now".into(),
            cohort: "cohort_base".into(),
            controls: Vec::new(),
            fixed_effects: vec![
                keys(&["worker_id"]),
                keys(&["firm_id"]),
                keys(&["sector_1d_base", "year"]),
            ],
            cluster: keys(&["sector_5d_base", "state_base"]),
            subsample: None,
            window: [-4, 3],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window[0] > -1 || self.window[1] < 0 {
            return Err(Error::config("window", "must contain -1 and 0"));
        }
        Ok(())
    }

    fn select(&self, frame: &Frame) -> Result<Frame> {
        match &self.subsample {
            None => Ok(frame.clone()),
            Some(s) => {
                let code = frame.code_of(&s.column, &s.equals)?;
                let keep: Vec<bool> = frame.column(&s.column)?.iter().map(|v| *v == code).collect();
                Ok(frame.filter(&keep))
            }
        }
    }

    fn regression(&self, outcome: &str) -> RegressionSpec {
        RegressionSpec {
            outcome: outcome.into(),
            endogenous: Vec::new(),
            instruments: Vec::new(),
            controls: self.controls.clone(),
            fixed_effects: self.fixed_effects.clone(),
            cluster: self.cluster.clone(),
        }
    }
}

/// Keeps rows where every listed column is finite.
fn complete_rows(frame: &Frame, cols: &[&str]) -> Result<Frame> {
    let mut keep = vec![true; frame.len()];
    for c in cols {
        for (k, v) in keep.iter_mut().zip(frame.column(c)?) {
            *k &= v.is_finite();
        }
    }
    Ok(frame.filter(&keep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidReport {
    pub iv: EstimateReport,
    pub first_stage: EstimateReport,
    pub reduced_form: EstimateReport,
    pub beta_iv: f64,
    pub pi: f64,
    pub delta: f64,
    /// `delta / pi` from the two separate regressions.
    pub wald_ratio: f64,
}

/// Eligibility-instrumented pooled difference-in-differences: first stage of
/// `D` on `L`, reduced form of the outcome on `L`, and their 2SLS ratio.
pub fn pooled_did(frame: &Frame, spec: &DesignSpec) -> Result<DidReport> {
    let sub = spec.select(frame)?;
    let sub = complete_rows(&sub, &[&spec.outcome, &spec.treated, &spec.eligible])?;
    let mut first = spec.regression(&spec.treated);
    first.endogenous = vec![spec.eligible.clone()];
    let mut reduced = spec.regression(&spec.outcome);
    reduced.endogenous = vec![spec.eligible.clone()];
    let mut iv = spec.regression(&spec.outcome);
    iv.endogenous = vec![spec.treated.clone()];
    iv.instruments = vec![spec.eligible.clone()];

    let first = ols(&first, &sub)?;
    let reduced = ols(&reduced, &sub)?;
    let iv = tsls(&iv, &sub)?;
    let get = |r: &EstimateReport, name: &str| {
        r.coef(name)
            .map(|c| c.estimate)
            .ok_or_else(|| Error::Singular(format!("{name} was absorbed in the {} regression", r.outcome)))
    };
    let pi = get(&first, &spec.eligible)?;
    let delta = get(&reduced, &spec.eligible)?;
    let beta_iv = get(&iv, &spec.treated)?;
    Ok(DidReport {
        wald_ratio: delta / pi,
        iv,
        first_stage: first,
        reduced_form: reduced,
        beta_iv,
        pi,
        delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCoefficient {
    pub k: i32,
    pub estimate: f64,
    pub se: f64,
    pub first_stage_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyReport {
    pub report: EstimateReport,
    pub profile: Vec<EventCoefficient>,
    /// Horizons with no observations, left out of the regression.
    pub omitted: Vec<i32>,
    pub trimmed_rows: usize,
}

impl EventStudyReport {
    pub fn pre(&self) -> impl Iterator<Item = &EventCoefficient> {
        self.profile.iter().filter(|c| c.k < -1)
    }

    pub fn post(&self) -> impl Iterator<Item = &EventCoefficient> {
        self.profile.iter().filter(|c| c.k >= 0)
    }

    /// Joint Wald test that all pre-period coefficients are zero.
    pub fn pretrend_test(&self) -> Result<WaldTest> {
        let names: Vec<String> = self.pre().map(|c| event_name("D", c.k)).collect();
        self.report
            .wald_test(&names.iter().map(String::as_str).collect::<Vec<_>>())
    }

    pub fn post_mean(&self) -> f64 {
        let v: Vec<f64> = self.post().map(|c| c.estimate).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// `k, beta, se` rows, including the normalized `k = -1`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "beta", "se"])?;
        for (k, b, s) in self.rows() {
            w.write_record([k.to_string(), b.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    fn rows(&self) -> Vec<(i32, f64, f64)> {
        let mut rows: Vec<(i32, f64, f64)> = self.profile.iter().map(|c| (c.k, c.estimate, c.se)).collect();
        rows.push((-1, 0.0, 0.0));
        rows.sort_by_key(|r| r.0);
        rows
    }

    pub fn svg(&self) -> String {
        event_chart(&format!("Event study: {}", self.report.outcome), &self.rows())
    }
}

/// Coefficient plot of `(k, beta, se)` rows with 95% whiskers.
pub fn event_chart(title: &str, rows: &[(i32, f64, f64)]) -> String {
    let est: Vec<Estimate> = rows
        .iter()
        .map(|&(k, b, s)| Estimate {
            x: k as f64,
            value: b,
            lo: b - 1.96 * s,
            hi: b + 1.96 * s,
        })
        .collect();
    coefficient_chart(title, "years relative to eligibility", "coefficient", &est)
}

/// Reads `k, beta, se` rows written by [`EventStudyReport::write_csv`].
pub fn read_event_csv<R: Read>(input: R) -> Result<Vec<(i32, f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: (i32, f64, f64) = rec?;
        rows.push(row);
    }
    Ok(rows)
}

fn event_name(prefix: &str, k: i32) -> String {
    format!("{prefix}[k={k}]")
}

/// First treated period per row's unit (`NaN` if never treated).
fn treatment_start(frame: &Frame, unit: &str, time: &str, treated: &str) -> Result<Vec<f64>> {
    let (ids, g) = group_ids(frame, &[unit.to_string()])?;
    let t = frame.column(time)?;
    let d = frame.column(treated)?;
    let mut start = vec![f64::INFINITY; g];
    for i in 0..frame.len() {
        if d[i] > 0.5 {
            let s = &mut start[ids[i] as usize];
            *s = s.min(t[i]);
        }
    }
    Ok(ids
        .iter()
        .map(|&u| {
            let s = start[u as usize];
            if s.is_finite() {
                s
            } else {
                f64::NAN
            }
        })
        .collect())
}

/// Event-study 2SLS: treatment-timing dummies `D^k` instrumented by
/// eligibility-timing dummies `1(t = cohort + k)`, `k` in the window minus
/// `-1`. Rows of units whose eligibility or treatment timing falls outside the
/// window are trimmed.
pub fn event_study(frame: &Frame, spec: &DesignSpec) -> Result<EventStudyReport> {
    spec.validate()?;
    let sub = spec.select(frame)?;
    let sub = complete_rows(&sub, &[&spec.outcome, &spec.treated, &spec.time])?;
    let start = treatment_start(&sub, &spec.unit, &spec.time, &spec.treated)?;
    let time = sub.column(&spec.time)?.to_vec();
    let cohort = sub.column(&spec.cohort)?.to_vec();
    let [lo, hi] = spec.window;
    let inside = |e: f64| e.is_nan() || (e >= lo as f64 && e <= hi as f64);
    let keep: Vec<bool> = (0..sub.len())
        .map(|i| inside(time[i] - cohort[i]) && inside(time[i] - start[i]))
        .collect();
    let trimmed_rows = keep.iter().filter(|k| !**k).count();
    let mut data = sub.filter(&keep);
    let time: Vec<f64> = time.iter().zip(&keep).filter(|p| *p.1).map(|p| *p.0).collect();
    let cohort: Vec<f64> = cohort.iter().zip(&keep).filter(|p| *p.1).map(|p| *p.0).collect();
    let start: Vec<f64> = start.iter().zip(&keep).filter(|p| *p.1).map(|p| *p.0).collect();

    let mut endogenous = Vec::new();
    let mut instruments = Vec::new();
    let mut omitted = Vec::new();
    for k in lo..=hi {
        if k == -1 {
            continue;
        }
        let d: Vec<f64> = time
            .iter()
            .zip(&start)
            .map(|(t, s)| ((t - s) == k as f64) as u8 as f64)
            .collect();
        let z: Vec<f64> = time
            .iter()
            .zip(&cohort)
            .map(|(t, c)| ((t - c) == k as f64) as u8 as f64)
            .collect();
        if d.iter().all(|v| *v == 0.0) || z.iter().all(|v| *v == 0.0) {
            log::warn!("event time {k} has no observations; coefficient omitted");
            omitted.push(k);
            continue;
        }
        let (dn, zn) = (event_name("D", k), event_name("Z", k));
        data.set_numeric(&dn, d)?;
        data.set_numeric(&zn, z)?;
        endogenous.push(dn);
        instruments.push(zn);
    }
    if endogenous.is_empty() {
        return Err(Error::Data("no event-time cell has observations".into()));
    }
    let mut reg = spec.regression(&spec.outcome);
    reg.endogenous = endogenous;
    reg.instruments = instruments;
    let report = tsls(&reg, &data)?;
    let profile = (lo..=hi)
        .filter(|k| *k != -1)
        .filter_map(|k| {
            let name = event_name("D", k);
            let c = report.coef(&name)?;
            let f = report
                .first_stage
                .iter()
                .find(|f| f.endogenous == name)
                .map_or(f64::NAN, |f| f.f_stat);
            Some(EventCoefficient {
                k,
                estimate: c.estimate,
                se: c.se,
                first_stage_f: f,
            })
        })
        .collect();
    Ok(EventStudyReport {
        report,
        profile,
        omitted,
        trimmed_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placebo {
    /// Share of never-treated units given a fake treatment.
    pub share: f64,
    pub year: i32,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    pub outcome: String,
    pub unit: String,
    pub time: String,
    pub treated: String,
    /// Fixed effects of the matched DiD.
    pub fixed_effects: Vec<Vec<String>>,
    pub cluster: Vec<String>,
    /// Pre-period variables whose deciles define the exact-match cells.
    pub match_on: Vec<String>,
    /// Inclusive pre-period used for the matching variables.
    pub pre_years: [i32; 2],
    pub placebo: Option<Placebo>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            outcome: "log_employment".into(),
            unit: "firm_id".into(),
            time: "year".into(),
            treated: "treated_now".into(),
            fixed_effects: vec![keys(&["firm_id"]), keys(&["year"]), keys(&["sector_1d", "year"])],
            cluster: keys(&["sector_5d", "state"]),
            match_on: keys(&["log_employment", "log_avg_wage", "hires"]),
            pre_years: [2008, 2011],
            placebo: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub did: EstimateReport,
    pub estimate: Coefficient,
    pub treated_units: usize,
    pub matched_pairs: usize,
    pub unmatched_treated: usize,
    /// `(treated unit, control unit)` ids.
    pub pairs: Vec<(f64, f64)>,
}

/// Decile (0-9) of each value within `values`.
pub fn deciles(values: &[f64]) -> Vec<u8> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f64> = (1..10).map(|i| sorted[(i * n / 10).min(n - 1)]).collect();
    values
        .iter()
        .map(|v| cuts.iter().filter(|c| **c <= *v).count() as u8)
        .collect()
}

/// Logistic regression by Newton-Raphson; `x` excludes the intercept.
/// Returns fitted probabilities.
pub fn logistic_scores(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let k = x.len() + 1;
    let design = DMatrix::from_fn(n, k, |i, j| {
        if j == 0 {
            1.0
        } else {
            let col = &x[j - 1];
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            if sd > 0.0 {
                (col[i] - mean) / sd
            } else {
                0.0
            }
        }
    });
    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::zeros(k);
    for _ in 0..100 {
        let eta = &design * &beta;
        let p = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w = p.map(|q| (q * (1.0 - q)).max(1e-10));
        let grad = design.tr_mul(&(&yv - &p));
        let mut hess = DMatrix::zeros(k, k);
        for i in 0..n {
            let row = design.row(i);
            hess += row.transpose() * row * w[i];
        }
        for j in 1..k {
            // light ridge keeps separated cells finite
            hess[(j, j)] += 1e-6;
        }
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::Singular("propensity score Hessian".into()))?
            .solve(&grad);
        beta += &step;
        if step.amax() < 1e-10 {
            break;
        }
    }
    let eta = &design * &beta;
    Ok(eta.iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect())
}

/// Exact matching on decile cells of pre-period means, propensity-score
/// nearest neighbour (1:1, without replacement) within cells, then a
/// two-way fixed-effects DiD on the matched units.
pub fn matching_did(frame: &Frame, cfg: &MatchConfig) -> Result<MatchReport> {
    if cfg.match_on.is_empty() {
        return Err(Error::config("match_on", "need at least one matching variable"));
    }
    let sub = complete_rows(frame, &[&cfg.outcome, &cfg.time, &cfg.treated, &cfg.unit])?;
    let start = treatment_start(&sub, &cfg.unit, &cfg.time, &cfg.treated)?;
    let unit = sub.column(&cfg.unit)?;
    let time = sub.column(&cfg.time)?;
    let [pre_lo, pre_hi] = cfg.pre_years;

    // per-unit pre-period means
    #[derive(Default)]
    struct Acc {
        sums: Vec<f64>,
        count: f64,
        start: f64,
    }
    let vars: Vec<&[f64]> = cfg.match_on.iter().map(|c| sub.column(c)).collect::<Result<_>>()?;
    let mut units: BTreeMap<u64, Acc> = BTreeMap::new();
    for i in 0..sub.len() {
        let key = unit[i].to_bits();
        let acc = units.entry(key).or_insert_with(|| Acc {
            sums: vec![0.0; vars.len()],
            count: 0.0,
            start: start[i],
        });
        let t = time[i];
        if t >= pre_lo as f64 && t <= pre_hi as f64 && vars.iter().all(|v| v[i].is_finite()) {
            for (s, v) in acc.sums.iter_mut().zip(&vars) {
                *s += v[i];
            }
            acc.count += 1.0;
        }
    }
    let mut ids = Vec::new();
    let mut means: Vec<Vec<f64>> = vec![Vec::new(); vars.len()];
    let mut event: Vec<f64> = Vec::new();
    for (key, acc) in &units {
        // units treated inside the matching window are neither group
        if acc.count == 0.0 || acc.start <= pre_hi as f64 {
            continue;
        }
        ids.push(f64::from_bits(*key));
        for (m, s) in means.iter_mut().zip(&acc.sums) {
            m.push(s / acc.count);
        }
        event.push(acc.start);
    }
    let mut is_treated: Vec<bool> = event.iter().map(|e| e.is_finite()).collect();
    if let Some(p) = &cfg.placebo {
        if !(0.0..=1.0).contains(&p.share) {
            return Err(Error::config("placebo.share", "must lie in [0, 1]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut placebo_treated = Vec::with_capacity(ids.len());
        for e in event.iter_mut() {
            let never = e.is_nan();
            let fake = never && rng.random::<f64>() < p.share;
            placebo_treated.push(fake);
            if fake {
                *e = p.year as f64;
            } else if !never {
                // actually treated units leave the placebo comparison
                *e = f64::NEG_INFINITY;
            }
        }
        is_treated = placebo_treated;
    }
    let usable: Vec<usize> = (0..ids.len()).filter(|&i| event[i] != f64::NEG_INFINITY).collect();
    let treated_units = usable.iter().filter(|&&i| is_treated[i]).count();
    if treated_units == 0 {
        return Err(Error::Data("no treated units with pre-period data".into()));
    }

    let cells: Vec<Vec<u8>> = means
        .iter()
        .map(|m| deciles(&usable.iter().map(|&i| m[i]).collect::<Vec<_>>()))
        .collect();
    let x: Vec<Vec<f64>> = means.iter().map(|m| usable.iter().map(|&i| m[i]).collect()).collect();
    let y: Vec<f64> = usable.iter().map(|&i| is_treated[i] as u8 as f64).collect();
    let score = logistic_scores(&x, &y)?;

    let mut by_cell: BTreeMap<Vec<u8>, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (pos, &i) in usable.iter().enumerate() {
        let key: Vec<u8> = cells.iter().map(|c| c[pos]).collect();
        let entry = by_cell.entry(key).or_default();
        if is_treated[i] {
            entry.0.push(pos);
        } else {
            entry.1.push(pos);
        }
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (treated, mut controls) in by_cell.into_values() {
        for t in treated {
            let best = controls
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (score[t] - score[**a])
                        .abs()
                        .total_cmp(&(score[t] - score[**b]).abs())
                        .then(ids[usable[**a]].total_cmp(&ids[usable[**b]]))
                })
                .map(|(j, _)| j);
            if let Some(j) = best {
                pairs.push((t, controls.remove(j)));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Data("no treated unit found a match".into()));
    }
    pairs.sort_by(|a, b| ids[usable[a.0]].total_cmp(&ids[usable[b.0]]));

    // unit id -> (treated?, pair event year)
    let mut role: BTreeMap<u64, (bool, f64)> = BTreeMap::new();
    for &(t, c) in &pairs {
        let e = event[usable[t]];
        role.insert(ids[usable[t]].to_bits(), (true, e));
        role.insert(ids[usable[c]].to_bits(), (false, e));
    }
    let keep: Vec<bool> = unit.iter().map(|u| role.contains_key(&u.to_bits())).collect();
    let mut data = sub.filter(&keep);
    let (tp, post): (Vec<f64>, Vec<f64>) = data
        .column(&cfg.unit)?
        .iter()
        .zip(data.column(&cfg.time)?)
        .map(|(u, t)| {
            let (tr, e) = role[&u.to_bits()];
            let p = (*t >= e) as u8 as f64;
            (if tr { p } else { 0.0 }, p)
        })
        .unzip();
    data.set_numeric("treated_post", tp)?;
    data.set_numeric("post", post)?;
    let varying_event = {
        let first = role.values().next().map(|r| r.1);
        role.values().any(|r| Some(r.1) != first)
    };
    let mut controls = Vec::new();
    if varying_event {
        controls.push("post".to_string());
    }
    let spec = RegressionSpec {
        outcome: cfg.outcome.clone(),
        endogenous: vec!["treated_post".into()],
        instruments: Vec::new(),
        controls,
        fixed_effects: cfg.fixed_effects.clone(),
        cluster: cfg.cluster.clone(),
    };
    let did = ols(&spec, &data)?;
    let estimate = did
        .coef("treated_post")
        .cloned()
        .ok_or_else(|| Error::Singular("treated_post absorbed".into()))?;
    Ok(MatchReport {
        did,
        estimate,
        treated_units,
        matched_pairs: pairs.len(),
        unmatched_treated: treated_units - pairs.len(),
        pairs: pairs.iter().map(|&(t, c)| (ids[usable[t]], ids[usable[c]])).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceConfig {
    /// Column whose positive finite values mark ever-eligible units
    /// (a cohort year or a 0/1 flag).
    pub eligibility: String,
    pub time: String,
    /// Last pre-reform period included.
    pub pre_end: i32,
    pub covariates: Vec<String>,
    /// Fixed effects of the two-way variant.
    pub twfe_effects: Vec<Vec<String>>,
    pub cluster: Vec<String>,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            eligibility: "cohort".into(),
            time: "year".into(),
            pre_end: 2011,
            covariates: keys(&["log_employment", "log_avg_wage", "hires"]),
            twfe_effects: vec![keys(&["year"]), keys(&["sector_1d"])],
            cluster: keys(&["sector_5d", "state"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub baseline: EstimateReport,
    pub twfe: EstimateReport,
}

/// Pre-reform regressions of ever-eligibility on covariates: pooled OLS with
/// an intercept and a two-way fixed-effects variant.
pub fn balance_check(frame: &Frame, cfg: &BalanceConfig) -> Result<BalanceReport> {
    let time = frame.column(&cfg.time)?;
    let keep: Vec<bool> = time.iter().map(|t| *t <= cfg.pre_end as f64).collect();
    let mut pre = frame.filter(&keep);
    let ever: Vec<f64> = pre
        .column(&cfg.eligibility)?
        .iter()
        .map(|v| (v.is_finite() && *v > 0.0) as u8 as f64)
        .collect();
    pre.set_numeric("eligible_ever", ever)?;
    let base = RegressionSpec {
        outcome: "eligible_ever".into(),
        endogenous: cfg.covariates.clone(),
        instruments: Vec::new(),
        controls: Vec::new(),
        fixed_effects: Vec::new(),
        cluster: cfg.cluster.clone(),
    };
    let baseline = ols(&base, &pre)?;
    let twfe = ols(
        &RegressionSpec {
            fixed_effects: cfg.twfe_effects.clone(),
            ..base
        },
        &pre,
    )?;
    Ok(BalanceReport { baseline, twfe })
}
