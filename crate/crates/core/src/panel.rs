//! Synthetic matched employer-employee panels with staggered sector
//! eligibility, imperfect take-up and product-criterion contamination.
//!
//! Every random component draws from its own ChaCha stream of the run seed, so
//! changing e.g. the worker configuration leaves the firm table untouched.

use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STREAM_TREE: u64 = 1;
const STREAM_COMPLIANCE: u64 = 2;
const STREAM_FIRMS: u64 = 3;
const STREAM_WORKERS: u64 = 4;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for replication `rep` of a batch started from `seed` (splitmix64).
pub fn replication_seed(seed: u64, rep: u64) -> u64 {
    let mut z = seed ^ rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated standard deviation")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SectorConfig {
    pub n_sector1: usize,
    pub n_sector5: usize,
    pub n_sector7: usize,
    pub n_states: usize,
    /// Probability that a 7-digit sector is ever eligible.
    pub eligible_share: f64,
    /// Cohort years, drawn uniformly for eligible sectors.
    pub cohort_years: Vec<i32>,
    /// Extra linear trend per year in eligible sectors' outcomes; 0 keeps
    /// parallel trends.
    pub pretrend: f64,
}

impl Default for SectorConfig {
    fn default() -> Self {
        Self {
            n_sector1: 10,
            n_sector5: 60,
            n_sector7: 300,
            n_states: 27,
            eligible_share: 0.5,
            cohort_years: vec![2012, 2013, 2014],
            pretrend: 0.0,
        }
    }
}

impl SectorConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, n) in [
            ("n_sector1", self.n_sector1),
            ("n_sector5", self.n_sector5),
            ("n_sector7", self.n_sector7),
            ("n_states", self.n_states),
        ] {
            if n == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.n_sector5 < self.n_sector1 || self.n_sector7 < self.n_sector5 {
            return Err(Error::config(
                "n_sector5",
                "need n_sector1 <= n_sector5 <= n_sector7 so every code has a child",
            ));
        }
        if !(0.0..=1.0).contains(&self.eligible_share) {
            return Err(Error::config("eligible_share", "must lie in [0, 1]"));
        }
        if self.cohort_years.is_empty() {
            return Err(Error::config("cohort_years", "need at least one cohort"));
        }
        if !self.pretrend.is_finite() {
            return Err(Error::config("pretrend", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub code1: u32,
    pub code5: u32,
    pub code7: u32,
    /// First eligible year; `None` for never-eligible sectors.
    pub cohort: Option<i32>,
    /// Per-year outcome trend (non-zero only under the confounding switch).
    pub trend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorTree {
    pub sectors: Vec<Sector>,
    pub states: Vec<u32>,
}

impl SectorTree {
    pub fn eligible_count(&self) -> usize {
        self.sectors.iter().filter(|s| s.cohort.is_some()).count()
    }
}

/// Hierarchical sector codes: `code5 = code1 * 1000 + i`, `code7 = code5 * 100 + j`.
pub fn generate_sector_tree(cfg: &SectorConfig, seed: u64) -> Result<SectorTree> {
    cfg.validate()?;
    let mut rng = rng_for(seed, STREAM_TREE);
    let code5: Vec<u32> = (0..cfg.n_sector5)
        .map(|i| {
            let parent = (i % cfg.n_sector1) as u32 + 1;
            parent * 1000 + (i / cfg.n_sector1) as u32
        })
        .collect();
    let sectors = (0..cfg.n_sector7)
        .map(|i| {
            let c5 = code5[i % cfg.n_sector5];
            let eligible = rng.random::<f64>() < cfg.eligible_share;
            let cohort = eligible.then(|| *cfg.cohort_years.choose(&mut rng).expect("non-empty"));
            Sector {
                code1: c5 / 1000,
                code5: c5,
                code7: c5 * 100 + (i / cfg.n_sector5) as u32,
                cohort,
                trend: if eligible { cfg.pretrend } else { 0.0 },
            }
        })
        .collect();
    Ok(SectorTree {
        sectors,
        states: (1..=cfg.n_states as u32).collect(),
    })
}

/// Treatment start year per firm (`None` if never treated).
///
/// Firms in eligible sectors take up at their sector's cohort year with
/// probability `p_take`; firms in never-eligible sectors are treated from
/// `ncm_start` with probability `p_ncm`. Treatment is absorbing.
pub fn assign_compliance(
    tree: &SectorTree,
    firm_sectors: &[usize],
    p_take: f64,
    p_ncm: f64,
    ncm_start: i32,
    seed: u64,
) -> Result<Vec<Option<i32>>> {
    for (key, p) in [("p_take", p_take), ("p_ncm", p_ncm)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(key, format!("must lie in [0, 1], got {p}")));
        }
    }
    let mut rng = rng_for(seed, STREAM_COMPLIANCE);
    firm_sectors
        .iter()
        .map(|&s| {
            let sector = tree
                .sectors
                .get(s)
                .ok_or_else(|| Error::config("firm_sectors", format!("sector index {s} out of range")))?;
            let u: f64 = rng.random();
            Ok(match sector.cohort {
                Some(c) => (u < p_take).then_some(c),
                None => (u < p_ncm).then_some(ncm_start),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    /// Small below 10 employees, medium 10-49, large 50 and above.
    pub fn from_employment(employees: f64) -> Self {
        if employees < 10.0 {
            SizeClass::Small
        } else if employees < 50.0 {
            SizeClass::Medium
        } else {
            SizeClass::Large
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupation {
    Leader,
    Operational,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttBySize {
    pub small: f64,
    pub medium: f64,
    pub large: f64,
}

impl Default for AttBySize {
    fn default() -> Self {
        Self::uniform(0.09)
    }
}

impl AttBySize {
    pub fn uniform(v: f64) -> Self {
        Self {
            small: v,
            medium: v,
            large: v,
        }
    }

    pub fn get(&self, c: SizeClass) -> f64 {
        match c {
            SizeClass::Small => self.small,
            SizeClass::Medium => self.medium,
            SizeClass::Large => self.large,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkerConfig {
    pub enabled: bool,
    /// Mean workers sampled per firm (Poisson).
    pub workers_per_firm: f64,
    /// Yearly probability of switching employer after the base period.
    pub move_rate: f64,
    pub leader_share: f64,
    pub base_log_earnings: f64,
    pub worker_fe_sd: f64,
    /// Loading of log earnings on the employer's wage effect.
    pub firm_wage_loading: f64,
    pub error_sd: f64,
    /// Net-earnings effect by years since the base employer's treatment,
    /// `k = 0, 1, ...`; the last entry applies to later years.
    pub att_net_earnings: Vec<f64>,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            workers_per_firm: 2.0,
            move_rate: 0.05,
            leader_share: 0.1,
            base_log_earnings: 7.0,
            worker_fe_sd: 0.4,
            firm_wage_loading: 0.5,
            error_sd: 0.1,
            att_net_earnings: vec![0.0, 0.0, 0.02, 0.04],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanelConfig {
    pub sectors: SectorConfig,
    pub n_firms: usize,
    pub first_year: i32,
    pub last_year: i32,
    /// Start year of product-criterion treatment in never-eligible sectors.
    pub ncm_start: i32,
    pub p_take: f64,
    pub p_ncm: f64,
    pub att_employment: AttBySize,
    pub att_log_wage: f64,
    /// Log-normal firm size: mean and sd of log employees.
    pub log_size_mean: f64,
    pub log_size_sd: f64,
    pub log_wage_mean: f64,
    pub wage_fe_sd: f64,
    pub year_sd: f64,
    pub sector_year_sd: f64,
    pub error_sd: f64,
    /// AR(1) coefficient of the firm-level error; 0 gives iid errors.
    pub serial_corr_rho: f64,
    pub baseline_tax_rate: f64,
    pub tax_cut: f64,
    pub hire_rate: f64,
    pub workers: WorkerConfig,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            sectors: SectorConfig::default(),
            n_firms: 5000,
            first_year: 2008,
            last_year: 2017,
            ncm_start: 2012,
            p_take: 0.7,
            p_ncm: 0.05,
            att_employment: AttBySize::default(),
            att_log_wage: 0.0,
            log_size_mean: 2.5,
            log_size_sd: 1.2,
            log_wage_mean: 7.0,
            wage_fe_sd: 0.3,
            year_sd: 0.05,
            sector_year_sd: 0.05,
            error_sd: 0.15,
            serial_corr_rho: 0.5,
            baseline_tax_rate: 0.31,
            tax_cut: 0.20,
            hire_rate: 0.25,
            workers: WorkerConfig::default(),
        }
    }
}

impl PanelConfig {
    pub fn validate(&self) -> Result<()> {
        self.sectors.validate()?;
        if self.n_firms == 0 {
            return Err(Error::config("n_firms", "must be at least 1"));
        }
        if self.last_year < self.first_year {
            return Err(Error::config("last_year", "must not precede first_year"));
        }
        for (key, sd) in [
            ("log_size_sd", self.log_size_sd),
            ("wage_fe_sd", self.wage_fe_sd),
            ("year_sd", self.year_sd),
            ("sector_year_sd", self.sector_year_sd),
            ("error_sd", self.error_sd),
            ("workers.worker_fe_sd", self.workers.worker_fe_sd),
            ("workers.error_sd", self.workers.error_sd),
        ] {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::config(
                    key,
                    format!("standard deviation must be finite and >= 0, got {sd}"),
                ));
            }
        }
        if !(self.serial_corr_rho > -1.0 && self.serial_corr_rho < 1.0) {
            return Err(Error::config("serial_corr_rho", "must lie in (-1, 1)"));
        }
        if !(self.baseline_tax_rate >= 0.0 && self.tax_cut >= 0.0 && self.tax_cut <= self.baseline_tax_rate) {
            return Err(Error::config("tax_cut", "need 0 <= tax_cut <= baseline_tax_rate"));
        }
        if !(self.hire_rate >= 0.0 && self.hire_rate.is_finite()) {
            return Err(Error::config("hire_rate", "must be >= 0"));
        }
        let w = &self.workers;
        if !(w.workers_per_firm >= 0.0 && w.workers_per_firm.is_finite()) {
            return Err(Error::config("workers.workers_per_firm", "must be >= 0"));
        }
        for (key, p) in [
            ("workers.move_rate", w.move_rate),
            ("workers.leader_share", w.leader_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(key, "must lie in [0, 1]"));
            }
        }
        if w.enabled && w.att_net_earnings.is_empty() {
            return Err(Error::config("workers.att_net_earnings", "need at least one horizon"));
        }
        let att = self.att_employment;
        if ![
            att.small,
            att.medium,
            att.large,
            self.att_log_wage,
            self.log_size_mean,
            self.log_wage_mean,
        ]
        .iter()
        .all(|v| v.is_finite())
        {
            return Err(Error::config("att_employment", "effects and means must be finite"));
        }
        Ok(())
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.first_year..=self.last_year
    }
}

/// Ground truth recorded with every generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpTruth {
    pub att_employment: AttBySize,
    pub att_log_wage: f64,
    pub att_net_earnings: Vec<f64>,
    pub take_up_prob: f64,
    pub ncm_prob: f64,
    /// Population first stage `p_take - p_ncm`.
    pub first_stage_pi: f64,
    /// `log(1 + baseline - cut) - log(1 + baseline)` for a treated firm.
    pub first_stage_dlog_cost: f64,
    pub serial_corr_rho: f64,
    pub pretrend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmYearRow {
    pub firm_id: u32,
    pub year: i32,
    pub sector_1d: u32,
    pub sector_5d: u32,
    pub sector_7d: u32,
    pub state: u32,
    pub cohort: Option<i32>,
    pub eligible_now: u8,
    pub treated_now: u8,
    pub log_employment: f64,
    pub log_avg_wage: f64,
    pub hires: u32,
    pub size_class: SizeClass,
    pub firm_fe: f64,
    pub payroll_tax_rate: f64,
    pub log_labor_cost_wedge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerYearRow {
    pub worker_id: u32,
    pub year: i32,
    pub firm_id: u32,
    pub firm_id_base: u32,
    pub sector_1d_base: u32,
    pub sector_5d_base: u32,
    pub state_base: u32,
    pub cohort_base: Option<i32>,
    pub eligible_base_now: u8,
    pub treated_base_now: u8,
    pub net_earnings: f64,
    pub gross_earnings: f64,
    pub log_net_earnings: f64,
    pub tenure_pre: u32,
    pub worker_fe: f64,
    pub occupation_class: Occupation,
}

pub const FIRM_COLUMNS: [&str; 16] = [
    "firm_id",
    "year",
    "sector_1d",
    "sector_5d",
    "sector_7d",
    "state",
    "cohort",
    "eligible_now",
    "treated_now",
    "log_employment",
    "log_avg_wage",
    "hires",
    "size_class",
    "firm_fe",
    "payroll_tax_rate",
    "log_labor_cost_wedge",
];

pub const WORKER_COLUMNS: [&str; 16] = [
    "worker_id",
    "year",
    "firm_id",
    "firm_id_base",
    "sector_1d_base",
    "sector_5d_base",
    "state_base",
    "cohort_base",
    "eligible_base_now",
    "treated_base_now",
    "net_earnings",
    "gross_earnings",
    "log_net_earnings",
    "tenure_pre",
    "worker_fe",
    "occupation_class",
];

/// Firm-level attributes that stay fixed over the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Firm {
    pub firm_id: u32,
    pub sector: usize,
    pub state: u32,
    pub firm_fe: f64,
    pub wage_fe: f64,
    pub size_class: SizeClass,
    pub treat_start: Option<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub tree: SectorTree,
    pub firms: Vec<Firm>,
    pub firm_rows: Vec<FirmYearRow>,
    pub worker_rows: Vec<WorkerYearRow>,
    pub truth: DgpTruth,
    /// Sampled workers dropped by the tenure rule.
    pub workers_excluded: usize,
}

impl PanelDataset {
    pub fn write_firm_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.firm_rows)
    }

    pub fn write_worker_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.worker_rows)
    }
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Years of pre-reform tenure needed for a worker to enter the sample.
pub const MIN_TENURE: u32 = 3;

/// Years employed at the base employer within the base window
/// `[window_start, window_end]` for a spell starting in `spell_start`.
pub fn tenure_pre(spell_start: i32, window_start: i32, window_end: i32) -> u32 {
    let from = spell_start.max(window_start);
    if from > window_end {
        0
    } else {
        (window_end - from + 1) as u32
    }
}

fn ar1_path<R: Rng>(rng: &mut R, n: usize, sd: f64, rho: f64) -> Vec<f64> {
    let innov = normal(sd * (1.0 - rho * rho).sqrt());
    let mut e = normal(sd).sample(rng);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        if t > 0 {
            e = rho * e + innov.sample(rng);
        }
        out.push(e);
    }
    out
}

fn truth_of(cfg: &PanelConfig) -> DgpTruth {
    DgpTruth {
        att_employment: cfg.att_employment,
        att_log_wage: cfg.att_log_wage,
        att_net_earnings: if cfg.workers.enabled {
            cfg.workers.att_net_earnings.clone()
        } else {
            Vec::new()
        },
        take_up_prob: cfg.p_take,
        ncm_prob: cfg.p_ncm,
        first_stage_pi: cfg.p_take - cfg.p_ncm,
        first_stage_dlog_cost: (1.0 + cfg.baseline_tax_rate - cfg.tax_cut).ln() - (1.0 + cfg.baseline_tax_rate).ln(),
        serial_corr_rho: cfg.serial_corr_rho,
        pretrend: cfg.sectors.pretrend,
    }
}

/// Firm table: `log_employment = firm_fe + year_fe + sector1 x year_fe +
/// trend + ATT(size) * D + AR(1) error`.
pub fn generate_firm_panel(tree: &SectorTree, cfg: &PanelConfig, seed: u64) -> Result<(Vec<Firm>, Vec<FirmYearRow>)> {
    cfg.validate()?;
    let mut rng = rng_for(seed, STREAM_FIRMS);
    let years: Vec<i32> = cfg.years().collect();
    let n_years = years.len();
    let n1 = tree.sectors.iter().map(|s| s.code1).max().unwrap_or(0) as usize;

    let year_fe: Vec<f64> = (0..n_years).map(|_| normal(cfg.year_sd).sample(&mut rng)).collect();
    let wage_year_fe: Vec<f64> = (0..n_years).map(|_| normal(cfg.year_sd).sample(&mut rng)).collect();
    let sector_year: Vec<Vec<f64>> = (0..=n1)
        .map(|_| {
            (0..n_years)
                .map(|_| normal(cfg.sector_year_sd).sample(&mut rng))
                .collect()
        })
        .collect();

    let size =
        Normal::new(cfg.log_size_mean, cfg.log_size_sd).map_err(|e| Error::config("log_size_sd", e.to_string()))?;
    let sectors: Vec<usize> = (0..cfg.n_firms)
        .map(|_| rng.random_range(0..tree.sectors.len()))
        .collect();
    let states: Vec<u32> = (0..cfg.n_firms)
        .map(|_| *tree.states.choose(&mut rng).expect("non-empty states"))
        .collect();
    let starts = assign_compliance(tree, &sectors, cfg.p_take, cfg.p_ncm, cfg.ncm_start, seed)?;

    let mut firms = Vec::with_capacity(cfg.n_firms);
    let mut rows = Vec::with_capacity(cfg.n_firms * n_years);
    for j in 0..cfg.n_firms {
        let firm_fe = size.sample(&mut rng);
        let wage_fe = normal(cfg.wage_fe_sd).sample(&mut rng);
        let size_class = SizeClass::from_employment(firm_fe.exp());
        let emp_err = ar1_path(&mut rng, n_years, cfg.error_sd, cfg.serial_corr_rho);
        let wage_err = ar1_path(&mut rng, n_years, cfg.error_sd, cfg.serial_corr_rho);
        let sector = &tree.sectors[sectors[j]];
        let firm = Firm {
            firm_id: j as u32 + 1,
            sector: sectors[j],
            state: states[j],
            firm_fe,
            wage_fe,
            size_class,
            treat_start: starts[j],
        };
        for (t, &year) in years.iter().enumerate() {
            let eligible = sector.cohort.is_some_and(|c| year >= c);
            let treated = firm.treat_start.is_some_and(|s| year >= s);
            let d = if treated { 1.0 } else { 0.0 };
            let trend = sector.trend * (year - cfg.first_year) as f64;
            let log_employment = firm_fe
                + year_fe[t]
                + sector_year[sector.code1 as usize][t]
                + trend
                + cfg.att_employment.get(size_class) * d
                + emp_err[t];
            let log_avg_wage =
                cfg.log_wage_mean + wage_fe + wage_year_fe[t] + 0.5 * trend + cfg.att_log_wage * d + wage_err[t];
            let lambda = cfg.hire_rate * log_employment.exp();
            let hires = if lambda > 0.0 {
                Poisson::new(lambda).map(|p| p.sample(&mut rng) as u32).unwrap_or(0)
            } else {
                0
            };
            let rate = cfg.baseline_tax_rate - cfg.tax_cut * d;
            rows.push(FirmYearRow {
                firm_id: firm.firm_id,
                year,
                sector_1d: sector.code1,
                sector_5d: sector.code5,
                sector_7d: sector.code7,
                state: firm.state,
                cohort: sector.cohort,
                eligible_now: eligible as u8,
                treated_now: treated as u8,
                log_employment,
                log_avg_wage,
                hires,
                size_class,
                firm_fe,
                payroll_tax_rate: rate,
                log_labor_cost_wedge: (1.0 + rate).ln(),
            });
        }
        firms.push(firm);
    }
    Ok((firms, rows))
}

/// Worker table. Workers start a spell at a sampled firm between
/// `first_year` and `ncm_start - 2`; only those with at least
/// [`MIN_TENURE`] years before `ncm_start` are kept. After the base period
/// they move at `move_rate` per year but keep their base employer's
/// eligibility and treatment assignment.
pub fn generate_worker_panel(
    tree: &SectorTree,
    firms: &[Firm],
    cfg: &PanelConfig,
    seed: u64,
) -> Result<(Vec<WorkerYearRow>, usize)> {
    cfg.validate()?;
    let w = &cfg.workers;
    let mut rng = rng_for(seed, STREAM_WORKERS);
    let years: Vec<i32> = cfg.years().collect();
    let base_end = cfg.ncm_start - 1;
    let latest_start = (base_end - 2).max(cfg.first_year);
    let year_fe: Vec<f64> = years.iter().map(|_| normal(0.03).sample(&mut rng)).collect();
    let per_firm = Poisson::new(w.workers_per_firm.max(1e-12))
        .map_err(|e| Error::config("workers.workers_per_firm", e.to_string()))?;

    let mut rows = Vec::new();
    let mut excluded = 0usize;
    let mut next_id = 1u32;
    for base in firms {
        let count = if w.workers_per_firm > 0.0 {
            per_firm.sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..count {
            let spell_start = rng.random_range(cfg.first_year..=latest_start);
            let worker_fe = normal(w.worker_fe_sd).sample(&mut rng);
            let occupation = if rng.random::<f64>() < w.leader_share {
                Occupation::Leader
            } else {
                Occupation::Operational
            };
            let err = ar1_path(&mut rng, years.len(), w.error_sd, cfg.serial_corr_rho);
            let tenure = tenure_pre(spell_start, cfg.first_year, base_end);
            let mut moves: Vec<Option<usize>> = Vec::with_capacity(years.len());
            let mut current: Option<usize> = None;
            for &year in &years {
                if year > base_end && rng.random::<f64>() < w.move_rate && firms.len() > 1 {
                    let mut k = rng.random_range(0..firms.len() - 1);
                    let base_idx = (base.firm_id - 1) as usize;
                    let cur = current.unwrap_or(base_idx);
                    if k >= cur {
                        k += 1;
                    }
                    current = Some(k);
                }
                moves.push(current);
            }
            if tenure < MIN_TENURE {
                excluded += 1;
                continue;
            }
            let worker_id = next_id;
            next_id += 1;
            let base_sector = &tree.sectors[base.sector];
            for (t, &year) in years.iter().enumerate() {
                if year < spell_start {
                    continue;
                }
                let employer = moves[t].map(|i| &firms[i]).unwrap_or(base);
                let base_treated = base.treat_start.is_some_and(|s| year >= s);
                let effect = match base.treat_start {
                    Some(s) if year >= s => {
                        let k = ((year - s) as usize).min(w.att_net_earnings.len() - 1);
                        w.att_net_earnings[k]
                    }
                    _ => 0.0,
                };
                let log_net = w.base_log_earnings
                    + worker_fe
                    + w.firm_wage_loading * employer.wage_fe
                    + year_fe[t]
                    + base_sector.trend * (year - cfg.first_year) as f64
                    + effect
                    + err[t];
                let net = log_net.exp();
                let employer_treated = employer.treat_start.is_some_and(|s| year >= s);
                let rate = cfg.baseline_tax_rate - if employer_treated { cfg.tax_cut } else { 0.0 };
                rows.push(WorkerYearRow {
                    worker_id,
                    year,
                    firm_id: employer.firm_id,
                    firm_id_base: base.firm_id,
                    sector_1d_base: base_sector.code1,
                    sector_5d_base: base_sector.code5,
                    state_base: base.state,
                    cohort_base: base_sector.cohort,
                    eligible_base_now: base_sector.cohort.is_some_and(|c| year >= c) as u8,
                    treated_base_now: base_treated as u8,
                    net_earnings: net,
                    gross_earnings: net * (1.0 + rate),
                    log_net_earnings: log_net,
                    tenure_pre: tenure,
                    worker_fe,
                    occupation_class: occupation,
                });
            }
        }
    }
    Ok((rows, excluded))
}

/// Sector tree, firm table, worker table and truth from one seed.
pub fn generate_panel(cfg: &PanelConfig, seed: u64) -> Result<PanelDataset> {
    cfg.validate()?;
    let tree = generate_sector_tree(&cfg.sectors, seed)?;
    let (firms, firm_rows) = generate_firm_panel(&tree, cfg, seed)?;
    let (worker_rows, workers_excluded) = if cfg.workers.enabled {
        generate_worker_panel(&tree, &firms, cfg, seed)?
    } else {
        (Vec::new(), 0)
    };
    Ok(PanelDataset {
        truth: truth_of(cfg),
        tree,
        firms,
        firm_rows,
        worker_rows,
        workers_excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_tree_config() -> SectorConfig {
        SectorConfig {
            n_sector1: 3,
            n_sector5: 6,
            n_sector7: 30,
            n_states: 2,
            ..Default::default()
        }
    }

    #[test]
    fn tree_is_deterministic_and_hierarchical() {
        let a = generate_sector_tree(&small_tree_config(), 7).unwrap();
        let b = generate_sector_tree(&small_tree_config(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sectors.len(), 30);
        assert_eq!(a.states, vec![1, 2]);
        for s in &a.sectors {
            assert_eq!(s.code7 / 100, s.code5);
            assert_eq!(s.code5 / 1000, s.code1);
            assert!((1..=3).contains(&s.code1));
        }
        let mut codes: Vec<u32> = a.sectors.iter().map(|s| s.code7).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), 30);
    }

    #[test]
    fn eligible_count_is_binomial() {
        let cfg = SectorConfig {
            eligible_share: 0.3,
            ..small_tree_config()
        };
        // 30 sectors at 0.3: mean 9, sd ~2.5
        for seed in 0..20 {
            let n = generate_sector_tree(&cfg, seed).unwrap().eligible_count();
            assert!((2..=16).contains(&n), "seed {seed}: {n}");
        }
    }

    #[test]
    fn zero_counts_are_config_errors() {
        let cfg = SectorConfig {
            n_sector7: 0,
            ..small_tree_config()
        };
        assert!(generate_sector_tree(&cfg, 1).unwrap_err().is_config());
    }

    #[test]
    fn confounding_switch_sets_trends_on_eligible_sectors_only() {
        let cfg = SectorConfig {
            pretrend: 0.02,
            ..small_tree_config()
        };
        let tree = generate_sector_tree(&cfg, 3).unwrap();
        for s in &tree.sectors {
            assert_eq!(s.trend, if s.cohort.is_some() { 0.02 } else { 0.0 });
        }
    }

    #[test]
    fn perfect_and_null_compliance() {
        let tree = generate_sector_tree(&small_tree_config(), 5).unwrap();
        let sectors: Vec<usize> = (0..300).map(|i| i % 30).collect();
        let full = assign_compliance(&tree, &sectors, 1.0, 0.0, 2012, 1).unwrap();
        for (s, start) in sectors.iter().zip(&full) {
            assert_eq!(*start, tree.sectors[*s].cohort);
        }
        let none = assign_compliance(&tree, &sectors, 0.0, 0.0, 2012, 1).unwrap();
        assert!(none.iter().all(|s| s.is_none()));
        assert!(assign_compliance(&tree, &sectors, 1.5, 0.0, 2012, 1)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn tenure_threshold() {
        assert_eq!(tenure_pre(2009, 2008, 2011), 3);
        assert_eq!(tenure_pre(2010, 2008, 2011), 2);
        assert!(tenure_pre(2009, 2008, 2011) >= MIN_TENURE);
        assert!(tenure_pre(2010, 2008, 2011) < MIN_TENURE);
        assert_eq!(tenure_pre(2005, 2008, 2011), 4);
    }

    #[test]
    fn size_class_cutoffs() {
        assert_eq!(SizeClass::from_employment(9.5), SizeClass::Small);
        assert_eq!(SizeClass::from_employment(10.0), SizeClass::Medium);
        assert_eq!(SizeClass::from_employment(49.9), SizeClass::Medium);
        assert_eq!(SizeClass::from_employment(50.0), SizeClass::Large);
    }

    #[test]
    fn replication_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|r| replication_seed(42, r)).collect();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 100);
        assert_eq!(replication_seed(42, 3), s[3]);
    }
}
