//! Command implementations. Each returns the resolved config (echoed into
//! the manifest) together with the rendered artifacts.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use incidence_core::cmd::{
    cmd_estimate, sigma_sensitivity_sweep, CmdOptions, MomentVector, ParamBox, SweepConfig, SweepTable,
};
use incidence_core::econometrics::{
    balance_check, event_chart, event_study, matching_did, pooled_did, read_event_csv, BalanceConfig, DesignSpec,
    Frame, MatchConfig,
};
use incidence_core::economy::{markdown, profit_maximize, EconomyParams, FirmEquilibrium};
use incidence_core::elasticity::{
    competitive_limit_elasticities, elasticity_report, numeric_responses, FdOptions, Method, Shock,
};
use incidence_core::panel::{generate_panel, DgpTruth, PanelConfig};
use incidence_core::plot::{line_chart, Series};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::output::Artifacts;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or input data: exit 1.
    Config(String),
    /// Solver or estimation failure: exit 2.
    Run(String),
}

impl From<incidence_core::Error> for Failure {
    fn from(e: incidence_core::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Run(e.to_string())
        }
    }
}

pub type Outcome = Result<(Value, Artifacts), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn parse<T: DeserializeOwned>(text: &str, prefix: &str) -> Result<T, Failure> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = match (prefix.is_empty(), path.as_str()) {
            (true, p) => p.to_string(),
            (false, ".") => prefix.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        Failure::Config(format!("config key `{key}`: {}", e.inner()))
    })
}

/// Config from `path`, or all defaults when no file is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    match path {
        None => Ok(T::default()),
        Some(p) => parse(&read_text(p)?, ""),
    }
}

fn echo<T: Serialize>(config: &T) -> Result<Value, Failure> {
    serde_json::to_value(config).map_err(|e| Failure::Run(format!("serializing config: {e}")))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> incidence_core::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub params: EconomyParams,
}

#[derive(Serialize)]
struct SolveOutput {
    equilibrium: FirmEquilibrium,
    markdown: f64,
}

pub fn economy_solve(config: Option<&Path>) -> Outcome {
    let cfg: SolveConfig = load(config)?;
    cfg.params.validate()?;
    let equilibrium = profit_maximize(&cfg.params)?;
    let mut out = Artifacts::default();
    out.add_json(
        "equilibrium.json",
        &SolveOutput {
            equilibrium,
            markdown: markdown(cfg.params.eps)?,
        },
    )?;
    Ok((echo(&cfg)?, out))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElasticitiesConfig {
    pub params: EconomyParams,
    pub method: Method,
    /// Log step of the centered differences.
    pub fd_step: f64,
    pub richardson: bool,
}

impl Default for ElasticitiesConfig {
    fn default() -> Self {
        Self {
            params: EconomyParams::default(),
            method: Method::Numeric,
            fd_step: FdOptions::default().step,
            richardson: false,
        }
    }
}

fn fd_options(step: f64, richardson: bool) -> Result<FdOptions, Failure> {
    if !(step > 0.0 && step < 0.1) {
        return Err(Failure::Config(format!(
            "config key `fd_step`: must lie in (0, 0.1), got {step}"
        )));
    }
    Ok(FdOptions { step, richardson })
}

pub fn economy_elasticities(config: Option<&Path>) -> Outcome {
    let cfg: ElasticitiesConfig = load(config)?;
    let report = elasticity_report(&cfg.params, cfg.method, &fd_options(cfg.fd_step, cfg.richardson)?)?;
    let mut out = Artifacts::default();
    out.add_json("elasticities.json", &report)?;
    Ok((echo(&cfg)?, out))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsConfig {
    pub params: EconomyParams,
    pub eps_grid: Vec<f64>,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self {
            params: EconomyParams::default(),
            eps_grid: vec![1.0, 2.78, 10.0, 100.0, 1e3, 1e4, 1e5],
        }
    }
}

pub fn economy_limits(config: Option<&Path>) -> Outcome {
    let cfg: LimitsConfig = load(config)?;
    if cfg.eps_grid.is_empty() {
        return Err(Failure::Config(
            "config key `eps_grid`: needs at least one value".into(),
        ));
    }
    let opts = FdOptions::default();
    let mut rows = Vec::new();
    for &eps in &cfg.eps_grid {
        let p = EconomyParams {
            eps,
            ..cfg.params.clone()
        };
        p.validate()?;
        let eq = profit_maximize(&p)?;
        let share = eq.labor_cost_share;
        let (limit_l, limit_k) = competitive_limit_elasticities(share, 1.0 - share, p.rho, p.eta)?;
        let r = numeric_responses(Shock::Theta, &p, &opts)?;
        rows.push([eps, r.l, r.k, limit_l, limit_k, share]);
    }
    let csv = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "eps",
            "eps_L_theta",
            "eps_K_theta",
            "limit_L",
            "limit_K",
            "labor_cost_share",
        ])?;
        for row in &rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    })?;
    let series = vec![
        Series {
            label: "labor, numeric".into(),
            points: rows.iter().map(|r| (r[0].log10(), Some(r[1]))).collect(),
        },
        Series {
            label: "labor, competitive limit".into(),
            points: rows.iter().map(|r| (r[0].log10(), Some(r[3]))).collect(),
        },
        Series {
            label: "capital, numeric".into(),
            points: rows.iter().map(|r| (r[0].log10(), Some(r[2]))).collect(),
        },
        Series {
            label: "capital, competitive limit".into(),
            points: rows.iter().map(|r| (r[0].log10(), Some(r[4]))).collect(),
        },
    ];
    let mut out = Artifacts::default();
    out.add("limits.csv", csv);
    out.add(
        "limits.svg",
        line_chart(
            "Payroll-tax elasticities approaching the competitive limit",
            "log10 eps",
            "elasticity",
            &series,
        )
        .into_bytes(),
    );
    Ok((echo(&cfg)?, out))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub moments: Option<MomentVector>,
    pub phi1: f64,
    pub phi2: f64,
    /// Primitives held fixed during the search (shares, taxes, treated share).
    pub base: EconomyParams,
    pub bounds: ParamBox,
    pub options: CmdOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            moments: None,
            phi1: -0.133,
            phi2: 1.015f64.ln(),
            base: EconomyParams::default(),
            bounds: ParamBox::default(),
            options: CmdOptions::default(),
        }
    }
}

pub fn cmd_fit(config: Option<&Path>, seed: u64) -> Outcome {
    let mut cfg: FitConfig = load(config)?;
    cfg.options.seed = seed;
    let moments = cfg
        .moments
        .as_ref()
        .ok_or_else(|| Failure::Config("config key `moments`: required (beta_L, beta_K, beta_R, vcov)".into()))?;
    let result = cmd_estimate(moments, cfg.phi1, cfg.phi2, &cfg.base, &cfg.bounds, &cfg.options)?;
    let mut out = Artifacts::default();
    out.add_json("cmd_fit.json", &result)?;
    Ok((echo(&cfg)?, out))
}

pub fn cmd_sweep(config: Option<&Path>) -> Outcome {
    let cfg: SweepConfig = load(config)?;
    let table = sigma_sensitivity_sweep(&cfg)?;
    let mut out = Artifacts::default();
    out.add("sweep.csv", csv_bytes(|b| table.write_csv(b))?);
    out.add("sweep.svg", table.svg().into_bytes());
    Ok((echo(&cfg)?, out))
}

#[derive(Serialize)]
struct PanelSummary<'a> {
    truth: &'a DgpTruth,
    firms: usize,
    firm_rows: usize,
    worker_rows: usize,
    workers_excluded: usize,
    eligible_sectors: usize,
}

pub fn panel_generate(config: Option<&Path>, seed: u64) -> Outcome {
    let cfg: PanelConfig = load(config)?;
    let data = generate_panel(&cfg, seed)?;
    let mut out = Artifacts::default();
    out.add("firm_panel.csv", csv_bytes(|b| data.write_firm_csv(b))?);
    if cfg.workers.enabled {
        out.add("worker_panel.csv", csv_bytes(|b| data.write_worker_csv(b))?);
    }
    out.add_json(
        "truth.json",
        &PanelSummary {
            truth: &data.truth,
            firms: data.firms.len(),
            firm_rows: data.firm_rows.len(),
            worker_rows: data.worker_rows.len(),
            workers_excluded: data.workers_excluded,
            eligible_sectors: data.tree.eligible_count(),
        },
    )?;
    Ok((echo(&cfg)?, out))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    #[default]
    Firm,
    Worker,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DesignRunRaw {
    data: Option<PathBuf>,
    level: Level,
    /// Overrides on top of the level's preset.
    design: Map<String, Value>,
}

#[derive(Debug, Serialize)]
pub struct DesignRun {
    pub data: Option<PathBuf>,
    pub level: Level,
    pub design: DesignSpec,
}

fn load_design(config: Option<&Path>) -> Result<DesignRun, Failure> {
    let raw: DesignRunRaw = load(config)?;
    let preset = match raw.level {
        Level::Firm => DesignSpec::firm("log_employment"),
        Level::Worker => DesignSpec::worker("log_net_earnings"),
    };
    let Value::Object(mut merged) = echo(&preset)? else {
        unreachable!("design spec serializes to an object")
    };
    merged.extend(raw.design);
    let design = parse(&Value::Object(merged).to_string(), "design")?;
    Ok(DesignRun {
        data: raw.data,
        level: raw.level,
        design,
    })
}

fn load_frame(config_data: &Option<PathBuf>, flag: Option<&Path>) -> Result<(PathBuf, Frame), Failure> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| config_data.clone())
        .ok_or_else(|| Failure::Config("config key `data`: no panel CSV given (set it or pass --data)".into()))?;
    let file = File::open(&path).map_err(|e| Failure::Config(format!("cannot open {}: {e}", path.display())))?;
    let frame = Frame::from_csv(file).map_err(|e| Failure::Config(format!("reading {}: {e}", path.display())))?;
    Ok((path, frame))
}

pub fn estimate_did(config: Option<&Path>, data: Option<&Path>) -> Outcome {
    let mut run = load_design(config)?;
    let (path, frame) = load_frame(&run.data, data)?;
    run.data = Some(path);
    let report = pooled_did(&frame, &run.design)?;
    let mut out = Artifacts::default();
    out.add_json("did.json", &report)?;
    Ok((echo(&run)?, out))
}

pub fn estimate_event_study(config: Option<&Path>, data: Option<&Path>) -> Outcome {
    let mut run = load_design(config)?;
    let (path, frame) = load_frame(&run.data, data)?;
    run.data = Some(path);
    let report = event_study(&frame, &run.design)?;
    let mut out = Artifacts::default();
    out.add_json("event_study.json", &report)?;
    out.add("event_study.csv", csv_bytes(|b| report.write_csv(b))?);
    out.add("event_study.svg", report.svg().into_bytes());
    Ok((echo(&run)?, out))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchRun {
    pub data: Option<PathBuf>,
    pub matching: MatchConfig,
}

pub fn estimate_match_did(config: Option<&Path>, data: Option<&Path>, seed: u64) -> Outcome {
    let mut run: MatchRun = load(config)?;
    let (path, frame) = load_frame(&run.data, data)?;
    run.data = Some(path);
    if let Some(p) = run.matching.placebo.as_mut() {
        p.seed = seed;
    }
    let report = matching_did(&frame, &run.matching)?;
    let mut out = Artifacts::default();
    out.add_json("match_did.json", &report)?;
    Ok((echo(&run)?, out))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceRun {
    pub data: Option<PathBuf>,
    pub balance: BalanceConfig,
}

pub fn estimate_balance(config: Option<&Path>, data: Option<&Path>) -> Outcome {
    let mut run: BalanceRun = load(config)?;
    let (path, frame) = load_frame(&run.data, data)?;
    run.data = Some(path);
    let report = balance_check(&frame, &run.balance)?;
    let mut out = Artifacts::default();
    out.add_json("balance.json", &report)?;
    Ok((echo(&run)?, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Sweep,
    EventStudy,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotConfig {
    pub input: Option<PathBuf>,
    /// Detected from the CSV header when absent.
    pub kind: Option<PlotKind>,
    pub title: Option<String>,
}

pub fn report_plot(config: Option<&Path>, input: Option<&Path>) -> Outcome {
    let mut cfg: PlotConfig = load(config)?;
    if let Some(i) = input {
        cfg.input = Some(i.to_path_buf());
    }
    let path = cfg
        .input
        .clone()
        .ok_or_else(|| Failure::Config("config key `input`: no CSV given (set it or pass --input)".into()))?;
    let text = read_text(&path)?;
    let header = text.lines().next().unwrap_or("");
    let kind = match cfg.kind {
        Some(k) => k,
        None if header.starts_with("k,beta,se") => PlotKind::EventStudy,
        None if header.split(',').any(|h| h == "sigma_hat") => PlotKind::Sweep,
        None => {
            return Err(Failure::Config(format!(
                "config key `kind`: cannot tell the plot type from the header of {}",
                path.display()
            )))
        }
    };
    cfg.kind = Some(kind);
    let bad = |e: incidence_core::Error| Failure::Config(format!("reading {}: {e}", path.display()));
    let svg = match kind {
        PlotKind::Sweep => SweepTable::read_csv(text.as_bytes()).map_err(bad)?.svg(),
        PlotKind::EventStudy => {
            let rows = read_event_csv(text.as_bytes()).map_err(bad)?;
            event_chart(cfg.title.as_deref().unwrap_or("Event study"), &rows)
        }
    };
    let mut out = Artifacts::default();
    out.add("plot.svg", svg.into_bytes());
    Ok((echo(&cfg)?, out))
}
