//! Classical minimum distance estimation of `(eps, eta, rho)` and the
//! sensitivity sweep of the implied capital-labor substitution elasticity.

use std::io::{Read, Write};

use log::{debug, warn};
use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economy::{profit_maximize, EconomyParams, MarketMode};
use crate::elasticity::{numeric_responses, reform_effect, FdOptions, Shock};
use crate::error::{Error, Result};
use crate::optim::{latin_hypercube, nelder_mead, Minimum, NelderMeadOptions};
use crate::plot::{line_chart, Series};
use crate::roots::{solve_on_interval, RootOptions};

/// Objective value assigned when the model cannot be solved at a candidate.
pub const PENALTY: f64 = 1e12;

const RIDGE: f64 = 1e-10;

/// Reduced-form reform effects and their sampling covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentVector {
    #[serde(rename = "beta_L")]
    pub beta_l: f64,
    #[serde(rename = "beta_K")]
    pub beta_k: f64,
    #[serde(rename = "beta_R")]
    pub beta_r: f64,
    pub vcov: [[f64; 3]; 3],
}

impl MomentVector {
    pub fn validate(&self) -> Result<()> {
        let b = [self.beta_l, self.beta_k, self.beta_r];
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("moments", "moments must be finite"));
        }
        for i in 0..3 {
            if !(self.vcov[i][i] >= 0.0) {
                return Err(Error::config("vcov", format!("diagonal entry {i} must be >= 0")));
            }
            for j in 0..3 {
                let (a, c) = (self.vcov[i][j], self.vcov[j][i]);
                if !a.is_finite() || (a - c).abs() > 1e-12 * (1.0 + a.abs().max(c.abs())) {
                    return Err(Error::config("vcov", "covariance must be finite and symmetric"));
                }
            }
        }
        Ok(())
    }

    pub fn values(&self) -> Vector3<f64> {
        Vector3::new(self.beta_l, self.beta_k, self.beta_r)
    }

    /// Inverse covariance; a ridge-regularized pseudo-inverse when singular.
    pub fn weight_matrix(&self) -> Matrix3<f64> {
        let v = Matrix3::from_fn(|i, j| self.vcov[i][j]);
        if let Some(ch) = v.cholesky() {
            return ch.inverse();
        }
        warn!("moment covariance is singular; using a ridge pseudo-inverse");
        (v + Matrix3::identity() * RIDGE)
            .pseudo_inverse(RIDGE * 1e-6)
            .unwrap_or_else(|_| Matrix3::identity())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    InverseCovariance,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    /// The model failed to solve and `value` is the penalty.
    pub penalized: bool,
}

fn quadratic_form(w: &Matrix3<f64>, d: &Vector3<f64>) -> f64 {
    (d.transpose() * w * d)[(0, 0)].max(0.0)
}

fn objective_with(
    w: &Matrix3<f64>,
    target: &Vector3<f64>,
    params: &EconomyParams,
    phi1: f64,
    phi2: f64,
) -> ObjectiveValue {
    match reform_effect(params, phi1, phi2, &FdOptions::default()) {
        Ok(m) => {
            let d = target - Vector3::new(m.beta_l, m.beta_k, m.beta_r);
            ObjectiveValue {
                value: quadratic_form(w, &d),
                penalized: false,
            }
        }
        Err(e) => {
            debug!(
                "model failed at eps={} eta={} rho={}: {e}",
                params.eps, params.eta, params.rho
            );
            ObjectiveValue {
                value: PENALTY,
                penalized: true,
            }
        }
    }
}

/// `(beta_hat - m)' W (beta_hat - m)` with `W` the inverse moment covariance.
pub fn cmd_objective(moments: &MomentVector, params: &EconomyParams, phi1: f64, phi2: f64) -> Result<ObjectiveValue> {
    moments.validate()?;
    Ok(objective_with(
        &moments.weight_matrix(),
        &moments.values(),
        params,
        phi1,
        phi2,
    ))
}

/// Closed bounds on the estimated parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamBox {
    pub eps: [f64; 2],
    pub eta: [f64; 2],
    pub rho: [f64; 2],
}

impl Default for ParamBox {
    fn default() -> Self {
        Self {
            eps: [0.1, 100.0],
            eta: [1.01, 10.0],
            rho: [-5.0, 0.99],
        }
    }
}

impl ParamBox {
    pub fn point(eps: f64, eta: f64, rho: f64) -> Self {
        Self {
            eps: [eps, eps],
            eta: [eta, eta],
            rho: [rho, rho],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("eps", self.eps, 0.1, 100.0),
            ("eta", self.eta, 1.01, 10.0),
            ("rho", self.rho, -5.0, 0.99),
        ];
        for (key, [lo, hi], min, max) in checks {
            if !(lo <= hi && lo >= min && hi <= max) {
                return Err(Error::config(
                    key,
                    format!("bounds [{lo}, {hi}] must be ordered and inside [{min}, {max}]"),
                ));
            }
        }
        Ok(())
    }
}

/// Unit-cube coordinates for the free (non-degenerate) box dimensions.
/// `eps` is searched on a log scale.
struct Coordinates {
    bounds: ParamBox,
    free: Vec<usize>,
}

impl Coordinates {
    fn new(bounds: &ParamBox) -> Self {
        let all = [bounds.eps, bounds.eta, bounds.rho];
        let free = (0..3).filter(|&i| all[i][1] > all[i][0]).collect();
        Self {
            bounds: bounds.clone(),
            free,
        }
    }

    fn decode(&self, x: &[f64]) -> [f64; 3] {
        let b = &self.bounds;
        let mut u = [0.0; 3];
        for (k, &i) in self.free.iter().enumerate() {
            u[i] = x[k].clamp(0.0, 1.0);
        }
        let (le0, le1) = (b.eps[0].ln(), b.eps[1].ln());
        [
            if b.eps[1] > b.eps[0] {
                (le0 + u[0] * (le1 - le0)).exp()
            } else {
                b.eps[0]
            },
            b.eta[0] + u[1] * (b.eta[1] - b.eta[0]),
            b.rho[0] + u[2] * (b.rho[1] - b.rho[0]),
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmdOptions {
    pub starts: usize,
    pub seed: u64,
    pub weighting: Weighting,
    pub f_target: f64,
    pub x_tol: f64,
    pub max_evals: usize,
    /// Extra simplex restarts from the incumbent.
    pub polish_rounds: usize,
}

impl Default for CmdOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            weighting: Weighting::default(),
            f_target: 1e-8,
            x_tol: 1e-7,
            max_evals: 3000,
            polish_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmdResult {
    pub eps_hat: f64,
    pub eta_hat: f64,
    pub rho_hat: f64,
    #[serde(rename = "sigma_KL_hat")]
    pub sigma_kl_hat: f64,
    pub objective_value: f64,
    pub converged: bool,
    pub starts_tried: usize,
    pub evaluations: usize,
    /// The reported point is a penalized (unsolvable) candidate.
    pub penalized: bool,
}

/// Multi-start bounded Nelder-Mead minimization of the CMD objective.
///
/// `base` supplies the calibrated primitives (shares, tax levels, treated
/// share); its `eps`, `eta`, `rho` are overwritten by the candidates.
pub fn cmd_estimate(
    moments: &MomentVector,
    phi1: f64,
    phi2: f64,
    base: &EconomyParams,
    bounds: &ParamBox,
    opts: &CmdOptions,
) -> Result<CmdResult> {
    moments.validate()?;
    bounds.validate()?;
    if opts.starts == 0 {
        return Err(Error::config("starts", "need at least one start"));
    }
    let mut base = base.clone();
    base.market_mode = MarketMode::Markup;
    base.eps = bounds.eps[0];
    base.eta = bounds.eta[1];
    base.rho = bounds.rho[0];
    base.validate()?;

    let w = match opts.weighting {
        Weighting::InverseCovariance => moments.weight_matrix(),
        Weighting::Identity => Matrix3::identity(),
    };
    let target = moments.values();
    let coords = Coordinates::new(bounds);
    let candidate = |x: &[f64]| {
        let [eps, eta, rho] = coords.decode(x);
        EconomyParams {
            eps,
            eta,
            rho,
            ..base.clone()
        }
    };
    let f = |x: &[f64]| objective_with(&w, &target, &candidate(x), phi1, phi2).value;
    let nm = NelderMeadOptions {
        f_target: opts.f_target,
        x_tol: opts.x_tol,
        max_evals: opts.max_evals,
        initial_step: 0.1,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts = latin_hypercube(opts.starts, coords.free.len(), &mut rng);
    let runs: Vec<Minimum> = starts.par_iter().map(|x0| nelder_mead(f, x0, &nm)).collect();
    let mut evaluations: usize = runs.iter().map(|r| r.evals).sum();
    let mut best = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.f.total_cmp(&b.f).then(i.cmp(j)))
        .map(|(_, r)| r)
        .expect("at least one start");

    for round in 0..opts.polish_rounds {
        if best.f < opts.f_target {
            break;
        }
        let step = 0.02 / (1 << round) as f64;
        let again = nelder_mead(
            f,
            &best.x,
            &NelderMeadOptions {
                initial_step: step,
                ..nm
            },
        );
        evaluations += again.evals;
        let improved = again.f < best.f;
        if improved {
            best = Minimum {
                converged: again.converged,
                ..again
            };
        } else {
            break;
        }
    }

    let [eps, eta, rho] = coords.decode(&best.x);
    if !best.converged {
        warn!("CMD did not converge; best objective {}", best.f);
    }
    Ok(CmdResult {
        eps_hat: eps,
        eta_hat: eta,
        rho_hat: rho,
        sigma_kl_hat: 1.0 / (1.0 - rho),
        objective_value: best.f,
        converged: best.converged && best.f < PENALTY,
        starts_tried: opts.starts,
        evaluations,
        penalized: best.f >= PENALTY,
    })
}

/// `sigma` solving the competitive Hicks-Marshall labor response
/// `beta_L / phi1 = -s_K sigma - s_L eta` at cost shares `(s_L, 1 - s_L)`.
pub fn competitive_inversion(beta_l: f64, phi1: f64, share_l: f64, eta: f64) -> f64 {
    (-beta_l / phi1 - share_l * eta) / (1.0 - share_l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    #[serde(rename = "beta_L")]
    pub beta_l: f64,
    pub phi1: f64,
    pub eps_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    /// Primitives held fixed across the grid (`eps`, `eta`, `rho` are swept).
    pub base: EconomyParams,
    pub rho_range: [f64; 2],
    /// Cells of the sign-change scan over `rho`.
    pub scan_cells: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let n = 24;
        Self {
            beta_l: 0.0944,
            phi1: -0.133,
            eps_grid: vec![1.0, 2.78, 5.0, 10.0, 25.0, 1e6],
            eta_grid: (0..n)
                .map(|i| 0.11 + (3.5 - 0.11) * i as f64 / (n - 1) as f64)
                .collect(),
            base: EconomyParams {
                s_l: 0.05,
                s_k: 0.95,
                ..Default::default()
            },
            rho_range: [-20.0, 0.99],
            scan_cells: 48,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::config("eps_grid", "needs positive entries"));
        }
        if self.eta_grid.is_empty() || self.eta_grid.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::config("eta_grid", "needs positive entries"));
        }
        if !(self.phi1 != 0.0 && self.phi1.is_finite() && self.beta_l.is_finite()) {
            return Err(Error::config("phi1", "beta_L and a nonzero phi1 are required"));
        }
        let [lo, hi] = self.rho_range;
        if !(lo < hi && hi < 1.0) {
            return Err(Error::config("rho_range", "need lo < hi < 1"));
        }
        if self.scan_cells == 0 {
            return Err(Error::config("scan_cells", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub eps: f64,
    pub eta: f64,
    pub market_mode: MarketMode,
    pub rho_hat: Option<f64>,
    pub sigma_hat: Option<f64>,
    /// Equilibrium labor cost share at the solution.
    pub labor_cost_share: Option<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    #[serde(rename = "beta_L")]
    pub beta_l: f64,
    pub phi1: f64,
    /// Row-major over `eps_grid` then `eta_grid`.
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn column(&self, eps: f64) -> Vec<&SweepCell> {
        self.cells.iter().filter(|c| c.eps == eps).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "eps",
            "eta",
            "sigma_hat",
            "feasible",
            "rho_hat",
            "labor_cost_share",
            "market_mode",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            w.write_record([
                c.eps.to_string(),
                c.eta.to_string(),
                opt(c.sigma_hat),
                c.feasible.to_string(),
                opt(c.rho_hat),
                opt(c.labor_cost_share),
                match c.market_mode {
                    MarketMode::Markup => "markup".into(),
                    MarketMode::PriceTaking => "price_taking".into(),
                },
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the cells back from [`SweepTable::write_csv`] output. The moment
    /// inputs are not stored in the CSV and come back as `NaN`.
    pub fn read_csv<R: Read>(input: R) -> Result<SweepTable> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("sweep CSV lacks column {name}")))
        };
        let idx = [
            col("eps")?,
            col("eta")?,
            col("sigma_hat")?,
            col("feasible")?,
            col("rho_hat")?,
            col("labor_cost_share")?,
            col("market_mode")?,
        ];
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Data(format!("bad number {s:?} in sweep CSV")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let mut cells = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let f = |i: usize| rec.get(idx[i]).unwrap_or("");
            cells.push(SweepCell {
                eps: num(f(0))?,
                eta: num(f(1))?,
                sigma_hat: opt(f(2))?,
                feasible: f(3) == "true",
                rho_hat: opt(f(4))?,
                labor_cost_share: opt(f(5))?,
                market_mode: match f(6) {
                    "price_taking" => MarketMode::PriceTaking,
                    _ => MarketMode::Markup,
                },
            });
        }
        Ok(SweepTable {
            beta_l: f64::NAN,
            phi1: f64::NAN,
            cells,
        })
    }

    /// One line per `eps` with `eta` on the x axis.
    pub fn svg(&self) -> String {
        let mut eps: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !eps.contains(&c.eps) {
                eps.push(c.eps);
            }
        }
        let series: Vec<Series> = eps
            .iter()
            .map(|&e| Series {
                label: if e >= 1e5 {
                    format!("eps = {e:e} (competitive)")
                } else {
                    format!("eps = {e}")
                },
                points: self.column(e).iter().map(|c| (c.eta, c.sigma_hat)).collect(),
            })
            .collect();
        line_chart(
            "Capital-labor substitution implied by the employment effect",
            "eta",
            "sigma_KL",
            &series,
        )
    }
}

fn sweep_cell(cfg: &SweepConfig, eps: f64, eta: f64) -> SweepCell {
    let mode = if eta <= 1.0 {
        MarketMode::PriceTaking
    } else {
        MarketMode::Markup
    };
    let params = EconomyParams {
        eps,
        eta,
        tau_rev: 0.0,
        market_mode: mode,
        ..cfg.base.clone()
    };
    let target = cfg.beta_l / cfg.phi1;
    let fd = FdOptions::default();
    let response = |rho: f64| -> Result<f64> {
        let p = EconomyParams { rho, ..params.clone() };
        Ok(numeric_responses(Shock::Theta, &p, &fd)?.l - target)
    };
    // scan downward from the top of the range so that, where the cost share
    // makes the response non-monotone, the largest-sigma root is reported
    let [lo, hi] = cfg.rho_range;
    let root = solve_on_interval(
        |t| response(hi - t),
        0.0,
        hi - lo,
        cfg.scan_cells,
        &RootOptions::default(),
    )
    .map(|r| r.map(|r| hi - r.x));
    let mut cell = SweepCell {
        eps,
        eta,
        market_mode: mode,
        rho_hat: None,
        sigma_hat: None,
        labor_cost_share: None,
        feasible: false,
    };
    match root {
        Ok(Some(rho)) => {
            let p = EconomyParams { rho, ..params };
            cell.rho_hat = Some(rho);
            cell.sigma_hat = Some(1.0 / (1.0 - rho));
            cell.labor_cost_share = profit_maximize(&p).ok().map(|e| e.labor_cost_share);
            cell.feasible = true;
        }
        Ok(None) => debug!("no root in rho range at eps={eps} eta={eta}"),
        Err(e) => debug!("root refinement failed at eps={eps} eta={eta}: {e}"),
    }
    cell
}

/// Solve the payroll-only employment equation for `rho` on every `(eps, eta)`
/// cell; cells without a root in `rho_range` are reported infeasible.
pub fn sigma_sensitivity_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let mut probe = cfg.base.clone();
    probe.eta = 2.0;
    probe.market_mode = MarketMode::Markup;
    probe.validate()?;
    let grid: Vec<(f64, f64)> = cfg
        .eps_grid
        .iter()
        .flat_map(|&e| cfg.eta_grid.iter().map(move |&h| (e, h)))
        .collect();
    let cells = grid.par_iter().map(|&(e, h)| sweep_cell(cfg, e, h)).collect();
    Ok(SweepTable {
        beta_l: cfg.beta_l,
        phi1: cfg.phi1,
        cells,
    })
}
