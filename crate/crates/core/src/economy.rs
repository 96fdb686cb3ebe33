//! Single-firm and industry equilibrium of the monopsony economy.
//!
//! Firms combine labor and capital through a constant-returns CES technology,
//! hire labor along an upward-sloping supply curve `w = w0 * L^(1/eps)`, rent
//! capital at `r`, and sell into a constant-elasticity demand curve
//! `p = A * Q^(-1/eta)`. Labor costs carry the payroll wedge `theta`; revenue
//! carries the revenue tax `tau_rev`.
//!
//! All solves run in log space. Cost minimization is a one-dimensional root
//! find over the log input ratio `u = ln(L/K)`; profit maximization is an outer
//! root find over `ln Q` that calls the cost minimizer for marginal cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{self, RootOptions};

/// Below this `|rho|` the technology is evaluated as Cobb-Douglas.
pub const COBB_DOUGLAS_RHO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketMode {
    /// Each firm perceives a residual-demand elasticity `eta` and marks up.
    #[default]
    Markup,
    /// Firms take the market-clearing price as given.
    PriceTaking,
}

fn one() -> f64 {
    1.0
}

/// Structural primitives of the economy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconomyParams {
    #[serde(rename = "s_L")]
    pub s_l: f64,
    #[serde(rename = "s_K")]
    pub s_k: f64,
    pub rho: f64,
    /// Firm-level labor-supply elasticity; `f64::INFINITY` is the competitive limit.
    pub eps: f64,
    pub eta: f64,
    #[serde(default)]
    pub tau_rev: f64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "one")]
    pub w0: f64,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(rename = "A", default = "one")]
    pub a: f64,
    #[serde(default)]
    pub market_mode: MarketMode,
}

impl Default for EconomyParams {
    fn default() -> Self {
        Self {
            s_l: 0.5,
            s_k: 0.5,
            rho: 0.3,
            eps: 2.78,
            eta: 2.0,
            tau_rev: 0.0,
            theta: 1.0,
            m: 1.0,
            w0: 1.0,
            r: 1.0,
            a: 1.0,
            market_mode: MarketMode::Markup,
        }
    }
}

/// Tax instruments faced by one block of firms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaxPolicy {
    pub theta: f64,
    pub tau_rev: f64,
}

impl EconomyParams {
    /// Check every invariant of the parameter set, naming the first offending key.
    pub fn validate(&self) -> Result<()> {
        let pos = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be finite and > 0, got {v}")))
            }
        };
        pos("s_L", self.s_l)?;
        pos("s_K", self.s_k)?;
        if (self.s_l + self.s_k - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "s_L",
                format!("s_L + s_K must equal 1, got {}", self.s_l + self.s_k),
            ));
        }
        if !(self.rho.is_finite() && self.rho < 1.0) {
            return Err(Error::config("rho", format!("must be < 1, got {}", self.rho)));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::config("eps", format!("must be > 0, got {}", self.eps)));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::config("eta", format!("must be >= 0, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.tau_rev) {
            return Err(Error::config(
                "tau_rev",
                format!("must lie in [0, 1), got {}", self.tau_rev),
            ));
        }
        if !(self.theta.is_finite() && self.theta >= 1.0) {
            return Err(Error::config("theta", format!("must be >= 1, got {}", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.m) {
            return Err(Error::config("m", format!("must lie in [0, 1], got {}", self.m)));
        }
        pos("w0", self.w0)?;
        pos("r", self.r)?;
        pos("A", self.a)?;
        if self.market_mode == MarketMode::Markup && self.eta <= 1.0 {
            return Err(Error::config(
                "eta",
                format!("markup mode needs eta > 1 for an interior optimum, got {}", self.eta),
            ));
        }
        Ok(())
    }

    pub fn policy(&self) -> TaxPolicy {
        TaxPolicy {
            theta: self.theta,
            tau_rev: self.tau_rev,
        }
    }

    pub fn with_policy(&self, policy: TaxPolicy) -> Self {
        Self {
            theta: policy.theta,
            tau_rev: policy.tau_rev,
            ..self.clone()
        }
    }

    /// Capital-labor elasticity of substitution `1 / (1 - rho)`.
    pub fn sigma_kl(&self) -> f64 {
        1.0 / (1.0 - self.rho)
    }

    /// Conditions the solvers need. Looser than [`validate`](Self::validate) so
    /// that finite-difference probes may step slightly outside the policy box.
    fn check_solvable(&self) -> Result<()> {
        let ok = self.s_l > 0.0
            && self.s_k > 0.0
            && self.rho < 1.0
            && self.eps > 0.0
            && self.eta >= 0.0
            && self.theta > 0.0
            && self.tau_rev < 1.0
            && self.w0 > 0.0
            && self.r > 0.0
            && self.a > 0.0;
        if !ok {
            return Err(Error::domain(format!("parameters not solvable: {self:?}")));
        }
        if self.market_mode == MarketMode::Markup && self.eta <= 1.0 {
            return Err(Error::config("eta", "markup mode needs eta > 1"));
        }
        Ok(())
    }
}

/// Solved firm allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmEquilibrium {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub w: f64,
    pub p: f64,
    pub lambda: f64,
    pub revenue: f64,
    pub profit: f64,
    /// `theta * w * L` over total cost.
    pub labor_cost_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndustryEquilibrium {
    pub treated: FirmEquilibrium,
    pub control: FirmEquilibrium,
    pub aggregate_q: f64,
    pub p_index: f64,
    pub m: f64,
    pub iterations: usize,
}

/// Cost-minimizing input bundle for a given output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostMinimum {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub lambda: f64,
    pub cost: f64,
}

/// Wage on the firm's labor-supply curve.
pub fn labor_supply_wage(l: f64, w0: f64, eps: f64) -> Result<f64> {
    if !(l > 0.0 && w0 > 0.0) {
        return Err(Error::domain(format!(
            "labor supply needs L > 0 and w0 > 0, got L = {l}, w0 = {w0}"
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::domain(format!("eps must be > 0, got {eps}")));
    }
    Ok(w0 * l.powf(1.0 / eps))
}

/// CES output; Cobb-Douglas when `|rho| < 1e-6`.
pub fn ces_output(l: f64, k: f64, s_l: f64, s_k: f64, rho: f64) -> Result<f64> {
    if rho.is_nan() || rho >= 1.0 {
        return Err(Error::domain(format!("CES requires rho < 1, got {rho}")));
    }
    if !(l > 0.0 && k > 0.0) {
        return Err(Error::domain(format!(
            "CES requires positive inputs, got L = {l}, K = {k}"
        )));
    }
    if rho.abs() < COBB_DOUGLAS_RHO {
        return Ok((s_l * l.ln() + s_k * k.ln()).exp());
    }
    let ln_q = log_add_exp(s_l.ln() + rho * l.ln(), s_k.ln() + rho * k.ln()) / rho;
    Ok(ln_q.exp())
}

/// Proportional wage markdown `(MRPL - w) / w = 1 / eps` under monopsony.
pub fn markdown(eps: f64) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::domain(format!("eps must be > 0, got {eps}")));
    }
    Ok(1.0 / eps)
}

/// `rho` as used by the solvers: zero inside the Cobb-Douglas band.
pub fn effective_rho(rho: f64) -> f64 {
    if rho.abs() < COBB_DOUGLAS_RHO {
        0.0
    } else {
        rho
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Log-space view of the technology and factor markets at one policy.
struct Technology {
    ln_s_l: f64,
    ln_s_k: f64,
    rho: f64,
    inv_eps: f64,
    ln_w0: f64,
    ln_r: f64,
    ln_theta: f64,
    ln_mlc_markup: f64,
    u0: f64,
}

#[derive(Debug, Clone, Copy)]
struct LogInputs {
    ln_l: f64,
    ln_k: f64,
    ln_lambda: f64,
}

impl Technology {
    fn new(params: &EconomyParams, theta: f64) -> Self {
        let rho = effective_rho(params.rho);
        let inv_eps = if params.eps.is_infinite() {
            0.0
        } else {
            1.0 / params.eps
        };
        let ln_s_l = params.s_l.ln();
        let ln_s_k = params.s_k.ln();
        let ln_theta = theta.ln();
        let ln_w0 = params.w0.ln();
        let ln_r = params.r.ln();
        // Input ratio under a flat labor supply curve: a good starting point.
        let u0 = (ln_r - ln_theta - ln_w0 + ln_s_l - ln_s_k) / (1.0 - rho);
        Self {
            ln_s_l,
            ln_s_k,
            rho,
            inv_eps,
            ln_w0,
            ln_r,
            ln_theta,
            ln_mlc_markup: inv_eps.ln_1p(),
            u0,
        }
    }

    /// `ln f(kappa, 1)` with `kappa = e^u`.
    fn ln_f_unit(&self, u: f64) -> f64 {
        if self.rho == 0.0 {
            self.ln_s_l.exp() * u
        } else {
            log_add_exp(self.ln_s_l + self.rho * u, self.ln_s_k) / self.rho
        }
    }

    fn inputs_at(&self, ln_q: f64, u: f64) -> (f64, f64) {
        let ln_k = ln_q - self.ln_f_unit(u);
        (u + ln_k, ln_k)
    }

    /// Log of marginal labor cost over rental rate, minus log MRTS.
    fn foc_residual(&self, ln_q: f64, u: f64) -> f64 {
        let (ln_l, _) = self.inputs_at(ln_q, u);
        let ln_mlc = self.ln_theta + self.ln_w0 + self.ln_mlc_markup + self.inv_eps * ln_l;
        ln_mlc - self.ln_r - (self.ln_s_l - self.ln_s_k) + (1.0 - self.rho) * u
    }

    fn cost_min(&self, ln_q: f64, opts: &RootOptions) -> Result<LogInputs> {
        let root = roots::solve(|u| Ok(self.foc_residual(ln_q, u)), self.u0, 1.0, opts)
            .map_err(|e| e.within(&format!("cost minimization at ln Q = {ln_q:.6}")))?;
        let (ln_l, ln_k) = self.inputs_at(ln_q, root.x);
        // lambda = r / f_K with f_K = s_K (K/Q)^(rho - 1)
        let ln_lambda = self.ln_r - self.ln_s_k + (1.0 - self.rho) * (ln_k - ln_q);
        Ok(LogInputs { ln_l, ln_k, ln_lambda })
    }
}

/// Minimize `theta * w(L) * L + r * K` subject to producing `q`.
pub fn cost_minimize(q: f64, params: &EconomyParams) -> Result<CostMinimum> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::domain(format!("output must be positive, got {q}")));
    }
    params.check_solvable()?;
    let tech = Technology::new(params, params.theta);
    let x = tech.cost_min(q.ln(), &RootOptions::default())?;
    Ok(cost_minimum_from(params, params.theta, x))
}

fn cost_minimum_from(params: &EconomyParams, theta: f64, x: LogInputs) -> CostMinimum {
    let l = x.ln_l.exp();
    let k = x.ln_k.exp();
    let w = params.w0 * (x.ln_l / params.eps).exp();
    CostMinimum {
        l,
        k,
        lambda: x.ln_lambda.exp(),
        cost: theta * w * l + params.r * k,
    }
}

fn firm_at(params: &EconomyParams, policy: TaxPolicy, ln_q: f64, ln_p: f64, x: LogInputs) -> FirmEquilibrium {
    let cm = cost_minimum_from(params, policy.theta, x);
    let q = ln_q.exp();
    let p = ln_p.exp();
    let w = params.w0 * (x.ln_l / params.eps).exp();
    let revenue = p * q;
    FirmEquilibrium {
        l: cm.l,
        k: cm.k,
        q,
        w,
        p,
        lambda: cm.lambda,
        revenue,
        profit: (1.0 - policy.tau_rev) * revenue - cm.cost,
        labor_cost_share: policy.theta * w * cm.l / cm.cost,
    }
}

/// Log of the markup factor on price in the pricing condition.
fn ln_price_wedge(params: &EconomyParams) -> f64 {
    match params.market_mode {
        MarketMode::Markup => (-1.0 / params.eta).ln_1p(),
        MarketMode::PriceTaking => 0.0,
    }
}

/// Profit-maximizing output and allocation for a single firm.
///
/// Markup mode solves `(1 - tau) p(Q) (1 - 1/eta) = lambda(Q)`; price-taking
/// mode solves `(1 - tau) p(Q) = lambda(Q)` with `p` the market-clearing price.
/// With `eta = 0` in price-taking mode demand is perfectly inelastic at `Q = 1`.
pub fn profit_maximize(params: &EconomyParams) -> Result<FirmEquilibrium> {
    params.check_solvable()?;
    let policy = params.policy();
    let tech = Technology::new(params, policy.theta);
    let opts = RootOptions::default();
    let ln_keep = (1.0 - policy.tau_rev).ln();
    let ln_a = params.a.ln();

    if params.eta == 0.0 {
        let x = tech.cost_min(0.0, &opts)?;
        let ln_p = x.ln_lambda - ln_keep;
        return Ok(firm_at(params, policy, 0.0, ln_p, x));
    }

    let wedge = ln_price_wedge(params);
    let residual = |ln_q: f64| -> Result<f64> {
        let x = tech.cost_min(ln_q, &opts)?;
        Ok(ln_keep + ln_a - ln_q / params.eta + wedge - x.ln_lambda)
    };
    let root = roots::solve(residual, 0.0, 1.0, &opts).map_err(|e| e.within("profit maximization"))?;
    let ln_q = root.x;
    let x = tech.cost_min(ln_q, &opts)?;
    let ln_p = ln_a - ln_q / params.eta;
    Ok(firm_at(params, policy, ln_q, ln_p, x))
}

/// Industry equilibrium with a treated share `m` and a control share `1 - m`.
///
/// Both blocks sell the symmetric per-firm quantity `Q` at the common price
/// index `p = A Q^(-1/eta)`. The price satisfies the Cournot aggregation
/// `p * wedge = m * lambda_T(Q) / (1 - tau_T) + (1 - m) * lambda_C(Q) / (1 - tau_C)`,
/// i.e. the markup over the share-weighted tax-inclusive marginal cost. With
/// `m = 1` (or `m = 0`) this is the single-firm optimum of the treated (control)
/// policy.
pub fn industry_equilibrium(
    params: &EconomyParams,
    treated: TaxPolicy,
    control: TaxPolicy,
) -> Result<IndustryEquilibrium> {
    if !(0.0..=1.0).contains(&params.m) {
        return Err(Error::config("m", format!("must lie in [0, 1], got {}", params.m)));
    }
    for (name, pol) in [("treated", treated), ("control", control)] {
        if !(pol.theta > 0.0 && pol.tau_rev < 1.0) {
            return Err(Error::domain(format!("invalid {name} policy {pol:?}")));
        }
    }
    params.check_solvable()?;
    let m = params.m;
    let tech_t = Technology::new(params, treated.theta);
    let tech_c = Technology::new(params, control.theta);
    let opts = RootOptions::default();
    let ln_a = params.a.ln();
    let wedge = ln_price_wedge(params);

    let blocks = |ln_q: f64| -> Result<(LogInputs, LogInputs, f64)> {
        let xt = tech_t.cost_min(ln_q, &opts)?;
        let xc = tech_c.cost_min(ln_q, &opts)?;
        let ln_cost = log_add_exp(
            m.ln() + xt.ln_lambda - (1.0 - treated.tau_rev).ln(),
            (1.0 - m).ln() + xc.ln_lambda - (1.0 - control.tau_rev).ln(),
        );
        Ok((xt, xc, ln_cost))
    };

    let (ln_q, ln_p, iterations) = if params.eta == 0.0 {
        let (_, _, ln_cost) = blocks(0.0)?;
        (0.0, ln_cost - wedge, 0)
    } else {
        let root = roots::solve(
            |ln_q| {
                let (_, _, ln_cost) = blocks(ln_q)?;
                Ok(ln_a - ln_q / params.eta + wedge - ln_cost)
            },
            0.0,
            1.0,
            &opts,
        )
        .map_err(|e| e.within(&format!("industry equilibrium (m = {m})")))?;
        (root.x, ln_a - root.x / params.eta, root.iterations)
    };
    let (xt, xc, _) = blocks(ln_q)?;
    let treated_eq = firm_at(params, treated, ln_q, ln_p, xt);
    let control_eq = firm_at(params, control, ln_q, ln_p, xc);
    Ok(IndustryEquilibrium {
        treated: treated_eq,
        control: control_eq,
        aggregate_q: m * treated_eq.q + (1.0 - m) * control_eq.q,
        p_index: ln_p.exp(),
        m,
        iterations,
    })
}

/// Marginal product of labor `s_L (L/Q)^(rho - 1)`.
pub fn marginal_product_labor(eq: &FirmEquilibrium, params: &EconomyParams) -> f64 {
    params.s_l * (eq.l / eq.q).powf(effective_rho(params.rho) - 1.0)
}
