//! Tax elasticities of the firm model, analytic where a closed form exists and
//! numeric (centered differences in logs over full equilibria) everywhere.

use serde::{Deserialize, Serialize};

use crate::economy::{
    cost_minimize, effective_rho, industry_equilibrium, profit_maximize, EconomyParams, FirmEquilibrium, TaxPolicy,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    L,
    K,
    Q,
    #[serde(rename = "lambda")]
    Lambda,
    #[serde(rename = "revenue")]
    Revenue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shock {
    /// Payroll wedge, applied to the single-firm optimum.
    Theta,
    /// Revenue tax on the treated block of the industry equilibrium.
    TauRev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    /// Step on the log of the shocked variable.
    pub step: f64,
    /// Combine steps `h` and `h/2` to cancel the `O(h^2)` error term.
    pub richardson: bool,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            richardson: false,
        }
    }
}

/// Elasticities of every tracked outcome with respect to one shock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Responses {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub lambda: f64,
    pub revenue: f64,
}

impl Responses {
    fn zero() -> Self {
        Self {
            l: 0.0,
            k: 0.0,
            q: 0.0,
            lambda: 0.0,
            revenue: 0.0,
        }
    }

    pub fn get(&self, target: Target) -> f64 {
        match target {
            Target::L => self.l,
            Target::K => self.k,
            Target::Q => self.q,
            Target::Lambda => self.lambda,
            Target::Revenue => self.revenue,
        }
    }

    fn centered(plus: &FirmEquilibrium, minus: &FirmEquilibrium, h: f64) -> Self {
        let d = |a: f64, b: f64| (a.ln() - b.ln()) / (2.0 * h);
        Self {
            l: d(plus.l, minus.l),
            k: d(plus.k, minus.k),
            q: d(plus.q, minus.q),
            lambda: d(plus.lambda, minus.lambda),
            revenue: d(plus.revenue, minus.revenue),
        }
    }

    fn richardson(coarse: &Self, fine: &Self) -> Self {
        let r = |c: f64, f: f64| (4.0 * f - c) / 3.0;
        Self {
            l: r(coarse.l, fine.l),
            k: r(coarse.k, fine.k),
            q: r(coarse.q, fine.q),
            lambda: r(coarse.lambda, fine.lambda),
            revenue: r(coarse.revenue, fine.revenue),
        }
    }
}

fn check_step(opts: &FdOptions) -> Result<()> {
    if opts.step > 0.0 && opts.step.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "finite-difference step must be > 0, got {}",
            opts.step
        )))
    }
}

fn solve_shifted(shock: Shock, params: &EconomyParams, shift: f64) -> Result<FirmEquilibrium> {
    match shock {
        Shock::Theta => profit_maximize(&EconomyParams {
            theta: params.theta * shift.exp(),
            ..params.clone()
        }),
        Shock::TauRev => {
            let treated = TaxPolicy {
                theta: params.theta,
                tau_rev: params.tau_rev * shift.exp(),
            };
            let control = TaxPolicy {
                theta: params.theta,
                tau_rev: 0.0,
            };
            industry_equilibrium(params, treated, control).map(|eq| eq.treated)
        }
    }
}

fn labelled<T>(r: Result<T>, point: &str) -> Result<T> {
    r.map_err(|e| e.within(&format!("equilibrium at the {point} point")))
}

/// Centered log-difference elasticities of all outcomes to `shock`.
///
/// A revenue-tax shock at `tau_rev = 0` has zero elasticity by construction,
/// since `d log X / d log tau = tau * d log X / d tau`.
pub fn numeric_responses(shock: Shock, params: &EconomyParams, opts: &FdOptions) -> Result<Responses> {
    check_step(opts)?;
    params.validate()?;
    if shock == Shock::TauRev && params.tau_rev == 0.0 {
        return Ok(Responses::zero());
    }
    let h = opts.step;
    labelled(solve_shifted(shock, params, 0.0), "base")?;
    let plus = labelled(solve_shifted(shock, params, h), "+h")?;
    let minus = labelled(solve_shifted(shock, params, -h), "-h")?;
    let coarse = Responses::centered(&plus, &minus, h);
    if !opts.richardson {
        return Ok(coarse);
    }
    let plus2 = labelled(solve_shifted(shock, params, 0.5 * h), "+h/2")?;
    let minus2 = labelled(solve_shifted(shock, params, -0.5 * h), "-h/2")?;
    let fine = Responses::centered(&plus2, &minus2, 0.5 * h);
    Ok(Responses::richardson(&coarse, &fine))
}

/// `d log(target) / d log(shock)` by centered differences.
pub fn numeric_elasticity(target: Target, shock: Shock, params: &EconomyParams, opts: &FdOptions) -> Result<f64> {
    numeric_responses(shock, params, opts).map(|r| r.get(target))
}

/// Price-spillover factor `m / (m + (1 - m)(1 - tau))`.
pub fn spillover_factor(tau: f64, m: f64) -> f64 {
    let denom = m + (1.0 - m) * (1.0 - tau);
    if denom == 0.0 {
        0.0
    } else {
        m / denom
    }
}

/// Closed-form revenue-tax elasticities of revenue (`nu`) and capital (`xi`).
pub fn revenue_tax_elasticities_analytic(params: &EconomyParams) -> Result<(f64, f64)> {
    let tau = params.tau_rev;
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::domain(format!("tau_rev must lie in [0, 1), got {tau}")));
    }
    if !(0.0..=1.0).contains(&params.m) {
        return Err(Error::domain(format!("m must lie in [0, 1], got {}", params.m)));
    }
    if params.eta < 0.0 {
        return Err(Error::domain(format!("eta must be >= 0, got {}", params.eta)));
    }
    let base = tau / (1.0 - tau) * spillover_factor(tau, params.m);
    Ok((base * (1.0 - params.eta), -base * params.eta))
}

/// Decomposition of the payroll-tax labor response into marginal-cost and
/// output channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayrollComponents {
    /// `d log lambda / d log theta` holding output fixed.
    pub eps_lambda_theta: f64,
    /// `d log Q / d log theta` across full equilibria.
    #[serde(rename = "eps_Q_theta")]
    pub eps_q_theta: f64,
    /// `d log lambda / d log Q` holding theta fixed.
    #[serde(rename = "eps_lambda_Q")]
    pub eps_lambda_q: f64,
}

pub fn payroll_tax_components(params: &EconomyParams, opts: &FdOptions) -> Result<PayrollComponents> {
    check_step(opts)?;
    params.validate()?;
    let h = opts.step;
    let base = labelled(profit_maximize(params), "base")?;
    let q = base.q;
    let at = |theta: f64, q: f64| {
        cost_minimize(
            q,
            &EconomyParams {
                theta,
                ..params.clone()
            },
        )
        .map(|c| c.lambda.ln())
    };
    let eps_lambda_theta = (at(params.theta * h.exp(), q)? - at(params.theta * (-h).exp(), q)?) / (2.0 * h);
    let eps_lambda_q = (at(params.theta, q * h.exp())? - at(params.theta, q * (-h).exp())?) / (2.0 * h);
    let eps_q_theta = numeric_responses(Shock::Theta, params, opts)?.q;
    Ok(PayrollComponents {
        eps_lambda_theta,
        eps_q_theta,
        eps_lambda_q,
    })
}

/// Weights `(a, b)` of the labor-FOC decomposition
/// `eps_L_theta = a * (eps_lambda_theta + eps_lambda_Q * eps_Q_theta - 1) + b * eps_Q_theta`,
/// with `a = eps / (1 + eps (1 - rho))` and `b = (1 - rho) a`.
pub fn labor_foc_weights(eps: f64, rho: f64) -> (f64, f64) {
    let inv_eps = if eps.is_infinite() { 0.0 } else { 1.0 / eps };
    let a = 1.0 / (inv_eps + 1.0 - rho);
    (a, (1.0 - rho) * a)
}

pub fn compose_labor_elasticity(eps: f64, rho: f64, c: &PayrollComponents) -> f64 {
    let (a, b) = labor_foc_weights(eps, rho);
    a * (c.eps_lambda_theta + c.eps_lambda_q * c.eps_q_theta - 1.0) + b * c.eps_q_theta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionCheck {
    pub direct: f64,
    pub composed: f64,
    pub residual: f64,
    pub components: PayrollComponents,
}

/// Compare the directly differenced labor elasticity with its decomposition
/// through marginal cost and output. The two agree at any solvable point
/// because the decomposition is the log-differentiated labor FOC.
pub fn verify_composition(params: &EconomyParams, opts: &FdOptions) -> Result<CompositionCheck> {
    let components = payroll_tax_components(params, opts)?;
    let direct = numeric_elasticity(Target::L, Shock::Theta, params, opts)?;
    let composed = compose_labor_elasticity(params.eps, effective_rho(params.rho), &components);
    Ok(CompositionCheck {
        direct,
        composed,
        residual: (direct - composed).abs(),
        components,
    })
}

/// Hicks-Marshall payroll elasticities of labor and capital under a flat labor
/// supply: substitution `-s_K sigma` (resp. `s_L sigma`) plus scale `-s_L eta`.
/// The shares are equilibrium cost shares.
pub fn competitive_limit_elasticities(cost_share_l: f64, cost_share_k: f64, rho: f64, eta: f64) -> Result<(f64, f64)> {
    let in_unit = |s: f64| (0.0..=1.0).contains(&s);
    if !(in_unit(cost_share_l) && in_unit(cost_share_k)) || (cost_share_l + cost_share_k - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "cost shares must lie in [0, 1] and sum to 1, got ({cost_share_l}, {cost_share_k})"
        )));
    }
    if rho.is_nan() || rho >= 1.0 {
        return Err(Error::domain(format!("rho must be < 1, got {rho}")));
    }
    let sigma = 1.0 / (1.0 - rho);
    Ok((
        -cost_share_k * sigma - cost_share_l * eta,
        cost_share_l * sigma - cost_share_l * eta,
    ))
}

/// Terms implied by the numeric solution for quantities that only have a
/// closed form in the unavailable derivation: `chi = zeta / xi`,
/// `Omega` from `eps_L_theta = eps / (1 + eps (1 - rho)) (Omega - 1)`, and
/// `psi` backed out of the capital and revenue responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedTerms {
    pub chi: Option<f64>,
    pub omega: f64,
    pub psi_capital: Option<f64>,
    pub psi_revenue: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityReport {
    pub method: Method,
    #[serde(rename = "eps_L_theta")]
    pub eps_l_theta: Option<f64>,
    #[serde(rename = "eps_K_theta")]
    pub eps_k_theta: Option<f64>,
    #[serde(rename = "eps_R_theta")]
    pub eps_r_theta: Option<f64>,
    pub eps_lambda_theta: Option<f64>,
    #[serde(rename = "eps_Q_theta")]
    pub eps_q_theta: Option<f64>,
    #[serde(rename = "eps_lambda_Q")]
    pub eps_lambda_q: Option<f64>,
    pub nu: Option<f64>,
    pub xi: Option<f64>,
    pub zeta: Option<f64>,
    /// Competitive-limit formulas at this point's equilibrium cost shares.
    #[serde(rename = "eps_L_theta_inf")]
    pub eps_l_theta_inf: Option<f64>,
    #[serde(rename = "eps_K_theta_inf")]
    pub eps_k_theta_inf: Option<f64>,
    pub implied: Option<ImpliedTerms>,
    pub params_snapshot: EconomyParams,
}

pub fn elasticity_report(params: &EconomyParams, method: Method, opts: &FdOptions) -> Result<ElasticityReport> {
    params.validate()?;
    let base = profit_maximize(params)?;
    let (lim_l, lim_k) = competitive_limit_elasticities(
        base.labor_cost_share,
        1.0 - base.labor_cost_share,
        params.rho,
        params.eta,
    )?;
    let (nu_a, xi_a) = revenue_tax_elasticities_analytic(params)?;
    let mut report = ElasticityReport {
        method,
        eps_l_theta: None,
        eps_k_theta: None,
        eps_r_theta: None,
        eps_lambda_theta: None,
        eps_q_theta: None,
        eps_lambda_q: None,
        nu: Some(nu_a),
        xi: Some(xi_a),
        zeta: None,
        eps_l_theta_inf: Some(lim_l),
        eps_k_theta_inf: Some(lim_k),
        implied: None,
        params_snapshot: params.clone(),
    };
    if method == Method::Analytic {
        return Ok(report);
    }
    let theta = numeric_responses(Shock::Theta, params, opts)?;
    let tau = numeric_responses(Shock::TauRev, params, opts)?;
    let comps = payroll_tax_components(params, opts)?;
    report.eps_l_theta = Some(theta.l);
    report.eps_k_theta = Some(theta.k);
    report.eps_r_theta = Some(theta.revenue);
    report.eps_lambda_theta = Some(comps.eps_lambda_theta);
    report.eps_q_theta = Some(theta.q);
    report.eps_lambda_q = Some(comps.eps_lambda_q);
    report.nu = Some(tau.revenue);
    report.xi = Some(tau.k);
    report.zeta = Some(tau.l);

    let (a, _) = labor_foc_weights(params.eps, effective_rho(params.rho));
    let eps = params.eps;
    let psi_core = (eps + 2.0 * theta.l) / (eps + theta.l);
    let psi_core = if eps.is_infinite() { 1.0 } else { psi_core };
    let scale = 1.0 - params.eta;
    report.implied = Some(ImpliedTerms {
        chi: (xi_a != 0.0).then(|| tau.l / xi_a).and_then(finite),
        omega: 1.0 + theta.l / a,
        psi_capital: finite(theta.k * (1.0 - params.rho) / (scale * psi_core)),
        psi_revenue: finite(theta.revenue / (scale * psi_core)),
    });
    Ok(report)
}

/// Model-implied reduced-form effects of a reform with payroll first stage
/// `phi1 = d log theta` and revenue-tax first stage `phi2 = d log tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReformEffect {
    #[serde(rename = "beta_L")]
    pub beta_l: f64,
    #[serde(rename = "beta_K")]
    pub beta_k: f64,
    #[serde(rename = "beta_R")]
    pub beta_r: f64,
    pub phi1: f64,
    pub phi2: f64,
}

/// `beta_X = eps_X_theta * phi1 - e_X * phi2`, where `e_X` is the revenue-tax
/// elasticity of `X`: numeric `zeta` for labor, closed-form `xi` for capital
/// and `nu` for revenue.
pub fn reform_effect(params: &EconomyParams, phi1: f64, phi2: f64, opts: &FdOptions) -> Result<ReformEffect> {
    let payroll = numeric_responses(Shock::Theta, params, opts)?;
    let (zeta, xi, nu) = if phi2 == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let (nu, xi) = revenue_tax_elasticities_analytic(params)?;
        let zeta = numeric_responses(Shock::TauRev, params, opts)?.l;
        (zeta, xi, nu)
    };
    Ok(ReformEffect {
        beta_l: payroll.l * phi1 - zeta * phi2,
        beta_k: payroll.k * phi1 - xi * phi2,
        beta_r: payroll.revenue * phi1 - nu * phi2,
        phi1,
        phi2,
    })
}
