//! Fixed-effects OLS / 2SLS and the reform designs estimated with them.

pub mod designs;
pub mod frame;
pub mod hdfe;
pub mod regression;

pub use designs::{
    balance_check, event_chart, event_study, matching_did, pooled_did, read_event_csv, BalanceConfig, BalanceReport,
    DesignSpec, DidReport, EventCoefficient, EventStudyReport, MatchConfig, MatchReport, Placebo, Subsample,
};
pub use frame::{group_ids, Frame};
pub use hdfe::{absorb, AbsorbOptions, FeDimension};
pub use regression::{ols, tsls, Coefficient, EstimateReport, FirstStage, RegressionSpec, WaldTest, INTERCEPT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elasticity of an outcome with respect to labor cost: the reform effect
/// divided by the log change in the labor-cost wedge.
pub fn elasticity_postprocess(beta_outcome: f64, dlog_cost: f64) -> Result<f64> {
    if dlog_cost == 0.0 || !dlog_cost.is_finite() {
        return Err(Error::domain(format!(
            "dlog_cost must be finite and non-zero, got {dlog_cost}"
        )));
    }
    Ok(beta_outcome / dlog_cost)
}

/// Statutory log change in labor cost, `log(treated / control)` of the cost
/// ratios (wage bill plus payroll tax over wage bill).
pub fn statutory_dlog_cost(treated_cost_ratio: f64, control_cost_ratio: f64) -> f64 {
    (treated_cost_ratio / control_cost_ratio).ln()
}

/// Statutory versus estimated first-stage labor-cost change; the gap is
/// reported, not reconciled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub statutory: f64,
    pub estimated: f64,
    pub difference: f64,
}

pub fn compare_cost_change(estimated: f64, treated_cost_ratio: f64, control_cost_ratio: f64) -> CostComparison {
    let statutory = statutory_dlog_cost(treated_cost_ratio, control_cost_ratio);
    CostComparison {
        statutory,
        estimated,
        difference: estimated - statutory,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn employment_elasticity() {
        let e = elasticity_postprocess(0.0944, -0.133).unwrap();
        assert!((e - -0.7098).abs() < 1e-4);
        assert_eq!(elasticity_postprocess(0.0, -0.2).unwrap(), 0.0);
        assert!(elasticity_postprocess(0.1, 0.0).unwrap_err().is_config());
    }

    #[test]
    fn statutory_cost_change() {
        let c = compare_cost_change(-0.133, 1.12, 1.31);
        assert!((c.statutory - -0.1567).abs() < 1e-4);
        assert!((c.difference - (-0.133 - c.statutory)).abs() < 1e-15);
    }
}
