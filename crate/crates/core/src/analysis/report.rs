//! Variance products, regimes and entanglement dimension with 1σ errors.

use crate::model::{classify_regime, Regime, HBAR};
use serde::{Deserialize, Serialize};

/// A value with its 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub sigma: f64,
}

impl Measurement {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    /// Product with relative errors added in quadrature.
    pub fn times(self, other: Self) -> Self {
        let value = self.value * other.value;
        let rel = (self.sigma / self.value).hypot(other.sigma / other.value);
        Self::new(value, value.abs() * rel)
    }

    /// Arithmetic mean of two independent measurements.
    pub fn mean_with(self, other: Self) -> Self {
        Self::new(0.5 * (self.value + other.value), 0.5 * self.sigma.hypot(other.sigma))
    }

    /// `k / self` with the relative error preserved.
    pub fn reciprocal_scaled(self, k: f64) -> Self {
        let value = k / self.value;
        Self::new(value, value.abs() * (self.sigma / self.value).abs())
    }
}

/// Fitted composite variances of one transverse axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisFits {
    /// ⟨Δ²(x−X)⟩ in mm².
    pub var_diff_pos: Option<Measurement>,
    /// ⟨Δ²(p+P)⟩ in ħ²/mm².
    pub var_sum_mom: Option<Measurement>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VarianceInputs {
    pub tau: Option<f64>,
    pub x: AxisFits,
    pub y: AxisFits,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_diff_pos: Option<Measurement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_sum_mom: Option<Measurement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product: Option<Measurement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
}

/// Note attached to the dimension estimate.
pub const DIMENSION_CAVEAT: &str = "hbar^2/product estimator; equals the entanglement dimension only at tau~0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub x: AxisReport,
    pub y: AxisReport,
    /// ⟨Δ²|r−R|⟩: mean of the x and y position-difference variances.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_diff_pos: Option<Measurement>,
    /// ⟨Δ²|p+P|⟩: mean of the x and y momentum-sum variances.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_sum_mom: Option<Measurement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product: Option<Measurement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension_estimate: Option<Measurement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension_caveat: Option<String>,
    /// Set when the delay is known to be non-zero, where ħ²/product is no
    /// longer the entanglement dimension.
    pub dimension_flagged: bool,
}

fn product_and_regime(pos: Option<Measurement>, mom: Option<Measurement>) -> (Option<Measurement>, Option<Regime>) {
    match (pos, mom) {
        (Some(p), Some(m)) => {
            let prod = p.times(m);
            (Some(prod), classify_regime(prod.value.max(0.0)).ok())
        }
        _ => (None, None),
    }
}

fn axis_report(fits: &AxisFits) -> AxisReport {
    let (product, regime) = product_and_regime(fits.var_diff_pos, fits.var_sum_mom);
    AxisReport {
        var_diff_pos: fits.var_diff_pos,
        var_sum_mom: fits.var_sum_mom,
        product,
        regime,
    }
}

fn mean(a: Option<Measurement>, b: Option<Measurement>) -> Option<Measurement> {
    Some(a?.mean_with(b?))
}

/// Combines per-axis fits into the full report. Averaged fields need both
/// axes; missing inputs leave the dependent fields absent.
pub fn estimate_variances(inputs: &VarianceInputs) -> VarianceReport {
    let var_diff_pos = mean(inputs.x.var_diff_pos, inputs.y.var_diff_pos);
    let var_sum_mom = mean(inputs.x.var_sum_mom, inputs.y.var_sum_mom);
    let (product, regime) = product_and_regime(var_diff_pos, var_sum_mom);
    let dimension_estimate = product.map(|p| p.reciprocal_scaled(HBAR * HBAR));
    VarianceReport {
        tau: inputs.tau,
        x: axis_report(&inputs.x),
        y: axis_report(&inputs.y),
        var_diff_pos,
        var_sum_mom,
        product,
        regime,
        dimension_caveat: dimension_estimate.map(|_| DIMENSION_CAVEAT.to_string()),
        dimension_estimate,
        dimension_flagged: inputs.tau.is_some_and(|t| t > 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(v: f64, s: f64) -> Measurement {
        Measurement::new(v, s)
    }

    #[test]
    fn product_rule() {
        let p = m(0.040, 0.004).times(m(2.6, 0.1));
        assert!((p.value - 0.104).abs() < 1e-12);
        let expected = 0.104 * (0.1f64.powi(2) + (0.1 / 2.6f64).powi(2)).sqrt();
        assert!((p.sigma - expected).abs() < 1e-12);
    }

    #[test]
    fn partial_inputs_leave_fields_absent() {
        let inputs = VarianceInputs {
            tau: None,
            x: AxisFits {
                var_diff_pos: None,
                var_sum_mom: Some(m(2.6, 0.1)),
            },
            y: AxisFits {
                var_diff_pos: None,
                var_sum_mom: Some(m(1.5, 0.04)),
            },
        };
        let r = estimate_variances(&inputs);
        assert!(r.var_diff_pos.is_none() && r.product.is_none() && r.regime.is_none());
        assert!((r.var_sum_mom.unwrap().value - 2.05).abs() < 1e-12);
        assert!(r.x.product.is_none());
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("var_diff_pos").is_none());
        assert!(json.get("var_sum_mom").is_some());
    }

    #[test]
    fn regime_follows_central_value() {
        let inputs = VarianceInputs {
            tau: Some(0.25),
            x: AxisFits {
                var_diff_pos: Some(m(0.1, 0.05)),
                var_sum_mom: Some(m(2.6, 0.1)),
            },
            y: AxisFits::default(),
        };
        let r = estimate_variances(&inputs);
        assert_eq!(r.x.regime, Some(Regime::InseparableOnly));
        assert!(r.product.is_none());
        assert!(r.dimension_flagged);
    }
}
