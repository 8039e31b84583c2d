//! Gaussian two-mode model of a photon entangled with a stored spin wave.
//!
//! Units: ħ = 1, lengths in mm, momenta in ħ/mm, times in µs and diffusion
//! coefficients in mm²/µs. Every product of a position variance with a
//! momentum variance is therefore expressed in units of ħ².
//!
//! The state factorizes over the two transverse axes. Per axis, the squared
//! momentum wavefunction is a centred Gaussian `exp(-½ vᵀ A v)` in
//! `v = (p, P)` with precision
//!
//! ```text
//! A = [[σ₊² + σ₋²,  σ₊² − σ₋²      ],
//!      [σ₊² − σ₋²,  σ₊² + σ₋² + 4Dτ]]
//! ```
//!
//! where the `4Dτ` term comes from the diffusion filter `exp(-D|P|²τ)` on the
//! amplitude. The position-space density is its Fourier dual with covariance
//! `A / 4`, so every second moment in both bases is closed form.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Reduced Planck constant in the internal unit system.
pub const HBAR: f64 = 1.0;

/// Reid bound: products below ħ²/4 demonstrate the EPR paradox.
pub const EPR_BOUND: f64 = HBAR * HBAR / 4.0;

/// Mancini bound: products below ħ² certify inseparability.
pub const INSEPARABILITY_BOUND: f64 = HBAR * HBAR;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` out of domain: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("delay time must be finite and non-negative, got {0}")]
    NegativeDelay(f64),
    #[error("variance product must be finite and non-negative, got {0}")]
    NegativeProduct(f64),
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value })
    }
}

fn check_non_negative(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value })
    }
}

fn check_tau(tau: f64) -> Result<(), ModelError> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::NegativeDelay(tau))
    }
}

/// Parameters of the Gaussian photon/spin-wave wavefunction.
///
/// `sigma_minus` sets the position anti-correlation width `⟨Δ²|r−R|⟩ = σ₋²`
/// and `sigma_plus` the width of the sum `⟨Δ²|r+R|⟩ = σ₊²`. States with
/// `sigma_plus <= sigma_minus` are accepted and simply fail to be entangled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprGaussianState {
    pub epsilon: f64,
    pub sigma_minus: f64,
    pub sigma_plus: f64,
}

impl EprGaussianState {
    pub fn new(epsilon: f64, sigma_minus: f64, sigma_plus: f64) -> Result<Self, ModelError> {
        let state = Self {
            epsilon,
            sigma_minus,
            sigma_plus,
        };
        state.validate()?;
        Ok(state)
    }

    /// Builds a state from the two composite position variances σ₋² and σ₊².
    pub fn from_variances(epsilon: f64, var_minus: f64, var_plus: f64) -> Result<Self, ModelError> {
        check_positive("var_minus", var_minus)?;
        check_positive("var_plus", var_plus)?;
        Self::new(epsilon, var_minus.sqrt(), var_plus.sqrt())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("epsilon", self.epsilon)?;
        check_positive("sigma_minus", self.sigma_minus)?;
        check_positive("sigma_plus", self.sigma_plus)
    }

    pub fn var_minus(&self) -> f64 {
        self.sigma_minus * self.sigma_minus
    }

    pub fn var_plus(&self) -> f64 {
        self.sigma_plus * self.sigma_plus
    }

    pub fn is_entangled_parameterization(&self) -> bool {
        self.sigma_plus > self.sigma_minus
    }
}

/// Atomic diffusion acting on the stored spin wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionModel {
    /// D in mm²/µs.
    pub diffusion_coefficient: f64,
    /// Total generation plus readout time T in µs. Only documents the
    /// attainable floor `σ₋² ≳ D·T`; it does not enter the evolution.
    #[serde(default)]
    pub readout_time: f64,
}

impl DiffusionModel {
    pub fn new(diffusion_coefficient: f64, readout_time: f64) -> Result<Self, ModelError> {
        let model = Self {
            diffusion_coefficient,
            readout_time,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn none() -> Self {
        Self {
            diffusion_coefficient: 0.0,
            readout_time: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_non_negative("diffusion_coefficient", self.diffusion_coefficient)?;
        check_non_negative("readout_time", self.readout_time)
    }

    /// Mean-squared displacement per axis accumulated over `tau`, D·τ.
    pub fn spread(&self, tau: f64) -> f64 {
        self.diffusion_coefficient * tau
    }

    /// Lower bound on σ₋² set by diffusion during generation and readout.
    pub fn min_var_minus(&self) -> f64 {
        self.diffusion_coefficient * self.readout_time
    }
}

/// Measurement basis. The near field images positions, the far field momenta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    #[serde(rename = "near_field", alias = "position")]
    Position,
    #[serde(rename = "far_field", alias = "momentum")]
    Momentum,
}

impl Basis {
    pub fn label(self) -> &'static str {
        match self {
            Basis::Position => "near_field",
            Basis::Momentum => "far_field",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Basis::Position => "near",
            Basis::Momentum => "far",
        }
    }

    /// Unit string of a single coordinate.
    pub fn unit(self) -> &'static str {
        match self {
            Basis::Position => "mm",
            Basis::Momentum => "hbar/mm",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Second moments of one transverse axis: photon coordinate `a`, spin-wave
/// coordinate `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisCovariance {
    pub basis: Basis,
    pub var_a: f64,
    pub var_b: f64,
    pub cov_ab: f64,
}

impl AxisCovariance {
    pub fn var_diff(&self) -> f64 {
        self.var_a + self.var_b - 2.0 * self.cov_ab
    }

    pub fn var_sum(&self) -> f64 {
        self.var_a + self.var_b + 2.0 * self.cov_ab
    }

    pub fn correlation(&self) -> f64 {
        self.cov_ab / (self.var_a * self.var_b).sqrt()
    }

    /// Lower-triangular factor `L` with `L Lᵀ` equal to the covariance.
    /// Returns `None` when the matrix is not positive definite.
    pub fn cholesky(&self) -> Option<[[f64; 2]; 2]> {
        if !(self.var_a > 0.0) {
            return None;
        }
        let l00 = self.var_a.sqrt();
        let l10 = self.cov_ab / l00;
        let rem = self.var_b - l10 * l10;
        if !(rem > 0.0) {
            return None;
        }
        Some([[l00, 0.0], [l10, rem.sqrt()]])
    }
}

/// Variances of the composite variables entering the entanglement criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeVariances {
    /// ⟨Δ²(x−X)⟩ in mm².
    pub var_diff_pos: f64,
    /// ⟨Δ²(p_x+P_x)⟩ in ħ²/mm².
    pub var_sum_mom: f64,
    /// ⟨Δ²(x+X)⟩ in mm².
    pub var_sum_pos: f64,
    /// ⟨Δ²(p_x−P_x)⟩ in ħ²/mm².
    pub var_diff_mom: f64,
    /// var_diff_pos · var_sum_mom in ħ².
    pub product: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    EprParadox,
    InseparableOnly,
    Unverified,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::EprParadox => "EprParadox",
            Regime::InseparableOnly => "InseparableOnly",
            Regime::Unverified => "Unverified",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Delay at which the composite product reaches the Reid bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EprLifetime {
    At(f64),
    /// The product is already at or above ħ²/4 at τ = 0.
    AlreadyPast,
    /// No diffusion and the product starts below the bound.
    Never,
}

// σ₊², σ₋², D·τ after validation.
fn params(state: &EprGaussianState, diff: &DiffusionModel, tau: f64) -> Result<(f64, f64, f64), ModelError> {
    state.validate()?;
    diff.validate()?;
    check_tau(tau)?;
    Ok((state.var_plus(), state.var_minus(), diff.spread(tau)))
}

// ab + d(a+b): a quarter of det A.
fn quarter_det(a: f64, b: f64, d: f64) -> f64 {
    a * b + d * (a + b)
}

/// Momentum-space amplitude Ψ̃_τ(p, P) for two-dimensional momenta in ħ/mm.
pub fn psi_momentum(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
    p: [f64; 2],
    pp: [f64; 2],
) -> Result<f64, ModelError> {
    let (a, b, d) = params(state, diff, tau)?;
    let mut exponent = 0.0;
    for k in 0..2 {
        let sum = p[k] + pp[k];
        let dif = p[k] - pp[k];
        exponent -= a * sum * sum / (4.0 * HBAR * HBAR);
        exponent -= b * dif * dif / (4.0 * HBAR * HBAR);
        exponent -= d * pp[k] * pp[k] / (HBAR * HBAR);
    }
    let prefactor = state.epsilon * state.sigma_minus * state.sigma_plus / std::f64::consts::PI;
    Ok(prefactor * exponent.exp())
}

/// Position-space amplitude Ψ_τ(r, R) for two-dimensional positions in mm,
/// the unitary Fourier transform of [`psi_momentum`].
pub fn psi_position(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
    r: [f64; 2],
    rr: [f64; 2],
) -> Result<f64, ModelError> {
    let (a, b, d) = params(state, diff, tau)?;
    let q = quarter_det(a, b, d);
    // Amplitude exponent per axis is -vᵀ A⁻¹ v with A⁻¹ = adj(A) / (4q).
    let (m00, m01, m11) = (a + b + 4.0 * d, -(a - b), a + b);
    let mut exponent = 0.0;
    for k in 0..2 {
        let (x, xx) = (r[k], rr[k]);
        exponent -= (m00 * x * x + 2.0 * m01 * x * xx + m11 * xx * xx) / (4.0 * q);
    }
    let prefactor = state.epsilon * (a * b).sqrt() / (std::f64::consts::PI * q);
    Ok(prefactor * exponent.exp())
}

/// Per-axis second moments of |Ψ_τ|²; identical for x and y.
pub fn covariance_position(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
) -> Result<AxisCovariance, ModelError> {
    let (a, b, d) = params(state, diff, tau)?;
    Ok(AxisCovariance {
        basis: Basis::Position,
        var_a: (a + b) / 4.0,
        var_b: (a + b + 4.0 * d) / 4.0,
        cov_ab: (a - b) / 4.0,
    })
}

/// Per-axis second moments of |Ψ̃_τ|², the inverse of the precision matrix.
pub fn covariance_momentum(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
) -> Result<AxisCovariance, ModelError> {
    let (a, b, d) = params(state, diff, tau)?;
    let det = 4.0 * quarter_det(a, b, d);
    let h2 = HBAR * HBAR;
    Ok(AxisCovariance {
        basis: Basis::Momentum,
        var_a: h2 * (a + b + 4.0 * d) / det,
        var_b: h2 * (a + b) / det,
        cov_ab: -h2 * (a - b) / det,
    })
}

pub fn composite_variances(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
) -> Result<CompositeVariances, ModelError> {
    let (a, b, d) = params(state, diff, tau)?;
    let q = quarter_det(a, b, d);
    let h2 = HBAR * HBAR;
    let var_diff_pos = b + d;
    let var_sum_mom = h2 * (b + d) / q;
    Ok(CompositeVariances {
        var_diff_pos,
        var_sum_mom,
        var_sum_pos: a + d,
        var_diff_mom: h2 * (a + d) / q,
        product: var_diff_pos * var_sum_mom,
    })
}

/// The product growth ħ²(σ₋² + Dτ)/σ₊², valid to first order in Dτ.
pub fn product_linear_approx(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
) -> Result<f64, ModelError> {
    let (a, b, d) = params(state, diff, tau)?;
    Ok(HBAR * HBAR * (b + d) / a)
}

/// Entanglement dimension (σ₊² + Dτ)/(σ₋² + Dτ), equal to (σ₊/σ₋)² at τ = 0.
pub fn entanglement_dimension(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
) -> Result<f64, ModelError> {
    let (a, b, d) = params(state, diff, tau)?;
    Ok((a + d) / (b + d))
}

/// Fraction of pairs surviving the diffusion filter after `tau`.
pub fn pair_rate_factor(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
) -> Result<f64, ModelError> {
    let (a, b, d) = params(state, diff, tau)?;
    Ok(a * b / quarter_det(a, b, d))
}

/// Boundary values fall into the weaker regime since both bounds are strict.
pub fn classify_regime(product: f64) -> Result<Regime, ModelError> {
    if !(product.is_finite() && product >= 0.0) {
        return Err(ModelError::NegativeProduct(product));
    }
    Ok(if product < EPR_BOUND {
        Regime::EprParadox
    } else if product < INSEPARABILITY_BOUND {
        Regime::InseparableOnly
    } else {
        Regime::Unverified
    })
}

/// Delay τ* at which the composite product crosses ħ²/4.
///
/// With `a = σ₊²`, `b = σ₋²`, `d = Dτ` the crossing solves
/// `4d² + (7b − a)d + b(4b − a) = 0`; below the bound the constant term is
/// negative so exactly one positive root exists.
pub fn epr_lifetime(state: &EprGaussianState, diff: &DiffusionModel) -> Result<EprLifetime, ModelError> {
    let (a, b, _) = params(state, diff, 0.0)?;
    let h2 = HBAR * HBAR;
    if h2 * b / a >= EPR_BOUND {
        return Ok(EprLifetime::AlreadyPast);
    }
    if diff.diffusion_coefficient == 0.0 {
        return Ok(EprLifetime::Never);
    }
    // k(b+d)² = ab + d(a+b) with k = ħ²/bound (k = 4).
    let k = h2 / EPR_BOUND;
    let qa = k;
    let qb = 2.0 * k * b - (a + b);
    let qc = k * b * b - a * b;
    let disc = qb * qb - 4.0 * qa * qc;
    // qc < 0 here, so the stable form avoids cancellation.
    let root = if qb <= 0.0 {
        (-qb + disc.sqrt()) / (2.0 * qa)
    } else {
        2.0 * qc / (-qb - disc.sqrt())
    };
    Ok(EprLifetime::At(root / diff.diffusion_coefficient))
}

/// First-order estimate (σ₊²/4 − σ₋²)/D of the EPR lifetime.
pub fn epr_lifetime_linear(state: &EprGaussianState, diff: &DiffusionModel) -> Result<EprLifetime, ModelError> {
    let (a, b, _) = params(state, diff, 0.0)?;
    let margin = a * EPR_BOUND / (HBAR * HBAR) - b;
    if margin <= 0.0 {
        Ok(EprLifetime::AlreadyPast)
    } else if diff.diffusion_coefficient == 0.0 {
        Ok(EprLifetime::Never)
    } else {
        Ok(EprLifetime::At(margin / diff.diffusion_coefficient))
    }
}
