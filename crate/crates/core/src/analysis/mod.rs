//! Reconstruction of coincidence statistics from detection frames.

pub mod coincidence;
pub mod fit;
pub mod histogram;
pub mod report;

pub use coincidence::{
    accidental_map, composite_binning, composite_histogram, joint_map, net_map, roi_binning, Axis, CompositeKind,
    NetMoments, Observations,
};
pub use fit::{fit_gaussian, FitError, GaussianFit};
pub use histogram::{subtract_background, Binning, Histogram1D, Histogram2D};
pub use report::{estimate_variances, AxisFits, Measurement, VarianceInputs, VarianceReport};

use crate::model::Basis;
use crate::simulate::Arm;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no frames to analyze")]
    NoData,
    #[error("mixed bases: expected {expected}, found {found}")]
    MixedBasis { expected: Basis, found: Basis },
    #[error("composite {kind} cannot be formed in the {basis} basis")]
    KindBasisMismatch { kind: CompositeKind, basis: Basis },
    #[error("frame shift {shift} must satisfy 1 <= shift < {frames}")]
    Shift { shift: usize, frames: usize },
    #[error("invalid binning: {0}")]
    Binning(String),
    #[error("histograms have different binning")]
    BinningMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Bins per composite histogram.
    pub bins: usize,
    /// Half-width of the composite histogram in first-pass standard deviations.
    pub span_sigmas: f64,
    /// Frame shift for the accidental estimate.
    pub shift: usize,
    /// Subtract 2·pitch²/12 from fitted composite variances.
    pub pixel_correction: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            bins: 40,
            span_sigmas: 4.0,
            shift: 1,
            pixel_correction: true,
        }
    }
}

/// Fitted composite histogram and the variance it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeResult {
    pub axis: Axis,
    pub kind: CompositeKind,
    pub histogram: Histogram1D,
    pub fit: Result<GaussianFit, FitError>,
    /// Pixelation term removed from the fitted variance.
    pub pixel_term: f64,
    /// Fitted variance minus `pixel_term`, with the fit's 1σ error.
    pub variance: Option<Measurement>,
}

impl CompositeResult {
    pub fn converged(&self) -> bool {
        self.fit.as_ref().is_ok_and(|f| f.converged)
    }
}

// First-pass (centre, half-span) for the composite histogram.
fn first_pass_window(obs: &Observations, axis: Axis, kind: CompositeKind, opts: &AnalysisOptions) -> Result<(f64, f64), AnalysisError> {
    if let Some((mean, var)) = obs.net_moments(axis, kind, opts.shift)?.mean_variance() {
        return Ok((mean, opts.span_sigmas * var.sqrt()));
    }
    // Fall back to the full range the composite can take on the camera.
    if let Some(det) = obs.detector() {
        let k = axis.index();
        let (s, a) = (det.roi(Arm::Stokes), det.roi(Arm::AntiStokes));
        let (lo, hi) = if kind.is_sum() {
            (s.min[k] + a.min[k], s.max[k] + a.max[k])
        } else {
            (s.min[k] - a.max[k], s.max[k] - a.min[k])
        };
        return Ok((0.5 * (lo + hi), 0.5 * (hi - lo)));
    }
    Err(AnalysisError::Binning(format!("cannot infer a range for {kind} along {axis}")))
}

/// Background-subtracted composite histogram on the default window, fitted
/// with a Gaussian.
pub fn analyze_composite(
    obs: &Observations,
    axis: Axis,
    kind: CompositeKind,
    opts: &AnalysisOptions,
) -> Result<CompositeResult, AnalysisError> {
    let (center, half) = first_pass_window(obs, axis, kind, opts)?;
    let binning = composite_binning(obs.detector(), axis, kind, center, half, opts.bins)?;
    let histogram = composite_histogram(obs, axis, kind, &binning, opts.shift)?;
    let fit = fit_gaussian(&histogram);
    let pixel_term = match (opts.pixel_correction, obs.detector()) {
        (true, Some(det)) => 2.0 * det.pixel_pitch * det.pixel_pitch / 12.0,
        _ => 0.0,
    };
    let variance = fit
        .as_ref()
        .ok()
        .map(|f| Measurement::new(f.variance - pixel_term, f.variance_err()));
    Ok(CompositeResult {
        axis,
        kind,
        histogram,
        fit,
        pixel_term,
        variance,
    })
}

/// Background-subtracted coincidence total and its Poisson variance.
pub fn net_coincidences(obs: &Observations, shift: usize) -> Result<Measurement, AnalysisError> {
    if !(shift >= 1 && shift < obs.frame_count()) {
        return Err(AnalysisError::Shift {
            shift,
            frames: obs.frame_count(),
        });
    }
    let raw = obs.pair_count(None) as f64;
    let acc = obs.pair_count(Some(shift)) as f64;
    Ok(Measurement::new(raw - acc, (raw + acc).sqrt()))
}

/// The composite that enters the entanglement criteria for a basis.
pub fn criterion_kind(basis: Basis) -> CompositeKind {
    match basis {
        Basis::Position => CompositeKind::PositionDifference,
        Basis::Momentum => CompositeKind::MomentumSum,
    }
}

/// Fits the criterion composite on both axes of every supplied basis and
/// builds the variance report. The report carries a delay only when every
/// input has the same known delay.
pub fn analyze_bases(
    observations: &[&Observations],
    opts: &AnalysisOptions,
) -> Result<(Vec<CompositeResult>, VarianceReport), AnalysisError> {
    let mut results = Vec::new();
    let mut inputs = VarianceInputs::default();
    for obs in observations {
        let kind = criterion_kind(obs.basis());
        for axis in Axis::BOTH {
            let res = analyze_composite(obs, axis, kind, opts)?;
            let fits = match axis {
                Axis::X => &mut inputs.x,
                Axis::Y => &mut inputs.y,
            };
            match obs.basis() {
                Basis::Position => fits.var_diff_pos = res.variance,
                Basis::Momentum => fits.var_sum_mom = res.variance,
            }
            results.push(res);
        }
    }
    let first = observations.first().and_then(|o| o.tau());
    inputs.tau = first.filter(|t| observations.iter().all(|o| o.tau() == Some(*t)));
    Ok((results, estimate_variances(&inputs)))
}
