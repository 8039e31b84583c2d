//! `theory`: model curves over a delay grid.

use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{create_dir, Cell, Table};
use eprsim_core::model::{
    composite_variances, entanglement_dimension, pair_rate_factor, product_linear_approx, ModelError,
};
use std::path::PathBuf;

/// Columns shared by `theory.csv` and `scan.csv`, in order.
pub const COLUMNS: [&str; 7] = [
    "tau_us",
    "var_diff_pos_mm2",
    "var_sum_mom_hbar2_per_mm2",
    "product_hbar2",
    "product_linear_hbar2",
    "dimension",
    "pair_rate",
];

/// One row of model values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelRow {
    pub tau: f64,
    pub var_diff_pos: f64,
    pub var_sum_mom: f64,
    pub product: f64,
    pub product_linear: f64,
    pub dimension: f64,
    pub pair_rate: f64,
}

impl ModelRow {
    pub fn new(cfg: &RunConfig, tau: f64) -> Result<Self, ModelError> {
        let (s, d) = (&cfg.state, &cfg.diffusion);
        let v = composite_variances(s, d, tau)?;
        Ok(Self {
            tau,
            var_diff_pos: v.var_diff_pos,
            var_sum_mom: v.var_sum_mom,
            product: v.product,
            product_linear: product_linear_approx(s, d, tau)?,
            dimension: entanglement_dimension(s, d, tau)?,
            pair_rate: pair_rate_factor(s, d, tau)?,
        })
    }

    pub fn cells(&self) -> Vec<Cell> {
        vec![
            self.tau.into(),
            self.var_diff_pos.into(),
            self.var_sum_mom.into(),
            self.product.into(),
            self.product_linear.into(),
            self.dimension.into(),
            self.pair_rate.into(),
        ]
    }
}

/// `min, min + step, ...` up to `max` inclusive (with a small tolerance so
/// an endpoint reached by accumulated rounding is kept).
pub fn tau_range(min: f64, max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(CliError::usage(format!("--tau-step must be positive, got {step}")));
    }
    if !(min >= 0.0) || !max.is_finite() {
        return Err(CliError::usage(format!("--tau-min must be non-negative, got {min}")));
    }
    if max < min {
        return Err(CliError::usage(format!("--tau-max ({max}) is below --tau-min ({min})")));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| min + i as f64 * step).collect())
}

/// Comment lines naming the model parameters.
pub fn model_comments(cfg: &RunConfig) -> Vec<String> {
    vec![format!(
        "model: sigma_minus^2={} mm^2 sigma_plus^2={} mm^2 D={} mm^2/us hbar=1",
        cfg.state.var_minus(),
        cfg.state.var_plus(),
        cfg.diffusion.diffusion_coefficient
    )]
}

pub fn run(cfg: &RunConfig, taus: &[f64]) -> Result<Vec<PathBuf>, CliError> {
    let mut table = Table::new(COLUMNS);
    table.comments = model_comments(cfg);
    for &tau in taus {
        let row = ModelRow::new(cfg, tau).map_err(|e| CliError::usage(format!("tau={tau}: {e}")))?;
        table.push(row.cells());
    }
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("theory.csv");
    table.write(&path)?;
    Ok(vec![path])
}
