//! `scan`: simulate and analyze every scheduled delay in both bases, next to
//! the model values.

use super::theory::{model_comments, ModelRow, COLUMNS};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{create_dir, Cell, Table};
use eprsim_core::analysis::{analyze_bases, net_coincidences, Measurement, Observations, VarianceReport};
use eprsim_core::model::classify_regime;
use eprsim_core::simulate::{DetectorConfig, FrameGenerator};
use eprsim_core::Basis;
use std::path::PathBuf;

/// Measured quantities at one delay.
#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub tau: f64,
    pub frames: u64,
    pub report: Option<VarianceReport>,
    /// Near-field net coincidences.
    pub coincidences: Option<Measurement>,
    /// `ok`, `not_converged` or `error: <reason>`.
    pub status: String,
}

impl ScanPoint {
    /// Net coincidences per frame relative to the undiffused expectation.
    pub fn pair_rate(&self, near: &DetectorConfig) -> Option<Measurement> {
        let c = self.coincidences?;
        let expected = self.frames as f64
            * near.pairs_per_mode
            * f64::from(near.mode_count)
            * near.eff_photon
            * near.eff_spinwave_readout;
        Some(Measurement::new(c.value / expected, c.sigma / expected))
    }
}

fn observe(cfg: &RunConfig, basis: Basis, tau: f64, first_id: u64) -> Result<Observations, CliError> {
    let det = cfg.detector(basis);
    let generator = FrameGenerator::new(&cfg.state, &cfg.diffusion, tau, det, cfg.basis_seed(basis))
        .map_err(|e| CliError::config("", e.to_string()))?;
    let frames = generator.frames(first_id..first_id + cfg.schedule.frames);
    Ok(Observations::new(basis, &frames).with_detector(det.clone()).with_tau(tau))
}

/// Simulates and analyzes one delay. Frame ids start at `first_id` in both
/// bases, as `simulate` assigns them.
pub fn scan_point(cfg: &RunConfig, tau: f64, first_id: u64) -> Result<ScanPoint, CliError> {
    let near = observe(cfg, Basis::Position, tau, first_id)?;
    let far = observe(cfg, Basis::Momentum, tau, first_id)?;
    let opts = &cfg.analysis.options;
    let mut point = ScanPoint {
        tau,
        frames: cfg.schedule.frames,
        report: None,
        coincidences: None,
        status: String::new(),
    };
    match net_coincidences(&near, opts.shift) {
        Ok(c) => point.coincidences = Some(c),
        Err(e) => {
            point.status = format!("error: {e}");
            return Ok(point);
        }
    }
    match analyze_bases(&[&near, &far], opts) {
        Ok((composites, report)) => {
            let failed = composites.iter().find_map(|c| c.fit.as_ref().err());
            point.status = if let Some(e) = failed {
                format!("error: {e}")
            } else if composites.iter().all(|c| c.converged()) {
                "ok".to_string()
            } else {
                "not_converged".to_string()
            };
            point.report = Some(report);
        }
        Err(e) => point.status = format!("error: {e}"),
    }
    Ok(point)
}

fn header() -> Vec<String> {
    let mut h: Vec<String> = Vec::new();
    for (i, c) in COLUMNS.iter().enumerate() {
        h.push(c.to_string());
        // Every measured column carries its 1σ error; tau and the linear
        // approximation are exact.
        if i != 0 && *c != "product_linear_hbar2" {
            h.push(format!("{c}_err"));
        }
    }
    h.extend(
        [
            "regime",
            "status",
            "coincidences",
            "coincidences_err",
            "frames",
            "model_var_diff_pos_mm2",
            "model_var_sum_mom_hbar2_per_mm2",
            "model_product_hbar2",
            "model_dimension",
            "model_pair_rate",
            "model_regime",
        ]
        .map(String::from),
    );
    h
}

fn pair(m: Option<Measurement>) -> [Cell; 2] {
    [m.map(|m| m.value).into(), m.map(|m| m.sigma).into()]
}

fn row(point: &ScanPoint, model: &ModelRow, near: &DetectorConfig) -> Vec<Cell> {
    let r = point.report.as_ref();
    let mut cells = vec![Cell::Num(point.tau)];
    cells.extend(pair(r.and_then(|r| r.var_diff_pos)));
    cells.extend(pair(r.and_then(|r| r.var_sum_mom)));
    cells.extend(pair(r.and_then(|r| r.product)));
    cells.push(model.product_linear.into());
    cells.extend(pair(r.and_then(|r| r.dimension_estimate)));
    cells.extend(pair(point.pair_rate(near)));
    cells.push(r.and_then(|r| r.regime).map_or(Cell::Empty, |g| g.as_str().into()));
    cells.push(point.status.clone().into());
    cells.extend(pair(point.coincidences));
    cells.push(point.frames.into());
    cells.extend([
        model.var_diff_pos.into(),
        model.var_sum_mom.into(),
        model.product.into(),
        model.dimension.into(),
        model.pair_rate.into(),
    ]);
    cells.push(classify_regime(model.product).map_or(Cell::Empty, |g| g.as_str().into()));
    cells
}

pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let taus = &cfg.schedule.tau;
    if taus.len() < 2 {
        return Err(CliError::usage(format!(
            "scan needs at least two delays, got {}",
            taus.len()
        )));
    }
    create_dir(&cfg.output_dir)?;
    let mut table = Table::new(header());
    table.comments = model_comments(cfg);
    table.comments.push(format!(
        "frames={} per delay and basis; seed={}; shift={}",
        cfg.schedule.frames, cfg.seed, cfg.analysis.options.shift
    ));
    table.comments.push(
        "dimension: hbar^2/product estimator, equal to the model dimension only at tau=0; \
         pair_rate: near-field net coincidences over frames*pairs_per_mode*mode_count*efficiencies"
            .to_string(),
    );
    let near = cfg.detector(Basis::Position);
    for (i, &tau) in taus.iter().enumerate() {
        let model = ModelRow::new(cfg, tau).map_err(|e| CliError::usage(format!("tau={tau}: {e}")))?;
        let point = scan_point(cfg, tau, i as u64 * cfg.schedule.frames)?;
        table.push(row(&point, &model, near));
    }
    let path = cfg.output_dir.join("scan.csv");
    table.write(&path)?;
    Ok(vec![path])
}
