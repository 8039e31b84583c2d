//! `analyze`: coincidence maps, fitted composite histograms and the variance
//! report from events files.

use super::coordinate_unit;
use crate::config::AnalysisSettings;
use crate::error::CliError;
use crate::table::{create_dir, write_file, Table};
use eprsim_core::analysis::{
    analyze_bases, net_coincidences, net_map, roi_binning, AnalysisError, Axis, Binning, CompositeResult, Observations,
};
use eprsim_core::events_io::{read_all, RunMetadata};
use eprsim_core::simulate::{Arm, Frame};
use eprsim_core::Basis;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

pub type Run = (RunMetadata, Vec<Frame>);

pub fn read_run(path: &Path) -> Result<Run, CliError> {
    let input_err = |line, message: String| CliError::Input {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = File::open(path).map_err(|e| input_err(None, e.to_string()))?;
    read_all(BufReader::new(file)).map_err(|e| input_err(e.line(), e.to_string()))
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::usage(e.to_string())
    }
}

/// Everything `analyze` computes for a set of runs.
pub struct Analysis {
    pub observations: Vec<Observations>,
    pub composites: Vec<CompositeResult>,
    pub report: eprsim_core::analysis::VarianceReport,
}

/// Groups runs by basis (in basis order) and fits every criterion composite.
pub fn analyze_runs(runs: Vec<Run>, settings: &AnalysisSettings) -> Result<Analysis, CliError> {
    let mut by_basis: BTreeMap<Basis, Vec<Run>> = BTreeMap::new();
    for run in runs {
        by_basis.entry(run.0.basis).or_default().push(run);
    }
    let observations = by_basis
        .values()
        .map(|runs| Observations::from_runs(runs))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&Observations> = observations.iter().collect();
    let (composites, report) = analyze_bases(&refs, &settings.options)?;
    Ok(Analysis {
        observations,
        composites,
        report,
    })
}

// Map binning for one arm: pixel-aligned over the ROI when the detector is
// known, otherwise spanning the observed coordinates.
fn map_binning(runs: &[&Run], obs: &Observations, arm: Arm, axis: Axis, max_bins: usize) -> Option<Binning> {
    if let Some(det) = obs.detector() {
        return roi_binning(det, arm, axis, max_bins).ok();
    }
    let k = axis.index();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, frames) in runs {
        for f in frames {
            for e in f.arm_events(arm) {
                lo = lo.min(e.coord[k]);
                hi = hi.max(e.coord[k]);
            }
        }
    }
    if !(hi > lo) {
        return None;
    }
    // Widen by half a bin so the extreme values fall inside.
    let pad = 0.5 * (hi - lo) / max_bins as f64;
    Binning::span(lo - pad, hi + pad, max_bins).ok()
}

fn map_table(obs: &Observations, axis: Axis, x: &Binning, y: &Binning, shift: usize) -> Result<Table, CliError> {
    let map = net_map(obs, axis, x, y, shift)?;
    let unit = coordinate_unit(obs.basis());
    let mut t = Table::new([
        format!("{axis}_stokes_{unit}"),
        format!("{axis}_anti_stokes_{unit}"),
        "net".to_string(),
        "variance".to_string(),
    ]);
    t.comments.push(format!(
        "background-subtracted coincidence map; basis={} axis={axis} shift={shift} frames={}",
        obs.basis(),
        obs.frame_count()
    ));
    for i in 0..x.bins {
        for j in 0..y.bins {
            let idx = i * y.bins + j;
            t.push(vec![
                x.center(i).into(),
                y.center(j).into(),
                map.counts[idx].into(),
                map.variance[idx].into(),
            ]);
        }
    }
    Ok(t)
}

fn composite_table(r: &CompositeResult) -> Table {
    let basis = r.kind.basis();
    let mut t = Table::new([
        format!("{}_{}", r.kind, coordinate_unit(basis)),
        "net".to_string(),
        "variance".to_string(),
        "fit".to_string(),
    ]);
    t.comments.push(format!("composite={} axis={} basis={basis}", r.kind, r.axis));
    match &r.fit {
        Ok(f) => {
            t.comments.push(format!(
                "fit converged={} amplitude={} amplitude_err={} mean={} mean_err={} variance={} variance_err={} offset={} offset_err={} chi_squared={} dof={}",
                f.converged,
                f.amplitude,
                f.amplitude_err(),
                f.mean,
                f.mean_err(),
                f.variance,
                f.variance_err(),
                f.offset,
                f.offset_err(),
                f.chi_squared,
                f.dof
            ));
            if let Some(v) = r.variance {
                t.comments.push(format!(
                    "pixel_term={} corrected_variance={} corrected_variance_err={}",
                    r.pixel_term, v.value, v.sigma
                ));
            }
        }
        Err(e) => t.comments.push(format!("fit failed: {e}")),
    }
    let h = &r.histogram;
    for (i, u) in h.binning.centers().into_iter().enumerate() {
        let fit = r.fit.as_ref().ok().map(|f| f.eval(u));
        t.push(vec![u.into(), h.counts[i].into(), h.variance[i].into(), fit.into()]);
    }
    t
}

fn composite_json(r: &CompositeResult) -> Value {
    let mut m = Map::new();
    m.insert("basis".into(), json!(r.kind.basis()));
    m.insert("axis".into(), json!(r.axis.label()));
    m.insert("kind".into(), json!(r.kind));
    m.insert("converged".into(), json!(r.converged()));
    match &r.fit {
        Ok(f) => {
            m.insert(
                "fit".into(),
                json!({
                    "amplitude": f.amplitude,
                    "amplitude_err": f.amplitude_err(),
                    "mean": f.mean,
                    "mean_err": f.mean_err(),
                    "variance": f.variance,
                    "variance_err": f.variance_err(),
                    "offset": f.offset,
                    "offset_err": f.offset_err(),
                    "chi_squared": f.chi_squared,
                    "dof": f.dof,
                    "iterations": f.iterations,
                }),
            );
        }
        Err(e) => {
            m.insert("fit_error".into(), json!(e.to_string()));
        }
    }
    m.insert("pixel_term".into(), json!(r.pixel_term));
    if let Some(v) = r.variance {
        m.insert("variance".into(), json!(v));
    }
    Value::Object(m)
}

/// Writes `report.json`, `map_<basis>_<axis>.csv` and
/// `composite_<kind>_<axis>.csv` into `out`.
pub fn run(paths: &[PathBuf], settings: &AnalysisSettings, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let runs = paths.iter().map(|p| read_run(p)).collect::<Result<Vec<_>, _>>()?;
    let inputs: Vec<Value> = paths
        .iter()
        .zip(&runs)
        .map(|(p, (m, _))| {
            json!({
                "path": p.to_string_lossy(),
                "basis": m.basis,
                "tau": m.tau,
                "frames": m.frame_count,
            })
        })
        .collect();
    let shift = settings.options.shift;
    // Kept per basis for data-driven map ranges.
    let mut runs_by_basis: BTreeMap<Basis, Vec<Run>> = BTreeMap::new();
    for run in &runs {
        runs_by_basis.entry(run.0.basis).or_default().push(run.clone());
    }
    let analysis = analyze_runs(runs, settings)?;

    create_dir(out)?;
    let mut written = Vec::new();
    let mut coincidences = Map::new();
    for obs in &analysis.observations {
        let basis = obs.basis();
        let net = net_coincidences(obs, shift)?;
        coincidences.insert(
            basis.label().into(),
            json!({
                "frames": obs.frame_count(),
                "raw": obs.pair_count(None),
                "accidental": obs.pair_count(Some(shift)),
                "net": net,
            }),
        );
        let basis_runs: Vec<&Run> = runs_by_basis[&basis].iter().collect();
        for axis in Axis::BOTH {
            let x = map_binning(&basis_runs, obs, Arm::Stokes, axis, settings.map_bins);
            let y = map_binning(&basis_runs, obs, Arm::AntiStokes, axis, settings.map_bins);
            if let (Some(x), Some(y)) = (x, y) {
                let path = out.join(format!("map_{basis}_{axis}.csv"));
                map_table(obs, axis, &x, &y, shift)?.write(&path)?;
                written.push(path);
            }
        }
    }
    for r in &analysis.composites {
        let path = out.join(format!("composite_{}_{}.csv", r.kind, r.axis));
        composite_table(r).write(&path)?;
        written.push(path);
    }

    let mut report = match serde_json::to_value(&analysis.report) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("report serializes to an object"),
    };
    report.insert("schema_version".into(), json!(1));
    report.insert("inputs".into(), Value::Array(inputs));
    report.insert(
        "analysis".into(),
        json!({
            "bins": settings.options.bins,
            "span_sigmas": settings.options.span_sigmas,
            "shift": shift,
            "pixel_correction": settings.options.pixel_correction,
            "map_bins": settings.map_bins,
        }),
    );
    report.insert("coincidences".into(), Value::Object(coincidences));
    report.insert(
        "composites".into(),
        Value::Array(analysis.composites.iter().map(composite_json).collect()),
    );
    report.insert(
        "all_converged".into(),
        json!(analysis.composites.iter().all(CompositeResult::converged)),
    );
    let path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&Value::Object(report)).expect("report is valid JSON");
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    written.push(path);
    Ok(written)
}
