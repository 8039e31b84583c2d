//! `simulate`: stream frames to one events file per delay and basis.

use super::events_file_name;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::create_dir;
use eprsim_core::events_io::{EventWriter, EventsError, GroundTruth, RunMetadata};
use eprsim_core::simulate::{run_experiment_with_sink, SimulateError, TauBlock};
use eprsim_core::Basis;
use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;

/// Frame id ranges follow the schedule order, consecutive from 0 within a
/// basis, so files of one basis never share ids.
pub fn run(cfg: &RunConfig, bases: &[Basis]) -> Result<Vec<PathBuf>, CliError> {
    create_dir(&cfg.output_dir)?;
    let schedule: Vec<TauBlock> = cfg
        .schedule
        .tau
        .iter()
        .map(|&tau| TauBlock {
            tau,
            frames: cfg.schedule.frames,
        })
        .collect();
    let mut written = Vec::new();
    for &basis in bases {
        written.extend(simulate_basis(cfg, basis, &schedule)?);
    }
    Ok(written)
}

struct OpenFile {
    path: PathBuf,
    end: u64,
    writer: EventWriter<BufWriter<File>>,
}

fn to_io(e: EventsError) -> io::Error {
    match e {
        EventsError::Io(e) => e,
        other => io::Error::other(other.to_string()),
    }
}

fn simulate_basis(cfg: &RunConfig, basis: Basis, schedule: &[TauBlock]) -> Result<Vec<PathBuf>, CliError> {
    let detector = cfg.detector(basis);
    let seed = cfg.basis_seed(basis);
    let mut written = Vec::new();
    let mut current: Option<OpenFile> = None;
    let mut next_first = 0u64;
    // Remembers which path failed so the error can name it.
    let mut failed_path: Option<PathBuf> = None;

    let result = run_experiment_with_sink(&cfg.state, &cfg.diffusion, schedule, detector, seed, |block, frame| {
        if current.as_ref().is_none_or(|f| frame.frame_id >= f.end) {
            if let Some(done) = current.take() {
                failed_path = Some(done.path.clone());
                done.writer.finish().map_err(to_io)?;
                written.push(done.path);
            }
            let path = cfg.output_dir.join(events_file_name(basis, block.tau));
            failed_path = Some(path.clone());
            let mut meta = RunMetadata::new(basis, block.tau, next_first, block.frames);
            meta.master_seed = Some(seed);
            meta.detector = Some(detector.clone());
            meta.ground_truth = Some(GroundTruth {
                state: cfg.state,
                diffusion: cfg.diffusion,
            });
            meta.config = Some(cfg.document.clone());
            let file = BufWriter::new(File::create(&path)?);
            let writer = EventWriter::new(file, &meta).map_err(to_io)?;
            current = Some(OpenFile {
                path,
                end: next_first + block.frames,
                writer,
            });
            next_first += block.frames;
        }
        let open = current.as_mut().expect("a file is open");
        failed_path = Some(open.path.clone());
        open.writer.write_frame(frame).map_err(to_io)
    });
    match result {
        Ok(()) => {}
        Err(SimulateError::Sink { source, .. }) => {
            let path = failed_path.unwrap_or_else(|| cfg.output_dir.clone());
            return Err(CliError::output(&path, source));
        }
        Err(e) => return Err(CliError::config("", e.to_string())),
    }
    if let Some(done) = current.take() {
        let path = done.path.clone();
        done.writer.finish().map_err(|e| CliError::output(&path, to_io(e)))?;
        written.push(done.path);
    }
    Ok(written)
}
