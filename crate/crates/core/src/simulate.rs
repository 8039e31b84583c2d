//! Monte Carlo generation of detection frames.
//!
//! Each frame is one generate/store/retrieve cycle. Its randomness comes only
//! from `(master_seed, frame_id)`: a ChaCha8 stream keyed by the seed and
//! selected by the frame id. Frames can therefore be produced in any order or
//! on any number of threads and still assemble into the same stream.

use crate::model::{
    covariance_momentum, covariance_position, entanglement_dimension, pair_rate_factor, Basis,
    DiffusionModel, EprGaussianState, ModelError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::io;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid detector config `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("covariance is not positive definite (var_a={var_a}, var_b={var_b}, cov={cov})")]
    Covariance { var_a: f64, var_b: f64, cov: f64 },
    #[error("event sink failed at frame {frame_id}: {source}")]
    Sink { frame_id: u64, source: io::Error },
}

/// Which photon an event belongs to: the write-out Stokes photon or the
/// anti-Stokes photon read out from the spin wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "S")]
    Stokes,
    #[serde(rename = "AS")]
    AntiStokes,
}

impl Arm {
    pub fn token(self) -> &'static str {
        match self {
            Arm::Stokes => "S",
            Arm::AntiStokes => "AS",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "S" => Some(Arm::Stokes),
            "AS" => Some(Arm::AntiStokes),
            _ => None,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Rectangular region of interest on the camera, in basis units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Roi {
    pub fn symmetric(half_width: f64) -> Self {
        Self {
            min: [-half_width; 2],
            max: [half_width; 2],
        }
    }

    pub fn contains(&self, coord: [f64; 2]) -> bool {
        (0..2).all(|k| coord[k] >= self.min[k] && coord[k] <= self.max[k])
    }

    /// Number of whole pixels along `axis`.
    pub fn pixels(&self, axis: usize, pitch: f64) -> i64 {
        ((self.max[axis] - self.min[axis]) / pitch * (1.0 + 1e-12)).floor() as i64
    }

    /// Centre of the pixel hit by `coord`, or `None` when it misses the ROI.
    pub fn quantize(&self, coord: [f64; 2], pitch: f64) -> Option<[f64; 2]> {
        let mut out = [0.0; 2];
        for k in 0..2 {
            let idx = ((coord[k] - self.min[k]) / pitch).floor();
            if !(idx >= 0.0) || idx as i64 >= self.pixels(k, pitch) {
                return None;
            }
            out[k] = self.min[k] + (idx + 0.5) * pitch;
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub basis: Basis,
    /// mm in the near field, ħ/mm in the far field.
    pub pixel_pitch: f64,
    pub roi_stokes: Roi,
    pub roi_anti_stokes: Roi,
    pub eff_photon: f64,
    pub eff_spinwave_readout: f64,
    /// Mean spurious events per frame per arm.
    pub dark_rate: f64,
    pub pairs_per_mode: f64,
    pub mode_count: u32,
}

impl DetectorConfig {
    /// Detector defaults used by the `table1-demo` configuration.
    pub fn table1_demo(basis: Basis, mode_count: u32) -> Self {
        let (pitch, half) = match basis {
            Basis::Position => (0.02, 1.5),
            Basis::Momentum => (0.1, 7.5),
        };
        Self {
            basis,
            pixel_pitch: pitch,
            roi_stokes: Roi::symmetric(half),
            roi_anti_stokes: Roi::symmetric(half),
            eff_photon: 0.6,
            eff_spinwave_readout: 0.6,
            dark_rate: 0.1,
            pairs_per_mode: 0.05,
            mode_count,
        }
    }

    pub fn roi(&self, arm: Arm) -> &Roi {
        match arm {
            Arm::Stokes => &self.roi_stokes,
            Arm::AntiStokes => &self.roi_anti_stokes,
        }
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |field, reason: &str| {
            Err(SimulateError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.pixel_pitch.is_finite() && self.pixel_pitch > 0.0) {
            return bad("pixel_pitch", "must be positive");
        }
        for (field, roi) in [("roi_stokes", &self.roi_stokes), ("roi_anti_stokes", &self.roi_anti_stokes)] {
            let ordered = (0..2).all(|k| {
                roi.min[k].is_finite() && roi.max[k].is_finite() && roi.min[k] < roi.max[k]
            });
            if !ordered {
                return bad(field, "min must be below max on both axes");
            }
            if (0..2).any(|k| roi.pixels(k, self.pixel_pitch) < 1) {
                return bad(field, "narrower than one pixel");
            }
        }
        for (field, eff) in [
            ("eff_photon", self.eff_photon),
            ("eff_spinwave_readout", self.eff_spinwave_readout),
        ] {
            if !(0.0..=1.0).contains(&eff) {
                return bad(field, "must lie in [0, 1]");
            }
        }
        if !(self.dark_rate.is_finite() && self.dark_rate >= 0.0) {
            return bad("dark_rate", "must be non-negative");
        }
        if !(self.pairs_per_mode.is_finite() && self.pairs_per_mode >= 0.0) {
            return bad("pairs_per_mode", "must be non-negative");
        }
        if self.mode_count == 0 {
            return bad("mode_count", "must be positive");
        }
        Ok(())
    }
}

/// Mode count used when none is configured: the entanglement dimension at
/// τ = 0, rounded.
pub fn default_mode_count(state: &EprGaussianState) -> Result<u32, ModelError> {
    let dim = entanglement_dimension(state, &DiffusionModel::none(), 0.0)?;
    Ok(dim.round().max(1.0) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub arm: Arm,
    pub coord: [f64; 2],
}

impl DetectionEvent {
    /// Canonical ordering: arm, then u, then v.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.arm
            .cmp(&other.arm)
            .then(self.coord[0].total_cmp(&other.coord[0]))
            .then(self.coord[1].total_cmp(&other.coord[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: u64,
    pub events: Vec<DetectionEvent>,
}

impl Frame {
    pub fn new(frame_id: u64) -> Self {
        Self {
            frame_id,
            events: Vec::new(),
        }
    }

    pub fn canonicalize(&mut self) {
        self.events.sort_by(DetectionEvent::canonical_cmp);
    }

    pub fn arm_events(&self, arm: Arm) -> impl Iterator<Item = &DetectionEvent> + '_ {
        self.events.iter().filter(move |e| e.arm == arm)
    }

    pub fn count(&self, arm: Arm) -> usize {
        self.arm_events(arm).count()
    }
}

/// One block of a delay schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauBlock {
    pub tau: f64,
    pub frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunBlock {
    pub tau: f64,
    pub first_frame_id: u64,
    pub frames: Vec<Frame>,
}

/// Random stream for one frame.
pub fn frame_rng(master_seed: u64, frame_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(frame_id);
    rng
}

/// Draws one (photon, spin-wave) coordinate pair from the model density in
/// `basis`. Axes x and y are independent.
pub fn sample_pair<R: Rng + ?Sized>(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
    basis: Basis,
    rng: &mut R,
) -> Result<([f64; 2], [f64; 2]), SimulateError> {
    let factor = pair_factor(state, diff, tau, basis)?;
    Ok(draw_pair(&factor, rng))
}

fn pair_factor(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
    basis: Basis,
) -> Result<[[f64; 2]; 2], SimulateError> {
    let cov = match basis {
        Basis::Position => covariance_position(state, diff, tau)?,
        Basis::Momentum => covariance_momentum(state, diff, tau)?,
    };
    cov.cholesky().ok_or(SimulateError::Covariance {
        var_a: cov.var_a,
        var_b: cov.var_b,
        cov: cov.cov_ab,
    })
}

fn draw_pair<R: Rng + ?Sized>(l: &[[f64; 2]; 2], rng: &mut R) -> ([f64; 2], [f64; 2]) {
    let mut photon = [0.0; 2];
    let mut spin = [0.0; 2];
    for k in 0..2 {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        photon[k] = l[0][0] * z0;
        spin[k] = l[1][0] * z0 + l[1][1] * z1;
    }
    (photon, spin)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // Mean is validated finite and positive, so construction cannot fail.
    let dist = Poisson::new(mean).expect("finite positive Poisson mean");
    dist.sample(rng) as u64
}

/// Precomputed per-delay sampling state; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct FrameGenerator {
    config: DetectorConfig,
    factor: [[f64; 2]; 2],
    mean_pairs: f64,
    master_seed: u64,
}

impl FrameGenerator {
    pub fn new(
        state: &EprGaussianState,
        diff: &DiffusionModel,
        tau: f64,
        config: &DetectorConfig,
        master_seed: u64,
    ) -> Result<Self, SimulateError> {
        config.validate()?;
        let eta = pair_rate_factor(state, diff, tau)?;
        Ok(Self {
            config: config.clone(),
            factor: pair_factor(state, diff, tau, config.basis)?,
            mean_pairs: config.pairs_per_mode * f64::from(config.mode_count) * eta,
            master_seed,
        })
    }

    /// Expected number of generated pairs per frame.
    pub fn mean_pairs(&self) -> f64 {
        self.mean_pairs
    }

    pub fn frame(&self, frame_id: u64) -> Frame {
        let cfg = &self.config;
        let pitch = cfg.pixel_pitch;
        let mut rng = frame_rng(self.master_seed, frame_id);
        let mut frame = Frame::new(frame_id);
        let push = |arm: Arm, coord: [f64; 2], frame: &mut Frame| {
            if let Some(c) = cfg.roi(arm).quantize(coord, pitch) {
                frame.events.push(DetectionEvent { arm, coord: c });
            }
        };

        let pairs = poisson(self.mean_pairs, &mut rng);
        for _ in 0..pairs {
            let (photon, spin) = draw_pair(&self.factor, &mut rng);
            let keep_photon = rng.random_bool(cfg.eff_photon);
            let keep_spin = rng.random_bool(cfg.eff_spinwave_readout);
            if keep_photon {
                push(Arm::Stokes, photon, &mut frame);
            }
            if keep_spin {
                push(Arm::AntiStokes, spin, &mut frame);
            }
        }
        for arm in [Arm::Stokes, Arm::AntiStokes] {
            let roi = *cfg.roi(arm);
            for _ in 0..poisson(cfg.dark_rate, &mut rng) {
                let coord = [
                    roi.min[0] + (roi.max[0] - roi.min[0]) * rng.random::<f64>(),
                    roi.min[1] + (roi.max[1] - roi.min[1]) * rng.random::<f64>(),
                ];
                push(arm, coord, &mut frame);
            }
        }
        frame.canonicalize();
        frame
    }

    /// Frames for a range of ids, generated in parallel, in id order.
    pub fn frames(&self, ids: std::ops::Range<u64>) -> Vec<Frame> {
        ids.into_par_iter().map(|id| self.frame(id)).collect()
    }
}

pub fn generate_frame(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    tau: f64,
    config: &DetectorConfig,
    frame_id: u64,
    master_seed: u64,
) -> Result<Frame, SimulateError> {
    Ok(FrameGenerator::new(state, diff, tau, config, master_seed)?.frame(frame_id))
}

const CHUNK: u64 = 16_384;

/// Generates every block of `schedule` and hands frames to `sink` in frame_id
/// order. Frame ids run consecutively from 0 across blocks. Generation is
/// parallel in chunks; the sink always sees the same sequence.
pub fn run_experiment_with_sink<F>(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    schedule: &[TauBlock],
    config: &DetectorConfig,
    master_seed: u64,
    mut sink: F,
) -> Result<(), SimulateError>
where
    F: FnMut(&TauBlock, &Frame) -> io::Result<()>,
{
    validate_schedule(schedule)?;
    let mut next_id = 0u64;
    for block in schedule {
        let generator = FrameGenerator::new(state, diff, block.tau, config, master_seed)?;
        let end = next_id + block.frames;
        let mut start = next_id;
        while start < end {
            let stop = (start + CHUNK).min(end);
            let frames = generator.frames(start..stop);
            for frame in &frames {
                sink(block, frame).map_err(|source| SimulateError::Sink {
                    frame_id: frame.frame_id,
                    source,
                })?;
            }
            start = stop;
        }
        next_id = end;
    }
    Ok(())
}

pub fn run_experiment(
    state: &EprGaussianState,
    diff: &DiffusionModel,
    schedule: &[TauBlock],
    config: &DetectorConfig,
    master_seed: u64,
) -> Result<Vec<RunBlock>, SimulateError> {
    validate_schedule(schedule)?;
    let mut next_id = 0u64;
    let mut blocks = Vec::with_capacity(schedule.len());
    for block in schedule {
        let generator = FrameGenerator::new(state, diff, block.tau, config, master_seed)?;
        let frames = generator.frames(next_id..next_id + block.frames);
        blocks.push(RunBlock {
            tau: block.tau,
            first_frame_id: next_id,
            frames,
        });
        next_id += block.frames;
    }
    Ok(blocks)
}

fn validate_schedule(schedule: &[TauBlock]) -> Result<(), SimulateError> {
    if schedule.is_empty() {
        return Err(SimulateError::InvalidSchedule("schedule is empty".into()));
    }
    for (i, block) in schedule.iter().enumerate() {
        if !(block.tau.is_finite() && block.tau >= 0.0) {
            return Err(SimulateError::InvalidSchedule(format!("block {i}: delay {} is negative", block.tau)));
        }
        if block.frames == 0 {
            return Err(SimulateError::InvalidSchedule(format!("block {i}: frame count must be positive")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::composite_variances;

    fn s_ref() -> (EprGaussianState, DiffusionModel) {
        (
            EprGaussianState::from_variances(1.0, 0.0400, 0.4878).unwrap(),
            DiffusionModel::new(0.0137, 2.0).unwrap(),
        )
    }

    fn ideal(basis: Basis) -> DetectorConfig {
        DetectorConfig {
            eff_photon: 1.0,
            eff_spinwave_readout: 1.0,
            dark_rate: 0.0,
            mode_count: 12,
            ..DetectorConfig::table1_demo(basis, 12)
        }
    }

    // (mean, standard error) of a sample.
    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn seeded_pairs_are_reproducible() {
        let (s, d) = s_ref();
        let draw = || {
            let mut rng = frame_rng(7, 3);
            (0..16)
                .map(|_| sample_pair(&s, &d, 0.25, Basis::Position, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let (a, b) = (draw(), draw());
        let bits = |v: &Vec<([f64; 2], [f64; 2])>| {
            v.iter()
                .flat_map(|(p, q)| [p[0], p[1], q[0], q[1]])
                .map(f64::to_bits)
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn pair_difference_statistics() {
        let (s, d) = s_ref();
        let mut rng = frame_rng(11, 0);
        let diffs: Vec<f64> = (0..100_000)
            .map(|_| {
                let (p, q) = sample_pair(&s, &d, 3.0, Basis::Position, &mut rng).unwrap();
                p[0] - q[0]
            })
            .collect();
        let (m, se) = mean_se(&diffs);
        assert!(m.abs() < 4.0 * se, "mean {m} se {se}");
        let sq: Vec<f64> = diffs.iter().map(|x| (x - m).powi(2)).collect();
        let (var, var_se) = mean_se(&sq);
        let expected = composite_variances(&s, &d, 3.0).unwrap().var_diff_pos;
        assert!((var - expected).abs() < 3.0 * var_se, "var {var} expected {expected} se {var_se}");
    }

    #[test]
    fn mean_event_count_matches_pair_rate() {
        let (s, d) = s_ref();
        let cfg = ideal(Basis::Position);
        let gen = FrameGenerator::new(&s, &d, 0.0, &cfg, 5).unwrap();
        assert!((gen.mean_pairs() - 0.6).abs() < 1e-12);
        let counts: Vec<f64> = (0..40_000).map(|i| gen.frame(i).count(Arm::Stokes) as f64).collect();
        let (m, se) = mean_se(&counts);
        assert!((m - 0.6).abs() < 4.0 * se, "{m}");
    }

    #[test]
    fn photon_efficiency_thins_only_stokes() {
        let (s, d) = s_ref();
        let cfg = DetectorConfig {
            eff_photon: 0.5,
            ..ideal(Basis::Momentum)
        };
        let gen = FrameGenerator::new(&s, &d, 0.0, &cfg, 9).unwrap();
        let frames: Vec<Frame> = (0..40_000).map(|i| gen.frame(i)).collect();
        let st: Vec<f64> = frames.iter().map(|f| f.count(Arm::Stokes) as f64).collect();
        let ast: Vec<f64> = frames.iter().map(|f| f.count(Arm::AntiStokes) as f64).collect();
        let (ms, ses) = mean_se(&st);
        let (ma, sea) = mean_se(&ast);
        // Far-field ROI clips a small fraction of the momentum marginal.
        let acceptance = ma / 0.6;
        assert!(acceptance > 0.97 && acceptance <= 1.0 + 4.0 * sea / 0.6);
        assert!((ms - 0.3 * acceptance).abs() < 4.0 * ses, "{ms}");
        assert!((ma - 0.6).abs() < 0.6 * 0.03 + 4.0 * sea);
    }

    #[test]
    fn dark_counts_add_uniform_events() {
        let (s, d) = s_ref();
        let cfg = DetectorConfig {
            pairs_per_mode: 0.0,
            dark_rate: 0.2,
            ..ideal(Basis::Position)
        };
        let gen = FrameGenerator::new(&s, &d, 0.0, &cfg, 3).unwrap();
        let frames: Vec<Frame> = (0..50_000).map(|i| gen.frame(i)).collect();
        for arm in [Arm::Stokes, Arm::AntiStokes] {
            let c: Vec<f64> = frames.iter().map(|f| f.count(arm) as f64).collect();
            let (m, se) = mean_se(&c);
            assert!((m - 0.2).abs() < 4.0 * se, "{arm} {m}");
        }
        let xs: Vec<f64> = frames.iter().flat_map(|f| f.events.iter().map(|e| e.coord[0])).collect();
        let (m, se) = mean_se(&xs);
        assert!(m.abs() < 4.0 * se);
    }

    #[test]
    fn coordinates_are_pixel_centres_inside_roi() {
        let (s, d) = s_ref();
        for basis in [Basis::Position, Basis::Momentum] {
            let cfg = DetectorConfig {
                dark_rate: 1.0,
                ..DetectorConfig::table1_demo(basis, 12)
            };
            let gen = FrameGenerator::new(&s, &d, 1.0, &cfg, 1).unwrap();
            for id in 0..2_000 {
                for e in &gen.frame(id).events {
                    let roi = cfg.roi(e.arm);
                    assert!(roi.contains(e.coord));
                    for k in 0..2 {
                        let cell = (e.coord[k] - roi.min[k]) / cfg.pixel_pitch - 0.5;
                        assert!((cell - cell.round()).abs() < 1e-9, "{cell}");
                    }
                }
            }
        }
    }

    #[test]
    fn quantize_edges() {
        let roi = Roi::symmetric(1.0);
        assert_eq!(roi.quantize([1.0, 0.0], 0.5), None);
        assert_eq!(roi.quantize([-1.0, 0.0], 0.5), Some([-0.75, 0.25]));
        assert_eq!(roi.quantize([0.99, -0.01], 0.5), Some([0.75, -0.25]));
        assert_eq!(roi.quantize([-1.01, 0.0], 0.5), None);
    }

    #[test]
    fn schedule_ids_and_determinism() {
        let (s, d) = s_ref();
        let cfg = DetectorConfig::table1_demo(Basis::Position, 12);
        let sched = [TauBlock { tau: 0.25, frames: 10 }];
        let a = run_experiment(&s, &d, &sched, &cfg, 42).unwrap();
        let b = run_experiment(&s, &d, &sched, &cfg, 42).unwrap();
        assert_eq!(a, b);
        let ids: Vec<u64> = a[0].frames.iter().map(|f| f.frame_id).collect();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());

        let multi = [
            TauBlock { tau: 0.25, frames: 5 },
            TauBlock { tau: 3.0, frames: 7 },
        ];
        let blocks = run_experiment(&s, &d, &multi, &cfg, 1).unwrap();
        assert_eq!(blocks[1].first_frame_id, 5);
        assert_eq!(blocks[1].frames.last().unwrap().frame_id, 11);

        let mut streamed = Vec::new();
        run_experiment_with_sink(&s, &d, &multi, &cfg, 1, |_, f| {
            streamed.push(f.clone());
            Ok(())
        })
        .unwrap();
        let collected: Vec<Frame> = blocks.into_iter().flat_map(|b| b.frames).collect();
        assert_eq!(streamed, collected);
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let (s, d) = s_ref();
        let cfg = DetectorConfig::table1_demo(Basis::Momentum, 12);
        let sched = [TauBlock { tau: 1.0, frames: 3_000 }];
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_experiment(&s, &d, &sched, &cfg, 99).unwrap());
        let b = four.install(|| run_experiment(&s, &d, &sched, &cfg, 99).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn sink_errors_carry_frame_id() {
        let (s, d) = s_ref();
        let cfg = DetectorConfig::table1_demo(Basis::Position, 12);
        let sched = [TauBlock { tau: 0.0, frames: 10 }];
        let err = run_experiment_with_sink(&s, &d, &sched, &cfg, 0, |_, f| {
            if f.frame_id == 4 {
                Err(io::Error::other("disk full"))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert!(matches!(err, SimulateError::Sink { frame_id: 4, .. }));
    }

    #[test]
    fn config_validation() {
        let mut cfg = DetectorConfig::table1_demo(Basis::Position, 12);
        assert!(cfg.validate().is_ok());
        cfg.eff_photon = 1.5;
        assert!(matches!(
            cfg.validate(),
            Err(SimulateError::InvalidConfig { field: "eff_photon", .. })
        ));
        let mut cfg = DetectorConfig::table1_demo(Basis::Position, 12);
        cfg.roi_stokes.max[1] = -2.0;
        assert!(cfg.validate().is_err());
        let (s, d) = s_ref();
        assert!(run_experiment(&s, &d, &[], &DetectorConfig::table1_demo(Basis::Position, 12), 0).is_err());
        assert_eq!(default_mode_count(&s).unwrap(), 12);
    }
}
