//! Coincidence counting over frames.
//!
//! Every (Stokes, anti-Stokes) pair of events inside one frame is a raw
//! coincidence. The accidental floor is estimated by pairing the Stokes
//! events of frame `i` with the anti-Stokes events of frame `(i + shift) mod N`,
//! which destroys true pairs but keeps the product of the marginals.
//!
//! Accumulation is parallel over frames into integer histograms, so the
//! result is bit-identical for any thread count or shard split.

use super::histogram::{subtract_background, Binning, CountHistogram1D, CountHistogram2D, Histogram1D, Histogram2D};
use super::AnalysisError;
use crate::events_io::RunMetadata;
use crate::model::Basis;
use crate::simulate::{Arm, DetectorConfig, Frame};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Composite variable built from one Stokes and one anti-Stokes coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeKind {
    PositionDifference,
    MomentumSum,
    PositionSum,
    MomentumDifference,
}

impl CompositeKind {
    pub const ALL: [CompositeKind; 4] = [
        CompositeKind::PositionDifference,
        CompositeKind::MomentumSum,
        CompositeKind::PositionSum,
        CompositeKind::MomentumDifference,
    ];

    pub fn basis(self) -> Basis {
        match self {
            CompositeKind::PositionDifference | CompositeKind::PositionSum => Basis::Position,
            CompositeKind::MomentumSum | CompositeKind::MomentumDifference => Basis::Momentum,
        }
    }

    pub fn is_sum(self) -> bool {
        matches!(self, CompositeKind::MomentumSum | CompositeKind::PositionSum)
    }

    pub fn label(self) -> &'static str {
        match self {
            CompositeKind::PositionDifference => "position_difference",
            CompositeKind::MomentumSum => "momentum_sum",
            CompositeKind::PositionSum => "position_sum",
            CompositeKind::MomentumDifference => "momentum_difference",
        }
    }

    pub fn value(self, stokes: f64, anti_stokes: f64) -> f64 {
        if self.is_sum() {
            stokes + anti_stokes
        } else {
            stokes - anti_stokes
        }
    }
}

impl fmt::Display for CompositeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

// Per-frame coordinates split by arm.
#[derive(Debug, Clone, Default)]
struct SplitFrame {
    stokes: Vec<[f64; 2]>,
    anti_stokes: Vec<[f64; 2]>,
}

/// Frames of a single basis prepared for coincidence counting.
#[derive(Debug, Clone)]
pub struct Observations {
    basis: Basis,
    detector: Option<DetectorConfig>,
    tau: Option<f64>,
    frames: Vec<SplitFrame>,
}

impl Observations {
    pub fn new(basis: Basis, frames: &[Frame]) -> Self {
        let frames = frames
            .iter()
            .map(|f| SplitFrame {
                stokes: f.arm_events(Arm::Stokes).map(|e| e.coord).collect(),
                anti_stokes: f.arm_events(Arm::AntiStokes).map(|e| e.coord).collect(),
            })
            .collect();
        Self {
            basis,
            detector: None,
            tau: None,
            frames,
        }
    }

    pub fn with_detector(mut self, detector: DetectorConfig) -> Self {
        self.detector = Some(detector);
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    /// Concatenates runs in the given order. All runs must share one basis;
    /// the detector is kept only when every run declares the same one, and
    /// the delay only when every run has the same delay.
    pub fn from_runs(runs: &[(RunMetadata, Vec<Frame>)]) -> Result<Self, AnalysisError> {
        let first = runs.first().ok_or(AnalysisError::NoData)?;
        let basis = first.0.basis;
        if let Some((m, _)) = runs.iter().find(|(m, _)| m.basis != basis) {
            return Err(AnalysisError::MixedBasis {
                expected: basis,
                found: m.basis,
            });
        }
        let all: Vec<Frame> = runs.iter().flat_map(|(_, f)| f.iter().cloned()).collect();
        let mut obs = Self::new(basis, &all);
        let det = &first.0.detector;
        if det.is_some() && runs.iter().all(|(m, _)| &m.detector == det) {
            obs.detector = det.clone();
        }
        let tau = first.0.tau;
        if runs.iter().all(|(m, _)| m.tau == tau) {
            obs.tau = Some(tau);
        }
        Ok(obs)
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn detector(&self) -> Option<&DetectorConfig> {
        self.detector.as_ref()
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn event_count(&self, arm: Arm) -> usize {
        self.frames
            .iter()
            .map(|f| match arm {
                Arm::Stokes => f.stokes.len(),
                Arm::AntiStokes => f.anti_stokes.len(),
            })
            .sum()
    }

    fn check_kind(&self, kind: CompositeKind) -> Result<(), AnalysisError> {
        if kind.basis() == self.basis {
            Ok(())
        } else {
            Err(AnalysisError::KindBasisMismatch {
                kind,
                basis: self.basis,
            })
        }
    }

    fn check_shift(&self, shift: usize) -> Result<(), AnalysisError> {
        if shift >= 1 && shift < self.frames.len() {
            Ok(())
        } else {
            Err(AnalysisError::Shift {
                shift,
                frames: self.frames.len(),
            })
        }
    }

    // Visits (stokes frame, anti-stokes frame) index pairs: same frame when
    // `shift` is None, cyclically shifted otherwise. Accumulates in parallel.
    fn accumulate<A, F>(&self, shift: Option<usize>, empty: A, visit: F) -> A
    where
        A: Clone + Send + Sync,
        F: Fn(&mut A, &[[f64; 2]], &[[f64; 2]]) + Sync,
        A: Merge,
    {
        let n = self.frames.len();
        (0..n)
            .into_par_iter()
            .fold(
                || empty.clone(),
                |mut acc, i| {
                    let j = shift.map_or(i, |s| (i + s) % n);
                    visit(&mut acc, &self.frames[i].stokes, &self.frames[j].anti_stokes);
                    acc
                },
            )
            .reduce(|| empty.clone(), |a, b| a.merge_with(&b))
    }

    /// Raw all-pairs coincidence count, same-frame or shifted.
    pub fn pair_count(&self, shift: Option<usize>) -> u64 {
        let n = self.frames.len();
        if n == 0 {
            return 0;
        }
        self.accumulate(shift, 0u64, |acc, s, a| *acc += (s.len() * a.len()) as u64)
    }

    fn count_map(
        &self,
        axis: Axis,
        x: &Binning,
        y: &Binning,
        shift: Option<usize>,
    ) -> CountHistogram2D {
        let k = axis.index();
        self.accumulate(shift, CountHistogram2D::new(x, y), |acc, s, a| {
            for es in s {
                for ea in a {
                    acc.fill(es[k], ea[k]);
                }
            }
        })
    }

    fn count_composite(&self, axis: Axis, kind: CompositeKind, binning: &Binning, shift: Option<usize>) -> CountHistogram1D {
        let k = axis.index();
        self.accumulate(shift, CountHistogram1D::new(binning), |acc, s, a| {
            for es in s {
                for ea in a {
                    acc.fill(kind.value(es[k], ea[k]));
                }
            }
        })
    }

    /// Signed first and second moments of the composite over same-frame
    /// pairs minus shifted pairs. Sequential so the sums are reproducible.
    pub fn net_moments(&self, axis: Axis, kind: CompositeKind, shift: usize) -> Result<NetMoments, AnalysisError> {
        self.check_kind(kind)?;
        self.check_shift(shift)?;
        let k = axis.index();
        let n = self.frames.len();
        let (mut w, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for (j, sign) in [(i, 1.0), ((i + shift) % n, -1.0)] {
                for es in &self.frames[i].stokes {
                    for ea in &self.frames[j].anti_stokes {
                        let c = kind.value(es[k], ea[k]);
                        w += sign;
                        s1 += sign * c;
                        s2 += sign * c * c;
                    }
                }
            }
        }
        Ok(NetMoments { weight: w, sum: s1, sum_sq: s2 })
    }
}

trait Merge {
    fn merge_with(self, other: &Self) -> Self;
}

impl Merge for u64 {
    fn merge_with(self, other: &Self) -> Self {
        self + other
    }
}

impl Merge for CountHistogram1D {
    fn merge_with(self, other: &Self) -> Self {
        self.merge(other)
    }
}

impl Merge for CountHistogram2D {
    fn merge_with(self, other: &Self) -> Self {
        self.merge(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetMoments {
    pub weight: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl NetMoments {
    /// (mean, variance) when the net weight and variance are positive.
    pub fn mean_variance(&self) -> Option<(f64, f64)> {
        if !(self.weight > 0.0) {
            return None;
        }
        let mean = self.sum / self.weight;
        let var = self.sum_sq / self.weight - mean * mean;
        (var > 0.0).then_some((mean, var))
    }
}

/// Raw same-frame coincidences; per-bin variance equals the raw count.
pub fn joint_map(obs: &Observations, axis: Axis, x: &Binning, y: &Binning) -> Histogram2D {
    obs.count_map(axis, x, y, None).to_histogram()
}

/// Shifted-frame pairing estimating the accidental coincidence floor.
pub fn accidental_map(
    obs: &Observations,
    axis: Axis,
    x: &Binning,
    y: &Binning,
    shift: usize,
) -> Result<Histogram2D, AnalysisError> {
    obs.check_shift(shift)?;
    Ok(obs.count_map(axis, x, y, Some(shift)).to_histogram())
}

/// Background-subtracted coincidence map.
pub fn net_map(obs: &Observations, axis: Axis, x: &Binning, y: &Binning, shift: usize) -> Result<Histogram2D, AnalysisError> {
    let background = accidental_map(obs, axis, x, y, shift)?;
    subtract_background(&joint_map(obs, axis, x, y), &background)
}

/// Background-subtracted histogram of a composite variable.
pub fn composite_histogram(
    obs: &Observations,
    axis: Axis,
    kind: CompositeKind,
    binning: &Binning,
    shift: usize,
) -> Result<Histogram1D, AnalysisError> {
    obs.check_kind(kind)?;
    obs.check_shift(shift)?;
    let signal = obs.count_composite(axis, kind, binning, None).to_histogram();
    let background = obs.count_composite(axis, kind, binning, Some(shift)).to_histogram();
    subtract_background(&signal, &background)
}

/// Offset and spacing of the lattice of composite values formed from two
/// pixel-centre coordinates.
pub fn composite_lattice(detector: &DetectorConfig, axis: Axis, kind: CompositeKind) -> (f64, f64) {
    let k = axis.index();
    let p = detector.pixel_pitch;
    let (s, a) = (detector.roi_stokes.min[k], detector.roi_anti_stokes.min[k]);
    let offset = if kind.is_sum() { s + a + p } else { s - a };
    (offset.rem_euclid(p), p)
}

/// `bins` bins of roughly `2·half_span / bins` width centred on `center`.
/// With a known detector the width is a whole number of pixels and the
/// edges fall halfway between composite lattice values.
pub fn composite_binning(
    detector: Option<&DetectorConfig>,
    axis: Axis,
    kind: CompositeKind,
    center: f64,
    half_span: f64,
    bins: usize,
) -> Result<Binning, AnalysisError> {
    let target = 2.0 * half_span / bins as f64;
    match detector {
        Some(det) => {
            let (offset, pitch) = composite_lattice(det, axis, kind);
            let width = (target / pitch).round().max(1.0) * pitch;
            let lo_target = center - 0.5 * width * bins as f64;
            let j = ((lo_target - offset) / pitch - 0.5).round();
            Binning::new(offset + (j + 0.5) * pitch, width, bins)
        }
        None => Binning::new(center - half_span, target, bins),
    }
}

/// Pixel-aligned binning of one arm's ROI with at most `max_bins` bins.
pub fn roi_binning(detector: &DetectorConfig, arm: Arm, axis: Axis, max_bins: usize) -> Result<Binning, AnalysisError> {
    let k = axis.index();
    let roi = detector.roi(arm);
    let pixels = roi.pixels(k, detector.pixel_pitch).max(1) as usize;
    let per_bin = pixels.div_ceil(max_bins.max(1));
    let bins = pixels.div_ceil(per_bin);
    Binning::new(roi.min[k], per_bin as f64 * detector.pixel_pitch, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::DetectionEvent;

    fn frame(id: u64, s: &[f64], a: &[f64]) -> Frame {
        let mut f = Frame::new(id);
        f.events.extend(s.iter().map(|&u| DetectionEvent { arm: Arm::Stokes, coord: [u, 0.0] }));
        f.events.extend(a.iter().map(|&u| DetectionEvent { arm: Arm::AntiStokes, coord: [u, 0.0] }));
        f
    }

    fn grid() -> Binning {
        Binning::span(-1.0, 1.0, 20).unwrap()
    }

    #[test]
    fn single_pair_lands_on_diagonal() {
        let obs = Observations::new(Basis::Position, &[frame(0, &[0.15], &[0.15])]);
        let m = joint_map(&obs, Axis::X, &grid(), &grid());
        assert_eq!(m.total(), 1.0);
        assert_eq!(m.get(11, 11), 1.0);
        assert_eq!(m.variance[11 * 20 + 11], 1.0);
    }

    #[test]
    fn all_pairs_rule() {
        let obs = Observations::new(Basis::Position, &[frame(0, &[0.1, -0.3], &[0.2])]);
        assert_eq!(joint_map(&obs, Axis::X, &grid(), &grid()).total(), 2.0);
        assert_eq!(obs.pair_count(None), 2);
    }

    #[test]
    fn lone_event_has_no_accidentals() {
        let frames = [frame(0, &[0.1], &[]), frame(1, &[], &[]), frame(2, &[], &[])];
        let obs = Observations::new(Basis::Position, &frames);
        let m = accidental_map(&obs, Axis::X, &grid(), &grid(), 1).unwrap();
        assert_eq!(m.total(), 0.0);
    }

    #[test]
    fn accidental_uses_shifted_frames() {
        let frames = [frame(0, &[0.1], &[0.5]), frame(1, &[0.3], &[-0.5]), frame(2, &[], &[0.7])];
        let obs = Observations::new(Basis::Position, &frames);
        let m = accidental_map(&obs, Axis::X, &grid(), &grid(), 1).unwrap();
        // S(0)×AS(1), S(1)×AS(2), S(2)×AS(0)
        assert_eq!(m.total(), 2.0);
        let bx = grid();
        assert_eq!(m.get(bx.index(0.1).unwrap(), bx.index(-0.5).unwrap()), 1.0);
        assert_eq!(m.get(bx.index(0.3).unwrap(), bx.index(0.7).unwrap()), 1.0);
        assert!(accidental_map(&obs, Axis::X, &grid(), &grid(), 3).is_err());
        assert!(accidental_map(&obs, Axis::X, &grid(), &grid(), 0).is_err());
    }

    #[test]
    fn composite_difference_bin() {
        let frames = [frame(0, &[0.3], &[0.1]), frame(1, &[], &[])];
        let obs = Observations::new(Basis::Position, &frames);
        let b = Binning::span(-1.0, 1.0, 10).unwrap();
        let h = composite_histogram(&obs, Axis::X, CompositeKind::PositionDifference, &b, 1).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c != 0.0).count(), 1);
        assert_eq!(h.counts[b.index(0.2).unwrap()], 1.0);
    }

    #[test]
    fn kind_must_match_basis() {
        let obs = Observations::new(Basis::Momentum, &[frame(0, &[0.1], &[0.1]), frame(1, &[], &[])]);
        let err = composite_histogram(&obs, Axis::X, CompositeKind::PositionDifference, &grid(), 1).unwrap_err();
        assert!(matches!(err, AnalysisError::KindBasisMismatch { .. }));
    }

    #[test]
    fn mixed_runs_are_rejected() {
        let near = RunMetadata::new(Basis::Position, 0.0, 0, 1);
        let far = RunMetadata::new(Basis::Momentum, 0.0, 1, 1);
        let runs = vec![(near, vec![frame(0, &[], &[])]), (far, vec![frame(1, &[], &[])])];
        assert!(matches!(Observations::from_runs(&runs), Err(AnalysisError::MixedBasis { .. })));
    }

    #[test]
    fn lattice_aligned_binning() {
        let det = DetectorConfig::table1_demo(Basis::Position, 12);
        let b = composite_binning(Some(&det), Axis::X, CompositeKind::PositionDifference, 0.003, 0.8, 40).unwrap();
        assert!((b.width - 0.04).abs() < 1e-15);
        // Lattice values k·0.02 sit half a pixel away from every edge.
        for i in 0..=b.bins {
            let cell = b.edge(i) / 0.02;
            assert!(((cell - cell.floor()) - 0.5).abs() < 1e-9, "{}", b.edge(i));
        }
        let sum = composite_binning(Some(&det), Axis::X, CompositeKind::PositionSum, 0.0, 2.0, 40).unwrap();
        for i in 0..=sum.bins {
            let cell = sum.edge(i) / 0.02;
            assert!(((cell - cell.floor()) - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn roi_binning_covers_pixels() {
        let det = DetectorConfig::table1_demo(Basis::Position, 12);
        let b = roi_binning(&det, Arm::Stokes, Axis::X, 60).unwrap();
        assert_eq!(b.bins, 50);
        assert!((b.width - 0.06).abs() < 1e-15);
        assert!((b.hi() - 1.5).abs() < 1e-12);
    }
}
