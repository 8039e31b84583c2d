//! Uniform-bin histograms with signed counts and per-bin variances.
//!
//! Raw coincidence counting goes through [`CountHistogram1D`] and
//! [`CountHistogram2D`], which hold integer counts so that partial results
//! merge bit-exactly in any order. They convert to the real-valued
//! [`Histogram1D`] / [`Histogram2D`] with Poisson variances, where background
//! subtraction may drive counts negative.

use super::AnalysisError;
use serde::{Deserialize, Serialize};

/// `bins` uniform bins starting at `lo`, each `width` wide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lo: f64,
    pub width: f64,
    pub bins: usize,
}

impl Binning {
    pub fn new(lo: f64, width: f64, bins: usize) -> Result<Self, AnalysisError> {
        if !(lo.is_finite() && width.is_finite() && width > 0.0 && bins > 0) {
            return Err(AnalysisError::Binning(format!(
                "lo={lo} width={width} bins={bins}"
            )));
        }
        Ok(Self { lo, width, bins })
    }

    pub fn span(lo: f64, hi: f64, bins: usize) -> Result<Self, AnalysisError> {
        if !(hi > lo) || bins == 0 {
            return Err(AnalysisError::Binning(format!("empty range [{lo}, {hi}]")));
        }
        Self::new(lo, (hi - lo) / bins as f64, bins)
    }

    pub fn hi(&self) -> f64 {
        self.edge(self.bins)
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.width
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|i| self.edge(i)).collect()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.center(i)).collect()
    }

    pub fn index(&self, x: f64) -> Option<usize> {
        let t = ((x - self.lo) / self.width).floor();
        if t >= 0.0 && t < self.bins as f64 {
            Some(t as usize)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountHistogram1D {
    binning_bits: (u64, u64, usize),
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountHistogram2D {
    x_bits: (u64, u64, usize),
    y_bits: (u64, u64, usize),
    pub counts: Vec<u64>,
}

fn bits(b: &Binning) -> (u64, u64, usize) {
    (b.lo.to_bits(), b.width.to_bits(), b.bins)
}

fn from_bits(b: (u64, u64, usize)) -> Binning {
    Binning {
        lo: f64::from_bits(b.0),
        width: f64::from_bits(b.1),
        bins: b.2,
    }
}

impl CountHistogram1D {
    pub fn new(binning: &Binning) -> Self {
        Self {
            binning_bits: bits(binning),
            counts: vec![0; binning.bins],
        }
    }

    pub fn binning(&self) -> Binning {
        from_bits(self.binning_bits)
    }

    pub fn fill(&mut self, x: f64) {
        if let Some(i) = self.binning().index(x) {
            self.counts[i] += 1;
        }
    }

    /// Adds `other` in place. Panics on mismatched binning, which only
    /// arises from accumulators built for different histograms.
    pub fn merge(mut self, other: &Self) -> Self {
        assert_eq!(self.binning_bits, other.binning_bits, "merging histograms with different binning");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_histogram(&self) -> Histogram1D {
        let counts: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        Histogram1D {
            binning: self.binning(),
            variance: counts.clone(),
            counts,
        }
    }
}

impl CountHistogram2D {
    pub fn new(x: &Binning, y: &Binning) -> Self {
        Self {
            x_bits: bits(x),
            y_bits: bits(y),
            counts: vec![0; x.bins * y.bins],
        }
    }

    pub fn x_binning(&self) -> Binning {
        from_bits(self.x_bits)
    }

    pub fn y_binning(&self) -> Binning {
        from_bits(self.y_bits)
    }

    pub fn fill(&mut self, x: f64, y: f64) {
        let (bx, by) = (self.x_binning(), self.y_binning());
        if let (Some(i), Some(j)) = (bx.index(x), by.index(y)) {
            self.counts[i * by.bins + j] += 1;
        }
    }

    pub fn merge(mut self, other: &Self) -> Self {
        assert!(
            self.x_bits == other.x_bits && self.y_bits == other.y_bits,
            "merging maps with different binning"
        );
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_histogram(&self) -> Histogram2D {
        let counts: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        Histogram2D {
            x_binning: self.x_binning(),
            y_binning: self.y_binning(),
            variance: counts.clone(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub binning: Binning,
    pub counts: Vec<f64>,
    pub variance: Vec<f64>,
}

impl Histogram1D {
    pub fn zeros(binning: Binning) -> Self {
        Self {
            binning,
            counts: vec![0.0; binning.bins],
            variance: vec![0.0; binning.bins],
        }
    }

    /// Builds a histogram from explicit counts with Poisson variances.
    pub fn from_counts(binning: Binning, counts: Vec<f64>) -> Result<Self, AnalysisError> {
        if counts.len() != binning.bins {
            return Err(AnalysisError::Binning(format!(
                "{} counts for {} bins",
                counts.len(),
                binning.bins
            )));
        }
        let variance = counts.iter().map(|c| c.abs()).collect();
        Ok(Self {
            binning,
            counts,
            variance,
        })
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn total_variance(&self) -> f64 {
        self.variance.iter().sum()
    }

    pub fn add(&self, other: &Self) -> Result<Self, AnalysisError> {
        same_binning(&self.binning, &other.binning)?;
        Ok(Self {
            binning: self.binning,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            variance: self.variance.iter().zip(&other.variance).map(|(a, b)| a + b).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub x_binning: Binning,
    pub y_binning: Binning,
    /// Row-major in x: index `i * y_bins + j`.
    pub counts: Vec<f64>,
    pub variance: Vec<f64>,
}

impl Histogram2D {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.y_binning.bins + j]
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn add(&self, other: &Self) -> Result<Self, AnalysisError> {
        same_binning(&self.x_binning, &other.x_binning)?;
        same_binning(&self.y_binning, &other.y_binning)?;
        Ok(Self {
            x_binning: self.x_binning,
            y_binning: self.y_binning,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            variance: self.variance.iter().zip(&other.variance).map(|(a, b)| a + b).collect(),
        })
    }

    /// Pearson correlation of the bin-centre coordinates weighted by the
    /// (possibly signed) counts.
    pub fn correlation(&self) -> f64 {
        let (bx, by) = (self.x_binning, self.y_binning);
        let (mut w, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for i in 0..bx.bins {
            for j in 0..by.bins {
                let c = self.get(i, j);
                w += c;
                sx += c * bx.center(i);
                sy += c * by.center(j);
            }
        }
        let (mx, my) = (sx / w, sy / w);
        let (mut vxx, mut vyy, mut vxy) = (0.0, 0.0, 0.0);
        for i in 0..bx.bins {
            for j in 0..by.bins {
                let c = self.get(i, j);
                let (dx, dy) = (bx.center(i) - mx, by.center(j) - my);
                vxx += c * dx * dx;
                vyy += c * dy * dy;
                vxy += c * dx * dy;
            }
        }
        vxy / (vxx * vyy).sqrt()
    }
}

fn same_binning(a: &Binning, b: &Binning) -> Result<(), AnalysisError> {
    if a == b {
        Ok(())
    } else {
        Err(AnalysisError::BinningMismatch)
    }
}

/// Histograms that support background subtraction.
pub trait Subtract: Sized {
    fn subtract(&self, background: &Self) -> Result<Self, AnalysisError>;
}

impl Subtract for Histogram1D {
    fn subtract(&self, background: &Self) -> Result<Self, AnalysisError> {
        same_binning(&self.binning, &background.binning)?;
        Ok(Self {
            binning: self.binning,
            counts: self.counts.iter().zip(&background.counts).map(|(s, b)| s - b).collect(),
            variance: self.variance.iter().zip(&background.variance).map(|(s, b)| s + b).collect(),
        })
    }
}

impl Subtract for Histogram2D {
    fn subtract(&self, background: &Self) -> Result<Self, AnalysisError> {
        same_binning(&self.x_binning, &background.x_binning)?;
        same_binning(&self.y_binning, &background.y_binning)?;
        Ok(Self {
            x_binning: self.x_binning,
            y_binning: self.y_binning,
            counts: self.counts.iter().zip(&background.counts).map(|(s, b)| s - b).collect(),
            variance: self.variance.iter().zip(&background.variance).map(|(s, b)| s + b).collect(),
        })
    }
}

/// Net counts `signal − background`; variances add. Negative bins are kept.
pub fn subtract_background<H: Subtract>(signal: &H, background: &H) -> Result<H, AnalysisError> {
    signal.subtract(background)
}
