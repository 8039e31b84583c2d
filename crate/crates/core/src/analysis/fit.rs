//! Weighted least-squares fit of `A·exp(−(u−µ)²/2s²) + B` to a histogram.
//!
//! Parameters are `(A, µ, s², B)`; the variance is fitted directly so its
//! uncertainty comes straight out of the covariance matrix. Each bin is
//! weighted by `1 / max(variance, 1)`. Minimization is Levenberg–Marquardt
//! with multiplicative damping.

use super::histogram::Histogram1D;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAX_ITERATIONS: usize = 200;
const REL_SSE_TOL: f64 = 1e-8;
const FWHM_PER_SIGMA: f64 = 2.355;
const MIN_BINS: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("histogram is flat; no peak to fit")]
    Flat,
    #[error("need at least {MIN_BINS} non-empty bins, found {0}")]
    TooFewBins(usize),
    #[error("histogram contains non-finite values")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub mean: f64,
    pub variance: f64,
    pub offset: f64,
    /// Parameter covariance in the order (A, µ, s², B).
    pub covariance: [[f64; 4]; 4],
    pub chi_squared: f64,
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl GaussianFit {
    pub fn params(&self) -> [f64; 4] {
        [self.amplitude, self.mean, self.variance, self.offset]
    }

    pub fn eval(&self, u: f64) -> f64 {
        model(&self.params(), u)
    }

    pub fn amplitude_err(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn mean_err(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }

    pub fn variance_err(&self) -> f64 {
        self.covariance[2][2].max(0.0).sqrt()
    }

    pub fn offset_err(&self) -> f64 {
        self.covariance[3][3].max(0.0).sqrt()
    }

    pub fn reduced_chi_squared(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi_squared / self.dof as f64
        }
    }
}

fn model(p: &[f64; 4], u: f64) -> f64 {
    let d = u - p[1];
    p[0] * (-d * d / (2.0 * p[2])).exp() + p[3]
}

// Model value and gradient with respect to (A, µ, s², B).
fn model_grad(p: &[f64; 4], u: f64) -> (f64, [f64; 4]) {
    let d = u - p[1];
    let g = (-d * d / (2.0 * p[2])).exp();
    let f = p[0] * g + p[3];
    (
        f,
        [g, p[0] * g * d / p[2], p[0] * g * d * d / (2.0 * p[2] * p[2]), 1.0],
    )
}

struct Data {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Data {
    fn sse(&self, p: &[f64; 4]) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((&x, &y), &w)| {
                let r = y - model(p, x);
                w * r * r
            })
            .sum()
    }

    // Normal matrix JᵀWJ and gradient JᵀWr.
    fn normal(&self, p: &[f64; 4]) -> ([[f64; 4]; 4], [f64; 4]) {
        let mut n = [[0.0; 4]; 4];
        let mut g = [0.0; 4];
        for ((&x, &y), &w) in self.x.iter().zip(&self.y).zip(&self.w) {
            let (f, j) = model_grad(p, x);
            let r = y - f;
            for a in 0..4 {
                g[a] += w * j[a] * r;
                for b in 0..4 {
                    n[a][b] += w * j[a] * j[b];
                }
            }
        }
        (n, g)
    }
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
fn solve4(mut m: [[f64; 4]; 4], mut rhs: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if !(m[pivot][col].abs() > 0.0) || !m[pivot][col].is_finite() {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn invert4(m: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut inv = [[0.0; 4]; 4];
    for c in 0..4 {
        let mut e = [0.0; 4];
        e[c] = 1.0;
        let col = solve4(*m, e)?;
        for r in 0..4 {
            inv[r][c] = col[r];
        }
    }
    // Symmetrize away rounding asymmetry.
    for r in 0..4 {
        for c in r + 1..4 {
            let v = 0.5 * (inv[r][c] + inv[c][r]);
            inv[r][c] = v;
            inv[c][r] = v;
        }
    }
    Some(inv)
}

/// Starting point: peak at the highest bin, floor at the lowest, width from
/// the run of bins above half maximum (two bin widths when that run is
/// shorter than two bins).
fn initial_guess(h: &Histogram1D) -> [f64; 4] {
    let (mut imax, mut vmax, mut vmin) = (0, f64::NEG_INFINITY, f64::INFINITY);
    for (i, &c) in h.counts.iter().enumerate() {
        if c > vmax {
            vmax = c;
            imax = i;
        }
        vmin = vmin.min(c);
    }
    let amplitude = vmax - vmin;
    let half = vmin + 0.5 * amplitude;
    let mut lo = imax;
    while lo > 0 && h.counts[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < h.counts.len() && h.counts[hi + 1] >= half {
        hi += 1;
    }
    let width = h.binning.width;
    let run = hi - lo + 1;
    let sigma = if run >= 2 {
        run as f64 * width / FWHM_PER_SIGMA
    } else {
        2.0 * width
    };
    [amplitude, h.binning.center(imax), sigma * sigma, vmin]
}

pub fn fit_gaussian(h: &Histogram1D) -> Result<GaussianFit, FitError> {
    if h.counts.iter().chain(&h.variance).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let first = h.counts.first().copied().unwrap_or(0.0);
    if h.counts.iter().all(|&c| c == first) {
        return Err(FitError::Flat);
    }
    let non_empty = h.counts.iter().filter(|&&c| c != 0.0).count();
    if non_empty < MIN_BINS {
        return Err(FitError::TooFewBins(non_empty));
    }

    let data = Data {
        x: h.binning.centers(),
        y: h.counts.clone(),
        w: h.variance.iter().map(|&v| 1.0 / v.max(1.0)).collect(),
    };
    let mut p = initial_guess(h);
    let mut sse = data.sse(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if sse == 0.0 {
            converged = true;
            break;
        }
        let (n, g) = data.normal(&p);
        let mut damped = n;
        for k in 0..4 {
            damped[k][k] += lambda * n[k][k].max(f64::MIN_POSITIVE);
        }
        let step = solve4(damped, g);
        let trial = step.map(|s| [p[0] + s[0], p[1] + s[1], p[2] + s[2], p[3] + s[3]]);
        let accepted = trial
            .filter(|t| t[2] > 0.0)
            .map(|t| (t, data.sse(&t)))
            .filter(|(_, s)| s.is_finite() && *s <= sse);
        match accepted {
            Some((t, new_sse)) => {
                let change = sse - new_sse;
                p = t;
                sse = new_sse;
                lambda = (lambda * 0.1).max(1e-12);
                if change <= REL_SSE_TOL * sse.max(f64::MIN_POSITIVE) {
                    converged = true;
                    break;
                }
            }
            None => {
                lambda *= 10.0;
                // No damped step improves the SSE: a stationary point at
                // working precision.
                if lambda > 1e12 {
                    converged = true;
                    break;
                }
            }
        }
    }

    let dof = h.counts.len().saturating_sub(4);
    let (n, _) = data.normal(&p);
    let scale = if dof > 0 { sse / dof as f64 } else { 0.0 };
    let covariance = match invert4(&n) {
        Some(inv) => inv.map(|row| row.map(|v| v * scale)),
        None => {
            converged = false;
            [[f64::NAN; 4]; 4]
        }
    };
    Ok(GaussianFit {
        amplitude: p[0],
        mean: p[1],
        variance: p[2],
        offset: p[3],
        covariance,
        chi_squared: sse,
        dof,
        iterations,
        converged: converged && p[2] > 0.0,
    })
}
