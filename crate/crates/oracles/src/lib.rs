//! Independent numerical references for the closed forms in `eprsim-core`.
//!
//! Everything here works from the amplitudes `psi_momentum` and
//! `psi_position` only, by brute force (FFT, trapezoid quadrature, bisection,
//! exhaustive search), so agreement with the analytic moments is meaningful.

use eprsim_core::analysis::Histogram1D;
use eprsim_core::model::{psi_momentum, psi_position};
use eprsim_core::{DiffusionModel, EprGaussianState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Random valid state and diffusion model with (σ₊/σ₋)² ≤ `max_dimension`.
pub fn random_state(rng: &mut impl Rng, max_dimension: f64) -> (EprGaussianState, DiffusionModel) {
    let sigma_minus = rng.random_range(0.1..0.4);
    let ratio = rng.random_range(1.0..max_dimension.sqrt());
    let state = EprGaussianState::new(rng.random_range(0.5..2.0), sigma_minus, sigma_minus * ratio).unwrap();
    let diff = DiffusionModel::new(rng.random_range(0.001..0.03), 2.0).unwrap();
    (state, diff)
}

/// Deterministic stream of random states for reproducible oracle sweeps.
pub fn random_states(seed: u64, n: usize, max_dimension: f64) -> Vec<(EprGaussianState, DiffusionModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_state(&mut rng, max_dimension)).collect()
}

// Per-axis momentum amplitude precision matrix, read off the exponent of
// psi_momentum numerically so the grid choice does not lean on closed forms.
fn momentum_precision(state: &EprGaussianState, diff: &DiffusionModel, tau: f64) -> [[f64; 2]; 2] {
    let f = |p: f64, pp: f64| -psi_momentum(state, diff, tau, [p, 0.0], [pp, 0.0]).unwrap().ln();
    let c = f(0.0, 0.0);
    let h = 1e-2;
    let m00 = 2.0 * (f(h, 0.0) - c) / (h * h);
    let m11 = 2.0 * (f(0.0, h) - c) / (h * h);
    let m01 = (f(h, h) - c) / (h * h) - 0.5 * (m00 + m11);
    [[m00, m01], [m01, m11]]
}

fn eigen_extremes(m: [[f64; 2]; 2]) -> (f64, f64) {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    (0.5 * tr - disc, 0.5 * tr + disc)
}

/// Result of the FFT comparison on one (x, X) plane.
#[derive(Debug, Clone, Copy)]
pub struct FftComparison {
    /// max |FFT − analytic| over the grid, both scaled to unit peak.
    pub max_rel_error: f64,
    pub momentum_half_range: f64,
    pub position_half_range: f64,
}

/// Transforms the momentum amplitude on an `n`×`n` (p_x, P_x) grid with an
/// FFT and compares it with the analytic position amplitude on the dual grid.
///
/// The y components are held at zero; the amplitude factorizes over axes, so
/// one plane fixes the transform up to a constant. Both sides are scaled to
/// their value at the origin, which is also their maximum.
pub fn fft_duality(state: &EprGaussianState, diff: &DiffusionModel, tau: f64, n: usize) -> FftComparison {
    assert!(n % 4 == 0, "grid size must be a multiple of 4");
    let prec = momentum_precision(state, diff, tau);
    let (lmin, lmax) = eigen_extremes(prec);
    // Amplitude widths: momentum sd 1/sqrt(λ), position sd sqrt(λ). Balance
    // the number of standard deviations covered in both spaces.
    let (sp, sx) = (1.0 / lmin.sqrt(), lmax.sqrt());
    let product = std::f64::consts::PI * n as f64 / 2.0;
    let hp = (product * sp / sx).sqrt();
    let hx = product / hp;
    let dp = 2.0 * hp / n as f64;
    let dx = 2.0 * hx / n as f64;
    let half = (n / 2) as f64;

    // x_k p_j = 2π jk/n − π j − π k + π n/2, so with n/2 even the transform
    // is (−1)^k · IFFT[(−1)^j f_j] in each dimension.
    let sign = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
    let mut data: Vec<Complex64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let p = (i as f64 - half) * dp;
            let pp = (j as f64 - half) * dp;
            let v = psi_momentum(state, diff, tau, [p, 0.0], [pp, 0.0]).unwrap();
            Complex64::new(v * sign(i) * sign(j), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    for row in data.chunks_mut(n) {
        ifft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            column[i] = data[i * n + j];
        }
        ifft.process(&mut column);
        for i in 0..n {
            data[i * n + j] = column[i];
        }
    }
    let transformed: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            data[idx].re * sign(i) * sign(j)
        })
        .collect();
    let centre = (n / 2) * n + n / 2;
    let peak_fft = transformed[centre];
    let peak_exact = psi_position(state, diff, tau, [0.0; 2], [0.0; 2]).unwrap();
    let mut worst: f64 = 0.0;
    for (idx, v) in transformed.iter().enumerate() {
        let (i, j) = (idx / n, idx % n);
        let x = (i as f64 - half) * dx;
        let xx = (j as f64 - half) * dx;
        let exact = psi_position(state, diff, tau, [x, 0.0], [xx, 0.0]).unwrap() / peak_exact;
        worst = worst.max((v / peak_fft - exact).abs());
    }
    FftComparison {
        max_rel_error: worst,
        momentum_half_range: hp,
        position_half_range: hx,
    }
}

/// Second moments of the composite variables and the pair-survival factor by
/// trapezoid quadrature over the per-axis (p, P) plane.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureMoments {
    pub var_diff_pos: f64,
    pub var_sum_pos: f64,
    pub var_sum_mom: f64,
    pub var_diff_mom: f64,
    /// Ratio of total |Ψ̃_τ|² to total |Ψ̃_0|² over both axes.
    pub pair_rate: f64,
    /// ∫|Ψ̃_τ|² d⁴ / ∫|Ψ_τ|² d⁴; one for a unitary transform pair.
    pub parseval_ratio: f64,
}

struct Grid {
    h: f64,
    n: usize,
}

impl Grid {
    fn for_state(state: &EprGaussianState, diff: &DiffusionModel, tau: f64) -> Self {
        let (lmin, lmax) = eigen_extremes(momentum_precision(state, diff, tau));
        // |Ψ̃|² has sd 1/sqrt(2λ); cover 12 sd of the widest direction with a
        // step of a quarter of the narrowest.
        let (wide, narrow) = (1.0 / (2.0 * lmin).sqrt(), 1.0 / (2.0 * lmax).sqrt());
        let h = narrow / 4.0;
        let n = (12.0 * wide / h).ceil() as usize;
        Self { h, n }
    }

    fn point(&self, i: usize) -> f64 {
        (i as f64 - self.n as f64) * self.h
    }

    fn points(&self) -> usize {
        2 * self.n + 1
    }
}

/// Quadrature of the composite moments; position moments come from
/// derivatives of the momentum amplitude, since x acts as i∂/∂p there.
pub fn quadrature_moments(state: &EprGaussianState, diff: &DiffusionModel, tau: f64) -> QuadratureMoments {
    let grid = Grid::for_state(state, diff, tau);
    let amp = |p: f64, pp: f64| psi_momentum(state, diff, tau, [p, 0.0], [pp, 0.0]).unwrap();
    let fd = 1e-4 * grid.h;
    let (mut norm, mut sum_mom, mut dif_mom, mut dif_pos, mut sum_pos) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..grid.points() {
        let p = grid.point(i);
        for j in 0..grid.points() {
            let pp = grid.point(j);
            // Trapezoid weights vanish to the precision needed at the edges,
            // where the integrand is ~exp(-72).
            let f = amp(p, pp);
            let f2 = f * f;
            let dp = (amp(p + fd, pp) - amp(p - fd, pp)) / (2.0 * fd);
            let dpp = (amp(p, pp + fd) - amp(p, pp - fd)) / (2.0 * fd);
            norm += f2;
            sum_mom += (p + pp) * (p + pp) * f2;
            dif_mom += (p - pp) * (p - pp) * f2;
            dif_pos += (dp - dpp) * (dp - dpp);
            sum_pos += (dp + dpp) * (dp + dpp);
        }
    }
    let area = grid.h * grid.h;
    let axis_norm = norm * area;

    let zero = {
        let g0 = Grid::for_state(state, diff, 0.0);
        let mut s = 0.0;
        for i in 0..g0.points() {
            for j in 0..g0.points() {
                let f = psi_momentum(state, diff, 0.0, [g0.point(i), 0.0], [g0.point(j), 0.0]).unwrap();
                s += f * f;
            }
        }
        s * g0.h * g0.h
    };

    // Per-axis position norm, with the y factor of the amplitude at the
    // origin divided out on both sides.
    let pos_axis_norm = {
        let (lmin, lmax) = eigen_extremes(momentum_precision(state, diff, tau));
        let wide = (lmax / 2.0).sqrt();
        let narrow = (lmin / 2.0).sqrt();
        let h = narrow / 4.0;
        let n = (12.0 * wide / h).ceil() as i64;
        let mut s = 0.0;
        for i in -n..=n {
            for j in -n..=n {
                let f = psi_position(state, diff, tau, [i as f64 * h, 0.0], [j as f64 * h, 0.0]).unwrap();
                s += f * f;
            }
        }
        s * h * h
    };
    let mom_origin = psi_momentum(state, diff, tau, [0.0; 2], [0.0; 2]).unwrap();
    let pos_origin = psi_position(state, diff, tau, [0.0; 2], [0.0; 2]).unwrap();
    // Slices carry one copy of the other axis's factor at the origin:
    // slice_norm = C²·g(0)²·N_g per space, and the full norm is C²·N_g².
    let mom_full = axis_norm * axis_norm / (mom_origin * mom_origin);
    let pos_full = pos_axis_norm * pos_axis_norm / (pos_origin * pos_origin);

    QuadratureMoments {
        var_diff_pos: dif_pos / norm,
        var_sum_pos: sum_pos / norm,
        var_sum_mom: sum_mom / norm,
        var_diff_mom: dif_mom / norm,
        pair_rate: (axis_norm / zero).powi(2),
        parseval_ratio: mom_full / pos_full,
    }
}

/// Smallest τ in `[0, tau_max]` at which `product(τ)` reaches `bound`, by
/// bisection, or `None` when the bracket does not contain a crossing.
pub fn bisect_crossing(product: impl Fn(f64) -> f64, bound: f64, tau_max: f64, tol: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0, tau_max);
    if product(lo) >= bound || product(hi) < bound {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if product(mid) < bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Weighted least-squares Gaussian by exhaustive search over (μ, s²) with the
/// linear amplitude and offset solved exactly at each grid point.
pub fn grid_search_gaussian(h: &Histogram1D, mu_range: (f64, f64), var_range: (f64, f64), steps: usize) -> (f64, f64) {
    let centers = h.binning.centers();
    let weights: Vec<f64> = h.variance.iter().map(|v| 1.0 / v.max(1.0)).collect();
    let sse = |mu: f64, var: f64| {
        // Normal equations for (A, B) with shape g(u) = exp(−(u−μ)²/2s²).
        let (mut sgg, mut sg, mut s1, mut sgy, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((u, y), w) in centers.iter().zip(&h.counts).zip(&weights) {
            let g = (-(u - mu) * (u - mu) / (2.0 * var)).exp();
            sgg += w * g * g;
            sg += w * g;
            s1 += w;
            sgy += w * g * y;
            sy += w * y;
        }
        let det = sgg * s1 - sg * sg;
        let a = (sgy * s1 - sg * sy) / det;
        let b = (sgg * sy - sg * sgy) / det;
        centers
            .iter()
            .zip(&h.counts)
            .zip(&weights)
            .map(|((u, y), w)| {
                let r = y - a * (-(u - mu) * (u - mu) / (2.0 * var)).exp() - b;
                w * r * r
            })
            .sum::<f64>()
    };
    let search = |(m0, m1): (f64, f64), (v0, v1): (f64, f64)| {
        let mut best = (f64::INFINITY, m0, v0);
        for i in 0..=steps {
            let mu = m0 + (m1 - m0) * i as f64 / steps as f64;
            for j in 0..=steps {
                let var = v0 + (v1 - v0) * j as f64 / steps as f64;
                let s = sse(mu, var);
                if s < best.0 {
                    best = (s, mu, var);
                }
            }
        }
        best
    };
    // Coarse pass, then successively finer boxes around the best point.
    let (mut mr, mut vr) = (mu_range, var_range);
    let mut best = search(mr, vr);
    for _ in 0..6 {
        let dm = 2.0 * (mr.1 - mr.0) / steps as f64;
        let dv = 2.0 * (vr.1 - vr.0) / steps as f64;
        mr = (best.1 - dm, best.1 + dm);
        vr = ((best.2 - dv).max(1e-12), best.2 + dv);
        best = search(mr, vr);
    }
    (best.1, best.2)
}
