//! Work distributions of the step-wise protocol.
//!
//! Each step contributes an increment δW_i(x) that depends only on where the
//! reaction coordinate sits while the control jumps. With full relaxation
//! between jumps the increments are independent, so the accumulated work
//! density obeys
//!
//! ```text
//! ρ_{i+1}(W) = Q_{i+1} ∫ dw ρ_i(w) g_i(W − w)
//! ```
//!
//! where `g_i` is the pushforward of the thermal fluctuation density `f_i`
//! through δW_i. All work densities live on one lattice `W = k·h` that always
//! contains `W = 0`, so `ρ_1` is a single-node point mass and each
//! recursion step is an exact discrete convolution with the lattice masses
//! of `g_i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Density1D, GridSpec, GriddedDensity};
use crate::protocol::PullSchedule;
use crate::spectra::OscillatorSpectrum;

/// Boundary values of a fluctuation density may not exceed this fraction of
/// its peak.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;
/// Maximum allowed relative mass lost to the edges of the work lattice.
pub const MASS_LEAK_TOLERANCE: f64 = 1e-4;
/// Kernel entries below this fraction of the largest entry (with and without
/// the exponential work weight) are dropped from the ends.
pub const KERNEL_TRIM: f64 = 1e-18;
const EVAL_CUTOFF: f64 = 1e-18;

/// Work increment as a function of the reaction coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WorkMap {
    /// `δW = intercept + slope·x`.
    Affine { intercept: f64, slope: f64 },
    /// `δW = c·x²`.
    Quadratic { c: f64 },
}

impl WorkMap {
    pub fn affine(intercept: f64, slope: f64) -> Self {
        WorkMap::Affine { intercept, slope }
    }

    pub fn quadratic(c: f64) -> Self {
        WorkMap::Quadratic { c }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            WorkMap::Affine { intercept, slope } => intercept + slope * x,
            WorkMap::Quadratic { c } => c * x * x,
        }
    }

    /// A constant map sends every coordinate to zero work.
    pub fn is_degenerate(&self) -> bool {
        match *self {
            WorkMap::Affine { slope, .. } => slope == 0.0,
            WorkMap::Quadratic { c } => c == 0.0,
        }
    }

    /// Smallest and largest increment over `x ∈ [lo, hi]`.
    pub fn range_over(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (a, b) = (self.eval(lo), self.eval(hi));
        let (mut min, mut max) = (a.min(b), a.max(b));
        if let WorkMap::Quadratic { .. } = self {
            if lo <= 0.0 && hi >= 0.0 {
                min = min.min(0.0);
                max = max.max(0.0);
            }
        }
        (min, max)
    }
}

/// δW_i(x) of the schedule, in the schedule's energy unit.
pub fn step_work_map(schedule: &PullSchedule, i: usize, x: f64) -> Result<f64> {
    Ok(schedule.work_map(i)?.eval(x))
}

/// Thermal distribution of the reaction coordinate at one step.
///
/// Evaluates `f(x) = Σ_n w_n |ψ_n(x)|²` exactly at any `x`, with Boltzmann
/// weights normalized over the truncated spectrum, and keeps a sampled copy
/// on the schedule's x grid.
#[derive(Debug, Clone)]
pub struct FluctuationDensity {
    spectrum: OscillatorSpectrum,
    log_weights: Vec<f64>,
    sampled: GriddedDensity,
}

impl FluctuationDensity {
    pub fn spectrum(&self) -> &OscillatorSpectrum {
        &self.spectrum
    }

    /// `ln w_n` for `n = 0..=n_used`.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn sampled(&self) -> &GriddedDensity {
        &self.sampled
    }

    pub fn mean(&self) -> f64 {
        self.sampled.mean()
    }

    pub fn variance(&self) -> f64 {
        self.sampled.variance()
    }

    /// Unnormalized density `w_n |ψ_n(x)|²` of a single level, where `w_n`
    /// is its Boltzmann weight over the truncated spectrum.
    pub fn single_level(
        spectrum: &OscillatorSpectrum,
        beta: f64,
        n: usize,
        x_grid: &GridSpec,
    ) -> Result<Self> {
        if n > spectrum.n_max {
            return Err(invalid(format!("level {n} exceeds n_max = {}", spectrum.n_max)));
        }
        let mut log_weights = vec![f64::NEG_INFINITY; n + 1];
        log_weights[n] = spectrum.log_boltzmann_weights(beta)[n];
        let values = (0..x_grid.points)
            .map(|k| (log_weights[n] + spectrum.log_density(n, x_grid.point(k))).exp())
            .collect();
        Ok(Self {
            spectrum: *spectrum,
            log_weights,
            sampled: GriddedDensity::new(*x_grid, values)?,
        })
    }

    fn eval_with(&self, x: f64, buf: &mut [f64]) -> f64 {
        mixture(&self.spectrum, &self.log_weights, x, buf)
    }
}

fn mixture(spectrum: &OscillatorSpectrum, log_weights: &[f64], x: f64, buf: &mut [f64]) -> f64 {
    spectrum.log_densities(x, buf);
    buf.iter().zip(log_weights).map(|(ld, lw)| (ld + lw).exp()).sum()
}

impl Density1D for FluctuationDensity {
    fn density(&self, x: f64) -> f64 {
        let mut buf = vec![0.0; self.log_weights.len()];
        self.eval_with(x, &mut buf)
    }
}

/// Samples the thermal fluctuation density of `spectrum` at inverse
/// temperature `beta` on `x_grid`.
pub fn fluctuation_density(
    spectrum: &OscillatorSpectrum,
    beta: f64,
    x_grid: &GridSpec,
) -> Result<FluctuationDensity> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(invalid(format!("inverse temperature must be positive, got {beta}")));
    }
    let all = spectrum.log_boltzmann_weights(beta);
    let floor = all[0] + EVAL_CUTOFF.ln();
    let used = all.iter().rposition(|v| *v > floor).unwrap_or(0);
    let log_weights = all[..=used].to_vec();
    let values: Vec<f64> = (0..x_grid.points)
        .into_par_iter()
        .map_init(
            || vec![0.0; log_weights.len()],
            |buf, k| mixture(spectrum, &log_weights, x_grid.point(k), buf),
        )
        .collect();
    let sampled = GriddedDensity::new(*x_grid, values)?;
    let peak = sampled.peak();
    let values = sampled.values();
    let boundary = values[0].max(values[values.len() - 1]);
    if !(peak > 0.0) || boundary > BOUNDARY_TOLERANCE * peak {
        return Err(Error::GridTooNarrow {
            boundary,
            peak,
            limit: BOUNDARY_TOLERANCE,
        });
    }
    Ok(FluctuationDensity {
        spectrum: *spectrum,
        log_weights,
        sampled: sampled.normalized()?,
    })
}

/// Lattice masses of one work increment: `masses[j]` is the probability
/// that δW falls in the cell of node `(offset + j)·h`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    pub step: usize,
    pub h: f64,
    pub offset: i64,
    pub masses: Vec<f64>,
}

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

impl StepKernel {
    /// Pushes `f` forward through `map` onto the lattice of spacing `h`.
    ///
    /// Affine maps sample the transformed density at the nodes. Quadratic
    /// maps integrate `f` against linear hat functions in `x`, which keeps
    /// the mass of the `u^{-1/2}` spike at zero finite and conserves both
    /// mass and mean.
    pub fn build(
        step: usize,
        f: &FluctuationDensity,
        map: &WorkMap,
        h: f64,
        beta: f64,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(format!("lattice spacing must be positive, got {h}")));
        }
        if map.is_degenerate() {
            return Ok(Self {
                step,
                h,
                offset: 0,
                masses: vec![1.0],
            });
        }
        let grid = f.sampled().grid();
        let (offset, masses) = match *map {
            WorkMap::Affine { intercept, slope } => {
                affine_masses(f, intercept, slope, h, grid.min, grid.max)
            }
            WorkMap::Quadratic { c } => quadratic_masses(f, c, h, grid.min, grid.max),
        };
        let mut kernel = Self {
            step,
            h,
            offset,
            masses,
        };
        kernel.trim(beta);
        Ok(kernel)
    }

    pub fn mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(j, m)| m * (self.offset + j as i64) as f64 * self.h)
            .sum::<f64>()
            / self.mass()
    }

    fn trim(&mut self, beta: f64) {
        let tilted: Vec<f64> = self
            .masses
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let u = (self.offset + j as i64) as f64 * self.h;
                (m.ln() - beta * u).exp()
            })
            .collect();
        let max_m = self.masses.iter().copied().fold(0.0, f64::max);
        let max_t = tilted.iter().copied().fold(0.0, f64::max);
        let keep = |j: usize| self.masses[j] > KERNEL_TRIM * max_m || tilted[j] > KERNEL_TRIM * max_t;
        let first = (0..self.masses.len()).find(|&j| keep(j));
        let last = (0..self.masses.len()).rev().find(|&j| keep(j));
        if let (Some(a), Some(b)) = (first, last) {
            self.masses = self.masses[a..=b].to_vec();
            self.offset += a as i64;
        }
    }

    /// The increment density on its own lattice, padded by one empty node
    /// on each side.
    pub fn to_density(&self) -> Result<GriddedDensity> {
        let lo = (self.offset - 1) as f64 * self.h;
        let points = self.masses.len() + 2;
        let grid = GridSpec::new(lo, lo + (points - 1) as f64 * self.h, points)?;
        let mut values = vec![0.0; points];
        for (j, m) in self.masses.iter().enumerate() {
            values[j + 1] = m / self.h;
        }
        GriddedDensity::new(grid, values)
    }
}

fn affine_masses(
    f: &FluctuationDensity,
    intercept: f64,
    slope: f64,
    h: f64,
    x_lo: f64,
    x_hi: f64,
) -> (i64, Vec<f64>) {
    let (u_a, u_b) = (intercept + slope * x_lo, intercept + slope * x_hi);
    let m_lo = (u_a.min(u_b) / h).ceil() as i64;
    let m_hi = (u_a.max(u_b) / h).floor() as i64;
    let jac = h / slope.abs();
    let n = f.log_weights.len();
    let masses = (m_lo..=m_hi)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, m| {
                let x = (m as f64 * h - intercept) / slope;
                jac * f.eval_with(x, buf)
            },
        )
        .collect();
    (m_lo, masses)
}

/// Cloud-in-cell masses of `u = c x²` for both branches of `x`.
fn quadratic_masses(f: &FluctuationDensity, c: f64, h: f64, x_lo: f64, x_hi: f64) -> (i64, Vec<f64>) {
    let ca = c.abs();
    let spec = f.spectrum();
    let n_eff = (f.log_weights.len() - 1) as f64;
    let max_piece = 0.5 * spec.length_scale() / (2.0 * n_eff + 1.0).sqrt();
    let r_max = x_lo.abs().max(x_hi.abs());
    let cells = (ca * r_max * r_max / h).ceil() as usize;
    let n = f.log_weights.len();

    // per-cell contributions to nodes k and k + 1
    let contributions: Vec<(f64, f64)> = (0..cells)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, k| {
                let r0 = (k as f64 * h / ca).sqrt();
                let r1 = ((k + 1) as f64 * h / ca).sqrt().min(r_max);
                let (mut to_k, mut to_next) = (0.0, 0.0);
                if r1 <= r0 {
                    return (0.0, 0.0);
                }
                let pieces = ((r1 - r0) / max_piece).ceil().max(1.0) as usize;
                let width = (r1 - r0) / pieces as f64;
                for p in 0..pieces {
                    let a = r0 + p as f64 * width;
                    let mid = a + 0.5 * width;
                    for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS) {
                        for r in [mid - 0.5 * width * node, mid + 0.5 * width * node] {
                            let mut dens = 0.0;
                            if r <= x_hi {
                                dens += f.eval_with(r, buf);
                            }
                            if -r >= x_lo && r > 0.0 {
                                dens += f.eval_with(-r, buf);
                            }
                            let t = ((ca * r * r - k as f64 * h) / h).clamp(0.0, 1.0);
                            let w = 0.5 * width * weight * dens;
                            to_k += w * (1.0 - t);
                            to_next += w * t;
                        }
                    }
                }
                (to_k, to_next)
            },
        )
        .collect();

    let mut masses = vec![0.0; cells + 1];
    for (k, (a, b)) in contributions.into_iter().enumerate() {
        masses[k] += a;
        masses[k + 1] += b;
    }
    if c < 0.0 {
        masses.reverse();
        (-(cells as i64), masses)
    } else {
        (0, masses)
    }
}

/// Density of the work increment of step `i` on the schedule's lattice.
pub fn pushforward_step_density(
    schedule: &PullSchedule,
    f: &FluctuationDensity,
    i: usize,
) -> Result<GriddedDensity> {
    let map = schedule.work_map(i)?;
    StepKernel::build(i, f, &map, schedule.w_grid.step(), 0.0)?.to_density()
}

/// Discrete convolution `out[k] = Σ_j masses[j]·prev[k − offset − j]`.
pub(crate) fn convolve(prev: &[f64], kernel: &StepKernel) -> Vec<f64> {
    let n = prev.len() as i64;
    let mut out = vec![0.0; prev.len()];
    let Some(p_lo) = prev.iter().position(|v| *v != 0.0) else {
        return out;
    };
    let p_hi = prev.iter().rposition(|v| *v != 0.0).unwrap_or(p_lo);
    let (p_lo, p_hi) = (p_lo as i64, p_hi as i64);
    let m = kernel.masses.len() as i64;
    let reversed: Vec<f64> = kernel.masses.iter().rev().copied().collect();
    let k_lo = (p_lo + kernel.offset).max(0);
    let k_hi = (p_hi + kernel.offset + m - 1).min(n - 1);
    if k_hi < k_lo {
        return out;
    }
    out[k_lo as usize..=k_hi as usize]
        .par_iter_mut()
        .enumerate()
        .for_each(|(dk, slot)| {
            let k = k_lo + dk as i64;
            let base = k - kernel.offset;
            let j_lo = (base - p_hi).max(0);
            let j_hi = (base - p_lo).min(m - 1);
            if j_hi < j_lo {
                return;
            }
            // reversed index t = m − 1 − j, prev index base − j
            let t_lo = (m - 1 - j_hi) as usize;
            let t_hi = (m - 1 - j_lo) as usize;
            let q_lo = (base - j_hi) as usize;
            let len = t_hi - t_lo + 1;
            *slot = reversed[t_lo..t_lo + len]
                .iter()
                .zip(&prev[q_lo..q_lo + len])
                .map(|(a, b)| a * b)
                .sum();
        });
    out
}

fn apply_kernel(rho_prev: &GriddedDensity, kernel: &StepKernel, step: usize) -> Result<(GriddedDensity, f64)> {
    let h = rho_prev.grid().step();
    if ((kernel.h - h) / h).abs() > 1e-9 {
        return Err(invalid("kernel and work lattice spacings differ"));
    }
    let values = convolve(rho_prev.values(), kernel);
    let mut rho = GriddedDensity::new(*rho_prev.grid(), values)?;
    let mass = rho.integral();
    let expected = kernel.mass() * rho_prev.integral();
    if !(mass > 0.0) || ((mass - expected) / expected).abs() > MASS_LEAK_TOLERANCE {
        return Err(Error::MassLeak {
            step,
            mass,
            expected,
        });
    }
    let q = rho.normalize()?;
    Ok((rho, q))
}

/// One recursion step: `ρ_i` from `ρ_{i−1}` and the fluctuation density of
/// step `i − 1`. Returns `ρ_i` and its normalization factor `Q_i`.
pub fn work_recursion_step(
    rho_prev: &GriddedDensity,
    f_prev: &FluctuationDensity,
    schedule: &PullSchedule,
    i: usize,
) -> Result<(GriddedDensity, f64)> {
    if i < 2 || i > schedule.s {
        return Err(invalid(format!("recursion step {i} outside 2..={}", schedule.s)));
    }
    let map = schedule.work_map(i - 1)?;
    let kernel = StepKernel::build(i - 1, f_prev, &map, schedule.w_grid.step(), schedule.beta())?;
    apply_kernel(rho_prev, &kernel, i)
}

/// `(⟨W⟩, ⟨(W − ⟨W⟩)²⟩^{1/2})` of a work density.
pub fn work_moments(rho: &GriddedDensity) -> (f64, f64) {
    (rho.mean(), rho.variance().sqrt())
}

/// Everything the recursion produces for one schedule.
#[derive(Debug, Clone)]
pub struct WorkLedger {
    /// `ρ_1…ρ_s`; `ρ_1` is the point mass at zero work.
    pub distributions: Vec<GriddedDensity>,
    /// `Q_1…Q_s` with `Q_1 = 1`.
    pub normalization: Vec<f64>,
    /// `f_1…f_s`.
    pub fluctuations: Vec<FluctuationDensity>,
    /// Increment kernels of steps `1…s−1`.
    pub kernels: Vec<StepKernel>,
}

impl WorkLedger {
    pub fn build(schedule: &PullSchedule) -> Result<Self> {
        let beta = schedule.beta();
        let fluctuations = (1..=schedule.s)
            .map(|i| fluctuation_density(&schedule.spectrum(i)?, beta, &schedule.x_grid))
            .collect::<Result<Vec<_>>>()?;
        let h = schedule.w_grid.step();
        let kernels = (1..schedule.s)
            .map(|i| StepKernel::build(i, &fluctuations[i - 1], &schedule.work_map(i)?, h, beta))
            .collect::<Result<Vec<_>>>()?;
        let mut distributions = vec![GriddedDensity::point_mass(schedule.w_grid, 0.0)?];
        let mut normalization = vec![1.0];
        for (j, kernel) in kernels.iter().enumerate() {
            let (rho, q) = apply_kernel(&distributions[j], kernel, j + 2)?;
            distributions.push(rho);
            normalization.push(q);
        }
        Ok(Self {
            distributions,
            normalization,
            fluctuations,
            kernels,
        })
    }

    /// `⟨x_i⟩` for `i = 1…s`.
    pub fn mean_positions(&self) -> Vec<f64> {
        self.fluctuations.iter().map(FluctuationDensity::mean).collect()
    }

    pub fn final_distribution(&self) -> &GriddedDensity {
        self.distributions.last().expect("ledger holds at least ρ_1")
    }
}
