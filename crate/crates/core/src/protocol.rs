//! Pull schedules: the ordered control values, temperature, truncation and
//! the two grids every downstream computation runs on.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::GridSpec;
use crate::spectra::{
    analytic_free_energy_center, analytic_target_center, analytic_target_spring,
    spring_free_energy, spring_frequency, OscillatorSpectrum,
};
use crate::workdist::WorkMap;

/// Largest eigenbasis truncation accepted by the schedule builders.
pub const MAX_N_MAX: usize = 200;
/// Default number of nodes of the reaction-coordinate grid.
pub const DEFAULT_X_POINTS: usize = 4001;
/// Boltzmann weights below this fraction of the ground state are ignored
/// when sizing grids.
pub const WEIGHT_CUTOFF: f64 = 1e-16;
/// Upper bound on the automatically sized work lattice.
pub const MAX_W_POINTS: usize = 200_001;
const W_TAIL_SIGMAS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// The trap center moves, λ_i = (i−1)Δλ.
    Center,
    /// The trap stiffens, ω_i = ω₀√(1 + (i−1)δ).
    Spring,
}

/// Immutable description of one step-wise pulling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullSchedule {
    pub kind: ProtocolKind,
    pub s: usize,
    /// λ_1…λ_s (center) or ω_1/ω₀…ω_s/ω₀ (spring).
    pub controls: Vec<f64>,
    /// Δλ (center) or δ (spring).
    pub increment: f64,
    /// `a` (center) or `a0` (spring); equals β in the reporting energy unit.
    pub reduced_temperature: f64,
    pub n_max: usize,
    pub x_grid: GridSpec,
    pub w_grid: GridSpec,
}

/// `a = 2^l` for `l = −4..=4`.
pub fn default_temperature_sweep() -> Vec<f64> {
    (-4..=4).map(|l| 2f64.powi(l)).collect()
}

fn check_common(s: usize, temperature: f64, n_max: usize, name: &str) -> Result<()> {
    if s == 0 {
        return Err(invalid("the number of pulling steps s must be at least 1"));
    }
    if !(temperature > 0.0) || temperature.is_nan() {
        return Err(invalid(format!("{name} must be positive, got {temperature}")));
    }
    if n_max > MAX_N_MAX {
        return Err(invalid(format!("n_max {n_max} exceeds the cap {MAX_N_MAX}")));
    }
    Ok(())
}

/// Center-pulling schedule from λ_1 = 0 to `lambda_s` in `s` steps.
pub fn build_center_schedule(lambda_s: f64, s: usize, a: f64, n_max: usize) -> Result<PullSchedule> {
    check_common(s, a, n_max, "a")?;
    if !lambda_s.is_finite() {
        return Err(invalid(format!("lambda_s must be finite, got {lambda_s}")));
    }
    let dlambda = if s == 1 { 0.0 } else { lambda_s / (s - 1) as f64 };
    let controls = (0..s)
        .map(|k| if k > 0 && k + 1 == s { lambda_s } else { k as f64 * dlambda })
        .collect();
    PullSchedule::assemble(ProtocolKind::Center, s, controls, dlambda, a, n_max)
}

/// Center schedule specified by its increment rather than its endpoint.
pub fn build_center_schedule_with_increment(
    dlambda: f64,
    s: usize,
    a: f64,
    n_max: usize,
) -> Result<PullSchedule> {
    check_common(s, a, n_max, "a")?;
    if !dlambda.is_finite() {
        return Err(invalid(format!("dlambda must be finite, got {dlambda}")));
    }
    let dlambda = if s == 1 { 0.0 } else { dlambda };
    let controls = (0..s).map(|k| k as f64 * dlambda).collect();
    PullSchedule::assemble(ProtocolKind::Center, s, controls, dlambda, a, n_max)
}

/// Spring-stiffening schedule from ω₀ to `ratio`·ω₀ in `s` steps.
pub fn build_spring_schedule(ratio: f64, s: usize, a0: f64, n_max: usize) -> Result<PullSchedule> {
    check_common(s, a0, n_max, "a0")?;
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(invalid(format!("omega ratio must be positive, got {ratio}")));
    }
    if s < 2 {
        return Err(invalid("the spring protocol needs s >= 2"));
    }
    let delta = (ratio * ratio - 1.0) / (s - 1) as f64;
    let controls = (1..=s)
        .map(|i| {
            if i == s {
                Ok(ratio)
            } else {
                spring_frequency(i, delta, 1.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    PullSchedule::assemble(ProtocolKind::Spring, s, controls, delta, a0, n_max)
}

impl PullSchedule {
    fn assemble(
        kind: ProtocolKind,
        s: usize,
        controls: Vec<f64>,
        increment: f64,
        temperature: f64,
        n_max: usize,
    ) -> Result<Self> {
        let mut schedule = Self {
            kind,
            s,
            controls,
            increment,
            reduced_temperature: temperature,
            n_max,
            // placeholders, replaced below
            x_grid: GridSpec::new(-1.0, 1.0, 2)?,
            w_grid: GridSpec::new(-1.0, 1.0, 2)?,
        };
        schedule.x_grid = schedule.default_x_grid(DEFAULT_X_POINTS)?;
        schedule.w_grid = schedule.default_w_grid(None)?;
        Ok(schedule)
    }

    /// Same schedule with a reaction-coordinate grid of `points` nodes.
    pub fn with_x_points(mut self, points: usize) -> Result<Self> {
        self.x_grid = self.default_x_grid(points)?;
        self.w_grid = self.default_w_grid(None)?;
        Ok(self)
    }

    /// Same schedule with a work lattice spanning the default range in
    /// roughly `points` nodes.
    pub fn with_w_points(mut self, points: usize) -> Result<Self> {
        self.w_grid = self.default_w_grid(Some(points))?;
        Ok(self)
    }

    /// Inverse temperature in the reporting energy unit.
    pub fn beta(&self) -> f64 {
        self.reduced_temperature
    }

    pub fn energy_unit(&self) -> &'static str {
        match self.kind {
            ProtocolKind::Center => "hbar*omega/2",
            ProtocolKind::Spring => "hbar*omega0",
        }
    }

    /// Control value of step `i` (1-based).
    pub fn control(&self, i: usize) -> Result<f64> {
        self.check_step(i)?;
        Ok(self.controls[i - 1])
    }

    pub fn final_control(&self) -> f64 {
        *self.controls.last().expect("schedules have s >= 1")
    }

    fn check_step(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.s {
            return Err(invalid(format!("step {i} outside 1..={}", self.s)));
        }
        Ok(())
    }

    /// Eigenstructure of step `i`.
    pub fn spectrum(&self, i: usize) -> Result<OscillatorSpectrum> {
        let c = self.control(i)?;
        match self.kind {
            ProtocolKind::Center => Ok(OscillatorSpectrum::center(i, c, self.n_max)),
            ProtocolKind::Spring => OscillatorSpectrum::spring(i, c, self.n_max),
        }
    }

    /// Work increment picked up when the control jumps from step `i` to `i + 1`.
    pub fn work_map(&self, i: usize) -> Result<WorkMap> {
        if i == 0 || i >= self.s {
            return Err(invalid(format!("work increments exist for steps 1..{}", self.s)));
        }
        Ok(match self.kind {
            ProtocolKind::Center => {
                let dl = self.controls[i] - self.controls[i - 1];
                WorkMap::affine(dl * (self.controls[i - 1] + 0.5 * dl), -dl)
            }
            ProtocolKind::Spring => WorkMap::quadratic(0.5 * self.increment),
        })
    }

    /// Stiffness ladder k_i/k_0 = 1 + (i−1)δ (spring only).
    pub fn spring_constants(&self) -> Option<Vec<f64>> {
        match self.kind {
            ProtocolKind::Spring => Some(self.controls.iter().map(|w| w * w).collect()),
            ProtocolKind::Center => None,
        }
    }

    /// Exact ΔF between step 1 and step `i` for the full spectrum.
    pub fn target(&self, i: usize) -> Result<f64> {
        let c = self.control(i)?;
        Ok(match self.kind {
            ProtocolKind::Center => analytic_target_center(c) - analytic_target_center(self.controls[0]),
            ProtocolKind::Spring => analytic_target_spring(self.reduced_temperature, c / self.controls[0]),
        })
    }

    /// Equilibrium free energy at step `i` in the reporting unit.
    pub fn equilibrium_free_energy(&self, i: usize) -> Result<f64> {
        let c = self.control(i)?;
        Ok(match self.kind {
            ProtocolKind::Center => analytic_free_energy_center(c, self.reduced_temperature),
            ProtocolKind::Spring => spring_free_energy(self.reduced_temperature, c),
        })
    }

    /// Covers every step's fluctuation density: thermal width, the classical
    /// turning point of the highest populated level, and the shift the
    /// exponential work weight applies to it.
    fn default_x_grid(&self, points: usize) -> Result<GridSpec> {
        if points < 3 {
            return Err(invalid(format!("x grid needs at least 3 points, got {points}")));
        }
        let beta = self.beta();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 1..=self.s {
            let spec = self.spectrum(i)?;
            let n_eff = spec.effective_n_max(beta, WEIGHT_CUTOFF) as f64;
            let len = spec.length_scale();
            let var = spec.thermal_variance(beta);
            let half = (9.0 * var.sqrt()).max(((2.0 * n_eff + 1.0).sqrt() + 6.0) * len);
            let tilt = match self.kind {
                ProtocolKind::Center if i < self.s => {
                    beta * (self.controls[i] - self.controls[i - 1]) * var
                }
                _ => 0.0,
            };
            let mu = spec.center_position();
            lo = lo.min(mu - half + tilt.min(0.0));
            hi = hi.max(mu + half + tilt.max(0.0));
        }
        GridSpec::new(lo, hi, points)
    }

    /// Lattice of work values with a node at W = 0, sized from the analytic
    /// moments of every increment so that both ρ_i and e^{−βW}ρ_i fit.
    fn default_w_grid(&self, points: Option<usize>) -> Result<GridSpec> {
        let beta = self.beta();
        let maps: Vec<WorkMap> = (1..self.s).map(|i| self.work_map(i)).collect::<Result<_>>()?;
        if maps.iter().all(WorkMap::is_degenerate) {
            return GridSpec::lattice(-2e-3, 2e-3, 1e-3);
        }

        let mut step = f64::INFINITY;
        let (mut sum_lo, mut sum_hi) = (0.0, 0.0);
        let (mut cum_mean, mut cum_var) = (0.0, 0.0);
        let (mut tail_lo, mut tail_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut reach_lo, mut reach_hi) = (0.0_f64, 0.0_f64);
        for (j, map) in maps.iter().enumerate() {
            let spec = self.spectrum(j + 1)?;
            let var_x = spec.thermal_variance(beta);
            let mu_x = spec.center_position();
            let (u_lo, u_hi) = map.range_over(self.x_grid.min, self.x_grid.max);
            let (mean, var) = match *map {
                WorkMap::Affine { intercept, slope } => (intercept + slope * mu_x, slope * slope * var_x),
                WorkMap::Quadratic { c } => {
                    let m4 = spec.thermal_fourth_moment(beta);
                    (c * var_x, c * c * (m4 - var_x * var_x))
                }
            };
            if !map.is_degenerate() {
                let n_eff = spec.effective_n_max(beta, WEIGHT_CUTOFF) as f64;
                let h = match *map {
                    WorkMap::Affine { slope, .. } => {
                        slope.abs() * 0.5 * spec.length_scale() / (2.0 * n_eff + 1.0).sqrt() / 4.0
                    }
                    WorkMap::Quadratic { .. } => mean.abs() / 32.0,
                };
                step = step.min(h);
            }
            sum_lo += u_lo;
            sum_hi += u_hi;
            cum_mean += mean;
            cum_var += var;
            let sd = cum_var.sqrt();
            tail_lo = tail_lo.min(cum_mean - beta * cum_var - W_TAIL_SIGMAS * sd);
            tail_hi = tail_hi.max(cum_mean + W_TAIL_SIGMAS * sd);
            reach_lo = reach_lo.max(mean - u_lo);
            reach_hi = reach_hi.max(u_hi - mean);
        }
        let lo = sum_lo.max(tail_lo - reach_lo).min(0.0);
        let hi = sum_hi.min(tail_hi + reach_hi).max(0.0);
        let span = hi - lo;
        let step = match points {
            Some(p) if p >= 2 => span / (p - 1) as f64,
            Some(p) => return Err(invalid(format!("w grid needs at least 2 points, got {p}"))),
            None => step.max(span / (MAX_W_POINTS - 5) as f64),
        };
        GridSpec::lattice(lo - 2.0 * step, hi + 2.0 * step, step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_controls_are_equally_spaced() {
        let s = build_center_schedule(1.0, 11, 1.0, 0).unwrap();
        assert_eq!(s.controls.len(), 11);
        for (k, c) in s.controls.iter().enumerate() {
            assert!((c - 0.1 * k as f64).abs() < 1e-15);
        }
        assert_eq!(s.final_control(), 1.0);
        assert!((s.increment - 0.1).abs() < 1e-15);
    }

    #[test]
    fn two_and_one_step_schedules() {
        let s = build_center_schedule(1.0, 2, 1.0, 10).unwrap();
        assert_eq!(s.controls, vec![0.0, 1.0]);
        assert_eq!(s.increment, 1.0);
        let one = build_center_schedule(1.0, 1, 1.0, 0).unwrap();
        assert_eq!(one.controls, vec![0.0]);
        assert_eq!(one.increment, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_center_schedule(1.0, 0, 1.0, 0).is_err());
        assert!(build_center_schedule(1.0, 3, 0.0, 0).is_err());
        assert!(build_center_schedule(1.0, 3, -1.0, 0).is_err());
        assert!(build_center_schedule(1.0, 3, 1.0, 201).is_err());
        assert!(build_spring_schedule(0.0, 3, 0.1, 0).is_err());
        assert!(build_spring_schedule(-1.3, 3, 0.1, 0).is_err());
    }

    #[test]
    fn spring_delta_and_endpoint() {
        let s = build_spring_schedule(1.3, 11, 0.1, 100).unwrap();
        assert!((s.increment - 0.069).abs() < 1e-15);
        assert_eq!(s.final_control(), 1.3);
        assert!((s.final_control().powi(2) - 1.0 - s.increment * 10.0).abs() < 1e-14);
        let two = build_spring_schedule(1.3, 2, 0.1, 100).unwrap();
        assert!((two.increment - 0.69).abs() < 1e-15);
        assert_eq!(two.controls, vec![1.0, 1.3]);
        let null = build_spring_schedule(1.0, 5, 0.1, 10).unwrap();
        assert_eq!(null.increment, 0.0);
        assert!(null.controls.iter().all(|w| *w == 1.0));
    }

    #[test]
    fn spring_ladder() {
        let s = build_spring_schedule(1.3, 11, 0.1, 0).unwrap();
        let k = s.spring_constants().unwrap();
        for (i, ki) in k.iter().enumerate() {
            assert!((ki - (1.0 + i as f64 * 0.069)).abs() < 1e-12);
        }
    }

    #[test]
    fn work_lattice_has_zero_node() {
        for s in [
            build_center_schedule(1.0, 11, 1.0, 10).unwrap(),
            build_center_schedule(1.0, 2, 16.0, 0).unwrap(),
            build_spring_schedule(1.3, 2, 0.1, 100).unwrap(),
        ] {
            let g = s.w_grid;
            let k = g.nearest_index(0.0).unwrap();
            assert!(g.point(k).abs() < 1e-9 * g.step());
            assert!(k > 0 && k + 1 < g.points);
        }
    }

    #[test]
    fn spring_lattice_starts_below_zero() {
        let s = build_spring_schedule(1.3, 11, 0.1, 100).unwrap();
        assert!(s.w_grid.min < 0.0 && s.w_grid.min > -3.0 * s.w_grid.step());
    }

    #[test]
    fn temperature_sweep_set() {
        let a = default_temperature_sweep();
        assert_eq!(a.len(), 9);
        assert_eq!(a[0], 1.0 / 16.0);
        assert_eq!(a[4], 1.0);
        assert_eq!(a[8], 16.0);
    }

    #[test]
    fn targets() {
        let s = build_center_schedule(1.0, 11, 1.0, 10).unwrap();
        assert!((s.target(11).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(s.target(1).unwrap(), 0.0);
        assert!(s.target(12).is_err());
    }
}
