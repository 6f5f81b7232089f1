//! Free energies from work distributions, plus the closed forms they are
//! checked against.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::GriddedDensity;
use crate::protocol::{ProtocolKind, PullSchedule};
use crate::spectra::log_sum_exp;
use crate::workdist::{work_moments, WorkLedger};

/// `ΔF = −β⁻¹ ln ∫ dW ρ(W) e^{−βW}`, accumulated in log space.
pub fn exponential_average(rho: &GriddedDensity, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("inverse temperature must be positive, got {beta}")));
    }
    let grid = rho.grid();
    let values = rho.values();
    let last = values.len() - 1;
    let terms: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(k, v)| {
            let end = if k == 0 || k == last { 0.5f64.ln() } else { 0.0 };
            v.ln() - beta * grid.point(k) + end
        })
        .collect();
    if terms.is_empty() {
        return Err(Error::NonPositiveAverage { value: 0.0 });
    }
    let log_avg = log_sum_exp(&terms) + grid.step().ln();
    if !log_avg.is_finite() {
        return Err(Error::NonPositiveAverage {
            value: log_avg.exp(),
        });
    }
    Ok(-log_avg / beta)
}

/// Per-step results of one run; index `j` holds step `i = j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyProfile {
    pub kind: ProtocolKind,
    pub energy_unit: String,
    pub controls: Vec<f64>,
    /// ΔF(1, i), zero at `i = 1`.
    pub delta_f: Vec<f64>,
    pub target: Vec<f64>,
    pub mean_w: Vec<f64>,
    pub std_w: Vec<f64>,
    /// `F(control_i) − ΔF(1, i)`.
    pub f_ref: Vec<f64>,
    /// Recursion normalization factors `Q_i`.
    pub normalization: Vec<f64>,
}

impl FreeEnergyProfile {
    pub fn from_ledger(schedule: &PullSchedule, ledger: &WorkLedger) -> Result<Self> {
        let beta = schedule.beta();
        let mut profile = Self {
            kind: schedule.kind,
            energy_unit: schedule.energy_unit().to_string(),
            controls: schedule.controls.clone(),
            delta_f: Vec::with_capacity(schedule.s),
            target: Vec::with_capacity(schedule.s),
            mean_w: Vec::with_capacity(schedule.s),
            std_w: Vec::with_capacity(schedule.s),
            f_ref: Vec::with_capacity(schedule.s),
            normalization: ledger.normalization.clone(),
        };
        for (j, rho) in ledger.distributions.iter().enumerate() {
            let i = j + 1;
            let df = if i == 1 { 0.0 } else { exponential_average(rho, beta)? };
            let (mean, std) = work_moments(rho);
            profile.delta_f.push(df);
            profile.target.push(schedule.target(i)?);
            profile.mean_w.push(mean);
            profile.std_w.push(std);
            profile.f_ref.push(schedule.equilibrium_free_energy(i)? - df);
        }
        Ok(profile)
    }

    pub fn final_delta_f(&self) -> f64 {
        *self.delta_f.last().expect("profiles are nonempty")
    }

    pub fn final_target(&self) -> f64 {
        *self.target.last().expect("profiles are nonempty")
    }

    pub fn len(&self) -> usize {
        self.delta_f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_f.is_empty()
    }
}

/// Runs the full recursion and collects ΔF, work moments and targets.
pub fn free_energy_profile(schedule: &PullSchedule) -> Result<FreeEnergyProfile> {
    let ledger = WorkLedger::build(schedule)?;
    FreeEnergyProfile::from_ledger(schedule, &ledger)
}

/// Linearized estimate `Δλ Σ_{i<s} (λ_i − ⟨x_i⟩)` in ħω/2, with `mean_x[j]`
/// the mean position of step `j + 1`.
pub fn approx_free_energy(schedule: &PullSchedule, mean_x: &[f64]) -> Result<f64> {
    if schedule.kind != ProtocolKind::Center {
        return Err(Error::Unsupported(
            "the linearized estimate is defined for the center protocol only".into(),
        ));
    }
    if mean_x.len() + 1 < schedule.s {
        return Err(invalid(format!(
            "need {} mean positions, got {}",
            schedule.s - 1,
            mean_x.len()
        )));
    }
    Ok((1..schedule.s)
        .map(|i| {
            let dl = schedule.controls[i] - schedule.controls[i - 1];
            dl * (schedule.controls[i - 1] - mean_x[i - 1])
        })
        .sum())
}

/// Ground-state-only result `Δλ²(s−1)(s−a)/4` in ħω/2.
pub fn ground_state_closed_form_center(a: f64, dlambda: f64, s: usize) -> f64 {
    if s == 0 {
        return 0.0;
    }
    let s = s as f64;
    dlambda * dlambda * (s - 1.0) * (s - a) / 4.0
}

/// Full-spectrum result `Δλ²(s−1)(s − a coth a)/4` in ħω/2.
pub fn thermal_closed_form_center(a: f64, dlambda: f64, s: usize) -> f64 {
    if s == 0 {
        return 0.0;
    }
    let s = s as f64;
    dlambda * dlambda * (s - 1.0) * (s - a / a.tanh()) / 4.0
}

/// Low-temperature estimate `Δλ²(s−1)²[1 − (a−1)/(s−1)]/4` in ħω/2.
pub fn low_temp_estimate_center(a: f64, dlambda: f64, s: usize) -> f64 {
    if s <= 1 {
        return 0.0;
    }
    let sm1 = (s - 1) as f64;
    dlambda * dlambda * sm1 * sm1 * (1.0 - (a - 1.0) / sm1) / 4.0
}

/// Ground-state-only spring result
/// `(1/2a0) Σ_{i<s} ln(1 + a0 δ / (2√(1 + δ(i−1))))` in ħω₀.
pub fn ground_state_closed_form_spring(a0: f64, delta: f64, s: usize) -> Result<f64> {
    if !(a0 > 0.0) {
        return Err(invalid(format!("a0 must be positive, got {a0}")));
    }
    let mut sum = 0.0;
    for i in 1..s {
        let radicand = 1.0 + delta * (i - 1) as f64;
        if !(radicand > 0.0) {
            return Err(invalid(format!("step {i} has nonpositive stiffness")));
        }
        sum += (a0 * delta / (2.0 * radicand.sqrt())).ln_1p();
    }
    Ok(sum / (2.0 * a0))
}

/// Zero-temperature, many-step limit `(ω_s − ω₀)/2` in ħω₀.
pub fn spring_low_temperature_limit(ratio: f64) -> f64 {
    0.5 * (ratio - 1.0)
}

/// `F_ref = F(final control) − ΔF`.
pub fn reference_free_energy(delta_f: f64, schedule: &PullSchedule) -> Result<f64> {
    Ok(schedule.equilibrium_free_energy(schedule.s)? - delta_f)
}

/// Least-squares line `y = slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("a line fit needs at least two paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("a line fit needs distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
