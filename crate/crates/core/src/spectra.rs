//! Eigenstructure of the two driven harmonic oscillators.
//!
//! Units (ħ = m = 1 throughout):
//!
//! * center protocol: ω = 1, so the applied spring constant is k = 1/2 and
//!   lengths are measured in √(ħ/mω). The free functions below follow the
//!   textbook convention and report eigenvalues in ħω; the pipeline works in
//!   ħω/2, in which k = 1 and the inverse temperature equals the reduced
//!   temperature `a`.
//! * spring protocol: ω₀ = 1, lengths in √(ħ/mω₀), energies in ħω₀, and the
//!   inverse temperature equals `a0`.
//!
//! Eigenfunction densities are evaluated through the normalized Hermite
//! functions with a running logarithmic scale, so they stay finite for any
//! quantum number up to the configured cap and far into the tails.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Which oscillator (and therefore which unit convention) a spectrum uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitSystem {
    CenterProtocol,
    SpringProtocol,
}

impl UnitSystem {
    /// Label of the energy unit used for every reported energy.
    pub fn energy_unit(&self) -> &'static str {
        match self {
            UnitSystem::CenterProtocol => "hbar*omega/2",
            UnitSystem::SpringProtocol => "hbar*omega0",
        }
    }
}

/// Physicists' Hermite polynomial `H_n(y)` by upward recurrence.
pub fn hermite_poly(n: usize, y: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * y;
    for k in 1..n {
        let next = 2.0 * y * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

const RESCALE_ABOVE: f64 = 1e150;

/// `ln |h_n(ξ)|` for `n = 0..out.len()`, where `h_n` are the normalized
/// Hermite functions `(2ⁿ n! √π)^{-1/2} H_n(ξ) e^{-ξ²/2}`. Nodes give `-inf`.
pub fn log_hermite_functions(xi: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let mut log_scale = -0.5 * xi * xi - 0.25 * PI.ln();
    let mut prev = 0.0_f64;
    let mut cur = 1.0_f64;
    out[0] = log_scale;
    for n in 0..out.len() - 1 {
        let np1 = (n + 1) as f64;
        let next = (2.0 / np1).sqrt() * xi * cur - (n as f64 / np1).sqrt() * prev;
        prev = cur;
        cur = next;
        let mag = cur.abs();
        if mag > RESCALE_ABOVE {
            prev /= mag;
            cur /= mag;
            log_scale += mag.ln();
        }
        out[n + 1] = if cur == 0.0 {
            f64::NEG_INFINITY
        } else {
            cur.abs().ln() + log_scale
        };
    }
}

/// `ln |h_n(ξ)|` for a single quantum number.
pub fn log_hermite_function(n: usize, xi: f64) -> f64 {
    let mut buf = vec![0.0; n + 1];
    log_hermite_functions(xi, &mut buf);
    buf[n]
}

/// `E_n = (n + 1/2) + λ²/8` in units of ħω.
pub fn center_eigenvalue(n: usize, lambda: f64) -> f64 {
    n as f64 + 0.5 + lambda * lambda / 8.0
}

/// `|ψ_n(x, λ)|²` of the coupled oscillator centered at λ/2.
pub fn center_prob_density(n: usize, lambda: f64, x: f64) -> f64 {
    (2.0 * log_hermite_function(n, x - 0.5 * lambda)).exp()
}

/// `ω_i = ω₀ √(1 + (i−1)δ)` for step `i ≥ 1`.
pub fn spring_frequency(i: usize, delta: f64, omega0: f64) -> Result<f64> {
    if i == 0 {
        return Err(invalid("pulling steps are numbered from 1"));
    }
    let radicand = 1.0 + (i - 1) as f64 * delta;
    if !(radicand > 0.0) {
        return Err(invalid(format!(
            "step {i} has nonpositive squared frequency ratio {radicand} (inverted oscillator)"
        )));
    }
    if !(omega0 > 0.0) {
        return Err(invalid(format!("omega0 must be positive, got {omega0}")));
    }
    Ok(omega0 * radicand.sqrt())
}

/// `E_n(ω_i) = (n + 1/2) ω_i` in units of ħω₀ (ω₀ = 1).
pub fn spring_eigenvalue(n: usize, omega: f64) -> f64 {
    (n as f64 + 0.5) * omega
}

/// `|ψ_n(x, ω_i)|²` with `x` in units of √(ħ/mω₀).
pub fn spring_prob_density(n: usize, omega: f64, x: f64) -> f64 {
    (spring_log_density(n, omega, x)).exp()
}

fn spring_log_density(n: usize, omega: f64, x: f64) -> f64 {
    2.0 * log_hermite_function(n, x * omega.sqrt()) + 0.5 * omega.ln()
}

/// `ln(2 sinh z)` without overflow for large `z > 0`.
fn ln_two_sinh(z: f64) -> f64 {
    if z > 20.0 {
        z + (-(-2.0 * z).exp()).ln_1p()
    } else {
        (2.0 * z.sinh()).ln()
    }
}

/// `F(λ) = a⁻¹ ln(eᵃ − e⁻ᵃ) + λ²/4` in units of ħω/2.
pub fn analytic_free_energy_center(lambda: f64, a: f64) -> f64 {
    ln_two_sinh(a) / a + lambda * lambda / 4.0
}

/// `F(λ) − F(0) = λ²/4` in units of ħω/2.
pub fn analytic_target_center(lambda: f64) -> f64 {
    lambda * lambda / 4.0
}

/// `a0⁻¹ ln[sinh(a0 r/2) / sinh(a0/2)]` in units of ħω₀, with `r = ω_s/ω₀`.
pub fn analytic_target_spring(a0: f64, ratio: f64) -> f64 {
    (ln_two_sinh(0.5 * a0 * ratio) - ln_two_sinh(0.5 * a0)) / a0
}

/// Free energy `a0⁻¹ ln[2 sinh(a0 r/2)]` of the oscillator at `ω = r ω₀`.
pub fn spring_free_energy(a0: f64, ratio: f64) -> f64 {
    ln_two_sinh(0.5 * a0 * ratio) / a0
}

/// Eigenvalues and eigenfunction densities for one pulling step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorSpectrum {
    pub protocol: UnitSystem,
    pub step_index: usize,
    /// λ_i (center) or ω_i/ω₀ (spring).
    pub control: f64,
    pub n_max: usize,
}

impl OscillatorSpectrum {
    pub fn center(step_index: usize, lambda: f64, n_max: usize) -> Self {
        Self {
            protocol: UnitSystem::CenterProtocol,
            step_index,
            control: lambda,
            n_max,
        }
    }

    pub fn spring(step_index: usize, omega: f64, n_max: usize) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(invalid(format!("oscillator frequency must be positive, got {omega}")));
        }
        Ok(Self {
            protocol: UnitSystem::SpringProtocol,
            step_index,
            control: omega,
            n_max,
        })
    }

    /// Eigenvalue in the protocol's reporting unit (ħω/2 or ħω₀).
    pub fn eigenvalue(&self, n: usize) -> f64 {
        match self.protocol {
            UnitSystem::CenterProtocol => 2.0 * center_eigenvalue(n, self.control),
            UnitSystem::SpringProtocol => spring_eigenvalue(n, self.control),
        }
    }

    /// Spacing between adjacent levels in the reporting unit.
    pub fn level_spacing(&self) -> f64 {
        match self.protocol {
            UnitSystem::CenterProtocol => 2.0,
            UnitSystem::SpringProtocol => self.control,
        }
    }

    /// Position about which every eigenfunction density is symmetric.
    pub fn center_position(&self) -> f64 {
        match self.protocol {
            UnitSystem::CenterProtocol => 0.5 * self.control,
            UnitSystem::SpringProtocol => 0.0,
        }
    }

    /// Oscillator length of this step in the protocol's length unit.
    pub fn length_scale(&self) -> f64 {
        match self.protocol {
            UnitSystem::CenterProtocol => 1.0,
            UnitSystem::SpringProtocol => 1.0 / self.control.sqrt(),
        }
    }

    fn reduced_coordinate(&self, x: f64) -> f64 {
        (x - self.center_position()) / self.length_scale()
    }

    /// `ln |ψ_n(x)|²`.
    pub fn log_density(&self, n: usize, x: f64) -> f64 {
        2.0 * log_hermite_function(n, self.reduced_coordinate(x)) - self.length_scale().ln()
    }

    pub fn density(&self, n: usize, x: f64) -> f64 {
        self.log_density(n, x).exp()
    }

    /// `ln |ψ_n(x)|²` for every `n ≤ out.len() - 1`.
    pub fn log_densities(&self, x: f64, out: &mut [f64]) {
        log_hermite_functions(self.reduced_coordinate(x), out);
        let shift = -self.length_scale().ln();
        out.iter_mut().for_each(|v| *v = 2.0 * *v + shift);
    }

    /// `ln(e^{-βE_n}/Z)` over the truncated spectrum `n ≤ n_max`.
    ///
    /// `beta = f64::INFINITY` selects the ground state alone.
    pub fn log_boltzmann_weights(&self, beta: f64) -> Vec<f64> {
        let spacing = self.level_spacing();
        let raw: Vec<f64> = (0..=self.n_max)
            .map(|n| {
                if n == 0 {
                    0.0
                } else {
                    -beta * spacing * n as f64
                }
            })
            .collect();
        let log_z = log_sum_exp(&raw);
        raw.into_iter().map(|v| v - log_z).collect()
    }

    /// Position variance of the truncated thermal mixture.
    pub fn thermal_variance(&self, beta: f64) -> f64 {
        let mean_level: f64 = self
            .log_boltzmann_weights(beta)
            .iter()
            .enumerate()
            .map(|(n, lw)| lw.exp() * (n as f64 + 0.5))
            .sum();
        mean_level * self.length_scale().powi(2)
    }

    /// Fourth central moment of the truncated thermal mixture.
    pub fn thermal_fourth_moment(&self, beta: f64) -> f64 {
        let m4: f64 = self
            .log_boltzmann_weights(beta)
            .iter()
            .enumerate()
            .map(|(n, lw)| {
                let n = n as f64;
                lw.exp() * 0.75 * (2.0 * n * n + 2.0 * n + 1.0)
            })
            .sum();
        m4 * self.length_scale().powi(4)
    }

    /// Highest level whose Boltzmann weight relative to the ground state
    /// exceeds `cutoff`.
    pub fn effective_n_max(&self, beta: f64, cutoff: f64) -> usize {
        let lw = self.log_boltzmann_weights(beta);
        let floor = lw[0] + cutoff.ln();
        lw.iter().rposition(|v| *v > floor).unwrap_or(0)
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{trapezoid, GridSpec};

    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
        let g = GridSpec::new(lo, hi, points).unwrap();
        let v: Vec<f64> = g.iter().map(f).collect();
        trapezoid(&v, g.step())
    }

    #[test]
    fn hermite_examples() {
        assert_eq!(hermite_poly(0, 3.7), 1.0);
        assert_eq!(hermite_poly(1, 0.5), 1.0);
        assert_eq!(hermite_poly(3, 1.0), -4.0);
        // H_4(y) = 16y⁴ − 48y² + 12
        assert!((hermite_poly(4, 0.3) - (16.0 * 0.0081 - 48.0 * 0.09 + 12.0)).abs() < 1e-12);
    }

    #[test]
    fn normalized_functions_match_raw_polynomials() {
        let mut fact = 1.0;
        for n in 0..20usize {
            if n > 0 {
                fact *= n as f64;
            }
            for &y in &[-2.3, -0.4, 0.0, 0.7, 3.1] {
                let raw = hermite_poly(n, y) * (-0.5 * y * y).exp()
                    / (2f64.powi(n as i32) * fact * PI.sqrt()).sqrt();
                let log = log_hermite_function(n, y);
                if raw == 0.0 {
                    assert_eq!(log, f64::NEG_INFINITY);
                } else {
                    assert!((raw.abs().ln() - log).abs() < 1e-10, "n={n} y={y}");
                }
            }
        }
    }

    #[test]
    fn high_quantum_numbers_stay_finite() {
        let p = integrate(|x| center_prob_density(200, 0.0, x), -30.0, 30.0, 12001);
        assert!((p - 1.0).abs() < 1e-9, "{p}");
        assert!(log_hermite_function(180, 60.0).is_finite());
    }

    #[test]
    fn center_eigenvalues() {
        assert_eq!(center_eigenvalue(0, 0.0), 0.5);
        assert_eq!(center_eigenvalue(2, 0.0), 2.5);
        assert_eq!(center_eigenvalue(0, 1.0), 0.625);
        for n in 0..30 {
            assert!(center_eigenvalue(n + 1, 0.7) > center_eigenvalue(n, 0.7));
        }
    }

    #[test]
    fn center_density_examples() {
        assert!((center_prob_density(0, 0.0, 0.0) - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert_eq!(center_prob_density(1, 0.0, 0.0), 0.0);
        let norm = integrate(|x| center_prob_density(5, 1.0, x), -8.0, 9.0, 4001);
        assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn orthonormality_on_default_grid() {
        for n in 0..=20 {
            let c = integrate(|x| center_prob_density(n, 0.3, x), -12.0, 12.3, 4001);
            let s = integrate(|x| spring_prob_density(n, 1.3, x), -12.0, 12.0, 4001);
            assert!((c - 1.0).abs() < 1e-8, "center n={n}: {c}");
            assert!((s - 1.0).abs() < 1e-8, "spring n={n}: {s}");
        }
    }

    #[test]
    fn translation_covariance() {
        for n in [0, 1, 4, 9] {
            for &x in &[-1.5, 0.2, 0.9, 2.4] {
                let a = center_prob_density(n, 0.8, x);
                let b = center_prob_density(n, 0.0, x - 0.4);
                assert!((a - b).abs() <= 1e-14 * a.max(1e-300));
            }
        }
    }

    #[test]
    fn node_count_matches_quantum_number() {
        let g = GridSpec::new(-10.0, 10.0, 20000).unwrap();
        for n in 0..=8usize {
            let mut sign_changes = 0;
            let mut prev: Option<f64> = None;
            for x in g.iter() {
                let xi = x;
                let v = hermite_poly(n, xi);
                if let Some(p) = prev {
                    if p * v < 0.0 {
                        sign_changes += 1;
                    }
                }
                prev = Some(v);
            }
            assert_eq!(sign_changes, n);
        }
    }

    #[test]
    fn spring_frequency_examples() {
        assert_eq!(spring_frequency(1, 0.42, 1.0).unwrap(), 1.0);
        assert!((spring_frequency(11, 0.069, 1.0).unwrap() - 1.3).abs() < 1e-12);
        assert!((spring_frequency(2, -0.5, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(spring_frequency(3, -0.5, 1.0).is_err());
        assert!(spring_frequency(4, -0.5, 1.0).is_err());
    }

    #[test]
    fn spring_spectrum_examples() {
        assert_eq!(spring_eigenvalue(0, 1.0), 0.5);
        assert_eq!(spring_eigenvalue(3, 1.0), 3.5);
        assert!((spring_eigenvalue(0, 1.3) - 0.65).abs() < 1e-15);
        assert!((spring_prob_density(0, 1.0, 0.0) - 1.0 / PI.sqrt()).abs() < 1e-15);
        let norm = integrate(|x| spring_prob_density(0, 1.3, x), -8.0, 8.0, 4001);
        assert!((norm - 1.0).abs() < 1e-12);
        let var = integrate(|x| x * x * spring_prob_density(0, 1.3, x), -8.0, 8.0, 4001);
        assert!((var - 1.0 / 2.6).abs() < 1e-12);
    }

    #[test]
    fn center_free_energy_examples() {
        assert!((analytic_target_center(1.0) - 0.25).abs() < 1e-15);
        assert_eq!(analytic_target_center(0.0), 0.0);
        let f0 = analytic_free_energy_center(0.0, 1.0);
        assert!((f0 - (1f64.exp() - (-1f64).exp()).ln()).abs() < 1e-14);
        assert!((f0 - 0.85463).abs() < 1e-4);
        for l in [0.1, 0.37, 1.0, 2.5] {
            assert!((analytic_target_center(2.0 * l) - 4.0 * analytic_target_center(l)).abs() < 1e-14);
            let diff = analytic_free_energy_center(l, 2.0) - analytic_free_energy_center(0.0, 2.0);
            assert!((diff - analytic_target_center(l)).abs() < 1e-14);
        }
        // large a stays finite
        assert!((analytic_free_energy_center(0.0, 800.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spring_target_examples() {
        let t = analytic_target_spring(0.1, 1.3);
        let direct = 10.0 * ((0.065f64).sinh() / (0.05f64).sinh()).ln();
        assert!((t - direct).abs() < 1e-12);
        assert!((t - 2.626).abs() < 1e-3);
        // classical limit kT ln(ω_s/ω₀)
        assert!((t - 10.0 * 1.3f64.ln()).abs() < 5e-3);
        assert_eq!(analytic_target_spring(0.7, 1.0), 0.0);
        assert!((analytic_target_spring(1e4, 1.3) - 0.15).abs() < 1e-6);
    }

    #[test]
    fn boltzmann_weights_normalize() {
        let s = OscillatorSpectrum::center(1, 0.0, 10);
        let w: f64 = s.log_boltzmann_weights(1.0).iter().map(|v| v.exp()).sum();
        assert!((w - 1.0).abs() < 1e-14);
        let ground = s.log_boltzmann_weights(f64::INFINITY);
        assert_eq!(ground[0], 0.0);
        assert!(ground[1..].iter().all(|v| *v == f64::NEG_INFINITY));
        // exact thermal variance coth(a)/2 once truncation is negligible
        let v = OscillatorSpectrum::center(1, 0.0, 60).thermal_variance(1.0);
        assert!((v - 0.5 / 1f64.tanh()).abs() < 1e-12);
    }
}
