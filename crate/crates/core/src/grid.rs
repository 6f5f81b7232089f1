//! Uniform one-dimensional grids and densities sampled on them.
//!
//! Every distribution in the crate (fluctuation densities over the reaction
//! coordinate, work-increment densities and accumulated work distributions)
//! is a [`GriddedDensity`]. Integrals use the composite trapezoid rule, which
//! is spectrally accurate for the smooth, rapidly decaying integrands that
//! appear here.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Anything that can be evaluated as a density at an arbitrary coordinate.
pub trait Density1D {
    fn density(&self, x: f64) -> f64;
}

/// A uniform grid `min, min + h, ..., max` with `points` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(invalid(format!("grid bounds must be finite ({min}, {max})")));
        }
        if max <= min {
            return Err(invalid(format!("grid max {max} must exceed min {min}")));
        }
        if points < 2 {
            return Err(invalid(format!("grid needs at least 2 points, got {points}")));
        }
        Ok(Self { min, max, points })
    }

    /// Grid of spacing `step` whose nodes are integer multiples of `step`,
    /// covering at least `[lo, hi]`.
    pub fn lattice(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid(format!("lattice step must be positive, got {step}")));
        }
        let k_lo = (lo / step).floor() as i64;
        let mut k_hi = (hi / step).ceil() as i64;
        if k_hi <= k_lo {
            k_hi = k_lo + 1;
        }
        Self::new(
            k_lo as f64 * step,
            k_hi as f64 * step,
            (k_hi - k_lo + 1) as usize,
        )
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn point(&self, k: usize) -> f64 {
        if k + 1 == self.points {
            self.max
        } else {
            self.min + k as f64 * self.step()
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |k| self.point(k))
    }

    /// Lattice index of the first node, i.e. `min / step` rounded.
    pub fn lattice_origin(&self) -> i64 {
        (self.min / self.step()).round() as i64
    }

    /// Index of the node closest to `x`, if `x` lies inside the grid.
    pub fn nearest_index(&self, x: f64) -> Option<usize> {
        if x < self.min - 0.5 * self.step() || x > self.max + 0.5 * self.step() {
            return None;
        }
        let k = ((x - self.min) / self.step()).round();
        Some((k.max(0.0) as usize).min(self.points - 1))
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let interior: f64 = values.iter().sum();
            step * (interior - 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Nonnegative function sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDensity {
    grid: GridSpec,
    values: Vec<f64>,
    normalized: bool,
}

impl GriddedDensity {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.points {
            return Err(invalid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.points
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("density values must be finite and >= 0, found {v}")));
        }
        Ok(Self {
            grid,
            values,
            normalized: false,
        })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(f).collect();
        Self::new(grid, values)
    }

    /// Unit mass concentrated on the lattice node nearest `at`.
    pub fn point_mass(grid: GridSpec, at: f64) -> Result<Self> {
        let k = grid
            .nearest_index(at)
            .ok_or_else(|| invalid(format!("point mass location {at} is off the grid")))?;
        if k == 0 || k + 1 == grid.points {
            return Err(invalid("point mass must sit on an interior node"));
        }
        let mut values = vec![0.0; grid.points];
        values[k] = 1.0 / grid.step();
        Ok(Self {
            grid,
            values,
            normalized: true,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.step())
    }

    /// Rescales to unit mass and returns the factor applied.
    pub fn normalize(&mut self) -> Result<f64> {
        let mass = self.integral();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid(format!("cannot normalize a density of mass {mass}")));
        }
        let factor = 1.0 / mass;
        self.values.iter_mut().for_each(|v| *v *= factor);
        self.normalized = true;
        Ok(factor)
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Trapezoid expectation of `g` under the (assumed normalized) density.
    pub fn expectation(&self, g: impl Fn(f64) -> f64) -> f64 {
        let weighted: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(x, v)| if *v == 0.0 { 0.0 } else { v * g(x) })
            .collect();
        trapezoid(&weighted, self.grid.step())
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|x| x) / self.integral()
    }

    pub fn variance(&self) -> f64 {
        let mass = self.integral();
        let mean = self.expectation(|x| x) / mass;
        (self.expectation(|x| (x - mean) * (x - mean)) / mass).max(0.0)
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        best
    }

    /// Writes `coordinate,value` rows after the given header.
    pub fn write_csv<W: Write>(&self, mut out: W, header: (&str, &str)) -> io::Result<()> {
        writeln!(out, "{},{}", header.0, header.1)?;
        for (x, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{},{}", fmt_num(x), fmt_num(*v))?;
        }
        Ok(())
    }
}

impl Density1D for GriddedDensity {
    /// Linear interpolation, zero outside the grid.
    fn density(&self, x: f64) -> f64 {
        let h = self.grid.step();
        let t = (x - self.grid.min) / h;
        if !(0.0..=(self.grid.points - 1) as f64).contains(&t) {
            return 0.0;
        }
        let k = (t.floor() as usize).min(self.grid.points - 2);
        let frac = t - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }
}

/// Locale-independent number formatting with 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".to_string()
        } else if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    format!("{v:.11e}")
}

impl From<GriddedDensity> for Vec<f64> {
    fn from(d: GriddedDensity) -> Self {
        d.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_contains_zero_node() {
        let g = GridSpec::lattice(-0.33, 1.2, 0.1).unwrap();
        assert_eq!(g.lattice_origin(), -4);
        let k = g.nearest_index(0.0).unwrap();
        assert!(g.point(k).abs() < 1e-12);
        assert!(g.max >= 1.2 && g.min <= -0.33);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(1.0, 1.0, 10).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1).is_err());
        assert!(GridSpec::new(0.0, f64::INFINITY, 10).is_err());
    }

    #[test]
    fn trapezoid_gaussian() {
        let g = GridSpec::new(-10.0, 10.0, 2001).unwrap();
        let d = GriddedDensity::from_fn(g, |x| (-x * x).exp() / std::f64::consts::PI.sqrt())
            .unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-13);
        assert!(d.mean().abs() < 1e-13);
        assert!((d.variance() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn point_mass_has_unit_mass_and_no_spread() {
        let g = GridSpec::lattice(-1.0, 1.0, 0.25).unwrap();
        let d = GriddedDensity::point_mass(g, 0.0).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-14);
        assert_eq!(d.mean(), 0.0);
        assert_eq!(d.variance(), 0.0);
    }

    #[test]
    fn negative_values_rejected() {
        let g = GridSpec::new(0.0, 1.0, 3).unwrap();
        assert!(GriddedDensity::new(g, vec![0.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn interpolation_is_linear_between_nodes() {
        let g = GridSpec::new(0.0, 2.0, 3).unwrap();
        let d = GriddedDensity::new(g, vec![0.0, 2.0, 4.0]).unwrap();
        assert_eq!(d.density(0.5), 1.0);
        assert_eq!(d.density(2.0), 4.0);
        assert_eq!(d.density(2.5), 0.0);
    }

    #[test]
    fn number_format_is_twelve_significant_digits() {
        assert_eq!(fmt_num(0.25), "2.50000000000e-1");
        assert_eq!(fmt_num(-1234.5), "-1.23450000000e3");
        assert_eq!(fmt_num(0.0), "0");
    }
}
