//! Free-energy changes of driven quantum harmonic oscillators from
//! step-wise pulling work distributions.
//!
//! A control parameter (trap position or trap stiffness) jumps through `s`
//! values with full thermal relaxation after each jump. The work performed
//! per jump depends only on the instantaneous reaction coordinate, so the
//! accumulated work distribution follows from the Boltzmann-weighted
//! eigenfunction densities by repeated convolution, and the free-energy
//! change follows from its exponential average.
//!
//! * [`spectra`]: eigenvalues, eigenfunction densities, analytic free energies.
//! * [`protocol`]: pull schedules and their grids.
//! * [`workdist`]: fluctuation densities, work increments, the recursion.
//! * [`free_energy`]: exponential averages, profiles and closed forms.
//! * [`pathways`]: transition conditions and the pathway decomposition.
//! * [`cli`]: the `stepwise` command-line front end.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod free_energy;
pub mod grid;
pub mod pathways;
pub mod protocol;
pub mod spectra;
pub mod workdist;

pub use error::{Error, Result};
pub use free_energy::{free_energy_profile, FreeEnergyProfile};
pub use grid::{Density1D, GridSpec, GriddedDensity};
pub use protocol::{build_center_schedule, build_spring_schedule, ProtocolKind, PullSchedule};
pub use spectra::{OscillatorSpectrum, UnitSystem};
pub use workdist::{WorkLedger, WorkMap};
