//! Transition conditions between successive pulling steps and the
//! decomposition of the free-energy change over enumerated pathways.
//!
//! A transition from step `i−1` to step `i` is described by positions
//! `(x_prev, x_next)` and levels `(n_prev, n_next)`. Three log-residuals are
//! tested against a tolerance:
//!
//! ```text
//! r12a = ln[|ψ_{n_next}(x_next; i)|² / |ψ_{n_prev}(x_prev; i−1)|²] − β(E_next − E_prev + δW_{i−1}(x_prev))
//! r12b = ln[|ψ_{n_next}(x_next; i)|² / |ψ_{n_next}(x_prev; i)|²]    − β δW_{i−1}(x_prev)
//! r13  = ln[|ψ_{n_next}(x_prev; i)|² / |ψ_{n_prev}(x_next; i−1)|²]  − β(E_next − E_prev)
//! ```
//!
//! plus the direct quotient `r12a − r12b`, which pairs both levels at
//! `x_prev`. Densities below a floor of `eps` times the step's peak thermal
//! density make every residual undefined.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::free_energy::exponential_average;
use crate::grid::GriddedDensity;
use crate::protocol::PullSchedule;
use crate::workdist::{fluctuation_density, FluctuationDensity, StepKernel, WorkLedger};

/// Default log-ratio tolerance of the residual tests.
pub const DEFAULT_TOL: f64 = 0.05;
/// Default density floor, relative to each step's peak thermal density.
pub const DEFAULT_EPS: f64 = 1e-12;
/// Enumeration limits: at most this many steps and levels `0..=5`.
pub const MAX_ENUM_STEPS: usize = 4;
pub const MAX_ENUM_N_MAX: usize = 5;
/// Nodes per step of the enumeration grids.
pub const ENUM_POINTS: usize = 50;
/// Enumeration grids cover the region where `f_j` exceeds this fraction of
/// its peak.
pub const ENUM_COVERAGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathwayClass {
    /// Both transition conditions hold.
    Optimal,
    /// Exactly one of the two transition conditions holds.
    Deterministic,
    /// Neither transition condition holds but detailed balance does.
    Stochastic,
    Biased,
}

impl PathwayClass {
    pub const ALL: [PathwayClass; 4] = [
        PathwayClass::Optimal,
        PathwayClass::Deterministic,
        PathwayClass::Stochastic,
        PathwayClass::Biased,
    ];

    pub fn classify(pass_a: bool, pass_b: bool, pass_c: bool) -> Self {
        match (pass_a, pass_b) {
            (true, true) => PathwayClass::Optimal,
            (true, false) | (false, true) => PathwayClass::Deterministic,
            (false, false) if pass_c => PathwayClass::Stochastic,
            _ => PathwayClass::Biased,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PathwayClass::Optimal => "optimal",
            PathwayClass::Deterministic => "deterministic",
            PathwayClass::Stochastic => "stochastic",
            PathwayClass::Biased => "biased",
        }
    }
}

/// One candidate transition with its residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    /// Index `i` of the step being entered.
    pub step: usize,
    pub x_prev: f64,
    pub x_next: f64,
    pub n_prev: usize,
    pub n_next: usize,
    pub e_prev: f64,
    pub e_next: f64,
    pub r12a: f64,
    pub r12b: f64,
    pub r13: f64,
    pub r_quotient: f64,
    pub class: PathwayClass,
}

/// Fluctuation densities and density floors shared by every residual
/// evaluation of one schedule.
#[derive(Debug, Clone)]
pub struct PathwayContext<'a> {
    schedule: &'a PullSchedule,
    fluctuations: Vec<FluctuationDensity>,
    floors: Vec<f64>,
}

impl<'a> PathwayContext<'a> {
    pub fn new(schedule: &'a PullSchedule, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(invalid(format!("density floor must be nonnegative, got {eps}")));
        }
        let fluctuations = (1..=schedule.s)
            .map(|i| fluctuation_density(&schedule.spectrum(i)?, schedule.beta(), &schedule.x_grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::with_fluctuations(schedule, fluctuations, eps))
    }

    fn with_fluctuations(schedule: &'a PullSchedule, fluctuations: Vec<FluctuationDensity>, eps: f64) -> Self {
        let floors = fluctuations.iter().map(|f| eps * f.sampled().peak()).collect();
        Self {
            schedule,
            fluctuations,
            floors,
        }
    }

    pub fn schedule(&self) -> &PullSchedule {
        self.schedule
    }

    pub fn fluctuation(&self, step: usize) -> &FluctuationDensity {
        &self.fluctuations[step - 1]
    }

    pub fn floor(&self, step: usize) -> f64 {
        self.floors[step - 1]
    }

    fn check_transition(&self, i: usize, n_prev: usize, n_next: usize) -> Result<()> {
        if i < 2 || i > self.schedule.s {
            return Err(invalid(format!("transition into step {i} outside 2..={}", self.schedule.s)));
        }
        if n_prev > self.schedule.n_max || n_next > self.schedule.n_max {
            return Err(invalid(format!("levels must not exceed n_max = {}", self.schedule.n_max)));
        }
        Ok(())
    }

    /// `ln |ψ_n(x)|²` of step `step`, rejected at or below the floor.
    pub fn log_density(&self, step: usize, n: usize, x: f64) -> Result<f64> {
        let ld = self.schedule.spectrum(step)?.log_density(n, x);
        let floor = self.floor(step);
        if !(ld > floor.ln()) {
            return Err(Error::DensityFloor {
                x,
                density: ld.exp(),
                floor,
            });
        }
        Ok(ld)
    }

    fn energy(&self, step: usize, n: usize) -> Result<f64> {
        Ok(self.schedule.spectrum(step)?.eigenvalue(n))
    }

    fn work(&self, i: usize, x_prev: f64) -> Result<f64> {
        Ok(self.schedule.work_map(i - 1)?.eval(x_prev))
    }

    pub fn residual_12a(&self, i: usize, x_prev: f64, x_next: f64, n_prev: usize, n_next: usize) -> Result<f64> {
        self.check_transition(i, n_prev, n_next)?;
        let beta = self.schedule.beta();
        let de = self.energy(i, n_next)? - self.energy(i - 1, n_prev)?;
        Ok(self.log_density(i, n_next, x_next)? - self.log_density(i - 1, n_prev, x_prev)?
            - beta * (de + self.work(i, x_prev)?))
    }

    pub fn residual_12b(&self, i: usize, x_prev: f64, x_next: f64, n_next: usize) -> Result<f64> {
        self.check_transition(i, 0, n_next)?;
        let beta = self.schedule.beta();
        Ok(self.log_density(i, n_next, x_next)? - self.log_density(i, n_next, x_prev)?
            - beta * self.work(i, x_prev)?)
    }

    pub fn residual_13(&self, i: usize, x_prev: f64, x_next: f64, n_prev: usize, n_next: usize) -> Result<f64> {
        self.check_transition(i, n_prev, n_next)?;
        let beta = self.schedule.beta();
        let de = self.energy(i, n_next)? - self.energy(i - 1, n_prev)?;
        Ok(self.log_density(i, n_next, x_prev)? - self.log_density(i - 1, n_prev, x_next)? - beta * de)
    }

    /// `ln[|ψ_{n_next}(x_prev; i)|² / |ψ_{n_prev}(x_prev; i−1)|²] − β(E_next − E_prev)`.
    pub fn residual_quotient(&self, i: usize, x_prev: f64, n_prev: usize, n_next: usize) -> Result<f64> {
        self.check_transition(i, n_prev, n_next)?;
        let beta = self.schedule.beta();
        let de = self.energy(i, n_next)? - self.energy(i - 1, n_prev)?;
        Ok(self.log_density(i, n_next, x_prev)? - self.log_density(i - 1, n_prev, x_prev)? - beta * de)
    }

    /// All residuals of one transition and its class under `tol`.
    pub fn record(
        &self,
        i: usize,
        x_prev: f64,
        x_next: f64,
        n_prev: usize,
        n_next: usize,
        tol: f64,
    ) -> Result<TransitionRecord> {
        let r12a = self.residual_12a(i, x_prev, x_next, n_prev, n_next)?;
        let r12b = self.residual_12b(i, x_prev, x_next, n_next)?;
        let r13 = self.residual_13(i, x_prev, x_next, n_prev, n_next)?;
        let r_quotient = self.residual_quotient(i, x_prev, n_prev, n_next)?;
        Ok(TransitionRecord {
            step: i,
            x_prev,
            x_next,
            n_prev,
            n_next,
            e_prev: self.energy(i - 1, n_prev)?,
            e_next: self.energy(i, n_next)?,
            r12a,
            r12b,
            r13,
            r_quotient,
            class: PathwayClass::classify(r12a.abs() <= tol, r12b.abs() <= tol, r13.abs() <= tol),
        })
    }
}

/// Symmetric midpoint grid of `points` nodes about the step's density
/// center, spanning the region where the thermal density exceeds
/// [`ENUM_COVERAGE`] of its peak.
pub fn enumeration_grid(f: &FluctuationDensity, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !points.is_multiple_of(2) {
        return Err(invalid(format!("enumeration grids need an even number >= 2 of points, got {points}")));
    }
    let sampled = f.sampled();
    let threshold = ENUM_COVERAGE * sampled.peak();
    let vals = sampled.values();
    let lo = vals.iter().position(|v| *v >= threshold).unwrap_or(0);
    let hi = vals.iter().rposition(|v| *v >= threshold).unwrap_or(vals.len() - 1);
    let mu = f.spectrum().center_position();
    let g = sampled.grid();
    let half = (mu - g.point(lo)).abs().max((g.point(hi) - mu).abs());
    Ok(symmetric_grid(mu, half, points))
}

fn symmetric_grid(mu: f64, half: f64, points: usize) -> Vec<f64> {
    let h = 2.0 * half / points as f64;
    (0..points)
        .map(|k| mu + (k as f64 + 0.5 - 0.5 * points as f64) * h)
        .collect()
}

/// Per `(n_prev, n_next)` pair: summed densities of the matched transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBalance {
    pub n_prev: usize,
    pub n_next: usize,
    pub matched: usize,
    /// `Σ |ψ_{n_next}(x_prev; i)|²` over matched pairs.
    pub p_forward: f64,
    /// `Σ |ψ_{n_prev}(x_next; i−1)|²` over matched pairs.
    pub p_backward: f64,
    /// `ln(P→/P←) − β(E_next − E_prev)`; absent without matches.
    pub balance_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSearch {
    pub step: usize,
    pub tol: f64,
    pub records: Vec<TransitionRecord>,
    pub pairs: Vec<PairBalance>,
}

/// Every transition into step `i` on the enumeration grids whose `r12a`
/// and `r12b` both lie within `tol`.
pub fn find_optimal_transitions(
    schedule: &PullSchedule,
    i: usize,
    tol: f64,
    eps: f64,
) -> Result<TransitionSearch> {
    let ctx = PathwayContext::new(schedule, eps)?;
    search_transitions(&ctx, i, tol, ENUM_POINTS)
}

pub fn search_transitions(ctx: &PathwayContext, i: usize, tol: f64, points: usize) -> Result<TransitionSearch> {
    let schedule = ctx.schedule();
    if i < 2 || i > schedule.s {
        return Err(invalid(format!("transition into step {i} outside 2..={}", schedule.s)));
    }
    if !(tol >= 0.0) {
        return Err(invalid(format!("tolerance must be nonnegative, got {tol}")));
    }
    let xs_prev = enumeration_grid(ctx.fluctuation(i - 1), points)?;
    let xs_next = enumeration_grid(ctx.fluctuation(i), points)?;
    let levels = schedule.n_max + 1;
    let beta = schedule.beta();
    let pairs: Vec<(usize, usize)> = (0..levels).flat_map(|a| (0..levels).map(move |b| (a, b))).collect();
    let found: Vec<(Vec<TransitionRecord>, PairBalance)> = pairs
        .par_iter()
        .map(|&(n_prev, n_next)| {
            let mut records = Vec::new();
            let (mut pf, mut pb) = (0.0, 0.0);
            for &xp in &xs_prev {
                for &xn in &xs_next {
                    let Ok(rec) = ctx.record(i, xp, xn, n_prev, n_next, tol) else {
                        continue;
                    };
                    if rec.class == PathwayClass::Optimal {
                        // both densities passed the floor inside `record`
                        pf += ctx.log_density(i, n_next, xp).map(f64::exp).unwrap_or(0.0);
                        pb += ctx.log_density(i - 1, n_prev, xn).map(f64::exp).unwrap_or(0.0);
                        records.push(rec);
                    }
                }
            }
            let de = ctx.energy(i, n_next).unwrap_or(0.0) - ctx.energy(i - 1, n_prev).unwrap_or(0.0);
            let balance_residual = (pf > 0.0 && pb > 0.0).then(|| (pf / pb).ln() - beta * de);
            let bal = PairBalance {
                n_prev,
                n_next,
                matched: records.len(),
                p_forward: pf,
                p_backward: pb,
                balance_residual,
            };
            (records, bal)
        })
        .collect();
    let mut records = Vec::new();
    let mut balances = Vec::new();
    for (r, b) in found {
        records.extend(r);
        balances.push(b);
    }
    Ok(TransitionSearch {
        step: i,
        tol,
        records,
        pairs: balances,
    })
}

/// Soft-matched detailed-balance residual of the level pair
/// `(n_prev, n_next)` for the transition into step `i`.
///
/// Every pair of positions on `points`-node grids spanning `±half_width`
/// about each step's density center is weighted by `exp(−r13²/2tol²)`;
/// `P→ = Σ K |ψ_{n_next}(x_prev; i)|²` and `P← = Σ K |ψ_{n_prev}(x_next; i−1)|²`.
/// Returns `ln(P→/P←) − β(E_next − E_prev)`.
pub fn detailed_balance_residual(
    ctx: &PathwayContext,
    i: usize,
    n_prev: usize,
    n_next: usize,
    points: usize,
    tol: f64,
    half_width: f64,
) -> Result<f64> {
    ctx.check_transition(i, n_prev, n_next)?;
    if !(tol > 0.0) {
        return Err(invalid(format!("soft matching needs tol > 0, got {tol}")));
    }
    let schedule = ctx.schedule();
    let beta = schedule.beta();
    let sp_prev = schedule.spectrum(i - 1)?;
    let sp_next = schedule.spectrum(i)?;
    let de = sp_next.eigenvalue(n_next) - sp_prev.eigenvalue(n_prev);
    let xs_prev = symmetric_grid(sp_prev.center_position(), half_width, points);
    let xs_next = symmetric_grid(sp_next.center_position(), half_width, points);
    let fwd: Vec<Option<f64>> = xs_prev.iter().map(|x| ctx.log_density(i, n_next, *x).ok()).collect();
    let bwd: Vec<Option<f64>> = xs_next.iter().map(|x| ctx.log_density(i - 1, n_prev, *x).ok()).collect();
    let partial: Vec<(f64, f64)> = fwd
        .par_iter()
        .map(|lf| {
            let Some(lf) = lf else { return (0.0, 0.0) };
            let (mut a, mut b) = (0.0, 0.0);
            for lb in bwd.iter().flatten() {
                let r = lf - lb - beta * de;
                let k = (-0.5 * r * r / (tol * tol)).exp();
                a += k * lf.exp();
                b += k * lb.exp();
            }
            (a, b)
        })
        .collect();
    // sequential sum keeps the result independent of the thread count
    let (pf, pb) = partial.iter().fold((0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    if !(pf > 0.0 && pb > 0.0) {
        return Err(Error::NonPositiveAverage { value: pf.min(pb) });
    }
    Ok((pf / pb).ln() - beta * de)
}

/// `(Δx, overlap mass)` of two densities sampled on the same grid: the
/// length of the set where both exceed `eps` times the larger peak, and
/// `∫ min(f_prev, f_next) dx`.
pub fn overlap_measure(f_prev: &GriddedDensity, f_next: &GriddedDensity, eps: f64) -> Result<(f64, f64)> {
    if f_prev.grid() != f_next.grid() {
        return Err(invalid("overlap needs both densities on the same grid"));
    }
    let h = f_prev.grid().step();
    let threshold = eps * f_prev.peak().max(f_next.peak());
    let mins: Vec<f64> = f_prev
        .values()
        .iter()
        .zip(f_next.values())
        .map(|(a, b)| a.min(*b))
        .collect();
    let width = mins.iter().filter(|m| **m > threshold).count() as f64 * h;
    Ok((width, crate::grid::trapezoid(&mins, h)))
}

fn check_enumeration_cap(schedule: &PullSchedule) -> Result<()> {
    if schedule.s > MAX_ENUM_STEPS || schedule.n_max > MAX_ENUM_N_MAX {
        return Err(Error::EnumerationCap(format!(
            "s = {} and n_max = {} exceed the limits s <= {MAX_ENUM_STEPS}, n_max <= {MAX_ENUM_N_MAX}",
            schedule.s, schedule.n_max
        )));
    }
    Ok(())
}

/// Work density of the level path `levels = (n_1, …, n_{s−1})`, carrying
/// the Boltzmann weight of each level. Summed over every level path it
/// reproduces the total work density. With `tilted = true` the result is
/// additionally multiplied by `e^{−βW}`.
pub fn pathway_work_distribution(levels: &[usize], schedule: &PullSchedule, tilted: bool) -> Result<GriddedDensity> {
    check_enumeration_cap(schedule)?;
    if levels.len() + 1 != schedule.s {
        return Err(invalid(format!(
            "a level path needs s − 1 = {} entries, got {}",
            schedule.s - 1,
            levels.len()
        )));
    }
    let beta = schedule.beta();
    let h = schedule.w_grid.step();
    let mut rho = GriddedDensity::point_mass(schedule.w_grid, 0.0)?;
    for (j, &n) in levels.iter().enumerate() {
        let step = j + 1;
        if n > schedule.n_max {
            return Err(invalid(format!("level {n} exceeds n_max = {}", schedule.n_max)));
        }
        let f = FluctuationDensity::single_level(&schedule.spectrum(step)?, beta, n, &schedule.x_grid)?;
        let kernel = StepKernel::build(step, &f, &schedule.work_map(step)?, h, beta)?;
        rho = GriddedDensity::new(schedule.w_grid, crate::workdist::convolve(rho.values(), &kernel))?;
    }
    if tilted {
        let values = schedule
            .w_grid
            .iter()
            .zip(rho.values())
            .map(|(w, v)| v * (-beta * w).exp())
            .collect();
        rho = GriddedDensity::new(schedule.w_grid, values)?;
    }
    Ok(rho)
}

/// Every level path `(n_1, …, n_{s−1})` of the schedule.
pub fn level_paths(schedule: &PullSchedule) -> Vec<Vec<usize>> {
    let mut paths = vec![Vec::new()];
    for _ in 1..schedule.s {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                (0..=schedule.n_max).map(move |n| {
                    let mut q = p.clone();
                    q.push(n);
                    q
                })
            })
            .collect();
    }
    paths
}

/// Contributions of each pathway class to `⟨e^{−βW}⟩` and the matching
/// free-energy terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayDecomposition {
    pub tol: f64,
    pub eps: f64,
    /// Four-way terms; `None` (serialized as null) when a class contributes
    /// nothing.
    pub delta_f_s: Option<f64>,
    pub delta_f_d: Option<f64>,
    pub delta_f_op: Option<f64>,
    pub delta_f_b: Option<f64>,
    /// ΔF of the whole enumeration.
    pub delta_f_total: f64,
    /// ΔF of the recursion on the full grids.
    pub delta_f_recursion: f64,
    pub contribution_optimal: f64,
    pub contribution_deterministic: f64,
    pub contribution_stochastic: f64,
    pub contribution_biased: f64,
    pub count_optimal: u64,
    pub count_deterministic: u64,
    pub count_stochastic: u64,
    pub count_biased: u64,
    /// `|e^{−βΔF_S} + e^{−βΔF_D} − e^{−βΔF_OP} + e^{−βΔF_B} − e^{−βΔF}|`
    /// relative to `e^{−βΔF}`.
    pub reconstruction_error: f64,
    /// `(Δx, overlap mass)` between successive steps `i−1, i` for `i = 2..=s`.
    pub overlaps: Vec<(f64, f64)>,
}

impl PathwayDecomposition {
    pub fn biased_fraction(&self) -> f64 {
        self.contribution_biased / self.total_contribution()
    }

    pub fn total_contribution(&self) -> f64 {
        self.contribution_optimal
            + self.contribution_deterministic
            + self.contribution_stochastic
            + self.contribution_biased
    }
}

const MASK_A: usize = 1;
const MASK_B: usize = 2;
const MASK_C: usize = 4;
const MASK_ALL: usize = 7;

/// Enumerates every `(level path, position path)` on the enumeration grids,
/// classifies each by its transitions and accumulates the class
/// contributions to `⟨e^{−βW}⟩`.
pub fn decompose_free_energy(schedule: &PullSchedule, tol: f64, eps: f64) -> Result<PathwayDecomposition> {
    check_enumeration_cap(schedule)?;
    if !(tol >= 0.0) {
        return Err(invalid(format!("tolerance must be nonnegative, got {tol}")));
    }
    let beta = schedule.beta();
    let ledger = WorkLedger::build(schedule)?;
    let delta_f_recursion = exponential_average(ledger.final_distribution(), beta)?;
    let ctx = PathwayContext::with_fluctuations(schedule, ledger.fluctuations.clone(), eps);
    let overlaps = (2..=schedule.s)
        .map(|i| overlap_measure(ctx.fluctuation(i - 1).sampled(), ctx.fluctuation(i).sampled(), eps))
        .collect::<Result<Vec<_>>>()?;

    let levels = schedule.n_max + 1;
    let steps = schedule.s - 1;
    // per step j: state (n, k) → weight h w_n |ψ_n(x_k)|² e^{−β δW_j(x_k)}
    let mut grids = Vec::with_capacity(steps);
    let mut factors = Vec::with_capacity(steps);
    for j in 1..=steps {
        let f = ctx.fluctuation(j);
        let xs = enumeration_grid(f, ENUM_POINTS)?;
        let h = xs[1] - xs[0];
        let map = schedule.work_map(j)?;
        let spec = f.spectrum();
        let lw = spec.log_boltzmann_weights(beta);
        let mut fac = vec![0.0; levels * xs.len()];
        for n in 0..levels {
            for (k, &x) in xs.iter().enumerate() {
                fac[n * xs.len() + k] = h * (lw[n] + spec.log_density(n, x) - beta * map.eval(x)).exp();
            }
        }
        grids.push(xs);
        factors.push(fac);
    }

    // flags[t][(a, b)]: bit mask of the tests passed by the transition from
    // state a of step t+1 to state b of step t+2
    let flags: Vec<Vec<u8>> = (1..steps)
        .map(|t| {
            let i = t + 1;
            let (gp, gn) = (&grids[t - 1], &grids[t]);
            let states_next = levels * gn.len();
            (0..levels * gp.len())
                .into_par_iter()
                .flat_map_iter(|a| {
                    let (np, kp) = (a / gp.len(), a % gp.len());
                    let ctx = &ctx;
                    (0..states_next).map(move |b| {
                        let (nn, kn) = (b / gn.len(), b % gn.len());
                        let (xp, xn) = (gp[kp], gn[kn]);
                        let pass = |r: Result<f64>| r.is_ok_and(|v| v.abs() <= tol) as u8;
                        pass(ctx.residual_12a(i, xp, xn, np, nn))
                            | pass(ctx.residual_12b(i, xp, xn, nn)) << 1
                            | pass(ctx.residual_13(i, xp, xn, np, nn)) << 2
                    })
                })
                .collect()
        })
        .collect();

    // dynamic programme over steps, tracking the running AND of the masks
    let mut weight: Vec<[f64; 8]> = factors[0]
        .iter()
        .map(|w| {
            let mut v = [0.0; 8];
            v[MASK_ALL] = *w;
            v
        })
        .collect();
    let mut count: Vec<[u64; 8]> = factors[0]
        .iter()
        .map(|_| {
            let mut v = [0u64; 8];
            v[MASK_ALL] = 1;
            v
        })
        .collect();
    for t in 1..steps {
        let states_next = factors[t].len();
        let table = &flags[t - 1];
        let mut w_next = vec![[0.0; 8]; states_next];
        let mut c_next = vec![[0u64; 8]; states_next];
        for (a, (wa, ca)) in weight.iter().zip(&count).enumerate() {
            for b in 0..states_next {
                let mask = table[a * states_next + b] as usize;
                let fb = factors[t][b];
                for m in 0..8 {
                    if ca[m] == 0 {
                        continue;
                    }
                    w_next[b][m & mask] += wa[m] * fb;
                    c_next[b][m & mask] += ca[m];
                }
            }
        }
        weight = w_next;
        count = c_next;
    }

    let mut z = [0.0; 4];
    let mut n = [0u64; 4];
    for (w, c) in weight.iter().zip(&count) {
        for m in 0..8 {
            let class = PathwayClass::classify(m & MASK_A != 0, m & MASK_B != 0, m & MASK_C != 0);
            let slot = class as usize;
            z[slot] += w[m];
            n[slot] += c[m];
        }
    }
    let [z_opt, z_det, z_sto, z_bia] = z;
    let total = z_opt + z_det + z_sto + z_bia;
    if !(total > 0.0) {
        return Err(Error::NonPositiveAverage { value: total });
    }
    let df = |v: f64| (v > 0.0).then(|| -v.ln() / beta);
    let s_term = z_opt + z_sto;
    let d_term = z_opt + z_det;
    let recon = s_term + d_term - z_opt + z_bia;
    Ok(PathwayDecomposition {
        tol,
        eps,
        delta_f_s: df(s_term),
        delta_f_d: df(d_term),
        delta_f_op: df(z_opt),
        delta_f_b: df(z_bia),
        delta_f_total: -total.ln() / beta,
        delta_f_recursion,
        contribution_optimal: z_opt,
        contribution_deterministic: z_det,
        contribution_stochastic: z_sto,
        contribution_biased: z_bia,
        count_optimal: n[0],
        count_deterministic: n[1],
        count_stochastic: n[2],
        count_biased: n[3],
        reconstruction_error: ((recon - total) / total).abs(),
        overlaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::build_center_schedule;

    fn small() -> PullSchedule {
        build_center_schedule(1.0, 3, 1.0, 3).unwrap()
    }

    #[test]
    fn classification_table() {
        use PathwayClass::*;
        for c in [true, false] {
            assert_eq!(PathwayClass::classify(true, true, c), Optimal);
            assert_eq!(PathwayClass::classify(true, false, c), Deterministic);
            assert_eq!(PathwayClass::classify(false, true, c), Deterministic);
        }
        assert_eq!(PathwayClass::classify(false, false, true), Stochastic);
        assert_eq!(PathwayClass::classify(false, false, false), Biased);
        assert_eq!(PathwayClass::ALL.map(|c| c as usize), [0, 1, 2, 3]);
    }

    #[test]
    fn transition_residuals_differ_by_the_quotient() {
        let schedule = small();
        let ctx = PathwayContext::new(&schedule, DEFAULT_EPS).unwrap();
        for (xp, xn, np, nn) in [(0.1, 0.3, 0, 0), (-0.7, 1.2, 1, 3), (0.9, -0.4, 2, 1)] {
            let r = ctx.record(2, xp, xn, np, nn, 0.05).unwrap();
            assert!((r.r12a - r.r12b - r.r_quotient).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn zero_increment_diagonal_is_balanced() {
        let schedule = build_center_schedule(0.0, 3, 1.0, 3).unwrap();
        let ctx = PathwayContext::new(&schedule, DEFAULT_EPS).unwrap();
        for n in 0..=3 {
            for x in [-1.1, 0.35, 2.0] {
                let r = ctx.record(2, x, x, n, n, 1e-12).unwrap();
                assert!(r.r12a.abs() < 1e-12 && r.r12b.abs() < 1e-12 && r.r13.abs() < 1e-12);
                assert_eq!(r.class, PathwayClass::Optimal);
            }
        }
    }

    #[test]
    fn density_floor_is_enforced() {
        let schedule = small();
        let ctx = PathwayContext::new(&schedule, 1e-6).unwrap();
        assert!(ctx.log_density(2, 0, 0.05).is_ok());
        assert!(matches!(ctx.log_density(2, 0, 12.0), Err(Error::DensityFloor { .. })));
        // node of ψ_1 at the trap center
        let center = schedule.spectrum(2).unwrap().center_position();
        assert!(matches!(ctx.log_density(2, 1, center), Err(Error::DensityFloor { .. })));
        assert!(PathwayContext::new(&schedule, -1.0).is_err());
    }

    #[test]
    fn transitions_are_range_checked() {
        let schedule = small();
        let ctx = PathwayContext::new(&schedule, DEFAULT_EPS).unwrap();
        assert!(ctx.residual_13(1, 0.0, 0.0, 0, 0).is_err());
        assert!(ctx.residual_13(4, 0.0, 0.0, 0, 0).is_err());
        assert!(ctx.residual_13(2, 0.0, 0.0, 4, 0).is_err());
    }

    #[test]
    fn level_paths_cover_the_product() {
        let paths = level_paths(&small());
        assert_eq!(paths.len(), 16);
        assert_eq!(paths.first().unwrap(), &vec![0, 0]);
        assert_eq!(paths.last().unwrap(), &vec![3, 3]);
    }

    #[test]
    fn infinite_tolerance_is_all_optimal() {
        let d = decompose_free_energy(&small(), 1e9, DEFAULT_EPS).unwrap();
        assert_eq!(d.contribution_deterministic + d.contribution_stochastic + d.contribution_biased, 0.0);
        assert_eq!(d.biased_fraction(), 0.0);
        assert!((d.delta_f_total - d.delta_f_recursion).abs() < 1e-6);
        assert!(d.reconstruction_error < 1e-12);
    }

    #[test]
    fn enumeration_cap() {
        let big = build_center_schedule(1.0, 5, 1.0, 3).unwrap();
        assert!(matches!(decompose_free_energy(&big, 0.05, DEFAULT_EPS), Err(Error::EnumerationCap(_))));
        let deep = build_center_schedule(1.0, 3, 1.0, 6).unwrap();
        assert!(matches!(pathway_work_distribution(&[0, 0], &deep, false), Err(Error::EnumerationCap(_))));
    }

    #[test]
    fn identical_densities_overlap_fully() {
        let schedule = small();
        let ctx = PathwayContext::new(&schedule, DEFAULT_EPS).unwrap();
        let f = ctx.fluctuation(1).sampled().clone().normalized().unwrap();
        let (width, mass) = overlap_measure(&f, &f, DEFAULT_EPS).unwrap();
        assert!((mass - 1.0).abs() < 1e-9 && width > 0.0);
    }
}
