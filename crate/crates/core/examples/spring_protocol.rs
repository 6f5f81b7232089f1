//! Stiffening-trap protocol: the W = 0 spike of the first work distribution
//! and the endpoint free energy at high and low temperature.

use stepwise_je::free_energy::{free_energy_profile, ground_state_closed_form_spring, spring_low_temperature_limit};
use stepwise_je::workdist::WorkLedger;
use stepwise_je::{build_spring_schedule, Result};

fn main() -> Result<()> {
    for s in [2, 11] {
        let schedule = build_spring_schedule(1.3, s, 0.1, 100)?;
        let profile = free_energy_profile(&schedule)?;
        let rel = (profile.final_delta_f() / profile.final_target() - 1.0) * 100.0;
        println!(
            "a0 = 0.1, s = {s:>2}, delta = {:.4}: dF = {:.6} vs {:.6} ({rel:+.3}%)",
            schedule.increment,
            profile.final_delta_f(),
            profile.final_target()
        );
    }

    let schedule = build_spring_schedule(1.3, 2, 0.1, 100)?;
    let ledger = WorkLedger::build(&schedule)?;
    let rho = &ledger.distributions[1];
    let peak = rho.grid().point(rho.argmax());
    println!("rho_2 peaks at W = {peak:.3e} (lattice spacing {:.3e})", rho.grid().step());

    let (a0, s) = (50.0, 201);
    let schedule = build_spring_schedule(1.3, s, a0, 0)?;
    let profile = free_energy_profile(&schedule)?;
    let sum = ground_state_closed_form_spring(a0, schedule.increment, s)?;
    println!(
        "a0 = {a0}, s = {s}, ground state: dF = {:.7}, closed sum = {sum:.7}, limit = {:.3}",
        profile.final_delta_f(),
        spring_low_temperature_limit(1.3)
    );
    Ok(())
}
