//! The numerical recursion against every closed form the library exposes.

use stepwise_je::free_energy::{
    approx_free_energy, free_energy_profile, ground_state_closed_form_center, low_temp_estimate_center,
};
use stepwise_je::workdist::WorkLedger;
use stepwise_je::{build_center_schedule, Result};

fn main() -> Result<()> {
    println!("ground state only, lambda_s = 1:");
    for (a, s) in [(0.0625, 2), (1.0, 11), (4.0, 5), (16.0, 11), (16.0, 21)] {
        let p = free_energy_profile(&build_center_schedule(1.0, s, a, 0)?)?;
        let dl = 1.0 / (s - 1) as f64;
        let exact = ground_state_closed_form_center(a, dl, s);
        println!(
            "a = {a:>7.4}, s = {s:>2}: recursion {:>10.7}, closed {exact:>10.7}, low-T estimate {:>10.7}",
            p.final_delta_f(),
            low_temp_estimate_center(a, dl, s)
        );
    }

    println!("\nlinearized estimate approaching lambda_s^2/4 = 0.25:");
    for s in [6, 11, 21, 41] {
        let schedule = build_center_schedule(1.0, s, 1.0, 10)?;
        let ledger = WorkLedger::build(&schedule)?;
        let app = approx_free_energy(&schedule, &ledger.mean_positions())?;
        println!("s = {s:>2}: {app:.6}");
    }
    Ok(())
}
