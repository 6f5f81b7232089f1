//! Moving-trap protocol at a = 1: free-energy profile and its convergence
//! in the eigenbasis truncation.

use stepwise_je::free_energy::{free_energy_profile, thermal_closed_form_center};
use stepwise_je::{build_center_schedule, Result};

fn main() -> Result<()> {
    let schedule = build_center_schedule(1.0, 11, 1.0, 10)?;
    let profile = free_energy_profile(&schedule)?;
    println!("a = 1, s = 11, n_max = 10 (energies in {})", profile.energy_unit);
    println!("{:>4} {:>7} {:>10} {:>10} {:>10} {:>10}", "i", "lambda", "dF", "target", "<W>", "std W");
    for j in 0..profile.len() {
        println!(
            "{:>4} {:>7.3} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            j + 1,
            profile.controls[j],
            profile.delta_f[j],
            profile.target[j],
            profile.mean_w[j],
            profile.std_w[j]
        );
    }

    println!("\nendpoint versus truncation:");
    for n_max in [0, 1, 2, 3, 5, 7, 10, 20] {
        let p = free_energy_profile(&build_center_schedule(1.0, 11, 1.0, n_max)?)?;
        println!("n_max = {n_max:>2}: dF = {:.6}", p.final_delta_f());
    }
    println!("full-spectrum closed form: {:.6}", thermal_closed_form_center(1.0, 0.1, 11));
    Ok(())
}
