//! Temperature dependence at s = 11: the mean work stays put while the
//! free-energy estimate turns negative once a exceeds s.

use rayon::prelude::*;
use stepwise_je::free_energy::{free_energy_profile, ground_state_closed_form_center};
use stepwise_je::protocol::default_temperature_sweep;
use stepwise_je::{build_center_schedule, Result};

fn main() -> Result<()> {
    let rows: Vec<(f64, f64, f64, f64)> = default_temperature_sweep()
        .into_par_iter()
        .map(|a| {
            let p = free_energy_profile(&build_center_schedule(1.0, 11, a, 10)?)?;
            let j = p.len() - 1;
            Ok((a, p.delta_f[j], p.mean_w[j], p.std_w[j]))
        })
        .collect::<Result<_>>()?;
    println!("{:>8} {:>10} {:>10} {:>10} {:>12}", "a", "dF", "<W>", "std W", "ground state");
    for (a, df, mw, sw) in rows {
        println!(
            "{a:>8.4} {df:>10.6} {mw:>10.6} {sw:>10.6} {:>12.6}",
            ground_state_closed_form_center(a, 0.1, 11)
        );
    }
    Ok(())
}
