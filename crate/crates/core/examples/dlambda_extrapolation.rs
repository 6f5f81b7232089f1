//! Free energy at fixed lambda_s = 1 as the pulling increment shrinks, with
//! a least-squares line through the results.

use stepwise_je::free_energy::{free_energy_profile, linear_fit};
use stepwise_je::{build_center_schedule, Result};

fn main() -> Result<()> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for steps in [2, 4, 5, 10, 20] {
        let p = free_energy_profile(&build_center_schedule(1.0, steps + 1, 1.0, 10)?)?;
        let dl = 1.0 / steps as f64;
        println!("dlambda = {dl:.3}: dF = {:.6}", p.final_delta_f());
        xs.push(dl);
        ys.push(p.final_delta_f());
    }
    let (slope, intercept) = linear_fit(&xs, &ys)?;
    println!("fit: dF = {slope:.5} * dlambda + {intercept:.5}");
    println!("(1 - a coth a)/4 at a = 1: {:.5}", (1.0 - 1.0 / 1f64.tanh()) / 4.0);
    Ok(())
}
