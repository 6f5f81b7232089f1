//! Classifies the enumerated pathways of a three-step pull and shows how
//! the class contributions move with the residual tolerance.

use stepwise_je::pathways::{decompose_free_energy, find_optimal_transitions, DEFAULT_EPS};
use stepwise_je::{build_center_schedule, Result};

fn main() -> Result<()> {
    let schedule = build_center_schedule(1.0, 3, 1.0, 3)?;
    println!("{:>6} {:>9} {:>9} {:>9} {:>9} {:>10}", "tol", "optimal", "determ.", "stoch.", "biased", "recon err");
    for tol in [0.05, 0.5, 1.0, 2.5, 5.0] {
        let d = decompose_free_energy(&schedule, tol, DEFAULT_EPS)?;
        let total = d.total_contribution();
        println!(
            "{tol:>6.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>10.1e}",
            d.contribution_optimal / total,
            d.contribution_deterministic / total,
            d.contribution_stochastic / total,
            d.contribution_biased / total,
            d.reconstruction_error
        );
    }
    let d = decompose_free_energy(&schedule, 2.5, DEFAULT_EPS)?;
    println!("enumerated dF = {:.6}, recursion dF = {:.6}", d.delta_f_total, d.delta_f_recursion);
    let (dx, mass) = d.overlaps[0];
    println!("overlap of f_1 and f_2: width {dx:.3}, mass {mass:.4}");

    let search = find_optimal_transitions(&schedule, 2, 0.05, DEFAULT_EPS)?;
    println!("\noptimal transitions into step 2 at tol = 0.05:");
    for r in &search.records {
        println!(
            "  n {} -> {}, x {:+.3} -> {:+.3}, r13 = {:+.4}",
            r.n_prev, r.n_next, r.x_prev, r.x_next, r.r13
        );
    }
    Ok(())
}
