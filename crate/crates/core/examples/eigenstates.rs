//! Eigenvalues and eigenfunction densities of both oscillators, including
//! quantum numbers where raw Hermite polynomials overflow.

use stepwise_je::grid::{trapezoid, GridSpec};
use stepwise_je::spectra::{
    center_eigenvalue, center_prob_density, hermite_poly, log_hermite_function, spring_eigenvalue,
    spring_frequency, spring_prob_density,
};

fn norm(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let g = GridSpec::new(lo, hi, 8001).expect("valid grid");
    let v: Vec<f64> = g.iter().map(f).collect();
    trapezoid(&v, g.step())
}

fn main() {
    println!("center protocol, lambda = 1 (energies in hbar*omega)");
    println!("{:>4} {:>10} {:>14}", "n", "E_n", "norm");
    for n in [0, 1, 2, 5, 10, 20, 50] {
        let e = center_eigenvalue(n, 1.0);
        let p = norm(|x| center_prob_density(n, 1.0, x), -15.0, 16.0);
        println!("{n:>4} {e:>10.4} {p:>14.12}");
    }

    println!("\nspring protocol, omega_11 with delta = 0.069 (energies in hbar*omega0)");
    let w = spring_frequency(11, 0.069, 1.0).expect("positive stiffness");
    for n in [0, 3, 10] {
        let p = norm(|x| spring_prob_density(n, w, x), -10.0, 10.0);
        println!("n = {n:>2}: E = {:.4}, norm = {p:.12}", spring_eigenvalue(n, w));
    }

    println!("\nH_n(3) overflows long before the normalized functions do:");
    for n in [50, 150, 200] {
        println!(
            "n = {n:>3}: H_n(3) = {:e}, ln|h_n(3)| = {:.6}",
            hermite_poly(n, 3.0),
            log_hermite_function(n, 3.0)
        );
    }
}
