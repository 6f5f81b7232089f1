//! End-to-end checks of the work-distribution recursion against independent
//! closed forms and quadratures.

use stepwise_je::free_energy::{
    approx_free_energy, exponential_average, free_energy_profile, thermal_closed_form_center,
};
use stepwise_je::grid::{trapezoid, Density1D, GriddedDensity};
use stepwise_je::protocol::default_temperature_sweep;
use stepwise_je::spectra::center_prob_density;
use stepwise_je::workdist::{fluctuation_density, pushforward_step_density, WorkLedger};
use stepwise_je::{build_center_schedule, build_spring_schedule, Error, ProtocolKind};

fn gaussian(mean: f64, std: f64) -> impl Fn(f64) -> f64 {
    move |w| (-(w - mean).powi(2) / (2.0 * std * std)).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
}

fn max_abs_diff(rho: &GriddedDensity, f: impl Fn(f64) -> f64) -> f64 {
    rho.grid()
        .iter()
        .zip(rho.values())
        .map(|(w, v)| (v - f(w)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn single_step_ground_state_is_gaussian() {
    let schedule = build_center_schedule_ground(0.1, 2);
    let ledger = WorkLedger::build(&schedule).unwrap();
    let rho = &ledger.distributions[1];
    // affine image of the ground state: mean Δλ²/2, std Δλ/√2
    let (mean, std) = (0.005, 0.1 / 2f64.sqrt());
    assert!((rho.mean() - mean).abs() < 1e-9, "{}", rho.mean());
    assert!((rho.variance().sqrt() - std).abs() < 1e-6, "{}", rho.variance().sqrt());
    let peak = gaussian(mean, std)(mean);
    assert!(max_abs_diff(rho, gaussian(mean, std)) < 1e-3 * peak);
}

fn build_center_schedule_ground(dlambda: f64, s: usize) -> stepwise_je::PullSchedule {
    stepwise_je::protocol::build_center_schedule_with_increment(dlambda, s, 1e3, 0).unwrap()
}

#[test]
fn two_gaussian_steps_add_moments() {
    let schedule = build_center_schedule_ground(0.1, 3);
    let ledger = WorkLedger::build(&schedule).unwrap();
    let rho = ledger.final_distribution();
    // per-step means Δλ(λ_j/2 + Δλ/2) with λ = 0, 0.1; equal variances Δλ²/2
    let mean = 0.005 + 0.01;
    let var = 2.0 * 0.01 / 2.0;
    assert!((rho.mean() - mean).abs() < 1e-9);
    assert!((rho.variance() - var).abs() < 1e-7);
}

#[test]
fn pushforward_of_null_step_is_a_point_mass() {
    let schedule = build_center_schedule(0.0, 3, 1.0, 4).unwrap();
    let f = fluctuation_density(&schedule.spectrum(1).unwrap(), 1.0, &schedule.x_grid).unwrap();
    let rho = pushforward_step_density(&schedule, &f, 1).unwrap();
    let zero = rho.grid().nearest_index(0.0).unwrap();
    assert!(rho.values().iter().enumerate().all(|(k, v)| (k == zero) == (*v > 0.0)));
}

#[test]
fn spring_pushforward_lives_on_nonnegative_work() {
    let schedule = build_spring_schedule(1.3, 2, 1e3, 0).unwrap();
    let f = fluctuation_density(&schedule.spectrum(1).unwrap(), schedule.beta(), &schedule.x_grid).unwrap();
    let rho = pushforward_step_density(&schedule, &f, 1).unwrap();
    let h = rho.grid().step();
    for (w, v) in rho.grid().iter().zip(rho.values()) {
        if w < -0.5 * h {
            assert_eq!(*v, 0.0, "mass at W = {w}");
        }
    }
    assert_eq!(rho.argmax(), rho.grid().nearest_index(0.0).unwrap());
    assert!((rho.integral() - 1.0).abs() < 1e-9);
}

#[test]
fn spring_distributions_have_no_negative_work() {
    let schedule = build_spring_schedule(1.3, 6, 0.1, 60).unwrap();
    let ledger = WorkLedger::build(&schedule).unwrap();
    let h = schedule.w_grid.step();
    for rho in &ledger.distributions {
        for (w, v) in rho.grid().iter().zip(rho.values()) {
            if w < -0.5 * h {
                assert_eq!(*v, 0.0);
            }
        }
    }
}

#[test]
fn fluctuation_density_examples() {
    let cold = build_center_schedule(1.0, 3, 1e3, 0).unwrap();
    let f0 = fluctuation_density(&cold.spectrum(1).unwrap(), cold.beta(), &cold.x_grid).unwrap();
    assert!(f0.mean().abs() < 1e-10 && (f0.variance() - 0.5).abs() < 1e-8);
    let f_half = fluctuation_density(&cold.spectrum(2).unwrap(), cold.beta(), &cold.x_grid).unwrap();
    assert!((f_half.mean() - 0.25).abs() < 1e-10);

    let warm = build_center_schedule(1.0, 3, 1.0, 10).unwrap();
    let f = fluctuation_density(&warm.spectrum(1).unwrap(), 1.0, &warm.x_grid).unwrap();
    let coth = 1.0 / 1f64.tanh();
    assert!((f.variance() - coth / 2.0).abs() < 1e-6, "{}", f.variance());
}

#[test]
fn mean_work_adds_over_steps() {
    for (schedule, label) in [
        (build_center_schedule(1.0, 11, 0.5, 10).unwrap(), "center"),
        (build_spring_schedule(1.3, 6, 0.1, 80).unwrap(), "spring"),
    ] {
        let ledger = WorkLedger::build(&schedule).unwrap();
        let x = schedule.x_grid;
        let mut expected = 0.0;
        for i in 1..schedule.s {
            let f = &ledger.fluctuations[i - 1];
            let map = schedule.work_map(i).unwrap();
            let num: Vec<f64> = x.iter().map(|xk| f.density(xk) * map.eval(xk)).collect();
            let den: Vec<f64> = x.iter().map(|xk| f.density(xk)).collect();
            expected += trapezoid(&num, x.step()) / trapezoid(&den, x.step());
            let got = ledger.distributions[i].mean();
            assert!((got - expected).abs() < 1e-6, "{label} step {}: {got} vs {expected}", i + 1);
        }
    }
}

#[test]
fn ground_state_exponential_average_matches_closed_form() {
    let mut steps: Vec<usize> = (2..=11).collect();
    steps.push(21);
    for a in default_temperature_sweep() {
        for &s in &steps {
            let schedule = build_center_schedule(1.0, s, a, 0).unwrap();
            let ledger = WorkLedger::build(&schedule).unwrap();
            let dl = 1.0 / (s - 1) as f64;
            let oracle = (-a * dl * dl * (s - 1) as f64 * (s as f64 - a) / 4.0).exp();
            let df = exponential_average(ledger.final_distribution(), a).unwrap();
            let avg = (-a * df).exp();
            assert!((avg / oracle - 1.0).abs() < 1e-6, "a = {a}, s = {s}: {avg} vs {oracle}");
        }
    }
}

#[test]
fn thermal_recursion_matches_full_spectrum_closed_form() {
    for a in [0.25, 1.0, 4.0] {
        for s in [3, 6, 11] {
            let p = free_energy_profile(&build_center_schedule(1.0, s, a, 30).unwrap()).unwrap();
            let dl = 1.0 / (s - 1) as f64;
            let exact = dl * dl * (s - 1) as f64 * (s as f64 - a / a.tanh()) / 4.0;
            assert!((p.final_delta_f() - exact).abs() < 1e-6, "a = {a}, s = {s}");
            assert!((thermal_closed_form_center(a, dl, s) - exact).abs() < 1e-15);
        }
    }
}

#[test]
fn doubling_work_resolution_leaves_free_energy_unchanged() {
    for schedule in [
        build_center_schedule(1.0, 11, 1.0, 10).unwrap(),
        build_center_schedule(1.0, 11, 0.0625, 10).unwrap(),
        build_spring_schedule(1.3, 11, 0.1, 100).unwrap(),
    ] {
        let base = free_energy_profile(&schedule).unwrap();
        let points = schedule.w_grid.len();
        let fine = free_energy_profile(&schedule.clone().with_w_points(2 * points).unwrap()).unwrap();
        for j in 0..base.len() {
            assert!(
                (base.delta_f[j] - fine.delta_f[j]).abs() < 1e-5,
                "{:?} step {}: {} vs {}",
                schedule.kind,
                j + 1,
                base.delta_f[j],
                fine.delta_f[j]
            );
        }
    }
}

#[test]
fn truncation_convergence_is_monotone_and_stable() {
    let values: Vec<f64> = (0..=10)
        .map(|n| free_energy_profile(&build_center_schedule(1.0, 11, 1.0, n).unwrap()).unwrap().final_delta_f())
        .collect();
    for w in values.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{values:?}");
    }
    let exact = thermal_closed_form_center(1.0, 0.1, 11);
    assert!((values[7] - exact).abs() < 1e-6, "{} vs {exact}", values[7]);
    assert!((values[7] - values[10]).abs() < 1e-6);
}

#[test]
fn null_pulls_cost_nothing() {
    for schedule in [
        build_center_schedule(0.0, 5, 1.0, 10).unwrap(),
        build_spring_schedule(1.0, 5, 0.1, 10).unwrap(),
    ] {
        let p = free_energy_profile(&schedule).unwrap();
        assert!(p.delta_f.iter().all(|v| *v == 0.0), "{:?}", p.delta_f);
        assert!(p.mean_w.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn single_step_run_is_trivial() {
    let schedule = build_center_schedule(1.0, 1, 1.0, 0).unwrap();
    let p = free_energy_profile(&schedule).unwrap();
    assert_eq!((p.len(), p.delta_f[0], p.mean_w[0], p.std_w[0]), (1, 0.0, 0.0, 0.0));
    let ledger = WorkLedger::build(&schedule).unwrap();
    assert_eq!(exponential_average(ledger.final_distribution(), 1.0).unwrap(), 0.0);
}

#[test]
fn cold_negativity_and_zero_crossing() {
    for s in [3, 5, 7] {
        let a = 8.0;
        let p = free_energy_profile(&build_center_schedule(1.0, s, a, 0).unwrap()).unwrap();
        assert!(p.final_delta_f() < 0.0, "s = {s}");
    }
    for a in [2.0, 4.0, 8.0] {
        let s = a as usize;
        let p = free_energy_profile(&build_center_schedule(1.0, s, a, 0).unwrap()).unwrap();
        assert!(p.final_delta_f().abs() < 1e-10, "a = s = {s}: {}", p.final_delta_f());
    }
}

#[test]
fn spring_endpoints_against_free_energy_difference() {
    let target = 10.0 * ((0.065f64).sinh() / (0.05f64).sinh()).ln();
    for s in [2, 11] {
        let p = free_energy_profile(&build_spring_schedule(1.3, s, 0.1, 100).unwrap()).unwrap();
        assert_eq!(p.kind, ProtocolKind::Spring);
        assert!((p.final_delta_f() / target - 1.0).abs() < 0.01, "s = {s}");
        assert!((p.final_target() - target).abs() < 1e-12);
    }
}

#[test]
fn cold_spring_matches_ground_state_sum() {
    let (a0, s) = (100.0, 201);
    let schedule = build_spring_schedule(1.3, s, a0, 0).unwrap();
    let p = free_energy_profile(&schedule).unwrap();
    let delta = schedule.increment;
    let sum: f64 = (1..s)
        .map(|i| (a0 * delta / (2.0 * (1.0 + delta * (i - 1) as f64).sqrt())).ln_1p())
        .sum::<f64>()
        / (2.0 * a0);
    assert!((p.final_delta_f() / sum - 1.0).abs() < 1e-4, "{} vs {sum}", p.final_delta_f());
}

#[test]
fn linearized_estimate_error_halves_with_steps() {
    let error = |s: usize| {
        let schedule = build_center_schedule(1.0, s, 1.0, 10).unwrap();
        let ledger = WorkLedger::build(&schedule).unwrap();
        (approx_free_energy(&schedule, &ledger.mean_positions()).unwrap() - 0.25).abs()
    };
    let errors: Vec<f64> = [6, 11, 21, 41].iter().map(|s| error(*s)).collect();
    for w in errors.windows(2) {
        assert!((w[0] / w[1] - 2.0).abs() < 0.4, "{errors:?}");
    }
    // thermal means still sit at λ/2: Δλ²(s−1)(s−2)/4
    let s = 11;
    let schedule = build_center_schedule(1.0, s, 1.0, 10).unwrap();
    let ledger = WorkLedger::build(&schedule).unwrap();
    let app = approx_free_energy(&schedule, &ledger.mean_positions()).unwrap();
    assert!((app - 0.01 * 10.0 * 9.0 / 4.0).abs() < 1e-8);
    let spring = build_spring_schedule(1.3, 3, 0.1, 10).unwrap();
    assert!(matches!(approx_free_energy(&spring, &[0.0; 3]), Err(Error::Unsupported(_))));
}

#[test]
fn reference_free_energy_tends_to_initial_value() {
    // F_ref(λ_s) − F(0) = F(λ_s) − F(0) − ΔF
    let gaps: Vec<f64> = [2, 4, 10, 20]
        .iter()
        .map(|m| {
            let p = free_energy_profile(&build_center_schedule(1.0, m + 1, 1.0, 10).unwrap()).unwrap();
            let f0 = p.f_ref[0];
            (p.f_ref.last().unwrap() - f0).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] < 0.005);
}

#[test]
fn translated_densities_match_quadrature() {
    let x: Vec<f64> = (0..4001).map(|k| -8.0 + 17.0 * k as f64 / 4000.0).collect();
    let v: Vec<f64> = x.iter().map(|x| center_prob_density(5, 1.0, *x)).collect();
    assert!((trapezoid(&v, 17.0 / 4000.0) - 1.0).abs() < 1e-8);
}
