//! The initial costate is the sensitivity of the optimal value to `x0`.

use timecrisis::multipliers::compute_certificate;
use timecrisis::problem::catalog;
use timecrisis::solve::{default_initial_control, solve_time_crisis, SolverOptions};

fn value(name: &str, shift: f64) -> f64 {
    let mut spec = catalog(name).unwrap();
    spec.x0[0] += shift;
    let opts = SolverOptions {
        n_arc: 100,
        ..SolverOptions::default()
    };
    let init = default_initial_control(&spec, 100).unwrap();
    solve_time_crisis(&spec, &init, &opts).unwrap().objective
}

#[test]
fn initial_costate_is_value_sensitivity() {
    for name in ["linear_payoff_1d", "quad_payoff_1d"] {
        let spec = catalog(name).unwrap();
        let opts = SolverOptions {
            n_arc: 100,
            ..SolverOptions::default()
        };
        let init = default_initial_control(&spec, 100).unwrap();
        let sol = solve_time_crisis(&spec, &init, &opts).unwrap();
        let cert = compute_certificate(&spec, &sol).unwrap();
        let h = 1e-3;
        let fd = (value(name, h) - value(name, -h)) / (2.0 * h);
        assert!(
            (fd - cert.p_initial()[0]).abs() < 1e-3,
            "{name}: dV/dx0 = {fd}, p(0) = {}",
            cert.p_initial()[0]
        );
    }
}

#[test]
fn quad_terminal_costate_is_payoff_gradient() {
    let spec = catalog("quad_payoff_1d").unwrap();
    let init = default_initial_control(&spec, 100).unwrap();
    let sol = solve_time_crisis(&spec, &init, &SolverOptions::default()).unwrap();
    let cert = compute_certificate(&spec, &sol).unwrap();
    // phi'(x) = -2 + x at x(T) = 1
    assert!((sol.trajectory_physical.final_state()[0] - 1.0).abs() < 1e-6);
    assert!((cert.p_terminal()[0] + 1.0).abs() < 1e-6);
    assert!((sol.objective + 0.5).abs() < 1e-6);
}
