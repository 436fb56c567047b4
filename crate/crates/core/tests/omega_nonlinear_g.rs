//! The second-order form against a finite-difference Hessian of the
//! Lagrangian on a problem whose constraint `g` has curvature, so the
//! weight and sign of the crossing terms matter.

use timecrisis::config::ProblemConfig;
use timecrisis::multipliers::compute_certificate;
use timecrisis::signal::{ControlSignal, TimeDomain};
use timecrisis::solve::{solve_time_crisis, SolverOptions};
use timecrisis::verify::{direction, direction_norm, evaluate_omega, merit_second_difference};

// x1' = 1, x2' = u, K the unit disk, payoff (x2 - 0.3)^2
const DISK: &str = r#"
name = "disk"
n = 2
m = 1
horizon = 2.0
x0 = [-0.5, 0.0]
f = [[{ coef = 1.0 }], [{ coef = 1.0, u = [1] }]]
g = [{ coef = 1.0, x = [2] }, { coef = 1.0, x = [0, 2] }, { coef = -1.0 }]
phi = [{ coef = 1.0, x = [0, 2] }, { coef = -0.6, x = [0, 1] }, { coef = 0.09 }]
c = [[{ coef = 1.0, u = [1] }, { coef = -1.0 }],
     [{ coef = -1.0, u = [1] }, { coef = -1.0 }]]

[box_hull]
lower = [-1.0]
upper = [1.0]
"#;

#[test]
fn omega_matches_lagrangian_hessian_with_curved_boundary() {
    let spec = ProblemConfig::parse(DISK).unwrap().to_spec().unwrap();
    let init = ControlSignal::constant(TimeDomain::Physical, 0.0, 2.0, 40, &[0.1]).unwrap();
    let opts = SolverOptions {
        n_arc: 60,
        max_outer: 30,
        ..SolverOptions::default()
    };
    let sol = solve_time_crisis(&spec, &init, &opts).unwrap();
    assert_eq!(sol.r(), 1);
    let cert = compute_certificate(&spec, &sol).unwrap();
    assert!(cert.gamma[0].abs() > 1e-2, "crossing multiplier should be active: {:?}", cert.gamma);

    // the Lagrangian weight of g(x(tau)) = 0 is -gamma
    let lambda: Vec<f64> = cert.gamma.iter().map(|g| -g).collect();
    let mut flipped = cert.clone();
    flipped.gamma = lambda.clone();
    let cells = sol.control_physical.n_cells();
    let mut worst: f64 = 0.0;
    let mut flipped_worst: f64 = 0.0;
    for k in 0..5 {
        let du: Vec<f64> = (0..cells).map(|i| ((i * (k + 2)) as f64 * 0.37).sin()).collect();
        let d = direction(&spec, &sol, du, vec![0.3 - 0.15 * k as f64]);
        let d = d.scale(1.0 / direction_norm(&sol, &d));
        let fd = merit_second_difference(&spec, &sol, &lambda, 0.0, &d, 1e-3).unwrap();
        let omega = evaluate_omega(&spec, &sol, &cert, &d);
        let wrong = evaluate_omega(&spec, &sol, &flipped, &d);
        worst = worst.max((omega - fd).abs() / fd.abs().max(1e-3));
        flipped_worst = flipped_worst.max((wrong - fd).abs() / fd.abs().max(1e-3));
    }
    assert!(worst < 0.05, "relative mismatch {worst}");
    assert!(flipped_worst > 0.05, "sign of the crossing term undetected: {flipped_worst}");
}
