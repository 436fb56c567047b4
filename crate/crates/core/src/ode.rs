//! Classical RK4 on `x' = rate * f(x, u)` with `u` frozen over the step.
//!
//! The forward step, its tangent-linear version and its transpose (the
//! discrete adjoint) all live here so they stay consistent with each other.

use nalgebra::{DMatrix, DVector};

use crate::problem::ProblemSpec;

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| xi + a * yi).collect()
}

/// Stage states `X1..X4` of one RK4 step.
#[derive(Debug, Clone)]
pub struct Stages {
    pub x: [Vec<f64>; 4],
}

/// One RK4 step; returns the new state and the stage states.
pub fn step_with_stages(spec: &ProblemSpec, x: &[f64], u: &[f64], h: f64, rate: f64) -> (Vec<f64>, Stages) {
    let k = |z: &[f64]| -> Vec<f64> { spec.dynamics(z, u).iter().map(|v| rate * v).collect() };
    let x1 = x.to_vec();
    let k1 = k(&x1);
    let x2 = axpy(x, 0.5 * h, &k1);
    let k2 = k(&x2);
    let x3 = axpy(x, 0.5 * h, &k2);
    let k3 = k(&x3);
    let x4 = axpy(x, h, &k3);
    let k4 = k(&x4);
    let next = x
        .iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    (next, Stages { x: [x1, x2, x3, x4] })
}

pub fn step(spec: &ProblemSpec, x: &[f64], u: &[f64], h: f64, rate: f64) -> Vec<f64> {
    step_with_stages(spec, x, u, h, rate).0
}

/// Tangent-linear RK4 step: propagates `dx` given control perturbation `du`
/// and rate perturbation `drate`.
pub fn tangent_step(
    spec: &ProblemSpec,
    stages: &Stages,
    u: &[f64],
    h: f64,
    rate: f64,
    dx: &DVector<f64>,
    du: &DVector<f64>,
    drate: f64,
) -> DVector<f64> {
    let dk = |xs: &[f64], dxs: &DVector<f64>| -> DVector<f64> {
        let (fx, fu) = spec.dynamics_jacobians(xs, u);
        let f = DVector::from_vec(spec.dynamics(xs, u));
        (fx * dxs + fu * du) * rate + f * drate
    };
    let dk1 = dk(&stages.x[0], dx);
    let dk2 = dk(&stages.x[1], &(dx + &dk1 * (0.5 * h)));
    let dk3 = dk(&stages.x[2], &(dx + &dk2 * (0.5 * h)));
    let dk4 = dk(&stages.x[3], &(dx + &dk3 * h));
    dx + (dk1 + dk2 * 2.0 + dk3 * 2.0 + dk4) * (h / 6.0)
}

/// Sensitivities produced by one adjoint step.
pub struct AdjointStep {
    /// Adjoint of the state at the start of the step.
    pub x_bar: DVector<f64>,
    /// Gradient contribution w.r.t. the step's control value.
    pub u_bar: DVector<f64>,
    /// Gradient contribution w.r.t. the rate.
    pub rate_bar: f64,
}

/// Transpose of the RK4 step: given `lambda = dJ/dx_{next}`, returns
/// `dJ/dx`, `dJ/du` and `dJ/drate` for this step.
pub fn adjoint_step(
    spec: &ProblemSpec,
    stages: &Stages,
    u: &[f64],
    h: f64,
    rate: f64,
    lambda: &DVector<f64>,
) -> AdjointStep {
    let mut x_bar = lambda.clone();
    let mut u_bar = DVector::zeros(spec.m);
    let mut rate_bar = 0.0;
    let mut k_bar = [
        lambda * (h / 6.0),
        lambda * (h / 3.0),
        lambda * (h / 3.0),
        lambda * (h / 6.0),
    ];
    // stage i feeds K_{i-1} with coefficient c_i * h
    let feed = [0.0, 0.5 * h, 0.5 * h, h];
    for i in (0..4).rev() {
        let xs = &stages.x[i];
        let (fx, fu) = spec.dynamics_jacobians(xs, u);
        let f = DVector::from_vec(spec.dynamics(xs, u));
        let kb = k_bar[i].clone();
        let stage_bar: DVector<f64> = fx.transpose() * &kb * rate;
        u_bar += fu.transpose() * &kb * rate;
        rate_bar += f.dot(&kb);
        x_bar += &stage_bar;
        if i > 0 {
            k_bar[i - 1] += stage_bar * feed[i];
        }
    }
    AdjointStep {
        x_bar,
        u_bar,
        rate_bar,
    }
}

/// Cubic Hermite interpolation on one step of length `h` at fraction
/// `theta`, with endpoint slopes `d0` and `d1`.
pub fn hermite(x0: &[f64], x1: &[f64], d0: &[f64], d1: &[f64], h: f64, theta: f64) -> Vec<f64> {
    let t = theta;
    let h00 = 2.0 * t * t * t - 3.0 * t * t + 1.0;
    let h10 = t * t * t - 2.0 * t * t + t;
    let h01 = -2.0 * t * t * t + 3.0 * t * t;
    let h11 = t * t * t - t * t;
    (0..x0.len())
        .map(|i| h00 * x0[i] + h10 * h * d0[i] + h01 * x1[i] + h11 * h * d1[i])
        .collect()
}

/// `f_x^T` at a point, as a dense matrix.
pub fn fx_transpose(spec: &ProblemSpec, x: &[f64], u: &[f64]) -> DMatrix<f64> {
    spec.dynamics_jacobians(x, u).0.transpose()
}
