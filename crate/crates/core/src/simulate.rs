//! Fixed-step integration, crossing detection and the time-crisis cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode;
use crate::problem::ProblemSpec;
use crate::signal::{ControlSignal, TimeDomain};

pub const CROSSING_TOL: f64 = 1e-10;
pub const MAX_BISECTIONS: usize = 80;

/// States on the integration nodes of a piecewise-constant control.
///
/// Cell `k` of the control spans nodes `k * substeps ..= (k + 1) * substeps`.
/// On cell `k` the state obeys `x' = rates[k] * f(x, u_k)`; the rate is 1 in
/// physical time and the arc length in normalized time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub domain: TimeDomain,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub control: ControlSignal,
    pub substeps: usize,
    pub rates: Vec<f64>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn cell_of_step(&self, i: usize) -> usize {
        i / self.substeps
    }

    pub fn final_state(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }

    /// Node index where cell `k` starts.
    pub fn node_of_cell(&self, k: usize) -> usize {
        k * self.substeps
    }

    /// Slope `dx/dt` at node `i` using the control of the step's cell.
    fn slope(&self, spec: &ProblemSpec, node: usize, cell: usize) -> Vec<f64> {
        let rate = self.rates[cell];
        spec.dynamics(&self.states[node], self.control.cell(cell))
            .into_iter()
            .map(|v| rate * v)
            .collect()
    }

    /// Dense output on step `i` at fraction `theta`.
    pub fn interpolate(&self, spec: &ProblemSpec, i: usize, theta: f64) -> Vec<f64> {
        let cell = self.cell_of_step(i);
        let h = self.times[i + 1] - self.times[i];
        let d0 = self.slope(spec, i, cell);
        let d1 = self.slope(spec, i + 1, cell);
        ode::hermite(&self.states[i], &self.states[i + 1], &d0, &d1, h, theta)
    }

    /// State at an arbitrary time in the trajectory's domain.
    pub fn state_at(&self, spec: &ProblemSpec, t: f64) -> Vec<f64> {
        let i = self.times.partition_point(|&v| v <= t).saturating_sub(1).min(self.n_steps() - 1);
        let h = self.times[i + 1] - self.times[i];
        let theta = ((t - self.times[i]) / h).clamp(0.0, 1.0);
        if theta == 0.0 {
            return self.states[i].clone();
        }
        if theta == 1.0 {
            return self.states[i + 1].clone();
        }
        self.interpolate(spec, i, theta)
    }
}

/// Integrates `x' = rates[k] f(x, u_k)` cell by cell from `x0`.
pub(crate) fn integrate_with_rates(
    spec: &ProblemSpec,
    control: &ControlSignal,
    substeps: usize,
    rates: Vec<f64>,
) -> Result<Trajectory> {
    if substeps == 0 {
        return Err(Error::InvalidControl("substeps must be positive".into()));
    }
    if control.m != spec.m {
        return Err(Error::DimensionMismatch(format!(
            "control dimension {} vs m = {}",
            control.m, spec.m
        )));
    }
    let cells = control.n_cells();
    let mut times = Vec::with_capacity(cells * substeps + 1);
    let mut states = Vec::with_capacity(cells * substeps + 1);
    let mut x = spec.x0.clone();
    times.push(control.start());
    states.push(x.clone());
    for k in 0..cells {
        let u = control.cell(k);
        let (a, b) = (control.breaks[k], control.breaks[k + 1]);
        let h = (b - a) / substeps as f64;
        for j in 0..substeps {
            x = ode::step(spec, &x, u, h, rates[k]);
            let t = if j + 1 == substeps { b } else { a + h * (j + 1) as f64 };
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { time: t });
            }
            times.push(t);
            states.push(x.clone());
        }
    }
    Ok(Trajectory {
        domain: control.domain,
        times,
        states,
        control: control.clone(),
        substeps,
        rates,
    })
}

/// RK4 in physical time over `[0, T]`, `substeps` steps per control cell.
pub fn integrate(spec: &ProblemSpec, control: &ControlSignal, substeps: usize) -> Result<Trajectory> {
    if control.domain != TimeDomain::Physical {
        return Err(Error::InvalidControl("expected a physical-time control".into()));
    }
    let span_tol = 1e-12 * spec.horizon;
    if control.start().abs() > span_tol || (control.end() - spec.horizon).abs() > span_tol {
        return Err(Error::InvalidControl(format!(
            "control spans [{}, {}], expected [0, {}]",
            control.start(),
            control.end(),
            spec.horizon
        )));
    }
    integrate_with_rates(spec, control, substeps, vec![1.0; control.n_cells()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    /// From `K` to its complement.
    Exit,
    /// From the complement back into `K`.
    Entry,
}

impl CrossingDirection {
    /// Prescribed Hamiltonian drop across the crossing: `H_before - H_after`.
    pub fn hamiltonian_drop(self) -> f64 {
        match self {
            CrossingDirection::Exit => 1.0,
            CrossingDirection::Entry => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub time: f64,
    pub direction: CrossingDirection,
    /// `g` at the refined crossing time.
    pub g_value: f64,
    /// `|grad g(x) . f(x, u_before)|`.
    pub margin_before: f64,
    /// `|grad g(x) . f(x, u_after)|`.
    pub margin_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingStructure {
    pub crossings: Vec<Crossing>,
    pub tol: f64,
}

impl CrossingStructure {
    pub fn r(&self) -> usize {
        self.crossings.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.crossings.iter().map(|c| c.time).collect()
    }

    pub fn is_transverse(&self) -> bool {
        self.crossings
            .iter()
            .all(|c| c.margin_before > 0.0 && c.margin_after > 0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CrossingOptions {
    pub tol: f64,
    pub max_bisections: usize,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        Self {
            tol: CROSSING_TOL,
            max_bisections: MAX_BISECTIONS,
        }
    }
}

pub fn detect_crossings(spec: &ProblemSpec, traj: &Trajectory) -> Result<CrossingStructure> {
    detect_crossings_with(spec, traj, CrossingOptions::default())
}

fn sign(v: f64, tol: f64) -> i8 {
    if v.abs() <= tol {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Scans `g` on the nodes for sign changes and refines each bracket by
/// bisection on the Hermite interpolant.
///
/// A node with `|g| <= tol` counts as a crossing when the nearest nonzero
/// signs on either side differ; otherwise the contact is tangential and an
/// error is returned.
pub fn detect_crossings_with(
    spec: &ProblemSpec,
    traj: &Trajectory,
    opts: CrossingOptions,
) -> Result<CrossingStructure> {
    let tol = opts.tol;
    let gs: Vec<f64> = traj.states.iter().map(|x| spec.g(x)).collect();
    let signs: Vec<i8> = gs.iter().map(|&v| sign(v, tol)).collect();
    let last = gs.len() - 1;
    // (time, state, direction, g)
    let mut found: Vec<(f64, Vec<f64>, CrossingDirection, f64)> = Vec::new();

    let dir_of = |before: i8| {
        if before < 0 {
            CrossingDirection::Exit
        } else {
            CrossingDirection::Entry
        }
    };

    let mut k = 0;
    while k < last {
        if signs[k] == 0 {
            if k == 0 {
                k += 1;
                continue;
            }
            // zero node inside the horizon
            if signs[k + 1] == 0 && k + 1 < last {
                return Err(Error::NontransverseContact { time: traj.times[k] });
            }
            let prev = signs[..k].iter().rev().find(|&&s| s != 0).copied();
            let next = signs[k + 1..].iter().find(|&&s| s != 0).copied();
            match (prev, next) {
                (Some(a), Some(b)) if a != b => {
                    found.push((traj.times[k], traj.states[k].clone(), dir_of(a), gs[k]));
                }
                (Some(_), None) | (None, _) => {}
                _ => return Err(Error::NontransverseContact { time: traj.times[k] }),
            }
            k += 1;
            continue;
        }
        if signs[k + 1] != 0 && signs[k + 1] != signs[k] {
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            let mut theta = 0.5;
            let mut x = traj.interpolate(spec, k, theta);
            let mut gv = spec.g(&x);
            for _ in 0..opts.max_bisections {
                if gv.abs() <= tol {
                    break;
                }
                if sign(gv, 0.0) == signs[k] {
                    lo = theta;
                } else {
                    hi = theta;
                }
                theta = 0.5 * (lo + hi);
                x = traj.interpolate(spec, k, theta);
                gv = spec.g(&x);
            }
            let h = traj.times[k + 1] - traj.times[k];
            found.push((traj.times[k] + theta * h, x, dir_of(signs[k]), gv));
        }
        k += 1;
    }

    let mut crossings = Vec::with_capacity(found.len());
    for (idx, (time, x, direction, g_value)) in found.into_iter().enumerate() {
        let expected = if idx % 2 == 0 {
            CrossingDirection::Exit
        } else {
            CrossingDirection::Entry
        };
        if direction != expected {
            return Err(Error::NonAlternating { index: idx, time });
        }
        let ctrl = &traj.control;
        let k = ctrl.locate(time);
        let snap = 1e-6 * ctrl.width(k);
        let before = ctrl.cell(ctrl.locate_left(time, snap));
        let after = ctrl.cell(ctrl.locate_right(time, snap));
        let grad = spec.grad_g(&x);
        let margin = |u: &[f64]| -> f64 {
            let f = spec.dynamics(&x, u);
            grad.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>().abs()
        };
        crossings.push(Crossing {
            time,
            direction,
            g_value,
            margin_before: margin(before),
            margin_after: margin(after),
        });
    }
    Ok(CrossingStructure { crossings, tol })
}

/// `phi(x(T))` plus the exact total length of the arcs spent outside `K`,
/// measured between refined crossing times.
pub fn crisis_cost(spec: &ProblemSpec, traj: &Trajectory, crossings: &CrossingStructure) -> f64 {
    let t_end = traj.times[traj.times.len() - 1];
    let mut outside = 0.0;
    let mut exit_time = None;
    for c in &crossings.crossings {
        match c.direction {
            CrossingDirection::Exit => exit_time = Some(c.time),
            CrossingDirection::Entry => {
                if let Some(t0) = exit_time.take() {
                    outside += c.time - t0;
                }
            }
        }
    }
    if let Some(t0) = exit_time {
        outside += t_end - t0;
    }
    spec.phi(traj.final_state()) + outside
}
