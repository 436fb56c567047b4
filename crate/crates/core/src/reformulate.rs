//! Change of time between physical `[0, T]` and normalized `[0, r + 1]`,
//! transport of controls, and the augmented single-crossing system.
//!
//! On normalized arc `j` (`s in [j, j+1]`) the change of time is affine with
//! slope `tau_{j+1} - tau_j`, using `tau_0 = 0` and `tau_{r+1} = T`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::signal::{ControlSignal, TimeDomain};
use crate::simulate::{integrate_with_rates, Trajectory};

/// Crossing times `0 < tau_1 < ... < tau_r < T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingVector {
    pub taus: Vec<f64>,
    pub horizon: f64,
}

impl CrossingVector {
    pub fn new(taus: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::NonpositiveHorizon(horizon));
        }
        let mut prev = 0.0;
        for (j, &t) in taus.iter().enumerate() {
            if !(t > prev) || !t.is_finite() {
                return Err(Error::InvalidCrossingVector(format!(
                    "tau_{} = {t} is not above {prev}",
                    j + 1
                )));
            }
            prev = t;
        }
        if !(prev < horizon) && !taus.is_empty() {
            return Err(Error::InvalidCrossingVector(format!(
                "tau_r = {prev} is not below T = {horizon}"
            )));
        }
        Ok(Self { taus, horizon })
    }

    pub fn r(&self) -> usize {
        self.taus.len()
    }

    /// `tau_j` with the end conventions, `j = 0..=r+1`.
    pub fn node(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else if j > self.taus.len() {
            self.horizon
        } else {
            self.taus[j - 1]
        }
    }

    /// Slope of the change of time on arc `j`: `tau_{j+1} - tau_j`.
    pub fn slope(&self, arc: usize) -> f64 {
        self.node(arc + 1) - self.node(arc)
    }

    pub fn slopes(&self) -> Vec<f64> {
        (0..=self.r()).map(|a| self.slope(a)).collect()
    }

    /// `rho_tau(t) . dtau` on arc `arc`, i.e. `(dtau_{a+1} - dtau_a) / slope_a`
    /// with `dtau_0 = dtau_{r+1} = 0`.
    pub fn rho_dot(&self, arc: usize, dtau: &[f64]) -> f64 {
        let d = |j: usize| -> f64 {
            if j == 0 || j > dtau.len() {
                0.0
            } else {
                dtau[j - 1]
            }
        };
        (d(arc + 1) - d(arc)) / self.slope(arc)
    }

    /// Component `j` (1-based) of `rho_tau` on arc `arc`.
    pub fn rho(&self, arc: usize, j: usize) -> f64 {
        if arc + 1 == j {
            1.0 / self.slope(arc)
        } else if arc == j {
            -1.0 / self.slope(arc)
        } else {
            0.0
        }
    }

    /// Arc containing physical time `t` (right-continuous).
    pub fn arc_of_time(&self, t: f64) -> usize {
        self.taus.partition_point(|&v| v <= t)
    }
}

/// `pi_tau(s)`.
pub fn pi_tau(s: f64, tau: &CrossingVector) -> Result<f64> {
    let upper = (tau.r() + 1) as f64;
    if !(0.0..=upper).contains(&s) {
        return Err(Error::OutOfRange { s, upper });
    }
    let j = (s.floor() as usize).min(tau.r());
    Ok(tau.node(j) + (s - j as f64) * tau.slope(j))
}

/// Inverse of [`pi_tau`].
pub fn pi_tau_inverse(t: f64, tau: &CrossingVector) -> Result<f64> {
    if !(0.0..=tau.horizon).contains(&t) {
        return Err(Error::OutOfRange {
            s: t,
            upper: tau.horizon,
        });
    }
    let j = tau.arc_of_time(t).min(tau.r());
    Ok(j as f64 + (t - tau.node(j)) / tau.slope(j))
}

/// Normalized grid with `n_arc` cells on each unit arc; arc ends are exact
/// integers.
pub fn normalized_breaks(r: usize, n_arc: usize) -> Vec<f64> {
    let mut b = Vec::with_capacity((r + 1) * n_arc + 1);
    for j in 0..=r {
        for k in 0..n_arc {
            b.push(j as f64 + k as f64 / n_arc as f64);
        }
    }
    b.push((r + 1) as f64);
    b
}

/// Resamples a physical control onto the normalized grid: each normalized
/// cell takes the value at the image of its midpoint.
pub fn to_normalized(control: &ControlSignal, tau: &CrossingVector, n_arc: usize) -> Result<ControlSignal> {
    if control.domain != TimeDomain::Physical {
        return Err(Error::InvalidControl("expected a physical-time control".into()));
    }
    let breaks = normalized_breaks(tau.r(), n_arc);
    let mut values = Vec::with_capacity((breaks.len() - 1) * control.m);
    for w in breaks.windows(2) {
        let t = pi_tau(0.5 * (w[0] + w[1]), tau)?;
        values.extend_from_slice(control.value_at(t));
    }
    ControlSignal::new(TimeDomain::Normalized, breaks, control.m, values)
}

/// Resamples a normalized control onto a uniform physical grid of `cells`
/// cells, using the value at the preimage of each cell midpoint.
pub fn from_normalized(control: &ControlSignal, tau: &CrossingVector, cells: usize) -> Result<ControlSignal> {
    if control.domain != TimeDomain::Normalized {
        return Err(Error::InvalidControl("expected a normalized-time control".into()));
    }
    let breaks = ControlSignal::uniform_breaks(0.0, tau.horizon, cells);
    let mut values = Vec::with_capacity(cells * control.m);
    for w in breaks.windows(2) {
        let s = pi_tau_inverse(0.5 * (w[0] + w[1]), tau)?;
        values.extend_from_slice(control.value_at(s));
    }
    ControlSignal::new(TimeDomain::Physical, breaks, control.m, values)
}

/// Exact image of a normalized control: the physical cells are the images
/// of the normalized cells.
pub fn physical_image(control: &ControlSignal, tau: &CrossingVector) -> Result<ControlSignal> {
    if control.domain != TimeDomain::Normalized {
        return Err(Error::InvalidControl("expected a normalized-time control".into()));
    }
    let mut breaks = control
        .breaks
        .iter()
        .map(|&s| pi_tau(s, tau))
        .collect::<Result<Vec<f64>>>()?;
    // arc ends land exactly on the crossing times
    for (k, s) in control.breaks.iter().enumerate() {
        if s.fract() == 0.0 {
            breaks[k] = tau.node(*s as usize);
        }
    }
    ControlSignal::new(TimeDomain::Physical, breaks, control.m, control.values.clone())
}

/// Exact pullback of a physical control: normalized cells are the preimages
/// of the physical cells, split at the crossing times.
pub fn pull_back(control: &ControlSignal, tau: &CrossingVector) -> Result<ControlSignal> {
    if control.domain != TimeDomain::Physical {
        return Err(Error::InvalidControl("expected a physical-time control".into()));
    }
    let mut points: Vec<f64> = control.breaks.clone();
    points.extend(tau.taus.iter().copied());
    points.sort_by(|a, b| a.total_cmp(b));
    points.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * tau.horizon);
    let mut breaks = Vec::with_capacity(points.len());
    let mut values = Vec::with_capacity((points.len() - 1) * control.m);
    for (i, &t) in points.iter().enumerate() {
        let s = match tau.taus.iter().position(|&v| v == t) {
            Some(j) => (j + 1) as f64,
            None => pi_tau_inverse(t.clamp(0.0, tau.horizon), tau)?,
        };
        breaks.push(s);
        if i + 1 < points.len() {
            let mid = 0.5 * (t + points[i + 1]);
            values.extend_from_slice(control.value_at(mid));
        }
    }
    let last = breaks.len() - 1;
    breaks[0] = 0.0;
    breaks[last] = (tau.r() + 1) as f64;
    ControlSignal::new(TimeDomain::Normalized, breaks, control.m, values)
}

/// RK4 on `dx/ds = (dpi/ds) f(x, u)` over `[0, r + 1]`.
pub fn integrate_normalized(
    spec: &ProblemSpec,
    control: &ControlSignal,
    tau: &CrossingVector,
    substeps: usize,
) -> Result<Trajectory> {
    if control.domain != TimeDomain::Normalized {
        return Err(Error::InvalidControl("expected a normalized-time control".into()));
    }
    let upper = (tau.r() + 1) as f64;
    if control.start() != 0.0 || control.end() != upper {
        return Err(Error::InvalidControl(format!(
            "normalized control spans [{}, {}], expected [0, {upper}]",
            control.start(),
            control.end()
        )));
    }
    let rates = (0..control.n_cells())
        .map(|k| tau.slope((control.midpoint(k).floor() as usize).min(tau.r())))
        .collect();
    integrate_with_rates(spec, control, substeps, rates)
}

/// `phi(x(r+1)) + sum_j (-1)^j tau_j`.
pub fn reformulated_objective(spec: &ProblemSpec, final_state: &[f64], tau: &CrossingVector) -> f64 {
    spec.phi(final_state) + alternating_sum(&tau.taus)
}

pub fn alternating_sum(taus: &[f64]) -> f64 {
    taus.iter()
        .enumerate()
        .map(|(i, t)| if i % 2 == 0 { -t } else { *t })
        .sum()
}

/// Constant separating the reformulated objective from the crisis cost:
/// the last arc lies outside `K` exactly when `r` is odd.
pub fn structure_offset(r: usize, horizon: f64) -> f64 {
    if r % 2 == 1 {
        horizon
    } else {
        0.0
    }
}

/// State `y = (y1, y2, xi)` of the augmented single-crossing system.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub xi: f64,
}

/// Control `v = (v1, v2)` of the augmented single-crossing system.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedControl {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

/// `F(y, v) = (xi f(y1, v1), (T - xi) f(y2, v2), 0)`.
pub fn eval_f(spec: &ProblemSpec, y: &AugmentedState, v: &AugmentedControl, horizon: f64) -> Vec<f64> {
    let mut out: Vec<f64> = spec.dynamics(&y.y1, &v.v1).iter().map(|a| y.xi * a).collect();
    out.extend(spec.dynamics(&y.y2, &v.v2).iter().map(|a| (horizon - y.xi) * a));
    out.push(0.0);
    out
}

/// `G(y(0), y(1)) = (y1(0), xi(0), y2(0) - y1(1), g(y1(1)))`.
pub fn eval_g(spec: &ProblemSpec, start: &AugmentedState, end: &AugmentedState) -> Vec<f64> {
    let mut out = start.y1.clone();
    out.push(start.xi);
    out.extend(start.y2.iter().zip(&end.y1).map(|(a, b)| a - b));
    out.push(spec.g(&end.y1));
    out
}

/// `psi(y) = phi(y2) + T - xi`.
pub fn eval_psi(spec: &ProblemSpec, y: &AugmentedState, horizon: f64) -> f64 {
    spec.phi(&y.y2) + horizon - y.xi
}

/// `G in C`: `G1 = x0`, `G2 in (0, T)`, `G3 = 0`, `G4 = 0`, within `tol`.
pub fn in_c(spec: &ProblemSpec, gval: &[f64], horizon: f64, tol: f64) -> bool {
    let n = spec.n;
    if gval.len() != 2 * n + 2 {
        return false;
    }
    let first = gval[..n].iter().zip(&spec.x0).all(|(a, b)| (a - b).abs() <= tol);
    let xi = gval[n];
    let interior = xi > 0.0 && xi < horizon;
    let glue = gval[n + 1..2 * n + 1].iter().all(|v| v.abs() <= tol);
    first && interior && glue && gval[2 * n + 1].abs() <= tol
}

/// Integrates the augmented system with RK4 on `[0, 1]` for the control
/// `v1(s) = u(pi(s))`, `v2(s) = u(pi(s + 1))` taken from a normalized
/// single-crossing control, starting from `y(0) = (x0, y2_start, tau)`.
/// Returns the end states `(y(0), y(1))`.
pub fn integrate_augmented(
    spec: &ProblemSpec,
    control: &ControlSignal,
    tau: &CrossingVector,
    y2_start: &[f64],
    substeps: usize,
) -> Result<(AugmentedState, AugmentedState)> {
    if tau.r() != 1 {
        return Err(Error::AugmentedNeedsSingleCrossing(tau.r()));
    }
    let horizon = tau.horizon;
    let start = AugmentedState {
        y1: spec.x0.clone(),
        y2: y2_start.to_vec(),
        xi: tau.taus[0],
    };
    let n = spec.n;
    let pack = |y: &AugmentedState| -> DVector<f64> {
        let mut v = y.y1.clone();
        v.extend_from_slice(&y.y2);
        v.push(y.xi);
        DVector::from_vec(v)
    };
    let unpack = |v: &DVector<f64>| AugmentedState {
        y1: v.rows(0, n).iter().copied().collect(),
        y2: v.rows(n, n).iter().copied().collect(),
        xi: v[2 * n],
    };
    // cells of the first arc pair with the cells of the second arc
    let first: Vec<usize> = (0..control.n_cells()).filter(|&k| control.midpoint(k) < 1.0).collect();
    let second: Vec<usize> = (0..control.n_cells()).filter(|&k| control.midpoint(k) > 1.0).collect();
    if first.len() != second.len()
        || first
            .iter()
            .zip(&second)
            .any(|(&a, &b)| (control.breaks[a] + 1.0 - control.breaks[b]).abs() > 1e-12)
    {
        return Err(Error::InvalidControl("augmented integration needs matching arc grids".into()));
    }
    let mut y = pack(&start);
    for (&a, &b) in first.iter().zip(&second) {
        let v = AugmentedControl {
            v1: control.cell(a).to_vec(),
            v2: control.cell(b).to_vec(),
        };
        let h = control.width(a) / substeps as f64;
        let rhs = |z: &DVector<f64>| DVector::from_vec(eval_f(spec, &unpack(z), &v, horizon));
        for _ in 0..substeps {
            let k1 = rhs(&y);
            let k2 = rhs(&(&y + &k1 * (0.5 * h)));
            let k3 = rhs(&(&y + &k2 * (0.5 * h)));
            let k4 = rhs(&(&y + &k3 * h));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    Ok((start, unpack(&y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::catalog;
    use crate::simulate::{crisis_cost, detect_crossings, integrate};

    fn cv(t: &[f64], horizon: f64) -> CrossingVector {
        CrossingVector::new(t.to_vec(), horizon).unwrap()
    }

    #[test]
    fn change_of_time_values() {
        let a = cv(&[1.0], 2.0);
        assert_eq!(pi_tau(0.5, &a).unwrap(), 0.5);
        assert_eq!(pi_tau(1.5, &a).unwrap(), 1.5);
        let b = cv(&[0.5], 2.0);
        // (T - tau) s + 2 tau - T at s = 1.5
        assert_eq!(pi_tau(1.5, &b).unwrap(), 1.25);
        let c = cv(&[1.0, 2.0], 4.0);
        assert_eq!(pi_tau(2.5, &c).unwrap(), 3.0);
        for j in 0..=3 {
            assert_eq!(pi_tau(j as f64, &c).unwrap(), c.node(j));
        }
        assert!(pi_tau(3.5, &c).is_err());
        assert!(pi_tau(-0.1, &c).is_err());
    }

    #[test]
    fn crossing_vector_validation() {
        assert!(CrossingVector::new(vec![0.0], 2.0).is_err());
        assert!(CrossingVector::new(vec![1.0, 1.0], 2.0).is_err());
        assert!(CrossingVector::new(vec![2.0], 2.0).is_err());
        assert!(CrossingVector::new(vec![], 2.0).is_ok());
    }

    #[test]
    fn rho_components() {
        let c = cv(&[1.0, 2.5], 4.0);
        assert_eq!(c.rho(0, 1), 1.0);
        assert_eq!(c.rho(1, 1), -1.0 / 1.5);
        assert_eq!(c.rho(1, 2), 1.0 / 1.5);
        assert_eq!(c.rho(2, 2), -1.0 / 1.5);
        assert_eq!(c.rho(2, 1), 0.0);
        let d = [0.3, -0.2];
        for arc in 0..3 {
            let direct: f64 = (1..=2).map(|j| c.rho(arc, j) * d[j - 1]).sum();
            assert!((c.rho_dot(arc, &d) - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn transport_examples() {
        let u = ControlSignal::constant(TimeDomain::Physical, 0.0, 2.0, 20, &[1.0]).unwrap();
        let un = to_normalized(&u, &cv(&[1.0], 2.0), 10).unwrap();
        assert!(un.values.iter().all(|&v| v == 1.0));
        assert_eq!(un.end(), 2.0);

        let u = ControlSignal::uniform(TimeDomain::Physical, 0.0, 2.0, 2, 1, |k| {
            vec![if k == 0 { -1.0 } else { 1.0 }]
        })
        .unwrap();
        let un = to_normalized(&u, &cv(&[1.0], 2.0), 4).unwrap();
        assert_eq!(un.values, vec![-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn aligned_round_trip_is_exact() {
        // physical cells of width 0.5; arcs [0, 0.5] and [0.5, 2]
        let u = ControlSignal::uniform(TimeDomain::Physical, 0.0, 2.0, 4, 1, |k| vec![[0.3, -0.7, 1.0, 0.1][k]])
            .unwrap();
        let tau = cv(&[0.5], 2.0);
        let un = to_normalized(&u, &tau, 3).unwrap();
        let back = from_normalized(&un, &tau, 4).unwrap();
        assert_eq!(back.values, u.values);
    }

    #[test]
    fn physical_image_keeps_arc_ends() {
        let tau = cv(&[0.7, 1.9], 4.0);
        let un = ControlSignal::constant(TimeDomain::Normalized, 0.0, 3.0, 30, &[0.0]).unwrap();
        let un = ControlSignal::new(TimeDomain::Normalized, normalized_breaks(2, 10), 1, un.values).unwrap();
        let img = physical_image(&un, &tau).unwrap();
        assert_eq!(img.breaks[10], 0.7);
        assert_eq!(img.breaks[20], 1.9);
        assert_eq!(img.end(), 4.0);
    }

    #[test]
    fn normalized_integration_examples() {
        let spec = catalog("linear_payoff_1d").unwrap();
        let un = ControlSignal::new(TimeDomain::Normalized, normalized_breaks(1, 50), 1, vec![1.0; 100]).unwrap();
        let tr = integrate_normalized(&spec, &un, &cv(&[1.0], 2.0), 1).unwrap();
        assert!(tr.states[50][0].abs() < 1e-14);
        assert!((tr.final_state()[0] - 1.0).abs() < 1e-14);
        let tr = integrate_normalized(&spec, &un, &cv(&[0.5], 2.0), 1).unwrap();
        assert!((tr.states[50][0] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn conjugacy_with_physical_trajectory() {
        let spec = catalog("double_crossing_1d").unwrap();
        let u = spec.initial_guess.clone().unwrap();
        let phys = integrate(&spec, &u, 20).unwrap();
        let cs = detect_crossings(&spec, &phys).unwrap();
        let tau = CrossingVector::new(cs.times(), spec.horizon).unwrap();
        let un = pull_back(&u, &tau).unwrap();
        let norm = integrate_normalized(&spec, &un, &tau, 20).unwrap();
        for (s, x) in norm.times.iter().zip(&norm.states) {
            let t = pi_tau(*s, &tau).unwrap();
            assert!((phys.state_at(&spec, t)[0] - x[0]).abs() < 1e-10);
        }
        let reform = reformulated_objective(&spec, norm.final_state(), &tau);
        let crisis = crisis_cost(&spec, &phys, &cs);
        assert!((crisis - reform - structure_offset(2, spec.horizon)).abs() < 1e-10);
    }

    #[test]
    fn augmented_maps() {
        let spec = catalog("linear_payoff_1d").unwrap();
        let y = AugmentedState {
            y1: vec![0.0],
            y2: vec![1.0],
            xi: 1.0,
        };
        assert_eq!(eval_psi(&spec, &y, 2.0), -1.0);
        let v = AugmentedControl {
            v1: vec![0.4],
            v2: vec![-0.2],
        };
        let f = eval_f(&spec, &y, &v, 2.0);
        assert_eq!(f, vec![0.4, -0.2, 0.0]);

        let g = vec![-1.0, 2.0, 0.0, 0.0];
        assert!(!in_c(&spec, &g, 2.0, 1e-8));
        let g = vec![-1.0, 1.0, 0.0, 0.0];
        assert!(in_c(&spec, &g, 2.0, 1e-8));
    }

    #[test]
    fn augmented_solution_is_feasible() {
        let spec = catalog("linear_payoff_1d").unwrap();
        let tau = cv(&[1.0], 2.0);
        let un = ControlSignal::new(TimeDomain::Normalized, normalized_breaks(1, 20), 1, vec![1.0; 40]).unwrap();
        let norm = integrate_normalized(&spec, &un, &tau, 1).unwrap();
        let (y0, y1) = integrate_augmented(&spec, &un, &tau, &norm.states[20], 2).unwrap();
        let gval = eval_g(&spec, &y0, &y1);
        assert!(in_c(&spec, &gval, 2.0, 1e-8));
        assert!((eval_psi(&spec, &y1, 2.0) + 1.0).abs() < 1e-12);
        assert_eq!(y1.xi, 1.0);
        let two = cv(&[1.0, 1.5], 2.0);
        assert!(matches!(
            integrate_augmented(&spec, &un, &two, &[0.0], 1),
            Err(Error::AugmentedNeedsSingleCrossing(2))
        ));
    }
}
