//! Problem data, derivative validation, the LIG check and the built-in catalog.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::{PolyMap, Polynomial, SmoothMap};
use crate::signal::{ControlSignal, TimeDomain};

/// Default absolute threshold on `c_i(u)` for calling a constraint active.
pub const DEFAULT_ACTIVE_DELTA: f64 = 1e-6;

/// Componentwise bounds containing the control set `U`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxHull {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxHull {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn project(&self, u: &mut [f64]) {
        for ((v, lo), hi) in u.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Data of the time-crisis problem
///
/// minimize `phi(x(T)) + |{t in [0,T] : g(x(t)) > 0}|` subject to
/// `x' = f(x, u)`, `x(0) = x0`, `c(u(t)) <= 0`.
///
/// `f` takes the concatenated input `(x, u)`; `g` and `phi` take `x`; `c`
/// takes `u`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub f: Arc<dyn SmoothMap>,
    pub g: Arc<dyn SmoothMap>,
    pub c: Arc<dyn SmoothMap>,
    pub phi: Arc<dyn SmoothMap>,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub box_hull: Option<BoxHull>,
    /// Physical-time control used when a caller gives none.
    pub initial_guess: Option<ControlSignal>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("l", &self.l)
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .field("box_hull", &self.box_hull)
            .finish_non_exhaustive()
    }
}

fn concat(x: &[f64], u: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len() + u.len());
    z.extend_from_slice(x);
    z.extend_from_slice(u);
    z
}

impl ProblemSpec {
    /// Checks dimensions and the horizon.
    pub fn check(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::NonpositiveHorizon(self.horizon));
        }
        let (n, m, l) = (self.n, self.m, self.l);
        let mismatch = |what: &str, want: String, got: String| {
            Err(Error::DimensionMismatch(format!("{what}: expected {want}, got {got}")))
        };
        if self.f.input_dim() != n + m || self.f.output_dim() != n {
            return mismatch(
                "f",
                format!("R^{} -> R^{}", n + m, n),
                format!("R^{} -> R^{}", self.f.input_dim(), self.f.output_dim()),
            );
        }
        if self.g.input_dim() != n || self.g.output_dim() != 1 {
            return mismatch(
                "g",
                format!("R^{n} -> R"),
                format!("R^{} -> R^{}", self.g.input_dim(), self.g.output_dim()),
            );
        }
        if self.c.input_dim() != m || self.c.output_dim() != l {
            return mismatch(
                "c",
                format!("R^{m} -> R^{l}"),
                format!("R^{} -> R^{}", self.c.input_dim(), self.c.output_dim()),
            );
        }
        if self.phi.input_dim() != n || self.phi.output_dim() != 1 {
            return mismatch(
                "phi",
                format!("R^{n} -> R"),
                format!("R^{} -> R^{}", self.phi.input_dim(), self.phi.output_dim()),
            );
        }
        if self.x0.len() != n {
            return mismatch("x0", n.to_string(), self.x0.len().to_string());
        }
        if let Some(b) = &self.box_hull {
            if b.lower.len() != m || b.upper.len() != m {
                return mismatch("box hull", m.to_string(), format!("{}/{}", b.lower.len(), b.upper.len()));
            }
            if b.lower.iter().zip(&b.upper).any(|(lo, hi)| !(lo <= hi)) {
                return Err(Error::DimensionMismatch("box hull lower > upper".into()));
            }
        }
        if let Some(u) = &self.initial_guess {
            if u.m != m || u.domain != TimeDomain::Physical {
                return Err(Error::DimensionMismatch("initial guess".into()));
            }
        }
        Ok(())
    }

    pub fn box_hull(&self) -> Result<&BoxHull> {
        self.box_hull.as_ref().ok_or(Error::MissingBoxHull)
    }

    pub fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.f.value(&concat(x, u))
    }

    /// `(f_x, f_u)`, of shapes `n x n` and `n x m`.
    pub fn dynamics_jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let j = self.f.jacobian(&concat(x, u));
        (
            j.columns(0, self.n).into_owned(),
            j.columns(self.n, self.m).into_owned(),
        )
    }

    pub fn g(&self, x: &[f64]) -> f64 {
        self.g.value(x)[0]
    }

    pub fn grad_g(&self, x: &[f64]) -> DVector<f64> {
        self.g.jacobian(x).row(0).transpose()
    }

    pub fn hess_g(&self, x: &[f64]) -> DMatrix<f64> {
        self.g.hessian(x, 0)
    }

    pub fn constraints(&self, u: &[f64]) -> Vec<f64> {
        self.c.value(u)
    }

    /// `l x m`.
    pub fn constraint_jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        self.c.jacobian(u)
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.phi.value(x)[0]
    }

    pub fn grad_phi(&self, x: &[f64]) -> DVector<f64> {
        self.phi.jacobian(x).row(0).transpose()
    }

    pub fn hess_phi(&self, x: &[f64]) -> DMatrix<f64> {
        self.phi.hessian(x, 0)
    }

    /// `H(x, p, u) = p . f(x, u)`.
    pub fn hamiltonian(&self, x: &[f64], p: &[f64], u: &[f64]) -> f64 {
        self.dynamics(x, u).iter().zip(p).map(|(a, b)| a * b).sum()
    }

    /// `grad_u H = f_u^T p`.
    pub fn hamiltonian_grad_u(&self, x: &[f64], p: &[f64], u: &[f64]) -> DVector<f64> {
        let (_, fu) = self.dynamics_jacobians(x, u);
        fu.transpose() * DVector::from_column_slice(p)
    }

    /// Hessian of `H^a = p . f + nu . c` with respect to `(x, u)`.
    pub fn augmented_hamiltonian_hessian(&self, x: &[f64], p: &[f64], u: &[f64], nu: &[f64]) -> DMatrix<f64> {
        let z = concat(x, u);
        let d = self.n + self.m;
        let mut h = DMatrix::zeros(d, d);
        for (k, pk) in p.iter().enumerate() {
            if *pk != 0.0 {
                h += self.f.hessian(&z, k) * *pk;
            }
        }
        for (i, ni) in nu.iter().enumerate() {
            if *ni != 0.0 {
                let hc = self.c.hessian(u, i) * *ni;
                let mut block = h.view_mut((self.n, self.n), (self.m, self.m));
                block += hc;
            }
        }
        h
    }
}

/// Indices of constraints with `c_i >= -delta`.
pub fn active_indices(cvals: &[f64], delta: f64) -> Vec<usize> {
    cvals
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= -delta)
        .map(|(i, _)| i)
        .collect()
}

/// Per-cell active sets `I(t)` of a control signal at threshold `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    pub delta: f64,
    pub sets: Vec<Vec<usize>>,
}

impl ActiveSet {
    pub fn of(spec: &ProblemSpec, control: &ControlSignal, delta: f64) -> Self {
        let sets = (0..control.n_cells())
            .map(|k| active_indices(&spec.constraints(control.cell(k)), delta))
            .collect();
        Self { delta, sets }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MapCheck {
    pub name: String,
    pub jacobian_mismatch: f64,
    pub hessian_mismatch: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub maps: Vec<MapCheck>,
    pub g_x0: f64,
    pub interior_start: bool,
    pub jacobian_tol: f64,
    pub hessian_tol: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.interior_start && self.maps.iter().all(|m| m.pass)
    }

    pub fn map(&self, name: &str) -> Option<&MapCheck> {
        self.maps.iter().find(|m| m.name == name)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn fd_jacobian_mismatch(map: &dyn SmoothMap, z: &[f64]) -> f64 {
    let j = map.jacobian(z);
    let mut worst: f64 = 0.0;
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        let h = 1e-6 * z[i].abs().max(1.0);
        zp[i] = z[i] + h;
        let up = map.value(&zp);
        zp[i] = z[i] - h;
        let dn = map.value(&zp);
        zp[i] = z[i];
        for k in 0..map.output_dim() {
            let fd = (up[k] - dn[k]) / (2.0 * h);
            worst = worst.max(rel_err(j[(k, i)], fd));
        }
    }
    worst
}

fn fd_hessian_mismatch(map: &dyn SmoothMap, z: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut zp = z.to_vec();
    let hs: Vec<DMatrix<f64>> = (0..map.output_dim()).map(|k| map.hessian(z, k)).collect();
    for i in 0..z.len() {
        let h = 1e-5 * z[i].abs().max(1.0);
        zp[i] = z[i] + h;
        let up = map.jacobian(&zp);
        zp[i] = z[i] - h;
        let dn = map.jacobian(&zp);
        zp[i] = z[i];
        for (k, hk) in hs.iter().enumerate() {
            for j in 0..z.len() {
                let fd = (up[(k, j)] - dn[(k, j)]) / (2.0 * h);
                worst = worst.max(rel_err(hk[(j, i)], fd));
            }
        }
    }
    worst
}

/// Compares every evaluator's derivatives against central finite differences
/// at `samples` random points and checks that `x0` lies inside `K`.
pub fn validate_spec(spec: &ProblemSpec, samples: usize, seed: u64) -> Result<ValidationReport> {
    spec.check()?;
    const JAC_TOL: f64 = 1e-5;
    const HESS_TOL: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ulo, uhi) = match &spec.box_hull {
        Some(b) => (b.lower.clone(), b.upper.clone()),
        None => (vec![-1.0; spec.m], vec![1.0; spec.m]),
    };
    let draw_x = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        spec.x0
            .iter()
            .map(|&v| {
                let r = 2.0 * (1.0 + v.abs());
                v + rng.random_range(-r..=r)
            })
            .collect()
    };
    let draw_u = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        ulo.iter()
            .zip(&uhi)
            .map(|(lo, hi)| if hi > lo { rng.random_range(*lo..=*hi) } else { *lo })
            .collect()
    };

    let mut maps = Vec::new();
    let entries: [(&str, &dyn SmoothMap); 4] = [
        ("f", spec.f.as_ref()),
        ("g", spec.g.as_ref()),
        ("c", spec.c.as_ref()),
        ("phi", spec.phi.as_ref()),
    ];
    for (name, map) in entries {
        let mut jac: f64 = 0.0;
        let mut hess: f64 = 0.0;
        for _ in 0..samples.max(1) {
            let x = draw_x(&mut rng);
            let u = draw_u(&mut rng);
            let z = match name {
                "f" => concat(&x, &u),
                "c" => u,
                _ => x,
            };
            jac = jac.max(fd_jacobian_mismatch(map, &z));
            if map.order() >= 2 {
                hess = hess.max(fd_hessian_mismatch(map, &z));
            }
        }
        let hessian_mismatch = (map.order() >= 2).then_some(hess);
        maps.push(MapCheck {
            name: name.to_string(),
            jacobian_mismatch: jac,
            hessian_mismatch,
            pass: jac <= JAC_TOL && hessian_mismatch.is_none_or(|h| h <= HESS_TOL),
        });
    }
    let g_x0 = spec.g(&spec.x0);
    Ok(ValidationReport {
        maps,
        g_x0,
        interior_start: g_x0 < 0.0,
        jacobian_tol: JAC_TOL,
        hessian_tol: HESS_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LigReport {
    /// Minimum over cells of the smallest singular value of the active
    /// constraint Jacobian; `+inf` when no constraint is ever active.
    pub margin: f64,
    pub holds: bool,
    pub worst_cell: Option<usize>,
}

/// Linear independence of the gradients of the `delta`-active constraints,
/// uniformly along `control`.
pub fn check_lig(spec: &ProblemSpec, control: &ControlSignal, delta: f64, eps: f64) -> LigReport {
    let mut margin = f64::INFINITY;
    let mut worst_cell = None;
    for k in 0..control.n_cells() {
        let u = control.cell(k);
        let active = active_indices(&spec.constraints(u), delta);
        if active.is_empty() {
            continue;
        }
        let s = if active.len() > spec.m {
            0.0
        } else {
            let jac = spec.constraint_jacobian(u);
            let rows = DMatrix::from_fn(active.len(), spec.m, |r, j| jac[(active[r], j)]);
            rows.singular_values().min()
        };
        if s < margin {
            margin = s;
            worst_cell = Some(k);
        }
    }
    LigReport {
        margin,
        holds: margin >= eps,
        worst_cell,
    }
}

pub const CATALOG: [&str; 3] = ["linear_payoff_1d", "quad_payoff_1d", "double_crossing_1d"];

fn scalar_box_problem(name: &str, phi: Polynomial, horizon: f64) -> ProblemSpec {
    // f(x, u) = u, g(x) = x, c(u) = (u - 1, -u - 1)
    let f = PolyMap::new(2, vec![Polynomial::linear(2, 1, 1.0)]);
    let g = PolyMap::new(1, vec![Polynomial::linear(1, 0, 1.0)]);
    let c = PolyMap::new(
        1,
        vec![
            Polynomial::new(1).term(1.0, &[1]).term(-1.0, &[0]),
            Polynomial::new(1).term(-1.0, &[1]).term(-1.0, &[0]),
        ],
    );
    ProblemSpec {
        name: name.to_string(),
        n: 1,
        m: 1,
        l: 2,
        f: Arc::new(f),
        g: Arc::new(g),
        c: Arc::new(c),
        phi: Arc::new(PolyMap::new(1, vec![phi])),
        x0: vec![-1.0],
        horizon,
        box_hull: Some(BoxHull::new(vec![-1.0], vec![1.0])),
        initial_guess: None,
    }
}

/// Built-in test problems.
pub fn catalog(name: &str) -> Result<ProblemSpec> {
    let spec = match name {
        "linear_payoff_1d" => scalar_box_problem(name, Polynomial::new(1).term(-2.0, &[1]), 2.0),
        "quad_payoff_1d" => scalar_box_problem(
            name,
            Polynomial::new(1).term(-2.0, &[1]).term(0.5, &[2]),
            2.0,
        ),
        "double_crossing_1d" => {
            let mut spec = scalar_box_problem(
                name,
                Polynomial::new(1).term(1.0, &[2]).term(2.0, &[1]).term(1.0, &[0]),
                4.0,
            );
            // +1 on [0, 1.5), -1 on [1.5, 4]: leaves K at t = 1, returns at t = 2
            spec.initial_guess = Some(ControlSignal::uniform(
                TimeDomain::Physical,
                0.0,
                4.0,
                8,
                1,
                |k| vec![if k < 3 { 1.0 } else { -1.0 }],
            )?);
            spec
        }
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    spec.check()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct BrokenJacobian(PolyMap);

    impl SmoothMap for BrokenJacobian {
        fn input_dim(&self) -> usize {
            self.0.input_dim()
        }
        fn output_dim(&self) -> usize {
            self.0.output_dim()
        }
        fn value(&self, z: &[f64]) -> Vec<f64> {
            self.0.value(z)
        }
        fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
            self.0.jacobian(z).add_scalar(1.0)
        }
        fn hessian(&self, z: &[f64], k: usize) -> DMatrix<f64> {
            self.0.hessian(z, k)
        }
    }

    #[test]
    fn catalog_problems_validate() {
        for name in CATALOG {
            let spec = catalog(name).unwrap();
            let rep = validate_spec(&spec, 8, 7).unwrap();
            assert!(rep.passed(), "{name}: {rep:?}");
            for m in &rep.maps {
                assert!(m.jacobian_mismatch <= 1e-8, "{name}/{}", m.name);
                assert!(m.hessian_mismatch.unwrap() <= 1e-8, "{name}/{}", m.name);
            }
            assert_eq!(rep.g_x0, -1.0);
        }
    }

    #[test]
    fn catalog_contents() {
        let lin = catalog("linear_payoff_1d").unwrap();
        assert_eq!(lin.horizon, 2.0);
        assert_eq!(lin.x0, vec![-1.0]);
        assert_eq!(lin.phi(&[1.0]), -2.0);
        let quad = catalog("quad_payoff_1d").unwrap();
        for x in [-3.0, 0.0, 0.7, 5.0] {
            assert_eq!(quad.hess_phi(&[x])[(0, 0)], 1.0);
        }
        let dc = catalog("double_crossing_1d").unwrap();
        assert_eq!(dc.horizon, 4.0);
        assert_eq!(dc.phi(&[-1.0]), 0.0);
        assert!(dc.initial_guess.is_some());
        assert!(matches!(catalog("unknown"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let mut spec = catalog("linear_payoff_1d").unwrap();
        spec.horizon = 0.0;
        let err = validate_spec(&spec, 2, 0).unwrap_err();
        assert!(err.to_string().contains("nonpositive horizon"));
    }

    #[test]
    fn dimension_mismatch_is_hard_error() {
        let mut spec = catalog("linear_payoff_1d").unwrap();
        spec.x0 = vec![-1.0, 0.0];
        assert!(matches!(validate_spec(&spec, 2, 0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn injected_jacobian_fault_is_reported() {
        let mut spec = catalog("linear_payoff_1d").unwrap();
        spec.f = Arc::new(BrokenJacobian(PolyMap::new(2, vec![Polynomial::linear(2, 1, 1.0)])));
        let rep = validate_spec(&spec, 4, 1).unwrap();
        let f = rep.map("f").unwrap();
        assert!(!f.pass);
        assert!((f.jacobian_mismatch - 1.0).abs() < 1e-6, "{}", f.jacobian_mismatch);
        assert!(!rep.passed());
    }

    #[test]
    fn outside_start_is_flagged() {
        let mut spec = catalog("linear_payoff_1d").unwrap();
        spec.x0 = vec![0.5];
        let rep = validate_spec(&spec, 2, 0).unwrap();
        assert!(!rep.interior_start);
        assert!(!rep.passed());
    }

    fn constant(u: f64) -> ControlSignal {
        ControlSignal::constant(TimeDomain::Physical, 0.0, 2.0, 10, &[u]).unwrap()
    }

    #[test]
    fn lig_on_box_constraints() {
        let spec = catalog("linear_payoff_1d").unwrap();
        let rep = check_lig(&spec, &constant(1.0), 0.0, 1e-6);
        assert_eq!(rep.margin, 1.0);
        assert!(rep.holds);
        let rep = check_lig(&spec, &constant(0.0), 0.5, 1e-6);
        assert_eq!(rep.margin, f64::INFINITY);
        assert!(rep.holds);
        assert_eq!(rep.worst_cell, None);
    }

    #[test]
    fn lig_detects_duplicate_rows() {
        let mut spec = catalog("linear_payoff_1d").unwrap();
        let row = Polynomial::new(1).term(1.0, &[1]).term(-1.0, &[0]);
        spec.c = Arc::new(PolyMap::new(1, vec![row.clone(), row]));
        let rep = check_lig(&spec, &constant(1.0), 1e-6, 1e-6);
        assert_eq!(rep.margin, 0.0);
        assert!(!rep.holds);
    }

    #[test]
    fn active_set_shrinks_with_delta() {
        let spec = catalog("linear_payoff_1d").unwrap();
        let u = ControlSignal::uniform(TimeDomain::Physical, 0.0, 2.0, 5, 1, |k| {
            vec![[1.0, 0.99, 0.5, -0.999, -1.0][k]]
        })
        .unwrap();
        let mut prev: Option<ActiveSet> = None;
        for delta in [1.0, 0.1, 0.01, 1e-6, 0.0] {
            let a = ActiveSet::of(&spec, &u, delta);
            if let Some(p) = &prev {
                for (big, small) in p.sets.iter().zip(&a.sets) {
                    assert!(small.iter().all(|i| big.contains(i)));
                }
            }
            prev = Some(a);
        }
        assert_eq!(prev.unwrap().sets, vec![vec![0], vec![], vec![], vec![], vec![1]]);
    }

    #[test]
    fn augmented_hessian_includes_nu_block() {
        let mut spec = catalog("linear_payoff_1d").unwrap();
        // c(u) = (u^2 - 1)
        spec.c = Arc::new(PolyMap::new(1, vec![Polynomial::new(1).term(1.0, &[2]).term(-1.0, &[0])]));
        spec.l = 1;
        let h = spec.augmented_hamiltonian_hessian(&[0.0], &[3.0], &[0.5], &[2.0]);
        assert_eq!(h[(1, 1)], 4.0);
        assert_eq!(h[(0, 0)], 0.0);
    }
}
