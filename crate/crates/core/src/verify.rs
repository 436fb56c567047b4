//! First-order residuals, Pontryagin sampling, linearized dynamics, critical
//! directions and the second-order quadratic form.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::multipliers::{
    hamiltonian_profile, rho_weighted_integral, step_midpoint, CheckRow, PontryaginCertificate,
};
use crate::ode;
use crate::problem::{check_lig, ProblemSpec};
use crate::reformulate::{integrate_normalized, CrossingVector};
use crate::signal::ControlSignal;
use crate::solve::{arc_end_nodes, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub stationarity: f64,
    pub sign: f64,
    pub complementarity: f64,
    pub jump: f64,
    pub hamiltonian: f64,
    pub h0: f64,
    pub integral: f64,
    pub crossing: f64,
    pub gamma_nlp: f64,
    pub pontryagin: f64,
    pub lig_eps: f64,
    pub lig_delta: f64,
    pub cone: f64,
    pub omega: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            stationarity: 1e-6,
            sign: 1e-6,
            complementarity: 1e-6,
            jump: 1e-8,
            hamiltonian: 1e-4,
            h0: 1e-4,
            integral: 1e-4,
            crossing: 1e-6,
            gamma_nlp: 1e-4,
            pontryagin: 1e-6,
            lig_eps: 1e-6,
            lig_delta: 1e-6,
            cone: 1e-8,
            omega: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub pontry_samples: usize,
    pub omega_samples: usize,
    pub seed: u64,
    /// Condition number above which the crossing-tangency system counts as
    /// singular.
    pub max_condition: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            pontry_samples: 101,
            omega_samples: 200,
            seed: 0,
            max_condition: 1e10,
        }
    }
}

fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Minimum over cells of `H(x, p, v) - H(x, p, u)` for `v` on a grid of the
/// box hull restricted to `c(v) <= 0`.
pub fn pontryagin_margin(spec: &ProblemSpec, sol: &Solution, cert: &PontryaginCertificate, per_dim: usize) -> Result<f64> {
    let hull = spec.box_hull()?;
    let m = spec.m;
    let per_dim = per_dim.max(2);
    let total = per_dim.pow(m as u32);
    let mut grid = Vec::new();
    for idx in 0..total {
        let mut rest = idx;
        let v: Vec<f64> = (0..m)
            .map(|i| {
                let q = rest % per_dim;
                rest /= per_dim;
                hull.lower[i] + (hull.upper[i] - hull.lower[i]) * q as f64 / (per_dim - 1) as f64
            })
            .collect();
        if spec.constraints(&v).iter().all(|c| *c <= 1e-12) {
            grid.push(v);
        }
    }
    let tr = &sol.trajectory_physical;
    let mut margin = f64::INFINITY;
    for i in 0..tr.n_steps() {
        let u = tr.control.cell(tr.cell_of_step(i));
        let (x, p) = step_midpoint(spec, sol, cert, i);
        let base = spec.hamiltonian(&x, &p, u);
        for v in &grid {
            margin = margin.min(spec.hamiltonian(&x, &p, v) - base);
        }
    }
    Ok(margin)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondOrderStatus {
    Pass,
    Fail,
    /// No nonzero critical direction was found.
    Vacuous,
    /// Not evaluated because a first-order check failed.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderEntry {
    pub status: SecondOrderStatus,
    pub message: String,
    pub min_normalized_omega: Option<f64>,
    pub accepted: usize,
    pub attempted: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub entries: Vec<CheckRow>,
    pub first_order_pass: bool,
    /// LIG margin below its threshold or a rank-deficient active Jacobian.
    pub assumption_violation: bool,
    pub nu_min: f64,
    pub pontryagin_margin: f64,
    pub lig_margin: f64,
    pub integral_relation: Vec<f64>,
    pub hamiltonian_jump: Vec<f64>,
    pub second_order: Option<SecondOrderEntry>,
    pub warnings: Vec<String>,
}

impl VerificationReport {
    pub fn entry(&self, name: &str) -> Option<&CheckRow> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// First-order pass and, when evaluated, no second-order violation.
    pub fn passed(&self) -> bool {
        self.first_order_pass
            && !matches!(
                self.second_order.as_ref().map(|s| s.status),
                Some(SecondOrderStatus::Fail)
            )
    }
}

/// Every first-order residual of the certificate, recomputed from its
/// primary data `(alpha, gamma, nu, p)`.
pub fn check_first_order(
    spec: &ProblemSpec,
    sol: &Solution,
    cert: &PontryaginCertificate,
    tols: &Tolerances,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    let tr = &sol.trajectory_physical;
    let ctrl = &tr.control;
    let (m, l) = (spec.m, spec.l);
    let r = cert.r();

    let mut stationarity: f64 = 0.0;
    let mut nu_min = f64::INFINITY;
    let mut complementarity: f64 = 0.0;
    for k in 0..ctrl.n_cells() {
        let u = ctrl.cell(k);
        let jac = spec.constraint_jacobian(u);
        let cv = spec.constraints(u);
        let nu = cert.nu_cell(k);
        for row in 0..m {
            let mut v = cert.hu[k * m + row];
            for i in 0..l {
                v += jac[(i, row)] * nu[i];
            }
            stationarity = stationarity.max(v.abs());
        }
        for i in 0..l {
            nu_min = nu_min.min(nu[i]);
            complementarity = complementarity.max((nu[i] * cv[i]).abs());
        }
    }
    if l == 0 {
        nu_min = 0.0;
    }

    let mut costate_jump: f64 = 0.0;
    let mut crossing: f64 = 0.0;
    for (j, &c) in cert.crossing_nodes.iter().enumerate() {
        let grad = spec.grad_g(&tr.states[c]);
        for i in 0..spec.n {
            let d = cert.p_right[c][i] - cert.p_left[c][i] - cert.gamma[j] * grad[i];
            costate_jump = costate_jump.max(d.abs());
        }
        crossing = crossing.max(spec.g(&tr.states[c]).abs());
    }
    let grad_phi = spec.grad_phi(tr.final_state());
    let terminal = sup(cert.p_terminal().iter().zip(grad_phi.iter()).map(|(p, g)| p - cert.alpha * g));

    let prof = hamiltonian_profile(spec, sol, cert);
    let ham_jump = sup((0..r).map(|j| prof.jump[j] - cert.alpha * cert.directions[j].hamiltonian_drop()));
    let integral = rho_weighted_integral(&prof);
    let integral_res = sup(integral.iter().enumerate().map(|(i, v)| {
        let j = i + 1;
        v + if j % 2 == 0 { cert.alpha } else { -cert.alpha }
    }));
    let gamma_nlp = sup(cert.gamma.iter().zip(&cert.gamma_nlp).map(|(a, b)| a - b));
    let pontry = pontryagin_margin(spec, sol, cert, opts.pontry_samples)?;
    let lig = check_lig(spec, ctrl, tols.lig_delta, tols.lig_eps);

    let entries = vec![
        CheckRow::new("stationarity", stationarity, tols.stationarity),
        CheckRow::at_least("nu_sign", nu_min, -tols.sign),
        CheckRow::new("complementarity", complementarity, tols.complementarity),
        CheckRow::new("terminal_costate", terminal, tols.jump),
        CheckRow::new("costate_jump", costate_jump, tols.jump),
        CheckRow::new("hamiltonian_jump", ham_jump, tols.jump),
        CheckRow::new("hamiltonian_arc", sup(prof.arc_deviation.iter().copied()), tols.hamiltonian),
        CheckRow::new("h0_deviation", prof.h0_deviation, tols.h0),
        CheckRow::new("integral_relation", integral_res, tols.integral),
        CheckRow::new("crossing_feasibility", crossing, tols.crossing),
        CheckRow::new("gamma_nlp", gamma_nlp, tols.gamma_nlp),
        CheckRow::at_least("pontryagin_margin", pontry, -tols.pontryagin),
        CheckRow::at_least("lig_margin", lig.margin, tols.lig_eps),
    ];
    let first_order_pass = entries.iter().all(|e| e.pass);
    let mut warnings = Vec::new();
    if !cert.rank_deficient.is_empty() {
        warnings.push(format!(
            "active constraint Jacobian rank deficient on {} cells",
            cert.rank_deficient.len()
        ));
    }
    Ok(VerificationReport {
        first_order_pass,
        assumption_violation: !lig.holds || !cert.rank_deficient.is_empty(),
        nu_min,
        pontryagin_margin: pontry,
        lig_margin: lig.margin,
        integral_relation: integral,
        hamiltonian_jump: prof.jump,
        entries,
        second_order: None,
        warnings,
    })
}

/// Perturbation `(du, dtau)` with the state response `dx` on the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalDirection {
    /// Row-major `cells x m` on the solution's cells.
    pub du: Vec<f64>,
    pub dtau: Vec<f64>,
    pub dx: Vec<Vec<f64>>,
}

impl CriticalDirection {
    pub fn scale(&self, a: f64) -> Self {
        Self {
            du: self.du.iter().map(|v| a * v).collect(),
            dtau: self.dtau.iter().map(|v| a * v).collect(),
            dx: self.dx.iter().map(|x| x.iter().map(|v| a * v).collect()).collect(),
        }
    }
}

/// Response of the linearized dynamics
/// `dx' = f_x dx + f_u du + (rho . dtau) f`, `dx(0) = 0`, computed as the
/// tangent of the RK4 scheme the solution was integrated with.
pub fn linearize(spec: &ProblemSpec, sol: &Solution, du: &[f64], dtau: &[f64]) -> Vec<Vec<f64>> {
    let tr = &sol.trajectory_normalized;
    let ctrl = &tr.control;
    let r = sol.r();
    let d = |j: usize| -> f64 {
        if j == 0 || j > r {
            0.0
        } else {
            dtau[j - 1]
        }
    };
    let mut dx = DVector::zeros(spec.n);
    let mut out = Vec::with_capacity(tr.states.len());
    out.push(dx.iter().copied().collect());
    for i in 0..tr.n_steps() {
        let k = tr.cell_of_step(i);
        let u = ctrl.cell(k);
        let h = tr.times[i + 1] - tr.times[i];
        let rate = tr.rates[k];
        let arc = (ctrl.midpoint(k).floor() as usize).min(r);
        let drate = d(arc + 1) - d(arc);
        let (_, stages) = ode::step_with_stages(spec, &tr.states[i], u, h, rate);
        let duk = DVector::from_column_slice(&du[k * spec.m..(k + 1) * spec.m]);
        dx = ode::tangent_step(spec, &stages, u, h, rate, &dx, &duk, drate);
        out.push(dx.iter().copied().collect());
    }
    out
}

pub fn direction(spec: &ProblemSpec, sol: &Solution, du: Vec<f64>, dtau: Vec<f64>) -> CriticalDirection {
    let dx = linearize(spec, sol, &du, &dtau);
    CriticalDirection { du, dtau, dx }
}

/// `|du|_{L2} + |dtau|` on the physical cells.
pub fn direction_norm(sol: &Solution, d: &CriticalDirection) -> f64 {
    let ctrl = &sol.control_physical;
    let m = ctrl.m;
    let l2: f64 = (0..ctrl.n_cells())
        .map(|k| ctrl.width(k) * d.du[k * m..(k + 1) * m].iter().map(|v| v * v).sum::<f64>())
        .sum();
    l2.sqrt() + d.dtau.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The three cone conditions of a direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeResiduals {
    /// `max |Dc_i du|` over delta-active constraints.
    pub active_tangency: f64,
    /// `max_j |Dg(x(tau_j)) dx(tau_j)|`.
    pub crossing_tangency: f64,
    /// `Dphi dx(T) + sum_j (-1)^j dtau_j`.
    pub cost: f64,
}

impl ConeResiduals {
    pub fn is_critical(&self, cone_tol: f64) -> bool {
        self.active_tangency <= 1e-10 && self.crossing_tangency <= cone_tol && self.cost <= cone_tol
    }
}

pub fn cone_residuals(
    spec: &ProblemSpec,
    sol: &Solution,
    cert: &PontryaginCertificate,
    d: &CriticalDirection,
) -> ConeResiduals {
    let tr = &sol.trajectory_physical;
    let ctrl = &tr.control;
    let m = spec.m;
    let mut active: f64 = 0.0;
    for k in 0..ctrl.n_cells() {
        if cert.active[k].is_empty() {
            continue;
        }
        let jac = spec.constraint_jacobian(ctrl.cell(k));
        for &i in &cert.active[k] {
            let v: f64 = (0..m).map(|c| jac[(i, c)] * d.du[k * m + c]).sum();
            active = active.max(v.abs());
        }
    }
    let mut crossing: f64 = 0.0;
    for &c in &cert.crossing_nodes {
        let g = spec.grad_g(&tr.states[c]);
        crossing = crossing.max(g.iter().zip(&d.dx[c]).map(|(a, b)| a * b).sum::<f64>().abs());
    }
    let gphi = spec.grad_phi(tr.final_state());
    let last = &d.dx[d.dx.len() - 1];
    let mut cost: f64 = gphi.iter().zip(last).map(|(a, b)| a * b).sum();
    for (i, t) in d.dtau.iter().enumerate() {
        cost += if (i + 1) % 2 == 0 { *t } else { -t };
    }
    ConeResiduals {
        active_tangency: active,
        crossing_tangency: crossing,
        cost,
    }
}

/// Symmetric bilinear form whose diagonal is the second-order form `Omega`.
///
/// The crossing terms carry the Lagrangian weight `-gamma_j` of the
/// constraint `g(x(j)) = 0`.
pub fn omega_bilinear(
    spec: &ProblemSpec,
    sol: &Solution,
    cert: &PontryaginCertificate,
    a: &CriticalDirection,
    b: &CriticalDirection,
) -> f64 {
    let tr = &sol.trajectory_physical;
    let ctrl = &tr.control;
    let (n, m) = (spec.n, spec.m);
    let tau = CrossingVector {
        taus: cert.taus.clone(),
        horizon: sol.horizon,
    };
    let quad = |h: &DMatrix<f64>, x: &[f64], y: &[f64]| -> f64 {
        (h * DVector::from_column_slice(y)).dot(&DVector::from_column_slice(x))
    };
    let last = tr.n_steps();
    let mut total = cert.alpha * quad(&spec.hess_phi(tr.final_state()), &a.dx[last], &b.dx[last]);
    for (j, &c) in cert.crossing_nodes.iter().enumerate() {
        total += -cert.gamma[j] * quad(&spec.hess_g(&tr.states[c]), &a.dx[c], &b.dx[c]);
    }
    for i in 0..last {
        let k = tr.cell_of_step(i);
        let u = ctrl.cell(k);
        let ht = tr.times[i + 1] - tr.times[i];
        let arc = cert.arc_of_step(i);
        let (x, p) = step_midpoint(spec, sol, cert, i);
        let mid = |d: &CriticalDirection| -> Vec<f64> {
            let mut z: Vec<f64> = (0..n).map(|q| 0.5 * (d.dx[i][q] + d.dx[i + 1][q])).collect();
            z.extend_from_slice(&d.du[k * m..(k + 1) * m]);
            z
        };
        let (za, zb) = (mid(a), mid(b));
        let hess = spec.augmented_hamiltonian_hessian(&x, &p, u, cert.nu_cell(k));
        total += ht * quad(&hess, &za, &zb);
        let (fx, fu) = spec.dynamics_jacobians(&x, u);
        let pv = DVector::from_column_slice(&p);
        let dh = |z: &[f64]| -> f64 {
            let v = &fx * DVector::from_column_slice(&z[..n]) + &fu * DVector::from_column_slice(&z[n..]);
            pv.dot(&v)
        };
        let rho_a = tau.rho_dot(arc, &a.dtau);
        let rho_b = tau.rho_dot(arc, &b.dtau);
        total += ht * (rho_a * dh(&zb) + rho_b * dh(&za));
    }
    total
}

pub fn evaluate_omega(spec: &ProblemSpec, sol: &Solution, cert: &PontryaginCertificate, d: &CriticalDirection) -> f64 {
    omega_bilinear(spec, sol, cert, d, d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSample {
    pub directions: Vec<CriticalDirection>,
    pub attempted: usize,
    pub discarded_singular: usize,
    pub discarded_trivial: usize,
    pub discarded_cost: usize,
    pub warning: Option<String>,
}

/// Random critical directions: i.i.d. Gaussian cell values projected onto
/// the null space of the active constraint rows, `dtau` solved from the
/// crossing tangency conditions, sign chosen to satisfy the cost
/// inequality, then normalized to `|du|_{L2} + |dtau| = 1`.
pub fn sample_critical(
    spec: &ProblemSpec,
    sol: &Solution,
    cert: &PontryaginCertificate,
    count: usize,
    seed: u64,
    tols: &Tolerances,
    max_condition: f64,
) -> CriticalSample {
    let ctrl = &sol.control_physical;
    let (m, r) = (spec.m, cert.r());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tr = &sol.trajectory_physical;
    let grads: Vec<DVector<f64>> = cert.crossing_nodes.iter().map(|&c| spec.grad_g(&tr.states[c])).collect();
    let tangency = |dx: &[Vec<f64>]| -> DVector<f64> {
        DVector::from_iterator(
            r,
            cert.crossing_nodes
                .iter()
                .zip(&grads)
                .map(|(&c, g)| g.iter().zip(&dx[c]).map(|(a, b)| a * b).sum::<f64>()),
        )
    };
    let zero_u = vec![0.0; ctrl.values.len()];
    let mut mat = DMatrix::zeros(r, r);
    for i in 0..r {
        let mut e = vec![0.0; r];
        e[i] = 1.0;
        mat.set_column(i, &tangency(&linearize(spec, sol, &zero_u, &e)));
    }
    let singular = if r == 0 {
        false
    } else {
        let sv = mat.singular_values();
        let (mx, mn) = (sv.max(), sv.min());
        !(mn > 0.0) || mx / mn > max_condition
    };
    // null-space projectors of the active rows, per cell
    let projectors: Vec<Option<DMatrix<f64>>> = (0..ctrl.n_cells())
        .map(|k| {
            let idx = &cert.active[k];
            if idx.is_empty() {
                return None;
            }
            let jac = spec.constraint_jacobian(ctrl.cell(k));
            let rows = DMatrix::from_fn(idx.len(), m, |a, b| jac[(idx[a], b)]);
            let svd = rows.svd(false, true);
            let vt = svd.v_t.unwrap();
            let mut proj = DMatrix::identity(m, m);
            for (q, s) in svd.singular_values.iter().enumerate() {
                if *s > 1e-12 {
                    let v = vt.row(q).transpose();
                    proj -= &v * v.transpose();
                }
            }
            Some(proj)
        })
        .collect();

    let mut out = CriticalSample {
        directions: Vec::new(),
        attempted: count,
        discarded_singular: 0,
        discarded_trivial: 0,
        discarded_cost: 0,
        warning: None,
    };
    for _ in 0..count {
        let mut du: Vec<f64> = (0..ctrl.values.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (k, proj) in projectors.iter().enumerate() {
            if let Some(pm) = proj {
                let v = pm * DVector::from_column_slice(&du[k * m..(k + 1) * m]);
                du[k * m..(k + 1) * m].copy_from_slice(v.as_slice());
            }
        }
        if singular {
            out.discarded_singular += 1;
            continue;
        }
        let dtau: Vec<f64> = if r == 0 {
            Vec::new()
        } else {
            let rhs = -tangency(&linearize(spec, sol, &du, &vec![0.0; r]));
            match mat.clone().lu().solve(&rhs) {
                Some(v) => v.iter().copied().collect(),
                None => {
                    out.discarded_singular += 1;
                    continue;
                }
            }
        };
        let mut d = direction(spec, sol, du, dtau);
        let norm = direction_norm(sol, &d);
        if !(norm > 1e-12) {
            out.discarded_trivial += 1;
            continue;
        }
        d = d.scale(1.0 / norm);
        let res = cone_residuals(spec, sol, cert, &d);
        if res.cost > tols.cone {
            d = d.scale(-1.0);
        }
        let res = cone_residuals(spec, sol, cert, &d);
        if !res.is_critical(tols.cone) {
            out.discarded_cost += 1;
            continue;
        }
        out.directions.push(d);
    }
    if out.directions.len() * 10 < count.max(1) {
        out.warning = Some("cone nearly trivial".to_string());
    }
    out
}

/// Minimum of `Omega / |d|^2` over sampled critical directions.
pub fn second_order_check(
    spec: &ProblemSpec,
    sol: &Solution,
    cert: &PontryaginCertificate,
    count: usize,
    seed: u64,
    tols: &Tolerances,
    max_condition: f64,
) -> (SecondOrderEntry, CriticalSample) {
    let sample = sample_critical(spec, sol, cert, count, seed, tols, max_condition);
    let values: Vec<f64> = sample
        .directions
        .iter()
        .map(|d| {
            let nrm = direction_norm(sol, d);
            evaluate_omega(spec, sol, cert, d) / (nrm * nrm)
        })
        .collect();
    let entry = if values.is_empty() {
        SecondOrderEntry {
            status: SecondOrderStatus::Vacuous,
            message: "vacuous (cone trivial)".to_string(),
            min_normalized_omega: None,
            accepted: 0,
            attempted: count,
            tol: tols.omega,
        }
    } else {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let pass = min >= -tols.omega;
        SecondOrderEntry {
            status: if pass { SecondOrderStatus::Pass } else { SecondOrderStatus::Fail },
            message: format!(
                "min normalized omega {min:.6e} over {} critical directions{}",
                values.len(),
                sample.warning.as_ref().map(|w| format!(" ({w})")).unwrap_or_default()
            ),
            min_normalized_omega: Some(min),
            accepted: values.len(),
            attempted: count,
            tol: tols.omega,
        }
    };
    (entry, sample)
}

/// First-order suite followed by the second-order check, which only runs
/// when every first-order entry passes.
pub fn verify_solution(
    spec: &ProblemSpec,
    sol: &Solution,
    cert: &PontryaginCertificate,
    tols: &Tolerances,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    let mut report = check_first_order(spec, sol, cert, tols, opts)?;
    let entry = if report.first_order_pass {
        let (entry, sample) =
            second_order_check(spec, sol, cert, opts.omega_samples, opts.seed, tols, opts.max_condition);
        if let Some(w) = sample.warning {
            report.warnings.push(w);
        }
        entry
    } else {
        SecondOrderEntry {
            status: SecondOrderStatus::Skipped,
            message: "skipped: first-order checks failed".to_string(),
            min_normalized_omega: None,
            accepted: 0,
            attempted: 0,
            tol: tols.omega,
        }
    };
    report.second_order = Some(entry);
    Ok(report)
}

/// Lagrangian merit `phi(x(r+1)) + sum (-1)^j tau_j + sum lambda_j g(x(j))
/// + (penalty / 2) sum g(x(j))^2` at the solution moved by `h d`.
pub fn merit_along(
    spec: &ProblemSpec,
    sol: &Solution,
    lambda: &[f64],
    penalty: f64,
    d: &CriticalDirection,
    h: f64,
) -> Result<f64> {
    let base = &sol.control_normalized;
    let values: Vec<f64> = base.values.iter().zip(&d.du).map(|(u, v)| u + h * v).collect();
    let control = ControlSignal::new(base.domain, base.breaks.clone(), base.m, values)?;
    let taus: Vec<f64> = sol.tau.taus.iter().zip(&d.dtau).map(|(t, v)| t + h * v).collect();
    let tau = CrossingVector::new(taus, sol.horizon)?;
    let traj = integrate_normalized(spec, &control, &tau, sol.substeps)?;
    let nodes = arc_end_nodes(&control, tau.r(), sol.substeps)?;
    let mut v = spec.phi(traj.final_state()) + crate::reformulate::alternating_sum(&tau.taus);
    for (j, &c) in nodes.iter().enumerate() {
        let g = spec.g(&traj.states[c]);
        v += lambda[j] * g + 0.5 * penalty * g * g;
    }
    Ok(v)
}

/// Central second difference of [`merit_along`] with step `h`.
pub fn merit_second_difference(
    spec: &ProblemSpec,
    sol: &Solution,
    lambda: &[f64],
    penalty: f64,
    d: &CriticalDirection,
    h: f64,
) -> Result<f64> {
    let fp = merit_along(spec, sol, lambda, penalty, d, h)?;
    let f0 = merit_along(spec, sol, lambda, penalty, d, 0.0)?;
    let fm = merit_along(spec, sol, lambda, penalty, d, -h)?;
    Ok((fp - 2.0 * f0 + fm) / (h * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multipliers::{certificate_with, compute_certificate, CertificateOptions};
    use crate::problem::catalog;
    use crate::solve::{constant_normalized, retimed, solve_fixed_structure, SolverOptions};

    fn linear() -> (ProblemSpec, Solution, PontryaginCertificate) {
        let spec = catalog("linear_payoff_1d").unwrap();
        let opts = SolverOptions {
            n_arc: 40,
            ..SolverOptions::default()
        };
        let u = constant_normalized(1, opts.n_arc, &[0.5]).unwrap();
        let tau = CrossingVector::new(vec![1.5], 2.0).unwrap();
        let sol = solve_fixed_structure(&spec, &u, &tau, &opts).unwrap();
        let cert = compute_certificate(&spec, &sol).unwrap();
        (spec, sol, cert)
    }

    #[test]
    fn hand_certificate_passes_tight_tolerances() {
        let (spec, sol, mut cert) = linear();
        // exact values: p = -1 then -2, gamma = -1, nu = (1, 0) then (2, 0)
        let c = cert.crossing_nodes[0];
        for i in 0..cert.p_left.len() {
            cert.p_left[i] = vec![if i <= c { -1.0 } else { -2.0 }];
            cert.p_right[i] = vec![if i < c { -1.0 } else { -2.0 }];
        }
        cert.gamma = vec![-1.0];
        let half = sol.control_physical.n_cells() / 2;
        for k in 0..2 * half {
            let v = if k < half { 1.0 } else { 2.0 };
            cert.nu[2 * k] = v;
            cert.nu[2 * k + 1] = 0.0;
            cert.hu[k] = -v;
        }
        let tols = Tolerances {
            hamiltonian: 1e-8,
            h0: 1e-8,
            integral: 1e-6,
            ..Tolerances::default()
        };
        let rep = check_first_order(&spec, &sol, &cert, &tols, &VerifyOptions::default()).unwrap();
        assert!(rep.first_order_pass, "{:#?}", rep.entries);
        assert!(rep.pontryagin_margin.abs() < 1e-12);
    }

    #[test]
    fn flipped_gamma_and_negative_nu_are_caught() {
        let (spec, sol, cert) = linear();
        let tols = Tolerances::default();
        let vo = VerifyOptions::default();
        let bad = certificate_with(&spec, &sol, Some(&[1.0]), &CertificateOptions::default()).unwrap();
        let rep = check_first_order(&spec, &sol, &bad, &tols, &vo).unwrap();
        assert!((rep.entry("hamiltonian_jump").unwrap().value - 2.0).abs() < 1e-6);
        assert!((rep.entry("integral_relation").unwrap().value - 2.0).abs() < 1e-6);

        let mut bad = cert.clone();
        bad.nu[0] = -bad.nu[0];
        let rep = check_first_order(&spec, &sol, &bad, &tols, &vo).unwrap();
        assert!(!rep.entry("nu_sign").unwrap().pass);
        assert!(rep.nu_min < 0.0);
    }

    #[test]
    fn linear_payoff_cone_is_trivial() {
        let (spec, sol, cert) = linear();
        let tols = Tolerances::default();
        let rep = verify_solution(&spec, &sol, &cert, &tols, &VerifyOptions::default()).unwrap();
        assert!(rep.first_order_pass, "{:#?}", rep.entries);
        let so = rep.second_order.unwrap();
        assert_eq!(so.status, SecondOrderStatus::Vacuous);
        assert_eq!(so.message, "vacuous (cone trivial)");
        assert!(rep.warnings.iter().any(|w| w == "cone nearly trivial"));
    }

    #[test]
    fn linearization_examples() {
        let (spec, sol, cert) = linear();
        let cells = sol.control_physical.n_cells();
        let zero = direction(&spec, &sol, vec![0.0; cells], vec![0.0]);
        assert!(zero.dx.iter().all(|x| x[0] == 0.0));
        assert_eq!(evaluate_omega(&spec, &sol, &cert, &zero), 0.0);

        let eps = 0.3;
        let d = direction(&spec, &sol, vec![0.0; cells], vec![eps]);
        let c = cert.crossing_nodes[0];
        for (i, t) in sol.trajectory_physical.times.iter().enumerate().take(c + 1) {
            assert!((d.dx[i][0] - eps * t / sol.tau.taus[0]).abs() < 1e-12);
        }
        assert!(d.dx[d.dx.len() - 1][0].abs() < 1e-12);

        // finite difference in tau
        let h = 1e-6;
        let moved = retimed(&spec, &sol, vec![sol.tau.taus[0] + h * eps]).unwrap();
        for i in [c / 2, c, 3 * c / 2] {
            let fd = (moved.trajectory_normalized.states[i][0] - sol.trajectory_normalized.states[i][0]) / h;
            assert!((fd - d.dx[i][0]).abs() < 1e-6);
        }
    }

    #[test]
    fn omega_is_linear_in_second_argument() {
        let (spec, sol, cert) = linear();
        let cells = sol.control_physical.n_cells();
        let a = direction(&spec, &sol, (0..cells).map(|k| (k as f64).sin()).collect(), vec![0.2]);
        let b = direction(&spec, &sol, (0..cells).map(|k| (k as f64).cos()).collect(), vec![-0.4]);
        let ab = omega_bilinear(&spec, &sol, &cert, &a, &b);
        let ba = omega_bilinear(&spec, &sol, &cert, &b, &a);
        assert!((ab - ba).abs() < 1e-12);
        let w = direction(
            &spec,
            &sol,
            a.du.iter().zip(&b.du).map(|(x, y)| 2.0 * x + y).collect(),
            vec![2.0 * 0.2 - 0.4],
        );
        let lhs = omega_bilinear(&spec, &sol, &cert, &w, &b);
        let rhs = 2.0 * ab + evaluate_omega(&spec, &sol, &cert, &b);
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
