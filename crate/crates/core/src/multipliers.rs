//! Normalized Pontryagin certificate `(alpha = 1, gamma, nu, p)` of a solution
//! and, for a single crossing, the multipliers of the augmented system.
//!
//! Everything is computed on the physical image of the solution, whose grid
//! has nodes exactly at the crossing times.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode;
use crate::problem::{active_indices, ProblemSpec, DEFAULT_ACTIVE_DELTA};
use crate::solve::{arc_end_nodes, Solution};
use crate::simulate::CrossingDirection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateOptions {
    /// Backward RK4 steps per trajectory step.
    pub refine: usize,
    pub transversality_tol: f64,
    pub active_delta: f64,
    /// Smallest singular value below which an active Jacobian counts as
    /// rank deficient.
    pub rank_tol: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            refine: 1,
            transversality_tol: 1e-8,
            active_delta: DEFAULT_ACTIVE_DELTA,
            rank_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PontryaginCertificate {
    pub alpha: f64,
    pub gamma: Vec<f64>,
    /// `-lambda` from the solver's equality multipliers.
    pub gamma_nlp: Vec<f64>,
    pub directions: Vec<CrossingDirection>,
    pub taus: Vec<f64>,
    /// Physical grid nodes of the solution trajectory.
    pub times: Vec<f64>,
    pub crossing_nodes: Vec<usize>,
    /// `p(t_i^-)`; differs from `p_right` only at crossing nodes.
    pub p_left: Vec<Vec<f64>>,
    /// `p(t_i^+)`.
    pub p_right: Vec<Vec<f64>>,
    pub l: usize,
    pub m: usize,
    /// Row-major `cells x l`, on the physical cells.
    pub nu: Vec<f64>,
    /// Cell average of `grad_u H`, row-major `cells x m`.
    pub hu: Vec<f64>,
    pub active: Vec<Vec<usize>>,
    /// Cells whose active Jacobian is rank deficient.
    pub rank_deficient: Vec<usize>,
    /// Median of `H` on each arc.
    pub h_arc: Vec<f64>,
    pub h0: f64,
}

impl PontryaginCertificate {
    pub fn r(&self) -> usize {
        self.gamma.len()
    }

    pub fn nu_cell(&self, k: usize) -> &[f64] {
        &self.nu[k * self.l..(k + 1) * self.l]
    }

    /// Multiplies `(alpha, gamma, nu, p)` and everything linear in them by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let sc = |v: &[f64]| v.iter().map(|a| a * k).collect::<Vec<f64>>();
        let scv = |v: &[Vec<f64>]| v.iter().map(|a| sc(a)).collect::<Vec<_>>();
        Self {
            alpha: self.alpha * k,
            gamma: sc(&self.gamma),
            gamma_nlp: sc(&self.gamma_nlp),
            p_left: scv(&self.p_left),
            p_right: scv(&self.p_right),
            nu: sc(&self.nu),
            hu: sc(&self.hu),
            h_arc: sc(&self.h_arc),
            h0: self.h0 * k,
            ..self.clone()
        }
    }

    /// Arc containing the step that starts at node `i`.
    pub fn arc_of_step(&self, i: usize) -> usize {
        self.crossing_nodes.iter().filter(|&&c| c <= i).count()
    }

    pub fn p_initial(&self) -> &[f64] {
        &self.p_right[0]
    }

    pub fn p_terminal(&self) -> &[f64] {
        &self.p_left[self.p_left.len() - 1]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-f_x(x, u)^T p`.
fn costate_rhs(spec: &ProblemSpec, x: &[f64], u: &[f64], p: &[f64]) -> Vec<f64> {
    let v = ode::fx_transpose(spec, x, u) * DVector::from_column_slice(p);
    v.iter().map(|a| -a).collect()
}

/// State on step `i` at fraction `theta`, exact at the nodes.
fn state_on_step(spec: &ProblemSpec, sol: &Solution, i: usize, theta: f64) -> Vec<f64> {
    let tr = &sol.trajectory_physical;
    if theta == 0.0 {
        tr.states[i].clone()
    } else if theta == 1.0 {
        tr.states[i + 1].clone()
    } else {
        tr.interpolate(spec, i, theta)
    }
}

/// Costate and Hamiltonian at the midpoint of step `i`, by Hermite
/// interpolation of the one-sided node values.
pub fn step_midpoint(spec: &ProblemSpec, sol: &Solution, cert: &PontryaginCertificate, i: usize) -> (Vec<f64>, Vec<f64>) {
    let tr = &sol.trajectory_physical;
    let u = tr.control.cell(tr.cell_of_step(i));
    let h = tr.times[i + 1] - tr.times[i];
    let p0 = &cert.p_right[i];
    let p1 = &cert.p_left[i + 1];
    let d0 = costate_rhs(spec, &tr.states[i], u, p0);
    let d1 = costate_rhs(spec, &tr.states[i + 1], u, p1);
    let x = state_on_step(spec, sol, i, 0.5);
    (x, ode::hermite(p0, p1, &d0, &d1, h, 0.5))
}

/// `H` at the start, midpoint and end of step `i` (one-sided at crossings).
pub fn step_hamiltonians(spec: &ProblemSpec, sol: &Solution, cert: &PontryaginCertificate, i: usize) -> [f64; 3] {
    let tr = &sol.trajectory_physical;
    let u = tr.control.cell(tr.cell_of_step(i));
    let (xm, pm) = step_midpoint(spec, sol, cert, i);
    [
        spec.hamiltonian(&tr.states[i], &cert.p_right[i], u),
        spec.hamiltonian(&xm, &pm, u),
        spec.hamiltonian(&tr.states[i + 1], &cert.p_left[i + 1], u),
    ]
}

fn backward_step(spec: &ProblemSpec, sol: &Solution, i: usize, p_end: &[f64], refine: usize) -> Vec<f64> {
    let tr = &sol.trajectory_physical;
    let u = tr.control.cell(tr.cell_of_step(i));
    let h = tr.times[i + 1] - tr.times[i];
    let dt = h / refine as f64;
    let mut p = p_end.to_vec();
    let axpy = |a: &[f64], c: f64, b: &[f64]| a.iter().zip(b).map(|(x, y)| x + c * y).collect::<Vec<f64>>();
    for k in (0..refine).rev() {
        let th1 = (k + 1) as f64 / refine as f64;
        let thm = (k as f64 + 0.5) / refine as f64;
        let th0 = k as f64 / refine as f64;
        let x1 = state_on_step(spec, sol, i, th1);
        let xm = state_on_step(spec, sol, i, thm);
        let x0 = state_on_step(spec, sol, i, th0);
        let k1 = costate_rhs(spec, &x1, u, &p);
        let k2 = costate_rhs(spec, &xm, u, &axpy(&p, -0.5 * dt, &k1));
        let k3 = costate_rhs(spec, &xm, u, &axpy(&p, -0.5 * dt, &k2));
        let k4 = costate_rhs(spec, &x0, u, &axpy(&p, -dt, &k3));
        p = p
            .iter()
            .enumerate()
            .map(|(j, v)| v - dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect();
    }
    p
}

/// Costate with jumps and the jump coefficients; `gamma` overrides the
/// coefficients otherwise fixed by the Hamiltonian jump rule.
pub fn compute_costate(
    spec: &ProblemSpec,
    sol: &Solution,
    gamma: Option<&[f64]>,
    opts: &CertificateOptions,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let tr = &sol.trajectory_physical;
    let r = sol.r();
    let crossing_nodes = arc_end_nodes(&sol.control_normalized, r, sol.substeps)?;
    if let Some(g) = gamma {
        if g.len() != r {
            return Err(Error::DimensionMismatch(format!("{} jump coefficients for r = {r}", g.len())));
        }
    }
    let last = tr.n_steps();
    let mut p_left = vec![Vec::new(); last + 1];
    let mut p_right = vec![Vec::new(); last + 1];
    let mut gammas = vec![0.0; r];
    let mut cur: Vec<f64> = spec.grad_phi(tr.final_state()).iter().copied().collect();
    for i in (1..=last).rev() {
        p_right[i] = cur.clone();
        if let Some(j) = crossing_nodes.iter().position(|&c| c == i) {
            let x = &tr.states[i];
            let grad = spec.grad_g(x);
            let gj = match gamma {
                Some(g) => g[j],
                None => {
                    let u_after = tr.control.cell(tr.cell_of_step(i));
                    let u_before = tr.control.cell(tr.cell_of_step(i - 1));
                    let h_after = spec.hamiltonian(x, &cur, u_after);
                    let h_before = h_after + sol.directions[j].hamiltonian_drop();
                    let f_before = spec.dynamics(x, u_before);
                    let denom = dot(grad.as_slice(), &f_before);
                    if denom.abs() < opts.transversality_tol {
                        return Err(Error::GammaUndefined {
                            index: j,
                            margin: denom.abs(),
                        });
                    }
                    (dot(&cur, &f_before) - h_before) / denom
                }
            };
            gammas[j] = gj;
            cur = cur.iter().zip(grad.iter()).map(|(p, g)| p - gj * g).collect();
        }
        p_left[i] = cur.clone();
        cur = backward_step(spec, sol, i - 1, &cur, opts.refine);
    }
    p_left[0] = cur.clone();
    p_right[0] = cur;
    p_right[last] = p_left[last].clone();
    Ok((p_left, p_right, gammas))
}

/// Least-squares `nu` on the active set of each cell, from cell averages of
/// `grad_u H`. Returns `(nu, hu, active, rank_deficient)`.
#[allow(clippy::type_complexity)]
pub fn compute_nu(
    spec: &ProblemSpec,
    sol: &Solution,
    p_left: &[Vec<f64>],
    p_right: &[Vec<f64>],
    opts: &CertificateOptions,
) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<usize>>, Vec<usize>)> {
    let tr = &sol.trajectory_physical;
    let ctrl = &tr.control;
    let (m, l) = (spec.m, spec.l);
    let mut nu = vec![0.0; ctrl.n_cells() * l];
    let mut hu = vec![0.0; ctrl.n_cells() * m];
    let mut active = Vec::with_capacity(ctrl.n_cells());
    let mut deficient = Vec::new();
    for k in 0..ctrl.n_cells() {
        let u = ctrl.cell(k);
        // Simpson on every step of the cell
        let mut avg = DVector::zeros(m);
        let first = tr.node_of_cell(k);
        for i in first..first + tr.substeps {
            let h = tr.times[i + 1] - tr.times[i];
            let d0 = costate_rhs(spec, &tr.states[i], u, &p_right[i]);
            let d1 = costate_rhs(spec, &tr.states[i + 1], u, &p_left[i + 1]);
            let pm = ode::hermite(&p_right[i], &p_left[i + 1], &d0, &d1, h, 0.5);
            let xm = state_on_step(spec, sol, i, 0.5);
            let a = spec.hamiltonian_grad_u(&tr.states[i], &p_right[i], u);
            let b = spec.hamiltonian_grad_u(&xm, &pm, u);
            let c = spec.hamiltonian_grad_u(&tr.states[i + 1], &p_left[i + 1], u);
            avg += (a + b * 4.0 + c) * (h / 6.0);
        }
        avg /= ctrl.width(k);
        hu[k * m..(k + 1) * m].copy_from_slice(avg.as_slice());
        let idx = active_indices(&spec.constraints(u), opts.active_delta);
        if !idx.is_empty() {
            let jac = spec.constraint_jacobian(u);
            // columns are the active gradients
            let a = DMatrix::from_fn(m, idx.len(), |row, col| jac[(idx[col], row)]);
            let svd = a.clone().svd(true, true);
            let smin = if idx.len() > m {
                0.0
            } else {
                svd.singular_values.iter().fold(f64::INFINITY, |x, &y| x.min(y))
            };
            if smin < opts.rank_tol {
                deficient.push(k);
            }
            let sol_ls = svd
                .solve(&(-&avg), opts.rank_tol)
                .map_err(|e| Error::InvalidControl(format!("least squares for nu failed: {e}")))?;
            for (col, &i) in idx.iter().enumerate() {
                nu[k * l + i] = sol_ls[col];
            }
        }
        active.push(idx);
    }
    Ok((nu, hu, active, deficient))
}

/// Builds the certificate; `gamma` overrides the jump coefficients.
pub fn certificate_with(
    spec: &ProblemSpec,
    sol: &Solution,
    gamma: Option<&[f64]>,
    opts: &CertificateOptions,
) -> Result<PontryaginCertificate> {
    let (p_left, p_right, gamma) = compute_costate(spec, sol, gamma, opts)?;
    let (nu, hu, active, rank_deficient) = compute_nu(spec, sol, &p_left, &p_right, opts)?;
    let crossing_nodes = arc_end_nodes(&sol.control_normalized, sol.r(), sol.substeps)?;
    let mut cert = PontryaginCertificate {
        alpha: 1.0,
        gamma_nlp: sol.lambda.iter().map(|l| -l).collect(),
        gamma,
        directions: sol.directions.clone(),
        taus: sol.tau.taus.clone(),
        times: sol.trajectory_physical.times.clone(),
        crossing_nodes,
        p_left,
        p_right,
        l: spec.l,
        m: spec.m,
        nu,
        hu,
        active,
        rank_deficient,
        h_arc: Vec::new(),
        h0: 0.0,
    };
    let prof = hamiltonian_profile(spec, sol, &cert);
    cert.h_arc = prof.arc_median.clone();
    cert.h0 = prof.h0;
    Ok(cert)
}

pub fn compute_certificate(spec: &ProblemSpec, sol: &Solution) -> Result<PontryaginCertificate> {
    certificate_with(spec, sol, None, &CertificateOptions::default())
}

/// Hamiltonian values along the solution, grouped by arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianProfile {
    pub arc_median: Vec<f64>,
    /// `max |H - median|` on each arc.
    pub arc_deviation: Vec<f64>,
    /// `H(tau_j^-) - H(tau_j^+)` from the one-sided node values.
    pub jump: Vec<f64>,
    /// Median of `H + 1_{K^c}` over the whole horizon.
    pub h0: f64,
    pub h0_deviation: f64,
    /// `int_arc H dt` on each arc, Simpson per step.
    pub arc_integral: Vec<f64>,
    pub arc_length: Vec<f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn hamiltonian_profile(spec: &ProblemSpec, sol: &Solution, cert: &PontryaginCertificate) -> HamiltonianProfile {
    let tr = &sol.trajectory_physical;
    let arcs = cert.r() + 1;
    let mut samples = vec![Vec::new(); arcs];
    let mut integral = vec![0.0; arcs];
    let mut first_h = vec![f64::NAN; arcs];
    let mut last_h = vec![f64::NAN; arcs];
    for i in 0..tr.n_steps() {
        let a = cert.arc_of_step(i);
        let [h0, hm, h1] = step_hamiltonians(spec, sol, cert, i);
        if first_h[a].is_nan() {
            first_h[a] = h0;
        }
        last_h[a] = h1;
        samples[a].extend_from_slice(&[h0, hm, h1]);
        integral[a] += (tr.times[i + 1] - tr.times[i]) / 6.0 * (h0 + 4.0 * hm + h1);
    }
    let mut arc_median = Vec::with_capacity(arcs);
    let mut arc_deviation = Vec::with_capacity(arcs);
    for s in &samples {
        let med = median(&mut s.clone());
        arc_median.push(med);
        arc_deviation.push(s.iter().fold(0.0_f64, |acc, h| acc.max((h - med).abs())));
    }
    let jump = (0..cert.r()).map(|j| last_h[j] - first_h[j + 1]).collect();
    let shifted: Vec<f64> = samples
        .iter()
        .enumerate()
        .flat_map(|(a, s)| {
            let outside = if a % 2 == 1 { 1.0 } else { 0.0 };
            s.iter().map(move |h| h + cert.alpha * outside)
        })
        .collect();
    let h0 = median(&mut shifted.clone());
    let h0_deviation = shifted.iter().fold(0.0_f64, |acc, h| acc.max((h - h0).abs()));
    let node = |j: usize| -> f64 {
        if j == 0 {
            0.0
        } else if j > cert.r() {
            sol.horizon
        } else {
            cert.taus[j - 1]
        }
    };
    HamiltonianProfile {
        arc_median,
        arc_deviation,
        jump,
        h0,
        h0_deviation,
        arc_integral: integral,
        arc_length: (0..arcs).map(|a| node(a + 1) - node(a)).collect(),
    }
}

/// `int (rho_tau)_j H dt` for `j = 1..=r`: the mean of `H` on the arc before
/// `tau_j` minus its mean on the arc after.
pub fn rho_weighted_integral(profile: &HamiltonianProfile) -> Vec<f64> {
    let r = profile.arc_integral.len() - 1;
    (1..=r)
        .map(|j| {
            profile.arc_integral[j - 1] / profile.arc_length[j - 1] - profile.arc_integral[j] / profile.arc_length[j]
        })
        .collect()
}

/// Sup-norm distance between two certificates of the same solution over
/// `gamma`, `nu` and `p`.
pub fn certificate_distance(a: &PontryaginCertificate, b: &PontryaginCertificate) -> f64 {
    let sup = |x: &[f64], y: &[f64]| x.iter().zip(y).fold(0.0_f64, |acc, (u, v)| acc.max((u - v).abs()));
    let mut d = sup(&a.gamma, &b.gamma).max(sup(&a.nu, &b.nu));
    for (x, y) in a.p_left.iter().zip(&b.p_left).chain(a.p_right.iter().zip(&b.p_right)) {
        d = d.max(sup(x, y));
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// Passes when `value <= tol`.
    Upper,
    /// Passes when `value >= tol`.
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl CheckRow {
    pub fn new(name: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tol,
            bound: Bound::Upper,
            pass: value.is_finite() && value <= tol,
        }
    }

    pub fn at_least(name: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tol,
            bound: Bound::Lower,
            pass: !value.is_nan() && value >= tol,
        }
    }

    /// Amount by which the row misses its bound (negative when it passes).
    pub fn excess(&self) -> f64 {
        match self.bound {
            Bound::Upper => self.value - self.tol,
            Bound::Lower => self.tol - self.value,
        }
    }
}

/// Multipliers of the augmented single-crossing system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedCertificate {
    pub alpha: f64,
    pub beta1: Vec<f64>,
    pub beta2: f64,
    pub beta3: Vec<f64>,
    pub beta4: f64,
    /// Row-major `cells x l` on `[0, 1]`.
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub s: Vec<f64>,
    pub p1: Vec<Vec<f64>>,
    pub p2: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub rows: Vec<CheckRow>,
    pub consistent: bool,
}

impl AugmentedCertificate {
    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

pub const AUGMENTED_TOL: f64 = 1e-5;
pub const LAMBDA_END_TOL: f64 = 1e-6;

/// Transfers a single-crossing certificate to the augmented system and
/// checks its defining relations.
pub fn map_to_augmented(spec: &ProblemSpec, sol: &Solution, cert: &PontryaginCertificate) -> Result<AugmentedCertificate> {
    if cert.r() != 1 {
        return Err(Error::AugmentedNeedsSingleCrossing(cert.r()));
    }
    let tr = &sol.trajectory_physical;
    let c = cert.crossing_nodes[0];
    let last = tr.n_steps();
    if last != 2 * c {
        return Err(Error::InvalidControl("arcs must carry the same number of steps".into()));
    }
    let tau = cert.taus[0];
    let horizon = sol.horizon;
    let alpha = cert.alpha;
    let side = |i: usize, left: bool| -> Vec<f64> {
        if left {
            cert.p_left[i].clone()
        } else {
            cert.p_right[i].clone()
        }
    };
    let p1: Vec<Vec<f64>> = (0..=c).map(|i| side(i, i == c)).collect();
    let p2: Vec<Vec<f64>> = (0..=c).map(|i| side(c + i, i == c)).collect();
    let s: Vec<f64> = sol.trajectory_normalized.times[..=c].to_vec();
    let beta1: Vec<f64> = p1[0].iter().map(|v| -v).collect();
    let beta3: Vec<f64> = p2[0].iter().map(|v| -v).collect();
    let beta4 = -cert.gamma[0];

    let cells = tr.control.n_cells();
    let half = cells / 2;
    let l = cert.l;
    let mut mu1 = Vec::with_capacity(half * l);
    let mut mu2 = Vec::with_capacity(half * l);
    for k in 0..half {
        mu1.extend(cert.nu_cell(k).iter().map(|v| tau * v));
        mu2.extend(cert.nu_cell(k + half).iter().map(|v| (horizon - tau) * v));
    }

    // d lambda / ds = -H1 + H2, Simpson per step in s
    let mut lambda = Vec::with_capacity(c + 1);
    lambda.push(0.0);
    for i in 0..c {
        let ds = s[i + 1] - s[i];
        let h1 = step_hamiltonians(spec, sol, cert, i);
        let h2 = step_hamiltonians(spec, sol, cert, c + i);
        let rate: Vec<f64> = (0..3).map(|q| -h1[q] + h2[q]).collect();
        let prev = lambda[i];
        lambda.push(prev + ds / 6.0 * (rate[0] + 4.0 * rate[1] + rate[2]));
    }

    let sup = |v: &[f64]| v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let y1_end = &tr.states[c];
    let grad_g = spec.grad_g(y1_end);
    let row_p1: Vec<f64> = (0..spec.n).map(|i| p1[c][i] - (-beta3[i] + beta4 * grad_g[i])).collect();
    let grad_phi = spec.grad_phi(tr.final_state());
    let row_p2: Vec<f64> = (0..spec.n).map(|i| p2[c][i] - alpha * grad_phi[i]).collect();
    let row_b1: Vec<f64> = (0..spec.n).map(|i| p1[0][i] + beta1[i]).collect();

    // stationarity of the augmented Hamiltonian in v1 and v2
    let mut stat: f64 = 0.0;
    for k in 0..cells {
        let u = tr.control.cell(k);
        let idx = &cert.active[k];
        let jac = spec.constraint_jacobian(u);
        let (weight, mu) = if k < half {
            (tau, &mu1[k * l..(k + 1) * l])
        } else {
            (horizon - tau, &mu2[(k - half) * l..(k - half + 1) * l])
        };
        for row in 0..spec.m {
            let mut v = weight * cert.hu[k * spec.m + row];
            for &i in idx {
                v += jac[(i, row)] * mu[i];
            }
            stat = stat.max(v.abs());
        }
    }

    let rows = vec![
        CheckRow::new("transversality_p1", sup(&row_p1), AUGMENTED_TOL),
        CheckRow::new("transversality_p2", sup(&row_p2), AUGMENTED_TOL),
        CheckRow::new("initial_p1", sup(&row_b1), AUGMENTED_TOL),
        CheckRow::new("beta2", 0.0, AUGMENTED_TOL),
        CheckRow::new("lambda_start", lambda[0].abs(), AUGMENTED_TOL),
        CheckRow::new("lambda_end", (lambda[c] + alpha).abs(), LAMBDA_END_TOL),
        CheckRow::new("stationarity", stat, AUGMENTED_TOL),
    ];
    let consistent = rows.iter().all(|r| r.pass);
    Ok(AugmentedCertificate {
        alpha,
        beta1,
        beta2: 0.0,
        beta3,
        beta4,
        mu1,
        mu2,
        s,
        p1,
        p2,
        lambda,
        rows,
        consistent,
    })
}
