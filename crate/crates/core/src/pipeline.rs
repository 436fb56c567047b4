//! Orchestration behind the command-line front end: simulate, solve,
//! certify, verify and report, each writing its artifacts to one directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ProblemConfig;
use crate::error::Error;
use crate::io;
use crate::multipliers::{
    compute_certificate, hamiltonian_profile, map_to_augmented, AugmentedCertificate, CheckRow,
    PontryaginCertificate,
};
use crate::problem::{catalog, ProblemSpec};
use crate::signal::{ControlSignal, TimeDomain};
use crate::simulate::{crisis_cost, detect_crossings, integrate, CrossingDirection};
use crate::solve::{default_initial_control, solve_time_crisis, Solution, SolverOptions};
use crate::verify::{verify_solution, Tolerances, VerificationReport, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_ASSUMPTION: i32 = 4;

/// Default number of physical cells for constant controls.
pub const DEFAULT_CELLS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Catalog(String),
    Config(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlSource {
    Constant(Vec<f64>),
    Csv(PathBuf),
}

impl ControlSource {
    /// A comma-separated list of numbers is a constant; anything else a path.
    pub fn parse(text: &str) -> Self {
        match io::parse_constant(text) {
            Some(v) => ControlSource::Constant(v),
            None => ControlSource::Csv(PathBuf::from(text)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub control: Option<ControlSource>,
    pub cells: usize,
    pub solver: SolverOptions,
    pub tolerances: Tolerances,
    pub verify: VerifyOptions,
    pub out_dir: PathBuf,
    pub timestamp: bool,
}

impl RunConfig {
    pub fn new(problem: ProblemSource, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            problem,
            control: None,
            cells: DEFAULT_CELLS,
            solver: SolverOptions::default(),
            tolerances: Tolerances::default(),
            verify: VerifyOptions::default(),
            out_dir: out_dir.into(),
            timestamp: true,
        }
    }

    /// Takes `[solver]`, `[tolerances]` and `[verify]` from the problem's
    /// config file when it has them.
    pub fn apply_file_options(&mut self) -> std::result::Result<(), CommandError> {
        if let ProblemSource::Config(path) = &self.problem {
            let file = ProblemConfig::load(path)?;
            if let Some(s) = file.solver {
                self.solver = s;
            }
            if let Some(t) = file.tolerances {
                self.tolerances = t;
            }
            if let Some(v) = file.verify {
                self.verify = v;
            }
        }
        Ok(())
    }
}

/// Failure of a command, carrying the process exit code.
#[derive(Debug)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

impl CommandError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        let code = if e.is_assumption_violation() {
            EXIT_ASSUMPTION
        } else {
            match e {
                Error::Config(_) | Error::UnknownProblem(_) | Error::InvalidControl(_) => EXIT_USAGE,
                _ => EXIT_VERIFICATION,
            }
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

pub type CommandResult = std::result::Result<Outcome, CommandError>;

/// What a command printed and the exit code it asks for.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub files: Vec<PathBuf>,
}

/// Problem plus solver and verification settings after applying a config
/// file; command-line overrides are applied on top by the caller.
pub fn load_problem(cfg: &RunConfig) -> std::result::Result<ProblemSpec, CommandError> {
    match &cfg.problem {
        ProblemSource::Catalog(name) => Ok(catalog(name)?),
        ProblemSource::Config(path) => Ok(ProblemConfig::load(path)?.to_spec()?),
    }
}

fn timestamp(cfg: &RunConfig) -> Option<String> {
    cfg.timestamp.then(|| {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("unix:{secs}")
    })
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> std::result::Result<Self, CommandError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn text(&mut self, name: &str, body: &str) -> std::result::Result<(), CommandError> {
        let path = self.dir.join(name);
        std::fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::result::Result<(), CommandError> {
        self.text(name, &io::to_json(value)?)
    }
}

fn initial_control(cfg: &RunConfig, spec: &ProblemSpec, required: bool) -> std::result::Result<ControlSignal, CommandError> {
    match &cfg.control {
        Some(ControlSource::Constant(v)) => {
            if v.len() != spec.m {
                return Err(CommandError::usage(format!(
                    "constant control has {} components, problem has m = {}",
                    v.len(),
                    spec.m
                )));
            }
            Ok(ControlSignal::constant(TimeDomain::Physical, 0.0, spec.horizon, cfg.cells, v)?)
        }
        Some(ControlSource::Csv(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CommandError::usage(format!("cannot read control {}: {e}", path.display())))?;
            let u = io::control_from_csv(&text, spec.m)?;
            if u.start().abs() > 1e-12 || (u.end() - spec.horizon).abs() > 1e-12 * spec.horizon {
                return Err(CommandError::usage(format!(
                    "control covers [{}, {}], horizon is [0, {}]",
                    u.start(),
                    u.end(),
                    spec.horizon
                )));
            }
            Ok(u)
        }
        None if required => match &spec.initial_guess {
            Some(u) => Ok(u.clone()),
            None => Err(CommandError::usage(format!(
                "problem `{}` has no default control; pass --control",
                spec.name
            ))),
        },
        None => Ok(default_initial_control(spec, cfg.cells)?),
    }
}

/// Integrates the given control and reports its crisis cost.
pub fn cmd_simulate(cfg: &RunConfig) -> CommandResult {
    let spec = load_problem(cfg)?;
    let u = initial_control(cfg, &spec, true)?;
    let traj = integrate(&spec, &u, cfg.solver.substeps)?;
    let cs = detect_crossings(&spec, &traj)?;
    let cost = crisis_cost(&spec, &traj, &cs);
    let ts = timestamp(cfg);
    let mut w = Writer::new(&cfg.out_dir)?;
    w.text("trajectory.csv", &io::trajectory_csv(&spec, &traj, ts.as_deref()))?;
    w.json("crossings.json", &cs)?;
    Ok(Outcome {
        code: EXIT_OK,
        stdout: format!("crisis_cost {cost}\ncrossings {}\n", cs.r()),
        files: w.files,
    })
}

fn run_solve(cfg: &RunConfig, spec: &ProblemSpec, w: &mut Writer) -> std::result::Result<Solution, CommandError> {
    let u = initial_control(cfg, spec, false)?;
    let sol = solve_time_crisis(spec, &u, &cfg.solver)?;
    let ts = timestamp(cfg);
    w.json("solution.json", &sol)?;
    w.text("iterations.csv", &io::iterations_csv(&sol.iterations, ts.as_deref()))?;
    w.text("trajectory.csv", &io::trajectory_csv(spec, &sol.trajectory_physical, ts.as_deref()))?;
    Ok(sol)
}

fn solve_summary(sol: &Solution) -> String {
    format!(
        "objective {}\ncrossings {:?}\nmax_violation {:e}\nkkt_residual {:e}\nconverged {}\n",
        sol.objective, sol.tau.taus, sol.max_violation, sol.kkt_residual, sol.converged
    )
}

/// Solves from the given control, or the problem default.
pub fn cmd_solve(cfg: &RunConfig) -> CommandResult {
    let spec = load_problem(cfg)?;
    let mut w = Writer::new(&cfg.out_dir)?;
    let sol = run_solve(cfg, &spec, &mut w)?;
    Ok(Outcome {
        code: if sol.converged { EXIT_OK } else { EXIT_NONCONVERGENCE },
        stdout: solve_summary(&sol),
        files: w.files,
    })
}

/// Certificate summary written next to the full costate CSV.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub alpha: f64,
    pub taus: Vec<f64>,
    pub directions: Vec<CrossingDirection>,
    pub gamma: Vec<f64>,
    pub gamma_nlp: Vec<f64>,
    pub h_arc: Vec<f64>,
    pub h_arc_deviation: Vec<f64>,
    pub h_jump: Vec<f64>,
    pub h0: f64,
    pub nu_min: f64,
    pub nu_max: f64,
    pub p_initial: Vec<f64>,
    pub p_terminal: Vec<f64>,
    pub rank_deficient_cells: usize,
    pub residuals: Vec<CheckRow>,
    pub augmented: Option<Vec<CheckRow>>,
}

/// Everything `verify` produces.
#[derive(Debug, Clone)]
pub struct Verification {
    pub solution: Solution,
    pub certificate: PontryaginCertificate,
    pub report: VerificationReport,
    pub augmented: Option<AugmentedCertificate>,
    pub summary: CertificateSummary,
}

impl Verification {
    pub fn exit_code(&self) -> i32 {
        if self.report.assumption_violation {
            EXIT_ASSUMPTION
        } else if !self.solution.converged {
            EXIT_NONCONVERGENCE
        } else if !self.report.passed() {
            EXIT_VERIFICATION
        } else {
            EXIT_OK
        }
    }
}

fn load_or_solve(cfg: &RunConfig, spec: &ProblemSpec, w: &mut Writer) -> std::result::Result<Solution, CommandError> {
    let path = cfg.out_dir.join("solution.json");
    if path.exists() {
        let text = std::fs::read_to_string(&path)?;
        let sol: Solution = serde_json::from_str(&text).map_err(Error::from)?;
        if sol.problem == spec.name {
            return Ok(sol);
        }
    }
    run_solve(cfg, spec, w)
}

fn run_verify(cfg: &RunConfig, spec: &ProblemSpec, w: &mut Writer) -> std::result::Result<Verification, CommandError> {
    let sol = load_or_solve(cfg, spec, w)?;
    let cert = compute_certificate(spec, &sol)?;
    let report = verify_solution(spec, &sol, &cert, &cfg.tolerances, &cfg.verify)?;
    let augmented = if cert.r() == 1 {
        map_to_augmented(spec, &sol, &cert).ok()
    } else {
        None
    };
    let prof = hamiltonian_profile(spec, &sol, &cert);
    let nu_max = cert.nu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let summary = CertificateSummary {
        alpha: cert.alpha,
        taus: cert.taus.clone(),
        directions: cert.directions.clone(),
        gamma: cert.gamma.clone(),
        gamma_nlp: cert.gamma_nlp.clone(),
        h_arc: prof.arc_median.clone(),
        h_arc_deviation: prof.arc_deviation.clone(),
        h_jump: prof.jump.clone(),
        h0: prof.h0,
        nu_min: report.nu_min,
        nu_max: if cert.nu.is_empty() { 0.0 } else { nu_max },
        p_initial: cert.p_initial().to_vec(),
        p_terminal: cert.p_terminal().to_vec(),
        rank_deficient_cells: cert.rank_deficient.len(),
        residuals: report.entries.clone(),
        augmented: augmented.as_ref().map(|a| a.rows.clone()),
    };
    let ts = timestamp(cfg);
    w.json("certificate.json", &summary)?;
    w.text("costate.csv", &io::costate_csv(&sol, &cert, ts.as_deref()))?;
    w.json("verification.json", &report)?;
    Ok(Verification {
        solution: sol,
        certificate: cert,
        report,
        augmented,
        summary,
    })
}

fn verify_summary(v: &Verification) -> String {
    let mut s = String::new();
    for e in &v.report.entries {
        writeln!(s, "{} {} {:e}", if e.pass { "PASS" } else { "FAIL" }, e.name, e.value).unwrap();
    }
    if let Some(so) = &v.report.second_order {
        writeln!(s, "second_order {:?} {}", so.status, so.message).unwrap();
    }
    s
}

/// Certificate and verification of the solution in the output directory,
/// solving first when there is none.
pub fn cmd_verify(cfg: &RunConfig) -> CommandResult {
    let spec = load_problem(cfg)?;
    let mut w = Writer::new(&cfg.out_dir)?;
    let v = run_verify(cfg, &spec, &mut w)?;
    Ok(Outcome {
        code: v.exit_code(),
        stdout: verify_summary(&v),
        files: w.files,
    })
}

/// Human-readable summary with a pass/fail table.
pub fn render_report(spec: &ProblemSpec, v: &Verification, ts: Option<&str>) -> String {
    let sol = &v.solution;
    let c = &v.summary;
    let mut s = String::new();
    if let Some(ts) = ts {
        writeln!(s, "# generated={ts}").unwrap();
    }
    writeln!(s, "problem: {}", spec.name).unwrap();
    writeln!(s, "horizon: {}", spec.horizon).unwrap();
    writeln!(s, "crossings r = {}: {:?}", sol.r(), sol.tau.taus).unwrap();
    writeln!(s, "directions: {:?}", c.directions).unwrap();
    writeln!(s, "objective (crisis cost): {}", sol.objective).unwrap();
    writeln!(s, "reformulated objective: {}", sol.reformulated_objective).unwrap();
    writeln!(
        s,
        "solver: converged = {}, max violation = {:e}, kkt residual = {:e}, outer iterations = {}",
        sol.converged,
        sol.max_violation,
        sol.kkt_residual,
        sol.iterations.len()
    )
    .unwrap();
    for note in &sol.notes {
        writeln!(s, "note: {note}").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "certificate (alpha = {})", c.alpha).unwrap();
    for (j, g) in c.gamma.iter().enumerate() {
        writeln!(s, "  gamma_{} = {g}  (solver: {})", j + 1, c.gamma_nlp[j]).unwrap();
    }
    for (a, h) in c.h_arc.iter().enumerate() {
        writeln!(s, "  H on arc {a} = {h}").unwrap();
    }
    writeln!(s, "  H0 = {}", c.h0).unwrap();
    writeln!(s, "  nu range = [{}, {}]", c.nu_min, c.nu_max).unwrap();
    writeln!(s, "  p(0) = {:?}, p(T) = {:?}", c.p_initial, c.p_terminal).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "{:<24} {:>24} {:>12}  result", "check", "value", "bound").unwrap();
    let mut table = |e: &CheckRow| {
        let bound = match e.bound {
            crate::multipliers::Bound::Upper => format!("<= {:.0e}", e.tol),
            crate::multipliers::Bound::Lower => format!(">= {:.0e}", e.tol),
        };
        writeln!(
            s,
            "{:<24} {:>24.16e} {:>12}  {}",
            e.name,
            e.value,
            bound,
            if e.pass { "PASS" } else { "FAIL" }
        )
        .unwrap();
    };
    for e in &v.report.entries {
        table(e);
    }
    if let Some(aug) = &c.augmented {
        for e in aug {
            table(&CheckRow { name: format!("aug_{}", e.name), ..e.clone() });
        }
    }
    if let Some(so) = &v.report.second_order {
        writeln!(s, "{:<24} {:?}: {}", "second_order", so.status, so.message).unwrap();
    }
    for w in &v.report.warnings {
        writeln!(s, "warning: {w}").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(
        s,
        "overall: {}",
        match v.exit_code() {
            EXIT_OK => "PASS",
            EXIT_ASSUMPTION => "ASSUMPTION VIOLATED",
            EXIT_NONCONVERGENCE => "NOT CONVERGED",
            _ => "FAIL",
        }
    )
    .unwrap();
    s
}

/// Runs verification and merges everything into `report.txt`.
pub fn cmd_report(cfg: &RunConfig) -> CommandResult {
    let spec = load_problem(cfg)?;
    let mut w = Writer::new(&cfg.out_dir)?;
    let v = run_verify(cfg, &spec, &mut w)?;
    let ts = timestamp(cfg);
    let text = render_report(&spec, &v, ts.as_deref());
    w.text("report.txt", &text)?;
    Ok(Outcome {
        code: v.exit_code(),
        stdout: text,
        files: w.files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path) -> RunConfig {
        let mut c = RunConfig::new(ProblemSource::Catalog("linear_payoff_1d".into()), dir);
        c.timestamp = false;
        c
    }

    #[test]
    fn simulate_requires_a_control_without_default() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_simulate(&cfg(dir.path())).unwrap_err();
        assert_eq!(err.code, EXIT_USAGE);
    }

    #[test]
    fn simulate_constant_controls() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path());
        c.control = Some(ControlSource::parse("1.0"));
        let cost = |c: &RunConfig| -> f64 {
            let out = cmd_simulate(c).unwrap();
            out.stdout.lines().next().unwrap().split(' ').nth(1).unwrap().parse().unwrap()
        };
        assert!((cost(&c) + 1.0).abs() < 1e-8);
        c.control = Some(ControlSource::parse("-1.0"));
        assert!((cost(&c) - 6.0).abs() < 1e-8);
        assert!(dir.path().join("trajectory.csv").exists());
        assert!(dir.path().join("crossings.json").exists());
    }

    #[test]
    fn unknown_problem_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::new(ProblemSource::Catalog("nope".into()), dir.path());
        assert_eq!(cmd_solve(&c).unwrap_err().code, EXIT_USAGE);
    }
}
