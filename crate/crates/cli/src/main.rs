use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use timecrisis::pipeline::{
    cmd_report, cmd_simulate, cmd_solve, cmd_verify, CommandError, ControlSource, ProblemSource, RunConfig,
    DEFAULT_CELLS, EXIT_USAGE,
};

/// Time-crisis optimal control: simulate, solve, certify and verify.
#[derive(Parser)]
#[command(name = "timecrisis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a control and print its crisis cost.
    Simulate(Common),
    /// Solve with the crossing structure of the initial control.
    Solve(Common),
    /// Build the certificate and run every check on the solution in --out.
    Verify(Common),
    /// Verify and write a text summary with a pass/fail table.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Catalog problem name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    problem: Option<String>,
    /// TOML problem definition.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Constant value ("0.5" or "0.5,-1") or a CSV file of t_start,t_end,u_1..u_m rows.
    #[arg(long, allow_hyphen_values = true)]
    control: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Physical cells used for a constant control.
    #[arg(long, default_value_t = DEFAULT_CELLS)]
    cells: usize,
    #[arg(long)]
    n_arc: Option<usize>,
    #[arg(long)]
    substeps: Option<usize>,
    #[arg(long)]
    eq_tol: Option<f64>,
    #[arg(long)]
    kkt_tol: Option<f64>,
    #[arg(long)]
    pontry_samples: Option<usize>,
    #[arg(long)]
    omega_samples: Option<usize>,
    /// Leave the generation time out of CSV and text headers.
    #[arg(long)]
    no_timestamp: bool,
}

impl Common {
    fn run_config(self) -> Result<RunConfig, CommandError> {
        let problem = match (self.problem, self.config) {
            (Some(name), None) => ProblemSource::Catalog(name),
            (None, Some(path)) => ProblemSource::Config(path),
            _ => return Err(CommandError::usage("give exactly one of --problem and --config")),
        };
        let mut cfg = RunConfig::new(problem, self.out);
        cfg.apply_file_options()?;
        if self.cells == 0 {
            return Err(CommandError::usage("--cells must be positive"));
        }
        cfg.cells = self.cells;
        cfg.control = self.control.as_deref().map(ControlSource::parse);
        cfg.timestamp = !self.no_timestamp;
        cfg.verify.seed = self.seed;
        if let Some(v) = self.n_arc {
            cfg.solver.n_arc = v;
        }
        if let Some(v) = self.substeps {
            cfg.solver.substeps = v;
        }
        if let Some(v) = self.eq_tol {
            cfg.solver.eq_tol = v;
        }
        if let Some(v) = self.kkt_tol {
            cfg.solver.kkt_tol = v;
        }
        if let Some(v) = self.pontry_samples {
            cfg.verify.pontry_samples = v;
        }
        if let Some(v) = self.omega_samples {
            cfg.verify.omega_samples = v;
        }
        if cfg.solver.n_arc == 0 || cfg.solver.substeps == 0 {
            return Err(CommandError::usage("--n-arc and --substeps must be positive"));
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let (run, common): (fn(&RunConfig) -> _, Common) = match cli.command {
        Command::Simulate(c) => (cmd_simulate, c),
        Command::Solve(c) => (cmd_solve, c),
        Command::Verify(c) => (cmd_verify, c),
        Command::Report(c) => (cmd_report, c),
    };
    let result = common.run_config().and_then(|cfg| run(&cfg));
    match result {
        Ok(out) => {
            print!("{}", out.stdout);
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
