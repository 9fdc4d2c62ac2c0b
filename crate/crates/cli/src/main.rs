use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use portfolio_dual_cli::{
    paths_csv, simulate, solve, to_json_text, verify, write_artifacts, CliError, CliResult, Experiment,
    ExperimentConfig, Overrides,
};

#[derive(Parser)]
#[command(name = "portfolio-dual", version, about = "Constrained CRRA portfolio optimization via the dual HJBI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the Riccati system and tabulate the optimal policy.
    Solve(Common),
    /// Monte-Carlo estimate of expected utility under the optimal policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write every path's terminal wealth to paths.csv.
        #[arg(long)]
        dump_paths: bool,
    },
    /// Run the verification battery; exits 5 if a check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Corrupt the solution for sensitivity testing, e.g. `a-shift=0.01`.
        #[arg(long, value_parser = parse_fault)]
        fault_inject: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo path count.
    #[arg(long)]
    paths: Option<usize>,
    /// Monte-Carlo time steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, env = "PORTFOLIO_DUAL_THREADS")]
    threads: Option<usize>,
}

fn parse_fault(s: &str) -> Result<f64, String> {
    let v = s
        .strip_prefix("a-shift=")
        .ok_or_else(|| format!("unknown fault {s:?}; expected a-shift=X"))?;
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("a-shift needs a finite number, got {v:?}"))
}

impl Common {
    fn experiment(&self) -> CliResult<Experiment> {
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(CliError::Validation("--threads must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Other(e.to_string()))?;
        }
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            out: self.out.clone(),
            seed: self.seed,
            paths: self.paths,
            steps: self.steps,
        });
        Experiment::prepare(cfg)
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let started = Instant::now();
    match cli.command {
        Command::Solve(common) => {
            let exp = common.experiment()?;
            let out = solve(&exp)?;
            let files = [
                ("riccati.csv", out.riccati_csv),
                ("policy_grid.csv", out.policy_csv),
                ("summary.json", to_json_text(&out.summary)?),
            ];
            write_artifacts(&exp.config.outputs, &files)?;
            println!("value G(0, v0, z0) = {:.9}", out.value);
        }
        Command::Simulate { common, dump_paths } => {
            let exp = common.experiment()?;
            let sol = exp.solve()?;
            let out = simulate(&exp, &sol, dump_paths)?;
            let mut files = vec![("sim.json", to_json_text(&out.report)?)];
            if let Some(w) = &out.terminal_wealth {
                files.push(("paths.csv", paths_csv(w)?));
            }
            write_artifacts(&exp.config.outputs, &files)?;
            let r = &out.report;
            println!(
                "mean utility {:.6} +- {:.2e} (G = {:.6}, z = {})",
                r.result.mean_utility,
                r.result.std_error,
                r.value,
                r.z_score.map_or("n/a".into(), |z| format!("{z:.2}"))
            );
        }
        Command::Verify { common, fault_inject } => {
            let exp = common.experiment()?;
            let report = verify(&exp, fault_inject.unwrap_or(0.0))?;
            write_artifacts(&exp.config.outputs, &[("verify.json", to_json_text(&report)?)])?;
            for c in &report.checks {
                println!("{:<14} {}", c.name, c.detail);
            }
            if !report.pass {
                let names: Vec<&str> = report.failing().map(|c| c.name.as_str()).collect();
                return Err(CliError::VerifyFailed(names.join(", ")));
            }
        }
    }
    info!("finished in {:.2?}", started.elapsed());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
