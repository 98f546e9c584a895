use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use isac_core::designer::Strategy;
use isac_core::harness::{self, SweepSpec, WORKERS_ENV};
use isac_core::scene::ScenarioConfig;

#[derive(Parser)]
#[command(name = "isac", version, about = "BCRB-driven ISAC array partitioning, beamforming and MAP estimation")]
#[command(after_help = "Worker threads: set ISAC_WORKERS (default: one per core). Results do not depend on it.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design one partition and beamformer, write design_<strategy>.json.
    Design {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "prop")]
        strategy: Strategy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Point-target parameter sweep with Monte Carlo estimation.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extended-target campaign; same spec format with an extended base target.
    Et {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Static feasibility checks and a FIM oracle smoke test.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> isac_core::Result<bool> {
    match cli.command {
        Command::Design { config, strategy, out } => {
            let (artifact, path) = harness::run_design(&config, strategy, &out)?;
            println!(
                "{strategy}: root BCRB {:.6} deg, a = {:?} -> {}",
                artifact.root_bcrb_deg,
                artifact.a.iter().map(|v| *v as u8).collect::<Vec<_>>(),
                path.display()
            );
            for v in &artifact.violations {
                eprintln!("constraint violated: {v}");
            }
            Ok(artifact.violations.is_empty())
        }
        Command::Sweep { spec, out } => report_rows(harness::run_sweep(&SweepSpec::load(&spec)?, &out)?),
        Command::Et { config, out } => report_rows(harness::run_et_campaign(&SweepSpec::load(&config)?, &out)?),
        Command::Validate { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            let report = harness::validate(&cfg);
            if let Some(r) = report.fim_oracle_rel_error {
                println!("FIM oracle relative error: {r:.3e}");
            }
            for v in &report.violations {
                println!("violation: {v}");
            }
            if report.ok() {
                println!("ok");
            }
            Ok(report.ok())
        }
    }
}

fn report_rows((rows, files): (Vec<harness::ResultRow>, Vec<PathBuf>)) -> isac_core::Result<bool> {
    for r in &rows {
        match &r.error {
            None => println!(
                "{:>5} {}={}: root BCRB {:.5} deg, RMSE {:.5} deg ({:.1} s)",
                r.strategy, r.param, r.value, r.root_bcrb_deg, r.rmse_deg, r.wall_time_s
            ),
            Some(e) => println!("{:>5} {}={}: FAILED {e}", r.strategy, r.param, r.value),
        }
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(rows.iter().all(|r| r.ok()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = harness::init_workers() {
        eprintln!("error: {e} ({WORKERS_ENV})");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
