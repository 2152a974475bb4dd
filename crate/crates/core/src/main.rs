use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sos_corridor::error::EXIT_NOT_CONVERGED;
use sos_corridor::pipeline::{certify, plan, write_artifacts};
use sos_corridor::plot::plot_dir;
use sos_corridor::scenario::{Overrides, Scenario};
use sos_corridor::Error;

#[derive(Parser)]
#[command(name = "sos-corridor", version, about = "Certified corridor planning for rigid robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose the map, route through it and optimize a trajectory.
    Plan {
        scenario: PathBuf,
        /// Directory for the JSON, CSV and SVG artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Minimum scaling of one region that contains the robot at a pose.
    Certify {
        scenario: PathBuf,
        /// Pose as comma-separated values: x,y,theta or x,y,z,yaw.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        config: Vec<f64>,
        /// Region index; defaults to the containing region with the smallest scaling.
        #[arg(long)]
        region: Option<usize>,
        /// Solve this many times and report the median time.
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Render an SVG from the artifacts of a previous plan.
    Plot {
        artifacts: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    ctol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    relaxation_order: Option<u32>,
    #[arg(long)]
    coverage_threshold: Option<f64>,
    #[arg(long)]
    overlap_threshold: Option<f64>,
}

impl OverrideArgs {
    fn load(&self, path: &PathBuf) -> Result<Scenario, Error> {
        let mut s = Scenario::load(path)?;
        let o = Overrides {
            horizon: self.horizon,
            ctol: self.ctol,
            seed: self.seed,
            threads: self.threads,
            relaxation_order: self.relaxation_order,
            coverage_threshold: self.coverage_threshold,
            overlap_threshold: self.overlap_threshold,
        };
        s.apply(&o).map_err(|e| Error::Parse { context: "command-line overrides".into(), message: e.to_string() })?;
        Ok(s)
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Plan { scenario, out, overrides } => {
            let s = overrides.load(&scenario)?;
            let result = plan(&s)?;
            write_artifacts(&out, &s, &result)?;
            plot_dir(&out, &out.join("plot.svg"))?;
            let t = &result.trajectory;
            eprintln!(
                "{:?}: {} regions, sequence {:?}, {} outer iterations, violation {:.2e}, {:.3} s",
                t.status,
                result.regions.len(),
                result.path.region_sequence,
                t.outer_iterations,
                t.violation,
                result.timings.total()
            );
            if result.succeeded() {
                Ok(0)
            } else {
                eprintln!("error: trajectory optimization did not reach the constraint tolerance");
                Ok(EXIT_NOT_CONVERGED)
            }
        }
        Command::Certify { scenario, config, region, repeat, overrides } => {
            let s = overrides.load(&scenario)?;
            let record = certify(&s, &config, region, repeat)?;
            println!("{}", serde_json::to_string_pretty(&record).expect("serializes"));
            Ok(0)
        }
        Command::Plot { artifacts, out } => {
            let out = out.unwrap_or_else(|| artifacts.join("plot.svg"));
            plot_dir(&artifacts, &out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
