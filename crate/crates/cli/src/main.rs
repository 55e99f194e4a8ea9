use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ageoi_cli::config::{ExperimentConfig, ExperimentError};
use ageoi_cli::dummy_impact::run_dummy_impact;
use ageoi_cli::gen::{generate_synthetic_scenario, GenParams, ScenarioKind};
use ageoi_cli::ibu_exp::run_ibu_experiment;
use ageoi_cli::sweep::run_cop_sweep;

#[derive(Parser)]
#[command(
    name = "ageoi",
    version,
    about = "Privacy-preserving charging-station queries: mechanism sweeps, dummy-impact pairing, IBU recovery, and scenario tooling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep (epsilon, r, m) cells and aggregate the cost of privacy.
    CopSweep(SweepArgs),
    /// Compare m-location queries against identifiability-matched noise.
    DummyImpact(SweepArgs),
    /// Recover the query-location distribution with iterative Bayesian
    /// update.
    Ibu(SweepArgs),
    /// Write a synthetic scenario (graph, stations, trajectories, JSON).
    GenScenario(GenArgs),
    /// Load and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Privacy parameters per segment, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,1,2")]
    epsilons: Vec<f64>,
    /// Truncation radii in segments, comma separated (0 = identity channel).
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20")]
    radii: Vec<f64>,
    /// Locations per query, comma separated.
    #[arg(long = "m-list", value_delimiter = ',', default_value = "10")]
    m_list: Vec<usize>,
    /// Simulation repetitions per sweep cell.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Master seed; every cell derives its own stream from it.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Identifiability radius in segments (dummy-impact reporting).
    #[arg(long, default_value_t = 11.0)]
    alpha_segments: f64,
    /// IBU iterations.
    #[arg(long, default_value_t = 100)]
    iterations: usize,
}

impl SweepArgs {
    fn into_config(self) -> ExperimentConfig {
        ExperimentConfig {
            scenario: self.scenario,
            epsilons: self.epsilons,
            radii: self.radii,
            m_list: self.m_list,
            trials: self.trials,
            seed: self.seed,
            output_dir: self.out,
            alpha_segments: self.alpha_segments,
            iterations: self.iterations,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Grid,
    TwoCluster,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Grid side length (per cluster for two-cluster).
    #[arg(long, default_value_t = 10)]
    size: usize,
    #[arg(long, default_value_t = 5)]
    stations: usize,
    #[arg(long, default_value_t = 50)]
    evs: usize,
    #[arg(long, default_value_t = 30)]
    ticks: u32,
    #[arg(long)]
    seed: u64,
    /// Locations per query written into the scenario.
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Default privacy parameter per segment.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Default truncation radius in segments.
    #[arg(long, default_value_t = 10.0)]
    radius: f64,
    #[arg(long, default_value_t = 3)]
    queries_per_ev: usize,
    /// Meters per second for the dummy feasibility link.
    #[arg(long, default_value_t = 100_000.0)]
    max_speed: f64,
    #[arg(long, default_value = "scenario")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: Result<String, ExperimentError> = match cli.command {
        Command::CopSweep(args) => run_cop_sweep(&args.into_config()).map(|report| {
            format!(
                "wrote {} sweep cells to {}",
                report.cells.len(),
                report.output_dir.display()
            )
        }),
        Command::DummyImpact(args) => run_dummy_impact(&args.into_config()).map(|report| {
            format!(
                "wrote {} arms to {}",
                report.rows.len(),
                report.summary_file.display()
            )
        }),
        Command::Ibu(args) => run_ibu_experiment(&args.into_config()).map(|report| {
            format!(
                "wrote {} IBU cells to {}",
                report.cells.len(),
                report.summary_file.display()
            )
        }),
        Command::GenScenario(args) => {
            let params = GenParams {
                kind: match args.kind {
                    KindArg::Grid => ScenarioKind::Grid,
                    KindArg::TwoCluster => ScenarioKind::TwoCluster,
                },
                size: args.size,
                stations: args.stations,
                evs: args.evs,
                ticks: args.ticks,
                seed: args.seed,
                m: args.m,
                epsilon: args.epsilon,
                radius_segments: args.radius,
                queries_per_ev: args.queries_per_ev,
                max_speed: args.max_speed,
            };
            generate_synthetic_scenario(&params, &args.out)
                .map(|path| format!("wrote scenario to {}", path.display()))
        }
        Command::Validate { scenario } => ageoi::sim::load_scenario(&scenario)
            .map(|loaded| {
                format!(
                    "scenario ok: {} segments, {} stations, {} EVs",
                    loaded.net.node_count(),
                    loaded.stations.stations().len(),
                    loaded.trajectories.len()
                )
            })
            .map_err(ExperimentError::validation),
    };
    match outcome {
        Ok(message) => {
            println!("{message}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
