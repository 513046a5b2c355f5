use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ctraj_cli::pipeline::{self, Method, RunDir};
use ctraj_cli::{Config, PipelineError, Stage};

#[derive(Parser)]
#[command(name = "ctraj", version, about = "Cone-beam CT scan-trajectory optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Run directory; defaults to the config's `output_dir`, then `./run`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the phantom and project the candidate and circular trajectories.
    Simulate(Common),
    /// Per-projection scalar metrics and the alpha filter.
    Metrics(Common),
    /// Data-completeness matrices.
    Completeness(Common),
    /// Select k projections.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Selector to run; both when omitted.
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// ART reconstructions of the reference, circular and selected sets.
    Reconstruct(Common),
    /// Quality report.
    Evaluate(Common),
    /// Run several stages in order.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
}

fn methods(m: Option<Method>) -> Vec<Method> {
    m.map_or(vec![Method::Gru, Method::Greedy], |m| vec![m])
}

fn setup(common: &Common) -> Result<(Config, RunDir), PipelineError> {
    let mut cfg = Config::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    if let Some(n) = common.threads {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("run"));
    Ok((cfg, RunDir::new(out)))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let single = |common: &Common, stage: Stage, m: Option<Method>| {
        let (cfg, run) = setup(common)?;
        pipeline::run_pipeline(&cfg, &run, &[stage], &methods(m))
    };
    match cli.command {
        Command::Simulate(c) => single(&c, Stage::Simulate, None),
        Command::Metrics(c) => single(&c, Stage::Metrics, None),
        Command::Completeness(c) => single(&c, Stage::Completeness, None),
        Command::Optimize { common, method } => single(&common, Stage::Optimize, method),
        Command::Reconstruct(c) => single(&c, Stage::Reconstruct, None),
        Command::Evaluate(c) => {
            let (cfg, run) = setup(&c)?;
            pipeline::run_pipeline(&cfg, &run, &[Stage::Evaluate], &[])?;
            let csv = std::fs::read_to_string(run.report_csv()).unwrap_or_default();
            print!("{csv}");
            Ok(())
        }
        Command::Pipeline { common, stages, method } => {
            let (cfg, run) = setup(&common)?;
            let stages = stages.unwrap_or_else(|| Stage::ALL.to_vec());
            pipeline::run_pipeline(&cfg, &run, &stages, &methods(method))?;
            if stages.contains(&Stage::Evaluate) {
                print!("{}", std::fs::read_to_string(run.report_csv()).unwrap_or_default());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
