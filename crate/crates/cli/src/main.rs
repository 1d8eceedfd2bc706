use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ganids_cli::{commands, CliError, RunConfig, Workspace};

#[derive(Parser)]
#[command(
    name = "ganids",
    about = "DoS flow pipeline: clean, rank features, train detectors, synthesize attacks, stream"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for artifacts; overrides the config file.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the flow CSV, clean it, and write train/test splits.
    Prepare {
        /// Input CSV; overrides the config file.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Rank features by Shapley importance and select the top k.
    Features,
    /// Train the four detectors on the selected features and score them.
    TrainIds,
    /// Train the tabular GAN on malicious training rows.
    TrainGan,
    /// Sample synthetic malicious rows from the trained GAN.
    Synth {
        /// Row count; overrides the config file.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Score the synthetic rows against every detector.
    Evade,
    /// Replay the test split through the broker and drain flagged rows.
    Stream,
    /// Render the dashboard report and plots from the stream summary.
    Report,
    /// Write a synthetic flow CSV for local runs without the real dataset.
    Fixture {
        /// Rows that survive cleaning.
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        /// Output path.
        #[arg(long, default_value = "flows.csv")]
        out: PathBuf,
        /// Skip the appended unparseable rows.
        #[arg(long)]
        clean: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workdir) = cli.workdir {
        cfg.workdir = workdir;
    }
    cfg.validate()?;
    let ws = Workspace::new(&cfg.workdir);

    match cli.command {
        Command::Prepare { input } => commands::cmd_prepare(&cfg, &ws, input.as_deref()),
        Command::Features => commands::cmd_features(&cfg, &ws),
        Command::TrainIds => commands::cmd_train_ids(&cfg, &ws),
        Command::TrainGan => commands::cmd_train_gan(&cfg, &ws),
        Command::Synth { n } => commands::cmd_synth(&cfg, &ws, n),
        Command::Evade => commands::cmd_evade(&cfg, &ws),
        Command::Stream => commands::cmd_stream(&cfg, &ws),
        Command::Report => commands::cmd_report(&cfg, &ws),
        Command::Fixture { rows, out, clean } => commands::cmd_fixture(&cfg, rows, &out, clean),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
