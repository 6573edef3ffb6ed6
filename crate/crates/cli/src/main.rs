use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sinklimit::dynamics::{EstimateConfig, ReplicatorParams};
use sinklimit::{Error, Result};
use sinklimit_cli::{
    cmd_export_dot, cmd_hit, cmd_limit, cmd_random_game, cmd_sinks, diagnose, parse_br_mode,
    parse_mode, read_game, LimitOptions, PriorSpec,
};

/// Limit distributions of game dynamics over sink equilibria.
#[derive(Parser)]
#[command(name = "sinklimit", version)]
struct Cli {
    /// Utilities within this distance count as ties.
    #[arg(long, global = true, default_value_t = 0.0)]
    tie_tolerance: f64,
    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List sink equilibria.
    Sinks {
        game: PathBuf,
        /// Use the full response graph instead of the reduced one.
        #[arg(long)]
        full_graph: bool,
    },
    /// Limit hitting probabilities from every pure profile.
    Hit {
        game: PathBuf,
        /// Solve the perturbed chain at this epsilon instead of the limit.
        #[arg(long)]
        oracle_eps: Option<f64>,
    },
    /// Limit distribution for a prior: exact for pure priors, simulated otherwise.
    Limit(LimitArgs),
    /// Limit distribution by simulation, whatever the prior.
    Simulate(LimitArgs),
    /// Graphviz rendering of the response graph.
    ExportDot {
        game: PathBuf,
        /// Output of `hit`, used to draw pie nodes.
        #[arg(long)]
        hitting: Option<PathBuf>,
    },
    /// Random game in canonical JSON.
    RandomGame {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        players: usize,
        /// One count for all players, or a comma-separated count per player.
        #[arg(long, value_delimiter = ',', required = true)]
        strategies: Vec<usize>,
        /// `continuous` or `integer:<k>`.
        #[arg(long, default_value = "continuous")]
        mode: String,
    },
}

#[derive(Args)]
struct LimitArgs {
    game: PathBuf,
    /// `pure:<weights file>`, `uniform` or `dirichlet:<alpha>`.
    #[arg(long, default_value = "uniform")]
    prior: String,
    /// Root seed; required for simulation.
    #[arg(long)]
    seed: Option<u64>,
    /// Step length [default: 0.01].
    #[arg(long)]
    eta: Option<f64>,
    /// Noise standard deviation [default: 0.005].
    #[arg(long)]
    delta: Option<f64>,
    /// Stop once successive checkpoint averages are this close in total variation.
    #[arg(long, default_value_t = 0.01)]
    tv_tol: f64,
    /// Step budget per run [default: 100000].
    #[arg(long)]
    max_steps: Option<u64>,
    /// Independent runs from each sampled start.
    #[arg(long, default_value_t = 40)]
    runs_per_sample: usize,
    /// Samples between convergence checks [default: 100].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Sample budget [default: 20000].
    #[arg(long)]
    max_samples: Option<usize>,
    /// Steps the trajectory must stay within one sink to count as settled.
    #[arg(long)]
    window: Option<u64>,
    /// `support` or `global`.
    #[arg(long, default_value = "support")]
    br_mode: String,
    /// Run samples on one thread.
    #[arg(long)]
    serial: bool,
}

impl LimitArgs {
    fn options(&self, simulate: bool, tie_tolerance: f64) -> Result<LimitOptions> {
        let mut params = ReplicatorParams::default();
        if let Some(v) = self.eta {
            params.eta = v;
        }
        if let Some(v) = self.delta {
            params.delta = v;
        }
        if let Some(v) = self.max_steps {
            params.max_steps = v;
        }
        if let Some(v) = self.window {
            params.window = v;
        }
        params.best_response = parse_br_mode(&self.br_mode)?;
        let mut config = EstimateConfig {
            tv_tol: self.tv_tol,
            runs_per_sample: self.runs_per_sample,
            ..EstimateConfig::default()
        };
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.max_samples {
            config.max_samples = v;
        }
        if self.serial {
            config.execution = sinklimit::Execution::Serial;
        }
        Ok(LimitOptions {
            prior: PriorSpec::parse(&self.prior)?,
            simulate,
            seed: self.seed,
            params,
            config,
            tie_tolerance,
        })
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("SINKLIMIT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::invalid(
                "SINKLIMIT_THREADS",
                format!("`{value}` is not a positive integer"),
            )
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::invalid("SINKLIMIT_THREADS", e.to_string()))
}

fn read_text(path: &Path, field: &str) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::invalid(field, format!("cannot read {}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<String> {
    configure_threads()?;
    let tol = cli.tie_tolerance;
    match &cli.command {
        Command::Sinks { game, full_graph } => cmd_sinks(&read_game(game)?, tol, *full_graph),
        Command::Hit { game, oracle_eps } => cmd_hit(&read_game(game)?, tol, *oracle_eps),
        Command::Limit(args) => cmd_limit(&read_game(&args.game)?, &args.options(false, tol)?),
        Command::Simulate(args) => cmd_limit(&read_game(&args.game)?, &args.options(true, tol)?),
        Command::ExportDot { game, hitting } => {
            let game = read_game(game)?;
            let text = hitting
                .as_deref()
                .map(|p| read_text(p, "hitting"))
                .transpose()?;
            cmd_export_dot(&game, tol, text.as_deref())
        }
        Command::RandomGame {
            seed,
            players,
            strategies,
            mode,
        } => cmd_random_game(*seed, *players, strategies, parse_mode(mode)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|text| match &cli.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Error::invalid("out", format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (line, code) = diagnose(&err);
            eprintln!("{line}");
            ExitCode::from(code as u8)
        }
    }
}
