//! `fairpursuit`: train, evaluate, report on and plot pursuit-evasion runs.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fairpursuit::harness::{self, ExperimentConfig, Figure};
use fairpursuit::io::{self, Table};
use fairpursuit::plot;
use fairpursuit::train::{self, Strategy};
use fairpursuit::verify::{self, Budget};

const OUT_ENV: &str = "FAIRPURSUIT_OUT";
const DEFAULT_OUT: &str = "fairpursuit-out";

#[derive(Debug, Parser)]
#[command(
    name = "fairpursuit",
    version,
    about = "Fair multi-agent pursuit-evasion lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one pursuer team through the velocity curriculum.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint with noise-free episodes.
    Eval(EvalArgs),
    /// Print per-cell fairness and utility tables from a results file.
    Report(ReportArgs),
    /// Render one figure table of a results file as an SVG line chart.
    Plot(PlotArgs),
    /// Run the invariant suite; exits non-zero if any check fails.
    Verify(VerifyArgs),
    /// Run a full experiment matrix and write results, manifest and figure tables.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Individual,
    Mutual,
    FairE,
    FairEr,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    /// Experiment JSON; its `train` and `env` sections are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the single-CPU preset instead of the full-size defaults.
    #[arg(long, conflicts_with = "config")]
    desk: bool,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Regularizer weight; only valid with `--strategy fair-er`.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Curriculum speeds that get a checkpoint (defaults to the config's test velocities).
    #[arg(long, value_delimiter = ',')]
    velocities: Option<Vec<f64>>,
    /// Output directory (default: `$FAIRPURSUIT_OUT` or `fairpursuit-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint_dir: PathBuf,
    #[arg(long)]
    velocity: f64,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Experiment JSON supplying the environment settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    /// Also write one tidy CSV per figure into this directory.
    #[arg(long)]
    figures_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FigureArg {
    F2,
    F3b,
    F3c,
    F5,
}

#[derive(Debug, clap::Args)]
struct PlotArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, value_enum)]
    figure: FigureArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct VerifyArgs {
    /// Smaller sample sizes.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, clap::Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run the single-CPU matrix instead of the full-size defaults.
    #[arg(long, conflicts_with = "config")]
    desk: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<fairpursuit::Error> for Failure {
    fn from(e: fairpursuit::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn output_dir(flag: Option<PathBuf>, config: Option<&ExperimentConfig>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| config.map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn load_config(path: Option<&Path>, desk: bool) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => Ok(io::read_json(p)?),
        None if desk => Ok(ExperimentConfig::desk()),
        None => Ok(ExperimentConfig::default()),
    }
}

fn train_cmd(args: TrainArgs) -> CmdResult {
    if args.lambda.is_some() && args.strategy != Some(StrategyArg::FairEr) {
        return Err(Failure::Usage(
            "--lambda requires --strategy fair-er".into(),
        ));
    }
    let config = load_config(args.config.as_deref(), args.desk)?;
    let mut cfg = config.train.clone();
    if let Some(s) = args.strategy {
        cfg.strategy = match s {
            StrategyArg::Individual => Strategy::IndividualReward,
            StrategyArg::Mutual => Strategy::MutualReward,
            StrategyArg::FairE => Strategy::FairE,
            StrategyArg::FairEr => Strategy::FairEr {
                lambda: args.lambda.unwrap_or(cfg.strategy.lambda()),
            },
        };
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        cfg.episodes = episodes;
    }
    let velocities = args
        .velocities
        .unwrap_or_else(|| config.test_velocities.clone());
    let out = output_dir(args.out, Some(&config));
    let run_dir = out.join(format!("train_{}_s{}", cfg.strategy.label(), cfg.seed));

    let every = (cfg.episodes / 10).max(1);
    let artifacts = train::train_with_progress(&cfg, &config.env, &velocities, |row| {
        if (row.episode + 1) % every == 0 {
            eprintln!(
                "episode {:>6}  v_p {:.3}  sigma {:.3}  captured {}  steps {}",
                row.episode + 1,
                row.velocity,
                row.sigma,
                row.captured,
                row.steps
            );
        }
    })?;
    artifacts.save(&run_dir)?;
    io::write_json_atomic(&run_dir.join("train_config.json"), &cfg)?;
    println!("run directory: {}", run_dir.display());
    println!("episode log sha256: {}", artifacts.log_checksum());
    for c in &artifacts.checkpoints {
        println!(
            "checkpoint: {}",
            run_dir.join("checkpoints").join(c.dir_name()).display()
        );
    }
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> CmdResult {
    if args.episodes == 0 {
        return Err(Failure::Usage("--episodes must be positive".into()));
    }
    let config = load_config(args.config.as_deref(), false)?;
    let result = harness::evaluate_checkpoint_dir(
        &args.checkpoint_dir,
        &config.env,
        args.velocity,
        args.episodes,
        args.seed,
    )?;
    let text =
        serde_json::to_string_pretty(&result).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn report_cmd(args: ReportArgs) -> CmdResult {
    let rows = harness::read_results(&args.results)?;
    let summaries = harness::aggregate(&rows);
    print!("{}", harness::format_report(&summaries));
    if let Some(dir) = args.figures_dir {
        for path in harness::write_figure_tables(&dir, &summaries)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn plot_cmd(args: PlotArgs) -> CmdResult {
    let figure = match args.figure {
        FigureArg::F2 => Figure::F2,
        FigureArg::F3b => Figure::F3b,
        FigureArg::F3c => Figure::F3c,
        FigureArg::F5 => Figure::F5,
    };
    let rows = harness::read_results(&args.results)?;
    let table: Table = harness::figure_table(figure, &harness::aggregate(&rows));
    let panels = plot::panels_from_table(&table)?;
    let svg = plot::render_svg(figure.title(), "pursuer speed v_p", &panels)?;
    io::write_atomic(&args.out, svg.as_bytes())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn verify_cmd(args: VerifyArgs) -> CmdResult {
    let budget = if args.quick {
        Budget::quick()
    } else {
        Budget::full()
    };
    let outcomes = verify::run_suite(budget, args.seed);
    for c in &outcomes {
        println!(
            "{} {:<26} worst {:<12.3e} tolerance {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.worst,
            c.tolerance
        );
    }
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} check(s) failed")));
    }
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> CmdResult {
    let mut config = load_config(args.config.as_deref(), args.desk)?;
    config.output_dir = output_dir(args.out, args.config.as_ref().map(|_| &config));
    let total = config.cells().len();
    let mut done = 0;
    let outcome = harness::run_matrix_with_progress(&config, |record| {
        done += 1;
        let status = match &record.status {
            harness::CellStatus::Ok { .. } => "ok".to_string(),
            harness::CellStatus::Failed { error } => format!("failed: {error}"),
        };
        eprintln!("[{done}/{total}] {} {status}", record.id);
    })?;
    let summaries = harness::aggregate(&outcome.rows);
    print!("{}", harness::format_report(&summaries));
    harness::write_figure_tables(&config.output_dir, &summaries)?;
    let missing = harness::missing_cells(&config, &outcome.rows);
    if !missing.is_empty() {
        eprintln!("{} requested result rows are missing", missing.len());
    }
    let failed = outcome.failed_cells();
    if !failed.is_empty() {
        return Err(Failure::Runtime(format!("{} cell(s) failed", failed.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are successes; everything else is usage
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Plot(a) => plot_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!(
                "error: {msg}\n\nUsage: fairpursuit <COMMAND> [OPTIONS]; see `fairpursuit --help`"
            );
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use fairpursuit::harness::StrategyKind;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn strategy_kinds_cover_training_strategies() {
        for s in [
            StrategyArg::Individual,
            StrategyArg::Mutual,
            StrategyArg::FairE,
            StrategyArg::FairEr,
        ] {
            let name = s.to_possible_value().unwrap().get_name().to_string();
            assert!(StrategyKind::from_label(&name).is_ok(), "{name}");
        }
    }
}
