//! Command-line front end: scenario generation, single episodes, transcript
//! replay, and batch experiments.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lgr::agent::{run_episode, BudgetConfig, EpisodeConfig, EpisodeResult, FrontierChoice};
use lgr::eval::{render_comparison, run_batch, BatchConfig};
use lgr::grid::Cell;
use lgr::prompts::{write_transcript, TranscriptRecord};
use lgr::rankers::{HttpEndpoint, LlmRanker, OracleRanker, Ranker, ReplayRanker};
use lgr::ranking::WeightConfig;
use lgr::world::{generate_scenario, GenParams, Pose, Scenario, SensorConfig};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "lgr",
    version,
    about = "Frontier-ranking object-goal navigation in gridworlds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic apartment scenario file.
    Gen(GenArgs),
    /// Run a single episode on a scenario.
    Run(RunArgs),
    /// Re-run an episode, answering ranking queries from a transcript.
    Replay(ReplayArgs),
    /// Run a paired batch experiment from a config file.
    Batch(BatchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 48)]
    width: u32,
    #[arg(long, default_value_t = 48)]
    height: u32,
    #[arg(long, default_value_t = 6)]
    min_rooms: u32,
    #[arg(long, default_value_t = 10)]
    max_rooms: u32,
    #[arg(long, default_value_t = 1)]
    min_objects: u32,
    #[arg(long, default_value_t = 4)]
    max_objects: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankerKind {
    Oracle,
    Llm,
    Replay,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    /// Ranked selection by fused cumulative score.
    ArgmaxFused,
    /// Ranked selection, uniform within the rank-1 direction.
    ProtoRandom,
    /// Baseline: uniformly random frontier (no ranker).
    RandomFrontier,
    /// Baseline: nearest frontier (no ranker).
    NearestFrontier,
}

impl PolicyKind {
    fn choice(self) -> FrontierChoice {
        match self {
            Self::ArgmaxFused => FrontierChoice::ArgmaxFused,
            Self::ProtoRandom => FrontierChoice::ProtoRandom,
            Self::RandomFrontier => FrontierChoice::RandomUniform,
            Self::NearestFrontier => FrontierChoice::Nearest,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Target object class to search for.
    #[arg(long)]
    target: String,
    /// Start cell as "x,y".
    #[arg(long)]
    start: String,
    #[arg(long, default_value_t = 0)]
    heading: u8,
    #[arg(long, value_enum, default_value_t = RankerKind::Oracle)]
    ranker: RankerKind,
    /// Transcript to replay (required with --ranker replay).
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Write the episode's prompt/response exchanges as JSONL.
    #[arg(long)]
    transcript_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyKind::ArgmaxFused)]
    policy: PolicyKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    max_range: u32,
    /// Distance-weight decay length in cells (defaults to the sensor range).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 500)]
    max_steps: u32,
    #[arg(long, default_value_t = 10.0)]
    travel_multiplier: f64,
    /// Write the per-step decision log as JSONL.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long)]
    start: String,
    #[arg(long, default_value_t = 0)]
    heading: u8,
    #[arg(long, value_enum, default_value_t = PolicyKind::ArgmaxFused)]
    policy: PolicyKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    max_range: u32,
    #[arg(long)]
    log: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Gen(args) => {
            gen(args)?;
            Ok(0)
        }
        Command::Batch(args) => {
            batch(args)?;
            Ok(0)
        }
        Command::Run(args) => run(args),
        Command::Replay(args) => {
            let run_args = RunArgs {
                scenario: args.scenario,
                target: args.target,
                start: args.start,
                heading: args.heading,
                ranker: RankerKind::Replay,
                transcript: Some(args.transcript),
                transcript_out: None,
                policy: args.policy,
                seed: args.seed,
                max_range: args.max_range,
                tau: None,
                max_steps: 500,
                travel_multiplier: 10.0,
                log: args.log,
            };
            run(run_args)
        }
    }
}

fn gen(args: GenArgs) -> Result<()> {
    let params = GenParams {
        width: args.width,
        height: args.height,
        min_rooms: args.min_rooms,
        max_rooms: args.max_rooms,
        min_objects_per_room: args.min_objects,
        max_objects_per_room: args.max_objects,
        ..GenParams::default()
    };
    let scenario = generate_scenario(args.seed, &params)?;
    scenario.save(&args.out)?;
    println!(
        "wrote {} ({}x{}, {} objects)",
        args.out.display(),
        scenario.map.width(),
        scenario.map.height(),
        scenario.objects.len()
    );
    Ok(())
}

fn parse_start(text: &str) -> Result<Cell> {
    let (x, y) = text.split_once(',').context("start must be \"x,y\"")?;
    Ok(Cell::new(
        x.trim().parse().context("start x")?,
        y.trim().parse().context("start y")?,
    ))
}

fn run(args: RunArgs) -> Result<i32> {
    let scenario = Scenario::load(&args.scenario)
        .with_context(|| format!("loading {}", args.scenario.display()))?;
    let start = parse_start(&args.start)?;
    let config = EpisodeConfig {
        target_object: args.target.clone(),
        start: Pose::new(start, args.heading),
        choice: args.policy.choice(),
        budget: BudgetConfig {
            max_steps: args.max_steps,
            max_traveled_multiplier: args.travel_multiplier,
        },
        seed: args.seed,
        weights: WeightConfig {
            tau: args.tau.unwrap_or(args.max_range as f64),
        },
        sensor: SensorConfig {
            max_range: args.max_range,
            detection_dropout: 0.0,
        },
        max_rankable_frontiers: 8,
    };

    let result = if config.choice.needs_ranker() {
        let mut ranker: Box<dyn Ranker> = match args.ranker {
            RankerKind::Oracle => Box::new(OracleRanker::new(scenario.prior.clone())),
            RankerKind::Llm => {
                let endpoint = HttpEndpoint::from_env()?;
                let retries = endpoint.config().max_retries;
                Box::new(LlmRanker::with_retries(endpoint, retries))
            }
            RankerKind::Replay => {
                let path = args
                    .transcript
                    .as_ref()
                    .context("--ranker replay needs --transcript")?;
                Box::new(ReplayRanker::from_file(path)?)
            }
        };
        run_episode(&scenario, &config, Some(ranker.as_mut()))?
    } else {
        run_episode(&scenario, &config, None)?
    };

    if let Some(path) = &args.log {
        let mut out = String::new();
        for record in &result.decision_log {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        std::fs::write(path, out)?;
    }
    if let Some(path) = &args.transcript_out {
        let records: Vec<TranscriptRecord> = result
            .decision_log
            .iter()
            .flat_map(|r| r.transcript.iter().cloned())
            .collect();
        let file = std::fs::File::create(path)?;
        write_transcript(std::io::BufWriter::new(file), &records)?;
    }

    print_episode_summary(&result)?;
    if result.success {
        Ok(0)
    } else {
        eprintln!(
            "episode failed: {}",
            result.failure_reason.as_deref().unwrap_or("unknown")
        );
        Ok(2)
    }
}

fn print_episode_summary(result: &EpisodeResult) -> Result<()> {
    let summary = serde_json::json!({
        "success": result.success,
        "traveled": result.traveled,
        "optimal": result.optimal,
        "spl_term": result.spl_term(),
        "scans": result.num_scans,
        "bumps": result.num_bumps,
        "failure_reason": result.failure_reason,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn batch(args: BatchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: BatchConfig = serde_json::from_str(&text).context("parsing batch config")?;
    if let Some(out) = args.out {
        config.output_dir = Some(out);
    }
    if config.output_dir.is_none() {
        bail!("no output directory: pass --out or set output_dir in the config");
    }
    let report = run_batch(&config)?;
    print!("{}", render_comparison(&report));
    println!(
        "reports written to {}",
        config.output_dir.as_ref().unwrap().display()
    );
    Ok(())
}
