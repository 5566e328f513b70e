use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use ddr_core::config::{DqnVariant, RescueMode, RunConfig, TrainCadence};
use ddr_core::ddr::Actor;
use ddr_core::env::{read_log_lines, write_log_lines};
use ddr_core::error::{DdrError, Result};
use ddr_core::harness::dataset::{generate_dataset, load_dataset, save_dataset, DatasetSpec};
use ddr_core::harness::eval::{evaluate_policy, EvalSettings};
use ddr_core::harness::report::{
    default_workers, long_rows, read_long_csv, run_grid, summarize, write_grid_outputs, write_long_csv, CellKey,
    GridSpec,
};
use ddr_core::harness::stats::dead_end_stats;
use ddr_core::harness::trace::{n_trace, write_trace_csv, TraceRow};
use ddr_core::harness::train::train_run_observed;
use ddr_core::policy::checkpoint::Checkpoint;

#[derive(Parser)]
#[command(name = "ddr", version, about = "Dead-end detection and rescue for dialogue policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic table and goal list.
    GenData(GenDataArgs),
    /// Train one agent.
    Train(TrainArgs),
    /// Evaluate a checkpoint greedily.
    Eval(EvalArgs),
    /// Statistics over episode logs.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Trace the match count over one dialogue.
    TraceN(TraceArgs),
    /// Run an experiment grid, or summarize existing per-cell CSVs.
    Report(ReportArgs),
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "DDR_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    out: OutDir,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    slots: usize,
    #[arg(long, default_value_t = 3)]
    min_values: usize,
    #[arg(long, default_value_t = 6)]
    max_values: usize,
    #[arg(long, default_value_t = 120)]
    entries: usize,
    #[arg(long, default_value_t = 128)]
    goals: usize,
    /// Allow duplicate rows.
    #[arg(long)]
    allow_duplicates: bool,
}

/// Overrides for the run configuration.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_turns: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon_start: Option<f64>,
    #[arg(long)]
    epsilon_end: Option<f64>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    warm_start_epochs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dialogues_per_epoch: Option<usize>,
    #[arg(long)]
    max_recoveries: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    warning_penalty: Option<f64>,
    #[arg(long)]
    slot_error_rate: Option<f64>,
    #[arg(long, value_enum)]
    dqn_variant: Option<DqnVariant>,
    #[arg(long, value_enum)]
    rescue_mode: Option<RescueMode>,
    #[arg(long)]
    target_sync_epochs: Option<usize>,
    /// Train every this many new experiences instead of once per epoch.
    #[arg(long)]
    update_every: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c: RunConfig = match &self.config {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            max_turns, gamma, epsilon_start, epsilon_end, buffer_capacity, batch_size, learning_rate,
            hidden_dim, warm_start_epochs, epochs, dialogues_per_epoch, max_recoveries, slot_error_rate,
            dqn_variant, rescue_mode, target_sync_epochs, eval_every, eval_episodes, seed
        );
        if let Some(w) = self.warning_penalty {
            c.warning_penalty = Some(w);
        }
        if let Some(k) = self.update_every {
            c.cadence = TrainCadence::EveryExperiences(k);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Directory holding table.json and goals.json.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    out: OutDir,
    #[command(flatten)]
    config: ConfigArgs,
    /// Also write every training dialogue as JSON lines.
    #[arg(long)]
    log_episodes: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 30)]
    max_turns: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Dead-end ratio among failed dialogues; one log file per seed.
    DeadEnds {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    data: PathBuf,
    /// Policy checkpoint; the rule policy is traced when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Goal ids (indices into goals.json).
    #[arg(long, required = true, value_delimiter = ',')]
    goal: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 30)]
    max_turns: usize,
    /// Label written to the agent column.
    #[arg(long, default_value = "agent")]
    agent: String,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct ReportArgs {
    /// Summarize the per-cell CSVs already in this directory instead of
    /// running a grid.
    #[arg(long, conflicts_with = "data")]
    aggregate: Option<PathBuf>,
    #[arg(long, required_unless_present = "aggregate")]
    data: Option<PathBuf>,
    #[command(flatten)]
    out: OutDir,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "none,ig,se")]
    agents: Vec<RescueMode>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "vanilla,double,dueling")]
    variants: Vec<DqnVariant>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1")]
    noises: Vec<f64>,
    /// Number of seeds, 0..N.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Stats(StatsCommand::DeadEnds { logs }) => stats_dead_ends(&logs),
        Command::TraceN(a) => trace(a),
        Command::Report(a) => report(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<ExitCode> {
    let spec = DatasetSpec {
        slots: a.slots,
        min_values: a.min_values,
        max_values: a.max_values,
        entries: a.entries,
        goals: a.goals,
        distinct_rows: !a.allow_duplicates,
    };
    let (table, goals) = generate_dataset(&spec, a.seed)?;
    save_dataset(&a.out.out, &table, &goals)?;
    println!(
        "wrote {} entries x {} slots and {} goals to {}",
        table.len(),
        table.schema().len(),
        goals.len(),
        a.out.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn train(a: TrainArgs) -> Result<ExitCode> {
    let config = a.config.resolve()?;
    let (table, goals) = load_dataset(&a.data)?;
    std::fs::create_dir_all(&a.out.out)?;
    let mut logs = Vec::new();
    let run = train_run_observed(&config, Arc::new(table), &goals, |_, ep| {
        if a.log_episodes {
            logs.extend(ep.log.iter().cloned());
        }
    })?;
    let key = CellKey {
        agent: config.rescue_mode,
        variant: config.dqn_variant,
        noise: config.slot_error_rate,
        seed: config.seed,
    };
    let dir = &a.out.out;
    write_long_csv(&dir.join(format!("{}.csv", key.file_stem())), &long_rows(&key, &run))?;
    run.checkpoint.save(&dir.join(format!("{}.checkpoint.json", key.file_stem())))?;
    std::fs::write(dir.join(format!("{}.config.json", key.file_stem())), serde_json::to_string_pretty(&config)?)?;
    if a.log_episodes {
        let f = std::fs::File::create(dir.join(format!("{}.episodes.jsonl", key.file_stem())))?;
        write_log_lines(&logs, std::io::BufWriter::new(f))?;
    }
    println!(
        "{}: SR {:.3}  AE {:.2}  AT {:.2}  dead-end ratio {}",
        key.file_stem(),
        run.final_eval.success_rate,
        run.final_eval.average_reward,
        run.final_eval.average_turns,
        run.dead_end.ratio().map_or("n/a".to_string(), |r| format!("{r:.3}"))
    );
    if let Some(msg) = &run.aborted {
        eprintln!("training aborted: {msg}");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let (table, goals) = load_dataset(&a.data)?;
    let net = Checkpoint::load(&a.checkpoint)?.network()?;
    let settings = EvalSettings {
        episodes: a.episodes,
        slot_error_rate: a.noise,
        max_turns: a.max_turns,
        seed: a.seed,
    };
    let m = evaluate_policy(&net, Arc::new(table), &goals, &settings)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(ExitCode::SUCCESS)
}

fn read_logs(path: &Path) -> Result<Vec<ddr_core::env::LogRecord>> {
    let f = std::fs::File::open(path)?;
    read_log_lines(std::io::BufReader::new(f))
}

fn stats_dead_ends(paths: &[PathBuf]) -> Result<ExitCode> {
    let logs = paths.iter().map(|p| read_logs(p)).collect::<Result<Vec<_>>>()?;
    let s = dead_end_stats(&logs);
    println!("{}", serde_json::to_string_pretty(&s)?);
    Ok(ExitCode::SUCCESS)
}

fn trace(a: TraceArgs) -> Result<ExitCode> {
    let (table, goals) = load_dataset(&a.data)?;
    let table = Arc::new(table);
    let net = match &a.checkpoint {
        Some(p) => Some(Checkpoint::load(p)?.network()?),
        None => None,
    };
    let actor = match &net {
        Some(net) => Actor::Net { net, epsilon: 0.0 },
        None => Actor::Rule,
    };
    let mut rows = Vec::new();
    for &goal_id in &a.goal {
        for (turn, n) in n_trace(actor, goal_id, table.clone(), &goals, a.seed, a.noise, a.max_turns)? {
            rows.push(TraceRow {
                turn,
                n,
                agent: a.agent.clone(),
                goal_id,
            });
        }
    }
    std::fs::create_dir_all(&a.out.out)?;
    let path = a.out.out.join(format!("trace_{}.csv", a.agent));
    write_trace_csv(&path, &rows)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    if let Some(dir) = &a.aggregate {
        let mut rows = Vec::new();
        let mut paths = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?;
        paths.sort();
        for path in paths {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.ends_with(".csv") && !matches!(name, "results.csv" | "summary.csv") && !name.starts_with("trace_") {
                rows.extend(read_long_csv(&path)?);
            }
        }
        if rows.is_empty() {
            return Err(DdrError::Precondition(format!("no per-cell CSVs in {}", dir.display())));
        }
        let summary = summarize(&rows);
        std::fs::create_dir_all(&a.out.out)?;
        let mut w = csv::Writer::from_path(a.out.out.join("summary.csv"))?;
        for s in &summary {
            w.serialize(s)?;
        }
        w.flush()?;
        println!("summarized {} rows into {} groups", rows.len(), summary.len());
        return Ok(ExitCode::SUCCESS);
    }
    let data = a.data.as_ref().expect("clap enforces --data");
    let (table, goals) = load_dataset(data)?;
    let spec = GridSpec {
        base: a.config.resolve()?,
        agents: a.agents.clone(),
        variants: a.variants.clone(),
        noises: a.noises.clone(),
        seeds: (0..a.seeds).collect(),
    };
    let cells = run_grid(&spec, &table, &goals, a.workers.unwrap_or_else(default_workers));
    let failed = write_grid_outputs(&a.out.out, &cells)?;
    println!("{} cells, {} failed; outputs in {}", cells.len(), failed, a.out.out.display());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
