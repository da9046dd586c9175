use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use coa_core::config::{ConfigError, RunConfig};
use coa_core::dataset::{generate_dataset, load_episode, write_text, Dataset, DatasetError};
use coa_core::eval::{ablate, load_policy, run_suite, train_policy, EvalError, Perturbation, PolicyController};
use coa_core::expert::{replay, ExpertError};
use coa_core::policy::{checkpoint, Mode, PolicyError};
use coa_core::prompt::{render_visual, textualize, PromptError};
use coa_core::raster::{Raster, RasterError};
use coa_core::tasks::{resolve, TaskError};
use coa_core::world::TaskSpec;

#[derive(Parser)]
#[command(name = "coa", about = "Affordance-chain policies on a 2D tabletop", version)]
struct Cli {
    /// TOML run config; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations into <out>/data.
    GenData {
        /// Task names, suite names or task files, comma separated.
        #[arg(long, default_value = "pick_place")]
        tasks: String,
        #[arg(long)]
        per_task: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a policy; writes <out>/train/policy.ckpt and metrics.jsonl.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint; writes reports under <out>/eval.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "pick_place")]
        suite: String,
        /// Comma-separated conditions: none, distractors, recolor, tint.
        #[arg(long, default_value = "none")]
        perturb: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate one policy per mode; writes <out>/ablate.
    Ablate {
        /// Comma-separated modes: full, no_visual, no_textual,
        /// no_dynamic_selection, no_dynamic_no_movement.
        #[arg(long, default_value = "full,no_visual,no_textual,no_dynamic_selection")]
        modes: String,
    },
    /// Draw the affordance overlay of a stored step and print its text.
    RenderAffordance {
        /// Episode record file inside a dataset's episodes directory.
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        step: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        let policy = |e: &PolicyError| match e {
            PolicyError::CheckpointMismatch { .. } => "checkpoint_mismatch",
            PolicyError::Checkpoint { .. } => "checkpoint",
            PolicyError::Io { .. } => "io",
            _ => "policy",
        };
        match self {
            CliError::Config(ConfigError::Io { .. }) => "io",
            CliError::Config(_) => "config",
            CliError::Task(TaskError::Io { .. }) => "io",
            CliError::Task(_) => "task",
            CliError::Dataset(DatasetError::Io { .. }) | CliError::Raster(RasterError::Io { .. }) => "io",
            CliError::Dataset(DatasetError::Expert(_)) | CliError::Expert(_) => "expert_failure",
            CliError::Dataset(_) => "dataset",
            CliError::Eval(EvalError::Policy(e)) | CliError::Policy(e) => policy(e),
            CliError::Eval(EvalError::Dataset(DatasetError::Io { .. })) => "io",
            CliError::Eval(_) => "eval",
            CliError::Prompt(_) => "prompt",
            CliError::Raster(_) => "raster",
            CliError::Usage(_) => "usage",
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = std::env::var_os("COA_OUT") {
        cfg.out_dir = PathBuf::from(out);
    }
    Ok(cfg)
}

fn parse_modes(s: &str) -> Result<Vec<Mode>, CliError> {
    let modes = s
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| Mode::from_name(m).ok_or_else(|| CliError::Usage(format!("unknown mode {m:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if modes.is_empty() {
        return Err(CliError::Usage("no modes given".into()));
    }
    Ok(modes)
}

fn parse_perturb(s: &str) -> Result<Vec<Perturbation>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| Perturbation::from_name(m).ok_or_else(|| CliError::Usage(format!("unknown perturbation {m:?}"))))
        .collect()
}

fn print_line(kv: &[(&str, String)]) {
    let obj: serde_json::Map<String, serde_json::Value> =
        kv.iter().map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone()))).collect();
    println!("{}", serde_json::Value::Object(obj));
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Dataset(DatasetError::Io { path: path.display().to_string(), source })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    let out = cfg.out_dir.clone();
    match cli.command {
        Command::GenData { tasks, per_task, seed } => {
            let cfg = cfg.with_seed(seed.unwrap_or(cfg.seed));
            let specs = resolve(&tasks)?;
            let dir = out.join("data");
            let m = generate_dataset(&specs, per_task.unwrap_or(cfg.expert.demos_per_task), &cfg, &dir)?;
            print_line(&[
                ("dataset", dir.display().to_string()),
                ("episodes", m.get("episodes").unwrap_or("0").to_string()),
                ("steps", m.get("steps").unwrap_or("0").to_string()),
            ]);
        }
        Command::Train { data, steps, seed } => {
            let cfg = cfg.with_seed(seed.unwrap_or(cfg.seed));
            let ds = Dataset::load(&data.unwrap_or_else(|| out.join("data")))?;
            let dir = out.join("train");
            std::fs::create_dir_all(&dir).map_err(io(&dir))?;
            let log = dir.join("metrics.jsonl");
            if log.exists() {
                std::fs::remove_file(&log).map_err(io(&log))?;
            }
            let steps = steps.unwrap_or(cfg.train.steps);
            let policy = train_policy(&ds, &cfg, steps, Some(&log))?;
            let ckpt = dir.join("policy.ckpt");
            checkpoint::save(&policy, &ckpt)?;
            print_line(&[("checkpoint", ckpt.display().to_string()), ("steps", steps.to_string())]);
        }
        Command::Eval { checkpoint, suite, perturb, trials, seed } => {
            let cfg = cfg.with_seed(seed.unwrap_or(cfg.seed));
            let ckpt = checkpoint.unwrap_or_else(|| out.join("train").join("policy.ckpt"));
            let policy = load_policy(&ckpt, &cfg)?;
            let specs = resolve(&suite)?;
            let conditions = parse_perturb(&perturb)?;
            let mut ctrl = PolicyController::new(&policy, &cfg);
            let report = run_suite(&mut ctrl, &specs, &conditions, trials.unwrap_or(cfg.eval.trials), cfg.seed, &cfg)?;
            let dir = out.join("eval");
            write_text(&dir.join("report.jsonl"), &report.to_jsonl())?;
            write_text(&dir.join("report.txt"), &report.table())?;
            write_text(&dir.join("timing.json"), &format!("{{\"seconds_per_step\":{}}}\n", report.seconds_per_step))?;
            print!("{}", report.table());
        }
        Command::Ablate { modes } => {
            let modes = parse_modes(&modes)?;
            let a = &cfg.ablate;
            let data_dir = out.join("data");
            let ds = match Dataset::load(&data_dir) {
                Ok(ds) => ds,
                Err(DatasetError::Io { .. }) => {
                    generate_dataset(&resolve(&a.train_tasks)?, cfg.expert.demos_per_task, &cfg, &data_dir)?;
                    Dataset::load(&data_dir)?
                }
                Err(e) => return Err(e.into()),
            };
            let suites: Vec<(String, Vec<TaskSpec>)> =
                a.suites.iter().map(|s| Ok((s.clone(), resolve(s)?))).collect::<Result<_, CliError>>()?;
            let dir = out.join("ablate");
            let report = ablate(&ds, &cfg, &modes, &suites, a.trials, Some(&dir))?;
            let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
            json.push('\n');
            write_text(&dir.join("report.json"), &json)?;
            write_text(&dir.join("report.txt"), &report.table())?;
            print!("{}", report.table());
        }
        Command::RenderAffordance { episode, step, out: png } => {
            let root = episode
                .parent()
                .and_then(Path::parent)
                .ok_or_else(|| CliError::Usage(format!("{} is not inside a dataset", episode.display())))?;
            let ds_cfg: RunConfig = {
                let p = root.join("config.json");
                let text = std::fs::read_to_string(&p).map_err(io(&p))?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Dataset(DatasetError::Format { path: p.display().to_string(), message: e.to_string() })
                })?
            };
            let tasks: Vec<TaskSpec> = {
                let p = root.join("tasks.json");
                let text = std::fs::read_to_string(&p).map_err(io(&p))?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Dataset(DatasetError::Format { path: p.display().to_string(), message: e.to_string() })
                })?
            };
            let ep = load_episode(&episode)?;
            let rec = ep.steps.get(step).ok_or_else(|| {
                CliError::Usage(format!("episode has {} steps, no step {step}", ep.steps.len()))
            })?;
            let task = tasks
                .get(ep.header.task_index)
                .ok_or_else(|| CliError::Usage(format!("unknown task index {}", ep.header.task_index)))?;
            // Replaying the demo recovers the label chain at full precision.
            let demo = replay(task, ep.header.seed, ep.header.attempt, &ds_cfg)?;
            let s = &demo.steps[step];
            let chain = s.label.masked(s.mask);
            let obs = Raster::load_png(&root.join("episodes").join(&rec.image))?;
            render_visual(&obs, &chain, &ds_cfg.style)?.save_png(&png)?;
            let text = if chain.mask().is_empty() { String::new() } else { textualize(&chain, s.paraphrase_seed)?.text };
            println!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
