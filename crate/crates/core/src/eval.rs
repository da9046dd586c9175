//! Closed-loop evaluation: seeded trials per task and condition, each step
//! running select, annotate, prompt and act.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::dataset::{Dataset, DatasetError};
use crate::expert::expert_action;
use crate::geometry::{Shape, Vec2};
use crate::pipeline::{prompt_input, step_chain, PipelineError, StepChain};
use crate::policy::checkpoint;
use crate::policy::tokenizer::tokenize;
use crate::policy::train::Trainer;
use crate::policy::{Mode, Policy, PolicyError};
use crate::prompt::textualize;
use crate::seed::{derive, rng_for, STREAM_EVAL, STREAM_PARAPHRASE, STREAM_PERTURB, STREAM_SAMPLER};
use crate::select::Phase;
use crate::world::{Action, Camera, ColorTag, ObjectTemplate, Role, TaskSpec, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid request: {0}")]
    Invalid(String),
}

/// Visual condition a trial runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    None,
    Distractors,
    Recolor,
    Tint,
}

impl Perturbation {
    pub const VISUAL: [Perturbation; 3] = [Perturbation::Distractors, Perturbation::Recolor, Perturbation::Tint];

    pub fn name(self) -> &'static str {
        match self {
            Perturbation::None => "none",
            Perturbation::Distractors => "distractors",
            Perturbation::Recolor => "recolor",
            Perturbation::Tint => "tint",
        }
    }

    pub fn from_name(s: &str) -> Option<Perturbation> {
        [Perturbation::None, Perturbation::Distractors, Perturbation::Recolor, Perturbation::Tint]
            .into_iter()
            .find(|p| p.name() == s || (s == "lighting-tint" && *p == Perturbation::Tint))
    }
}

const DISTRACTOR_COLORS: [ColorTag; 5] = [ColorTag::Purple, ColorTag::Cyan, ColorTag::Yellow, ColorTag::White, ColorTag::Green];
const DISTRACTOR_RADIUS: f64 = 0.03;
const DISTRACTOR_GAP: f64 = 0.03;

/// How far a template can drift at reset, including what it sits on.
fn drift(task: &TaskSpec, t: &ObjectTemplate) -> f64 {
    let base = t.attached_to.and_then(|a| task.template(a)).map_or(0.0, |p| drift(task, p));
    base + t.jitter * std::f64::consts::SQRT_2
}

/// Copy of `task` that looks different but is solved the same way.
///
/// Distractors are purely visual objects kept clear of every task object
/// under any reset jitter. Recolor permutes the palette; tint scales each
/// channel. Ids, roles and goals are unchanged.
pub fn perturb_visual(task: &TaskSpec, kind: Perturbation, seed: u64) -> TaskSpec {
    let mut out = task.clone();
    let mut rng = rng_for(seed, &[STREAM_PERTURB, kind as u64]);
    match kind {
        Perturbation::None => {}
        Perturbation::Distractors => {
            let want = rng.gen_range(1..=3);
            let mut next_id = task.objects.iter().map(|o| o.id).max().unwrap_or(0) + 1;
            let start_r = task.gripper_jitter * std::f64::consts::SQRT_2 + DISTRACTOR_RADIUS + DISTRACTOR_GAP;
            for _ in 0..200 {
                if out.objects.len() - task.objects.len() == want {
                    break;
                }
                let c = Vec2::new(rng.gen_range(0.08..0.92), rng.gen_range(0.08..0.92));
                let shape = Shape::circle(c, DISTRACTOR_RADIUS);
                let clear = out.objects.iter().all(|t| shape.distance_to_shape(&t.shape) > drift(&out, t) + DISTRACTOR_GAP)
                    && c.dist(task.gripper_start) > start_r;
                if clear {
                    out.objects.push(ObjectTemplate {
                        id: next_id,
                        name: "distractor".into(),
                        shape,
                        color: *DISTRACTOR_COLORS.choose(&mut rng).expect("non-empty"),
                        role: Role::Distractor,
                        jitter: 0.0,
                        attached_to: None,
                    });
                    next_id += 1;
                }
            }
        }
        Perturbation::Recolor => out.appearance.palette.shuffle(&mut rng),
        Perturbation::Tint => {
            for t in &mut out.appearance.tint {
                *t = rng.gen_range(0.7..1.3);
            }
        }
    }
    out
}

/// What a controller sees at one step.
pub struct StepView<'a> {
    pub world: &'a WorldState,
    pub task: &'a TaskSpec,
    pub chain: &'a StepChain,
    pub trial_seed: u64,
    pub step: usize,
}

pub trait Controller {
    fn label(&self) -> String;
    /// Which chain components this controller conditions on.
    fn mode(&self) -> Mode {
        Mode::Full
    }
    /// Called before every trial.
    fn begin(&mut self) {}
    fn act(&mut self, view: &StepView) -> Result<Action, EvalError>;
}

/// The scripted expert, acting on the noise-free chain.
pub struct ExpertController {
    pub goal_tolerance: f64,
}

impl ExpertController {
    pub fn new(run: &RunConfig) -> Self {
        Self { goal_tolerance: run.expert.goal_tolerance }
    }
}

impl Controller for ExpertController {
    fn label(&self) -> String {
        "expert".into()
    }

    fn act(&mut self, v: &StepView) -> Result<Action, EvalError> {
        Ok(expert_action(v.world, v.chain, self.goal_tolerance).unwrap_or(Action::new(0.0, 0.0, 1.0)))
    }
}

/// Uniform random steps with a random open or close command.
pub struct RandomController;

impl Controller for RandomController {
    fn label(&self) -> String {
        "random".into()
    }

    fn act(&mut self, v: &StepView) -> Result<Action, EvalError> {
        let mut rng = rng_for(v.trial_seed, &[STREAM_SAMPLER, v.step as u64]);
        let m = v.world.config.max_step;
        Ok(Action::new(rng.gen_range(-m..=m), rng.gen_range(-m..=m), if rng.gen_bool(0.5) { 1.0 } else { 0.0 }))
    }
}

/// Trained policy. Samples a chunk, executes its first `execute` actions,
/// then samples again.
pub struct PolicyController<'a> {
    pub policy: &'a Policy,
    pub run: &'a RunConfig,
    pub execute: usize,
    queue: VecDeque<Action>,
}

impl<'a> PolicyController<'a> {
    pub fn new(policy: &'a Policy, run: &'a RunConfig) -> Self {
        Self { policy, run, execute: run.eval.execute.max(1), queue: VecDeque::new() }
    }
}

impl Controller for PolicyController<'_> {
    fn label(&self) -> String {
        format!("policy:{}", self.policy.cfg.mode.name())
    }

    fn mode(&self) -> Mode {
        self.policy.cfg.mode
    }

    fn begin(&mut self) {
        self.queue.clear();
    }

    fn act(&mut self, v: &StepView) -> Result<Action, EvalError> {
        if self.queue.is_empty() {
            let cfg = &self.policy.cfg;
            let selected = v.chain.chain.masked(cfg.mode.mask(v.chain.phase));
            let obs = v.world.render(Camera::Topdown);
            let seed = derive(v.trial_seed, &[STREAM_PARAPHRASE, v.step as u64]);
            let p = prompt_input(&obs, &v.world.proprioception(), &selected, cfg, &self.run.style, seed)?;
            let mut rng = rng_for(v.trial_seed, &[STREAM_SAMPLER, v.step as u64]);
            let chunk = self.policy.sample_actions(&p.input, &mut rng)?;
            self.queue.extend(chunk.actions.into_iter().take(self.execute));
        }
        Ok(self.queue.pop_front().expect("queue refilled above"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub condition: Perturbation,
    pub successes: usize,
    pub trials: usize,
    /// Trials that touched an obstacle.
    pub collisions: usize,
    pub mean_steps: f64,
    /// Mean symbols per step in the textual affordance of the selected chain.
    pub mean_tokens: f64,
    /// Mean selected components per step.
    pub mean_selected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub controller: String,
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub results: Vec<TaskResult>,
    pub successes: usize,
    pub trials: usize,
    pub success_rate: f64,
    /// `(successes, trials)` per condition.
    pub conditions: BTreeMap<String, (usize, usize)>,
    pub mean_tokens: f64,
    pub mean_selected: f64,
    /// Wall-clock seconds per controller step; kept out of the serialized
    /// report so reruns stay byte-identical.
    #[serde(skip)]
    pub seconds_per_step: f64,
}

impl EvalReport {
    pub fn rate(&self) -> f64 {
        self.success_rate
    }

    /// One JSON line per task and condition, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&serde_json::to_string(r).expect("result serializes"));
            out.push('\n');
        }
        let mut summary = serde_json::to_value(self).expect("report serializes");
        summary.as_object_mut().expect("object").remove("results");
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} ({}), seed {}", self.controller, self.mode.name(), self.seed).unwrap();
        writeln!(s, "{:<24} {:<12} {:>9} {:>8} {:>7} {:>8}", "task", "condition", "success", "rate", "steps", "tokens").unwrap();
        for r in &self.results {
            writeln!(
                s,
                "{:<24} {:<12} {:>9} {:>7.1}% {:>7.1} {:>8.1}",
                r.task,
                r.condition.name(),
                format!("{}/{}", r.successes, r.trials),
                100.0 * r.successes as f64 / r.trials.max(1) as f64,
                r.mean_steps,
                r.mean_tokens
            )
            .unwrap();
        }
        writeln!(
            s,
            "total {}/{} ({:.2}%), {:.1} tokens and {:.2} components per step",
            self.successes,
            self.trials,
            100.0 * self.success_rate,
            self.mean_tokens,
            self.mean_selected
        )
        .unwrap();
        s
    }
}

/// Seed of one trial.
pub fn trial_seed(seed: u64, task: usize, condition: Perturbation, trial: usize) -> u64 {
    derive(seed, &[STREAM_EVAL, task as u64, condition as u64, trial as u64])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub success: bool,
    pub collided: bool,
    pub steps: usize,
    pub tokens: usize,
    pub selected: usize,
    pub seconds: f64,
}

/// One closed-loop episode.
pub fn run_trial(ctrl: &mut dyn Controller, task: &TaskSpec, seed: u64, run: &RunConfig) -> Result<TrialOutcome, EvalError> {
    let mut world = WorldState::reset(task, seed, &run.world)?;
    let mode = ctrl.mode();
    ctrl.begin();
    let mut phase = Phase::Approach;
    let (mut tokens, mut selected, mut steps, mut seconds) = (0, 0, 0, 0.0);
    for t in 0..run.eval.max_steps {
        let s = step_chain(&world, task, phase, &run.annotate, &run.select, seed);
        phase = s.phase;
        if world.task_success(task) || !world.contact_history.is_empty() {
            break;
        }
        let chosen = s.chain.masked(mode.mask(phase));
        if !chosen.mask().is_empty() {
            let text = textualize(&chosen, 0).map_err(PipelineError::from)?.text;
            tokens += tokenize(&text, &run.policy)?.len();
        }
        selected += chosen.mask().count();
        let view = StepView { world: &world, task, chain: &s, trial_seed: seed, step: t };
        let clock = Instant::now();
        let action = ctrl.act(&view)?;
        seconds += clock.elapsed().as_secs_f64();
        world = world.step(action.clamped(run.world.max_step))?.0;
        steps += 1;
    }
    Ok(TrialOutcome {
        success: world.task_success(task),
        collided: !world.contact_history.is_empty(),
        steps,
        tokens,
        selected,
        seconds,
    })
}

/// `trials` seeded episodes for every task under every condition.
pub fn run_suite(
    ctrl: &mut dyn Controller,
    suite: &[TaskSpec],
    conditions: &[Perturbation],
    trials: usize,
    seed: u64,
    run: &RunConfig,
) -> Result<EvalReport, EvalError> {
    if suite.is_empty() || conditions.is_empty() || trials == 0 {
        return Err(EvalError::Invalid("need tasks, conditions and trials".into()));
    }
    let mut results = Vec::new();
    let (mut all_steps, mut all_tokens, mut all_selected, mut all_seconds) = (0usize, 0usize, 0usize, 0.0);
    for (ti, task) in suite.iter().enumerate() {
        for &cond in conditions {
            let (mut k, mut hits, mut steps, mut tokens, mut selected) = (0, 0, 0, 0, 0);
            for trial in 0..trials {
                let ts = trial_seed(seed, ti, cond, trial);
                let perturbed = perturb_visual(task, cond, ts);
                let o = run_trial(ctrl, &perturbed, ts, run)?;
                k += o.success as usize;
                hits += o.collided as usize;
                steps += o.steps;
                tokens += o.tokens;
                selected += o.selected;
                all_seconds += o.seconds;
            }
            all_steps += steps;
            all_tokens += tokens;
            all_selected += selected;
            let per = |x: usize| x as f64 / steps.max(1) as f64;
            results.push(TaskResult {
                task: task.name.clone(),
                condition: cond,
                successes: k,
                trials,
                collisions: hits,
                mean_steps: steps as f64 / trials as f64,
                mean_tokens: per(tokens),
                mean_selected: per(selected),
            });
        }
    }
    let successes = results.iter().map(|r| r.successes).sum();
    let total = results.iter().map(|r| r.trials).sum::<usize>();
    let mut by_cond: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &results {
        let e = by_cond.entry(r.condition.name().to_string()).or_default();
        e.0 += r.successes;
        e.1 += r.trials;
    }
    let per = |x: usize| x as f64 / all_steps.max(1) as f64;
    Ok(EvalReport {
        controller: ctrl.label(),
        mode: ctrl.mode(),
        seed,
        config_hash: run.hash(),
        results,
        successes,
        trials: total,
        success_rate: successes as f64 / total as f64,
        conditions: by_cond,
        mean_tokens: per(all_tokens),
        mean_selected: per(all_selected),
        seconds_per_step: all_seconds / all_steps.max(1) as f64,
    })
}

/// Loads a checkpoint, insisting it was trained under `run.policy`.
pub fn load_policy(path: &Path, run: &RunConfig) -> Result<Policy, EvalError> {
    let expected = checkpoint::config_hash(&run.policy);
    Ok(checkpoint::load(path, Some(&expected))?)
}

/// Trains a fresh policy on the dataset under `run.policy`.
pub fn train_policy(ds: &Dataset, run: &RunConfig, steps: u64, log: Option<&Path>) -> Result<Policy, EvalError> {
    let examples = ds.examples(run)?;
    let mut trainer = Trainer::new(Policy::new(run.policy.clone())?, steps);
    trainer.run(&examples, steps, log, run.train.log_every)?;
    Ok(trainer.into_policy())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: Mode,
    /// One report per evaluated suite, in request order.
    pub reports: Vec<(String, EvalReport)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub train_steps: u64,
    pub trials: usize,
    pub modes: Vec<ModeResult>,
}

impl AblationReport {
    pub fn get(&self, mode: Mode, suite: &str) -> Option<&EvalReport> {
        self.modes.iter().find(|m| m.mode == mode)?.reports.iter().find(|(s, _)| s == suite).map(|(_, r)| r)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let suites: Vec<&str> = self.modes.first().map_or(vec![], |m| m.reports.iter().map(|(n, _)| n.as_str()).collect());
        write!(s, "{:<24}", "mode").unwrap();
        for n in &suites {
            write!(s, " {:>16}", n).unwrap();
        }
        writeln!(s, " {:>8} {:>10} {:>10}", "tokens", "components", "ms/step").unwrap();
        for m in &self.modes {
            write!(s, "{:<24}", m.mode.name()).unwrap();
            for (_, r) in &m.reports {
                write!(s, " {:>7.1}% {:>7}", 100.0 * r.success_rate, format!("{}/{}", r.successes, r.trials)).unwrap();
            }
            let first = &m.reports[0].1;
            writeln!(
                s,
                " {:>8.1} {:>10.2} {:>10.2}",
                first.mean_tokens,
                first.mean_selected,
                1e3 * first.seconds_per_step
            )
            .unwrap();
        }
        s
    }
}

/// Trains one policy per mode on the same data with the same seed and step
/// count, then evaluates each on every suite. Checkpoints are written to
/// `checkpoint_dir` as `<mode>.ckpt` when given.
pub fn ablate(
    ds: &Dataset,
    run: &RunConfig,
    modes: &[Mode],
    suites: &[(String, Vec<TaskSpec>)],
    trials: usize,
    checkpoint_dir: Option<&Path>,
) -> Result<AblationReport, EvalError> {
    if modes.is_empty() {
        return Err(EvalError::Invalid("no modes to compare".into()));
    }
    let mut out = Vec::new();
    for &mode in modes {
        let mut cfg = run.clone();
        cfg.policy.mode = mode;
        let policy = train_policy(ds, &cfg, run.train.steps, None)?;
        if let Some(dir) = checkpoint_dir {
            std::fs::create_dir_all(dir)
                .map_err(|source| PolicyError::Io { path: dir.display().to_string(), source })?;
            checkpoint::save(&policy, &dir.join(format!("{}.ckpt", mode.name())))?;
        }
        let mut reports = Vec::new();
        for (name, suite) in suites {
            let mut ctrl = PolicyController::new(&policy, &cfg);
            reports.push((name.clone(), run_suite(&mut ctrl, suite, &[Perturbation::None], trials, run.seed, &cfg)?));
        }
        out.push(ModeResult { mode, reports });
    }
    Ok(AblationReport { seed: run.seed, train_steps: run.train.steps, trials, modes: out })
}
