//! Scripted demonstrator: follows planner paths through the phases and
//! records the chain at every step, with label noise on the stored copy.

use thiserror::Error;

use crate::annotate::{
    annotate_spatial_with, perceived_grasp, perceived_object, AffordanceChain,
    AffordanceMask, AnnotateError, Jitter,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ExpertConfig, RunConfig};
use crate::geometry::Vec2;
use crate::pipeline::{spatial_seed, step_chain, StepChain};
use crate::prompt::{textualize, PromptError};
use crate::seed::{derive, rng_for, STREAM_ACTION_NOISE, STREAM_EXPERT, STREAM_LABEL_NOISE, STREAM_PARAPHRASE};
use crate::select::{select_affordances, Phase};
use crate::world::{Action, TaskSpec, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("expert failed on {task} after {attempts} attempts: {reason}")]
    Failure { task: String, attempts: usize, reason: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}


/// One recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoStep {
    pub index: usize,
    /// Scene before the action.
    pub world: WorldState,
    pub phase: Phase,
    pub mask: AffordanceMask,
    /// Noise-free chain the expert acted on.
    pub exact: AffordanceChain,
    /// Stored training label: jittered boxes and points, tracked movement.
    pub label: AffordanceChain,
    /// Clean expert action: the training label.
    pub action: Action,
    /// What was sent to the world: the label, sometimes with noise added.
    pub executed: Action,
    pub paraphrase_seed: u64,
    /// Textual affordance of the selected label chain.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub task: TaskSpec,
    pub seed: u64,
    /// Reset seed of the successful attempt.
    pub reset_seed: u64,
    pub attempt: usize,
    pub steps: Vec<DemoStep>,
    pub final_world: WorldState,
    pub success: bool,
}

impl Demonstration {
    pub fn poses(&self) -> Vec<Vec2> {
        self.steps.iter().map(|s| s.world.gripper.pose).chain([self.final_world.gripper.pose]).collect()
    }
}

fn toward(world: &WorldState, s: &StepChain, goal: Vec2, aperture: f64) -> Action {
    let pose = world.gripper.pose;
    let next = s.chain.movement.as_ref().and_then(|m| m.path.get(1).copied()).unwrap_or(goal);
    let d = next - pose;
    let len = d.norm();
    let max = world.config.max_step;
    let d = if len > max { d * (max / len) } else { d };
    Action::new(d.x, d.y, aperture)
}

/// The expert's action for a step, or `None` when the phase has no goal.
/// Poses within `tolerance` of the goal count as arrived.
pub fn expert_action(world: &WorldState, s: &StepChain, tolerance: f64) -> Option<Action> {
    let pose = world.gripper.pose;
    let close = Action::new(0.0, 0.0, 0.0);
    let open = Action::new(0.0, 0.0, 1.0);
    match s.phase {
        Phase::Approach => {
            let g = s.goal?;
            Some(if pose.dist(g) <= tolerance { close } else { toward(world, s, g, 1.0) })
        }
        Phase::Grasp => Some(close),
        Phase::Transport | Phase::Place => {
            if world.gripper.aperture > 0.0 {
                return Some(open);
            }
            let g = s.goal?;
            Some(if pose.dist(g) <= tolerance { open } else { toward(world, s, g, 0.0) })
        }
        Phase::Done => Some(open),
    }
}

struct Record {
    world: WorldState,
    chain: StepChain,
    action: Action,
    executed: Action,
}

struct Rollout {
    records: Vec<Record>,
    final_world: WorldState,
    phase: Phase,
}

/// Adds noise to movement steps; grasp and release steps stay exact.
fn perturb(action: Action, world: &WorldState, ex: &ExpertConfig, mut rng: ChaCha8Rng) -> Action {
    let max = world.config.max_step;
    if (action.dx == 0.0 && action.dy == 0.0) || ex.noise_scale <= 0.0 || !rng.gen_bool(ex.noise_prob.clamp(0.0, 1.0)) {
        return action;
    }
    let n = Normal::new(0.0, ex.noise_scale * max).expect("finite noise scale");
    let d = Vec2::new(action.dx + n.sample(&mut rng), action.dy + n.sample(&mut rng));
    let len = d.norm();
    let d = if len > max { d * (max / len) } else { d };
    Action::new(d.x, d.y, action.aperture)
}

fn rollout(task: &TaskSpec, reset_seed: u64, cfg: &RunConfig) -> Result<Rollout, String> {
    let mut world = WorldState::reset(task, reset_seed, &cfg.world).map_err(|e| e.to_string())?;
    let mut phase = Phase::Approach;
    let mut records = Vec::new();
    let ex = &cfg.expert;
    for _ in 0..ex.max_steps {
        let s = step_chain(&world, task, phase, &cfg.annotate, &cfg.select, reset_seed);
        phase = s.phase;
        if phase == Phase::Done {
            break;
        }
        if let Some(e) = &s.issue {
            return Err(format!("annotation failed in {}: {e}", phase.name()));
        }
        let action = expert_action(&world, &s, ex.goal_tolerance).ok_or_else(|| format!("no goal in {}", phase.name()))?;
        let executed = perturb(action, &world, ex, rng_for(reset_seed, &[STREAM_ACTION_NOISE, records.len() as u64]));
        let (next, report) = world.step(executed).map_err(|e| e.to_string())?;
        if !report.contacts.is_empty() {
            return Err(format!("contact with {:?}", report.contacts));
        }
        records.push(Record { world, chain: s, action, executed });
        world = next;
    }
    if phase != Phase::Done {
        let s = step_chain(&world, task, phase, &cfg.annotate, &cfg.select, reset_seed);
        phase = s.phase;
    }
    Ok(Rollout { records, final_world: world, phase })
}

fn label_steps(task: &TaskSpec, reset_seed: u64, run: Rollout, cfg: &RunConfig) -> Result<Vec<DemoStep>, ExpertError> {
    let sigma = cfg.annotate.noise_sigma;
    let mut steps = Vec::with_capacity(run.records.len());
    for (t, Record { world, chain: s, action, executed }) in run.records.into_iter().enumerate() {
        let mut jitter = Jitter::new(rng_for(reset_seed, &[STREAM_LABEL_NOISE, t as u64]), sigma);
        let object = perceived_object(&world, task, &cfg.annotate, &mut jitter)?;
        let grasp = perceived_grasp(&world, task.target, &cfg.annotate, &mut jitter)?;
        let spatial = annotate_spatial_with(
            &world,
            task.receptacle,
            Some(task.target),
            cfg.annotate.spatial_points,
            &cfg.annotate,
            spatial_seed(reset_seed),
            Some(&mut jitter),
        )?;
        let label = AffordanceChain { object: Some(object), grasp: Some(grasp), spatial: Some(spatial), movement: s.chain.movement.clone() };
        let mask = select_affordances(s.phase);
        let paraphrase_seed = derive(reset_seed, &[STREAM_PARAPHRASE, t as u64]);
        let text = textualize(&label.masked(mask), paraphrase_seed)?.text;
        steps.push(DemoStep {
            index: t,
            world,
            phase: s.phase,
            mask,
            exact: s.chain,
            label,
            action,
            executed,
            paraphrase_seed,
            text,
        });
    }
    Ok(steps)
}

/// Runs and labels the episode for one reset seed, successful or not.
pub fn replay(task: &TaskSpec, seed: u64, attempt: usize, cfg: &RunConfig) -> Result<Demonstration, ExpertError> {
    let reset_seed = derive(seed, &[STREAM_EXPERT, attempt as u64]);
    let run = rollout(task, reset_seed, cfg).map_err(|reason| ExpertError::Failure {
        task: task.name.clone(),
        attempts: 1,
        reason,
    })?;
    let success = run.phase == Phase::Done && run.final_world.task_success(task);
    let final_world = run.final_world.clone();
    let steps = label_steps(task, reset_seed, run, cfg)?;
    Ok(Demonstration { task: task.clone(), seed, reset_seed, attempt, steps, final_world, success })
}

/// A successful labelled demonstration. Failed attempts are discarded and
/// retried on a fresh reset.
pub fn demonstrate(task: &TaskSpec, seed: u64, cfg: &RunConfig) -> Result<Demonstration, ExpertError> {
    task.validate()?;
    let mut last = String::from("no attempts");
    for attempt in 0..cfg.expert.retries.max(1) {
        match replay(task, seed, attempt, cfg) {
            Ok(d) if d.success => return Ok(d),
            Ok(_) => last = "episode ended without success".into(),
            Err(ExpertError::Failure { reason, .. }) => last = reason,
            Err(e) => return Err(e),
        }
    }
    Err(ExpertError::Failure { task: task.name.clone(), attempts: cfg.expert.retries.max(1), reason: last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;
    use crate::tasks::builtin;
    use crate::world::{first_contact, ColorTag, ObjectTemplate, Role};

    #[test]
    fn obstacle_free_demo_succeeds_without_contact() {
        let cfg = RunConfig::default();
        let task = builtin("place_plate").unwrap();
        let d = demonstrate(&task, 3, &cfg).unwrap();
        assert!(d.success && d.final_world.contact_history.is_empty());
        let phases: Vec<Phase> = d.steps.iter().map(|s| s.phase).collect();
        assert!(phases.windows(2).all(|w| w[0] <= w[1]));
        for s in &d.steps {
            if s.world.gripper.held.is_some() {
                assert!(!s.mask.object && !s.mask.grasp);
            }
            assert!(s.action.is_within(cfg.world.max_step) && s.executed.is_within(cfg.world.max_step));
        }
        // Replaying the logged actions reaches the same successful state.
        let mut w = d.steps[0].world.clone();
        for s in &d.steps {
            w = w.step(s.executed).unwrap().0;
        }
        assert!(w.task_success(&task));
        assert_eq!(w, d.final_world);
    }

    #[test]
    fn obstacle_demo_detours_and_sweep_oracle_finds_no_contact() {
        let cfg = RunConfig::default();
        let task = builtin("cleanup_vase").unwrap();
        let d = demonstrate(&task, 5, &cfg).unwrap();
        let poses = d.poses();
        let vase = d.final_world.object(3).unwrap().shape.clone();
        let r = cfg.world.gripper_radius;
        for w in poses.windows(2) {
            for k in 0..=1000 {
                let p = w[0].lerp(w[1], k as f64 / 1000.0);
                assert!(vase.distance_to_point(p) > r);
            }
            assert!(first_contact(&vase, w[0], w[1], r, 1e-4).is_none());
        }
        // The straight line from start to finish would cut through the vase.
        let straight = poses.windows(2).map(|w| w[0].dist(w[1])).sum::<f64>();
        assert!(straight > poses[0].dist(*poses.last().unwrap()));
    }

    #[test]
    fn walled_off_target_fails() {
        let mut cfg = RunConfig::default();
        cfg.expert.retries = 2;
        let mut task = builtin("place_plate").unwrap();
        for t in &mut task.objects {
            t.jitter = 0.0;
        }
        let c = Vec2::new(0.28, 0.38);
        let walls = [
            Shape::rect(c + Vec2::new(-0.12, -0.12), c + Vec2::new(0.12, -0.09)),
            Shape::rect(c + Vec2::new(-0.12, 0.09), c + Vec2::new(0.12, 0.12)),
            Shape::rect(c + Vec2::new(-0.12, -0.09), c + Vec2::new(-0.09, 0.09)),
            Shape::rect(c + Vec2::new(0.09, -0.09), c + Vec2::new(0.12, 0.09)),
        ];
        for (i, shape) in walls.into_iter().enumerate() {
            task.objects.push(ObjectTemplate {
                id: 10 + i as u32,
                name: "wall".into(),
                shape,
                color: ColorTag::Gray,
                role: Role::Obstacle,
                jitter: 0.0,
                attached_to: None,
            });
        }
        assert!(matches!(demonstrate(&task, 0, &cfg), Err(ExpertError::Failure { .. })));
    }

    #[test]
    fn demonstrations_are_deterministic() {
        let cfg = RunConfig::default();
        let task = builtin("wipe_path").unwrap();
        assert_eq!(demonstrate(&task, 9, &cfg).unwrap(), demonstrate(&task, 9, &cfg).unwrap());
    }

    #[test]
    fn every_family_is_solvable() {
        let cfg = RunConfig::default();
        for name in crate::tasks::builtin_names() {
            let task = builtin(name).unwrap();
            for seed in 0..4 {
                let d = demonstrate(&task, seed, &cfg).unwrap_or_else(|e| panic!("{name} seed {seed}: {e}"));
                assert!(d.success);
            }
        }
    }
}
