//! Per-step chain construction shared by the expert and the evaluation
//! harness: infer the phase, annotate every component against the current
//! scene, and turn the selected part into policy input.

use thiserror::Error;

use crate::annotate::{
    annotate_grasp, annotate_movement, annotate_object, annotate_spatial, planner, planner_params, track_gripper,
    AffordanceChain, AnnotateConfig, AnnotateError, GraspAffordance, MovementAffordance, SpatialAffordance,
};
use crate::geometry::Vec2;
use crate::policy::tokenizer::{bag, tokenize};
use crate::policy::{patchify, Encoded, Mode, PolicyConfig, PolicyError};
use crate::prompt::{render_visual, textualize, PromptError, StyleConfig};
use crate::raster::Raster;
use crate::select::{infer_phase, Phase, PhaseCues, SelectConfig};
use crate::seed::{derive, STREAM_ANNOTATE};
use crate::world::{Proprioception, TaskSpec, WorldState};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// The chain available at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepChain {
    pub phase: Phase,
    /// Every component that could be annotated, before selection.
    pub chain: AffordanceChain,
    /// Where the gripper is headed in this phase.
    pub goal: Option<Vec2>,
    /// Where the target's center is headed once held.
    pub place_point: Option<Vec2>,
    /// First annotation failure, if any component is missing.
    pub issue: Option<AnnotateError>,
}

/// Seed of the spatial candidate pools for an episode; fixed so the points
/// stay put while the scene does.
pub fn spatial_seed(episode_seed: u64) -> u64 {
    derive(episode_seed, &[STREAM_ANNOTATE])
}

fn reachable(world: &WorldState, goal: Vec2, cfg: &AnnotateConfig) -> bool {
    planner::plan(world, world.gripper.pose, goal, &planner_params(world, cfg)).is_ok()
}

/// First grasp point the gripper can reach.
pub fn grasp_goal(world: &WorldState, grasp: &GraspAffordance, cfg: &AnnotateConfig) -> Option<Vec2> {
    grasp.points.iter().copied().find(|p| reachable(world, *p, cfg))
}

/// First spatial point whose matching gripper pose is reachable, returned
/// as `(object point, gripper goal)`.
pub fn place_goal(world: &WorldState, spatial: &SpatialAffordance, cfg: &AnnotateConfig) -> Option<(Vec2, Vec2)> {
    let offset = world.gripper.hold_offset;
    spatial.points.iter().map(|p| (*p, *p - offset)).find(|(_, g)| reachable(world, *g, cfg))
}

/// Planner path with repeated poses removed.
pub fn movement_to(world: &WorldState, goal: Vec2, cfg: &AnnotateConfig) -> Result<MovementAffordance, AnnotateError> {
    let m = annotate_movement(world, goal, cfg)?;
    Ok(MovementAffordance { path: track_gripper(m.path) })
}

fn keep<T>(issue: &mut Option<AnnotateError>, r: Result<T, AnnotateError>) -> Option<T> {
    r.map_err(|e| {
        issue.get_or_insert(e);
    })
    .ok()
}

/// Annotates the scene and advances the phase automaton by one step.
pub fn step_chain(
    world: &WorldState,
    task: &TaskSpec,
    prev: Phase,
    annotate: &AnnotateConfig,
    select: &SelectConfig,
    episode_seed: u64,
) -> StepChain {
    let mut issue: Option<AnnotateError> = None;
    let object = keep(&mut issue, annotate_object(world, task, annotate));
    let grasp = keep(&mut issue, annotate_grasp(world, task.target, annotate));
    let spatial = keep(
        &mut issue,
        annotate_spatial(world, task, annotate.spatial_points, annotate, spatial_seed(episode_seed)),
    );

    let prop = world.proprioception();
    let target = world.object(task.target);
    let held = world.gripper.held == Some(task.target);
    let place = if held { spatial.as_ref().and_then(|s| place_goal(world, s, annotate)) } else { None };
    let cues = PhaseCues {
        target_gap: target.map_or(f64::INFINITY, |t| t.shape.distance_to_point(prop.pose)),
        place_gap: match (place, target) {
            (Some((p, _)), Some(t)) => t.shape.center().dist(p),
            _ => f64::INFINITY,
        },
    };
    let phase = infer_phase(&prop, prev, &cues, select);

    let goal = match phase {
        Phase::Approach | Phase::Grasp => grasp.as_ref().and_then(|g| grasp_goal(world, g, annotate)),
        Phase::Transport | Phase::Place => place.map(|(_, g)| g),
        Phase::Done => None,
    };
    let movement = match (phase, goal) {
        (Phase::Done, _) => None,
        (_, Some(g)) => keep(&mut issue, movement_to(world, g, annotate)),
        (_, None) => {
            let pose = world.gripper.pose;
            let reason = crate::annotate::PlanFailure::NoGridPath;
            keep(&mut issue, Err(AnnotateError::Unreachable { x: pose.x, y: pose.y, reason }))
        }
    };
    StepChain {
        phase,
        chain: AffordanceChain { object, grasp, spatial, movement },
        goal,
        place_point: place.map(|(p, _)| p),
        issue,
    }
}

/// Policy input built from one observation and a (masked) chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptedInput {
    pub input: Encoded,
    /// Textual affordance of the selected chain; empty when nothing is selected.
    pub text: String,
    /// Symbols in `text`.
    pub tokens: usize,
}

/// Overlay and text for `selected` under `mode`, plus proprioception.
pub fn prompt_input(
    obs: &Raster,
    prop: &Proprioception,
    selected: &AffordanceChain,
    policy: &PolicyConfig,
    style: &StyleConfig,
    paraphrase_seed: u64,
) -> Result<PromptedInput, PipelineError> {
    let mode = policy.mode;
    let image = if mode.uses_overlay() { render_visual(obs, selected, style)? } else { obs.clone() };
    let text = if selected.mask().is_empty() { String::new() } else { textualize(selected, paraphrase_seed)?.text };
    let symbols = tokenize(&text, policy)?;
    let input = Encoded {
        patches: patchify(&image, policy)?,
        text: mode.uses_text().then(|| bag(&symbols)),
        proprio: prop.features(policy.max_step),
    };
    Ok(PromptedInput { input, text, tokens: symbols.len() })
}

/// The chain `mode` conditions on in `phase`.
pub fn select_chain(chain: &AffordanceChain, mode: Mode, phase: Phase) -> AffordanceChain {
    chain.masked(mode.mask(phase))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::builtin;
    use crate::world::WorldConfig;

    #[test]
    fn fresh_scene_is_in_approach_with_a_full_chain() {
        let task = builtin("place_plate").unwrap();
        let world = WorldState::reset(&task, 1, &WorldConfig::default()).unwrap();
        let s = step_chain(&world, &task, Phase::Approach, &AnnotateConfig::default(), &SelectConfig::default(), 1);
        assert_eq!(s.phase, Phase::Approach);
        assert!(s.issue.is_none(), "{:?}", s.issue);
        assert_eq!(s.chain.mask().count(), 4);
        let path = &s.chain.movement.as_ref().unwrap().path;
        assert_eq!(path[0], world.gripper.pose);
        assert_eq!(Some(*path.last().unwrap()), s.goal);
    }

    #[test]
    fn prompt_respects_mode() {
        let task = builtin("place_plate").unwrap();
        let world = WorldState::reset(&task, 2, &WorldConfig::default()).unwrap();
        let s = step_chain(&world, &task, Phase::Approach, &AnnotateConfig::default(), &SelectConfig::default(), 2);
        let obs = world.render(crate::world::Camera::Topdown);
        let prop = world.proprioception();
        let style = StyleConfig::default();
        for mode in Mode::ALL {
            let cfg = PolicyConfig { mode, ..Default::default() };
            let sel = select_chain(&s.chain, mode, s.phase);
            let p = prompt_input(&obs, &prop, &sel, &cfg, &style, 0).unwrap();
            assert_eq!(p.input.text.is_some(), mode.uses_text());
            let raw = patchify(&obs, &cfg).unwrap();
            assert_eq!(p.input.patches == raw, !mode.uses_overlay());
            assert!(p.tokens > 0);
        }
        let none = prompt_input(&obs, &prop, &AffordanceChain::default(), &PolicyConfig::default(), &style, 0).unwrap();
        assert_eq!((none.text.as_str(), none.tokens), ("", 0));
    }
}
