//! Dynamic affordance selection: a monotone task-phase automaton and the
//! component mask each phase conditions on.

use serde::{Deserialize, Serialize};

use crate::annotate::AffordanceMask;
use crate::world::Proprioception;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Approach,
    Grasp,
    Transport,
    Place,
    Done,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::Approach, Phase::Grasp, Phase::Transport, Phase::Place, Phase::Done];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Approach => "approach",
            Phase::Grasp => "grasp",
            Phase::Transport => "transport",
            Phase::Place => "place",
            Phase::Done => "done",
        }
    }

    pub fn from_name(s: &str) -> Option<Phase> {
        Phase::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    /// Held target within this distance of its placement goal counts as placing.
    pub place_radius: f64,
    /// Gripper within this distance of the target surface counts as grasping.
    pub grasp_proximity: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self { place_radius: 0.08, grasp_proximity: 0.04 }
    }
}

/// Scene distances the automaton needs beyond proprioception.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCues {
    /// Gripper center to target surface; zero or negative inside.
    pub target_gap: f64,
    /// Target center to its placement goal.
    pub place_gap: f64,
}

impl PhaseCues {
    pub const FAR: PhaseCues = PhaseCues { target_gap: f64::INFINITY, place_gap: f64::INFINITY };
}

/// Next phase. Transitions only move forward and `Done` is absorbing.
pub fn infer_phase(prop: &Proprioception, prev: Phase, cues: &PhaseCues, cfg: &SelectConfig) -> Phase {
    let next = if prev == Phase::Done {
        Phase::Done
    } else if prop.held {
        if cues.place_gap <= cfg.place_radius {
            Phase::Place
        } else {
            Phase::Transport
        }
    } else if prev >= Phase::Transport {
        Phase::Done
    } else if prop.aperture < 1.0 && cues.target_gap <= cfg.grasp_proximity {
        Phase::Grasp
    } else {
        Phase::Approach
    };
    next.max(prev)
}

/// Components conditioned on in each phase.
pub fn select_affordances(phase: Phase) -> AffordanceMask {
    let (object, grasp, spatial, movement) = match phase {
        Phase::Approach => (true, true, false, true),
        Phase::Grasp => (false, true, false, true),
        Phase::Transport | Phase::Place => (false, false, true, true),
        Phase::Done => (false, false, false, false),
    };
    AffordanceMask { object, grasp, spatial, movement }
}
