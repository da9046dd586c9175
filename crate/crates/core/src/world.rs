//! Deterministic 2D tabletop simulator.
//!
//! The workspace is the unit square. The gripper is a disc with a scalar
//! aperture; it grasps the nearest overlapping graspable object when the
//! aperture crosses below the grasp threshold and releases it when the
//! aperture crosses back above. Motion is swept against obstacle-role
//! objects and truncated at the first contact.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Shape, Vec2};
use crate::raster::Raster;
use crate::seed::{rng_for, STREAM_RESET};

pub type ObjectId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("action ({dx}, {dy}, {aperture}) exceeds the step bound {max_step} or is not finite")]
    ActionOutOfRange { dx: f64, dy: f64, aperture: f64, max_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Receptacle,
    Obstacle,
    Distractor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorTag {
    Table,
    Red,
    Green,
    Blue,
    Yellow,
    Orange,
    Purple,
    Brown,
    Gray,
    White,
    Cyan,
}

impl ColorTag {
    pub const ALL: [ColorTag; 11] = [
        ColorTag::Table,
        ColorTag::Red,
        ColorTag::Green,
        ColorTag::Blue,
        ColorTag::Yellow,
        ColorTag::Orange,
        ColorTag::Purple,
        ColorTag::Brown,
        ColorTag::Gray,
        ColorTag::White,
        ColorTag::Cyan,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn base_rgb(self) -> [u8; 3] {
        match self {
            ColorTag::Table => [186, 160, 124],
            ColorTag::Red => [200, 40, 40],
            ColorTag::Green => [50, 160, 60],
            ColorTag::Blue => [50, 80, 200],
            ColorTag::Yellow => [230, 210, 50],
            ColorTag::Orange => [235, 130, 30],
            ColorTag::Purple => [130, 60, 170],
            ColorTag::Brown => [110, 70, 40],
            ColorTag::Gray => [120, 120, 120],
            ColorTag::White => [240, 240, 235],
            ColorTag::Cyan => [40, 190, 200],
        }
    }
}

/// Scene lighting and palette. `palette[i]` names the color index actually
/// painted for tag `i`; the identity permutation renders the base colors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub palette: Vec<usize>,
    pub tint: [f64; 3],
}

impl Default for Appearance {
    fn default() -> Self {
        Self { palette: (0..ColorTag::ALL.len()).collect(), tint: [1.0, 1.0, 1.0] }
    }
}

impl Appearance {
    pub fn is_valid(&self) -> bool {
        let mut seen = vec![false; ColorTag::ALL.len()];
        self.palette.len() == ColorTag::ALL.len()
            && self.palette.iter().all(|&i| i < seen.len() && !std::mem::replace(&mut seen[i], true))
            && self.tint.iter().all(|t| t.is_finite() && *t >= 0.0)
    }

    pub fn rgb(&self, tag: ColorTag) -> [u8; 3] {
        self.apply_tint(ColorTag::ALL[self.palette[tag.index()]].base_rgb())
    }

    pub fn apply_tint(&self, rgb: [u8; 3]) -> [u8; 3] {
        let mut out = [0u8; 3];
        for c in 0..3 {
            out[c] = (rgb[c] as f64 * self.tint[c]).round().clamp(0.0, 255.0) as u8;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub id: ObjectId,
    pub name: String,
    pub shape: Shape,
    pub color: ColorTag,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gripper {
    pub pose: Vec2,
    pub aperture: f64,
    pub held: Option<ObjectId>,
    /// Held object center minus gripper pose, fixed at grasp time.
    pub hold_offset: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub max_step: f64,
    pub gripper_radius: f64,
    pub grasp_threshold: f64,
    /// Largest aperture change per step.
    pub aperture_rate: f64,
    /// Objects wider than this cannot be grasped.
    pub max_grasp_width: f64,
    pub sweep_tolerance: f64,
    pub image_size: usize,
    pub reset_retries: usize,
    /// Minimum separation between objects at reset.
    pub min_gap: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            max_step: 0.05,
            gripper_radius: 0.025,
            grasp_threshold: 0.5,
            aperture_rate: 0.5,
            max_grasp_width: 0.12,
            sweep_tolerance: 1e-4,
            image_size: 96,
            reset_retries: 200,
            min_gap: 0.01,
        }
    }
}

/// Nominal object placement inside a task template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub id: ObjectId,
    pub name: String,
    pub shape: Shape,
    pub color: ColorTag,
    pub role: Role,
    /// Half-width of the uniform translation jitter applied at reset.
    #[serde(default)]
    pub jitter: f64,
    /// Object this one sits on; it inherits that object's jitter and must
    /// stay inside it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached_to: Option<ObjectId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub instruction: String,
    pub target: ObjectId,
    pub receptacle: ObjectId,
    pub place_tolerance: f64,
    /// Clearance kept from obstacles by planners and placements.
    pub clearance: f64,
    pub gripper_start: Vec2,
    #[serde(default)]
    pub gripper_jitter: f64,
    #[serde(default)]
    pub appearance: Appearance,
    #[serde(rename = "object")]
    pub objects: Vec<ObjectTemplate>,
}

impl TaskSpec {
    pub fn obstacle_ids(&self) -> Vec<ObjectId> {
        self.objects.iter().filter(|o| o.role == Role::Obstacle).map(|o| o.id).collect()
    }

    pub fn template(&self, id: ObjectId) -> Option<&ObjectTemplate> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidTask(format!("{}: {m}", self.name)));
        if self.instruction.trim().is_empty() {
            return bad("empty instruction".into());
        }
        let mut ids = BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if !ids.insert(o.id) {
                return bad(format!("duplicate object id {}", o.id));
            }
            if !o.shape.is_valid() || !o.jitter.is_finite() || o.jitter < 0.0 {
                return bad(format!("object {} has an invalid shape or jitter", o.id));
            }
            if let Some(a) = o.attached_to {
                if !self.objects[..i].iter().any(|p| p.id == a) {
                    return bad(format!("object {} attached to unknown or later object {a}", o.id));
                }
            }
        }
        match self.template(self.target) {
            Some(t) if t.role == Role::Target => {}
            _ => return bad(format!("target {} missing or not a target", self.target)),
        }
        match self.template(self.receptacle) {
            Some(r) if r.role == Role::Receptacle => {}
            _ => return bad(format!("receptacle {} missing or not a receptacle", self.receptacle)),
        }
        if !self.appearance.is_valid() {
            return bad("invalid appearance".into());
        }
        if !(self.place_tolerance > 0.0 && self.clearance >= 0.0 && self.gripper_start.is_finite()) {
            return bad("invalid tolerances or gripper start".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    /// Commanded aperture in `[0, 1]`; the gripper moves toward it at the
    /// configured rate.
    pub aperture: f64,
}

impl Action {
    pub fn new(dx: f64, dy: f64, aperture: f64) -> Self {
        Self { dx, dy, aperture }
    }

    pub fn is_within(&self, max_step: f64) -> bool {
        self.dx.is_finite()
            && self.dy.is_finite()
            && self.aperture.is_finite()
            && self.dx.abs() <= max_step + 1e-12
            && self.dy.abs() <= max_step + 1e-12
            && (0.0..=1.0).contains(&self.aperture)
    }

    /// Clamps translation to `max_step` per axis and the aperture to `[0, 1]`.
    pub fn clamped(&self, max_step: f64) -> Action {
        let c = |v: f64, lo: f64, hi: f64| if v.is_finite() { v.clamp(lo, hi) } else { 0.0 };
        Action {
            dx: c(self.dx, -max_step, max_step),
            dy: c(self.dy, -max_step, max_step),
            aperture: c(self.aperture, 0.0, 1.0),
        }
    }
}

/// Fixed-length sequence of actions predicted jointly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    pub actions: Vec<Action>,
}

impl ActionChunk {
    pub fn is_valid(&self, max_step: f64) -> bool {
        self.actions.iter().all(|a| a.is_within(max_step))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactReport {
    /// Obstacles touched by the swept gripper this step.
    pub contacts: Vec<ObjectId>,
    pub truncated: bool,
    /// The commanded pose left the workspace and was clamped.
    pub out_of_bounds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proprioception {
    pub pose: Vec2,
    pub aperture: f64,
    pub held: bool,
    pub last_delta: Vec2,
}

impl Proprioception {
    pub const DIM: usize = 6;

    /// Feature vector `[x, y, aperture, held, dx / max_step, dy / max_step]`.
    pub fn features(&self, max_step: f64) -> [f64; Self::DIM] {
        [
            self.pose.x,
            self.pose.y,
            self.aperture,
            if self.held { 1.0 } else { 0.0 },
            self.last_delta.x / max_step,
            self.last_delta.y / max_step,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Camera {
    Topdown,
    /// Window of side [`WRIST_WINDOW`] centered on the gripper.
    WristCrop,
}

pub const WRIST_WINDOW: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: Vec<Object>,
    pub gripper: Gripper,
    pub step_count: u64,
    pub appearance: Appearance,
    pub config: WorldConfig,
    pub last_action: Action,
    /// Obstacles contacted at any point of the episode.
    pub contact_history: BTreeSet<ObjectId>,
}

const GRIPPER_OPEN_RGB: [u8; 3] = [225, 225, 225];
const GRIPPER_CLOSED_RGB: [u8; 3] = [30, 30, 30];
const GRIPPER_RING: f64 = 0.012;

impl WorldState {
    /// Places the task's objects with seeded jitter.
    pub fn reset(task: &TaskSpec, seed: u64, config: &WorldConfig) -> Result<WorldState, WorldError> {
        task.validate()?;
        let mut rng = rng_for(seed, &[STREAM_RESET]);
        let mut last_reason = String::from("no attempt made");
        for _ in 0..config.reset_retries.max(1) {
            let own: Vec<Vec2> = task
                .objects
                .iter()
                .map(|t| {
                    let j = t.jitter;
                    Vec2::new(rng.gen_range(-1.0..=1.0) * j, rng.gen_range(-1.0..=1.0) * j)
                })
                .collect();
            let start_jitter = Vec2::new(
                rng.gen_range(-1.0..=1.0) * task.gripper_jitter,
                rng.gen_range(-1.0..=1.0) * task.gripper_jitter,
            );
            let mut offsets: Vec<Vec2> = Vec::with_capacity(own.len());
            for (i, t) in task.objects.iter().enumerate() {
                let anchor = t
                    .attached_to
                    .and_then(|a| task.objects.iter().position(|o| o.id == a))
                    .map(|k| offsets[k])
                    .unwrap_or(Vec2::ZERO);
                offsets.push(own[i] + anchor);
            }
            let objects: Vec<Object> = task
                .objects
                .iter()
                .zip(&offsets)
                .map(|(t, d)| Object {
                    id: t.id,
                    name: t.name.clone(),
                    shape: t.shape.translated(*d),
                    color: t.color,
                    role: t.role,
                })
                .collect();
            let pose = task.gripper_start + start_jitter;
            match placement_violation(task, &objects, pose, config) {
                None => {
                    return Ok(WorldState {
                        objects,
                        gripper: Gripper { pose, aperture: 1.0, held: None, hold_offset: Vec2::ZERO },
                        step_count: 0,
                        appearance: task.appearance.clone(),
                        config: *config,
                        last_action: Action::new(0.0, 0.0, 1.0),
                        contact_history: BTreeSet::new(),
                    })
                }
                Some(reason) => last_reason = reason,
            }
        }
        Err(WorldError::InvalidTask(format!(
            "{}: placement failed after {} attempts ({last_reason})",
            task.name, config.reset_retries
        )))
    }

    pub fn object(&self, id: ObjectId) -> Option<&Object> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn obstacles(&self) -> impl Iterator<Item = &Object> {
        self.objects.iter().filter(|o| o.role == Role::Obstacle)
    }

    /// Obstacles whose shape intersects the disc `(pose, radius)`, sorted by id.
    pub fn check_collision(&self, pose: Vec2, radius: f64) -> Vec<ObjectId> {
        let mut ids: Vec<ObjectId> = self
            .obstacles()
            .filter(|o| o.shape.distance_to_point(pose) <= radius)
            .map(|o| o.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// True when the disc swept along `[a, b]` touches no obstacle.
    pub fn segment_is_free(&self, a: Vec2, b: Vec2, radius: f64) -> bool {
        self.obstacles().all(|o| o.shape.distance_to_segment(a, b) > radius)
    }

    pub fn proprioception(&self) -> Proprioception {
        Proprioception {
            pose: self.gripper.pose,
            aperture: self.gripper.aperture,
            held: self.gripper.held.is_some(),
            last_delta: Vec2::new(self.last_action.dx, self.last_action.dy),
        }
    }

    /// Advances the simulation by one action.
    pub fn step(&self, action: Action) -> Result<(WorldState, ContactReport), WorldError> {
        let cfg = &self.config;
        if !action.is_within(cfg.max_step) {
            return Err(WorldError::ActionOutOfRange {
                dx: action.dx,
                dy: action.dy,
                aperture: action.aperture,
                max_step: cfg.max_step,
            });
        }
        let mut next = self.clone();
        let mut report = ContactReport::default();
        let start = self.gripper.pose;

        // Workspace bounds for the gripper center and any held object.
        let (mut lo, mut hi) = (Vec2::new(-start.x, -start.y), Vec2::new(1.0 - start.x, 1.0 - start.y));
        if let Some(obj) = self.gripper.held.and_then(|id| self.object(id)) {
            let (blo, bhi) = obj.shape.bounds();
            lo = Vec2::new(lo.x.max(-blo.x), lo.y.max(-blo.y));
            hi = Vec2::new(hi.x.min(1.0 - bhi.x), hi.y.min(1.0 - bhi.y));
        }
        let want = Vec2::new(action.dx, action.dy);
        let delta = Vec2::new(want.x.clamp(lo.x.min(0.0), hi.x.max(0.0)), want.y.clamp(lo.y.min(0.0), hi.y.max(0.0)));
        report.out_of_bounds = delta != want;
        let end = start + delta;

        let radius = cfg.gripper_radius;
        let mut first: Option<(f64, f64)> = None;
        let mut hits: Vec<(ObjectId, f64)> = Vec::new();
        for o in self.obstacles() {
            if let Some((s_free, s_hit)) = first_contact(&o.shape, start, end, radius, cfg.sweep_tolerance) {
                hits.push((o.id, s_hit));
                if first.map_or(true, |(f, _)| s_free < f) {
                    first = Some((s_free, s_hit));
                }
            }
        }
        let pose = match first {
            Some((s_free, s_hit)) => {
                report.truncated = true;
                let len = (end - start).norm().max(f64::MIN_POSITIVE);
                let slack = cfg.sweep_tolerance / len;
                let mut ids: Vec<ObjectId> =
                    hits.iter().filter(|(_, s)| *s <= s_hit + slack).map(|(id, _)| *id).collect();
                ids.sort_unstable();
                report.contacts = ids;
                start.lerp(end, s_free)
            }
            None => end,
        };
        let moved = pose - start;
        next.gripper.pose = pose;
        if let Some(id) = self.gripper.held {
            if let Some(obj) = next.objects.iter_mut().find(|o| o.id == id) {
                obj.shape = obj.shape.translated(moved);
            }
        }

        let prev_ap = self.gripper.aperture;
        let new_ap = (prev_ap + (action.aperture - prev_ap).clamp(-cfg.aperture_rate, cfg.aperture_rate)).clamp(0.0, 1.0);
        next.gripper.aperture = new_ap;
        let thr = cfg.grasp_threshold;
        if next.gripper.held.is_none() && prev_ap >= thr && new_ap < thr {
            let grasped = next
                .objects
                .iter()
                .filter(|o| matches!(o.role, Role::Target | Role::Distractor))
                .filter(|o| o.shape.width() <= cfg.max_grasp_width)
                .filter(|o| o.shape.distance_to_point(pose) <= radius)
                .map(|o| (o.id, o.shape.center().dist(pose), o.shape.center()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if let Some((id, _, center)) = grasped {
                next.gripper.held = Some(id);
                next.gripper.hold_offset = center - pose;
            }
        } else if next.gripper.held.is_some() && prev_ap <= thr && new_ap > thr {
            next.gripper.held = None;
            next.gripper.hold_offset = Vec2::ZERO;
        }

        next.contact_history.extend(report.contacts.iter().copied());
        next.last_action = action;
        next.step_count += 1;
        Ok((next, report))
    }

    /// True iff the target rests, released, within tolerance of a free
    /// receptacle point, overlaps no obstacle, and no obstacle was contacted
    /// during the episode.
    pub fn task_success(&self, task: &TaskSpec) -> bool {
        if !self.contact_history.is_empty() || self.gripper.held.is_some() {
            return false;
        }
        let (Some(target), Some(receptacle)) = (self.object(task.target), self.object(task.receptacle)) else {
            return false;
        };
        if self.obstacles().any(|o| o.shape.distance_to_shape(&target.shape) <= 0.0) {
            return false;
        }
        let c = target.shape.center();
        let clearance = target.shape.bounding_radius();
        let free = |q: Vec2| {
            receptacle.shape.contains(q) && self.obstacles().all(|o| o.shape.distance_to_point(q) >= clearance)
        };
        if free(c) {
            return true;
        }
        let tol = task.place_tolerance;
        (1..=4).any(|ring| {
            let r = tol * ring as f64 / 4.0;
            (0..16).any(|k| free(c + Vec2::from_angle(k as f64 * std::f64::consts::TAU / 16.0) * r))
        })
    }

    /// Color of the scene at a workspace point, without the gripper.
    fn scene_color(&self, p: Vec2) -> [u8; 3] {
        let app = &self.appearance;
        let mut rgb = app.rgb(ColorTag::Table);
        for o in self.objects.iter().filter(|o| o.role == Role::Receptacle) {
            if o.shape.contains(p) {
                rgb = app.rgb(o.color);
            }
        }
        let held = self.gripper.held;
        for o in self.objects.iter().filter(|o| o.role != Role::Receptacle && Some(o.id) != held) {
            if o.shape.contains(p) {
                rgb = app.rgb(o.color);
            }
        }
        if let Some(o) = held.and_then(|id| self.object(id)) {
            if o.shape.contains(p) {
                rgb = app.rgb(o.color);
            }
        }
        rgb
    }

    fn shade(&self, p: Vec2) -> [u8; 3] {
        let d = p.dist(self.gripper.pose);
        let r = self.config.gripper_radius;
        if d <= r && d >= r - GRIPPER_RING {
            let a = self.gripper.aperture;
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                rgb[c] = (GRIPPER_CLOSED_RGB[c] as f64 * (1.0 - a) + GRIPPER_OPEN_RGB[c] as f64 * a).round() as u8;
            }
            return self.appearance.apply_tint(rgb);
        }
        self.scene_color(p)
    }

    /// Rasterizes the scene. Pixel `(row, col)` samples the workspace point
    /// `((col + 0.5) / W, (row + 0.5) / H)` for the top-down camera.
    pub fn render(&self, camera: Camera) -> Raster {
        let n = self.config.image_size;
        let mut img = Raster::filled(n, n, [0, 0, 0]);
        let (origin, span) = match camera {
            Camera::Topdown => (Vec2::ZERO, 1.0),
            Camera::WristCrop => (self.gripper.pose - Vec2::new(WRIST_WINDOW, WRIST_WINDOW) * 0.5, WRIST_WINDOW),
        };
        for row in 0..n {
            for col in 0..n {
                let p = origin + Vec2::new((col as f64 + 0.5) / n as f64, (row as f64 + 0.5) / n as f64) * span;
                if (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y) {
                    img.set(row, col, self.shade(p));
                }
            }
        }
        img
    }
}

/// Pixel containing a workspace point in an `n`×`n` top-down image.
pub fn project_to_pixel(p: Vec2, n: usize) -> (usize, usize) {
    let f = |v: f64| ((v * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
    (f(p.y), f(p.x))
}

/// First contact of the disc swept from `a` to `b` with `shape`.
///
/// Returns `(s_free, s_hit)` with `s_free < s_hit`, both fractions of the
/// segment: the disc at `s_free` is clear of the shape and the sub-segment
/// `[0, s_hit]` touches it, with `(s_hit - s_free) * |b - a| <= tol`.
/// Touching the shape along `[0, s]` is monotone in `s`, which makes the
/// bisection exact up to the tolerance.
pub fn first_contact(shape: &Shape, a: Vec2, b: Vec2, radius: f64, tol: f64) -> Option<(f64, f64)> {
    if shape.distance_to_segment(a, b) > radius {
        return None;
    }
    if shape.distance_to_point(a) <= radius {
        return Some((0.0, 0.0));
    }
    let len = (b - a).norm();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while (hi - lo) * len > tol {
        let mid = 0.5 * (lo + hi);
        if shape.distance_to_segment(a, a.lerp(b, mid)) <= radius {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((lo, hi))
}

/// Returns a description of the first placement rule the layout breaks.
fn placement_violation(task: &TaskSpec, objects: &[Object], pose: Vec2, cfg: &WorldConfig) -> Option<String> {
    for o in objects {
        if !o.shape.within_unit_square() {
            return Some(format!("object {} leaves the workspace", o.id));
        }
    }
    for (i, a) in objects.iter().enumerate() {
        for b in &objects[i + 1..] {
            let ta = &task.objects[i];
            let tb = task.template(b.id).expect("template exists");
            let (recept, other, other_t) = match (a.role, b.role) {
                (Role::Receptacle, _) => (a, b, tb),
                (_, Role::Receptacle) => (b, a, ta),
                _ => {
                    if a.shape.distance_to_shape(&b.shape) < cfg.min_gap {
                        return Some(format!("objects {} and {} overlap", a.id, b.id));
                    }
                    continue;
                }
            };
            if other_t.attached_to == Some(recept.id) {
                if !recept.shape.contains(other.shape.center()) {
                    return Some(format!("object {} fell off receptacle {}", other.id, recept.id));
                }
            } else if recept.shape.distance_to_shape(&other.shape) < cfg.min_gap {
                return Some(format!("object {} overlaps receptacle {}", other.id, recept.id));
            }
        }
    }
    if !(0.0..=1.0).contains(&pose.x) || !(0.0..=1.0).contains(&pose.y) {
        return Some("gripper starts outside the workspace".into());
    }
    for o in objects.iter().filter(|o| o.role == Role::Obstacle) {
        if o.shape.distance_to_point(pose) < cfg.gripper_radius + cfg.min_gap {
            return Some(format!("gripper starts against obstacle {}", o.id));
        }
    }
    None
}
