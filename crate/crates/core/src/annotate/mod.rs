//! Ground-truth affordance annotators.
//!
//! Each annotator reads simulator state and returns one component of the
//! affordance chain. The `perceived_*` variants reproduce the structure of a
//! perception pipeline: two independent noisy estimates of the same quantity
//! are reconciled (boxes by IoU fusion, point pools by clustering) before the
//! result is used as a training label.

pub mod cluster;
pub mod planner;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Shape, Vec2};
use crate::seed::rng_for;
use crate::world::{ObjectId, Role, TaskSpec, WorldState};

pub use cluster::{cluster_points, Clustering};
pub use planner::{PlanFailure, PlannerParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotateError {
    #[error("target object {0} is not in the world")]
    MissingTarget(ObjectId),
    #[error("object {0} is not in the world")]
    UnknownObject(ObjectId),
    #[error("box estimates disagree (IoU {iou:.4} below {threshold})")]
    Disagreement { iou: f64, threshold: f64 },
    #[error("object {id} is {width:.3} wide, more than the {max:.3} the gripper opens")]
    Ungraspable { id: ObjectId, width: f64, max: f64 },
    #[error("no free placement point on receptacle {0}")]
    NoFreeSpace(ObjectId),
    #[error("goal ({x:.3}, {y:.3}) unreachable: {reason:?}")]
    Unreachable { x: f64, y: f64, reason: PlanFailure },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotateConfig {
    pub bbox_padding: f64,
    pub iou_threshold: f64,
    pub grasp_points: usize,
    pub grasp_angles: usize,
    /// Minimum angular separation between chosen grasp points, in degrees.
    pub grasp_separation_deg: f64,
    /// Grasp points stay within this distance of the object boundary.
    pub grasp_epsilon: f64,
    pub spatial_points: usize,
    /// Candidates drawn per point pool.
    pub spatial_candidates: usize,
    /// Added to the placed object's radius when rejecting occupied points.
    pub spatial_margin: f64,
    pub cluster_eps: f64,
    pub cluster_min_pts: usize,
    /// Standard deviation of the label jitter; draws are clipped at 3σ.
    pub noise_sigma: f64,
    pub grid_size: usize,
    pub path_clearance: f64,
    pub waypoint_step: f64,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self {
            bbox_padding: 0.01,
            iou_threshold: 0.5,
            grasp_points: 3,
            grasp_angles: 360,
            grasp_separation_deg: 20.0,
            grasp_epsilon: 0.025,
            spatial_points: 4,
            spatial_candidates: 128,
            spatial_margin: 0.005,
            cluster_eps: 0.03,
            cluster_min_pts: 3,
            noise_sigma: 0.005,
            grid_size: 64,
            path_clearance: 0.015,
            waypoint_step: 0.5,
        }
    }
}

/// Axis-aligned box in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max
            && self.y_min < self.y_max
            && self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= 1.0
            && self.y_max <= 1.0
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    pub fn intersection(&self, o: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x_min.max(o.x_min),
            self.y_min.max(o.y_min),
            self.x_max.min(o.x_max),
            self.y_max.min(o.y_max),
        );
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }

    pub fn iou(&self, o: &BBox) -> f64 {
        let inter = self.intersection(o).map_or(0.0, |b| b.area());
        let union = self.area() + o.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    fn clamped_unit(self) -> BBox {
        BBox::new(
            self.x_min.clamp(0.0, 1.0),
            self.y_min.clamp(0.0, 1.0),
            self.x_max.clamp(0.0, 1.0),
            self.y_max.clamp(0.0, 1.0),
        )
    }
}

/// What to manipulate and where it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAffordance {
    pub name: String,
    pub bbox: BBox,
}

/// Where to grip the object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspAffordance {
    pub points: Vec<Vec2>,
    pub object: ObjectId,
}

/// Free placement points on a receptacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialAffordance {
    pub points: Vec<Vec2>,
    pub receptacle: ObjectId,
}

/// Collision-free waypoint path for the gripper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementAffordance {
    pub path: Vec<Vec2>,
}

impl MovementAffordance {
    pub fn length(&self) -> f64 {
        polyline_length(&self.path)
    }
}

/// Which chain components are generated and conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct AffordanceMask {
    pub object: bool,
    pub grasp: bool,
    pub spatial: bool,
    pub movement: bool,
}

impl AffordanceMask {
    pub const ALL: AffordanceMask = AffordanceMask { object: true, grasp: true, spatial: true, movement: true };
    pub const NONE: AffordanceMask = AffordanceMask { object: false, grasp: false, spatial: false, movement: false };

    pub fn bits(&self) -> [bool; 4] {
        [self.object, self.grasp, self.spatial, self.movement]
    }

    pub fn from_bits(b: [bool; 4]) -> Self {
        Self { object: b[0], grasp: b[1], spatial: b[2], movement: b[3] }
    }

    pub fn count(&self) -> usize {
        self.bits().iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// The four optional affordance components. The selection mask is derived
/// from which components are present, so the two can never disagree.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AffordanceChain {
    pub object: Option<ObjectAffordance>,
    pub grasp: Option<GraspAffordance>,
    pub spatial: Option<SpatialAffordance>,
    pub movement: Option<MovementAffordance>,
}

impl AffordanceChain {
    pub fn mask(&self) -> AffordanceMask {
        AffordanceMask {
            object: self.object.is_some(),
            grasp: self.grasp.is_some(),
            spatial: self.spatial.is_some(),
            movement: self.movement.is_some(),
        }
    }

    /// Drops every component whose bit is not set in `mask`.
    pub fn masked(&self, mask: AffordanceMask) -> AffordanceChain {
        AffordanceChain {
            object: self.object.clone().filter(|_| mask.object),
            grasp: self.grasp.clone().filter(|_| mask.grasp),
            spatial: self.spatial.clone().filter(|_| mask.spatial),
            movement: self.movement.clone().filter(|_| mask.movement),
        }
    }
}

pub fn polyline_length(path: &[Vec2]) -> f64 {
    path.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Gaussian jitter clipped at three standard deviations per axis.
pub struct Jitter<R> {
    rng: R,
    normal: Option<Normal<f64>>,
    sigma: f64,
}

impl<R: Rng> Jitter<R> {
    pub fn new(rng: R, sigma: f64) -> Self {
        let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
        Self { rng, normal, sigma }
    }

    pub fn scalar(&mut self) -> f64 {
        match &self.normal {
            Some(n) => n.sample(&mut self.rng).clamp(-3.0 * self.sigma, 3.0 * self.sigma),
            None => 0.0,
        }
    }

    pub fn point(&mut self, p: Vec2) -> Vec2 {
        let dx = self.scalar();
        let dy = self.scalar();
        p + Vec2::new(dx, dy)
    }
}

/// Tight bounding box of the target, padded and clipped to the image.
pub fn annotate_object(world: &WorldState, task: &TaskSpec, cfg: &AnnotateConfig) -> Result<ObjectAffordance, AnnotateError> {
    let target = world.object(task.target).ok_or(AnnotateError::MissingTarget(task.target))?;
    let (lo, hi) = target.shape.bounds();
    let pad = cfg.bbox_padding;
    Ok(ObjectAffordance {
        name: target.name.clone(),
        bbox: BBox::new(lo.x - pad, lo.y - pad, hi.x + pad, hi.y + pad).clamped_unit(),
    })
}

/// Reconciles two box estimates: the intersection when they agree.
pub fn fuse_boxes_iou(a: &BBox, b: &BBox, threshold: f64) -> Result<BBox, AnnotateError> {
    let iou = a.iou(b);
    match a.intersection(b) {
        Some(inter) if iou >= threshold => Ok(inter),
        _ => Err(AnnotateError::Disagreement { iou, threshold }),
    }
}

/// Object affordance from two jittered box estimates fused by IoU; falls
/// back to the exact box when the estimates disagree.
pub fn perceived_object<R: Rng>(
    world: &WorldState,
    task: &TaskSpec,
    cfg: &AnnotateConfig,
    jitter: &mut Jitter<R>,
) -> Result<ObjectAffordance, AnnotateError> {
    let exact = annotate_object(world, task, cfg)?;
    let mut estimate = || {
        let b = exact.bbox;
        BBox::new(
            b.x_min + jitter.scalar(),
            b.y_min + jitter.scalar(),
            b.x_max + jitter.scalar(),
            b.y_max + jitter.scalar(),
        )
        .clamped_unit()
    };
    let (a, b) = (estimate(), estimate());
    let bbox = match fuse_boxes_iou(&a, &b, cfg.iou_threshold) {
        Ok(f) if f.is_valid() => f,
        _ => exact.bbox,
    };
    Ok(ObjectAffordance { name: exact.name, bbox })
}

/// Clearance of a point from everything the gripper could bump into while
/// holding `object`: other non-receptacle objects and the workspace edge.
pub fn grasp_clearance(world: &WorldState, object: ObjectId, p: Vec2) -> f64 {
    let walls = p.x.min(1.0 - p.x).min(p.y).min(1.0 - p.y);
    world
        .objects
        .iter()
        .filter(|o| o.id != object && o.role != Role::Receptacle)
        .map(|o| o.shape.distance_to_point(p))
        .fold(walls, f64::min)
}

/// `k` boundary points with the most clearance from surrounding objects,
/// spread at least the configured angular separation apart. Ties break
/// toward the smaller angle.
pub fn annotate_grasp(world: &WorldState, object: ObjectId, cfg: &AnnotateConfig) -> Result<GraspAffordance, AnnotateError> {
    let obj = world.object(object).ok_or(AnnotateError::UnknownObject(object))?;
    let width = obj.shape.width();
    if width > world.config.max_grasp_width {
        return Err(AnnotateError::Ungraspable { id: object, width, max: world.config.max_grasp_width });
    }
    let m = cfg.grasp_angles.max(1);
    let mut candidates: Vec<(usize, Vec2, f64)> = (0..m)
        .map(|i| {
            let p = obj.shape.boundary_point(i as f64 * std::f64::consts::TAU / m as f64);
            (i, p, grasp_clearance(world, object, p))
        })
        .collect();
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let sep = (cfg.grasp_separation_deg / 360.0 * m as f64).round() as usize;
    let mut chosen: Vec<usize> = Vec::new();
    for &(i, _, _) in &candidates {
        if chosen.len() == cfg.grasp_points {
            break;
        }
        let far = chosen.iter().all(|&c| {
            let d = i.abs_diff(c);
            d.min(m - d) >= sep
        });
        if far {
            chosen.push(i);
        }
    }
    let points = chosen
        .iter()
        .map(|&i| candidates.iter().find(|c| c.0 == i).expect("chosen from candidates").1)
        .collect();
    Ok(GraspAffordance { points, object })
}

/// Grasp affordance with label jitter on each point.
pub fn perceived_grasp<R: Rng>(
    world: &WorldState,
    object: ObjectId,
    cfg: &AnnotateConfig,
    jitter: &mut Jitter<R>,
) -> Result<GraspAffordance, AnnotateError> {
    let mut g = annotate_grasp(world, object, cfg)?;
    for p in &mut g.points {
        *p = jitter.point(*p);
    }
    Ok(g)
}

/// Objects resting on the receptacle, other than the one being placed.
fn occupiers<'a>(world: &'a WorldState, receptacle: &'a Shape, placed: Option<ObjectId>) -> impl Iterator<Item = &'a Shape> {
    world
        .objects
        .iter()
        .filter(move |o| o.role != Role::Receptacle && Some(o.id) != placed && world.gripper.held != Some(o.id))
        .filter(move |o| o.shape.distance_to_shape(receptacle) <= 0.0)
        .map(|o| &o.shape)
}

/// Whether `p` is a valid placement point for an object of radius
/// `clearance - margin`.
pub fn placement_is_free(world: &WorldState, receptacle: ObjectId, placed: Option<ObjectId>, p: Vec2, clearance: f64) -> bool {
    let Some(r) = world.object(receptacle) else { return false };
    r.shape.contains(p) && occupiers(world, &r.shape, placed).all(|s| s.distance_to_point(p) >= clearance)
}

/// Radius kept free around placement points for the object being placed.
pub fn placement_clearance(world: &WorldState, placed: Option<ObjectId>, cfg: &AnnotateConfig) -> f64 {
    placed.and_then(|id| world.object(id)).map_or(0.0, |o| o.shape.bounding_radius()) + cfg.spatial_margin
}

/// Free placement points: two candidate pools sampled inside the
/// receptacle, optionally jittered, filtered for occupancy, clustered, with
/// up to `n` points returned from the largest cluster, nearest its centroid
/// first.
///
/// `seed` fixes the candidate pools, so repeated calls on an unchanged
/// scene agree; `noise` draws the label jitter.
pub fn annotate_spatial_with<R: Rng>(
    world: &WorldState,
    receptacle: ObjectId,
    placed: Option<ObjectId>,
    n: usize,
    cfg: &AnnotateConfig,
    seed: u64,
    noise: Option<&mut Jitter<R>>,
) -> Result<SpatialAffordance, AnnotateError> {
    let rec = world.object(receptacle).ok_or(AnnotateError::UnknownObject(receptacle))?;
    let clearance = placement_clearance(world, placed, cfg);
    let (lo, hi) = rec.shape.bounds();
    let mut pools: Vec<Vec2> = Vec::with_capacity(2 * cfg.spatial_candidates);
    for pool in 0..2u64 {
        let mut rng = rng_for(seed, &[crate::seed::STREAM_ANNOTATE, receptacle as u64, pool]);
        let mut drawn = 0;
        let mut attempts = 0;
        while drawn < cfg.spatial_candidates && attempts < 20 * cfg.spatial_candidates {
            attempts += 1;
            let p = Vec2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
            if rec.shape.contains(p) {
                pools.push(p);
                drawn += 1;
            }
        }
    }
    if let Some(j) = noise {
        for p in &mut pools {
            *p = j.point(*p);
        }
    }
    let valid: Vec<Vec2> = pools
        .into_iter()
        .filter(|p| placement_is_free(world, receptacle, placed, *p, clearance))
        .collect();
    let clustering = cluster_points(&valid, cfg.cluster_eps, cfg.cluster_min_pts);
    let Some(best) = clustering.largest() else {
        return Err(AnnotateError::NoFreeSpace(receptacle));
    };
    let members = &clustering.clusters[best];
    let centroid = members.iter().fold(Vec2::ZERO, |acc, &i| acc + valid[i]) * (1.0 / members.len() as f64);
    let mut ranked: Vec<(f64, usize)> = members.iter().map(|&i| (valid[i].dist(centroid), i)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let points = ranked.iter().take(n.max(1)).map(|&(_, i)| valid[i]).collect();
    Ok(SpatialAffordance { points, receptacle })
}

/// Noise-free spatial affordance for placing the task target.
pub fn annotate_spatial(
    world: &WorldState,
    task: &TaskSpec,
    n: usize,
    cfg: &AnnotateConfig,
    seed: u64,
) -> Result<SpatialAffordance, AnnotateError> {
    annotate_spatial_with::<rand_chacha::ChaCha8Rng>(world, task.receptacle, Some(task.target), n, cfg, seed, None)
}

pub fn planner_params(world: &WorldState, cfg: &AnnotateConfig) -> PlannerParams {
    PlannerParams {
        grid: cfg.grid_size,
        radius: world.config.gripper_radius,
        clearance: cfg.path_clearance,
        waypoint_step: cfg.waypoint_step,
    }
}

/// Collision-free path from the current gripper pose to `goal`.
pub fn annotate_movement(world: &WorldState, goal: Vec2, cfg: &AnnotateConfig) -> Result<MovementAffordance, AnnotateError> {
    planner::plan(world, world.gripper.pose, goal, &planner_params(world, cfg))
        .map(|path| MovementAffordance { path })
        .map_err(|reason| AnnotateError::Unreachable { x: goal.x, y: goal.y, reason })
}

/// Gripper track across a demonstration, dropping moves shorter than 1e-4.
pub fn track_gripper(poses: impl IntoIterator<Item = Vec2>) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::new();
    for p in poses {
        if out.last().map_or(true, |q| q.dist(p) >= 1e-4) {
            out.push(p);
        }
    }
    out
}
