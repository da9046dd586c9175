//! Occupancy-grid path planning with line-of-sight shortcutting.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Vec2;
use crate::world::WorldState;

/// Why a plan could not be produced.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanFailure {
    GoalOutsideWorkspace,
    GoalBlocked,
    NoGridPath,
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerParams {
    /// Cells per side.
    pub grid: usize,
    /// Gripper radius; every returned segment is swept-clear at this radius.
    pub radius: f64,
    /// Extra inflation on top of `radius` used when building the grid.
    pub clearance: f64,
    /// Longest allowed distance between consecutive waypoints.
    pub waypoint_step: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    g: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on f, then on node index for a deterministic order.
        other.f.total_cmp(&self.f).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn cell_center(i: usize, j: usize, n: usize) -> Vec2 {
    Vec2::new((j as f64 + 0.5) / n as f64, (i as f64 + 0.5) / n as f64)
}

/// Clearance of a point from the nearest obstacle.
pub fn obstacle_clearance(world: &WorldState, p: Vec2) -> f64 {
    world.obstacles().map(|o| o.shape.distance_to_point(p)).fold(f64::INFINITY, f64::min)
}

/// Blocked cells: centers within `radius + clearance` of an obstacle.
pub fn occupancy(world: &WorldState, params: &PlannerParams) -> Vec<bool> {
    let n = params.grid;
    let inflate = params.radius + params.clearance;
    let mut blocked = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            blocked[i * n + j] = obstacle_clearance(world, cell_center(i, j, n)) <= inflate;
        }
    }
    blocked
}

/// Plans a collision-free polyline from `start` to `goal`.
pub fn plan(world: &WorldState, start: Vec2, goal: Vec2, params: &PlannerParams) -> Result<Vec<Vec2>, PlanFailure> {
    if !(0.0..=1.0).contains(&goal.x) || !(0.0..=1.0).contains(&goal.y) {
        return Err(PlanFailure::GoalOutsideWorkspace);
    }
    let inflate = params.radius + params.clearance;
    if obstacle_clearance(world, goal) <= inflate {
        return Err(PlanFailure::GoalBlocked);
    }
    if start.dist(goal) < 1e-12 {
        return Ok(vec![start]);
    }
    // Segments leaving the start may use the start's own clearance, which
    // can be below the inflated radius after a near-contact.
    let start_radius = inflate.min(obstacle_clearance(world, start) - 1e-6).max(params.radius + 1e-6);
    let los = |a: Vec2, b: Vec2, from_start: bool| {
        world.segment_is_free(a, b, if from_start { start_radius } else { inflate })
    };

    let coarse = if los(start, goal, true) {
        vec![start, goal]
    } else {
        let raw = grid_search(world, start, goal, params, start_radius)?;
        shortcut(&raw, los)
    };
    Ok(resample(&coarse, params.waypoint_step))
}

fn grid_search(
    world: &WorldState,
    start: Vec2,
    goal: Vec2,
    params: &PlannerParams,
    start_radius: f64,
) -> Result<Vec<Vec2>, PlanFailure> {
    let n = params.grid;
    let inflate = params.radius + params.clearance;
    let blocked = occupancy(world, params);
    let cell_of = |p: Vec2| {
        let f = |v: f64| ((v * n as f64).floor() as isize).clamp(0, n as isize - 1);
        (f(p.y), f(p.x))
    };
    // Free cells near an endpoint that the endpoint can see directly.
    let connectors = |p: Vec2, radius: f64| -> Vec<usize> {
        let (ci, cj) = cell_of(p);
        let mut out = Vec::new();
        for di in -2..=2 {
            for dj in -2..=2 {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                    continue;
                }
                let idx = i as usize * n + j as usize;
                if !blocked[idx] && world.segment_is_free(p, cell_center(i as usize, j as usize, n), radius) {
                    out.push(idx);
                }
            }
        }
        out
    };
    let sources = connectors(start, start_radius);
    let sinks = connectors(goal, inflate);
    if sources.is_empty() || sinks.is_empty() {
        return Err(PlanFailure::NoGridPath);
    }
    let goal_node = n * n;
    let center = |idx: usize| cell_center(idx / n, idx % n, n);
    let h = |idx: usize| center(idx).dist(goal);

    let mut best = vec![f64::INFINITY; n * n + 1];
    let mut parent = vec![usize::MAX; n * n + 1];
    let mut is_sink = vec![false; n * n];
    for &s in &sinks {
        is_sink[s] = true;
    }
    let mut heap = BinaryHeap::new();
    for &s in &sources {
        let g = start.dist(center(s));
        if g < best[s] {
            best[s] = g;
            heap.push(Entry { f: g + h(s), g, node: s });
        }
    }
    let step = 1.0 / n as f64;
    while let Some(Entry { g, node, .. }) = heap.pop() {
        if g > best[node] {
            continue;
        }
        if node == goal_node {
            break;
        }
        if is_sink[node] {
            let gg = g + center(node).dist(goal);
            if gg < best[goal_node] {
                best[goal_node] = gg;
                parent[goal_node] = node;
                heap.push(Entry { f: gg, g: gg, node: goal_node });
            }
        }
        let (i, j) = ((node / n) as isize, (node % n) as isize);
        for (di, dj) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < 0 || nj < 0 || ni >= n as isize || nj >= n as isize {
                continue;
            }
            let next = ni as usize * n + nj as usize;
            if blocked[next] {
                continue;
            }
            if di != 0 && dj != 0 && (blocked[(i as usize) * n + nj as usize] || blocked[ni as usize * n + j as usize]) {
                continue;
            }
            let cost = if di != 0 && dj != 0 { step * std::f64::consts::SQRT_2 } else { step };
            let ng = g + cost;
            if ng < best[next] {
                best[next] = ng;
                parent[next] = node;
                heap.push(Entry { f: ng + h(next), g: ng, node: next });
            }
        }
    }
    if !best[goal_node].is_finite() {
        return Err(PlanFailure::NoGridPath);
    }
    let mut cells = Vec::new();
    let mut cur = parent[goal_node];
    while cur != usize::MAX {
        cells.push(cur);
        cur = parent[cur];
    }
    cells.reverse();
    let mut path = Vec::with_capacity(cells.len() + 2);
    path.push(start);
    path.extend(cells.into_iter().map(center));
    path.push(goal);
    Ok(path)
}

/// Greedy line-of-sight shortcutting: from each kept point jump to the
/// farthest later point that is directly visible.
pub fn shortcut(path: &[Vec2], los: impl Fn(Vec2, Vec2, bool) -> bool) -> Vec<Vec2> {
    if path.len() <= 2 {
        return path.to_vec();
    }
    let mut out = vec![path[0]];
    let mut i = 0;
    let last = path.len() - 1;
    while i < last {
        let mut j = last;
        while j > i + 1 && !los(path[i], path[j], i == 0) {
            j -= 1;
        }
        out.push(path[j]);
        i = j;
    }
    out
}

/// Splits every segment into equal pieces no longer than `step`.
pub fn resample(path: &[Vec2], step: f64) -> Vec<Vec2> {
    let mut out = vec![path[0]];
    for w in path.windows(2) {
        let len = w[0].dist(w[1]);
        let pieces = (len / step).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            out.push(if k == pieces { w[1] } else { w[0].lerp(w[1], k as f64 / pieces as f64) });
        }
    }
    out
}
