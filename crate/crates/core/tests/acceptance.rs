//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion.
//!
//! Set `COA_ACCEPTANCE_CACHE` to a directory to reuse trained checkpoints
//! across runs; the key covers the run config, the dataset manifest, the
//! step count and the mode. By default every policy is trained fresh.
//! `COA_ACCEPTANCE_ONLY=1,2,3` restricts the run to the listed criteria.

use std::error::Error;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use coa_core::annotate::{
    annotate_grasp, annotate_movement, annotate_spatial, placement_clearance, AffordanceChain, BBox, GraspAffordance,
    MovementAffordance, ObjectAffordance, SpatialAffordance,
};
use coa_core::config::RunConfig;
use coa_core::dataset::{generate_dataset, Dataset};
use coa_core::eval::{run_suite, train_policy, AblationReport, ModeResult, Perturbation, PolicyController, RandomController};
use coa_core::expert::demonstrate;
use coa_core::geometry::{Shape, Vec2};
use coa_core::nn::{Mat, Tape};
use coa_core::pipeline::grasp_goal;
use coa_core::policy::checkpoint;
use coa_core::policy::tokenizer::encode_bag;
use coa_core::policy::train::{Example, NoiseDraw, Trainer};
use coa_core::policy::{film, Encoded, Mode, Policy, PolicyConfig};
use coa_core::prompt::text::TEMPLATES_PER_KIND;
use coa_core::prompt::{parse_textual, render_visual, textualize, StyleConfig};
use coa_core::raster::Raster;
use coa_core::tasks::{builtin, builtin_names, resolve};
use coa_core::world::{Role, TaskSpec, WorldState};

type Res<T> = Result<T, Box<dyn Error>>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Res<Outcome> {
    Ok(Outcome { pass, detail })
}

// Independent geometry used by the oracles.

fn seg_dist(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let (abx, aby) = (b.x - a.x, b.y - a.y);
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.x + t * abx, a.y + t * aby);
    ((p.x - qx).powi(2) + (p.y - qy).powi(2)).sqrt()
}

fn corners(s: &Shape) -> Vec<Vec2> {
    match s {
        Shape::Rect { min, max } => vec![*min, Vec2::new(max.x, min.y), *max, Vec2::new(min.x, max.y)],
        Shape::Polygon { vertices } => vertices.clone(),
        Shape::Circle { .. } => vec![],
    }
}

fn boundary_dist(s: &Shape, p: Vec2) -> f64 {
    match s {
        Shape::Circle { center, radius } => (p.dist(*center) - radius).abs(),
        _ => {
            let c = corners(s);
            (0..c.len()).map(|i| seg_dist(p, c[i], c[(i + 1) % c.len()])).fold(f64::INFINITY, f64::min)
        }
    }
}

fn inside(s: &Shape, p: Vec2) -> bool {
    match s {
        Shape::Circle { center, radius } => p.dist(*center) <= *radius,
        _ => {
            let c = corners(s);
            // Convex, counter-clockwise: left of every edge.
            (0..c.len()).all(|i| {
                let (a, b) = (c[i], c[(i + 1) % c.len()]);
                (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= -1e-12
            })
        }
    }
}

fn shape_dist(s: &Shape, p: Vec2) -> f64 {
    if inside(s, p) {
        0.0
    } else {
        boundary_dist(s, p)
    }
}

fn scene(i: usize, names: &[&str], cfg: &RunConfig) -> Res<(TaskSpec, WorldState)> {
    let task = builtin(names[i % names.len()])?;
    let world = WorldState::reset(&task, 10_000 + i as u64, &cfg.world)?;
    Ok((task, world))
}

fn criterion_1() -> Res<Outcome> {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let names = builtin_names();
    let r = cfg.world.gripper_radius;
    let n = 200usize;
    let (mut spatial_pts, mut spatial_bad, mut no_space) = (0usize, 0usize, 0usize);
    let (mut grasp_pts, mut grasp_bad) = (0usize, 0usize);
    let (mut paths, mut path_bad, mut unreachable) = (0usize, 0usize, 0usize);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let (task, world) = scene(i, &names, &cfg)?;
        let target = world.object(task.target).ok_or("missing target")?;
        let receptacle = world.object(task.receptacle).ok_or("missing receptacle")?;

        let grasp = annotate_grasp(&world, task.target, &cfg.annotate)?;
        for p in &grasp.points {
            grasp_pts += 1;
            if boundary_dist(&target.shape, *p) > cfg.annotate.grasp_epsilon {
                grasp_bad += 1;
            }
        }

        // Occupiers: anything attached to or overlapping the receptacle.
        let occupiers: Vec<&Shape> = world
            .objects
            .iter()
            .filter(|o| o.id != task.target && o.id != task.receptacle && o.role != Role::Receptacle)
            .filter(|o| {
                task.template(o.id).and_then(|t| t.attached_to) == Some(task.receptacle)
                    || o.shape.distance_to_shape(&receptacle.shape) <= 0.0
            })
            .map(|o| &o.shape)
            .collect();
        match annotate_spatial(&world, &task, cfg.annotate.spatial_points, &cfg.annotate, i as u64) {
            Ok(s) => {
                let clearance = placement_clearance(&world, Some(task.target), &cfg.annotate);
                let half_diag = std::f64::consts::SQRT_2 * 0.5 / n as f64;
                for p in &s.points {
                    spatial_pts += 1;
                    let (row, col) = (((p.y * n as f64) as usize).min(n - 1), ((p.x * n as f64) as usize).min(n - 1));
                    let cell = Vec2::new((col as f64 + 0.5) / n as f64, (row as f64 + 0.5) / n as f64);
                    // Occupied cells: every point of the cell is too close.
                    let cell_occupied = occupiers.iter().any(|o| shape_dist(o, cell) + half_diag < clearance);
                    let exact_ok = occupiers.iter().all(|o| shape_dist(o, *p) >= clearance - 1e-12);
                    if cell_occupied || !exact_ok || !inside(&receptacle.shape, *p) {
                        spatial_bad += 1;
                    }
                }
            }
            Err(_) => no_space += 1,
        }

        // Two plans per scene: start pose to a grasp goal, and a random
        // free pose to the receptacle's centre.
        let mut plans = Vec::new();
        if let Some(g) = grasp_goal(&world, &grasp, &cfg.annotate) {
            plans.push((world.clone(), g));
        }
        let mut w2 = world.clone();
        for _ in 0..100 {
            let p = Vec2::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
            if world.obstacles().all(|o| shape_dist(&o.shape, p) > r + cfg.annotate.path_clearance) {
                w2.gripper.pose = p;
                plans.push((w2, receptacle.shape.center()));
                break;
            }
        }
        for (w, goal) in plans {
            match annotate_movement(&w, goal, &cfg.annotate) {
                Ok(m) => {
                    paths += 1;
                    if !sweep_is_free(&w, &m, r, 1e-4) {
                        path_bad += 1;
                    }
                }
                Err(_) => unreachable += 1,
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        spatial_bad == 0 && grasp_bad == 0 && path_bad == 0 && secs < 120.0 && paths > 0 && spatial_pts > 0,
        format!(
            "spatial {}/{spatial_pts} ok ({no_space} scenes without free space), grasp {}/{grasp_pts} within eps, \
             paths {}/{paths} collision-free ({unreachable} unreachable goals), {secs:.1}s",
            spatial_pts - spatial_bad,
            grasp_pts - grasp_bad,
            paths - path_bad
        ),
    )
}

/// Dense sweep: samples spaced at most `tol` apart along every segment.
fn sweep_is_free(w: &WorldState, m: &MovementAffordance, r: f64, tol: f64) -> bool {
    let path: Vec<Vec2> = std::iter::once(w.gripper.pose).chain(m.path.iter().copied()).collect();
    path.windows(2).all(|s| {
        let k = (s[0].dist(s[1]) / tol).ceil().max(1.0) as usize;
        (0..=k).all(|j| {
            let p = s[0].lerp(s[1], j as f64 / k as f64);
            w.obstacles().all(|o| shape_dist(&o.shape, p) > r)
        })
    })
}

fn criterion_2() -> Res<Outcome> {
    let cfg = RunConfig::default();
    let names = builtin_names();
    let (mut steps, mut violations, mut selected) = (0usize, 0usize, 0usize);
    for i in 0..500 {
        let task = builtin(names[i % names.len()])?;
        let d = demonstrate(&task, 20_000 + i as u64, &cfg)?;
        for s in &d.steps {
            steps += 1;
            selected += s.mask.count();
            if s.world.gripper.held.is_some() && (s.mask.object || s.mask.grasp) {
                violations += 1;
            }
        }
    }
    let mean = selected as f64 / steps as f64;
    outcome(violations == 0 && mean < 4.0, format!("{steps} steps, {violations} violations, mean selected {mean:.3}"))
}

fn random_chain(rng: &mut ChaCha8Rng) -> AffordanceChain {
    const NAMES: [&str; 6] = ["red block", "blue cup", "green plate", "vase", "yellow sponge", "gray box"];
    let pts = |rng: &mut ChaCha8Rng, k: usize| -> Vec<Vec2> {
        (0..k).map(|_| Vec2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))).collect()
    };
    loop {
        let bits: [bool; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
        if !bits.iter().any(|b| *b) {
            continue;
        }
        let (x0, y0) = (rng.gen_range(0.0..0.8), rng.gen_range(0.0..0.8));
        let (k1, k2, k3) = (rng.gen_range(1..=5), rng.gen_range(1..=6), rng.gen_range(1..=8));
        return AffordanceChain {
            object: bits[0].then(|| ObjectAffordance {
                name: NAMES[rng.gen_range(0..NAMES.len())].to_string(),
                bbox: BBox::new(x0, y0, x0 + rng.gen_range(0.01..0.2), y0 + rng.gen_range(0.01..0.2)),
            }),
            grasp: bits[1].then(|| GraspAffordance { points: pts(rng, k1), object: 1 }),
            spatial: bits[2].then(|| SpatialAffordance { points: pts(rng, k2), receptacle: 2 }),
            movement: bits[3].then(|| MovementAffordance { path: pts(rng, k3) }),
        };
    }
}

fn max_coord_error(a: &AffordanceChain, b: &AffordanceChain) -> Option<f64> {
    if a.mask() != b.mask() {
        return None;
    }
    let mut err: f64 = 0.0;
    let mut cmp = |p: &[Vec2], q: &[Vec2]| -> bool {
        if p.len() != q.len() {
            return false;
        }
        for (u, v) in p.iter().zip(q) {
            err = err.max((u.x - v.x).abs()).max((u.y - v.y).abs());
        }
        true
    };
    if let (Some(x), Some(y)) = (&a.object, &b.object) {
        if x.name != y.name {
            return None;
        }
        let (bx, by) = (x.bbox, y.bbox);
        let ok = cmp(
            &[Vec2::new(bx.x_min, bx.y_min), Vec2::new(bx.x_max, bx.y_max)],
            &[Vec2::new(by.x_min, by.y_min), Vec2::new(by.x_max, by.y_max)],
        );
        if !ok {
            return None;
        }
    }
    let pairs = [
        (a.grasp.as_ref().map(|g| &g.points), b.grasp.as_ref().map(|g| &g.points)),
        (a.spatial.as_ref().map(|g| &g.points), b.spatial.as_ref().map(|g| &g.points)),
        (a.movement.as_ref().map(|g| &g.path), b.movement.as_ref().map(|g| &g.path)),
    ];
    for (p, q) in pairs {
        if let (Some(p), Some(q)) = (p, q) {
            if !cmp(p, q) {
                return None;
            }
        }
    }
    Some(err)
}

fn criterion_3() -> Res<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut trips, mut bad, mut worst) = (0usize, 0usize, 0.0f64);
    for _ in 0..10_000 {
        let chain = random_chain(&mut rng);
        for seed in 0..TEMPLATES_PER_KIND as u64 {
            trips += 1;
            let text = textualize(&chain, seed)?.text;
            match parse_textual(&text).ok().and_then(|back| max_coord_error(&chain, &back)) {
                Some(e) if e <= 5e-4 => worst = worst.max(e),
                _ => bad += 1,
            }
        }
    }

    // Locality: pixels farther than the stroke distance keep their value.
    let style = StyleConfig::default();
    let n = style.resolution;
    let (mut cases_bad, mut touched) = (0usize, 0usize);
    for _ in 0..1000 {
        let chain = random_chain(&mut rng);
        let mut obs = Raster::filled(n, n, [0, 0, 0]);
        for row in 0..n {
            for col in 0..n {
                obs.set(row, col, [rng.gen(), rng.gen(), rng.gen()]);
            }
        }
        let out = render_visual(&obs, &chain, &style)?;
        let px = |p: Vec2| Vec2::new(p.x * n as f64, p.y * n as f64);
        let mut strokes: Vec<(Vec2, Vec2, f64)> = Vec::new();
        if let Some(m) = &chain.movement {
            let path: Vec<Vec2> = m.path.iter().map(|p| px(*p)).collect();
            if path.len() == 1 {
                strokes.push((path[0], path[0], style.thin_width / 2.0));
            }
            for w in path.windows(2) {
                strokes.push((w[0], w[1], style.thin_width / 2.0));
            }
        }
        for pts in [chain.grasp.as_ref().map(|g| &g.points), chain.spatial.as_ref().map(|s| &s.points)].into_iter().flatten() {
            for p in pts {
                strokes.push((px(*p), px(*p), style.thick_width));
            }
        }
        if let Some(o) = &chain.object {
            let b = o.bbox;
            let c = [px(Vec2::new(b.x_min, b.y_min)), px(Vec2::new(b.x_max, b.y_min)), px(Vec2::new(b.x_max, b.y_max)), px(Vec2::new(b.x_min, b.y_max))];
            for i in 0..4 {
                strokes.push((c[i], c[(i + 1) % 4], style.thick_width / 2.0));
            }
        }
        let mut ok = true;
        for row in 0..n {
            for col in 0..n {
                let p = Vec2::new(col as f64 + 0.5, row as f64 + 0.5);
                let far = strokes.iter().all(|(a, b, reach)| seg_dist(p, *a, *b) > reach + 1e-9);
                if out.get(row, col) != obs.get(row, col) {
                    touched += 1;
                    if far {
                        ok = false;
                    }
                }
            }
        }
        if !ok {
            cases_bad += 1;
        }
    }
    outcome(
        bad == 0 && cases_bad == 0 && touched > 0,
        format!(
            "{}/{trips} roundtrips within 5e-4 (worst {worst:.2e}), {}/1000 renders local",
            trips - bad,
            1000 - cases_bad
        ),
    )
}

fn gradcheck_inputs(cfg: &PolicyConfig) -> Res<(Vec<Example>, NoiseDraw)> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut examples = Vec::new();
    for i in 0..2 {
        examples.push(Example {
            input: Encoded {
                patches: (0..cfg.patches() * cfg.patch_dim()).map(|_| rng.gen()).collect(),
                text: Some(encode_bag(
                    &format!("grasp at (0.{}12, 0.450); move along (0.100, 0.200) -> (0.3{i}0, 0.700)", 3 + i),
                    cfg,
                )?),
                proprio: [0.2 + 0.1 * i as f64, 0.4, 1.0, 0.0, 0.3, -0.5],
            },
            chunk: (0..cfg.action_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        });
    }
    let noise = NoiseDraw::sample(2 * cfg.noise_draws, cfg.action_dim(), cfg.diffusion_steps, &mut rng);
    Ok((examples, noise))
}

fn criterion_4() -> Res<Outcome> {
    let cfg = PolicyConfig::default();
    let (examples, noise) = gradcheck_inputs(&cfg)?;
    let batch: Vec<&Example> = examples.iter().collect();
    let mut trainer = Trainer::new(Policy::new(cfg.clone())?, 1);
    let mut tape = Tape::new();
    let loss = trainer.loss_tape(&mut tape, &batch, &noise)?;
    trainer.policy.params.zero_grads();
    tape.backward(loss, &mut trainer.policy.params);
    let grads = trainer.policy.params.grads.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut lines = Vec::new();
    let mut pass = true;
    for (label, prefix) in [("patch encoder", "visual."), ("text", "text."), ("fusion", "fusion."), ("denoiser", "denoiser.")] {
        // Entries the loss depends on; unused embedding rows have zero
        // gradient on both sides and would make the check vacuous.
        let group = trainer.policy.param_group(prefix);
        let live: Vec<(usize, usize, usize)> = group
            .iter()
            .flat_map(|&k| {
                let g = &grads[k];
                let cols = g.ncols();
                (0..g.len()).filter(move |&e| g[[e / cols, e % cols]].abs() > 1e-9).map(move |e| (k, e / cols, e % cols))
            })
            .collect();
        if live.len() < 100 {
            pass = false;
            lines.push(format!("{label}: only {} live parameters", live.len()));
            continue;
        }
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let (k, r, c) = live[rng.gen_range(0..live.len())];
            let h = 1e-5;
            let orig = trainer.policy.params.values[k][[r, c]];
            trainer.policy.params.values[k][[r, c]] = orig + h;
            let up = trainer.evaluate(&batch, &noise)?;
            trainer.policy.params.values[k][[r, c]] = orig - h;
            let down = trainer.evaluate(&batch, &noise)?;
            trainer.policy.params.values[k][[r, c]] = orig;
            let fd = (up - down) / (2.0 * h);
            let g = grads[k][[r, c]];
            worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6));
        }
        pass &= worst <= 1e-3;
        lines.push(format!("{label} {worst:.1e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let h = Mat::from_shape_fn((7, 13), |_| rng.gen_range(-100.0..100.0));
    let identity = film(&h, &[1.0; 13], &[0.0; 13])? == h;
    pass &= identity;
    outcome(pass, format!("max relative error: {}; FiLM(1,0) identity {identity}", lines.join(", ")))
}

/// Trains a policy, or loads it from the opt-in cache.
fn trained(ds: &Dataset, ds_dir: &Path, run: &RunConfig, steps: u64) -> Res<Policy> {
    let cache = std::env::var_os("COA_ACCEPTANCE_CACHE").map(PathBuf::from);
    let key = {
        let mut h = Sha256::new();
        h.update(serde_json::to_string(run)?);
        h.update(std::fs::read(ds_dir.join("manifest"))?);
        h.update(steps.to_le_bytes());
        hex::encode(h.finalize())
    };
    if let Some(dir) = &cache {
        let path = dir.join(format!("{key}.ckpt"));
        if path.exists() {
            return Ok(checkpoint::load(&path, Some(&checkpoint::config_hash(&run.policy)))?);
        }
    }
    let policy = train_policy(ds, run, steps, None)?;
    if let Some(dir) = &cache {
        std::fs::create_dir_all(dir)?;
        checkpoint::save(&policy, &dir.join(format!("{key}.ckpt")))?;
    }
    Ok(policy)
}

fn criterion_5(work: &Path) -> Res<Outcome> {
    let start = Instant::now();
    let run = RunConfig::default();
    let tasks = resolve("pick_place")?;
    let dir = work.join("pick_place");
    generate_dataset(&tasks, 100, &run, &dir)?;
    let ds = Dataset::load(&dir)?;
    let policy = trained(&ds, &dir, &run, run.train.steps)?;
    let trained_at = start.elapsed().as_secs_f64();
    let mut ctrl = PolicyController::new(&policy, &run);
    let r = run_suite(&mut ctrl, &tasks, &[Perturbation::None], 50, run.seed, &run)?;
    let random = run_suite(&mut RandomController, &tasks, &[Perturbation::None], 50, run.seed, &run)?;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r.success_rate >= 0.8 && random.success_rate <= 0.05,
        format!(
            "policy {}/{} ({:.1}%), random {}/{} ({:.1}%), {} steps trained in {trained_at:.0}s, {secs:.0}s total",
            r.successes,
            r.trials,
            100.0 * r.success_rate,
            random.successes,
            random.trials,
            100.0 * random.success_rate,
            run.train.steps
        ),
    )
}

fn ablation(work: &Path) -> Res<AblationReport> {
    let run = RunConfig::default();
    let dir = work.join("mixed");
    generate_dataset(&resolve(&run.ablate.train_tasks)?, run.expert.demos_per_task, &run, &dir)?;
    let ds = Dataset::load(&dir)?;
    let suites: Vec<(String, Vec<TaskSpec>)> =
        ["mixed", "probe_spatial", "probe_obstacle"].iter().map(|s| Ok((s.to_string(), resolve(s)?))).collect::<Res<_>>()?;
    let mut modes = Vec::new();
    for mode in Mode::ALL {
        let mut cfg = run.clone();
        cfg.policy.mode = mode;
        let policy = trained(&ds, &dir, &cfg, run.train.steps)?;
        let mut reports = Vec::new();
        for (name, suite) in &suites {
            let mut ctrl = PolicyController::new(&policy, &cfg);
            reports.push((name.clone(), run_suite(&mut ctrl, suite, &[Perturbation::None], 50, run.seed, &cfg)?));
        }
        modes.push(ModeResult { mode, reports });
    }
    let report = AblationReport { seed: run.seed, train_steps: run.train.steps, trials: 50, modes };
    print!("{}", report.table());
    Ok(report)
}

fn rate(a: &AblationReport, mode: Mode, suite: &str) -> Res<(f64, usize)> {
    let r = a.get(mode, suite).ok_or_else(|| format!("no {} result on {suite}", mode.name()))?;
    Ok((r.success_rate, r.trials))
}

fn criterion_6(a: &AblationReport) -> Res<Outcome> {
    let (full, n) = rate(a, Mode::Full, "mixed")?;
    let (vis, _) = rate(a, Mode::NoVisual, "mixed")?;
    let (txt, _) = rate(a, Mode::NoTextual, "mixed")?;
    outcome(
        full >= vis && vis >= txt && full - txt >= 0.03 && txt < vis && n >= 250,
        format!(
            "full {:.1}%, no_visual {:.1}%, no_textual {:.1}% over {n} trials each",
            100.0 * full,
            100.0 * vis,
            100.0 * txt
        ),
    )
}

fn criterion_7(a: &AblationReport) -> Res<Outcome> {
    let full = a.get(Mode::Full, "mixed").ok_or("no full result")?;
    let all = a.get(Mode::NoDynamicSelection, "mixed").ok_or("no no_dynamic_selection result")?;
    let ratio = full.mean_tokens / all.mean_tokens;
    let gap = (full.success_rate - all.success_rate).abs();
    outcome(
        ratio <= 0.6 && gap <= 0.03,
        format!(
            "token ratio {ratio:.3} ({:.1} vs {:.1}), success {:.1}% vs {:.1}% (gap {:.1}pp)",
            full.mean_tokens,
            all.mean_tokens,
            100.0 * full.success_rate,
            100.0 * all.success_rate,
            100.0 * gap
        ),
    )
}

fn criterion_8(a: &AblationReport) -> Res<Outcome> {
    let (full, n) = rate(a, Mode::Full, "probe_spatial")?;
    let (txt, _) = rate(a, Mode::NoTextual, "probe_spatial")?;
    outcome(
        full >= 0.7 && full > txt,
        format!("full {:.1}%, no_textual {:.1}% over {n} trials", 100.0 * full, 100.0 * txt),
    )
}

fn criterion_9(a: &AblationReport) -> Res<Outcome> {
    let (full, n) = rate(a, Mode::Full, "probe_obstacle")?;
    let (nm, _) = rate(a, Mode::NoDynamicNoMovement, "probe_obstacle")?;
    outcome(
        full - nm >= 0.10,
        format!("full {:.1}%, no_dynamic_no_movement {:.1}% over {n} trials", 100.0 * full, 100.0 * nm),
    )
}

fn files(dir: &Path) -> Res<Vec<(PathBuf, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir)?.to_path_buf(), std::fs::read(&p)?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn criterion_10(work: &Path) -> Res<Outcome> {
    let run = RunConfig::default();
    let tasks = resolve("place_plate,cleanup_vase")?;
    let (a, b) = (work.join("det_a"), work.join("det_b"));
    generate_dataset(&tasks, 3, &run, &a)?;
    generate_dataset(&tasks, 3, &run, &b)?;
    let same_data = files(&a)? == files(&b)?;
    let ds = Dataset::load(&a)?;
    let p1 = train_policy(&ds, &run, 100, None)?;
    let p2 = train_policy(&Dataset::load(&b)?, &run, 100, None)?;
    let same_ckpt = checkpoint::encode(&p1) == checkpoint::encode(&p2);
    let report = |p: &Policy| -> Res<String> {
        let mut ctrl = PolicyController::new(p, &run);
        Ok(run_suite(&mut ctrl, &tasks, &[Perturbation::None, Perturbation::Distractors], 2, run.seed, &run)?.to_jsonl())
    };
    let same_report = report(&p1)? == report(&p2)?;
    outcome(
        same_data && same_ckpt && same_report,
        format!("dataset bytes {same_data}, checkpoint bytes {same_ckpt}, report bytes {same_report}"),
    )
}

fn main() {
    // Let `cargo test -- <filter>` style invocations of other targets pass
    // through without running the long checks.
    // Behave like a libtest target under name filters and `--skip`.
    let (mut filters, mut skips) = (Vec::new(), Vec::new());
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        if a == "--skip" {
            skips.extend(args.next());
        } else if !a.starts_with('-') {
            filters.push(a);
        }
    }
    let matches = |f: &String| "acceptance".contains(f.as_str());
    if skips.iter().any(matches) || (!filters.is_empty() && !filters.iter().any(matches)) {
        return;
    }
    let only: Option<Vec<usize>> = std::env::var("COA_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().map_or(true, |o| o.contains(&n));
    let work = tempfile::tempdir().expect("temporary directory");
    let mut failed = 0;
    let mut report = |n: usize, name: &str, r: &dyn Fn() -> Res<Outcome>| {
        if !wanted(n) {
            return;
        }
        let r = r();
        let (ok, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("criterion {n:>2} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    };
    let w = work.path();
    report(1, "geometry and annotation", &criterion_1);
    report(2, "selection invariant", &criterion_2);
    report(3, "prompt roundtrip and locality", &criterion_3);
    report(4, "gradients and FiLM identity", &criterion_4);
    report(5, "training sanity", &|| criterion_5(w));
    if (6..=9).any(wanted) {
        match ablation(w) {
            Ok(a) => {
                report(6, "ablation ordering", &|| criterion_6(&a));
                report(7, "dynamic selection cost", &|| criterion_7(&a));
                report(8, "spatial placement probe", &|| criterion_8(&a));
                report(9, "obstacle avoidance probe", &|| criterion_9(&a));
            }
            Err(e) => {
                let msg = e.to_string();
                for (n, name) in [(6, "ablation ordering"), (7, "dynamic selection cost"), (8, "spatial placement probe"), (9, "obstacle avoidance probe")] {
                    report(n, name, &|| Err(format!("ablation failed: {msg}").into()));
                }
            }
        }
    }
    report(10, "determinism", &|| criterion_10(w));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
