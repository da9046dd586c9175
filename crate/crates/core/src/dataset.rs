//! Demonstration datasets on disk.
//!
//! ```text
//! <dir>/manifest               key = value lines: counts and length statistics
//! <dir>/config.json            run config the episodes were generated with
//! <dir>/tasks.json             task specs, indexed by `task_index`
//! <dir>/episodes/00000.jsonl   header line, then one line per step
//! <dir>/episodes/00000/000.png observation before each step
//! ```
//!
//! Step lines hold the proprioception (`x`, `y`, `aperture`, `held`,
//! `last_dx`, `last_dy`), the label action (`dx`, `dy`, `command`), the
//! executed movement (`exec_dx`, `exec_dy`), the phase, the
//! mask bits as a `"1101"` string in object/grasp/spatial/movement order,
//! all four label components, the paraphrase seed and the textual
//! affordance of the selected components. Coordinates are rounded to six
//! decimals.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{
    AffordanceChain, AffordanceMask, BBox, GraspAffordance, MovementAffordance, ObjectAffordance, SpatialAffordance,
};
use crate::config::RunConfig;
use crate::expert::{demonstrate, Demonstration, ExpertError};
use crate::geometry::Vec2;
use crate::pipeline::{prompt_input, PipelineError};
use crate::policy::train::Example;
use crate::policy::{normalize_action, Mode};
use crate::raster::{Raster, RasterError};
use crate::seed::{derive, STREAM_DATASET};
use crate::select::Phase;
use crate::world::{Action, Camera, Proprioception, TaskSpec};

pub const FORMAT: &str = "coa-dataset/1";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset file {path}: {message}")]
    Format { path: String, message: String },
    #[error("invalid request: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

fn r6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn pts(p: &[Vec2]) -> Vec<[f64; 2]> {
    p.iter().map(|v| [r6(v.x), r6(v.y)]).collect()
}

fn vecs(p: &[[f64; 2]]) -> Vec<Vec2> {
    p.iter().map(|v| Vec2::new(v[0], v[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub episode: usize,
    pub task: String,
    pub task_index: usize,
    pub demo_index: usize,
    pub seed: u64,
    pub reset_seed: u64,
    pub attempt: usize,
    pub steps: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub name: String,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub aperture: f64,
    pub held: bool,
    pub last_dx: f64,
    pub last_dy: f64,
    pub dx: f64,
    pub dy: f64,
    pub command: f64,
    pub exec_dx: f64,
    pub exec_dy: f64,
    pub phase: Phase,
    pub mask: String,
    pub object: ObjectRecord,
    pub grasp: Vec<[f64; 2]>,
    pub spatial: Vec<[f64; 2]>,
    pub movement: Vec<[f64; 2]>,
    pub paraphrase_seed: u64,
    pub text: String,
    /// Observation path relative to the episodes directory.
    pub image: String,
}

pub fn mask_bits(m: AffordanceMask) -> String {
    m.bits().iter().map(|b| if *b { '1' } else { '0' }).collect()
}

pub fn parse_mask(s: &str) -> Option<AffordanceMask> {
    let b: Vec<bool> = s.chars().map(|c| c == '1').collect();
    (b.len() == 4 && s.chars().all(|c| c == '0' || c == '1')).then(|| AffordanceMask::from_bits([b[0], b[1], b[2], b[3]]))
}

impl StepRecord {
    pub fn proprioception(&self) -> Proprioception {
        Proprioception {
            pose: Vec2::new(self.x, self.y),
            aperture: self.aperture,
            held: self.held,
            last_delta: Vec2::new(self.last_dx, self.last_dy),
        }
    }

    /// Label action.
    pub fn action(&self) -> Action {
        Action::new(self.dx, self.dy, self.command)
    }

    /// Action sent to the world; replaying these reproduces the episode.
    pub fn executed(&self) -> Action {
        Action::new(self.exec_dx, self.exec_dy, self.command)
    }

    /// Full label chain; ids come from the task.
    pub fn label(&self, task: &TaskSpec) -> AffordanceChain {
        let b = self.object.bbox;
        AffordanceChain {
            object: Some(ObjectAffordance { name: self.object.name.clone(), bbox: BBox::new(b[0], b[1], b[2], b[3]) }),
            grasp: Some(GraspAffordance { points: vecs(&self.grasp), object: task.target }),
            spatial: Some(SpatialAffordance { points: vecs(&self.spatial), receptacle: task.receptacle }),
            movement: Some(MovementAffordance { path: vecs(&self.movement) }),
        }
    }

    pub fn selection(&self) -> Option<AffordanceMask> {
        parse_mask(&self.mask)
    }
}

fn step_record(demo: &Demonstration, i: usize, episode: usize) -> StepRecord {
    let s = &demo.steps[i];
    let p = s.world.proprioception();
    let label = &s.label;
    let obj = label.object.as_ref().expect("labels carry every component");
    let b = obj.bbox;
    StepRecord {
        step: i,
        x: r6(p.pose.x),
        y: r6(p.pose.y),
        aperture: r6(p.aperture),
        held: p.held,
        last_dx: r6(p.last_delta.x),
        last_dy: r6(p.last_delta.y),
        dx: r6(s.action.dx),
        dy: r6(s.action.dy),
        command: r6(s.action.aperture),
        exec_dx: r6(s.executed.dx),
        exec_dy: r6(s.executed.dy),
        phase: s.phase,
        mask: mask_bits(s.mask),
        object: ObjectRecord { name: obj.name.clone(), bbox: [r6(b.x_min), r6(b.y_min), r6(b.x_max), r6(b.y_max)] },
        grasp: pts(&label.grasp.as_ref().expect("labels carry every component").points),
        spatial: pts(&label.spatial.as_ref().expect("labels carry every component").points),
        movement: pts(&label.movement.as_ref().expect("labels carry every component").path),
        paraphrase_seed: s.paraphrase_seed,
        text: s.text.clone(),
        image: format!("{episode:05}/{i:03}.png"),
    }
}

/// Seed of demo `demo_index` of task `task_index`.
pub fn episode_seed(seed: u64, task_index: usize, demo_index: usize) -> u64 {
    derive(seed, &[STREAM_DATASET, task_index as u64, demo_index as u64])
}

/// Per-task counts and length statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Option<Manifest> {
        let mut entries = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once(" = ")?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Some(Manifest { entries })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn demos_parallel(jobs: &[(usize, usize)], tasks: &[TaskSpec], cfg: &RunConfig) -> Vec<Result<Demonstration, ExpertError>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let run = |&(t, d): &(usize, usize)| demonstrate(&tasks[t], episode_seed(cfg.seed, t, d), cfg);
    if workers <= 1 {
        return jobs.iter().map(run).collect();
    }
    let chunk = jobs.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs.chunks(chunk).map(|c| s.spawn(move || c.iter().map(run).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("demo worker panicked")).collect()
    })
}

/// Generates `per_task` demos for each task under `dir`, replacing any
/// episodes already there. Demos run in parallel; files are written in
/// episode order by this thread alone.
pub fn generate_dataset(tasks: &[TaskSpec], per_task: usize, cfg: &RunConfig, dir: &Path) -> Result<Manifest, DatasetError> {
    if tasks.is_empty() || per_task == 0 {
        return Err(DatasetError::Invalid("need at least one task and one demo per task".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..tasks.len()).flat_map(|t| (0..per_task).map(move |d| (t, d))).collect();
    let demos = demos_parallel(&jobs, tasks, cfg);

    let episodes_dir = dir.join("episodes");
    if episodes_dir.exists() {
        fs::remove_dir_all(&episodes_dir).map_err(io_err(&episodes_dir))?;
    }
    fs::create_dir_all(&episodes_dir).map_err(io_err(&episodes_dir))?;

    let mut entries = BTreeMap::new();
    let mut lengths: Vec<Vec<usize>> = vec![Vec::new(); tasks.len()];
    for (episode, (&(t, d), demo)) in jobs.iter().zip(demos).enumerate() {
        let demo = demo?;
        let header = EpisodeHeader {
            episode,
            task: tasks[t].name.clone(),
            task_index: t,
            demo_index: d,
            seed: demo.seed,
            reset_seed: demo.reset_seed,
            attempt: demo.attempt,
            steps: demo.steps.len(),
            success: demo.success,
        };
        let mut text = serde_json::to_string(&header).expect("header serializes");
        text.push('\n');
        let img_dir = episodes_dir.join(format!("{episode:05}"));
        fs::create_dir_all(&img_dir).map_err(io_err(&img_dir))?;
        for i in 0..demo.steps.len() {
            let rec = step_record(&demo, i, episode);
            demo.steps[i].world.render(Camera::Topdown).save_png(&episodes_dir.join(&rec.image))?;
            text.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            text.push('\n');
        }
        write_file(&episodes_dir.join(format!("{episode:05}.jsonl")), text.as_bytes())?;
        lengths[t].push(demo.steps.len());
    }

    let total: usize = lengths.iter().flatten().sum();
    entries.insert("format".into(), FORMAT.into());
    entries.insert("seed".into(), cfg.seed.to_string());
    entries.insert("config_hash".into(), cfg.hash());
    entries.insert("tasks".into(), tasks.iter().map(|t| t.name.as_str()).collect::<Vec<_>>().join(","));
    entries.insert("demos_per_task".into(), per_task.to_string());
    entries.insert("episodes".into(), jobs.len().to_string());
    entries.insert("steps".into(), total.to_string());
    for (task, l) in tasks.iter().zip(&lengths) {
        let key = |k: &str| format!("task.{}.{k}", task.name);
        entries.insert(key("episodes"), l.len().to_string());
        entries.insert(key("mean_length"), format!("{:.6}", l.iter().sum::<usize>() as f64 / l.len() as f64));
        entries.insert(key("min_length"), l.iter().min().expect("per_task > 0").to_string());
        entries.insert(key("max_length"), l.iter().max().expect("per_task > 0").to_string());
    }
    let manifest = Manifest { entries };
    write_file(&dir.join("manifest"), manifest.render().as_bytes())?;
    let mut cfg_json = serde_json::to_string_pretty(cfg).expect("config serializes");
    cfg_json.push('\n');
    write_file(&dir.join("config.json"), cfg_json.as_bytes())?;
    let mut tasks_json = serde_json::to_string_pretty(tasks).expect("tasks serialize");
    tasks_json.push('\n');
    write_file(&dir.join("tasks.json"), tasks_json.as_bytes())?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub header: EpisodeHeader,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub config: RunConfig,
    pub tasks: Vec<TaskSpec>,
    pub episodes: Vec<Episode>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Format { path: path.display().to_string(), message: e.to_string() })
}

pub fn load_episode(path: &Path) -> Result<Episode, DatasetError> {
    let fmt = |message: String| DatasetError::Format { path: path.display().to_string(), message };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().ok_or_else(|| fmt("empty episode file".into()))?.map_err(io_err(path))?;
    let header: EpisodeHeader = serde_json::from_str(&first).map_err(|e| fmt(e.to_string()))?;
    let mut steps = Vec::with_capacity(header.steps);
    for line in lines {
        let line = line.map_err(io_err(path))?;
        let rec: StepRecord = serde_json::from_str(&line).map_err(|e| fmt(e.to_string()))?;
        if rec.selection().is_none() {
            return Err(fmt(format!("bad mask {:?}", rec.mask)));
        }
        steps.push(rec);
    }
    if steps.len() != header.steps {
        return Err(fmt(format!("header says {} steps, found {}", header.steps, steps.len())));
    }
    Ok(Episode { header, steps })
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Dataset, DatasetError> {
        let mpath = dir.join("manifest");
        let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
        let manifest = Manifest::parse(&text)
            .ok_or_else(|| DatasetError::Format { path: mpath.display().to_string(), message: "not key = value lines".into() })?;
        let config: RunConfig = read_json(&dir.join("config.json"))?;
        let tasks: Vec<TaskSpec> = read_json(&dir.join("tasks.json"))?;
        let count: usize = manifest.get("episodes").and_then(|v| v.parse().ok()).ok_or_else(|| DatasetError::Format {
            path: mpath.display().to_string(),
            message: "missing episode count".into(),
        })?;
        let episodes = (0..count)
            .map(|i| load_episode(&dir.join("episodes").join(format!("{i:05}.jsonl"))))
            .collect::<Result<Vec<_>, _>>()?;
        for e in &episodes {
            if e.header.task_index >= tasks.len() {
                return Err(DatasetError::Format {
                    path: dir.display().to_string(),
                    message: format!("episode {} names task index {}", e.header.episode, e.header.task_index),
                });
            }
        }
        Ok(Dataset { dir: dir.to_path_buf(), manifest, config, tasks, episodes })
    }

    pub fn observation(&self, step: &StepRecord) -> Result<Raster, DatasetError> {
        Ok(Raster::load_png(&self.dir.join("episodes").join(&step.image))?)
    }

    /// Supervised pairs for a policy trained under `run.policy.mode`: the
    /// label chain masked for that mode, the stored observation and the
    /// next `horizon` actions, padded with the release command.
    pub fn examples(&self, run: &RunConfig) -> Result<Vec<Example>, DatasetError> {
        let policy = &run.policy;
        let mode: Mode = policy.mode;
        let pad = normalize_action(&Action::new(0.0, 0.0, 1.0), policy.max_step);
        let mut out = Vec::new();
        for ep in &self.episodes {
            let task = &self.tasks[ep.header.task_index];
            let actions: Vec<[f64; 3]> = ep.steps.iter().map(|s| normalize_action(&s.action(), policy.max_step)).collect();
            for (t, s) in ep.steps.iter().enumerate() {
                let obs = self.observation(s)?;
                let selected = s.label(task).masked(mode.mask(s.phase));
                let p = prompt_input(&obs, &s.proprioception(), &selected, policy, &run.style, s.paraphrase_seed)?;
                let chunk = (0..policy.horizon).flat_map(|k| *actions.get(t + k).unwrap_or(&pad)).collect();
                out.push(Example { input: p.input, chunk });
            }
        }
        Ok(out)
    }
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}
