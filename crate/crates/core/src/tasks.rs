//! Built-in task families and task-file loading.

use std::path::Path;

use thiserror::Error;

use crate::world::TaskSpec;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task or suite {0:?}")]
    Unknown(String),
    #[error("task file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const BUILTIN: [(&str, &str); 7] = [
    ("place_plate", include_str!("../tasks/place_plate.toml")),
    ("place_plate_occupied", include_str!("../tasks/place_plate_occupied.toml")),
    ("cleanup_vase", include_str!("../tasks/cleanup_vase.toml")),
    ("put_in_region", include_str!("../tasks/put_in_region.toml")),
    ("wipe_path", include_str!("../tasks/wipe_path.toml")),
    ("precise_point", include_str!("../tasks/precise_point.toml")),
    ("probe_wall", include_str!("../tasks/probe_wall.toml")),
];

/// The obstacle-free pick-and-place family.
pub const PICK_PLACE: &[&str] = &["place_plate"];
/// Five families used for training and the ablations.
pub const MIXED: &[&str] = &["place_plate_occupied", "cleanup_vase", "put_in_region", "wipe_path", "precise_point"];
/// Receptacle with three occupiers.
pub const PROBE_SPATIAL: &[&str] = &["place_plate_occupied"];
/// Obstacle layout absent from the training families.
pub const PROBE_OBSTACLE: &[&str] = &["probe_wall"];

pub fn parse_task(text: &str, origin: &str) -> Result<TaskSpec, TaskError> {
    let task: TaskSpec =
        toml::from_str(text).map_err(|e| TaskError::Parse { path: origin.to_string(), message: e.to_string() })?;
    task.validate().map_err(|e| TaskError::Parse { path: origin.to_string(), message: e.to_string() })?;
    Ok(task)
}

pub fn builtin(name: &str) -> Result<TaskSpec, TaskError> {
    let (_, text) = BUILTIN.iter().find(|(n, _)| *n == name).ok_or_else(|| TaskError::Unknown(name.to_string()))?;
    parse_task(text, name)
}

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

/// Resolves a comma-separated list whose entries are built-in task names,
/// the suite names `pick_place`, `mixed`, `probe_spatial`, `probe_obstacle`,
/// or paths to task files.
pub fn resolve(spec: &str) -> Result<Vec<TaskSpec>, TaskError> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let suite = match item {
            "pick_place" => Some(PICK_PLACE),
            "mixed" => Some(MIXED),
            "probe_spatial" => Some(PROBE_SPATIAL),
            "probe_obstacle" => Some(PROBE_OBSTACLE),
            _ => None,
        };
        if let Some(names) = suite {
            for n in names {
                out.push(builtin(n)?);
            }
        } else if item.ends_with(".toml") {
            let text = std::fs::read_to_string(Path::new(item))
                .map_err(|source| TaskError::Io { path: item.to_string(), source })?;
            out.push(parse_task(&text, item)?);
        } else {
            out.push(builtin(item)?);
        }
    }
    if out.is_empty() {
        return Err(TaskError::Unknown(spec.to_string()));
    }
    Ok(out)
}
