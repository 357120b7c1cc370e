//! JSON Lines scene/task files.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AgentPose, GridScene, LayoutFamily, ObjectInstance, RoomType, TaskSpec, Terrain};

pub const SCENE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneIoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unsupported scene format version {version}")]
    Version { line: usize, version: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One scene and its task, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub v: u32,
    pub seed: u64,
    pub room_type: RoomType,
    pub hard: bool,
    #[serde(default)]
    pub layout: LayoutFamily,
    pub grid: Vec<String>,
    pub spawn: AgentPose,
    pub objects: Vec<ObjectInstance>,
    pub task: TaskSpec,
}

impl SceneRecord {
    pub fn new(scene: &GridScene, task: &TaskSpec) -> Self {
        Self {
            v: SCENE_FORMAT_VERSION,
            seed: scene.seed,
            room_type: scene.room_type,
            hard: task.hard,
            layout: scene.layout,
            grid: scene.grid_rows(),
            spawn: scene.spawn,
            objects: scene.objects.clone(),
            task: task.clone(),
        }
    }

    pub fn into_parts(self) -> Result<(GridScene, TaskSpec), String> {
        let height = self.grid.len();
        let width = self.grid.first().map_or(0, |r| r.chars().count());
        let mut terrain = Vec::with_capacity(width * height);
        for (r, row) in self.grid.iter().enumerate() {
            if row.chars().count() != width {
                return Err(format!("grid row {r} has the wrong width"));
            }
            for ch in row.chars() {
                terrain.push(Terrain::from_symbol(ch).ok_or_else(|| format!("unknown terrain {ch:?}"))?);
            }
        }
        let scene = GridScene {
            width,
            height,
            terrain,
            objects: self.objects,
            room_type: self.room_type,
            seed: self.seed,
            layout: self.layout,
            spawn: self.spawn,
        };
        scene.validate()?;
        Ok((scene, self.task))
    }
}

pub fn write_scenes<W: Write>(mut w: W, scenes: &[(GridScene, TaskSpec)]) -> std::io::Result<()> {
    for (s, t) in scenes {
        let line = serde_json::to_string(&SceneRecord::new(s, t)).expect("scene serializes");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_scenes<R: BufRead>(r: R) -> Result<Vec<(GridScene, TaskSpec)>, SceneIoError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let raw: serde_json::Value = serde_json::from_str(&line).map_err(|e| SceneIoError::Parse {
            line: n,
            message: e.to_string(),
        })?;
        let v = raw.get("v").and_then(|v| v.as_u64()).unwrap_or(0);
        if v != SCENE_FORMAT_VERSION as u64 {
            return Err(SceneIoError::Version { line: n, version: v });
        }
        let rec: SceneRecord = serde_json::from_value(raw).map_err(|e| SceneIoError::Parse {
            line: n,
            message: e.to_string(),
        })?;
        out.push(
            rec.into_parts()
                .map_err(|message| SceneIoError::Parse { line: n, message })?,
        );
    }
    Ok(out)
}
