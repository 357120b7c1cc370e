//! Deterministic grid-world household simulator.
//!
//! A scene is a single room on a 24×24 grid. Furniture occupies one
//! non-walkable cell each; small objects sit inside receptacles or loose on
//! the floor. The agent acts through 13 primitive actions and perceives a
//! 90° cone of range 5 that is blocked by walls. Objects inside a closed
//! receptacle are never visible.

mod catalog;
mod expert;
mod goal;
mod io;
pub mod path;
mod scene;
mod sim;
mod subgoal;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use catalog::{possible_landmarks, Category, UnknownCategory};
pub use expert::{expert_plan, ExpertPlan, ExpertStep, PlannerError};
pub use goal::{check_goal, GoalReport};
pub use io::{read_scenes, write_scenes, SceneIoError, SceneRecord, SCENE_FORMAT_VERSION};
pub use scene::{
    generate_scene, generate_scene_with, Condition, GridScene, LayoutFamily, ObjectInstance, SceneParams, StateFlag,
    TaskSpec, TaskTargets, TaskType, Terrain, GRID_SIZE,
};
pub use sim::{
    observe, visible_cells, ActionKind, AgentPose, Event, Observation, ObservedObject, PrimitiveAction, VisibleCell,
    WorldState, MAX_ERRORS, MAX_STEPS, VIEW_RANGE,
};
pub use subgoal::{Subgoal, SubgoalAction};

/// Grid position; `row` grows southwards, `col` eastwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Neighbour one step along `h`, if it stays non-negative.
    pub fn step(self, h: Heading) -> Option<Cell> {
        self.offset(h.delta().0, h.delta().1)
    }

    pub fn offset(self, dr: i64, dc: i64) -> Option<Cell> {
        let r = self.row as i64 + dr;
        let c = self.col as i64 + dc;
        (r >= 0 && c >= 0).then(|| Cell::new(r as usize, c as usize))
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::N => (-1, 0),
            Heading::E => (0, 1),
            Heading::S => (1, 0),
            Heading::W => (0, -1),
        }
    }

    pub fn left(self) -> Heading {
        match self {
            Heading::N => Heading::W,
            Heading::W => Heading::S,
            Heading::S => Heading::E,
            Heading::E => Heading::N,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Look {
    Up,
    Level,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomType {
    Kitchen,
    Bathroom,
    Bedroom,
    LivingRoom,
}

impl RoomType {
    pub const ALL: [RoomType; 4] = [
        RoomType::Kitchen,
        RoomType::Bathroom,
        RoomType::Bedroom,
        RoomType::LivingRoom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RoomType::Kitchen => "kitchen",
            RoomType::Bathroom => "bathroom",
            RoomType::Bedroom => "bedroom",
            RoomType::LivingRoom => "livingroom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for RoomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
