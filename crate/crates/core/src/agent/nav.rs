use thiserror::Error;

use crate::mapper::SemanticMap;
use crate::world::path::{distances, plan_to_face};
use crate::world::{ActionKind, AgentPose, Cell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NavError {
    #[error("{0} cannot be reached through known free cells")]
    Unreachable(Cell),
    #[error("map is fully explored")]
    FullyExplored,
}

/// Shortest move/rotate sequence over known free cells that ends next to
/// and facing `to`. Empty when already in place.
pub fn plan_path(map: &SemanticMap, from: &AgentPose, to: Cell) -> Result<Vec<ActionKind>, NavError> {
    plan_to_face(from.cell, from.heading, to, (map.height, map.width), |c| {
        map.known_free(c)
    })
    .ok_or(NavError::Unreachable(to))
}

/// Like [`plan_path`], but unexplored cells count as free.
pub fn plan_path_optimistic(map: &SemanticMap, from: &AgentPose, to: Cell) -> Result<Vec<ActionKind>, NavError> {
    plan_to_face(from.cell, from.heading, to, (map.height, map.width), |c| {
        map.known_free(c) || !map.explored(c)
    })
    .ok_or(NavError::Unreachable(to))
}

/// Nearest frontier cell (explored, free, next to unexplored space) by path
/// length over known free cells; row-major order breaks ties.
pub fn explore_frontier(map: &SemanticMap, pose: &AgentPose) -> Result<Cell, NavError> {
    let dist = distances(pose.cell, (map.height, map.width), |c| map.known_free(c));
    map.frontier()
        .into_iter()
        .filter_map(|c| dist[map.index(c)].map(|d| (d, c)))
        .min()
        .map(|(_, c)| c)
        .ok_or(NavError::FullyExplored)
}
