use super::{CompleterError, CompletionResponse, Result};
use crate::world::{Cell, GridScene, Subgoal, SubgoalAction};

/// Ground-truth completion: walks the containment chain of the best
/// instance of the current subgoal's object and emits a `GotoLocation` /
/// `OpenObject` pair for every closed receptacle in the way.
///
/// The instance is the one with the fewest closed enclosures, lowest id
/// first. Instances on `exclude` cells are skipped unless nothing else is
/// left. Every emitted subgoal carries the true cell as its resolved position.
pub fn oracle_complete(scene: &GridScene, current: &Subgoal, exclude: &[Cell]) -> Result<CompletionResponse> {
    let cost = |id: usize| {
        let o = scene.object(id);
        let mut n = scene.closed_ancestors(id).len();
        if current.action == SubgoalAction::PutObject && o.openable() && !o.open {
            n += 1;
        }
        n
    };
    let candidates: Vec<usize> = scene
        .instances(current.object)
        .filter(|o| o.cell.is_some())
        .map(|o| o.id)
        .collect();
    let allowed: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&id| !exclude.contains(&scene.object(id).cell.expect("filtered")))
        .collect();
    let pool = if allowed.is_empty() { &candidates } else { &allowed };
    let target = pool
        .iter()
        .copied()
        .min_by_key(|&id| (cost(id), id))
        .ok_or(CompleterError::TargetAbsent(current.object))?;

    let mut subgoals = Vec::new();
    let mut blockers = Vec::new();
    for anc in scene.closed_ancestors(target) {
        let a = scene.object(anc);
        let cell = a.cell;
        blockers.push(a.category);
        for action in [SubgoalAction::GotoLocation, SubgoalAction::OpenObject] {
            subgoals.push(Subgoal {
                action,
                object: a.category,
                resolved_position: cell,
            });
        }
    }
    let t = scene.object(target);
    if current.action == SubgoalAction::PutObject && t.openable() && !t.open {
        blockers.push(t.category);
        for action in [SubgoalAction::GotoLocation, SubgoalAction::OpenObject] {
            subgoals.push(Subgoal {
                action,
                object: t.category,
                resolved_position: t.cell,
            });
        }
    }
    subgoals.push(Subgoal {
        resolved_position: t.cell,
        ..*current
    });

    let reasoning = if blockers.is_empty() {
        format!(
            "The {} is reachable, so the current subgoal can be done directly.",
            current.object
        )
    } else {
        let names: Vec<&str> = blockers.iter().map(|c| c.name()).collect();
        format!(
            "The {} is behind the closed {}, which must be opened first.",
            current.object,
            names.join(" and ")
        )
    };
    Ok(CompletionResponse { reasoning, subgoals })
}
