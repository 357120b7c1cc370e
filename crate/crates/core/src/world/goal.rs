use serde::{Deserialize, Serialize};

use super::{Condition, TaskSpec, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalReport {
    pub satisfied: Vec<bool>,
    pub satisfied_count: usize,
    pub total: usize,
    /// All conditions hold.
    pub success: bool,
}

/// Evaluates every goal condition against the current state.
pub fn check_goal(state: &WorldState, task: &TaskSpec) -> GoalReport {
    let satisfied: Vec<bool> = task.goal_conditions.iter().map(|c| holds(state, c)).collect();
    let satisfied_count = satisfied.iter().filter(|&&b| b).count();
    GoalReport {
        total: satisfied.len(),
        success: satisfied_count == satisfied.len(),
        satisfied_count,
        satisfied,
    }
}

fn holds(state: &WorldState, cond: &Condition) -> bool {
    let objs = &state.scene.objects;
    match *cond {
        Condition::In {
            object,
            receptacle,
            count,
        } => {
            objs.iter()
                .filter(|o| o.category == object && !o.held)
                .filter(|o| o.contained_in.is_some_and(|r| objs[r].category == receptacle))
                .count()
                >= count
        }
        Condition::State { object, flag } => objs.iter().any(|o| o.category == object && o.flag(flag)),
        Condition::Holding { object } => state.held.is_some_and(|h| objs[h].category == object),
    }
}
