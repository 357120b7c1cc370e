//! Omniscient expert planner used for L* and dataset collection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::path::plan_to_face;
use super::{
    check_goal, ActionKind, GridScene, PrimitiveAction, Subgoal, SubgoalAction, TaskSpec, TaskType, WorldState,
};

/// One interaction subgoal of the expert, bound to an object instance and to
/// the step instruction it serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertStep {
    pub subgoal: Subgoal,
    pub target: usize,
    pub instruction: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPlan {
    /// Interaction subgoals, including the open steps the instructions omit.
    pub steps: Vec<ExpertStep>,
    /// Primitive actions from spawn, ending with `Stop`.
    pub trajectory: Vec<PrimitiveAction>,
    /// Index into `trajectory` where each step's navigation begins.
    pub step_starts: Vec<usize>,
}

impl ExpertPlan {
    /// Expert path length L*.
    pub fn len(&self) -> usize {
        self.trajectory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error("object {0} cannot be reached")]
    Unreachable(usize),
    #[error("{action} failed: {message}")]
    ActionFailed { action: String, message: String },
    #[error("plan finished but the goal is not satisfied")]
    GoalUnmet,
    #[error("task is missing a required binding")]
    MissingBinding,
}

fn core_steps(task: &TaskSpec) -> Result<Vec<(SubgoalAction, usize, usize)>, PlannerError> {
    use SubgoalAction::*;
    let t = &task.targets;
    let need = |o: Option<usize>| o.ok_or(PlannerError::MissingBinding);
    let x = t.object;
    Ok(match task.task_type {
        TaskType::PickPlace => vec![(PickupObject, x, 0), (PutObject, need(t.destination)?, 1)],
        TaskType::Pick2Place => {
            let z = need(t.destination)?;
            vec![
                (PickupObject, x, 0),
                (PutObject, z, 1),
                (PickupObject, need(t.object2)?, 2),
                (PutObject, z, 3),
            ]
        }
        TaskType::StackPlace => {
            let v = need(t.vessel)?;
            vec![
                (PickupObject, x, 0),
                (PutObject, v, 1),
                (PickupObject, v, 2),
                (PutObject, need(t.destination)?, 2),
            ]
        }
        TaskType::CleanPlace | TaskType::HeatPlace | TaskType::CoolPlace => {
            let app = need(t.appliance)?;
            let z = need(t.destination)?;
            let mut v = Vec::new();
            let mut k = 0;
            if t.slice {
                v.push((PickupObject, need(t.tool)?, 0));
                v.push((SliceObject, x, 1));
                v.push((PutObject, need(t.tool_rest)?, 2));
                k = 3;
            }
            v.push((PickupObject, x, k));
            v.push((PutObject, app, k + 1));
            if task.task_type != TaskType::CoolPlace {
                v.push((ToggleObjectOn, app, k + 1));
            }
            v.push((PickupObject, x, k + 1));
            v.push((PutObject, z, k + 2));
            v
        }
        TaskType::Examine => vec![(PickupObject, x, 0), (ToggleObjectOn, need(t.lamp)?, 1)],
    })
}

/// Plans and verifies an error-free solution using full scene knowledge.
pub fn expert_plan(scene: &GridScene, task: &TaskSpec) -> Result<ExpertPlan, PlannerError> {
    let mut state = WorldState::new(scene.clone());
    let mut plan = ExpertPlan {
        steps: Vec::new(),
        trajectory: Vec::new(),
        step_starts: Vec::new(),
    };
    for (action, target, instruction) in core_steps(task)? {
        let mut pre: Vec<usize> = state.scene.closed_ancestors(target);
        if action == SubgoalAction::PutObject {
            let o = state.scene.object(target);
            if o.openable() && !o.open {
                pre.push(target);
            }
        }
        for anc in pre {
            run_step(&mut state, &mut plan, SubgoalAction::OpenObject, anc, instruction)?;
        }
        run_step(&mut state, &mut plan, action, target, instruction)?;
    }
    exec(&mut state, &mut plan, PrimitiveAction::nav(ActionKind::Stop))?;
    if !check_goal(&state, task).success {
        return Err(PlannerError::GoalUnmet);
    }
    Ok(plan)
}

fn run_step(
    state: &mut WorldState,
    plan: &mut ExpertPlan,
    action: SubgoalAction,
    target: usize,
    instruction: usize,
) -> Result<(), PlannerError> {
    let obj = state.scene.object(target);
    let cell = obj.cell.ok_or(PlannerError::Unreachable(target))?;
    let category = obj.category;
    plan.step_starts.push(plan.trajectory.len());
    plan.steps.push(ExpertStep {
        subgoal: Subgoal {
            action,
            object: category,
            resolved_position: Some(cell),
        },
        target,
        instruction,
    });
    let bounds = (state.scene.height, state.scene.width);
    let moves = plan_to_face(state.agent.cell, state.agent.heading, cell, bounds, |c| {
        state.scene.is_free(c)
    })
    .ok_or(PlannerError::Unreachable(target))?;
    for m in moves {
        exec(state, plan, PrimitiveAction::nav(m))?;
    }
    let kind = action.interaction().expect("expert steps are interactions");
    exec(state, plan, PrimitiveAction::interact(kind, category))
}

fn exec(state: &mut WorldState, plan: &mut ExpertPlan, a: PrimitiveAction) -> Result<(), PlannerError> {
    let ev = state.step(a);
    plan.trajectory.push(a);
    if ev.success {
        Ok(())
    } else {
        Err(PlannerError::ActionFailed {
            action: a.to_string(),
            message: ev.message,
        })
    }
}
