use std::io::{BufRead, Write};

use super::{HarnessError, Result};
use crate::localizer::{localizer_text, TrainSample};
use crate::mapper::SemanticMap;
use crate::world::{expert_plan, GridScene, Heading, TaskSpec, WorldState};

/// Adds the views from the current cell in all four headings.
pub fn look_around(state: &WorldState, map: &mut SemanticMap) {
    let mut probe = state.clone();
    for h in Heading::ALL {
        probe.agent.heading = h;
        map.update(&probe.observe());
    }
}

/// Replays the expert on one scene and records a sample at the start of
/// every expert subgoal.
pub fn scene_samples(scene: &GridScene, task: &TaskSpec) -> Result<Vec<TrainSample>> {
    let plan = expert_plan(scene, task).map_err(|e| HarnessError::ExpertFailure {
        seed: scene.seed,
        message: e.to_string(),
    })?;
    let mut state = WorldState::new(scene.clone());
    let mut map = SemanticMap::new(scene.height, scene.width);
    look_around(&state, &mut map);
    let mut out = Vec::with_capacity(plan.steps.len());
    let mut next = 0;
    for (t, &action) in plan.trajectory.iter().enumerate() {
        while next < plan.steps.len() && plan.step_starts[next] == t {
            let step = &plan.steps[next];
            let cell = state
                .scene
                .object(step.target)
                .cell
                .ok_or_else(|| HarnessError::ExpertFailure {
                    seed: scene.seed,
                    message: format!("target {} has no cell", step.target),
                })?;
            let sentence = task
                .step_instructions
                .get(step.instruction)
                .map(String::as_str)
                .unwrap_or("");
            out.push(TrainSample {
                map: map.clone(),
                instruction: localizer_text(&step.subgoal, sentence),
                action: step.subgoal.action,
                target: step.subgoal.object,
                gt_mask: vec![cell],
                agent: state.agent.cell,
                scene_seed: scene.seed,
                hard: task.hard,
            });
            next += 1;
        }
        state.step(action);
        map.update(&state.observe());
    }
    Ok(out)
}

/// Samples for every scene, in scene order.
pub fn collect_dataset(scenes: &[(GridScene, TaskSpec)]) -> Result<Vec<TrainSample>> {
    let mut out = Vec::new();
    for (scene, task) in scenes {
        out.extend(scene_samples(scene, task)?);
    }
    Ok(out)
}

pub fn write_dataset(mut w: impl Write, samples: &[TrainSample]) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(|e| HarnessError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset(r: impl BufRead) -> Result<Vec<TrainSample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: TrainSample =
            serde_json::from_str(&line).map_err(|e| HarnessError::Format(format!("dataset line {}: {e}", i + 1)))?;
        out.push(s);
    }
    Ok(out)
}
