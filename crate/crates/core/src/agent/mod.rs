//! Episode controller: follows the parsed instruction subgoals, asks the
//! completer for missing steps, localizes targets on the semantic map and
//! recovers from failed interactions.

mod instructions;
mod nav;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::completer::{
    build_prompt, complete, oracle_complete, parse_response, Backend, GroundTruth, TaskProgress, Templates,
};
use crate::localizer::{localizer_text, select_target_excluding, LocalizerModel};
use crate::mapper::SemanticMap;
use crate::world::{
    check_goal, expert_plan, possible_landmarks, ActionKind, Category, Cell, GridScene, PrimitiveAction, Subgoal,
    SubgoalAction, TaskSpec, WorldState, MAX_ERRORS,
};

pub use instructions::{parse_instruction, parse_instructions};
pub use nav::{explore_frontier, plan_path, plan_path_optimistic, NavError};

/// When the completer is asked for missing steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompleterTrigger {
    /// At the start of every instruction subgoal and after failures.
    #[default]
    StartAndFailure,
    OnFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub use_completer: bool,
    /// Localizer heatmap targets; otherwise the nearest mapped instance.
    pub use_localizer: bool,
    /// Which localizer variant the harness loads; informational here.
    pub use_graph: bool,
    /// Take every target position from the scene (upper-bound runs).
    pub ground_truth_positions: bool,
    pub tau: f64,
    pub max_completer_calls: usize,
    pub trigger: CompleterTrigger,
    /// Turn through all four headings before the first subgoal.
    pub look_around: bool,
    /// Give up a subgoal after this many failed interactions.
    pub max_attempts: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            use_completer: true,
            use_localizer: true,
            use_graph: true,
            ground_truth_positions: false,
            tau: crate::localizer::DEFAULT_TAU,
            max_completer_calls: 3,
            trigger: CompleterTrigger::StartAndFailure,
            look_around: true,
            max_attempts: 6,
        }
    }
}

/// Shared, read-only resources for running episodes.
#[derive(Debug, Clone, Copy)]
pub struct AgentContext<'a> {
    pub backend: Option<&'a Backend>,
    /// Should be frozen; only inference is run.
    pub localizer: Option<&'a LocalizerModel<f64>>,
    pub templates: &'a Templates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    None,
    GoalObjectNotFound,
    InteractionFailure,
    NavigationFailure,
}

impl ErrorMode {
    pub const ALL: [ErrorMode; 4] = [
        ErrorMode::None,
        ErrorMode::GoalObjectNotFound,
        ErrorMode::InteractionFailure,
        ErrorMode::NavigationFailure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorMode::None => "none",
            ErrorMode::GoalObjectNotFound => "goal_object_not_found",
            ErrorMode::InteractionFailure => "interaction_failure",
            ErrorMode::NavigationFailure => "navigation_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgoalOrigin {
    Instruction,
    Completer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalRecord {
    pub subgoal: String,
    pub origin: SubgoalOrigin,
    pub target: Option<Cell>,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub room_type: String,
    pub task_type: String,
    pub hard: bool,
    pub success: bool,
    pub goal_satisfied: usize,
    pub goal_total: usize,
    /// Executed primitive actions, L.
    pub steps: usize,
    /// Expert path length, L*.
    pub expert_length: usize,
    pub errors: usize,
    pub error_mode: ErrorMode,
    pub completer_calls: usize,
    pub subgoals: Vec<SubgoalRecord>,
    pub trajectory: Vec<String>,
}

#[derive(Debug, Clone)]
struct Planned {
    subgoal: Subgoal,
    instruction: usize,
    origin: SubgoalOrigin,
    /// Index of the instruction subgoal whose completer budget this uses.
    parent: usize,
    prompted: bool,
}

enum Outcome {
    Done,
    /// New subgoals were inserted before the current one.
    Spliced,
    Failed,
}

struct Controller<'a> {
    cfg: &'a AgentConfig,
    ctx: AgentContext<'a>,
    task: &'a TaskSpec,
    state: WorldState,
    map: SemanticMap,
    queue: Vec<Planned>,
    cursor: usize,
    calls: Vec<usize>,
    seen: BTreeSet<Category>,
    /// Last observed open flag per (cell, category).
    open_state: BTreeMap<(Cell, Category), bool>,
    exclusions: BTreeSet<(Category, Cell)>,
    committed: Option<(Category, Cell)>,
    /// Containers this agent opened.
    opened: Vec<(Cell, Category)>,
    held: Option<Category>,
    /// Objects put down by the agent, with the instruction that placed them.
    placed: Vec<(Category, Cell, usize)>,
    records: Vec<SubgoalRecord>,
    trajectory: Vec<String>,
    interaction_errors: usize,
    last_message: Option<String>,
    possible: Vec<Category>,
}

/// Runs one episode to termination. Never fails: every problem ends up in
/// the returned result.
pub fn run_episode(scene: &GridScene, task: &TaskSpec, cfg: &AgentConfig, ctx: AgentContext<'_>) -> EpisodeResult {
    let parsed = parse_instructions(&task.step_instructions);
    let queue: Vec<Planned> = parsed
        .iter()
        .enumerate()
        .map(|(i, &(g, instr))| Planned {
            subgoal: g,
            instruction: instr,
            origin: SubgoalOrigin::Instruction,
            parent: i,
            prompted: false,
        })
        .collect();
    let mut c = Controller {
        cfg,
        ctx,
        task,
        state: WorldState::new(scene.clone()),
        map: SemanticMap::new(scene.height, scene.width),
        calls: vec![0; queue.len()],
        queue,
        cursor: 0,
        seen: BTreeSet::new(),
        open_state: BTreeMap::new(),
        exclusions: BTreeSet::new(),
        committed: None,
        opened: Vec::new(),
        held: None,
        placed: Vec::new(),
        records: Vec::new(),
        trajectory: Vec::new(),
        interaction_errors: 0,
        last_message: None,
        possible: possible_landmarks(scene.room_type),
    };
    c.run();

    let report = check_goal(&c.state, task);
    let goal_cat = scene.object(task.targets.object).category;
    let error_mode = if report.success {
        ErrorMode::None
    } else if !c.seen.contains(&goal_cat) {
        ErrorMode::GoalObjectNotFound
    } else if c.state.errors >= MAX_ERRORS && 2 * c.interaction_errors >= c.state.errors {
        ErrorMode::InteractionFailure
    } else {
        ErrorMode::NavigationFailure
    };
    EpisodeResult {
        seed: scene.seed,
        room_type: scene.room_type.name().to_string(),
        task_type: task.task_type.name().to_string(),
        hard: task.hard,
        success: report.success,
        goal_satisfied: report.satisfied_count,
        goal_total: report.total,
        steps: c.state.steps,
        expert_length: expert_plan(scene, task).map(|p| p.len()).unwrap_or(0),
        errors: c.state.errors,
        error_mode,
        completer_calls: c.calls.iter().sum(),
        subgoals: c.records,
        trajectory: c.trajectory,
    }
}

impl Controller<'_> {
    fn run(&mut self) {
        self.sense();
        if self.cfg.look_around {
            for _ in 0..3 {
                self.act(PrimitiveAction::nav(ActionKind::RotateLeft));
            }
        }
        while self.cursor < self.queue.len() && !self.state.terminated {
            match self.run_subgoal() {
                Outcome::Done => self.cursor += 1,
                Outcome::Spliced => {}
                Outcome::Failed => break,
            }
        }
        if !self.state.terminated {
            self.act(PrimitiveAction::nav(ActionKind::Stop));
        }
    }

    fn sense(&mut self) {
        let obs = self.state.observe();
        for vc in &obs.cells {
            self.open_state.retain(|(c, _), _| *c != vc.cell);
        }
        for o in &obs.objects {
            self.seen.insert(o.category);
            self.open_state.insert((o.cell, o.category), o.open);
        }
        self.map.update(&obs);
    }

    fn act(&mut self, a: PrimitiveAction) -> bool {
        let ev = self.state.step(a);
        self.trajectory.push(a.to_string());
        if !ev.success && a.kind.is_interaction() {
            self.interaction_errors += 1;
        }
        if !ev.success {
            self.last_message = Some(ev.message.clone());
        }
        self.sense();
        ev.success
    }

    fn record(&mut self, idx: usize, target: Option<Cell>, outcome: &str) {
        let p = &self.queue[idx];
        self.records.push(SubgoalRecord {
            subgoal: p.subgoal.to_string(),
            origin: p.origin,
            target,
            outcome: outcome.to_string(),
        });
    }

    fn run_subgoal(&mut self) -> Outcome {
        let idx = self.cursor;
        let p = self.queue[idx].clone();
        if self.cfg.use_completer
            && self.cfg.trigger == CompleterTrigger::StartAndFailure
            && p.origin == SubgoalOrigin::Instruction
            && !p.prompted
        {
            self.queue[idx].prompted = true;
            if self.prompt(idx, None) {
                return Outcome::Spliced;
            }
        }

        let mut attempts = 0;
        let mut relocalized = false;
        loop {
            if self.state.terminated {
                return Outcome::Failed;
            }
            let Some(target) = self.find_target(idx) else {
                self.record(idx, None, "target not found");
                attempts += 1;
                self.forget_opened(p.subgoal.object);
                if self.cfg.use_completer
                    && attempts < self.cfg.max_attempts
                    && self.prompt(idx, Some(format!("{} not found", p.subgoal.object)))
                {
                    return Outcome::Spliced;
                }
                return Outcome::Failed;
            };
            if !self.navigate(target) {
                self.exclusions.insert((p.subgoal.object, target));
                attempts += 1;
                if attempts >= self.cfg.max_attempts {
                    self.record(idx, Some(target), "unreachable");
                    return Outcome::Failed;
                }
                continue;
            }
            self.committed = Some((p.subgoal.object, target));
            let Some(kind) = p.subgoal.action.interaction() else {
                self.record(idx, Some(target), "arrived");
                return Outcome::Done;
            };
            if kind == ActionKind::OpenObject && self.open_state.get(&(target, p.subgoal.object)) == Some(&true) {
                self.record(idx, Some(target), "already open");
                return Outcome::Done;
            }
            if self.act(PrimitiveAction::interact(kind, p.subgoal.object)) {
                match kind {
                    ActionKind::OpenObject => self.opened.push((target, p.subgoal.object)),
                    ActionKind::PickupObject => self.held = Some(p.subgoal.object),
                    ActionKind::PutObject => {
                        if let Some(h) = self.held.take() {
                            self.placed.push((h, target, p.instruction));
                        }
                    }
                    _ => {}
                }
                self.record(idx, Some(target), "success");
                return Outcome::Done;
            }
            let message = self.last_message.clone().unwrap_or_default();
            self.record(idx, Some(target), &message);
            attempts += 1;
            if attempts >= self.cfg.max_attempts {
                return Outcome::Failed;
            }
            let excluded = self.learn_from_failure(&p.subgoal, target, &message);
            self.committed = None;
            if excluded && !relocalized {
                relocalized = true;
                continue;
            }
            if self.cfg.use_completer && self.prompt(idx, Some(message)) {
                return Outcome::Spliced;
            }
        }
    }

    /// Excludes every container the agent opened that does not show `cat`.
    /// Returns whether anything new was excluded.
    fn forget_opened(&mut self, cat: Category) -> bool {
        let mut added = false;
        for (c, k) in self.opened.clone() {
            if !self.map.has(cat, c) {
                added |= self.exclusions.insert((k, c));
            }
        }
        added
    }

    /// Marks cells that proved not to hold the object. Returns whether
    /// anything new was excluded.
    fn learn_from_failure(&mut self, g: &Subgoal, target: Cell, message: &str) -> bool {
        if !message.ends_with("not visible") {
            return false;
        }
        let closed_here = self
            .open_state
            .iter()
            .any(|(&(c, cat), &open)| c == target && cat.is_openable() && !open);
        if closed_here {
            return false;
        }
        let mut added = self.exclusions.insert((g.object, target));
        // An opened container there did not hold it either.
        let opened: Vec<Category> = self
            .open_state
            .iter()
            .filter(|(&(c, cat), &open)| c == target && cat.is_openable() && open)
            .map(|(&(_, cat), _)| cat)
            .collect();
        for cat in opened {
            added |= self.exclusions.insert((cat, target));
        }
        added
    }

    /// Cells ruled out for the subgoal at `idx`. Objects the agent already
    /// delivered for an earlier instruction are not picked up again.
    fn excluded(&self, idx: usize) -> Vec<Cell> {
        let p = &self.queue[self.lead_index(idx)];
        let cat = p.subgoal.object;
        let mut cells: Vec<Cell> = self
            .exclusions
            .iter()
            .filter(|(c, _)| *c == cat)
            .map(|&(_, cell)| cell)
            .collect();
        if p.subgoal.action == SubgoalAction::PickupObject {
            cells.extend(
                self.placed
                    .iter()
                    .filter(|&&(c, _, instr)| c == cat && instr != p.instruction)
                    .map(|&(_, cell, _)| cell),
            );
        }
        cells
    }

    /// A navigation step stands for the interaction it leads to.
    fn lead_index(&self, idx: usize) -> usize {
        let g = self.queue[idx].subgoal;
        match self.queue.get(idx + 1) {
            Some(next) if g.action == SubgoalAction::GotoLocation && next.subgoal.object == g.object => idx + 1,
            _ => idx,
        }
    }

    fn instruction_text(&self, idx: usize) -> &str {
        self.task
            .step_instructions
            .get(self.queue[idx].instruction)
            .map(String::as_str)
            .unwrap_or("")
    }

    /// Target cell for the subgoal at `idx`, exploring until one is found.
    fn find_target(&mut self, idx: usize) -> Option<Cell> {
        let g = self.queue[idx].subgoal;
        if let Some(cell) = g.resolved_position {
            return Some(cell);
        }
        let exclude = self.excluded(idx);
        if let Some((cat, cell)) = self.committed {
            if cat == g.object && !exclude.contains(&cell) {
                return Some(cell);
            }
        }
        if self.cfg.ground_truth_positions {
            return oracle_complete(&self.state.scene, &g, &exclude)
                .ok()
                .and_then(|r| r.subgoals.last().and_then(|s| s.resolved_position));
        }
        let text_idx = self.lead_index(idx);
        let text = localizer_text(&self.queue[text_idx].subgoal, self.instruction_text(text_idx));
        loop {
            if self.state.terminated {
                return None;
            }
            if let Some(c) = self.localize(idx, &text) {
                return Some(c);
            }
            if !self.explore_step() {
                return self.best_guess(idx, &text);
            }
        }
    }

    fn localize(&self, idx: usize, text: &str) -> Option<Cell> {
        let cat = self.queue[idx].subgoal.object;
        let exclude = self.excluded(idx);
        match (self.cfg.use_localizer, self.ctx.localizer) {
            (true, Some(model)) => {
                let heat = model.heatmap(&self.map, text).ok()?;
                select_target_excluding(&heat, &self.map, self.cfg.tau, &exclude)
            }
            _ => {
                let from = self.state.agent.cell;
                self.map
                    .cells_of(cat)
                    .into_iter()
                    .filter(|c| !exclude.contains(c))
                    .min_by_key(|&c| (c.manhattan(from), c))
            }
        }
    }

    /// With nothing left to explore, the mapped instance the heatmap likes
    /// best, however unconfident.
    fn best_guess(&self, idx: usize, text: &str) -> Option<Cell> {
        let cat = self.queue[idx].subgoal.object;
        let exclude = self.excluded(idx);
        let heat = match (self.cfg.use_localizer, self.ctx.localizer) {
            (true, Some(model)) => model.heatmap(&self.map, text).ok()?,
            _ => return None,
        };
        self.map
            .cells_of(cat)
            .into_iter()
            .filter(|c| !exclude.contains(c))
            .max_by(|a, b| heat.get(*a).total_cmp(&heat.get(*b)).then(b.cmp(a)))
    }

    /// Walks toward the nearest frontier and looks at the unexplored cell
    /// beyond it. Returns false when nothing is left to explore.
    fn explore_step(&mut self) -> bool {
        let Ok(f) = explore_frontier(&self.map, &self.state.agent) else {
            return false;
        };
        let Some(&h) = self.map.unexplored_neighbours(f).first() else {
            return false;
        };
        let unknown = f.step(h).expect("neighbour exists");
        let before = self.map.explored_count();
        self.navigate(unknown);
        self.map.explored_count() > before
    }

    /// Moves until facing `target`, replanning after every step. Returns
    /// false if no route exists or the episode ends.
    fn navigate(&mut self, target: Cell) -> bool {
        let mut budget = 4 * (self.map.height + self.map.width) + 64;
        loop {
            if self.state.terminated {
                return false;
            }
            if self.state.agent.facing() == Some(target) {
                return true;
            }
            let plan = plan_path(&self.map, &self.state.agent, target)
                .or_else(|_| plan_path_optimistic(&self.map, &self.state.agent, target));
            let Ok(plan) = plan else { return false };
            let Some(&a) = plan.first() else { return true };
            if budget == 0 {
                return false;
            }
            budget -= 1;
            self.act(PrimitiveAction::nav(a));
        }
    }

    /// Asks the completer for the steps missing before the subgoal at `idx`
    /// and splices them in. Returns whether anything was inserted.
    fn prompt(&mut self, idx: usize, last_message: Option<String>) -> bool {
        let Some(backend) = self.ctx.backend else { return false };
        let parent = self.queue[idx].parent;
        if self.calls[parent] >= self.cfg.max_completer_calls {
            return false;
        }
        self.calls[parent] += 1;
        let current = Subgoal::new(self.queue[idx].subgoal.action, self.queue[idx].subgoal.object);
        let strip = |p: &Planned| Subgoal::new(p.subgoal.action, p.subgoal.object);
        let progress = TaskProgress {
            completed: self.queue[..idx].iter().map(strip).collect(),
            current,
            remaining: self.queue[idx + 1..].iter().map(strip).collect(),
        };
        let observed = self.map.observed_landmarks(self.state.agent.cell);
        let exclude = self.excluded(idx);
        let truth = GroundTruth {
            scene: &self.state.scene,
            subgoal: current,
            exclude: &exclude,
        };
        let recovered = if self.cfg.ground_truth_positions && matches!(backend, Backend::Oracle) {
            oracle_complete(&self.state.scene, &current, &exclude)
                .ok()
                .map(|r| r.subgoals)
        } else {
            build_prompt(
                self.ctx.templates,
                self.state.scene.room_type,
                self.task,
                &progress,
                &observed,
                &self.possible,
                last_message.as_deref(),
            )
            .ok()
            .and_then(|bundle| complete(&bundle, backend, Some(truth)).ok())
            .and_then(|text| parse_response(&text, &self.possible, &current).ok())
            .map(|r| r.subgoals)
        };
        let Some(mut steps) = recovered else {
            self.record(idx, None, "completion rejected");
            return false;
        };
        let last = steps.pop();
        if let (Some(last), true) = (last, self.cfg.ground_truth_positions) {
            self.queue[idx].subgoal.resolved_position = last.resolved_position;
        }
        if steps.is_empty() {
            return false;
        }
        let instruction = self.queue[idx].instruction;
        let inserted: Vec<Planned> = steps
            .into_iter()
            .map(|g| Planned {
                subgoal: g,
                instruction,
                origin: SubgoalOrigin::Completer,
                parent,
                prompted: true,
            })
            .collect();
        self.queue.splice(idx..idx, inserted);
        self.committed = None;
        true
    }
}
