//! Action execution and egocentric observation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Category, Cell, GridScene, Heading, Look, Terrain};

pub const MAX_STEPS: usize = 1000;
/// The episode ends on the error that pushes the count past 10.
pub const MAX_ERRORS: usize = 11;
/// Forward reach of the view cone, in cells.
pub const VIEW_RANGE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub cell: Cell,
    pub heading: Heading,
    pub look: Look,
}

impl AgentPose {
    /// Cell directly in front of the agent.
    pub fn facing(&self) -> Option<Cell> {
        self.cell.step(self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    MoveAhead,
    RotateLeft,
    RotateRight,
    LookUp,
    LookDown,
    PickupObject,
    PutObject,
    OpenObject,
    CloseObject,
    ToggleObjectOn,
    ToggleObjectOff,
    SliceObject,
    Stop,
}

impl ActionKind {
    pub const ALL: [ActionKind; 13] = [
        ActionKind::MoveAhead,
        ActionKind::RotateLeft,
        ActionKind::RotateRight,
        ActionKind::LookUp,
        ActionKind::LookDown,
        ActionKind::PickupObject,
        ActionKind::PutObject,
        ActionKind::OpenObject,
        ActionKind::CloseObject,
        ActionKind::ToggleObjectOn,
        ActionKind::ToggleObjectOff,
        ActionKind::SliceObject,
        ActionKind::Stop,
    ];

    pub fn is_interaction(self) -> bool {
        matches!(
            self,
            ActionKind::PickupObject
                | ActionKind::PutObject
                | ActionKind::OpenObject
                | ActionKind::CloseObject
                | ActionKind::ToggleObjectOn
                | ActionKind::ToggleObjectOff
                | ActionKind::SliceObject
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimitiveAction {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Category>,
}

impl PrimitiveAction {
    /// Navigation or stop action. Panics on interaction kinds.
    pub fn nav(kind: ActionKind) -> Self {
        assert!(!kind.is_interaction(), "{kind:?} needs a target");
        Self { kind, target: None }
    }

    /// Interaction on a category. Panics on non-interaction kinds.
    pub fn interact(kind: ActionKind, target: Category) -> Self {
        assert!(kind.is_interaction(), "{kind:?} takes no target");
        Self {
            kind,
            target: Some(target),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.kind.is_interaction() == self.target.is_some()
    }
}

impl fmt::Display for PrimitiveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target {
            Some(t) => write!(f, "{:?} {}", self.kind, t),
            None => write!(f, "{:?}", self.kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub action: PrimitiveAction,
    pub success: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObservedObject {
    pub cell: Cell,
    pub category: Category,
    pub open: bool,
    pub on: bool,
    pub sliced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VisibleCell {
    pub cell: Cell,
    /// Wall or occupied by an object.
    pub obstacle: bool,
}

/// What the agent perceives from one pose: visible cells and the objects in them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: AgentPose,
    pub cells: Vec<VisibleCell>,
    pub objects: Vec<ObservedObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub scene: GridScene,
    pub agent: AgentPose,
    pub held: Option<usize>,
    pub steps: usize,
    pub errors: usize,
    pub terminated: bool,
    /// Set when the episode ended through `Stop`.
    pub stopped: bool,
    pub last_event: String,
}

impl WorldState {
    pub fn new(scene: GridScene) -> Self {
        let agent = scene.spawn;
        Self {
            scene,
            agent,
            held: None,
            steps: 0,
            errors: 0,
            terminated: false,
            stopped: false,
            last_event: String::new(),
        }
    }

    pub fn observe(&self) -> Observation {
        observe(self)
    }

    /// Executes one primitive action. Failures are reported in the event and
    /// counted; they never abort.
    pub fn step(&mut self, action: PrimitiveAction) -> Event {
        if self.terminated {
            return Event {
                action,
                success: false,
                message: "Episode has terminated".into(),
            };
        }
        let result = if action.is_valid() {
            self.apply(action)
        } else {
            Err("Malformed action".to_string())
        };
        self.steps += 1;
        let event = match result {
            Ok(()) => Event {
                action,
                success: true,
                message: "Succeeded".into(),
            },
            Err(message) => {
                self.errors += 1;
                Event {
                    action,
                    success: false,
                    message,
                }
            }
        };
        if self.steps >= MAX_STEPS || self.errors >= MAX_ERRORS {
            self.terminated = true;
        }
        self.last_event = event.message.clone();
        event
    }

    fn apply(&mut self, action: PrimitiveAction) -> Result<(), String> {
        let a = &mut self.agent;
        match action.kind {
            ActionKind::MoveAhead => {
                let next = a.facing().filter(|&c| self.scene.is_free(c));
                match next {
                    Some(c) => {
                        a.cell = c;
                        Ok(())
                    }
                    None => Err("blocked".into()),
                }
            }
            ActionKind::RotateLeft => {
                a.heading = a.heading.left();
                Ok(())
            }
            ActionKind::RotateRight => {
                a.heading = a.heading.right();
                Ok(())
            }
            ActionKind::LookUp => {
                a.look = match a.look {
                    Look::Down => Look::Level,
                    _ => Look::Up,
                };
                Ok(())
            }
            ActionKind::LookDown => {
                a.look = match a.look {
                    Look::Up => Look::Level,
                    _ => Look::Down,
                };
                Ok(())
            }
            ActionKind::Stop => {
                self.terminated = true;
                self.stopped = true;
                Ok(())
            }
            kind => {
                let cat = action.target.expect("validated");
                self.interact(kind, cat)
            }
        }
    }

    /// Lowest-id visible instance of `cat` in the faced cell.
    pub fn resolve(&self, cat: Category) -> Option<usize> {
        let faced = self.agent.facing()?;
        self.scene
            .objects
            .iter()
            .filter(|o| o.category == cat && o.cell == Some(faced))
            .find(|o| !self.scene.is_sealed(o.id))
            .map(|o| o.id)
    }

    fn interact(&mut self, kind: ActionKind, cat: Category) -> Result<(), String> {
        let id = self.resolve(cat).ok_or_else(|| format!("{cat} not visible"))?;
        let obj = &self.scene.objects[id];
        match kind {
            ActionKind::PickupObject => {
                if !obj.pickupable() {
                    return Err(format!("{cat} cannot be picked up"));
                }
                if self.held.is_some() {
                    return Err("Hand is full".into());
                }
                let inner = self.scene.descendants(id);
                let o = &mut self.scene.objects[id];
                o.held = true;
                o.cell = None;
                o.contained_in = None;
                for d in inner {
                    self.scene.objects[d].cell = None;
                }
                self.held = Some(id);
                Ok(())
            }
            ActionKind::PutObject => {
                let Some(h) = self.held else {
                    return Err("Nothing in hand".into());
                };
                if !obj.category.is_receptacle() {
                    return Err(format!("{cat} is not a receptacle"));
                }
                if obj.openable() && !obj.open {
                    return Err(format!("{cat} is closed"));
                }
                let cell = obj.cell;
                let (cools, heats, cleans) = (
                    cat == Category::Fridge,
                    obj.on && matches!(cat, Category::Microwave | Category::StoveBurner),
                    obj.on && cat == Category::SinkBasin,
                );
                let inner = self.scene.descendants(h);
                let o = &mut self.scene.objects[h];
                o.held = false;
                o.cell = cell;
                o.contained_in = Some(id);
                for d in inner.iter().copied().chain([h]) {
                    let o = &mut self.scene.objects[d];
                    o.cell = cell;
                    o.cooled |= cools;
                    o.heated |= heats;
                    o.cleaned |= cleans;
                }
                self.held = None;
                Ok(())
            }
            ActionKind::OpenObject | ActionKind::CloseObject => {
                let want = kind == ActionKind::OpenObject;
                if !obj.openable() {
                    return Err(format!("{cat} cannot be opened"));
                }
                if obj.open == want {
                    let state = if want { "open" } else { "closed" };
                    return Err(format!("{cat} is already {state}"));
                }
                self.scene.objects[id].open = want;
                Ok(())
            }
            ActionKind::ToggleObjectOn | ActionKind::ToggleObjectOff => {
                let want = kind == ActionKind::ToggleObjectOn;
                if !obj.toggleable() {
                    return Err(format!("{cat} cannot be toggled"));
                }
                if obj.on == want {
                    let state = if want { "on" } else { "off" };
                    return Err(format!("{cat} is already {state}"));
                }
                self.scene.objects[id].on = want;
                if want {
                    for d in self.scene.descendants(id) {
                        let o = &mut self.scene.objects[d];
                        match cat {
                            Category::Microwave | Category::StoveBurner => o.heated = true,
                            Category::SinkBasin => o.cleaned = true,
                            _ => {}
                        }
                    }
                }
                Ok(())
            }
            ActionKind::SliceObject => {
                if !obj.sliceable() {
                    return Err(format!("{cat} cannot be sliced"));
                }
                if obj.sliced {
                    return Err(format!("{cat} is already sliced"));
                }
                let has_knife = self
                    .held
                    .is_some_and(|h| self.scene.objects[h].category == Category::Knife);
                if !has_knife {
                    return Err("Need a knife to slice".into());
                }
                self.scene.objects[id].sliced = true;
                Ok(())
            }
            _ => unreachable!("non-interaction kinds handled by caller"),
        }
    }
}

/// Cells inside the view cone of `pose` with an unobstructed line of sight.
pub fn visible_cells(scene: &GridScene, pose: &AgentPose) -> Vec<Cell> {
    let (fr, fc) = pose.heading.delta();
    let (rr, rc) = (fc, -fr);
    let mut out = BTreeSet::new();
    out.insert(pose.cell);
    for f in 1..=VIEW_RANGE as i64 {
        for l in -f..=f {
            let Some(c) = pose.cell.offset(f * fr + l * rr, f * fc + l * rc) else {
                continue;
            };
            if !scene.in_bounds(c) || scene.terrain_at(c) == Terrain::Void {
                continue;
            }
            if line_of_sight(scene, pose.cell, c) {
                out.insert(c);
            }
        }
    }
    out.into_iter().collect()
}

/// True when no wall cell lies strictly between `a` and `b` on the sampled
/// segment joining their centres.
fn line_of_sight(scene: &GridScene, a: Cell, b: Cell) -> bool {
    let (dr, dc) = (b.row as f64 - a.row as f64, b.col as f64 - a.col as f64);
    let n = 4 * (dr.abs().max(dc.abs()) as usize).max(1);
    for s in 1..n {
        let t = s as f64 / n as f64;
        let r = (a.row as f64 + dr * t).round() as usize;
        let c = (a.col as f64 + dc * t).round() as usize;
        let cell = Cell::new(r, c);
        if cell == a || cell == b {
            continue;
        }
        if scene.terrain_at(cell) != Terrain::Floor {
            return false;
        }
    }
    true
}

/// Egocentric view: visible cells with obstacle flags, and the visible
/// object instances. Objects inside closed receptacles are excluded.
pub fn observe(state: &WorldState) -> Observation {
    let scene = &state.scene;
    let cells = visible_cells(scene, &state.agent);
    let mut objects = Vec::new();
    let mut vis = Vec::with_capacity(cells.len());
    for &c in &cells {
        let mut occupied = false;
        for o in scene.objects_at(c) {
            occupied = true;
            if !scene.is_sealed(o.id) {
                objects.push(ObservedObject {
                    cell: c,
                    category: o.category,
                    open: o.open,
                    on: o.on,
                    sliced: o.sliced,
                });
            }
        }
        vis.push(VisibleCell {
            cell: c,
            obstacle: occupied || scene.terrain_at(c) != Terrain::Floor,
        });
    }
    objects.sort();
    objects.dedup();
    Observation {
        pose: state.agent,
        cells: vis,
        objects,
    }
}
