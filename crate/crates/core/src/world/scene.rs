//! Scene and task types, and the seeded scene/task generator.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::{furniture, small_objects};
use super::{expert_plan, AgentPose, Category, Cell, Heading, Look, RoomType, WorldState};

/// Side length of the square grid.
pub const GRID_SIZE: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terrain {
    Floor,
    Wall,
    /// Outside the room; never visible and never walkable.
    Void,
}

impl Terrain {
    pub fn symbol(self) -> char {
        match self {
            Terrain::Floor => '.',
            Terrain::Wall => '#',
            Terrain::Void => '~',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '.' => Some(Terrain::Floor),
            '#' => Some(Terrain::Wall),
            '~' => Some(Terrain::Void),
            _ => None,
        }
    }
}

/// Room layout family. Unseen layouts are larger and split by a partial
/// partition wall; they never appear in training splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutFamily {
    #[default]
    Seen,
    Unseen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: usize,
    pub category: Category,
    /// `None` only while held.
    pub cell: Option<Cell>,
    #[serde(default)]
    pub open: bool,
    #[serde(default)]
    pub on: bool,
    #[serde(default)]
    pub sliced: bool,
    #[serde(default)]
    pub held: bool,
    #[serde(default)]
    pub heated: bool,
    #[serde(default)]
    pub cooled: bool,
    #[serde(default)]
    pub cleaned: bool,
    #[serde(default)]
    pub contained_in: Option<usize>,
}

impl ObjectInstance {
    pub fn new(id: usize, category: Category, cell: Cell) -> Self {
        Self {
            id,
            category,
            cell: Some(cell),
            open: false,
            on: false,
            sliced: false,
            held: false,
            heated: false,
            cooled: false,
            cleaned: false,
            contained_in: None,
        }
    }

    pub fn openable(&self) -> bool {
        self.category.is_openable()
    }
    pub fn toggleable(&self) -> bool {
        self.category.is_toggleable()
    }
    pub fn sliceable(&self) -> bool {
        self.category.is_sliceable()
    }
    pub fn pickupable(&self) -> bool {
        self.category.is_pickupable()
    }

    pub fn flag(&self, f: StateFlag) -> bool {
        match f {
            StateFlag::Heated => self.heated,
            StateFlag::Cooled => self.cooled,
            StateFlag::Cleaned => self.cleaned,
            StateFlag::Sliced => self.sliced,
            StateFlag::On => self.on,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScene {
    pub width: usize,
    pub height: usize,
    pub terrain: Vec<Terrain>,
    pub objects: Vec<ObjectInstance>,
    pub room_type: RoomType,
    pub seed: u64,
    pub layout: LayoutFamily,
    pub spawn: AgentPose,
}

impl GridScene {
    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_at(&self, i: usize) -> Cell {
        Cell::new(i / self.width, i % self.width)
    }

    pub fn terrain_at(&self, c: Cell) -> Terrain {
        if self.in_bounds(c) {
            self.terrain[self.index(c)]
        } else {
            Terrain::Void
        }
    }

    pub fn object(&self, id: usize) -> &ObjectInstance {
        &self.objects[id]
    }

    /// Floor cell without furniture. Loose objects are ignored here.
    pub fn walkable(&self, c: Cell) -> bool {
        self.terrain_at(c) == Terrain::Floor && !self.objects.iter().any(|o| o.category.is_fixed() && o.cell == Some(c))
    }

    /// Floor cell not occupied by any object; the agent may stand here.
    pub fn is_free(&self, c: Cell) -> bool {
        self.terrain_at(c) == Terrain::Floor && !self.objects.iter().any(|o| o.cell == Some(c))
    }

    pub fn instances(&self, cat: Category) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(move |o| o.category == cat)
    }

    pub fn objects_at(&self, c: Cell) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(move |o| o.cell == Some(c))
    }

    /// Receptacles enclosing `id`, innermost first.
    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.objects[id].contained_in;
        while let Some(p) = cur {
            if out.contains(&p) {
                break;
            }
            out.push(p);
            cur = self.objects[p].contained_in;
        }
        out
    }

    /// Closed receptacles enclosing `id`, outermost first.
    pub fn closed_ancestors(&self, id: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .ancestors(id)
            .into_iter()
            .filter(|&a| self.objects[a].openable() && !self.objects[a].open)
            .collect();
        v.reverse();
        v
    }

    /// Inside at least one closed receptacle.
    pub fn is_sealed(&self, id: usize) -> bool {
        !self.closed_ancestors(id).is_empty()
    }

    /// Objects transitively contained in `id`.
    pub fn descendants(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            for o in &self.objects {
                if o.contained_in == Some(cur) && !out.contains(&o.id) {
                    out.push(o.id);
                    stack.push(o.id);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Extreme-direction word that singles out `id` among instances of its
    /// category. `Some(None)` when the category has a single instance,
    /// `None` when no direction is unambiguous.
    pub fn descriptor(&self, id: usize) -> Option<Option<&'static str>> {
        let me = &self.objects[id];
        let cell = me.cell?;
        let others: Vec<Cell> = self
            .instances(me.category)
            .filter(|o| o.id != id)
            .filter_map(|o| o.cell)
            .collect();
        if others.is_empty() {
            return Some(None);
        }
        type Beats = fn(Cell, Cell) -> bool;
        let tests: [(&'static str, Beats); 4] = [
            ("northern", |a, b| a.row < b.row),
            ("southern", |a, b| a.row > b.row),
            ("western", |a, b| a.col < b.col),
            ("eastern", |a, b| a.col > b.col),
        ];
        tests
            .iter()
            .find(|(_, beats)| others.iter().all(|&o| beats(cell, o)))
            .map(|(w, _)| Some(*w))
    }

    /// Grid rows as strings of terrain symbols.
    pub fn grid_rows(&self) -> Vec<String> {
        self.terrain
            .chunks(self.width)
            .map(|r| r.iter().map(|t| t.symbol()).collect())
            .collect()
    }

    /// Checks the structural invariants: objects in bounds, ids dense,
    /// containment a forest, held objects cell-less, spawn walkable.
    pub fn validate(&self) -> Result<(), String> {
        for (i, o) in self.objects.iter().enumerate() {
            if o.id != i {
                return Err(format!("object at index {i} has id {}", o.id));
            }
            match (o.held, o.cell) {
                (true, Some(_)) => return Err(format!("held object {i} has a cell")),
                (true, None) if o.contained_in.is_some() => return Err(format!("held object {i} is contained")),
                (false, None) if !self.ancestors(i).iter().any(|&a| self.objects[a].held) => {
                    return Err(format!("object {i} has no cell"))
                }
                (_, Some(c)) if !self.in_bounds(c) => return Err(format!("object {i} out of bounds")),
                _ => {}
            }
            if o.open && !o.openable() {
                return Err(format!("object {i} open but not openable"));
            }
            if o.sliced && !o.sliceable() {
                return Err(format!("object {i} sliced but not sliceable"));
            }
            if o.held && !o.pickupable() {
                return Err(format!("object {i} held but not pickupable"));
            }
            if let Some(p) = o.contained_in {
                if p >= self.objects.len() || !self.objects[p].category.is_receptacle() {
                    return Err(format!("object {i} inside non-receptacle {p}"));
                }
            }
            let mut seen = vec![i];
            let mut cur = o.contained_in;
            while let Some(p) = cur {
                if seen.contains(&p) {
                    return Err(format!("containment cycle through {i}"));
                }
                seen.push(p);
                cur = self.objects[p].contained_in;
            }
        }
        if !self.walkable(self.spawn.cell) {
            return Err("spawn not walkable".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskType {
    Examine,
    PickPlace,
    StackPlace,
    CleanPlace,
    CoolPlace,
    HeatPlace,
    Pick2Place,
}

impl TaskType {
    pub const ALL: [TaskType; 7] = [
        TaskType::Examine,
        TaskType::PickPlace,
        TaskType::StackPlace,
        TaskType::CleanPlace,
        TaskType::CoolPlace,
        TaskType::HeatPlace,
        TaskType::Pick2Place,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskType::Examine => "Examine",
            TaskType::PickPlace => "Pick & Place",
            TaskType::StackPlace => "Stack & Place",
            TaskType::CleanPlace => "Clean & Place",
            TaskType::CoolPlace => "Cool & Place",
            TaskType::HeatPlace => "Heat & Place",
            TaskType::Pick2Place => "Pick 2 & Place",
        }
    }

    /// Task types available in a room.
    pub fn for_room(room: RoomType) -> &'static [TaskType] {
        use TaskType::*;
        match room {
            RoomType::Kitchen => &[PickPlace, StackPlace, CleanPlace, CoolPlace, HeatPlace, Pick2Place],
            RoomType::Bathroom => &[PickPlace, CleanPlace, Pick2Place],
            RoomType::Bedroom | RoomType::LivingRoom => &[Examine, PickPlace, StackPlace, Pick2Place],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateFlag {
    Heated,
    Cooled,
    Cleaned,
    Sliced,
    On,
}

/// Goal predicate over category-level object state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Condition {
    /// At least `count` instances of `object` directly inside an instance of `receptacle`.
    In {
        object: Category,
        receptacle: Category,
        count: usize,
    },
    /// Some instance of `object` has the flag set.
    State { object: Category, flag: StateFlag },
    /// The agent holds an instance of `object`.
    Holding { object: Category },
}

/// Instance bindings used by the omniscient expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskTargets {
    pub object: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vessel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_rest: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appliance: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lamp: Option<usize>,
    /// Whether the cool task includes the slicing prefix.
    #[serde(default)]
    pub slice: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(rename = "type")]
    pub task_type: TaskType,
    pub goal_statement: String,
    #[serde(rename = "steps")]
    pub step_instructions: Vec<String>,
    #[serde(rename = "conditions")]
    pub goal_conditions: Vec<Condition>,
    pub hard: bool,
    pub targets: TaskTargets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneParams {
    pub seed: u64,
    pub room_type: RoomType,
    pub hard: bool,
    #[serde(default)]
    pub layout: LayoutFamily,
}

/// Seen-layout scene for `(seed, room_type, hard)`.
pub fn generate_scene(seed: u64, room_type: RoomType, hard: bool) -> (GridScene, TaskSpec) {
    generate_scene_with(&SceneParams {
        seed,
        room_type,
        hard,
        layout: LayoutFamily::Seen,
    })
}

const MAX_ATTEMPTS: u64 = 10_000;

/// Deterministic scene and task for the given parameters. Internally
/// re-samples until the task is solvable and no goal condition holds at
/// the start.
pub fn generate_scene_with(p: &SceneParams) -> (GridScene, TaskSpec) {
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(p, attempt));
        if let Some(out) = Builder::new(p, &mut rng).build() {
            return out;
        }
    }
    panic!("scene generator exhausted {MAX_ATTEMPTS} attempts for {p:?}");
}

fn mix_seed(p: &SceneParams, attempt: u64) -> u64 {
    p.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((p.room_type as u64) << 56)
        ^ ((p.hard as u64) << 48)
        ^ ((p.layout as u64) << 40)
        ^ attempt.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

struct Builder<'a> {
    p: &'a SceneParams,
    rng: &'a mut ChaCha8Rng,
    scene: GridScene,
    wall_cells: Vec<Cell>,
    inner_cells: Vec<Cell>,
}

fn prep(c: Category) -> &'static str {
    if c.is_openable() || matches!(c, Category::SinkBasin | Category::GarbageCan | Category::BathtubBasin) {
        "in"
    } else {
        "on"
    }
}

fn plural(c: Category) -> String {
    let w = c.word();
    match w.as_str() {
        "knife" => "knives".into(),
        "tomato" | "potato" => format!("{w}es"),
        _ if w.ends_with('s') || w.ends_with('x') || w.ends_with('h') => format!("{w}es"),
        _ => format!("{w}s"),
    }
}

impl<'a> Builder<'a> {
    fn new(p: &'a SceneParams, rng: &'a mut ChaCha8Rng) -> Self {
        let scene = GridScene {
            width: GRID_SIZE,
            height: GRID_SIZE,
            terrain: vec![Terrain::Void; GRID_SIZE * GRID_SIZE],
            objects: Vec::new(),
            room_type: p.room_type,
            seed: p.seed,
            layout: p.layout,
            spawn: AgentPose {
                cell: Cell::new(0, 0),
                heading: Heading::N,
                look: Look::Level,
            },
        };
        Self {
            p,
            rng,
            scene,
            wall_cells: Vec::new(),
            inner_cells: Vec::new(),
        }
    }

    fn build(mut self) -> Option<(GridScene, TaskSpec)> {
        self.layout();
        self.place_furniture()?;
        let task = self.make_task()?;
        self.check(&task)?;
        Some((self.scene, task))
    }

    fn set(&mut self, c: Cell, t: Terrain) {
        let i = self.scene.index(c);
        self.scene.terrain[i] = t;
    }

    fn layout(&mut self) {
        let (lo, hi) = match self.p.layout {
            LayoutFamily::Seen => (9, 12),
            LayoutFamily::Unseen => (11, 14),
        };
        let h = self.rng.gen_range(lo..=hi);
        let w = self.rng.gen_range(lo..=hi);
        let r0 = self.rng.gen_range(0..=GRID_SIZE - h - 2);
        let c0 = self.rng.gen_range(0..=GRID_SIZE - w - 2);
        for r in r0..r0 + h + 2 {
            for c in c0..c0 + w + 2 {
                let border = r == r0 || c == c0 || r == r0 + h + 1 || c == c0 + w + 1;
                self.set(Cell::new(r, c), if border { Terrain::Wall } else { Terrain::Floor });
            }
        }
        if self.p.layout == LayoutFamily::Unseen {
            let len_frac = self.rng.gen_range(0.45..0.6);
            let from_start = self.rng.gen_bool(0.5);
            if self.rng.gen_bool(0.5) {
                let col = c0 + 1 + w / 2;
                let len = ((h as f64) * len_frac) as usize;
                for k in 0..len {
                    let r = if from_start { r0 + 1 + k } else { r0 + h - k };
                    self.set(Cell::new(r, col), Terrain::Wall);
                }
            } else {
                let row = r0 + 1 + h / 2;
                let len = ((w as f64) * len_frac) as usize;
                for k in 0..len {
                    let c = if from_start { c0 + 1 + k } else { c0 + w - k };
                    self.set(Cell::new(row, c), Terrain::Wall);
                }
            }
        }

        let center = Cell::new(r0 + 1 + h / 2, c0 + 1 + w / 2);
        let mut floor: Vec<Cell> = (0..GRID_SIZE * GRID_SIZE)
            .map(|i| self.scene.cell_at(i))
            .filter(|&c| self.scene.terrain_at(c) == Terrain::Floor)
            .collect();
        floor.sort_by_key(|&c| (c.manhattan(center), c));
        let touches_wall = |s: &GridScene, c: Cell| {
            super::Heading::ALL
                .iter()
                .any(|&hd| c.step(hd).is_some_and(|n| s.terrain_at(n) == Terrain::Wall))
        };
        let spawn = *floor
            .iter()
            .find(|&&c| !touches_wall(&self.scene, c))
            .expect("room interior has a non-wall-adjacent cell");
        self.scene.spawn = AgentPose {
            cell: spawn,
            heading: Heading::ALL[self.rng.gen_range(0..4)],
            look: Look::Level,
        };
        for &c in &floor {
            if c.manhattan(spawn) <= 1 {
                continue;
            }
            if touches_wall(&self.scene, c) {
                self.wall_cells.push(c);
            } else if c.manhattan(spawn) >= 2 {
                self.inner_cells.push(c);
            }
        }
        self.wall_cells.sort();
        self.inner_cells.sort();
        self.wall_cells.shuffle(self.rng);
        self.inner_cells.shuffle(self.rng);
    }

    fn add(&mut self, cat: Category, cell: Cell) -> usize {
        let id = self.scene.objects.len();
        self.scene.objects.push(ObjectInstance::new(id, cat, cell));
        id
    }

    fn place_furniture(&mut self) -> Option<()> {
        for &(cat, lo, hi) in furniture(self.p.room_type) {
            let n = self.rng.gen_range(lo..=hi);
            for _ in 0..n {
                let cell = self.wall_cells.pop()?;
                self.add(cat, cell);
            }
        }
        Some(())
    }

    fn fixed_ids(&self, pred: impl Fn(&ObjectInstance) -> bool) -> Vec<usize> {
        self.scene
            .objects
            .iter()
            .filter(|o| o.category.is_fixed() && pred(o))
            .map(|o| o.id)
            .collect()
    }

    fn describable(&self, id: usize) -> bool {
        self.scene.descriptor(id).is_some()
    }

    fn pick<T: Copy>(&mut self, v: &[T]) -> Option<T> {
        v.choose(self.rng).copied()
    }

    fn place_inside(&mut self, cat: Category, container: usize) -> usize {
        let cell = self.scene.objects[container].cell.expect("fixed object has a cell");
        let id = self.add(cat, cell);
        self.scene.objects[id].contained_in = Some(container);
        id
    }

    fn place_loose(&mut self, cat: Category) -> Option<usize> {
        let cell = self.inner_cells.pop()?;
        Some(self.add(cat, cell))
    }

    /// Hides `cat` inside a random closed openable whose category is not excluded.
    fn hide(&mut self, cat: Category, exclude: &[Category], describable: bool) -> Option<usize> {
        let spots: Vec<usize> = self.fixed_ids(|o| o.openable() && !exclude.contains(&o.category));
        let spots: Vec<usize> = spots
            .into_iter()
            .filter(|&s| !describable || self.describable(s))
            .collect();
        let c = self.pick(&spots)?;
        Some(self.place_inside(cat, c))
    }

    fn on_surface(&mut self, cat: Category, exclude: &[Category]) -> Option<usize> {
        let spots = self.fixed_ids(|o| {
            o.category.is_receptacle()
                && !o.openable()
                && !exclude.contains(&o.category)
                && !matches!(o.category, Category::SinkBasin | Category::GarbageCan)
        });
        match self.pick(&spots) {
            Some(s) => Some(self.place_inside(cat, s)),
            None => self.place_loose(cat),
        }
    }

    fn hint(&self, id: usize, word: &str) -> String {
        match self.scene.objects[id].contained_in {
            Some(r) if self.scene.objects[r].openable() => format!(
                " {word} the {}{}",
                self.desc_prefix(r),
                self.scene.objects[r].category.word()
            ),
            _ => String::new(),
        }
    }

    fn desc_prefix(&self, id: usize) -> String {
        match self.scene.descriptor(id) {
            Some(Some(d)) => format!("{d} "),
            _ => String::new(),
        }
    }

    fn place_phrase(&self, id: usize) -> String {
        let c = self.scene.objects[id].category;
        format!("{} the {}{}", prep(c), self.desc_prefix(id), c.word())
    }

    fn destination(&mut self, exclude: &[Category]) -> Option<usize> {
        let mut cats: Vec<Category> = self
            .fixed_ids(|o| o.category.is_receptacle() && !exclude.contains(&o.category))
            .into_iter()
            .map(|i| self.scene.objects[i].category)
            .collect();
        cats.sort();
        cats.dedup();
        let cat = self.pick(&cats)?;
        let ids = self.fixed_ids(|o| o.category == cat);
        let ids: Vec<usize> = ids.into_iter().filter(|&i| self.describable(i)).collect();
        self.pick(&ids)
    }

    fn single(&self, cat: Category) -> Option<usize> {
        self.scene.instances(cat).next().map(|o| o.id)
    }

    /// Places a goal-relevant pickupable: hidden when hard, otherwise loose
    /// (primary) or on a surface.
    fn goal_object(&mut self, cat: Category, primary: bool, exclude: &[Category]) -> Option<usize> {
        if self.p.hard {
            self.hide(cat, exclude, true)
        } else if primary {
            self.place_loose(cat)
        } else {
            self.on_surface(cat, exclude)
        }
    }

    fn make_task(&mut self) -> Option<TaskSpec> {
        use Category::*;
        let room = self.p.room_type;
        let task_type = self.pick(TaskType::for_room(room))?;
        let objects = small_objects(room);
        let mut t = TaskTargets::default();
        let mut steps: Vec<String> = Vec::new();
        let mut conditions = Vec::new();
        let goal_statement;
        let mut goal_cats: Vec<Category>;

        match task_type {
            TaskType::PickPlace | TaskType::Pick2Place => {
                let x = self.pick(objects)?;
                let z = self.destination(&[])?;
                let zc = self.scene.objects[z].category;
                t.object = self.goal_object(x, true, &[zc])?;
                t.destination = Some(z);
                goal_cats = vec![x];
                steps.push(format!("Take the {}{}.", x.word(), self.hint(t.object, "from")));
                steps.push(format!("Put the {} {}.", x.word(), self.place_phrase(z)));
                conditions.push(Condition::In {
                    object: x,
                    receptacle: zc,
                    count: 1,
                });
                if task_type == TaskType::Pick2Place {
                    let o2 = self.goal_object(x, false, &[zc])?;
                    t.object2 = Some(o2);
                    steps.push(format!("Take another {}{}.", x.word(), self.hint(o2, "from")));
                    steps.push(format!("Put the {} {}.", x.word(), self.place_phrase(z)));
                    conditions.push(Condition::In {
                        object: x,
                        receptacle: zc,
                        count: 2,
                    });
                    goal_statement = format!("Put two {} {} the {}.", plural(x), prep(zc), zc.word());
                } else {
                    goal_statement = format!("Put a {} {} the {}.", x.word(), prep(zc), zc.word());
                }
            }
            TaskType::StackPlace => {
                let (vessels, items): (&[Category], &[Category]) = match room {
                    RoomType::Kitchen => (&[Pan, Bowl, Plate], &[Spoon, Fork, Knife, Apple, Tomato, Egg, Potato]),
                    RoomType::Bedroom => (&[Bowl], &[Pencil, KeyChain, CreditCard, Watch]),
                    RoomType::LivingRoom => (&[Bowl, Plate], &[KeyChain, CreditCard, RemoteControl, Watch]),
                    RoomType::Bathroom => return None,
                };
                let y = self.pick(vessels)?;
                let x = self.pick(items)?;
                let z = self.destination(&[])?;
                let zc = self.scene.objects[z].category;
                t.object = self.goal_object(x, true, &[zc])?;
                let v = self.goal_object(y, false, &[zc])?;
                t.vessel = Some(v);
                t.destination = Some(z);
                goal_cats = vec![x, y];
                steps.push(format!("Take the {}{}.", x.word(), self.hint(t.object, "from")));
                steps.push(format!(
                    "Put the {} in the {}{}.",
                    x.word(),
                    y.word(),
                    self.hint(v, "inside")
                ));
                steps.push(format!(
                    "Move the {} to the {}{}.",
                    y.word(),
                    self.desc_prefix(z),
                    zc.word()
                ));
                conditions.push(Condition::In {
                    object: x,
                    receptacle: y,
                    count: 1,
                });
                conditions.push(Condition::In {
                    object: y,
                    receptacle: zc,
                    count: 1,
                });
                goal_statement = format!(
                    "Put a {} with a {} in it {} the {}.",
                    y.word(),
                    x.word(),
                    prep(zc),
                    zc.word()
                );
            }
            TaskType::CleanPlace | TaskType::HeatPlace | TaskType::CoolPlace => {
                let (pool, appliance, verb, flag, adj): (&[Category], Category, &str, StateFlag, &str) = match task_type
                {
                    TaskType::CleanPlace if room == RoomType::Bathroom => {
                        (&[Cloth, SoapBar, Cup], SinkBasin, "Rinse", StateFlag::Cleaned, "clean")
                    }
                    TaskType::CleanPlace => (
                        &[Mug, Cup, Bowl, Plate, Pan, Apple, Lettuce, Tomato, Knife, Spoon, Fork],
                        SinkBasin,
                        "Rinse",
                        StateFlag::Cleaned,
                        "clean",
                    ),
                    TaskType::HeatPlace => (
                        &[Mug, Cup, Bowl, Plate, Apple, Tomato, Bread, Potato, Egg],
                        Microwave,
                        "Heat",
                        StateFlag::Heated,
                        "heated",
                    ),
                    _ => (
                        &[Apple, Lettuce, Tomato, Bread, Potato, Egg, Mug, Cup, Bowl, Plate, Pan],
                        Fridge,
                        "Chill",
                        StateFlag::Cooled,
                        "chilled",
                    ),
                };
                let x = self.pick(pool)?;
                let app = self.single(appliance)?;
                let z = self.destination(&[appliance])?;
                let zc = self.scene.objects[z].category;
                t.object = self.goal_object(x, true, &[zc])?;
                t.appliance = Some(app);
                t.destination = Some(z);
                goal_cats = vec![x];
                t.slice = task_type == TaskType::CoolPlace && x.is_sliceable() && self.rng.gen_bool(0.35);
                let mut statement_adj = adj.to_string();
                if t.slice {
                    let knife = self.goal_object(Knife, false, &[zc, CounterTop])?;
                    let counters: Vec<usize> = self.fixed_ids(|o| o.category == CounterTop);
                    let counters: Vec<usize> = counters.into_iter().filter(|&i| self.describable(i)).collect();
                    let rest = self.pick(&counters)?;
                    t.tool = Some(knife);
                    t.tool_rest = Some(rest);
                    goal_cats.push(Knife);
                    steps.push(format!("Take the knife{}.", self.hint(knife, "from")));
                    steps.push(format!("Slice the {}{}.", x.word(), self.hint(t.object, "in")));
                    steps.push(format!("Put the knife {}.", self.place_phrase(rest)));
                    conditions.push(Condition::State {
                        object: x,
                        flag: StateFlag::Sliced,
                    });
                    statement_adj = format!("{adj} sliced");
                }
                steps.push(format!("Take the {}{}.", x.word(), self.hint(t.object, "from")));
                steps.push(format!("{verb} the {} in the {}.", x.word(), appliance.word()));
                steps.push(format!("Put the {} {}.", x.word(), self.place_phrase(z)));
                conditions.push(Condition::State { object: x, flag });
                conditions.push(Condition::In {
                    object: x,
                    receptacle: zc,
                    count: 1,
                });
                goal_statement = format!("Put a {statement_adj} {} {} the {}.", x.word(), prep(zc), zc.word());
            }
            TaskType::Examine => {
                let pool: &[Category] = match room {
                    RoomType::Bedroom => &[KeyChain, CreditCard, CellPhone, Book, Pencil, Watch, Vase],
                    _ => &[RemoteControl, KeyChain, CreditCard, Book, Vase, Watch, CellPhone],
                };
                let x = self.pick(pool)?;
                let lamps = self.fixed_ids(|o| o.toggleable() && !o.category.is_receptacle());
                let lamp = self.pick(&lamps)?;
                let lc = self.scene.objects[lamp].category;
                t.object = self.goal_object(x, true, &[])?;
                t.lamp = Some(lamp);
                goal_cats = vec![x];
                steps.push(format!("Take the {}{}.", x.word(), self.hint(t.object, "from")));
                steps.push(format!("Turn on the {}.", lc.word()));
                conditions.push(Condition::Holding { object: x });
                conditions.push(Condition::State {
                    object: lc,
                    flag: StateFlag::On,
                });
                goal_statement = format!("Examine a {} under the {}.", x.word(), lc.word());
            }
        }

        let dest_cat = t.destination.map(|z| self.scene.objects[z].category);
        let exclude: Vec<Category> = dest_cat.into_iter().collect();

        // The kitchen fridge is always stocked with a mug.
        if room == RoomType::Kitchen {
            let fridge = self.single(Fridge)?;
            let conflicts = conditions.iter().any(|c| {
                matches!(
                    c,
                    Condition::In {
                        object: Mug,
                        receptacle: Fridge,
                        ..
                    }
                )
            });
            if !conflicts {
                self.place_inside(Mug, fridge);
            }
        }

        goal_cats.sort();
        goal_cats.dedup();
        for &cat in &goal_cats {
            let extra = if cat == self.scene.objects[t.object].category {
                self.rng.gen_range(1..=2)
            } else {
                self.rng.gen_range(0..=1)
            };
            for _ in 0..extra {
                if self.p.hard || self.rng.gen_bool(0.5) {
                    self.hide(cat, &exclude, false)?;
                } else {
                    let mut ex = exclude.clone();
                    ex.push(cat);
                    self.on_surface(cat, &ex)?;
                }
            }
        }

        let clutter_pool: Vec<Category> = objects
            .iter()
            .copied()
            .filter(|c| !goal_cats.contains(c) && !(c.is_vessel() && goal_cats.iter().any(|g| g.is_vessel())))
            .collect();
        let n = self.rng.gen_range(2..=4);
        for _ in 0..n {
            let Some(cat) = self.pick(&clutter_pool) else { break };
            let roll: f64 = self.rng.gen();
            if roll < 0.4 {
                self.on_surface(cat, &[])?;
            } else if roll < 0.8 {
                self.hide(cat, &[], false)?;
            } else {
                self.place_loose(cat)?;
            }
        }

        Some(TaskSpec {
            task_type,
            goal_statement,
            step_instructions: steps,
            goal_conditions: conditions,
            hard: self.p.hard,
            targets: t,
        })
    }

    fn check(&self, task: &TaskSpec) -> Option<()> {
        self.scene.validate().ok()?;
        // Every object must be reachable: some free neighbour connected to spawn.
        let reach = reachable(&self.scene, self.scene.spawn.cell);
        for o in &self.scene.objects {
            let c = o.cell?;
            let ok = Heading::ALL.iter().any(|&h| {
                c.step(h)
                    .is_some_and(|n| self.scene.in_bounds(n) && reach[self.scene.index(n)])
            });
            if !ok {
                return None;
            }
        }
        let state = WorldState::new(self.scene.clone());
        if super::check_goal(&state, task).satisfied_count > 0 {
            return None;
        }
        if self.p.hard {
            let relevant = hard_relevant(&self.scene, task);
            if relevant.iter().any(|&id| !self.scene.is_sealed(id)) {
                return None;
            }
        }
        expert_plan(&self.scene, task).ok()?;
        Some(())
    }
}

/// Instances of every goal-relevant pickupable category.
pub(crate) fn hard_relevant(scene: &GridScene, task: &TaskSpec) -> Vec<usize> {
    let t = &task.targets;
    let mut cats = vec![scene.objects[t.object].category];
    for id in [t.vessel, t.tool].into_iter().flatten() {
        cats.push(scene.objects[id].category);
    }
    scene
        .objects
        .iter()
        .filter(|o| cats.contains(&o.category))
        .map(|o| o.id)
        .collect()
}

/// Cells reachable from `start` through free cells.
pub(crate) fn reachable(scene: &GridScene, start: Cell) -> Vec<bool> {
    let mut seen = vec![false; scene.width * scene.height];
    let mut q = VecDeque::new();
    seen[scene.index(start)] = true;
    q.push_back(start);
    while let Some(c) = q.pop_front() {
        for h in Heading::ALL {
            if let Some(n) = c.step(h) {
                if scene.in_bounds(n) && !seen[scene.index(n)] && scene.is_free(n) {
                    seen[scene.index(n)] = true;
                    q.push_back(n);
                }
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plural_forms() {
        assert_eq!(plural(Category::Knife), "knives");
        assert_eq!(plural(Category::Tomato), "tomatoes");
        assert_eq!(plural(Category::Mug), "mugs");
        assert_eq!(plural(Category::Watch), "watches");
    }

    #[test]
    fn descriptor_singles_out_extremes() {
        let (scene, _) = generate_scene(11, RoomType::Kitchen, false);
        for o in &scene.objects {
            if let Some(Some(d)) = scene.descriptor(o.id) {
                let c = o.cell.unwrap();
                for other in scene.instances(o.category).filter(|x| x.id != o.id) {
                    let oc = other.cell.unwrap();
                    let ok = match d {
                        "northern" => c.row < oc.row,
                        "southern" => c.row > oc.row,
                        "western" => c.col < oc.col,
                        _ => c.col > oc.col,
                    };
                    assert!(ok);
                }
            }
        }
    }

    #[test]
    fn spawn_is_walkable_and_scene_valid() {
        for seed in 0..20 {
            for room in RoomType::ALL {
                let (s, _) = generate_scene(seed, room, seed % 2 == 0);
                s.validate().unwrap();
            }
        }
    }
}
