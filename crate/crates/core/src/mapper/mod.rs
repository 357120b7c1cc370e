//! Top-down semantic map built from egocentric observations.
//!
//! Channels are the object categories in catalog order, then an obstacle
//! channel, then an explored channel. Occupancy is binary; on conflicting
//! observations the newest one wins.

use serde::{Deserialize, Serialize};

use crate::world::{Category, Cell, Observation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "SparseMap", try_from = "SparseMap")]
pub struct SemanticMap {
    pub height: usize,
    pub width: usize,
    /// One flat row-major 0/1 array per channel.
    pub channels: Vec<Vec<u8>>,
}

/// On-disk form: the set cell indices of each channel.
#[derive(Serialize, Deserialize)]
struct SparseMap {
    height: usize,
    width: usize,
    channels: Vec<Vec<u32>>,
}

impl From<SemanticMap> for SparseMap {
    fn from(m: SemanticMap) -> Self {
        let channels = m
            .channels
            .iter()
            .map(|ch| {
                ch.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0)
                    .map(|(i, _)| i as u32)
                    .collect()
            })
            .collect();
        Self {
            height: m.height,
            width: m.width,
            channels,
        }
    }
}

impl TryFrom<SparseMap> for SemanticMap {
    type Error = String;

    fn try_from(s: SparseMap) -> Result<Self, String> {
        if s.channels.len() != Self::channel_count() {
            return Err(format!(
                "expected {} channels, found {}",
                Self::channel_count(),
                s.channels.len()
            ));
        }
        let mut m = Self::new(s.height, s.width);
        for (ch, idx) in s.channels.iter().enumerate() {
            for &i in idx {
                let i = i as usize;
                if i >= m.cells() {
                    return Err(format!("cell index {i} out of range"));
                }
                m.channels[ch][i] = 1;
            }
        }
        Ok(m)
    }
}

/// A category seen on the map and its instance cell nearest the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedLandmark {
    pub category: Category,
    pub cell: Cell,
}

impl SemanticMap {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            channels: vec![vec![0; height * width]; Self::channel_count()],
        }
    }

    /// Category channels plus obstacle and explored.
    pub fn channel_count() -> usize {
        Category::count() + 2
    }

    pub fn obstacle_channel() -> usize {
        Category::count()
    }

    pub fn explored_channel() -> usize {
        Category::count() + 1
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_at(&self, i: usize) -> Cell {
        Cell::new(i / self.width, i % self.width)
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn get(&self, channel: usize, c: Cell) -> bool {
        self.in_bounds(c) && self.channels[channel][self.index(c)] != 0
    }

    pub fn has(&self, cat: Category, c: Cell) -> bool {
        self.get(cat.index(), c)
    }

    pub fn explored(&self, c: Cell) -> bool {
        self.get(Self::explored_channel(), c)
    }

    pub fn obstacle(&self, c: Cell) -> bool {
        self.get(Self::obstacle_channel(), c)
    }

    /// Explored and not an obstacle.
    pub fn known_free(&self, c: Cell) -> bool {
        self.explored(c) && !self.obstacle(c)
    }

    pub fn explored_count(&self) -> usize {
        self.channels[Self::explored_channel()]
            .iter()
            .filter(|&&v| v != 0)
            .count()
    }

    /// Cells where `cat` is currently mapped, row-major.
    pub fn cells_of(&self, cat: Category) -> Vec<Cell> {
        self.channels[cat.index()]
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| self.cell_at(i))
            .collect()
    }

    /// Integrates one observation: every visible cell becomes explored and its
    /// category and obstacle channels are overwritten with what is seen now.
    pub fn update(&mut self, obs: &Observation) {
        let c_count = Category::count();
        for vc in &obs.cells {
            if !self.in_bounds(vc.cell) {
                continue;
            }
            let i = self.index(vc.cell);
            for ch in 0..c_count {
                self.channels[ch][i] = 0;
            }
            self.channels[Self::obstacle_channel()][i] = vc.obstacle as u8;
            self.channels[Self::explored_channel()][i] = 1;
        }
        for o in &obs.objects {
            if self.in_bounds(o.cell) {
                let i = self.index(o.cell);
                self.channels[o.category.index()][i] = 1;
            }
        }
    }

    /// Categories with any mapped cell, sorted by name, each with the mapped
    /// cell nearest `from` (Manhattan distance, row-major ties).
    pub fn observed_landmarks(&self, from: Cell) -> Vec<ObservedLandmark> {
        let mut out: Vec<ObservedLandmark> = Category::ALL
            .iter()
            .filter_map(|&cat| {
                self.cells_of(cat)
                    .into_iter()
                    .min_by_key(|&c| (c.manhattan(from), c))
                    .map(|cell| ObservedLandmark { category: cat, cell })
            })
            .collect();
        out.sort_by(|a, b| a.category.name().cmp(b.category.name()));
        out
    }

    /// Explored, free cells with at least one unexplored in-bounds neighbour.
    pub fn frontier(&self) -> Vec<Cell> {
        (0..self.cells())
            .map(|i| self.cell_at(i))
            .filter(|&c| self.known_free(c) && !self.unexplored_neighbours(c).is_empty())
            .collect()
    }

    pub fn unexplored_neighbours(&self, c: Cell) -> Vec<crate::world::Heading> {
        crate::world::Heading::ALL
            .into_iter()
            .filter(|&h| c.step(h).is_some_and(|n| self.in_bounds(n) && !self.explored(n)))
            .collect()
    }
}
