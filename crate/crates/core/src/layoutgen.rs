//! Procedural layout generation.
//!
//! Each attempt draws a random wall/floor grid, scatters `N` interactive
//! blocks (at least one of each kind), rejects near-duplicates, places the
//! two players, turns blocks no player can reach into walls, and keeps the
//! layout only if it is solvable and has enough floor.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{tile_hamming, Layout, Pos, Tile, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use crate::rng::{self, tag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Number of layouts to emit.
    pub count: usize,
    pub blocks_min: usize,
    pub blocks_max: usize,
    pub min_floor: usize,
    pub width: usize,
    pub height: usize,
    pub dedup_hamming_min: usize,
    pub seed: u64,
    /// Attempt cap; `None` means `1000 * count`.
    pub max_attempts: Option<u64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            count: 6000,
            blocks_min: 6,
            blocks_max: 9,
            min_floor: 14,
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            dedup_hamming_min: 1,
            seed: 0,
            max_attempts: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let cells = self.width * self.height;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.count == 0 {
            return bad("count must be at least 1".into());
        }
        if self.blocks_min < Tile::INTERACTIVE.len() {
            return bad(format!(
                "blocks_min {} cannot hold one of each of the {} interactive kinds",
                self.blocks_min,
                Tile::INTERACTIVE.len()
            ));
        }
        if self.blocks_min > self.blocks_max {
            return bad(format!(
                "blocks_min {} > blocks_max {}",
                self.blocks_min, self.blocks_max
            ));
        }
        // Two player cells are part of the floor budget.
        if self.min_floor.max(2) + self.blocks_min > cells {
            return bad(format!(
                "min_floor {} + blocks_min {} exceeds the {cells} cells of a {}x{} grid",
                self.min_floor, self.blocks_min, self.width, self.height
            ));
        }
        if self.dedup_hamming_min == 0 {
            return bad("dedup_hamming_min must be at least 1".into());
        }
        Ok(())
    }

    fn attempt_cap(&self) -> u64 {
        self.max_attempts.unwrap_or(1000 * self.count as u64)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayoutSet {
    layouts: Vec<Layout>,
}

impl LayoutSet {
    /// Builds a set, rejecting duplicate ids.
    pub fn new(layouts: Vec<Layout>) -> Result<Self> {
        let mut ids: Vec<&str> = layouts.iter().map(|l| l.id()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidLayout(format!(
                "duplicate layout id {}",
                w[0]
            )));
        }
        Ok(LayoutSet { layouts })
    }

    pub fn layouts(&self) -> &[Layout] {
        &self.layouts
    }

    pub fn len(&self) -> usize {
        self.layouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layouts.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Layout> {
        self.layouts.iter().find(|l| l.id() == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.layouts.iter().map(|l| l.id())
    }
}

#[derive(Clone, Debug)]
pub struct GenerateReport {
    pub set: LayoutSet,
    pub attempts: u64,
    /// True when the attempt cap was hit before `count` layouts were found.
    pub stalled: bool,
}

pub fn generate(config: &GeneratorConfig) -> Result<GenerateReport> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let mut accepted: Vec<Layout> = Vec::with_capacity(config.count);
    let mut attempts = 0;
    let cap = config.attempt_cap();
    while accepted.len() < config.count && attempts < cap {
        let mut rng = rng::stream(config.seed, &[tag::LAYOUT, attempts]);
        attempts += 1;

        let wall_prob = rng.gen_range(0.1..0.45);
        let mut tiles: Vec<Tile> = (0..w * h)
            .map(|_| {
                if rng.gen_bool(wall_prob) {
                    Tile::Wall
                } else {
                    Tile::Floor
                }
            })
            .collect();

        let n_blocks = rng.gen_range(config.blocks_min..=config.blocks_max);
        let mut cells: Vec<usize> = (0..w * h).collect();
        cells.shuffle(&mut rng);
        let mut kinds: Vec<Tile> = Tile::INTERACTIVE.to_vec();
        while kinds.len() < n_blocks {
            kinds.push(Tile::INTERACTIVE[rng.gen_range(0..Tile::INTERACTIVE.len())]);
        }
        for (cell, kind) in cells.iter().zip(&kinds) {
            tiles[*cell] = *kind;
        }

        let is_dup = |t: &[Tile]| {
            accepted
                .iter()
                .any(|l| tile_hamming(l.tiles(), t) < config.dedup_hamming_min)
        };
        if is_dup(&tiles) {
            continue;
        }

        let floor: Vec<usize> = (0..w * h).filter(|i| tiles[*i] == Tile::Floor).collect();
        if floor.len() < 2 {
            continue;
        }
        let picks: Vec<usize> = floor.choose_multiple(&mut rng, 2).copied().collect();
        let starts = [
            Pos::new(picks[0] % w, picks[0] / w),
            Pos::new(picks[1] % w, picks[1] / w),
        ];
        let layout = prune_unreachable(&Layout::new(w, h, tiles, starts)?);

        let blocks = layout.interactive_count();
        if layout.floor_count() < config.min_floor
            || !(config.blocks_min..=config.blocks_max).contains(&blocks)
            || !solvable(&layout)
            || is_dup(layout.tiles())
        {
            continue;
        }
        accepted.push(layout);
    }
    let stalled = accepted.len() < config.count;
    if stalled {
        log::warn!(
            "layout generation stalled after {attempts} attempts with {} of {} layouts",
            accepted.len(),
            config.count
        );
    }
    Ok(GenerateReport {
        set: LayoutSet::new(accepted)?,
        attempts,
        stalled,
    })
}

/// Floor cells reachable from `from` by orthogonal floor-only moves
/// (row-major mask).
pub fn reachable_floor(layout: &Layout, from: Pos) -> Vec<bool> {
    let mut seen = vec![false; layout.tiles().len()];
    if layout.tile(from) != Tile::Floor {
        return seen;
    }
    let mut stack = vec![from];
    seen[layout.index(from)] = true;
    while let Some(p) = stack.pop() {
        for n in layout.neighbors(p) {
            let i = layout.index(n);
            if !seen[i] && layout.tile(n) == Tile::Floor {
                seen[i] = true;
                stack.push(n);
            }
        }
    }
    seen
}

/// Replaces every interactive block that neither player can stand next to
/// with a wall. Idempotent.
pub fn prune_unreachable(layout: &Layout) -> Layout {
    let masks = layout.starts().map(|s| reachable_floor(layout, s));
    let mut tiles = layout.tiles().to_vec();
    for (i, tile) in tiles.iter_mut().enumerate() {
        if !tile.is_interactive() {
            continue;
        }
        let pos = layout.pos_of(i);
        let reachable = layout
            .neighbors(pos)
            .any(|n| masks.iter().any(|m| m[layout.index(n)]));
        if !reachable {
            *tile = Tile::Wall;
        }
    }
    Layout::new(layout.width(), layout.height(), tiles, layout.starts())
        .expect("pruning keeps starts on floor")
}

/// A* over floor cells with a Manhattan heuristic. Returns the path length.
pub fn a_star(layout: &Layout, from: Pos, to: Pos) -> Option<usize> {
    if layout.tile(from) != Tile::Floor || layout.tile(to) != Tile::Floor {
        return None;
    }
    let n = layout.tiles().len();
    let mut best = vec![usize::MAX; n];
    let mut open = BinaryHeap::new();
    best[layout.index(from)] = 0;
    open.push(Reverse((from.manhattan(to), 0usize, layout.index(from))));
    while let Some(Reverse((_, g, i))) = open.pop() {
        let p = layout.pos_of(i);
        if p == to {
            return Some(g);
        }
        if g > best[i] {
            continue;
        }
        for nb in layout.neighbors(p) {
            let j = layout.index(nb);
            if layout.tile(nb) == Tile::Floor && g + 1 < best[j] {
                best[j] = g + 1;
                open.push(Reverse((g + 1 + nb.manhattan(to), g + 1, j)));
            }
        }
    }
    None
}

/// True when some player start can walk next to at least one block of every
/// interactive kind, so a single player can run the whole soup cycle.
pub fn solvable(layout: &Layout) -> bool {
    layout.starts().iter().any(|&start| {
        Tile::INTERACTIVE.iter().all(|&kind| {
            layout.positions_of(kind).any(|block| {
                layout
                    .neighbors(block)
                    .filter(|n| layout.tile(*n) == Tile::Floor)
                    .any(|n| a_star(layout, start, n).is_some())
            })
        })
    })
}
