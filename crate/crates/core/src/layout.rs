//! Kitchen layouts: a fixed grid of tiles plus the two player start cells.
//!
//! Text format, one line per row:
//!
//! | char  | tile            |
//! |-------|-----------------|
//! | `X`   | wall            |
//! | space | floor           |
//! | `O`   | onion dispenser |
//! | `D`   | dish dispenser  |
//! | `P`   | pot             |
//! | `S`   | serving window  |
//! | `1`/`2` | player start (floor underneath) |
//!
//! The trailing newline is optional; rows must all have the same length.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_WIDTH: usize = 7;
pub const DEFAULT_HEIGHT: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tile {
    Floor,
    Wall,
    OnionDispenser,
    DishDispenser,
    Pot,
    Serving,
}

impl Tile {
    pub const INTERACTIVE: [Tile; 4] = [
        Tile::OnionDispenser,
        Tile::DishDispenser,
        Tile::Pot,
        Tile::Serving,
    ];

    /// Integer code used by the wire protocol and the dedup embedding.
    pub fn code(self) -> u8 {
        match self {
            Tile::Floor => 0,
            Tile::Wall => 1,
            Tile::OnionDispenser => 2,
            Tile::DishDispenser => 3,
            Tile::Pot => 4,
            Tile::Serving => 5,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Tile::Floor => ' ',
            Tile::Wall => 'X',
            Tile::OnionDispenser => 'O',
            Tile::DishDispenser => 'D',
            Tile::Pot => 'P',
            Tile::Serving => 'S',
        }
    }

    pub fn is_interactive(self) -> bool {
        !matches!(self, Tile::Floor | Tile::Wall)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub const fn new(x: usize, y: usize) -> Self {
        Pos { x, y }
    }

    pub fn manhattan(self, other: Pos) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Immutable kitchen layout. Construct through [`Layout::new`] or
/// [`Layout::parse`]; both validate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutRepr", into = "LayoutRepr")]
pub struct Layout {
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    starts: [Pos; 2],
    id: String,
}

impl Layout {
    pub fn new(width: usize, height: usize, tiles: Vec<Tile>, starts: [Pos; 2]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidLayout("layout must be non-empty".into()));
        }
        if tiles.len() != width * height {
            return Err(Error::InvalidLayout(format!(
                "grid has {} cells, expected {width}x{height}",
                tiles.len()
            )));
        }
        for (seat, start) in starts.iter().enumerate() {
            if start.x >= width || start.y >= height {
                return Err(Error::InvalidLayout(format!(
                    "start {} at {start} is out of bounds",
                    seat + 1
                )));
            }
            let tile = tiles[start.y * width + start.x];
            if tile != Tile::Floor {
                return Err(Error::InvalidLayout(format!(
                    "start {} at {start} is on {tile:?}, not Floor",
                    seat + 1
                )));
            }
        }
        if starts[0] == starts[1] {
            return Err(Error::InvalidLayout("player starts coincide".into()));
        }
        let mut layout = Layout {
            width,
            height,
            tiles,
            starts,
            id: String::new(),
        };
        layout.id = content_id(&layout.to_text());
        Ok(layout)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        if body.is_empty() {
            return Err(Error::LayoutParse {
                line: 1,
                column: 1,
                message: "empty layout".into(),
            });
        }
        let mut width = None;
        let mut tiles = Vec::new();
        let mut starts: [Option<Pos>; 2] = [None, None];
        for (y, row) in body.split('\n').enumerate() {
            let mut row_len = 0;
            for (x, ch) in row.chars().enumerate() {
                row_len += 1;
                let tile = match ch {
                    ' ' => Tile::Floor,
                    'X' => Tile::Wall,
                    'O' => Tile::OnionDispenser,
                    'D' => Tile::DishDispenser,
                    'P' => Tile::Pot,
                    'S' => Tile::Serving,
                    '1' | '2' => {
                        let seat = if ch == '1' { 0 } else { 1 };
                        if starts[seat].is_some() {
                            return Err(Error::LayoutParse {
                                line: y + 1,
                                column: x + 1,
                                message: format!("duplicate player start `{ch}`"),
                            });
                        }
                        starts[seat] = Some(Pos::new(x, y));
                        Tile::Floor
                    }
                    other => {
                        return Err(Error::LayoutParse {
                            line: y + 1,
                            column: x + 1,
                            message: format!("unknown tile character {other:?}"),
                        })
                    }
                };
                tiles.push(tile);
            }
            match width {
                None => width = Some(row_len),
                Some(w) if w != row_len => {
                    return Err(Error::LayoutParse {
                        line: y + 1,
                        column: row_len.min(w) + 1,
                        message: format!("ragged row: length {row_len}, expected {w}"),
                    })
                }
                Some(_) => {}
            }
        }
        let width = width.unwrap_or(0);
        let height = tiles.len() / width.max(1);
        let missing = |seat: usize| Error::LayoutParse {
            line: height,
            column: width,
            message: format!("missing player start `{}`", seat + 1),
        };
        let starts = [
            starts[0].ok_or_else(|| missing(0))?,
            starts[1].ok_or_else(|| missing(1))?,
        ];
        Layout::new(width, height, tiles, starts)
    }

    /// Canonical text form, with a trailing newline.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let pos = Pos::new(x, y);
                let ch = if pos == self.starts[0] {
                    '1'
                } else if pos == self.starts[1] {
                    '2'
                } else {
                    self.tile(pos).symbol()
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn starts(&self) -> [Pos; 2] {
        self.starts
    }

    /// Stable content hash of grid and starts.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tile(&self, pos: Pos) -> Tile {
        self.tiles[pos.y * self.width + pos.x]
    }

    pub fn index(&self, pos: Pos) -> usize {
        pos.y * self.width + pos.x
    }

    pub fn pos_of(&self, index: usize) -> Pos {
        Pos::new(index % self.width, index / self.width)
    }

    pub fn in_bounds(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Orthogonal neighbour in the given `(dx, dy)` direction, if in bounds.
    pub fn offset(&self, pos: Pos, dx: isize, dy: isize) -> Option<Pos> {
        let (x, y) = (pos.x as isize + dx, pos.y as isize + dy);
        self.in_bounds(x, y)
            .then(|| Pos::new(x as usize, y as usize))
    }

    pub fn neighbors(&self, pos: Pos) -> impl Iterator<Item = Pos> + '_ {
        [(0, -1), (0, 1), (-1, 0), (1, 0)]
            .into_iter()
            .filter_map(move |(dx, dy)| self.offset(pos, dx, dy))
    }

    pub fn positions_of(&self, kind: Tile) -> impl Iterator<Item = Pos> + '_ {
        self.tiles
            .iter()
            .enumerate()
            .filter(move |(_, t)| **t == kind)
            .map(|(i, _)| self.pos_of(i))
    }

    pub fn count(&self, kind: Tile) -> usize {
        self.tiles.iter().filter(|t| **t == kind).count()
    }

    pub fn floor_count(&self) -> usize {
        self.count(Tile::Floor)
    }

    pub fn interactive_count(&self) -> usize {
        self.tiles.iter().filter(|t| t.is_interactive()).count()
    }

    /// Tile codes, row-major, as a 2-D array (used by wire frames).
    pub fn grid_codes(&self) -> Vec<Vec<u8>> {
        self.tiles
            .chunks(self.width)
            .map(|row| row.iter().map(|t| t.code()).collect())
            .collect()
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Number of cells whose tile codes differ. Player starts are not part of
/// the embedding.
pub fn hamming_distance(a: &Layout, b: &Layout) -> Result<usize> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(tile_hamming(&a.tiles, &b.tiles))
}

pub(crate) fn tile_hamming(a: &[Tile], b: &[Tile]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn content_id(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct LayoutRepr {
    text: String,
}

impl TryFrom<LayoutRepr> for Layout {
    type Error = Error;

    fn try_from(repr: LayoutRepr) -> Result<Self> {
        Layout::parse(&repr.text)
    }
}

impl From<Layout> for LayoutRepr {
    fn from(layout: Layout) -> Self {
        LayoutRepr {
            text: layout.to_text(),
        }
    }
}
