//! Ego-centric multi-channel grid encoding fed to the policy network.
//!
//! Data is stored channel-major (`[channel][row][column]`).

use serde::{Deserialize, Serialize};

use crate::env::{GameState, PlayerState};
use crate::error::{Error, Result};
use crate::layout::{Layout, Tile};

pub const CHANNELS: usize = 10;

pub const CH_WALL: usize = 0;
pub const CH_ONION: usize = 1;
pub const CH_DISH: usize = 2;
/// `(1 + onions) / 4` at each pot cell.
pub const CH_POT: usize = 3;
pub const CH_SERVING: usize = 4;
/// `(1 + facing) / 4` at the player's cell.
pub const CH_SELF: usize = 5;
pub const CH_PARTNER: usize = 6;
/// Held item code / 3 at the player's cell.
pub const CH_SELF_HELD: usize = 7;
pub const CH_PARTNER_HELD: usize = 8;
/// Cook timer / cook time at each pot cell.
pub const CH_POT_PROGRESS: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Observation {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Observation {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f64 {
        self.data[(channel * self.height + y) * self.width + x]
    }

    fn set(&mut self, channel: usize, y: usize, x: usize, value: f64) {
        self.data[(channel * self.height + y) * self.width + x] = value;
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[channel * plane..(channel + 1) * plane]
    }
}

pub fn encode(
    layout: &Layout,
    state: &GameState,
    seat: usize,
    cook_time: u32,
) -> Result<Observation> {
    if seat > 1 {
        return Err(Error::InvalidConfig(format!("seat {seat} is not 0 or 1")));
    }
    let (h, w) = (layout.height(), layout.width());
    let mut obs = Observation::zeros(h, w, CHANNELS);
    for (i, tile) in layout.tiles().iter().enumerate() {
        let (x, y) = (i % w, i / w);
        let ch = match tile {
            Tile::Floor => continue,
            Tile::Wall => CH_WALL,
            Tile::OnionDispenser => CH_ONION,
            Tile::DishDispenser => CH_DISH,
            Tile::Pot => CH_POT,
            Tile::Serving => CH_SERVING,
        };
        obs.set(ch, y, x, 1.0);
    }
    for pot in &state.pots {
        obs.set(
            CH_POT,
            pot.pos.y,
            pot.pos.x,
            (1.0 + pot.onions as f64) / 4.0,
        );
        obs.set(
            CH_POT_PROGRESS,
            pot.pos.y,
            pot.pos.x,
            pot.timer as f64 / cook_time as f64,
        );
    }
    let mut put_player = |p: &PlayerState, pos_ch: usize, held_ch: usize| {
        obs.set(
            pos_ch,
            p.pos.y,
            p.pos.x,
            (1.0 + p.facing.index() as f64) / 4.0,
        );
        obs.set(held_ch, p.pos.y, p.pos.x, p.held.code() as f64 / 3.0);
    };
    put_player(&state.players[seat], CH_SELF, CH_SELF_HELD);
    put_player(&state.players[1 - seat], CH_PARTNER, CH_PARTNER_HELD);
    Ok(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Direction, EnvConfig, Held, Kitchen};
    use crate::layout::Pos;

    const ROOM: &str = "XOXPXXX\nX1    X\nX     D\nX    2X\nXXXSXXX\n";

    fn setup() -> (Kitchen, GameState) {
        let k = Kitchen::new(Layout::parse(ROOM).unwrap(), EnvConfig::default()).unwrap();
        let s = k.reset();
        (k, s)
    }

    #[test]
    fn wall_channel_matches_layout() {
        let (k, s) = setup();
        let obs = encode(k.layout(), &s, 0, 20).unwrap();
        for (i, tile) in k.layout().tiles().iter().enumerate() {
            let expected = if *tile == Tile::Wall { 1.0 } else { 0.0 };
            assert_eq!(obs.channel(CH_WALL)[i], expected);
        }
    }

    #[test]
    fn seats_swap_self_and_partner() {
        let (k, mut s) = setup();
        s.players[1].held = Held::Dish;
        s.players[0].facing = Direction::Left;
        let a = encode(k.layout(), &s, 0, 20).unwrap();
        let b = encode(k.layout(), &s, 1, 20).unwrap();
        assert_eq!(a.channel(CH_SELF), b.channel(CH_PARTNER));
        assert_eq!(a.channel(CH_PARTNER), b.channel(CH_SELF));
        assert_eq!(a.channel(CH_SELF_HELD), b.channel(CH_PARTNER_HELD));
        assert_eq!(a.channel(CH_PARTNER_HELD), b.channel(CH_SELF_HELD));
        for ch in [
            CH_WALL,
            CH_ONION,
            CH_DISH,
            CH_POT,
            CH_SERVING,
            CH_POT_PROGRESS,
        ] {
            assert_eq!(a.channel(ch), b.channel(ch));
        }
    }

    #[test]
    fn pot_progress_is_normalized_timer() {
        let (k, mut s) = setup();
        s.pots[0].onions = 3;
        s.pots[0].timer = 10;
        let obs = encode(k.layout(), &s, 0, 20).unwrap();
        assert_eq!(obs.get(CH_POT_PROGRESS, 0, 3), 0.5);
    }

    #[test]
    fn distinct_states_encode_distinctly() {
        let (k, base) = setup();
        let mut variants = vec![base.clone()];
        for held in [Held::Onion, Held::Dish, Held::Soup] {
            let mut s = base.clone();
            s.players[0].held = held;
            variants.push(s.clone());
            s.players[0].held = Held::Nothing;
            s.players[1].held = held;
            variants.push(s);
        }
        for dir in [Direction::Up, Direction::Left, Direction::Right] {
            for seat in 0..2 {
                let mut s = base.clone();
                s.players[seat].facing = dir;
                variants.push(s);
            }
        }
        for onions in 1..=3 {
            let mut s = base.clone();
            s.pots[0].onions = onions;
            variants.push(s.clone());
            if onions == 3 {
                s.pots[0].timer = 7;
                variants.push(s);
            }
        }
        let mut s = base.clone();
        s.players[0].pos = Pos::new(2, 2);
        variants.push(s);
        let encoded: Vec<_> = variants
            .iter()
            .map(|s| encode(k.layout(), s, 0, 20).unwrap())
            .collect();
        for i in 0..encoded.len() {
            for j in i + 1..encoded.len() {
                assert_ne!(encoded[i], encoded[j], "variants {i} and {j} collide");
            }
        }
    }

    #[test]
    fn rejects_bad_seat() {
        let (k, s) = setup();
        assert!(encode(k.layout(), &s, 2, 20).is_err());
    }
}
