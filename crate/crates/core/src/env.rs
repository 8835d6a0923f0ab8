//! Two-player common-payoff kitchen.
//!
//! Each step applies, in order: the cook tick for full pots, both players'
//! interactions (seat 0 first), and simultaneous movement. Rewards:
//! onion pickup +3, onion into pot +3, soup plated +5, soup served +20. The
//! team reward is a single scalar shared by both seats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Layout, Pos, Tile};

pub const COOK_TIME: u32 = 20;
pub const HORIZON: u32 = 400;
pub const POT_CAPACITY: u8 = 3;

pub const REWARD_ONION_PICKUP: f64 = 3.0;
pub const REWARD_POT_FILL: f64 = 3.0;
pub const REWARD_SOUP_PICKUP: f64 = 5.0;
pub const REWARD_DELIVERY: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub horizon: u32,
    pub cook_time: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            horizon: HORIZON,
            cook_time: COOK_TIME,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
    Interact,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
        Action::Interact,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Action::Up => Some(Direction::Up),
            Action::Down => Some(Direction::Down),
            Action::Left => Some(Direction::Left),
            Action::Right => Some(Direction::Right),
            Action::Stay | Action::Interact => None,
        }
    }

    pub fn from_direction(dir: Direction) -> Action {
        match dir {
            Direction::Up => Action::Up,
            Direction::Down => Action::Down,
            Direction::Left => Action::Left,
            Direction::Right => Action::Right,
        }
    }

    /// Wire name (`UP`, `INTERACT`, ...).
    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "UP",
            Action::Down => "DOWN",
            Action::Left => "LEFT",
            Action::Right => "RIGHT",
            Action::Stay => "STAY",
            Action::Interact => "INTERACT",
        }
    }
}

pub type JointAction = [Action; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Held {
    Nothing,
    Onion,
    Dish,
    Soup,
}

impl Held {
    pub fn code(self) -> u8 {
        match self {
            Held::Nothing => 0,
            Held::Onion => 1,
            Held::Dish => 2,
            Held::Soup => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlayerState {
    pub pos: Pos,
    pub facing: Direction,
    pub held: Held,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PotState {
    pub pos: Pos,
    pub onions: u8,
    pub timer: u32,
    pub ready: bool,
}

impl PotState {
    fn empty(pos: Pos) -> Self {
        PotState {
            pos,
            onions: 0,
            timer: 0,
            ready: false,
        }
    }

    pub fn is_full(&self) -> bool {
        self.onions == POT_CAPACITY
    }

    pub fn is_cooking(&self) -> bool {
        self.is_full() && !self.ready
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameState {
    pub layout_id: String,
    pub players: [PlayerState; 2],
    /// One entry per pot tile, in row-major order.
    pub pots: Vec<PotState>,
    pub t: u32,
}

impl GameState {
    pub fn pot_at(&self, pos: Pos) -> Option<&PotState> {
        self.pots.iter().find(|p| p.pos == pos)
    }
}

/// Counts of reward-bearing events (plus dish pickups, which earn nothing).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Events {
    pub onion_pickups: u32,
    pub pot_fills: u32,
    pub dish_pickups: u32,
    pub soup_pickups: u32,
    pub deliveries: u32,
}

impl Events {
    pub fn reward(&self) -> f64 {
        REWARD_ONION_PICKUP * self.onion_pickups as f64
            + REWARD_POT_FILL * self.pot_fills as f64
            + REWARD_SOUP_PICKUP * self.soup_pickups as f64
            + REWARD_DELIVERY * self.deliveries as f64
    }

    pub fn add(&mut self, other: &Events) {
        self.onion_pickups += other.onion_pickups;
        self.pot_fills += other.pot_fills;
        self.dish_pickups += other.dish_pickups;
        self.soup_pickups += other.soup_pickups;
        self.deliveries += other.deliveries;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: GameState,
    pub reward: f64,
    pub done: bool,
    pub events: Events,
}

/// A layout bound to game rules. Cheap to clone; holds no mutable state.
#[derive(Clone, Debug)]
pub struct Kitchen {
    layout: Layout,
    config: EnvConfig,
}

impl Kitchen {
    pub fn new(layout: Layout, config: EnvConfig) -> Result<Self> {
        if config.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if config.cook_time == 0 {
            return Err(Error::InvalidConfig("cook_time must be positive".into()));
        }
        Ok(Kitchen { layout, config })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config(&self) -> EnvConfig {
        self.config
    }

    pub fn reset(&self) -> GameState {
        let players = self.layout.starts().map(|pos| PlayerState {
            pos,
            facing: Direction::Down,
            held: Held::Nothing,
        });
        GameState {
            layout_id: self.layout.id().to_string(),
            players,
            pots: self
                .layout
                .positions_of(Tile::Pot)
                .map(PotState::empty)
                .collect(),
            t: 0,
        }
    }

    pub fn step(&self, state: &GameState, actions: JointAction) -> Result<StepOutcome> {
        if state.t >= self.config.horizon {
            return Err(Error::EpisodeOver {
                t: state.t,
                horizon: self.config.horizon,
            });
        }
        let mut next = state.clone();
        let mut events = Events::default();

        for pot in &mut next.pots {
            if pot.is_cooking() {
                pot.timer += 1;
                pot.ready = pot.timer >= self.config.cook_time;
            }
        }

        for seat in 0..2 {
            if actions[seat] == Action::Interact {
                self.interact(&mut next, seat, &mut events);
            }
        }

        self.move_players(&mut next, actions);
        next.t += 1;

        Ok(StepOutcome {
            reward: events.reward(),
            done: next.t == self.config.horizon,
            state: next,
            events,
        })
    }

    /// The tile a player is facing, if any.
    pub fn facing_cell(&self, player: &PlayerState) -> Option<Pos> {
        let (dx, dy) = player.facing.delta();
        self.layout.offset(player.pos, dx, dy)
    }

    fn interact(&self, state: &mut GameState, seat: usize, events: &mut Events) {
        let Some(target) = self.facing_cell(&state.players[seat]) else {
            return;
        };
        let held = state.players[seat].held;
        let new_held = match (self.layout.tile(target), held) {
            (Tile::OnionDispenser, Held::Nothing) => {
                events.onion_pickups += 1;
                Held::Onion
            }
            (Tile::DishDispenser, Held::Nothing) => {
                events.dish_pickups += 1;
                Held::Dish
            }
            (Tile::Pot, Held::Onion) => {
                let pot = state
                    .pots
                    .iter_mut()
                    .find(|p| p.pos == target)
                    .expect("pot state");
                if pot.onions < POT_CAPACITY {
                    pot.onions += 1;
                    events.pot_fills += 1;
                    Held::Nothing
                } else {
                    held
                }
            }
            (Tile::Pot, Held::Dish) => {
                let pot = state
                    .pots
                    .iter_mut()
                    .find(|p| p.pos == target)
                    .expect("pot state");
                if pot.ready {
                    *pot = PotState::empty(pot.pos);
                    events.soup_pickups += 1;
                    Held::Soup
                } else {
                    held
                }
            }
            (Tile::Serving, Held::Soup) => {
                events.deliveries += 1;
                Held::Nothing
            }
            _ => held,
        };
        state.players[seat].held = new_held;
    }

    fn move_players(&self, state: &mut GameState, actions: JointAction) {
        let mut targets: [Option<Pos>; 2] = [None, None];
        for seat in 0..2 {
            if let Some(dir) = actions[seat].direction() {
                let player = &mut state.players[seat];
                player.facing = dir;
                let (dx, dy) = dir.delta();
                targets[seat] = self
                    .layout
                    .offset(player.pos, dx, dy)
                    .filter(|p| self.layout.tile(*p) == Tile::Floor);
            }
        }
        let pos = [state.players[0].pos, state.players[1].pos];
        if let [Some(a), Some(b)] = targets {
            // Same target or position swap: both stay.
            if a == b || (a == pos[1] && b == pos[0]) {
                return;
            }
        }
        // A player may step into the other's cell only if the other leaves it.
        let mut moves = targets;
        for seat in 0..2 {
            let other = 1 - seat;
            if targets[seat] == Some(pos[other]) && targets[other].is_none() {
                moves[seat] = None;
            }
        }
        for seat in 0..2 {
            if let Some(target) = moves[seat] {
                state.players[seat].pos = target;
            }
        }
    }
}
