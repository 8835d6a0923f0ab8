//! Live human-vs-agent play: the session state machine, the JSON wire
//! frames exchanged with the browser, and the append-only session log.
//!
//! In realtime mode the game advances on [`PlaySession::tick`], using the
//! latest human action received since the previous tick (or STAY). In
//! stepped mode every human action advances the game by one step.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentView};
use crate::env::{Action, Direction, EnvConfig, GameState, Held, Kitchen};
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::obs::encode;
use crate::rng::{self, tag, Rng};

pub const DEFAULT_TICK_MS: u64 = 200;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    #[default]
    Realtime,
    Stepped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerFrame {
    pub pos: [usize; 2],
    pub facing: Direction,
    pub held: Held,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotFrame {
    pub pos: [usize; 2],
    pub onions: u8,
    pub timer: u32,
    pub ready: bool,
}

/// Full state snapshot sent to the client after every step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub t: u32,
    pub grid: Vec<Vec<u8>>,
    pub players: Vec<PlayerFrame>,
    pub pots: Vec<PotFrame>,
    pub reward_step: f64,
    pub reward_total: f64,
    pub done: bool,
}

impl StateFrame {
    pub fn new(
        layout: &Layout,
        state: &GameState,
        horizon: u32,
        reward_step: f64,
        reward_total: f64,
    ) -> Self {
        StateFrame {
            t: state.t,
            grid: layout.grid_codes(),
            players: state
                .players
                .iter()
                .map(|p| PlayerFrame {
                    pos: [p.pos.x, p.pos.y],
                    facing: p.facing,
                    held: p.held,
                })
                .collect(),
            pots: state
                .pots
                .iter()
                .map(|p| PotFrame {
                    pos: [p.pos.x, p.pos.y],
                    onions: p.onions,
                    timer: p.timer,
                    ready: p.ready,
                })
                .collect(),
            reward_step,
            reward_total,
            done: state.t >= horizon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateFrame),
    Error { message: String },
    SurveyAck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Action {
        action: Action,
    },
    Survey {
        collaborative_rank: i64,
        preference_rank: i64,
    },
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Protocol(format!("malformed message: {e}")))
    }
}

/// One line of a session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Start {
        session_id: String,
        layout: Layout,
        policy_id: String,
        human_seat: usize,
        mode: SessionMode,
        tick_ms: u64,
        env: EnvConfig,
        seed: u64,
    },
    Step {
        t: u32,
        actions: [Action; 2],
        reward: f64,
        reward_total: f64,
    },
    Survey {
        t: u32,
        collaborative_rank: i64,
        preference_rank: i64,
    },
    End {
        reward_total: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub session_id: String,
    pub policy_id: String,
    pub human_seat: usize,
    pub mode: SessionMode,
    pub tick_ms: u64,
    pub seed: u64,
}

pub struct PlaySession {
    spec: SessionSpec,
    kitchen: Kitchen,
    agent: Arc<dyn Agent>,
    state: GameState,
    rng: Rng,
    pending: Option<Action>,
    reward_step: f64,
    reward_total: f64,
    log: Option<File>,
    log_path: Option<PathBuf>,
    history: Vec<LogRecord>,
}

impl PlaySession {
    /// Starts a session. With `log_dir`, records are appended to
    /// `<log_dir>/<session_id>.jsonl` as they happen.
    pub fn new(
        spec: SessionSpec,
        kitchen: Kitchen,
        agent: Arc<dyn Agent>,
        log_dir: Option<&Path>,
    ) -> Result<Self> {
        if spec.human_seat > 1 {
            return Err(Error::InvalidConfig(format!(
                "seat {} is not 0 or 1",
                spec.human_seat
            )));
        }
        if spec.mode == SessionMode::Realtime && spec.tick_ms == 0 {
            return Err(Error::InvalidConfig(
                "tick_ms must be positive in realtime mode".into(),
            ));
        }
        let (log, log_path) = match log_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{}.jsonl", spec.session_id));
                (
                    Some(OpenOptions::new().create(true).append(true).open(&path)?),
                    Some(path),
                )
            }
            None => (None, None),
        };
        let state = kitchen.reset();
        let rng = rng::stream(spec.seed, &[tag::SESSION]);
        let mut session = PlaySession {
            kitchen,
            agent,
            state,
            rng,
            pending: None,
            reward_step: 0.0,
            reward_total: 0.0,
            log,
            log_path,
            history: Vec::new(),
            spec,
        };
        let start = LogRecord::Start {
            session_id: session.spec.session_id.clone(),
            layout: session.kitchen.layout().clone(),
            policy_id: session.spec.policy_id.clone(),
            human_seat: session.spec.human_seat,
            mode: session.spec.mode,
            tick_ms: session.spec.tick_ms,
            env: session.kitchen.config(),
            seed: session.spec.seed,
        };
        session.record(start)?;
        Ok(session)
    }

    pub fn spec(&self) -> &SessionSpec {
        &self.spec
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.kitchen.config().horizon
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log_path.as_deref()
    }

    pub fn history(&self) -> &[LogRecord] {
        &self.history
    }

    pub fn frame(&self) -> StateFrame {
        StateFrame::new(
            self.kitchen.layout(),
            &self.state,
            self.kitchen.config().horizon,
            self.reward_step,
            self.reward_total,
        )
    }

    fn record(&mut self, rec: LogRecord) -> Result<()> {
        if let Some(f) = &mut self.log {
            serde_json::to_writer(&mut *f, &rec)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        self.history.push(rec);
        Ok(())
    }

    fn advance(&mut self, human: Action) -> Result<StateFrame> {
        let agent_seat = 1 - self.spec.human_seat;
        let obs = encode(
            self.kitchen.layout(),
            &self.state,
            agent_seat,
            self.kitchen.config().cook_time,
        )?;
        let view = AgentView {
            kitchen: &self.kitchen,
            state: &self.state,
            seat: agent_seat,
            obs: &obs,
        };
        let agent_action = self.agent.act(&view, &mut self.rng)?.action;
        let mut actions = [Action::Stay; 2];
        actions[self.spec.human_seat] = human;
        actions[agent_seat] = agent_action;
        let out = self.kitchen.step(&self.state, actions)?;
        self.state = out.state;
        self.reward_step = out.reward;
        self.reward_total += out.reward;
        self.record(LogRecord::Step {
            t: self.state.t,
            actions,
            reward: out.reward,
            reward_total: self.reward_total,
        })?;
        if out.done {
            self.record(LogRecord::End {
                reward_total: self.reward_total,
            })?;
        }
        Ok(self.frame())
    }

    /// Advances one realtime tick with the latest human action (or STAY).
    pub fn tick(&mut self) -> Result<StateFrame> {
        if self.spec.mode != SessionMode::Realtime {
            return Err(Error::Protocol(
                "tick is only valid in realtime mode".into(),
            ));
        }
        if self.is_done() {
            return Err(Error::EpisodeOver {
                t: self.state.t,
                horizon: self.kitchen.config().horizon,
            });
        }
        let human = self.pending.take().unwrap_or(Action::Stay);
        self.advance(human)
    }

    /// Applies a client message. Returns the messages to send back.
    pub fn handle(&mut self, msg: ClientMessage) -> Result<Vec<ServerMessage>> {
        match msg {
            ClientMessage::Action { action } => {
                if self.is_done() {
                    return Err(Error::EpisodeOver {
                        t: self.state.t,
                        horizon: self.kitchen.config().horizon,
                    });
                }
                match self.spec.mode {
                    SessionMode::Stepped => Ok(vec![ServerMessage::State(self.advance(action)?)]),
                    SessionMode::Realtime => {
                        self.pending = Some(action);
                        Ok(Vec::new())
                    }
                }
            }
            ClientMessage::Survey {
                collaborative_rank,
                preference_rank,
            } => {
                self.record(LogRecord::Survey {
                    t: self.state.t,
                    collaborative_rank,
                    preference_rank,
                })?;
                Ok(vec![ServerMessage::SurveyAck])
            }
        }
    }

    /// Parses and applies a raw text frame. Errors become an error frame;
    /// the session itself is left untouched.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match ClientMessage::parse(text).and_then(|m| self.handle(m)) {
            Ok(out) => out,
            Err(e) => vec![ServerMessage::Error {
                message: e.to_string(),
            }],
        }
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    BufReader::new(File::open(path)?)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// Result of replaying a session log through the simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayCheck {
    pub steps: usize,
    pub reward_total: f64,
}

/// Re-simulates the logged actions and checks every logged reward.
pub fn verify_log(records: &[LogRecord]) -> Result<ReplayCheck> {
    let Some(LogRecord::Start { layout, env, .. }) = records.first() else {
        return Err(Error::Protocol(
            "session log does not begin with a start record".into(),
        ));
    };
    let kitchen = Kitchen::new(layout.clone(), *env)?;
    let mut state = kitchen.reset();
    let mut total = 0.0;
    let mut steps = 0;
    for rec in &records[1..] {
        if let LogRecord::Step {
            t,
            actions,
            reward,
            reward_total,
        } = rec
        {
            let out = kitchen.step(&state, *actions)?;
            total += out.reward;
            if out.state.t != *t || out.reward != *reward || total != *reward_total {
                return Err(Error::Protocol(format!(
                    "replay diverged at t = {t}: logged reward {reward}, simulated {}",
                    out.reward
                )));
            }
            state = out.state;
            steps += 1;
        }
    }
    Ok(ReplayCheck {
        steps,
        reward_total: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proxy::ProxyAgent;

    fn session(mode: SessionMode, dir: Option<&Path>) -> PlaySession {
        session_in_seat(mode, dir, 0)
    }

    fn session_in_seat(mode: SessionMode, dir: Option<&Path>, human_seat: usize) -> PlaySession {
        let layout = Layout::parse("XXPXXXX\nO1    X\nX     D\nX    2X\nXXXSXXX\n").unwrap();
        let kitchen = Kitchen::new(layout, EnvConfig::default()).unwrap();
        let spec = SessionSpec {
            session_id: "s1".into(),
            policy_id: "proxy".into(),
            human_seat,
            mode,
            tick_ms: DEFAULT_TICK_MS,
            seed: 4,
        };
        PlaySession::new(spec, kitchen, Arc::new(ProxyAgent::default()), dir).unwrap()
    }

    #[test]
    fn wire_format_of_messages() {
        let m = ClientMessage::parse(r#"{"type":"action","action":"INTERACT"}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::Action {
                action: Action::Interact
            }
        );
        let m =
            ClientMessage::parse(r#"{"type":"survey","collaborative_rank":2,"preference_rank":1}"#)
                .unwrap();
        assert!(matches!(
            m,
            ClientMessage::Survey {
                collaborative_rank: 2,
                ..
            }
        ));
        let s = session(SessionMode::Stepped, None);
        let json = serde_json::to_value(ServerMessage::State(s.frame())).unwrap();
        assert_eq!(json["type"], "state");
        assert_eq!(json["t"], 0);
        assert_eq!(json["players"][0]["held"], "nothing");
        assert_eq!(json["grid"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn stepped_mode_waits_for_actions() {
        let mut s = session(SessionMode::Stepped, None);
        assert!(s.tick().is_err());
        assert_eq!(s.state().t, 0);
        let out = s
            .handle(ClientMessage::Action {
                action: Action::Stay,
            })
            .unwrap();
        assert!(matches!(&out[0], ServerMessage::State(f) if f.t == 1));
    }

    #[test]
    fn realtime_defaults_to_stay_and_log_replays() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(SessionMode::Realtime, Some(dir.path()));
        assert!(s
            .handle(ClientMessage::Action {
                action: Action::Right
            })
            .unwrap()
            .is_empty());
        let mut last = s.tick().unwrap();
        while !last.done {
            last = s.tick().unwrap();
        }
        assert_eq!(last.t, 400);
        assert!(s.tick().is_err());
        s.handle(ClientMessage::Survey {
            collaborative_rank: 1,
            preference_rank: 2,
        })
        .unwrap();
        let records = read_log(s.log_path().unwrap()).unwrap();
        let check = verify_log(&records).unwrap();
        assert_eq!(check.steps, 400);
        assert_eq!(check.reward_total, last.reward_total);
        assert!(matches!(
            records.last(),
            Some(LogRecord::Survey {
                preference_rank: 2,
                ..
            })
        ));
        match &records[1] {
            LogRecord::Step { actions, .. } => assert_eq!(actions[0], Action::Right),
            other => panic!("unexpected {other:?}"),
        }
        match &records[2] {
            LogRecord::Step { actions, .. } => assert_eq!(actions[0], Action::Stay),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_message_yields_error_frame() {
        let mut s = session(SessionMode::Stepped, None);
        let out = s.handle_text(r#"{"type":"action","action":"JUMP"}"#);
        assert!(matches!(&out[0], ServerMessage::Error { .. }));
        assert_eq!(s.state().t, 0);
        let out = s.handle_text(r#"{"type":"action","action":"UP"}"#);
        assert!(matches!(&out[0], ServerMessage::State(_)));
    }

    #[test]
    fn tampered_log_is_detected() {
        let mut s = session_in_seat(SessionMode::Stepped, None, 1);
        for _ in 0..60 {
            s.handle(ClientMessage::Action {
                action: Action::Stay,
            })
            .unwrap();
        }
        let mut records = s.history().to_vec();
        assert!(verify_log(&records).is_ok());
        let hit = records
            .iter()
            .position(|r| matches!(r, LogRecord::Step { reward, .. } if *reward > 0.0))
            .expect("the proxy scores within 60 steps");
        if let LogRecord::Step { reward, .. } = &mut records[hit] {
            *reward += 1.0;
        }
        assert!(verify_log(&records).is_err());
    }
}
