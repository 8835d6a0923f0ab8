//! The outer training loop: pick a co-player, decide between replaying a
//! buffered layout and trying an unseen one, roll out, score, update the
//! ego on replay episodes only, and snapshot the ego into the population at
//! the end of every iteration.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::buffer::{replay_decision, EnvBuffer, Scoring, DEFAULT_RESCORE_SMOOTHING};
use super::population::{CoPlayer, Population};
use super::scoring::{positive_value_loss_score, score_episode};
use crate::agent::{ActionSelection, NetAgent};
use crate::env::{EnvConfig, Kitchen};
use crate::error::{Error, Result};
use crate::layoutgen::LayoutSet;
use crate::nn::{NetConfig, PolicyNet};
use crate::ppo::{PpoConfig, PpoLearner};
use crate::rng::{self, tag};
use crate::rollout::{rollout, Trajectory};

pub const SELF_PLAY_ID: &str = "self";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    /// Weight of the staleness distribution in the replay mixture.
    pub staleness_coef: f64,
    /// Rank temperature of the score distribution.
    pub temperature: f64,
    /// Probability of replaying a buffered layout.
    pub replay_prob: f64,
    /// Capacity of each co-player's environment buffer.
    pub buffer_size: usize,
    /// Episodes per outer iteration.
    pub episodes_per_iter: usize,
    pub population_capacity: usize,
    pub scoring: Scoring,
    /// Weight of a new score when re-scoring a buffered layout.
    pub rescore_smoothing: f64,
    /// Recorded for completeness; the return-based curriculum has no
    /// regret-mixing term, so this value does not affect training.
    pub lambda_coef: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            staleness_coef: 0.3,
            temperature: 0.3,
            replay_prob: 0.5,
            buffer_size: 1000,
            episodes_per_iter: 375,
            population_capacity: 8,
            scoring: Scoring::Return,
            rescore_smoothing: DEFAULT_RESCORE_SMOOTHING,
            lambda_coef: 0.2,
        }
    }
}

impl CurriculumConfig {
    /// Small-budget profile for single-machine runs.
    pub fn desk() -> Self {
        CurriculumConfig {
            buffer_size: 16,
            episodes_per_iter: 32,
            population_capacity: 3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("curriculum: {m}")));
        if !(0.0..=1.0).contains(&self.staleness_coef) {
            return bad(format!(
                "staleness_coef {} outside [0, 1]",
                self.staleness_coef
            ));
        }
        if !(self.temperature > 0.0 && self.temperature <= 1.0) {
            return bad(format!("temperature {} outside (0, 1]", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.replay_prob) {
            return bad(format!("replay_prob {} outside [0, 1]", self.replay_prob));
        }
        if !(0.0..=1.0).contains(&self.rescore_smoothing) {
            return bad(format!(
                "rescore_smoothing {} outside [0, 1]",
                self.rescore_smoothing
            ));
        }
        if self.buffer_size == 0 || self.episodes_per_iter == 0 || self.population_capacity == 0 {
            return bad(
                "buffer_size, episodes_per_iter and population_capacity must be positive".into(),
            );
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub curriculum: CurriculumConfig,
    pub ppo: PpoConfig,
    pub net: NetConfig,
    pub env: EnvConfig,
    pub iterations: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn desk(iterations: usize, seed: u64) -> Self {
        TrainConfig {
            curriculum: CurriculumConfig::desk(),
            ppo: PpoConfig::desk(),
            net: NetConfig::desk(),
            env: EnvConfig::default(),
            iterations,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.curriculum.validate()?;
        self.ppo.validate()?;
        self.net.validate()?;
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Replay,
    Unseen,
}

/// One line of the training metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub iter: usize,
    pub episode: usize,
    pub co_player: String,
    pub layout_id: String,
    pub branch: Branch,
    #[serde(rename = "S")]
    pub score: f64,
    pub total_reward: f64,
    pub updated: bool,
    pub ego_seat: usize,
    pub buffer_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iter: usize,
    pub episodes: usize,
    pub replay_episodes: usize,
    pub mean_score: f64,
    pub snapshot_id: String,
    pub evicted: Option<String>,
}

/// Hooks for streaming progress out of the loop. All methods default to
/// doing nothing.
pub trait TrainObserver {
    fn on_episode(&mut self, _record: &EpisodeRecord) -> Result<()> {
        Ok(())
    }

    fn on_iteration(&mut self, _summary: &IterationSummary, _trainer: &Trainer) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

pub struct Trainer {
    config: TrainConfig,
    kitchens: Vec<Kitchen>,
    ego: PolicyNet,
    learner: PpoLearner,
    population: Population,
    iteration: usize,
    global_episode: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, layouts: &LayoutSet) -> Result<Self> {
        config.validate()?;
        if layouts.is_empty() {
            return Err(Error::Empty("training layout set"));
        }
        let kitchens = layouts
            .layouts()
            .iter()
            .map(|l| {
                if (l.height(), l.width()) != (config.net.height, config.net.width) {
                    return Err(Error::DimensionMismatch(format!(
                        "layout {} is {}x{} but the network expects {}x{}",
                        l.id(),
                        l.width(),
                        l.height(),
                        config.net.width,
                        config.net.height
                    )));
                }
                Kitchen::new(l.clone(), config.env)
            })
            .collect::<Result<Vec<_>>>()?;
        let ego = PolicyNet::new(config.net.clone(), config.seed)?;
        let learner = PpoLearner::new(config.ppo.clone(), ego.params().len())?;
        let population = Population::new(config.curriculum.population_capacity);
        Ok(Trainer {
            config,
            kitchens,
            ego,
            learner,
            population,
            iteration: 0,
            global_episode: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn ego(&self) -> &PolicyNet {
        &self.ego
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn ppo_updates(&self) -> u64 {
        self.learner.updates()
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    /// Runs all remaining iterations.
    pub fn run(&mut self, observer: &mut dyn TrainObserver) -> Result<Vec<IterationSummary>> {
        let mut out = Vec::new();
        while !self.is_finished() {
            out.push(self.run_iteration(observer)?);
        }
        Ok(out)
    }

    /// Runs one outer iteration of `episodes_per_iter` episodes. With an
    /// empty population the ego plays with itself against a provisional
    /// buffer that is discarded afterwards.
    pub fn run_iteration(&mut self, observer: &mut dyn TrainObserver) -> Result<IterationSummary> {
        let cur = self.config.curriculum.clone();
        self.iteration += 1;
        let iter = self.iteration;
        let mut provisional = self.population.is_empty().then(|| {
            EnvBuffer::with_smoothing(cur.buffer_size, cur.scoring, cur.rescore_smoothing)
        });
        let mut replay_episodes = 0;
        let mut score_sum = 0.0;
        for episode in 0..cur.episodes_per_iter {
            self.global_episode += 1;
            let g = self.global_episode;
            let mut rng = rng::stream(self.config.seed, &[tag::EPISODE, g]);

            let co_index = match provisional {
                Some(_) => None,
                None => Some(self.population.sample_co_player()?),
            };
            let (co_id, partner_net) = match co_index {
                Some(i) => {
                    let m = &self.population.members()[i];
                    (m.id.clone(), Some(m.snapshot().clone()))
                }
                None => (SELF_PLAY_ID.to_string(), None),
            };
            let buffer: &EnvBuffer = match (&provisional, co_index) {
                (Some(b), _) => b,
                (None, Some(i)) => &self.population.members()[i].buffer,
                (None, None) => unreachable!("either self-play or a sampled co-player"),
            };

            let wants_replay = replay_decision(&mut rng, cur.replay_prob);
            let (branch, kitchen_index) = if wants_replay && !buffer.is_empty() {
                let entry =
                    buffer.sample_replay(cur.staleness_coef, cur.temperature, g, &mut rng)?;
                let idx = self
                    .kitchens
                    .iter()
                    .position(|k| k.layout().id() == entry.layout_id)
                    .ok_or_else(|| Error::UnknownId {
                        kind: "layout",
                        id: entry.layout_id.clone(),
                    })?;
                (Branch::Replay, idx)
            } else {
                let in_buffer: HashSet<&str> = buffer
                    .entries()
                    .iter()
                    .map(|e| e.layout_id.as_str())
                    .collect();
                let unseen: Vec<usize> = (0..self.kitchens.len())
                    .filter(|&i| !in_buffer.contains(self.kitchens[i].layout().id()))
                    .collect();
                let idx = if unseen.is_empty() {
                    rng.gen_range(0..self.kitchens.len())
                } else {
                    unseen[rng.gen_range(0..unseen.len())]
                };
                (Branch::Unseen, idx)
            };
            let ego_seat = rng.gen_range(0..2);

            let kitchen = &self.kitchens[kitchen_index];
            let traj = {
                let ego_agent = NetAgent::new(&self.ego, ActionSelection::Sample);
                let seed = rng::derive_seed(self.config.seed, &[tag::EPISODE, g, 1]);
                match &partner_net {
                    Some(net) => {
                        let partner = NetAgent::new(net.clone(), ActionSelection::Sample);
                        rollout(kitchen, &ego_agent, &partner, ego_seat, seed)?
                    }
                    None => rollout(kitchen, &ego_agent, &ego_agent, ego_seat, seed)?,
                }
            };
            let score = self.score(&traj)?;

            let updated = branch == Branch::Replay;
            if updated {
                replay_episodes += 1;
                let seed = rng::derive_seed(self.config.seed, &[tag::PPO, g]);
                self.learner
                    .update(&mut self.ego, std::slice::from_ref(&traj), seed)?;
            }

            let layout_id = kitchen.layout().id().to_string();
            let buffer = match (&mut provisional, co_index) {
                (Some(b), _) => b,
                (None, Some(i)) => &mut self.population.member_mut(i).buffer,
                (None, None) => unreachable!("either self-play or a sampled co-player"),
            };
            buffer.update(&layout_id, score, g)?;
            score_sum += score;
            let record = EpisodeRecord {
                iter,
                episode,
                co_player: co_id,
                layout_id,
                branch,
                score,
                total_reward: traj.total_reward(),
                updated,
                ego_seat,
                buffer_len: buffer.len(),
            };
            observer.on_episode(&record)?;
        }

        let snapshot_id = format!("cp-{iter}");
        let member = CoPlayer::new(
            snapshot_id.clone(),
            iter,
            self.ego.clone(),
            EnvBuffer::with_smoothing(cur.buffer_size, cur.scoring, cur.rescore_smoothing),
        );
        let evicted = self.population.push(member).map(|m| m.id);
        let summary = IterationSummary {
            iter,
            episodes: cur.episodes_per_iter,
            replay_episodes,
            mean_score: score_sum / cur.episodes_per_iter as f64,
            snapshot_id,
            evicted,
        };
        observer.on_iteration(&summary, self)?;
        Ok(summary)
    }

    fn score(&self, traj: &Trajectory) -> Result<f64> {
        let s = match self.config.curriculum.scoring {
            Scoring::Return => score_episode(traj)?,
            Scoring::PositiveValueLoss => {
                positive_value_loss_score(traj, self.config.ppo.gamma, self.config.ppo.gae_lambda)?
            }
        };
        if !s.is_finite() {
            return Err(Error::NonFinite(format!(
                "episode score on layout {}",
                traj.layout_id
            )));
        }
        Ok(s)
    }
}
