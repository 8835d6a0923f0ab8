//! Per-co-player environment buffer and the replay distribution over it.
//!
//! All prioritisation runs on a *priority key*: the score itself under
//! return scoring, the negated score under positive-value-loss scoring. A
//! lower key always means "more worth training on": the buffer keeps the `k`
//! lowest keys, co-player sampling picks the lowest key, and the rank
//! weighting gives the lowest key the largest weight.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_RESCORE_SMOOTHING: f64 = 0.3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Mean per-step team reward; low returns are prioritised.
    #[default]
    Return,
    /// Mean positive GAE advantage; high values are prioritised.
    PositiveValueLoss,
}

impl Scoring {
    pub fn key(self, score: f64) -> f64 {
        match self {
            Scoring::Return => score,
            Scoring::PositiveValueLoss => -score,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub layout_id: String,
    pub score: f64,
    /// Global episode counter at the last touch.
    pub last_sampled: u64,
    pub visits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Offer {
    Rescored,
    Inserted,
    Replaced { evicted: String },
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvBuffer {
    entries: Vec<BufferEntry>,
    capacity: usize,
    scoring: Scoring,
    smoothing: f64,
}

impl EnvBuffer {
    pub fn new(capacity: usize, scoring: Scoring) -> Self {
        Self::with_smoothing(capacity, scoring, DEFAULT_RESCORE_SMOOTHING)
    }

    /// `smoothing` is the weight of a new score when re-scoring an entry
    /// that is already present.
    pub fn with_smoothing(capacity: usize, scoring: Scoring, smoothing: f64) -> Self {
        assert!(capacity >= 1, "buffer capacity must be positive");
        EnvBuffer {
            entries: Vec::with_capacity(capacity.min(4096)),
            capacity,
            scoring,
            smoothing,
        }
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn scoring(&self) -> Scoring {
        self.scoring
    }

    pub fn contains(&self, layout_id: &str) -> bool {
        self.entries.iter().any(|e| e.layout_id == layout_id)
    }

    pub fn get(&self, layout_id: &str) -> Option<&BufferEntry> {
        self.entries.iter().find(|e| e.layout_id == layout_id)
    }

    fn key(&self, e: &BufferEntry) -> f64 {
        self.scoring.key(e.score)
    }

    /// The entry with the lowest priority key (ties: smallest layout id).
    pub fn best(&self) -> Option<&BufferEntry> {
        self.entries.iter().min_by(|a, b| {
            self.key(a)
                .total_cmp(&self.key(b))
                .then_with(|| a.layout_id.cmp(&b.layout_id))
        })
    }

    pub fn min_key(&self) -> Option<f64> {
        self.best().map(|e| self.key(e))
    }

    /// Records a score for `layout_id`: re-score with an exponential moving
    /// average if present, insert if there is room, otherwise replace the
    /// highest-key entry when the new key is lower.
    pub fn update(&mut self, layout_id: &str, score: f64, global_counter: u64) -> Result<Offer> {
        if !score.is_finite() {
            return Err(Error::NonFinite(format!("score for layout {layout_id}")));
        }
        if let Some(e) = self.entries.iter_mut().find(|e| e.layout_id == layout_id) {
            e.score = (1.0 - self.smoothing) * e.score + self.smoothing * score;
            e.last_sampled = global_counter;
            e.visits += 1;
            return Ok(Offer::Rescored);
        }
        let entry = BufferEntry {
            layout_id: layout_id.to_string(),
            score,
            last_sampled: global_counter,
            visits: 1,
        };
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
            return Ok(Offer::Inserted);
        }
        let worst = (0..self.entries.len())
            .max_by(|&a, &b| {
                let (ea, eb) = (&self.entries[a], &self.entries[b]);
                self.key(ea)
                    .total_cmp(&self.key(eb))
                    .then_with(|| ea.layout_id.cmp(&eb.layout_id))
            })
            .expect("full buffer is non-empty");
        if self.scoring.key(score) < self.key(&self.entries[worst]) {
            let evicted = std::mem::replace(&mut self.entries[worst], entry);
            Ok(Offer::Replaced {
                evicted: evicted.layout_id,
            })
        } else {
            Ok(Offer::Rejected)
        }
    }

    pub fn score_distribution(&self, temperature: f64) -> Result<Vec<f64>> {
        let keys: Vec<f64> = self.entries.iter().map(|e| self.key(e)).collect();
        rank_distribution(&keys, temperature)
    }

    pub fn staleness_distribution(&self, global_counter: u64) -> Result<Vec<f64>> {
        let staleness: Vec<f64> = self
            .entries
            .iter()
            .map(|e| global_counter.saturating_sub(e.last_sampled) as f64)
            .collect();
        staleness_distribution(&staleness)
    }

    pub fn replay_distribution(
        &self,
        staleness_coef: f64,
        temperature: f64,
        global_counter: u64,
    ) -> Result<Vec<f64>> {
        let ps = self.score_distribution(temperature)?;
        let pc = self.staleness_distribution(global_counter)?;
        mix(&ps, &pc, staleness_coef)
    }

    /// Draws an entry from the replay distribution.
    pub fn sample_replay(
        &self,
        staleness_coef: f64,
        temperature: f64,
        global_counter: u64,
        rng: &mut Rng,
    ) -> Result<&BufferEntry> {
        let probs = self.replay_distribution(staleness_coef, temperature, global_counter)?;
        Ok(&self.entries[sample_index(&probs, rng)])
    }
}

/// Rank positions 1..n with rank 1 for the largest key; tied keys share the
/// mean of their positions.
pub fn descending_ranks(keys: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    let mut ranks = vec![0.0; keys.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && keys[order[j + 1]] == keys[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// `rank^(1/temperature)` normalised, with ranks from [`descending_ranks`],
/// so the smallest key receives the largest probability.
pub fn rank_distribution(keys: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if keys.is_empty() {
        return Err(Error::Empty("environment buffer"));
    }
    if !(temperature > 0.0 && temperature <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "temperature {temperature} outside (0, 1]"
        )));
    }
    let weights: Vec<f64> = descending_ranks(keys)
        .into_iter()
        .map(|r| r.powf(1.0 / temperature))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Probabilities proportional to staleness; uniform when all are zero.
pub fn staleness_distribution(staleness: &[f64]) -> Result<Vec<f64>> {
    if staleness.is_empty() {
        return Err(Error::Empty("environment buffer"));
    }
    let total: f64 = staleness.iter().sum();
    if total <= 0.0 {
        let n = staleness.len() as f64;
        return Ok(vec![1.0 / n; staleness.len()]);
    }
    Ok(staleness.iter().map(|s| s / total).collect())
}

/// `(1 - rho) * ps + rho * pc`.
pub fn mix(ps: &[f64], pc: &[f64], staleness_coef: f64) -> Result<Vec<f64>> {
    if ps.len() != pc.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} probabilities",
            ps.len(),
            pc.len()
        )));
    }
    if !(0.0..=1.0).contains(&staleness_coef) {
        return Err(Error::InvalidConfig(format!(
            "staleness coefficient {staleness_coef} outside [0, 1]"
        )));
    }
    Ok(ps
        .iter()
        .zip(pc)
        .map(|(s, c)| (1.0 - staleness_coef) * s + staleness_coef * c)
        .collect())
}

pub fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Bernoulli replay decision.
pub fn replay_decision(rng: &mut Rng, replay_prob: f64) -> bool {
    if replay_prob <= 0.0 {
        return false;
    }
    if replay_prob >= 1.0 {
        return true;
    }
    rng.gen_bool(replay_prob)
}
