//! Cross-play matrices and evaluation against the scripted proxy.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::stats::{mean, min_max_normalize, sample_std};
use crate::agent::Agent;
use crate::env::{EnvConfig, Kitchen};
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::proxy::ProxyAgent;
use crate::rng::{self, tag};
use crate::rollout::rollout;

/// Plays one episode and reports the total team reward.
pub trait EpisodeRunner {
    fn run(
        &self,
        layout: &Layout,
        a: &dyn Agent,
        b: &dyn Agent,
        a_seat: usize,
        seed: u64,
    ) -> Result<f64>;
}

/// Runs episodes in the kitchen simulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct KitchenRunner {
    pub env: EnvConfig,
}

impl EpisodeRunner for KitchenRunner {
    fn run(
        &self,
        layout: &Layout,
        a: &dyn Agent,
        b: &dyn Agent,
        a_seat: usize,
        seed: u64,
    ) -> Result<f64> {
        let kitchen = Kitchen::new(layout.clone(), self.env)?;
        Ok(rollout(&kitchen, a, b, a_seat, seed)?.total_reward())
    }
}

#[derive(Clone)]
pub struct NamedPolicy {
    pub id: String,
    pub agent: Arc<dyn Agent>,
}

impl NamedPolicy {
    pub fn new(id: impl Into<String>, agent: Arc<dyn Agent>) -> Self {
        NamedPolicy {
            id: id.into(),
            agent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossPlayMatrix {
    pub policies: Vec<String>,
    pub layouts: Vec<String>,
    /// Indexed `[row policy][column policy][layout]`.
    pub mean_reward: Vec<Vec<Vec<f64>>>,
    pub episodes_per_cell: usize,
}

impl CrossPlayMatrix {
    /// Rescales each layout slice (all policy pairs) to `[0, 1]`.
    pub fn normalize(&self) -> CrossPlayMatrix {
        let p = self.policies.len();
        let mut out = self.clone();
        for l in 0..self.layouts.len() {
            let slice: Vec<f64> = (0..p * p)
                .map(|k| self.mean_reward[k / p][k % p][l])
                .collect();
            for (k, v) in min_max_normalize(&slice).into_iter().enumerate() {
                out.mean_reward[k / p][k % p][l] = v;
            }
        }
        out
    }
}

fn episode_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut all = vec![tag::EVAL];
    all.extend_from_slice(parts);
    rng::derive_seed(seed, &all)
}

/// Plays every ordered policy pair (diagonal included) on every layout for
/// `episodes` rollouts, alternating which seat the row policy takes.
pub fn cross_play(
    runner: &dyn EpisodeRunner,
    policies: &[NamedPolicy],
    layouts: &[Layout],
    episodes: usize,
    seed: u64,
) -> Result<CrossPlayMatrix> {
    if policies.is_empty() {
        return Err(Error::Empty("policy list"));
    }
    if layouts.is_empty() {
        return Err(Error::Empty("layout list"));
    }
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be at least 1".into()));
    }
    let mut mean_reward = vec![vec![vec![0.0; layouts.len()]; policies.len()]; policies.len()];
    for (i, a) in policies.iter().enumerate() {
        for (j, b) in policies.iter().enumerate() {
            for (l, layout) in layouts.iter().enumerate() {
                let mut total = 0.0;
                for e in 0..episodes {
                    let s = episode_seed(seed, &[i as u64, j as u64, l as u64, e as u64]);
                    total += runner.run(layout, a.agent.as_ref(), b.agent.as_ref(), e % 2, s)?;
                }
                mean_reward[i][j][l] = total / episodes as f64;
            }
        }
    }
    Ok(CrossPlayMatrix {
        policies: policies.iter().map(|p| p.id.clone()).collect(),
        layouts: layouts.iter().map(|l| l.id().to_string()).collect(),
        mean_reward,
        episodes_per_cell: episodes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutResult {
    pub layout_id: String,
    pub policy_id: String,
    pub mean_reward: f64,
    pub std: f64,
    pub episodes: usize,
}

/// Pairs `policy` with the proxy for `episodes` rollouts in each seat
/// order, per layout.
pub fn evaluate_vs_proxy(
    runner: &dyn EpisodeRunner,
    policy: &NamedPolicy,
    proxy: &ProxyAgent,
    layouts: &[Layout],
    episodes: usize,
    seed: u64,
) -> Result<Vec<LayoutResult>> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be at least 1".into()));
    }
    if layouts.is_empty() {
        return Err(Error::Empty("layout list"));
    }
    layouts
        .iter()
        .enumerate()
        .map(|(l, layout)| {
            let mut rewards = Vec::with_capacity(2 * episodes);
            for seat in 0..2 {
                for e in 0..episodes {
                    let s = episode_seed(seed, &[u64::MAX, l as u64, seat as u64, e as u64]);
                    rewards.push(runner.run(layout, policy.agent.as_ref(), proxy, seat, s)?);
                }
            }
            Ok(LayoutResult {
                layout_id: layout.id().to_string(),
                policy_id: policy.id.clone(),
                mean_reward: mean(&rewards),
                std: sample_std(&rewards),
                episodes: rewards.len(),
            })
        })
        .collect()
}

pub fn write_results_csv(results: &[LayoutResult], mut out: impl Write) -> Result<()> {
    writeln!(out, "layout_id,policy_id,mean_reward,std,episodes")?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.layout_id, r.policy_id, r.mean_reward, r.std, r.episodes
        )?;
    }
    Ok(())
}
