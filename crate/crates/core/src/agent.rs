//! Anything that can occupy a seat: network policies, the scripted proxy,
//! and trivial baselines.

use std::borrow::Borrow;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::{Action, GameState, Kitchen};
use crate::error::{Error, Result};
use crate::nn::{log_softmax, PolicyNet};
use crate::obs::Observation;
use crate::rng::Rng;

/// What an agent sees when asked to act.
pub struct AgentView<'a> {
    pub kitchen: &'a Kitchen,
    pub state: &'a GameState,
    pub seat: usize,
    pub obs: &'a Observation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
}

impl Decision {
    pub fn scripted(action: Action) -> Self {
        Decision {
            action,
            log_prob: 0.0,
            value: 0.0,
        }
    }
}

pub trait Agent: Send + Sync {
    fn act(&self, view: &AgentView<'_>, rng: &mut Rng) -> Result<Decision>;
}

impl<A: Agent + ?Sized> Agent for Arc<A> {
    fn act(&self, view: &AgentView<'_>, rng: &mut Rng) -> Result<Decision> {
        (**self).act(view, rng)
    }
}

impl<A: Agent + ?Sized> Agent for &A {
    fn act(&self, view: &AgentView<'_>, rng: &mut Rng) -> Result<Decision> {
        (**self).act(view, rng)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionSelection {
    #[default]
    Sample,
    Greedy,
}

/// Samples a categorical distribution given log-probabilities.
pub fn sample_categorical(log_probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

/// A policy network in a seat. `P` is anything that lends a
/// [`PolicyNet`]: an owned `Arc` or a plain reference.
pub struct NetAgent<P = Arc<PolicyNet>> {
    net: P,
    selection: ActionSelection,
}

impl<P: Borrow<PolicyNet>> NetAgent<P> {
    pub fn new(net: P, selection: ActionSelection) -> Self {
        NetAgent { net, selection }
    }

    pub fn net(&self) -> &PolicyNet {
        self.net.borrow()
    }
}

impl<P: Borrow<PolicyNet> + Send + Sync> Agent for NetAgent<P> {
    fn act(&self, view: &AgentView<'_>, rng: &mut Rng) -> Result<Decision> {
        let out = self.net().forward(view.obs)?;
        if out.logits.len() != Action::COUNT {
            return Err(Error::ShapeMismatch {
                expected: format!("{} action logits", Action::COUNT),
                actual: format!("{} action logits", out.logits.len()),
            });
        }
        let log_probs = log_softmax(&out.logits);
        let index = match self.selection {
            ActionSelection::Sample => sample_categorical(&log_probs, rng),
            ActionSelection::Greedy => {
                log_probs.iter().enumerate().fold(
                    0,
                    |best, (i, lp)| if *lp > log_probs[best] { i } else { best },
                )
            }
        };
        Ok(Decision {
            action: Action::ALL[index],
            log_prob: log_probs[index],
            value: out.value,
        })
    }
}

/// Always emits the same action.
pub struct ConstantAgent(pub Action);

impl Agent for ConstantAgent {
    fn act(&self, _view: &AgentView<'_>, _rng: &mut Rng) -> Result<Decision> {
        Ok(Decision::scripted(self.0))
    }
}

/// Uniformly random actions.
pub struct RandomAgent;

impl Agent for RandomAgent {
    fn act(&self, _view: &AgentView<'_>, rng: &mut Rng) -> Result<Decision> {
        let action = Action::ALL[rng.gen_range(0..Action::COUNT)];
        Ok(Decision {
            action,
            log_prob: -(Action::COUNT as f64).ln(),
            value: 0.0,
        })
    }
}

/// Replays a fixed action script, then stays.
pub struct ScriptAgent(pub Vec<Action>);

impl Agent for ScriptAgent {
    fn act(&self, view: &AgentView<'_>, _rng: &mut Rng) -> Result<Decision> {
        let action = self
            .0
            .get(view.state.t as usize)
            .copied()
            .unwrap_or(Action::Stay);
        Ok(Decision::scripted(action))
    }
}
