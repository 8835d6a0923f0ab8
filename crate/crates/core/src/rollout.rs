use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{Agent, AgentView};
use crate::env::{Action, Events, Kitchen};
use crate::error::{Error, Result};
use crate::obs::encode;
use crate::rng::{self, Rng};

/// One episode seen from the ego seat.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub layout_id: String,
    pub ego_seat: usize,
    /// Flattened ego observations, one per step.
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub partner_actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub events: Events,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Digest of actions, rewards, log-probabilities and values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.layout_id.as_bytes());
        h.update([self.ego_seat as u8]);
        for i in 0..self.len() {
            h.update([
                self.actions[i].index() as u8,
                self.partner_actions[i].index() as u8,
            ]);
            h.update(self.rewards[i].to_le_bytes());
            h.update(self.log_probs[i].to_le_bytes());
            h.update(self.values[i].to_le_bytes());
        }
        h.finalize()[..16]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rewards.len();
        let lens = [
            self.observations.len(),
            self.actions.len(),
            self.partner_actions.len(),
            self.log_probs.len(),
            self.values.len(),
            self.dones.len(),
        ];
        if lens.iter().any(|l| *l != n) {
            return Err(Error::ShapeMismatch {
                expected: format!("all trajectory arrays of length {n}"),
                actual: format!("{lens:?}"),
            });
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("trajectory reward".into()));
        }
        Ok(())
    }
}

/// Plays one full episode. `ego` sits in `ego_seat`; each seat draws from its
/// own random stream derived from `seed`.
pub fn rollout(
    kitchen: &Kitchen,
    ego: &dyn Agent,
    partner: &dyn Agent,
    ego_seat: usize,
    seed: u64,
) -> Result<Trajectory> {
    if ego_seat > 1 {
        return Err(Error::InvalidConfig(format!(
            "seat {ego_seat} is not 0 or 1"
        )));
    }
    let horizon = kitchen.config().horizon as usize;
    let cook = kitchen.config().cook_time;
    let mut rngs: [Rng; 2] = [rng::stream(seed, &[0]), rng::stream(seed, &[1])];
    let mut traj = Trajectory {
        layout_id: kitchen.layout().id().to_string(),
        ego_seat,
        ..Default::default()
    };
    let mut state = kitchen.reset();
    loop {
        let mut actions = [Action::Stay; 2];
        for seat in 0..2 {
            let obs = encode(kitchen.layout(), &state, seat, cook)?;
            let view = AgentView {
                kitchen,
                state: &state,
                seat,
                obs: &obs,
            };
            let agent = if seat == ego_seat { ego } else { partner };
            let decision = agent.act(&view, &mut rngs[seat])?;
            actions[seat] = decision.action;
            if seat == ego_seat {
                traj.log_probs.push(decision.log_prob);
                traj.values.push(decision.value);
                traj.observations.push(obs.data);
            }
        }
        let out = kitchen.step(&state, actions)?;
        traj.actions.push(actions[ego_seat]);
        traj.partner_actions.push(actions[1 - ego_seat]);
        traj.rewards.push(out.reward);
        traj.dones.push(out.done);
        traj.events.add(&out.events);
        state = out.state;
        if out.done || traj.len() >= horizon {
            break;
        }
    }
    Ok(traj)
}
