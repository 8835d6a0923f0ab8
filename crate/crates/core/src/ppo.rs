//! PPO with generalised advantage estimation and an RMSProp optimiser.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{log_softmax, Cache, PolicyNet};
use crate::rng;
use crate::rollout::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub rollout_length: usize,
    pub clip: f64,
    pub optimizer_eps: f64,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Minibatches per epoch.
    pub minibatch_count: usize,
    /// Upper bound on samples per minibatch.
    pub minibatch_size: usize,
    pub rmsprop_alpha: f64,
    pub max_grad_norm: Option<f64>,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.98,
            epochs: 8,
            rollout_length: 400,
            clip: 0.05,
            optimizer_eps: 1e-5,
            learning_rate: 1e-3,
            value_coef: 0.1,
            entropy_coef: 0.1,
            minibatch_count: 20,
            minibatch_size: 5000,
            rmsprop_alpha: 0.99,
            max_grad_norm: None,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    /// Small-budget profile for single-machine runs and tests.
    pub fn desk() -> Self {
        PpoConfig {
            epochs: 2,
            clip: 0.2,
            learning_rate: 2e-3,
            entropy_coef: 0.01,
            value_coef: 0.5,
            minibatch_count: 4,
            minibatch_size: 512,
            max_grad_norm: Some(0.5),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("ppo: {m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0)
            || !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0)
        {
            return bad("gamma and gae_lambda must lie in (0, 1]");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if self.epochs == 0
            || self.rollout_length == 0
            || self.minibatch_count == 0
            || self.minibatch_size == 0
        {
            return bad("epochs, rollout_length and minibatch sizes must be positive");
        }
        let positive = [
            self.optimizer_eps,
            self.learning_rate,
            self.value_coef,
            self.entropy_coef,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return bad(
                "optimizer_eps, learning_rate, value_coef and entropy_coef must be positive",
            );
        }
        if !(self.rmsprop_alpha > 0.0 && self.rmsprop_alpha < 1.0) {
            return bad("rmsprop_alpha must lie in (0, 1)");
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }

    /// Overrides one field by name; `value` is parsed as JSON
    /// (`"0.2"`, `"true"`, `"null"`).
    pub fn set_field(&mut self, name: &str, value: &str) -> Result<()> {
        let mut json = serde_json::to_value(&*self)?;
        let obj = json
            .as_object_mut()
            .expect("struct serialises to an object");
        if !obj.contains_key(name) {
            return Err(Error::InvalidConfig(format!("unknown ppo field `{name}`")));
        }
        let parsed: serde_json::Value = serde_json::from_str(value).map_err(|e| {
            Error::InvalidConfig(format!("ppo.{name}: cannot parse `{value}`: {e}"))
        })?;
        obj.insert(name.to_string(), parsed);
        *self = serde_json::from_value(json)
            .map_err(|e| Error::InvalidConfig(format!("ppo.{name}: {e}")))?;
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json)[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Generalised advantage estimation over one trajectory segment.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.is_empty() {
        return Err(Error::Empty("rewards"));
    }
    if rewards.len() != values.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", rewards.len()),
            actual: format!("{} values", values.len()),
        });
    }
    if !(gamma > 0.0 && gamma <= 1.0) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!(
            "gamma {gamma} / lambda {lambda} out of range"
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Flattened training samples from one or more trajectories.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn from_trajectories(trajectories: &[Trajectory], config: &PpoConfig) -> Result<Self> {
        let mut batch = Batch::default();
        for traj in trajectories {
            traj.validate()?;
            if traj.is_empty() {
                continue;
            }
            let bootstrap = if *traj.dones.last().unwrap() {
                0.0
            } else {
                *traj.values.last().unwrap()
            };
            let (adv, ret) = gae(
                &traj.rewards,
                &traj.values,
                bootstrap,
                config.gamma,
                config.gae_lambda,
            )?;
            batch.inputs.extend(traj.observations.iter().cloned());
            batch.actions.extend(traj.actions.iter().map(|a| a.index()));
            batch.old_log_probs.extend_from_slice(&traj.log_probs);
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
        }
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        if config.normalize_advantages {
            normalize_in_place(&mut batch.advantages);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Zero-mean unit-variance rescale; left untouched when the spread is ~0.
pub fn normalize_in_place(xs: &mut [f64]) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        xs.iter_mut().for_each(|x| *x -= mean);
        return;
    }
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// Negated clipped surrogate (minimised).
    pub policy_loss: f64,
    /// Mean of `min(ratio * A, clip(ratio) * A)`.
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub total: f64,
}

/// Loss and its gradient over the samples `indices` of `batch`:
/// `policy + value_coef * value - entropy_coef * entropy`, each a mean.
pub fn loss_and_grad(
    net: &PolicyNet,
    batch: &Batch,
    indices: &[usize],
    config: &PpoConfig,
) -> (LossTerms, Vec<f64>) {
    let mut grads = vec![0.0; net.params().len()];
    let mut terms = LossTerms::default();
    let n = indices.len() as f64;
    let mut cache = Cache::default();
    let (lo, hi) = (1.0 - config.clip, 1.0 + config.clip);
    for &i in indices {
        net.forward_cached(&batch.inputs[i], &mut cache);
        let logp = log_softmax(&cache.logits);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let a = batch.actions[i];
        let adv = batch.advantages[i];
        let ratio = (logp[a] - batch.old_log_probs[i]).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(lo, hi) * adv;
        let surrogate = unclipped.min(clipped);
        let entropy = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        let value_err = cache.value - batch.returns[i];

        terms.surrogate += surrogate / n;
        terms.value_loss += value_err * value_err / n;
        terms.entropy += entropy / n;
        if (ratio - 1.0).abs() > config.clip {
            terms.clip_fraction += 1.0 / n;
        }

        // d(-surrogate)/d(log pi(a)) is -ratio * A on the unclipped branch, else 0.
        let d_logp = if unclipped <= clipped {
            -unclipped / n
        } else {
            0.0
        };
        let dlogits: Vec<f64> = (0..probs.len())
            .map(|k| {
                let onehot = if k == a { 1.0 } else { 0.0 };
                let d_policy = d_logp * (onehot - probs[k]);
                // d(-c_e * H)/dz_k = c_e * p_k * (log p_k + H)
                let d_entropy = config.entropy_coef * probs[k] * (logp[k] + entropy) / n;
                d_policy + d_entropy
            })
            .collect();
        let dvalue = config.value_coef * 2.0 * value_err / n;
        net.backward(&cache, &dlogits, dvalue, &mut grads);
    }
    terms.policy_loss = -terms.surrogate;
    terms.total = terms.policy_loss + config.value_coef * terms.value_loss
        - config.entropy_coef * terms.entropy;
    (terms, grads)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub alpha: f64,
    pub eps: f64,
    pub lr: f64,
    square_avg: Vec<f64>,
}

impl RmsProp {
    pub fn new(len: usize, lr: f64, alpha: f64, eps: f64) -> Self {
        RmsProp {
            alpha,
            eps,
            lr,
            square_avg: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.square_avg) {
            *s = self.alpha * *s + (1.0 - self.alpha) * g * g;
            *p -= self.lr * g / (s.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// Owns the optimiser state across updates.
#[derive(Clone, Debug)]
pub struct PpoLearner {
    config: PpoConfig,
    optimizer: RmsProp,
    updates: u64,
}

impl PpoLearner {
    pub fn new(config: PpoConfig, param_count: usize) -> Result<Self> {
        config.validate()?;
        let optimizer = RmsProp::new(
            param_count,
            config.learning_rate,
            config.rmsprop_alpha,
            config.optimizer_eps,
        );
        Ok(PpoLearner {
            config,
            optimizer,
            updates: 0,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Runs `epochs` passes of shuffled minibatches over the trajectories.
    /// On a non-finite loss the network and optimiser are restored and the
    /// offending minibatch is reported.
    pub fn update(
        &mut self,
        net: &mut PolicyNet,
        trajectories: &[Trajectory],
        seed: u64,
    ) -> Result<UpdateMetrics> {
        let batch = Batch::from_trajectories(trajectories, &self.config)?;
        let snapshot = (net.params().to_vec(), self.optimizer.clone());
        match self.run_epochs(net, &batch, seed) {
            Ok(metrics) => {
                self.updates += 1;
                Ok(metrics)
            }
            Err(e) => {
                net.params_mut().copy_from_slice(&snapshot.0);
                self.optimizer = snapshot.1;
                Err(e)
            }
        }
    }

    fn run_epochs(
        &mut self,
        net: &mut PolicyNet,
        batch: &Batch,
        seed: u64,
    ) -> Result<UpdateMetrics> {
        let cfg = &self.config;
        let n = batch.len();
        let chunk = n
            .div_ceil(cfg.minibatch_count)
            .min(cfg.minibatch_size)
            .max(1);
        let mut rng = rng::stream(seed, &[rng::tag::PPO, self.updates]);
        let mut order: Vec<usize> = (0..n).collect();
        let mut metrics = UpdateMetrics::default();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for (mb, indices) in order.chunks(chunk).take(cfg.minibatch_count).enumerate() {
                let (terms, mut grads) = loss_and_grad(net, batch, indices, cfg);
                if !terms.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "PPO loss in epoch {epoch}, minibatch {mb} (policy {}, value {}, entropy {})",
                        terms.policy_loss, terms.value_loss, terms.entropy
                    )));
                }
                if let Some(max_norm) = cfg.max_grad_norm {
                    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                    if norm > max_norm {
                        let scale = max_norm / norm;
                        grads.iter_mut().for_each(|g| *g *= scale);
                    }
                }
                self.optimizer.step(net.params_mut(), &grads);
                metrics.policy_loss += terms.policy_loss;
                metrics.value_loss += terms.value_loss;
                metrics.entropy += terms.entropy;
                metrics.clip_fraction += terms.clip_fraction;
                metrics.minibatches += 1;
            }
        }
        let m = metrics.minibatches.max(1) as f64;
        metrics.policy_loss /= m;
        metrics.value_loss /= m;
        metrics.entropy /= m;
        metrics.clip_fraction /= m;
        Ok(metrics)
    }
}
