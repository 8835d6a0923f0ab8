use crate::error::{Error, Result};
use crate::ppo::gae;
use crate::rollout::Trajectory;

/// Mean per-step team reward of an episode.
pub fn score_episode(trajectory: &Trajectory) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    Ok(trajectory.total_reward() / trajectory.len() as f64)
}

/// Mean of `max(advantage, 0)` over the episode.
pub fn positive_value_loss(advantages: &[f64]) -> Result<f64> {
    if advantages.is_empty() {
        return Err(Error::Empty("advantages"));
    }
    Ok(advantages.iter().map(|a| a.max(0.0)).sum::<f64>() / advantages.len() as f64)
}

/// Positive value loss using GAE advantages from the trajectory's own value
/// estimates.
pub fn positive_value_loss_score(trajectory: &Trajectory, gamma: f64, lambda: f64) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    if trajectory.values.len() != trajectory.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} value estimates", trajectory.len()),
            actual: format!("{} value estimates", trajectory.values.len()),
        });
    }
    let bootstrap = if trajectory.dones.last() == Some(&true) {
        0.0
    } else {
        *trajectory.values.last().unwrap()
    };
    let (adv, _) = gae(
        &trajectory.rewards,
        &trajectory.values,
        bootstrap,
        gamma,
        lambda,
    )?;
    positive_value_loss(&adv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(rewards: Vec<f64>) -> Trajectory {
        let n = rewards.len();
        Trajectory {
            rewards,
            values: vec![0.0; n],
            dones: (0..n).map(|i| i + 1 == n).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn mean_reward_per_step() {
        let mut r = vec![0.0; 400];
        r[10] = 20.0;
        r[20] = 20.0;
        r[30] = 20.0;
        assert!((score_episode(&traj(r)).unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(score_episode(&traj(vec![0.0; 400])).unwrap(), 0.0);
        assert!(score_episode(&traj(vec![])).is_err());
    }

    #[test]
    fn positive_value_loss_examples() {
        assert!((positive_value_loss(&[1.0, -2.0, 3.0]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(positive_value_loss(&[-1.0, -0.5]).unwrap(), 0.0);
        assert_eq!(positive_value_loss(&[0.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn missing_values_are_rejected() {
        let mut t = traj(vec![1.0, 2.0]);
        t.values.clear();
        assert!(positive_value_loss_score(&t, 0.99, 0.98).is_err());
    }
}
