//! Run configuration and the on-disk layout of a training run:
//!
//! ```text
//! <out>/config.json          resolved configuration
//! <out>/layouts/<id>.layout  training layouts
//! <out>/heldout/<id>.layout  evaluation layouts
//! <out>/metrics.jsonl        one record per episode
//! <out>/checkpoints/iter_<i>.ckpt
//! <out>/population.json      co-players and their buffers
//! <out>/eval.json, results.csv
//! <out>/summary.json
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{ActionSelection, NetAgent, RandomAgent};
use crate::checkpoint::Checkpoint;
use crate::curriculum::{
    BufferEntry, CurriculumConfig, EpisodeRecord, IterationSummary, TrainConfig, TrainObserver,
    Trainer,
};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::{
    classify_difficulty, evaluate_vs_proxy, write_results_csv, KitchenRunner, LayoutResult,
    NamedPolicy,
};
use crate::layout::Layout;
use crate::layoutgen::{generate, GeneratorConfig, LayoutSet};
use crate::nn::NetConfig;
use crate::ppo::PpoConfig;
use crate::proxy::ProxyAgent;
use crate::rollout::rollout;

pub const HELD_OUT_SEED: u64 = 0x5EED_0E7A;
/// Iterations used by the desk-scale profile.
pub const DESK_ITERATIONS: usize = 50;
pub const LAYOUT_EXTENSION: &str = "layout";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutSource {
    Generate(GeneratorConfig),
    /// Directory of `.layout` files, read in file-name order.
    Dir(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub enabled: bool,
    /// Generator for the held-out pool; its seed should differ from the
    /// training generator's.
    pub held_out: GeneratorConfig,
    /// Candidates drawn before picking held-out layouts with a spread of
    /// difficulty.
    pub pool_factor: usize,
    /// Episodes per seat order per layout.
    pub episodes: usize,
    pub proxy_epsilon: f64,
    pub ego_selection: ActionSelection,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            enabled: true,
            held_out: GeneratorConfig {
                count: 5,
                seed: HELD_OUT_SEED,
                ..Default::default()
            },
            pool_factor: 4,
            episodes: 5,
            proxy_epsilon: crate::proxy::DEFAULT_EPSILON,
            ego_selection: ActionSelection::Sample,
            seed: HELD_OUT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub layouts: LayoutSource,
    #[serde(default)]
    pub curriculum: CurriculumConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub env: EnvConfig,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub eval: EvalSettings,
}

impl RunConfig {
    /// The desk-scale profile: 50 generated layouts, buffers of 16, 32
    /// episodes per iteration, three co-players and a shrunken PPO.
    pub fn desk(iterations: usize, seed: u64) -> Self {
        let train = TrainConfig::desk(iterations, seed);
        RunConfig {
            layouts: LayoutSource::Generate(GeneratorConfig {
                count: 50,
                seed,
                ..Default::default()
            }),
            curriculum: train.curriculum,
            ppo: train.ppo,
            net: train.net,
            env: train.env,
            iterations,
            seed,
            output_dir: None,
            eval: EvalSettings::default(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            curriculum: self.curriculum.clone(),
            ppo: self.ppo.clone(),
            net: self.net.clone(),
            env: self.env,
            iterations: self.iterations,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if let LayoutSource::Generate(g) = &self.layouts {
            g.validate()?;
        }
        if self.eval.enabled {
            self.eval.held_out.validate()?;
            if self.eval.episodes == 0 || self.eval.pool_factor == 0 {
                return Err(Error::InvalidConfig(
                    "eval episodes and pool_factor must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn resolve_layouts(&self) -> Result<LayoutSet> {
        match &self.layouts {
            LayoutSource::Generate(g) => Ok(generate(g)?.set),
            LayoutSource::Dir(dir) => load_layout_dir(dir),
        }
    }
}

/// Reads every `.layout` file in `dir`, sorted by file name.
pub fn load_layout_dir(dir: &Path) -> Result<LayoutSet> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| {
            Error::InvalidConfig(format!("cannot read layout dir {}: {e}", dir.display()))
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == LAYOUT_EXTENSION))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no .{LAYOUT_EXTENSION} files in {}",
            dir.display()
        )));
    }
    let layouts = paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            Layout::parse(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    LayoutSet::new(layouts)
}

pub fn write_layouts(dir: &Path, layouts: &[Layout]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    layouts
        .iter()
        .map(|l| {
            let path = dir.join(format!("{}.{LAYOUT_EXTENSION}", l.id()));
            fs::write(&path, l.to_text())?;
            Ok(path)
        })
        .collect()
}

/// Picks held-out layouts not present in `exclude`, aiming for one per
/// difficulty label. Difficulty is measured by proxy self-play reward over
/// a candidate pool.
pub fn held_out_layouts(
    settings: &EvalSettings,
    env: EnvConfig,
    exclude: &LayoutSet,
) -> Result<Vec<Layout>> {
    let want = settings.held_out.count;
    let pool_cfg = GeneratorConfig {
        count: want * settings.pool_factor + exclude.len().min(want * settings.pool_factor),
        ..settings.held_out.clone()
    };
    let pool: Vec<Layout> = generate(&pool_cfg)?
        .set
        .layouts()
        .iter()
        .filter(|l| exclude.get(l.id()).is_none())
        .cloned()
        .collect();
    if pool.len() < want {
        return Err(Error::InsufficientSamples {
            needed: want,
            got: pool.len(),
        });
    }
    let proxy = ProxyAgent::new(settings.proxy_epsilon);
    let rewards = pool
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let kitchen = crate::env::Kitchen::new(l.clone(), env)?;
            let r = rollout(&kitchen, &proxy, &proxy, 0, settings.seed ^ i as u64)?;
            Ok(r.total_reward())
        })
        .collect::<Result<Vec<f64>>>()?;
    let labels = classify_difficulty(&rewards)?;
    let mut chosen: Vec<usize> = Vec::new();
    for label in crate::eval::DifficultyLabel::ALL {
        if chosen.len() == want {
            break;
        }
        if let Some(i) = (0..pool.len()).find(|&i| labels[i] == label && !chosen.contains(&i)) {
            chosen.push(i);
        }
    }
    for i in 0..pool.len() {
        if chosen.len() == want {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    Ok(chosen.into_iter().map(|i| pool[i].clone()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ego: Vec<LayoutResult>,
    pub random: Vec<LayoutResult>,
    pub ego_mean: f64,
    pub random_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub episodes: usize,
    pub ppo_updates: u64,
    pub replay_episodes: usize,
    pub first_quartile_score: f64,
    pub last_quartile_score: f64,
    pub final_checkpoint: PathBuf,
    pub eval: Option<EvalReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PopulationEntry {
    id: String,
    created_at: usize,
    checkpoint: PathBuf,
    fingerprint: String,
    buffer: Vec<BufferEntry>,
}

struct RunWriter {
    root: PathBuf,
    metrics: BufWriter<File>,
    scores: Vec<f64>,
    replay_episodes: usize,
    ppo_fingerprint: String,
}

impl RunWriter {
    fn checkpoint_path(&self, iter: usize) -> PathBuf {
        self.root
            .join("checkpoints")
            .join(format!("iter_{iter}.ckpt"))
    }
}

impl TrainObserver for RunWriter {
    fn on_episode(&mut self, record: &EpisodeRecord) -> Result<()> {
        serde_json::to_writer(&mut self.metrics, record)?;
        self.metrics.write_all(b"\n")?;
        self.scores.push(record.score);
        self.replay_episodes += usize::from(record.updated);
        Ok(())
    }

    fn on_iteration(&mut self, summary: &IterationSummary, trainer: &Trainer) -> Result<()> {
        self.metrics.flush()?;
        let ckpt = Checkpoint::from_net(
            &summary.snapshot_id,
            summary.iter,
            trainer.ego(),
            Some(self.ppo_fingerprint.clone()),
        );
        ckpt.save(&self.checkpoint_path(summary.iter))?;
        let population: Vec<PopulationEntry> = trainer
            .population()
            .members()
            .iter()
            .map(|m| PopulationEntry {
                id: m.id.clone(),
                created_at: m.created_at,
                checkpoint: PathBuf::from("checkpoints")
                    .join(format!("iter_{}.ckpt", m.created_at)),
                fingerprint: m.fingerprint().to_string(),
                buffer: m.buffer.entries().to_vec(),
            })
            .collect();
        fs::write(
            self.root.join("population.json"),
            serde_json::to_vec_pretty(&population)?,
        )?;
        log::info!(
            "iteration {} done: mean S {:.4}, {} replay episodes",
            summary.iter,
            summary.mean_score,
            summary.replay_episodes
        );
        Ok(())
    }
}

fn quartile_means(scores: &[f64]) -> (f64, f64) {
    let q = (scores.len() / 4).max(1);
    let m = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (m(&scores[..q]), m(&scores[scores.len() - q..]))
}

/// Validates the configuration, then trains and evaluates into `out`.
/// Nothing is created on disk if validation or layout resolution fails.
pub fn run_training(config: &RunConfig, out: &Path) -> Result<RunSummary> {
    config.validate()?;
    let layouts = config.resolve_layouts()?;
    let held_out = if config.eval.enabled {
        Some(held_out_layouts(&config.eval, config.env, &layouts)?)
    } else {
        None
    };
    let mut trainer = Trainer::new(config.train_config(), &layouts)?;
    if out.join("metrics.jsonl").exists() {
        return Err(Error::InvalidConfig(format!(
            "{} already holds a run",
            out.display()
        )));
    }

    fs::create_dir_all(out.join("checkpoints"))?;
    fs::write(out.join("config.json"), serde_json::to_vec_pretty(config)?)?;
    write_layouts(&out.join("layouts"), layouts.layouts())?;
    if let Some(h) = &held_out {
        write_layouts(&out.join("heldout"), h)?;
    }
    let mut writer = RunWriter {
        root: out.to_path_buf(),
        metrics: BufWriter::new(File::create(out.join("metrics.jsonl"))?),
        scores: Vec::new(),
        replay_episodes: 0,
        ppo_fingerprint: config.ppo.fingerprint(),
    };
    trainer.run(&mut writer)?;
    writer.metrics.flush()?;

    let eval = match &held_out {
        Some(h) => {
            let report = evaluate_final(config, &trainer, h)?;
            fs::write(out.join("eval.json"), serde_json::to_vec_pretty(&report)?)?;
            let mut csv = File::create(out.join("results.csv"))?;
            write_results_csv(
                &[report.ego.clone(), report.random.clone()].concat(),
                &mut csv,
            )?;
            Some(report)
        }
        None => None,
    };
    let (first, last) = quartile_means(&writer.scores);
    let summary = RunSummary {
        iterations: trainer.iteration(),
        episodes: writer.scores.len(),
        ppo_updates: trainer.ppo_updates(),
        replay_episodes: writer.replay_episodes,
        first_quartile_score: first,
        last_quartile_score: last,
        final_checkpoint: writer.checkpoint_path(trainer.iteration()),
        eval,
    };
    fs::write(
        out.join("summary.json"),
        serde_json::to_vec_pretty(&summary)?,
    )?;
    Ok(summary)
}

fn evaluate_final(
    config: &RunConfig,
    trainer: &Trainer,
    held_out: &[Layout],
) -> Result<EvalReport> {
    let runner = KitchenRunner { env: config.env };
    let proxy = ProxyAgent::new(config.eval.proxy_epsilon);
    let ego = NamedPolicy::new(
        format!("iter_{}", trainer.iteration()),
        Arc::new(NetAgent::new(
            Arc::new(trainer.ego().clone()),
            config.eval.ego_selection,
        )),
    );
    let random = NamedPolicy::new("random", Arc::new(RandomAgent));
    let ego_results = evaluate_vs_proxy(
        &runner,
        &ego,
        &proxy,
        held_out,
        config.eval.episodes,
        config.eval.seed,
    )?;
    let random_results = evaluate_vs_proxy(
        &runner,
        &random,
        &proxy,
        held_out,
        config.eval.episodes,
        config.eval.seed,
    )?;
    let avg = |r: &[LayoutResult]| r.iter().map(|x| x.mean_reward).sum::<f64>() / r.len() as f64;
    Ok(EvalReport {
        ego_mean: avg(&ego_results),
        random_mean: avg(&random_results),
        ego: ego_results,
        random: random_results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles() {
        let s: Vec<f64> = (0..8).map(f64::from).collect();
        assert_eq!(quartile_means(&s), (0.5, 6.5));
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = RunConfig::desk(3, 9);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        back.validate().unwrap();
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c: RunConfig =
            serde_json::from_str(r#"{"layouts": {"dir": "x"}, "iterations": 2}"#).unwrap();
        assert_eq!(c.ppo, PpoConfig::default());
        assert_eq!(c.curriculum, CurriculumConfig::default());
    }

    #[test]
    fn invalid_config_leaves_no_directory() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut c = RunConfig::desk(1, 0);
        c.curriculum.temperature = 0.0;
        assert!(run_training(&c, &out).is_err());
        assert!(!out.exists());
        let c = RunConfig {
            layouts: LayoutSource::Dir(dir.path().join("nope")),
            ..RunConfig::desk(1, 0)
        };
        assert!(run_training(&c, &out).is_err());
        assert!(!out.exists());
    }
}
