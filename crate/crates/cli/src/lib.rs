//! Command implementations behind the `kitchen` binary.

pub mod server;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kitchen_ued::agent::{ActionSelection, NetAgent};
use kitchen_ued::checkpoint::Checkpoint;
use kitchen_ued::env::EnvConfig;
use kitchen_ued::eval::{
    cross_play, evaluate_vs_proxy, write_results_csv, KitchenRunner, NamedPolicy,
};
use kitchen_ued::layout::Tile;
use kitchen_ued::layoutgen::{generate, GeneratorConfig};
use kitchen_ued::nn::PolicyNet;
use kitchen_ued::proxy::ProxyAgent;
use kitchen_ued::run::{load_layout_dir, run_training, write_layouts, RunConfig};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "kitchen",
    version,
    about = "Curriculum training and evaluation for a two-player kitchen game"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a set of solvable layouts.
    Layoutgen(LayoutgenArgs),
    /// Train an ego policy from a run configuration.
    Train(TrainArgs),
    /// Evaluate checkpoints.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Serve live play sessions over HTTP and WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct LayoutgenArgs {
    #[arg(long, default_value_t = 6000)]
    pub count: usize,
    #[arg(long, default_value_t = 6)]
    pub blocks_min: usize,
    #[arg(long, default_value_t = 9)]
    pub blocks_max: usize,
    #[arg(long, default_value_t = 14)]
    pub min_floor: usize,
    #[arg(long, default_value_t = 7)]
    pub width: usize,
    #[arg(long, default_value_t = 5)]
    pub height: usize,
    /// Minimum tile Hamming distance between any two layouts.
    #[arg(long, default_value_t = 1)]
    pub dedup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// PPO override as `field=value`, e.g. `--ppo clip=0.2`. Repeatable.
    #[arg(long = "ppo", value_name = "FIELD=VALUE")]
    pub ppo: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Pair every checkpoint with every other on every layout.
    CrossPlay(CrossPlayArgs),
    /// Pair one checkpoint with the scripted proxy partner.
    Proxy(ProxyArgs),
}

#[derive(Debug, Args)]
pub struct CrossPlayArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Directory of `.layout` files.
    #[arg(long)]
    pub layouts: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the per-layout min-max normalised matrix.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProxyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub layouts: PathBuf,
    /// Episodes per seat order.
    #[arg(long, default_value_t = 5)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = kitchen_ued::proxy::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub layouts: PathBuf,
    #[arg(long, env = "KITCHEN_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory for session logs.
    #[arg(long, default_value = "sessions")]
    pub log_dir: PathBuf,
    /// Static files served at `/` (e.g. the browser demo).
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Agent takes the most likely action instead of sampling.
    #[arg(long)]
    pub greedy: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Layoutgen(a) => layoutgen(&a),
        Command::Train(a) => train(&a),
        Command::Eval(EvalCommand::CrossPlay(a)) => eval_cross_play(&a),
        Command::Eval(EvalCommand::Proxy(a)) => eval_proxy(&a),
        Command::Serve(a) => serve(a),
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    id: String,
    file: String,
    onion_dispensers: usize,
    dish_dispensers: usize,
    pots: usize,
    serving: usize,
    blocks: usize,
    floor: usize,
}

pub fn layoutgen(a: &LayoutgenArgs) -> Result<()> {
    let config = GeneratorConfig {
        count: a.count,
        blocks_min: a.blocks_min,
        blocks_max: a.blocks_max,
        min_floor: a.min_floor,
        width: a.width,
        height: a.height,
        dedup_hamming_min: a.dedup,
        seed: a.seed,
        max_attempts: None,
    };
    let report = generate(&config)?;
    if report.stalled {
        bail!(
            "generation stalled: {} of {} layouts after {} attempts",
            report.set.len(),
            a.count,
            report.attempts
        );
    }
    let layouts = report.set.layouts();
    let paths = write_layouts(&a.out, layouts)?;
    let manifest: Vec<ManifestEntry> = layouts
        .iter()
        .zip(&paths)
        .map(|(l, p)| ManifestEntry {
            id: l.id().to_string(),
            file: p.file_name().unwrap().to_string_lossy().into_owned(),
            onion_dispensers: l.count(Tile::OnionDispenser),
            dish_dispensers: l.count(Tile::DishDispenser),
            pots: l.count(Tile::Pot),
            serving: l.count(Tile::Serving),
            blocks: l.interactive_count(),
            floor: l.floor_count(),
        })
        .collect();
    fs::write(
        a.out.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    println!(
        "wrote {} layouts to {} ({} attempts)",
        layouts.len(),
        a.out.display(),
        report.attempts
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut config = RunConfig::from_file(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(it) = a.iterations {
        config.iterations = it;
    }
    for kv in &a.ppo {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--ppo expects FIELD=VALUE, got `{kv}`"))?;
        config.ppo.set_field(k, v)?;
    }
    let out = a
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| {
            anyhow!("no output directory: pass --out or set output_dir in the config")
        })?;
    config.output_dir = Some(out.clone());
    let summary = run_training(&config, &out)?;
    println!(
        "trained {} iterations ({} episodes, {} PPO updates); S first quartile {:.4}, last quartile {:.4}",
        summary.iterations, summary.episodes, summary.ppo_updates, summary.first_quartile_score, summary.last_quartile_score
    );
    if let Some(e) = &summary.eval {
        println!(
            "held-out reward with proxy: ego {:.2}, random {:.2}",
            e.ego_mean, e.random_mean
        );
    }
    println!(
        "final checkpoint: {}",
        out.join(&summary.final_checkpoint).display()
    );
    Ok(())
}

fn selection(greedy: bool) -> ActionSelection {
    if greedy {
        ActionSelection::Greedy
    } else {
        ActionSelection::Sample
    }
}

/// Loads checkpoints keyed by file stem.
pub fn load_policies(paths: &[PathBuf]) -> Result<Vec<(String, usize, PolicyNet)>> {
    let mut out: Vec<(String, usize, PolicyNet)> = Vec::new();
    for p in paths {
        let ckpt = Checkpoint::load(p)?;
        let id = policy_id(p);
        if out.iter().any(|(other, _, _)| *other == id) {
            bail!("two checkpoints share the id `{id}`; rename one of them");
        }
        out.push((id, ckpt.iteration, ckpt.to_net()?));
    }
    Ok(out)
}

fn policy_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn eval_cross_play(a: &CrossPlayArgs) -> Result<()> {
    let layouts = load_layout_dir(&a.layouts)?;
    let policies: Vec<NamedPolicy> = load_policies(&a.checkpoints)?
        .into_iter()
        .map(|(id, _, net)| {
            NamedPolicy::new(
                id,
                Arc::new(NetAgent::new(Arc::new(net), selection(a.greedy))),
            )
        })
        .collect();
    let runner = KitchenRunner {
        env: EnvConfig::default(),
    };
    let matrix = cross_play(&runner, &policies, layouts.layouts(), a.episodes, a.seed)?;
    fs::write(&a.out, serde_json::to_vec_pretty(&matrix)?)
        .with_context(|| format!("writing {}", a.out.display()))?;
    if a.normalize {
        let path = a.out.with_extension("normalized.json");
        fs::write(&path, serde_json::to_vec_pretty(&matrix.normalize())?)?;
    }
    println!(
        "cross-play: {} policies x {} layouts x {} episodes -> {}",
        policies.len(),
        layouts.len(),
        a.episodes,
        a.out.display()
    );
    Ok(())
}

pub fn eval_proxy(a: &ProxyArgs) -> Result<()> {
    let layouts = load_layout_dir(&a.layouts)?;
    let (id, _, net) = load_policies(std::slice::from_ref(&a.checkpoint))?.remove(0);
    let policy = NamedPolicy::new(
        id,
        Arc::new(NetAgent::new(Arc::new(net), selection(a.greedy))),
    );
    let runner = KitchenRunner {
        env: EnvConfig::default(),
    };
    let results = evaluate_vs_proxy(
        &runner,
        &policy,
        &ProxyAgent::new(a.epsilon),
        layouts.layouts(),
        a.episodes,
        a.seed,
    )?;
    let file = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_results_csv(&results, file)?;
    let mean = results.iter().map(|r| r.mean_reward).sum::<f64>() / results.len() as f64;
    println!(
        "mean reward with proxy over {} layouts: {mean:.2}",
        results.len()
    );
    Ok(())
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let policies = load_policies(&a.checkpoints)?;
    let layouts = load_layout_dir(&a.layouts)?;
    let config = server::ServiceConfig {
        policies,
        layouts: layouts.layouts().to_vec(),
        env: EnvConfig::default(),
        selection: selection(a.greedy),
        log_dir: Some(a.log_dir),
        static_dir: a.static_dir,
    };
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, server::router(config)).await?;
        Ok(())
    })
}
