//! Acceptance suite. Runs each criterion in sequence, prints one PASS/FAIL
//! line per criterion with its runtime, and exits nonzero if any failed.

use std::collections::{BTreeMap, VecDeque};
use std::time::{Duration, Instant};

use kitchen_ued::curriculum::{select_co_player, EnvBuffer, Scoring};
use kitchen_ued::env::{Action, EnvConfig, Held, Kitchen};
use kitchen_ued::eval::{classify_difficulty, min_max_normalize, paired_t_test, DifficultyLabel};
use kitchen_ued::layout::{Layout, Pos, Tile};
use kitchen_ued::layoutgen::{generate, GeneratorConfig};
use kitchen_ued::nn::{NetConfig, PolicyNet};
use kitchen_ued::ppo::{gae, loss_and_grad, Batch, PpoConfig};
use kitchen_ued::run::{run_training, EvalReport, RunConfig, DESK_ITERATIONS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_buffer(rng: &mut ChaCha8Rng, scoring: Scoring) -> (EnvBuffer, u64) {
    let n = rng.gen_range(1..=40);
    let mut b = EnvBuffer::new(n, scoring);
    let coarse = rng.gen_bool(0.5);
    let mut global = 0;
    for i in 0..n {
        let score = if coarse {
            rng.gen_range(0..5) as f64
        } else {
            rng.gen_range(-3.0..3.0)
        };
        global += rng.gen_range(0..4);
        b.update(&format!("L{i:03}"), score, global).unwrap();
    }
    (b, global + rng.gen_range(0..10))
}

fn valid_distribution(p: &[f64]) -> bool {
    p.iter().all(|x| *x >= 0.0 && x.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

fn distributions() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let scoring = if case % 2 == 0 {
            Scoring::Return
        } else {
            Scoring::PositiveValueLoss
        };
        let (b, global) = random_buffer(&mut rng, scoring);
        let beta = rng.gen_range(0.05..=1.0);
        let rho = rng.gen_range(0.0..=1.0);
        let ps = b.score_distribution(beta).unwrap();
        let pc = b.staleness_distribution(global).unwrap();
        let pr = b.replay_distribution(rho, beta, global).unwrap();
        for (name, p) in [("P_S", &ps), ("P_C", &pc), ("P_replay", &pr)] {
            ensure(valid_distribution(p), || {
                format!("case {case}: {name} invalid: {p:?}")
            })?;
        }
        ensure(
            b.replay_distribution(0.0, beta, global).unwrap() == ps,
            || format!("case {case}: rho=0 differs from P_S"),
        )?;
        ensure(
            b.replay_distribution(1.0, beta, global).unwrap() == pc,
            || format!("case {case}: rho=1 differs from P_C"),
        )?;

        let mut t = EnvBuffer::new(b.capacity(), scoring);
        for e in b.entries() {
            t.update(
                &e.layout_id,
                (e.score * 0.5).exp() + 2.0 * e.score - 7.0,
                e.last_sampled,
            )
            .unwrap();
        }
        ensure(t.score_distribution(beta).unwrap() == ps, || {
            format!("case {case}: P_S changed under a monotone transform")
        })?;
    }
    Ok("1000 buffers".into())
}

fn oracle_select(pop: &[(usize, EnvBuffer)]) -> usize {
    let mut best: Option<(f64, usize, String, usize)> = None;
    for (i, (created, buf)) in pop.iter().enumerate() {
        let mut cands: Vec<(f64, String)> = buf
            .entries()
            .iter()
            .map(|e| (buf.scoring().key(e.score), e.layout_id.clone()))
            .collect();
        if cands.is_empty() {
            cands.push((f64::NEG_INFINITY, String::new()));
        }
        for (k, id) in cands {
            let cand = (k, *created, id, i);
            let better = match &best {
                None => true,
                Some(b) => (cand.0, cand.1, &cand.2) < (b.0, b.1, &b.2),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.unwrap().3
}

/// Buffer retention replayed with a map; the new entry displaces the
/// highest key (ties: largest id) only when its own key is lower.
fn oracle_retention(offers: &[(String, f64)], k: usize, scoring: Scoring) -> BTreeMap<String, f64> {
    let mut kept: BTreeMap<String, f64> = BTreeMap::new();
    for (id, s) in offers {
        if let Some(old) = kept.get_mut(id) {
            *old = 0.7 * *old + 0.3 * s;
            continue;
        }
        if kept.len() < k {
            kept.insert(id.clone(), *s);
            continue;
        }
        let (worst_id, worst_key) = kept
            .iter()
            .map(|(i, v)| (i.clone(), scoring.key(*v)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
            .unwrap();
        if scoring.key(*s) < worst_key {
            kept.remove(&worst_id);
            kept.insert(id.clone(), *s);
        }
    }
    kept
}

fn naive_gae(r: &[f64], v: &[f64], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let next = |t: usize| if t + 1 < n { v[t + 1] } else { boot };
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            for l in 0..n - t {
                let d = r[t + l] + gamma * next(t + l) - v[t + l];
                acc += (gamma * lambda).powi(l as i32) * d;
            }
            acc
        })
        .collect()
}

fn oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let scoring = if case % 3 == 0 {
            Scoring::PositiveValueLoss
        } else {
            Scoring::Return
        };
        let pop: Vec<(usize, EnvBuffer)> = (0..rng.gen_range(1..8))
            .map(|_| {
                let mut b = EnvBuffer::new(8, scoring);
                for _ in 0..rng.gen_range(0..6) {
                    let id = format!("L{}", rng.gen_range(0..20));
                    b.update(&id, rng.gen_range(0..6) as f64, 0).unwrap();
                }
                (rng.gen_range(0..4), b)
            })
            .collect();
        let cands: Vec<(usize, &EnvBuffer)> = pop.iter().map(|(c, b)| (*c, b)).collect();
        let got = select_co_player(&cands).unwrap();
        let want = oracle_select(&pop);
        ensure(got == want, || {
            format!("population {case}: selected {got}, oracle {want}")
        })?;
    }
    for k in [1usize, 2, 4, 16] {
        for case in 0..100 {
            let scoring = if case % 2 == 0 {
                Scoring::Return
            } else {
                Scoring::PositiveValueLoss
            };
            let offers: Vec<(String, f64)> = (0..rng.gen_range(1..80))
                .map(|_| {
                    (
                        format!("L{:02}", rng.gen_range(0..30)),
                        rng.gen_range(0..8) as f64,
                    )
                })
                .collect();
            let mut b = EnvBuffer::new(k, scoring);
            for (g, (id, s)) in offers.iter().enumerate() {
                b.update(id, *s, g as u64).unwrap();
            }
            let got: BTreeMap<String, f64> = b
                .entries()
                .iter()
                .map(|e| (e.layout_id.clone(), e.score))
                .collect();
            let want = oracle_retention(&offers, k, scoring);
            ensure(got == want, || {
                format!("k={k} case {case}: kept {got:?}, oracle {want:?}")
            })?;
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=32);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..20.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let boot = rng.gen_range(-3.0..3.0);
        let gamma = rng.gen_range(0.5..=1.0);
        let lambda = rng.gen_range(0.0..=1.0);
        let (adv, ret) = gae(&r, &v, boot, gamma, lambda).unwrap();
        for (t, want) in naive_gae(&r, &v, boot, gamma, lambda).iter().enumerate() {
            worst = worst.max((adv[t] - want).abs());
            ensure(ret[t] == adv[t] + v[t], || {
                "returns differ from advantages + values".into()
            })?;
        }
    }
    ensure(worst < 1e-12, || {
        format!("GAE deviates from the double loop by {worst:e}")
    })?;
    Ok(format!(
        "1000 populations, 400 offer sequences, GAE max error {worst:.1e}"
    ))
}

fn gradient_check() -> Check {
    let net_cfg = NetConfig {
        height: 3,
        width: 4,
        conv_channels: 3,
        conv_kernels: vec![3, 3, 1],
        hidden: 5,
        hidden_layers: 2,
        ..Default::default()
    };
    let ppo = PpoConfig {
        clip: 0.2,
        value_coef: 0.7,
        entropy_coef: 0.05,
        ..Default::default()
    };
    let mut net = PolicyNet::new(net_cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in net.params_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    let n = 12;
    let mut batch = Batch::default();
    let mut cache = kitchen_ued::nn::Cache::default();
    for i in 0..n {
        let input: Vec<f64> = (0..net.input_len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        net.forward_cached(&input, &mut cache);
        let logp = kitchen_ued::nn::log_softmax(&cache.logits);
        let a = rng.gen_range(0..6);
        // Ratios of 0.5, 1.0 and 1.6: outside, inside and outside the clip band.
        let shift = [0.5f64.ln(), 0.0, 1.6f64.ln()][i % 3];
        batch.inputs.push(input);
        batch.actions.push(a);
        batch.old_log_probs.push(logp[a] - shift);
        batch.advantages.push(if i % 2 == 0 { 1.3 } else { -0.8 });
        batch.returns.push(rng.gen_range(-2.0..2.0));
    }
    let idx: Vec<usize> = (0..n).collect();
    let (_, analytic) = loss_and_grad(&net, &batch, &idx, &ppo);
    let delta = 1e-5;
    let mut numeric = vec![0.0; analytic.len()];
    for j in 0..analytic.len() {
        let orig = net.params()[j];
        net.params_mut()[j] = orig + delta;
        let up = loss_and_grad(&net, &batch, &idx, &ppo).0.total;
        net.params_mut()[j] = orig - delta;
        let down = loss_and_grad(&net, &batch, &idx, &ppo).0.total;
        net.params_mut()[j] = orig;
        numeric[j] = (up - down) / (2.0 * delta);
    }
    let diff = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let rel = diff / norm(&analytic).max(norm(&numeric));
    ensure(rel < 1e-4, || format!("relative gradient error {rel:e}"))?;
    Ok(format!(
        "{} parameters, relative error {rel:.1e}",
        analytic.len()
    ))
}

fn reachable(layout: &Layout, start: Pos) -> Vec<Pos> {
    let mut seen = vec![start];
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        let steps = [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)];
        for (dx, dy) in steps {
            let (x, y) = (p.x as i64 + dx, p.y as i64 + dy);
            if x < 0 || y < 0 || x >= layout.width() as i64 || y >= layout.height() as i64 {
                continue;
            }
            let q = Pos::new(x as usize, y as usize);
            if layout.tile(q) == Tile::Floor && !seen.contains(&q) {
                seen.push(q);
                queue.push_back(q);
            }
        }
    }
    seen
}

fn bfs_solvable(layout: &Layout) -> bool {
    layout.starts().iter().any(|s| {
        let cells = reachable(layout, *s);
        [
            Tile::OnionDispenser,
            Tile::Pot,
            Tile::DishDispenser,
            Tile::Serving,
        ]
        .iter()
        .all(|kind| {
            layout
                .positions_of(*kind)
                .any(|b| cells.iter().any(|c| c.manhattan(b) == 1))
        })
    })
}

fn layout_generation() -> Check {
    let cfg = GeneratorConfig {
        count: 200,
        seed: 42,
        ..Default::default()
    };
    let report = generate(&cfg).map_err(|e| e.to_string())?;
    let layouts = report.set.layouts();
    ensure(layouts.len() == 200, || {
        format!("generated {} of 200", layouts.len())
    })?;
    for l in layouts {
        ensure(bfs_solvable(l), || {
            format!("{} is not solvable:\n{}", l.id(), l.to_text())
        })?;
        ensure(l.floor_count() >= 14, || {
            format!("{} has {} floor cells", l.id(), l.floor_count())
        })?;
        let blocks = l
            .tiles()
            .iter()
            .filter(|t| !matches!(t, Tile::Floor | Tile::Wall))
            .count();
        ensure((6..=9).contains(&blocks), || {
            format!("{} has {blocks} blocks", l.id())
        })?;
    }
    let mut min_dist = usize::MAX;
    for i in 0..layouts.len() {
        for j in i + 1..layouts.len() {
            let d = layouts[i]
                .tiles()
                .iter()
                .zip(layouts[j].tiles())
                .filter(|(a, b)| a != b)
                .count();
            min_dist = min_dist.min(d);
        }
    }
    ensure(min_dist >= cfg.dedup_hamming_min, || {
        format!("minimum pairwise Hamming distance {min_dist}")
    })?;
    Ok(format!(
        "200 layouts, {} attempts, min Hamming {min_dist}",
        report.attempts
    ))
}

pub const FIXTURE: &str = "XXPXXXX\nO1    X\nX     D\nX    2X\nXXXSXXX\n";

/// Hand-simulated script: seat 0 fetches three onions into the pot; seat 1
/// fetches a dish, waits at the pot, plates and serves.
pub fn golden_script() -> Vec<[Action; 2]> {
    use Action::*;
    let mut s0 = vec![
        Left, Interact, Right, Up, Interact, Left, Interact, Right, Up, Interact, Left, Interact,
        Right, Up, Interact, Down, Left,
    ];
    let mut s1 = vec![Up, Right, Interact];
    s1.extend([Stay; 12]);
    s1.extend([Left, Left, Left, Up, Up]);
    s1.extend([Stay; 14]);
    s1.extend([Interact, Down, Right, Down, Down, Interact]);
    s0.resize(400, Stay);
    s1.resize(400, Stay);
    s0.into_iter().zip(s1).map(|(a, b)| [a, b]).collect()
}

/// Steps (1-based) with nonzero reward and the reward earned there.
pub const GOLDEN_LEDGER: [(u32, f64); 8] = [
    (2, 3.0),
    (5, 3.0),
    (7, 3.0),
    (10, 3.0),
    (12, 3.0),
    (15, 3.0),
    (35, 5.0),
    (40, 20.0),
];

fn environment_golden() -> Check {
    let k = Kitchen::new(Layout::parse(FIXTURE).unwrap(), EnvConfig::default()).unwrap();
    let mut s = k.reset();
    let mut ledger = Vec::new();
    let mut total = 0.0;
    for actions in golden_script() {
        let out = k.step(&s, actions).map_err(|e| e.to_string())?;
        if out.reward != 0.0 {
            ledger.push((out.state.t, out.reward));
        }
        total += out.reward;
        s = out.state;
        if out.done {
            break;
        }
    }
    ensure(ledger == GOLDEN_LEDGER, || format!("ledger {ledger:?}"))?;
    ensure(total == 43.0 && s.t == 400, || {
        format!("total {total} at t={}", s.t)
    })?;
    ensure(s.players.iter().all(|p| p.held == Held::Nothing), || {
        "players still hold items".into()
    })?;
    Ok(format!("{} reward events, total {total}", ledger.len()))
}

fn desk_training() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = RunConfig::desk(DESK_ITERATIONS, 2024);
    let c = &config.curriculum;
    ensure(
        (c.buffer_size, c.episodes_per_iter, c.population_capacity) == (16, 32, 3),
        || "desk profile drifted".into(),
    )?;
    let a = run_training(&config, &dir.path().join("a")).map_err(|e| e.to_string())?;
    run_training(&config, &dir.path().join("b")).map_err(|e| e.to_string())?;
    let read =
        |run: &str, f: &str| std::fs::read(dir.path().join(run).join(f)).map_err(|e| e.to_string());
    let (ma, mb) = (read("a", "metrics.jsonl")?, read("b", "metrics.jsonl")?);
    ensure(ma == mb, || "metrics differ between identical runs".into())?;

    let records: Vec<serde_json::Value> = String::from_utf8_lossy(&ma)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let replays = records.iter().filter(|r| r["branch"] == "replay").count();
    ensure(a.ppo_updates as usize == replays, || {
        format!("{} updates vs {replays} replay episodes", a.ppo_updates)
    })?;
    ensure(
        records
            .iter()
            .all(|r| (r["branch"] == "replay") == (r["updated"] == true)),
        || "update flag disagrees with branch".into(),
    )?;

    let scores: Vec<f64> = records.iter().map(|r| r["S"].as_f64().unwrap()).collect();
    let q = scores.len() / 4;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (first, last) = (mean(&scores[..q]), mean(&scores[scores.len() - q..]));
    let eval: EvalReport =
        serde_json::from_slice(&read("a", "eval.json")?).map_err(|e| e.to_string())?;
    let ratio = eval.ego_mean / eval.random_mean;
    let detail = format!(
        "{} episodes, {replays} updates, S quartiles {first:.4} -> {last:.4}, held-out ego {:.1} vs random {:.1} ({ratio:.2}x)",
        scores.len(),
        eval.ego_mean,
        eval.random_mean
    );
    let clauses = [
        ("last-quartile S > first-quartile S", last > first),
        ("held-out ego >= 2x random", ratio >= 2.0),
    ];
    let failed: Vec<&str> = clauses.iter().filter(|c| !c.1).map(|c| c.0).collect();
    ensure(failed.is_empty(), || {
        format!("{detail}; failed: {}", failed.join(", "))
    })?;
    Ok(detail)
}

fn evaluation_math() -> Check {
    ensure(
        min_max_normalize(&[10.0, 30.0, 20.0]) == [0.0, 1.0, 0.5],
        || "slice [10,30,20]".into(),
    )?;
    ensure(min_max_normalize(&[7.0, 7.0, 7.0]) == [0.0; 3], || {
        "constant slice".into()
    })?;
    ensure(
        min_max_normalize(&[0.0, 0.25, 1.0]) == [0.0, 0.25, 1.0],
        || "normalised slice".into(),
    )?;
    ensure(
        min_max_normalize(&[-4.0, 6.0, 1.0]) == [0.0, 1.0, 0.5],
        || "negative slice".into(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let mu = rng.gen_range(-100.0..100.0);
        let sigma = rng.gen_range(0.0..30.0);
        let r = if rng.gen_bool(0.2) {
            mu + sigma * [-1.5, -0.5, 0.5, 1.5][rng.gen_range(0..4)]
        } else {
            rng.gen_range(-200.0..200.0)
        };
        let rows = [
            (DifficultyLabel::VeryEasy, r > mu + 1.5 * sigma),
            (
                DifficultyLabel::Easy,
                mu + 0.5 * sigma < r && r <= mu + 1.5 * sigma,
            ),
            (
                DifficultyLabel::Medium,
                mu - 0.5 * sigma < r && r <= mu + 0.5 * sigma,
            ),
            (
                DifficultyLabel::Hard,
                mu - 1.5 * sigma < r && r <= mu - 0.5 * sigma,
            ),
            (DifficultyLabel::VeryHard, r <= mu - 1.5 * sigma),
        ];
        let hits: Vec<DifficultyLabel> = rows.iter().filter(|(_, c)| *c).map(|(l, _)| *l).collect();
        ensure(hits.len() == 1, || {
            format!("r={r}, mu={mu}, sigma={sigma}: {} labels", hits.len())
        })?;
        ensure(DifficultyLabel::classify(r, mu, sigma) == hits[0], || {
            format!("r={r}, mu={mu}, sigma={sigma}")
        })?;
    }
    ensure(
        classify_difficulty(&[1.0, 2.0, 3.0]).unwrap().len() == 3,
        || "classify length".into(),
    )?;

    let a = [12.1, 14.3, 11.8, 15.2, 13.9, 12.7, 16.1, 14.8, 13.3, 12.9];
    let b = [11.4, 13.9, 12.0, 13.8, 13.1, 12.2, 14.9, 14.1, 13.5, 12.0];
    let t = paired_t_test(&a, &b).map_err(|e| e.to_string())?;
    let (t_ref, p_ref) = (3.737_985_600_420_359_3, 0.004_639_897_247_658_005);
    ensure(
        (t.t - t_ref).abs() < 1e-9 && (t.p - p_ref).abs() < 1e-9,
        || format!("t={} p={}", t.t, t.p),
    )?;
    Ok(format!("t={:.10} p={:.10}", t.t, t.p))
}

struct Criterion {
    number: usize,
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion {
            number: 1,
            name: "replay distributions",
            limit: Duration::from_secs(10),
            run: distributions,
        },
        Criterion {
            number: 2,
            name: "selection, retention and GAE oracles",
            limit: Duration::from_secs(30),
            run: oracles,
        },
        Criterion {
            number: 3,
            name: "PPO gradient check",
            limit: Duration::from_secs(60),
            run: gradient_check,
        },
        Criterion {
            number: 4,
            name: "layout generation",
            limit: Duration::from_secs(60),
            run: layout_generation,
        },
        Criterion {
            number: 5,
            name: "environment golden ledger",
            limit: Duration::from_secs(5),
            run: environment_golden,
        },
        Criterion {
            number: 6,
            name: "desk-scale training",
            limit: Duration::from_secs(15 * 60),
            run: desk_training,
        },
        Criterion {
            number: 7,
            name: "evaluation math",
            limit: Duration::from_secs(10),
            run: evaluation_math,
        },
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| c.name.contains(f.as_str()) || c.number.to_string() == *f)
        {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|d| {
            if elapsed <= c.limit {
                Ok(d)
            } else {
                Err(format!("{d}; over the {:?} limit", c.limit))
            }
        });
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "[{tag}] {}. {} ({:.2}s / {}s): {detail}",
            c.number,
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
        failed += usize::from(result.is_err());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
