//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes and returns plain values or JSON strings so the page
//! needs no generated glue beyond what `wasm-bindgen` emits.

use std::sync::Arc;

use kitchen_ued::curriculum::{EnvBuffer, Scoring};
use kitchen_ued::env::{Action, EnvConfig, Kitchen};
use kitchen_ued::layout::Layout;
use kitchen_ued::layoutgen::{generate, GeneratorConfig};
use kitchen_ued::proxy::ProxyAgent;
use kitchen_ued::session::{
    ClientMessage, PlaySession, ServerMessage, SessionMode, SessionSpec, StateFrame,
};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GeneratedLayout {
    pub id: String,
    pub text: String,
    pub floor: usize,
}

/// Generates `count` layouts from `seed` with the default block and floor
/// limits. Returns a JSON array of `{id, text, floor}`.
pub fn generate_layouts_json(count: usize, seed: u64, dedup: usize) -> kitchen_ued::Result<String> {
    let report = generate(&GeneratorConfig {
        count,
        seed,
        dedup_hamming_min: dedup,
        ..Default::default()
    })?;
    let out: Vec<GeneratedLayout> = report
        .set
        .layouts()
        .iter()
        .map(|l| GeneratedLayout {
            id: l.id().to_string(),
            text: l.to_text(),
            floor: l.floor_count(),
        })
        .collect();
    Ok(serde_json::to_string(&out).expect("layouts serialize"))
}

#[wasm_bindgen(js_name = generateLayouts)]
pub fn generate_layouts(count: usize, seed: u64, dedup: usize) -> Result<String, JsError> {
    generate_layouts_json(count, seed, dedup).map_err(js_err)
}

#[derive(Debug, Deserialize)]
pub struct ExplorerInput {
    pub scores: Vec<f64>,
    pub last_sampled: Vec<u64>,
    pub global: u64,
    pub rho: f64,
    pub beta: f64,
    #[serde(default)]
    pub scoring: Scoring,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ExplorerOutput {
    pub score: Vec<f64>,
    pub staleness: Vec<f64>,
    pub replay: Vec<f64>,
}

/// Builds a buffer from parallel score and last-sampled arrays and returns
/// the rank-based, staleness and mixed replay distributions.
pub fn replay_distributions(input: &ExplorerInput) -> kitchen_ued::Result<ExplorerOutput> {
    if input.scores.len() != input.last_sampled.len() {
        return Err(kitchen_ued::Error::DimensionMismatch(format!(
            "{} scores but {} timestamps",
            input.scores.len(),
            input.last_sampled.len()
        )));
    }
    let mut buffer = EnvBuffer::new(input.scores.len().max(1), input.scoring);
    for (i, (s, t)) in input.scores.iter().zip(&input.last_sampled).enumerate() {
        buffer.update(&format!("{i:04}"), *s, *t)?;
    }
    Ok(ExplorerOutput {
        score: buffer.score_distribution(input.beta)?,
        staleness: buffer.staleness_distribution(input.global)?,
        replay: buffer.replay_distribution(input.rho, input.beta, input.global)?,
    })
}

#[wasm_bindgen(js_name = replayDistributions)]
pub fn replay_distributions_json(input: &str) -> Result<String, JsError> {
    let input: ExplorerInput = serde_json::from_str(input).map_err(js_err)?;
    let out = replay_distributions(&input).map_err(js_err)?;
    Ok(serde_json::to_string(&out).expect("distributions serialize"))
}

/// One stepped game against the scripted partner. The human controls
/// `seat`; the partner moves once per human action.
#[wasm_bindgen]
pub struct KitchenGame {
    session: PlaySession,
}

impl KitchenGame {
    pub fn create(layout_text: &str, seat: usize, seed: u64) -> kitchen_ued::Result<Self> {
        let kitchen = Kitchen::new(Layout::parse(layout_text)?, EnvConfig::default())?;
        let spec = SessionSpec {
            session_id: "browser".into(),
            policy_id: "proxy".into(),
            human_seat: seat,
            mode: SessionMode::Stepped,
            tick_ms: 0,
            seed,
        };
        let session = PlaySession::new(spec, kitchen, Arc::new(ProxyAgent::default()), None)?;
        Ok(KitchenGame { session })
    }

    pub fn apply(&mut self, action: Action) -> kitchen_ued::Result<StateFrame> {
        let out = self.session.handle(ClientMessage::Action { action })?;
        match out.into_iter().next() {
            Some(ServerMessage::State(frame)) => Ok(frame),
            _ => Ok(self.session.frame()),
        }
    }

    pub fn current(&self) -> StateFrame {
        self.session.frame()
    }
}

#[wasm_bindgen]
impl KitchenGame {
    #[wasm_bindgen(constructor)]
    pub fn new(layout_text: &str, seat: usize, seed: u64) -> Result<KitchenGame, JsError> {
        Self::create(layout_text, seat, seed).map_err(js_err)
    }

    /// Applies an action by name (`UP`, `DOWN`, `LEFT`, `RIGHT`, `STAY`,
    /// `INTERACT`) and returns the new state frame as JSON.
    pub fn step(&mut self, action: &str) -> Result<String, JsError> {
        let action: Action =
            serde_json::from_value(serde_json::Value::String(action.to_uppercase()))
                .map_err(js_err)?;
        let frame = self.apply(action).map_err(js_err)?;
        Ok(serde_json::to_string(&frame).expect("frame serializes"))
    }

    pub fn frame(&self) -> String {
        serde_json::to_string(&self.current()).expect("frame serializes")
    }
}
