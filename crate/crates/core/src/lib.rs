//! Return-based curriculum design for zero-shot coordination in a
//! two-player cooperative kitchen game.
//!
//! The crate contains the kitchen simulator ([`env`]), procedural layouts
//! ([`layout`], [`layoutgen`]), an actor-critic network trained with PPO
//! ([`nn`], [`ppo`]), the co-player/environment curriculum
//! ([`curriculum`]), evaluation tools ([`eval`]) and the live play session
//! model used by the web service ([`session`]).

pub mod agent;
pub mod checkpoint;
pub mod curriculum;
pub mod env;
pub mod error;
pub mod eval;
pub mod layout;
pub mod layoutgen;
pub mod nn;
pub mod obs;
pub mod ppo;
pub mod proxy;
pub mod rng;
pub mod rollout;
pub mod run;
pub mod session;

pub use error::{Error, Result};
