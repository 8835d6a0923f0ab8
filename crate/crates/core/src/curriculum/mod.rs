//! Return-based co-player and environment curriculum.

pub mod buffer;
pub mod population;
pub mod scoring;
pub mod trainer;

pub use buffer::{BufferEntry, EnvBuffer, Offer, Scoring};
pub use population::{select_co_player, CoPlayer, Population};
pub use scoring::{positive_value_loss, positive_value_loss_score, score_episode};
pub use trainer::{
    Branch, CurriculumConfig, EpisodeRecord, IterationSummary, TrainConfig, TrainObserver, Trainer,
};
