//! Zero-shot evaluation: cross-play, proxy evaluation, normalisation,
//! difficulty labels and paired t-tests.

pub mod crossplay;
pub mod stats;

pub use crossplay::{
    cross_play, evaluate_vs_proxy, write_results_csv, CrossPlayMatrix, EpisodeRunner,
    KitchenRunner, LayoutResult, NamedPolicy,
};
pub use stats::{classify_difficulty, min_max_normalize, paired_t_test, DifficultyLabel, TTest};
