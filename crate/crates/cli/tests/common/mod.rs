#![allow(dead_code)]

use std::path::{Path, PathBuf};

use kitchen_ued::checkpoint::Checkpoint;
use kitchen_ued::layoutgen::{generate, GeneratorConfig};
use kitchen_ued::nn::{NetConfig, PolicyNet};
use kitchen_ued::run::{write_layouts, RunConfig};

pub fn small_net() -> NetConfig {
    NetConfig {
        conv_channels: 4,
        hidden: 8,
        hidden_layers: 1,
        ..Default::default()
    }
}

pub fn write_checkpoint(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let net = PolicyNet::new(small_net(), seed).unwrap();
    let path = dir.join(format!("{name}.ckpt"));
    Checkpoint::from_net(name, 1, &net, None)
        .save(&path)
        .unwrap();
    path
}

pub fn write_layout_dir(dir: &Path, count: usize) -> Vec<String> {
    let set = generate(&GeneratorConfig {
        count,
        seed: 77,
        ..Default::default()
    })
    .unwrap()
    .set;
    write_layouts(dir, set.layouts()).unwrap();
    set.ids().map(str::to_string).collect()
}

pub fn tiny_run_config(seed: u64) -> RunConfig {
    let mut c = RunConfig::desk(2, seed);
    if let kitchen_ued::run::LayoutSource::Generate(g) = &mut c.layouts {
        g.count = 6;
    }
    c.curriculum.episodes_per_iter = 3;
    c.curriculum.buffer_size = 3;
    c.curriculum.population_capacity = 2;
    c.net = small_net();
    c.eval.held_out.count = 2;
    c.eval.pool_factor = 2;
    c.eval.episodes = 1;
    c
}
