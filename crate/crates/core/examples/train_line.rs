//! Trains a policy against straight-line targets.
//!
//! cargo run --release --example train_line -- [episodes] [seed] [out_dir]

use std::path::PathBuf;

use dubins_intercept::harness::{cmd_train, window_mean, RunConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = RunConfig::default();
    cfg.hyperparams.episodes = args.first().map_or(300, |s| s.parse().expect("episodes"));
    cfg.seed = args.get(1).map_or(1, |s| s.parse().expect("seed"));
    cfg.out_dir = args.get(2).map_or_else(|| PathBuf::from("runs/line"), PathBuf::from);

    let summary = cmd_train(&cfg, &mut std::io::stdout()).expect("training failed");
    let rewards: Vec<f64> = summary.metrics.iter().map(|m| m.mean_reward).collect();
    let w = 50.min(rewards.len());
    println!(
        "first {w}: {:.3}  last {w}: {:.3}  checkpoints in {}",
        window_mean(&rewards, 0, w),
        window_mean(&rewards, rewards.len() - w, rewards.len()),
        cfg.out_dir.display()
    );
}
