//! Trains a policy against targets moving on a circle.
//!
//! cargo run --release --example train_circle -- [episodes] [seed] [out_dir]

use std::path::PathBuf;

use dubins_intercept::agent::TargetKind;
use dubins_intercept::harness::{cmd_train, RunConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = RunConfig {
        target_kind: TargetKind::Circle,
        ..RunConfig::default()
    };
    cfg.hyperparams.episodes = args.first().map_or(300, |s| s.parse().expect("episodes"));
    cfg.seed = args.get(1).map_or(1, |s| s.parse().expect("seed"));
    cfg.out_dir = args.get(2).map_or_else(|| PathBuf::from("runs/circle"), PathBuf::from);

    let summary = cmd_train(&cfg, &mut std::io::stdout()).expect("training failed");
    let hits = summary.metrics.iter().filter(|m| m.intercepted).count();
    println!(
        "{hits}/{} training episodes intercepted; best rolling mean {:.3} at episode {}",
        summary.metrics.len(),
        summary.best_rolling_mean,
        summary.best_episode
    );
}
