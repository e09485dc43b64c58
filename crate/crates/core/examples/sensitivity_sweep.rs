//! Success rate of a trained policy as the target speed changes.
//!
//! cargo run --release --example sensitivity_sweep -- <checkpoint> [line|circle] [trials]

use dubins_intercept::agent::TargetKind;
use dubins_intercept::harness::{load_checkpoint, sweep, RunConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(path) = args.first() else {
        eprintln!("usage: sensitivity_sweep <checkpoint> [line|circle] [trials]");
        std::process::exit(2);
    };
    let mut cfg = RunConfig::default();
    if args.get(1).is_some_and(|k| k == "circle") {
        cfg.target_kind = TargetKind::Circle;
    }
    if let Some(n) = args.get(2) {
        cfg.sweep.trials = n.parse().expect("trials");
    }
    let nets = load_checkpoint(path.as_ref()).expect("checkpoint");
    println!("multiplier  value   success  mean T");
    for row in sweep(&nets, &cfg).expect("sweep") {
        println!(
            "{:>10.1}  {:>5.2}  {:>3}/{:<3}  {:.2}",
            row.multiplier, row.value, row.successes, row.trials, row.mean_time
        );
    }
}
