//! Puts a trained policy next to the analytic optimum on the two reference
//! line scenarios.
//!
//! cargo run --release --example evaluate_checkpoint -- <checkpoint>

use dubins_intercept::harness::{
    evaluate_scenario, load_checkpoint, reference_line_scenario, second_line_scenario, RunConfig,
};

fn main() {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: evaluate_checkpoint <checkpoint>");
        std::process::exit(2);
    };
    let nets = load_checkpoint(path.as_ref()).expect("checkpoint");
    let cfg = RunConfig::default();
    for (name, scenario) in [("scenario 1", reference_line_scenario()), ("scenario 2", second_line_scenario())] {
        let out = evaluate_scenario(&nets, &cfg, &scenario).expect("evaluation");
        let s = &out.summary;
        let fmt = |t: Option<f64>| t.map_or("-".to_string(), |t| format!("{t:.2}"));
        println!(
            "{name}: T_nn={} (miss {:.3}, {} steps)  T_opt={}",
            fmt(s.t_nn),
            s.miss_nn,
            s.steps,
            fmt(s.t_opt)
        );
    }
}
