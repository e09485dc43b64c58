//! Drives the car through a few control sequences and prints the poses.

use std::f64::consts::TAU;

use dubins_intercept::env::{car_step, CarState, Episode, EpisodeConfig, TargetTrajectory};

fn main() {
    let start = CarState::start();
    println!("start            {start:?}");
    for u in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let p = car_step(start, u, 1.0).unwrap();
        println!("u={u:+.1} for 1 s   x={:+.4} y={:+.4} phi={:+.4}", p.x, p.y, p.phi);
    }

    // a full turn at the maximal rate closes the circle
    let mut p = start;
    for _ in 0..100 {
        p = car_step(p, 1.0, TAU / 100.0).unwrap();
    }
    println!("after 2π at u=1  {p:?}");

    // one short episode against a stationary target, steering gently left
    let target = TargetTrajectory::stationary(-1.0, 2.0);
    let mut ep = Episode::new(start, target, EpisodeConfig::default()).unwrap();
    while !ep.is_done() {
        let out = ep.step(0.5).unwrap();
        if ep.steps % 5 == 0 || out.done {
            println!(
                "t={:.1} L={:.3} omega={:+.4} theta={:+.3} r={:+.3}",
                out.t, out.obs.l, out.obs.omega, out.obs.theta, out.reward
            );
        }
    }
    println!("ended with {:?} after {} steps", ep.termination.unwrap(), ep.steps);
}
