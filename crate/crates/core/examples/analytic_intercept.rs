//! Time-optimal interception of the two reference line scenarios and a
//! circling target, with the control schedules that realize them.

use dubins_intercept::baseline::{free_heading_path, intercept_time, schedule_rollout, InterceptConfig};
use dubins_intercept::env::{CarState, TargetTrajectory};
use dubins_intercept::harness::{reference_line_scenario, second_line_scenario};

fn main() {
    let start = CarState::start();
    let (len, path) = free_heading_path(start, [2.0, 1.0]);
    println!("shortest path to (2, 1): {len:.6}");
    for s in &path.segments {
        println!("  u={:+.0} for {:.6}", s.u, s.duration);
    }

    let circle = TargetTrajectory::circle(1.0, 1.0, 0.0, 1.5, 1.0).unwrap();
    let cfg = InterceptConfig::default();
    for (name, traj) in [
        ("scenario 1", reference_line_scenario()),
        ("scenario 2", second_line_scenario()),
        ("circle", circle),
    ] {
        match intercept_time(start, &traj, &cfg) {
            Ok(hit) => {
                let rows = schedule_rollout(start, &hit.schedule, &traj, 0.1).unwrap();
                println!(
                    "{name}: T={:.6} at ({:.3}, {:.3}), miss {:.1e}",
                    hit.time,
                    hit.point[0],
                    hit.point[1],
                    rows.last().unwrap().l
                );
                for s in &hit.schedule.segments {
                    println!("  u={:+.0} for {:.6}", s.u, s.duration);
                }
            }
            Err(e) => println!("{name}: {e}"),
        }
    }
}
