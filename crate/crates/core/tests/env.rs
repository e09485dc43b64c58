mod common;

use std::f64::consts::{PI, TAU};

use common::oracle::arc_pose;
use dubins_intercept::env::{
    car_step, distance, reward, wrap_angle, CarState, Episode, EpisodeConfig, Termination, TargetTrajectory,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn heading_gap(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

fn random_pose(rng: &mut impl Rng) -> CarState {
    CarState::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-PI..PI))
}

#[test]
fn chord_matches_the_arc() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let p = random_pose(&mut rng);
        let u = rng.random_range(-1.0..=1.0);
        let dt = rng.random_range(1e-3..2.0);
        let q = car_step(p, u, dt).unwrap();
        let turn = u * dt;
        let chord = if turn == 0.0 { dt } else { 2.0 * (turn / 2.0).sin().abs() / u.abs() };
        assert!((distance(p.position(), q.position()) - chord).abs() < 1e-12, "u={u} dt={dt}");
        assert!(heading_gap(q.phi, p.phi + turn) < 1e-12);
        if u.abs() > 0.05 {
            let want = arc_pose(p, u, dt);
            assert!(distance(q.position(), [want.x, want.y]) < 1e-12, "u={u} dt={dt}");
        }
    }
}

#[test]
fn steps_compose() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let p = random_pose(&mut rng);
        let u = rng.random_range(-1.0..=1.0);
        let (a, b) = (rng.random_range(1e-3..1.0), rng.random_range(1e-3..1.0));
        let two = car_step(car_step(p, u, a).unwrap(), u, b).unwrap();
        let one = car_step(p, u, a + b).unwrap();
        assert!(distance(one.position(), two.position()) < 1e-12, "u={u} {a}+{b}");
        assert!(heading_gap(one.phi, two.phi) < 1e-12);
    }
}

#[test]
fn full_turn_returns_to_start() {
    for u in [1.0, -1.0] {
        for p in [CarState::start(), CarState::new(2.0, -3.0, 0.7), CarState::new(0.0, 0.0, PI)] {
            let single = car_step(p, u, TAU).unwrap();
            let mut stepped = p;
            for _ in 0..1000 {
                stepped = car_step(stepped, u, TAU / 1000.0).unwrap();
            }
            for q in [single, stepped] {
                assert!(distance(p.position(), q.position()) < 1e-9);
                assert!(heading_gap(p.phi, q.phi) < 1e-9);
            }
        }
    }
}

#[test]
fn bad_controls_are_rejected() {
    let p = CarState::start();
    assert!(car_step(p, 1.0 + 1e-12, 0.1).is_err());
    assert!(car_step(p, f64::NAN, 0.1).is_err());
    assert!(car_step(p, 0.5, 0.0).is_err());
}

#[test]
fn circle_target_closes_after_one_period() {
    let traj = TargetTrajectory::circle(1.3, 0.8, 0.4, -1.0, 2.0).unwrap();
    let period = TAU / 0.8;
    let a = traj.position(0.3);
    let b = traj.position(0.3 + period);
    assert!(distance(a, b) < 1e-12);
    assert!((distance(a, [-1.0, 2.0]) - 1.3).abs() < 1e-12);
    assert!((traj.speed() - 1.3 * 0.8).abs() < 1e-12);
}

#[test]
fn interception_boundary_counts() {
    let cfg = EpisodeConfig::default();
    assert!(cfg.is_intercepted([0.0, 0.0], [0.2, 0.0]));
    assert!(!cfg.is_intercepted([0.0, 0.0], [0.2 + 1e-12, 0.0]));
    let ep = Episode::new(CarState::start(), TargetTrajectory::stationary(0.1, 0.1), cfg).unwrap();
    assert_eq!(ep.termination, Some(Termination::Intercepted));
}

#[test]
fn episode_stops_at_the_budget() {
    let cfg = EpisodeConfig {
        max_steps: 7,
        ..Default::default()
    };
    let mut ep = Episode::new(CarState::start(), TargetTrajectory::stationary(10.0, 0.0), cfg).unwrap();
    while !ep.is_done() {
        ep.step(-0.3).unwrap();
    }
    assert_eq!(ep.steps, 7);
    assert_eq!(ep.termination, Some(Termination::Timeout));
    assert!((ep.t - 0.7).abs() < 1e-12);
}

#[test]
fn reward_values() {
    assert!((reward(0.1) - (-0.01)).abs() < 1e-15);
    assert!((reward(1.0) - (-2.0)).abs() < 1e-15);
    assert_eq!(reward(0.0), reward(1e-6));
    assert!((reward(0.0) - 5.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn wrapped_heading_is_half_open(a in -100.0..100.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!(((a - w) / TAU - ((a - w) / TAU).round()).abs() < 1e-9);
    }

    #[test]
    fn car_moves_at_unit_speed(u in -1.0..=1.0f64, dt in 1e-4..0.5f64, phi in -PI..PI) {
        let p = CarState::new(0.0, 0.0, phi);
        let q = car_step(p, u, dt).unwrap();
        // the chord never exceeds the arc and matches it for straight motion
        let d = distance(p.position(), q.position());
        prop_assert!(d <= dt + 1e-15);
        if u == 0.0 {
            prop_assert!((d - dt).abs() < 1e-15);
        }
        prop_assert!(q.phi > -PI && q.phi <= PI);
    }

    #[test]
    fn reward_decreases_with_distance(a in 1e-6..20.0f64, b in 1e-6..20.0f64) {
        prop_assume!(a < b);
        prop_assert!(reward(a) > reward(b));
    }
}
