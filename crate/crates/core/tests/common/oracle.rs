//! Brute-force shortest paths for the unit-radius car.
//!
//! Paths are "turn then go straight" or "turn then turn the other way". The
//! first turn is scanned on a grid over its duration and sign; the second
//! segment is located by a sign change of a geometric residual, refined by
//! bisection. Poses along arcs come from the closed-form integral of the
//! kinematics, not from the library.

use std::f64::consts::TAU;

use dubins_intercept::env::{CarState, TargetTrajectory};

const GRID: usize = 1024;

/// Pose after turning with `sigma` = ±1 for `s`.
pub fn arc_pose(p: CarState, sigma: f64, s: f64) -> CarState {
    let phi = p.phi + sigma * s;
    CarState {
        x: p.x + (phi.sin() - p.phi.sin()) / sigma,
        y: p.y - (phi.cos() - p.phi.cos()) / sigma,
        phi,
    }
}

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Every root of `f` on `[0, 2π]` found by a grid scan plus bisection.
fn roots(f: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let h = TAU / GRID as f64;
    let mut out = Vec::new();
    let mut prev = f(0.0);
    if prev == 0.0 {
        out.push(0.0);
    }
    for k in 1..=GRID {
        let s = k as f64 * h;
        let cur = f(s);
        if cur == 0.0 {
            out.push(s);
        } else if prev != 0.0 && (prev > 0.0) != (cur > 0.0) {
            out.push(bisect(f, s - h, s));
        }
        prev = cur;
    }
    out
}

/// Shortest "arc then line" or "arc then opposite arc" length to `point`.
pub fn shortest_length(pose: CarState, point: [f64; 2]) -> f64 {
    let (px, py) = (point[0], point[1]);
    if px == pose.x && py == pose.y {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for sigma in [1.0, -1.0] {
        // Arc then straight: the point must lie on the heading ray.
        let lateral = |s: f64| {
            let q = arc_pose(pose, sigma, s);
            q.phi.cos() * (py - q.y) - q.phi.sin() * (px - q.x)
        };
        for s in roots(&lateral) {
            let q = arc_pose(pose, sigma, s);
            let ahead = q.phi.cos() * (px - q.x) + q.phi.sin() * (py - q.y);
            if ahead >= -1e-9 {
                best = best.min(s + (px - q.x).hypot(py - q.y));
            }
        }
        // Arc then opposite arc: the point must lie on the second circle.
        let centre = |s: f64| {
            let q = arc_pose(pose, sigma, s);
            (q.x + sigma * q.phi.sin(), q.y - sigma * q.phi.cos(), q)
        };
        let on_circle = |s: f64| {
            let (cx, cy, _) = centre(s);
            (px - cx).hypot(py - cy) - 1.0
        };
        for s in roots(&on_circle) {
            let (cx, cy, q) = centre(s);
            let from = (q.y - cy).atan2(q.x - cx);
            let to = (py - cy).atan2(px - cx);
            let sweep = (-sigma * (to - from)).rem_euclid(TAU);
            let end = arc_pose(q, -sigma, sweep);
            if (end.x - px).hypot(end.y - py) < 1e-6 {
                best = best.min(s + sweep);
            }
        }
    }
    best
}

/// Whether some turn-straight-turn path reaches `point` in exactly
/// `duration`. The first turn is gridded; the straight run then follows from
/// the point lying on the final turning circle (a quadratic).
pub fn exactly_reachable(pose: CarState, point: [f64; 2], duration: f64) -> bool {
    const N: usize = 2048;
    let total = |sigma1: f64, sigma3: f64, root: f64, s1: f64| -> Option<f64> {
        let q = arc_pose(pose, sigma1, s1);
        let (hx, hy) = (q.phi.cos(), q.phi.sin());
        let (nx, ny) = (-hy * sigma3, hx * sigma3);
        let (wx, wy) = (point[0] - q.x - nx, point[1] - q.y - ny);
        let wh = wx * hx + wy * hy;
        let disc = wh * wh - (wx * wx + wy * wy) + 1.0;
        if disc < 0.0 {
            return None;
        }
        let a = wh + root * disc.sqrt();
        if a < 0.0 {
            return None;
        }
        let (cx, cy) = (q.x + a * hx + nx, q.y + a * hy + ny);
        let from = (q.y + a * hy - cy).atan2(q.x + a * hx - cx);
        let to = (point[1] - cy).atan2(point[0] - cx);
        Some(s1 + a + (sigma3 * (to - from)).rem_euclid(TAU))
    };
    let h = TAU / N as f64;
    for sigma1 in [1.0, -1.0] {
        for sigma3 in [1.0, -1.0] {
            for root in [1.0, -1.0] {
                let f = |s1: f64| total(sigma1, sigma3, root, s1).map(|l| l - duration);
                let g: Vec<Option<f64>> = (0..=N).map(|k| f(k as f64 * h)).collect();
                for k in 1..=N {
                    if g[k - 1].is_some() != g[k].is_some() {
                        // Domain edge: bisect to it and test the value there.
                        let (inside, outside) = if g[k].is_some() { (k, k - 1) } else { (k - 1, k) };
                        let (mut a, mut b) = (inside as f64 * h, outside as f64 * h);
                        for _ in 0..60 {
                            let mid = 0.5 * (a + b);
                            if f(mid).is_some() {
                                a = mid;
                            } else {
                                b = mid;
                            }
                        }
                        let gi = g[inside].unwrap();
                        if gi > 0.0 && f(a).is_some_and(|v| v <= 0.0 && gi - v < 1.0) {
                            return true;
                        }
                        continue;
                    }
                    let (Some(p), Some(c)) = (g[k - 1], g[k]) else { continue };
                    if (p - c).abs() >= 1.0 {
                        continue;
                    }
                    if (p <= 0.0) != (c <= 0.0) {
                        return true;
                    }
                    // A dip below zero between samples: ternary search.
                    if let Some(Some(n)) = g.get(k + 1) {
                        if c <= p && c <= *n && (n - c).abs() < 1.0 {
                            let (mut a, mut b) = ((k - 1) as f64 * h, (k + 1) as f64 * h);
                            for _ in 0..100 {
                                let m1 = a + (b - a) / 3.0;
                                let m2 = b - (b - a) / 3.0;
                                let v1 = f(m1).unwrap_or(f64::INFINITY);
                                let v2 = f(m2).unwrap_or(f64::INFINITY);
                                if v1.min(v2) <= 0.0 {
                                    return true;
                                }
                                if v1 < v2 {
                                    b = m2;
                                } else {
                                    a = m1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    false
}

/// Smallest `T` with `shortest_length(pose, target(T)) = T`, scanning with
/// `step` and bisecting the first bracket. If the shortest length jumps below
/// `T` instead of crossing it, the first later time with an exact-duration
/// turn-straight-turn path is returned. `None` past `horizon`.
pub fn intercept_time(pose: CarState, traj: &TargetTrajectory, step: f64, horizon: f64) -> Option<f64> {
    let g = |t: f64| shortest_length(pose, traj.position(t)) - t;
    if g(0.0) <= 0.0 {
        return Some(0.0);
    }
    let mut lo = 0.0;
    let mut k = 1;
    let mut hi = loop {
        let t = k as f64 * step;
        if t > horizon {
            return None;
        }
        if g(t) <= 0.0 {
            break t;
        }
        lo = t;
        k += 1;
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if g(hi) > -1e-6 {
        return Some(hi);
    }
    let reachable = |t: f64| exactly_reachable(pose, traj.position(t), t);
    let mut before = hi;
    let mut after = loop {
        let t = before + 5e-3;
        if t > horizon {
            return None;
        }
        if reachable(t) {
            break t;
        }
        before = t;
    };
    for _ in 0..30 {
        let mid = 0.5 * (before + after);
        if reachable(mid) {
            after = mid;
        } else {
            before = mid;
        }
    }
    Some(after)
}
