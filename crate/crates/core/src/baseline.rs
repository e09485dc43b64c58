//! Analytic minimum-time interception for the unit-speed, unit-radius car.
//!
//! With a free heading at the end point, the shortest path from a pose to a
//! point is a maximal turn followed either by a straight run ("arc-line") or by
//! a maximal turn the other way ("arc-arc"). [`free_heading_path`] evaluates
//! all four constructions (left/right first, line/arc second) in closed form
//! and keeps the shortest.
//!
//! Against a moving target the interception time is the first sign change of
//! `g(T) = len(pose, target(T)) − T`, bracketed by a forward scan and refined
//! by bisection. Where `len` is continuous this is the smallest root of `g`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{advance_unchecked, CarState, Point, TargetTrajectory};
use crate::trajectory::TrajectoryRow;

/// Arcs this close to zero or a full turn are treated as no turn at all.
const FULL_TURN_SNAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("no interception found within the {horizon} s horizon")]
    NoInterception { horizon: f64 },
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, BaselineError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSegment {
    /// −1 (right), 0 (straight) or +1 (left).
    pub u: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub segments: Vec<ControlSegment>,
}

impl ControlSchedule {
    fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self {
            segments: pairs
                .iter()
                .filter(|(_, d)| *d > 0.0)
                .map(|&(u, duration)| ControlSegment { u, duration })
                .collect(),
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Pose after following the schedule for `t` (clamped to its duration).
    pub fn pose_at(&self, start: CarState, t: f64) -> CarState {
        let mut pose = start;
        let mut remaining = t.max(0.0);
        for seg in &self.segments {
            if remaining <= 0.0 {
                break;
            }
            let d = seg.duration.min(remaining);
            pose = advance_unchecked(pose, seg.u, d);
            remaining -= d;
        }
        pose
    }

    /// Control active at time `t`; zero once the schedule is over.
    pub fn control_at(&self, t: f64) -> f64 {
        let mut end = 0.0;
        for seg in &self.segments {
            end += seg.duration;
            if t < end {
                return seg.u;
            }
        }
        0.0
    }
}

/// Point expressed in the car frame: `(forward, left)`.
fn to_car_frame(pose: CarState, point: Point) -> (f64, f64) {
    let dx = point[0] - pose.x;
    let dy = point[1] - pose.y;
    let (s, c) = pose.phi.sin_cos();
    (dx * c + dy * s, -dx * s + dy * c)
}

fn snap_turn(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > TAU - FULL_TURN_SNAP || a < FULL_TURN_SNAP {
        0.0
    } else {
        a
    }
}

/// Left arc then tangent line, in the car frame. `None` when the point lies
/// strictly inside the left turning circle.
fn left_line(f: f64, l: f64) -> Option<(f64, f64)> {
    let d2 = f * f + (l - 1.0) * (l - 1.0);
    if d2 < 1.0 {
        return None;
    }
    let straight = (d2 - 1.0).sqrt();
    let radial = (l - 1.0).atan2(f) - straight.atan2(1.0);
    Some((snap_turn(radial + FRAC_PI_2), straight))
}

/// Left arc then right arc through the point, in the car frame. The right
/// circle after a left turn of `β` is centred at `(2 sin β, 1 − 2 cos β)`, which
/// puts the point on it iff `sin(β − γ) = (d² + 3)/(4d)` with `d`, `γ` the polar
/// coordinates of the point about the left centre.
fn left_right(f: f64, l: f64) -> Option<(f64, f64)> {
    let d = f.hypot(l - 1.0);
    if !(1.0..=3.0).contains(&d) {
        return None;
    }
    let k = ((d * d + 3.0) / (4.0 * d)).min(1.0);
    let gamma = (l - 1.0).atan2(f);
    let base = k.asin();
    [base, PI - base]
        .into_iter()
        .map(|offset| {
            let beta = snap_turn(gamma + offset);
            let (sb, cb) = beta.sin_cos();
            let (cx, cy) = (2.0 * sb, 1.0 - 2.0 * cb);
            // Clockwise sweep on the right circle from the junction to the point.
            let junction = cb.atan2(-sb);
            let to = (l - cy).atan2(f - cx);
            (beta, snap_turn(junction - to))
        })
        .min_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)))
}

/// Shortest free-heading path from `pose` to `point` and a schedule realizing
/// it. Coincident points give length zero and an empty schedule.
pub fn free_heading_path(pose: CarState, point: Point) -> (f64, ControlSchedule) {
    let (f, l) = to_car_frame(pose, point);
    if f == 0.0 && l == 0.0 {
        return (0.0, ControlSchedule::default());
    }
    let mut best: Option<(f64, ControlSchedule)> = None;
    let mut consider = |len: f64, pairs: &[(f64, f64)]| {
        if best.as_ref().map_or(true, |(b, _)| len < *b) {
            best = Some((len, ControlSchedule::from_pairs(pairs)));
        }
    };
    // `side` = +1 evaluates left-first constructions; −1 mirrors the frame.
    for side in [1.0, -1.0] {
        if let Some((arc, straight)) = left_line(f, side * l) {
            consider(arc + straight, &[(side, arc), (0.0, straight)]);
        }
        if let Some((first, second)) = left_right(f, side * l) {
            consider(first + second, &[(side, first), (-side, second)]);
        }
    }
    best.expect("a right-first arc-line path always exists for a point left of or on the heading")
}

/// Length only; see [`free_heading_path`].
pub fn free_heading_length(pose: CarState, point: Point) -> f64 {
    free_heading_path(pose, point).0
}

/// Fixed-terminal-heading paths (the six classical three-segment words) from
/// `start` to `goal`, each as `(u, duration)` triples. Words whose closed form
/// does not exist or does not land on `goal` are skipped.
fn fixed_heading_words(start: CarState, goal: CarState) -> Vec<[(f64, f64); 3]> {
    let m = |a: f64| a.rem_euclid(TAU);
    let (dx, dy) = (goal.x - start.x, goal.y - start.y);
    let d = dx.hypot(dy);
    let theta = dy.atan2(dx);
    let (a, b) = (m(start.phi - theta), m(goal.phi - theta));
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let cab = (a - b).cos();
    let mut words = Vec::with_capacity(6);

    let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sa - sb);
    if p2 >= 0.0 {
        let tmp = (cb - ca).atan2(d + sa - sb);
        words.push([(1.0, m(tmp - a)), (0.0, p2.sqrt()), (1.0, m(b - tmp))]);
    }
    let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sb - sa);
    if p2 >= 0.0 {
        let tmp = (ca - cb).atan2(d - sa + sb);
        words.push([(-1.0, m(a - tmp)), (0.0, p2.sqrt()), (-1.0, m(tmp - b))]);
    }
    let p2 = -2.0 + d * d + 2.0 * cab + 2.0 * d * (sa + sb);
    if p2 >= 0.0 {
        let p = p2.sqrt();
        let tmp = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
        words.push([(1.0, m(tmp - a)), (0.0, p), (-1.0, m(tmp - b))]);
    }
    let p2 = -2.0 + d * d + 2.0 * cab - 2.0 * d * (sa + sb);
    if p2 >= 0.0 {
        let p = p2.sqrt();
        let tmp = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
        words.push([(-1.0, m(a - tmp)), (0.0, p), (1.0, m(b - tmp))]);
    }
    let k = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0;
    if k.abs() <= 1.0 {
        let p = m(TAU - k.acos());
        let t = m(a - (ca - cb).atan2(d - sa + sb) + p / 2.0);
        words.push([(-1.0, t), (1.0, p), (-1.0, m(a - b - t + p))]);
    }
    let k = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0;
    if k.abs() <= 1.0 {
        let p = m(TAU - k.acos());
        let t = m(-a - (ca - cb).atan2(d + sa - sb) + p / 2.0);
        words.push([(1.0, t), (-1.0, p), (1.0, m(b - a - t + p))]);
    }

    words.retain(|w| {
        let end = w.iter().fold(start, |q, &(u, dur)| advance_unchecked(q, u, dur));
        (end.x - goal.x).hypot(end.y - goal.y) < 1e-9
    });
    words
}

/// An arc-line-arc path to `point` lasting exactly `duration`, found by
/// sweeping the terminal heading. Each word's length is followed along the
/// sweep; a crossing of `duration` is bisected, local minima are refined and
/// the limits at word edges and arc wraps are checked, so that narrow windows
/// opening between grid headings are not missed.
fn exact_duration_path(pose: CarState, point: Point, duration: f64) -> Option<ControlSchedule> {
    const HEADINGS: usize = 720;
    let word = |signs: [f64; 2], heading: f64| {
        fixed_heading_words(pose, CarState::new(point[0], point[1], heading))
            .into_iter()
            .find(|w| w[1].0 == 0.0 && w[0].0 == signs[0] && w[2].0 == signs[1])
    };
    let gap = |signs: [f64; 2], heading: f64| {
        word(signs, heading).map(|w| (w.iter().map(|s| s.1).sum::<f64>() - duration, w))
    };
    // Bisects a crossing between headings `a` (gap > 0) and `b` (gap ≤ 0).
    let crossing = |signs: [f64; 2], mut a: f64, mut b: f64| {
        let mut best = gap(signs, b)?;
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            let (g, w) = gap(signs, mid)?;
            if g > 0.0 {
                a = mid;
            } else {
                b = mid;
                best = (g, w);
            }
        }
        (best.0.abs() <= 1e-9).then(|| ControlSchedule::from_pairs(&best.1))
    };
    // A sample at heading `h` with gap `g` against the limit at `end` of the
    // same continuous piece.
    let one_sided = |signs: [f64; 2], h: f64, g: f64, end: f64| {
        let e = gap(signs, end)?.0;
        if g > 0.0 && e <= 0.0 {
            crossing(signs, h, end)
        } else if g <= 0.0 && e > 0.0 {
            crossing(signs, end, h)
        } else {
            None
        }
    };
    let heading = |k: usize| -PI + TAU * k as f64 / HEADINGS as f64;
    let all_signs = [[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];
    let mut table = vec![[None; 4]; HEADINGS + 1];
    for (k, row) in table.iter_mut().enumerate() {
        for w in fixed_heading_words(pose, CarState::new(point[0], point[1], heading(k))) {
            if let Some(i) = all_signs.iter().position(|s| w[1].0 == 0.0 && w[0].0 == s[0] && w[2].0 == s[1]) {
                row[i] = Some(w.iter().map(|s| s.1).sum::<f64>() - duration);
            }
        }
    }
    for (i, signs) in all_signs.into_iter().enumerate() {
        let g: Vec<Option<f64>> = table.iter().map(|row| row[i]).collect();
        // Neighbouring samples on one continuous piece of the word's length.
        let linked = |a: usize, b: usize| matches!((g[a], g[b]), (Some(x), Some(y)) if (x - y).abs() < 1.0);
        for k in 1..=HEADINGS {
            if g[k - 1].is_some() != g[k].is_some() {
                // Edge of the word's domain, where the straight segment
                // vanishes and the length has infinite slope.
                let (inside, outside) = if g[k].is_some() { (k, k - 1) } else { (k - 1, k) };
                let (mut a, mut b) = (heading(inside), heading(outside));
                for _ in 0..60 {
                    let mid = 0.5 * (a + b);
                    if gap(signs, mid).is_some() {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                if let Some(found) = one_sided(signs, heading(inside), g[inside].unwrap(), a) {
                    return Some(found);
                }
                continue;
            }
            let (Some(gp), Some(gc)) = (g[k - 1], g[k]) else {
                continue;
            };
            if !linked(k - 1, k) {
                // A terminal arc wrapped through a full turn. The shortest
                // lengths sit right at the jump, so check both one-sided limits.
                let (mut a, mut b) = (heading(k - 1), heading(k));
                for _ in 0..60 {
                    let mid = 0.5 * (a + b);
                    match gap(signs, mid) {
                        Some((v, _)) if (v - gp).abs() < (v - gc).abs() => a = mid,
                        _ => b = mid,
                    }
                }
                let found = one_sided(signs, heading(k - 1), gp, a).or_else(|| one_sided(signs, heading(k), gc, b));
                if found.is_some() {
                    return found;
                }
                continue;
            }
            // heading(HEADINGS) and heading(0) coincide
            let next = if k == HEADINGS { 1 } else { k + 1 };
            let found = if gp > 0.0 && gc <= 0.0 {
                crossing(signs, heading(k - 1), heading(k))
            } else if gp <= 0.0 && gc > 0.0 {
                crossing(signs, heading(k), heading(k - 1))
            } else if gc > 0.0 && linked(k, next) && gc <= gp && gc <= g[next].unwrap() {
                let hi = heading(k) + TAU / HEADINGS as f64;
                refine_minimum(|h| gap(signs, h).map_or(f64::INFINITY, |x| x.0), heading(k - 1), hi)
                    .filter(|&(_, v)| v <= 0.0)
                    .and_then(|(h, _)| crossing(signs, hi, h))
            } else {
                None
            };
            if found.is_some() {
                return found;
            }
        }
    }
    None
}

/// Golden-section search for a minimum of `f` on `[a, b]`; returns
/// `(argmin, min)`.
fn refine_minimum(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> Option<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let v = f(x);
    v.is_finite().then_some((x, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterceptConfig {
    /// Step of the forward bracketing scan.
    pub scan_step: f64,
    /// Longest interception time searched.
    pub horizon: f64,
    /// Target `|g(T)|` for the bisection.
    pub tolerance: f64,
}

impl Default for InterceptConfig {
    fn default() -> Self {
        Self {
            scan_step: 0.05,
            horizon: 200.0,
            tolerance: 1e-9,
        }
    }
}

impl InterceptConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("scan_step", self.scan_step),
            ("horizon", self.horizon),
            ("tolerance", self.tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BaselineError::InvalidParameter {
                    field,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interception {
    pub time: f64,
    pub schedule: ControlSchedule,
    /// Target position at `time`.
    pub point: Point,
    /// Final bisection bracket `[lo, hi]` of the first sign change of `g`,
    /// with `g(lo) > 0 ≥ g(hi)`.
    pub bracket: (f64, f64),
    /// `g(time)`. Negative only for a delayed interception (see
    /// [`intercept_time`]); the schedule then is a longer path lasting exactly
    /// `time`.
    pub residual: f64,
}

/// `g(T) = len(pose, target(T)) − T`.
pub fn interception_gap(pose: CarState, traj: &TargetTrajectory, t: f64) -> f64 {
    free_heading_length(pose, traj.position(t)) - t
}

/// Earliest time at which the car can be exactly at the target.
///
/// The first sign change of `g` is bracketed and bisected. If `g` has a root
/// there, the shortest path is the answer. If instead the shortest length
/// drops discontinuously (the target leaves a region next to the car that
/// needs a long detour), no path has exactly the bracketed duration; the scan
/// then continues in steps of `scan_step / 10` until an arc-line-arc path of
/// exactly the elapsed duration exists, and that time is bisected.
pub fn intercept_time(pose: CarState, traj: &TargetTrajectory, cfg: &InterceptConfig) -> Result<Interception> {
    cfg.validate()?;
    let g = |t: f64| interception_gap(pose, traj, t);
    let shortest = |t: f64, bracket: (f64, f64)| {
        let point = traj.position(t);
        let (len, schedule) = free_heading_path(pose, point);
        Interception {
            time: t,
            schedule,
            point,
            bracket,
            residual: len - t,
        }
    };
    if g(0.0) <= 0.0 {
        return Ok(shortest(0.0, (0.0, 0.0)));
    }
    let mut lo = 0.0;
    let mut k = 1u64;
    let mut hi = loop {
        let t = (k as f64 * cfg.scan_step).min(cfg.horizon);
        if g(t) <= 0.0 {
            break t;
        }
        if t >= cfg.horizon {
            return Err(BaselineError::NoInterception { horizon: cfg.horizon });
        }
        lo = t;
        k += 1;
    };
    // Bisection keeps g(lo) > 0 ≥ g(hi).
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm.abs() <= cfg.tolerance {
            return Ok(shortest(mid, (lo, hi)));
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if g(hi).abs() <= cfg.tolerance {
        return Ok(shortest(hi, (lo, hi)));
    }
    delayed_interception(pose, traj, cfg, (lo, hi))
}

fn delayed_interception(
    pose: CarState,
    traj: &TargetTrajectory,
    cfg: &InterceptConfig,
    bracket: (f64, f64),
) -> Result<Interception> {
    let exact = |t: f64| exact_duration_path(pose, traj.position(t), t);
    let step = cfg.scan_step / 10.0;
    let mut before = bracket.1;
    let mut k = 1u64;
    let (mut after, mut schedule) = loop {
        let t = bracket.1 + k as f64 * step;
        if t > cfg.horizon {
            return Err(BaselineError::NoInterception { horizon: cfg.horizon });
        }
        if let Some(s) = exact(t) {
            break (t, s);
        }
        before = t;
        k += 1;
    };
    while after - before > cfg.tolerance {
        let mid = 0.5 * (before + after);
        if mid <= before || mid >= after {
            break;
        }
        match exact(mid) {
            Some(s) => {
                after = mid;
                schedule = s;
            }
            None => before = mid,
        }
    }
    let point = traj.position(after);
    Ok(Interception {
        time: after,
        schedule,
        point,
        bracket,
        residual: free_heading_length(pose, point) - after,
    })
}

/// Samples the schedule every `dt` (plus its exact end) as trajectory rows
/// against `traj`.
pub fn schedule_rollout(
    pose: CarState,
    schedule: &ControlSchedule,
    traj: &TargetTrajectory,
    dt: f64,
) -> Result<Vec<TrajectoryRow>> {
    if !(dt > 0.0) {
        return Err(BaselineError::InvalidParameter {
            field: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    let total = schedule.total_duration();
    let mut rows = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * dt;
        if t >= total {
            break;
        }
        rows.push(TrajectoryRow::new(
            t,
            schedule.pose_at(pose, t),
            schedule.control_at(t),
            traj.position(t),
        ));
        k += 1;
    }
    rows.push(TrajectoryRow::new(
        total,
        schedule.pose_at(pose, total),
        0.0,
        traj.position(total),
    ));
    Ok(rows)
}
