//! Dubins car kinematics, target motion, the relative-coordinate observation
//! and the δ-interception episode logic.
//!
//! The pursuer moves at unit speed with turn rate `u ∈ [-1, 1]`:
//!
//! ```text
//! x' = cos φ,  y' = sin φ,  φ' = u
//! ```
//!
//! Controls are held constant over each step, so a step is integrated in
//! closed form (a straight segment or an arc of radius `1/|u|`).

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A planar point `[x, y]`.
pub type Point = [f64; 2];

/// Smallest distance fed to the reward; keeps `log10` finite at contact.
pub const REWARD_DISTANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("control {0} outside the admissible set [-1, 1]")]
    ControlOutOfRange(f64),
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("bearing undefined for coincident points")]
    CoincidentPoints,
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, EnvError>;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Pursuer pose. `phi` is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl CarState {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            phi: wrap_angle(phi),
        }
    }

    /// The fixed start pose used throughout training: origin, heading up.
    pub fn start() -> Self {
        Self::new(0.0, 0.0, PI / 2.0)
    }

    pub fn position(&self) -> Point {
        [self.x, self.y]
    }
}

impl Default for CarState {
    fn default() -> Self {
        Self::start()
    }
}

/// `sin(z) / z`, accurate near zero.
fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// Advances the car for `dt` under constant control `u`.
///
/// The chord of the travelled arc has length `dt·sinc(u·dt/2)` and points
/// along the mid-arc heading, which reduces to a straight segment as `u → 0`.
pub fn car_step(state: CarState, u: f64, dt: f64) -> Result<CarState> {
    if !(u.abs() <= 1.0) {
        return Err(EnvError::ControlOutOfRange(u));
    }
    if !(dt > 0.0) {
        return Err(EnvError::NonPositiveDuration(dt));
    }
    Ok(advance_unchecked(state, u, dt))
}

pub(crate) fn advance_unchecked(state: CarState, u: f64, dt: f64) -> CarState {
    let turn = u * dt;
    let chord = dt * sinc(0.5 * turn);
    let mid = state.phi + 0.5 * turn;
    CarState {
        x: state.x + chord * mid.cos(),
        y: state.y + chord * mid.sin(),
        phi: wrap_angle(state.phi + turn),
    }
}

/// Known target motion: rectilinear at constant velocity or uniform circular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetTrajectory {
    Line {
        vx: f64,
        vy: f64,
        x0: f64,
        y0: f64,
    },
    Circle {
        radius: f64,
        omega: f64,
        phase: f64,
        cx: f64,
        cy: f64,
    },
}

impl TargetTrajectory {
    pub fn line(vx: f64, vy: f64, x0: f64, y0: f64) -> Self {
        TargetTrajectory::Line { vx, vy, x0, y0 }
    }

    pub fn stationary(x: f64, y: f64) -> Self {
        Self::line(0.0, 0.0, x, y)
    }

    pub fn circle(radius: f64, omega: f64, phase: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(EnvError::InvalidParameter {
                field: "radius",
                reason: format!("must be positive, got {radius}"),
            });
        }
        Ok(TargetTrajectory::Circle {
            radius,
            omega,
            phase,
            cx,
            cy,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TargetTrajectory::Circle { radius, .. } if !(radius > 0.0) => {
                Err(EnvError::InvalidParameter {
                    field: "radius",
                    reason: format!("must be positive, got {radius}"),
                })
            }
            _ => Ok(()),
        }
    }

    pub fn position(&self, t: f64) -> Point {
        match *self {
            TargetTrajectory::Line { vx, vy, x0, y0 } => [vx * t + x0, vy * t + y0],
            TargetTrajectory::Circle {
                radius,
                omega,
                phase,
                cx,
                cy,
            } => {
                let a = omega * t + phase;
                [radius * a.cos() + cx, radius * a.sin() + cy]
            }
        }
    }

    pub fn speed(&self) -> f64 {
        match *self {
            TargetTrajectory::Line { vx, vy, .. } => vx.hypot(vy),
            TargetTrajectory::Circle { radius, omega, .. } => omega.abs() * radius,
        }
    }
}

/// Angle of the line of sight from `p` to `e`, in `(-π, π]`.
pub fn bearing(p: Point, e: Point) -> Result<f64> {
    let dx = e[0] - p[0];
    let dy = e[1] - p[1];
    if dx == 0.0 && dy == 0.0 {
        return Err(EnvError::CoincidentPoints);
    }
    Ok(wrap_angle(dy.atan2(dx)))
}

pub fn distance(p: Point, e: Point) -> f64 {
    (e[0] - p[0]).hypot(e[1] - p[1])
}

/// Relative coordinates seen by the networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Pursuer-target distance.
    pub l: f64,
    /// Line-of-sight rotation rate.
    pub omega: f64,
    /// Heading minus line-of-sight angle.
    pub theta: f64,
}

impl Observation {
    pub const DIM: usize = 3;

    pub fn to_array(&self) -> [f64; 3] {
        [self.l, self.omega, self.theta]
    }

    pub fn is_finite(&self) -> bool {
        self.l.is_finite() && self.omega.is_finite() && self.theta.is_finite()
    }
}

/// Observation after a transition from `prev` to `next` lasting `dt`.
pub fn relative_observation(
    prev: (CarState, Point),
    next: (CarState, Point),
    dt: f64,
) -> Result<Observation> {
    if !(dt > 0.0) {
        return Err(EnvError::NonPositiveDuration(dt));
    }
    let (car, target) = next;
    let psi_next = bearing(car.position(), target)?;
    // A coincident previous frame carries no line of sight; treat the rate as zero.
    let psi_prev = bearing(prev.0.position(), prev.1).unwrap_or(psi_next);
    Ok(Observation {
        l: distance(car.position(), target),
        omega: wrap_angle(psi_next - psi_prev) / dt,
        theta: wrap_angle(car.phi - psi_next),
    })
}

/// Observation before any control has been applied.
pub fn initial_observation(car: CarState, traj: &TargetTrajectory) -> Result<Observation> {
    let target = traj.position(0.0);
    let psi = bearing(car.position(), target)?;
    Ok(Observation {
        l: distance(car.position(), target),
        omega: 0.0,
        theta: wrap_angle(car.phi - psi),
    })
}

/// `r(L) = -log10(10 L) - L²` with `L` floored at [`REWARD_DISTANCE_FLOOR`].
pub fn reward(l: f64) -> f64 {
    let l = l.max(REWARD_DISTANCE_FLOOR);
    -(10.0 * l).log10() - l * l
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Interception radius δ.
    pub delta: f64,
    /// Control-hold interval.
    pub dt: f64,
    pub max_steps: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            delta: 0.2,
            dt: 0.1,
            max_steps: 400,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(EnvError::InvalidParameter {
                field: "delta",
                reason: format!("must be positive, got {}", self.delta),
            });
        }
        if !(self.dt > 0.0) {
            return Err(EnvError::InvalidParameter {
                field: "dt",
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if self.max_steps < 1 {
            return Err(EnvError::InvalidParameter {
                field: "max_steps",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// The δ-interception test, boundary included.
    pub fn is_intercepted(&self, p: Point, e: Point) -> bool {
        let dx = p[0] - e[0];
        let dy = p[1] - e[1];
        dx * dx + dy * dy <= self.delta * self.delta
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Intercepted,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: CarState,
    pub target_pos: Point,
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    /// Set whenever `done` is; distinguishes success from budget exhaustion.
    pub termination: Option<Termination>,
    pub t: f64,
}

impl StepOutcome {
    pub fn intercepted(&self) -> bool {
        self.termination == Some(Termination::Intercepted)
    }
}

/// Applies one held control. `steps_taken` counts the steps already spent in
/// the episode, so the budget is exhausted when `steps_taken + 1 == max_steps`.
pub fn episode_step(
    state: CarState,
    traj: &TargetTrajectory,
    t: f64,
    steps_taken: usize,
    u: f64,
    cfg: &EpisodeConfig,
) -> Result<StepOutcome> {
    let next = car_step(state, u, cfg.dt)?;
    let t_next = t + cfg.dt;
    let target_prev = traj.position(t);
    let target_next = traj.position(t_next);
    let obs = relative_observation((state, target_prev), (next, target_next), cfg.dt)?;
    let termination = if cfg.is_intercepted(next.position(), target_next) {
        Some(Termination::Intercepted)
    } else if steps_taken + 1 >= cfg.max_steps {
        Some(Termination::Timeout)
    } else {
        None
    };
    Ok(StepOutcome {
        state: next,
        target_pos: target_next,
        obs,
        reward: reward(obs.l),
        done: termination.is_some(),
        termination,
        t: t_next,
    })
}

/// Stateful wrapper around [`episode_step`].
#[derive(Debug, Clone)]
pub struct Episode {
    pub cfg: EpisodeConfig,
    pub traj: TargetTrajectory,
    pub state: CarState,
    pub obs: Observation,
    pub t: f64,
    pub steps: usize,
    pub termination: Option<Termination>,
}

impl Episode {
    pub fn new(start: CarState, traj: TargetTrajectory, cfg: EpisodeConfig) -> Result<Self> {
        cfg.validate()?;
        traj.validate()?;
        let obs = initial_observation(start, &traj)?;
        let termination = cfg
            .is_intercepted(start.position(), traj.position(0.0))
            .then_some(Termination::Intercepted);
        Ok(Self {
            cfg,
            traj,
            state: start,
            obs,
            t: 0.0,
            steps: 0,
            termination,
        })
    }

    pub fn is_done(&self) -> bool {
        self.termination.is_some()
    }

    pub fn target_position(&self) -> Point {
        self.traj.position(self.t)
    }

    pub fn step(&mut self, u: f64) -> Result<StepOutcome> {
        let out = episode_step(self.state, &self.traj, self.t, self.steps, u, &self.cfg)?;
        self.state = out.state;
        self.obs = out.obs;
        self.t = out.t;
        self.steps += 1;
        self.termination = out.termination;
        Ok(out)
    }
}
