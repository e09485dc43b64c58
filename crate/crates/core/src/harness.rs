//! Run orchestration behind the command-line tool: configuration loading and
//! validation, seeded training with metric and checkpoint export, policy
//! evaluation against the analytic optimum, sensitivity sweeps and
//! baseline-only runs.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    self, AgentError, AgentNets, ArchConfig, EpisodeMetrics, Hyperparams, NoiseConfig, Rollout, ScenarioSampler,
    TargetKind, TrainConfig,
};
use crate::baseline::{self, BaselineError, ControlSchedule, InterceptConfig};
use crate::env::{CarState, EpisodeConfig, TargetTrajectory};
use crate::nn::Checkpoint;
use crate::trajectory::{self, fmt_f64};

pub const METRICS_HEADER: &str = "episode,total_reward,mean_reward,critic_loss,actor_objective,steps,intercepted";
pub const SWEEP_HEADER: &str = "multiplier,value,trials,successes,success_rate,mean_time";

pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final.json";
pub const BEST_CHECKPOINT: &str = "best.json";
pub const NN_TRAJECTORY: &str = "trajectory_nn.csv";
pub const OPT_TRAJECTORY: &str = "trajectory_opt.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const BASELINE_FILE: &str = "baseline.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("no interception found within the {horizon} s horizon")]
    NoInterception { horizon: f64 },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Baseline(BaselineError),
}

impl HarnessError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Checkpoint(_) => 3,
            Self::NoInterception { .. } => 4,
            _ => 1,
        }
    }
}

impl From<BaselineError> for HarnessError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::NoInterception { horizon } => Self::NoInterception { horizon },
            BaselineError::InvalidParameter { .. } => Self::Config(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Eval,
    Sweep,
    Baseline,
}

/// Scenario distribution for training and sweeps. The target kind comes from
/// [`RunConfig::target_kind`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub half_width: f64,
    pub line_velocity: [f64; 2],
    pub circle_radius: f64,
    pub circle_omega: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let s = ScenarioSampler::default();
        Self {
            half_width: s.half_width,
            line_velocity: s.line_velocity,
            circle_radius: s.circle_radius,
            circle_omega: s.circle_omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Random initial positions per multiplier.
    pub trials: usize,
    /// Applied to the circle's angular velocity.
    pub circle_multipliers: Vec<f64>,
    /// Applied to both line velocity components.
    pub line_multipliers: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            circle_multipliers: (7..=13).map(|k| k as f64 / 10.0).collect(),
            line_multipliers: vec![0.8, 1.0, 1.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub target_kind: TargetKind,
    pub hyperparams: Hyperparams,
    pub env: EpisodeConfig,
    pub noise: NoiseConfig,
    pub arch: ArchConfig,
    pub sampling: SamplingConfig,
    /// Pursuer start pose.
    pub start: CarState,
    /// Fixed scenario for `eval` and `baseline`; defaults per target kind.
    pub scenario: Option<TargetTrajectory>,
    pub intercept: InterceptConfig,
    pub sweep: SweepConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    /// Periodic checkpoint cadence in episodes.
    pub checkpoint_every: usize,
    /// Window of the rolling mean reward that selects the best checkpoint.
    pub best_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Train,
            target_kind: TargetKind::Line,
            hyperparams: Hyperparams::default(),
            env: EpisodeConfig::default(),
            noise: NoiseConfig::default(),
            arch: ArchConfig::default(),
            sampling: SamplingConfig::default(),
            start: CarState::start(),
            scenario: None,
            intercept: InterceptConfig::default(),
            sweep: SweepConfig::default(),
            seed: 0,
            out_dir: PathBuf::from("runs"),
            checkpoint: None,
            checkpoint_every: 50,
            best_window: 50,
        }
    }
}

/// First evaluation scenario: target from (0.8, −0.4) at velocity (0.5, 0.5).
pub fn reference_line_scenario() -> TargetTrajectory {
    TargetTrajectory::line(0.5, 0.5, 0.8, -0.4)
}

/// Second evaluation scenario: target from (−2.5, −0.25) at velocity (0.5, 0.5).
pub fn second_line_scenario() -> TargetTrajectory {
    TargetTrajectory::line(0.5, 0.5, -2.5, -0.25)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: String| HarnessError::Config(e);
        self.train_config().validate().map_err(|e| cfg_err(e.to_string()))?;
        self.env.validate().map_err(|e| cfg_err(format!("env: {e}")))?;
        if self.env.dt != self.hyperparams.dt {
            return Err(cfg_err(format!(
                "env.dt {} disagrees with hyperparams.dt {}",
                self.env.dt, self.hyperparams.dt
            )));
        }
        if self.env.max_steps != self.hyperparams.steps_per_episode {
            return Err(cfg_err(format!(
                "env.max_steps {} disagrees with hyperparams.steps_per_episode {}",
                self.env.max_steps, self.hyperparams.steps_per_episode
            )));
        }
        if let Some(s) = &self.scenario {
            s.validate().map_err(|e| cfg_err(format!("scenario: {e}")))?;
        }
        if ![self.start.x, self.start.y, self.start.phi].iter().all(|v| v.is_finite()) {
            return Err(cfg_err("start: pose must be finite".into()));
        }
        self.intercept.validate().map_err(|e| cfg_err(e.to_string()))?;
        if self.sweep.trials == 0 {
            return Err(cfg_err("invalid trials: must be positive".into()));
        }
        for (field, ms) in [
            ("circle_multipliers", &self.sweep.circle_multipliers),
            ("line_multipliers", &self.sweep.line_multipliers),
        ] {
            if ms.iter().any(|m| !m.is_finite()) {
                return Err(cfg_err(format!("invalid {field}: multipliers must be finite")));
            }
        }
        if self.checkpoint_every == 0 {
            return Err(cfg_err("invalid checkpoint_every: must be positive".into()));
        }
        if self.best_window == 0 {
            return Err(cfg_err("invalid best_window: must be positive".into()));
        }
        Ok(())
    }

    pub fn sampler(&self) -> ScenarioSampler {
        ScenarioSampler {
            kind: self.target_kind,
            half_width: self.sampling.half_width,
            line_velocity: self.sampling.line_velocity,
            circle_radius: self.sampling.circle_radius,
            circle_omega: self.sampling.circle_omega,
            start: self.start,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hyperparams: self.hyperparams.clone(),
            env: self.env,
            noise: self.noise,
            arch: self.arch.clone(),
            sampler: self.sampler(),
        }
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        self.train_config().episode_config()
    }

    /// The configured scenario, or the default one for the target kind.
    pub fn scenario(&self) -> TargetTrajectory {
        self.scenario.unwrap_or_else(|| match self.target_kind {
            TargetKind::Line => reference_line_scenario(),
            TargetKind::Circle => TargetTrajectory::Circle {
                radius: self.sampling.circle_radius,
                omega: self.sampling.circle_omega,
                phase: 0.0,
                cx: 1.5,
                cy: 1.0,
            },
        })
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn save_checkpoint(nets: &AgentNets, path: &Path) -> Result<()> {
    let json = nets
        .to_checkpoint()
        .to_json()
        .map_err(|e| HarnessError::Checkpoint(e.to_string()))?;
    write_file(path, &json)
}

pub fn load_checkpoint(path: &Path) -> Result<AgentNets> {
    let text =
        fs::read_to_string(path).map_err(|e| HarnessError::Checkpoint(format!("{}: {e}", path.display())))?;
    let ck = Checkpoint::from_json(&text).map_err(|e| HarnessError::Checkpoint(format!("{}: {e}", path.display())))?;
    AgentNets::from_checkpoint(&ck).map_err(|e| HarnessError::Checkpoint(format!("{}: {e}", path.display())))
}

fn required_checkpoint(cfg: &RunConfig) -> Result<AgentNets> {
    let path = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| HarnessError::Config("a checkpoint path is required".into()))?;
    load_checkpoint(path)
}

pub fn metrics_line(m: &EpisodeMetrics) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        m.episode,
        fmt_f64(m.total_reward),
        fmt_f64(m.mean_reward),
        fmt_f64(m.critic_loss),
        fmt_f64(m.actor_objective),
        m.steps,
        u8::from(m.intercepted)
    )
}

pub fn metrics_csv(rows: &[EpisodeMetrics]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for m in rows {
        out.push_str(&metrics_line(m));
        out.push('\n');
    }
    out
}

/// Parses [`metrics_csv`] output.
pub fn parse_metrics_csv(text: &str) -> std::result::Result<Vec<EpisodeMetrics>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err("unexpected metrics header".into());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(format!("expected 7 fields in {line:?}"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
            let int = |s: &str| s.parse::<usize>().map_err(|e| format!("{s:?}: {e}"));
            Ok(EpisodeMetrics {
                episode: int(f[0])?,
                total_reward: num(f[1])?,
                mean_reward: num(f[2])?,
                critic_loss: num(f[3])?,
                actor_objective: num(f[4])?,
                steps: int(f[5])?,
                intercepted: f[6] == "1",
            })
        })
        .collect()
}

/// Mean of `values[from..to]`.
pub fn window_mean(values: &[f64], from: usize, to: usize) -> f64 {
    let w = &values[from..to];
    w.iter().sum::<f64>() / w.len() as f64
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub metrics: Vec<EpisodeMetrics>,
    pub nets: AgentNets,
    pub best_episode: usize,
    pub best_rolling_mean: f64,
    pub updates: u64,
}

/// Trains, streaming `metrics.csv` and checkpoints into `out_dir` and one
/// summary line per episode into `log`.
pub fn cmd_train(cfg: &RunConfig, log: &mut dyn Write) -> Result<TrainSummary> {
    cfg.validate()?;
    let dir = &cfg.out_dir;
    create_dir(dir)?;
    write_file(&dir.join("config.json"), &cfg.to_json())?;
    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics_file = io::BufWriter::new(fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?);
    writeln!(metrics_file, "{METRICS_HEADER}").map_err(io_err(&metrics_path))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rewards = Vec::new();
    let mut best = (0usize, f64::NEG_INFINITY);
    // Errors inside the callback are carried out through this slot so the
    // original kind (I/O, checkpoint) survives.
    let mut failure: Option<HarnessError> = None;
    let outcome = agent::train(&cfg.train_config(), &mut rng, |m, nets| {
        let mut step = || -> Result<()> {
            writeln!(metrics_file, "{}", metrics_line(m)).map_err(io_err(&metrics_path))?;
            rewards.push(m.total_reward);
            let n = rewards.len();
            let rolling = window_mean(&rewards, n.saturating_sub(cfg.best_window), n);
            if rolling > best.1 {
                best = (m.episode, rolling);
                save_checkpoint(nets, &dir.join(BEST_CHECKPOINT))?;
            }
            if m.episode % cfg.checkpoint_every == 0 {
                save_checkpoint(nets, &dir.join(format!("checkpoint_{:05}.json", m.episode)))?;
            }
            writeln!(
                log,
                "episode {:>5}  reward {:>12.3}  mean {:>9.4}  critic {:>11.4}  actor {:>10.4}  steps {:>4}  {}  rolling {:.3}",
                m.episode,
                m.total_reward,
                m.mean_reward,
                m.critic_loss,
                m.actor_objective,
                m.steps,
                if m.intercepted { "hit " } else { "miss" },
                rolling
            )
            .map_err(|e| HarnessError::Io {
                path: PathBuf::from("<log>"),
                source: e,
            })
        };
        step().map_err(|e| {
            let msg = e.to_string();
            failure = Some(e);
            AgentError::Callback(msg)
        })
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return Err(failure.take().unwrap_or(HarnessError::Agent(e))),
    };
    metrics_file.flush().map_err(io_err(&metrics_path))?;
    save_checkpoint(&outcome.nets, &dir.join(FINAL_CHECKPOINT))?;
    Ok(TrainSummary {
        metrics: outcome.metrics,
        nets: outcome.nets,
        best_episode: best.0,
        best_rolling_mean: best.1,
        updates: outcome.updates,
    })
}

/// `summary.json` of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scenario: TargetTrajectory,
    /// Policy interception time; `None` on timeout.
    #[serde(rename = "T_nn")]
    pub t_nn: Option<f64>,
    /// Analytic optimum; `None` when no interception exists in the horizon.
    #[serde(rename = "T_opt")]
    pub t_opt: Option<f64>,
    pub miss_nn: f64,
    pub miss_opt: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub summary: EvalSummary,
    pub rollout: Rollout,
    pub optimum: Option<baseline::Interception>,
}

/// Evaluates a policy on one scenario next to the analytic optimum.
pub fn evaluate_scenario(nets: &AgentNets, cfg: &RunConfig, scenario: &TargetTrajectory) -> Result<EvalOutput> {
    let ep = cfg.episode_config();
    let rollout = agent::evaluate(&nets.actor, scenario, cfg.start, &ep)?;
    let optimum = match baseline::intercept_time(cfg.start, scenario, &cfg.intercept) {
        Ok(hit) => Some(hit),
        Err(BaselineError::NoInterception { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let miss_opt = match &optimum {
        Some(hit) => Some(opt_rows(cfg, scenario, &hit.schedule)?.last().expect("non-empty").l),
        None => None,
    };
    let summary = EvalSummary {
        scenario: *scenario,
        t_nn: rollout.interception_time,
        t_opt: optimum.as_ref().map(|h| h.time),
        miss_nn: rollout.final_distance,
        miss_opt,
        steps: rollout.steps(),
    };
    Ok(EvalOutput {
        summary,
        rollout,
        optimum,
    })
}

fn opt_rows(
    cfg: &RunConfig,
    scenario: &TargetTrajectory,
    schedule: &ControlSchedule,
) -> Result<Vec<trajectory::TrajectoryRow>> {
    Ok(baseline::schedule_rollout(
        cfg.start,
        schedule,
        scenario,
        cfg.hyperparams.dt,
    )?)
}

/// Loads the checkpoint, evaluates the configured scenario and writes both
/// trajectories and `summary.json`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutput> {
    cfg.validate()?;
    let nets = required_checkpoint(cfg)?;
    let scenario = cfg.scenario();
    let out = evaluate_scenario(&nets, cfg, &scenario)?;
    let dir = &cfg.out_dir;
    create_dir(dir)?;
    write_file(&dir.join(NN_TRAJECTORY), &trajectory::to_csv_string(&out.rollout.rows))?;
    if let Some(hit) = &out.optimum {
        let rows = opt_rows(cfg, &scenario, &hit.schedule)?;
        write_file(&dir.join(OPT_TRAJECTORY), &trajectory::to_csv_string(&rows))?;
    }
    let json = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    write_file(&dir.join(SUMMARY_FILE), &json)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub multiplier: f64,
    /// Swept quantity: angular velocity (circle) or the x velocity component
    /// (line).
    pub value: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean interception time over successful trials; NaN when none.
    pub mean_time: f64,
}

/// Seed of sweep cell `cell`, derived from the run seed.
pub fn cell_rng(seed: u64, cell: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64 + 1);
    rng
}

/// Success rates of a frozen policy as the target's speed parameter varies.
pub fn sweep(nets: &AgentNets, cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let ep = cfg.episode_config();
    let base = cfg.sampler();
    let multipliers = match cfg.target_kind {
        TargetKind::Circle => &cfg.sweep.circle_multipliers,
        TargetKind::Line => &cfg.sweep.line_multipliers,
    };
    multipliers
        .iter()
        .enumerate()
        .map(|(cell, &m)| {
            let mut sampler = base.clone();
            let value = match cfg.target_kind {
                TargetKind::Circle => {
                    sampler.circle_omega *= m;
                    sampler.circle_omega
                }
                TargetKind::Line => {
                    sampler.line_velocity = [base.line_velocity[0] * m, base.line_velocity[1] * m];
                    sampler.line_velocity[0]
                }
            };
            let mut rng = cell_rng(cfg.seed, cell);
            let mut times = Vec::new();
            for _ in 0..cfg.sweep.trials {
                let traj = sampler.sample(ep.delta, &mut rng);
                let r = agent::evaluate(&nets.actor, &traj, cfg.start, &ep)?;
                if let Some(t) = r.interception_time {
                    times.push(t);
                }
            }
            let successes = times.len();
            Ok(SweepRow {
                multiplier: m,
                value,
                trials: cfg.sweep.trials,
                successes,
                success_rate: successes as f64 / cfg.sweep.trials as f64,
                mean_time: if successes > 0 {
                    times.iter().sum::<f64>() / successes as f64
                } else {
                    f64::NAN
                },
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(r.multiplier),
            fmt_f64(r.value),
            r.trials,
            r.successes,
            fmt_f64(r.success_rate),
            fmt_f64(r.mean_time)
        ));
    }
    out
}

/// Loads the checkpoint and writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let nets = required_checkpoint(cfg)?;
    let rows = sweep(&nets, cfg)?;
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join(SWEEP_FILE), &sweep_csv(&rows))?;
    Ok(rows)
}

/// `baseline.json`: the analytic solution for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub scenario: TargetTrajectory,
    /// `"intercepted"` or `"no_interception"`.
    pub status: String,
    #[serde(rename = "T_opt")]
    pub t_opt: Option<f64>,
    pub schedule: Option<ControlSchedule>,
    pub miss_opt: Option<f64>,
    pub horizon: f64,
    pub solve_seconds: f64,
}

/// Solves the configured scenario analytically and writes `baseline.json`
/// (always) and the rolled-out trajectory (when an interception exists). A
/// missing interception is returned as [`HarnessError::NoInterception`] after
/// the summary is written.
pub fn cmd_baseline(cfg: &RunConfig) -> Result<BaselineSummary> {
    cfg.validate()?;
    let scenario = cfg.scenario();
    let started = std::time::Instant::now();
    let solved = baseline::intercept_time(cfg.start, &scenario, &cfg.intercept);
    let solve_seconds = started.elapsed().as_secs_f64();
    create_dir(&cfg.out_dir)?;
    let summary = match &solved {
        Ok(hit) => {
            let rows = opt_rows(cfg, &scenario, &hit.schedule)?;
            write_file(&cfg.out_dir.join(OPT_TRAJECTORY), &trajectory::to_csv_string(&rows))?;
            BaselineSummary {
                scenario,
                status: "intercepted".into(),
                t_opt: Some(hit.time),
                schedule: Some(hit.schedule.clone()),
                miss_opt: Some(rows.last().expect("non-empty").l),
                horizon: cfg.intercept.horizon,
                solve_seconds,
            }
        }
        Err(BaselineError::NoInterception { .. }) => BaselineSummary {
            scenario,
            status: "no_interception".into(),
            t_opt: None,
            schedule: None,
            miss_opt: None,
            horizon: cfg.intercept.horizon,
            solve_seconds,
        },
        Err(e) => return Err(e.clone().into()),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&cfg.out_dir.join(BASELINE_FILE), &json)?;
    match solved {
        Ok(_) => Ok(summary),
        Err(e) => Err(e.into()),
    }
}

/// Dispatches on `cfg.mode`, printing a short report to `log`.
pub fn run(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let report = |log: &mut dyn Write, text: String| {
        writeln!(log, "{text}").map_err(|e| HarnessError::Io {
            path: PathBuf::from("<log>"),
            source: e,
        })
    };
    match cfg.mode {
        Mode::Train => {
            let s = cmd_train(cfg, log)?;
            let hits = s.metrics.iter().filter(|m| m.intercepted).count();
            report(
                log,
                format!(
                    "trained {} episodes ({} intercepted, {} updates); best rolling mean {:.3} at episode {}; outputs in {}",
                    s.metrics.len(),
                    hits,
                    s.updates,
                    s.best_rolling_mean,
                    s.best_episode,
                    cfg.out_dir.display()
                ),
            )
        }
        Mode::Eval => {
            let out = cmd_eval(cfg)?;
            let s = &out.summary;
            report(
                log,
                format!(
                    "T_nn {}  T_opt {}  miss_nn {:.4}  steps {}",
                    fmt_opt(s.t_nn),
                    fmt_opt(s.t_opt),
                    s.miss_nn,
                    s.steps
                ),
            )
        }
        Mode::Sweep => {
            let rows = cmd_sweep(cfg)?;
            for r in rows {
                report(
                    log,
                    format!(
                        "multiplier {:.2}  value {:.3}  success {}/{}  mean time {:.2}",
                        r.multiplier, r.value, r.successes, r.trials, r.mean_time
                    ),
                )?;
            }
            Ok(())
        }
        Mode::Baseline => match cmd_baseline(cfg) {
            Ok(s) => report(
                log,
                format!(
                    "T_opt {}  segments {}",
                    fmt_opt(s.t_opt),
                    s.schedule.map_or(0, |sch| sch.segments.len())
                ),
            ),
            Err(e) => Err(e),
        },
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |t| format!("{t:.4}"))
}
