//! Closed-loop orchestration: perception stub, controller/plant loop,
//! trajectory logging, metrics, and run comparison.

use std::fmt::Write as _;
use std::io::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::behavior::{
    classify_obstacle, BehaviorConfig, BehaviorKind, BehaviorSchedule, Obstacle,
};
use crate::error::{Error, Result};
use crate::model::{
    ackermann_angles, slip_ratio, wrap_angle, ChassisState, ControlInput, Formulation, WheelState,
};
use crate::mpc::{solve, MpcConfig, MpcSolution};
use crate::params::RobotParams;
use crate::plant::{pack, plant_step, StateVec};
use crate::reference::{PathSpec, RefPath, ReferencePoint};

/// Which solve time is written to the log's `solve_time` column.
///
/// `Modeled` (default) books deterministic, work-proportional times so two
/// identical runs produce byte-identical logs; `Measured` records wall
/// clock and is only reproducible in the statistical sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimingMode {
    #[default]
    Modeled,
    Measured,
}

/// Obstacle sensing configuration. The default sensor is a noiseless
/// oracle; optional Gaussian width noise is reproducible under a fixed
/// seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionConfig {
    pub width_noise_sigma: f64,
    pub seed: u64,
}

/// A fully specified closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub path: PathSpec,
    pub obstacles: Vec<Obstacle>,
    pub controller: MpcConfig,
    pub robot: RobotParams,
    pub behavior: BehaviorConfig,
    pub perception: PerceptionConfig,
    /// Simulated run length (s); must be a whole number of controller
    /// periods and leave one prediction horizon of path beyond it.
    pub duration: f64,
    /// Plant integration step (s); the controller period must be an
    /// integer multiple of it.
    pub dt_plant: f64,
    /// Perception range along the path (m).
    pub lookahead: f64,
    pub mode: Formulation,
    pub timing: TimingMode,
    /// Lateral error band used for reconvergence metrics (m).
    pub reconvergence_band: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: String::new(),
            path: crate::reference::line1_default(),
            obstacles: Vec::new(),
            controller: MpcConfig::default(),
            robot: RobotParams::default(),
            behavior: BehaviorConfig::default(),
            perception: PerceptionConfig::default(),
            duration: 16.5,
            dt_plant: 0.005,
            lookahead: 10.0,
            mode: Formulation::Physical,
            timing: TimingMode::Modeled,
            reconvergence_band: 0.05,
        }
    }
}

impl ScenarioConfig {
    /// Plant substeps per controller period.
    pub fn substeps(&self) -> usize {
        (self.controller.dt / self.dt_plant).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.controller.validate()?;
        if !(self.dt_plant > 0.0) {
            return Err(Error::Parse("dt_plant must be positive".into()));
        }
        let ratio = self.controller.dt / self.dt_plant;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(Error::Parse(format!(
                "controller.dt ({}) must be an integer multiple of dt_plant ({})",
                self.controller.dt, self.dt_plant
            )));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Parse("duration must be positive".into()));
        }
        let cycles = self.duration / self.controller.dt;
        if (cycles - cycles.round()).abs() > 1e-9 {
            return Err(Error::Parse(format!(
                "duration ({}) must be a whole number of controller periods ({})",
                self.duration, self.controller.dt
            )));
        }
        if self.lookahead < 0.0 {
            return Err(Error::Parse("lookahead must be non-negative".into()));
        }
        if !(self.reconvergence_band > 0.0) {
            return Err(Error::Parse("reconvergence_band must be positive".into()));
        }
        if !(self.behavior.t_adjust > 0.0)
            || self.behavior.lead_distance < 0.0
            || self.behavior.width_margin < 0.0
            || !(self.behavior.clearance_max > 0.0)
        {
            return Err(Error::Parse("invalid behavior settings".into()));
        }
        if self.perception.width_noise_sigma < 0.0 {
            return Err(Error::Parse("width_noise_sigma must be non-negative".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for o in &self.obstacles {
            o.validate()?;
            if o.arc_position < prev {
                return Err(Error::Parse(
                    "obstacles must be sorted by arc position".into(),
                ));
            }
            prev = o.arc_position;
        }
        Ok(())
    }
}

/// One logged plant step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x_ref: f64,
    pub y_ref: f64,
    pub theta_ref: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub omega_r: f64,
    pub d: f64,
    pub gamma: bool,
    pub u: [f64; 4],
    pub steer: [f64; 4],
    pub slip: [f64; 4],
    pub solve_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The plant produced a non-finite state; the log is partial.
    Diverged { t: f64 },
}

/// An obstacle-handling decision taken during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorEvent {
    pub kind: BehaviorKind,
    pub t_start: f64,
    pub t_end: f64,
    pub obstacle_arc: f64,
    /// Width as perceived (including sensor noise, if any).
    pub perceived_width: f64,
    pub obstacle_height: f64,
}

/// The timestamped closed-loop record. The CSV serialization carries
/// exactly the columns of [`CSV_HEADER`]; the remaining fields are
/// in-memory diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub scenario: String,
    pub rows: Vec<LogRow>,
    pub status_diverged_at: Option<f64>,
    /// Wheel spin rates per row (not serialized).
    pub wheel_speeds: Vec<[f64; 4]>,
    /// Measured wall-clock solve time per controller cycle (not serialized).
    pub cycle_wall_times: Vec<f64>,
    /// Modeled solve time per controller cycle (not serialized).
    pub cycle_modeled_times: Vec<f64>,
    /// Obstacle decisions taken during the run (not serialized).
    pub events: Vec<BehaviorEvent>,
    /// Times of controller cycles whose solve failed (not serialized).
    pub solver_failures: Vec<f64>,
    /// The behavior schedule as of the end of the run (not serialized).
    pub final_schedule: Option<BehaviorSchedule>,
}

pub const CSV_HEADER: &str = "t,X_ref,Y_ref,theta_ref,X,Y,theta,v_x,v_y,omega_r,d,gamma,\
u1,u2,u3,u4,delta1,delta2,delta3,delta4,lambda1,lambda2,lambda3,lambda4,solve_time";

impl TrajectoryLog {
    pub fn status(&self) -> RunStatus {
        match self.status_diverged_at {
            Some(t) => RunStatus::Diverged { t },
            None => RunStatus::Completed,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 220 + 256);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.x_ref,
                r.y_ref,
                r.theta_ref,
                r.x,
                r.y,
                r.theta,
                r.v_x,
                r.v_y,
                r.omega_r,
                r.d,
                u8::from(r.gamma)
            );
            for v in r.u.iter().chain(r.steer.iter()).chain(r.slip.iter()) {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", r.solve_time);
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    /// Parse a CSV log. Only the serialized columns are recovered; the
    /// in-memory diagnostics stay empty.
    pub fn from_csv_str(text: &str) -> Result<TrajectoryLog> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty log file".into()))?;
        if header.trim() != CSV_HEADER {
            return Err(Error::Parse(format!("unexpected log header: {header}")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 25 {
                return Err(Error::Parse(format!(
                    "log line {}: expected 25 fields, got {}",
                    i + 2,
                    fields.len()
                )));
            }
            let num = |j: usize| -> Result<f64> {
                fields[j]
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("log line {}, field {}: {e}", i + 2, j + 1)))
            };
            let quad =
                |j: usize| -> Result<[f64; 4]> { Ok([num(j)?, num(j + 1)?, num(j + 2)?, num(j + 3)?]) };
            rows.push(LogRow {
                t: num(0)?,
                x_ref: num(1)?,
                y_ref: num(2)?,
                theta_ref: num(3)?,
                x: num(4)?,
                y: num(5)?,
                theta: num(6)?,
                v_x: num(7)?,
                v_y: num(8)?,
                omega_r: num(9)?,
                d: num(10)?,
                gamma: num(11)? != 0.0,
                u: quad(12)?,
                steer: quad(16)?,
                slip: quad(20)?,
                solve_time: num(24)?,
            });
        }
        Ok(TrajectoryLog {
            rows,
            ..TrajectoryLog::default()
        })
    }

    pub fn read_csv(path: &std::path::Path) -> Result<TrajectoryLog> {
        let text = std::fs::read_to_string(path)?;
        let mut log = Self::from_csv_str(&text)?;
        log.scenario = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(log)
    }
}

/// What the environment awareness stub reports about the nearest obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceivedObstacle {
    pub index: usize,
    pub width: f64,
    pub height: f64,
    /// Arc distance from the robot's path position (m).
    pub distance: f64,
}

/// Oracle perception with optional Gaussian width noise.
pub struct Perception {
    rng: ChaCha8Rng,
    sigma: f64,
}

impl Perception {
    pub fn new(cfg: &PerceptionConfig) -> Perception {
        Perception {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            sigma: cfg.width_noise_sigma,
        }
    }

    /// Nearest obstacle within `lookahead` arc meters ahead of the robot's
    /// position on the path, if any.
    pub fn probe(
        &mut self,
        obstacles: &[Obstacle],
        path: &RefPath,
        x: f64,
        y: f64,
        lookahead: f64,
    ) -> Option<PerceivedObstacle> {
        let s_now = path.project_arc(x, y);
        let mut best: Option<(usize, f64)> = None;
        for (i, o) in obstacles.iter().enumerate() {
            let dist = o.arc_position - s_now;
            if dist >= 0.0 && dist <= lookahead && best.map_or(true, |(_, d)| dist < d) {
                best = Some((i, dist));
            }
        }
        best.map(|(index, distance)| {
            let mut width = obstacles[index].width;
            if self.sigma > 0.0 {
                let noise = Normal::new(0.0, self.sigma).expect("valid sigma");
                width = (width + noise.sample(&mut self.rng)).max(0.05);
            }
            PerceivedObstacle {
                index,
                width,
                height: obstacles[index].height,
                distance,
            }
        })
    }
}

/// Per-cycle view handed to run observers.
pub struct CycleInfo<'a> {
    pub index: usize,
    pub t: f64,
    pub solution: &'a MpcSolution,
}

/// Run the closed loop: perceive, schedule, solve, hold the first input
/// over one controller period, integrate the plant, log every plant step.
pub fn run_closed_loop(scenario: &ScenarioConfig) -> Result<TrajectoryLog> {
    run_closed_loop_with(scenario, |_| {})
}

pub fn run_closed_loop_with(
    scenario: &ScenarioConfig,
    mut observer: impl FnMut(&CycleInfo),
) -> Result<TrajectoryLog> {
    scenario.validate()?;
    let params = &scenario.robot;
    let cfg = &scenario.controller;
    let path = RefPath::build(&scenario.path)?;
    if scenario.duration + cfg.horizon_span() > path.duration() + 1e-9 {
        return Err(Error::Parse(format!(
            "duration {} s plus the prediction horizon {} s exceeds the path's {} s",
            scenario.duration,
            cfg.horizon_span(),
            path.duration()
        )));
    }

    let mut schedule = BehaviorSchedule::single_track(path.duration(), params.track_width0);
    let mut perception = Perception::new(&scenario.perception);
    let mut scheduled = vec![false; scenario.obstacles.len()];

    // Start exactly on the reference, wheels rolling.
    let r0 = path.sample(0.0)?;
    let mut chassis = ChassisState {
        x: r0.x,
        y: r0.y,
        heading: r0.heading,
        v_x: r0.speed,
        v_y: 0.0,
        yaw_rate: r0.speed * r0.curvature * f64::from(r0.direction),
        track_width: params.track_width0,
    };
    let mut wheels = WheelState::rolling(r0.speed, params);

    let n_sub = scenario.substeps();
    let n_cycles = (scenario.duration / cfg.dt).round() as usize;
    let mut log = TrajectoryLog {
        scenario: scenario.name.clone(),
        ..TrajectoryLog::default()
    };
    log.rows.reserve(n_cycles * n_sub + 1);

    let mut previous: Option<MpcSolution> = None;
    let mut held_input = [0.0; 4];
    let mut refs: Vec<ReferencePoint> = Vec::with_capacity(cfg.n_p + 1);

    'cycles: for cycle in 0..n_cycles {
        let t_cycle = cycle as f64 * cfg.dt;

        // Perception and event-triggered scheduling.
        if let Some(seen) = perception.probe(
            &scenario.obstacles,
            &path,
            chassis.x,
            chassis.y,
            scenario.lookahead,
        ) {
            if !scheduled[seen.index] {
                scheduled[seen.index] = true;
                let true_obs = &scenario.obstacles[seen.index];
                let perceived = Obstacle {
                    arc_position: true_obs.arc_position,
                    width: seen.width,
                    height: seen.height,
                };
                let kind = classify_obstacle(&perceived, params, scenario.behavior.clearance_max);
                let (t_from, t_to) = schedule.insert_obstacle(
                    &perceived,
                    kind,
                    &path,
                    params,
                    &scenario.behavior,
                    t_cycle,
                )?;
                log.events.push(BehaviorEvent {
                    kind,
                    t_start: t_from,
                    t_end: t_to,
                    obstacle_arc: true_obs.arc_position,
                    perceived_width: seen.width,
                    obstacle_height: seen.height,
                });
            }
        }

        refs.clear();
        for k in 0..=cfg.n_p {
            refs.push(path.sample(t_cycle + k as f64 * cfg.dt)?);
        }

        let solution = solve(
            &chassis,
            &wheels,
            t_cycle,
            &schedule,
            &refs,
            params,
            scenario.mode,
            cfg,
            scenario.dt_plant,
            previous.as_ref(),
        )?;
        observer(&CycleInfo {
            index: cycle,
            t: t_cycle,
            solution: &solution,
        });
        log.cycle_wall_times.push(solution.solve_time);
        log.cycle_modeled_times.push(solution.modeled_time);
        if solution.failed {
            // Documented degradation: keep the previous input.
            log.solver_failures.push(t_cycle);
        } else {
            held_input = solution.u_sequence[0];
        }
        let logged_time = match scenario.timing {
            TimingMode::Modeled => solution.modeled_time,
            TimingMode::Measured => solution.solve_time,
        };

        let steer = ackermann_angles(
            refs[0].curvature,
            refs[0].direction,
            params,
            schedule.track_width_at(t_cycle),
        )?;
        let input = ControlInput { u: held_input };

        let mut push_row =
            |t: f64, chassis: &ChassisState, wheels: &WheelState, log: &mut TrajectoryLog| {
                let r = path.sample(t).expect("within validated range");
                log.rows.push(LogRow {
                    t,
                    x_ref: r.x,
                    y_ref: r.y,
                    theta_ref: r.heading,
                    x: chassis.x,
                    y: chassis.y,
                    theta: chassis.heading,
                    v_x: chassis.v_x,
                    v_y: chassis.v_y,
                    omega_r: chassis.yaw_rate,
                    d: chassis.track_width,
                    gamma: schedule.gamma_at(t),
                    u: input.u,
                    steer,
                    slip: std::array::from_fn(|i| {
                        slip_ratio(wheels.omega[i], chassis.v_x, params.wheel_radius)
                    }),
                    solve_time: logged_time,
                });
                log.wheel_speeds.push(wheels.omega);
            };

        if cycle == 0 {
            push_row(0.0, &chassis, &wheels, &mut log);
        }

        for m in 0..n_sub {
            let t = t_cycle + m as f64 * scenario.dt_plant;
            match plant_step(
                params,
                scenario.mode,
                t,
                scenario.dt_plant,
                &chassis,
                &wheels,
                &input,
                &steer,
                |tt| schedule.track_width_at(tt),
            ) {
                Ok((c, w)) => {
                    chassis = c;
                    wheels = w;
                }
                Err(Error::Integration { t, .. }) => {
                    log.status_diverged_at = Some(t);
                    break 'cycles;
                }
                Err(e) => return Err(e),
            }
            push_row(t + scenario.dt_plant, &chassis, &wheels, &mut log);
        }
        previous = Some(solution);
    }

    log.final_schedule = Some(schedule);
    Ok(log)
}

/// Re-apply a closed-loop log's inputs open loop through the plant.
/// Returns the replayed state at every log row.
pub fn replay_open_loop(scenario: &ScenarioConfig, log: &TrajectoryLog) -> Result<Vec<StateVec>> {
    scenario.validate()?;
    let schedule = log
        .final_schedule
        .as_ref()
        .ok_or_else(|| Error::Parse("replay needs the in-memory log of a completed run".into()))?;
    if log.rows.is_empty() || log.wheel_speeds.len() != log.rows.len() {
        return Err(Error::Parse("log has no replayable state".into()));
    }
    let first = &log.rows[0];
    let mut chassis = ChassisState {
        x: first.x,
        y: first.y,
        heading: first.theta,
        v_x: first.v_x,
        v_y: first.v_y,
        yaw_rate: first.omega_r,
        track_width: first.d,
    };
    let mut wheels = WheelState {
        omega: log.wheel_speeds[0],
    };
    let mut states = Vec::with_capacity(log.rows.len());
    states.push(pack(&chassis, &wheels));
    for row in log.rows.iter().skip(1) {
        // The previous row carries the input and steering that were applied
        // over the step ending at this row.
        let applied = &log.rows[states.len() - 1];
        let (cn, wn) = plant_step(
            &scenario.robot,
            scenario.mode,
            applied.t,
            row.t - applied.t,
            &chassis,
            &wheels,
            &ControlInput { u: applied.u },
            &applied.steer,
            |tt| schedule.track_width_at(tt),
        )?;
        chassis = cn;
        wheels = wn;
        states.push(pack(&chassis, &wheels));
    }
    Ok(states)
}

/// Aggregate tracking and timing metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub max_x_error: f64,
    pub max_y_error: f64,
    pub max_yaw_error_deg: f64,
    /// Mean/max of the log's solve_time column over rows.
    pub mean_solve_time: f64,
    pub max_solve_time: f64,
    /// Maximal intervals with the event flag set.
    pub gamma_episodes: Vec<(f64, f64)>,
    /// Per episode: time after the episode end until |Ye| stays inside the
    /// band.
    pub reconvergence_times: Vec<f64>,
    pub band: f64,
}

impl Metrics {
    /// Key/value text, one metric per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "max_x_error_m: {}", self.max_x_error);
        let _ = writeln!(s, "max_y_error_m: {}", self.max_y_error);
        let _ = writeln!(s, "max_yaw_error_deg: {}", self.max_yaw_error_deg);
        let _ = writeln!(s, "mean_solve_time_s: {}", self.mean_solve_time);
        let _ = writeln!(s, "max_solve_time_s: {}", self.max_solve_time);
        let _ = writeln!(s, "gamma_episodes: {}", self.gamma_episodes.len());
        for (i, (a, b)) in self.gamma_episodes.iter().enumerate() {
            let _ = writeln!(s, "gamma_episode_{}: {} {}", i + 1, a, b);
        }
        for (i, r) in self.reconvergence_times.iter().enumerate() {
            let _ = writeln!(s, "reconvergence_{}_s: {}", i + 1, r);
        }
        let _ = writeln!(s, "reconvergence_band_m: {}", self.band);
        s
    }
}

/// Compute metrics from a log. Yaw errors are wrapped before taking the
/// maximum; `band` is the lateral reconvergence band (m).
pub fn compute_metrics(log: &TrajectoryLog, band: f64) -> Result<Metrics> {
    if log.rows.is_empty() {
        return Err(Error::Dimension("log is empty".into()));
    }
    let mut max_x = 0.0f64;
    let mut max_y = 0.0f64;
    let mut max_yaw = 0.0f64;
    let mut sum_solve = 0.0;
    let mut max_solve = 0.0f64;
    for r in &log.rows {
        max_x = max_x.max((r.x - r.x_ref).abs());
        max_y = max_y.max((r.y - r.y_ref).abs());
        max_yaw = max_yaw.max(wrap_angle(r.theta - r.theta_ref).abs());
        sum_solve += r.solve_time;
        max_solve = max_solve.max(r.solve_time);
    }

    let mut episodes = Vec::new();
    let mut start: Option<f64> = None;
    for r in &log.rows {
        match (start, r.gamma) {
            (None, true) => start = Some(r.t),
            (Some(s), false) => {
                episodes.push((s, r.t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        episodes.push((s, log.rows.last().unwrap().t));
    }

    let mut reconvergence = Vec::with_capacity(episodes.len());
    for (i, &(_, end)) in episodes.iter().enumerate() {
        let window_end = episodes
            .get(i + 1)
            .map_or(f64::INFINITY, |&(next_start, _)| next_start);
        let mut last_violation: Option<f64> = None;
        for r in &log.rows {
            if r.t >= end && r.t < window_end && (r.y - r.y_ref).abs() > band {
                last_violation = Some(r.t);
            }
        }
        reconvergence.push(last_violation.map_or(0.0, |t| t - end));
    }

    let n = log.rows.len() as f64;
    Ok(Metrics {
        max_x_error: max_x,
        max_y_error: max_y,
        max_yaw_error_deg: max_yaw.to_degrees(),
        mean_solve_time: sum_solve / n,
        max_solve_time: max_solve,
        gamma_episodes: episodes,
        reconvergence_times: reconvergence,
        band,
    })
}

/// Which of two runs wins a comparison axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    First,
    Second,
    Tie,
    Mixed,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::First => "first",
            Verdict::Second => "second",
            Verdict::Tie => "tie",
            Verdict::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

/// Side-by-side comparison of two runs over the same path.
#[derive(Debug, Clone)]
pub struct RunComparison {
    pub metrics_a: Metrics,
    pub metrics_b: Metrics,
    /// Per-axis max-error difference a - b (x, y, yaw deg).
    pub max_error_delta: [f64; 3],
    /// Per-axis max-error ratio a / b (1.0 where both are zero).
    pub max_error_ratio: [f64; 3],
    /// mean_solve_time(a) / mean_solve_time(b).
    pub solve_time_ratio: f64,
    /// Which run tracks more accurately (all axes).
    pub accuracy: Verdict,
    /// Which run solves faster on average.
    pub speed: Verdict,
}

impl RunComparison {
    pub fn to_text(&self, name_a: &str, name_b: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "first: {name_a}");
        let _ = writeln!(s, "second: {name_b}");
        let axes = ["x", "y", "yaw_deg"];
        let a = [
            self.metrics_a.max_x_error,
            self.metrics_a.max_y_error,
            self.metrics_a.max_yaw_error_deg,
        ];
        let b = [
            self.metrics_b.max_x_error,
            self.metrics_b.max_y_error,
            self.metrics_b.max_yaw_error_deg,
        ];
        for i in 0..3 {
            let _ = writeln!(
                s,
                "max_{}_error: first {} second {} delta {} ratio {}",
                axes[i], a[i], b[i], self.max_error_delta[i], self.max_error_ratio[i]
            );
        }
        let _ = writeln!(
            s,
            "mean_solve_time: first {} second {} ratio {}",
            self.metrics_a.mean_solve_time, self.metrics_b.mean_solve_time, self.solve_time_ratio
        );
        let _ = writeln!(s, "accuracy_verdict: {}", self.accuracy);
        let _ = writeln!(s, "speed_verdict: {}", self.speed);
        s
    }
}

fn ratio_or(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

/// Compare two runs of the same reference path (e.g. two controller
/// settings). Errors if the logs do not share the same reference.
pub fn compare_runs(a: &TrajectoryLog, b: &TrajectoryLog, band: f64) -> Result<RunComparison> {
    if a.rows.len() != b.rows.len() {
        return Err(Error::Dimension(format!(
            "runs have different lengths: {} vs {} rows",
            a.rows.len(),
            b.rows.len()
        )));
    }
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        if ra.t != rb.t || ra.x_ref != rb.x_ref || ra.y_ref != rb.y_ref
            || ra.theta_ref != rb.theta_ref
        {
            return Err(Error::Dimension(
                "runs follow different references and cannot be compared".into(),
            ));
        }
    }
    let ma = compute_metrics(a, band)?;
    let mb = compute_metrics(b, band)?;
    let av = [ma.max_x_error, ma.max_y_error, ma.max_yaw_error_deg];
    let bv = [mb.max_x_error, mb.max_y_error, mb.max_yaw_error_deg];
    let delta = [av[0] - bv[0], av[1] - bv[1], av[2] - bv[2]];
    let ratio = std::array::from_fn(|i| ratio_or(av[i], bv[i]));
    let a_wins = (0..3).filter(|&i| av[i] < bv[i]).count();
    let b_wins = (0..3).filter(|&i| av[i] > bv[i]).count();
    let accuracy = match (a_wins, b_wins) {
        (0, 0) => Verdict::Tie,
        (_, 0) => Verdict::First,
        (0, _) => Verdict::Second,
        _ => Verdict::Mixed,
    };
    let speed = if ma.mean_solve_time < mb.mean_solve_time {
        Verdict::First
    } else if ma.mean_solve_time > mb.mean_solve_time {
        Verdict::Second
    } else {
        Verdict::Tie
    };
    let solve_time_ratio = ratio_or(ma.mean_solve_time, mb.mean_solve_time);
    Ok(RunComparison {
        metrics_a: ma,
        metrics_b: mb,
        max_error_delta: delta,
        max_error_ratio: ratio,
        solve_time_ratio,
        accuracy,
        speed,
    })
}
