//! Behavior-switched receding-horizon torque controller.
//!
//! The predictor rolls the plant model forward over `n_p` controller steps
//! (each integrated at the plant rate), splits the horizon at behavior
//! switch times, and accumulates quadratic tracking/input costs per
//! behavior segment plus a stabilizing terminal cost at each segment end.
//! The four motor inputs over the first `n_c` steps are the decision
//! variables, optimized by projected gradient descent with
//! finite-difference gradients and backtracking line search.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorSchedule;
use crate::error::{Error, Result};
use crate::model::{ackermann_angles, wrap_angle, ChassisState, ControlInput, Formulation};
use crate::params::RobotParams;
use crate::plant::{pack, plant_step, unpack, StateVec};
use crate::reference::ReferencePoint;

/// Deterministic work model: one plant substep is booked as one
/// microsecond. Used for the reproducible `solve_time` values written to
/// logs; wall-clock time is measured separately.
pub const MODELED_SECONDS_PER_SUBSTEP: f64 = 1e-6;

/// Controller settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Prediction horizon (controller steps).
    pub n_p: usize,
    /// Control horizon (controller steps); inputs are held constant beyond.
    pub n_c: usize,
    /// Controller period (s).
    pub dt: f64,
    /// Tracking error weights (x, y, heading).
    pub q: [f64; 3],
    /// Input weights, one per wheel.
    pub r: [f64; 4],
    /// Terminal error weights applied at each behavior end.
    pub s: [f64; 3],
    pub u_min: f64,
    pub u_max: f64,
    /// Maximum accepted descent steps per solve.
    pub max_iterations: usize,
    /// Stop once the relative cost decrease of an accepted step falls
    /// below this.
    pub tolerance: f64,
    /// Speed bound of the admissible state set (m/s).
    pub speed_limit: f64,
    /// Weight of the soft quadratic penalty on state-set violations.
    pub limit_penalty: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            n_p: 60,
            n_c: 30,
            dt: 0.05,
            q: [1.0, 10.0, 5.0],
            r: [1.0, 1.0, 1.0, 1.0],
            s: [10.0, 100.0, 50.0],
            u_min: -10.0,
            u_max: 10.0,
            max_iterations: 40,
            tolerance: 1e-4,
            speed_limit: 10.0 / 3.6,
            limit_penalty: 100.0,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_c < 1 || self.n_p < self.n_c {
            return Err(Error::Parse(format!(
                "horizons must satisfy n_p >= n_c >= 1, got n_p={}, n_c={}",
                self.n_p, self.n_c
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Parse("controller period must be positive".into()));
        }
        if !(self.u_min < self.u_max) {
            return Err(Error::Parse(format!(
                "input bounds must satisfy u_min < u_max, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        if self.q.iter().any(|w| !(*w > 0.0)) || self.r.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Parse(
                "error and input weights must be strictly positive".into(),
            ));
        }
        if self.s.iter().any(|w| *w < 0.0) {
            return Err(Error::Parse("terminal weights must be non-negative".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Parse("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) || !(self.speed_limit > 0.0) || self.limit_penalty < 0.0 {
            return Err(Error::Parse("invalid tolerance/limit settings".into()));
        }
        Ok(())
    }

    /// Prediction span `n_p * dt` (s).
    pub fn horizon_span(&self) -> f64 {
        self.n_p as f64 * self.dt
    }
}

/// Result of one receding-horizon solve.
#[derive(Debug, Clone)]
pub struct MpcSolution {
    /// Optimized inputs for the first `n_c` steps; the last entry is held
    /// through the rest of the prediction horizon.
    pub u_sequence: Vec<[f64; 4]>,
    /// Predicted states at the `n_p + 1` controller-step boundaries,
    /// starting with the current state.
    pub predicted: Vec<StateVec>,
    pub cost: f64,
    /// Accepted descent steps.
    pub iterations: usize,
    /// Cost after each accepted iterate, starting with the initial cost.
    pub cost_history: Vec<f64>,
    /// Measured wall-clock solve time (s).
    pub solve_time: f64,
    /// Deterministic modeled solve time (s), proportional to the plant
    /// substeps evaluated during the solve.
    pub modeled_time: f64,
    /// Plant substeps evaluated during the solve.
    pub substeps: u64,
    /// True if the solver could not produce a finite-cost trajectory.
    pub failed: bool,
}

/// End of the current optimization window: the next behavior switch if it
/// falls inside the prediction span, otherwise the full span.
pub fn horizon_end(t_j: f64, delta_t: f64, next_switch: Option<f64>) -> f64 {
    match next_switch {
        Some(t_i) if t_j < t_i && t_i <= t_j + delta_t => t_i,
        _ => t_j + delta_t,
    }
}

/// Componentwise clamp onto the input box.
pub fn project_inputs(u: &[f64; 4], u_min: f64, u_max: f64) -> [f64; 4] {
    [
        u[0].clamp(u_min, u_max),
        u[1].clamp(u_min, u_max),
        u[2].clamp(u_min, u_max),
        u[3].clamp(u_min, u_max),
    ]
}

/// Membership in the admissible state set: planar speed within the
/// platform's limit and track width within the leg workspace.
pub fn within_state_set(chassis: &ChassisState, params: &RobotParams, cfg: &MpcConfig) -> bool {
    let speed = (chassis.v_x * chassis.v_x + chassis.v_y * chassis.v_y).sqrt();
    speed <= cfg.speed_limit + 1e-12
        && chassis.track_width >= params.track_width0 - 1e-9
        && chassis.track_width <= params.track_width_max() + 1e-9
}

/// Quadrature cost of one behavior segment: the running error/input terms
/// plus the terminal error cost at the segment end.
pub fn behavior_cost(
    errors: &[[f64; 3]],
    inputs: &[[f64; 4]],
    terminal_error: &[f64; 3],
    cfg: &MpcConfig,
) -> Result<f64> {
    if errors.len() != inputs.len() {
        return Err(Error::Dimension(format!(
            "{} error samples vs {} input samples",
            errors.len(),
            inputs.len()
        )));
    }
    let mut j = 0.0;
    for (e, u) in errors.iter().zip(inputs) {
        let qe = cfg.q[0] * e[0] * e[0] + cfg.q[1] * e[1] * e[1] + cfg.q[2] * e[2] * e[2];
        let ru = cfg.r[0] * u[0] * u[0]
            + cfg.r[1] * u[1] * u[1]
            + cfg.r[2] * u[2] * u[2]
            + cfg.r[3] * u[3] * u[3];
        j += (qe + ru) * cfg.dt;
    }
    j += cfg.s[0] * terminal_error[0] * terminal_error[0]
        + cfg.s[1] * terminal_error[1] * terminal_error[1]
        + cfg.s[2] * terminal_error[2] * terminal_error[2];
    Ok(j)
}

/// Options of the projected-descent engine.
#[derive(Debug, Clone)]
pub struct DescentOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub max_backtracks: usize,
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub cost_history: Vec<f64>,
}

/// Projected gradient descent on a box: steepest descent with a
/// Barzilai-Borwein initial step, backtracking on failure, greedy step
/// expansion on success, clamping every candidate onto `[lo, hi]`
/// componentwise, and accepting only strict cost decreases.
pub fn projected_descent(
    mut cost_fn: impl FnMut(&[f64]) -> f64,
    mut grad_fn: impl FnMut(&[f64], &mut [f64]),
    x0: Vec<f64>,
    lo: f64,
    hi: f64,
    opts: &DescentOptions,
) -> DescentOutcome {
    let mut x = x0;
    for v in x.iter_mut() {
        *v = v.clamp(lo, hi);
    }
    let mut cost = cost_fn(&x);
    let mut history = vec![cost];
    let mut iterations = 0;
    if !cost.is_finite() {
        return DescentOutcome {
            x,
            cost,
            iterations,
            cost_history: history,
        };
    }
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut candidate = vec![0.0; n];
    let mut best = vec![0.0; n];
    let mut prev_x: Vec<f64> = Vec::new();
    let mut prev_grad: Vec<f64> = Vec::new();
    let mut last_step: Option<f64> = None;
    for _ in 0..opts.max_iterations {
        grad_fn(&x, &mut grad);
        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gnorm < 1e-14 || !gnorm.is_finite() {
            break;
        }
        // Barzilai-Borwein spectral step from the previous iterate, falling
        // back to the last accepted step, then to a unit-move step.
        let mut a = last_step.unwrap_or(1.0 / gnorm);
        if !prev_x.is_empty() {
            let mut sy = 0.0;
            let mut yy = 0.0;
            for i in 0..n {
                let s = x[i] - prev_x[i];
                let y = grad[i] - prev_grad[i];
                sy += s * y;
                yy += y * y;
            }
            if sy > 0.0 && yy > 0.0 {
                let bb = sy / yy;
                if bb.is_finite() && bb > 0.0 {
                    a = bb;
                }
            }
        }
        prev_x = x.clone();
        prev_grad = grad.clone();

        let try_step = |a: f64, candidate: &mut [f64], cost_fn: &mut dyn FnMut(&[f64]) -> f64| {
            for i in 0..n {
                candidate[i] = (x[i] - a * grad[i]).clamp(lo, hi);
            }
            cost_fn(candidate)
        };
        let mut accepted = false;
        let mut best_cost = cost;
        for _ in 0..opts.max_backtracks {
            let c = try_step(a, &mut candidate, &mut cost_fn);
            if c.is_finite() && c < cost {
                best.copy_from_slice(&candidate);
                best_cost = c;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if !accepted {
            break;
        }
        // Greedy expansion along the same ray; each trial is one rollout.
        let mut a_grow = a;
        for _ in 0..12 {
            a_grow *= 2.0;
            let c = try_step(a_grow, &mut candidate, &mut cost_fn);
            if c.is_finite() && c < best_cost {
                best.copy_from_slice(&candidate);
                best_cost = c;
            } else {
                break;
            }
        }
        let previous = cost;
        x.copy_from_slice(&best);
        cost = best_cost;
        history.push(cost);
        iterations += 1;
        last_step = Some(a);
        if previous - cost <= opts.tolerance * previous.abs().max(1e-12) {
            break;
        }
    }
    DescentOutcome {
        x,
        cost,
        iterations,
        cost_history: history,
    }
}

const FD_STEP: f64 = 1e-6;

/// Forward finite-difference gradient (generic form; the solver uses a
/// cached-suffix specialization of the same differences).
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], out: &mut [f64]) {
    let f0 = f(x);
    let mut work = x.to_vec();
    for i in 0..x.len() {
        let h = FD_STEP * x[i].abs().max(1.0);
        let saved = work[i];
        work[i] = saved + h;
        out[i] = (f(&work) - f0) / h;
        work[i] = saved;
    }
}

/// Everything that stays fixed during one solve.
struct Predictor<'a> {
    params: &'a RobotParams,
    mode: Formulation,
    cfg: &'a MpcConfig,
    schedule: &'a BehaviorSchedule,
    refs: &'a [ReferencePoint],
    steer: Vec<[f64; 4]>,
    /// Step boundaries t_{k+1} (k in 0..n_p) that close a behavior segment
    /// and therefore carry the terminal cost.
    segment_end: Vec<bool>,
    t_now: f64,
    x0: StateVec,
    n_sub: usize,
    dt_plant: f64,
}

struct RolloutCache {
    cost: f64,
    /// States at controller-step boundaries (n_p + 1 entries).
    states: Vec<StateVec>,
    /// Cost contributions of steps k..n_p (running + boundary terms),
    /// used by the suffix finite differences.
    cost_from: Vec<f64>,
}

impl<'a> Predictor<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        chassis: &ChassisState,
        wheels: &crate::model::WheelState,
        t_now: f64,
        schedule: &'a BehaviorSchedule,
        refs: &'a [ReferencePoint],
        params: &'a RobotParams,
        mode: Formulation,
        cfg: &'a MpcConfig,
        dt_plant: f64,
    ) -> Result<Predictor<'a>> {
        if refs.len() != cfg.n_p + 1 {
            return Err(Error::Dimension(format!(
                "need {} reference samples over the horizon, got {}",
                cfg.n_p + 1,
                refs.len()
            )));
        }
        let ratio = cfg.dt / dt_plant;
        let n_sub = ratio.round() as usize;
        if n_sub == 0 || (ratio - n_sub as f64).abs() > 1e-9 {
            return Err(Error::Parse(format!(
                "controller period {} must be an integer multiple of the plant step {}",
                cfg.dt, dt_plant
            )));
        }
        let mut steer = Vec::with_capacity(cfg.n_p);
        let mut segment_end = Vec::with_capacity(cfg.n_p);
        for k in 0..cfg.n_p {
            let t_k = t_now + k as f64 * cfg.dt;
            let d_k = schedule.track_width_at(t_k);
            steer.push(ackermann_angles(
                refs[k].curvature,
                refs[k].direction,
                params,
                d_k,
            )?);
            // A behavior boundary inside (t_k, t_{k+1}] closes a segment;
            // the horizon end always does.
            let t_next = t_now + (k + 1) as f64 * cfg.dt;
            let closes =
                k + 1 == cfg.n_p || !schedule.switches_in(t_k, t_next + 1e-12).is_empty();
            segment_end.push(closes);
        }
        Ok(Predictor {
            params,
            mode,
            cfg,
            schedule,
            refs,
            steer,
            segment_end,
            t_now,
            x0: pack(chassis, wheels),
            n_sub,
            dt_plant,
        })
    }

    fn input_at<'u>(&self, u: &'u [[f64; 4]], k: usize) -> &'u [f64; 4] {
        &u[k.min(self.cfg.n_c - 1)]
    }

    /// Tracking error against reference sample `k` for a packed state.
    fn error(&self, s: &StateVec, k: usize) -> [f64; 3] {
        let r = &self.refs[k];
        [s[0] - r.x, s[1] - r.y, wrap_angle(s[2] - r.heading)]
    }

    fn running_cost(&self, e: &[f64; 3], u: &[f64; 4]) -> f64 {
        let q = &self.cfg.q;
        let r = &self.cfg.r;
        ((q[0] * e[0] * e[0] + q[1] * e[1] * e[1] + q[2] * e[2] * e[2])
            + (r[0] * u[0] * u[0] + r[1] * u[1] * u[1] + r[2] * u[2] * u[2] + r[3] * u[3] * u[3]))
            * self.cfg.dt
    }

    /// Boundary terms at t_{k+1}: terminal cost if a segment closes there,
    /// plus the soft state-set penalty.
    fn boundary_cost(&self, s: &StateVec, k: usize) -> f64 {
        let mut c = 0.0;
        if self.segment_end[k] {
            let e = self.error(s, k + 1);
            let w = &self.cfg.s;
            c += w[0] * e[0] * e[0] + w[1] * e[1] * e[1] + w[2] * e[2] * e[2];
        }
        let speed = (s[3] * s[3] + s[4] * s[4]).sqrt();
        let over = (speed - self.cfg.speed_limit).max(0.0);
        c += self.cfg.limit_penalty * over * over * self.cfg.dt;
        c
    }

    /// Advance one controller step (`n_sub` plant substeps). Returns false
    /// if the plant reports a non-finite state.
    fn advance(
        &self,
        k: usize,
        state: &mut StateVec,
        u_k: &[f64; 4],
        substeps: &AtomicU64,
    ) -> bool {
        let t_step = self.t_now + k as f64 * self.cfg.dt;
        let (mut chassis, mut wheels) = unpack(state, self.schedule.track_width_at(t_step));
        let input = ControlInput { u: *u_k };
        for m in 0..self.n_sub {
            let t = t_step + m as f64 * self.dt_plant;
            match plant_step(
                self.params,
                self.mode,
                t,
                self.dt_plant,
                &chassis,
                &wheels,
                &input,
                &self.steer[k],
                |tt| self.schedule.track_width_at(tt),
            ) {
                Ok((c, w)) => {
                    chassis = c;
                    wheels = w;
                }
                Err(_) => {
                    substeps.fetch_add((m + 1) as u64, Ordering::Relaxed);
                    return false;
                }
            }
        }
        substeps.fetch_add(self.n_sub as u64, Ordering::Relaxed);
        *state = pack(&chassis, &wheels);
        true
    }

    /// Cost of the tail starting at controller step `k0` from state `s_k`.
    fn suffix_cost(&self, u: &[[f64; 4]], k0: usize, s_k: &StateVec, substeps: &AtomicU64) -> f64 {
        let mut state = *s_k;
        let mut cost = 0.0;
        for k in k0..self.cfg.n_p {
            let u_k = *self.input_at(u, k);
            cost += self.running_cost(&self.error(&state, k), &u_k);
            if !self.advance(k, &mut state, &u_k, substeps) {
                return f64::INFINITY;
            }
            cost += self.boundary_cost(&state, k);
        }
        cost
    }

    /// Full rollout with cached per-step suffix costs and boundary states.
    fn rollout_full(&self, u: &[[f64; 4]], substeps: &AtomicU64) -> RolloutCache {
        let n_p = self.cfg.n_p;
        let mut states = Vec::with_capacity(n_p + 1);
        let mut step_cost = vec![0.0; n_p];
        states.push(self.x0);
        let mut state = self.x0;
        let mut finite = true;
        for k in 0..n_p {
            let u_k = *self.input_at(u, k);
            let mut c = self.running_cost(&self.error(&state, k), &u_k);
            if !self.advance(k, &mut state, &u_k, substeps) {
                finite = false;
                step_cost[k] = f64::INFINITY;
                states.push(state);
                break;
            }
            c += self.boundary_cost(&state, k);
            step_cost[k] = c;
            states.push(state);
        }
        let mut cost_from = vec![0.0; n_p + 1];
        for k in (0..n_p.min(states.len() - 1) + 1).rev() {
            if k < n_p {
                cost_from[k] = cost_from[k + 1] + step_cost[k];
            }
        }
        RolloutCache {
            cost: if finite { cost_from[0] } else { f64::INFINITY },
            states,
            cost_from,
        }
    }

    /// Suffix finite differences: the partial w.r.t. `u[k][i]` only needs a
    /// re-rollout from the cached state at step k. Partials are independent
    /// and evaluated in parallel; each writes its own slot, so the result
    /// does not depend on scheduling.
    fn gradient(
        &self,
        u: &[[f64; 4]],
        cache: &RolloutCache,
        out: &mut [f64],
        substeps: &AtomicU64,
    ) {
        let n_c = self.cfg.n_c;
        let n_p = self.cfg.n_p;
        out.par_iter_mut().enumerate().take(n_c * 4).for_each(|(idx, slot)| {
            let (k, i) = (idx / 4, idx % 4);
            let h = FD_STEP * u[k][i].abs().max(1.0);
            let mut pert = u.to_vec();
            pert[k][i] += h;
            let c = self.suffix_cost(&pert, k, &cache.states[k], substeps);
            // Diagonal preconditioning: normalize by the number of steps
            // the component influences, so early inputs and the held tail
            // take comparable moves under one scalar step size.
            let influence = (n_p - k) as f64 / (n_p - n_c + 1) as f64;
            *slot = (c - cache.cost_from[k]) / (h * influence);
        });
    }
}

fn flatten(u: &[[f64; 4]]) -> Vec<f64> {
    u.iter().flatten().copied().collect()
}

fn unflatten(x: &[f64]) -> Vec<[f64; 4]> {
    x.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect()
}

/// Solve one receding-horizon problem.
///
/// `refs` must hold `n_p + 1` reference samples at the controller-step
/// boundaries starting at `t_now`. A warm start shifts the previous input
/// sequence by one step. The solve is deterministic; wall-clock time is
/// measured but never feeds back into the result.
#[allow(clippy::too_many_arguments)]
pub fn solve(
    chassis: &ChassisState,
    wheels: &crate::model::WheelState,
    t_now: f64,
    schedule: &BehaviorSchedule,
    refs: &[ReferencePoint],
    params: &RobotParams,
    mode: Formulation,
    cfg: &MpcConfig,
    dt_plant: f64,
    warm_start: Option<&MpcSolution>,
) -> Result<MpcSolution> {
    cfg.validate()?;
    let clock = Instant::now();
    let predictor = Predictor::new(
        chassis, wheels, t_now, schedule, refs, params, mode, cfg, dt_plant,
    )?;
    let substeps = AtomicU64::new(0);

    let mut u0 = vec![[0.0; 4]; cfg.n_c];
    if let Some(prev) = warm_start {
        for (k, slot) in u0.iter_mut().enumerate() {
            let src = (k + 1).min(prev.u_sequence.len() - 1);
            *slot = prev.u_sequence[src];
        }
    }
    for u in &mut u0 {
        *u = project_inputs(u, cfg.u_min, cfg.u_max);
    }

    let opts = DescentOptions {
        max_iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
        max_backtracks: 40,
    };
    let outcome = projected_descent(
        |x| {
            let u = unflatten(x);
            predictor.suffix_cost(&u, 0, &predictor.x0, &substeps)
        },
        |x, out| {
            let u = unflatten(x);
            let cache = predictor.rollout_full(&u, &substeps);
            predictor.gradient(&u, &cache, out, &substeps);
        },
        flatten(&u0),
        cfg.u_min,
        cfg.u_max,
        &opts,
    );

    let u_final = unflatten(&outcome.x);
    let cache = predictor.rollout_full(&u_final, &substeps);
    let failed = !cache.cost.is_finite();
    let total_substeps = substeps.into_inner();
    Ok(MpcSolution {
        u_sequence: u_final,
        predicted: cache.states,
        cost: cache.cost,
        iterations: outcome.iterations,
        cost_history: outcome.cost_history,
        solve_time: clock.elapsed().as_secs_f64(),
        modeled_time: total_substeps as f64 * MODELED_SECONDS_PER_SUBSTEP,
        substeps: total_substeps,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::BehaviorSchedule;
    use crate::model::WheelState;
    use crate::reference::{line1_default, RefPath};

    fn straight_refs(n: usize, dt: f64, speed: f64) -> Vec<ReferencePoint> {
        (0..=n)
            .map(|k| ReferencePoint {
                t: k as f64 * dt,
                x: speed * k as f64 * dt,
                y: 0.0,
                heading: 0.0,
                speed,
                curvature: 0.0,
                direction: 0,
            })
            .collect()
    }

    #[test]
    fn horizon_end_rule() {
        assert_eq!(horizon_end(2.0, 1.0, Some(2.5)), 2.5);
        assert_eq!(horizon_end(2.0, 1.0, Some(4.0)), 3.0);
        assert_eq!(horizon_end(2.0, 1.0, None), 3.0);
        // A switch exactly at the window end still cuts there.
        assert_eq!(horizon_end(2.0, 1.0, Some(3.0)), 3.0);
    }

    #[test]
    fn projection_clamps() {
        let u = project_inputs(&[15.0, 0.0, -12.0, 3.0], -10.0, 10.0);
        assert_eq!(u, [10.0, 0.0, -10.0, 3.0]);
        assert_eq!(
            project_inputs(&[1.0, -2.0, 3.0, 10.0], -10.0, 10.0),
            [1.0, -2.0, 3.0, 10.0]
        );
    }

    #[test]
    fn state_set_membership() {
        let p = RobotParams::default();
        let cfg = MpcConfig::default();
        let mut c = ChassisState::at_rest(&p);
        c.v_x = 1.0;
        assert!(within_state_set(&c, &p, &cfg));
        c.v_x = 3.0;
        assert!(!within_state_set(&c, &p, &cfg));
        c.v_x = 1.0;
        c.track_width = p.track_width_max();
        assert!(within_state_set(&c, &p, &cfg));
        c.track_width = p.track_width_max() + 0.01;
        assert!(!within_state_set(&c, &p, &cfg));
    }

    #[test]
    fn behavior_cost_zero() {
        let cfg = MpcConfig::default();
        let j = behavior_cost(&[[0.0; 3]; 5], &[[0.0; 4]; 5], &[0.0; 3], &cfg).unwrap();
        assert_eq!(j, 0.0);
    }

    #[test]
    fn behavior_cost_single_step() {
        let cfg = MpcConfig {
            s: [0.0; 3],
            ..MpcConfig::default()
        };
        let j = behavior_cost(&[[1.0, 0.0, 0.0]], &[[0.0; 4]], &[0.0; 3], &cfg).unwrap();
        assert!((j - cfg.dt).abs() < 1e-15);
    }

    #[test]
    fn behavior_cost_hand_summed() {
        // Two steps, dt = 0.05, Q = diag(1,10,5), R = I, S = diag(10,100,50):
        // step 0: e=(1,0,0), u=(1,0,0,0) -> (1 + 1) * dt
        // step 1: e=(0,2,0), u=0        -> 40 * dt
        // terminal e=(0,0,0.1)          -> 50 * 0.01 = 0.5
        // total = 42 * 0.05 + 0.5 = 2.6
        let cfg = MpcConfig::default();
        let j = behavior_cost(
            &[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            &[[1.0, 0.0, 0.0, 0.0], [0.0; 4]],
            &[0.0, 0.0, 0.1],
            &cfg,
        )
        .unwrap();
        assert!((j - 2.6).abs() < 1e-12);
    }

    #[test]
    fn behavior_cost_dimension_mismatch() {
        let cfg = MpcConfig::default();
        assert!(behavior_cost(&[[0.0; 3]; 3], &[[0.0; 4]; 2], &[0.0; 3], &cfg).is_err());
    }

    /// The descent engine must land on the analytic minimizer of a simple
    /// box-constrained quadratic.
    #[test]
    fn descent_solves_quadratic_toy() {
        // One step of x1 = a x0 + b u toward x_ref with cost
        // q (x1 - x_ref)^2 + r u^2; minimizer u* = q b (x_ref - a x0) / (q b^2 + r).
        let (a, b, q, r, x0, x_ref) = (0.9, 0.4, 2.0, 0.5, 1.0, 3.0);
        let cost = |u: &[f64]| {
            let x1 = a * x0 + b * u[0];
            q * (x1 - x_ref) * (x1 - x_ref) + r * u[0] * u[0]
        };
        let opts = DescentOptions {
            max_iterations: 200,
            tolerance: 1e-14,
            max_backtracks: 60,
        };
        let out = projected_descent(
            cost,
            |u, g| fd_gradient(cost, u, g),
            vec![0.0],
            -10.0,
            10.0,
            &opts,
        );
        let u_star = q * b * (x_ref - a * x0) / (q * b * b + r);
        assert!(
            (out.x[0] - u_star).abs() < 1e-6,
            "got {}, want {}",
            out.x[0],
            u_star
        );
        for w in out.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn descent_respects_box() {
        // Unconstrained minimum at 5; the box caps it at 2.
        let cost = |u: &[f64]| (u[0] - 5.0) * (u[0] - 5.0);
        let opts = DescentOptions {
            max_iterations: 100,
            tolerance: 1e-14,
            max_backtracks: 60,
        };
        let out = projected_descent(
            cost,
            |u, g| fd_gradient(cost, u, g),
            vec![0.0],
            -2.0,
            2.0,
            &opts,
        );
        assert!((out.x[0] - 2.0).abs() < 1e-9);
    }

    fn solve_ctx() -> (RobotParams, MpcConfig, BehaviorSchedule) {
        let params = RobotParams::default();
        let cfg = MpcConfig {
            n_p: 8,
            n_c: 4,
            ..MpcConfig::default()
        };
        let schedule = BehaviorSchedule::single_track(60.0, params.track_width0);
        (params, cfg, schedule)
    }

    /// On the reference with a resistance-free drivetrain, zero input is
    /// already optimal.
    #[test]
    fn solve_on_reference_returns_zero_input() {
        let (mut params, cfg, schedule) = solve_ctx();
        params.viscous_coeff = 0.0;
        params.coulomb_torque = 0.0;
        let refs = straight_refs(cfg.n_p, cfg.dt, 2.0);
        let mut chassis = ChassisState::at_rest(&params);
        chassis.v_x = 2.0;
        let wheels = WheelState::rolling(2.0, &params);
        let sol = solve(
            &chassis,
            &wheels,
            0.0,
            &schedule,
            &refs,
            &params,
            Formulation::Physical,
            &cfg,
            0.005,
            None,
        )
        .unwrap();
        assert!(!sol.failed);
        assert!(sol.cost < 1e-12, "cost {}", sol.cost);
        for u in &sol.u_sequence {
            for v in u {
                assert!(v.abs() < 1e-9);
            }
        }
    }

    /// The suffix finite differences must agree with plain finite
    /// differences over the full rollout.
    #[test]
    fn suffix_gradient_matches_plain_fd() {
        let (params, cfg, schedule) = solve_ctx();
        let refs = straight_refs(cfg.n_p, cfg.dt, 2.0);
        let mut chassis = ChassisState::at_rest(&params);
        chassis.v_x = 1.8;
        chassis.v_y = 0.05;
        let wheels = WheelState::rolling(1.8, &params);
        let predictor = Predictor::new(
            &chassis,
            &wheels,
            0.0,
            &schedule,
            &refs,
            &params,
            Formulation::Physical,
            &cfg,
            0.005,
        )
        .unwrap();
        let counter = AtomicU64::new(0);
        let u: Vec<[f64; 4]> = (0..cfg.n_c)
            .map(|k| [0.3 + 0.1 * k as f64, -0.2, 0.15, 0.05])
            .collect();
        let cache = predictor.rollout_full(&u, &counter);
        let mut suffix = vec![0.0; 4 * cfg.n_c];
        predictor.gradient(&u, &cache, &mut suffix, &counter);
        let mut plain = vec![0.0; 4 * cfg.n_c];
        fd_gradient(
            |x| predictor.suffix_cost(&unflatten(x), 0, &predictor.x0, &counter),
            &flatten(&u),
            &mut plain,
        );
        for i in 0..plain.len() {
            let scale = plain[i].abs().max(1e-3);
            assert!(
                (suffix[i] - plain[i]).abs() <= 1e-5 * scale,
                "component {i}: suffix {} vs plain {}",
                suffix[i],
                plain[i]
            );
        }
    }

    /// Applying the returned inputs open loop through the plant must
    /// reproduce the predicted trajectory.
    #[test]
    fn prediction_is_plant_consistent() {
        let params = RobotParams::default();
        let cfg = MpcConfig {
            n_p: 10,
            n_c: 5,
            max_iterations: 8,
            ..MpcConfig::default()
        };
        let path = RefPath::build(&line1_default()).unwrap();
        let schedule = BehaviorSchedule::single_track(path.duration(), params.track_width0);
        let t0 = 5.0;
        let refs: Vec<ReferencePoint> = (0..=cfg.n_p)
            .map(|k| path.sample(t0 + k as f64 * cfg.dt).unwrap())
            .collect();
        let r0 = refs[0];
        let chassis = ChassisState {
            x: r0.x,
            y: r0.y + 0.05,
            heading: r0.heading,
            v_x: r0.speed,
            v_y: 0.0,
            yaw_rate: 0.0,
            track_width: params.track_width0,
        };
        let wheels = WheelState::rolling(r0.speed, &params);
        let sol = solve(
            &chassis,
            &wheels,
            t0,
            &schedule,
            &refs,
            &params,
            Formulation::Physical,
            &cfg,
            0.005,
            None,
        )
        .unwrap();
        assert!(!sol.failed);
        assert!(sol.iterations > 0);

        // Open-loop replay with the same integrator and step.
        let mut c = chassis;
        let mut w = wheels;
        for k in 0..cfg.n_p {
            let u = ControlInput {
                u: sol.u_sequence[k.min(cfg.n_c - 1)],
            };
            let steer = ackermann_angles(
                refs[k].curvature,
                refs[k].direction,
                &params,
                schedule.track_width_at(t0 + k as f64 * cfg.dt),
            )
            .unwrap();
            for m in 0..10 {
                let t = t0 + k as f64 * cfg.dt + m as f64 * 0.005;
                let (cn, wn) = plant_step(
                    &params,
                    Formulation::Physical,
                    t,
                    0.005,
                    &c,
                    &w,
                    &u,
                    &steer,
                    |tt| schedule.track_width_at(tt),
                )
                .unwrap();
                c = cn;
                w = wn;
            }
            let predicted = sol.predicted[k + 1];
            let replayed = pack(&c, &w);
            for i in 0..10 {
                assert!(
                    (predicted[i] - replayed[i]).abs() <= 1e-9,
                    "step {k} component {i}: {} vs {}",
                    predicted[i],
                    replayed[i]
                );
            }
        }
    }

    /// A solve started off the reference must strictly decrease the cost
    /// and keep all inputs inside the box.
    #[test]
    fn solve_descends_and_projects() {
        let (params, cfg, schedule) = solve_ctx();
        let refs = straight_refs(cfg.n_p, cfg.dt, 2.0);
        let mut chassis = ChassisState::at_rest(&params);
        chassis.v_x = 1.0; // well below the 2 m/s reference
        let wheels = WheelState::rolling(1.0, &params);
        let sol = solve(
            &chassis,
            &wheels,
            0.0,
            &schedule,
            &refs,
            &params,
            Formulation::Physical,
            &cfg,
            0.005,
            None,
        )
        .unwrap();
        assert!(sol.iterations > 0);
        for w in sol.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for u in &sol.u_sequence {
            for v in u {
                assert!((cfg.u_min..=cfg.u_max).contains(v));
            }
        }
        assert!(sol.substeps > 0);
        assert!(
            (sol.modeled_time - sol.substeps as f64 * MODELED_SECONDS_PER_SUBSTEP).abs() < 1e-18
        );
    }

    /// Warm starts shift the previous plan and still solve cleanly.
    #[test]
    fn warm_start_shifts() {
        let (params, cfg, schedule) = solve_ctx();
        let refs = straight_refs(cfg.n_p, cfg.dt, 2.0);
        let mut chassis = ChassisState::at_rest(&params);
        chassis.v_x = 1.5;
        let wheels = WheelState::rolling(1.5, &params);
        let first = solve(
            &chassis,
            &wheels,
            0.0,
            &schedule,
            &refs,
            &params,
            Formulation::Physical,
            &cfg,
            0.005,
            None,
        )
        .unwrap();
        let refs2: Vec<ReferencePoint> = (0..=cfg.n_p)
            .map(|k| ReferencePoint {
                t: (k + 1) as f64 * cfg.dt,
                x: 2.0 * (k + 1) as f64 * cfg.dt,
                ..refs[0]
            })
            .collect();
        let warm = solve(
            &chassis,
            &wheels,
            cfg.dt,
            &schedule,
            &refs2,
            &params,
            Formulation::Physical,
            &cfg,
            0.005,
            Some(&first),
        )
        .unwrap();
        assert!(!warm.failed);
        assert!(warm.cost.is_finite());
    }
}
