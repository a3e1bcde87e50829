//! Fixed-step plant integrator for the coupled chassis/wheel dynamics.
//!
//! The full plant state is ten floats: world pose (x, y, heading),
//! body velocities (v_x, v_y, yaw rate), and four wheel spin rates.
//! Track width is not integrated; it is an exogenous, piecewise-linear
//! function of time supplied by the behavior schedule.

use crate::error::{Error, Result};
use crate::model::{
    chassis_derivative, sideslip_angles, slip_ratio, tire_forces_raw, wheel_derivative,
    wrap_angle, ChassisState, ControlInput, Formulation, TireState, WheelState,
};
use crate::params::RobotParams;

pub const STATE_DIM: usize = 10;

/// Flat state vector layout used by the integrator and the predictor.
pub type StateVec = [f64; STATE_DIM];

pub fn pack(chassis: &ChassisState, wheels: &WheelState) -> StateVec {
    [
        chassis.x,
        chassis.y,
        chassis.heading,
        chassis.v_x,
        chassis.v_y,
        chassis.yaw_rate,
        wheels.omega[0],
        wheels.omega[1],
        wheels.omega[2],
        wheels.omega[3],
    ]
}

pub fn unpack(s: &StateVec, track_width: f64) -> (ChassisState, WheelState) {
    (
        ChassisState {
            x: s[0],
            y: s[1],
            heading: s[2],
            v_x: s[3],
            v_y: s[4],
            yaw_rate: s[5],
            track_width,
        },
        WheelState {
            omega: [s[6], s[7], s[8], s[9]],
        },
    )
}

/// Steering trigonometry shared by all dynamics evaluations of one step.
pub(crate) struct SteerTrig {
    sin: [f64; 4],
    cos: [f64; 4],
}

impl SteerTrig {
    pub(crate) fn new(steer: &[f64; 4]) -> SteerTrig {
        let mut sin = [0.0; 4];
        let mut cos = [0.0; 4];
        for i in 0..4 {
            let (s, c) = steer[i].sin_cos();
            sin[i] = s;
            cos[i] = c;
        }
        SteerTrig { sin, cos }
    }
}

/// Time derivative of the flat state under fixed steering and motor input,
/// at track width `d`.
pub(crate) fn dynamics(
    params: &RobotParams,
    mode: Formulation,
    steer: &[f64; 4],
    trig: &SteerTrig,
    u: &[f64; 4],
    d: f64,
    s: &StateVec,
    out: &mut StateVec,
) {
    let chassis = ChassisState {
        x: s[0],
        y: s[1],
        heading: s[2],
        v_x: s[3],
        v_y: s[4],
        yaw_rate: s[5],
        track_width: d,
    };
    let load = params.wheel_load();
    let alpha = sideslip_angles(&chassis, steer, params);
    let mut tires = TireState::default();
    for i in 0..4 {
        let lambda = slip_ratio(s[6 + i], chassis.v_x, params.wheel_radius);
        let (_, fx, fy) = tire_forces_raw(load, lambda, alpha[i], params, mode);
        tires.force_x[i] = fx;
        tires.force_y[i] = fy;
    }
    let (acc_x, acc_y, acc_yaw) = match mode {
        // Same expressions as `chassis_derivative`, with the per-step
        // steering trig hoisted out of the hot loop.
        Formulation::Physical => {
            let half_l = 0.5 * params.wheelbase;
            let half_d = 0.5 * d;
            let px = [half_l, -half_l, half_l, -half_l];
            let py = [half_d, half_d, -half_d, -half_d];
            let mut sum_fx = 0.0;
            let mut sum_fy = 0.0;
            let mut moment = 0.0;
            for i in 0..4 {
                let fbx = tires.force_x[i] * trig.cos[i] + tires.force_y[i] * trig.sin[i];
                let fby = -tires.force_x[i] * trig.sin[i] + tires.force_y[i] * trig.cos[i];
                sum_fx += fbx;
                sum_fy += fby;
                moment += px[i] * fby - py[i] * fbx;
            }
            (
                sum_fx / params.mass + chassis.yaw_rate * chassis.v_y,
                sum_fy / params.mass - chassis.yaw_rate * chassis.v_x,
                moment / params.yaw_inertia,
            )
        }
        Formulation::Literal => chassis_derivative(&chassis, &tires, steer, params, mode),
    };
    let (sin_h, cos_h) = chassis.heading.sin_cos();
    out[0] = chassis.v_x * cos_h - chassis.v_y * sin_h;
    out[1] = chassis.v_x * sin_h + chassis.v_y * cos_h;
    out[2] = chassis.yaw_rate;
    out[3] = acc_x;
    out[4] = acc_y;
    out[5] = acc_yaw;
    for i in 0..4 {
        out[6 + i] = wheel_derivative(params, i, u[i], s[6 + i], tires.force_x[i]);
    }
}

/// Advance the coupled chassis/wheel state by one classical 4th-order
/// Runge-Kutta step of length `dt` starting at absolute time `t`.
///
/// `track_width` is sampled at `t`, `t + dt/2`, and `t + dt`; the returned
/// chassis carries the end-of-step width. Identical inputs produce
/// bit-identical outputs.
pub fn plant_step(
    params: &RobotParams,
    mode: Formulation,
    t: f64,
    dt: f64,
    chassis: &ChassisState,
    wheels: &WheelState,
    input: &ControlInput,
    steer: &[f64; 4],
    track_width: impl Fn(f64) -> f64,
) -> Result<(ChassisState, WheelState)> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {dt}")));
    }
    let d_start = track_width(t);
    let d_mid = track_width(t + 0.5 * dt);
    let d_end = track_width(t + dt);

    let s0 = pack(chassis, wheels);
    let trig = SteerTrig::new(steer);
    let mut k1 = [0.0; STATE_DIM];
    let mut k2 = [0.0; STATE_DIM];
    let mut k3 = [0.0; STATE_DIM];
    let mut k4 = [0.0; STATE_DIM];
    let mut tmp = [0.0; STATE_DIM];

    dynamics(params, mode, steer, &trig, &input.u, d_start, &s0, &mut k1);
    for i in 0..STATE_DIM {
        tmp[i] = s0[i] + 0.5 * dt * k1[i];
    }
    dynamics(params, mode, steer, &trig, &input.u, d_mid, &tmp, &mut k2);
    for i in 0..STATE_DIM {
        tmp[i] = s0[i] + 0.5 * dt * k2[i];
    }
    dynamics(params, mode, steer, &trig, &input.u, d_mid, &tmp, &mut k3);
    for i in 0..STATE_DIM {
        tmp[i] = s0[i] + dt * k3[i];
    }
    dynamics(params, mode, steer, &trig, &input.u, d_end, &tmp, &mut k4);

    let mut s1 = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        s1[i] = s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if s1.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration {
            t: t + dt,
            detail: format!("non-finite state after step: {s1:?}"),
        });
    }
    s1[2] = wrap_angle(s1[2]);
    Ok(unpack(&s1, d_end))
}
