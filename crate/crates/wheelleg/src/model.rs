//! Continuous-time model of the chassis, wheels, and tires.
//!
//! Wheel numbering (index 0..3 maps to wheels 1..4): 1 front-left,
//! 2 rear-left, 3 front-right, 4 rear-right. Body frame: x forward,
//! y to the left, yaw counter-clockwise positive. Steering angles are
//! measured between a wheel's rolling direction and the body x axis;
//! front and rear wheels counter-steer (`delta2 = -delta1`,
//! `delta4 = -delta3`) so that all wheel axes meet in one turning center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::RobotParams;

/// Guard threshold for divisions by velocity-like quantities (m/s, rad/s).
/// Below it, slip quantities are reported as zero.
pub const EPS_GUARD: f64 = 1e-6;

/// Which form of the model equations to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// Self-consistent form: rotation-matrix force projection, per-corner
    /// yaw moment arms, decaying-exponential friction curve. Default.
    #[default]
    Physical,
    /// Literal transcription of the source equations (shared-sign lateral
    /// row, single-lever yaw moment, growing-exponential friction curve).
    /// Kept for formula-level comparison; not suitable for closed-loop use.
    Literal,
}

/// Planar chassis state: world pose plus body-frame velocities and the
/// current track width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChassisState {
    /// World position (m), east-positive.
    pub x: f64,
    /// World position (m), north-positive.
    pub y: f64,
    /// Heading (rad), wrapped to (-pi, pi].
    pub heading: f64,
    /// Body-frame longitudinal velocity (m/s).
    pub v_x: f64,
    /// Body-frame lateral velocity (m/s), left-positive.
    pub v_y: f64,
    /// Yaw rate (rad/s), counter-clockwise positive.
    pub yaw_rate: f64,
    /// Current track width (m), within `[d0, d0 + stretch_max]`.
    pub track_width: f64,
}

impl ChassisState {
    pub fn at_rest(params: &RobotParams) -> Self {
        ChassisState {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            v_x: 0.0,
            v_y: 0.0,
            yaw_rate: 0.0,
            track_width: params.track_width0,
        }
    }
}

/// Spin rate of each wheel (rad/s). Sign-free; reverse is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelState {
    pub omega: [f64; 4],
}

impl WheelState {
    /// Wheels rolling without slip at longitudinal speed `v_x`.
    pub fn rolling(v_x: f64, params: &RobotParams) -> Self {
        WheelState {
            omega: [v_x / params.wheel_radius; 4],
        }
    }
}

/// Per-wheel tire quantities for one evaluation instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TireState {
    /// Vertical load (N).
    pub load: [f64; 4],
    /// Longitudinal slip, in [-1, 1].
    pub slip: [f64; 4],
    /// Sideslip angle (rad).
    pub sideslip: [f64; 4],
    /// Combined slip `sqrt(slip^2 + tan(sideslip)^2)`.
    pub combined: [f64; 4],
    /// Force along the wheel's rolling direction (N).
    pub force_x: [f64; 4],
    /// Force perpendicular to the wheel's rolling direction (N).
    pub force_y: [f64; 4],
}

/// Motor command vector, one input unit per wheel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub u: [f64; 4],
}

impl ControlInput {
    /// Electromagnetic drive torque delivered at wheel `i` (N m).
    pub fn torque(&self, params: &RobotParams, i: usize) -> f64 {
        params.motor_gain[i] * self.u[i]
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// Angle of the corner diagonal relative to the lateral axis,
/// `arctan(l / d)`, using the current track width so the yaw lever
/// geometry follows the support-polygon adjustment.
pub fn lever_angle(params: &RobotParams, track_width: f64) -> Result<f64> {
    if !(params.wheelbase > 0.0) || !(track_width > 0.0) {
        return Err(Error::Domain(format!(
            "lever angle needs positive dimensions, got l={}, d={}",
            params.wheelbase, track_width
        )));
    }
    Ok((params.wheelbase / track_width).atan())
}

/// Ackermann steering angles for a turn of curvature `k` (1/m, magnitude)
/// in direction `direction` (+1 left, 0 straight, -1 right).
///
/// Front and rear wheels counter-steer so that all four wheel axes pass
/// through a single instantaneous turning center at lateral offset
/// `direction / k`. The direction signs the angles: left turns steer the
/// front wheels left, right turns steer them right.
pub fn ackermann_angles(
    k: f64,
    direction: i8,
    params: &RobotParams,
    track_width: f64,
) -> Result<[f64; 4]> {
    if !matches!(direction, -1 | 0 | 1) {
        return Err(Error::Domain(format!(
            "turn direction must be -1, 0, or 1, got {direction}"
        )));
    }
    let l = params.wheelbase;
    // Signed curvature; positive turns left.
    let kappa = k * f64::from(direction);
    let den_inner = 2.0 - track_width * kappa;
    let den_outer = 2.0 + track_width * kappa;
    if den_inner <= 0.0 || den_outer <= 0.0 {
        return Err(Error::Infeasible(format!(
            "turning radius {:.4} m is too tight for track width {:.3} m",
            if k > 0.0 { 1.0 / k } else { f64::INFINITY },
            track_width
        )));
    }
    let d1 = (l * kappa / den_inner).atan();
    let d3 = (l * kappa / den_outer).atan();
    Ok([d1, -d1, d3, -d3])
}

/// Sideslip angle of each wheel: the steering angle minus the direction of
/// the wheel's velocity over ground. Denominators smaller than
/// [`EPS_GUARD`] attribute zero slip (standstill).
pub fn sideslip_angles(state: &ChassisState, steer: &[f64; 4], params: &RobotParams) -> [f64; 4] {
    let l = params.wheelbase;
    let d = state.track_width;
    let w = state.yaw_rate;
    let num_front = 2.0 * state.v_y + l * w;
    let num_rear = 2.0 * state.v_y - l * w;
    let den_left = 2.0 * state.v_x - d * w;
    let den_right = 2.0 * state.v_x + d * w;
    let ratio = |num: f64, den: f64| if den.abs() < EPS_GUARD { 0.0 } else { num / den };
    [
        steer[0] - ratio(num_front, den_left),
        steer[1] - ratio(num_rear, den_left),
        steer[2] - ratio(num_front, den_right),
        steer[3] - ratio(num_rear, den_right),
    ]
}

/// Longitudinal slip of one wheel:
/// `(omega_w * r - v_x) / max(omega_w * r, v_x)`, clamped to [-1, 1].
/// Reports zero when both the wheel rim and the chassis are at standstill.
pub fn slip_ratio(omega_w: f64, v_x: f64, wheel_radius: f64) -> f64 {
    let rim = omega_w * wheel_radius;
    if rim.abs().max(v_x.abs()) < EPS_GUARD {
        return 0.0;
    }
    ((rim - v_x) / rim.max(v_x)).clamp(-1.0, 1.0)
}

/// Combined slip `sqrt(lambda^2 + tan(alpha)^2)`.
pub fn combined_slip(lambda: f64, alpha: f64) -> Result<f64> {
    if alpha.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Domain(format!(
            "sideslip angle {alpha} is outside (-pi/2, pi/2)"
        )));
    }
    Ok(combined_slip_raw(lambda, alpha))
}

#[inline]
fn combined_slip_raw(lambda: f64, alpha: f64) -> f64 {
    let t = alpha.tan();
    (lambda * lambda + t * t).sqrt()
}

/// Tire force law. Returns `(f_total, f_x, f_y)`: the friction-curve force
/// magnitude and its split along/across the wheel's rolling direction.
/// Below [`EPS_GUARD`] combined slip all three are zero.
pub fn tire_forces(
    load: f64,
    lambda: f64,
    alpha: f64,
    params: &RobotParams,
    mode: Formulation,
) -> Result<(f64, f64, f64)> {
    if load < 0.0 {
        return Err(Error::Domain(format!("vertical load {load} is negative")));
    }
    if alpha.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Domain(format!(
            "sideslip angle {alpha} is outside (-pi/2, pi/2)"
        )));
    }
    Ok(tire_forces_raw(load, lambda, alpha, params, mode))
}

#[inline]
pub(crate) fn tire_forces_raw(
    load: f64,
    lambda: f64,
    alpha: f64,
    params: &RobotParams,
    mode: Formulation,
) -> (f64, f64, f64) {
    let tan_a = alpha.tan();
    let s = (lambda * lambda + tan_a * tan_a).sqrt();
    if s < EPS_GUARD {
        return (0.0, 0.0, 0.0);
    }
    let (c1, c2, c3) = (params.tire_c1, params.tire_c2, params.tire_c3);
    let f_total = match mode {
        Formulation::Physical => load * (c1 * (1.0 - (-c2 * s).exp()) - c3 * s),
        Formulation::Literal => load * c1 * (1.0 - (c2 * s).exp()) - c3 * s,
    };
    (f_total, lambda / s * f_total, tan_a / s * f_total)
}

/// Spin acceleration of wheel `i` under motor input `u_i`, transmission
/// resistance, and tire reaction `f_x`.
pub fn wheel_derivative(
    params: &RobotParams,
    wheel: usize,
    u_i: f64,
    omega_w: f64,
    f_x: f64,
) -> f64 {
    let drive = params.motor_gain[wheel] * u_i;
    let resist = params.viscous_coeff * omega_w + params.coulomb_torque * signum0(omega_w);
    (drive - resist - f_x * params.wheel_radius) / params.wheel_inertia
}

/// Sign function with `signum0(0) = 0`, as used for Coulomb friction.
#[inline]
pub fn signum0(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

/// Body-frame acceleration `(dv_x, dv_y, d_yaw_rate)` of the chassis under
/// the given tire forces and steering angles.
pub fn chassis_derivative(
    state: &ChassisState,
    tires: &TireState,
    steer: &[f64; 4],
    params: &RobotParams,
    mode: Formulation,
) -> (f64, f64, f64) {
    let m = params.mass;
    let inertia = params.yaw_inertia;
    let w = state.yaw_rate;
    match mode {
        Formulation::Physical => {
            let half_l = 0.5 * params.wheelbase;
            let half_d = 0.5 * state.track_width;
            // Corner positions, wheel order FL, RL, FR, RR.
            let px = [half_l, -half_l, half_l, -half_l];
            let py = [half_d, half_d, -half_d, -half_d];
            let mut sum_fx = 0.0;
            let mut sum_fy = 0.0;
            let mut moment = 0.0;
            for i in 0..4 {
                let (sin_d, cos_d) = steer[i].sin_cos();
                let fbx = tires.force_x[i] * cos_d + tires.force_y[i] * sin_d;
                let fby = -tires.force_x[i] * sin_d + tires.force_y[i] * cos_d;
                sum_fx += fbx;
                sum_fy += fby;
                moment += px[i] * fby - py[i] * fbx;
            }
            (
                sum_fx / m + w * state.v_y,
                sum_fy / m - w * state.v_x,
                moment / inertia,
            )
        }
        Formulation::Literal => {
            let l = params.wheelbase;
            let d = state.track_width;
            let lever = (l / d).atan();
            let arm = 0.5 * (l * l + d * d).sqrt();
            let mut sum_fx = 0.0;
            let mut sum_fy = 0.0;
            let mut moment_sum = 0.0;
            for i in 0..4 {
                let (sin_d, cos_d) = steer[i].sin_cos();
                let (sin_dl, cos_dl) = (steer[i] - lever).sin_cos();
                sum_fx += tires.force_x[i] * cos_d + tires.force_y[i] * sin_d;
                sum_fy += tires.force_x[i] * sin_d + tires.force_y[i] * cos_d;
                moment_sum += tires.force_x[i] * cos_dl + tires.force_y[i] * sin_dl;
            }
            (
                sum_fx / m + w * state.v_y,
                sum_fy / m - w * state.v_x,
                arm * moment_sum / inertia,
            )
        }
    }
}

/// Evaluate the full per-wheel tire state for the given chassis and wheel
/// spin states. Loads are the static quarter-weight split.
pub fn tire_snapshot(
    state: &ChassisState,
    wheels: &WheelState,
    steer: &[f64; 4],
    params: &RobotParams,
    mode: Formulation,
) -> TireState {
    let load = params.wheel_load();
    let sideslip = sideslip_angles(state, steer, params);
    let mut t = TireState::default();
    for i in 0..4 {
        let lambda = slip_ratio(wheels.omega[i], state.v_x, params.wheel_radius);
        let (_, fx, fy) = tire_forces_raw(load, lambda, sideslip[i], params, mode);
        t.load[i] = load;
        t.slip[i] = lambda;
        t.sideslip[i] = sideslip[i];
        t.combined[i] = combined_slip_raw(lambda, sideslip[i]);
        t.force_x[i] = fx;
        t.force_y[i] = fy;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> RobotParams {
        RobotParams::default()
    }

    #[test]
    fn lever_angle_square_footprint() {
        // l = d gives exactly 45 degrees.
        let p = params();
        let a = lever_angle(&p, 1.2).unwrap();
        assert!((a - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn lever_angle_wide_track_limit() {
        let p = params();
        assert!(lever_angle(&p, 1e9).unwrap() < 1e-8);
    }

    #[test]
    fn lever_angle_frozen_value() {
        // arctan(1.5/1.0), frozen from a 40-digit evaluation.
        let mut p = params();
        p.wheelbase = 1.5;
        let a = lever_angle(&p, 1.0).unwrap();
        assert!((a - 0.982_793_723_247_329_1).abs() < 1e-15);
    }

    #[test]
    fn lever_angle_rejects_bad_dims() {
        let p = params();
        assert!(lever_angle(&p, 0.0).is_err());
        assert!(lever_angle(&p, -1.0).is_err());
    }

    #[test]
    fn ackermann_straight() {
        let p = params();
        assert_eq!(ackermann_angles(0.0, 0, &p, 1.2).unwrap(), [0.0; 4]);
    }

    #[test]
    fn ackermann_frozen_values() {
        // l=1.2, d=1.2, K=0.5, left turn; frozen from 40-digit evaluation.
        let p = params();
        let a = ackermann_angles(0.5, 1, &p, 1.2).unwrap();
        assert!((a[0] - 0.404_891_786_285_083_4).abs() < 1e-15);
        assert!((a[2] - 0.226_798_848_053_885_87).abs() < 1e-15);
        assert_eq!(a[1], -a[0]);
        assert_eq!(a[3], -a[2]);
    }

    #[test]
    fn ackermann_inner_steers_harder() {
        let p = params();
        for k in [0.05, 0.2, 0.5, 0.8] {
            let a = ackermann_angles(k, 1, &p, 1.2).unwrap();
            assert!(a[0].abs() >= a[2].abs());
        }
    }

    #[test]
    fn ackermann_right_turn_steers_right() {
        let p = params();
        let left = ackermann_angles(0.5, 1, &p, 1.2).unwrap();
        let right = ackermann_angles(0.5, -1, &p, 1.2).unwrap();
        // Mirrored turn: the inner/outer roles swap left-right.
        let swap = [2, 3, 0, 1];
        for i in 0..4 {
            assert_eq!(right[i], -left[swap[i]]);
        }
        assert!(right[0] < 0.0);
    }

    #[test]
    fn ackermann_infeasible_radius() {
        let p = params();
        // d*K = 2 makes the inner denominator zero.
        assert!(ackermann_angles(2.0 / 1.2, 1, &p, 1.2).is_err());
    }

    /// All four wheel axes must pass through one turning center.
    #[test]
    fn ackermann_axes_concurrent() {
        let p = params();
        let d = 1.2;
        let l = p.wheelbase;
        for k in [0.1, 0.3, 0.7] {
            let steer = ackermann_angles(k, 1, &p, d).unwrap();
            let px = [l / 2.0, -l / 2.0, l / 2.0, -l / 2.0];
            let py = [d / 2.0, d / 2.0, -d / 2.0, -d / 2.0];
            // Expected center for a left turn: (0, 1/K).
            let (cx, cy) = (0.0, 1.0 / k);
            for i in 0..4 {
                // Axle direction is the wheel heading rotated 90 degrees;
                // the center must lie on the axle line through the corner.
                let (sin_d, cos_d) = steer[i].sin_cos();
                let (ax, ay) = (-sin_d, cos_d);
                // Perpendicular distance from center to the axle line.
                let (rx, ry) = (cx - px[i], cy - py[i]);
                let cross = rx * ay - ry * ax;
                assert!(
                    cross.abs() < 1e-6,
                    "wheel {i} axis misses center by {cross:e} at K={k}"
                );
            }
        }
    }

    #[test]
    fn sideslip_straight_rolling() {
        let p = params();
        let mut st = ChassisState::at_rest(&p);
        st.v_x = 1.0;
        assert_eq!(sideslip_angles(&st, &[0.0; 4], &p), [0.0; 4]);
    }

    #[test]
    fn sideslip_lateral_drift() {
        let p = params();
        let mut st = ChassisState::at_rest(&p);
        st.v_x = 2.0;
        st.v_y = 0.1;
        let a = sideslip_angles(&st, &[0.0; 4], &p);
        for v in a {
            assert!((v + 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn sideslip_frozen_yaw_case() {
        // v_x=2, w=0.2, l=d=1.2; frozen from exact rational evaluation.
        let p = params();
        let mut st = ChassisState::at_rest(&p);
        st.v_x = 2.0;
        st.yaw_rate = 0.2;
        let a = sideslip_angles(&st, &[0.0; 4], &p);
        assert!((a[0] + 0.063_829_787_234_042_55).abs() < 1e-15);
        assert!((a[1] - 0.063_829_787_234_042_55).abs() < 1e-15);
        assert!((a[2] + 0.056_603_773_584_905_66).abs() < 1e-15);
        assert!((a[3] - 0.056_603_773_584_905_66).abs() < 1e-15);
    }

    #[test]
    fn sideslip_standstill_guard() {
        let p = params();
        let st = ChassisState::at_rest(&p);
        let steer = [0.3, -0.3, 0.2, -0.2];
        assert_eq!(sideslip_angles(&st, &steer, &p), steer);
    }

    #[test]
    fn slip_pure_rolling() {
        assert_eq!(slip_ratio(10.0, 1.0, 0.1), 0.0);
    }

    #[test]
    fn slip_spinning() {
        assert!((slip_ratio(20.0, 1.0, 0.1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn slip_locked_wheel() {
        assert_eq!(slip_ratio(0.0, 1.0, 0.1), -1.0);
    }

    #[test]
    fn slip_standstill() {
        assert_eq!(slip_ratio(0.0, 0.0, 0.1), 0.0);
    }

    #[test]
    fn combined_slip_values() {
        assert_eq!(combined_slip(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(combined_slip(0.3, 0.0).unwrap(), 0.3);
        // Frozen from a 40-digit evaluation of sqrt(0.09 + tan(0.1)^2).
        assert!((combined_slip(0.3, 0.1).unwrap() - 0.316_333_757_955_888_9).abs() < 1e-15);
        assert!(combined_slip(0.0, 1.6).is_err());
    }

    #[test]
    fn tire_zero_slip_zero_force() {
        let p = params();
        assert_eq!(
            tire_forces(681.6, 0.0, 0.0, &p, Formulation::Physical).unwrap(),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn tire_frozen_longitudinal_case() {
        // F_z=681.6, lambda=0.2, alpha=0, dry asphalt defaults.
        // Frozen from a 40-digit evaluation: 794.4347971616783.
        let p = params();
        let (ft, fx, fy) = tire_forces(681.6, 0.2, 0.0, &p, Formulation::Physical).unwrap();
        assert!((ft - 794.434_797_161_678_3).abs() < 1e-9);
        assert_eq!(fx, ft);
        assert_eq!(fy, 0.0);
    }

    #[test]
    fn tire_literal_mode_diverges() {
        // The literal growing-exponential form explodes at moderate slip;
        // frozen value -104935.56302597310 documents that behavior.
        let p = params();
        let (ft, _, _) = tire_forces(681.6, 0.2, 0.0, &p, Formulation::Literal).unwrap();
        assert!((ft + 104_935.563_025_973_1).abs() < 1e-6);
    }

    #[test]
    fn tire_pure_lateral() {
        let p = params();
        let (_, fx, fy) = tire_forces(681.6, 0.0, 0.1, &p, Formulation::Physical).unwrap();
        assert_eq!(fx, 0.0);
        assert!(fy > 0.0);
        let (_, _, fy_neg) = tire_forces(681.6, 0.0, -0.1, &p, Formulation::Physical).unwrap();
        assert!(fy_neg < 0.0);
    }

    #[test]
    fn tire_negative_load_rejected() {
        let p = params();
        assert!(tire_forces(-1.0, 0.1, 0.0, &p, Formulation::Physical).is_err());
    }

    #[test]
    fn wheel_torque_balance() {
        let mut p = params();
        p.motor_gain = [1.5; 4];
        // Drive torque exactly cancels the tire reaction at standstill.
        let f_x = 1.5 * 2.0 / p.wheel_radius;
        assert_eq!(wheel_derivative(&p, 0, 2.0, 0.0, f_x), 0.0);
    }

    #[test]
    fn wheel_coast_no_resistance() {
        let mut p = params();
        p.viscous_coeff = 0.0;
        p.coulomb_torque = 0.0;
        assert_eq!(wheel_derivative(&p, 0, 0.0, 3.0, 0.0), 0.0);
    }

    #[test]
    fn wheel_frozen_arithmetic() {
        // k=15, u=2, resistance 1 (viscous at w=2 with b=0.25, coulomb 0.5),
        // F_x=50, r=0.1, J=0.5 -> (30 - 1 - 5)/0.5 = 48.
        let mut p = params();
        p.motor_gain = [15.0; 4];
        p.viscous_coeff = 0.25;
        p.coulomb_torque = 0.5;
        p.wheel_radius = 0.1;
        p.wheel_inertia = 0.5;
        assert!((wheel_derivative(&p, 1, 2.0, 2.0, 50.0) - 48.0).abs() < 1e-12);
    }

    #[test]
    fn chassis_all_zero() {
        let p = params();
        let st = ChassisState::at_rest(&p);
        let t = TireState::default();
        let d = chassis_derivative(&st, &t, &[0.0; 4], &p, Formulation::Physical);
        assert_eq!(d, (0.0, 0.0, 0.0));
    }

    #[test]
    fn chassis_coriolis_only() {
        let p = params();
        let mut st = ChassisState::at_rest(&p);
        st.v_x = 1.0;
        st.yaw_rate = 0.5;
        let t = TireState::default();
        for mode in [Formulation::Physical, Formulation::Literal] {
            let (ax, ay, aw) = chassis_derivative(&st, &t, &[0.0; 4], &p, mode);
            assert_eq!(ax, 0.0);
            assert!((ay + 0.5).abs() < 1e-15);
            assert_eq!(aw, 0.0);
        }
    }

    #[test]
    fn chassis_symmetric_drive() {
        // Four equal longitudinal forces of 69.5 N on a 278 kg chassis
        // accelerate it at exactly 1 m/s^2 with zero yaw moment.
        let p = params();
        let mut st = ChassisState::at_rest(&p);
        st.v_x = 1.0;
        st.yaw_rate = 0.3;
        let mut t = TireState::default();
        t.force_x = [69.5; 4];
        let (ax, ay, aw) = chassis_derivative(&st, &t, &[0.0; 4], &p, Formulation::Physical);
        assert!((ax - 1.0).abs() < 1e-15);
        assert!((ay + 0.3).abs() < 1e-15);
        assert_eq!(aw, 0.0);
    }

    #[test]
    fn literal_mode_symmetric_drive_has_yaw_bias() {
        // The literal single-lever yaw row does not cancel for symmetric
        // straight driving; this is exactly why the physical form is the
        // closed-loop default.
        let p = params();
        let mut st = ChassisState::at_rest(&p);
        st.v_x = 1.0;
        let mut t = TireState::default();
        t.force_x = [69.5; 4];
        let (_, _, aw) = chassis_derivative(&st, &t, &[0.0; 4], &p, Formulation::Literal);
        assert!(aw.abs() > 1e-3);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.1) + 0.1).abs() < 1e-15);
        assert!((wrap_angle(7.0) - (7.0 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn slip_always_in_unit_interval(omega in -100.0..100.0f64, v in -5.0..5.0f64) {
            let s = slip_ratio(omega, v, 0.1);
            prop_assert!((-1.0..=1.0).contains(&s));
        }

        #[test]
        fn slip_zero_at_pure_rolling(omega in 0.1..50.0f64) {
            // Rim speed computed exactly as the implementation does.
            let v = omega * 0.1;
            prop_assert_eq!(slip_ratio(omega, v, 0.1), 0.0);
        }

        /// The force split is Pythagorean: f_x^2 + f_y^2 = f_total^2.
        #[test]
        fn tire_split_is_pythagorean(
            load in 0.0..5000.0f64,
            lambda in -1.0..1.0f64,
            alpha in -1.2..1.2f64,
        ) {
            let p = params();
            let (ft, fx, fy) = tire_forces(load, lambda, alpha, &p, Formulation::Physical).unwrap();
            let lhs = (fx * fx + fy * fy).sqrt();
            prop_assert!((lhs - ft.abs()).abs() <= 1e-9 * lhs.abs().max(1.0));
        }

        /// Mirroring the motion state left-right (which also swaps the left
        /// and right wheels) negates the lateral and yaw accelerations and
        /// preserves the longitudinal one.
        #[test]
        fn chassis_mirror_symmetry(
            v_x in -3.0..3.0f64,
            v_y in -1.0..1.0f64,
            w in -1.0..1.0f64,
            d in 1.2..1.7f64,
            steer_f in -0.5..0.5f64,
            steer_r in -0.5..0.5f64,
            fx in proptest::array::uniform4(-500.0..500.0f64),
            fy in proptest::array::uniform4(-500.0..500.0f64),
        ) {
            let p = params();
            let mut st = ChassisState::at_rest(&p);
            st.v_x = v_x;
            st.v_y = v_y;
            st.yaw_rate = w;
            st.track_width = d;
            let steer = [steer_f, -steer_f, steer_r, -steer_r];
            let mut tires = TireState::default();
            tires.force_x = fx;
            tires.force_y = fy;
            let (ax, ay, aw) = chassis_derivative(&st, &tires, &steer, &p, Formulation::Physical);

            // Mirror: negate lateral state, swap left/right wheels (0<->2, 1<->3).
            let swap = [2usize, 3, 0, 1];
            let mut st_m = st;
            st_m.v_y = -v_y;
            st_m.yaw_rate = -w;
            let mut steer_m = [0.0; 4];
            let mut tires_m = TireState::default();
            for i in 0..4 {
                steer_m[i] = -steer[swap[i]];
                tires_m.force_x[i] = fx[swap[i]];
                tires_m.force_y[i] = -fy[swap[i]];
            }
            let (bx, by, bw) = chassis_derivative(&st_m, &tires_m, &steer_m, &p, Formulation::Physical);
            prop_assert!((ax - bx).abs() < 1e-9);
            prop_assert!((ay + by).abs() < 1e-9);
            prop_assert!((aw + bw).abs() < 1e-9);
        }
    }
}
