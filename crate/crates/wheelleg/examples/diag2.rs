use wheelleg::behavior::BehaviorSchedule;
use wheelleg::model::{ChassisState, Formulation, WheelState};
use wheelleg::mpc::{solve, MpcConfig};
use wheelleg::params::RobotParams;
use wheelleg::reference::ReferencePoint;

fn main() {
    let params = RobotParams::default();
    let cfg = MpcConfig { n_p: 10, n_c: 4, max_iterations: 10, ..MpcConfig::default() };
    let schedule = BehaviorSchedule::single_track(60.0, params.track_width0);
    let refs: Vec<ReferencePoint> = (0..=cfg.n_p)
        .map(|k| ReferencePoint {
            t: k as f64 * cfg.dt, x: 2.0 * k as f64 * cfg.dt, y: 0.0,
            heading: 0.0, speed: 2.0, curvature: 0.0, direction: 0,
        })
        .collect();
    let mut chassis = ChassisState::at_rest(&params);
    chassis.v_x = 2.0;
    let wheels = WheelState::rolling(2.0, &params);

    // Evaluate the solve and look at history detail
    let sol = solve(&chassis, &wheels, 0.0, &schedule, &refs, &params,
        Formulation::Physical, &cfg, 0.005, None).unwrap();
    println!("iters={} cost={:.6e}", sol.iterations, sol.cost);
    println!("history: {:?}", sol.cost_history.iter().map(|c| format!("{c:.6e}")).collect::<Vec<_>>());
    println!("u0={:?}", sol.u_sequence[0]);
    println!("u3={:?}", sol.u_sequence[3]);
}
