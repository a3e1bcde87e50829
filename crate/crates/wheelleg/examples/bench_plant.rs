use std::time::Instant;
use wheelleg::model::*;
use wheelleg::params::RobotParams;
use wheelleg::plant::plant_step;

fn main() {
    let p = RobotParams::default();
    let mut c = ChassisState::at_rest(&p);
    c.v_x = 2.0;
    let mut w = WheelState::rolling(2.0, &p);
    let input = ControlInput { u: [1.0; 4] };
    let steer = [0.05, -0.05, 0.04, -0.04];
    let n = 2_000_000usize;
    let t0 = Instant::now();
    let mut t = 0.0;
    for _ in 0..n {
        let (cn, wn) = plant_step(&p, Formulation::Physical, t, 0.005, &c, &w, &input, &steer, |_| 1.2).unwrap();
        c = cn; w = wn; t += 0.005;
        if c.v_x > 2.5 { c.v_x = 2.0; }  // keep bounded
    }
    let dt = t0.elapsed();
    println!("{} substeps in {:?} -> {:.0} ns/substep, x={}", n, dt, dt.as_nanos() as f64 / n as f64, c.x);
}
