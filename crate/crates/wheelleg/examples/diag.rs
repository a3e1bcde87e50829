use wheelleg::mpc::MpcConfig;
use wheelleg::sim::{compute_metrics, run_closed_loop_with, ScenarioConfig};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let c: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let sc = ScenarioConfig {
        name: format!("line1-{n}-{c}"),
        controller: MpcConfig {
            n_p: n, n_c: c,
            tolerance: std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(1e-4),
            max_iterations: std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(40),
            ..MpcConfig::default()
        },
        duration: 16.5,
        ..ScenarioConfig::default()
    };
    let mut iters = Vec::new();
    let log = run_closed_loop_with(&sc, |ci| {
        iters.push(ci.solution.iterations);
        if ci.index % 40 == 0 {
            println!(
                "cycle {:3} t={:5.2} iters={:2} cost={:.4e} wall={:.1}ms",
                ci.index, ci.t, ci.solution.iterations, ci.solution.cost,
                ci.solution.solve_time * 1e3
            );
        }
    })
    .unwrap();
    let m = compute_metrics(&log, 0.05).unwrap();
    println!("max|Xe|={:.4} m  max|Ye|={:.4} m  max|yaw_e|={:.3} deg", m.max_x_error, m.max_y_error, m.max_yaw_error_deg);
    println!("mean modeled solve={:.4} ms  mean wall={:.4} ms  total iters={}",
        m.mean_solve_time*1e3,
        log.cycle_wall_times.iter().sum::<f64>() / log.cycle_wall_times.len() as f64 * 1e3,
        iters.iter().sum::<usize>());
    println!("failures={} status={:?}", log.solver_failures.len(), log.status());
}
