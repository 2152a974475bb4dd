//! Certificates for many poses at once, solved in parallel.

use std::time::Instant;

use sos_corridor::geometry::{box_region, make_primitive, Configuration, Primitive};
use sos_corridor::scaling_sdp::ScalingProblem;

fn main() -> sos_corridor::Result<()> {
    let robot = make_primitive(3, Primitive::Cylinder { radius: 0.2, half_height: 0.3 })?;
    let region = box_region(&[0.0, 0.0, 0.0], &[2.0, 1.0, 1.0])?;
    let problem = ScalingProblem::new(robot, region, None)?;
    let poses: Vec<Configuration> = (0..=32)
        .map(|k| {
            let t = k as f64 / 32.0;
            Configuration::spatial(0.1 + 1.8 * t, 0.5, 0.5, 3.0 * t)
        })
        .collect();
    let clock = Instant::now();
    let results = problem.batch_solve(&poses);
    let elapsed = clock.elapsed();
    for (q, r) in poses.iter().zip(&results).step_by(4) {
        let (sol, grad) = r.as_ref().map_err(|e| sos_corridor::Error::NumericalTrouble(e.to_string()))?;
        println!("x = {:.3}: alpha = {:.4}, d alpha / dx = {:+.4}", q.values()[0], sol.alpha, grad.dalpha_dq[0]);
    }
    println!("{} solves in {:.1} ms", poses.len(), elapsed.as_secs_f64() * 1e3);
    Ok(())
}
