//! Minimum scaling factor of a region that still contains the posed robot,
//! and its gradient with respect to the pose.

use std::f64::consts::FRAC_PI_4;

use sos_corridor::geometry::{box_region, make_primitive, Configuration, Primitive};
use sos_corridor::scaling_sdp::{min_relaxation_order, ScalingProblem};

fn main() -> sos_corridor::Result<()> {
    let robot = make_primitive(2, Primitive::Box { half_extents: vec![0.5, 0.25] })?;
    let region = box_region(&[0.0, 0.0], &[3.0, 2.0])?;
    println!("minimum relaxation order {}", min_relaxation_order(&robot));
    let problem = ScalingProblem::new(robot, region, None)?;
    println!(
        "{} equality rows per facet, blocks per facet {:?}",
        problem.rows_per_facet(),
        problem.block_dims_per_facet()
    );

    for q in [
        Configuration::planar(1.5, 1.0, 0.0),
        Configuration::planar(1.5, 1.0, FRAC_PI_4),
        Configuration::planar(2.6, 1.0, 0.3),
    ] {
        let sol = problem.solve(&q)?;
        let grad = problem.gradient(&q, &sol)?;
        println!(
            "q = {:?}: alpha = {:.6} ({}), d alpha / dq = {:?}{}",
            q.values(),
            sol.alpha,
            if sol.alpha <= 1.0 { "contained" } else { "sticks out" },
            grad.dalpha_dq.iter().map(|g| format!("{g:+.4}")).collect::<Vec<_>>(),
            if grad.degenerate { " (several facets active)" } else { "" }
        );
    }
    Ok(())
}
