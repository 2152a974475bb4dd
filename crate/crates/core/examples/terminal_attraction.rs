//! A robot that starts outside a region is pulled inside by a terminal
//! containment constraint, for each of the four primitives.

use nalgebra::DVector;
use sos_corridor::geometry::{box_region, make_primitive, Primitive};
use sos_corridor::scaling_sdp::ScalingProblem;
use sos_corridor::trajectory::{solve, AlSettings, Costs, DynamicsModel, ModelKind, ProblemSpec, Safety};

fn main() -> sos_corridor::Result<()> {
    let region = box_region(&[0.0, 0.0, 0.0], &[2.0, 2.0, 2.0])?;
    let shapes = [
        ("box", Primitive::Box { half_extents: vec![0.3, 0.2, 0.15] }, None),
        ("cylinder", Primitive::Cylinder { radius: 0.2, half_height: 0.3 }, None),
        ("ellipsoid", Primitive::Ellipsoid { semi_axes: vec![0.35, 0.2, 0.15] }, None),
        ("cone", Primitive::EllipticalCone { a: 0.25, b: 0.15, h: 0.3 }, Some(2)),
    ];
    let model = DynamicsModel::new(ModelKind::SpatialYawKinematic, 0.1)?;
    let horizon = 20;
    for (name, prim, order) in shapes {
        let problem = ScalingProblem::new(make_primitive(3, prim)?, region.clone(), order)?;
        let x0 = DVector::from_column_slice(&[2.4, -0.3, 1.0, 0.8]);
        let alpha0 = problem.solve(&model.config_of(&x0))?.alpha;
        let costs = Costs::diagonal(&[0.0; 4], &[1.0; 4], &[0.0; 4]);
        let mut spec = ProblemSpec::new(model, horizon, costs, x0.clone(), x0);
        spec.safety = Safety::Terminal(0);
        let traj = solve(&spec, &[problem], vec![DVector::zeros(4); horizon], &AlSettings::default())?;
        println!(
            "{name:>9}: alpha {alpha0:.3} -> {:.6} after {} outer iterations ({:?})",
            traj.alphas[horizon].unwrap_or(f64::NAN),
            traj.outer_iterations,
            traj.status
        );
    }
    Ok(())
}
