//! Region graph, shortest region sequence and waypoint allocation.

use sos_corridor::freespace::{decompose, rasterize, DecomposeSettings, Obstacle};
use sos_corridor::geometry::{make_primitive, Configuration, Primitive};
use sos_corridor::region_graph::{allocate_waypoints, build_graph, shortest_sequence};

fn main() -> sos_corridor::Result<()> {
    let obstacles = vec![
        Obstacle::Box { min: vec![1.0, 0.0], max: vec![1.2, 1.4] },
        Obstacle::Box { min: vec![2.2, 0.6], max: vec![2.4, 2.0] },
    ];
    let grid = rasterize(&obstacles, &[0.0, 0.0], &[3.4, 2.0], 0.1)?;
    let regions = decompose(&grid, &DecomposeSettings { coverage_threshold: 0.0, ..Default::default() })?.regions;
    let graph = build_graph(&regions, 0.05);
    println!("{} regions, {} edges, {} component(s)", regions.len(), graph.edges().len(), graph.components());

    let robot = make_primitive(2, Primitive::Ellipsoid { semi_axes: vec![0.2, 0.1] })?;
    let q_s = Configuration::planar(0.4, 0.4, 0.0);
    let q_g = Configuration::planar(3.0, 1.6, 0.0);
    let path = shortest_sequence(&graph, &regions, &robot, None, &q_s, &q_g)?;
    println!("sequence {:?}, length {:.3}", path.region_sequence, path.total_length);
    let allocation = allocate_waypoints(&path, &regions, 20)?;
    for e in allocation.entries.iter().step_by(4) {
        println!("tau {:>2}: ({:.2}, {:.2}) in region {}", e.tau, e.point[0], e.point[1], e.region_index);
    }
    Ok(())
}
