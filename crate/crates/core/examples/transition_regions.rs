//! A corner where the straight line between two region centers clips an
//! obstacle gets an extra region grown from their overlap.

use sos_corridor::freespace::{rasterize, Obstacle, Provenance, RegionSet};
use sos_corridor::geometry::box_region;
use sos_corridor::region_graph::{
    allocate_waypoints, build_graph, insert_transition_regions, needs_transition, sequence_between, TransitionSettings,
};

fn main() -> sos_corridor::Result<()> {
    let grid = rasterize(&[Obstacle::Box { min: vec![0.0, 1.0], max: vec![3.0, 4.0] }], &[0.0, 0.0], &[4.0, 4.0], 0.1)?;
    let regions = RegionSet {
        regions: vec![box_region(&[0.0, 0.0], &[4.0, 1.0])?, box_region(&[3.0, 0.0], &[4.0, 4.0])?],
        provenance: Provenance::Loaded,
    };
    let graph = build_graph(&regions, 0.05);
    let settings = TransitionSettings::default();
    println!("center segment leaves both regions: {}", needs_transition(&regions, 0, 1, &settings));

    let path = sequence_between(&graph, &[0.5, 0.5], &[3.5, 3.5], &[0], &[1])?;
    let allocation = allocate_waypoints(&path, &regions, 24)?;
    let out = insert_transition_regions(&path, &allocation, &regions, &graph, &grid, &settings)?;
    println!("inserted {:?}; sequence now {:?}", out.inserted, out.path.region_sequence);
    let new = &out.regions.regions[out.regions.len() - 1];
    println!("new region has {} facets, origin {:?}", new.num_facets(), new.origin().as_slice());
    println!("allocation {:?}", out.allocation.regions());
    Ok(())
}
