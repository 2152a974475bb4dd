//! Rasterize a map and cover its free space with convex regions.
//!
//! Usage: decompose_map [scenario.json] [regions.json]

use std::path::PathBuf;

use sos_corridor::freespace::{coverage, decompose, rasterize, save_regions, DecomposeSettings};
use sos_corridor::scenario::Scenario;

fn main() -> sos_corridor::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/random_20.json")
    });
    let s = Scenario::load(&path)?;
    let ws = &s.workspace;
    let grid = rasterize(&s.obstacles, &ws.lower, &ws.upper, ws.resolution)?;
    let settings = DecomposeSettings { coverage_threshold: s.coverage_threshold, seed: s.seed, ..Default::default() };
    let d = decompose(&grid, &settings)?;
    println!(
        "{} cells ({} free), {} regions, uncovered fraction {:.4}, {:?}",
        grid.num_cells(),
        grid.free_cells().count(),
        d.regions.len(),
        d.uncovered_fraction,
        d.status
    );
    println!("coverage {:.4}", coverage(&grid, &d.regions));
    for (k, r) in d.regions.regions.iter().enumerate().take(5) {
        println!("region {k}: {} facets, inscribed radius {:.3}", r.num_facets(), r.g().min());
    }
    if let Some(out) = args.next() {
        save_regions(&PathBuf::from(&out), &d.regions)?;
        println!("wrote {out}");
    }
    Ok(())
}
