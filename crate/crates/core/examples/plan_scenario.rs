//! Full pipeline on a scenario file, writing artifacts and an SVG.
//!
//! Usage: plan_scenario [scenario.json] [out-dir]

use std::path::PathBuf;

use sos_corridor::pipeline::{plan, write_artifacts};
use sos_corridor::plot::plot_dir;
use sos_corridor::scenario::Scenario;

fn main() -> sos_corridor::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/small_maze.json")
    });
    let out_dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("sos-corridor-plan"));
    let s = Scenario::load(&path)?;
    let out = plan(&s)?;
    write_artifacts(&out_dir, &s, &out)?;
    plot_dir(&out_dir, &out_dir.join("plot.svg"))?;

    let t = &out.trajectory;
    println!("{}: {:?}", s.name, t.status);
    println!("regions {}, sequence {:?}, transitions {:?}", out.regions.len(), out.path.region_sequence, out.transitions);
    println!(
        "outer iterations {}, iLQR iterations {}, cost {:.3}, violation {:.2e}",
        t.outer_iterations, t.ilqr_iterations, t.cost, t.violation
    );
    let worst = t.alphas.iter().flatten().fold(0.0f64, |a, b| a.max(*b));
    println!("largest alpha {worst:.6}");
    println!("timings {:?}", out.timings);
    println!("artifacts in {}", out_dir.display());
    Ok(())
}
