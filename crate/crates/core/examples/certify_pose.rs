//! Certificate for one pose of a scenario's robot, as the `certify`
//! subcommand prints it.
//!
//! Usage: certify_pose [scenario.json] [comma-separated pose]

use std::path::PathBuf;

use sos_corridor::pipeline::certify;
use sos_corridor::scenario::Scenario;

fn main() -> sos_corridor::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/rotated_square.json")
    });
    let s = Scenario::load(&path)?;
    let pose: Vec<f64> = match args.next() {
        Some(text) => text
            .split(',')
            .map(|v| v.trim().parse().map_err(|e| sos_corridor::Error::InvalidInput(format!("{v}: {e}"))))
            .collect::<Result<_, _>>()?,
        None => s.start.clone(),
    };
    let record = certify(&s, &pose, None, 20)?;
    println!("{}", serde_json::to_string_pretty(&record).expect("serializes"));
    Ok(())
}
