//! End-to-end planning: map -> regions -> graph -> allocation -> trajectory.

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freespace::{decompose, rasterize, regions_to_json, DecomposeSettings, DecompositionStatus, OccupancyGrid, RegionSet};
use crate::region_graph::{
    allocate_waypoints, build_graph, insert_transition_regions, shortest_sequence, Allocation, PathResult, RegionGraph,
    TransitionSettings,
};
use crate::scaling_sdp::ScalingProblem;
use crate::scenario::{SafetyMode, Scenario};
use crate::trajectory::{initial_guess, solve, AlSettings, ProblemSpec, Safety, SolveStatus, Trajectory};

/// Wall time per stage in seconds.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Timings {
    pub map_processing: f64,
    pub graph: f64,
    pub allocation: f64,
    pub optimization: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.map_processing + self.graph + self.allocation + self.optimization
    }
}

#[derive(Debug)]
pub struct PlanOutput {
    pub grid: OccupancyGrid,
    /// Present when the regions came from decomposing the map.
    pub decomposition: Option<(DecompositionStatus, f64)>,
    pub regions: RegionSet,
    pub graph: RegionGraph,
    pub path: PathResult,
    pub allocation: Allocation,
    /// `(previous, next, inserted)` region triples.
    pub transitions: Vec<(usize, usize, usize)>,
    pub trajectory: Trajectory,
    pub timings: Timings,
}

impl PlanOutput {
    pub fn succeeded(&self) -> bool {
        self.trajectory.status == SolveStatus::Converged
    }

    /// Region assigned to each step.
    pub fn step_regions(&self) -> Vec<usize> {
        self.allocation.regions()
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs the whole pipeline. Non-convergence of the optimizer is reported
/// through the trajectory status, not as an error.
pub fn plan(s: &Scenario) -> Result<PlanOutput> {
    s.validate()?;
    with_threads(s.threads, || plan_inner(s))?
}

fn plan_inner(s: &Scenario) -> Result<PlanOutput> {
    let mut timings = Timings::default();
    let shape = s.shape()?;
    let model = s.model()?;
    let (q_s, q_g) = (s.start_config(), s.goal_config());

    let clock = Instant::now();
    let ws = &s.workspace;
    let grid = rasterize(&s.obstacles, &ws.lower, &ws.upper, ws.resolution)?;
    let settings = DecomposeSettings {
        coverage_threshold: s.coverage_threshold,
        seed: s.seed,
        max_regions: s.max_regions,
        ..Default::default()
    };
    let (mut regions, mut decomposition) = match s.explicit_regions()? {
        Some(r) => (r, None),
        None => {
            let d = decompose(&grid, &settings)?;
            (d.regions, Some((d.status, d.uncovered_fraction)))
        }
    };
    if regions.is_empty() {
        return Err(Error::Decomposition("no free regions were found".into()));
    }
    timings.map_processing = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut graph = build_graph(&regions, s.overlap_threshold);
    timings.graph = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut path = shortest_sequence(&graph, &regions, &shape, s.relaxation_order, &q_s, &q_g);
    // Narrow passages can fall under the coverage threshold; if the cells
    // connect start and goal, cover everything and try again.
    let retry = matches!(path, Err(Error::Unreachable | Error::NoEnclosingRegion { .. }))
        && decomposition.is_some()
        && settings.coverage_threshold > 0.0
        && grid.free_path_exists(q_s.position(), q_g.position());
    if retry {
        let map_clock = Instant::now();
        let d = decompose(&grid, &DecomposeSettings { coverage_threshold: 0.0, ..settings })?;
        regions = d.regions;
        decomposition = Some((d.status, d.uncovered_fraction));
        timings.map_processing += map_clock.elapsed().as_secs_f64();
        let graph_clock = Instant::now();
        graph = build_graph(&regions, s.overlap_threshold);
        timings.graph += graph_clock.elapsed().as_secs_f64();
        path = shortest_sequence(&graph, &regions, &shape, s.relaxation_order, &q_s, &q_g);
    }
    let path = path?;
    let allocation = allocate_waypoints(&path, &regions, s.horizon)?;
    let outcome = insert_transition_regions(&path, &allocation, &regions, &graph, &grid, &TransitionSettings::default())?;
    let (regions, path, allocation) = (outcome.regions, outcome.path, outcome.allocation);
    timings.allocation = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    // Certificates only for the regions the allocation uses.
    let assigned = allocation.regions();
    let mut used: Vec<usize> = assigned.clone();
    used.sort_unstable();
    used.dedup();
    let problems = used
        .iter()
        .map(|&r| ScalingProblem::new(shape.clone(), regions.regions[r].clone(), s.relaxation_order))
        .collect::<Result<Vec<_>>>()?;
    let local: Vec<usize> = assigned.iter().map(|r| used.binary_search(r).expect("listed")).collect();

    let (reference, inputs) = initial_guess(&model, &allocation.points(), &q_s, &q_g);
    let mut spec = ProblemSpec::new(
        model,
        s.horizon,
        s.costs()?,
        model.state_from_config(&q_s),
        model.state_from_config(&q_g),
    );
    spec.reference = reference;
    // Goal heading is tracked relative to the unwrapped reference.
    spec.goal = spec.reference[s.horizon].clone();
    if let Some(b) = &s.input_bounds {
        spec.input_lower = b.lower.clone();
        spec.input_upper = b.upper.clone();
    }
    spec.safety = match s.safety {
        SafetyMode::All => Safety::All(local),
        SafetyMode::Terminal => Safety::Terminal(local[s.horizon]),
    };
    // Converging to within ctol of the tightened bound leaves alpha <= 1.
    spec.safety_margin = s.ctol;
    let settings = AlSettings { ctol: s.ctol, max_outer: s.max_outer, ..Default::default() };
    let trajectory = solve(&spec, &problems, inputs, &settings)?;
    timings.optimization = clock.elapsed().as_secs_f64();

    Ok(PlanOutput { grid, decomposition, regions, graph, path, allocation, transitions: outcome.inserted, trajectory, timings })
}

#[derive(Serialize)]
struct TrajectoryRecord<'a> {
    #[serde(flatten)]
    trajectory: &'a Trajectory,
    regions: Vec<usize>,
    timings: &'a Timings,
}

/// Writes `scenario.json`, `regions.json`, `allocation.json`,
/// `trajectory.json`, `trajectory.csv` and `timings.json` into `dir`.
pub fn write_artifacts(dir: &Path, scenario: &Scenario, out: &PlanOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("scenario.json"), scenario.to_json())?;
    std::fs::write(dir.join("regions.json"), regions_to_json(&out.regions))?;
    std::fs::write(dir.join("allocation.json"), out.allocation.to_json())?;
    let record = TrajectoryRecord { trajectory: &out.trajectory, regions: out.step_regions(), timings: &out.timings };
    std::fs::write(dir.join("trajectory.json"), serde_json::to_string_pretty(&record).expect("serializes"))?;
    std::fs::write(dir.join("trajectory.csv"), out.trajectory.to_csv())?;
    std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&out.timings).expect("serializes"))?;
    Ok(())
}

/// Result of certifying one configuration against one region.
#[derive(Clone, Debug, Serialize)]
pub struct CertifyRecord {
    pub region: usize,
    pub relaxation_order: u32,
    pub alpha: f64,
    pub gradient: Vec<f64>,
    pub degenerate: bool,
    pub status: crate::conic::ConicStatus,
    pub iterations: usize,
    /// Median solve wall time over the repeats, in milliseconds.
    pub time_ms: f64,
}

/// Certifies `q` against `region`, or against the containing region with
/// the smallest scaling when none is given.
pub fn certify(s: &Scenario, q: &[f64], region: Option<usize>, repeats: usize) -> Result<CertifyRecord> {
    s.validate()?;
    let shape = s.shape()?;
    let q = crate::geometry::Configuration::new(s.model()?.config_kind(), q)?;
    let regions = match s.explicit_regions()? {
        Some(r) => r,
        None => {
            let ws = &s.workspace;
            let grid = rasterize(&s.obstacles, &ws.lower, &ws.upper, ws.resolution)?;
            let settings = DecomposeSettings {
                coverage_threshold: s.coverage_threshold,
                seed: s.seed,
                max_regions: s.max_regions,
                ..Default::default()
            };
            decompose(&grid, &settings)?.regions
        }
    };
    let (index, problem) = match region {
        Some(r) => {
            let poly = regions
                .regions
                .get(r)
                .ok_or_else(|| Error::InvalidInput(format!("region {r} does not exist ({} regions)", regions.len())))?;
            (r, ScalingProblem::new(shape, poly.clone(), s.relaxation_order)?)
        }
        None => {
            let mut best: Option<(f64, usize)> = None;
            for (k, r) in regions.regions.iter().enumerate() {
                if r.contains(q.position(), 0.0) {
                    let p = ScalingProblem::new(shape.clone(), r.clone(), s.relaxation_order)?;
                    if let Ok(sol) = p.solve(&q) {
                        if best.map_or(true, |(a, _)| sol.alpha < a) {
                            best = Some((sol.alpha, k));
                        }
                    }
                }
            }
            let (_, k) = best.ok_or(Error::NoEnclosingRegion { which: "query" })?;
            (k, ScalingProblem::new(shape, regions.regions[k].clone(), s.relaxation_order)?)
        }
    };
    let mut times = Vec::with_capacity(repeats.max(1));
    let mut sol = None;
    for _ in 0..repeats.max(1) {
        let clock = Instant::now();
        sol = Some(problem.solve(&q)?);
        times.push(clock.elapsed().as_secs_f64() * 1e3);
    }
    let sol = sol.expect("at least one solve");
    times.sort_by(f64::total_cmp);
    let grad = problem.gradient(&q, &sol)?;
    Ok(CertifyRecord {
        region: index,
        relaxation_order: problem.relaxation_order(),
        alpha: sol.alpha,
        gradient: grad.dalpha_dq,
        degenerate: grad.degenerate,
        status: sol.status,
        iterations: sol.iterations,
        time_ms: times[times.len() / 2],
    })
}

/// States as configurations, for geometric checks on a finished plan.
pub fn keyframes(out: &PlanOutput, s: &Scenario) -> Result<Vec<crate::geometry::Configuration>> {
    let model = s.model()?;
    Ok(out
        .trajectory
        .states
        .iter()
        .map(|x| model.config_of(&DVector::from_column_slice(x)))
        .collect())
}
