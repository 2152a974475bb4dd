//! Adjacency graph over free regions, region-sequence search and waypoint
//! allocation along the resulting reference path.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freespace::{grow_region, occupied_boundary, OccupancyGrid, RegionSet};
use crate::geometry::{Configuration, Polytope, SemialgebraicShape};
use crate::scaling_sdp::ScalingProblem;

/// Edge between regions `i < j`.
#[derive(Clone, Debug)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub overlap: Polytope,
    /// `[C(Q_i), C(Q_ij), C(Q_j)]`.
    pub polyline: [DVector<f64>; 3],
    pub cost: f64,
}

impl Edge {
    pub fn overlap_radius(&self) -> f64 {
        self.overlap.g().min()
    }
}

#[derive(Clone, Debug)]
pub struct RegionGraph {
    centers: Vec<DVector<f64>>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

fn dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm()
}

/// Regions are adjacent when their intersection holds a ball of radius
/// `overlap_threshold`.
pub fn build_graph(regions: &RegionSet, overlap_threshold: f64) -> RegionGraph {
    let n = regions.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let edges: Vec<Edge> = pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            let (a, b) = (&regions.regions[i], &regions.regions[j]);
            let overlap = a.intersection(b).ok()?;
            if overlap.g().min() < overlap_threshold {
                return None;
            }
            let polyline = [a.origin().clone(), overlap.origin().clone(), b.origin().clone()];
            let cost = dist(&polyline[0], &polyline[1]) + dist(&polyline[1], &polyline[2]);
            Some(Edge { i, j, overlap, polyline, cost })
        })
        .collect();
    let mut adjacency = vec![Vec::new(); n];
    for (k, e) in edges.iter().enumerate() {
        adjacency[e.i].push((e.j, k));
        adjacency[e.j].push((e.i, k));
    }
    for list in &mut adjacency {
        list.sort();
    }
    RegionGraph { centers: regions.regions.iter().map(|r| r.origin().clone()).collect(), edges, adjacency }
}

impl RegionGraph {
    pub fn num_vertices(&self) -> usize {
        self.centers.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<&Edge> {
        self.adjacency.get(a)?.iter().find(|(v, _)| *v == b).map(|&(_, k)| &self.edges[k])
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().map(|&(u, _)| u)
    }

    /// Weighted adjacency lists for [`dijkstra`].
    pub fn weighted_adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        self.adjacency
            .iter()
            .map(|list| list.iter().map(|&(u, k)| (u, self.edges[k].cost)).collect())
            .collect()
    }

    /// Number of connected components.
    pub fn components(&self) -> usize {
        let n = self.num_vertices();
        let mut seen = vec![false; n];
        let mut count = 0;
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(v) = stack.pop() {
                for u in self.neighbors(v) {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }
}

#[derive(PartialEq)]
struct Label {
    cost: f64,
    path: Vec<usize>,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap.
        other.cost.total_cmp(&self.cost).then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest vertex sequence from any source to any target, where a path
/// `v_0..v_p` costs `src(v_0) + w(v_0, v_1) + ... + dst(v_p)` summed in that
/// order. Ties go to the lexicographically smallest sequence.
pub fn dijkstra(
    adjacency: &[Vec<(usize, f64)>],
    sources: &[(usize, f64)],
    targets: &[(usize, f64)],
) -> Option<(Vec<usize>, f64)> {
    let n = adjacency.len();
    let mut best: Vec<Option<Label>> = (0..n).map(|_| None).collect();
    let mut heap = BinaryHeap::new();
    let better = |cand: &Label, cur: &Option<Label>| match cur {
        None => true,
        Some(c) => cand.cost < c.cost || (cand.cost == c.cost && cand.path < c.path),
    };
    for &(v, c) in sources {
        let label = Label { cost: c, path: vec![v] };
        if better(&label, &best[v]) {
            best[v] = Some(Label { cost: c, path: vec![v] });
            heap.push(label);
        }
    }
    let mut done = vec![false; n];
    while let Some(Label { cost, path }) = heap.pop() {
        let v = *path.last().expect("nonempty path");
        if done[v] {
            continue;
        }
        done[v] = true;
        for &(u, w) in &adjacency[v] {
            if done[u] {
                continue;
            }
            let mut p = path.clone();
            p.push(u);
            let cand = Label { cost: cost + w, path: p };
            if better(&cand, &best[u]) {
                best[u] = Some(Label { cost: cand.cost, path: cand.path.clone() });
                heap.push(cand);
            }
        }
    }
    let mut result: Option<(Vec<usize>, f64)> = None;
    for &(v, c) in targets {
        let Some(label) = &best[v] else { continue };
        let total = label.cost + c;
        let wins = match &result {
            None => true,
            Some((p, t)) => total < *t || (total == *t && label.path < *p),
        };
        if wins {
            result = Some((label.path.clone(), total));
        }
    }
    result
}

/// One segment of the reference polyline and the regions it runs between
/// (equal for the endpoint segments).
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub from: DVector<f64>,
    pub to: DVector<f64>,
    pub regions: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct PathResult {
    pub region_sequence: Vec<usize>,
    pub segments: Vec<Segment>,
    pub total_length: f64,
}

impl PathResult {
    /// Polyline vertices from start to goal.
    pub fn polyline(&self) -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = self.segments.iter().map(|s| s.from.clone()).collect();
        if let Some(last) = self.segments.last() {
            out.push(last.to.clone());
        }
        out
    }
}

/// Regions whose scaling certificate contains the robot at `q`.
pub fn containing_regions(
    regions: &RegionSet,
    shape: &SemialgebraicShape,
    order: Option<u32>,
    q: &Configuration,
) -> Vec<usize> {
    regions
        .regions
        .par_iter()
        .enumerate()
        .filter_map(|(k, r)| {
            let problem = ScalingProblem::new(shape.clone(), r.clone(), order).ok()?;
            let sol = problem.solve(q).ok()?;
            (sol.status == crate::conic::ConicStatus::Optimal && sol.alpha <= 1.0 + 1e-7).then_some(k)
        })
        .collect()
}

/// Shortest region sequence whose first region contains the robot at `q_s`
/// and whose last contains it at `q_g`.
pub fn shortest_sequence(
    graph: &RegionGraph,
    regions: &RegionSet,
    shape: &SemialgebraicShape,
    order: Option<u32>,
    q_s: &Configuration,
    q_g: &Configuration,
) -> Result<PathResult> {
    let starts = containing_regions(regions, shape, order, q_s);
    if starts.is_empty() {
        return Err(Error::NoEnclosingRegion { which: "start" });
    }
    let goals = containing_regions(regions, shape, order, q_g);
    if goals.is_empty() {
        return Err(Error::NoEnclosingRegion { which: "goal" });
    }
    sequence_between(graph, q_s.position(), q_g.position(), &starts, &goals)
}

/// Search with explicit candidate start and goal regions.
pub fn sequence_between(
    graph: &RegionGraph,
    start: &[f64],
    goal: &[f64],
    starts: &[usize],
    goals: &[usize],
) -> Result<PathResult> {
    let s = DVector::from_column_slice(start);
    let g = DVector::from_column_slice(goal);
    let sources: Vec<(usize, f64)> = starts.iter().map(|&v| (v, dist(&s, &graph.centers[v]))).collect();
    let targets: Vec<(usize, f64)> = goals.iter().map(|&v| (v, dist(&graph.centers[v], &g))).collect();
    let (sequence, total_length) =
        dijkstra(&graph.weighted_adjacency(), &sources, &targets).ok_or(Error::Unreachable)?;

    let mut segments = vec![Segment { from: s, to: graph.centers[sequence[0]].clone(), regions: (sequence[0], sequence[0]) }];
    for w in sequence.windows(2) {
        let (a, b) = (w[0], w[1]);
        let e = graph.edge(a, b).expect("consecutive regions share an edge");
        let pts = if e.i == a {
            [e.polyline[0].clone(), e.polyline[1].clone(), e.polyline[2].clone()]
        } else {
            [e.polyline[2].clone(), e.polyline[1].clone(), e.polyline[0].clone()]
        };
        segments.push(Segment { from: pts[0].clone(), to: pts[1].clone(), regions: (a, b) });
        segments.push(Segment { from: pts[1].clone(), to: pts[2].clone(), regions: (a, b) });
    }
    let last = *sequence.last().expect("nonempty");
    segments.push(Segment { from: graph.centers[last].clone(), to: g, regions: (last, last) });
    Ok(PathResult { region_sequence: sequence, segments, total_length })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AllocationEntry {
    pub tau: usize,
    pub point: Vec<f64>,
    pub region_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pub entries: Vec<AllocationEntry>,
}

impl Allocation {
    pub fn horizon(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn regions(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.region_index).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.point.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("plain records serialize")
    }
}

/// Margin a point must clear inside its assigned region.
pub const ALLOCATION_MARGIN: f64 = 1e-9;

/// `T + 1` points at equal arc length along the path. A point on the way
/// from `Q_i` to `Q_j` goes to `Q_j` as soon as it lies inside it.
pub fn allocate_waypoints(path: &PathResult, regions: &RegionSet, horizon: usize) -> Result<Allocation> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let lengths: Vec<f64> = path.segments.iter().map(|s| dist(&s.from, &s.to)).collect();
    let total: f64 = lengths.iter().sum();
    if !total.is_finite() {
        return Err(Error::InvalidInput("reference path length is not finite".into()));
    }
    let mut entries = Vec::with_capacity(horizon + 1);
    let mut seg = 0;
    let mut before = 0.0;
    for tau in 0..=horizon {
        let s = total * tau as f64 / horizon as f64;
        while seg + 1 < lengths.len() && s > before + lengths[seg] {
            before += lengths[seg];
            seg += 1;
        }
        let segment = &path.segments[seg];
        let t = if lengths[seg] > 0.0 { ((s - before) / lengths[seg]).clamp(0.0, 1.0) } else { 0.0 };
        let point = if tau == horizon { segment.to.clone() } else { &segment.from + (&segment.to - &segment.from) * t };
        let p = point.as_slice();
        let (a, b) = segment.regions;
        let region_index = if regions.regions[b].contains(p, ALLOCATION_MARGIN) {
            b
        } else if regions.regions[a].contains(p, ALLOCATION_MARGIN) {
            a
        } else {
            return Err(Error::AllocationGap { tau });
        };
        entries.push(AllocationEntry { tau, point: point.iter().copied().collect(), region_index });
    }
    Ok(Allocation { entries })
}

#[derive(Clone, Copy, Debug)]
pub struct TransitionSettings {
    /// Points of the straight center-to-center segment are tested with this
    /// margin (negative values dilate the regions).
    pub membership_margin: f64,
    pub samples: usize,
}

impl Default for TransitionSettings {
    fn default() -> Self {
        Self { membership_margin: 0.0, samples: 64 }
    }
}

/// Whether the straight segment between the two region centers leaves
/// `Q_a` and `Q_b`.
pub fn needs_transition(regions: &RegionSet, a: usize, b: usize, settings: &TransitionSettings) -> bool {
    let (qa, qb) = (&regions.regions[a], &regions.regions[b]);
    let (ca, cb) = (qa.origin(), qb.origin());
    (0..=settings.samples).any(|k| {
        let t = k as f64 / settings.samples as f64;
        let p = ca + (cb - ca) * t;
        let p = p.as_slice();
        !qa.contains(p, settings.membership_margin) && !qb.contains(p, settings.membership_margin)
    })
}

#[derive(Clone, Debug)]
pub struct TransitionOutcome {
    pub regions: RegionSet,
    pub path: PathResult,
    pub allocation: Allocation,
    /// `(previous region, next region, new region)` per insertion.
    pub inserted: Vec<(usize, usize, usize)>,
}

/// For each consecutive region pair whose center segment cuts through an
/// obstacle corner, grows an extra region from the center of their overlap
/// and hands it the waypoints around the hand-over that it contains.
pub fn insert_transition_regions(
    path: &PathResult,
    allocation: &Allocation,
    regions: &RegionSet,
    graph: &RegionGraph,
    grid: &OccupancyGrid,
    settings: &TransitionSettings,
) -> Result<TransitionOutcome> {
    let mut regions = regions.clone();
    let mut entries = allocation.entries.clone();
    let mut sequence = Vec::with_capacity(path.region_sequence.len());
    let mut inserted = Vec::new();
    let boundary = occupied_boundary(grid);
    sequence.push(path.region_sequence[0]);
    for w in path.region_sequence.windows(2) {
        let (a, b) = (w[0], w[1]);
        if needs_transition(&regions, a, b, settings) {
            let edge = graph.edge(a, b).expect("consecutive regions share an edge");
            let seed: Vec<f64> = edge.overlap.origin().iter().copied().collect();
            let region = grow_region(grid, &boundary, &seed).map_err(|e| {
                Error::TransitionBlocked(format!("between regions {a} and {b} at {seed:?}: {e}"))
            })?;
            let new = regions.regions.len();
            regions.regions.push(region);
            inserted.push((a, b, new));
            sequence.push(new);

            // Contiguous run around the a -> b hand-over.
            if let Some(switch) = entries.windows(2).position(|p| p[0].region_index == a && p[1].region_index == b) {
                let inside = |e: &AllocationEntry| regions.regions[new].contains(&e.point, ALLOCATION_MARGIN);
                let mut lo = switch + 1;
                while lo > 0 && entries[lo - 1].region_index == a && inside(&entries[lo - 1]) {
                    lo -= 1;
                }
                let mut hi = switch + 1;
                while hi < entries.len() && entries[hi].region_index == b && inside(&entries[hi]) {
                    hi += 1;
                }
                for e in &mut entries[lo..hi] {
                    e.region_index = new;
                }
            }
        }
        sequence.push(b);
    }
    let path = PathResult { region_sequence: sequence, segments: path.segments.clone(), total_length: path.total_length };
    Ok(TransitionOutcome { regions, path, allocation: Allocation { entries }, inserted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freespace::Provenance;
    use crate::geometry::box_region;

    fn set(boxes: &[([f64; 2], [f64; 2])]) -> RegionSet {
        RegionSet {
            regions: boxes.iter().map(|(lo, hi)| box_region(lo, hi).unwrap()).collect(),
            provenance: Provenance::Loaded,
        }
    }

    fn chain() -> RegionSet {
        set(&[([0.0, 0.0], [2.0, 1.0]), ([1.5, 0.0], [3.5, 1.0]), ([3.0, 0.0], [5.0, 1.0])])
    }

    #[test]
    fn offset_cubes_share_one_edge() {
        let cubes = RegionSet {
            regions: vec![box_region(&[0.0; 3], &[1.0; 3]).unwrap(), box_region(&[0.5, 0.0, 0.0], &[1.5, 1.0, 1.0]).unwrap()],
            provenance: Provenance::Loaded,
        };
        let g = build_graph(&cubes, 0.1);
        assert_eq!(g.edges().len(), 1);
        let e = &g.edges()[0];
        assert!((e.overlap_radius() - 0.25).abs() < 1e-9);
        assert!((e.overlap.origin()[0] - 0.75).abs() < 1e-9);
        let disjoint = RegionSet {
            regions: vec![box_region(&[0.0; 3], &[1.0; 3]).unwrap(), box_region(&[2.0, 0.0, 0.0], &[3.0, 1.0, 1.0]).unwrap()],
            provenance: Provenance::Loaded,
        };
        assert!(build_graph(&disjoint, 0.1).edges().is_empty());
    }

    #[test]
    fn chain_costs_match_center_distances() {
        let g = build_graph(&chain(), 0.1);
        assert_eq!(g.edges().len(), 2);
        let e01 = g.edge(0, 1).unwrap();
        // Centers (1, .5), (1.75, .5), (2.5, .5).
        assert!((e01.cost - 1.5).abs() < 1e-9, "{}", e01.cost);
        assert!(g.edge(0, 2).is_none());
        assert!((g.edge(1, 0).unwrap().cost - e01.cost).abs() == 0.0);
    }

    #[test]
    fn chain_sequence_and_unreachable() {
        let regions = chain();
        let g = build_graph(&regions, 0.1);
        let p = sequence_between(&g, &[0.5, 0.5], &[4.5, 0.5], &[0], &[2]).unwrap();
        assert_eq!(p.region_sequence, vec![0, 1, 2]);
        let poly = p.polyline();
        assert_eq!(poly.first().unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(poly.last().unwrap().as_slice(), &[4.5, 0.5]);

        let mut split = chain();
        split.regions.push(box_region(&[10.0, 0.0], &[11.0, 1.0]).unwrap());
        let g = build_graph(&split, 0.1);
        let err = sequence_between(&g, &[0.5, 0.5], &[10.5, 0.5], &[0], &[3]).unwrap_err();
        assert!(matches!(err, Error::Unreachable));
    }

    #[test]
    fn straight_allocation_is_uniform_and_monotone() {
        let regions = chain();
        let g = build_graph(&regions, 0.1);
        let p = sequence_between(&g, &[0.0 + 0.5, 0.5], &[4.5, 0.5], &[0], &[2]).unwrap();
        let alloc = allocate_waypoints(&p, &regions, 8).unwrap();
        assert_eq!(alloc.entries.len(), 9);
        for (k, e) in alloc.entries.iter().enumerate() {
            assert!((e.point[0] - (0.5 + 0.5 * k as f64)).abs() < 1e-12);
            assert!(regions.regions[e.region_index].contains(&e.point, ALLOCATION_MARGIN));
        }
        let seq_pos: Vec<usize> = alloc.regions();
        assert!(seq_pos.windows(2).all(|w| w[0] <= w[1]));
        // x = 2.0 sits inside Q_0 and Q_1, so it goes to the later region.
        assert_eq!(alloc.entries[3].region_index, 1);
    }

    #[test]
    fn diamond_takes_short_route() {
        // 0 -> 1 -> 3 costs 2, 0 -> 2 -> 3 costs 5.
        let adj = vec![
            vec![(1, 1.0), (2, 2.0)],
            vec![(0, 1.0), (3, 1.0)],
            vec![(0, 2.0), (3, 3.0)],
            vec![(1, 1.0), (2, 3.0)],
        ];
        let (p, c) = dijkstra(&adj, &[(0, 0.0)], &[(3, 0.0)]).unwrap();
        assert_eq!(p, vec![0, 1, 3]);
        assert_eq!(c, 2.0);
        // Equal costs break towards the smaller sequence.
        let tie = vec![vec![(2, 1.0), (1, 1.0)], vec![(0, 1.0), (3, 1.0)], vec![(0, 1.0), (3, 1.0)], vec![(1, 1.0), (2, 1.0)]];
        assert_eq!(dijkstra(&tie, &[(0, 0.0)], &[(3, 0.0)]).unwrap().0, vec![0, 1, 3]);
    }

    #[test]
    fn straight_corridor_needs_no_transition() {
        assert!(!needs_transition(&chain(), 0, 1, &TransitionSettings::default()));
    }

    #[test]
    fn l_corner_triggers_transition() {
        let l = set(&[([0.0, 0.0], [4.0, 1.0]), ([3.0, 0.0], [4.0, 4.0])]);
        assert!(needs_transition(&l, 0, 1, &TransitionSettings::default()));
    }
}
