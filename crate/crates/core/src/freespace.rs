//! Occupancy grids and their decomposition into overlapping convex regions.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_region, Polytope};
use crate::lp::{self, LpStatus};

/// Obstacle in world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    Box { min: Vec<f64>, max: Vec<f64> },
    /// `{x : a x <= b}`.
    Polytope { a: Vec<Vec<f64>>, b: Vec<f64> },
}

impl Obstacle {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Obstacle::Box { min, max } => x.iter().zip(min.iter().zip(max)).all(|(v, (lo, hi))| lo <= v && v <= hi),
            Obstacle::Polytope { a, b } => {
                a.iter().zip(b).all(|(row, bi)| row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() <= *bi)
            }
        }
    }

    fn dimension(&self) -> usize {
        match self {
            Obstacle::Box { min, .. } => min.len(),
            Obstacle::Polytope { a, .. } => a.first().map_or(0, Vec::len),
        }
    }
}

/// Axis-aligned grid; cell `(i_0, i_1, ..)` has flat index
/// `i_0 + n_0 (i_1 + n_1 i_2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: f64,
    dims: Vec<usize>,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    /// All-free grid over `[lower, upper]`.
    pub fn new(lower: &[f64], upper: &[f64], resolution: f64) -> Result<Self> {
        let z = lower.len();
        if !(z == 2 || z == 3) || upper.len() != z {
            return Err(Error::InvalidInput("grid bounds must be 2- or 3-dimensional".into()));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidInput(format!("resolution {resolution} must be positive")));
        }
        if lower.iter().zip(upper).any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidInput("grid bounds have zero volume".into()));
        }
        let dims: Vec<usize> = lower
            .iter()
            .zip(upper)
            .map(|(l, u)| (((u - l) / resolution) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        let n = dims.iter().product();
        Ok(Self { lower: lower.to_vec(), upper: upper.to_vec(), resolution, dims, occupied: vec![false; n] })
    }

    pub fn dimension(&self) -> usize {
        self.dims.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_cells(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_occupied(&self, idx: usize) -> bool {
        self.occupied[idx]
    }

    pub fn set_occupied(&mut self, idx: usize, value: bool) {
        self.occupied[idx] = value;
    }

    pub fn free_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_cells()).filter(|&i| !self.occupied[i])
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|&n| {
                let i = idx % n;
                idx /= n;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.dims).rev().fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .zip(&self.lower)
            .map(|(&i, l)| l + (i as f64 + 0.5) * self.resolution)
            .collect()
    }

    pub fn cell_box(&self, idx: usize) -> (Vec<f64>, Vec<f64>) {
        let lo: Vec<f64> = self
            .multi_index(idx)
            .iter()
            .zip(&self.lower)
            .map(|(&i, l)| l + i as f64 * self.resolution)
            .collect();
        let hi = lo.iter().map(|v| v + self.resolution).collect();
        (lo, hi)
    }

    /// Cell containing `x`, if inside the grid.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut multi = Vec::with_capacity(self.dims.len());
        for ((v, l), &n) in x.iter().zip(&self.lower).zip(&self.dims) {
            let f = ((v - l) / self.resolution).floor();
            if f < 0.0 || f >= n as f64 {
                return None;
            }
            multi.push(f as usize);
        }
        Some(self.flat_index(&multi))
    }

    /// Whether the free cells holding `a` and `b` are face-connected.
    pub fn free_path_exists(&self, a: &[f64], b: &[f64]) -> bool {
        let (Some(a), Some(b)) = (self.locate(a), self.locate(b)) else { return false };
        if self.occupied[a] || self.occupied[b] {
            return false;
        }
        let mut seen = vec![false; self.num_cells()];
        let mut queue = std::collections::VecDeque::from([a]);
        seen[a] = true;
        while let Some(i) = queue.pop_front() {
            if i == b {
                return true;
            }
            for n in self.neighbors(i) {
                if !seen[n] && !self.occupied[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        false
    }

    fn neighbors(&self, idx: usize) -> Vec<usize> {
        let multi = self.multi_index(idx);
        let mut out = Vec::with_capacity(2 * multi.len());
        for k in 0..multi.len() {
            for delta in [-1i64, 1] {
                let v = multi[k] as i64 + delta;
                if v >= 0 && (v as usize) < self.dims[k] {
                    let mut m = multi.clone();
                    m[k] = v as usize;
                    out.push(self.flat_index(&m));
                }
            }
        }
        out
    }
}

/// Marks every cell whose center lies in some obstacle.
pub fn rasterize(obstacles: &[Obstacle], lower: &[f64], upper: &[f64], resolution: f64) -> Result<OccupancyGrid> {
    let mut grid = OccupancyGrid::new(lower, upper, resolution)?;
    if let Some(o) = obstacles.iter().find(|o| o.dimension() != grid.dimension()) {
        return Err(Error::InvalidInput(format!("obstacle {o:?} does not match the grid dimension")));
    }
    for idx in 0..grid.num_cells() {
        let c = grid.center(idx);
        grid.occupied[idx] = obstacles.iter().any(|o| o.contains(&c));
    }
    Ok(grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Decomposed,
    Loaded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionSet {
    pub regions: Vec<Polytope>,
    pub provenance: Provenance,
}

impl RegionSet {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionStatus {
    Complete,
    /// Stopped at the region or attempt cap above the coverage threshold.
    Partial,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub regions: RegionSet,
    pub uncovered_fraction: f64,
    pub status: DecompositionStatus,
}

#[derive(Clone, Copy, Debug)]
pub struct DecomposeSettings {
    pub coverage_threshold: f64,
    pub seed: u64,
    pub max_regions: usize,
    /// Re-centering rounds per seed.
    pub inflation_rounds: usize,
}

impl Default for DecomposeSettings {
    fn default() -> Self {
        Self { coverage_threshold: 0.02, seed: 0, max_regions: 200, inflation_rounds: 3 }
    }
}

/// Covers the free cells with convex regions grown from random seeds.
///
/// Each region starts as the bounds box; occupied boundary cells are visited
/// nearest first and any cell not already cut off gets a separating plane
/// through its closest point to the seed. The region is then regrown from
/// its Chebyshev center a few times and the variant covering the most new
/// free cells is kept.
pub fn decompose(grid: &OccupancyGrid, settings: &DecomposeSettings) -> Result<Decomposition> {
    let free: Vec<usize> = grid.free_cells().collect();
    if free.is_empty() {
        return Err(Error::Decomposition("the map has no free cells".into()));
    }
    let centers: Vec<Vec<f64>> = free.iter().map(|&i| grid.center(i)).collect();
    let boundary = occupied_boundary(grid);

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut covered = vec![false; free.len()];
    let mut barren = vec![false; free.len()];
    let mut regions = Vec::new();
    let total = free.len() as f64;
    loop {
        let uncovered: Vec<usize> = (0..free.len()).filter(|&k| !covered[k]).collect();
        let fraction = uncovered.len() as f64 / total;
        if fraction <= settings.coverage_threshold {
            return Ok(Decomposition {
                regions: RegionSet { regions, provenance: Provenance::Decomposed },
                uncovered_fraction: fraction,
                status: DecompositionStatus::Complete,
            });
        }
        let candidates: Vec<usize> = uncovered.into_iter().filter(|&k| !barren[k]).collect();
        if regions.len() >= settings.max_regions || candidates.is_empty() {
            return Ok(Decomposition {
                regions: RegionSet { regions, provenance: Provenance::Decomposed },
                uncovered_fraction: fraction,
                status: DecompositionStatus::Partial,
            });
        }
        let pick = candidates[rng.gen_range(0..candidates.len())];

        let mut best: Option<(usize, Polytope)> = None;
        let mut center = centers[pick].clone();
        for _ in 0..=settings.inflation_rounds {
            let Ok(region) = grow_region(grid, &boundary, &center) else { break };
            let gain = (0..free.len())
                .filter(|&k| !covered[k] && region.contains(&centers[k], -1e-9))
                .count();
            center = region.origin().as_slice().to_vec();
            if best.as_ref().map_or(true, |(g, _)| gain > *g) {
                best = Some((gain, region));
            }
        }
        match best {
            Some((gain, region)) if gain > 0 => {
                for k in 0..free.len() {
                    if !covered[k] && region.contains(&centers[k], -1e-9) {
                        covered[k] = true;
                    }
                }
                regions.push(region);
            }
            _ => barren[pick] = true,
        }
    }
}

/// Boxes of the occupied cells with at least one free face neighbor. Any
/// path from free space into an obstacle crosses one of them, so separating
/// from these alone keeps regions obstacle-free.
pub fn occupied_boundary(grid: &OccupancyGrid) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..grid.num_cells())
        .filter(|&i| grid.occupied[i] && grid.neighbors(i).iter().any(|&n| !grid.occupied[n]))
        .map(|i| grid.cell_box(i))
        .collect()
}

/// Grows one region around `seed`, separating it from the given occupied
/// cell boxes and clipping it to the grid bounds.
pub fn grow_region(grid: &OccupancyGrid, occupied: &[(Vec<f64>, Vec<f64>)], seed: &[f64]) -> Result<Polytope> {
    let z = grid.dimension();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for k in 0..z {
        let mut e = vec![0.0; z];
        e[k] = 1.0;
        rows.push(e.clone());
        rhs.push(grid.upper[k]);
        e[k] = -1.0;
        rows.push(e);
        rhs.push(-grid.lower[k]);
    }

    let closest = |(lo, hi): &(Vec<f64>, Vec<f64>)| -> Vec<f64> {
        seed.iter().zip(lo.iter().zip(hi)).map(|(s, (l, h))| s.clamp(*l, *h)).collect()
    };
    let dist2 = |p: &[f64]| -> f64 { p.iter().zip(seed).map(|(a, b)| (a - b) * (a - b)).sum() };
    let mut order: Vec<(f64, usize)> =
        occupied.iter().enumerate().map(|(i, b)| (dist2(&closest(b)), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    for (d2, i) in order {
        if d2 <= 0.0 {
            return Err(Error::Decomposition("seed lies inside an occupied cell".into()));
        }
        let (lo, hi) = &occupied[i];
        // Cut off already if some plane has the whole box on its far side.
        let excluded = rows.iter().zip(&rhs).any(|(a, b)| {
            let min: f64 = a.iter().zip(lo.iter().zip(hi)).map(|(ak, (l, h))| if *ak >= 0.0 { ak * l } else { ak * h }).sum();
            min >= *b - 1e-12
        });
        if excluded {
            continue;
        }
        let p = closest(&occupied[i]);
        let d = d2.sqrt();
        let n: Vec<f64> = p.iter().zip(seed).map(|(a, b)| (a - b) / d).collect();
        let b = n.iter().zip(&p).map(|(a, v)| a * v).sum();
        rows.push(n);
        rhs.push(b);
    }

    let (rows, rhs) = prune_redundant(rows, rhs)?;
    let f = DMatrix::from_fn(rows.len(), z, |i, j| rows[i][j]);
    let g = DVector::from_vec(rhs);
    normalize_region(&f, &g)
}

// Drops rows whose constraint is implied by the others.
fn prune_redundant(mut rows: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut i = 0;
    while i < rows.len() {
        let others: Vec<Vec<f64>> = rows.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, r)| r.clone()).collect();
        let others_rhs: Vec<f64> = rhs.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, v)| *v).collect();
        let sol = lp::maximize(&rows[i], &others, &others_rhs, &[])?;
        let redundant = sol.status == LpStatus::Optimal
            && rows[i].iter().zip(&sol.x).map(|(a, x)| a * x).sum::<f64>() <= rhs[i] + 1e-9;
        if redundant {
            rows.remove(i);
            rhs.remove(i);
        } else {
            i += 1;
        }
    }
    Ok((rows, rhs))
}

/// Fraction of free cell centers inside at least one region.
pub fn coverage(grid: &OccupancyGrid, regions: &RegionSet) -> f64 {
    let free: Vec<usize> = grid.free_cells().collect();
    if free.is_empty() {
        return 0.0;
    }
    let inside = free
        .iter()
        .filter(|&&i| {
            let c = grid.center(i);
            regions.regions.iter().any(|r| r.contains(&c, -1e-9))
        })
        .count();
    inside as f64 / free.len() as f64
}

#[derive(Serialize, Deserialize)]
struct RegionRecord {
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    g: Vec<f64>,
    origin: Vec<f64>,
}

pub fn regions_to_json(set: &RegionSet) -> String {
    let records: Vec<RegionRecord> = set
        .regions
        .iter()
        .map(|r| RegionRecord {
            f: (0..r.num_facets()).map(|i| r.f().row(i).iter().copied().collect()).collect(),
            g: r.g().iter().copied().collect(),
            origin: r.origin().iter().copied().collect(),
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("plain numeric records serialize")
}

/// `context` names the source (usually a path) in error messages.
pub fn regions_from_json(text: &str, context: &str) -> Result<RegionSet> {
    let records: Vec<RegionRecord> = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("{context} line {} column {}", e.line(), e.column()), e))?;
    let mut regions = Vec::with_capacity(records.len());
    for (k, rec) in records.into_iter().enumerate() {
        let ctx = format!("{context} region {k}");
        let z = rec.origin.len();
        if rec.f.iter().any(|row| row.len() != z) || rec.f.len() != rec.g.len() {
            return Err(Error::parse(ctx, "F, g and origin sizes disagree"));
        }
        if let Some(i) = rec.g.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::parse(ctx, format!("g[{i}] = {} is not positive", rec.g[i])));
        }
        let f = DMatrix::from_fn(rec.f.len(), z, |i, j| rec.f[i][j]);
        let region = Polytope::new(f, DVector::from_vec(rec.g), DVector::from_vec(rec.origin))
            .map_err(|e| Error::parse(ctx, e))?;
        regions.push(region);
    }
    Ok(RegionSet { regions, provenance: Provenance::Loaded })
}

pub fn save_regions(path: &Path, set: &RegionSet) -> Result<()> {
    std::fs::write(path, regions_to_json(set))?;
    Ok(())
}

pub fn load_regions(path: &Path) -> Result<RegionSet> {
    let text = std::fs::read_to_string(path)?;
    regions_from_json(&text, &path.display().to_string())
}
