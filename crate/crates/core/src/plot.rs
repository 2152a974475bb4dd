//! Static SVG views of a planning run: obstacles, regions, reference
//! polyline, trajectory and robot footprints. 3-D runs get an xy and an xz
//! projection side by side.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::freespace::{regions_from_json, Obstacle, RegionSet};
use crate::geometry::{normalize_region, pose_from_config, Configuration, SemialgebraicShape};
use crate::scenario::Scenario;

const VIEW: f64 = 600.0;
const PAD: f64 = 20.0;
const FOOTPRINT_RAYS: usize = 48;

/// Everything a figure needs, as read back from an artifact directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub scenario: Scenario,
    pub regions: RegionSet,
    pub reference: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct PointRecord {
    point: Vec<f64>,
}

#[derive(Deserialize)]
struct StatesRecord {
    states: Vec<Vec<f64>>,
}

fn read(dir: &Path, name: &str) -> Result<(String, String)> {
    let path = dir.join(name);
    let ctx = path.display().to_string();
    match std::fs::read_to_string(&path) {
        Ok(text) => Ok((text, ctx)),
        Err(e) => Err(Error::MissingArtifact(format!("{ctx}: {e}"))),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, ctx: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::parse(format!("{ctx} line {} column {}", e.line(), e.column()), e))
}

impl Artifacts {
    pub fn load(dir: &Path) -> Result<Self> {
        let (text, ctx) = read(dir, "scenario.json")?;
        let scenario = Scenario::from_json(&text, &ctx)?;
        let (text, ctx) = read(dir, "regions.json")?;
        let regions = regions_from_json(&text, &ctx)?;
        let (text, ctx) = read(dir, "allocation.json")?;
        let reference = parse::<Vec<PointRecord>>(&text, &ctx)?.into_iter().map(|p| p.point).collect();
        let (text, ctx) = read(dir, "trajectory.json")?;
        let states = parse::<StatesRecord>(&text, &ctx)?.states;
        Ok(Self { scenario, regions, reference, states })
    }
}

// Planar convex hull, counter-clockwise.
fn hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Boundary of the body along rays in the body-frame plane spanned by axes
/// `a` and `b`, found by bisection from the origin.
fn body_outline(shape: &SemialgebraicShape, a: usize, b: usize) -> Vec<Vec<f64>> {
    let r_max = shape.bounding_radius();
    (0..FOOTPRINT_RAYS)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / FOOTPRINT_RAYS as f64;
            let mut dir = vec![0.0; shape.dimension()];
            dir[a] = t.cos();
            dir[b] = t.sin();
            let (mut lo, mut hi) = (0.0, r_max);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let p: Vec<f64> = dir.iter().map(|d| d * mid).collect();
                if shape.contains(&p, 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            dir.iter().map(|d| d * lo).collect()
        })
        .collect()
}

struct View {
    axes: [usize; 2],
    lower: [f64; 2],
    scale: f64,
    x0: f64,
    height: f64,
}

impl View {
    fn map(&self, p: &[f64]) -> (f64, f64) {
        let x = self.x0 + PAD + (p[self.axes[0]] - self.lower[0]) * self.scale;
        let y = PAD + self.height - (p[self.axes[1]] - self.lower[1]) * self.scale;
        (x, y)
    }

    fn project(&self, p: &[f64]) -> [f64; 2] {
        [p[self.axes[0]], p[self.axes[1]]]
    }

    fn points(&self, pts: &[Vec<f64>]) -> String {
        pts.iter()
            .map(|p| {
                let (x, y) = self.map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn hull_points(&self, pts: &[Vec<f64>]) -> String {
        let h: Vec<Vec<f64>> = hull(pts.iter().map(|p| self.project(p)).collect())
            .into_iter()
            .map(|q| {
                let mut full = vec![0.0; 3];
                full[self.axes[0]] = q[0];
                full[self.axes[1]] = q[1];
                full
            })
            .collect();
        self.points(&h)
    }
}

fn obstacle_vertices(o: &Obstacle) -> Option<Vec<Vec<f64>>> {
    match o {
        Obstacle::Box { min, max } => {
            let z = min.len();
            Some(
                (0..1usize << z)
                    .map(|mask| (0..z).map(|k| if mask >> k & 1 == 1 { max[k] } else { min[k] }).collect())
                    .collect(),
            )
        }
        Obstacle::Polytope { a, b } => {
            let z = a.first()?.len();
            let f = DMatrix::from_fn(a.len(), z, |i, j| a[i][j]);
            let region = normalize_region(&f, &DVector::from_column_slice(b)).ok()?;
            Some(region.vertices().iter().map(|v| v.iter().copied().collect()).collect())
        }
    }
}

/// Renders the figure. Output depends only on the artifacts.
pub fn render(art: &Artifacts) -> Result<String> {
    let s = &art.scenario;
    let shape = s.shape()?;
    let model = s.model()?;
    let z = s.dimension();
    let (lo, hi) = (&s.workspace.lower, &s.workspace.upper);
    let view_axes: Vec<[usize; 2]> = if z == 2 { vec![[0, 1]] } else { vec![[0, 1], [0, 2]] };
    let extent = view_axes
        .iter()
        .flat_map(|ax| ax.iter().map(|&k| hi[k] - lo[k]))
        .fold(0.0, f64::max);
    let scale = VIEW / extent;
    let heights: Vec<f64> = view_axes.iter().map(|ax| (hi[ax[1]] - lo[ax[1]]) * scale).collect();
    let widths: Vec<f64> = view_axes.iter().map(|ax| (hi[ax[0]] - lo[ax[0]]) * scale).collect();
    let total_w: f64 = widths.iter().map(|w| w + 2.0 * PAD).sum();
    let total_h = heights.iter().fold(0.0, |a: f64, &h| a.max(h)) + 2.0 * PAD;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w:.0}" height="{total_h:.0}" viewBox="0 0 {total_w:.3} {total_h:.3}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();

    let keyframe_step = (art.states.len() / 10).max(1);
    let mut x0 = 0.0;
    for (v, axes) in view_axes.iter().enumerate() {
        let view = View { axes: *axes, lower: [lo[axes[0]], lo[axes[1]]], scale, x0, height: heights[v] };
        // Region count stays readable from the first view alone.
        let suffix = if v == 0 { "" } else { "-xz" };
        writeln!(svg, r#"<g id="view{v}">"#).unwrap();
        let (bx, by) = view.map(&[lo[0], lo[1], lo.get(2).copied().unwrap_or(0.0)]);
        writeln!(
            svg,
            r#"<rect class="bounds" x="{bx:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="black"/>"#,
            by - heights[v],
            widths[v],
            heights[v]
        )
        .unwrap();
        for o in &s.obstacles {
            if let Some(verts) = obstacle_vertices(o) {
                writeln!(svg, r##"<polygon class="obstacle" points="{}" fill="#555555"/>"##, view.hull_points(&verts)).unwrap();
            }
        }
        for (k, r) in art.regions.regions.iter().enumerate() {
            let verts: Vec<Vec<f64>> = r.vertices().iter().map(|p| p.iter().copied().collect()).collect();
            writeln!(
                svg,
                r##"<polygon class="region{suffix}" data-index="{k}" points="{}" fill="#3b82f6" fill-opacity="0.12" stroke="#3b82f6" stroke-width="1"/>"##,
                view.hull_points(&verts)
            )
            .unwrap();
        }
        writeln!(
            svg,
            r##"<polyline class="reference" points="{}" fill="none" stroke="#f59e0b" stroke-dasharray="4 3"/>"##,
            view.points(&art.reference)
        )
        .unwrap();
        let kind = model.config_kind();
        let positions: Vec<Vec<f64>> = art.states.iter().map(|x| x[..kind.workspace_dim()].to_vec()).collect();
        writeln!(
            svg,
            r##"<polyline class="trajectory" points="{}" fill="none" stroke="#dc2626" stroke-width="2"/>"##,
            view.points(&positions)
        )
        .unwrap();
        let outline = body_outline(&shape, axes[0], axes[1]);
        for (tau, x) in art.states.iter().enumerate() {
            if tau % keyframe_step != 0 && tau + 1 != art.states.len() {
                continue;
            }
            let q = Configuration::new(kind, &x[..kind.len()])?;
            let pose = pose_from_config(&q);
            let world: Vec<Vec<f64>> = outline.iter().map(|p| pose.transform(p).iter().copied().collect()).collect();
            writeln!(
                svg,
                r##"<polygon class="footprint" data-step="{tau}" points="{}" fill="none" stroke="#16a34a"/>"##,
                view.hull_points(&world)
            )
            .unwrap();
        }
        writeln!(svg, "</g>").unwrap();
        x0 += widths[v] + 2.0 * PAD;
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads the artifacts in `dir` and writes the figure to `out`.
pub fn plot_dir(dir: &Path, out: &Path) -> Result<()> {
    let art = Artifacts::load(dir)?;
    std::fs::write(out, render(&art)?)?;
    Ok(())
}
