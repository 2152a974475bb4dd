// Closed-form oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sos_corridor::geometry::{normalize_region, Polytope, Primitive};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

pub const BUNDLED: [&str; 9] = [
    "ball_in_cube",
    "empty_room",
    "l_corridor",
    "narrow_gap",
    "pillar_field",
    "random_20",
    "rotated_square",
    "small_maze",
    "unreachable",
];

/// Body-to-world rotation for a planar heading or a yaw about z.
pub fn rotation(dim: usize, angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    let mut r = DMatrix::identity(dim, dim);
    r[(0, 0)] = c;
    r[(0, 1)] = -s;
    r[(1, 0)] = s;
    r[(1, 1)] = c;
    r
}

/// `max_{x in body} d . x` for a primitive in body coordinates.
pub fn support(prim: &Primitive, d: &DVector<f64>) -> f64 {
    match prim {
        Primitive::Box { half_extents } => half_extents.iter().zip(d.iter()).map(|(h, v)| h * v.abs()).sum(),
        Primitive::Ellipsoid { semi_axes } => {
            semi_axes.iter().zip(d.iter()).map(|(a, v)| (a * v).powi(2)).sum::<f64>().sqrt()
        }
        Primitive::Cylinder { radius, half_height } => radius * d[0].hypot(d[1]) + half_height * d[2].abs(),
        Primitive::EllipticalCone { a, b, h } => {
            let base = 2.0 * h * d[2] + (2.0 * a * d[0]).hypot(2.0 * b * d[1]);
            base.max(0.0)
        }
    }
}

/// Scaling each facet alone needs: `(F_i (p - o) + h_body(R^T F_i)) / g_i`.
pub fn facet_scalings(prim: &Primitive, region: &Polytope, position: &[f64], angle: f64) -> Vec<f64> {
    let dim = region.dimension();
    let rot = rotation(dim, angle);
    let p = DVector::from_column_slice(position) - region.origin();
    (0..region.num_facets())
        .map(|i| {
            let fi = region.f().row(i).transpose();
            (fi.dot(&p) + support(prim, &(rot.transpose() * &fi))) / region.g()[i]
        })
        .collect()
}

pub fn support_oracle(prim: &Primitive, region: &Polytope, position: &[f64], angle: f64) -> f64 {
    facet_scalings(prim, region, position, angle).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest facet scaling over the posed vertices of a convex polytope body.
pub fn vertex_oracle(vertices: &[DVector<f64>], region: &Polytope, position: &[f64], angle: f64) -> f64 {
    let rot = rotation(region.dimension(), angle);
    let p = DVector::from_column_slice(position);
    let f = region.f();
    let mut worst = f64::NEG_INFINITY;
    for v in vertices {
        let x = &rot * v + &p - region.origin();
        for i in 0..region.num_facets() {
            worst = worst.max(f.row(i).dot(&x.transpose()) / region.g()[i]);
        }
    }
    worst
}

pub fn box_vertices(half: &[f64]) -> Vec<DVector<f64>> {
    let n = half.len();
    (0..1usize << n)
        .map(|mask| DVector::from_iterator(n, (0..n).map(|k| if mask >> k & 1 == 1 { half[k] } else { -half[k] })))
        .collect()
}

/// Bounded random polytope: unit normals spread around the sphere with
/// random offsets, so the origin stays interior.
pub fn random_region(rng: &mut impl Rng, dim: usize, facets: usize) -> Polytope {
    loop {
        let mut f = DMatrix::zeros(facets, dim);
        let mut g = DVector::zeros(facets);
        for i in 0..facets {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-3 {
                continue;
            }
            for k in 0..dim {
                f[(i, k)] = v[k] / norm;
            }
            g[i] = rng.gen_range(1.0..3.0);
        }
        if let Ok(region) = normalize_region(&f, &g) {
            return region;
        }
    }
}

/// Worst violation `max_i (F_i (x - o) - g_i)` over points; nonpositive
/// when all lie inside.
pub fn region_violation(region: &Polytope, points: &[DVector<f64>]) -> f64 {
    points
        .iter()
        .map(|x| {
            let local = x - region.origin();
            (0..region.num_facets())
                .map(|i| region.f().row(i).dot(&local.transpose()) - region.g()[i])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
