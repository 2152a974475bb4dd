//! Robot bodies as semialgebraic sets, polytopic free regions with a scaling
//! frame, and rigid-body poses with analytic Jacobians.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LpStatus};
use crate::polynomial::{Monomial, Polynomial};

/// Closed-form robot primitives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Axis-aligned box with the given half extents (one per axis).
    Box { half_extents: Vec<f64> },
    /// Axis-aligned ellipsoid `1 - sum x_i^2 / a_i^2 >= 0`.
    Ellipsoid { semi_axes: Vec<f64> },
    /// Circular cylinder of `radius` along z, `|z| <= half_height`.
    Cylinder { radius: f64, half_height: f64 },
    /// Elliptical cone with apex at the origin opening along +z, clipped to
    /// `0 <= z <= 2h`; its cross-section at height `h` has semi-axes `(a, b)`.
    EllipticalCone { a: f64, b: f64, h: f64 },
}

/// Robot body `{x : f_j(x) >= 0 for all j}` in its body frame.
#[derive(Clone, Debug)]
pub struct SemialgebraicShape {
    dimension: usize,
    inequalities: Vec<Polynomial>,
    bounding_radius: f64,
    primitive: Option<Primitive>,
}

impl SemialgebraicShape {
    /// Shape from raw inequalities. `bounding_radius` must enclose the set.
    pub fn new(dimension: usize, inequalities: Vec<Polynomial>, bounding_radius: f64) -> Result<Self> {
        if !(2..=3).contains(&dimension) {
            return Err(Error::InvalidInput(format!("shape dimension must be 2 or 3, got {dimension}")));
        }
        if inequalities.is_empty() {
            return Err(Error::InvalidInput("shape needs at least one inequality".into()));
        }
        if let Some(p) = inequalities.iter().find(|p| p.dimension() != dimension) {
            return Err(Error::InvalidInput(format!(
                "inequality in {} variables for a {dimension}-D shape",
                p.dimension()
            )));
        }
        if !(bounding_radius.is_finite() && bounding_radius > 0.0) {
            return Err(Error::InvalidInput(format!("bounding radius must be positive, got {bounding_radius}")));
        }
        Ok(Self { dimension, inequalities, bounding_radius, primitive: None })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn inequalities(&self) -> &[Polynomial] {
        &self.inequalities
    }

    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    pub fn primitive(&self) -> Option<&Primitive> {
        self.primitive.as_ref()
    }

    pub fn max_degree(&self) -> u32 {
        self.inequalities.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    /// `N^2 - |x|^2`, the redundant ball constraint that makes the quadratic
    /// module Archimedean.
    pub fn ball_polynomial(&self) -> Polynomial {
        let n = self.dimension;
        let mut p = Polynomial::constant(n, self.bounding_radius * self.bounding_radius);
        for i in 0..n {
            let mut e = vec![0; n];
            e[i] = 2;
            p.add_term(Monomial::new(e), -1.0);
        }
        p
    }

    /// Inequalities with the ball constraint appended.
    pub fn archimedean_inequalities(&self) -> Vec<Polynomial> {
        let mut out = self.inequalities.clone();
        out.push(self.ball_polynomial());
        out
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.inequalities.iter().all(|f| f.evaluate(x) >= -tol)
    }

    /// Uniform samples of the body boundary for the primitives; `None` for
    /// shapes given as raw polynomials.
    pub fn sample_boundary(&self, count: usize, rng: &mut impl rand::Rng) -> Option<Vec<Vec<f64>>> {
        let prim = self.primitive.as_ref()?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(sample_primitive_boundary(prim, rng));
        }
        Some(out)
    }
}

fn sample_primitive_boundary(prim: &Primitive, rng: &mut impl rand::Rng) -> Vec<f64> {
    match prim {
        Primitive::Box { half_extents } => {
            let n = half_extents.len();
            let mut x: Vec<f64> = half_extents.iter().map(|&h| rng.gen_range(-h..=h)).collect();
            let face = rng.gen_range(0..n);
            x[face] = if rng.gen_bool(0.5) { half_extents[face] } else { -half_extents[face] };
            x
        }
        Primitive::Ellipsoid { semi_axes } => {
            let dir = random_unit(semi_axes.len(), rng);
            dir.iter().zip(semi_axes).map(|(d, a)| d * a).collect()
        }
        Primitive::Cylinder { radius, half_height } => {
            let t = rng.gen_range(0.0..2.0 * PI);
            match rng.gen_range(0..3) {
                0 => vec![radius * t.cos(), radius * t.sin(), rng.gen_range(-*half_height..=*half_height)],
                k => {
                    let s = radius * rng.gen_range(0.0f64..1.0).sqrt();
                    let z = if k == 1 { *half_height } else { -*half_height };
                    vec![s * t.cos(), s * t.sin(), z]
                }
            }
        }
        Primitive::EllipticalCone { a, b, h } => {
            let t = rng.gen_range(0.0..2.0 * PI);
            if rng.gen_bool(0.5) {
                let z = rng.gen_range(0.0..=2.0 * h);
                vec![a * z / h * t.cos(), b * z / h * t.sin(), z]
            } else {
                let s = rng.gen_range(0.0f64..1.0).sqrt();
                vec![2.0 * a * s * t.cos(), 2.0 * b * s * t.sin(), 2.0 * h]
            }
        }
    }
}

fn random_unit(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn square(n: usize, var: usize, scale: f64) -> Polynomial {
    let mut e = vec![0; n];
    e[var] = 2;
    let mut p = Polynomial::zero(n);
    p.add_term(Monomial::new(e), scale);
    p
}

/// Build the polynomial description of a primitive in `dimension` (2 or 3).
pub fn make_primitive(dimension: usize, primitive: Primitive) -> Result<SemialgebraicShape> {
    let positive = |v: f64, name: &str| -> Result<()> {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
        }
    };
    let n = dimension;
    let (inequalities, radius) = match &primitive {
        Primitive::Box { half_extents } => {
            if half_extents.len() != n {
                return Err(Error::InvalidInput(format!("box needs {n} half extents")));
            }
            let mut ineqs = Vec::with_capacity(2 * n);
            for (i, &h) in half_extents.iter().enumerate() {
                positive(h, "box half extent")?;
                let mut lin = vec![0.0; n];
                lin[i] = -1.0;
                ineqs.push(Polynomial::affine(h, &lin));
                lin[i] = 1.0;
                ineqs.push(Polynomial::affine(h, &lin));
            }
            let r = half_extents.iter().map(|h| h * h).sum::<f64>().sqrt();
            (ineqs, r)
        }
        Primitive::Ellipsoid { semi_axes } => {
            if semi_axes.len() != n {
                return Err(Error::InvalidInput(format!("ellipsoid needs {n} semi-axes")));
            }
            let mut p = Polynomial::constant(n, 1.0);
            for (i, &a) in semi_axes.iter().enumerate() {
                positive(a, "ellipsoid semi-axis")?;
                p = p.add(&square(n, i, -1.0 / (a * a)));
            }
            (vec![p], semi_axes.iter().cloned().fold(0.0, f64::max))
        }
        Primitive::Cylinder { radius, half_height } => {
            if n != 3 {
                return Err(Error::InvalidInput("cylinder is only defined in 3-D".into()));
            }
            positive(*radius, "cylinder radius")?;
            positive(*half_height, "cylinder half height")?;
            let side = Polynomial::constant(3, radius * radius)
                .add(&square(3, 0, -1.0))
                .add(&square(3, 1, -1.0));
            let top = Polynomial::affine(*half_height, &[0.0, 0.0, -1.0]);
            let bottom = Polynomial::affine(*half_height, &[0.0, 0.0, 1.0]);
            (vec![side, top, bottom], (radius * radius + half_height * half_height).sqrt())
        }
        Primitive::EllipticalCone { a, b, h } => {
            if n != 3 {
                return Err(Error::InvalidInput("elliptical cone is only defined in 3-D".into()));
            }
            positive(*a, "cone semi-axis a")?;
            positive(*b, "cone semi-axis b")?;
            positive(*h, "cone height h")?;
            let side = square(3, 2, 1.0 / (h * h))
                .add(&square(3, 0, -1.0 / (a * a)))
                .add(&square(3, 1, -1.0 / (b * b)));
            let base = Polynomial::affine(0.0, &[0.0, 0.0, 1.0]);
            let cap = Polynomial::affine(2.0 * h, &[0.0, 0.0, -1.0]);
            let rim = 2.0 * a.max(*b);
            (vec![side, base, cap], (rim * rim + 4.0 * h * h).sqrt())
        }
    };
    let mut shape = SemialgebraicShape::new(n, inequalities, radius)?;
    shape.primitive = Some(primitive);
    Ok(shape)
}

/// Which state coordinates a configuration carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigKind {
    /// `(x, y, theta)`
    Planar,
    /// `(x, y, z, yaw)`
    Spatial,
}

impl ConfigKind {
    pub fn len(self) -> usize {
        match self {
            ConfigKind::Planar => 3,
            ConfigKind::Spatial => 4,
        }
    }

    pub fn workspace_dim(self) -> usize {
        match self {
            ConfigKind::Planar => 2,
            ConfigKind::Spatial => 3,
        }
    }

    pub fn angle_index(self) -> usize {
        self.len() - 1
    }

    pub fn for_workspace_dim(dim: usize) -> Result<Self> {
        match dim {
            2 => Ok(ConfigKind::Planar),
            3 => Ok(ConfigKind::Spatial),
            _ => Err(Error::InvalidInput(format!("unsupported workspace dimension {dim}"))),
        }
    }
}

/// Rigid-body configuration with its heading wrapped to `(-pi, pi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    kind: ConfigKind,
    values: Vec<f64>,
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

impl Configuration {
    pub fn new(kind: ConfigKind, values: &[f64]) -> Result<Self> {
        if values.len() != kind.len() {
            return Err(Error::InvalidInput(format!(
                "{kind:?} configuration needs {} values, got {}",
                kind.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("configuration has non-finite values".into()));
        }
        let mut values = values.to_vec();
        let a = kind.angle_index();
        values[a] = wrap_angle(values[a]);
        Ok(Self { kind, values })
    }

    pub fn planar(x: f64, y: f64, theta: f64) -> Self {
        Self::new(ConfigKind::Planar, &[x, y, theta]).expect("finite planar configuration")
    }

    pub fn spatial(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(ConfigKind::Spatial, &[x, y, z, yaw]).expect("finite spatial configuration")
    }

    pub fn kind(&self) -> ConfigKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn position(&self) -> &[f64] {
        &self.values[..self.kind.workspace_dim()]
    }

    pub fn angle(&self) -> f64 {
        self.values[self.kind.angle_index()]
    }
}

/// Rotation and translation of the body frame in the world, plus their
/// partial derivatives with respect to each configuration coordinate.
#[derive(Clone, Debug)]
pub struct PoseWithJacobians {
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
    pub d_rotation: Vec<DMatrix<f64>>,
    pub d_translation: Vec<DVector<f64>>,
}

impl PoseWithJacobians {
    pub fn dimension(&self) -> usize {
        self.translation.len()
    }

    /// Body-frame point mapped to the world.
    pub fn transform(&self, body: &[f64]) -> DVector<f64> {
        &self.rotation * DVector::from_column_slice(body) + &self.translation
    }
}

pub fn pose_from_config(c: &Configuration) -> PoseWithJacobians {
    let (s, co) = c.angle().sin_cos();
    match c.kind() {
        ConfigKind::Planar => {
            let rotation = DMatrix::from_row_slice(2, 2, &[co, -s, s, co]);
            let dr = DMatrix::from_row_slice(2, 2, &[-s, -co, co, -s]);
            let zero = DMatrix::zeros(2, 2);
            PoseWithJacobians {
                rotation,
                translation: DVector::from_column_slice(c.position()),
                d_rotation: vec![zero.clone(), zero, dr],
                d_translation: vec![
                    DVector::from_column_slice(&[1.0, 0.0]),
                    DVector::from_column_slice(&[0.0, 1.0]),
                    DVector::zeros(2),
                ],
            }
        }
        ConfigKind::Spatial => {
            let rotation = DMatrix::from_row_slice(3, 3, &[co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0]);
            let dr = DMatrix::from_row_slice(3, 3, &[-s, -co, 0.0, co, -s, 0.0, 0.0, 0.0, 0.0]);
            let zero = DMatrix::zeros(3, 3);
            let e = |i: usize| {
                let mut v = DVector::zeros(3);
                v[i] = 1.0;
                v
            };
            PoseWithJacobians {
                rotation,
                translation: DVector::from_column_slice(c.position()),
                d_rotation: vec![zero.clone(), zero.clone(), zero, dr],
                d_translation: vec![e(0), e(1), e(2), DVector::zeros(3)],
            }
        }
    }
}

/// Polytopic free region `{x : g - F (x - origin) >= 0}` with unit-norm rows
/// of `F`, `g > 0`, and `origin` (its scaling center) strictly inside.
///
/// The scaled family is `Q(alpha) = {x : alpha g - F (x - origin) >= 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    f: DMatrix<f64>,
    g: DVector<f64>,
    origin: DVector<f64>,
}

impl Polytope {
    /// Region in an already-normalized frame. Checks `g > 0`, nonzero rows
    /// and boundedness; rows are not rescaled.
    pub fn new(f: DMatrix<f64>, g: DVector<f64>, origin: DVector<f64>) -> Result<Self> {
        let (r, z) = f.shape();
        if r == 0 || g.len() != r || origin.len() != z {
            return Err(Error::InvalidInput(format!(
                "polytope shape mismatch: F is {r}x{z}, g has {}, origin has {}",
                g.len(),
                origin.len()
            )));
        }
        if f.iter().chain(g.iter()).chain(origin.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("polytope has non-finite entries".into()));
        }
        if let Some(i) = (0..r).find(|&i| g[i] <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "g[{i}] = {} is not positive; frame origin must be strictly interior",
                g[i]
            )));
        }
        if let Some(i) = (0..r).find(|&i| f.row(i).norm() == 0.0) {
            return Err(Error::InvalidInput(format!("row {i} of F is zero")));
        }
        if !is_bounded(&f, &g)? {
            return Err(Error::UnboundedPolytope);
        }
        Ok(Self { f, g, origin })
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn origin(&self) -> &DVector<f64> {
        &self.origin
    }

    pub fn dimension(&self) -> usize {
        self.f.ncols()
    }

    pub fn num_facets(&self) -> usize {
        self.f.nrows()
    }

    /// World-frame description `F x <= g_raw`.
    pub fn world_constraints(&self) -> (DMatrix<f64>, DVector<f64>) {
        (self.f.clone(), &self.g + &self.f * &self.origin)
    }

    /// `min_i (alpha g_i - F_i (x - origin))`; with unit rows this is the
    /// distance to the nearest facet of `Q(alpha)` when positive.
    pub fn scaled_min_slack(&self, x: &[f64], alpha: f64) -> f64 {
        let local = DVector::from_column_slice(x) - &self.origin;
        let fx = &self.f * local;
        (0..self.num_facets())
            .map(|i| alpha * self.g[i] - fx[i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_slack(&self, x: &[f64]) -> f64 {
        self.scaled_min_slack(x, 1.0)
    }

    pub fn contains(&self, x: &[f64], margin: f64) -> bool {
        self.min_slack(x) >= margin
    }

    /// Smallest `alpha` with `x in Q(alpha)`.
    pub fn point_scaling(&self, x: &[f64]) -> f64 {
        let local = DVector::from_column_slice(x) - &self.origin;
        let fx = &self.f * local;
        (0..self.num_facets())
            .map(|i| fx[i] / self.g[i])
            .fold(0.0, f64::max)
    }

    /// Intersection with another region (rows stacked), renormalized about
    /// its own Chebyshev center.
    pub fn intersection(&self, other: &Polytope) -> Result<Polytope> {
        let (fa, ga) = self.world_constraints();
        let (fb, gb) = other.world_constraints();
        let r = fa.nrows() + fb.nrows();
        let z = self.dimension();
        let mut f = DMatrix::zeros(r, z);
        let mut g = DVector::zeros(r);
        f.rows_mut(0, fa.nrows()).copy_from(&fa);
        f.rows_mut(fa.nrows(), fb.nrows()).copy_from(&fb);
        g.rows_mut(0, ga.len()).copy_from(&ga);
        g.rows_mut(ga.len(), gb.len()).copy_from(&gb);
        normalize_region(&f, &g)
    }

    /// Vertices of a 2-D or 3-D region in world coordinates (unordered).
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let z = self.dimension();
        let r = self.num_facets();
        let mut out: Vec<DVector<f64>> = Vec::new();
        let mut idx = vec![0usize; z];
        let mut push = |rows: &[usize]| {
            let a = DMatrix::from_fn(z, z, |i, j| self.f[(rows[i], j)]);
            let b = DVector::from_fn(z, |i, _| self.g[rows[i]]);
            if let Some(x) = a.lu().solve(&b) {
                let world = &x + &self.origin;
                if self.min_slack(world.as_slice()) >= -1e-9
                    && !out.iter().any(|v| (v - &world).norm() < 1e-9)
                {
                    out.push(world);
                }
            }
        };
        fn combos(start: usize, depth: usize, r: usize, idx: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if depth == idx.len() {
                f(idx);
                return;
            }
            for i in start..r {
                idx[depth] = i;
                combos(i + 1, depth + 1, r, idx, f);
            }
        }
        combos(0, 0, r, &mut idx, &mut push);
        out
    }
}

/// Body-frame affine forms of every facet of the scaled region:
/// `f_i(alpha)(x) = alpha g_i + constant_i + linear_i . x`, where
/// `constant_i = -F_i p` and `linear_i = -F_i R` with `(R, p)` the body pose
/// in the region frame. Derivatives are per configuration coordinate.
#[derive(Clone, Debug)]
pub struct BodyFrameRows {
    pub g: DVector<f64>,
    pub constant: DVector<f64>,
    pub linear: DMatrix<f64>,
    pub d_constant: Vec<DVector<f64>>,
    pub d_linear: Vec<DMatrix<f64>>,
}

pub fn region_rows_in_body_frame(region: &Polytope, pose: &PoseWithJacobians) -> BodyFrameRows {
    let p_local = &pose.translation - &region.origin;
    let constant = -(&region.f * p_local);
    let linear = -(&region.f * &pose.rotation);
    let d_constant = pose.d_translation.iter().map(|dp| -(&region.f * dp)).collect();
    let d_linear = pose.d_rotation.iter().map(|dr| -(&region.f * dr)).collect();
    BodyFrameRows { g: region.g.clone(), constant, linear, d_constant, d_linear }
}

/// Returns `false` if some direction escapes to infinity.
pub fn is_bounded(f: &DMatrix<f64>, g: &DVector<f64>) -> Result<bool> {
    let z = f.ncols();
    let rows: Vec<Vec<f64>> = f.row_iter().map(|r| r.iter().copied().collect()).collect();
    let rhs: Vec<f64> = g.iter().copied().collect();
    for k in 0..z {
        for sign in [1.0, -1.0] {
            let mut c = vec![0.0; z];
            c[k] = sign;
            let sol = lp::maximize(&c, &rows, &rhs, &[])?;
            match sol.status {
                LpStatus::Unbounded => return Ok(false),
                LpStatus::Infeasible => return Err(Error::EmptyPolytope),
                LpStatus::Optimal => {}
            }
        }
    }
    Ok(true)
}

/// Center and radius of the largest ball inside `{x : F x <= g_raw}`.
pub fn chebyshev_center(f: &DMatrix<f64>, g_raw: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let (r, z) = f.shape();
    if g_raw.len() != r || r == 0 {
        return Err(Error::InvalidInput("F and g have mismatched sizes".into()));
    }
    if !is_bounded(f, g_raw)? {
        return Err(Error::UnboundedPolytope);
    }
    let norms: Vec<f64> = (0..r).map(|i| f.row(i).norm()).collect();
    // Lexicographic max-min of facet distances: the first stage is the usual
    // Chebyshev LP; later stages spread the remaining freedom over facets
    // that are not yet pinned, so ties (e.g. long boxes) resolve to the middle.
    let mut floor: Vec<Option<f64>> = vec![None; r];
    let mut center = DVector::zeros(z);
    let mut radius = 0.0;
    for stage in 0..=z {
        let free: Vec<usize> = (0..r).filter(|&i| floor[i].is_none()).collect();
        if free.is_empty() {
            break;
        }
        let (rows, rhs) = staged_rows(f, g_raw, &norms, &floor, &free);
        let mut c = vec![0.0; z + 1];
        c[z] = 1.0;
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); z + 1];
        if stage == 0 {
            bounds[z] = (0.0, f64::INFINITY);
        }
        let sol = lp::maximize(&c, &rows, &rhs, &bounds)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible if stage == 0 => return Err(Error::EmptyPolytope),
            LpStatus::Unbounded if stage == 0 => return Err(Error::UnboundedPolytope),
            _ => break,
        }
        let t = sol.x[z];
        center = DVector::from_column_slice(&sol.x[..z]);
        if stage == 0 {
            radius = t;
        }
        // Pin every free facet whose distance cannot exceed t.
        let eps = 1e-9 * (1.0 + t.abs());
        let mut pinned_any = false;
        for &i in &free {
            let mut probe_floor = floor.clone();
            for &j in &free {
                probe_floor[j] = Some(t - eps);
            }
            probe_floor[i] = None;
            let (rows, rhs) = staged_rows(f, g_raw, &norms, &probe_floor, &[i]);
            let probe = lp::maximize(&c, &rows, &rhs, &[])?;
            let can_grow = probe.status == LpStatus::Unbounded
                || (probe.status == LpStatus::Optimal && probe.x[z] > t + 10.0 * eps);
            if !can_grow {
                floor[i] = Some(t - eps);
                pinned_any = true;
            }
        }
        if !pinned_any {
            break;
        }
    }
    Ok((center, radius))
}

// Rows for: maximize t  s.t.  dist_i(x) >= floor_i  (pinned facets) and
// dist_j(x) >= t for j in `free`, with dist_i(x) = (g_i - F_i x) / |F_i|.
fn staged_rows(
    f: &DMatrix<f64>,
    g_raw: &DVector<f64>,
    norms: &[f64],
    floor: &[Option<f64>],
    free: &[usize],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..f.nrows() {
        if !free.contains(&i) && floor[i].is_none() {
            continue;
        }
        let mut row: Vec<f64> = f.row(i).iter().map(|v| v / norms[i]).collect();
        let b = g_raw[i] / norms[i];
        if free.contains(&i) {
            row.push(1.0);
            rows.push(row);
            rhs.push(b);
        } else {
            row.push(0.0);
            rows.push(row);
            rhs.push(b - floor[i].unwrap_or(f64::NEG_INFINITY));
        }
    }
    (rows, rhs)
}


/// Smallest inscribed radius accepted by [`normalize_region`].
pub const MIN_REGION_RADIUS: f64 = 1e-9;

/// Move the frame to the Chebyshev center and scale rows of `F` to unit norm.
pub fn normalize_region(f: &DMatrix<f64>, g_raw: &DVector<f64>) -> Result<Polytope> {
    let (center, radius) = chebyshev_center(f, g_raw)?;
    if radius <= MIN_REGION_RADIUS {
        return Err(Error::DegenerateRegion { radius });
    }
    let r = f.nrows();
    let mut fn_ = f.clone();
    let mut g = DVector::zeros(r);
    for i in 0..r {
        let norm = f.row(i).norm();
        if norm == 0.0 {
            return Err(Error::InvalidInput(format!("row {i} of F is zero")));
        }
        let slack = g_raw[i] - f.row(i).dot(&center.transpose());
        fn_.row_mut(i).scale_mut(1.0 / norm);
        g[i] = slack / norm;
    }
    Ok(Polytope { f: fn_, g, origin: center })
}

/// Axis-aligned box `[lower, upper]` as a normalized region.
pub fn box_region(lower: &[f64], upper: &[f64]) -> Result<Polytope> {
    let z = lower.len();
    if upper.len() != z {
        return Err(Error::InvalidInput("box bounds have different lengths".into()));
    }
    let mut f = DMatrix::zeros(2 * z, z);
    let mut g = DVector::zeros(2 * z);
    for k in 0..z {
        f[(2 * k, k)] = 1.0;
        g[2 * k] = upper[k];
        f[(2 * k + 1, k)] = -1.0;
        g[2 * k + 1] = -lower[k];
    }
    normalize_region(&f, &g)
}
