//! Planning scenarios: a JSON file describing the map, the robot and the
//! optimizer setup.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freespace::{Obstacle, Provenance, RegionSet};
use crate::geometry::{box_region, make_primitive, normalize_region, Configuration, Primitive, SemialgebraicShape};
use crate::polynomial::{Polynomial, TermRecord};
use crate::trajectory::{Costs, DynamicsModel, ModelKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotSpec {
    Primitive(Primitive),
    /// Raw inequalities `f_j(x) >= 0`, each a list of terms.
    Polynomials {
        dimension: usize,
        bounding_radius: f64,
        inequalities: Vec<Vec<TermRecord>>,
    },
}

/// Explicit free region, used instead of decomposing the map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    Box { min: Vec<f64>, max: Vec<f64> },
    /// `{x : a x <= b}`
    Halfspaces { a: Vec<Vec<f64>>, b: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub qf: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyMode {
    /// Every step stays inside its allocated region.
    All,
    /// Only the final state is constrained, to its allocated region.
    Terminal,
}

fn default_dt() -> f64 {
    0.1
}
fn default_ctol() -> f64 {
    1e-4
}
fn default_coverage() -> f64 {
    0.02
}
fn default_overlap() -> f64 {
    0.05
}
fn default_max_regions() -> usize {
    200
}
fn default_max_outer() -> usize {
    200
}
fn default_safety() -> SafetyMode {
    SafetyMode::All
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub workspace: Workspace,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<RegionSpec>>,
    pub robot: RobotSpec,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub dynamics: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Weights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_bounds: Option<Bounds>,
    #[serde(default = "default_ctol")]
    pub ctol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation_order: Option<u32>,
    #[serde(default = "default_coverage")]
    pub coverage_threshold: f64,
    #[serde(default = "default_overlap")]
    pub overlap_threshold: f64,
    #[serde(default = "default_max_regions")]
    pub max_regions: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_safety")]
    pub safety: SafetyMode,
}

/// Command-line values that replace scenario fields when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub horizon: Option<usize>,
    pub ctol: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub relaxation_order: Option<u32>,
    pub coverage_threshold: Option<f64>,
    pub overlap_threshold: Option<f64>,
}

impl Scenario {
    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| {
            Error::parse(format!("{context} line {} column {}", e.line(), e.column()), e)
        })?;
        s.validate().map_err(|e| match e {
            Error::Parse { .. } => e,
            other => Error::parse(context, other),
        })?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.horizon {
            self.horizon = v;
        }
        if let Some(v) = o.ctol {
            self.ctol = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.threads {
            self.threads = Some(v);
        }
        if let Some(v) = o.relaxation_order {
            self.relaxation_order = Some(v);
        }
        if let Some(v) = o.coverage_threshold {
            self.coverage_threshold = v;
        }
        if let Some(v) = o.overlap_threshold {
            self.overlap_threshold = v;
        }
        self.validate()
    }

    pub fn dimension(&self) -> usize {
        self.workspace.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let z = self.dimension();
        let ws = &self.workspace;
        if !(2..=3).contains(&z) || ws.upper.len() != z {
            return bad("workspace bounds must be 2-D or 3-D and agree in length".into());
        }
        if ws.lower.iter().zip(&ws.upper).any(|(l, u)| !(l < u)) {
            return bad("workspace lower bound must be below upper bound".into());
        }
        if !(ws.resolution > 0.0) {
            return bad("resolution must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.dt > 0.0) || !(self.ctol > 0.0) {
            return bad("dt and ctol must be positive".into());
        }
        if !(0.0..1.0).contains(&self.coverage_threshold) || !(self.overlap_threshold >= 0.0) {
            return bad("coverage threshold must lie in [0, 1) and overlap threshold be nonnegative".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        let model = self.model()?;
        if model.config_kind().workspace_dim() != z {
            return bad(format!("{:?} dynamics do not match a {z}-D workspace", self.dynamics));
        }
        let q = model.config_kind().len();
        for (name, c) in [("start", &self.start), ("goal", &self.goal)] {
            if c.len() != q {
                return bad(format!("{name} needs {q} values, got {}", c.len()));
            }
            if (0..z).any(|k| c[k] < ws.lower[k] || c[k] > ws.upper[k]) {
                return bad(format!("{name} position lies outside the workspace"));
            }
        }
        let shape = self.shape()?;
        if shape.dimension() != z {
            return bad(format!("robot is {}-D in a {z}-D workspace", shape.dimension()));
        }
        self.costs()?;
        if let Some(b) = &self.input_bounds {
            let m = model.input_dim();
            if b.lower.len() != m || b.upper.len() != m || b.lower.iter().zip(&b.upper).any(|(l, u)| l > u) {
                return bad(format!("input bounds need {m} ordered pairs"));
            }
        }
        if let Some(regions) = &self.regions {
            if regions.is_empty() {
                return bad("explicit region list is empty".into());
            }
            self.explicit_regions()?;
        }
        for (k, o) in self.obstacles.iter().enumerate() {
            let ok = match o {
                Obstacle::Box { min, max } => min.len() == z && max.len() == z,
                Obstacle::Polytope { a, b } => a.len() == b.len() && a.iter().all(|r| r.len() == z),
            };
            if !ok {
                return bad(format!("obstacle {k} has the wrong dimension"));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<DynamicsModel> {
        DynamicsModel::new(self.dynamics, self.dt)
    }

    pub fn shape(&self) -> Result<SemialgebraicShape> {
        match &self.robot {
            RobotSpec::Primitive(p) => make_primitive(self.dimension(), p.clone()),
            RobotSpec::Polynomials { dimension, bounding_radius, inequalities } => {
                let polys = inequalities
                    .iter()
                    .map(|terms| Polynomial::from_records(*dimension, terms))
                    .collect::<Result<Vec<_>>>()?;
                SemialgebraicShape::new(*dimension, polys, *bounding_radius)
            }
        }
    }

    pub fn start_config(&self) -> Configuration {
        Configuration::new(self.dynamics_kind(), &self.start).expect("validated")
    }

    pub fn goal_config(&self) -> Configuration {
        Configuration::new(self.dynamics_kind(), &self.goal).expect("validated")
    }

    fn dynamics_kind(&self) -> crate::geometry::ConfigKind {
        DynamicsModel { kind: self.dynamics, dt: self.dt }.config_kind()
    }

    /// Scenario weights, or per-model defaults.
    pub fn costs(&self) -> Result<Costs> {
        let model = self.model()?;
        let (n, m) = (model.state_dim(), model.input_dim());
        let w = match &self.weights {
            Some(w) => w.clone(),
            None => default_weights(self.dynamics),
        };
        if w.q.len() != n || w.qf.len() != n || w.r.len() != m {
            return Err(Error::InvalidInput(format!("weights need {n} state and {m} input entries")));
        }
        if w.q.iter().chain(&w.qf).any(|v| !(*v >= 0.0)) || w.r.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("state weights must be nonnegative and input weights positive".into()));
        }
        Ok(Costs::diagonal(&w.q, &w.r, &w.qf))
    }

    pub fn explicit_regions(&self) -> Result<Option<RegionSet>> {
        let Some(specs) = &self.regions else { return Ok(None) };
        let z = self.dimension();
        let mut regions = Vec::with_capacity(specs.len());
        for (k, spec) in specs.iter().enumerate() {
            let region = match spec {
                RegionSpec::Box { min, max } if min.len() == z && max.len() == z => box_region(min, max),
                RegionSpec::Halfspaces { a, b } if a.len() == b.len() && a.iter().all(|r| r.len() == z) => {
                    let f = DMatrix::from_fn(a.len(), z, |i, j| a[i][j]);
                    normalize_region(&f, &DVector::from_column_slice(b))
                }
                _ => Err(Error::InvalidInput("wrong dimension".into())),
            }
            .map_err(|e| Error::InvalidInput(format!("region {k}: {e}")))?;
            regions.push(region);
        }
        Ok(Some(RegionSet { regions, provenance: Provenance::Loaded }))
    }
}

pub fn default_weights(kind: ModelKind) -> Weights {
    match kind {
        ModelKind::PlanarUnicycle => Weights { q: vec![1.0, 1.0, 0.1], r: vec![0.1, 0.1], qf: vec![100.0, 100.0, 10.0] },
        ModelKind::PlanarDoubleIntegrator => Weights {
            q: vec![1.0, 1.0, 0.1, 0.01, 0.01, 0.01],
            r: vec![0.1; 3],
            qf: vec![100.0, 100.0, 10.0, 10.0, 10.0, 10.0],
        },
        ModelKind::SpatialYawKinematic => {
            Weights { q: vec![1.0, 1.0, 1.0, 0.1], r: vec![0.1; 4], qf: vec![100.0, 100.0, 100.0, 10.0] }
        }
    }
}
