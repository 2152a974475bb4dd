//! Augmented-Lagrangian iLQR with containment constraints `alpha_tau <= 1`.
//!
//! The safety constraint at step `tau` is the optimal value of the scaling
//! SDP for the region assigned to that step, imposed facet by facet so each
//! constraint stays smooth where two facets tie. Gradients come from the SDP
//! duals and enter the backward pass through a Gauss-Newton penalty term.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::ConicStatus;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, ConfigKind, Configuration};
use crate::scaling_sdp::{FacetScaling, ScalingProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// State `(x, y, theta)`, input `(v, omega)`.
    PlanarUnicycle,
    /// State `(x, y, theta, vx, vy, omega)`, input accelerations.
    PlanarDoubleIntegrator,
    /// State `(x, y, z, yaw)`, input world-frame velocities.
    SpatialYawKinematic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicsModel {
    pub kind: ModelKind,
    pub dt: f64,
}

impl DynamicsModel {
    pub fn new(kind: ModelKind, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("timestep {dt} must be positive")));
        }
        Ok(Self { kind, dt })
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            ModelKind::PlanarUnicycle => 3,
            ModelKind::PlanarDoubleIntegrator => 6,
            ModelKind::SpatialYawKinematic => 4,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.kind {
            ModelKind::PlanarUnicycle => 2,
            ModelKind::PlanarDoubleIntegrator => 3,
            ModelKind::SpatialYawKinematic => 4,
        }
    }

    pub fn config_kind(&self) -> ConfigKind {
        match self.kind {
            ModelKind::SpatialYawKinematic => ConfigKind::Spatial,
            _ => ConfigKind::Planar,
        }
    }

    /// Pose part of a state; the configuration coordinates are always the
    /// leading state entries.
    pub fn config_of(&self, x: &DVector<f64>) -> Configuration {
        let n = self.config_kind().len();
        Configuration::new(self.config_kind(), &x.as_slice()[..n]).expect("length matches kind")
    }

    /// State at rest with the given pose.
    pub fn state_from_config(&self, q: &Configuration) -> DVector<f64> {
        let mut x = DVector::zeros(self.state_dim());
        x.rows_mut(0, q.values().len()).copy_from_slice(q.values());
        x
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let dt = self.dt;
        match self.kind {
            ModelKind::PlanarUnicycle => {
                let (s, c) = x[2].sin_cos();
                DVector::from_column_slice(&[x[0] + dt * u[0] * c, x[1] + dt * u[0] * s, x[2] + dt * u[1]])
            }
            ModelKind::PlanarDoubleIntegrator => {
                let mut next = x.clone();
                for k in 0..3 {
                    next[k] = x[k] + dt * x[k + 3] + 0.5 * dt * dt * u[k];
                    next[k + 3] = x[k + 3] + dt * u[k];
                }
                next
            }
            ModelKind::SpatialYawKinematic => x + u * dt,
        }
    }

    /// `(df/dx, df/du)` at `(x, u)`.
    pub fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let dt = self.dt;
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut a = DMatrix::identity(n, n);
        let mut b = DMatrix::zeros(n, m);
        match self.kind {
            ModelKind::PlanarUnicycle => {
                let (s, c) = x[2].sin_cos();
                a[(0, 2)] = -dt * u[0] * s;
                a[(1, 2)] = dt * u[0] * c;
                b[(0, 0)] = dt * c;
                b[(1, 0)] = dt * s;
                b[(2, 1)] = dt;
            }
            ModelKind::PlanarDoubleIntegrator => {
                for k in 0..3 {
                    a[(k, k + 3)] = dt;
                    b[(k, k)] = 0.5 * dt * dt;
                    b[(k + 3, k)] = dt;
                }
            }
            ModelKind::SpatialYawKinematic => {
                b = DMatrix::identity(n, m) * dt;
            }
        }
        (a, b)
    }
}

/// States `x_0..x_T` produced by applying `inputs` from `x0`.
pub fn rollout(model: &DynamicsModel, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let mut xs = Vec::with_capacity(inputs.len() + 1);
    xs.push(x0.clone());
    for (tau, u) in inputs.iter().enumerate() {
        let next = model.step(&xs[tau], u);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { tau: tau + 1 });
        }
        xs.push(next);
    }
    Ok(xs)
}

/// Quadratic tracking costs: stage `1/2 |x - ref|_Q^2 + 1/2 |u|_R^2`,
/// terminal `1/2 |x_T - goal|_Qf^2`.
#[derive(Clone, Debug)]
pub struct Costs {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qf: DMatrix<f64>,
}

impl Costs {
    pub fn diagonal(q: &[f64], r: &[f64], qf: &[f64]) -> Self {
        Self {
            q: DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            r: DMatrix::from_diagonal(&DVector::from_column_slice(r)),
            qf: DMatrix::from_diagonal(&DVector::from_column_slice(qf)),
        }
    }
}

/// Where the containment constraint applies.
#[derive(Clone, Debug, PartialEq)]
pub enum Safety {
    None,
    /// Only the final state, inside the given region.
    Terminal(usize),
    /// Region per step `0..=T`; step 0 is reported but not constrained.
    All(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub model: DynamicsModel,
    pub horizon: usize,
    pub costs: Costs,
    /// `T + 1` tracked states.
    pub reference: Vec<DVector<f64>>,
    pub goal: DVector<f64>,
    pub x0: DVector<f64>,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub state_lower: Option<Vec<f64>>,
    pub state_upper: Option<Vec<f64>>,
    pub safety: Safety,
    /// Safety is enforced as `alpha <= 1 - safety_margin`.
    pub safety_margin: f64,
}

impl ProblemSpec {
    /// Unconstrained problem tracking `goal` at every step.
    pub fn new(model: DynamicsModel, horizon: usize, costs: Costs, x0: DVector<f64>, goal: DVector<f64>) -> Self {
        let m = model.input_dim();
        Self {
            model,
            horizon,
            costs,
            reference: vec![goal.clone(); horizon + 1],
            goal,
            x0,
            input_lower: vec![f64::NEG_INFINITY; m],
            input_upper: vec![f64::INFINITY; m],
            state_lower: None,
            state_upper: None,
            safety: Safety::None,
            safety_margin: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = (self.model.state_dim(), self.model.input_dim());
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        let bad_shape = self.costs.q.shape() != (n, n)
            || self.costs.qf.shape() != (n, n)
            || self.costs.r.shape() != (m, m)
            || self.reference.len() != self.horizon + 1
            || self.reference.iter().any(|r| r.len() != n)
            || self.goal.len() != n
            || self.x0.len() != n
            || self.input_lower.len() != m
            || self.input_upper.len() != m;
        if bad_shape {
            return Err(Error::InvalidInput("problem dimensions are inconsistent".into()));
        }
        if self.costs.r.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("input weight R must be positive definite".into()));
        }
        if let Safety::All(regions) = &self.safety {
            if regions.len() != self.horizon + 1 {
                return Err(Error::InvalidInput("need one region per step".into()));
            }
        }
        Ok(())
    }

    fn safety_region(&self, tau: usize) -> Option<usize> {
        match &self.safety {
            Safety::None => None,
            Safety::Terminal(r) => (tau == self.horizon).then_some(*r),
            Safety::All(regions) => regions.get(tau).copied(),
        }
    }

    fn constrained(&self, tau: usize) -> bool {
        tau > 0 && self.safety_region(tau).is_some()
    }

    fn stage_cost(&self, tau: usize, x: &DVector<f64>, u: Option<&DVector<f64>>) -> f64 {
        match u {
            Some(u) => {
                let dx = x - &self.reference[tau];
                0.5 * dx.dot(&(&self.costs.q * &dx)) + 0.5 * u.dot(&(&self.costs.r * u))
            }
            None => {
                let dx = x - &self.goal;
                0.5 * dx.dot(&(&self.costs.qf * &dx))
            }
        }
    }

    /// Objective without constraint terms.
    pub fn cost(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
        let mut total = 0.0;
        for tau in 0..self.horizon {
            total += self.stage_cost(tau, &xs[tau], Some(&us[tau]));
        }
        total + self.stage_cost(self.horizon, &xs[self.horizon], None)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AlSettings {
    pub mu_init: f64,
    pub mu_growth: f64,
    pub mu_max: f64,
    pub lambda_max: f64,
    pub ctol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative cost decrease below which the inner iLQR loop stops.
    pub inner_tol: f64,
    pub line_search_steps: usize,
    pub reg_max: f64,
}

impl Default for AlSettings {
    fn default() -> Self {
        Self {
            mu_init: 1.0,
            mu_growth: 10.0,
            mu_max: 1e8,
            lambda_max: 1e8,
            ctol: 1e-4,
            max_outer: 200,
            max_inner: 10,
            inner_tol: 1e-6,
            line_search_steps: 12,
            reg_max: 1e10,
        }
    }
}

// One inequality c(x, u) <= 0 at a step, with its gradients.
#[derive(Clone, Debug)]
struct Constraint {
    value: f64,
    dx: DVector<f64>,
    du: Option<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub struct AlState {
    pub lambda: Vec<Vec<f64>>,
    pub mu: f64,
}

/// Evaluates the containment constraint for the configurations of `xs`.
struct SafetyOracle<'a> {
    problems: &'a [ScalingProblem],
    solve_time: Duration,
    solves: usize,
}

impl SafetyOracle<'_> {
    fn evaluate(&mut self, spec: &ProblemSpec, xs: &[DVector<f64>]) -> Result<Vec<Option<Vec<FacetScaling>>>> {
        let start = Instant::now();
        let jobs: Vec<(usize, usize)> =
            (0..xs.len()).filter_map(|tau| spec.safety_region(tau).map(|r| (tau, r))).collect();
        let results: Vec<Result<(usize, Vec<FacetScaling>)>> = jobs
            .par_iter()
            .map(|&(tau, r)| {
                let problem = self
                    .problems
                    .get(r)
                    .ok_or_else(|| Error::InvalidInput(format!("no scaling problem for region {r}")))?;
                Ok((tau, problem.facet_scalings(&spec.model.config_of(&xs[tau]))?))
            })
            .collect();
        self.solves += jobs.len();
        self.solve_time += start.elapsed();
        let mut out = vec![None; xs.len()];
        for r in results {
            let (tau, e) = r?;
            out[tau] = Some(e);
        }
        Ok(out)
    }
}

fn constraints_at(
    spec: &ProblemSpec,
    tau: usize,
    x: &DVector<f64>,
    u: Option<&DVector<f64>>,
    safety: Option<&Vec<FacetScaling>>,
) -> Vec<Constraint> {
    let (n, m) = (spec.model.state_dim(), spec.model.input_dim());
    let mut out = Vec::new();
    if let Some(u) = u {
        for k in 0..m {
            let mut e = DVector::zeros(m);
            if spec.input_upper[k].is_finite() {
                e[k] = 1.0;
                out.push(Constraint { value: u[k] - spec.input_upper[k], dx: DVector::zeros(n), du: Some(e.clone()) });
            }
            if spec.input_lower[k].is_finite() {
                e[k] = -1.0;
                out.push(Constraint { value: spec.input_lower[k] - u[k], dx: DVector::zeros(n), du: Some(e) });
            }
        }
    }
    if tau > 0 {
        for (bounds, sign) in [(&spec.state_upper, 1.0), (&spec.state_lower, -1.0)] {
            if let Some(b) = bounds {
                for k in 0..n {
                    if b[k].is_finite() {
                        let mut e = DVector::zeros(n);
                        e[k] = sign;
                        out.push(Constraint { value: sign * (x[k] - b[k]), dx: e, du: None });
                    }
                }
            }
        }
    }
    if spec.constrained(tau) {
        for f in safety.expect("safety evaluated wherever constrained") {
            let mut dx = DVector::zeros(n);
            for (k, g) in f.gradient.iter().enumerate() {
                dx[k] = *g;
            }
            out.push(Constraint { value: f.alpha - 1.0 + spec.safety_margin, dx, du: None });
        }
    }
    out
}

fn al_term(c: &Constraint, lambda: f64, mu: f64) -> f64 {
    let v = (lambda + mu * c.value).max(0.0);
    (v * v - lambda * lambda) / (2.0 * mu)
}

#[derive(Clone)]
struct Evaluated {
    xs: Vec<DVector<f64>>,
    us: Vec<DVector<f64>>,
    constraints: Vec<Vec<Constraint>>,
    cost: f64,
}

impl Evaluated {
    fn merit(&self, al: &AlState) -> f64 {
        let mut total = self.cost;
        for (cs, ls) in self.constraints.iter().zip(&al.lambda) {
            for (c, &l) in cs.iter().zip(ls) {
                total += al_term(c, l, al.mu);
            }
        }
        total
    }

    fn violation(&self) -> f64 {
        self.constraints.iter().flatten().map(|c| c.value.max(0.0)).fold(0.0, f64::max)
    }
}

fn evaluate(
    spec: &ProblemSpec,
    oracle: &mut SafetyOracle,
    xs: Vec<DVector<f64>>,
    us: Vec<DVector<f64>>,
) -> Result<Evaluated> {
    let safety = oracle.evaluate(spec, &xs)?;
    let constraints = (0..=spec.horizon)
        .map(|tau| constraints_at(spec, tau, &xs[tau], us.get(tau), safety[tau].as_ref()))
        .collect();
    let cost = spec.cost(&xs, &us);
    Ok(Evaluated { xs, us, constraints, cost })
}

/// Feedback and feedforward gains of one backward pass.
#[derive(Clone, Debug)]
pub struct Gains {
    pub k: Vec<DMatrix<f64>>,
    pub d: Vec<DVector<f64>>,
    /// Linear and quadratic terms of the predicted change for a step `a`:
    /// `a * expected[0] + a^2 * expected[1]`.
    pub expected: [f64; 2],
}

fn backward_pass(spec: &ProblemSpec, ev: &Evaluated, al: &AlState, reg: f64) -> Option<Gains> {
    let t = spec.horizon;
    let (n, m) = (spec.model.state_dim(), spec.model.input_dim());
    let costs = &spec.costs;
    let mu = al.mu;

    let penalty = |tau: usize, lx: &mut DVector<f64>, lxx: &mut DMatrix<f64>, lu: Option<(&mut DVector<f64>, &mut DMatrix<f64>)>| {
        let mut lu = lu;
        for (c, &l) in ev.constraints[tau].iter().zip(&al.lambda[tau]) {
            let w = (l + mu * c.value).max(0.0);
            if w <= 0.0 {
                continue;
            }
            *lx += &c.dx * w;
            *lxx += &c.dx * c.dx.transpose() * mu;
            if let (Some(du), Some((lu_v, luu))) = (&c.du, lu.as_mut()) {
                **lu_v += du * w;
                **luu += du * du.transpose() * mu;
            }
        }
    };

    let mut vx = &costs.qf * (&ev.xs[t] - &spec.goal);
    let mut vxx = costs.qf.clone();
    penalty(t, &mut vx, &mut vxx, None);

    let mut ks = vec![DMatrix::zeros(m, n); t];
    let mut ds = vec![DVector::zeros(m); t];
    let mut expected = [0.0, 0.0];
    for tau in (0..t).rev() {
        let (x, u) = (&ev.xs[tau], &ev.us[tau]);
        let (a, b) = spec.model.jacobians(x, u);
        let mut lx = &costs.q * (x - &spec.reference[tau]);
        let mut lxx = costs.q.clone();
        let mut lu = &costs.r * u;
        let mut luu = costs.r.clone();
        penalty(tau, &mut lx, &mut lxx, Some((&mut lu, &mut luu)));

        let qx = &lx + a.transpose() * &vx;
        let qu = &lu + b.transpose() * &vx;
        let qxx = &lxx + a.transpose() * &vxx * &a;
        let quu = &luu + b.transpose() * &vxx * &b;
        let qux = b.transpose() * &vxx * &a;
        let quu_reg = &quu + DMatrix::identity(m, m) * reg;
        let chol = quu_reg.cholesky()?;
        let k = -chol.solve(&qux);
        let d = -chol.solve(&qu);

        expected[0] += d.dot(&qu);
        expected[1] += 0.5 * d.dot(&(&quu * &d));
        vx = &qx + k.transpose() * &quu * &d + k.transpose() * &qu + qux.transpose() * &d;
        vxx = &qxx + k.transpose() * &quu * &k + k.transpose() * &qux + qux.transpose() * &k;
        vxx = (&vxx + vxx.transpose()) * 0.5;
        ks[tau] = k;
        ds[tau] = d;
    }
    Some(Gains { k: ks, d: ds, expected })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    /// Converged, but an independent re-solve exceeded the tolerance.
    VerificationFailed,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    /// Containment value per step (`None` where no region is assigned).
    pub alphas: Vec<Option<f64>>,
    pub cost: f64,
    pub violation: f64,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub ilqr_iterations: usize,
    /// Largest constraint violation after each outer iteration.
    pub violation_history: Vec<f64>,
    pub certificate_solves: usize,
    pub certificate_time_s: f64,
}

impl Trajectory {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain records serialize")
    }

    /// One row per step: `tau, state..., input..., alpha`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.inputs.first().map_or(0, Vec::len);
        let mut out = String::from("tau");
        for k in 0..n {
            out.push_str(&format!(",x{k}"));
        }
        for k in 0..m {
            out.push_str(&format!(",u{k}"));
        }
        out.push_str(",alpha\n");
        for (tau, x) in self.states.iter().enumerate() {
            out.push_str(&tau.to_string());
            for v in x {
                out.push_str(&format!(",{v}"));
            }
            for k in 0..m {
                match self.inputs.get(tau) {
                    Some(u) => out.push_str(&format!(",{}", u[k])),
                    None => out.push(','),
                }
            }
            match self.alphas[tau] {
                Some(a) => out.push_str(&format!(",{a}\n")),
                None => out.push_str(",\n"),
            }
        }
        out
    }
}

/// Applies the gains with step `a` around the current trajectory.
fn forward(spec: &ProblemSpec, ev: &Evaluated, gains: &Gains, a: f64) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let mut xs = Vec::with_capacity(spec.horizon + 1);
    let mut us = Vec::with_capacity(spec.horizon);
    xs.push(spec.x0.clone());
    for tau in 0..spec.horizon {
        let dx = &xs[tau] - &ev.xs[tau];
        let u = &ev.us[tau] + &gains.d[tau] * a + &gains.k[tau] * dx;
        let next = spec.model.step(&xs[tau], &u);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { tau: tau + 1 });
        }
        us.push(u);
        xs.push(next);
    }
    Ok((xs, us))
}

/// Runs AL-iLQR from the given initial inputs. `problems[r]` certifies
/// containment in region `r`.
pub fn solve(
    spec: &ProblemSpec,
    problems: &[ScalingProblem],
    initial_inputs: Vec<DVector<f64>>,
    settings: &AlSettings,
) -> Result<Trajectory> {
    spec.validate()?;
    if initial_inputs.len() != spec.horizon {
        return Err(Error::InvalidInput("need one initial input per step".into()));
    }
    let mut oracle = SafetyOracle { problems, solve_time: Duration::ZERO, solves: 0 };
    let xs = rollout(&spec.model, &spec.x0, &initial_inputs)?;
    let mut ev = evaluate(spec, &mut oracle, xs, initial_inputs)?;
    let mut al = AlState {
        lambda: ev.constraints.iter().map(|cs| vec![0.0; cs.len()]).collect(),
        mu: settings.mu_init,
    };
    let mut reg = 0.0;
    let mut ilqr_iterations = 0;
    let mut history = Vec::new();
    let mut status = SolveStatus::IterationLimit;
    let mut outer = 0;
    let mut best: Option<Evaluated> = None;

    while outer < settings.max_outer {
        outer += 1;
        for _ in 0..settings.max_inner {
            ilqr_iterations += 1;
            let gains = loop {
                match backward_pass(spec, &ev, &al, reg) {
                    Some(g) => break Some(g),
                    None => {
                        reg = (reg * 10.0).max(1e-6);
                        if reg > settings.reg_max {
                            break None;
                        }
                    }
                }
            };
            let Some(gains) = gains else { break };
            let merit = ev.merit(&al);
            let predicted = gains.expected[0] + gains.expected[1];
            if predicted.abs() < 1e-12 * (1.0 + merit.abs()) {
                break;
            }
            let mut accepted = None;
            let mut a = 1.0;
            for _ in 0..settings.line_search_steps {
                if let Ok((xs, us)) = forward(spec, &ev, &gains, a) {
                    if let Ok(trial) = evaluate(spec, &mut oracle, xs, us) {
                        let expected = a * gains.expected[0] + a * a * gains.expected[1];
                        let actual = trial.merit(&al) - merit;
                        if actual < 0.0 && actual <= 1e-4 * expected.min(0.0) {
                            accepted = Some(trial);
                            break;
                        }
                    }
                }
                a *= 0.5;
            }
            match accepted {
                Some(trial) => {
                    let decrease = merit - trial.merit(&al);
                    ev = trial;
                    reg = if reg < 1e-8 { 0.0 } else { reg / 10.0 };
                    if decrease < settings.inner_tol * (1.0 + merit.abs()) {
                        break;
                    }
                }
                None => {
                    reg = (reg * 10.0).max(1e-6);
                    if reg > settings.reg_max {
                        break;
                    }
                }
            }
        }

        let violation = ev.violation();
        history.push(violation);
        if violation < settings.ctol {
            status = SolveStatus::Converged;
            break;
        }
        if best.as_ref().map_or(true, |b| violation < b.violation()) {
            best = Some(ev.clone());
        }
        for (cs, ls) in ev.constraints.iter().zip(al.lambda.iter_mut()) {
            for (c, l) in cs.iter().zip(ls.iter_mut()) {
                *l = (*l + al.mu * c.value).clamp(0.0, settings.lambda_max);
            }
        }
        let previous = history.len().checked_sub(2).map(|k| history[k]);
        if previous.map_or(true, |p| violation > 0.25 * p) {
            al.mu = (al.mu * settings.mu_growth).min(settings.mu_max);
        }
    }

    if status != SolveStatus::Converged {
        if let Some(b) = best.filter(|b| b.violation() < ev.violation()) {
            ev = b;
        }
    }
    // Certificates are recomputed from scratch rather than reused.
    let start = Instant::now();
    let alphas = verify(spec, problems, &ev.xs)?;
    oracle.solve_time += start.elapsed();
    oracle.solves += alphas.iter().flatten().count();
    if status == SolveStatus::Converged
        && alphas.iter().flatten().any(|a| *a > 1.0 + settings.ctol)
    {
        status = SolveStatus::VerificationFailed;
    }
    Ok(Trajectory {
        states: ev.xs.iter().map(|x| x.iter().copied().collect()).collect(),
        inputs: ev.us.iter().map(|u| u.iter().copied().collect()).collect(),
        alphas,
        cost: ev.cost,
        violation: ev.violation(),
        status,
        outer_iterations: outer,
        ilqr_iterations,
        violation_history: history,
        certificate_solves: oracle.solves,
        certificate_time_s: oracle.solve_time.as_secs_f64(),
    })
}

/// Independent containment values for every step with an assigned region.
pub fn verify(spec: &ProblemSpec, problems: &[ScalingProblem], xs: &[DVector<f64>]) -> Result<Vec<Option<f64>>> {
    xs.par_iter()
        .enumerate()
        .map(|(tau, x)| match spec.safety_region(tau) {
            Some(r) => {
                let sol = problems[r].solve(&spec.model.config_of(x))?;
                match sol.status {
                    ConicStatus::Optimal => Ok(Some(sol.alpha)),
                    _ => Err(Error::NumericalTrouble(format!("verification solve at step {tau} failed"))),
                }
            }
            None => Ok(None),
        })
        .collect()
}

/// Reference states and initial inputs from `T + 1` waypoints: headings follow
/// the waypoint polyline, velocities assume constant speed, and inputs come
/// from inverse dynamics where the model allows it.
pub fn initial_guess(
    model: &DynamicsModel,
    points: &[Vec<f64>],
    start: &Configuration,
    goal: &Configuration,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let t = points.len() - 1;
    let dt = model.dt;
    let kind = model.config_kind();
    let zdim = kind.workspace_dim();
    let ai = kind.angle_index();

    // Headings by finite differences, unwrapped so consecutive values differ
    // by less than pi.
    let mut headings = Vec::with_capacity(t + 1);
    let mut prev = start.angle();
    for tau in 0..=t {
        let h = if tau == 0 {
            start.angle()
        } else if tau == t {
            goal.angle()
        } else {
            let (a, b) = (&points[tau - 1], &points[tau + 1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            if dx.hypot(dy) > 1e-12 {
                dy.atan2(dx)
            } else {
                prev
            }
        };
        let h = prev + wrap_angle(h - prev);
        headings.push(h);
        prev = h;
    }

    let reference: Vec<DVector<f64>> = (0..=t)
        .map(|tau| {
            let mut x = DVector::zeros(model.state_dim());
            for k in 0..zdim {
                x[k] = points[tau][k];
            }
            x[ai] = headings[tau];
            if model.kind == ModelKind::PlanarDoubleIntegrator && tau < t {
                for k in 0..2 {
                    x[3 + k] = (points[tau + 1][k] - points[tau][k]) / dt;
                }
                x[5] = (headings[tau + 1] - headings[tau]) / dt;
            }
            x
        })
        .collect();

    let m = model.input_dim();
    let inputs = (0..t)
        .map(|tau| match model.kind {
            ModelKind::PlanarUnicycle => {
                let (a, b) = (&reference[tau], &reference[tau + 1]);
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let (s, c) = a[2].sin_cos();
                DVector::from_column_slice(&[(dx * c + dy * s) / dt, (b[2] - a[2]) / dt])
            }
            ModelKind::SpatialYawKinematic => (&reference[tau + 1] - &reference[tau]) / dt,
            ModelKind::PlanarDoubleIntegrator => DVector::zeros(m),
        })
        .collect();
    (reference, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unicycle_step_example() {
        let m = DynamicsModel::new(ModelKind::PlanarUnicycle, 0.1).unwrap();
        let x = m.step(&DVector::zeros(3), &DVector::from_column_slice(&[1.0, 0.0]));
        assert!((x - DVector::from_column_slice(&[0.1, 0.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn double_integrator_coasts() {
        let m = DynamicsModel::new(ModelKind::PlanarDoubleIntegrator, 0.2).unwrap();
        let x = DVector::from_column_slice(&[1.0, 2.0, 0.3, 0.5, -1.0, 0.1]);
        let next = m.step(&x, &DVector::zeros(3));
        assert!((next[0] - 1.1).abs() < 1e-15 && (next[1] - 1.8).abs() < 1e-15);
        assert_eq!(next.rows(3, 3), x.rows(3, 3));
        let rest = DVector::from_column_slice(&[1.0, 2.0, 0.3, 0.0, 0.0, 0.0]);
        let xs = rollout(&m, &rest, &vec![DVector::zeros(3); 5]).unwrap();
        assert!(xs.iter().all(|v| v == &rest));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in [ModelKind::PlanarUnicycle, ModelKind::PlanarDoubleIntegrator, ModelKind::SpatialYawKinematic] {
            let m = DynamicsModel::new(kind, 0.1).unwrap();
            for _ in 0..50 {
                let x = DVector::from_fn(m.state_dim(), |_, _| rng.gen_range(-2.0..2.0));
                let u = DVector::from_fn(m.input_dim(), |_, _| rng.gen_range(-2.0..2.0));
                let (a, b) = m.jacobians(&x, &u);
                let h = 1e-6;
                for j in 0..m.state_dim() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let col = (m.step(&xp, &u) - m.step(&xm, &u)) / (2.0 * h);
                    assert!((col - a.column(j)).amax() < 1e-6);
                }
                for j in 0..m.input_dim() {
                    let mut up = u.clone();
                    let mut um = u.clone();
                    up[j] += h;
                    um[j] -= h;
                    let col = (m.step(&x, &up) - m.step(&x, &um)) / (2.0 * h);
                    assert!((col - b.column(j)).amax() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn single_step_rollout_is_step() {
        let m = DynamicsModel::new(ModelKind::PlanarUnicycle, 0.1).unwrap();
        let x0 = DVector::from_column_slice(&[0.3, -0.2, 0.5]);
        let u = DVector::from_column_slice(&[0.7, -0.4]);
        let xs = rollout(&m, &x0, std::slice::from_ref(&u)).unwrap();
        assert_eq!(xs[1], m.step(&x0, &u));
    }

    #[test]
    fn zero_gains_leave_trajectory_unchanged() {
        let m = DynamicsModel::new(ModelKind::PlanarUnicycle, 0.1).unwrap();
        let costs = Costs::diagonal(&[1.0; 3], &[0.1; 2], &[10.0; 3]);
        let spec = ProblemSpec::new(m, 5, costs, DVector::zeros(3), DVector::from_column_slice(&[1.0, 0.0, 0.0]));
        let us = vec![DVector::from_column_slice(&[0.5, 0.1]); 5];
        let xs = rollout(&m, &spec.x0, &us).unwrap();
        let mut oracle = SafetyOracle { problems: &[], solve_time: Duration::ZERO, solves: 0 };
        let ev = evaluate(&spec, &mut oracle, xs.clone(), us.clone()).unwrap();
        let gains = Gains { k: vec![DMatrix::zeros(2, 3); 5], d: vec![DVector::zeros(2); 5], expected: [0.0; 2] };
        let (xs2, us2) = forward(&spec, &ev, &gains, 1.0).unwrap();
        assert_eq!(xs2, xs);
        assert_eq!(us2, us);
        assert_eq!(spec.cost(&xs2, &us2), ev.cost);
    }

    fn riccati(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        qf: &DMatrix<f64>,
        t: usize,
    ) -> Vec<DMatrix<f64>> {
        let mut p = qf.clone();
        let mut gains = vec![DMatrix::zeros(0, 0); t];
        for tau in (0..t).rev() {
            let s = r + b.transpose() * &p * b;
            let k = -s.clone().try_inverse().unwrap() * b.transpose() * &p * a;
            p = q + a.transpose() * &p * a + a.transpose() * &p * b * &k;
            gains[tau] = k;
        }
        gains
    }

    #[test]
    fn linear_quadratic_matches_riccati() {
        let m = DynamicsModel::new(ModelKind::PlanarDoubleIntegrator, 0.1).unwrap();
        let costs = Costs::diagonal(&[1.0, 2.0, 0.5, 0.1, 0.1, 0.1], &[0.3, 0.2, 0.4], &[10.0; 6]);
        let x0 = DVector::from_column_slice(&[1.0, -0.5, 0.3, 0.2, 0.0, -0.1]);
        let t = 30;
        let spec = ProblemSpec::new(m, t, costs.clone(), x0.clone(), DVector::zeros(6));
        let u0: Vec<_> = (0..t).map(|k| DVector::from_element(3, 0.1 * k as f64)).collect();
        let xs = rollout(&m, &x0, &u0).unwrap();
        let mut oracle = SafetyOracle { problems: &[], solve_time: Duration::ZERO, solves: 0 };
        let ev = evaluate(&spec, &mut oracle, xs, u0.clone()).unwrap();
        let al = AlState { lambda: vec![vec![]; t + 1], mu: 1.0 };
        let gains = backward_pass(&spec, &ev, &al, 0.0).unwrap();
        let (a, b) = m.jacobians(&x0, &DVector::zeros(3));
        let oracle_k = riccati(&a, &b, &costs.q, &costs.r, &costs.qf, t);
        for tau in 0..t {
            assert!((&gains.k[tau] - &oracle_k[tau]).amax() < 1e-8);
        }

        let traj = solve(&spec, &[], u0, &AlSettings::default()).unwrap();
        assert_eq!(traj.status, SolveStatus::Converged);
        let mut x = x0;
        for tau in 0..t {
            let u = &oracle_k[tau] * &x;
            assert!((DVector::from_column_slice(&traj.inputs[tau]) - &u).amax() < 1e-6);
            x = m.step(&x, &u);
            assert!((DVector::from_column_slice(&traj.states[tau + 1]) - &x).amax() < 1e-6);
        }
    }

    fn spatial_setup(start: [f64; 4]) -> (ProblemSpec, Vec<ScalingProblem>) {
        use crate::geometry::{box_region, make_primitive, Primitive};
        let region = box_region(&[0.0; 3], &[2.0; 3]).unwrap();
        let shape = make_primitive(3, Primitive::Box { half_extents: vec![0.3, 0.2, 0.1] }).unwrap();
        let problem = ScalingProblem::new(shape, region, None).unwrap();
        let m = DynamicsModel::new(ModelKind::SpatialYawKinematic, 0.1).unwrap();
        let costs = Costs::diagonal(&[0.0; 4], &[1e-3; 4], &[0.0; 4]);
        let x0 = DVector::from_column_slice(&start);
        let spec = ProblemSpec::new(m, 2, costs, x0.clone(), x0);
        (spec, vec![problem])
    }

    fn gains_for(spec: &ProblemSpec, problems: &[ScalingProblem], mu: f64) -> Gains {
        let us = vec![DVector::zeros(4); spec.horizon];
        let xs = rollout(&spec.model, &spec.x0, &us).unwrap();
        let mut oracle = SafetyOracle { problems, solve_time: Duration::ZERO, solves: 0 };
        let ev = evaluate(spec, &mut oracle, xs, us).unwrap();
        let al = AlState { lambda: ev.constraints.iter().map(|c| vec![0.0; c.len()]).collect(), mu };
        backward_pass(spec, &ev, &al, 0.0).unwrap()
    }

    #[test]
    fn inactive_safety_leaves_gains_unchanged() {
        let (mut spec, problems) = spatial_setup([1.0, 1.0, 1.0, 0.2]);
        let free = gains_for(&spec, &problems, 10.0);
        spec.safety = Safety::All(vec![0; 3]);
        let safe = gains_for(&spec, &problems, 10.0);
        for tau in 0..spec.horizon {
            assert!((&free.k[tau] - &safe.k[tau]).amax() < 1e-14);
            assert!((&free.d[tau] - &safe.d[tau]).amax() < 1e-14);
        }
    }

    #[test]
    fn active_safety_pushes_alpha_down() {
        let (mut spec, problems) = spatial_setup([1.9, 1.0, 1.0, 0.4]);
        spec.safety = Safety::Terminal(0);
        let gains = gains_for(&spec, &problems, 100.0);
        let q = spec.model.config_of(&spec.x0);
        let sol = problems[0].solve(&q).unwrap();
        assert!(sol.alpha > 1.0);
        let grad = problems[0].gradient(&q, &sol).unwrap().dalpha_dq;
        let d = &gains.d[1];
        let inner: f64 = d.iter().zip(&grad).map(|(a, b)| a * b).sum();
        assert!(inner < 0.0, "inner product {inner}");
    }
}
