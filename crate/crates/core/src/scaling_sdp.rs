//! Minimum-scaling containment certificate.
//!
//! For a robot shape `S = {x : f_j(x) >= 0}` (body frame) posed at `q` and a
//! polytopic region `Q`, the smallest `alpha` with `S(q)` inside the scaled
//! region `Q(alpha)` is bounded by the SOS program
//!
//! ```text
//! min alpha  s.t.  alpha g_i - F_i (R x + p - o) = sigma_i0 + sum_j sigma_ij f_j
//! ```
//!
//! for every facet `i`, with SOS multipliers of degree at most `2k`. Each
//! identity is imposed coefficient-wise, which turns the program into a
//! block-diagonal SDP.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::conic::{self, ConicStatus, LinearForm, SdpInstance, SolverSettings};
use crate::error::{Error, Result};
use crate::geometry::{
    pose_from_config, region_rows_in_body_frame, ConfigKind, Configuration, Polytope, SemialgebraicShape,
};
use crate::polynomial::{GramIndexMap, Monomial, MonomialBasis};

/// A facet's weight `g_i |y_i0|` counts as active above this share of the
/// total (the weights sum to one at optimality).
const ACTIVE_WEIGHT: f64 = 1e-3;

/// Smallest `k` for which every multiplier degree is nonnegative.
pub fn min_relaxation_order(shape: &SemialgebraicShape) -> u32 {
    shape.inequalities().iter().map(|f| f.degree().div_ceil(2)).max().unwrap_or(1).max(1)
}

// One term of a per-facet row: coefficient of X_{local}[a, b] (a <= b).
#[derive(Clone, Copy, Debug)]
struct TemplateTerm {
    local_block: usize,
    a: usize,
    b: usize,
    value: f64,
}

/// Configuration-independent structure of the relaxation for one
/// shape/region pair. Cheap to share across threads.
#[derive(Clone, Debug)]
pub struct ScalingProblem {
    shape: SemialgebraicShape,
    region: Polytope,
    order: u32,
    kind: ConfigKind,
    full_basis: MonomialBasis,
    local_dims: Vec<usize>,
    template: Vec<Vec<TemplateTerm>>,
    linear_rows: Vec<usize>,
    settings: SolverSettings,
}

impl ScalingProblem {
    /// `order = None` picks [`min_relaxation_order`].
    pub fn new(shape: SemialgebraicShape, region: Polytope, order: Option<u32>) -> Result<Self> {
        let z = shape.dimension();
        if region.dimension() != z {
            return Err(Error::InvalidInput(format!(
                "shape is {z}-dimensional but region is {}-dimensional",
                region.dimension()
            )));
        }
        let min = min_relaxation_order(&shape);
        let k = order.unwrap_or(min);
        if k < min {
            return Err(Error::RelaxationOrderTooLow { order: k, min });
        }
        let kind = ConfigKind::for_workspace_dim(z)?;
        let full_basis = MonomialBasis::new(z, 2 * k)?;
        let ell = full_basis.len();

        let mut local_dims = Vec::new();
        let mut acc: Vec<BTreeMap<(usize, usize, usize), f64>> = vec![BTreeMap::new(); ell];

        // sigma_0 enters with multiplier 1.
        let half0 = MonomialBasis::new(z, k)?;
        let map0 = GramIndexMap::new(&half0);
        local_dims.push(half0.len());
        for l in 0..map0.full_basis().len() {
            let target = full_basis.index_of(&map0.full_basis().monomials()[l]).expect("same degree");
            for &(a, b) in map0.entries(l) {
                *acc[target].entry((0, a.min(b), a.max(b))).or_default() += 1.0;
            }
        }

        for f in shape.archimedean_inequalities() {
            let half = MonomialBasis::new(z, k - f.degree().div_ceil(2))?;
            let block = local_dims.len();
            local_dims.push(half.len());
            let mons = half.monomials();
            for (a, ma) in mons.iter().enumerate() {
                for (b, mb) in mons.iter().enumerate() {
                    let gram_mono = ma.mul(mb);
                    for (t, c) in f.terms() {
                        let l = full_basis.index_of(&gram_mono.mul(t)).ok_or(Error::DegreeOverflow {
                            degree: gram_mono.degree() + t.degree(),
                            max: 2 * k,
                        })?;
                        *acc[l].entry((block, a.min(b), a.max(b))).or_default() += c;
                    }
                }
            }
        }

        let template = acc
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .filter(|(_, v)| *v != 0.0)
                    .map(|((local_block, a, b), value)| TemplateTerm { local_block, a, b, value })
                    .collect()
            })
            .collect();
        let linear_rows = (0..z)
            .map(|a| full_basis.index_of(&Monomial::variable(z, a)).expect("degree 1 present"))
            .collect();

        Ok(Self {
            shape,
            region,
            order: k,
            kind,
            full_basis,
            local_dims,
            template,
            linear_rows,
            settings: SolverSettings::default(),
        })
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn shape(&self) -> &SemialgebraicShape {
        &self.shape
    }

    pub fn region(&self) -> &Polytope {
        &self.region
    }

    pub fn relaxation_order(&self) -> u32 {
        self.order
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Number of equality rows per facet (monomials of degree `<= 2k`).
    pub fn rows_per_facet(&self) -> usize {
        self.full_basis.len()
    }

    /// Side lengths of `X_{i,0}, X_{i,1}, ...` (the ball multiplier last).
    pub fn block_dims_per_facet(&self) -> &[usize] {
        &self.local_dims
    }

    fn check_config(&self, q: &Configuration) -> Result<()> {
        if q.kind() != self.kind {
            return Err(Error::InvalidInput(format!(
                "configuration {:?} does not match a {}-dimensional problem",
                q.kind(),
                self.shape.dimension()
            )));
        }
        Ok(())
    }

    pub fn assemble(&self, q: &Configuration) -> Result<SdpInstance> {
        let all: Vec<usize> = (0..self.region.num_facets()).collect();
        self.assemble_facets(q, &all)
    }

    // Program restricted to the listed facets, in that order.
    fn assemble_facets(&self, q: &Configuration, facets: &[usize]) -> Result<SdpInstance> {
        self.check_config(q)?;
        let rows = region_rows_in_body_frame(&self.region, &pose_from_config(q));
        let nb = self.local_dims.len();
        let ell = self.full_basis.len();
        let block_dims = facets.iter().flat_map(|_| self.local_dims.iter().copied()).collect();
        let mut inst = SdpInstance::new(1, block_dims);
        inst.objective.scalar(0, 1.0);
        for (slot, &i) in facets.iter().enumerate() {
            let mut rhs = vec![0.0; ell];
            rhs[0] = rows.constant[i];
            for (a, &l) in self.linear_rows.iter().enumerate() {
                rhs[l] = rows.linear[(i, a)];
            }
            for (l, terms) in self.template.iter().enumerate() {
                let mut form = LinearForm::default();
                if l == 0 {
                    form.scalar(0, -rows.g[i]);
                }
                for t in terms {
                    form.entry(slot * nb + t.local_block, t.a, t.b, t.value);
                }
                inst.push_row(form, rhs[l]);
            }
        }
        Ok(inst)
    }

    pub fn solve(&self, q: &Configuration) -> Result<ScalingSolution> {
        let inst = self.assemble(q)?;
        let sol = conic::solve(&inst, &self.settings)?;
        let r = self.region.num_facets();
        let nb = self.local_dims.len();
        let status = match sol.status {
            ConicStatus::Optimal => ConicStatus::Optimal,
            _ => ConicStatus::NumericalTrouble,
        };
        let gram = (0..r).map(|i| sol.blocks[i * nb..(i + 1) * nb].to_vec()).collect();
        let instance_dump = (status != ConicStatus::Optimal).then(|| inst.to_dump());
        Ok(ScalingSolution {
            alpha: sol.scalars[0].max(0.0),
            gram,
            duals: sol.dual_equalities,
            status,
            gap: sol.duality_gap,
            iterations: sol.iterations,
            instance_dump,
        })
    }

    /// Derivative of the optimal value with respect to `q`, from the
    /// equality multipliers (envelope theorem). Only the constant and linear
    /// coefficient rows depend on the pose.
    pub fn gradient(&self, q: &Configuration, sol: &ScalingSolution) -> Result<GradientResult> {
        self.check_config(q)?;
        let ell = self.full_basis.len();
        let r = self.region.num_facets();
        if sol.status != ConicStatus::Optimal || sol.duals.len() != r * ell {
            return Err(Error::MissingDuals);
        }
        let rows = region_rows_in_body_frame(&self.region, &pose_from_config(q));
        let n = q.values().len();
        let mut per_facet = vec![vec![0.0; n]; r];
        for (i, fg) in per_facet.iter_mut().enumerate() {
            let y = &sol.duals[i * ell..(i + 1) * ell];
            for (s, g) in fg.iter_mut().enumerate() {
                *g += y[0] * rows.d_constant[s][i];
                for (a, &l) in self.linear_rows.iter().enumerate() {
                    *g += y[l] * rows.d_linear[s][(i, a)];
                }
            }
        }
        let grad: Vec<f64> = (0..n).map(|s| per_facet.iter().map(|fg| fg[s]).sum()).collect();
        let weights: Vec<f64> = (0..r).map(|i| (rows.g[i] * sol.duals[i * ell]).abs()).collect();
        let total: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let active = weights.iter().filter(|&&w| w / total > ACTIVE_WEIGHT).count();
        Ok(GradientResult { dalpha_dq: grad, degenerate: active > 1 })
    }

    /// Scaling of each facet on its own, with its gradient. The facets
    /// share nothing but `alpha`, so the joint optimum is the largest of
    /// these, while each one is smooth where the joint value has kinks.
    pub fn facet_scalings(&self, q: &Configuration) -> Result<Vec<FacetScaling>> {
        self.check_config(q)?;
        let rows = region_rows_in_body_frame(&self.region, &pose_from_config(q));
        let n = q.values().len();
        (0..self.region.num_facets())
            .into_par_iter()
            .map(|i| {
                let inst = self.assemble_facets(q, &[i])?;
                let sol = conic::solve(&inst, &self.settings)?;
                if sol.status != ConicStatus::Optimal {
                    return Err(Error::NumericalTrouble(format!(
                        "facet {i} scaling did not converge (gap {:.3e})",
                        sol.duality_gap
                    )));
                }
                let y = &sol.dual_equalities;
                let gradient = (0..n)
                    .map(|s| {
                        y[0] * rows.d_constant[s][i]
                            + self.linear_rows.iter().enumerate().map(|(a, &l)| y[l] * rows.d_linear[s][(i, a)]).sum::<f64>()
                    })
                    .collect();
                Ok(FacetScaling { alpha: sol.scalars[0], gradient })
            })
            .collect()
    }

    /// Solves and differentiates every configuration in parallel. Results
    /// come back in input order; a failure only affects its own slot.
    pub fn batch_solve(&self, configs: &[Configuration]) -> Vec<Result<(ScalingSolution, GradientResult)>> {
        configs
            .par_iter()
            .map(|q| {
                let sol = self.solve(q)?;
                if sol.status != ConicStatus::Optimal {
                    return Err(Error::NumericalTrouble(format!(
                        "scaling SDP did not converge (gap {:.3e})",
                        sol.gap
                    )));
                }
                let grad = self.gradient(q, &sol)?;
                Ok((sol, grad))
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ScalingSolution {
    pub alpha: f64,
    /// `gram[i][j]` is `X_{i,j}`; `j = 0` is the free SOS term and the last
    /// entry belongs to the ball constraint.
    pub gram: Vec<Vec<DMatrix<f64>>>,
    /// Equality multipliers, facets outer and monomials inner.
    pub duals: Vec<f64>,
    pub status: ConicStatus,
    pub gap: f64,
    pub iterations: usize,
    /// Text dump of the SDP when the solve did not reach optimality.
    pub instance_dump: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientResult {
    pub dalpha_dq: Vec<f64>,
    /// More than one facet carries dual weight, so the value function may
    /// be nonsmooth here and the returned vector is one subgradient.
    pub degenerate: bool,
}

/// Smallest scaling for one facet alone; negative when the robot clears
/// the facet even with the region shrunk to its center.
#[derive(Clone, Debug, PartialEq)]
pub struct FacetScaling {
    pub alpha: f64,
    pub gradient: Vec<f64>,
}
