//! Dense primal-dual interior-point solver for small block-diagonal SDPs.
//!
//! Standard form:
//!
//! ```text
//!   minimize    <C, X>
//!   subject to  <A_i, X> = b_i        i = 1..m
//!               X = (x_1..x_s, X_1..X_p),  x_j >= 0,  X_k PSD
//! ```
//!
//! with dual `max b^T y  s.t.  C - sum_i y_i A_i = S`, `S` in the same cone.
//! Iterates follow an infeasible Mehrotra predictor-corrector path with
//! Nesterov-Todd scaling on every block (scalars are 1x1 blocks).

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Coefficient of `X_block[row, col]` (with `row <= col`) in a linear
/// functional of a symmetric block. Off-diagonal entries therefore count
/// both symmetric positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Linear functional over all variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearForm {
    pub scalars: Vec<(usize, f64)>,
    pub entries: Vec<BlockEntry>,
}

impl LinearForm {
    pub fn scalar(&mut self, index: usize, value: f64) -> &mut Self {
        if value != 0.0 {
            self.scalars.push((index, value));
        }
        self
    }

    pub fn entry(&mut self, block: usize, row: usize, col: usize, value: f64) -> &mut Self {
        if value != 0.0 {
            let (row, col) = if row <= col { (row, col) } else { (col, row) };
            self.entries.push(BlockEntry { block, row, col, value });
        }
        self
    }
}

/// Block-diagonal SDP in standard form.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpInstance {
    pub num_scalars: usize,
    pub block_dims: Vec<usize>,
    pub objective: LinearForm,
    pub rows: Vec<LinearForm>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    NumericalTrouble,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub scalars: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    /// One multiplier per equality row; rows dropped by presolve get 0.
    pub dual_equalities: Vec<f64>,
    pub dual_scalars: Vec<f64>,
    pub dual_blocks: Vec<DMatrix<f64>>,
    pub status: ConicStatus,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|pobj - dobj| / (1 + |pobj| + |dobj|)`, the quantity held below `tol`.
    pub duality_gap: f64,
    pub iterations: usize,
    pub dropped_rows: Vec<usize>,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100 }
    }
}

impl SdpInstance {
    pub fn new(num_scalars: usize, block_dims: Vec<usize>) -> Self {
        Self { num_scalars, block_dims, objective: LinearForm::default(), rows: Vec::new(), rhs: Vec::new() }
    }

    pub fn push_row(&mut self, row: LinearForm, rhs: f64) -> usize {
        self.rows.push(row);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput("PSD block of dimension 0".into()));
        }
        if self.rows.len() != self.rhs.len() {
            return Err(Error::InvalidInput("row/rhs count mismatch".into()));
        }
        let check = |f: &LinearForm| -> Result<()> {
            for &(j, v) in &f.scalars {
                if j >= self.num_scalars || !v.is_finite() {
                    return Err(Error::InvalidInput(format!("bad scalar term ({j}, {v})")));
                }
            }
            for e in &f.entries {
                let ok = e.block < self.block_dims.len()
                    && e.col < self.block_dims[e.block]
                    && e.row <= e.col
                    && e.value.is_finite();
                if !ok {
                    return Err(Error::InvalidInput(format!("bad block entry {e:?}")));
                }
            }
            Ok(())
        };
        check(&self.objective)?;
        for r in &self.rows {
            check(r)?;
        }
        if self.rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite right-hand side".into()));
        }
        Ok(())
    }

    /// Plain-text dump (dimensions plus sparse triplets) that
    /// [`SdpInstance::from_dump`] reads back exactly.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let form = |s: &mut String, f: &LinearForm| {
            for &(j, v) in &f.scalars {
                let _ = writeln!(s, "s {j} {v}");
            }
            for e in &f.entries {
                let _ = writeln!(s, "b {} {} {} {}", e.block, e.row, e.col, e.value);
            }
            let _ = writeln!(s, "end");
        };
        let _ = writeln!(s, "sdp-dump v1");
        let _ = writeln!(s, "scalars {}", self.num_scalars);
        let dims: Vec<String> = self.block_dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "blocks {}", dims.join(" "));
        let _ = writeln!(s, "objective");
        form(&mut s, &self.objective);
        let _ = writeln!(s, "rows {}", self.rows.len());
        for (i, (r, b)) in self.rows.iter().zip(&self.rhs).enumerate() {
            let _ = writeln!(s, "row {i} {b}");
            form(&mut s, r);
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| -> Result<(usize, Vec<String>)> {
            let (n, l) = lines
                .next()
                .ok_or_else(|| Error::parse("sdp dump", format!("unexpected end, expected {what}")))?;
            Ok((n + 1, l.split_whitespace().map(str::to_string).collect()))
        };
        let num = |line: usize, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::parse(format!("sdp dump line {line}"), e))
        };
        let idx = |line: usize, s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|e| Error::parse(format!("sdp dump line {line}"), e))
        };
        let (n, header) = next("header")?;
        if header.first().map(String::as_str) != Some("sdp-dump") {
            return Err(Error::parse(format!("sdp dump line {n}"), "missing sdp-dump header"));
        }
        let (n, sc) = next("scalars")?;
        let num_scalars = idx(n, sc.get(1).map(String::as_str).unwrap_or(""))?;
        let (n, bl) = next("blocks")?;
        let block_dims = bl[1..].iter().map(|s| idx(n, s)).collect::<Result<Vec<_>>>()?;
        let read_form = |next: &mut dyn FnMut(&str) -> Result<(usize, Vec<String>)>| -> Result<LinearForm> {
            let mut f = LinearForm::default();
            loop {
                let (n, t) = next("term")?;
                match t.first().map(String::as_str) {
                    Some("end") => return Ok(f),
                    Some("s") if t.len() == 3 => {
                        f.scalars.push((idx(n, &t[1])?, num(n, &t[2])?));
                    }
                    Some("b") if t.len() == 5 => f.entries.push(BlockEntry {
                        block: idx(n, &t[1])?,
                        row: idx(n, &t[2])?,
                        col: idx(n, &t[3])?,
                        value: num(n, &t[4])?,
                    }),
                    _ => return Err(Error::parse(format!("sdp dump line {n}"), "malformed term")),
                }
            }
        };
        let (_, obj) = next("objective")?;
        if obj.first().map(String::as_str) != Some("objective") {
            return Err(Error::parse("sdp dump", "missing objective section"));
        }
        let objective = read_form(&mut next)?;
        let (n, rows_line) = next("rows")?;
        let m = idx(n, rows_line.get(1).map(String::as_str).unwrap_or(""))?;
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        for _ in 0..m {
            let (n, r) = next("row")?;
            if r.len() != 3 || r[0] != "row" {
                return Err(Error::parse(format!("sdp dump line {n}"), "malformed row header"));
            }
            rhs.push(num(n, &r[2])?);
            rows.push(read_form(&mut next)?);
        }
        let inst = SdpInstance { num_scalars, block_dims, objective, rows, rhs };
        inst.validate()?;
        Ok(inst)
    }
}

// ---------------------------------------------------------------------------
// Internal representation. Scalars and 1x1 blocks form one nonnegative
// orthant handled with vector arithmetic; blocks of side >= 2 stay dense.

#[derive(Clone, Copy, Debug)]
enum Slot {
    Lin(usize),
    Psd(usize),
}

// Sparse key of one variable entry: (0, lin, 0, 0) or (1, block, row, col)
// with row <= col.
type Key = (u8, usize, usize, usize);

struct Problem {
    scalar_slots: Vec<usize>,
    block_slots: Vec<Slot>,
    c_lin: DVector<f64>,
    /// Per orthant variable, the kept rows it appears in.
    lin_cols: Vec<Vec<(usize, f64)>>,
    psd_dims: Vec<usize>,
    c_psd: Vec<DMatrix<f64>>,
    /// Per PSD block, the kept rows touching it as dense symmetric matrices.
    a_psd: Vec<Vec<(usize, DMatrix<f64>)>>,
    b: DVector<f64>,
    /// Original row index of each kept row.
    kept: Vec<usize>,
}

#[derive(Clone)]
struct Cone {
    lin: DVector<f64>,
    psd: Vec<DMatrix<f64>>,
}

impl Cone {
    fn dot(&self, other: &Cone) -> f64 {
        self.lin.dot(&other.lin) + self.psd.iter().zip(&other.psd).map(|(a, b)| frob(a, b)).sum::<f64>()
    }

    fn amax(&self) -> f64 {
        self.psd.iter().map(|m| m.amax()).fold(self.lin.amax(), f64::max)
    }

    fn sub(&self, other: &Cone) -> Cone {
        Cone {
            lin: &self.lin - &other.lin,
            psd: self.psd.iter().zip(&other.psd).map(|(a, b)| a - b).collect(),
        }
    }

    fn axpy(&mut self, t: f64, d: &Cone) {
        self.lin.axpy(t, &d.lin, 1.0);
        for (x, dx) in self.psd.iter_mut().zip(&d.psd) {
            *x += dx * t;
            let sym = (&*x + x.transpose()) * 0.5;
            *x = sym;
        }
    }
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sparse_form(f: &LinearForm, scalar_slots: &[usize], block_slots: &[Slot]) -> Vec<(Key, f64)> {
    let mut v: Vec<(Key, f64)> = Vec::with_capacity(f.scalars.len() + f.entries.len());
    for &(j, c) in &f.scalars {
        v.push(((0, scalar_slots[j], 0, 0), c));
    }
    for e in &f.entries {
        let key = match block_slots[e.block] {
            Slot::Lin(j) => (0, j, 0, 0),
            Slot::Psd(p) => (1, p, e.row, e.col),
        };
        v.push((key, e.value));
    }
    v.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(Key, f64)> = Vec::with_capacity(v.len());
    for (k, c) in v {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += c,
            _ => out.push((k, c)),
        }
    }
    out.retain(|(_, c)| *c != 0.0);
    out
}

// Frobenius inner product of two sparse symmetric forms (off-diagonal
// coefficients cover both positions).
fn sparse_dot(a: &[(Key, f64)], b: &[(Key, f64)]) -> f64 {
    let (mut p, mut q, mut acc) = (0, 0, 0.0);
    while p < a.len() && q < b.len() {
        match a[p].0.cmp(&b[q].0) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                let (_, _, r, c) = a[p].0;
                let w = if r == c { 1.0 } else { 0.5 };
                acc += w * a[p].1 * b[q].1;
                p += 1;
                q += 1;
            }
        }
    }
    acc
}

fn dense_block(dim: usize, terms: impl Iterator<Item = (usize, usize, f64)>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for (r, c, v) in terms {
        if r == c {
            m[(r, r)] += v;
        } else {
            m[(r, c)] += 0.5 * v;
            m[(c, r)] += 0.5 * v;
        }
    }
    m
}

impl Problem {
    fn build(inst: &SdpInstance) -> (Self, Vec<usize>) {
        let mut n_lin = inst.num_scalars;
        let scalar_slots: Vec<usize> = (0..inst.num_scalars).collect();
        let mut psd_dims = Vec::new();
        let block_slots: Vec<Slot> = inst
            .block_dims
            .iter()
            .map(|&d| {
                if d == 1 {
                    n_lin += 1;
                    Slot::Lin(n_lin - 1)
                } else {
                    psd_dims.push(d);
                    Slot::Psd(psd_dims.len() - 1)
                }
            })
            .collect();

        let sparse: Vec<Vec<(Key, f64)>> =
            inst.rows.iter().map(|r| sparse_form(r, &scalar_slots, &block_slots)).collect();

        // In-order rank-revealing elimination on the row Gram matrix.
        let m = inst.rows.len();
        let mut kept: Vec<usize> = Vec::new();
        let mut dropped = Vec::new();
        let mut l_rows: Vec<Vec<f64>> = Vec::new();
        for i in 0..m {
            let gii = sparse_dot(&sparse[i], &sparse[i]);
            if gii == 0.0 {
                dropped.push(i);
                continue;
            }
            let mut l = Vec::with_capacity(kept.len() + 1);
            for (a, &ka) in kept.iter().enumerate() {
                let mut v = sparse_dot(&sparse[ka], &sparse[i]);
                for t in 0..a {
                    v -= l_rows[a][t] * l[t];
                }
                l.push(v / l_rows[a][a]);
            }
            let d = gii - l.iter().map(|v| v * v).sum::<f64>();
            if d <= 1e-12 * gii {
                dropped.push(i);
                continue;
            }
            l.push(d.sqrt());
            l_rows.push(l);
            kept.push(i);
        }

        let mut lin_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_lin];
        let mut psd_terms: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); psd_dims.len()];
        for (new_i, &orig) in kept.iter().enumerate() {
            for &((kind, idx, r, c), v) in &sparse[orig] {
                if kind == 0 {
                    lin_cols[idx].push((new_i, v));
                } else {
                    let list = &mut psd_terms[idx];
                    match list.last_mut() {
                        Some((row, terms)) if *row == new_i => terms.push((r, c, v)),
                        _ => list.push((new_i, vec![(r, c, v)])),
                    }
                }
            }
        }
        let a_psd = psd_terms
            .into_iter()
            .zip(&psd_dims)
            .map(|(list, &d)| list.into_iter().map(|(i, t)| (i, dense_block(d, t.into_iter()))).collect())
            .collect();

        let obj = sparse_form(&inst.objective, &scalar_slots, &block_slots);
        let mut c_lin = DVector::zeros(n_lin);
        let mut c_terms: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); psd_dims.len()];
        for &((kind, idx, r, c), v) in &obj {
            if kind == 0 {
                c_lin[idx] += v;
            } else {
                c_terms[idx].push((r, c, v));
            }
        }
        let c_psd = c_terms.into_iter().zip(&psd_dims).map(|(t, &d)| dense_block(d, t.into_iter())).collect();

        let b = DVector::from_iterator(kept.len(), kept.iter().map(|&i| inst.rhs[i]));
        (Self { scalar_slots, block_slots, c_lin, lin_cols, psd_dims, c_psd, a_psd, b, kept }, dropped)
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn c(&self) -> Cone {
        Cone { lin: self.c_lin.clone(), psd: self.c_psd.clone() }
    }

    /// `A A^T`, i.e. the Schur matrix at the identity scaling.
    fn row_gram(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut g = DMatrix::zeros(m, m);
        for col in &self.lin_cols {
            for &(i1, a1) in col {
                for &(i2, a2) in col {
                    g[(i1, i2)] += a1 * a2;
                }
            }
        }
        for rows in &self.a_psd {
            for (i, ai) in rows {
                for (j, aj) in rows {
                    g[(*i, *j)] += frob(ai, aj);
                }
            }
        }
        g
    }

    fn a_op(&self, x: &Cone) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (col, &xj) in self.lin_cols.iter().zip(x.lin.iter()) {
            for &(i, a) in col {
                out[i] += a * xj;
            }
        }
        for (rows, xk) in self.a_psd.iter().zip(&x.psd) {
            for (i, a) in rows {
                out[*i] += frob(a, xk);
            }
        }
        out
    }

    fn at_op(&self, y: &DVector<f64>) -> Cone {
        let lin = DVector::from_iterator(
            self.lin_cols.len(),
            self.lin_cols.iter().map(|col| col.iter().map(|&(i, a)| a * y[i]).sum()),
        );
        let psd = self
            .psd_dims
            .iter()
            .zip(&self.a_psd)
            .map(|(&d, rows)| {
                let mut s = DMatrix::zeros(d, d);
                for (i, a) in rows {
                    s += a * y[*i];
                }
                s
            })
            .collect();
        Cone { lin, psd }
    }
}

// Nesterov-Todd scaling of one block: W = R R^T with R^T S R = R^-1 X R^-T
// = diag(lambda).
struct NtScaling {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn sym_factor(x: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    if let Some(ch) = x.clone().cholesky() {
        let l = ch.l();
        let l_inv = l.clone().try_inverse()?;
        return Some((l, l_inv));
    }
    let eig = SymmetricEigen::new(x.clone());
    if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let sq = eig.eigenvalues.map(f64::sqrt);
    let l = &eig.eigenvectors * DMatrix::from_diagonal(&sq);
    let l_inv = DMatrix::from_diagonal(&sq.map(|v| 1.0 / v)) * eig.eigenvectors.transpose();
    Some((l, l_inv))
}

impl NtScaling {
    fn new(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Self> {
        let (lx, lx_inv) = sym_factor(x)?;
        let (ls, _) = sym_factor(s)?;
        let svd = (ls.transpose() * &lx).svd(true, true);
        let u_t = svd.v_t?;
        let sing = svd.singular_values;
        if sing.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let v = u_t.transpose();
        let inv_sqrt = DMatrix::from_diagonal(&sing.map(|v| 1.0 / v.sqrt()));
        let sqrt = DMatrix::from_diagonal(&sing.map(f64::sqrt));
        let r = &lx * &v * inv_sqrt;
        let r_inv = sqrt * v.transpose() * lx_inv;
        let w = &r * r.transpose();
        Some(Self { r, r_inv, w, lambda: sing })
    }
}

/// Largest `t` in `(0, inf]` keeping `diag(lambda) + t * d` PSD.
fn max_step(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let scaled = DMatrix::from_fn(n, n, |i, j| d[(i, j)] / (lambda[i] * lambda[j]).sqrt());
    let sym = (&scaled + scaled.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    if min_eig >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min_eig
    }
}

/// Largest `t` keeping `x + t dx >= 0` componentwise.
fn max_step_lin(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone)]
struct Iterate {
    x: Cone,
    y: DVector<f64>,
    s: Cone,
}

/// Solve an SDP instance. The returned solution always carries the best
/// iterate; `status` tells whether the tolerances were met.
pub fn solve(inst: &SdpInstance, settings: &SolverSettings) -> Result<ConicSolution> {
    inst.validate()?;
    let (prob, dropped) = Problem::build(inst);
    let m = prob.m();
    let nu = prob.lin_cols.len() + prob.psd_dims.iter().sum::<usize>();
    let tol = settings.tol;
    let c = prob.c();

    let gram = prob.row_gram().cholesky();
    let b_norm = prob.b.amax();
    let c_norm = c.amax();

    // Starting point in the spirit of SDPT3's default scaling.
    let mut it = {
        let start = |d: usize, c_norm: f64, touching: &mut dyn Iterator<Item = (usize, f64)>| {
            let mut xi: f64 = 10f64.max((d as f64).sqrt());
            let mut eta: f64 = 10f64.max((d as f64).sqrt()).max(c_norm);
            for (i, an) in touching {
                xi = xi.max(d as f64 * (1.0 + prob.b[i].abs()) / (1.0 + an));
                eta = eta.max(an);
            }
            (xi, eta)
        };
        let mut x_lin = DVector::zeros(prob.lin_cols.len());
        let mut s_lin = DVector::zeros(prob.lin_cols.len());
        for (j, col) in prob.lin_cols.iter().enumerate() {
            let (xi, eta) = start(1, prob.c_lin[j].abs(), &mut col.iter().map(|&(i, a)| (i, a.abs())));
            x_lin[j] = xi;
            s_lin[j] = eta;
        }
        let mut x_psd = Vec::new();
        let mut s_psd = Vec::new();
        for (k, &d) in prob.psd_dims.iter().enumerate() {
            let (xi, eta) = start(d, prob.c_psd[k].norm(), &mut prob.a_psd[k].iter().map(|(i, a)| (*i, a.norm())));
            x_psd.push(DMatrix::identity(d, d) * xi);
            s_psd.push(DMatrix::identity(d, d) * eta);
        }
        Iterate { x: Cone { lin: x_lin, psd: x_psd }, y: DVector::zeros(m), s: Cone { lin: s_lin, psd: s_psd } }
    };

    let mut best: Option<(f64, Iterate, [f64; 4])> = None;
    let mut status = ConicStatus::NumericalTrouble;
    let mut iterations = 0;

    for iter in 0..=settings.max_iter {
        iterations = iter;
        let rp = &prob.b - prob.a_op(&it.x);
        let rd = c.sub(&prob.at_op(&it.y)).sub(&it.s);
        let pobj = c.dot(&it.x);
        let dobj = prob.b.dot(&it.y);
        let xs = it.x.dot(&it.s);
        let mu = xs / nu as f64;

        let pres = rp.amax() / (1.0 + b_norm);
        let dres = rd.amax() / (1.0 + c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let merit = pres.max(dres).max(gap);
        if best.as_ref().map_or(true, |(bm, _, _)| merit < *bm) {
            best = Some((merit, it.clone(), [pobj, dobj, rp.amax(), rd.amax()]));
        }
        if pres <= tol && dres <= tol && gap <= tol {
            status = ConicStatus::Optimal;
            break;
        }
        if iter == settings.max_iter || !mu.is_finite() {
            break;
        }

        if it.x.lin.iter().chain(it.s.lin.iter()).any(|v| !(*v > 0.0)) {
            break;
        }
        let d_lin = it.x.lin.component_div(&it.s.lin);
        let Some(scal) = it
            .x
            .psd
            .iter()
            .zip(&it.s.psd)
            .map(|(x, s)| NtScaling::new(x, s))
            .collect::<Option<Vec<_>>>()
        else {
            break;
        };

        // Schur complement M_ij = <A_i, W A_j W>.
        let mut mmat = DMatrix::zeros(m, m);
        for (col, &dj) in prob.lin_cols.iter().zip(d_lin.iter()) {
            for &(i1, a1) in col {
                for &(i2, a2) in col {
                    if i1 <= i2 {
                        mmat[(i1, i2)] += dj * a1 * a2;
                    }
                }
            }
        }
        for (rows, sc) in prob.a_psd.iter().zip(&scal) {
            for (j, aj) in rows {
                let t = &sc.w * aj * &sc.w;
                for (i, ai) in rows {
                    if *i <= *j {
                        mmat[(*i, *j)] += frob(ai, &t);
                    }
                }
            }
        }
        for j in 0..m {
            for i in 0..j {
                mmat[(j, i)] = mmat[(i, j)];
            }
        }
        let chol = {
            let mut reg = 0.0;
            let max_diag = (0..m).map(|i| mmat[(i, i)]).fold(0.0, f64::max).max(1e-300);
            loop {
                let mut mm = mmat.clone();
                for i in 0..m {
                    mm[(i, i)] += reg;
                }
                if let Some(ch) = mm.cholesky() {
                    break Some(ch);
                }
                reg = if reg == 0.0 { 1e-14 * max_diag } else { reg * 100.0 };
                if !reg.is_finite() || reg > 1e-4 * max_diag {
                    break None;
                }
            }
        };
        let Some(chol) = chol else { break };

        // Solves A dx = rp, A^T dy + ds = rd, dx + W ds W = rc.
        let w_apply = |v: &Cone| -> Cone {
            Cone {
                lin: d_lin.component_mul(&v.lin),
                psd: v.psd.iter().zip(&scal).map(|(m, sc)| &sc.w * m * &sc.w).collect(),
            }
        };
        let wrdw = w_apply(&rd);
        let solve_dir = |rc: &Cone| -> (Cone, DVector<f64>, Cone) {
            let rhs = &rp - prob.a_op(&rc.sub(&wrdw));
            let mut dy = chol.solve(&rhs);
            for _ in 0..3 {
                let r = &rhs - &mmat * &dy;
                if r.amax() <= 1e-15 * (1.0 + rhs.amax()) {
                    break;
                }
                dy += chol.solve(&r);
            }
            let ds = rd.sub(&prob.at_op(&dy));
            let mut dx = rc.sub(&w_apply(&ds));
            // Near the optimum the Schur system is too ill-conditioned to
            // keep A dx = rp even after refinement; restore it with a
            // least-norm correction.
            if let Some(g) = &gram {
                let e = &rp - prob.a_op(&dx);
                dx.axpy(1.0, &prob.at_op(&g.solve(&e)));
            }
            for v in dx.psd.iter_mut() {
                let sym = (&*v + v.transpose()) * 0.5;
                *v = sym;
            }
            (dx, dy, ds)
        };
        let scaled = |dx: &Cone, ds: &Cone| -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let sx = dx.psd.iter().zip(&scal).map(|(d, sc)| &sc.r_inv * d * sc.r_inv.transpose()).collect();
            let ss = ds.psd.iter().zip(&scal).map(|(d, sc)| sc.r.transpose() * d * &sc.r).collect();
            (sx, ss)
        };
        let step_len = |dx: &Cone, ds: &Cone, sx: &[DMatrix<f64>], ss: &[DMatrix<f64>]| -> (f64, f64) {
            let tp = sx
                .iter()
                .zip(&scal)
                .map(|(d, sc)| max_step(&sc.lambda, d))
                .fold(max_step_lin(&it.x.lin, &dx.lin), f64::min);
            let td = ss
                .iter()
                .zip(&scal)
                .map(|(d, sc)| max_step(&sc.lambda, d))
                .fold(max_step_lin(&it.s.lin, &ds.lin), f64::min);
            (tp, td)
        };
        // Predictor.
        let rc_aff = Cone { lin: -&it.x.lin, psd: it.x.psd.iter().map(|x| -x).collect() };
        let (dx_a, _, ds_a) = solve_dir(&rc_aff);
        let (sx_a, ss_a) = scaled(&dx_a, &ds_a);
        let (tp_a, td_a) = step_len(&dx_a, &ds_a, &sx_a, &ss_a);
        let (tp_a, td_a) = (tp_a.min(1.0), td_a.min(1.0));
        let mut x_aff = it.clone();
        x_aff.x.axpy(tp_a, &dx_a);
        x_aff.s.axpy(td_a, &ds_a);
        let xs_aff = x_aff.x.dot(&x_aff.s);
        let sigma = (xs_aff / xs).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let lin = DVector::from_iterator(
            d_lin.len(),
            (0..d_lin.len()).map(|j| {
                let (x, s) = (it.x.lin[j], it.s.lin[j]);
                (sigma * mu - x * s - dx_a.lin[j] * ds_a.lin[j]) / s
            }),
        );
        let psd = scal
            .iter()
            .zip(sx_a.iter().zip(&ss_a))
            .map(|(sc, (sx, ss))| {
                let n = sc.lambda.len();
                let cross = (sx * ss + ss * sx) * 0.5;
                let d = DMatrix::from_fn(n, n, |i, j| {
                    let target = if i == j { sigma * mu - sc.lambda[i] * sc.lambda[i] } else { 0.0 };
                    2.0 * (target - cross[(i, j)]) / (sc.lambda[i] + sc.lambda[j])
                });
                &sc.r * d * sc.r.transpose()
            })
            .collect();
        let (dx, dy, ds) = solve_dir(&Cone { lin, psd });
        let (sx, ss) = scaled(&dx, &ds);
        let (tp, td) = step_len(&dx, &ds, &sx, &ss);
        let gamma = 0.99;
        let tp = (gamma * tp).min(1.0);
        let td = (gamma * td).min(1.0);

        it.x.axpy(tp, &dx);
        it.y += dy * td;
        it.s.axpy(td, &ds);
    }

    let (_, best_it, [pobj, dobj, pres, dres]) = best.expect("at least one iterate evaluated");
    let unpack = |cone: &Cone| -> (Vec<f64>, Vec<DMatrix<f64>>) {
        let scalars = prob.scalar_slots.iter().map(|&j| cone.lin[j]).collect();
        let blocks = prob
            .block_slots
            .iter()
            .map(|slot| match *slot {
                Slot::Lin(j) => DMatrix::from_element(1, 1, cone.lin[j]),
                Slot::Psd(p) => cone.psd[p].clone(),
            })
            .collect();
        (scalars, blocks)
    };
    let (scalars, blocks) = unpack(&best_it.x);
    let (dual_scalars, dual_blocks) = unpack(&best_it.s);
    let mut dual_equalities = vec![0.0; inst.rows.len()];
    for (new_i, &orig) in prob.kept.iter().enumerate() {
        dual_equalities[orig] = best_it.y[new_i];
    }
    Ok(ConicSolution {
        scalars,
        blocks,
        dual_equalities,
        dual_scalars,
        dual_blocks,
        status,
        primal_objective: pobj,
        dual_objective: dobj,
        duality_gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        iterations,
        dropped_rows: dropped,
        primal_residual: pres,
        dual_residual: dres,
    })
}

/// Residuals recomputed straight from the instance triplets.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct KktReport {
    /// `max_i |<A_i, X> - b_i|`
    pub primal_res: f64,
    /// `max |C - sum_i y_i A_i - S|` entrywise.
    pub dual_res: f64,
    /// `|<C, X> - b^T y| / (1 + |<C, X>| + |b^T y|)`
    pub gap: f64,
    /// Smallest eigenvalue over all primal and dual cone blocks.
    pub psd_min_eig: f64,
}

impl KktReport {
    pub fn within(&self, tol: f64) -> bool {
        self.primal_res <= tol && self.dual_res <= tol && self.gap <= tol && self.psd_min_eig >= -tol
    }
}

fn eval_form(f: &LinearForm, scalars: &[f64], blocks: &[DMatrix<f64>]) -> f64 {
    let mut v = 0.0;
    for &(j, c) in &f.scalars {
        v += c * scalars[j];
    }
    for e in &f.entries {
        v += e.value * blocks[e.block][(e.row, e.col)];
    }
    v
}

pub fn verify_kkt(inst: &SdpInstance, sol: &ConicSolution) -> KktReport {
    let primal_res = inst
        .rows
        .iter()
        .zip(&inst.rhs)
        .map(|(r, b)| (eval_form(r, &sol.scalars, &sol.blocks) - b).abs())
        .fold(0.0, f64::max);

    // C - A^T y - S, accumulated entrywise over the upper triangles.
    let mut scal_res: Vec<f64> = (0..inst.num_scalars).map(|j| -sol.dual_scalars[j]).collect();
    let mut blk_res: Vec<DMatrix<f64>> = sol.dual_blocks.iter().map(|s| -s).collect();
    let mut add = |f: &LinearForm, w: f64| {
        for &(j, c) in &f.scalars {
            scal_res[j] += w * c;
        }
        for e in &f.entries {
            let c = if e.row == e.col { e.value } else { 0.5 * e.value };
            blk_res[e.block][(e.row, e.col)] += w * c;
            if e.row != e.col {
                blk_res[e.block][(e.col, e.row)] += w * c;
            }
        }
    };
    add(&inst.objective, 1.0);
    for (r, &y) in inst.rows.iter().zip(&sol.dual_equalities) {
        add(r, -y);
    }
    let dual_res = scal_res
        .iter()
        .map(|v| v.abs())
        .chain(blk_res.iter().map(|m| m.amax()))
        .fold(0.0, f64::max);

    let pobj = eval_form(&inst.objective, &sol.scalars, &sol.blocks);
    let dobj: f64 = inst.rhs.iter().zip(&sol.dual_equalities).map(|(b, y)| b * y).sum();
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

    let min_eig = |m: &DMatrix<f64>| SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.min();
    let psd_min_eig = sol
        .scalars
        .iter()
        .chain(&sol.dual_scalars)
        .copied()
        .chain(sol.blocks.iter().chain(&sol.dual_blocks).map(min_eig))
        .fold(f64::INFINITY, f64::min);

    KktReport { primal_res, dual_res, gap, psd_min_eig }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimize_x_with_two_by_two_lmi() {
        // min x  s.t.  [[x, 1], [1, x]] PSD, written with a free 2x2 block Z
        // tied to x: Z00 = x, Z11 = x, Z01 = 1.
        let mut inst = SdpInstance::new(1, vec![2]);
        inst.objective.scalar(0, 1.0);
        let mut r = LinearForm::default();
        r.entry(0, 0, 0, 1.0).scalar(0, -1.0);
        inst.push_row(r, 0.0);
        let mut r = LinearForm::default();
        r.entry(0, 1, 1, 1.0).scalar(0, -1.0);
        inst.push_row(r, 0.0);
        let mut r = LinearForm::default();
        r.entry(0, 0, 1, 1.0);
        inst.push_row(r, 1.0);
        let sol = solve(&inst, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.scalars[0] - 1.0).abs() < 1e-7, "{}", sol.scalars[0]);
        assert!(verify_kkt(&inst, &sol).within(1e-7));
    }

    #[test]
    fn lp_bound_dual_is_one() {
        // min x  s.t.  x - t = 2, x, t >= 0.
        let mut inst = SdpInstance::new(2, vec![]);
        inst.objective.scalar(0, 1.0);
        let mut r = LinearForm::default();
        r.scalar(0, 1.0).scalar(1, -1.0);
        inst.push_row(r, 2.0);
        let sol = solve(&inst, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.scalars[0] - 2.0).abs() < 1e-7);
        assert!((sol.dual_equalities[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn dependent_rows_are_dropped() {
        let mut inst = SdpInstance::new(2, vec![]);
        inst.objective.scalar(0, 1.0);
        let mut r = LinearForm::default();
        r.scalar(0, 1.0).scalar(1, -1.0);
        inst.push_row(r.clone(), 2.0);
        let mut r2 = LinearForm::default();
        r2.scalar(0, 2.0).scalar(1, -2.0);
        inst.push_row(r2, 4.0);
        let sol = solve(&inst, &SolverSettings::default()).unwrap();
        assert_eq!(sol.dropped_rows, vec![1]);
        assert_eq!(sol.dual_equalities[1], 0.0);
        assert!((sol.scalars[0] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn perturbed_primal_is_flagged() {
        let mut inst = SdpInstance::new(1, vec![2]);
        inst.objective.scalar(0, 1.0);
        let mut r = LinearForm::default();
        r.entry(0, 0, 0, 1.0).scalar(0, -1.0);
        inst.push_row(r, 0.0);
        let mut r = LinearForm::default();
        r.entry(0, 1, 1, 1.0).scalar(0, -1.0);
        inst.push_row(r, 0.0);
        let mut r = LinearForm::default();
        r.entry(0, 0, 1, 1.0);
        inst.push_row(r, 1.0);
        let mut sol = solve(&inst, &SolverSettings::default()).unwrap();
        assert!(verify_kkt(&inst, &sol).within(1e-7));
        sol.blocks[0][(0, 1)] += 1e-3;
        sol.blocks[0][(1, 0)] += 1e-3;
        let rep = verify_kkt(&inst, &sol);
        assert!(rep.primal_res > 1e-7);
        assert!(!rep.within(1e-7));
    }

    #[test]
    fn dump_round_trip() {
        let mut inst = SdpInstance::new(1, vec![2, 3]);
        inst.objective.scalar(0, 1.0).entry(1, 0, 2, 0.1 + 0.2);
        let mut r = LinearForm::default();
        r.entry(0, 0, 1, std::f64::consts::PI).scalar(0, -1e-17);
        inst.push_row(r, 1.0 / 3.0);
        let text = inst.to_dump();
        let back = SdpInstance::from_dump(&text).unwrap();
        assert_eq!(back, inst);
        assert!(SdpInstance::from_dump("sdp-dump v1\nscalars x\n").is_err());
    }
}
