//! Linearization of the degree-k objective into the program P₂ and an
//! interior-point solver for it.
//!
//! Each block is parametrized by its traceless coordinates
//! `x_{i,m} = Tr(σ_m ρ_i)`, `ρ_i = I/d + ½ Σ_m x_{i,m} σ_m`, so the trace is
//! fixed by construction and only the PSD cones and the linear inequalities
//! carry barriers.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::degree::{level_one_coefficients, CoordinateTensor, Estimator, SampleSet, SamplerParams};
use crate::error::{Error, Result};
use crate::instance::{Direction, ProductAssignment};
use crate::operator::{CMatrix, DensityOp, HermBasis, HermitianOp, C64};

/// `Σ_{i,j} c[i][j] Tr(σ_j ρ_i) + constant`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFunctional {
    n: usize,
    d: usize,
    coeffs: Vec<f64>,
    pub constant: f64,
}

impl LinearFunctional {
    pub fn zero(n: usize, d: usize) -> Self {
        Self { n, d, coeffs: vec![0.0; n * d * d], constant: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * self.d * self.d + j]
    }

    pub fn add(&mut self, i: usize, j: usize, c: f64) {
        self.coeffs[i * self.d * self.d + j] += c;
    }

    pub fn add_functional(&mut self, other: &Self) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
        self.constant += other.constant;
    }

    pub fn negated(&self) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| -c).collect(), constant: -self.constant, ..*self }
    }

    /// Coefficients with no site/label structure filtered out.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let d2 = self.d * self.d;
        self.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(move |(idx, &c)| (idx / d2, idx % d2, c))
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Value on block expectations `x[i][j] = Tr(σ_j ρ_i)`.
    pub fn eval(&self, x: &[Vec<f64>]) -> f64 {
        self.constant + self.nonzero().map(|(i, j, c)| c * x[i][j]).sum::<f64>()
    }

    pub fn eval_assignment(&self, basis: &HermBasis, assign: &ProductAssignment) -> f64 {
        let x: Vec<Vec<f64>> = assign.blocks().iter().map(|b| basis.expectations(b.op())).collect();
        self.eval(&x)
    }

    fn key(&self) -> Vec<u64> {
        self.coeffs.iter().chain(std::iter::once(&self.constant)).map(|v| v.to_bits()).collect()
    }
}

/// `lower ≤ functional ≤ upper`; either bound may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedConstraint {
    pub functional: LinearFunctional,
    pub lower: f64,
    pub upper: f64,
}

impl LinearizedConstraint {
    /// Amount by which `value` falls outside `[lower, upper]`.
    pub fn violation(&self, value: f64) -> f64 {
        (self.lower - value).max(value - self.upper).max(0.0)
    }
}

/// The program P₂: maximize the objective over products of density matrices
/// subject to the linear constraints.
#[derive(Clone, Debug)]
pub struct SdpModel {
    n: usize,
    d: usize,
    pub objective: LinearFunctional,
    constraints: Vec<LinearizedConstraint>,
    index: HashMap<Vec<u64>, usize>,
    emitted: usize,
    contradiction: Option<String>,
}

impl SdpModel {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            objective: LinearFunctional::zero(n, d),
            constraints: Vec::new(),
            index: HashMap::new(),
            emitted: 0,
            contradiction: None,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn constraints(&self) -> &[LinearizedConstraint] {
        &self.constraints
    }

    /// Constraints handed to [`push`](Self::push), before merging.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Set when a constant constraint excludes its own value.
    pub fn contradiction(&self) -> Option<&str> {
        self.contradiction.as_deref()
    }

    /// Adds a constraint, merging it with an identical functional (tightest
    /// interval) and dropping constant ones after checking them.
    pub fn push(&mut self, functional: LinearFunctional, lower: f64, upper: f64) -> Result<()> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvalidArgument(format!("constraint bounds [{lower}, {upper}] are not an interval")));
        }
        if functional.n != self.n || functional.d != self.d {
            return Err(Error::Shape("constraint functional does not match the model blocks".into()));
        }
        self.emitted += 1;
        if functional.is_constant() {
            let v = functional.constant;
            if (v < lower || v > upper) && self.contradiction.is_none() {
                self.contradiction = Some(format!("constant {v} outside [{lower}, {upper}]"));
            }
            return Ok(());
        }
        let key = functional.key();
        if let Some(&idx) = self.index.get(&key) {
            let c = &mut self.constraints[idx];
            c.lower = c.lower.max(lower);
            c.upper = c.upper.min(upper);
            if c.lower > c.upper && self.contradiction.is_none() {
                self.contradiction = Some(format!("merged bounds [{}, {}] are empty", c.lower, c.upper));
            }
            return Ok(());
        }
        self.index.insert(key, self.constraints.len());
        self.constraints.push(LinearizedConstraint { functional, lower, upper });
        Ok(())
    }

    /// `max_c violation` of the constraints at `assign`.
    pub fn max_violation(&self, basis: &HermBasis, assign: &ProductAssignment) -> f64 {
        let x: Vec<Vec<f64>> = assign.blocks().iter().map(|b| basis.expectations(b.op())).collect();
        self.constraints.iter().map(|c| c.violation(c.functional.eval(&x))).fold(0.0, f64::max)
    }

    /// Plain-text listing; see the README for the format.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "hamlet-sdp 1");
        let _ = writeln!(out, "blocks {} {}", self.n, self.d);
        let _ = writeln!(out, "basis gell-mann");
        let _ = writeln!(out, "objective {:e}", self.objective.constant);
        for (i, j, c) in self.objective.nonzero() {
            let _ = writeln!(out, "  {i} {j} {c:e}");
        }
        let _ = writeln!(out, "constraints {}", self.constraints.len());
        for (idx, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(
                out,
                "constraint {idx} {} {} {:e}",
                fmt_bound(c.lower),
                fmt_bound(c.upper),
                c.functional.constant
            );
            for (i, j, v) in c.functional.nonzero() {
                let _ = writeln!(out, "  {i} {j} {v:e}");
            }
        }
        let _ = writeln!(out, "end");
        out
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:e}")
    }
}

/// Builds P₂ from sampled estimates. Terms of different arity are linearized
/// separately and their objectives summed.
pub fn linearize(tensor: &CoordinateTensor, sample: &SampleSet, params: &SamplerParams) -> Result<SdpModel> {
    let n = tensor.n();
    let d = tensor.d();
    let mut model = SdpModel::new(n, d);
    let mut est = Estimator::new(tensor, sample, params)?;
    let nf = n as f64;
    for group in tensor.groups() {
        let m = group.degree();
        if m > params.ladder.len() {
            return Err(Error::InvalidArgument(format!(
                "ladder has {} levels, terms have degree {m}",
                params.ladder.len()
            )));
        }
        let f = linearize_level(
            tensor,
            &mut est,
            params,
            &mut model,
            m,
            &mut Vec::new(),
            &mut Vec::new(),
            params.epsilon(m),
            None,
            nf,
        )?;
        model.objective.add_functional(&f);
    }
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
fn linearize_level(
    tensor: &CoordinateTensor,
    est: &mut Estimator<'_>,
    params: &SamplerParams,
    model: &mut SdpModel,
    degree: usize,
    sites: &mut Vec<usize>,
    labels: &mut Vec<usize>,
    eps: f64,
    bounds: Option<(f64, f64)>,
    nf: f64,
) -> Result<LinearFunctional> {
    let n = tensor.n();
    let d = tensor.d();
    let d2 = d * d;
    let b = degree - sites.len();
    let mut f = LinearFunctional::zero(n, d);
    if b == 1 {
        for (i, j, c) in level_one_coefficients(tensor, degree, sites, labels) {
            f.add(i, j, c);
        }
        if let Some((l, u)) = bounds {
            model.push(f.clone(), l, u)?;
        }
        return Ok(f);
    }
    let group = tensor.group(degree).expect("degree present");
    let eps_next = params.step_down(eps, b);
    let half = eps_next * nf.powi(b as i32 - 1);
    for i in 0..n {
        sites.push(i);
        if !group.has_prefix(sites) {
            sites.pop();
            continue;
        }
        for j in 0..d2 {
            labels.push(j);
            let e = est.estimate(degree, sites, labels);
            f.add(i, j, e);
            linearize_level(
                tensor,
                est,
                params,
                model,
                degree,
                sites,
                labels,
                eps_next,
                Some((e - half, e + half)),
                nf,
            )?;
            labels.pop();
        }
        sites.pop();
    }
    if let Some((l, u)) = bounds {
        let margin = eps_next * d2 as f64 * nf.powi(b as i32);
        model.push(f.clone(), l - margin, u + margin)?;
    }
    Ok(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    OptimalWithinTol,
    Infeasible,
    MaxIter,
}

impl std::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SdpStatus::OptimalWithinTol => "optimal-within-tol",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::MaxIter => "max-iter",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub eps_sdp: f64,
    pub feas_tol: f64,
    /// Half-width given to intervals narrower than twice this value.
    pub eq_slack: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    pub projection_abort: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { eps_sdp: 1e-6, feas_tol: 1e-6, eq_slack: 1e-13, max_outer: 80, max_newton: 200, projection_abort: 1e-6 }
    }
}

impl SolverOptions {
    pub fn with_eps(eps_sdp: f64) -> Self {
        Self { eps_sdp, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub assignment: Option<ProductAssignment>,
    /// Objective at the returned assignment, in the model's own sign.
    pub objective: Option<f64>,
    /// Certified bound on the optimum (upper for maximize, lower for minimize).
    pub dual_bound: Option<f64>,
    pub max_violation: f64,
    pub projection_shift: f64,
    pub newton_steps: usize,
}

impl SdpSolution {
    pub fn gap(&self) -> Option<f64> {
        Some((self.dual_bound? - self.objective?).abs())
    }
}

/// `s(x) = row·x + e ≥ 0`.
struct Ineq {
    row: Vec<f64>,
    e: f64,
}

struct Problem {
    n: usize,
    d: usize,
    /// Traceless basis elements.
    sigma: Vec<CMatrix>,
    c: Vec<f64>,
    c0: f64,
    ineqs: Vec<Ineq>,
}

struct Blocks {
    inv: Vec<CMatrix>,
}

impl Problem {
    fn vars(&self) -> usize {
        self.n * self.sigma.len()
    }

    fn block(&self, x: &[f64], i: usize) -> CMatrix {
        let t = self.sigma.len();
        let mut m = CMatrix::identity(self.d, self.d) * C64::new(1.0 / self.d as f64, 0.0);
        for (mi, s) in self.sigma.iter().enumerate() {
            let v = x[i * t + mi];
            if v != 0.0 {
                m += s * C64::new(0.5 * v, 0.0);
            }
        }
        m
    }

    fn blocks(&self, x: &[f64]) -> Option<Blocks> {
        let mut inv = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let rho = self.block(x, i);
            let chol = rho.cholesky()?;
            inv.push(chol.inverse());
        }
        Some(Blocks { inv })
    }

    fn slack(&self, k: usize, x: &[f64]) -> f64 {
        let q = &self.ineqs[k];
        q.row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + q.e
    }

    /// `Σ_m a_m σ_m` for the block-`i` slice of `a`.
    fn operator(&self, a: &[f64], i: usize) -> CMatrix {
        let t = self.sigma.len();
        let mut m = CMatrix::zeros(self.d, self.d);
        for (mi, s) in self.sigma.iter().enumerate() {
            let v = a[i * t + mi];
            if v != 0.0 {
                m += s * C64::new(v, 0.0);
            }
        }
        m
    }

    fn lambda_max(&self, m: CMatrix) -> f64 {
        HermitianOp::from_matrix(m).expect("square").lambda_max()
    }

    /// `c0 + Σ λ e + Σ_i λ_max(C_i + Σ λ Q_i)`: an upper bound on the optimum for any λ ≥ 0.
    fn dual_bound(&self, lambda: &[f64]) -> f64 {
        let mut a = self.c.clone();
        let mut value = self.c0;
        for (l, q) in lambda.iter().zip(&self.ineqs) {
            value += l * q.e;
            for (ai, r) in a.iter_mut().zip(&q.row) {
                *ai += l * r;
            }
        }
        value + (0..self.n).map(|i| self.lambda_max(self.operator(&a, i))).sum::<f64>()
    }

    /// With `Σλ = 1`: `sup_x Σ λ s(x)`; negative means no point satisfies every inequality.
    fn farkas(&self, lambda: &[f64]) -> f64 {
        let mut a = vec![0.0; self.vars()];
        let mut value = 0.0;
        for (l, q) in lambda.iter().zip(&self.ineqs) {
            value += l * q.e;
            for (ai, r) in a.iter_mut().zip(&q.row) {
                *ai += l * r;
            }
        }
        value + (0..self.n).map(|i| self.lambda_max(self.operator(&a, i))).sum::<f64>()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.c0 + self.c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Damped Newton centering of `t·(phase-1 τ or −c·x) − Σ log det ρ_i − Σ log s_k`.
    /// In phase 1 the last variable is `τ` and every slack is shifted by it.
    fn center(&self, v: &mut [f64], t: f64, phase1: bool, max_steps: usize) -> usize {
        let nx = self.vars();
        let nv = v.len();
        let tdim = self.sigma.len();
        let mut steps = 0;
        while steps < max_steps {
            let Some(blocks) = self.blocks(&v[..nx]) else { break };
            let mut g = DVector::<f64>::zeros(nv);
            let mut h = DMatrix::<f64>::zeros(nv, nv);
            for i in 0..self.n {
                let a: Vec<CMatrix> = self.sigma.iter().map(|s| &blocks.inv[i] * s).collect();
                for m in 0..tdim {
                    g[i * tdim + m] -= 0.5 * a[m].trace().re;
                    for m2 in m..tdim {
                        let val = 0.25 * trace_of_product(&a[m], &a[m2]);
                        h[(i * tdim + m, i * tdim + m2)] += val;
                        if m2 != m {
                            h[(i * tdim + m2, i * tdim + m)] += val;
                        }
                    }
                }
            }
            let tau = if phase1 { v[nx] } else { 0.0 };
            for (k, q) in self.ineqs.iter().enumerate() {
                let s = self.slack(k, &v[..nx]) + tau;
                let mut row: Vec<(usize, f64)> =
                    q.row.iter().enumerate().filter(|(_, r)| **r != 0.0).map(|(j, r)| (j, *r)).collect();
                if phase1 {
                    row.push((nx, 1.0));
                }
                let inv = 1.0 / s;
                for &(a, ra) in &row {
                    g[a] -= ra * inv;
                    for &(b, rb) in &row {
                        h[(a, b)] += ra * rb * inv * inv;
                    }
                }
            }
            if phase1 {
                g[nx] += t;
            } else {
                for (j, cj) in self.c.iter().enumerate() {
                    g[j] -= t * cj;
                }
            }
            let Some(dir) = solve_spd(&h, &g) else { break };
            let dec2 = -g.dot(&dir);
            if !(dec2.is_finite()) || dec2 < 0.0 {
                break;
            }
            let lam = dec2.sqrt();
            if lam < 1e-7 {
                break;
            }
            let mut alpha = if lam > 0.25 { 1.0 / (1.0 + lam) } else { 1.0 };
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = v.iter().zip(dir.iter()).map(|(a, b)| a + alpha * b).collect();
                if self.strictly_feasible(&trial, phase1) {
                    v.copy_from_slice(&trial);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            steps += 1;
            if !accepted {
                break;
            }
        }
        steps
    }

    fn strictly_feasible(&self, v: &[f64], phase1: bool) -> bool {
        let nx = self.vars();
        let tau = if phase1 { v[nx] } else { 0.0 };
        (0..self.ineqs.len()).all(|k| self.slack(k, &v[..nx]) + tau > 0.0) && self.blocks(&v[..nx]).is_some()
    }
}

fn trace_of_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            acc += (a[(r, c)] * b[(c, r)]).re;
        }
    }
    acc
}

/// Solves `H dir = -g` with Jacobi scaling; adds a ridge if Cholesky fails.
fn solve_spd(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / h[(i, i)].max(1e-300).sqrt()).collect();
    let mut hs = h.clone();
    for i in 0..n {
        for j in 0..n {
            hs[(i, j)] *= scale[i] * scale[j];
        }
    }
    let rhs = DVector::from_iterator(n, (0..n).map(|i| -g[i] * scale[i]));
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut m = hs.clone();
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let y = ch.solve(&rhs);
            return Some(DVector::from_iterator(n, (0..n).map(|i| y[i] * scale[i])));
        }
        ridge = if ridge == 0.0 { 1e-14 } else { ridge * 100.0 };
    }
    None
}

const BARRIER_GROWTH: f64 = 100.0;

/// Interior-point solve of P₂. `direction` picks maximize or minimize; values
/// are reported in the objective's own sign.
pub fn solve_sdp(model: &SdpModel, direction: Direction, opts: &SolverOptions) -> Result<SdpSolution> {
    let basis = HermBasis::build(model.d)?;
    let infeasible = |steps| SdpSolution {
        status: SdpStatus::Infeasible,
        assignment: None,
        objective: None,
        dual_bound: None,
        max_violation: f64::INFINITY,
        projection_shift: 0.0,
        newton_steps: steps,
    };
    if model.contradiction.is_some() {
        return Ok(infeasible(0));
    }
    let problem = build_problem(model, &basis, direction, opts);
    let nx = problem.vars();
    let mut x = vec![0.0; nx];
    let mut steps = 0;

    if !problem.strictly_feasible(&x, false) {
        let worst = (0..problem.ineqs.len()).map(|k| -problem.slack(k, &x)).fold(0.0, f64::max);
        let mut v = x.clone();
        v.push(worst + 1.0);
        let mut t = 1.0;
        let mut found = false;
        for _ in 0..opts.max_outer {
            steps += problem.center(&mut v, t, true, opts.max_newton);
            let tau = v[nx];
            if tau < 0.0 {
                found = true;
                break;
            }
            let lambda: Vec<f64> =
                (0..problem.ineqs.len()).map(|k| 1.0 / (t * (problem.slack(k, &v[..nx]) + tau))).collect();
            let total: f64 = lambda.iter().sum();
            let normalized: Vec<f64> = lambda.iter().map(|l| l / total).collect();
            if problem.farkas(&normalized) < -1e-12 {
                return Ok(infeasible(steps));
            }
            t *= BARRIER_GROWTH;
        }
        if !found {
            return Ok(infeasible(steps));
        }
        x.copy_from_slice(&v[..nx]);
    }

    let mut t = 1.0;
    let mut best_bound = f64::INFINITY;
    let mut certified = false;
    for _ in 0..opts.max_outer {
        steps += problem.center(&mut x, t, false, opts.max_newton);
        let lambda: Vec<f64> = (0..problem.ineqs.len()).map(|k| 1.0 / (t * problem.slack(k, &x))).collect();
        best_bound = best_bound.min(problem.dual_bound(&lambda));
        if best_bound - problem.objective(&x) <= opts.eps_sdp {
            certified = true;
            break;
        }
        t *= BARRIER_GROWTH;
    }

    let mut blocks = Vec::with_capacity(model.n);
    let mut shift: f64 = 0.0;
    for i in 0..model.n {
        let op = HermitianOp::from_matrix(problem.block(&x, i))?;
        let (rho, moved) = DensityOp::project(&op);
        shift = shift.max(moved);
        blocks.push(rho);
    }
    if shift > opts.projection_abort {
        return Err(Error::Projection(shift));
    }
    let assignment = ProductAssignment::new(blocks)?;
    let value = model.objective.eval_assignment(&basis, &assignment);
    let sign = direction.sign();
    Ok(SdpSolution {
        status: if certified { SdpStatus::OptimalWithinTol } else { SdpStatus::MaxIter },
        objective: Some(value),
        dual_bound: Some(sign * best_bound),
        max_violation: model.max_violation(&basis, &assignment),
        projection_shift: shift,
        assignment: Some(assignment),
        newton_steps: steps,
    })
}

fn build_problem(model: &SdpModel, basis: &HermBasis, direction: Direction, opts: &SolverOptions) -> Problem {
    let d = model.d;
    let d2 = d * d;
    let id = basis.identity_index();
    let id_value = (2.0 / d as f64).sqrt();
    let sigma: Vec<CMatrix> = (0..d2).filter(|&j| j != id).map(|j| basis.element(j).matrix().clone()).collect();
    let tdim = sigma.len();
    // identity coordinates are constant; the rest map onto the traceless variables
    let affine = |f: &LinearFunctional, sign: f64| -> (Vec<f64>, f64) {
        let mut row = vec![0.0; model.n * tdim];
        let mut e = sign * f.constant;
        for (i, j, c) in f.nonzero() {
            if j == id {
                e += sign * c * id_value;
            } else {
                let m = if j < id { j } else { j - 1 };
                row[i * tdim + m] += sign * c;
            }
        }
        (row, e)
    };
    let sign = direction.sign();
    let (c, c0) = affine(&model.objective, sign);
    let mut ineqs = Vec::new();
    for con in &model.constraints {
        let (mut lower, mut upper) = (con.lower, con.upper);
        if upper - lower < 2.0 * opts.eq_slack {
            let mid = 0.5 * (lower + upper);
            lower = mid - opts.eq_slack;
            upper = mid + opts.eq_slack;
        }
        let (row, e) = affine(&con.functional, 1.0);
        if upper.is_finite() {
            ineqs.push(Ineq { row: row.iter().map(|r| -r).collect(), e: upper - e });
        }
        if lower.is_finite() {
            ineqs.push(Ineq { row, e: e - lower });
        }
    }
    Problem { n: model.n, d, sigma, c, c0, ineqs }
}

/// Value of the degree-k objective on the solution blocks.
pub fn evaluate_on_p1(tensor: &CoordinateTensor, solution: &SdpSolution) -> Option<f64> {
    let assign = solution.assignment.as_ref()?;
    let x: Vec<Vec<f64>> = assign.blocks().iter().map(|b| tensor.basis().expectations(b.op())).collect();
    Some(tensor.objective_value(&x))
}
