//! The sample / enumerate / linearize / solve / round loop, plus brute-force
//! oracles used as ground truth on small instances.

use std::time::Instant;

use log::{debug, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degree::{compute_params, decompose, CoordinateTensor, DeltaNet, SampleSet, SamplerParams};
use crate::error::{Error, Result};
use crate::instance::{Direction, LocalHamiltonianInstance, ProductAssignment};
use crate::operator::{checked_pow, CMatrix, CVector, DensityOp, HermitianOp, PureState, C64};
use crate::product::{best_rsd_branch, round_conditional_expectations};
use crate::random::{random_unit_vector, rng_from_seed};
use crate::sdp::{linearize, solve_sdp, SdpModel, SdpStatus, SolverOptions};
use crate::SCHEMA_VERSION;

/// Seed of the fixed density sample behind practical nets.
pub const NET_SEED: u64 = 0x6e65_7400;
/// Density matrices sampled when thinning a practical net.
pub const NET_SAMPLES: usize = 2000;
/// Iterations run when no cap is given.
pub const DEFAULT_ITERATION_CAP: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ParamMode {
    Theory { eps: f64 },
    Practical { sample_size: usize, delta: f64, eps_prime: f64, eps_sdp: f64 },
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub mode: ParamMode,
    pub direction: Direction,
    pub seed: u64,
    pub iteration_cap: Option<u64>,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// Overrides the default cutoff `ε′/10`.
    pub cutoff_fraction: Option<f64>,
}

impl PipelineConfig {
    pub fn practical(sample_size: usize, delta: f64, eps_prime: f64, seed: u64) -> Self {
        Self {
            mode: ParamMode::Practical { sample_size, delta, eps_prime, eps_sdp: 1e-6 },
            direction: Direction::Maximize,
            seed,
            iteration_cap: None,
            jobs: 1,
            cutoff_fraction: None,
        }
    }

    pub fn theory(eps: f64, seed: u64) -> Self {
        Self {
            mode: ParamMode::Theory { eps },
            direction: Direction::Maximize,
            seed,
            iteration_cap: None,
            jobs: 1,
            cutoff_fraction: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if let ParamMode::Practical { delta, eps_prime, eps_sdp, .. } = self.mode {
            if !(eps_prime > 0.0 && eps_sdp > 0.0 && delta > 0.0) {
                return Err(Error::InvalidArgument("δ, ε′ and ε_sdp must be positive".into()));
            }
        }
        if let Some(c) = self.cutoff_fraction {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidArgument(format!("cutoff fraction must lie in [0, 1], got {c}")));
            }
        }
        Ok(())
    }
}

/// One net assignment to the sampled sites and what its SDP produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter_id: u64,
    /// Net point index per distinct sampled site.
    pub net_assignment: Vec<u64>,
    pub sdp_status: SdpStatus,
    pub opt2: Option<f64>,
    pub p1_value: Option<f64>,
    pub constraints: usize,
    pub newton_steps: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub eps: Option<f64>,
    pub eps_prime: f64,
    pub eps_sdp: f64,
    pub delta: f64,
    pub sample_size: u64,
    pub f: Option<f64>,
    pub g: Option<f64>,
    pub ladder: Vec<f64>,
    pub cutoff_fraction: f64,
    pub net_thinned: bool,
    pub log10_net_size: f64,
    pub log10_planned_iterations: f64,
}

/// Complex matrices and vectors are written as nested `[re, im]` pairs.
pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect()
}

pub fn vector_to_json(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: String,
    pub direction: Direction,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub params: RunParams,
    pub sample_sites: Vec<usize>,
    pub distinct_sites: Vec<usize>,
    /// `None` when the count does not fit in 64 bits.
    pub planned_iterations: Option<u64>,
    pub iterations_run: u64,
    pub partial: bool,
    pub best_iter: Option<u64>,
    pub best_p1_value: Option<f64>,
    pub best_assignment: Option<Vec<JsonMatrix>>,
    pub rounded_value: Option<f64>,
    pub rounded_assignment: Option<Vec<Vec<[f64; 2]>>>,
    pub iterations: Vec<IterationRecord>,
    pub wall_ms: f64,
}

impl RunReport {
    /// Same report with every timing field zeroed.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.wall_ms = 0.0;
        for it in &mut r.iterations {
            it.wall_ms = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    /// `iter_id,sdp_status,opt2,p1_value,wall_ms`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        let mut out = String::from("iter_id,sdp_status,opt2,p1_value,wall_ms\n");
        for it in &self.iterations {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                it.iter_id,
                it.sdp_status,
                opt(it.opt2),
                opt(it.p1_value),
                it.wall_ms
            ));
        }
        out
    }
}

/// Everything an iteration needs, shared read-only across workers.
struct Plan {
    tensor: CoordinateTensor,
    sampler: SamplerParams,
    net: DeltaNet,
    sample: SampleSet,
    distinct: Vec<usize>,
    net_size: u128,
    solver: SolverOptions,
    run: RunParams,
}

fn plan(inst: &LocalHamiltonianInstance, config: &PipelineConfig) -> Result<Plan> {
    config.validate()?;
    let n = inst.n();
    let d = inst.d();
    let k = inst.max_arity().max(1);
    let tensor = decompose(inst)?;
    let mut rng = rng_from_seed(config.seed);
    let (mut sampler, net, size, solver, eps, f, g) = match config.mode {
        ParamMode::Theory { eps } => {
            let tp = compute_params(eps, n, d, k)?;
            let net = DeltaNet::grid(d, tp.delta)?;
            (tp.sampler(), net, tp.sample_size, SolverOptions::with_eps(tp.eps_sdp), Some(eps), Some(tp.f), Some(tp.g))
        }
        ParamMode::Practical { sample_size, delta, eps_prime, eps_sdp } => {
            let net = DeltaNet::thinned(d, delta, NET_SEED, NET_SAMPLES)?;
            (
                SamplerParams::practical(d, k, eps_prime, delta),
                net,
                sample_size as u64,
                SolverOptions::with_eps(eps_sdp),
                None,
                None,
                None,
            )
        }
    };
    if let Some(c) = config.cutoff_fraction {
        sampler = sampler.with_cutoff(c);
    }
    let size = if tensor.max_degree() <= 1 { 0 } else { size };
    let sites: Vec<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
    let sample = SampleSet::from_sites(n, sites)?;
    let distinct = sample.distinct_sites();
    let net_size = net.size().ok_or_else(|| Error::InvalidArgument("net too large to enumerate".into()))?;
    let log10_net = net.log10_size();
    let run = RunParams {
        eps,
        eps_prime: sampler.epsilon(k),
        eps_sdp: solver.eps_sdp,
        delta: sampler.delta,
        sample_size: size,
        f,
        g,
        ladder: sampler.ladder.clone(),
        cutoff_fraction: sampler.cutoff_fraction,
        net_thinned: net.is_thinned(),
        log10_net_size: log10_net,
        log10_planned_iterations: log10_net * distinct.len() as f64,
    };
    Ok(Plan { tensor, sampler, net, sample, distinct, net_size, solver, run })
}

fn digits(mut id: u64, base: u128, len: usize) -> Vec<u64> {
    let mut out = vec![0u64; len];
    for p in (0..len).rev() {
        out[p] = (id as u128 % base) as u64;
        id = (id as u128 / base) as u64;
    }
    out
}

fn run_iteration(
    inst: &LocalHamiltonianInstance,
    plan: &Plan,
    direction: Direction,
    iter_id: u64,
) -> (IterationRecord, Option<ProductAssignment>) {
    let start = Instant::now();
    let assignment = digits(iter_id, plan.net_size, plan.distinct.len());
    let mut sample = plan.sample.clone();
    for (&site, &idx) in plan.distinct.iter().zip(&assignment) {
        sample.set_point(site, plan.net.element(idx as u128));
    }
    let mut record = IterationRecord {
        iter_id,
        net_assignment: assignment,
        sdp_status: SdpStatus::MaxIter,
        opt2: None,
        p1_value: None,
        constraints: 0,
        newton_steps: 0,
        wall_ms: 0.0,
    };
    let outcome = linearize(&plan.tensor, &sample, &plan.sampler).and_then(|model| {
        record.constraints = model.constraints().len();
        solve_sdp(&model, direction, &plan.solver)
    });
    let mut found = None;
    match outcome {
        Ok(sol) => {
            record.sdp_status = sol.status;
            record.opt2 = sol.objective;
            record.newton_steps = sol.newton_steps;
            if let Some(a) = sol.assignment {
                record.p1_value = inst.product_energy(&a).ok();
                found = Some(a);
            }
        }
        Err(e) => warn!("iteration {iter_id}: {e}"),
    }
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    debug!("iteration {iter_id}: {:?} p1={:?}", record.sdp_status, record.p1_value);
    (record, found)
}

/// Runs the full loop and rounds the best assignment found.
pub fn approximate(inst: &LocalHamiltonianInstance, config: &PipelineConfig) -> Result<RunReport> {
    let start = Instant::now();
    let plan = plan(inst, config)?;
    let planned = plan.net_size.checked_pow(plan.distinct.len() as u32).and_then(|v| u64::try_from(v).ok());
    let cap = config.iteration_cap.unwrap_or(DEFAULT_ITERATION_CAP);
    let to_run = planned.map_or(cap, |p| p.min(cap));
    let partial = planned.is_none_or(|p| p > cap);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<(IterationRecord, Option<ProductAssignment>)> = pool
        .install(|| (0..to_run).into_par_iter().map(|id| run_iteration(inst, &plan, config.direction, id)).collect());

    let mut best: Option<(u64, f64, ProductAssignment)> = None;
    let mut records = Vec::with_capacity(results.len());
    for (rec, assign) in results {
        if let (Some(v), Some(a)) = (rec.p1_value, assign) {
            if best.as_ref().is_none_or(|(_, b, _)| config.direction.better(v, *b)) {
                best = Some((rec.iter_id, v, a));
            }
        }
        records.push(rec);
    }
    let mut report = RunReport {
        schema_version: SCHEMA_VERSION,
        mode: match config.mode {
            ParamMode::Theory { .. } => "theory".into(),
            ParamMode::Practical { .. } => "practical".into(),
        },
        direction: config.direction,
        seed: config.seed,
        n: inst.n(),
        d: inst.d(),
        k: inst.k(),
        params: plan.run.clone(),
        sample_sites: plan.sample.sites().to_vec(),
        distinct_sites: plan.distinct.clone(),
        planned_iterations: planned,
        iterations_run: to_run,
        partial,
        best_iter: None,
        best_p1_value: None,
        best_assignment: None,
        rounded_value: None,
        rounded_assignment: None,
        iterations: records,
        wall_ms: 0.0,
    };
    if let Some((id, value, assign)) = best {
        let rounded = round_conditional_expectations(inst, &assign, config.direction)?;
        report.best_iter = Some(id);
        report.best_p1_value = Some(value);
        report.best_assignment = Some(assign.blocks().iter().map(|b| matrix_to_json(b.op().matrix())).collect());
        report.rounded_value = Some(inst.product_energy(&rounded)?);
        report.rounded_assignment =
            Some(rounded.blocks().iter().map(|b| vector_to_json(&b.op().eigh().vector(b.dim() - 1))).collect());
    }
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

/// The linearized program of one iteration, as solved by [`approximate`].
pub fn iteration_model(inst: &LocalHamiltonianInstance, config: &PipelineConfig, iter_id: u64) -> Result<SdpModel> {
    let plan = plan(inst, config)?;
    let mut sample = plan.sample.clone();
    for (&site, &idx) in plan.distinct.iter().zip(&digits(iter_id, plan.net_size, plan.distinct.len())) {
        sample.set_point(site, plan.net.element(idx as u128));
    }
    linearize(&plan.tensor, &sample, &plan.sampler)
}

/// Dense eigensolves are refused above this dimension unless raised.
pub const ORACLE_DENSE_CAP: usize = 1 << 12;
pub const ORACLE_DENSE_MAX: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extreme {
    Max,
    Min,
}

/// Extreme eigenpair of the embedded Hamiltonian. Diagonal instances skip the
/// dense solve and may go up to the global capacity.
pub fn oracle_extreme_eig(
    inst: &LocalHamiltonianInstance,
    which: Extreme,
    dense_cap: usize,
) -> Result<(f64, PureState)> {
    let n = inst.n();
    let d = inst.d();
    let dims = vec![d; n];
    if inst.all_terms_diagonal() {
        let diag = inst.full_diagonal(crate::operator::max_dim())?;
        let pick = diag
            .iter()
            .enumerate()
            .reduce(|a, b| match which {
                Extreme::Max if b.1 > a.1 => b,
                Extreme::Min if b.1 < a.1 => b,
                _ => a,
            })
            .map(|(i, &v)| (i, v))
            .expect("non-empty diagonal");
        return Ok((pick.1, PureState::basis(dims, pick.0)?));
    }
    let cap = dense_cap.min(ORACLE_DENSE_MAX);
    checked_pow(d, n, cap)?;
    let h = inst.full_operator(cap)?;
    let eig = h.eigh();
    let idx = match which {
        Extreme::Max => eig.values.len() - 1,
        Extreme::Min => 0,
    };
    Ok((eig.values[idx], PureState::new(dims, eig.vector(idx))?))
}

#[derive(Clone, Debug)]
pub struct ProductOracle {
    pub assignment: ProductAssignment,
    pub value: f64,
    /// Best value of the Bloch-grid search when it ran.
    pub grid_value: Option<f64>,
}

/// Sweeps until the value changes by less than this.
pub const SWEEP_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000;

fn extreme_vector(op: &HermitianOp, direction: Direction) -> (CVector, f64) {
    let eig = op.eigh();
    let idx = match direction {
        Direction::Maximize => eig.values.len() - 1,
        Direction::Minimize => 0,
    };
    (eig.vector(idx), eig.values[idx])
}

/// Alternating single-site optimization from `vectors` to local convergence.
fn sweep_to_convergence(inst: &LocalHamiltonianInstance, vectors: &mut [CVector], direction: Direction) -> Result<f64> {
    let mut mats: Vec<CMatrix> = vectors.iter().map(|v| v * v.adjoint()).collect();
    let mut value = inst.product_energy(&ProductAssignment::from_vectors(vectors)?)?;
    for _ in 0..MAX_SWEEPS {
        for site in 0..inst.n() {
            let refs: Vec<&CMatrix> = mats.iter().collect();
            let env = inst.environment_operator(&refs, site);
            let (v, _) = extreme_vector(&env, direction);
            mats[site] = &v * v.adjoint();
            vectors[site] = v;
        }
        let next = inst.product_energy(&ProductAssignment::from_vectors(vectors)?)?;
        let done = (next - value).abs() < SWEEP_TOL;
        value = next;
        if done {
            break;
        }
    }
    Ok(value)
}

fn bloch(theta: f64, phi: f64) -> CVector {
    CVector::from_vec(vec![C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phi)])
}

fn bloch_grid(polar: usize, azimuth: usize) -> Vec<CVector> {
    let mut out = Vec::with_capacity(polar * azimuth);
    for a in 0..polar {
        let theta = std::f64::consts::PI * a as f64 / (polar - 1) as f64;
        for b in 0..azimuth {
            out.push(bloch(theta, 2.0 * std::f64::consts::PI * b as f64 / azimuth as f64));
        }
    }
    out
}

/// Grid over every site but the last, whose best response is solved exactly.
fn grid_search(inst: &LocalHamiltonianInstance, direction: Direction) -> Result<(ProductAssignment, f64)> {
    let n = inst.n();
    let grid = match n {
        1 => Vec::new(),
        2 => bloch_grid(120, 240),
        _ => bloch_grid(24, 48),
    };
    let free = n - 1;
    let mut best: Option<(Vec<CVector>, f64)> = None;
    let mut idx = vec![0usize; free];
    let id = CMatrix::identity(2, 2) * C64::new(0.5, 0.0);
    loop {
        let mut vectors: Vec<CVector> = idx.iter().map(|&i| grid[i].clone()).collect();
        let mut mats: Vec<CMatrix> = vectors.iter().map(|v| v * v.adjoint()).collect();
        mats.push(id.clone());
        let refs: Vec<&CMatrix> = mats.iter().collect();
        let env = inst.environment_operator(&refs, n - 1);
        let (v, _) = extreme_vector(&env, direction);
        vectors.push(v);
        let value = inst.product_energy(&ProductAssignment::from_vectors(&vectors)?)?;
        if best.as_ref().is_none_or(|(_, b)| direction.better(value, *b)) {
            best = Some((vectors, value));
        }
        let mut p = free;
        loop {
            if p == 0 {
                let (vectors, value) = best.expect("grid visited");
                return Ok((ProductAssignment::from_vectors(&vectors)?, value));
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < grid.len() {
                break;
            }
            idx[p] = 0;
        }
    }
}

/// Best pure product assignment found by seeded restarts of alternating
/// optimization; for `n ≤ 3, d = 2` also by a Bloch-sphere grid.
pub fn oracle_product(
    inst: &LocalHamiltonianInstance,
    direction: Direction,
    restarts: usize,
    seed: u64,
) -> Result<ProductOracle> {
    let mut rng = rng_from_seed(seed);
    let mut best: Option<(Vec<CVector>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let mut vectors: Vec<CVector> = (0..inst.n()).map(|_| random_unit_vector(inst.d(), &mut rng)).collect();
        let value = sweep_to_convergence(inst, &mut vectors, direction)?;
        if best.as_ref().is_none_or(|(_, b)| direction.better(value, *b)) {
            best = Some((vectors, value));
        }
    }
    let (vectors, mut value) = best.expect("at least one restart");
    let mut assignment = ProductAssignment::from_vectors(&vectors)?;
    let mut grid_value = None;
    if inst.n() <= 3 && inst.d() == 2 {
        let (ga, gv) = grid_search(inst, direction)?;
        grid_value = Some(gv);
        if direction.better(gv, value) {
            assignment = ga;
            value = gv;
        }
    }
    Ok(ProductOracle { assignment, value, grid_value })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub schema_version: u32,
    pub direction: Direction,
    pub pipeline_value: Option<f64>,
    pub product_optimum: f64,
    pub extreme_eigenvalue: f64,
    pub ratio_to_product: Option<f64>,
    pub ratio_to_extreme: Option<f64>,
    /// Product optimum against `λ_max / d^{k-1}` (maximize only).
    pub product_ratio_bound: Option<f64>,
    pub product_ratio_holds: Option<bool>,
    /// Best recursive-Schmidt branch of the top eigenvector.
    pub rsd_witness_value: Option<f64>,
    pub rsd_witness_holds: Option<bool>,
    /// Pipeline value does not beat the product optimum by more than `1e-6`.
    pub pipeline_within_product: Option<bool>,
    pub run: RunReport,
}

pub const COMPARE_TOL: f64 = 1e-6;

pub struct OracleOptions {
    pub restarts: usize,
    pub dense_cap: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { restarts: 8, dense_cap: ORACLE_DENSE_CAP }
    }
}

pub fn compare(
    inst: &LocalHamiltonianInstance,
    config: &PipelineConfig,
    oracle: &OracleOptions,
) -> Result<CompareReport> {
    let which = match config.direction {
        Direction::Maximize => Extreme::Max,
        Direction::Minimize => Extreme::Min,
    };
    let (lambda, vector) = oracle_extreme_eig(inst, which, oracle.dense_cap)?;
    let product = oracle_product(inst, config.direction, oracle.restarts, config.seed)?;
    let run = approximate(inst, config)?;
    let ratio = |num: Option<f64>, den: f64| num.filter(|_| den.abs() > 0.0).map(|v| v / den);
    let maximize = config.direction == Direction::Maximize;
    let k = inst.max_arity().max(1) as i32;
    let bound = lambda / (inst.d() as f64).powi(k - 1);
    let rsd = if maximize { Some(best_rsd_branch(inst, &vector, config.direction)?.1) } else { None };
    let pipeline_within = run.rounded_value.map(|v| match config.direction {
        Direction::Maximize => v <= product.value + COMPARE_TOL,
        Direction::Minimize => v >= product.value - COMPARE_TOL,
    });
    Ok(CompareReport {
        schema_version: SCHEMA_VERSION,
        direction: config.direction,
        pipeline_value: run.rounded_value,
        product_optimum: product.value,
        extreme_eigenvalue: lambda,
        ratio_to_product: ratio(run.rounded_value, product.value),
        ratio_to_extreme: ratio(run.rounded_value, lambda),
        product_ratio_bound: maximize.then_some(bound),
        product_ratio_holds: maximize.then_some(product.value >= bound - COMPARE_TOL),
        rsd_witness_value: rsd,
        rsd_witness_holds: rsd.map(|v| v >= bound - 1e-8),
        pipeline_within_product: pipeline_within,
        run,
    })
}

/// Block matrices of a pure product assignment, for reporting.
pub fn assignment_vectors(assign: &ProductAssignment) -> Vec<CVector> {
    assign.blocks().iter().map(|b: &DensityOp| b.op().eigh().vector(b.dim() - 1)).collect()
}
