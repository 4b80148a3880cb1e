//! Basis coordinates of an instance, degree-b inner products, the δ-net over
//! single-site operators, sampling parameters and the recursive estimator.
//!
//! Ordered tuples list sites from the outermost summation level inwards:
//! position 0 holds `i_m` (level m) and position `m-1` holds `i_1`.

use std::collections::HashMap;

use itertools::Itertools;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::LocalHamiltonianInstance;
use crate::operator::{CMatrix, DensityOp, HermBasis, HermitianOp, C64};
use crate::random::{random_density, random_pure_density, rng_from_seed};

/// Coordinates `r[J] = Tr(H_T σ_J) / 2^|T|` of one term, `J` big-endian over the sorted support.
#[derive(Clone, Debug)]
pub struct TermCoords {
    pub sites: Vec<usize>,
    pub coeffs: Vec<f64>,
}

/// One ordered site tuple with its share of the coordinates, indexed by labels in tuple order.
#[derive(Clone, Debug)]
struct OrderedTuple {
    sites: Vec<usize>,
    coeffs: Vec<f64>,
}

/// All terms of one arity `m`, expanded over the `m!` orderings of each support.
/// Each ordering carries `1/m!` of the coordinates, so the sum over ordered
/// tuples reproduces the instance.
#[derive(Clone, Debug)]
pub struct DegreeGroup {
    degree: usize,
    tuples: Vec<OrderedTuple>,
    prefix: HashMap<Vec<usize>, Vec<usize>>,
}

impl DegreeGroup {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_tuples(&self) -> usize {
        self.tuples.len()
    }

    /// Indices of tuples whose leading sites equal `prefix`.
    fn matching(&self, prefix: &[usize]) -> &[usize] {
        self.prefix.get(prefix).map_or(&[], Vec::as_slice)
    }

    /// Number of distinct sites that can extend `prefix` by one position.
    fn fan_out(&self, prefix: &[usize]) -> usize {
        self.matching(prefix).iter().map(|&t| self.tuples[t].sites[prefix.len()]).unique().count()
    }

    /// True when some tuple starts with `prefix`.
    pub fn has_prefix(&self, prefix: &[usize]) -> bool {
        self.prefix.contains_key(prefix)
    }
}

/// Coordinate decomposition of a whole instance.
#[derive(Clone, Debug)]
pub struct CoordinateTensor {
    n: usize,
    d: usize,
    basis: HermBasis,
    terms: Vec<TermCoords>,
    groups: Vec<DegreeGroup>,
}

fn decode(mut idx: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0usize; len];
    for p in (0..len).rev() {
        out[p] = idx % base;
        idx /= base;
    }
    out
}

fn encode(digits: &[usize], base: usize) -> usize {
    digits.iter().fold(0, |acc, &v| acc * base + v)
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|v| v as f64).product()
}

/// Decomposes every term in the orthogonal Hermitian basis.
pub fn decompose(inst: &LocalHamiltonianInstance) -> Result<CoordinateTensor> {
    let d = inst.d();
    let basis = HermBasis::build(d)?;
    let d2 = d * d;
    let mut terms = Vec::with_capacity(inst.terms().len());
    for t in inst.terms() {
        let m = t.arity();
        let h = t.matrix().matrix();
        let dim = h.nrows();
        let digits: Vec<Vec<usize>> = (0..dim).map(|x| decode(x, d, m)).collect();
        let norm = 2f64.powi(m as i32);
        let coeffs = (0..d2.pow(m as u32))
            .map(|label| {
                let labels = decode(label, d2, m);
                let mut acc = C64::new(0.0, 0.0);
                for x in 0..dim {
                    for y in 0..dim {
                        let hxy = h[(x, y)];
                        if hxy.re == 0.0 && hxy.im == 0.0 {
                            continue;
                        }
                        let mut s = hxy;
                        for q in 0..m {
                            s *= basis.element(labels[q]).get(digits[y][q], digits[x][q]);
                            if s.re == 0.0 && s.im == 0.0 {
                                break;
                            }
                        }
                        acc += s;
                    }
                }
                acc.re / norm
            })
            .collect();
        terms.push(TermCoords { sites: t.sites().to_vec(), coeffs });
    }
    let groups = build_groups(&terms, d2);
    Ok(CoordinateTensor { n: inst.n(), d, basis, terms, groups })
}

fn build_groups(terms: &[TermCoords], d2: usize) -> Vec<DegreeGroup> {
    let max_m = terms.iter().map(|t| t.sites.len()).max().unwrap_or(0);
    let mut groups = Vec::new();
    for m in 1..=max_m {
        let mut tuples = Vec::new();
        let share = 1.0 / factorial(m);
        for t in terms.iter().filter(|t| t.sites.len() == m) {
            for order in (0..m).permutations(m) {
                let sites: Vec<usize> = order.iter().map(|&p| t.sites[p]).collect();
                let coeffs = (0..t.coeffs.len())
                    .map(|label| {
                        let l = decode(label, d2, m);
                        let mut sorted = vec![0usize; m];
                        for (pos, &p) in order.iter().enumerate() {
                            sorted[p] = l[pos];
                        }
                        t.coeffs[encode(&sorted, d2)] * share
                    })
                    .collect();
                tuples.push(OrderedTuple { sites, coeffs });
            }
        }
        if tuples.is_empty() {
            continue;
        }
        let mut prefix: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
        for (idx, tup) in tuples.iter().enumerate() {
            for len in 0..=m {
                prefix.entry(tup.sites[..len].to_vec()).or_default().push(idx);
            }
        }
        groups.push(DegreeGroup { degree: m, tuples, prefix });
    }
    groups
}

/// `x[i][j] = Tr(σ_j ρ_i)` for every block.
pub fn expectations(basis: &HermBasis, blocks: &[&HermitianOp]) -> Vec<Vec<f64>> {
    blocks.iter().map(|b| basis.expectations(b)).collect()
}

impl CoordinateTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn basis(&self) -> &HermBasis {
        &self.basis
    }

    pub fn terms(&self) -> &[TermCoords] {
        &self.terms
    }

    pub fn groups(&self) -> &[DegreeGroup] {
        &self.groups
    }

    pub fn group(&self, degree: usize) -> Option<&DegreeGroup> {
        self.groups.iter().find(|g| g.degree == degree)
    }

    /// Highest arity present.
    pub fn max_degree(&self) -> usize {
        self.groups.iter().map(|g| g.degree).max().unwrap_or(0)
    }

    /// `Σ_J r[J] σ_J` for term `t`.
    pub fn reconstruct_term(&self, t: usize) -> CMatrix {
        let tc = &self.terms[t];
        let m = tc.sites.len();
        let d2 = self.d * self.d;
        let dim = self.d.pow(m as u32);
        let mut out = CMatrix::zeros(dim, dim);
        for (label, &r) in tc.coeffs.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let l = decode(label, d2, m);
            let mut op = self.basis.element(l[0]).matrix().clone();
            for &j in &l[1..] {
                op = op.kronecker(self.basis.element(j).matrix());
            }
            out += op * C64::new(r, 0.0);
        }
        out
    }

    /// `t_{a,b}` evaluated exactly.
    pub fn eval_exact(&self, form: &DegreeForm, x: &[Vec<f64>]) -> f64 {
        let Some(group) = self.group(form.degree) else {
            return 0.0;
        };
        let m = form.degree;
        let b = form.level;
        let d2 = self.d * self.d;
        let inner = d2.pow(b as u32);
        let start = encode(&form.outer_labels, d2) * inner;
        let mut total = 0.0;
        for &ti in group.matching(&form.outer_sites) {
            let tup = &group.tuples[ti];
            for s in 0..inner {
                let r = tup.coeffs[start + s];
                if r == 0.0 {
                    continue;
                }
                let labels = decode(s, d2, b);
                let mut prod = r;
                for (q, &l) in labels.iter().enumerate() {
                    prod *= x[tup.sites[m - b + q]][l];
                }
                total += prod;
            }
        }
        total
    }

    /// Full objective `Σ_T Tr(H_T ⊗ ρ)` from block expectations.
    pub fn objective_value(&self, x: &[Vec<f64>]) -> f64 {
        self.groups.iter().map(|g| self.eval_exact(&DegreeForm::full(g.degree), x)).sum()
    }

    /// Largest Frobenius norm of any `H_b` slice (for the norm bound on `t_{a,b}`).
    pub fn term_frobenius(&self, t: usize) -> f64 {
        let m = self.terms[t].sites.len();
        2f64.powf(m as f64 / 2.0) * self.terms[t].coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// A degree-`level` inner product summing over the innermost `depth` sites,
/// with outer sites and labels held fixed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DegreeForm {
    pub degree: usize,
    pub level: usize,
    pub depth: usize,
    /// Sites at positions `0..degree-depth`.
    pub outer_sites: Vec<usize>,
    /// Labels at positions `0..degree-level`.
    pub outer_labels: Vec<usize>,
}

impl DegreeForm {
    /// `t_{m,m}`: the whole objective of the degree-`m` terms.
    pub fn full(degree: usize) -> Self {
        Self { degree, level: degree, depth: degree, outer_sites: Vec::new(), outer_labels: Vec::new() }
    }

    /// `t_b` with `b = degree - outer.len()` and matching fixed sites and labels.
    pub fn nested(degree: usize, outer_sites: Vec<usize>, outer_labels: Vec<usize>) -> Result<Self> {
        if outer_sites.len() != outer_labels.len() || outer_sites.len() >= degree {
            return Err(Error::InvalidArgument("nested form needs equal, shorter-than-degree prefixes".into()));
        }
        let b = degree - outer_sites.len();
        Self::general(degree, b, b, outer_sites, outer_labels)
    }

    /// `t_{a,b}` in full generality.
    pub fn general(
        degree: usize,
        level: usize,
        depth: usize,
        outer_sites: Vec<usize>,
        outer_labels: Vec<usize>,
    ) -> Result<Self> {
        if level == 0 || level > degree || depth > degree {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= b <= {degree} and 0 <= a <= {degree}, got a={depth}, b={level}"
            )));
        }
        if outer_sites.len() != degree - depth || outer_labels.len() != degree - level {
            return Err(Error::InvalidArgument("fixed prefixes do not match the form's depth and level".into()));
        }
        if outer_sites.iter().duplicates().next().is_some() {
            return Err(Error::InvalidArgument("fixed sites must be distinct".into()));
        }
        Ok(Self { degree, level, depth, outer_sites, outer_labels })
    }
}

/// Largest admissible net radius.
pub const MAX_DELTA: f64 = 2.0;

/// Finite set of Hermitian matrices with entries bounded by one, covering the
/// density matrices in Frobenius distance.
#[derive(Clone, Debug)]
pub struct DeltaNet {
    d: usize,
    delta: f64,
    diag: Vec<f64>,
    axis: Vec<f64>,
    /// Present for practical nets: an explicit subset of the grid.
    points: Option<Vec<HermitianOp>>,
}

fn linspace(count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    (0..count).map(|i| -1.0 + 2.0 * i as f64 / (count - 1) as f64).collect()
}

fn nearest_in(grid: &[f64], v: f64) -> usize {
    let step = grid.len().saturating_sub(1).max(1) as f64 / 2.0;
    let idx = ((v.clamp(-1.0, 1.0) + 1.0) * step).round() as usize;
    idx.min(grid.len() - 1)
}

impl DeltaNet {
    /// Full grid: `ceil(2d/δ)+1` diagonal values in `[-1,1]` and a square lattice of
    /// spacing at most `δ/(d√2)` on `[-1,1]²` for each off-diagonal entry.
    pub fn grid(d: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= MAX_DELTA) {
            return Err(Error::InvalidArgument(format!("net radius must lie in (0, {MAX_DELTA}], got {delta}")));
        }
        if d < 2 {
            return Err(Error::InvalidDimension(format!("local dimension must be at least 2, got {d}")));
        }
        let diag_count = (2.0 * d as f64 / delta).ceil() as usize + 1;
        let axis_count = (2.0 * 2f64.sqrt() * d as f64 / delta).ceil() as usize + 1;
        Ok(Self { d, delta, diag: linspace(diag_count), axis: linspace(axis_count), points: None })
    }

    /// Greedy subset of the grid covering a fixed seeded sample of density
    /// matrices within `0.9·δ`. Covering is empirical, not guaranteed.
    pub fn thinned(d: usize, delta: f64, seed: u64, samples: usize) -> Result<Self> {
        let grid = Self::grid(d, delta)?;
        let mut rng = rng_from_seed(seed);
        let mut targets: Vec<HermitianOp> = Vec::with_capacity(samples + d + 1);
        for i in 0..d {
            targets.push(DensityOp::basis_state(d, i).into_op());
        }
        targets.push(DensityOp::maximally_mixed(d).into_op());
        for s in 0..samples {
            let rho = if s % 2 == 0 { random_pure_density(d, &mut rng) } else { random_density(d, &mut rng) };
            targets.push(rho.into_op());
        }
        let mut candidates: Vec<HermitianOp> = Vec::new();
        for t in &targets {
            let (p, _) = grid.nearest(t);
            if !candidates.iter().any(|c| c == &p) {
                candidates.push(p);
            }
        }
        let radius = 0.9 * delta;
        let covers: Vec<Vec<usize>> = candidates
            .iter()
            .map(|c| {
                targets
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| c.sub(t).frobenius_norm() <= radius)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        let mut covered = vec![false; targets.len()];
        let mut remaining = targets.len();
        let mut chosen = Vec::new();
        while remaining > 0 {
            let (best, gain) = covers
                .iter()
                .enumerate()
                .map(|(c, list)| (c, list.iter().filter(|&&i| !covered[i]).count()))
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .expect("candidates cover their own targets");
            if gain == 0 {
                break;
            }
            for &i in &covers[best] {
                if !covered[i] {
                    covered[i] = true;
                    remaining -= 1;
                }
            }
            chosen.push(candidates[best].clone());
        }
        Ok(Self { points: Some(chosen), ..grid })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn diag_points(&self) -> usize {
        self.diag.len()
    }

    /// Points in the square lattice for one off-diagonal entry.
    pub fn offdiag_points(&self) -> usize {
        self.axis.len() * self.axis.len()
    }

    pub fn is_thinned(&self) -> bool {
        self.points.is_some()
    }

    /// `log10 |G|`; for the full grid `|G| = offdiag^{d(d-1)/2} · diag^d`.
    pub fn log10_size(&self) -> f64 {
        match &self.points {
            Some(p) => (p.len() as f64).log10(),
            None => {
                let pairs = (self.d * (self.d - 1) / 2) as f64;
                pairs * (self.offdiag_points() as f64).log10() + self.d as f64 * (self.diag.len() as f64).log10()
            }
        }
    }

    /// `|G|` when it fits in a `u128`.
    pub fn size(&self) -> Option<u128> {
        match &self.points {
            Some(p) => Some(p.len() as u128),
            None => {
                let pairs = (self.d * (self.d - 1) / 2) as u32;
                (self.offdiag_points() as u128)
                    .checked_pow(pairs)?
                    .checked_mul((self.diag.len() as u128).checked_pow(self.d as u32)?)
            }
        }
    }

    /// Net element number `idx` (diagonal digits first, then off-diagonal pairs in row order).
    pub fn element(&self, idx: u128) -> HermitianOp {
        if let Some(p) = &self.points {
            return p[idx as usize].clone();
        }
        let d = self.d;
        let mut rem = idx;
        let mut m = CMatrix::zeros(d, d);
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|p| (p + 1..d).map(move |q| (p, q))).collect();
        let axis = self.axis.len() as u128;
        for &(p, q) in pairs.iter().rev() {
            let im = (rem % axis) as usize;
            rem /= axis;
            let re = (rem % axis) as usize;
            rem /= axis;
            m[(p, q)] = C64::new(self.axis[re], self.axis[im]);
            m[(q, p)] = C64::new(self.axis[re], -self.axis[im]);
        }
        let dc = self.diag.len() as u128;
        for i in (0..d).rev() {
            m[(i, i)] = C64::new(self.diag[(rem % dc) as usize], 0.0);
            rem /= dc;
        }
        HermitianOp::from_matrix(m).expect("square")
    }

    /// Closest net element in Frobenius norm and its distance.
    pub fn nearest(&self, rho: &HermitianOp) -> (HermitianOp, f64) {
        if let Some(points) = &self.points {
            return points
                .iter()
                .map(|p| (p.clone(), p.sub(rho).frobenius_norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty net");
        }
        let d = self.d;
        let mut m = CMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = C64::new(self.diag[nearest_in(&self.diag, rho.get(i, i).re)], 0.0);
            for j in i + 1..d {
                let z = rho.get(i, j);
                let v = C64::new(self.axis[nearest_in(&self.axis, z.re)], self.axis[nearest_in(&self.axis, z.im)]);
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        let p = HermitianOp::from_matrix(m).expect("square");
        let dist = p.sub(rho).frobenius_norm();
        (p, dist)
    }
}

pub fn build_delta_net(d: usize, delta: f64) -> Result<DeltaNet> {
    DeltaNet::grid(d, delta)
}

pub fn nearest_net_point(net: &DeltaNet, rho: &DensityOp) -> (HermitianOp, f64) {
    net.nearest(rho.op())
}

/// Error ladder `ε_b = c (Δ^b - 1)/(Δ - 1)` with `Δ = √2 d (1 + δ)`.
#[derive(Clone, Debug, Serialize)]
pub struct SamplerParams {
    pub d: usize,
    pub k: usize,
    pub delta: f64,
    /// `c = d^{k/2}(sqrt(f/g) + δ)` in theory mode.
    pub c: f64,
    pub f: Option<f64>,
    pub g: Option<f64>,
    /// `ε_1..ε_k`.
    pub ladder: Vec<f64>,
    pub cutoff_fraction: f64,
}

impl SamplerParams {
    pub fn big_delta(d: usize, delta: f64) -> f64 {
        2f64.sqrt() * d as f64 * (1.0 + delta)
    }

    fn ladder_from(c: f64, big: f64, k: usize) -> Vec<f64> {
        (1..=k).map(|b| c * (big.powi(b as i32) - 1.0) / (big - 1.0)).collect()
    }

    /// Ladder from the sampling constants `f`, `g` and net radius `δ`.
    pub fn theory(d: usize, k: usize, f: f64, g: f64, delta: f64) -> Self {
        let c = (d as f64).powf(k as f64 / 2.0) * ((f / g).sqrt() + delta);
        let big = Self::big_delta(d, delta);
        let ladder = Self::ladder_from(c, big, k);
        let cutoff_fraction = ladder[k - 1] / 10.0;
        Self { d, k, delta, c, f: Some(f), g: Some(g), ladder, cutoff_fraction }
    }

    /// Ladder anchored so that `ε_k = eps_prime`.
    pub fn practical(d: usize, k: usize, eps_prime: f64, delta: f64) -> Self {
        let big = Self::big_delta(d, delta);
        let c = eps_prime * (big - 1.0) / (big.powi(k as i32) - 1.0);
        let ladder = Self::ladder_from(c, big, k);
        Self { d, k, delta, c, f: None, g: None, ladder, cutoff_fraction: eps_prime / 10.0 }
    }

    pub fn with_cutoff(mut self, fraction: f64) -> Self {
        self.cutoff_fraction = fraction;
        self
    }

    pub fn delta_factor(&self) -> f64 {
        Self::big_delta(self.d, self.delta)
    }

    /// `ε_b`, 1-based.
    pub fn epsilon(&self, b: usize) -> f64 {
        self.ladder[b - 1]
    }

    /// `ε - c Δ^{b-1}`: the error handed to the level below.
    pub fn step_down(&self, eps: f64, b: usize) -> f64 {
        eps - self.c * self.delta_factor().powi(b as i32 - 1)
    }

    /// Coefficient of `n^k` in the bound on `|OPT₂ − OPT_P|` for degree `k`:
    /// `d(d+√2) Σ_{m=1}^{k-1} (√2 d)^{k-1-m} ε_m`.
    pub fn sandwich_coefficient(&self, k: usize) -> f64 {
        let d = self.d as f64;
        let r = 2f64.sqrt() * d;
        d * (d + 2f64.sqrt()) * (1..k).map(|m| r.powi((k - 1 - m) as i32) * self.epsilon(m)).sum::<f64>()
    }
}

/// Sample multiset `S` with the net point standing in for each sampled site.
#[derive(Clone, Debug)]
pub struct SampleSet {
    sites: Vec<usize>,
    exhaustive: bool,
    points: Vec<Option<HermitianOp>>,
}

impl SampleSet {
    /// `size` sites drawn uniformly with replacement.
    pub fn random<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Self {
        let sites = (0..size).map(|_| rng.random_range(0..n)).collect();
        Self { sites, exhaustive: false, points: vec![None; n] }
    }

    /// Every site exactly once; the estimator then reproduces exact sums.
    pub fn exhaustive(n: usize) -> Self {
        Self { sites: (0..n).collect(), exhaustive: true, points: vec![None; n] }
    }

    pub fn from_sites(n: usize, sites: Vec<usize>) -> Result<Self> {
        if let Some(&s) = sites.iter().find(|&&s| s >= n) {
            return Err(Error::InvalidArgument(format!("sample site {s} out of range")));
        }
        let mut sorted = sites.clone();
        sorted.sort_unstable();
        let exhaustive = sorted == (0..n).collect::<Vec<_>>();
        Ok(Self { sites, exhaustive, points: vec![None; n] })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    /// Sorted distinct sampled sites.
    pub fn distinct_sites(&self) -> Vec<usize> {
        self.sites.iter().copied().sorted().dedup().collect()
    }

    pub fn set_point(&mut self, site: usize, point: HermitianOp) {
        self.points[site] = Some(point);
    }

    pub fn point(&self, site: usize) -> Option<&HermitianOp> {
        self.points[site].as_ref()
    }

    /// Gives every sampled site the block it has in `blocks` (an honest, on-grid sample).
    pub fn with_blocks(mut self, blocks: &[&HermitianOp]) -> Self {
        for s in self.distinct_sites() {
            self.points[s] = Some(blocks[s].clone());
        }
        self
    }
}

/// Recursive sampled estimator of degree-b inner products, memoized per sub-form.
pub struct Estimator<'a> {
    tensor: &'a CoordinateTensor,
    sample: &'a SampleSet,
    cutoff_fraction: f64,
    xs: Vec<Option<Vec<f64>>>,
    memo: HashMap<(usize, Vec<usize>, Vec<usize>), f64>,
}

impl<'a> Estimator<'a> {
    pub fn new(tensor: &'a CoordinateTensor, sample: &'a SampleSet, params: &SamplerParams) -> Result<Self> {
        let mut xs = vec![None; tensor.n];
        for s in sample.distinct_sites() {
            let p =
                sample.point(s).ok_or_else(|| Error::InvalidArgument(format!("sampled site {s} has no net point")))?;
            xs[s] = Some(tensor.basis.expectations(p));
        }
        Ok(Self { tensor, sample, cutoff_fraction: params.cutoff_fraction, xs, memo: HashMap::new() })
    }

    /// Estimate of the nested form with fixed `sites` and `labels` (level `degree - sites.len()`).
    pub fn estimate(&mut self, degree: usize, sites: &[usize], labels: &[usize]) -> f64 {
        let key = (degree, sites.to_vec(), labels.to_vec());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let value = self.compute(degree, sites, labels);
        self.memo.insert(key, value);
        value
    }

    fn compute(&mut self, degree: usize, sites: &[usize], labels: &[usize]) -> f64 {
        let tensor = self.tensor;
        let Some(group) = tensor.group(degree) else {
            return 0.0;
        };
        if !group.has_prefix(sites) || self.sample.sites.is_empty() {
            return 0.0;
        }
        let n = tensor.n as f64;
        if !self.sample.exhaustive && (group.fan_out(sites) as f64) <= self.cutoff_fraction * n {
            return 0.0;
        }
        let level = degree - sites.len();
        let d2 = tensor.d * tensor.d;
        let sample = self.sample;
        let mut total = 0.0;
        let mut child_sites = sites.to_vec();
        child_sites.push(0);
        let mut child_labels = labels.to_vec();
        child_labels.push(0);
        for &i in &sample.sites {
            *child_sites.last_mut().unwrap() = i;
            if !group.has_prefix(&child_sites) {
                continue;
            }
            let x = self.xs[i].clone().expect("sampled site has expectations");
            for (j, &xij) in x.iter().enumerate().take(d2) {
                if xij == 0.0 {
                    continue;
                }
                *child_labels.last_mut().unwrap() = j;
                let inner = if level == 1 {
                    coefficient(group, &child_sites, &child_labels, d2)
                } else {
                    self.estimate(degree, &child_sites, &child_labels)
                };
                total += xij * inner;
            }
        }
        total * n / sample.sites.len() as f64
    }
}

/// Coordinate of the single tuple `sites` (a full-length tuple) at labels `labels`.
fn coefficient(group: &DegreeGroup, sites: &[usize], labels: &[usize], d2: usize) -> f64 {
    let idx = encode(labels, d2);
    group.matching(sites).iter().map(|&t| group.tuples[t].coeffs[idx]).sum()
}

/// Exact linear functional `t_1` at the given fixed prefix: `c[i][j]` such that
/// `t_1 = Σ_{i,j} c[i][j] Tr(σ_j ρ_i)`.
pub fn level_one_coefficients(
    tensor: &CoordinateTensor,
    degree: usize,
    sites: &[usize],
    labels: &[usize],
) -> Vec<(usize, usize, f64)> {
    let Some(group) = tensor.group(degree) else {
        return Vec::new();
    };
    let d2 = tensor.d * tensor.d;
    let mut out = Vec::new();
    let mut full_labels = labels.to_vec();
    full_labels.push(0);
    let children: Vec<usize> =
        group.matching(sites).iter().map(|&t| group.tuples[t].sites[sites.len()]).unique().collect();
    let mut child = sites.to_vec();
    child.push(0);
    for i in children {
        *child.last_mut().unwrap() = i;
        for j in 0..d2 {
            *full_labels.last_mut().unwrap() = j;
            let c = coefficient(group, &child, &full_labels, d2);
            if c != 0.0 {
                out.push((i, j, c));
            }
        }
    }
    out
}

pub fn eval_estimate(
    tensor: &CoordinateTensor,
    form: &DegreeForm,
    sample: &SampleSet,
    params: &SamplerParams,
) -> Result<f64> {
    if form.depth != form.level {
        return Err(Error::InvalidArgument("the estimator handles t_b = t_{b,b} forms only".into()));
    }
    let mut est = Estimator::new(tensor, sample, params)?;
    Ok(est.estimate(form.degree, &form.outer_sites, &form.outer_labels))
}

/// Output of [`compute_params`].
#[derive(Clone, Debug, Serialize)]
pub struct TheoryParams {
    pub eps: f64,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub eps_sdp: f64,
    pub eps_prime: f64,
    pub f: f64,
    pub g: f64,
    pub delta: f64,
    pub sample_size: u64,
    pub ladder: Vec<f64>,
    /// `h(ε′) + ε_sdp − ε`.
    pub residual: f64,
    pub net_diag_points: usize,
    pub net_offdiag_points: usize,
    pub log10_net_size: f64,
    /// `log10(|G|^{|S|})`.
    pub log10_iterations: f64,
}

impl TheoryParams {
    pub fn sampler(&self) -> SamplerParams {
        SamplerParams::theory(self.d, self.k, self.f, self.g, self.delta)
    }
}

fn bisect(mut lo: f64, mut hi: f64, mut fun: impl FnMut(f64) -> f64) -> f64 {
    // fun(lo) < 0 <= fun(hi)
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fun(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Net radius `δ` from the even split `d^{k/2} δ (Δ^k−1)/(Δ−1) = ε′/2`.
fn delta_for(eps_prime: f64, d: usize, k: usize) -> f64 {
    let dk = (d as f64).powf(k as f64 / 2.0);
    let lhs = |delta: f64| {
        let big = SamplerParams::big_delta(d, delta);
        dk * delta * (big.powi(k as i32) - 1.0) / (big - 1.0) - eps_prime / 2.0
    };
    let mut hi = 1.0;
    while lhs(hi) < 0.0 {
        hi *= 2.0;
    }
    bisect(0.0, hi, lhs)
}

/// `h(ε′)`: the sandwich coefficient for the ladder anchored at `ε_k = ε′`.
fn h_of(eps_prime: f64, d: usize, k: usize) -> f64 {
    if k == 1 {
        return 0.0;
    }
    let delta = delta_for(eps_prime, d, k);
    SamplerParams::practical(d, k, eps_prime, delta).sandwich_coefficient(k)
}

/// Parameter arithmetic for theory mode.
pub fn compute_params(eps: f64, n: usize, d: usize, k: usize) -> Result<TheoryParams> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
    }
    if n < 2 || d < 2 || k == 0 {
        return Err(Error::InvalidArgument("need n >= 2, d >= 2 and k >= 1".into()));
    }
    let eps_sdp = eps / 10.0;
    let ln_n = (n as f64).ln();
    // 1 - d^{2k} n^{k-f} > 1/2  <=>  f > k + ln(2 d^{2k}) / ln n; nudged to make it strict
    let f = (k as f64 + (2.0 * (d as f64).powi(2 * k as i32)).ln() / ln_n) * (1.0 + 1e-12);
    let target = eps - eps_sdp;
    let eps_prime = if k == 1 {
        target
    } else {
        let mut hi = target;
        while h_of(hi, d, k) < target {
            hi *= 2.0;
        }
        bisect(0.0, hi, |e| h_of(e, d, k) - target)
    };
    let delta = delta_for(eps_prime, d, k);
    if delta > 1.0 {
        return Err(Error::InfeasibleParams(format!(
            "ε = {eps} needs net radius δ = {delta:.4} > 1; use practical mode with explicit parameters"
        )));
    }
    let g = f / (delta * delta);
    let sample_size = (g * (n as f64).log2()).ceil() as u64;
    let sampler = SamplerParams::theory(d, k, f, g, delta);
    let residual = h_of(eps_prime, d, k) + eps_sdp - eps;
    let net = DeltaNet::grid(d, delta)?;
    let log10_net_size = net.log10_size();
    Ok(TheoryParams {
        eps,
        n,
        d,
        k,
        eps_sdp,
        eps_prime,
        f,
        g,
        delta,
        sample_size,
        ladder: sampler.ladder,
        residual,
        net_diag_points: net.diag_points(),
        net_offdiag_points: net.offdiag_points(),
        log10_net_size,
        log10_iterations: log10_net_size * sample_size as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_random_dense, LocalTerm, ProductAssignment};
    use crate::random::rng_from_seed;

    #[test]
    fn zz_decomposition() {
        let diag = [1.0, 0.0, 0.0, 1.0]; // (I + Z⊗Z)/2
        let t = LocalTerm::new(vec![0, 1], HermitianOp::from_real_diag(&diag), 2).unwrap();
        let inst = LocalHamiltonianInstance::new(2, 2, 2, vec![t]).unwrap();
        let tensor = decompose(&inst).unwrap();
        let r = &tensor.terms()[0].coeffs;
        // labels: X=0, Y=1, Z=2, I=3; index = j0*4 + j1
        assert!((r[2 * 4 + 2] - 0.5).abs() < 1e-15);
        assert!((r[3 * 4 + 3] - 0.5).abs() < 1e-15);
        let nonzero = r.iter().filter(|v| v.abs() > 1e-15).count();
        assert_eq!(nonzero, 2);
        let back = tensor.reconstruct_term(0);
        assert!((back - inst.terms()[0].matrix().matrix()).norm() < 1e-12);
    }

    #[test]
    fn full_form_matches_product_energy() {
        let inst = gen_random_dense(4, 2, 2, 5).unwrap();
        let tensor = decompose(&inst).unwrap();
        let mut rng = rng_from_seed(1);
        let assign = ProductAssignment::new((0..4).map(|_| random_density(2, &mut rng)).collect()).unwrap();
        let ops: Vec<&HermitianOp> = assign.blocks().iter().map(|b| b.op()).collect();
        let x = expectations(tensor.basis(), &ops);
        let exact = tensor.eval_exact(&DegreeForm::full(2), &x);
        assert!((exact - inst.product_energy(&assign).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_estimate_is_exact() {
        let inst = gen_random_dense(4, 2, 2, 9).unwrap();
        let tensor = decompose(&inst).unwrap();
        let mut rng = rng_from_seed(4);
        let blocks: Vec<DensityOp> = (0..4).map(|_| random_density(2, &mut rng)).collect();
        let ops: Vec<&HermitianOp> = blocks.iter().map(|b| b.op()).collect();
        let x = expectations(tensor.basis(), &ops);
        let sample = SampleSet::exhaustive(4).with_blocks(&ops);
        let params = SamplerParams::practical(2, 2, 0.5, 0.5);
        let full = eval_estimate(&tensor, &DegreeForm::full(2), &sample, &params).unwrap();
        assert!((full - tensor.eval_exact(&DegreeForm::full(2), &x)).abs() < 1e-12);
        let form = DegreeForm::nested(2, vec![1], vec![2]).unwrap();
        let est = eval_estimate(&tensor, &form, &sample, &params).unwrap();
        assert!((est - tensor.eval_exact(&form, &x)).abs() < 1e-12);
    }

    #[test]
    fn grid_net_sizes_and_covering() {
        let net = build_delta_net(2, 0.5).unwrap();
        assert_eq!(net.diag_points(), 9);
        let axis = (2.0 * 2f64.sqrt() * 2.0 / 0.5f64).ceil() as usize + 1;
        assert_eq!(net.offdiag_points(), axis * axis);
        assert_eq!(net.size().unwrap(), (axis * axis) as u128 * 81);
        let mut rng = rng_from_seed(2);
        for _ in 0..200 {
            let rho = random_density(2, &mut rng);
            assert!(nearest_net_point(&net, &rho).1 <= 0.5);
        }
        assert!(build_delta_net(2, 0.0).is_err());
        assert!(build_delta_net(2, 2.5).is_err());
    }

    #[test]
    fn element_and_nearest_agree() {
        let net = build_delta_net(2, 1.0).unwrap();
        for idx in [0u128, 7, 123, net.size().unwrap() - 1] {
            let p = net.element(idx);
            let (q, dist) = net.nearest(&p);
            assert_eq!(dist, 0.0);
            assert_eq!(p, q);
        }
    }

    #[test]
    fn ladder_recursion() {
        let p = SamplerParams::theory(2, 3, 4.0, 100.0, 0.1);
        let big = p.delta_factor();
        for b in 2..=3 {
            assert!((p.epsilon(b) - (p.c + p.epsilon(b - 1) * big)).abs() < 1e-12);
            assert!((p.step_down(p.epsilon(b), b) - p.epsilon(b - 1)).abs() < 1e-12);
        }
        let q = SamplerParams::practical(2, 2, 0.5, 0.5);
        assert!((q.epsilon(2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn params_identities() {
        let p = compute_params(0.5, 16, 2, 2).unwrap();
        assert!((p.eps_sdp - 0.05).abs() < 1e-15);
        assert!(p.residual.abs() < 1e-10);
        assert!((p.sampler().epsilon(2) - p.eps_prime).abs() < 1e-10);
        assert!(p.log10_iterations > 1000.0);
    }
}
