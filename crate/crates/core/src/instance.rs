//! MAX-k-local Hamiltonian instances, energies and instance generators.

use std::collections::BTreeMap;
use std::fmt;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    checked_pow, embed_add_into, expectation_local, kron, max_dim, permute_factors, CMatrix, CVector, DensityOp,
    HermitianOp, PureState, C64, ZERO,
};
use crate::random::{haar_unitary, rng_from_seed};
use crate::SCHEMA_VERSION;

/// Tolerance for `0 ⪯ H ⪯ I` on terms.
pub const TERM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Maximize,
    Minimize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }

    /// `+1` for maximize, `-1` for minimize.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Maximize => 1.0,
            Direction::Minimize => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Maximize => "max",
            Direction::Minimize => "min",
        })
    }
}

/// One local term `H_T` acting on the sites in `sites`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTerm {
    sites: Vec<usize>,
    matrix: HermitianOp,
}

impl LocalTerm {
    /// `sites` must be strictly increasing and `matrix` of dimension `d^|sites|`.
    pub fn new(sites: Vec<usize>, matrix: HermitianOp, d: usize) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidInstance("term with empty support".into()));
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInstance(format!("support {sites:?} is not strictly increasing")));
        }
        Self::raw(sites, matrix, d)
    }

    /// Accepts sites in any order, reordering the tensor factors so the support is sorted.
    pub fn from_unsorted(sites: &[usize], matrix: &CMatrix, d: usize) -> Result<Self> {
        let mut order: Vec<usize> = (0..sites.len()).collect();
        order.sort_by_key(|&p| sites[p]);
        let sorted: Vec<usize> = order.iter().map(|&p| sites[p]).collect();
        let dim = d.pow(sites.len() as u32);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Shape(format!(
                "term on {} sites needs dimension {dim}, got {}",
                sites.len(),
                matrix.nrows()
            )));
        }
        let permuted = permute_factors(matrix, d, &order);
        Self::new(sorted, HermitianOp::from_matrix(permuted)?, d)
    }

    /// Only checks that the matrix size matches the support length.
    fn raw(sites: Vec<usize>, matrix: HermitianOp, d: usize) -> Result<Self> {
        let want = checked_pow(d, sites.len(), usize::MAX >> 1)?;
        if matrix.dim() != want {
            return Err(Error::Shape(format!(
                "term on {} sites needs dimension {want}, got {}",
                sites.len(),
                matrix.dim()
            )));
        }
        Ok(Self { sites, matrix })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn matrix(&self) -> &HermitianOp {
        &self.matrix
    }

    pub fn arity(&self) -> usize {
        self.sites.len()
    }

    /// `Tr(H_T · ⊗_{s∈T} ρ_s)` by direct contraction.
    pub fn product_value(&self, blocks: &[DensityOp]) -> f64 {
        let mut p = blocks[self.sites[0]].op().matrix().clone();
        for &s in &self.sites[1..] {
            p = kron(&p, blocks[s].op().matrix());
        }
        let h = self.matrix.matrix();
        let dim = h.nrows();
        let mut acc = 0.0;
        for x in 0..dim {
            for y in 0..dim {
                acc += (h[(x, y)] * p[(y, x)]).re;
            }
        }
        acc
    }

    /// Operator `E` on the factor at support position `pos` with
    /// `Tr(E ρ) = Tr(H_T · (ρ at pos) ⊗ (other blocks))`.
    pub fn environment(&self, blocks: &[&CMatrix], pos: usize, d: usize) -> CMatrix {
        let m = self.sites.len();
        let h = self.matrix.matrix();
        let dim = h.nrows();
        let digits = |mut x: usize| {
            let mut out = vec![0usize; m];
            for q in (0..m).rev() {
                out[q] = x % d;
                x /= d;
            }
            out
        };
        let all: Vec<Vec<usize>> = (0..dim).map(digits).collect();
        let mut env = CMatrix::zeros(d, d);
        for x in 0..dim {
            for y in 0..dim {
                let hxy = h[(x, y)];
                if hxy == ZERO {
                    continue;
                }
                let mut w = hxy;
                for q in 0..m {
                    if q != pos {
                        w *= blocks[q][(all[y][q], all[x][q])];
                    }
                }
                env[(all[x][pos], all[y][pos])] += w;
            }
        }
        env
    }
}

/// Problems found by [`LocalHamiltonianInstance::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    SiteOutOfRange { term: usize, site: usize },
    UnsortedSupport { term: usize },
    SupportTooLarge { term: usize, arity: usize },
    DuplicateSupport { term: usize, first: usize },
    NotPsd { term: usize, lambda_min: f64 },
    NormExceeded { term: usize, lambda_max: f64 },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::SiteOutOfRange { term, site } => write!(f, "term {term}: site {site} out of range"),
            Diagnostic::UnsortedSupport { term } => write!(f, "term {term}: support not strictly increasing"),
            Diagnostic::SupportTooLarge { term, arity } => {
                write!(f, "term {term}: support of {arity} sites exceeds the locality")
            }
            Diagnostic::DuplicateSupport { term, first } => {
                write!(f, "term {term}: same support as term {first}")
            }
            Diagnostic::NotPsd { term, lambda_min } => {
                write!(f, "term {term}: not positive semidefinite (lambda_min = {lambda_min:e})")
            }
            Diagnostic::NormExceeded { term, lambda_max } => {
                write!(f, "term {term}: operator norm above 1 (lambda_max = {lambda_max})")
            }
        }
    }
}

/// `H = Σ_T H_T` on `n` sites of local dimension `d`, each term acting on at most `k` sites.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalHamiltonianInstance {
    n: usize,
    d: usize,
    k: usize,
    terms: Vec<LocalTerm>,
}

impl LocalHamiltonianInstance {
    /// Builds an instance and rejects it unless [`validate`](Self::validate) is clean.
    pub fn new(n: usize, d: usize, k: usize, terms: Vec<LocalTerm>) -> Result<Self> {
        let inst = Self::unchecked(n, d, k, terms)?;
        let diags = inst.validate();
        if let Some(first) = diags.first() {
            return Err(Error::InvalidInstance(format!(
                "{first}{}",
                if diags.len() > 1 { format!(" (and {} more)", diags.len() - 1) } else { String::new() }
            )));
        }
        Ok(inst)
    }

    /// Builds an instance without the term-level checks, so that
    /// [`validate`](Self::validate) can report on it.
    pub fn unchecked(n: usize, d: usize, k: usize, terms: Vec<LocalTerm>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInstance("instance needs at least one site".into()));
        }
        if d < 2 {
            return Err(Error::InvalidDimension(format!("local dimension must be at least 2, got {d}")));
        }
        if k == 0 {
            return Err(Error::InvalidInstance("locality must be at least 1".into()));
        }
        Ok(Self { n, d, k, terms })
    }

    pub fn empty(n: usize, d: usize, k: usize) -> Result<Self> {
        Self::new(n, d, k, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut seen: BTreeMap<&[usize], usize> = BTreeMap::new();
        for (t, term) in self.terms.iter().enumerate() {
            for &s in &term.sites {
                if s >= self.n {
                    out.push(Diagnostic::SiteOutOfRange { term: t, site: s });
                }
            }
            if term.sites.windows(2).any(|w| w[0] >= w[1]) {
                out.push(Diagnostic::UnsortedSupport { term: t });
            }
            if term.sites.len() > self.k {
                out.push(Diagnostic::SupportTooLarge { term: t, arity: term.sites.len() });
            }
            if let Some(&first) = seen.get(term.sites.as_slice()) {
                out.push(Diagnostic::DuplicateSupport { term: t, first });
            } else {
                seen.insert(&term.sites, t);
            }
            let eig = term.matrix.eigh();
            let lmin = eig.values[0];
            let lmax = *eig.values.last().unwrap();
            if lmin < -TERM_TOL {
                out.push(Diagnostic::NotPsd { term: t, lambda_min: lmin });
            }
            if lmax > 1.0 + TERM_TOL {
                out.push(Diagnostic::NormExceeded { term: t, lambda_max: lmax });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Largest support size actually present.
    pub fn max_arity(&self) -> usize {
        self.terms.iter().map(LocalTerm::arity).max().unwrap_or(0)
    }

    fn check_assignment(&self, assign: &ProductAssignment) -> Result<()> {
        if assign.n() != self.n || assign.d() != self.d {
            return Err(Error::Shape(format!(
                "assignment has {} blocks of dimension {}, instance needs {} of dimension {}",
                assign.n(),
                assign.d(),
                self.n,
                self.d
            )));
        }
        Ok(())
    }

    /// `Tr(H ρ_1 ⊗ ... ⊗ ρ_n)`, contracted term by term.
    pub fn product_energy(&self, assign: &ProductAssignment) -> Result<f64> {
        self.check_assignment(assign)?;
        Ok(self.terms.iter().map(|t| t.product_value(&assign.blocks)).sum())
    }

    /// `<ψ|H|ψ>` using local applications of each term.
    pub fn pure_energy(&self, psi: &PureState) -> Result<f64> {
        if psi.num_sites() != self.n || psi.dims().iter().any(|&x| x != self.d) {
            return Err(Error::Shape(format!(
                "state dims {:?} do not match {} sites of dimension {}",
                psi.dims(),
                self.n,
                self.d
            )));
        }
        checked_pow(self.d, self.n, max_dim())?;
        Ok(self
            .terms
            .iter()
            .map(|t| expectation_local(t.matrix.matrix(), &t.sites, self.n, self.d, psi.amplitudes()))
            .sum())
    }

    /// `Tr(H · I/d^n)`.
    pub fn density_value(&self) -> f64 {
        self.terms.iter().map(|t| t.matrix.trace() / t.matrix.dim() as f64).sum()
    }

    /// The full `d^n × d^n` operator.
    pub fn full_operator(&self, cap: usize) -> Result<HermitianOp> {
        let dim = checked_pow(self.d, self.n, cap)?;
        let mut m = CMatrix::zeros(dim, dim);
        for t in &self.terms {
            embed_add_into(&mut m, t.matrix.matrix(), &t.sites, self.n, self.d);
        }
        HermitianOp::from_matrix(m)
    }

    pub fn all_terms_diagonal(&self) -> bool {
        self.terms.iter().all(|t| t.matrix.is_diagonal())
    }

    /// Diagonal of the full operator, valid as its spectrum when every term is diagonal.
    pub fn full_diagonal(&self, cap: usize) -> Result<Vec<f64>> {
        let dim = checked_pow(self.d, self.n, cap)?;
        let mut diag = vec![0.0; dim];
        for t in &self.terms {
            let strides: Vec<usize> = t.sites.iter().map(|&s| self.d.pow((self.n - 1 - s) as u32)).collect();
            for (x, slot) in diag.iter_mut().enumerate() {
                let local = strides.iter().fold(0, |acc, &st| acc * self.d + (x / st) % self.d);
                *slot += t.matrix.get(local, local).re;
            }
        }
        Ok(diag)
    }

    /// Operator `E_i` on site `site` such that the product energy, as a function of
    /// the block on `site` alone, is `const + Tr(E_i ρ_site)`.
    pub fn environment_operator(&self, blocks: &[&CMatrix], site: usize) -> HermitianOp {
        let mut env = CMatrix::zeros(self.d, self.d);
        for t in &self.terms {
            if let Some(pos) = t.sites.iter().position(|&s| s == site) {
                let local: Vec<&CMatrix> = t.sites.iter().map(|&s| blocks[s]).collect();
                env += t.environment(&local, pos, self.d);
            }
        }
        HermitianOp::from_matrix(env).expect("square")
    }

    /// Replaces every term by `I - H_T` (penalty form to reward form and back).
    pub fn complement(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| LocalTerm { sites: t.sites.clone(), matrix: HermitianOp::identity(t.matrix.dim()).sub(&t.matrix) })
            .collect();
        Self { n: self.n, d: self.d, k: self.k, terms }
    }

    /// Multiplies every term by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let terms =
            self.terms.iter().map(|t| LocalTerm { sites: t.sites.clone(), matrix: t.matrix.scale(s) }).collect();
        Self { n: self.n, d: self.d, k: self.k, terms }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = InstanceFile {
            schema_version: SCHEMA_VERSION,
            n: self.n,
            d: self.d,
            k: self.k,
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let m = t.matrix.matrix();
                    let dim = m.nrows();
                    TermFile {
                        sites: t.sites.clone(),
                        matrix: (0..dim).map(|i| (0..dim).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect(),
                    }
                })
                .collect(),
        };
        if file.terms.iter().flat_map(|t| t.matrix.iter().flatten().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("non-finite matrix entry".into()));
        }
        serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidInstance(e.to_string()))
    }

    /// Parses the instance JSON format. Term-level validity is not checked here;
    /// call [`validate`](Self::validate).
    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                location: "schema_version".into(),
                message: format!("unsupported schema version {}", file.schema_version),
            });
        }
        let mut terms = Vec::with_capacity(file.terms.len());
        for (t, tf) in file.terms.into_iter().enumerate() {
            let location = format!("terms[{t}]");
            let dim = tf.matrix.len();
            if tf.matrix.iter().any(|row| row.len() != dim) {
                return Err(Error::Parse { location, message: "matrix is not square".into() });
            }
            let mat = CMatrix::from_fn(dim, dim, |i, j| C64::new(tf.matrix[i][j][0], tf.matrix[i][j][1]));
            let asym = crate::operator::asymmetry(&mat);
            if asym > crate::operator::HERMITIAN_TOL {
                return Err(Error::Parse {
                    location,
                    message: format!("matrix is not Hermitian (asymmetry {asym:e})"),
                });
            }
            // symmetrizing an exactly Hermitian matrix leaves every entry unchanged
            let op = HermitianOp::from_matrix(mat)?;
            let term = LocalTerm::raw(tf.sites, op, file.d)
                .map_err(|e| Error::Parse { location: location.clone(), message: e.to_string() })?;
            terms.push(term);
        }
        Self::unchecked(file.n, file.d, file.k, terms)
            .map_err(|e| Error::Parse { location: "header".into(), message: e.to_string() })
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    #[serde(default = "default_schema_version")]
    schema_version: u32,
    n: usize,
    d: usize,
    k: usize,
    terms: Vec<TermFile>,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Serialize, Deserialize)]
struct TermFile {
    sites: Vec<usize>,
    matrix: Vec<Vec<[f64; 2]>>,
}

/// One density block per site.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductAssignment {
    blocks: Vec<DensityOp>,
}

impl ProductAssignment {
    pub fn new(blocks: Vec<DensityOp>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Shape("assignment needs at least one block".into()));
        };
        let d = first.dim();
        if blocks.iter().any(|b| b.dim() != d) {
            return Err(Error::Shape("assignment blocks have different dimensions".into()));
        }
        Ok(Self { blocks })
    }

    pub fn maximally_mixed(n: usize, d: usize) -> Self {
        Self { blocks: vec![DensityOp::maximally_mixed(d); n] }
    }

    /// Pure product assignment from local vectors (normalized here).
    pub fn from_vectors(vectors: &[CVector]) -> Result<Self> {
        Self::new(vectors.iter().map(DensityOp::pure).collect())
    }

    pub fn blocks(&self) -> &[DensityOp] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<DensityOp> {
        self.blocks
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn d(&self) -> usize {
        self.blocks[0].dim()
    }

    pub fn matrices(&self) -> Vec<&CMatrix> {
        self.blocks.iter().map(|b| b.op().matrix()).collect()
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        self.blocks.iter().all(|b| b.is_pure(tol))
    }

    /// `ρ_1 ⊗ ... ⊗ ρ_n` as a full operator.
    pub fn full_operator(&self, cap: usize) -> Result<HermitianOp> {
        checked_pow(self.d(), self.n(), cap)?;
        let mut m = self.blocks[0].op().matrix().clone();
        for b in &self.blocks[1..] {
            m = kron(&m, b.op().matrix());
        }
        HermitianOp::from_matrix(m)
    }
}

/// One random term `U diag(λ) U†` per `k`-subset, with Haar `U` and `λ_i ~ U[0,1]`.
pub fn gen_random_dense(n: usize, d: usize, k: usize, seed: u64) -> Result<LocalHamiltonianInstance> {
    if k > n {
        return Err(Error::InvalidArgument(format!("locality {k} exceeds the number of sites {n}")));
    }
    let mut rng = rng_from_seed(seed);
    let dim = checked_pow(d, k, max_dim())?;
    let mut terms = Vec::new();
    for sites in (0..n).combinations(k) {
        let u = haar_unitary(dim, &mut rng);
        let mut diag = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            diag[(i, i)] = C64::new(rng.random::<f64>(), 0.0);
        }
        let h = &u * diag * u.adjoint();
        terms.push(LocalTerm::new(sites, HermitianOp::from_matrix(h)?, d)?);
    }
    LocalHamiltonianInstance::new(n, d, k, terms)
}

/// Appends `m` fresh sites carrying `|0…0><0…0|` on every `k`-subset of them.
pub fn densify(inst: &LocalHamiltonianInstance, m: usize) -> Result<LocalHamiltonianInstance> {
    let k = inst.k;
    if k < 2 {
        return Err(Error::InvalidArgument("densification needs locality k >= 2".into()));
    }
    let d = inst.d;
    let dim = checked_pow(d, k, max_dim())?;
    let mut proj = vec![0.0; dim];
    proj[0] = 1.0;
    let proj = HermitianOp::from_real_diag(&proj);
    let mut terms = inst.terms.clone();
    for sites in (inst.n..inst.n + m).combinations(k) {
        terms.push(LocalTerm::new(sites, proj.clone(), d)?);
    }
    LocalHamiltonianInstance::new(inst.n + m, d, k, terms)
}

/// A constraint over a tuple of variables, given by its truth table.
#[derive(Clone, Debug, PartialEq)]
pub struct Clause {
    vars: Vec<usize>,
    /// Indexed big-endian by the assignment to `vars` (sorted, distinct).
    satisfying: Vec<bool>,
}

impl Clause {
    /// `pred` receives one value per entry of `vars` (repeats allowed).
    pub fn from_predicate(vars: &[usize], d: usize, pred: impl Fn(&[usize]) -> bool) -> Result<Self> {
        if vars.is_empty() {
            return Err(Error::InvalidArgument("clause over no variables".into()));
        }
        let distinct: Vec<usize> = vars.iter().copied().sorted().dedup().collect();
        let size = checked_pow(d, distinct.len(), max_dim())?;
        let mut satisfying = Vec::with_capacity(size);
        let mut full = vec![0usize; vars.len()];
        for idx in 0..size {
            let mut rem = idx;
            let mut values = vec![0usize; distinct.len()];
            for p in (0..distinct.len()).rev() {
                values[p] = rem % d;
                rem /= d;
            }
            for (slot, v) in full.iter_mut().zip(vars) {
                let p = distinct.binary_search(v).expect("present");
                *slot = values[p];
            }
            satisfying.push(pred(&full));
        }
        Ok(Self { vars: distinct, satisfying })
    }

    /// Boolean disjunction over `(variable, negated)` literals.
    pub fn disjunction(literals: &[(usize, bool)]) -> Result<Self> {
        let vars: Vec<usize> = literals.iter().map(|l| l.0).collect();
        Self::from_predicate(&vars, 2, |vals| literals.iter().zip(vals).any(|(&(_, neg), &v)| (v == 1) != neg))
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn is_satisfied(&self, assignment: &[usize], d: usize) -> bool {
        let idx = self.vars.iter().fold(0, |acc, &v| acc * d + assignment[v]);
        self.satisfying[idx]
    }
}

/// Which diagonal a CSP embedding writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CspForm {
    /// 1 on failing assignments: `λ_min` counts unsatisfied clauses.
    Penalty,
    /// 1 on satisfying assignments: `λ_max` counts satisfied clauses.
    Reward,
}

/// Result of [`embed_csp`]: clauses sharing a variable set are summed into a
/// single term and the whole instance is divided by `scale` (the largest
/// merged entry, at least 1) so every term keeps norm at most one.
#[derive(Clone, Debug)]
pub struct CspEmbedding {
    pub instance: LocalHamiltonianInstance,
    pub scale: f64,
}

pub fn embed_csp(n: usize, d: usize, k: usize, clauses: &[Clause], form: CspForm) -> Result<CspEmbedding> {
    let mut groups: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    for c in clauses {
        if c.vars.len() > k {
            return Err(Error::InvalidArgument(format!("clause over {} variables exceeds locality {k}", c.vars.len())));
        }
        if let Some(&v) = c.vars.iter().find(|&&v| v >= n) {
            return Err(Error::InvalidArgument(format!("clause variable {v} out of range for {n} variables")));
        }
        let diag = groups.entry(c.vars.clone()).or_insert_with(|| vec![0.0; c.satisfying.len()]);
        for (slot, &sat) in diag.iter_mut().zip(&c.satisfying) {
            let hit = match form {
                CspForm::Penalty => !sat,
                CspForm::Reward => sat,
            };
            if hit {
                *slot += 1.0;
            }
        }
    }
    let scale = groups.values().flat_map(|v| v.iter().copied()).fold(1.0f64, f64::max);
    let mut terms = Vec::new();
    for (vars, diag) in groups {
        if diag.iter().all(|&v| v == 0.0) {
            continue;
        }
        let scaled: Vec<f64> = diag.iter().map(|v| v / scale).collect();
        terms.push(LocalTerm::new(vars, HermitianOp::from_real_diag(&scaled), d)?);
    }
    Ok(CspEmbedding { instance: LocalHamiltonianInstance::new(n, d, k, terms)?, scale })
}

/// Parses DIMACS CNF into `(variable count, clauses)`; variables become 0-based sites.
pub fn parse_dimacs(text: &str) -> Result<(usize, Vec<Clause>)> {
    let mut n_vars = None;
    let mut clauses = Vec::new();
    let mut current: Vec<(usize, bool)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        let location = || format!("line {}", lineno + 1);
        if line.starts_with('p') {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 || fields[1] != "cnf" {
                return Err(Error::Parse { location: location(), message: "expected `p cnf <vars> <clauses>`".into() });
            }
            let v = fields[2]
                .parse::<usize>()
                .map_err(|e| Error::Parse { location: location(), message: format!("bad variable count: {e}") })?;
            n_vars = Some(v);
            continue;
        }
        let Some(nv) = n_vars else {
            return Err(Error::Parse { location: location(), message: "clause before the `p cnf` header".into() });
        };
        for tok in line.split_whitespace() {
            let lit = tok
                .parse::<i64>()
                .map_err(|e| Error::Parse { location: location(), message: format!("bad literal `{tok}`: {e}") })?;
            if lit == 0 {
                if current.is_empty() {
                    return Err(Error::Parse { location: location(), message: "empty clause".into() });
                }
                clauses.push(Clause::disjunction(&current)?);
                current.clear();
            } else {
                let var = lit.unsigned_abs() as usize;
                if var > nv {
                    return Err(Error::Parse {
                        location: location(),
                        message: format!("variable {var} exceeds declared count {nv}"),
                    });
                }
                current.push((var - 1, lit < 0));
            }
        }
    }
    if !current.is_empty() {
        clauses.push(Clause::disjunction(&current)?);
    }
    let n = n_vars
        .ok_or_else(|| Error::Parse { location: "end of input".into(), message: "missing `p cnf` header".into() })?;
    Ok((n, clauses))
}

/// Minimum number of unsatisfied clauses over all `d^n` assignments.
pub fn brute_force_min_unsat(n: usize, d: usize, clauses: &[Clause]) -> Result<usize> {
    let total = checked_pow(d, n, max_dim())?;
    let mut best = usize::MAX;
    let mut assignment = vec![0usize; n];
    for idx in 0..total {
        let mut rem = idx;
        for slot in assignment.iter_mut().rev() {
            *slot = rem % d;
            rem /= d;
        }
        let unsat = clauses.iter().filter(|c| !c.is_satisfied(&assignment, d)).count();
        best = best.min(unsat);
    }
    Ok(best)
}
