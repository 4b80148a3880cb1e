//! Dense complex linear algebra over qudit registers.
//!
//! Multi-site indices are big-endian: site 0 is the most significant digit,
//! so `|x_0 x_1 ... x_{n-1}>` has index `sum_s x_s d^(n-1-s)`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Hermiticity tolerance for the operator invariant.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Asymmetry above which construction logs a warning before symmetrizing.
pub const ASYMMETRY_WARN: f64 = 1e-8;
/// Default cap on the full Hilbert-space dimension `d^n`.
pub const DEFAULT_MAX_DIM: usize = 1 << 22;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Capacity cap for full-space operators, honouring `HAMLET_MAX_DIM`.
pub fn max_dim() -> usize {
    std::env::var("HAMLET_MAX_DIM")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_MAX_DIM)
}

/// `d^n`, or a capacity error when it exceeds `cap`.
pub fn checked_pow(d: usize, n: usize, cap: usize) -> Result<usize> {
    let mut acc: u128 = 1;
    for _ in 0..n {
        acc = acc.saturating_mul(d as u128);
        if acc > cap as u128 {
            // keep multiplying only to report the true size when it is small enough
            let needed = (d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
            return Err(Error::Capacity { needed, cap });
        }
    }
    Ok(acc as usize)
}

/// Largest `|m_ij - conj(m_ji)|`.
pub fn asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// A dense Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOp {
    mat: CMatrix,
}

/// Ascending eigenvalues with eigenvectors as the columns of a unitary.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigh {
    pub fn vector(&self, idx: usize) -> CVector {
        self.vectors.column(idx).into_owned()
    }
}

impl HermitianOp {
    /// Wraps a square matrix, replacing it by `(A + A†)/2`.
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Shape(format!("expected a non-empty square matrix, got {}x{}", m.nrows(), m.ncols())));
        }
        let asym = asymmetry(&m);
        if asym > ASYMMETRY_WARN {
            warn!("symmetrizing operator with asymmetry {asym:e}");
        }
        let sym = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self { mat: sym })
    }

    /// Like [`from_matrix`](Self::from_matrix) but rejects anything further than
    /// `tol` from Hermitian instead of symmetrizing it away.
    pub fn from_matrix_strict(m: CMatrix, tol: f64) -> Result<Self> {
        if m.nrows() == m.ncols() {
            let asym = asymmetry(&m);
            if asym > tol {
                return Err(Error::NotHermitian(asym));
            }
        }
        Self::from_matrix(m)
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("matrix rows must all have length equal to the row count".into()));
        }
        Self::from_matrix(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut mat = CMatrix::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            mat[(i, i)] = C64::new(v, 0.0);
        }
        Self { mat }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: CMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: CMatrix::zeros(dim, dim) }
    }

    /// `|v><v|` (no normalization).
    pub fn projector(v: &CVector) -> Self {
        Self { mat: v * v.adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { mat: &self.mat * C64::new(s, 0.0) }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { mat: &self.mat + &other.mat }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { mat: &self.mat - &other.mat }
    }

    /// `Tr(self · other)`, real for Hermitian pairs.
    pub fn trace_with(&self, other: &Self) -> f64 {
        trace_product(&self.mat, &other.mat).re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<v|A|v>`.
    pub fn expectation(&self, v: &CVector) -> f64 {
        v.dotc(&(&self.mat * v)).re
    }

    pub fn eigh(&self) -> Eigh {
        sorted_eigh(&self.mat)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigh().values[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigh().values.last().expect("non-empty operator")
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.mat.iter().zip(other.mat.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.mat[(i, j)] == ZERO))
    }
}

/// `Tr(a b)` for arbitrary square matrices.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn sorted_eigh(m: &CMatrix) -> Eigh {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = m.nrows();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Eigh { values, vectors }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eig_herm(m: &CMatrix) -> Result<Eigh> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!("eig_herm needs a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let asym = asymmetry(m);
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian(asym));
    }
    Ok(sorted_eigh(&((m + m.adjoint()) * C64::new(0.5, 0.0))))
}

/// Reorders the tensor factors of a `d^m`-dimensional matrix. `order[p]` is the
/// old position of the factor placed at new position `p`.
pub fn permute_factors(m: &CMatrix, d: usize, order: &[usize]) -> CMatrix {
    let k = order.len();
    let dim = d.pow(k as u32);
    let old_of_new: Vec<usize> = (0..dim)
        .map(|x| {
            let mut digits = vec![0usize; k];
            let mut rem = x;
            for p in (0..k).rev() {
                digits[p] = rem % d;
                rem /= d;
            }
            let mut old = vec![0usize; k];
            for p in 0..k {
                old[order[p]] = digits[p];
            }
            old.iter().fold(0, |acc, &v| acc * d + v)
        })
        .collect();
    CMatrix::from_fn(dim, dim, |a, b| m[(old_of_new[a], old_of_new[b])])
}

/// Kronecker product of two Hermitian operators.
pub fn tensor(a: &HermitianOp, b: &HermitianOp) -> HermitianOp {
    HermitianOp { mat: kron(&a.mat, &b.mat) }
}

/// Index bookkeeping for a local operator acting on `support` inside `n` sites of dimension `d`.
pub(crate) struct LocalLayout {
    /// Stride of each support site in the full index.
    strides: Vec<usize>,
    /// Full-index offset of each local basis state.
    offsets: Vec<usize>,
    local_dim: usize,
    d: usize,
}

impl LocalLayout {
    pub(crate) fn new(support: &[usize], n: usize, d: usize) -> Self {
        let strides: Vec<usize> = support.iter().map(|&s| d.pow((n - 1 - s) as u32)).collect();
        let local_dim = d.pow(support.len() as u32);
        let offsets = (0..local_dim)
            .map(|ys| {
                let mut rem = ys;
                let mut off = 0;
                for l in (0..support.len()).rev() {
                    off += (rem % d) * strides[l];
                    rem /= d;
                }
                off
            })
            .collect();
        Self { strides, offsets, local_dim, d }
    }

    /// Split a full index into (local index, full index with the support digits zeroed).
    #[inline]
    pub(crate) fn split(&self, x: usize) -> (usize, usize) {
        let mut local = 0;
        let mut base = x;
        for &st in &self.strides {
            let digit = (x / st) % self.d;
            local = local * self.d + digit;
            base -= digit * st;
        }
        (local, base)
    }
}

fn validate_support(support: &[usize], n: usize) -> Result<()> {
    for (i, &s) in support.iter().enumerate() {
        if s >= n {
            return Err(Error::Shape(format!("site {s} out of range for {n} sites")));
        }
        if support[..i].contains(&s) {
            return Err(Error::Shape(format!("site {s} repeated in support")));
        }
    }
    Ok(())
}

/// Embeds a local matrix acting on `support` (factor order as listed) into the full space,
/// tensoring with the identity elsewhere.
pub fn embed_matrix(term: &CMatrix, support: &[usize], n: usize, d: usize, cap: usize) -> Result<CMatrix> {
    validate_support(support, n)?;
    let local_dim = d.pow(support.len() as u32);
    if term.nrows() != local_dim || term.ncols() != local_dim {
        return Err(Error::Shape(format!(
            "term of dimension {} does not match d^|support| = {local_dim}",
            term.nrows()
        )));
    }
    let dim = checked_pow(d, n, cap)?;
    let layout = LocalLayout::new(support, n, d);
    let mut out = CMatrix::zeros(dim, dim);
    for x in 0..dim {
        let (xs, base) = layout.split(x);
        for ys in 0..layout.local_dim {
            out[(x, base + layout.offsets[ys])] = term[(xs, ys)];
        }
    }
    Ok(out)
}

/// Hermitian wrapper around [`embed_matrix`].
pub fn embed_term(term: &HermitianOp, support: &[usize], n: usize, d: usize, cap: usize) -> Result<HermitianOp> {
    Ok(HermitianOp { mat: embed_matrix(&term.mat, support, n, d, cap)? })
}

/// Adds the embedding of `term` into an existing full-space matrix.
pub(crate) fn embed_add_into(out: &mut CMatrix, term: &CMatrix, support: &[usize], n: usize, d: usize) {
    let layout = LocalLayout::new(support, n, d);
    for x in 0..out.nrows() {
        let (xs, base) = layout.split(x);
        for ys in 0..layout.local_dim {
            out[(x, base + layout.offsets[ys])] += term[(xs, ys)];
        }
    }
}

/// `(embedded term) · psi` without materializing the full operator.
pub fn apply_local(term: &CMatrix, support: &[usize], n: usize, d: usize, psi: &CVector) -> CVector {
    let layout = LocalLayout::new(support, n, d);
    let mut out = CVector::zeros(psi.len());
    for x in 0..psi.len() {
        let (xs, base) = layout.split(x);
        let mut acc = ZERO;
        for ys in 0..layout.local_dim {
            acc += term[(xs, ys)] * psi[base + layout.offsets[ys]];
        }
        out[x] = acc;
    }
    out
}

/// `<psi| (embedded term) |psi>`.
pub fn expectation_local(term: &CMatrix, support: &[usize], n: usize, d: usize, psi: &CVector) -> f64 {
    psi.dotc(&apply_local(term, support, n, d, psi)).re
}

/// Partial trace of an arbitrary square matrix over all sites not in `keep`.
/// Kept sites appear in ascending order in the result.
pub fn partial_trace_matrix(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if m.nrows() != total || m.ncols() != total {
        return Err(Error::Shape(format!("operator dimension {} inconsistent with local dims {:?}", m.nrows(), dims)));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() || keep_sorted.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Shape(format!("invalid kept-site set {keep:?} for {} sites", dims.len())));
    }
    let n = dims.len();
    let mut strides = vec![1usize; n];
    for s in (0..n.saturating_sub(1)).rev() {
        strides[s] = strides[s + 1] * dims[s + 1];
    }
    let rest: Vec<usize> = (0..n).filter(|s| !keep_sorted.contains(s)).collect();
    let kdim: usize = keep_sorted.iter().map(|&s| dims[s]).product();
    let rdim: usize = rest.iter().map(|&s| dims[s]).product();
    let compose = |sites: &[usize], mut idx: usize| -> usize {
        let mut off = 0;
        for &s in sites.iter().rev() {
            off += (idx % dims[s]) * strides[s];
            idx /= dims[s];
        }
        off
    };
    let koff: Vec<usize> = (0..kdim).map(|a| compose(&keep_sorted, a)).collect();
    let roff: Vec<usize> = (0..rdim).map(|r| compose(&rest, r)).collect();
    let mut out = CMatrix::zeros(kdim, kdim);
    for a in 0..kdim {
        for b in 0..kdim {
            let mut acc = ZERO;
            for &r in &roff {
                acc += m[(koff[a] + r, koff[b] + r)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Partial trace keeping the sites in `keep`.
pub fn partial_trace(state: &HermitianOp, dims: &[usize], keep: &[usize]) -> Result<HermitianOp> {
    let out = partial_trace_matrix(&state.mat, dims, keep)?;
    Ok(HermitianOp { mat: (&out + out.adjoint()) * C64::new(0.5, 0.0) })
}

/// PSD tolerance for density operators.
pub const DENSITY_TOL: f64 = 1e-9;

/// A positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOp {
    op: HermitianOp,
}

impl DensityOp {
    pub fn new(op: HermitianOp) -> Result<Self> {
        Self::with_tolerance(op, DENSITY_TOL)
    }

    pub fn with_tolerance(op: HermitianOp, tol: f64) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > tol {
            return Err(Error::NotDensity(format!("trace {tr} differs from 1")));
        }
        let lmin = op.lambda_min();
        if lmin < -tol {
            return Err(Error::NotDensity(format!("smallest eigenvalue {lmin:e} is negative")));
        }
        Ok(Self { op })
    }

    /// `|v><v|/<v|v>`.
    pub fn pure(v: &CVector) -> Self {
        let nv = v.norm();
        let u = v / C64::new(nv, 0.0);
        Self { op: HermitianOp::projector(&u) }
    }

    pub fn basis_state(d: usize, idx: usize) -> Self {
        let mut v = CVector::zeros(d);
        v[idx] = ONE;
        Self::pure(&v)
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { op: HermitianOp::identity(d).scale(1.0 / d as f64) }
    }

    /// Clips negative eigenvalues and renormalizes; returns the operator and the
    /// Frobenius distance moved.
    pub fn project(op: &HermitianOp) -> (Self, f64) {
        let eig = op.eigh();
        let clipped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        let dim = op.dim();
        let mut mat = CMatrix::zeros(dim, dim);
        if total <= 0.0 {
            mat = CMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0);
        } else {
            for (i, &lam) in clipped.iter().enumerate() {
                if lam > 0.0 {
                    let v = eig.vectors.column(i);
                    mat += v * v.adjoint() * C64::new(lam / total, 0.0);
                }
            }
        }
        let projected = HermitianOp::from_matrix(mat).expect("square");
        let moved = projected.sub(op).frobenius_norm();
        (Self { op: projected }, moved)
    }

    pub fn op(&self) -> &HermitianOp {
        &self.op
    }

    pub fn into_op(self) -> HermitianOp {
        self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        let eig = self.op.eigh();
        eig.values.iter().rev().skip(1).all(|v| v.abs() <= tol)
    }
}

/// Orthogonal Hermitian operator basis with `Tr(σ_i σ_j) = 2 δ_ij`.
///
/// Order: symmetric `U_pq` (p<q), antisymmetric `V_pq` (p<q), diagonal `W_r`
/// (r = 1..d-1), then `sqrt(2/d)·I` last. For `d = 2` this is `X, Y, Z, I`.
#[derive(Clone, Debug)]
pub struct HermBasis {
    d: usize,
    elements: Vec<HermitianOp>,
}

impl HermBasis {
    pub fn build(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(format!("local dimension must be at least 2, got {d}")));
        }
        let mut elements = Vec::with_capacity(d * d);
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|p| (p + 1..d).map(move |q| (p, q))).collect();
        for &(p, q) in &pairs {
            let mut m = CMatrix::zeros(d, d);
            m[(p, q)] = ONE;
            m[(q, p)] = ONE;
            elements.push(HermitianOp { mat: m });
        }
        for &(p, q) in &pairs {
            let mut m = CMatrix::zeros(d, d);
            m[(p, q)] = C64::new(0.0, -1.0);
            m[(q, p)] = C64::new(0.0, 1.0);
            elements.push(HermitianOp { mat: m });
        }
        for r in 1..d {
            let c = (2.0 / (r * (r + 1)) as f64).sqrt();
            let mut diag = vec![0.0; d];
            for v in diag.iter_mut().take(r) {
                *v = c;
            }
            diag[r] = -(r as f64) * c;
            elements.push(HermitianOp::from_real_diag(&diag));
        }
        elements.push(HermitianOp::identity(d).scale((2.0 / d as f64).sqrt()));
        Ok(Self { d, elements })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HermitianOp] {
        &self.elements
    }

    pub fn element(&self, j: usize) -> &HermitianOp {
        &self.elements[j]
    }

    /// Index of the scaled identity.
    pub fn identity_index(&self) -> usize {
        self.elements.len() - 1
    }

    /// `Tr(σ_j A)` for every basis element.
    pub fn expectations(&self, a: &HermitianOp) -> Vec<f64> {
        self.elements.iter().map(|s| s.trace_with(a)).collect()
    }

    /// Rebuilds `A = Σ_j (Tr(σ_j A)/2) σ_j` from expectation values.
    pub fn from_expectations(&self, x: &[f64]) -> HermitianOp {
        let mut mat = CMatrix::zeros(self.d, self.d);
        for (s, &v) in self.elements.iter().zip(x) {
            mat += &s.mat * C64::new(v / 2.0, 0.0);
        }
        HermitianOp { mat }
    }

    /// Gram matrix `Tr(σ_i σ_j)`.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        self.elements.iter().map(|a| self.elements.iter().map(|b| a.trace_with(b)).collect()).collect()
    }
}

/// Normalization tolerance for pure states.
pub const STATE_NORM_TOL: f64 = 1e-10;

/// A normalized vector on a register of given local dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    dims: Vec<usize>,
    amps: CVector,
}

impl PureState {
    pub fn new(dims: Vec<usize>, amps: CVector) -> Result<Self> {
        let total: usize = dims.iter().product();
        if amps.len() != total {
            return Err(Error::Shape(format!(
                "amplitude vector of length {} does not match dims {:?}",
                amps.len(),
                dims
            )));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::Shape(format!("state has norm {norm}, expected 1")));
        }
        Ok(Self { dims, amps })
    }

    /// Normalizes `amps` before wrapping.
    pub fn normalized(dims: Vec<usize>, amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if norm == 0.0 {
            return Err(Error::Shape("cannot normalize the zero vector".into()));
        }
        Self::new(dims, amps / C64::new(norm, 0.0))
    }

    pub fn basis(dims: Vec<usize>, index: usize) -> Result<Self> {
        let total: usize = dims.iter().product();
        if index >= total {
            return Err(Error::Shape(format!("basis index {index} out of range {total}")));
        }
        let mut amps = CVector::zeros(total);
        amps[index] = ONE;
        Self::new(dims, amps)
    }

    /// `v_0 ⊗ v_1 ⊗ ...` of normalized local vectors.
    pub fn product(vectors: &[CVector]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Shape("product of zero factors".into()));
        }
        let dims: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
        let mut acc = CMatrix::from_column_slice(vectors[0].len(), 1, vectors[0].as_slice());
        for v in &vectors[1..] {
            acc = acc.kronecker(&CMatrix::from_column_slice(v.len(), 1, v.as_slice()));
        }
        Self::normalized(dims, CVector::from_column_slice(acc.as_slice()))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn num_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn density(&self) -> HermitianOp {
        HermitianOp::projector(&self.amps)
    }
}

/// Schmidt decomposition across a cut after the first `cut` sites.
#[derive(Clone, Debug)]
pub struct Schmidt {
    /// Non-negative, descending.
    pub coefficients: Vec<f64>,
    pub left: Vec<CVector>,
    pub right: Vec<CVector>,
}

impl Schmidt {
    /// `Σ α_i a_i ⊗ b_i`.
    pub fn reconstruct(&self) -> CVector {
        let ld = self.left.first().map_or(0, |v| v.len());
        let rd = self.right.first().map_or(0, |v| v.len());
        let mut out = CVector::zeros(ld * rd);
        for ((a, l), r) in self.coefficients.iter().zip(&self.left).zip(&self.right) {
            for x in 0..ld {
                for y in 0..rd {
                    out[x * rd + y] += C64::new(*a, 0.0) * l[x] * r[y];
                }
            }
        }
        out
    }
}

pub fn schmidt_decompose(psi: &PureState, cut: usize) -> Result<Schmidt> {
    if cut == 0 || cut >= psi.dims.len() {
        return Err(Error::Shape(format!("cut {cut} must split {} sites into two non-empty blocks", psi.dims.len())));
    }
    let ld: usize = psi.dims[..cut].iter().product();
    let rd: usize = psi.dims[cut..].iter().product();
    Ok(schmidt_matrix(&psi.amps, ld, rd))
}

/// Schmidt decomposition of a vector reshaped as `ld x rd` (row-major).
pub(crate) fn schmidt_matrix(amps: &CVector, ld: usize, rd: usize) -> Schmidt {
    // Built from the eigenvectors of the smaller Gram matrix rather than an SVD:
    // nalgebra's complex SVD can return factors that do not reproduce small
    // rank-deficient inputs. Coefficients are the exact norms of the projections.
    let m = CMatrix::from_fn(ld, rd, |i, j| amps[i * rd + j]);
    let mut parts: Vec<(f64, CVector, CVector)> = if ld <= rd {
        let eig = sorted_eigh(&(&m * m.adjoint()));
        (0..ld)
            .map(|c| {
                let u = eig.vectors.column(c).into_owned();
                let row = u.adjoint() * &m;
                let w = CVector::from_iterator(rd, row.iter().copied());
                let s = w.norm();
                let right = if s > 0.0 { w / C64::new(s, 0.0) } else { w };
                (s, u, right)
            })
            .collect()
    } else {
        let eig = sorted_eigh(&(m.adjoint() * &m));
        (0..rd)
            .map(|c| {
                let v = eig.vectors.column(c).into_owned();
                let l = &m * &v;
                let s = l.norm();
                let left = if s > 0.0 { l / C64::new(s, 0.0) } else { l };
                (s, left, v.map(|z| z.conj()))
            })
            .collect()
    };
    parts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let coefficients = parts.iter().map(|p| p.0).collect();
    let left = parts.iter().map(|p| p.1.clone()).collect();
    let right = parts.into_iter().map(|p| p.2).collect();
    Schmidt { coefficients, left, right }
}
