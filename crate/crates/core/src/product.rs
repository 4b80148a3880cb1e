//! Recursive Schmidt decomposition, the mixed product assignment it induces,
//! and conditional-expectation rounding to pure product states.

use crate::error::{Error, Result};
use crate::instance::{Direction, LocalHamiltonianInstance, ProductAssignment};
use crate::operator::{
    checked_pow, expectation_local, kron, max_dim, schmidt_matrix, CMatrix, CVector, DensityOp, HermitianOp, PureState,
    C64,
};

/// Branches with probability at or below this are dropped.
pub const BRANCH_PRUNE: f64 = 1e-12;

/// `ψ = Σ_i sqrt(p_i) φ_i` with each `φ_i` a product of local unit vectors.
#[derive(Clone, Debug)]
pub struct RsdEnsemble {
    d: usize,
    probs: Vec<f64>,
    branches: Vec<Vec<CVector>>,
}

impl RsdEnsemble {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn branches(&self) -> &[Vec<CVector>] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn num_sites(&self) -> usize {
        self.branches.first().map_or(0, Vec::len)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `Σ_i sqrt(p_i) ⊗_s φ_{i,s}`.
    pub fn reconstruct(&self) -> CVector {
        let dim = self.d.pow(self.num_sites() as u32);
        let mut out = CVector::zeros(dim);
        for (p, branch) in self.probs.iter().zip(&self.branches) {
            out += product_vector(branch) * C64::new(p.sqrt(), 0.0);
        }
        out
    }

    /// Pure product assignment of branch `i`.
    pub fn branch_assignment(&self, i: usize) -> ProductAssignment {
        ProductAssignment::from_vectors(&self.branches[i]).expect("non-empty branch")
    }
}

fn product_vector(factors: &[CVector]) -> CVector {
    let mut acc = CMatrix::from_column_slice(factors[0].len(), 1, factors[0].as_slice());
    for f in &factors[1..] {
        acc = kron(&acc, &CMatrix::from_column_slice(f.len(), 1, f.as_slice()));
    }
    CVector::from_column_slice(acc.as_slice())
}

/// Schmidt-cuts sites `1..n-1` in order, recursing into every right-hand vector.
pub fn recursive_schmidt(psi: &PureState) -> Result<RsdEnsemble> {
    let dims = psi.dims();
    let d = dims[0];
    if dims.iter().any(|&x| x != d) {
        return Err(Error::Shape(format!("recursive Schmidt decomposition needs equal local dims, got {dims:?}")));
    }
    checked_pow(d, dims.len(), max_dim())?;
    let mut ens = RsdEnsemble { d, probs: Vec::new(), branches: Vec::new() };
    let mut prefix = Vec::with_capacity(dims.len());
    descend(psi.amplitudes(), dims.len(), d, 1.0, &mut prefix, &mut ens);
    Ok(ens)
}

fn descend(amps: &CVector, sites: usize, d: usize, weight: f64, prefix: &mut Vec<CVector>, ens: &mut RsdEnsemble) {
    if sites == 1 {
        let mut branch = prefix.clone();
        branch.push(amps.clone());
        ens.probs.push(weight * weight);
        ens.branches.push(branch);
        return;
    }
    let rest = d.pow((sites - 1) as u32);
    let s = schmidt_matrix(amps, d, rest);
    for ((alpha, left), right) in s.coefficients.iter().zip(&s.left).zip(&s.right) {
        let w = weight * alpha;
        if w * w <= BRANCH_PRUNE {
            continue;
        }
        prefix.push(left.clone());
        descend(right, sites - 1, d, w, prefix, ens);
        prefix.pop();
    }
}

/// Classical mixture `ρ = Σ_i p_i |φ_i><φ_i|` of the RSD branches, kept in product form.
#[derive(Clone, Debug)]
pub struct ProductMixture {
    ensemble: RsdEnsemble,
}

impl ProductMixture {
    pub fn ensemble(&self) -> &RsdEnsemble {
        &self.ensemble
    }

    /// `Tr(H_T ρ)` for a local operator on `support`, without building `ρ`.
    pub fn local_value(&self, term: &CMatrix, support: &[usize]) -> f64 {
        let d = self.ensemble.d;
        let local_sites: Vec<usize> = (0..support.len()).collect();
        self.ensemble
            .probs
            .iter()
            .zip(&self.ensemble.branches)
            .map(|(p, branch)| {
                let factors: Vec<CVector> = support.iter().map(|&s| branch[s].clone()).collect();
                let v = product_vector(&factors);
                p * expectation_local(term, &local_sites, support.len(), d, &v)
            })
            .sum()
    }

    /// The mixture as a full density operator.
    pub fn density(&self, cap: usize) -> Result<DensityOp> {
        let n = self.ensemble.num_sites();
        let dim = checked_pow(self.ensemble.d, n, cap)?;
        let mut m = CMatrix::zeros(dim, dim);
        for (p, branch) in self.ensemble.probs.iter().zip(&self.ensemble.branches) {
            let v = product_vector(branch);
            m += &v * v.adjoint() * C64::new(*p, 0.0);
        }
        let total: f64 = self.ensemble.probs.iter().sum();
        DensityOp::new(HermitianOp::from_matrix(m / C64::new(total, 0.0))?)
    }
}

pub fn mixing_assignment(psi: &PureState) -> Result<ProductMixture> {
    Ok(ProductMixture { ensemble: recursive_schmidt(psi)? })
}

/// The RSD branch of `psi` with the best product energy.
pub fn best_rsd_branch(
    inst: &LocalHamiltonianInstance,
    psi: &PureState,
    direction: Direction,
) -> Result<(ProductAssignment, f64)> {
    let ens = recursive_schmidt(psi)?;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..ens.len() {
        let value = inst.product_energy(&ens.branch_assignment(i))?;
        if best.is_none_or(|(_, b)| direction.better(value, b)) {
            best = Some((i, value));
        }
    }
    let (i, value) = best.ok_or_else(|| Error::Shape("state has no branches above the pruning threshold".into()))?;
    Ok((ens.branch_assignment(i), value))
}

/// Site by site, replaces `ρ_i` by the eigenvector of `ρ_i` that does best with
/// the other blocks held fixed. The value never gets worse, since the current
/// value is a convex combination of the eigenvector values.
pub fn round_conditional_expectations(
    inst: &LocalHamiltonianInstance,
    assign: &ProductAssignment,
    direction: Direction,
) -> Result<ProductAssignment> {
    if assign.n() != inst.n() || assign.d() != inst.d() {
        return Err(Error::Shape("assignment does not match the instance".into()));
    }
    let mut mats: Vec<CMatrix> = assign.blocks().iter().map(|b| b.op().matrix().clone()).collect();
    let mut blocks: Vec<DensityOp> = assign.blocks().to_vec();
    for site in 0..inst.n() {
        let refs: Vec<&CMatrix> = mats.iter().collect();
        let env = inst.environment_operator(&refs, site);
        let eig = blocks[site].op().eigh();
        let mut best: Option<(CVector, f64)> = None;
        for c in 0..eig.values.len() {
            let v = eig.vector(c);
            let value = env.expectation(&v);
            if best.as_ref().is_none_or(|(_, b)| direction.better(value, *b)) {
                best = Some((v, value));
            }
        }
        let (v, _) = best.expect("non-empty block");
        let pure = DensityOp::pure(&v);
        mats[site] = pure.op().matrix().clone();
        blocks[site] = pure;
    }
    ProductAssignment::new(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::LocalTerm;
    use crate::operator::{DEFAULT_MAX_DIM, ZERO};

    fn phi_plus() -> PureState {
        let s = 0.5f64.sqrt();
        PureState::new(vec![2, 2], CVector::from_vec(vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)])).unwrap()
    }

    #[test]
    fn product_state_has_one_branch() {
        let psi = PureState::basis(vec![2, 2, 2], 0).unwrap();
        let ens = recursive_schmidt(&psi).unwrap();
        assert_eq!(ens.len(), 1);
        assert!((ens.probabilities()[0] - 1.0).abs() < 1e-12);
        for v in &ens.branches()[0] {
            assert!((v[0].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bell_state_branches() {
        let ens = recursive_schmidt(&phi_plus()).unwrap();
        assert_eq!(ens.len(), 2);
        for (p, branch) in ens.probabilities().iter().zip(ens.branches()) {
            assert!((p - 0.5).abs() < 1e-12);
            // both factors agree on the computational basis state
            let which = if branch[0][0].norm() > 0.5 { 0 } else { 1 };
            assert!((branch[1][which].norm() - 1.0).abs() < 1e-12);
        }
        assert!((ens.reconstruct() - phi_plus().amplitudes()).norm() < 1e-12);
    }

    #[test]
    fn mixing_on_bell_clause_is_half() {
        let mix = mixing_assignment(&phi_plus()).unwrap();
        let proj = phi_plus().density().into_matrix();
        assert!((mix.local_value(&proj, &[0, 1]) - 0.5).abs() < 1e-12);
        let rho = mix.density(DEFAULT_MAX_DIM).unwrap();
        let want = HermitianOp::from_real_diag(&[0.5, 0.0, 0.0, 0.5]);
        assert!(rho.op().max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn rounding_mixed_all_pairs() {
        let mut terms = Vec::new();
        for a in 0..4 {
            for b in a + 1..4 {
                terms.push(LocalTerm::new(vec![a, b], HermitianOp::from_real_diag(&[1.0, 0.0, 0.0, 0.0]), 2).unwrap());
            }
        }
        let inst = LocalHamiltonianInstance::new(4, 2, 2, terms).unwrap();
        let mixed = ProductAssignment::maximally_mixed(4, 2);
        let before = inst.product_energy(&mixed).unwrap();
        assert!((before - 1.5).abs() < 1e-12);
        let rounded = round_conditional_expectations(&inst, &mixed, Direction::Maximize).unwrap();
        assert!((inst.product_energy(&rounded).unwrap() - 6.0).abs() < 1e-12);
        assert!(rounded.is_pure(1e-12));
        let low = round_conditional_expectations(&inst, &mixed, Direction::Minimize).unwrap();
        assert!(inst.product_energy(&low).unwrap() <= before + 1e-12);
    }

    #[test]
    fn best_branch_of_bell_clause() {
        let t = LocalTerm::new(vec![0, 1], phi_plus().density(), 2).unwrap();
        let inst = LocalHamiltonianInstance::new(2, 2, 2, vec![t]).unwrap();
        let (assign, value) = best_rsd_branch(&inst, &phi_plus(), Direction::Maximize).unwrap();
        assert!((value - 0.5).abs() < 1e-12);
        assert!(assign.is_pure(1e-12));
    }
}
