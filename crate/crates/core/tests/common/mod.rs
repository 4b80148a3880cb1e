//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use hamlet::instance::{LocalHamiltonianInstance, LocalTerm};
use hamlet::operator::{CMatrix, CVector, C64};
use hamlet::HermitianOp;

/// Dense `H = Σ_T H_T ⊗ I` built entry by entry from basis digits.
pub fn dense(inst: &LocalHamiltonianInstance) -> CMatrix {
    let n = inst.n();
    let d = inst.d();
    let dim = d.pow(n as u32);
    let digit = |x: usize, site: usize| (x / d.pow((n - 1 - site) as u32)) % d;
    let mut h = CMatrix::zeros(dim, dim);
    for t in inst.terms() {
        let m = t.matrix().matrix();
        let sites = t.sites();
        for x in 0..dim {
            for y in 0..dim {
                let rest_equal = (0..n).filter(|s| !sites.contains(s)).all(|s| digit(x, s) == digit(y, s));
                if !rest_equal {
                    continue;
                }
                let lx = sites.iter().fold(0, |acc, &s| acc * d + digit(x, s));
                let ly = sites.iter().fold(0, |acc, &s| acc * d + digit(y, s));
                h[(x, y)] += m[(lx, ly)];
            }
        }
    }
    h
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn spectrum(h: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn lambda_max(inst: &LocalHamiltonianInstance) -> f64 {
    *spectrum(&dense(inst)).last().unwrap()
}

pub fn lambda_min(inst: &LocalHamiltonianInstance) -> f64 {
    spectrum(&dense(inst))[0]
}

/// `<ψ|H|ψ>` with `H` dense.
pub fn quadratic(h: &CMatrix, psi: &CVector) -> f64 {
    (psi.adjoint() * h * psi)[(0, 0)].re
}

/// Smallest number of violated disjunctions over all Boolean assignments.
/// A literal `(v, negated)` holds when bit `v` differs from `negated`.
pub fn min_unsat(n: usize, clauses: &[Vec<(usize, bool)>]) -> usize {
    (0u64..1 << n)
        .map(|x| {
            let bit = |v: usize| (x >> (n - 1 - v)) & 1 == 1;
            clauses.iter().filter(|c| !c.iter().any(|&(v, neg)| bit(v) != neg)).count()
        })
        .min()
        .unwrap()
}

pub fn epr() -> CVector {
    let s = 0.5f64.sqrt();
    CVector::from_vec(vec![C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0)])
}

/// `Σ_{a<b} |00><00|_{ab}`.
pub fn all_pairs(n: usize) -> LocalHamiltonianInstance {
    let mut terms = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            terms.push(LocalTerm::new(vec![a, b], HermitianOp::from_real_diag(&[1.0, 0.0, 0.0, 0.0]), 2).unwrap());
        }
    }
    LocalHamiltonianInstance::new(n, 2, 2, terms).unwrap()
}

/// One term `|v><v|` on `sites`.
pub fn projector_instance(n: usize, sites: Vec<usize>, v: &CVector) -> LocalHamiltonianInstance {
    let k = sites.len();
    let t = LocalTerm::new(sites, HermitianOp::projector(v), 2).unwrap();
    LocalHamiltonianInstance::new(n, 2, k, vec![t]).unwrap()
}

/// One term given as a dense projector matrix on `sites`.
pub fn projector_instance_from(n: usize, sites: Vec<usize>, pi: &CMatrix) -> LocalHamiltonianInstance {
    let k = sites.len();
    let t = LocalTerm::new(sites, HermitianOp::from_matrix(pi.clone()).unwrap(), 2).unwrap();
    LocalHamiltonianInstance::new(n, 2, k, vec![t]).unwrap()
}
