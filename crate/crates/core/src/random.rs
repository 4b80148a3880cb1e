//! Seeded sampling of states and unitaries.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::operator::{CMatrix, CVector, DensityOp, HermitianOp, C64};

pub type SeededRng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Gaussian vector normalized to the unit sphere (Haar-random pure state).
pub fn random_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector {
    loop {
        let v = CVector::from_fn(dim, |_, _| gaussian(rng));
        let norm = v.norm();
        if norm > 1e-300 {
            return v / C64::new(norm, 0.0);
        }
    }
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of `R` divided out.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { Complex::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Hilbert–Schmidt random density matrix `G G† / Tr(G G†)`.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityOp {
    let g = CMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
    let w = &g * g.adjoint();
    let tr: f64 = (0..dim).map(|i| w[(i, i)].re).sum();
    let op = HermitianOp::from_matrix(w / C64::new(tr, 0.0)).expect("square");
    DensityOp::new(op).expect("Ginibre product is a density matrix")
}

pub fn random_pure_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityOp {
    DensityOp::pure(&random_unit_vector(dim, rng))
}

/// Random Hermitian matrix with entries of order one.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianOp {
    let g = CMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
    HermitianOp::from_matrix((&g + g.adjoint()) * C64::new(0.5, 0.0)).expect("square")
}
