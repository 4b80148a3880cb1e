//! Circuit-to-Hamiltonian construction with a unary clock.
//!
//! Qubit layout: proof qubits `0..n_proof` (qubit 0 is the output), then
//! ancillas, then clock qubits `c_1..c_L`. Time `t` is encoded as
//! `|1^t 0^(L-t)>` on the clock.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{LocalHamiltonianInstance, LocalTerm};
use crate::operator::{
    apply_local, checked_pow, embed_add_into, kron, permute_factors, CMatrix, CVector, HermitianOp, PureState, C64,
    ONE, ZERO,
};
use crate::random::{haar_unitary, rng_from_seed};

/// Unitarity tolerance for gates.
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub targets: Vec<usize>,
    pub matrix: CMatrix,
}

impl Gate {
    pub fn new(targets: Vec<usize>, matrix: CMatrix) -> Self {
        Self { targets, matrix }
    }

    pub fn identity(target: usize) -> Self {
        Self::new(vec![target], CMatrix::identity(2, 2))
    }

    /// Rotation `exp(-i θ Y / 2)`.
    pub fn ry(target: usize, theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        let m =
            CMatrix::from_row_slice(2, 2, &[C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)]);
        Self::new(vec![target], m)
    }

    pub fn x(target: usize) -> Self {
        Self::new(vec![target], CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]))
    }

    pub fn swap(a: usize, b: usize) -> Self {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = ONE;
        m[(1, 2)] = ONE;
        m[(2, 1)] = ONE;
        m[(3, 3)] = ONE;
        Self::new(vec![a, b], m)
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = ONE;
        m[(1, 1)] = ONE;
        m[(2, 3)] = ONE;
        m[(3, 2)] = ONE;
        Self::new(vec![control, target], m)
    }
}

/// `V = V_L ⋯ V_1` acting on proof and ancilla qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifierCircuit {
    n_proof: usize,
    n_ancilla: usize,
    gates: Vec<Gate>,
}

impl VerifierCircuit {
    pub fn new(n_proof: usize, n_ancilla: usize, gates: Vec<Gate>) -> Result<Self> {
        if n_proof == 0 {
            return Err(Error::InvalidCircuit("need at least one proof qubit (qubit 0 is the output)".into()));
        }
        if gates.is_empty() {
            return Err(Error::InvalidCircuit("circuit has no gates".into()));
        }
        let width = n_proof + n_ancilla;
        for (g, gate) in gates.iter().enumerate() {
            let m = gate.targets.len();
            if m == 0 || m > 2 {
                return Err(Error::InvalidCircuit(format!("gate {g}: expected 1 or 2 targets, got {m}")));
            }
            if gate.targets.iter().any(|&t| t >= width) {
                return Err(Error::InvalidCircuit(format!("gate {g}: target out of range for {width} qubits")));
            }
            if m == 2 && gate.targets[0] == gate.targets[1] {
                return Err(Error::InvalidCircuit(format!("gate {g}: repeated target")));
            }
            let dim = 1 << m;
            if gate.matrix.nrows() != dim || gate.matrix.ncols() != dim {
                return Err(Error::InvalidCircuit(format!("gate {g}: matrix must be {dim}x{dim}")));
            }
            let dev = (&gate.matrix * gate.matrix.adjoint() - CMatrix::identity(dim, dim))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            if dev > UNITARY_TOL {
                return Err(Error::InvalidCircuit(format!("gate {g}: not unitary (deviation {dev:e})")));
            }
        }
        Ok(Self { n_proof, n_ancilla, gates })
    }

    /// Random circuit of `len` Haar gates on one or two qubits.
    pub fn random(n_proof: usize, n_ancilla: usize, len: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let width = n_proof + n_ancilla;
        let mut gates = Vec::with_capacity(len);
        for _ in 0..len {
            let two = width >= 2 && rng.random_bool(0.5);
            let a = rng.random_range(0..width);
            if two {
                let mut b = rng.random_range(0..width - 1);
                if b >= a {
                    b += 1;
                }
                gates.push(Gate::new(vec![a, b], haar_unitary(4, &mut rng)));
            } else {
                gates.push(Gate::new(vec![a], haar_unitary(2, &mut rng)));
            }
        }
        Self::new(n_proof, n_ancilla, gates)
    }

    pub fn n_proof(&self) -> usize {
        self.n_proof
    }

    pub fn n_ancilla(&self) -> usize {
        self.n_ancilla
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Number of gates `L`.
    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Proof plus ancilla qubits.
    pub fn width(&self) -> usize {
        self.n_proof + self.n_ancilla
    }

    /// Width plus the `L` clock qubits.
    pub fn total_qubits(&self) -> usize {
        self.width() + self.len()
    }

    /// Site of clock qubit `c_j`, `1 <= j <= L`.
    pub fn clock_site(&self, j: usize) -> usize {
        self.width() + j - 1
    }

    /// `|proof> ⊗ |0...0>_ancilla`.
    pub fn initial_state(&self, proof: &PureState) -> Result<CVector> {
        if proof.dim() != 1 << self.n_proof {
            return Err(Error::Shape(format!(
                "proof of dimension {} does not match {} proof qubits",
                proof.dim(),
                self.n_proof
            )));
        }
        let anc = 1usize << self.n_ancilla;
        let mut v = CVector::zeros(proof.dim() * anc);
        for (p, amp) in proof.amplitudes().iter().enumerate() {
            v[p * anc] = *amp;
        }
        Ok(v)
    }

    /// Applies gate `g` (0-based) to a width-qubit vector.
    pub fn apply_gate(&self, g: usize, state: &CVector) -> CVector {
        let gate = &self.gates[g];
        apply_local(&gate.matrix, &gate.targets, self.width(), 2, state)
    }

    /// Probability of measuring 1 on the output qubit after running the circuit.
    pub fn acceptance(&self, proof: &PureState) -> Result<f64> {
        let mut v = self.initial_state(proof)?;
        for g in 0..self.len() {
            v = self.apply_gate(g, &v);
        }
        let half = 1usize << (self.width() - 1);
        Ok(v.iter().skip(half).map(|z| z.norm_sqr()).sum())
    }

    /// Maximum acceptance over proofs and a proof attaining it.
    pub fn max_acceptance(&self) -> Result<(f64, PureState)> {
        let np = 1usize << self.n_proof;
        checked_pow(2, self.width(), crate::operator::max_dim())?;
        let half = 1usize << (self.width() - 1);
        let columns: Vec<CVector> = (0..np)
            .map(|p| {
                let proof = PureState::basis(vec![2; self.n_proof], p).expect("in range");
                let mut v = self.initial_state(&proof).expect("shape");
                for g in 0..self.len() {
                    v = self.apply_gate(g, &v);
                }
                v
            })
            .collect();
        let m = CMatrix::from_fn(np, np, |p, q| {
            columns[p].iter().zip(columns[q].iter()).skip(half).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
        });
        let eig = HermitianOp::from_matrix(m)?.eigh();
        let best = eig.vector(np - 1);
        let proof = PureState::normalized(vec![2; self.n_proof], best)?;
        Ok((eig.values[np - 1], proof))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CircuitFile {
            schema_version: crate::SCHEMA_VERSION,
            n_proof: self.n_proof,
            n_ancilla: self.n_ancilla,
            gates: self
                .gates
                .iter()
                .map(|g| GateFile {
                    targets: g.targets.clone(),
                    matrix: (0..g.matrix.nrows())
                        .map(|i| (0..g.matrix.ncols()).map(|j| [g.matrix[(i, j)].re, g.matrix[(i, j)].im]).collect())
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidCircuit(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CircuitFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let mut gates = Vec::with_capacity(file.gates.len());
        for (g, gf) in file.gates.into_iter().enumerate() {
            let dim = gf.matrix.len();
            if gf.matrix.iter().any(|r| r.len() != dim) {
                return Err(Error::Parse { location: format!("gates[{g}]"), message: "matrix is not square".into() });
            }
            let m = CMatrix::from_fn(dim, dim, |i, j| C64::new(gf.matrix[i][j][0], gf.matrix[i][j][1]));
            gates.push(Gate::new(gf.targets, m));
        }
        Self::new(file.n_proof, file.n_ancilla, gates)
    }
}

#[derive(Serialize, Deserialize)]
struct CircuitFile {
    #[serde(default = "schema_default")]
    schema_version: u32,
    n_proof: usize,
    n_ancilla: usize,
    gates: Vec<GateFile>,
}

fn schema_default() -> u32 {
    crate::SCHEMA_VERSION
}

#[derive(Serialize, Deserialize)]
struct GateFile {
    targets: Vec<usize>,
    matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Input,
    Output,
    Propagation,
    Stabilizer,
}

/// One local piece of the clock Hamiltonian on sorted sites.
#[derive(Clone, Debug)]
pub struct ClockTerm {
    pub part: Part,
    pub sites: Vec<usize>,
    pub matrix: CMatrix,
}

fn proj(bit: usize) -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(bit, bit)] = ONE;
    m
}

fn flip(to: usize, from: usize) -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(to, from)] = ONE;
    m
}

fn sorted_term(part: Part, sites: Vec<usize>, matrix: CMatrix) -> ClockTerm {
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by_key(|&p| sites[p]);
    let sorted = order.iter().map(|&p| sites[p]).collect();
    ClockTerm { part, sites: sorted, matrix: permute_factors(&matrix, 2, &order) }
}

/// All local terms of `H_in + H_out + H_prop + H_stab`.
pub fn clock_terms(circuit: &VerifierCircuit) -> Vec<ClockTerm> {
    let l = circuit.len();
    let c = |j: usize| circuit.clock_site(j);
    let mut out = Vec::new();
    for a in circuit.n_proof..circuit.width() {
        out.push(sorted_term(Part::Input, vec![a, c(1)], kron(&proj(1), &proj(0))));
    }
    out.push(sorted_term(Part::Output, vec![0, c(l)], kron(&proj(0), &proj(1))));
    for (idx, gate) in circuit.gates.iter().enumerate() {
        let j = idx + 1;
        let gdim = gate.matrix.nrows();
        // factors: gate targets, [c_{j-1}], c_j, [c_{j+1}]
        let mut sites = gate.targets.clone();
        let mut before = CMatrix::identity(1, 1);
        let mut after = CMatrix::identity(1, 1);
        if j > 1 {
            sites.push(c(j - 1));
            before = proj(1);
        }
        sites.push(c(j));
        if j < l {
            sites.push(c(j + 1));
            after = proj(0);
        }
        let with_clock = |g: &CMatrix, mid: &CMatrix| kron(&kron(&kron(g, &before), mid), &after);
        let ident = with_clock(&CMatrix::identity(gdim, gdim), &CMatrix::identity(2, 2));
        let fwd = with_clock(&gate.matrix, &flip(1, 0));
        let back = with_clock(&gate.matrix.adjoint(), &flip(0, 1));
        let m = (ident - fwd - back) * C64::new(0.5, 0.0);
        out.push(sorted_term(Part::Propagation, sites, m));
    }
    for i in 1..l {
        out.push(sorted_term(Part::Stabilizer, vec![c(i), c(i + 1)], kron(&proj(0), &proj(1))));
    }
    out
}

/// The four parts as full operators on proof ⊗ ancilla ⊗ clock.
#[derive(Clone, Debug)]
pub struct ClockHamiltonian {
    pub circuit: VerifierCircuit,
    pub h_in: HermitianOp,
    pub h_out: HermitianOp,
    pub h_prop: HermitianOp,
    pub h_stab: HermitianOp,
    pub total: HermitianOp,
}

impl ClockHamiltonian {
    /// `H_in + H_prop + H_stab`, whose kernel holds the history states.
    pub fn legal(&self) -> HermitianOp {
        self.h_in.add(&self.h_prop).add(&self.h_stab)
    }
}

pub fn build_clock_hamiltonian(circuit: &VerifierCircuit, cap: usize) -> Result<ClockHamiltonian> {
    let n = circuit.total_qubits();
    let dim = checked_pow(2, n, cap)?;
    let mut parts: BTreeMap<Part, CMatrix> = [Part::Input, Part::Output, Part::Propagation, Part::Stabilizer]
        .into_iter()
        .map(|p| (p, CMatrix::zeros(dim, dim)))
        .collect();
    for t in clock_terms(circuit) {
        embed_add_into(parts.get_mut(&t.part).expect("all parts present"), &t.matrix, &t.sites, n, 2);
    }
    let mut take = |p: Part| HermitianOp::from_matrix(parts.remove(&p).expect("present"));
    let h_in = take(Part::Input)?;
    let h_out = take(Part::Output)?;
    let h_prop = take(Part::Propagation)?;
    let h_stab = take(Part::Stabilizer)?;
    let total = h_in.add(&h_out).add(&h_prop).add(&h_stab);
    Ok(ClockHamiltonian { circuit: circuit.clone(), h_in, h_out, h_prop, h_stab, total })
}

/// Index of `|1^t 0^(L-t)>` on `L` clock qubits.
pub fn clock_index(t: usize, l: usize) -> usize {
    (1..=t).map(|j| 1usize << (l - j)).sum()
}

/// `Σ_t V_t⋯V_1 (|proof>|0>) ⊗ |unary(t)> / sqrt(L+1)`.
pub fn history_state(circuit: &VerifierCircuit, proof: &PureState, cap: usize) -> Result<PureState> {
    let n = circuit.total_qubits();
    let dim = checked_pow(2, n, cap)?;
    let l = circuit.len();
    let clock_dim = 1usize << l;
    let norm = C64::new(1.0 / ((l + 1) as f64).sqrt(), 0.0);
    let mut out = CVector::zeros(dim);
    let mut v = circuit.initial_state(proof)?;
    for t in 0..=l {
        if t > 0 {
            v = circuit.apply_gate(t - 1, &v);
        }
        let ci = clock_index(t, l);
        for (x, amp) in v.iter().enumerate() {
            out[x * clock_dim + ci] += amp * norm;
        }
    }
    PureState::normalized(vec![2; n], out)
}

/// Numeric spectral checks against the `ε/(L+1)` threshold.
#[derive(Clone, Debug, Serialize)]
pub struct KitaevReport {
    pub gates: usize,
    pub epsilon: f64,
    pub threshold: f64,
    pub lambda_min: f64,
    pub max_acceptance: f64,
    /// Energy of the history state built from the best proof.
    pub witness_energy: f64,
    /// Energy of that history state under `H_in + H_prop + H_stab`.
    pub witness_legal_energy: f64,
    /// `Some` when the circuit accepts with probability at least `1 - ε`.
    pub yes_check: Option<bool>,
    /// `Some` when the circuit accepts with probability at most `ε`.
    pub no_check: Option<bool>,
}

pub const KITAEV_TOL: f64 = 1e-9;

pub fn check_kitaev_bounds(circuit: &VerifierCircuit, epsilon: f64, cap: usize) -> Result<KitaevReport> {
    let ham = build_clock_hamiltonian(circuit, cap)?;
    let lambda_min = ham.total.lambda_min();
    let (acc, proof) = circuit.max_acceptance()?;
    let hist = history_state(circuit, &proof, cap)?;
    let witness_energy = ham.total.expectation(hist.amplitudes());
    let witness_legal_energy = ham.legal().expectation(hist.amplitudes());
    let threshold = epsilon / (circuit.len() + 1) as f64;
    let yes_check = (acc >= 1.0 - epsilon - KITAEV_TOL)
        .then_some(witness_energy <= threshold + KITAEV_TOL && lambda_min <= threshold + KITAEV_TOL);
    let no_check = (acc <= epsilon + KITAEV_TOL).then_some(lambda_min > threshold);
    Ok(KitaevReport {
        gates: circuit.len(),
        epsilon,
        threshold,
        lambda_min,
        max_acceptance: acc,
        witness_energy,
        witness_legal_energy,
        yes_check,
        no_check,
    })
}

/// Clock Hamiltonian emitted as an instance: terms on equal supports are summed,
/// then every term is divided by `scale` (at least 1) so each stays within
/// `0 ⪯ H_T ⪯ I`. No shift is applied, so `spectrum(H) = scale · spectrum(instance)`.
#[derive(Clone, Debug)]
pub struct ClockInstance {
    pub instance: LocalHamiltonianInstance,
    pub scale: f64,
}

pub fn clock_instance(circuit: &VerifierCircuit) -> Result<ClockInstance> {
    let mut merged: BTreeMap<Vec<usize>, CMatrix> = BTreeMap::new();
    for t in clock_terms(circuit) {
        merged.entry(t.sites.clone()).and_modify(|m| *m += &t.matrix).or_insert(t.matrix);
    }
    let ops: Vec<(Vec<usize>, HermitianOp)> =
        merged.into_iter().map(|(s, m)| HermitianOp::from_matrix(m).map(|op| (s, op))).collect::<Result<_>>()?;
    let scale = ops.iter().map(|(_, op)| op.lambda_max()).fold(1.0f64, f64::max);
    let k = ops.iter().map(|(s, _)| s.len()).max().unwrap_or(1);
    let terms =
        ops.into_iter().map(|(s, op)| LocalTerm::new(s, op.scale(1.0 / scale), 2)).collect::<Result<Vec<_>>>()?;
    let instance = LocalHamiltonianInstance::new(circuit.total_qubits(), 2, k, terms)?;
    Ok(ClockInstance { instance, scale })
}
