//! Dense statevector reference for small systems.
//!
//! The decoding protocol is simulated literally: EPR pairs, the scrambler on
//! the main register, the decoder on the primed register, projections onto
//! Bell pairs. Nothing here uses stabilizer shortcuts, so it serves as ground
//! truth for the formula-based evaluators.
//!
//! Qubit layout of a [`DenseState`] for an n-qubit scrambler with input
//! block A: main register `0..n`, primed register `n..2n`, R at
//! `2n..2n+|A|`, R′ after that. Basis index bit `q` is qubit `q`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::clifford::{CliffordTableau, Gate};
use crate::doped::{DopedCircuit, DopedGate};
use crate::pauli::SubsystemMask;
use crate::synth::DecoderBundle;

/// Largest statevector the oracle will allocate.
pub const MAX_DENSE_QUBITS: usize = 24;
/// Largest side of a bipartition for entropy evaluation.
pub const MAX_MARGINAL_QUBITS: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{needed} dense qubits exceed the cap of {cap}")]
    TooLarge { needed: usize, cap: usize },
    #[error("marginal on {0} qubits exceeds the cap of {MAX_MARGINAL_QUBITS}")]
    MarginalTooLarge(usize),
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },
    #[error("projection onto the readout Bell pairs has zero probability")]
    ImpossibleOutcome,
    #[error("qubit {0} listed twice")]
    RepeatedQubit(usize),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Register blocks of the decoding protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    R,
    A,
    B,
    BPrime,
    APrime,
    RPrime,
}

/// Matrices and in-place gate kernels.
pub mod dense {
    use super::*;

    const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

    #[inline]
    fn pairs(len: usize, q: usize) -> impl Iterator<Item = (usize, usize)> {
        let bit = 1usize << q;
        (0..len).filter(move |i| i & bit == 0).map(move |i| (i, i | bit))
    }

    pub fn apply_h(psi: &mut [Complex64], q: usize) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (i, j) in pairs(psi.len(), q) {
            let (a, b) = (psi[i], psi[j]);
            psi[i] = (a + b) * s;
            psi[j] = (a - b) * s;
        }
    }

    /// `diag(1, e^{iθ})` on qubit `q`.
    pub fn apply_phase(psi: &mut [Complex64], q: usize, theta: f64) {
        let w = Complex64::from_polar(1.0, theta);
        for (_, j) in pairs(psi.len(), q) {
            psi[j] *= w;
        }
    }

    pub fn apply_x(psi: &mut [Complex64], q: usize) {
        for (i, j) in pairs(psi.len(), q) {
            psi.swap(i, j);
        }
    }

    pub fn apply_y(psi: &mut [Complex64], q: usize) {
        for (i, j) in pairs(psi.len(), q) {
            let (a, b) = (psi[i], psi[j]);
            psi[i] = -I * b;
            psi[j] = I * a;
        }
    }

    pub fn apply_z(psi: &mut [Complex64], q: usize) {
        for (_, j) in pairs(psi.len(), q) {
            psi[j] = -psi[j];
        }
    }

    pub fn apply_cx(psi: &mut [Complex64], c: usize, t: usize) {
        let (cb, tb) = (1usize << c, 1usize << t);
        for i in 0..psi.len() {
            if i & cb != 0 && i & tb == 0 {
                psi.swap(i, i | tb);
            }
        }
    }

    pub fn apply_swap(psi: &mut [Complex64], a: usize, b: usize) {
        let (ab, bb) = (1usize << a, 1usize << b);
        for i in 0..psi.len() {
            if i & ab != 0 && i & bb == 0 {
                psi.swap(i, (i & !ab) | bb);
            }
        }
    }

    /// Applies `g` with every qubit index shifted by `offset`.
    pub fn apply_gate(psi: &mut [Complex64], g: &Gate, offset: usize) {
        use std::f64::consts::FRAC_PI_2;
        match *g {
            Gate::H(q) => apply_h(psi, q + offset),
            Gate::S(q) => apply_phase(psi, q + offset, FRAC_PI_2),
            Gate::X(q) => apply_x(psi, q + offset),
            Gate::Y(q) => apply_y(psi, q + offset),
            Gate::Z(q) => apply_z(psi, q + offset),
            Gate::CX(c, t) => apply_cx(psi, c + offset, t + offset),
            Gate::Swap(a, b) => apply_swap(psi, a + offset, b + offset),
        }
    }

    pub fn apply_doped(psi: &mut [Complex64], g: &DopedGate, offset: usize) {
        match g {
            DopedGate::Clifford(c) => apply_gate(psi, c, offset),
            DopedGate::T(q) => apply_phase(psi, q + offset, std::f64::consts::FRAC_PI_4),
        }
    }

    pub fn pauli_matrix(p: &crate::pauli::PauliString) -> DMatrix<Complex64> {
        let dim = 1usize << p.n();
        let (x, z) = (p.x_bits() as usize, p.z_bits() as usize);
        // letter phase i^k with Y = i·XZ, so X^x Z^z carries i^{k + #Y}
        let k = (p.phase() as u32 + (x & z).count_ones()) % 4;
        let global = I.powu(k);
        let mut m = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            let sign = if (z & b).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            m[(b ^ x, b)] = global * sign;
        }
        m
    }

    pub fn t_matrix() -> DMatrix<Complex64> {
        let mut m = DMatrix::identity(2, 2);
        m[(1, 1)] = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        m
    }

    fn matrix_from_columns(n: usize, apply: impl Fn(&mut [Complex64])) -> DMatrix<Complex64> {
        let dim = 1usize << n;
        let mut m = DMatrix::zeros(dim, dim);
        let mut col = vec![Complex64::default(); dim];
        for b in 0..dim {
            col.iter_mut().for_each(|c| *c = Complex64::default());
            col[b] = Complex64::new(1.0, 0.0);
            apply(&mut col);
            for (r, v) in col.iter().enumerate() {
                m[(r, b)] = *v;
            }
        }
        m
    }

    /// Unitary of a Clifford gate list in time order.
    pub fn circuit_matrix(n: usize, gates: &[Gate]) -> DMatrix<Complex64> {
        matrix_from_columns(n, |psi| {
            for g in gates {
                apply_gate(psi, g, 0);
            }
        })
    }

    pub fn gate_matrix(n: usize, g: &Gate) -> DMatrix<Complex64> {
        circuit_matrix(n, std::slice::from_ref(g))
    }

    pub fn doped_matrix(c: &DopedCircuit) -> DMatrix<Complex64> {
        matrix_from_columns(c.n(), |psi| {
            for g in c.gates() {
                apply_doped(psi, g, 0);
            }
        })
    }

    /// `a = e^{iφ} b` for some global phase φ.
    pub fn equal_up_to_phase(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tol: f64) -> bool {
        if a.shape() != b.shape() {
            return false;
        }
        let Some((idx, _)) = b.iter().enumerate().max_by(|x, y| x.1.norm().total_cmp(&y.1.norm())) else {
            return true;
        };
        if b[idx].norm() < tol {
            return a.norm() < tol;
        }
        let phase = a[idx] / b[idx];
        (a - b * phase).norm() < tol && (phase.norm() - 1.0).abs() < tol
    }

    /// Pauli-averaged OTOC by direct matrix products.
    pub fn otoc(c: &DopedCircuit, x: &SubsystemMask, y: &SubsystemMask) -> f64 {
        let u = doped_matrix(c);
        let ud = u.adjoint();
        let dim = (1usize << c.n()) as f64;
        let px: Vec<_> = crate::pauli::PauliString::enumerate_on(x).map(|p| pauli_matrix(&p)).collect();
        let mut total = 0.0;
        let mut count = 0usize;
        for py in crate::pauli::PauliString::enumerate_on(y) {
            let h = &ud * pauli_matrix(&py) * &u;
            for m in &px {
                let prod = m * &h * m * &h;
                total += prod.trace().re / dim;
                count += 1;
            }
        }
        total / count as f64
    }
}

/// Statevector of the decoding protocol with named register blocks.
#[derive(Clone, Debug)]
pub struct DenseState {
    n: usize,
    a_qubits: Vec<usize>,
    amplitudes: Vec<Complex64>,
}

impl DenseState {
    pub fn qubit_count(&self) -> usize {
        2 * self.n + 2 * self.a_qubits.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Dense qubit indices of a block.
    pub fn block(&self, b: Block) -> Vec<usize> {
        let n = self.n;
        let a = self.a_qubits.len();
        let b_qubits: Vec<usize> = (0..n).filter(|q| !self.a_qubits.contains(q)).collect();
        match b {
            Block::R => (2 * n..2 * n + a).collect(),
            Block::RPrime => (2 * n + a..2 * n + 2 * a).collect(),
            Block::A => self.a_qubits.clone(),
            Block::APrime => self.a_qubits.iter().map(|q| q + n).collect(),
            Block::B => b_qubits,
            Block::BPrime => b_qubits.iter().map(|q| q + n).collect(),
        }
    }

    /// Dense indices of main-register qubits in `mask`.
    pub fn main_qubits(&self, mask: &SubsystemMask) -> Vec<usize> {
        mask.qubits()
    }

    /// Dense indices of primed-register qubits in `mask`.
    pub fn primed_qubits(&self, mask: &SubsystemMask) -> Vec<usize> {
        mask.qubits().into_iter().map(|q| q + self.n).collect()
    }

    /// Probability that every `(a_k, b_k)` pair is in the Bell state
    /// `(|00⟩ + |11⟩)/√2`.
    pub fn bell_overlap(&self, pairs: &[(usize, usize)]) -> f64 {
        let mut psi = self.amplitudes.clone();
        project_bell(&mut psi, pairs)
    }
}

/// Projects in place onto Bell pairs (after a CX/H basis change); returns
/// the Born probability. The surviving amplitudes have those qubits in |0⟩.
fn project_bell(psi: &mut [Complex64], pairs: &[(usize, usize)]) -> f64 {
    let mut mask = 0usize;
    for &(a, b) in pairs {
        dense::apply_cx(psi, a, b);
        dense::apply_h(psi, a);
        mask |= (1 << a) | (1 << b);
    }
    let mut prob = 0.0;
    for (i, v) in psi.iter_mut().enumerate() {
        if i & mask != 0 {
            *v = Complex64::default();
        } else {
            prob += v.norm_sqr();
        }
    }
    // Undo the basis change so the survivors sit in the Bell state again.
    for &(a, b) in pairs.iter().rev() {
        dense::apply_h(psi, a);
        dense::apply_cx(psi, a, b);
    }
    prob
}

/// `U_t` applied to `A ∪ B` of `|AR⟩|BB′⟩`; A′ and R′ start in |0⟩.
pub fn build_scrambled_state(c: &DopedCircuit, a: &SubsystemMask) -> Result<DenseState> {
    if a.n() != c.n() {
        return Err(OracleError::DimensionMismatch { left: c.n(), right: a.n() });
    }
    let n = c.n();
    let a_qubits = a.qubits();
    let total = 2 * n + 2 * a_qubits.len();
    if total > MAX_DENSE_QUBITS {
        return Err(OracleError::TooLarge {
            needed: total,
            cap: MAX_DENSE_QUBITS,
        });
    }
    let mut psi = vec![Complex64::default(); 1 << total];
    psi[0] = Complex64::new(1.0, 0.0);
    for (k, &q) in a_qubits.iter().enumerate() {
        let r = 2 * n + k;
        dense::apply_h(&mut psi, q);
        dense::apply_cx(&mut psi, q, r);
    }
    for q in (0..n).filter(|q| !a.contains(*q)) {
        dense::apply_h(&mut psi, q);
        dense::apply_cx(&mut psi, q, q + n);
    }
    for g in c.compressed().gates() {
        dense::apply_doped(&mut psi, g, 0);
    }
    Ok(DenseState {
        n,
        a_qubits,
        amplitudes: psi,
    })
}

/// Decoder handed to [`decode_and_project`].
#[derive(Clone, Copy, Debug)]
pub enum Decoder<'a> {
    /// A learned bundle approximating the scrambler `U`; the protocol applies
    /// the complex conjugate of its composite.
    Bundle(&'a DecoderBundle),
    /// A raw Clifford `W` applied as `W^T`; `W = U†` is the ideal decoder.
    Tableau(&'a CliffordTableau),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub fidelity: f64,
    pub pi_v: f64,
}

/// Runs the decoding protocol on a copy of `state`: prepares `|A′R′⟩`,
/// applies the decoder to the primed register, projects onto `|DD′⟩` and
/// evaluates the overlap with `|RR′⟩`.
pub fn decode_and_project(state: &DenseState, decoder: Decoder<'_>, d: &SubsystemMask) -> Result<Projection> {
    let n = state.n;
    if d.n() != n {
        return Err(OracleError::DimensionMismatch { left: n, right: d.n() });
    }
    let applied = match decoder {
        Decoder::Bundle(b) => {
            let comp = b.composite();
            if comp.n() != n {
                return Err(OracleError::DimensionMismatch { left: n, right: comp.n() });
            }
            comp.complex_conjugate()
        }
        Decoder::Tableau(w) => {
            if w.n() != n {
                return Err(OracleError::DimensionMismatch { left: n, right: w.n() });
            }
            w.transpose()
        }
    };
    let mut psi = state.amplitudes.clone();
    let r = state.block(Block::R);
    let rp = state.block(Block::RPrime);
    let ap = state.block(Block::APrime);
    for (&rq, &aq) in rp.iter().zip(&ap) {
        dense::apply_h(&mut psi, rq);
        dense::apply_cx(&mut psi, rq, aq);
    }
    for g in applied.to_circuit() {
        dense::apply_gate(&mut psi, &g, n);
    }
    let dd: Vec<(usize, usize)> = d.qubits().into_iter().map(|q| (q, q + n)).collect();
    let pi_v = project_bell(&mut psi, &dd);
    if pi_v <= 1e-14 {
        return Err(OracleError::ImpossibleOutcome);
    }
    let rr: Vec<(usize, usize)> = r.iter().copied().zip(rp.iter().copied()).collect();
    let joint = project_bell(&mut psi, &rr);
    Ok(Projection {
        fidelity: (joint / pi_v).clamp(0.0, 1.0),
        pi_v: pi_v.min(1.0),
    })
}

/// Von Neumann entropy (bits) of the marginal on `qubits` of a pure state.
pub fn entropy(psi: &[Complex64], total: usize, qubits: &[usize]) -> Result<f64> {
    let mut sorted = qubits.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(OracleError::RepeatedQubit(w[0]));
        }
    }
    let side: Vec<usize> = if sorted.len() * 2 <= total {
        sorted
    } else {
        (0..total).filter(|q| sorted.binary_search(q).is_err()).collect()
    };
    let k = side.len();
    if k == 0 {
        return Ok(0.0);
    }
    if k > MAX_MARGINAL_QUBITS {
        return Err(OracleError::MarginalTooLarge(k));
    }
    let rest: Vec<usize> = (0..total).filter(|q| !side.contains(q)).collect();
    let dim = 1usize << k;
    let cols = 1usize << rest.len();
    let mut m = DMatrix::<Complex64>::zeros(dim, cols);
    for (i, amp) in psi.iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let mut r = 0usize;
        for (j, &q) in side.iter().enumerate() {
            r |= ((i >> q) & 1) << j;
        }
        let mut c = 0usize;
        for (j, &q) in rest.iter().enumerate() {
            c |= ((i >> q) & 1) << j;
        }
        m[(r, c)] = *amp;
    }
    let rho = &m * m.adjoint();
    let eig = SymmetricEigen::new(rho);
    Ok(eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-14)
        .map(|&l| -l * l.log2())
        .sum())
}

/// Mutual information `I(X : Y)` in bits between two disjoint qubit sets.
pub fn mutual_information(state: &DenseState, x: &[usize], y: &[usize]) -> Result<f64> {
    let total = state.qubit_count();
    let mut xy = x.to_vec();
    xy.extend_from_slice(y);
    let sx = entropy(&state.amplitudes, total, x)?;
    let sy = entropy(&state.amplitudes, total, y)?;
    let sxy = entropy(&state.amplitudes, total, &xy)?;
    Ok(sx + sy - sxy)
}
