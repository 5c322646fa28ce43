//! Exact fidelity evaluation through Pauli-sum trace algebra.
//!
//! With `Ũ = D†U`, `Ṽ = R D† V′` and `χ(P) = 2^{-n} tr(Ũ†PŨ · Ṽ†PṼ)`, the
//! decoding protocol satisfies
//!
//! ```text
//! N1 = 4^{|A|} π F = 4^{-|D|} Σ_{P∈P_D} χ(P)
//! N2 = 4^{|A|} π   = 4^{|A|-|D|} Σ_{P∈P_D} χ(P) [Ṽ†PṼ acts trivially on A]
//! ```
//!
//! and `F = N1 / N2`. Since `Ṽ†PṼ` is a single signed Pauli, `χ(P)` is the
//! signed coefficient of that Pauli in the propagated sum, so both sums are
//! computed exactly.

use thiserror::Error;

use crate::clifford::CliffordTableau;
use crate::doped::{propagate, DopedCircuit, DopedError, Dyadic, PauliSum};
use crate::pauli::{PauliString, SubsystemMask};
use crate::synth::DecoderBundle;

/// Largest `4^|D|` evaluated exactly.
pub const FORMULA_CAP: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FidelityError {
    #[error(transparent)]
    Doped(#[from] DopedError),
    #[error("exact sum over 4^{0} readout Paulis exceeds the cap")]
    TooLarge(usize),
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },
    #[error("normalisation vanishes: the readout projection is impossible")]
    ZeroNormalisation,
    #[error("decrypter condition fails on generator {0}")]
    DecrypterViolated(PauliString),
}

pub type Result<T> = std::result::Result<T, FidelityError>;

/// Exact evaluation result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormulaFidelity {
    pub fidelity: f64,
    pub pi_v: f64,
    pub n1: f64,
    pub n2: f64,
}

/// Caches `Ũ†PŨ` for every `P ∈ P_D`, so that many decoders sharing the
/// diagonalizer can be evaluated cheaply.
pub struct FormulaEvaluator {
    a: SubsystemMask,
    d: SubsystemMask,
    diag_inv: CliffordTableau,
    propagated: Vec<(PauliString, PauliSum)>,
}

impl FormulaEvaluator {
    pub fn new(c: &DopedCircuit, diagonalizer: &CliffordTableau, a: &SubsystemMask, d: &SubsystemMask) -> Result<Self> {
        let n = c.n();
        for m in [a.n(), d.n(), diagonalizer.n()] {
            if m != n {
                return Err(FidelityError::DimensionMismatch { left: n, right: m });
            }
        }
        if 1u64.checked_shl(2 * d.len() as u32).unwrap_or(u64::MAX) > FORMULA_CAP {
            return Err(FidelityError::TooLarge(d.len()));
        }
        let diag_inv = diagonalizer.inverse();
        let propagated = PauliString::enumerate_on(d)
            .map(|p| {
                let moved = diag_inv.conjugate(&p).expect("same register");
                Ok((p, propagate(c, &moved)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            a: *a,
            d: *d,
            diag_inv,
            propagated,
        })
    }

    fn chi(&self, idx: usize, randomizer: &CliffordTableau, decrypter: &CliffordTableau) -> (Dyadic, bool) {
        let (p, sum) = &self.propagated[idx];
        let q = decrypter.conjugate_unchecked(&self.diag_inv.conjugate_unchecked(&randomizer.conjugate_unchecked(p)));
        let c = sum.coefficient(&q);
        let c = if q.phase() == 2 { -c } else { c };
        (c, q.support() & self.a.bits() == 0)
    }

    /// Exact `(Σ χ, Σ χ·[trivial on A])` over the Paulis of `P_D`
    /// selected by `keep`.
    fn sums(&self, randomizer: &CliffordTableau, decrypter: &CliffordTableau, keep: impl Fn(&PauliString) -> bool) -> (Dyadic, Dyadic) {
        let mut s1 = Dyadic::ZERO;
        let mut s2 = Dyadic::ZERO;
        for (i, (p, _)) in self.propagated.iter().enumerate() {
            if !keep(p) {
                continue;
            }
            let (c, trivial_on_a) = self.chi(i, randomizer, decrypter);
            s1 = s1 + c;
            if trivial_on_a {
                s2 = s2 + c;
            }
        }
        (s1, s2)
    }

    /// `(N1, N2)`, defined even when the projection is impossible.
    pub fn normalisations(&self, randomizer: &CliffordTableau, decrypter: &CliffordTableau) -> (f64, f64) {
        let (s1, s2) = self.sums(randomizer, decrypter, |_| true);
        let (a, d) = (self.a.len() as i32, self.d.len() as i32);
        (s1.to_f64() * 4f64.powi(-d), s2.to_f64() * 4f64.powi(a - d))
    }

    pub fn evaluate(&self, randomizer: &CliffordTableau, decrypter: &CliffordTableau) -> Result<FormulaFidelity> {
        let (n1, n2) = self.normalisations(randomizer, decrypter);
        if n2 == 0.0 {
            return Err(FidelityError::ZeroNormalisation);
        }
        let a = self.a.len() as i32;
        Ok(FormulaFidelity {
            fidelity: n1 / n2,
            pi_v: n2 * 4f64.powi(-a),
            n1,
            n2,
        })
    }

    pub fn evaluate_bundle(&self, bundle: &DecoderBundle) -> Result<FormulaFidelity> {
        self.evaluate(&bundle.randomizer, &bundle.decrypter)
    }

    /// Fidelity with the randomizer replaced by its average: only `P_E`
    /// survives in both sums.
    pub fn evaluate_post_randomizer(&self, decrypter: &CliffordTableau, e: &SubsystemMask) -> Result<f64> {
        let id = CliffordTableau::identity(self.diag_inv.n());
        let (s1, s2) = self.sums(&id, decrypter, |p| e.supports(p));
        if s2.is_zero() {
            return Err(FidelityError::ZeroNormalisation);
        }
        Ok(s1.to_f64() / (s2.to_f64() * 4f64.powi(self.a.len() as i32)))
    }
}

/// `F(V)` for a learned decoder, evaluated exactly.
pub fn fidelity_formula(c: &DopedCircuit, bundle: &DecoderBundle, a: &SubsystemMask) -> Result<FormulaFidelity> {
    FormulaEvaluator::new(c, &bundle.diagonalizer, a, &bundle.d)?.evaluate_bundle(bundle)
}

/// Fidelity after averaging over the randomizer, `4^{-|A|} / Ω_AE(D†U)`
/// when the decrypter condition holds on E. Checks that condition first.
pub fn fidelity_post_randomizer(c: &DopedCircuit, bundle: &DecoderBundle, a: &SubsystemMask) -> Result<f64> {
    let n = c.n();
    let diag_inv = bundle.diagonalizer.inverse();
    for q in bundle.e.qubits() {
        for gen in [PauliString::x_on(n, q), PauliString::z_on(n, q)] {
            let moved = diag_inv.conjugate(&gen).expect("same register");
            let actual = propagate(c, &moved)?.as_pauli();
            let mimic = bundle.decrypter.conjugate(&moved).expect("same register");
            if actual != Some(mimic) {
                return Err(FidelityError::DecrypterViolated(gen));
            }
        }
    }
    FormulaEvaluator::new(c, &bundle.diagonalizer, a, &bundle.d)?.evaluate_post_randomizer(&bundle.decrypter, &bundle.e)
}

/// Lower bound `1 / (1 + 2^{2|A| + t − 2|D|})` on the decoding fidelity.
pub fn fidelity_bound(a_size: usize, t: usize, d_size: usize) -> f64 {
    let exp = 2 * a_size as i64 + t as i64 - 2 * d_size as i64;
    1.0 / (1.0 + (exp as f64).exp2())
}

/// Predicted probability `1 − 2^{t − 2(n − |D|)}` that learning succeeds.
pub fn success_floor(n: usize, t: usize, d_size: usize) -> f64 {
    let exp = t as i64 - 2 * (n as i64 - d_size as i64);
    1.0 - (exp as f64).exp2()
}

/// Fidelity `1 / (1 + 2^{2|A| − 2|E|})` of an ideal scrambler.
pub fn ideal_fidelity(a_size: usize, e_size: usize) -> f64 {
    let exp = 2 * a_size as i64 - 2 * e_size as i64;
    1.0 / (1.0 + (exp as f64).exp2())
}

/// Randomizer average of N1, `2^{-2|F|}`.
pub fn predicted_n1(f_size: usize) -> f64 {
    4f64.powi(-(f_size as i32))
}

/// Randomizer average of N2 for a scrambler, `2^{-2|D|}(2^{2|E|} + 2^{2|A|} − 1)`.
pub fn predicted_n2(a_size: usize, d_size: usize, e_size: usize) -> f64 {
    4f64.powi(-(d_size as i32)) * (4f64.powi(e_size as i32) + 4f64.powi(a_size as i32) - 1.0)
}
