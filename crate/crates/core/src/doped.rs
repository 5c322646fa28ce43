//! Clifford circuits doped with T gates.
//!
//! The adjoint action `U† P U` of a doped circuit on a Pauli string is a
//! real combination of Pauli strings. [`propagate`] computes it exactly:
//! coefficients live in `Z[√2][1/2]` ([`Dyadic`]), so deciding whether a
//! Pauli is preserved never depends on floating-point tolerance.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{self, CliffordError, CliffordTableau, Gate};
use crate::pauli::{PauliString, SubsystemMask};

/// Largest T count accepted by the samplers.
pub const MAX_T: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DopedError {
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },
    #[error("circuit contains {0} T gates; not a Clifford")]
    NotClifford(usize),
    #[error("unsatisfiable parameters: {0}")]
    Unsatisfiable(String),
    #[error("exact average needs {needed} terms, above the cap of {cap}, and sampling is disabled")]
    SizeExceeded { needed: u128, cap: u128 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, DopedError>;

/// Exact number `(a + b·√2) / 2^k`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Dyadic {
    a: i64,
    b: i64,
    k: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { a: 0, b: 0, k: 0 };
    pub const ONE: Dyadic = Dyadic { a: 1, b: 0, k: 0 };

    pub fn new(a: i64, b: i64, k: u32) -> Self {
        Self { a, b, k }.normalized()
    }

    fn normalized(mut self) -> Self {
        if self.a == 0 && self.b == 0 {
            return Self::ZERO;
        }
        while self.k > 0 && self.a % 2 == 0 && self.b % 2 == 0 {
            self.a /= 2;
            self.b /= 2;
            self.k -= 1;
        }
        self
    }

    pub fn parts(&self) -> (i64, i64, u32) {
        (self.a, self.b, self.k)
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0 && self.b == 0
    }

    pub fn is_unit_magnitude(&self) -> bool {
        self.b == 0 && self.k == 0 && self.a.abs() == 1
    }

    /// Division by `√2`.
    pub fn div_sqrt2(self) -> Self {
        Self {
            a: 2 * self.b,
            b: self.a,
            k: self.k + 1,
        }
        .normalized()
    }

    pub fn to_f64(&self) -> f64 {
        (self.a as f64 + self.b as f64 * std::f64::consts::SQRT_2) / (self.k as f64).exp2()
    }
}

impl std::ops::Neg for Dyadic {
    type Output = Self;

    fn neg(self) -> Self {
        Self {
            a: -self.a,
            b: -self.b,
            k: self.k,
        }
    }
}

impl std::ops::Add for Dyadic {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        let k = self.k.max(other.k);
        let (s1, s2) = (1i64 << (k - self.k), 1i64 << (k - other.k));
        Self {
            a: self.a * s1 + other.a * s2,
            b: self.b * s1 + other.b * s2,
            k,
        }
        .normalized()
    }
}

impl std::ops::Mul for Dyadic {
    type Output = Self;

    fn mul(self, other: Self) -> Self {
        Self {
            a: self.a * other.a + 2 * self.b * other.b,
            b: self.a * other.b + self.b * other.a,
            k: self.k + other.k,
        }
        .normalized()
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} + {}√2)/2^{}", self.a, self.b, self.k)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Real combination of Hermitian Pauli strings, optionally times a global `i`.
///
/// Term keys are unsigned (phase-0) strings; signs live in the coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliSum {
    n: usize,
    imaginary: bool,
    terms: Vec<(PauliString, Dyadic)>,
}

impl PauliSum {
    /// The single string `p`, with its phase folded into the coefficient.
    pub fn from_pauli(p: &PauliString) -> Self {
        let (imaginary, c) = match p.phase() {
            0 => (false, Dyadic::ONE),
            1 => (true, Dyadic::ONE),
            2 => (false, -Dyadic::ONE),
            _ => (true, -Dyadic::ONE),
        };
        Self {
            n: p.n(),
            imaginary,
            terms: vec![(p.unsigned(), c)],
        }
    }

    fn from_map(n: usize, imaginary: bool, map: BTreeMap<PauliString, Dyadic>) -> Self {
        Self {
            n,
            imaginary,
            terms: map.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Whether the whole sum carries a factor `i`.
    pub fn is_imaginary(&self) -> bool {
        self.imaginary
    }

    pub fn terms(&self) -> &[(PauliString, Dyadic)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Real coefficient of the unsigned string `p` (zero when absent).
    pub fn coefficient(&self, p: &PauliString) -> Dyadic {
        let key = p.unsigned();
        self.terms
            .binary_search_by(|(q, _)| q.cmp(&key))
            .map(|i| self.terms[i].1)
            .unwrap_or(Dyadic::ZERO)
    }

    /// Sum of squared coefficients.
    pub fn norm_squared(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.to_f64().powi(2)).sum()
    }

    /// The signed Pauli string, when the sum is one term of unit magnitude.
    pub fn as_pauli(&self) -> Option<PauliString> {
        match self.terms.as_slice() {
            [(p, c)] if c.is_unit_magnitude() => {
                let sign = if c.parts().0 < 0 { 2 } else { 0 };
                Some(p.with_phase(sign + if self.imaginary { 1 } else { 0 }))
            }
            _ => None,
        }
    }

    fn map_clifford(&self, tab: &CliffordTableau) -> Self {
        let mut map = BTreeMap::new();
        for (p, c) in &self.terms {
            let q = tab.conjugate_unchecked(p);
            let c = if q.phase() == 2 { -*c } else { *c };
            map.insert(q.unsigned(), c);
        }
        Self::from_map(self.n, self.imaginary, map)
    }

    fn map_gate(&self, g: &Gate) -> Self {
        let mut map = BTreeMap::new();
        for (p, c) in &self.terms {
            let q = g.conjugate_pauli(p);
            let c = if q.phase() == 2 { -*c } else { *c };
            map.insert(q.unsigned(), c);
        }
        Self::from_map(self.n, self.imaginary, map)
    }

    /// `T† (·) T` on qubit `q`, using `T† σ T = (σ − i σ Z_q)/√2` for strings
    /// anticommuting with `Z_q`.
    fn map_t(&self, q: usize) -> Self {
        let zq = PauliString::z_on(self.n, q);
        let mut map: BTreeMap<PauliString, Dyadic> = BTreeMap::new();
        let mut add = |p: PauliString, c: Dyadic| {
            let e = map.entry(p).or_insert(Dyadic::ZERO);
            *e = *e + c;
        };
        for (p, c) in &self.terms {
            if (p.x_bits() >> q) & 1 == 0 {
                add(*p, *c);
                continue;
            }
            let half = c.div_sqrt2();
            add(*p, half);
            let partner = p.mul_unchecked(&zq).times_i_pow(3);
            let pc = if partner.phase() == 2 { -half } else { half };
            add(partner.unsigned(), pc);
        }
        Self::from_map(self.n, self.imaginary, map)
    }
}

impl fmt::Display for PauliSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        if self.imaginary {
            f.write_str("i·(")?;
        }
        for (i, (p, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{}·{}", c.to_f64(), &p.to_string()[1..])?;
        }
        if self.imaginary {
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DopedGate {
    Clifford(Gate),
    T(usize),
}

impl fmt::Display for DopedGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DopedGate::Clifford(g) => write!(f, "{g}"),
            DopedGate::T(q) => write!(f, "T {q}"),
        }
    }
}

#[derive(Debug)]
enum Step {
    Clifford(CliffordTableau),
    T(usize),
}

/// Gate list of Clifford and T gates in time order (first gate acts first).
pub struct DopedCircuit {
    n: usize,
    gates: Vec<DopedGate>,
    compiled: OnceLock<Arc<Vec<Step>>>,
}

impl Clone for DopedCircuit {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            gates: self.gates.clone(),
            compiled: self.compiled.clone(),
        }
    }
}

impl PartialEq for DopedCircuit {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.gates == other.gates
    }
}

impl fmt::Debug for DopedCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DopedCircuit")
            .field("n", &self.n)
            .field("gates", &self.gates.len())
            .field("t", &self.t_count())
            .finish()
    }
}

impl DopedCircuit {
    pub fn new(n: usize, gates: Vec<DopedGate>) -> Result<Self> {
        for g in &gates {
            match g {
                DopedGate::Clifford(c) => c.check(n)?,
                DopedGate::T(q) if *q >= n => {
                    return Err(CliffordError::QubitOutOfRange { index: *q, n }.into());
                }
                DopedGate::T(_) => {}
            }
        }
        Ok(Self {
            n,
            gates,
            compiled: OnceLock::new(),
        })
    }

    pub fn from_clifford_gates(n: usize, gates: &[Gate]) -> Result<Self> {
        Self::new(n, gates.iter().map(|g| DopedGate::Clifford(*g)).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, Vec::new()).expect("empty circuit")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[DopedGate] {
        &self.gates
    }

    pub fn t_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, DopedGate::T(_))).count()
    }

    /// Circuit running `self` and then `next`.
    pub fn then(&self, next: &DopedCircuit) -> Result<Self> {
        if self.n != next.n {
            return Err(DopedError::DimensionMismatch {
                left: self.n,
                right: next.n,
            });
        }
        let mut gates = self.gates.clone();
        gates.extend(next.gates.iter().copied());
        Self::new(self.n, gates)
    }

    pub fn to_tableau(&self) -> Result<CliffordTableau> {
        let t = self.t_count();
        if t > 0 {
            return Err(DopedError::NotClifford(t));
        }
        let gates: Vec<Gate> = self
            .gates
            .iter()
            .map(|g| match g {
                DopedGate::Clifford(c) => *c,
                DopedGate::T(_) => unreachable!(),
            })
            .collect();
        Ok(CliffordTableau::from_circuit(self.n, &gates)?)
    }

    fn steps(&self) -> &Arc<Vec<Step>> {
        self.compiled.get_or_init(|| {
            let mut steps = Vec::new();
            let mut seg: Option<CliffordTableau> = None;
            for g in &self.gates {
                match g {
                    DopedGate::Clifford(c) => {
                        seg.get_or_insert_with(|| CliffordTableau::identity(self.n))
                            .apply_gate(*c)
                            .expect("validated on construction");
                    }
                    DopedGate::T(q) => {
                        if let Some(t) = seg.take() {
                            steps.push(Step::Clifford(t));
                        }
                        steps.push(Step::T(*q));
                    }
                }
            }
            if let Some(t) = seg.take() {
                steps.push(Step::Clifford(t));
            }
            Arc::new(steps)
        })
    }

    /// Equivalent gate list with each Clifford stretch resynthesised from its
    /// tableau (equal up to global phase, usually much shorter).
    pub fn compressed(&self) -> DopedCircuit {
        let mut gates = Vec::new();
        for step in self.steps().iter() {
            match step {
                Step::Clifford(t) => gates.extend(t.to_circuit().into_iter().map(DopedGate::Clifford)),
                Step::T(q) => gates.push(DopedGate::T(*q)),
            }
        }
        DopedCircuit::new(self.n, gates).expect("same register")
    }

    /// Serialises as a `# qubits N` header followed by one gate per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("# qubits {}\n", self.n);
        for g in &self.gates {
            out.push_str(&g.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses the text format. The register size comes from a `# qubits N`
    /// header when present, else from `n`.
    pub fn from_text(text: &str, n: Option<usize>) -> Result<Self> {
        let mut size = n;
        let mut gates = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# qubits") {
                let v = rest.trim().parse::<usize>().map_err(|_| DopedError::Parse {
                    line: i + 1,
                    message: format!("bad qubit count {rest:?}"),
                })?;
                size = Some(v);
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let g = if let Some(q) = line.strip_prefix("T ") {
                let q = q.trim().parse::<usize>().map_err(|_| DopedError::Parse {
                    line: i + 1,
                    message: format!("bad qubit index in {line:?}"),
                })?;
                DopedGate::T(q)
            } else {
                DopedGate::Clifford(line.parse::<Gate>().map_err(|message| DopedError::Parse { line: i + 1, message })?)
            };
            gates.push(g);
        }
        let n = size.ok_or_else(|| DopedError::Parse {
            line: 0,
            message: "register size missing (no `# qubits N` header)".into(),
        })?;
        Self::new(n, gates)
    }
}

/// Exact `U† p U` for the doped circuit `U`.
pub fn propagate(c: &DopedCircuit, p: &PauliString) -> Result<PauliSum> {
    if p.n() != c.n {
        return Err(DopedError::DimensionMismatch {
            left: c.n,
            right: p.n(),
        });
    }
    let mut sum = PauliSum::from_pauli(p);
    for step in c.steps().iter().rev() {
        sum = match step {
            Step::Clifford(t) => sum.map_clifford(t),
            Step::T(q) => sum.map_t(*q),
        };
    }
    Ok(sum)
}

/// Propagation gate by gate without segment compilation; slow reference.
pub fn propagate_gatewise(c: &DopedCircuit, p: &PauliString) -> Result<PauliSum> {
    if p.n() != c.n {
        return Err(DopedError::DimensionMismatch {
            left: c.n,
            right: p.n(),
        });
    }
    let mut sum = PauliSum::from_pauli(p);
    for g in c.gates.iter().rev() {
        sum = match g {
            DopedGate::Clifford(g) => sum.map_gate(g),
            DopedGate::T(q) => sum.map_t(*q),
        };
    }
    Ok(sum)
}

/// The signed image `U† p U` when it is a single Pauli string.
pub fn is_preserved(c: &DopedCircuit, p: &PauliString) -> Option<PauliString> {
    propagate(c, p).ok()?.as_pauli()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OtocOptions {
    /// Largest `4^{|X|+|Y|}` evaluated as an exact sum.
    pub exact_cap: u128,
    pub allow_sampling: bool,
    pub draws: usize,
    pub seed: u64,
}

impl Default for OtocOptions {
    fn default() -> Self {
        Self {
            exact_cap: 1 << 16,
            allow_sampling: true,
            draws: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtocEstimate {
    pub value: f64,
    /// Zero for exact sums.
    pub std_err: f64,
    pub exact: bool,
    pub samples: usize,
}

fn otoc_term(c: &DopedCircuit, x: &SubsystemMask, py: &PauliString) -> f64 {
    // Averaging P_X over the full local group kills every term that acts
    // non-trivially on X.
    let sum = propagate(c, py).expect("same register");
    sum.terms()
        .iter()
        .filter(|(q, _)| q.support() & x.bits() == 0)
        .map(|(_, coef)| coef.to_f64().powi(2))
        .sum()
}

/// Pauli-averaged OTOC `2^{-n} ⟨tr(P_X U†P_Y U P_X U†P_Y U)⟩`.
pub fn otoc(c: &DopedCircuit, x: &SubsystemMask, y: &SubsystemMask, opts: &OtocOptions) -> Result<OtocEstimate> {
    for m in [x, y] {
        if m.n() != c.n {
            return Err(DopedError::DimensionMismatch {
                left: c.n,
                right: m.n(),
            });
        }
    }
    let needed = 1u128 << (2 * (x.len() + y.len())).min(127);
    if needed <= opts.exact_cap {
        let terms: Vec<PauliString> = PauliString::enumerate_on(y).collect();
        let total: f64 = terms.par_iter().map(|py| otoc_term(c, x, py)).sum();
        return Ok(OtocEstimate {
            value: total / terms.len() as f64,
            std_err: 0.0,
            exact: true,
            samples: terms.len(),
        });
    }
    if !opts.allow_sampling {
        return Err(DopedError::SizeExceeded {
            needed,
            cap: opts.exact_cap,
        });
    }
    let qubits = y.qubits();
    let draws = opts.draws.max(1);
    let values: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let mut py = PauliString::identity(c.n);
            for &q in &qubits {
                let letter = ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)];
                py = py.mul_unchecked(&PauliString::single(c.n, q, letter).expect("in range"));
            }
            otoc_term(c, x, &py.unsigned())
        })
        .collect();
    let mean = values.iter().sum::<f64>() / draws as f64;
    let var = if draws > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64
    } else {
        0.0
    };
    Ok(OtocEstimate {
        value: mean,
        std_err: (var / draws as f64).sqrt(),
        exact: false,
        samples: draws,
    })
}

/// Plateau value of the OTOC for a scrambler.
pub fn scrambling_reference(a_len: usize, d_len: usize) -> f64 {
    let (a, d) = (a_len as i32, d_len as i32);
    4f64.powi(-a) + 4f64.powi(-d) - 4f64.powi(-a - d)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScramblingReport {
    pub otoc: OtocEstimate,
    pub reference: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub is_scrambler: bool,
    /// `I(R : D B′)` in bits (a one-qubit Bell pair carries 2 bits).
    pub mutual_information_bits: f64,
    /// Same quantity in units where `|A|` is the maximum.
    pub mutual_information: f64,
    /// `|A|` minus the normalised mutual information.
    pub epsilon: f64,
}

/// Compares `Ω_AD` against the scrambling plateau.
///
/// For Clifford circuits `2^{-I(R:DB′)} = Ω_AD` holds exactly with the
/// mutual information in bits; for doped circuits it is the Rényi-2 version.
pub fn is_scrambler(
    c: &DopedCircuit,
    a: &SubsystemMask,
    d: &SubsystemMask,
    tolerance: f64,
    opts: &OtocOptions,
) -> Result<ScramblingReport> {
    let est = otoc(c, a, d, opts)?;
    let reference = scrambling_reference(a.len(), d.len());
    let deviation = (est.value - reference).abs();
    let bits = -est.value.log2();
    Ok(ScramblingReport {
        reference,
        deviation,
        tolerance,
        is_scrambler: deviation <= tolerance,
        mutual_information_bits: bits,
        mutual_information: bits / 2.0,
        epsilon: a.len() as f64 - bits / 2.0,
        otoc: est,
    })
}

/// Circuit families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Ensemble {
    /// Brickwork of random two-qubit Cliffords with T gates at random layer
    /// boundaries on random qubits.
    Generic,
    /// A scrambling Clifford, then `t/2` blocks `T·H·T·H` on distinct qubits
    /// of `readout`, then independent random Cliffords on `readout` and on
    /// its complement. The preserved group on `readout` is then the full
    /// Pauli group of `|readout| − t/2` qubits in a rotated frame.
    Simplified { readout: SubsystemMask },
}

/// Default brickwork depth.
pub fn default_depth(n: usize) -> usize {
    3 * n
}

fn random_two_qubit<R: Rng + ?Sized>(a: usize, b: usize, rng: &mut R) -> Vec<Gate> {
    clifford::sample_uniform(2, rng)
        .to_circuit()
        .into_iter()
        .map(|g| g.relabel(&[a, b]))
        .collect()
}

fn random_single_qubit<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Vec<Gate> {
    clifford::sample_uniform(1, rng)
        .to_circuit()
        .into_iter()
        .map(|g| g.relabel(&[q]))
        .collect()
}

fn brickwork_layer<R: Rng + ?Sized>(n: usize, layer: usize, rng: &mut R) -> Vec<Gate> {
    if n == 1 {
        return random_single_qubit(0, rng);
    }
    let mut gates = Vec::new();
    let mut q = layer % 2;
    while q + 1 < n {
        gates.extend(random_two_qubit(q, q + 1, rng));
        q += 2;
    }
    gates
}

/// Random Clifford supported on `qubits`, as gates.
fn random_clifford_on<R: Rng + ?Sized>(qubits: &[usize], rng: &mut R) -> Vec<Gate> {
    if qubits.is_empty() {
        return Vec::new();
    }
    clifford::sample_uniform(qubits.len(), rng)
        .to_circuit()
        .into_iter()
        .map(|g| g.relabel(qubits))
        .collect()
}

/// Samples a doped circuit from `ensemble`. `depth` defaults to `3n`.
pub fn sample_doped_circuit<R: Rng + ?Sized>(
    n: usize,
    t: usize,
    ensemble: &Ensemble,
    depth: Option<usize>,
    rng: &mut R,
) -> Result<DopedCircuit> {
    if n == 0 {
        return Err(DopedError::Unsatisfiable("empty register".into()));
    }
    if t > MAX_T {
        return Err(DopedError::Unsatisfiable(format!("t = {t} exceeds {MAX_T}")));
    }
    let depth = depth.unwrap_or_else(|| default_depth(n));
    match ensemble {
        Ensemble::Generic => {
            let mut boundaries: Vec<usize> = (0..t).map(|_| rng.random_range(0..=depth)).collect();
            boundaries.sort_unstable();
            let mut gates = Vec::new();
            let mut next = 0;
            for layer in 0..=depth {
                while next < t && boundaries[next] == layer {
                    gates.push(DopedGate::T(rng.random_range(0..n)));
                    next += 1;
                }
                if layer < depth {
                    gates.extend(brickwork_layer(n, layer, rng).into_iter().map(DopedGate::Clifford));
                }
            }
            DopedCircuit::new(n, gates)
        }
        Ensemble::Simplified { readout } => {
            if readout.n() != n {
                return Err(DopedError::DimensionMismatch {
                    left: n,
                    right: readout.n(),
                });
            }
            if !t.is_multiple_of(2) {
                return Err(DopedError::Unsatisfiable(format!("simplified ensemble needs even t, got {t}")));
            }
            if t / 2 > readout.len() {
                return Err(DopedError::Unsatisfiable(format!(
                    "t/2 = {} blocks do not fit on {} readout qubits",
                    t / 2,
                    readout.len()
                )));
            }
            let mut gates: Vec<DopedGate> = Vec::new();
            for layer in 0..depth {
                gates.extend(brickwork_layer(n, layer, rng).into_iter().map(DopedGate::Clifford));
            }
            let mut hosts = readout.qubits();
            hosts.shuffle(rng);
            for &d in hosts.iter().take(t / 2) {
                gates.extend([
                    DopedGate::Clifford(Gate::H(d)),
                    DopedGate::T(d),
                    DopedGate::Clifford(Gate::H(d)),
                    DopedGate::T(d),
                ]);
            }
            gates.extend(random_clifford_on(&readout.qubits(), rng).into_iter().map(DopedGate::Clifford));
            gates.extend(
                random_clifford_on(&readout.complement().qubits(), rng)
                    .into_iter()
                    .map(DopedGate::Clifford),
            );
            DopedCircuit::new(n, gates)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dense;
    use crate::pauli::subgroup_close;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::Rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn single_t(n: usize, q: usize) -> DopedCircuit {
        DopedCircuit::new(n, vec![DopedGate::T(q)]).unwrap()
    }

    fn dense_sum(sum: &PauliSum) -> nalgebra::DMatrix<Complex64> {
        let dim = 1 << sum.n();
        let mut m = nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
        for (q, c) in sum.terms() {
            m += dense::pauli_matrix(q) * Complex64::new(c.to_f64(), 0.0);
        }
        if sum.is_imaginary() {
            m *= Complex64::new(0.0, 1.0);
        }
        m
    }

    #[test]
    fn dyadic_arithmetic() {
        let h = Dyadic::ONE.div_sqrt2();
        assert!((h.to_f64() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(h.div_sqrt2(), Dyadic::new(1, 0, 1));
        assert_eq!(h * h, Dyadic::new(1, 0, 1));
        assert_eq!(h + -h, Dyadic::ZERO);
        assert_eq!(Dyadic::new(1, 0, 1) + Dyadic::new(1, 0, 1), Dyadic::ONE);
    }

    #[test]
    fn t_preserves_z() {
        let sum = propagate(&single_t(1, 0), &p("Z")).unwrap();
        assert_eq!(sum.as_pauli(), Some(p("Z")));
    }

    #[test]
    fn t_splits_x_into_two_terms() {
        // T† X T = (X − Y)/√2 under the adjoint action.
        let sum = propagate(&single_t(1, 0), &p("X")).unwrap();
        assert_eq!(sum.len(), 2);
        let h = Dyadic::ONE.div_sqrt2();
        assert_eq!(sum.coefficient(&p("X")), h);
        assert_eq!(sum.coefficient(&p("Y")), -h);
        let t = dense::t_matrix();
        let expected = t.adjoint() * dense::pauli_matrix(&p("X")) * &t;
        assert!((expected - dense_sum(&sum)).norm() < 1e-12);
        assert!(is_preserved(&single_t(1, 0), &p("X")).is_none());
    }

    #[test]
    fn clifford_circuits_preserve_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = sample_doped_circuit(4, 0, &Ensemble::Generic, Some(6), &mut rng).unwrap();
        let tab = c.to_tableau().unwrap();
        for q in PauliString::enumerate_on(&SubsystemMask::full(4)) {
            assert_eq!(is_preserved(&c, &q), Some(tab.conjugate(&q).unwrap()));
        }
    }

    #[test]
    fn propagate_matches_dense_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let c = sample_doped_circuit(4, 3, &Ensemble::Generic, Some(4), &mut rng).unwrap();
            let u = dense::doped_matrix(&c);
            for _ in 0..5 {
                let q = clifford::random_pauli(4, &mut rng).times_i_pow(rng.random_range(0..4));
                let sum = propagate(&c, &q).unwrap();
                assert!(sum.len() <= 8);
                let expected = u.adjoint() * dense::pauli_matrix(&q) * &u;
                assert!((expected - dense_sum(&sum)).norm() < 1e-10);
                assert_eq!(sum, propagate_gatewise(&c, &q).unwrap());
            }
        }
    }

    #[test]
    fn preserved_fraction_at_least_two_to_minus_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = SubsystemMask::range(6, 3, 3).unwrap();
        for _ in 0..10 {
            let c = sample_doped_circuit(6, 2, &Ensemble::Generic, None, &mut rng).unwrap();
            let preserved: Vec<_> = PauliString::enumerate_on(&d).filter(|q| is_preserved(&c, q).is_some()).collect();
            assert!(preserved.len() >= 16, "{}", preserved.len());
            let g = subgroup_close(6, &preserved).unwrap();
            assert_eq!(1usize << g.rank(), preserved.len());
        }
    }

    #[test]
    fn otoc_of_identity_with_disjoint_masks_is_one() {
        let c = DopedCircuit::identity(4);
        let x = SubsystemMask::from_qubits(4, &[0]).unwrap();
        let y = SubsystemMask::from_qubits(4, &[3]).unwrap();
        let est = otoc(&c, &x, &y, &OtocOptions::default()).unwrap();
        assert_eq!(est.value, 1.0);
        assert!(est.exact);
        let r = is_scrambler(&c, &x, &y, 0.05, &OtocOptions::default()).unwrap();
        assert!(!r.is_scrambler);
    }

    #[test]
    fn otoc_with_empty_x_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = sample_doped_circuit(5, 2, &Ensemble::Generic, None, &mut rng).unwrap();
        let x = SubsystemMask::empty(5);
        let y = SubsystemMask::range(5, 2, 2).unwrap();
        let est = otoc(&c, &x, &y, &OtocOptions::default()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn otoc_size_cap_is_enforced() {
        let c = DopedCircuit::identity(10);
        let x = SubsystemMask::range(10, 0, 5).unwrap();
        let y = SubsystemMask::range(10, 5, 5).unwrap();
        let opts = OtocOptions {
            allow_sampling: false,
            ..OtocOptions::default()
        };
        assert!(matches!(otoc(&c, &x, &y, &opts), Err(DopedError::SizeExceeded { .. })));
        let opts = OtocOptions {
            draws: 200,
            ..OtocOptions::default()
        };
        let est = otoc(&c, &x, &y, &opts).unwrap();
        assert!(!est.exact);
        assert_eq!(est.value, 1.0);
    }

    #[test]
    fn monte_carlo_otoc_is_close_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = sample_doped_circuit(6, 2, &Ensemble::Generic, None, &mut rng).unwrap();
        let x = SubsystemMask::range(6, 0, 2).unwrap();
        let y = SubsystemMask::range(6, 3, 3).unwrap();
        let exact = otoc(&c, &x, &y, &OtocOptions::default()).unwrap();
        let mc = otoc(
            &c,
            &x,
            &y,
            &OtocOptions {
                exact_cap: 1,
                seed: 3,
                ..OtocOptions::default()
            },
        )
        .unwrap();
        assert!((exact.value - mc.value).abs() <= 5.0 * mc.std_err + 1e-12);
    }

    #[test]
    fn simplified_block_preserves_no_single_qubit_pauli() {
        let c = DopedCircuit::new(
            1,
            vec![
                DopedGate::Clifford(Gate::H(0)),
                DopedGate::T(0),
                DopedGate::Clifford(Gate::H(0)),
                DopedGate::T(0),
            ],
        )
        .unwrap();
        for q in ["X", "Y", "Z"] {
            assert!(is_preserved(&c, &p(q)).is_none(), "{q}");
        }
    }

    #[test]
    fn simplified_ensemble_has_expected_preserved_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d_len in 2..=4 {
            let n = d_len + 2;
            let d = SubsystemMask::range(n, n - d_len, d_len).unwrap();
            for t in [0, 2, 4] {
                if t / 2 > d_len {
                    continue;
                }
                let ens = Ensemble::Simplified { readout: d };
                let c = sample_doped_circuit(n, t, &ens, None, &mut rng).unwrap();
                assert_eq!(c.t_count(), t);
                let preserved: Vec<_> = PauliString::enumerate_on(&d).filter(|q| is_preserved(&c, q).is_some()).collect();
                assert_eq!(preserved.len(), 1 << (2 * d_len - t));
                let g = subgroup_close(n, &preserved).unwrap();
                // Full Pauli group on |D| − t/2 qubits: no radical.
                let split = crate::pauli::symplectic_gram_schmidt(g.generators().iter().map(|q| (*q, ())).collect(), |_, _| ());
                assert!(split.isotropic.is_empty());
                assert_eq!(split.pairs.len(), d_len - t / 2);
            }
        }
    }

    #[test]
    fn simplified_rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = SubsystemMask::range(4, 3, 1).unwrap();
        let ens = Ensemble::Simplified { readout: d };
        assert!(matches!(sample_doped_circuit(4, 3, &ens, None, &mut rng), Err(DopedError::Unsatisfiable(_))));
        assert!(matches!(sample_doped_circuit(4, 4, &ens, None, &mut rng), Err(DopedError::Unsatisfiable(_))));
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = sample_doped_circuit(5, 4, &Ensemble::Generic, Some(3), &mut rng).unwrap();
        let text = c.to_text();
        let back = DopedCircuit::from_text(&text, None).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
        assert!(DopedCircuit::from_text("T 9\n", Some(3)).is_err());
        assert!(DopedCircuit::from_text("H 0\n", None).is_err());
    }

    #[test]
    fn compressed_circuit_has_same_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let c = sample_doped_circuit(4, 2, &Ensemble::Generic, None, &mut rng).unwrap();
        let c2 = c.compressed();
        assert!(dense::equal_up_to_phase(&dense::doped_matrix(&c), &dense::doped_matrix(&c2), 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn propagation_conserves_norm_and_bounds_terms(seed in any::<u64>(), t in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = sample_doped_circuit(5, t, &Ensemble::Generic, Some(4), &mut rng).unwrap();
            let q = clifford::random_pauli(5, &mut rng);
            let sum = propagate(&c, &q).unwrap();
            prop_assert!((sum.norm_squared() - 1.0).abs() < 1e-12);
            prop_assert!(sum.len() <= 1 << t);
        }
    }
}
