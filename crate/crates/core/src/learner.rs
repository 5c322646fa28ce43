//! Black-box learning of the preserved Pauli subgroup on a readout register.
//!
//! The learner talks to the scrambler only through a [`QueryOracle`]. In
//! exact mode a query answers "is `U† P U` a Pauli string, and which one";
//! in sampled mode each query is one Bell-basis shot on two copies of the
//! Choi state, and preservation is inferred from the outcome statistics.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doped::{propagate, DopedCircuit, PauliSum};
use crate::pauli::{symplectic_gram_schmidt, PauliString, PauliSubgroup, SubsystemMask};

/// Default cap on `4^|D|` for the exhaustive strategy.
pub const EXHAUSTIVE_CAP: u64 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },
    #[error("inconclusive test of {probe}: {reason}; histogram {histogram:?}")]
    Inconclusive {
        probe: PauliString,
        reason: String,
        histogram: Vec<(PauliString, u32)>,
        budget_exhausted: bool,
    },
    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },
    #[error("exhaustive scan of 4^{d} Paulis exceeds the cap of {cap}")]
    TooLarge { d: usize, cap: u64 },
    #[error("preserved group is not symplectic: rank {rank}, radical dimension {radical}")]
    Structural { rank: usize, radical: usize },
}

pub type Result<T> = std::result::Result<T, LearnError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleMode {
    Exact,
    Sampled { shots: u32 },
}

/// One entry of the learning transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub probe: PauliString,
    pub image: Option<PauliString>,
    pub histogram: Vec<(PauliString, u32)>,
    pub queries: u64,
}

/// Outcome counts of one sampled test.
type Histogram = Vec<(PauliString, u32)>;

#[derive(Debug)]
struct OracleState {
    queries: u64,
    rng: ChaCha8Rng,
    transcript: Vec<ProbeRecord>,
}

/// Query access to a hidden doped circuit.
///
/// The circuit is private: callers can only ask preservation questions. All
/// state sits behind one mutex, so concurrent callers see an exact count.
#[derive(Debug)]
pub struct QueryOracle {
    circuit: DopedCircuit,
    mode: OracleMode,
    budget: Option<u64>,
    state: Mutex<OracleState>,
}

impl QueryOracle {
    pub fn new(circuit: DopedCircuit, mode: OracleMode, seed: u64) -> Self {
        Self {
            circuit,
            mode,
            budget: None,
            state: Mutex::new(OracleState {
                queries: 0,
                rng: ChaCha8Rng::seed_from_u64(seed),
                transcript: Vec::new(),
            }),
        }
    }

    /// Caps the total number of queries.
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn n(&self) -> usize {
        self.circuit.n()
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn query_count(&self) -> u64 {
        self.state.lock().expect("oracle lock").queries
    }

    pub fn transcript(&self) -> Vec<ProbeRecord> {
        self.state.lock().expect("oracle lock").transcript.clone()
    }

    fn charge(&self, st: &mut OracleState, k: u64) -> bool {
        match self.budget {
            Some(b) if st.queries + k > b => false,
            _ => {
                st.queries += k;
                true
            }
        }
    }

    /// Decides whether `U† p U` is a Pauli string and returns it if so.
    pub fn test_pauli(&self, p: &PauliString) -> Result<Option<PauliString>> {
        if p.n() != self.n() {
            return Err(LearnError::DimensionMismatch {
                left: self.n(),
                right: p.n(),
            });
        }
        if p.is_identity() {
            return Ok(Some(*p));
        }
        let sum = propagate(&self.circuit, p).expect("dimension checked");
        let mut st = self.state.lock().expect("oracle lock");
        let before = st.queries;
        let (image, histogram) = match self.mode {
            OracleMode::Exact => {
                if !self.charge(&mut st, 1) {
                    return Err(LearnError::BudgetExhausted {
                        budget: self.budget.unwrap_or(0),
                    });
                }
                (sum.as_pauli(), Vec::new())
            }
            OracleMode::Sampled { shots } => self.sampled_test(&mut st, p, &sum, shots)?,
        };
        let queries = st.queries - before;
        st.transcript.push(ProbeRecord {
            probe: *p,
            image,
            histogram,
            queries,
        });
        Ok(image)
    }

    fn sampled_test(
        &self,
        st: &mut OracleState,
        p: &PauliString,
        sum: &PauliSum,
        shots: u32,
    ) -> Result<(Option<PauliString>, Histogram)> {
        // Outcome Q occurs with probability c_Q², the squared weight of Q in U† p U.
        let weights: Vec<(PauliString, f64)> = sum.terms().iter().map(|(q, c)| (*q, c.to_f64().powi(2))).collect();
        let mut hist: BTreeMap<PauliString, u32> = BTreeMap::new();
        let inconclusive = |hist: &BTreeMap<PauliString, u32>, reason: &str, budget_exhausted: bool| LearnError::Inconclusive {
            probe: *p,
            reason: reason.to_string(),
            histogram: hist.iter().map(|(q, c)| (*q, *c)).collect(),
            budget_exhausted,
        };
        if shots == 0 {
            return Err(inconclusive(&hist, "no shots allotted", false));
        }
        for _ in 0..shots {
            if !self.charge(st, 1) {
                return Err(inconclusive(&hist, "query budget exhausted", true));
            }
            let u: f64 = st.rng.random();
            let mut acc = 0.0;
            let mut pick = weights.last().expect("non-empty sum").0;
            for (q, w) in &weights {
                acc += w;
                if u < acc {
                    pick = *q;
                    break;
                }
            }
            *hist.entry(pick).or_insert(0) += 1;
        }
        let histogram: Vec<(PauliString, u32)> = hist.iter().map(|(q, c)| (*q, *c)).collect();
        if hist.len() != 1 {
            return Ok((None, histogram));
        }
        let q = *hist.keys().next().expect("one outcome");
        // Sign: measuring the stabilizer q on U† p U returns +1 with
        // probability (1 + c_q)/2.
        if !self.charge(st, 1) {
            return Err(inconclusive(&hist, "query budget exhausted before sign resolution", true));
        }
        let c = sum.coefficient(&q).to_f64();
        let plus = st.rng.random::<f64>() < (1.0 + c) / 2.0;
        let mut image = q.with_phase(if plus { 0 } else { 2 });
        if sum.is_imaginary() {
            image = image.times_i_pow(1);
        }
        Ok((Some(image), histogram))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Every Pauli on D in lexicographic order, skipping the current span.
    Exhaustive,
    /// Uniform random probes with a fixed stopping rule.
    RandomProbe { seed: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnOptions {
    pub strategy: Strategy,
    /// Fail with a structural error instead of truncating a degenerate group.
    pub expect_symplectic: bool,
    pub exhaustive_cap: u64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::Exhaustive,
            expect_symplectic: false,
            exhaustive_cap: EXHAUSTIVE_CAP,
        }
    }
}

/// Generator/image pair `(g, U† g U)`.
pub type LearnedPair = (PauliString, PauliString);

/// Preserved subgroup on D and its image under the scrambler.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnedGroups {
    pub d: SubsystemMask,
    /// Independent generators as discovered, with signed images.
    pub generators: Vec<LearnedPair>,
    /// Hyperbolic pairs spanning the symplectic part of the group.
    pub pairs: Vec<(LearnedPair, LearnedPair)>,
    /// Number of hyperbolic pairs, i.e. the size of E.
    pub e_size: usize,
    pub radical_dim: usize,
    pub odd_rank: bool,
    pub query_count: u64,
    pub incomplete: bool,
    pub transcript: Vec<ProbeRecord>,
}

impl LearnedGroups {
    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn subgroup(&self) -> PauliSubgroup {
        let gens: Vec<_> = self.generators.iter().map(|(g, _)| *g).collect();
        crate::pauli::subgroup_close(self.d.n(), &gens).expect("same register")
    }

    /// Signed `U† p U` for `p` in the learned group.
    pub fn image_of(&self, p: &PauliString) -> Option<PauliString> {
        // Invariant: v = p·g_1⋯g_k and U† v U = (U† p U)·acc.
        let rows = crate::pauli::echelon_reduce(self.generators.iter().copied(), |a, b| a.mul_unchecked(b));
        let mut v = *p;
        let mut acc = PauliString::identity(p.n());
        for (g, gi) in &rows {
            let pivot = g.sym().trailing_zeros();
            if (v.sym() >> pivot) & 1 == 1 {
                v = v.mul_unchecked(g);
                acc = acc.mul_unchecked(gi);
            }
        }
        if !v.is_identity() {
            return None;
        }
        Some(acc.with_phase((v.phase() + 4 - acc.phase()) & 3))
    }

    pub fn transcript_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }
}

fn is_new(span: &[PauliString], p: &PauliString) -> bool {
    crate::pauli::sym_rank(span.iter().map(|g| g.sym()).chain([p.sym()])) > span.len()
}

/// Learns generators of the preserved group on `d` and their images.
pub fn learn_groups(oracle: &QueryOracle, d: &SubsystemMask, opts: &LearnOptions) -> Result<LearnedGroups> {
    if d.n() != oracle.n() {
        return Err(LearnError::DimensionMismatch {
            left: oracle.n(),
            right: d.n(),
        });
    }
    let start = oracle.query_count();
    let full_rank = 2 * d.len();
    let mut generators: Vec<LearnedPair> = Vec::new();
    let mut incomplete = false;
    let exhausted = || LearnError::BudgetExhausted {
        budget: oracle.budget.unwrap_or(0),
    };
    let record = |p: PauliString, generators: &mut Vec<LearnedPair>| -> Result<bool> {
        match oracle.test_pauli(&p) {
            Ok(Some(img)) => {
                generators.push((p, img));
                Ok(true)
            }
            Ok(None) => Ok(false),
            Err(LearnError::Inconclusive {
                budget_exhausted: true, ..
            }) => Err(exhausted()),
            Err(e) => Err(e),
        }
    };
    match opts.strategy {
        Strategy::Exhaustive => {
            let needed = 1u64.checked_shl(2 * d.len() as u32).unwrap_or(u64::MAX);
            if needed > opts.exhaustive_cap {
                return Err(LearnError::TooLarge {
                    d: d.len(),
                    cap: opts.exhaustive_cap,
                });
            }
            for p in PauliString::enumerate_on(d).skip(1) {
                if generators.len() == full_rank {
                    break;
                }
                let span: Vec<_> = generators.iter().map(|(g, _)| *g).collect();
                if !is_new(&span, &p) {
                    continue;
                }
                match record(p, &mut generators) {
                    Ok(_) => {}
                    Err(LearnError::BudgetExhausted { .. }) => {
                        incomplete = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Strategy::RandomProbe { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let patience = 20 * full_rank;
            let qubits = d.qubits();
            let mut idle = 0;
            while generators.len() < full_rank && idle < patience {
                let mut p = PauliString::identity(d.n());
                for &q in &qubits {
                    let letter = ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)];
                    p = p.mul_unchecked(&PauliString::single(d.n(), q, letter).expect("in range"));
                }
                let p = p.unsigned();
                let span: Vec<_> = generators.iter().map(|(g, _)| *g).collect();
                if p.is_identity() || !is_new(&span, &p) {
                    idle += 1;
                    continue;
                }
                match record(p, &mut generators) {
                    Ok(true) => idle = 0,
                    Ok(false) => idle += 1,
                    Err(LearnError::BudgetExhausted { .. }) => {
                        incomplete = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    finish(oracle, d, generators, incomplete, start, opts)
}

/// Rescales a pair by `-i` when the generator carries an odd phase; the
/// image scales with it.
fn hermitian((g, img): LearnedPair) -> LearnedPair {
    if g.is_hermitian() {
        (g, img)
    } else {
        (g.times_i_pow(3), img.times_i_pow(3))
    }
}

fn finish(
    oracle: &QueryOracle,
    d: &SubsystemMask,
    generators: Vec<LearnedPair>,
    incomplete: bool,
    start: u64,
    opts: &LearnOptions,
) -> Result<LearnedGroups> {
    // Canonical generators make the result independent of discovery order.
    let canonical: Vec<_> = crate::pauli::echelon_reduce(generators.iter().copied(), |a, b| a.mul_unchecked(b))
        .into_iter()
        .map(hermitian)
        .collect();
    let mut split = symplectic_gram_schmidt(canonical.clone(), |a, b| a.mul_unchecked(b));
    for (x, z) in split.pairs.iter_mut() {
        *x = hermitian(*x);
        *z = hermitian(*z);
    }
    let rank = canonical.len();
    let radical = split.isotropic.len();
    if radical > 0 {
        if opts.expect_symplectic {
            return Err(LearnError::Structural { rank, radical });
        }
        log::warn!("preserved group has rank {rank} with a {radical}-dimensional radical; keeping {} hyperbolic pairs", split.pairs.len());
    }
    Ok(LearnedGroups {
        d: *d,
        e_size: split.pairs.len(),
        pairs: split.pairs,
        radical_dim: radical,
        odd_rank: rank % 2 == 1,
        generators: canonical,
        query_count: oracle.query_count() - start,
        incomplete,
        transcript: oracle.transcript(),
    })
}
