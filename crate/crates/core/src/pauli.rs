//! Signed Pauli strings in binary symplectic form.
//!
//! A [`PauliString`] on `n ≤ 64` qubits packs its X and Z parts into one
//! machine word each, so products, commutation checks and symplectic inner
//! products are a handful of bitwise operations.
//!
//! The phase is stored in the *letter* convention: the operator is
//! `i^phase · σ_0 ⊗ σ_1 ⊗ …` with `σ_j ∈ {I, X, Y, Z}`, exactly as printed by
//! the textual literal format (`"-iXYZI"`). Hermitian strings therefore have
//! an even phase. Internally, products go through the `X^x Z^z` convention,
//! where `Y = i·XZ`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest register supported by the packed representation.
pub const MAX_QUBITS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PauliError {
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },
    #[error("{0} qubits exceeds the supported maximum of {MAX_QUBITS}")]
    TooManyQubits(usize),
    #[error("qubit index {index} out of range for {n} qubits")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid Pauli literal {literal:?}: {reason}")]
    Parse { literal: String, reason: String },
}

pub type Result<T> = std::result::Result<T, PauliError>;

/// Vector in the 2n-dimensional symplectic space: X part in the low 64 bits,
/// Z part in the high 64 bits.
pub type SymVec = u128;

#[inline]
pub fn sym_vec(x: u64, z: u64) -> SymVec {
    (x as u128) | ((z as u128) << 64)
}

#[inline]
pub fn sym_split(v: SymVec) -> (u64, u64) {
    (v as u64, (v >> 64) as u64)
}

/// Symplectic form over GF(2): `x_a·z_b + z_a·x_b`.
#[inline]
pub fn sym_inner(a: SymVec, b: SymVec) -> bool {
    let (ax, az) = sym_split(a);
    let (bx, bz) = sym_split(b);
    ((ax & bz) ^ (az & bx)).count_ones() & 1 == 1
}

#[inline]
fn mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Signed n-qubit Pauli operator.
///
/// Equality compares the symplectic part and the phase; use
/// [`PauliString::eq_unsigned`] for equality up to phase.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n: u8,
    x: u64,
    z: u64,
    phase: u8,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self::try_identity(n).expect("qubit count within range")
    }

    pub fn try_identity(n: usize) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(PauliError::TooManyQubits(n));
        }
        Ok(Self {
            n: n as u8,
            x: 0,
            z: 0,
            phase: 0,
        })
    }

    /// Builds a string from raw bit words; bits above `n` must be clear.
    pub fn from_bits(n: usize, x: u64, z: u64, phase: u8) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(PauliError::TooManyQubits(n));
        }
        let m = mask(n);
        if x & !m != 0 || z & !m != 0 {
            return Err(PauliError::IndexOutOfRange {
                index: 63 - (x | z).leading_zeros() as usize,
                n,
            });
        }
        Ok(Self {
            n: n as u8,
            x,
            z,
            phase: phase & 3,
        })
    }

    pub fn from_sym(n: usize, v: SymVec, phase: u8) -> Result<Self> {
        let (x, z) = sym_split(v);
        Self::from_bits(n, x, z, phase)
    }

    /// Hermitian single-qubit Pauli `letter` on qubit `q`.
    pub fn single(n: usize, q: usize, letter: char) -> Result<Self> {
        if q >= n {
            return Err(PauliError::IndexOutOfRange { index: q, n });
        }
        let (x, z) = match letter {
            'I' => (0, 0),
            'X' => (1, 0),
            'Y' => (1, 1),
            'Z' => (0, 1),
            _ => {
                return Err(PauliError::Parse {
                    literal: letter.to_string(),
                    reason: "expected one of I, X, Y, Z".into(),
                })
            }
        };
        Self::from_bits(n, x << q, z << q, 0)
    }

    pub fn x_on(n: usize, q: usize) -> Self {
        Self::single(n, q, 'X').expect("qubit in range")
    }

    pub fn z_on(n: usize, q: usize) -> Self {
        Self::single(n, q, 'Z').expect("qubit in range")
    }

    pub fn y_on(n: usize, q: usize) -> Self {
        Self::single(n, q, 'Y').expect("qubit in range")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n as usize
    }

    #[inline]
    pub fn x_bits(&self) -> u64 {
        self.x
    }

    #[inline]
    pub fn z_bits(&self) -> u64 {
        self.z
    }

    /// Phase exponent `k` of `i^k` in the letter convention.
    #[inline]
    pub fn phase(&self) -> u8 {
        self.phase
    }

    #[inline]
    pub fn sym(&self) -> SymVec {
        sym_vec(self.x, self.z)
    }

    #[inline]
    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    #[inline]
    pub fn is_hermitian(&self) -> bool {
        self.phase & 1 == 0
    }

    /// Bitmask of qubits where the string acts non-trivially.
    #[inline]
    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn letter(&self, q: usize) -> char {
        match ((self.x >> q) & 1, (self.z >> q) & 1) {
            (0, 0) => 'I',
            (1, 0) => 'X',
            (1, 1) => 'Y',
            _ => 'Z',
        }
    }

    pub fn with_phase(mut self, phase: u8) -> Self {
        self.phase = phase & 3;
        self
    }

    /// Multiplies the operator by `i^k`.
    pub fn times_i_pow(mut self, k: u8) -> Self {
        self.phase = (self.phase + k) & 3;
        self
    }

    pub fn negated(self) -> Self {
        self.times_i_pow(2)
    }

    /// Same symplectic part with phase `+1`.
    pub fn unsigned(self) -> Self {
        self.with_phase(0)
    }

    pub fn eq_unsigned(&self, other: &Self) -> bool {
        self.n == other.n && self.x == other.x && self.z == other.z
    }

    /// Complex conjugate: every `Y` factor flips sign, `i` flips to `-i`.
    pub fn complex_conjugate(self) -> Self {
        let ys = (self.x & self.z).count_ones() as u8;
        let phase = (4 - self.phase) & 3;
        self.with_phase(phase + 2 * (ys & 1))
    }

    /// Exponent in the internal `X^x Z^z` convention.
    #[inline]
    pub(crate) fn xz_phase(&self) -> u8 {
        (self.phase + (self.x & self.z).count_ones() as u8) & 3
    }

    #[inline]
    pub(crate) fn from_xz_phase(n: u8, x: u64, z: u64, xz_phase: u8) -> Self {
        let letter = (xz_phase + 4 - ((x & z).count_ones() & 3) as u8) & 3;
        Self {
            n,
            x,
            z,
            phase: letter,
        }
    }

    /// Group product `self · other` with exact phase tracking.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(PauliError::DimensionMismatch {
                left: self.n(),
                right: other.n(),
            });
        }
        Ok(self.mul_unchecked(other))
    }

    #[inline]
    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        // X^a Z^b X^c Z^d = (-1)^{b·c} X^{a+c} Z^{b+d}
        let k = self.xz_phase() + other.xz_phase() + 2 * ((self.z & other.x).count_ones() as u8 & 1);
        Self::from_xz_phase(self.n, self.x ^ other.x, self.z ^ other.z, k & 3)
    }

    pub fn commutes(&self, other: &Self) -> Result<bool> {
        if self.n != other.n {
            return Err(PauliError::DimensionMismatch {
                left: self.n(),
                right: other.n(),
            });
        }
        Ok(self.commutes_unchecked(other))
    }

    #[inline]
    pub(crate) fn commutes_unchecked(&self, other: &Self) -> bool {
        !sym_inner(self.sym(), other.sym())
    }

    /// Restriction to the qubits in `keep` (phase kept, other qubits cleared).
    pub fn restrict(&self, keep: &SubsystemMask) -> Self {
        let m = keep.bits();
        let mut out = *self;
        out.x &= m;
        out.z &= m;
        out
    }

    /// Places this string on the qubits listed in `targets` of an `n`-qubit
    /// register; `targets[j]` receives local qubit `j`.
    pub fn embed(&self, n: usize, targets: &[usize]) -> Result<Self> {
        if targets.len() != self.n() {
            return Err(PauliError::DimensionMismatch {
                left: targets.len(),
                right: self.n(),
            });
        }
        let (mut x, mut z) = (0u64, 0u64);
        for (j, &q) in targets.iter().enumerate() {
            if q >= n {
                return Err(PauliError::IndexOutOfRange { index: q, n });
            }
            x |= ((self.x >> j) & 1) << q;
            z |= ((self.z >> j) & 1) << q;
        }
        Self::from_bits(n, x, z, self.phase)
    }

    /// All `4^k` unsigned Hermitian Paulis supported on `mask`, identity first.
    pub fn enumerate_on(mask: &SubsystemMask) -> impl Iterator<Item = PauliString> + '_ {
        let qubits = mask.qubits();
        let k = qubits.len();
        let n = mask.n();
        (0..(1u64 << (2 * k))).map(move |code| {
            let (mut x, mut z) = (0u64, 0u64);
            for (j, &q) in qubits.iter().enumerate() {
                let digit = (code >> (2 * j)) & 3;
                // digit: 0 = I, 1 = X, 2 = Z, 3 = Y
                x |= (digit & 1) << q;
                z |= ((digit >> 1) & 1) << q;
            }
            PauliString {
                n: n as u8,
                x,
                z,
                phase: 0,
            }
        })
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        f.write_str(prefix)?;
        for q in 0..self.n() {
            write!(f, "{}", self.letter(q))?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for PauliString {
    type Err = PauliError;

    fn from_str(s: &str) -> Result<Self> {
        let err = |reason: &str| PauliError::Parse {
            literal: s.to_string(),
            reason: reason.to_string(),
        };
        let (phase, body) = if let Some(rest) = s.strip_prefix("+i") {
            (1, rest)
        } else if let Some(rest) = s.strip_prefix("-i") {
            (3, rest)
        } else if let Some(rest) = s.strip_prefix('+') {
            (0, rest)
        } else if let Some(rest) = s.strip_prefix('-') {
            (2, rest)
        } else {
            (0, s)
        };
        let n = body.chars().count();
        if n > MAX_QUBITS {
            return Err(PauliError::TooManyQubits(n));
        }
        let (mut x, mut z) = (0u64, 0u64);
        for (q, c) in body.chars().enumerate() {
            match c {
                'I' => {}
                'X' => x |= 1 << q,
                'Y' => {
                    x |= 1 << q;
                    z |= 1 << q;
                }
                'Z' => z |= 1 << q,
                _ => return Err(err("expected characters from {I, X, Y, Z}")),
            }
        }
        PauliString::from_bits(n, x, z, phase)
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Group product with exact phase. Panics-free wrapper around [`PauliString::mul`].
pub fn multiply(p: &PauliString, q: &PauliString) -> Result<PauliString> {
    p.mul(q)
}

pub fn commutes(p: &PauliString, q: &PauliString) -> Result<bool> {
    p.commutes(q)
}

/// A subset of qubits of an n-qubit register.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubsystemMask {
    n: u8,
    bits: u64,
}

impl SubsystemMask {
    pub fn new(n: usize, bits: u64) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(PauliError::TooManyQubits(n));
        }
        if bits & !mask(n) != 0 {
            return Err(PauliError::IndexOutOfRange {
                index: 63 - bits.leading_zeros() as usize,
                n,
            });
        }
        Ok(Self { n: n as u8, bits })
    }

    pub fn empty(n: usize) -> Self {
        Self::new(n, 0).expect("qubit count within range")
    }

    pub fn full(n: usize) -> Self {
        Self::new(n, mask(n)).expect("qubit count within range")
    }

    pub fn from_qubits(n: usize, qubits: &[usize]) -> Result<Self> {
        let mut bits = 0u64;
        for &q in qubits {
            if q >= n {
                return Err(PauliError::IndexOutOfRange { index: q, n });
            }
            bits |= 1 << q;
        }
        Self::new(n, bits)
    }

    /// Qubits `start..start + len`.
    pub fn range(n: usize, start: usize, len: usize) -> Result<Self> {
        if start + len > n {
            return Err(PauliError::IndexOutOfRange {
                index: start + len - 1,
                n,
            });
        }
        let bits = if len == 0 { 0 } else { mask(len) << start };
        Self::new(n, bits)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n as usize
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn contains(&self, q: usize) -> bool {
        q < self.n() && (self.bits >> q) & 1 == 1
    }

    pub fn qubits(&self) -> Vec<usize> {
        (0..self.n()).filter(|&q| self.contains(q)).collect()
    }

    pub fn complement(&self) -> Self {
        Self {
            n: self.n,
            bits: !self.bits & mask(self.n()),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            bits: self.bits | other.bits,
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            bits: self.bits & other.bits,
        }
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            bits: self.bits & !other.bits,
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.bits & other.bits == 0
    }

    /// True when `p` acts as identity outside this subsystem.
    pub fn supports(&self, p: &PauliString) -> bool {
        p.support() & !self.bits == 0
    }
}

impl fmt::Debug for SubsystemMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SubsystemMask{:?}", self.qubits())
    }
}

impl Serialize for SubsystemMask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("SubsystemMask", 2)?;
        st.serialize_field("n", &self.n())?;
        st.serialize_field("qubits", &self.qubits())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for SubsystemMask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            qubits: Vec<usize>,
        }
        let raw = Raw::deserialize(deserializer)?;
        SubsystemMask::from_qubits(raw.n, &raw.qubits).map_err(serde::de::Error::custom)
    }
}

/// Reduces `items` to an independent set by GF(2) elimination on the
/// symplectic parts, applying the same products to the payloads.
///
/// Rows are kept in reduced echelon form keyed by their lowest set bit, so
/// the output is canonical for a given span.
pub fn echelon_reduce<T: Clone>(
    items: impl IntoIterator<Item = (PauliString, T)>,
    combine: impl Fn(&T, &T) -> T,
) -> Vec<(PauliString, T)> {
    let mut rows: Vec<(PauliString, T)> = Vec::new();
    for (mut p, mut payload) in items {
        for (r, rp) in &rows {
            let pivot = r.sym().trailing_zeros();
            if (p.sym() >> pivot) & 1 == 1 {
                p = p.mul_unchecked(r);
                payload = combine(&payload, rp);
            }
        }
        if p.is_identity() {
            continue;
        }
        let pivot = p.sym().trailing_zeros();
        for (r, rp) in rows.iter_mut() {
            if (r.sym() >> pivot) & 1 == 1 {
                *r = r.mul_unchecked(&p);
                *rp = combine(rp, &payload);
            }
        }
        rows.push((p, payload));
    }
    rows.sort_by_key(|(r, _)| r.sym().trailing_zeros());
    rows
}

/// Subgroup of the (unsigned) Pauli group given by independent generators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliSubgroup {
    n: usize,
    generators: Vec<PauliString>,
}

impl PauliSubgroup {
    pub fn trivial(n: usize) -> Self {
        Self {
            n,
            generators: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.generators
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    /// `log2` of the group size modulo phases.
    pub fn log2_size(&self) -> usize {
        self.rank()
    }

    /// Membership ignoring phase.
    pub fn contains(&self, p: &PauliString) -> bool {
        let mut v = p.sym();
        for g in &self.generators {
            let pivot = g.sym().trailing_zeros();
            if (v >> pivot) & 1 == 1 {
                v ^= g.sym();
            }
        }
        v == 0
    }

    /// Writes `p` as a product of generators, returning the indices used.
    pub fn decompose(&self, p: &PauliString) -> Option<Vec<usize>> {
        let mut v = p.sym();
        let mut used = Vec::new();
        for (i, g) in self.generators.iter().enumerate() {
            let pivot = g.sym().trailing_zeros();
            if (v >> pivot) & 1 == 1 {
                v ^= g.sym();
                used.push(i);
            }
        }
        (v == 0).then_some(used)
    }

    /// Every element of the group (unsigned, Hermitian representatives).
    pub fn elements(&self) -> Vec<PauliString> {
        let mut out = vec![PauliString::identity(self.n)];
        for g in &self.generators {
            let g = g.unsigned();
            let extra: Vec<_> = out.iter().map(|e| sym_product_unsigned(e, &g)).collect();
            out.extend(extra);
        }
        out
    }
}

fn sym_product_unsigned(a: &PauliString, b: &PauliString) -> PauliString {
    PauliString {
        n: a.n,
        x: a.x ^ b.x,
        z: a.z ^ b.z,
        phase: 0,
    }
}

/// Independent generating set for the group spanned by `gens`.
pub fn subgroup_close(n: usize, gens: &[PauliString]) -> Result<PauliSubgroup> {
    for g in gens {
        if g.n() != n {
            return Err(PauliError::DimensionMismatch { left: n, right: g.n() });
        }
    }
    let rows = echelon_reduce(gens.iter().map(|g| (g.unsigned(), ())), |_, _| ());
    Ok(PauliSubgroup {
        n,
        generators: rows.into_iter().map(|(g, _)| g.unsigned()).collect(),
    })
}

/// Output of [`symplectic_gram_schmidt`].
#[derive(Clone, Debug)]
pub struct SymplecticSplit<T> {
    /// Hyperbolic pairs `(a, b)`: `a` and `b` anticommute and commute with
    /// every other vector in the split.
    pub pairs: Vec<((PauliString, T), (PauliString, T))>,
    /// Radical: vectors commuting with the whole span.
    pub isotropic: Vec<(PauliString, T)>,
}

/// Symplectic Gram-Schmidt on independent `items`: greedy first
/// anticommuting partner in input order. Payloads follow the same products.
pub fn symplectic_gram_schmidt<T: Clone>(
    items: Vec<(PauliString, T)>,
    combine: impl Fn(&T, &T) -> T,
) -> SymplecticSplit<T> {
    let mut remaining: std::collections::VecDeque<(PauliString, T)> = items.into();
    let mut pairs = Vec::new();
    let mut isotropic = Vec::new();
    while let Some((a, ta)) = remaining.pop_front() {
        if a.is_identity() {
            continue;
        }
        let partner = remaining
            .iter()
            .position(|(b, _)| !a.commutes_unchecked(b));
        let Some(idx) = partner else {
            isotropic.push((a, ta));
            continue;
        };
        let (b, tb) = remaining.remove(idx).expect("index from position");
        for (v, tv) in remaining.iter_mut() {
            if !v.commutes_unchecked(&b) {
                *v = v.mul_unchecked(&a);
                *tv = combine(tv, &ta);
            }
            if !v.commutes_unchecked(&a) {
                *v = v.mul_unchecked(&b);
                *tv = combine(tv, &tb);
            }
        }
        pairs.push(((a, ta), (b, tb)));
    }
    SymplecticSplit { pairs, isotropic }
}

/// Finds `w` with `⟨w, rows[i]⟩ = rhs[i]` for linearly independent `rows`.
pub fn solve_symplectic_system(n: usize, rows: &[SymVec], rhs: &[bool]) -> Option<SymVec> {
    debug_assert_eq!(rows.len(), rhs.len());
    // ⟨w, v⟩ = w · swap(v); solve a plain dot-product system.
    let swap = |v: SymVec| {
        let (x, z) = sym_split(v);
        sym_vec(z, x)
    };
    let mut eqs: Vec<(SymVec, bool)> = rows.iter().map(|&r| swap(r)).zip(rhs.iter().copied()).collect();
    let mut pivots: Vec<u32> = Vec::new();
    let mut rank = 0;
    let bits: Vec<u32> = (0..n as u32).chain(64..64 + n as u32).collect();
    for &bit in &bits {
        let Some(sel) = (rank..eqs.len()).find(|&i| (eqs[i].0 >> bit) & 1 == 1) else {
            continue;
        };
        eqs.swap(rank, sel);
        let (pv, pr) = eqs[rank];
        for (i, e) in eqs.iter_mut().enumerate() {
            if i != rank && (e.0 >> bit) & 1 == 1 {
                e.0 ^= pv;
                e.1 ^= pr;
            }
        }
        pivots.push(bit);
        rank += 1;
    }
    if eqs[rank..].iter().any(|&(v, r)| v == 0 && r) {
        return None;
    }
    let mut w: SymVec = 0;
    for (i, &bit) in pivots.iter().enumerate() {
        if eqs[i].1 {
            w |= 1u128 << bit;
        }
    }
    Some(w)
}

/// GF(2) rank of a set of symplectic vectors.
pub fn sym_rank(vectors: impl IntoIterator<Item = SymVec>) -> usize {
    let mut basis: Vec<SymVec> = Vec::new();
    for mut v in vectors {
        for &b in &basis {
            let pivot = 127 - b.leading_zeros();
            if (v >> pivot) & 1 == 1 {
                v ^= b;
            }
        }
        if v != 0 {
            basis.push(v);
            basis.sort_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dense;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn random_pauli(n: usize, rng: &mut impl Rng) -> PauliString {
        let m = mask(n);
        PauliString::from_bits(n, rng.random::<u64>() & m, rng.random::<u64>() & m, rng.random::<u8>() & 3).unwrap()
    }

    #[test]
    fn x_times_z_is_minus_i_y() {
        let prod = multiply(&p("XI"), &p("ZI")).unwrap();
        assert_eq!(prod, p("-iYI"));
        assert_eq!(prod.phase(), 3);
    }

    #[test]
    fn identity_is_neutral() {
        let q = p("-iXYZI");
        assert_eq!(multiply(&PauliString::identity(4), &q).unwrap(), q);
        assert_eq!(multiply(&q, &PauliString::identity(4)).unwrap(), q);
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        assert_eq!(
            multiply(&p("XI"), &p("X")),
            Err(PauliError::DimensionMismatch { left: 2, right: 1 })
        );
        assert!(commutes(&p("XI"), &p("XYZ")).is_err());
    }

    #[test]
    fn commutation_basics() {
        assert!(!commutes(&p("X"), &p("Z")).unwrap());
        assert!(commutes(&p("XI"), &p("IZ")).unwrap());
        assert!(commutes(&p("XX"), &p("ZZ")).unwrap());
    }

    #[test]
    fn literal_round_trip_is_exact() {
        for s in ["+XYZI", "-iXYZI", "+iZ", "-YY", "+"] {
            assert_eq!(p(s).to_string(), s);
        }
        assert_eq!(p("XZ").to_string(), "+XZ");
        assert!("XQ".parse::<PauliString>().is_err());
    }

    #[test]
    fn multiply_matches_dense_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10_000 {
            let n = 1 + trial % 5;
            let a = random_pauli(n, &mut rng);
            let b = random_pauli(n, &mut rng);
            let prod = multiply(&a, &b).unwrap();
            let expected = dense::pauli_matrix(&a) * dense::pauli_matrix(&b);
            let got = dense::pauli_matrix(&prod);
            assert!((expected - got).norm() < 1e-12, "{a} * {b} -> {prod}");
        }
    }

    #[test]
    fn commutes_matches_dense_commutator() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = random_pauli(5, &mut rng);
            let b = random_pauli(5, &mut rng);
            let (ma, mb) = (dense::pauli_matrix(&a), dense::pauli_matrix(&b));
            let comm = &ma * &mb - &mb * &ma;
            assert_eq!(commutes(&a, &b).unwrap(), comm.norm() < 1e-9);
        }
    }

    #[test]
    fn conjugate_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = random_pauli(3, &mut rng);
            let dense_conj = dense::pauli_matrix(&a).conjugate();
            assert!((dense::pauli_matrix(&a.complex_conjugate()) - dense_conj).norm() < 1e-12);
        }
    }

    #[test]
    fn subgroup_close_examples() {
        let g = subgroup_close(2, &[p("ZI"), p("ZZ")]).unwrap();
        assert_eq!(g.rank(), 2);
        let g = subgroup_close(2, &[p("XI"), p("XI"), p("-XI")]).unwrap();
        assert_eq!(g.rank(), 1);
        let d = SubsystemMask::full(2);
        let all: Vec<_> = PauliString::enumerate_on(&d).collect();
        assert_eq!(all.len(), 16);
        let g = subgroup_close(2, &all).unwrap();
        assert_eq!(g.rank(), 4);
        assert_eq!(g.elements().len(), 16);
    }

    #[test]
    fn membership_matches_span() {
        let g = subgroup_close(3, &[p("XXI"), p("IZZ")]).unwrap();
        let elems = g.elements();
        assert_eq!(elems.len(), 4);
        for q in PauliString::enumerate_on(&SubsystemMask::full(3)) {
            assert_eq!(g.contains(&q), elems.iter().any(|e| e.eq_unsigned(&q)));
        }
    }

    #[test]
    fn gram_schmidt_extracts_pairs_and_radical() {
        let items = vec![(p("ZII"), ()), (p("XII"), ()), (p("IZI"), ()), (p("IXZ"), ())];
        let split = symplectic_gram_schmidt(items, |_, _| ());
        assert_eq!(split.pairs.len(), 2);
        assert!(split.isotropic.is_empty());
        let split = symplectic_gram_schmidt(vec![(p("ZI"), ()), (p("IZ"), ()), (p("XZ"), ())], |_, _| ());
        assert_eq!(split.pairs.len(), 1);
        assert_eq!(split.isotropic.len(), 1);
    }

    #[test]
    fn solve_symplectic_system_hits_targets() {
        let rows = [p("XII").sym(), p("ZZI").sym(), p("IYX").sym()];
        let rhs = [true, false, true];
        let w = solve_symplectic_system(3, &rows, &rhs).unwrap();
        for (r, b) in rows.iter().zip(rhs) {
            assert_eq!(sym_inner(w, *r), b);
        }
    }

    fn arb_pauli(n: usize) -> impl Strategy<Value = PauliString> {
        (any::<u64>(), any::<u64>(), 0u8..4)
            .prop_map(move |(x, z, ph)| PauliString::from_bits(n, x & mask(n), z & mask(n), ph).unwrap())
    }

    proptest! {
        #[test]
        fn square_is_phase_only(a in arb_pauli(6)) {
            prop_assert!(a.mul(&a).unwrap().is_identity());
        }

        #[test]
        fn double_product_restores_symplectic_part(a in arb_pauli(6), b in arb_pauli(6)) {
            let back = a.mul(&a.mul(&b).unwrap()).unwrap();
            prop_assert!(back.eq_unsigned(&b));
        }

        #[test]
        fn commutation_symmetric_and_bilinear(a in arb_pauli(6), b in arb_pauli(6), c in arb_pauli(6)) {
            prop_assert_eq!(a.commutes(&b).unwrap(), b.commutes(&a).unwrap());
            let ab = !a.commutes(&b).unwrap();
            let ac = !a.commutes(&c).unwrap();
            let a_bc = !a.commutes(&b.mul(&c).unwrap()).unwrap();
            prop_assert_eq!(a_bc, ab ^ ac);
        }

        #[test]
        fn subgroup_close_is_idempotent(gens in proptest::collection::vec(arb_pauli(4), 0..10)) {
            let g = subgroup_close(4, &gens).unwrap();
            let again = subgroup_close(4, g.generators()).unwrap();
            prop_assert_eq!(g.rank(), again.rank());
            prop_assert_eq!(sym_rank(gens.iter().map(|g| g.sym())), g.rank());
            for q in &gens {
                prop_assert!(g.contains(q));
            }
        }

        #[test]
        fn literal_parse_display_round_trip(a in arb_pauli(7)) {
            let back: PauliString = a.to_string().parse().unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
