//! Clifford unitaries as tableaux.
//!
//! A [`CliffordTableau`] stores the adjoint action `U† P U` of a Clifford `U`
//! on the 2n generators `X_0..X_{n-1}, Z_0..Z_{n-1}`. Everything else
//! (conjugation of arbitrary strings, composition, inversion) follows from
//! those images.
//!
//! Gate order convention: [`CliffordTableau::apply_gate`] appends a gate at
//! the end of the circuit (it acts *after* `U`), [`CliffordTableau::prepend_gate`]
//! inserts it at the beginning.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{
    solve_symplectic_system, sym_inner, sym_rank, sym_split, symplectic_gram_schmidt, PauliError,
    PauliString, SymVec,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CliffordError {
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },
    #[error("qubit index {index} out of range for {n} qubits")]
    QubitOutOfRange { index: usize, n: usize },
    #[error("gate {0} acts twice on the same qubit")]
    RepeatedQubit(Gate),
    #[error("partial map not completable at pair {pair}: {reason}")]
    NotCompletable { pair: usize, reason: String },
    #[error("tableau violates the symplectic condition: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, CliffordError>;

/// Elementary Clifford gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    H(usize),
    S(usize),
    X(usize),
    Y(usize),
    Z(usize),
    CX(usize, usize),
    Swap(usize, usize),
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::H(q) | Gate::S(q) | Gate::X(q) | Gate::Y(q) | Gate::Z(q) => vec![q],
            Gate::CX(a, b) | Gate::Swap(a, b) => vec![a, b],
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        let qs = self.qubits();
        for &q in &qs {
            if q >= n {
                return Err(CliffordError::QubitOutOfRange { index: q, n });
            }
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(CliffordError::RepeatedQubit(*self));
        }
        Ok(())
    }

    /// Same gate acting on `map[q]` instead of `q`.
    pub fn relabel(&self, map: &[usize]) -> Gate {
        match *self {
            Gate::H(q) => Gate::H(map[q]),
            Gate::S(q) => Gate::S(map[q]),
            Gate::X(q) => Gate::X(map[q]),
            Gate::Y(q) => Gate::Y(map[q]),
            Gate::Z(q) => Gate::Z(map[q]),
            Gate::CX(a, b) => Gate::CX(map[a], map[b]),
            Gate::Swap(a, b) => Gate::Swap(map[a], map[b]),
        }
    }

    /// Gates whose product is the inverse, up to global phase.
    pub fn inverse(&self) -> Vec<Gate> {
        match *self {
            Gate::S(q) => vec![Gate::S(q); 3],
            g => vec![g],
        }
    }

    /// `g† p g` for `p` of the same register. Indices must already be valid.
    pub fn conjugate_pauli(&self, p: &PauliString) -> PauliString {
        let n = p.n() as u8;
        let (mut x, mut z) = (p.x_bits(), p.z_bits());
        let mut k = p.xz_phase() as u32;
        let bit = |w: u64, q: usize| ((w >> q) & 1) as u32;
        match *self {
            Gate::H(q) => {
                let (xq, zq) = (bit(x, q), bit(z, q));
                k += 2 * xq * zq;
                x = (x & !(1 << q)) | ((zq as u64) << q);
                z = (z & !(1 << q)) | ((xq as u64) << q);
            }
            Gate::S(q) => {
                let xq = bit(x, q);
                k += 3 * xq;
                z ^= (xq as u64) << q;
            }
            Gate::X(q) => k += 2 * bit(z, q),
            Gate::Z(q) => k += 2 * bit(x, q),
            Gate::Y(q) => k += 2 * (bit(x, q) ^ bit(z, q)),
            Gate::CX(c, t) => {
                x ^= (bit(x, c) as u64) << t;
                z ^= (bit(z, t) as u64) << c;
            }
            Gate::Swap(a, b) => {
                for w in [&mut x, &mut z] {
                    let (ba, bb) = ((*w >> a) & 1, (*w >> b) & 1);
                    if ba != bb {
                        *w ^= (1 << a) | (1 << b);
                    }
                }
            }
        }
        PauliString::from_xz_phase(n, x, z, (k & 3) as u8)
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::H(q) => write!(f, "H {q}"),
            Gate::S(q) => write!(f, "S {q}"),
            Gate::X(q) => write!(f, "X {q}"),
            Gate::Y(q) => write!(f, "Y {q}"),
            Gate::Z(q) => write!(f, "Z {q}"),
            Gate::CX(a, b) => write!(f, "CX {a} {b}"),
            Gate::Swap(a, b) => write!(f, "SWAP {a} {b}"),
        }
    }
}

impl FromStr for Gate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        let idx = |t: &str| t.parse::<usize>().map_err(|_| format!("bad qubit index {t:?}"));
        match tokens.as_slice() {
            ["H", q] => Ok(Gate::H(idx(q)?)),
            ["S", q] => Ok(Gate::S(idx(q)?)),
            ["X", q] => Ok(Gate::X(idx(q)?)),
            ["Y", q] => Ok(Gate::Y(idx(q)?)),
            ["Z", q] => Ok(Gate::Z(idx(q)?)),
            ["CX", a, b] => Ok(Gate::CX(idx(a)?, idx(b)?)),
            ["SWAP", a, b] => Ok(Gate::Swap(idx(a)?, idx(b)?)),
            _ => Err(format!("unrecognised gate {s:?}")),
        }
    }
}

/// Parses the one-gate-per-line text format. Blank lines and `#` comments
/// are skipped.
pub fn parse_circuit(n: usize, text: &str) -> Result<Vec<Gate>> {
    let mut gates = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let g: Gate = line.parse().map_err(|message| CliffordError::Parse { line: i + 1, message })?;
        g.check(n).map_err(|e| CliffordError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        gates.push(g);
    }
    Ok(gates)
}

pub fn format_circuit(gates: &[Gate]) -> String {
    let mut out = String::new();
    for g in gates {
        out.push_str(&g.to_string());
        out.push('\n');
    }
    out
}

/// Adjoint action of an n-qubit Clifford unitary.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CliffordTableau {
    n: usize,
    images: Vec<PauliString>,
}

impl fmt::Debug for CliffordTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CliffordTableau(n = {})", self.n)?;
        for j in 0..self.n {
            writeln!(f, "  X{j} -> {}", self.images[j])?;
            writeln!(f, "  Z{j} -> {}", self.images[self.n + j])?;
        }
        Ok(())
    }
}

impl CliffordTableau {
    pub fn identity(n: usize) -> Self {
        let mut images = Vec::with_capacity(2 * n);
        images.extend((0..n).map(|j| PauliString::x_on(n, j)));
        images.extend((0..n).map(|j| PauliString::z_on(n, j)));
        Self { n, images }
    }

    /// Builds a tableau from the images of `X_0..X_{n-1}` and `Z_0..Z_{n-1}`,
    /// rejecting anything that is not a valid Clifford.
    pub fn from_images(x_images: Vec<PauliString>, z_images: Vec<PauliString>) -> Result<Self> {
        let n = x_images.len();
        if z_images.len() != n {
            return Err(CliffordError::DimensionMismatch {
                left: n,
                right: z_images.len(),
            });
        }
        let mut images = x_images;
        images.extend(z_images);
        let t = Self { n, images };
        t.validate()?;
        Ok(t)
    }

    pub fn from_circuit(n: usize, gates: &[Gate]) -> Result<Self> {
        let mut t = Self::identity(n);
        for g in gates {
            t.apply_gate(*g)?;
        }
        Ok(t)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// `U† X_j U`.
    pub fn x_image(&self, j: usize) -> PauliString {
        self.images[j]
    }

    /// `U† Z_j U`.
    pub fn z_image(&self, j: usize) -> PauliString {
        self.images[self.n + j]
    }

    pub fn images(&self) -> &[PauliString] {
        &self.images
    }

    /// Checks Hermiticity and the symplectic commutation relations.
    pub fn validate(&self) -> Result<()> {
        for (i, img) in self.images.iter().enumerate() {
            if img.n() != self.n {
                return Err(CliffordError::DimensionMismatch {
                    left: self.n,
                    right: img.n(),
                });
            }
            if !img.is_hermitian() {
                return Err(CliffordError::Invalid(format!("image {i} is not Hermitian")));
            }
        }
        for i in 0..2 * self.n {
            for j in i + 1..2 * self.n {
                let anti = !self.images[i].commutes_unchecked(&self.images[j]);
                let expected = j == i + self.n && i < self.n;
                if anti != expected {
                    return Err(CliffordError::Invalid(format!("images {i} and {j} have wrong commutation")));
                }
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.n)
    }

    /// `U† p U` with exact phase.
    pub fn conjugate(&self, p: &PauliString) -> Result<PauliString> {
        if p.n() != self.n {
            return Err(CliffordError::DimensionMismatch {
                left: self.n,
                right: p.n(),
            });
        }
        Ok(self.conjugate_unchecked(p))
    }

    pub(crate) fn conjugate_unchecked(&self, p: &PauliString) -> PauliString {
        let mut acc = PauliString::identity(self.n).with_phase(p.xz_phase());
        let (x, z) = (p.x_bits(), p.z_bits());
        let mut rest = x | z;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if (x >> j) & 1 == 1 {
                acc = acc.mul_unchecked(&self.images[j]);
            }
            if (z >> j) & 1 == 1 {
                acc = acc.mul_unchecked(&self.images[self.n + j]);
            }
        }
        acc
    }

    /// Appends `gate` after the current unitary.
    pub fn apply_gate(&mut self, gate: Gate) -> Result<()> {
        gate.check(self.n)?;
        let n = self.n;
        let im = &mut self.images;
        match gate {
            Gate::H(q) => im.swap(q, n + q),
            Gate::S(q) => im[q] = im[q].mul_unchecked(&im[n + q]).times_i_pow(3),
            Gate::X(q) => im[n + q] = im[n + q].negated(),
            Gate::Z(q) => im[q] = im[q].negated(),
            Gate::Y(q) => {
                im[q] = im[q].negated();
                im[n + q] = im[n + q].negated();
            }
            Gate::CX(c, t) => {
                im[c] = im[c].mul_unchecked(&im[t]);
                im[n + t] = im[n + c].mul_unchecked(&im[n + t]);
            }
            Gate::Swap(a, b) => {
                im.swap(a, b);
                im.swap(n + a, n + b);
            }
        }
        Ok(())
    }

    /// Inserts `gate` before the current unitary.
    pub fn prepend_gate(&mut self, gate: Gate) -> Result<()> {
        gate.check(self.n)?;
        for img in self.images.iter_mut() {
            *img = gate.conjugate_pauli(img);
        }
        Ok(())
    }

    /// Tableau of the product `self · other` (so `other` acts first).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        other.then(self)
    }

    /// Tableau of `self` followed in time by `next`.
    pub fn then(&self, next: &Self) -> Result<Self> {
        if self.n != next.n {
            return Err(CliffordError::DimensionMismatch {
                left: self.n,
                right: next.n,
            });
        }
        let images = next.images.iter().map(|img| self.conjugate_unchecked(img)).collect();
        Ok(Self { n: self.n, images })
    }

    pub fn inverse(&self) -> Self {
        let gates = self.to_circuit();
        let mut inv = Self::identity(self.n);
        for g in gates.iter().rev() {
            for h in g.inverse() {
                inv.apply_gate(h).expect("synthesised gates are in range");
            }
        }
        inv
    }

    /// Tableau of the entrywise complex conjugate `U*`.
    pub fn complex_conjugate(&self) -> Self {
        Self {
            n: self.n,
            images: self.images.iter().map(|p| p.complex_conjugate()).collect(),
        }
    }

    /// Tableau of the transpose `U^T = (U†)*`.
    pub fn transpose(&self) -> Self {
        self.inverse().complex_conjugate()
    }

    /// Places this tableau on `targets` of an `n`-qubit register, identity
    /// elsewhere.
    pub fn embed(&self, n: usize, targets: &[usize]) -> Result<Self> {
        if targets.len() != self.n {
            return Err(CliffordError::DimensionMismatch {
                left: targets.len(),
                right: self.n,
            });
        }
        let mut out = Self::identity(n);
        for (j, &q) in targets.iter().enumerate() {
            if q >= n {
                return Err(CliffordError::QubitOutOfRange { index: q, n });
            }
            out.images[q] = self.images[j].embed(n, targets)?;
            out.images[n + q] = self.images[self.n + j].embed(n, targets)?;
        }
        out.validate()?;
        Ok(out)
    }

    /// A gate sequence (in time order) implementing this tableau exactly,
    /// including signs.
    pub fn to_circuit(&self) -> Vec<Gate> {
        let n = self.n;
        let mut work = self.clone();
        let mut applied: Vec<Gate> = Vec::new();
        let mut push = |work: &mut Self, g: Gate| {
            work.prepend_gate(g).expect("in range");
            applied.push(g);
        };
        for i in 0..n {
            let p = work.x_image(i);
            for j in i..n {
                match p.letter(j) {
                    'Z' => push(&mut work, Gate::H(j)),
                    'Y' => push(&mut work, Gate::S(j)),
                    _ => {}
                }
            }
            let p = work.x_image(i);
            let pivot = (i..n).find(|&j| p.letter(j) == 'X').expect("x image has support beyond qubit i");
            if pivot != i {
                push(&mut work, Gate::Swap(i, pivot));
            }
            let p = work.x_image(i);
            for j in i + 1..n {
                if p.letter(j) == 'X' {
                    push(&mut work, Gate::CX(i, j));
                }
            }
            let q = work.z_image(i);
            for j in i + 1..n {
                match q.letter(j) {
                    'X' => push(&mut work, Gate::H(j)),
                    'Y' => {
                        push(&mut work, Gate::S(j));
                        push(&mut work, Gate::H(j));
                    }
                    _ => {}
                }
            }
            let q = work.z_image(i);
            for j in i + 1..n {
                if q.letter(j) == 'Z' {
                    push(&mut work, Gate::CX(j, i));
                }
            }
            if work.z_image(i).letter(i) == 'Y' {
                push(&mut work, Gate::H(i));
                push(&mut work, Gate::S(i));
                push(&mut work, Gate::H(i));
            }
        }
        for i in 0..n {
            if work.x_image(i).phase() == 2 {
                push(&mut work, Gate::Z(i));
            }
            if work.z_image(i).phase() == 2 {
                push(&mut work, Gate::X(i));
            }
        }
        debug_assert!(work.is_identity());
        applied.iter().flat_map(|g| g.inverse()).collect()
    }
}

/// Draws a uniformly random Clifford on `n` qubits (modulo global phase).
///
/// The images of `X_k, Z_k` are chosen pair by pair: a uniform non-zero
/// vector orthogonal to all earlier pairs, then a uniform partner in that
/// complement with which it anticommutes, then independent uniform signs.
/// Each stage is uniform over its exact set of choices.
pub fn sample_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CliffordTableau {
    let m = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut pairs: Vec<(SymVec, SymVec)> = Vec::with_capacity(n);
    let project = |v: SymVec, pairs: &[(SymVec, SymVec)]| {
        let mut out = v;
        for &(a, b) in pairs {
            if sym_inner(v, b) {
                out ^= a;
            }
            if sym_inner(v, a) {
                out ^= b;
            }
        }
        out
    };
    let random_vec = |rng: &mut R| crate::pauli::sym_vec(rng.random::<u64>() & m, rng.random::<u64>() & m);
    for _ in 0..n {
        let a = loop {
            let v = project(random_vec(rng), &pairs);
            if v != 0 {
                break v;
            }
        };
        let b = loop {
            let w = project(random_vec(rng), &pairs);
            if sym_inner(a, w) {
                break w;
            }
        };
        pairs.push((a, b));
    }
    let mut xs = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    for (a, b) in pairs {
        let sa = if rng.random::<bool>() { 2 } else { 0 };
        let sb = if rng.random::<bool>() { 2 } else { 0 };
        xs.push(PauliString::from_sym(n, a, sa).expect("masked"));
        zs.push(PauliString::from_sym(n, b, sb).expect("masked"));
    }
    CliffordTableau::from_images(xs, zs).expect("sampled pairs are symplectic")
}

/// Uniformly random Hermitian Pauli string with a random sign.
pub fn random_pauli<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PauliString {
    let m = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let sign = if rng.random::<bool>() { 2 } else { 0 };
    PauliString::from_bits(n, rng.random::<u64>() & m, rng.random::<u64>() & m, sign).expect("masked")
}

/// A list of `(source, target)` Pauli pairs that a Clifford should realise.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialPauliMap {
    pub n: usize,
    pub pairs: Vec<(PauliString, PauliString)>,
}

impl PartialPauliMap {
    pub fn new(n: usize) -> Self {
        Self { n, pairs: Vec::new() }
    }

    pub fn push(&mut self, source: PauliString, target: PauliString) {
        self.pairs.push((source, target));
    }
}

fn not_completable(pair: usize, reason: impl Into<String>) -> CliffordError {
    CliffordError::NotCompletable {
        pair,
        reason: reason.into(),
    }
}

/// Extends independent isotropic vectors and existing hyperbolic pairs to a
/// full symplectic basis. Returns the full list of pairs; the first
/// `pairs.len() + isotropic.len()` entries keep the given vectors in order
/// (isotropic `v` becomes the first element of its pair).
fn extend_to_symplectic_basis(
    n: usize,
    mut pairs: Vec<(SymVec, SymVec)>,
    isotropic: &[SymVec],
) -> Vec<(SymVec, SymVec)> {
    let mut partners: Vec<SymVec> = Vec::new();
    for k in 0..isotropic.len() {
        let mut rows: Vec<SymVec> = Vec::new();
        let mut rhs: Vec<bool> = Vec::new();
        for &(a, b) in &pairs {
            rows.extend([a, b]);
            rhs.extend([false, false]);
        }
        for (j, &u) in isotropic.iter().enumerate() {
            rows.push(u);
            rhs.push(j == k);
        }
        for &p in &partners {
            rows.push(p);
            rhs.push(false);
        }
        let w = solve_symplectic_system(n, &rows, &rhs).expect("independent constraints are solvable");
        partners.push(w);
    }
    pairs.extend(isotropic.iter().copied().zip(partners));
    let project = |v: SymVec, pairs: &[(SymVec, SymVec)]| {
        let mut out = v;
        for &(a, b) in pairs {
            if sym_inner(v, b) {
                out ^= a;
            }
            if sym_inner(v, a) {
                out ^= b;
            }
        }
        out
    };
    let basis: Vec<SymVec> = (0..n)
        .flat_map(|j| [1u128 << j, 1u128 << (64 + j)])
        .collect();
    while pairs.len() < n {
        let a = basis
            .iter()
            .map(|&e| project(e, &pairs))
            .find(|&v| v != 0)
            .expect("complement is non-trivial");
        let b = basis
            .iter()
            .map(|&e| project(e, &pairs))
            .find(|&w| sym_inner(a, w))
            .expect("complement is non-degenerate");
        pairs.push((a, b));
    }
    pairs
}

/// Completes a commutation-preserving partial map to a full Clifford whose
/// conjugation reproduces every given pair, signs included.
pub fn complete_to_clifford(map: &PartialPauliMap) -> Result<CliffordTableau> {
    let n = map.n;
    let mut pairs: Vec<(PauliString, PauliString)> = Vec::with_capacity(map.pairs.len());
    for (i, &(s, t)) in map.pairs.iter().enumerate() {
        if s.n() != n || t.n() != n {
            return Err(CliffordError::DimensionMismatch {
                left: n,
                right: if s.n() != n { s.n() } else { t.n() },
            });
        }
        let (s, t) = if s.is_hermitian() { (s, t) } else { (s.times_i_pow(3), t.times_i_pow(3)) };
        if !t.is_hermitian() {
            return Err(not_completable(i, format!("{s} is Hermitian but {t} is not")));
        }
        if s.is_identity() != t.is_identity() {
            return Err(not_completable(i, "identity must map to identity"));
        }
        if s.is_identity() && s.phase() != t.phase() {
            return Err(not_completable(i, "identity cannot change sign"));
        }
        pairs.push((s, t));
    }
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let cs = pairs[i].0.commutes_unchecked(&pairs[j].0);
            let ct = pairs[i].1.commutes_unchecked(&pairs[j].1);
            if cs != ct {
                return Err(not_completable(
                    j,
                    format!("commutation with pair {i} is not preserved ({} vs {})", pairs[j].0, pairs[j].1),
                ));
            }
        }
    }
    let nontrivial: Vec<(PauliString, PauliString)> = pairs.iter().copied().filter(|(s, _)| !s.is_identity()).collect();
    let (mut seen_s, mut seen_t): (Vec<SymVec>, Vec<SymVec>) = (Vec::new(), Vec::new());
    for (i, (s, t)) in pairs.iter().enumerate() {
        if s.is_identity() {
            continue;
        }
        seen_s.push(s.sym());
        seen_t.push(t.sym());
        if sym_rank(seen_s.iter().copied()) < seen_s.len() {
            return Err(not_completable(i, "sources are not independent"));
        }
        if sym_rank(seen_t.iter().copied()) < seen_t.len() {
            return Err(not_completable(i, "targets are not independent"));
        }
    }

    let split = symplectic_gram_schmidt(nontrivial.clone(), |a, b| a.mul_unchecked(b));
    let src_pairs: Vec<(SymVec, SymVec)> = split.pairs.iter().map(|((a, _), (b, _))| (a.sym(), b.sym())).collect();
    let tgt_pairs: Vec<(SymVec, SymVec)> = split.pairs.iter().map(|((_, ta), (_, tb))| (ta.sym(), tb.sym())).collect();
    let src_iso: Vec<SymVec> = split.isotropic.iter().map(|(s, _)| s.sym()).collect();
    let tgt_iso: Vec<SymVec> = split.isotropic.iter().map(|(_, t)| t.sym()).collect();
    let src_basis = extend_to_symplectic_basis(n, src_pairs, &src_iso);
    let tgt_basis = extend_to_symplectic_basis(n, tgt_pairs, &tgt_iso);

    let phi = |v: SymVec| {
        let mut out: SymVec = 0;
        for (&(sa, sb), &(ta, tb)) in src_basis.iter().zip(&tgt_basis) {
            if sym_inner(v, sb) {
                out ^= ta;
            }
            if sym_inner(v, sa) {
                out ^= tb;
            }
        }
        out
    };
    let xs: Vec<PauliString> = (0..n)
        .map(|j| PauliString::from_sym(n, phi(1u128 << j), 0))
        .collect::<std::result::Result<_, _>>()?;
    let zs: Vec<PauliString> = (0..n)
        .map(|j| PauliString::from_sym(n, phi(1u128 << (64 + j)), 0))
        .collect::<std::result::Result<_, _>>()?;
    let mut tab = CliffordTableau::from_images(xs, zs)?;

    let rows: Vec<SymVec> = nontrivial.iter().map(|(s, _)| s.sym()).collect();
    let wrong: Vec<bool> = nontrivial
        .iter()
        .map(|(s, t)| {
            let got = tab.conjugate_unchecked(s);
            debug_assert!(got.eq_unsigned(t));
            got.phase() != t.phase()
        })
        .collect();
    if wrong.iter().any(|&w| w) {
        let q = solve_symplectic_system(n, &rows, &wrong).expect("independent sources admit a sign fix");
        let (qx, qz) = sym_split(q);
        for k in 0..n {
            if (qz >> k) & 1 == 1 {
                tab.images[k] = tab.images[k].negated();
            }
            if (qx >> k) & 1 == 1 {
                tab.images[n + k] = tab.images[n + k].negated();
            }
        }
    }
    for (i, (s, t)) in pairs.iter().enumerate() {
        if tab.conjugate_unchecked(s) != *t {
            return Err(not_completable(i, "internal completion check failed"));
        }
    }
    Ok(tab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dense;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{HashMap, HashSet, VecDeque};

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn single_gate(n: usize, g: Gate) -> CliffordTableau {
        CliffordTableau::from_circuit(n, &[g]).unwrap()
    }

    fn random_gates(n: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<Gate> {
        (0..len)
            .map(|_| {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n);
                if n > 1 {
                    while b == a {
                        b = rng.random_range(0..n);
                    }
                }
                match rng.random_range(0..7) {
                    0 => Gate::H(a),
                    1 => Gate::S(a),
                    2 => Gate::X(a),
                    3 => Gate::Y(a),
                    4 => Gate::Z(a),
                    5 if n > 1 => Gate::CX(a, b),
                    6 if n > 1 => Gate::Swap(a, b),
                    _ => Gate::H(a),
                }
            })
            .collect()
    }

    fn enumerate_group(n: usize, gens: &[Gate]) -> HashSet<CliffordTableau> {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::new();
        let id = CliffordTableau::identity(n);
        seen.insert(id.clone());
        queue.push_back(id);
        while let Some(t) = queue.pop_front() {
            for &g in gens {
                let mut next = t.clone();
                next.apply_gate(g).unwrap();
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    #[test]
    fn hadamard_swaps_x_and_z() {
        let h = single_gate(1, Gate::H(0));
        assert_eq!(h.conjugate(&p("X")).unwrap(), p("Z"));
        assert_eq!(h.conjugate(&p("Z")).unwrap(), p("X"));
        let h = single_gate(2, Gate::H(0));
        assert_eq!(h.conjugate(&p("+ZI")).unwrap(), p("+XI"));
    }

    #[test]
    fn phase_gate_conjugation_follows_adjoint_action() {
        // S† X S = -Y; the image of X under the adjoint action is ±Y.
        let s = single_gate(1, Gate::S(0));
        assert_eq!(s.conjugate(&p("X")).unwrap(), p("-Y"));
        assert_eq!(s.conjugate(&p("Y")).unwrap(), p("X"));
        assert_eq!(s.conjugate(&p("Z")).unwrap(), p("Z"));
    }

    #[test]
    fn cnot_spreads_x_from_control() {
        let cx = single_gate(2, Gate::CX(0, 1));
        assert_eq!(cx.conjugate(&p("XI")).unwrap(), p("XX"));
        assert_eq!(cx.conjugate(&p("IZ")).unwrap(), p("ZZ"));
        assert_eq!(cx.conjugate(&p("ZI")).unwrap(), p("ZI"));
    }

    #[test]
    fn gate_errors() {
        let mut t = CliffordTableau::identity(2);
        assert!(matches!(t.apply_gate(Gate::H(2)), Err(CliffordError::QubitOutOfRange { .. })));
        assert!(matches!(t.apply_gate(Gate::CX(1, 1)), Err(CliffordError::RepeatedQubit(_))));
        assert!(t.conjugate(&p("X")).is_err());
    }

    #[test]
    fn identity_conjugation_is_trivial() {
        let id = CliffordTableau::identity(3);
        for q in ["-iXYZ", "+IIX", "+YYY"] {
            assert_eq!(id.conjugate(&p(q)).unwrap(), p(q));
        }
    }

    #[test]
    fn conjugation_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let gates = random_gates(4, 30, &mut rng);
            let t = CliffordTableau::from_circuit(4, &gates).unwrap();
            let u = dense::circuit_matrix(4, &gates);
            for _ in 0..10 {
                let q = random_pauli(4, &mut rng).times_i_pow(rng.random_range(0..4));
                let expected = u.adjoint() * dense::pauli_matrix(&q) * &u;
                let got = dense::pauli_matrix(&t.conjugate(&q).unwrap());
                assert!((expected - got).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn prepend_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let gates = random_gates(3, 12, &mut rng);
            let g = random_gates(3, 1, &mut rng)[0];
            let mut t = CliffordTableau::from_circuit(3, &gates).unwrap();
            t.prepend_gate(g).unwrap();
            let mut all = vec![g];
            all.extend(gates);
            assert_eq!(t, CliffordTableau::from_circuit(3, &all).unwrap());
        }
    }

    #[test]
    fn single_qubit_group_has_24_elements() {
        assert_eq!(enumerate_group(1, &[Gate::H(0), Gate::S(0)]).len(), 24);
    }

    #[test]
    fn two_qubit_group_has_11520_elements() {
        let gens = [Gate::H(0), Gate::H(1), Gate::S(0), Gate::S(1), Gate::CX(0, 1)];
        assert_eq!(enumerate_group(2, &gens).len(), 11520);
    }

    #[test]
    fn sampler_is_uniform_on_one_qubit() {
        let group: Vec<_> = enumerate_group(1, &[Gate::H(0), Gate::S(0)]).into_iter().collect();
        let index: HashMap<_, _> = group.iter().cloned().zip(0..).collect();
        let mut counts = vec![0u64; group.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 100_000;
        for _ in 0..draws {
            let t = sample_uniform(1, &mut rng);
            counts[index[&t]] += 1;
        }
        let expected = draws as f64 / 24.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let pval = 1.0 - ChiSquared::new(23.0).unwrap().cdf(chi2);
        assert!(pval > 0.01, "chi2 = {chi2}, p = {pval}");
    }

    #[test]
    fn sampled_tableaux_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=12 {
            assert!(sample_uniform(n, &mut rng).is_valid());
        }
        assert!(sample_uniform(64, &mut rng).is_valid());
    }

    #[test]
    fn synthesis_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=7 {
            for _ in 0..10 {
                let t = sample_uniform(n, &mut rng);
                let c = t.to_circuit();
                assert_eq!(CliffordTableau::from_circuit(n, &c).unwrap(), t);
            }
        }
    }

    #[test]
    fn inverse_and_composition_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for n in 1..=5 {
            let t = sample_uniform(n, &mut rng);
            let id = CliffordTableau::identity(n);
            assert!(t.compose(&t.inverse()).unwrap().is_identity());
            assert!(t.inverse().compose(&t).unwrap().is_identity());
            assert_eq!(t.inverse().inverse(), t);
            assert_eq!(t.compose(&id).unwrap(), t);
            assert_eq!(id.compose(&t).unwrap(), t);
        }
    }

    #[test]
    fn compose_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ga = random_gates(3, 15, &mut rng);
        let gb = random_gates(3, 15, &mut rng);
        let a = CliffordTableau::from_circuit(3, &ga).unwrap();
        let b = CliffordTableau::from_circuit(3, &gb).unwrap();
        let ab = a.compose(&b).unwrap();
        let mut seq = gb.clone();
        seq.extend(ga.iter().copied());
        assert_eq!(ab, CliffordTableau::from_circuit(3, &seq).unwrap());
    }

    #[test]
    fn conjugate_and_transpose_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let gates = random_gates(3, 20, &mut rng);
            let t = CliffordTableau::from_circuit(3, &gates).unwrap();
            let u = dense::circuit_matrix(3, &gates);
            for (tab, m) in [(t.complex_conjugate(), u.conjugate()), (t.transpose(), u.transpose()), (t.inverse(), u.adjoint())] {
                let m_from_tab = dense::circuit_matrix(3, &tab.to_circuit());
                assert!(dense::equal_up_to_phase(&m, &m_from_tab, 1e-10));
            }
        }
    }

    #[test]
    fn symmetric_clifford_is_its_own_transpose() {
        // CZ and Z are diagonal, hence symmetric.
        let gates = [
            Gate::H(1),
            Gate::CX(0, 1),
            Gate::H(1),
            Gate::Z(2),
            Gate::H(2),
            Gate::CX(1, 2),
            Gate::H(2),
        ];
        let t = CliffordTableau::from_circuit(3, &gates).unwrap();
        assert_eq!(t.transpose(), t);
        let u = dense::circuit_matrix(3, &gates);
        assert!((u.transpose() - &u).norm() < 1e-12);
    }

    #[test]
    fn complete_identity_and_hadamard() {
        let mut m = PartialPauliMap::new(1);
        m.push(p("X"), p("X"));
        m.push(p("Z"), p("Z"));
        assert!(complete_to_clifford(&m).unwrap().is_identity());
        let mut m = PartialPauliMap::new(1);
        m.push(p("X"), p("Z"));
        m.push(p("Z"), p("X"));
        let t = complete_to_clifford(&m).unwrap();
        assert_eq!(t, single_gate(1, Gate::H(0)));
    }

    #[test]
    fn complete_rejects_broken_commutation() {
        let mut m = PartialPauliMap::new(2);
        m.push(p("XI"), p("XI"));
        m.push(p("ZI"), p("IZ"));
        match complete_to_clifford(&m) {
            Err(CliffordError::NotCompletable { pair, .. }) => assert_eq!(pair, 1),
            other => panic!("unexpected {other:?}"),
        }
        let mut m = PartialPauliMap::new(2);
        m.push(p("XI"), p("XI"));
        m.push(p("XI"), p("-XI"));
        assert!(complete_to_clifford(&m).is_err());
    }

    #[test]
    fn complete_reproduces_restricted_random_cliffords() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for n in 1..=6 {
            for _ in 0..10 {
                let u = sample_uniform(n, &mut rng);
                let k = rng.random_range(1..=2 * n);
                let mut m = PartialPauliMap::new(n);
                let mut srcs: Vec<PauliString> = Vec::new();
                while srcs.len() < k {
                    let s = random_pauli(n, &mut rng);
                    let mut trial: Vec<_> = srcs.iter().map(|q| q.sym()).collect();
                    trial.push(s.sym());
                    if !s.is_identity() && sym_rank(trial) == srcs.len() + 1 {
                        srcs.push(s);
                    }
                }
                for s in srcs {
                    m.push(s, u.conjugate(&s).unwrap());
                }
                let t = complete_to_clifford(&m).unwrap();
                assert!(t.is_valid());
                for (s, tg) in &m.pairs {
                    assert_eq!(t.conjugate(s).unwrap(), *tg);
                }
            }
        }
    }

    #[test]
    fn circuit_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let gates = random_gates(5, 40, &mut rng);
        let text = format_circuit(&gates);
        let back = parse_circuit(5, &text).unwrap();
        assert_eq!(back, gates);
        assert_eq!(format_circuit(&back), text);
        assert!(parse_circuit(2, "H 5\n").is_err());
        assert!(parse_circuit(2, "FOO 1\n").is_err());
    }

    #[test]
    fn embed_acts_on_targets_only() {
        let h = single_gate(1, Gate::H(0));
        let e = h.embed(3, &[2]).unwrap();
        assert_eq!(e.conjugate(&p("XIX")).unwrap(), p("XIZ"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn conjugation_is_a_homomorphism(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = sample_uniform(5, &mut rng);
            let a = random_pauli(5, &mut rng).times_i_pow(rng.random_range(0..4));
            let b = random_pauli(5, &mut rng);
            let lhs = t.conjugate(&a.mul(&b).unwrap()).unwrap();
            let rhs = t.conjugate(&a).unwrap().mul(&t.conjugate(&b).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn then_is_associative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = sample_uniform(4, &mut rng);
            let b = sample_uniform(4, &mut rng);
            let c = sample_uniform(4, &mut rng);
            prop_assert_eq!(a.then(&b).unwrap().then(&c).unwrap(), a.then(&b.then(&c).unwrap()).unwrap());
        }
    }
}
