//! Decoder synthesis from learned groups.
//!
//! The decoder is `V = D·R·D†·V′`: the diagonalizer `D` rotates the learned
//! group onto the full Pauli group of a subsystem E of the readout register,
//! the decrypter `V′` reproduces the scrambler's action on it, and the
//! randomizer `R` scrambles the remainder `F = D \ E` together with C.
//!
//! All three tableaux are stored on the full n-qubit register; the
//! diagonalizer acts trivially outside D and the randomizer outside F∪C.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{
    complete_to_clifford, format_circuit, parse_circuit, sample_uniform, CliffordError, CliffordTableau,
    PartialPauliMap,
};
use crate::learner::LearnedGroups;
use crate::pauli::{PauliString, SubsystemMask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error("learned group has odd rank {0}; no symplectic diagonalization exists")]
    OddRank(usize),
    #[error("invalid choice of E: {0}")]
    InvalidE(String),
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },
    #[error("no learned image for {0}")]
    MissingImage(PauliString),
    #[error("diagonalizer check failed: {0} is not mapped into P_E")]
    DiagonalizerCheck(PauliString),
    #[error("bundle format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Learned decoder `V = D·R·D†·V′` with subsystem bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderBundle {
    pub d: SubsystemMask,
    pub e: SubsystemMask,
    pub diagonalizer: CliffordTableau,
    pub randomizer: CliffordTableau,
    pub decrypter: CliffordTableau,
    pub randomizer_seed: Option<u64>,
    composite: CliffordTableau,
}

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    n: usize,
    d: SubsystemMask,
    e: SubsystemMask,
    randomizer_seed: Option<u64>,
}

impl DecoderBundle {
    pub fn n(&self) -> usize {
        self.composite.n()
    }

    /// `F = D \ E`.
    pub fn f(&self) -> SubsystemMask {
        self.d.difference(&self.e)
    }

    /// `C`, the complement of the readout register.
    pub fn c(&self) -> SubsystemMask {
        self.d.complement()
    }

    /// Tableau of `D·R·D†·V′`.
    pub fn composite(&self) -> &CliffordTableau {
        &self.composite
    }

    /// Same components with a different randomizer.
    pub fn with_randomizer(&self, randomizer: CliffordTableau, seed: Option<u64>) -> Result<Self> {
        assemble(
            self.diagonalizer.clone(),
            randomizer,
            self.decrypter.clone(),
            self.d,
            self.e,
            seed,
        )
    }

    /// A one-line JSON header followed by the three tableaux as circuits.
    pub fn to_text(&self) -> String {
        let header = BundleHeader {
            n: self.n(),
            d: self.d,
            e: self.e,
            randomizer_seed: self.randomizer_seed,
        };
        let mut out = serde_json::to_string(&header).expect("serialisable");
        out.push('\n');
        for (name, t) in [
            ("diagonalizer", &self.diagonalizer),
            ("randomizer", &self.randomizer),
            ("decrypter", &self.decrypter),
        ] {
            out.push_str(&format!("# {name}\n"));
            out.push_str(&format_circuit(&t.to_circuit()));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header_line = lines.next().ok_or_else(|| SynthError::Format("empty input".into()))?;
        let header: BundleHeader = serde_json::from_str(header_line).map_err(|e| SynthError::Format(e.to_string()))?;
        let mut sections: Vec<(String, String)> = Vec::new();
        for line in lines {
            if let Some(name) = line.strip_prefix("# ") {
                sections.push((name.trim().to_string(), String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push_str(line);
                body.push('\n');
            } else if !line.trim().is_empty() {
                return Err(SynthError::Format(format!("gate outside a section: {line:?}")));
            }
        }
        let get = |name: &str| -> Result<CliffordTableau> {
            let body = sections
                .iter()
                .find(|(s, _)| s == name)
                .map(|(_, b)| b.as_str())
                .ok_or_else(|| SynthError::Format(format!("missing section {name}")))?;
            let gates = parse_circuit(header.n, body)?;
            Ok(CliffordTableau::from_circuit(header.n, &gates)?)
        };
        assemble(
            get("diagonalizer")?,
            get("randomizer")?,
            get("decrypter")?,
            header.d,
            header.e,
            header.randomizer_seed,
        )
    }
}

fn pin_outside(map: &mut PartialPauliMap, keep: &SubsystemMask) {
    let n = map.n;
    for q in keep.complement().qubits() {
        map.push(PauliString::x_on(n, q), PauliString::x_on(n, q));
        map.push(PauliString::z_on(n, q), PauliString::z_on(n, q));
    }
}

/// Clifford on D with `D† a_k D = X_{e_k}`, `D† b_k D = Z_{e_k}` for the
/// learned hyperbolic pairs `(a_k, b_k)`. E defaults to the lowest-index
/// qubits of D.
pub fn build_diagonalizer(groups: &LearnedGroups, e_choice: Option<&SubsystemMask>) -> Result<(CliffordTableau, SubsystemMask)> {
    if groups.odd_rank {
        return Err(SynthError::OddRank(groups.rank()));
    }
    diagonalizer_from_pairs(groups, e_choice)
}

fn diagonalizer_from_pairs(groups: &LearnedGroups, e_choice: Option<&SubsystemMask>) -> Result<(CliffordTableau, SubsystemMask)> {
    let d = groups.d;
    let n = d.n();
    let e_size = groups.pairs.len();
    let e = match e_choice {
        Some(e) => {
            if e.n() != n || !e.is_subset_of(&d) || e.len() != e_size {
                return Err(SynthError::InvalidE(format!("{e:?} must be a {e_size}-qubit subset of {d:?}")));
            }
            *e
        }
        None => SubsystemMask::from_qubits(n, &d.qubits()[..e_size]).expect("subset of D"),
    };
    let mut map = PartialPauliMap::new(n);
    for (((a, _), (b, _)), q) in groups.pairs.iter().zip(e.qubits()) {
        map.push(*a, PauliString::x_on(n, q));
        map.push(*b, PauliString::z_on(n, q));
    }
    pin_outside(&mut map, &d);
    let tab = complete_to_clifford(&map)?;
    for (g, _) in groups.pairs.iter().flat_map(|(x, z)| [x, z]) {
        let img = tab.conjugate(g)?;
        if !e.supports(&img) {
            return Err(SynthError::DiagonalizerCheck(*g));
        }
    }
    Ok((tab, e))
}

/// Clifford `V′` with `V′† (D P D†) V′ = U† (D P D†) U` on the generators of
/// `P_E`, signs included.
pub fn build_decrypter(groups: &LearnedGroups, diagonalizer: &CliffordTableau, e: &SubsystemMask) -> Result<CliffordTableau> {
    let n = diagonalizer.n();
    if groups.d.n() != n || e.n() != n {
        return Err(SynthError::DimensionMismatch {
            left: n,
            right: groups.d.n(),
        });
    }
    let inv = diagonalizer.inverse();
    let mut map = PartialPauliMap::new(n);
    for q in e.qubits() {
        for gen in [PauliString::x_on(n, q), PauliString::z_on(n, q)] {
            let src = inv.conjugate(&gen)?;
            let img = groups.image_of(&src).ok_or(SynthError::MissingImage(src))?;
            map.push(src, img);
        }
    }
    Ok(complete_to_clifford(&map)?)
}

/// Uniform random Clifford on `F ∪ C`; identity when F is empty.
pub fn build_randomizer<R: Rng + ?Sized>(n: usize, f: &SubsystemMask, c: &SubsystemMask, rng: &mut R) -> Result<CliffordTableau> {
    if f.n() != n || c.n() != n {
        return Err(SynthError::DimensionMismatch { left: n, right: f.n() });
    }
    if !f.is_disjoint(c) {
        return Err(SynthError::InvalidE("F and C overlap".into()));
    }
    if f.is_empty() {
        return Ok(CliffordTableau::identity(n));
    }
    let support = f.union(c).qubits();
    Ok(sample_uniform(support.len(), rng).embed(n, &support)?)
}

pub fn build_randomizer_seeded(n: usize, f: &SubsystemMask, c: &SubsystemMask, seed: u64) -> Result<CliffordTableau> {
    build_randomizer(n, f, c, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Bundles the components; the composite runs `V′`, then `D†`, then `R`,
/// then `D`.
pub fn assemble(
    diagonalizer: CliffordTableau,
    randomizer: CliffordTableau,
    decrypter: CliffordTableau,
    d: SubsystemMask,
    e: SubsystemMask,
    randomizer_seed: Option<u64>,
) -> Result<DecoderBundle> {
    let n = decrypter.n();
    for t in [&diagonalizer, &randomizer] {
        if t.n() != n {
            return Err(SynthError::DimensionMismatch { left: n, right: t.n() });
        }
    }
    if d.n() != n || e.n() != n || !e.is_subset_of(&d) {
        return Err(SynthError::InvalidE(format!("{e:?} must lie inside {d:?}")));
    }
    let composite = decrypter
        .then(&diagonalizer.inverse())?
        .then(&randomizer)?
        .then(&diagonalizer)?;
    Ok(DecoderBundle {
        d,
        e,
        diagonalizer,
        randomizer,
        decrypter,
        randomizer_seed,
        composite,
    })
}

/// Full pipeline from learned groups: diagonalizer, decrypter, seeded
/// randomizer.
pub fn synthesize(groups: &LearnedGroups, randomizer_seed: u64) -> Result<DecoderBundle> {
    if groups.odd_rank {
        return Err(SynthError::OddRank(groups.rank()));
    }
    synthesize_symplectic_part(groups, randomizer_seed)
}

/// Like [`synthesize`] but accepts a degenerate group, decoding with its
/// hyperbolic pairs only. The radical is treated as part of F.
pub fn synthesize_symplectic_part(groups: &LearnedGroups, randomizer_seed: u64) -> Result<DecoderBundle> {
    let (diag, e) = diagonalizer_from_pairs(groups, None)?;
    let decr = build_decrypter(groups, &diag, &e)?;
    let n = groups.d.n();
    let f = groups.d.difference(&e);
    let c = groups.d.complement();
    let rand = build_randomizer_seeded(n, &f, &c, randomizer_seed)?;
    let seed = (!f.is_empty()).then_some(randomizer_seed);
    assemble(diag, rand, decr, groups.d, e, seed)
}
