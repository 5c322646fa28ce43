//! Learning and evaluating Clifford decoders for t-doped Clifford scramblers.
//!
//! The crate is organised bottom-up:
//!
//! - [`pauli`]: signed Pauli strings and GF(2) symplectic algebra.
//! - [`clifford`]: tableaux, uniform sampling, symplectic completion.
//! - [`doped`]: Clifford+T circuits, exact Pauli propagation, OTOCs, ensembles.
//! - [`oracle`]: dense statevector reference for small systems.
//! - [`learner`]: black-box learning of the preserved Pauli subgroup.
//! - [`synth`]: diagonalizer, randomizer and decrypter construction.
//! - [`harness`]: fidelity evaluators, experiments, statistics and the CLI.

pub mod clifford;
pub mod doped;
pub mod harness;
pub mod learner;
pub mod oracle;
pub mod pauli;
pub mod synth;

pub use clifford::{CliffordTableau, Gate, PartialPauliMap};
pub use doped::{DopedCircuit, DopedGate, Dyadic, PauliSum};
pub use pauli::{PauliString, PauliSubgroup, SubsystemMask};
