//! Adiabatic-passage CNOT gate for two five-level atoms in a single-mode cavity.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod darkstates;
pub mod dynamics;
pub mod error;
pub mod gateanalysis;
pub mod hamiltonian;
pub mod pulses;
pub mod statespace;

pub use error::{Error, Result};
pub use statespace::{ket, Atom, AtomLevel, BasisState, HilbertSpace, StateVector};
