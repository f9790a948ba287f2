//! Desk-scale simulation of Merlin-Arthur verification when the verifier can
//! draw non-collapsing samples from the witness state, or inspect the whole
//! history of a hidden variable.
//!
//! The crate is organized around the verification pipeline: [`field`] and
//! [`affine`] provide exact F_q arithmetic and cube geometry, [`encode`]
//! turns proof tables into multilinear extensions and low-degree tests,
//! [`qsim`] is a sparse labeled-register state simulator, [`hv`] supplies
//! hidden-variable dynamics and the juggle subroutines, [`pcp`] holds toy
//! two-query constraint-graph instances, and [`protocol`] runs the PDQMA and
//! DQMA verifiers against honest and adversarial provers.

// `x % q == 0` is the conventional way to write modular divisibility here.
#![allow(clippy::manual_is_multiple_of)]

pub mod affine;
pub mod encode;
pub mod field;
pub mod hv;
pub mod pcp;
pub mod protocol;
pub mod qsim;
