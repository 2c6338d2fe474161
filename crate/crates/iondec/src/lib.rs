//! Simulator for the decoherence of a single laser-driven trapped ion coupled
//! to an engineered reservoir realized as white-noise fluctuations of the
//! trap frequency.
//!
//! Three mutually validating pictures of the same physics:
//!
//! * [`analytic`] — the closed-form noise-free evolution of an internal ⊗
//!   coherent-state superposition and its coherence modulus R(ω, t);
//! * [`master`] — fixed-step integration of the noise-averaged block
//!   equations with a double-commutator X² dephasing dissipator, plus the
//!   short-time closed-form decay law and rate fitting;
//! * [`trajectories`] — seeded stochastic pure-state realizations under the
//!   fluctuating Hamiltonian whose ensemble mean converges to [`master`].
//!
//! [`fock`] supplies the truncated-space operators and states, [`model`] the
//! parameter set and the effective Hamiltonian, [`linalg`] the dense support
//! routines (tridiagonal eigensolvers, matrix exponential, banded kernels).

pub mod analytic;
pub mod fock;
pub mod linalg;
pub mod master;
pub mod model;
pub mod trajectories;
