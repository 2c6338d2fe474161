//! Truncated Fock-space linear algebra: ladder operators, quadratures,
//! coherent states, overlaps, and the truncation-leakage diagnostic.
//!
//! The basis is |0⟩ … |N−1⟩ for a truncation size N ≥ 2. All operators are
//! dense N×N complex matrices; states are N-component complex vectors. Norm
//! may fall below one when a state has weight beyond the truncation — that
//! loss is tracked explicitly via [`truncation_leakage`], never silently
//! renormalized away.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("Fock truncation must be at least 2, got {0}")]
    DimTooSmall(usize),
    #[error("operands live in different Fock spaces: dim {0} vs dim {1}")]
    SpaceMismatch(usize, usize),
}

/// A truncated Fock space, identified by its truncation size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    dim: usize,
}

impl FockSpace {
    pub fn new(dim: usize) -> Result<Self, FockError> {
        if dim < 2 {
            Err(FockError::DimTooSmall(dim))
        } else {
            Ok(Self { dim })
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// A dense operator on a truncated Fock space.
#[derive(Debug, Clone)]
pub struct Operator {
    pub entries: Array2<C64>,
    pub space: FockSpace,
}

impl Operator {
    pub fn from_entries(entries: Array2<C64>, space: FockSpace) -> Self {
        assert_eq!(entries.dim(), (space.dim(), space.dim()));
        Self { entries, space }
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.t().mapv(|x| x.conj()),
            space: self.space,
        }
    }

    /// Largest entrywise deviation from A = A†.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.entries[[i, j]] - self.entries[[j, i]].conj()).norm());
            }
        }
        worst
    }
}

/// A (possibly sub-normalized) state vector over a truncated Fock space.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub amplitudes: Array1<C64>,
    pub space: FockSpace,
}

impl StateVector {
    pub fn from_amplitudes(amplitudes: Array1<C64>, space: FockSpace) -> Self {
        assert_eq!(amplitudes.len(), space.dim());
        Self { amplitudes, space }
    }

    /// Basis state |n⟩.
    pub fn fock(n: usize, space: FockSpace) -> Self {
        assert!(n < space.dim());
        let mut amplitudes = Array1::zeros(space.dim());
        amplitudes[n] = C64::new(1.0, 0.0);
        Self { amplitudes, space }
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Annihilation and creation operators: ⟨n−1|a|n⟩ = √n, a† = aᵀ*.
pub fn ladder(space: FockSpace) -> (Operator, Operator) {
    let n = space.dim();
    let mut a: Array2<C64> = Array2::zeros((n, n));
    for k in 1..n {
        a[[k - 1, k]] = C64::new((k as f64).sqrt(), 0.0);
    }
    let adag = a.t().mapv(|x| x.conj());
    (
        Operator::from_entries(a, space),
        Operator::from_entries(adag, space),
    )
}

/// Number operator a†a = diag(0, 1, …, N−1).
pub fn number(space: FockSpace) -> Operator {
    let n = space.dim();
    let mut m: Array2<C64> = Array2::zeros((n, n));
    for k in 0..n {
        m[[k, k]] = C64::new(k as f64, 0.0);
    }
    Operator::from_entries(m, space)
}

/// Dimensionless quadratures X = (a + a†)/2 and P = i(a† − a)/2, normalized so
/// that ω(P² + X²) has oscillator eigenvalues ω(n + 1/2) and [X, P] = i/2.
pub fn quadratures(space: FockSpace) -> (Operator, Operator) {
    let (a, adag) = ladder(space);
    let half = C64::new(0.5, 0.0);
    let x = (&a.entries + &adag.entries).mapv(|v| v * half);
    let p = (&adag.entries - &a.entries).mapv(|v| v * C64::new(0.0, 0.5));
    (
        Operator::from_entries(x, space),
        Operator::from_entries(p, space),
    )
}

/// Coherent state |α⟩ truncated to the space: c_n = e^{−|α|²/2} αⁿ/√n!.
///
/// Amplitudes are built by the multiplicative recurrence
/// c_{n+1} = c_n · α/√(n+1), which stays finite for any truncation (every
/// |c_n| ≤ 1), so no factorial is ever formed. For |α|² approaching the
/// truncation the missing tail shows up as norm < 1; callers decide what
/// leakage they tolerate via [`truncation_leakage`].
pub fn coherent_state(alpha: C64, space: FockSpace) -> StateVector {
    let n = space.dim();
    let mut amplitudes = Array1::zeros(n);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amplitudes[0] = c;
    for k in 1..n {
        c *= alpha / C64::new((k as f64).sqrt(), 0.0);
        amplitudes[k] = c;
    }
    StateVector::from_amplitudes(amplitudes, space)
}

/// ⟨ψ|φ⟩ = Σ_n ψ_n* φ_n.
pub fn overlap(psi: &StateVector, phi: &StateVector) -> Result<C64, FockError> {
    if psi.space != phi.space {
        return Err(FockError::SpaceMismatch(psi.space.dim(), phi.space.dim()));
    }
    Ok(psi
        .amplitudes
        .iter()
        .zip(phi.amplitudes.iter())
        .map(|(p, q)| p.conj() * q)
        .sum())
}

/// Closed-form coherent-state overlap ⟨α|β⟩ = exp(−|α|²/2 − |β|²/2 + α*β).
///
/// This is the untruncated value; it doubles as the analytic oracle for
/// [`overlap`] on truncated coherent states.
pub fn coherent_overlap(alpha: C64, beta: C64) -> C64 {
    (C64::new(-(alpha.norm_sqr() + beta.norm_sqr()) / 2.0, 0.0) + alpha.conj() * beta).exp()
}

/// Probability carried by the top `tail` Fock levels of the state.
///
/// This is the truncation-adequacy diagnostic: a state whose top levels carry
/// significant weight is being clipped by the basis cutoff.
pub fn truncation_leakage(psi: &StateVector, tail: usize) -> f64 {
    let n = psi.space.dim();
    assert!(tail < n, "tail must be smaller than the truncation");
    psi.amplitudes
        .iter()
        .skip(n - tail)
        .map(|a| a.norm_sqr())
        .sum()
}

/// ⟨ψ|O|ψ⟩.
pub fn expectation(op: &Operator, psi: &StateVector) -> Result<C64, FockError> {
    if op.space != psi.space {
        return Err(FockError::SpaceMismatch(op.space.dim(), psi.space.dim()));
    }
    let opsi = op.entries.dot(&psi.amplitudes);
    Ok(psi
        .amplitudes
        .iter()
        .zip(opsi.iter())
        .map(|(p, q)| p.conj() * q)
        .sum())
}

/// A two-level ⊗ motional pure state, stored as the pair of motional
/// components attached to |g⟩ and |e⟩.
#[derive(Debug, Clone)]
pub struct SpinMotionState {
    pub g: Array1<C64>,
    pub e: Array1<C64>,
}

impl SpinMotionState {
    pub fn zeros(dim: usize) -> Self {
        Self {
            g: Array1::zeros(dim),
            e: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn norm_sq(&self) -> f64 {
        let s: f64 = self.g.iter().map(|a| a.norm_sqr()).sum();
        s + self.e.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}
