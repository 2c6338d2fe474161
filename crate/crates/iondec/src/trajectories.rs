//! Stochastic realization of the engineered reservoir: pure-state evolution
//! under the fluctuating-spring-constant Hamiltonian and ensemble averaging
//! that converges (weakly, order 1 in dt) to the averaged master equation.
//!
//! Each realization evolves |ψ⟩ under H₀ dt + √(2κ)·X²·dW with exactly
//! unitary factors: the deterministic step uses the eigendecomposition of the
//! σ_z-conditional Hamiltonians and the noise factor is an exact phase in the
//! X eigenbasis. Averaging e^{−i√(2κ)X²dW} over dW ~ N(0, dt) reproduces the
//! −κ[X², [X², ρ]] dissipator, so trajectories and the master module share
//! one κ and agree for every dissipator preset; the source's √Γ·ω amplitude
//! is the κ = Γω²/2 preset.
//!
//! A density-operator Ito equation would carry dim² state per realization;
//! pure states are dim and equivalent for Hamiltonian noise, the average over
//! runs being all that is consumed.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::fock::{self, SpinMotionState};
use crate::linalg::{hermitian_tridiag_eigen, matvec_into, sym_tridiag_eigen};
use crate::master::{
    BlockSeries, DissipatorPreset, IntegrationDiagnostics, InternalBlocks, MasterError, TimeSeries,
};
use crate::model::{self, Level, ModelError, SystemParams};
use crate::analytic;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error("time grid must be uniform with at least two points")]
    BadGrid,
    #[error("need at least {0} trajectories")]
    TooFewTrajectories(usize),
    #[error("per-trajectory norm drifted by {drift:e} at step {step}; aborting")]
    NormDrift { step: usize, drift: f64 },
}

/// A seeded Wiener-increment path over a fixed step size.
///
/// Same (seed, dt, count) always reproduces the identical sequence bit for
/// bit; the generator is counter-based (ChaCha), so realizations indexed by
/// seed are independent streams.
#[derive(Debug, Clone)]
pub struct NoiseRealization {
    pub seed: u64,
    pub dt: f64,
    pub increments: Vec<f64>,
}

/// Draw `steps` independent Normal(0, dt) increments from the seed.
pub fn wiener(seed: u64, dt: f64, steps: usize) -> NoiseRealization {
    assert!(dt > 0.0, "dt must be positive");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sqrt_dt = dt.sqrt();
    let increments = (0..steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sqrt_dt
        })
        .collect();
    NoiseRealization { seed, dt, increments }
}

/// Precomputed one-step propagator for a fixed (params, κ, dt).
///
/// The deterministic factor exp(−iH_± dt) is exact via eigendecomposition;
/// the noise factor is an exact diagonal phase in the X eigenbasis. Stepping
/// is done in X eigencoordinates so each step is a single dense mat-vec per
/// internal branch plus an elementwise phase.
pub struct TrajectoryPropagator {
    dim: usize,
    pub dt: f64,
    /// √(2κ): phase amplitude multiplying X²·dW.
    pub noise_amp: f64,
    /// X eigenvalues squared (the noise phases' generator spectrum).
    x2_evals: Vec<f64>,
    /// Real orthogonal X eigenvectors, columns.
    x_evecs: Array2<f64>,
    /// Vᵀ·exp(−iH_g dt)·V and Vᵀ·exp(−iH_e dt)·V.
    u_g: Array2<C64>,
    u_e: Array2<C64>,
}

impl TrajectoryPropagator {
    pub fn new(
        params: &SystemParams,
        preset: DissipatorPreset,
        dt: f64,
    ) -> Result<Self, TrajectoryError> {
        params.validate().map_err(ModelError::from)?;
        assert!(dt > 0.0, "dt must be positive");
        let space = params.space().map_err(ModelError::from)?;
        let dim = space.dim();
        let kappa = preset.kappa(params.gamma, params.omega);

        // X = (a + a†)/2 is real symmetric tridiagonal
        let x_diag = vec![0.0; dim];
        let x_off: Vec<f64> = (1..dim).map(|k| (k as f64).sqrt() / 2.0).collect();
        let (x_evals, x_evecs) = sym_tridiag_eigen(&x_diag, &x_off);
        let x2_evals: Vec<f64> = x_evals.iter().map(|l| l * l).collect();

        let g = model::coupling_g(params).map_err(ModelError::from)?;
        let branch_u = |level: Level| -> Array2<C64> {
            let h = model::branch_hamiltonian(params.omega, g, level, space);
            let diag: Vec<f64> = (0..dim).map(|i| h.entries[[i, i]].re).collect();
            let off: Vec<C64> = (0..dim - 1).map(|i| h.entries[[i, i + 1]]).collect();
            let (evals, evecs) = hermitian_tridiag_eigen(&diag, &off);
            let u = crate::linalg::propagator(&evals, &evecs, dt);
            // conjugate into the X eigenbasis once, so steps are single mat-vecs
            let mut vt_u: Array2<C64> = Array2::zeros((dim, dim));
            for i in 0..dim {
                for j in 0..dim {
                    let mut acc = C64::new(0.0, 0.0);
                    for k in 0..dim {
                        acc += C64::new(x_evecs[[k, i]], 0.0) * u[[k, j]];
                    }
                    vt_u[[i, j]] = acc;
                }
            }
            let mut out: Array2<C64> = Array2::zeros((dim, dim));
            for i in 0..dim {
                for j in 0..dim {
                    let mut acc = C64::new(0.0, 0.0);
                    for k in 0..dim {
                        acc += vt_u[[i, k]] * C64::new(x_evecs[[k, j]], 0.0);
                    }
                    out[[i, j]] = acc;
                }
            }
            out
        };

        let u_g = branch_u(Level::G);
        let u_e = branch_u(Level::E);
        Ok(Self {
            dim,
            dt,
            noise_amp: (2.0 * kappa).sqrt(),
            x2_evals,
            x_evecs,
            u_g,
            u_e,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Transform a Fock-basis state into X eigencoordinates.
    pub fn to_eigenbasis(&self, state: &SpinMotionState) -> SpinMotionState {
        SpinMotionState {
            g: self.vt_dot(&state.g),
            e: self.vt_dot(&state.e),
        }
    }

    /// Transform X-eigencoordinates back to the Fock basis.
    pub fn to_fock_basis(&self, state: &SpinMotionState) -> SpinMotionState {
        SpinMotionState {
            g: self.v_dot(&state.g),
            e: self.v_dot(&state.e),
        }
    }

    fn vt_dot(&self, x: &Array1<C64>) -> Array1<C64> {
        let n = self.dim;
        Array1::from_shape_fn(n, |i| {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                acc += C64::new(self.x_evecs[[k, i]], 0.0) * x[k];
            }
            acc
        })
    }

    fn v_dot(&self, x: &Array1<C64>) -> Array1<C64> {
        let n = self.dim;
        Array1::from_shape_fn(n, |i| {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                acc += C64::new(self.x_evecs[[i, k]], 0.0) * x[k];
            }
            acc
        })
    }

    /// One step in X eigencoordinates: χ ← Φ(dW)·(Vᵀ U V)·χ, writing through
    /// the scratch buffer.
    fn step_eig(&self, state: &mut SpinMotionState, dw: f64, scratch: &mut Array1<C64>) {
        matvec_into(&self.u_g, &state.g, scratch);
        state.g.assign(scratch);
        matvec_into(&self.u_e, &state.e, scratch);
        state.e.assign(scratch);
        let theta = self.noise_amp * dw;
        if theta != 0.0 {
            for (k, &l2) in self.x2_evals.iter().enumerate() {
                let phase = C64::from_polar(1.0, -theta * l2);
                state.g[k] *= phase;
                state.e[k] *= phase;
            }
        }
    }

    /// One step of the random-unitary evolution on a Fock-basis state:
    /// |ψ⟩ ← exp(−i√(2κ)·X²·dW)·exp(−iH₀ dt)|ψ⟩.
    ///
    /// Each factor is exactly unitary; norm drift beyond 1e−8 aborts.
    pub fn step(&self, state: &SpinMotionState, dw: f64) -> Result<SpinMotionState, TrajectoryError> {
        let norm_before = state.norm();
        let mut eig = self.to_eigenbasis(state);
        let mut scratch = Array1::zeros(self.dim);
        self.step_eig(&mut eig, dw, &mut scratch);
        let out = self.to_fock_basis(&eig);
        let drift = (out.norm() - norm_before).abs();
        if !(drift <= 1e-8) {
            return Err(TrajectoryError::NormDrift { step: 0, drift });
        }
        Ok(out)
    }
}

/// Ensemble controls: trajectory count, base seed, and how many SDE substeps
/// subdivide each grid interval.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleOptions {
    pub n_traj: usize,
    pub base_seed: u64,
    pub substeps: usize,
}

/// Ensemble averages with per-observable statistics.
///
/// `coherence` is the mean of the per-trajectory lab-frame coherence
/// Tr_e⟨g|ρ|e⟩ (a linear functional of the state, so its ensemble mean is the
/// master-equation observable); `coherence_r` its modulus; `stderr` the
/// standard error of the modulus along the mean's phase direction.
pub struct EnsembleResult {
    pub mean_blocks: BlockSeries,
    pub coherence: TimeSeries<C64>,
    pub coherence_r: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_traj: usize,
    pub base_seed: u64,
}

struct Partial {
    block_sums: Vec<[Array2<C64>; 4]>,
    c_sum: Vec<C64>,
    c_sq_sum: Vec<C64>,
    c_abs_sq_sum: Vec<f64>,
    max_norm_drift: f64,
}

impl Partial {
    fn zeros(n_points: usize, dim: usize) -> Self {
        Self {
            block_sums: (0..n_points)
                .map(|_| std::array::from_fn(|_| Array2::zeros((dim, dim))))
                .collect(),
            c_sum: vec![C64::new(0.0, 0.0); n_points],
            c_sq_sum: vec![C64::new(0.0, 0.0); n_points],
            c_abs_sq_sum: vec![0.0; n_points],
            max_norm_drift: 0.0,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (mine, theirs) in self.block_sums.iter_mut().zip(other.block_sums.into_iter()) {
            for (m, t) in mine.iter_mut().zip(theirs.into_iter()) {
                *m += &t;
            }
        }
        for k in 0..self.c_sum.len() {
            self.c_sum[k] += other.c_sum[k];
            self.c_sq_sum[k] += other.c_sq_sum[k];
            self.c_abs_sq_sum[k] += other.c_abs_sq_sum[k];
        }
        self.max_norm_drift = self.max_norm_drift.max(other.max_norm_drift);
        self
    }
}

/// Deterministic fixed-order pairwise reduction.
fn pairwise_merge(mut partials: Vec<Partial>) -> Partial {
    while partials.len() > 1 {
        let mut next = Vec::with_capacity(partials.len() / 2 + 1);
        let mut iter = partials.into_iter();
        while let Some(first) = iter.next() {
            match iter.next() {
                Some(second) => next.push(first.merge(second)),
                None => next.push(first),
            }
        }
        partials = next;
    }
    partials.pop().expect("at least one partial")
}

const CHUNK: usize = 32;

/// Run `n_traj` independent trajectories and average.
///
/// Trajectory i draws its Wiener path from seed `base_seed + i`. Trajectories
/// are processed in fixed chunks whose partial sums are combined by a
/// deterministic pairwise reduction, so the result is bit-identical for any
/// thread count. The grid must be uniform; each interval is subdivided into
/// `substeps` SDE steps of size dt = gap/substeps.
pub fn run_ensemble(
    params: &SystemParams,
    preset: DissipatorPreset,
    t_grid: &[f64],
    opts: &EnsembleOptions,
) -> Result<EnsembleResult, TrajectoryError> {
    if opts.n_traj < 1 {
        return Err(TrajectoryError::TooFewTrajectories(1));
    }
    if t_grid.len() < 2 || opts.substeps == 0 {
        return Err(TrajectoryError::BadGrid);
    }
    let gap = t_grid[1] - t_grid[0];
    if gap <= 0.0
        || t_grid
            .windows(2)
            .any(|w| ((w[1] - w[0]) - gap).abs() > 1e-9 * gap)
    {
        return Err(TrajectoryError::BadGrid);
    }
    let dt = gap / opts.substeps as f64;
    let prop = TrajectoryPropagator::new(params, preset, dt)?;
    let dim = prop.dim();
    let space = params.space().map_err(ModelError::from)?;
    let n_points = t_grid.len();

    // initial state in X eigencoordinates, shared by every trajectory
    let initial = {
        let mut s = SpinMotionState::zeros(dim);
        let cg = fock::coherent_state(params.alpha_g, space).amplitudes;
        let ce = fock::coherent_state(params.alpha_e, space).amplitudes;
        s.g = cg.mapv(|v| v * params.c_g);
        s.e = ce.mapv(|v| v * params.c_e);
        prop.to_eigenbasis(&s)
    };

    // lab-coherence Rabi weights per grid point
    let rabi: Vec<(C64, C64)> = t_grid
        .iter()
        .map(|&t| {
            let r = analytic::rabi_amplitudes(params, t).map_err(TrajectoryError::Model)?;
            Ok((r.alpha1, r.alpha2))
        })
        .collect::<Result<_, TrajectoryError>>()?;

    let n_chunks = opts.n_traj.div_ceil(CHUNK);
    let partials: Vec<Result<Partial, TrajectoryError>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = ((chunk + 1) * CHUNK).min(opts.n_traj);
            let mut partial = Partial::zeros(n_points, dim);
            let mut scratch = Array1::zeros(dim);
            for traj in lo..hi {
                let seed = opts.base_seed.wrapping_add(traj as u64);
                let noise = wiener(seed, dt, (n_points - 1) * opts.substeps);
                let mut state = initial.clone();
                record_point(&mut partial, 0, &state, &rabi[0]);
                let mut step = 0usize;
                for point in 1..n_points {
                    for _ in 0..opts.substeps {
                        prop.step_eig(&mut state, noise.increments[step], &mut scratch);
                        step += 1;
                    }
                    let drift = (state.norm() - 1.0).abs();
                    partial.max_norm_drift = partial.max_norm_drift.max(drift);
                    if !(drift <= 1e-7) {
                        return Err(TrajectoryError::NormDrift { step, drift });
                    }
                    record_point(&mut partial, point, &state, &rabi[point]);
                }
            }
            Ok(partial)
        })
        .collect();
    let partials: Result<Vec<Partial>, TrajectoryError> = partials.into_iter().collect();
    let total = pairwise_merge(partials?);

    // means, the block transform back to the Fock basis, and stderr
    let inv_n = 1.0 / opts.n_traj as f64;
    let mut blocks_out = Vec::with_capacity(n_points);
    let mut c_mean = Vec::with_capacity(n_points);
    let mut r_mean = Vec::with_capacity(n_points);
    let mut stderr = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let [gg, ge, eg, ee] = &total.block_sums[k];
        let to_fock = |m: &Array2<C64>| -> Array2<C64> {
            // V M Vᵀ with V real orthogonal
            let n = dim;
            let mut vm: Array2<C64> = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for l in 0..n {
                        acc += C64::new(prop.x_evecs[[i, l]], 0.0) * m[[l, j]];
                    }
                    vm[[i, j]] = acc;
                }
            }
            let mut out: Array2<C64> = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for l in 0..n {
                        acc += vm[[i, l]] * C64::new(prop.x_evecs[[j, l]], 0.0);
                    }
                    out[[i, j]] = acc * inv_n;
                }
            }
            out
        };
        blocks_out.push(InternalBlocks {
            gg: to_fock(gg),
            ge: to_fock(ge),
            eg: to_fock(eg),
            ee: to_fock(ee),
            t: t_grid[k],
        });

        let mean = total.c_sum[k] * inv_n;
        let r = mean.norm();
        // variance of the coherence projected on the mean's phase direction
        let se = if opts.n_traj > 1 {
            let theta = if r > 0.0 { mean / r } else { C64::new(1.0, 0.0) };
            let rot2 = (theta * theta).conj();
            // E[Re(c e^{−iθ})²] = (Re(E[c²] e^{−2iθ}) + E[|c|²]) / 2
            let second = 0.5 * ((total.c_sq_sum[k] * rot2).re + total.c_abs_sq_sum[k]) * inv_n;
            let var = ((second - r * r) * opts.n_traj as f64 / (opts.n_traj - 1) as f64).max(0.0);
            (var * inv_n).sqrt()
        } else {
            0.0
        };
        c_mean.push(mean);
        r_mean.push(r);
        stderr.push(se);
    }

    let mean_blocks = BlockSeries {
        times: t_grid.to_vec(),
        blocks: blocks_out,
        diagnostics: IntegrationDiagnostics {
            max_trace_deviation: f64::NAN,
            max_hermiticity_deviation: f64::NAN,
            max_adjoint_deviation: f64::NAN,
            substeps_total: (n_points - 1) * opts.substeps,
            dt,
        },
    };
    let coherence = TimeSeries::new(t_grid.to_vec(), c_mean)
        .map_err(TrajectoryError::Master)?
        .tag("n_traj", opts.n_traj)
        .tag("base_seed", opts.base_seed)
        .tag("dt", dt);
    Ok(EnsembleResult {
        mean_blocks,
        coherence,
        coherence_r: r_mean,
        stderr,
        n_traj: opts.n_traj,
        base_seed: opts.base_seed,
    })
}

fn record_point(partial: &mut Partial, k: usize, state: &SpinMotionState, rabi: &(C64, C64)) {
    let dim = state.dim();
    let [gg, ge, eg, ee] = &mut partial.block_sums[k];
    for i in 0..dim {
        let gi = state.g[i];
        let ei = state.e[i];
        for j in 0..dim {
            let gj = state.g[j].conj();
            let ej = state.e[j].conj();
            gg[[i, j]] += gi * gj;
            ge[[i, j]] += gi * ej;
            eg[[i, j]] += ei * gj;
            ee[[i, j]] += ei * ej;
        }
    }
    // Tr_e⟨g|ρ|e⟩ per the lab-frame reconstruction; traces are basis-free
    let (a1, a2) = *rabi;
    let norm_g: f64 = state.g.iter().map(|v| v.norm_sqr()).sum();
    let norm_e: f64 = state.e.iter().map(|v| v.norm_sqr()).sum();
    let tr_ge: C64 = state
        .g
        .iter()
        .zip(state.e.iter())
        .map(|(g, e)| g * e.conj())
        .sum();
    let c = a1.conj() * a2.conj() * norm_g
        + a1.conj() * a1.conj() * tr_ge
        + a2.norm_sqr() * tr_ge.conj()
        + a1.conj() * a2 * norm_e;
    partial.c_sum[k] += c;
    partial.c_sq_sum[k] += c * c;
    partial.c_abs_sq_sum[k] += c.norm_sqr();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::{CoherentMode, IntegrateOptions, MasterEq, uniform_grid};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn wiener_reproducible() {
        let a = wiener(42, 1e-3, 1000);
        let b = wiener(42, 1e-3, 1000);
        assert_eq!(a.increments, b.increments);
        let c = wiener(43, 1e-3, 1000);
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn wiener_mean_within_clt_bound() {
        let n = 1_000_000usize;
        let dt = 1e-3;
        let path = wiener(7, dt, n);
        let mean: f64 = path.increments.iter().sum::<f64>() / n as f64;
        let bound = 4.0 * (dt / n as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean:e} vs bound {bound:e}");
        // sample variance of increments/√dt near 1
        let var: f64 = path.increments.iter().map(|x| x * x).sum::<f64>() / (n as f64 * dt);
        assert!((var - 1.0).abs() < 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn scaled_endpoints_pass_ks_test() {
        // W(T)/√T over many independent seeds against the standard normal CDF
        let m = 2000usize;
        let steps = 64usize;
        let dt = 0.25;
        let t_total = steps as f64 * dt;
        let mut samples: Vec<f64> = (0..m)
            .map(|seed| {
                let path = wiener(1000 + seed as u64, dt, steps);
                path.increments.iter().sum::<f64>() / t_total.sqrt()
            })
            .collect();
        samples.sort_by(f64::total_cmp);
        let phi = |x: f64| 0.5 * (1.0 + erf(x / 2f64.sqrt()));
        let mut ks = 0.0_f64;
        for (i, &x) in samples.iter().enumerate() {
            let f = phi(x);
            ks = ks.max((f - i as f64 / m as f64).abs());
            ks = ks.max(((i + 1) as f64 / m as f64 - f).abs());
        }
        // 1% critical value of the KS statistic
        let critical = 1.6276 / (m as f64).sqrt();
        assert!(ks < critical, "KS {ks:.4} vs {critical:.4}");
    }

    // Abramowitz–Stegun 7.1.26 rational approximation, |error| < 1.5e-7;
    // plenty for a 1%-level KS test
    fn erf(x: f64) -> f64 {
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let x = x.abs();
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let y = 1.0
            - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
                + 0.254829592)
                * t
                * (-x * x).exp();
        sign * y
    }

    fn small_params(dim: usize, gamma: f64, g: f64) -> SystemParams {
        let mut p = SystemParams::desk();
        p.dim = dim;
        p.gamma = gamma;
        p.g_coupling = Some(g);
        p.alpha_g = c(1.0, 0.0);
        p.alpha_e = c(1.0, 0.0);
        p
    }

    #[test]
    fn noiseless_step_matches_rk4_schrodinger() {
        // Γ = 0: the step is the exact H₀ propagator; oracle is an RK4
        // integration of the Schrödinger equation in the Fock basis
        let p = small_params(16, 0.0, 0.15);
        let prop = TrajectoryPropagator::new(&p, DissipatorPreset::Ito, 0.02).unwrap();
        let space = p.space().unwrap();
        let mut state = SpinMotionState::zeros(16);
        state.g = fock::coherent_state(p.alpha_g, space).amplitudes.mapv(|v| v * p.c_g);
        state.e = fock::coherent_state(p.alpha_e, space).amplitudes.mapv(|v| v * p.c_e);

        let g = model::coupling_g(&p).unwrap();
        let hg = model::branch_hamiltonian(p.omega, g, Level::G, space).entries;
        let he = model::branch_hamiltonian(p.omega, g, Level::E, space).entries;
        let mut oracle = state.clone();
        let n_steps = 50usize;
        let dt = prop.dt;
        let sub = 20usize; // fine RK4 substeps per propagator step
        let h_rk = dt / sub as f64;
        let rhs = |h: &Array2<C64>, psi: &Array1<C64>| -> Array1<C64> {
            h.dot(psi).mapv(|v| v * c(0.0, -1.0))
        };
        for _ in 0..n_steps {
            state = prop.step(&state, 0.0).unwrap();
            for _ in 0..sub {
                for (h, psi) in [(&hg, &mut oracle.g), (&he, &mut oracle.e)] {
                    let k1 = rhs(h, psi);
                    let k2 = rhs(h, &(&*psi + &k1.mapv(|v| v * (0.5 * h_rk))));
                    let k3 = rhs(h, &(&*psi + &k2.mapv(|v| v * (0.5 * h_rk))));
                    let k4 = rhs(h, &(&*psi + &k3.mapv(|v| v * h_rk)));
                    *psi = &*psi
                        + &(k1 + k2.mapv(|v| v * 2.0) + k3.mapv(|v| v * 2.0) + k4)
                            .mapv(|v| v * (h_rk / 6.0));
                }
            }
        }
        let err: f64 = state
            .g
            .iter()
            .chain(state.e.iter())
            .zip(oracle.g.iter().chain(oracle.e.iter()))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-8, "deviation {err:e}");
    }

    #[test]
    fn noise_phase_preserves_x2_eigenvector_populations() {
        let p = small_params(12, 0.8, 0.0);
        let prop = TrajectoryPropagator::new(&p, DissipatorPreset::Eq17, 1.0).unwrap();
        // pick an X eigenvector (column 3 of V), make it the g component
        let mut state = SpinMotionState::zeros(12);
        for i in 0..12 {
            state.g[i] = c(prop.x_evecs[[i, 3]], 0.0);
        }
        // huge kick: pure phase on the eigenvector, populations unchanged
        let before: Vec<f64> = state.g.iter().map(|v| v.norm_sqr()).collect();
        let after_state = {
            // dt-generated H₀ would also act; isolate the noise factor by
            // stepping in the eigenbasis with a zero-dt propagator surrogate:
            // apply the phase directly through step() with dW and compare
            // |⟨v_k|ψ⟩| via the eigenbasis representation
            let eig = prop.to_eigenbasis(&state);
            let mut eig2 = eig.clone();
            let theta = prop.noise_amp * 3.7;
            for (k, &l2) in prop.x2_evals.iter().enumerate() {
                eig2.g[k] = eig.g[k] * C64::from_polar(1.0, -theta * l2);
            }
            prop.to_fock_basis(&eig2)
        };
        // the eigenvector only picks up a global phase
        let overlap: C64 = after_state
            .g
            .iter()
            .zip(state.g.iter())
            .map(|(a, b)| b.conj() * a)
            .sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-12);
        let after: Vec<f64> = after_state.g.iter().map(|v| v.norm_sqr()).collect();
        for (b, a) in before.iter().zip(after.iter()) {
            assert!((b - a).abs() < 1e-12);
        }
    }

    #[test]
    fn ito_correction_reproduces_double_commutator() {
        // E[e^{−i√(2κ)X²dW} ρ e^{+i√(2κ)X²dW}] − ρ ≈ −κ dt [X²,[X²,ρ]]
        // Monte Carlo over dW at dim 6, fixed seed
        let dim = 6usize;
        let p = small_params(dim, 0.0, 0.0);
        let kappa = 0.3;
        let prop = TrajectoryPropagator::new(&p, DissipatorPreset::Custom(kappa), 0.01).unwrap();
        let space = p.space().unwrap();
        let (x, _) = fock::quadratures(space);
        let x2 = x.entries.dot(&x.entries);

        let dt = 0.01;
        let psi0 = fock::coherent_state(c(0.8, 0.2), space).amplitudes;
        let rho0 = Array2::from_shape_fn((dim, dim), |(i, j)| psi0[i] * psi0[j].conj());

        let n_samples = 200_000usize;
        let noise = wiener(99, dt, n_samples);
        let mut mean: Array2<C64> = Array2::zeros((dim, dim));
        for &dw in &noise.increments {
            let theta = prop.noise_amp * dw;
            // phases in the X eigenbasis
            let eig = prop.to_eigenbasis(&SpinMotionState { g: psi0.clone(), e: Array1::zeros(dim) });
            let mut kicked = eig.clone();
            for (k, &l2) in prop.x2_evals.iter().enumerate() {
                kicked.g[k] = eig.g[k] * C64::from_polar(1.0, -theta * l2);
            }
            let back = prop.to_fock_basis(&kicked);
            for i in 0..dim {
                for j in 0..dim {
                    mean[[i, j]] += back.g[i] * back.g[j].conj();
                }
            }
        }
        mean.mapv_inplace(|v| v / n_samples as f64);

        let comm = x2.dot(&rho0) - rho0.dot(&x2);
        let dbl = x2.dot(&comm) - comm.dot(&x2);
        let expected = &rho0 - &dbl.mapv(|v| v * (kappa * dt));
        // MC error ~ |θ| scale/√N plus the O(dt²) Ito remainder
        let tol = 6.0 * (kappa * dt) / (n_samples as f64).sqrt() + 10.0 * (kappa * dt).powi(2);
        for i in 0..dim {
            for j in 0..dim {
                let err = (mean[[i, j]] - expected[[i, j]]).norm();
                assert!(err < tol, "entry ({i},{j}): {err:e} vs {tol:e}");
            }
        }
    }

    #[test]
    fn ensemble_single_trajectory_stays_pure() {
        let p = small_params(12, 0.4, 0.1);
        let grid = uniform_grid(0.0, 1.0, 6);
        let opts = EnsembleOptions { n_traj: 1, base_seed: 5, substeps: 10 };
        let result = run_ensemble(&p, DissipatorPreset::Ito, &grid, &opts).unwrap();
        for blocks in &result.mean_blocks.blocks {
            assert!((blocks.purity() - 1.0).abs() < 1e-8);
        }
        for se in &result.stderr {
            assert_eq!(*se, 0.0);
        }
    }

    #[test]
    fn ensemble_noiseless_has_zero_variance() {
        let mut p = small_params(12, 0.0, 0.1);
        p.gamma = 0.0;
        let grid = uniform_grid(0.0, 2.0, 5);
        let opts = EnsembleOptions { n_traj: 16, base_seed: 11, substeps: 8 };
        let result = run_ensemble(&p, DissipatorPreset::Ito, &grid, &opts).unwrap();
        for se in &result.stderr {
            assert!(*se < 1e-13);
        }
    }

    #[test]
    fn ensemble_deterministic_across_reruns() {
        let p = small_params(10, 0.5, 0.1);
        let grid = uniform_grid(0.0, 0.5, 4);
        let opts = EnsembleOptions { n_traj: 37, base_seed: 123, substeps: 5 };
        let a = run_ensemble(&p, DissipatorPreset::Ito, &grid, &opts).unwrap();
        let b = run_ensemble(&p, DissipatorPreset::Ito, &grid, &opts).unwrap();
        for (x, y) in a.coherence.values.iter().zip(b.coherence.values.iter()) {
            assert_eq!(x, y);
        }
        for (ba, bb) in a.mean_blocks.blocks.iter().zip(b.mean_blocks.blocks.iter()) {
            for (x, y) in ba.ge.iter().zip(bb.ge.iter()) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn ensemble_matches_master_for_single_fock_dephasing() {
        // |⟨1|ρ_ge(t)|1⟩| from 4000 trajectories within 2 stderr of the
        // master equation
        let mut p = small_params(12, 0.0, 0.0);
        p.c_g = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        p.c_e = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let kappa = 0.4;
        let preset = DissipatorPreset::Custom(kappa);

        // master evolution of the pure |1⟩⟨1| coherence block
        let eq = MasterEq::new(&p, preset, CoherentMode::Proper).unwrap();
        let grid = uniform_grid(0.0, 2.0, 6);
        let mut initial = InternalBlocks::zeros(12);
        initial.gg[[1, 1]] = c(0.5, 0.0);
        initial.ge[[1, 1]] = c(0.5, 0.0);
        initial.eg[[1, 1]] = c(0.5, 0.0);
        initial.ee[[1, 1]] = c(0.5, 0.0);
        let master = eq.integrate(&initial, &grid, &IntegrateOptions::default()).unwrap();

        // matching ensemble: (|g⟩ + |e⟩)/√2 ⊗ |1⟩
        let mut pp = p.clone();
        pp.alpha_g = c(0.0, 0.0);
        pp.alpha_e = c(0.0, 0.0);
        let opts = EnsembleOptions { n_traj: 4000, base_seed: 77, substeps: 40 };
        // run with a Fock |1⟩ initial by overriding through run_ensemble's
        // coherent-state initials is not possible; drive trajectories directly
        let prop = TrajectoryPropagator::new(&pp, preset, grid[1] / 40.0).unwrap();
        let mut sums = vec![C64::new(0.0, 0.0); grid.len()];
        for traj in 0..4000u64 {
            let mut state = SpinMotionState::zeros(12);
            state.g[1] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            state.e[1] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            let mut eig = prop.to_eigenbasis(&state);
            let noise = wiener(77 + traj, prop.dt, (grid.len() - 1) * 40);
            let mut scratch = Array1::zeros(12);
            let mut step = 0;
            for point in 1..grid.len() {
                for _ in 0..40 {
                    prop.step_eig(&mut eig, noise.increments[step], &mut scratch);
                    step += 1;
                }
                let back = prop.to_fock_basis(&eig);
                sums[point] += back.g[1] * back.e[1].conj();
            }
        }
        // compare ⟨1|ρ_ge|1⟩
        for point in 1..grid.len() {
            let mean = sums[point] / 4000.0;
            let want = master.blocks[point].ge[[1, 1]];
            // crude stderr bound: |v| ≤ 1/2 per trajectory
            let se = 0.5 / (4000.0f64).sqrt();
            assert!(
                (mean - want).norm() < 2.0 * se,
                "t={}: |Δ| = {:e} vs 2σ = {:e}",
                grid[point],
                (mean - want).norm(),
                2.0 * se
            );
        }
    }

    #[test]
    fn public_step_checks_norm_and_matches_eig_path() {
        let p = small_params(10, 0.3, 0.1);
        let prop = TrajectoryPropagator::new(&p, DissipatorPreset::Ito, 0.05).unwrap();
        let space = p.space().unwrap();
        let mut state = SpinMotionState::zeros(10);
        state.g = fock::coherent_state(c(0.5, 0.1), space).amplitudes.mapv(|v| v * p.c_g);
        state.e = fock::coherent_state(c(0.4, -0.2), space).amplitudes.mapv(|v| v * p.c_e);
        let stepped = prop.step(&state, 0.03).unwrap();
        assert!((stepped.norm() - state.norm()).abs() < 1e-10);
    }
}
