//! Dense linear-algebra support routines: symmetric tridiagonal
//! eigendecomposition, Hermitian propagators, a general complex matrix
//! exponential, and banded multiply kernels used by the block integrator.
//!
//! Everything here is plain `f64`/`Complex64` on `ndarray` storage; the
//! matrices in this crate are at most a few hundred rows, so dense O(n³)
//! methods are plenty.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

/// Eigendecomposition of a real symmetric tridiagonal matrix by the implicit
/// QL algorithm with Wilkinson shifts.
///
/// `diag` holds the n diagonal entries, `off` the n−1 subdiagonal entries.
/// Returns eigenvalues in ascending order and the orthogonal matrix whose
/// columns are the matching eigenvectors.
pub fn sym_tridiag_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Array2<f64>) {
    let n = diag.len();
    assert_eq!(off.len() + 1, n, "off-diagonal length must be n-1");
    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(off);
    e.push(0.0);
    let mut z: Array2<f64> = Array2::eye(n);

    for l in 0..n {
        let mut iter = 0;
        loop {
            // look for a negligible subdiagonal element to split at
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 64, "tridiagonal QL failed to converge");

            // Wilkinson shift
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // recover from underflow by deflating
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[[k, i + 1]];
                    z[[k, i + 1]] = s * z[[k, i]] + c * f;
                    z[[k, i]] = c * z[[k, i]] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    // sort ascending, permuting eigenvector columns to match
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let evals: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut evecs = Array2::zeros((n, n));
    for (j, &src) in order.iter().enumerate() {
        for k in 0..n {
            evecs[[k, j]] = z[[k, src]];
        }
    }
    (evals, evecs)
}

/// Eigendecomposition of a Hermitian tridiagonal matrix with real diagonal
/// `diag` and complex subdiagonal `off` (`off[k]` couples rows k and k+1).
///
/// A diagonal phase gauge turns the matrix into a real symmetric tridiagonal
/// one, which is handed to [`sym_tridiag_eigen`]; the phases are restored on
/// the eigenvectors afterwards.
pub fn hermitian_tridiag_eigen(diag: &[f64], off: &[C64]) -> (Vec<f64>, Array2<C64>) {
    let n = diag.len();
    assert_eq!(off.len() + 1, n, "off-diagonal length must be n-1");
    // gauge phases: conj(d_k) * off_k * d_{k+1} real and non-negative
    let mut phases = vec![C64::new(1.0, 0.0); n];
    let mut off_real = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let t = off[k];
        let m = t.norm();
        if m == 0.0 {
            phases[k + 1] = phases[k];
        } else {
            phases[k + 1] = phases[k] * t.conj() / m;
        }
        off_real.push(m);
    }
    let (evals, v) = sym_tridiag_eigen(diag, &off_real);
    let mut evecs: Array2<C64> = Array2::zeros((n, n));
    for k in 0..n {
        for j in 0..n {
            evecs[[k, j]] = phases[k] * v[[k, j]];
        }
    }
    (evals, evecs)
}

/// Unitary propagator exp(−iHt) from an eigendecomposition of Hermitian H.
pub fn propagator(evals: &[f64], evecs: &Array2<C64>, t: f64) -> Array2<C64> {
    let n = evals.len();
    let mut u = Array2::zeros((n, n));
    // U = V diag(e^{-i λ t}) V†
    for (k, &lam) in evals.iter().enumerate() {
        let ph = C64::from_polar(1.0, -lam * t);
        for i in 0..n {
            let vik = evecs[[i, k]] * ph;
            for j in 0..n {
                u[[i, j]] += vik * evecs[[j, k]].conj();
            }
        }
    }
    u
}

/// 1-norm (max column sum of moduli) of a complex matrix.
pub fn norm_1(a: &Array2<C64>) -> f64 {
    let (n, m) = a.dim();
    let mut best = 0.0_f64;
    for j in 0..m {
        let mut s = 0.0;
        for i in 0..n {
            s += a[[i, j]].norm();
        }
        best = best.max(s);
    }
    best
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The argument is halved until its 1-norm is below 1/2, the series is summed
/// in Horner form, and the result is squared back up. Accuracy is near
/// machine precision for the well-conditioned generators this crate feeds it;
/// it serves as the reference propagator that the step-by-step integrators
/// are checked against.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    let norm = norm_1(a);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = C64::new(1.0 / 2f64.powi(s as i32), 0.0);
    let b = a.mapv(|x| x * scale);
    let eye: Array2<C64> = Array2::eye(n);

    // Horner evaluation of sum_{k<=K} B^k / k!
    const K: usize = 20;
    let mut acc = &eye + &(&b / K as f64);
    for k in (1..K).rev() {
        acc = &eye + &(b.dot(&acc) / k as f64);
    }
    let mut result = acc;
    for _ in 0..s {
        result = result.dot(&result);
    }
    result
}

/// Kronecker product of two complex matrices.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// out = A · x for a dense complex matrix and vector.
pub fn matvec_into(a: &Array2<C64>, x: &Array1<C64>, out: &mut Array1<C64>) {
    let n = a.nrows();
    let av = a.as_slice().expect("matrix must be contiguous");
    let xv = x.as_slice().expect("vector must be contiguous");
    let ov = out.as_slice_mut().expect("vector must be contiguous");
    for i in 0..n {
        let row = &av[i * n..(i + 1) * n];
        let mut acc = C64::new(0.0, 0.0);
        for (r, xk) in row.iter().zip(xv.iter()) {
            acc += r * xk;
        }
        ov[i] = acc;
    }
}

/// out += scale · A · B where A is banded with half-width `hw` (entries with
/// |i−k| > hw are known to be zero and skipped).
pub fn acc_band_mul(a: &Array2<C64>, hw: usize, b: &Array2<C64>, scale: C64, out: &mut Array2<C64>) {
    let n = a.nrows();
    let av = a.as_slice().expect("contiguous");
    let bv = b.as_slice().expect("contiguous");
    let ov = out.as_slice_mut().expect("contiguous");
    for i in 0..n {
        let k_lo = i.saturating_sub(hw);
        let k_hi = (i + hw + 1).min(n);
        let orow = &mut ov[i * n..(i + 1) * n];
        for k in k_lo..k_hi {
            let aik = a_at(av, n, i, k) * scale;
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            let brow = &bv[k * n..(k + 1) * n];
            for (o, bkj) in orow.iter_mut().zip(brow.iter()) {
                *o += aik * bkj;
            }
        }
    }
}

/// out += scale · B · A where A is banded with half-width `hw`.
pub fn acc_mul_band(b: &Array2<C64>, a: &Array2<C64>, hw: usize, scale: C64, out: &mut Array2<C64>) {
    let n = a.nrows();
    let av = a.as_slice().expect("contiguous");
    let bv = b.as_slice().expect("contiguous");
    let ov = out.as_slice_mut().expect("contiguous");
    for i in 0..n {
        let brow = &bv[i * n..(i + 1) * n];
        let orow = &mut ov[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let k_lo = j.saturating_sub(hw);
            let k_hi = (j + hw + 1).min(n);
            let mut acc = C64::new(0.0, 0.0);
            for k in k_lo..k_hi {
                acc += brow[k] * a_at(av, n, k, j);
            }
            *o += acc * scale;
        }
    }
}

#[inline]
fn a_at(a: &[C64], n: usize, i: usize, j: usize) -> C64 {
    a[i * n + j]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn tridiag_eigen_known_matrix() {
        // [[2,1,0],[1,2,1],[0,1,2]] has eigenvalues 2 - sqrt(2), 2, 2 + sqrt(2)
        let (evals, evecs) = sym_tridiag_eigen(&[2.0, 2.0, 2.0], &[1.0, 1.0]);
        let expect = [2.0 - 2f64.sqrt(), 2.0, 2.0 + 2f64.sqrt()];
        for (got, want) in evals.iter().zip(expect.iter()) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        // columns orthonormal
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| evecs[[k, i]] * evecs[[k, j]]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tridiag_eigen_reconstructs() {
        let n = 24;
        let diag: Vec<f64> = (0..n).map(|k| k as f64 * 0.7 - 3.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|k| ((k + 1) as f64).sqrt() * 0.3).collect();
        let (evals, v) = sym_tridiag_eigen(&diag, &off);
        // check A v_j = lambda_j v_j
        for j in 0..n {
            for i in 0..n {
                let mut av = diag[i] * v[[i, j]];
                if i > 0 {
                    av += off[i - 1] * v[[i - 1, j]];
                }
                if i + 1 < n {
                    av += off[i] * v[[i + 1, j]];
                }
                assert!((av - evals[j] * v[[i, j]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hermitian_tridiag_eigen_matches_dense_residual() {
        let n = 12;
        let diag: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let off: Vec<C64> = (0..n - 1)
            .map(|k| c(0.0, -0.4 * ((k + 1) as f64).sqrt()))
            .collect();
        let (evals, v) = hermitian_tridiag_eigen(&diag, &off);
        for j in 0..n {
            for i in 0..n {
                let mut av = C64::new(diag[i], 0.0) * v[[i, j]];
                if i > 0 {
                    av += off[i - 1].conj() * v[[i - 1, j]];
                }
                if i + 1 < n {
                    av += off[i] * v[[i + 1, j]];
                }
                let diff = av - evals[j] * v[[i, j]];
                assert!(diff.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn propagator_is_unitary() {
        let diag: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let off: Vec<C64> = (0..7).map(|k| c(0.0, 0.2 * ((k + 1) as f64).sqrt())).collect();
        let (evals, evecs) = hermitian_tridiag_eigen(&diag, &off);
        let u = propagator(&evals, &evecs, 1.37);
        let udag = u.t().mapv(|x| x.conj());
        let prod = udag.dot(&u);
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - c(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn expm_zero_and_diagonal() {
        let zero: Array2<C64> = Array2::zeros((4, 4));
        let e = expm(&zero);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e[[i, j]] - c(want, 0.0)).norm() < 1e-15);
            }
        }
        let mut d: Array2<C64> = Array2::zeros((2, 2));
        d[[0, 0]] = c(0.0, 1.5);
        d[[1, 1]] = c(-2.0, 0.3);
        let e = expm(&d);
        assert!((e[[0, 0]] - c(0.0, 1.5).exp()).norm() < 1e-14);
        assert!((e[[1, 1]] - c(-2.0, 0.3).exp()).norm() < 1e-14);
        assert!(e[[0, 1]].norm() < 1e-16);
    }

    #[test]
    fn expm_matches_eigen_route_for_hermitian() {
        let diag: Vec<f64> = (0..10).map(|k| 0.9 * k as f64).collect();
        let off: Vec<C64> = (0..9).map(|k| c(0.0, 0.15 * ((k + 1) as f64).sqrt())).collect();
        let (evals, evecs) = hermitian_tridiag_eigen(&diag, &off);
        let t = 2.3;
        let u_eig = propagator(&evals, &evecs, t);
        // build -iHt densely
        let n = 10;
        let mut m: Array2<C64> = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = c(0.0, -diag[i] * t);
            if i + 1 < n {
                m[[i, i + 1]] = off[i] * c(0.0, -t);
                m[[i + 1, i]] = off[i].conj() * c(0.0, -t);
            }
        }
        let u_taylor = expm(&m);
        for i in 0..n {
            for j in 0..n {
                assert!((u_eig[[i, j]] - u_taylor[[i, j]]).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn banded_kernels_match_dense_dot() {
        let n = 9;
        let mut a: Array2<C64> = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) <= 2 {
                    a[[i, j]] = c(0.3 * i as f64 - j as f64, 0.1 * (i + j) as f64);
                }
            }
        }
        let b: Array2<C64> =
            Array2::from_shape_fn((n, n), |(i, j)| c(i as f64 * 0.2, -(j as f64) * 0.4 + 1.0));
        let mut left = Array2::zeros((n, n));
        acc_band_mul(&a, 2, &b, c(1.0, 0.0), &mut left);
        let want = a.dot(&b);
        for i in 0..n {
            for j in 0..n {
                assert!((left[[i, j]] - want[[i, j]]).norm() < 1e-12);
            }
        }
        let mut right = Array2::zeros((n, n));
        acc_mul_band(&b, &a, 2, c(0.0, 1.0), &mut right);
        let want = b.dot(&a).mapv(|x| x * c(0.0, 1.0));
        for i in 0..n {
            for j in 0..n {
                assert!((right[[i, j]] - want[[i, j]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn kron_small() {
        let a = Array2::from_shape_vec((2, 2), vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 1.0)]).unwrap();
        let b = Array2::from_shape_vec((2, 2), vec![c(0.0, 1.0), c(0.0, 0.0), c(3.0, 0.0), c(1.0, 0.0)]).unwrap();
        let k = kron(&a, &b);
        assert_eq!(k.dim(), (4, 4));
        assert_eq!(k[[0, 0]], c(0.0, 1.0));
        assert_eq!(k[[1, 0]], c(3.0, 0.0));
        assert_eq!(k[[0, 2]], c(0.0, 2.0));
        assert_eq!(k[[3, 2]], c(3.0, 3.0));
    }
}
