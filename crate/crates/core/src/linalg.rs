//! Small dense helpers: deterministic summation and tiny symmetric-matrix
//! factorizations.
//!
//! The simulator accumulates sums of 10⁵–10⁶ heavy-tailed terms where naive
//! left-to-right addition loses digits and, worse, depends on evaluation
//! order. Pairwise (tree) reduction fixes both: the bracketing is a pure
//! function of the slice length, so results are identical across thread
//! schedules, and rounding error grows only logarithmically.
//!
//! The matrix routines cover the `k × k` covariance matrices of joint limit
//! laws (`k` = number of network inputs, in practice single digits), so a
//! textbook Jacobi eigensolver and an unblocked Cholesky are the right size.

use crate::{Error, Real, Result};

/// Below this length a straight loop is both faster and accurate enough.
const PAIRWISE_LEAF: usize = 32;

/// Pairwise-tree sum. Deterministic bracketing fixed by `len` alone.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    if xs.len() <= PAIRWISE_LEAF {
        let mut acc = T::zero();
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Pairwise-tree dot product with fused multiply-add leaves; same
/// deterministic bracketing as [`pairwise_sum`].
pub fn pairwise_dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= PAIRWISE_LEAF {
        let mut acc = T::zero();
        for (&x, &y) in a.iter().zip(b) {
            acc = x.mul_add(y, acc);
        }
        acc
    } else {
        let mid = a.len() / 2;
        pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
    }
}

/// Eigenvalues of a symmetric `k × k` matrix (row-major), ascending.
///
/// Cyclic Jacobi; for the `k ≤ 16` matrices this crate produces it converges
/// to machine precision in a handful of sweeps.
pub fn sym_eigenvalues<T: Real>(mat: &[T], k: usize) -> Result<Vec<T>> {
    if mat.len() != k * k {
        return Err(Error::config(format!(
            "matrix buffer has {} entries, expected {}",
            mat.len(),
            k * k
        )));
    }
    let mut a = mat.to_vec();
    let idx = |i: usize, j: usize| i * k + j;

    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..k {
            for j in i + 1..k {
                off += a[idx(i, j)] * a[idx(i, j)];
            }
        }
        let scale: T = (0..k).map(|i| a[idx(i, i)].abs()).sum::<T>() + T::of(1e-300);
        if off.sqrt() <= T::of(1e-15) * scale {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[idx(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[idx(q, q)] - a[idx(p, p)]) / (T::of(2.0) * apq);
                // Stable rotation: t = sign(θ)/(|θ| + √(1+θ²)).
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (T::one() + theta * theta).sqrt())
                };
                let c = (T::one() + t * t).sqrt().recip();
                let s = t * c;
                for r in 0..k {
                    let arp = a[idx(r, p)];
                    let arq = a[idx(r, q)];
                    a[idx(r, p)] = c * arp - s * arq;
                    a[idx(r, q)] = s * arp + c * arq;
                }
                for r in 0..k {
                    let apr = a[idx(p, r)];
                    let aqr = a[idx(q, r)];
                    a[idx(p, r)] = c * apr - s * aqr;
                    a[idx(q, r)] = s * apr + c * aqr;
                }
            }
        }
    }

    let mut eig: Vec<T> = (0..k).map(|i| a[idx(i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues must be comparable"));
    Ok(eig)
}

/// Lower-triangular Cholesky factor of a symmetric positive semi-definite
/// matrix, with a tiny diagonal shift tolerance for semidefinite inputs.
pub fn cholesky<T: Real>(mat: &[T], k: usize) -> Result<Vec<T>> {
    if mat.len() != k * k {
        return Err(Error::config("cholesky: wrong buffer size"));
    }
    let idx = |i: usize, j: usize| i * k + j;
    let scale: T = (0..k).map(|i| mat[idx(i, i)].abs()).sum::<T>() + T::of(1e-300);
    let tol = T::of(1e-12) * scale;

    let mut l = vec![T::zero(); k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = mat[idx(i, j)];
            for p in 0..j {
                s -= l[idx(i, p)] * l[idx(j, p)];
            }
            if i == j {
                if s < -tol {
                    return Err(Error::numeric(
                        "matrix is not positive semi-definite in cholesky",
                    ));
                }
                l[idx(i, i)] = s.max(T::zero()).sqrt();
            } else {
                let d = l[idx(j, j)];
                l[idx(i, j)] = if d > T::zero() { s / d } else { T::zero() };
            }
        }
    }
    Ok(l)
}
