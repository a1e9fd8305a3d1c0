//! Dense linear-algebra helpers over LAPACK.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eig, EigVals, EigValsh, Factorize, Solve, SVD, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Square matrices up to this size get a full SVD; larger ones use inverse
/// subspace iteration on (A*A)⁻¹ through one LU factorization.
pub const DENSE_SVD_LIMIT: usize = 900;

fn la(e: impl std::fmt::Display) -> Error {
    Error::Linalg(e.to_string())
}

pub fn adjoint(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|x| x.conj())
}

pub fn frobenius(a: &Array2<C64>) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// All singular values, ascending.
pub fn singular_values(a: &Array2<C64>) -> Result<Vec<f64>> {
    let (_, s, _) = a.svd(false, false).map_err(la)?;
    let mut v = s.to_vec();
    v.reverse();
    Ok(v)
}

#[derive(Clone, Debug)]
pub struct SmallSvd {
    /// Smallest singular values, ascending.
    pub values: Vec<f64>,
    /// Matching right singular vectors as columns.
    pub vectors: Option<Array2<C64>>,
}

/// The `count` smallest singular values of `a` (and right singular vectors
/// on request).
pub fn smallest_singular(a: &Array2<C64>, count: usize, want_vectors: bool) -> Result<SmallSvd> {
    let (m, n) = a.dim();
    let count = count.min(n);
    if m != n || n <= DENSE_SVD_LIMIT {
        return dense_smallest(a, count, want_vectors);
    }
    inverse_subspace(a, count, want_vectors)
}

fn dense_smallest(a: &Array2<C64>, count: usize, want_vectors: bool) -> Result<SmallSvd> {
    let (m, n) = a.dim();
    if !want_vectors {
        let all = singular_values(a)?;
        // a tall matrix has n singular values; a wide one has m, plus n−m zeros
        let mut v = vec![0.0; n.saturating_sub(m)];
        v.extend(all);
        v.truncate(count);
        return Ok(SmallSvd {
            values: v,
            vectors: None,
        });
    }
    let (_, s, vt) = a.svd(false, true).map_err(la)?;
    let vt = vt.ok_or_else(|| la("missing right singular vectors"))?;
    let mut sv: Vec<f64> = s.to_vec();
    sv.resize(n, 0.0);
    let mut values = Vec::with_capacity(count);
    let mut vecs = Array2::zeros((n, count));
    for j in 0..count {
        let idx = n - 1 - j;
        values.push(sv[idx]);
        for i in 0..n {
            vecs[(i, j)] = vt[(idx, i)].conj();
        }
    }
    // wide matrices: values beyond rank are exact zeros, already sorted
    let _ = m;
    Ok(SmallSvd {
        values,
        vectors: Some(vecs),
    })
}

/// splitmix64, used only to seed iterations deterministically.
fn splitmix(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

pub fn seed_block(n: usize, b: usize, seed: u64) -> Array2<C64> {
    let mut st = seed;
    Array2::from_shape_fn((n, b), |_| C64::new(splitmix(&mut st), splitmix(&mut st)))
}

/// In-place modified Gram–Schmidt, applied twice for stability.
pub fn orthonormalize(x: &mut Array2<C64>) {
    let b = x.ncols();
    for _ in 0..2 {
        for j in 0..b {
            for i in 0..j {
                let (qi, mut qj) = x.multi_slice_mut((s![.., i], s![.., j]));
                let d: C64 = qi.iter().zip(qj.iter()).map(|(a, b)| a.conj() * b).sum();
                qj.zip_mut_with(&qi, |y, q| *y -= d * q);
            }
            let mut c = x.column_mut(j);
            let nrm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if nrm > 0.0 {
                c.mapv_inplace(|v| v / nrm);
            }
        }
    }
}

fn inverse_subspace(a: &Array2<C64>, count: usize, want_vectors: bool) -> Result<SmallSvd> {
    let n = a.nrows();
    let b = (count + 4).min(n);
    let lu = a.factorize().map_err(la)?;
    let mut x = seed_block(n, b, 0x5eed_0000 + n as u64);
    orthonormalize(&mut x);
    let scale = frobenius(a).max(1e-300);
    let mut prev = vec![f64::INFINITY; count];
    let mut values = prev.clone();
    for it in 0..80 {
        for j in 0..b {
            let col: Array1<C64> = x.column(j).to_owned();
            let z = lu.solve_h(&col).map_err(la)?;
            let y = lu.solve(&z).map_err(la)?;
            x.column_mut(j).assign(&y);
        }
        orthonormalize(&mut x);
        let ax = a.dot(&x);
        let (_, s, vt) = ax.svd(false, true).map_err(la)?;
        let vt = vt.ok_or_else(|| la("missing right singular vectors"))?;
        let mut rot = adjoint(&vt);
        rot.invert_axis(Axis(1));
        x = x.dot(&rot);
        let mut sv = s.to_vec();
        sv.reverse();
        values = sv[..count].to_vec();
        let done = values
            .iter()
            .zip(&prev)
            .all(|(v, p)| (v - p).abs() <= 1e-10 * v.abs() + 1e-15 * scale);
        if it >= 2 && done {
            break;
        }
        prev = values.clone();
    }
    let vectors = want_vectors.then(|| x.slice(s![.., ..count]).to_owned());
    Ok(SmallSvd { values, vectors })
}

pub fn eigenvalues(a: &Array2<C64>) -> Result<Vec<C64>> {
    Ok(a.eigvals().map_err(la)?.to_vec())
}

pub fn eig(a: &Array2<C64>) -> Result<(Vec<C64>, Array2<C64>)> {
    let (v, w) = a.eig().map_err(la)?;
    Ok((v.to_vec(), w))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(a: &Array2<C64>) -> Result<Vec<f64>> {
    let mut v = a.eigvalsh(UPLO::Upper).map_err(la)?.to_vec();
    v.sort_by(|x, y| x.total_cmp(y));
    Ok(v)
}

/// Eigenpair of `a` nearest to `shift` by inverse iteration on (a − shift)⁻¹.
pub fn eig_nearest(a: &Array2<C64>, shift: C64, tol: f64) -> Result<(C64, Array1<C64>)> {
    let n = a.nrows();
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] -= shift;
    }
    let lu = m.factorize().map_err(la)?;
    let mut x: Array1<C64> = seed_block(n, 1, 0xC0FFEE + n as u64).column(0).to_owned();
    let mut lambda = shift;
    for _ in 0..200 {
        let nrm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        x.mapv_inplace(|v| v / nrm);
        let y = lu.solve(&x).map_err(la)?;
        let ax = a.dot(&x);
        let rq: C64 = x.iter().zip(ax.iter()).map(|(a, b)| a.conj() * b).sum();
        let res = ax
            .iter()
            .zip(x.iter())
            .map(|(u, v)| (u - rq * v).norm_sqr())
            .sum::<f64>()
            .sqrt();
        lambda = rq;
        x = y;
        if res < tol {
            break;
        }
    }
    let nrm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    x.mapv_inplace(|v| v / nrm);
    Ok((lambda, x))
}

/// Residual ‖A v‖ for each column of `v`.
pub fn column_residuals(a: ArrayView2<C64>, v: ArrayView2<C64>) -> Vec<f64> {
    let av = a.dot(&v);
    av.columns()
        .into_iter()
        .map(|c| c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
        .collect()
}
