//! Small dense complex linear algebra: cyclic Jacobi for Hermitian
//! eigenproblems and a Cholesky log-determinant.

use crate::error::{Error, Result};
use crate::Complex64;

pub type CMatrix<const N: usize> = [[Complex64; N]; N];

const MAX_SWEEPS: usize = 64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `a^H b`.
pub fn inner<const N: usize>(a: &[Complex64; N], b: &[Complex64; N]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sq<const N: usize>(a: &[Complex64; N]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn frobenius<const N: usize>(a: &CMatrix<N>) -> f64 {
    a.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn identity<const N: usize>() -> CMatrix<N> {
    let mut m = [[ZERO; N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = ONE;
    }
    m
}

pub fn mat_vec<const N: usize>(a: &CMatrix<N>, v: &[Complex64; N]) -> [Complex64; N] {
    std::array::from_fn(|i| a[i].iter().zip(v).map(|(x, y)| x * y).sum())
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianEigen<const N: usize> {
    /// Descending.
    pub values: [f64; N],
    /// `vectors[i]` pairs with `values[i]`.
    pub vectors: [[Complex64; N]; N],
}

/// Cyclic Jacobi eigen-decomposition with a fixed `(p, q)` sweep order.
///
/// The input is symmetrised as `(A + A^H) / 2` first. Equal eigenvalues keep
/// the order in which they appear on the converged diagonal.
pub fn hermitian_eig<const N: usize>(input: &CMatrix<N>) -> Result<HermitianEigen<N>> {
    if input.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite("hermitian_eig input".into()));
    }

    let mut a = [[ZERO; N]; N];
    for i in 0..N {
        for j in 0..N {
            a[i][j] = (input[i][j] + input[j][i].conj()) * 0.5;
        }
        a[i][i].im = 0.0;
    }
    let mut v = identity::<N>();

    let scale = frobenius(&a);
    if scale > 0.0 {
        let tol = (f64::EPSILON * scale).powi(2);
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..N)
                .flat_map(|p| (0..N).filter(move |&q| q != p).map(move |q| (p, q)))
                .map(|(p, q)| a[p][q].norm_sqr())
                .sum();
            if off <= tol {
                break;
            }
            for p in 0..N {
                for q in p + 1..N {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }

    let mut order: [usize; N] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| a[j][j].re.total_cmp(&a[i][i].re));
    let values = order.map(|i| a[i][i].re);
    let vectors = order.map(|i| std::array::from_fn(|row| v[row][i]));
    Ok(HermitianEigen { values, vectors })
}

/// One complex Jacobi rotation annihilating `a[p][q]`.
fn rotate<const N: usize>(a: &mut CMatrix<N>, v: &mut CMatrix<N>, p: usize, q: usize) {
    let apq = a[p][q];
    let beta = apq.norm();
    if beta == 0.0 {
        return;
    }
    let e = apq / beta;
    let tau = (a[q][q].re - a[p][p].re) / (2.0 * beta);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // R = [[c, s e], [-s conj(e), c]] on the (p, q) plane.
    let r_pq = e * s;
    let r_qp = -e.conj() * s;

    for row in a.iter_mut() {
        let (xp, xq) = (row[p], row[q]);
        row[p] = xp * c + xq * r_qp;
        row[q] = xp * r_pq + xq * c;
    }
    for k in 0..N {
        let (xp, xq) = (a[p][k], a[q][k]);
        a[p][k] = xp * c + xq * r_qp.conj();
        a[q][k] = xp * r_pq.conj() + xq * c;
    }
    a[p][q] = ZERO;
    a[q][p] = ZERO;
    a[p][p].im = 0.0;
    a[q][q].im = 0.0;

    for row in v.iter_mut() {
        let (xp, xq) = (row[p], row[q]);
        row[p] = xp * c + xq * r_qp;
        row[q] = xp * r_pq + xq * c;
    }
}

/// `ln det(A)` for Hermitian positive-definite `A` via Cholesky.
pub fn hpd_log_det<const N: usize>(a: &CMatrix<N>) -> Result<f64> {
    let mut l = [[ZERO; N]; N];
    let mut log_det = 0.0;
    for j in 0..N {
        let mut d = a[j][j].re;
        for k in 0..j {
            d -= l[j][k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidInput("matrix is not positive definite".into()));
        }
        let ljj = d.sqrt();
        l[j][j] = Complex64::new(ljj, 0.0);
        log_det += 2.0 * ljj.ln();
        for i in j + 1..N {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k].conj();
            }
            l[i][j] = s / ljj;
        }
    }
    Ok(log_det)
}
