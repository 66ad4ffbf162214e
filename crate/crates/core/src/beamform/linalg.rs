//! Small dense complex linear algebra for the per-bin M×M problems.

use ndarray::Array2;
use num_complex::Complex64;

pub type CMatrix = Array2<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub fn identity(n: usize) -> CMatrix {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { Complex64::new(1.0, 0.0) } else { ZERO })
}

pub fn conj_transpose(a: &CMatrix) -> CMatrix {
    a.t().mapv(|v| v.conj())
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖A - Aᴴ‖_F / max(1, ‖A‖_F)`
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    let d = a - &conj_transpose(a);
    frobenius(&d) / frobenius(a).max(1.0)
}

pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + &conj_transpose(a)).mapv(|v| v * 0.5)
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᴴ`, or `None` when `A`
/// is not numerically positive definite.
pub fn cholesky(a: &CMatrix) -> Option<CMatrix> {
    let n = a.nrows();
    let mut l = Array2::from_elem((n, n), ZERO);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0 && d.is_finite()) {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &CMatrix, b: &CMatrix) -> CMatrix {
    let n = l.nrows();
    let mut x = b.clone();
    for col in 0..b.ncols() {
        for i in 0..n {
            let mut s = x[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `Lᴴ x = b` for lower-triangular `L`.
pub fn solve_lower_adjoint(l: &CMatrix, b: &[Complex64]) -> Vec<Complex64> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[(k, i)].conj() * x[k];
        }
        x[i] = s / l[(i, i)].conj();
    }
    x
}

pub fn mat_vec(a: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    a.rows().into_iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// `xᴴ A x`, real for Hermitian `A`.
pub fn quadratic_form(a: &CMatrix, x: &[Complex64]) -> f64 {
    let ax = mat_vec(a, x);
    x.iter().zip(&ax).map(|(xi, yi)| xi.conj() * yi).sum::<Complex64>().re
}

pub fn vec_norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Eigenvalues are returned in descending order with the matching
/// eigenvectors as columns.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let mut a = hermitize(a);
    let mut v = identity(n);
    let total = frobenius(&a);
    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)].norm_sqr())
            .sum();
        if off.sqrt() <= 1e-17 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE {
                    continue;
                }
                // Rotate the phase of a_pq away, then apply a real Jacobi rotation.
                let phase = apq / mag;
                let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let vpp = Complex64::new(c, 0.0);
                let vpq = Complex64::new(s, 0.0);
                let vqp = -phase.conj() * s;
                let vqq = phase.conj() * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = akp * vpp + akq * vqp;
                    a[(k, q)] = akp * vpq + akq * vqq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = vpp.conj() * apk + vqp.conj() * aqk;
                    a[(q, k)] = vpq.conj() * apk + vqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let (ekp, ekq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = ekp * vpp + ekq * vqp;
                    v[(k, q)] = ekp * vpq + ekq * vqq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[(r, order[c])]);
    (values, vectors)
}
