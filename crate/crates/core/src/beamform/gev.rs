use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use super::linalg::{self, CMatrix};
use super::{BeamformError, BeamformerWeights, PsdPair};

pub const DEFAULT_DIAG_LOADING: f64 = 1e-6;
pub const HERMITIAN_TOL: f64 = 1e-10;
const ABSOLUTE_FLOOR: f64 = 1e-10;

fn check_matrix(phi: &CMatrix, bin: usize, which: &'static str) -> Result<(), BeamformError> {
    if phi.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(BeamformError::NonFinite { bin, which });
    }
    let deviation = linalg::hermitian_deviation(phi);
    if deviation > HERMITIAN_TOL {
        return Err(BeamformError::NotHermitian { bin, which, deviation });
    }
    Ok(())
}

fn add_diagonal(a: &CMatrix, value: f64) -> CMatrix {
    let mut out = a.clone();
    for i in 0..a.nrows() {
        out[(i, i)] += value;
    }
    out
}

/// Makes the largest-modulus entry (first on ties) real and nonnegative.
fn phase_normalize(f: &mut [Complex64]) {
    let mut k = 0;
    for (i, v) in f.iter().enumerate() {
        if v.norm() > f[k].norm() {
            k = i;
        }
    }
    let mag = f[k].norm();
    if mag == 0.0 {
        return;
    }
    let rot = f[k].conj() / mag;
    for v in f.iter_mut() {
        *v *= rot;
    }
    f[k] = Complex64::new(mag, 0.0);
}

fn solve_bin(speech: &CMatrix, noise: &CMatrix, diag_loading: f64) -> (Vec<Complex64>, f64) {
    let m = noise.nrows();
    let noise = linalg::hermitize(noise);
    let trace: f64 = (0..m).map(|i| noise[(i, i)].re).sum();
    let loaded = add_diagonal(&noise, diag_loading * trace / m as f64);
    let l = linalg::cholesky(&loaded)
        .or_else(|| linalg::cholesky(&add_diagonal(&loaded, ABSOLUTE_FLOOR)))
        .unwrap_or_else(|| linalg::identity(m).mapv(|v| v * ABSOLUTE_FLOOR.sqrt()));
    let y = linalg::solve_lower(&l, &linalg::hermitize(speech));
    let whitened = linalg::hermitize(&linalg::solve_lower(&l, &linalg::conj_transpose(&y)));
    let (values, vectors) = linalg::hermitian_eigen(&whitened);
    let u: Vec<Complex64> = vectors.column(0).to_vec();
    let mut f = linalg::solve_lower_adjoint(&l, &u);
    let norm = linalg::vec_norm(&f);
    for v in f.iter_mut() {
        *v /= norm;
    }
    phase_normalize(&mut f);
    (f, values[0])
}

/// Principal generalized eigenvector of each `(Φ_noise(b), Φ_speech(b))`
/// pair, found by Cholesky whitening of the diagonally loaded noise PSD.
pub fn gev_solve(psd: &PsdPair, diag_loading: f64) -> Result<BeamformerWeights, BeamformError> {
    psd.check()?;
    let m = psd.num_channels();
    if m == 0 {
        return Err(BeamformError::InvalidInput("at least one channel is required".into()));
    }
    if !(diag_loading >= 0.0 && diag_loading.is_finite()) {
        return Err(BeamformError::InvalidInput(format!("diagonal loading must be finite and >= 0, got {diag_loading}")));
    }
    for (b, (s, n)) in psd.speech.iter().zip(&psd.noise).enumerate() {
        check_matrix(s, b, "speech")?;
        check_matrix(n, b, "noise")?;
    }
    let solved: Vec<(Vec<Complex64>, f64)> = psd
        .speech
        .par_iter()
        .zip(psd.noise.par_iter())
        .map(|(s, n)| solve_bin(s, n, diag_loading))
        .collect();
    let mut filters = Array2::from_elem((solved.len(), m), Complex64::new(0.0, 0.0));
    let mut eigenvalues = Vec::with_capacity(solved.len());
    for (b, (f, lambda)) in solved.into_iter().enumerate() {
        for (k, v) in f.into_iter().enumerate() {
            filters[(b, k)] = v;
        }
        eigenvalues.push(lambda);
    }
    Ok(BeamformerWeights { filters, eigenvalues })
}

#[cfg(test)]
mod tests {
    use super::super::linalg::testutil::*;
    use super::super::linalg::*;
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn diag(values: &[f64]) -> CMatrix {
        Array2::from_shape_fn((values.len(), values.len()), |(i, j)| {
            Complex64::new(if i == j { values[i] } else { 0.0 }, 0.0)
        })
    }

    fn loaded(noise: &CMatrix, delta: f64) -> CMatrix {
        let m = noise.nrows();
        let tr: f64 = (0..m).map(|i| noise[(i, i)].re).sum();
        add_diagonal(noise, delta * tr / m as f64)
    }

    fn rayleigh(s: &CMatrix, n: &CMatrix, f: &[Complex64]) -> f64 {
        quadratic_form(s, f) / quadratic_form(n, f)
    }

    #[test]
    fn diagonal_case() {
        let psd = PsdPair { speech: vec![diag(&[2.0, 1.0])], noise: vec![identity(2)] };
        let w = gev_solve(&psd, 0.0).unwrap();
        assert!((w.filters[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(w.filters[(0, 1)].norm() < 1e-14);
        assert!((w.eigenvalues[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_case() {
        let psd = PsdPair { speech: vec![diag(&[3.0])], noise: vec![diag(&[4.0])] };
        let w = gev_solve(&psd, DEFAULT_DIAG_LOADING).unwrap();
        assert_eq!(w.filters[(0, 0)], Complex64::new(1.0, 0.0));
        assert!((w.eigenvalues[0] - 3.0 / (4.0 * (1.0 + 1e-6))).abs() < 1e-14);
    }

    #[test]
    fn random_pairs_optimal_and_residual() {
        let mut r = rng(21);
        for m in [2, 4, 6] {
            let speech: Vec<CMatrix> = (0..5).map(|_| random_psd(&mut r, m)).collect();
            let noise: Vec<CMatrix> = (0..5).map(|_| random_psd(&mut r, m)).collect();
            let psd = PsdPair { speech: speech.clone(), noise: noise.clone() };
            let w = gev_solve(&psd, DEFAULT_DIAG_LOADING).unwrap();
            for b in 0..5 {
                let f = w.filter(b);
                let nl = loaded(&noise[b], DEFAULT_DIAG_LOADING);
                assert!((vec_norm(&f) - 1.0).abs() < 1e-12);
                let best = rayleigh(&speech[b], &nl, &f);
                assert!((best - w.eigenvalues[b]).abs() < 1e-9 * best);
                // residual through explicit solve: Φ̃n⁻¹Φs f − λ f
                let l = cholesky(&nl).unwrap();
                let sf = mat_vec(&speech[b], &f);
                let tmp = solve_lower(&l, &Array2::from_shape_vec((m, 1), sf).unwrap());
                let x = solve_lower_adjoint(&l, &tmp.column(0).to_vec());
                let resid: f64 = x.iter().zip(&f).map(|(a, v)| (a - v * w.eigenvalues[b]).norm_sqr()).sum::<f64>().sqrt();
                assert!(resid < 1e-8, "residual {resid}");
                for _ in 0..2000 {
                    let p: Vec<Complex64> = (0..m)
                        .map(|_| Complex64::new(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r)))
                        .collect();
                    assert!(rayleigh(&speech[b], &nl, &p) <= best * (1.0 + 1e-12));
                }
                let mut k = 0;
                for i in 0..m {
                    if f[i].norm() > f[k].norm() {
                        k = i;
                    }
                }
                assert_eq!(f[k].im, 0.0);
                assert!(f[k].re >= 0.0);
            }
        }
    }

    #[test]
    fn noise_scale_invariance() {
        let mut r = rng(22);
        let speech: Vec<CMatrix> = (0..8).map(|_| random_psd(&mut r, 4)).collect();
        let noise: Vec<CMatrix> = (0..8).map(|_| random_psd(&mut r, 4)).collect();
        let base = gev_solve(&PsdPair { speech: speech.clone(), noise: noise.clone() }, DEFAULT_DIAG_LOADING).unwrap();
        for c in [1e-3, 1e3] {
            let scaled = noise.iter().map(|n| n.mapv(|v| v * c)).collect();
            let w = gev_solve(&PsdPair { speech: speech.clone(), noise: scaled }, DEFAULT_DIAG_LOADING).unwrap();
            for (x, y) in w.filters.iter().zip(base.filters.iter()) {
                assert!((x - y).norm() < 1e-8);
            }
            for (x, y) in w.eigenvalues.iter().zip(&base.eigenvalues) {
                assert!((x * c - y).abs() < 1e-8 * y);
            }
        }
    }

    #[test]
    fn singular_noise_is_loaded() {
        let m = 3;
        let psd = PsdPair { speech: vec![identity(m)], noise: vec![Array2::zeros((m, m))] };
        let w = gev_solve(&psd, DEFAULT_DIAG_LOADING).unwrap();
        assert!((vec_norm(&w.filter(0)) - 1.0).abs() < 1e-12);
        assert!(w.eigenvalues[0].is_finite());
    }

    #[test]
    fn rejects_bad_input() {
        let mut bad = identity(2);
        bad[(0, 1)] = Complex64::new(1.0, 0.0);
        let psd = PsdPair { speech: vec![bad], noise: vec![identity(2)] };
        assert!(matches!(gev_solve(&psd, 1e-6), Err(BeamformError::NotHermitian { which: "speech", .. })));
        let mut nan = identity(2);
        nan[(1, 1)] = Complex64::new(f64::NAN, 0.0);
        let psd = PsdPair { speech: vec![identity(2)], noise: vec![nan] };
        assert!(matches!(gev_solve(&psd, 1e-6), Err(BeamformError::NonFinite { which: "noise", .. })));
    }

    #[test]
    fn parallel_results_bit_identical() {
        let mut r = rng(23);
        let psd = PsdPair {
            speech: (0..33).map(|_| random_psd(&mut r, 5)).collect(),
            noise: (0..33).map(|_| random_psd(&mut r, 5)).collect(),
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| gev_solve(&psd, 1e-6).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
