//! Dense complex kernels for the cut matrix: Hermitian log-determinant and
//! the spectral norm by power iteration.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Bytes needed for `count` dense complex `m × m` matrices.
pub fn dense_bytes(m: usize, count: usize) -> u64 {
    (m as u64)
        .saturating_mul(m as u64)
        .saturating_mul(std::mem::size_of::<Complex64>() as u64)
        .saturating_mul(count as u64)
}

/// Fails with a resource error when `needed` exceeds `cap`.
pub fn check_budget(what: &str, needed: u64, cap: u64) -> Result<()> {
    if needed > cap {
        return Err(Error::Resource {
            what: what.to_string(),
            needed,
            cap,
        });
    }
    Ok(())
}

/// Magnitudes below this are flushed to zero; subnormal operands would
/// otherwise dominate the run time of the dense kernels.
pub const FLUSH_BELOW: f64 = 1e-300;

#[inline]
fn flush(z: Complex64) -> Complex64 {
    if z.re.abs() < FLUSH_BELOW && z.im.abs() < FLUSH_BELOW {
        Complex64::new(0.0, 0.0)
    } else {
        z
    }
}

/// `X = scale · H Hᴴ`, with entries below [`FLUSH_BELOW`] set to zero.
pub fn scaled_gram(h: ArrayView2<'_, Complex64>, scale: f64) -> Array2<Complex64> {
    let hh = h.t().mapv(|z| z.conj());
    let mut x = h.dot(&hh);
    x.mapv_inplace(|z| flush(z * scale));
    x
}

/// Complex dot product `Σ (ar + i ai)(br + i bi)` over split storage, with
/// four independent accumulators so the loop vectorizes.
#[inline]
fn split_dot(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> (f64, f64) {
    const LANES: usize = 8;
    let n = ar.len().min(ai.len()).min(br.len()).min(bi.len());
    let (ar, ai, br, bi) = (&ar[..n], &ai[..n], &br[..n], &bi[..n]);
    let (mut re, mut im) = ([0.0f64; LANES], [0.0f64; LANES]);
    let chunks = ar
        .chunks_exact(LANES)
        .zip(ai.chunks_exact(LANES))
        .zip(br.chunks_exact(LANES).zip(bi.chunks_exact(LANES)));
    for ((xr, xi), (yr, yi)) in chunks {
        for l in 0..LANES {
            re[l] += xr[l] * yr[l] - xi[l] * yi[l];
            im[l] += xr[l] * yi[l] + xi[l] * yr[l];
        }
    }
    let (mut sr, mut si) = (re.iter().sum::<f64>(), im.iter().sum::<f64>());
    for o in n - n % LANES..n {
        sr += ar[o] * br[o] - ai[o] * bi[o];
        si += ar[o] * bi[o] + ai[o] * br[o];
    }
    (sr, si)
}

/// Factor entries below this are dropped, which keeps every product of two
/// entries above [`FLUSH_BELOW`]. Their contribution to any pivot is below
/// `m · 1e-300`.
const FACTOR_FLUSH: f64 = 1e-150;

#[inline]
fn flush_f(v: f64) -> f64 {
    if v.abs() < FACTOR_FLUSH {
        0.0
    } else {
        v
    }
}

/// `ln det(I + X)` for Hermitian positive semidefinite `X`.
///
/// Runs an `LDLᴴ` factorization of `I + X` that carries `D_j - 1` instead of
/// `D_j`, so the result is `Σ ln_1p(D_j - 1)` and keeps full relative accuracy
/// when every eigenvalue of `X` is far below machine epsilon. Only the lower
/// triangle of `x` is read.
pub fn ln_det_identity_plus(x: &Array2<Complex64>) -> Result<f64> {
    let m = x.nrows();
    if x.ncols() != m {
        return Err(Error::Numerical(format!(
            "log-determinant needs a square matrix, got {}x{}",
            m,
            x.ncols()
        )));
    }
    // rows of the unit lower factor for the current block, and
    // w[j][k] = D_k conj(L_jk) for finished rows, real and imaginary parts
    // stored apart; a block of rows shares every pass over w
    const BLOCK: usize = 32;
    let (mut l_re, mut l_im) = (vec![0.0f64; BLOCK * m], vec![0.0f64; BLOCK * m]);
    let (mut w_re, mut w_im) = (vec![0.0f64; m * m], vec![0.0f64; m * m]);
    let mut delta = vec![0.0f64; m];
    let mut acc = 0.0;
    for i0 in (0..m).step_by(BLOCK) {
        let i1 = (i0 + BLOCK).min(m);
        // columns left of the block
        for j in 0..i0 {
            let o = j * m;
            let (wr, wi) = (&w_re[o..o + j], &w_im[o..o + j]);
            let dj = 1.0 + delta[j];
            for i in i0..i1 {
                let b = (i - i0) * m;
                let (sr, si) = split_dot(&l_re[b..b + j], &l_im[b..b + j], wr, wi);
                let xij = x[[i, j]];
                l_re[b + j] = flush_f((xij.re - sr) / dj);
                l_im[b + j] = flush_f((xij.im - si) / dj);
            }
        }
        // the triangle inside the block, row by row
        for i in i0..i1 {
            let b = (i - i0) * m;
            for j in i0..i {
                let o = j * m;
                let (sr, si) =
                    split_dot(&l_re[b..b + j], &l_im[b..b + j], &w_re[o..o + j], &w_im[o..o + j]);
                let dj = 1.0 + delta[j];
                let xij = x[[i, j]];
                l_re[b + j] = flush_f((xij.re - sr) / dj);
                l_im[b + j] = flush_f((xij.im - si) / dj);
            }
            let mut d = x[[i, i]].re;
            for k in 0..i {
                d -= (l_re[b + k] * l_re[b + k] + l_im[b + k] * l_im[b + k]) * (1.0 + delta[k]);
            }
            if !(1.0 + d > 0.0) || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "I + X is not positive definite at pivot {i} (D - 1 = {d})"
                )));
            }
            delta[i] = d;
            let o = i * m;
            for k in 0..i {
                let dk = 1.0 + delta[k];
                w_re[o + k] = flush_f(l_re[b + k] * dk);
                w_im[o + k] = flush_f(-l_im[b + k] * dk);
            }
            acc += d.ln_1p();
        }
    }
    Ok(acc)
}

/// Outcome of a power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    /// Largest eigenvalue of `FᴴF`, i.e. `‖F‖₂²`.
    pub value: f64,
    pub iterations: usize,
}

pub const POWER_TOL: f64 = 1e-6;
pub const POWER_MAX_ITER: usize = 10_000;

/// Iterate components below this carry no weight in a unit vector and are
/// dropped.
const ITERATE_FLUSH: f64 = 1e-150;

/// `‖F‖₂²` by power iteration on `FᴴF` from the all-ones start vector.
///
/// Stops when the Rayleigh quotient changes by less than `tol` relative.
pub fn spectral_norm_sq(f: ArrayView2<'_, Complex64>, tol: f64, max_iter: usize) -> Result<SpectralNorm> {
    let (rows, cols) = f.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::Numerical("spectral norm of an empty matrix".into()));
    }
    let f = f.as_standard_layout();
    let f_re: Vec<f64> = f.iter().map(|z| z.re).collect();
    let f_im: Vec<f64> = f.iter().map(|z| z.im).collect();
    let mut v_re = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut v_im = vec![0.0; cols];
    let (mut n_re, mut n_im) = (vec![0.0; cols], vec![0.0; cols]);
    let mut last = f64::NAN;
    let mut history = [f64::NAN; 3];
    for it in 1..=max_iter {
        // u_k = (F v)_k, then next += conj(F_k) u_k, one pass over the rows
        n_re.fill(0.0);
        n_im.fill(0.0);
        let mut lambda = 0.0;
        for k in 0..rows {
            let (rr, ri) = (&f_re[k * cols..(k + 1) * cols], &f_im[k * cols..(k + 1) * cols]);
            let (ur, ui) = split_dot(rr, ri, &v_re, &v_im);
            lambda += ur * ur + ui * ui;
            if ur == 0.0 && ui == 0.0 {
                continue;
            }
            for ((nr, ni), (a, b)) in n_re.iter_mut().zip(n_im.iter_mut()).zip(rr.iter().zip(ri)) {
                *nr += a * ur + b * ui;
                *ni += a * ui - b * ur;
            }
        }
        let norm = n_re
            .iter()
            .zip(&n_im)
            .map(|(a, b)| a * a + b * b)
            .sum::<f64>()
            .sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical(format!(
                "power iteration collapsed at iteration {it} (|FᴴFv| = {norm})"
            )));
        }
        for c in 0..cols {
            let (a, b) = (n_re[c] / norm, n_im[c] / norm);
            let keep = a.abs() >= ITERATE_FLUSH || b.abs() >= ITERATE_FLUSH;
            v_re[c] = if keep { a } else { 0.0 };
            v_im[c] = if keep { b } else { 0.0 };
        }
        history.rotate_left(1);
        history[2] = lambda;
        if (lambda - last).abs() <= tol * lambda {
            return Ok(SpectralNorm {
                value: lambda,
                iterations: it,
            });
        }
        last = lambda;
    }
    Err(Error::Numerical(format!(
        "power iteration did not reach relative tolerance {tol} in {max_iter} iterations \
         ({rows}x{cols} matrix, last Rayleigh quotients {history:?})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(m: usize, scale: f64, seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, m), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale
        })
    }

    fn eigen_oracle(x: &Array2<Complex64>) -> Vec<f64> {
        let m = x.nrows();
        let mat = DMatrix::from_fn(m, m, |i, j| {
            let z = x[[i, j]];
            nalgebra::Complex::new(z.re, z.im)
        });
        mat.symmetric_eigenvalues().iter().copied().collect()
    }

    #[test]
    fn identity_plus_zero() {
        let x = Array2::<Complex64>::zeros((5, 5));
        assert_eq!(ln_det_identity_plus(&x).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_matches_sum() {
        let x = Array2::from_diag(&array![1.0, 2.0, 0.5].mapv(|v| Complex64::new(v, 0.0)));
        let expected = 2f64.ln() + 3f64.ln() + 1.5f64.ln();
        assert!((ln_det_identity_plus(&x).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn matches_eigenvalue_oracle() {
        for (m, scale, seed) in [(8, 1.0, 1), (40, 0.3, 2), (64, 3.0, 3)] {
            let h = random_matrix(m, scale, seed);
            let x = scaled_gram(h.view(), 1.0);
            let oracle: f64 = eigen_oracle(&x).iter().map(|l| l.max(0.0).ln_1p()).sum();
            let got = ln_det_identity_plus(&x).unwrap();
            assert!((got - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{got} {oracle}");
        }
    }

    #[test]
    fn tiny_spectrum_keeps_relative_accuracy() {
        // eigenvalues near 1e-20: ln(1 + x) == x to double precision
        let h = random_matrix(16, 1e-10, 4);
        let x = scaled_gram(h.view(), 1.0);
        let trace: f64 = (0..16).map(|i| x[[i, i]].re).sum();
        let got = ln_det_identity_plus(&x).unwrap();
        assert!(got > 0.0);
        assert!((got - trace).abs() <= 1e-12 * trace, "{got} {trace}");
    }

    #[test]
    fn never_exceeds_trace() {
        for seed in 0..20 {
            let h = random_matrix(12, 2.0, seed);
            let x = scaled_gram(h.view(), 0.7);
            let trace: f64 = (0..12).map(|i| x[[i, i]].re).sum();
            assert!(ln_det_identity_plus(&x).unwrap() <= trace);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let x = Array2::from_diag(&array![Complex64::new(-2.0, 0.0)]);
        assert!(matches!(ln_det_identity_plus(&x), Err(Error::Numerical(_))));
    }

    #[test]
    fn spectral_norm_matches_oracle() {
        for (m, seed) in [(1, 9), (6, 10), (50, 11)] {
            let f = random_matrix(m, 1.0, seed);
            let x = scaled_gram(f.t().mapv(|z| z.conj()).view(), 1.0);
            let top = eigen_oracle(&x).into_iter().fold(f64::MIN, f64::max);
            let got = spectral_norm_sq(f.view(), 1e-12, POWER_MAX_ITER).unwrap();
            assert!((got.value - top).abs() <= 1e-8 * top, "{} {top}", got.value);
        }
    }

    #[test]
    fn spectral_norm_of_unit_scalar() {
        let f = array![[Complex64::from_polar(1.0, 0.7)]];
        let s = spectral_norm_sq(f.view(), POWER_TOL, POWER_MAX_ITER).unwrap();
        assert!((s.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_convergence_reports_diagnostics() {
        // equal top singular values with a rotating iterate never settle quickly
        let f = random_matrix(30, 1.0, 12);
        let err = spectral_norm_sq(f.view(), 0.0, 3).unwrap_err().to_string();
        assert!(err.contains("3 iterations"), "{err}");
    }

    #[test]
    fn budget() {
        assert_eq!(dense_bytes(2, 3), 2 * 2 * 16 * 3);
        assert!(check_budget("x", 10, 5).is_err());
        assert!(check_budget("x", 5, 5).is_ok());
    }
}
