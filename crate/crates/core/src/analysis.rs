//! Quantization-error study: eigenpairs, relative energy error of BFP
//! quantization, conditioning and the discrete-harmonic energy bound.

use nalgebra::DMatrix;
use rug::{Float, Rational};
use thiserror::Error;

use crate::bfp::BfpBlock;
use crate::ext::{jacobi_eigen, max_abs, BandedLdlt, ExtError};
use crate::multigrid::lanczos_max;
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Ext(#[from] ExtError),
    #[error("{0}")]
    Invalid(String),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
}

/// Residual tolerance `‖Av - λv‖ <= 2^-RESIDUAL_BITS ‖v‖` of computed eigenpairs.
pub const RESIDUAL_BITS: i32 = 100;

fn norm2(x: &[Float], prec: u32) -> Float {
    let mut s = Float::new(prec);
    for v in x {
        s += Float::with_val(prec, v.square_ref());
    }
    s.sqrt()
}

fn dot(x: &[Float], y: &[Float], prec: u32) -> Float {
    let mut s = Float::new(prec);
    for (a, b) in x.iter().zip(y) {
        s += a * b;
    }
    s
}

fn axpy(y: &mut [Float], alpha: &Float, x: &[Float], prec: u32) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi -= Float::with_val(prec, alpha * xi);
    }
}

/// Modified Gram-Schmidt, applied twice.
fn orthonormalize(vs: &mut [Vec<Float>], prec: u32) {
    for i in 0..vs.len() {
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = vs.split_at_mut(i);
                let c = dot(&head[j], &tail[0], prec);
                axpy(&mut tail[0], &c, &head[j], prec);
            }
        }
        let n = norm2(&vs[i], prec);
        for v in &mut vs[i] {
            *v /= &n;
        }
    }
}

fn residual_norm(a: &CsrMatrix<Float>, lambda: &Float, v: &[Float], prec: u32) -> Float {
    let av = a.mul_vec(v, prec);
    let r: Vec<Float> = av.into_iter().zip(v).map(|(x, y)| x - Float::with_val(prec, lambda * y)).collect();
    norm2(&r, prec)
}

/// Deterministic start vectors with components in every low mode.
fn start_vector(n: usize, k: usize, prec: u32) -> Vec<Float> {
    let mut state = 0x2545_f491_4f6c_dd1du64 ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            Float::with_val(prec, (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        })
        .collect()
}

/// The `count` smallest eigenpairs of an SPD matrix by block inverse
/// iteration with Rayleigh-Ritz, eigenvalues ascending, unit eigenvectors.
pub fn smallest_eigpairs(
    a: &CsrMatrix<Float>,
    count: usize,
    prec: u32,
) -> Result<(Vec<Float>, Vec<Vec<Float>>), AnalysisError> {
    let n = a.rows();
    if count == 0 || count > n {
        return Err(AnalysisError::Invalid(format!("cannot compute {count} eigenpairs of a {n}x{n} matrix")));
    }
    let ldlt = BandedLdlt::factor(a, prec)?;
    let block = (count + 4).min(n);
    let mut vs: Vec<Vec<Float>> = (0..block).map(|k| start_vector(n, k, prec)).collect();
    orthonormalize(&mut vs, prec);
    let tol = Float::with_val(prec, 1) >> RESIDUAL_BITS;
    let max_iters = 2000;
    for _ in 0..max_iters {
        let mut ws: Vec<Vec<Float>> = vs.iter().map(|v| ldlt.solve(v)).collect();
        orthonormalize(&mut ws, prec);
        let aw: Vec<Vec<Float>> = ws.iter().map(|w| a.mul_vec(w, prec)).collect();
        let mut h = vec![Float::new(prec); block * block];
        for i in 0..block {
            for j in i..block {
                let v = dot(&ws[i], &aw[j], prec);
                h[j * block + i] = v.clone();
                h[i * block + j] = v;
            }
        }
        let (vals, vecs) = jacobi_eigen(&h, block, prec);
        vs = (0..block)
            .map(|c| {
                let mut out = vec![Float::new(prec); n];
                for (r, w) in ws.iter().enumerate() {
                    let coef = &vecs[r * block + c];
                    for (o, x) in out.iter_mut().zip(w) {
                        *o += Float::with_val(prec, coef * x);
                    }
                }
                out
            })
            .collect();
        let done = (0..count).all(|i| residual_norm(a, &vals[i], &vs[i], prec) <= tol);
        if done {
            orthonormalize(&mut vs[..count], prec);
            return Ok((vals.into_iter().take(count).collect(), vs.into_iter().take(count).collect()));
        }
    }
    Err(AnalysisError::NoConvergence(max_iters))
}

/// Largest eigenvalue of a symmetric matrix by inverse iteration on
/// `σI - A`, with `σ` slightly above a double-precision estimate.
pub fn largest_eigenvalue(a: &CsrMatrix<Float>, prec: u32) -> Result<Float, AnalysisError> {
    let n = a.rows();
    let af = a.to_f64();
    let estimate = if n <= 1500 {
        DMatrix::from_row_slice(n, n, &af.to_dense()).symmetric_eigenvalues().max()
    } else {
        lanczos_max(n, |x| {
            let y = af.mul_vec_f64(x.as_slice());
            nalgebra::DVector::from_vec(y)
        })
    };
    let scale = a.inf_norm(prec).to_f64();
    let mut margin = 1e-9 * scale;
    let (shifted, ldlt) = loop {
        let sigma = Float::with_val(prec, estimate + margin);
        let shifted = a.map_indexed(|i, j, v| if i == j { Float::with_val(prec, &sigma - v) } else { Float::with_val(prec, -v) });
        let shifted = ensure_diagonal(shifted, &sigma, prec);
        match BandedLdlt::factor(&shifted, prec) {
            Ok(f) => break ((sigma, shifted), f),
            Err(_) if margin < scale => margin *= 16.0,
            Err(e) => return Err(e.into()),
        }
    };
    let (sigma, shifted) = shifted;
    let tol = Float::with_val(prec, 1) >> RESIDUAL_BITS;
    let mut v = start_vector(n, 0, prec);
    let nv = norm2(&v, prec);
    for x in &mut v {
        *x /= &nv;
    }
    for _ in 0..5000 {
        let mut w = ldlt.solve(&v);
        let nw = norm2(&w, prec);
        for x in &mut w {
            *x /= &nw;
        }
        v = w;
        let mu = dot(&v, &shifted.mul_vec(&v, prec), prec);
        let lambda = Float::with_val(prec, &sigma - &mu);
        if residual_norm(a, &lambda, &v, prec) <= tol {
            return Ok(lambda);
        }
    }
    Err(AnalysisError::NoConvergence(5000))
}

/// Adds `sigma` on diagonal positions missing from the pattern.
fn ensure_diagonal(m: CsrMatrix<Float>, sigma: &Float, prec: u32) -> CsrMatrix<Float> {
    if (0..m.rows()).all(|i| m.get(i, i).is_some()) {
        return m;
    }
    let mut t: Vec<(usize, usize, Float)> = m.triplets().map(|(i, j, v)| (i, j, v.clone())).collect();
    for i in 0..m.rows() {
        if m.get(i, i).is_none() {
            t.push((i, i, Float::with_val(prec, sigma)));
        }
    }
    CsrMatrix::from_triplets(m.rows(), m.cols(), t, |a, b| *a += b)
}

/// `κ = λ_max / λ_min`, `κ̲ = ‖|A|‖ ‖A^-1‖` and the pseudo mesh size
/// `h = κ̲^(-1/(2m))`, all in the spectral norm.
#[derive(Debug, Clone)]
pub struct Conditioning {
    pub lambda_min: Float,
    pub lambda_max: Float,
    pub kappa: Float,
    pub kappa_abs: Float,
    pub pseudo_h: Float,
}

pub fn condition_numbers(a: &CsrMatrix<Float>, m: usize, prec: u32) -> Result<Conditioning, AnalysisError> {
    let (vals, _) = smallest_eigpairs(a, 1, prec)?;
    let lambda_min = vals.into_iter().next().unwrap();
    let lambda_max = largest_eigenvalue(a, prec)?;
    let abs = a.map(|v| Float::with_val(prec, v.abs_ref()));
    let abs_norm = largest_eigenvalue(&abs, prec)?;
    let kappa = Float::with_val(prec, &lambda_max / &lambda_min);
    let kappa_abs = abs_norm / &lambda_min;
    let pseudo_h = Float::with_val(prec, kappa_abs.ln_ref()) / -(2.0 * m as f64);
    let pseudo_h = pseudo_h.exp();
    Ok(Conditioning { lambda_min, lambda_max, kappa, kappa_abs, pseudo_h })
}

/// Smallest eigenpairs together with the conditioning of `A`.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Float>,
    pub eigenvectors: Vec<Vec<Float>>,
    pub conditioning: Conditioning,
}

pub fn spectral_report(a: &CsrMatrix<Float>, m: usize, count: usize, prec: u32) -> Result<SpectralReport, AnalysisError> {
    let (eigenvalues, eigenvectors) = smallest_eigpairs(a, count, prec)?;
    let conditioning = condition_numbers(a, m, prec)?;
    Ok(SpectralReport { eigenvalues, eigenvectors, conditioning })
}

/// `‖x‖_A`.
pub fn energy_norm(a: &CsrMatrix<Float>, x: &[Float], prec: u32) -> Float {
    let ax = a.mul_vec(x, prec);
    let s = dot(x, &ax, prec);
    if s <= 0 {
        Float::new(prec)
    } else {
        s.sqrt()
    }
}

/// `ε = 2^-(w-1)`.
pub fn epsilon(w: u32) -> Rational {
    Rational::from((1, 1)) >> (w - 1)
}

/// Result of quantizing one vector.
#[derive(Debug, Clone)]
pub struct QuantError {
    /// `u = v / ‖v‖_∞`.
    pub scaled: Vec<Float>,
    /// BFP quantization of `u` at width `w` (truncation toward -∞).
    pub quantized: Vec<Float>,
    /// `z = (u - quantized) / ε`.
    pub z: Vec<Float>,
    /// `E = ε ‖z‖_A / ‖quantized‖_A`.
    pub relative: Float,
}

/// Relative energy error of BFP quantization of `v` to `w` bits.
pub fn quant_error(v: &[Float], w: u32, a: &CsrMatrix<Float>, prec: u32) -> Result<QuantError, AnalysisError> {
    let scale = max_abs(v, prec);
    if scale.is_zero() {
        return Err(AnalysisError::Invalid("quantization error of the zero vector".into()));
    }
    let scaled: Vec<Float> = v.iter().map(|x| Float::with_val(prec, x / &scale)).collect();
    let quantized = BfpBlock::from_float_vector(&scaled, w).to_floats(prec);
    let eps = Float::with_val(prec, epsilon(w));
    let diff: Vec<Float> = scaled.iter().zip(&quantized).map(|(u, q)| Float::with_val(prec, u - q)).collect();
    let z = diff.iter().map(|d| Float::with_val(prec, d / &eps)).collect();
    let denom = energy_norm(a, &quantized, prec);
    let relative = if denom.is_zero() { Float::with_val(prec, f64::INFINITY) } else { energy_norm(a, &diff, prec) / denom };
    Ok(QuantError { scaled, quantized, z, relative })
}

/// Minimal `‖v‖_A` over `‖v‖_∞ = 1` and its minimizer.
#[derive(Debug, Clone)]
pub struct DiscreteHarmonic {
    /// `(max_p (A^-1)_pp)^(-1/2)`.
    pub min_energy: Float,
    pub index: usize,
    pub diag_max: Float,
    /// `A^-1 e_p / (A^-1)_pp`.
    pub v: Vec<Float>,
}

pub fn discrete_harmonic_min(a: &CsrMatrix<Float>, prec: u32) -> Result<DiscreteHarmonic, AnalysisError> {
    let ldlt = BandedLdlt::factor(a, prec)?;
    let diag = ldlt.inverse_diagonal();
    let mut index = 0;
    for (i, d) in diag.iter().enumerate() {
        if *d > diag[index] {
            index = i;
        }
    }
    let diag_max = diag[index].clone();
    let mut e = vec![Float::new(prec); a.rows()];
    e[index] = Float::with_val(prec, 1);
    let v = ldlt.solve(&e).into_iter().map(|x| x / &diag_max).collect();
    let min_energy = Float::with_val(prec, diag_max.recip_ref()).sqrt();
    Ok(DiscreteHarmonic { min_energy, index, diag_max, v })
}

/// Five-point Laplacian stencil `[-1; -1 4 -1; -1]` on an `n x n` interior grid.
pub fn five_point_laplacian(n: usize, prec: u32) -> CsrMatrix<Float> {
    let idx = |i: usize, j: usize| i * n + j;
    let mut t = Vec::with_capacity(5 * n * n);
    for i in 0..n {
        for j in 0..n {
            t.push((idx(i, j), idx(i, j), Float::with_val(prec, 4)));
            let mut nb = |k: usize| t.push((idx(i, j), k, Float::with_val(prec, -1)));
            if i > 0 {
                nb(idx(i - 1, j));
            }
            if i + 1 < n {
                nb(idx(i + 1, j));
            }
            if j > 0 {
                nb(idx(i, j - 1));
            }
            if j + 1 < n {
                nb(idx(i, j + 1));
            }
        }
    }
    CsrMatrix::from_triplets(n * n, n * n, t, |a, b| *a += b)
}

/// Smallest eigenvalue of [`five_point_laplacian`], `8 sin²(π / (2(n+1)))`.
pub fn five_point_lambda_min(n: usize, prec: u32) -> Float {
    let arg = crate::ext::pi(prec) / (2 * (n as u32 + 1));
    Float::with_val(prec, arg.sin().square()) * 8u32
}

/// `1/0` checkerboard on an `n x n` grid, ones where `i + j` is even.
pub fn checkerboard(n: usize, prec: u32) -> Vec<Float> {
    (0..n * n).map(|k| Float::with_val(prec, u32::from((k / n + k % n) % 2 == 0))).collect()
}

/// Discrete-harmonic bound of the five-point Laplacian scaled to `λ_min = 1`.
pub fn scaled_harmonic_bound(n: usize, prec: u32) -> Result<Float, AnalysisError> {
    let dh = discrete_harmonic_min(&five_point_laplacian(n, prec), prec)?;
    Ok(dh.min_energy / five_point_lambda_min(n, prec).sqrt())
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Exponent `a` of the fit `bound ≈ C n^a` for the scaled five-point bound.
pub fn harmonic_growth_exponent(ns: &[usize], prec: u32) -> Result<(Vec<Float>, f64), AnalysisError> {
    let bounds: Vec<Float> = ns.iter().map(|&n| scaled_harmonic_bound(n, prec)).collect::<Result<_, _>>()?;
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = bounds.iter().map(|b| b.to_f64().ln()).collect();
    let slope = least_squares_slope(&x, &y);
    Ok((bounds, slope))
}
