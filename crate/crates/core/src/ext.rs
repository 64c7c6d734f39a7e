//! Extended-precision (MPFR) helpers for setup and reference computations.

use rug::float::Constant;
use rug::{Assign, Float};
use thiserror::Error;

use crate::sparse::CsrMatrix;

/// Binary float with a configurable mantissa width.
pub type ExtFloat = Float;

/// Default mantissa width of reference computations.
pub const EXT_PREC: u32 = 400;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtError {
    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("matrix is not square")]
    NotSquare,
}

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

pub fn ext(prec: u32, v: f64) -> Float {
    Float::with_val(prec, v)
}

pub fn ratio(prec: u32, num: i64, den: i64) -> Float {
    Float::with_val(prec, num) / den
}

pub fn zeros(n: usize, prec: u32) -> Vec<Float> {
    vec![Float::new(prec); n]
}

pub fn dot(x: &[Float], y: &[Float], prec: u32) -> Float {
    let mut acc = Float::new(prec);
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

pub fn max_abs(x: &[Float], prec: u32) -> Float {
    let mut best = Float::new(prec);
    for v in x {
        let a = Float::with_val(prec, v.abs_ref());
        if a > best {
            best = a;
        }
    }
    best
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, refined by Newton's method
/// at precision `prec`.
pub fn gauss_legendre(nq: usize, prec: u32) -> (Vec<Float>, Vec<Float>) {
    assert!(nq >= 1);
    let guard = prec + 32;
    let mut nodes = Vec::with_capacity(nq);
    let mut weights = Vec::with_capacity(nq);
    let tol = Float::with_val(guard, 1) >> (prec as i32 + 8);
    for i in 0..nq {
        let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (nq as f64 + 0.5)).cos();
        let mut x = Float::with_val(guard, -guess);
        let mut deriv;
        loop {
            let (p, dp) = legendre(nq, &x);
            let step = Float::with_val(guard, &p / &dp);
            x -= &step;
            deriv = dp;
            if step.abs() < tol {
                break;
            }
        }
        let (_, dp) = legendre(nq, &x);
        if dp.is_finite() {
            deriv = dp;
        }
        let one_minus = Float::with_val(guard, 1) - Float::with_val(guard, x.square_ref());
        let w = Float::with_val(guard, 2) / (one_minus * deriv.square());
        nodes.push(Float::with_val(prec, &x));
        weights.push(Float::with_val(prec, &w));
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: &Float) -> (Float, Float) {
    let prec = x.prec();
    let mut p0 = Float::with_val(prec, 1);
    let mut p1 = x.clone();
    for k in 2..=n {
        let k = k as u32;
        let mut p2 = Float::with_val(prec, x * &p1) * (2 * k - 1);
        p2 -= Float::with_val(prec, &p0 * (k - 1));
        p2 /= k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (p0, Float::new(prec));
    }
    // P_n' = n (x P_n - P_{n-1}) / (x^2 - 1)
    let num = (Float::with_val(prec, x * &p1) - &p0) * n as u32;
    let den = Float::with_val(prec, x.square_ref()) - 1u32;
    (p1, num / den)
}

/// `A = L D L^T` for a symmetric banded matrix, band storage.
#[derive(Clone, Debug)]
pub struct BandedLdlt {
    n: usize,
    bw: usize,
    prec: u32,
    /// Row `i` holds `L[i][i-bw .. i]`, left-padded with zeros.
    l: Vec<Float>,
    d: Vec<Float>,
}

impl BandedLdlt {
    pub fn factor(a: &CsrMatrix<Float>, prec: u32) -> Result<BandedLdlt, ExtError> {
        if a.rows() != a.cols() {
            return Err(ExtError::NotSquare);
        }
        let n = a.rows();
        let bw = a.bandwidth();
        let mut l = vec![Float::new(prec); n * bw];
        let mut d: Vec<Float> = Vec::with_capacity(n);
        // u[k] = L[i][k] * D[k] for the current row
        let mut u = vec![Float::new(prec); bw];
        let mut s = Float::new(prec);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for slot in u.iter_mut() {
                *slot = Float::new(prec);
            }
            let (cols, vals) = a.row(i);
            for j in lo..i {
                load_entry(&mut s, cols, vals, j);
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= &u[k + bw - i] * &l[j * bw + k + bw - j];
                }
                l[i * bw + j + bw - i] = Float::with_val(prec, &s / &d[j]);
                u[j + bw - i].assign(&s);
            }
            load_entry(&mut s, cols, vals, i);
            for k in lo..i {
                s -= &u[k + bw - i] * &l[i * bw + k + bw - i];
            }
            if s <= 0 {
                return Err(ExtError::NotPositiveDefinite(i));
            }
            d.push(s.clone());
        }
        Ok(BandedLdlt { n, bw, prec, l, d })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn pivots(&self) -> &[Float] {
        &self.d
    }

    fn lower(&self, i: usize, j: usize) -> &Float {
        &self.l[i * self.bw + j + self.bw - i]
    }

    pub fn solve(&self, b: &[Float]) -> Vec<Float> {
        let (n, bw) = (self.n, self.bw);
        let mut y: Vec<Float> = b.iter().map(|v| Float::with_val(self.prec, v)).collect();
        for i in 0..n {
            for k in i.saturating_sub(bw)..i {
                let t = Float::with_val(self.prec, self.lower(i, k) * &y[k]);
                y[i] -= t;
            }
        }
        for (yi, di) in y.iter_mut().zip(&self.d) {
            *yi /= di;
        }
        for i in (0..n).rev() {
            for k in i + 1..(i + bw + 1).min(n) {
                let t = Float::with_val(self.prec, self.lower(k, i) * &y[k]);
                y[i] -= t;
            }
        }
        y
    }

    /// Diagonal of `A^{-1}` by the selected-inversion recurrence
    /// `Z = D^{-1} L^{-1} + (I - L^T) Z`, touching only the band.
    pub fn inverse_diagonal(&self) -> Vec<Float> {
        let (n, bw, prec) = (self.n, self.bw, self.prec);
        // z[i*(bw+1) + t] = Z[i][i+t]
        let stride = bw + 1;
        let mut z = vec![Float::new(prec); n * stride];
        let upper = |z: &[Float], a: usize, b: usize| -> Float {
            let (r, c) = if a <= b { (a, b) } else { (b, a) };
            Float::with_val(prec, &z[r * stride + (c - r)])
        };
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            for j in (i + 1..hi).rev() {
                let mut acc = Float::new(prec);
                for k in i + 1..hi {
                    acc -= Float::with_val(prec, self.lower(k, i) * &upper(&z, k, j));
                }
                z[i * stride + (j - i)] = acc;
            }
            let mut acc = Float::with_val(prec, 1) / &self.d[i];
            for k in i + 1..hi {
                acc -= Float::with_val(prec, self.lower(k, i) * &z[i * stride + (k - i)]);
            }
            z[i * stride] = acc;
        }
        (0..n).map(|i| z[i * stride].clone()).collect()
    }
}

fn load_entry(dst: &mut Float, cols: &[usize], vals: &[Float], j: usize) {
    match cols.binary_search(&j) {
        Ok(k) => dst.assign(&vals[k]),
        Err(_) => dst.assign(0),
    }
}

/// Cyclic Jacobi eigensolver for a small dense symmetric matrix (row-major).
/// Returns ascending eigenvalues and the matching eigenvectors as columns of
/// a row-major matrix.
pub fn jacobi_eigen(a: &[Float], n: usize, prec: u32) -> (Vec<Float>, Vec<Float>) {
    assert_eq!(a.len(), n * n);
    let mut a: Vec<Float> = a.iter().map(|v| Float::with_val(prec, v)).collect();
    let mut v = vec![Float::new(prec); n * n];
    for i in 0..n {
        v[i * n + i] = Float::with_val(prec, 1);
    }
    let eps = Float::with_val(prec, 1) >> (prec as i32 - 4);
    for _sweep in 0..100 {
        let mut off = Float::new(prec);
        let mut scale = Float::new(prec);
        for i in 0..n {
            for j in 0..n {
                let sq = Float::with_val(prec, a[i * n + j].square_ref());
                if i != j {
                    off += sq;
                } else {
                    scale += sq;
                }
            }
        }
        if off <= Float::with_val(prec, &eps * &eps) * &scale || off.is_zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p * n + q].is_zero() {
                    continue;
                }
                let theta = Float::with_val(prec, &a[q * n + q] - &a[p * n + p]) / (Float::with_val(prec, 2) * &a[p * n + q]);
                let root = (Float::with_val(prec, theta.square_ref()) + 1u32).sqrt();
                let t = if theta >= 0 {
                    Float::with_val(prec, 1) / (Float::with_val(prec, &theta) + &root)
                } else {
                    Float::with_val(prec, -1) / (root - &theta)
                };
                let c = Float::with_val(prec, 1) / (Float::with_val(prec, t.square_ref()) + 1u32).sqrt();
                let s = Float::with_val(prec, &t * &c);
                for k in 0..n {
                    let akp = a[k * n + p].clone();
                    let akq = a[k * n + q].clone();
                    a[k * n + p] = Float::with_val(prec, &c * &akp) - Float::with_val(prec, &s * &akq);
                    a[k * n + q] = Float::with_val(prec, &s * &akp) + Float::with_val(prec, &c * &akq);
                }
                for k in 0..n {
                    let apk = a[p * n + k].clone();
                    let aqk = a[q * n + k].clone();
                    a[p * n + k] = Float::with_val(prec, &c * &apk) - Float::with_val(prec, &s * &aqk);
                    a[q * n + k] = Float::with_val(prec, &s * &apk) + Float::with_val(prec, &c * &aqk);
                }
                for k in 0..n {
                    let vkp = v[k * n + p].clone();
                    let vkq = v[k * n + q].clone();
                    v[k * n + p] = Float::with_val(prec, &c * &vkp) - Float::with_val(prec, &s * &vkq);
                    v[k * n + q] = Float::with_val(prec, &s * &vkp) + Float::with_val(prec, &c * &vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let vals = order.iter().map(|&i| a[i * n + i].clone()).collect();
    let mut vecs = vec![Float::new(prec); n * n];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + new] = v[k * n + old].clone();
        }
    }
    (vals, vecs)
}

/// `2^e` as a float.
pub fn pow2(prec: u32, e: i32) -> Float {
    Float::with_val(prec, 1) << e
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::ops::Pow;

    const P: u32 = 256;

    fn close(a: &Float, b: &Float, bits: i32) -> bool {
        let diff = Float::with_val(P, a - b).abs();
        diff <= pow2(P, -bits)
    }

    #[test]
    fn gauss_legendre_classical_values() {
        let (x, w) = gauss_legendre(1, P);
        assert!(x[0].is_zero() || close(&x[0], &Float::new(P), 240));
        assert!(close(&w[0], &ext(P, 2.0), 240));
        let (x, w) = gauss_legendre(2, P);
        let r = Float::with_val(P, 3).sqrt().recip();
        assert!(close(&x[1], &r, 240) && close(&x[0], &(-r.clone()), 240));
        assert!(close(&w[0], &ext(P, 1.0), 240));
        for nq in 1..12 {
            let (x, w) = gauss_legendre(nq, P);
            let mut s = Float::new(P);
            for v in &w {
                s += v;
            }
            assert!(close(&s, &ext(P, 2.0), 240), "nq={nq}");
            // exact for x^(2nq-2)
            let mut m = Float::new(P);
            for (xi, wi) in x.iter().zip(&w) {
                m += xi.clone().pow(2 * nq as u32 - 2) * wi;
            }
            let expect = Float::with_val(P, 2) / (2 * nq as u32 - 1);
            assert!(close(&m, &expect, 230), "nq={nq}");
        }
    }

    fn tridiag(n: usize) -> CsrMatrix<Float> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, ext(P, 2.0)));
            if i > 0 {
                t.push((i, i - 1, ext(P, -1.0)));
                t.push((i - 1, i, ext(P, -1.0)));
            }
        }
        CsrMatrix::from_triplets(n, n, t, |a, b| *a += b)
    }

    #[test]
    fn banded_solve_and_inverse_diagonal() {
        let n = 9;
        let a = tridiag(n);
        let f = BandedLdlt::factor(&a, P).unwrap();
        let b: Vec<Float> = (0..n).map(|i| ext(P, (i as f64).sin())).collect();
        let x = f.solve(&b);
        let r = a.mul_vec(&x, P);
        for (ri, bi) in r.iter().zip(&b) {
            assert!(close(ri, bi, 240));
        }
        // (tridiag(n)^{-1})_ii = i' (n + 1 - i') / (n + 1), 1-based
        let diag = f.inverse_diagonal();
        for (i, v) in diag.iter().enumerate() {
            let k = (i + 1) as i64;
            let expect = ratio(P, k * (n as i64 + 1 - k), n as i64 + 1);
            assert!(close(v, &expect, 240));
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let t = vec![(0, 0, ext(P, 1.0)), (0, 1, ext(P, 2.0)), (1, 0, ext(P, 2.0)), (1, 1, ext(P, 1.0))];
        let a = CsrMatrix::from_triplets(2, 2, t, |a, b| *a += b);
        assert!(matches!(BandedLdlt::factor(&a, P), Err(ExtError::NotPositiveDefinite(1))));
    }

    #[test]
    fn jacobi_recovers_tridiagonal_spectrum() {
        let n = 6;
        let dense = tridiag(n).to_f64().to_dense();
        let a: Vec<Float> = dense.iter().map(|&v| ext(P, v)).collect();
        let (vals, vecs) = jacobi_eigen(&a, n, P);
        let h = pi(P) / (n as u32 + 1);
        for (k, lam) in vals.iter().enumerate() {
            let s = Float::with_val(P, &h * (k as u32 + 1)) / 2u32;
            let expect = Float::with_val(P, s.sin().square()) * 4u32;
            assert!(close(lam, &expect, 200));
        }
        let mut norm = Float::new(P);
        for k in 0..n {
            norm += Float::with_val(P, vecs[k * n].square_ref());
        }
        assert!(close(&norm, &ext(P, 1.0), 200));
    }
}
