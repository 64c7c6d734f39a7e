//! Windowed BFP vector kernels.
//!
//! Every kernel computes each output row exactly (an [`ExactKernel`]) and
//! keeps only a window of the exact mantissa. [`qcomp`] chooses the window from
//! the largest row result and is therefore exact to `w_out` bits;
//! [`nnqcomp`] fixes the window from the bound `γ` up front and saturates.

use std::sync::Arc;

use rug::{Assign, Float, Integer};
use thiserror::Error;

use crate::bfp::{BfpBlock, BfpError, BfpScalar, Layout};
use crate::sparse::CsrMatrix;
use crate::wideint::WideInt;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlasError {
    #[error("invalid window: w_out = {w_out}, w_tmp = {w_tmp}")]
    InvalidWindow { w_out: u32, w_tmp: u32 },
    #[error("γ must be positive")]
    InvalidGamma,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("m_A = {given} is below the largest row count {actual}")]
    RowBound { given: usize, actual: usize },
    #[error(transparent)]
    Block(#[from] BfpError),
}

/// A computation whose rows are exact integers at a common exponent.
pub trait ExactKernel {
    /// Width `q_z*` and exponent `e_z*` shared by all row results.
    fn template(&self) -> (u32, i64);
    fn rows(&self) -> usize;
    /// Exact mantissa of row `i`, width `q_z*`.
    fn row(&self, i: usize) -> WideInt;
}

/// `ceil(log2(m))` for `m >= 1`.
pub fn ceil_log2(m: usize) -> u32 {
    assert!(m >= 1);
    usize::BITS - (m - 1).leading_zeros()
}

/// Sparse matrix stored as one BFP block over its structural nonzeros.
#[derive(Clone, Debug)]
pub struct BfpMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Arc<[usize]>,
    col_idx: Arc<[usize]>,
    values: BfpBlock,
    m_a: usize,
}

impl BfpMatrix {
    /// Quantizes `a` to a normalized `w`-bit block (floor rounding).
    pub fn from_csr(a: &CsrMatrix<Float>, w: u32) -> BfpMatrix {
        let layout = Layout::Matrix { rows: a.rows(), cols: a.cols() };
        let values = BfpBlock::from_floats(a.values(), w, layout);
        BfpMatrix {
            rows: a.rows(),
            cols: a.cols(),
            row_ptr: a.row_ptr().into(),
            col_idx: a.col_idx().into(),
            values,
            m_a: a.max_row_nnz().max(1),
        }
    }

    /// Builds from CSR structure and a matching value block.
    pub fn new(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: BfpBlock,
    ) -> Result<BfpMatrix, BlasError> {
        if row_ptr.len() != rows + 1 || *row_ptr.last().unwrap_or(&0) != col_idx.len() || col_idx.len() != values.len() {
            return Err(BlasError::Dimension("inconsistent CSR arrays".into()));
        }
        if col_idx.iter().any(|&c| c >= cols) {
            return Err(BlasError::Dimension("column index out of range".into()));
        }
        let m_a = row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0).max(1);
        let values = BfpBlock::new(values.q(), values.exp(), Layout::Matrix { rows, cols }, values.mantissas().to_vec())?;
        Ok(BfpMatrix { rows, cols, row_ptr: row_ptr.into(), col_idx: col_idx.into(), values, m_a })
    }

    /// Overrides the row bound `m_A` used for the accumulator width.
    pub fn with_row_bound(mut self, m_a: usize) -> Result<BfpMatrix, BlasError> {
        let actual = self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
        if m_a < actual.max(1) {
            return Err(BlasError::RowBound { given: m_a, actual });
        }
        self.m_a = m_a;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_bound(&self) -> usize {
        self.m_a
    }

    pub fn values(&self) -> &BfpBlock {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[WideInt]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values.mantissas()[span])
    }
}

/// Alignment plan of an exact `α a + β b` (axpby setup).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxpbyPlan {
    pub q_a: u32,
    pub q_b: u32,
    pub d: i64,
    pub q_z: u32,
    pub e_z: i64,
}

impl AxpbyPlan {
    /// `(q_x, e_x)` and `(q_y, e_y)` describe the vector operands.
    pub fn new(alpha: &BfpScalar, x: (u32, i64), beta: &BfpScalar, y: (u32, i64)) -> AxpbyPlan {
        let q_a = alpha.q() + x.0;
        let e_a = alpha.exp() + x.1;
        let q_b = beta.q() + y.0;
        let e_b = beta.exp() + y.1;
        let d = e_a - e_b;
        let gap = u32::try_from(d.unsigned_abs()).expect("exponent gap too large");
        let (q_z, e_z) = if d < 0 { (q_a.max(q_b + gap) + 1, e_a) } else { (q_b.max(q_a + gap) + 1, e_b) };
        AxpbyPlan { q_a, q_b, d, q_z, e_z }
    }

    /// Aligns the products `a = α x_i`, `b = β y_i` and adds them.
    pub fn combine(&self, a: WideInt, b: WideInt) -> WideInt {
        let gap = u32::try_from(self.d.unsigned_abs()).unwrap();
        let (a, b) = if self.d < 0 {
            (a, b.incr(gap).shl(gap).expect("widened before shift"))
        } else {
            (a.incr(gap).shl(gap).expect("widened before shift"), b)
        };
        a.add(&b).cast(self.q_z)
    }
}

/// Exact `α x + β y`.
pub struct Eaxpby<'a> {
    x: &'a BfpBlock,
    y: &'a BfpBlock,
    alpha: &'a BfpScalar,
    beta: &'a BfpScalar,
    plan: AxpbyPlan,
}

impl<'a> Eaxpby<'a> {
    pub fn new(x: &'a BfpBlock, y: &'a BfpBlock, alpha: &'a BfpScalar, beta: &'a BfpScalar) -> Result<Self, BlasError> {
        if x.len() != y.len() {
            return Err(BlasError::Dimension(format!("axpby of lengths {} and {}", x.len(), y.len())));
        }
        let plan = AxpbyPlan::new(alpha, (x.q(), x.exp()), beta, (y.q(), y.exp()));
        Ok(Eaxpby { x, y, alpha, beta, plan })
    }

    pub fn plan(&self) -> AxpbyPlan {
        self.plan
    }
}

impl ExactKernel for Eaxpby<'_> {
    fn template(&self) -> (u32, i64) {
        (self.plan.q_z, self.plan.e_z)
    }

    fn rows(&self) -> usize {
        self.x.len()
    }

    fn row(&self, i: usize) -> WideInt {
        let a = self.alpha.mantissa().mul(self.x.mantissa(i));
        let b = self.beta.mantissa().mul(self.y.mantissa(i));
        self.plan.combine(a, b)
    }
}

/// Exact sparse `A x`.
pub struct Espmv<'a> {
    a: &'a BfpMatrix,
    x: &'a BfpBlock,
    q_z: u32,
    e_z: i64,
}

impl<'a> Espmv<'a> {
    pub fn new(a: &'a BfpMatrix, x: &'a BfpBlock) -> Result<Self, BlasError> {
        if a.cols != x.len() {
            return Err(BlasError::Dimension(format!("{}x{} matrix times {}-vector", a.rows, a.cols, x.len())));
        }
        let q_z = a.values.q() + x.q() + ceil_log2(a.m_a);
        Ok(Espmv { a, x, q_z, e_z: a.values.exp() + x.exp() })
    }
}

impl ExactKernel for Espmv<'_> {
    fn template(&self) -> (u32, i64) {
        (self.q_z, self.e_z)
    }

    fn rows(&self) -> usize {
        self.a.rows
    }

    fn row(&self, i: usize) -> WideInt {
        let (cols, vals) = self.a.row(i);
        let x = self.x.mantissas();
        if self.q_z <= 127 {
            let mut acc = 0i128;
            for (&j, a) in cols.iter().zip(vals) {
                acc += a.to_i128().unwrap() * x[j].to_i128().unwrap();
            }
            return WideInt::from_i128(acc, self.q_z).expect("accumulator width");
        }
        let mut acc = Integer::new();
        let mut ai = Integer::new();
        let mut xi = Integer::new();
        for (&j, a) in cols.iter().zip(vals) {
            load(&mut ai, a);
            load(&mut xi, &x[j]);
            acc += &ai * &xi;
        }
        WideInt::from_integer(acc, self.q_z).expect("accumulator width")
    }
}

fn load(dst: &mut Integer, v: &WideInt) {
    match v.to_i128() {
        Some(s) => dst.assign(s),
        None => *dst = v.to_integer(),
    }
}

/// Exact `α A x + β y`: an [`Espmv`] row followed by an axpby row.
pub struct Egemv<'a> {
    spmv: Espmv<'a>,
    y: &'a BfpBlock,
    alpha: &'a BfpScalar,
    beta: &'a BfpScalar,
    plan: AxpbyPlan,
}

impl<'a> Egemv<'a> {
    pub fn new(
        a: &'a BfpMatrix,
        x: &'a BfpBlock,
        y: &'a BfpBlock,
        alpha: &'a BfpScalar,
        beta: &'a BfpScalar,
    ) -> Result<Self, BlasError> {
        let spmv = Espmv::new(a, x)?;
        if y.len() != a.rows {
            return Err(BlasError::Dimension(format!("gemv output {} vs y {}", a.rows, y.len())));
        }
        let plan = AxpbyPlan::new(alpha, spmv.template(), beta, (y.q(), y.exp()));
        Ok(Egemv { spmv, y, alpha, beta, plan })
    }
}

impl ExactKernel for Egemv<'_> {
    fn template(&self) -> (u32, i64) {
        (self.plan.q_z, self.plan.e_z)
    }

    fn rows(&self) -> usize {
        self.spmv.rows()
    }

    fn row(&self, i: usize) -> WideInt {
        let g = self.spmv.row(i);
        let a = self.alpha.mantissa().mul(&g);
        let b = self.beta.mantissa().mul(self.y.mantissa(i));
        self.plan.combine(a, b)
    }
}

/// Bit window of a [`qcomp`] call, indices relative to `e_z*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowState {
    pub mu_tmp: i64,
    pub lambda_tmp: i64,
    pub mu_star: i64,
    pub lambda_out: i64,
    pub overflow: bool,
    pub underflow: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelReport {
    pub window: WindowState,
    pub recomputed: bool,
    /// Entries clamped by [`nnqcomp`]; always 0 for [`qcomp`].
    pub saturated: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QcompOptions {
    /// Take the recompute path even if the window was adequate.
    pub force_recompute: bool,
}

fn gamma_top(gamma: &BfpScalar, e_z: i64) -> Result<i64, BlasError> {
    if !gamma.is_positive() {
        return Err(BlasError::InvalidGamma);
    }
    Ok(i64::from(gamma.mantissa().msb()) + gamma.exp() - e_z)
}

/// Quantized computation with a normalized, exact-to-`w_out`-bits result.
pub fn qcomp<K: ExactKernel + ?Sized>(
    kernel: &K,
    w_out: u32,
    w_tmp: u32,
    gamma: &BfpScalar,
    opts: QcompOptions,
) -> Result<(BfpBlock, KernelReport), BlasError> {
    if w_out == 0 || w_out > w_tmp {
        return Err(BlasError::InvalidWindow { w_out, w_tmp });
    }
    let (_, e_z) = kernel.template();
    let n = kernel.rows();
    let mu_tmp = gamma_top(gamma, e_z)?;
    let lambda_tmp = mu_tmp - i64::from(w_tmp);

    let mut mu_star = 1i64;
    let mut tmp = Vec::with_capacity(n);
    for i in 0..n {
        let z = kernel.row(i);
        mu_star = mu_star.max(i64::from(z.msb()));
        tmp.push(z.shift_right_signed(lambda_tmp).cast(w_tmp));
    }

    let lambda_out = mu_star - i64::from(w_out);
    let overflow = mu_tmp < mu_star;
    let underflow = lambda_out < lambda_tmp;
    let recomputed = overflow || underflow || opts.force_recompute;
    let mantissas: Vec<WideInt> = if recomputed {
        (0..n).map(|i| kernel.row(i).shift_right_signed(lambda_out).cast(w_out)).collect()
    } else {
        let shift = lambda_out - lambda_tmp;
        tmp.iter().map(|t| t.shift_right_signed(shift).cast(w_out)).collect()
    };
    let block = BfpBlock::from_parts_unchecked(w_out, e_z + lambda_out, Layout::Vector(n), mantissas);
    let window = WindowState { mu_tmp, lambda_tmp, mu_star, lambda_out, overflow, underflow };
    Ok((block, KernelReport { window, recomputed, saturated: 0 }))
}

/// Single-pass quantized computation with the window fixed by `γ`.
/// Entries that do not fit are saturated; the result may be unnormalized.
pub fn nnqcomp<K: ExactKernel + ?Sized>(
    kernel: &K,
    w_out: u32,
    gamma: &BfpScalar,
) -> Result<(BfpBlock, KernelReport), BlasError> {
    if w_out == 0 {
        return Err(BlasError::InvalidWindow { w_out, w_tmp: w_out });
    }
    let (_, e_z) = kernel.template();
    let n = kernel.rows();
    let mu_out = gamma_top(gamma, e_z)?;
    let lambda_out = mu_out - i64::from(w_out);
    let mut mu_star = 1i64;
    let mut saturated = 0;
    let mut mantissas = Vec::with_capacity(n);
    for i in 0..n {
        let z = kernel.row(i);
        mu_star = mu_star.max(i64::from(z.msb()));
        let shifted = z.shift_right_signed(lambda_out);
        if shifted.msb() > w_out {
            saturated += 1;
        }
        mantissas.push(shifted.saturate(w_out).cast(w_out));
    }
    let block = BfpBlock::from_parts_unchecked(w_out, e_z + lambda_out, Layout::Vector(n), mantissas);
    let window = WindowState {
        mu_tmp: mu_out,
        lambda_tmp: lambda_out,
        mu_star,
        lambda_out,
        overflow: mu_star > mu_out,
        underflow: false,
    };
    Ok((block, KernelReport { window, recomputed: false, saturated }))
}

pub type KernelOutput = Result<(BfpBlock, KernelReport), BlasError>;

pub fn qaxpby(
    x: &BfpBlock,
    y: &BfpBlock,
    alpha: &BfpScalar,
    beta: &BfpScalar,
    w_out: u32,
    w_tmp: u32,
    gamma: &BfpScalar,
) -> KernelOutput {
    qcomp(&Eaxpby::new(x, y, alpha, beta)?, w_out, w_tmp, gamma, QcompOptions::default())
}

/// `x - y`.
pub fn qsub(x: &BfpBlock, y: &BfpBlock, w_out: u32, w_tmp: u32, gamma: &BfpScalar) -> KernelOutput {
    qaxpby(x, y, &BfpScalar::one(), &BfpScalar::minus_one(), w_out, w_tmp, gamma)
}

pub fn qspmv(a: &BfpMatrix, x: &BfpBlock, w_out: u32, w_tmp: u32, gamma: &BfpScalar) -> KernelOutput {
    qcomp(&Espmv::new(a, x)?, w_out, w_tmp, gamma, QcompOptions::default())
}

/// `α A x + β y`.
#[allow(clippy::too_many_arguments)]
pub fn qgemv(
    a: &BfpMatrix,
    x: &BfpBlock,
    y: &BfpBlock,
    alpha: &BfpScalar,
    beta: &BfpScalar,
    w_out: u32,
    w_tmp: u32,
    gamma: &BfpScalar,
) -> KernelOutput {
    qcomp(&Egemv::new(a, x, y, alpha, beta)?, w_out, w_tmp, gamma, QcompOptions::default())
}

pub fn nnqaxpby(
    x: &BfpBlock,
    y: &BfpBlock,
    alpha: &BfpScalar,
    beta: &BfpScalar,
    w_out: u32,
    gamma: &BfpScalar,
) -> KernelOutput {
    nnqcomp(&Eaxpby::new(x, y, alpha, beta)?, w_out, gamma)
}

pub fn nnqsub(x: &BfpBlock, y: &BfpBlock, w_out: u32, gamma: &BfpScalar) -> KernelOutput {
    nnqaxpby(x, y, &BfpScalar::one(), &BfpScalar::minus_one(), w_out, gamma)
}

pub fn nnqspmv(a: &BfpMatrix, x: &BfpBlock, w_out: u32, gamma: &BfpScalar) -> KernelOutput {
    nnqcomp(&Espmv::new(a, x)?, w_out, gamma)
}

pub fn nnqgemv(
    a: &BfpMatrix,
    x: &BfpBlock,
    y: &BfpBlock,
    alpha: &BfpScalar,
    beta: &BfpScalar,
    w_out: u32,
    gamma: &BfpScalar,
) -> KernelOutput {
    nnqcomp(&Egemv::new(a, x, y, alpha, beta)?, w_out, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::Rational;

    /// Kernel returning fixed rows at a fixed exponent.
    struct Rows {
        q: u32,
        e: i64,
        rows: Vec<WideInt>,
    }

    impl Rows {
        fn new(e: i64, values: &[i128]) -> Rows {
            let q = values.iter().map(|&v| WideInt::fit_i128(v).width()).max().unwrap() + 1;
            Rows { q, e, rows: values.iter().map(|&v| WideInt::from_i128(v, q).unwrap()).collect() }
        }
    }

    impl ExactKernel for Rows {
        fn template(&self) -> (u32, i64) {
            (self.q, self.e)
        }
        fn rows(&self) -> usize {
            self.rows.len()
        }
        fn row(&self, i: usize) -> WideInt {
            self.rows[i].clone()
        }
    }

    fn gamma(v: i128) -> BfpScalar {
        BfpScalar::round_up(Integer::from(v), 0, 16)
    }

    fn ints(b: &BfpBlock) -> Vec<i128> {
        b.mantissas().iter().map(|m| m.to_i128().unwrap()).collect()
    }

    #[test]
    fn qcomp_fast_path_trace() {
        let k = Rows::new(0, &[23, -5]);
        let (out, rep) = qcomp(&k, 4, 5, &gamma(23), QcompOptions::default()).unwrap();
        let w = rep.window;
        assert_eq!((w.mu_tmp, w.lambda_tmp, w.mu_star, w.lambda_out), (6, 1, 6, 2));
        assert!(!w.overflow && !w.underflow && !rep.recomputed);
        assert_eq!((ints(&out), out.exp()), (vec![5, -2], 2));
    }

    #[test]
    fn qcomp_overflow_recomputes() {
        let k = Rows::new(0, &[23, -5]);
        let (out, rep) = qcomp(&k, 4, 5, &gamma(8), QcompOptions::default()).unwrap();
        // msb(8) = 5 under the minimal-width convention.
        assert_eq!(rep.window.mu_tmp, 5);
        assert!(rep.window.overflow && rep.recomputed);
        assert_eq!((ints(&out), out.exp()), (vec![5, -2], 2));
    }

    #[test]
    fn qcomp_underflow_recomputes() {
        let k = Rows::new(0, &[23, -5]);
        let (out, rep) = qcomp(&k, 4, 5, &gamma(184), QcompOptions::default()).unwrap();
        assert_eq!((rep.window.mu_tmp, rep.window.lambda_tmp, rep.window.lambda_out), (9, 4, 2));
        assert!(rep.window.underflow && !rep.window.overflow && rep.recomputed);
        assert_eq!((ints(&out), out.exp()), (vec![5, -2], 2));
    }

    #[test]
    fn qcomp_zero_rows_keep_initial_mu() {
        let k = Rows::new(3, &[0, 0]);
        let (out, rep) = qcomp(&k, 4, 6, &gamma(1), QcompOptions::default()).unwrap();
        assert_eq!(rep.window.mu_star, 1);
        assert!(out.is_zero());
        assert_eq!(out.exp(), 3 + 1 - 4);
    }

    #[test]
    fn qcomp_rejects_bad_arguments() {
        let k = Rows::new(0, &[1]);
        assert!(matches!(qcomp(&k, 5, 4, &gamma(1), QcompOptions::default()), Err(BlasError::InvalidWindow { .. })));
        let neg = BfpScalar::from_i128(-1, 0, 2).unwrap();
        assert!(matches!(qcomp(&k, 4, 4, &neg, QcompOptions::default()), Err(BlasError::InvalidGamma)));
        assert!(matches!(nnqcomp(&k, 4, &neg), Err(BlasError::InvalidGamma)));
    }

    #[test]
    fn nnqcomp_examples() {
        let k = Rows::new(0, &[23, -5]);
        let (out, _) = nnqcomp(&k, 4, &gamma(23)).unwrap();
        assert_eq!((ints(&out), out.exp()), (vec![5, -2], 2));

        let k = Rows::new(0, &[23]);
        let (out, rep) = nnqcomp(&k, 4, &gamma(15)).unwrap();
        assert_eq!((ints(&out), out.exp(), rep.saturated), (vec![7], 1, 1));

        let k = Rows::new(0, &[3]);
        let (out, rep) = nnqcomp(&k, 4, &gamma(100)).unwrap();
        assert_eq!(rep.window.lambda_out, 4);
        assert_eq!((ints(&out), out.exp(), rep.saturated), (vec![0], 4, 0));
    }

    #[test]
    fn axpby_setup_widths() {
        let x = BfpBlock::from_i128s(8, 0, &[1]).unwrap();
        let a = BfpScalar::from_i128(1, 0, 4).unwrap();
        let plan = Eaxpby::new(&x, &x, &a, &a).unwrap().plan();
        assert_eq!((plan.q_z, plan.d), (13, 0));

        let y = BfpBlock::from_i128s(8, 3, &[1]).unwrap();
        let plan = Eaxpby::new(&x, &y, &a, &a).unwrap().plan();
        assert_eq!((plan.d, plan.q_z, plan.e_z), (-3, 16, 0));
    }

    #[test]
    fn axpby_row_example() {
        let x = BfpBlock::from_i128s(4, 0, &[5]).unwrap();
        let y = BfpBlock::from_i128s(4, 1, &[-1]).unwrap();
        let a = BfpScalar::from_i128(2, 0, 3).unwrap();
        let b = BfpScalar::from_i128(3, 0, 3).unwrap();
        let k = Eaxpby::new(&x, &y, &a, &b).unwrap();
        let (_, e) = k.template();
        assert_eq!(Rational::from(k.row(0).to_integer()) << e as i32, 4);
    }

    #[test]
    fn spmv_setup_width() {
        let vals = BfpBlock::new(4, 0, Layout::Matrix { rows: 1, cols: 3 }, vec![WideInt::zero(4); 3]).unwrap();
        let a = BfpMatrix::new(1, 3, vec![0, 3], vec![0, 1, 2], vals).unwrap();
        let x = BfpBlock::zeros(3, 4);
        assert_eq!(Espmv::new(&a, &x).unwrap().template().0, 10);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(256), 8);
        assert!(matches!(a.clone().with_row_bound(2), Err(BlasError::RowBound { .. })));
        assert_eq!(a.with_row_bound(256).unwrap().row_bound(), 256);
    }

    #[test]
    fn stencil_annihilates_constants() {
        let vals = BfpBlock::from_i128s(3, 0, &[1, -2, 1]).unwrap();
        let vals = BfpBlock::new(3, 0, Layout::Matrix { rows: 1, cols: 3 }, vals.mantissas().to_vec()).unwrap();
        let a = BfpMatrix::new(1, 3, vec![0, 3], vec![0, 1, 2], vals).unwrap();
        let x = BfpBlock::from_i128s(8, -2, &[77, 77, 77]).unwrap();
        assert!(Espmv::new(&a, &x).unwrap().row(0).is_zero());
    }

    #[test]
    fn qsub_of_equal_vectors_is_zero() {
        let x = BfpBlock::from_i128s(8, -1, &[100, -3, 7]).unwrap();
        let (z, _) = qsub(&x, &x, 8, 8, &gamma(1)).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn identity_spmv_normalizes() {
        let vals = BfpBlock::new(2, 0, Layout::Matrix { rows: 3, cols: 3 }, vec![WideInt::from_i128(1, 2).unwrap(); 3])
            .unwrap();
        let id = BfpMatrix::new(3, 3, vec![0, 1, 2, 3], vec![0, 1, 2], vals).unwrap();
        let x = BfpBlock::from_i128s(8, 0, &[12, -4, 1]).unwrap();
        let g = x.inf_norm_upper(16);
        let (z, _) = qspmv(&id, &x, 8, 8, &g).unwrap();
        assert_eq!(z, x.normalize());
    }
}
