//! Block floating point: integer mantissas of one width sharing a single
//! power-of-two exponent.
//!
//! A block `<q, e, m, d>` represents the values `2^e * m_i`. The block is
//! normalized when `e` is minimal for its width, i.e. the largest entry uses
//! all `q` bits. All quantization truncates toward negative infinity.

use std::fmt;
use std::fmt::Write as _;

use rug::{Float, Integer, Rational};
use thiserror::Error;

use crate::wideint::{WideInt, WideIntError};

/// Default width of the `γ` scalars that bound infinity norms.
pub const GAMMA_WIDTH: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BfpError {
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("mantissa width must be positive")]
    ZeroWidth,
    #[error(transparent)]
    Mantissa(#[from] WideIntError),
    #[error("malformed block dump: {0}")]
    Parse(String),
}

/// Shape of a block. Matrices store only their structural nonzeros, so the
/// number of mantissas of a matrix block can be smaller than `rows * cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Scalar,
    Vector(usize),
    Matrix { rows: usize, cols: usize },
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layout::Scalar => write!(f, "s"),
            Layout::Vector(n) => write!(f, "{n}"),
            Layout::Matrix { rows, cols } => write!(f, "{rows}x{cols}"),
        }
    }
}

impl std::str::FromStr for Layout {
    type Err = BfpError;

    fn from_str(s: &str) -> Result<Layout, BfpError> {
        let bad = || BfpError::Parse(format!("layout {s:?}"));
        if s == "s" {
            return Ok(Layout::Scalar);
        }
        if let Some((r, c)) = s.split_once('x') {
            return Ok(Layout::Matrix { rows: r.parse().map_err(|_| bad())?, cols: c.parse().map_err(|_| bad())? });
        }
        s.parse().map(Layout::Vector).map_err(|_| bad())
    }
}

/// `2^-(q-1)`, the precision of a `q`-bit block.
pub fn epsilon(q: u32) -> Rational {
    assert!(q >= 1);
    Rational::from((Integer::from(1), Integer::from(1) << (q - 1)))
}

#[derive(Clone, PartialEq, Eq)]
pub struct BfpBlock {
    q: u32,
    exp: i64,
    layout: Layout,
    mantissas: Vec<WideInt>,
}

impl BfpBlock {
    /// Builds a block, casting every mantissa to width `q`. Fails if an entry
    /// is not representable in `q` bits.
    pub fn new(q: u32, exp: i64, layout: Layout, mantissas: Vec<WideInt>) -> Result<BfpBlock, BfpError> {
        if q == 0 {
            return Err(BfpError::ZeroWidth);
        }
        match layout {
            Layout::Scalar if mantissas.len() != 1 => {
                return Err(BfpError::LayoutMismatch(format!("scalar with {} entries", mantissas.len())))
            }
            Layout::Vector(n) if n != mantissas.len() => {
                return Err(BfpError::LayoutMismatch(format!("vector({n}) with {} entries", mantissas.len())))
            }
            Layout::Matrix { rows, cols } if mantissas.len() > rows * cols => {
                return Err(BfpError::LayoutMismatch(format!("{rows}x{cols} matrix with {} entries", mantissas.len())))
            }
            _ => {}
        }
        let mantissas = mantissas
            .into_iter()
            .map(|m| {
                if m.msb() > q {
                    Err(WideIntError::OutOfRange { value: m.to_string(), width: q })
                } else {
                    Ok(m.cast(q))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BfpBlock { q, exp, layout, mantissas })
    }

    pub(crate) fn from_parts_unchecked(q: u32, exp: i64, layout: Layout, mantissas: Vec<WideInt>) -> BfpBlock {
        debug_assert!(mantissas.iter().all(|m| m.width() == q));
        BfpBlock { q, exp, layout, mantissas }
    }

    pub fn vector(q: u32, exp: i64, mantissas: Vec<WideInt>) -> Result<BfpBlock, BfpError> {
        let n = mantissas.len();
        BfpBlock::new(q, exp, Layout::Vector(n), mantissas)
    }

    pub fn from_i128s(q: u32, exp: i64, values: &[i128]) -> Result<BfpBlock, BfpError> {
        let mantissas = values.iter().map(|&v| WideInt::from_i128(v, q)).collect::<Result<Vec<_>, _>>()?;
        BfpBlock::vector(q, exp, mantissas)
    }

    pub fn zeros(n: usize, q: u32) -> BfpBlock {
        BfpBlock { q, exp: 0, layout: Layout::Vector(n), mantissas: vec![WideInt::zero(q); n] }
    }

    /// Unit vector `e_k` of length `n`, normalized at width `q >= 2`.
    pub fn unit(n: usize, k: usize, q: u32) -> BfpBlock {
        assert!(q >= 2 && k < n);
        let mut block = BfpBlock::zeros(n, q);
        block.mantissas[k] = WideInt::from_i128(1, 2).unwrap().incr(q - 2).shl(q - 2).unwrap();
        block.exp = -(i64::from(q) - 2);
        block
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn exp(&self) -> i64 {
        self.exp
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.mantissas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mantissas.is_empty()
    }

    pub fn mantissas(&self) -> &[WideInt] {
        &self.mantissas
    }

    pub fn mantissa(&self, i: usize) -> &WideInt {
        &self.mantissas[i]
    }

    pub fn is_zero(&self) -> bool {
        self.mantissas.iter().all(WideInt::is_zero)
    }

    /// Largest `msb` over all entries (1 for an all-zero block).
    pub fn max_msb(&self) -> u32 {
        self.mantissas.iter().map(WideInt::msb).max().unwrap_or(1)
    }

    pub fn is_normalized(&self) -> bool {
        if self.is_zero() {
            self.exp == 0
        } else {
            self.max_msb() == self.q
        }
    }

    /// Value-preserving normalization; a zero block gets exponent 0.
    pub fn normalize(&self) -> BfpBlock {
        self.quantize(self.q)
    }

    /// Normalized block of width `w` whose entries are the exact entries
    /// truncated toward negative infinity at the new granularity.
    pub fn quantize(&self, w: u32) -> BfpBlock {
        assert!(w >= 1, "quantize to zero bits");
        if self.is_zero() {
            return BfpBlock { q: w, exp: 0, layout: self.layout, mantissas: vec![WideInt::zero(w); self.len()] };
        }
        let shift = i64::from(self.max_msb()) - i64::from(w);
        let mantissas = self.mantissas.iter().map(|m| m.shift_right_signed(shift).cast(w)).collect();
        BfpBlock { q: w, exp: self.exp + shift, layout: self.layout, mantissas }
    }

    /// Positive scalar `γ >= max_i |x_i|`, rounded up to `q_gamma` bits.
    /// For a zero block this is `2^e`, the block's granularity.
    pub fn inf_norm_upper(&self, q_gamma: u32) -> BfpScalar {
        let max_abs = self.mantissas.iter().map(|m| m.abs()).max_by(|a, b| a.cmp_value(b));
        match max_abs {
            Some(m) if !m.is_zero() => BfpScalar::round_up(m.to_integer(), self.exp, q_gamma),
            _ => BfpScalar::power_of_two(self.exp, q_gamma),
        }
    }

    pub fn to_rationals(&self) -> Vec<Rational> {
        self.mantissas.iter().map(|m| scaled_rational(m.to_integer(), self.exp)).collect()
    }

    /// Entries as floats of precision `prec`; exact whenever `prec >= q`.
    pub fn to_floats(&self, prec: u32) -> Vec<Float> {
        self.mantissas.iter().map(|m| scaled_float(&m.to_integer(), self.exp, prec)).collect()
    }

    pub fn to_f64s(&self) -> Vec<f64> {
        self.to_floats(64).iter().map(Float::to_f64).collect()
    }

    /// Quantizes exact float values to a normalized `w`-bit block.
    pub fn from_floats(values: &[Float], w: u32, layout: Layout) -> BfpBlock {
        assert!(w >= 1);
        let exact: Vec<Option<(Integer, i64)>> = values
            .iter()
            .map(|v| {
                if v.is_zero() {
                    None
                } else {
                    let (m, e) = v.to_integer_exp().expect("non-finite value in block");
                    Some((m, i64::from(e)))
                }
            })
            .collect();
        let top = exact.iter().flatten().map(|(m, e)| e + i64::from(m.signed_bits())).max();
        let Some(top) = top else {
            return BfpBlock { q: w, exp: 0, layout, mantissas: vec![WideInt::zero(w); values.len()] };
        };
        let exp = top - i64::from(w);
        let mantissas = exact
            .into_iter()
            .map(|entry| match entry {
                None => WideInt::zero(w),
                Some((m, e)) => WideInt::fit(m).shift_right_signed(exp - e).cast(w),
            })
            .collect();
        BfpBlock { q: w, exp, layout, mantissas }
    }

    pub fn from_float_vector(values: &[Float], w: u32) -> BfpBlock {
        BfpBlock::from_floats(values, w, Layout::Vector(values.len()))
    }

    /// Fixture format: a `q e d` header followed by one decimal mantissa per line.
    pub fn dump(&self) -> String {
        let mut out = format!("{} {} {}\n", self.q, self.exp, self.layout);
        for m in &self.mantissas {
            let _ = writeln!(out, "{m}");
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<BfpBlock, BfpError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| BfpError::Parse("empty dump".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [q, e, d] = fields[..] else {
            return Err(BfpError::Parse(format!("header {header:?}")));
        };
        let q: u32 = q.parse().map_err(|_| BfpError::Parse(format!("width {q:?}")))?;
        let exp: i64 = e.parse().map_err(|_| BfpError::Parse(format!("exponent {e:?}")))?;
        let layout: Layout = d.parse()?;
        let mantissas = lines
            .map(|l| {
                let v = Integer::from_str_radix(l.trim(), 10).map_err(|_| BfpError::Parse(format!("mantissa {l:?}")))?;
                Ok(WideInt::from_integer(v, q)?)
            })
            .collect::<Result<Vec<_>, BfpError>>()?;
        BfpBlock::new(q, exp, layout, mantissas)
    }
}

impl fmt::Debug for BfpBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<q={}, e={}, d={}, m=[", self.q, self.exp, self.layout)?;
        for (i, m) in self.mantissas.iter().take(8).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{m}")?;
        }
        if self.mantissas.len() > 8 {
            write!(f, ", ...")?;
        }
        write!(f, "]>")
    }
}

pub(crate) fn scaled_rational(m: Integer, exp: i64) -> Rational {
    let exp = i32::try_from(exp).expect("exponent out of rational range");
    Rational::from(m) << exp
}

pub(crate) fn scaled_float(m: &Integer, exp: i64, prec: u32) -> Float {
    let exp = i32::try_from(exp).expect("exponent out of float range");
    Float::with_val(prec, m) << exp
}

/// A block with a single entry, e.g. `γ`, `α`, `β`.
#[derive(Clone, PartialEq, Eq)]
pub struct BfpScalar {
    q: u32,
    exp: i64,
    mantissa: WideInt,
}

impl BfpScalar {
    pub fn new(mantissa: WideInt, exp: i64) -> BfpScalar {
        BfpScalar { q: mantissa.width(), exp, mantissa }
    }

    pub fn from_i128(m: i128, exp: i64, q: u32) -> Result<BfpScalar, BfpError> {
        Ok(BfpScalar { q, exp, mantissa: WideInt::from_i128(m, q)? })
    }

    /// Normalized `+1` (two bits).
    pub fn one() -> BfpScalar {
        BfpScalar { q: 2, exp: 0, mantissa: WideInt::from_i128(1, 2).unwrap() }
    }

    /// Normalized `-1` (two bits).
    pub fn minus_one() -> BfpScalar {
        BfpScalar { q: 2, exp: -1, mantissa: WideInt::from_i128(-2, 2).unwrap() }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn exp(&self) -> i64 {
        self.exp
    }

    pub fn mantissa(&self) -> &WideInt {
        &self.mantissa
    }

    pub fn is_positive(&self) -> bool {
        self.mantissa.signum() > 0
    }

    pub fn is_normalized(&self) -> bool {
        self.as_block().is_normalized()
    }

    pub fn normalize(&self) -> BfpScalar {
        BfpScalar::from_block(&self.as_block().normalize())
    }

    pub fn as_block(&self) -> BfpBlock {
        BfpBlock { q: self.q, exp: self.exp, layout: Layout::Scalar, mantissas: vec![self.mantissa.clone()] }
    }

    fn from_block(b: &BfpBlock) -> BfpScalar {
        BfpScalar { q: b.q, exp: b.exp, mantissa: b.mantissas[0].clone() }
    }

    pub fn to_rational(&self) -> Rational {
        scaled_rational(self.mantissa.to_integer(), self.exp)
    }

    pub fn to_float(&self, prec: u32) -> Float {
        scaled_float(&self.mantissa.to_integer(), self.exp, prec)
    }

    pub fn to_f64(&self) -> f64 {
        self.to_float(64).to_f64()
    }

    /// `2^exp` as a normalized positive scalar of width `q >= 2`.
    pub fn power_of_two(exp: i64, q: u32) -> BfpScalar {
        assert!(q >= 2);
        let m = WideInt::from_i128(1, 2).unwrap().incr(q - 2).shl(q - 2).unwrap();
        BfpScalar { q, exp: exp - (i64::from(q) - 2), mantissa: m }
    }

    /// Smallest normalized `q`-bit scalar `>= m * 2^exp` for `m > 0`.
    pub fn round_up(m: Integer, exp: i64, q: u32) -> BfpScalar {
        assert!(q >= 2, "γ needs at least two bits");
        assert!(m > 0, "round_up of a non-positive value");
        let bits = m.significant_bits();
        let room = q - 1;
        if bits <= room {
            let shift = room - bits;
            let m = WideInt::from_integer(m << shift, q).unwrap();
            return BfpScalar { q, exp: exp - i64::from(shift), mantissa: m };
        }
        let shift = bits - room;
        let (mut quot, rem) = m.div_rem_floor(Integer::from(1) << shift);
        if rem != 0 {
            quot += 1;
        }
        let mut exp = exp + i64::from(shift);
        if quot.significant_bits() > room {
            quot >>= 1;
            exp += 1;
        }
        BfpScalar { q, exp, mantissa: WideInt::from_integer(quot, q).unwrap() }
    }

    /// Upper bound of a positive float, `q` bits.
    pub fn from_float_upper(v: &Float, q: u32) -> BfpScalar {
        let (m, e) = v.to_integer_exp().expect("non-finite scalar");
        BfpScalar::round_up(m, i64::from(e), q)
    }

    /// Floor quantization of a float to a normalized `q`-bit scalar.
    pub fn from_float(v: &Float, q: u32) -> BfpScalar {
        BfpScalar::from_block(&BfpBlock::from_floats(std::slice::from_ref(v), q, Layout::Scalar))
    }

    /// Upper bound of `self * other` for positive scalars.
    pub fn mul_upper(&self, other: &BfpScalar, q: u32) -> BfpScalar {
        let m = self.mantissa.to_integer() * other.mantissa.to_integer();
        BfpScalar::round_up(m, self.exp + other.exp, q)
    }

    /// Upper bound of `self + other` for positive scalars.
    pub fn add_upper(&self, other: &BfpScalar, q: u32) -> BfpScalar {
        let e = self.exp.min(other.exp);
        let a = self.mantissa.to_integer() << u32::try_from(self.exp - e).expect("exponent gap");
        let b = other.mantissa.to_integer() << u32::try_from(other.exp - e).expect("exponent gap");
        BfpScalar::round_up(a + b, e, q)
    }
}

impl fmt::Debug for BfpScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<q={}, e={}, m={}>", self.q, self.exp, self.mantissa)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(q: u32, e: i64, m: &[i128]) -> BfpBlock {
        BfpBlock::from_i128s(q, e, m).unwrap()
    }

    fn ints(b: &BfpBlock) -> Vec<i128> {
        b.mantissas().iter().map(|m| m.to_i128().unwrap()).collect()
    }

    #[test]
    fn normalize_examples() {
        let n = block(8, 0, &[12, -4]).normalize();
        assert_eq!((ints(&n), n.exp(), n.q()), (vec![96, -32], -3, 8));
        assert_eq!(n.normalize(), n);
        let z = block(8, 5, &[0, 0]).normalize();
        assert_eq!((ints(&z), z.exp()), (vec![0, 0], 0));
        assert!(z.is_normalized());
    }

    #[test]
    fn quantize_examples() {
        let x = block(8, 0, &[23, -5]);
        let r = x.quantize(4);
        assert_eq!((ints(&r), r.exp(), r.q()), (vec![5, -2], 2, 4));
        let n = x.normalize();
        assert_eq!(n.quantize(8), n);
        let z = BfpBlock::zeros(3, 8).quantize(4);
        assert!(z.is_zero() && z.exp() == 0 && z.q() == 4);
    }

    #[test]
    fn inf_norm_examples() {
        let x = block(8, 0, &[23, -5]);
        assert_eq!(x.inf_norm_upper(16).to_rational(), 23);
        assert_eq!(x.inf_norm_upper(3).to_rational(), 24);
        assert_eq!(block(8, 1, &[-8]).inf_norm_upper(16).to_rational(), 16);
        let g = BfpBlock::zeros(2, 8).inf_norm_upper(16);
        assert!(g.is_positive() && g.is_normalized());
        assert_eq!(g.to_rational(), 1);
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon(1), 1);
        assert_eq!(epsilon(5), Rational::from((1, 16)));
        assert_eq!(epsilon(53), Rational::from((Integer::from(1), Integer::from(1) << 52u32)));
    }

    #[test]
    fn conversions() {
        let x = block(4, -2, &[3]);
        assert_eq!(x.to_rationals()[0], Rational::from((3, 4)));
        let vals = [Float::with_val(64, 1.0), Float::with_val(64, -0.5)];
        let b = BfpBlock::from_float_vector(&vals, 3);
        assert_eq!((ints(&b), b.exp()), (vec![2, -1], -1));
        let n = block(8, -3, &[100, -77, 3]).normalize();
        assert_eq!(BfpBlock::from_float_vector(&n.to_floats(64), n.q()), n);
    }

    #[test]
    fn dump_round_trip() {
        let x = block(8, -3, &[96, -32, 0]);
        let text = x.dump();
        assert_eq!(text, "8 -3 3\n96\n-32\n0\n");
        assert_eq!(BfpBlock::parse_dump(&text).unwrap(), x);
        let s = BfpScalar::minus_one().as_block();
        assert_eq!(BfpBlock::parse_dump(&s.dump()).unwrap(), s);
        assert!(BfpBlock::parse_dump("4 0 2\n8\n1\n").is_err());
    }

    #[test]
    fn scalar_constants() {
        assert_eq!(BfpScalar::one().to_rational(), 1);
        assert_eq!(BfpScalar::minus_one().to_rational(), -1);
        assert!(BfpScalar::one().is_normalized() && BfpScalar::minus_one().is_normalized());
        let a = BfpScalar::round_up(Integer::from(23), 0, 3);
        let b = BfpScalar::round_up(Integer::from(5), -1, 16);
        assert_eq!(a.mul_upper(&b, 16).to_rational(), 60);
        assert_eq!(a.add_upper(&b, 16).to_rational(), Rational::from((53, 2)));
        let up = BfpScalar::from_float_upper(&Float::with_val(64, 0.3), 8);
        assert!(up.to_rational() >= Rational::from((3, 10)));
    }

    fn arb_block() -> impl Strategy<Value = BfpBlock> {
        (2u32..40, -20i64..20, prop::collection::vec(any::<i64>(), 1..12)).prop_map(|(q, e, raw)| {
            let half = 1i128 << (q - 1);
            let m: Vec<i128> = raw.iter().map(|&v| (v as i128).rem_euclid(2 * half) - half).collect();
            block(q, e, &m)
        })
    }

    proptest! {
        #[test]
        fn quantize_truncates_toward_minus_infinity(x in arb_block(), w in 2u32..40) {
            let r = x.quantize(w);
            prop_assert!(r.is_normalized());
            let step = scaled_rational(Integer::from(1), r.exp());
            for (exact, got) in x.to_rationals().iter().zip(r.to_rationals()) {
                prop_assert!(&got <= exact);
                prop_assert!(*exact < Rational::from(&got + &step));
            }
        }

        #[test]
        fn normalize_preserves_values(x in arb_block()) {
            let n = x.normalize();
            prop_assert_eq!(n.to_rationals(), x.to_rationals());
            prop_assert!(n.is_normalized());
            prop_assert_eq!(n.normalize(), n);
        }

        #[test]
        fn inf_norm_is_an_upper_bound(x in arb_block(), q in 2u32..24) {
            let g = x.inf_norm_upper(q).to_rational();
            for v in x.to_rationals() {
                prop_assert!(Rational::from(v.abs_ref()) <= g);
            }
        }

        #[test]
        fn entries_lie_in_block_range(x in arb_block()) {
            let lo = scaled_rational(-(Integer::from(1) << (x.q() - 1)), x.exp());
            let hi = scaled_rational((Integer::from(1) << (x.q() - 1)) - 1, x.exp());
            for v in x.to_rationals() {
                prop_assert!(lo <= v && v <= hi);
            }
        }
    }
}
