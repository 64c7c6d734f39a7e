//! Two's-complement integers of explicit, arbitrary bit width.
//!
//! A [`WideInt`] carries its value together with a width `w`; the value always
//! lies in `T_w = [-2^(w-1), 2^(w-1) - 1]`. Arithmetic never overflows: the
//! result width of `add`/`sub` is `max(w_a, w_b) + 1` and of `mul` is
//! `w_a + w_b`. Narrowing is explicit through [`WideInt::decr`] (drop leading
//! bits) and right shifts, which always round toward negative infinity.
//!
//! Values that fit into an `i128` are kept inline; wider values spill to a GMP
//! integer. The split is invisible to callers.

use std::cmp::Ordering;
use std::fmt;

use rug::Integer;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WideIntError {
    #[error("width must be positive")]
    ZeroWidth,
    #[error("value {value} is not representable in {width} bits")]
    OutOfRange { value: String, width: u32 },
    #[error("left shift by {shift} overflows width {width}")]
    ShiftOverflow { shift: u32, width: u32 },
    #[error("cannot drop {bits} bits from a {width}-bit integer")]
    InvalidCast { bits: u32, width: u32 },
    #[error("malformed integer dump: {0}")]
    Parse(String),
}

/// The exact operation requested from [`exact_arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, PartialEq, Eq)]
enum Repr {
    Small(i128),
    Big(Integer),
}

impl Repr {
    fn from_integer(v: Integer) -> Repr {
        match v.to_i128() {
            Some(s) => Repr::Small(s),
            None => Repr::Big(v),
        }
    }

    fn to_integer(&self) -> Integer {
        match self {
            Repr::Small(v) => Integer::from(*v),
            Repr::Big(v) => v.clone(),
        }
    }

    fn signed_bits(&self) -> u32 {
        match self {
            Repr::Small(v) => small_signed_bits(*v),
            Repr::Big(v) => v.signed_bits(),
        }
    }

    fn signum(&self) -> i32 {
        match self {
            Repr::Small(v) => v.signum() as i32,
            Repr::Big(v) => match v.cmp0() {
                Ordering::Less => -1,
                Ordering::Equal => 0,
                Ordering::Greater => 1,
            },
        }
    }

    fn add(&self, other: &Repr) -> Repr {
        if let (Repr::Small(a), Repr::Small(b)) = (self, other) {
            if let Some(s) = a.checked_add(*b) {
                return Repr::Small(s);
            }
        }
        Repr::from_integer(self.to_integer() + other.to_integer())
    }

    fn sub(&self, other: &Repr) -> Repr {
        if let (Repr::Small(a), Repr::Small(b)) = (self, other) {
            if let Some(s) = a.checked_sub(*b) {
                return Repr::Small(s);
            }
        }
        Repr::from_integer(self.to_integer() - other.to_integer())
    }

    fn mul(&self, other: &Repr) -> Repr {
        if let (Repr::Small(a), Repr::Small(b)) = (self, other) {
            if let Some(s) = a.checked_mul(*b) {
                return Repr::Small(s);
            }
        }
        Repr::from_integer(self.to_integer() * other.to_integer())
    }

    fn shr(&self, s: u32) -> Repr {
        match self {
            Repr::Small(v) => Repr::Small(v >> s.min(127)),
            Repr::Big(v) => Repr::from_integer(Integer::from(v >> s)),
        }
    }

    fn shl(&self, s: u32) -> Repr {
        match self {
            Repr::Small(v) if self.signed_bits() + s <= 128 => Repr::Small(v << s),
            _ => Repr::from_integer(self.to_integer() << s),
        }
    }

    /// Keeps the `n` low bits and reinterprets them as an `n`-bit two's
    /// complement number.
    fn keep_signed_bits(&self, n: u32) -> Repr {
        if self.signed_bits() <= n {
            return self.clone();
        }
        match self {
            Repr::Small(v) => {
                let pad = 128 - n;
                Repr::Small((v << pad) >> pad)
            }
            Repr::Big(v) => Repr::from_integer(v.clone().keep_signed_bits(n)),
        }
    }

    fn cmp(&self, other: &Repr) -> Ordering {
        match (self, other) {
            (Repr::Small(a), Repr::Small(b)) => a.cmp(b),
            (Repr::Small(a), Repr::Big(b)) => b.partial_cmp(a).map_or(Ordering::Equal, Ordering::reverse),
            (Repr::Big(a), Repr::Small(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
            (Repr::Big(a), Repr::Big(b)) => a.cmp(b),
        }
    }
}

fn small_signed_bits(v: i128) -> u32 {
    let magnitude = if v < 0 { !v } else { v };
    129 - magnitude.leading_zeros()
}

/// Smallest and largest value of `T_width` as GMP integers.
fn range_bounds(width: u32) -> (Repr, Repr) {
    if width <= 127 {
        let hi = (1i128 << (width - 1)) - 1;
        (Repr::Small(-hi - 1), Repr::Small(hi))
    } else {
        let half = Integer::from(1) << (width - 1);
        let lo = Integer::from(-&half);
        (Repr::from_integer(lo), Repr::from_integer(half - 1u32))
    }
}

/// A two's-complement integer with an explicit bit width.
#[derive(Clone, PartialEq, Eq)]
pub struct WideInt {
    repr: Repr,
    width: u32,
}

impl WideInt {
    pub fn zero(width: u32) -> WideInt {
        assert!(width > 0, "zero-width integer");
        WideInt { repr: Repr::Small(0), width }
    }

    pub fn from_i128(value: i128, width: u32) -> Result<WideInt, WideIntError> {
        WideInt::from_repr(Repr::Small(value), width)
    }

    pub fn from_integer(value: Integer, width: u32) -> Result<WideInt, WideIntError> {
        WideInt::from_repr(Repr::from_integer(value), width)
    }

    /// Wraps `value` in the narrowest width that holds it.
    pub fn fit(value: Integer) -> WideInt {
        let repr = Repr::from_integer(value);
        let width = repr.signed_bits();
        WideInt { repr, width }
    }

    pub fn fit_i128(value: i128) -> WideInt {
        WideInt { width: small_signed_bits(value), repr: Repr::Small(value) }
    }

    fn from_repr(repr: Repr, width: u32) -> Result<WideInt, WideIntError> {
        if width == 0 {
            return Err(WideIntError::ZeroWidth);
        }
        if repr.signed_bits() > width {
            return Err(WideIntError::OutOfRange { value: repr.to_integer().to_string(), width });
        }
        Ok(WideInt { repr, width })
    }

    #[inline]
    fn with(repr: Repr, width: u32) -> WideInt {
        debug_assert!(repr.signed_bits() <= width, "value escaped T_{width}");
        WideInt { repr, width }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.repr, Repr::Small(0))
    }

    pub fn is_negative(&self) -> bool {
        self.signum() < 0
    }

    pub fn signum(&self) -> i32 {
        self.repr.signum()
    }

    pub fn to_i128(&self) -> Option<i128> {
        match self.repr {
            Repr::Small(v) => Some(v),
            Repr::Big(_) => None,
        }
    }

    pub fn to_integer(&self) -> Integer {
        self.repr.to_integer()
    }

    pub fn add(&self, other: &WideInt) -> WideInt {
        WideInt::with(self.repr.add(&other.repr), self.width.max(other.width) + 1)
    }

    pub fn sub(&self, other: &WideInt) -> WideInt {
        WideInt::with(self.repr.sub(&other.repr), self.width.max(other.width) + 1)
    }

    pub fn mul(&self, other: &WideInt) -> WideInt {
        WideInt::with(self.repr.mul(&other.repr), self.width + other.width)
    }

    /// Arithmetic right shift: `floor(self / 2^s)`, width unchanged.
    pub fn ashr(&self, s: u32) -> WideInt {
        if s == 0 {
            return self.clone();
        }
        WideInt::with(self.repr.shr(s), self.width)
    }

    /// Left shift within the current width. The caller is expected to have
    /// widened with [`WideInt::incr`] first.
    pub fn shl(&self, s: u32) -> Result<WideInt, WideIntError> {
        if s == 0 || self.is_zero() {
            return Ok(self.clone());
        }
        if self.repr.signed_bits() + s > self.width {
            return Err(WideIntError::ShiftOverflow { shift: s, width: self.width });
        }
        Ok(WideInt::with(self.repr.shl(s), self.width))
    }

    /// Sign-extends by `b` bits (cast to a wider type).
    pub fn incr(&self, b: u32) -> WideInt {
        WideInt { repr: self.repr.clone(), width: self.width + b }
    }

    /// Drops the `b` leftmost bits and reinterprets the remainder as a
    /// `width - b` bit two's-complement number (cast to a narrower type).
    pub fn decr(&self, b: u32) -> Result<WideInt, WideIntError> {
        if b >= self.width {
            return Err(WideIntError::InvalidCast { bits: b, width: self.width });
        }
        let width = self.width - b;
        Ok(WideInt::with(self.repr.keep_signed_bits(width), width))
    }

    /// Casts to `width` bits: sign extension when widening, [`decr`] when
    /// narrowing.
    ///
    /// [`decr`]: WideInt::decr
    pub fn cast(&self, width: u32) -> WideInt {
        assert!(width > 0, "zero-width cast");
        if width >= self.width {
            self.incr(width - self.width)
        } else {
            WideInt::with(self.repr.keep_signed_bits(width), width)
        }
    }

    /// Shifts by a signed amount: right (floor) for `s >= 0`, otherwise left
    /// after widening by `|s|` bits so no bits are lost.
    pub fn shift_right_signed(&self, s: i64) -> WideInt {
        if s >= 0 {
            let s = u32::try_from(s).unwrap_or(u32::MAX);
            self.ashr(s)
        } else {
            let l = u32::try_from(-s).expect("shift distance out of range");
            WideInt::with(self.repr.shl(l), self.width + l)
        }
    }

    /// Minimal two's-complement width holding the value; `msb(0) == 1`.
    pub fn msb(&self) -> u32 {
        self.repr.signed_bits()
    }

    /// `min(max(self, lo), hi)`, keeping the width of `self`.
    pub fn clamp(&self, lo: &WideInt, hi: &WideInt) -> WideInt {
        assert!(lo.repr.cmp(&hi.repr) != Ordering::Greater, "clamp with lo > hi");
        let repr = if self.repr.cmp(&lo.repr) == Ordering::Less {
            lo.repr.clone()
        } else if self.repr.cmp(&hi.repr) == Ordering::Greater {
            hi.repr.clone()
        } else {
            return self.clone();
        };
        let width = self.width.max(repr.signed_bits());
        WideInt::with(repr, width)
    }

    /// Clamps into `T_width`; the returned value keeps the width of `self`.
    pub fn saturate(&self, width: u32) -> WideInt {
        if self.msb() <= width {
            return self.clone();
        }
        let (lo, hi) = range_bounds(width);
        let repr = if self.signum() < 0 { lo } else { hi };
        WideInt::with(repr, self.width)
    }

    pub fn cmp_value(&self, other: &WideInt) -> Ordering {
        self.repr.cmp(&other.repr)
    }

    pub fn abs(&self) -> WideInt {
        if self.signum() >= 0 {
            self.clone()
        } else {
            WideInt::with(Repr::Small(0).sub(&self.repr), self.width + 1)
        }
    }

    /// `decimal width 0x<hex>` where the hex string is the two's-complement
    /// bit pattern of `width` bits, split into 64-bit limbs separated by `_`,
    /// most significant limb first.
    pub fn dump(&self) -> String {
        let modulus = Integer::from(1) << self.width;
        let mut pattern = self.to_integer();
        if pattern < 0 {
            pattern += &modulus;
        }
        let digits = self.width.div_ceil(4) as usize;
        let hex = format!("{:0>digits$}", format!("{pattern:x}"), digits = digits);
        let mut limbs = Vec::new();
        let mut end = hex.len();
        while end > 0 {
            let start = end.saturating_sub(16);
            limbs.push(&hex[start..end]);
            end = start;
        }
        limbs.reverse();
        format!("{} {} 0x{}", self.to_integer(), self.width, limbs.join("_"))
    }

    pub fn parse_dump(line: &str) -> Result<WideInt, WideIntError> {
        let bad = || WideIntError::Parse(line.to_string());
        let mut parts = line.split_whitespace();
        let (Some(dec), Some(width), Some(hex), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let value = Integer::from_str_radix(dec, 10).map_err(|_| bad())?;
        let width: u32 = width.parse().map_err(|_| bad())?;
        let hex = hex.strip_prefix("0x").ok_or_else(bad)?.replace('_', "");
        let pattern = Integer::from_str_radix(&hex, 16).map_err(|_| bad())?;
        let v = WideInt::from_integer(value, width)?;
        let mut expected = v.to_integer();
        if expected < 0 {
            expected += Integer::from(1) << width;
        }
        if expected != pattern {
            return Err(bad());
        }
        Ok(v)
    }
}

/// Exact `a op b`; the result width is the smallest that holds any result
/// for the operand widths.
pub fn exact_arith(a: &WideInt, b: &WideInt, op: ArithOp) -> WideInt {
    match op {
        ArithOp::Add => a.add(b),
        ArithOp::Sub => a.sub(b),
        ArithOp::Mul => a.mul(b),
    }
}

impl fmt::Display for WideInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Small(v) => write!(f, "{v}"),
            Repr::Big(v) => write!(f, "{v}"),
        }
    }
}

impl fmt::Debug for WideInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[w={}]", self, self.width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn w(v: i128, width: u32) -> WideInt {
        WideInt::from_i128(v, width).unwrap()
    }

    fn random_integer(rng: &mut ChaCha8Rng, max_bits: u32) -> Integer {
        let bits = rng.gen_range(1..=max_bits);
        let mut v = Integer::from(0);
        let mut remaining = bits;
        while remaining > 0 {
            let chunk = remaining.min(64);
            v <<= chunk;
            v += rng.gen::<u64>() >> (64 - chunk);
            remaining -= chunk;
        }
        if rng.gen_bool(0.5) {
            v = -v;
        }
        v
    }

    #[test]
    fn arith_examples() {
        let s = exact_arith(&w(3, 3), &w(-4, 3), ArithOp::Add);
        assert_eq!((s.to_i128(), s.width()), (Some(-1), 4));
        let p = exact_arith(&w(-8, 4), &w(7, 4), ArithOp::Mul);
        assert_eq!((p.to_i128(), p.width()), (Some(-56), 8));
        let x = w(12345, 20);
        assert!(x.sub(&x).is_zero());
    }

    #[test]
    fn shift_examples() {
        assert_eq!(w(-3, 4).ashr(1).to_i128(), Some(-2));
        assert_eq!(w(5, 4).ashr(1).to_i128(), Some(2));
        for k in [0, 1, 5, 127, 128, 1000] {
            assert_eq!(w(-1, 1).ashr(k).to_i128(), Some(-1));
        }
        let v = w(3, 3).incr(2).shl(2).unwrap();
        assert_eq!((v.to_i128(), v.width()), (Some(12), 5));
        assert_eq!(w(9, 5).shl(0).unwrap(), w(9, 5));
        let v = w(-2, 2).incr(1).shl(1).unwrap();
        assert_eq!((v.to_i128(), v.width()), (Some(-4), 3));
        assert!(matches!(w(3, 3).shl(1), Err(WideIntError::ShiftOverflow { .. })));
    }

    #[test]
    fn cast_examples() {
        let v = w(5, 4).decr(1).unwrap();
        assert_eq!((v.to_i128(), v.width()), (Some(-3), 3));
        let v = w(-1, 1).incr(3);
        assert_eq!((v.to_i128(), v.width()), (Some(-1), 4));
        assert!(matches!(w(1, 4).decr(4), Err(WideIntError::InvalidCast { .. })));
    }

    #[test]
    fn msb_examples() {
        assert_eq!(w(23, 8).msb(), 6);
        assert_eq!(w(-8, 8).msb(), 4);
        assert_eq!(w(-1, 8).msb(), 1);
        assert_eq!(w(0, 8).msb(), 1);
    }

    #[test]
    fn clamp_examples() {
        let (lo, hi) = (w(-8, 5), w(7, 5));
        assert_eq!(w(11, 5).clamp(&lo, &hi).to_i128(), Some(7));
        assert_eq!(w(-9, 5).clamp(&lo, &hi).to_i128(), Some(-8));
        assert_eq!(w(3, 5).clamp(&lo, &hi).to_i128(), Some(3));
        assert_eq!(w(11, 5).saturate(4).to_i128(), Some(7));
        assert_eq!(w(-9, 5).saturate(4).to_i128(), Some(-8));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(WideInt::from_i128(8, 4).is_err());
        assert!(WideInt::from_i128(-8, 4).is_ok());
        assert!(WideInt::from_i128(0, 0).is_err());
    }

    #[test]
    fn wide_values_cross_the_inline_boundary() {
        let big = WideInt::from_i128(i128::MAX, 128).unwrap();
        let sum = big.add(&big);
        assert_eq!(sum.to_integer(), Integer::from(i128::MAX) * 2);
        assert_eq!(sum.width(), 129);
        assert_eq!(sum.msb(), 129);
        let back = sum.ashr(1);
        assert_eq!(back.to_i128(), Some(i128::MAX));
        let wrapped = sum.decr(1).unwrap();
        assert_eq!(wrapped.to_i128(), Some(-2));
    }

    #[test]
    fn dump_round_trip() {
        let v = w(-3, 5);
        assert_eq!(v.dump(), "-3 5 0x1d");
        assert_eq!(WideInt::parse_dump(&v.dump()).unwrap(), v);
        let big = WideInt::fit(-(Integer::from(1) << 130u32) + 5);
        let line = big.dump();
        assert!(line.contains('_'));
        assert_eq!(WideInt::parse_dump(&line).unwrap(), big);
        assert!(WideInt::parse_dump("5 4 0x4").is_err());
    }

    #[test]
    fn exact_arith_matches_unbounded_integers() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..100_000 {
            let max_bits = if case % 10 == 0 { 300 } else { 100 };
            let a = WideInt::fit(random_integer(&mut rng, max_bits));
            let b = WideInt::fit(random_integer(&mut rng, max_bits));
            let (ia, ib) = (a.to_integer(), b.to_integer());
            for (op, expect) in [
                (ArithOp::Add, Integer::from(&ia + &ib)),
                (ArithOp::Sub, Integer::from(&ia - &ib)),
                (ArithOp::Mul, Integer::from(&ia * &ib)),
            ] {
                let r = exact_arith(&a, &b, op);
                assert_eq!(r.to_integer(), expect, "{op:?} {a:?} {b:?}");
                assert!(r.msb() <= r.width());
            }
        }
    }

    proptest! {
        #[test]
        fn ashr_is_floor_division(v in any::<i64>(), hi in any::<i64>(), s in 0u32..=64) {
            let value = (Integer::from(hi) << 64u32) + v;
            let x = WideInt::fit(value.clone());
            let got = x.ashr(s).to_integer();
            let expect = value.div_rem_floor(Integer::from(1) << s).0;
            prop_assert_eq!(got, expect);
        }

        #[test]
        fn decr_undoes_incr(v in any::<i128>(), b in 0u32..200) {
            let x = WideInt::fit_i128(v);
            prop_assert_eq!(x.incr(b).decr(b).unwrap(), x);
        }

        #[test]
        fn msb_is_minimal_width(v in any::<i128>(), hi in -3i64..3) {
            let value = (Integer::from(hi) << 128u32) + v;
            let x = WideInt::fit(value.clone());
            let m = x.msb();
            prop_assert!(WideInt::from_integer(value.clone(), m).is_ok());
            prop_assert!(m == 1 || WideInt::from_integer(value, m - 1).is_err());
        }
    }
}
