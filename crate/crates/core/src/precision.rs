//! Working-precision tiers and the arithmetic back ends behind them.
//!
//! Code that must survive catastrophic cancellation is written against
//! [`Arith`], a context-passing arithmetic interface. [`Double`] runs it in
//! IEEE binary64 with compensated summation; [`Extended`] runs it in
//! arbitrary-precision binary floating point.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use astro_float::{BigFloat, Consts, RoundingMode, Sign};

use crate::error::{Error, Result};
use crate::special::Compensated;

/// Decimal digits carried by binary64.
pub const DOUBLE_DIGITS: f64 = 15.954_589_770_191_003;

/// Default digit count when extended precision is chosen automatically.
pub const DEFAULT_EXTENDED_DIGITS: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Tier {
    Double,
    Extended { digits: u32 },
}

impl Tier {
    pub fn digits(&self) -> f64 {
        match *self {
            Tier::Double => DOUBLE_DIGITS,
            Tier::Extended { digits } => digits as f64,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tier::Double => f.write_str("double"),
            Tier::Extended { digits } => write!(f, "extended({digits})"),
        }
    }
}

/// What the caller asked for; `Auto` lets the cancellation estimate decide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecisionRequest {
    #[default]
    Auto,
    Fixed(Tier),
}

impl fmt::Display for PrecisionRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecisionRequest::Auto => f.write_str("auto"),
            PrecisionRequest::Fixed(t) => t.fmt(f),
        }
    }
}

impl FromStr for PrecisionRequest {
    type Err = Error;

    /// Accepts `auto`, `double`, `extended`, `extended(60)` and `extended:60`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "auto" => return Ok(PrecisionRequest::Auto),
            "double" => return Ok(PrecisionRequest::Fixed(Tier::Double)),
            "extended" => {
                return Ok(PrecisionRequest::Fixed(Tier::Extended { digits: DEFAULT_EXTENDED_DIGITS }))
            }
            _ => {}
        }
        let digits = t
            .strip_prefix("extended")
            .map(|r| r.trim_matches(|c| c == '(' || c == ')' || c == ':' || c == '='))
            .and_then(|r| r.parse::<u32>().ok())
            .filter(|&d| (16..=2000).contains(&d))
            .ok_or_else(|| Error::Unsupported(String::from("precision must be auto, double or extended(<16..2000>)")))?;
        Ok(PrecisionRequest::Fixed(Tier::Extended { digits }))
    }
}

/// Context-passing arithmetic over a number type `Num`.
pub trait Arith {
    type Num: Clone + fmt::Debug;

    fn tier(&self) -> Tier;
    fn from_f64(&mut self, x: f64) -> Self::Num;
    fn to_f64(&self, x: &Self::Num) -> f64;
    fn add(&mut self, a: &Self::Num, b: &Self::Num) -> Self::Num;
    fn sub(&mut self, a: &Self::Num, b: &Self::Num) -> Self::Num;
    fn mul(&mut self, a: &Self::Num, b: &Self::Num) -> Self::Num;
    fn div(&mut self, a: &Self::Num, b: &Self::Num) -> Self::Num;
    fn neg(&mut self, a: &Self::Num) -> Self::Num;
    fn sqrt(&mut self, a: &Self::Num) -> Self::Num;
    fn exp(&mut self, a: &Self::Num) -> Self::Num;
    fn cos(&mut self, a: &Self::Num) -> Self::Num;
    fn pi(&mut self) -> Self::Num;
    /// Full-digit decimal rendering, used for lossless export.
    fn render(&mut self, a: &Self::Num) -> String;

    /// Inverse of [`Arith::render`]; `None` if `s` is not a number.
    fn parse(&mut self, s: &str) -> Option<Self::Num> {
        s.trim().parse::<f64>().ok().map(|x| self.from_f64(x))
    }

    fn int(&mut self, k: i64) -> Self::Num {
        self.from_f64(k as f64)
    }

    fn abs(&mut self, a: &Self::Num) -> Self::Num {
        if self.to_f64(a) < 0.0 {
            self.neg(a)
        } else {
            a.clone()
        }
    }

    /// Sum of a slice; the double back end compensates.
    fn sum(&mut self, xs: &[Self::Num]) -> Self::Num {
        let mut acc = self.from_f64(0.0);
        for x in xs {
            acc = self.add(&acc, x);
        }
        acc
    }

    /// Σ aᵢ·bᵢ.
    fn dot(&mut self, a: &[Self::Num], b: &[Self::Num]) -> Self::Num {
        let prods: Vec<Self::Num> = a.iter().zip(b).map(|(x, y)| self.mul(x, y)).collect();
        self.sum(&prods)
    }

    fn powi(&mut self, a: &Self::Num, k: u32) -> Self::Num {
        let mut acc = self.from_f64(1.0);
        for _ in 0..k {
            acc = self.mul(&acc, a);
        }
        acc
    }
}

/// IEEE binary64 with compensated sums and dot products.
#[derive(Debug, Clone, Copy, Default)]
pub struct Double;

impl Arith for Double {
    type Num = f64;

    fn tier(&self) -> Tier {
        Tier::Double
    }
    fn from_f64(&mut self, x: f64) -> f64 {
        x
    }
    fn to_f64(&self, x: &f64) -> f64 {
        *x
    }
    fn add(&mut self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: &f64, b: &f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: &f64, b: &f64) -> f64 {
        a / b
    }
    fn neg(&mut self, a: &f64) -> f64 {
        -a
    }
    fn sqrt(&mut self, a: &f64) -> f64 {
        libm::sqrt(*a)
    }
    fn exp(&mut self, a: &f64) -> f64 {
        libm::exp(*a)
    }
    fn cos(&mut self, a: &f64) -> f64 {
        libm::cos(*a)
    }
    fn pi(&mut self) -> f64 {
        core::f64::consts::PI
    }
    fn render(&mut self, a: &f64) -> String {
        alloc::format!("{a:.16e}")
    }
    fn sum(&mut self, xs: &[f64]) -> f64 {
        let mut acc = Compensated::new();
        for &x in xs {
            acc.add(x);
        }
        acc.value()
    }
    fn dot(&mut self, a: &[f64], b: &[f64]) -> f64 {
        // Ogita–Rump–Oishi Dot2: error-free products, compensated accumulation
        let mut acc = Compensated::new();
        for (&x, &y) in a.iter().zip(b) {
            let (p, e) = crate::special::two_prod(x, y);
            acc.add(p);
            acc.add(e);
        }
        acc.value()
    }
}

/// Arbitrary-precision binary floating point.
pub struct Extended {
    digits: u32,
    bits: usize,
    consts: Consts,
}

const RM: RoundingMode = RoundingMode::ToEven;

impl Extended {
    pub fn new(digits: u32) -> Result<Self> {
        let consts = Consts::new().map_err(|e| Error::Unsupported(alloc::format!("{e:?}")))?;
        // round the bit count up to whole 64-bit words
        let raw = (digits as f64 * core::f64::consts::LOG2_10) as usize + 1;
        let bits = raw.div_ceil(64) * 64;
        Ok(Self { digits, bits, consts })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }
}

impl fmt::Debug for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Extended").field("digits", &self.digits).field("bits", &self.bits).finish()
    }
}

/// Nearest binary64 value of a big float.
pub fn big_to_f64(x: &BigFloat) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_inf_pos() {
        return f64::INFINITY;
    }
    if x.is_inf_neg() {
        return f64::NEG_INFINITY;
    }
    if x.is_zero() {
        return 0.0;
    }
    let Some((words, _, sign, exponent, _)) = x.as_raw_parts() else {
        return f64::NAN;
    };
    let top = words.len() - 1;
    // mantissa is 0.m with the leading bit at the top of the highest word
    let hi = words[top] as f64;
    let lo = if top > 0 { words[top - 1] as f64 * 5.421_010_862_427_522e-20 } else { 0.0 };
    let v = libm::scalbn(hi + lo, exponent - 64);
    match sign {
        Sign::Neg => -v,
        Sign::Pos => v,
    }
}

impl Arith for Extended {
    type Num = BigFloat;

    fn tier(&self) -> Tier {
        Tier::Extended { digits: self.digits }
    }
    fn from_f64(&mut self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.bits)
    }
    fn to_f64(&self, x: &BigFloat) -> f64 {
        big_to_f64(x)
    }
    fn add(&mut self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.bits, RM)
    }
    fn sub(&mut self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.bits, RM)
    }
    fn mul(&mut self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.bits, RM)
    }
    fn div(&mut self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.bits, RM)
    }
    fn neg(&mut self, a: &BigFloat) -> BigFloat {
        a.neg()
    }
    fn sqrt(&mut self, a: &BigFloat) -> BigFloat {
        a.sqrt(self.bits, RM)
    }
    fn exp(&mut self, a: &BigFloat) -> BigFloat {
        a.exp(self.bits, RM, &mut self.consts)
    }
    fn cos(&mut self, a: &BigFloat) -> BigFloat {
        a.cos(self.bits, RM, &mut self.consts)
    }
    fn pi(&mut self) -> BigFloat {
        self.consts.pi(self.bits, RM)
    }
    fn render(&mut self, a: &BigFloat) -> String {
        match a.format(astro_float::Radix::Dec, RM, &mut self.consts) {
            Ok(s) => s,
            Err(_) => alloc::format!("{:e}", big_to_f64(a)),
        }
    }
    fn parse(&mut self, s: &str) -> Option<BigFloat> {
        let v = BigFloat::parse(s.trim(), astro_float::Radix::Dec, self.bits, RM, &mut self.consts);
        (!v.is_nan()).then_some(v)
    }
    fn abs(&mut self, a: &BigFloat) -> BigFloat {
        a.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_requests() {
        assert_eq!("auto".parse::<PrecisionRequest>().unwrap(), PrecisionRequest::Auto);
        assert_eq!("double".parse::<PrecisionRequest>().unwrap(), PrecisionRequest::Fixed(Tier::Double));
        assert_eq!(
            "extended(80)".parse::<PrecisionRequest>().unwrap(),
            PrecisionRequest::Fixed(Tier::Extended { digits: 80 })
        );
        assert!("quad".parse::<PrecisionRequest>().is_err());
        assert!("extended(3)".parse::<PrecisionRequest>().is_err());
    }

    #[test]
    fn big_float_round_trips_doubles() {
        for &v in &[1.0, -3.5, 0.1, 1e-300, 6.02e23, -2.2250738585072014e-308] {
            let mut ext = Extended::new(50).unwrap();
            let b = ext.from_f64(v);
            assert_eq!(ext.to_f64(&b), v);
        }
    }

    #[test]
    fn extended_resolves_what_double_cannot() {
        let mut ext = Extended::new(50).unwrap();
        let one = ext.from_f64(1.0);
        let tiny = ext.from_f64(1e-30);
        let s = ext.add(&one, &tiny);
        let back = ext.sub(&s, &one);
        assert!((ext.to_f64(&back) - 1e-30).abs() < 1e-45);
        let e1 = ext.exp(&one);
        assert!((ext.to_f64(&e1) - core::f64::consts::E).abs() < 1e-15);
        let pi = ext.pi();
        let c = ext.cos(&pi);
        assert_eq!(ext.to_f64(&c), -1.0);
    }

    #[test]
    fn double_dot_is_compensated() {
        let mut d = Double;
        let a = [1e16, 1.0, -1e16];
        let b = [1.0, 1.0, 1.0];
        assert_eq!(d.dot(&a, &b), 1.0);
    }
}
