//! Exact rationals with p-adic valuations.
//!
//! Everything downstream (solutions, perturbations, the float emulation's
//! correctness oracle) is built on [`ExactRational`], so nothing here ever
//! rounds.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Element of the ground field `Q`. Always stored in lowest terms with a
/// positive denominator; zero is `0/1`.
pub type ExactRational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("cannot normalize a coefficient list that is empty or entirely zero")]
    DegenerateInput,
    #[error("invalid rational literal {0:?}")]
    BadRational(String),
}

/// A p-adic valuation: an integer, or `+inf` for zero.
///
/// The derived ordering puts every finite value below `Infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Valuation {
    Finite(i64),
    Infinity,
}

impl Valuation {
    pub fn is_infinite(self) -> bool {
        matches!(self, Valuation::Infinity)
    }

    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinity => None,
        }
    }

    /// `self - k`, with `inf - k = inf`.
    pub fn minus(self, k: i64) -> Valuation {
        match self {
            Valuation::Finite(v) => Valuation::Finite(v - k),
            Valuation::Infinity => Valuation::Infinity,
        }
    }
}

impl Add for Valuation {
    type Output = Valuation;

    fn add(self, rhs: Valuation) -> Valuation {
        match (self, rhs) {
            (Valuation::Finite(a), Valuation::Finite(b)) => Valuation::Finite(a + b),
            _ => Valuation::Infinity,
        }
    }
}

impl PartialEq<i64> for Valuation {
    fn eq(&self, other: &i64) -> bool {
        *self == Valuation::Finite(*other)
    }
}

impl PartialOrd<i64> for Valuation {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        Some(self.cmp(&Valuation::Finite(*other)))
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinity => f.write_str("inf"),
        }
    }
}

// Serialized as a plain integer, or the string "inf".
impl Serialize for Valuation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Valuation::Finite(v) => s.serialize_i64(*v),
            Valuation::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Valuation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Valuation::Finite(v)),
            Raw::Str(s) if s == "inf" => Ok(Valuation::Infinity),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad valuation {s:?}"))),
        }
    }
}

/// The prime defining the valuation in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct PrimeContext {
    p: u64,
}

impl PrimeContext {
    pub fn new(p: u64) -> Result<Self, FieldError> {
        if is_prime(p) {
            Ok(PrimeContext { p })
        } else {
            Err(FieldError::NotPrime(p))
        }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn p_big(&self) -> BigInt {
        BigInt::from(self.p)
    }

    /// `p^k` as an integer, `k >= 0`.
    pub fn pow(&self, k: u32) -> BigUint {
        num_traits::pow(BigUint::from(self.p), k as usize)
    }

    /// `p^k` as a rational; `k` may be negative.
    pub fn pow_rational(&self, k: i64) -> ExactRational {
        let mag = BigInt::from(self.pow(k.unsigned_abs() as u32));
        if k >= 0 {
            ExactRational::from_integer(mag)
        } else {
            ExactRational::new_raw(BigInt::one(), mag)
        }
    }

    pub fn valuation(&self, x: &ExactRational) -> Valuation {
        valuation(x, self)
    }

    pub fn int_valuation(&self, n: &BigInt) -> Valuation {
        if n.is_zero() {
            Valuation::Infinity
        } else {
            Valuation::Finite(strip_factor(n, self.p).1 as i64)
        }
    }
}

impl TryFrom<u64> for PrimeContext {
    type Error = FieldError;

    fn try_from(p: u64) -> Result<Self, FieldError> {
        PrimeContext::new(p)
    }
}

impl From<PrimeContext> for u64 {
    fn from(ctx: PrimeContext) -> u64 {
        ctx.p
    }
}

/// Deterministic Miller-Rabin; the witness set is exact for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for small in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(small) {
            return n == small;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(acc, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Splits `n = p^k * m` with `p` not dividing `m`, by repeated division.
/// `n` must be nonzero.
pub(crate) fn strip_factor(n: &BigInt, p: u64) -> (BigInt, u64) {
    debug_assert!(!n.is_zero());
    let p = BigInt::from(p);
    let mut m = n.clone();
    let mut k = 0;
    loop {
        let (q, r) = m.div_rem(&p);
        if !r.is_zero() {
            return (m, k);
        }
        m = q;
        k += 1;
    }
}

/// `v_p(x) = v_p(numerator) - v_p(denominator)`, `+inf` for zero.
pub fn valuation(x: &ExactRational, ctx: &PrimeContext) -> Valuation {
    if x.is_zero() {
        return Valuation::Infinity;
    }
    let (_, num) = strip_factor(x.numer(), ctx.p());
    let (_, den) = strip_factor(x.denom(), ctx.p());
    Valuation::Finite(num as i64 - den as i64)
}

/// Splits a nonzero rational as `x = p^v * u` with `u` a p-adic unit; returns `(v, u)`.
pub fn unit_part(x: &ExactRational, ctx: &PrimeContext) -> (i64, ExactRational) {
    let (num, a) = strip_factor(x.numer(), ctx.p());
    let (den, b) = strip_factor(x.denom(), ctx.p());
    (a as i64 - b as i64, ExactRational::new(num, den))
}

/// Divides every coefficient by `p^k`, `k` the minimum valuation, so the
/// result has minimum valuation exactly 0. Returns the scaled list and `k`.
pub fn normalize_coefficients(
    coeffs: &[ExactRational],
    ctx: &PrimeContext,
) -> Result<(Vec<ExactRational>, i64), FieldError> {
    let shift = coeffs
        .iter()
        .filter_map(|c| valuation(c, ctx).finite())
        .min()
        .ok_or(FieldError::DegenerateInput)?;
    let scale = ctx.pow_rational(-shift);
    Ok((coeffs.iter().map(|c| c * &scale).collect(), shift))
}

/// Parses `"a"`, `"-a"` or `"a/b"`.
pub fn parse_rational(s: &str) -> Result<ExactRational, FieldError> {
    let bad = || FieldError::BadRational(s.to_string());
    let t = s.trim();
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (t, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(ExactRational::new(num, den))
}

/// Always `num/den`, even for integers.
pub fn format_rational(x: &ExactRational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// Integer rational, for terse construction in tests and generators.
pub fn rat(n: i64) -> ExactRational {
    ExactRational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> ExactRational {
    ExactRational::new(BigInt::from(n), BigInt::from(d))
}

/// `v(x - y)`.
pub fn distance_valuation(x: &ExactRational, y: &ExactRational, ctx: &PrimeContext) -> Valuation {
    valuation(&x.sub(y), ctx)
}
