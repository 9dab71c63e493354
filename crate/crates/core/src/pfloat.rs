//! p-adic floating point with N-digit mantissas.
//!
//! A [`PFloat`] number `(a, e)` stands for every p-adic `u * p^e` with `u` a
//! unit and `u = a (mod p^N)`. Arithmetic keeps the result a valid
//! representation of the exact result for *some* choice of exact operands;
//! when additive cancellation leaves high-order mantissa digits undetermined
//! they are drawn from a [`DigitSource`], and the exact operands that make
//! the drawn result correct are reported as a [`Witness`].

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{unit_part, valuation, ExactRational, PrimeContext, Valuation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FloatError {
    #[error("operands use different contexts (p={0}, N={1}) vs (p={2}, N={3})")]
    ContextMismatch(u64, u32, u64, u32),
    #[error("division by {0}: precision failure")]
    PrecisionFailure(&'static str),
    #[error("same_representation is undefined for zero")]
    ZeroArgument,
    #[error("mantissa {0} is not a unit modulo p^N")]
    NotUnit(BigUint),
}

/// Seeded source of the undetermined digits that appear after cancellation.
///
/// Digit `i` of a source depends only on `(seed, i)`.
#[derive(Debug, Clone)]
pub struct DigitSource {
    p: u64,
    seed: u64,
    position: u64,
    rng: Option<ChaCha8Rng>,
}

impl DigitSource {
    pub fn new(p: u64, seed: u64) -> Self {
        DigitSource { p, seed, position: 0, rng: Some(ChaCha8Rng::seed_from_u64(seed)) }
    }

    /// A source that only ever emits 0.
    pub fn zeros(p: u64) -> Self {
        DigitSource { p, seed: 0, position: 0, rng: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn next_digit(&mut self) -> u64 {
        self.position += 1;
        match &mut self.rng {
            Some(rng) => rng.gen_range(0..self.p),
            None => 0,
        }
    }

    /// `k` fresh digits packed as `d_0 + d_1 p + ... + d_{k-1} p^{k-1}`.
    pub fn fill(&mut self, k: u32) -> BigUint {
        let p = BigUint::from(self.p);
        let mut acc = BigUint::zero();
        let mut place = BigUint::one();
        for _ in 0..k {
            acc += &place * self.next_digit();
            place *= &p;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PFloatKind {
    /// `mantissa` lies in `[1, p^N)` and is prime to `p`.
    Number { mantissa: BigUint, exponent: i64 },
    ExactZero,
    /// Every digit was lost; only `v(value) >= min_valuation` is known.
    Unknown { min_valuation: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PFloat {
    p: u64,
    digits: u32,
    kind: PFloatKind,
}

/// Exact operands, represented by the inputs of a filling operation, whose
/// exact result the output represents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub lhs: ExactRational,
    pub rhs: ExactRational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FloatEvent {
    /// `digits_lost` leading digits cancelled and were refilled at random.
    Cancellation { digits_lost: u32, witness: Witness },
    TotalCancellation { min_valuation: i64 },
    /// Adding an `Unknown` left `digits_filled` mantissa digits undetermined.
    UnknownFill { digits_filled: u32, witness: Witness },
}

impl FloatEvent {
    pub fn witness(&self) -> Option<&Witness> {
        match self {
            FloatEvent::Cancellation { witness, .. } | FloatEvent::UnknownFill { witness, .. } => {
                Some(witness)
            }
            FloatEvent::TotalCancellation { .. } => None,
        }
    }
}

fn pow_u(p: u64, k: u32) -> BigUint {
    num_traits::pow(BigUint::from(p), k as usize)
}

fn to_int(x: &BigUint) -> BigInt {
    BigInt::from_biguint(Sign::Plus, x.clone())
}

/// Least nonnegative residue of `x` modulo `m`.
fn reduce(x: &BigInt, m: &BigUint) -> BigUint {
    x.mod_floor(&to_int(m)).to_biguint().expect("mod_floor is nonnegative")
}

fn uint_valuation(x: &BigUint, p: u64) -> u32 {
    let p = BigUint::from(p);
    let mut m = x.clone();
    let mut k = 0;
    while !m.is_zero() {
        let (q, r) = m.div_rem(&p);
        if !r.is_zero() {
            break;
        }
        m = q;
        k += 1;
    }
    k
}

impl PFloat {
    pub fn number(p: u64, digits: u32, mantissa: BigUint, exponent: i64) -> Result<Self, FloatError> {
        let modulus = pow_u(p, digits);
        if mantissa.is_zero() || mantissa >= modulus || (&mantissa % p).is_zero() {
            return Err(FloatError::NotUnit(mantissa));
        }
        Ok(PFloat { p, digits, kind: PFloatKind::Number { mantissa, exponent } })
    }

    pub fn zero(p: u64, digits: u32) -> Self {
        PFloat { p, digits, kind: PFloatKind::ExactZero }
    }

    pub fn unknown(p: u64, digits: u32, min_valuation: i64) -> Self {
        PFloat { p, digits, kind: PFloatKind::Unknown { min_valuation } }
    }

    fn with_kind(&self, kind: PFloatKind) -> Self {
        PFloat { p: self.p, digits: self.digits, kind }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn kind(&self) -> &PFloatKind {
        &self.kind
    }

    pub fn modulus(&self) -> BigUint {
        pow_u(self.p, self.digits)
    }

    pub fn is_number(&self) -> bool {
        matches!(self.kind, PFloatKind::Number { .. })
    }

    /// Exponent of a number, i.e. its exact valuation.
    pub fn exponent(&self) -> Option<i64> {
        match self.kind {
            PFloatKind::Number { exponent, .. } => Some(exponent),
            _ => None,
        }
    }

    /// Valuation beyond which the stored value says nothing: `e + N` for a
    /// number, the bound for an unknown, `inf` for exact zero.
    pub fn resolution(&self) -> Valuation {
        match self.kind {
            PFloatKind::Number { exponent, .. } => Valuation::Finite(exponent + self.digits as i64),
            PFloatKind::Unknown { min_valuation } => Valuation::Finite(min_valuation),
            PFloatKind::ExactZero => Valuation::Infinity,
        }
    }

    /// The canonical exact value `mantissa * p^exponent`; `None` for unknowns.
    pub fn representative(&self) -> Option<ExactRational> {
        match &self.kind {
            PFloatKind::Number { mantissa, exponent } => {
                let ctx = PrimeContext::new(self.p).expect("prime checked at construction");
                Some(ExactRational::from_integer(to_int(mantissa)) * ctx.pow_rational(*exponent))
            }
            PFloatKind::ExactZero => Some(ExactRational::zero()),
            PFloatKind::Unknown { .. } => None,
        }
    }

    /// Does this float represent the exact value `x`?
    pub fn represents(&self, x: &ExactRational) -> bool {
        let ctx = PrimeContext::new(self.p).expect("prime checked at construction");
        match &self.kind {
            PFloatKind::ExactZero => x.is_zero(),
            PFloatKind::Unknown { min_valuation } => valuation(x, &ctx) >= *min_valuation,
            PFloatKind::Number { .. } => {
                !x.is_zero() && round_exact(x, &ctx, self.digits) == *self
            }
        }
    }

    pub fn neg(&self) -> Self {
        match &self.kind {
            PFloatKind::Number { mantissa, exponent } => self.with_kind(PFloatKind::Number {
                mantissa: self.modulus() - mantissa,
                exponent: *exponent,
            }),
            _ => self.clone(),
        }
    }
}

impl fmt::Display for PFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PFloatKind::Number { mantissa, exponent } => {
                write!(f, "{mantissa}*{}^{exponent} (mod {}^{})", self.p, self.p, self.digits)
            }
            PFloatKind::ExactZero => f.write_str("0"),
            PFloatKind::Unknown { min_valuation } => write!(f, "O({}^{min_valuation})", self.p),
        }
    }
}

/// Rounds an exact rational to `digits` p-adic digits.
pub fn round_exact(x: &ExactRational, ctx: &PrimeContext, digits: u32) -> PFloat {
    if x.is_zero() {
        return PFloat::zero(ctx.p(), digits);
    }
    let modulus = ctx.pow(digits);
    let (exponent, unit) = unit_part(x, ctx);
    let m = to_int(&modulus);
    let den_inv = unit
        .denom()
        .mod_floor(&m)
        .modinv(&m)
        .expect("unit denominator is invertible modulo p^N");
    let mantissa = reduce(&(unit.numer() * den_inv), &modulus);
    PFloat { p: ctx.p(), digits, kind: PFloatKind::Number { mantissa, exponent } }
}

/// True iff `v(y/x - 1) >= N`, i.e. `x` and `y` share an N-digit representation.
pub fn same_representation(
    x: &ExactRational,
    y: &ExactRational,
    ctx: &PrimeContext,
    digits: u32,
) -> Result<bool, FloatError> {
    if x.is_zero() || y.is_zero() {
        return Err(FloatError::ZeroArgument);
    }
    Ok(valuation(&(y / x - ExactRational::one()), ctx) >= digits as i64)
}

/// One floating-point operation. Events describe any digits that had to be
/// invented along the way.
pub fn float_arith(
    op: ArithOp,
    x: &PFloat,
    y: &PFloat,
    digits: &mut DigitSource,
) -> Result<(PFloat, Vec<FloatEvent>), FloatError> {
    if x.p != y.p || x.digits != y.digits {
        return Err(FloatError::ContextMismatch(x.p, x.digits, y.p, y.digits));
    }
    match op {
        ArithOp::Add => Ok(add(x, y, digits)),
        ArithOp::Sub => {
            let (out, events) = add(x, &y.neg(), digits);
            // witnesses were produced for x + (-y); report them for x - y
            let events = events
                .into_iter()
                .map(|ev| match ev {
                    FloatEvent::Cancellation { digits_lost, witness } => FloatEvent::Cancellation {
                        digits_lost,
                        witness: Witness { lhs: witness.lhs, rhs: -witness.rhs },
                    },
                    FloatEvent::UnknownFill { digits_filled, witness } => FloatEvent::UnknownFill {
                        digits_filled,
                        witness: Witness { lhs: witness.lhs, rhs: -witness.rhs },
                    },
                    other => other,
                })
                .collect();
            Ok((out, events))
        }
        ArithOp::Mul => Ok((mul(x, y), Vec::new())),
        ArithOp::Div => div(x, y).map(|q| (q, Vec::new())),
    }
}

fn mul(x: &PFloat, y: &PFloat) -> PFloat {
    use PFloatKind::*;
    match (&x.kind, &y.kind) {
        (ExactZero, _) | (_, ExactZero) => x.with_kind(ExactZero),
        (Number { mantissa: a, exponent: e }, Number { mantissa: b, exponent: f }) => {
            x.with_kind(Number { mantissa: (a * b) % x.modulus(), exponent: e + f })
        }
        (Unknown { min_valuation: b }, Number { exponent: e, .. })
        | (Number { exponent: e, .. }, Unknown { min_valuation: b }) => {
            x.with_kind(Unknown { min_valuation: b + e })
        }
        (Unknown { min_valuation: a }, Unknown { min_valuation: b }) => {
            x.with_kind(Unknown { min_valuation: a + b })
        }
    }
}

fn div(x: &PFloat, y: &PFloat) -> Result<PFloat, FloatError> {
    use PFloatKind::*;
    let (b, f) = match &y.kind {
        Number { mantissa, exponent } => (mantissa, *exponent),
        ExactZero => return Err(FloatError::PrecisionFailure("exact zero")),
        Unknown { .. } => return Err(FloatError::PrecisionFailure("a value with no known digits")),
    };
    Ok(match &x.kind {
        ExactZero => x.clone(),
        Unknown { min_valuation } => x.with_kind(Unknown { min_valuation: min_valuation - f }),
        Number { mantissa: a, exponent: e } => {
            let m = to_int(&x.modulus());
            let inv = to_int(b).modinv(&m).expect("mantissas are units");
            x.with_kind(Number { mantissa: reduce(&(to_int(a) * inv), &x.modulus()), exponent: e - f })
        }
    })
}

fn scaled(m: &BigInt, p: u64, e: i64) -> ExactRational {
    let ctx = PrimeContext::new(p).expect("prime checked at construction");
    ExactRational::from_integer(m.clone()) * ctx.pow_rational(e)
}

fn add(x: &PFloat, y: &PFloat, src: &mut DigitSource) -> (PFloat, Vec<FloatEvent>) {
    use PFloatKind::*;
    let n = x.digits;
    let p = x.p;
    match (&x.kind, &y.kind) {
        (ExactZero, _) => (y.clone(), Vec::new()),
        (_, ExactZero) => (x.clone(), Vec::new()),
        (Unknown { min_valuation: a }, Unknown { min_valuation: b }) => {
            (x.with_kind(Unknown { min_valuation: *a.min(b) }), Vec::new())
        }
        (Number { mantissa, exponent }, Unknown { min_valuation }) => {
            add_unknown(x, mantissa, *exponent, *min_valuation, src, false)
        }
        (Unknown { min_valuation }, Number { mantissa, exponent }) => {
            add_unknown(x, mantissa, *exponent, *min_valuation, src, true)
        }
        (Number { mantissa: a, exponent: e }, Number { mantissa: b, exponent: f }) => {
            let modulus = x.modulus();
            if e != f {
                // low exponent keeps its digits; the other is shifted in exactly
                let (lo, lo_e, hi, hi_e) = if e < f { (a, *e, b, *f) } else { (b, *f, a, *e) };
                let shift = (hi_e - lo_e) as u64;
                let mantissa = if shift >= n as u64 {
                    lo.clone()
                } else {
                    (lo + hi * pow_u(p, shift as u32)) % &modulus
                };
                return (x.with_kind(Number { mantissa, exponent: lo_e }), Vec::new());
            }
            let sum = (a + b) % &modulus;
            if sum.is_zero() {
                let min_valuation = e + n as i64;
                return (
                    x.with_kind(Unknown { min_valuation }),
                    vec![FloatEvent::TotalCancellation { min_valuation }],
                );
            }
            let k = uint_valuation(&sum, p);
            if k == 0 {
                return (x.with_kind(Number { mantissa: sum, exponent: *e }), Vec::new());
            }
            let known = sum / pow_u(p, k);
            let mantissa = known + pow_u(p, n - k) * src.fill(k);
            // y's hidden digits above p^N are whatever makes the sum come out right
            let lhs = to_int(a);
            let rhs = to_int(&mantissa) * to_int(&pow_u(p, k)) - &lhs;
            let witness = Witness { lhs: scaled(&lhs, p, *e), rhs: scaled(&rhs, p, *e) };
            (
                x.with_kind(Number { mantissa, exponent: e + k as i64 }),
                vec![FloatEvent::Cancellation { digits_lost: k, witness }],
            )
        }
    }
}

fn add_unknown(
    like: &PFloat,
    mantissa: &BigUint,
    exponent: i64,
    bound: i64,
    src: &mut DigitSource,
    unknown_first: bool,
) -> (PFloat, Vec<FloatEvent>) {
    let n = like.digits as i64;
    let p = like.p;
    if exponent >= bound {
        return (like.with_kind(PFloatKind::Unknown { min_valuation: bound }), Vec::new());
    }
    let known = bound - exponent;
    if known >= n {
        let kind = PFloatKind::Number { mantissa: mantissa.clone(), exponent };
        return (like.with_kind(kind), Vec::new());
    }
    let known = known as u32;
    let lost = like.digits - known;
    let low = mantissa % pow_u(p, known);
    let filled = low + pow_u(p, known) * src.fill(lost);
    let number = to_int(mantissa);
    let unknown = to_int(&filled) - &number;
    let (lhs, rhs) = if unknown_first { (unknown, number) } else { (number, unknown) };
    let witness = Witness { lhs: scaled(&lhs, p, exponent), rhs: scaled(&rhs, p, exponent) };
    (
        like.with_kind(PFloatKind::Number { mantissa: filled, exponent }),
        vec![FloatEvent::UnknownFill { digits_filled: lost, witness }],
    )
}

/// Exact counterpart of [`float_arith`], used as the oracle in tests.
pub fn exact_op(op: ArithOp, x: &ExactRational, y: &ExactRational) -> ExactRational {
    match op {
        ArithOp::Add => x + y,
        ArithOp::Sub => x - y,
        ArithOp::Mul => x * y,
        ArithOp::Div => x / y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{rat, ratio};

    fn num(p: u64, n: u32, m: u64, e: i64) -> PFloat {
        PFloat::number(p, n, BigUint::from(m), e).unwrap()
    }

    #[test]
    fn rounding_examples() {
        let two = PrimeContext::new(2).unwrap();
        assert_eq!(round_exact(&rat(5), &two, 3), num(2, 3, 5, 0));
        // -6/5 = 2 * (-3/5); 5^-1 = 13 mod 64; -39 = 25 mod 64
        assert_eq!(round_exact(&ratio(-6, 5), &two, 6), num(2, 6, 25, 1));
        assert_eq!(*round_exact(&rat(0), &two, 6).kind(), PFloatKind::ExactZero);
    }

    #[test]
    fn same_representation_examples() {
        let two = PrimeContext::new(2).unwrap();
        assert!(same_representation(&rat(5), &rat(45), &two, 3).unwrap());
        assert!(same_representation(&rat(5), &rat(5), &two, 9).unwrap());
        assert!(!same_representation(&rat(5), &rat(7), &two, 3).unwrap());
        assert_eq!(same_representation(&rat(0), &rat(7), &two, 3), Err(FloatError::ZeroArgument));
    }

    #[test]
    fn mul_example() {
        let mut src = DigitSource::zeros(2);
        let (out, events) = float_arith(ArithOp::Mul, &num(2, 3, 3, 0), &num(2, 3, 5, 1), &mut src).unwrap();
        assert_eq!(out, num(2, 3, 7, 1));
        assert!(events.is_empty());
    }

    #[test]
    fn total_cancellation_example() {
        let mut src = DigitSource::new(2, 1);
        let (out, events) = float_arith(ArithOp::Add, &num(2, 4, 1, 0), &num(2, 4, 15, 0), &mut src).unwrap();
        assert_eq!(*out.kind(), PFloatKind::Unknown { min_valuation: 4 });
        assert_eq!(events, vec![FloatEvent::TotalCancellation { min_valuation: 4 }]);
    }

    #[test]
    fn zero_is_additive_identity() {
        let mut src = DigitSource::new(3, 9);
        let x = num(3, 5, 7, -2);
        let (out, events) = float_arith(ArithOp::Add, &x, &PFloat::zero(3, 5), &mut src).unwrap();
        assert_eq!((out, events), (x.clone(), vec![]));
        let (out, _) = float_arith(ArithOp::Sub, &x, &PFloat::zero(3, 5), &mut src).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn partial_cancellation_refills_high_digits() {
        // 11/25 - 1 at p = 2, N = 6 loses one digit
        let two = PrimeContext::new(2).unwrap();
        let x = round_exact(&ratio(11, 25), &two, 6);
        let y = round_exact(&rat(1), &two, 6);
        let mut src = DigitSource::new(2, 77);
        let (out, events) = float_arith(ArithOp::Sub, &x, &y, &mut src).unwrap();
        assert_eq!(out.exponent(), Some(1));
        let FloatEvent::Cancellation { digits_lost, witness } = &events[0] else {
            panic!("expected a cancellation event, got {events:?}");
        };
        assert_eq!(*digits_lost, 1);
        assert!(x.represents(&witness.lhs));
        assert!(y.represents(&witness.rhs));
        assert!(out.represents(&(&witness.lhs - &witness.rhs)));
        // the low digits agree with the exact difference
        assert!(same_representation(&ratio(-14, 25), &out.representative().unwrap(), &two, 5).unwrap());
    }

    #[test]
    fn unknown_operands() {
        let mut src = DigitSource::new(5, 3);
        let u = PFloat::unknown(5, 4, 2);
        let x = num(5, 4, 7, 0);
        // two known digits survive, two are refilled
        let (out, events) = float_arith(ArithOp::Add, &x, &u, &mut src).unwrap();
        assert_eq!(out.exponent(), Some(0));
        let w = events[0].witness().unwrap();
        assert!(x.represents(&w.lhs) && u.represents(&w.rhs));
        assert!(out.represents(&(&w.lhs + &w.rhs)));
        // far below the unknown's bound the unknown is absorbed
        let (out, events) = float_arith(ArithOp::Add, &x, &PFloat::unknown(5, 4, 9), &mut src).unwrap();
        assert_eq!((out, events.len()), (x.clone(), 0));
        let (out, _) = float_arith(ArithOp::Mul, &x, &u, &mut src).unwrap();
        assert_eq!(*out.kind(), PFloatKind::Unknown { min_valuation: 2 });
    }

    #[test]
    fn dividing_by_nothing_fails() {
        let mut src = DigitSource::zeros(2);
        let x = num(2, 4, 3, 0);
        assert!(matches!(
            float_arith(ArithOp::Div, &x, &PFloat::zero(2, 4), &mut src),
            Err(FloatError::PrecisionFailure(_))
        ));
        assert!(matches!(
            float_arith(ArithOp::Div, &x, &PFloat::unknown(2, 4, 4), &mut src),
            Err(FloatError::PrecisionFailure(_))
        ));
    }

    #[test]
    fn digit_source_is_reproducible() {
        let mut a = DigitSource::new(7, 42);
        let mut b = DigitSource::new(7, 42);
        let xs: Vec<u64> = (0..64).map(|_| a.next_digit()).collect();
        let ys: Vec<u64> = (0..64).map(|_| b.next_digit()).collect();
        assert_eq!(xs, ys);
        assert!(xs.iter().all(|&d| d < 7));
        assert_eq!(a.position(), 64);
        assert!(DigitSource::zeros(7).fill(5).is_zero());
    }

    #[test]
    fn context_mismatch() {
        let mut src = DigitSource::zeros(2);
        assert!(matches!(
            float_arith(ArithOp::Add, &num(2, 4, 1, 0), &num(2, 5, 1, 0), &mut src),
            Err(FloatError::ContextMismatch(..))
        ));
    }
}
