//! Fixed-point p-adic arithmetic: residues modulo `p^N`.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::Zero;
use thiserror::Error;

use crate::field::{unit_part, ExactRational, PrimeContext, Valuation};
use crate::pfloat::{ArithOp, DigitSource};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixedError {
    #[error("division by the non-unit residue {0}")]
    NonUnitDivision(BigUint),
    #[error("division by a residue that is 0 mod p^N")]
    ZeroDivisor,
    #[error("value of valuation {0} has no residue modulo p^N")]
    NegativeValuation(i64),
    #[error("operands use different contexts")]
    ContextMismatch,
}

/// An element of `Z / p^N Z`, stored as its least nonnegative representative.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FixedPoint {
    p: u64,
    digits: u32,
    residue: BigUint,
}

fn pow_u(p: u64, k: u32) -> BigUint {
    num_traits::pow(BigUint::from(p), k as usize)
}

fn to_int(x: &BigUint) -> BigInt {
    BigInt::from_biguint(Sign::Plus, x.clone())
}

impl FixedPoint {
    pub fn new(p: u64, digits: u32, value: &BigInt) -> Self {
        let modulus = pow_u(p, digits);
        let residue = value.mod_floor(&to_int(&modulus)).to_biguint().expect("nonnegative");
        FixedPoint { p, digits, residue }
    }

    /// Reduces a p-integral rational modulo `p^N`.
    pub fn from_rational(x: &ExactRational, ctx: &PrimeContext, digits: u32) -> Result<Self, FixedError> {
        if x.is_zero() {
            return Ok(FixedPoint { p: ctx.p(), digits, residue: BigUint::zero() });
        }
        let (v, unit) = unit_part(x, ctx);
        if v < 0 {
            return Err(FixedError::NegativeValuation(v));
        }
        let m = to_int(&ctx.pow(digits));
        let inv = unit.denom().mod_floor(&m).modinv(&m).expect("unit denominator");
        let shifted = unit.numer() * inv * to_int(&ctx.pow(v as u32));
        Ok(FixedPoint::new(ctx.p(), digits, &shifted))
    }

    pub fn residue(&self) -> &BigUint {
        &self.residue
    }

    pub fn modulus(&self) -> BigUint {
        pow_u(self.p, self.digits)
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn to_rational(&self) -> ExactRational {
        ExactRational::from_integer(to_int(&self.residue))
    }

    /// `v_p` of the least representative; `inf` for the zero class.
    pub fn valuation(&self) -> Valuation {
        if self.residue.is_zero() {
            return Valuation::Infinity;
        }
        let p = BigUint::from(self.p);
        let mut m = self.residue.clone();
        let mut k = 0;
        loop {
            let (q, r) = m.div_rem(&p);
            if !r.is_zero() {
                return Valuation::Finite(k);
            }
            m = q;
            k += 1;
        }
    }

    pub fn is_unit(&self) -> bool {
        self.valuation() == 0
    }

    fn check(&self, other: &FixedPoint) -> Result<(), FixedError> {
        if self.p != other.p || self.digits != other.digits {
            return Err(FixedError::ContextMismatch);
        }
        Ok(())
    }

    fn wrap(&self, value: BigInt) -> FixedPoint {
        FixedPoint::new(self.p, self.digits, &value)
    }

    /// Division by a possibly non-unit residue of valuation `k < N`.
    ///
    /// The numerator must be divisible by `p^k`. The quotient is then known
    /// modulo `p^(N-k)`; its top `k` digits are drawn from `src`. The result
    /// `q` always satisfies `q * den = num (mod p^N)`. Returns `q` and `k`.
    pub fn div_shifted(&self, den: &FixedPoint, src: &mut DigitSource) -> Result<(FixedPoint, u32), FixedError> {
        self.check(den)?;
        let k = match den.valuation() {
            Valuation::Infinity => return Err(FixedError::ZeroDivisor),
            Valuation::Finite(k) => k as u32,
        };
        if k == 0 {
            return fixed_arith(ArithOp::Div, self, den).map(|q| (q, 0));
        }
        let num_v = self.valuation();
        if num_v < k as i64 {
            return Err(FixedError::NegativeValuation(num_v.finite().unwrap_or(0) - k as i64));
        }
        let shift = pow_u(self.p, k);
        let low_mod = to_int(&pow_u(self.p, self.digits - k));
        let num = to_int(&(&self.residue / &shift));
        let den_unit = to_int(&(&den.residue / &shift));
        let inv = den_unit.mod_floor(&low_mod).modinv(&low_mod).expect("unit after shift");
        let low = (num * inv).mod_floor(&low_mod);
        let high = to_int(&src.fill(k));
        Ok((self.wrap(low + high * low_mod), k))
    }
}

/// Plain modular arithmetic. Division is only by units.
pub fn fixed_arith(op: ArithOp, x: &FixedPoint, y: &FixedPoint) -> Result<FixedPoint, FixedError> {
    x.check(y)?;
    let (a, b) = (to_int(&x.residue), to_int(&y.residue));
    Ok(match op {
        ArithOp::Add => x.wrap(a + b),
        ArithOp::Sub => x.wrap(a - b),
        ArithOp::Mul => x.wrap(a * b),
        ArithOp::Div => {
            if y.residue.is_zero() {
                return Err(FixedError::ZeroDivisor);
            }
            let m = to_int(&x.modulus());
            let inv = b.modinv(&m).ok_or_else(|| FixedError::NonUnitDivision(y.residue.clone()))?;
            x.wrap(a * inv)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ratio;

    fn fx(p: u64, n: u32, v: i64) -> FixedPoint {
        FixedPoint::new(p, n, &BigInt::from(v))
    }

    #[test]
    fn examples() {
        assert_eq!(fixed_arith(ArithOp::Mul, &fx(2, 6, 5), &fx(2, 6, 13)).unwrap(), fx(2, 6, 1));
        assert_eq!(fixed_arith(ArithOp::Add, &fx(3, 4, 17), &fx(3, 4, 0)).unwrap(), fx(3, 4, 17));
        assert_eq!(
            fixed_arith(ArithOp::Div, &fx(2, 6, 1), &fx(2, 6, 6)),
            Err(FixedError::NonUnitDivision(BigUint::from(6u32)))
        );
        assert_eq!(fixed_arith(ArithOp::Sub, &fx(5, 2, 3), &fx(5, 2, 4)).unwrap(), fx(5, 2, 24));
    }

    #[test]
    fn rational_reduction() {
        let two = PrimeContext::new(2).unwrap();
        // 1/5 = 13 mod 64
        assert_eq!(FixedPoint::from_rational(&ratio(1, 5), &two, 6).unwrap(), fx(2, 6, 13));
        assert_eq!(FixedPoint::from_rational(&ratio(12, 5), &two, 6).unwrap(), fx(2, 6, 12 * 13 % 64));
        assert_eq!(
            FixedPoint::from_rational(&ratio(1, 4), &two, 6),
            Err(FixedError::NegativeValuation(-2))
        );
    }

    #[test]
    fn shifted_division() {
        let mut src = DigitSource::new(3, 5);
        // 18 / 6 at p = 3, N = 4
        let (q, k) = fx(3, 4, 18).div_shifted(&fx(3, 4, 6), &mut src).unwrap();
        assert_eq!(k, 1);
        assert_eq!(q.residue() % 27u32, BigUint::from(3u32));
        assert_eq!(fixed_arith(ArithOp::Mul, &q, &fx(3, 4, 6)).unwrap(), fx(3, 4, 18));
        assert_eq!(fx(3, 4, 4).div_shifted(&fx(3, 4, 6), &mut src), Err(FixedError::NegativeValuation(-1)));
        assert_eq!(fx(3, 4, 4).div_shifted(&fx(3, 4, 81), &mut src), Err(FixedError::ZeroDivisor));
    }

    #[test]
    fn residue_valuation() {
        assert_eq!(fx(2, 8, 48).valuation(), Valuation::Finite(4));
        assert_eq!(fx(2, 8, 256).valuation(), Valuation::Infinity);
        assert!(fx(7, 3, 8).is_unit());
    }
}
