use std::collections::{BTreeMap, HashMap, HashSet};

use num_traits::{One, Zero};

use super::ast::{Expr, Program, VarRef};
use super::DslError;
use crate::field::{ExactRational, PrimeContext};
use crate::recurrence::{build_spec, NamedMonomial, NodeDef, NodeId, RecurrenceSpec, SpecError};

pub const DEFAULT_MONOMIAL_CAP: usize = 100_000;

/// Monomial keyed by node id; exponents are positive.
type Monomial = BTreeMap<NodeId, u32>;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Poly(BTreeMap<Monomial, ExactRational>);

impl Poly {
    fn constant(c: ExactRational) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::new(), c);
        }
        Poly(terms)
    }

    fn one() -> Poly {
        Poly::constant(ExactRational::one())
    }

    fn var(id: NodeId) -> Poly {
        Poly([([(id, 1)].into(), ExactRational::one())].into())
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn is_one(&self) -> bool {
        *self == Poly::one()
    }

    fn add(&self, other: &Poly, sign: i32) -> Poly {
        let mut out = self.0.clone();
        for (m, c) in &other.0 {
            let slot = out.entry(m.clone()).or_insert_with(ExactRational::zero);
            if sign < 0 {
                *slot -= c;
            } else {
                *slot += c;
            }
        }
        out.retain(|_, c| !c.is_zero());
        Poly(out)
    }

    fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|(m, c)| (m.clone(), -c)).collect())
    }

    fn mul(&self, other: &Poly, cap: usize, node: &NodeId) -> Result<Poly, DslError> {
        if self.is_one() {
            return Ok(other.clone());
        }
        if other.is_one() {
            return Ok(self.clone());
        }
        if self.0.len().saturating_mul(other.0.len()) > cap.saturating_mul(64) {
            return Err(DslError::MonomialCap { node: node.clone(), cap });
        }
        let mut out: BTreeMap<Monomial, ExactRational> = BTreeMap::new();
        for (ma, ca) in &self.0 {
            for (mb, cb) in &other.0 {
                let mut m = ma.clone();
                for (id, k) in mb {
                    *m.entry(id.clone()).or_insert(0) += k;
                }
                *out.entry(m).or_insert_with(ExactRational::zero) += ca * cb;
            }
        }
        out.retain(|_, c| !c.is_zero());
        if out.len() > cap {
            return Err(DslError::MonomialCap { node: node.clone(), cap });
        }
        Ok(Poly(out))
    }

    fn into_terms(self) -> Vec<(NamedMonomial, ExactRational)> {
        self.0.into_iter().map(|(m, c)| (m.into_iter().collect(), c)).collect()
    }
}

/// `num / den`, never reduced by a gcd.
#[derive(Debug, Clone)]
struct Fraction {
    num: Poly,
    den: Poly,
}

struct Reducer<'a> {
    params: &'a HashMap<String, ExactRational>,
    env: Option<(&'a str, i64)>,
    node: NodeId,
    cap: usize,
    referenced: &'a mut Vec<(NodeId, NodeId)>,
}

impl Reducer<'_> {
    fn node_id(&self, v: &VarRef) -> NodeId {
        let index = v
            .indices
            .iter()
            .map(|a| a.eval(self.env).expect("index variables are checked by the parser"))
            .collect::<Vec<_>>();
        NodeId::new(v.name.clone(), index)
    }

    fn reduce(&mut self, e: &Expr) -> Result<Fraction, DslError> {
        let cap = self.cap;
        Ok(match e {
            Expr::Int(n) => Fraction { num: Poly::constant(ExactRational::from_integer(n.clone())), den: Poly::one() },
            Expr::Param(name) => Fraction { num: Poly::constant(self.params[name].clone()), den: Poly::one() },
            Expr::Var(v) => {
                let id = self.node_id(v);
                self.referenced.push((self.node.clone(), id.clone()));
                Fraction { num: Poly::var(id), den: Poly::one() }
            }
            Expr::Neg(a) => {
                let a = self.reduce(a)?;
                Fraction { num: a.num.neg(), den: a.den }
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let sign = if matches!(e, Expr::Add(..)) { 1 } else { -1 };
                let (a, b) = (self.reduce(a)?, self.reduce(b)?);
                if a.den == b.den {
                    Fraction { num: a.num.add(&b.num, sign), den: a.den }
                } else {
                    let left = a.num.mul(&b.den, cap, &self.node)?;
                    let right = b.num.mul(&a.den, cap, &self.node)?;
                    Fraction { num: left.add(&right, sign), den: a.den.mul(&b.den, cap, &self.node)? }
                }
            }
            Expr::Mul(a, b) => {
                let (a, b) = (self.reduce(a)?, self.reduce(b)?);
                Fraction { num: a.num.mul(&b.num, cap, &self.node)?, den: a.den.mul(&b.den, cap, &self.node)? }
            }
            Expr::Div(a, b) => {
                let (a, b) = (self.reduce(a)?, self.reduce(b)?);
                if b.num.is_zero() {
                    return Err(DslError::ZeroDenominator(self.node.clone()));
                }
                Fraction { num: a.num.mul(&b.den, cap, &self.node)?, den: a.den.mul(&b.num, cap, &self.node)? }
            }
            Expr::Pow(a, k) => {
                let a = self.reduce(a)?;
                let (mut num, mut den) = (Poly::one(), Poly::one());
                for _ in 0..*k {
                    num = num.mul(&a.num, cap, &self.node)?;
                    den = den.mul(&a.den, cap, &self.node)?;
                }
                Fraction { num, den }
            }
        })
    }
}

/// Expands ranges, reduces every rule body to one fraction of expanded
/// polynomials and builds the spec.
pub fn elaborate(program: &Program, ctx: &PrimeContext) -> Result<RecurrenceSpec, DslError> {
    elaborate_with_cap(program, ctx, DEFAULT_MONOMIAL_CAP)
}

pub fn elaborate_with_cap(program: &Program, ctx: &PrimeContext, cap: usize) -> Result<RecurrenceSpec, DslError> {
    let params: HashMap<String, ExactRational> = program.params.iter().cloned().collect();
    let mut defs = Vec::new();
    let mut defined = HashSet::new();
    let mut referenced = Vec::new();
    for rule in &program.rules {
        let points: Vec<Option<(&str, i64)>> = match &rule.range {
            None => vec![None],
            Some(r) if r.lo > r.hi => {
                return Err(DslError::BadRange { var: r.var.clone(), lo: r.lo, hi: r.hi })
            }
            Some(r) => (r.lo..=r.hi).map(|v| Some((r.var.as_str(), v))).collect(),
        };
        for env in points {
            let mut reducer = Reducer {
                params: &params,
                env,
                node: NodeId::new("", vec![]),
                cap,
                referenced: &mut referenced,
            };
            let id = reducer.node_id(&rule.target);
            reducer.node = id.clone();
            let frac = reducer.reduce(&rule.expr)?;
            if frac.den.is_zero() {
                return Err(DslError::ZeroDenominator(id));
            }
            if !defined.insert(id.clone()) {
                return Err(DslError::DuplicateDefinition(id));
            }
            defs.push(NodeDef::from_terms(id, &frac.num.into_terms(), &frac.den.into_terms()));
        }
    }
    if let Some((node, missing)) = referenced.iter().find(|(_, r)| !defined.contains(r)) {
        return Err(DslError::UndefinedNode { node: node.clone(), missing: missing.clone() });
    }
    build_spec(defs, ctx).map_err(|e| match e {
        SpecError::ZeroDenominator(n) => DslError::ZeroDenominator(n),
        other => DslError::Spec(other),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::field::{rat, ratio};
    use crate::recurrence::solve_exact;

    fn two() -> PrimeContext {
        PrimeContext::new(2).unwrap()
    }

    #[test]
    fn counterexample_text() {
        let p = parse("x[0]=5; x[1]=-5; x[n]=(x[n-1]-1)/x[n-2] for n in 2..7;").unwrap();
        let spec = elaborate(&p, &two()).unwrap();
        assert_eq!(spec.len(), 8);
        let g = solve_exact(&spec).unwrap();
        assert_eq!(g.values[7], ratio(663, 140));
    }

    #[test]
    fn division_free_rule() {
        let p = parse("x[0] = 1; x[n] = x[n-1] + 1 for n in 1..3;").unwrap();
        let spec = elaborate(&p, &two()).unwrap();
        let node = spec.node(&NodeId::new("x", vec![2])).unwrap();
        assert_eq!(node.denominator.len(), 1);
        assert!(node.denominator.is_constant());
        assert_eq!(node.denominator.constant_value(), rat(1));
    }

    #[test]
    fn monomial_counts() {
        let p = parse("x[i] = 2 for i in 0..2; y = (x[0]*x[1]-1)/x[2];").unwrap();
        let spec = elaborate(&p, &two()).unwrap();
        let y = spec.node(&NodeId::new("y", vec![])).unwrap();
        assert_eq!((y.numerator.len(), y.denominator.len()), (2, 1));
    }

    #[test]
    fn nested_fractions() {
        let p = parse("a = 3; b = 1/(1 + 1/a) - a^2/2;").unwrap();
        let spec = elaborate(&p, &PrimeContext::new(5).unwrap()).unwrap();
        let g = solve_exact(&spec).unwrap();
        assert_eq!(g.values[1], ratio(3, 4) - ratio(9, 2));
    }

    #[test]
    fn elaboration_errors() {
        let two = two();
        let err = elaborate(&parse("x = 1; y = x/(x - x);").unwrap(), &two).unwrap_err();
        assert_eq!(err, DslError::ZeroDenominator(NodeId::new("y", vec![])));
        let err = elaborate(&parse("x[n] = 1 for n in 0..2; x[1] = 2;").unwrap(), &two).unwrap_err();
        assert_eq!(err, DslError::DuplicateDefinition(NodeId::new("x", vec![1])));
        let err = elaborate(&parse("x[n] = x[n-1] for n in 0..2;").unwrap(), &two).unwrap_err();
        assert!(matches!(err, DslError::UndefinedNode { .. }));
        let err = elaborate(&parse("x[n] = 1 for n in 3..2;").unwrap(), &two).unwrap_err();
        assert!(matches!(err, DslError::BadRange { .. }));
        let err = elaborate(&parse("x = 1; y = (x + 1)^9;").unwrap(), &two);
        assert!(err.is_ok());
        let err = elaborate_with_cap(&parse("x = 1; z = 2; y = (x + z + 1)^9;").unwrap(), &two, 20).unwrap_err();
        assert!(matches!(err, DslError::MonomialCap { .. }));
    }
}
