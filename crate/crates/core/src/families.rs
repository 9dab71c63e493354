//! Built-in recurrence families, as specs and as `.rec` source.

use std::fmt::Write as _;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{rat, valuation, ExactRational, PrimeContext};
use crate::recurrence::{build_spec, NamedMonomial, NodeDef, NodeId, RecurrenceSpec, SpecError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FamilyError {
    #[error("bad arity: {0}")]
    BadArity(String),
    #[error("{name} = {value} has negative valuation")]
    NegativeValuation { name: String, value: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilyRequest {
    /// `x0 = 5, x1 = -5, x_n = (x_{n-1} - 1) / x_{n-2}` for `n = 2..7`.
    Counterexample,
    /// Number frieze on `{(a,b): 0 <= a <= n, 0 <= b <= n-a}`, `n = c.len()`.
    Frieze {
        #[serde(with = "rational_list")]
        c: Vec<ExactRational>,
    },
    /// Somos-k with coefficients `a_1..a_{k/2}`, terms `x_0..x_last`.
    Somos {
        k: usize,
        #[serde(with = "rational_list")]
        a: Vec<ExactRational>,
        last: i64,
    },
    /// `x_{n+2} = (x_{n+1}^2 + c x_{n+1} + d) / x_n`, terms `x_0..x_last`.
    Fz54 {
        #[serde(with = "rational_scalar")]
        c: ExactRational,
        #[serde(with = "rational_scalar")]
        d: ExactRational,
        #[serde(with = "rational_scalar")]
        x0: ExactRational,
        #[serde(with = "rational_scalar")]
        x1: ExactRational,
        last: i64,
    },
    /// Condensation of a square matrix.
    Dodgson { matrix: Vec<Vec<i64>> },
    /// Division-free `x_n = a x_{n-1} x_{n-2} + b x_{n-2} + c`.
    PolynomialDemo { x0: i64, x1: i64, a: i64, b: i64, c: i64, last: i64 },
}

mod rational_list {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::field::{format_rational, parse_rational, ExactRational};

    pub fn serialize<S: Serializer>(v: &[ExactRational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(format_rational))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<ExactRational>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| parse_rational(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

mod rational_scalar {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::field::{format_rational, parse_rational, ExactRational};

    pub fn serialize<S: Serializer>(v: &ExactRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ExactRational, D::Error> {
        parse_rational(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl FamilyRequest {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyRequest::Counterexample => "counterexample",
            FamilyRequest::Frieze { .. } => "frieze",
            FamilyRequest::Somos { .. } => "somos",
            FamilyRequest::Fz54 { .. } => "fz54",
            FamilyRequest::Dodgson { .. } => "dodgson",
            FamilyRequest::PolynomialDemo { .. } => "polynomial-demo",
        }
    }

    /// Somos-k with every coefficient 1.
    pub fn somos_unit(k: usize, last: i64) -> Self {
        FamilyRequest::Somos { k, a: vec![rat(1); k / 2], last }
    }

    pub fn frieze_ints(c: &[i64]) -> Self {
        FamilyRequest::Frieze { c: c.iter().map(|&v| rat(v)).collect() }
    }

    fn validate(&self, ctx: &PrimeContext) -> Result<(), FamilyError> {
        let nonneg = |name: String, v: &ExactRational| {
            if valuation(v, ctx) < 0 {
                Err(FamilyError::NegativeValuation { name, value: v.to_string() })
            } else {
                Ok(())
            }
        };
        match self {
            FamilyRequest::Counterexample => Ok(()),
            FamilyRequest::Frieze { c } => {
                if c.is_empty() {
                    return Err(FamilyError::BadArity("frieze needs n >= 1 values c_0..c_{n-1}".into()));
                }
                c.iter().enumerate().try_for_each(|(b, v)| nonneg(format!("c{b}"), v))
            }
            FamilyRequest::Somos { k, a, last } => {
                if *k < 2 {
                    return Err(FamilyError::BadArity(format!("somos needs k >= 2, got {k}")));
                }
                if a.len() != k / 2 {
                    return Err(FamilyError::BadArity(format!(
                        "somos-{k} takes {} coefficients, got {}",
                        k / 2,
                        a.len()
                    )));
                }
                if *last < 0 {
                    return Err(FamilyError::BadArity("somos needs a nonnegative last index".into()));
                }
                Ok(())
            }
            FamilyRequest::Fz54 { last, .. } => {
                if *last < 1 {
                    return Err(FamilyError::BadArity("fz54 needs last index >= 1".into()));
                }
                Ok(())
            }
            FamilyRequest::Dodgson { matrix } => {
                let n = matrix.len();
                if n == 0 || matrix.iter().any(|row| row.len() != n) {
                    return Err(FamilyError::BadArity("dodgson needs a nonempty square matrix".into()));
                }
                Ok(())
            }
            FamilyRequest::PolynomialDemo { x0, x1, a, b, c, last } => {
                if *last < 1 {
                    return Err(FamilyError::BadArity("polynomial-demo needs last index >= 1".into()));
                }
                [("x0", x0), ("x1", x1), ("a", a), ("b", b), ("c", c)]
                    .into_iter()
                    .try_for_each(|(name, v)| nonneg(name.into(), &rat(*v)))
            }
        }
    }
}

fn x(n: i64) -> NodeId {
    NodeId::new("x", vec![n])
}

fn f(a: i64, b: i64) -> NodeId {
    NodeId::new("f", vec![a, b])
}

fn d(k: i64, i: i64, j: i64) -> NodeId {
    NodeId::new("d", vec![k, i, j])
}

fn mono(parts: &[(NodeId, u32)]) -> NamedMonomial {
    parts.to_vec()
}

fn one() -> ExactRational {
    ExactRational::one()
}

/// Builds the spec for a family directly from its defining formula.
pub fn builtin_family(req: &FamilyRequest, ctx: &PrimeContext) -> Result<RecurrenceSpec, FamilyError> {
    req.validate(ctx)?;
    let mut defs = Vec::new();
    match req {
        FamilyRequest::Counterexample => {
            defs.push(NodeDef::constant(x(0), rat(5)));
            defs.push(NodeDef::constant(x(1), rat(-5)));
            for n in 2..=7 {
                defs.push(NodeDef::from_terms(
                    x(n),
                    &[(mono(&[(x(n - 1), 1)]), one()), (vec![], rat(-1))],
                    &[(mono(&[(x(n - 2), 1)]), one())],
                ));
            }
        }
        FamilyRequest::Frieze { c } => {
            let n = c.len() as i64;
            for b in 0..=n {
                defs.push(NodeDef::constant(f(0, b), one()));
            }
            for (b, cb) in c.iter().enumerate() {
                defs.push(NodeDef::constant(f(1, b as i64), cb.clone()));
            }
            for a in 2..=n {
                for b in 0..=n - a {
                    defs.push(NodeDef::from_terms(
                        f(a, b),
                        &[(mono(&[(f(a - 1, b), 1), (f(a - 1, b + 1), 1)]), one()), (vec![], rat(-1))],
                        &[(mono(&[(f(a - 2, b + 1), 1)]), one())],
                    ));
                }
            }
        }
        FamilyRequest::Somos { k, a, last } => {
            let k = *k as i64;
            for n in 0..=(k - 1).min(*last) {
                defs.push(NodeDef::constant(x(n), one()));
            }
            for m in k..=*last {
                let numerator: Vec<(NamedMonomial, ExactRational)> = a
                    .iter()
                    .enumerate()
                    .map(|(i, ai)| {
                        let i = i as i64 + 1;
                        (mono(&[(x(m - k + i), 1), (x(m - i), 1)]), ai.clone())
                    })
                    .collect();
                defs.push(NodeDef::from_terms(x(m), &numerator, &[(mono(&[(x(m - k), 1)]), one())]));
            }
        }
        FamilyRequest::Fz54 { c, d, x0, x1, last } => {
            defs.push(NodeDef::constant(x(0), x0.clone()));
            defs.push(NodeDef::constant(x(1), x1.clone()));
            for m in 2..=*last {
                defs.push(NodeDef::from_terms(
                    x(m),
                    &[
                        (mono(&[(x(m - 1), 2)]), one()),
                        (mono(&[(x(m - 1), 1)]), c.clone()),
                        (vec![], d.clone()),
                    ],
                    &[(mono(&[(x(m - 2), 1)]), one())],
                ));
            }
        }
        FamilyRequest::Dodgson { matrix } => {
            let n = matrix.len() as i64;
            for i in 0..=n {
                for j in 0..=n {
                    defs.push(NodeDef::constant(d(0, i, j), one()));
                }
            }
            for (i, row) in matrix.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    defs.push(NodeDef::constant(d(1, i as i64, j as i64), rat(v)));
                }
            }
            for k in 2..=n {
                for i in 0..=n - k {
                    for j in 0..=n - k {
                        defs.push(NodeDef::from_terms(
                            d(k, i, j),
                            &[
                                (mono(&[(d(k - 1, i, j), 1), (d(k - 1, i + 1, j + 1), 1)]), one()),
                                (mono(&[(d(k - 1, i, j + 1), 1), (d(k - 1, i + 1, j), 1)]), rat(-1)),
                            ],
                            &[(mono(&[(d(k - 2, i + 1, j + 1), 1)]), one())],
                        ));
                    }
                }
            }
        }
        FamilyRequest::PolynomialDemo { x0, x1, a, b, c, last } => {
            defs.push(NodeDef::constant(x(0), rat(*x0)));
            defs.push(NodeDef::constant(x(1), rat(*x1)));
            for m in 2..=*last {
                defs.push(NodeDef::from_terms(
                    x(m),
                    &[
                        (mono(&[(x(m - 1), 1), (x(m - 2), 1)]), rat(*a)),
                        (mono(&[(x(m - 2), 1)]), rat(*b)),
                        (vec![], rat(*c)),
                    ],
                    &[(vec![], one())],
                ));
            }
        }
    }
    Ok(build_spec(defs, ctx)?)
}

/// The node where a family's "answer" lives: the last term, the top of a
/// frieze or the determinant of a condensation.
pub fn top_node(req: &FamilyRequest) -> NodeId {
    match req {
        FamilyRequest::Counterexample => x(7),
        FamilyRequest::Frieze { c } => f(c.len() as i64, 0),
        FamilyRequest::Somos { last, .. } | FamilyRequest::Fz54 { last, .. } => x(*last),
        FamilyRequest::PolynomialDemo { last, .. } => x(*last),
        FamilyRequest::Dodgson { matrix } => d(matrix.len() as i64, 0, 0),
    }
}

fn lit(v: &ExactRational) -> String {
    if v.denom().is_one() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// `.rec` source for a family. Parsing and elaborating it gives the same
/// spec as [`builtin_family`].
pub fn family_source(req: &FamilyRequest) -> String {
    let mut out = String::new();
    let w = &mut out;
    match req {
        FamilyRequest::Counterexample => {
            writeln!(w, "# x_n = (x_(n-1) - 1) / x_(n-2); nodes 0 and 1 are incomparable").unwrap();
            writeln!(w, "x[0] = 5;\nx[1] = -5;").unwrap();
            writeln!(w, "x[n] = (x[n-1] - 1)/x[n-2] for n in 2..7;").unwrap();
        }
        FamilyRequest::Frieze { c } => {
            let n = c.len();
            writeln!(w, "# number frieze, n = {n}").unwrap();
            for (b, cb) in c.iter().enumerate() {
                writeln!(w, "param c{b} = {};", lit(cb)).unwrap();
            }
            writeln!(w, "f[0,b] = 1 for b in 0..{n};").unwrap();
            for b in 0..n {
                writeln!(w, "f[1,{b}] = c{b};").unwrap();
            }
            for a in 2..=n {
                writeln!(w, "f[{a},b] = (f[{},b]*f[{},b+1] - 1)/f[{},b+1] for b in 0..{};", a - 1, a - 1, a - 2, n - a)
                    .unwrap();
            }
        }
        FamilyRequest::Somos { k, a, last } => {
            writeln!(w, "# Somos-{k}").unwrap();
            for (i, ai) in a.iter().enumerate() {
                writeln!(w, "param a{} = {};", i + 1, lit(ai)).unwrap();
            }
            let k = *k as i64;
            writeln!(w, "x[n] = 1 for n in 0..{};", (k - 1).min(*last)).unwrap();
            if *last >= k {
                let terms: Vec<String> = (1..=a.len() as i64)
                    .map(|i| format!("a{i}*x[n-{}]*x[n-{i}]", k - i))
                    .collect();
                writeln!(w, "x[n] = ({})/x[n-{k}] for n in {k}..{last};", terms.join(" + ")).unwrap();
            }
        }
        FamilyRequest::Fz54 { c, d, x0, x1, last } => {
            writeln!(w, "# x_(n+2) = (x_(n+1)^2 + c x_(n+1) + d) / x_n").unwrap();
            writeln!(w, "param c = {};\nparam d = {};", lit(c), lit(d)).unwrap();
            writeln!(w, "x[0] = {};\nx[1] = {};", lit(x0), lit(x1)).unwrap();
            if *last >= 2 {
                writeln!(w, "x[n] = (x[n-1]^2 + c*x[n-1] + d)/x[n-2] for n in 2..{last};").unwrap();
            }
        }
        FamilyRequest::Dodgson { matrix } => {
            let n = matrix.len();
            writeln!(w, "# condensation of a {n}x{n} matrix").unwrap();
            for i in 0..=n {
                writeln!(w, "d[0,{i},j] = 1 for j in 0..{n};").unwrap();
            }
            for (i, row) in matrix.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    writeln!(w, "d[1,{i},{j}] = {v};").unwrap();
                }
            }
            for k in 2..=n {
                for i in 0..=n - k {
                    writeln!(
                        w,
                        "d[{k},{i},j] = (d[{p},{i},j]*d[{p},{i1},j+1] - d[{p},{i},j+1]*d[{p},{i1},j])/d[{q},{i1},j+1] for j in 0..{};",
                        n - k,
                        p = k - 1,
                        q = k - 2,
                        i1 = i + 1,
                    )
                    .unwrap();
                }
            }
        }
        FamilyRequest::PolynomialDemo { x0, x1, a, b, c, last } => {
            writeln!(w, "# division-free demo").unwrap();
            writeln!(w, "param a = {a};\nparam b = {b};\nparam c = {c};").unwrap();
            writeln!(w, "x[0] = {x0};\nx[1] = {x1};").unwrap();
            if *last >= 2 {
                writeln!(w, "x[n] = a*x[n-1]*x[n-2] + b*x[n-2] + c for n in 2..{last};").unwrap();
            }
        }
    }
    out
}

/// Size of the frieze node set for a given `n`.
pub fn frieze_size(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

/// Is every exact value in the solution of nonnegative valuation?
pub fn all_integral(values: &[ExactRational], ctx: &PrimeContext) -> bool {
    values.iter().all(|v| v.is_zero() || valuation(v, ctx) >= 0)
}
