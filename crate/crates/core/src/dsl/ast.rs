use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;

use crate::field::ExactRational;

/// A parsed `.rec` program. Ranges are recorded, not yet expanded.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub prime: Option<u64>,
    pub params: Vec<(String, ExactRational)>,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub target: VarRef,
    pub expr: Expr,
    pub range: Option<RangeSpec>,
}

/// Closed, ascending `for var in lo..hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeSpec {
    pub var: String,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarRef {
    pub name: String,
    pub indices: Vec<Affine>,
}

/// `constant + sum(coeff * var)`, zero coefficients never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Affine {
    pub constant: i64,
    pub terms: BTreeMap<String, i64>,
}

impl Affine {
    pub fn constant(c: i64) -> Self {
        Affine { constant: c, terms: BTreeMap::new() }
    }

    pub fn var(name: &str) -> Self {
        Affine { constant: 0, terms: [(name.to_string(), 1)].into() }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(mut self, other: &Affine, sign: i64) -> Affine {
        self.constant += sign * other.constant;
        for (v, c) in &other.terms {
            *self.terms.entry(v.clone()).or_insert(0) += sign * c;
        }
        self.terms.retain(|_, c| *c != 0);
        self
    }

    pub fn scale(mut self, k: i64) -> Affine {
        self.constant *= k;
        for c in self.terms.values_mut() {
            *c *= k;
        }
        self.terms.retain(|_, c| *c != 0);
        self
    }

    /// Value with `var = value`; `None` if another variable occurs.
    pub fn eval(&self, env: Option<(&str, i64)>) -> Option<i64> {
        let mut total = self.constant;
        for (v, c) in &self.terms {
            match env {
                Some((name, value)) if name == v => total += c * value,
                _ => return None,
            }
        }
        Some(total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// Nonnegative integer literal; signs are `Neg` nodes.
    Int(BigInt),
    Param(String),
    Var(VarRef),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Int(_) | Expr::Param(_) | Expr::Var(_) => 5,
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.precedence() < min;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Int(n) => write!(f, "{n}")?,
            Expr::Param(p) => f.write_str(p)?,
            Expr::Var(v) => write!(f, "{v}")?,
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.write(f, 3)?;
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.write(f, 1)?;
                f.write_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                b.write(f, 2)?;
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.write(f, 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                b.write(f, 3)?;
            }
            Expr::Pow(a, k) => {
                a.write(f, 5)?;
                write!(f, "^{k}")?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, 0)
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, &c) in &self.terms {
            let sign = if c < 0 { "-" } else if first { "" } else { "+" };
            f.write_str(sign)?;
            match c.abs() {
                1 => f.write_str(v)?,
                k => write!(f, "{k}*{v}")?,
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, "+{}", self.constant)
        } else if self.constant < 0 {
            write!(f, "{}", self.constant)
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.indices.is_empty() {
            let parts: Vec<String> = self.indices.iter().map(Affine::to_string).collect();
            write!(f, "[{}]", parts.join(","))?;
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.target, self.expr)?;
        if let Some(r) = &self.range {
            write!(f, " for {} in {}..{}", r.var, r.lo, r.hi)?;
        }
        f.write_str(";")
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = self.prime {
            writeln!(f, "prime {p};")?;
        }
        for (name, value) in &self.params {
            writeln!(f, "param {name} = {value};")?;
        }
        for rule in &self.rules {
            writeln!(f, "{rule}")?;
        }
        Ok(())
    }
}
