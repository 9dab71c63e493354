use std::collections::{BTreeMap, HashSet};

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use super::ast::{Affine, Expr, Program, RangeSpec, Rule, VarRef};
use super::lexer::{tokenize, Pos, Tok, Token};
use super::DslError;
use crate::field::ExactRational;

/// Parses `.rec` text into a [`Program`].
pub fn parse(text: &str) -> Result<Program, DslError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, at: 0, refs: Vec::new(), index_idents: Vec::new() };
    let mut program = Program::default();
    while parser.peek() != &Tok::Eof {
        match parser.peek() {
            Tok::Param => {
                parser.bump();
                let (name, _) = parser.ident()?;
                parser.expect(Tok::Eq)?;
                let value = parser.signed_rational()?;
                parser.expect(Tok::Semi)?;
                program.params.push((name, value));
            }
            Tok::Prime => {
                parser.bump();
                let pos = parser.pos();
                let p = parser.signed_int()?;
                if p < 2 {
                    return Err(syntax(pos, format!("prime must be at least 2, got {p}")));
                }
                parser.expect(Tok::Semi)?;
                program.prime = Some(p as u64);
            }
            _ => program.rules.push(parser.rule()?),
        }
    }
    resolve_names(&mut program, &parser.refs)?;
    Ok(program)
}

fn syntax(pos: Pos, message: String) -> DslError {
    DslError::Syntax { line: pos.line, col: pos.col, message }
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    /// Every variable reference in an expression: (name, indexed?, position).
    refs: Vec<(String, bool, Pos)>,
    /// Identifiers seen inside index expressions of the current rule.
    index_idents: Vec<(String, Pos)>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if t.tok != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> DslError {
        syntax(self.pos(), format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, tok: Tok) -> Result<(), DslError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), DslError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let pos = self.pos();
                self.bump();
                Ok((s, pos))
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    fn int(&mut self) -> Result<BigInt, DslError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    fn signed_int(&mut self) -> Result<i64, DslError> {
        let pos = self.pos();
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let n = self.int()?;
        let n = if neg { -n } else { n };
        n.to_i64().ok_or_else(|| syntax(pos, "integer out of range".into()))
    }

    fn signed_rational(&mut self) -> Result<ExactRational, DslError> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let num = self.int()?;
        let den = if *self.peek() == Tok::Slash {
            self.bump();
            let pos = self.pos();
            let d = self.int()?;
            if d.is_zero() {
                return Err(syntax(pos, "zero denominator in rational literal".into()));
            }
            d
        } else {
            BigInt::from(1)
        };
        let value = ExactRational::new(num, den);
        Ok(if neg { -value } else { value })
    }

    fn rule(&mut self) -> Result<Rule, DslError> {
        self.index_idents.clear();
        let target = self.var_ref()?;
        self.expect(Tok::Eq)?;
        let expr = self.expr()?;
        let range = if *self.peek() == Tok::For {
            self.bump();
            let (var, _) = self.ident()?;
            self.expect(Tok::In)?;
            let lo = self.signed_int()?;
            self.expect(Tok::DotDot)?;
            let hi = self.signed_int()?;
            Some(RangeSpec { var, lo, hi })
        } else {
            None
        };
        self.expect(Tok::Semi)?;
        let bound = range.as_ref().map(|r| r.var.as_str());
        if let Some((name, pos)) = self.index_idents.iter().find(|(n, _)| Some(n.as_str()) != bound) {
            return Err(DslError::UnknownIdentifier { name: name.clone(), line: pos.line, col: pos.col });
        }
        Ok(Rule { target, expr, range })
    }

    fn var_ref(&mut self) -> Result<VarRef, DslError> {
        let (name, _) = self.ident()?;
        let mut indices = Vec::new();
        if *self.peek() == Tok::LBracket {
            self.bump();
            indices.push(self.index()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                indices.push(self.index()?);
            }
            self.expect(Tok::RBracket)?;
        }
        Ok(VarRef { name, indices })
    }

    fn index(&mut self) -> Result<Affine, DslError> {
        let mut acc = self.index_term()?;
        loop {
            let sign = match self.peek() {
                Tok::Plus => 1,
                Tok::Minus => -1,
                _ => return Ok(acc),
            };
            self.bump();
            let rhs = self.index_term()?;
            acc = acc.add(&rhs, sign);
        }
    }

    fn index_term(&mut self) -> Result<Affine, DslError> {
        let mut acc = self.index_unary()?;
        while *self.peek() == Tok::Star {
            let pos = self.pos();
            self.bump();
            let rhs = self.index_unary()?;
            acc = if rhs.is_constant() {
                acc.scale(rhs.constant)
            } else if acc.is_constant() {
                rhs.scale(acc.constant)
            } else {
                return Err(DslError::NonAffineIndex { line: pos.line, col: pos.col });
            };
        }
        if matches!(self.peek(), Tok::Slash | Tok::Caret) {
            return Err(DslError::NonAffineIndex { line: self.pos().line, col: self.pos().col });
        }
        Ok(acc)
    }

    fn index_unary(&mut self) -> Result<Affine, DslError> {
        match self.peek().clone() {
            Tok::Minus => {
                self.bump();
                Ok(self.index_unary()?.scale(-1))
            }
            Tok::Int(n) => {
                let pos = self.pos();
                self.bump();
                let n = n.to_i64().ok_or_else(|| syntax(pos, "index out of range".into()))?;
                Ok(Affine::constant(n))
            }
            Tok::Ident(name) => {
                let pos = self.pos();
                self.bump();
                self.index_idents.push((name.clone(), pos));
                Ok(Affine::var(&name))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.index()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            _ => Err(self.unexpected("an index expression")),
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut acc = self.term()?;
        loop {
            let add = match self.peek() {
                Tok::Plus => true,
                Tok::Minus => false,
                _ => return Ok(acc),
            };
            self.bump();
            let rhs = self.term()?;
            acc = if add { Expr::Add(acc.into(), rhs.into()) } else { Expr::Sub(acc.into(), rhs.into()) };
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut acc = self.unary()?;
        loop {
            let mul = match self.peek() {
                Tok::Star => true,
                Tok::Slash => false,
                _ => return Ok(acc),
            };
            self.bump();
            let rhs = self.unary()?;
            acc = if mul { Expr::Mul(acc.into(), rhs.into()) } else { Expr::Div(acc.into(), rhs.into()) };
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(self.unary()?.into()));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, DslError> {
        let mut base = self.atom()?;
        while *self.peek() == Tok::Caret {
            self.bump();
            let pos = self.pos();
            let k = self.int()?;
            let k = k.to_u32().ok_or_else(|| syntax(pos, "exponent out of range".into()))?;
            base = Expr::Pow(base.into(), k);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, DslError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Int(n))
            }
            Tok::Ident(_) => {
                let pos = self.pos();
                let v = self.var_ref()?;
                self.refs.push((v.name.clone(), !v.indices.is_empty(), pos));
                Ok(Expr::Var(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

/// Turns bare references to parameters into `Expr::Param` and rejects
/// names that are neither parameters nor defined by any rule.
fn resolve_names(program: &mut Program, refs: &[(String, bool, Pos)]) -> Result<(), DslError> {
    let params: HashSet<&str> = program.params.iter().map(|(n, _)| n.as_str()).collect();
    let defined: BTreeMap<&str, ()> = program.rules.iter().map(|r| (r.target.name.as_str(), ())).collect();
    if let Some(clash) = program.rules.iter().find(|r| params.contains(r.target.name.as_str())) {
        return Err(DslError::NameClash(clash.target.name.clone()));
    }
    for (name, indexed, pos) in refs {
        let known = defined.contains_key(name.as_str()) || (!indexed && params.contains(name.as_str()));
        if !known {
            return Err(DslError::UnknownIdentifier { name: name.clone(), line: pos.line, col: pos.col });
        }
    }
    let params: HashSet<String> = params.into_iter().map(str::to_string).collect();
    for rule in &mut program.rules {
        resolve_expr(&mut rule.expr, &params);
    }
    Ok(())
}

fn resolve_expr(e: &mut Expr, params: &HashSet<String>) {
    match e {
        Expr::Var(v) if v.indices.is_empty() && params.contains(&v.name) => {
            *e = Expr::Param(v.name.clone());
        }
        Expr::Int(_) | Expr::Param(_) | Expr::Var(_) => {}
        Expr::Neg(a) | Expr::Pow(a, _) => resolve_expr(a, params),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            resolve_expr(a, params);
            resolve_expr(b, params);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_program() {
        let p = parse("x[0]=5; x[1]=-5; x[n]=(x[n-1]-1)/x[n-2] for n in 2..7;").unwrap();
        assert_eq!(p.rules.len(), 3);
        let r = p.rules[2].range.as_ref().unwrap();
        assert_eq!((r.var.as_str(), r.lo, r.hi), ("n", 2, 7));
        assert_eq!(p.rules[1].expr, Expr::Neg(Expr::Int(5.into()).into()));
    }

    #[test]
    fn syntax_error_position() {
        let err = parse("x[0] = ;").unwrap_err();
        assert!(matches!(err, DslError::Syntax { line: 1, col: 8, .. }), "{err:?}");
    }

    #[test]
    fn non_affine_index() {
        let err = parse("x[n] = x[n*n];").unwrap_err();
        assert!(matches!(err, DslError::NonAffineIndex { line: 1, col: 11 }), "{err:?}");
        assert!(matches!(parse("x[n] = 1 for n in 0..2; y[n] = x[n/2] for n in 0..2;"), Err(DslError::NonAffineIndex { .. })));
    }

    #[test]
    fn affine_forms() {
        let p = parse("x[n] = 1 for n in 0..9; y[k] = x[2*(k+1) - k] for k in 0..3;").unwrap();
        let Expr::Var(v) = &p.rules[1].expr else { panic!() };
        assert_eq!(v.indices[0], Affine::var("k").add(&Affine::constant(2), 1));
    }

    #[test]
    fn unknown_identifiers() {
        let err = parse("x[0] = y[1];").unwrap_err();
        assert!(matches!(err, DslError::UnknownIdentifier { ref name, .. } if name == "y"));
        let err = parse("x[n] = 1 for m in 0..3;").unwrap_err();
        assert!(matches!(err, DslError::UnknownIdentifier { ref name, .. } if name == "n"));
        let err = parse("x[0] = c;").unwrap_err();
        assert!(matches!(err, DslError::UnknownIdentifier { ref name, .. } if name == "c"));
    }

    #[test]
    fn params_resolve() {
        let p = parse("param c = -3/4;\nx = c*2;\ny = x + c;").unwrap();
        assert_eq!(p.params[0].1, ExactRational::new((-3).into(), 4.into()));
        assert_eq!(p.rules[1].expr.to_string(), "x + c");
        assert!(matches!(&p.rules[0].expr, Expr::Mul(a, _) if **a == Expr::Param("c".into())));
        assert_eq!(parse("param x = 1; x = 2;").unwrap_err(), DslError::NameClash("x".into()));
    }

    #[test]
    fn precedence() {
        let p = parse("a = 1; y = -a^2 + 3*a/2 - (a - 1);").unwrap();
        let printed = p.rules[1].expr.to_string();
        assert_eq!(printed, "-a^2 + 3*a/2 - (a - 1)");
        let again = parse(&format!("a = 1; y = {printed};")).unwrap();
        assert_eq!(again.rules[1], p.rules[1]);
    }

    #[test]
    fn prime_declaration() {
        assert_eq!(parse("prime 3;\nx = 1;").unwrap().prime, Some(3));
        assert!(matches!(parse("prime 1;"), Err(DslError::Syntax { .. })));
    }
}
