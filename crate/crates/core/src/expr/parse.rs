use num_bigint::BigInt;
use num_traits::One;

use crate::context::Ctx;
use crate::error::{Error, Result};
use crate::multi_index::MultiIndex;

use super::{DiffExpr, JetVar, Rat};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigInt),
    /// Identifier with optional jet suffix: (`u`, None) or (`u`, Some("xx")).
    Ident(String, Option<String>),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let start = self.pos;
            let c = self.src[self.pos];
            match c {
                b' ' | b'\t' | b'\n' | b'\r' => {
                    self.pos += 1;
                }
                b'+' => {
                    out.push((start, Tok::Plus));
                    self.pos += 1;
                }
                b'-' => {
                    out.push((start, Tok::Minus));
                    self.pos += 1;
                }
                b'*' => {
                    out.push((start, Tok::Star));
                    self.pos += 1;
                }
                b'/' => {
                    out.push((start, Tok::Slash));
                    self.pos += 1;
                }
                b'^' => {
                    out.push((start, Tok::Caret));
                    self.pos += 1;
                }
                b'(' => {
                    out.push((start, Tok::LParen));
                    self.pos += 1;
                }
                b')' => {
                    out.push((start, Tok::RParen));
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    let mut end = self.pos;
                    while end < self.src.len() && self.src[end].is_ascii_digit() {
                        end += 1;
                    }
                    let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                    let n: BigInt = text.parse().map_err(|_| self.error("bad integer"))?;
                    out.push((start, Tok::Num(n)));
                    self.pos = end;
                }
                c if c.is_ascii_alphabetic() => {
                    let mut end = self.pos;
                    while end < self.src.len() && self.src[end].is_ascii_alphanumeric() {
                        end += 1;
                    }
                    let name = std::str::from_utf8(&self.src[self.pos..end]).unwrap().to_string();
                    let mut suffix = None;
                    if end < self.src.len() && self.src[end] == b'_' {
                        let mut send = end + 1;
                        while send < self.src.len() && self.src[send].is_ascii_alphanumeric() {
                            send += 1;
                        }
                        if send == end + 1 {
                            return Err(self.error("dangling `_` after identifier"));
                        }
                        suffix = Some(
                            std::str::from_utf8(&self.src[end + 1..send]).unwrap().to_string(),
                        );
                        end = send;
                    }
                    out.push((start, Tok::Ident(name, suffix)));
                    self.pos = end;
                }
                other => {
                    return Err(self.error(format!("unexpected character `{}`", other as char)));
                }
            }
        }
        Ok(out)
    }
}

struct Parser<'a> {
    ctx: &'a Ctx,
    toks: Vec<(usize, Tok)>,
    at: usize,
    /// Whether `D_x`-style total-derivative tokens are accepted.
    operator_mode: bool,
}

/// One parsed summand of an operator entry: coefficient to the left of `D^σ`.
type OpTerm = (DiffExpr, MultiIndex);

impl<'a> Parser<'a> {
    fn error_at(&self, msg: impl Into<String>) -> Error {
        let pos = self
            .toks
            .get(self.at)
            .map(|(p, _)| *p)
            .unwrap_or_else(|| self.toks.last().map(|(p, _)| p + 1).unwrap_or(0));
        Error::Parse {
            pos,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(_, t)| t.clone());
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            _ => {
                self.at = self.at.saturating_sub(1);
                Err(self.error_at(format!("expected {what}")))
            }
        }
    }

    // expr := ['+'|'-'] opterm (('+'|'-') opterm)*
    fn parse_sum(&mut self) -> Result<Vec<OpTerm>> {
        let mut out: Vec<OpTerm> = Vec::new();
        let mut sign = Rat::one();
        match self.peek() {
            Some(Tok::Minus) => {
                sign = -sign;
                self.at += 1;
            }
            Some(Tok::Plus) => {
                self.at += 1;
            }
            _ => {}
        }
        loop {
            let (coeff, sigma) = self.parse_term()?;
            out.push((coeff.scale(&sign), sigma));
            match self.peek() {
                Some(Tok::Plus) => {
                    sign = Rat::one();
                    self.at += 1;
                }
                Some(Tok::Minus) => {
                    sign = -Rat::one();
                    self.at += 1;
                }
                _ => break,
            }
        }
        Ok(out)
    }

    // term := factor (('*'|'/') factor)*
    fn parse_term(&mut self) -> Result<OpTerm> {
        let mut coeff = DiffExpr::one(self.ctx);
        let mut sigma = MultiIndex::zero(self.ctx.n_independents());
        let mut seen_d = false;
        let mut divide = false;
        loop {
            let pos = self.at;
            match self.parse_factor()? {
                Factor::Expr(e) => {
                    if seen_d {
                        return Err(
                            self.error_at("coefficients must stand to the left of D_ factors")
                        );
                    }
                    if divide {
                        let inv = e.try_inverse().map_err(|err| Error::Parse {
                            pos: self.toks.get(pos).map(|(p, _)| *p).unwrap_or(0),
                            msg: err.to_string(),
                        })?;
                        coeff = coeff.mul(&inv)?;
                    } else {
                        coeff = coeff.mul(&e)?;
                    }
                }
                Factor::Derivative(dir, k) => {
                    if !self.operator_mode {
                        return Err(self.error_at(
                            "total-derivative tokens are not allowed in plain expressions",
                        ));
                    }
                    if divide {
                        return Err(self.error_at("cannot divide by a D_ factor"));
                    }
                    seen_d = true;
                    for _ in 0..k {
                        sigma = sigma.bumped(dir);
                    }
                }
            }
            match self.peek() {
                Some(Tok::Star) => {
                    divide = false;
                    self.at += 1;
                }
                Some(Tok::Slash) => {
                    divide = true;
                    self.at += 1;
                }
                _ => break,
            }
        }
        Ok((coeff, sigma))
    }

    // factor := atom ['^' uint]
    fn parse_factor(&mut self) -> Result<Factor> {
        let atom = self.parse_atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.at += 1;
            let k = match self.next() {
                Some(Tok::Num(n)) => {
                    let k: u32 = n
                        .try_into()
                        .map_err(|_| self.error_at("exponent out of range"))?;
                    if k == 0 {
                        return Err(self.error_at("exponents must be positive integers"));
                    }
                    k
                }
                _ => return Err(self.error_at("expected a positive integer exponent")),
            };
            return Ok(match atom {
                Factor::Expr(e) => Factor::Expr(e.pow(k)),
                Factor::Derivative(dir, j) => Factor::Derivative(dir, j * k),
            });
        }
        Ok(atom)
    }

    fn parse_atom(&mut self) -> Result<Factor> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(Factor::Expr(DiffExpr::rational(
                self.ctx,
                Rat::from_integer(n),
            ))),
            Some(Tok::LParen) => {
                let terms = self.parse_sum()?;
                self.expect(Tok::RParen, "`)`")?;
                let mut acc = DiffExpr::zero(self.ctx);
                for (coeff, sigma) in terms {
                    if !sigma.is_zero() {
                        return Err(self.error_at("D_ factors cannot appear inside parentheses"));
                    }
                    acc = acc.add(&coeff)?;
                }
                Ok(Factor::Expr(acc))
            }
            Some(Tok::Ident(name, suffix)) => self.interpret_ident(name, suffix),
            Some(Tok::Minus) => {
                // Unary minus directly inside a factor position, e.g. `(-u)`.
                let inner = self.parse_factor()?;
                match inner {
                    Factor::Expr(e) => Ok(Factor::Expr(e.neg())),
                    Factor::Derivative(..) => {
                        Err(self.error_at("cannot negate a bare D_ factor"))
                    }
                }
            }
            _ => Err(self.error_at("expected a number, name, or `(`")),
        }
    }

    fn interpret_ident(&mut self, name: String, suffix: Option<String>) -> Result<Factor> {
        if name == "D" {
            let Some(suffix) = suffix else {
                return Err(self.error_at("`D` must be written `D_x` for an independent `x`"));
            };
            if suffix.len() != 1 {
                return Err(self.error_at("`D_` takes a single independent letter"));
            }
            let dir = self
                .ctx
                .independent_index(&suffix)
                .map_err(|_| self.error_at(format!("unknown independent `{suffix}`")))?;
            return Ok(Factor::Derivative(dir, 1));
        }
        if name == "exp" && suffix.is_none() {
            self.expect(Tok::LParen, "`(` after exp")?;
            let terms = self.parse_sum()?;
            self.expect(Tok::RParen, "`)`")?;
            let mut arg = DiffExpr::zero(self.ctx);
            for (coeff, sigma) in terms {
                if !sigma.is_zero() {
                    return Err(self.error_at("D_ factors cannot appear inside exp"));
                }
                arg = arg.add(&coeff)?;
            }
            return Ok(Factor::Expr(self.exp_from_argument(&arg)?));
        }
        match suffix {
            None => {
                if let Some(f) = self.ctx.fibre_index(&name) {
                    return Ok(Factor::Expr(DiffExpr::jet(
                        self.ctx,
                        JetVar::base(f, self.ctx.n_independents()),
                    )));
                }
                if let Ok(i) = self.ctx.independent_index(&name) {
                    return Ok(Factor::Expr(DiffExpr::base_var(self.ctx, i)));
                }
                if let Some(s) = self.ctx.scalar_index(&name) {
                    return Ok(Factor::Expr(DiffExpr::scalar(self.ctx, s)));
                }
                Err(self.error_at(format!("unknown identifier `{name}`")))
            }
            Some(suffix) => {
                let Some(f) = self.ctx.fibre_index(&name) else {
                    return Err(self.error_at(format!("unknown fibre `{name}`")));
                };
                let mut index = MultiIndex::zero(self.ctx.n_independents());
                for ch in suffix.chars() {
                    let dir = self
                        .ctx
                        .independent_index(&ch.to_string())
                        .map_err(|_| self.error_at(format!("unknown independent `{ch}`")))?;
                    index = index.bumped(dir);
                }
                Ok(Factor::Expr(DiffExpr::jet(self.ctx, JetVar::new(f, index))))
            }
        }
    }

    /// Validates and builds `exp(c·u)` from a parsed argument.
    fn exp_from_argument(&self, arg: &DiffExpr) -> Result<DiffExpr> {
        if !arg.is_polynomial() || arg.terms().len() != 1 {
            return Err(self.error_at("exp argument must be c*u for a rational c and a fibre u"));
        }
        let m = &arg.terms()[0];
        let good = m.key.exps.is_empty()
            && m.key.base.iter().all(|&k| k == 0)
            && m.key.scalars.iter().all(|&k| k == 0)
            && m.key.vars.len() == 1
            && m.key.vars[0].1 == 1
            && m.key.vars[0].0.index.is_zero();
        if !good {
            return Err(self.error_at("exp argument must be c*u for a rational c and a fibre u"));
        }
        Ok(DiffExpr::exp_atom(
            self.ctx,
            m.key.vars[0].0.fibre,
            m.coeff.clone(),
        ))
    }
}

enum Factor {
    Expr(DiffExpr),
    Derivative(usize, u32),
}

fn run_parser(ctx: &Ctx, text: &str, operator_mode: bool) -> Result<Vec<OpTerm>> {
    let toks = Lexer::new(text).tokens()?;
    if toks.is_empty() {
        return Err(Error::Parse {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let mut p = Parser {
        ctx,
        toks,
        at: 0,
        operator_mode,
    };
    let terms = p.parse_sum()?;
    if p.at != p.toks.len() {
        return Err(p.error_at("unexpected trailing input"));
    }
    Ok(terms)
}

/// Parses an expression in the kernel grammar.
pub fn parse_expr(ctx: &Ctx, text: &str) -> Result<DiffExpr> {
    let terms = run_parser(ctx, text, false)?;
    let mut acc = DiffExpr::zero(ctx);
    for (coeff, _) in terms {
        acc = acc.add(&coeff)?;
    }
    Ok(acc)
}

/// Parses a total-operator entry: a sum of `coefficient * D_x^k * ...` terms,
/// with coefficients strictly to the left of the derivative factors.
pub fn parse_operator_entry(ctx: &Ctx, text: &str) -> Result<Vec<(DiffExpr, MultiIndex)>> {
    run_parser(ctx, text, true)
}
