//! Exact differential-polynomial kernel.
//!
//! A [`DiffExpr`] is a normal-form sum of monomials in jet variables, base
//! variables, formal scalars and formal exponentials `exp(c·u)`, with exact
//! rational coefficients, divided by an optional product of monic univariate
//! polynomials in the base variables (one per independent). The normal form
//! is unique, so equality is structural.

mod display;
mod parse;
pub mod unipoly;

pub use parse::{parse_expr, parse_operator_entry};
pub use unipoly::UniPoly;

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::context::{same_ctx, Ctx};
use crate::error::{Error, Result};
use crate::multi_index::MultiIndex;

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(n.into(), d.into())
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(n.into())
}

/// A jet coordinate: a dependent fibre together with a derivative multi-index.
/// The zero index denotes the fibre variable itself.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JetVar {
    pub fibre: usize,
    pub index: MultiIndex,
}

impl JetVar {
    pub fn new(fibre: usize, index: MultiIndex) -> Self {
        JetVar { fibre, index }
    }

    pub fn base(fibre: usize, n_independents: usize) -> Self {
        JetVar {
            fibre,
            index: MultiIndex::zero(n_independents),
        }
    }

    pub fn order(&self) -> u32 {
        self.index.order()
    }
}

/// The exponent-free part of a monomial; the term order on expressions is
/// lexicographic on (jet variables, base, scalars) with exponential-carrying
/// monomials sorted last.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MonKey {
    /// Jet-variable powers, sorted by variable, powers ≥ 1.
    pub vars: Vec<(JetVar, u32)>,
    /// Merged exponential atoms `exp(c·u_f)`, at most one per fibre, c ≠ 0.
    pub exps: Vec<(usize, Rat)>,
    /// Base-variable exponents, one entry per independent.
    pub base: Vec<u32>,
    /// Scalar-parameter exponents, one entry per declared scalar.
    pub scalars: Vec<u32>,
}

impl MonKey {
    fn unit(ctx: &Ctx) -> Self {
        MonKey {
            vars: Vec::new(),
            exps: Vec::new(),
            base: vec![0; ctx.n_independents()],
            scalars: vec![0; ctx.scalars().len()],
        }
    }

    fn is_unit(&self) -> bool {
        self.vars.is_empty()
            && self.exps.is_empty()
            && self.base.iter().all(|&k| k == 0)
            && self.scalars.iter().all(|&k| k == 0)
    }

    fn mul(&self, other: &MonKey) -> MonKey {
        let mut vars = Vec::with_capacity(self.vars.len() + other.vars.len());
        let (mut i, mut j) = (0, 0);
        while i < self.vars.len() && j < other.vars.len() {
            match self.vars[i].0.cmp(&other.vars[j].0) {
                std::cmp::Ordering::Less => {
                    vars.push(self.vars[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    vars.push(other.vars[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    vars.push((self.vars[i].0.clone(), self.vars[i].1 + other.vars[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        vars.extend_from_slice(&self.vars[i..]);
        vars.extend_from_slice(&other.vars[j..]);

        let mut exps: Vec<(usize, Rat)> = Vec::with_capacity(self.exps.len() + other.exps.len());
        let (mut i, mut j) = (0, 0);
        while i < self.exps.len() && j < other.exps.len() {
            match self.exps[i].0.cmp(&other.exps[j].0) {
                std::cmp::Ordering::Less => {
                    exps.push(self.exps[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    exps.push(other.exps[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let c = &self.exps[i].1 + &other.exps[j].1;
                    if !c.is_zero() {
                        exps.push((self.exps[i].0, c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        exps.extend_from_slice(&self.exps[i..]);
        exps.extend_from_slice(&other.exps[j..]);

        MonKey {
            vars,
            exps,
            base: self
                .base
                .iter()
                .zip(&other.base)
                .map(|(a, b)| a + b)
                .collect(),
            scalars: self
                .scalars
                .iter()
                .zip(&other.scalars)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    fn var_power(&self, v: &JetVar) -> u32 {
        self.vars
            .iter()
            .find(|(w, _)| w == v)
            .map(|(_, k)| *k)
            .unwrap_or(0)
    }

    /// Total degree in jet variables (all fibres).
    pub fn jet_degree(&self) -> u32 {
        self.vars.iter().map(|(_, k)| *k).sum()
    }
}

impl Ord for MonKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (!self.exps.is_empty())
            .cmp(&!other.exps.is_empty())
            .then_with(|| self.vars.cmp(&other.vars))
            .then_with(|| self.exps.cmp(&other.exps))
            .then_with(|| self.base.cmp(&other.base))
            .then_with(|| self.scalars.cmp(&other.scalars))
    }
}

impl PartialOrd for MonKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial {
    pub coeff: Rat,
    pub key: MonKey,
}

/// A differential function in normal form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffExpr {
    ctx: Ctx,
    terms: Vec<Monomial>,
    denom: Vec<UniPoly>,
}

impl DiffExpr {
    // ---- constructors -------------------------------------------------

    pub fn zero(ctx: &Ctx) -> Self {
        DiffExpr {
            ctx: ctx.clone(),
            terms: Vec::new(),
            denom: Vec::new(),
        }
    }

    pub fn one(ctx: &Ctx) -> Self {
        Self::rational(ctx, Rat::one())
    }

    pub fn rational(ctx: &Ctx, c: Rat) -> Self {
        if c.is_zero() {
            return Self::zero(ctx);
        }
        DiffExpr {
            ctx: ctx.clone(),
            terms: vec![Monomial {
                coeff: c,
                key: MonKey::unit(ctx),
            }],
            denom: Vec::new(),
        }
    }

    pub fn int(ctx: &Ctx, n: i64) -> Self {
        Self::rational(ctx, rat_int(n))
    }

    pub fn jet(ctx: &Ctx, var: JetVar) -> Self {
        debug_assert!(var.fibre < ctx.fibres().len());
        debug_assert_eq!(var.index.len(), ctx.n_independents());
        let mut key = MonKey::unit(ctx);
        key.vars.push((var, 1));
        DiffExpr {
            ctx: ctx.clone(),
            terms: vec![Monomial {
                coeff: Rat::one(),
                key,
            }],
            denom: Vec::new(),
        }
    }

    pub fn base_var(ctx: &Ctx, independent: usize) -> Self {
        let mut key = MonKey::unit(ctx);
        key.base[independent] = 1;
        DiffExpr {
            ctx: ctx.clone(),
            terms: vec![Monomial {
                coeff: Rat::one(),
                key,
            }],
            denom: Vec::new(),
        }
    }

    pub fn scalar(ctx: &Ctx, scalar: usize) -> Self {
        let mut key = MonKey::unit(ctx);
        key.scalars[scalar] = 1;
        DiffExpr {
            ctx: ctx.clone(),
            terms: vec![Monomial {
                coeff: Rat::one(),
                key,
            }],
            denom: Vec::new(),
        }
    }

    pub fn exp_atom(ctx: &Ctx, fibre: usize, coeff: Rat) -> Self {
        if coeff.is_zero() {
            return Self::one(ctx);
        }
        let mut key = MonKey::unit(ctx);
        key.exps.push((fibre, coeff));
        DiffExpr {
            ctx: ctx.clone(),
            terms: vec![Monomial {
                coeff: Rat::one(),
                key,
            }],
            denom: Vec::new(),
        }
    }

    pub(crate) fn from_monomials(ctx: &Ctx, terms: Vec<Monomial>, denom: Vec<UniPoly>) -> Self {
        let mut e = DiffExpr {
            ctx: ctx.clone(),
            terms,
            denom,
        };
        e.normalize();
        e
    }

    // ---- accessors -----------------------------------------------------

    pub fn ctx(&self) -> &Ctx {
        &self.ctx
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn denominators(&self) -> &[UniPoly] {
        &self.denom
    }

    pub fn is_polynomial(&self) -> bool {
        self.denom.is_empty()
    }

    pub fn has_exp(&self) -> bool {
        self.terms.iter().any(|m| !m.key.exps.is_empty())
    }

    /// The constant value, when the expression is one.
    pub fn as_rational(&self) -> Option<Rat> {
        if self.is_zero() {
            return Some(Rat::zero());
        }
        if self.denom.is_empty() && self.terms.len() == 1 && self.terms[0].key.is_unit() {
            return Some(self.terms[0].coeff.clone());
        }
        None
    }

    /// All jet variables occurring as polynomial factors.
    pub fn jet_vars(&self) -> BTreeSet<JetVar> {
        let mut out = BTreeSet::new();
        for m in &self.terms {
            for (v, _) in &m.key.vars {
                out.insert(v.clone());
            }
        }
        out
    }

    /// Jet variables the expression depends on, including the zero-index
    /// variables hidden inside exponential atoms.
    pub fn dependency_vars(&self) -> BTreeSet<JetVar> {
        let mut out = self.jet_vars();
        let n = self.ctx.n_independents();
        for m in &self.terms {
            for (f, _) in &m.key.exps {
                out.insert(JetVar::base(*f, n));
            }
        }
        out
    }

    pub fn exp_atoms(&self) -> BTreeSet<(usize, Rat)> {
        let mut out = BTreeSet::new();
        for m in &self.terms {
            for e in &m.key.exps {
                out.insert(e.clone());
            }
        }
        out
    }

    /// Highest derivative order among the jet variables present.
    pub fn max_order(&self) -> u32 {
        self.jet_vars().iter().map(|v| v.order()).max().unwrap_or(0)
    }

    pub fn depends_on_parameter(&self) -> bool {
        self.dependency_vars()
            .iter()
            .any(|v| self.ctx.is_parameter(v.fibre))
    }

    pub fn uses_base_vars(&self) -> bool {
        !self.denom.is_empty() || self.terms.iter().any(|m| m.key.base.iter().any(|&k| k > 0))
    }

    // ---- arithmetic ----------------------------------------------------

    pub fn add(&self, other: &DiffExpr) -> Result<DiffExpr> {
        same_ctx(&self.ctx, &other.ctx)?;
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        // Per-variable common denominator.
        let mut denom: Vec<UniPoly> = Vec::new();
        let mut left_cof: Vec<UniPoly> = Vec::new();
        let mut right_cof: Vec<UniPoly> = Vec::new();
        let mut vars: BTreeSet<usize> = BTreeSet::new();
        vars.extend(self.denom.iter().map(|d| d.var));
        vars.extend(other.denom.iter().map(|d| d.var));
        for v in vars {
            let a = self.denom.iter().find(|d| d.var == v);
            let b = other.denom.iter().find(|d| d.var == v);
            match (a, b) {
                (Some(a), Some(b)) => {
                    let g = a.gcd(b);
                    let lcm = a.mul(&b.div_exact(&g));
                    left_cof.push(b.div_exact(&g));
                    right_cof.push(a.div_exact(&g));
                    denom.push(lcm);
                }
                (Some(a), None) => {
                    right_cof.push(a.clone());
                    denom.push(a.clone());
                }
                (None, Some(b)) => {
                    left_cof.push(b.clone());
                    denom.push(b.clone());
                }
                (None, None) => unreachable!(),
            }
        }
        let mut terms = mul_terms_by_polys(&self.ctx, &self.terms, &left_cof);
        terms.extend(mul_terms_by_polys(&self.ctx, &other.terms, &right_cof));
        Ok(DiffExpr::from_monomials(&self.ctx, terms, denom))
    }

    pub fn sub(&self, other: &DiffExpr) -> Result<DiffExpr> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> DiffExpr {
        let terms = self
            .terms
            .iter()
            .map(|m| Monomial {
                coeff: -m.coeff.clone(),
                key: m.key.clone(),
            })
            .collect();
        DiffExpr {
            ctx: self.ctx.clone(),
            terms,
            denom: self.denom.clone(),
        }
    }

    pub fn scale(&self, c: &Rat) -> DiffExpr {
        if c.is_zero() {
            return DiffExpr::zero(&self.ctx);
        }
        let terms = self
            .terms
            .iter()
            .map(|m| Monomial {
                coeff: &m.coeff * c,
                key: m.key.clone(),
            })
            .collect();
        DiffExpr {
            ctx: self.ctx.clone(),
            terms,
            denom: self.denom.clone(),
        }
    }

    pub fn mul(&self, other: &DiffExpr) -> Result<DiffExpr> {
        same_ctx(&self.ctx, &other.ctx)?;
        if self.is_zero() || other.is_zero() {
            return Ok(DiffExpr::zero(&self.ctx));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(Monomial {
                    coeff: &a.coeff * &b.coeff,
                    key: a.key.mul(&b.key),
                });
            }
        }
        let mut denom = self.denom.clone();
        for d in &other.denom {
            if let Some(existing) = denom.iter_mut().find(|e| e.var == d.var) {
                *existing = existing.mul(d);
            } else {
                denom.push(d.clone());
            }
        }
        Ok(DiffExpr::from_monomials(&self.ctx, terms, denom))
    }

    pub fn pow(&self, k: u32) -> DiffExpr {
        let mut acc = DiffExpr::one(&self.ctx);
        for _ in 0..k {
            acc = acc.mul(self).expect("same context");
        }
        acc
    }

    /// Multiplicative inverse, defined when the expression is a nonzero
    /// rational multiple of a univariate base polynomial (possibly divided by
    /// other base polynomials).
    pub fn try_inverse(&self) -> Result<DiffExpr> {
        if self.is_zero() {
            return Err(Error::NotInvertible("zero".into()));
        }
        // Numerator must be free of jets, exps and scalars, and univariate
        // in at most one base variable.
        let mut active: Option<usize> = None;
        for m in &self.terms {
            if !m.key.vars.is_empty() || !m.key.exps.is_empty() {
                return Err(Error::NotInvertible(format!("{self}")));
            }
            if m.key.scalars.iter().any(|&k| k > 0) {
                return Err(Error::NotInvertible(format!("{self}")));
            }
            for (i, &k) in m.key.base.iter().enumerate() {
                if k > 0 {
                    match active {
                        None => active = Some(i),
                        Some(j) if j == i => {}
                        Some(_) => {
                            return Err(Error::NotInvertible(format!(
                                "{self} mixes base variables"
                            )))
                        }
                    }
                }
            }
        }
        // Old denominator becomes the new numerator.
        let mut numer = DiffExpr::one(&self.ctx);
        for d in &self.denom {
            numer = numer.mul(&unipoly_to_expr(&self.ctx, d))?;
        }
        match active {
            None => {
                let c = self.terms[0].coeff.clone();
                Ok(numer.scale(&(Rat::one() / c)))
            }
            Some(var) => {
                let mut poly = self.numerator_as_unipoly(var);
                let lead = poly.make_monic();
                if poly.degree() == 0 {
                    return Ok(numer.scale(&(Rat::one() / lead)));
                }
                let mut result = numer.scale(&(Rat::one() / lead));
                result = result.div_by_unipoly(&poly);
                Ok(result)
            }
        }
    }

    fn numerator_as_unipoly(&self, var: usize) -> UniPoly {
        let deg = self
            .terms
            .iter()
            .map(|m| m.key.base[var] as usize)
            .max()
            .unwrap_or(0);
        let mut coeffs = vec![Rat::zero(); deg + 1];
        for m in &self.terms {
            coeffs[m.key.base[var] as usize] += &m.coeff;
        }
        UniPoly::new(var, coeffs)
    }

    fn div_by_unipoly(&self, monic: &UniPoly) -> DiffExpr {
        let mut denom = self.denom.clone();
        if let Some(existing) = denom.iter_mut().find(|e| e.var == monic.var) {
            *existing = existing.mul(monic);
        } else {
            denom.push(monic.clone());
        }
        DiffExpr::from_monomials(&self.ctx, self.terms.clone(), denom)
    }

    // ---- calculus ------------------------------------------------------

    /// Total derivative in the given independent direction.
    pub fn total_derivative(&self, dir: usize) -> DiffExpr {
        assert!(dir < self.ctx.n_independents(), "unknown direction");
        let mut terms = Vec::new();
        for m in &self.terms {
            derive_monomial(&self.ctx, m, dir, &mut terms);
        }
        let numerator = DiffExpr::from_monomials(&self.ctx, terms, self.denom.clone());
        // Quotient rule for the denominator factor in this direction.
        let Some(d) = self.denom.iter().find(|d| d.var == dir) else {
            return numerator;
        };
        let dprime = d.derivative();
        if dprime.is_zero() {
            return numerator;
        }
        let correction_terms = mul_terms_by_polys(
            &self.ctx,
            &self.terms,
            std::slice::from_ref(&dprime),
        );
        let mut denom = self.denom.clone();
        for e in denom.iter_mut() {
            if e.var == dir {
                *e = e.mul(d);
            }
        }
        let correction = DiffExpr::from_monomials(
            &self.ctx,
            correction_terms.iter().map(|m| Monomial { coeff: -m.coeff.clone(), key: m.key.clone() }).collect(),
            denom,
        );
        numerator.add(&correction).expect("same context")
    }

    pub fn total_derivative_named(&self, dir: &str) -> Result<DiffExpr> {
        let i = self.ctx.independent_index(dir)?;
        Ok(self.total_derivative(i))
    }

    /// Iterated total derivative `D^σ`.
    pub fn total_derivative_multi(&self, sigma: &MultiIndex) -> DiffExpr {
        let mut acc = self.clone();
        for dir in 0..sigma.len() {
            for _ in 0..sigma[dir] {
                acc = acc.total_derivative(dir);
            }
        }
        acc
    }

    /// Partial derivative with respect to a jet variable, including the chain
    /// rule through exponential atoms of the same fibre.
    pub fn partial(&self, v: &JetVar) -> DiffExpr {
        let mut terms = Vec::new();
        for m in &self.terms {
            let k = m.key.var_power(v);
            if k > 0 {
                let mut key = m.key.clone();
                let pos = key.vars.iter().position(|(w, _)| w == v).unwrap();
                if k == 1 {
                    key.vars.remove(pos);
                } else {
                    key.vars[pos].1 -= 1;
                }
                terms.push(Monomial {
                    coeff: &m.coeff * rat_int(k as i64),
                    key,
                });
            }
            if v.index.is_zero() {
                if let Some((_, c)) = m.key.exps.iter().find(|(f, _)| *f == v.fibre) {
                    terms.push(Monomial {
                        coeff: &m.coeff * c,
                        key: m.key.clone(),
                    });
                }
            }
        }
        DiffExpr::from_monomials(&self.ctx, terms, self.denom.clone())
    }

    /// Simultaneous substitution of jet variables, followed by normalization.
    pub fn substitute(&self, assignment: &BTreeMap<JetVar, DiffExpr>) -> Result<DiffExpr> {
        for val in assignment.values() {
            same_ctx(&self.ctx, val.ctx())?;
        }
        if assignment.is_empty() {
            return Ok(self.clone());
        }
        let mut acc = DiffExpr::zero(&self.ctx);
        for m in &self.terms {
            let mut factor = DiffExpr::rational(&self.ctx, m.coeff.clone());
            let mut kept = MonKey::unit(&self.ctx);
            kept.base = m.key.base.clone();
            kept.scalars = m.key.scalars.clone();
            for (v, k) in &m.key.vars {
                match assignment.get(v) {
                    Some(value) => factor = factor.mul(&value.pow(*k))?,
                    None => kept.vars.push((v.clone(), *k)),
                }
            }
            for (f, c) in &m.key.exps {
                let zero_var = JetVar::base(*f, self.ctx.n_independents());
                match assignment.get(&zero_var) {
                    Some(value) => {
                        let rewritten = exp_of_linear(&self.ctx, value, c)?;
                        factor = factor.mul(&rewritten)?;
                    }
                    None => kept.exps.push((*f, c.clone())),
                }
            }
            let kept_expr = DiffExpr {
                ctx: self.ctx.clone(),
                terms: vec![Monomial {
                    coeff: Rat::one(),
                    key: kept,
                }],
                denom: Vec::new(),
            };
            acc = acc.add(&factor.mul(&kept_expr)?)?;
        }
        // Reapply the denominator.
        let mut out = acc;
        for d in &self.denom {
            out = out.div_by_unipoly(d);
        }
        Ok(out)
    }

    /// Exact rational evaluation at a point.
    pub fn eval_at(&self, point: &Assignment) -> Result<Rat> {
        let mut total = Rat::zero();
        for m in &self.terms {
            let mut v = m.coeff.clone();
            for (i, &k) in m.key.base.iter().enumerate() {
                if k > 0 {
                    let x = point.base.get(&i).ok_or_else(|| {
                        Error::Unassigned(self.ctx.independent_name(i).to_string())
                    })?;
                    v *= pow_rat(x, k);
                }
            }
            for (i, &k) in m.key.scalars.iter().enumerate() {
                if k > 0 {
                    let x = point
                        .scalars
                        .get(&i)
                        .ok_or_else(|| Error::Unassigned(self.ctx.scalars()[i].clone()))?;
                    v *= pow_rat(x, k);
                }
            }
            for (var, k) in &m.key.vars {
                let x = point
                    .jets
                    .get(var)
                    .ok_or_else(|| Error::Unassigned(display::jet_var_name(&self.ctx, var)))?;
                v *= pow_rat(x, *k);
            }
            for (f, c) in &m.key.exps {
                let x = point.exps.get(&(*f, c.clone())).ok_or_else(|| {
                    Error::Unassigned(format!("exp atom on `{}`", self.ctx.fibre(*f).name))
                })?;
                v *= x;
            }
            total += v;
        }
        for d in &self.denom {
            let x = point
                .base
                .get(&d.var)
                .ok_or_else(|| Error::Unassigned(self.ctx.independent_name(d.var).to_string()))?;
            let dv = d.eval(x);
            if dv.is_zero() {
                return Err(Error::DivisionByZero);
            }
            total /= dv;
        }
        Ok(total)
    }

    // ---- normal form ---------------------------------------------------

    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| a.key.cmp(&b.key));
        let mut merged: Vec<Monomial> = Vec::with_capacity(self.terms.len());
        for m in self.terms.drain(..) {
            if let Some(last) = merged.last_mut() {
                if last.key == m.key {
                    last.coeff += m.coeff;
                    continue;
                }
            }
            merged.push(m);
        }
        merged.retain(|m| !m.coeff.is_zero());
        self.terms = merged;
        if self.terms.is_empty() {
            self.denom.clear();
            return;
        }
        self.denom.retain(|d| !d.is_one());
        self.denom.sort_by_key(|d| d.var);
        self.reduce_fraction();
    }

    fn reduce_fraction(&mut self) {
        let mut v = 0;
        while v < self.denom.len() {
            let var = self.denom[v].var;
            let (groups, keys) = self.group_by_all_but_base(var);
            let mut g = self.denom[v].clone();
            for poly in &groups {
                g = g.gcd(poly);
                if g.degree() == 0 {
                    break;
                }
            }
            if g.degree() > 0 {
                let mut terms = Vec::new();
                for (poly, key) in groups.iter().zip(&keys) {
                    let q = poly.div_exact(&g);
                    for (exp, c) in q.coeffs().iter().enumerate() {
                        if c.is_zero() {
                            continue;
                        }
                        let mut k = key.clone();
                        k.base[var] = exp as u32;
                        terms.push(Monomial {
                            coeff: c.clone(),
                            key: k,
                        });
                    }
                }
                terms.sort_by(|a, b| a.key.cmp(&b.key));
                self.terms = terms;
                self.denom[v] = self.denom[v].div_exact(&g);
            }
            if self.denom[v].is_one() || self.denom[v].degree() == 0 {
                self.denom.remove(v);
            } else {
                v += 1;
            }
        }
    }

    /// Groups the numerator by the monomial key with the `var` base exponent
    /// removed, yielding one univariate polynomial per group.
    fn group_by_all_but_base(&self, var: usize) -> (Vec<UniPoly>, Vec<MonKey>) {
        let mut map: BTreeMap<MonKey, Vec<(usize, Rat)>> = BTreeMap::new();
        for m in &self.terms {
            let mut key = m.key.clone();
            let exp = key.base[var] as usize;
            key.base[var] = 0;
            map.entry(key).or_default().push((exp, m.coeff.clone()));
        }
        let mut polys = Vec::with_capacity(map.len());
        let mut keys = Vec::with_capacity(map.len());
        for (key, pairs) in map {
            let deg = pairs.iter().map(|(e, _)| *e).max().unwrap_or(0);
            let mut coeffs = vec![Rat::zero(); deg + 1];
            for (e, c) in pairs {
                coeffs[e] += c;
            }
            polys.push(UniPoly::new(var, coeffs));
            keys.push(key);
        }
        (polys, keys)
    }
}

/// Point for exact evaluation: values for jet variables, base variables,
/// scalars, and formal exponential atoms.
#[derive(Debug, Clone, Default)]
pub struct Assignment {
    pub jets: BTreeMap<JetVar, Rat>,
    pub base: BTreeMap<usize, Rat>,
    pub scalars: BTreeMap<usize, Rat>,
    pub exps: BTreeMap<(usize, Rat), Rat>,
}

fn pow_rat(x: &Rat, k: u32) -> Rat {
    let mut acc = Rat::one();
    for _ in 0..k {
        acc *= x;
    }
    acc
}

/// Rewrites `exp(c·u_f)` under a substitution `u_f → value`; only defined when
/// `value` is a rational-linear combination of zero-index fibre variables.
fn exp_of_linear(ctx: &Ctx, value: &DiffExpr, c: &Rat) -> Result<DiffExpr> {
    if !value.is_polynomial() {
        return Err(Error::ExpSubstitution(format!("{value}")));
    }
    let mut out = DiffExpr::one(ctx);
    for m in value.terms() {
        let linear = m.key.exps.is_empty()
            && m.key.base.iter().all(|&k| k == 0)
            && m.key.scalars.iter().all(|&k| k == 0)
            && m.key.vars.len() == 1
            && m.key.vars[0].1 == 1
            && m.key.vars[0].0.index.is_zero();
        if !linear {
            return Err(Error::ExpSubstitution(format!("{value}")));
        }
        let fibre = m.key.vars[0].0.fibre;
        out = out.mul(&DiffExpr::exp_atom(ctx, fibre, c * &m.coeff))?;
    }
    Ok(out)
}

fn derive_monomial(ctx: &Ctx, m: &Monomial, dir: usize, out: &mut Vec<Monomial>) {
    // Base-variable factor.
    if m.key.base[dir] > 0 {
        let mut key = m.key.clone();
        key.base[dir] -= 1;
        out.push(Monomial {
            coeff: &m.coeff * rat_int(m.key.base[dir] as i64),
            key,
        });
    }
    // Jet-variable factors: power rule plus index shift.
    for (pos, (v, k)) in m.key.vars.iter().enumerate() {
        let mut key = m.key.clone();
        if *k == 1 {
            key.vars.remove(pos);
        } else {
            key.vars[pos].1 -= 1;
        }
        let bumped = JetVar::new(v.fibre, v.index.bumped(dir));
        let mut bump_key = MonKey::unit(ctx);
        bump_key.vars.push((bumped, 1));
        key = key.mul(&bump_key);
        out.push(Monomial {
            coeff: &m.coeff * rat_int(*k as i64),
            key,
        });
    }
    // Exponential atoms: D(exp(c·u)) = c·u_dir·exp(c·u).
    for (f, c) in &m.key.exps {
        let bumped = JetVar::new(*f, MultiIndex::zero(ctx.n_independents()).bumped(dir));
        let mut bump_key = MonKey::unit(ctx);
        bump_key.vars.push((bumped, 1));
        out.push(Monomial {
            coeff: &m.coeff * c,
            key: m.key.mul(&bump_key),
        });
    }
}

fn mul_terms_by_polys(ctx: &Ctx, terms: &[Monomial], polys: &[UniPoly]) -> Vec<Monomial> {
    let mut acc: Vec<Monomial> = terms.to_vec();
    for p in polys {
        let mut next = Vec::with_capacity(acc.len() * (p.degree() + 1));
        for m in &acc {
            for (exp, c) in p.coeffs().iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let mut key = m.key.clone();
                key.base[p.var] += exp as u32;
                next.push(Monomial {
                    coeff: &m.coeff * c,
                    key,
                });
            }
        }
        acc = next;
    }
    let _ = ctx;
    acc
}

pub(crate) fn unipoly_to_expr(ctx: &Ctx, p: &UniPoly) -> DiffExpr {
    let mut terms = Vec::new();
    for (exp, c) in p.coeffs().iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let mut key = MonKey::unit(ctx);
        key.base[p.var] = exp as u32;
        terms.push(Monomial {
            coeff: c.clone(),
            key,
        });
    }
    DiffExpr::from_monomials(ctx, terms, Vec::new())
}

// Operator sugar for internal use; panics on context mismatch.
impl std::ops::Add for &DiffExpr {
    type Output = DiffExpr;
    fn add(self, rhs: &DiffExpr) -> DiffExpr {
        DiffExpr::add(self, rhs).expect("context mismatch")
    }
}

impl std::ops::Sub for &DiffExpr {
    type Output = DiffExpr;
    fn sub(self, rhs: &DiffExpr) -> DiffExpr {
        DiffExpr::sub(self, rhs).expect("context mismatch")
    }
}

impl std::ops::Mul for &DiffExpr {
    type Output = DiffExpr;
    fn mul(self, rhs: &DiffExpr) -> DiffExpr {
        DiffExpr::mul(self, rhs).expect("context mismatch")
    }
}

impl std::ops::Neg for &DiffExpr {
    type Output = DiffExpr;
    fn neg(self) -> DiffExpr {
        DiffExpr::neg(self)
    }
}

#[cfg(test)]
mod tests;
