use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::context::Ctx;

use super::unipoly::UniPoly;
use super::{DiffExpr, JetVar, MonKey, Rat};

pub(crate) fn jet_var_name(ctx: &Ctx, v: &JetVar) -> String {
    let mut s = ctx.fibre(v.fibre).name.clone();
    if !v.index.is_zero() {
        s.push('_');
        for (i, &k) in v.index.orders().iter().enumerate() {
            for _ in 0..k {
                s.push_str(ctx.independent_name(i));
            }
        }
    }
    s
}

fn fmt_rat(c: &Rat) -> String {
    c.to_string()
}

fn exp_argument(ctx: &Ctx, fibre: usize, c: &Rat) -> String {
    let name = &ctx.fibre(fibre).name;
    if c.is_one() {
        name.clone()
    } else if (-c).is_one() {
        format!("-{name}")
    } else {
        format!("{}*{}", fmt_rat(c), name)
    }
}

/// Factors of a monomial key in print order, without the coefficient.
fn key_factors(ctx: &Ctx, key: &MonKey) -> Vec<String> {
    let mut parts = Vec::new();
    for (i, &k) in key.base.iter().enumerate() {
        if k == 1 {
            parts.push(ctx.independent_name(i).to_string());
        } else if k > 1 {
            parts.push(format!("{}^{}", ctx.independent_name(i), k));
        }
    }
    for (i, &k) in key.scalars.iter().enumerate() {
        if k == 1 {
            parts.push(ctx.scalars()[i].clone());
        } else if k > 1 {
            parts.push(format!("{}^{}", ctx.scalars()[i], k));
        }
    }
    for (v, k) in &key.vars {
        if *k == 1 {
            parts.push(jet_var_name(ctx, v));
        } else {
            parts.push(format!("{}^{}", jet_var_name(ctx, v), k));
        }
    }
    for (f, c) in &key.exps {
        parts.push(format!("exp({})", exp_argument(ctx, *f, c)));
    }
    parts
}

pub(crate) fn fmt_unipoly(ctx: &Ctx, p: &UniPoly) -> String {
    let name = ctx.independent_name(p.var);
    let mut out = String::new();
    let mut first = true;
    for (exp, c) in p.coeffs().iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let mag = c.abs();
        let negative = c.is_negative();
        if first {
            if negative {
                out.push('-');
            }
            first = false;
        } else if negative {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let var_part = match exp {
            0 => None,
            1 => Some(name.to_string()),
            _ => Some(format!("{name}^{exp}")),
        };
        match var_part {
            None => out.push_str(&fmt_rat(&mag)),
            Some(v) => {
                if mag.is_one() {
                    out.push_str(&v);
                } else {
                    out.push_str(&fmt_rat(&mag));
                    out.push('*');
                    out.push_str(&v);
                }
            }
        }
    }
    if first {
        out.push('0');
    }
    out
}

impl fmt::Display for DiffExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut numerator = String::new();
        for (n, m) in self.terms.iter().enumerate() {
            let mag = m.coeff.abs();
            if n == 0 {
                if m.coeff.is_negative() {
                    numerator.push('-');
                }
            } else if m.coeff.is_negative() {
                numerator.push_str(" - ");
            } else {
                numerator.push_str(" + ");
            }
            let parts = key_factors(&self.ctx, &m.key);
            if parts.is_empty() {
                numerator.push_str(&fmt_rat(&mag));
            } else if mag.is_one() {
                numerator.push_str(&parts.join("*"));
            } else {
                numerator.push_str(&fmt_rat(&mag));
                numerator.push('*');
                numerator.push_str(&parts.join("*"));
            }
        }
        if self.denom.is_empty() {
            write!(f, "{numerator}")
        } else {
            write!(f, "({numerator})")?;
            for d in &self.denom {
                write!(f, "/({})", fmt_unipoly(&self.ctx, d))?;
            }
            Ok(())
        }
    }
}
