use std::collections::BTreeMap;

use super::*;
use crate::context::{JetContext, Parity};

fn ctx_xy() -> Ctx {
    JetContext::builder()
        .independents(["x", "y"])
        .dependent("u", Parity::Even)
        .parameter_group(["p"], Parity::Odd)
        .parameter_group(["q"], Parity::Odd)
        .scalar("lam1")
        .build()
        .unwrap()
}

fn e(ctx: &Ctx, s: &str) -> DiffExpr {
    parse_expr(ctx, s).unwrap()
}

#[test]
fn like_terms_merge() {
    let ctx = ctx_xy();
    let ux = e(&ctx, "u_x");
    assert_eq!(ux.add(&ux).unwrap(), e(&ctx, "2*u_x"));
    assert_eq!(e(&ctx, "u").mul(&DiffExpr::zero(&ctx)).unwrap(), DiffExpr::zero(&ctx));
    assert_eq!(
        e(&ctx, "(u_x + u)*(u_x - u)"),
        e(&ctx, "u_x^2 - u^2")
    );
}

#[test]
fn total_derivative_leibniz_and_exp() {
    let ctx = ctx_xy();
    let w = e(&ctx, "u_x^2 - u_xx");
    assert_eq!(
        w.total_derivative_named("x").unwrap(),
        e(&ctx, "2*u_x*u_xx - u_xxx")
    );
    assert_eq!(
        e(&ctx, "exp(2*u)").total_derivative_named("x").unwrap(),
        e(&ctx, "2*u_x*exp(2*u)")
    );
    let u = e(&ctx, "u");
    assert_eq!(
        u.total_derivative(0).total_derivative(1),
        u.total_derivative(1).total_derivative(0)
    );
    assert_eq!(u.total_derivative(0).total_derivative(1), e(&ctx, "u_xy"));
}

#[test]
fn substitution() {
    let ctx = ctx_xy();
    let lhs = e(&ctx, "u_xy - exp(2*u)");
    let mut map = BTreeMap::new();
    let uxy = JetVar::new(0, MultiIndex::new(vec![1, 1]));
    map.insert(uxy, e(&ctx, "exp(2*u)"));
    assert!(lhs.substitute(&map).unwrap().is_zero());

    let ux = e(&ctx, "u_x");
    assert_eq!(ux.substitute(&BTreeMap::new()).unwrap(), ux);

    let mut shift = BTreeMap::new();
    shift.insert(JetVar::base(0, 2), e(&ctx, "u + 1"));
    assert_eq!(
        e(&ctx, "u^2").substitute(&shift).unwrap(),
        e(&ctx, "u^2 + 2*u + 1")
    );
}

#[test]
fn evaluation() {
    let ctx = ctx_xy();
    let mut point = Assignment::default();
    point
        .jets
        .insert(JetVar::new(0, MultiIndex::new(vec![1, 0])), rat_int(3));
    assert_eq!(e(&ctx, "u_x^2").eval_at(&point).unwrap(), rat_int(9));
    assert_eq!(DiffExpr::zero(&ctx).eval_at(&point).unwrap(), rat_int(0));

    let mut point = Assignment::default();
    point.jets.insert(JetVar::base(0, 2), rat(1, 2));
    point
        .jets
        .insert(JetVar::new(0, MultiIndex::new(vec![1, 0])), rat_int(4));
    assert_eq!(e(&ctx, "2*u*u_x").eval_at(&point).unwrap(), rat_int(4));

    assert!(matches!(
        e(&ctx, "u_y").eval_at(&point),
        Err(crate::error::Error::Unassigned(_))
    ));
}

#[test]
fn parse_print_round_trip() {
    let ctx = ctx_xy();
    for s in [
        "0",
        "u_x^2 - u_xx",
        "2*u*u_x",
        "1/2 + x",
        "x^2*lam1*u_xy*exp(2*u)",
        "-u + exp(-1/2*u)",
        "(u_x)/(1 + x)",
        "(u)/(1 + 2*x + x^2)/(1 + y)",
    ] {
        let parsed = e(&ctx, s);
        assert_eq!(parsed.to_string(), s, "canonical form of `{s}`");
        assert_eq!(e(&ctx, &parsed.to_string()), parsed);
    }
    // Non-canonical inputs normalize.
    assert_eq!(e(&ctx, "u_yx"), e(&ctx, "u_xy"));
    assert_eq!(e(&ctx, "u - u").to_string(), "0");
}

#[test]
fn parse_errors() {
    let ctx = ctx_xy();
    assert!(parse_expr(&ctx, "v + 1").is_err());
    assert!(parse_expr(&ctx, "u_z").is_err());
    assert!(parse_expr(&ctx, "u^0").is_err());
    assert!(parse_expr(&ctx, "D_x + u").is_err());
    assert!(parse_expr(&ctx, "exp(u + 1)").is_err());
    assert!(parse_expr(&ctx, "1/u").is_err());
    assert!(parse_expr(&ctx, "").is_err());
}

#[test]
fn fractions_reduce_and_differentiate() {
    let ctx = ctx_xy();
    let f = e(&ctx, "(1 + x)");
    let inv = f.try_inverse().unwrap();
    assert_eq!(inv.to_string(), "(1)/(1 + x)");
    assert_eq!(f.mul(&inv).unwrap(), DiffExpr::one(&ctx));

    // (1+x)^2 / (1+x) cancels.
    let sq = f.mul(&f).unwrap();
    assert_eq!(sq.mul(&inv).unwrap(), f);

    // d/dx 1/(1+x) = -1/(1+x)^2.
    let d = inv.total_derivative(0);
    assert_eq!(d.to_string(), "(-1)/(1 + 2*x + x^2)");
    assert_eq!(d, e(&ctx, "-1/(1+x)^2"));

    // Addition over a common denominator: x/(1+x) + 1/(1+x) = 1.
    let x = e(&ctx, "x");
    let sum = x.mul(&inv).unwrap().add(&inv).unwrap();
    assert_eq!(sum, DiffExpr::one(&ctx));
}

#[test]
fn exponential_merging() {
    let ctx = ctx_xy();
    assert_eq!(
        e(&ctx, "exp(2*u)*exp(-2*u)"),
        DiffExpr::one(&ctx)
    );
    assert_eq!(e(&ctx, "exp(u)^3"), e(&ctx, "exp(3*u)"));
}

#[test]
fn context_mismatch_is_an_error() {
    let a = ctx_xy();
    let b = JetContext::builder()
        .independents(["x"])
        .dependent("u", Parity::Even)
        .build()
        .unwrap();
    let ea = e(&a, "u");
    let eb = e(&b, "u");
    assert!(ea.add(&eb).is_err());
    assert!(ea.mul(&eb).is_err());
}

#[test]
fn unknown_direction_is_an_error() {
    let ctx = ctx_xy();
    assert!(e(&ctx, "u").total_derivative_named("z").is_err());
    assert!(e(&ctx, "u").total_derivative_named("x").is_ok());
}

#[test]
fn partial_derivatives_see_exp_atoms() {
    let ctx = ctx_xy();
    let f = e(&ctx, "u*exp(2*u)");
    let du = f.partial(&JetVar::base(0, 2));
    assert_eq!(du, e(&ctx, "exp(2*u) + 2*u*exp(2*u)"));
}
