//! Property tests for the expression kernel: ring axioms, commuting total
//! derivatives, the Leibniz rule, and the printer/parser round trip.

use proptest::prelude::*;

use jetgamma_core::context::{Ctx, JetContext, Parity};
use jetgamma_core::expr::{parse_expr, rat, DiffExpr, JetVar};
use jetgamma_core::MultiIndex;

fn ctx() -> Ctx {
    JetContext::builder()
        .independents(["x", "y"])
        .dependent("u", Parity::Even)
        .dependent("v", Parity::Even)
        .scalar("lam1")
        .build()
        .unwrap()
}

#[derive(Debug, Clone)]
struct MonSpec {
    coeff: (i32, u8),
    vars: Vec<(u8, u8, u8)>, // (fibre, x-order, y-order), power 1 each
    base_x: u8,
    exp_coeff: i8,
}

fn monomial_strategy() -> impl Strategy<Value = MonSpec> {
    (
        ((-20i32..=20), (1u8..=6)),
        prop::collection::vec(((0u8..=1), (0u8..=2), (0u8..=2)), 0..3),
        0u8..=2,
        -2i8..=2,
    )
        .prop_map(|(coeff, vars, base_x, exp_coeff)| MonSpec {
            coeff,
            vars,
            base_x,
            exp_coeff,
        })
}

fn expr_strategy() -> impl Strategy<Value = Vec<MonSpec>> {
    prop::collection::vec(monomial_strategy(), 0..4)
}

fn build(ctx: &Ctx, spec: &[MonSpec]) -> DiffExpr {
    let mut acc = DiffExpr::zero(ctx);
    for m in spec {
        let mut term = DiffExpr::rational(ctx, rat(m.coeff.0 as i64, m.coeff.1 as i64));
        for &(fibre, ox, oy) in &m.vars {
            let v = JetVar::new(
                fibre as usize,
                MultiIndex::new(vec![ox as u32, oy as u32]),
            );
            term = term.mul(&DiffExpr::jet(ctx, v)).unwrap();
        }
        for _ in 0..m.base_x {
            term = term.mul(&DiffExpr::base_var(ctx, 0)).unwrap();
        }
        if m.exp_coeff != 0 {
            term = term
                .mul(&DiffExpr::exp_atom(ctx, 0, rat(m.exp_coeff as i64, 1)))
                .unwrap();
        }
        acc = acc.add(&term).unwrap();
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ring_axioms(a in expr_strategy(), b in expr_strategy(), c in expr_strategy()) {
        let ctx = ctx();
        let (a, b, c) = (build(&ctx, &a), build(&ctx, &b), build(&ctx, &c));
        prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
        prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
        prop_assert_eq!(
            a.add(&b).unwrap().add(&c).unwrap(),
            a.add(&b.add(&c).unwrap()).unwrap()
        );
        prop_assert_eq!(
            a.mul(&b).unwrap().mul(&c).unwrap(),
            a.mul(&b.mul(&c).unwrap()).unwrap()
        );
        prop_assert_eq!(
            a.mul(&b.add(&c).unwrap()).unwrap(),
            a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap()
        );
        // Additive inverse and annihilator.
        prop_assert!(a.sub(&a).unwrap().is_zero());
        prop_assert!(a.mul(&DiffExpr::zero(&ctx)).unwrap().is_zero());
    }

    #[test]
    fn total_derivatives_commute_and_obey_leibniz(
        a in expr_strategy(),
        b in expr_strategy(),
        dir in 0usize..2,
    ) {
        let ctx = ctx();
        let (a, b) = (build(&ctx, &a), build(&ctx, &b));
        prop_assert_eq!(
            a.total_derivative(0).total_derivative(1),
            a.total_derivative(1).total_derivative(0)
        );
        let lhs = a.mul(&b).unwrap().total_derivative(dir);
        let rhs = a
            .total_derivative(dir)
            .mul(&b)
            .unwrap()
            .add(&a.mul(&b.total_derivative(dir)).unwrap())
            .unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn print_parse_round_trip(a in expr_strategy()) {
        let ctx = ctx();
        let a = build(&ctx, &a);
        let printed = a.to_string();
        let reparsed = parse_expr(&ctx, &printed).unwrap();
        prop_assert_eq!(reparsed, a, "printed as `{}`", printed);
    }

    #[test]
    fn substitution_is_a_homomorphism(a in expr_strategy(), b in expr_strategy()) {
        // (a·b)[u → u+1] = a[u → u+1] · b[u → u+1]
        let ctx = ctx();
        let (a, b) = (build(&ctx, &a), build(&ctx, &b));
        let mut map = std::collections::BTreeMap::new();
        map.insert(
            JetVar::new(1, MultiIndex::zero(2)),
            parse_expr(&ctx, "v + 1").unwrap(),
        );
        let lhs = a.mul(&b).unwrap().substitute(&map).unwrap();
        let rhs = a
            .substitute(&map)
            .unwrap()
            .mul(&b.substitute(&map).unwrap())
            .unwrap();
        prop_assert_eq!(lhs, rhs);
    }
}
