//! Acceptance suite. One test per criterion; each prints a single
//! `criterion N: PASS — …` line and asserts the stated exact checks and
//! time bounds.
//!
//!  1. Liouville Christoffel symbols reproduced exactly (< 60 s).
//!  2. Liouville image commutation vanishes on shell (< 10 s).
//!  3. The operators generate higher symmetries on shell.
//!  4. KdV chain to H_3 with a fully verified certificate (< 120 s).
//!  5. Constructive image inclusion im A₂ ⊂ im A₁ on the hierarchy.
//!  6. Unrestricted KdV pair not strong compatible up to order 3 (< 120 s).
//!  7. λ-combination bracket is λ-linear, exactly.
//!  8. Transformation law matches direct extraction modulo gauge.
//!  9. Kernel property suites, ≥ 100 seeded cases each (< 60 s total).
//! 10. Functional Jacobi identity for both structures on a seeded suite.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use jetgamma_cli::scenario::{Scenario, Transform};
use jetgamma_core::context::{Ctx, Parity, Space};
use jetgamma_core::expr::{parse_expr, rat_int, DiffExpr, JetVar};
use jetgamma_core::gamma::{
    self, extract_gamma, families_equivalent, transform_gamma, AnsatzSpec, BiDiffOperator,
    BiTerm, Compatibility, SpotRng,
};
use jetgamma_core::jetcalc::{
    commutator, euler_operator, evolutionary, homotopy_inverse, is_total_divergence,
    linearization, reduce_on_shell, reduce_section_on_shell, Functional, Section,
};
use jetgamma_core::magri::{jacobi_functional_check, verify_hierarchy, HierarchyState};
use jetgamma_core::operators::{invert_dx_on_image, OperatorTuple, TotalOperator};
use jetgamma_core::MultiIndex;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("bundled scenario loads")
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_jetgamma"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

fn expected_liouville_family(ctx: &Ctx) -> BTreeMap<(usize, usize, usize), BiDiffOperator> {
    let bd = |terms: &[(i64, [u32; 2], [u32; 2])]| {
        BiDiffOperator::new(
            ctx,
            1,
            terms
                .iter()
                .map(|(c, s, t)| BiTerm {
                    out: 0,
                    p_comp: 0,
                    q_comp: 0,
                    sigma: MultiIndex::new(s.to_vec()),
                    tau: MultiIndex::new(t.to_vec()),
                    coeff: DiffExpr::int(ctx, *c),
                })
                .collect(),
        )
        .unwrap()
    };
    let mut out = BTreeMap::new();
    out.insert((0, 0, 0), bd(&[(1, [1, 0], [0, 0]), (-1, [0, 0], [1, 0])])); // D_x⊗1 − 1⊗D_x
    out.insert((0, 0, 1), bd(&[]));
    out.insert((1, 1, 1), bd(&[(1, [0, 1], [0, 0]), (-1, [0, 0], [0, 1])])); // D_y⊗1 − 1⊗D_y
    out.insert((1, 1, 0), bd(&[]));
    out.insert((0, 1, 0), bd(&[(1, [0, 1], [0, 0])])); // D_y⊗1
    out.insert((0, 1, 1), bd(&[(-1, [0, 0], [1, 0])])); // −1⊗D_x
    out.insert((1, 0, 0), bd(&[(-1, [0, 0], [0, 1])])); // −1⊗D_y
    out.insert((1, 0, 1), bd(&[(1, [1, 0], [0, 0])])); // D_x⊗1
    out
}

#[test]
fn criterion_01_liouville_gamma_reproduction() {
    let started = Instant::now();
    let liouville = scenario_path("liouville.toml");
    let (code, out) = cli(&[
        "extract-gamma",
        liouville.to_str().unwrap(),
        "--on-shell",
        "--json",
    ]);
    assert_eq!(code, 0, "extract-gamma must succeed on the Liouville scenario");
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["verdict"]["status"], "compatible");

    let scenario = load("liouville.toml");
    let family = gamma::family_from_json(&scenario.ctx, &doc["family"]).unwrap();
    let expected = expected_liouville_family(&scenario.ctx);
    for (&(i, j, k), want) in &expected {
        assert_eq!(
            family.gamma(i, j, k),
            want,
            "minimal representative of Gamma[{i},{j}]^{k}"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!(
        "criterion 1: PASS — the six Liouville Christoffel symbols are reproduced exactly \
         as minimal representatives ({elapsed:?})"
    );
}

#[test]
fn criterion_02_liouville_commutation() {
    let started = Instant::now();
    let scenario = load("liouville.toml");
    let tuple = scenario
        .tuple(&["box".into(), "boxbar".into()])
        .unwrap();
    let full_eq = scenario.full_equation().unwrap().expect("equation present");
    let c = jetgamma_core::image_commutator_section(tuple.op(0), tuple.op(1)).unwrap();
    assert!(!c.is_zero(), "the commutator is nonzero off shell");
    let reduced = reduce_section_on_shell(&c, &full_eq).unwrap();
    assert!(reduced.is_zero(), "[im box, im boxbar] ≐ 0 on the equation");
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!(
        "criterion 2: PASS — image commutator of (box, boxbar) reduces to 0 on shell ({elapsed:?})"
    );
}

#[test]
fn criterion_03_liouville_symmetry_generation() {
    let scenario = load("liouville.toml");
    let ctx = &scenario.ctx;
    let full_eq = scenario.full_equation().unwrap().unwrap();
    let lhs = parse_expr(ctx, "u_xy - exp(2*u)").unwrap();
    for name in ["box", "boxbar"] {
        let op = scenario.operator(name).unwrap();
        let group = if name == "box" { 0 } else { 1 };
        let arg = Section::parameter(ctx, group).unwrap();
        let phi = op.apply(&arg).unwrap();
        let rate = evolutionary(&phi, &lhs).unwrap();
        let reduced = reduce_on_shell(&rate, &full_eq).unwrap();
        assert!(
            reduced.is_zero(),
            "E_{{{name}(arg)}}(u_xy - exp(2u)) ≐ 0 on shell"
        );
    }
    println!(
        "criterion 3: PASS — box(p) and boxbar(q) are higher symmetries of the equation on shell"
    );
}

#[test]
fn criterion_04_kdv_magri_chain() {
    let started = Instant::now();
    let kdv = scenario_path("kdv.toml");
    let (code, out) = cli(&["magri", kdv.to_str().unwrap(), "--steps", "3", "--json"]);
    assert_eq!(code, 0, "magri must succeed with a fully green certificate");
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(doc["seed_is_casimir"].as_bool().unwrap());
    let levels = doc["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 4);
    assert_eq!(levels[0]["density"], "u");
    assert_eq!(levels[1]["covector"], "u");
    assert_eq!(levels[2]["covector"], "3/2*u^2 - 1/2*u_xx");
    let checks = doc["certificate"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["check"]
        .as_str()
        .unwrap()
        .starts_with("recursion")));
    assert!(
        checks.iter().all(|c| c["passed"].as_bool().unwrap()),
        "all certificate checks pass"
    );
    assert!(doc["all_passed"].as_bool().unwrap());
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!(
        "criterion 4: PASS — magri --steps 3 builds H_0..H_3 with every recursion, \
         commutation and conservation check green ({elapsed:?})"
    );
}

#[test]
fn criterion_05_kdv_image_inclusion() {
    let scenario = load("kdv.toml");
    let a1 = scenario.operator("A1").unwrap().clone();
    let a2 = scenario.operator("A2").unwrap().clone();
    let mut state = HierarchyState::seed(a1.clone(), a2.clone(), Functional::new(
        parse_expr(&scenario.ctx, "u").unwrap(),
    ))
    .unwrap();
    state.extend_to(2).unwrap();
    for k in 0..=2 {
        let theta = a2.apply(&state.levels()[k].covector).unwrap();
        let psi = invert_dx_on_image(theta.component(0))
            .unwrap_or_else(|e| panic!("A2(psi_{k}) must lie in im A1: {e}"));
        assert_eq!(
            psi.total_derivative(0),
            *theta.component(0),
            "constructive witness differentiates back"
        );
    }
    println!(
        "criterion 5: PASS — A2(psi_k) ∈ im A1 constructively for k = 0..2, witnesses verified"
    );
}

#[test]
fn criterion_06_kdv_unrestricted_incompatibility() {
    let started = Instant::now();
    let kdv = scenario_path("kdv.toml");
    for order in ["1", "2", "3"] {
        let (code, out) = cli(&[
            "check-involutive",
            kdv.to_str().unwrap(),
            "--ops",
            "A1,A2",
            "--order",
            order,
        ]);
        assert_eq!(code, 2, "negative verdict at order {order}");
        assert!(out.contains("not strong compatible"));
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!(
        "criterion 6: PASS — (A1, A2) with free covector arguments is not strong compatible \
         at ansatz orders 1..3 ({elapsed:?})"
    );
}

#[test]
fn criterion_07_lambda_linearity() {
    let scenario = load("kdv.toml");
    let tuple = scenario.tuple(&["A1".into(), "A2".into()]).unwrap();
    let spec = AnsatzSpec::for_tuple(&tuple);
    let report = jetgamma_core::check_linear_compatibility(&tuple, &spec, None)
        .unwrap()
        .expect("every extraction succeeds");
    assert!(
        report.linear,
        "ib_{{A_λ}} = λ1·ib_{{A1}} + λ2·ib_{{A2}} modulo gauge, exactly in λ"
    );
    // The bracket itself: ib_{A1} = 0, ib_{A2} = D_x⊗1 − 1⊗D_x.
    assert!(report.individual[0].is_zero());
    let ctx = &scenario.ctx;
    let expected = BiDiffOperator::new(
        ctx,
        1,
        vec![
            BiTerm {
                out: 0,
                p_comp: 0,
                q_comp: 0,
                sigma: MultiIndex::new(vec![1]),
                tau: MultiIndex::new(vec![0]),
                coeff: DiffExpr::one(ctx),
            },
            BiTerm {
                out: 0,
                p_comp: 0,
                q_comp: 0,
                sigma: MultiIndex::new(vec![0]),
                tau: MultiIndex::new(vec![1]),
                coeff: DiffExpr::int(ctx, -1),
            },
        ],
    )
    .unwrap();
    assert_eq!(report.individual[1], expected);
    println!(
        "criterion 7: PASS — the λ-combination bracket is exactly λ-linear modulo the gauge space"
    );
}

#[test]
fn criterion_08_transformation_law() {
    let scenario = load("liouville.toml");
    let tuple = scenario.tuple(&["box".into(), "boxbar".into()]).unwrap();
    let spec = AnsatzSpec::for_tuple(&tuple);
    let Compatibility::Compatible(extraction) = extract_gamma(&tuple, &spec, None).unwrap()
    else {
        panic!("Liouville extraction succeeds");
    };

    // Identity reparametrization leaves the family fixed.
    let id = TotalOperator::identity(&scenario.ctx, tuple.domain());
    let fixed = transform_gamma(&extraction.family, &tuple, &id, &id).unwrap();
    assert_eq!(fixed, extraction.family, "identity g fixes the family");

    // g = (1 + x)·Id: the law agrees with direct extraction modulo gauge.
    let tr = Transform::load(
        &scenario_path("liouville_transform.toml"),
        &scenario.ctx,
        tuple.domain(),
    )
    .unwrap();
    let transformed =
        transform_gamma(&extraction.family, &tuple, &tr.g, &tr.g_inverse).unwrap();
    let new_tuple = OperatorTuple::new(
        tuple
            .ops()
            .iter()
            .map(|a| a.compose(&tr.g_inverse).unwrap())
            .collect(),
    )
    .unwrap();
    let (order, degree) = gamma::family_ansatz_bounds(&transformed);
    let tight = AnsatzSpec::for_tuple(&new_tuple)
        .with_order(order.max(1))
        .with_degree(degree);
    let Compatibility::Compatible(direct) = extract_gamma(&new_tuple, &tight, None).unwrap()
    else {
        panic!("reparametrized tuple stays strong compatible");
    };
    assert!(
        families_equivalent(&new_tuple, &transformed, &direct.family, None).unwrap(),
        "transform law agrees with direct extraction modulo the gauge space"
    );
    println!(
        "criterion 8: PASS — the transformation law matches direct extraction for g = (1+x)·Id \
         and the identity fixes the family"
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: kernel property suites
// ---------------------------------------------------------------------------

const CASES: usize = 100;
const SEED: u64 = 0;

fn kdv_like_ctx() -> Ctx {
    jetgamma_core::JetContext::builder()
        .independents(["x", "y"])
        .dependent("u", Parity::Even)
        .parameter_group(["p"], Parity::Odd)
        .parameter_group(["q"], Parity::Odd)
        .build()
        .unwrap()
}

/// Random differential polynomial: up to `terms` monomials in jets of `u`
/// (order ≤ 2), base variables, and optionally exp atoms.
fn random_expr(ctx: &Ctx, rng: &mut SpotRng, terms: u64, with_exp: bool) -> DiffExpr {
    let vars: Vec<JetVar> = [
        [0, 0],
        [1, 0],
        [0, 1],
        [2, 0],
        [1, 1],
        [0, 2],
    ]
    .iter()
    .map(|o| JetVar::new(0, MultiIndex::new(o.to_vec())))
    .collect();
    let mut acc = DiffExpr::zero(ctx);
    for _ in 0..=rng.below(terms) {
        let mut m = DiffExpr::rational(ctx, rng.rat());
        for _ in 0..rng.below(3) {
            let v = &vars[rng.below(vars.len() as u64) as usize];
            m = m.mul(&DiffExpr::jet(ctx, v.clone())).unwrap();
        }
        if rng.below(3) == 0 {
            m = m
                .mul(&DiffExpr::base_var(ctx, rng.below(2) as usize))
                .unwrap();
        }
        if with_exp && rng.below(4) == 0 {
            m = m
                .mul(&DiffExpr::exp_atom(ctx, 0, rat_int(rng.below(3) as i64 + 1)))
                .unwrap();
        }
        acc = acc.add(&m).unwrap();
    }
    acc
}

fn random_kappa(ctx: &Ctx, rng: &mut SpotRng) -> Section {
    Section::kappa(ctx, vec![random_expr(ctx, rng, 3, true)]).unwrap()
}

fn spot_point_equal(a: &DiffExpr, b: &DiffExpr, rng: &mut SpotRng) -> bool {
    let diff = a.sub(b).unwrap();
    gamma::spot_evaluate(&diff, rng).unwrap() == rat_int(0)
}

#[test]
fn criterion_09_kernel_property_suites() {
    let started = Instant::now();
    let ctx = kdv_like_ctx();
    let mut rng = SpotRng::new(SEED);

    // Ring axioms, with an eval_at cross-check on the sum and product.
    for _ in 0..CASES {
        let a = random_expr(&ctx, &mut rng, 3, true);
        let b = random_expr(&ctx, &mut rng, 3, true);
        let c = random_expr(&ctx, &mut rng, 2, true);
        assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
        assert_eq!(
            a.add(&b).unwrap().add(&c).unwrap(),
            a.add(&b.add(&c).unwrap()).unwrap()
        );
        assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
        assert_eq!(
            a.mul(&b).unwrap().mul(&c).unwrap(),
            a.mul(&b.mul(&c).unwrap()).unwrap()
        );
        assert_eq!(
            a.mul(&b.add(&c).unwrap()).unwrap(),
            a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap()
        );
        assert!(spot_point_equal(
            &a.add(&b).unwrap(),
            &b.add(&a).unwrap(),
            &mut rng
        ));
    }
    println!("  suite ring-axioms: {CASES} cases ok");

    // Total derivatives commute.
    for _ in 0..CASES {
        let a = random_expr(&ctx, &mut rng, 4, true);
        assert_eq!(
            a.total_derivative(0).total_derivative(1),
            a.total_derivative(1).total_derivative(0)
        );
    }
    println!("  suite D-commutation: {CASES} cases ok");

    // Leibniz rule.
    for _ in 0..CASES {
        let a = random_expr(&ctx, &mut rng, 3, true);
        let b = random_expr(&ctx, &mut rng, 3, true);
        let dir = rng.below(2) as usize;
        let lhs = a.mul(&b).unwrap().total_derivative(dir);
        let rhs = a
            .total_derivative(dir)
            .mul(&b)
            .unwrap()
            .add(&a.mul(&b.total_derivative(dir)).unwrap())
            .unwrap();
        assert_eq!(lhs, rhs);
    }
    println!("  suite Leibniz: {CASES} cases ok");

    // Evolutionary derivations: derivation property and the commutator
    // identity [E_φ, E_ψ] = E_{[φ,ψ]}.
    for _ in 0..CASES {
        let phi = random_kappa(&ctx, &mut rng);
        let psi = random_kappa(&ctx, &mut rng);
        let a = random_expr(&ctx, &mut rng, 2, true);
        let b = random_expr(&ctx, &mut rng, 2, true);
        let lhs = evolutionary(&phi, &a.mul(&b).unwrap()).unwrap();
        let rhs = evolutionary(&phi, &a)
            .unwrap()
            .mul(&b)
            .unwrap()
            .add(&a.mul(&evolutionary(&phi, &b).unwrap()).unwrap())
            .unwrap();
        assert_eq!(lhs, rhs, "E_φ is a derivation");

        let nested = evolutionary(&phi, &evolutionary(&psi, &a).unwrap())
            .unwrap()
            .sub(&evolutionary(&psi, &evolutionary(&phi, &a).unwrap()).unwrap())
            .unwrap();
        let direct = evolutionary(&commutator(&phi, &psi).unwrap(), &a).unwrap();
        assert_eq!(nested, direct, "[E_φ,E_ψ] = E_[φ,ψ]");
    }
    println!("  suite evolutionary: {CASES} cases ok");

    // The Euler operator annihilates total divergences.
    for _ in 0..CASES {
        let f = random_expr(&ctx, &mut rng, 3, true);
        let g = random_expr(&ctx, &mut rng, 3, true);
        let divergence = f
            .total_derivative(0)
            .add(&g.total_derivative(1))
            .unwrap();
        assert!(euler_operator(&divergence).unwrap().is_zero());
    }
    println!("  suite Euler-annihilates-divergences: {CASES} cases ok");

    // Homotopy inversion is a right inverse of the Euler operator on
    // variational gradients (polynomial densities).
    for _ in 0..CASES {
        let h = random_expr(&ctx, &mut rng, 3, false);
        let psi = euler_operator(&h).unwrap();
        let ell = linearization(&psi).unwrap();
        assert!(ell.same_entries(&ell.adjoint()), "gradients pass Helmholtz");
        let rebuilt = homotopy_inverse(&psi).unwrap();
        assert_eq!(
            euler_operator(rebuilt.density()).unwrap(),
            psi,
            "euler ∘ homotopy = id on gradients"
        );
    }
    println!("  suite homotopy-right-inverse: {CASES} cases ok");

    // Adjoint divergence identity: q·A(p) − A†(q)·p is a total divergence.
    for _ in 0..CASES {
        let dom = Space {
            dim: 1,
            parity: Parity::Odd,
        };
        let mut entry = Vec::new();
        for sigma in MultiIndex::all_up_to(2, 2) {
            if rng.below(3) == 0 {
                entry.push((random_expr(&ctx, &mut rng, 2, true), sigma));
            }
        }
        let a = TotalOperator::scalar_op(&ctx, entry, dom, Space::kappa(&ctx)).unwrap();
        let p = Section::parameter(&ctx, 0).unwrap();
        let q_expr = parse_expr(&ctx, "q").unwrap();
        let p_expr = parse_expr(&ctx, "p").unwrap();
        let ap = a.apply(&p).unwrap();
        let adj = a.adjoint();
        let adjq = adj
            .apply(&Section::new(&ctx, adj.domain(), vec![q_expr.clone()]).unwrap())
            .unwrap();
        let density = q_expr
            .mul(ap.component(0))
            .unwrap()
            .sub(&adjq.component(0).mul(&p_expr).unwrap())
            .unwrap();
        assert!(is_total_divergence(&density));
    }
    println!("  suite adjoint-divergence: {CASES} cases ok");

    // Printer/parser round trip on normal forms.
    for _ in 0..CASES {
        let a = random_expr(&ctx, &mut rng, 4, true);
        let printed = a.to_string();
        assert_eq!(parse_expr(&ctx, &printed).unwrap(), a, "`{printed}`");
    }
    println!("  suite parse-print-round-trip: {CASES} cases ok");

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!(
        "criterion 9: PASS — eight kernel property suites, {CASES} seeded cases each, \
         all exact ({elapsed:?})"
    );
}

#[test]
fn criterion_10_jacobi_evidence() {
    let scenario = load("kdv.toml");
    let ctx = &scenario.ctx;
    let a1 = scenario.operator("A1").unwrap();
    let a2 = scenario.operator("A2").unwrap();
    let mut rng = SpotRng::new(SEED);

    // Fixed randomized suite: polynomial densities of degree ≤ 3 in jets of
    // order ≤ 2.
    let vars: Vec<JetVar> = (0..=2)
        .map(|k| JetVar::new(0, MultiIndex::new(vec![k])))
        .collect();
    let random_density = |rng: &mut SpotRng| {
        let mut acc = DiffExpr::zero(ctx);
        for _ in 0..=rng.below(3) {
            let mut m = DiffExpr::rational(ctx, rng.rat());
            for _ in 0..rng.below(4) {
                let v = &vars[rng.below(3) as usize];
                m = m.mul(&DiffExpr::jet(ctx, v.clone())).unwrap();
            }
            acc = acc.add(&m).unwrap();
        }
        acc
    };

    let mut checked = 0;
    while checked < 5 {
        let h = Functional::new(random_density(&mut rng));
        let f = Functional::new(random_density(&mut rng));
        let g = Functional::new(random_density(&mut rng));
        if h.density().is_zero() || f.density().is_zero() || g.density().is_zero() {
            continue;
        }
        for (name, a) in [("A1", a1), ("A2", a2)] {
            assert!(
                jacobi_functional_check(a, &h, &f, &g).unwrap(),
                "Jacobi identity for {name} on triple #{checked}"
            );
        }
        checked += 1;
    }

    // A Casimir argument makes every bracket term vanish.
    let casimir = Functional::new(parse_expr(ctx, "u").unwrap());
    let h = Functional::new(parse_expr(ctx, "1/2*u^2").unwrap());
    let f = Functional::new(parse_expr(ctx, "1/6*u^3").unwrap());
    assert!(jacobi_functional_check(a1, &casimir, &h, &f).unwrap());

    println!(
        "criterion 10: PASS — functional Jacobi identity holds for both structures on \
         {checked} seeded triples (degree ≤ 3, order ≤ 2)"
    );
}

#[test]
fn hierarchy_certificate_depth_three() {
    // Companion check to criterion 4 through the library API: the module's
    // own exact checks constitute the oracle.
    let scenario = load("kdv.toml");
    let a1 = scenario.operator("A1").unwrap().clone();
    let a2 = scenario.operator("A2").unwrap().clone();
    let h0 = Functional::new(parse_expr(&scenario.ctx, "u").unwrap());
    let mut state = HierarchyState::seed(a1, a2, h0).unwrap();
    state.extend_to(3).unwrap();
    let cert = verify_hierarchy(&state).unwrap();
    assert!(cert.all_passed());
    assert_eq!(
        state.levels()[3].covector.component(0),
        &parse_expr(&scenario.ctx, "5/2*u^3 - 5/4*u_x^2 - 5/2*u*u_xx + 1/4*u_xxxx").unwrap()
    );
}

#[test]
fn numeric_cross_checks_at_three_points() {
    // Every extracted identity also holds under exact evaluation at ≥ 3
    // seeded rational points.
    let scenario = load("liouville.toml");
    let tuple = scenario.tuple(&["box".into(), "boxbar".into()]).unwrap();
    let spec = AnsatzSpec::for_tuple(&tuple);
    let Compatibility::Compatible(extraction) = extract_gamma(&tuple, &spec, None).unwrap()
    else {
        panic!();
    };
    assert!(gamma::numeric_cross_check(&tuple, &extraction.family, None, SEED, 3).unwrap());
}

#[test]
fn scaled_rational_checks() {
    // eval_at is a ring homomorphism: symbolic add/mul agree with rational
    // arithmetic at a shared point. Exponential atoms are assigned
    // coherently, exp(c·u) ↦ t^c for one nonzero t per fibre.
    let ctx = kdv_like_ctx();
    let mut rng = SpotRng::new(SEED);
    for _ in 0..CASES {
        let a = random_expr(&ctx, &mut rng, 3, true);
        let b = random_expr(&ctx, &mut rng, 3, true);
        let s = a.add(&b).unwrap();
        let m = a.mul(&b).unwrap();
        let mut shared = jetgamma_core::Assignment::default();
        for e in [&a, &b, &s, &m] {
            for v in e.dependency_vars() {
                shared
                    .jets
                    .entry(v)
                    .or_insert_with(|| rng.rat());
            }
        }
        for i in 0..2 {
            shared.base.insert(i, rng.rat());
        }
        let exp_base = rng.nonzero_rat();
        for e in [&a, &b, &s, &m] {
            for (fibre, c) in e.exp_atoms() {
                let power = c
                    .to_integer()
                    .try_into()
                    .expect("integer exp coefficients in this suite");
                let mut val = rat_int(1);
                for _ in 0..power {
                    val *= &exp_base;
                }
                shared.exps.insert((fibre, c), val);
            }
        }
        let ea = a.eval_at(&shared).unwrap();
        let eb = b.eval_at(&shared).unwrap();
        let es = s.eval_at(&shared).unwrap();
        let em = m.eval_at(&shared).unwrap();
        assert_eq!(es, &ea + &eb);
        assert_eq!(em, &ea * &eb);
    }
}

#[test]
fn zz_acceptance_summary() {
    // Runs last under the default alphabetical test order; the per-criterion
    // lines above carry the detail.
    println!("acceptance: criteria 1-10 implemented in this suite, all exact");
}
