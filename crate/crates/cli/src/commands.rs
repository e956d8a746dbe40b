use std::path::Path;

use anyhow::anyhow;
use serde_json::json;

use jetgamma_core::gamma::{
    self, check_linear_compatibility, check_strong_compatibility, extract_gamma,
    families_equivalent, numeric_cross_check, symmetry_classify, AnsatzSpec, Compatibility,
    Extraction, GammaFamily,
};
use jetgamma_core::jetcalc::Equation;
use jetgamma_core::magri::{
    self, is_casimir, verify_hierarchy, HierarchyState,
};
use jetgamma_core::operators::OperatorTuple;
use jetgamma_core::Functional;

use jetgamma_cli::scenario::{Scenario, Transform};
use crate::CommonArgs;

pub(crate) const PASS: u8 = 0;
pub(crate) const NEGATIVE: u8 = 2;

struct Task {
    names: Vec<String>,
    tuple: OperatorTuple,
    spec: AnsatzSpec,
    equation: Option<Equation>,
}

fn prepare(common: &CommonArgs) -> anyhow::Result<Task> {
    let scenario = Scenario::load(&common.scenario)?;
    let names = if common.ops.is_empty() {
        scenario.default_ops.clone()
    } else {
        common.ops.clone()
    };
    let tuple = scenario.tuple(&names)?;
    let mut spec = AnsatzSpec::for_tuple(&tuple);
    if let Some(order) = common.order.or(scenario.ansatz_order) {
        spec = spec.with_order(order);
    }
    if let Some(degree) = common.degree.or(scenario.ansatz_degree) {
        spec = spec.with_degree(degree);
    }
    let equation = if common.on_shell {
        let eq = scenario
            .equation
            .clone()
            .ok_or_else(|| anyhow!("--on-shell requires an [equation] section"))?;
        Some(eq)
    } else {
        None
    };
    Ok(Task {
        names,
        tuple,
        spec,
        equation,
    })
}

fn gamma_label(names: &[String], i: usize, j: usize, k: usize) -> String {
    format!("Gamma[{},{}]^{}", names[i], names[j], names[k])
}

fn print_family(names: &[String], family: &GammaFamily) {
    for (&(i, j), gammas) in family.pairs() {
        for (k, g) in gammas.iter().enumerate() {
            println!("  {} = {}", gamma_label(names, i, j, k), g);
        }
    }
}

fn family_report_json(
    task: &Task,
    extraction: &Extraction,
    cross_check: bool,
    seed: u64,
) -> anyhow::Result<serde_json::Value> {
    let ctx = task.tuple.ctx();
    let symmetry = symmetry_classify(&extraction.family, &task.tuple, task.equation.as_ref())?;
    Ok(json!({
        "verdict": {
            "status": "compatible",
            "order_bound": extraction.order_used,
            "degree_bound": extraction.degree_used,
            "bounds_raised": extraction.bounds_raised,
            "gauge_dim": extraction
                .gauge
                .pairs
                .iter()
                .map(|(&(i, j), pg)| json!({"i": i + 1, "j": j + 1, "dim": pg.dim}))
                .collect::<Vec<_>>(),
        },
        "operators": task.names,
        "on_shell": task.equation.is_some(),
        "family": gamma::family_to_json(ctx, &extraction.family),
        "gauge": gamma::gauge_to_json(ctx, &extraction.gauge),
        "symmetry": symmetry
            .iter()
            .map(|row| {
                json!({
                    "i": row.i + 1,
                    "j": row.j + 1,
                    "k": row.k + 1,
                    "antisymmetric_exact": row.antisymmetric_exact,
                    "antisymmetric_mod_gauge": row.antisymmetric_mod_gauge,
                    "graded_symmetric": row.graded_symmetric,
                })
            })
            .collect::<Vec<_>>(),
        "numeric_cross_check": {"seed": seed, "points": 3, "passed": cross_check},
    }))
}

pub(crate) fn check_involutive(common: &CommonArgs) -> anyhow::Result<u8> {
    let task = prepare(common)?;
    let verdict = check_strong_compatibility(&task.tuple, &task.spec, task.equation.as_ref())?;
    match verdict {
        Compatibility::Compatible(extraction) => {
            let cross =
                numeric_cross_check(&task.tuple, &extraction.family, task.equation.as_ref(),
                                    common.seed, 3)?;
            if common.json {
                let doc = family_report_json(&task, &extraction, cross, common.seed)?;
                println!("{}", serde_json::to_string_pretty(&doc)?);
            } else {
                println!(
                    "strong compatible at order {} / degree {}{}",
                    extraction.order_used,
                    extraction.degree_used,
                    if extraction.bounds_raised {
                        " (initial bound was too small; raised automatically)"
                    } else {
                        ""
                    }
                );
                print_family(&task.names, &extraction.family);
                println!(
                    "numeric cross-check: {} (3 points, seed {})",
                    if cross { "ok" } else { "FAILED" },
                    common.seed
                );
            }
            Ok(if cross { PASS } else { NEGATIVE })
        }
        Compatibility::NotCompatible {
            pair,
            order,
            degree,
        } => {
            if common.json {
                let doc = json!({
                    "verdict": {
                        "status": "not strong compatible",
                        "order_bound": order,
                        "degree_bound": degree,
                        "witness_pair": [task.names[pair.0], task.names[pair.1]],
                    },
                    "operators": task.names,
                    "on_shell": task.equation.is_some(),
                });
                println!("{}", serde_json::to_string_pretty(&doc)?);
            } else {
                println!(
                    "not strong compatible up to order {order} / degree {degree} \
                     (pair {}, {}; saturation bound also inconsistent)",
                    task.names[pair.0], task.names[pair.1]
                );
            }
            Ok(NEGATIVE)
        }
    }
}

pub(crate) fn extract_gamma_cmd(
    common: &CommonArgs,
    transform: Option<&Path>,
) -> anyhow::Result<u8> {
    let task = prepare(common)?;
    let verdict = extract_gamma(&task.tuple, &task.spec, task.equation.as_ref())?;
    let extraction = match verdict {
        Compatibility::Compatible(e) => e,
        Compatibility::NotCompatible {
            pair,
            order,
            degree,
        } => {
            println!(
                "not strong compatible up to order {order} / degree {degree} (pair {}, {})",
                task.names[pair.0], task.names[pair.1]
            );
            return Ok(NEGATIVE);
        }
    };
    let cross = numeric_cross_check(
        &task.tuple,
        &extraction.family,
        task.equation.as_ref(),
        common.seed,
        3,
    )?;

    let mut transform_json = serde_json::Value::Null;
    let mut transform_ok = true;
    if let Some(path) = transform {
        let tr = Transform::load(path, task.tuple.ctx(), task.tuple.domain())?;
        let transformed =
            gamma::transform_gamma(&extraction.family, &task.tuple, &tr.g, &tr.g_inverse)?;
        let new_tuple = OperatorTuple::new(
            task.tuple
                .ops()
                .iter()
                .map(|a| a.compose(&tr.g_inverse))
                .collect::<Result<Vec<_>, _>>()?,
        )?;
        // Direct extraction on the reparametrized tuple, with the smallest
        // ansatz that can reproduce the transformed family.
        let (order, degree) = gamma::family_ansatz_bounds(&transformed);
        let tight = AnsatzSpec::for_tuple(&new_tuple)
            .with_order(order.max(1))
            .with_degree(degree);
        let direct = match extract_gamma(&new_tuple, &tight, task.equation.as_ref())? {
            Compatibility::Compatible(e) => e,
            Compatibility::NotCompatible { .. } => {
                anyhow::bail!("reparametrized tuple lost strong compatibility");
            }
        };
        transform_ok = families_equivalent(
            &new_tuple,
            &transformed,
            &direct.family,
            task.equation.as_ref(),
        )?;
        if common.json {
            transform_json = json!({
                "g": tr.g.to_string(),
                "g_inverse": tr.g_inverse.to_string(),
                "transformed_family": gamma::family_to_json(task.tuple.ctx(), &transformed),
                "consistent_with_direct_extraction": transform_ok,
            });
        } else {
            println!("transformed family (Γ̃ = gΓ(g⁻¹·,g⁻¹·) + E-terms):");
            print_family(&task.names, &transformed);
            println!(
                "consistency with direct extraction on the reparametrized tuple: {}",
                if transform_ok { "ok (modulo gauge)" } else { "FAILED" }
            );
        }
    }

    if common.json {
        let mut doc = family_report_json(&task, &extraction, cross, common.seed)?;
        if !transform_json.is_null() {
            doc["transform"] = transform_json;
        }
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!(
            "Christoffel symbols at order {} / degree {} ({}):",
            extraction.order_used,
            extraction.degree_used,
            if task.equation.is_some() {
                "on shell"
            } else {
                "off shell"
            }
        );
        print_family(&task.names, &extraction.family);
        for (&(i, j), pg) in &extraction.gauge.pairs {
            println!(
                "  gauge[{},{}]: affine dimension {}",
                task.names[i], task.names[j], pg.dim
            );
        }
        let symmetry =
            symmetry_classify(&extraction.family, &task.tuple, task.equation.as_ref())?;
        for row in symmetry {
            println!(
                "  symmetry {}: antisymmetric {} ({}){}",
                gamma_label(&task.names, row.i, row.j, row.k),
                if row.antisymmetric_mod_gauge { "yes" } else { "NO" },
                if row.antisymmetric_exact {
                    "exact"
                } else {
                    "modulo gauge"
                },
                if row.graded_symmetric {
                    "; graded-symmetric on the odd domain"
                } else {
                    ""
                }
            );
        }
        println!(
            "numeric cross-check: {} (3 points, seed {})",
            if cross { "ok" } else { "FAILED" },
            common.seed
        );
    }
    Ok(if cross && transform_ok { PASS } else { NEGATIVE })
}

pub(crate) fn linear_compat(common: &CommonArgs) -> anyhow::Result<u8> {
    let task = prepare(common)?;
    if !common.json {
        // The λ-linearity statement assumes normal operators; report the
        // advisory leading-symbol check for each.
        for (name, op) in task.names.iter().zip(task.tuple.ops()) {
            println!(
                "  normality of {name}: {}",
                jetgamma_core::is_normal_heuristic(op)
            );
        }
    }
    let report = check_linear_compatibility(&task.tuple, &task.spec, task.equation.as_ref())?;
    let Some(report) = report else {
        if common.json {
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "status": "not linear compatible",
                    "reason": "an individual operator or the λ-combination has no involutive image at this ansatz",
                }))?
            );
        } else {
            println!("not linear compatible: an extraction failed at this ansatz");
        }
        return Ok(NEGATIVE);
    };
    if common.json {
        let doc = json!({
            "status": if report.linear { "linear compatible" } else { "not linear compatible" },
            "lambda_bracket": report.lambda_bracket.to_string(),
            "individual_brackets": report
                .individual
                .iter()
                .enumerate()
                .map(|(i, b)| json!({"op": task.names[i], "bracket": b.to_string()}))
                .collect::<Vec<_>>(),
            "pairwise": report
                .pairwise
                .iter()
                .map(|((i, j), ok)| json!({"pair": [task.names[*i], task.names[*j]], "linear": ok}))
                .collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!(
            "{}",
            if report.linear {
                "linear compatible: ib_{A_λ} = Σ λ_i·ib_{A_i} modulo gauge"
            } else {
                "not linear compatible: the λ-bracket is not λ-linear modulo gauge"
            }
        );
        for (i, b) in report.individual.iter().enumerate() {
            println!("  ib_{{{}}} = {}", task.names[i], b);
        }
        println!("  ib_{{A_λ}} = {}", report.lambda_bracket);
        for ((i, j), ok) in &report.pairwise {
            println!(
                "  pair ({}, {}): {}",
                task.names[*i],
                task.names[*j],
                if *ok { "linear" } else { "not linear" }
            );
        }
    }
    Ok(if report.linear { PASS } else { NEGATIVE })
}

pub(crate) fn magri_cmd(
    scenario_path: &Path,
    pair: &[String],
    steps: Option<usize>,
    json_out: bool,
) -> anyhow::Result<u8> {
    let scenario = Scenario::load(scenario_path)?;
    let (name1, name2) = match pair {
        [] => scenario
            .magri_pair
            .clone()
            .ok_or_else(|| anyhow!("no --pair given and no [defaults] pair in the scenario"))?,
        [a, b] => (a.clone(), b.clone()),
        _ => anyhow::bail!("--pair takes exactly two operator names"),
    };
    let steps = steps.or(scenario.default_steps).unwrap_or(3);
    let a1 = scenario.operator(&name1)?.clone();
    let a2 = scenario.operator(&name2)?.clone();
    let h0 = Functional::new(
        scenario
            .casimir
            .clone()
            .ok_or_else(|| anyhow!("the scenario needs a [defaults] casimir density"))?,
    );
    let casimir_ok = is_casimir(&a1, &h0)?;

    let mut state = HierarchyState::seed(a1, a2, h0)?;
    match state.extend_to(steps) {
        Ok(()) => {}
        Err(jetgamma_core::Error::Obstruction { step, reason }) => {
            if json_out {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "status": "obstruction", "step": step, "reason": reason,
                    }))?
                );
            } else {
                println!("recursion obstruction at step {step}: {reason}");
            }
            return Ok(NEGATIVE);
        }
        Err(other) => return Err(other.into()),
    }
    let certificate = verify_hierarchy(&state)?;
    let all = certificate.all_passed() && casimir_ok;

    if json_out {
        let doc = json!({
            "pair": [name1, name2],
            "steps": steps,
            "seed_is_casimir": casimir_ok,
            "levels": magri::hierarchy_to_json(&state),
            "certificate": magri::certificate_to_json(&certificate),
            "all_passed": all,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!(
            "seed functional: {} (Casimir of {}: {})",
            state.levels()[0].hamiltonian.density(),
            name1,
            if casimir_ok { "yes" } else { "NO" }
        );
        for (k, level) in state.levels().iter().enumerate() {
            println!("H_{k}:");
            println!("  density  = {}", level.hamiltonian.density());
            println!("  covector = {}", level.covector.component(0));
            println!("  flow     = {}", level.flow.component(0));
        }
        for check in &certificate.checks {
            println!(
                "  [{}] {}",
                if check.passed { "ok" } else { "FAIL" },
                check.name
            );
        }
        println!("certificate: {}", if all { "all passed" } else { "FAILURES" });
    }
    Ok(if all { PASS } else { NEGATIVE })
}

pub(crate) fn bracket(
    scenario_path: &Path,
    op_name: &str,
    order: Option<u32>,
    degree: Option<u32>,
    on_shell: bool,
    json_out: bool,
) -> anyhow::Result<u8> {
    let scenario = Scenario::load(scenario_path)?;
    let tuple = scenario.tuple(&[op_name.to_string()])?;
    let mut spec = AnsatzSpec::for_tuple(&tuple);
    if let Some(order) = order.or(scenario.ansatz_order) {
        spec = spec.with_order(order);
    }
    if let Some(degree) = degree.or(scenario.ansatz_degree) {
        spec = spec.with_degree(degree);
    }
    let equation = if on_shell {
        scenario.equation.clone()
    } else {
        None
    };
    match extract_gamma(&tuple, &spec, equation.as_ref())? {
        Compatibility::Compatible(extraction) => {
            let gamma = extraction.family.gamma(0, 0, 0);
            if json_out {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "status": "involutive",
                        "op": op_name,
                        "bracket": format!("E_{{A(p)}}(q) - E_{{A(q)}}(p) + {gamma}"),
                        "christoffel": gamma.to_string(),
                        "family": gamma::family_to_json(tuple.ctx(), &extraction.family),
                    }))?
                );
            } else {
                println!("[p, q]_{{{op_name}}} = E_{{A(p)}}(q) - E_{{A(q)}}(p) + {{p,q}}");
                println!("  {{p,q}} = {gamma}");
            }
            Ok(PASS)
        }
        Compatibility::NotCompatible { order, degree, .. } => {
            if json_out {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "status": "not involutive",
                        "op": op_name,
                        "order_bound": order,
                        "degree_bound": degree,
                    }))?
                );
            } else {
                println!(
                    "image of {op_name} is not involutive up to order {order} / degree {degree}"
                );
            }
            Ok(NEGATIVE)
        }
    }
}
