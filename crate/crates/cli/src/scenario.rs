//! Declarative scenario files: context, equation, operators and task
//! defaults, in TOML with expressions in the kernel grammar.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context as _};
use toml::Value;

use jetgamma_core::context::{Ctx, JetContext, Parity, Space};
use jetgamma_core::expr::{parse_expr, parse_operator_entry, DiffExpr};
use jetgamma_core::jetcalc::Equation;
use jetgamma_core::operators::{OperatorTuple, TotalOperator};
use jetgamma_core::JetVar;

#[derive(Debug)]
pub struct Scenario {
    pub ctx: Ctx,
    /// Rules on ordinary fibres (the differential equation).
    pub equation: Option<Equation>,
    /// Rules on argument fibres (domain restrictions such as `p_y = 0`).
    pub restriction: Option<Equation>,
    pub operators: BTreeMap<String, TotalOperator>,
    pub ansatz_order: Option<u32>,
    pub ansatz_degree: Option<u32>,
    pub default_ops: Vec<String>,
    pub magri_pair: Option<(String, String)>,
    pub casimir: Option<DiffExpr>,
    pub default_steps: Option<usize>,
}

impl Scenario {
    pub fn load(path: &Path) -> anyhow::Result<Scenario> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading scenario {}", path.display()))?;
        Scenario::parse(&text).with_context(|| format!("scenario {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Scenario> {
        let table: toml::Table = text.parse().context("invalid TOML")?;

        let context = table
            .get("context")
            .and_then(Value::as_table)
            .ok_or_else(|| anyhow!("missing [context] section"))?;

        let mut builder = JetContext::builder().independents(
            string_list(context.get("independents"), "context.independents")?,
        );
        for dep in list_of(context.get("dependents"), "context.dependents")? {
            match dep {
                Value::String(name) => {
                    builder = builder.dependent(name, Parity::Even);
                }
                Value::Table(t) => {
                    let name = t
                        .get("name")
                        .and_then(Value::as_str)
                        .ok_or_else(|| anyhow!("dependent entry needs a name"))?;
                    let parity = parity_of(t.get("parity"))?;
                    builder = builder.dependent(name, parity);
                }
                other => bail!("bad dependent entry: {other}"),
            }
        }
        let parameter_parity = parity_of(context.get("parameter_parity"))?;
        for group in list_of(context.get("parameters"), "context.parameters")? {
            match group {
                Value::String(name) => {
                    builder = builder.parameter_group([name.as_str()], parameter_parity);
                }
                Value::Array(names) => {
                    let names: Vec<&str> = names
                        .iter()
                        .map(|v| {
                            v.as_str()
                                .ok_or_else(|| anyhow!("parameter names must be strings"))
                        })
                        .collect::<anyhow::Result<_>>()?;
                    builder = builder.parameter_group(names, parameter_parity);
                }
                other => bail!("bad parameter entry: {other}"),
            }
        }
        if let Some(scalars) = context.get("scalars") {
            for s in string_list(Some(scalars), "context.scalars")? {
                builder = builder.scalar(s);
            }
        }
        let ctx = builder.build()?;

        let equation = rules_section(&ctx, table.get("equation"), "equation")?;
        let restriction = rules_section(&ctx, table.get("restriction"), "restriction")?;

        let mut operators = BTreeMap::new();
        if let Some(ops) = table.get("operators").and_then(Value::as_table) {
            let domain = Space {
                dim: ctx.param_group(0).map(|g| g.len()).unwrap_or(1),
                parity: parameter_parity,
            };
            let codomain = Space::kappa(&ctx);
            for (name, value) in ops {
                let op = parse_operator(&ctx, value, domain, codomain)
                    .with_context(|| format!("operator `{name}`"))?;
                operators.insert(name.clone(), op);
            }
        }

        let ansatz = table.get("ansatz").and_then(Value::as_table);
        let ansatz_order = ansatz
            .and_then(|t| t.get("order"))
            .and_then(Value::as_integer)
            .map(|n| n as u32);
        let ansatz_degree = ansatz
            .and_then(|t| t.get("degree"))
            .and_then(Value::as_integer)
            .map(|n| n as u32);

        let defaults = table.get("defaults").and_then(Value::as_table);
        let default_ops = match defaults.and_then(|t| t.get("ops")) {
            Some(v) => string_list(Some(v), "defaults.ops")?,
            None => operators.keys().cloned().collect(),
        };
        let magri_pair = match defaults.and_then(|t| t.get("pair")) {
            Some(v) => {
                let pair = string_list(Some(v), "defaults.pair")?;
                if pair.len() != 2 {
                    bail!("defaults.pair must name exactly two operators");
                }
                Some((pair[0].clone(), pair[1].clone()))
            }
            None => None,
        };
        let casimir = defaults
            .and_then(|t| t.get("casimir"))
            .and_then(Value::as_str)
            .map(|s| parse_expr(&ctx, s))
            .transpose()?;
        let default_steps = defaults
            .and_then(|t| t.get("steps"))
            .and_then(Value::as_integer)
            .map(|n| n as usize);

        Ok(Scenario {
            ctx,
            equation,
            restriction,
            operators,
            ansatz_order,
            ansatz_degree,
            default_ops,
            magri_pair,
            casimir,
            default_steps,
        })
    }

    pub fn operator(&self, name: &str) -> anyhow::Result<&TotalOperator> {
        self.operators
            .get(name)
            .ok_or_else(|| anyhow!("scenario defines no operator `{name}`"))
    }

    pub fn tuple(&self, names: &[String]) -> anyhow::Result<OperatorTuple> {
        if names.is_empty() {
            bail!("no operators selected: pass --ops or set [defaults] ops");
        }
        let ops = names
            .iter()
            .map(|n| self.operator(n).cloned())
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(OperatorTuple::new(ops)?)
    }

    /// Equation and restriction rules merged, for on-shell claims about
    /// restricted arguments.
    pub fn full_equation(&self) -> anyhow::Result<Option<Equation>> {
        match (&self.equation, &self.restriction) {
            (Some(e), Some(r)) => Ok(Some(e.merged(r)?)),
            (Some(e), None) => Ok(Some(e.clone())),
            (None, Some(r)) => Ok(Some(r.clone())),
            (None, None) => Ok(None),
        }
    }
}

/// A `[transform]` file: the reparametrization g and optionally its inverse.
pub struct Transform {
    pub g: TotalOperator,
    pub g_inverse: TotalOperator,
}

impl Transform {
    pub fn load(path: &Path, ctx: &Ctx, domain: Space) -> anyhow::Result<Transform> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading transform {}", path.display()))?;
        let table: toml::Table = text.parse().context("invalid TOML")?;
        let section = table
            .get("transform")
            .and_then(Value::as_table)
            .ok_or_else(|| anyhow!("missing [transform] section"))?;
        let g = parse_operator(
            ctx,
            section
                .get("g")
                .ok_or_else(|| anyhow!("transform needs `g`"))?,
            domain,
            domain,
        )?;
        let g_inverse = match section.get("g_inverse") {
            Some(v) => parse_operator(ctx, v, domain, domain)?,
            None => g
                .zero_order_inverse()
                .context("g is not zero-order; supply g_inverse explicitly")?,
        };
        Ok(Transform { g, g_inverse })
    }
}

fn parity_of(v: Option<&Value>) -> anyhow::Result<Parity> {
    match v {
        None => Ok(Parity::Even),
        Some(Value::String(s)) if s == "even" => Ok(Parity::Even),
        Some(Value::String(s)) if s == "odd" => Ok(Parity::Odd),
        Some(other) => bail!("parity must be \"even\" or \"odd\", got {other}"),
    }
}

fn string_list(v: Option<&Value>, what: &str) -> anyhow::Result<Vec<String>> {
    let arr = v
        .and_then(Value::as_array)
        .ok_or_else(|| anyhow!("{what} must be a list of strings"))?;
    arr.iter()
        .map(|x| {
            x.as_str()
                .map(str::to_string)
                .ok_or_else(|| anyhow!("{what} must be a list of strings"))
        })
        .collect()
}

fn list_of<'v>(v: Option<&'v Value>, what: &str) -> anyhow::Result<&'v [Value]> {
    v.and_then(Value::as_array)
        .map(|a| a.as_slice())
        .ok_or_else(|| anyhow!("{what} must be a list"))
}

fn rules_section(
    ctx: &Ctx,
    v: Option<&Value>,
    what: &str,
) -> anyhow::Result<Option<Equation>> {
    let Some(table) = v.and_then(Value::as_table) else {
        return Ok(None);
    };
    let mut rules = Vec::new();
    for (lhs, rhs) in table {
        let lhs_expr = parse_expr(ctx, lhs).with_context(|| format!("[{what}] key `{lhs}`"))?;
        let var = single_jet_var(&lhs_expr)
            .ok_or_else(|| anyhow!("[{what}] key `{lhs}` must be a single jet variable"))?;
        let rhs_text = rhs
            .as_str()
            .ok_or_else(|| anyhow!("[{what}] values must be expression strings"))?;
        let rhs_expr =
            parse_expr(ctx, rhs_text).with_context(|| format!("[{what}] value for `{lhs}`"))?;
        rules.push((var, rhs_expr));
    }
    Ok(Some(Equation::new(ctx, rules)?))
}

fn single_jet_var(e: &DiffExpr) -> Option<JetVar> {
    let terms = e.terms();
    if terms.len() != 1 || !e.is_polynomial() {
        return None;
    }
    let m = &terms[0];
    if m.coeff != jetgamma_core::expr::rat_int(1) {
        return None;
    }
    if m.key.vars.len() != 1 || m.key.vars[0].1 != 1 || !m.key.exps.is_empty() {
        return None;
    }
    if m.key.base.iter().any(|&k| k > 0) || m.key.scalars.iter().any(|&k| k > 0) {
        return None;
    }
    Some(m.key.vars[0].0.clone())
}

fn parse_operator(
    ctx: &Ctx,
    value: &Value,
    domain: Space,
    codomain: Space,
) -> anyhow::Result<TotalOperator> {
    match value {
        Value::String(s) => {
            if domain.dim != 1 || codomain.dim != 1 {
                bail!("matrix syntax [[..],[..]] is required for non-scalar operators");
            }
            let entry = parse_operator_entry(ctx, s)?;
            Ok(TotalOperator::scalar_op(ctx, entry, domain, codomain)?)
        }
        Value::Array(rows) => {
            let mut entries = Vec::with_capacity(rows.len());
            for row in rows {
                let Some(cells) = row.as_array() else {
                    bail!("operator matrix rows must be arrays");
                };
                let mut parsed = Vec::with_capacity(cells.len());
                for cell in cells {
                    let Some(text) = cell.as_str() else {
                        bail!("operator matrix entries must be strings");
                    };
                    parsed.push(parse_operator_entry(ctx, text)?);
                }
                entries.push(parsed);
            }
            Ok(TotalOperator::new(ctx, domain, codomain, entries)?)
        }
        other => bail!("operator must be a string or a matrix of strings, got {other}"),
    }
}
