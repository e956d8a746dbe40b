//! Variational calculus on the jet space: evolutionary derivations and their
//! commutators, linearization, the Euler operator, homotopy inversion,
//! total-divergence tests and on-shell reduction.

use std::collections::BTreeMap;

use crate::context::{same_ctx, Ctx, Parity, Space};
use crate::error::{Error, Result};
use crate::expr::{rat, DiffExpr, JetVar, Rat};
use crate::multi_index::MultiIndex;
use crate::operators::TotalOperator;

/// An element of a horizontal module: a tuple of differential functions with
/// a space tag (rank and parity).
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    ctx: Ctx,
    space: Space,
    components: Vec<DiffExpr>,
}

impl Section {
    pub fn new(ctx: &Ctx, space: Space, components: Vec<DiffExpr>) -> Result<Self> {
        if components.len() != space.dim {
            return Err(Error::DimensionMismatch(format!(
                "section has {} components for a rank-{} space",
                components.len(),
                space.dim
            )));
        }
        for c in &components {
            same_ctx(ctx, c.ctx())?;
        }
        Ok(Section {
            ctx: ctx.clone(),
            space,
            components,
        })
    }

    /// The generating section in κ(π) with the given components, one per
    /// ordinary fibre.
    pub fn kappa(ctx: &Ctx, components: Vec<DiffExpr>) -> Result<Self> {
        Section::new(ctx, Space::kappa(ctx), components)
    }

    /// The tautological section of a parameter group: the tuple of its fibre
    /// variables.
    pub fn parameter(ctx: &Ctx, group: usize) -> Result<Self> {
        let fibres = ctx.param_group(group)?;
        let parity = ctx.param_group_parity(group)?;
        let components = fibres
            .iter()
            .map(|&f| DiffExpr::jet(ctx, JetVar::base(f, ctx.n_independents())))
            .collect();
        Section::new(
            ctx,
            Space {
                dim: fibres.len(),
                parity,
            },
            components,
        )
    }

    pub fn zero(ctx: &Ctx, space: Space) -> Self {
        Section {
            ctx: ctx.clone(),
            space,
            components: vec![DiffExpr::zero(ctx); space.dim],
        }
    }

    pub fn ctx(&self) -> &Ctx {
        &self.ctx
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn components(&self) -> &[DiffExpr] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &DiffExpr {
        &self.components[i]
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, other: &Section) -> Result<Section> {
        self.check_same_space(other)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.add(b))
            .collect::<Result<_>>()?;
        Ok(Section {
            ctx: self.ctx.clone(),
            space: self.space,
            components,
        })
    }

    pub fn sub(&self, other: &Section) -> Result<Section> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Section {
        Section {
            ctx: self.ctx.clone(),
            space: self.space,
            components: self.components.iter().map(|c| c.neg()).collect(),
        }
    }

    pub fn scale(&self, c: &Rat) -> Section {
        Section {
            ctx: self.ctx.clone(),
            space: self.space,
            components: self.components.iter().map(|e| e.scale(c)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(&DiffExpr) -> DiffExpr) -> Section {
        Section {
            ctx: self.ctx.clone(),
            space: self.space,
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn map_result(&self, f: impl Fn(&DiffExpr) -> Result<DiffExpr>) -> Result<Section> {
        Ok(Section {
            ctx: self.ctx.clone(),
            space: self.space,
            components: self
                .components
                .iter()
                .map(f)
                .collect::<Result<Vec<_>>>()?,
        })
    }

    fn check_same_space(&self, other: &Section) -> Result<()> {
        same_ctx(&self.ctx, &other.ctx)?;
        if self.space != other.space {
            return Err(Error::SpaceMismatch(format!(
                "{:?} vs {:?}",
                self.space, other.space
            )));
        }
        Ok(())
    }
}

/// A functional: the equivalence class of a density modulo total divergences.
#[derive(Debug, Clone)]
pub struct Functional {
    density: DiffExpr,
}

impl Functional {
    pub fn new(density: DiffExpr) -> Self {
        Functional { density }
    }

    pub fn zero(ctx: &Ctx) -> Self {
        Functional {
            density: DiffExpr::zero(ctx),
        }
    }

    pub fn density(&self) -> &DiffExpr {
        &self.density
    }

    pub fn ctx(&self) -> &Ctx {
        self.density.ctx()
    }

    /// Class equality: the difference of densities is a total divergence.
    pub fn equivalent(&self, other: &Functional) -> Result<bool> {
        let diff = self.density.sub(&other.density)?;
        Ok(is_total_divergence(&diff))
    }

    pub fn is_zero_class(&self) -> bool {
        is_total_divergence(&self.density)
    }
}

// ---------------------------------------------------------------------------
// Evolutionary derivations
// ---------------------------------------------------------------------------

/// Cache of prolonged components `D^σ(φ_f)` for one generating section.
struct Prolongation<'a> {
    phi: &'a Section,
    fibre_to_pos: BTreeMap<usize, usize>,
    cache: BTreeMap<(usize, MultiIndex), DiffExpr>,
}

impl<'a> Prolongation<'a> {
    fn new(phi: &'a Section) -> Self {
        let fibre_to_pos = phi
            .ctx()
            .ordinary_fibres()
            .into_iter()
            .enumerate()
            .map(|(pos, f)| (f, pos))
            .collect();
        Prolongation {
            phi,
            fibre_to_pos,
            cache: BTreeMap::new(),
        }
    }

    fn get(&mut self, fibre: usize, index: &MultiIndex) -> Option<DiffExpr> {
        let pos = *self.fibre_to_pos.get(&fibre)?;
        if index.is_zero() {
            return Some(self.phi.component(pos).clone());
        }
        if let Some(hit) = self.cache.get(&(fibre, index.clone())) {
            return Some(hit.clone());
        }
        let dir = (0..index.len()).find(|&d| index[d] > 0).unwrap();
        let mut prev = index.clone();
        prev = MultiIndex::new(
            prev.orders()
                .iter()
                .enumerate()
                .map(|(d, &k)| if d == dir { k - 1 } else { k })
                .collect(),
        );
        let lower = self.get(fibre, &prev)?;
        let value = lower.total_derivative(dir);
        self.cache.insert((fibre, index.clone()), value.clone());
        Some(value)
    }
}

fn check_kappa(phi: &Section) -> Result<()> {
    let kappa = Space::kappa(phi.ctx());
    if phi.space().parity != kappa.parity {
        return Err(Error::ParityMismatch(
            "evolutionary derivations take even (vector) generating sections".into(),
        ));
    }
    if phi.space().dim != kappa.dim {
        return Err(Error::DimensionMismatch(format!(
            "generating section has rank {}, κ(π) has rank {}",
            phi.space().dim,
            kappa.dim
        )));
    }
    Ok(())
}

/// The evolutionary derivation `E_φ` applied to a differential function:
/// `Σ_{f,σ} D^σ(φ_f)·∂a/∂u_{f,σ}`. Jets of parameter fibres are inert.
pub fn evolutionary(phi: &Section, a: &DiffExpr) -> Result<DiffExpr> {
    same_ctx(phi.ctx(), a.ctx())?;
    check_kappa(phi)?;
    let mut prol = Prolongation::new(phi);
    let mut acc = DiffExpr::zero(a.ctx());
    for v in a.dependency_vars() {
        if a.ctx().is_parameter(v.fibre) {
            continue;
        }
        let Some(dphi) = prol.get(v.fibre, &v.index) else {
            continue;
        };
        acc = acc.add(&dphi.mul(&a.partial(&v))?)?;
    }
    Ok(acc)
}

/// Componentwise `E_φ` on a section.
pub fn evolutionary_section(phi: &Section, s: &Section) -> Result<Section> {
    let components = s
        .components()
        .iter()
        .map(|c| evolutionary(phi, c))
        .collect::<Result<_>>()?;
    Section::new(s.ctx(), s.space(), components)
}

/// `E_φ` applied to the coefficients of a total operator.
pub fn evolutionary_operator(phi: &Section, op: &TotalOperator) -> Result<TotalOperator> {
    op.map_coefficients(|c| evolutionary(phi, c))
}

/// The commutator `[φ, ψ] = E_φ(ψ) − E_ψ(φ)` of generating sections, so that
/// `[E_φ, E_ψ] = E_{[φ,ψ]}`.
pub fn commutator(phi: &Section, psi: &Section) -> Result<Section> {
    same_ctx(phi.ctx(), psi.ctx())?;
    check_kappa(phi)?;
    check_kappa(psi)?;
    evolutionary_section(phi, psi)?.sub(&evolutionary_section(psi, phi)?)
}

/// Linearization `ℓ_F`: the total operator with entries `Σ_σ ∂F_r/∂u_{a,σ}·D^σ`
/// over the ordinary fibres, so that `ℓ_F(φ) = E_φ(F)`.
pub fn linearization(f: &Section) -> Result<TotalOperator> {
    let ctx = f.ctx();
    let ordinary = ctx.ordinary_fibres();
    let mut entries = Vec::with_capacity(f.dim());
    for r in 0..f.dim() {
        let fr = f.component(r);
        let mut row = Vec::with_capacity(ordinary.len());
        for &fibre in &ordinary {
            let mut entry: Vec<(DiffExpr, MultiIndex)> = Vec::new();
            for v in fr.dependency_vars() {
                if v.fibre != fibre {
                    continue;
                }
                let coeff = fr.partial(&v);
                if !coeff.is_zero() {
                    entry.push((coeff, v.index));
                }
            }
            row.push(entry);
        }
        entries.push(row);
    }
    TotalOperator::new(
        ctx,
        Space::kappa(ctx),
        Space {
            dim: f.dim(),
            parity: f.space().parity,
        },
        entries,
    )
}

/// Linearization of a single differential function.
pub fn linearization_expr(f: &DiffExpr) -> Result<TotalOperator> {
    let s = Section::new(
        f.ctx(),
        Space {
            dim: 1,
            parity: Parity::Even,
        },
        vec![f.clone()],
    )?;
    linearization(&s)
}

// ---------------------------------------------------------------------------
// Euler operator and homotopy
// ---------------------------------------------------------------------------

fn variational_derivative(density: &DiffExpr, fibre: usize) -> DiffExpr {
    let ctx = density.ctx();
    let mut acc = DiffExpr::zero(ctx);
    for v in density.dependency_vars() {
        if v.fibre != fibre {
            continue;
        }
        let p = density.partial(&v);
        if p.is_zero() {
            continue;
        }
        let mut term = p.total_derivative_multi(&v.index);
        if v.index.order() % 2 == 1 {
            term = term.neg();
        }
        acc = acc.add(&term).expect("same context");
    }
    acc
}

/// The Euler operator `δ/δu^a = Σ_σ (−D)^σ ∘ ∂/∂u^a_σ`, per ordinary fibre.
pub fn euler_operator(density: &DiffExpr) -> Result<Section> {
    let ctx = density.ctx();
    if density.depends_on_parameter() {
        return Err(Error::ParameterFibre(
            "the Euler operator of a Hamiltonian density must not involve argument fibres".into(),
        ));
    }
    let components = ctx
        .ordinary_fibres()
        .into_iter()
        .map(|f| variational_derivative(density, f))
        .collect();
    Section::new(
        ctx,
        Space {
            dim: ctx.n_ordinary(),
            parity: Parity::Odd,
        },
        components,
    )
}

/// Variational derivatives with respect to every fibre, parameter fibres
/// included (used to decide total-divergence claims in argument jets).
pub fn variational_derivative_all(density: &DiffExpr) -> Vec<DiffExpr> {
    (0..density.ctx().fibres().len())
        .map(|f| variational_derivative(density, f))
        .collect()
}

/// True iff the expression is a total divergence `Σ_i D_i(current_i)`,
/// decided by the vanishing of all variational derivatives.
pub fn is_total_divergence(a: &DiffExpr) -> bool {
    variational_derivative_all(a).iter().all(|c| c.is_zero())
}

/// Reconstructs a density for a variational gradient via the homotopy formula
/// `h = ∫₀¹ Σ_a u^a · ψ_a[λu] dλ`, with the zero section as base point.
///
/// The input must pass the Helmholtz test (self-adjoint linearization) and be
/// free of exponential atoms, which the λ-integral does not preserve.
pub fn homotopy_inverse(psi: &Section) -> Result<Functional> {
    let ctx = psi.ctx();
    if psi.space().dim != ctx.n_ordinary() {
        return Err(Error::DimensionMismatch(
            "homotopy input must have one component per ordinary fibre".into(),
        ));
    }
    for c in psi.components() {
        if c.has_exp() {
            return Err(Error::HomotopyExp);
        }
        if c.depends_on_parameter() {
            return Err(Error::ParameterFibre(
                "homotopy input must not involve argument fibres".into(),
            ));
        }
    }
    let ell = linearization(psi)?;
    if !ell.same_entries(&ell.adjoint()) {
        let bad = (0..psi.dim())
            .find(|&r| {
                let l = ell.clone();
                let a = l.adjoint();
                l.row_differs(&a, r)
            })
            .unwrap_or(0);
        return Err(Error::NotVariational(bad));
    }
    let ordinary = ctx.ordinary_fibres();
    let mut density = DiffExpr::zero(ctx);
    for (pos, &fibre) in ordinary.iter().enumerate() {
        let u = DiffExpr::jet(ctx, JetVar::base(fibre, ctx.n_independents()));
        for m in psi.component(pos).terms() {
            let deg = m.key.jet_degree() as i64;
            let mut scaled = DiffExpr::from_monomials(
                ctx,
                vec![crate::expr::Monomial {
                    coeff: &m.coeff * rat(1, deg + 1),
                    key: m.key.clone(),
                }],
                psi.component(pos).denominators().to_vec(),
            );
            scaled = scaled.mul(&u)?;
            density = density.add(&scaled)?;
        }
    }
    Ok(Functional::new(density))
}

// ---------------------------------------------------------------------------
// On-shell reduction
// ---------------------------------------------------------------------------

/// An equation presented as oriented rewrite rules on jet variables, closed
/// under prolongation by total derivatives.
#[derive(Debug, Clone)]
pub struct Equation {
    ctx: Ctx,
    rules: Vec<(JetVar, DiffExpr)>,
    max_rounds: usize,
}

pub const DEFAULT_REDUCTION_ROUNDS: usize = 20;

impl Equation {
    pub fn new(ctx: &Ctx, rules: Vec<(JetVar, DiffExpr)>) -> Result<Self> {
        for (lhs, rhs) in &rules {
            same_ctx(ctx, rhs.ctx())?;
            if lhs.fibre >= ctx.fibres().len() {
                return Err(Error::InvalidEquation("rule fibre out of range".into()));
            }
        }
        for (i, (a, _)) in rules.iter().enumerate() {
            for (j, (b, _)) in rules.iter().enumerate() {
                if i == j {
                    continue;
                }
                if a.fibre == b.fibre && b.index.le(&a.index) {
                    return Err(Error::InvalidEquation(format!(
                        "left-hand side #{i} is a derivative of left-hand side #{j}"
                    )));
                }
            }
        }
        Ok(Equation {
            ctx: ctx.clone(),
            rules,
            max_rounds: DEFAULT_REDUCTION_ROUNDS,
        })
    }

    pub fn with_max_rounds(mut self, rounds: usize) -> Self {
        self.max_rounds = rounds;
        self
    }

    pub fn ctx(&self) -> &Ctx {
        &self.ctx
    }

    pub fn rules(&self) -> &[(JetVar, DiffExpr)] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// The sub-equation acting on ordinary fibres only; argument-fibre rules
    /// (domain restrictions) are dropped.
    pub fn restricted_to_ordinary(&self) -> Equation {
        Equation {
            ctx: self.ctx.clone(),
            rules: self
                .rules
                .iter()
                .filter(|(lhs, _)| !self.ctx.is_parameter(lhs.fibre))
                .cloned()
                .collect(),
            max_rounds: self.max_rounds,
        }
    }

    /// Merges two rule sets over the same context.
    pub fn merged(&self, other: &Equation) -> Result<Equation> {
        let mut rules = self.rules.clone();
        rules.extend(other.rules.iter().cloned());
        Equation::new(&self.ctx, rules).map(|eq| eq.with_max_rounds(self.max_rounds))
    }

    fn reducible(&self, v: &JetVar) -> Option<(usize, MultiIndex)> {
        for (i, (lhs, _)) in self.rules.iter().enumerate() {
            if lhs.fibre == v.fibre && lhs.index.le(&v.index) {
                return Some((i, v.index.sub(&lhs.index)));
            }
        }
        None
    }
}

/// Rewrites to the fixed point of the prolonged rules of `eq`; the result
/// contains only internal (irreducible) jet coordinates.
pub fn reduce_on_shell(a: &DiffExpr, eq: &Equation) -> Result<DiffExpr> {
    same_ctx(a.ctx(), eq.ctx())?;
    let mut current = a.clone();
    let mut prolonged: BTreeMap<(usize, MultiIndex), DiffExpr> = BTreeMap::new();
    for _ in 0..eq.max_rounds {
        let mut assignment: BTreeMap<JetVar, DiffExpr> = BTreeMap::new();
        for v in current.jet_vars() {
            if let Some((rule, delta)) = eq.reducible(&v) {
                let rhs = prolonged
                    .entry((rule, delta.clone()))
                    .or_insert_with(|| eq.rules[rule].1.total_derivative_multi(&delta))
                    .clone();
                assignment.insert(v, rhs);
            }
        }
        if assignment.is_empty() {
            return Ok(current);
        }
        current = current.substitute(&assignment)?;
    }
    Err(Error::ReductionDepth(eq.max_rounds))
}

/// Reduces every component of a section.
pub fn reduce_section_on_shell(s: &Section, eq: &Equation) -> Result<Section> {
    let components = s
        .components()
        .iter()
        .map(|c| reduce_on_shell(c, eq))
        .collect::<Result<_>>()?;
    Section::new(s.ctx(), s.space(), components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::JetContext;
    use crate::expr::parse_expr;

    fn kdv_ctx() -> Ctx {
        JetContext::builder()
            .independents(["x"])
            .dependent("u", Parity::Even)
            .parameter_group(["p"], Parity::Odd)
            .parameter_group(["q"], Parity::Odd)
            .build()
            .unwrap()
    }

    fn liouville_ctx() -> Ctx {
        JetContext::builder()
            .independents(["x", "y"])
            .dependent("u", Parity::Even)
            .parameter_group(["p"], Parity::Odd)
            .parameter_group(["q"], Parity::Odd)
            .build()
            .unwrap()
    }

    fn e(ctx: &Ctx, s: &str) -> DiffExpr {
        parse_expr(ctx, s).unwrap()
    }

    fn kappa1(ctx: &Ctx, s: &str) -> Section {
        Section::kappa(ctx, vec![e(ctx, s)]).unwrap()
    }

    #[test]
    fn evolutionary_on_coordinates() {
        let ctx = kdv_ctx();
        let phi = kappa1(&ctx, "u^2");
        // E_φ(u_x) = D_x(φ)
        assert_eq!(
            evolutionary(&phi, &e(&ctx, "u_x")).unwrap(),
            e(&ctx, "u^2").total_derivative(0)
        );
        // Translation field: E_{u_x}(u_xx) = u_xxx
        let translate = kappa1(&ctx, "u_x");
        assert_eq!(
            evolutionary(&translate, &e(&ctx, "u_xx")).unwrap(),
            e(&ctx, "u_xxx")
        );
        // Derivations kill constants.
        assert!(evolutionary(&phi, &e(&ctx, "5")).unwrap().is_zero());
    }

    #[test]
    fn evolutionary_commutes_with_total_derivatives() {
        let ctx = liouville_ctx();
        let phi = kappa1(&ctx, "u_x*u_y + exp(2*u)");
        let f = e(&ctx, "u*u_xy - u_x^2");
        for dir in 0..2 {
            let lhs = evolutionary(&phi, &f.total_derivative(dir)).unwrap();
            let rhs = evolutionary(&phi, &f).unwrap().total_derivative(dir);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn commutator_identities() {
        let ctx = kdv_ctx();
        let phi = kappa1(&ctx, "u*u_x");
        assert!(commutator(&phi, &phi).unwrap().is_zero());

        // Two flows of the same hierarchy commute.
        let f1 = kappa1(&ctx, "u_x");
        let f2 = kappa1(&ctx, "-1/2*u_xxx + 3*u*u_x");
        assert!(commutator(&f1, &f2).unwrap().is_zero());

        // [E_φ, E_ψ](F) = E_{[φ,ψ]}(F) on a generic F.
        let psi = kappa1(&ctx, "u_xx + u^2");
        let f = e(&ctx, "u*u_x^2");
        let lhs = evolutionary(&phi, &evolutionary(&psi, &f).unwrap())
            .unwrap()
            .sub(&evolutionary(&psi, &evolutionary(&phi, &f).unwrap()).unwrap())
            .unwrap();
        let rhs = evolutionary(&commutator(&phi, &psi).unwrap(), &f).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn covector_sections_are_rejected_by_evolutionary() {
        let ctx = kdv_ctx();
        let odd = Section::new(
            &ctx,
            Space { dim: 1, parity: Parity::Odd },
            vec![e(&ctx, "u")],
        )
        .unwrap();
        assert!(matches!(
            evolutionary(&odd, &e(&ctx, "u_x")),
            Err(Error::ParityMismatch(_))
        ));
    }

    #[test]
    fn linearization_examples() {
        let ctx = kdv_ctx();
        // ℓ_w for w = u_x² − u_xx is 2u_x·D_x − D_x².
        let ell = linearization_expr(&e(&ctx, "u_x^2 - u_xx")).unwrap();
        let phi = kappa1(&ctx, "u*u_x");
        assert_eq!(
            ell.apply(&Section::kappa(&ctx, vec![e(&ctx, "u*u_x")]).unwrap())
                .unwrap()
                .component(0),
            &evolutionary(&phi, &e(&ctx, "u_x^2 - u_xx")).unwrap()
        );
        // ℓ_u = identity.
        let id = linearization_expr(&e(&ctx, "u")).unwrap();
        assert_eq!(
            id.apply(&Section::kappa(&ctx, vec![e(&ctx, "u_xx")]).unwrap())
                .unwrap()
                .component(0),
            &e(&ctx, "u_xx")
        );
        // Entries of ℓ_w match 2u_x·D_x − D_x^2 exactly.
        let expected = crate::operators::TotalOperator::scalar_op(
            &ctx,
            crate::expr::parse_operator_entry(&ctx, "2*u_x*D_x - D_x^2").unwrap(),
            Space::kappa(&ctx),
            Space { dim: 1, parity: Parity::Even },
        )
        .unwrap();
        assert!(ell.same_entries(&expected));

        // ℓ_{exp(2u)} = 2·exp(2u) (zero order).
        let ee = linearization_expr(&e(&ctx, "exp(2*u)")).unwrap();
        assert!(ee.is_zero_order());
        assert_eq!(
            ee.coefficient_matrix().unwrap()[0][0],
            e(&ctx, "2*exp(2*u)")
        );
    }

    #[test]
    fn euler_operator_examples() {
        let ctx = kdv_ctx();
        assert_eq!(
            euler_operator(&e(&ctx, "u_x^2")).unwrap().component(0),
            &e(&ctx, "-2*u_xx")
        );
        // Euler annihilates total derivatives.
        let f = e(&ctx, "u*u_x*u_xx + exp(3*u)*u_x");
        assert!(euler_operator(&f.total_derivative(0)).unwrap().is_zero());
        // δH₂/δu for the second KdV Hamiltonian density.
        assert_eq!(
            euler_operator(&e(&ctx, "1/2*u^3 + 1/4*u_x^2"))
                .unwrap()
                .component(0),
            &e(&ctx, "3/2*u^2 - 1/2*u_xx")
        );
    }

    #[test]
    fn homotopy_inverse_examples() {
        let ctx = kdv_ctx();
        // Casimir: δ/δu (∫u) = 1.
        let one = Section::new(
            &ctx,
            Space { dim: 1, parity: Parity::Odd },
            vec![e(&ctx, "1")],
        )
        .unwrap();
        let h = homotopy_inverse(&one).unwrap();
        assert_eq!(h.density(), &e(&ctx, "u"));

        let psi = Section::new(
            &ctx,
            Space { dim: 1, parity: Parity::Odd },
            vec![e(&ctx, "u")],
        )
        .unwrap();
        assert_eq!(homotopy_inverse(&psi).unwrap().density(), &e(&ctx, "1/2*u^2"));

        // ψ₂ = (3/2)u² − ½u_xx reconstructs H₂ up to a total divergence.
        let psi2 = Section::new(
            &ctx,
            Space { dim: 1, parity: Parity::Odd },
            vec![e(&ctx, "3/2*u^2 - 1/2*u_xx")],
        )
        .unwrap();
        let h2 = homotopy_inverse(&psi2).unwrap();
        assert!(h2
            .equivalent(&Functional::new(e(&ctx, "1/2*u^3 + 1/4*u_x^2")))
            .unwrap());
        assert_eq!(
            euler_operator(h2.density()).unwrap().component(0),
            psi2.component(0)
        );
    }

    #[test]
    fn homotopy_rejects_non_gradients_and_exponentials() {
        let ctx = kdv_ctx();
        let not_gradient = Section::new(
            &ctx,
            Space { dim: 1, parity: Parity::Odd },
            vec![e(&ctx, "u*u_xx")],
        )
        .unwrap();
        assert!(matches!(
            homotopy_inverse(&not_gradient),
            Err(Error::NotVariational(_))
        ));
        let with_exp = Section::new(
            &ctx,
            Space { dim: 1, parity: Parity::Odd },
            vec![e(&ctx, "exp(2*u)")],
        )
        .unwrap();
        assert!(matches!(homotopy_inverse(&with_exp), Err(Error::HomotopyExp)));
    }

    #[test]
    fn total_divergence_detection() {
        let ctx = kdv_ctx();
        assert!(is_total_divergence(&e(&ctx, "u_x*u_xx")));
        assert!(!is_total_divergence(&e(&ctx, "u^2")));
        assert!(is_total_divergence(&e(&ctx, "u*u_xxx + 3*u_x*u_xx")));
    }

    #[test]
    fn liouville_reduction() {
        let ctx = liouville_ctx();
        let uxy = JetVar::new(0, MultiIndex::new(vec![1, 1]));
        let eq = Equation::new(&ctx, vec![(uxy, e(&ctx, "exp(2*u)"))]).unwrap();
        assert!(reduce_on_shell(&e(&ctx, "u_xy - exp(2*u)"), &eq)
            .unwrap()
            .is_zero());
        assert_eq!(
            reduce_on_shell(&e(&ctx, "u_xx"), &eq).unwrap(),
            e(&ctx, "u_xx")
        );
        // w = u_x² − u_xx generates a conservation law: D_y(w) ≐ 0.
        let w = e(&ctx, "u_x^2 - u_xx");
        let dyw = w.total_derivative(1);
        assert!(reduce_on_shell(&dyw, &eq).unwrap().is_zero());
        // Reduction is idempotent.
        let f = e(&ctx, "u_xxy*u_xy + u_yy");
        let once = reduce_on_shell(&f, &eq).unwrap();
        assert_eq!(reduce_on_shell(&once, &eq).unwrap(), once);
    }

    #[test]
    fn equation_validation() {
        let ctx = liouville_ctx();
        let uxy = JetVar::new(0, MultiIndex::new(vec![1, 1]));
        let uxxy = JetVar::new(0, MultiIndex::new(vec![2, 1]));
        assert!(Equation::new(
            &ctx,
            vec![
                (uxy.clone(), e(&ctx, "exp(2*u)")),
                (uxxy, e(&ctx, "0")),
            ]
        )
        .is_err());
        // Ill-oriented rule loops forever and is reported.
        let u0 = JetVar::base(0, 2);
        let eq = Equation::new(&ctx, vec![(u0, e(&ctx, "u^2"))])
            .unwrap()
            .with_max_rounds(5);
        assert!(matches!(
            reduce_on_shell(&e(&ctx, "u"), &eq),
            Err(Error::ReductionDepth(5))
        ));
    }

    #[test]
    fn functional_equality_modulo_divergence() {
        let ctx = kdv_ctx();
        let a = Functional::new(e(&ctx, "1/2*u^3 + 1/4*u_x^2"));
        let b = Functional::new(e(&ctx, "1/2*u^3 - 1/4*u*u_xx"));
        assert!(a.equivalent(&b).unwrap());
        assert!(!a.equivalent(&Functional::new(e(&ctx, "u^3"))).unwrap());
    }
}
