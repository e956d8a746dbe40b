//! Matrix total-differential operators in `c·D^σ` normal form: application,
//! composition, adjoints, commutators of image fields, reparametrization and
//! constructive inversion of `D_x` on its image.

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::context::{same_ctx, Ctx, Space};
use crate::error::{Error, Result};
use crate::expr::{DiffExpr, JetVar, Rat};
use crate::jetcalc::{commutator, Section};
use crate::multi_index::{multi_binomial, MultiIndex};

/// One matrix entry: a finite sum `Σ c_σ · D^σ`, sorted by `σ`, coefficients
/// nonzero, like indices merged.
pub type OpEntry = Vec<(DiffExpr, MultiIndex)>;

fn normalize_entry(ctx: &Ctx, mut terms: OpEntry) -> OpEntry {
    terms.sort_by(|a, b| a.1.cmp(&b.1));
    let mut out: OpEntry = Vec::with_capacity(terms.len());
    for (coeff, sigma) in terms {
        if let Some((last, s)) = out.last_mut() {
            if *s == sigma {
                *last = last.add(&coeff).expect("same context");
                continue;
            }
        }
        out.push((coeff, sigma));
    }
    out.retain(|(c, _)| !c.is_zero());
    let _ = ctx;
    out
}

/// A linear matrix operator in total derivatives between section spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalOperator {
    ctx: Ctx,
    domain: Space,
    codomain: Space,
    /// `entries[row][col]`, rows indexing the codomain.
    entries: Vec<Vec<OpEntry>>,
}

impl TotalOperator {
    pub fn new(
        ctx: &Ctx,
        domain: Space,
        codomain: Space,
        entries: Vec<Vec<OpEntry>>,
    ) -> Result<Self> {
        if entries.len() != codomain.dim || entries.iter().any(|r| r.len() != domain.dim) {
            return Err(Error::DimensionMismatch(format!(
                "operator entries must form a {}×{} matrix",
                codomain.dim, domain.dim
            )));
        }
        for row in &entries {
            for entry in row {
                for (c, sigma) in entry {
                    same_ctx(ctx, c.ctx())?;
                    if sigma.len() != ctx.n_independents() {
                        return Err(Error::DimensionMismatch(
                            "multi-index arity must match the independents".into(),
                        ));
                    }
                }
            }
        }
        let entries = entries
            .into_iter()
            .map(|row| row.into_iter().map(|e| normalize_entry(ctx, e)).collect())
            .collect();
        Ok(TotalOperator {
            ctx: ctx.clone(),
            domain,
            codomain,
            entries,
        })
    }

    pub fn identity(ctx: &Ctx, space: Space) -> Self {
        let entries = (0..space.dim)
            .map(|r| {
                (0..space.dim)
                    .map(|c| {
                        if r == c {
                            vec![(
                                DiffExpr::one(ctx),
                                MultiIndex::zero(ctx.n_independents()),
                            )]
                        } else {
                            Vec::new()
                        }
                    })
                    .collect()
            })
            .collect();
        TotalOperator {
            ctx: ctx.clone(),
            domain: space,
            codomain: space,
            entries,
        }
    }

    pub fn zero(ctx: &Ctx, domain: Space, codomain: Space) -> Self {
        TotalOperator {
            ctx: ctx.clone(),
            domain,
            codomain,
            entries: vec![vec![Vec::new(); domain.dim]; codomain.dim],
        }
    }

    /// A 1×1 operator from parsed `(coefficient, σ)` terms.
    pub fn scalar_op(ctx: &Ctx, terms: OpEntry, domain: Space, codomain: Space) -> Result<Self> {
        TotalOperator::new(ctx, domain, codomain, vec![vec![terms]])
    }

    pub fn ctx(&self) -> &Ctx {
        &self.ctx
    }

    pub fn domain(&self) -> Space {
        self.domain
    }

    pub fn codomain(&self) -> Space {
        self.codomain
    }

    pub fn rows(&self) -> usize {
        self.codomain.dim
    }

    pub fn cols(&self) -> usize {
        self.domain.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> &OpEntry {
        &self.entries[row][col]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(|e| e.is_empty())
    }

    pub fn is_identity(&self) -> bool {
        self.domain == self.codomain && *self == TotalOperator::identity(&self.ctx, self.domain)
    }

    /// Highest total derivative order among the entries.
    pub fn max_order(&self) -> u32 {
        self.entries
            .iter()
            .flatten()
            .flatten()
            .map(|(_, s)| s.order())
            .max()
            .unwrap_or(0)
    }

    /// Highest jet order among the coefficients.
    pub fn max_coefficient_order(&self) -> u32 {
        self.entries
            .iter()
            .flatten()
            .flatten()
            .map(|(c, _)| c.max_order())
            .max()
            .unwrap_or(0)
    }

    pub fn coefficients(&self) -> impl Iterator<Item = &DiffExpr> {
        self.entries.iter().flatten().flatten().map(|(c, _)| c)
    }

    pub fn coefficients_depend_on_parameter(&self) -> bool {
        self.coefficients().any(|c| c.depends_on_parameter())
    }

    pub fn map_coefficients(
        &self,
        f: impl Fn(&DiffExpr) -> Result<DiffExpr>,
    ) -> Result<TotalOperator> {
        let mut entries = Vec::with_capacity(self.rows());
        for row in &self.entries {
            let mut new_row = Vec::with_capacity(row.len());
            for entry in row {
                let mut terms = Vec::with_capacity(entry.len());
                for (c, sigma) in entry {
                    terms.push((f(c)?, sigma.clone()));
                }
                new_row.push(normalize_entry(&self.ctx, terms));
            }
            entries.push(new_row);
        }
        Ok(TotalOperator {
            ctx: self.ctx.clone(),
            domain: self.domain,
            codomain: self.codomain,
            entries,
        })
    }

    /// Componentwise application `Σ_σ c_σ·D^σ(p)`.
    pub fn apply(&self, p: &Section) -> Result<Section> {
        same_ctx(&self.ctx, p.ctx())?;
        if p.space() != self.domain {
            return Err(Error::SpaceMismatch(format!(
                "operator domain {:?}, section in {:?}",
                self.domain,
                p.space()
            )));
        }
        let mut components = Vec::with_capacity(self.rows());
        for row in &self.entries {
            let mut acc = DiffExpr::zero(&self.ctx);
            for (col, entry) in row.iter().enumerate() {
                for (c, sigma) in entry {
                    let term = c.mul(&p.component(col).total_derivative_multi(sigma))?;
                    acc = acc.add(&term)?;
                }
            }
            components.push(acc);
        }
        Section::new(&self.ctx, self.codomain, components)
    }

    /// Operator composition `self ∘ other`, expanding `D^σ ∘ c` by the
    /// Leibniz rule into `c·D^σ` normal form.
    pub fn compose(&self, other: &TotalOperator) -> Result<TotalOperator> {
        same_ctx(&self.ctx, &other.ctx)?;
        if other.codomain != self.domain {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose: inner codomain {:?} vs outer domain {:?}",
                other.codomain, self.domain
            )));
        }
        let mut entries = vec![vec![Vec::new(); other.cols()]; self.rows()];
        for r in 0..self.rows() {
            for c in 0..other.cols() {
                let mut terms: OpEntry = Vec::new();
                for k in 0..self.cols() {
                    for (c1, sigma) in &self.entries[r][k] {
                        for (c2, tau) in &other.entries[k][c] {
                            compose_term(c1, sigma, c2, tau, &mut terms)?;
                        }
                    }
                }
                entries[r][c] = normalize_entry(&self.ctx, terms);
            }
        }
        Ok(TotalOperator {
            ctx: self.ctx.clone(),
            domain: other.domain,
            codomain: self.codomain,
            entries,
        })
    }

    /// Formal adjoint: entrywise `(Σ c_σ D^σ)† = Σ (−D)^σ ∘ c_σ`, transposed.
    pub fn adjoint(&self) -> TotalOperator {
        let mut entries = vec![vec![Vec::new(); self.rows()]; self.cols()];
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                let mut terms: OpEntry = Vec::new();
                for (coeff, sigma) in &self.entries[r][c] {
                    // (−D)^σ ∘ c = Σ_{μ≤σ} (−1)^{|σ|} C(σ,μ)·D^μ(c)·D^{σ−μ}
                    let sign_all = if sigma.order() % 2 == 0 {
                        Rat::one()
                    } else {
                        -Rat::one()
                    };
                    for mu in sigma.divisors() {
                        let binom = Rat::from_integer(multi_binomial(sigma, &mu));
                        let dcoeff = coeff.total_derivative_multi(&mu);
                        terms.push((
                            dcoeff.scale(&(&sign_all * binom)),
                            sigma.sub(&mu),
                        ));
                    }
                }
                entries[c][r] = normalize_entry(&self.ctx, terms);
            }
        }
        TotalOperator {
            ctx: self.ctx.clone(),
            domain: Space {
                dim: self.codomain.dim,
                parity: self.codomain.parity,
            },
            codomain: Space {
                dim: self.domain.dim,
                parity: self.domain.parity,
            },
            entries,
        }
    }

    pub fn add(&self, other: &TotalOperator) -> Result<TotalOperator> {
        same_ctx(&self.ctx, &other.ctx)?;
        if self.domain != other.domain || self.codomain != other.codomain {
            return Err(Error::SpaceMismatch("operator sum shape mismatch".into()));
        }
        let mut entries = self.entries.clone();
        for (r, row) in other.entries.iter().enumerate() {
            for (c, entry) in row.iter().enumerate() {
                entries[r][c].extend(entry.iter().cloned());
                entries[r][c] = normalize_entry(&self.ctx, std::mem::take(&mut entries[r][c]));
            }
        }
        Ok(TotalOperator {
            ctx: self.ctx.clone(),
            domain: self.domain,
            codomain: self.codomain,
            entries,
        })
    }

    pub fn neg(&self) -> TotalOperator {
        self.scale_expr(&DiffExpr::int(&self.ctx, -1))
            .expect("same context")
    }

    pub fn sub(&self, other: &TotalOperator) -> Result<TotalOperator> {
        self.add(&other.neg())
    }

    /// Left multiplication of every coefficient, e.g. by a scalar parameter.
    pub fn scale_expr(&self, factor: &DiffExpr) -> Result<TotalOperator> {
        self.map_coefficients(|c| c.mul(factor))
    }

    pub fn scale(&self, factor: &Rat) -> TotalOperator {
        self.map_coefficients(|c| Ok(c.scale(factor)))
            .expect("scaling cannot fail")
    }

    /// True when every entry is a pure multiplication operator (σ = 0).
    pub fn is_zero_order(&self) -> bool {
        self.entries
            .iter()
            .flatten()
            .flatten()
            .all(|(_, s)| s.is_zero())
    }

    /// The coefficient matrix of a zero-order operator.
    pub fn coefficient_matrix(&self) -> Result<Vec<Vec<DiffExpr>>> {
        if !self.is_zero_order() {
            return Err(Error::Unsupported(
                "a zero-order operator".into(),
            ));
        }
        Ok(self
            .entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| {
                        e.first()
                            .map(|(c, _)| c.clone())
                            .unwrap_or_else(|| DiffExpr::zero(&self.ctx))
                    })
                    .collect()
            })
            .collect())
    }

    /// Inverse of a square zero-order operator, computed by Gauss–Jordan
    /// elimination over the expression fraction field. Pivots must be
    /// invertible expressions (rational multiples of univariate base
    /// polynomials).
    pub fn zero_order_inverse(&self) -> Result<TotalOperator> {
        if self.domain.dim != self.codomain.dim {
            return Err(Error::DimensionMismatch(
                "only square operators are invertible".into(),
            ));
        }
        let n = self.domain.dim;
        let mut m = self.coefficient_matrix()?;
        let mut inv: Vec<Vec<DiffExpr>> = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| {
                        if r == c {
                            DiffExpr::one(&self.ctx)
                        } else {
                            DiffExpr::zero(&self.ctx)
                        }
                    })
                    .collect()
            })
            .collect();
        for col in 0..n {
            let Some(at) = (col..n).find(|&r| m[r][col].try_inverse().is_ok()) else {
                return Err(Error::NotInvertible(format!(
                    "no invertible pivot in column {col}"
                )));
            };
            m.swap(col, at);
            inv.swap(col, at);
            let pivot_inv = m[col][col].try_inverse()?;
            for c in 0..n {
                m[col][c] = m[col][c].mul(&pivot_inv)?;
                inv[col][c] = inv[col][c].mul(&pivot_inv)?;
            }
            for r in 0..n {
                if r == col || m[r][col].is_zero() {
                    continue;
                }
                let f = m[r][col].clone();
                for c in 0..n {
                    let t = f.mul(&m[col][c])?;
                    m[r][c] = m[r][c].sub(&t)?;
                    let t = f.mul(&inv[col][c])?;
                    inv[r][c] = inv[r][c].sub(&t)?;
                }
            }
        }
        let zero_index = MultiIndex::zero(self.ctx.n_independents());
        let entries = inv
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|c| {
                        if c.is_zero() {
                            Vec::new()
                        } else {
                            vec![(c, zero_index.clone())]
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(TotalOperator {
            ctx: self.ctx.clone(),
            domain: self.codomain,
            codomain: self.domain,
            entries,
        })
    }

    /// True when row `r` of the two operators differs (diagnostic helper).
    pub(crate) fn row_differs(&self, other: &TotalOperator, r: usize) -> bool {
        self.entries.get(r) != other.entries.get(r)
    }

    /// Entrywise equality, ignoring the parity tags of the space labels
    /// (the adjoint maps between dual spaces).
    pub fn same_entries(&self, other: &TotalOperator) -> bool {
        self.rows() == other.rows()
            && self.cols() == other.cols()
            && self.entries == other.entries
    }
}

fn compose_term(
    c1: &DiffExpr,
    sigma: &MultiIndex,
    c2: &DiffExpr,
    tau: &MultiIndex,
    out: &mut OpEntry,
) -> Result<()> {
    for mu in sigma.divisors() {
        let binom = Rat::from_integer(multi_binomial(sigma, &mu));
        let coeff = c1.mul(&c2.total_derivative_multi(&mu))?.scale(&binom);
        if !coeff.is_zero() {
            out.push((coeff, sigma.sub(&mu).add(tau)));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tuples
// ---------------------------------------------------------------------------

/// An ordered tuple of operators sharing domain and codomain, the codomain
/// being κ(π).
#[derive(Debug, Clone)]
pub struct OperatorTuple {
    ops: Vec<TotalOperator>,
}

impl OperatorTuple {
    pub fn new(ops: Vec<TotalOperator>) -> Result<Self> {
        let Some(first) = ops.first() else {
            return Err(Error::DimensionMismatch("empty operator tuple".into()));
        };
        let kappa = Space::kappa(first.ctx());
        for op in &ops {
            same_ctx(first.ctx(), op.ctx())?;
            if op.domain() != first.domain() {
                return Err(Error::SpaceMismatch(
                    "tuple members must share their domain".into(),
                ));
            }
            if op.codomain() != kappa {
                return Err(Error::SpaceMismatch(
                    "tuple members must map into κ(π)".into(),
                ));
            }
        }
        Ok(OperatorTuple { ops })
    }

    pub fn ctx(&self) -> &Ctx {
        self.ops[0].ctx()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn domain(&self) -> Space {
        self.ops[0].domain()
    }

    pub fn op(&self, i: usize) -> &TotalOperator {
        &self.ops[i]
    }

    pub fn ops(&self) -> &[TotalOperator] {
        &self.ops
    }

    pub fn max_order(&self) -> u32 {
        self.ops.iter().map(|o| o.max_order()).max().unwrap_or(0)
    }

    /// The combination `Σ λ_i · A_i` over declared scalar parameters.
    pub fn lambda_combination(&self) -> Result<TotalOperator> {
        let ctx = self.ctx();
        if ctx.scalars().len() < self.len() {
            return Err(Error::Unsupported(format!(
                "{} scalar parameters declared, {} required for the λ-combination",
                ctx.scalars().len(),
                self.len()
            )));
        }
        let mut acc = TotalOperator::zero(ctx, self.domain(), Space::kappa(ctx));
        for (i, op) in self.ops.iter().enumerate() {
            acc = acc.add(&op.scale_expr(&DiffExpr::scalar(ctx, i))?)?;
        }
        Ok(acc)
    }
}

// ---------------------------------------------------------------------------
// Image commutators, reparametrization, D_x inversion, normality
// ---------------------------------------------------------------------------

/// The generating section of `[E_{A(p)}, E_{B(q)}]` on the tautological
/// argument sections p, q of the first two parameter groups: a vector of
/// differential functions bilinear in the jets of p and q.
pub fn image_commutator_section(a: &TotalOperator, b: &TotalOperator) -> Result<Section> {
    same_ctx(a.ctx(), b.ctx())?;
    let ctx = a.ctx();
    if a.domain() != b.domain() {
        return Err(Error::SpaceMismatch(
            "operators must share their domain".into(),
        ));
    }
    if a.coefficients_depend_on_parameter() || b.coefficients_depend_on_parameter() {
        return Err(Error::ParameterFibre(
            "parameter fibres already in use by operator coefficients".into(),
        ));
    }
    let p = Section::parameter(ctx, 0)?;
    let q = Section::parameter(ctx, 1)?;
    if p.space() != a.domain() || q.space() != a.domain() {
        return Err(Error::SpaceMismatch(
            "parameter groups do not match the operator domain".into(),
        ));
    }
    let phi = a.apply(&p)?;
    let psi = b.apply(&q)?;
    commutator(&phi, &psi)
}

/// `A ∘ g⁻¹` after verifying that the supplied inverse is two-sided exact.
pub fn reparametrize(
    a: &TotalOperator,
    g: &TotalOperator,
    g_inverse: &TotalOperator,
) -> Result<TotalOperator> {
    let left = g.compose(g_inverse)?;
    let right = g_inverse.compose(g)?;
    if !left.is_identity() || !right.is_identity() {
        return Err(Error::BadInverse);
    }
    a.compose(g_inverse)
}

/// Constructive inversion of the total derivative in the first independent
/// direction on its image in the differential-polynomial ring: returns ψ with
/// `D_x(ψ) = φ`, or reports non-membership.
pub fn invert_dx_on_image(phi: &DiffExpr) -> Result<DiffExpr> {
    let ctx = phi.ctx().clone();
    let dir = 0usize;
    let dir_name = ctx.independent_name(dir).to_string();
    if !phi.is_polynomial() || phi.has_exp() {
        return Err(Error::Unsupported(
            "a polynomial in jets with polynomial base coefficients".into(),
        ));
    }
    let foreign = |index: &MultiIndex| (0..index.len()).any(|d| d != dir && index[d] > 0);
    for v in phi.jet_vars() {
        if foreign(&v.index) {
            return Err(Error::Unsupported(format!(
                "inversion along {dir_name} only: jets in other directions present"
            )));
        }
    }

    let mut rest = phi.clone();
    let mut result = DiffExpr::zero(&ctx);
    let budget = 4 * phi.terms().len() + 64;
    for _ in 0..budget {
        if rest.is_zero() {
            return Ok(result);
        }
        let top = rest.jet_vars().into_iter().max_by(|a, b| {
            a.order()
                .cmp(&b.order())
                .then_with(|| a.fibre.cmp(&b.fibre))
        });
        match top {
            None => {
                // Pure base polynomial in x: integrate monomially.
                let mut terms = Vec::new();
                for m in rest.terms() {
                    if m.key.base.iter().enumerate().any(|(d, &k)| d != dir && k > 0)
                        || m.key.scalars.iter().any(|&k| k > 0)
                    {
                        return Err(Error::NotInImage {
                            dir: dir_name,
                            reason: "residue involves other base variables or scalars".into(),
                        });
                    }
                    let mut key = m.key.clone();
                    key.base[dir] += 1;
                    terms.push(crate::expr::Monomial {
                        coeff: &m.coeff * crate::expr::rat(1, (key.base[dir]) as i64),
                        key,
                    });
                }
                let anti = DiffExpr::from_monomials(&ctx, terms, Vec::new());
                result = result.add(&anti)?;
                rest = rest.sub(&anti.total_derivative(dir))?;
                debug_assert!(rest.is_zero());
                return Ok(result);
            }
            Some(v) => {
                let k = v.index[dir];
                if k == 0 {
                    return Err(Error::NotInImage {
                        dir: dir_name,
                        reason: format!(
                            "zero-order jet of `{}` remains",
                            ctx.fibre(v.fibre).name
                        ),
                    });
                }
                let coeff = rest.partial(&v);
                // Linearity of the top variable.
                if !coeff.partial(&v).is_zero() {
                    return Err(Error::NotInImage {
                        dir: dir_name,
                        reason: "top-order jet variable occurs nonlinearly".into(),
                    });
                }
                // The coefficient must not involve any jet of the same or
                // higher order (it equals ∂ψ/∂(one order lower)).
                let bad = coeff.jet_vars().into_iter().any(|w| w.order() >= k);
                if bad {
                    return Err(Error::NotInImage {
                        dir: dir_name,
                        reason: "top-order coefficient involves jets of the same order".into(),
                    });
                }
                let lower = JetVar::new(v.fibre, {
                    let mut o = v.index.orders().to_vec();
                    o[dir] -= 1;
                    MultiIndex::new(o)
                });
                let anti = antiderivative_in_var(&coeff, &lower)?;
                result = result.add(&anti)?;
                rest = rest.sub(&anti.total_derivative(dir))?;
            }
        }
    }
    Err(Error::Internal(
        "D_x inversion failed to terminate within its budget".into(),
    ))
}

/// Polynomial antiderivative with respect to one jet variable.
fn antiderivative_in_var(e: &DiffExpr, v: &JetVar) -> Result<DiffExpr> {
    let ctx = e.ctx();
    let mut terms = Vec::new();
    for m in e.terms() {
        let mut key = m.key.clone();
        match key.vars.iter_mut().find(|(w, _)| w == v) {
            Some((_, k)) => {
                *k += 1;
                let kk = *k;
                terms.push(crate::expr::Monomial {
                    coeff: &m.coeff * crate::expr::rat(1, kk as i64),
                    key,
                });
            }
            None => {
                let mut key = m.key.clone();
                key.vars.push((v.clone(), 1));
                key.vars.sort_by(|a, b| a.0.cmp(&b.0));
                terms.push(crate::expr::Monomial {
                    coeff: m.coeff.clone(),
                    key,
                });
            }
        }
    }
    Ok(DiffExpr::from_monomials(ctx, terms, e.denominators().to_vec()))
}

/// Verdict of the sufficient normality test on the leading symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Normality {
    /// The top-order coefficient matrix in the named direction is invertible
    /// over the expression fraction field.
    NormalSufficient { direction: usize, order: u32 },
    Inconclusive { reason: String },
}

impl fmt::Display for Normality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normality::NormalSufficient { direction, order } => {
                write!(f, "normal (sufficient condition: leading symbol of order {order} in direction #{direction} is invertible)")
            }
            Normality::Inconclusive { reason } => write!(f, "inconclusive: {reason}"),
        }
    }
}

/// Sufficient normality check: does some direction carry an invertible
/// top-order coefficient matrix?
pub fn is_normal_heuristic(a: &TotalOperator) -> Normality {
    if a.is_zero() {
        return Normality::Inconclusive {
            reason: "zero operator".into(),
        };
    }
    if a.rows() != a.cols() {
        return Normality::Inconclusive {
            reason: "non-square operator".into(),
        };
    }
    let ctx = a.ctx();
    let order = a.max_order();
    for dir in 0..ctx.n_independents() {
        let mut lead = MultiIndex::zero(ctx.n_independents());
        for _ in 0..order {
            lead = lead.bumped(dir);
        }
        let mut matrix = Vec::with_capacity(a.rows());
        for r in 0..a.rows() {
            let row: Vec<DiffExpr> = (0..a.cols())
                .map(|c| {
                    a.entry(r, c)
                        .iter()
                        .find(|(_, s)| *s == lead)
                        .map(|(co, _)| co.clone())
                        .unwrap_or_else(|| DiffExpr::zero(ctx))
                })
                .collect();
            matrix.push(row);
        }
        if symbolic_det_nonzero(&matrix) {
            return Normality::NormalSufficient {
                direction: dir,
                order,
            };
        }
    }
    Normality::Inconclusive {
        reason: "no direction has an invertible leading symbol".into(),
    }
}

fn symbolic_det_nonzero(m: &[Vec<DiffExpr>]) -> bool {
    !symbolic_det(m).is_zero()
}

fn symbolic_det(m: &[Vec<DiffExpr>]) -> DiffExpr {
    let n = m.len();
    if n == 0 {
        return DiffExpr::zero(&m[0][0].ctx().clone());
    }
    let ctx = m[0][0].ctx().clone();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut det = DiffExpr::zero(&ctx);
    for (c, top) in m[0].iter().enumerate() {
        if top.is_zero() {
            continue;
        }
        let minor: Vec<Vec<DiffExpr>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != c)
                    .map(|(_, e)| e.clone())
                    .collect()
            })
            .collect();
        let mut term = top.mul(&symbolic_det(&minor)).expect("same context");
        if c % 2 == 1 {
            term = term.neg();
        }
        det = det.add(&term).expect("same context");
    }
    det
}

// ---------------------------------------------------------------------------
// Display
// ---------------------------------------------------------------------------

fn fmt_d_part(ctx: &Ctx, sigma: &MultiIndex) -> String {
    let mut parts = Vec::new();
    for (d, &k) in sigma.orders().iter().enumerate() {
        if k == 1 {
            parts.push(format!("D_{}", ctx.independent_name(d)));
        } else if k > 1 {
            parts.push(format!("D_{}^{}", ctx.independent_name(d), k));
        }
    }
    parts.join("*")
}

pub fn fmt_entry(ctx: &Ctx, entry: &OpEntry) -> String {
    if entry.is_empty() {
        return "0".into();
    }
    // Highest order first for conventional reading.
    let mut terms: Vec<&(DiffExpr, MultiIndex)> = entry.iter().collect();
    terms.sort_by(|a, b| b.1.cmp(&a.1));
    let mut out = String::new();
    for (n, (coeff, sigma)) in terms.iter().enumerate() {
        let d = fmt_d_part(ctx, sigma);
        let (sign, mag) = coefficient_with_sign(coeff);
        if n == 0 {
            if sign {
                out.push('-');
            }
        } else if sign {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        if d.is_empty() {
            out.push_str(&mag);
        } else if mag == "1" {
            out.push_str(&d);
        } else {
            out.push_str(&mag);
            out.push('*');
            out.push_str(&d);
        }
    }
    out
}

/// Splits a leading minus off a one-term coefficient; multi-term coefficients
/// are parenthesized.
fn coefficient_with_sign(c: &DiffExpr) -> (bool, String) {
    if c.terms().len() == 1 && c.is_polynomial() {
        let neg = c.terms()[0].coeff < BigRational::zero();
        let m = if neg { c.neg() } else { c.clone() };
        (neg, m.to_string())
    } else {
        (false, format!("({c})"))
    }
}

impl fmt::Display for TotalOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rows() == 1 && self.cols() == 1 {
            return write!(f, "{}", fmt_entry(&self.ctx, &self.entries[0][0]));
        }
        let rows: Vec<String> = self
            .entries
            .iter()
            .map(|row| {
                let cells: Vec<String> =
                    row.iter().map(|e| fmt_entry(&self.ctx, e)).collect();
                format!("[{}]", cells.join(", "))
            })
            .collect();
        write!(f, "[{}]", rows.join(", "))
    }
}
