//! Exact symbolic calculus for total-differential operators on jet spaces.
//!
//! The crate provides a differential-polynomial kernel with exact rational
//! arithmetic, variational-calculus operations (evolutionary derivations,
//! linearization, Euler operator, homotopy inversion, on-shell reduction),
//! matrix total-differential operators, verification of collective
//! commutation closure with extraction of the bi-differential structural
//! constants and their Christoffel-symbol components, and the bi-Hamiltonian
//! recursion that generates hierarchies of commuting conserved densities.

pub mod context;
pub mod error;
pub mod expr;
pub mod gamma;
pub mod jetcalc;
pub mod linsolve;
pub mod magri;
pub mod multi_index;
pub mod operators;

pub use context::{Ctx, Fibre, JetContext, Parity, Space};
pub use error::{Error, Result};
pub use expr::{parse_expr, parse_operator_entry, Assignment, DiffExpr, JetVar, Rat};
pub use gamma::{
    check_linear_compatibility, check_proposition, check_strong_compatibility, extract_gamma,
    residual, structural_constants, symmetry_classify, transform_gamma, AnsatzSpec,
    BiDiffOperator, BiTerm, Compatibility, Extraction, GammaFamily, GaugeReport,
};
pub use jetcalc::{
    commutator, euler_operator, evolutionary, homotopy_inverse, is_total_divergence,
    linearization, linearization_expr, reduce_on_shell, Equation, Functional, Section,
};
pub use magri::{is_casimir, jacobi_functional_check, poisson_bracket, verify_hierarchy, Certificate, HierarchyState};
pub use multi_index::MultiIndex;
pub use operators::{
    image_commutator_section, invert_dx_on_image, is_normal_heuristic, reparametrize, Normality,
    OperatorTuple, TotalOperator,
};
