use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Z₂ parity of a fibre or a section space. Variational vectors are even,
/// variational covectors are odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parity::Even => write!(f, "even"),
            Parity::Odd => write!(f, "odd"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fibre {
    pub name: String,
    pub parity: Parity,
    /// Parameter fibres model free argument sections (the p, q) rather than
    /// field components; they carry full jets like any dependent.
    pub parameter: bool,
}

/// Shared, immutable description of a jet space: independent variables,
/// dependent fibres (including parameter fibres grouped into argument
/// sections) and formal commuting scalars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetContext {
    independents: Vec<String>,
    fibres: Vec<Fibre>,
    scalars: Vec<String>,
    param_groups: Vec<Vec<usize>>,
}

pub type Ctx = Arc<JetContext>;

impl JetContext {
    pub fn builder() -> JetContextBuilder {
        JetContextBuilder::default()
    }

    pub fn n_independents(&self) -> usize {
        self.independents.len()
    }

    pub fn independents(&self) -> &[String] {
        &self.independents
    }

    pub fn independent_name(&self, i: usize) -> &str {
        &self.independents[i]
    }

    pub fn independent_index(&self, name: &str) -> Result<usize> {
        self.independents
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownIndependent(name.to_string()))
    }

    pub fn fibres(&self) -> &[Fibre] {
        &self.fibres
    }

    pub fn fibre(&self, i: usize) -> &Fibre {
        &self.fibres[i]
    }

    pub fn fibre_index(&self, name: &str) -> Option<usize> {
        self.fibres.iter().position(|f| f.name == name)
    }

    /// Indices of the ordinary (non-parameter) fibres, in declaration order.
    pub fn ordinary_fibres(&self) -> Vec<usize> {
        (0..self.fibres.len())
            .filter(|&i| !self.fibres[i].parameter)
            .collect()
    }

    pub fn n_ordinary(&self) -> usize {
        self.fibres.iter().filter(|f| !f.parameter).count()
    }

    pub fn is_parameter(&self, fibre: usize) -> bool {
        self.fibres[fibre].parameter
    }

    pub fn scalars(&self) -> &[String] {
        &self.scalars
    }

    pub fn scalar_index(&self, name: &str) -> Option<usize> {
        self.scalars.iter().position(|n| n == name)
    }

    /// Argument-section groups of parameter fibres.
    pub fn param_groups(&self) -> &[Vec<usize>] {
        &self.param_groups
    }

    pub fn param_group(&self, g: usize) -> Result<&[usize]> {
        self.param_groups
            .get(g)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::InvalidContext(format!("no parameter group {g}")))
    }

    /// Parity shared by a parameter group.
    pub fn param_group_parity(&self, g: usize) -> Result<Parity> {
        let group = self.param_group(g)?;
        Ok(self.fibres[group[0]].parity)
    }
}

#[derive(Default)]
pub struct JetContextBuilder {
    independents: Vec<String>,
    fibres: Vec<Fibre>,
    scalars: Vec<String>,
    param_groups: Vec<Vec<usize>>,
}

impl JetContextBuilder {
    pub fn independents<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.independents = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn dependent(mut self, name: impl Into<String>, parity: Parity) -> Self {
        self.fibres.push(Fibre {
            name: name.into(),
            parity,
            parameter: false,
        });
        self
    }

    /// Declare one argument section as a group of parameter fibres.
    pub fn parameter_group<I, S>(mut self, names: I, parity: Parity) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut group = Vec::new();
        for name in names {
            group.push(self.fibres.len());
            self.fibres.push(Fibre {
                name: name.into(),
                parity,
                parameter: true,
            });
        }
        self.param_groups.push(group);
        self
    }

    pub fn scalar(mut self, name: impl Into<String>) -> Self {
        self.scalars.push(name.into());
        self
    }

    pub fn build(self) -> Result<Ctx> {
        let ctx = JetContext {
            independents: self.independents,
            fibres: self.fibres,
            scalars: self.scalars,
            param_groups: self.param_groups,
        };
        ctx.validate()?;
        Ok(Arc::new(ctx))
    }
}

impl JetContext {
    fn validate(&self) -> Result<()> {
        if self.independents.is_empty() {
            return Err(Error::InvalidContext(
                "at least one independent variable is required".into(),
            ));
        }
        for name in &self.independents {
            let ok = name.len() == 1 && name.chars().all(|c| c.is_ascii_lowercase());
            if !ok {
                return Err(Error::InvalidContext(format!(
                    "independent `{name}` must be a single lowercase letter (jet suffixes are per-letter)"
                )));
            }
        }
        let mut names: Vec<&str> = self.independents.iter().map(|s| s.as_str()).collect();
        names.extend(self.fibres.iter().map(|f| f.name.as_str()));
        names.extend(self.scalars.iter().map(|s| s.as_str()));
        for (i, a) in names.iter().enumerate() {
            if names[i + 1..].contains(a) {
                return Err(Error::InvalidContext(format!("duplicate name `{a}`")));
            }
        }
        for f in self.fibres.iter().map(|f| &f.name).chain(&self.scalars) {
            if f == "exp" || f == "D" || f.starts_with("D_") || f.contains('_') {
                return Err(Error::InvalidContext(format!(
                    "name `{f}` collides with reserved syntax"
                )));
            }
            if !f.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                || !f.chars().all(|c| c.is_ascii_alphanumeric())
            {
                return Err(Error::InvalidContext(format!(
                    "name `{f}` must be alphanumeric and start with a letter"
                )));
            }
        }
        for group in &self.param_groups {
            if group.is_empty() {
                return Err(Error::InvalidContext("empty parameter group".into()));
            }
            let parity = self.fibres[group[0]].parity;
            if group.iter().any(|&i| self.fibres[i].parity != parity) {
                return Err(Error::InvalidContext(
                    "mixed parities inside a parameter group".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Checks that two expressions/sections/operators live over the same context.
pub fn same_ctx(a: &Ctx, b: &Ctx) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::ContextMismatch(
            "values constructed over different jet contexts".into(),
        ))
    }
}

/// A section space: its rank and parity. κ(π) sections are indexed by the
/// ordinary fibres; argument sections by the fibres of a parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Space {
    pub dim: usize,
    pub parity: Parity,
}

impl Space {
    /// The space κ(π) of generating sections of evolutionary derivations.
    pub fn kappa(ctx: &Ctx) -> Space {
        Space {
            dim: ctx.n_ordinary(),
            parity: Parity::Even,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_and_validates() {
        let ctx = JetContext::builder()
            .independents(["x", "y"])
            .dependent("u", Parity::Even)
            .parameter_group(["p"], Parity::Odd)
            .parameter_group(["q"], Parity::Odd)
            .scalar("lam1")
            .build()
            .unwrap();
        assert_eq!(ctx.n_independents(), 2);
        assert_eq!(ctx.n_ordinary(), 1);
        assert_eq!(ctx.param_groups().len(), 2);
        assert_eq!(ctx.fibre_index("q"), Some(2));
    }

    #[test]
    fn rejects_duplicates_and_reserved() {
        assert!(JetContext::builder()
            .independents(["x"])
            .dependent("x", Parity::Even)
            .build()
            .is_err());
        assert!(JetContext::builder()
            .independents(["x"])
            .dependent("exp", Parity::Even)
            .build()
            .is_err());
        assert!(JetContext::builder()
            .independents(["xx"])
            .dependent("u", Parity::Even)
            .build()
            .is_err());
    }
}
