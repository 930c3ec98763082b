//! Identifiability guard.
//!
//! A mixture of Gaussian copulas is only identifiable when at least one
//! variable carries a margin with unbounded support, i.e. is continuous or
//! integer. With ordinal variables alone the latent thresholds can absorb
//! any relabeling of the dependence structure, so distinct parameters give
//! identical distributions. The argument works by sending a continuous or
//! integer coordinate to infinity and reading each component's correlation
//! and margin parameters off the dominating tail term; nothing of it is
//! executable, so only the resulting condition is checked here.

use crate::schema::{Schema, VariableKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Identifiable,
    NotIdentifiable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiabilityCheck {
    pub verdict: Verdict,
    pub n_continuous: usize,
    pub n_integer: usize,
}

impl IdentifiabilityCheck {
    pub fn is_identifiable(&self) -> bool {
        self.verdict == Verdict::Identifiable
    }
}

pub fn check_identifiability(schema: &Schema) -> IdentifiabilityCheck {
    let n_continuous = schema.n_continuous();
    let n_integer = schema
        .columns()
        .iter()
        .filter(|c| c.kind == VariableKind::Integer)
        .count();
    let verdict = if n_continuous + n_integer == 0 {
        Verdict::NotIdentifiable("at least one continuous or integer variable is required".into())
    } else {
        Verdict::Identifiable
    };
    IdentifiabilityCheck {
        verdict,
        n_continuous,
        n_integer,
    }
}
