//! Reference parameter sets used by the simulation studies.

use crate::gauss::CorrelationMatrix;
use crate::margins::MarginParams;
use crate::model::{ComponentParams, Family, MixtureParams};
use crate::schema::{Schema, VariableKind};

/// Two-component mixture on (continuous, integer, binary) variables with
/// opposite-sign dependencies in the two components.
pub fn example1() -> (Schema, MixtureParams) {
    let schema = Schema::from_kinds(&[
        ("x1", VariableKind::Continuous),
        ("x2", VariableKind::Integer),
        ("x3", VariableKind::Ordinal { levels: 2 }),
    ])
    .expect("static schema");
    let g1 = CorrelationMatrix::from_rows(&[vec![1.0, -0.4, 0.4], vec![-0.4, 1.0, 0.4], vec![0.4, 0.4, 1.0]])
        .expect("static correlation");
    let g2 = CorrelationMatrix::from_rows(&[vec![1.0, 0.8, 0.1], vec![0.8, 1.0, 0.1], vec![0.1, 0.1, 1.0]])
        .expect("static correlation");
    let binary = MarginParams::Ordinal { probs: vec![0.5, 0.5] };
    let c1 = ComponentParams::new(
        g1,
        vec![
            MarginParams::Gaussian { mu: -2.0, sigma: 1.0 },
            MarginParams::Poisson { lambda: 5.0 },
            binary.clone(),
        ],
    );
    let c2 = ComponentParams::new(
        g2,
        vec![
            MarginParams::Gaussian { mu: 2.0, sigma: 1.0 },
            MarginParams::Poisson { lambda: 15.0 },
            binary,
        ],
    );
    let theta = MixtureParams::new(Family::Heteroscedastic, vec![0.5, 0.5], vec![c1, c2]).expect("static parameters");
    (schema, theta)
}
