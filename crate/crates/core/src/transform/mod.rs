//! Semantics-preserving translations between converging and halting models.

use std::fmt;

use crate::model::{model_hash, Model, ModelFile, Provenance};
use crate::neural::simple::{Affine, SimpleFunction};
use crate::rational::{RVector, Rational};

pub mod c2h;
pub mod h2c;

pub use c2h::{to_halting, to_halting_simple};
pub use h2c::{phi_network, to_converging, to_converging_simple, H2cModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    General,
    Simple,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::General => "general",
            Variant::Simple => "simple",
        })
    }
}

/// Wraps a derived model with a provenance block pointing at its source.
pub fn with_provenance(
    derived: impl Into<Model>,
    source: &Model,
    transform: &str,
    variant: Variant,
    bound: Option<Rational>,
) -> ModelFile {
    let mut file = ModelFile::new(derived);
    file.provenance = Some(Provenance {
        transform: transform.to_string(),
        variant: variant.to_string(),
        bound,
        source_sha256: model_hash(source),
    });
    file
}

/// The linear map selecting components `start..start + len` of an `n`-vector.
pub(crate) fn projection(n: usize, start: usize, len: usize) -> SimpleFunction {
    let rows = (0..len).map(|i| vec![(start + i, Rational::one())]).collect();
    SimpleFunction::affine(
        Affine::from_sparse(n, rows, RVector::zeros(len)).expect("projection dimensions"),
    )
}
