//! Feedforward ReLU networks over exact rationals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{RVector, Rational};

/// An affine map `x ↦ W x + b`, stored row-sparse.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Affine {
    input_dim: usize,
    rows: Vec<Vec<(usize, Rational)>>,
    bias: RVector,
}

impl Affine {
    /// Builds from dense rows; every row must have `input_dim` entries.
    pub fn new(input_dim: usize, matrix: Vec<RVector>, bias: RVector) -> Result<Self> {
        if matrix.len() != bias.dim() {
            return Err(Error::InvalidNetwork(format!(
                "matrix has {} rows but bias has {} entries",
                matrix.len(),
                bias.dim()
            )));
        }
        let mut rows = Vec::with_capacity(matrix.len());
        for row in matrix {
            if row.dim() != input_dim {
                return Err(Error::InvalidNetwork(format!(
                    "matrix row has {} columns, expected {input_dim}",
                    row.dim()
                )));
            }
            rows.push(
                row.into_inner()
                    .into_iter()
                    .enumerate()
                    .filter(|(_, w)| !w.is_zero())
                    .collect(),
            );
        }
        Ok(Affine {
            input_dim,
            rows,
            bias,
        })
    }

    /// Builds from sparse rows `(column, weight)`.
    pub fn from_sparse(
        input_dim: usize,
        rows: Vec<Vec<(usize, Rational)>>,
        bias: RVector,
    ) -> Result<Self> {
        if rows.len() != bias.dim() {
            return Err(Error::InvalidNetwork("row/bias count mismatch".into()));
        }
        let mut clean = Vec::with_capacity(rows.len());
        for mut row in rows {
            if row.iter().any(|(c, _)| *c >= input_dim) {
                return Err(Error::InvalidNetwork("column index out of range".into()));
            }
            row.retain(|(_, w)| !w.is_zero());
            row.sort_by_key(|(c, _)| *c);
            clean.push(row);
        }
        Ok(Affine {
            input_dim,
            rows: clean,
            bias,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Affine {
            input_dim: dim,
            rows: (0..dim).map(|i| vec![(i, Rational::one())]).collect(),
            bias: RVector::zeros(dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn bias(&self) -> &RVector {
        &self.bias
    }

    pub fn sparse_rows(&self) -> &[Vec<(usize, Rational)>] {
        &self.rows
    }

    pub fn dense_rows(&self) -> Vec<RVector> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = RVector::zeros(self.input_dim);
                for (c, w) in row {
                    dense.set(*c, w.clone());
                }
                dense
            })
            .collect()
    }

    pub fn apply(&self, x: &RVector) -> Result<RVector> {
        if x.dim() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                found: x.dim(),
            });
        }
        let xs = x.components();
        Ok(self
            .rows
            .iter()
            .zip(self.bias.iter())
            .map(|(row, b)| {
                let mut acc = b.clone();
                for (c, w) in row {
                    if !xs[*c].is_zero() {
                        acc += &(w * &xs[*c]);
                    }
                }
                acc
            })
            .collect())
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Affine) -> Result<Affine> {
        if inner.output_dim() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                found: inner.output_dim(),
            });
        }
        let mut rows = Vec::with_capacity(self.rows.len());
        let mut bias = Vec::with_capacity(self.rows.len());
        for (row, b) in self.rows.iter().zip(self.bias.iter()) {
            let mut dense = vec![Rational::zero(); inner.input_dim];
            let mut acc = b.clone();
            for (k, w) in row {
                for (c, v) in &inner.rows[*k] {
                    dense[*c] += &(w * v);
                }
                acc += &(w * inner.bias.get(*k));
            }
            rows.push(dense.into_iter().enumerate().filter(|(_, w)| !w.is_zero()).collect());
            bias.push(acc);
        }
        Ok(Affine {
            input_dim: inner.input_dim,
            rows,
            bias: RVector::new(bias),
        })
    }
}

/// A simple function `A_ℓ ∘ ReLU ∘ … ∘ ReLU ∘ A_1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SimpleFunction {
    affines: Vec<Affine>,
}

impl SimpleFunction {
    /// ReLU sits between consecutive affine maps.
    pub fn new(affines: Vec<Affine>) -> Result<Self> {
        if affines.is_empty() {
            return Err(Error::InvalidNetwork("network has no affine layer".into()));
        }
        for pair in affines.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::InvalidNetwork(format!(
                    "layer output {} does not chain into input {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        Ok(SimpleFunction { affines })
    }

    pub fn affine(a: Affine) -> Self {
        SimpleFunction { affines: vec![a] }
    }

    pub fn identity(dim: usize) -> Self {
        SimpleFunction::affine(Affine::identity(dim))
    }

    pub fn input_dim(&self) -> usize {
        self.affines[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.affines.last().expect("nonempty").output_dim()
    }

    pub fn affines(&self) -> &[Affine] {
        &self.affines
    }

    /// Number of ReLU layers.
    pub fn depth(&self) -> usize {
        self.affines.len() - 1
    }

    pub fn eval(&self, x: &RVector) -> Result<RVector> {
        let mut cur = self.affines[0].apply(x)?;
        for a in &self.affines[1..] {
            cur = a.apply(&cur.relu())?;
        }
        Ok(cur)
    }

    /// `self ∘ inner`, fusing the affine maps at the seam.
    pub fn compose(&self, inner: &SimpleFunction) -> Result<SimpleFunction> {
        let mut affines = inner.affines[..inner.affines.len() - 1].to_vec();
        let seam = self.affines[0].compose(inner.affines.last().expect("nonempty"))?;
        affines.push(seam);
        affines.extend_from_slice(&self.affines[1..]);
        SimpleFunction::new(affines)
    }

    /// `post ∘ self` for an affine `post`.
    pub fn then_affine(&self, post: &Affine) -> Result<SimpleFunction> {
        SimpleFunction::affine(post.clone()).compose(self)
    }

    pub fn to_doc(&self) -> NetworkDoc {
        let mut layers = Vec::with_capacity(2 * self.affines.len() - 1);
        for (i, a) in self.affines.iter().enumerate() {
            if i > 0 {
                layers.push(LayerDoc::Relu(ReluTag::Relu));
            }
            layers.push(LayerDoc::Affine {
                affine: AffineDoc {
                    matrix: a.dense_rows(),
                    bias: a.bias.clone(),
                    input_dim: if a.output_dim() == 0 { Some(a.input_dim) } else { None },
                },
            });
        }
        NetworkDoc { layers }
    }

    pub fn from_doc(doc: &NetworkDoc) -> Result<SimpleFunction> {
        let mut affines = Vec::new();
        let mut expect_affine = true;
        for layer in &doc.layers {
            match (layer, expect_affine) {
                (LayerDoc::Affine { affine }, true) => {
                    let input_dim = match (affine.matrix.first(), affine.input_dim) {
                        (Some(row), _) => row.dim(),
                        (None, Some(d)) => d,
                        (None, None) => {
                            return Err(Error::InvalidNetwork(
                                "empty matrix needs an explicit input_dim".into(),
                            ))
                        }
                    };
                    affines.push(Affine::new(
                        input_dim,
                        affine.matrix.clone(),
                        affine.bias.clone(),
                    )?);
                }
                (LayerDoc::Relu(_), false) => {}
                (LayerDoc::Affine { .. }, false) => {
                    return Err(Error::InvalidNetwork(
                        "two affine layers without a ReLU between them".into(),
                    ))
                }
                (LayerDoc::Relu(_), true) => {
                    return Err(Error::InvalidNetwork(
                        "ReLU must sit between two affine layers".into(),
                    ))
                }
            }
            expect_affine = !expect_affine;
        }
        if expect_affine {
            return Err(Error::InvalidNetwork(
                "network must start and end with an affine layer".into(),
            ));
        }
        SimpleFunction::new(affines)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineDoc {
    pub matrix: Vec<RVector>,
    pub bias: RVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReluTag {
    Relu,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerDoc {
    Affine { affine: AffineDoc },
    Relu(ReluTag),
}

/// `{"layers":[{"affine":{...}},"relu",...]}`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub layers: Vec<LayerDoc>,
}

/// A classifier `c(x) = 1 iff f(x) ≥ 0` for a scalar simple function `f`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SimpleClassifier {
    f: SimpleFunction,
}

impl SimpleClassifier {
    pub fn new(f: SimpleFunction) -> Result<Self> {
        if f.output_dim() != 1 {
            return Err(Error::InvalidNetwork(format!(
                "classifier network must output one value, not {}",
                f.output_dim()
            )));
        }
        Ok(SimpleClassifier { f })
    }

    pub fn function(&self) -> &SimpleFunction {
        &self.f
    }

    pub fn score(&self, x: &RVector) -> Result<Rational> {
        Ok(self.f.eval(x)?.get(0).clone())
    }

    pub fn classify(&self, x: &RVector) -> Result<bool> {
        Ok(self.score(x)?.is_nonnegative())
    }
}
