//! Aggregate-combine layers, initialisation maps and classifiers.
//!
//! Each component is either *simple* (built only from affine maps, ReLU and
//! summation) or *general*: a named host callback, or a structural wrapper
//! produced by one of the model transformations.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Multiset};
use crate::neural::simple::{NetworkDoc, SimpleClassifier, SimpleFunction};
use crate::protocol::{self, ConfigLayout};
use crate::rational::RVector;

pub type AggregationFn = Arc<dyn Fn(&Multiset, usize) -> Result<RVector> + Send + Sync>;
pub type CombinationFn = Arc<dyn Fn(&RVector, &RVector) -> Result<RVector> + Send + Sync>;
pub type MapFn = Arc<dyn Fn(&RVector) -> Result<RVector> + Send + Sync>;
pub type PredicateFn = Arc<dyn Fn(&RVector) -> Result<bool> + Send + Sync>;

/// A named host callback.
#[derive(Clone)]
pub struct External<F> {
    pub name: String,
    pub f: F,
}

impl<F> External<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        External {
            name: name.into(),
            f,
        }
    }
}

impl<F> fmt::Debug for External<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "external:{}", self.name)
    }
}

#[derive(Clone, Debug)]
pub enum Aggregation {
    /// `Σ_{x ∈ supp(M)} M(x) · x`; the empty sum is the zero vector.
    Sum,
    External(External<AggregationFn>),
    /// `AGG(π₁(M)) | 0_d` over stacked vectors `y | y'`.
    Stacked { inner: Box<Aggregation>, dim: usize },
    /// Source aggregation on both snapshot blocks, summation on both traffic-light blocks.
    Protocol { inner: Box<Aggregation>, dim: usize },
}

impl Aggregation {
    pub fn aggregate(&self, m: &Multiset, dim: usize) -> Result<RVector> {
        match self {
            Aggregation::Sum => sum_multiset(m, dim),
            Aggregation::External(ext) => {
                let out = (ext.f)(m, dim)?;
                check_dim(dim, out.dim())?;
                Ok(out)
            }
            Aggregation::Stacked { inner, dim: d } => {
                check_dim(2 * d, dim)?;
                let projected = project(m, 0, *d);
                Ok(inner.aggregate(&projected, *d)?.concat(&RVector::zeros(*d)))
            }
            Aggregation::Protocol { inner, dim: d } => {
                let layout = ConfigLayout::new(*d);
                check_dim(layout.total(), dim)?;
                let kc = inner.aggregate(&project(m, layout.kappa_c().start, layout.kappa_c().end), *d)?;
                let tc = sum_multiset(&project(m, layout.tau_c().start, layout.tau_c().end), 3)?;
                let km = inner.aggregate(&project(m, layout.kappa_m().start, layout.kappa_m().end), *d)?;
                let tm = sum_multiset(&project(m, layout.tau_m().start, layout.tau_m().end), 3)?;
                Ok(kc.concat(&tc).concat(&km).concat(&tm))
            }
        }
    }

    pub fn is_sum(&self) -> bool {
        matches!(self, Aggregation::Sum)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}

fn sum_multiset(m: &Multiset, dim: usize) -> Result<RVector> {
    let mut acc = RVector::zeros(dim);
    for (x, &count) in m {
        acc.add_assign(&x.scale(&crate::rational::Rational::from_int(count as i64)))?;
    }
    Ok(acc)
}

fn project(m: &Multiset, start: usize, end: usize) -> Multiset {
    let mut out = Multiset::new();
    for (x, &count) in m {
        *out.entry(x.slice(start, end)).or_insert(0) += count;
    }
    out
}

#[derive(Clone, Debug)]
pub enum Combination {
    /// `CMB(x, a) = f(x | a)`.
    Simple(SimpleFunction),
    External(External<CombinationFn>),
    /// `CMB((y|y'), (a|a')) = CMB_inner(y, a) | y`.
    Stacked { inner: Box<Combination>, dim: usize },
    /// The advancing/waiting case split of the traffic-light protocol.
    Protocol {
        inner: Box<Combination>,
        halt: Box<Classifier>,
        dim: usize,
    },
}

impl Combination {
    pub fn combine(&self, x: &RVector, a: &RVector) -> Result<RVector> {
        match self {
            Combination::Simple(f) => f.eval(&x.concat(a)),
            Combination::External(ext) => (ext.f)(x, a),
            Combination::Stacked { inner, dim } => {
                check_dim(2 * dim, x.dim())?;
                check_dim(2 * dim, a.dim())?;
                let y = x.slice(0, *dim);
                Ok(inner.combine(&y, &a.slice(0, *dim))?.concat(&y))
            }
            Combination::Protocol { inner, halt, dim } => {
                protocol::combine_cases(*dim, inner, halt, x, a)
            }
        }
    }
}

/// An AC-layer `L(G)(v) = CMB(G(v), AGG({{G(u) | u ∈ N(v)}}))`.
#[derive(Clone, Debug)]
pub struct AcLayer {
    in_dim: usize,
    out_dim: usize,
    aggregation: Aggregation,
    combination: Combination,
}

impl AcLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        aggregation: Aggregation,
        combination: Combination,
    ) -> Result<Self> {
        if let Combination::Simple(f) = &combination {
            check_dim(2 * in_dim, f.input_dim())?;
            check_dim(out_dim, f.output_dim())?;
        }
        Ok(AcLayer {
            in_dim,
            out_dim,
            aggregation,
            combination,
        })
    }

    /// Sum aggregation with `CMB(x, a) = f(x | a)`.
    pub fn simple(f: SimpleFunction) -> Result<Self> {
        if !f.input_dim().is_multiple_of(2) {
            return Err(Error::InvalidNetwork(
                "combination network input must be x | a".into(),
            ));
        }
        let in_dim = f.input_dim() / 2;
        let out_dim = f.output_dim();
        AcLayer::new(in_dim, out_dim, Aggregation::Sum, Combination::Simple(f))
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn aggregation(&self) -> &Aggregation {
        &self.aggregation
    }

    pub fn combination(&self) -> &Combination {
        &self.combination
    }

    pub fn is_simple(&self) -> bool {
        self.aggregation.is_sum() && matches!(self.combination, Combination::Simple(_))
    }

    /// `AGG` of `v`'s neighbourhood in `g`.
    pub fn aggregate_at(&self, g: &Graph, v: usize) -> Result<RVector> {
        if self.aggregation.is_sum() {
            let mut acc = RVector::zeros(self.in_dim);
            for &u in g.neighbours(v) {
                acc.add_assign(g.label(u))?;
            }
            Ok(acc)
        } else {
            self.aggregation.aggregate(&g.neighbourhood_at(v), self.in_dim)
        }
    }

    pub fn combine(&self, x: &RVector, a: &RVector) -> Result<RVector> {
        let out = self.combination.combine(x, a)?;
        check_dim(self.out_dim, out.dim())?;
        Ok(out)
    }

    pub fn apply(&self, g: &Graph) -> Result<Graph> {
        check_dim(self.in_dim, g.dim())?;
        let labels = (0..g.len())
            .map(|v| {
                let a = self.aggregate_at(g, v)?;
                self.combine(g.label(v), &a)
            })
            .collect::<Result<Vec<_>>>()?;
        g.with_labels(labels)
    }
}

/// Initialisation `In : X → ℝᵈ`.
#[derive(Clone, Debug)]
pub enum Init {
    Simple(SimpleFunction),
    External(External<MapFn>),
    /// `post ∘ inner`.
    Then {
        inner: Box<Init>,
        post: SimpleFunction,
    },
}

impl Init {
    pub fn apply(&self, x: &RVector) -> Result<RVector> {
        match self {
            Init::Simple(f) => f.eval(x),
            Init::External(ext) => (ext.f)(x),
            Init::Then { inner, post } => post.eval(&inner.apply(x)?),
        }
    }

    /// `post ∘ self`, fused into one network when `self` is simple.
    pub fn then(&self, post: SimpleFunction) -> Result<Init> {
        Ok(match self {
            Init::Simple(f) => Init::Simple(post.compose(f)?),
            other => Init::Then {
                inner: Box::new(other.clone()),
                post,
            },
        })
    }

    pub fn is_simple(&self) -> bool {
        matches!(self, Init::Simple(_))
    }
}

/// A vertex classifier on feature vectors.
#[derive(Clone, Debug)]
pub enum Classifier {
    Simple(SimpleClassifier),
    External(External<PredicateFn>),
    /// `inner ∘ pre`.
    After {
        pre: SimpleFunction,
        inner: Box<Classifier>,
    },
}

impl Classifier {
    pub fn simple(f: SimpleFunction) -> Result<Self> {
        Ok(Classifier::Simple(SimpleClassifier::new(f)?))
    }

    pub fn classify(&self, x: &RVector) -> Result<bool> {
        match self {
            Classifier::Simple(c) => c.classify(x),
            Classifier::External(ext) => (ext.f)(x),
            Classifier::After { pre, inner } => inner.classify(&pre.eval(x)?),
        }
    }

    /// `self ∘ pre`, fused into one network when `self` is simple.
    pub fn after(&self, pre: SimpleFunction) -> Result<Classifier> {
        Ok(match self {
            Classifier::Simple(c) => Classifier::simple(c.function().compose(&pre)?)?,
            other => Classifier::After {
                pre,
                inner: Box::new(other.clone()),
            },
        })
    }

    pub fn is_simple(&self) -> bool {
        matches!(self, Classifier::Simple(_))
    }

    pub fn as_simple(&self) -> Option<&SimpleClassifier> {
        match self {
            Classifier::Simple(c) => Some(c),
            _ => None,
        }
    }
}

/// Host callbacks addressable by name from model files.
#[derive(Clone, Default)]
pub struct Registry {
    aggregations: HashMap<String, AggregationFn>,
    combinations: HashMap<String, CombinationFn>,
    maps: HashMap<String, MapFn>,
    predicates: HashMap<String, PredicateFn>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// Ships `max`: componentwise maximum, zero on the empty multiset.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register_aggregation("max", Arc::new(max_aggregation));
        r
    }

    pub fn register_aggregation(&mut self, name: &str, f: AggregationFn) {
        self.aggregations.insert(name.to_string(), f);
    }

    pub fn register_combination(&mut self, name: &str, f: CombinationFn) {
        self.combinations.insert(name.to_string(), f);
    }

    pub fn register_map(&mut self, name: &str, f: MapFn) {
        self.maps.insert(name.to_string(), f);
    }

    pub fn register_predicate(&mut self, name: &str, f: PredicateFn) {
        self.predicates.insert(name.to_string(), f);
    }

    pub fn aggregation(&self, name: &str) -> Result<External<AggregationFn>> {
        lookup(&self.aggregations, name)
    }

    pub fn combination(&self, name: &str) -> Result<External<CombinationFn>> {
        lookup(&self.combinations, name)
    }

    pub fn map(&self, name: &str) -> Result<External<MapFn>> {
        lookup(&self.maps, name)
    }

    pub fn predicate(&self, name: &str) -> Result<External<PredicateFn>> {
        lookup(&self.predicates, name)
    }
}

fn lookup<F: Clone>(table: &HashMap<String, F>, name: &str) -> Result<External<F>> {
    table
        .get(name)
        .map(|f| External::new(name, f.clone()))
        .ok_or_else(|| Error::UnknownExternal(name.to_string()))
}

fn max_aggregation(m: &Multiset, dim: usize) -> Result<RVector> {
    let mut iter = m.keys();
    let Some(first) = iter.next() else {
        return Ok(RVector::zeros(dim));
    };
    let mut acc = first.clone();
    check_dim(dim, acc.dim())?;
    for x in iter {
        for i in 0..dim {
            if x.get(i) > acc.get(i) {
                acc.set(i, x.get(i).clone());
            }
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Serialised forms

/// `"sum"`, `"external:<name>"`, or a structural wrapper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AggregationDoc {
    Tag(String),
    Wrapped(WrappedAggregationDoc),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrappedAggregationDoc {
    Stacked { inner: Box<AggregationDoc>, dim: usize },
    Protocol { inner: Box<AggregationDoc>, dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationDoc {
    Network(NetworkDoc),
    External(String),
    Stacked {
        inner: Box<CombinationDoc>,
        dim: usize,
    },
    Protocol {
        inner: Box<CombinationDoc>,
        halt: Box<ClassifierDoc>,
        dim: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub in_dim: usize,
    pub out_dim: usize,
    pub aggregation: AggregationDoc,
    pub combination: CombinationDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitDoc {
    Network(NetworkDoc),
    External(String),
    Then {
        inner: Box<InitDoc>,
        post: NetworkDoc,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierDoc {
    Network(NetworkDoc),
    External(String),
    After {
        pre: NetworkDoc,
        inner: Box<ClassifierDoc>,
    },
}

impl Aggregation {
    pub fn to_doc(&self) -> AggregationDoc {
        match self {
            Aggregation::Sum => AggregationDoc::Tag("sum".into()),
            Aggregation::External(e) => AggregationDoc::Tag(format!("external:{}", e.name)),
            Aggregation::Stacked { inner, dim } => {
                AggregationDoc::Wrapped(WrappedAggregationDoc::Stacked {
                    inner: Box::new(inner.to_doc()),
                    dim: *dim,
                })
            }
            Aggregation::Protocol { inner, dim } => {
                AggregationDoc::Wrapped(WrappedAggregationDoc::Protocol {
                    inner: Box::new(inner.to_doc()),
                    dim: *dim,
                })
            }
        }
    }

    pub fn from_doc(doc: &AggregationDoc, reg: &Registry) -> Result<Self> {
        match doc {
            AggregationDoc::Tag(t) if t == "sum" => Ok(Aggregation::Sum),
            AggregationDoc::Tag(t) => match t.strip_prefix("external:") {
                Some(name) => Ok(Aggregation::External(reg.aggregation(name)?)),
                None => Err(Error::Parse(format!("unknown aggregation {t:?}"))),
            },
            AggregationDoc::Wrapped(WrappedAggregationDoc::Stacked { inner, dim }) => {
                Ok(Aggregation::Stacked {
                    inner: Box::new(Aggregation::from_doc(inner, reg)?),
                    dim: *dim,
                })
            }
            AggregationDoc::Wrapped(WrappedAggregationDoc::Protocol { inner, dim }) => {
                Ok(Aggregation::Protocol {
                    inner: Box::new(Aggregation::from_doc(inner, reg)?),
                    dim: *dim,
                })
            }
        }
    }
}

impl Combination {
    pub fn to_doc(&self) -> CombinationDoc {
        match self {
            Combination::Simple(f) => CombinationDoc::Network(f.to_doc()),
            Combination::External(e) => CombinationDoc::External(e.name.clone()),
            Combination::Stacked { inner, dim } => CombinationDoc::Stacked {
                inner: Box::new(inner.to_doc()),
                dim: *dim,
            },
            Combination::Protocol { inner, halt, dim } => CombinationDoc::Protocol {
                inner: Box::new(inner.to_doc()),
                halt: Box::new(halt.to_doc()),
                dim: *dim,
            },
        }
    }

    pub fn from_doc(doc: &CombinationDoc, reg: &Registry) -> Result<Self> {
        Ok(match doc {
            CombinationDoc::Network(n) => Combination::Simple(SimpleFunction::from_doc(n)?),
            CombinationDoc::External(name) => Combination::External(reg.combination(name)?),
            CombinationDoc::Stacked { inner, dim } => Combination::Stacked {
                inner: Box::new(Combination::from_doc(inner, reg)?),
                dim: *dim,
            },
            CombinationDoc::Protocol { inner, halt, dim } => Combination::Protocol {
                inner: Box::new(Combination::from_doc(inner, reg)?),
                halt: Box::new(Classifier::from_doc(halt, reg)?),
                dim: *dim,
            },
        })
    }
}

impl AcLayer {
    pub fn to_doc(&self) -> LayerDoc {
        LayerDoc {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            aggregation: self.aggregation.to_doc(),
            combination: self.combination.to_doc(),
        }
    }

    pub fn from_doc(doc: &LayerDoc, reg: &Registry) -> Result<Self> {
        AcLayer::new(
            doc.in_dim,
            doc.out_dim,
            Aggregation::from_doc(&doc.aggregation, reg)?,
            Combination::from_doc(&doc.combination, reg)?,
        )
    }
}

impl Init {
    pub fn to_doc(&self) -> InitDoc {
        match self {
            Init::Simple(f) => InitDoc::Network(f.to_doc()),
            Init::External(e) => InitDoc::External(e.name.clone()),
            Init::Then { inner, post } => InitDoc::Then {
                inner: Box::new(inner.to_doc()),
                post: post.to_doc(),
            },
        }
    }

    pub fn from_doc(doc: &InitDoc, reg: &Registry) -> Result<Self> {
        Ok(match doc {
            InitDoc::Network(n) => Init::Simple(SimpleFunction::from_doc(n)?),
            InitDoc::External(name) => Init::External(reg.map(name)?),
            InitDoc::Then { inner, post } => Init::Then {
                inner: Box::new(Init::from_doc(inner, reg)?),
                post: SimpleFunction::from_doc(post)?,
            },
        })
    }
}

impl Classifier {
    pub fn to_doc(&self) -> ClassifierDoc {
        match self {
            Classifier::Simple(c) => ClassifierDoc::Network(c.function().to_doc()),
            Classifier::External(e) => ClassifierDoc::External(e.name.clone()),
            Classifier::After { pre, inner } => ClassifierDoc::After {
                pre: pre.to_doc(),
                inner: Box::new(inner.to_doc()),
            },
        }
    }

    pub fn from_doc(doc: &ClassifierDoc, reg: &Registry) -> Result<Self> {
        Ok(match doc {
            ClassifierDoc::Network(n) => Classifier::simple(SimpleFunction::from_doc(n)?)?,
            ClassifierDoc::External(name) => Classifier::External(reg.predicate(name)?),
            ClassifierDoc::After { pre, inner } => Classifier::After {
                pre: SimpleFunction::from_doc(pre)?,
                inner: Box::new(Classifier::from_doc(inner, reg)?),
            },
        })
    }
}
