//! Converging to halting: carry the previous state and halt once it repeats.
//!
//! The derived model has dimension `2d` with state `y | y'`, where `y'` is the
//! previous state. `In'(x) = In(x) | (In(x) + 1)` makes the two halves differ
//! before the first iteration, and `Hlt(y | y') ⇔ −‖y − y'‖₁ ≥ 0`.

use crate::error::{Error, Result};
use crate::model::{HaltingRgnn, Rgnn};
use crate::neural::builder::NetBuilder;
use crate::neural::layer::{AcLayer, Aggregation, Classifier, Combination};
use crate::neural::simple::{Affine, SimpleFunction};
use crate::rational::{RVector, Rational};
use crate::transform::projection;

fn check_dim(c: &Rgnn) -> Result<usize> {
    match c.dim() {
        0 => Err(Error::InvalidModel(
            "state dimension must be at least 1 to tell y and y' apart".into(),
        )),
        d => Ok(d),
    }
}

/// `x ↦ x | (x + 1_d)`.
fn stack_init(d: usize) -> SimpleFunction {
    let rows = (0..2 * d).map(|i| vec![(i % d, Rational::one())]).collect();
    let bias = RVector::zeros(d).concat(&RVector::ones(d));
    SimpleFunction::affine(Affine::from_sparse(d, rows, bias).expect("stack dimensions"))
}

/// `−Σ_i (ReLU(y_i − y'_i) + ReLU(y'_i − y_i))`.
pub fn difference_halt(d: usize) -> Classifier {
    let mut rows = Vec::with_capacity(2 * d);
    for i in 0..d {
        rows.push(vec![(i, Rational::one()), (d + i, Rational::from_int(-1))]);
        rows.push(vec![(i, Rational::from_int(-1)), (d + i, Rational::one())]);
    }
    let first = Affine::from_sparse(2 * d, rows, RVector::zeros(2 * d)).expect("halt dimensions");
    let second = Affine::from_sparse(
        2 * d,
        vec![(0..2 * d).map(|j| (j, Rational::from_int(-1))).collect()],
        RVector::zeros(1),
    )
    .expect("halt dimensions");
    Classifier::simple(SimpleFunction::new(vec![first, second]).expect("halt network"))
        .expect("halt classifier")
}

/// General variant: `AGG'(M) = AGG(π₁ M) | 0`, `CMB'((y|y'), (a|a')) = CMB(y, a) | y`.
pub fn to_halting(c: &Rgnn) -> Result<HaltingRgnn> {
    let d = check_dim(c)?;
    let layer = AcLayer::new(
        2 * d,
        2 * d,
        Aggregation::Stacked {
            inner: Box::new(c.layer().aggregation().clone()),
            dim: d,
        },
        Combination::Stacked {
            inner: Box::new(c.layer().combination().clone()),
            dim: d,
        },
    )?;
    let base = Rgnn::new(
        c.input_dim(),
        c.init().then(stack_init(d))?,
        layer,
        c.readout().after(projection(2 * d, 0, d))?,
    )?;
    HaltingRgnn::new(base, difference_halt(d))
}

/// Simple variant: summation over all `2d` components and one network for
/// `CMB'((y|y'), (a|a')) = f(y | a) | y`.
pub fn to_halting_simple(c: &Rgnn) -> Result<HaltingRgnn> {
    let d = check_dim(c)?;
    if !c.is_simple() {
        return Err(Error::NotSimple("source model is not simple".into()));
    }
    let f = match c.layer().combination() {
        Combination::Simple(f) => f,
        _ => unreachable!("simple layer has a network combination"),
    };
    // inputs: y, y', a, a'
    let mut b = NetBuilder::new(4 * d);
    let mut xa = b.inputs(0..d);
    xa.extend(b.inputs(2 * d..3 * d));
    let mut outs = b.apply(f, &xa);
    outs.extend(b.inputs(0..d));
    let layer = AcLayer::simple(b.finish(&outs)?)?;
    let base = Rgnn::new(
        c.input_dim(),
        c.init().then(stack_init(d))?,
        layer,
        c.readout().after(projection(2 * d, 0, d))?,
    )?;
    HaltingRgnn::new(base, difference_halt(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layer::Init;
    use crate::graph::Graph;
    use crate::model::validate_simple;
    use crate::semantics::{run_converging, run_halting};

    fn identity_model() -> Rgnn {
        let comb = SimpleFunction::affine(
            Affine::new(2, vec![RVector::from_ints(&[1, 0])], RVector::zeros(1)).unwrap(),
        );
        Rgnn::new(
            1,
            Init::Simple(SimpleFunction::identity(1)),
            AcLayer::simple(comb).unwrap(),
            Classifier::simple(SimpleFunction::identity(1)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_model_halts_one_step_after_convergence() {
        let c = identity_model();
        let g = Graph::from_indexed(vec![RVector::from_ints(&[0])], &[]).unwrap();
        for h in [to_halting(&c).unwrap(), to_halting_simple(&c).unwrap()] {
            let run = run_halting(&h, &g, 5).unwrap();
            assert_eq!(run.trace.state(0)[0], RVector::from_ints(&[0, 1]));
            assert_eq!(run.trace.state(1)[0], RVector::from_ints(&[0, 0]));
            assert_eq!(run.k, 1);
            assert_eq!(run.output, run_converging(&c, &g, 5).unwrap().output);
        }
    }

    #[test]
    fn no_halt_before_first_iteration() {
        let halt = difference_halt(3);
        let y = RVector::from_ints(&[4, -1, 0]);
        let stacked = y.concat(&y.checked_add(&RVector::ones(3)).unwrap());
        assert_eq!(
            halt.as_simple().unwrap().score(&stacked).unwrap(),
            Rational::from_int(-3)
        );
        assert!(halt.classify(&y.concat(&y)).unwrap());
    }

    #[test]
    fn simple_variant_is_structurally_simple() {
        let h = to_halting_simple(&identity_model()).unwrap();
        assert!(validate_simple(&h.into()).is_ok());
    }

    #[test]
    fn zero_dimension_rejected() {
        let layer = AcLayer::simple(SimpleFunction::affine(
            Affine::new(0, vec![], RVector::zeros(0)).unwrap(),
        ))
        .unwrap();
        let c = Rgnn::new(
            0,
            Init::Simple(SimpleFunction::affine(Affine::new(0, vec![], RVector::zeros(0)).unwrap())),
            layer,
            Classifier::External(crate::neural::layer::External::new(
                "true",
                std::sync::Arc::new(|_: &RVector| Ok(true)) as crate::neural::layer::PredicateFn,
            )),
        )
        .unwrap();
        assert!(to_halting(&c).is_err());
    }
}
