//! Halting to converging via traffic-light coordination.
//!
//! Each vertex keeps a configuration `(κᶜ, τᶜ, κᵐ, τᵐ)` of dimension `2d + 6`.
//! A vertex advances its snapshot by one halting step when all neighbours
//! advertise its own phase and it is either behind some neighbour or not yet
//! halted; otherwise it waits and re-advertises its current snapshot.

use crate::error::{Error, Result};
use crate::model::{HaltingRgnn, Rgnn};
use crate::neural::builder::{NetBuilder, Signal};
use crate::neural::layer::{AcLayer, Aggregation, Combination};
use crate::neural::simple::{Affine, SimpleFunction};
use crate::protocol::ConfigLayout;
use crate::rational::{RVector, Rational};
use crate::semantics::ProtocolObserver;
use crate::transform::{projection, Variant};

/// A derived converging model plus what is needed to instrument its runs.
#[derive(Clone, Debug)]
pub struct H2cModel {
    pub derived: Rgnn,
    pub observer: ProtocolObserver,
    pub variant: Variant,
    pub bound: Option<Rational>,
}

/// `x ↦ (x, enc₃(0), x, enc₃(0))`.
fn config_init(d: usize) -> SimpleFunction {
    let layout = ConfigLayout::new(d);
    let mut rows = vec![Vec::new(); layout.total()];
    let mut bias = RVector::zeros(layout.total());
    for i in 0..d {
        rows[layout.kappa_c().start + i] = vec![(i, Rational::one())];
        rows[layout.kappa_m().start + i] = vec![(i, Rational::one())];
    }
    bias.set(layout.tau_c().start, Rational::one());
    bias.set(layout.tau_m().start, Rational::one());
    SimpleFunction::affine(Affine::from_sparse(d, rows, bias).expect("config dimensions"))
}

fn derived_base(h: &HaltingRgnn, layer: AcLayer) -> Result<Rgnn> {
    let d = h.dim();
    let layout = ConfigLayout::new(d);
    Rgnn::new(
        h.base().input_dim(),
        h.base().init().then(config_init(d))?,
        layer,
        h.base().readout().after(projection(layout.total(), 0, d))?,
    )
}

fn observer(h: &HaltingRgnn) -> ProtocolObserver {
    ProtocolObserver {
        dim: h.dim(),
        halt: h.halt().clone(),
    }
}

/// General variant: the explicit advancing/waiting case split.
pub fn to_converging(h: &HaltingRgnn) -> Result<H2cModel> {
    let d = h.dim();
    let total = ConfigLayout::new(d).total();
    let layer = AcLayer::new(
        total,
        total,
        Aggregation::Protocol {
            inner: Box::new(h.base().layer().aggregation().clone()),
            dim: d,
        },
        Combination::Protocol {
            inner: Box::new(h.base().layer().combination().clone()),
            halt: Box::new(h.halt().clone()),
            dim: d,
        },
    )?;
    Ok(H2cModel {
        derived: derived_base(h, layer)?,
        observer: observer(h),
        variant: Variant::General,
        bound: None,
    })
}

/// `ReLU(δ + s) − ReLU(δ) − ReLU(−δ + s) + ReLU(−δ)`.
fn phi(b: &mut NetBuilder, delta: &Signal, s: &Signal) -> Signal {
    let one = Rational::one();
    let minus = Rational::from_int(-1);
    let p1 = b.add(delta, s);
    let p1 = b.relu(&p1);
    let p2 = b.relu(delta);
    let neg = b.scale(delta, &minus);
    let p3 = b.add(&neg, s);
    let p3 = b.relu(&p3);
    let p4 = b.relu(&neg);
    b.linear(&[(one.clone(), &p1), (minus.clone(), &p2), (minus, &p3), (one, &p4)], Rational::zero())
}

/// The φ gadget alone, as a network `(δ, s) ↦ φ(δ, s)`.
pub fn phi_network() -> SimpleFunction {
    let mut b = NetBuilder::new(2);
    let (x, y) = (b.input(0), b.input(1));
    let z = phi(&mut b, &x, &y);
    b.finish(&[z]).expect("phi gadget")
}

/// `ReLU(t + p − 1)`: the product of two {0,1} values.
fn and(b: &mut NetBuilder, t: &Signal, p: &Signal) -> Signal {
    let sum = b.add(t, p);
    let shifted = b.add_const(&sum, Rational::from_int(-1));
    b.relu(&shifted)
}

/// Simple variant: the case split compiled into one ReLU network.
///
/// Requires a simple source whose halting function takes values in `{−1, 1}`
/// on reachable states and whose per-component step change is at most `bound`.
pub fn to_converging_simple(h: &HaltingRgnn, bound: &Rational) -> Result<H2cModel> {
    if !h.is_simple() {
        return Err(Error::NotSimple("source model is not simple".into()));
    }
    if bound.is_negative() {
        return Err(Error::InvalidModel("bound must be non-negative".into()));
    }
    let d = h.dim();
    let layout = ConfigLayout::new(d);
    let total = layout.total();
    let f_layer = match h.base().layer().combination() {
        Combination::Simple(f) => f,
        _ => unreachable!("simple layer has a network combination"),
    };
    let f_halt = h.halt().as_simple().expect("simple halting classifier").function();

    // inputs: configuration x, then aggregate x̂
    let mut b = NetBuilder::new(2 * total);
    let kc = b.inputs(layout.kappa_c());
    let tc = b.inputs(layout.tau_c());
    let at = |i: usize| total + i;
    let agg_tc: Vec<Signal> = layout.tau_c().map(|i| b.input(at(i))).collect();
    let agg_km: Vec<Signal> = layout.kappa_m().map(|i| b.input(at(i))).collect();
    let agg_tm: Vec<Signal> = layout.tau_m().map(|i| b.input(at(i))).collect();
    let adv_tc = [tc[2].clone(), tc[0].clone(), tc[1].clone()];

    // behind: some neighbour sits at the phase after ours
    let mut behind_terms = Vec::new();
    for i in 0..3 {
        let present = b.min1(&agg_tc[i]);
        behind_terms.push(and(&mut b, &adv_tc[i], &present));
    }
    let behind = b.sum(&behind_terms);

    // misaligned: some neighbour advertises a phase other than ours
    let mut mis_terms = Vec::new();
    for i in 0..3 {
        let present = b.min1(&agg_tm[i]);
        let other = b.sub(&present, &tc[i]);
        mis_terms.push(b.relu(&other));
    }
    let mis = b.sum(&mis_terms);
    let mis = b.min1(&mis);
    let one = b.constant(Rational::one());
    let aligned = b.sub(&one, &mis);

    // eager: behind or the halting function reads −1
    let fh = b.apply(f_halt, &kc).remove(0);
    let not_halted = b.linear(&[(Rational::new(-1, 2), &fh)], Rational::new(1, 2));
    let eager = b.add(&behind, &not_halted);
    let eager = b.min1(&eager);
    let s = and(&mut b, &aligned, &eager);

    let mut cmb_in = kc.clone();
    cmb_in.extend(agg_km.iter().cloned());
    let next = b.apply(f_layer, &cmb_in);
    let bs = b.scale(&s, bound);
    let mut outs = Vec::with_capacity(total);
    for i in 0..d {
        let delta = b.sub(&next[i], &kc[i]);
        let step = phi(&mut b, &delta, &bs);
        outs.push(b.add(&kc[i], &step));
    }
    for i in 0..3 {
        let delta = b.sub(&adv_tc[i], &tc[i]);
        let step = phi(&mut b, &delta, &s);
        outs.push(b.add(&tc[i], &step));
    }
    outs.extend(kc.iter().cloned());
    outs.extend(tc.iter().cloned());
    let layer = AcLayer::simple(b.finish(&outs)?)?;
    Ok(H2cModel {
        derived: derived_base(h, layer)?,
        observer: observer(h),
        variant: Variant::Simple,
        bound: Some(bound.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Configuration, TrafficLight};

    #[test]
    fn init_places_two_snapshots_and_phase_zero() {
        let f = config_init(2);
        let out = f.eval(&RVector::from_ints(&[3, -1])).unwrap();
        let conf = Configuration::decode(&out, 2).unwrap();
        assert_eq!(conf, Configuration::initial(RVector::from_ints(&[3, -1])));
        assert_eq!(conf.tau_c, TrafficLight::enc3(0));
    }

    #[test]
    fn and_gate_on_bits() {
        for (t, p, want) in [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 1)] {
            let mut b = NetBuilder::new(2);
            let (x, y) = (b.input(0), b.input(1));
            let z = and(&mut b, &x, &y);
            let f = b.finish(&[z]).unwrap();
            assert_eq!(
                f.eval(&RVector::from_ints(&[t, p])).unwrap(),
                RVector::from_ints(&[want])
            );
        }
    }

    #[test]
    fn compiled_phi_matches_reference() {
        let f = phi_network();
        for (delta, s) in [(3, 0), (2, 5), (-1, 1), (-4, 2), (0, 0)] {
            let (delta, s) = (Rational::from_int(delta), Rational::from_int(s));
            let got = f.eval(&RVector::new(vec![delta.clone(), s.clone()])).unwrap();
            assert_eq!(got.get(0), &crate::protocol::phi(&delta, &s));
        }
    }
}
