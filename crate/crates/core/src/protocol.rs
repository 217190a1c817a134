//! Traffic-light coordination protocol used when a halting model is
//! simulated by a converging one.
//!
//! A configuration is laid out as `(κᶜ, τᶜ, κᵐ, τᵐ)`: the current snapshot,
//! the current traffic light, the advertised snapshot and the advertised
//! traffic light. Traffic lights are one-hot phase tokens modulo 3.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::layer::{Classifier, Combination};
use crate::rational::{RVector, Rational};

/// One of `(1,0,0)`, `(0,1,0)`, `(0,0,1)`, stored as the index of the 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrafficLight(u8);

impl TrafficLight {
    pub const ALL: [TrafficLight; 3] = [TrafficLight(0), TrafficLight(1), TrafficLight(2)];

    /// `enc₃(i)`: one-hot at position `i mod 3`.
    pub fn enc3(i: usize) -> Self {
        TrafficLight((i % 3) as u8)
    }

    pub fn phase(self) -> usize {
        self.0 as usize
    }

    /// `adv(g, y, r) = (r, g, y)`.
    pub fn adv(self) -> Self {
        TrafficLight((self.0 + 1) % 3)
    }

    /// `ret(g, y, r) = (y, r, g)`.
    pub fn ret(self) -> Self {
        TrafficLight((self.0 + 2) % 3)
    }

    pub fn to_vector(self) -> RVector {
        let mut v = RVector::zeros(3);
        v.set(self.phase(), Rational::one());
        v
    }

    /// Rejects anything that is not exactly one-hot.
    pub fn from_vector(v: &RVector) -> Result<Self> {
        if v.dim() != 3 {
            return Err(Error::NotOneHot(format!("{v:?}")));
        }
        let mut hot = None;
        for (i, x) in v.iter().enumerate() {
            if *x == Rational::one() {
                if hot.is_some() {
                    return Err(Error::NotOneHot(format!("{v:?}")));
                }
                hot = Some(i);
            } else if !x.is_zero() {
                return Err(Error::NotOneHot(format!("{v:?}")));
            }
        }
        hot.map(|i| TrafficLight(i as u8))
            .ok_or_else(|| Error::NotOneHot(format!("{v:?}")))
    }
}

impl fmt::Display for TrafficLight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_vector();
        write!(f, "({}, {}, {})", v.get(0), v.get(1), v.get(2))
    }
}

/// `adv` as a permutation of an arbitrary triple.
pub fn adv_triple(t: &RVector) -> RVector {
    RVector::new(vec![t.get(2).clone(), t.get(0).clone(), t.get(1).clone()])
}

/// `ret` as a permutation of an arbitrary triple.
pub fn ret_triple(t: &RVector) -> RVector {
    RVector::new(vec![t.get(1).clone(), t.get(2).clone(), t.get(0).clone()])
}

/// Component ranges of a configuration vector for snapshot dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConfigLayout {
    d: usize,
}

impl ConfigLayout {
    pub fn new(d: usize) -> Self {
        ConfigLayout { d }
    }

    pub fn snapshot_dim(&self) -> usize {
        self.d
    }

    /// `2d + 6`.
    pub fn total(&self) -> usize {
        2 * self.d + 6
    }

    pub fn kappa_c(&self) -> Range<usize> {
        0..self.d
    }

    pub fn tau_c(&self) -> Range<usize> {
        self.d..self.d + 3
    }

    pub fn kappa_m(&self) -> Range<usize> {
        self.d + 3..2 * self.d + 3
    }

    pub fn tau_m(&self) -> Range<usize> {
        2 * self.d + 3..2 * self.d + 6
    }
}

/// A decoded configuration `(κᶜ, τᶜ, κᵐ, τᵐ)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    pub kappa_c: RVector,
    pub tau_c: TrafficLight,
    pub kappa_m: RVector,
    pub tau_m: TrafficLight,
}

impl Configuration {
    pub fn initial(snapshot: RVector) -> Self {
        Configuration {
            kappa_c: snapshot.clone(),
            tau_c: TrafficLight::enc3(0),
            kappa_m: snapshot,
            tau_m: TrafficLight::enc3(0),
        }
    }

    pub fn decode(x: &RVector, d: usize) -> Result<Self> {
        let layout = ConfigLayout::new(d);
        check_len(x, layout.total())?;
        Ok(Configuration {
            kappa_c: slice(x, layout.kappa_c()),
            tau_c: TrafficLight::from_vector(&slice(x, layout.tau_c()))?,
            kappa_m: slice(x, layout.kappa_m()),
            tau_m: TrafficLight::from_vector(&slice(x, layout.tau_m()))?,
        })
    }

    pub fn encode(&self) -> RVector {
        self.kappa_c
            .concat(&self.tau_c.to_vector())
            .concat(&self.kappa_m)
            .concat(&self.tau_m.to_vector())
    }
}

fn slice(x: &RVector, r: Range<usize>) -> RVector {
    x.slice(r.start, r.end)
}

fn check_len(x: &RVector, n: usize) -> Result<()> {
    if x.dim() == n {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected: n,
            found: x.dim(),
        })
    }
}

fn hadamard_l1(a: &RVector, b: &RVector) -> Rational {
    a.iter().zip(b.iter()).map(|(x, y)| (x * y).abs()).sum()
}

/// `‖adv(τᶜ) ⊙ τ̂ᶜ‖₁ > 0`, where `agg_tau_c` sums the neighbours' `τᶜ`.
pub fn behind(tau_c: TrafficLight, agg_tau_c: &RVector) -> bool {
    hadamard_l1(&tau_c.adv().to_vector(), agg_tau_c) > Rational::zero()
}

/// `‖τᶜ ⊙ τ̂ᵐ‖₁ = ‖τ̂ᵐ‖₁`, where `agg_tau_m` sums the neighbours' `τᵐ`.
pub fn aligned(tau_c: TrafficLight, agg_tau_m: &RVector) -> bool {
    hadamard_l1(&tau_c.to_vector(), agg_tau_m) == agg_tau_m.l1_norm()
}

/// `behind ∨ ¬Hlt(κᶜ)`.
pub fn eager(
    tau_c: TrafficLight,
    kappa_c: &RVector,
    agg_tau_c: &RVector,
    halt: &Classifier,
) -> Result<bool> {
    Ok(behind(tau_c, agg_tau_c) || !halt.classify(kappa_c)?)
}

/// The predicate values a vertex sees in one converging step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub behind: bool,
    pub aligned: bool,
    pub eager: bool,
    pub advancing: bool,
}

/// Evaluates the protocol predicates on a configuration and its aggregate.
pub fn decide(d: usize, halt: &Classifier, x: &RVector, agg: &RVector) -> Result<Decision> {
    let layout = ConfigLayout::new(d);
    check_len(x, layout.total())?;
    check_len(agg, layout.total())?;
    let conf = Configuration::decode(x, d)?;
    let b = behind(conf.tau_c, &slice(agg, layout.tau_c()));
    let a = aligned(conf.tau_c, &slice(agg, layout.tau_m()));
    let e = b || !halt.classify(&conf.kappa_c)?;
    Ok(Decision {
        behind: b,
        aligned: a,
        eager: e,
        advancing: a && e,
    })
}

/// The two-branch combination: advance to `(CMB(κᶜ, κ̂ᵐ), adv(τᶜ), κᶜ, τᶜ)`
/// when aligned and eager, otherwise wait at `(κᶜ, τᶜ, κᶜ, τᶜ)`.
pub fn combine_cases(
    d: usize,
    inner: &Combination,
    halt: &Classifier,
    x: &RVector,
    agg: &RVector,
) -> Result<RVector> {
    let layout = ConfigLayout::new(d);
    let decision = decide(d, halt, x, agg)?;
    let conf = Configuration::decode(x, d)?;
    let next = if decision.advancing {
        let kappa_next = inner.combine(&conf.kappa_c, &slice(agg, layout.kappa_m()))?;
        check_len(&kappa_next, d)?;
        Configuration {
            kappa_c: kappa_next,
            tau_c: conf.tau_c.adv(),
            kappa_m: conf.kappa_c.clone(),
            tau_m: conf.tau_c,
        }
    } else {
        Configuration {
            kappa_c: conf.kappa_c.clone(),
            tau_c: conf.tau_c,
            kappa_m: conf.kappa_c,
            tau_m: conf.tau_c,
        }
    };
    Ok(next.encode())
}

/// `φ(δ, s') = ReLU(δ + s') − ReLU(δ) − ReLU(−δ + s') + ReLU(−δ)`.
///
/// Zero when `s' = 0`; equal to `δ` when `s' ≥ |δ|`.
pub fn phi(delta: &Rational, s: &Rational) -> Rational {
    let neg = -delta;
    (delta + s).relu() - delta.relu() - (&neg + s).relu() + neg.relu()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::simple::SimpleFunction;

    fn tl(v: [i64; 3]) -> TrafficLight {
        TrafficLight::from_vector(&RVector::from_ints(&v)).unwrap()
    }

    fn q(n: i64) -> Rational {
        Rational::from_int(n)
    }

    #[test]
    fn enc3_examples() {
        assert_eq!(TrafficLight::enc3(0).to_vector(), RVector::from_ints(&[1, 0, 0]));
        assert_eq!(TrafficLight::enc3(4).to_vector(), RVector::from_ints(&[0, 1, 0]));
        assert_eq!(TrafficLight::enc3(2).to_vector(), RVector::from_ints(&[0, 0, 1]));
    }

    #[test]
    fn adv_ret_examples() {
        assert_eq!(tl([1, 0, 0]).adv(), tl([0, 1, 0]));
        assert_eq!(tl([0, 1, 0]).ret(), tl([1, 0, 0]));
        for t in TrafficLight::ALL {
            assert_eq!(t.ret().adv(), t);
            assert_eq!(t.adv().ret(), t);
            assert_eq!(adv_triple(&t.to_vector()), t.adv().to_vector());
            assert_eq!(ret_triple(&t.to_vector()), t.ret().to_vector());
        }
    }

    #[test]
    fn non_one_hot_rejected() {
        for bad in [[1, 1, 0], [0, 0, 0], [2, 0, 0], [1, 0, -1]] {
            assert!(TrafficLight::from_vector(&RVector::from_ints(&bad)).is_err());
        }
        assert!(TrafficLight::from_vector(&RVector::from_ints(&[1, 0])).is_err());
    }

    #[test]
    fn behind_examples() {
        let t0 = tl([1, 0, 0]);
        assert!(behind(t0, &RVector::from_ints(&[1, 1, 0])));
        assert!(!behind(t0, &RVector::from_ints(&[2, 0, 1])));
        assert!(!behind(t0, &RVector::zeros(3)));
    }

    #[test]
    fn aligned_examples() {
        let t1 = tl([0, 1, 0]);
        assert!(aligned(t1, &RVector::from_ints(&[0, 2, 0])));
        assert!(!aligned(t1, &RVector::from_ints(&[1, 1, 0])));
        assert!(aligned(t1, &RVector::zeros(3)));
    }

    #[test]
    fn eager_examples() {
        let always = Classifier::simple(SimpleFunction::affine(
            crate::neural::simple::Affine::new(1, vec![RVector::zeros(1)], RVector::zeros(1)).unwrap(),
        ))
        .unwrap();
        let never = Classifier::simple(SimpleFunction::affine(
            crate::neural::simple::Affine::new(1, vec![RVector::zeros(1)], RVector::from_ints(&[-1])).unwrap(),
        ))
        .unwrap();
        let t0 = tl([1, 0, 0]);
        let k = RVector::zeros(1);
        // behind with Hlt true
        assert!(eager(t0, &k, &RVector::from_ints(&[0, 1, 0]), &always).unwrap());
        // not behind, Hlt false
        assert!(eager(t0, &k, &RVector::zeros(3), &never).unwrap());
        // neither
        assert!(!eager(t0, &k, &RVector::zeros(3), &always).unwrap());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(&q(3), &q(0)), q(0));
        assert_eq!(phi(&q(2), &q(5)), q(2));
        assert_eq!(phi(&q(-1), &q(1)), q(-1));
    }

    #[test]
    fn configuration_roundtrip() {
        let c = Configuration {
            kappa_c: RVector::from_ints(&[1, 2]),
            tau_c: TrafficLight::enc3(1),
            kappa_m: RVector::from_ints(&[3, 4]),
            tau_m: TrafficLight::enc3(2),
        };
        let v = c.encode();
        assert_eq!(v.dim(), ConfigLayout::new(2).total());
        assert_eq!(Configuration::decode(&v, 2).unwrap(), c);
    }
}
