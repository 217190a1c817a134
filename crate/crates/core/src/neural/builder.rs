//! Compiles straight-line affine/ReLU expressions into a layered [`SimpleFunction`].
//!
//! A [`Signal`] is an affine expression over the units of one stage. Stage 0
//! holds the network inputs; stage `s >= 1` holds ReLU units whose
//! pre-activations are affine in stage `s - 1`. Mixing signals from
//! different stages carries the lower one upwards with `x = ReLU(x) - ReLU(-x)`
//! (or `x = ReLU(x)` when `x` is known to be non-negative), so every
//! rewrite is an exact identity.

use std::collections::{BTreeMap, HashMap};

use crate::error::Result;
use crate::neural::simple::{Affine, SimpleFunction};
use crate::rational::{RVector, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct LinExpr {
    terms: BTreeMap<usize, Rational>,
    constant: Rational,
}

impl LinExpr {
    fn constant(c: Rational) -> Self {
        LinExpr {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    fn add_scaled(&mut self, other: &LinExpr, factor: &Rational) {
        for (u, w) in &other.terms {
            let entry = self.terms.entry(*u).or_insert_with(Rational::zero);
            *entry = &*entry + &(w * factor);
            if entry.is_zero() {
                self.terms.remove(u);
            }
        }
        self.constant = &self.constant + &(&other.constant * factor);
    }
}

/// An affine expression over the units of a single stage.
#[derive(Clone, Debug)]
pub struct Signal {
    stage: usize,
    expr: LinExpr,
}

impl Signal {
    pub fn stage(&self) -> usize {
        self.stage
    }
}

pub struct NetBuilder {
    input_dim: usize,
    /// `units[s]` holds pre-activations of stage `s + 1` units over stage `s`.
    units: Vec<Vec<LinExpr>>,
    lookup: Vec<HashMap<LinExpr, usize>>,
}

impl NetBuilder {
    pub fn new(input_dim: usize) -> Self {
        NetBuilder {
            input_dim,
            units: Vec::new(),
            lookup: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input(&self, i: usize) -> Signal {
        assert!(i < self.input_dim, "input {i} out of range");
        Signal {
            stage: 0,
            expr: LinExpr {
                terms: BTreeMap::from([(i, Rational::one())]),
                constant: Rational::zero(),
            },
        }
    }

    pub fn inputs(&self, range: std::ops::Range<usize>) -> Vec<Signal> {
        range.map(|i| self.input(i)).collect()
    }

    pub fn constant(&self, c: Rational) -> Signal {
        Signal {
            stage: 0,
            expr: LinExpr::constant(c),
        }
    }

    fn known_nonnegative(s: &Signal) -> bool {
        (s.stage > 0 || s.expr.terms.is_empty())
            && s.expr.constant.is_nonnegative()
            && s.expr.terms.values().all(Rational::is_nonnegative)
    }

    pub fn relu(&mut self, s: &Signal) -> Signal {
        if s.expr.terms.is_empty() {
            return Signal {
                stage: s.stage,
                expr: LinExpr::constant(s.expr.constant.relu()),
            };
        }
        let stage = s.stage;
        if self.units.len() <= stage {
            self.units.resize_with(stage + 1, Vec::new);
            self.lookup.resize_with(stage + 1, HashMap::new);
        }
        let idx = match self.lookup[stage].get(&s.expr) {
            Some(&i) => i,
            None => {
                let i = self.units[stage].len();
                self.units[stage].push(s.expr.clone());
                self.lookup[stage].insert(s.expr.clone(), i);
                i
            }
        };
        Signal {
            stage: stage + 1,
            expr: LinExpr {
                terms: BTreeMap::from([(idx, Rational::one())]),
                constant: Rational::zero(),
            },
        }
    }

    /// Re-expresses `s` at stage `target >= s.stage`.
    pub fn lift(&mut self, s: &Signal, target: usize) -> Signal {
        assert!(target >= s.stage, "cannot lower a signal");
        let mut cur = s.clone();
        while cur.stage < target {
            if cur.expr.terms.is_empty() {
                cur.stage = target;
                break;
            }
            cur = if Self::known_nonnegative(&cur) {
                self.relu(&cur)
            } else {
                let pos = self.relu(&cur);
                let neg_in = self.scale(&cur, &Rational::from_int(-1));
                let neg = self.relu(&neg_in);
                self.sub(&pos, &neg)
            };
        }
        cur
    }

    fn align(&mut self, a: &Signal, b: &Signal) -> (Signal, Signal) {
        let stage = a.stage.max(b.stage);
        (self.lift(a, stage), self.lift(b, stage))
    }

    /// `Σ factor_i · s_i + constant`.
    pub fn linear(&mut self, parts: &[(Rational, &Signal)], constant: Rational) -> Signal {
        let stage = parts.iter().map(|(_, s)| s.stage).max().unwrap_or(0);
        let mut expr = LinExpr::constant(constant);
        for (factor, s) in parts {
            let lifted = self.lift(s, stage);
            expr.add_scaled(&lifted.expr, factor);
        }
        Signal { stage, expr }
    }

    pub fn add(&mut self, a: &Signal, b: &Signal) -> Signal {
        let (a, b) = self.align(a, b);
        let mut expr = a.expr;
        expr.add_scaled(&b.expr, &Rational::one());
        Signal {
            stage: a.stage,
            expr,
        }
    }

    pub fn sub(&mut self, a: &Signal, b: &Signal) -> Signal {
        let (a, b) = self.align(a, b);
        let mut expr = a.expr;
        expr.add_scaled(&b.expr, &Rational::from_int(-1));
        Signal {
            stage: a.stage,
            expr,
        }
    }

    pub fn scale(&mut self, a: &Signal, factor: &Rational) -> Signal {
        let mut expr = LinExpr::constant(Rational::zero());
        expr.add_scaled(&a.expr, factor);
        Signal {
            stage: a.stage,
            expr,
        }
    }

    pub fn add_const(&mut self, a: &Signal, c: Rational) -> Signal {
        let mut out = a.clone();
        out.expr.constant = &out.expr.constant + &c;
        out
    }

    pub fn sum(&mut self, items: &[Signal]) -> Signal {
        let parts: Vec<(Rational, &Signal)> = items.iter().map(|s| (Rational::one(), s)).collect();
        self.linear(&parts, Rational::zero())
    }

    /// `|x| = ReLU(x) + ReLU(-x)`.
    pub fn abs(&mut self, x: &Signal) -> Signal {
        let pos = self.relu(x);
        let neg_in = self.scale(x, &Rational::from_int(-1));
        let neg = self.relu(&neg_in);
        self.add(&pos, &neg)
    }

    /// `min(x, 1) = x - ReLU(x - 1)`.
    pub fn min1(&mut self, x: &Signal) -> Signal {
        let shifted = self.add_const(x, Rational::from_int(-1));
        let over = self.relu(&shifted);
        self.sub(x, &over)
    }

    /// Applies a whole network to a vector of signals.
    pub fn apply(&mut self, f: &SimpleFunction, inputs: &[Signal]) -> Vec<Signal> {
        assert_eq!(inputs.len(), f.input_dim(), "network input arity");
        let stage = inputs.iter().map(|s| s.stage).max().unwrap_or(0);
        let mut cur: Vec<Signal> = inputs.iter().map(|s| self.lift(s, stage)).collect();
        for (i, a) in f.affines().iter().enumerate() {
            let mut next = Vec::with_capacity(a.output_dim());
            for (row, b) in a.sparse_rows().iter().zip(a.bias().iter()) {
                let parts: Vec<(Rational, &Signal)> =
                    row.iter().map(|(c, w)| (w.clone(), &cur[*c])).collect();
                next.push(self.linear(&parts, b.clone()));
            }
            cur = if i + 1 < f.affines().len() {
                next.iter().map(|s| self.relu(s)).collect()
            } else {
                next
            };
        }
        cur
    }

    /// Emits the network computing `outputs`, dropping units no output depends on.
    pub fn finish(mut self, outputs: &[Signal]) -> Result<SimpleFunction> {
        let top = outputs.iter().map(|s| s.stage).max().unwrap_or(0);
        let outs: Vec<Signal> = outputs.iter().map(|s| self.lift(s, top)).collect();

        // Live units per stage, walking down from the outputs.
        let mut live: Vec<Vec<bool>> = (0..=top)
            .map(|s| {
                let n = if s == 0 { self.input_dim } else { self.units[s - 1].len() };
                vec![false; n]
            })
            .collect();
        for s in &outs {
            for u in s.expr.terms.keys() {
                live[top][*u] = true;
            }
        }
        for s in (1..=top).rev() {
            for (u, expr) in self.units[s - 1].iter().enumerate() {
                if live[s][u] {
                    for v in expr.terms.keys() {
                        live[s - 1][*v] = true;
                    }
                }
            }
        }
        // Inputs keep their positions; ReLU stages are renumbered densely.
        let remap: Vec<Vec<Option<usize>>> = live
            .iter()
            .enumerate()
            .map(|(s, flags)| {
                let mut next = 0;
                flags
                    .iter()
                    .map(|&alive| {
                        if s == 0 || alive {
                            let i = next;
                            next += 1;
                            Some(i)
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        let width = |s: usize| remap[s].iter().filter(|x| x.is_some()).count();
        let rows_of = |exprs: Vec<&LinExpr>, s: usize| -> (Vec<Vec<(usize, Rational)>>, RVector) {
            let mut rows = Vec::with_capacity(exprs.len());
            let mut bias = Vec::with_capacity(exprs.len());
            for e in exprs {
                rows.push(
                    e.terms
                        .iter()
                        .map(|(u, w)| (remap[s][*u].expect("live unit"), w.clone()))
                        .collect(),
                );
                bias.push(e.constant.clone());
            }
            (rows, RVector::new(bias))
        };

        let mut affines = Vec::with_capacity(top + 1);
        for s in 1..=top {
            let exprs: Vec<&LinExpr> = self.units[s - 1]
                .iter()
                .enumerate()
                .filter(|(u, _)| live[s][*u])
                .map(|(_, e)| e)
                .collect();
            let (rows, bias) = rows_of(exprs, s - 1);
            affines.push(Affine::from_sparse(width(s - 1), rows, bias)?);
        }
        let (rows, bias) = rows_of(outs.iter().map(|s| &s.expr).collect(), top);
        affines.push(Affine::from_sparse(width(top), rows, bias)?);
        SimpleFunction::new(affines)
    }
}
