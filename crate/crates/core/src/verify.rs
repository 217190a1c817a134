//! Trace-level checks of the traffic-light simulation.
//!
//! The correspondence `Φ(v, j)` (which halting step vertex `v` simulates at
//! converging step `j`) is reconstructed from the executor's advance events and
//! cross-checked against the phase stored in `τᶜ`. Every check compares the
//! converging trace against an independently computed halting trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Multiset};
use crate::model::HaltingRgnn;
use crate::neural::layer::Classifier;
use crate::protocol::{Configuration, TrafficLight};
use crate::rational::{RVector, Rational};
use crate::semantics::{self, RunTrace};
use crate::transform::{self, H2cModel, Variant};

/// `phi[j][v]` for `j` in `0..=transitions`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Correspondence {
    phi: Vec<Vec<usize>>,
}

impl Correspondence {
    pub fn get(&self, v: usize, j: usize) -> usize {
        self.phi[j][v]
    }

    pub fn at(&self, j: usize) -> &[usize] {
        &self.phi[j]
    }

    pub fn steps(&self) -> usize {
        self.phi.len()
    }

    pub fn max(&self) -> usize {
        self.phi.iter().flatten().copied().max().unwrap_or(0)
    }
}

/// `Φ(v, 0) = 0` and `Φ(v, j + 1) = Φ(v, j) + [v advances at step j]`.
pub fn extract_correspondence(trace_c: &RunTrace) -> Result<Correspondence> {
    let events = trace_c.events.as_ref().ok_or(Error::MissingInstrumentation)?;
    let n = trace_c.ids.len();
    let mut phi = vec![vec![0; n]];
    for step in events {
        if step.len() != n {
            return Err(Error::MissingInstrumentation);
        }
        let prev = phi.last().expect("Φ(·, 0)");
        let next = prev
            .iter()
            .zip(step)
            .map(|(p, e)| p + usize::from(e.advancing))
            .collect();
        phi.push(next);
    }
    Ok(Correspondence { phi })
}

/// Reconstructs `Φ` from the `τᶜ` phases alone, assuming each step moves a
/// vertex forward by 0 or 1 phases. `None` where a traffic light is invalid.
pub fn decode_correspondence(trace_c: &RunTrace, d: usize) -> Vec<Vec<Option<usize>>> {
    let n = trace_c.ids.len();
    let mut out: Vec<Vec<Option<usize>>> = Vec::with_capacity(trace_c.len());
    for (j, state) in trace_c.states.iter().enumerate() {
        let row = (0..n)
            .map(|v| {
                let phase = Configuration::decode(&state[v], d).ok()?.tau_c.phase();
                if j == 0 {
                    return (phase == 0).then_some(0);
                }
                let prev = out[j - 1][v]?;
                match (phase + 3 - prev % 3) % 3 {
                    0 => Some(prev),
                    1 => Some(prev + 1),
                    _ => None,
                }
            })
            .collect();
        out.push(row);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub check: String,
    pub vertex: String,
    pub step: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub checked: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub k_gamma: Option<usize>,
    pub j_prime: Option<usize>,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub steps: usize,
    pub k: Option<usize>,
    /// Keyed by the component's first vertex id.
    pub components: BTreeMap<String, ComponentSummary>,
    pub checks: BTreeMap<String, Tally>,
    pub failures: Vec<Failure>,
    pub max_phi_gap: usize,
    /// Number of (edge, step) pairs at each `|Φ(u, j) − Φ(v, j)|`.
    pub gap_histogram: BTreeMap<usize, usize>,
}

impl CoherenceReport {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failed(&self, check: &str) -> bool {
        self.checks.get(check).is_some_and(|t| t.failed > 0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialisation")
    }

    pub fn gap_csv(&self) -> String {
        let mut s = String::from("gap,count\n");
        for (gap, count) in &self.gap_histogram {
            s.push_str(&format!("{gap},{count}\n"));
        }
        s
    }
}

pub const CHECKS: [&str; 14] = [
    "coherence-1",
    "coherence-2",
    "coherence-3",
    "coherence-4",
    "decode",
    "predicates",
    "lemma-a",
    "lemma-b",
    "lemma-c",
    "lemma-d",
    "lemma-e",
    "lemma-f",
    "final-snapshot",
    "convergence",
];

struct Recorder<'a> {
    ids: &'a [String],
    checks: BTreeMap<String, Tally>,
    failures: Vec<Failure>,
}

impl Recorder<'_> {
    fn check(&mut self, name: &str, v: usize, j: usize, ok: bool, detail: impl FnOnce() -> String) {
        let t = self.checks.entry(name.to_string()).or_default();
        t.checked += 1;
        if !ok {
            t.failed += 1;
            self.failures.push(Failure {
                check: name.to_string(),
                vertex: self.ids[v].clone(),
                step: j,
                detail: detail(),
            });
        }
    }
}

/// Halting states `H_0, H_1, …`, extended on demand by applying the source layer.
struct HaltingStates<'a> {
    model: &'a HaltingRgnn,
    graph: Graph,
    states: Vec<Vec<RVector>>,
}

impl<'a> HaltingStates<'a> {
    fn new(model: &'a HaltingRgnn, g: &Graph, trace_h: &RunTrace) -> Self {
        HaltingStates {
            model,
            graph: g.clone(),
            states: trace_h.states.clone(),
        }
    }

    fn get(&mut self, i: usize) -> Result<&[RVector]> {
        while self.states.len() <= i {
            let last = self.graph.with_labels(self.states.last().expect("H_0").clone())?;
            let next = self.model.base().layer().apply(&last)?;
            self.states.push(next.labels().to_vec());
        }
        Ok(&self.states[i])
    }
}

/// Everything the checks need besides the two traces.
pub struct VerifyInput<'a> {
    pub graph: &'a Graph,
    pub source: &'a HaltingRgnn,
    /// Readout of the derived model; `Out ∘ κᶜ` when absent.
    pub derived_readout: Option<&'a Classifier>,
}

/// Runs the coherence conditions and the lemma checks on a pair of traces.
pub fn check(input: &VerifyInput<'_>, trace_c: &RunTrace, trace_h: &RunTrace) -> Result<CoherenceReport> {
    let g = input.graph;
    let h = input.source;
    let d = h.dim();
    let n = g.len();
    if trace_c.ids != g.ids() || trace_h.ids != g.ids() {
        return Err(Error::Parse("traces and graph disagree on vertex ids".into()));
    }
    let phi = extract_correspondence(trace_c)?;
    if phi.steps() < trace_c.len() {
        return Err(Error::MissingInstrumentation);
    }
    let mut hs = HaltingStates::new(h, g, trace_h);
    let mut rec = Recorder {
        ids: g.ids(),
        checks: CHECKS.iter().map(|c| (c.to_string(), Tally::default())).collect(),
        failures: Vec::new(),
    };
    let len = trace_c.len();
    let events = trace_c.events.as_ref().expect("checked by extraction");

    let confs: Vec<Vec<Option<Configuration>>> = trace_c
        .states
        .iter()
        .map(|s| s.iter().map(|x| Configuration::decode(x, d).ok()).collect())
        .collect();
    let decoded = decode_correspondence(trace_c, d);

    let edges: Vec<(usize, usize)> = g.edges().filter(|(u, v)| u != v).collect();
    let mut gap_histogram = BTreeMap::new();
    let mut max_gap = 0;

    for j in 0..len {
        let phi_j = phi.at(j);
        let h_max = phi_j.iter().copied().max().unwrap_or(0);
        hs.get(h_max + 1)?;
        for v in 0..n {
            let Some(conf) = &confs[j][v] else {
                rec.check("coherence-2", v, j, false, || {
                    format!("configuration {:?} has an invalid traffic light", trace_c.states[j][v])
                });
                continue;
            };
            let p = phi_j[v];
            let expect = &hs.states[p][v];
            rec.check("coherence-1", v, j, &conf.kappa_c == expect, || {
                format!("κᶜ = {:?}, H_{p} = {:?}", conf.kappa_c, expect)
            });
            rec.check("coherence-2", v, j, conf.tau_c == TrafficLight::enc3(p), || {
                format!("τᶜ = {}, enc3({p}) = {}", conf.tau_c, TrafficLight::enc3(p))
            });
            let (want_km, want_tm) = if j == 0 {
                (conf.kappa_c.clone(), TrafficLight::enc3(0))
            } else {
                match &confs[j - 1][v] {
                    Some(prev) => (prev.kappa_c.clone(), prev.tau_c),
                    None => (conf.kappa_m.clone(), conf.tau_m),
                }
            };
            rec.check(
                "coherence-3",
                v,
                j,
                conf.kappa_m == want_km && conf.tau_m == want_tm,
                || {
                    format!(
                        "advertised ({:?}, {}) but previous current ({:?}, {})",
                        conf.kappa_m, conf.tau_m, want_km, want_tm
                    )
                },
            );
            rec.check("decode", v, j, decoded[j][v] == Some(p), || {
                format!("Φ from events = {p}, decoded from τᶜ = {:?}", decoded[j][v])
            });
        }
        for &(u, v) in &edges {
            let gap = phi_j[u].abs_diff(phi_j[v]);
            *gap_histogram.entry(gap).or_insert(0) += 1;
            max_gap = max_gap.max(gap);
            rec.check("coherence-4", u, j, gap <= 1, || {
                format!("|Φ({}) − Φ({})| = {gap}", g.id(u), g.id(v))
            });
        }
    }

    // predicate lemma and lemmas (a), (f) on every recorded transition
    for j in 0..len.min(events.len()) {
        let phi_j = phi.at(j);
        for v in 0..n {
            let ev = events[j][v];
            let p = phi_j[v];
            let nbrs = g.neighbours(v);
            let behind = nbrs.iter().any(|&u| phi_j[u] > p);
            let aligned = nbrs.iter().all(|&u| match &confs[j][u] {
                Some(c) => c.kappa_m == hs.states[p][u] && c.tau_m == TrafficLight::enc3(p),
                None => false,
            });
            let halted = h.halt().classify(&hs.states[p][v])?;
            let eager = behind || !halted;
            rec.check(
                "predicates",
                v,
                j,
                ev.behind == behind
                    && ev.aligned == aligned
                    && ev.eager == eager
                    && ev.advancing == (aligned && eager),
                || {
                    format!(
                        "observed (behind {}, aligned {}, eager {}, advancing {}), from Φ ({behind}, {aligned}, {eager}, {})",
                        ev.behind,
                        ev.aligned,
                        ev.eager,
                        ev.advancing,
                        aligned && eager
                    )
                },
            );
            if behind {
                rec.check("lemma-a", v, j, aligned, || "behind but not aligned".into());
            }
            if ev.advancing {
                let Some(conf) = &confs[j][v] else { continue };
                let mut m = Multiset::new();
                for &u in nbrs {
                    if let Some(c) = &confs[j][u] {
                        *m.entry(c.kappa_m.clone()).or_insert(0) += 1;
                    }
                }
                let layer = h.base().layer();
                let agg = layer.aggregation().aggregate(&m, d)?;
                let next = layer.combine(&conf.kappa_c, &agg)?;
                let want = hs.get(p + 1)?[v].clone();
                rec.check("lemma-f", v, j, next == want, || {
                    format!("CMB(κᶜ, κ̂ᵐ) = {next:?}, H_{} = {want:?}", p + 1)
                });
            }
        }
    }

    // per-component lemmas (b)–(e)
    let truth = semantics::run_halting(h, g, trace_h.len());
    let truth_output = truth.as_ref().ok().map(|r| r.output.clone());
    let k_gamma = trace_h.k_gamma.clone().unwrap_or_default();
    let mut components = BTreeMap::new();
    let last = len - 1;
    for comp in g.components() {
        let key = g.id(comp[0]).to_string();
        let kg = k_gamma.get(&key).copied();
        let mut j_prime = None;
        if let Some(kg) = kg {
            for j in 0..len {
                for &v in &comp {
                    let p = phi.get(v, j);
                    rec.check("lemma-b", v, j, p <= kg, || format!("Φ = {p} > k_Γ = {kg}"));
                }
            }
            j_prime = (0..len).find(|&j| comp.iter().all(|&v| phi.get(v, j) == kg));
        }
        rec.check("lemma-c", comp[0], last, j_prime.is_some(), || match kg {
            Some(kg) => format!("component never reaches k_Γ = {kg} within {len} steps"),
            None => "halting run did not halt on this component".into(),
        });
        if let (Some(jp), Some(kg)) = (j_prime, kg) {
            for j in jp + 1..last {
                for &v in &comp {
                    let same = trace_c.states[j + 1][v] == trace_c.states[j][v];
                    rec.check("lemma-d", v, j, same, || "configuration changed after j′ + 1".into());
                }
            }
            for j in jp..len {
                for &v in &comp {
                    let x = &trace_c.states[j][v];
                    let out = match (input.derived_readout, &confs[j][v]) {
                        (Some(r), _) => Some(r.classify(x)?),
                        (None, Some(c)) => Some(h.base().readout().classify(&c.kappa_c)?),
                        (None, None) => None,
                    };
                    let want = truth_output.as_ref().map(|o| o[v]);
                    rec.check("lemma-e", v, j, out.is_some() && out == want, || {
                        format!("Out′ = {out:?}, H(G) = {want:?}")
                    });
                }
            }
            for &v in &comp {
                let ok = confs[last][v]
                    .as_ref()
                    .is_some_and(|c| c.kappa_c == hs.states[kg][v]);
                rec.check("final-snapshot", v, last, ok, || {
                    format!("final κᶜ differs from H_{kg}")
                });
            }
        }
        components.insert(
            key,
            ComponentSummary {
                k_gamma: kg,
                j_prime,
                size: comp.len(),
            },
        );
    }
    if n == 0 {
        return Err(Error::Parse("empty graph".into()));
    }
    rec.check("convergence", 0, last, trace_c.certificate.is_success(), || {
        format!("converging run ended with {}", trace_c.certificate)
    });

    Ok(CoherenceReport {
        steps: len,
        k: trace_h.k,
        components,
        checks: rec.checks,
        failures: rec.failures,
        max_phi_gap: max_gap,
        gap_histogram,
    })
}

/// Step budget for the derived converging run.
pub fn converging_budget(n: usize, k: usize) -> usize {
    5 * (n + k + 2)
}

/// Both runs plus the report.
pub struct Verification {
    pub derived: H2cModel,
    pub trace_c: RunTrace,
    pub trace_h: RunTrace,
    pub report: CoherenceReport,
}

pub fn compile(h: &HaltingRgnn, variant: Variant, bound: Option<&Rational>) -> Result<H2cModel> {
    match variant {
        Variant::General => transform::to_converging(h),
        Variant::Simple => transform::to_converging_simple(
            h,
            bound.ok_or_else(|| Error::InvalidModel("simple compilation needs a bound".into()))?,
        ),
    }
}

/// Compiles `h`, runs both models on `g` and checks the pair.
pub fn verify_on_graph(
    h: &HaltingRgnn,
    g: &Graph,
    variant: Variant,
    bound: Option<&Rational>,
    max_steps: usize,
) -> Result<Verification> {
    let derived = compile(h, variant, bound)?;
    verify_compiled(h, derived, g, max_steps)
}

pub fn verify_compiled(
    h: &HaltingRgnn,
    derived: H2cModel,
    g: &Graph,
    max_steps: usize,
) -> Result<Verification> {
    let trace_h = semantics::trace_halting(h, g, max_steps)?;
    let k = trace_h.k.ok_or(Error::BudgetExhausted {
        what: "halting run",
        steps: max_steps,
    })?;
    let budget = converging_budget(g.len(), k);
    let trace_c = semantics::trace_converging(&derived.derived, g, budget, Some(&derived.observer))?;
    let report = check(
        &VerifyInput {
            graph: g,
            source: h,
            derived_readout: Some(derived.derived.readout()),
        },
        &trace_c,
        &trace_h,
    )?;
    Ok(Verification {
        derived,
        trace_c,
        trace_h,
        report,
    })
}

/// Which part of a configuration trace to corrupt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Adds `delta` to component `index` of vertex `v` at step `j`.
    State { j: usize, v: usize, index: usize },
    /// Flips the recorded advance decision of `v` at step `j`.
    Advance { j: usize, v: usize },
}

/// Returns a copy of `trace` with one field changed.
pub fn inject(trace: &RunTrace, fault: Fault) -> RunTrace {
    let mut t = trace.clone();
    match fault {
        Fault::State { j, v, index } => {
            let x = &mut t.states[j][v];
            let mut comps = x.clone().into_inner();
            comps[index] = &comps[index] + &Rational::one();
            *x = RVector::new(comps);
        }
        Fault::Advance { j, v } => {
            let e = &mut t.events.as_mut().expect("instrumented trace")[j][v];
            e.advancing = !e.advancing;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::generate::{path, red_end_path};
    use crate::rational::RVector;

    fn verify(name: &str, g: &Graph, variant: Variant) -> Verification {
        let e = gallery::get(name).unwrap();
        verify_on_graph(e.as_halting().unwrap(), g, variant, e.bound.as_ref(), 200).unwrap()
    }

    #[test]
    fn counter_on_an_edge_advances_twice() {
        let g = path(vec![RVector::from_ints(&[1, 0]), RVector::from_ints(&[0, 0])]);
        for variant in [Variant::General, Variant::Simple] {
            let ver = verify("counter-k", &g, variant);
            assert!(ver.report.all_pass(), "{:?}", ver.report.failures);
            let phi = extract_correspondence(&ver.trace_c).unwrap();
            let seq: Vec<usize> = (0..phi.steps()).map(|j| phi.get(0, j)).collect();
            // synchronous neighbours wait one step for each other's advertisement
            assert_eq!(seq, vec![0, 1, 1, 2, 2, 2]);
            assert_eq!(ver.trace_c.k, Some(4));
        }
    }

    #[test]
    fn halted_single_vertex_never_advances() {
        let g = Graph::from_indexed(vec![RVector::from_ints(&[1])], &[]).unwrap();
        let ver = verify("const-label", &g, Variant::General);
        assert!(ver.report.all_pass());
        let phi = extract_correspondence(&ver.trace_c).unwrap();
        assert_eq!(phi.max(), 0);
        assert_eq!(ver.report.components["v0"].j_prime, Some(0));
        assert_eq!(ver.trace_c.k, Some(0));
    }

    #[test]
    fn long_path_desynchronises() {
        let ver = verify("reach-red", &red_end_path(6), Variant::General);
        assert!(ver.report.all_pass(), "{:?}", ver.report.failures);
        assert_eq!(ver.report.max_phi_gap, 1);
    }

    #[test]
    fn corrupted_advertisement_is_caught() {
        let g = red_end_path(4);
        let ver = verify("reach-red", &g, Variant::General);
        let kappa_m = 2 + 3;
        let bad = inject(&ver.trace_c, Fault::State { j: 2, v: 1, index: kappa_m });
        let e = gallery::get("reach-red").unwrap();
        let input = VerifyInput {
            graph: &g,
            source: e.as_halting().unwrap(),
            derived_readout: None,
        };
        let report = check(&input, &bad, &ver.trace_h).unwrap();
        assert!(report.failed("coherence-3"));
        assert!(report.failures.iter().any(|f| f.check == "coherence-3" && f.step == 2 && f.vertex == "v1"));
    }

    #[test]
    fn missing_events_are_an_error() {
        let g = red_end_path(3);
        let ver = verify("reach-red", &g, Variant::General);
        let mut t = ver.trace_c.clone();
        t.events = None;
        assert!(matches!(extract_correspondence(&t), Err(Error::MissingInstrumentation)));
    }
}
