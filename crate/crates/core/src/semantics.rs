//! Runs of an RGNN and the converging, halting and output-converging executors.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{HaltingRgnn, Rgnn};
use crate::neural::layer::Classifier;
use crate::protocol::{self, Decision};
use crate::rational::RVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certificate {
    StateFixedPoint,
    AllHalted,
    OutputCycle,
    OutputWindow,
    BudgetExhausted,
    UnstableOutputCycle,
}

impl Certificate {
    /// Whether a run ending with this certificate has a defined output.
    pub fn is_success(self) -> bool {
        !matches!(self, Certificate::BudgetExhausted | Certificate::UnstableOutputCycle)
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("certificate name");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Semantics {
    Converging,
    Halting,
    OutputConverging { window: usize },
}

/// Observes the traffic-light predicates of a protocol model at every step.
#[derive(Clone, Debug)]
pub struct ProtocolObserver {
    pub dim: usize,
    pub halt: Classifier,
}

impl ProtocolObserver {
    pub fn observe(&self, x: &RVector, agg: &RVector) -> Result<Decision> {
        protocol::decide(self.dim, &self.halt, x, agg)
    }
}

/// States `H_0, H_1, …` of a run, optional per-transition events, and how it ended.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub ids: Vec<String>,
    pub states: Vec<Vec<RVector>>,
    /// `events[j][v]`: the decision of `v` on the transition from step `j`.
    pub events: Option<Vec<Vec<Decision>>>,
    pub certificate: Certificate,
    pub k: Option<usize>,
    /// For halting runs: first index at which every vertex of a component
    /// halts, keyed by the component's first vertex id.
    pub k_gamma: Option<BTreeMap<String, usize>>,
    /// Halting-classifier verdict per step and vertex (halting runs only).
    pub halted: Option<Vec<Vec<bool>>>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[RVector] {
        &self.states[i]
    }

    pub fn last(&self) -> &[RVector] {
        self.states.last().expect("trace has H_0")
    }
}

/// A successful run: per-vertex outputs at index `k`.
#[derive(Clone, Debug)]
pub struct Run {
    pub output: Vec<bool>,
    pub k: usize,
    pub trace: RunTrace,
}

impl Run {
    pub fn output_map(&self) -> BTreeMap<String, bool> {
        self.trace.ids.iter().cloned().zip(self.output.iter().copied()).collect()
    }
}

struct Stepper<'a> {
    model: &'a Rgnn,
    graph: Graph,
    observer: Option<&'a ProtocolObserver>,
}

impl<'a> Stepper<'a> {
    fn start(model: &'a Rgnn, g: &Graph, observer: Option<&'a ProtocolObserver>) -> Result<Self> {
        let labels = g
            .labels()
            .iter()
            .map(|x| model.initial_features(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Stepper {
            model,
            graph: g.with_labels(labels)?,
            observer,
        })
    }

    fn step(&self) -> Result<(Graph, Option<Vec<Decision>>)> {
        let layer = self.model.layer();
        let g = &self.graph;
        let mut labels = Vec::with_capacity(g.len());
        let mut events = self.observer.map(|_| Vec::with_capacity(g.len()));
        for v in 0..g.len() {
            let a = layer.aggregate_at(g, v)?;
            if let (Some(obs), Some(ev)) = (self.observer, events.as_mut()) {
                ev.push(obs.observe(g.label(v), &a)?);
            }
            labels.push(layer.combine(g.label(v), &a)?);
        }
        Ok((g.with_labels(labels)?, events))
    }
}

fn outputs(readout: &Classifier, states: &[RVector]) -> Result<Vec<bool>> {
    states.iter().map(|x| readout.classify(x)).collect()
}

fn new_trace(g: &Graph, first: &Graph, observe: bool) -> RunTrace {
    RunTrace {
        ids: g.ids().to_vec(),
        states: vec![first.labels().to_vec()],
        events: observe.then(Vec::new),
        certificate: Certificate::BudgetExhausted,
        k: None,
        k_gamma: None,
        halted: None,
    }
}

/// Iterates until `L(H_k) = H_k` for some `k ≤ max_steps`.
///
/// The trace holds `H_0..H_k`; events (if observed) cover transitions `0..=k`.
pub fn trace_converging(
    r: &Rgnn,
    g: &Graph,
    max_steps: usize,
    observer: Option<&ProtocolObserver>,
) -> Result<RunTrace> {
    let mut s = Stepper::start(r, g, observer)?;
    let mut trace = new_trace(g, &s.graph, observer.is_some());
    for i in 0..=max_steps {
        let (next, events) = s.step()?;
        if let (Some(all), Some(ev)) = (trace.events.as_mut(), events) {
            all.push(ev);
        }
        if next.labels() == s.graph.labels() {
            trace.certificate = Certificate::StateFixedPoint;
            trace.k = Some(i);
            return Ok(trace);
        }
        if i == max_steps {
            break;
        }
        trace.states.push(next.labels().to_vec());
        s.graph = next;
    }
    Ok(trace)
}

pub fn run_converging(r: &Rgnn, g: &Graph, max_steps: usize) -> Result<Run> {
    finish(r, trace_converging(r, g, max_steps, None)?, "converging run", max_steps)
}

pub fn run_converging_observed(
    r: &Rgnn,
    g: &Graph,
    max_steps: usize,
    observer: &ProtocolObserver,
) -> Result<Run> {
    finish(
        r,
        trace_converging(r, g, max_steps, Some(observer))?,
        "converging run",
        max_steps,
    )
}

fn finish(r: &Rgnn, trace: RunTrace, what: &'static str, max_steps: usize) -> Result<Run> {
    match (trace.certificate, trace.k) {
        (Certificate::UnstableOutputCycle, _) => Err(Error::UnstableOutputCycle {
            cycle_start: trace.k.unwrap_or(0),
            cycle_end: trace.len(),
        }),
        (c, Some(k)) if c.is_success() => Ok(Run {
            output: outputs(r.readout(), trace.state(k))?,
            k,
            trace,
        }),
        _ => Err(Error::BudgetExhausted {
            what,
            steps: max_steps,
        }),
    }
}

/// Iterates until every vertex halts at some `k ≤ max_steps`.
pub fn trace_halting(h: &HaltingRgnn, g: &Graph, max_steps: usize) -> Result<RunTrace> {
    let mut s = Stepper::start(h.base(), g, None)?;
    let mut trace = new_trace(g, &s.graph, false);
    let comps = g.components();
    let mut k_gamma: Vec<Option<usize>> = vec![None; comps.len()];
    let mut halted_log = Vec::new();
    for i in 0..=max_steps {
        let halted = s
            .graph
            .labels()
            .iter()
            .map(|x| h.halt().classify(x))
            .collect::<Result<Vec<_>>>()?;
        for (c, comp) in comps.iter().enumerate() {
            if k_gamma[c].is_none() && comp.iter().all(|&v| halted[v]) {
                k_gamma[c] = Some(i);
            }
        }
        let all = halted.iter().all(|&b| b);
        halted_log.push(halted);
        if all {
            trace.certificate = Certificate::AllHalted;
            trace.k = Some(i);
            break;
        }
        if i == max_steps {
            break;
        }
        let (next, _) = s.step()?;
        trace.states.push(next.labels().to_vec());
        s.graph = next;
    }
    trace.halted = Some(halted_log);
    trace.k_gamma = Some(
        comps
            .iter()
            .zip(&k_gamma)
            .filter_map(|(comp, k)| k.map(|k| (g.id(comp[0]).to_string(), k)))
            .collect(),
    );
    Ok(trace)
}

pub fn run_halting(h: &HaltingRgnn, g: &Graph, max_steps: usize) -> Result<Run> {
    finish(h.base(), trace_halting(h, g, max_steps)?, "halting run", max_steps)
}

/// Output-convergence by exact state-cycle detection, with a heuristic
/// constant-output window as a fallback.
///
/// At each step a revisited state is checked first: if every state on the
/// cycle has the same outputs the run provably output-converges and `k` is
/// the earliest index from which outputs stay constant; otherwise it provably
/// does not. If `window` consecutive transitions leave the outputs unchanged
/// without any revisit, the run stops with an `output-window` certificate.
pub fn trace_output_converging(
    r: &Rgnn,
    g: &Graph,
    max_steps: usize,
    window: usize,
) -> Result<RunTrace> {
    if window == 0 {
        return Err(Error::Parse("window must be at least 1".into()));
    }
    let mut s = Stepper::start(r, g, None)?;
    let mut trace = new_trace(g, &s.graph, false);
    let mut seen: HashMap<Vec<RVector>, usize> = HashMap::new();
    let mut outs: Vec<Vec<bool>> = Vec::new();
    let mut run_start = 0;
    for i in 0..=max_steps + 1 {
        let state = s.graph.labels().to_vec();
        if let Some(&start) = seen.get(&state) {
            // states start..i-1 form the cycle
            let cycle = &outs[start..i];
            if cycle.iter().all(|o| *o == outs[start]) {
                let mut k = start;
                while k > 0 && outs[k - 1] == outs[start] {
                    k -= 1;
                }
                trace.certificate = Certificate::OutputCycle;
                trace.k = Some(k);
            } else {
                trace.certificate = Certificate::UnstableOutputCycle;
                trace.k = Some(start);
            }
            return Ok(trace);
        }
        if i > max_steps {
            break;
        }
        let o = outputs(r.readout(), &state)?;
        if i > 0 && o != outs[i - 1] {
            run_start = i;
        }
        outs.push(o);
        seen.insert(state, i);
        if i - run_start >= window {
            trace.certificate = Certificate::OutputWindow;
            trace.k = Some(run_start);
            return Ok(trace);
        }
        let (next, _) = s.step()?;
        if i < max_steps {
            trace.states.push(next.labels().to_vec());
        }
        s.graph = next;
    }
    Ok(trace)
}

pub fn run_output_converging(r: &Rgnn, g: &Graph, max_steps: usize, window: usize) -> Result<Run> {
    finish(
        r,
        trace_output_converging(r, g, max_steps, window)?,
        "output-converging run",
        max_steps,
    )
}

// JSON-lines trace files

fn features_json(ids: &[String], state: &[RVector]) -> Value {
    let mut m = Map::new();
    for (id, x) in ids.iter().zip(state) {
        m.insert(id.clone(), serde_json::to_value(x).expect("vector serialisation"));
    }
    Value::Object(m)
}

fn events_json(ids: &[String], events: &[Decision]) -> Value {
    let mut m = Map::new();
    for (id, e) in ids.iter().zip(events) {
        m.insert(id.clone(), serde_json::to_value(e).expect("event serialisation"));
    }
    Value::Object(m)
}

/// `{"k", "certificate", "output"}`; `output` maps ids to booleans, or null
/// when the run has no defined output.
pub fn run_summary(r: &Rgnn, trace: &RunTrace) -> Result<Value> {
    let output = match trace.k {
        Some(k) if trace.certificate.is_success() => {
            let out = outputs(r.readout(), trace.state(k))?;
            Value::Object(
                trace
                    .ids
                    .iter()
                    .zip(out)
                    .map(|(id, b)| (id.clone(), Value::Bool(b)))
                    .collect(),
            )
        }
        _ => Value::Null,
    };
    Ok(json!({"k": trace.k, "certificate": trace.certificate, "output": output}))
}

/// One line per state, then a summary line.
pub fn write_trace<W: Write>(trace: &RunTrace, mut w: W) -> Result<()> {
    for (i, state) in trace.states.iter().enumerate() {
        let mut line = json!({"step": i, "features": features_json(&trace.ids, state)});
        if let Some(ev) = trace.events.as_ref().and_then(|e| e.get(i)) {
            line["events"] = events_json(&trace.ids, ev);
        }
        writeln!(w, "{line}")?;
    }
    let mut summary = json!({"certificate": trace.certificate, "k": trace.k});
    if let Some(kg) = &trace.k_gamma {
        summary["kGamma"] = serde_json::to_value(kg)?;
    }
    if let Some(events) = &trace.events {
        if events.len() > trace.states.len() {
            summary["finalEvents"] = events_json(&trace.ids, &events[trace.states.len()]);
        }
    }
    writeln!(w, "{summary}")?;
    Ok(())
}

pub fn trace_to_string(trace: &RunTrace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("trace is UTF-8")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepLine {
    step: usize,
    features: BTreeMap<String, RVector>,
    #[serde(default)]
    events: Option<BTreeMap<String, Decision>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryLine {
    certificate: Certificate,
    k: Option<usize>,
    #[serde(default, rename = "kGamma")]
    k_gamma: Option<BTreeMap<String, usize>>,
    #[serde(default, rename = "finalEvents")]
    final_events: Option<BTreeMap<String, Decision>>,
}

fn pick_in_order<T: Clone>(m: &BTreeMap<String, T>, ids: &[String]) -> Result<Vec<T>> {
    if m.len() != ids.len() {
        return Err(Error::Parse(format!(
            "trace step covers {} vertices, graph has {}",
            m.len(),
            ids.len()
        )));
    }
    ids.iter()
        .map(|id| m.get(id).cloned().ok_or_else(|| Error::UnknownVertex(id.clone())))
        .collect()
}

/// Reads a trace written by [`write_trace`]; vertex order follows `ids`.
pub fn read_trace<R: BufRead>(r: R, ids: &[String]) -> Result<RunTrace> {
    let mut states = Vec::new();
    let mut events: Vec<Vec<Decision>> = Vec::new();
    let mut any_events = false;
    let mut summary = None;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(Error::Parse(format!("line {}: data after summary", n + 1)));
        }
        let v: Value = serde_json::from_str(&line)?;
        if v.get("step").is_some() {
            let s: StepLine = serde_json::from_value(v)?;
            if s.step != states.len() {
                return Err(Error::Parse(format!("line {}: expected step {}", n + 1, states.len())));
            }
            states.push(pick_in_order(&s.features, ids)?);
            if let Some(e) = &s.events {
                any_events = true;
                events.push(pick_in_order(e, ids)?);
            }
        } else {
            summary = Some(serde_json::from_value::<SummaryLine>(v)?);
        }
    }
    let summary = summary.ok_or_else(|| Error::Parse("trace has no summary line".into()))?;
    if states.is_empty() {
        return Err(Error::Parse("trace has no states".into()));
    }
    if let Some(e) = &summary.final_events {
        any_events = true;
        events.push(pick_in_order(e, ids)?);
    }
    Ok(RunTrace {
        ids: ids.to_vec(),
        states,
        events: any_events.then_some(events),
        certificate: summary.certificate,
        k: summary.k,
        k_gamma: summary.k_gamma,
        halted: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layer::{AcLayer, Init};
    use crate::neural::simple::{Affine, SimpleFunction};
    use crate::rational::Rational;

    fn scalar_model(comb: SimpleFunction, readout: SimpleFunction) -> Rgnn {
        Rgnn::new(
            1,
            Init::Simple(SimpleFunction::identity(1)),
            AcLayer::simple(comb).unwrap(),
            Classifier::simple(readout).unwrap(),
        )
        .unwrap()
    }

    fn row(coeffs: &[i64], bias: i64) -> SimpleFunction {
        SimpleFunction::affine(
            Affine::new(coeffs.len(), vec![RVector::from_ints(coeffs)], RVector::from_ints(&[bias]))
                .unwrap(),
        )
    }

    fn single() -> Graph {
        Graph::from_indexed(vec![RVector::from_ints(&[1])], &[]).unwrap()
    }

    #[test]
    fn identity_layer_converges_at_zero() {
        let r = scalar_model(row(&[1, 0], 0), SimpleFunction::identity(1));
        let run = run_converging(&r, &single(), 5).unwrap();
        assert_eq!(run.k, 0);
        assert_eq!(run.output, vec![true]);
        assert_eq!(run.trace.len(), 1);
    }

    #[test]
    fn strict_counter_exhausts_budget() {
        let r = scalar_model(row(&[1, 0], 1), SimpleFunction::identity(1));
        assert!(matches!(
            run_converging(&r, &single(), 10),
            Err(Error::BudgetExhausted { .. })
        ));
        let t = trace_converging(&r, &single(), 10, None).unwrap();
        assert_eq!(t.len(), 11);
    }

    #[test]
    fn max_steps_zero_still_detects_immediate_fixed_point() {
        let r = scalar_model(row(&[1, 0], 0), SimpleFunction::identity(1));
        assert_eq!(run_converging(&r, &single(), 0).unwrap().k, 0);
    }

    #[test]
    fn flip_with_constant_readout_is_output_cycle() {
        let r = scalar_model(row(&[-1, 0], 0), row(&[0], 1));
        let run = run_output_converging(&r, &single(), 20, 4).unwrap();
        assert_eq!(run.trace.certificate, Certificate::OutputCycle);
        assert_eq!(run.k, 0);
    }

    #[test]
    fn flip_with_identity_readout_is_unstable() {
        let r = scalar_model(row(&[-1, 0], 0), SimpleFunction::identity(1));
        assert!(matches!(
            run_output_converging(&r, &single(), 20, 4),
            Err(Error::UnstableOutputCycle { .. })
        ));
    }

    #[test]
    fn window_certificate_without_cycle() {
        // x ↦ x + 1 with constant readout never revisits a state
        let r = scalar_model(row(&[1, 0], 1), row(&[0], 1));
        let run = run_output_converging(&r, &single(), 20, 3).unwrap();
        assert_eq!(run.trace.certificate, Certificate::OutputWindow);
        assert_eq!(run.k, 0);
    }

    #[test]
    fn halting_records_component_indices() {
        // counts up by one, halts at 2
        let comb = row(&[1, 0], 1);
        let base = Rgnn::new(
            1,
            Init::Simple(row(&[0], 0)),
            AcLayer::simple(comb).unwrap(),
            Classifier::simple(SimpleFunction::identity(1)).unwrap(),
        )
        .unwrap();
        let halt = Classifier::simple(row(&[1], -2)).unwrap();
        let h = HaltingRgnn::new(base, halt).unwrap();
        let g = Graph::from_indexed(
            vec![RVector::from_ints(&[0]), RVector::from_ints(&[0]), RVector::from_ints(&[0])],
            &[(0, 1)],
        )
        .unwrap();
        let run = run_halting(&h, &g, 10).unwrap();
        assert_eq!(run.k, 2);
        let kg = run.trace.k_gamma.unwrap();
        assert_eq!(kg["v0"], 2);
        assert_eq!(kg["v2"], 2);
    }

    #[test]
    fn trace_roundtrip() {
        let r = scalar_model(row(&[1, 1], 0), SimpleFunction::identity(1));
        let g = Graph::from_indexed(
            vec![RVector::new(vec![Rational::new(1, 2)]), RVector::from_ints(&[0])],
            &[],
        )
        .unwrap();
        let t = trace_converging(&r, &g, 3, None).unwrap();
        let text = trace_to_string(&t);
        assert!(text.starts_with(r#"{"features":{"v0":["1/2"],"v1":["0"]},"step":0}"#));
        let back = read_trace(text.as_bytes(), g.ids()).unwrap();
        assert_eq!(back, t);
    }
}
