//! Hand-built models with known behaviour, each with a graph-algorithmic oracle.
//!
//! Unless stated otherwise labels are `(red, green)` bits.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::generate::red_green_palette;
use crate::graph::Graph;
use crate::model::{HaltingRgnn, Model, ModelFile, Rgnn};
use crate::neural::layer::{AcLayer, Aggregation, Classifier, Init, Registry};
use crate::neural::simple::{Affine, SimpleFunction};
use crate::rational::{RVector, Rational};
use crate::semantics::Semantics;

pub struct GalleryEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub semantics: Semantics,
    pub model: Model,
    /// Expected per-vertex output, or `None` when the model has no output on `g`.
    pub oracle: fn(&Graph) -> Option<Vec<bool>>,
    pub palette: Vec<RVector>,
    pub simple: bool,
    /// Per-component change bound for the compiled protocol.
    pub bound: Option<Rational>,
    pub invariant: bool,
    /// The halting function only takes the values −1 and 1 on reachable states.
    pub range_condition: bool,
}

impl GalleryEntry {
    pub fn file(&self) -> ModelFile {
        ModelFile::new(self.model.clone()).named(self.name, self.description)
    }

    pub fn as_halting(&self) -> Option<&HaltingRgnn> {
        self.model.as_halting()
    }

    pub fn base(&self) -> &Rgnn {
        self.model.base()
    }
}

fn q(s: &str) -> Rational {
    s.parse().expect("gallery constant")
}

/// Dense affine map from string entries.
fn aff(rows: &[&[&str]], bias: &[&str]) -> Affine {
    let input_dim = rows.first().map_or(0, |r| r.len());
    let matrix = rows
        .iter()
        .map(|r| RVector::new(r.iter().map(|s| q(s)).collect()))
        .collect();
    let bias = RVector::new(bias.iter().map(|s| q(s)).collect());
    Affine::new(input_dim, matrix, bias).expect("gallery affine map")
}

fn net(layers: Vec<Affine>) -> SimpleFunction {
    SimpleFunction::new(layers).expect("gallery network")
}

fn classifier(layers: Vec<Affine>) -> Classifier {
    Classifier::simple(net(layers)).expect("gallery classifier")
}

fn rgnn(input_dim: usize, init: Affine, comb: SimpleFunction, readout: Vec<Affine>) -> Rgnn {
    Rgnn::new(
        input_dim,
        Init::Simple(SimpleFunction::affine(init)),
        AcLayer::simple(comb).expect("gallery layer"),
        classifier(readout),
    )
    .expect("gallery model")
}

fn with_max(r: &Rgnn) -> Rgnn {
    let max = Registry::builtin().aggregation("max").expect("builtin max");
    let layer = AcLayer::new(
        r.dim(),
        r.dim(),
        Aggregation::External(max),
        r.layer().combination().clone(),
    )
    .expect("gallery layer");
    Rgnn::new(r.input_dim(), r.init().clone(), layer, r.readout().clone()).expect("gallery model")
}

fn halting(base: Rgnn, halt: Vec<Affine>) -> Model {
    Model::Halting(HaltingRgnn::new(base, classifier(halt)).expect("gallery model"))
}

/// Label dimension 1; state `y = x`, never changes, halts at once, `Out(y) ⇔ y ≥ 0`.
fn const_label() -> Model {
    let base = rgnn(
        1,
        aff(&[&["1"]], &["0"]),
        // CMB(x, a) = x
        net(vec![aff(&[&["1", "0"]], &["0"])]),
        vec![aff(&[&["1"]], &["0"])],
    );
    // Hlt: f ≡ 1
    halting(base, vec![aff(&[&["0"]], &["1"])])
}

/// State `(c, r)` with `In(x) = (0, red)`, `c' = min(c + 1, K) = c + 1 − ReLU(c − K + 1)`,
/// `r' = r`. Halts when `c = K`: `f = 2·ReLU(c − K + 1) − 2·ReLU(c − K) − 1`.
/// `Out(c, r) ⇔ r − 1/2 ≥ 0`.
fn counter(k: i64) -> Model {
    let (k1, k0) = ((1 - k).to_string(), (-k).to_string());
    let base = rgnn(
        2,
        aff(&[&["0", "0"], &["1", "0"]], &["0", "0"]),
        net(vec![
            // ReLU(c − K + 1), ReLU(c), ReLU(r)
            aff(
                &[&["1", "0", "0", "0"], &["1", "0", "0", "0"], &["0", "1", "0", "0"]],
                &[&k1, "0", "0"],
            ),
            aff(&[&["-1", "1", "0"], &["0", "0", "1"]], &["1", "0"]),
        ]),
        vec![aff(&[&["0", "1"]], &["-1/2"])],
    );
    halting(
        base,
        vec![
            aff(&[&["1", "0"], &["1", "0"]], &[&k1, &k0]),
            aff(&[&["2", "-2"]], &["-1"]),
        ],
    )
}

/// State `(r, p)` with `In(x) = (red, red − 1)`, `r' = min(r + Σ r_u, 1)`, `p' = r`.
/// Halts when the bit did not change: `f = 1 − 2·|r − p|`. `Out ⇔ r − 1/2 ≥ 0`.
fn reach_red_base() -> Rgnn {
    rgnn(
        2,
        aff(&[&["1", "0"], &["1", "0"]], &["0", "-1"]),
        net(vec![
            // ReLU(r + a_r), ReLU(r + a_r − 1), ReLU(r)
            aff(
                &[&["1", "0", "1", "0"], &["1", "0", "1", "0"], &["1", "0", "0", "0"]],
                &["0", "-1", "0"],
            ),
            aff(&[&["1", "-1", "0"], &["0", "0", "1"]], &["0", "0"]),
        ]),
        vec![aff(&[&["1", "0"]], &["-1/2"])],
    )
}

fn changed_halt() -> Vec<Affine> {
    vec![
        aff(&[&["1", "-1"], &["-1", "1"]], &["0", "0"]),
        aff(&[&["-2", "-2"]], &["1"]),
    ]
}

/// State `(r, g, z)` with `In(x) = (red, green, 0)`, `(r, g, z)' = (r, g, Σ g_u − Σ r_u)`.
/// `Out ⇔ −|z| ≥ 0`.
fn green_eq_red() -> Model {
    Model::Rgnn(rgnn(
        2,
        aff(&[&["1", "0"], &["0", "1"], &["0", "0"]], &["0", "0", "0"]),
        net(vec![aff(
            &[
                &["1", "0", "0", "0", "0", "0"],
                &["0", "1", "0", "0", "0", "0"],
                &["0", "0", "0", "-1", "1", "0"],
            ],
            &["0", "0", "0"],
        )]),
        vec![
            aff(&[&["0", "0", "1"], &["0", "0", "-1"]], &["0", "0"]),
            aff(&[&["-1", "-1"]], &["0"]),
        ],
    ))
}

/// `In(x) = 0`, `x' = min(x + 1, 3) = ReLU(x) + 1 − ReLU(x − 2)`. `Out ⇔ x − 3 ≥ 0`.
fn sat_counter() -> Model {
    Model::Rgnn(rgnn(
        2,
        aff(&[&["0", "0"]], &["0"]),
        net(vec![
            aff(&[&["1", "0"], &["1", "0"]], &["0", "-2"]),
            aff(&[&["1", "-1"]], &["1"]),
        ]),
        vec![aff(&[&["1"]], &["-3"])],
    ))
}

/// `In(x) = red`, `r' = min(r + Σ r_u, 1)`. `Out ⇔ r − 1/2 ≥ 0`.
fn reach_conv_base() -> Rgnn {
    rgnn(
        2,
        aff(&[&["1", "0"]], &["0"]),
        net(vec![
            aff(&[&["1", "1"], &["1", "1"]], &["0", "-1"]),
            aff(&[&["1", "-1"]], &["0"]),
        ]),
        vec![aff(&[&["1"]], &["-1/2"])],
    )
}

/// `In(x) = 0`, `x' = x + 1`: never converges.
fn strict_counter() -> Model {
    Model::Rgnn(rgnn(
        2,
        aff(&[&["0", "0"]], &["0"]),
        net(vec![aff(&[&["1", "0"]], &["1"])]),
        vec![aff(&[&["1"]], &["0"])],
    ))
}

/// `In(x) = 1`, `x' = −x`, with readout `f(y) = 1` or `f(y) = y`.
fn oscillator(constant_readout: bool) -> Model {
    let readout = if constant_readout {
        aff(&[&["0"]], &["1"])
    } else {
        aff(&[&["1"]], &["0"])
    };
    Model::Rgnn(rgnn(
        2,
        aff(&[&["0", "0"]], &["1"]),
        net(vec![aff(&[&["-1", "0"]], &["0"])]),
        vec![readout],
    ))
}

fn red(g: &Graph, v: usize) -> bool {
    g.label(v).get(0) == &Rational::one()
}

fn green(g: &Graph, v: usize) -> bool {
    g.label(v).get(1) == &Rational::one()
}

/// Distance from the nearest red vertex, if any.
pub fn red_distances(g: &Graph) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.len()];
    let mut queue = VecDeque::new();
    for v in 0..g.len() {
        if red(g, v) {
            dist[v] = Some(0);
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        let dv = dist[v].expect("queued vertices have a distance");
        for &u in g.neighbours(v) {
            if dist[u].is_none() {
                dist[u] = Some(dv + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

fn oracle_reach(g: &Graph) -> Option<Vec<bool>> {
    Some(red_distances(g).iter().map(Option::is_some).collect())
}

fn oracle_sign(g: &Graph) -> Option<Vec<bool>> {
    Some(g.labels().iter().map(|x| x.get(0).is_nonnegative()).collect())
}

fn oracle_red(g: &Graph) -> Option<Vec<bool>> {
    Some((0..g.len()).map(|v| red(g, v)).collect())
}

fn oracle_count(g: &Graph) -> Option<Vec<bool>> {
    Some(
        (0..g.len())
            .map(|v| {
                let n = g.neighbours(v);
                n.iter().filter(|&&u| green(g, u)).count() == n.iter().filter(|&&u| red(g, u)).count()
            })
            .collect(),
    )
}

fn oracle_true(g: &Graph) -> Option<Vec<bool>> {
    Some(vec![true; g.len()])
}

fn oracle_none(_: &Graph) -> Option<Vec<bool>> {
    None
}

pub const COUNTER_K: i64 = 2;

pub fn entries() -> Vec<GalleryEntry> {
    let rg = red_green_palette();
    let halting_entry = |name, description, model, oracle, palette, simple| GalleryEntry {
        name,
        description,
        semantics: Semantics::Halting,
        model,
        oracle,
        palette,
        simple,
        bound: Some(Rational::one()),
        invariant: true,
        range_condition: true,
    };
    let converging_entry = |name, description, model, oracle, simple| GalleryEntry {
        name,
        description,
        semantics: Semantics::Converging,
        model,
        oracle,
        palette: red_green_palette(),
        simple,
        bound: None,
        invariant: true,
        range_condition: false,
    };
    let window = Semantics::OutputConverging { window: 4 };
    vec![
        halting_entry(
            "const-label",
            "keeps its scalar label, halts immediately, outputs whether the label is non-negative",
            const_label(),
            oracle_sign,
            vec![q("-1"), q("-2/3"), q("0"), q("1/2"), q("1")]
                .into_iter()
                .map(|x| RVector::new(vec![x]))
                .collect(),
            true,
        ),
        halting_entry(
            "counter-k",
            "counts to 2 and halts, outputs whether the vertex is red",
            counter(COUNTER_K),
            oracle_red,
            rg.clone(),
            true,
        ),
        halting_entry(
            "reach-red",
            "marks vertices connected to a red vertex, halts once no mark changed",
            halting(reach_red_base(), changed_halt()),
            oracle_reach,
            rg.clone(),
            true,
        ),
        halting_entry(
            "reach-red-max",
            "reach-red with max aggregation",
            halting(with_max(&reach_red_base()), changed_halt()),
            oracle_reach,
            rg,
            false,
        ),
        converging_entry(
            "green-eq-red",
            "outputs whether a vertex has equally many green as red neighbours",
            green_eq_red(),
            oracle_count,
            true,
        ),
        converging_entry(
            "sat-counter",
            "counts to 3 and stays there, outputs true",
            sat_counter(),
            oracle_true,
            true,
        ),
        converging_entry(
            "reach-conv",
            "marks vertices connected to a red vertex until nothing changes",
            Model::Rgnn(reach_conv_base()),
            oracle_reach,
            true,
        ),
        converging_entry(
            "reach-conv-max",
            "reach-conv with max aggregation",
            Model::Rgnn(with_max(&reach_conv_base())),
            oracle_reach,
            false,
        ),
        converging_entry(
            "strict-counter",
            "counts up forever",
            strict_counter(),
            oracle_none,
            true,
        ),
        GalleryEntry {
            semantics: window,
            ..converging_entry(
                "osc-const-out",
                "flips the sign of its state forever, readout constantly true",
                oscillator(true),
                oracle_true,
                true,
            )
        },
        GalleryEntry {
            semantics: window,
            ..converging_entry(
                "osc-flip-out",
                "flips the sign of its state forever, readout follows the sign",
                oscillator(false),
                oracle_none,
                true,
            )
        },
    ]
}

pub fn names() -> Vec<&'static str> {
    entries().iter().map(|e| e.name).collect()
}

pub fn get(name: &str) -> Result<GalleryEntry> {
    entries()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownGalleryEntry(name.to_string()))
}

/// Entries whose model converges on every graph.
pub fn converging() -> Vec<GalleryEntry> {
    entries()
        .into_iter()
        .filter(|e| e.semantics == Semantics::Converging && e.name != "strict-counter")
        .collect()
}

pub fn halting_entries() -> Vec<GalleryEntry> {
    entries()
        .into_iter()
        .filter(|e| e.semantics == Semantics::Halting)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{path, red_end_path};
    use crate::model::validate_simple;
    use crate::semantics::{run_converging, run_halting, run_output_converging};

    #[test]
    fn names_are_unique_and_lookup_works() {
        let mut n = names();
        n.sort();
        n.dedup();
        assert_eq!(n.len(), entries().len());
        assert_eq!(get("reach-red").unwrap().name, "reach-red");
        assert!(get("nope").is_err());
    }

    #[test]
    fn simple_flags_match_validator() {
        for e in entries() {
            assert_eq!(validate_simple(&e.model).is_ok(), e.simple, "{}", e.name);
            assert_eq!(e.model.is_simple(), e.simple, "{}", e.name);
        }
    }

    #[test]
    fn counter_halts_at_two() {
        let e = get("counter-k").unwrap();
        let h = e.as_halting().unwrap();
        let g = path(vec![RVector::from_ints(&[1, 0]), RVector::from_ints(&[0, 0])]);
        let run = run_halting(h, &g, 10).unwrap();
        assert_eq!(run.k, 2);
        assert_eq!(run.output, vec![true, false]);
    }

    #[test]
    fn reach_red_index_is_eccentricity_plus_one() {
        let e = get("reach-red").unwrap();
        let run = run_halting(e.as_halting().unwrap(), &red_end_path(5), 20).unwrap();
        assert_eq!(run.k, 5);
        assert_eq!(run.output, vec![true; 5]);
    }

    #[test]
    fn sat_counter_converges_at_three() {
        let e = get("sat-counter").unwrap();
        let run = run_converging(e.base(), &red_end_path(3), 10).unwrap();
        assert_eq!(run.k, 3);
        assert!(run.trace.last().iter().all(|x| x == &RVector::from_ints(&[3])));
    }

    #[test]
    fn green_eq_red_counts_neighbours() {
        let e = get("green-eq-red").unwrap();
        let g = path(vec![
            RVector::from_ints(&[1, 0]),
            RVector::from_ints(&[0, 0]),
            RVector::from_ints(&[0, 1]),
        ]);
        let run = run_converging(e.base(), &g, 10).unwrap();
        assert_eq!(run.output, vec![true, true, true]);
        assert_eq!(Some(run.output), oracle_count(&g));
        let g = path(vec![RVector::from_ints(&[1, 0]), RVector::from_ints(&[0, 0])]);
        let run = run_converging(e.base(), &g, 10).unwrap();
        assert_eq!(run.output, vec![true, false]);
        assert_eq!(run.k, 1);
    }

    #[test]
    fn oscillators() {
        let g = red_end_path(2);
        let c = get("osc-const-out").unwrap();
        assert_eq!(run_output_converging(c.base(), &g, 20, 4).unwrap().k, 0);
        let f = get("osc-flip-out").unwrap();
        assert!(run_output_converging(f.base(), &g, 20, 4).is_err());
    }
}
