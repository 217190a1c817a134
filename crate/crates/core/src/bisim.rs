//! Graded bisimulations between labelled graphs.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::Rgnn;
use crate::rational::RVector;

/// `Z ⊆ V_G × V_H` as vertex index pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Relation {
    pairs: BTreeSet<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationDoc {
    pub pairs: Vec<[String; 2]>,
}

impl Relation {
    pub fn new() -> Self {
        Relation::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Relation {
            pairs: pairs.into_iter().collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Relation::from_pairs((0..n).map(|i| (i, i)))
    }

    pub fn insert(&mut self, u: usize, v: usize) {
        self.pairs.insert((u, v));
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.pairs.contains(&(u, v))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_doc(&self, g: &Graph, h: &Graph) -> RelationDoc {
        RelationDoc {
            pairs: self
                .pairs()
                .map(|(u, v)| [g.id(u).to_string(), h.id(v).to_string()])
                .collect(),
        }
    }

    pub fn from_doc(doc: &RelationDoc, g: &Graph, h: &Graph) -> Result<Self> {
        let mut z = Relation::new();
        for [u, v] in &doc.pairs {
            z.insert(g.index_of(u)?, h.index_of(v)?);
        }
        Ok(z)
    }

    pub fn to_json(&self, g: &Graph, h: &Graph) -> String {
        serde_json::to_string(&self.to_doc(g, h)).expect("relation serialisation")
    }

    pub fn from_json(s: &str, g: &Graph, h: &Graph) -> Result<Self> {
        Relation::from_doc(&serde_json::from_str(s)?, g, h)
    }
}

/// Whether a bipartite graph with `left` and `right` vertices and adjacency
/// `adj` has a perfect matching (augmenting paths).
pub fn has_perfect_matching(left: usize, right: usize, adj: &[Vec<usize>]) -> bool {
    if left != right {
        return false;
    }
    let mut match_r: Vec<Option<usize>> = vec![None; right];
    fn augment(l: usize, adj: &[Vec<usize>], seen: &mut [bool], match_r: &mut [Option<usize>]) -> bool {
        for &r in &adj[l] {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            if match_r[r].is_none_or(|l2| augment(l2, adj, seen, match_r)) {
                match_r[r] = Some(l);
                return true;
            }
        }
        false
    }
    (0..left).all(|l| {
        let mut seen = vec![false; right];
        augment(l, adj, &mut seen, &mut match_r)
    })
}

fn pair_ok(g: &Graph, h: &Graph, u: usize, v: usize, related: impl Fn(usize, usize) -> bool) -> bool {
    if g.label(u) != h.label(v) {
        return false;
    }
    let (nu, nv) = (g.neighbours(u), h.neighbours(v));
    let adj: Vec<Vec<usize>> = nu
        .iter()
        .map(|&x| (0..nv.len()).filter(|&j| related(x, nv[j])).collect())
        .collect();
    has_perfect_matching(nu.len(), nv.len(), &adj)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BisimCheck {
    pub ok: bool,
    /// First violating pair and the reason.
    pub violation: Option<(String, String, String)>,
}

/// Every related pair has equal labels and a neighbourhood bijection inside `Z`.
pub fn check_graded_bisimulation(g: &Graph, h: &Graph, z: &Relation) -> BisimCheck {
    for (u, v) in z.pairs() {
        let reason = if u >= g.len() || v >= h.len() {
            Some("vertex out of range")
        } else if g.label(u) != h.label(v) {
            Some("labels differ")
        } else if !pair_ok(g, h, u, v, |x, y| z.contains(x, y)) {
            Some("no bijection between neighbourhoods within the relation")
        } else {
            None
        };
        if let Some(r) = reason {
            let name = |gr: &Graph, i: usize| gr.ids().get(i).cloned().unwrap_or_else(|| format!("#{i}"));
            return BisimCheck {
                ok: false,
                violation: Some((name(g, u), name(h, v), r.to_string())),
            };
        }
    }
    BisimCheck {
        ok: true,
        violation: None,
    }
}

/// Domain covers `V_G` and range covers `V_H`.
pub fn is_totally_surjective(z: &Relation, g: &Graph, h: &Graph) -> bool {
    let dom: BTreeSet<usize> = z.pairs().map(|(u, _)| u).collect();
    let ran: BTreeSet<usize> = z.pairs().map(|(_, v)| v).collect();
    dom.len() == g.len() && ran.len() == h.len() && dom.iter().all(|&u| u < g.len())
}

/// Blocks of vertices of `G ⊎ H`: `(false, i)` for `G`, `(true, i)` for `H`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub blocks: Vec<Vec<(bool, usize)>>,
}

impl Partition {
    pub fn block_of(&self, side: bool, v: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.contains(&(side, v)))
            .expect("partition covers every vertex")
    }

    pub fn to_json(&self, g: &Graph, h: &Graph) -> String {
        let blocks: Vec<Vec<String>> = self
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|&(side, v)| if side { format!("H/{}", h.id(v)) } else { format!("G/{}", g.id(v)) })
                    .collect()
            })
            .collect();
        serde_json::json!({ "blocks": blocks }).to_string()
    }
}

/// Colour refinement on a single graph: colours start from labels and are
/// refined by the multiset of neighbour colours until stable.
pub fn refine(g: &Graph) -> Vec<usize> {
    let mut palette: BTreeMap<&RVector, usize> = BTreeMap::new();
    for x in g.labels() {
        let next = palette.len();
        palette.entry(x).or_insert(next);
    }
    let mut colour: Vec<usize> = g.labels().iter().map(|x| palette[x]).collect();
    let mut classes = palette.len();
    loop {
        let (next, count) = refine_round(g, &colour);
        if count == classes {
            return colour;
        }
        colour = next;
        classes = count;
    }
}

fn refine_round(g: &Graph, colour: &[usize]) -> (Vec<usize>, usize) {
    let mut sigs: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
    let sig: Vec<(usize, Vec<usize>)> = (0..g.len())
        .map(|v| {
            let mut m: Vec<usize> = g.neighbours(v).iter().map(|&u| colour[u]).collect();
            m.sort_unstable();
            (colour[v], m)
        })
        .collect();
    for s in &sig {
        let next = sigs.len();
        sigs.entry(s.clone()).or_insert(next);
    }
    let count = sigs.len();
    (sig.iter().map(|s| sigs[s]).collect(), count)
}

/// Whether one more refinement round leaves the partition unchanged.
pub fn is_stable(g: &Graph, colour: &[usize]) -> bool {
    let before: BTreeSet<usize> = colour.iter().copied().collect();
    refine_round(g, colour).1 == before.len()
}

/// The coarsest graded bisimulation on `G ⊎ H`, as a partition.
pub fn coarsest_graded_bisimulation(g: &Graph, h: &Graph) -> Result<Partition> {
    if g.dim() != h.dim() && !g.is_empty() && !h.is_empty() {
        return Err(Error::Dimension {
            expected: g.dim(),
            found: h.dim(),
        });
    }
    let union = g.disjoint_union(h, "'")?;
    let colour = refine(&union);
    let mut blocks: BTreeMap<usize, Vec<(bool, usize)>> = BTreeMap::new();
    for (i, &c) in colour.iter().enumerate() {
        let v = if i < g.len() { (false, i) } else { (true, i - g.len()) };
        blocks.entry(c).or_default().push(v);
    }
    Ok(Partition {
        blocks: blocks.into_values().collect(),
    })
}

/// The full relation induced by a partition between `G` and `H`.
pub fn partition_relation(p: &Partition) -> Relation {
    let mut z = Relation::new();
    for b in &p.blocks {
        for &(su, u) in b {
            for &(sv, v) in b {
                if !su && sv {
                    z.insert(u, v);
                }
            }
        }
    }
    z
}

/// Independent oracle: the greatest graded bisimulation on `g` with itself,
/// by repeatedly discarding pairs that lack a neighbourhood matching.
pub fn greatest_bisimulation(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.len();
    let mut rel: Vec<Vec<bool>> = (0..n)
        .map(|u| (0..n).map(|v| g.label(u) == g.label(v)).collect())
        .collect();
    loop {
        let mut changed = false;
        for u in 0..n {
            for v in 0..n {
                if rel[u][v] && !pair_ok(g, g, u, v, |x, y| rel[x][y]) {
                    rel[u][v] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return rel;
        }
    }
}

/// Checks that a label transformer maps a graded bisimulation to one.
pub fn check_transformer_invariance<F>(f: F, g: &Graph, h: &Graph, z: &Relation) -> Result<bool>
where
    F: Fn(&Graph) -> Result<Graph>,
{
    Ok(check_graded_bisimulation(&f(g)?, &f(h)?, z).ok)
}

/// The label transformer `G ↦ (H_t, Out(H_t))` of an RGNN after `t` steps.
pub fn run_transformer(model: &Rgnn, steps: usize) -> impl Fn(&Graph) -> Result<Graph> + '_ {
    move |g: &Graph| {
        let init = g
            .labels()
            .iter()
            .map(|x| model.initial_features(x))
            .collect::<Result<Vec<_>>>()?;
        let mut cur = g.with_labels(init)?;
        for _ in 0..steps {
            cur = model.layer().apply(&cur)?;
        }
        let labels = cur
            .labels()
            .iter()
            .map(|x| {
                let bit = u8::from(model.readout().classify(x)?);
                Ok(x.concat(&RVector::from_ints(&[i64::from(bit)])))
            })
            .collect::<Result<Vec<_>>>()?;
        g.with_labels(labels)
    }
}

/// `(G, G ⊎ G, Z)` with `Z` relating each vertex to itself and its copy.
pub fn duplication(g: &Graph) -> Result<(Graph, Graph, Relation)> {
    let h = g.disjoint_union(g, "'")?;
    let n = g.len();
    let z = Relation::from_pairs((0..n).flat_map(|i| [(i, i), (i, i + n)]));
    Ok((g.clone(), h, z))
}

/// `(C_{kn}, C_n, i ↦ i mod n)` with uniform labels.
pub fn cycle_cover(n: usize, k: usize, label: RVector) -> Result<(Graph, Graph, Relation)> {
    if n < 3 || k < 1 {
        return Err(Error::Parse("cycle cover needs n ≥ 3 and k ≥ 1".into()));
    }
    let big = crate::generate::cycle(k * n, label.clone());
    let small = crate::generate::cycle(n, label);
    let z = Relation::from_pairs((0..k * n).map(|i| (i, i % n)));
    Ok((big, small, z))
}

/// A random `k`-fold cover of `base`: vertex `(v, i)` has index `v·k + i`,
/// each non-loop edge is lifted along a random permutation of the copies and
/// each self-loop along the identity.
pub fn random_cover<R: Rng>(rng: &mut R, base: &Graph, k: usize) -> Result<(Graph, Graph, Relation)> {
    if k == 0 {
        return Err(Error::Parse("cover degree must be positive".into()));
    }
    let n = base.len();
    let labels: Vec<RVector> = (0..n * k).map(|x| base.label(x / k).clone()).collect();
    let mut edges = Vec::new();
    for (u, v) in base.edges() {
        let mut perm: Vec<usize> = (0..k).collect();
        if u != v {
            perm.shuffle(rng);
        }
        for (i, &p) in perm.iter().enumerate() {
            edges.push((u * k + i, v * k + p));
        }
    }
    let cover = Graph::from_indexed(labels, &edges)?;
    let z = Relation::from_pairs((0..n * k).map(|x| (x, x / k)));
    Ok((cover, base.clone(), z))
}

/// Depth-bounded tree unfolding of `g` from `root`, with the back-map to `g`.
///
/// Leaves at the depth bound lose their neighbours, so this is not a graded
/// bisimulation for any graph with a vertex of degree ≥ 1 within reach; kept to
/// demonstrate that the check rejects it.
pub fn truncated_unfolding(g: &Graph, root: usize, depth: usize) -> Result<(Graph, Graph, Relation)> {
    let mut labels = vec![g.label(root).clone()];
    let mut origin = vec![root];
    let mut edges = Vec::new();
    let mut frontier = vec![(0usize, None::<usize>)];
    for _ in 0..depth {
        let mut next = Vec::new();
        for (t, parent) in frontier {
            let v = origin[t];
            let mut skipped_parent = false;
            for &u in g.neighbours(v) {
                if Some(u) == parent.map(|p| origin[p]) && !skipped_parent {
                    skipped_parent = true;
                    continue;
                }
                let child = labels.len();
                labels.push(g.label(u).clone());
                origin.push(u);
                edges.push((t, child));
                next.push((child, Some(t)));
            }
        }
        frontier = next;
    }
    let tree = Graph::from_indexed(labels, &edges)?;
    let z = Relation::from_pairs(origin.iter().enumerate().map(|(t, &v)| (t, v)));
    Ok((tree, g.clone(), z))
}
