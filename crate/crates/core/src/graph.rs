//! Finite undirected graphs with rational-vector vertex labels.
//!
//! The same type serves as input graph and as feature graph `H_i`: a label
//! transformer keeps the topology and swaps the labels, so the topology is
//! shared behind an `Arc`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::RVector;

/// A finite multiset of vectors: vector -> multiplicity (always >= 1).
pub type Multiset = BTreeMap<RVector, usize>;

#[derive(Debug, PartialEq, Eq)]
struct Topology {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    /// Undirected edges `(u, v)` with `u <= v`.
    edges: BTreeSet<(usize, usize)>,
    /// `adjacency[v]` lists `N(v)` in ascending order; a self-loop puts `v` in `N(v)` once.
    adjacency: Vec<Vec<usize>>,
}

/// A labelled undirected graph `G = (V, E, λ)`.
#[derive(Clone, Debug)]
pub struct Graph {
    topology: Arc<Topology>,
    labels: Vec<RVector>,
    dim: usize,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.topology, &other.topology) || self.topology == other.topology)
            && self.labels == other.labels
    }
}

impl Eq for Graph {}

impl Graph {
    /// Builds a graph; `edges` are symmetrised and deduplicated.
    pub fn new(
        vertices: Vec<(String, RVector)>,
        edges: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(vertices.len());
        let mut ids = Vec::with_capacity(vertices.len());
        let mut labels = Vec::with_capacity(vertices.len());
        let dim = vertices.first().map(|(_, l)| l.dim()).unwrap_or(0);
        for (id, label) in vertices {
            if label.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: label.dim(),
                });
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::DuplicateVertex(id));
            }
            ids.push(id);
            labels.push(label);
        }
        let mut edge_set = BTreeSet::new();
        for (a, b) in edges {
            let u = *index.get(&a).ok_or_else(|| Error::UnknownVertex(a.clone()))?;
            let v = *index.get(&b).ok_or_else(|| Error::UnknownVertex(b.clone()))?;
            edge_set.insert((u.min(v), u.max(v)));
        }
        Ok(Self::from_parts(ids, index, edge_set, labels, dim))
    }

    /// Builds a graph from vertex indices `0..labels.len()` named `v0, v1, ...`.
    pub fn from_indexed(labels: Vec<RVector>, edges: &[(usize, usize)]) -> Result<Self> {
        let vertices = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| (format!("v{i}"), l))
            .collect();
        Graph::new(
            vertices,
            edges.iter().map(|&(u, v)| (format!("v{u}"), format!("v{v}"))),
        )
    }

    fn from_parts(
        ids: Vec<String>,
        index: HashMap<String, usize>,
        edges: BTreeSet<(usize, usize)>,
        labels: Vec<RVector>,
        dim: usize,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); ids.len()];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            if u != v {
                adjacency[v].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Graph {
            topology: Arc::new(Topology {
                ids,
                index,
                edges,
                adjacency,
            }),
            labels,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Label dimension shared by all vertices.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.topology.ids
    }

    pub fn id(&self, v: usize) -> &str {
        &self.topology.ids[v]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.topology
            .index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownVertex(id.to_string()))
    }

    pub fn label(&self, v: usize) -> &RVector {
        &self.labels[v]
    }

    pub fn labels(&self) -> &[RVector] {
        &self.labels
    }

    pub fn neighbours(&self, v: usize) -> &[usize] {
        &self.topology.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.topology.adjacency[v].len()
    }

    /// Undirected edges as index pairs `(u, v)` with `u <= v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.topology.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.topology.edges.len()
    }

    pub fn same_topology(&self, other: &Graph) -> bool {
        Arc::ptr_eq(&self.topology, &other.topology) || self.topology == other.topology
    }

    /// `{{G(u) | u ∈ N(v)}}` for a vertex index.
    pub fn neighbourhood_at(&self, v: usize) -> Multiset {
        let mut m = Multiset::new();
        for &u in self.neighbours(v) {
            *m.entry(self.labels[u].clone()).or_insert(0) += 1;
        }
        m
    }

    /// `{{G(u) | u ∈ N(v)}}` for a vertex id.
    pub fn neighbourhood(&self, id: &str) -> Result<Multiset> {
        Ok(self.neighbourhood_at(self.index_of(id)?))
    }

    /// Same vertices and edges, new labels.
    pub fn with_labels(&self, labels: Vec<RVector>) -> Result<Graph> {
        if labels.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                found: labels.len(),
            });
        }
        let dim = labels.first().map(RVector::dim).unwrap_or(0);
        if let Some(bad) = labels.iter().find(|l| l.dim() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(Graph {
            topology: Arc::clone(&self.topology),
            labels,
            dim,
        })
    }

    /// The lifting `h↑`: applies `h` to every label.
    pub fn lift<F>(&self, h: F) -> Result<Graph>
    where
        F: Fn(&RVector) -> Result<RVector>,
    {
        let labels = self.labels.iter().map(h).collect::<Result<Vec<_>>>()?;
        self.with_labels(labels)
    }

    /// Connected components as sorted vertex index lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &u in self.neighbours(v) {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                        queue.push_back(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Component index for every vertex, matching [`Graph::components`].
    pub fn component_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for (c, comp) in self.components().iter().enumerate() {
            for &v in comp {
                out[v] = c;
            }
        }
        out
    }

    /// `self ⊎ other`, with `other`'s ids suffixed by `suffix`.
    pub fn disjoint_union(&self, other: &Graph, suffix: &str) -> Result<Graph> {
        let mut vertices: Vec<(String, RVector)> = self
            .ids()
            .iter()
            .cloned()
            .zip(self.labels.iter().cloned())
            .collect();
        vertices.extend(
            other
                .ids()
                .iter()
                .map(|id| format!("{id}{suffix}"))
                .zip(other.labels.iter().cloned()),
        );
        let mut edges: Vec<(String, String)> = self
            .edges()
            .map(|(u, v)| (self.id(u).to_string(), self.id(v).to_string()))
            .collect();
        edges.extend(
            other
                .edges()
                .map(|(u, v)| (format!("{}{suffix}", other.id(u)), format!("{}{suffix}", other.id(v)))),
        );
        Graph::new(vertices, edges)
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            vertices: self
                .ids()
                .iter()
                .zip(&self.labels)
                .map(|(id, label)| VertexDoc {
                    id: id.clone(),
                    label: label.clone(),
                })
                .collect(),
            edges: self
                .edges()
                .map(|(u, v)| [self.id(u).to_string(), self.id(v).to_string()])
                .collect(),
        }
    }

    pub fn from_doc(doc: GraphDoc) -> Result<Graph> {
        Graph::new(
            doc.vertices.into_iter().map(|v| (v.id, v.label)).collect(),
            doc.edges.into_iter().map(|[a, b]| (a, b)),
        )
    }

    /// Canonical JSON: vertices in order, edges sorted by vertex position.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("graph serialisation")
    }

    pub fn from_json(s: &str) -> Result<Graph> {
        Graph::from_doc(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Graph> {
        Graph::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexDoc {
    pub id: String,
    pub label: RVector,
}

/// On-disk graph format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub vertices: Vec<VertexDoc>,
    #[serde(default)]
    pub edges: Vec<[String; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::Rational;

    fn scalar(v: i64) -> RVector {
        RVector::from_ints(&[v])
    }

    fn path3() -> Graph {
        Graph::from_indexed(vec![scalar(1), scalar(2), scalar(3)], &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn neighbourhood_of_path_middle() {
        let g = path3();
        let m = g.neighbourhood("v1").unwrap();
        let expected: Multiset = [(scalar(1), 1), (scalar(3), 1)].into_iter().collect();
        assert_eq!(m, expected);
    }

    #[test]
    fn isolated_vertex_has_empty_neighbourhood() {
        let g = Graph::from_indexed(vec![scalar(4)], &[]).unwrap();
        assert!(g.neighbourhood("v0").unwrap().is_empty());
    }

    #[test]
    fn triangle_uniform_labels_multiplicity_two() {
        let g = Graph::from_indexed(vec![scalar(5); 3], &[(0, 1), (1, 2), (2, 0)]).unwrap();
        for id in ["v0", "v1", "v2"] {
            let m = g.neighbourhood(id).unwrap();
            assert_eq!(m.len(), 1);
            assert_eq!(m[&scalar(5)], 2);
        }
    }

    #[test]
    fn unknown_vertex_is_an_error() {
        assert_eq!(
            path3().neighbourhood("nope"),
            Err(Error::UnknownVertex("nope".into()))
        );
    }

    #[test]
    fn self_loop_contributes_own_label_once() {
        let g = Graph::from_indexed(vec![scalar(7), scalar(1)], &[(0, 0), (0, 1)]).unwrap();
        let m = g.neighbourhood("v0").unwrap();
        assert_eq!(m[&scalar(7)], 1);
        assert_eq!(m[&scalar(1)], 1);
        assert_eq!(g.degree(0), 2);
    }

    #[test]
    fn lift_identity_and_pointwise() {
        let g = path3();
        assert_eq!(g.lift(|x| Ok(x.clone())).unwrap(), g);

        let single = Graph::from_indexed(vec![scalar(0)], &[]).unwrap();
        let inc = single
            .lift(|x| x.checked_add(&RVector::ones(1)))
            .unwrap();
        assert_eq!(inc.label(0), &scalar(1));

        let tri = Graph::from_indexed(vec![scalar(1), scalar(2), scalar(3)], &[(0, 1), (1, 2), (2, 0)])
            .unwrap();
        let neg = tri.lift(|x| Ok(x.scale(&Rational::from_int(-1)))).unwrap();
        assert_eq!(neg.labels(), &[scalar(-1), scalar(-2), scalar(-3)]);
        assert!(neg.same_topology(&tri));
    }

    #[test]
    fn lift_rejects_ragged_dimensions() {
        let g = path3();
        let res = g.lift(|x| {
            if x == &scalar(2) {
                Ok(RVector::zeros(2))
            } else {
                Ok(x.clone())
            }
        });
        assert!(matches!(res, Err(Error::Dimension { .. })));
    }

    #[test]
    fn loader_symmetrises_and_rejects_duplicates() {
        let g = Graph::from_json(
            r#"{"vertices":[{"id":"a","label":["1/2","3"]},{"id":"b","label":["0","0"]}],
                "edges":[["b","a"],["a","b"]]}"#,
        )
        .unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.neighbours(0), &[1]);
        assert_eq!(g.neighbours(1), &[0]);

        let dup = Graph::from_json(
            r#"{"vertices":[{"id":"a","label":["1"]},{"id":"a","label":["2"]}],"edges":[]}"#,
        );
        assert_eq!(dup, Err(Error::DuplicateVertex("a".into())));

        let dangling =
            Graph::from_json(r#"{"vertices":[{"id":"a","label":["1"]}],"edges":[["a","z"]]}"#);
        assert_eq!(dangling, Err(Error::UnknownVertex("z".into())));
    }

    #[test]
    fn save_load_is_canonical() {
        let text = r#"{"vertices":[{"id":"x","label":["2/4"]},{"id":"y","label":[3]}],"edges":[["y","x"]]}"#;
        let once = Graph::from_json(text).unwrap().to_json();
        let twice = Graph::from_json(&once).unwrap().to_json();
        assert_eq!(once, twice);
        assert_eq!(
            once,
            r#"{"vertices":[{"id":"x","label":["1/2"]},{"id":"y","label":["3"]}],"edges":[["x","y"]]}"#
        );
    }

    #[test]
    fn components_and_disjoint_union() {
        let g = Graph::from_indexed(vec![scalar(0); 5], &[(0, 1), (3, 4)]).unwrap();
        assert_eq!(g.components(), vec![vec![0, 1], vec![2], vec![3, 4]]);
        let u = path3().disjoint_union(&path3(), "'").unwrap();
        assert_eq!(u.len(), 6);
        assert_eq!(u.components().len(), 2);
        assert_eq!(u.id(3), "v0'");
    }
}
