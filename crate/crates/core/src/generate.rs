//! Seeded random graphs and the fixed graph families used in tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rational::{RVector, Rational};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(red, green)` bit labels.
pub fn red_green_palette() -> Vec<RVector> {
    vec![
        RVector::from_ints(&[1, 0]),
        RVector::from_ints(&[0, 1]),
        RVector::from_ints(&[0, 0]),
    ]
}

fn probability(p: &Rational) -> Result<(u32, u32)> {
    let (num, den) = (p.numer(), p.denom());
    let num: u32 = num
        .try_into()
        .map_err(|_| Error::Parse(format!("edge probability {p} out of range")))?;
    let den: u32 = den
        .try_into()
        .map_err(|_| Error::Parse(format!("edge probability {p} out of range")))?;
    if num > den {
        return Err(Error::Parse(format!("edge probability {p} exceeds 1")));
    }
    Ok((num, den))
}

/// Erdős–Rényi graph on `n` vertices: each pair is an edge with probability
/// `p`, each vertex gets a self-loop with probability `loop_p`, labels are
/// drawn uniformly from `palette`.
pub fn random_graph<R: Rng>(
    rng: &mut R,
    n: usize,
    p: &Rational,
    loop_p: &Rational,
    palette: &[RVector],
) -> Result<Graph> {
    if palette.is_empty() {
        return Err(Error::Parse("empty label palette".into()));
    }
    let (pn, pd) = probability(p)?;
    let (ln, ld) = probability(loop_p)?;
    let labels = (0..n)
        .map(|_| palette.choose(rng).expect("non-empty palette").clone())
        .collect();
    let mut edges = Vec::new();
    for u in 0..n {
        if ln > 0 && rng.gen_ratio(ln, ld) {
            edges.push((u, u));
        }
        for v in u + 1..n {
            if pn > 0 && rng.gen_ratio(pn, pd) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_indexed(labels, &edges)
}

/// A mixed test population: sizes `1..=max_n`, sparse and dense, with and
/// without self-loops. Deterministic in `seed`.
pub fn test_graphs(seed: u64, count: usize, max_n: usize, palette: &[RVector]) -> Vec<Graph> {
    let mut r = rng(seed);
    let densities = [
        Rational::new(1, 6),
        Rational::new(1, 4),
        Rational::new(1, 3),
        Rational::new(1, 2),
        Rational::new(3, 4),
    ];
    (0..count)
        .map(|i| {
            let n = r.gen_range(1..=max_n);
            let p = densities[i % densities.len()].clone();
            let loops = if i % 3 == 0 {
                Rational::new(1, 4)
            } else {
                Rational::zero()
            };
            random_graph(&mut r, n, &p, &loops, palette).expect("valid generator parameters")
        })
        .collect()
}

pub fn path(labels: Vec<RVector>) -> Graph {
    let edges: Vec<_> = (1..labels.len()).map(|i| (i - 1, i)).collect();
    Graph::from_indexed(labels, &edges).expect("path")
}

pub fn cycle(n: usize, label: RVector) -> Graph {
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Graph::from_indexed(vec![label; n], &edges).expect("cycle")
}

/// A path on `n` vertices whose first vertex is red and the rest uncoloured.
pub fn red_end_path(n: usize) -> Graph {
    let mut labels = vec![RVector::from_ints(&[0, 0]); n];
    labels[0] = RVector::from_ints(&[1, 0]);
    path(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_graph() {
        let pal = red_green_palette();
        let a = random_graph(&mut rng(7), 6, &Rational::new(1, 2), &Rational::zero(), &pal).unwrap();
        let b = random_graph(&mut rng(7), 6, &Rational::new(1, 2), &Rational::zero(), &pal).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn probability_bounds() {
        let pal = red_green_palette();
        let full = random_graph(&mut rng(1), 5, &Rational::one(), &Rational::zero(), &pal).unwrap();
        assert_eq!(full.edge_count(), 10);
        let empty = random_graph(&mut rng(1), 5, &Rational::zero(), &Rational::zero(), &pal).unwrap();
        assert_eq!(empty.edge_count(), 0);
        assert!(random_graph(&mut rng(1), 5, &Rational::new(3, 2), &Rational::zero(), &pal).is_err());
    }

    #[test]
    fn population_has_variety() {
        let gs = test_graphs(3, 60, 10, &red_green_palette());
        assert!(gs.iter().any(|g| g.components().len() > 1));
        assert!(gs.iter().any(|g| g.edges().any(|(u, v)| u == v)));
        assert!(gs.iter().all(|g| (1..=10).contains(&g.len())));
    }
}
