//! Hierarchical navigable small world graph over a flat point buffer.
//!
//! Insertion follows the usual layered construction: a node draws its top
//! layer from a geometric distribution with normalization `1/ln(M)`, descends
//! greedily through the layers above it, and on each of its own layers links
//! to neighbours chosen by the diversity heuristic. Layer 0 keeps up to `2M`
//! links, upper layers `M`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;

use super::{squared_euclidean, HnswParams};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    id: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct HnswGraph {
    /// `links[node][layer]`
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    top_layer: usize,
    m_links: usize,
}

struct Points<'a> {
    data: &'a [f64],
    dim: usize,
}

impl Points<'_> {
    #[inline]
    fn get(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn dist(&self, q: &[f64], i: u32) -> f64 {
        squared_euclidean(q, self.get(i))
    }
}

impl HnswGraph {
    pub(super) fn build(data: &[f64], dim: usize, params: &HnswParams) -> HnswGraph {
        let n = data.len() / dim.max(1);
        let points = Points { data, dim };
        let mut rng = rng::seeded(params.seed);
        let level_norm = 1.0 / (params.m_links as f64).ln();
        let mut graph = HnswGraph {
            links: Vec::with_capacity(n),
            entry: 0,
            top_layer: 0,
            m_links: params.m_links,
        };
        for node in 0..n as u32 {
            let u: f64 = 1.0 - rng.random::<f64>();
            let level = (-u.ln() * level_norm).floor() as usize;
            graph.insert(&points, node, level, params.ef_construction);
        }
        graph
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m_links
        } else {
            self.m_links
        }
    }

    fn insert(&mut self, points: &Points<'_>, node: u32, level: usize, ef_construction: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        if node == 0 {
            self.entry = 0;
            self.top_layer = level;
            return;
        }
        let q = points.get(node);
        let mut entry = Candidate {
            dist: points.dist(q, self.entry),
            id: self.entry,
        };
        for layer in (level + 1..=self.top_layer).rev() {
            entry = self.greedy(points, q, entry, layer);
        }
        let mut entries = vec![entry];
        for layer in (0..=level.min(self.top_layer)).rev() {
            let found = self.search_layer(points, q, &entries, ef_construction, layer);
            let chosen = select_diverse(points, &found, self.m_links);
            self.links[node as usize][layer] = chosen.iter().map(|c| c.id).collect();
            for c in &chosen {
                self.connect(points, c.id, node, layer);
            }
            entries = found;
        }
        if level > self.top_layer {
            self.top_layer = level;
            self.entry = node;
        }
    }

    /// Adds `new` to `node`'s links on `layer`, re-selecting if over capacity.
    fn connect(&mut self, points: &Points<'_>, node: u32, new: u32, layer: usize) {
        let cap = self.max_links(layer);
        let list = &mut self.links[node as usize][layer];
        list.push(new);
        if list.len() <= cap {
            return;
        }
        let base = points.get(node);
        let mut cands: Vec<Candidate> = list
            .iter()
            .map(|&id| Candidate {
                dist: points.dist(base, id),
                id,
            })
            .collect();
        cands.sort();
        let kept = select_diverse(points, &cands, cap);
        self.links[node as usize][layer] = kept.iter().map(|c| c.id).collect();
    }

    fn greedy(&self, points: &Points<'_>, q: &[f64], mut best: Candidate, layer: usize) -> Candidate {
        loop {
            let mut improved = false;
            for &nb in &self.links[best.id as usize][layer] {
                let c = Candidate {
                    dist: points.dist(q, nb),
                    id: nb,
                };
                if c < best {
                    best = c;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` candidates, closest first.
    fn search_layer(
        &self,
        points: &Points<'_>,
        q: &[f64],
        entries: &[Candidate],
        ef: usize,
        layer: usize,
    ) -> Vec<Candidate> {
        let mut visited = vec![false; self.links.len()];
        let mut frontier: BinaryHeap<Reverse<Candidate>> = BinaryHeap::new();
        let mut best: BinaryHeap<Candidate> = BinaryHeap::new();
        for &e in entries {
            if !visited[e.id as usize] {
                visited[e.id as usize] = true;
                frontier.push(Reverse(e));
                best.push(e);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(current)) = frontier.pop() {
            let worst = *best.peek().expect("non-empty");
            if current > worst && best.len() >= ef {
                break;
            }
            for &nb in &self.links[current.id as usize][layer] {
                if visited[nb as usize] {
                    continue;
                }
                visited[nb as usize] = true;
                let c = Candidate {
                    dist: points.dist(q, nb),
                    id: nb,
                };
                if best.len() < ef || c < *best.peek().expect("non-empty") {
                    frontier.push(Reverse(c));
                    best.push(c);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Returns `(squared distance, position)` pairs for up to `ef` points.
    pub(super) fn search(&self, data: &[f64], dim: usize, q: &[f64], ef: usize) -> Vec<(f64, usize)> {
        let points = Points { data, dim };
        let mut entry = Candidate {
            dist: points.dist(q, self.entry),
            id: self.entry,
        };
        for layer in (1..=self.top_layer).rev() {
            entry = self.greedy(&points, q, entry, layer);
        }
        self.search_layer(&points, q, &[entry], ef, 0)
            .into_iter()
            .map(|c| (c.dist, c.id as usize))
            .collect()
    }
}

/// Neighbour-selection heuristic: walk candidates closest first and keep one
/// only if it is closer to the base than to every already-kept neighbour;
/// then top up with the closest discarded ones.
fn select_diverse(points: &Points<'_>, sorted: &[Candidate], m: usize) -> Vec<Candidate> {
    let mut kept: Vec<Candidate> = Vec::with_capacity(m);
    let mut discarded = Vec::new();
    for &c in sorted {
        if kept.len() >= m {
            break;
        }
        let p = points.get(c.id);
        let diverse = kept.iter().all(|k| points.dist(p, k.id) > c.dist);
        if diverse {
            kept.push(c);
        } else {
            discarded.push(c);
        }
    }
    for c in discarded {
        if kept.len() >= m {
            break;
        }
        kept.push(c);
    }
    kept
}
