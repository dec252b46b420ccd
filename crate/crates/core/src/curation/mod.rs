//! Structural deduplication by maximum cliques.
//!
//! Snippets are vertices; two snippets are joined when their line sets are
//! far enough apart. A maximum clique of that graph is a largest set of
//! mutually distinct snippets. Large corpora are curated by repeatedly
//! shuffling, splitting into bounded subsets, and keeping the union of the
//! per-subset cliques.

mod clique;
mod lineset;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CodeSnippet;
use crate::par::{self, Parallelism};

use clique::BitSet;
use lineset::{check_gamma, indicator_from_parts, InternedSets};
pub use lineset::{distinct_indicator, split_lines, structure_distance, LineSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CurationError {
    #[error("invalid curation config: {0}")]
    InvalidConfig(String),
    #[error("graph has {vertices} vertices, exact search budget is {budget}")]
    BudgetExceeded { vertices: usize, budget: usize },
    #[error("cannot curate an empty snippet list")]
    EmptyInput,
    #[error("duplicate snippet id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    /// Threshold factor on the smaller line-set size.
    pub gamma: f64,
    /// Maximum number of vertices per subset.
    pub subset_cap: usize,
    /// Number of shuffle/split/clique rounds.
    pub iterations: usize,
    pub rng_seed: u64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            gamma: 1.0,
            subset_cap: 400,
            iterations: 5,
            rng_seed: 17,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        check_gamma(self.gamma)?;
        if self.subset_cap < 2 {
            return Err(CurationError::InvalidConfig(format!(
                "subset_cap must be at least 2, got {}",
                self.subset_cap
            )));
        }
        if self.iterations < 1 {
            return Err(CurationError::InvalidConfig(
                "iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of subsets for a working set of `n` snippets.
    pub fn subset_count(&self, n: usize) -> usize {
        n.div_ceil(self.subset_cap).max(1)
    }
}

/// Undirected graph over snippet ids; an edge joins two distinct snippets.
#[derive(Debug, Clone)]
pub struct DistinctnessGraph {
    vertices: Vec<String>,
    adjacency: Vec<BitSet>,
}

impl DistinctnessGraph {
    /// Builds a graph from explicit edges given as vertex-index pairs.
    /// Self-loops are ignored.
    pub fn from_edges(
        vertices: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let n = vertices.len();
        let mut adjacency = vec![BitSet::new(n); n];
        for (a, b) in edges {
            if a != b {
                adjacency[a].insert(b);
                adjacency[b].insert(a);
            }
        }
        DistinctnessGraph {
            vertices,
            adjacency,
        }
    }

    /// Builds the distinctness graph of `snippets` under `gamma`.
    pub fn build(
        snippets: &[CodeSnippet],
        gamma: f64,
        mode: Parallelism,
    ) -> Result<Self, CurationError> {
        check_gamma(gamma)?;
        let interned = InternedSets::new(snippets.iter().map(|s| s.source_text.as_str()));
        let all: Vec<usize> = (0..snippets.len()).collect();
        let adjacency = adjacency_for(&interned, &all, gamma, mode);
        Ok(DistinctnessGraph {
            vertices: snippets.iter().map(|s| s.id.clone()).collect(),
            adjacency,
        })
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(b)
    }

    /// Edges as (smaller index, larger index) pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, row)| row.iter().filter(move |&b| b > a).map(move |b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BitSet::count).sum::<usize>() / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliqueResult {
    /// Member ids in ascending order.
    pub member_ids: Vec<String>,
    /// Found by exact search on the whole graph it was extracted from.
    pub certified: bool,
}

/// Exact maximum clique of `graph`. Among several maximum cliques the one
/// whose sorted id list is lexicographically smallest is returned.
pub fn maximum_clique(
    graph: &DistinctnessGraph,
    budget: usize,
) -> Result<CliqueResult, CurationError> {
    let n = graph.vertex_count();
    if n > budget {
        return Err(CurationError::BudgetExceeded {
            vertices: n,
            budget,
        });
    }
    // Relabel so that index order is id order; the search's tie-break works
    // on indices.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| graph.vertices[a].cmp(&graph.vertices[b]));
    let mut position = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let adjacency: Vec<BitSet> = order
        .iter()
        .map(|&old| {
            let mut row = BitSet::new(n);
            for nb in graph.adjacency[old].iter() {
                row.insert(position[nb]);
            }
            row
        })
        .collect();
    let members = clique::max_clique(&adjacency)
        .into_iter()
        .map(|i| graph.vertices[order[i]].clone())
        .collect();
    Ok(CliqueResult {
        member_ids: members,
        certified: true,
    })
}

fn adjacency_for(
    interned: &InternedSets,
    members: &[usize],
    gamma: f64,
    mode: Parallelism,
) -> Vec<BitSet> {
    let n = members.len();
    let rows: Vec<Vec<usize>> = par::map_range(mode, n, |a| {
        let ia = members[a];
        (a + 1..n)
            .filter(|&b| {
                let ib = members[b];
                indicator_from_parts(
                    interned.distance(ia, ib),
                    interned.size(ia),
                    interned.size(ib),
                    gamma,
                )
            })
            .collect()
    });
    let mut adjacency = vec![BitSet::new(n); n];
    for (a, row) in rows.into_iter().enumerate() {
        for b in row {
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
    }
    adjacency
}

/// Splits `items` into `k` contiguous chunks whose sizes differ by at most one.
fn balanced_chunks<T>(items: &[T], k: usize) -> Vec<&[T]> {
    let base = items.len() / k;
    let extra = items.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(&items[start..start + len]);
        start += len;
    }
    out
}

/// Iterative divide-and-conquer curation. Returns the surviving snippets in
/// ascending id order.
pub fn curate(
    snippets: &[CodeSnippet],
    config: &CurationConfig,
) -> Result<Vec<CodeSnippet>, CurationError> {
    curate_with(snippets, config, Parallelism::default())
}

pub fn curate_with(
    snippets: &[CodeSnippet],
    config: &CurationConfig,
    mode: Parallelism,
) -> Result<Vec<CodeSnippet>, CurationError> {
    curate_counted(snippets, config, mode).map(|(survivors, _)| survivors)
}

/// Like [`curate_with`], also returning how many rounds actually ran.
pub fn curate_counted(
    snippets: &[CodeSnippet],
    config: &CurationConfig,
    mode: Parallelism,
) -> Result<(Vec<CodeSnippet>, usize), CurationError> {
    config.validate()?;
    if snippets.is_empty() {
        return Err(CurationError::EmptyInput);
    }
    let mut seen = HashSet::with_capacity(snippets.len());
    for s in snippets {
        if !seen.insert(s.id.as_str()) {
            return Err(CurationError::DuplicateId(s.id.clone()));
        }
    }

    let interned = InternedSets::new(snippets.iter().map(|s| s.source_text.as_str()));
    let by_id = |a: &usize, b: &usize| snippets[*a].id.cmp(&snippets[*b].id);

    let mut working: Vec<usize> = (0..snippets.len()).collect();
    working.sort_by(by_id);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut rounds = 0;

    for iteration in 0..config.iterations {
        rounds += 1;
        let mut shuffled = working.clone();
        shuffled.shuffle(&mut rng);
        let k = config.subset_count(shuffled.len());
        let subsets: Vec<Vec<usize>> = balanced_chunks(&shuffled, k)
            .into_iter()
            .map(|chunk| {
                let mut c = chunk.to_vec();
                c.sort_by(by_id);
                c
            })
            .collect();

        // Within a subset, graph index order is id order, so the clique
        // search's index tie-break is the id tie-break.
        let cliques: Vec<Vec<usize>> = par::map(mode, &subsets, |members| {
            let adjacency =
                adjacency_for(&interned, members, config.gamma, Parallelism::Sequential);
            clique::max_clique(&adjacency)
                .into_iter()
                .map(|i| members[i])
                .collect()
        });

        let mut next: Vec<usize> = cliques.into_iter().flatten().collect();
        next.sort_by(by_id);
        log::debug!(
            "curation iteration {}: {} subsets, {} -> {} snippets",
            iteration + 1,
            k,
            working.len(),
            next.len()
        );
        working = next;
        // A single subset yields a clique; further rounds cannot change it.
        if k == 1 {
            break;
        }
    }

    Ok((
        working.into_iter().map(|i| snippets[i].clone()).collect(),
        rounds,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snippet(id: &str, text: &str) -> CodeSnippet {
        CodeSnippet::new(id, text, "test")
    }

    #[test]
    fn clique_examples() {
        let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let tri = DistinctnessGraph::from_edges(ids(&["a", "b", "c"]), [(0, 1), (1, 2), (0, 2)]);
        assert_eq!(
            maximum_clique(&tri, 400).unwrap().member_ids,
            ids(&["a", "b", "c"])
        );

        let path = DistinctnessGraph::from_edges(ids(&["a", "b", "c"]), [(0, 1), (1, 2)]);
        let r = maximum_clique(&path, 400).unwrap();
        assert_eq!(r.member_ids, ids(&["a", "b"]));
        assert!(r.certified);

        let empty = DistinctnessGraph::from_edges(ids(&["d", "c", "b", "a"]), []);
        assert_eq!(maximum_clique(&empty, 400).unwrap().member_ids, ids(&["a"]));

        assert_eq!(
            maximum_clique(&tri, 2),
            Err(CurationError::BudgetExceeded {
                vertices: 3,
                budget: 2
            })
        );
    }

    #[test]
    fn clique_tie_break_uses_ids_not_positions() {
        // path z - y - x: cliques {y,z} and {x,y}; {x,y} is smaller
        let g = DistinctnessGraph::from_edges(
            vec!["z".into(), "y".into(), "x".into()],
            [(0, 1), (1, 2)],
        );
        assert_eq!(maximum_clique(&g, 10).unwrap().member_ids, vec!["x", "y"]);
    }

    #[test]
    fn graph_from_snippets() {
        let s = vec![
            snippet("a", "x = 1\ny = 2\nz = 3"),
            snippet("b", "x = 1\ny = 2\nz = 4"),
            snippet("c", "p = 1\nq = 2\nr = 3"),
        ];
        let g = DistinctnessGraph::build(&s, 1.0, Parallelism::Sequential).unwrap();
        // a-b distance 2 < 3; c differs from both entirely
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 2), (1, 2)]);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn identical_snippets_collapse() {
        let s: Vec<_> = (0..50)
            .map(|i| snippet(&format!("s{i:02}"), "a = 1\nb = 2\nprint(a + b)\n"))
            .collect();
        let out = curate(&s, &CurationConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "s00");
    }

    #[test]
    fn distinct_snippets_all_survive() {
        let s: Vec<_> = (0..10)
            .map(|i| snippet(&format!("{i}"), &format!("a{i} = 1\nb{i} = 2\nc{i} = 3")))
            .collect();
        let g = DistinctnessGraph::build(&s, 1.0, Parallelism::Sequential).unwrap();
        assert_eq!(g.edge_count(), 45);
        assert_eq!(curate(&s, &CurationConfig::default()).unwrap().len(), 10);
    }

    #[test]
    fn single_snippet_and_errors() {
        let one = vec![snippet("only", "x = 1")];
        assert_eq!(curate(&one, &CurationConfig::default()).unwrap(), one);
        assert_eq!(
            curate(&[], &CurationConfig::default()),
            Err(CurationError::EmptyInput)
        );
        let dup = vec![snippet("a", "x"), snippet("a", "y")];
        assert_eq!(
            curate(&dup, &CurationConfig::default()),
            Err(CurationError::DuplicateId("a".into()))
        );
        let bad = CurationConfig {
            subset_cap: 1,
            ..Default::default()
        };
        assert!(matches!(
            curate(&one, &bad),
            Err(CurationError::InvalidConfig(_))
        ));
    }

    #[test]
    fn balanced_chunk_sizes() {
        let v: Vec<u32> = (0..401).collect();
        let sizes: Vec<_> = balanced_chunks(&v, 2).iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![201, 200]);
        let cfg = CurationConfig::default();
        assert_eq!(cfg.subset_count(401), 2);
        assert_eq!(cfg.subset_count(400), 1);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let s: Vec<_> = (0..900)
            .map(|i| {
                let family = i / 3;
                snippet(
                    &format!("{i:04}"),
                    &format!("f{family} = 1\ng{family} = 2\nh{family} = 3\nv = {}", i % 3),
                )
            })
            .collect();
        let cfg = CurationConfig::default();
        let a = curate_with(&s, &cfg, Parallelism::Sequential).unwrap();
        let b = curate_with(&s, &cfg, Parallelism::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
