use codeforge_core::corpus::CodeSnippet;
use codeforge_core::curation::{
    curate, curate_with, distinct_indicator, maximum_clique, split_lines, structure_distance,
    CurationConfig, DistinctnessGraph,
};
use codeforge_core::par::Parallelism;
use proptest::prelude::*;

/// Largest clique by checking every vertex subset.
fn brute_force_clique(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut adj = vec![0u32; n];
    for &(a, b) in edges {
        adj[a] |= 1 << b;
        adj[b] |= 1 << a;
    }
    (0u32..1 << n)
        .filter(|&set| {
            (0..n)
                .filter(|v| set >> v & 1 == 1)
                .all(|v| set & !(1 << v) & !adj[v] == 0)
        })
        .map(u32::count_ones)
        .max()
        .unwrap_or(0) as usize
}

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=12).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .collect();
        let len = pairs.len();
        (
            Just(n),
            Just(pairs),
            prop::collection::vec(any::<bool>(), len),
        )
            .prop_map(|(n, pairs, keep)| {
                (
                    n,
                    pairs
                        .into_iter()
                        .zip(keep)
                        .filter(|(_, k)| *k)
                        .map(|(p, _)| p)
                        .collect(),
                )
            })
    })
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i:02}")).collect()
}

fn build(sources: &[Vec<u8>]) -> Vec<CodeSnippet> {
    sources
        .iter()
        .enumerate()
        .map(|(i, ls)| {
            let text: String = ls.iter().map(|l| format!("line {l}\n")).collect();
            CodeSnippet::new(format!("s{i:03}"), text, "p")
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn clique_matches_brute_force((n, edges) in graph_strategy()) {
        let graph = DistinctnessGraph::from_edges(ids(n), edges.iter().copied());
        let found = maximum_clique(&graph, 1000).unwrap();
        prop_assert_eq!(found.member_ids.len(), brute_force_clique(n, &edges));
        let idx: Vec<usize> = found.member_ids.iter().map(|id| id[1..].parse().unwrap()).collect();
        for (i, &a) in idx.iter().enumerate() {
            for &b in &idx[i + 1..] {
                prop_assert!(graph.has_edge(a, b));
            }
        }
    }

    #[test]
    fn indicator_is_symmetric(a in "[a-c\n]{0,20}", b in "[a-c\n]{0,20}", gamma in 0.0f64..2.0) {
        let (la, lb) = (split_lines(&a), split_lines(&b));
        prop_assert_eq!(structure_distance(&la, &lb), structure_distance(&lb, &la));
        prop_assert_eq!(distinct_indicator(&la, &lb, gamma).unwrap(), distinct_indicator(&lb, &la, gamma).unwrap());
        prop_assert!(!distinct_indicator(&la, &la, gamma).unwrap());
    }

    #[test]
    fn single_subset_output_is_pairwise_distinct(
        sources in prop::collection::vec(prop::collection::vec(0u8..12, 1..6), 2..40),
        seed in any::<u64>(),
    ) {
        let snippets = build(&sources);
        let config = CurationConfig { gamma: 1.0, subset_cap: 64, iterations: 3, rng_seed: seed };
        let out = curate(&snippets, &config).unwrap();
        prop_assert!(!out.is_empty());
        for (i, a) in out.iter().enumerate() {
            for b in &out[i + 1..] {
                prop_assert!(distinct_indicator(&split_lines(&a.source_text), &split_lines(&b.source_text), 1.0).unwrap());
            }
        }
    }

    #[test]
    fn split_curation_is_a_deterministic_subset(
        sources in prop::collection::vec(prop::collection::vec(0u8..12, 1..6), 2..40),
        seed in any::<u64>(),
        cap in 2usize..12,
    ) {
        let snippets = build(&sources);
        let config = CurationConfig { gamma: 1.0, subset_cap: cap, iterations: 3, rng_seed: seed };
        let out = curate(&snippets, &config).unwrap();
        prop_assert!(!out.is_empty() && out.len() <= snippets.len());
        prop_assert!(out.windows(2).all(|w| w[0].id < w[1].id));
        prop_assert!(out.iter().all(|s| snippets.contains(s)));
        prop_assert_eq!(&out, &curate_with(&snippets, &config, Parallelism::Sequential).unwrap());
    }
}

#[test]
fn identical_snippets_collapse() {
    let text = "x = 1\ny = 2\n".repeat(6);
    let snippets: Vec<CodeSnippet> = (0..50)
        .map(|i| CodeSnippet::new(format!("d{i:02}"), text.clone(), "p"))
        .collect();
    let out = curate(&snippets, &CurationConfig::default()).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].id, "d00");
}
