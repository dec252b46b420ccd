//! Exact maximum-clique search.
//!
//! Two passes over a bitset adjacency matrix:
//! 1. branch and bound with a pivot rule and a greedy-coloring upper bound
//!    finds the clique number;
//! 2. a depth-first search that branches on vertices in ascending order and
//!    prunes only branches that cannot reach that size returns the first
//!    clique of maximum size, which is the lexicographically smallest one.

#[derive(Clone, PartialEq, Eq)]
pub(crate) struct BitSet {
    words: Vec<u64>,
}

impl std::fmt::Debug for BitSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl BitSet {
    pub(crate) fn new(n: usize) -> Self {
        BitSet {
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub(crate) fn full(n: usize) -> Self {
        let mut s = Self::new(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    #[inline]
    pub(crate) fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub(crate) fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    #[inline]
    pub(crate) fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub(crate) fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub(crate) fn intersect(&self, other: &BitSet) -> BitSet {
        BitSet {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    fn intersect_count(&self, other: &BitSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    fn difference_in_place(&mut self, other: &BitSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    fn first(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let bit = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + bit)
                }
            })
        })
    }
}

/// Upper bound on the clique number of the subgraph induced by `p`:
/// the number of classes in a greedy sequential coloring.
fn coloring_bound(adj: &[BitSet], p: &BitSet) -> usize {
    let mut uncolored = p.clone();
    let mut colors = 0;
    while !uncolored.is_empty() {
        colors += 1;
        let mut candidates = uncolored.clone();
        while let Some(v) = candidates.first() {
            uncolored.remove(v);
            candidates.remove(v);
            candidates.difference_in_place(&adj[v]);
        }
    }
    colors
}

fn clique_number(adj: &[BitSet], p: BitSet, depth: usize, best: &mut usize) {
    if p.is_empty() {
        *best = (*best).max(depth);
        return;
    }
    if depth + p.count() <= *best || depth + coloring_bound(adj, &p) <= *best {
        return;
    }
    // Every maximum clique extending the current one contains a vertex of
    // P \ N(pivot), so only those need to be branched on.
    let pivot = p
        .iter()
        .max_by_key(|&u| (p.intersect_count(&adj[u]), std::cmp::Reverse(u)))
        .expect("p is non-empty");
    let branch: Vec<usize> = p.iter().filter(|&v| !adj[pivot].contains(v)).collect();
    let mut p = p;
    for v in branch {
        if depth + p.count() <= *best {
            break;
        }
        clique_number(adj, p.intersect(&adj[v]), depth + 1, best);
        p.remove(v);
    }
}

fn first_clique_of_size(
    adj: &[BitSet],
    current: &mut Vec<usize>,
    p: BitSet,
    target: usize,
) -> bool {
    if current.len() == target {
        return true;
    }
    if current.len() + p.count() < target || current.len() + coloring_bound(adj, &p) < target {
        return false;
    }
    let mut p = p;
    let order: Vec<usize> = p.iter().collect();
    for v in order {
        current.push(v);
        // Vertices below v were already removed from p, so the candidate set
        // only holds larger vertices.
        if first_clique_of_size(adj, current, p.intersect(&adj[v]), target) {
            return true;
        }
        current.pop();
        p.remove(v);
        if current.len() + p.count() < target {
            return false;
        }
    }
    false
}

/// Lexicographically smallest maximum clique, as ascending vertex indices.
pub(crate) fn max_clique(adj: &[BitSet]) -> Vec<usize> {
    let n = adj.len();
    if n == 0 {
        return Vec::new();
    }
    let mut omega = 1;
    clique_number(adj, BitSet::full(n), 0, &mut omega);
    let mut clique = Vec::with_capacity(omega);
    let found = first_clique_of_size(adj, &mut clique, BitSet::full(n), omega);
    debug_assert!(found);
    clique
}
