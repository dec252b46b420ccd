use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::CurationError;

/// Set of normalized source lines of one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSet {
    lines: BTreeSet<String>,
}

impl LineSet {
    pub fn lines(&self) -> &BTreeSet<String> {
        &self.lines
    }

    pub fn size(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn intersection_len(&self, other: &LineSet) -> usize {
        self.lines.intersection(&other.lines).count()
    }

    pub fn union_len(&self, other: &LineSet) -> usize {
        self.size() + other.size() - self.intersection_len(other)
    }
}

impl<S: Into<String>> FromIterator<S> for LineSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        LineSet {
            lines: iter.into_iter().map(Into::into).collect(),
        }
    }
}

/// Splits text into its set of lines: trailing whitespace stripped,
/// indentation kept, blank lines dropped, duplicates merged.
pub fn split_lines(text: &str) -> LineSet {
    LineSet {
        lines: normalized_lines(text).map(str::to_owned).collect(),
    }
}

pub(crate) fn normalized_lines(text: &str) -> impl Iterator<Item = &str> {
    text.split('\n')
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
}

/// Cardinality of the symmetric difference of two line sets.
pub fn structure_distance(a: &LineSet, b: &LineSet) -> usize {
    a.lines.symmetric_difference(&b.lines).count()
}

/// Whether two line sets count as distinct under threshold `gamma`:
/// `d >= gamma * min(|a|, |b|)`, with identical sets never distinct.
pub fn distinct_indicator(a: &LineSet, b: &LineSet, gamma: f64) -> Result<bool, CurationError> {
    check_gamma(gamma)?;
    Ok(indicator_from_parts(
        structure_distance(a, b),
        a.size(),
        b.size(),
        gamma,
    ))
}

pub(crate) fn check_gamma(gamma: f64) -> Result<(), CurationError> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(CurationError::InvalidConfig(format!(
            "gamma must be a positive finite number, got {gamma}"
        )))
    }
}

#[inline]
pub(crate) fn indicator_from_parts(
    distance: usize,
    size_a: usize,
    size_b: usize,
    gamma: f64,
) -> bool {
    distance > 0 && distance as f64 >= gamma * size_a.min(size_b) as f64
}

/// Line sets as sorted interned ids, for fast pairwise distances.
pub(crate) struct InternedSets {
    sets: Vec<Vec<u32>>,
}

impl InternedSets {
    pub(crate) fn new<'a>(texts: impl Iterator<Item = &'a str>) -> Self {
        let mut table = std::collections::HashMap::<&'a str, u32>::new();
        let sets = texts
            .map(|text| {
                let mut ids: Vec<u32> = normalized_lines(text)
                    .map(|line| {
                        let next = table.len() as u32;
                        *table.entry(line).or_insert(next)
                    })
                    .collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            })
            .collect();
        InternedSets { sets }
    }

    pub(crate) fn size(&self, i: usize) -> usize {
        self.sets[i].len()
    }

    pub(crate) fn distance(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.sets[i], &self.sets[j]);
        let (mut x, mut y, mut common) = (0, 0, 0);
        while x < a.len() && y < b.len() {
            match a[x].cmp(&b[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    common += 1;
                    x += 1;
                    y += 1;
                }
            }
        }
        a.len() + b.len() - 2 * common
    }
}
