//! Subsets of the input coordinates and families of them (ANOVA index sets).
//!
//! Coordinates are stored 0-based internally. Everything that leaves the
//! crate as text (JSON, CSV, the compact `1,2;3` form, `Display`) is 1-based.
//!
//! Subsets order canonically by cardinality first and then lexicographically
//! by members, so iterating an [`AnovaIndexSet`] visits `∅`, then the
//! singletons, then the pairs, and so on. Feature blocks and coefficient
//! vectors inherit this ordering.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A sorted set of distinct coordinate indices (0-based).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct VarSubset(Vec<usize>);

impl VarSubset {
    pub fn empty() -> Self {
        VarSubset(Vec::new())
    }

    /// Builds a subset from 0-based indices, sorting and rejecting duplicates.
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate coordinate in subset {members:?}")));
        }
        Ok(VarSubset(members))
    }

    /// Builds a subset from 1-based indices as used in files and on the CLI.
    pub fn from_one_based(members: &[usize]) -> Result<Self> {
        if members.contains(&0) {
            return Err(Error::invalid("coordinate indices are 1-based"));
        }
        VarSubset::new(members.iter().map(|&i| i - 1).collect())
    }

    pub fn singleton(i: usize) -> Self {
        VarSubset(vec![i])
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Largest member plus one, i.e. the smallest dimension that can hold it.
    pub fn min_dimension(&self) -> usize {
        self.0.last().map_or(0, |&m| m + 1)
    }

    pub fn is_subset_of(&self, other: &VarSubset) -> bool {
        self.0.iter().all(|i| other.contains(*i))
    }

    pub fn is_strict_subset_of(&self, other: &VarSubset) -> bool {
        self.len() < other.len() && self.is_subset_of(other)
    }

    pub fn intersects(&self, other: &VarSubset) -> bool {
        self.0.iter().any(|i| other.contains(*i))
    }

    /// `self \ other`.
    pub fn difference(&self, other: &VarSubset) -> VarSubset {
        VarSubset(self.0.iter().copied().filter(|i| !other.contains(*i)).collect())
    }

    /// Position of coordinate `i` within the member list.
    pub fn position(&self, i: usize) -> Option<usize> {
        self.0.binary_search(&i).ok()
    }

    /// All subsets of `self` (including `∅` and `self`), in canonical order.
    pub fn subsets(&self) -> Vec<VarSubset> {
        let k = self.len();
        let mut out: Vec<VarSubset> = (0..1usize << k)
            .map(|mask| VarSubset((0..k).filter(|b| mask & (1 << b) != 0).map(|b| self.0[b]).collect()))
            .collect();
        out.sort();
        out
    }

    /// All strict subsets of `self`, in canonical order.
    pub fn strict_subsets(&self) -> Vec<VarSubset> {
        let mut all = self.subsets();
        all.pop();
        all
    }
}

impl Ord for VarSubset {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for VarSubset {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for VarSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for VarSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl std::str::FromStr for VarSubset {
    type Err = Error;

    /// Parses `{1,2}`, `1,2`, `{}` or the empty string (1-based).
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('{').trim_end_matches('}').trim();
        if inner.is_empty() {
            return Ok(VarSubset::empty());
        }
        let members = inner
            .split([',', ' '])
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::invalid(format!("bad coordinate {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        VarSubset::from_one_based(&members)
    }
}

impl Serialize for VarSubset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for VarSubset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<usize>::deserialize(d)?;
        VarSubset::from_one_based(&raw).map_err(serde::de::Error::custom)
    }
}

/// A finite family of subsets of `{0, …, d-1}`.
#[derive(Clone, PartialEq, Eq)]
pub struct AnovaIndexSet {
    dimension: usize,
    terms: BTreeSet<VarSubset>,
}

impl AnovaIndexSet {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(AnovaIndexSet {
            dimension,
            terms: BTreeSet::new(),
        })
    }

    pub fn from_terms<I>(dimension: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = VarSubset>,
    {
        let mut set = AnovaIndexSet::new(dimension)?;
        for t in terms {
            set.insert(t)?;
        }
        Ok(set)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn insert(&mut self, term: VarSubset) -> Result<bool> {
        if term.min_dimension() > self.dimension {
            return Err(Error::invalid(format!(
                "term {term} exceeds dimension {}",
                self.dimension
            )));
        }
        Ok(self.terms.insert(term))
    }

    pub fn remove(&mut self, term: &VarSubset) -> bool {
        self.terms.remove(term)
    }

    pub fn contains(&self, term: &VarSubset) -> bool {
        self.terms.contains(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = &VarSubset> + '_ {
        self.terms.iter()
    }

    pub fn max_order(&self) -> usize {
        self.terms.iter().map(VarSubset::len).max().unwrap_or(0)
    }

    pub fn union(&self, other: &AnovaIndexSet) -> Result<AnovaIndexSet> {
        let dim = self.dimension.max(other.dimension);
        AnovaIndexSet::from_terms(dim, self.iter().chain(other.iter()).cloned())
    }

    /// Keeps the terms satisfying `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&VarSubset) -> bool) {
        self.terms.retain(|t| keep(t));
    }

    /// True when `term` is a strict subset of some member.
    pub fn covers(&self, term: &VarSubset) -> bool {
        self.terms.iter().any(|u| term.is_strict_subset_of(u))
    }

    /// Terms with no strict superset in the family.
    pub fn maximal_terms(&self) -> Vec<VarSubset> {
        self.terms.iter().filter(|t| !self.covers(t)).cloned().collect()
    }

    /// No member is a strict subset of another member.
    pub fn is_anti_downward_closed(&self) -> bool {
        self.terms.iter().all(|t| !self.covers(t))
    }

    /// Every subset of every member is itself a member.
    pub fn is_downward_closed(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.strict_subsets().iter().all(|v| self.terms.contains(v)))
    }

    /// JSON array of 1-based arrays, e.g. `[[1,2],[3]]`.
    pub fn to_json(&self) -> String {
        let raw: Vec<Vec<usize>> = self.terms.iter().map(VarSubset::one_based).collect();
        serde_json::to_string(&raw).expect("plain integer arrays always serialize")
    }

    pub fn from_json(s: &str, dimension: usize) -> Result<Self> {
        let raw: Vec<Vec<usize>> = serde_json::from_str(s)?;
        let terms = raw
            .iter()
            .map(|r| VarSubset::from_one_based(r))
            .collect::<Result<Vec<_>>>()?;
        AnovaIndexSet::from_terms(dimension, terms)
    }

    /// Compact text form `1,2;3`; the empty subset is written `{}`.
    pub fn to_text(&self) -> String {
        self.terms
            .iter()
            .map(|t| {
                if t.is_empty() {
                    "{}".to_string()
                } else {
                    t.one_based()
                        .iter()
                        .map(|i| i.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                }
            })
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse_text(s: &str, dimension: usize) -> Result<Self> {
        let s = s.trim();
        let mut set = AnovaIndexSet::new(dimension)?;
        if s.is_empty() {
            return Ok(set);
        }
        for item in s.split(';') {
            set.insert(item.parse()?)?;
        }
        Ok(set)
    }
}

impl fmt::Debug for AnovaIndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AnovaIndexSet(d={}, ", self.dimension)?;
        f.debug_set().entries(self.terms.iter()).finish()?;
        f.write_str(")")
    }
}

impl fmt::Display for AnovaIndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, t) in self.terms.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str("}")
    }
}

impl<'a> IntoIterator for &'a AnovaIndexSet {
    type Item = &'a VarSubset;
    type IntoIter = std::collections::btree_set::Iter<'a, VarSubset>;

    fn into_iter(self) -> Self::IntoIter {
        self.terms.iter()
    }
}

/// Lexicographic k-combinations of `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..k).rev().find(|&p| idx[p] != p + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All `C(d, q)` subsets of cardinality `q`.
pub fn all_subsets_of_order(d: usize, q: usize) -> Result<AnovaIndexSet> {
    if q > d {
        return Err(Error::invalid(format!("order {q} exceeds dimension {d}")));
    }
    AnovaIndexSet::from_terms(d, combinations(d, q).into_iter().map(VarSubset))
}

/// All subsets of cardinality at most `q`, including `∅`.
pub fn all_subsets_up_to_order(d: usize, q: usize) -> Result<AnovaIndexSet> {
    if q > d {
        return Err(Error::invalid(format!("order {q} exceeds dimension {d}")));
    }
    let mut set = AnovaIndexSet::new(d)?;
    for k in 0..=q {
        for c in combinations(d, k) {
            set.insert(VarSubset(c))?;
        }
    }
    Ok(set)
}

/// `{v | v ⊆ u for some u ∈ U}`.
pub fn downward_closure(set: &AnovaIndexSet) -> AnovaIndexSet {
    let mut out = AnovaIndexSet {
        dimension: set.dimension,
        terms: BTreeSet::new(),
    };
    for u in set {
        out.terms.extend(u.subsets());
    }
    out
}

/// Drops every term that is a strict subset of another term.
pub fn prune_to_anti_downward_closed(set: &AnovaIndexSet) -> AnovaIndexSet {
    AnovaIndexSet {
        dimension: set.dimension,
        terms: set.maximal_terms().into_iter().collect(),
    }
}

/// All `v` with `|v| = k` that are not a strict subset of any member of `set`.
pub fn uncovered_subsets(set: &AnovaIndexSet, k: usize) -> Result<AnovaIndexSet> {
    let d = set.dimension;
    if k > d {
        return Err(Error::invalid(format!("order {k} exceeds dimension {d}")));
    }
    AnovaIndexSet::from_terms(
        d,
        combinations(d, k).into_iter().map(VarSubset).filter(|v| !set.covers(v)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(one_based: &[usize]) -> VarSubset {
        VarSubset::from_one_based(one_based).unwrap()
    }

    fn set(d: usize, terms: &[&[usize]]) -> AnovaIndexSet {
        AnovaIndexSet::from_terms(d, terms.iter().map(|t| s(t))).unwrap()
    }

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn order_two_of_three() {
        let u = all_subsets_of_order(3, 2).unwrap();
        assert_eq!(u, set(3, &[&[1, 2], &[1, 3], &[2, 3]]));
    }

    #[test]
    fn order_three_of_seven_has_35_terms() {
        assert_eq!(all_subsets_of_order(7, 3).unwrap().len(), 35);
    }

    #[test]
    fn order_zero_is_the_empty_set() {
        let u = all_subsets_of_order(5, 0).unwrap();
        assert_eq!(u.len(), 1);
        assert!(u.contains(&VarSubset::empty()));
    }

    #[test]
    fn order_beyond_dimension_is_rejected() {
        assert!(matches!(all_subsets_of_order(3, 4), Err(Error::InvalidArgument(_))));
        assert!(all_subsets_up_to_order(3, 4).is_err());
        assert!(uncovered_subsets(&AnovaIndexSet::new(3).unwrap(), 4).is_err());
    }

    #[test]
    fn subset_counts_are_binomial() {
        for d in 1..=12 {
            for q in 0..=d {
                assert_eq!(all_subsets_of_order(d, q).unwrap().len(), binom(d, q));
            }
        }
    }

    #[test]
    fn up_to_order_counts() {
        assert_eq!(all_subsets_up_to_order(9, 2).unwrap().len(), 46);
        assert_eq!(
            all_subsets_up_to_order(2, 2).unwrap(),
            set(2, &[&[], &[1], &[2], &[1, 2]])
        );
        assert_eq!(all_subsets_up_to_order(4, 1).unwrap().len(), 5);
    }

    #[test]
    fn closure_examples() {
        assert_eq!(
            downward_closure(&set(2, &[&[1, 2]])),
            set(2, &[&[], &[1], &[2], &[1, 2]])
        );
        assert!(downward_closure(&AnovaIndexSet::new(4).unwrap()).is_empty());
        assert_eq!(
            downward_closure(&set(3, &[&[1], &[2, 3]])),
            set(3, &[&[], &[1], &[2], &[3], &[2, 3]])
        );
    }

    #[test]
    fn pruning_examples() {
        assert_eq!(
            prune_to_anti_downward_closed(&set(3, &[&[1], &[1, 2], &[3]])),
            set(3, &[&[1, 2], &[3]])
        );
        let friedmann = set(9, &[&[], &[1], &[2], &[3], &[4], &[5], &[1, 2]]);
        assert_eq!(
            prune_to_anti_downward_closed(&friedmann),
            set(9, &[&[1, 2], &[3], &[4], &[5]])
        );
        let already = set(5, &[&[1, 2], &[3, 4], &[5]]);
        assert_eq!(prune_to_anti_downward_closed(&already), already);
    }

    #[test]
    fn uncovered_examples() {
        let u = uncovered_subsets(&set(7, &[&[1, 2, 3]]), 2).unwrap();
        assert_eq!(u.len(), 18);
        assert!(!u.contains(&s(&[1, 2])));
        assert!(!u.contains(&s(&[2, 3])));
        assert!(u.contains(&s(&[1, 4])));

        let empty = AnovaIndexSet::new(5).unwrap();
        assert_eq!(
            uncovered_subsets(&empty, 1).unwrap(),
            all_subsets_of_order(5, 1).unwrap()
        );
        assert!(uncovered_subsets(&set(2, &[&[1, 2]]), 1).unwrap().is_empty());
    }

    #[test]
    fn canonical_order_is_cardinality_then_members() {
        let u = set(4, &[&[2, 3], &[4], &[], &[1, 4], &[1]]);
        let order: Vec<String> = u.iter().map(|t| t.to_string()).collect();
        assert_eq!(order, ["{}", "{1}", "{4}", "{1,4}", "{2,3}"]);
    }

    #[test]
    fn text_and_json_forms() {
        let u = set(4, &[&[1, 2], &[3], &[]]);
        assert_eq!(u.to_json(), "[[],[3],[1,2]]");
        assert_eq!(u.to_text(), "{};3;1,2");
        assert_eq!(AnovaIndexSet::from_json(&u.to_json(), 4).unwrap(), u);
        assert_eq!(AnovaIndexSet::parse_text("1,2;3;{}", 4).unwrap(), u);
        assert!(AnovaIndexSet::parse_text("1,5", 4).is_err());
        assert!(AnovaIndexSet::from_json("[[0]]", 4).is_err());
    }

    #[test]
    fn duplicate_members_rejected() {
        assert!(VarSubset::new(vec![1, 1]).is_err());
    }
}
