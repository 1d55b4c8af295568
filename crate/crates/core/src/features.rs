//! ANOVA-truncated random Fourier features and the complex feature matrix.
//!
//! A [`FeatureSet`] groups frequency vectors by their support `u`. Only the
//! `|u|` nonzero coordinates are stored. The group for `∅` holds the single
//! constant feature `ω = 0`.

use std::ops::Range;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index_sets::{AnovaIndexSet, VarSubset};
use crate::rng;
use crate::sampling::FeatureDensity;

/// Frequencies sharing the support `u`; each row of `omegas` has `|u|` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub u: VarSubset,
    pub omegas: Vec<Vec<f64>>,
}

impl FeatureGroup {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// `⟨ω_k, x_u⟩` for a full-length point `x`.
    pub fn phase(&self, k: usize, x: &[f64]) -> f64 {
        self.u
            .members()
            .iter()
            .zip(&self.omegas[k])
            .map(|(&i, w)| w * x[i])
            .sum()
    }
}

/// Column ranges of each group, in canonical group order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    blocks: Vec<(VarSubset, Range<usize>)>,
}

impl BlockLayout {
    pub fn total(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.1.end)
    }

    pub fn range(&self, u: &VarSubset) -> Option<Range<usize>> {
        self.blocks
            .binary_search_by(|(v, _)| v.cmp(u))
            .ok()
            .map(|i| self.blocks[i].1.clone())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarSubset, Range<usize>)> + '_ {
        self.blocks.iter().map(|(u, r)| (u, r.clone()))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// The group owning column `k`.
    pub fn group_of(&self, k: usize) -> Option<&VarSubset> {
        self.blocks.iter().find(|(_, r)| r.contains(&k)).map(|b| &b.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    dimension: usize,
    groups: Vec<FeatureGroup>,
}

#[derive(Serialize, Deserialize)]
struct FeatureSetRepr {
    dimension: usize,
    groups: Vec<FeatureGroup>,
}

impl FeatureSet {
    /// Validates support exactness and sorts the groups canonically.
    pub fn new(dimension: usize, mut groups: Vec<FeatureGroup>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        groups.sort_by(|a, b| a.u.cmp(&b.u));
        if groups.windows(2).any(|w| w[0].u == w[1].u) {
            return Err(Error::invalid("duplicate feature group"));
        }
        for g in &groups {
            if g.u.min_dimension() > dimension {
                return Err(Error::invalid(format!("group {} exceeds dimension {dimension}", g.u)));
            }
            if g.u.is_empty() && g.len() != 1 {
                return Err(Error::invalid("the ∅ group holds exactly one constant feature"));
            }
            for w in &g.omegas {
                if w.len() != g.u.len() {
                    return Err(Error::invalid(format!(
                        "frequency of group {} has {} coordinates",
                        g.u,
                        w.len()
                    )));
                }
                if w.iter().any(|&c| c == 0.0 || !c.is_finite()) {
                    return Err(Error::invalid(format!(
                        "frequency of group {} violates the support condition",
                        g.u
                    )));
                }
            }
        }
        Ok(FeatureSet { dimension, groups })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn group(&self, u: &VarSubset) -> Option<&FeatureGroup> {
        self.groups
            .binary_search_by(|g| g.u.cmp(u))
            .ok()
            .map(|i| &self.groups[i])
    }

    /// Total number of features `N`.
    pub fn total(&self) -> usize {
        self.groups.iter().map(FeatureGroup::len).sum()
    }

    pub fn index_set(&self) -> AnovaIndexSet {
        AnovaIndexSet::from_terms(self.dimension, self.groups.iter().map(|g| g.u.clone()))
            .expect("groups were validated against the dimension")
    }

    pub fn layout(&self) -> BlockLayout {
        let mut start = 0;
        BlockLayout {
            blocks: self
                .groups
                .iter()
                .map(|g| {
                    let r = start..start + g.len();
                    start = r.end;
                    (g.u.clone(), r)
                })
                .collect(),
        }
    }

    /// Full frequency vector of column `k` (zeros off the support).
    pub fn full_omega(&self, k: usize) -> Option<Vec<f64>> {
        let mut start = 0;
        for g in &self.groups {
            if k < start + g.len() {
                let mut w = vec![0.0; self.dimension];
                for (&i, &v) in g.u.members().iter().zip(&g.omegas[k - start]) {
                    w[i] = v;
                }
                return Some(w);
            }
            start += g.len();
        }
        None
    }

    /// Keeps only the listed columns (sorted, in range); empty groups vanish.
    pub fn restrict(&self, columns: &[usize]) -> FeatureSet {
        let layout = self.layout();
        let groups = self
            .groups
            .iter()
            .zip(layout.iter())
            .filter_map(|(g, (_, r))| {
                let omegas: Vec<Vec<f64>> = columns
                    .iter()
                    .filter(|c| r.contains(c))
                    .map(|&c| g.omegas[c - r.start].clone())
                    .collect();
                (!omegas.is_empty()).then(|| FeatureGroup { u: g.u.clone(), omegas })
            })
            .collect();
        FeatureSet {
            dimension: self.dimension,
            groups,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&FeatureSetRepr {
            dimension: self.dimension,
            groups: self.groups.clone(),
        })
        .expect("feature sets always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: FeatureSetRepr = serde_json::from_str(s)?;
        FeatureSet::new(r.dimension, r.groups)
    }

    pub(crate) fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(FeatureSetRepr {
            dimension: self.dimension,
            groups: self.groups.clone(),
        })
        .expect("feature sets always serialize")
    }

    pub(crate) fn from_value(v: serde_json::Value) -> Result<Self> {
        let r: FeatureSetRepr = serde_json::from_value(v)?;
        FeatureSet::new(r.dimension, r.groups)
    }
}

fn group_stream(seed: u64, u: &VarSubset) -> rand_chacha::ChaCha20Rng {
    rng::stream(seed, &format!("{}/{u}", rng::FEATURES), 0)
}

/// Draws `⌊N_total/|U|⌋` features for every `u ∈ U` (one for `∅`).
///
/// Group `u` always replays its own stream of the features seed, so its
/// `k`-th frequency is the same whatever the history. Frequencies present in
/// `existing` are kept verbatim; only the missing tail is drawn. A group
/// holding more than the new budget keeps its first `n` frequencies.
pub fn draw_feature_set(
    u_set: &AnovaIndexSet,
    n_total: usize,
    density: &FeatureDensity,
    existing: Option<&FeatureSet>,
    seed: u64,
) -> Result<FeatureSet> {
    density.validate()?;
    if u_set.is_empty() {
        return Err(Error::invalid("index set must be nonempty"));
    }
    if n_total < u_set.len() {
        return Err(Error::invalid(format!(
            "feature budget {n_total} is smaller than |U| = {}",
            u_set.len()
        )));
    }
    if let Some(e) = existing {
        if e.dimension != u_set.dimension() {
            return Err(Error::invalid("existing features have a different dimension"));
        }
    }
    let n = n_total / u_set.len();
    let mut groups = Vec::with_capacity(u_set.len());
    for u in u_set {
        if u.is_empty() {
            groups.push(FeatureGroup {
                u: u.clone(),
                omegas: vec![Vec::new()],
            });
            continue;
        }
        let mut omegas: Vec<Vec<f64>> = existing
            .and_then(|e| e.group(u))
            .map(|g| g.omegas.clone())
            .unwrap_or_default();
        omegas.truncate(n);
        if omegas.len() < n {
            let mut r = group_stream(seed, u);
            for k in 0..n {
                let w: Vec<f64> = (0..u.len()).map(|_| density.draw(&mut r)).collect();
                if k >= omegas.len() {
                    omegas.push(w);
                }
            }
        }
        groups.push(FeatureGroup { u: u.clone(), omegas });
    }
    FeatureSet::new(u_set.dimension(), groups)
}

/// Plain `q`-sparse features: each of the `N` frequencies gets a uniformly
/// random support of size `q`. Features are then grouped by support.
pub fn draw_sparse_feature_set(
    d: usize,
    q: usize,
    n_total: usize,
    density: &FeatureDensity,
    seed: u64,
) -> Result<FeatureSet> {
    use rand::seq::index::sample;
    density.validate()?;
    if q == 0 || q > d || n_total == 0 {
        return Err(Error::invalid("need 1 ≤ q ≤ d and a positive feature count"));
    }
    let mut r = rng::stream(seed, rng::FEATURES, u64::MAX);
    let mut by_support: std::collections::BTreeMap<VarSubset, Vec<Vec<f64>>> = Default::default();
    for _ in 0..n_total {
        let support = VarSubset::new(sample(&mut r, d, q).into_vec())?;
        let w: Vec<f64> = (0..q).map(|_| density.draw(&mut r)).collect();
        by_support.entry(support).or_default().push(w);
    }
    FeatureSet::new(
        d,
        by_support
            .into_iter()
            .map(|(u, omegas)| FeatureGroup { u, omegas })
            .collect(),
    )
}

/// Dense `M × N` matrix `e^{i⟨ω_k, x_j⟩}` with its column blocks.
#[derive(Clone, Debug)]
pub struct FeatureMatrix {
    pub matrix: Mat<c64>,
    pub layout: BlockLayout,
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Copy of the columns of group `u`.
    pub fn block(&self, u: &VarSubset) -> Option<Mat<c64>> {
        let r = self.layout.range(u)?;
        Some(self.matrix.subcols(r.start, r.len()).to_owned())
    }
}

pub fn assemble_matrix(features: &FeatureSet, x: &Mat<f64>) -> Result<FeatureMatrix> {
    if x.ncols() != features.dimension {
        return Err(Error::invalid(format!(
            "features have dimension {} but points have {}",
            features.dimension,
            x.ncols()
        )));
    }
    let m = x.nrows();
    let layout = features.layout();
    let mut a = Mat::<c64>::zeros(m, layout.total());
    let mut col = 0;
    for g in &features.groups {
        for w in &g.omegas {
            for j in 0..m {
                let phase: f64 = g.u.members().iter().zip(w).map(|(&i, wi)| wi * x[(j, i)]).sum();
                a[(j, col)] = c64::cis(phase);
            }
            col += 1;
        }
    }
    Ok(FeatureMatrix { matrix: a, layout })
}

/// Complex coefficients `a`, blocked like the feature set that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientVector {
    pub values: Vec<c64>,
    pub layout: BlockLayout,
}

#[derive(Serialize, Deserialize)]
struct CoefficientBlock {
    u: VarSubset,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl CoefficientVector {
    pub fn zeros(layout: &BlockLayout) -> Self {
        CoefficientVector {
            values: vec![c64::new(0.0, 0.0); layout.total()],
            layout: layout.clone(),
        }
    }

    pub fn new(values: Vec<c64>, layout: BlockLayout) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::invalid(format!(
                "{} coefficients for {} features",
                values.len(),
                layout.total()
            )));
        }
        Ok(CoefficientVector { values, layout })
    }

    pub fn block(&self, u: &VarSubset) -> Option<&[c64]> {
        self.layout.range(u).map(|r| &self.values[r])
    }

    /// Number of nonzero entries.
    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|v| v.re != 0.0 || v.im != 0.0).count()
    }

    pub(crate) fn to_value(&self) -> serde_json::Value {
        let blocks: Vec<CoefficientBlock> = self
            .layout
            .iter()
            .map(|(u, r)| CoefficientBlock {
                u: u.clone(),
                re: self.values[r.clone()].iter().map(|v| v.re).collect(),
                im: self.values[r].iter().map(|v| v.im).collect(),
            })
            .collect();
        serde_json::to_value(blocks).expect("coefficients always serialize")
    }

    /// Reads coefficients and checks them against the feature layout.
    pub(crate) fn from_value(v: serde_json::Value, layout: &BlockLayout) -> Result<Self> {
        let blocks: Vec<CoefficientBlock> = serde_json::from_value(v)?;
        let mut values = Vec::with_capacity(layout.total());
        if blocks.len() != layout.len() {
            return Err(Error::invalid("coefficient blocks do not match the features"));
        }
        for (b, (u, r)) in blocks.iter().zip(layout.iter()) {
            if &b.u != u || b.re.len() != r.len() || b.im.len() != r.len() {
                return Err(Error::invalid(format!("coefficient block {} mismatched", b.u)));
            }
            values.extend(b.re.iter().zip(&b.im).map(|(&re, &im)| c64::new(re, im)));
        }
        CoefficientVector::new(values, layout.clone())
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }
}

/// `Re(A(X) a)` evaluated directly from the frequencies.
pub fn predict(features: &FeatureSet, a: &CoefficientVector, x: &Mat<f64>) -> Result<Vec<f64>> {
    if a.layout != features.layout() {
        return Err(Error::invalid("coefficient blocks do not match the feature set"));
    }
    if x.ncols() != features.dimension {
        return Err(Error::invalid("point dimension does not match the features"));
    }
    let mut row = vec![0.0; x.ncols()];
    Ok((0..x.nrows())
        .map(|j| {
            for (c, v) in row.iter_mut().enumerate() {
                *v = x[(j, c)];
            }
            let mut k = 0;
            let mut s = 0.0;
            for g in &features.groups {
                for w in 0..g.len() {
                    let z = c64::cis(g.phase(w, &row)) * a.values[k];
                    s += z.re;
                    k += 1;
                }
            }
            s
        })
        .collect())
}

/// Product `A a` (complex) for an assembled matrix.
pub fn apply(a: &FeatureMatrix, coef: &[c64]) -> Vec<c64> {
    let m = a.nrows();
    let mut out = vec![c64::new(0.0, 0.0); m];
    for (k, &c) in coef.iter().enumerate() {
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        let col = a.matrix.col(k);
        for (o, v) in out.iter_mut().zip(col.iter()) {
            *o += v * c;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index_sets::all_subsets_of_order;
    use crate::sampling::sample_data;
    use crate::sampling::DataDistribution;
    use std::f64::consts::PI;

    fn s(v: &[usize]) -> VarSubset {
        VarSubset::from_one_based(v).unwrap()
    }

    fn gauss() -> FeatureDensity {
        FeatureDensity::Gaussian { sigma: 1.0 }
    }

    #[test]
    fn support_condition_and_budget() {
        let u = AnovaIndexSet::from_terms(3, [s(&[1, 2]), s(&[3])]).unwrap();
        let f = draw_feature_set(&u, 100, &gauss(), None, 1).unwrap();
        assert_eq!(f.group(&s(&[1, 2])).unwrap().len(), 50);
        assert_eq!(f.group(&s(&[3])).unwrap().len(), 50);
        for k in f.layout().range(&s(&[1, 2])).unwrap() {
            let w = f.full_omega(k).unwrap();
            assert!(w[0] != 0.0 && w[1] != 0.0 && w[2] == 0.0);
        }
    }

    #[test]
    fn floor_rule_for_35_groups() {
        let u = all_subsets_of_order(7, 3).unwrap();
        let f = draw_feature_set(&u, 2500, &gauss(), None, 1).unwrap();
        assert!(f.groups().iter().all(|g| g.len() == 71));
        assert_eq!(f.total(), 35 * 71);
    }

    #[test]
    fn budget_below_group_count_rejected() {
        let u = all_subsets_of_order(7, 3).unwrap();
        assert!(draw_feature_set(&u, 34, &gauss(), None, 1).is_err());
    }

    #[test]
    fn top_up_appends_exactly_the_missing_draws() {
        let u = AnovaIndexSet::from_terms(3, [s(&[3])]).unwrap();
        let f40 = draw_feature_set(&u, 40, &gauss(), None, 5).unwrap();
        let mut tampered = f40.clone();
        tampered.groups[0].omegas[0][0] = 123.0;
        let f50 = draw_feature_set(&u, 50, &gauss(), Some(&tampered), 5).unwrap();
        let g = f50.group(&s(&[3])).unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!(g.omegas[0][0], 123.0);
        assert_eq!(&g.omegas[1..40], &f40.groups[0].omegas[1..40]);
        let fresh = draw_feature_set(&u, 50, &gauss(), None, 5).unwrap();
        assert_eq!(&g.omegas[40..], &fresh.groups[0].omegas[40..]);
    }

    #[test]
    fn empty_group_is_the_constant_column() {
        let u = AnovaIndexSet::from_terms(2, [VarSubset::empty(), s(&[1])]).unwrap();
        let f = draw_feature_set(&u, 20, &gauss(), None, 1).unwrap();
        assert_eq!(f.group(&VarSubset::empty()).unwrap().len(), 1);
        let x = sample_data(&DataDistribution::standard_normal(2), 7, 2).unwrap();
        let a = assemble_matrix(&f, &x).unwrap();
        let ones = a.block(&VarSubset::empty()).unwrap();
        assert!(ones.col(0).iter().all(|v| *v == c64::new(1.0, 0.0)));
        for k in 0..a.ncols() {
            for j in 0..a.nrows() {
                assert!((a.matrix[(j, k)].norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_entry_is_minus_one() {
        let f = FeatureSet::new(
            2,
            vec![FeatureGroup {
                u: s(&[1]),
                omegas: vec![vec![1.0]],
            }],
        )
        .unwrap();
        let x = Mat::from_fn(1, 2, |_, c| if c == 0 { PI } else { 0.0 });
        let a = assemble_matrix(&f, &x).unwrap();
        assert!((a.matrix[(0, 0)] - c64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!(assemble_matrix(&f, &Mat::zeros(1, 3)).is_err());
    }

    #[test]
    fn zero_frequencies_rejected() {
        let g = FeatureGroup {
            u: s(&[1]),
            omegas: vec![vec![0.0]],
        };
        assert!(FeatureSet::new(1, vec![g]).is_err());
    }

    #[test]
    fn predict_matches_naive_sum() {
        let u = AnovaIndexSet::from_terms(4, [VarSubset::empty(), s(&[2]), s(&[1, 3]), s(&[2, 3, 4])]).unwrap();
        let f = draw_feature_set(&u, 16, &gauss(), None, 3).unwrap();
        let x = sample_data(&DataDistribution::standard_normal(4), 12, 3).unwrap();
        let layout = f.layout();
        let coef: Vec<c64> = (0..layout.total())
            .map(|k| c64::new((k as f64 * 0.7).sin(), (k as f64 * 1.3).cos()))
            .collect();
        let a = CoefficientVector::new(coef.clone(), layout).unwrap();
        let p = predict(&f, &a, &x).unwrap();
        for j in 0..12 {
            let mut naive = c64::new(0.0, 0.0);
            for (k, c) in coef.iter().enumerate() {
                let w = f.full_omega(k).unwrap();
                let phase: f64 = (0..4).map(|i| w[i] * x[(j, i)]).sum();
                naive += c * c64::new(phase.cos(), phase.sin());
            }
            assert!((p[j] - naive.re).abs() < 1e-10);
        }
        let zero = CoefficientVector::zeros(&f.layout());
        assert!(predict(&f, &zero, &x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn json_round_trip() {
        let u = AnovaIndexSet::from_terms(3, [VarSubset::empty(), s(&[1, 3])]).unwrap();
        let f = draw_feature_set(&u, 6, &gauss(), None, 3).unwrap();
        let j = f.to_json();
        assert!(j.starts_with("{\"dimension\":3,\"groups\":[{\"u\":[],"));
        assert_eq!(FeatureSet::from_json(&j).unwrap(), f);
        let a = CoefficientVector::new((0..f.total()).map(|k| c64::new(k as f64, -1.0)).collect(), f.layout()).unwrap();
        let back = CoefficientVector::from_value(a.to_value(), &f.layout()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn sparse_features_have_q_coordinates() {
        let f = draw_sparse_feature_set(10, 2, 200, &gauss(), 4).unwrap();
        assert_eq!(f.total(), 200);
        assert!(f.groups().iter().all(|g| g.u.len() == 2));
    }
}
