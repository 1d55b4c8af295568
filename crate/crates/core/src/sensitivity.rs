//! Monte-Carlo ANOVA terms and Sobol-type sensitivity indices of a fitted
//! random Fourier feature model.

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{CoefficientVector, FeatureMatrix, FeatureSet};
use crate::index_sets::VarSubset;
use crate::solvers::block_apply;
use crate::stats;

/// Monte-Carlo ANOVA term `g_v` of the block `u`, evaluated at `eval_points`.
///
/// Each integral over `x_{u\v}` is replaced by an average over the sample
/// points. Expanding the product over `v` gives
/// `g_v(x) = Σ_k a_k Σ_{S⊆v} (−1)^{|v\S|} m_k(u\S) Π_{i∈S} e^{i x_i ω_{k,i}}`
/// with `m_k(T) = (1/M) Σ_j Π_{i∈T} e^{i x^{(j)}_i ω_{k,i}}`, which costs
/// `O(2^{|v|}·n_u·(M + M_eval))` instead of a double loop over samples.
pub fn mc_anova_term(
    features: &FeatureSet,
    coef: &CoefficientVector,
    samples: &Mat<f64>,
    u: &VarSubset,
    v: &VarSubset,
    eval_points: &Mat<f64>,
) -> Result<Vec<c64>> {
    if !v.is_subset_of(u) {
        return Err(Error::invalid(format!("{v} is not a subset of {u}")));
    }
    if samples.nrows() == 0 {
        return Err(Error::invalid("sample set is empty"));
    }
    if coef.layout != features.layout() {
        return Err(Error::invalid("coefficient blocks do not match the feature set"));
    }
    let d = features.dimension();
    if samples.ncols() != d || eval_points.ncols() != d {
        return Err(Error::invalid("point dimension does not match the features"));
    }
    let n_eval = eval_points.nrows();
    let mut out = vec![c64::new(0.0, 0.0); n_eval];
    let (Some(group), Some(a_u)) = (features.group(u), coef.block(u)) else {
        return Ok(out);
    };
    let members = u.members();
    let k_u = members.len();
    // Positions (within u) of the members of v.
    let v_pos: Vec<usize> = v.members().iter().map(|&i| u.position(i).expect("v ⊆ u")).collect();
    let k_v = v_pos.len();
    let rest_pos: Vec<usize> = (0..k_u).filter(|p| !v_pos.contains(p)).collect();
    let m = samples.nrows() as f64;
    let mut e = vec![c64::new(0.0, 0.0); k_u];
    let mut moments = vec![c64::new(0.0, 0.0); 1 << k_v];

    for (w, &ak) in group.omegas.iter().zip(a_u) {
        if ak.re == 0.0 && ak.im == 0.0 {
            continue;
        }
        moments.iter_mut().for_each(|z| *z = c64::new(0.0, 0.0));
        for j in 0..samples.nrows() {
            for (p, (&i, &wi)) in members.iter().zip(w).enumerate() {
                e[p] = c64::cis(wi * samples[(j, i)]);
            }
            let rest: c64 = rest_pos.iter().map(|&p| e[p]).product();
            // m(u\S) = rest · Π_{i ∈ v\S} e_i for every S ⊆ v (bitmask over v).
            for (mask, mom) in moments.iter_mut().enumerate() {
                let mut z = rest;
                for (b, &p) in v_pos.iter().enumerate() {
                    if mask & (1 << b) == 0 {
                        z *= e[p];
                    }
                }
                *mom += z;
            }
        }
        for mom in moments.iter_mut() {
            *mom /= m;
        }
        for (t, o) in out.iter_mut().enumerate() {
            let ex: Vec<c64> = v_pos
                .iter()
                .map(|&p| c64::cis(w[p] * eval_points[(t, members[p])]))
                .collect();
            let mut s = c64::new(0.0, 0.0);
            for (mask, mom) in moments.iter().enumerate() {
                let mut z = *mom;
                let mut outside = 0;
                for (b, x) in ex.iter().enumerate() {
                    if mask & (1 << b) != 0 {
                        z *= x;
                    } else {
                        outside += 1;
                    }
                }
                if outside % 2 == 1 {
                    z = -z;
                }
                s += z;
            }
            *o += ak * s;
        }
    }
    Ok(out)
}

/// Normalized variance `(1/M_eval) Σ_x |g_u(x)|² / denom` of the top ANOVA
/// term of block `u`. `eval_points` defaults to the samples.
pub fn mc_variance(
    features: &FeatureSet,
    coef: &CoefficientVector,
    samples: &Mat<f64>,
    u: &VarSubset,
    denom: f64,
    eval_points: Option<&Mat<f64>>,
) -> Result<f64> {
    if samples.nrows() < 2 {
        return Err(Error::invalid("variance needs at least two samples"));
    }
    let eval = eval_points.unwrap_or(samples);
    if eval.nrows() == 0 {
        return Err(Error::invalid("no evaluation points"));
    }
    let g = mc_anova_term(features, coef, samples, u, u, eval)?;
    let ms = g.iter().map(|z| z.norm_sqr()).sum::<f64>() / g.len() as f64;
    if denom > 0.0 {
        Ok(ms / denom)
    } else {
        Ok(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub u: VarSubset,
    pub s_var: f64,
    pub s_cor: f64,
    pub s_total: f64,
    pub normalized_s_var: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub entries: Vec<SensitivityEntry>,
    /// Sample variance of the labels.
    pub variance: f64,
    /// `Σ_u S_var` used for the normalized column.
    pub normalizer: f64,
    pub m: usize,
    pub n: usize,
    pub seed: Option<u64>,
}

impl SensitivityReport {
    fn from_raw(raw: Vec<(VarSubset, f64, f64)>, variance: f64, m: usize, n: usize) -> Self {
        let normalizer: f64 = raw.iter().map(|r| r.1).sum();
        let entries = raw
            .into_iter()
            .map(|(u, s_var, s_cor)| SensitivityEntry {
                u,
                s_var,
                s_cor,
                s_total: s_var + s_cor,
                normalized_s_var: if normalizer > 0.0 { s_var / normalizer } else { 0.0 },
            })
            .collect();
        SensitivityReport {
            entries,
            variance,
            normalizer,
            m,
            n,
            seed: None,
        }
    }

    pub fn get(&self, u: &VarSubset) -> Option<&SensitivityEntry> {
        self.entries.iter().find(|e| &e.u == u)
    }

    /// CSV with header `u,s_var,s_cor,s_total,normalized_s_var`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["u", "s_var", "s_cor", "s_total", "normalized_s_var"])?;
        for e in &self.entries {
            w.write_record([
                e.u.to_string(),
                e.s_var.to_string(),
                e.s_cor.to_string(),
                e.s_total.to_string(),
                e.normalized_s_var.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Independent-input indices: `mc_variance` for every nonempty group, with
/// `σ²(f)` estimated by the unbiased label variance. `S_cor` is zero.
pub fn sobol_indices_independent(
    features: &FeatureSet,
    coef: &CoefficientVector,
    samples: &Mat<f64>,
    labels: &[f64],
    eval_points: Option<&Mat<f64>>,
) -> Result<SensitivityReport> {
    if labels.len() != samples.nrows() {
        return Err(Error::invalid("label length does not match the samples"));
    }
    let variance = stats::sample_variance(labels)?;
    let mut raw = Vec::new();
    for g in features.groups() {
        if g.u.is_empty() {
            continue;
        }
        let s = mc_variance(features, coef, samples, &g.u, variance, eval_points)?;
        raw.push((g.u.clone(), s, 0.0));
    }
    Ok(SensitivityReport::from_raw(
        raw,
        variance,
        samples.nrows(),
        features.total(),
    ))
}

/// Dependent-input indices `S_var = ‖A_u a_u‖²/(M σ²)` and
/// `S_cor = Σ_{v≠∅, v∩u≠∅, v⊄u} Re⟨A_v a_v, A_u a_u⟩/(M σ²)`.
pub fn sobol_indices_dependent(
    a: &FeatureMatrix,
    coef: &CoefficientVector,
    labels: &[f64],
) -> Result<SensitivityReport> {
    if a.layout != coef.layout {
        return Err(Error::invalid("coefficient blocks do not match the feature matrix"));
    }
    if labels.len() != a.nrows() {
        return Err(Error::invalid("label length does not match the matrix"));
    }
    let variance = stats::sample_variance(labels)?;
    if variance <= 0.0 {
        return Err(Error::InvalidState("labels have zero variance".into()));
    }
    let m = a.nrows() as f64;
    let parts: Vec<(VarSubset, Vec<c64>)> = a
        .layout
        .iter()
        .filter(|(u, _)| !u.is_empty())
        .map(|(u, _)| (u.clone(), block_apply(a, coef, u).expect("block exists")))
        .collect();
    let raw = parts
        .iter()
        .map(|(u, fu)| {
            let s_var = fu.iter().map(|z| z.norm_sqr()).sum::<f64>() / m / variance;
            let s_cor = parts
                .iter()
                .filter(|(v, _)| v.intersects(u) && !v.is_subset_of(u))
                .map(|(_, fv)| fv.iter().zip(fu).map(|(x, y)| (x * y.conj()).re).sum::<f64>())
                .sum::<f64>()
                / m
                / variance;
            (u.clone(), s_var, s_cor)
        })
        .collect();
    Ok(SensitivityReport::from_raw(raw, variance, a.nrows(), a.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{assemble_matrix, draw_feature_set, predict, FeatureGroup};
    use crate::index_sets::AnovaIndexSet;
    use crate::sampling::{sample_data, DataDistribution, FeatureDensity};

    fn s(v: &[usize]) -> VarSubset {
        VarSubset::from_one_based(v).unwrap()
    }

    fn instance(seed: u64) -> (FeatureSet, CoefficientVector, Mat<f64>) {
        let u = AnovaIndexSet::from_terms(4, [s(&[1]), s(&[2, 4]), s(&[1, 3, 4])]).unwrap();
        let f = draw_feature_set(&u, 12, &FeatureDensity::Gaussian { sigma: 1.0 }, None, seed).unwrap();
        let x = sample_data(&DataDistribution::standard_normal(4), 6, seed).unwrap();
        let coef = CoefficientVector::new(
            (0..f.total())
                .map(|k| c64::new((k as f64 + 1.0).sin(), (k as f64 * 0.3).cos()))
                .collect(),
            f.layout(),
        )
        .unwrap();
        (f, coef, x)
    }

    #[test]
    fn telescoping_sum_equals_block_prediction() {
        let (f, coef, x) = instance(1);
        let eval = sample_data(&DataDistribution::standard_normal(4), 9, 2).unwrap();
        for u in [s(&[1]), s(&[2, 4]), s(&[1, 3, 4])] {
            let mut total = [c64::new(0.0, 0.0); 9];
            for v in u.subsets() {
                let g = mc_anova_term(&f, &coef, &x, &u, &v, &eval).unwrap();
                total.iter_mut().zip(&g).for_each(|(t, gi)| *t += gi);
            }
            let group = f.group(&u).unwrap();
            let a_u = coef.block(&u).unwrap();
            for (t, sum) in total.iter().enumerate() {
                let row: Vec<f64> = eval.row(t).iter().copied().collect();
                let direct: c64 = (0..group.len()).map(|k| a_u[k] * c64::cis(group.phase(k, &row))).sum();
                assert!((sum - direct).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn empty_v_is_the_sample_mean() {
        let (f, coef, x) = instance(3);
        let u = s(&[2, 4]);
        let g = mc_anova_term(&f, &coef, &x, &u, &VarSubset::empty(), &x).unwrap();
        let only_u = FeatureSet::new(4, vec![f.group(&u).unwrap().clone()]).unwrap();
        let c = CoefficientVector::new(coef.block(&u).unwrap().to_vec(), only_u.layout()).unwrap();
        let x_c = x.clone();
        let layout_pred: Vec<c64> = (0..x.nrows())
            .map(|j| {
                let row: Vec<f64> = x_c.row(j).iter().copied().collect();
                let grp = only_u.group(&u).unwrap();
                (0..grp.len()).map(|k| c.values[k] * c64::cis(grp.phase(k, &row))).sum()
            })
            .collect();
        let mean: c64 = layout_pred.iter().sum::<c64>() / x.nrows() as f64;
        assert!(g.iter().all(|z| (z - mean).norm() < 1e-12));
    }

    #[test]
    fn single_feature_single_sample_hand_expansion() {
        let f = FeatureSet::new(
            1,
            vec![FeatureGroup {
                u: s(&[1]),
                omegas: vec![vec![0.7]],
            }],
        )
        .unwrap();
        let coef = CoefficientVector::new(vec![c64::new(2.0, -1.0)], f.layout()).unwrap();
        let x = Mat::from_fn(1, 1, |_, _| 0.4);
        let eval = Mat::from_fn(1, 1, |_, _| -1.1);
        let g = mc_anova_term(&f, &coef, &x, &s(&[1]), &s(&[1]), &eval).unwrap();
        let expect = c64::new(2.0, -1.0) * (c64::cis(0.7 * -1.1) - c64::cis(0.7 * 0.4));
        assert!((g[0] - expect).norm() < 1e-15);
    }

    #[test]
    fn non_subset_rejected() {
        let (f, coef, x) = instance(4);
        assert!(mc_anova_term(&f, &coef, &x, &s(&[1]), &s(&[2]), &x).is_err());
    }

    #[test]
    fn variance_is_mean_square_of_top_term() {
        let (f, coef, x) = instance(5);
        let u = s(&[1, 3, 4]);
        let g = mc_anova_term(&f, &coef, &x, &u, &u, &x).unwrap();
        let ms = g.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.nrows() as f64;
        let v = mc_variance(&f, &coef, &x, &u, 2.0, None).unwrap();
        assert!((v - ms / 2.0).abs() < 1e-15);
        assert_eq!(mc_variance(&f, &coef, &x, &s(&[3]), 1.0, None).unwrap(), 0.0);
        let zero = CoefficientVector::zeros(&f.layout());
        assert_eq!(mc_variance(&f, &zero, &x, &u, 1.0, None).unwrap(), 0.0);
        let one = Mat::<f64>::zeros(1, 4);
        assert!(mc_variance(&f, &coef, &one, &u, 1.0, None).is_err());
    }

    #[test]
    fn dependent_indices_zero_for_zero_model() {
        let (f, _, x) = instance(6);
        let a = assemble_matrix(&f, &x).unwrap();
        let zero = CoefficientVector::zeros(&f.layout());
        let y = [1.0, 2.0, 0.0, 4.0, 3.0, 1.0];
        let r = sobol_indices_dependent(&a, &zero, &y).unwrap();
        assert!(r.entries.iter().all(|e| e.s_var == 0.0 && e.s_cor == 0.0));
        assert!(matches!(
            sobol_indices_dependent(&a, &zero, &[1.0; 6]),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn dependent_totals_and_csv() {
        let (f, coef, x) = instance(7);
        let a = assemble_matrix(&f, &x).unwrap();
        let y = predict(&f, &coef, &x).unwrap();
        let r = sobol_indices_dependent(&a, &coef, &y).unwrap();
        for e in &r.entries {
            assert_eq!(e.s_total, e.s_var + e.s_cor);
            assert!(e.s_var >= 0.0);
        }
        let norm_sum: f64 = r.entries.iter().map(|e| e.normalized_s_var).sum();
        assert!((norm_sum - 1.0).abs() < 1e-12);
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("u,s_var,s_cor,s_total,normalized_s_var\n{1},"));
        assert!(csv.contains("\"{2,4}\","));
    }
}
