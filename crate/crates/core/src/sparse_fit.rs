//! Sparse random feature fitters: iterative magnitude pruning with
//! validation selection (SHRIMP) and hard thresholding pursuit (HARFE).

use faer::{c64, Col, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{assemble_matrix, predict, CoefficientVector, FeatureSet};
use crate::sampling::SampleSet;
use crate::solvers::{col_to_vec, ridge_auto_matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneSchedule {
    /// Fraction of the surviving features kept in each round.
    pub keep: f64,
    pub min_features: usize,
    pub max_rounds: usize,
}

impl Default for PruneSchedule {
    fn default() -> Self {
        PruneSchedule {
            keep: 0.5,
            min_features: 4,
            max_rounds: 20,
        }
    }
}

impl PruneSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep > 0.0 && self.keep < 1.0) {
            return Err(Error::invalid("keep fraction must lie in (0, 1)"));
        }
        if self.min_features == 0 {
            return Err(Error::invalid("at least one feature must survive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub features: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug)]
pub struct ShrimpFit {
    /// Full-length coefficients, zero outside the selected support.
    pub coefficients: CoefficientVector,
    pub kept: Vec<bool>,
    pub val_mse: f64,
    pub path: Vec<PathPoint>,
    /// Index into `path` of the selected model.
    pub selected: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HtpConfig {
    pub s: usize,
    /// Gradient step; `1/‖A‖²` estimated by power iteration when `None`.
    pub eta: Option<f64>,
    pub lambda: f64,
    pub max_iter: usize,
    pub stop_on_stable_support: bool,
}

impl HtpConfig {
    pub fn new(s: usize, lambda: f64) -> Self {
        HtpConfig {
            s,
            eta: None,
            lambda,
            max_iter: 500,
            stop_on_stable_support: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HarfeFit {
    pub coefficients: CoefficientVector,
    /// Sorted column indices of the final support.
    pub support: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

/// Mean of `(Re f^#(x) − y)²` over the sample set.
pub fn mse(features: &FeatureSet, coef: &CoefficientVector, x: &SampleSet) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::invalid("sample set is empty"));
    }
    let pred = predict(features, coef, x.points())?;
    Ok(mse_of(&pred, x.labels()))
}

fn mse_of(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

fn subcols(a: &Mat<c64>, cols: &[usize]) -> Mat<c64> {
    Mat::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

fn real_predictions(a: &Mat<c64>, coef: &[c64]) -> Vec<f64> {
    let x = Col::from_fn(coef.len(), |i| coef[i]);
    let y = a * &x;
    y.iter().map(|z| z.re).collect()
}

fn complex_labels(y: &[f64]) -> Vec<c64> {
    y.iter().map(|&v| c64::new(v, 0.0)).collect()
}

/// Indices of the `k` largest moduli; equal moduli keep the lower index.
fn top_k(values: &[c64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].norm().total_cmp(&values[i].norm()).then(i.cmp(&j)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Splits a training set 80/20 into fitting and validation parts.
pub fn validation_split(x: &SampleSet, seed: u64) -> Result<(SampleSet, SampleSet)> {
    x.split(0.8, seed)
}

/// Iterative magnitude pruning on a fixed feature matrix pair.
pub fn fit_shrimp_on_matrix(
    a_train: &Mat<c64>,
    y_train: &[f64],
    a_val: &Mat<c64>,
    y_val: &[f64],
    lambda: f64,
    schedule: &PruneSchedule,
) -> Result<(Vec<c64>, Vec<PathPoint>, usize)> {
    schedule.validate()?;
    let n = a_train.ncols();
    if n == 0 || y_train.is_empty() || y_val.is_empty() {
        return Err(Error::invalid(
            "SHRIMP needs features and nonempty train and validation sets",
        ));
    }
    if a_val.ncols() != n {
        return Err(Error::invalid("train and validation matrices differ in width"));
    }
    let f = complex_labels(y_train);
    let mut active: Vec<usize> = (0..n).collect();
    let mut path = Vec::new();
    let mut best: Option<(f64, usize, Vec<c64>)> = None;
    for round in 0..=schedule.max_rounds {
        let at = subcols(a_train, &active);
        let coef = ridge_auto_matrix(&at, &f, lambda)?;
        let train_mse = mse_of(&real_predictions(&at, &coef), y_train);
        let val_mse = mse_of(&real_predictions(&subcols(a_val, &active), &coef), y_val);
        if !(train_mse.is_finite() && val_mse.is_finite()) {
            return Err(Error::solver("ridge solve produced non-finite predictions", None));
        }
        path.push(PathPoint {
            features: active.len(),
            train_mse,
            val_mse,
        });
        if best.as_ref().is_none_or(|b| val_mse < b.0) {
            let mut full = vec![c64::new(0.0, 0.0); n];
            for (&k, &c) in active.iter().zip(&coef) {
                full[k] = c;
            }
            best = Some((val_mse, round, full));
        }
        if active.len() <= schedule.min_features || round == schedule.max_rounds {
            break;
        }
        let target = ((schedule.keep * active.len() as f64).ceil() as usize)
            .min(active.len() - 1)
            .max(schedule.min_features);
        active = top_k(&coef, target).into_iter().map(|i| active[i]).collect();
    }
    let (_, selected, coef) = best.expect("at least one round");
    Ok((coef, path, selected))
}

/// SHRIMP: ridge fit on all features, then repeatedly keep the largest
/// coefficients and refit; returns the model with the smallest validation
/// error along the path.
pub fn fit_shrimp(
    features: &FeatureSet,
    train: &SampleSet,
    val: &SampleSet,
    lambda: f64,
    schedule: &PruneSchedule,
) -> Result<ShrimpFit> {
    let a_train = assemble_matrix(features, train.points())?;
    let a_val = assemble_matrix(features, val.points())?;
    let (coef, path, selected) = fit_shrimp_on_matrix(
        &a_train.matrix,
        train.labels(),
        &a_val.matrix,
        val.labels(),
        lambda,
        schedule,
    )?;
    let kept = coef.iter().map(|c| c.re != 0.0 || c.im != 0.0).collect();
    Ok(ShrimpFit {
        coefficients: CoefficientVector::new(coef, a_train.layout)?,
        kept,
        val_mse: path[selected].val_mse,
        path,
        selected,
    })
}

/// `‖A‖²` by power iteration on `A*A`.
fn operator_norm_sq(a: &Mat<c64>, steps: usize) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = Col::from_fn(n, |i| c64::new(1.0 + (i % 7) as f64 * 0.1, 0.0));
    let mut est = 0.0;
    for _ in 0..steps {
        let norm = v.norm_l2();
        if norm == 0.0 {
            return 0.0;
        }
        v *= faer::Scale(c64::new(1.0 / norm, 0.0));
        let w = a.adjoint() * (a * &v);
        est = w.norm_l2();
        v = w;
    }
    est
}

/// Hard thresholding pursuit on a fixed matrix.
pub fn fit_harfe_on_matrix(a: &Mat<c64>, y: &[f64], cfg: &HtpConfig) -> Result<(Vec<c64>, Vec<usize>, usize, bool)> {
    let n = a.ncols();
    if cfg.s == 0 || cfg.s > n {
        return Err(Error::invalid(format!("sparsity s = {} must lie in 1..={n}", cfg.s)));
    }
    if a.nrows() != y.len() {
        return Err(Error::invalid("label length does not match the matrix"));
    }
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::invalid("λ must be finite and nonnegative"));
    }
    let eta = match cfg.eta {
        Some(e) if e > 0.0 && e.is_finite() => e,
        Some(_) => return Err(Error::invalid("step size must be positive")),
        None => {
            let l = operator_norm_sq(a, 20);
            if l > 0.0 {
                1.0 / l
            } else {
                1.0
            }
        }
    };
    let f = complex_labels(y);
    let fc = Col::from_fn(y.len(), |i| f[i]);
    let mut coef = Col::<c64>::zeros(n);
    let mut support: Vec<usize> = Vec::new();
    let mut best: Option<(f64, Col<c64>, Vec<usize>)> = None;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let r = &fc - a * &coef;
        let grad = a.adjoint() * &r - &coef * faer::Scale(c64::new(cfg.lambda, 0.0));
        let step = &coef + &grad * faer::Scale(c64::new(eta, 0.0));
        let next = top_k(&col_to_vec(&step), cfg.s);
        let sol = ridge_auto_matrix(&subcols(a, &next), &f, cfg.lambda)?;
        coef = Col::zeros(n);
        for (&k, &c) in next.iter().zip(&sol) {
            coef[k] = c;
        }
        let res = (&fc - a * &coef).norm_l2();
        if !res.is_finite() {
            return Err(Error::solver("restricted ridge solve produced non-finite values", None));
        }
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, coef.clone(), next.clone()));
        }
        let stable = next == support;
        support = next;
        if stable && cfg.stop_on_stable_support {
            converged = true;
            break;
        }
    }
    if !converged {
        let (_, c, s) = best.expect("at least one iteration");
        coef = c;
        support = s;
    }
    Ok((col_to_vec(&coef), support, iterations, converged))
}

/// HARFE: hard thresholding pursuit for the `s`-sparse ridge problem
/// `min ‖Aa − f‖² + λ‖a‖²`. Without support stabilization the iterate with
/// the smallest residual is returned.
pub fn fit_harfe(features: &FeatureSet, train: &SampleSet, cfg: &HtpConfig) -> Result<HarfeFit> {
    let a = assemble_matrix(features, train.points())?;
    let (coef, support, iterations, converged) = fit_harfe_on_matrix(&a.matrix, train.labels(), cfg)?;
    let mut diagnostics = Vec::new();
    if !converged && cfg.stop_on_stable_support {
        diagnostics.push(format!(
            "support did not stabilize in {iterations} iterations; returning the best-residual iterate"
        ));
    }
    Ok(HarfeFit {
        coefficients: CoefficientVector::new(coef, a.layout)?,
        support,
        iterations,
        converged,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureGroup, FeatureSet};
    use crate::index_sets::VarSubset;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_features(d: usize, n: usize, seed: u64) -> FeatureSet {
        let mut r = rng::stream(seed, "test", 1);
        let u = VarSubset::new((0..d).collect()).unwrap();
        let omegas = (0..n)
            .map(|_| (0..d).map(|_| r.sample::<f64, _>(StandardNormal) + 0.01).collect())
            .collect();
        FeatureSet::new(d, vec![FeatureGroup { u, omegas }]).unwrap()
    }

    fn points(m: usize, d: usize, seed: u64) -> Mat<f64> {
        let mut r = rng::stream(seed, "test", 2);
        Mat::from_fn(m, d, |_, _| r.sample(StandardNormal))
    }

    #[test]
    fn mse_matches_two_pass_oracle() {
        let f = random_features(3, 8, 1);
        let x = points(40, 3, 2);
        let mut r = rng::stream(3, "test", 3);
        let coef = CoefficientVector::new(
            (0..8)
                .map(|_| c64::new(r.sample(StandardNormal), r.sample(StandardNormal)))
                .collect(),
            f.layout(),
        )
        .unwrap();
        let y: Vec<f64> = (0..40).map(|_| r.sample(StandardNormal)).collect();
        let s = SampleSet::new(x.clone(), y.clone()).unwrap();
        let mut total = 0.0;
        for j in 0..40 {
            let mut p = 0.0;
            for k in 0..8 {
                let w = f.full_omega(k).unwrap();
                let phase: f64 = (0..3).map(|i| w[i] * x[(j, i)]).sum();
                p += (coef.values[k] * c64::cis(phase)).re;
            }
            total += (p - y[j]) * (p - y[j]);
        }
        assert!((mse(&f, &coef, &s).unwrap() - total / 40.0).abs() < 1e-12);
        let zero = CoefficientVector::zeros(&f.layout());
        let mean_sq = y.iter().map(|v| v * v).sum::<f64>() / 40.0;
        assert!((mse(&f, &zero, &s).unwrap() - mean_sq).abs() < 1e-12);
    }

    #[test]
    fn shrimp_path_and_selection() {
        let f = random_features(2, 40, 4);
        let x = points(100, 2, 5);
        let y: Vec<f64> = (0..100).map(|j| (x[(j, 0)] * x[(j, 1)]).sin()).collect();
        let all = SampleSet::new(x, y).unwrap();
        let (train, val) = validation_split(&all, 1).unwrap();
        let fit = fit_shrimp(&f, &train, &val, 1e-6, &PruneSchedule::default()).unwrap();
        let min = fit.path.iter().map(|p| p.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(fit.val_mse, min);
        assert!(fit.path.windows(2).all(|w| w[1].features < w[0].features));
        assert_eq!(fit.coefficients.nnz(), fit.path[fit.selected].features);
        let again = mse(&f, &fit.coefficients, &val).unwrap();
        assert!((again - fit.val_mse).abs() < 1e-12);
    }

    #[test]
    fn shrimp_finds_planted_model() {
        // Frequencies come in ± pairs so a real signal has an exact sparse
        // complex representation.
        let half = random_features(2, 25, 6);
        let g = &half.groups()[0];
        let mut omegas = g.omegas.clone();
        omegas.extend(g.omegas.iter().map(|w| w.iter().map(|v| -v).collect::<Vec<_>>()));
        let u = g.u.clone();
        let f = FeatureSet::new(2, vec![FeatureGroup { u, omegas }]).unwrap();
        let x = points(200, 2, 7);
        let mut v = vec![c64::new(0.0, 0.0); 50];
        for (k, a) in [(3, c64::new(1.0, 0.5)), (17, c64::new(2.0, -0.5))] {
            v[k] = a;
            v[k + 25] = a.conj();
        }
        let coef = CoefficientVector::new(v, f.layout()).unwrap();
        let y = predict(&f, &coef, &x).unwrap();
        let all = SampleSet::new(x, y).unwrap();
        let (train, val) = validation_split(&all, 2).unwrap();
        let fit = fit_shrimp(&f, &train, &val, 1e-10, &PruneSchedule::default()).unwrap();
        let last = fit.path.last().unwrap();
        assert_eq!(last.features, 4);
        assert!(last.val_mse <= 1e-6);
        assert!(fit.val_mse <= 1e-6);
        assert!([3, 17, 28, 42].iter().all(|&k| fit.kept[k]));
    }

    #[test]
    fn harfe_exact_recovery_with_orthonormal_columns() {
        let m = 32;
        let n = 16;
        // Columns of the unitary DFT matrix are orthonormal.
        let a = Mat::from_fn(m, n, |j, k| {
            c64::cis(2.0 * std::f64::consts::PI * (j * k) as f64 / m as f64) * (1.0 / (m as f64).sqrt())
        });
        let mut truth = vec![c64::new(0.0, 0.0); n];
        truth[2] = c64::new(3.0, 0.0);
        truth[9] = c64::new(-1.5, 0.0);
        truth[0] = c64::new(0.7, 0.0);
        let col = Col::from_fn(n, |i| truth[i]);
        // Labels are real, so the least-squares target is the projection A*y.
        let y: Vec<f64> = (&a * &col).iter().map(|z| z.re).collect();
        let target: Vec<c64> = {
            let yr = Col::from_fn(m, |i| c64::new(y[i], 0.0));
            col_to_vec(&(a.adjoint() * &yr))
        };
        let s = target.iter().filter(|z| z.norm() > 1e-9).count();
        let cfg = HtpConfig {
            s,
            eta: Some(1.0),
            lambda: 0.0,
            max_iter: 10,
            stop_on_stable_support: true,
        };
        let (coef, support, iterations, converged) = fit_harfe_on_matrix(&a, &y, &cfg).unwrap();
        assert!(converged);
        assert!(iterations <= 2);
        assert_eq!(support.len(), s);
        for (c, t) in coef.iter().zip(&target) {
            assert!((c - t).norm() < 1e-10);
        }
    }

    #[test]
    fn harfe_zero_labels_give_zero_model() {
        let f = random_features(2, 20, 8);
        let x = points(30, 2, 9);
        let s = SampleSet::new(x, vec![0.0; 30]).unwrap();
        let fit = fit_harfe(&f, &s, &HtpConfig::new(5, 1e-6)).unwrap();
        assert!(fit.coefficients.values.iter().all(|c| c.norm() == 0.0));
        assert!(fit.support.len() <= 5);
    }

    #[test]
    fn harfe_final_support_solves_restricted_normal_equations() {
        let f = random_features(3, 60, 10);
        let x = points(80, 3, 11);
        let y: Vec<f64> = (0..80).map(|j| x[(j, 0)].cos() + x[(j, 2)]).collect();
        let s = SampleSet::new(x.clone(), y.clone()).unwrap();
        let lambda = 1e-3;
        let fit = fit_harfe(&f, &s, &HtpConfig::new(12, lambda)).unwrap();
        assert!(fit.support.len() <= 12);
        let a = assemble_matrix(&f, &x).unwrap().matrix;
        let sub = subcols(&a, &fit.support);
        let cs = Col::from_fn(fit.support.len(), |i| fit.coefficients.values[fit.support[i]]);
        let yc = Col::from_fn(80, |i| c64::new(y[i], 0.0));
        let lhs = sub.adjoint() * (&sub * &cs) + &cs * faer::Scale(c64::new(lambda, 0.0));
        let rhs = sub.adjoint() * &yc;
        assert!((&lhs - &rhs).norm_l2() / rhs.norm_l2() < 1e-8);
    }

    #[test]
    fn harfe_rejects_oversized_sparsity() {
        let f = random_features(2, 5, 12);
        let s = SampleSet::new(points(10, 2, 13), vec![1.0; 10]).unwrap();
        assert!(fit_harfe(&f, &s, &HtpConfig::new(6, 0.0)).is_err());
    }

    #[test]
    fn top_k_breaks_ties_by_index() {
        let v = vec![
            c64::new(1.0, 0.0),
            c64::new(0.0, 2.0),
            c64::new(-1.0, 0.0),
            c64::new(0.0, -1.0),
        ];
        assert_eq!(top_k(&v, 2), vec![0, 1]);
        assert_eq!(top_k(&v, 3), vec![0, 1, 2]);
    }
}
