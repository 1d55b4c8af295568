//! Ground truth for the estimators: exact ANOVA decompositions of tensor
//! products, nested Monte-Carlo Sobol shares for independent inputs, closed
//! forms for the benchmark functions and a literal re-implementation of the
//! Monte-Carlo ANOVA term.

use std::cell::RefCell;
use std::f64::consts::PI;

use faer::{c64, Mat};
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{CoefficientVector, FeatureSet};
use crate::index_sets::VarSubset;
use crate::quadrature;
use crate::rng;
use crate::sampling::{tensor2d_g1, tensor2d_g2, DataDistribution, Marginal};
use crate::stats;

/// `f(x₁, x₂) = g₁(x₁)·g₂(x₂)` under a product of identical marginals.
#[derive(Clone, Copy, Debug)]
pub struct TensorFixture {
    pub g1: fn(f64) -> f64,
    pub g2: fn(f64) -> f64,
    pub marginal: Marginal,
    /// Points where `g₁` or `g₂` is not smooth.
    pub kinks: &'static [f64],
}

impl TensorFixture {
    /// `|x₁|/(1+x₁²)² · max(1−|x₂|, 0)`.
    pub fn kink_example(marginal: Marginal) -> Self {
        TensorFixture {
            g1: tensor2d_g1,
            g2: tensor2d_g2,
            marginal,
            kinks: &[-1.0, 0.0, 1.0],
        }
    }
}

/// Exact decomposition `f = f_∅ + f₁ + f₂ + f₁₂` of a two-factor product.
#[derive(Clone, Copy, Debug)]
pub struct TensorAnova {
    pub fixture: TensorFixture,
    pub f_empty: f64,
    pub gbar1: f64,
    pub gbar2: f64,
}

impl TensorAnova {
    pub fn f1(&self, x1: f64) -> f64 {
        ((self.fixture.g1)(x1) - self.gbar1) * self.gbar2
    }

    pub fn f2(&self, x2: f64) -> f64 {
        self.gbar1 * ((self.fixture.g2)(x2) - self.gbar2)
    }

    pub fn f12(&self, x1: f64, x2: f64) -> f64 {
        ((self.fixture.g1)(x1) - self.gbar1) * ((self.fixture.g2)(x2) - self.gbar2)
    }

    /// `∫∫ a(x₁,x₂) b(x₁,x₂) dμ` by nested quadrature.
    pub fn inner_product(&self, a: impl Fn(f64, f64) -> f64, b: impl Fn(f64, f64) -> f64, tol: f64) -> Result<f64> {
        let mu = self.fixture.marginal;
        let kinks = self.fixture.kinks;
        let failure = RefCell::new(None);
        let outer = mu.expectation(
            |x1| match mu.expectation(|x2| a(x1, x2) * b(x1, x2), kinks, tol) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            kinks,
            tol,
        )?;
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(outer),
        }
    }
}

pub fn exact_anova_tensor2(fixture: &TensorFixture) -> Result<TensorAnova> {
    fixture.marginal.validate()?;
    let tol = 1e-11;
    let gbar1 = fixture.marginal.expectation(fixture.g1, fixture.kinks, tol)?;
    let gbar2 = fixture.marginal.expectation(fixture.g2, fixture.kinks, tol)?;
    Ok(TensorAnova {
        fixture: *fixture,
        f_empty: gbar1 * gbar2,
        gbar1,
        gbar2,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleShare {
    pub u: VarSubset,
    pub share: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub shares: Vec<OracleShare>,
    /// Estimated `σ²(f)`.
    pub variance: f64,
}

impl OracleReport {
    pub fn share(&self, u: &VarSubset) -> Option<&OracleShare> {
        self.shares.iter().find(|s| &s.u == u)
    }

    /// CSV with header `u,share,stderr`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["u", "share", "stderr"])?;
        for s in &self.shares {
            w.write_record([s.u.to_string(), s.share.to_string(), s.stderr.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

const BATCHES: usize = 10;

/// Nested Monte-Carlo Sobol shares `σ²(f_u)/σ²(f)` for product inputs.
///
/// For each `u` over the subsets of `active`, the closed variance
/// `Var(E[f | x_u])` is estimated from `m_outer` outer draws of `x_u`, each
/// with `n_inner` draws of the remaining coordinates; the inner sampling
/// noise `s²/n_inner` is subtracted. Möbius inversion gives the ANOVA
/// variances. The outer draws are split into ten batches and the spread of
/// the batch results gives the standard errors.
pub fn oracle_sobol_independent(
    f: &dyn Fn(&[f64]) -> f64,
    dist: &DataDistribution,
    active: &[usize],
    m_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<OracleReport> {
    let marginals = dist
        .independent_marginals()
        .ok_or_else(|| Error::Unsupported("oracle needs independent inputs".into()))?;
    let d = marginals.len();
    if active.is_empty() || active.iter().any(|&i| i >= d) {
        return Err(Error::invalid("active variables must lie within the dimension"));
    }
    if m_outer < 2 * BATCHES || n_inner < 2 {
        return Err(Error::invalid("oracle needs m_outer ≥ 20 and n_inner ≥ 2"));
    }
    let all = VarSubset::new(active.to_vec())?;
    let subsets: Vec<VarSubset> = all.subsets().into_iter().filter(|s| !s.is_empty()).collect();
    let per_batch = m_outer / BATCHES;

    // closed[b][k]: closed variance of subsets[k] in batch b.
    let mut closed = vec![vec![0.0; subsets.len()]; BATCHES];
    let mut total = vec![0.0; BATCHES];
    let mut x = vec![0.0; d];
    for (k, u) in subsets.iter().enumerate() {
        let full = u == &all;
        let inner = if full { 1 } else { n_inner };
        for b in 0..BATCHES {
            let mut r = rng::stream(seed, &format!("oracle/{u}"), b as u64);
            let mut means = Vec::with_capacity(per_batch);
            let mut noise = 0.0;
            let mut vals = vec![0.0; inner];
            for _ in 0..per_batch {
                for &i in u.members() {
                    x[i] = marginals[i].sample(&mut r);
                }
                for v in vals.iter_mut() {
                    for i in (0..d).filter(|i| !u.contains(*i)) {
                        x[i] = marginals[i].sample(&mut r);
                    }
                    *v = f(&x);
                }
                means.push(stats::mean(&vals));
                if inner > 1 {
                    noise += stats::sample_variance(&vals)? / inner as f64;
                }
            }
            let v = stats::sample_variance(&means)? - noise / per_batch as f64;
            closed[b][k] = v;
            if full {
                total[b] = v;
            }
        }
    }

    let mut shares = Vec::with_capacity(subsets.len());
    for u in &subsets {
        let per: Vec<f64> = (0..BATCHES)
            .map(|b| {
                let anova: f64 = subsets
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.is_subset_of(u))
                    .map(|(j, v)| {
                        let sign = if (u.len() - v.len()) % 2 == 0 { 1.0 } else { -1.0 };
                        sign * closed[b][j]
                    })
                    .sum();
                if total[b] > 0.0 {
                    anova / total[b]
                } else {
                    0.0
                }
            })
            .collect();
        let share = stats::mean(&per);
        let stderr = (stats::sample_variance(&per)? / BATCHES as f64).sqrt();
        shares.push(OracleShare {
            u: u.clone(),
            share,
            stderr,
        });
    }
    Ok(OracleReport {
        shares,
        variance: stats::mean(&total),
    })
}

/// Closed-form shares of `x₄² + x₂x₃ + x₁x₂ + x₄` under the standard
/// Gaussian: `f_{4} = x₄² − 1 + x₄` (variance 3), `f_{2,3} = x₂x₃` and
/// `f_{1,2} = x₁x₂` (variance 1 each).
pub fn ft1_gaussian_shares() -> Vec<(VarSubset, f64)> {
    vec![
        (VarSubset::singleton(3), 0.6),
        (VarSubset::new(vec![0, 1]).expect("distinct"), 0.2),
        (VarSubset::new(vec![1, 2]).expect("distinct"), 0.2),
    ]
}

/// Shares of `10 sin(π x₁x₂) + 20(x₃−½)² + 10x₄ + 5x₅` under uniform `[0,1]`
/// inputs, from one- and two-dimensional quadrature.
pub fn ft3_uniform_shares() -> Result<Vec<(VarSubset, f64)>> {
    let tol = 1e-12;
    // h(x₁) = E[10 sin(π x₁ x₂) | x₁] = 10 (1 − cos(π x₁)) / (π x₁).
    let h = |t: f64| {
        if t == 0.0 {
            0.0
        } else {
            10.0 * (1.0 - (PI * t).cos()) / (PI * t)
        }
    };
    let mean_g = quadrature::integrate(h, 0.0, 1.0, tol, 0.0)?.value;
    let closed1 = quadrature::integrate(|t| h(t) * h(t), 0.0, 1.0, tol, 0.0)?.value - mean_g * mean_g;
    let mut failure = None;
    let second = quadrature::integrate(
        |a| match quadrature::integrate(|b| (10.0 * (PI * a * b).sin()).powi(2), 0.0, 1.0, tol, 0.0) {
            Ok(v) => v.value,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        0.0,
        1.0,
        tol,
        0.0,
    )?
    .value;
    if let Some(e) = failure {
        return Err(e);
    }
    let var_g = second - mean_g * mean_g;
    let v1 = closed1;
    let v12 = var_g - 2.0 * closed1;
    let v3 = 400.0 / 180.0;
    let v4 = 100.0 / 12.0;
    let v5 = 25.0 / 12.0;
    let total = var_g + v3 + v4 + v5;
    let s = |m: &[usize]| VarSubset::new(m.to_vec()).expect("distinct");
    Ok(vec![
        (s(&[0]), v1 / total),
        (s(&[1]), v1 / total),
        (s(&[2]), v3 / total),
        (s(&[3]), v4 / total),
        (s(&[4]), v5 / total),
        (s(&[0, 1]), v12 / total),
    ])
}

/// Literal evaluation of the Monte-Carlo ANOVA term by explicit loops over
/// frequencies and sample points. Restricted to tiny instances.
pub fn brute_force_mc_terms(
    features: &FeatureSet,
    coef: &CoefficientVector,
    samples: &Mat<f64>,
    u: &VarSubset,
    v: &VarSubset,
    eval_points: &Mat<f64>,
) -> Result<Vec<c64>> {
    if samples.nrows() > 10 || features.total() > 10 || u.len() > 3 {
        return Err(Error::invalid("brute force is limited to M, N ≤ 10 and |u| ≤ 3"));
    }
    if !v.is_subset_of(u) {
        return Err(Error::invalid(format!("{v} is not a subset of {u}")));
    }
    let rest = u.difference(v);
    let m = samples.nrows() as f64;
    let mut out = Vec::with_capacity(eval_points.nrows());
    for t in 0..eval_points.nrows() {
        let mut total = c64::new(0.0, 0.0);
        let Some(range) = features.layout().range(u) else {
            out.push(total);
            continue;
        };
        for k in range {
            let w = features.full_omega(k).expect("column in range");
            let mut inner = c64::new(0.0, 0.0);
            for j in 0..samples.nrows() {
                let phase: f64 = rest.members().iter().map(|&i| w[i] * samples[(j, i)]).sum();
                let mut prod = c64::cis(phase);
                for &i in v.members() {
                    prod *= c64::cis(eval_points[(t, i)] * w[i]) - c64::cis(samples[(j, i)] * w[i]);
                }
                inner += prod;
            }
            total += coef.values[k] * inner / m;
        }
        out.push(total);
    }
    Ok(out)
}

/// Draws a tiny random instance for the brute-force comparisons.
pub fn random_tiny_instance(seed: u64) -> (FeatureSet, CoefficientVector, Mat<f64>, VarSubset) {
    use crate::features::FeatureGroup;
    use rand_distr::StandardNormal;
    let mut r = rng::stream(seed, "tiny", 0);
    let d = r.random_range(1..=4usize);
    let k = r.random_range(0..=d.min(3));
    let members = rand::seq::index::sample(&mut r, d, k).into_vec();
    let u = VarSubset::new(members).expect("distinct");
    let n = if u.is_empty() { 1 } else { r.random_range(1..=10usize) };
    let omegas = (0..n)
        .map(|_| {
            (0..u.len())
                .map(|_| loop {
                    let w: f64 = r.sample(StandardNormal);
                    if w != 0.0 {
                        break 2.0 * w;
                    }
                })
                .collect()
        })
        .collect();
    let features = FeatureSet::new(d, vec![FeatureGroup { u: u.clone(), omegas }]).expect("valid tiny feature set");
    let coef = CoefficientVector::new(
        (0..n)
            .map(|_| c64::new(r.sample(StandardNormal), r.sample(StandardNormal)))
            .collect(),
        features.layout(),
    )
    .expect("matching layout");
    let m = r.random_range(1..=10usize);
    let x = Mat::from_fn(m, d, |_, _| r.random_range(-3.0..3.0));
    (features, coef, x, u)
}
