//! Input samples, labels and random feature frequencies.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use faer::{Mat, Side};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Cauchy, Distribution, Exp1, Gamma, StandardNormal, StudentT};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng;

/// Rows of `points` are samples; `labels[j]` belongs to row `j`.
#[derive(Clone, Debug)]
pub struct SampleSet {
    points: Mat<f64>,
    labels: Vec<f64>,
}

impl SampleSet {
    pub fn new(points: Mat<f64>, labels: Vec<f64>) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} points but {} labels",
                points.nrows(),
                labels.len()
            )));
        }
        if points.ncols() == 0 {
            return Err(Error::invalid("points need at least one coordinate"));
        }
        let finite = labels.iter().all(|v| v.is_finite())
            && (0..points.ncols()).all(|c| points.col(c).iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::invalid("sample set contains non-finite values"));
        }
        Ok(SampleSet { points, labels })
    }

    pub fn points(&self) -> &Mat<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn dimension(&self) -> usize {
        self.points.ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        self.points.row(j).iter().copied().collect()
    }

    /// Subset of rows in the given order.
    pub fn select(&self, rows: &[usize]) -> SampleSet {
        let d = self.dimension();
        SampleSet {
            points: Mat::from_fn(rows.len(), d, |i, c| self.points[(rows[i], c)]),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Seeded random split into `(first, second)` with `round(frac·M)` rows
    /// in the first part (at least one row in each part when `M ≥ 2`).
    pub fn split(&self, frac: f64, seed: u64) -> Result<(SampleSet, SampleSet)> {
        let m = self.len();
        if m < 2 || !(0.0 < frac && frac < 1.0) {
            return Err(Error::invalid("split needs M ≥ 2 and a fraction in (0,1)"));
        }
        let mut idx: Vec<usize> = (0..m).collect();
        let mut r = rng::stream(seed, rng::SPLITS, 0);
        for i in (1..m).rev() {
            idx.swap(i, r.random_range(0..=i));
        }
        let k = ((frac * m as f64).round() as usize).clamp(1, m - 1);
        Ok((self.select(&idx[..k]), self.select(&idx[k..])))
    }
}

/// One-dimensional marginal law of an input coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Marginal {
    StandardNormal,
    Uniform { a: f64, b: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::StandardNormal => Ok(()),
            Marginal::Uniform { a, b } if a < b && a.is_finite() && b.is_finite() => Ok(()),
            Marginal::Uniform { a, b } => Err(Error::invalid(format!("uniform marginal needs a < b, got [{a}, {b}]"))),
        }
    }

    pub fn inverse_cdf(&self, p: f64) -> f64 {
        match *self {
            Marginal::StandardNormal => Normal::standard().inverse_cdf(p),
            Marginal::Uniform { a, b } => a + (b - a) * p,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::StandardNormal => Normal::standard().cdf(x),
            Marginal::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::StandardNormal => Normal::standard().pdf(x),
            Marginal::Uniform { a, b } => {
                if (a..=b).contains(&x) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        match *self {
            Marginal::StandardNormal => r.sample(StandardNormal),
            Marginal::Uniform { a, b } => a + (b - a) * r.random::<f64>(),
        }
    }

    /// `∫ g dμ` by adaptive quadrature, splitting at the given kinks.
    pub fn expectation(&self, g: impl Fn(f64) -> f64, kinks: &[f64], tol: f64) -> Result<f64> {
        let r = match *self {
            Marginal::StandardNormal => quadrature::integrate_real_line(|x| g(x) * self.pdf(x), kinks, tol, 0.0)?,
            Marginal::Uniform { a, b } => quadrature::integrate_with_breaks(|x| g(x) / (b - a), a, b, kinks, tol, 0.0)?,
        };
        Ok(r.value)
    }
}

impl fmt::Display for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Marginal::StandardNormal => f.write_str("normal"),
            Marginal::Uniform { a, b } => write!(f, "uniform[{a},{b}]"),
        }
    }
}

impl FromStr for Marginal {
    type Err = Error;

    /// Accepts `normal`, `uniform01`, `uniform11`, `uniform-pi` and `uniform[a,b]`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let m = match t.as_str() {
            "normal" | "gauss" | "gaussian" | "std-normal" => Marginal::StandardNormal,
            "uniform01" => Marginal::Uniform { a: 0.0, b: 1.0 },
            "uniform11" => Marginal::Uniform { a: -1.0, b: 1.0 },
            "uniform-pi" | "uniformpi" => Marginal::Uniform { a: -PI, b: PI },
            _ => {
                let inner = t
                    .strip_prefix("uniform[")
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(|| Error::invalid(format!("unknown marginal {s:?}")))?;
                let (a, b) = inner
                    .split_once(',')
                    .ok_or_else(|| Error::invalid(format!("bad uniform bounds {s:?}")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::invalid(format!("bad bound {v:?}: {e}")))
                };
                Marginal::Uniform {
                    a: parse(a)?,
                    b: parse(b)?,
                }
            }
        };
        m.validate()?;
        Ok(m)
    }
}

/// Archimedean copula families, parameterized as in the usual generator form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Copula {
    Clayton(f64),
    Gumbel(f64),
    Frank(f64),
}

impl Copula {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Copula::Clayton(t) | Copula::Frank(t) => t > 0.0 && t.is_finite(),
            Copula::Gumbel(t) => t >= 1.0 && t.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("copula parameter out of range: {self:?}")))
        }
    }

    pub fn theta(&self) -> f64 {
        match *self {
            Copula::Clayton(t) | Copula::Gumbel(t) | Copula::Frank(t) => t,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Copula::Clayton(_) => "clayton",
            Copula::Gumbel(_) => "gumbel",
            Copula::Frank(_) => "frank",
        }
    }

    pub fn from_name(name: &str, theta: f64) -> Result<Self> {
        let c = match name.trim().to_ascii_lowercase().as_str() {
            "clayton" => Copula::Clayton(theta),
            "gumbel" => Copula::Gumbel(theta),
            "frank" => Copula::Frank(theta),
            other => return Err(Error::invalid(format!("unknown copula {other:?}"))),
        };
        c.validate()?;
        Ok(c)
    }

    /// Latent frailty `V` whose Laplace transform is the inverse generator.
    fn frailty<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        match *self {
            Copula::Clayton(t) => Gamma::new(1.0 / t, 1.0).expect("validated parameter").sample(r),
            Copula::Gumbel(t) => {
                let alpha = 1.0 / t;
                if alpha == 1.0 {
                    return 1.0;
                }
                // Kanter's representation of the positive stable law with
                // Laplace transform exp(-s^alpha).
                let th = PI * open01(r);
                let w: f64 = r.sample(Exp1);
                (alpha * th).sin() / th.sin().powf(1.0 / alpha)
                    * (((1.0 - alpha) * th).sin() / w).powf((1.0 - alpha) / alpha)
            }
            Copula::Frank(t) => log_series(t, r) as f64,
        }
    }

    /// Laplace-transform form of the inverse generator.
    fn psi(&self, s: f64) -> f64 {
        match *self {
            Copula::Clayton(t) => (1.0 + s).powf(-1.0 / t),
            Copula::Gumbel(t) => (-s.powf(1.0 / t)).exp(),
            Copula::Frank(t) => {
                let p = -(-t).exp_m1();
                -(-p * (-s).exp()).ln_1p() / t
            }
        }
    }

    /// One draw from the copula in `(0,1)^d`.
    pub fn sample_uniforms<R: Rng + ?Sized>(&self, d: usize, r: &mut R) -> Vec<f64> {
        let v = self.frailty(r);
        (0..d)
            .map(|_| {
                let e: f64 = r.sample(Exp1);
                self.psi(e / v).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
            })
            .collect()
    }

    /// Closed-form Kendall's τ of the bivariate margins.
    pub fn kendall_tau(&self) -> Result<f64> {
        match *self {
            Copula::Clayton(t) => Ok(t / (t + 2.0)),
            Copula::Gumbel(t) => Ok(1.0 - 1.0 / t),
            Copula::Frank(t) => {
                let debye = quadrature::integrate(
                    |x: f64| if x == 0.0 { 1.0 } else { x / x.exp_m1() },
                    0.0,
                    t,
                    1e-13,
                    1e-13,
                )?
                .value
                    / t;
                Ok(1.0 - 4.0 / t * (1.0 - debye))
            }
        }
    }
}

fn open01<R: Rng + ?Sized>(r: &mut R) -> f64 {
    loop {
        let u: f64 = r.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Logarithmic series law with parameter `1 − e^{−θ}` (Kemp's LK sampler).
fn log_series<R: Rng + ?Sized>(theta: f64, r: &mut R) -> u64 {
    let p = -(-theta).exp_m1();
    let v = open01(r);
    if v >= p {
        return 1;
    }
    let q = -(-theta * open01(r)).exp_m1();
    if v <= q * q {
        let k = 1.0 + v.ln() / q.ln();
        if k.is_finite() && k >= 1.0 {
            return k.floor() as u64;
        }
        return 1;
    }
    if v <= q {
        2
    } else {
        1
    }
}

/// Covariance models for the correlated Gaussian experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaModel {
    /// `I_d`.
    Identity,
    /// `(4/5) I_d + (1/5) 1 1ᵀ`.
    Equi,
    /// Block diagonal with repeated 3×3 block (truncated when 3 ∤ d).
    Mixed,
}

impl SigmaModel {
    pub fn matrix(&self, d: usize) -> Mat<f64> {
        const B: [[f64; 3]; 3] = [[1.0, -0.2, 0.4], [-0.2, 1.0, -0.8], [0.4, -0.8, 1.0]];
        Mat::from_fn(d, d, |i, j| match self {
            SigmaModel::Identity => f64::from(u8::from(i == j)),
            SigmaModel::Equi => 0.2 + 0.8 * f64::from(u8::from(i == j)),
            SigmaModel::Mixed => {
                if i / 3 == j / 3 {
                    B[i % 3][j % 3]
                } else {
                    0.0
                }
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SigmaModel::Identity => "id",
            SigmaModel::Equi => "equi",
            SigmaModel::Mixed => "mixed",
        }
    }
}

impl FromStr for SigmaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "id" | "identity" | "1" => Ok(SigmaModel::Identity),
            "equi" | "2" => Ok(SigmaModel::Equi),
            "mixed" | "3" => Ok(SigmaModel::Mixed),
            other => Err(Error::invalid(format!("unknown sigma model {other:?}"))),
        }
    }
}

/// Lower Cholesky factor `L` with `L Lᵀ = Σ`.
pub fn cholesky_factor(cov: &Mat<f64>) -> Result<Mat<f64>> {
    if cov.nrows() != cov.ncols() || cov.nrows() == 0 {
        return Err(Error::invalid("covariance must be square and nonempty"));
    }
    let n = cov.nrows();
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (cov[(i, j)], cov[(j, i)]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::invalid("covariance must be symmetric"));
            }
        }
    }
    let llt = cov
        .llt(Side::Lower)
        .map_err(|e| Error::DecompositionFailure(format!("covariance not positive definite: {e:?}")))?;
    Ok(llt.L().to_owned())
}

/// Law of the input vector `x ∈ ℝ^d`.
#[derive(Clone, Debug)]
pub enum DataDistribution {
    GaussianCov { cov: Mat<f64> },
    Copula { copula: Copula, marginals: Vec<Marginal> },
    UniformBox { d: usize, a: f64, b: f64 },
}

impl DataDistribution {
    pub fn dimension(&self) -> usize {
        match self {
            DataDistribution::GaussianCov { cov } => cov.nrows(),
            DataDistribution::Copula { marginals, .. } => marginals.len(),
            DataDistribution::UniformBox { d, .. } => *d,
        }
    }

    pub fn standard_normal(d: usize) -> Self {
        DataDistribution::GaussianCov {
            cov: SigmaModel::Identity.matrix(d),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dimension() == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        match self {
            DataDistribution::GaussianCov { .. } => Ok(()),
            DataDistribution::Copula { copula, marginals } => {
                copula.validate()?;
                marginals.iter().try_for_each(Marginal::validate)
            }
            DataDistribution::UniformBox { a, b, .. } => Marginal::Uniform { a: *a, b: *b }.validate(),
        }
    }

    /// Product marginals when the coordinates are independent.
    pub fn independent_marginals(&self) -> Option<Vec<Marginal>> {
        match self {
            DataDistribution::GaussianCov { cov } => {
                let d = cov.nrows();
                let is_id = (0..d).all(|i| (0..d).all(|j| cov[(i, j)] == f64::from(u8::from(i == j))));
                is_id.then(|| vec![Marginal::StandardNormal; d])
            }
            DataDistribution::Copula { .. } => None,
            DataDistribution::UniformBox { d, a, b } => Some(vec![Marginal::Uniform { a: *a, b: *b }; *d]),
        }
    }
}

/// `M` i.i.d. draws (rows) from `spec`, using the data stream of `seed`.
pub fn sample_data(spec: &DataDistribution, m: usize, seed: u64) -> Result<Mat<f64>> {
    sample_data_with(spec, m, &mut rng::stream(seed, rng::DATA, 0))
}

pub fn sample_data_with(spec: &DataDistribution, m: usize, r: &mut ChaCha20Rng) -> Result<Mat<f64>> {
    if m == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    spec.validate()?;
    let d = spec.dimension();
    let mut x = Mat::<f64>::zeros(m, d);
    match spec {
        DataDistribution::GaussianCov { cov } => {
            let l = cholesky_factor(cov)?;
            let mut z = vec![0.0; d];
            for j in 0..m {
                for zi in z.iter_mut() {
                    *zi = r.sample(StandardNormal);
                }
                for i in 0..d {
                    x[(j, i)] = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
                }
            }
        }
        DataDistribution::Copula { copula, marginals } => {
            for j in 0..m {
                let u = copula.sample_uniforms(d, r);
                for i in 0..d {
                    x[(j, i)] = marginals[i].inverse_cdf(u[i]);
                }
            }
        }
        DataDistribution::UniformBox { a, b, .. } => {
            for j in 0..m {
                for i in 0..d {
                    x[(j, i)] = a + (b - a) * r.random::<f64>();
                }
            }
        }
    }
    Ok(x)
}

/// Adds i.i.d. `N(0, sd²)` noise from the noise stream.
pub fn add_noise(labels: &mut [f64], sd: f64, seed: u64) -> Result<()> {
    if !(sd >= 0.0 && sd.is_finite()) {
        return Err(Error::invalid("noise level must be a nonnegative number"));
    }
    if sd == 0.0 {
        return Ok(());
    }
    let mut r = rng::stream(seed, rng::NOISE, 0);
    for y in labels {
        let e: f64 = r.sample(StandardNormal);
        *y += sd * e;
    }
    Ok(())
}

/// The benchmark functions used throughout the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestFunction {
    FT1,
    FT2,
    FT3,
    Friedmann9,
    Tensor2d,
}

impl TestFunction {
    pub const ALL: [TestFunction; 5] = [
        TestFunction::FT1,
        TestFunction::FT2,
        TestFunction::FT3,
        TestFunction::Friedmann9,
        TestFunction::Tensor2d,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::FT1 => "fT1",
            TestFunction::FT2 => "fT2",
            TestFunction::FT3 => "fT3",
            TestFunction::Friedmann9 => "friedmann9",
            TestFunction::Tensor2d => "tensor2d",
        }
    }

    pub fn min_dimension(&self) -> usize {
        match self {
            TestFunction::FT1 => 4,
            TestFunction::FT2 => 3,
            TestFunction::FT3 => 5,
            TestFunction::Friedmann9 => 9,
            TestFunction::Tensor2d => 2,
        }
    }

    /// Coordinates the function actually depends on (0-based).
    pub fn active_variables(&self) -> Vec<usize> {
        match self {
            TestFunction::FT1 => vec![0, 1, 2, 3],
            TestFunction::FT2 => vec![0, 1, 2],
            TestFunction::FT3 | TestFunction::Friedmann9 => vec![0, 1, 2, 3, 4],
            TestFunction::Tensor2d => vec![0, 1],
        }
    }

    /// Input law used for the independent-input experiments.
    pub fn default_distribution(&self, d: usize) -> DataDistribution {
        match self {
            TestFunction::FT3 => DataDistribution::UniformBox { d, a: 0.0, b: 1.0 },
            _ => DataDistribution::standard_normal(d),
        }
    }

    /// Marginal used together with a copula.
    pub fn default_copula_marginal(&self) -> Marginal {
        match self {
            TestFunction::FT2 => Marginal::Uniform { a: -PI, b: PI },
            TestFunction::FT3 => Marginal::Uniform { a: 0.0, b: 1.0 },
            _ => Marginal::StandardNormal,
        }
    }

    /// Pointwise value; `x` must hold at least the active coordinates.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::FT1 => x[3] * x[3] + x[1] * x[2] + x[0] * x[1] + x[3],
            TestFunction::FT2 => {
                let s1 = x[0].sin();
                let s2 = x[1].sin();
                s1 + 7.0 * s2 * s2 + 0.1 * x[2].powi(4) * s1
            }
            TestFunction::FT3 => {
                10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
            }
            TestFunction::Friedmann9 => {
                10.0 * (0.1 * PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
            }
            TestFunction::Tensor2d => tensor2d_g1(x[0]) * tensor2d_g2(x[1]),
        }
    }
}

pub fn tensor2d_g1(x: f64) -> f64 {
    x.abs() / (1.0 + x * x).powi(2)
}

pub fn tensor2d_g2(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        TestFunction::ALL
            .into_iter()
            .find(|f| f.name().to_ascii_lowercase() == t)
            .ok_or_else(|| Error::invalid(format!("unknown test function {s:?}")))
    }
}

/// Labels `f(x)` for every row of `x`.
pub fn evaluate_test_function(func: TestFunction, x: &Mat<f64>) -> Result<Vec<f64>> {
    if x.ncols() < func.min_dimension() {
        return Err(Error::invalid(format!(
            "{func} needs d ≥ {}, got {}",
            func.min_dimension(),
            x.ncols()
        )));
    }
    let mut row = vec![0.0; x.ncols()];
    Ok((0..x.nrows())
        .map(|j| {
            for (c, v) in row.iter_mut().enumerate() {
                *v = x[(j, c)];
            }
            func.eval(&row)
        })
        .collect())
}

/// One-dimensional law of each frequency coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeatureDensity {
    Gaussian {
        sigma: f64,
    },
    Cauchy {
        sigma: f64,
    },
    /// Density `∝ (1 + ω²/σ²)^{-s}` per coordinate.
    SobolevTensor {
        sigma: f64,
        s: f64,
    },
}

impl FeatureDensity {
    pub fn validate(&self) -> Result<()> {
        let (sigma, s) = match *self {
            FeatureDensity::Gaussian { sigma } | FeatureDensity::Cauchy { sigma } => (sigma, 1.0),
            FeatureDensity::SobolevTensor { sigma, s } => (sigma, s),
        };
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("feature scale must be positive, got {sigma}")));
        }
        if !(s > 0.5 && s.is_finite()) {
            return Err(Error::invalid(format!("smoothness must exceed 1/2, got {s}")));
        }
        Ok(())
    }

    /// Gaussian with variance `1/q`, the default for order-`q` experiments.
    pub fn gaussian_for_order(q: usize) -> Self {
        FeatureDensity::Gaussian {
            sigma: (1.0 / q.max(1) as f64).sqrt(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FeatureDensity::Gaussian { .. } => "gaussian",
            FeatureDensity::Cauchy { .. } => "cauchy",
            FeatureDensity::SobolevTensor { .. } => "sobolev",
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            FeatureDensity::Gaussian { sigma }
            | FeatureDensity::Cauchy { sigma }
            | FeatureDensity::SobolevTensor { sigma, .. } => sigma,
        }
    }

    /// A nonzero draw of one frequency coordinate.
    pub fn draw<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        loop {
            let w = match *self {
                FeatureDensity::Gaussian { sigma } => sigma * r.sample::<f64, _>(StandardNormal),
                FeatureDensity::Cauchy { sigma } => Cauchy::new(0.0, sigma).expect("validated scale").sample(r),
                FeatureDensity::SobolevTensor { sigma, s } => {
                    let nu = 2.0 * s - 1.0;
                    sigma / nu.sqrt() * StudentT::new(nu).expect("validated smoothness").sample(r)
                }
            };
            if w != 0.0 && w.is_finite() {
                return w;
            }
        }
    }
}

/// `n × k` matrix of i.i.d. frequency coordinates from the features stream.
pub fn sample_feature_frequencies(density: &FeatureDensity, k: usize, n: usize, seed: u64) -> Result<Mat<f64>> {
    density.validate()?;
    if n == 0 || k == 0 {
        return Err(Error::invalid("frequency count and support size must be positive"));
    }
    let mut r = rng::stream(seed, rng::FEATURES, 0);
    let mut out = Mat::<f64>::zeros(n, k);
    for i in 0..n {
        for c in 0..k {
            out[(i, c)] = density.draw(&mut r);
        }
    }
    Ok(out)
}
