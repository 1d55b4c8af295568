//! Seeded end-to-end experiments: draw train and test data, optionally boost
//! the index set, fit a sparse model and record the test error.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::boosting::{boost, BoostConfig, BoostMode};
use crate::error::{Error, Result};
use crate::features::{draw_sparse_feature_set, FeatureSet};
use crate::io::{csv_error, header_lines};
use crate::rng;
use crate::sampling::{
    add_noise, evaluate_test_function, sample_data_with, Copula, DataDistribution, FeatureDensity, SampleSet,
    SigmaModel, TestFunction,
};
use crate::sparse_fit::{fit_harfe, fit_shrimp, mse, validation_split, HtpConfig, PruneSchedule};
use crate::stats;

/// Input law of an experiment, resolved against the test function and `d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistSpec {
    /// The function's independent default.
    Default,
    GaussCov(SigmaModel),
    /// Copula with the function's default marginals.
    Copula(Copula),
    Uniform {
        a: f64,
        b: f64,
    },
}

impl DistSpec {
    pub fn resolve(&self, func: TestFunction, d: usize) -> DataDistribution {
        match *self {
            DistSpec::Default => func.default_distribution(d),
            DistSpec::GaussCov(s) => DataDistribution::GaussianCov { cov: s.matrix(d) },
            DistSpec::Copula(copula) => DataDistribution::Copula {
                copula,
                marginals: vec![func.default_copula_marginal(); d],
            },
            DistSpec::Uniform { a, b } => DataDistribution::UniformBox { d, a, b },
        }
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistSpec::Default => f.write_str("default"),
            DistSpec::GaussCov(s) => write!(f, "gauss-cov:{}", s.name()),
            DistSpec::Copula(c) => write!(f, "copula:{}:{}", c.name(), c.theta()),
            DistSpec::Uniform { a, b } => write!(f, "uniform:{a}:{b}"),
        }
    }
}

impl FromStr for DistSpec {
    type Err = Error;

    /// Accepts `default`, `gauss-cov:{id|equi|mixed}`, `copula:<family>:<θ>`
    /// and `uniform:<a>:<b>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number {v:?} in distribution {s:?}")))
        };
        match parts.as_slice() {
            ["default"] => Ok(DistSpec::Default),
            ["gauss-cov"] => Ok(DistSpec::GaussCov(SigmaModel::Identity)),
            ["gauss-cov", m] => Ok(DistSpec::GaussCov(m.parse()?)),
            ["copula", fam, theta] => Ok(DistSpec::Copula(Copula::from_name(fam, num(theta)?)?)),
            ["uniform", a, b] => {
                let (a, b) = (num(a)?, num(b)?);
                if !(a < b) {
                    return Err(Error::invalid("uniform bounds need a < b"));
                }
                Ok(DistSpec::Uniform { a, b })
            }
            _ => Err(Error::invalid(format!("unknown distribution {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMethod {
    Shrimp,
    Harfe,
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMethod::Shrimp => "shrimp",
            FitMethod::Harfe => "harfe",
        })
    }
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shrimp" => Ok(FitMethod::Shrimp),
            "harfe" => Ok(FitMethod::Harfe),
            other => Err(Error::invalid(format!("unknown fit method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub function: TestFunction,
    pub dist: DistSpec,
    pub d: usize,
    pub m: usize,
    pub q: usize,
    /// `N = n_mult·M`.
    pub n_mult: usize,
    pub eps: f64,
    pub lambda_boost: f64,
    pub lambda_fit: f64,
    pub method: FitMethod,
    pub boosted: bool,
    pub repeats: usize,
    pub seed: u64,
    /// HARFE sparsity, `M/2` when unset.
    pub s: Option<usize>,
    /// Standard deviation of additive label noise.
    pub noise: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            function: TestFunction::FT2,
            dist: DistSpec::Default,
            d: 10,
            m: 300,
            q: 2,
            n_mult: 5,
            eps: 0.01,
            lambda_boost: 1e-6,
            lambda_fit: 1e-6,
            method: FitMethod::Shrimp,
            boosted: true,
            repeats: 10,
            seed: 0,
            s: None,
            noise: 0.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {v:?} for {key}")))
}

impl ExperimentConfig {
    pub fn n(&self) -> usize {
        self.n_mult * self.m
    }

    pub fn sparsity(&self) -> usize {
        self.s.unwrap_or((self.m / 2).max(1))
    }

    /// Sets one field from its `key=value` name (the CLI flag without dashes).
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "fn" => self.function = v.parse()?,
            "dist" => self.dist = v.parse()?,
            "d" => self.d = parse(key, v)?,
            "m" => self.m = parse(key, v)?,
            "q" => self.q = parse(key, v)?,
            "n-mult" => self.n_mult = parse(key, v)?,
            "eps" => self.eps = parse(key, v)?,
            "lambda-boost" => self.lambda_boost = parse(key, v)?,
            "lambda-fit" => self.lambda_fit = parse(key, v)?,
            "method" => self.method = v.parse()?,
            "boosted" => self.boosted = parse(key, v)?,
            "repeats" => self.repeats = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "s" => {
                self.s = match v.trim() {
                    "" | "auto" => None,
                    t => Some(parse(key, t)?),
                }
            }
            "noise" => self.noise = parse(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` file; blank lines and `#` comments are
    /// skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got {t:?}"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Every field as `key=value`, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("fn", self.function.to_string()),
            ("dist", self.dist.to_string()),
            ("d", self.d.to_string()),
            ("M", self.m.to_string()),
            ("q", self.q.to_string()),
            ("N-mult", self.n_mult.to_string()),
            ("eps", self.eps.to_string()),
            ("lambda-boost", self.lambda_boost.to_string()),
            ("lambda-fit", self.lambda_fit.to_string()),
            ("method", self.method.to_string()),
            ("boosted", self.boosted.to_string()),
            ("repeats", self.repeats.to_string()),
            ("seed", self.seed.to_string()),
            ("s", self.s.map_or("auto".into(), |s| s.to_string())),
            ("noise", self.noise.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let min_d = self.function.min_dimension();
        if self.d < min_d {
            return Err(Error::invalid(format!("{} needs d ≥ {min_d}", self.function)));
        }
        if self.q == 0 || self.q > self.d {
            return Err(Error::invalid("need 1 ≤ q ≤ d"));
        }
        if self.m < 10 {
            return Err(Error::invalid("need M ≥ 10"));
        }
        if self.n_mult == 0 || self.repeats == 0 {
            return Err(Error::invalid("N-mult and repeats must be positive"));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::invalid("eps must be nonnegative"));
        }
        for (name, l) in [("lambda-boost", self.lambda_boost), ("lambda-fit", self.lambda_fit)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.s == Some(0) || self.sparsity() > self.n() {
            return Err(Error::invalid("HARFE sparsity must lie in 1..=N"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise must be nonnegative"));
        }
        Ok(())
    }

    /// Human-readable plan printed by a dry run.
    pub fn plan(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} repeats of {} on {} (d = {}), M = {} train + {} test points, N = {} features",
            self.repeats,
            self.function,
            self.dist,
            self.d,
            self.m,
            self.m,
            self.n()
        );
        let mode = self.boost_mode();
        if self.boosted {
            let _ = writeln!(
                s,
                "boost: {mode:?} with q = {}, eps = {}, lambda = {}",
                self.q, self.eps, self.lambda_boost
            );
        } else {
            let _ = writeln!(s, "features: plain {}-sparse", self.q);
        }
        let _ = writeln!(s, "fit: {} with lambda = {}", self.method, self.lambda_fit);
        s.push_str(&header_lines(&self.to_pairs()));
        s
    }

    pub fn boost_mode(&self) -> BoostMode {
        match self.dist.resolve(self.function, self.d).independent_marginals() {
            Some(_) => BoostMode::Independent,
            None => BoostMode::Dependent,
        }
    }
}

/// One line of a results CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "fn")]
    pub function: String,
    pub d: usize,
    pub q: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub dist: String,
    pub method: String,
    pub boosted: bool,
    /// Repeat number, or `mean` for the aggregate row.
    pub repeat: String,
    pub mse: f64,
    pub elapsed_s: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    /// `(repeat, message)` for every failed repeat.
    pub errors: Vec<(usize, String)>,
}

impl ExperimentOutcome {
    /// Test errors of the repeats, `NaN` where a repeat failed.
    pub fn repeat_mse(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.repeat != "mean").map(|r| r.mse).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut header = self.config.to_pairs();
        header.extend(self.errors.iter().map(|(r, e)| (format!("error.{r}"), e.clone())));
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(header_lines(&header) + &String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Seed of repeat `r`.
pub fn repeat_seed(master: u64, r: usize) -> u64 {
    rng::child_seed(master, "repeat", r as u64)
}

/// Training and test sets of one repeat: `M` points each, from the data and
/// test streams of the repeat seed.
pub fn repeat_data(cfg: &ExperimentConfig, seed: u64) -> Result<(SampleSet, SampleSet)> {
    let dist = cfg.dist.resolve(cfg.function, cfg.d);
    let draw = |name: &str| -> Result<SampleSet> {
        let x = sample_data_with(&dist, cfg.m, &mut rng::stream(seed, name, 0))?;
        let y = evaluate_test_function(cfg.function, &x)?;
        SampleSet::new(x, y)
    };
    let train = draw(rng::DATA)?;
    let test = draw(rng::TEST)?;
    if cfg.noise > 0.0 {
        let mut y = train.labels().to_vec();
        add_noise(&mut y, cfg.noise, seed)?;
        return Ok((SampleSet::new(train.points().clone(), y)?, test));
    }
    Ok((train, test))
}

/// Features used for the fit: the boosted ANOVA-truncated set or plain
/// `q`-sparse features, both with `N` frequencies.
pub fn repeat_features(cfg: &ExperimentConfig, train: &SampleSet, seed: u64) -> Result<FeatureSet> {
    if cfg.boosted {
        let mut b = BoostConfig::new(cfg.q, cfg.eps, cfg.n(), cfg.lambda_boost, cfg.boost_mode());
        b.seed = seed;
        Ok(boost(train, &b)?.features)
    } else {
        draw_sparse_feature_set(cfg.d, cfg.q, cfg.n(), &FeatureDensity::gaussian_for_order(cfg.q), seed)
    }
}

/// Test MSE of one repeat.
pub fn run_repeat(cfg: &ExperimentConfig, r: usize) -> Result<f64> {
    let seed = repeat_seed(cfg.seed, r);
    let (train, test) = repeat_data(cfg, seed)?;
    let features = repeat_features(cfg, &train, seed)?;
    let coef = match cfg.method {
        FitMethod::Shrimp => {
            let (tr, val) = validation_split(&train, seed)?;
            fit_shrimp(&features, &tr, &val, cfg.lambda_fit, &PruneSchedule::default())?.coefficients
        }
        FitMethod::Harfe => {
            let s = cfg.sparsity().min(features.total());
            fit_harfe(&features, &train, &HtpConfig::new(s, cfg.lambda_fit))?.coefficients
        }
    };
    mse(&features, &coef, &test)
}

/// Runs every repeat; failures are recorded and the run continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let row = |repeat: String, mse: f64, elapsed_s: f64, seed: u64| ResultRow {
        function: cfg.function.to_string(),
        d: cfg.d,
        q: cfg.q,
        m: cfg.m,
        n: cfg.n(),
        dist: cfg.dist.to_string(),
        method: cfg.method.to_string(),
        boosted: cfg.boosted,
        repeat,
        mse,
        elapsed_s,
        seed,
    };
    let mut rows = Vec::with_capacity(cfg.repeats + 1);
    let mut errors = Vec::new();
    for r in 0..cfg.repeats {
        let t = Instant::now();
        let mse = run_repeat(cfg, r).unwrap_or_else(|e| {
            errors.push((r, e.to_string()));
            f64::NAN
        });
        rows.push(row(
            r.to_string(),
            mse,
            t.elapsed().as_secs_f64(),
            repeat_seed(cfg.seed, r),
        ));
    }
    let ok: Vec<f64> = rows.iter().map(|r| r.mse).filter(|v| v.is_finite()).collect();
    let mean = if ok.is_empty() { f64::NAN } else { stats::mean(&ok) };
    let elapsed: Vec<f64> = rows.iter().map(|r| r.elapsed_s).collect();
    rows.push(row("mean".into(), mean, stats::mean(&elapsed), cfg.seed));
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        rows,
        errors,
    })
}

/// Reads a results CSV, skipping `#` lines.
pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        s.push_str(cells.join("  ").trim_end());
        s.push('\n');
    }
    s
}

/// Aligned table with one line per configuration: number of successful
/// repeats and the mean and median test MSE.
pub fn summarize_results(rows: &[ResultRow]) -> String {
    let mut table = vec![[
        "fn",
        "d",
        "q",
        "M",
        "N",
        "dist",
        "method",
        "boosted",
        "runs",
        "mean_mse",
        "median_mse",
    ]
    .map(String::from)
    .to_vec()];
    let mut groups: Vec<(Vec<String>, Vec<f64>)> = Vec::new();
    for r in rows.iter().filter(|r| r.repeat != "mean") {
        let key = vec![
            r.function.clone(),
            r.d.to_string(),
            r.q.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.dist.clone(),
            r.method.clone(),
            r.boosted.to_string(),
        ];
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.1.push(r.mse),
            None => groups.push((key, vec![r.mse])),
        }
    }
    for (mut key, v) in groups {
        let ok: Vec<f64> = v.into_iter().filter(|x| x.is_finite()).collect();
        let (mean, median) = if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (stats::mean(&ok), stats::median(&ok))
        };
        key.extend([ok.len().to_string(), format!("{mean:.4e}"), format!("{median:.4e}")]);
        table.push(key);
    }
    align(&table)
}

#[derive(Deserialize)]
struct SensitivityLine {
    u: String,
    s_var: f64,
}

/// Turns a sensitivity CSV (`u,s_var,…`) into plot-ready `u,share` rows,
/// with shares normalized by the sum of all `S_var`.
pub fn sensitivity_shares(text: &str) -> Result<String> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let lines: Vec<SensitivityLine> = r.deserialize().map(|l| l.map_err(csv_error)).collect::<Result<_>>()?;
    let total: f64 = lines.iter().map(|l| l.s_var).sum();
    let mut s = String::from("u,share\n");
    for l in &lines {
        let share = if total > 0.0 { l.s_var / total } else { 0.0 };
        let _ = writeln!(s, "\"{}\",{share}", l.u);
    }
    Ok(s)
}
