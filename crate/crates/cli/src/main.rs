use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anova_rff::boosting::{boost, BoostConfig, BoostMode, RefineOrder};
use anova_rff::experiment::{
    parse_results, run_experiment, sensitivity_shares, summarize_results, DistSpec, ExperimentConfig, FitMethod,
};
use anova_rff::features::{assemble_matrix, draw_feature_set, draw_sparse_feature_set, predict, FeatureSet};
use anova_rff::io::{header_lines, read_dataset, write_dataset, Model};
use anova_rff::oracle::oracle_sobol_independent;
use anova_rff::rng;
use anova_rff::sampling::{
    add_noise, evaluate_test_function, sample_data_with, Copula, FeatureDensity, Marginal, SampleSet, TestFunction,
};
use anova_rff::sensitivity::{sobol_indices_dependent, sobol_indices_independent};
use anova_rff::solvers::PenalizedMethod;
use anova_rff::sparse_fit::{fit_harfe, fit_shrimp, mse, validation_split, HtpConfig, PruneSchedule};
use anova_rff::{AnovaIndexSet, Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "anova-rff",
    version,
    about = "ANOVA-boosted sparse random Fourier feature regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Sample a labelled dataset.
    GenData(GenData),
    /// Find the important ANOVA terms of a dataset.
    Boost(Boost),
    /// Fit a sparse random feature model.
    Fit(Fit),
    /// Sobol indices of a fitted model.
    Sensitivity(Sensitivity),
    /// Nested Monte-Carlo Sobol shares of a test function (independent inputs).
    Oracle(Oracle),
    /// Run a full seeded experiment.
    Run(Run),
    /// Summarize result or sensitivity CSV files.
    Report(Report),
}

#[derive(Args)]
struct DistArgs {
    /// `default`, `gauss-cov`, `copula`, `uniform`, or a full spec such as
    /// `copula:clayton:2`.
    #[arg(long, default_value = "default")]
    dist: String,
    #[arg(long, default_value = "id")]
    sigma_model: String,
    #[arg(long, default_value = "clayton")]
    copula: String,
    #[arg(long, default_value_t = 2.0)]
    theta: f64,
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
}

impl DistArgs {
    fn spec(&self) -> Result<DistSpec> {
        match self.dist.as_str() {
            "default" => Ok(DistSpec::Default),
            "gauss-cov" => Ok(DistSpec::GaussCov(self.sigma_model.parse()?)),
            "copula" => Ok(DistSpec::Copula(Copula::from_name(&self.copula, self.theta)?)),
            "uniform" => format!("uniform:{}:{}", self.a, self.b).parse(),
            other => other.parse(),
        }
    }
}

#[derive(Args)]
struct GenData {
    #[arg(long = "fn")]
    function: TestFunction,
    #[command(flatten)]
    dist: DistArgs,
    /// Dimension, the smallest the function allows by default.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "M", default_value_t = 500)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Draw from the test-data stream instead of the training stream.
    #[arg(long)]
    test: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Boost {
    #[arg(long, default_value = "indep", value_parser = ["indep", "dep"])]
    alg: String,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long = "N-mult", default_value_t = 5)]
    n_mult: usize,
    /// Total feature budget, overriding `--N-mult`.
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    lambda: f64,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "descending", value_parser = ["descending", "literal"])]
    refine: String,
    #[arg(long, default_value = "cholesky", value_parser = ["cholesky", "lsqr"])]
    solver: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct Fit {
    #[arg(long, default_value = "shrimp")]
    method: FitMethod,
    /// Index set JSON written by `boost`; plain q-sparse features otherwise.
    #[arg(long = "U")]
    u: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    lambda: f64,
    /// HARFE sparsity, M/2 by default.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long = "N-mult", default_value_t = 5)]
    n_mult: usize,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct Sensitivity {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Use the dependent-input indices (variance and covariance parts).
    #[arg(long)]
    dependent: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Oracle {
    #[arg(long = "fn")]
    function: TestFunction,
    /// Marginal of every coordinate, the function's default when omitted.
    #[arg(long)]
    marginal: Option<Marginal>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "M", default_value_t = 20_000)]
    m: usize,
    #[arg(long, default_value_t = 200)]
    inner: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Run {
    /// Flat key=value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "fn")]
    function: Option<String>,
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long = "M")]
    m: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long = "N-mult")]
    n_mult: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    lambda_boost: Option<String>,
    #[arg(long)]
    lambda_fit: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    boosted: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved plan and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct Report {
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn pairs<const K: usize>(items: [(&str, String); K]) -> Vec<(String, String)> {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn gen_data(a: GenData) -> Result<()> {
    let d = a.d.unwrap_or(a.function.min_dimension());
    let spec = a.dist.spec()?;
    let dist = spec.resolve(a.function, d);
    let stream = if a.test { rng::TEST } else { rng::DATA };
    let x = sample_data_with(&dist, a.m, &mut rng::stream(a.seed, stream, 0))?;
    let mut y = evaluate_test_function(a.function, &x)?;
    add_noise(&mut y, a.noise, a.seed)?;
    let header = pairs([
        ("fn", a.function.to_string()),
        ("dist", spec.to_string()),
        ("d", d.to_string()),
        ("M", a.m.to_string()),
        ("seed", a.seed.to_string()),
        ("noise", a.noise.to_string()),
        ("stream", stream.to_string()),
    ]);
    write_out(a.out.as_deref(), &write_dataset(&SampleSet::new(x, y)?, &header))
}

fn config_json(pairs: &[(String, String)]) -> Value {
    Value::Object(
        pairs
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect(),
    )
}

fn run_boost(a: Boost) -> Result<()> {
    let data = read_dataset(&read(&a.data)?)?;
    let n_total = a.n.unwrap_or(a.n_mult * data.len());
    let mode = if a.alg == "dep" {
        BoostMode::Dependent
    } else {
        BoostMode::Independent
    };
    let mut cfg = BoostConfig::new(a.q, a.eps, n_total, a.lambda, mode);
    cfg.seed = a.seed;
    if a.refine == "literal" {
        cfg.refine_order = RefineOrder::Literal;
    }
    if a.solver == "lsqr" {
        cfg.solver_method = PenalizedMethod::Lsqr;
    }
    let result = boost(&data, &cfg)?;
    let header = pairs([
        ("alg", a.alg.clone()),
        ("q", a.q.to_string()),
        ("eps", a.eps.to_string()),
        ("N", n_total.to_string()),
        ("lambda", a.lambda.to_string()),
        ("data", a.data.display().to_string()),
        ("seed", a.seed.to_string()),
        ("refine", a.refine.clone()),
        ("solver", a.solver.clone()),
    ]);
    let terms: Value = serde_json::from_str(&result.index_set.to_json())?;
    let doc = json!({
        "config": config_json(&header),
        "dimension": data.dimension(),
        "U": terms,
    });
    for w in &result.trace.diagnostics {
        eprintln!("warning: {w}");
    }
    if let Some(t) = &a.trace {
        fs::write(t, header_lines(&header) + &result.trace.to_csv()?)?;
    }
    match &a.out {
        Some(p) => {
            fs::write(p, serde_json::to_string_pretty(&doc)? + "\n")?;
            println!("U = {}", result.index_set.to_text());
            Ok(())
        }
        None => write_out(None, &(serde_json::to_string_pretty(&doc)? + "\n")),
    }
}

fn read_index_set(path: &Path, d: usize) -> Result<AnovaIndexSet> {
    let v: Value = serde_json::from_str(&read(path)?)?;
    let terms = match v {
        Value::Object(mut m) => m
            .remove("U")
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no \"U\" entry", path.display())))?,
        other => other,
    };
    AnovaIndexSet::from_json(&terms.to_string(), d)
}

fn run_fit(a: Fit) -> Result<()> {
    let train = read_dataset(&read(&a.data)?)?;
    let test = a
        .test
        .as_deref()
        .map(|p| read(p).and_then(|t| read_dataset(&t)))
        .transpose()?;
    let d = train.dimension();
    let n_total = a.n.unwrap_or(a.n_mult * train.len());
    let features: FeatureSet = match &a.u {
        Some(p) => {
            let u = read_index_set(p, d)?;
            let q = u.max_order().max(1);
            draw_feature_set(&u, n_total, &FeatureDensity::gaussian_for_order(q), None, a.seed)?
        }
        None => draw_sparse_feature_set(d, a.q, n_total, &FeatureDensity::gaussian_for_order(a.q), a.seed)?,
    };
    let s = a.s.unwrap_or((train.len() / 2).max(1)).min(features.total());
    let coefficients = match a.method {
        FitMethod::Shrimp => {
            let (tr, val) = validation_split(&train, a.seed)?;
            fit_shrimp(&features, &tr, &val, a.lambda, &PruneSchedule::default())?.coefficients
        }
        FitMethod::Harfe => {
            let fit = fit_harfe(&features, &train, &HtpConfig::new(s, a.lambda))?;
            for w in &fit.diagnostics {
                eprintln!("warning: {w}");
            }
            fit.coefficients
        }
    };
    let train_mse = mse(&features, &coefficients, &train)?;
    let test_mse = test.as_ref().map(|t| mse(&features, &coefficients, t)).transpose()?;
    let header = pairs([
        ("method", a.method.to_string()),
        ("U", a.u.as_ref().map_or("none".into(), |p| p.display().to_string())),
        ("q", a.q.to_string()),
        ("data", a.data.display().to_string()),
        ("lambda", a.lambda.to_string()),
        ("s", s.to_string()),
        ("N", n_total.to_string()),
        ("seed", a.seed.to_string()),
    ]);
    let nnz = coefficients.nnz();
    let mut metadata = serde_json::Map::new();
    metadata.insert("config".into(), config_json(&header));
    metadata.insert("train_mse".into(), json!(train_mse));
    let model = Model {
        features,
        coefficients,
        metadata,
    };
    let test_text = test_mse.map_or(String::new(), |v| v.to_string());
    let report = format!(
        "method,N,nnz,train_mse,test_mse\n{},{n_total},{nnz},{train_mse},{test_text}\n",
        a.method
    );
    match &a.report {
        Some(p) => fs::write(p, header_lines(&header) + &report)?,
        None => eprint!("{report}"),
    }
    write_out(a.out.as_deref(), &(model.to_json() + "\n"))
}

fn run_sensitivity(a: Sensitivity) -> Result<()> {
    let model = Model::from_json(&read(&a.model)?)?;
    let data = read_dataset(&read(&a.data)?)?;
    let report = if a.dependent {
        let mat = assemble_matrix(&model.features, data.points())?;
        sobol_indices_dependent(&mat, &model.coefficients, data.labels())?
    } else {
        sobol_indices_independent(&model.features, &model.coefficients, data.points(), data.labels(), None)?
    };
    // Sanity check that the model and data fit together.
    predict(&model.features, &model.coefficients, data.points())?;
    let header = pairs([
        ("model", a.model.display().to_string()),
        ("data", a.data.display().to_string()),
        ("dependent", a.dependent.to_string()),
    ]);
    write_out(a.out.as_deref(), &(header_lines(&header) + &report.to_csv()?))
}

fn run_oracle(a: Oracle) -> Result<()> {
    let d = a.d.unwrap_or(a.function.min_dimension());
    let dist = match a.marginal {
        Some(Marginal::StandardNormal) => anova_rff::sampling::DataDistribution::standard_normal(d),
        Some(Marginal::Uniform { a: lo, b: hi }) => DistSpec::Uniform { a: lo, b: hi }.resolve(a.function, d),
        None => a.function.default_distribution(d),
    };
    let f = a.function;
    let report = oracle_sobol_independent(&|x| f.eval(x), &dist, &f.active_variables(), a.m, a.inner, a.seed)?;
    let header = pairs([
        ("fn", f.to_string()),
        ("marginal", a.marginal.map_or("default".into(), |m| m.to_string())),
        ("d", d.to_string()),
        ("M", a.m.to_string()),
        ("inner", a.inner.to_string()),
        ("seed", a.seed.to_string()),
    ]);
    write_out(a.out.as_deref(), &(header_lines(&header) + &report.to_csv()?))
}

fn run_run(a: Run) -> Result<()> {
    let mut cfg = ExperimentConfig::default();
    if let Some(p) = &a.config {
        cfg.apply_text(&read(p)?)?;
    }
    let flags = [
        ("fn", &a.function),
        ("dist", &a.dist),
        ("d", &a.d),
        ("M", &a.m),
        ("q", &a.q),
        ("N-mult", &a.n_mult),
        ("eps", &a.eps),
        ("lambda-boost", &a.lambda_boost),
        ("lambda-fit", &a.lambda_fit),
        ("method", &a.method),
        ("boosted", &a.boosted),
        ("repeats", &a.repeats),
        ("seed", &a.seed),
        ("s", &a.s),
        ("noise", &a.noise),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    if a.dry_run {
        print!("{}", cfg.plan());
        return Ok(());
    }
    let out = run_experiment(&cfg)?;
    for (r, e) in &out.errors {
        eprintln!("repeat {r} failed: {e}");
    }
    write_out(a.out.as_deref(), &out.to_csv()?)?;
    if out.errors.len() == cfg.repeats {
        return Err(Error::NumericFailure("every repeat failed".into()));
    }
    Ok(())
}

fn run_report(a: Report) -> Result<()> {
    let mut rows = Vec::new();
    let mut shares = String::new();
    for p in &a.inputs {
        let text = read(p)?;
        let first = text.lines().find(|l| !l.starts_with('#')).unwrap_or("");
        if first.starts_with("u,") {
            shares.push_str(&sensitivity_shares(&text)?);
        } else {
            rows.extend(parse_results(&text).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", p.display()),
                },
                other => other,
            })?);
        }
    }
    let mut out = String::new();
    if !rows.is_empty() || shares.is_empty() {
        out.push_str(&summarize_results(&rows));
    }
    out.push_str(&shares);
    write_out(a.out.as_deref(), &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Boost(a) => run_boost(a),
        Command::Fit(a) => run_fit(a),
        Command::Sensitivity(a) => run_sensitivity(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Run(a) => run_run(a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
