//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string so the page needs no generated types.

use anova_rff::boosting::{boost, BoostConfig, BoostMode};
use anova_rff::experiment::DistSpec;
use anova_rff::sampling::{
    evaluate_test_function, sample_data, Copula, DataDistribution, Marginal, SampleSet, TestFunction,
};
use anova_rff::stats;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js(e: anova_rff::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `m` draws from a bivariate copula with uniform marginals, with the
/// sample and closed-form Kendall's τ.
pub fn copula_scatter_json(family: &str, theta: f64, m: usize, seed: u64) -> anova_rff::Result<String> {
    let copula = Copula::from_name(family, theta)?;
    let spec = DataDistribution::Copula {
        copula,
        marginals: vec![Marginal::Uniform { a: 0.0, b: 1.0 }; 2],
    };
    let x = sample_data(&spec, m, seed)?;
    let u: Vec<f64> = (0..m).map(|j| x[(j, 0)]).collect();
    let v: Vec<f64> = (0..m).map(|j| x[(j, 1)]).collect();
    let points: Vec<[f64; 2]> = u.iter().zip(&v).map(|(a, b)| [*a, *b]).collect();
    Ok(json!({
        "points": points,
        "tau_sample": stats::kendall_tau(&u, &v)?,
        "tau_exact": copula.kendall_tau()?,
    })
    .to_string())
}

/// Runs interaction detection on samples of a benchmark function and
/// returns the detected terms and the per-round estimates.
#[allow(clippy::too_many_arguments)]
pub fn find_interactions_json(
    function: &str,
    dist: &str,
    d: usize,
    m: usize,
    q: usize,
    eps: f64,
    n_total: usize,
    seed: u64,
) -> anova_rff::Result<String> {
    let func: TestFunction = function.parse()?;
    let spec = dist.parse::<DistSpec>()?.resolve(func, d);
    let x = sample_data(&spec, m, seed)?;
    let y = evaluate_test_function(func, &x)?;
    let samples = SampleSet::new(x, y)?;
    let (mode, lambda) = match spec.independent_marginals() {
        Some(_) => (BoostMode::Independent, 1e-6),
        None => (BoostMode::Dependent, 1.0),
    };
    let mut cfg = BoostConfig::new(q, eps, n_total, lambda, mode);
    cfg.seed = seed;
    let result = boost(&samples, &cfg)?;
    let terms: Vec<_> = result.index_set.maximal_terms();
    Ok(json!({
        "mode": mode,
        "terms": terms,
        "rounds": result.trace.rounds,
        "diagnostics": result.trace.diagnostics,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn copula_scatter(family: &str, theta: f64, m: u32, seed: u32) -> Result<String, JsError> {
    copula_scatter_json(family, theta, m as usize, seed.into()).map_err(js)
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn find_interactions(
    function: &str,
    dist: &str,
    d: u32,
    m: u32,
    q: u32,
    eps: f64,
    n_total: u32,
    seed: u32,
) -> Result<String, JsError> {
    find_interactions_json(
        function,
        dist,
        d as usize,
        m as usize,
        q as usize,
        eps,
        n_total as usize,
        seed.into(),
    )
    .map_err(js)
}
