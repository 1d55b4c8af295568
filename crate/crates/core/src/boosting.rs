//! ANOVA boosting: find the index set `U` of important variable
//! interactions, for independent inputs (MC variances of the ANOVA terms,
//! refining from order `q` downwards) and for possibly dependent inputs
//! (penalized fit with Sobol-type indices, pruning from all terms up to
//! order `q`).

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{assemble_matrix, draw_feature_set, CoefficientVector, FeatureSet};
use crate::index_sets::{
    all_subsets_of_order, all_subsets_up_to_order, prune_to_anti_downward_closed, uncovered_subsets, AnovaIndexSet,
    VarSubset,
};
use crate::rng;
use crate::sampling::{FeatureDensity, SampleSet};
use crate::sensitivity::{mc_variance, sobol_indices_dependent};
use crate::solvers::{build_penalty, penalized_solve, ridge_solve_dual, PenalizedMethod, SolverOptions};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoostMode {
    Independent,
    Dependent,
}

/// Which lower-order subsets the independent algorithm adds in round `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineOrder {
    /// Order `q − t`: pruned terms are replaced by their uncovered
    /// subsets one order lower.
    Descending,
    /// Order `t − 1`, read literally from the pseudocode.
    Literal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoostConfig {
    pub q: usize,
    /// Threshold on the normalized variance (independent) or `S_var`
    /// (dependent).
    pub eps: f64,
    pub n_total: usize,
    pub lambda: f64,
    pub density: FeatureDensity,
    pub seed: u64,
    pub mode: BoostMode,
    pub refine_order: RefineOrder,
    /// Number of sample points used to estimate the MC variances
    /// (all when `None`).
    pub m_val: Option<usize>,
    /// Tolerance and iteration cap of the penalized solve.
    pub solver_tol: f64,
    pub solver_max_iter: Option<usize>,
    pub solver_method: PenalizedMethod,
}

impl BoostConfig {
    pub fn new(q: usize, eps: f64, n_total: usize, lambda: f64, mode: BoostMode) -> Self {
        BoostConfig {
            q,
            eps,
            n_total,
            lambda,
            density: FeatureDensity::gaussian_for_order(q.max(1)),
            seed: 0,
            mode,
            refine_order: RefineOrder::Descending,
            m_val: None,
            solver_tol: 1e-8,
            solver_max_iter: None,
            solver_method: PenalizedMethod::NormalCholesky,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.q == 0 || self.q > d {
            return Err(Error::invalid(format!("need 1 ≤ q ≤ d = {d}, got q = {}", self.q)));
        }
        if self.eps.is_nan() || self.eps < 0.0 {
            return Err(Error::invalid("threshold ε must be nonnegative"));
        }
        if self.n_total == 0 {
            return Err(Error::invalid("feature budget N must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("λ must be finite and nonnegative"));
        }
        if self.mode == BoostMode::Dependent && self.lambda == 0.0 {
            return Err(Error::invalid("the dependent algorithm needs λ > 0"));
        }
        if self.m_val == Some(0) {
            return Err(Error::invalid("m_val must be positive"));
        }
        self.density.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub u: VarSubset,
    pub s_var: f64,
    pub s_cor: f64,
    pub kept: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub round: usize,
    /// Estimates for the terms decided in this round.
    pub entries: Vec<TraceEntry>,
    /// `|U|` entering the round.
    pub size_before: usize,
    /// `|U|` leaving the round, after additions.
    pub size_after: usize,
    /// Features per nonempty group for the fit used by this round.
    pub features_per_group: usize,
    pub solver_iterations: Option<usize>,
    pub solver_residual: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoostTrace {
    pub rounds: Vec<BoostRound>,
    pub diagnostics: Vec<String>,
}

impl BoostTrace {
    /// `|U|` at the start and after every round.
    pub fn sizes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.rounds.first().map(|r| r.size_before).into_iter().collect();
        out.extend(self.rounds.iter().map(|r| r.size_after));
        out
    }

    /// CSV with header `round,u,s_var,s_cor,kept`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["round", "u", "s_var", "s_cor", "kept"])?;
        for r in &self.rounds {
            for e in &r.entries {
                w.write_record([
                    r.round.to_string(),
                    e.u.to_string(),
                    e.s_var.to_string(),
                    e.s_cor.to_string(),
                    e.kept.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

#[derive(Clone, Debug)]
pub struct BoostResult {
    pub index_set: AnovaIndexSet,
    /// Features drawn for the final `U`.
    pub features: FeatureSet,
    /// Coefficients of the last fit on `features`, when one was made.
    pub coefficients: Option<CoefficientVector>,
    pub trace: BoostTrace,
}

fn check_samples(x: &SampleSet, cfg: &BoostConfig, mode: BoostMode) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::invalid(format!("configuration is for {:?} inputs", cfg.mode)));
    }
    if x.len() < 2 {
        return Err(Error::invalid("boosting needs at least two samples"));
    }
    cfg.validate(x.dimension())
}

fn features_per_group(u: &AnovaIndexSet, n_total: usize) -> Result<usize> {
    if n_total < u.len() {
        return Err(Error::invalid(format!(
            "feature budget {n_total} is smaller than |U| = {}",
            u.len()
        )));
    }
    Ok(n_total / u.len())
}

const EMPTY_WARNING: &str = "no term passed the threshold; the model is constant";

/// Boosting for independent inputs.
///
/// Starts from all order-`q` terms and a dual ridge fit. Each of the `q`
/// rounds estimates the normalized variance of every maximal term of `U`,
/// drops those below `ε`, adds the uncovered subsets of the next order (see
/// [`RefineOrder`]), tops up the features and refits.
pub fn boost_independent(x: &SampleSet, cfg: &BoostConfig) -> Result<BoostResult> {
    check_samples(x, cfg, BoostMode::Independent)?;
    let d = x.dimension();
    let labels = x.labels();
    let variance = stats::sample_variance(labels)?;
    let eval = validation_points(x, cfg);

    let mut u_set = all_subsets_of_order(d, cfg.q)?;
    let mut features = draw_feature_set(&u_set, cfg.n_total, &cfg.density, None, cfg.seed)?;
    let mut coef = ridge_solve_dual(&assemble_matrix(&features, x.points())?, labels, cfg.lambda)?;
    let mut trace = BoostTrace::default();

    for t in 1..=cfg.q {
        let size_before = u_set.len();
        let n = features_per_group(&u_set, cfg.n_total)?;
        let mut entries = Vec::new();
        for u in u_set.maximal_terms() {
            if u.is_empty() {
                continue;
            }
            let s = mc_variance(&features, &coef, x.points(), &u, variance, eval.as_ref())?;
            let kept = s >= cfg.eps;
            if !kept {
                u_set.remove(&u);
            }
            entries.push(TraceEntry {
                u,
                s_var: s,
                s_cor: 0.0,
                kept,
            });
        }
        let order = match cfg.refine_order {
            RefineOrder::Descending => cfg.q - t,
            RefineOrder::Literal => t - 1,
        };
        u_set = u_set.union(&uncovered_subsets(&u_set, order)?)?;
        if u_set.is_empty() {
            u_set.insert(VarSubset::empty())?;
        }
        features = draw_feature_set(&u_set, cfg.n_total, &cfg.density, Some(&features), cfg.seed)?;
        coef = ridge_solve_dual(&assemble_matrix(&features, x.points())?, labels, cfg.lambda)?;
        trace.rounds.push(BoostRound {
            round: t,
            entries,
            size_before,
            size_after: u_set.len(),
            features_per_group: n,
            solver_iterations: None,
            solver_residual: None,
        });
    }
    if u_set.iter().all(|u| u.is_empty()) {
        trace.diagnostics.push(EMPTY_WARNING.into());
    }
    Ok(BoostResult {
        index_set: u_set,
        features,
        coefficients: Some(coef),
        trace,
    })
}

fn validation_points(x: &SampleSet, cfg: &BoostConfig) -> Option<Mat<f64>> {
    let m_val = cfg.m_val?;
    if m_val >= x.len() {
        return None;
    }
    let mut r = rng::stream(cfg.seed, rng::SPLITS, 1);
    let mut rows = rand::seq::index::sample(&mut r, x.len(), m_val).into_vec();
    rows.sort_unstable();
    Some(x.select(&rows).points().clone())
}

/// Boosting for possibly dependent inputs.
///
/// Starts from all terms up to order `q`. For `t = q, …, 1` it fits the
/// penalized model on freshly topped-up features, computes the Sobol-type
/// indices and keeps `u` when `S_var > ε` or `|u| < t`. The surviving set is
/// made anti-downward-closed and the features are topped up once more.
pub fn boost_dependent(x: &SampleSet, cfg: &BoostConfig) -> Result<BoostResult> {
    check_samples(x, cfg, BoostMode::Dependent)?;
    let d = x.dimension();
    let labels = x.labels();
    let constant = stats::sample_variance(labels)? <= 0.0;
    let opts = SolverOptions {
        lambda: cfg.lambda,
        tol: cfg.solver_tol,
        max_iter: cfg.solver_max_iter,
        track_objective: false,
        method: cfg.solver_method,
    };

    let mut u_set = all_subsets_up_to_order(d, cfg.q)?;
    let mut features: Option<FeatureSet> = None;
    let mut trace = BoostTrace::default();
    for (round, t) in (1..=cfg.q).rev().enumerate() {
        let size_before = u_set.len();
        let n = features_per_group(&u_set, cfg.n_total)?;
        let drawn = draw_feature_set(&u_set, cfg.n_total, &cfg.density, features.as_ref(), cfg.seed)?;
        let (entries, iterations, residual) = if constant {
            let entries = u_set
                .iter()
                .filter(|u| !u.is_empty())
                .map(|u| TraceEntry {
                    u: u.clone(),
                    s_var: 0.0,
                    s_cor: 0.0,
                    kept: false,
                })
                .collect::<Vec<_>>();
            (entries, None, None)
        } else {
            let a = assemble_matrix(&drawn, x.points())?;
            let penalty = build_penalty(&a, &u_set)?;
            let sol = penalized_solve(&a, labels, &penalty, &opts)?;
            let report = sobol_indices_dependent(&a, &sol.coefficients, labels)?;
            let entries = report
                .entries
                .iter()
                .map(|e| TraceEntry {
                    u: e.u.clone(),
                    s_var: e.s_var,
                    s_cor: e.s_cor,
                    kept: false,
                })
                .collect();
            (entries, Some(sol.iterations), Some(sol.normal_residual))
        };
        let mut entries = entries;
        for e in entries.iter_mut() {
            e.kept = e.s_var > cfg.eps || e.u.len() < t;
            if !e.kept {
                u_set.remove(&e.u);
            }
        }
        features = Some(drawn);
        trace.rounds.push(BoostRound {
            round: round + 1,
            entries,
            size_before,
            size_after: u_set.len(),
            features_per_group: n,
            solver_iterations: iterations,
            solver_residual: residual,
        });
    }
    let u_set = prune_to_anti_downward_closed(&u_set);
    let features = draw_feature_set(&u_set, cfg.n_total, &cfg.density, features.as_ref(), cfg.seed)?;
    if u_set.iter().all(|u| u.is_empty()) {
        trace.diagnostics.push(EMPTY_WARNING.into());
    }
    Ok(BoostResult {
        index_set: u_set,
        features,
        coefficients: None,
        trace,
    })
}

/// Dispatches on `cfg.mode`.
pub fn boost(x: &SampleSet, cfg: &BoostConfig) -> Result<BoostResult> {
    match cfg.mode {
        BoostMode::Independent => boost_independent(x, cfg),
        BoostMode::Dependent => boost_dependent(x, cfg),
    }
}
