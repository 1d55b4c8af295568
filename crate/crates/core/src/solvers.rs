//! Ridge solves, the hierarchical-orthogonality penalty and complex LSQR.

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::{c64, Col, Mat, Side};

use crate::error::{Error, Result};
use crate::features::{CoefficientVector, FeatureMatrix};
use crate::index_sets::{AnovaIndexSet, VarSubset};

pub(crate) fn col_from(v: &[c64]) -> Col<c64> {
    Col::from_fn(v.len(), |i| v[i])
}

pub(crate) fn col_to_vec(c: &Col<c64>) -> Vec<c64> {
    c.iter().copied().collect()
}

fn real_col(f: &[f64]) -> Col<c64> {
    Col::from_fn(f.len(), |i| c64::new(f[i], 0.0))
}

fn norm(v: &Col<c64>) -> f64 {
    v.norm_l2()
}

/// Ratio of extreme eigenvalues of a Hermitian PSD matrix.
fn condition_estimate(g: &Mat<c64>) -> Option<f64> {
    let ev = g.self_adjoint_eigenvalues(Side::Lower).ok()?;
    let lo = ev.first()?.abs();
    let hi = ev.last()?.abs();
    Some(if lo == 0.0 { f64::INFINITY } else { hi / lo })
}

/// `A*(AA* + λI)^{-1} f` for a plain matrix.
pub fn ridge_dual_matrix(a: &Mat<c64>, f: &[c64], lambda: f64) -> Result<Vec<c64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("λ must be a nonnegative number"));
    }
    if a.nrows() != f.len() {
        return Err(Error::invalid("label length does not match the matrix"));
    }
    let mut g = a * a.adjoint();
    for i in 0..g.nrows() {
        g[(i, i)] += c64::new(lambda, 0.0);
    }
    let llt = g
        .llt(Side::Lower)
        .map_err(|_| Error::solver("AA* + λI is numerically singular", condition_estimate(&g)))?;
    let y = llt.solve(col_from(f));
    let x = a.adjoint() * &y;
    let x = col_to_vec(&x);
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::solver(
            "dual solve produced non-finite values",
            condition_estimate(&g),
        ));
    }
    Ok(x)
}

/// Minimizer of `‖Aa − f‖² + λ‖a‖²` through the primal normal equations.
/// With `λ = 0` a QR least-squares solve is used instead.
pub fn ridge_primal_matrix(a: &Mat<c64>, f: &[c64], lambda: f64) -> Result<Vec<c64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("λ must be a nonnegative number"));
    }
    if a.nrows() != f.len() {
        return Err(Error::invalid("label length does not match the matrix"));
    }
    if lambda == 0.0 {
        if a.nrows() < a.ncols() {
            return Err(Error::invalid(
                "QR least squares needs at least as many rows as columns",
            ));
        }
        let x = a.qr().solve_lstsq(col_from(f));
        return Ok(col_to_vec(&x));
    }
    let mut g = a.adjoint() * a;
    for i in 0..g.nrows() {
        g[(i, i)] += c64::new(lambda, 0.0);
    }
    let rhs = a.adjoint() * col_from(f);
    let llt = g
        .llt(Side::Lower)
        .map_err(|_| Error::solver("A*A + λI is numerically singular", condition_estimate(&g)))?;
    Ok(col_to_vec(&llt.solve(rhs)))
}

/// Ridge solve choosing the smaller Gram system.
pub fn ridge_auto_matrix(a: &Mat<c64>, f: &[c64], lambda: f64) -> Result<Vec<c64>> {
    if a.ncols() >= a.nrows() {
        ridge_dual_matrix(a, f, lambda)
    } else {
        ridge_primal_matrix(a, f, lambda)
    }
}

pub fn ridge_solve_dual(a: &FeatureMatrix, f: &[f64], lambda: f64) -> Result<CoefficientVector> {
    let fc: Vec<c64> = f.iter().map(|&v| c64::new(v, 0.0)).collect();
    let x = ridge_dual_matrix(&a.matrix, &fc, lambda)?;
    CoefficientVector::new(x, a.layout.clone())
}

/// `Ŵ_u` and its principal square root.
#[derive(Clone, Debug)]
pub struct PenaltyBlock {
    pub w: Mat<c64>,
    pub sqrt: Mat<c64>,
}

/// Penalty blocks keyed by group, in canonical order.
#[derive(Clone, Debug)]
pub struct PenaltyBlocks {
    pub blocks: Vec<(VarSubset, PenaltyBlock)>,
}

impl PenaltyBlocks {
    pub fn get(&self, u: &VarSubset) -> Option<&PenaltyBlock> {
        self.blocks.iter().find(|(v, _)| v == u).map(|b| &b.1)
    }
}

/// Hermitian PSD square root by eigendecomposition; eigenvalues below
/// `1e-10·‖W‖` are clamped to zero.
pub fn psd_sqrt(w: &Mat<c64>) -> Result<Mat<c64>> {
    let n = w.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let evd = w
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::DecompositionFailure(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let scale = (0..n).map(|i| s[i].re.abs()).fold(0.0, f64::max);
    let cut = 1e-10 * scale;
    let roots: Vec<f64> = (0..n)
        .map(|i| if s[i].re <= cut { 0.0 } else { s[i].re.sqrt() })
        .collect();
    let scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] * roots[j]);
    Ok(&scaled * u.adjoint())
}

/// `Ŵ_u = (1/M²) Σ_{v⊊u} (A_v* A_u)* (A_v* A_u)` for every `u ∈ U` present
/// in the feature matrix. Only subsets `v` carrying features contribute;
/// the constant block `∅` must exist.
pub fn build_penalty(a: &FeatureMatrix, u_set: &AnovaIndexSet) -> Result<PenaltyBlocks> {
    let empty = VarSubset::empty();
    if a.layout.range(&empty).is_none() {
        return Err(Error::InvalidState("penalty needs the constant ∅ feature block".into()));
    }
    let m = a.nrows() as f64;
    let mut blocks = Vec::new();
    for u in u_set {
        let Some(ru) = a.layout.range(u) else {
            continue;
        };
        let au = a.matrix.subcols(ru.start, ru.len());
        let mut w = Mat::<c64>::zeros(ru.len(), ru.len());
        for v in u.strict_subsets() {
            let Some(rv) = a.layout.range(&v) else {
                continue;
            };
            let av = a.matrix.subcols(rv.start, rv.len());
            let b = av.adjoint() * au;
            w += b.adjoint() * &b;
        }
        w *= faer::Scale(c64::new(1.0 / (m * m), 0.0));
        for i in 0..w.nrows() {
            for j in 0..i {
                let avg = (w[(i, j)] + w[(j, i)].conj()) * 0.5;
                w[(i, j)] = avg;
                w[(j, i)] = avg.conj();
            }
            w[(i, i)] = c64::new(w[(i, i)].re, 0.0);
        }
        let sqrt = psd_sqrt(&w)?;
        blocks.push((u.clone(), PenaltyBlock { w, sqrt }));
    }
    Ok(PenaltyBlocks { blocks })
}

/// Per-block quadratic forms `a_u* Ŵ_u a_u` and their sum.
pub fn penalty_value(a: &CoefficientVector, penalty: &PenaltyBlocks) -> Result<(Vec<(VarSubset, f64)>, f64)> {
    let mut per = Vec::with_capacity(penalty.blocks.len());
    for (u, b) in &penalty.blocks {
        let au = a
            .block(u)
            .ok_or_else(|| Error::invalid(format!("coefficients lack block {u}")))?;
        if au.len() != b.w.nrows() {
            return Err(Error::invalid(format!("block {u} has mismatched size")));
        }
        let x = col_from(au);
        let wx = &b.w * &x;
        let q: c64 = x.iter().zip(wx.iter()).map(|(xi, yi)| xi.conj() * yi).sum();
        per.push((u.clone(), q.re.max(0.0)));
    }
    let total = per.iter().map(|p| p.1).sum();
    Ok((per, total))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub lambda: f64,
    pub tol: f64,
    /// Iteration cap: `10·(N + M)` LSQR steps or 100 refinement steps when
    /// `None`.
    pub max_iter: Option<usize>,
    /// Record `‖Aa − f‖² + λ a*Ŵa` after every iteration.
    pub track_objective: bool,
    pub method: PenalizedMethod,
}

/// How `penalized_solve` minimizes the stacked problem. Both return the
/// minimum-norm minimizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PenalizedMethod {
    /// LSQR on `[A; √λ·blockdiag(√Ŵ_u)]` started at zero.
    #[default]
    Lsqr,
    /// Iterated Tikhonov refinement `a ← a + (H + δI)^{-1}(A*f − Ha)` on the
    /// dense normal matrix `H = A*A + λŴ`, with one Cholesky factorization
    /// and `δ = 1e-10·max diag H`. Every update lies in the range of `H`, so
    /// the iteration converges to the minimum-norm solution.
    NormalCholesky,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            lambda: 1.0,
            tol: 1e-8,
            max_iter: None,
            track_objective: false,
            method: PenalizedMethod::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PenalizedSolution {
    pub coefficients: CoefficientVector,
    pub iterations: usize,
    /// `‖(A*A + λŴ)a − A*f‖ / ‖A*f‖`, recomputed explicitly at the end.
    pub normal_residual: f64,
    pub objective_history: Vec<f64>,
}

/// The stacked operator `[A; √λ·blockdiag(√Ŵ_u)]`.
struct Stacked<'a> {
    a: &'a Mat<c64>,
    pen: Vec<(std::ops::Range<usize>, &'a Mat<c64>)>,
    sqrt_lambda: f64,
    pen_rows: usize,
}

impl<'a> Stacked<'a> {
    fn new(a: &'a FeatureMatrix, penalty: &'a PenaltyBlocks, lambda: f64) -> Result<Self> {
        let mut pen = Vec::new();
        let mut pen_rows = 0;
        for (u, b) in &penalty.blocks {
            let r = a
                .layout
                .range(u)
                .ok_or_else(|| Error::invalid(format!("penalty block {u} has no features")))?;
            if r.len() != b.sqrt.nrows() {
                return Err(Error::invalid(format!("penalty block {u} has mismatched size")));
            }
            pen_rows += r.len();
            pen.push((r, &b.sqrt));
        }
        Ok(Stacked {
            a: &a.matrix,
            pen,
            sqrt_lambda: lambda.sqrt(),
            pen_rows,
        })
    }

    fn rows(&self) -> usize {
        self.a.nrows() + self.pen_rows
    }

    fn apply(&self, x: &Col<c64>) -> Col<c64> {
        let m = self.a.nrows();
        let mut out = Col::<c64>::zeros(self.rows());
        let top = self.a * x;
        out.subrows_mut(0, m).copy_from(&top);
        let mut off = m;
        for (r, s) in &self.pen {
            let y = *s * x.subrows(r.start, r.len());
            for i in 0..r.len() {
                out[off + i] = y[i] * self.sqrt_lambda;
            }
            off += r.len();
        }
        out
    }

    fn apply_adjoint(&self, y: &Col<c64>) -> Col<c64> {
        let m = self.a.nrows();
        let mut out = self.a.adjoint() * y.subrows(0, m);
        let mut off = m;
        for (r, s) in &self.pen {
            let z = s.adjoint() * y.subrows(off, r.len());
            for i in 0..r.len() {
                out[r.start + i] += z[i] * self.sqrt_lambda;
            }
            off += r.len();
        }
        out
    }

    fn objective(&self, x: &Col<c64>, b: &Col<c64>) -> f64 {
        (self.apply(x) - b).squared_norm_l2()
    }
}

/// Complex LSQR (Paige–Saunders) for `min ‖K x − b‖` started at `x0`,
/// stopping once the recurrence estimate of `‖K*(b − Kx)‖` drops below
/// `tol·‖K*(b − Kx0)‖`.
fn lsqr(
    k: &Stacked<'_>,
    b: &Col<c64>,
    x0: Col<c64>,
    tol: f64,
    max_iter: usize,
    mut history: Option<&mut Vec<f64>>,
) -> (Col<c64>, usize) {
    let mut x = x0;
    let mut u = b - k.apply(&x);
    let mut beta = norm(&u);
    if beta == 0.0 {
        return (x, 0);
    }
    u *= faer::Scale(c64::new(1.0 / beta, 0.0));
    let mut v = k.apply_adjoint(&u);
    let mut alpha = norm(&v);
    if alpha == 0.0 {
        return (x, 0);
    }
    v *= faer::Scale(c64::new(1.0 / alpha, 0.0));
    let atb = alpha * beta;
    let mut w = v.clone();
    let mut phi_bar = beta;
    let mut rho_bar = alpha;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        u = k.apply(&v) - &u * faer::Scale(c64::new(alpha, 0.0));
        beta = norm(&u);
        if beta > 0.0 {
            u *= faer::Scale(c64::new(1.0 / beta, 0.0));
            v = k.apply_adjoint(&u) - &v * faer::Scale(c64::new(beta, 0.0));
            alpha = norm(&v);
            if alpha > 0.0 {
                v *= faer::Scale(c64::new(1.0 / alpha, 0.0));
            }
        } else {
            alpha = 0.0;
        }
        let rho = rho_bar.hypot(beta);
        let c = rho_bar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rho_bar = -c * alpha;
        let phi = c * phi_bar;
        phi_bar *= s;
        x += &w * faer::Scale(c64::new(phi / rho, 0.0));
        w = &v - &w * faer::Scale(c64::new(theta / rho, 0.0));
        if let Some(h) = history.as_deref_mut() {
            h.push(k.objective(&x, b));
        }
        let normal_res = phi_bar * alpha * c.abs();
        if normal_res <= tol * atb || alpha == 0.0 || beta == 0.0 {
            break;
        }
    }
    (x, it)
}

/// Minimizes `‖Aa − f‖² + λ a*Ŵa`, stopping on the relative normal-equation
/// residual `‖(A*A + λŴ)a − A*f‖/‖A*f‖ ≤ tol`.
///
/// With LSQR the recurrence residual drifts from the true one on this
/// rank-deficient system, so the explicit residual is recomputed whenever
/// LSQR stops and the iteration is restarted from the current iterate.
pub fn penalized_solve(
    a: &FeatureMatrix,
    f: &[f64],
    penalty: &PenaltyBlocks,
    opts: &SolverOptions,
) -> Result<PenalizedSolution> {
    if !(opts.lambda > 0.0 && opts.lambda.is_finite()) {
        return Err(Error::invalid("penalized solve needs λ > 0"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if f.len() != a.nrows() {
        return Err(Error::invalid("label length does not match the matrix"));
    }
    let k = Stacked::new(a, penalty, opts.lambda)?;
    let mut b = Col::<c64>::zeros(k.rows());
    b.subrows_mut(0, f.len()).copy_from(real_col(f));
    let g = k.apply_adjoint(&b);
    let denom = norm(&g);
    let residual = |x: &Col<c64>| norm(&(&g - k.apply_adjoint(&k.apply(x)))) / denom;

    let mut x = Col::<c64>::zeros(a.ncols());
    let mut iterations = 0;
    let mut history = Vec::new();
    let mut normal_residual = if denom == 0.0 { 0.0 } else { 1.0 };
    match opts.method {
        PenalizedMethod::Lsqr => {
            let max_iter = opts.max_iter.unwrap_or(10 * (a.ncols() + a.nrows()));
            while normal_residual > opts.tol && iterations < max_iter {
                let inner_tol = (opts.tol / normal_residual).min(0.5);
                let (next, it) = lsqr(
                    &k,
                    &b,
                    x,
                    inner_tol,
                    max_iter - iterations,
                    opts.track_objective.then_some(&mut history),
                );
                x = next;
                iterations += it;
                let r = residual(&x);
                if !r.is_finite() {
                    return Err(Error::solver("LSQR produced non-finite values", None));
                }
                let stalled = it == 0 || r >= normal_residual;
                normal_residual = r;
                if stalled {
                    break;
                }
            }
        }
        PenalizedMethod::NormalCholesky if normal_residual > opts.tol => {
            let max_iter = opts.max_iter.unwrap_or(100);
            let mut h = penalized_normal_matrix(a, penalty, opts.lambda);
            let top = (0..h.nrows()).map(|i| h[(i, i)].re).fold(0.0, f64::max);
            // The largest shift keeps the singular case stable; smaller ones
            // take over when a regular but ill-conditioned system converges
            // slowly.
            let shifts = [1e-10, 1e-12, 1e-14];
            let mut applied = 0.0;
            for (level, shift) in shifts.iter().enumerate() {
                let last = level + 1 == shifts.len();
                let delta = shift * top;
                for i in 0..h.nrows() {
                    h[(i, i)] += c64::new(delta - applied, 0.0);
                }
                applied = delta;
                let Ok(llt) = h.llt(Side::Lower) else {
                    if level == 0 {
                        return Err(Error::solver("shifted normal matrix is not positive definite", None));
                    }
                    break;
                };
                // Refinement steps are cheap next to the factorization, so
                // keep going past `tol` while the residual still halves.
                let mut slow = false;
                while normal_residual > 0.0 && iterations < max_iter {
                    let r = &g - k.apply_adjoint(&k.apply(&x));
                    let step = llt.solve(r);
                    x += &step;
                    iterations += 1;
                    let next = residual(&x);
                    if !next.is_finite() {
                        return Err(Error::solver("refinement produced non-finite values", None));
                    }
                    if next >= normal_residual {
                        x -= &step;
                        slow = true;
                        break;
                    }
                    if opts.track_objective {
                        history.push(k.objective(&x, &b));
                    }
                    slow = next > 0.5 * normal_residual;
                    normal_residual = next;
                    if slow && (normal_residual <= opts.tol || !last) {
                        break;
                    }
                }
                if normal_residual <= opts.tol || !slow {
                    break;
                }
            }
        }
        PenalizedMethod::NormalCholesky => {}
    }
    if normal_residual > opts.tol {
        return Err(Error::solver(
            format!("penalized solve stopped after {iterations} iterations without converging"),
            Some(normal_residual),
        ));
    }
    Ok(PenalizedSolution {
        coefficients: CoefficientVector::new(col_to_vec(&x), a.layout.clone())?,
        iterations,
        normal_residual,
        objective_history: history,
    })
}

/// Dense `A*A + λŴ` (for tests and small problems).
pub fn penalized_normal_matrix(a: &FeatureMatrix, penalty: &PenaltyBlocks, lambda: f64) -> Mat<c64> {
    let mut g = a.matrix.adjoint() * &a.matrix;
    for (u, b) in &penalty.blocks {
        if let Some(r) = a.layout.range(u) {
            for i in 0..r.len() {
                for j in 0..r.len() {
                    g[(r.start + i, r.start + j)] += b.w[(i, j)] * lambda;
                }
            }
        }
    }
    g
}

/// `A_u a_u` for one block.
pub fn block_apply(a: &FeatureMatrix, coef: &CoefficientVector, u: &VarSubset) -> Option<Vec<c64>> {
    let r = a.layout.range(u)?;
    let cu = coef.block(u)?;
    let sub = a.matrix.subcols(r.start, r.len());
    let y = sub * col_from(cu);
    Some(col_to_vec(&y))
}
