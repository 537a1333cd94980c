//! Device identification without knowledge of the activity probability:
//! group lasso over the stacked real/imaginary window, solved by
//! block-coordinate descent, with the tuning parameter chosen by a BIC score
//! and golden-section search.

mod golden;

pub use golden::{golden_section, GoldenResult};

use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::ident_ridge::RidgeOperator;
use crate::waveform::ObservationWindow;
use crate::{CMatrix, Error, Result};

/// Score returned when the fit is exact and the log-residual is undefined.
pub const BIC_ZERO_RESIDUAL: f64 = -1e300;

/// Base score of a support with at least as many columns as chips, whose
/// least-squares refit interpolates the data. The support size is added so
/// that the search is pushed toward sparser models.
pub const BIC_SATURATED: f64 = 1e6;

/// `Y = [Re R | Im R]` against a real dictionary, with groups
/// `G_k = rows {2k, 2k+1}` of the coefficient matrix.
#[derive(Clone, Debug)]
pub struct StackedProblem {
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub l: usize,
    pub n_d: f64,
    /// `X_G^T X_G` per group.
    gram: Vec<Matrix2<f64>>,
    /// Eigen-decomposition of each group Gram: (eigenvalues, eigenvectors).
    eig: Vec<(Vector2<f64>, Matrix2<f64>)>,
}

pub fn stack_real(r: &CMatrix) -> DMatrix<f64> {
    let (n, l) = r.shape();
    DMatrix::from_fn(n, 2 * l, |i, j| if j < l { r[(i, j)].re } else { r[(i, j - l)].im })
}

pub fn unstack(y: &DMatrix<f64>) -> CMatrix {
    let l = y.ncols() / 2;
    CMatrix::from_fn(y.nrows(), l, |i, j| crate::Complex64::new(y[(i, j)], y[(i, j + l)]))
}

impl StackedProblem {
    pub fn new(x: &DMatrix<f64>, r: &CMatrix) -> Result<Self> {
        Self::from_real(x, stack_real(r))
    }

    pub fn from_real(x: &DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Dimension(format!("X has {} rows, Y has {}", x.nrows(), y.nrows())));
        }
        if !x.ncols().is_multiple_of(2) || !y.ncols().is_multiple_of(2) || y.ncols() == 0 {
            return Err(Error::Dimension("X and Y need an even, nonzero number of columns".into()));
        }
        let k_u = x.ncols() / 2;
        let mut gram = Vec::with_capacity(k_u);
        let mut eig = Vec::with_capacity(k_u);
        for k in 0..k_u {
            let a = x.column(2 * k);
            let b = x.column(2 * k + 1);
            let ab = a.dot(&b);
            let g = Matrix2::new(a.norm_squared(), ab, ab, b.norm_squared());
            let e = SymmetricEigen::new(g);
            gram.push(g);
            eig.push((e.eigenvalues, e.eigenvectors));
        }
        let l = y.ncols() / 2;
        Ok(StackedProblem {
            n_d: (y.ncols() * y.nrows()) as f64,
            y,
            x: x.clone(),
            l,
            gram,
            eig,
        })
    }

    pub fn k_u(&self) -> usize {
        self.x.ncols() / 2
    }

    pub fn residual(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        &self.y - &self.x * u
    }

    /// `1/2 ||Y - X U||_F^2 + N_d lambda sum_k ||U_{G_k}||_F`.
    pub fn objective(&self, u: &DMatrix<f64>, lambda: f64) -> f64 {
        0.5 * self.residual(u).norm_squared() + self.n_d * lambda * group_norms(u).iter().sum::<f64>()
    }

    /// Smallest tuning parameter with an all-zero solution.
    pub fn lambda_max(&self) -> f64 {
        (0..self.k_u())
            .map(|k| self.x.columns(2 * k, 2).tr_mul(&self.y).norm())
            .fold(0.0, f64::max)
            / self.n_d
    }
}

pub fn group_norms(u: &DMatrix<f64>) -> Vec<f64> {
    (0..u.nrows() / 2).map(|k| u.rows(2 * k, 2).norm()).collect()
}

/// Per-row correlations of group `k`: row `i` is `x_i^T (Y - X U_{-i})`,
/// where `U_{-i}` has row `i` zeroed.
pub fn group_correlation(p: &StackedProblem, u: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    group_correlation_from_residual(p, &p.residual(u), u, k)
}

fn group_correlation_from_residual(p: &StackedProblem, r: &DMatrix<f64>, u: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut phi = p.x.columns(2 * k, 2).tr_mul(r);
    for i in 0..2 {
        let d = p.gram[k][(i, i)];
        let mut row = phi.row_mut(i);
        row += u.row(2 * k + i) * d;
    }
    phi
}

/// Mutable solver state; the residual is kept equal to `Y - X U`.
#[derive(Clone, Debug)]
pub struct GroupLassoState {
    pub u: DMatrix<f64>,
    pub lambda: f64,
    pub residual: DMatrix<f64>,
    pub sweep: usize,
}

impl GroupLassoState {
    pub fn new(p: &StackedProblem, u: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if u.shape() != (p.x.ncols(), p.y.ncols()) {
            return Err(Error::Dimension(format!("U is {:?}, expected {:?}", u.shape(), (p.x.ncols(), p.y.ncols()))));
        }
        if !(lambda >= 0.0) {
            return Err(Error::range("lambda must be non-negative"));
        }
        Ok(GroupLassoState {
            residual: p.residual(&u),
            u,
            lambda,
            sweep: 0,
        })
    }
}

/// Exact minimizer over group `k` with every other group held fixed. Returns
/// the squared Frobenius change of the group.
///
/// With `b = X_G^T (R + X_G U_G)`, the group is zero iff `||b|| <= mu`.
/// Otherwise `U_G = (G + mu/s I)^-1 b` where the group norm `s` solves
/// `sum_i ||c_i||^2 / (e_i s + mu)^2 = 1` in the eigenbasis of `G`.
pub fn group_update(p: &StackedProblem, state: &mut GroupLassoState, k: usize) -> f64 {
    let mu = p.n_d * state.lambda;
    let xg = p.x.columns(2 * k, 2);
    let old = state.u.rows(2 * k, 2).into_owned();
    let b = xg.tr_mul(&state.residual) + p.gram[k] * &old;
    let b_norm = b.norm();
    let new = if b_norm <= mu {
        DMatrix::zeros(2, b.ncols())
    } else {
        let (e, v) = &p.eig[k];
        let c = v.transpose() * &b;
        let n = [c.row(0).norm_squared(), c.row(1).norm_squared()];
        let e_max = e.max();
        let tol = 1e-12 * e_max.max(f64::MIN_POSITIVE);
        let live: Vec<usize> = (0..2).filter(|&i| e[i] > tol).collect();
        let scale: Vec<f64> = if mu == 0.0 {
            (0..2).map(|i| if e[i] > tol { 1.0 / e[i] } else { 0.0 }).collect()
        } else {
            let s = solve_group_norm(&live.iter().map(|&i| (e[i], n[i])).collect::<Vec<_>>(), mu, b_norm);
            (0..2).map(|i| if e[i] > tol { s / (e[i] * s + mu) } else { 0.0 }).collect()
        };
        let mut scaled = c;
        for i in 0..2 {
            let mut row = scaled.row_mut(i);
            row *= scale[i];
        }
        let out = v * scaled;
        DMatrix::from_column_slice(2, out.ncols(), out.as_slice())
    };
    let delta = &new - &old;
    let change = delta.norm_squared();
    if change > 0.0 {
        state.residual -= xg * &delta;
        state.u.rows_mut(2 * k, 2).copy_from(&new);
    }
    change
}

/// Root of `sum (n_i / (e_i s + mu)^2) = 1` for `s > 0`, given `||b|| > mu`.
fn solve_group_norm(terms: &[(f64, f64)], mu: f64, b_norm: f64) -> f64 {
    let f = |s: f64| -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for &(e, n) in terms {
            let den = e * s + mu;
            v += n / (den * den);
            d -= 2.0 * n * e / (den * den * den);
        }
        (v - 1.0, d)
    };
    let e_max = terms.iter().map(|t| t.0).fold(0.0, f64::max);
    let e_min = terms.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
    let mut lo = (b_norm - mu) / e_max;
    let mut hi = (b_norm - mu) / e_min;
    if terms.len() < 2 || hi - lo <= 1e-15 * hi {
        return lo.max(0.0);
    }
    let mut s = lo;
    for _ in 0..100 {
        let (v, d) = f(s);
        if v == 0.0 {
            return s;
        }
        if v > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let mut next = s - v / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-15 * next.abs() || hi - lo <= 1e-15 * hi {
            return next;
        }
        s = next;
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    pub k: usize,
    pub active: bool,
    /// Active: relative stationarity error. Inactive: `||phi_k|| / (N_d lambda)`.
    pub value: f64,
}

/// Optimality residuals of every group at `u`.
pub fn kkt_residuals(p: &StackedProblem, u: &DMatrix<f64>, lambda: f64) -> Vec<KktResidual> {
    let r = p.residual(u);
    let mu = p.n_d * lambda;
    (0..p.k_u())
        .map(|k| {
            let phi = group_correlation_from_residual(p, &r, u, k);
            let ug = u.rows(2 * k, 2);
            let s = ug.norm();
            if s > 0.0 {
                let mut fit = ug.into_owned();
                for i in 0..2 {
                    let mut row = fit.row_mut(i);
                    row *= mu / s + p.gram[k][(i, i)];
                }
                let den = phi.norm().max(f64::MIN_POSITIVE);
                KktResidual {
                    k,
                    active: true,
                    value: (&phi - fit).norm() / den,
                }
            } else {
                KktResidual {
                    k,
                    active: false,
                    value: if mu > 0.0 { phi.norm() / mu } else { phi.norm() },
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcdOutcome {
    pub u: DMatrix<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep, starting with the initial point.
    pub objective: Vec<f64>,
}

/// Cyclic block-coordinate descent over groups in ascending order.
pub fn group_lasso_bcd(p: &StackedProblem, lambda: f64, u_init: &DMatrix<f64>, eps_c: f64, max_sweeps: usize) -> Result<BcdOutcome> {
    if max_sweeps == 0 {
        return Err(Error::range("at least one sweep is required"));
    }
    let mut st = GroupLassoState::new(p, u_init.clone(), lambda)?;
    let mut objective = vec![p.objective(&st.u, lambda)];
    let mut converged = false;
    while st.sweep < max_sweeps {
        st.sweep += 1;
        let mut change = 0.0;
        for k in 0..p.k_u() {
            change += group_update(p, &mut st, k);
        }
        objective.push(0.5 * st.residual.norm_squared() + p.n_d * lambda * group_norms(&st.u).iter().sum::<f64>());
        if change.sqrt() < eps_c {
            converged = true;
            break;
        }
    }
    Ok(BcdOutcome {
        u: st.u,
        sweeps: st.sweep,
        converged,
        objective,
    })
}

/// Sweep tolerance relative to the initial point, with an absolute floor.
pub fn default_eps_c(u_init: &DMatrix<f64>) -> f64 {
    (1e-6 * u_init.norm()).max(1e-10)
}

/// `sum_k 1{u_k != 0} + (2L - 1) sum_k ||u_k|| / ||u_k^LS||`; groups with a
/// zero least-squares norm add nothing to the second sum.
pub fn degrees_of_freedom(u_hat: &DMatrix<f64>, u_ls: &DMatrix<f64>) -> f64 {
    let l = u_hat.ncols() / 2;
    let a = group_norms(u_hat);
    let b = group_norms(u_ls);
    let active = a.iter().filter(|&&v| v > 0.0).count() as f64;
    let ratio: f64 = a.iter().zip(&b).filter(|(_, &n)| n > 0.0).map(|(x, n)| x / n).sum();
    active + (2.0 * l as f64 - 1.0) * ratio
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicScore {
    pub score: f64,
    pub zero_residual: bool,
}

/// `ln(||Y - X U||_F^2 / N_d) + ln(N_d) df / N_d`.
pub fn bic_score(p: &StackedProblem, u_hat: &DMatrix<f64>, df: f64) -> BicScore {
    bic_from_rss(p.residual(u_hat).norm_squared(), p.n_d, df)
}

fn bic_from_rss(rss: f64, n_d: f64, df: f64) -> BicScore {
    if rss <= 0.0 {
        return BicScore {
            score: BIC_ZERO_RESIDUAL,
            zero_residual: true,
        };
    }
    BicScore {
        score: (rss / n_d).ln() + n_d.ln() * df / n_d,
        zero_residual: false,
    }
}

/// Search interval for the tuning parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaRange {
    /// Absolute interval and bracket tolerance.
    Fixed { lo: f64, hi: f64, eps_g: f64 },
    /// `[lo_frac, 1] * lambda_max` with tolerance `eps_rel * lambda_max`.
    Auto { lo_frac: f64, eps_rel: f64 },
}

impl Default for LambdaRange {
    fn default() -> Self {
        LambdaRange::Auto {
            lo_frac: 0.0,
            eps_rel: 0.004,
        }
    }
}

/// Which coefficients the score is evaluated on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BicFit {
    /// The group-lasso estimate itself, with degrees of freedom measured
    /// against the minimum-norm least-squares solution.
    Shrunk,
    /// Least-squares refit on the group-lasso support (`df = 2L |S|`);
    /// saturated supports score above [`BIC_SATURATED`].
    #[default]
    Refit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BicParams {
    pub range: LambdaRange,
    pub fit: BicFit,
    /// Golden-section evaluation budget.
    pub m_g: usize,
    /// Sweep budget of the inner solver.
    pub m_c: usize,
    /// Inner tolerance as a fraction of the warm start norm.
    pub eps_c_rel: f64,
    /// GCV grid size for the ridge warm start.
    pub gcv_points: usize,
}

impl Default for BicParams {
    fn default() -> Self {
        BicParams {
            range: LambdaRange::default(),
            fit: BicFit::default(),
            m_g: 20,
            m_c: 200,
            eps_c_rel: 1e-6,
            gcv_points: 60,
        }
    }
}

impl BicParams {
    pub fn validate(&self) -> Result<()> {
        match self.range {
            LambdaRange::Fixed { lo, hi, eps_g } => {
                if !(lo >= 0.0 && lo < hi && eps_g > 0.0) {
                    return Err(Error::config("bic range needs 0 <= lo < hi and eps_g > 0"));
                }
            }
            LambdaRange::Auto { lo_frac, eps_rel } => {
                if !((0.0..1.0).contains(&lo_frac) && eps_rel > 0.0) {
                    return Err(Error::config("bic auto range needs lo_frac in [0, 1) and eps_rel > 0"));
                }
            }
        }
        if self.m_g < 2 || self.m_c == 0 || !(self.eps_c_rel > 0.0) || self.gcv_points == 0 {
            return Err(Error::config("bic needs m_g >= 2, m_c >= 1, eps_c_rel > 0, gcv_points >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicEvaluation {
    pub lambda: f64,
    pub score: f64,
    pub zero_residual: bool,
    pub saturated: bool,
    pub df: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub support_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicTrace {
    pub lambda_max: f64,
    pub ridge_lambda: f64,
    pub lambda_hat: f64,
    pub evaluations: Vec<BicEvaluation>,
}

impl BicTrace {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicIdentification {
    pub active: Vec<usize>,
    pub df: f64,
    /// False when any inner solve hit its sweep budget.
    pub converged: bool,
    pub trace: BicTrace,
}

/// Everything the search needs that does not depend on the tuning parameter.
pub struct BicSession<'a> {
    pub problem: StackedProblem,
    pub warm: DMatrix<f64>,
    pub u_ls: DMatrix<f64>,
    pub ridge_lambda: f64,
    pub eps_c: f64,
    params: &'a BicParams,
}

impl<'a> BicSession<'a> {
    pub fn new(window: &ObservationWindow, op: &RidgeOperator, params: &'a BicParams) -> Result<Self> {
        params.validate()?;
        if window.l() == 0 {
            return Err(Error::range("empty observation window"));
        }
        let problem = StackedProblem::new(&op.x, &window.r)?;
        let ridge_lambda = op.gcv_tune(&window.r, &op.default_grid(params.gcv_points))?;
        let warm = stack_real(&op.solve(&window.r, ridge_lambda));
        let u_ls = &op.estimator(0.0) * &problem.y;
        let eps_c = (params.eps_c_rel * warm.norm()).max(1e-10);
        Ok(BicSession {
            problem,
            warm,
            u_ls,
            ridge_lambda,
            eps_c,
            params,
        })
    }

    /// Solves at `lambda` from the ridge warm start and scores the result.
    pub fn evaluate(&self, lambda: f64) -> Result<(BicEvaluation, DMatrix<f64>)> {
        let out = group_lasso_bcd(&self.problem, lambda, &self.warm, self.eps_c, self.params.m_c)?;
        let groups = support(&out.u);
        let (score, df, saturated) = match self.params.fit {
            BicFit::Shrunk => {
                let df = degrees_of_freedom(&out.u, &self.u_ls);
                (bic_score(&self.problem, &out.u, df), df, false)
            }
            BicFit::Refit => match refit_support(&self.problem, &groups) {
                Some(u) => {
                    let df = degrees_of_freedom(&u, &u);
                    (bic_score(&self.problem, &u, df), df, false)
                }
                None => (
                    BicScore {
                        score: BIC_SATURATED + groups.len() as f64,
                        zero_residual: false,
                    },
                    f64::NAN,
                    true,
                ),
            },
        };
        Ok((
            BicEvaluation {
                lambda,
                score: score.score,
                zero_residual: score.zero_residual,
                saturated,
                df,
                sweeps: out.sweeps,
                converged: out.converged,
                support_size: groups.len(),
            },
            out.u,
        ))
    }

    pub fn bracket(&self) -> (f64, f64, f64) {
        match self.params.range {
            LambdaRange::Fixed { lo, hi, eps_g } => (lo, hi, eps_g),
            LambdaRange::Auto { lo_frac, eps_rel } => {
                let lm = self.problem.lambda_max();
                (lo_frac * lm, lm, eps_rel * lm)
            }
        }
    }
}

pub fn support(u: &DMatrix<f64>) -> Vec<usize> {
    group_norms(u)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(k, _)| k)
        .collect()
}

/// Golden-section search of the BIC score over the tuning parameter, with the
/// group-lasso solver warm-started from a GCV-tuned ridge estimate.
pub fn identify_bic(window: &ObservationWindow, op: &RidgeOperator, params: &BicParams) -> Result<BicIdentification> {
    let session = BicSession::new(window, op, params)?;
    let (lo, hi, eps) = session.bracket();
    let mut evaluations = Vec::new();
    let lambda_max = session.problem.lambda_max();
    if !(hi > lo) {
        // Y is orthogonal to every group: nothing to identify.
        return Ok(BicIdentification {
            active: Vec::new(),
            df: 0.0,
            converged: true,
            trace: BicTrace {
                lambda_max,
                ridge_lambda: session.ridge_lambda,
                lambda_hat: hi,
                evaluations,
            },
        });
    }
    let g = golden_section(
        |lambda| {
            let (e, _) = session.evaluate(lambda)?;
            let s = e.score;
            evaluations.push(e);
            Ok(s)
        },
        lo,
        hi,
        eps,
        params.m_g,
    )?;
    let (mut best, mut u) = session.evaluate(g.x)?;
    let mut lambda_hat = g.x;
    // The empty model at the upper end of the bracket is never visited by the
    // interior search, so compare against it explicitly.
    let (top, u_top) = session.evaluate(hi)?;
    if top.score < best.score {
        (best, u, lambda_hat) = (top.clone(), u_top, hi);
    }
    evaluations.push(top);
    let converged = evaluations.iter().all(|e| e.converged);
    Ok(BicIdentification {
        active: support(&u),
        df: best.df,
        converged,
        trace: BicTrace {
            lambda_max,
            ridge_lambda: session.ridge_lambda,
            lambda_hat,
            evaluations,
        },
    })
}

/// Reference selector: the BIC minimizer over a dense grid of the same
/// bracket. Used to check how often golden section lands on the same support.
pub fn identify_bic_grid(window: &ObservationWindow, op: &RidgeOperator, params: &BicParams, points: usize) -> Result<BicIdentification> {
    let session = BicSession::new(window, op, params)?;
    let (lo, hi, _) = session.bracket();
    let lambda_max = session.problem.lambda_max();
    let mut evaluations = Vec::with_capacity(points);
    let mut best: Option<(f64, DMatrix<f64>, f64, f64)> = None;
    for i in 0..points {
        let lambda = lo + (hi - lo) * (i as f64 + 0.5) / points as f64;
        let (e, u) = session.evaluate(lambda)?;
        if best.as_ref().is_none_or(|b| e.score < b.0) {
            best = Some((e.score, u, lambda, e.df));
        }
        evaluations.push(e);
    }
    let (_, u, lambda_hat, df) = best.ok_or_else(|| Error::range("empty grid"))?;
    Ok(BicIdentification {
        active: support(&u),
        df,
        converged: evaluations.iter().all(|e| e.converged),
        trace: BicTrace {
            lambda_max,
            ridge_lambda: session.ridge_lambda,
            lambda_hat,
            evaluations,
        },
    })
}

/// Least-squares coefficients restricted to `groups` (zero elsewhere), or
/// `None` when the selected columns are at least as many as the chips.
pub fn refit_support(p: &StackedProblem, groups: &[usize]) -> Option<DMatrix<f64>> {
    let mut u = DMatrix::zeros(p.x.ncols(), p.y.ncols());
    if groups.is_empty() {
        return Some(u);
    }
    let cols: Vec<usize> = groups.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect();
    if cols.len() >= p.x.nrows() {
        return None;
    }
    let coef = p.x.select_columns(&cols).svd(true, true).solve(&p.y, 1e-12).ok()?;
    for (i, &c) in cols.iter().enumerate() {
        u.row_mut(c).copy_from(&coef.row(i));
    }
    Some(u)
}

/// Refit score of a fixed support; brute-force reference for tiny cases.
pub fn refit_bic(p: &StackedProblem, groups: &[usize]) -> BicScore {
    match refit_support(p, groups) {
        Some(u) => bic_score(p, &u, 2.0 * p.l as f64 * groups.len() as f64),
        None => BicScore {
            score: BIC_SATURATED + groups.len() as f64,
            zero_residual: false,
        },
    }
}

/// Support of minimum refit BIC over all subsets of at most `max_size` groups.
pub fn exhaustive_support(p: &StackedProblem, max_size: usize) -> Vec<usize> {
    let k_u = p.k_u();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u64..(1u64 << k_u) {
        if mask.count_ones() as usize > max_size {
            continue;
        }
        let groups: Vec<usize> = (0..k_u).filter(|&k| mask >> k & 1 == 1).collect();
        let s = refit_bic(p, &groups).score;
        if s < best.0 {
            best = (s, groups);
        }
    }
    best.1
}
