//! Device identification for a known activity probability: ridge
//! reconstruction, closed-form second-order statistics of the estimate, and
//! per-device calibrated quadratic tests fused over the observation window.

pub mod chisq;
pub mod detector;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chisq::{
    calibrate_threshold, detection_probability, predicted_detection, tail_gil_pelaez, weighted_chisq_tail,
};
pub use detector::{
    calibration_csv, canonical_detector, default_n_fuse, select_branch, Canonical, DeviceDetector, Lemma1Stats,
};

use crate::model::{DeviceProfile, Dictionary};
use crate::waveform::ObservationWindow;
use crate::{Error, Result};

/// Ridge estimate from the `2K_u x 2K_u` normal equations, solved by Cholesky
/// for the real and imaginary parts.
pub fn ridge_solve(x: &DMatrix<f64>, r: &DVector<Complex64>, lambda: f64) -> Result<DVector<Complex64>> {
    if lambda < 0.0 {
        return Err(Error::range("lambda must be non-negative"));
    }
    let mut a = x.tr_mul(x);
    for i in 0..a.nrows() {
        a[(i, i)] += 2.0 * lambda;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular("X^T X + 2 lambda I is not positive definite".into()))?;
    let re = chol.solve(&x.tr_mul(&r.map(|z| z.re)));
    let im = chol.solve(&x.tr_mul(&r.map(|z| z.im)));
    Ok(re.zip_map(&im, Complex64::new))
}

/// Spectral form of the ridge operator built on the small `N_c x N_c` Gram
/// `X X^T = U diag(s) U^T`; every quantity below uses the push-through identity
/// `(X^T X + c I)^-1 X^T = X^T (X X^T + c I)^-1`.
#[derive(Clone, Debug)]
pub struct RidgeOperator {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    /// `X^T U`, cached for estimator construction.
    xtu: DMatrix<f64>,
}

impl RidgeOperator {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let g = x * x.transpose();
        let eig = SymmetricEigen::new(g);
        let xtu = x.tr_mul(&eig.eigenvectors);
        RidgeOperator {
            x: x.clone(),
            u: eig.eigenvectors,
            s: eig.eigenvalues.map(|v| v.max(0.0)),
            xtu,
        }
    }

    fn inv_shifted(&self, lambda: f64) -> DVector<f64> {
        let tol = 1e-12 * self.s.max().max(1.0);
        self.s.map(|v| {
            let d = v + 2.0 * lambda;
            if d > tol {
                1.0 / d
            } else {
                0.0
            }
        })
    }

    /// `E = (X^T X + 2 lambda I)^-1 X^T` (`2K_u x N_c`). At `lambda = 0` this
    /// is the pseudo-inverse.
    pub fn estimator(&self, lambda: f64) -> DMatrix<f64> {
        let d = self.inv_shifted(lambda);
        let mut scaled = self.xtu.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= d[j];
        }
        scaled * self.u.transpose()
    }

    /// Ridge estimate of each column of `r`.
    pub fn solve(&self, r: &DMatrix<Complex64>, lambda: f64) -> DMatrix<Complex64> {
        let e = self.estimator(lambda);
        let re = &e * r.map(|z| z.re);
        let im = &e * r.map(|z| z.im);
        re.zip_map(&im, Complex64::new)
    }

    /// Pooled generalized cross-validation score over the columns of `r`:
    /// `sum_j ||(I - Q) r_j||^2 / tr(I - Q)^2`.
    pub fn gcv_score(&self, r: &DMatrix<Complex64>, lambda: f64) -> f64 {
        let proj_re = self.u.tr_mul(&r.map(|z| z.re));
        let proj_im = self.u.tr_mul(&r.map(|z| z.im));
        self.gcv_from_projections(&proj_re, &proj_im, lambda)
    }

    fn gcv_from_projections(&self, p_re: &DMatrix<f64>, p_im: &DMatrix<f64>, lambda: f64) -> f64 {
        let mut num = 0.0;
        let mut tr = 0.0;
        for (i, &si) in self.s.iter().enumerate() {
            let f = if lambda == 0.0 && si > 0.0 { 0.0 } else { 2.0 * lambda / (si + 2.0 * lambda) };
            tr += f;
            let e: f64 = p_re.row(i).norm_squared() + p_im.row(i).norm_squared();
            num += f * f * e;
        }
        num / (tr * tr)
    }

    /// Grid point minimizing the pooled GCV score (first one on ties).
    pub fn gcv_tune(&self, r: &DMatrix<Complex64>, grid: &[f64]) -> Result<f64> {
        if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::range("GCV grid must be nonempty and positive"));
        }
        let p_re = self.u.tr_mul(&r.map(|z| z.re));
        let p_im = self.u.tr_mul(&r.map(|z| z.im));
        let mut best = (grid[0], f64::INFINITY);
        for &l in grid {
            let v = self.gcv_from_projections(&p_re, &p_im, l);
            if v < best.1 {
                best = (l, v);
            }
        }
        Ok(best.0)
    }

    /// Log-spaced grid spanning the Gram spectrum.
    pub fn default_grid(&self, points: usize) -> Vec<f64> {
        let top = self.s.max().max(1e-12);
        let (lo, hi) = ((top * 1e-6).ln(), (top * 1e2).ln());
        (0..points)
            .map(|i| (lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64).exp())
            .collect()
    }
}

/// Single-column GCV tuning over `grid`.
pub fn gcv_tune(x: &DMatrix<f64>, r: &DVector<Complex64>, grid: &[f64]) -> Result<f64> {
    let op = RidgeOperator::new(x);
    op.gcv_tune(&DMatrix::from_column_slice(r.len(), 1, r.as_slice()), grid)
}

fn inverse_gram(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() > x.nrows() {
        return Err(Error::Singular(format!(
            "X^T X is {0}x{0} with rank at most {1}",
            x.ncols(),
            x.nrows()
        )));
    }
    let g = x.tr_mul(x);
    let eig = SymmetricEigen::new(g.clone());
    let top = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|&v| v <= 1e-12 * top) {
        return Err(Error::Singular("X^T X is numerically singular".into()));
    }
    g.try_inverse().ok_or_else(|| Error::Singular("X^T X inversion failed".into()))
}

/// Closed-form MMSE-motivated tuning parameter
/// `noise_var tr(S^-1) / (P_a sum_i gamma_{i/2} (S^-1)_ii + 3 tr(S^-2))`, `S = X^T X`.
/// Errors when `S` is singular, which is always the case for `K_u > N_c / 2`.
pub fn lambda_opt(x: &DMatrix<f64>, gamma: &[f64], p_a: f64, noise_var: f64) -> Result<f64> {
    if gamma.len() * 2 != x.ncols() {
        return Err(Error::Dimension("gamma length must be K_u".into()));
    }
    if !(p_a >= 0.0) {
        return Err(Error::range("P_a must be non-negative"));
    }
    let inv = inverse_gram(x)?;
    let tr = inv.trace();
    let weighted: f64 = (0..inv.nrows()).map(|i| gamma[i / 2] * inv[(i, i)]).sum();
    let tr2 = inv.norm_squared();
    Ok(noise_var * tr / (p_a * weighted + 3.0 * tr2))
}

/// Per-column version that uses the true coefficient vector `h` in place of
/// its expectation; only meaningful as a reference in tests.
pub fn lambda_opt_oracle(x: &DMatrix<f64>, h: &DVector<Complex64>, noise_var: f64) -> Result<f64> {
    let inv = inverse_gram(x)?;
    let quad = (h.adjoint() * inv.map(|v| Complex64::new(v, 0.0)) * h)[(0, 0)].re;
    Ok(noise_var * inv.trace() / (quad + 3.0 * inv.norm_squared()))
}

/// Everything the per-device tests need, computed once per dictionary and
/// operating point.
#[derive(Clone, Debug)]
pub struct RidgeContext {
    pub lambda: f64,
    pub p_a: f64,
    pub noise_var: f64,
    /// `(X^T X + 2 lambda I)^-1 X^T`.
    pub estimator: DMatrix<f64>,
    /// `I - 2 lambda (X^T X + 2 lambda I)^-1`.
    pub omega: DMatrix<f64>,
    /// Covariance of the filtered noise.
    pub noise_cov: DMatrix<f64>,
    /// `E|g_k|^2`.
    pub gamma: Vec<f64>,
    /// Per-device `[E(Re g)^2, E(Im g)^2, E(Re g Im g)]`.
    pub moments: Vec<[f64; 3]>,
}

impl RidgeContext {
    pub fn new(op: &RidgeOperator, profiles: &[DeviceProfile], p_a: f64, noise_var: f64, lambda: f64) -> Result<Self> {
        if profiles.len() * 2 != op.x.ncols() {
            return Err(Error::Dimension("profiles do not match the dictionary".into()));
        }
        let estimator = op.estimator(lambda);
        let omega = &estimator * &op.x;
        let noise_cov = (&estimator * estimator.transpose()) * noise_var;
        let gamma = profiles.iter().map(DeviceProfile::gamma).collect();
        let moments = profiles
            .iter()
            .map(|d| {
                let s = d.pathloss * d.power;
                let (mr, mi) = (d.rician_mean.re, d.rician_mean.im);
                [
                    s * (0.5 * d.rician_var + mr * mr),
                    s * (0.5 * d.rician_var + mi * mi),
                    s * mr * mi,
                ]
            })
            .collect();
        Ok(RidgeContext {
            lambda,
            p_a,
            noise_var,
            estimator,
            omega,
            noise_cov,
            gamma,
            moments,
        })
    }

    pub fn from_dictionary(dict: &Dictionary, profiles: &[DeviceProfile], p_a: f64, noise_var: f64, lambda: f64) -> Result<Self> {
        Self::new(&RidgeOperator::new(&dict.x), profiles, p_a, noise_var, lambda)
    }

    pub fn k_u(&self) -> usize {
        self.gamma.len()
    }

    /// `sum_n w_n (Omega[a, 2n] Omega[b, 2n] + Omega[a, 2n+1] Omega[b, 2n+1])`
    /// split into the own-device term and the interference sum.
    fn pair_sums(&self, k: usize, a: usize, b: usize, w: impl Fn(usize) -> f64) -> (f64, f64) {
        let om = &self.omega;
        let mut own = 0.0;
        let mut other = 0.0;
        for n in 0..self.k_u() {
            let v = w(n) * (om[(a, 2 * n)] * om[(b, 2 * n)] + om[(a, 2 * n + 1)] * om[(b, 2 * n + 1)]);
            if n == k {
                own = v;
            } else {
                other += v;
            }
        }
        (own, other)
    }

    fn second_moments(&self, k: usize, w: impl Fn(usize) -> f64 + Copy, noise_scale: f64) -> Lemma1Stats {
        let (a, b) = (2 * k, 2 * k + 1);
        let mut var = [[0.0; 2]; 2];
        for (f, idx) in [a, b].into_iter().enumerate() {
            let (own, other) = self.pair_sums(k, idx, idx, w);
            let base = self.p_a * other + noise_scale * self.noise_cov[(idx, idx)];
            var[0][f] = base;
            var[1][f] = base + own;
        }
        let (own, other) = self.pair_sums(k, a, b, w);
        let base = self.p_a * other + noise_scale * self.noise_cov[(a, b)];
        Lemma1Stats {
            var,
            cov: [base, base + own],
        }
    }

    /// Variances of both components and their covariance under each hypothesis.
    pub fn lemma1_stats(&self, k: usize) -> Lemma1Stats {
        self.second_moments(k, |n| self.gamma[n], 1.0)
    }

    /// `[C0, C1]` covariance matrices of `(Re, Im)` of component `f`.
    pub fn gaussian_covariances(&self, k: usize, f: usize) -> Result<[Matrix2<f64>; 2]> {
        let re = self.second_moments(k, |n| self.moments[n][0], 0.5);
        let im = self.second_moments(k, |n| self.moments[n][1], 0.5);
        let cr = self.second_moments(k, |n| self.moments[n][2], 0.0);
        let mut out = [Matrix2::zeros(); 2];
        for t in 0..2 {
            let c = Matrix2::new(re.var[t][f], cr.var[t][f], cr.var[t][f], im.var[t][f]);
            let tr = c.trace();
            let det = c.determinant();
            if tr < 0.0 || det < -1e-12 * tr * tr {
                return Err(Error::NotPositiveDefinite(format!("C{t} of device {k}: {c:?}")));
            }
            out[t] = c;
        }
        Ok(out)
    }

    /// Calibrated detector for device `k`.
    pub fn detector(&self, k: usize, target_pf: f64, n_fuse: usize) -> Result<DeviceDetector> {
        let branch = select_branch(&self.lemma1_stats(k))?;
        let [c0, c1] = self.gaussian_covariances(k, branch)?;
        DeviceDetector::new(k, branch, c0, c1, target_pf, n_fuse)
    }

    pub fn detectors(&self, target_pf: f64, n_fuse: usize) -> Result<Vec<DeviceDetector>> {
        (0..self.k_u())
            .into_par_iter()
            .map(|k| self.detector(k, target_pf, n_fuse))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeIdentification {
    pub active: Vec<usize>,
    /// Per-device count of window columns whose score crossed the threshold.
    pub votes: Vec<usize>,
    /// Scores, `K_u x L`.
    pub scores: DMatrix<f64>,
}

/// Scores every window column for every device and fuses the per-column
/// decisions with each device's `n_fuse` rule.
pub fn identify_ridge(
    window: &ObservationWindow,
    ctx: &RidgeContext,
    detectors: &[DeviceDetector],
) -> Result<RidgeIdentification> {
    let l = window.l();
    if l == 0 {
        return Err(Error::range("empty observation window"));
    }
    if let Some(d) = detectors.iter().find(|d| d.n_fuse > l || d.n_fuse == 0) {
        return Err(Error::range(format!("device {} fuses {} of {l} columns", d.k, d.n_fuse)));
    }
    let re = &ctx.estimator * window.r.map(|z| z.re);
    let im = &ctx.estimator * window.r.map(|z| z.im);
    let mut scores = DMatrix::zeros(detectors.len(), l);
    let mut votes = vec![0; detectors.len()];
    for (i, d) in detectors.iter().enumerate() {
        let row = 2 * d.k + d.branch;
        for j in 0..l {
            let s = d.score(re[(row, j)], im[(row, j)]);
            scores[(i, j)] = s;
            if s >= d.theta {
                votes[i] += 1;
            }
        }
    }
    let active = detectors
        .iter()
        .zip(&votes)
        .filter(|(d, &v)| v >= d.n_fuse)
        .map(|(d, _)| d.k)
        .collect();
    Ok(RidgeIdentification { active, votes, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{apply_power, build_dictionary, sample_frame, sample_profiles, ActivityModel, SystemConfig};
    use crate::rng::{stream, Domain};
    use crate::waveform::linear_model_window;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed, Domain::Restart, 0);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn random_cvec(n: usize, seed: u64) -> DVector<Complex64> {
        let mut rng = stream(seed, Domain::Restart, 1);
        DVector::from_fn(n, |_, _| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
    }

    #[test]
    fn normal_equation_residual() {
        let x = random_matrix(8, 16, 1);
        let r = random_cvec(8, 1);
        let lam = 0.37;
        let h = ridge_solve(&x, &r, lam).unwrap();
        let mut a = x.tr_mul(&x);
        for i in 0..16 {
            a[(i, i)] += 2.0 * lam;
        }
        let xc = x.map(|v| Complex64::new(v, 0.0));
        let lhs = a.map(|v| Complex64::new(v, 0.0)) * &h;
        let rhs = xc.transpose() * &r;
        assert!((lhs - &rhs).norm() / rhs.norm() < 1e-10);
    }

    #[test]
    fn push_through_matches_normal_equations() {
        let x = random_matrix(8, 16, 2);
        let r = random_cvec(8, 2);
        let op = RidgeOperator::new(&x);
        let a = ridge_solve(&x, &r, 0.8).unwrap();
        let b = op.solve(&DMatrix::from_column_slice(8, 1, r.as_slice()), 0.8);
        assert!((a - b.column(0)).norm() < 1e-10);
    }

    #[test]
    fn orthogonal_x_at_zero_lambda() {
        let q = random_matrix(6, 6, 3).qr().q();
        let r = random_cvec(6, 3);
        let h = ridge_solve(&q, &r, 0.0).unwrap();
        let expect = q.transpose().map(|v| Complex64::new(v, 0.0)) * &r;
        assert!((h - expect).norm() < 1e-12);
        assert!(ridge_solve(&random_matrix(4, 8, 3), &random_cvec(4, 3), 0.0).is_err());
    }

    #[test]
    fn shrinkage_limit() {
        let x = random_matrix(8, 16, 4);
        let r = random_cvec(8, 4);
        let h = ridge_solve(&x, &r, 1e12).unwrap();
        assert!(h.iter().all(|z| z.norm() < 1e-9));
    }

    #[test]
    fn gcv_examples() {
        let x = random_matrix(12, 6, 5);
        let coef = random_cvec(6, 5);
        let xc = x.map(|v| Complex64::new(v, 0.0));
        let r = &xc * coef;
        let grid = [1e-4, 1e-3, 1e-2, 0.1, 1.0];
        assert_eq!(gcv_tune(&x, &r, &grid).unwrap(), 1e-4);
        assert_eq!(gcv_tune(&x, &r, &[0.5]).unwrap(), 0.5);

        let noisy = random_cvec(12, 6);
        let op = RidgeOperator::new(&x);
        let m = DMatrix::from_column_slice(12, 1, noisy.as_slice());
        let best = op.gcv_tune(&m, &grid).unwrap();
        let s_best = op.gcv_score(&m, best);
        assert!(grid.iter().all(|&l| s_best <= op.gcv_score(&m, l)));
        // Direct evaluation with Q = X (X^T X + 2 lambda I)^-1 X^T.
        let lam = 0.1;
        let mut a = x.tr_mul(&x);
        for i in 0..6 {
            a[(i, i)] += 2.0 * lam;
        }
        let qm = &x * a.try_inverse().unwrap() * x.transpose();
        let iq = DMatrix::identity(12, 12) - qm;
        let res = iq.map(|v| Complex64::new(v, 0.0)) * &noisy;
        let direct = res.norm_squared() / iq.trace().powi(2);
        assert!((direct - op.gcv_score(&m, lam)).abs() < 1e-10 * direct);
        assert!(op.gcv_tune(&m, &[]).is_err());
    }

    #[test]
    fn lambda_opt_examples() {
        let x = DMatrix::identity(6, 6);
        let gamma = vec![1.0; 3];
        let l = lambda_opt(&x, &gamma, 0.2, 1.5).unwrap();
        assert!((l - 1.5 / (0.2 + 3.0)).abs() < 1e-12);
        let x = random_matrix(20, 8, 6);
        let gamma = vec![1.0, 2.0, 0.5, 3.0];
        let l1 = lambda_opt(&x, &gamma, 0.1, 1.0).unwrap();
        let l2 = lambda_opt(&x, &gamma, 0.2, 1.0).unwrap();
        assert!(l2 < l1);
        assert_eq!(lambda_opt(&x, &gamma, 0.1, 0.0).unwrap(), 0.0);
        assert!(matches!(
            lambda_opt(&random_matrix(4, 8, 6), &gamma, 0.1, 1.0),
            Err(Error::Singular(_))
        ));
        let h = DVector::from_element(6, Complex64::new(1.0, 1.0));
        let lo = lambda_opt_oracle(&DMatrix::identity(6, 6), &h, 1.0).unwrap();
        assert!((lo - 6.0 / (12.0 + 18.0)).abs() < 1e-12);
    }

    fn setup(p: f64) -> (SystemConfig, Vec<DeviceProfile>, RidgeContext) {
        let cfg = SystemConfig {
            k_u: 24,
            n_c: 16,
            n_s: 12,
            l: 2,
            activity: ActivityModel::Fixed(p),
            snr_db: 5.0,
            ..SystemConfig::full_scale()
        };
        let mut profiles = sample_profiles(&cfg, &mut stream(9, Domain::Profiles, 0));
        apply_power(&cfg, &mut profiles);
        let dict = build_dictionary(&profiles).unwrap();
        let ctx = RidgeContext::from_dictionary(&dict, &profiles, p, cfg.noise_var, 3.0).unwrap();
        (cfg, profiles, ctx)
    }

    #[test]
    fn context_invariants() {
        let (_, _, ctx) = setup(0.1);
        let om = &ctx.omega;
        assert!((om - om.transpose()).amax() < 1e-10);
        let eig = SymmetricEigen::new(om.clone());
        assert!(eig.eigenvalues.iter().all(|&v| v > -1e-10 && v < 1.0));
        let ne = SymmetricEigen::new(ctx.noise_cov.clone());
        assert!(ne.eigenvalues.iter().all(|&v| v > -1e-10));
    }

    #[test]
    fn lemma1_structure() {
        let (_, _, ctx) = setup(0.0);
        for k in [0, 7, 23] {
            let s = ctx.lemma1_stats(k);
            for f in 0..2 {
                assert!((s.var[0][f] - ctx.noise_cov[(2 * k + f, 2 * k + f)]).abs() < 1e-12);
            }
        }
        let (_, _, ctx) = setup(0.2);
        for k in 0..24 {
            let s = ctx.lemma1_stats(k);
            for f in 0..2 {
                let a = 2 * k + f;
                let b = 2 * k + 1 - f;
                let own = ctx.gamma[k] * (ctx.omega[(a, a)].powi(2) + ctx.omega[(a, b)].powi(2));
                assert!((s.var[1][f] - s.var[0][f] - own).abs() < 1e-9 * s.var[1][f]);
                assert!(own >= 0.0);
            }
        }
    }

    #[test]
    fn covariance_trace_equals_complex_variance() {
        let (_, _, ctx) = setup(0.15);
        for k in [1, 4, 19] {
            let s = ctx.lemma1_stats(k);
            for f in 0..2 {
                let c = ctx.gaussian_covariances(k, f).unwrap();
                for t in 0..2 {
                    assert!((c[t].trace() - s.var[t][f]).abs() < 1e-10 * s.var[t][f]);
                }
            }
        }
    }

    #[test]
    fn real_means_give_diagonal_covariances() {
        let (cfg, mut profiles, _) = setup(0.15);
        for d in &mut profiles {
            d.rician_mean = Complex64::new(0.4, 0.0);
        }
        let dict = build_dictionary(&profiles).unwrap();
        let ctx = RidgeContext::from_dictionary(&dict, &profiles, 0.15, cfg.noise_var, 1.0).unwrap();
        for k in 0..5 {
            let c = ctx.gaussian_covariances(k, 0).unwrap();
            assert_eq!(c[0][(0, 1)], 0.0);
            assert_eq!(c[1][(0, 1)], 0.0);
        }
    }

    #[test]
    fn strong_single_device_is_identified() {
        let (mut cfg, profiles, ctx) = setup(0.1);
        cfg.noise_var = 0.0;
        let detectors = ctx.detectors(0.05, 1).unwrap();
        let mut frame = sample_frame(&cfg, &profiles, &mut stream(1, Domain::Trial, 0));
        for k in 0..cfg.k_u {
            frame.active[k] = k == 5;
            frame.g[k] = if k == 5 { Complex64::new(30.0, 20.0) } else { Complex64::new(0.0, 0.0) };
            if k != 5 {
                frame.symbols[k].iter_mut().for_each(|s| *s = 0);
            }
        }
        frame.symbols[5] = (0..cfg.n_s).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
        frame.active_set = vec![5];
        let dict = build_dictionary(&profiles).unwrap();
        let w = linear_model_window(&dict, &profiles, &frame, &cfg, &mut stream(1, Domain::Noise, 0));
        let id = identify_ridge(&w, &ctx, &detectors).unwrap();
        assert!(id.active.contains(&5));

        let single = ObservationWindow {
            r: w.r.columns(0, 1).into_owned(),
            alpha_bar: w.alpha_bar,
        };
        let a = identify_ridge(&single, &ctx, &detectors).unwrap();
        for (i, d) in detectors.iter().enumerate() {
            assert_eq!(a.active.contains(&d.k), a.scores[(i, 0)] >= d.theta);
        }
        let bad: Vec<_> = detectors.iter().cloned().map(|mut d| {
            d.n_fuse = 2;
            d
        }).collect();
        assert!(identify_ridge(&single, &ctx, &bad).is_err());
    }

    #[test]
    fn h0_scores_exceed_threshold_at_target_rate() {
        // Simulate the Gaussian model directly: samples drawn from C0.
        let (_, _, ctx) = setup(0.1);
        let d = ctx.detector(3, 0.05, 1).unwrap();
        let l = d.c0.cholesky().unwrap().l();
        let mut rng = stream(2, Domain::Restart, 0);
        let n = 20_000;
        let hits = (0..n)
            .filter(|_| {
                let z = nalgebra::Vector2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                let v = l * z;
                d.score(v[0], v[1]) >= d.theta
            })
            .count();
        let p = hits as f64 / n as f64;
        assert!((p - 0.05).abs() < 3.0 * (0.05 * 0.95 / n as f64).sqrt(), "p = {p}");
        let _ = rng.random::<u8>();
    }
}
