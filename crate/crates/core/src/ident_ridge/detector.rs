//! Per-device binary test on the ridge estimate: branch choice, whitening
//! transform and calibrated threshold.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use super::chisq::calibrate_threshold;
use crate::{Error, Result};

/// Second-order statistics of `(h_hat_{k,j,0}, h_hat_{k,j,1})` under the
/// inactive (`0`) and active (`1`) hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Stats {
    /// `var[t][f]`: variance of component `f` under hypothesis `t`.
    pub var: [[f64; 2]; 2],
    /// `cov[t]`: covariance of the two components under hypothesis `t`.
    pub cov: [f64; 2],
}

/// Component with the larger active-to-inactive variance ratio; ties pick 0.
/// A component with zero inactive variance carries no signal (its dictionary
/// column is zero) and is never selected.
pub fn select_branch(stats: &Lemma1Stats) -> Result<usize> {
    let [v0, v1] = stats.var;
    match (v0[0] > 0.0, v0[1] > 0.0) {
        (false, false) => Err(Error::range("both inactive-hypothesis variances are zero")),
        (true, false) => Ok(0),
        (false, true) => Ok(1),
        (true, true) => {
            let rho = v1[0] / v0[0] - v1[1] / v0[1];
            Ok(if rho >= 0.0 { 0 } else { 1 })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Canonical {
    /// Rows map `(re, im)` to coordinates with identity covariance under the
    /// inactive hypothesis and `diag(lambda)` under the active one.
    pub transform: Matrix2<f64>,
    pub lambda: [f64; 2],
    pub chi: [f64; 2],
}

/// Simultaneous diagonalization of `c0` (to `I`) and `c1` (to `diag(lambda)`).
pub fn canonical_detector(c0: &Matrix2<f64>, c1: &Matrix2<f64>) -> Result<Canonical> {
    let e0 = SymmetricEigen::new(*c0);
    let floor = 1e-300_f64.max(1e-13 * e0.eigenvalues.amax());
    if e0.eigenvalues.iter().any(|&v| v <= floor) {
        return Err(Error::NotPositiveDefinite(format!("C0 eigenvalues {:?}", e0.eigenvalues)));
    }
    let a = e0.eigenvectors * Matrix2::from_diagonal(&e0.eigenvalues.map(|v| v.sqrt().recip()));
    let b = a.transpose() * c1 * a;
    let b = 0.5 * (b + b.transpose());
    let e1 = SymmetricEigen::new(b);
    // Largest eigenvalue first so the layout is deterministic.
    let order = if e1.eigenvalues[0] >= e1.eigenvalues[1] { [0, 1] } else { [1, 0] };
    let v1 = Matrix2::from_columns(&[e1.eigenvectors.column(order[0]), e1.eigenvectors.column(order[1])]);
    let lambda = [e1.eigenvalues[order[0]].max(0.0), e1.eigenvalues[order[1]].max(0.0)];
    Ok(Canonical {
        transform: v1.transpose() * a.transpose(),
        lambda,
        chi: lambda.map(|l| l / (l + 1.0)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceDetector {
    pub k: usize,
    pub branch: usize,
    pub c0: Matrix2<f64>,
    pub c1: Matrix2<f64>,
    pub chi: [f64; 2],
    pub lambda_eigs: [f64; 2],
    pub transform: Matrix2<f64>,
    pub theta: f64,
    pub target_pf: f64,
    pub n_fuse: usize,
}

impl DeviceDetector {
    pub fn new(
        k: usize,
        branch: usize,
        c0: Matrix2<f64>,
        c1: Matrix2<f64>,
        target_pf: f64,
        n_fuse: usize,
    ) -> Result<Self> {
        let can = canonical_detector(&c0, &c1)?;
        let theta = calibrate_threshold(can.chi, target_pf)?;
        Ok(DeviceDetector {
            k,
            branch,
            c0,
            c1,
            chi: can.chi,
            lambda_eigs: can.lambda,
            transform: can.transform,
            theta,
            target_pf,
            n_fuse,
        })
    }

    /// Quadratic score of one `(re, im)` sample of the selected component.
    #[inline]
    pub fn score(&self, re: f64, im: f64) -> f64 {
        let z = self.transform * Vector2::new(re, im);
        self.chi[0] * z[0] * z[0] + self.chi[1] * z[1] * z[1]
    }
}

/// Default fusion count `ceil(l / 5)` clamped to `[1, l]`.
pub fn default_n_fuse(l: usize) -> usize {
    l.div_ceil(5).clamp(1, l.max(1))
}

/// Audit table with one line per device.
pub fn calibration_csv(detectors: &[DeviceDetector]) -> String {
    let mut out = String::from("k,branch,chi0,chi1,lambda0,lambda1,theta,target_pf,n_fuse\n");
    for d in detectors {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            d.k, d.branch, d.chi[0], d.chi[1], d.lambda_eigs[0], d.lambda_eigs[1], d.theta, d.target_pf, d.n_fuse
        ));
    }
    out
}
