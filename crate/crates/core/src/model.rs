//! System configuration, random scenario generation and the delayed-signature
//! dictionary that maps the asynchronous channel onto a linear model.
//!
//! Time is measured in chips: a symbol lasts `n_c` chips and a device delay
//! splits into whole symbols `alpha`, whole chips `beta` and a fractional
//! chip `xi` on the `1/q` sub-sample grid.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::waveform::{self, Codec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityModel {
    /// Every frame uses the same activation probability.
    Fixed(f64),
    /// Each frame first draws its activation probability from `U[0, p_max]`.
    UniformRandom(f64),
}

impl ActivityModel {
    pub fn validate(&self) -> Result<()> {
        let p = match *self {
            ActivityModel::Fixed(p) | ActivityModel::UniformRandom(p) => p,
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!("activity probability {p} outside [0, 1]")));
        }
        Ok(())
    }

    /// Average activation probability across frames.
    pub fn mean(&self) -> f64 {
        match *self {
            ActivityModel::Fixed(p) => p,
            ActivityModel::UniformRandom(p_max) => 0.5 * p_max,
        }
    }

    /// Activation probability used for one frame.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ActivityModel::Fixed(p) => p,
            ActivityModel::UniformRandom(p_max) => p_max * rng.random::<f64>(),
        }
    }
}

/// How the average-SNR target is converted into a per-device received power.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrConvention {
    /// SNR of one active device: `P_a (|mu|^2 + sigma^2) varsigma / noise_var`
    /// averaged over devices.
    #[default]
    PerDevice,
    /// Sum over all devices of the per-device quantity.
    Summed,
}

fn default_q() -> usize {
    8
}
fn default_alpha_max() -> usize {
    5
}
fn one() -> f64 {
    1.0
}
fn default_rician_mean() -> Complex64 {
    Complex64::new(0.1f64.sqrt(), 0.1f64.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub k_u: usize,
    pub n_c: usize,
    pub n_s: usize,
    pub l: usize,
    pub alpha_bar: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default)]
    pub alpha_min: usize,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: usize,
    #[serde(default)]
    pub snr_db: f64,
    #[serde(default = "one")]
    pub noise_var: f64,
    pub activity: ActivityModel,
    #[serde(default = "default_rician_mean")]
    pub rician_mean: Complex64,
    #[serde(default = "one")]
    pub rician_var: f64,
    #[serde(default)]
    pub snr_convention: SnrConvention,
    #[serde(default)]
    pub codec: Codec,
    #[serde(default)]
    pub seed: u64,
}

impl SystemConfig {
    /// Full-scale parameters: 1024 devices, spreading factor 512, 128-symbol
    /// packets, delays up to 5 symbols, Rician mean `sqrt(0.1)(1 + j)`.
    pub fn full_scale() -> Self {
        SystemConfig {
            k_u: 1024,
            n_c: 512,
            n_s: 128,
            l: 1,
            alpha_bar: 6,
            q: 8,
            alpha_min: 0,
            alpha_max: 5,
            snr_db: 10.0,
            noise_var: 1.0,
            activity: ActivityModel::Fixed(0.05),
            rician_mean: default_rician_mean(),
            rician_var: 1.0,
            snr_convention: SnrConvention::PerDevice,
            codec: Codec::Identity,
            seed: 0,
        }
    }

    /// Small system with the same channel statistics.
    pub fn desk(k_u: usize, n_c: usize) -> Self {
        SystemConfig {
            k_u,
            n_c,
            n_s: 32,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 || self.n_s < 2 || self.q == 0 {
            return Err(Error::config("n_c >= 1, n_s >= 2 and q >= 1 are required"));
        }
        if self.k_u <= self.n_c {
            return Err(Error::config(format!(
                "k_u = {} must exceed n_c = {}",
                self.k_u, self.n_c
            )));
        }
        if self.alpha_min > self.alpha_max {
            return Err(Error::config("alpha_min exceeds alpha_max"));
        }
        if self.alpha_bar <= self.alpha_max {
            return Err(Error::config(format!(
                "window start alpha_bar = {} must exceed alpha_max = {}",
                self.alpha_bar, self.alpha_max
            )));
        }
        if self.l == 0 || self.l + self.alpha_bar > self.n_s + self.alpha_min {
            return Err(Error::config(format!(
                "window length l = {} must satisfy 1 <= l <= n_s + alpha_min - alpha_bar = {}",
                self.l,
                (self.n_s + self.alpha_min).saturating_sub(self.alpha_bar)
            )));
        }
        if !(self.noise_var >= 0.0 && self.rician_var >= 0.0) {
            return Err(Error::config("variances must be non-negative"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("snr_db must be finite"));
        }
        self.activity.validate()?;
        self.codec.validate(self.n_s - 1)?;
        Ok(())
    }

    /// Symbol slots per frame: the packet plus the largest symbol delay plus
    /// one slot for the chip/fractional spill of the last symbol.
    pub fn n_t(&self) -> usize {
        self.n_s + self.alpha_max + 1
    }

    pub fn overloading_factor(&self) -> f64 {
        self.k_u as f64 / self.n_c as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub code: Vec<i8>,
    pub alpha: usize,
    pub beta: usize,
    pub xi: f64,
    pub pathloss: f64,
    pub power: f64,
    pub rician_mean: Complex64,
    pub rician_var: f64,
}

impl DeviceProfile {
    pub fn n_c(&self) -> usize {
        self.code.len()
    }

    /// Total delay in chips.
    pub fn delay_chips(&self) -> f64 {
        (self.alpha * self.n_c() + self.beta) as f64 + self.xi
    }

    /// Fractional delay in sub-samples; errors when `xi` is off the `1/q` grid.
    pub fn xi_steps(&self, q: usize) -> Result<usize> {
        let s = self.xi * q as f64;
        let r = s.round();
        if (s - r).abs() > 1e-9 || r < 0.0 || r >= q as f64 {
            return Err(Error::range(format!("xi = {} is not on the 1/{q} grid", self.xi)));
        }
        Ok(r as usize)
    }

    /// Mean received energy `E|g|^2 = eta p (sigma^2 + |mu|^2)`.
    pub fn gamma(&self) -> f64 {
        self.pathloss * self.power * (self.rician_var + self.rician_mean.norm_sqr())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRealization {
    /// Activation probability in force for this frame.
    pub p_a: f64,
    pub active: Vec<bool>,
    pub active_set: Vec<usize>,
    pub g: Vec<Complex64>,
    /// Antipodal symbols per device; all-zero rows for inactive devices.
    pub symbols: Vec<Vec<i8>>,
    pub payloads: Vec<Option<Vec<u8>>>,
}

impl FrameRealization {
    /// Symbol `n` of device `k`, zero outside the packet.
    #[inline]
    pub fn symbol(&self, k: usize, n: isize) -> f64 {
        let row = &self.symbols[k];
        if n < 0 || n as usize >= row.len() {
            0.0
        } else {
            row[n as usize] as f64
        }
    }
}

/// Real `n_c x 2 k_u` matrix with column pair `(2k, 2k+1) = (x_{k,0}, x_{k,1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    pub x: DMatrix<f64>,
}

impl Dictionary {
    pub fn n_c(&self) -> usize {
        self.x.nrows()
    }

    pub fn k_u(&self) -> usize {
        self.x.ncols() / 2
    }
}

pub fn generate_codes<R: Rng + ?Sized>(k_u: usize, n_c: usize, rng: &mut R) -> Vec<Vec<i8>> {
    (0..k_u)
        .map(|_| (0..n_c).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
        .collect()
}

/// Static part of a scenario: codes and delays. Powers are left at 1 and set
/// by [`apply_power`].
pub fn sample_profiles<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Vec<DeviceProfile> {
    let codes = generate_codes(config.k_u, config.n_c, rng);
    codes
        .into_iter()
        .map(|code| {
            let alpha = rng.random_range(config.alpha_min..=config.alpha_max);
            let beta = rng.random_range(0..config.n_c);
            let xi = rng.random_range(0..config.q) as f64 / config.q as f64;
            DeviceProfile {
                code,
                alpha,
                beta,
                xi,
                pathloss: 1.0,
                power: 1.0,
                rician_mean: config.rician_mean,
                rician_var: config.rician_var,
            }
        })
        .collect()
}

/// Common received level `varsigma` and the per-device transmit powers that
/// realize the configured SNR under power control (`p_k eta_k = varsigma`).
///
/// A zero mean activity would make the SNR definition degenerate, so it is
/// treated as 1 in that case.
pub fn calibrate_power(config: &SystemConfig, profiles: &[DeviceProfile]) -> (f64, Vec<f64>) {
    let mut p_bar = config.activity.mean();
    if p_bar <= 0.0 {
        p_bar = 1.0;
    }
    let energy: f64 = profiles
        .iter()
        .map(|d| d.rician_mean.norm_sqr() + d.rician_var)
        .sum();
    let energy = match config.snr_convention {
        SnrConvention::PerDevice => energy / profiles.len().max(1) as f64,
        SnrConvention::Summed => energy,
    };
    let snr = 10f64.powf(config.snr_db / 10.0);
    let varsigma = snr * config.noise_var / (p_bar * energy);
    let powers = profiles.iter().map(|d| varsigma / d.pathloss).collect();
    (varsigma, powers)
}

pub fn apply_power(config: &SystemConfig, profiles: &mut [DeviceProfile]) -> f64 {
    let (varsigma, powers) = calibrate_power(config, profiles);
    for (d, p) in profiles.iter_mut().zip(powers) {
        d.power = p;
    }
    varsigma
}

/// One beacon period: activity, fading and transmitted symbols.
pub fn sample_frame<R: Rng + ?Sized>(
    config: &SystemConfig,
    profiles: &[DeviceProfile],
    rng: &mut R,
) -> FrameRealization {
    let k_u = profiles.len();
    let p_a = config.activity.draw(rng);
    let active: Vec<bool> = (0..k_u).map(|_| rng.random::<f64>() < p_a).collect();
    let active_set: Vec<usize> = (0..k_u).filter(|&k| active[k]).collect();
    let coded_len = config.n_s - 1;
    let payload_len = config.codec.payload_len(coded_len);

    let mut g = vec![Complex64::new(0.0, 0.0); k_u];
    let mut symbols = vec![vec![0i8; config.n_s]; k_u];
    let mut payloads = vec![None; k_u];
    for &k in &active_set {
        let d = &profiles[k];
        let s = (0.5 * d.rician_var).sqrt();
        let n0: f64 = StandardNormal.sample(rng);
        let n1: f64 = StandardNormal.sample(rng);
        let g_breve = d.rician_mean + Complex64::new(s * n0, s * n1);
        g[k] = g_breve * (d.pathloss * d.power).sqrt();

        let payload: Vec<u8> = (0..payload_len).map(|_| rng.random_range(0..2u8)).collect();
        let reference = rng.random_range(0..2u8);
        symbols[k] = waveform::transmit_symbols(&payload, &config.codec, coded_len, reference);
        payloads[k] = Some(payload);
    }
    FrameRealization {
        p_a,
        active,
        active_set,
        g,
        symbols,
        payloads,
    }
}

/// Profiles (with calibrated powers) and one frame drawn from a single stream.
pub fn sample_scenario<R: Rng + ?Sized>(
    config: &SystemConfig,
    rng: &mut R,
) -> Result<(Vec<DeviceProfile>, FrameRealization)> {
    config.validate()?;
    let mut profiles = sample_profiles(config, rng);
    apply_power(config, &mut profiles);
    let frame = sample_frame(config, &profiles, rng);
    Ok((profiles, frame))
}

/// The two length-`n_c` halves `(x0, x1)` of the stacked delayed code
/// `(1 - xi) [0_beta; c; 0] + xi [0_{beta+1}; c; 0]`; `x1` is the head.
pub fn build_signature_pair(code: &[i8], beta: usize, xi: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_c = code.len();
    if beta >= n_c {
        return Err(Error::range(format!("beta = {beta} not in [0, {n_c})")));
    }
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::range(format!("xi = {xi} not in [0, 1)")));
    }
    let mut stacked = vec![0.0; 2 * n_c];
    for (m, &c) in code.iter().enumerate() {
        stacked[beta + m] += (1.0 - xi) * c as f64;
        stacked[beta + m + 1] += xi * c as f64;
    }
    let x0 = stacked[n_c..].to_vec();
    stacked.truncate(n_c);
    Ok((x0, stacked))
}

pub fn build_dictionary(profiles: &[DeviceProfile]) -> Result<Dictionary> {
    let n_c = profiles
        .first()
        .map(|d| d.n_c())
        .ok_or_else(|| Error::config("no device profiles"))?;
    let mut x = DMatrix::zeros(n_c, 2 * profiles.len());
    for (k, d) in profiles.iter().enumerate() {
        if d.n_c() != n_c {
            return Err(Error::Dimension(format!(
                "device {k} has code length {} (expected {n_c})",
                d.n_c()
            )));
        }
        let (x0, x1) = build_signature_pair(&d.code, d.beta, d.xi)?;
        x.column_mut(2 * k).copy_from_slice(&x0);
        x.column_mut(2 * k + 1).copy_from_slice(&x1);
    }
    Ok(Dictionary { x })
}

/// Serializable record of a scenario for regression fixtures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSnapshot {
    pub config: SystemConfig,
    pub profiles: Vec<DeviceProfile>,
    pub frame: FrameRealization,
}

impl ScenarioSnapshot {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn small() -> SystemConfig {
        SystemConfig {
            k_u: 24,
            n_c: 8,
            n_s: 16,
            l: 4,
            ..SystemConfig::full_scale()
        }
    }

    #[test]
    fn codes_have_requested_shape_and_are_reproducible() {
        let a = generate_codes(1024, 512, &mut stream(3, Domain::Profiles, 0));
        assert_eq!(a.len(), 1024);
        assert!(a.iter().all(|c| c.len() == 512 && c.iter().all(|&v| v == 1 || v == -1)));
        let b = generate_codes(1024, 512, &mut stream(3, Domain::Profiles, 0));
        assert_eq!(a, b);
        let one = generate_codes(1, 1, &mut stream(3, Domain::Profiles, 0));
        assert_eq!(one.len(), 1);
        assert!(one[0][0] == 1 || one[0][0] == -1);
    }

    #[test]
    fn signature_pair_pure_shift() {
        let (x0, x1) = build_signature_pair(&[1, -1, 1, -1], 1, 0.0).unwrap();
        assert_eq!(x1, vec![0.0, 1.0, -1.0, 1.0]);
        assert_eq!(x0, vec![-1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn signature_pair_half_chip() {
        let (x0, x1) = build_signature_pair(&[1, -1, 1, -1], 1, 0.5).unwrap();
        let stacked: Vec<f64> = x1.iter().chain(x0.iter()).copied().collect();
        assert_eq!(stacked, vec![0.0, 0.5, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0]);
    }

    #[test]
    fn signature_pair_synchronous_and_range_errors() {
        let c = [1, 1, -1, 1, -1];
        let (x0, x1) = build_signature_pair(&c, 0, 0.0).unwrap();
        assert_eq!(x1, c.iter().map(|&v| v as f64).collect::<Vec<_>>());
        assert!(x0.iter().all(|&v| v == 0.0));
        assert!(build_signature_pair(&c, 5, 0.0).is_err());
        assert!(build_signature_pair(&c, 0, 1.0).is_err());
        assert!(build_signature_pair(&c, 0, -0.1).is_err());
    }

    #[test]
    fn dictionary_layout() {
        let cfg = small();
        let mut rng = stream(11, Domain::Profiles, 0);
        let profiles = sample_profiles(&cfg, &mut rng);
        let dict = build_dictionary(&profiles).unwrap();
        assert_eq!(dict.x.shape(), (8, 48));
        for k in [0, 5, 23] {
            let (x0, x1) = build_signature_pair(&profiles[k].code, profiles[k].beta, profiles[k].xi).unwrap();
            assert_eq!(dict.x.column(2 * k).as_slice(), &x0[..]);
            assert_eq!(dict.x.column(2 * k + 1).as_slice(), &x1[..]);
        }

        let single = DeviceProfile {
            code: vec![1, -1, -1],
            alpha: 0,
            beta: 0,
            xi: 0.0,
            pathloss: 1.0,
            power: 1.0,
            rician_mean: Complex64::new(0.0, 0.0),
            rician_var: 1.0,
        };
        let d = build_dictionary(std::slice::from_ref(&single)).unwrap();
        assert_eq!(d.x.as_slice(), &[0.0, 0.0, 0.0, 1.0, -1.0, -1.0]);

        let mut bad = single.clone();
        bad.code.push(1);
        assert!(build_dictionary(&[single, bad]).is_err());
    }

    #[test]
    fn full_scale_dictionary_dimensions() {
        let cfg = SystemConfig::full_scale();
        let profiles = sample_profiles(&cfg, &mut stream(1, Domain::Profiles, 0));
        assert!(profiles.iter().all(|d| d.alpha <= 5 && d.beta <= 511));
        let dict = build_dictionary(&profiles).unwrap();
        assert_eq!(dict.x.shape(), (512, 2048));
    }

    #[test]
    fn delays_stay_in_configured_ranges_and_on_grid() {
        let cfg = small();
        let profiles = sample_profiles(&cfg, &mut stream(5, Domain::Profiles, 0));
        for d in &profiles {
            assert!(d.alpha >= cfg.alpha_min && d.alpha <= cfg.alpha_max);
            assert!(d.beta < cfg.n_c);
            assert!(d.xi_steps(cfg.q).is_ok());
            let tau = d.delay_chips();
            assert_eq!(tau.floor() as usize, d.alpha * cfg.n_c + d.beta);
        }
    }

    #[test]
    fn zero_activity_gives_empty_frame() {
        let cfg = SystemConfig {
            activity: ActivityModel::Fixed(0.0),
            ..small()
        };
        let (_, frame) = sample_scenario(&cfg, &mut stream(2, Domain::Trial, 0)).unwrap();
        assert!(frame.active_set.is_empty());
        assert!(frame.symbols.iter().all(|row| row.iter().all(|&s| s == 0)));
    }

    #[test]
    fn activity_symbol_consistency() {
        let cfg = SystemConfig {
            activity: ActivityModel::Fixed(0.4),
            ..small()
        };
        let (_, frame) = sample_scenario(&cfg, &mut stream(9, Domain::Trial, 0)).unwrap();
        for k in 0..cfg.k_u {
            let nonzero = frame.symbols[k].iter().any(|&s| s != 0);
            assert_eq!(nonzero, frame.active[k]);
            if frame.active[k] {
                assert!(frame.symbols[k].iter().all(|&s| s == 1 || s == -1));
            } else {
                assert_eq!(frame.g[k], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn mean_active_count_matches_bernoulli() {
        let cfg = SystemConfig {
            activity: ActivityModel::Fixed(0.1),
            ..small()
        };
        let mut profiles = sample_profiles(&cfg, &mut stream(4, Domain::Profiles, 0));
        apply_power(&cfg, &mut profiles);
        let n = 10_000;
        let total: usize = (0..n)
            .map(|t| sample_frame(&cfg, &profiles, &mut stream(4, Domain::Trial, t)).active_set.len())
            .sum();
        let mean = total as f64 / n as f64;
        let expected = cfg.k_u as f64 * 0.1;
        assert!((mean - expected).abs() / expected < 0.05, "mean {mean}");
    }

    #[test]
    fn uniform_random_activity_draws_within_range() {
        let m = ActivityModel::UniformRandom(0.06);
        let mut rng = stream(1, Domain::Trial, 0);
        for _ in 0..1000 {
            let p = m.draw(&mut rng);
            assert!((0.0..=0.06).contains(&p));
        }
        assert!((m.mean() - 0.03).abs() < 1e-15);
        assert!(ActivityModel::Fixed(1.5).validate().is_err());
    }

    #[test]
    fn scenario_is_deterministic() {
        let cfg = small();
        let a = sample_scenario(&cfg, &mut stream(21, Domain::Trial, 0)).unwrap();
        let b = sample_scenario(&cfg, &mut stream(21, Domain::Trial, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation_rejects_window_violations() {
        let mut cfg = small();
        cfg.alpha_bar = cfg.alpha_max;
        assert!(sample_scenario(&cfg, &mut stream(0, Domain::Trial, 0)).is_err());
        let mut cfg = small();
        cfg.l = cfg.n_s + cfg.alpha_min - cfg.alpha_bar + 1;
        assert!(cfg.validate().is_err());
        cfg.l -= 1;
        assert!(cfg.validate().is_ok());
        let mut cfg = small();
        cfg.k_u = cfg.n_c;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn power_calibration_identities() {
        let mut cfg = small();
        cfg.k_u = 1;
        cfg.activity = ActivityModel::Fixed(1.0);
        cfg.rician_mean = Complex64::new(0.0, 0.0);
        cfg.rician_var = 1.0;
        cfg.snr_db = 0.0;
        cfg.noise_var = 1.0;
        let profiles = sample_profiles(&cfg, &mut stream(0, Domain::Profiles, 0));
        let (vs, p) = calibrate_power(&cfg, &profiles);
        assert!((vs - 1.0).abs() < 1e-15);
        assert!((p[0] - 1.0).abs() < 1e-15);

        let cfg = small();
        let profiles = sample_profiles(&cfg, &mut stream(0, Domain::Profiles, 0));
        let (vs1, _) = calibrate_power(&cfg, &profiles);
        let cfg2 = SystemConfig {
            noise_var: 2.0,
            ..cfg.clone()
        };
        let (vs2, _) = calibrate_power(&cfg2, &profiles);
        assert!((vs2 / vs1 - 2.0).abs() < 1e-12);

        let summed = SystemConfig {
            snr_convention: SnrConvention::Summed,
            ..cfg.clone()
        };
        let (vs3, _) = calibrate_power(&summed, &profiles);
        assert!((vs1 / vs3 - cfg.k_u as f64).abs() < 1e-9);
    }

    #[test]
    fn received_power_moment() {
        let cfg = SystemConfig {
            activity: ActivityModel::Fixed(1.0),
            snr_db: 3.0,
            ..small()
        };
        let mut profiles = sample_profiles(&cfg, &mut stream(8, Domain::Profiles, 0));
        let vs = apply_power(&cfg, &mut profiles);
        let mut acc = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut n = 0usize;
        let mut t = 0;
        while n < 100_000 {
            let f = sample_frame(&cfg, &profiles, &mut stream(8, Domain::Trial, t));
            for &k in &f.active_set {
                acc += f.g[k].norm_sqr();
                mean += f.g[k];
                n += 1;
            }
            t += 1;
        }
        let target = vs * (cfg.rician_mean.norm_sqr() + cfg.rician_var);
        assert!((acc / n as f64 - target).abs() / target < 0.02);
        let mean = mean / n as f64 / vs.sqrt();
        let se = (cfg.rician_var / 2.0 / n as f64).sqrt();
        assert!((mean - cfg.rician_mean).re.abs() < 4.0 * se);
        assert!((mean - cfg.rician_mean).im.abs() < 4.0 * se);
    }

    #[test]
    fn snapshot_round_trip() {
        let cfg = small();
        let (profiles, frame) = sample_scenario(&cfg, &mut stream(1, Domain::Trial, 0)).unwrap();
        let snap = ScenarioSnapshot {
            config: cfg,
            profiles,
            frame,
        };
        let back = ScenarioSnapshot::from_json(&snap.to_json().unwrap()).unwrap();
        assert_eq!(back, snap);
    }
}
