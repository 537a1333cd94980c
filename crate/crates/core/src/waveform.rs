//! Transmitter chain, oversampled channel superposition, chip and sequence
//! matched filters, and the direct linear-model shortcut.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{DeviceProfile, Dictionary, FrameRealization, SystemConfig};
use crate::{CMatrix, Error, Result};

/// Channel code applied before differential encoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Codec {
    #[default]
    Identity,
    /// Each payload bit is sent `n` times; coded streams are zero padded.
    Repetition(usize),
}

impl Codec {
    pub fn validate(&self, coded_len: usize) -> Result<()> {
        if let Codec::Repetition(n) = *self {
            if n == 0 {
                return Err(Error::config("repetition factor must be positive"));
            }
        }
        if self.payload_len(coded_len) == 0 {
            return Err(Error::config(format!(
                "codec {self:?} leaves no payload bits in {coded_len} coded bits"
            )));
        }
        Ok(())
    }

    pub fn payload_len(&self, coded_len: usize) -> usize {
        match *self {
            Codec::Identity => coded_len,
            Codec::Repetition(n) => coded_len / n.max(1),
        }
    }

    pub fn encode(&self, payload: &[u8], coded_len: usize) -> Vec<u8> {
        let mut out = match *self {
            Codec::Identity => payload.to_vec(),
            Codec::Repetition(n) => payload
                .iter()
                .flat_map(|&b| std::iter::repeat_n(b, n))
                .collect(),
        };
        out.resize(coded_len, 0);
        out
    }

    /// Hard-decision decode; repetition uses a majority vote with ties to 0.
    pub fn decode(&self, coded: &[u8]) -> Vec<u8> {
        match *self {
            Codec::Identity => coded.to_vec(),
            Codec::Repetition(n) => coded
                .chunks_exact(n)
                .map(|c| {
                    let ones = c.iter().filter(|&&b| b != 0).count();
                    u8::from(2 * ones > n)
                })
                .collect(),
        }
    }
}

/// `out[i] = out[i-1] ^ bits[i]` with `out[-1] = reference`.
pub fn differential_encode(bits: &[u8], reference: u8) -> Vec<u8> {
    let mut prev = reference & 1;
    bits.iter()
        .map(|&b| {
            prev ^= b & 1;
            prev
        })
        .collect()
}

/// BPSK map: bit 0 -> +1, bit 1 -> -1.
#[inline]
pub fn bit_to_symbol(b: u8) -> i8 {
    if b & 1 == 0 {
        1
    } else {
        -1
    }
}

/// Payload to on-air symbols: channel code, then the reference bit followed
/// by the differentially encoded coded stream (`coded_len + 1` symbols).
pub fn transmit_symbols(payload: &[u8], codec: &Codec, coded_len: usize, reference: u8) -> Vec<i8> {
    let coded = codec.encode(payload, coded_len);
    std::iter::once(reference & 1)
        .chain(differential_encode(&coded, reference))
        .map(bit_to_symbol)
        .collect()
}

/// Received baseband signal at `q` sub-samples per chip over `n_t` symbol slots.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<Complex64>,
    pub q: usize,
    pub n_c: usize,
    pub n_t: usize,
}

/// Chip matched-filter samples over `l` consecutive symbol slots from `alpha_bar`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationWindow {
    pub r: CMatrix,
    pub alpha_bar: usize,
}

impl ObservationWindow {
    pub fn from_full(full: &CMatrix, alpha_bar: usize, l: usize) -> Result<Self> {
        if alpha_bar + l > full.ncols() {
            return Err(Error::Dimension(format!(
                "window [{alpha_bar}, {}) exceeds {} slots",
                alpha_bar + l,
                full.ncols()
            )));
        }
        Ok(ObservationWindow {
            r: full.columns(alpha_bar, l).into_owned(),
            alpha_bar,
        })
    }

    pub fn l(&self) -> usize {
        self.r.ncols()
    }
}

#[inline]
fn cn<R: Rng + ?Sized>(rng: &mut R, std_per_dim: f64) -> Complex64 {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    Complex64::new(a * std_per_dim, b * std_per_dim)
}

/// I.i.d. `CN(0, var)` entries.
pub fn complex_noise<R: Rng + ?Sized>(rows: usize, cols: usize, var: f64, rng: &mut R) -> CMatrix {
    let s = (0.5 * var).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| cn(rng, s))
}

fn noiseless_waveform(
    profiles: &[DeviceProfile],
    frame: &FrameRealization,
    config: &SystemConfig,
) -> Result<Waveform> {
    let (q, n_c, n_t) = (config.q, config.n_c, config.n_t());
    let mut samples = vec![Complex64::new(0.0, 0.0); n_t * n_c * q];
    for &k in &frame.active_set {
        let d = &profiles[k];
        if d.alpha > config.alpha_max {
            return Err(Error::range(format!("device {k} delay exceeds alpha_max")));
        }
        let shift = d.xi_steps(q)?;
        let g = frame.g[k];
        for (n, &s) in frame.symbols[k].iter().enumerate() {
            let gs = g * s as f64;
            let base = ((d.alpha + n) * n_c + d.beta) * q + shift;
            for (m, &c) in d.code.iter().enumerate() {
                let v = gs * c as f64;
                let start = base + m * q;
                for x in &mut samples[start..start + q] {
                    *x += v;
                }
            }
        }
    }
    Ok(Waveform {
        samples,
        q,
        n_c,
        n_t,
    })
}

/// Superposition of all active packets plus sub-sample noise of variance
/// `q * noise_var`, so chip averages carry noise variance `noise_var`.
pub fn synthesize_frame<R: Rng + ?Sized>(
    profiles: &[DeviceProfile],
    frame: &FrameRealization,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<Waveform> {
    let mut wf = noiseless_waveform(profiles, frame, config)?;
    if config.noise_var > 0.0 {
        let s = (0.5 * config.q as f64 * config.noise_var).sqrt();
        for x in &mut wf.samples {
            *x += cn(rng, s);
        }
    }
    Ok(wf)
}

/// Test mode: every sub-sample of chip `i` in slot `j` receives `noise[(i, j)]`.
pub fn synthesize_frame_with_chip_noise(
    profiles: &[DeviceProfile],
    frame: &FrameRealization,
    config: &SystemConfig,
    noise: &CMatrix,
) -> Result<Waveform> {
    let mut wf = noiseless_waveform(profiles, frame, config)?;
    check_noise_shape(noise, config.n_c, config.n_t())?;
    for (chip, block) in wf.samples.chunks_exact_mut(config.q).enumerate() {
        let w = noise[(chip % config.n_c, chip / config.n_c)];
        for x in block {
            *x += w;
        }
    }
    Ok(wf)
}

fn check_noise_shape(noise: &CMatrix, n_c: usize, cols: usize) -> Result<()> {
    if noise.shape() != (n_c, cols) {
        return Err(Error::Dimension(format!(
            "noise is {:?}, expected ({n_c}, {cols})",
            noise.shape()
        )));
    }
    Ok(())
}

/// `n_c x n_t` matrix of per-chip sub-sample means.
pub fn chip_matched_filter(wf: &Waveform) -> CMatrix {
    let inv = 1.0 / wf.q as f64;
    DMatrix::from_fn(wf.n_c, wf.n_t, |i, j| {
        let start = (j * wf.n_c + i) * wf.q;
        wf.samples[start..start + wf.q].iter().sum::<Complex64>() * inv
    })
}

/// Normalized correlation of the waveform with the device's own delayed code,
/// one output per packet symbol.
pub fn sequence_matched_filter(wf: &Waveform, profile: &DeviceProfile, n_s: usize) -> Result<Vec<Complex64>> {
    let q = wf.q;
    let shift = profile.xi_steps(q)?;
    let n_c = profile.n_c();
    let span = n_c * q;
    let last = ((profile.alpha + n_s) * n_c + profile.beta) * q + shift;
    if last > wf.samples.len() {
        return Err(Error::Dimension("packet extends past the end of the waveform".into()));
    }
    let norm = 1.0 / span as f64;
    Ok((0..n_s)
        .map(|i| {
            let base = ((profile.alpha + i) * n_c + profile.beta) * q + shift;
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, &c) in profile.code.iter().enumerate() {
                let chunk: Complex64 = wf.samples[base + m * q..base + (m + 1) * q].iter().sum();
                acc += chunk * c as f64;
            }
            acc * norm
        })
        .collect())
}

/// Noise-free linear-model columns for slots `first .. first + cols`.
fn linear_model_columns(
    dict: &Dictionary,
    profiles: &[DeviceProfile],
    frame: &FrameRealization,
    first: usize,
    cols: usize,
) -> CMatrix {
    let n_c = dict.n_c();
    let mut r = CMatrix::zeros(n_c, cols);
    for &k in &frame.active_set {
        let alpha = profiles[k].alpha as isize;
        let g = frame.g[k];
        let x0 = dict.x.column(2 * k);
        let x1 = dict.x.column(2 * k + 1);
        for c in 0..cols {
            let j = (first + c) as isize;
            let b0 = frame.symbol(k, j - alpha - 1);
            let b1 = frame.symbol(k, j - alpha);
            if b0 == 0.0 && b1 == 0.0 {
                continue;
            }
            let mut col = r.column_mut(c);
            for i in 0..n_c {
                col[i] += g * (b0 * x0[i] + b1 * x1[i]);
            }
        }
    }
    r
}

/// Full `n_c x n_t` observation matrix `X G B + W` with the given chip noise.
pub fn linear_model_frame_with_noise(
    dict: &Dictionary,
    profiles: &[DeviceProfile],
    frame: &FrameRealization,
    config: &SystemConfig,
    noise: &CMatrix,
) -> Result<CMatrix> {
    check_noise_shape(noise, config.n_c, config.n_t())?;
    Ok(linear_model_columns(dict, profiles, frame, 0, config.n_t()) + noise)
}

pub fn linear_model_frame<R: Rng + ?Sized>(
    dict: &Dictionary,
    profiles: &[DeviceProfile],
    frame: &FrameRealization,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<CMatrix> {
    let noise = complex_noise(config.n_c, config.n_t(), config.noise_var, rng);
    linear_model_frame_with_noise(dict, profiles, frame, config, &noise)
}

/// Only the identification window, for identification-only experiments.
pub fn linear_model_window<R: Rng + ?Sized>(
    dict: &Dictionary,
    profiles: &[DeviceProfile],
    frame: &FrameRealization,
    config: &SystemConfig,
    rng: &mut R,
) -> ObservationWindow {
    let r = linear_model_columns(dict, profiles, frame, config.alpha_bar, config.l)
        + complex_noise(config.n_c, config.l, config.noise_var, rng);
    ObservationWindow {
        r,
        alpha_bar: config.alpha_bar,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSidecar {
    pub rows: usize,
    pub cols: usize,
    pub alpha_bar: usize,
    pub seed: u64,
    /// Always `"complex128-le-column-major"`.
    pub layout: String,
}

const LAYOUT: &str = "complex128-le-column-major";

/// Writes `window` as raw little-endian `(re, im)` pairs plus a JSON sidecar.
pub fn write_window(window: &ObservationWindow, seed: u64, bin: &Path, sidecar: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(window.r.len() * 16);
    for z in window.r.iter() {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    std::fs::File::create(bin)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(bin, e))?;
    let meta = WindowSidecar {
        rows: window.r.nrows(),
        cols: window.r.ncols(),
        alpha_bar: window.alpha_bar,
        seed,
        layout: LAYOUT.into(),
    };
    std::fs::write(sidecar, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(sidecar, e))
}

pub fn read_window(bin: &Path, sidecar: &Path) -> Result<(ObservationWindow, WindowSidecar)> {
    let meta: WindowSidecar =
        serde_json::from_str(&std::fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?)?;
    if meta.layout != LAYOUT {
        return Err(Error::config(format!("unsupported layout {}", meta.layout)));
    }
    let mut bytes = Vec::new();
    std::fs::File::open(bin)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(bin, e))?;
    if bytes.len() != meta.rows * meta.cols * 16 {
        return Err(Error::Dimension(format!("{} bytes do not match sidecar dims", bytes.len())));
    }
    let vals: Vec<Complex64> = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok((
        ObservationWindow {
            r: DMatrix::from_vec(meta.rows, meta.cols, vals),
            alpha_bar: meta.alpha_bar,
        },
        meta,
    ))
}
