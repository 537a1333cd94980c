//! Monte Carlo orchestration: grid expansion, seeded trials, metrics and
//! persistence.
//!
//! Seeds: device profiles for overloading-factor index `i` come from
//! `stream(seed, Profiles, i)`; trial `t` draws its frame from
//! `stream(seed, Trial, t)` and its noise from `stream(seed, Noise, t)` at
//! every grid point, so SNR sweeps use common random numbers. Trials run in
//! parallel and are aggregated in trial order, which makes every output
//! independent of the worker count.

pub mod config;
pub mod metrics;

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{AlgorithmConfig, ExperimentConfig, GridPoint, LambdaRule, OutputConfig, RidgeParams, Sweep, TrialMode};
pub use metrics::{ci95, compute_metrics, MetricsAccumulator, MetricsRow, TrialRecord, CSV_HEADER};

use crate::ident_bic::{identify_bic, BicParams, BicTrace};
use crate::ident_ridge::{default_n_fuse, identify_ridge, lambda_opt, DeviceDetector, RidgeContext, RidgeOperator};
use crate::model::{apply_power, build_dictionary, sample_frame, sample_profiles, DeviceProfile, Dictionary, SystemConfig};
use crate::mud::{detect_all, dump_json, DetectionResult};
use crate::rng::{stream, Domain};
use crate::waveform::{chip_matched_filter, linear_model_window, synthesize_frame, ObservationWindow};
use crate::{CMatrix, Error, Result};

/// How a missed device enters the packet error rate.
pub const PER_CONVENTION: &str =
    "missed active devices count as packet errors; false alarms do not enter PER";

enum Prepared {
    Ridge {
        /// Detectors per target false-alarm probability.
        detectors: Vec<Vec<DeviceDetector>>,
        ctx: Box<RidgeContext>,
    },
    Bic(BicParams),
}

/// Everything shared by the trials of one grid point.
pub struct PreparedPoint {
    pub system: SystemConfig,
    pub profiles: Vec<DeviceProfile>,
    pub dict: Dictionary,
    pub op: RidgeOperator,
    /// Ridge tuning parameter in force, if the algorithm is ridge.
    pub ridge_lambda: Option<f64>,
    pub mode: TrialMode,
    labels: Vec<String>,
    algo: Prepared,
}

/// Stacked observation windows of pilot frames drawn from the pilot streams.
pub fn pilot_windows(system: &SystemConfig, profiles: &[DeviceProfile], dict: &Dictionary, frames: usize) -> CMatrix {
    let seed = system.seed;
    let mut out = CMatrix::zeros(system.n_c, frames * system.l);
    for i in 0..frames {
        let mut rng = stream(seed, Domain::Pilot, i as u64);
        let frame = sample_frame(system, profiles, &mut rng);
        let w = linear_model_window(dict, profiles, &frame, system, &mut rng);
        out.columns_mut(i * system.l, system.l).copy_from(&w.r);
    }
    out
}

/// Ridge tuning parameter for `rule` at this operating point.
pub fn choose_ridge_lambda(
    rule: LambdaRule,
    params: &RidgeParams,
    system: &SystemConfig,
    profiles: &[DeviceProfile],
    dict: &Dictionary,
    op: &RidgeOperator,
) -> Result<f64> {
    let gcv = || {
        let pilots = pilot_windows(system, profiles, dict, params.pilot_frames);
        op.gcv_tune(&pilots, &op.default_grid(params.gcv_points))
    };
    match rule {
        LambdaRule::Fixed(l) => Ok(l),
        LambdaRule::Gcv => gcv(),
        LambdaRule::Opt => {
            let gamma: Vec<f64> = profiles.iter().map(DeviceProfile::gamma).collect();
            match lambda_opt(&dict.x, &gamma, system.activity.mean(), system.noise_var) {
                Ok(l) if l > 0.0 => Ok(l),
                Ok(_) | Err(Error::Singular(_)) => gcv(),
                Err(e) => Err(e),
            }
        }
    }
}

impl PreparedPoint {
    pub fn new(cfg: &ExperimentConfig, point: &GridPoint) -> Result<Self> {
        let system = point.system.clone();
        system.validate()?;
        let mut profiles = sample_profiles(&system, &mut stream(system.seed, Domain::Profiles, point.of_index as u64));
        apply_power(&system, &mut profiles);
        let dict = build_dictionary(&profiles)?;
        let op = RidgeOperator::new(&dict.x);
        let (algo, ridge_lambda) = match &cfg.algorithm {
            AlgorithmConfig::Ridge(p) => {
                let lambda = choose_ridge_lambda(p.lambda, p, &system, &profiles, &dict, &op)?;
                let ctx = RidgeContext::new(&op, &profiles, system.activity.mean(), system.noise_var, lambda)?;
                let n_fuse = p.n_fuse.unwrap_or_else(|| default_n_fuse(system.l));
                let detectors = p
                    .target_pf
                    .iter()
                    .map(|&t| ctx.detectors(t, n_fuse))
                    .collect::<Result<Vec<_>>>()?;
                (
                    Prepared::Ridge {
                        detectors,
                        ctx: Box::new(ctx),
                    },
                    Some(lambda),
                )
            }
            AlgorithmConfig::Bic(p) => (Prepared::Bic(p.clone()), None),
        };
        Ok(PreparedPoint {
            system,
            profiles,
            dict,
            op,
            ridge_lambda,
            mode: cfg.mode,
            labels: cfg.algorithm.labels(),
            algo,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Ridge detectors for each target, if the algorithm is ridge.
    pub fn ridge_detectors(&self) -> Option<&[Vec<DeviceDetector>]> {
        match &self.algo {
            Prepared::Ridge { detectors, .. } => Some(detectors),
            Prepared::Bic(_) => None,
        }
    }
}

/// Per-trial diagnostics kept only on request.
#[derive(Clone, Debug, Default)]
pub struct TrialDiagnostics {
    pub bic_trace: Option<BicTrace>,
    pub detection: Vec<DetectionResult>,
}

#[derive(Clone, Debug)]
pub struct TrialOutput {
    /// One record per algorithm label.
    pub records: Vec<TrialRecord>,
    pub diagnostics: Option<TrialDiagnostics>,
}

/// Simulates one frame and runs identification (and detection in full mode).
pub fn run_trial(point: &PreparedPoint, trial: u64, keep_diagnostics: bool) -> Result<TrialOutput> {
    run_trial_inner(point, trial, keep_diagnostics).map_err(|e| Error::Trial {
        trial,
        source: Box::new(e),
    })
}

fn run_trial_inner(point: &PreparedPoint, trial: u64, keep: bool) -> Result<TrialOutput> {
    let sys = &point.system;
    let frame = sample_frame(sys, &point.profiles, &mut stream(sys.seed, Domain::Trial, trial));
    let mut noise_rng = stream(sys.seed, Domain::Noise, trial);
    let (window, waveform) = match point.mode {
        TrialMode::Identification => (
            linear_model_window(&point.dict, &point.profiles, &frame, sys, &mut noise_rng),
            None,
        ),
        TrialMode::Full => {
            let wf = synthesize_frame(&point.profiles, &frame, sys, &mut noise_rng)?;
            let w = ObservationWindow::from_full(&chip_matched_filter(&wf), sys.alpha_bar, sys.l)?;
            (w, Some(wf))
        }
    };
    let mut diag = keep.then(TrialDiagnostics::default);
    let estimates: Vec<Vec<usize>> = match &point.algo {
        Prepared::Ridge { detectors, ctx } => detectors
            .iter()
            .map(|d| identify_ridge(&window, ctx, d).map(|id| id.active))
            .collect::<Result<_>>()?,
        Prepared::Bic(params) => {
            let id = identify_bic(&window, &point.op, params)?;
            if let Some(d) = diag.as_mut() {
                d.bic_trace = Some(id.trace.clone());
            }
            vec![id.active]
        }
    };
    let mut records = Vec::with_capacity(estimates.len());
    for est_set in estimates {
        let packet_errors = match &waveform {
            None => None,
            Some(wf) => {
                let det = detect_all(wf, &est_set, &point.profiles, &sys.codec, sys.n_s, Some(&frame))?;
                let by_k: HashMap<usize, bool> = det
                    .devices
                    .iter()
                    .map(|d| (d.k, d.packet_error.unwrap_or(true)))
                    .collect();
                let errs = frame
                    .active_set
                    .iter()
                    .map(|k| by_k.get(k).copied().unwrap_or(true))
                    .collect();
                if let Some(d) = diag.as_mut() {
                    d.detection.push(det);
                }
                Some(errs)
            }
        };
        records.push(TrialRecord {
            trial,
            k_u: sys.k_u,
            true_set: frame.active_set.clone(),
            est_set,
            packet_errors,
        });
    }
    Ok(TrialOutput {
        records,
        diagnostics: diag,
    })
}

/// Runs trials `0..trials` in parallel and aggregates them in trial order.
pub fn run_point(point: &PreparedPoint, trials: u64) -> Result<(Vec<MetricsAccumulator>, Option<TrialDiagnostics>, Vec<TrialRecord>)> {
    let outputs: Vec<TrialOutput> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(point, t, t == 0))
        .collect::<Result<_>>()?;
    let mut acc = vec![MetricsAccumulator::default(); point.labels.len()];
    let mut records = Vec::with_capacity(outputs.len() * acc.len());
    let mut first = None;
    for out in outputs {
        for (a, r) in acc.iter_mut().zip(&out.records) {
            a.add(r);
        }
        records.extend(out.records);
        if first.is_none() {
            first = out.diagnostics;
        }
    }
    Ok((acc, first, records))
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    /// Keep rows already present in `csv` and skip their grid points.
    pub resume: bool,
}

#[derive(Serialize)]
struct Provenance<'a> {
    version: &'static str,
    config_hash: String,
    seed: u64,
    per_convention: &'static str,
    config: &'a ExperimentConfig,
    points: &'a [PointSummary],
    rows: &'a [MetricsRow],
}

#[derive(Clone, Debug, Serialize)]
pub struct PointSummary {
    pub snr_db: f64,
    pub k_u: usize,
    pub of: f64,
    pub ridge_lambda: Option<f64>,
    pub resumed: bool,
}

fn read_rows(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::config(format!("{}: {other:?}", path.display())),
    }
}

fn row_key(snr_db: f64, of: f64, label: &str) -> (u64, u64, String) {
    (snr_db.to_bits(), of.to_bits(), label.to_string())
}

fn dump_diagnostics(dir: &Path, index: usize, diag: &TrialDiagnostics) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if let Some(t) = &diag.bic_trace {
        let p = dir.join(format!("bic_trace_{index}.json"));
        std::fs::write(&p, t.to_json()?).map_err(|e| Error::io(&p, e))?;
    }
    for (v, det) in diag.detection.iter().enumerate() {
        let p = dir.join(format!("mud_{index}_{v}.json"));
        std::fs::write(&p, dump_json(det)?).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Sweeps the whole grid, writing CSV rows as each point completes.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        if n == 0 {
            return Err(Error::config("threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::config(e.to_string()))?;

    let mut done: HashMap<(u64, u64, String), MetricsRow> = HashMap::new();
    let mut writer = None;
    if let Some(path) = &opts.csv {
        let resuming = opts.resume && path.exists();
        if resuming {
            for row in read_rows(path)? {
                done.insert(row_key(row.snr_db, row.of, &row.algorithm), row);
            }
        }
        let file = if resuming {
            OpenOptions::new().append(true).open(path)
        } else {
            std::fs::File::create(path)
        }
        .map_err(|e| Error::io(path, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if !resuming {
            w.write_record(CSV_HEADER.split(',')).map_err(|e| csv_error(path, e))?;
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        writer = Some((w, path.clone()));
    }

    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (index, point) in cfg.grid().iter().enumerate() {
        let sys = &point.system;
        let of = sys.overloading_factor();
        let labels = cfg.algorithm.labels();
        let cached: Option<Vec<MetricsRow>> = labels
            .iter()
            .map(|l| done.get(&row_key(sys.snr_db, of, l)).cloned())
            .collect();
        if let Some(existing) = cached {
            points.push(PointSummary {
                snr_db: sys.snr_db,
                k_u: sys.k_u,
                of,
                ridge_lambda: None,
                resumed: true,
            });
            rows.extend(existing);
            continue;
        }
        let start = Instant::now();
        let (prepared, (acc, diag, _)) = pool.install(|| -> Result<_> {
            let prepared = PreparedPoint::new(cfg, point)?;
            let out = run_point(&prepared, cfg.trials as u64)?;
            Ok((prepared, out))
        })?;
        let elapsed = start.elapsed().as_secs_f64();
        if let (Some(dir), Some(d)) = (&cfg.output.dump_dir, &diag) {
            dump_diagnostics(dir, index, d)?;
        }
        let new_rows: Vec<MetricsRow> = labels
            .iter()
            .zip(&acc)
            .map(|(l, a)| {
                let mut row = MetricsRow::from_accumulator(sys.snr_db, of, l, a);
                if cfg.output.record_wall_time {
                    row.wall_time_s = Some(elapsed);
                }
                row
            })
            .collect();
        if let Some((w, path)) = writer.as_mut() {
            for r in &new_rows {
                w.serialize(r).map_err(|e| csv_error(path, e))?;
            }
            w.flush().map_err(|e| Error::io(&*path, e))?;
        }
        points.push(PointSummary {
            snr_db: sys.snr_db,
            k_u: sys.k_u,
            of,
            ridge_lambda: prepared.ridge_lambda,
            resumed: false,
        });
        rows.extend(new_rows);
    }

    if let Some(path) = &opts.json {
        let prov = Provenance {
            version: concat!("gfsim ", env!("CARGO_PKG_VERSION")),
            config_hash: cfg.hash()?,
            seed: cfg.system.seed,
            per_convention: PER_CONVENTION,
            config: cfg,
            points: &points,
            rows: &rows,
        };
        std::fs::write(path, serde_json::to_string_pretty(&prov)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(rows)
}
