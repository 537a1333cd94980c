use serde::{Deserialize, Serialize};

/// Outcome of one trial for one algorithm variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub k_u: usize,
    pub true_set: Vec<usize>,
    pub est_set: Vec<usize>,
    /// One flag per truly active device (in `true_set` order); missed devices
    /// count as errors. `None` when detection was not simulated.
    pub packet_errors: Option<Vec<bool>>,
}

impl TrialRecord {
    pub fn hits(&self) -> usize {
        self.est_set.iter().filter(|k| self.true_set.binary_search(k).is_ok()).count()
    }
}

/// Mergeable sums behind one metrics row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsAccumulator {
    pub trials: u64,
    pub pc_sum: f64,
    pub pc_trials: u64,
    pub pf_sum: f64,
    /// Truly active devices over all trials.
    pub active_devices: u64,
    /// Truly inactive devices over all trials.
    pub inactive_devices: u64,
    pub packet_errors: u64,
    pub packets: u64,
    pub has_per: bool,
}

impl MetricsAccumulator {
    pub fn add(&mut self, r: &TrialRecord) {
        let n_true = r.true_set.len();
        let hits = r.hits();
        self.trials += 1;
        if n_true > 0 {
            self.pc_sum += hits as f64 / n_true as f64;
            self.pc_trials += 1;
        }
        let inactive = r.k_u - n_true;
        if inactive > 0 {
            self.pf_sum += (r.est_set.len() - hits) as f64 / inactive as f64;
        }
        self.active_devices += n_true as u64;
        self.inactive_devices += inactive as u64;
        if let Some(pe) = &r.packet_errors {
            self.has_per = true;
            self.packets += pe.len() as u64;
            self.packet_errors += pe.iter().filter(|&&e| e).count() as u64;
        }
    }

    pub fn merge(&mut self, o: &MetricsAccumulator) {
        self.trials += o.trials;
        self.pc_sum += o.pc_sum;
        self.pc_trials += o.pc_trials;
        self.pf_sum += o.pf_sum;
        self.active_devices += o.active_devices;
        self.inactive_devices += o.inactive_devices;
        self.packet_errors += o.packet_errors;
        self.packets += o.packets;
        self.has_per |= o.has_per;
    }

    pub fn p_c(&self) -> Option<f64> {
        (self.pc_trials > 0).then(|| self.pc_sum / self.pc_trials as f64)
    }

    pub fn p_f(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.pf_sum / self.trials as f64
        }
    }

    pub fn per(&self) -> Option<f64> {
        (self.has_per && self.packets > 0).then(|| self.packet_errors as f64 / self.packets as f64)
    }
}

/// Half-width of the normal-approximation 95% interval for a proportion.
pub fn ci95(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

/// One CSV line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub snr_db: f64,
    pub of: f64,
    pub algorithm: String,
    pub p_c: Option<f64>,
    pub p_f: f64,
    pub per: Option<f64>,
    pub trials: u64,
    pub ci95_pc: Option<f64>,
    pub ci95_pf: f64,
    pub wall_time_s: Option<f64>,
}

pub const CSV_HEADER: &str = "snr_db,of,algorithm,p_c,p_f,per,trials,ci95_pc,ci95_pf,wall_time_s";

impl MetricsRow {
    pub fn from_accumulator(snr_db: f64, of: f64, algorithm: &str, acc: &MetricsAccumulator) -> Self {
        let p_c = acc.p_c();
        let p_f = acc.p_f();
        MetricsRow {
            snr_db,
            of,
            algorithm: algorithm.to_string(),
            p_c,
            p_f,
            per: acc.per(),
            trials: acc.trials,
            ci95_pc: p_c.map(|p| ci95(p, acc.active_devices)),
            ci95_pf: ci95(p_f, acc.inactive_devices),
            wall_time_s: None,
        }
    }
}

pub fn compute_metrics(records: &[TrialRecord]) -> MetricsAccumulator {
    let mut acc = MetricsAccumulator::default();
    for r in records {
        acc.add(r);
    }
    acc
}
