//! Non-coherent multiuser detection by 2-means clustering of matched-filter
//! outputs followed by differential decoding.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{DeviceProfile, FrameRealization};
use crate::waveform::{sequence_matched_filter, Codec, Waveform};
use crate::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster index (0 or 1) per sample.
    pub labels: Vec<u8>,
    pub means: [Complex64; 2],
    pub iterations: usize,
    pub wcss: f64,
    pub converged: bool,
    /// WCSS after each iteration.
    pub wcss_trace: Vec<f64>,
}

fn wcss(y: &[Complex64], labels: &[u8], means: &[Complex64; 2]) -> f64 {
    y.iter()
        .zip(labels)
        .map(|(v, &l)| (v - means[l as usize]).norm_sqr())
        .sum()
}

fn centroids(y: &[Complex64], labels: &[u8]) -> ([Complex64; 2], [usize; 2]) {
    let mut sum = [Complex64::new(0.0, 0.0); 2];
    let mut cnt = [0usize; 2];
    for (v, &l) in y.iter().zip(labels) {
        sum[l as usize] += v;
        cnt[l as usize] += 1;
    }
    let mean = |c: usize| {
        if cnt[c] == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            sum[c] / cnt[c] as f64
        }
    };
    ([mean(0), mean(1)], cnt)
}

/// Lloyd iterations seeded antipodally at the largest-modulus sample.
///
/// Ties go to cluster 0. If a cluster empties, the sample farthest from the
/// other centroid is moved into it.
pub fn two_means(y: &[Complex64], max_iter: usize) -> Result<ClusterResult> {
    if y.len() < 2 {
        return Err(Error::range("two_means needs at least two samples"));
    }
    let seed = *y
        .iter()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        .expect("nonempty");
    let mut means = [-seed, seed];
    let mut labels: Vec<u8> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut next: Vec<u8> = y
            .iter()
            .map(|v| u8::from((v - means[0]).norm_sqr() > (v - means[1]).norm_sqr()))
            .collect();
        let (_, cnt) = centroids(y, &next);
        if let Some(empty) = (0..2).find(|&c| cnt[c] == 0) {
            let other = means[1 - empty];
            let far = (0..y.len())
                .max_by(|&a, &b| (y[a] - other).norm_sqr().total_cmp(&(y[b] - other).norm_sqr()))
                .expect("nonempty");
            next[far] = empty as u8;
        }
        let unchanged = next == labels;
        labels = next;
        means = centroids(y, &labels).0;
        trace.push(wcss(y, &labels, &means));
        if unchanged {
            converged = true;
            break;
        }
    }
    Ok(ClusterResult {
        wcss: *trace.last().expect("at least one iteration"),
        labels,
        means,
        iterations,
        converged,
        wcss_trace: trace,
    })
}

/// Bit 1 for samples in cluster 1.
pub fn bit_map(result: &ClusterResult) -> Vec<u8> {
    result.labels.clone()
}

/// `out[i-1] = b[i] ^ b[i-1]` for `i >= 1`; the first bit only serves as reference.
pub fn differential_decode(bits: &[u8]) -> Vec<u8> {
    bits.windows(2).map(|w| (w[0] ^ w[1]) & 1).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceDetection {
    pub k: usize,
    pub payload: Vec<u8>,
    /// `None` when no ground truth is available or the device was not active.
    pub packet_error: Option<bool>,
    pub mf_outputs: Vec<Complex64>,
    pub cluster: ClusterResult,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    /// Ordered by increasing delay.
    pub devices: Vec<DeviceDetection>,
}

/// Runs matched filter, clustering and decoding for every device in `est_active`.
pub fn detect_all(
    wf: &Waveform,
    est_active: &[usize],
    profiles: &[DeviceProfile],
    codec: &Codec,
    n_s: usize,
    truth: Option<&FrameRealization>,
) -> Result<DetectionResult> {
    if let Some(&k) = est_active.iter().find(|&&k| k >= profiles.len()) {
        return Err(Error::range(format!("device {k} has no profile")));
    }
    let mut order = est_active.to_vec();
    order.sort_by(|&a, &b| {
        profiles[a]
            .delay_chips()
            .total_cmp(&profiles[b].delay_chips())
            .then(a.cmp(&b))
    });
    let devices = order
        .par_iter()
        .map(|&k| {
            let y = sequence_matched_filter(wf, &profiles[k], n_s)?;
            let cluster = two_means(&y, DEFAULT_MAX_ITER)?;
            let payload = codec.decode(&differential_decode(&bit_map(&cluster)));
            let packet_error = truth.and_then(|f| f.payloads[k].as_ref()).map(|p| *p != payload);
            Ok(DeviceDetection {
                k,
                payload,
                packet_error,
                mf_outputs: y,
                cluster,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DetectionResult { devices })
}

/// Scatter-plot dump of matched-filter outputs and clustering per device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MudDump {
    pub k: usize,
    pub mf_re: Vec<f64>,
    pub mf_im: Vec<f64>,
    pub labels: Vec<u8>,
    pub means: [[f64; 2]; 2],
    pub packet_error: Option<bool>,
}

pub fn dump_json(result: &DetectionResult) -> Result<String> {
    let dumps: Vec<MudDump> = result
        .devices
        .iter()
        .map(|d| MudDump {
            k: d.k,
            mf_re: d.mf_outputs.iter().map(|z| z.re).collect(),
            mf_im: d.mf_outputs.iter().map(|z| z.im).collect(),
            labels: d.cluster.labels.clone(),
            means: d.cluster.means.map(|m| [m.re, m.im]),
            packet_error: d.packet_error,
        })
        .collect();
    Ok(serde_json::to_string_pretty(&dumps)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn two_points() {
        let r = two_means(&[c(1.0, 0.0), c(-1.0, 0.0)], 100).unwrap();
        assert_ne!(r.labels[0], r.labels[1]);
        assert!((r.means[r.labels[0] as usize] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((r.means[r.labels[1] as usize] - c(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(r.wcss, 0.0);
        assert!(two_means(&[c(1.0, 0.0)], 10).is_err());
    }

    #[test]
    fn noiseless_separation_follows_sign_pattern() {
        let g = c(0.4, -1.3);
        let mut rng = stream(1, Domain::Trial, 0);
        let s: Vec<f64> = (0..40).map(|i| if i == 0 || rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let s: Vec<f64> = s.iter().enumerate().map(|(i, &v)| if i == 1 { -1.0 } else { v }).collect();
        let y: Vec<Complex64> = s.iter().map(|&v| g * v).collect();
        let r = two_means(&y, 100).unwrap();
        assert!(r.converged);
        assert!(r.wcss < 1e-24);
        let flip = r.labels[0];
        for (l, &v) in r.labels.iter().zip(&s) {
            assert_eq!(*l ^ flip, u8::from(v < 0.0));
        }
    }

    #[test]
    fn centroid_fixed_point_and_monotone_wcss() {
        let mut rng = stream(2, Domain::Trial, 0);
        for _ in 0..50 {
            let y: Vec<Complex64> = (0..30).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let r = two_means(&y, 100).unwrap();
            for w in r.wcss_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            let (m, cnt) = centroids(&y, &r.labels);
            assert!(cnt[0] > 0 && cnt[1] > 0);
            for i in 0..2 {
                assert!((m[i] - r.means[i]).norm() <= 1e-12);
            }
        }
    }

    fn bisector_consistent(y: &[Complex64], labels: &[u8], strict_second: bool) -> bool {
        let (m, _) = centroids(y, labels);
        y.iter().zip(labels).all(|(v, &l)| {
            let d0 = (v - m[0]).norm_sqr();
            let d1 = (v - m[1]).norm_sqr();
            match (l, strict_second) {
                (0, _) => d0 <= d1,
                (_, true) => d1 < d0,
                _ => d1 <= d0,
            }
        })
    }

    /// Minimum WCSS over all two-cluster partitions consistent with their own
    /// centroid bisector.
    fn exhaustive_best(y: &[Complex64]) -> f64 {
        let n = y.len() as u32;
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let labels: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            if bisector_consistent(y, &labels, false) {
                let (m, _) = centroids(y, &labels);
                best = best.min(wcss(y, &labels, &m));
            }
        }
        best
    }

    #[test]
    fn lloyd_matches_exhaustive_on_noisy_antipodal_clusters() {
        let mut rng = stream(3, Domain::Trial, 0);
        for _ in 0..50 {
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let g = Complex64::from_polar(1.0, phase);
            let y: Vec<Complex64> = (0..8)
                .map(|i| {
                    let s = if i == 0 || (i > 1 && rng.random::<bool>()) { 1.0 } else { -1.0 };
                    let w = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 1.2;
                    g * s + w
                })
                .collect();
            let r = two_means(&y, 100).unwrap();
            let best = exhaustive_best(&y);
            assert!(r.wcss <= best + 1e-12, "lloyd {} vs exhaustive {}", r.wcss, best);
        }
    }

    #[test]
    fn lloyd_stops_at_a_bisector_consistent_partition() {
        let mut rng = stream(4, Domain::Trial, 0);
        for _ in 0..20 {
            let y: Vec<Complex64> = (0..8).map(|_| c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)).collect();
            let r = two_means(&y, 100).unwrap();
            assert!(r.converged);
            assert!(r.wcss >= exhaustive_best(&y) - 1e-12);
            assert!(bisector_consistent(&y, &r.labels, true));
        }
    }

    #[test]
    fn bit_map_and_label_swap() {
        let r = ClusterResult {
            labels: vec![0, 1, 0, 1],
            means: [c(1.0, 0.0), c(-1.0, 0.0)],
            iterations: 1,
            wcss: 0.0,
            converged: true,
            wcss_trace: vec![0.0],
        };
        assert_eq!(bit_map(&r), vec![0, 1, 0, 1]);
        let zeros = ClusterResult {
            labels: vec![0; 5],
            ..r.clone()
        };
        assert_eq!(bit_map(&zeros), vec![0; 5]);
        let b = bit_map(&r);
        let comp: Vec<u8> = b.iter().map(|x| x ^ 1).collect();
        assert_eq!(differential_decode(&b), differential_decode(&comp));
    }

    #[test]
    fn differential_decode_examples() {
        assert_eq!(differential_decode(&[1, 1, 0]), vec![0, 1]);
        assert_eq!(differential_decode(&[0, 0, 1]), differential_decode(&[1, 1, 0]));
    }
}
