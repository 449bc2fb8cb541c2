//! Metric collectors and the run report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::SyncDiagnostics;
use crate::scenario::Role;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("percentile of an empty sample set")]
    Empty,
    #[error("percentile {0} outside (0, 100]")]
    BadPercentile(String),
    #[error("samples are not totally ordered")]
    Unordered,
}

/// 1-based nearest rank `ceil(p/100 · n)`, computed in integers with `p`
/// resolved to a millionth of a percent.
pub fn nearest_rank(n: usize, p: f64) -> Result<usize, MetricsError> {
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(MetricsError::BadPercentile(p.to_string()));
    }
    let ppm = (p * 1e6).round() as u128;
    let rank = (ppm * n as u128).div_ceil(100_000_000);
    Ok((rank as usize).clamp(1, n))
}

/// Nearest-rank percentile of an unsorted sample set.
pub fn percentile<T: Copy + PartialOrd>(samples: &[T], p: f64) -> Result<T, MetricsError> {
    let rank = nearest_rank(samples.len(), p)?;
    let mut v = samples.to_vec();
    let mut bad = false;
    v.sort_by(|a, b| {
        a.partial_cmp(b).unwrap_or_else(|| {
            bad = true;
            std::cmp::Ordering::Equal
        })
    });
    if bad {
        return Err(MetricsError::Unordered);
    }
    Ok(v[rank - 1])
}

/// Same as [`percentile`] for data that is already sorted ascending.
pub fn percentile_sorted<T: Copy>(sorted: &[T], p: f64) -> Result<T, MetricsError> {
    Ok(sorted[nearest_rank(sorted.len(), p)? - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: i64,
    pub p99: i64,
    pub p99_99: i64,
    pub p99_9999: i64,
    pub max: i64,
}

pub const REPORTED_PERCENTILES: [f64; 4] = [50.0, 99.0, 99.99, 99.9999];

/// Histogram bin width once raw samples exceed the cap.
const SKETCH_BIN_NS: i64 = 1_000;

/// Keeps raw samples up to a cap; past it, percentiles come from a
/// fixed-width histogram and are flagged as approximate.
#[derive(Debug, Clone)]
pub struct SampleCollector {
    cap: usize,
    raw: Vec<i64>,
    bins: BTreeMap<i64, u64>,
    count: u64,
    sum: i128,
    max: Option<i64>,
}

impl SampleCollector {
    pub fn new(cap: usize) -> Self {
        SampleCollector {
            cap,
            raw: Vec::new(),
            bins: BTreeMap::new(),
            count: 0,
            sum: 0,
            max: None,
        }
    }

    pub fn push(&mut self, v: i64) {
        self.count += 1;
        self.sum += v as i128;
        self.max = Some(self.max.map_or(v, |m| m.max(v)));
        if self.raw.len() < self.cap {
            self.raw.push(v);
        }
        *self.bins.entry(v.div_euclid(SKETCH_BIN_NS)).or_default() += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_sketch(&self) -> bool {
        self.count as usize > self.raw.len()
    }

    pub fn raw(&self) -> &[i64] {
        &self.raw
    }

    pub fn summary(&self) -> Option<SampleSummary> {
        let max = self.max?;
        let sketch = self.is_sketch();
        let pick = |p: f64| -> i64 {
            if !sketch {
                return 0;
            }
            let rank = nearest_rank(self.count as usize, p).expect("non-empty") as u64;
            let mut seen = 0;
            for (&bin, &c) in &self.bins {
                seen += c;
                if seen >= rank {
                    return ((bin + 1) * SKETCH_BIN_NS - 1).min(max);
                }
            }
            max
        };
        let values: Vec<i64> = if sketch {
            REPORTED_PERCENTILES.iter().map(|&p| pick(p)).collect()
        } else {
            let mut sorted = self.raw.clone();
            sorted.sort_unstable();
            REPORTED_PERCENTILES
                .iter()
                .map(|&p| percentile_sorted(&sorted, p).expect("non-empty"))
                .collect()
        };
        Some(SampleSummary {
            count: self.count,
            sketch,
            mean_ns: (self.sum / self.count as i128) as i64,
            percentiles: Percentiles {
                p50: values[0],
                p99: values[1],
                p99_99: values[2],
                p99_9999: values[3],
                max,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub count: u64,
    /// Percentiles are histogram approximations (upper bin edge).
    pub sketch: bool,
    pub mean_ns: i64,
    pub percentiles: Percentiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub node: u16,
    pub samples: u64,
    pub zero_fraction: f64,
    pub within_one_fraction: f64,
    pub mode: u64,
    pub max: u64,
    /// `[bin, count]` pairs in ascending bin order.
    pub histogram: Vec<[u64; 2]>,
}

impl AlignmentReport {
    pub fn from_histogram(node: u16, hist: &BTreeMap<u64, u64>) -> Self {
        let samples: u64 = hist.values().sum();
        let at = |pred: &dyn Fn(u64) -> bool| {
            hist.iter()
                .filter(|(b, _)| pred(**b))
                .map(|(_, c)| c)
                .sum::<u64>()
        };
        let frac = |c: u64| {
            if samples == 0 {
                0.0
            } else {
                c as f64 / samples as f64
            }
        };
        let mode = hist
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map_or(0, |(b, _)| *b);
        AlignmentReport {
            node,
            samples,
            zero_fraction: frac(at(&|b| b == 0)),
            within_one_fraction: frac(at(&|b| b <= 1)),
            mode,
            max: hist.keys().next_back().copied().unwrap_or(0),
            histogram: hist.iter().map(|(&b, &c)| [b, c]).collect(),
        }
    }
}

/// Appends one ΔR sample: `|expected − observed|` in whole samples.
pub fn record_alignment(
    hist: &mut BTreeMap<u64, u64>,
    expected_ns: i64,
    observed_ns: i64,
    sample_period_ns: i64,
) -> u64 {
    let diff = (expected_ns - observed_ns).unsigned_abs();
    let p = sample_period_ns as u64;
    let bins = (2 * diff + p) / (2 * p);
    *hist.entry(bins).or_default() += 1;
    bins
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub frame: u64,
    pub delta_samples: f64,
}

/// Least-squares slope of Δ against frame, in samples per frame.
pub fn drift_slope(trace: &[DriftPoint]) -> Option<f64> {
    if trace.len() < 2 {
        return None;
    }
    let n = trace.len() as f64;
    let mx = trace.iter().map(|p| p.frame as f64).sum::<f64>() / n;
    let my = trace.iter().map(|p| p.delta_samples).sum::<f64>() / n;
    let sxy: f64 = trace
        .iter()
        .map(|p| (p.frame as f64 - mx) * (p.delta_samples - my))
        .sum();
    let sxx: f64 = trace.iter().map(|p| (p.frame as f64 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// First frame whose drift magnitude exceeds `threshold` samples.
pub fn first_crossing(trace: &[DriftPoint], threshold: f64) -> Option<u64> {
    trace
        .iter()
        .find(|p| p.delta_samples.abs() > threshold)
        .map(|p| p.frame)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCounters {
    /// Packets produced by the host at a timer fire.
    pub generated: u64,
    pub late_drops: u64,
    pub conflicts: u64,
    pub transmitted: u64,
    /// Detected by the packet's primary receiver.
    pub delivered: u64,
    pub detection_missed: u64,
    /// Still in the pipeline when the run ended.
    pub in_flight: u64,
    /// Owned slots passed over because the boundary was too close.
    pub skipped_slots: u64,
    pub beacons_detected: u64,
    pub beacons_missed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub id: u16,
    pub role: Role,
    pub t_adv_ns: i64,
    pub rtt_estimate_mean_ns: i64,
    pub rtt_estimate_deviation_ns: i64,
    pub counters: NodeCounters,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_est_ns: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub o_est_ns: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sync: Option<SyncDiagnostics>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FreshnessReport {
    pub checked: u64,
    pub violations: u64,
    /// Largest radio-TX minus host-generation time seen.
    pub max_age_ns: i64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSyncReport {
    pub events: u64,
    pub max_spread_ns: i64,
    pub mean_spread_ns: f64,
    pub max_abs_error_ns: i64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// Overlapping receptions at the AP.
    pub overlaps: u64,
    /// Conservation mismatches, summed over nodes.
    pub conservation_violations: u64,
    pub beacon_arrival_checks: u64,
    pub beacon_arrival_violations: u64,
    pub freshness_violations: u64,
}

impl InvariantReport {
    pub fn total_violations(&self) -> u64 {
        self.overlaps
            + self.conservation_violations
            + self.beacon_arrival_violations
            + self.freshness_violations
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub frames_configured: u64,
    pub frames_completed: u64,
    pub stopped_early: bool,
    pub events_executed: u64,
    pub late_drops: u64,
    pub missed_beacons: u64,
    pub freshness: FreshnessReport,
    pub invariants: InvariantReport,
    /// Largest |true arrival − AP grid| of a device uplink after warm-up.
    pub max_boundary_error_ns: i64,
    /// Same, restricted to frames touched by injected beacon misses.
    pub fault_window_max_error_ns: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtt: Option<SampleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_sync: Option<EventSyncReport>,
    pub nodes: Vec<NodeReport>,
    pub alignment: Vec<AlignmentReport>,
    /// Written to its own CSV file, not the summary.
    #[serde(skip)]
    pub drift_trace: Vec<DriftPoint>,
    #[serde(skip)]
    pub rtt_samples: Vec<i64>,
}

impl MetricsReport {
    pub fn alignment_for(&self, node: u16) -> Option<&AlignmentReport> {
        self.alignment.iter().find(|a| a.node == node)
    }

    /// All devices' ΔR histograms summed.
    pub fn pooled_alignment(&self) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for a in &self.alignment {
            for &[b, c] in &a.histogram {
                *out.entry(b).or_default() += c;
            }
        }
        out
    }

    pub fn percentiles_are_monotone(&self) -> bool {
        self.rtt.is_none_or(|r| {
            let p = r.percentiles;
            p.p50 <= p.p99 && p.p99 <= p.p99_99 && p.p99_99 <= p.p99_9999 && p.p99_9999 <= p.max
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{RngStreams, StreamKind};
    use crate::NodeId;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile(&[1, 2, 3, 4, 5], 50.0), Ok(3));
        assert_eq!(percentile(&[7], 0.1), Ok(7));
        assert_eq!(percentile(&[7], 100.0), Ok(7));
        assert_eq!(percentile::<i64>(&[], 50.0), Err(MetricsError::Empty));
        assert!(percentile(&[1, 2], 0.0).is_err());
        assert!(percentile(&[1, 2], 100.5).is_err());
        assert_eq!(
            percentile(&[1.0, f64::NAN], 50.0),
            Err(MetricsError::Unordered)
        );
    }

    #[test]
    fn fractional_percentiles_use_exact_ranks() {
        // 99.9999% of 10^6 is rank 999999 exactly; float rounding must not bump it.
        assert_eq!(nearest_rank(1_000_000, 99.9999), Ok(999_999));
        assert_eq!(nearest_rank(1_000_000, 99.99), Ok(999_900));
        assert_eq!(nearest_rank(100, 99.0), Ok(99));
        assert_eq!(nearest_rank(101, 99.0), Ok(100));
    }

    #[test]
    fn uniform_p99() {
        let mut rng = RngStreams::new(4).stream(NodeId(0), StreamKind::Probe);
        let v: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
        let p = percentile(&v, 99.0).unwrap();
        assert!((p - 0.99).abs() < 0.002, "{p}");
    }

    #[test]
    fn alignment_examples() {
        let mut h = BTreeMap::new();
        assert_eq!(record_alignment(&mut h, 1_000, 1_000, 100), 0);
        assert_eq!(record_alignment(&mut h, 1_000, 1_600, 100), 6);
        assert_eq!(record_alignment(&mut h, 1_000, 1_049, 100), 0);
        assert_eq!(record_alignment(&mut h, 1_000, 951, 100), 0);
        let rep = AlignmentReport::from_histogram(1, &h);
        assert_eq!(rep.samples, 4);
        assert_eq!(rep.mode, 0);
        assert_eq!(rep.max, 6);
        assert_eq!(rep.zero_fraction, 0.75);
    }

    #[test]
    fn collector_switches_to_sketch() {
        let mut c = SampleCollector::new(10);
        for v in 0..100i64 {
            c.push(v * 1_000 + 500);
        }
        let s = c.summary().unwrap();
        assert!(s.sketch);
        assert_eq!(s.count, 100);
        assert_eq!(s.percentiles.max, 99_500);
        assert_eq!(s.percentiles.p50, 49_999);
        assert_eq!(c.raw().len(), 10);

        let mut c = SampleCollector::new(1000);
        for v in [5, 1, 4, 2, 3] {
            c.push(v);
        }
        let s = c.summary().unwrap();
        assert!(!s.sketch);
        assert_eq!(s.percentiles.p50, 3);
        assert_eq!(s.mean_ns, 3);
    }

    #[test]
    fn slope_and_crossing() {
        let trace: Vec<DriftPoint> = (0..100)
            .map(|f| DriftPoint {
                frame: f,
                delta_samples: (f as f64 * 0.125).floor(),
            })
            .collect();
        let s = drift_slope(&trace).unwrap();
        assert!((1.0 / s - 8.0).abs() < 0.2, "{s}");
        assert_eq!(first_crossing(&trace, 5.0), Some(48));
    }

    proptest! {
        #[test]
        fn percentiles_are_ordered(mut v in prop::collection::vec(any::<i32>(), 1..300), a in 0.001f64..100.0, b in 0.001f64..100.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let plo = percentile(&v, lo).unwrap();
            let phi = percentile(&v, hi).unwrap();
            prop_assert!(plo <= phi);
            v.sort();
            prop_assert_eq!(percentile(&v, 100.0).unwrap(), *v.last().unwrap());
        }
    }
}
