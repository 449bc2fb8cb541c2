//! Host↔radio link delays, RF propagation and packet detection.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timebase::{Nanos, RadioTime, SampleCounter, TimeError};
use crate::NodeId;

/// Speed of light used to turn emulated path lengths into delays.
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

/// Upper bound on resampling attempts for truncated draws.
const MAX_RESAMPLES: u32 = 10_000;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("link delay floor must be positive, got {0}")]
    NonPositiveFloor(Nanos),
    #[error("link delay mean {mean} must exceed floor {floor}")]
    MeanBelowFloor { mean: Nanos, floor: Nanos },
    #[error("link delay deviation must be non-negative, got {0}")]
    NegativeDeviation(Nanos),
    #[error("link delay cap {cap} must exceed floor {floor}")]
    CapBelowFloor { cap: Nanos, floor: Nanos },
    #[error("no propagation delay configured from node {from} to node {to}")]
    UnknownPair { from: NodeId, to: NodeId },
    #[error("miss probability {0} outside [0, 1]")]
    MissProbability(f64),
    #[error("detection jitter {0} must be finite and non-negative")]
    Jitter(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayDistribution {
    #[default]
    ShiftedLognormal,
    TruncatedNormal,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    HostToRadio,
    RadioToHost,
}

/// One direction of the host↔radio path.
///
/// `mean` and `deviation` are the moments of the drawn delay itself. The
/// optional `cap` truncates the upper tail by resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkDelayModel {
    pub mean: Nanos,
    pub deviation: Nanos,
    pub floor: Nanos,
    pub cap: Option<Nanos>,
    pub distribution: DelayDistribution,
}

impl LinkDelayModel {
    pub fn constant(delay: Nanos) -> Self {
        LinkDelayModel {
            mean: delay,
            deviation: Nanos::ZERO,
            floor: Nanos(1).min(delay),
            cap: None,
            distribution: DelayDistribution::Constant,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.floor.0 <= 0 {
            return Err(ChannelError::NonPositiveFloor(self.floor));
        }
        if self.deviation.0 < 0 {
            return Err(ChannelError::NegativeDeviation(self.deviation));
        }
        let mean_ok = match self.distribution {
            DelayDistribution::ShiftedLognormal => {
                self.mean > self.floor || self.deviation.0 == 0 && self.mean == self.floor
            }
            _ => self.mean >= self.floor,
        };
        if !mean_ok {
            return Err(ChannelError::MeanBelowFloor {
                mean: self.mean,
                floor: self.floor,
            });
        }
        if let Some(cap) = self.cap {
            if cap <= self.floor {
                return Err(ChannelError::CapBelowFloor {
                    cap,
                    floor: self.floor,
                });
            }
        }
        Ok(())
    }

    fn raw_draw(&self, rng: &mut SimRng) -> f64 {
        let mean = self.mean.0 as f64;
        let sd = self.deviation.0 as f64;
        let floor = self.floor.0 as f64;
        match self.distribution {
            DelayDistribution::Constant => mean,
            _ if sd == 0.0 => mean,
            DelayDistribution::ShiftedLognormal => {
                let excess = mean - floor;
                let sigma2 = (1.0 + sd * sd / (excess * excess)).ln();
                let mu = excess.ln() - sigma2 / 2.0;
                let ln = LogNormal::new(mu, sigma2.sqrt()).expect("validated lognormal parameters");
                floor + ln.sample(rng)
            }
            DelayDistribution::TruncatedNormal => {
                let n = Normal::new(mean, sd).expect("validated normal parameters");
                for _ in 0..MAX_RESAMPLES {
                    let v = n.sample(rng);
                    if v >= floor {
                        return v;
                    }
                }
                floor
            }
        }
    }

    /// Draws one delay, never below `floor` and never above `cap`.
    pub fn draw(&self, rng: &mut SimRng) -> Nanos {
        let cap = self.cap.map(|c| c.0 as f64);
        let mut v = self.raw_draw(rng);
        if let Some(cap) = cap {
            let mut tries = 0;
            while v > cap && tries < MAX_RESAMPLES {
                v = self.raw_draw(rng);
                tries += 1;
            }
            v = v.min(cap);
        }
        Nanos((v.round() as i64).max(self.floor.0))
    }
}

/// Both directions of a node's host↔radio path.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub host_to_radio: LinkDelayModel,
    pub radio_to_host: LinkDelayModel,
}

impl LinkModel {
    /// Splits round-trip statistics evenly: each direction gets half the
    /// mean and half the variance.
    pub fn from_rtt(
        rtt_mean: Nanos,
        rtt_deviation: Nanos,
        floor: Nanos,
        cap: Option<Nanos>,
        distribution: DelayDistribution,
    ) -> Self {
        let one = LinkDelayModel {
            mean: Nanos(rtt_mean.0 / 2),
            deviation: Nanos((rtt_deviation.0 as f64 / std::f64::consts::SQRT_2).round() as i64),
            floor,
            cap,
            distribution,
        };
        LinkModel {
            host_to_radio: one.clone(),
            radio_to_host: one,
        }
    }

    pub fn constant(one_way: Nanos) -> Self {
        LinkModel {
            host_to_radio: LinkDelayModel::constant(one_way),
            radio_to_host: LinkDelayModel::constant(one_way),
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        self.host_to_radio.validate()?;
        self.radio_to_host.validate()
    }

    pub fn direction(&self, direction: Direction) -> &LinkDelayModel {
        match direction {
            Direction::HostToRadio => &self.host_to_radio,
            Direction::RadioToHost => &self.radio_to_host,
        }
    }
}

pub fn draw_link_delay(model: &LinkModel, direction: Direction, rng: &mut SimRng) -> Nanos {
    model.direction(direction).draw(rng)
}

/// Constant one-way RF delays per ordered node pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PropagationModel {
    delays: BTreeMap<(NodeId, NodeId), Nanos>,
}

impl PropagationModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets both directions.
    pub fn set_symmetric(&mut self, a: NodeId, b: NodeId, delay: Nanos) {
        self.delays.insert((a, b), delay);
        self.delays.insert((b, a), delay);
    }

    pub fn set_directed(&mut self, from: NodeId, to: NodeId, delay: Nanos) {
        self.delays.insert((from, to), delay);
    }

    pub fn delay(&self, from: NodeId, to: NodeId) -> Result<Nanos, ChannelError> {
        if from == to {
            return Ok(Nanos::ZERO);
        }
        self.delays
            .get(&(from, to))
            .copied()
            .ok_or(ChannelError::UnknownPair { from, to })
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId, Nanos)> + '_ {
        self.delays.iter().map(|(&(a, b), &d)| (a, b, d))
    }
}

pub fn propagation_delay(
    model: &PropagationModel,
    from: NodeId,
    to: NodeId,
) -> Result<Nanos, ChannelError> {
    model.delay(from, to)
}

/// Free-space delay of a path, rounded to the nearest nanosecond.
pub fn delay_for_distance(meters: f64) -> Nanos {
    Nanos((meters / SPEED_OF_LIGHT_M_PER_S * 1e9).round() as i64)
}

/// Packet-detection outcome model.
///
/// Jitter is a zero-mean gaussian perturbation of the arrival phase in
/// sample units. When `jitter_clip_samples` is set the gaussian is truncated
/// to that magnitude by resampling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionModel {
    #[serde(default)]
    pub miss_probability: f64,
    #[serde(default)]
    pub jitter_samples: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter_clip_samples: Option<f64>,
}

impl DetectionModel {
    pub const EXACT: DetectionModel = DetectionModel {
        miss_probability: 0.0,
        jitter_samples: 0.0,
        jitter_clip_samples: None,
    };

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(0.0..=1.0).contains(&self.miss_probability) {
            return Err(ChannelError::MissProbability(self.miss_probability));
        }
        if !self.jitter_samples.is_finite() || self.jitter_samples < 0.0 {
            return Err(ChannelError::Jitter(self.jitter_samples));
        }
        if let Some(c) = self.jitter_clip_samples {
            if !c.is_finite() || c <= 0.0 {
                return Err(ChannelError::Jitter(c));
            }
        }
        Ok(())
    }

    fn jitter_draw(&self, rng: &mut SimRng) -> f64 {
        let clip = self.jitter_clip_samples.unwrap_or(f64::INFINITY);
        let mut z: f64 = rng.sample::<f64, _>(StandardNormal) * self.jitter_samples;
        let mut tries = 0;
        while z.abs() > clip && tries < MAX_RESAMPLES {
            z = rng.sample::<f64, _>(StandardNormal) * self.jitter_samples;
            tries += 1;
        }
        z.clamp(-clip, clip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionOutcome {
    Detected(u64),
    Missed,
}

/// Decides whether a packet whose first sample reaches the receiver at
/// `true_arrival` (receiver radio axis) is detected, and at which sample.
///
/// RNG consumption is fixed per call so outcomes do not shift other draws.
pub fn detect_arrival(
    model: &DetectionModel,
    true_arrival: RadioTime,
    counter: &SampleCounter,
    rng: &mut SimRng,
) -> Result<DetectionOutcome, TimeError> {
    let miss: f64 = rng.random();
    let jitter = if model.jitter_samples > 0.0 {
        model.jitter_draw(rng)
    } else {
        0.0
    };
    if miss < model.miss_probability {
        return Ok(DetectionOutcome::Missed);
    }
    let shift = Nanos((jitter * counter.sample_period().0 as f64).round() as i64);
    let perturbed = (true_arrival + shift).max(counter.init_time());
    counter
        .quantize_to_sample(perturbed)
        .map(DetectionOutcome::Detected)
}

/// Kinds of per-node random substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamKind {
    HostToRadio = 1,
    RadioToHost = 2,
    Detection = 3,
    Probe = 4,
    Staleness = 5,
}

/// Derives independent, reproducible RNG substreams from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    master_seed: u64,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        RngStreams { master_seed }
    }

    pub fn stream(&self, node: NodeId, kind: StreamKind) -> SimRng {
        let mut rng = SimRng::seed_from_u64(self.master_seed);
        rng.set_stream(((node.0 as u64) << 8) | kind as u64);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timebase::RadioTime;
    use proptest::prelude::*;
    use rand::Rng;

    fn measured_link() -> LinkModel {
        LinkModel::from_rtt(
            Nanos(1_154_000),
            Nanos(812_000),
            Nanos(10_000),
            None,
            DelayDistribution::ShiftedLognormal,
        )
    }

    #[test]
    fn constant_model_is_constant() {
        let m = LinkModel::constant(Nanos(577_000));
        let mut rng = RngStreams::new(1).stream(NodeId(1), StreamKind::HostToRadio);
        for _ in 0..100 {
            let up = draw_link_delay(&m, Direction::HostToRadio, &mut rng);
            let down = draw_link_delay(&m, Direction::RadioToHost, &mut rng);
            assert_eq!(up, Nanos(577_000));
            assert_eq!(up + down, Nanos(1_154_000));
        }
    }

    #[test]
    fn rtt_split_halves_mean_and_variance() {
        let m = measured_link();
        assert_eq!(m.host_to_radio.mean, Nanos(577_000));
        // 812000 / sqrt(2)
        assert_eq!(m.host_to_radio.deviation, Nanos(574_171));
        assert!(m.validate().is_ok());
    }

    #[test]
    fn lognormal_rtt_matches_configured_moments() {
        let m = measured_link();
        let mut up = RngStreams::new(7).stream(NodeId(1), StreamKind::HostToRadio);
        let mut down = RngStreams::new(7).stream(NodeId(1), StreamKind::RadioToHost);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let rtt = (m.host_to_radio.draw(&mut up) + m.radio_to_host.draw(&mut down)).0 as f64;
            sum += rtt;
            sq += rtt * rtt;
        }
        let mean = sum / n as f64;
        let sd = (sq / n as f64 - mean * mean).sqrt();
        assert!((mean / 1.154e6 - 1.0).abs() < 0.02, "mean {mean}");
        assert!((sd / 0.812e6 - 1.0).abs() < 0.05, "sd {sd}");
    }

    #[test]
    fn cap_bounds_the_tail() {
        let mut m = measured_link();
        m.host_to_radio.cap = Some(Nanos(983_000));
        let mut rng = RngStreams::new(3).stream(NodeId(2), StreamKind::HostToRadio);
        for _ in 0..100_000 {
            let d = m.host_to_radio.draw(&mut rng);
            assert!(d >= Nanos(10_000) && d <= Nanos(983_000));
        }
    }

    #[test]
    fn validation_rejects_bad_models() {
        let mut m = measured_link().host_to_radio;
        m.floor = Nanos(0);
        assert!(matches!(
            m.validate(),
            Err(ChannelError::NonPositiveFloor(_))
        ));
        let mut m = measured_link().host_to_radio;
        m.cap = Some(Nanos(5_000));
        assert!(matches!(
            m.validate(),
            Err(ChannelError::CapBelowFloor { .. })
        ));
        let mut m = measured_link().host_to_radio;
        m.mean = Nanos(5_000);
        assert!(matches!(
            m.validate(),
            Err(ChannelError::MeanBelowFloor { .. })
        ));
    }

    #[test]
    fn propagation_examples() {
        let mut p = PropagationModel::new();
        p.set_symmetric(NodeId(0), NodeId(1), delay_for_distance(90.0));
        p.set_symmetric(NodeId(0), NodeId(2), delay_for_distance(30.0));
        assert_eq!(propagation_delay(&p, NodeId(0), NodeId(1)), Ok(Nanos(300)));
        assert_eq!(propagation_delay(&p, NodeId(2), NodeId(0)), Ok(Nanos(100)));
        assert_eq!(propagation_delay(&p, NodeId(5), NodeId(5)), Ok(Nanos(0)));
        assert_eq!(
            propagation_delay(&p, NodeId(1), NodeId(2)),
            Err(ChannelError::UnknownPair {
                from: NodeId(1),
                to: NodeId(2)
            })
        );
        for (a, b, d) in p.pairs() {
            assert_eq!(p.delay(b, a), Ok(d));
        }
    }

    #[test]
    fn exact_detection_and_certain_miss() {
        let c = SampleCounter::new(RadioTime::from_ticks(0), Nanos(100)).unwrap();
        let mut rng = RngStreams::new(1).stream(NodeId(1), StreamKind::Detection);
        let out = detect_arrival(
            &DetectionModel::EXACT,
            RadioTime::from_ticks(4_200),
            &c,
            &mut rng,
        );
        assert_eq!(out, Ok(DetectionOutcome::Detected(42)));
        let miss = DetectionModel {
            miss_probability: 1.0,
            ..DetectionModel::EXACT
        };
        for _ in 0..1000 {
            assert_eq!(
                detect_arrival(&miss, RadioTime::from_ticks(4_200), &c, &mut rng),
                Ok(DetectionOutcome::Missed)
            );
        }
    }

    /// Probability that gaussian jitter keeps the nearest-sample index,
    /// averaged over a uniform true phase. Midpoint integration of
    /// Phi((0.5-u)/s) - Phi((-0.5-u)/s) over u in [-0.5, 0.5).
    fn p_correct_oracle(sigma: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal as SNormal};
        let n = SNormal::new(0.0, sigma).unwrap();
        let steps = 20_000;
        (0..steps)
            .map(|i| {
                let u = -0.5 + (i as f64 + 0.5) / steps as f64;
                n.cdf(0.5 - u) - n.cdf(-0.5 - u)
            })
            .sum::<f64>()
            / steps as f64
    }

    #[test]
    fn jitter_oracle_values() {
        // frozen from an independent quadrature
        assert!((p_correct_oracle(0.25) - 0.8005).abs() < 1e-3);
        assert!((p_correct_oracle(0.10) - 0.9202).abs() < 1e-3);
    }

    #[test]
    fn jitter_monte_carlo_matches_oracle() {
        let c = SampleCounter::new(RadioTime::from_ticks(0), Nanos(100)).unwrap();
        let mut rng = RngStreams::new(11).stream(NodeId(1), StreamKind::Detection);
        let mut phase = RngStreams::new(12).stream(NodeId(1), StreamKind::Probe);
        for sigma in [0.1, 0.25] {
            let m = DetectionModel {
                jitter_samples: sigma,
                ..DetectionModel::EXACT
            };
            let n = 100_000;
            let mut correct = 0;
            let mut within_one = 0;
            for _ in 0..n {
                let t = 1_000_000 + phase.random_range(0..100);
                let want = c.quantize_to_sample(RadioTime::from_ticks(t)).unwrap() as i64;
                let DetectionOutcome::Detected(got) =
                    detect_arrival(&m, RadioTime::from_ticks(t), &c, &mut rng).unwrap()
                else {
                    panic!("no misses configured");
                };
                let err = (got as i64 - want).abs();
                correct += (err == 0) as u32;
                within_one += (err <= 1) as u32;
            }
            let frac = correct as f64 / n as f64;
            assert!(
                (frac - p_correct_oracle(sigma)).abs() < 0.01,
                "sigma {sigma}: {frac}"
            );
            // Two-sample errors need a 4-sigma draw at 0.25.
            assert!(
                within_one as f64 / n as f64 > 0.999,
                "sigma {sigma}: {within_one}"
            );
        }
    }

    #[test]
    fn clipped_jitter_stays_within_clip() {
        let m = DetectionModel {
            miss_probability: 0.0,
            jitter_samples: 0.5,
            jitter_clip_samples: Some(0.4),
        };
        let mut rng = RngStreams::new(2).stream(NodeId(1), StreamKind::Detection);
        for _ in 0..10_000 {
            assert!(m.jitter_draw(&mut rng).abs() <= 0.4);
        }
    }

    #[test]
    fn streams_are_independent_of_other_nodes() {
        let s = RngStreams::new(99);
        let a: Vec<u64> = {
            let mut r = s.stream(NodeId(1), StreamKind::HostToRadio);
            (0..8).map(|_| r.random()).collect()
        };
        let _other = s.stream(NodeId(7), StreamKind::HostToRadio);
        let b: Vec<u64> = {
            let mut r = s.stream(NodeId(1), StreamKind::HostToRadio);
            (0..8).map(|_| r.random()).collect()
        };
        let c: Vec<u64> = {
            let mut r = s.stream(NodeId(2), StreamKind::HostToRadio);
            (0..8).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn draws_respect_floor(seed in any::<u64>(), dist in 0u8..3) {
            let distribution = [
                DelayDistribution::ShiftedLognormal,
                DelayDistribution::TruncatedNormal,
                DelayDistribution::Constant,
            ][dist as usize];
            let m = LinkModel::from_rtt(Nanos(1_154_000), Nanos(812_000), Nanos(10_000), None, distribution);
            let mut rng = RngStreams::new(seed).stream(NodeId(1), StreamKind::RadioToHost);
            for _ in 0..200 {
                prop_assert!(draw_link_delay(&m, Direction::RadioToHost, &mut rng) >= Nanos(10_000));
            }
        }
    }
}
