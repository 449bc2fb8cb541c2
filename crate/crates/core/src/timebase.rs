//! Virtual clocks and sample counting.
//!
//! Every timestamp is an integer count of nanoseconds tagged with the clock
//! axis it was read from. Three axes exist:
//!
//! | Axis     | Meaning                                               |
//! |----------|-------------------------------------------------------|
//! | `Global` | simulator true time, the axis the event loop runs on  |
//! | `Radio`  | a node's radio front-end hardware counter             |
//! | `Host`   | a node's host OS clock, used only for RTT bookkeeping |
//!
//! Mixing axes is a type error; moving between them goes through a
//! [`ClockModel`].

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const NANOS_PER_SEC: i64 = 1_000_000_000;

/// Drift is stored in parts per 10^12 so that sub-ppb skews stay exact.
const DRIFT_SCALE: i128 = 1_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeError {
    #[error("time arithmetic left the representable tick range")]
    Overflow,
    #[error("radio time {time} precedes stream start {init}")]
    BeforeStreamStart { time: i64, init: i64 },
    #[error("bandwidth {0} Hz does not divide 1e9 ns evenly")]
    BandwidthNotDivisor(u64),
    #[error("drift of {0} ppm makes the clock non-monotonic")]
    DriftOutOfRange(f64),
    #[error("sample period must be positive")]
    NonPositivePeriod,
}

/// Signed span of nanoseconds. Axis-free, so it can be added to any instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Nanos(pub i64);

impl Nanos {
    pub const ZERO: Nanos = Nanos(0);

    pub const fn from_micros(us: i64) -> Self {
        Nanos(us * 1_000)
    }

    pub const fn from_millis(ms: i64) -> Self {
        Nanos(ms * 1_000_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Nanos((s * NANOS_PER_SEC as f64).round() as i64)
    }

    pub const fn get(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn abs(self) -> Nanos {
        Nanos(self.0.abs())
    }

    pub fn checked_mul(self, k: i64) -> Option<Nanos> {
        self.0.checked_mul(k).map(Nanos)
    }

    /// Parses `"577us"`, `"1.154ms"`, `"300ns"`, `"2s"` or a bare integer
    /// nanosecond count.
    pub fn parse(text: &str) -> Result<Nanos, String> {
        let t = text.trim();
        let split = t
            .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == '_'))
            .unwrap_or(t.len());
        let (num, unit) = t.split_at(split);
        let num = num.replace('_', "");
        let scale: i64 = match unit.trim() {
            "" | "ns" => 1,
            "us" | "µs" => 1_000,
            "ms" => 1_000_000,
            "s" => NANOS_PER_SEC,
            other => return Err(format!("unknown duration unit `{other}` in `{text}`")),
        };
        if let Ok(v) = num.parse::<i64>() {
            return v
                .checked_mul(scale)
                .map(Nanos)
                .ok_or_else(|| format!("duration `{text}` overflows"));
        }
        let v: f64 = num
            .parse()
            .map_err(|_| format!("cannot parse duration `{text}`"))?;
        let ns = v * scale as f64;
        if !ns.is_finite() || ns.abs() > i64::MAX as f64 {
            return Err(format!("duration `{text}` overflows"));
        }
        let rounded = ns.round();
        if (ns - rounded).abs() > 1e-6 {
            return Err(format!(
                "duration `{text}` is not a whole number of nanoseconds"
            ));
        }
        Ok(Nanos(rounded as i64))
    }
}

impl fmt::Display for Nanos {
    /// Largest unit that represents the value exactly.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        if v != 0 && v % NANOS_PER_SEC == 0 {
            write!(f, "{}s", v / NANOS_PER_SEC)
        } else if v != 0 && v % 1_000_000 == 0 {
            write!(f, "{}ms", v / 1_000_000)
        } else if v != 0 && v % 1_000 == 0 {
            write!(f, "{}us", v / 1_000)
        } else {
            write!(f, "{v}ns")
        }
    }
}

impl Serialize for Nanos {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Nanos {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct NanosVisitor;
        impl Visitor<'_> for NanosVisitor {
            type Value = Nanos;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a duration such as \"577us\" or an integer nanosecond count")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Nanos, E> {
                Ok(Nanos(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Nanos, E> {
                i64::try_from(v).map(Nanos).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Nanos, E> {
                Nanos::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_any(NanosVisitor)
    }
}

impl Add for Nanos {
    type Output = Nanos;
    fn add(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 + rhs.0)
    }
}

impl Sub for Nanos {
    type Output = Nanos;
    fn sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 - rhs.0)
    }
}

impl Neg for Nanos {
    type Output = Nanos;
    fn neg(self) -> Nanos {
        Nanos(-self.0)
    }
}

impl Mul<i64> for Nanos {
    type Output = Nanos;
    fn mul(self, rhs: i64) -> Nanos {
        Nanos(self.0 * rhs)
    }
}

impl AddAssign for Nanos {
    fn add_assign(&mut self, rhs: Nanos) {
        self.0 += rhs.0;
    }
}

/// Marker for a clock axis.
pub trait Axis: Copy + fmt::Debug + Default + 'static {
    const NAME: &'static str;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Global;
#[derive(Debug, Clone, Copy, Default)]
pub struct Radio;
#[derive(Debug, Clone, Copy, Default)]
pub struct Host;

impl Axis for Global {
    const NAME: &'static str = "global";
}
impl Axis for Radio {
    const NAME: &'static str = "radio";
}
impl Axis for Host {
    const NAME: &'static str = "host";
}

/// A reading of some clock, in nanosecond ticks on axis `A`.
pub struct Instant<A: Axis> {
    ticks: i64,
    _axis: PhantomData<A>,
}

pub type GlobalTime = Instant<Global>;
pub type RadioTime = Instant<Radio>;
pub type HostTime = Instant<Host>;

impl<A: Axis> Instant<A> {
    pub const fn from_ticks(ticks: i64) -> Self {
        Instant {
            ticks,
            _axis: PhantomData,
        }
    }

    pub const fn ticks(self) -> i64 {
        self.ticks
    }

    pub fn checked_add(self, d: Nanos) -> Option<Self> {
        self.ticks.checked_add(d.0).map(Self::from_ticks)
    }
}

impl<A: Axis> Clone for Instant<A> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<A: Axis> Copy for Instant<A> {}

impl<A: Axis> PartialEq for Instant<A> {
    fn eq(&self, other: &Self) -> bool {
        self.ticks == other.ticks
    }
}
impl<A: Axis> Eq for Instant<A> {}

impl<A: Axis> PartialOrd for Instant<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<A: Axis> Ord for Instant<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ticks.cmp(&other.ticks)
    }
}

impl<A: Axis> Hash for Instant<A> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.ticks.hash(state);
    }
}

impl<A: Axis> fmt::Debug for Instant<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.ticks, A::NAME)
    }
}

impl<A: Axis> fmt::Display for Instant<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ticks)
    }
}

impl<A: Axis> Default for Instant<A> {
    fn default() -> Self {
        Self::from_ticks(0)
    }
}

impl<A: Axis> Add<Nanos> for Instant<A> {
    type Output = Instant<A>;
    fn add(self, d: Nanos) -> Self {
        Self::from_ticks(self.ticks + d.0)
    }
}

impl<A: Axis> AddAssign<Nanos> for Instant<A> {
    fn add_assign(&mut self, d: Nanos) {
        self.ticks += d.0;
    }
}

impl<A: Axis> Sub<Nanos> for Instant<A> {
    type Output = Instant<A>;
    fn sub(self, d: Nanos) -> Self {
        Self::from_ticks(self.ticks - d.0)
    }
}

impl<A: Axis> SubAssign<Nanos> for Instant<A> {
    fn sub_assign(&mut self, d: Nanos) {
        self.ticks -= d.0;
    }
}

impl<A: Axis> Sub for Instant<A> {
    type Output = Nanos;
    fn sub(self, rhs: Self) -> Nanos {
        Nanos(self.ticks - rhs.ticks)
    }
}

/// Oscillator skew, held as an exact integer in parts per 10^12.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Drift {
    per_trillion: i64,
}

impl Drift {
    pub const ZERO: Drift = Drift { per_trillion: 0 };

    pub fn from_ppm(ppm: f64) -> Result<Drift, TimeError> {
        if !ppm.is_finite() || ppm.abs() >= 1e6 {
            return Err(TimeError::DriftOutOfRange(ppm));
        }
        Ok(Drift {
            per_trillion: (ppm * 1e6).round() as i64,
        })
    }

    pub const fn from_ppb(ppb: i64) -> Drift {
        Drift {
            per_trillion: ppb * 1_000,
        }
    }

    pub fn as_ppm(self) -> f64 {
        self.per_trillion as f64 / 1e6
    }

    pub const fn per_trillion(self) -> i64 {
        self.per_trillion
    }
}

/// Divides with round-half-away-from-zero.
fn div_round(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    if 2 * r >= den {
        if num >= 0 || 2 * r > den {
            q + 1
        } else {
            q
        }
    } else {
        q
    }
}

fn to_i64(v: i128) -> Result<i64, TimeError> {
    i64::try_from(v).map_err(|_| TimeError::Overflow)
}

/// Affine map from global true time to a local clock:
/// `local = epoch + offset + (t - epoch) * (1 + drift)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockModel {
    pub offset: Nanos,
    pub drift: Drift,
    pub epoch: GlobalTime,
}

impl Default for ClockModel {
    fn default() -> Self {
        ClockModel::ideal()
    }
}

impl ClockModel {
    pub const fn ideal() -> Self {
        ClockModel {
            offset: Nanos::ZERO,
            drift: Drift::ZERO,
            epoch: GlobalTime::from_ticks(0),
        }
    }

    pub const fn new(offset: Nanos, drift: Drift) -> Self {
        ClockModel {
            offset,
            drift,
            epoch: GlobalTime::from_ticks(0),
        }
    }

    pub fn with_epoch(mut self, epoch: GlobalTime) -> Self {
        self.epoch = epoch;
        self
    }

    fn forward(&self, elapsed: i128) -> i128 {
        elapsed + div_round(elapsed * self.drift.per_trillion as i128, DRIFT_SCALE)
    }

    /// Reads this clock at global time `t`.
    pub fn local_time_of<A: Axis>(&self, t: GlobalTime) -> Result<Instant<A>, TimeError> {
        let elapsed = t.ticks() as i128 - self.epoch.ticks() as i128;
        let local = self.epoch.ticks() as i128 + self.offset.0 as i128 + self.forward(elapsed);
        to_i64(local).map(Instant::from_ticks)
    }

    /// First global tick at which this clock reads at least `local`.
    pub fn global_time_of<A: Axis>(&self, local: Instant<A>) -> Result<GlobalTime, TimeError> {
        let target = local.ticks() as i128 - self.epoch.ticks() as i128 - self.offset.0 as i128;
        let mut e =
            (target * DRIFT_SCALE).div_euclid(DRIFT_SCALE + self.drift.per_trillion as i128);
        while self.forward(e) < target {
            e += 1;
        }
        while self.forward(e - 1) >= target {
            e -= 1;
        }
        to_i64(self.epoch.ticks() as i128 + e).map(GlobalTime::from_ticks)
    }
}

/// Radio-front-end reading of `clock` at true time `t`.
pub fn radio_time_of(clock: &ClockModel, t: GlobalTime) -> Result<RadioTime, TimeError> {
    clock.local_time_of(t)
}

/// True time at which `clock` reaches `radio`.
pub fn true_time_of(clock: &ClockModel, radio: RadioTime) -> Result<GlobalTime, TimeError> {
    clock.global_time_of(radio)
}

/// Host OS clock. Only RTT bookkeeping reads it; slot timing never does.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HostClock {
    pub clock: ClockModel,
}

impl HostClock {
    pub fn new(clock: ClockModel) -> Self {
        HostClock { clock }
    }

    pub fn host_time_of(&self, t: GlobalTime) -> Result<HostTime, TimeError> {
        self.clock.local_time_of(t)
    }
}

/// Duration of one sample for a bandwidth that divides 1 s exactly.
pub fn sample_period_for(bandwidth_hz: u64) -> Result<Nanos, TimeError> {
    if bandwidth_hz == 0
        || bandwidth_hz > NANOS_PER_SEC as u64
        || !(NANOS_PER_SEC as u64).is_multiple_of(bandwidth_hz)
    {
        return Err(TimeError::BandwidthNotDivisor(bandwidth_hz));
    }
    Ok(Nanos(NANOS_PER_SEC / bandwidth_hz as i64))
}

/// Converts receive-stream sample indices to radio timestamps, anchored at
/// the timestamp the radio attached to the first streamed sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleCounter {
    init_time: RadioTime,
    count: u64,
    sample_period: Nanos,
}

impl SampleCounter {
    pub fn new(init_time: RadioTime, sample_period: Nanos) -> Result<Self, TimeError> {
        if sample_period.0 <= 0 {
            return Err(TimeError::NonPositivePeriod);
        }
        Ok(SampleCounter {
            init_time,
            count: 0,
            sample_period,
        })
    }

    pub fn init_time(&self) -> RadioTime {
        self.init_time
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sample_period(&self) -> Nanos {
        self.sample_period
    }

    /// Moves the counter forward; never backwards.
    pub fn advance_to(&mut self, index: u64) {
        self.count = self.count.max(index);
    }

    pub fn sample_arrival_time(&self, sample_index: u64) -> RadioTime {
        let offset = (sample_index as i64)
            .checked_mul(self.sample_period.0)
            .expect("sample index beyond tick range");
        self.init_time + Nanos(offset)
    }

    /// Nearest sample index; exact half-sample ties go to the later sample.
    pub fn quantize_to_sample(&self, radio_time: RadioTime) -> Result<u64, TimeError> {
        let since = radio_time - self.init_time;
        if since.0 < 0 {
            return Err(TimeError::BeforeStreamStart {
                time: radio_time.ticks(),
                init: self.init_time.ticks(),
            });
        }
        let p = self.sample_period.0 as i128;
        let idx = (2 * since.0 as i128 + p) / (2 * p);
        Ok(idx as u64)
    }
}

/// Free-function form of [`SampleCounter::sample_arrival_time`].
pub fn sample_arrival_time(counter: &SampleCounter, sample_index: u64) -> RadioTime {
    counter.sample_arrival_time(sample_index)
}

/// Free-function form of [`SampleCounter::quantize_to_sample`].
pub fn quantize_to_sample(
    counter: &SampleCounter,
    radio_time: RadioTime,
) -> Result<u64, TimeError> {
    counter.quantize_to_sample(radio_time)
}
