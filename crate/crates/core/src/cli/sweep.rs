use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::output::{write_atomic, write_report};
use super::{run_traced_if, CliError};
use crate::scenario::{Role, Scenario};
use crate::sim::MetricsReport;
use crate::timebase::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKey {
    TAdv,
    DriftPpm,
    Beta,
    GuardSamples,
    DetectionJitter,
}

impl SweepKey {
    pub const ALL: [SweepKey; 5] = [
        SweepKey::TAdv,
        SweepKey::DriftPpm,
        SweepKey::Beta,
        SweepKey::GuardSamples,
        SweepKey::DetectionJitter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepKey::TAdv => "t_adv",
            SweepKey::DriftPpm => "drift_ppm",
            SweepKey::Beta => "beta",
            SweepKey::GuardSamples => "guard_samples",
            SweepKey::DetectionJitter => "detection_jitter",
        }
    }
}

impl fmt::Display for SweepKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKey {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        SweepKey::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = SweepKey::ALL.iter().map(|k| k.name()).collect();
                CliError::Sweep(format!(
                    "unknown key `{s}`; expected one of {}",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub key: SweepKey,
    pub values: Vec<String>,
}

/// Parses `KEY=V1,V2,...`.
pub fn parse_sweep(text: &str) -> Result<SweepSpec, CliError> {
    let (key, rest) = text
        .split_once('=')
        .ok_or_else(|| CliError::Sweep(format!("`{text}` is not KEY=V1,V2,...")))?;
    let key: SweepKey = key.trim().parse()?;
    let values: Vec<String> = rest
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(CliError::Sweep(format!("no values given for `{key}`")));
    }
    Ok(SweepSpec { key, values })
}

fn num<T: FromStr>(key: SweepKey, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Sweep(format!("`{v}` is not a valid value for `{key}`")))
}

/// Applies one sweep value and re-validates the scenario.
pub fn apply_sweep_value(sc: &mut Scenario, key: SweepKey, value: &str) -> Result<(), CliError> {
    match key {
        SweepKey::TAdv => {
            let t = Nanos::parse(value).map_err(CliError::Sweep)?;
            sc.set_t_adv(t);
        }
        SweepKey::DriftPpm => {
            let d: f64 = num(key, value)?;
            for n in sc.nodes.iter_mut().filter(|n| n.role == Role::Device) {
                n.drift_ppm = d;
            }
        }
        SweepKey::Beta => {
            let b: f64 = num(key, value)?;
            sc.jit.beta = b;
            for n in &mut sc.nodes {
                if let Some(j) = &mut n.jit {
                    j.beta = b;
                }
            }
        }
        SweepKey::GuardSamples => sc.phy.guard_samples = num(key, value)?,
        SweepKey::DetectionJitter => sc.detection.active_mut().jitter_samples = num(key, value)?,
    }
    sc.validate()?;
    Ok(())
}

/// Seed of one sweep point: the first 8 bytes of SHA-256 over the master
/// seed, key and value, cut to 63 bits so it survives TOML integers.
pub fn point_seed(master: u64, key: SweepKey, value: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(key.name().as_bytes());
    h.update([0u8]);
    h.update(value.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) & i64::MAX as u64
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: String,
    pub seed: u64,
    pub report: MetricsReport,
}

fn dir_name(key: SweepKey, value: &str) -> String {
    let safe: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{key}={safe}")
}

/// Runs every point in parallel, writes one result directory per point and
/// `sweep.csv` in `out`. Points are returned in the order given.
pub fn run_sweep(
    base: &Scenario,
    master_seed: u64,
    spec: &SweepSpec,
    out: &Path,
    trace: bool,
) -> Result<Vec<SweepPoint>, CliError> {
    let mut scenarios = Vec::with_capacity(spec.values.len());
    for v in &spec.values {
        let mut sc = base.clone();
        apply_sweep_value(&mut sc, spec.key, v)?;
        scenarios.push((v.clone(), sc));
    }
    let points: Vec<SweepPoint> = scenarios
        .into_par_iter()
        .map(|(value, sc)| {
            let seed = point_seed(master_seed, spec.key, &value);
            let (report, lines) = run_traced_if(&sc, seed, trace)?;
            let dir = out.join(dir_name(spec.key, &value));
            std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            write_report(&dir, &report, trace.then_some(lines.as_slice()))?;
            Ok(SweepPoint {
                value,
                seed,
                report,
            })
        })
        .collect::<Result<_, CliError>>()?;

    let mut csv = String::from(
        "key,value,seed,late_drops,missed_beacons,zero_fraction,within_one_fraction,rtt_count,rtt_p50_ns,rtt_p99_ns,rtt_max_ns,violations\n",
    );
    for p in &points {
        let pooled = p.report.pooled_alignment();
        let total: u64 = pooled.values().sum();
        let frac = |pred: fn(u64) -> bool| {
            if total == 0 {
                0.0
            } else {
                pooled
                    .iter()
                    .filter(|(b, _)| pred(**b))
                    .map(|(_, c)| *c)
                    .sum::<u64>() as f64
                    / total as f64
            }
        };
        let (n, p50, p99, max) = p.report.rtt.as_ref().map_or((0, 0, 0, 0), |r| {
            (
                r.count,
                r.percentiles.p50,
                r.percentiles.p99,
                r.percentiles.max,
            )
        });
        writeln!(
            csv,
            "{},{},{},{},{},{:.6},{:.6},{},{},{},{},{}",
            spec.key,
            p.value,
            p.seed,
            p.report.late_drops,
            p.report.missed_beacons,
            frac(|b| b == 0),
            frac(|b| b <= 1),
            n,
            p50,
            p99,
            max,
            p.report.invariants.total_violations()
        )
        .expect("string write");
    }
    write_atomic(out, "sweep.csv", csv.as_bytes())?;
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_and_values() {
        let s = parse_sweep("t_adv=1ms, 2ms,5ms").unwrap();
        assert_eq!(s.key, SweepKey::TAdv);
        assert_eq!(s.values, vec!["1ms", "2ms", "5ms"]);
    }

    #[test]
    fn rejects_empty_and_unknown() {
        assert!(matches!(parse_sweep("beta="), Err(CliError::Sweep(_))));
        assert!(matches!(parse_sweep("beta"), Err(CliError::Sweep(_))));
        let err = parse_sweep("gamma=1").unwrap_err().to_string();
        assert!(err.contains("gamma") && err.contains("t_adv"), "{err}");
    }

    #[test]
    fn point_seeds_are_stable_and_distinct() {
        let a = point_seed(7, SweepKey::Beta, "1.0");
        assert_eq!(a, point_seed(7, SweepKey::Beta, "1.0"));
        assert_ne!(a, point_seed(7, SweepKey::Beta, "2.0"));
        assert_ne!(a, point_seed(8, SweepKey::Beta, "1.0"));
        assert_ne!(a, point_seed(7, SweepKey::DriftPpm, "1.0"));
    }

    #[test]
    fn applies_values() {
        let mut sc = crate::scenario::preset("table2").unwrap();
        apply_sweep_value(&mut sc, SweepKey::GuardSamples, "100").unwrap();
        assert_eq!(sc.phy.guard_samples, 100);
        apply_sweep_value(&mut sc, SweepKey::DriftPpm, "1.5").unwrap();
        assert!(sc
            .nodes
            .iter()
            .filter(|n| n.role == Role::Device)
            .all(|n| n.drift_ppm == 1.5));
        assert!(apply_sweep_value(&mut sc, SweepKey::Beta, "-1").is_err());
        assert!(apply_sweep_value(&mut sc, SweepKey::TAdv, "soon").is_err());
    }
}
