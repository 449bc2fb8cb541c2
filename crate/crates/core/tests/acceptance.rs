//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --release --test acceptance`.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use slotsync::channel::DetectionModel;
use slotsync::cli::write_report;
use slotsync::protocol::ptp_update;
use slotsync::scenario::{preset, preset_names, Scenario};
use slotsync::sim::metrics::{first_crossing, DriftPoint};
use slotsync::sim::{drift_experiment, rtt_experiment, run_scenario, MetricsReport};
use slotsync::timebase::{Nanos, RadioTime};

type Outcome = Result<String, String>;
type Criterion = fn(u64) -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn load(name: &str, seed_shift: u64) -> Result<Scenario, String> {
    let mut sc = preset(name).map_err(|e| e.to_string())?;
    sc.seed = sc.seed.wrapping_add(seed_shift);
    Ok(sc)
}

fn run(sc: &Scenario) -> Result<MetricsReport, String> {
    run_scenario(sc, sc.seed).map_err(|e| e.to_string())
}

fn budget(name: &str, took: Duration, limit: Duration) -> Result<(), String> {
    ensure(took <= limit, || {
        format!("{name} took {took:.2?}, limit {limit:?}")
    })
}

fn step_period(trace: &[DriftPoint]) -> Option<f64> {
    let mut steps = Vec::new();
    for w in trace.windows(2) {
        if w[1].delta_samples != w[0].delta_samples {
            steps.push(w[1].frame);
        }
    }
    if steps.len() < 2 {
        return None;
    }
    Some((steps[steps.len() - 1] - steps[0]) as f64 / (steps.len() - 1) as f64)
}

fn criterion_1(seed_shift: u64) -> Outcome {
    let sc = load("fig8_drift", seed_shift)?;
    let t = Instant::now();
    let report = drift_experiment(&sc, 400).map_err(|e| e.to_string())?;
    budget("drift run", t.elapsed(), Duration::from_secs(5))?;
    let trace = &report.drift_trace;
    let at_400 = trace
        .iter()
        .find(|p| p.frame == 400)
        .ok_or("no drift point at frame 400")?
        .delta_samples;
    ensure((at_400 - 50.0).abs() <= 2.0, || {
        format!("delta(400) = {at_400}, expected 50 ± 2")
    })?;
    let crossing = first_crossing(trace, 5.0).ok_or("delta never exceeds 5 samples")?;
    ensure(crossing.abs_diff(48) <= 5, || {
        format!("first crossing at frame {crossing}, expected 48 ± 5")
    })?;
    let period = step_period(trace).ok_or("fewer than two steps")?;
    ensure((7.0..=9.0).contains(&period), || {
        format!("step period {period:.2} frames")
    })?;
    Ok(format!(
        "delta(400)={at_400} crossing={crossing} step_period={period:.2}"
    ))
}

fn criterion_2(seed_shift: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ seed_shift);
    let t = Instant::now();
    let mut worst = 0i64;
    for _ in 0..10_000 {
        let o: i64 = rng.random_range(-1_000_000..=1_000_000);
        let d: i64 = rng.random_range(0..=10_000);
        let s00k = RadioTime::from_ticks(rng.random_range(0..1_000_000_000_000));
        let sij = s00k + Nanos(rng.random_range(0..100_000_000));
        let t1 = s00k + Nanos(d + o);
        let t02 = sij - Nanos(o) + Nanos(d);
        let est = ptp_update(t1, s00k, sij, t02);
        worst = worst
            .max((est.delay.0 - d).abs())
            .max((est.offset.0 - o).abs());
    }
    budget("10^4 estimates", t.elapsed(), Duration::from_secs(1))?;
    ensure(worst <= 1, || format!("worst recovery error {worst} ns"))?;
    Ok(format!("10000 cases, worst error {worst} ns"))
}

fn criterion_3(seed_shift: u64) -> Outcome {
    let sc = load("fig10_alignment", seed_shift)?;
    let t = Instant::now();
    let report = run(&sc)?;
    budget("alignment run", t.elapsed(), Duration::from_secs(30))?;
    let mut parts = Vec::new();
    for a in &report.alignment {
        ensure(a.samples > 0, || format!("node {} has no samples", a.node))?;
        ensure(a.zero_fraction >= 0.88, || {
            format!("node {} zero fraction {:.4}", a.node, a.zero_fraction)
        })?;
        ensure(a.within_one_fraction == 1.0, || {
            format!(
                "node {} within-one fraction {:.6}",
                a.node, a.within_one_fraction
            )
        })?;
        parts.push(format!("node{}: zero={:.3}", a.node, a.zero_fraction));
    }
    ensure(report.alignment.len() == 2, || {
        "expected two devices".into()
    })?;
    Ok(parts.join(" "))
}

fn modes(report: &MetricsReport) -> Vec<(u16, u64)> {
    report.alignment.iter().map(|a| (a.node, a.mode)).collect()
}

fn criterion_4(seed_shift: u64) -> Outcome {
    let sc = load("fig10_uncompensated", seed_shift)?;
    let expected = vec![(1, 6), (2, 2)];
    let got = modes(&run(&sc)?);
    ensure(got == expected, || {
        format!("modes {got:?}, expected {expected:?}")
    })?;

    let mut exact = sc.clone();
    *exact.detection.active_mut() = DetectionModel::EXACT;
    let report = run(&exact)?;
    let got_exact = modes(&report);
    ensure(got_exact == expected, || {
        format!("noise-free modes {got_exact:?}")
    })?;
    Ok(format!("modes {got:?}, noise-free {got_exact:?}"))
}

fn criterion_5(seed_shift: u64) -> Outcome {
    let sc = load("fig12_rtt", seed_shift)?;
    let targets = [(2, 9_970_000.0), (10, 26_160_000.0), (20, 46_190_000.0)];
    let p99s = targets
        .par_iter()
        .map(|&(ms, _)| {
            let r =
                rtt_experiment(&sc, Nanos::from_millis(ms), 10_000).map_err(|e| e.to_string())?;
            Ok(r.rtt.expect("rtt summary").percentiles.p99)
        })
        .collect::<Result<Vec<i64>, String>>()?;
    ensure(p99s.windows(2).all(|w| w[0] < w[1]), || {
        format!("p99 not increasing: {p99s:?}")
    })?;
    for (&p99, &(ms, target)) in p99s.iter().zip(&targets) {
        let rel = (p99 as f64 - target) / target;
        ensure(rel.abs() <= 0.30, || {
            format!("T_adv {ms} ms: p99 {p99} ns is {:+.1}% off", rel * 100.0)
        })?;
    }

    let short = load("fig13_short", seed_shift)?;
    let t = Instant::now();
    let report = run(&short)?;
    budget("short-frame run", t.elapsed(), Duration::from_secs(120))?;
    let rtt = report.rtt.ok_or("no round trips")?;
    ensure(rtt.count >= 100_000, || {
        format!("only {} round trips", rtt.count)
    })?;
    let max = rtt.percentiles.max;
    ensure(max <= 7_500_000, || format!("short-frame max RTT {max} ns"))?;
    Ok(format!(
        "p99 {} / {} / {}, short-frame max {}",
        Nanos(p99s[0]),
        Nanos(p99s[1]),
        Nanos(p99s[2]),
        Nanos(max)
    ))
}

fn criterion_6(seed_shift: u64) -> Outcome {
    let sc = load("event_sync", seed_shift)?;
    let calibrated = run(&sc)?.event_sync.ok_or("no event sync report")?;
    let mut quiet = sc.clone();
    *quiet.detection.active_mut() = DetectionModel::EXACT;
    let exact = run(&quiet)?.event_sync.ok_or("no event sync report")?;
    ensure(exact.events > 0 && calibrated.events > 0, || {
        "no synchronized events fired".into()
    })?;
    ensure(exact.max_spread_ns <= 100, || {
        format!("noise-free spread {} ns", exact.max_spread_ns)
    })?;
    ensure(calibrated.max_spread_ns <= 200, || {
        format!("calibrated spread {} ns", calibrated.max_spread_ns)
    })?;
    Ok(format!(
        "noise-free max spread {} ns, calibrated {} ns over {} events",
        exact.max_spread_ns, calibrated.max_spread_ns, calibrated.events
    ))
}

fn criterion_7(seed_shift: u64) -> Outcome {
    let names = preset_names();
    let reports = names
        .par_iter()
        .map(|n| load(n, seed_shift).and_then(|sc| run(&sc)).map(|r| (*n, r)))
        .collect::<Result<Vec<_>, String>>()?;
    let mut checked = 0;
    for (name, r) in &reports {
        ensure(r.freshness.checked > 0, || {
            format!("{name}: nothing checked")
        })?;
        ensure(r.freshness.violations == 0, || {
            format!("{name}: {} stale transmissions", r.freshness.violations)
        })?;
        checked += r.freshness.checked;
    }
    Ok(format!(
        "{checked} transmissions over {} presets, 0 stale",
        reports.len()
    ))
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .expect("read dir")
        .map(|e| {
            let e = e.expect("dir entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).expect("read"),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_8() -> Outcome {
    let names = preset_names();
    names.par_iter().try_for_each(|name| {
        let sc = load(name, 0)?;
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let report = run(&sc)?;
            write_report(dir.path(), &report, None).map_err(|e| e.to_string())?;
            outputs.push(read_dir_bytes(dir.path()));
        }
        ensure(outputs[0] == outputs[1], || {
            format!("{name}: outputs differ between runs")
        })
    })?;

    let sc = load("fig12_rtt", 0)?;
    let a = rtt_experiment(&sc, Nanos::from_millis(2), 2_000).map_err(|e| e.to_string())?;
    let other = load("fig12_rtt", 1)?;
    let b = rtt_experiment(&other, Nanos::from_millis(2), 2_000).map_err(|e| e.to_string())?;
    ensure(a.rtt_samples != b.rtt_samples, || {
        "a different seed gave identical RTT samples".into()
    })?;

    let shift = 0x9e37_79b9;
    let reruns: [(u32, Criterion); 7] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
    ];
    for (n, f) in reruns {
        f(shift).map_err(|e| format!("criterion {n} with another seed: {e}"))?;
    }
    Ok(format!(
        "{} presets byte-identical; criteria 1-7 hold with another seed",
        names.len()
    ))
}

fn criterion_9(seed_shift: u64) -> Outcome {
    let sc = load("beacon_miss", seed_shift)?;
    let report = run(&sc)?;
    let limit = 2 * sc.phy.sample_period().0;
    let node1 = report.nodes.iter().find(|n| n.id == 1).ok_or("no node 1")?;
    ensure(node1.counters.beacons_missed >= 5, || {
        format!("node 1 missed {} beacons", node1.counters.beacons_missed)
    })?;
    ensure(report.fault_window_max_error_ns <= limit, || {
        format!(
            "fault window error {} ns > {limit} ns",
            report.fault_window_max_error_ns
        )
    })?;
    ensure(report.max_boundary_error_ns <= limit, || {
        format!(
            "boundary error {} ns > {limit} ns",
            report.max_boundary_error_ns
        )
    })?;
    ensure(report.invariants.overlaps == 0, || {
        format!("{} overlaps", report.invariants.overlaps)
    })?;
    Ok(format!(
        "{} beacons missed, fault window error {} ns, overall {} ns",
        node1.counters.beacons_missed,
        report.fault_window_max_error_ns,
        report.max_boundary_error_ns
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, Box<dyn Fn() -> Outcome>); 9] = [
        (1, Box::new(|| criterion_1(0))),
        (2, Box::new(|| criterion_2(0))),
        (3, Box::new(|| criterion_3(0))),
        (4, Box::new(|| criterion_4(0))),
        (5, Box::new(|| criterion_5(0))),
        (6, Box::new(|| criterion_6(0))),
        (7, Box::new(|| criterion_7(0))),
        (8, Box::new(criterion_8)),
        (9, Box::new(|| criterion_9(0))),
    ];
    let mut failed = 0;
    for (n, f) in &criteria {
        let t = Instant::now();
        let outcome = f();
        let took = t.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS {detail} ({took:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL {detail} ({took:.2?})");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
