use crate::scenario::{Role, Scenario};
use crate::timebase::Nanos;

use super::{Engine, MetricsReport, SimError};

/// Runs a scenario to completion with the given master seed.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<MetricsReport, SimError> {
    Engine::new(scenario, seed)?.run().map(|(report, _)| report)
}

/// Same as [`run_scenario`] but also returns the event trace.
pub fn run_traced(
    scenario: &Scenario,
    seed: u64,
) -> Result<(MetricsReport, Vec<String>), SimError> {
    let mut engine = Engine::new(scenario, seed)?;
    engine.enable_trace();
    engine.run()
}

/// Measures request/reply round trips with every node's advance time fixed
/// at `t_adv`. The run stops once `n_pairs` replies came back; the frame
/// horizon is stretched so that it is never the limit.
pub fn rtt_experiment(
    scenario: &Scenario,
    t_adv: Nanos,
    n_pairs: u64,
) -> Result<MetricsReport, SimError> {
    let mut sc = scenario.clone();
    if sc.traffic.requester.is_none() {
        let first = sc
            .nodes
            .iter()
            .find(|n| n.role == Role::Device)
            .ok_or_else(|| SimError::Experiment("RTT experiment needs a device".into()))?;
        sc.traffic.requester = Some(first.id);
    }
    sc.set_t_adv(t_adv);
    sc.horizon.rtt_pairs = Some(n_pairs);
    // One request per frame, and each reply needs roughly t_adv of lead.
    let frame = sc.phy.frame_duration().0 as u64;
    let per_pair = 2 + (2 * t_adv.0 as u64).div_ceil(frame);
    sc.horizon.frames = Some(n_pairs * per_pair + 16);
    sc.horizon.seconds = None;
    let seed = sc.seed;
    let report = run_scenario(&sc, seed)?;
    if report.rtt.as_ref().map_or(0, |r| r.count) < n_pairs {
        return Err(SimError::Experiment(format!(
            "only {} of {n_pairs} round trips completed",
            report.rtt.as_ref().map_or(0, |r| r.count)
        )));
    }
    Ok(report)
}

/// Free-running drift: synchronization is disabled after the first beacon
/// and the detected beacon sample is tracked for `n_frames` frames.
pub fn drift_experiment(scenario: &Scenario, n_frames: u64) -> Result<MetricsReport, SimError> {
    let mut sc = scenario.clone();
    sc.sync.enabled = false;
    if sc.metrics.drift_node.is_none() {
        let first = sc
            .nodes
            .iter()
            .find(|n| n.role == Role::Device)
            .ok_or_else(|| SimError::Experiment("drift experiment needs a device".into()))?;
        sc.metrics.drift_node = Some(first.id);
    }
    sc.horizon.frames = Some(n_frames + 1);
    sc.horizon.seconds = None;
    sc.horizon.rtt_pairs = None;
    let seed = sc.seed;
    run_scenario(&sc, seed)
}
