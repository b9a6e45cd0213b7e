//! Experiment configurations: the single-flow run, the two four-flow tables
//! (same and different RTTs, capped and uncapped) and the buffer-size sweep.

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, ProbeConfig};
use crate::sim::{AckPath, FlowSpec, LinkSpec, NoiseSpec, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub link: LinkSpec,
    pub flows: Vec<FlowSpec>,
    /// Seconds.
    pub duration: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Leading seconds excluded from statistics.
    #[serde(default)]
    pub warmup: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        self.link.validate()?;
        if self.flows.is_empty() {
            return Err(SimError::NoFlows);
        }
        for f in &self.flows {
            f.validate()?;
        }
        if !(self.duration > 0.0) {
            return Err(SimError::NonPositiveDuration(self.duration));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.duration) {
            return Err(SimError::InvalidLink(format!(
                "warmup {} must lie in [0, duration)",
                self.warmup
            )));
        }
        if !self.noise.is_valid() {
            return Err(SimError::InvalidNoise);
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.noise.seed = seed;
        self
    }
}

/// Bandwidth-delay product in whole packets, at least one.
pub fn bdp_packets(bottleneck_rate: f64, base_rtt: f64) -> u32 {
    ((bottleneck_rate * base_rtt).round() as u32).max(1)
}

pub const TABLE_BOTTLENECK: f64 = 40.0;
pub const TABLE_BASE_RTT: f64 = 0.025;
pub const TABLE_BUFFER: u32 = 25;
pub const TABLE_SEGMENTS: u32 = 64;
pub const TABLE_DURATION: f64 = 300.0;
pub const TABLE_WARMUP: f64 = 30.0;
pub const TABLE1_CAPS: [f64; 4] = [3.0, 7.0, 10.0, 20.0];
pub const TABLE2_RTTS: [f64; 4] = [0.025, 0.035, 0.045, 0.055];
pub const TABLE2_CAP: f64 = 10.0;

pub const SWEEP_BOTTLENECK: f64 = 200_000.0;
pub const SWEEP_BASE_RTT: f64 = 0.025;
pub const SWEEP_DURATION: f64 = 60.0;
pub const SWEEP_WARMUP: f64 = 10.0;
pub const SWEEP_FRACTIONS: [f64; 9] = [
    1.0 / 16.0,
    1.0 / 8.0,
    1.0 / 4.0,
    1.0 / 2.0,
    1.0,
    2.0,
    4.0,
    8.0,
    16.0,
];
pub const SWEEP_FLOW_COUNTS: [usize; 4] = [1, 2, 4, 8];

/// Controller settings of the packets/s experiments: default weights with
/// gentle probes every 30 s.
pub fn table_controller() -> ControllerConfig {
    let mut c = ControllerConfig::default();
    c.probe.interval = Some(30.0);
    c.probe.gain_up = 1.1;
    c.probe.gain_down = 0.9;
    c
}

/// Controller settings of the buffer sweep.
///
/// At 10^5 ACKs/s per flow the per-ACK step `dt` is tiny and every damping
/// term of the update scales with it, so the default weights oscillate. A slow
/// latency average (`alpha`) turns the `c2` term into a queue-growth damper, a
/// small `c3` sets its gain to roughly `c2 dt / (c3 lP^2)` = 16/s, and a tiny
/// `c1` keeps the target term from destabilising the loop. A long `tau_d`
/// stops the extrema drifting towards the average, which would walk the
/// queue upwards at about 2 ms per `tau_d`.
pub fn sweep_controller() -> ControllerConfig {
    ControllerConfig {
        c1: 1.7e-6,
        c2: 0.3,
        c3: Some(3e-4),
        alpha: 5e-4,
        tau_d: 10.0,
        probe: ProbeConfig {
            interval: Some(20.0),
            gain_up: 1.1,
            gain_down: 0.25,
            ..ProbeConfig::default()
        },
        ..ControllerConfig::default()
    }
}

/// Combined starting rate of the sweep flows, as a multiple of the bottleneck.
pub const SWEEP_START_LOAD: f64 = 1.2;

fn table_link() -> LinkSpec {
    LinkSpec {
        bottleneck_rate: TABLE_BOTTLENECK,
        buffer_capacity: TABLE_BUFFER,
        propagation_rtt: TABLE_BASE_RTT,
        ack_path: AckPath::Infinite,
        segments_per_packet: TABLE_SEGMENTS,
    }
}

/// Capped flows start at their cap, uncapped ones at an equal share of the
/// bottleneck among `flow_count` flows.
fn table_flow(flow_id: u32, base_rtt: f64, cap: Option<f64>, flow_count: usize) -> FlowSpec {
    let share = TABLE_BOTTLENECK / flow_count as f64;
    FlowSpec {
        flow_id,
        base_rtt,
        rate_cap: cap,
        rate_floor: 0.5,
        initial_rate: Some(cap.unwrap_or(share)),
        // Staggered starts keep the flows' segment trains out of phase.
        start_time: f64::from(flow_id) * 0.0011,
        controller: table_controller(),
    }
}

fn table_scenario(name: &str, flows: Vec<FlowSpec>) -> Scenario {
    Scenario {
        name: name.to_string(),
        link: table_link(),
        flows,
        duration: TABLE_DURATION,
        noise: NoiseSpec::default(),
        warmup: TABLE_WARMUP,
    }
}

pub fn single_flow() -> Scenario {
    table_scenario("single", vec![table_flow(0, TABLE_BASE_RTT, None, 1)])
}

/// Four flows with the same RTT: `(uncapped, capped)`.
pub fn table1_scenarios() -> (Scenario, Scenario) {
    let uncapped = (0..4).map(|i| table_flow(i, TABLE_BASE_RTT, None, 4)).collect();
    let capped = TABLE1_CAPS
        .iter()
        .zip(0..)
        .map(|(&cap, i)| table_flow(i, TABLE_BASE_RTT, Some(cap), 4))
        .collect();
    (
        table_scenario("table1-uncapped", uncapped),
        table_scenario("table1-capped", capped),
    )
}

/// Four flows with RTTs of 25, 35, 45 and 55 ms: `(uncapped, capped)`.
pub fn table2_scenarios() -> (Scenario, Scenario) {
    let mk = |cap| {
        TABLE2_RTTS
            .iter()
            .zip(0..)
            .map(|(&rtt, i)| table_flow(i, rtt, cap, 4))
            .collect()
    };
    (
        table_scenario("table2-uncapped", mk(None)),
        table_scenario("table2-capped", mk(Some(TABLE2_CAP))),
    )
}

/// Buffer capacity for a fraction of the sweep BDP.
pub fn sweep_buffer(fraction: f64) -> u32 {
    let bdp = f64::from(bdp_packets(SWEEP_BOTTLENECK, SWEEP_BASE_RTT));
    ((fraction * bdp).round() as u32).max(1)
}

pub fn sweep_scenario(fraction: f64, flow_count: usize) -> Scenario {
    let floor = SWEEP_BOTTLENECK / 8.0;
    let start = (SWEEP_START_LOAD * SWEEP_BOTTLENECK / flow_count as f64).clamp(floor, SWEEP_BOTTLENECK);
    let flows = (0..flow_count as u32)
        .map(|i| FlowSpec {
            flow_id: i,
            base_rtt: SWEEP_BASE_RTT,
            // A sender cannot outpace its own interface.
            rate_cap: Some(SWEEP_BOTTLENECK),
            rate_floor: floor,
            initial_rate: Some(start),
            start_time: f64::from(i) * 1e-6,
            controller: sweep_controller(),
        })
        .collect();
    Scenario {
        name: format!("sweep-{}bdp-{}flows", fraction_label(fraction), flow_count),
        link: LinkSpec {
            bottleneck_rate: SWEEP_BOTTLENECK,
            buffer_capacity: sweep_buffer(fraction),
            propagation_rtt: SWEEP_BASE_RTT,
            ack_path: AckPath::Infinite,
            segments_per_packet: 1,
        },
        flows,
        duration: SWEEP_DURATION,
        noise: NoiseSpec::default(),
        warmup: SWEEP_WARMUP,
    }
}

/// `1/16`, `1/2`, `1`, `16`, ... for BDP fractions.
pub fn fraction_label(fraction: f64) -> String {
    if fraction >= 1.0 && fraction.fract() == 0.0 {
        format!("{}", fraction as u64)
    } else {
        let inv = 1.0 / fraction;
        if (inv - inv.round()).abs() < 1e-9 {
            format!("1/{}", inv.round() as u64)
        } else {
            format!("{fraction}")
        }
    }
}

/// Cross product `fractions x flow_counts`, fraction-major.
pub fn buffer_sweep(fractions: &[f64], flow_counts: &[usize]) -> Vec<Scenario> {
    fractions
        .iter()
        .flat_map(|&f| flow_counts.iter().map(move |&n| sweep_scenario(f, n)))
        .collect()
}

/// Built-in scenario by CLI name.
pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "single" => Some(single_flow()),
        "table1-uncapped" => Some(table1_scenarios().0),
        "table1-capped" => Some(table1_scenarios().1),
        "table2-uncapped" => Some(table2_scenarios().0),
        "table2-capped" => Some(table2_scenarios().1),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 6] = [
    "single",
    "table1-uncapped",
    "table1-capped",
    "table2-uncapped",
    "table2-capped",
    "sweep",
];
