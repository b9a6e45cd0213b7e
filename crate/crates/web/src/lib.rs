//! wasm-bindgen bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers or strings and returns a JSON string, so
//! the page needs no extra glue beyond the generated module.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use mpc_pacing::scenarios::{self, builtin};
use mpc_pacing::sim::{AckPath, FlowSpec, LinkSpec, NoiseSpec, TraceRecord};
use mpc_pacing::stats::{flow_summaries, subsample, summary_table, Window};
use mpc_pacing::{run_scenario, Controller, ControllerConfig, Scenario};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Points per flow handed to the page.
const PLOT_POINTS: usize = 600;

#[derive(Serialize)]
struct FlowSeries {
    flow_id: u32,
    time: Vec<f64>,
    rate: Vec<f64>,
    rtt_ms: Vec<f64>,
}

#[derive(Serialize)]
struct RunResult {
    name: String,
    bottleneck_rate: f64,
    duration: f64,
    warmup: f64,
    loss_fraction: f64,
    table: String,
    flows: Vec<FlowSeries>,
}

#[derive(Serialize)]
struct Failure {
    error: String,
}

fn fail(msg: impl ToString) -> String {
    serde_json::to_string(&Failure { error: msg.to_string() }).expect("serialises")
}

fn series(trace: &[TraceRecord], flow_id: u32) -> FlowSeries {
    let acks: Vec<&TraceRecord> = trace.iter().filter(|r| r.flow_id == flow_id && r.rtt.is_some()).collect();
    let picked = subsample(&acks, PLOT_POINTS);
    FlowSeries {
        flow_id,
        time: picked.iter().map(|r| r.time).collect(),
        rate: picked.iter().map(|r| r.pacing_rate).collect(),
        rtt_ms: picked.iter().filter_map(|r| r.rtt).map(|v| v * 1e3).collect(),
    }
}

fn simulate(sc: Scenario) -> String {
    let out = match run_scenario(&sc) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let table = match flow_summaries(&out.trace, Window::new(sc.warmup, sc.duration)) {
        Ok(rows) => summary_table(&rows),
        Err(e) => return fail(e),
    };
    let result = RunResult {
        name: sc.name.clone(),
        bottleneck_rate: sc.link.bottleneck_rate,
        duration: sc.duration,
        warmup: sc.warmup,
        loss_fraction: out.summary.loss_fraction(),
        table,
        flows: sc.flows.iter().map(|f| series(&out.trace, f.flow_id)).collect(),
    };
    serde_json::to_string(&result).expect("serialises")
}

/// Runs a built-in table scenario for `duration` seconds.
#[wasm_bindgen]
pub fn run_builtin(name: &str, seed: u32, duration: f64) -> String {
    let Some(mut sc) = builtin(name) else {
        return fail(format!("unknown scenario {name}"));
    };
    if !(duration > 0.0) {
        return fail("duration must be positive");
    }
    sc.warmup = (sc.warmup * duration / sc.duration).min(duration / 2.0);
    sc.duration = duration;
    simulate(sc.with_seed(u64::from(seed)))
}

/// Equal flows sharing one bottleneck. `start_ratio` scales the last flow's
/// starting rate relative to the others.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn run_custom(
    bottleneck_rate: f64,
    buffer_packets: u32,
    flow_count: u32,
    rtt_ms: f64,
    duration: f64,
    seed: u32,
    tau_d: f64,
    start_ratio: f64,
) -> String {
    if flow_count == 0 || flow_count > 16 {
        return fail("flow count must be between 1 and 16");
    }
    if !(start_ratio > 0.0) {
        return fail("start ratio must be positive");
    }
    let share = bottleneck_rate / f64::from(flow_count);
    let mut controller = scenarios::table_controller();
    controller.tau_d = tau_d;
    let flows = (0..flow_count)
        .map(|i| FlowSpec {
            flow_id: i,
            base_rtt: rtt_ms * 1e-3,
            rate_cap: None,
            rate_floor: share / 20.0,
            initial_rate: Some(if i + 1 == flow_count { share * start_ratio } else { share }),
            start_time: f64::from(i) * 1e-3,
            controller: controller.clone(),
        })
        .collect();
    simulate(Scenario {
        name: "custom".into(),
        link: LinkSpec {
            bottleneck_rate,
            buffer_capacity: buffer_packets,
            propagation_rtt: rtt_ms * 1e-3,
            ack_path: AckPath::Infinite,
            segments_per_packet: 1,
        },
        flows,
        duration,
        noise: NoiseSpec {
            seed: u64::from(seed),
            ..NoiseSpec::default()
        },
        warmup: duration / 10.0,
    })
}

#[derive(Serialize)]
struct Step {
    next_rate: f64,
    target_ms: f64,
    rb_hat: f64,
}

/// One closed-form rate update for a fresh controller at `rate` and `rtt_ms`
/// that then observes `sample_ms` after `dt` seconds.
#[wasm_bindgen]
pub fn optimizer_step(c1: f64, c2: f64, alpha: f64, rate: f64, rtt_ms: f64, sample_ms: f64, dt: f64) -> String {
    let cfg = ControllerConfig {
        c1,
        c2,
        alpha,
        ..ControllerConfig::default()
    };
    let c = match Controller::new(cfg, rate, rtt_ms * 1e-3, 0.0) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if !(dt > 0.0) {
        return fail("dt must be positive");
    }
    let step = Step {
        next_rate: c.optimize_rate(sample_ms * 1e-3, dt),
        target_ms: c.target_latency() * 1e3,
        rb_hat: c.state().rb_hat,
    };
    serde_json::to_string(&step).expect("serialises")
}
