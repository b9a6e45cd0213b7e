//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use mpc_pacing::controller::ProbePhase;
use mpc_pacing::scenarios::{self, SWEEP_BOTTLENECK, SWEEP_FRACTIONS, TABLE_BOTTLENECK};
use mpc_pacing::sim::{run_simulation, write_csv, AckPath, FlowSpec, LinkSpec, NoiseSpec};
use mpc_pacing::stats::{flow_summaries, summarize_values, FlowSummary, SweepCellStats, Window};
use mpc_pacing::{run_scenario, run_sweep_cell, Controller, ControllerConfig, ProbeConfig, RttObservation, Scenario};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn steady(sc: &Scenario) -> Vec<FlowSummary> {
    let out = run_scenario(sc).expect("scenario runs");
    flow_summaries(&out.trace, Window::new(sc.warmup, sc.duration)).expect("non-empty window")
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target
}

fn table1_capped() -> Outcome {
    let rows = steady(&scenarios::table1_scenarios().1);
    let targets = [(2.7, 3.3), (6.3, 7.7), (9.0, 11.0), (18.8 * 0.9, 22.0)];
    let mut ok = true;
    let mut detail = Vec::new();
    for (r, (lo, hi)) in rows.iter().zip(targets) {
        ok &= r.rate.mean >= lo && r.rate.mean <= hi && r.rate.std <= 0.3 && r.rtt.std <= 0.5e-3;
        detail.push(format!("{:.2}±{:.2} rtt-std {:.2}ms", r.rate.mean, r.rate.std, r.rtt.std * 1e3));
    }
    check(ok && rows.len() == 4, detail.join(", "))
}

fn table1_uncapped() -> Outcome {
    let rows = steady(&scenarios::table1_scenarios().0);
    let ok = rows.len() == 4 && rows.iter().all(|r| within(r.rate.mean, 10.0, 0.15));
    let means: Vec<String> = rows.iter().map(|r| format!("{:.2}", r.rate.mean)).collect();
    check(ok, format!("means {}", means.join(", ")))
}

fn table2_capped() -> Outcome {
    let rows = steady(&scenarios::table2_scenarios().1);
    let mut ok = rows.len() == 4;
    let mut detail = Vec::new();
    for (r, rtt) in rows.iter().zip([25.0, 35.0, 45.0, 55.0]) {
        ok &= (r.rtt.mean * 1e3 - rtt).abs() <= 1.0 && within(r.rate.mean, 10.0, 0.10) && r.rate.std <= 0.3;
        detail.push(format!("{:.2}±{:.2} @ {:.1}ms", r.rate.mean, r.rate.std, r.rtt.mean * 1e3));
    }
    check(ok, detail.join(", "))
}

fn single_flow() -> Outcome {
    let sc = scenarios::single_flow();
    let out = run_scenario(&sc).expect("scenario runs");
    let w = Window::new(sc.warmup, sc.duration);
    let acks = out.trace.iter().filter(|r| r.rtt.is_some() && w.contains(r.time));
    let delivered = acks.clone().count() as f64;
    let utilization = delivered / (sc.duration - sc.warmup) / TABLE_BOTTLENECK;
    let steady = summarize_values(acks.filter(|r| r.probe == ProbePhase::None).map(|r| r.pacing_rate))
        .expect("non-probe samples");
    check(
        utilization >= 0.9 && steady.cv() <= 0.05,
        format!("utilization {:.3}, cv {:.4}", utilization, steady.cv()),
    )
}

fn buffer_sweep() -> Outcome {
    let cells: Vec<(f64, SweepCellStats)> = SWEEP_FRACTIONS
        .iter()
        .map(|&f| (f, run_sweep_cell(&scenarios::sweep_scenario(f, 2)).expect("cell runs")))
        .collect();
    let cell = |f: f64| cells.iter().find(|(g, _)| *g == f).map(|(_, s)| s).expect("fraction in grid");

    let low = [0.0625, 0.125].iter().all(|&f| cell(f).rate.median < 0.6 * SWEEP_BOTTLENECK);
    let high = cells.iter().filter(|(f, _)| *f >= 1.0).all(|(_, s)| s.rate.median >= 0.95 * SWEEP_BOTTLENECK);
    let (l16, l4) = (cell(0.0625).loss_fraction, cell(4.0).loss_fraction);
    let losses = l16 > 0.0 && l16 >= 10.0 * l4;
    // Medians compared at 0.1 ms: small buffers drain to the same RTT.
    let rtt_ms: Vec<f64> = cells.iter().map(|(_, s)| (s.rtt.median * 1e4).round() / 10.0).collect();
    let rtts = rtt_ms.windows(2).all(|w| w[0] <= w[1]);
    let (t1, thalf) = (cell(1.0).time_to_rate, cell(0.5).time_to_rate);
    let ttr = t1 < thalf;

    let rates: Vec<String> = cells
        .iter()
        .map(|(_, s)| format!("{:.2}", s.rate.median / SWEEP_BOTTLENECK))
        .collect();
    check(
        low && high && losses && rtts && ttr,
        format!(
            "rate/bottleneck [{}] ({low}/{high}), loss 1/16 {l16:.2e} vs 4 {l4:.2e} ({losses}), rtt ms {rtt_ms:?} ({rtts}), ttr 1 {t1:.2}s vs 1/2 {thalf:.2}s ({ttr})",
            rates.join(" ")
        ),
    )
}

fn prop(runner: &mut TestRunner, name: &str, failures: &mut Vec<String>, f: impl FnOnce(&mut TestRunner) -> Result<(), String>) {
    if let Err(e) = f(runner) {
        failures.push(format!("{name}: {e}"));
    }
}

fn no_probe(c1: f64, c2: f64, tau_d: f64, alpha: f64, min: f64, max: f64) -> ControllerConfig {
    ControllerConfig {
        c1,
        c2,
        alpha,
        tau_d,
        min_rate: min,
        max_rate: Some(max),
        probe: ProbeConfig {
            enabled: false,
            ..ProbeConfig::default()
        },
        ..ControllerConfig::default()
    }
}

fn properties() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        ..Config::default()
    });
    let mut failures = Vec::new();

    prop(&mut runner, "estimator", &mut failures, |r| {
        r.run(&(1.0f64..1e5, 0.5f64..2.0, prop::collection::vec(1e-4f64..0.01, 2..200)), |(rb, start, dts)| {
            let mut c = Controller::new(no_probe(0.2, 0.3, 1.0, 0.125, 1e-3 * rb, 4.0 * rb), start * rb, 0.5, 0.0).unwrap();
            let (mut l, mut now) = (0.5, 0.0);
            for dt in dts {
                let next = l + dt * (c.rate() - rb) / rb;
                if next < 0.01 {
                    break;
                }
                l = next;
                now += dt;
                c.on_ack(RttObservation { rtt: l, now, loss: false }).unwrap();
                prop_assert!((c.state().rb_hat - rb).abs() / rb < 1e-9);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
    });

    prop(&mut runner, "back-off decay", &mut failures, |r| {
        r.run(&(0.1f64..10.0, 0.001f64..0.5), |(tau_d, gap)| {
            let mut c = Controller::new(no_probe(0.2, 0.3, tau_d, 1e-12, 0.1, 100.0), 1.0, 0.025, 0.0).unwrap();
            let dt = tau_d / 2000.0;
            c.on_ack(RttObservation { rtt: 0.025 + gap, now: dt, loss: false }).unwrap();
            let g0 = c.state().l_hat_b - c.state().avg_l;
            for i in 0..2000 {
                c.on_ack(RttObservation { rtt: 0.025, now: dt * (i + 2) as f64, loss: false }).unwrap();
            }
            let ratio = (c.state().l_hat_b - c.state().avg_l) / g0;
            let e = (-1.0f64).exp();
            prop_assert!((ratio - e).abs() <= 0.05 * e);
            Ok(())
        })
        .map_err(|e| e.to_string())
    });

    prop(&mut runner, "fixed point and convexity", &mut failures, |r| {
        r.run(&(0.0f64..0.6, 0.05f64..0.35, 0.01f64..1.0, 1.0f64..1000.0, 0.01f64..0.2, 0.01f64..0.2, 1e-4f64..0.1), |(c1, c2, alpha, rate, rtt, sample, dt)| {
            let c = Controller::new(no_probe(c1, c2, 1.0, alpha, 1e-9, 1e12), rate, rtt, 0.0).unwrap();
            prop_assert!((c.optimize_rate(rtt, dt) - rate).abs() <= 1e-9 * rate);
            let k = alpha * c2 + c1;
            let lambda = k * (sample - dt) - c1 * c.target_latency() - alpha * c2 * c.state().avg_l;
            let pull = -c.state().rb_hat * lambda / (dt * k);
            let next = c.optimize_rate(sample, dt);
            let tol = 1e-9 * (rate.abs() + pull.abs());
            prop_assert!(next >= rate.min(pull).max(1e-9) - tol && next <= rate.max(pull) + tol);
            Ok(())
        })
        .map_err(|e| e.to_string())
    });

    prop(&mut runner, "bounds and conservation", &mut failures, |r| {
        r.run(&(1.0f64..10.0, 1.0f64..40.0, 1u32..20, any::<u64>()), |(floor, span, buffer, seed)| {
            let cap = floor + span;
            let link = LinkSpec {
                bottleneck_rate: 20.0,
                buffer_capacity: buffer,
                propagation_rtt: 0.025,
                ack_path: AckPath::Infinite,
                segments_per_packet: 1,
            };
            let flows: Vec<FlowSpec> = (0..2)
                .map(|i| FlowSpec {
                    flow_id: i,
                    base_rtt: 0.025,
                    rate_cap: Some(cap),
                    rate_floor: floor,
                    initial_rate: Some(cap),
                    start_time: 0.0,
                    controller: ControllerConfig::default(),
                })
                .collect();
            let noise = NoiseSpec { seed, ..NoiseSpec::default() };
            let out = run_simulation(&link, &flows, 5.0, &noise).unwrap();
            prop_assert!(out.trace.iter().all(|t| t.pacing_rate >= floor && t.pacing_rate <= cap));
            let t = out.summary.total();
            prop_assert_eq!(t.sent, t.delivered + t.lost + out.summary.queued_at_end);
            let again = run_simulation(&link, &flows, 5.0, &noise).unwrap();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            write_csv(&out.trace, &mut a).unwrap();
            write_csv(&again.trace, &mut b).unwrap();
            prop_assert!(a == b);
            Ok(())
        })
        .map_err(|e| e.to_string())
    });

    check(failures.is_empty(), if failures.is_empty() { "all properties hold".into() } else { failures.join("; ") })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 6] = [
        ("table 1 capped", table1_capped),
        ("table 1 uncapped fairness", table1_uncapped),
        ("table 2 capped", table2_capped),
        ("single-flow smoothness", single_flow),
        ("buffer sweep", buffer_sweep),
        ("property suites", properties),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {} ({name}): PASS [{secs:.1}s] {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1}s] {d}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
