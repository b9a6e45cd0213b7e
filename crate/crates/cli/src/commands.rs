use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use mpc_pacing::scenarios::{self, fraction_label, sweep_buffer, SWEEP_FLOW_COUNTS, SWEEP_FRACTIONS};
use mpc_pacing::sim::{read_csv, write_csv, TraceError};
use mpc_pacing::stats::{box_stats, flow_summaries, summary_csv, summary_table, StatsError, SweepCellStats, Window};
use mpc_pacing::{run_scenario, run_sweep_cell, RunError, Scenario};
use rayon::prelude::*;
use thiserror::Error;

use crate::manifest::RunManifest;
use crate::Common;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Runtime(_) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Stats(s) => s.into(),
            RunError::Sim(s) => CliError::Usage(s.to_string()),
        }
    }
}

/// Built-in name or a `.toml`/`.json` scenario file.
fn load_scenario(spec: &str) -> Result<Scenario, CliError> {
    if let Some(sc) = scenarios::builtin(spec) {
        return Ok(sc);
    }
    let path = Path::new(spec);
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(CliError::Usage(format!(
                "{spec}: no such scenario file, and not a built-in ({})",
                scenarios::BUILTIN_NAMES.join(", ")
            )))
        }
        Err(e) => return Err(io_err(path)(e)),
    };
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Usage(format!("{spec}: {e}")))
}

fn apply(mut sc: Scenario, c: &Common) -> Result<Scenario, CliError> {
    if let Some(d) = c.duration {
        if !(d > 0.0 && d.is_finite()) {
            return Err(CliError::Usage(format!("--duration must be positive, got {d}")));
        }
        sc.warmup *= d / sc.duration;
        sc.duration = d;
    }
    if let Some(w) = c.warmup {
        sc.warmup = w;
    }
    if let Some(seed) = c.seed {
        sc = sc.with_seed(seed);
    }
    sc.validate().map_err(|e| CliError::Usage(format!("{}: {e}", sc.name)))?;
    Ok(sc)
}

fn file_stem(name: &str) -> String {
    name.replace(['/', '\\'], "_")
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_manifest(path: &Path, m: &RunManifest) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(m).expect("manifest serialises");
    write(path, &(json + "\n"))
}

pub fn run(spec: &str, common: &Common) -> Result<(), CliError> {
    if spec == "sweep" {
        return sweep(None, None, common);
    }
    let started = SystemTime::now();
    let sc = apply(load_scenario(spec)?, common)?;
    let out = run_scenario(&sc).map_err(|e| CliError::Runtime(e.to_string()))?;
    let rows = flow_summaries(&out.trace, Window::new(sc.warmup, sc.duration))?;

    create_dir(&common.out)?;
    let stem = file_stem(&sc.name);
    let trace_path = common.out.join(format!("{stem}.trace.csv"));
    let summary_path = common.out.join(format!("{stem}.summary.csv"));
    let manifest_path = common.out.join(format!("{stem}.manifest.json"));

    let f = fs::File::create(&trace_path).map_err(io_err(&trace_path))?;
    write_csv(&out.trace, BufWriter::new(f)).map_err(|e| match e {
        TraceError::Io(source) => CliError::Io {
            path: trace_path.clone(),
            source,
        },
        other => CliError::Runtime(other.to_string()),
    })?;
    write(&summary_path, &summary_csv(&rows))?;
    let manifest = RunManifest::new(
        &sc.name,
        &sc,
        sc.noise.seed,
        started,
        vec![trace_path.clone(), summary_path.clone()],
    );
    write_manifest(&manifest_path, &manifest)?;

    println!("{} (seed {}, window {}..{} s)", sc.name, sc.noise.seed, sc.warmup, sc.duration);
    print!("{}", summary_table(&rows));
    println!("loss fraction {:.3e}", out.summary.loss_fraction());
    println!("wrote {}", trace_path.display());
    Ok(())
}

const SWEEP_HEADER: &str = "fraction,flows,buffer_packets,median_rate,rate_q1,rate_q3,rate_outlier_fraction,median_rtt_ms,rtt_q1_ms,rtt_q3_ms,rtt_outlier_fraction,loss_fraction,time_to_rate_s";

fn sweep_row(fraction: f64, flows: usize, s: &SweepCellStats) -> String {
    format!(
        "{},{},{},{:.1},{:.1},{:.1},{:.6},{:.3},{:.3},{:.3},{:.6},{:.3e},{:.3}",
        fraction_label(fraction),
        flows,
        sweep_buffer(fraction),
        s.rate.median,
        s.rate.q1,
        s.rate.q3,
        s.rate.outlier_fraction,
        s.rtt.median * 1e3,
        s.rtt.q1 * 1e3,
        s.rtt.q3 * 1e3,
        s.rtt.outlier_fraction,
        s.loss_fraction,
        s.time_to_rate
    )
}

type Block = (&'static str, fn(&SweepCellStats) -> String);

/// Three blocks (median rate, median RTT, loss fraction) with one row per
/// fraction and one column per flow count.
fn grid_csv(fractions: &[f64], flows: &[usize], cells: &[SweepCellStats]) -> String {
    let mut out = String::from("block,fraction");
    for n in flows {
        let _ = write!(out, ",flows_{n}");
    }
    out.push('\n');
    let blocks: [Block; 3] = [
        ("Median Rate", |s| format!("{:.1}", s.rate.median)),
        ("Median RTT", |s| format!("{:.3}", s.rtt.median * 1e3)),
        ("Losses", |s| format!("{:.3e}", s.loss_fraction)),
    ];
    for (label, value) in blocks {
        for (i, &f) in fractions.iter().enumerate() {
            let _ = write!(out, "{label},{}", fraction_label(f));
            for s in &cells[i * flows.len()..(i + 1) * flows.len()] {
                let _ = write!(out, ",{}", value(s));
            }
            out.push('\n');
        }
    }
    out
}

pub fn sweep(fractions: Option<Vec<f64>>, flows: Option<Vec<usize>>, common: &Common) -> Result<(), CliError> {
    let started = SystemTime::now();
    let fractions = fractions.unwrap_or_else(|| SWEEP_FRACTIONS.to_vec());
    let flows = flows.unwrap_or_else(|| SWEEP_FLOW_COUNTS.to_vec());
    if fractions.is_empty() || flows.is_empty() {
        return Err(CliError::Usage("--fractions and --flows need at least one value".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
        return Err(CliError::Usage(format!("fraction {f} must be positive")));
    }
    if flows.contains(&0) {
        return Err(CliError::Usage("flow counts must be at least 1".into()));
    }
    let cells = scenarios::buffer_sweep(&fractions, &flows)
        .into_iter()
        .map(|sc| apply(sc, common))
        .collect::<Result<Vec<_>, _>>()?;
    create_dir(&common.out)?;

    // Cells are independent; collect keeps grid order.
    let stats = cells
        .par_iter()
        .map(run_sweep_cell)
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = String::from(SWEEP_HEADER);
    rows.push('\n');
    let grid = fractions.iter().flat_map(|&f| flows.iter().map(move |&n| (f, n)));
    for ((f, n), s) in grid.zip(&stats) {
        rows.push_str(&sweep_row(f, n, s));
        rows.push('\n');
    }
    let rows_path = common.out.join("sweep.csv");
    let grid_path = common.out.join("sweep_grid.csv");
    write(&rows_path, &rows)?;
    write(&grid_path, &grid_csv(&fractions, &flows, &stats))?;
    let manifest = RunManifest::new("sweep", &cells, common.seed.unwrap_or(0), started, vec![rows_path.clone(), grid_path]);
    write_manifest(&common.out.join("sweep.manifest.json"), &manifest)?;

    println!(
        "{:>8} {:>5} {:>10} {:>10} {:>10} {:>8}",
        "fraction", "flows", "rate", "rtt_ms", "loss", "ttr_s"
    );
    let grid = fractions.iter().flat_map(|&f| flows.iter().map(move |&n| (f, n)));
    for ((f, n), s) in grid.zip(&stats) {
        println!(
            "{:>8} {:>5} {:>10.1} {:>10.3} {:>10.2e} {:>8.3}",
            fraction_label(f),
            n,
            s.rate.median,
            s.rtt.median * 1e3,
            s.loss_fraction,
            s.time_to_rate
        );
    }
    println!("wrote {}", rows_path.display());
    Ok(())
}

pub fn report(path: &Path, start: f64, end: Option<f64>) -> Result<(), CliError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let trace = read_csv(io::BufReader::new(f)).map_err(|e| match e {
        TraceError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Usage(format!("{}: {other}", path.display())),
    })?;
    let window = Window::new(start, end.unwrap_or(f64::INFINITY));
    let rows = flow_summaries(&trace, window)?;
    print!("{}", summary_table(&rows));

    println!();
    println!("{:<6} {:>10} {:>10} {:>10} {:>10}", "flow", "rate_q1", "rate_med", "rate_q3", "outliers");
    for r in &rows {
        let rates: Vec<f64> = trace
            .iter()
            .filter(|t| t.flow_id == r.flow_id && !t.loss && window.contains(t.time))
            .map(|t| t.pacing_rate)
            .collect();
        match box_stats(&rates) {
            Ok(b) => println!(
                "{:<6} {:>10.3} {:>10.3} {:>10.3} {:>10}",
                r.flow_id, b.q1, b.median, b.q3, b.outlier_count
            ),
            Err(e) => println!("{:<6} {e}", r.flow_id),
        }
    }
    Ok(())
}
