//! Trace statistics: means and population deviations, box-plot quartiles
//! with 1.5 IQR fences, strided sub-sampling and time-to-rate.
//!
//! Quartiles use linear interpolation between closest ranks: for sorted
//! samples `x[0..n]` the `p`-quantile is `x[k] + f (x[k+1] - x[k])` with
//! `h = (n - 1) p`, `k = floor(h)`, `f = h - k`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::sim::{TraceRecord, TraceSink};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no samples in window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
}

/// Closed time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub const ALL: Window = Window {
        start: f64::NEG_INFINITY,
        end: f64::INFINITY,
    };

    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    pub fn cv(&self) -> f64 {
        self.std / self.mean
    }
}

pub fn summarize(series: &[(f64, f64)], window: Window) -> Result<SummaryStats, StatsError> {
    summarize_values(
        series
            .iter()
            .filter(|(t, _)| window.contains(*t))
            .map(|&(_, v)| v),
    )
    .ok_or(StatsError::EmptyWindow(window.start, window.end))
}

/// Welford accumulation over any value stream; `None` when empty.
pub fn summarize_values<I: IntoIterator<Item = f64>>(values: I) -> Option<SummaryStats> {
    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        count += 1;
        let delta = v - mean;
        mean += delta / count as f64;
        m2 += delta * (v - mean);
        min = min.min(v);
        max = max.max(v);
    }
    if count == 0 {
        return None;
    }
    // Rounding can push the running mean a hair outside [min, max].
    let mean = mean.clamp(min, max);
    Some(SummaryStats {
        mean,
        std: (m2 / count as f64).max(0.0).sqrt(),
        count,
        min,
        max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    pub outlier_count: usize,
    pub outlier_fraction: f64,
}

/// Quantile of an already sorted slice by linear interpolation.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let k = h.floor() as usize;
    let f = h - k as f64;
    match sorted.get(k + 1) {
        Some(&next) if f > 0.0 => sorted[k] + f * (next - sorted[k]),
        _ => sorted[k],
    }
}

pub fn box_stats(series: &[f64]) -> Result<BoxStats, StatsError> {
    if series.len() < 4 {
        return Err(StatsError::TooFewSamples {
            need: 4,
            got: series.len(),
        });
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lower_fence = q1 - 1.5 * iqr;
    let upper_fence = q3 + 1.5 * iqr;
    let below = sorted.partition_point(|&v| v < lower_fence);
    let above = sorted.len() - sorted.partition_point(|&v| v <= upper_fence);
    let outlier_count = below + above;
    Ok(BoxStats {
        median,
        q1,
        q3,
        iqr,
        lower_fence,
        upper_fence,
        outlier_count,
        outlier_fraction: outlier_count as f64 / sorted.len() as f64,
    })
}

/// Indices kept by [`subsample`]: `round_half_even(i (len - 1) / (n - 1))`.
pub fn subsample_indices(len: usize, n: usize) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    if n <= 1 {
        return if len == 0 { vec![] } else { vec![0] };
    }
    let span = (len - 1) as u128;
    let den = (n - 1) as u128;
    (0..n as u128)
        .map(|i| {
            let num = i * span;
            let (q, r) = (num / den, num % den);
            let up = match (2 * r).cmp(&den) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => q % 2 == 1,
                std::cmp::Ordering::Less => false,
            };
            (q + u128::from(up)) as usize
        })
        .collect()
}

/// Evenly strided selection of `min(n, len)` items keeping both endpoints.
pub fn subsample<T: Clone>(series: &[T], n: usize) -> Vec<T> {
    subsample_indices(series.len(), n)
        .into_iter()
        .map(|i| series[i].clone())
        .collect()
}

const SUSTAIN: f64 = 1.0;

/// Sum of every flow's latest pacing rate, one point per record, time-ordered.
pub fn combined_rate_series(trace: &[TraceRecord]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..trace.len()).collect();
    order.sort_by(|&a, &b| trace[a].time.total_cmp(&trace[b].time));
    let mut latest: Vec<(u32, f64)> = Vec::new();
    let mut out = Vec::with_capacity(trace.len());
    for i in order {
        let r = &trace[i];
        match latest.iter_mut().find(|(id, _)| *id == r.flow_id) {
            Some(slot) => slot.1 = r.pacing_rate,
            None => latest.push((r.flow_id, r.pacing_rate)),
        }
        out.push((r.time, latest.iter().map(|(_, v)| v).sum()));
    }
    out
}

/// First time the combined rate reaches `fraction * target_rate` and stays
/// there for at least one second. Returns the last timestamp of the series
/// when that never happens.
pub fn time_to_rate_series(series: &[(f64, f64)], target_rate: f64, fraction: f64) -> f64 {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must lie in (0, 1]");
    let Some(&(end, _)) = series.last() else {
        return 0.0;
    };
    let threshold = fraction * target_rate;
    let mut run_start: Option<f64> = None;
    for &(t, v) in series {
        if v >= threshold {
            let start = *run_start.get_or_insert(t);
            if t - start >= SUSTAIN {
                return start;
            }
        } else {
            run_start = None;
        }
    }
    end
}

pub fn time_to_rate(trace: &[TraceRecord], target_rate: f64, fraction: f64) -> f64 {
    time_to_rate_series(&combined_rate_series(trace), target_rate, fraction)
}

/// Streaming reduction of one buffer-sweep cell. Keeps every `stride`-th ACK
/// record: the combined rate over the whole run (for time-to-rate) and the
/// RTT inside `window`.
#[derive(Debug, Clone)]
pub struct SweepCollector {
    window: Window,
    stride: u64,
    seen: u64,
    latest: Vec<(u32, f64)>,
    combined: Vec<(f64, f64)>,
    rtts: Vec<f64>,
}

impl SweepCollector {
    pub fn new(window: Window, stride: u64) -> Self {
        Self {
            window,
            stride: stride.max(1),
            seen: 0,
            latest: Vec::new(),
            combined: Vec::new(),
            rtts: Vec::new(),
        }
    }

    /// Combined-rate samples, time-ordered.
    pub fn combined(&self) -> &[(f64, f64)] {
        &self.combined
    }

    pub fn finish(self, bottleneck_rate: f64, loss_fraction: f64) -> Result<SweepCellStats, StatsError> {
        let w = self.window;
        let rates: Vec<f64> = self
            .combined
            .iter()
            .filter(|(t, _)| w.contains(*t))
            .map(|&(_, r)| r)
            .collect();
        Ok(SweepCellStats {
            rate: box_stats(&rates)?,
            rtt: box_stats(&self.rtts)?,
            loss_fraction,
            time_to_rate: time_to_rate_series(&self.combined, bottleneck_rate, TIME_TO_RATE_FRACTION),
        })
    }
}

impl TraceSink for SweepCollector {
    fn record(&mut self, rec: &TraceRecord) {
        match self.latest.iter_mut().find(|(id, _)| *id == rec.flow_id) {
            Some(slot) => slot.1 = rec.pacing_rate,
            None => self.latest.push((rec.flow_id, rec.pacing_rate)),
        }
        let Some(rtt) = rec.rtt else { return };
        self.seen += 1;
        if !(self.seen - 1).is_multiple_of(self.stride) {
            return;
        }
        self.combined
            .push((rec.time, self.latest.iter().map(|(_, v)| v).sum()));
        if self.window.contains(rec.time) {
            self.rtts.push(rtt);
        }
    }
}

/// Share of the bottleneck rate that counts as having reached it.
pub const TIME_TO_RATE_FRACTION: f64 = 0.9;

/// Box statistics of one sweep cell (rates in packets/s, RTT in seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCellStats {
    pub rate: BoxStats,
    pub rtt: BoxStats,
    pub loss_fraction: f64,
    pub time_to_rate: f64,
}

/// One flow's row in a Table-style summary.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSummary {
    pub flow_id: u32,
    pub rate: SummaryStats,
    pub rtt: SummaryStats,
    pub losses: u64,
}

/// Per-flow rate/RTT statistics over `window`, from ACK and loss rows.
pub fn flow_summaries(trace: &[TraceRecord], window: Window) -> Result<Vec<FlowSummary>, StatsError> {
    let mut ids: Vec<u32> = trace.iter().map(|r| r.flow_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let in_window = || {
                trace
                    .iter()
                    .filter(move |r| r.flow_id == id && window.contains(r.time))
            };
            let empty = StatsError::EmptyWindow(window.start, window.end);
            let rate = summarize_values(in_window().filter(|r| !r.loss).map(|r| r.pacing_rate))
                .ok_or_else(|| empty.clone())?;
            let rtt = summarize_values(in_window().filter_map(|r| r.rtt)).ok_or(empty)?;
            let losses = in_window().filter(|r| r.loss).count() as u64;
            Ok(FlowSummary {
                flow_id: id,
                rate,
                rtt,
                losses,
            })
        })
        .collect()
}

pub const SUMMARY_ROWS: [&str; 5] = ["Mean Rate", "Rate Std.", "Mean RTT", "RTT Std.", "Losses"];

fn row_values(rows: &[FlowSummary], label: &str) -> Vec<String> {
    rows.iter()
        .map(|f| match label {
            "Mean Rate" => format!("{:.1}", f.rate.mean),
            "Rate Std." => format!("{:.1}", f.rate.std),
            "Mean RTT" => format!("{:.1}", f.rtt.mean * 1e3),
            "RTT Std." => format!("{:.1}", f.rtt.std * 1e3),
            _ => f.losses.to_string(),
        })
        .collect()
}

/// Rows labelled like the published tables, one column per flow. Rates in
/// packets/s, RTTs in ms.
pub fn summary_csv(rows: &[FlowSummary]) -> String {
    let mut out = String::from("metric");
    for f in rows {
        let _ = write!(out, ",flow_{}", f.flow_id);
    }
    out.push('\n');
    for label in SUMMARY_ROWS {
        out.push_str(label);
        for v in row_values(rows, label) {
            out.push(',');
            out.push_str(&v);
        }
        out.push('\n');
    }
    out
}

pub fn summary_table(rows: &[FlowSummary]) -> String {
    let label_w = SUMMARY_ROWS.iter().map(|s| s.len()).max().unwrap_or(0) + 2;
    let mut out = format!("{:<label_w$}", "Flow #");
    for f in rows {
        let _ = write!(out, "{:>9}", f.flow_id);
    }
    out.push('\n');
    for label in SUMMARY_ROWS {
        let _ = write!(out, "{label:<label_w$}");
        for v in row_values(rows, label) {
            let _ = write!(out, "{v:>9}");
        }
        out.push('\n');
    }
    out
}
