//! Model-predictive pacing-rate controller.
//!
//! The bottleneck is modelled as a single queue whose latency drifts with the
//! excess of the pacing rate over the bottleneck rate:
//!
//! ```text
//! l(n+1) = l(n) + dt(n) * (r(n) - r_B) / r_B,    l_P <= l(n) <= l_B
//! ```
//!
//! Every acknowledgement refreshes the model parameters (back-off extrema for
//! `l_P`/`l_B`, an integral estimate of `r_B`) and then picks the next rate by
//! minimising a weighted sum of the predicted target error, the predicted
//! latency variance and the rate change. The closed form of that one-step
//! optimisation is [`Controller::optimize_rate`].
//!
//! The controller never reads a clock: every timestamp is supplied by the
//! caller in seconds, so identical inputs give bit-identical decisions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error("initial rtt must be positive, got {0}")]
    NonPositiveRtt(f64),
    #[error("initial rate {rate} outside [{min}, {max}]")]
    InitialRateOutOfRange { rate: f64, min: f64, max: f64 },
    #[error("bottleneck rate must be positive, got {0}")]
    NonPositiveBottleneckRate(f64),
    #[error("observation at {now} does not advance past last update at {last}")]
    NonMonotoneTime { now: f64, last: f64 },
    #[error("rtt sample must be positive and finite, got {0}")]
    InvalidRtt(f64),
}

/// How the target latency `l_t` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Halfway between the current `l_P` and `l_B` estimates.
    Midpoint,
    /// Fixed target in seconds, clamped into `[l_P, l_B]` when used.
    Explicit(f64),
}

/// Rate probing used to refresh the latency extrema.
///
/// A down-probe and an up-probe alternate, one every `interval` seconds. Each
/// holds the rate at `gain * rate` for `duration` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub enabled: bool,
    /// Seconds between probes; `None` means `10 * tau_d`.
    pub interval: Option<f64>,
    pub gain_up: f64,
    pub gain_down: f64,
    /// Probe length in seconds; `None` means `2 * l_B` at probe start.
    pub duration: Option<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            interval: None,
            gain_up: 1.25,
            gain_down: 0.5,
            duration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Weight on the predicted deviation from the target latency.
    pub c1: f64,
    /// Weight on the predicted latency variance.
    pub c2: f64,
    /// Rate-variance normalisation; `None` means `1 - c1 - c2`.
    pub c3: Option<f64>,
    /// Running-average weight for the latency average.
    pub alpha: f64,
    /// Back-off decay time of the extrema estimates, seconds.
    pub tau_d: f64,
    pub target_mode: TargetMode,
    pub min_rate: f64,
    /// `None` is unbounded.
    pub max_rate: Option<f64>,
    pub probe: ProbeConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            c1: 0.2,
            c2: 0.3,
            c3: None,
            alpha: 0.125,
            tau_d: 1.0,
            target_mode: TargetMode::Midpoint,
            min_rate: 0.0,
            max_rate: None,
            probe: ProbeConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn c3(&self) -> f64 {
        self.c3.unwrap_or(1.0 - self.c1 - self.c2)
    }

    pub fn max_rate(&self) -> f64 {
        self.max_rate.unwrap_or(f64::INFINITY)
    }

    pub fn probe_interval(&self) -> f64 {
        self.probe.interval.unwrap_or(10.0 * self.tau_d)
    }

    pub fn clamp_rate(&self, rate: f64) -> f64 {
        rate.max(self.min_rate).min(self.max_rate())
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |msg: String| Err(ControllerError::InvalidConfig(msg));
        let rest = 1.0 - self.c1 - self.c2;
        if !(0.0..=1.0).contains(&self.c1) {
            return bad(format!("c1 = {} must lie in [0, 1]", self.c1));
        }
        if !(self.c2 > 0.0 && self.c2 < 1.0) {
            return bad(format!("c2 = {} must lie in (0, 1)", self.c2));
        }
        if !(rest > 0.0 && rest < 1.0) {
            return bad(format!("1 - c1 - c2 = {rest} must lie in (0, 1)"));
        }
        let c3 = self.c3();
        if !(c3 > 0.0 && c3.is_finite()) {
            return bad(format!("c3 = {c3} must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if !(self.tau_d > 0.0) {
            return bad(format!("tau_d = {} must be positive", self.tau_d));
        }
        if let TargetMode::Explicit(t) = self.target_mode {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("explicit target {t} must be positive"));
            }
        }
        if !(self.min_rate >= 0.0 && self.min_rate.is_finite()) {
            return bad(format!("min_rate = {} must be finite and >= 0", self.min_rate));
        }
        if let Some(max) = self.max_rate {
            if !(max > self.min_rate) {
                return bad(format!("max_rate = {max} must exceed min_rate = {}", self.min_rate));
            }
        }
        let p = &self.probe;
        if !(p.gain_up > 1.0) {
            return bad(format!("probe gain_up = {} must exceed 1", p.gain_up));
        }
        if !(p.gain_down > 0.0 && p.gain_down < 1.0) {
            return bad(format!("probe gain_down = {} must lie in (0, 1)", p.gain_down));
        }
        if !(self.probe_interval() > 0.0) {
            return bad("probe interval must be positive".into());
        }
        if let Some(d) = p.duration {
            if !(d > 0.0) {
                return bad(format!("probe duration = {d} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbePhase {
    None,
    ProbingLow,
    ProbingHigh,
}

/// Active probe bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub phase: ProbePhase,
    pub started_at: f64,
    pub ends_at: f64,
    /// Rate to fall back to when a scheduled probe finishes. Loss back-offs
    /// carry `None` and hand the reduced rate to the optimiser.
    pub restore_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub rate: f64,
    pub l_hat_p: f64,
    pub l_hat_b: f64,
    pub avg_l: f64,
    pub last_latency: f64,
    pub last_update_time: f64,
    pub sent_integral: f64,
    pub origin_latency: f64,
    pub origin_time: f64,
    pub rb_hat: f64,
    pub probe: Option<Probe>,
    pub next_probe_at: f64,
    /// Kind of the next scheduled probe.
    pub next_probe_high: bool,
    pub last_loss_time: Option<f64>,
}

impl ControllerState {
    pub fn probe_phase(&self) -> ProbePhase {
        self.probe.map_or(ProbePhase::None, |p| p.phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttObservation {
    pub rtt: f64,
    pub now: f64,
    pub loss: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateDecision {
    pub pacing_rate: f64,
    pub probe_phase: ProbePhase,
}

#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    state: ControllerState,
}

impl Controller {
    pub fn new(
        config: ControllerConfig,
        initial_rate: f64,
        initial_rtt: f64,
        now: f64,
    ) -> Result<Self, ControllerError> {
        config.validate()?;
        if !(initial_rtt > 0.0 && initial_rtt.is_finite()) {
            return Err(ControllerError::NonPositiveRtt(initial_rtt));
        }
        let max = config.max_rate();
        if !(initial_rate >= config.min_rate && initial_rate <= max && initial_rate > 0.0) {
            return Err(ControllerError::InitialRateOutOfRange {
                rate: initial_rate,
                min: config.min_rate,
                max,
            });
        }
        let next_probe_at = now + config.probe_interval();
        Ok(Self {
            state: ControllerState {
                rate: initial_rate,
                l_hat_p: initial_rtt,
                l_hat_b: initial_rtt,
                avg_l: initial_rtt,
                last_latency: initial_rtt,
                last_update_time: now,
                sent_integral: 0.0,
                origin_latency: initial_rtt,
                origin_time: now,
                rb_hat: initial_rate,
                probe: None,
                next_probe_at,
                next_probe_high: false,
                last_loss_time: None,
            },
            config,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn rate(&self) -> f64 {
        self.state.rate
    }

    /// One step of the queue model, clamped into the current `[l_P, l_B]`.
    pub fn predict_latency(
        &self,
        l_n: f64,
        rate: f64,
        rb: f64,
        dt: f64,
    ) -> Result<f64, ControllerError> {
        if !(rb > 0.0) {
            return Err(ControllerError::NonPositiveBottleneckRate(rb));
        }
        let next = l_n + dt * (rate - rb) / rb;
        Ok(next.max(self.state.l_hat_p).min(self.state.l_hat_b))
    }

    /// Extrema with exponential back-off toward the running average.
    ///
    /// Returns the `(l_P, l_B)` pair that the next update would install.
    pub fn backoff_extrema(&self, l_sample: f64, dt: f64) -> (f64, f64) {
        let s = &self.state;
        let backoff = |x: f64| x + (s.avg_l - x) / self.config.tau_d * dt;
        let l_p = l_sample.min(backoff(s.l_hat_p));
        let l_b = l_sample.max(backoff(s.l_hat_b));
        // Both back-offs move toward the same average, so l_p <= l_b holds
        // unless dt overshoots tau_d; the sample bounds them in that case.
        if l_p <= l_b {
            (l_p, l_b)
        } else {
            (l_sample, l_sample)
        }
    }

    /// Integral bottleneck-rate estimate over the current anchor window.
    ///
    /// `sent_integral` must already include the interval ending at `now`.
    /// A non-positive denominator or an empty window keeps the previous
    /// estimate.
    pub fn estimate_bottleneck_rate(&self, l_sample: f64, now: f64) -> f64 {
        let s = &self.state;
        let elapsed = now - s.origin_time;
        let denom = l_sample - s.origin_latency + elapsed;
        if !(elapsed > 0.0) || !(denom > 0.0) || !(s.sent_integral > 0.0) {
            return s.rb_hat;
        }
        let estimate = s.sent_integral / denom;
        if estimate.is_finite() && estimate > 0.0 {
            estimate
        } else {
            s.rb_hat
        }
    }

    /// Target latency for the current estimates, always within `[l_P, l_B]`.
    pub fn target_latency(&self) -> f64 {
        let s = &self.state;
        match self.config.target_mode {
            TargetMode::Midpoint => 0.5 * (s.l_hat_p + s.l_hat_b),
            TargetMode::Explicit(t) => t.max(s.l_hat_p).min(s.l_hat_b),
        }
    }

    /// Closed-form one-step optimum of the rate, clamped to the rate bounds.
    pub fn optimize_rate(&self, l_sample: f64, dt: f64) -> f64 {
        let s = &self.state;
        let cfg = &self.config;
        let k = cfg.alpha * cfg.c2 + cfg.c1;
        let lt = self.target_latency();
        let lambda = k * (l_sample - dt) - cfg.c1 * lt - cfg.alpha * cfg.c2 * s.avg_l;
        let inertia = cfg.c3() * s.l_hat_p * s.l_hat_p;
        let next = (inertia * s.rate - dt * s.rb_hat * lambda) / (inertia + dt * dt * k);
        if next.is_finite() {
            cfg.clamp_rate(next)
        } else {
            cfg.clamp_rate(s.rate)
        }
    }

    fn reanchor(&mut self, latency: f64, now: f64) {
        self.state.origin_latency = latency;
        self.state.origin_time = now;
        self.state.sent_integral = 0.0;
    }

    fn probe_duration(&self) -> f64 {
        self.config
            .probe
            .duration
            .unwrap_or(2.0 * self.state.l_hat_b)
    }

    fn decision(&self) -> RateDecision {
        RateDecision {
            pacing_rate: self.state.rate,
            probe_phase: self.state.probe_phase(),
        }
    }

    /// Per-acknowledgement update.
    ///
    /// A rejected observation leaves the state untouched.
    pub fn on_ack(&mut self, obs: RttObservation) -> Result<RateDecision, ControllerError> {
        let last = self.state.last_update_time;
        if !(obs.now > last) {
            return Err(ControllerError::NonMonotoneTime { now: obs.now, last });
        }
        if !(obs.rtt > 0.0 && obs.rtt.is_finite()) {
            return Err(ControllerError::InvalidRtt(obs.rtt));
        }
        let dt = obs.now - last;
        let l = obs.rtt;

        self.state.sent_integral += self.state.rate * dt;
        let (l_p, l_b) = self.backoff_extrema(l, dt);
        self.state.l_hat_p = l_p;
        self.state.l_hat_b = l_b;
        self.state.rb_hat = self.estimate_bottleneck_rate(l, obs.now);
        let alpha = self.config.alpha;
        self.state.avg_l = (1.0 - alpha) * self.state.avg_l + alpha * l;

        let mut optimise = true;
        if let Some(probe) = self.state.probe {
            if obs.now >= probe.ends_at {
                self.state.probe = None;
                if let Some(restore) = probe.restore_rate {
                    self.state.rate = restore;
                }
                self.reanchor(l, obs.now);
                optimise = false;
            } else {
                optimise = false;
            }
        } else if self.config.probe.enabled && obs.now >= self.state.next_probe_at {
            let high = self.state.next_probe_high;
            let gain = if high {
                self.config.probe.gain_up
            } else {
                self.config.probe.gain_down
            };
            let base = self.state.rate;
            self.state.probe = Some(Probe {
                phase: if high {
                    ProbePhase::ProbingHigh
                } else {
                    ProbePhase::ProbingLow
                },
                started_at: obs.now,
                ends_at: obs.now + self.probe_duration(),
                restore_rate: Some(base),
            });
            self.state.rate = base * gain;
            self.state.next_probe_high = !high;
            self.state.next_probe_at = obs.now + self.config.probe_interval();
            optimise = false;
        }

        if optimise {
            self.state.rate = self.optimize_rate(l, dt);
        }
        self.state.rate = self.config.clamp_rate(self.state.rate);
        self.state.last_latency = l;
        self.state.last_update_time = obs.now;

        if obs.loss {
            return Ok(self.on_loss(obs.now));
        }
        Ok(self.decision())
    }

    /// Loss reaction: cancel any probe and hold a reduced rate for one probe
    /// duration, after which the optimiser continues from the reduced rate.
    ///
    /// Losses reported within one `l_B` of the previous reaction belong to the
    /// same congestion event and are absorbed.
    pub fn on_loss(&mut self, now: f64) -> RateDecision {
        if let Some(t) = self.state.last_loss_time {
            if now - t < self.state.l_hat_b {
                return self.decision();
            }
        }
        let lowered = self.state.rate * self.config.probe.gain_down;
        self.state.rate = self.config.clamp_rate(lowered);
        self.state.probe = Some(Probe {
            phase: ProbePhase::ProbingLow,
            started_at: now,
            ends_at: now + self.probe_duration(),
            restore_rate: None,
        });
        self.state.last_loss_time = Some(now);
        self.reanchor(self.state.last_latency, now.max(self.state.last_update_time));
        self.decision()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: f64 = 1e-3;

    fn config(c1: f64, c2: f64) -> ControllerConfig {
        ControllerConfig {
            c1,
            c2,
            ..ControllerConfig::default()
        }
    }

    fn controller_with(cfg: ControllerConfig, rate: f64, rtt: f64) -> Controller {
        Controller::new(cfg, rate, rtt, 0.0).unwrap()
    }

    #[test]
    fn new_controller_seeds_estimates() {
        let c = controller_with(config(0.2, 0.3), 10.0, 25.0 * MS);
        let s = c.state();
        assert_eq!(s.l_hat_p, 25.0 * MS);
        assert_eq!(s.l_hat_b, 25.0 * MS);
        assert_eq!(s.avg_l, 25.0 * MS);
        assert_eq!(s.last_latency, 25.0 * MS);
        assert_eq!(s.rb_hat, 10.0);
        assert_eq!(s.sent_integral, 0.0);
        assert_eq!((s.origin_latency, s.origin_time), (25.0 * MS, 0.0));
    }

    #[test]
    fn weights_summing_to_one_are_rejected() {
        let err = Controller::new(config(0.5, 0.5), 10.0, 0.025, 0.0).unwrap_err();
        assert!(matches!(err, ControllerError::InvalidConfig(_)));
    }

    #[test]
    fn zero_c1_is_accepted() {
        assert!(Controller::new(config(0.0, 0.1), 10.0, 0.025, 0.0).is_ok());
    }

    #[test]
    fn non_positive_rtt_is_rejected() {
        let err = Controller::new(config(0.2, 0.3), 10.0, 0.0, 0.0).unwrap_err();
        assert_eq!(err, ControllerError::NonPositiveRtt(0.0));
    }

    #[test]
    fn bad_rate_bounds_rejected() {
        let cfg = ControllerConfig {
            min_rate: 5.0,
            max_rate: Some(5.0),
            ..ControllerConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ControllerConfig {
            max_rate: Some(5.0),
            ..ControllerConfig::default()
        };
        assert!(Controller::new(cfg, 6.0, 0.025, 0.0).is_err());
    }

    #[test]
    fn predict_latency_cases() {
        let mut c = controller_with(config(0.2, 0.3), 40.0, 25.0 * MS);
        assert_eq!(c.predict_latency(25.0 * MS, 40.0, 40.0, 10.0 * MS).unwrap(), 25.0 * MS);
        // Widen the band so the unclamped value is visible.
        c.state.l_hat_b = 50.0 * MS;
        let up = c.predict_latency(25.0 * MS, 80.0, 40.0, 10.0 * MS).unwrap();
        assert!((up - 35.0 * MS).abs() < 1e-15);
        let down = c.predict_latency(25.0 * MS, 20.0, 40.0, 10.0 * MS).unwrap();
        assert_eq!(down, 25.0 * MS);
        assert!(c.predict_latency(25.0 * MS, 20.0, 0.0, 0.01).is_err());
    }

    #[test]
    fn backoff_moves_minimum_toward_average() {
        let mut c = controller_with(config(0.2, 0.3), 40.0, 20.0 * MS);
        c.state.avg_l = 30.0 * MS;
        c.state.l_hat_b = 40.0 * MS;
        let (lp, _) = c.backoff_extrema(25.0 * MS, 0.1);
        assert!((lp - 21.0 * MS).abs() < 1e-12);
        let (lp, _) = c.backoff_extrema(15.0 * MS, 0.1);
        assert_eq!(lp, 15.0 * MS);
    }

    #[test]
    fn backoff_zero_dt_is_plain_min_max() {
        let mut c = controller_with(config(0.2, 0.3), 40.0, 20.0 * MS);
        c.state.l_hat_b = 30.0 * MS;
        assert_eq!(c.backoff_extrema(25.0 * MS, 0.0), (20.0 * MS, 30.0 * MS));
        assert_eq!(c.backoff_extrema(35.0 * MS, 0.0), (20.0 * MS, 35.0 * MS));
    }

    #[test]
    fn backoff_decays_to_e_inverse_after_tau() {
        let mut c = controller_with(config(0.2, 0.3), 40.0, 20.0 * MS);
        c.state.avg_l = 30.0 * MS;
        let start_gap = c.state.avg_l - c.state.l_hat_p;
        let dt = 1e-3;
        for _ in 0..1000 {
            // Samples stay at the average so only the back-off acts.
            let (lp, lb) = c.backoff_extrema(30.0 * MS, dt);
            c.state.l_hat_p = lp;
            c.state.l_hat_b = lb;
        }
        let ratio = (c.state.avg_l - c.state.l_hat_p) / start_gap;
        assert!((ratio - 0.37).abs() <= 0.05 * 0.37, "ratio {ratio}");
    }

    #[test]
    fn estimator_steady_state_returns_rate() {
        let mut c = controller_with(config(0.2, 0.3), 40.0, 25.0 * MS);
        c.state.sent_integral = 40.0 * 2.0;
        assert!((c.estimate_bottleneck_rate(25.0 * MS, 2.0) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn estimator_overdriven_link() {
        // Sending at twice the bottleneck for T grows latency by exactly T.
        let rb = 40.0;
        let t = 0.5;
        let mut c = controller_with(config(0.2, 0.3), 2.0 * rb, 25.0 * MS);
        c.state.sent_integral = 2.0 * rb * t;
        let est = c.estimate_bottleneck_rate(25.0 * MS + t, t);
        assert!((est - rb).abs() < 1e-12);
    }

    #[test]
    fn estimator_degenerate_denominator_keeps_previous() {
        let mut c = controller_with(config(0.2, 0.3), 40.0, 25.0 * MS);
        c.state.sent_integral = 1.0;
        c.state.rb_hat = 33.0;
        assert_eq!(c.estimate_bottleneck_rate(5.0 * MS, 0.01), 33.0);
        c.state.sent_integral = 0.0;
        assert_eq!(c.estimate_bottleneck_rate(25.0 * MS, 0.01), 33.0);
        assert_eq!(c.estimate_bottleneck_rate(25.0 * MS, 0.0), 33.0);
    }

    #[test]
    fn optimize_rate_fixed_point() {
        let cfg = ControllerConfig {
            c3: Some(0.5),
            ..config(0.2, 0.3)
        };
        let mut c = controller_with(cfg, 40.0, 25.0 * MS);
        c.state.rb_hat = 40.0;
        let next = c.optimize_rate(25.0 * MS, 25.0 * MS);
        assert!((next - 40.0).abs() < 1e-12);
    }

    #[test]
    fn optimize_rate_matches_scripted_evaluation() {
        // c1=0.2 c2=0.3 c3=0.5 alpha=1/8, l_P = l_t = avg = 25 ms,
        // l = 30 ms, dt = 25 ms, r = r_B = 40.
        // Exact rational evaluation (scripted separately):
        // k = 0.2375, Lambda = 0.2375*0.005 - 0.2*0.025 - 0.0375*0.025 = -0.00475
        // num = 0.5*6.25e-4*40 + 0.025*40*0.00475 = 0.01725
        // den = 3.125e-4 + 6.25e-4*0.2375 = 4.609375e-4
        let expected = 37.423_728_813_559_32;
        let cfg = ControllerConfig {
            c3: Some(0.5),
            target_mode: TargetMode::Explicit(25.0 * MS),
            ..config(0.2, 0.3)
        };
        let mut c = controller_with(cfg, 40.0, 25.0 * MS);
        c.state.l_hat_b = 40.0 * MS;
        let next = c.optimize_rate(30.0 * MS, 25.0 * MS);
        assert!(((next - expected) / expected).abs() < 1e-6, "{next} vs {expected}");
        assert!((0.01725 / 4.609_375e-4 - expected).abs() < 1e-9);
    }

    #[test]
    fn first_ack_at_fixed_point_keeps_rate() {
        let cfg = ControllerConfig {
            probe: ProbeConfig {
                enabled: false,
                ..ProbeConfig::default()
            },
            ..config(0.2, 0.3)
        };
        let mut c = controller_with(cfg, 40.0, 25.0 * MS);
        let d = c
            .on_ack(RttObservation {
                rtt: 25.0 * MS,
                now: 25.0 * MS,
                loss: false,
            })
            .unwrap();
        assert!((d.pacing_rate - 40.0).abs() < 1e-9);
    }

    #[test]
    fn non_monotone_ack_rejected_without_change() {
        let mut c = controller_with(config(0.2, 0.3), 40.0, 25.0 * MS);
        let before = c.state().clone();
        let err = c
            .on_ack(RttObservation {
                rtt: 0.03,
                now: 0.0,
                loss: false,
            })
            .unwrap_err();
        assert!(matches!(err, ControllerError::NonMonotoneTime { .. }));
        assert_eq!(c.state(), &before);
    }

    #[test]
    fn loss_during_high_probe_switches_to_low() {
        let cfg = ControllerConfig {
            probe: ProbeConfig {
                interval: Some(0.1),
                ..ProbeConfig::default()
            },
            ..config(0.2, 0.3)
        };
        let mut c = controller_with(cfg, 40.0, 25.0 * MS);
        c.state.next_probe_high = true;
        let d = c
            .on_ack(RttObservation {
                rtt: 25.0 * MS,
                now: 0.2,
                loss: false,
            })
            .unwrap();
        assert_eq!(d.probe_phase, ProbePhase::ProbingHigh);
        let high = d.pacing_rate;
        let d = c.on_loss(0.21);
        assert_eq!(d.probe_phase, ProbePhase::ProbingLow);
        assert!(d.pacing_rate < high);
    }

    #[test]
    fn loss_at_floor_stays_at_floor() {
        let cfg = ControllerConfig {
            min_rate: 5.0,
            ..config(0.2, 0.3)
        };
        let mut c = controller_with(cfg, 5.0, 25.0 * MS);
        assert_eq!(c.on_loss(0.0).pacing_rate, 5.0);
    }

    #[test]
    fn loss_halves_then_optimizer_resumes() {
        let cfg = ControllerConfig {
            probe: ProbeConfig {
                duration: Some(0.05),
                ..ProbeConfig::default()
            },
            ..config(0.2, 0.3)
        };
        let mut c = controller_with(cfg, 40.0, 25.0 * MS);
        assert_eq!(c.on_loss(0.0).pacing_rate, 20.0);
        let d = c
            .on_ack(RttObservation {
                rtt: 25.0 * MS,
                now: 0.025,
                loss: false,
            })
            .unwrap();
        assert_eq!((d.pacing_rate, d.probe_phase), (20.0, ProbePhase::ProbingLow));
        let d = c
            .on_ack(RttObservation {
                rtt: 25.0 * MS,
                now: 0.05,
                loss: false,
            })
            .unwrap();
        assert_eq!((d.pacing_rate, d.probe_phase), (20.0, ProbePhase::None));
        // Anchors were reset at probe end, optimiser is back in charge.
        assert_eq!(c.state().origin_time, 0.05);
        let d = c
            .on_ack(RttObservation {
                rtt: 25.0 * MS,
                now: 0.075,
                loss: false,
            })
            .unwrap();
        assert_eq!(d.probe_phase, ProbePhase::None);
    }

    #[test]
    fn burst_losses_coalesce() {
        let mut c = controller_with(config(0.2, 0.3), 40.0, 25.0 * MS);
        assert_eq!(c.on_loss(0.0).pacing_rate, 20.0);
        assert_eq!(c.on_loss(0.01).pacing_rate, 20.0);
        assert_eq!(c.on_loss(0.03).pacing_rate, 10.0);
    }

    #[test]
    fn target_latency_modes() {
        let mut c = controller_with(config(0.2, 0.3), 40.0, 25.0 * MS);
        assert_eq!(c.target_latency(), 25.0 * MS);
        c.state.l_hat_b = 35.0 * MS;
        assert!((c.target_latency() - 30.0 * MS).abs() < 1e-15);
        c.config.target_mode = TargetMode::Explicit(10.0 * MS);
        assert_eq!(c.target_latency(), 25.0 * MS);
        c.config.target_mode = TargetMode::Explicit(50.0 * MS);
        assert_eq!(c.target_latency(), 35.0 * MS);
    }

    #[test]
    fn scheduled_probes_alternate_and_restore() {
        let cfg = ControllerConfig {
            probe: ProbeConfig {
                interval: Some(1.0),
                duration: Some(0.1),
                ..ProbeConfig::default()
            },
            ..config(0.2, 0.3)
        };
        let mut c = controller_with(cfg, 40.0, 25.0 * MS);
        let mut phases = Vec::new();
        let mut t = 0.0;
        for _ in 0..200 {
            t += 0.025;
            let d = c
                .on_ack(RttObservation {
                    rtt: 25.0 * MS,
                    now: t,
                    loss: false,
                })
                .unwrap();
            if phases.last() != Some(&d.probe_phase) {
                phases.push(d.probe_phase);
            }
        }
        assert_eq!(
            &phases[..5],
            &[
                ProbePhase::None,
                ProbePhase::ProbingLow,
                ProbePhase::None,
                ProbePhase::ProbingHigh,
                ProbePhase::None
            ]
        );
        assert!((c.rate() - 40.0).abs() < 1e-6);
    }
}
