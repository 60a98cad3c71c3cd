//! Exact event-driven simulation of the likelihood-ratio process under `H0`.
//!
//! Between arrivals `L` decays as `l * exp(-(lambda1 - lambda0) * s)`, and at
//! every arrival it is multiplied by `lambda1 / lambda0`. The lower boundary
//! can only be reached by decay, so its hitting time is solved in closed
//! form; the upper boundary can only be crossed at an arrival. Path integrals
//! of `L` are accumulated segment by segment in closed form, so a simulated
//! path carries no time-discretization error.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::num;
use crate::model::Model;
use crate::rng::RngStream;
use crate::stats::{fold_paths, map_paths, Estimate, Moments};

/// Default cap on arrivals per path before a simulation is declared runaway.
pub const DEFAULT_MAX_JUMPS: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid interval: need 0 < lower < upper (got lower = {lower}, upper = {upper})")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("starting likelihood ratio {l0} lies outside the continuation interval {interval}")]
    StartOutside { l0: f64, interval: Interval },
    #[error("path did not exit after {max_jumps} arrivals (t = {t}, l = {l})")]
    JumpCap { max_jumps: u64, t: f64, l: f64 },
    #[error("horizon must be finite and nonnegative (got {0})")]
    Horizon(f64),
}

/// Continuation interval in likelihood-ratio space: `(lower, upper)` or
/// `(lower, upper]`. `upper` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lower: f64,
    upper: f64,
    upper_closed: bool,
}

impl Interval {
    pub fn new(lower: f64, upper: f64, upper_closed: bool) -> Result<Self, SimError> {
        let ok = lower.is_finite() && lower > 0.0 && upper > lower && !upper.is_nan();
        if !ok {
            return Err(SimError::InvalidInterval { lower, upper });
        }
        Ok(Self {
            lower,
            upper,
            upper_closed,
        })
    }

    /// `(lower, upper)`
    pub fn open(lower: f64, upper: f64) -> Result<Self, SimError> {
        Self::new(lower, upper, false)
    }

    /// `(lower, upper]`
    pub fn upper_closed(lower: f64, upper: f64) -> Result<Self, SimError> {
        Self::new(lower, upper, true)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_upper_closed(&self) -> bool {
        self.upper_closed
    }

    pub fn contains(&self, l: f64) -> bool {
        l > self.lower && !self.exits_above(l)
    }

    fn exits_above(&self, l: f64) -> bool {
        if self.upper_closed {
            l > self.upper
        } else {
            l >= self.upper
        }
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let close = if self.upper_closed { ']' } else { ')' };
        write!(f, "({}, {}{close}", self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

/// Outcome of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitRecord {
    /// Exit time.
    pub tau: f64,
    pub side: Side,
    /// `L` at exit; exactly the lower bound for lower exits.
    pub l_exit: f64,
    /// Integral of `L` over `[0, tau]`.
    pub int_l_dt: f64,
    pub n_jumps: u64,
}

impl ExitRecord {
    /// Integral of `L - 1` over `[0, tau]`.
    pub fn int_l_minus_one(&self) -> f64 {
        self.int_l_dt - self.tau
    }
}

/// Steps the likelihood ratio through arrival times and reports the first
/// exit from an interval. Shared by the simulator and the online detector so
/// both perform identical floating-point work on identical inputs.
#[derive(Debug, Clone)]
pub struct ExitTracker {
    interval: Interval,
    decay: f64,
    jump: f64,
    t: f64,
    l: f64,
    n: u64,
    int_l: f64,
    exit: Option<ExitRecord>,
}

impl ExitTracker {
    pub fn new(model: &Model, interval: Interval, l0: f64) -> Result<Self, SimError> {
        if !interval.contains(l0) {
            return Err(SimError::StartOutside { l0, interval });
        }
        Ok(Self {
            interval,
            decay: model.decay_rate(),
            jump: model.jump_factor(),
            t: 0.0,
            l: l0,
            n: 0,
            int_l: 0.0,
            exit: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Current likelihood ratio (at the last processed instant).
    pub fn likelihood(&self) -> f64 {
        self.l
    }

    pub fn jumps(&self) -> u64 {
        self.n
    }

    pub fn exit(&self) -> Option<&ExitRecord> {
        self.exit.as_ref()
    }

    /// Absolute time at which decay alone would bring `L` down to the lower bound.
    pub fn lower_hit_time(&self) -> f64 {
        self.t + (self.l / self.interval.lower).ln() / self.decay
    }

    fn exit_lower(&mut self, at: f64) -> ExitRecord {
        self.int_l += (self.l - self.interval.lower) / self.decay;
        self.t = at;
        self.l = self.interval.lower;
        self.finish(Side::Lower)
    }

    fn finish(&mut self, side: Side) -> ExitRecord {
        let rec = ExitRecord {
            tau: self.t,
            side,
            l_exit: self.l,
            int_l_dt: self.int_l,
            n_jumps: self.n,
        };
        self.exit = Some(rec);
        rec
    }

    fn decay_to(&mut self, at: f64) {
        let decayed = self.l * (-self.decay * (at - self.t)).exp();
        self.int_l += (self.l - decayed) / self.decay;
        self.t = at;
        self.l = decayed;
    }

    /// Processes an arrival at absolute time `at >= time()`. Returns the exit
    /// record if the path leaves the interval at or before `at`; once exited,
    /// the same record is returned for any further call.
    pub fn arrival(&mut self, at: f64) -> Option<ExitRecord> {
        if self.exit.is_some() {
            return self.exit;
        }
        let hit = self.lower_hit_time();
        if hit <= at {
            return Some(self.exit_lower(hit));
        }
        self.decay_to(at);
        self.n += 1;
        self.l *= self.jump;
        if self.interval.exits_above(self.l) {
            Some(self.finish(Side::Upper))
        } else {
            None
        }
    }

    /// Advances through a quiet stretch with no arrivals up to `until`.
    pub fn quiet_until(&mut self, until: f64) -> Option<ExitRecord> {
        if self.exit.is_some() {
            return self.exit;
        }
        let hit = self.lower_hit_time();
        if hit <= until {
            return Some(self.exit_lower(hit));
        }
        if until > self.t {
            self.decay_to(until);
        }
        None
    }
}

/// Simulates one path of `L` under `H0` from `l0` until it leaves `interval`.
pub fn simulate_exit(
    model: &Model,
    interval: &Interval,
    l0: f64,
    rng: &mut RngStream,
) -> Result<ExitRecord, SimError> {
    simulate_exit_observed(model, interval, l0, rng, DEFAULT_MAX_JUMPS, |_| {})
}

/// As [`simulate_exit`], with an explicit arrival cap and a callback that sees
/// every arrival time drawn, including the first one after a lower exit.
pub fn simulate_exit_observed<F: FnMut(f64)>(
    model: &Model,
    interval: &Interval,
    l0: f64,
    rng: &mut RngStream,
    max_jumps: u64,
    mut on_arrival: F,
) -> Result<ExitRecord, SimError> {
    let mut tracker = ExitTracker::new(model, *interval, l0)?;
    let rate = model.lambda0();
    loop {
        let at = tracker.time() + rng.exponential(rate);
        on_arrival(at);
        if let Some(rec) = tracker.arrival(at) {
            return Ok(rec);
        }
        if tracker.jumps() >= max_jumps {
            return Err(SimError::JumpCap {
                max_jumps,
                t: tracker.time(),
                l: tracker.likelihood(),
            });
        }
    }
}

/// Exit records for paths `0..n_paths`, path `i` drawn from stream `(seed, i)`.
pub fn simulate_records(
    model: &Model,
    interval: &Interval,
    l0: f64,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<ExitRecord>, SimError> {
    ExitTracker::new(model, *interval, l0)?;
    map_paths(n_paths, |i| {
        simulate_exit(model, interval, l0, &mut RngStream::new(seed, i))
    })
}

/// Monte Carlo summary of exit functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitFunctionals {
    pub n_paths: u64,
    /// Probability of leaving through the lower bound.
    pub p_lower: Estimate,
    /// Expected integral of `L - 1` up to the exit.
    pub mean_int_l_minus_1: Estimate,
    /// Expected exit time.
    pub mean_tau: Estimate,
}

#[derive(Debug, Clone, Copy, Default)]
struct ExitMoments {
    lower: Moments,
    int: Moments,
    tau: Moments,
}

impl ExitMoments {
    fn push(&mut self, r: &ExitRecord) {
        self.lower.push(if r.side == Side::Lower { 1.0 } else { 0.0 });
        self.int.push(r.int_l_minus_one());
        self.tau.push(r.tau);
    }

    fn merge(&mut self, o: &ExitMoments) {
        self.lower.merge(&o.lower);
        self.int.merge(&o.int);
        self.tau.merge(&o.tau);
    }
}

pub fn estimate_exit_functionals(
    model: &Model,
    interval: &Interval,
    l0: f64,
    n_paths: u64,
    seed: u64,
) -> Result<ExitFunctionals, SimError> {
    ExitTracker::new(model, *interval, l0)?;
    let m = fold_paths(
        n_paths,
        ExitMoments::default,
        |acc, i| {
            let rec = simulate_exit(model, interval, l0, &mut RngStream::new(seed, i))?;
            acc.push(&rec);
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;
    Ok(ExitFunctionals {
        n_paths,
        p_lower: m.lower.estimate(),
        mean_int_l_minus_1: m.int.estimate(),
        mean_tau: m.tau.estimate(),
    })
}

/// `L` at a fixed horizon with no stopping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonSample {
    pub l: f64,
    pub n: u64,
}

pub fn simulate_horizon(
    model: &Model,
    l0: f64,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<HorizonSample, SimError> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(SimError::Horizon(horizon));
    }
    let mut t = 0.0;
    let mut n = 0u64;
    loop {
        t += rng.exponential(model.lambda0());
        if t > horizon {
            break;
        }
        n += 1;
    }
    Ok(HorizonSample {
        l: l0 * model.likelihood(horizon, n),
        n,
    })
}

/// Sample mean of `L_T` started from 1. `L` is a martingale under `H0`, so
/// the expectation is 1.
pub fn estimate_horizon_mean(
    model: &Model,
    horizon: f64,
    n_paths: u64,
    seed: u64,
) -> Result<Estimate, SimError> {
    let m = fold_paths(
        n_paths,
        Moments::default,
        |acc, i| {
            acc.push(simulate_horizon(model, 1.0, horizon, &mut RngStream::new(seed, i))?.l);
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;
    Ok(m.estimate())
}

/// CSV dump: `path_id,tau,side,l_exit,int_l_dt,n_jumps`.
pub fn write_paths_csv<W: Write>(mut w: W, records: &[ExitRecord]) -> io::Result<()> {
    writeln!(w, "path_id,tau,side,l_exit,int_l_dt,n_jumps")?;
    for (i, r) in records.iter().enumerate() {
        let side = match r.side {
            Side::Lower => "Lower",
            Side::Upper => "Upper",
        };
        writeln!(
            w,
            "{i},{},{side},{},{},{}",
            num(r.tau),
            num(r.l_exit),
            num(r.int_l_dt),
            r.n_jumps
        )?;
    }
    Ok(())
}
