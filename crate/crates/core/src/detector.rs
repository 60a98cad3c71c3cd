//! Online sequential test over a stream of event timestamps.
//!
//! The detector tracks `L` against `(alpha*/psi, beta*/psi)` with the same
//! [`ExitTracker`] the simulator uses, so a stream recorded from a simulated
//! path reproduces that path's exit bit for bit.

use std::io::BufRead;

use serde::Serialize;
use thiserror::Error;

use crate::boundary::Boundaries;
use crate::model::{decide, Costs, Decision, LikelihoodState, Model, PriorOdds};
use crate::pathsim::{ExitRecord, ExitTracker, Side, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("line {line}: cannot parse {text:?} as a timestamp")]
    Parse { line: usize, text: String },
    #[error("event {index}: timestamp {t} is negative or not finite")]
    Invalid { index: usize, t: f64 },
    #[error("event {index}: timestamp {t} does not exceed the previous one {prev}")]
    NotIncreasing { index: usize, t: f64, prev: f64 },
    #[error("horizon {horizon} precedes the last event at {last}")]
    Horizon { horizon: f64, last: f64 },
    #[error("reading stream: {0}")]
    Io(String),
}

/// Strictly increasing, nonnegative event times. The optional horizon is the
/// end of observation: the process is known to have no further events up to
/// it. Without a horizon the stream is taken to end at its last event.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventStream {
    times: Vec<f64>,
    horizon: Option<f64>,
}

impl EventStream {
    pub fn new(times: Vec<f64>) -> Result<Self, StreamError> {
        let mut prev = None::<f64>;
        for (index, &t) in times.iter().enumerate() {
            if !(t.is_finite() && t >= 0.0) {
                return Err(StreamError::Invalid { index, t });
            }
            if let Some(p) = prev {
                if t <= p {
                    return Err(StreamError::NotIncreasing { index, t, prev: p });
                }
            }
            prev = Some(t);
        }
        Ok(Self { times, horizon: None })
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self, StreamError> {
        let last = self.times.last().copied().unwrap_or(0.0);
        if horizon.is_nan() || horizon < last {
            return Err(StreamError::Horizon { horizon, last });
        }
        self.horizon = Some(horizon);
        Ok(self)
    }

    /// Newline-delimited decimal timestamps; blank lines are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, StreamError> {
        let mut times = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| StreamError::Io(e.to_string()))?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let t = text.parse::<f64>().map_err(|_| StreamError::Parse {
                line: i + 1,
                text: text.to_string(),
            })?;
            times.push(t);
        }
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    /// End of observation.
    pub fn end(&self) -> f64 {
        self.horizon
            .unwrap_or_else(|| self.times.last().copied().unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionOutcome {
    pub stopped_at: f64,
    pub decision: Decision,
    pub psi_at_stop: f64,
    pub exit_side: Side,
    pub events_consumed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detection {
    Exit(DetectionOutcome),
    /// The prior already lies outside `(alpha*, beta*)`.
    StoppedAtStart { decision: Decision, psi: f64 },
}

impl Detection {
    pub fn stopped_at(&self) -> f64 {
        match self {
            Detection::Exit(o) => o.stopped_at,
            Detection::StoppedAtStart { .. } => 0.0,
        }
    }

    pub fn decision(&self) -> Decision {
        match self {
            Detection::Exit(o) => o.decision,
            Detection::StoppedAtStart { decision, .. } => *decision,
        }
    }

    pub fn psi(&self) -> f64 {
        match self {
            Detection::Exit(o) => o.psi_at_stop,
            Detection::StoppedAtStart { psi, .. } => *psi,
        }
    }

    pub fn events_consumed(&self) -> u64 {
        match self {
            Detection::Exit(o) => o.events_consumed,
            Detection::StoppedAtStart { .. } => 0,
        }
    }

    /// `{stopped_at, decision, psi, events_consumed}`.
    pub fn summary(&self) -> DetectionSummary {
        DetectionSummary {
            stopped_at: self.stopped_at(),
            decision: self.decision(),
            psi: self.psi(),
            events_consumed: self.events_consumed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionSummary {
    pub stopped_at: f64,
    pub decision: Decision,
    pub psi: f64,
    pub events_consumed: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("undecided; stream ended at t = {} with posterior odds {}", .state.t, .state.psi_t)]
    Undecided { state: LikelihoodState },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Online detector for one stream.
#[derive(Debug, Clone)]
pub struct Detector {
    prior: PriorOdds,
    costs: Costs,
    tracker: ExitTracker,
}

impl Detector {
    /// `Ok(None)` when the prior is outside `(alpha*, beta*)`.
    pub fn new(
        model: &Model,
        costs: &Costs,
        boundaries: &Boundaries,
        prior: PriorOdds,
    ) -> Result<Option<Self>, SimError> {
        if !boundaries.contains(prior.psi()) {
            return Ok(None);
        }
        let interval = boundaries.likelihood_interval(prior.psi())?;
        Ok(Some(Self {
            prior,
            costs: *costs,
            tracker: ExitTracker::new(model, interval, 1.0)?,
        }))
    }

    /// Feeds the next event time. Times must increase.
    pub fn event(&mut self, at: f64) -> Option<DetectionOutcome> {
        self.tracker.arrival(at).map(|r| self.outcome(&r))
    }

    /// Declares that no event occurs up to `until`.
    pub fn quiet_until(&mut self, until: f64) -> Option<DetectionOutcome> {
        self.tracker.quiet_until(until).map(|r| self.outcome(&r))
    }

    pub fn state(&self) -> LikelihoodState {
        LikelihoodState::from_likelihood(
            self.prior,
            self.tracker.time(),
            self.tracker.jumps(),
            self.tracker.likelihood(),
        )
    }

    fn outcome(&self, rec: &ExitRecord) -> DetectionOutcome {
        let psi = self.prior.psi() * rec.l_exit;
        DetectionOutcome {
            stopped_at: rec.tau,
            decision: decide(&self.costs, psi),
            psi_at_stop: psi,
            exit_side: rec.side,
            events_consumed: rec.n_jumps,
        }
    }
}

/// Runs the test over a recorded stream.
pub fn detect(
    model: &Model,
    costs: &Costs,
    boundaries: &Boundaries,
    prior: PriorOdds,
    stream: &EventStream,
) -> Result<Detection, DetectError> {
    let Some(mut d) = Detector::new(model, costs, boundaries, prior)? else {
        return Ok(Detection::StoppedAtStart {
            decision: decide(costs, prior.psi()),
            psi: prior.psi(),
        });
    };
    for &t in stream.times() {
        if let Some(o) = d.event(t) {
            return Ok(Detection::Exit(o));
        }
    }
    if let Some(o) = d.quiet_until(stream.end()) {
        return Ok(Detection::Exit(o));
    }
    Err(DetectError::Undecided { state: d.state() })
}
