//! Optimal stopping boundaries by value iteration on posterior odds.
//!
//! Under `H0` the posterior odds `Psi` decay continuously and jump by the
//! factor `lambda1 / lambda0` at arrivals. The Bayes risk, scaled by
//! `1 + psi`, is
//!
//! ```text
//! V(phi) = inf_tau E0[ int_0^tau (1 + Psi_t) dt + min(a Psi_tau, b) ],  Psi_0 = phi
//! ```
//!
//! and is computed as the fixed point of the one-step operator
//!
//! ```text
//! V(phi) <- min{ g(phi), (1 + phi) dt + (1 - lambda0 dt) V(phi e^{-(lambda1 - lambda0) dt})
//!                                     + lambda0 dt V(phi lambda1 / lambda0) }
//! ```
//!
//! with `g(phi) = min(a phi, b)`. On a log-uniform grid both shifted
//! arguments are fixed index offsets with constant interpolation weights.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::num;
use crate::model::{Costs, Model};
use crate::pathsim::{Interval, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("invalid dp configuration: {0}")]
    Config(String),
    #[error("value iteration did not converge in {iterations} sweeps (last sup-norm change {last_delta:e})")]
    NotConverged { iterations: usize, last_delta: f64 },
    #[error("value iteration increased V at phi = {phi} in sweep {sweep}")]
    NonMonotone { sweep: usize, phi: f64 },
    #[error("degenerate continuation region: {0}")]
    Degenerate(String),
}

/// Stopping thresholds in posterior-odds space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundaries {
    pub alpha_star: f64,
    pub beta_star: f64,
}

impl Boundaries {
    pub fn new(alpha_star: f64, beta_star: f64) -> Result<Self, DpError> {
        if !(alpha_star.is_finite() && beta_star.is_finite() && 0.0 < alpha_star && alpha_star < beta_star) {
            return Err(DpError::Degenerate(format!(
                "need 0 < alpha* < beta* (got {alpha_star}, {beta_star})"
            )));
        }
        Ok(Self {
            alpha_star,
            beta_star,
        })
    }

    /// `alpha* / beta*`, the lower bound of the limiting interval `(ratio, 1]`.
    pub fn ratio(&self) -> f64 {
        self.alpha_star / self.beta_star
    }

    /// Whether `phi` lies in the continuation region `(alpha*, beta*)`.
    pub fn contains(&self, phi: f64) -> bool {
        phi > self.alpha_star && phi < self.beta_star
    }

    /// The stopping rule for prior odds `phi0` as an interval for `L`:
    /// `(alpha* / phi0, beta* / phi0)`.
    pub fn likelihood_interval(&self, phi0: f64) -> Result<Interval, SimError> {
        Interval::open(self.alpha_star / phi0, self.beta_star / phi0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub grid_points: usize,
    pub phi_min: f64,
    pub phi_max: f64,
    pub dt: f64,
    pub tol: f64,
    pub max_iters: usize,
}

pub const DEFAULT_CONTACT_TOL: f64 = 1e-6;

impl DpConfig {
    /// Grid over `[(b/a)/200, 10 (b/a) lambda1/lambda0]` with 4001 points,
    /// `dt = 1e-4 / (lambda1 - lambda0)`, `tol = 1e-9`.
    pub fn for_problem(model: &Model, costs: &Costs) -> Self {
        let k = costs.indifference_odds();
        let alpha_guess = k / 20.0;
        Self {
            grid_points: 4001,
            phi_min: alpha_guess / 10.0,
            phi_max: k * model.jump_factor() * 10.0,
            dt: 1e-4 / model.decay_rate(),
            tol: 1e-9,
            max_iters: 2_000_000,
        }
    }

    pub fn validate(&self, model: &Model) -> Result<(), DpError> {
        let fail = |msg: String| Err(DpError::Config(msg));
        if self.grid_points < 2 {
            return fail(format!("grid_points must be >= 2 (got {})", self.grid_points));
        }
        if !(self.phi_min.is_finite() && self.phi_min > 0.0 && self.phi_max.is_finite() && self.phi_max > self.phi_min) {
            return fail(format!(
                "need 0 < phi_min < phi_max (got {}, {})",
                self.phi_min, self.phi_max
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return fail(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return fail(format!("tol must be positive (got {})", self.tol));
        }
        if model.lambda0() * self.dt >= 1.0 {
            return fail(format!(
                "lambda0 * dt = {} must be < 1 for nonnegative transition weights",
                model.lambda0() * self.dt
            ));
        }
        Ok(())
    }
}

/// Converged value function on the posterior-odds grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueGrid {
    pub phis: Vec<f64>,
    pub values: Vec<f64>,
    pub gains: Vec<f64>,
    pub costs: Costs,
    pub iterations: usize,
    pub last_delta: f64,
}

impl ValueGrid {
    /// Linear interpolation in `log phi`; `g` outside the grid.
    pub fn value_at(&self, phi: f64) -> f64 {
        let n = self.phis.len();
        if phi < self.phis[0] || phi > self.phis[n - 1] {
            return self.costs.stopping_cost(phi);
        }
        let j = self.phis.partition_point(|&p| p <= phi).clamp(1, n - 1);
        let (x0, x1) = (self.phis[j - 1].ln(), self.phis[j].ln());
        let w = (phi.ln() - x0) / (x1 - x0);
        self.values[j - 1] * (1.0 - w) + self.values[j] * w
    }

    /// CSV dump: `phi,value,gain`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "phi,value,gain")?;
        for ((p, v), g) in self.phis.iter().zip(&self.values).zip(&self.gains) {
            writeln!(w, "{},{},{}", num(*p), num(*v), num(*g))?;
        }
        Ok(())
    }
}

/// Where a shifted grid point reads its value from.
#[derive(Debug, Clone, Copy)]
enum Lookup {
    /// `(1 - w) V[i] + w V[i + 1]`
    Grid(usize, f64),
    /// Outside the grid: the stopping gain there.
    Gain(f64),
}

fn lookup(pos: f64, n: usize, gain: f64) -> Lookup {
    if pos < 0.0 || pos > (n - 1) as f64 {
        return Lookup::Gain(gain);
    }
    let i = (pos.floor() as usize).min(n - 2);
    Lookup::Grid(i, pos - i as f64)
}

fn read(v: &[f64], l: Lookup) -> f64 {
    match l {
        Lookup::Grid(i, w) => (1.0 - w) * v[i] + w * v[i + 1],
        Lookup::Gain(g) => g,
    }
}

pub fn solve_value(model: &Model, costs: &Costs, config: &DpConfig) -> Result<ValueGrid, DpError> {
    config.validate(model)?;
    let n = config.grid_points;
    let (x0, x1) = (config.phi_min.ln(), config.phi_max.ln());
    let dx = (x1 - x0) / (n - 1) as f64;
    let mut phis: Vec<f64> = (0..n).map(|i| (x0 + i as f64 * dx).exp()).collect();
    phis[0] = config.phi_min;
    phis[n - 1] = config.phi_max;
    let gains: Vec<f64> = phis.iter().map(|&p| costs.stopping_cost(p)).collect();

    let dt = config.dt;
    let decay_shift = model.decay_rate() * dt / dx;
    let jump_shift = model.log_jump() / dx;
    let decay_factor = (-model.decay_rate() * dt).exp();
    let (decayed, jumped): (Vec<Lookup>, Vec<Lookup>) = phis
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            (
                lookup(i as f64 - decay_shift, n, costs.stopping_cost(p * decay_factor)),
                lookup(i as f64 + jump_shift, n, costs.stopping_cost(p * model.jump_factor())),
            )
        })
        .unzip();
    let running: Vec<f64> = phis.iter().map(|&p| (1.0 + p) * dt).collect();
    let stay = 1.0 - model.lambda0() * dt;
    let jump = model.lambda0() * dt;

    let mut v = gains.clone();
    let mut next = vec![0.0; n];
    let mut last_delta = f64::INFINITY;
    for sweep in 1..=config.max_iters {
        let mut delta = 0.0f64;
        for i in 0..n {
            let cont = running[i] + stay * read(&v, decayed[i]) + jump * read(&v, jumped[i]);
            let updated = gains[i].min(cont);
            if updated > v[i] {
                return Err(DpError::NonMonotone { sweep, phi: phis[i] });
            }
            delta = delta.max(v[i] - updated);
            next[i] = updated;
        }
        std::mem::swap(&mut v, &mut next);
        last_delta = delta;
        if delta < config.tol {
            return Ok(ValueGrid {
                phis,
                values: v,
                gains,
                costs: *costs,
                iterations: sweep,
                last_delta,
            });
        }
    }
    Err(DpError::NotConverged {
        iterations: config.max_iters,
        last_delta,
    })
}

/// Locates the edges of the continuation region `{g - V > contact_tol}` on
/// either side of `b/a`, refined by linear interpolation of `g - V` to the
/// contact level between the last contact point and the first interior point.
pub fn extract_boundaries(grid: &ValueGrid, contact_tol: f64) -> Result<Boundaries, DpError> {
    let k = grid.costs.indifference_odds();
    let gap: Vec<f64> = grid.gains.iter().zip(&grid.values).map(|(g, v)| g - v).collect();
    let phis = &grid.phis;
    let n = phis.len();
    let below = phis.partition_point(|&p| p < k);

    let i = (0..below)
        .rev()
        .find(|&i| gap[i] <= contact_tol)
        .ok_or_else(|| DpError::Degenerate("no stopping contact below b/a; extend phi_min".into()))?;
    if i + 1 >= below || gap[i + 1] <= contact_tol {
        return Err(DpError::Degenerate("empty continuation region below b/a".into()));
    }
    let w = (contact_tol - gap[i]) / (gap[i + 1] - gap[i]);
    let alpha = phis[i] + w * (phis[i + 1] - phis[i]);

    let j = (below..n)
        .find(|&j| phis[j] > k && gap[j] <= contact_tol)
        .ok_or_else(|| DpError::Degenerate("no stopping contact above b/a; extend phi_max".into()))?;
    if j == 0 || gap[j - 1] <= contact_tol {
        return Err(DpError::Degenerate("empty continuation region above b/a".into()));
    }
    let w = (gap[j - 1] - contact_tol) / (gap[j - 1] - gap[j]);
    let beta = phis[j - 1] + w * (phis[j] - phis[j - 1]);

    if !(0.0 < alpha && alpha < k && k < beta) {
        return Err(DpError::Degenerate(format!(
            "boundaries violate 0 < alpha* < b/a < beta* (alpha* = {alpha}, beta* = {beta}, b/a = {k})"
        )));
    }
    Boundaries::new(alpha, beta)
}

/// Runs [`solve_value`] and [`extract_boundaries`].
pub fn solve_boundaries(
    model: &Model,
    costs: &Costs,
    config: &DpConfig,
    contact_tol: f64,
) -> Result<(Boundaries, ValueGrid), DpError> {
    let grid = solve_value(model, costs, config)?;
    let b = extract_boundaries(&grid, contact_tol)?;
    Ok((b, grid))
}
