//! Advanced-argument ODEs for the exit functionals of the limiting interval
//! `(r, 1]`, `r = alpha*/beta*`.
//!
//! On `(r, 1)`:
//!
//! ```text
//! (lambda0 - lambda1) phi f0'(phi) + lambda0 [f0(lambda1 phi / lambda0) - f0(phi)]           = 0
//! (lambda0 - lambda1) phi f1'(phi) + lambda0 [f1(lambda1 phi / lambda0) - f1(phi)] + phi - 1 = 0
//! ```
//!
//! with `f0(1) = 1`, `f0 = 0` above 1, `f1(1) = 0`, `f1 = -b` above 1. The
//! right-hand side looks ahead to `lambda1 phi / lambda0 > phi`, which is
//! either above 1 (tail value) or already integrated, so the system is
//! solved by marching down from `phi = 1`.
//!
//! Integration runs in `u = ln phi` with classical RK4 and a uniform step
//! chosen so that `ln(lambda1 / lambda0)` is an exact multiple of it: the
//! advanced argument of a grid point is then another grid point, and
//! `phi = lambda0 / lambda1`, where the derivatives jump, is a grid node.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::num;
use crate::model::{Costs, Model};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FodeError {
    #[error("ratio must lie in (0, 1) (got {0})")]
    Ratio(f64),
    #[error("step count must be positive")]
    Steps,
    #[error("solution lost strict monotonicity at phi = {phi}; reduce the step size")]
    NonMonotone { phi: f64 },
    #[error("solution covers [{covered}, 1] which does not contain {ratio}")]
    Coverage { covered: f64, ratio: f64 },
    #[error("f0({ratio}) = {f0} < 1 contradicts f0 >= f0(1) = 1")]
    Inconsistent { ratio: f64, f0: f64 },
}

pub const DEFAULT_FODE_STEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FodeConfig {
    /// Minimum number of steps across `[ratio, 1]`.
    pub steps: usize,
}

impl Default for FodeConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_FODE_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FodeSolution {
    /// Descending from 1 to `ratio`.
    pub grid: Vec<f64>,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
    pub gamma_star: f64,
    /// Uniform step in `ln phi` (the last step may be shorter).
    pub log_step: f64,
    /// Number of steps spanning `ln(lambda1 / lambda0)`.
    pub jump_steps: usize,
}

#[derive(Debug, Clone, Copy)]
struct Pair(f64, f64);

impl Pair {
    fn axpy(self, s: f64, o: Pair) -> Pair {
        Pair(self.0 + s * o.0, self.1 + s * o.1)
    }

    fn lerp(self, o: Pair, w: f64) -> Pair {
        Pair(self.0 + w * (o.0 - self.0), self.1 + w * (o.1 - self.1))
    }
}

struct Rhs {
    lambda0: f64,
    decay: f64,
}

impl Rhs {
    /// `d(f0, f1)/du` at `u` given the state and the advanced values.
    fn eval(&self, u: f64, y: Pair, adv: Pair) -> Pair {
        Pair(
            self.lambda0 * (adv.0 - y.0) / self.decay,
            (self.lambda0 * (adv.1 - y.1) + u.exp() - 1.0) / self.decay,
        )
    }
}

pub fn solve_fode(model: &Model, costs: &Costs, ratio: f64, config: &FodeConfig) -> Result<FodeSolution, FodeError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(FodeError::Ratio(ratio));
    }
    if config.steps == 0 {
        return Err(FodeError::Steps);
    }
    let span = -ratio.ln();
    let jump = model.log_jump();
    let jump_steps = ((config.steps as f64) * jump / span).ceil().max(1.0) as usize;
    let h = jump / jump_steps as f64;
    let full = (span / h).floor() as usize;
    let tail = Pair(0.0, -costs.b());
    let rhs = Rhs {
        lambda0: model.lambda0(),
        decay: model.decay_rate(),
    };

    let mut us = Vec::with_capacity(full + 2);
    let mut ys: Vec<Pair> = Vec::with_capacity(full + 2);
    us.push(0.0);
    ys.push(Pair(1.0, 0.0));

    // value at fractional grid index `pos` (index 0 is phi = 1)
    let at = |ys: &[Pair], pos: f64| -> Pair {
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        if w == 0.0 || i + 1 >= ys.len() {
            ys[i]
        } else {
            ys[i].lerp(ys[i + 1], w)
        }
    };

    let mut k = 0usize;
    loop {
        let u = us[k];
        let step = if k < full { h } else { u - ratio.ln() };
        if step <= 0.0 || (k >= full && step < h * 1e-9) {
            break;
        }
        let y = ys[k];
        // advanced positions of the three RK4 abscissae, in grid-index units
        let tail_side = k < jump_steps;
        let adv = |s: f64| -> Pair {
            if tail_side {
                tail
            } else {
                at(&ys, k as f64 - jump_steps as f64 + s * step / h)
            }
        };
        let (a0, a_mid, a1) = (adv(0.0), adv(0.5), adv(1.0));
        let k1 = rhs.eval(u, y, a0);
        let k2 = rhs.eval(u - step / 2.0, y.axpy(-step / 2.0, k1), a_mid);
        let k3 = rhs.eval(u - step / 2.0, y.axpy(-step / 2.0, k2), a_mid);
        let k4 = rhs.eval(u - step, y.axpy(-step, k3), a1);
        let next = Pair(
            y.0 - step / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            y.1 - step / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        );
        let u_next = if k < full { -((k + 1) as f64) * h } else { ratio.ln() };
        if !(next.0 > y.0 && next.1 > y.1) {
            return Err(FodeError::NonMonotone { phi: u_next.exp() });
        }
        us.push(u_next);
        ys.push(next);
        k += 1;
        if k > full {
            break;
        }
    }

    let mut grid: Vec<f64> = us.iter().map(|u| u.exp()).collect();
    *grid.last_mut().expect("nonempty") = ratio;
    let mut sol = FodeSolution {
        grid,
        f0: ys.iter().map(|p| p.0).collect(),
        f1: ys.iter().map(|p| p.1).collect(),
        gamma_star: f64::NAN,
        log_step: h,
        jump_steps,
    };
    sol.gamma_star = gamma_from_fode(&sol, costs, ratio)?;
    Ok(sol)
}

impl FodeSolution {
    /// `(f0, f1)` at `phi` by linear interpolation in `ln phi`; tail values
    /// above 1.
    pub fn eval(&self, phi: f64, costs: &Costs) -> Option<(f64, f64)> {
        if phi > 1.0 {
            return Some((0.0, -costs.b()));
        }
        let last = *self.grid.last()?;
        if phi < last {
            return None;
        }
        if phi == last {
            return Some((*self.f0.last()?, *self.f1.last()?));
        }
        // grid is descending
        let j = self.grid.partition_point(|&g| g > phi).clamp(1, self.grid.len() - 1);
        let (x0, x1) = (self.grid[j - 1].ln(), self.grid[j].ln());
        let w = (phi.ln() - x0) / (x1 - x0);
        Some((
            self.f0[j - 1] + w * (self.f0[j] - self.f0[j - 1]),
            self.f1[j - 1] + w * (self.f1[j] - self.f1[j - 1]),
        ))
    }

    /// Largest absolute ODE residual over interior grid points, with the
    /// derivative from second-order finite differences. At nodes where the
    /// derivative may jump (multiples of `ln(lambda1/lambda0)` below 1) the
    /// one-sided difference from above is used.
    pub fn max_residual(&self, model: &Model, costs: &Costs) -> f64 {
        let h = self.log_step;
        let m = self.jump_steps;
        let uniform = self.grid.len() - 1;
        let tail = (0.0, -costs.b());
        let mut worst = 0.0f64;
        // the last node may close a shorter step; stay on the uniform part
        for k in 1..uniform.saturating_sub(1) {
            let phi = self.grid[k];
            let deriv = |f: &[f64]| -> f64 {
                if k % m == 0 && k >= 2 {
                    (-3.0 * f[k] + 4.0 * f[k - 1] - f[k - 2]) / (2.0 * h)
                } else {
                    (f[k - 1] - f[k + 1]) / (2.0 * h)
                }
            };
            let adv = if k <= m { tail } else { (self.f0[k - m], self.f1[k - m]) };
            let c = model.decay_rate();
            let l0 = model.lambda0();
            let r0 = -c * deriv(&self.f0) + l0 * (adv.0 - self.f0[k]);
            let r1 = -c * deriv(&self.f1) + l0 * (adv.1 - self.f1[k]) + phi - 1.0;
            worst = worst.max(r0.abs()).max(r1.abs());
        }
        worst
    }

    /// CSV dump: `phi,f0,f1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "phi,f0,f1")?;
        for ((p, a), b) in self.grid.iter().zip(&self.f0).zip(&self.f1) {
            writeln!(w, "{},{},{}", num(*p), num(*a), num(*b))?;
        }
        Ok(())
    }
}

/// `(a r - f1(r)) / f0(r)`.
pub fn gamma_from_fode(sol: &FodeSolution, costs: &Costs, ratio: f64) -> Result<f64, FodeError> {
    let covered = sol.grid.last().copied().unwrap_or(1.0);
    let (f0, f1) = sol
        .eval(ratio, costs)
        .ok_or(FodeError::Coverage { covered, ratio })?;
    if f0 < 1.0 {
        return Err(FodeError::Inconsistent { ratio, f0 });
    }
    Ok((costs.a() * ratio - f1) / f0)
}
