//! Least favorable prior odds and the saddle-point check.
//!
//! For prior odds `phi0` in the continuation region `(alpha*, beta*)` let
//! `tau*(phi0)` be the first exit of `L` from `(alpha*/phi0, beta*/phi0)`.
//! The Bayes risk of that rule as a function of the true prior odds `psi` is
//!
//! ```text
//! Jbar(psi; tau) = E0[ int_0^tau (1 + psi L_t) dt + min(b, a psi L_tau) ] / (1 + psi)
//! ```
//!
//! and it peaks at `psi = phi0` exactly when
//!
//! ```text
//! h(phi0) = (a alpha*/phi0 + b) P0(lower exit) - b + E0 int_0^tau (L_t - 1) dt = 0.
//! ```
//!
//! `h(alpha*+) = a > 0` and `h(beta*-) = gamma*`, so `gamma* < 0` guarantees a
//! root. Every `h` evaluation within one search uses the same per-path random
//! streams, which makes the estimated `h` a fixed function of `phi0` and the
//! bisection well posed.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{solve_boundaries, Boundaries, DpConfig, DpError, DEFAULT_CONTACT_TOL};
use crate::fmt::num;
use crate::fode::{solve_fode, FodeConfig, FodeError};
use crate::model::{classify_regime, Costs, Model, Regime};
use crate::pathsim::{simulate_exit, simulate_records, ExitRecord, Interval, Side, SimError};
use crate::rng::{derive_seed, RngStream};
use crate::stats::{fold_paths, Estimate, Moments};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LfdError {
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Fode(#[from] FodeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("prior odds {phi0} outside the continuation region ({alpha_star}, {beta_star})")]
    OutsideContinuation { phi0: f64, alpha_star: f64, beta_star: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("no sign change of h across the bracket although gamma* < 0; increase n_paths (samples: {})", fmt_samples(.samples))]
    NoSignChange { samples: Vec<HPoint> },
}

fn fmt_samples(s: &[HPoint]) -> String {
    s.iter()
        .map(|p| format!("h({:.4}) = {:.4} ± {:.4}", p.phi, p.h, p.se))
        .collect::<Vec<_>>()
        .join(", ")
}

/// One evaluation of `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HPoint {
    pub phi: f64,
    pub h: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HEstimate {
    pub phi0: f64,
    pub h: f64,
    pub se: f64,
    pub p_lower: f64,
    pub mean_int: f64,
    pub n_paths: u64,
}

impl HEstimate {
    pub fn point(&self) -> HPoint {
        HPoint {
            phi: self.phi0,
            h: self.h,
            se: self.se,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct CriticalMoments {
    lower: Moments,
    int: Moments,
    total: Moments,
}

impl CriticalMoments {
    fn merge(&mut self, o: &CriticalMoments) {
        self.lower.merge(&o.lower);
        self.int.merge(&o.int);
        self.total.merge(&o.total);
    }
}

/// Shared estimator of `(c + b) P0(lower exit) - b + E0 int (L - 1) dt`
/// over `interval` started from `L = 1`, where `c` is the lower-exit weight.
fn critical_functional(
    model: &Model,
    costs: &Costs,
    interval: &Interval,
    lower_weight: f64,
    n_paths: u64,
    seed: u64,
) -> Result<(f64, f64, Estimate, Estimate), SimError> {
    let w = lower_weight + costs.b();
    let m = fold_paths(
        n_paths,
        CriticalMoments::default,
        |acc, i| {
            let rec = simulate_exit(model, interval, 1.0, &mut RngStream::new(seed, i))?;
            let lower = if rec.side == Side::Lower { 1.0 } else { 0.0 };
            acc.lower.push(lower);
            acc.int.push(rec.int_l_minus_one());
            acc.total.push(w * lower - costs.b() + rec.int_l_minus_one());
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;
    let value = w * m.lower.mean() - costs.b() + m.int.mean();
    Ok((value, m.total.std_error(), m.lower.estimate(), m.int.estimate()))
}

fn check_inside(b: &Boundaries, phi0: f64) -> Result<(), LfdError> {
    if b.contains(phi0) {
        Ok(())
    } else {
        Err(LfdError::OutsideContinuation {
            phi0,
            alpha_star: b.alpha_star,
            beta_star: b.beta_star,
        })
    }
}

/// Monte Carlo estimate of `h(phi0)` with paths `0..n_paths` of `seed`.
pub fn estimate_h(
    model: &Model,
    costs: &Costs,
    boundaries: &Boundaries,
    phi0: f64,
    n_paths: u64,
    seed: u64,
) -> Result<HEstimate, LfdError> {
    check_inside(boundaries, phi0)?;
    if n_paths == 0 {
        return Err(LfdError::Argument("n_paths must be >= 1".into()));
    }
    let interval = boundaries.likelihood_interval(phi0)?;
    let weight = costs.a() * boundaries.alpha_star / phi0;
    let (h, se, p, int) = critical_functional(model, costs, &interval, weight, n_paths, seed)?;
    Ok(HEstimate {
        phi0,
        h,
        se,
        p_lower: p.value,
        mean_int: int.value,
        n_paths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaEstimate {
    pub value: f64,
    pub se: f64,
    pub p_lower: Estimate,
    pub mean_int: Estimate,
    pub n_paths: u64,
}

/// `gamma* = (a r + b) P0(L_theta = r) - b + E0 int_0^theta (L - 1) dt`,
/// `theta` the first exit of `L` from `(r, 1]` started at 1.
pub fn gamma_mc(model: &Model, costs: &Costs, ratio: f64, n_paths: u64, seed: u64) -> Result<GammaEstimate, LfdError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(LfdError::Argument(format!("ratio must lie in (0, 1) (got {ratio})")));
    }
    if n_paths == 0 {
        return Err(LfdError::Argument("n_paths must be >= 1".into()));
    }
    let interval = Interval::upper_closed(ratio, 1.0)?;
    let (value, se, p_lower, mean_int) =
        critical_functional(model, costs, &interval, costs.a() * ratio, n_paths, seed)?;
    Ok(GammaEstimate {
        value,
        se,
        p_lower,
        mean_int,
        n_paths,
    })
}

/// `Jbar(psi; 0) = min(b, a psi) / (1 + psi)`: the risk of stopping at once.
pub fn jbar_immediate(costs: &Costs, psi: f64) -> f64 {
    costs.stopping_cost(psi) / (1.0 + psi)
}

/// Per-path `Jbar` integrand `(tau + psi int L + min(b, a psi L_tau)) / (1 + psi)`.
pub fn jbar_integrand(rec: &ExitRecord, costs: &Costs, psi: f64) -> f64 {
    (rec.tau + psi * rec.int_l_dt + costs.stopping_cost(psi * rec.l_exit)) / (1.0 + psi)
}

/// `Jbar(psi; tau)` averaged over pre-simulated exit records of `tau`.
pub fn jbar_from_records(records: &[ExitRecord], costs: &Costs, psi: f64) -> Estimate {
    let mut m = Moments::default();
    for r in records {
        m.push(jbar_integrand(r, costs, psi));
    }
    m.estimate()
}

/// Monte Carlo `Jbar(psi; tau*(phi0))`.
pub fn estimate_jbar(
    model: &Model,
    costs: &Costs,
    boundaries: &Boundaries,
    phi0: f64,
    psi: f64,
    n_paths: u64,
    seed: u64,
) -> Result<Estimate, LfdError> {
    check_inside(boundaries, phi0)?;
    if !(psi.is_finite() && psi > 0.0) {
        return Err(LfdError::Argument(format!("psi must be positive (got {psi})")));
    }
    let interval = boundaries.likelihood_interval(phi0)?;
    let m = fold_paths(
        n_paths,
        Moments::default,
        |acc, i| {
            let rec = simulate_exit(model, &interval, 1.0, &mut RngStream::new(seed, i))?;
            acc.push(jbar_integrand(&rec, costs, psi));
            Ok::<(), SimError>(())
        },
        |a, b| a.merge(&b),
    )?;
    Ok(m.estimate())
}

/// Log-spaced grid of prior odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl PsiGrid {
    pub fn points(&self) -> Vec<f64> {
        match self.count {
            0 => vec![],
            1 => vec![self.min],
            n => {
                let (a, b) = (self.min.ln(), self.max.ln());
                (0..n)
                    .map(|i| {
                        if i == 0 {
                            self.min
                        } else if i == n - 1 {
                            self.max
                        } else {
                            (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                        }
                    })
                    .collect()
            }
        }
    }

    fn validate(&self) -> Result<(), LfdError> {
        if self.min > 0.0 && self.max >= self.min && self.max.is_finite() && self.count >= 1 {
            Ok(())
        } else {
            Err(LfdError::Argument(format!("invalid psi grid {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfdConfig {
    pub dp: DpConfig,
    pub contact_tol: f64,
    pub fode: FodeConfig,
    /// Use these boundaries instead of solving for them.
    pub boundaries: Option<Boundaries>,
    pub n_paths: u64,
    pub saddle_paths: u64,
    pub phi_tol: f64,
    /// Relative inset of the search bracket from `alpha*` and `beta*`.
    pub bracket_inset: f64,
    pub prescan_points: usize,
    /// Defaults to 50 points over `[alpha*/4, 4 beta*]`.
    pub psi_grid: Option<PsiGrid>,
    pub seed: u64,
}

impl LfdConfig {
    pub fn for_problem(model: &Model, costs: &Costs) -> Self {
        Self {
            dp: DpConfig::for_problem(model, costs),
            contact_tol: DEFAULT_CONTACT_TOL,
            fode: FodeConfig::default(),
            boundaries: None,
            n_paths: 1_000_000,
            saddle_paths: 100_000,
            phi_tol: 1e-3,
            bracket_inset: 1e-3,
            prescan_points: 32,
            psi_grid: None,
            seed: 0x5EED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaStar {
    pub fode: f64,
    pub mc: f64,
    pub mc_se: f64,
    pub mc_p_lower: f64,
    pub mc_mean_int: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LfdStatus {
    /// Immediate stopping; the least favorable odds are `b/a`.
    Trivial,
    Found,
    /// `gamma*` is clearly nonnegative, so the sufficient condition for a
    /// least favorable prior fails and no root is claimed.
    ExistenceNotGuaranteed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddlePoint {
    pub psi: f64,
    pub jbar: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleCheck {
    pub curve: Vec<SaddlePoint>,
    pub jbar_at_phi0: Estimate,
    pub argmax_psi: f64,
    /// `max over psi of (Jbar(psi) - Jbar(phi0)) / se(psi)`; at most 3 for a
    /// verified saddle.
    pub max_excess_se: f64,
    /// Log spacing of the sweep grid.
    pub log_step: f64,
    /// Whether the grid maximum sits within one grid step of `phi0`.
    pub argmax_near_phi0: bool,
    /// Whether some grid point within one step of `phi0` comes within 3 se
    /// of the grid maximum. The risk of a fixed rule is flat in `psi` as long
    /// as its terminal decisions do not change, so the literal argmax of the
    /// estimated curve is decided by noise across that plateau.
    pub peak_near_phi0: bool,
    pub n_paths: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LfdReport {
    pub status: LfdStatus,
    pub regime: Regime,
    pub boundaries: Option<Boundaries>,
    pub gamma_star: Option<GammaStar>,
    pub phi0: Option<f64>,
    /// `(alpha*/phi0, beta*/phi0)`: the stopping interval for `L`.
    pub likelihood_interval: Option<(f64, f64)>,
    pub h_at_phi0: Option<HPoint>,
    /// `h(phi0)` re-estimated on an independent set of paths.
    pub confirmation: Option<HEstimate>,
    pub bracket: Option<(f64, f64)>,
    /// `h` just inside `alpha*` and `beta*`.
    pub endpoints: Option<(HPoint, HPoint)>,
    /// `h(1)`, the even-odds prior, when 1 lies in the continuation region.
    pub h_at_even_odds: Option<HPoint>,
    pub prescan: Vec<HPoint>,
    pub sign_changes: Vec<(f64, f64)>,
    pub bisection: Vec<HPoint>,
    /// Adjacent pairs (by `phi`) of bisection evaluations where `h` increased.
    pub monotonicity_violations: usize,
    pub saddle: SaddleCheck,
    pub n_paths: u64,
    pub seed: u64,
}

impl LfdReport {
    /// CSV dump of the saddle sweep: `psi,jbar,se`.
    pub fn write_saddle_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "psi,jbar,se")?;
        for p in &self.saddle.curve {
            writeln!(w, "{},{},{}", num(p.psi), num(p.jbar), num(p.se))?;
        }
        Ok(())
    }
}

fn trivial_report(costs: &Costs, config: &LfdConfig) -> Result<LfdReport, LfdError> {
    let k = costs.indifference_odds();
    let grid = config.psi_grid.unwrap_or(PsiGrid {
        min: k / 4.0,
        max: 4.0 * k,
        count: 50,
    });
    grid.validate()?;
    let curve: Vec<SaddlePoint> = grid
        .points()
        .into_iter()
        .map(|psi| SaddlePoint {
            psi,
            jbar: jbar_immediate(costs, psi),
            se: 0.0,
        })
        .collect();
    let at = jbar_immediate(costs, k);
    let saddle = summarize_saddle(curve, k, Estimate { value: at, se: 0.0 }, 0);
    Ok(LfdReport {
        status: LfdStatus::Trivial,
        regime: Regime::Trivial,
        boundaries: None,
        gamma_star: None,
        phi0: Some(k),
        likelihood_interval: None,
        h_at_phi0: None,
        confirmation: None,
        bracket: None,
        endpoints: None,
        h_at_even_odds: None,
        prescan: vec![],
        sign_changes: vec![],
        bisection: vec![],
        monotonicity_violations: 0,
        saddle,
        n_paths: config.n_paths,
        seed: config.seed,
    })
}

fn summarize_saddle(curve: Vec<SaddlePoint>, phi0: f64, at: Estimate, n_paths: u64) -> SaddleCheck {
    let best = curve.iter().fold(None::<&SaddlePoint>, |best, p| match best {
        Some(b) if b.jbar >= p.jbar => Some(b),
        _ => Some(p),
    });
    let argmax_psi = best.map_or(f64::NAN, |p| p.psi);
    let log_step = match curve.len() {
        0 | 1 => 0.0,
        n => (curve[n - 1].psi / curve[0].psi).ln() / (n - 1) as f64,
    };
    // Slack absorbs rounding in the log spacing.
    let near = |psi: f64| (psi / phi0).ln().abs() <= log_step * (1.0 + 1e-9);
    let argmax_near_phi0 = near(argmax_psi);
    let peak_near_phi0 = best.is_some_and(|b| {
        curve
            .iter()
            .any(|p| near(p.psi) && p.jbar + 3.0 * p.se.max(b.se) >= b.jbar)
    });
    let max_excess_se = curve
        .iter()
        .map(|p| {
            let excess = p.jbar - at.value;
            if p.se > 0.0 {
                excess / p.se
            } else if excess > 1e-12 * at.value.abs().max(1.0) {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    SaddleCheck {
        curve,
        jbar_at_phi0: at,
        argmax_psi,
        max_excess_se,
        log_step,
        argmax_near_phi0,
        peak_near_phi0,
        n_paths,
    }
}

/// Boundaries, `gamma*` from both routes, bisection for the root of `h`, and
/// the saddle sweep.
pub fn find_lfd(model: &Model, costs: &Costs, config: &LfdConfig) -> Result<LfdReport, LfdError> {
    if config.n_paths == 0 || config.saddle_paths == 0 {
        return Err(LfdError::Argument("path counts must be >= 1".into()));
    }
    if config.phi_tol.is_nan() || config.phi_tol <= 0.0 || !(config.bracket_inset > 0.0 && config.bracket_inset < 0.5) {
        return Err(LfdError::Argument("phi_tol must be > 0 and bracket_inset in (0, 0.5)".into()));
    }
    let regime = classify_regime(model, costs);
    if regime == Regime::Trivial {
        return trivial_report(costs, config);
    }

    let boundaries = match config.boundaries {
        Some(b) => {
            let k = costs.indifference_odds();
            if !(b.alpha_star < k && k < b.beta_star) {
                return Err(LfdError::Argument(format!(
                    "given boundaries must satisfy alpha* < b/a = {k} < beta*"
                )));
            }
            b
        }
        None => solve_boundaries(model, costs, &config.dp, config.contact_tol)?.0,
    };
    let ratio = boundaries.ratio();
    let seed = config.seed;
    let n = config.n_paths;

    let fode = solve_fode(model, costs, ratio, &config.fode)?;
    let mc = gamma_mc(model, costs, ratio, n, seed)?;
    let gamma_star = GammaStar {
        fode: fode.gamma_star,
        mc: mc.value,
        mc_se: mc.se,
        mc_p_lower: mc.p_lower.value,
        mc_mean_int: mc.mean_int.value,
    };

    let psi_grid = config.psi_grid.unwrap_or(PsiGrid {
        min: boundaries.alpha_star / 4.0,
        max: 4.0 * boundaries.beta_star,
        count: 50,
    });
    psi_grid.validate()?;

    let h = |phi: f64| estimate_h(model, costs, &boundaries, phi, n, seed).map(|e| e.point());
    let h_at_even_odds = if boundaries.contains(1.0) { Some(h(1.0)?) } else { None };

    let lo = boundaries.alpha_star * (1.0 + config.bracket_inset);
    let hi = boundaries.beta_star * (1.0 - config.bracket_inset);
    let m = config.prescan_points.max(2);
    let prescan: Vec<HPoint> = (0..m)
        .map(|i| {
            let phi = if i == m - 1 { hi } else { lo + (hi - lo) * i as f64 / (m - 1) as f64 };
            h(phi)
        })
        .collect::<Result<_, _>>()?;
    let sign_changes: Vec<(f64, f64)> = prescan
        .windows(2)
        .filter(|w| (w[0].h > 0.0) != (w[1].h > 0.0))
        .map(|w| (w[0].phi, w[1].phi))
        .collect();
    let (h_lo, h_hi) = (prescan[0], prescan[m - 1]);

    let mut report = LfdReport {
        status: LfdStatus::Found,
        regime,
        boundaries: Some(boundaries),
        gamma_star: Some(gamma_star),
        phi0: None,
        likelihood_interval: None,
        h_at_phi0: None,
        confirmation: None,
        bracket: None,
        endpoints: Some((h_lo, h_hi)),
        h_at_even_odds,
        prescan,
        sign_changes,
        bisection: vec![],
        monotonicity_violations: 0,
        saddle: summarize_saddle(vec![], f64::NAN, Estimate { value: f64::NAN, se: f64::NAN }, 0),
        n_paths: n,
        seed,
    };

    if mc.value > 3.0 * mc.se {
        report.status = LfdStatus::ExistenceNotGuaranteed;
        return Ok(report);
    }
    if !(h_lo.h > 0.0 && h_hi.h < 0.0) {
        return Err(LfdError::NoSignChange {
            samples: report.prescan,
        });
    }

    let (mut a, mut b) = (lo, hi);
    let mut evals = vec![h_lo, h_hi];
    let mut root = None;
    while b - a >= config.phi_tol {
        let mid = 0.5 * (a + b);
        let e = h(mid)?;
        evals.push(e);
        report.bisection.push(e);
        if e.h.abs() < 2.0 * e.se {
            root = Some(e);
            break;
        }
        if e.h > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let at_root = match root {
        Some(e) => e,
        None => {
            let e = h(0.5 * (a + b))?;
            evals.push(e);
            e
        }
    };
    let phi0 = at_root.phi;
    evals.sort_by(|x, y| x.phi.total_cmp(&y.phi));
    report.monotonicity_violations = evals.windows(2).filter(|w| w[1].h > w[0].h).count();
    report.phi0 = Some(phi0);
    report.h_at_phi0 = Some(at_root);
    report.bracket = Some((a, b));
    report.likelihood_interval = Some((boundaries.alpha_star / phi0, boundaries.beta_star / phi0));
    report.confirmation = Some(estimate_h(model, costs, &boundaries, phi0, n, derive_seed(seed, 1))?);

    let interval = boundaries.likelihood_interval(phi0)?;
    let records = simulate_records(model, &interval, 1.0, config.saddle_paths, seed)?;
    let curve = psi_grid
        .points()
        .into_iter()
        .map(|psi| {
            let e = jbar_from_records(&records, costs, psi);
            SaddlePoint {
                psi,
                jbar: e.value,
                se: e.se,
            }
        })
        .collect();
    report.saddle = summarize_saddle(
        curve,
        phi0,
        jbar_from_records(&records, costs, phi0),
        config.saddle_paths,
    );
    Ok(report)
}
