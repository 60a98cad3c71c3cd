//! Hypothesis pair, detection costs and the closed-form likelihood-ratio /
//! posterior-odds processes of the Poisson testing problem.
//!
//! Under `H0` the observed counting process has intensity `lambda0`, under
//! `H1` it has `lambda1 > lambda0`. After observing `n` arrivals during
//! `[0, t]` the likelihood ratio is
//!
//! ```text
//! L(t, n) = exp(n * ln(lambda1 / lambda0) - (lambda1 - lambda0) * t)
//! ```
//!
//! and the posterior odds are `Psi = psi * L` for prior odds `psi`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("intensities must satisfy lambda1 > lambda0 > 0 (got lambda0 = {lambda0}, lambda1 = {lambda1})")]
    Intensities { lambda0: f64, lambda1: f64 },
    #[error("cost `{name}` must be finite and positive (got {value})")]
    Cost { name: &'static str, value: f64 },
    #[error("prior odds must be finite and positive (got {0})")]
    PriorOdds(f64),
    #[error("prior probability must lie in (0, 1) (got {0})")]
    PriorProbability(f64),
}

/// The two candidate intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Model {
    lambda0: f64,
    lambda1: f64,
}

impl Model {
    pub fn new(lambda0: f64, lambda1: f64) -> Result<Self, ModelError> {
        let ok = lambda0.is_finite() && lambda1.is_finite() && lambda0 > 0.0 && lambda1 > lambda0;
        if !ok {
            return Err(ModelError::Intensities { lambda0, lambda1 });
        }
        Ok(Self { lambda0, lambda1 })
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    /// `lambda1 - lambda0`: exponential decay rate of `L` between arrivals.
    pub fn decay_rate(&self) -> f64 {
        self.lambda1 - self.lambda0
    }

    /// `lambda1 / lambda0`: multiplicative jump of `L` at each arrival.
    pub fn jump_factor(&self) -> f64 {
        self.lambda1 / self.lambda0
    }

    /// `ln(lambda1 / lambda0)`.
    pub fn log_jump(&self) -> f64 {
        self.lambda1.ln() - self.lambda0.ln()
    }

    pub fn log_likelihood(&self, t: f64, n: u64) -> f64 {
        n as f64 * self.log_jump() - self.decay_rate() * t
    }

    /// Likelihood ratio after `n` arrivals in `[0, t]`.
    pub fn likelihood(&self, t: f64, n: u64) -> f64 {
        self.log_likelihood(t, n).exp()
    }
}

impl<'de> Deserialize<'de> for Model {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lambda0: f64,
            lambda1: f64,
        }
        let raw = Raw::deserialize(d)?;
        Model::new(raw.lambda0, raw.lambda1).map_err(serde::de::Error::custom)
    }
}

/// Costs of the two wrong terminal decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Costs {
    /// Cost of accepting `H0` when `H1` holds.
    a: f64,
    /// Cost of accepting `H1` when `H0` holds.
    b: f64,
}

impl Costs {
    pub fn new(a: f64, b: f64) -> Result<Self, ModelError> {
        for (name, value) in [("a", a), ("b", b)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::Cost { name, value });
            }
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `b / a`, the posterior odds at which both terminal decisions cost the same.
    pub fn indifference_odds(&self) -> f64 {
        self.b / self.a
    }

    /// Terminal cost `min(a * psi, b)` of stopping at posterior odds `psi`.
    pub fn stopping_cost(&self, psi: f64) -> f64 {
        (self.a * psi).min(self.b)
    }
}

impl<'de> Deserialize<'de> for Costs {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            a: f64,
            b: f64,
        }
        let raw = Raw::deserialize(d)?;
        Costs::new(raw.a, raw.b).map_err(serde::de::Error::custom)
    }
}

/// Prior odds `psi = pi / (1 - pi)` of `H1` against `H0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct PriorOdds(f64);

impl PriorOdds {
    pub fn new(psi: f64) -> Result<Self, ModelError> {
        if psi.is_finite() && psi > 0.0 {
            Ok(Self(psi))
        } else {
            Err(ModelError::PriorOdds(psi))
        }
    }

    pub fn from_probability(pi: f64) -> Result<Self, ModelError> {
        if pi > 0.0 && pi < 1.0 {
            Self::new(pi / (1.0 - pi))
        } else {
            Err(ModelError::PriorProbability(pi))
        }
    }

    pub fn psi(&self) -> f64 {
        self.0
    }

    /// Prior probability `pi = psi / (1 + psi)` of `H1`.
    pub fn probability(&self) -> f64 {
        self.0 / (1.0 + self.0)
    }
}

/// Posterior odds and probability for a given likelihood ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Posterior {
    pub psi: f64,
    pub pi: f64,
}

pub fn posterior(prior: PriorOdds, l: f64) -> Posterior {
    let psi = prior.psi() * l;
    Posterior {
        psi,
        pi: psi / (1.0 + psi),
    }
}

/// Snapshot of the observation at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LikelihoodState {
    pub t: f64,
    pub n: u64,
    pub l: f64,
    pub psi_t: f64,
    pub pi_t: f64,
}

impl LikelihoodState {
    pub fn at(model: &Model, prior: PriorOdds, t: f64, n: u64) -> Self {
        Self::from_likelihood(prior, t, n, model.likelihood(t, n))
    }

    pub(crate) fn from_likelihood(prior: PriorOdds, t: f64, n: u64, l: f64) -> Self {
        let post = posterior(prior, l);
        Self {
            t,
            n,
            l,
            psi_t: post.psi,
            pi_t: post.pi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Stopping immediately is optimal for every prior.
    Trivial,
    NonTrivial,
}

/// `Trivial` iff `lambda1 - lambda0 <= 1/a + 1/b`.
pub fn classify_regime(model: &Model, costs: &Costs) -> Regime {
    if model.decay_rate() <= 1.0 / costs.a() + 1.0 / costs.b() {
        Regime::Trivial
    } else {
        Regime::NonTrivial
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "H0")]
    AcceptH0,
    #[serde(rename = "H1")]
    AcceptH1,
}

/// Terminal decision at posterior odds `psi_at_stop`. Ties (`a * psi == b`)
/// resolve to `AcceptH0`.
pub fn decide(costs: &Costs, psi_at_stop: f64) -> Decision {
    if costs.a() * psi_at_stop > costs.b() {
        Decision::AcceptH1
    } else {
        Decision::AcceptH0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn m(l0: f64, l1: f64) -> Model {
        Model::new(l0, l1).unwrap()
    }

    fn c(a: f64, b: f64) -> Costs {
        Costs::new(a, b).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Model::new(1.0, 1.0).is_err());
        assert!(Model::new(2.0, 1.0).is_err());
        assert!(Model::new(0.0, 1.0).is_err());
        assert!(Model::new(f64::NAN, 1.0).is_err());
        assert!(Costs::new(0.0, 1.0).is_err());
        assert!(Costs::new(1.0, -2.0).is_err());
        assert!(PriorOdds::new(0.0).is_err());
        assert!(PriorOdds::new(f64::INFINITY).is_err());
        assert!(PriorOdds::from_probability(1.0).is_err());
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(&m(1.0, 5.0), &c(2.0, 2.0)), Regime::NonTrivial);
        assert_eq!(classify_regime(&m(1.0, 1.5), &c(2.0, 2.0)), Regime::Trivial);
        // boundary: 1 == 1/1 + 1/1 is not > so still trivial
        assert_eq!(classify_regime(&m(1.0, 2.0), &c(1.0, 1.0)), Regime::Trivial);
    }

    #[test]
    fn likelihood_values() {
        assert_eq!(m(0.3, 7.0).likelihood(0.0, 0), 1.0);
        assert_relative_eq!(m(1.0, 5.0).likelihood(1.0, 0), (-4.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(m(1.0, 5.0).likelihood(1.0, 0), 0.018316, epsilon = 1e-6);
        assert_relative_eq!(m(1.0, 5.0).likelihood(0.5, 2), 25.0 * (-2.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(m(1.0, 5.0).likelihood(0.5, 2), 3.3834, epsilon = 1e-4);
        // log space keeps large counts finite
        assert!(m(1.0, 5.0).likelihood(200.0, 400).is_finite());
    }

    #[test]
    fn posterior_values() {
        let p = posterior(PriorOdds::new(1.0).unwrap(), 1.0);
        assert_eq!((p.psi, p.pi), (1.0, 0.5));
        let p = posterior(PriorOdds::new(3.0).unwrap(), 1.0);
        assert_eq!((p.psi, p.pi), (3.0, 0.75));
        let p = posterior(PriorOdds::new(0.977).unwrap(), (-4.0f64).exp());
        assert_relative_eq!(p.psi, 0.977 * (-4.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(p.psi, 0.017895, epsilon = 1e-6);
        assert_relative_eq!(PriorOdds::from_probability(0.75).unwrap().psi(), 3.0, max_relative = 1e-15);
    }

    #[test]
    fn state_matches_closed_form() {
        let model = m(1.0, 5.0);
        let s = LikelihoodState::at(&model, PriorOdds::new(2.0).unwrap(), 0.5, 2);
        assert_relative_eq!(s.l, 25.0 * (-2.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(s.psi_t, 2.0 * s.l, max_relative = 1e-15);
        assert_relative_eq!(s.psi_t, s.pi_t / (1.0 - s.pi_t), max_relative = 1e-12);
    }

    #[test]
    fn decisions() {
        assert_eq!(decide(&c(2.0, 2.0), 3.0), Decision::AcceptH1);
        assert_eq!(decide(&c(2.0, 2.0), 0.3), Decision::AcceptH0);
        assert_eq!(decide(&c(1.0, 2.0), 2.0), Decision::AcceptH0);
    }

    #[test]
    fn decision_serializes_as_hypothesis_label() {
        assert_eq!(serde_json::to_string(&Decision::AcceptH1).unwrap(), "\"H1\"");
        let model: Result<Model, _> = serde_json::from_str(r#"{"lambda0": 2.0, "lambda1": 1.0}"#);
        assert!(model.is_err());
    }

    proptest! {
        #[test]
        fn likelihood_monotone(l0 in 0.1f64..5.0, gap in 0.1f64..5.0, t in 0.0f64..10.0, dt in 1e-3f64..1.0, n in 0u64..50) {
            let model = m(l0, l0 + gap);
            let here = model.likelihood(t, n);
            prop_assert!(here > 0.0);
            prop_assert!(model.likelihood(t + dt, n) < here);
            prop_assert!(model.likelihood(t, n + 1) > here);
        }

        #[test]
        fn posterior_monotone_in_likelihood(psi in 1e-3f64..1e3, l in 1e-3f64..1e3, k in 1.001f64..10.0) {
            let prior = PriorOdds::new(psi).unwrap();
            prop_assert!(posterior(prior, l * k).pi > posterior(prior, l).pi);
        }

        #[test]
        fn decide_depends_on_sign_only(a in 0.1f64..10.0, b in 0.1f64..10.0, psi in 0.0f64..10.0, s in 0.1f64..10.0) {
            // scaling both costs by s leaves the sign of a*psi - b unchanged up to rounding
            let d = decide(&c(a, b), psi);
            let expect = if a * psi - b > 0.0 { Decision::AcceptH1 } else { Decision::AcceptH0 };
            prop_assert_eq!(d, expect);
            if (a * psi - b).abs() > 1e-9 * b {
                prop_assert_eq!(decide(&c(a * s, b * s), psi), d);
            }
        }
    }
}
