//! Online detection over synthetic streams drawn under each hypothesis, and
//! the Bayes risk of the detector recovered from its decisions.
//!
//! cargo run --release --example detect_stream

use poisson_minimax::boundary::Boundaries;
use poisson_minimax::detector::{detect, Detection, Detector, EventStream};
use poisson_minimax::lfd::estimate_jbar;
use poisson_minimax::model::{Costs, Decision, Model, PriorOdds};
use poisson_minimax::rng::RngStream;
use poisson_minimax::stats::Moments;

/// Arrival times at `rate` on `[0, horizon]`.
fn stream(rate: f64, horizon: f64, rng: &mut RngStream) -> Vec<f64> {
    let mut t = 0.0;
    let mut out = Vec::new();
    loop {
        t += rng.exponential(rate);
        if t > horizon {
            return out;
        }
        out.push(t);
    }
}

/// `int_0^t L ds` for `L = (lambda1/lambda0)^N(s) exp(-(lambda1 - lambda0) s)`.
fn integrated_likelihood(model: &Model, events: &[f64], t: f64) -> f64 {
    let c = model.decay_rate();
    let mut start = 0.0;
    let mut level = 1.0;
    let mut total = 0.0;
    for &e in events.iter().chain(std::iter::once(&t)) {
        total += level * ((-c * start).exp() - (-c * e).exp()) / c;
        level *= model.jump_factor();
        start = e;
    }
    total
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Model::new(1.0, 5.0)?;
    let costs = Costs::new(2.0, 2.0)?;
    let b = Boundaries::new(0.297, 2.390)?;
    let prior = PriorOdds::new(0.977)?;

    for (label, rate) in [("H0", model.lambda0()), ("H1", model.lambda1())] {
        let mut rng = RngStream::new(42, 0);
        let events = EventStream::new(stream(rate, 50.0, &mut rng))?.with_horizon(50.0)?;
        match detect(&model, &costs, &b, prior, &events)? {
            Detection::Exit(o) => println!(
                "truth {label}: stop at t = {:.4} after {} events, decide {:?} (psi = {:.4})",
                o.stopped_at, o.events_consumed, o.decision, o.psi_at_stop
            ),
            other => println!("truth {label}: {other:?}"),
        }
    }

    // Feeding events one at a time.
    let mut d = Detector::new(&model, &costs, &b, prior)?.expect("prior inside the region");
    for t in [0.05, 0.11] {
        if let Some(o) = d.event(t) {
            println!("incremental: stopped at {} with {:?}", o.stopped_at, o.decision);
            break;
        }
        println!("incremental: still observing at t = {t}, psi = {:.4}", d.state().psi_t);
    }

    // Under H0 the per-stream loss with prior odds psi is
    // (tau + psi * int L + min(b, a psi L_tau)) / (1 + psi), which the
    // detector reproduces from the decision and the final odds.
    let n = 20_000;
    let psi = prior.psi();
    let mut risk = Moments::default();
    for i in 0..n {
        let mut rng = RngStream::new(9, i);
        let events = EventStream::new(stream(model.lambda0(), 60.0, &mut rng))?.with_horizon(60.0)?;
        let Detection::Exit(o) = detect(&model, &costs, &b, prior, &events)? else {
            unreachable!("prior inside the region")
        };
        let int_l = integrated_likelihood(&model, &events.times()[..o.events_consumed as usize], o.stopped_at);
        let terminal = match o.decision {
            Decision::AcceptH0 => costs.a() * o.psi_at_stop,
            Decision::AcceptH1 => costs.b(),
        };
        risk.push((o.stopped_at + psi * int_l + terminal) / (1.0 + psi));
    }
    let direct = estimate_jbar(&model, &costs, &b, psi, psi, n, 9)?;
    let e = risk.estimate();
    println!("Jbar from detector decisions: {:.4} ± {:.4}", e.value, e.se);
    println!("Jbar from simulated exits:    {:.4} ± {:.4}", direct.value, direct.se);
    Ok(())
}
