//! Least favorable prior odds for lambda0 = 1, lambda1 = 5, a = b = 2, with
//! the saddle-point sweep of the resulting rule.
//!
//! cargo run --release --example find_lfd -- [n_paths]

use std::time::Instant;

use poisson_minimax::lfd::{find_lfd, LfdConfig, LfdStatus};
use poisson_minimax::model::{Costs, Model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Model::new(1.0, 5.0)?;
    let costs = Costs::new(2.0, 2.0)?;
    let mut config = LfdConfig::for_problem(&model, &costs);
    if let Some(n) = std::env::args().nth(1) {
        config.n_paths = n.parse()?;
    }

    let start = Instant::now();
    let r = find_lfd(&model, &costs, &config)?;
    let b = r.boundaries.expect("non-trivial regime");
    let g = r.gamma_star.expect("non-trivial regime");
    println!("alpha* = {:.4}  beta* = {:.4}", b.alpha_star, b.beta_star);
    println!("gamma*: fode {:.4}, mc {:.4} ± {:.4}", g.fode, g.mc, g.mc_se);
    if let Some(h1) = r.h_at_even_odds {
        println!("h(1) = {:.4} ± {:.4}", h1.h, h1.se);
    }
    if r.status != LfdStatus::Found {
        println!("status: {:?}", r.status);
        return Ok(());
    }
    let phi0 = r.phi0.unwrap_or(f64::NAN);
    let (lo, hi) = r.likelihood_interval.unwrap_or((f64::NAN, f64::NAN));
    println!("phi0 = {phi0:.4}  (prior probability of H0 {:.4})", phi0 / (1.0 + phi0));
    println!("stop when L leaves ({lo:.4}, {hi:.4})");
    if let Some(c) = r.confirmation {
        println!("independent check: h(phi0) = {:.5} ± {:.5}", c.h, c.se);
    }
    println!(
        "saddle: argmax psi = {:.4}, max excess = {:.2} se, peak within one step of phi0: {}",
        r.saddle.argmax_psi, r.saddle.max_excess_se, r.saddle.peak_near_phi0
    );
    println!("{} h evaluations in {:.2?}", r.prescan.len() + r.bisection.len(), start.elapsed());
    Ok(())
}
