//! The least favorable prior computed from externally supplied thresholds
//! alpha* = 0.297, beta* = 2.390 instead of value iteration.
//!
//! cargo run --release --example given_boundaries

use poisson_minimax::boundary::Boundaries;
use poisson_minimax::lfd::{find_lfd, LfdConfig};
use poisson_minimax::model::{Costs, Model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Model::new(1.0, 5.0)?;
    let costs = Costs::new(2.0, 2.0)?;
    let config = LfdConfig {
        boundaries: Some(Boundaries::new(0.297, 2.390)?),
        n_paths: 400_000,
        ..LfdConfig::for_problem(&model, &costs)
    };
    let r = find_lfd(&model, &costs, &config)?;
    let g = r.gamma_star.expect("non-trivial regime");
    println!("gamma*: ODE {:.4}, Monte Carlo {:.4} ± {:.4}", g.fode, g.mc, g.mc_se);
    if let Some(h1) = r.h_at_even_odds {
        println!("h(1) = {:.4} ± {:.4}", h1.h, h1.se);
    }
    if let (Some(phi0), Some((lo, hi))) = (r.phi0, r.likelihood_interval) {
        println!("phi0 = {phi0:.4}, L-interval ({lo:.4}, {hi:.4})");
    }
    Ok(())
}
