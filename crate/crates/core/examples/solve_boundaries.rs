//! Optimal stopping boundaries for lambda0 = 1, lambda1 = 5, a = b = 2.
//!
//! cargo run --release --example solve_boundaries

use std::time::Instant;

use poisson_minimax::boundary::{solve_boundaries, DpConfig, DEFAULT_CONTACT_TOL};
use poisson_minimax::model::{classify_regime, Costs, Model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Model::new(1.0, 5.0)?;
    let costs = Costs::new(2.0, 2.0)?;
    println!("regime: {:?}", classify_regime(&model, &costs));

    let config = DpConfig::for_problem(&model, &costs);
    let start = Instant::now();
    let (b, grid) = solve_boundaries(&model, &costs, &config, DEFAULT_CONTACT_TOL)?;
    println!(
        "alpha* = {:.4}  beta* = {:.4}  alpha*/beta* = {:.4}",
        b.alpha_star,
        b.beta_star,
        b.ratio()
    );
    println!(
        "V(1) = {:.5}  ({} sweeps, {:.2?})",
        grid.value_at(1.0),
        grid.iterations,
        start.elapsed()
    );
    Ok(())
}
