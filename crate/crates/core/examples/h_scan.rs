//! The function h across the continuation region with common random numbers.
//! Its sign change marks the least favorable prior odds.
//!
//! cargo run --release --example h_scan -- [n_paths]

use poisson_minimax::boundary::{solve_boundaries, DpConfig, DEFAULT_CONTACT_TOL};
use poisson_minimax::lfd::estimate_h;
use poisson_minimax::model::{Costs, Model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Model::new(1.0, 5.0)?;
    let costs = Costs::new(2.0, 2.0)?;
    let n: u64 = std::env::args().nth(1).map_or(Ok(200_000), |s| s.parse())?;
    let (b, _) = solve_boundaries(&model, &costs, &DpConfig::for_problem(&model, &costs), DEFAULT_CONTACT_TOL)?;
    println!("continuation region ({:.4}, {:.4}), {n} paths per point", b.alpha_star, b.beta_star);
    println!("{:>8} {:>10} {:>8} {:>8}", "phi", "h", "se", "P(low)");
    let (lo, hi) = (b.alpha_star * 1.001, b.beta_star * 0.999);
    for i in 0..=12 {
        let phi = lo * (hi / lo).powf(i as f64 / 12.0);
        let e = estimate_h(&model, &costs, &b, phi, n, 11)?;
        println!("{:8.4} {:10.4} {:8.4} {:8.4}", phi, e.h, e.se, e.p_lower);
    }
    Ok(())
}
