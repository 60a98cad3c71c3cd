//! The functions f0, f1 on [alpha*/beta*, 1] and the two routes to gamma*.
//!
//! cargo run --release --example fode_gamma

use poisson_minimax::boundary::{solve_boundaries, DpConfig, DEFAULT_CONTACT_TOL};
use poisson_minimax::fode::{solve_fode, FodeConfig};
use poisson_minimax::lfd::gamma_mc;
use poisson_minimax::model::{Costs, Model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Model::new(1.0, 5.0)?;
    let costs = Costs::new(2.0, 2.0)?;
    let (b, _) = solve_boundaries(&model, &costs, &DpConfig::for_problem(&model, &costs), DEFAULT_CONTACT_TOL)?;
    let r = b.ratio();
    let sol = solve_fode(&model, &costs, r, &FodeConfig::default())?;

    // On [lambda0/lambda1, 1] the advanced argument sits in the tail, so f0
    // has the closed form phi^(-lambda0 / (lambda1 - lambda0)).
    let exponent = -model.lambda0() / model.decay_rate();
    let seg_err = sol
        .grid
        .iter()
        .zip(&sol.f0)
        .filter(|(p, _)| **p >= 0.2)
        .map(|(p, f)| (f - p.powf(exponent)).abs())
        .fold(0.0, f64::max);
    println!("ratio r = {r:.5}");
    println!("f0 closed-form segment error: {seg_err:.2e}");
    println!("ODE residual: {:.2e}", sol.max_residual(&model, &costs));
    let last = sol.grid.len() - 1;
    println!("f0(r) = {:.5}  f1(r) = {:.5}", sol.f0[last], sol.f1[last]);

    let mc = gamma_mc(&model, &costs, r, 200_000, 7)?;
    println!("gamma*: ODE {:.4}, Monte Carlo {:.4} ± {:.4}", sol.gamma_star, mc.value, mc.se);
    // P0(lower exit) = 1 / f0(r)
    println!(
        "p_lower * f0(r) = {:.4} ± {:.4}",
        mc.p_lower.value * sol.f0[last],
        mc.p_lower.se * sol.f0[last]
    );
    Ok(())
}
