//! Under H0 the likelihood ratio is a mean-one martingale. Its variance
//! grows like exp((lambda1 - lambda0)^2 T / lambda0), so the check gets
//! noisy quickly with the horizon.
//!
//! cargo run --release --example martingale

use poisson_minimax::pathsim::estimate_horizon_mean;
use poisson_minimax::model::Model;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Model::new(1.0, 5.0)?;
    for t in [0.5, 1.0, 2.0] {
        let e = estimate_horizon_mean(&model, t, 100_000, 3)?;
        println!("T = {t}: mean L_T = {:.4} ± {:.4}  (z = {:+.2})", e.value, e.se, (e.value - 1.0) / e.se);
    }
    Ok(())
}
