//! When lambda1 - lambda0 <= 1/a + 1/b no observation is worth its cost: the
//! test stops at once and the least favorable prior odds are b/a.
//!
//! cargo run --release --example trivial_regime

use poisson_minimax::lfd::{find_lfd, jbar_immediate, LfdConfig};
use poisson_minimax::model::{classify_regime, Costs, Model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Model::new(1.0, 1.5)?;
    let costs = Costs::new(2.0, 3.0)?;
    println!("regime: {:?}", classify_regime(&model, &costs));
    let r = find_lfd(&model, &costs, &LfdConfig::for_problem(&model, &costs))?;
    println!("phi0 = {:?} (b/a = {})", r.phi0, costs.indifference_odds());
    for psi in [0.5, 1.0, 1.5, 2.0, 4.0] {
        println!("Jbar({psi}; 0) = {:.5}", jbar_immediate(&costs, psi));
    }
    Ok(())
}
