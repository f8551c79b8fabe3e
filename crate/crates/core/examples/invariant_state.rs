// Invariant state of a finite walk; seeded there, the chain is homogeneous.

use std::error::Error;

use oqrw::evolution::trajectory;
use oqrw::fixtures;
use oqrw::invariant::invariant_state;
use oqrw::qmc::{self, BlockObservable};
use oqrw::SiteId;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let model = fixtures::unitary_column_ring(5, 0.6);
    let omega = invariant_state(&model, 1e-12, 10_000)?.found().ok_or("no invariant state")?;
    println!("residual {:.2e} via {:?} after {} iterations", omega.residual, omega.method, omega.iterations);
    println!("invariant for its chain: {}", qmc::is_invariant_state(&model, &omega.state, 1e-10)?);

    let traj = trajectory(&model, &omega.state, 10)?;
    let x = BlockObservable::identity();
    let y = BlockObservable::at_site(SiteId(2), fixtures::maximally_mixed(2));
    let first = qmc::transition_expectation(&traj, 0, &x, &y)?;
    let drift = (1..=10)
        .map(|n| qmc::transition_expectation(&traj, n, &x, &y).map(|e| e.max_entry_distance(&first, 2)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("max change of E⁽ⁿ⁾ over n ≤ 10: {drift:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
