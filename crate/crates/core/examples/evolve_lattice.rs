// Evolve the three-level lattice walk from a point mass and print where the
// probability went.

use std::error::Error;

use oqrw::evolution::{site_distribution, trajectory, BlockState};
use oqrw::linalg::{self, c};
use oqrw::{fixtures, SiteId};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let steps = 12;
    let model = fixtures::three_level_walk(steps as i64 + 2);
    let mut rho = linalg::zeros(3);
    rho[(0, 0)] = c(1.0, 0.0);
    let rho0 = BlockState::localized(SiteId(0), rho)?;

    let traj = trajectory(&model, &rho0, steps)?;
    for (n, state) in traj.states().iter().enumerate().step_by(4) {
        let dist = site_distribution(state);
        let mean: f64 = dist.iter().map(|(s, p)| s.0 as f64 * p).sum();
        println!("n={n:2}  sites={:2}  trace={:.15}  mean position={mean:+.4}", dist.len(), state.total_trace());
    }

    let last = traj.last();
    let spread = last.support();
    println!(
        "after {steps} steps: support {}..{}",
        spread.first().map_or(0, |s| s.0),
        spread.last().map_or(0, |s| s.0)
    );
    assert!((last.total_trace() - 1.0).abs() < 1e-10);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
