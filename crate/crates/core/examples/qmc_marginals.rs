// The chain built on a trajectory reproduces its one-time marginals, and
// the limit operators `b̄` sit at the identity for a trace-preserving walk.

use std::error::Error;

use oqrw::evolution::{trajectory, BlockState};
use oqrw::linalg::{self, real_matrix};
use oqrw::qmc::{self, BlockObservable, CylinderObservable, DEFAULT_HORIZON};
use oqrw::{fixtures, SiteId};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let model = fixtures::unitary_column_ring(5, 0.6);
    let rho0 = BlockState::localized(SiteId(0), fixtures::maximally_mixed(2))?;
    let n = 4;
    let traj = trajectory(&model, &rho0, n + DEFAULT_HORIZON)?;

    // σ_z on site 1 at time n
    let x = real_matrix(&[&[1.0, 0.0], &[0.0, -1.0]]);
    let a = CylinderObservable::single(n, BlockObservable::at_site(SiteId(1), x.clone()));
    let chain = qmc::qmc_evaluate(&traj, &a, DEFAULT_HORIZON)?;
    let direct = traj.states()[n].block(SiteId(1)).map_or(0.0, |b| linalg::trace_product(b, &x).re);
    println!("chain value {:+.12}, direct marginal {:+.12}", chain.re, direct);
    assert!((chain.re - direct).abs() < 1e-9);

    let family = qmc::bbar(&traj, n, DEFAULT_HORIZON, 1e-10)?;
    let worst = family
        .values
        .values()
        .map(|b| linalg::op_norm(&(b - linalg::identity(2))))
        .fold(0.0, f64::max);
    println!("b̄({n}, ·): {} sites, max ‖b̄ − I‖ = {worst:.2e}, converged {}", family.values.len(), family.converged);

    let report = qmc::verify_markov_pair(&traj, n, DEFAULT_HORIZON, 1e-9)?;
    println!("Markov pair residuals within tolerance: {}", report.passed());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
