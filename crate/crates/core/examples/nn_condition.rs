// For nearest-neighbour pairs `(B, C)` a proper common range of the two
// operators is exactly what makes the walk reducible.

use std::error::Error;

use oqrw::fixtures;
use oqrw::reducibility::nn_condition_check;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let pairs = [
        ("rank-one", fixtures::rank_one_pair()),
        ("antidiagonal", fixtures::antidiagonal_pair()),
        ("unitary columns", fixtures::unitary_column_pair(0.6)),
    ];
    for (name, (b, c)) in pairs {
        let nn = nn_condition_check(&b, &c, 1e-10)?;
        println!(
            "{name:16} holds={} combined rank={} joint kernel dim={}",
            nn.holds, nn.combined_rank, nn.joint_kernel_dim
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
