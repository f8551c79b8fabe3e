// A classical chain embedded as a walk: the trajectory is `ρ⁰Pⁿ` and the
// communicating classes match the invariant-family search.

use std::error::Error;

use nalgebra::RowDVector;
use oqrw::evolution::{classical_embed, classical_state, probability_vector, trajectory};
use oqrw::fixtures;
use oqrw::reducibility::{classical_classes, cp};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let p = fixtures::transient_into_closed();
    let model = classical_embed(&p)?;
    let start = [1.0, 0.0, 0.0, 0.0];
    let traj = trajectory(&model, &classical_state(&start)?, 30)?;

    let mut row = RowDVector::from_row_slice(&start);
    let mut worst: f64 = 0.0;
    for state in traj.states() {
        let got = probability_vector(state, 4);
        worst = worst.max(got.iter().zip(row.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        row = &row * &p;
    }
    println!("max |ρ⁰Pⁿ − trajectory| over 30 steps: {worst:.2e}");

    let classes = classical_classes(&p, 1e-14)?;
    for (class, closed) in classes.classes.iter().zip(&classes.closed) {
        let ids = class;
        println!("class {ids:?} {}", if *closed { "closed" } else { "transient" });
    }
    let verdict = cp::cp_irreducible(&model, 1e-10, cp::default_rounds(&model));
    println!("irreducible by classes: {}, invariant-family search: {}", classes.irreducible, verdict.status.label());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
