// Combined reducibility verdicts for the reference walks.

use std::error::Error;

use oqrw::evolution::BlockState;
use oqrw::linalg::{self, c};
use oqrw::reducibility::{analyze, AnalyzeConfig, Status};
use oqrw::{fixtures, OqrwModel, SiteId};

fn point(hdim: usize) -> BlockState {
    let mut rho = linalg::zeros(hdim);
    rho[(0, 0)] = c(1.0, 0.0);
    BlockState::localized(SiteId(0), rho).expect("unit trace")
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let cases: Vec<(&str, OqrwModel, BlockState)> = vec![
        ("rank-one pair", fixtures::rank_one_walk(12), point(2)),
        ("antidiagonal pair", fixtures::antidiagonal_walk(12), point(2)),
        ("three-level walk", fixtures::three_level_walk(12), point(3)),
        (
            "unitary columns on a ring",
            fixtures::unitary_column_ring(5, 0.6),
            BlockState::localized(SiteId(0), fixtures::maximally_mixed(2))?,
        ),
    ];
    let cfg = AnalyzeConfig::default();
    for (name, model, rho0) in cases {
        let report = analyze(&model, &rho0, &cfg)?;
        print!("{name:28} {}", report.verdict.status.label());
        if let Status::Reducible(fam) = &report.verdict.status {
            // every visited site carries the same projection here
            let h = fam.p.values().next().expect("nonempty family");
            let entries: Vec<String> = h.iter().map(|z| format!("{:+.3}", z.re)).collect();
            print!("  h = [{}]", entries.join(", "));
        }
        println!();
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
