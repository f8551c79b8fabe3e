// Load a JSON model, run the command-line front end in-process and read
// its CSV output.

use std::error::Error;

use oqrw::cli;
use oqrw::document;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let text = std::fs::read_to_string(format!("{dir}/two_closed_classes.json"))?;
    let model = document::load_model(&text)?;
    println!("loaded {} model on {} sites", model.kind(), model.num_sites());

    let mut out = Vec::new();
    let mut err = Vec::new();
    let model_path = format!("{dir}/two_closed_classes.json");
    let state_path = format!("{dir}/state_class_23.json");
    let code = cli::run(
        ["oqrw", "evolve", "--model", &model_path, "--state", &state_path, "--steps", "3"],
        &mut out,
        &mut err,
    );
    let csv = String::from_utf8(out)?;
    println!("exit {code}, {} CSV rows", csv.lines().count() - 1);
    for line in csv.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
