//! A soliton carried by a slowly dragged trap: the decomposed center is
//! compared with a(t) = st - s/(hω₀) sin(hω₀t) up to the horizon |log h|/h.
//!
//! `cargo run --release --example adiabatic_transport`

use soliton_lab::modulate::adiabatic_reference;
use soliton_lab::model::PotentialShape;
use soliton_lab::{run_scenario, ScenarioConfig};

fn main() -> soliton_lab::Result<()> {
    let mut config = ScenarioConfig::from_toml(include_str!("configs/adiabatic_transport.toml"))?;
    config.output_dir = std::env::temp_dir().join("soliton-lab-adiabatic");
    let h = config.model.potential.h;
    let PotentialShape::MovingTrap { omega0, ref drift, .. } = config.model.potential.shape else {
        panic!("the sample config drags a trap");
    };
    let s = drift[0];
    let out = run_scenario(&config)?;
    for row in out.data.decomposition.iter().step_by(60) {
        let reference = adiabatic_reference(s, h, omega0, row.t);
        println!("t = {:>6.1}  a = {:+.6}  reference = {reference:+.6}", row.t, row.sigma.a[0]);
    }
    let summary = out.summary();
    println!("horizon {:.1}, max |a - reference| = {:.2e}", summary.horizon, summary.adiabatic_error.unwrap_or(f64::NAN));
    Ok(())
}
