//! A free soliton run through the scenario pipeline: the decomposed center
//! follows a₀ + vt and μ stays constant.
//!
//! `cargo run --release --example free_soliton`

use soliton_lab::{run_scenario, ScenarioConfig};

fn main() -> soliton_lab::Result<()> {
    let mut config = ScenarioConfig::from_toml(include_str!("configs/free_soliton.toml"))?;
    config.output_dir = std::env::temp_dir().join("soliton-lab-free-soliton");
    let out = run_scenario(&config)?;
    let s = out.summary();
    for row in out.data.decomposition.iter().step_by(20) {
        let exact = config.sigma0.a[0] + config.sigma0.v[0] * row.t;
        println!("t = {:>5.2}  a = {:+.10}  a0 + vt = {exact:+.10}  |w|_H1 = {:.2e}", row.t, row.sigma.a[0], row.w_h1);
    }
    println!("max |a - (a0 + vt)| = {:.2e}", s.free_motion_error.unwrap_or(f64::NAN));
    println!("mu drift = {:.2e}, charge drift = {:.2e}", s.mu_drift, s.charge_drift);
    println!("artifacts in {}", out.artifacts.dir.display());
    Ok(())
}
