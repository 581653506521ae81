//! Scaling of the fluctuation and modulation residual with h: a static-trap
//! study over geometric h values with horizon 2/h, fitted on log-log axes.
//!
//! `cargo run --release --example h_scaling`

use soliton_lab::lab::h_scaling_study;
use soliton_lab::ScenarioConfig;

fn main() -> soliton_lab::Result<()> {
    let mut base = ScenarioConfig::from_toml(include_str!("configs/static_trap.toml"))?;
    base.output_dir = std::env::temp_dir().join("soliton-lab-h-scaling");
    let study = h_scaling_study(&base, &[0.1, 0.05, 0.025])?;
    for e in &study.entries {
        match (&e.summary, &e.error) {
            (Some(s), _) => println!(
                "h = {:<6} T = {:>5.1}  sup|w|_H1 = {:.4e}  sup|alpha| = {:.4e}",
                e.h,
                s.final_time,
                s.sup_w_h1,
                s.sup_alpha.unwrap_or(f64::NAN)
            ),
            (None, err) => println!("h = {:<6} failed: {err:?}", e.h),
        }
    }
    if let (Some(w), Some(a)) = (&study.w_fit, &study.alpha_fit) {
        println!("slope of sup|w|: {:.3} (r² {:.4}); slope of sup|alpha|: {:.3} (r² {:.4})", w.slope, w.r_squared, a.slope, a.r_squared);
    }
    Ok(())
}
