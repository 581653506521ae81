//! Floquet multipliers of the effective Mathieu equation
//! ä = -(hω₀)²(1 + δ cos ωt) a across the principal resonance hω₀ = ω/2.
//!
//! `cargo run --release --example mathieu_floquet`

use soliton_lab::modulate::floquet_monodromy;

fn main() -> soliton_lab::Result<()> {
    let (h, omega, delta) = (0.1, 0.2, 0.2);
    println!("{:>7} {:>10} {:>10} {:>12} unstable", "hw0/w", "trace", "|lambda|", "det - 1");
    for i in 0..=20 {
        let ratio = 0.35 + 0.015 * f64::from(i);
        let omega0 = ratio * omega / h;
        let f = floquet_monodromy(h, omega0, omega, delta)?;
        println!(
            "{ratio:>7.3} {:>10.5} {:>10.5} {:>12.1e} {}",
            f.trace,
            f.max_modulus(),
            f.determinant - 1.0,
            if f.unstable { "yes" } else { "" }
        );
    }
    Ok(())
}
