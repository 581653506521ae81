//! Ground-state profiles for the cubic and Hartree nonlinearities, the mass
//! curve m(μ) and the conditioning of the tangent-space Gram matrix.
//!
//! `cargo run --release --example soliton_profile`

use soliton_lab::model::Kernel;
use soliton_lab::soliton::{condition_number, gram_matrix, tangent_basis};
use soliton_lab::{solve_profile, Grid, Nonlinearity};

fn main() -> soliton_lab::Result<()> {
    let grid = Grid::line(60.0, 2048)?;
    let cases = [
        ("cubic", Nonlinearity::cubic()),
        ("septic", Nonlinearity::local_power(1.0, 3.0, 1)?),
        ("hartree", Nonlinearity::hartree(2.0, Kernel::Gaussian { width: 1.0 })?),
    ];
    println!("{:<8} {:>5} {:>12} {:>12} {:>10} {:>10}", "f", "mu", "m(mu)", "m'(mu)", "residual", "cond(G)");
    for (name, nl) in &cases {
        for mu in [0.5, 1.0, 2.0] {
            let p = solve_profile(nl, mu, &grid)?;
            let cond = condition_number(&gram_matrix(&tangent_basis(&p)));
            println!("{name:<8} {mu:>5} {:>12.8} {:>12.8} {:>10.2e} {:>10.2e}", p.mass, p.mass_slope, p.residual, cond);
        }
    }
    // the cubic profile is √(2μ) sech(√μ x), so m(μ) = 2√μ
    let p = solve_profile(&Nonlinearity::cubic(), 1.0, &grid)?;
    println!("cubic mu = 1: m = {:.10} (exact 2), m' = {:.8} (exact 1)", p.mass, p.mass_slope);
    Ok(())
}
