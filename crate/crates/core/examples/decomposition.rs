//! Skew-orthogonal decomposition ψ = T_σ(η_μ + w): recover the parameters of
//! a perturbed soliton and check the constraints on w.
//!
//! `cargo run --release --example decomposition`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soliton_lab::decompose::{compose_field, random_skew_orthogonal};
use soliton_lab::{skew_project, Grid, ManifoldChart, ModulationParams, Nonlinearity};

fn main() -> soliton_lab::Result<()> {
    let chart = ManifoldChart::new(Nonlinearity::cubic(), Grid::line(60.0, 2048)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sigma = ModulationParams::new(vec![1.3], vec![-0.4], 2.0, 1.2)?;
    let point = chart.point(sigma.mu)?;
    for size in [0.0, 0.01, 0.05, 0.1] {
        let w = random_skew_orthogonal(&point, &mut rng).scale(size);
        let psi = compose_field(&chart, &sigma, &w)?;
        // start from a nearby but wrong guess
        let guess = ModulationParams::new(vec![1.28], vec![-0.39], 1.98, 1.19)?;
        let d = skew_project(&psi, &guess, &chart)?;
        let err = d.sigma.to_vec().iter().zip(sigma.to_vec()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        println!(
            "|w|_H1 = {size:.2}: sigma error {err:.1e}, recovered |w| = {:.4}, constraints {:.1e}, {} Newton steps",
            d.w_h1, d.constraint_residual, d.iterations
        );
    }
    // the Newton solve requires the guess to lie in the tube around ψ
    let far = ModulationParams::new(vec![0.0], vec![0.0], 0.0, 1.0)?;
    match skew_project(&compose_field(&chart, &sigma, &point.eta().scale(0.0))?, &far, &chart) {
        Err(e) => println!("guess outside the tube: {e}"),
        Ok(d) => println!("unexpected convergence to {:?}", d.sigma),
    }
    Ok(())
}
