//! Coercivity constant ρ on the skew-orthogonal space and the Lyapunov
//! functional: second-order Taylor behavior and the lower bound
//! ½ρ‖w‖² - c‖w‖³ along random directions.
//!
//! `cargo run --release --example lyapunov`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soliton_lab::decompose::{coercivity_quadform, lyapunov_of, random_skew_orthogonal, rho_estimate};
use soliton_lab::{Grid, ManifoldChart, Nonlinearity};

fn main() -> soliton_lab::Result<()> {
    let chart = ManifoldChart::new(Nonlinearity::cubic(), Grid::line(60.0, 2048)?)?;
    let point = chart.point(1.0)?;
    let rho = rho_estimate(&point)?;
    println!("rho = {:.6} after {} inverse iterations", rho.rho, rho.iterations);

    let profile = &point.profile;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = random_skew_orthogonal(&point, &mut rng);
    let q = coercivity_quadform(&w, profile)?;
    println!("direction with |w|_H1 = 1: quadratic form <Lw, w> = {q:.6} (>= rho)");
    for eps in [1e-1, 1e-2, 1e-3] {
        let lyap = lyapunov_of(profile, &w.scale(eps));
        let ratio = (lyap - 0.5 * eps * eps * q).abs() / eps.powi(3);
        println!("eps = {eps:.0e}: L = {lyap:.6e}, |L - eps²<Lw,w>/2| / eps³ = {ratio:.4}");
    }
    let eta_sup = profile.eta.max_abs();
    for size in [1e-3, 1e-2, 1e-1] {
        let c = eta_sup / 2f64.sqrt() + size / 8.0;
        let w = random_skew_orthogonal(&point, &mut rng).scale(size);
        let bound = 0.5 * rho.rho * size * size - c * size.powi(3);
        println!("|w| = {size:.0e}: L = {:.4e} >= {bound:.4e}", lyapunov_of(profile, &w));
    }
    Ok(())
}
