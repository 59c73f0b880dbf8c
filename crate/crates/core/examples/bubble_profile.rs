//! Closed-form bubble mass and energy, checked against direct radial
//! integration of their densities.

use tm_extremal::bubble::{liouville_mass, BubbleProfile};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn main() -> tm_extremal::Result<()> {
    for beta in [0.1, 0.25, 0.5, 0.75] {
        let b = BubbleProfile::new(beta)?;
        // Integrate in s = ln r from r = 1e-30 to r = 10.
        let radial = |dens: &dyn Fn(f64) -> f64| simpson(|s| dens(s.exp()) * s.exp(), (1e-30f64).ln(), 10f64.ln(), 40_000);
        let mass = radial(&|r| b.mass_density(r));
        let energy = radial(&|r| b.energy_density(r));
        println!(
            "beta {beta:.2}: mass(10) {:.10} vs {mass:.10}, energy(10) {:.10} vs {energy:.10}, liouville mass {:.4}",
            b.mass(10.0),
            b.energy(10.0),
            liouville_mass(beta)?
        );
    }
    let b = BubbleProfile::new(0.5)?;
    println!("\nenergy minus its large-R expansion at beta = 1/2:");
    for r in [1.0, 10.0, 100.0, 1000.0] {
        println!("  R = {r:6}: {:+.3e}", b.energy(r) - b.energy_asymptotic(r));
    }
    Ok(())
}
