// Brownian motion on [0, 1]: Fredholm determinant, Mercer spectrum and
// resolvent on a grid, against `E[exp(-w ∫ W^2)] = cosh(√(2w))^{-1/2}`.

use nalgebra::DMatrix;
use volterra_wishart::covariance::{brownian_covariance, build_problem, ForwardCurve};
use volterra_wishart::fredholm::{bm_closed_form, discrete_resolvent, laplace_fredholm, mercer_spectrum};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cov = brownian_covariance(1, 0.0);
    let w = DMatrix::from_element(1, 1, 1.0);
    for n in [50, 200, 800] {
        let p = build_problem(&cov, &ForwardCurve::zero(1, 1), &w, 0.0, 1.0, n)?;
        let v = laplace_fredholm(&p, 1)?;
        println!(
            "n = {n:4}: L = {:.8}  (closed form {:.8})",
            v.value(),
            bm_closed_form(1.0)?
        );
    }

    let p = build_problem(&cov, &ForwardCurve::zero(1, 1), &w, 0.0, 1.0, 200)?;
    let spec = mercer_spectrum(&p, true)?;
    println!("leading eigenvalues:");
    for (k, lam) in spec.eigenvalues.iter().take(4).enumerate() {
        let exact = 1.0 / ((k as f64 + 0.5) * std::f64::consts::PI).powi(2);
        println!("  λ_{k} = {lam:.6}  (continuum {exact:.6})");
    }
    let (lo, det, hi) = spec.determinant_bounds();
    println!("1 + 2 tr = {lo:.6} <= det = {det:.6} <= exp(2 tr) = {hi:.6}");

    let r = discrete_resolvent(&p)?;
    let (left, right) = r.residuals(&p);
    println!("resolvent residuals: {left:.1e}, {right:.1e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
