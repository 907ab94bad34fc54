// Monte Carlo oracle for the discretized transform, with seeded parallel
// streams, and exact OU factor simulation.

use nalgebra::DMatrix;
use volterra_wishart::covariance::{build_problem, fbm_covariance, ForwardCurve};
use volterra_wishart::fredholm::laplace_fredholm;
use volterra_wishart::kernels::ExpSumKernel;
use volterra_wishart::montecarlo::{mc_integrated_laplace, simulate_ou_factors, MCEstimate};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let n = 100;
    let w = DMatrix::from_element(1, 1, 1.0);
    let g = ForwardCurve::zero(1, 1);
    for hurst in [0.1, 0.7] {
        let cov = fbm_covariance(hurst)?;
        let grid: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let est = mc_integrated_laplace(&cov, &g, &grid, &w, 4000, 42)?;
        let exact = laplace_fredholm(&build_problem(&cov, &g, &w, 0.0, 1.0, n)?, 1)?.value();
        println!(
            "H = {hurst}: MC {:.5} ± {:.5}, Fredholm {exact:.5}, inside 3σ: {}",
            est.mean,
            est.stderr,
            est.contains(exact, 3.0)
        );
    }

    let k = ExpSumKernel::scalar(&[(1.0, 2.0)])?;
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let factors = simulate_ou_factors(&k, &grid, 4000, 7, 1)?;
    let sq: Vec<f64> = factors[20].states.iter().map(|y| y[(0, 0)].powi(2)).collect();
    let var = MCEstimate::from_samples(&sq, 20, 7);
    println!(
        "OU variance at t = 1: {:.4} ± {:.4} (exact {:.4})",
        var.mean,
        var.stderr,
        -(-4.0f64).exp_m1() / 4.0
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
