// Zero-coupon and defaultable bonds in a quadratic short-rate model
// `r_t = ξ(t) + tr(X_t^T Q X_t)`.

use nalgebra::DMatrix;
use volterra_wishart::covariance::{fbm_covariance, ForwardCurve};
use volterra_wishart::kernels::{ExpSumKernel, VolterraKernel};
use volterra_wishart::pricing::{bond_price, defaultable_bond_price, Backend, ShortRateSpec, VolterraModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let q = DMatrix::from_element(1, 1, 1.0);
    let bm = VolterraModel::from_kernel(VolterraKernel::constant_scalar(1.0), ForwardCurve::zero(1, 1), 1)?;
    let spec = ShortRateSpec::flat(q.clone(), 0.0);
    println!(
        "Brownian factor, lift:         {:.6}",
        bond_price(&spec, &bm, 0.0, 1.0, Backend::lift())?
    );
    println!(
        "Brownian factor, fredholm 500: {:.6}",
        bond_price(&spec, &bm, 0.0, 1.0, Backend::fredholm(500))?
    );

    let rough = VolterraModel::from_covariance(fbm_covariance(0.1)?, ForwardCurve::zero(1, 1), 1)?;
    println!(
        "fBM H = 0.1, fredholm 500:     {:.6}",
        bond_price(&spec, &rough, 0.0, 1.0, Backend::fredholm(500))?
    );

    let two_factor = VolterraModel::from_kernel(
        VolterraKernel::exp_sum(ExpSumKernel::scalar(&[(0.8, 0.3), (0.4, 5.0)])?),
        ForwardCurve::scalar(0.1),
        1,
    )?;
    let curve = ShortRateSpec::new(q * 0.5, |s| 0.02 + 0.01 * s);
    println!("term structure:");
    for maturity in [0.5, 1.0, 2.0, 5.0] {
        let p = bond_price(&curve, &two_factor, 0.0, maturity, Backend::lift())?;
        println!("  T = {maturity}: P = {p:.6}, yield = {:.4}", -p.ln() / maturity);
    }
    let risky = curve.with_spread(DMatrix::from_element(1, 1, 0.3), |_| 0.01);
    println!(
        "defaultable, T = 2: {:.6}",
        defaultable_bond_price(&risky, &two_factor, 0.0, 2.0, Backend::lift())?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
