// Variance, power-variance and inverse-power strikes of a basket
// `α^T X_t X_t^T α`.

use nalgebra::{DMatrix, DVector};
use volterra_wishart::covariance::ForwardCurve;
use volterra_wishart::kernels::{make_rl_kernel, VolterraKernel};
use volterra_wishart::pricing::{
    inverse_power_moment, power_swap_strike, variance_swap_strike, Backend, SwapSpec, VolterraModel, DEFAULT_QUAD_CELLS,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sigma = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.25]);
    let model = VolterraModel::from_kernel(
        VolterraKernel::constant(sigma)?,
        ForwardCurve::constant(DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.2])),
        2,
    )?;
    let alpha = DVector::from_vec(vec![0.6, 0.4]);
    let lift = Backend::lift();
    let f1 = variance_swap_strike(&SwapSpec::new(alpha.clone(), 1.0, 1.0)?, &model)?;
    println!("variance strike: {f1:.6}");
    for q in [0.25, 0.5, 0.75] {
        let spec = SwapSpec::new(alpha.clone(), q, 1.0)?;
        let fq = power_swap_strike(&spec, &model, lift, DEFAULT_QUAD_CELLS)?;
        println!("q = {q}: strike {fq:.6} <= F1^q = {:.6}", f1.powf(q));
    }
    let inv = inverse_power_moment(
        1.0,
        0.05,
        &SwapSpec::new(alpha, 1.0, 1.0)?,
        &model,
        lift,
        DEFAULT_QUAD_CELLS,
    )?;
    println!("E[1 / (V + 0.05)] = {inv:.6}");

    let rough = VolterraModel::from_kernel(make_rl_kernel(0.1)?, ForwardCurve::zero(1, 1), 1)?;
    let unit = SwapSpec::new(DVector::from_element(1, 1.0), 1.0, 1.0)?;
    println!(
        "rough (H = 0.1) variance strike: {:.6}",
        variance_swap_strike(&unit, &rough)?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
