// Multi-exponential approximation of the rough Riemann–Liouville kernel and
// its Markovian lift: block-exponential vs RK4 Riccati solutions, and
// agreement with the Fredholm backend.

use nalgebra::DMatrix;
use volterra_wishart::covariance::{build_problem, conditional_cov_from_kernel, ForwardCurve};
use volterra_wishart::fredholm::laplace_fredholm;
use volterra_wishart::kernels::{discretize_measure, geometric_partition, MeasureSpec, VolterraKernel};
use volterra_wishart::lift::{build_lift, laplace_lift, solve_riccati_closed_form, solve_riccati_ode, FactorState};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let hurst = 0.3;
    let measure = MeasureSpec::riemann_liouville(hurst)?;
    let k = discretize_measure(&measure, &geometric_partition(2.5, 12)?)?;
    println!(
        "{} exponential terms, rates {:.3e} .. {:.3e}",
        k.len(),
        k.rates()[0],
        k.rates()[k.len() - 1]
    );

    let w = DMatrix::from_element(1, 1, 1.0);
    let g0 = ForwardCurve::scalar(0.0);
    let lift = build_lift(&k, &w, &g0, 1)?;
    let closed = solve_riccati_closed_form(&lift, 1.0, 200)?;
    let v_lift = laplace_lift(&closed, &FactorState::zero(&lift))?;

    let kernel = VolterraKernel::exp_sum(k.clone());
    let p = build_problem(&conditional_cov_from_kernel(&kernel, 0.0)?, &g0, &w, 0.0, 1.0, 400)?;
    let v_fred = laplace_fredholm(&p, 1)?;
    println!("lift {:.6}   fredholm n=400 {:.6}", v_lift.value(), v_fred.value());

    // two factors and a time-dependent mean: block exponential vs RK4
    let smooth = volterra_wishart::kernels::ExpSumKernel::scalar(&[(1.0, 0.5), (0.5, 4.0)])?;
    let mean = ForwardCurve::from_fn(1, 1, |s| DMatrix::from_element(1, 1, 0.3 + 0.2 * s));
    let lift2 = build_lift(&smooth, &w, &mean, 1)?;
    let ode = solve_riccati_ode(&lift2, 1.0, 2000)?;
    let block = solve_riccati_closed_form(&lift2, 1.0, 100)?;
    let half = FactorState {
        y_tilde: DMatrix::from_column_slice(2, 1, &[0.2, -0.1]),
        t: 0.5,
    };
    for (name, state) in [("rk4", &ode), ("block", &block)] {
        println!(
            "two-factor {name:5}: L_0 = {:.10}, L_0.5(Ỹ) = {:.10}",
            laplace_lift(state, &FactorState::zero(&lift2))?.value(),
            laplace_lift(state, &half)?.value()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
