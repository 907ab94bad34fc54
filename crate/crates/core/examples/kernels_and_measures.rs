// Kernels, their admissibility diagnostics, and exponential-sum
// approximations of completely monotone kernels.

use volterra_wishart::kernels::{
    admissibility_report, discretize_measure, geometric_partition, make_bridge_kernel, make_rl_kernel, MeasureSpec,
    VolterraKernel,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for (name, k) in [
        ("RL H=0.1", make_rl_kernel(0.1)?),
        ("RL H=0.7", make_rl_kernel(0.7)?),
        ("bridge T1=2", make_bridge_kernel(2.0, 1.0)?),
        ("constant", VolterraKernel::constant_scalar(1.0)),
    ] {
        let r = admissibility_report(&k, 1.0, 8)?;
        let (h, modulus) = r.continuity_modulus.last().copied().unwrap_or((f64::NAN, f64::NAN));
        println!(
            "{name:12} sup ∫|K|² = {:.4}, modulus at h={h:.4}: {modulus:.3e}",
            r.sup_sq_norm
        );
    }

    let hurst = 0.2;
    let measure = MeasureSpec::riemann_liouville(hurst)?;
    let target = make_rl_kernel(hurst)?;
    for cells in [8, 16, 32] {
        let k = discretize_measure(&measure, &geometric_partition(2.0, cells)?)?;
        let worst = [0.05, 0.2, 0.5, 1.0]
            .iter()
            .map(|t| {
                let exact = target
                    .eval_kernel(*t, 0.0)
                    .ok()
                    .and_then(|v| v.finite())
                    .map(|m| m[(0, 0)]);
                (k.eval(*t)[(0, 0)] - exact.unwrap_or(f64::NAN)).abs()
            })
            .fold(0.0, f64::max);
        println!("{cells:3} cells: max |k_n - k| on probes = {worst:.3e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
