// Convergence of the discretized transform `I^n(H)` of fractional Brownian
// motion towards `I(H) = E[exp(-∫_0^1 (W^H_s)^2 ds)]`.

use volterra_wishart::cli::table1::{compute_table1, write_csv};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let rows = compute_table1(&[0.1, 0.5, 0.9], &[10, 50, 200], None)?;
    let mut out = std::io::stdout().lock();
    write_csv(&rows, &mut out)?;
    for r in rows.iter().filter(|r| r.hurst == 0.5) {
        assert!(r.value < r.reference, "the right-endpoint sum is biased low at H = 1/2");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
