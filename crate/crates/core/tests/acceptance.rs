// Acceptance criteria, one PASS/FAIL line each. Runs with `harness = false`.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use volterra_wishart::cli::table1::discrete_transform;
use volterra_wishart::covariance::{
    brownian_covariance, build_problem, conditional_cov_from_kernel, fbm_covariance, kron, kron_identity, vec,
    ForwardCurve,
};
use volterra_wishart::fredholm::{
    bm_closed_form, discrete_resolvent, laplace_fredholm, marginal_laplace, mercer_eigenvalues,
};
use volterra_wishart::kernels::{ExpSumKernel, VolterraKernel};
use volterra_wishart::lift::{build_lift, gamma_closed_form, solve_riccati_closed_form, solve_riccati_ode};
use volterra_wishart::montecarlo::{
    estimate_marginal_laplace, mc_integrated_laplace, sample_gaussian_paths, MCEstimate,
};
use volterra_wishart::pricing::{
    power_swap_strike, variance_swap_strike, Backend, SwapSpec, VolterraModel, DEFAULT_QUAD_CELLS,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const SEED: u64 = 20_190_601;

const TABLE1_HURST: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const TABLE1_EXPECTED: [(usize, [f64; 5]); 8] = [
    (10, [0.50310, 0.59301, 0.65763, 0.70376, 0.73779]),
    (20, [0.50081, 0.59961, 0.66727, 0.71445, 0.74810]),
    (30, [0.50027, 0.60291, 0.67160, 0.71912, 0.75386]),
    (50, [0.50019, 0.60433, 0.67337, 0.72101, 0.75581]),
    (100, [0.50025, 0.60608, 0.67545, 0.72321, 0.75801]),
    (200, [0.50037, 0.60701, 0.67650, 0.72431, 0.75924]),
    (500, [0.50051, 0.60757, 0.67714, 0.72498, 0.75992]),
    (1000, [0.50058, 0.60776, 0.67735, 0.72520, 0.76015]),
];
const TABLE1_TOL: f64 = 1e-5;
const TABLE1_BUDGET: Duration = Duration::from_secs(60);

const EXACT_HALF: f64 = 0.67757;
const EXACT_HALF_N1000: f64 = 0.67735;
const EXACT_TOL: f64 = 1e-5;
const EXACT_GAP: f64 = 3e-4;

const MC_REFERENCE: [(f64, f64); 4] = [(0.1, 0.50038), (0.3, 0.60748), (0.7, 0.72506), (0.9, 0.76012)];
const MC_PATHS: usize = 10_000;
const MC_STEPS: usize = 1_000;
const MC_SIGMAS: f64 = 3.0;
const MC_BUDGET: Duration = Duration::from_secs(300);

const LIFT_RK4_STEPS: usize = 10_000;
const LIFT_TOL: f64 = 1e-10;
const FREDHOLM_N: usize = 2_000;
const FREDHOLM_TOL: f64 = 5e-4;

const RICCATI_CASES: usize = 20;
const RICCATI_TIMES: usize = 10;
const RICCATI_STEPS: usize = 4_000;
const RICCATI_TOL: f64 = 1e-8;

const RESOLVENT_TOL: f64 = 1e-10;

const KRON_CASES: usize = 100;
const KRON_TOL: f64 = 1e-12;

const MARGINAL_SAMPLES: usize = 1_000_000;

const VSWAP_TOL: f64 = 1e-10;
const PSWAP_TOL: f64 = 1e-6;
const PSWAP_MC_PATHS: usize = 100_000;
const PSWAP_MC_STEPS: usize = 1_000;

fn table1_golden() -> Outcome {
    let start = Instant::now();
    let mut misses = Vec::new();
    let mut worst: f64 = 0.0;
    for (n, row) in TABLE1_EXPECTED {
        for (h, expected) in TABLE1_HURST.iter().zip(row) {
            let v = discrete_transform(*h, n).map_err(|e| e.to_string())?;
            let err = (v - expected).abs();
            worst = worst.max(err);
            if err > TABLE1_TOL {
                misses.push(format!("(H={h}, n={n}): {v:.8} vs {expected}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!("40 cells, max err {worst:.2e}, {:.1}s", elapsed.as_secs_f64());
    if misses.is_empty() && elapsed < TABLE1_BUDGET {
        Ok(detail)
    } else {
        Err(format!("{detail}; {} cells off: {}", misses.len(), misses.join("; ")))
    }
}

fn exact_value() -> Outcome {
    let exact = bm_closed_form(1.0).map_err(|e| e.to_string())?;
    let cosh = 2f64.sqrt().cosh().powf(-0.5);
    let i1000 = discrete_transform(0.5, 1000).map_err(|e| e.to_string())?;
    let detail = format!(
        "closed form {exact:.10}, I^1000 = {i1000:.8}, gap {:.2e}",
        (i1000 - exact).abs()
    );
    let ok = (exact - cosh).abs() < 1e-15
        && (exact - EXACT_HALF).abs() < 0.5e-5
        && (i1000 - EXACT_HALF_N1000).abs() < EXACT_TOL
        && (i1000 - exact).abs() < EXACT_GAP;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mc_validation() -> Outcome {
    let start = Instant::now();
    let grid: Vec<f64> = (1..=MC_STEPS).map(|i| i as f64 / MC_STEPS as f64).collect();
    let w = DMatrix::from_element(1, 1, 1.0);
    let mut parts = Vec::new();
    let mut ok = true;
    for (h, reference) in MC_REFERENCE {
        let cov = fbm_covariance(h).map_err(|e| e.to_string())?;
        let est = mc_integrated_laplace(&cov, &ForwardCurve::zero(1, 1), &grid, &w, MC_PATHS, SEED)
            .map_err(|e| e.to_string())?;
        let inside = est.contains(reference, MC_SIGMAS);
        ok &= inside;
        parts.push(format!(
            "H={h}: {:.5}±{:.5} ({:+.2}σ)",
            est.mean,
            est.stderr,
            (reference - est.mean) / est.stderr
        ));
    }
    let elapsed = start.elapsed();
    let detail = format!("{}, {:.1}s", parts.join(", "), elapsed.as_secs_f64());
    if ok && elapsed < MC_BUDGET {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cross_backend() -> Outcome {
    let exact = -0.5 * 2f64.sqrt().cosh().ln();
    let k = ExpSumKernel::scalar(&[(1.0, 0.0)]).map_err(|e| e.to_string())?;
    let w = DMatrix::from_element(1, 1, 1.0);
    let lift = build_lift(&k, &w, &ForwardCurve::zero(1, 1), 1).map_err(|e| e.to_string())?;
    let rk4 = solve_riccati_ode(&lift, 1.0, LIFT_RK4_STEPS)
        .map_err(|e| e.to_string())?
        .theta[0];
    let closed = solve_riccati_closed_form(&lift, 1.0, 10)
        .map_err(|e| e.to_string())?
        .theta[0];
    let p = build_problem(
        &brownian_covariance(1, 0.0),
        &ForwardCurve::zero(1, 1),
        &w,
        0.0,
        1.0,
        FREDHOLM_N,
    )
    .map_err(|e| e.to_string())?;
    let fred = laplace_fredholm(&p, 1).map_err(|e| e.to_string())?.log_value;
    let (e1, e2, e3) = ((rk4 - exact).abs(), (closed - exact).abs(), (fred - exact).abs());
    let detail = format!("rk4 err {e1:.1e}, closed form err {e2:.1e}, fredholm n={FREDHOLM_N} err {e3:.1e}");
    if e1 < LIFT_TOL && e2 < LIFT_TOL && e3 < FREDHOLM_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose()
}

fn riccati_linearization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..RICCATI_CASES {
        let n = rng.random_range(1..=5);
        let d = rng.random_range(1..=2);
        let terms: Vec<(DMatrix<f64>, f64)> = (0..n)
            .map(|_| {
                let c = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                (c, rng.random_range(0.0..5.0))
            })
            .collect();
        let k = ExpSumKernel::new(terms).map_err(|e| e.to_string())?;
        let w = random_psd(&mut rng, d);
        let lift = build_lift(&k, &w, &ForwardCurve::zero(d, 1), 1).map_err(|e| e.to_string())?;
        let ode = solve_riccati_ode(&lift, 1.0, RICCATI_STEPS).map_err(|e| e.to_string())?;
        for _ in 0..RICCATI_TIMES {
            let node = rng.random_range(0..=RICCATI_STEPS);
            let t = ode.times[node];
            let closed = gamma_closed_form(&lift, 1.0 - t).map_err(|e| e.to_string())?;
            worst = worst.max((closed - &ode.gamma[node]).amax());
        }
    }
    let detail = format!("{RICCATI_CASES} lifts x {RICCATI_TIMES} times, max |Γ diff| {worst:.1e}");
    if worst < RICCATI_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn resolvent_residuals() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [50, 200] {
        for h in [0.1, 0.5, 0.9] {
            let cov = fbm_covariance(h).map_err(|e| e.to_string())?;
            for wv in [0.5, 1.0, 2.0] {
                let w = DMatrix::from_element(1, 1, wv);
                let p = build_problem(&cov, &ForwardCurve::zero(1, 1), &w, 0.0, 1.0, n).map_err(|e| e.to_string())?;
                let r = discrete_resolvent(&p).map_err(|e| e.to_string())?;
                let (a, b) = r.residuals(&p);
                worst = worst.max(a).max(b);
            }
        }
    }
    let detail = format!("18 grids, max residual {worst:.1e}");
    if worst < RESOLVENT_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn well_conditioned(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    random_matrix(rng, d, d) * 0.3 + DMatrix::identity(d, d) * 2.0
}

fn kronecker_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = [0.0f64; 6];
    for _ in 0..KRON_CASES {
        let (p, q, r, s) = (
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
        );
        let a = random_matrix(&mut rng, p, q);
        let x = random_matrix(&mut rng, q, r);
        let b = random_matrix(&mut rng, r, s);
        let lhs = vec(&(&a * &x * &b));
        let rhs = kron(&b.transpose(), &a) * vec(&x);
        worst[0] = worst[0].max((lhs - rhs).amax());

        let m = rng.random_range(1..=4);
        let am = random_matrix(&mut rng, p, m);
        let w = random_matrix(&mut rng, p, p);
        let w = &w * w.transpose();
        let t1 = (am.transpose() * &w * &am).trace();
        let va = vec(&am);
        let t2 = (va.transpose() * kron_identity(m, &w) * &va)[(0, 0)];
        worst[1] = worst[1].max((t1 - t2).abs());

        let c = random_matrix(&mut rng, q, r);
        let d2 = random_matrix(&mut rng, s, p);
        let bb = random_matrix(&mut rng, m, s);
        let lhs = kron(&a, &bb) * kron(&c, &d2);
        let rhs = kron(&(&a * &c), &(&bb * &d2));
        worst[2] = worst[2].max((lhs - rhs).amax());

        let sa = random_matrix(&mut rng, p, p);
        let sb = random_matrix(&mut rng, q, q);
        worst[3] = worst[3].max((kron(&sa, &sb).trace() - sa.trace() * sb.trace()).abs());

        let ia = well_conditioned(&mut rng, p);
        let ib = well_conditioned(&mut rng, q);
        let inv = kron(&ia, &ib).try_inverse().ok_or("singular Kronecker product")?;
        let prod = kron(
            &ia.clone().try_inverse().ok_or("singular")?,
            &ib.try_inverse().ok_or("singular")?,
        );
        worst[4] = worst[4].max((inv - prod).amax());

        let det_lhs = kron_identity(m, &ia).determinant();
        let det_rhs = ia.determinant().powi(m as i32);
        worst[5] = worst[5].max((det_lhs - det_rhs).abs() / det_rhs.abs().max(1.0));
    }
    let detail = format!(
        "{KRON_CASES} instances, max errors {}",
        worst.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>().join(" ")
    );
    if worst.iter().all(|e| *e < KRON_TOL) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn marginal_transform() -> Outcome {
    let sigma = DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.3, 0.6]);
    let kernel = VolterraKernel::constant(sigma).map_err(|e| e.to_string())?;
    let cov = conditional_cov_from_kernel(&kernel, 0.0).map_err(|e| e.to_string())?;
    let g0 = DMatrix::from_row_slice(2, 2, &[0.4, -0.2, 0.1, 0.5]);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let u = random_psd(&mut rng, 2);
    let c = cov.eval(1.0, 1.0).map_err(|e| e.to_string())?;
    let exact = marginal_laplace(&g0, &c, &u, 2).map_err(|e| e.to_string())?;
    let batch = sample_gaussian_paths(&cov, &ForwardCurve::constant(g0), &[1.0], MARGINAL_SAMPLES, SEED)
        .map_err(|e| e.to_string())?;
    let est = estimate_marginal_laplace(&batch, &u).map_err(|e| e.to_string())?;
    let detail = format!("closed form {exact:.6}, MC {:.6}±{:.6}", est.mean, est.stderr);
    if est.contains(exact, MC_SIGMAS) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// independent oracle: E[sqrt(∫_0^1 W_s^2 ds)] with right-endpoint sums
fn bm_sqrt_mc() -> MCEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let dt = 1.0 / PSWAP_MC_STEPS as f64;
    let sd = dt.sqrt();
    let samples: Vec<f64> = (0..PSWAP_MC_PATHS)
        .map(|_| {
            let (mut x, mut acc) = (0.0f64, 0.0f64);
            for _ in 0..PSWAP_MC_STEPS {
                x += sd * rng.sample::<f64, _>(StandardNormal);
                acc += x * x * dt;
            }
            acc.sqrt()
        })
        .collect();
    MCEstimate::from_samples(&samples, PSWAP_MC_STEPS, SEED)
}

fn pricing() -> Outcome {
    let unit = DVector::from_element(1, 1.0);
    let bm = VolterraModel::from_kernel(VolterraKernel::constant_scalar(1.0), ForwardCurve::zero(1, 1), 1)
        .map_err(|e| e.to_string())?;
    let mut vswap_err: f64 = 0.0;
    for t in [0.5, 1.0, 2.0] {
        let f1 = variance_swap_strike(&SwapSpec::new(unit.clone(), 1.0, t).map_err(|e| e.to_string())?, &bm)
            .map_err(|e| e.to_string())?;
        vswap_err = vswap_err.max((f1 - t * t / 2.0).abs());
    }

    let c = 0.7;
    let det = VolterraModel::deterministic(DMatrix::from_element(1, 1, c)).map_err(|e| e.to_string())?;
    let mut pswap_err: f64 = 0.0;
    for i in 1..=9 {
        let q = i as f64 / 10.0;
        let spec = SwapSpec::new(unit.clone(), q, 2.0).map_err(|e| e.to_string())?;
        let fq = power_swap_strike(&spec, &det, Backend::lift(), DEFAULT_QUAD_CELLS).map_err(|e| e.to_string())?;
        pswap_err = pswap_err.max((fq - (c * c * 2.0f64).powf(q)).abs());
    }

    let half = SwapSpec::new(unit, 0.5, 1.0).map_err(|e| e.to_string())?;
    let strike = power_swap_strike(&half, &bm, Backend::lift(), DEFAULT_QUAD_CELLS).map_err(|e| e.to_string())?;
    let mc = bm_sqrt_mc();
    let detail = format!(
        "vswap err {vswap_err:.1e}, pswap deterministic err {pswap_err:.1e}, BM q=1/2 {strike:.5} vs MC {:.5}±{:.5}",
        mc.mean, mc.stderr
    );
    if vswap_err < VSWAP_TOL && pswap_err < PSWAP_TOL && mc.contains(strike, MC_SIGMAS) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn properties() -> Outcome {
    let mut failures = Vec::new();
    let mut spectra = 0;
    for h in [0.1, 0.5, 0.9] {
        let cov = fbm_covariance(h).map_err(|e| e.to_string())?;
        let mut prev = 1.0;
        for wv in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
            let w = DMatrix::from_element(1, 1, wv);
            let p = build_problem(&cov, &ForwardCurve::zero(1, 1), &w, 0.0, 1.0, 100).map_err(|e| e.to_string())?;
            let l = laplace_fredholm(&p, 1).map_err(|e| e.to_string())?.value();
            if !(l > 0.0 && l <= 1.0) {
                failures.push(format!("L out of (0,1] at H={h}, w={wv}: {l}"));
            }
            if l > prev {
                failures.push(format!("L increasing at H={h}, w={wv}"));
            }
            prev = l;
            let spec = mercer_eigenvalues(&p).map_err(|e| e.to_string())?;
            let (lo, d, hi) = spec.determinant_bounds();
            spectra += 1;
            if !(lo <= d * (1.0 + 1e-12) && d <= hi * (1.0 + 1e-12)) {
                failures.push(format!("determinant bounds at H={h}, w={wv}: {lo} {d} {hi}"));
            }
        }
    }

    let cov = fbm_covariance(0.3).map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (1..=50).map(|i| i as f64 / 50.0).collect();
    let w = DMatrix::from_element(1, 1, 1.0);
    let run = |threads: usize| -> Result<f64, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| mc_integrated_laplace(&cov, &ForwardCurve::zero(1, 1), &grid, &w, 5_000, SEED))
            .map(|e| e.mean)
            .map_err(|e| e.to_string())
    };
    let means: Vec<f64> = [1, 2, 4, 7].iter().map(|t| run(*t)).collect::<Result<_, _>>()?;
    if means.iter().any(|m| m.to_bits() != means[0].to_bits()) {
        failures.push(format!("MC differs across thread counts: {means:?}"));
    }
    let detail = format!("21 transforms, {spectra} spectra, MC bitwise equal over 1/2/4/7 threads");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(failures.join("; "))
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("table1_golden", table1_golden),
        ("exact_value", exact_value),
        ("mc_validation", mc_validation),
        ("cross_backend_exactness", cross_backend),
        ("riccati_linearization", riccati_linearization),
        ("resolvent_residuals", resolvent_residuals),
        ("kronecker_identities", kronecker_identities),
        ("marginal_transform", marginal_transform),
        ("pricing", pricing),
        ("properties", properties),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
