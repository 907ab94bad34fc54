//! Conditional means and covariances of Gaussian Volterra processes and
//! their discretization on a time grid.

mod kronecker;

pub use kronecker::{kron, kron_identity, unvec, vec};

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::kernels::{ExpSumKernel, KernelValue, VolterraKernel};
use crate::linalg::{check_psd, repair_psd, PSD_TOL};
use crate::quadrature::{adaptive, integrate_singular_gap};

type CovFn = Arc<dyn Fn(f64, f64) -> Result<DMatrix<f64>> + Send + Sync>;
type CurveFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Where a covariance function comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CovSource {
    ClosedForm(String),
    Kernel(String),
}

/// `C_t(s, u)`: covariance of the process at times `s, u` given the
/// information at `base_time`.
#[derive(Clone)]
pub struct CovarianceFn {
    eval: CovFn,
    dim: usize,
    base_time: f64,
    source: CovSource,
}

impl fmt::Debug for CovarianceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CovarianceFn")
            .field("dim", &self.dim)
            .field("base_time", &self.base_time)
            .field("source", &self.source)
            .finish()
    }
}

impl CovarianceFn {
    /// Wraps a closed-form covariance. The closure is only called with
    /// `s, u > base_time`.
    pub fn closed_form(
        dim: usize,
        base_time: f64,
        name: impl Into<String>,
        f: impl Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        CovarianceFn {
            eval: Arc::new(move |s, u| Ok(f(s, u))),
            dim,
            base_time,
            source: CovSource::ClosedForm(name.into()),
        }
    }

    pub fn eval(&self, s: f64, u: f64) -> Result<DMatrix<f64>> {
        if !(s >= 0.0 && u >= 0.0) {
            return Err(Error::domain(format!("covariance times must be >= 0, got {s}, {u}")));
        }
        if s.min(u) <= self.base_time {
            return Ok(DMatrix::zeros(self.dim, self.dim));
        }
        (self.eval)(s, u)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base_time(&self) -> f64 {
        self.base_time
    }

    pub fn source(&self) -> &CovSource {
        &self.source
    }
}

/// `C_t(s, u) = ∫_t^{s∧u} K(s, r) K(u, r)^T dr`.
///
/// Exponential-sum and constant kernels use the exact cell integrals; other
/// kernels are integrated numerically, with a graded rule at `r -> s∧u` when
/// the kernel is singular on its diagonal.
pub fn conditional_cov_from_kernel(kernel: &VolterraKernel, t: f64) -> Result<CovarianceFn> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("conditioning time must be >= 0, got {t}")));
    }
    let dim = kernel.dim();
    let source = CovSource::Kernel(kernel.description().to_string());
    if let Some(es) = kernel.as_exp_sum() {
        return Ok(CovarianceFn {
            eval: Arc::new(move |s, u| Ok(exp_sum_cov(&es, t, s, u))),
            dim,
            base_time: t,
            source,
        });
    }
    let k = kernel.clone();
    Ok(CovarianceFn {
        eval: Arc::new(move |s, u| kernel_cov_quadrature(&k, t, s, u)),
        dim,
        base_time: t,
        source,
    })
}

/// `(1 - e^{-a L}) / a`, continuous at `a = 0`.
fn exp_integral(a: f64, len: f64) -> f64 {
    if a == 0.0 {
        len
    } else {
        -(-a * len).exp_m1() / a
    }
}

fn exp_sum_cov(k: &ExpSumKernel, t: f64, s: f64, u: f64) -> DMatrix<f64> {
    let m = s.min(u);
    let d = k.dim();
    let mut acc = DMatrix::zeros(d, d);
    for (ci, xi) in k.terms() {
        for (cj, xj) in k.terms() {
            let factor = (-xi * (s - m) - xj * (u - m)).exp() * exp_integral(xi + xj, m - t);
            if factor != 0.0 {
                acc += ci * cj.transpose() * factor;
            }
        }
    }
    acc
}

fn kernel_cov_quadrature(k: &VolterraKernel, t: f64, s: f64, u: f64) -> Result<DMatrix<f64>> {
    let m = s.min(u);
    let len = m - t;
    let what = format!("C_{t}({s}, {u})");
    if k.dim() == 1 {
        if s == u {
            if let Some(h) = k.hurst() {
                let g = gamma(h + 0.5);
                return Ok(DMatrix::from_element(1, 1, len.powf(2.0 * h) / (2.0 * h * g * g)));
            }
        }
        // v = m - r is the gap to the upper limit
        let f = |v: f64| {
            let r = m - v;
            k.scalar_lag(s, r, s - m + v) * k.scalar_lag(u, r, u - m + v)
        };
        let v = if k.singular_diagonal() {
            integrate_singular_gap(&f, len, 1e-10, &what)?
        } else {
            adaptive(&f, 0.0, len, 1e-10, &what)?
        };
        return Ok(DMatrix::from_element(1, 1, v));
    }
    let f = |v: f64| {
        let r = m - v;
        k.value_lag(s, r, s - m + v) * k.value_lag(u, r, u - m + v).transpose()
    };
    if k.singular_diagonal() {
        integrate_singular_gap(&f, len, 1e-10, &what)
    } else {
        adaptive(&f, 0.0, len, 1e-10, &what)
    }
}

/// Time derivative `∂_t C_t(s, u) = -K(s, t) K(u, t)^T` for `s, u > t`.
pub fn cov_time_derivative(kernel: &VolterraKernel, t: f64, s: f64, u: f64) -> Result<DMatrix<f64>> {
    let ks = kernel.eval_kernel(s, t)?;
    let ku = kernel.eval_kernel(u, t)?;
    match (ks, ku) {
        (KernelValue::Finite(a), KernelValue::Finite(b)) => Ok(-(a * b.transpose())),
        _ => Err(Error::domain("kernel is singular at the requested point")),
    }
}

/// Fractional Brownian motion covariance `½(s^{2H} + u^{2H} - |s-u|^{2H})`.
pub fn fbm_covariance(hurst: f64) -> Result<CovarianceFn> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::domain(format!("Hurst index must lie in (0,1), got {hurst}")));
    }
    let two_h = 2.0 * hurst;
    Ok(CovarianceFn::closed_form(
        1,
        0.0,
        format!("fBM H={hurst}"),
        move |s, u| {
            let v = 0.5 * (s.powf(two_h) + u.powf(two_h) - (s - u).abs().powf(two_h));
            DMatrix::from_element(1, 1, v)
        },
    ))
}

/// Brownian covariance `s ∧ u - t` for a `dim`-dimensional standard
/// Brownian motion conditioned at `t`.
pub fn brownian_covariance(dim: usize, t: f64) -> CovarianceFn {
    CovarianceFn::closed_form(dim, t, "Brownian", move |s, u| {
        DMatrix::identity(dim, dim) * (s.min(u) - t)
    })
}

/// A `d x m` matrix-valued curve `s -> g(s)` (the conditional mean).
#[derive(Clone)]
pub struct ForwardCurve {
    eval: CurveFn,
    rows: usize,
    cols: usize,
    zero: bool,
    constant: bool,
}

impl fmt::Debug for ForwardCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForwardCurve")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("zero", &self.zero)
            .field("constant", &self.constant)
            .finish()
    }
}

impl ForwardCurve {
    pub fn zero(rows: usize, cols: usize) -> Self {
        ForwardCurve {
            eval: Arc::new(move |_| DMatrix::zeros(rows, cols)),
            rows,
            cols,
            zero: true,
            constant: true,
        }
    }

    pub fn constant(value: DMatrix<f64>) -> Self {
        let (rows, cols) = value.shape();
        let zero = value.iter().all(|v| *v == 0.0);
        ForwardCurve {
            eval: Arc::new(move |_| value.clone()),
            rows,
            cols,
            zero,
            constant: true,
        }
    }

    pub fn scalar(c: f64) -> Self {
        Self::constant(DMatrix::from_element(1, 1, c))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        ForwardCurve {
            eval: Arc::new(f),
            rows,
            cols,
            zero: false,
            constant: false,
        }
    }

    pub fn eval(&self, s: f64) -> DMatrix<f64> {
        (self.eval)(s)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// True only when the curve is known to vanish identically.
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// True only when the curve is known not to depend on time.
    pub fn is_constant(&self) -> bool {
        self.constant
    }
}

/// Node placement and weights of the time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridRule {
    /// `s_i = t + i δ`, `i = 1..n`, all weights `δ`.
    #[default]
    RightEndpoint,
    /// `s_i = t + i δ`, `i = 0..n`, weights `δ/2, δ, ..., δ, δ/2`.
    Trapezoid,
}

/// Grid samples of the mean and covariance on `(t, T]`.
#[derive(Debug, Clone)]
pub struct DiscretizedProblem {
    pub t: f64,
    pub horizon: f64,
    pub n: usize,
    pub grid: Vec<f64>,
    /// Quadrature weight of each grid node.
    pub weights: Vec<f64>,
    /// Block `i` (rows `i d .. (i+1) d`) holds `g(s_i)`; one column per
    /// column of the matrix process.
    pub g_stack: DMatrix<f64>,
    /// Block `(i, k)` holds `C(s_i, s_k)`.
    pub c_big: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub delta: f64,
    pub rule: GridRule,
    pub g_is_zero: bool,
}

impl DiscretizedProblem {
    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Number of columns `m` of the matrix process.
    pub fn cols(&self) -> usize {
        self.g_stack.ncols()
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn uniform_weights(&self) -> bool {
        self.weights.iter().all(|w| *w == self.delta)
    }

    /// Debug dump of the full problem.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
        json!({
            "t": self.t,
            "T": self.horizon,
            "n": self.n,
            "delta": self.delta,
            "rule": format!("{:?}", self.rule),
            "grid": self.grid,
            "weights": self.weights,
            "w": rows(&self.w),
            "g_stack": rows(&self.g_stack),
            "c_big": rows(&self.c_big),
        })
    }
}

/// Right-endpoint discretization on `n` cells of `(t, T]`.
pub fn build_problem(
    cov: &CovarianceFn,
    g: &ForwardCurve,
    w: &DMatrix<f64>,
    t: f64,
    horizon: f64,
    n: usize,
) -> Result<DiscretizedProblem> {
    build_problem_with_rule(cov, g, w, t, horizon, n, GridRule::RightEndpoint)
}

pub fn build_problem_with_rule(
    cov: &CovarianceFn,
    g: &ForwardCurve,
    w: &DMatrix<f64>,
    t: f64,
    horizon: f64,
    n: usize,
    rule: GridRule,
) -> Result<DiscretizedProblem> {
    check_psd("w", w, PSD_TOL)?;
    let d = cov.dim();
    if w.nrows() != d {
        return Err(Error::dim(format!(
            "w is {}x{} but the process has dimension {d}",
            w.nrows(),
            w.ncols()
        )));
    }
    let (g_rows, m) = g.shape();
    if g_rows != d || m == 0 {
        return Err(Error::dim(format!(
            "mean curve is {g_rows}x{m}, expected {d}xm with m >= 1"
        )));
    }
    if n == 0 {
        return Err(Error::domain("grid needs n >= 1"));
    }
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::domain(format!("need 0 <= t < T, got t={t}, T={horizon}")));
    }
    if cov.base_time() > t + 1e-12 {
        return Err(Error::domain(format!(
            "covariance is conditioned at {} > t = {t}",
            cov.base_time()
        )));
    }
    let delta = (horizon - t) / n as f64;
    let node = |i: usize| {
        if i == n {
            horizon
        } else {
            t + (horizon - t) * i as f64 / n as f64
        }
    };
    let (grid, weights): (Vec<f64>, Vec<f64>) = match rule {
        GridRule::RightEndpoint => (1..=n).map(|i| (node(i), delta)).unzip(),
        GridRule::Trapezoid => (0..=n)
            .map(|i| (node(i), if i == 0 || i == n { 0.5 * delta } else { delta }))
            .unzip(),
    };
    let size = grid.len() * d;

    let rows: Vec<Vec<DMatrix<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|i| (i..grid.len()).map(|k| cov.eval(grid[i], grid[k])).collect())
        .collect::<Result<_>>()?;
    let mut c_big = DMatrix::zeros(size, size);
    for (i, row) in rows.iter().enumerate() {
        for (off, block) in row.iter().enumerate() {
            let k = i + off;
            c_big.view_mut((i * d, k * d), (d, d)).copy_from(block);
            if k != i {
                c_big.view_mut((k * d, i * d), (d, d)).copy_from(&block.transpose());
            }
        }
    }
    let c_big = repair_psd("C_big", &c_big, PSD_TOL)?;

    let mut g_stack = DMatrix::zeros(size, m);
    if !g.is_zero() {
        for (i, s) in grid.iter().enumerate() {
            let v = g.eval(*s);
            if v.shape() != (d, m) {
                return Err(Error::dim("mean curve returned a matrix of the wrong shape"));
            }
            g_stack.view_mut((i * d, 0), (d, m)).copy_from(&v);
        }
    }
    Ok(DiscretizedProblem {
        t,
        horizon,
        n,
        grid,
        weights,
        g_is_zero: g_stack.iter().all(|v| *v == 0.0),
        g_stack,
        c_big,
        w: w.clone(),
        delta,
        rule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::make_rl_kernel;
    use crate::linalg::max_abs;

    const GAMMA_0_6: f64 = 1.489_192_248_812_817;

    fn scalar(c: &CovarianceFn, s: f64, u: f64) -> f64 {
        c.eval(s, u).unwrap()[(0, 0)]
    }

    #[test]
    fn constant_kernel_gives_brownian_covariance() {
        let c = conditional_cov_from_kernel(&VolterraKernel::constant_scalar(1.0), 0.0).unwrap();
        assert!((scalar(&c, 0.4, 0.9) - 0.4).abs() < 1e-15);
        let shifted = conditional_cov_from_kernel(&make_rl_kernel(0.5).unwrap(), 0.25).unwrap();
        assert!((scalar(&shifted, 1.0, 1.0) - 0.75).abs() < 1e-12);
        assert_eq!(scalar(&shifted, 0.2, 1.0), 0.0);
    }

    #[test]
    fn rl_variance_and_cross_covariance() {
        let c = conditional_cov_from_kernel(&make_rl_kernel(0.1).unwrap(), 0.0).unwrap();
        let expected = 5.0 / (GAMMA_0_6 * GAMMA_0_6);
        assert!((scalar(&c, 1.0, 1.0) - expected).abs() < 1e-10 * expected);
        let h = conditional_cov_from_kernel(&make_rl_kernel(0.3).unwrap(), 0.0).unwrap();
        let g = gamma(0.8);
        // reference by the substitution y = (0.5 - r)^0.8
        let sub = adaptive(
            &|y: f64| {
                let v = y.powf(1.0 / 0.8);
                (0.4 + v).powf(-0.2) / 0.8 / (g * g)
            },
            0.0,
            0.5f64.powf(0.8),
            1e-13,
            "ref",
        )
        .unwrap();
        assert!(
            (scalar(&h, 0.5, 0.9) - sub).abs() < 1e-9,
            "{} vs {sub}",
            scalar(&h, 0.5, 0.9)
        );
    }

    #[test]
    fn exp_sum_cov_matches_quadrature() {
        let k = ExpSumKernel::scalar(&[(0.7, 0.0), (1.3, 2.5), (-0.4, 6.0)]).unwrap();
        let closed = conditional_cov_from_kernel(&VolterraKernel::exp_sum(k.clone()), 0.2).unwrap();
        let kc = k.clone();
        let generic = VolterraKernel::custom(1, move |t, s| kc.eval(t - s), false, true, "copy");
        let numeric = conditional_cov_from_kernel(&generic, 0.2).unwrap();
        for (s, u) in [(0.5, 0.9), (1.0, 1.0), (1.7, 0.4)] {
            assert!((scalar(&closed, s, u) - scalar(&numeric, s, u)).abs() < 1e-11);
        }
    }

    #[test]
    fn fbm_examples() {
        let b = fbm_covariance(0.5).unwrap();
        assert!((scalar(&b, 0.3, 0.8) - 0.3).abs() < 1e-15);
        for h in [0.1, 0.3, 0.7, 0.9] {
            let c = fbm_covariance(h).unwrap();
            assert!((scalar(&c, 1.0, 1.0) - 1.0).abs() < 1e-15);
        }
        let c = fbm_covariance(0.1).unwrap();
        assert!((scalar(&c, 0.5, 1.0) - 0.5).abs() < 1e-15);
        assert!(fbm_covariance(1.0).is_err());
    }

    #[test]
    fn build_small_problems() {
        let w = DMatrix::from_element(1, 1, 1.0);
        let p = build_problem(&brownian_covariance(1, 0.0), &ForwardCurve::zero(1, 1), &w, 0.0, 1.0, 1).unwrap();
        assert_eq!(p.grid, vec![1.0]);
        assert_eq!(p.c_big[(0, 0)], 1.0);
        assert_eq!(p.delta, 1.0);
        assert!(p.g_is_zero);

        let p = build_problem(
            &fbm_covariance(0.5).unwrap(),
            &ForwardCurve::zero(1, 1),
            &w,
            0.0,
            1.0,
            2,
        )
        .unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 1.0]);
        assert!(max_abs(&(&p.c_big - expected)) < 1e-15);
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let cov = brownian_covariance(1, 0.0);
        let g = ForwardCurve::zero(1, 1);
        let bad_w = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(
            build_problem(&cov, &g, &bad_w, 0.0, 1.0, 4),
            Err(Error::NotPsd(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let cov2 = brownian_covariance(2, 0.0);
        assert!(build_problem(&cov2, &ForwardCurve::zero(2, 1), &asym, 0.0, 1.0, 4).is_err());
        let w = DMatrix::from_element(1, 1, 1.0);
        assert!(build_problem(&cov, &g, &w, 1.0, 1.0, 4).is_err());
        assert!(build_problem(&cov, &g, &w, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn refinement_shares_blocks() {
        let cov = fbm_covariance(0.3).unwrap();
        let w = DMatrix::from_element(1, 1, 1.0);
        let g = ForwardCurve::zero(1, 1);
        let coarse = build_problem(&cov, &g, &w, 0.0, 1.0, 8).unwrap();
        let fine = build_problem(&cov, &g, &w, 0.0, 1.0, 16).unwrap();
        for i in 0..8 {
            for k in 0..8 {
                assert_eq!(coarse.c_big[(i, k)], fine.c_big[(2 * i + 1, 2 * k + 1)]);
            }
        }
    }

    #[test]
    fn matrix_process_blocks() {
        let cov = brownian_covariance(2, 0.0);
        let g = ForwardCurve::constant(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let p = build_problem(&cov, &g, &DMatrix::identity(2, 2), 0.0, 1.0, 3).unwrap();
        assert_eq!(p.c_big.shape(), (6, 6));
        assert_eq!(p.g_stack.shape(), (6, 3));
        assert_eq!(p.g_stack[(3, 2)], 6.0);
        assert!((p.c_big[(2, 4)] - 2.0 / 3.0).abs() < 1e-14);
        assert!(p.c_big[(2, 5)].abs() < 1e-15);
    }

    #[test]
    fn time_derivative_of_cov() {
        let k = VolterraKernel::constant_scalar(2.0);
        assert_eq!(cov_time_derivative(&k, 0.3, 0.5, 0.9).unwrap()[(0, 0)], -4.0);
    }
}
