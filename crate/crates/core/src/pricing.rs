//! Quadratic short-rate bonds and variance-type swaps.
//!
//! A model is a `d x m` Gaussian Volterra process `X` with mean curve `g0`;
//! every price reduces to `L_{t,T}(w) = E[exp(-∫_t^T tr(X^T w X) ds)]` for
//! some PSD weight `w`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma;

use crate::covariance::{build_problem, conditional_cov_from_kernel, CovarianceFn, ForwardCurve};
use crate::error::{Error, Result};
use crate::fredholm::{laplace_fredholm, LaplaceValue, ScaledLaplace};
use crate::kernels::VolterraKernel;
use crate::lift::{build_lift, laplace_lift, solve_riccati_at, FactorState, DEFAULT_STEPS_PER_UNIT};
use crate::linalg::{check_psd, PSD_TOL};
use crate::quadrature::{adaptive, gl64, integrate_singular_gap};

pub type RateCurve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default number of Simpson points for `∫ ξ`.
pub const XI_POINTS: usize = 1001;

/// Initial Gauss–Legendre panel count for the swap integrals.
pub const DEFAULT_QUAD_CELLS: usize = 32;

const PANEL_REL_TOL: f64 = 1e-6;
const MAX_PANELS: usize = 4096;
/// `z F_1` below which `1 - L(z)` is replaced by its first-order expansion.
const SMALL_Z: f64 = 1e-8;

/// Resolution of a Laplace backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    /// Right-endpoint grid with `n` cells on `(t, T]`.
    Fredholm { n: usize },
    /// Riccati system for exp-sum kernels; `steps_per_unit` bounds the step
    /// when the mean curve depends on time.
    Lift { steps_per_unit: usize },
}

impl Backend {
    pub fn fredholm(n: usize) -> Self {
        Backend::Fredholm { n }
    }

    pub fn lift() -> Self {
        Backend::Lift {
            steps_per_unit: DEFAULT_STEPS_PER_UNIT,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Fredholm { .. } => "fredholm",
            Backend::Lift { .. } => "lift",
        }
    }
}

/// A Gaussian Volterra model `X_s = g0(s) + ∫_0^s K(s, r) dW_r` with a
/// `d x m` Brownian motion `W`, or a Gaussian process given by its
/// covariance.
#[derive(Clone, Debug)]
pub struct VolterraModel {
    kernel: Option<VolterraKernel>,
    covariance: CovarianceFn,
    g0: ForwardCurve,
    m: usize,
}

impl VolterraModel {
    pub fn from_kernel(kernel: VolterraKernel, g0: ForwardCurve, m: usize) -> Result<Self> {
        let covariance = conditional_cov_from_kernel(&kernel, 0.0)?;
        Self::check_shape(kernel.dim(), &g0, m)?;
        Ok(VolterraModel {
            kernel: Some(kernel),
            covariance,
            g0,
            m,
        })
    }

    /// Model given by its covariance at its base time; it can only be
    /// conditioned at that time.
    pub fn from_covariance(covariance: CovarianceFn, g0: ForwardCurve, m: usize) -> Result<Self> {
        Self::check_shape(covariance.dim(), &g0, m)?;
        Ok(VolterraModel {
            kernel: None,
            covariance,
            g0,
            m,
        })
    }

    /// `X ≡ g0`: the zero kernel.
    pub fn deterministic(g0: DMatrix<f64>) -> Result<Self> {
        let (d, m) = g0.shape();
        Self::from_kernel(VolterraKernel::zero(d)?, ForwardCurve::constant(g0), m)
    }

    fn check_shape(d: usize, g0: &ForwardCurve, m: usize) -> Result<()> {
        if m == 0 {
            return Err(Error::domain("multiplicity must be >= 1"));
        }
        if g0.shape() != (d, m) {
            let (r, c) = g0.shape();
            return Err(Error::dim(format!("g0 is {r}x{c}, expected {d}x{m}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn kernel(&self) -> Option<&VolterraKernel> {
        self.kernel.as_ref()
    }

    pub fn mean_curve(&self) -> &ForwardCurve {
        &self.g0
    }

    /// Unconditional covariance `C_0(s, u)`.
    pub fn covariance(&self) -> &CovarianceFn {
        &self.covariance
    }

    /// Lift for exp-sum kernels, Fredholm otherwise.
    pub fn default_backend(&self, n: usize) -> Backend {
        match self.kernel.as_ref().and_then(|k| k.as_exp_sum()) {
            Some(_) => Backend::lift(),
            None => Backend::fredholm(n),
        }
    }

    /// `C_t(s, u)`; covariance-only models can only be conditioned at their
    /// base time.
    pub fn conditional_covariance(&self, t: f64) -> Result<CovarianceFn> {
        match &self.kernel {
            Some(k) if t > 0.0 => conditional_cov_from_kernel(k, t),
            Some(_) => Ok(self.covariance.clone()),
            None if (t - self.covariance.base_time()).abs() <= 1e-14 => Ok(self.covariance.clone()),
            None => Err(Error::domain(format!(
                "covariance model is fixed at time {}; cannot condition at t = {t}",
                self.covariance.base_time()
            ))),
        }
    }

    /// Laplace transform evaluator on `(t, T]`, treating the model curve as
    /// the conditional mean at `t`.
    pub fn backend(&self, kind: Backend, t: f64, horizon: f64) -> Result<Box<dyn LaplaceBackend + '_>> {
        if !(t >= 0.0 && t < horizon) {
            return Err(Error::domain(format!("need 0 <= t < T, got t={t}, T={horizon}")));
        }
        match kind {
            Backend::Fredholm { n } => Ok(Box::new(FredholmBackend {
                model: self,
                cov: self.conditional_covariance(t)?,
                t,
                horizon,
                n,
            })),
            Backend::Lift { steps_per_unit } => {
                let k = self
                    .kernel
                    .as_ref()
                    .and_then(|k| k.as_exp_sum())
                    .ok_or_else(|| Error::Config("the lift backend needs an exponential-sum kernel".into()))?;
                Ok(Box::new(LiftBackend {
                    model: self,
                    kernel: k,
                    t,
                    horizon,
                    steps_per_unit: steps_per_unit.max(1),
                }))
            }
        }
    }

    /// `log L_{t,T}(w)`.
    pub fn log_laplace(&self, w: &DMatrix<f64>, t: f64, horizon: f64, kind: Backend) -> Result<LaplaceValue> {
        self.backend(kind, t, horizon)?.log_laplace(w)
    }

    /// `∫_0^T tr(a (g0 g0^T + m C_0(s, s))) ds`, the first moment of
    /// `∫_0^T tr(X^T a X) ds`.
    pub fn first_moment(&self, a: &DMatrix<f64>, horizon: f64) -> Result<f64> {
        if !(horizon > 0.0) {
            return Err(Error::domain("horizon must be positive"));
        }
        let cov = self.conditional_covariance(0.0)?;
        let m = self.m as f64;
        let diag = |s: f64| -> f64 {
            match cov.eval(s, s) {
                Ok(c) => m * (a * c).trace(),
                Err(_) => f64::NAN,
            }
        };
        // C(s, s) may behave like s^{2H} at 0
        let noise = integrate_singular_gap(&diag, horizon, 1e-12, "∫ tr(a C(s,s))")?;
        if !noise.is_finite() {
            return Err(Error::Quadrature {
                what: "∫ tr(a C(s,s))".into(),
                residual: f64::NAN,
            });
        }
        let mean = if self.g0.is_zero() {
            0.0
        } else {
            let g0 = &self.g0;
            adaptive(
                &|s: f64| {
                    let g = g0.eval(s);
                    (a * &g * g.transpose()).trace()
                },
                0.0,
                horizon,
                1e-12,
                "∫ tr(a g0 g0^T)",
            )?
        };
        Ok(mean + noise)
    }
}

/// Evaluates `L_{t,T}(w)` for a fixed model, horizon and resolution.
pub trait LaplaceBackend {
    fn name(&self) -> &'static str;

    fn log_laplace(&self, w: &DMatrix<f64>) -> Result<LaplaceValue>;

    /// `z -> log L(z w)`; backends may precompute a factorization of `w`.
    fn log_laplace_scaled<'a>(&'a self, w: &DMatrix<f64>) -> Result<Box<dyn Fn(f64) -> Result<f64> + Sync + 'a>>;
}

struct FredholmBackend<'a> {
    model: &'a VolterraModel,
    cov: CovarianceFn,
    t: f64,
    horizon: f64,
    n: usize,
}

impl LaplaceBackend for FredholmBackend<'_> {
    fn name(&self) -> &'static str {
        "fredholm"
    }

    fn log_laplace(&self, w: &DMatrix<f64>) -> Result<LaplaceValue> {
        let p = build_problem(&self.cov, &self.model.g0, w, self.t, self.horizon, self.n)?;
        laplace_fredholm(&p, self.model.m)
    }

    fn log_laplace_scaled<'a>(&'a self, w: &DMatrix<f64>) -> Result<Box<dyn Fn(f64) -> Result<f64> + Sync + 'a>> {
        let p = build_problem(&self.cov, &self.model.g0, w, self.t, self.horizon, self.n)?;
        let scaled = ScaledLaplace::new(&p, self.model.m)?;
        Ok(Box::new(move |z| Ok(scaled.eval(z).log_value)))
    }
}

struct LiftBackend<'a> {
    model: &'a VolterraModel,
    kernel: crate::kernels::ExpSumKernel,
    t: f64,
    horizon: f64,
    steps_per_unit: usize,
}

impl LaplaceBackend for LiftBackend<'_> {
    fn name(&self) -> &'static str {
        "lift"
    }

    fn log_laplace(&self, w: &DMatrix<f64>) -> Result<LaplaceValue> {
        let lift = build_lift(&self.kernel, w, &self.model.g0, self.model.m)?;
        let state = solve_riccati_at(&lift, self.t, self.horizon, self.steps_per_unit)?;
        let mut factors = FactorState::zero(&lift);
        factors.t = self.t;
        laplace_lift(&state, &factors)
    }

    fn log_laplace_scaled<'a>(&'a self, w: &DMatrix<f64>) -> Result<Box<dyn Fn(f64) -> Result<f64> + Sync + 'a>> {
        check_psd("w", w, PSD_TOL)?;
        let w = w.clone();
        Ok(Box::new(move |z| Ok(self.log_laplace(&(&w * z))?.log_value)))
    }
}

/// Quadratic short rate `r = ξ + tr(X^T Q X)`, optionally with a default
/// intensity `λ = ξ̃ + tr(X^T Q̃ X)`.
#[derive(Clone)]
pub struct ShortRateSpec {
    pub q: DMatrix<f64>,
    pub xi: RateCurve,
    pub spread_q: Option<DMatrix<f64>>,
    pub spread_xi: Option<RateCurve>,
}

impl std::fmt::Debug for ShortRateSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShortRateSpec")
            .field("q", &self.q)
            .field("spread_q", &self.spread_q)
            .finish_non_exhaustive()
    }
}

impl ShortRateSpec {
    pub fn new(q: DMatrix<f64>, xi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ShortRateSpec {
            q,
            xi: Arc::new(xi),
            spread_q: None,
            spread_xi: None,
        }
    }

    /// Constant input curve `ξ ≡ r0`.
    pub fn flat(q: DMatrix<f64>, r0: f64) -> Self {
        Self::new(q, move |_| r0)
    }

    pub fn with_spread(mut self, q: DMatrix<f64>, xi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.spread_q = Some(q);
        self.spread_xi = Some(Arc::new(xi));
        self
    }
}

fn discount(xi: &RateCurve, t: f64, horizon: f64) -> f64 {
    (-crate::quadrature::simpson(|s| xi(s), t, horizon, XI_POINTS)).exp()
}

fn bond_with(
    q: &DMatrix<f64>,
    xi: &RateCurve,
    model: &VolterraModel,
    t: f64,
    horizon: f64,
    kind: Backend,
) -> Result<f64> {
    check_psd("Q", q, PSD_TOL)?;
    let df = discount(xi, t, horizon);
    if q.iter().all(|v| *v == 0.0) && q.nrows() == model.dim() {
        return Ok(df);
    }
    Ok(df * model.log_laplace(q, t, horizon, kind)?.value())
}

/// `P(t, T) = exp(-∫_t^T ξ) L_{t,T}(Q)`.
pub fn bond_price(spec: &ShortRateSpec, model: &VolterraModel, t: f64, horizon: f64, kind: Backend) -> Result<f64> {
    bond_with(&spec.q, &spec.xi, model, t, horizon, kind)
}

/// `exp(-∫_t^T (ξ + ξ̃)) L_{t,T}(Q + Q̃)`.
pub fn defaultable_bond_price(
    spec: &ShortRateSpec,
    model: &VolterraModel,
    t: f64,
    horizon: f64,
    kind: Backend,
) -> Result<f64> {
    let (sq, sxi) = match (&spec.spread_q, &spec.spread_xi) {
        (Some(q), Some(xi)) => (q, xi.clone()),
        _ => return Err(Error::Config("defaultable bond needs spread_Q and spread_xi".into())),
    };
    check_psd("spread_Q", sq, PSD_TOL)?;
    let h = (horizon - t) / (XI_POINTS - 1) as f64;
    if (0..XI_POINTS).any(|i| sxi(t + i as f64 * h) < 0.0) {
        return Err(Error::domain("spread curve must be nonnegative"));
    }
    if sq.shape() != spec.q.shape() {
        return Err(Error::dim("Q and spread_Q differ in shape"));
    }
    let xi = spec.xi.clone();
    let total: RateCurve = Arc::new(move |s| xi(s) + sxi(s));
    bond_with(&(&spec.q + sq), &total, model, t, horizon, kind)
}

/// Basket weights and power of a variance-type swap.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapSpec {
    pub alpha: DVector<f64>,
    pub q: f64,
    pub maturity: f64,
}

impl SwapSpec {
    pub fn new(alpha: DVector<f64>, q: f64, maturity: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::domain(format!("power must lie in (0, 1], got {q}")));
        }
        if !(maturity > 0.0) {
            return Err(Error::domain("maturity must be positive"));
        }
        Ok(SwapSpec { alpha, q, maturity })
    }

    /// `α α^T`.
    pub fn weight(&self) -> DMatrix<f64> {
        &self.alpha * self.alpha.transpose()
    }

    fn is_null(&self) -> bool {
        self.alpha.iter().all(|v| *v == 0.0)
    }

    fn check(&self, model: &VolterraModel) -> Result<()> {
        if self.alpha.len() != model.dim() {
            return Err(Error::dim(format!(
                "alpha has length {}, model dimension is {}",
                self.alpha.len(),
                model.dim()
            )));
        }
        Ok(())
    }
}

/// `E ∫_0^T α^T X X^T α ds`.
pub fn variance_swap_strike(spec: &SwapSpec, model: &VolterraModel) -> Result<f64> {
    if spec.q != 1.0 {
        return Err(Error::domain(format!("variance swap needs q = 1, got {}", spec.q)));
    }
    spec.check(model)?;
    if spec.is_null() {
        return Ok(0.0);
    }
    model.first_moment(&spec.weight(), spec.maturity)
}

/// Composite 64-point Gauss–Legendre on `[a, b]`, doubling the panel count
/// until two successive sums agree to `PANEL_REL_TOL`.
fn panel_integral(f: &(dyn Fn(f64) -> Result<f64> + Sync), a: f64, b: f64, cells: usize, what: &str) -> Result<f64> {
    use rayon::prelude::*;
    let rule = gl64();
    let sum = |panels: usize| -> Result<f64> {
        let h = (b - a) / panels as f64;
        let parts: Vec<f64> = (0..panels)
            .into_par_iter()
            .map(|i| {
                let lo = a + i as f64 * h;
                let mut acc = 0.0;
                for (x, wt) in rule.mapped(lo, lo + h) {
                    acc += wt * f(x)?;
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        Ok(crate::linalg::pairwise_sum(&parts))
    };
    let mut panels = cells.max(1);
    let mut prev = sum(panels)?;
    while panels < MAX_PANELS {
        panels *= 2;
        let next = sum(panels)?;
        if (next - prev).abs() <= PANEL_REL_TOL * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature {
        what: format!("{what} (last estimate {prev:e})"),
        residual: f64::NAN,
    })
}

/// `E[(∫_0^T α^T X X^T α)^q]` for `0 < q < 1` from
/// `v^q = q/Γ(1-q) ∫_0^∞ (1 - e^{-z v}) z^{-q-1} dz`, integrated in `y = ln z`.
pub fn power_swap_strike(spec: &SwapSpec, model: &VolterraModel, kind: Backend, quad_cells: usize) -> Result<f64> {
    let q = spec.q;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("power swap needs 0 < q < 1, got {q}")));
    }
    spec.check(model)?;
    if spec.is_null() {
        return Ok(0.0);
    }
    let a = spec.weight();
    let f1 = model.first_moment(&a, spec.maturity)?;
    if f1 <= 0.0 {
        return Ok(0.0);
    }
    let backend = model.backend(kind, 0.0, spec.maturity)?;
    let log_l = backend.log_laplace_scaled(&a)?;
    let one_minus = |y: f64| -> Result<f64> { Ok(-(log_l(y.exp())?).exp_m1()) };

    let y_lo = (SMALL_Z / f1).ln();
    let lower = f1 * ((1.0 - q) * y_lo).exp() / (1.0 - q);
    let mut y_hi = y_lo + 1.0;
    let mut tail_gap = one_minus(y_hi)?;
    while 1.0 - tail_gap > 1e-13 && y_hi < y_lo + 120.0 {
        y_hi += 1.0;
        tail_gap = one_minus(y_hi)?;
    }
    let upper = tail_gap * (-q * y_hi).exp() / q;
    let integrand = |y: f64| -> Result<f64> { Ok(one_minus(y)? * (-q * y).exp()) };
    let middle = panel_integral(&integrand, y_lo, y_hi, quad_cells, "power swap integral")?;
    Ok(q / gamma(1.0 - q) * (lower + middle + upper))
}

/// `E[(∫_0^T α^T X X^T α + ε)^{-q}] = 1/Γ(q) ∫_0^∞ L(y α α^T) e^{-ε y} y^{q-1} dy`,
/// integrated in `s = ln y`.
pub fn inverse_power_moment(
    q: f64,
    eps: f64,
    spec: &SwapSpec,
    model: &VolterraModel,
    kind: Backend,
    quad_cells: usize,
) -> Result<f64> {
    if !(q > 0.0 && eps > 0.0) {
        return Err(Error::domain(format!("need q > 0 and eps > 0, got q={q}, eps={eps}")));
    }
    spec.check(model)?;
    if spec.is_null() {
        return Ok(eps.powf(-q));
    }
    let a = spec.weight();
    let f1 = model.first_moment(&a, spec.maturity)?;
    let backend = model.backend(kind, 0.0, spec.maturity)?;
    let log_l = backend.log_laplace_scaled(&a)?;

    // below s_lo: L(y) e^{-εy} ≈ 1 - (F_1 + ε) y
    let rate = f1 + eps;
    let s_lo = (SMALL_Z / rate).ln();
    let lower = (q * s_lo).exp() / q - rate * ((q + 1.0) * s_lo).exp() / (q + 1.0);
    // above s_hi: e^{-εy} y^q < e^{-50}
    let mut y = 50.0 / eps;
    while eps * y - q * y.ln() < 50.0 {
        y *= 2.0;
    }
    let s_hi = y.ln();
    let integrand = |s: f64| -> Result<f64> {
        let y = s.exp();
        Ok((log_l(y)? - eps * y + q * s).exp())
    };
    let middle = panel_integral(&integrand, s_lo, s_hi, quad_cells, "inverse moment integral")?;
    Ok((lower + middle) / gamma(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::fbm_covariance;
    use crate::kernels::ExpSumKernel;

    fn one(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn bm() -> VolterraModel {
        VolterraModel::from_kernel(VolterraKernel::constant_scalar(1.0), ForwardCurve::zero(1, 1), 1).unwrap()
    }

    fn unit_swap(q: f64) -> SwapSpec {
        SwapSpec::new(DVector::from_element(1, 1.0), q, 1.0).unwrap()
    }

    #[test]
    fn flat_rate_bond() {
        let spec = ShortRateSpec::flat(one(0.0), 0.03);
        let p = bond_price(&spec, &bm(), 0.0, 2.0, Backend::fredholm(10)).unwrap();
        assert!((p - (-0.06f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn bm_bond_matches_cosh() {
        let spec = ShortRateSpec::flat(one(1.0), 0.0);
        let exact = 2f64.sqrt().cosh().powf(-0.5);
        let lift = bond_price(&spec, &bm(), 0.0, 1.0, Backend::lift()).unwrap();
        assert!((lift - exact).abs() < 1e-10);
        let fred = bond_price(&spec, &bm(), 0.0, 1.0, Backend::fredholm(1000)).unwrap();
        assert!((fred - lift).abs() < 5e-4);
        assert!((lift - 0.67757).abs() < 5e-6);
    }

    #[test]
    fn conditional_lift_bond() {
        let spec = ShortRateSpec::flat(one(1.0), 0.0);
        let p = bond_price(&spec, &bm(), 0.5, 1.0, Backend::lift()).unwrap();
        let exact = (0.5 * 2f64.sqrt()).cosh().powf(-0.5);
        assert!((p - exact).abs() < 1e-10);
        let f = bond_price(&spec, &bm(), 0.5, 1.0, Backend::fredholm(400)).unwrap();
        assert!((p - f).abs() < 1e-3);
    }

    #[test]
    fn defaultable_bond_properties() {
        let model = bm();
        let plain = ShortRateSpec::flat(one(1.0), 0.01);
        let zero_spread = plain.clone().with_spread(one(0.0), |_| 0.0);
        let b = bond_price(&plain, &model, 0.0, 1.0, Backend::lift()).unwrap();
        let d0 = defaultable_bond_price(&zero_spread, &model, 0.0, 1.0, Backend::lift()).unwrap();
        assert!((b - d0).abs() < 1e-14);
        let half = ShortRateSpec::flat(one(0.5), 0.0).with_spread(one(0.5), |_| 0.0);
        let d_half = defaultable_bond_price(&half, &model, 0.0, 1.0, Backend::lift()).unwrap();
        let full = bond_price(&ShortRateSpec::flat(one(1.0), 0.0), &model, 0.0, 1.0, Backend::lift()).unwrap();
        assert!((d_half - full).abs() < 1e-12);
        let two = ShortRateSpec::flat(one(1.0), 0.0).with_spread(one(1.0), |_| 0.0);
        let d2 = defaultable_bond_price(&two, &model, 0.0, 1.0, Backend::fredholm(1000)).unwrap();
        assert!((d2 - 2f64.cosh().powf(-0.5)).abs() < 1e-3);
        let risky = plain.clone().with_spread(one(0.3), |s| 0.02 * s);
        assert!(defaultable_bond_price(&risky, &model, 0.0, 1.0, Backend::lift()).unwrap() <= b);
        assert!(defaultable_bond_price(&plain, &model, 0.0, 1.0, Backend::lift()).is_err());
        let negative = plain.with_spread(one(0.0), |_| -0.1);
        assert!(defaultable_bond_price(&negative, &model, 0.0, 1.0, Backend::lift()).is_err());
    }

    #[test]
    fn bond_decreasing_in_maturity() {
        let spec = ShortRateSpec::flat(one(0.7), 0.01);
        let model = VolterraModel::from_kernel(
            VolterraKernel::exp_sum(ExpSumKernel::scalar(&[(1.0, 0.5), (0.4, 3.0)]).unwrap()),
            ForwardCurve::scalar(0.2),
            1,
        )
        .unwrap();
        let mut prev = 1.0;
        for k in 1..=6 {
            let p = bond_price(&spec, &model, 0.0, 0.5 * k as f64, Backend::lift()).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn lift_requires_exp_sum() {
        let model = VolterraModel::from_covariance(fbm_covariance(0.3).unwrap(), ForwardCurve::zero(1, 1), 1).unwrap();
        assert!(matches!(
            model.backend(Backend::lift(), 0.0, 1.0),
            Err(Error::Config(_))
        ));
        assert!(model.backend(Backend::fredholm(10), 0.5, 1.0).is_err());
        assert_eq!(model.default_backend(7), Backend::fredholm(7));
        assert_eq!(bm().default_backend(7), Backend::lift());
    }

    #[test]
    fn variance_swap_cases() {
        assert!((variance_swap_strike(&unit_swap(1.0), &bm()).unwrap() - 0.5).abs() < 1e-10);
        let rl = VolterraModel::from_kernel(
            crate::kernels::make_rl_kernel(0.5).unwrap(),
            ForwardCurve::zero(1, 1),
            1,
        )
        .unwrap();
        assert!((variance_swap_strike(&unit_swap(1.0), &rl).unwrap() - 0.5).abs() < 1e-10);
        let rough = VolterraModel::from_kernel(
            crate::kernels::make_rl_kernel(0.2).unwrap(),
            ForwardCurve::zero(1, 1),
            1,
        )
        .unwrap();
        let g = gamma(0.7);
        let exact = 1.0 / (0.4 * g * g) / 1.4;
        assert!((variance_swap_strike(&unit_swap(1.0), &rough).unwrap() - exact).abs() < 1e-9);
        let null = SwapSpec::new(DVector::zeros(1), 1.0, 1.0).unwrap();
        assert_eq!(variance_swap_strike(&null, &bm()).unwrap(), 0.0);
        assert!(variance_swap_strike(&unit_swap(0.5), &bm()).is_err());
        let det = VolterraModel::deterministic(one(2.0)).unwrap();
        assert!((variance_swap_strike(&unit_swap(1.0), &det).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_power_swap() {
        let det = VolterraModel::deterministic(one(1.0)).unwrap();
        for k in 1..=9 {
            let q = k as f64 / 10.0;
            let v = power_swap_strike(&unit_swap(q), &det, Backend::fredholm(4), DEFAULT_QUAD_CELLS).unwrap();
            assert!((v - 1.0).abs() < 1e-6, "q={q}: {v}");
        }
        let det2 = VolterraModel::deterministic(one(1.5)).unwrap();
        let v = power_swap_strike(&unit_swap(0.3), &det2, Backend::fredholm(4), DEFAULT_QUAD_CELLS).unwrap();
        assert!((v - 2.25f64.powf(0.3)).abs() < 1e-6);
        let null = SwapSpec::new(DVector::zeros(1), 0.5, 1.0).unwrap();
        assert_eq!(power_swap_strike(&null, &det, Backend::fredholm(4), 32).unwrap(), 0.0);
    }

    #[test]
    fn power_swap_jensen_and_backends() {
        let model = bm();
        let f1 = variance_swap_strike(&unit_swap(1.0), &model).unwrap();
        let lift = power_swap_strike(&unit_swap(0.5), &model, Backend::lift(), DEFAULT_QUAD_CELLS).unwrap();
        let fred = power_swap_strike(&unit_swap(0.5), &model, Backend::fredholm(500), DEFAULT_QUAD_CELLS).unwrap();
        assert!(lift <= f1.sqrt());
        assert!((lift - fred).abs() < 2e-3, "{lift} {fred}");
    }

    #[test]
    fn inverse_moment_cases() {
        let det = VolterraModel::deterministic(one(1.0)).unwrap();
        let v = inverse_power_moment(
            1.0,
            1.0,
            &unit_swap(1.0),
            &det,
            Backend::fredholm(4),
            DEFAULT_QUAD_CELLS,
        )
        .unwrap();
        assert!((v - 0.5).abs() < 1e-8, "{v}");
        let v = inverse_power_moment(
            0.4,
            0.5,
            &unit_swap(1.0),
            &det,
            Backend::fredholm(4),
            DEFAULT_QUAD_CELLS,
        )
        .unwrap();
        assert!((v - 1.5f64.powf(-0.4)).abs() < 1e-8, "{v}");
        let null = SwapSpec::new(DVector::zeros(1), 1.0, 1.0).unwrap();
        let v = inverse_power_moment(0.7, 0.25, &null, &det, Backend::fredholm(4), 32).unwrap();
        assert_eq!(v, 0.25f64.powf(-0.7));
    }
}
