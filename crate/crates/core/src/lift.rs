//! Markovian lift for exponential-sum kernels `k(t) = Σ c_i e^{-x_i t}`.
//!
//! With `Ỹ` stacking `c_i Y_t(x_i)` (`nd x m`), the conditional Laplace
//! transform is `exp(Θ + 2 tr(Λ^T Ỹ) + tr(Γ Ỹ Ỹ^T))`, where `(Θ, Λ, Γ)`
//! solve the backward Riccati system
//!
//! ```text
//! Θ' = tr(g0^T w g0) - m tr(Γ C) - 2 tr(Λ^T C Λ)
//! Λ' = D_t + B Λ - 2 Γ C Λ
//! Γ' = A + B Γ + Γ B^T - 2 Γ C Γ
//! ```
//!
//! with zero terminal values at `T`.

use std::sync::Arc;

use nalgebra::{DMatrix, LU};

use crate::covariance::ForwardCurve;
use crate::error::{Error, Result};
use crate::fredholm::LaplaceValue;
use crate::kernels::ExpSumKernel;
use crate::linalg::{check_psd, max_abs, symmetrize, trace_product, PSD_TOL};

/// Default time resolution per unit of horizon.
pub const DEFAULT_STEPS_PER_UNIT: usize = 2000;

/// Largest `h x_max` allowed in one block-exponential sub-step.
const MAX_STIFF_STEP: f64 = 4.0;

/// Sub-step budget of one block-exponential solve.
const MAX_SUBSTEPS: usize = 1_000_000;

/// Relative change below which a constant-generator `Γ̂` has settled.
const SETTLED_TOL: f64 = 1e-15;

/// Coefficient matrices of the lifted Riccati system.
#[derive(Clone)]
pub struct LiftMatrices {
    /// `𝟙_n 𝟙_n^T ⊗ w`.
    pub a: DMatrix<f64>,
    /// `diag(x_1..x_n) ⊗ I_d`.
    pub b: DMatrix<f64>,
    /// Blocks `c_i c_j^T`.
    pub c: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub g0: ForwardCurve,
    pub kernel: ExpSumKernel,
    pub n: usize,
    pub d: usize,
    pub m: usize,
}

impl std::fmt::Debug for LiftMatrices {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiftMatrices")
            .field("n", &self.n)
            .field("d", &self.d)
            .field("m", &self.m)
            .finish()
    }
}

impl LiftMatrices {
    pub fn size(&self) -> usize {
        self.n * self.d
    }

    /// `D_t`: `w g0(t)` repeated in each of the `n` blocks.
    pub fn d_at(&self, t: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.size(), self.m);
        if self.g0.is_zero() {
            return out;
        }
        let wg = &self.w * self.g0.eval(t);
        for i in 0..self.n {
            out.rows_mut(i * self.d, self.d).copy_from(&wg);
        }
        out
    }

    fn source_trace(&self, t: f64) -> f64 {
        if self.g0.is_zero() {
            return 0.0;
        }
        let g = self.g0.eval(t);
        (g.transpose() * &self.w * g).trace()
    }

    pub fn max_rate(&self) -> f64 {
        self.kernel.rates().into_iter().fold(0.0, f64::max)
    }

    /// Size of the block system: `nd`, plus `m` for the constant factor
    /// when the mean curve is nonzero.
    fn block_size(&self) -> usize {
        if self.g0.is_zero() {
            self.size()
        } else {
            self.size() + self.m
        }
    }

    /// `Â` of the system augmented by the constant factor `I_m`:
    /// `[[A, D_t], [D_t^T, g0^T w g0]]`.
    fn augmented_source(&self, t: f64) -> DMatrix<f64> {
        if self.g0.is_zero() {
            return self.a.clone();
        }
        let s = self.size();
        let g = self.g0.eval(t);
        let d = self.d_at(t);
        let mut a = DMatrix::zeros(s + self.m, s + self.m);
        a.view_mut((0, 0), (s, s)).copy_from(&self.a);
        a.view_mut((0, s), (s, self.m)).copy_from(&d);
        a.view_mut((s, 0), (self.m, s)).copy_from(&d.transpose());
        a.view_mut((s, s), (self.m, self.m))
            .copy_from(&(g.transpose() * &self.w * g));
        a
    }

    /// `[[-B̂, -Â_t], [-2Ĉ, B̂]]` with `B̂ = diag(B, 0)` and `Ĉ = diag(C, 0)`;
    /// equal to [`Self::hamiltonian`] when `g0 ≡ 0`.
    fn block_hamiltonian(&self, t: f64) -> DMatrix<f64> {
        let s = self.size();
        let n = self.block_size();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (s, s)).copy_from(&(-&self.b));
        h.view_mut((0, n), (n, n)).copy_from(&(-self.augmented_source(t)));
        h.view_mut((n, 0), (s, s)).copy_from(&(&self.c * -2.0));
        h.view_mut((n, n), (s, s)).copy_from(&self.b);
        h
    }

    /// `[[-B, -A], [-2C, B]]`.
    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let s = self.size();
        let mut h = DMatrix::zeros(2 * s, 2 * s);
        h.view_mut((0, 0), (s, s)).copy_from(&(-&self.b));
        h.view_mut((0, s), (s, s)).copy_from(&(-&self.a));
        h.view_mut((s, 0), (s, s)).copy_from(&(&self.c * -2.0));
        h.view_mut((s, s), (s, s)).copy_from(&self.b);
        h
    }
}

pub fn build_lift(k: &ExpSumKernel, w: &DMatrix<f64>, g0: &ForwardCurve, m: usize) -> Result<LiftMatrices> {
    check_psd("w", w, PSD_TOL)?;
    let d = k.dim();
    if w.nrows() != d {
        return Err(Error::dim(format!(
            "w is {}x{}, kernel weights are {d}x{d}",
            w.nrows(),
            w.ncols()
        )));
    }
    if m == 0 {
        return Err(Error::domain("multiplicity must be >= 1"));
    }
    if g0.shape() != (d, m) {
        let (r, c) = g0.shape();
        return Err(Error::dim(format!("g0 is {r}x{c}, expected {d}x{m}")));
    }
    let n = k.len();
    let s = n * d;
    let mut a = DMatrix::zeros(s, s);
    let mut b = DMatrix::zeros(s, s);
    let mut c = DMatrix::zeros(s, s);
    for (i, (ci, xi)) in k.terms().iter().enumerate() {
        for p in 0..d {
            b[(i * d + p, i * d + p)] = *xi;
        }
        for (j, (cj, _)) in k.terms().iter().enumerate() {
            a.view_mut((i * d, j * d), (d, d)).copy_from(w);
            c.view_mut((i * d, j * d), (d, d)).copy_from(&(ci * cj.transpose()));
        }
    }
    Ok(LiftMatrices {
        a,
        b,
        c,
        w: w.clone(),
        g0: g0.clone(),
        kernel: k.clone(),
        n,
        d,
        m,
    })
}

/// Propagates `[Γ; I]` through `exp(h H)` and renormalizes.
struct BlockPropagator {
    step: DMatrix<f64>,
    size: usize,
}

impl BlockPropagator {
    fn new(lift: &LiftMatrices, h: f64) -> Self {
        Self::from_generator(lift.hamiltonian() * h, lift.size())
    }

    fn from_generator(omega: DMatrix<f64>, size: usize) -> Self {
        BlockPropagator {
            step: omega.exp(),
            size,
        }
    }

    /// Returns the new `Γ` and `log det V`.
    fn advance(&self, gamma: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, f64)> {
        let s = self.size;
        let g1 = self.step.view((0, 0), (s, s));
        let g2 = self.step.view((0, s), (s, s));
        let g3 = self.step.view((s, 0), (s, s));
        let g4 = self.step.view((s, s), (s, s));
        let u = g1 * gamma + g2;
        let v = g3 * gamma + g4;
        let lu = LU::new(v.clone());
        let det = lu.determinant();
        if !(det.is_finite() && det > 0.0) {
            return Err(Error::Singular(format!("G4 block at tau = {tau} (det {det:e})")));
        }
        // Γ = U V^{-1}  <=>  V^T Γ^T = U^T
        let lut = LU::new(v.transpose());
        let gt = lut
            .solve(&u.transpose())
            .ok_or_else(|| Error::Singular(format!("G4 block at tau = {tau}")))?;
        Ok((symmetrize(&gt.transpose()), det.ln()))
    }
}

fn substeps(lift: &LiftMatrices, h: f64) -> usize {
    substeps_for(h, lift.max_rate(), max_abs(&lift.a), max_abs(&lift.c), lift.size())
}

fn substeps_for(h: f64, rate: f64, a_max: f64, c_max: f64, size: usize) -> usize {
    let stiff = h * rate;
    let coupling = h * (a_max * c_max).sqrt() * size as f64;
    ((stiff.max(coupling) / MAX_STIFF_STEP).ceil() as usize).max(1)
}

/// `Γ` at time-to-maturity `tau`: `G_2(τ) G_4(τ)^{-1}` from
/// `exp(τ [[-B, -A], [-2C, B]])`, sub-stepped with renormalization when the
/// rates make a single exponential ill-conditioned.
pub fn gamma_closed_form(lift: &LiftMatrices, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("tau must be >= 0, got {tau}")));
    }
    let s = lift.size();
    if tau == 0.0 {
        return Ok(DMatrix::zeros(s, s));
    }
    let k = substeps(lift, tau);
    let h = tau / k as f64;
    let prop = BlockPropagator::new(lift, h);
    let mut gamma = DMatrix::zeros(s, s);
    for i in 0..k {
        if i == MAX_SUBSTEPS {
            // reported in time to maturity
            return Err(Error::BlowUp { t: i as f64 * h });
        }
        let next = prop.advance(&gamma, (i + 1) as f64 * h)?.0;
        let settled = max_abs(&(&next - &gamma)) <= SETTLED_TOL * max_abs(&next).max(1.0);
        gamma = next;
        if settled {
            break;
        }
    }
    Ok(gamma)
}

/// Trajectories of the backward Riccati system on a uniform grid of `[0, T]`.
#[derive(Debug, Clone)]
pub struct RiccatiState {
    /// Increasing, last entry `T`.
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<DMatrix<f64>>,
    pub gamma: Vec<DMatrix<f64>>,
    pub horizon: f64,
}

impl RiccatiState {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Linear interpolation of `(Θ, Λ, Γ)` at `t`.
    pub fn at(&self, t: f64) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
        let first = self.times[0];
        let last = *self.times.last().expect("non-empty grid");
        let slack = 1e-12 * last.abs().max(1.0);
        if !(t >= first - slack && t <= last + slack) {
            return Err(Error::domain(format!(
                "t = {t} outside the trajectory [{first}, {last}]"
            )));
        }
        let steps = self.steps();
        let pos = ((t - first) / (last - first) * steps as f64).clamp(0.0, steps as f64);
        let i = (pos.floor() as usize).min(steps.saturating_sub(1));
        let frac = pos - i as f64;
        if frac == 0.0 || steps == 0 {
            return Ok((self.theta[i], self.lambda[i].clone(), self.gamma[i].clone()));
        }
        let lerp = |a: &DMatrix<f64>, b: &DMatrix<f64>| a * (1.0 - frac) + b * frac;
        Ok((
            self.theta[i] * (1.0 - frac) + self.theta[i + 1] * frac,
            lerp(&self.lambda[i], &self.lambda[i + 1]),
            lerp(&self.gamma[i], &self.gamma[i + 1]),
        ))
    }
}

struct Rates {
    theta: f64,
    lambda: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

fn rhs(lift: &LiftMatrices, t: f64, lambda: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Rates {
    let gc = gamma * &lift.c;
    let c_lambda = &lift.c * lambda;
    let theta = lift.source_trace(t) - lift.m as f64 * gc.trace() - 2.0 * trace_product(&lambda.transpose(), &c_lambda);
    let lambda_dot = lift.d_at(t) + &lift.b * lambda - (gamma * &c_lambda) * 2.0;
    let gamma_dot = &lift.a + &lift.b * gamma + gamma * lift.b.transpose() - (&gc * gamma) * 2.0;
    Rates {
        theta,
        lambda: lambda_dot,
        gamma: gamma_dot,
    }
}

/// Classical RK4 integration backward from zero terminal values at `T`.
pub fn solve_riccati_ode(lift: &LiftMatrices, horizon: f64, steps: usize) -> Result<RiccatiState> {
    if steps == 0 {
        return Err(Error::domain("steps must be >= 1"));
    }
    if !(horizon > 0.0) {
        return Err(Error::domain("horizon must be positive"));
    }
    let s = lift.size();
    let h = horizon / steps as f64;
    let mut theta = 0.0;
    let mut lambda = DMatrix::zeros(s, lift.m);
    let mut gamma = DMatrix::zeros(s, s);
    let mut thetas = vec![0.0; steps + 1];
    let mut lambdas = vec![DMatrix::zeros(0, 0); steps + 1];
    let mut gammas = vec![DMatrix::zeros(0, 0); steps + 1];
    lambdas[steps] = lambda.clone();
    gammas[steps] = gamma.clone();
    for k in (0..steps).rev() {
        let t = horizon * (k + 1) as f64 / steps as f64;
        let dt = -h;
        let k1 = rhs(lift, t, &lambda, &gamma);
        let k2 = rhs(
            lift,
            t + 0.5 * dt,
            &(&lambda + &k1.lambda * (0.5 * dt)),
            &(&gamma + &k1.gamma * (0.5 * dt)),
        );
        let k3 = rhs(
            lift,
            t + 0.5 * dt,
            &(&lambda + &k2.lambda * (0.5 * dt)),
            &(&gamma + &k2.gamma * (0.5 * dt)),
        );
        let k4 = rhs(lift, t + dt, &(&lambda + &k3.lambda * dt), &(&gamma + &k3.gamma * dt));
        let w = dt / 6.0;
        theta += w * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta);
        lambda += (k1.lambda + k2.lambda * 2.0 + k3.lambda * 2.0 + k4.lambda) * w;
        gamma += (k1.gamma + k2.gamma * 2.0 + k3.gamma * 2.0 + k4.gamma) * w;
        let t_now = horizon * k as f64 / steps as f64;
        if !theta.is_finite() || lambda.iter().any(|v| !v.is_finite()) || gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t: t_now });
        }
        thetas[k] = theta;
        lambdas[k] = lambda.clone();
        gammas[k] = gamma.clone();
    }
    Ok(RiccatiState {
        times: (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect(),
        theta: thetas,
        lambda: lambdas,
        gamma: gammas,
        horizon,
    })
}

/// Trajectories on the nodes `nodes` (increasing, last entry `T`) from the
/// linearized block system.
///
/// With `Ŷ = [Ỹ; I_m]` the pair `(Λ, Θ)` joins `Γ` in the symmetric
/// `Γ̂ = [[Γ, Λ], [Λ^T, θ̂]]`, which solves the same quadratic Riccati
/// equation with `Â = [[A, D], [D^T, g0^T w g0]]`, `B̂ = diag(B, 0)`,
/// `Ĉ = diag(C, 0)`. Then `Γ̂ = Û V̂^{-1}` with `[Û; V̂]` linear, and
/// `Θ = tr θ̂ - (m/2)(log det V̂ - τ tr B)`. A constant mean curve gives a
/// constant generator, propagated exactly; otherwise each sub-step uses the
/// fourth-order Magnus generator at the two Gauss points, with sub-steps no
/// longer than `magnus_step`.
fn propagate(lift: &LiftMatrices, nodes: &[f64], magnus_step: f64) -> Result<RiccatiState> {
    let horizon = *nodes.last().expect("non-empty node list");
    let s = lift.size();
    let m = lift.m;
    let nb = lift.block_size();
    let augmented = nb > s;
    let tr_b = lift.b.trace();
    let rate = lift.max_rate();
    let c_max = max_abs(&lift.c);
    let frozen = lift.g0.is_constant();

    let mut gamma_hat = DMatrix::zeros(nb, nb);
    let mut log_det = 0.0;
    let split = |g: &DMatrix<f64>, log_det: f64, tau: f64| {
        let theta_hat = if augmented { g.view((s, s), (m, m)).trace() } else { 0.0 };
        let lambda = if augmented {
            g.view((0, s), (s, m)).into_owned()
        } else {
            DMatrix::zeros(s, m)
        };
        (
            theta_hat - 0.5 * m as f64 * (log_det - tau * tr_b),
            lambda,
            g.view((0, 0), (s, s)).into_owned(),
        )
    };

    let count = nodes.len();
    let mut thetas = vec![0.0; count];
    let mut lambdas = vec![DMatrix::zeros(s, m); count];
    let mut gammas = vec![DMatrix::zeros(s, s); count];
    let mut cached: Option<(usize, f64, BlockPropagator)> = None;
    let mut work = 0usize;
    for k in (0..count - 1).rev() {
        let (lo, hi) = (nodes[k], nodes[k + 1]);
        let len = hi - lo;
        let a_max = if frozen {
            max_abs(&lift.augmented_source(hi))
        } else {
            max_abs(&lift.augmented_source(0.5 * (lo + hi)))
        };
        let mut sub = substeps_for(len, rate, a_max, c_max, nb);
        if !frozen {
            sub = sub.max((len / magnus_step).ceil() as usize);
        }
        let h = len / sub as f64;
        for j in 0..sub {
            // sub-step [t0 - h, t0] in calendar time
            let t0 = hi - j as f64 * h;
            let tau = horizon - t0 + h;
            let step = if frozen {
                let fresh = !matches!(&cached, Some((n, l, _)) if *n == sub && (*l - len).abs() <= 1e-12 * len);
                if fresh {
                    let prop = BlockPropagator::from_generator(lift.block_hamiltonian(hi) * h, nb);
                    cached = Some((sub, len, prop));
                }
                &cached.as_ref().expect("propagator cached").2
            } else {
                let off = 3f64.sqrt() / 6.0;
                let h1 = lift.block_hamiltonian(t0 - (0.5 - off) * h);
                let h2 = lift.block_hamiltonian(t0 - (0.5 + off) * h);
                let comm = &h2 * &h1 - &h1 * &h2;
                let omega = (&h1 + &h2) * (0.5 * h) + comm * (3f64.sqrt() / 12.0 * h * h);
                cached = Some((0, 0.0, BlockPropagator::from_generator(omega, nb)));
                &cached.as_ref().expect("propagator cached").2
            };
            let (g, ld) = step.advance(&gamma_hat, tau)?;
            let settled = frozen && max_abs(&(&g - &gamma_hat)) <= SETTLED_TOL * max_abs(&g).max(1.0);
            gamma_hat = g;
            log_det += ld;
            if settled {
                // fixed point of a constant generator: each remaining step adds `ld`
                log_det += ld * (sub - j - 1) as f64;
                break;
            }
            work += 1;
            if work > MAX_SUBSTEPS {
                return Err(Error::BlowUp { t: t0 - h });
            }
        }
        let (theta, lambda, gamma) = split(&gamma_hat, log_det, horizon - lo);
        thetas[k] = theta;
        lambdas[k] = lambda;
        gammas[k] = gamma;
    }
    Ok(RiccatiState {
        times: nodes.to_vec(),
        theta: thetas,
        lambda: lambdas,
        gamma: gammas,
        horizon,
    })
}

/// Trajectories on a uniform grid of `[0, T]` from the block-exponential
/// solution; exact up to round-off when the mean curve is constant.
pub fn solve_riccati_closed_form(lift: &LiftMatrices, horizon: f64, steps: usize) -> Result<RiccatiState> {
    if steps == 0 {
        return Err(Error::domain("steps must be >= 1"));
    }
    if !(horizon > 0.0) {
        return Err(Error::domain("horizon must be positive"));
    }
    let nodes: Vec<f64> = (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect();
    propagate(lift, &nodes, horizon / steps as f64)
}

/// `(Θ, Λ, Γ)` at `t` only, as a two-node trajectory on `[t, T]`;
/// `steps_per_unit` bounds the Magnus sub-step for time-dependent means.
pub fn solve_riccati_at(lift: &LiftMatrices, t: f64, horizon: f64, steps_per_unit: usize) -> Result<RiccatiState> {
    if steps_per_unit == 0 {
        return Err(Error::domain("steps must be >= 1"));
    }
    if !(t >= 0.0 && horizon > t) {
        return Err(Error::domain(format!("need 0 <= t < T, got t={t}, T={horizon}")));
    }
    propagate(lift, &[t, horizon], 1.0 / steps_per_unit as f64)
}

/// Block-exponential trajectories on `steps` uniform steps; the RK4 solver
/// [`solve_riccati_ode`] is kept as an independent reference.
pub fn solve_riccati(lift: &LiftMatrices, horizon: f64, steps: usize) -> Result<RiccatiState> {
    solve_riccati_closed_form(lift, horizon, steps)
}

/// `Ỹ_t`, stacking `c_i Y_t(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    pub y_tilde: DMatrix<f64>,
    pub t: f64,
}

impl FactorState {
    pub fn zero(lift: &LiftMatrices) -> Self {
        FactorState {
            y_tilde: DMatrix::zeros(lift.size(), lift.m),
            t: 0.0,
        }
    }
}

/// `log L = Θ_t + 2 tr(Λ_t^T Ỹ_t) + tr(Γ_t Ỹ_t Ỹ_t^T)`; the `Θ` part is
/// reported as the determinant term.
pub fn laplace_lift(state: &RiccatiState, factors: &FactorState) -> Result<LaplaceValue> {
    let (theta, lambda, gamma) = state.at(factors.t)?;
    if factors.y_tilde.shape() != lambda.shape() {
        return Err(Error::dim(format!(
            "factor state is {:?}, expected {:?}",
            factors.y_tilde.shape(),
            lambda.shape()
        )));
    }
    let y = &factors.y_tilde;
    let quad = 2.0 * trace_product(&lambda.transpose(), y) + trace_product(&(&gamma * y), &y.transpose());
    Ok(LaplaceValue::new(theta, quad, state.steps()))
}

/// Conditional mean `g_t(s) = g0(s) + Σ_i e^{-x_i (s - t)} Ỹ_i`.
pub fn forward_from_factors(lift: &LiftMatrices, factors: &FactorState) -> ForwardCurve {
    let g0 = lift.g0.clone();
    let rates = lift.kernel.rates();
    let d = lift.d;
    let m = lift.m;
    let y = factors.y_tilde.clone();
    let t = factors.t;
    let blocks: Arc<Vec<DMatrix<f64>>> = Arc::new((0..rates.len()).map(|i| y.rows(i * d, d).into_owned()).collect());
    ForwardCurve::from_fn(d, m, move |s| {
        let mut g = g0.eval(s);
        for (yi, x) in blocks.iter().zip(&rates) {
            g += yi * (-x * (s - t)).exp();
        }
        g
    })
}
