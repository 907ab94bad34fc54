//! Volterra kernels `K(t, s)`, exponential-sum kernels and the Laplace
//! measures they are built from.
//!
//! A kernel is `d x d` matrix valued and vanishes for `s > t`. Kernels whose
//! norm blows up as `s -> t` (Riemann–Liouville with `H < 1/2`) carry the
//! `singular_diagonal` flag; evaluating them on the diagonal yields
//! [`KernelValue::Singular`] rather than an infinite or NaN matrix.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive, integrate_singular_gap};

type KernelFn = Arc<dyn Fn(f64, f64) -> DMatrix<f64> + Send + Sync>;
type DensityFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Result of a pointwise kernel evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelValue {
    Finite(DMatrix<f64>),
    /// `|K(t, s)|` is infinite (singular kernel evaluated at `s = t`).
    Singular,
}

impl KernelValue {
    pub fn finite(self) -> Option<DMatrix<f64>> {
        match self {
            KernelValue::Finite(m) => Some(m),
            KernelValue::Singular => None,
        }
    }
}

#[derive(Clone)]
enum Shape {
    Constant(DMatrix<f64>),
    RiemannLiouville { hurst: f64, norm: f64 },
    ExpSum(ExpSumKernel),
    Bridge { t1: f64 },
    Custom(KernelFn),
}

/// A `d x d` Volterra kernel together with its structural metadata.
#[derive(Clone)]
pub struct VolterraKernel {
    shape: Shape,
    dim: usize,
    singular_diagonal: bool,
    is_convolution: bool,
    description: String,
}

impl fmt::Debug for VolterraKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolterraKernel")
            .field("dim", &self.dim)
            .field("singular_diagonal", &self.singular_diagonal)
            .field("is_convolution", &self.is_convolution)
            .field("description", &self.description)
            .finish()
    }
}

impl VolterraKernel {
    /// `K(t, s) = sigma` for `s <= t`.
    pub fn constant(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(Error::dim("constant kernel needs a non-empty square matrix"));
        }
        let dim = sigma.nrows();
        Ok(VolterraKernel {
            description: format!("constant {dim}x{dim}"),
            shape: Shape::Constant(sigma),
            dim,
            singular_diagonal: false,
            is_convolution: true,
        })
    }

    pub fn constant_scalar(sigma: f64) -> Self {
        Self::constant(DMatrix::from_element(1, 1, sigma)).expect("1x1 is square")
    }

    /// The zero kernel: the process is deterministic.
    pub fn zero(dim: usize) -> Result<Self> {
        let mut k = Self::constant(DMatrix::zeros(dim, dim))?;
        k.description = format!("zero {dim}x{dim}");
        Ok(k)
    }

    pub fn exp_sum(kernel: ExpSumKernel) -> Self {
        VolterraKernel {
            dim: kernel.dim(),
            description: format!("exponential sum with {} terms", kernel.len()),
            shape: Shape::ExpSum(kernel),
            singular_diagonal: false,
            is_convolution: true,
        }
    }

    /// Kernel given by an arbitrary closure. The closure is only called with
    /// `0 <= s <= t` (and never at `s = t` when `singular_diagonal` is set).
    pub fn custom(
        dim: usize,
        f: impl Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
        singular_diagonal: bool,
        is_convolution: bool,
        description: impl Into<String>,
    ) -> Self {
        VolterraKernel {
            shape: Shape::Custom(Arc::new(f)),
            dim,
            singular_diagonal,
            is_convolution,
            description: description.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn singular_diagonal(&self) -> bool {
        self.singular_diagonal
    }

    pub fn is_convolution(&self) -> bool {
        self.is_convolution
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// The exponential-sum representation, when the kernel has one
    /// (constant kernels are a single term with rate zero).
    pub fn as_exp_sum(&self) -> Option<ExpSumKernel> {
        match &self.shape {
            Shape::ExpSum(k) => Some(k.clone()),
            Shape::Constant(sigma) => Some(ExpSumKernel {
                terms: vec![(sigma.clone(), 0.0)],
                dim: self.dim,
            }),
            _ => None,
        }
    }

    pub(crate) fn hurst(&self) -> Option<f64> {
        match self.shape {
            Shape::RiemannLiouville { hurst, .. } => Some(hurst),
            _ => None,
        }
    }

    /// Pointwise evaluation of `K(t, s)`.
    pub fn eval_kernel(&self, t: f64, s: f64) -> Result<KernelValue> {
        if !(t >= 0.0 && s >= 0.0) {
            return Err(Error::domain(format!("kernel times must be >= 0, got t={t}, s={s}")));
        }
        if s > t {
            return Ok(KernelValue::Finite(DMatrix::zeros(self.dim, self.dim)));
        }
        if s == t && self.singular_diagonal {
            return Ok(KernelValue::Singular);
        }
        if let Shape::Bridge { t1 } = self.shape {
            if s >= t1 {
                return Err(Error::domain(format!("bridge kernel undefined for s >= T1 = {t1}")));
            }
        }
        Ok(KernelValue::Finite(self.value_unchecked(t, s)))
    }

    /// `K(t, s)` for `0 <= s <= t` off a singular diagonal.
    pub(crate) fn value_unchecked(&self, t: f64, s: f64) -> DMatrix<f64> {
        match &self.shape {
            Shape::Constant(sigma) => sigma.clone(),
            Shape::ExpSum(k) => k.eval(t - s),
            Shape::Custom(f) => f(t, s),
            _ => DMatrix::from_element(1, 1, self.scalar_unchecked(t, s)),
        }
    }

    /// `K(t, s)` with the lag `t - s` supplied by the caller, who can often
    /// form it without cancellation.
    pub(crate) fn value_lag(&self, t: f64, s: f64, lag: f64) -> DMatrix<f64> {
        match &self.shape {
            Shape::Constant(sigma) => sigma.clone(),
            Shape::ExpSum(k) => k.eval(lag),
            Shape::Custom(f) => f(t, s),
            _ => DMatrix::from_element(1, 1, self.scalar_lag(t, s, lag)),
        }
    }

    pub(crate) fn scalar_lag(&self, t: f64, s: f64, lag: f64) -> f64 {
        match &self.shape {
            Shape::RiemannLiouville { hurst, norm } => rl_value(*hurst, *norm, lag),
            Shape::ExpSum(k) => k.eval_scalar(lag),
            _ => self.scalar_unchecked(t, s),
        }
    }

    /// Scalar fast path for `d = 1` kernels, `0 <= s <= t`.
    pub(crate) fn scalar_unchecked(&self, t: f64, s: f64) -> f64 {
        debug_assert_eq!(self.dim, 1);
        match &self.shape {
            Shape::Constant(sigma) => sigma[(0, 0)],
            Shape::RiemannLiouville { hurst, norm } => rl_value(*hurst, *norm, t - s),
            Shape::ExpSum(k) => k.eval_scalar(t - s),
            Shape::Bridge { t1 } => (t1 - t) / (t1 - s),
            Shape::Custom(f) => f(t, s)[(0, 0)],
        }
    }
}

fn rl_value(hurst: f64, norm: f64, lag: f64) -> f64 {
    if hurst == 0.5 {
        norm
    } else if lag == 0.0 {
        if hurst > 0.5 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lag.powf(hurst - 0.5) * norm
    }
}

/// Riemann–Liouville kernel `k(t) = t^{H-1/2} / Γ(H + 1/2)`.
pub fn make_rl_kernel(hurst: f64) -> Result<VolterraKernel> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::domain(format!("Hurst index must lie in (0,1), got {hurst}")));
    }
    Ok(VolterraKernel {
        shape: Shape::RiemannLiouville {
            hurst,
            norm: 1.0 / gamma(hurst + 0.5),
        },
        dim: 1,
        singular_diagonal: hurst < 0.5,
        is_convolution: true,
        description: format!("Riemann-Liouville H={hurst}"),
    })
}

/// Brownian bridge pinned at `t1`: `K(t, s) = (t1 - t) / (t1 - s)`, valid on
/// horizons `horizon < t1`.
pub fn make_bridge_kernel(t1: f64, horizon: f64) -> Result<VolterraKernel> {
    if !(t1 > horizon) {
        return Err(Error::domain(format!(
            "bridge end T1={t1} must exceed the horizon T={horizon}"
        )));
    }
    Ok(VolterraKernel {
        shape: Shape::Bridge { t1 },
        dim: 1,
        singular_diagonal: false,
        is_convolution: false,
        description: format!("Brownian bridge T1={t1}"),
    })
}

/// `k(t) = sum_i c_i exp(-x_i t)` with `d x d` weights and rates `x_i >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSumKernel {
    terms: Vec<(DMatrix<f64>, f64)>,
    dim: usize,
}

impl ExpSumKernel {
    pub fn new(terms: Vec<(DMatrix<f64>, f64)>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::domain("exponential sum needs at least one term"))?;
        let dim = first.0.nrows();
        for (c, x) in &terms {
            if c.nrows() != dim || c.ncols() != dim {
                return Err(Error::dim(format!(
                    "all weights must be {dim}x{dim}, got {}x{}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            if !(x.is_finite() && *x >= 0.0) {
                return Err(Error::domain(format!("rates must be finite and >= 0, got {x}")));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("weights must be finite"));
            }
        }
        Ok(ExpSumKernel { terms, dim })
    }

    /// Scalar weights and rates, `d = 1`.
    pub fn scalar(terms: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            terms
                .iter()
                .map(|&(c, x)| (DMatrix::from_element(1, 1, c), x))
                .collect(),
        )
    }

    pub fn terms(&self) -> &[(DMatrix<f64>, f64)] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.terms.iter().map(|(_, x)| *x).collect()
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        for (c, x) in &self.terms {
            acc += c * (-x * t).exp();
        }
        acc
    }

    pub(crate) fn eval_scalar(&self, t: f64) -> f64 {
        self.terms.iter().map(|(c, x)| c[(0, 0)] * (-x * t).exp()).sum()
    }

    /// Appends a term (used e.g. to check that zero-weight terms are inert).
    pub fn with_term(mut self, c: DMatrix<f64>, x: f64) -> Result<Self> {
        self.terms.push((c, x));
        Self::new(self.terms)
    }
}

/// A `d x d` matrix-valued measure on the half-line, either atomic or with a
/// density.
#[derive(Clone)]
pub enum MeasureSpec {
    PointMasses(Vec<(DMatrix<f64>, f64)>),
    Density {
        dim: usize,
        density: DensityFn,
        label: String,
    },
}

impl fmt::Debug for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureSpec::PointMasses(p) => f.debug_tuple("PointMasses").field(p).finish(),
            MeasureSpec::Density { dim, label, .. } => f
                .debug_struct("Density")
                .field("dim", dim)
                .field("label", label)
                .finish(),
        }
    }
}

impl MeasureSpec {
    pub fn point_masses(atoms: Vec<(DMatrix<f64>, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::domain("point-mass measure needs at least one atom"));
        }
        let d = atoms[0].0.nrows();
        for (c, x) in &atoms {
            if c.nrows() != d || c.ncols() != d {
                return Err(Error::dim("atom weights must share one square shape"));
            }
            if !(*x >= 0.0 && x.is_finite()) {
                return Err(Error::domain(format!("atom location must be >= 0, got {x}")));
            }
        }
        Ok(MeasureSpec::PointMasses(atoms))
    }

    pub fn density(
        dim: usize,
        density: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Self {
        MeasureSpec::Density {
            dim,
            density: Arc::new(density),
            label: label.into(),
        }
    }

    /// The measure whose Laplace transform is the Riemann–Liouville kernel:
    /// `x^{-H-1/2} / (Γ(H+1/2) Γ(1/2-H)) dx`, defined for `H < 1/2`.
    pub fn riemann_liouville(hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 0.5) {
            return Err(Error::domain(format!(
                "Riemann-Liouville measure needs H in (0, 1/2), got {hurst}"
            )));
        }
        let norm = 1.0 / (gamma(hurst + 0.5) * gamma(0.5 - hurst));
        Ok(Self::density(
            1,
            move |x| DMatrix::from_element(1, 1, norm * x.powf(-hurst - 0.5)),
            format!("Riemann-Liouville H={hurst}"),
        ))
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureSpec::PointMasses(p) => p[0].0.nrows(),
            MeasureSpec::Density { dim, .. } => *dim,
        }
    }

    /// Zeroth and first moments over `[lo, hi)` (`[lo, hi]` when `closed`),
    /// plus the Frobenius-weighted versions used for matrix rates.
    fn cell_moments(&self, lo: f64, hi: f64, closed: bool) -> Result<CellMoments> {
        let d = self.dim();
        match self {
            MeasureSpec::PointMasses(atoms) => {
                let mut m = CellMoments::zero(d);
                for (c, x) in atoms {
                    let inside = *x >= lo && (*x < hi || (closed && *x <= hi));
                    if inside {
                        let norm = c.norm();
                        m.mass += c;
                        m.first += c * *x;
                        m.weight += norm;
                        m.weighted_first += norm * x;
                    }
                }
                Ok(m)
            }
            MeasureSpec::Density { density, label, .. } => {
                let what = format!("cell [{lo}, {hi}] of {label}");
                let packed = |x: f64| {
                    let v = density(x);
                    let norm = v.norm();
                    let mut out = DMatrix::zeros(d * d * 2 + 2, 1);
                    for (k, e) in v.iter().enumerate() {
                        out[k] = *e;
                        out[d * d + k] = e * x;
                    }
                    out[2 * d * d] = norm;
                    out[2 * d * d + 1] = norm * x;
                    out
                };
                let integral = if lo == 0.0 {
                    // densities may blow up at the origin
                    integrate_singular_gap(&packed, hi, 1e-12, &what)?
                } else {
                    adaptive(&packed, lo, hi, 1e-12, &what)?
                };
                let mass = DMatrix::from_column_slice(d, d, &integral.as_slice()[..d * d]);
                let first = DMatrix::from_column_slice(d, d, &integral.as_slice()[d * d..2 * d * d]);
                Ok(CellMoments {
                    mass,
                    first,
                    weight: integral[2 * d * d],
                    weighted_first: integral[2 * d * d + 1],
                })
            }
        }
    }

    /// Estimates `∫ (1 ∧ x^{-1/2}) |μ|(dx)` on dyadic cells `[2^k, 2^{k+1}]`
    /// expanding in both directions, with `|μ|` the Frobenius norm of the
    /// weights. Errors when the cell contributions do not die out.
    pub fn integrability(&self) -> Result<f64> {
        let weight = |x: f64| if x <= 1.0 { 1.0 } else { x.powf(-0.5) };
        match self {
            MeasureSpec::PointMasses(atoms) => Ok(atoms.iter().map(|(c, x)| weight(*x) * c.norm()).sum()),
            MeasureSpec::Density { density, label, .. } => {
                let f = |x: f64| weight(x) * density(x).norm();
                let core = adaptive(&f, 0.5, 2.0, 1e-10, label)?;
                let low = dyadic_tail(&f, 0.5, 0.5, label)?;
                let high = dyadic_tail(&f, 2.0, 2.0, label)?;
                Ok(core + low + high)
            }
        }
    }
}

/// Sums `f` over the dyadic cells starting at `start` and moving by the
/// factor `step` (below or above 1), closing with the geometric series of the
/// cell-to-cell ratio once it settles.
fn dyadic_tail(f: &impl Fn(f64) -> f64, start: f64, step: f64, label: &str) -> Result<f64> {
    let cell = |a: f64| {
        let b = a * step;
        adaptive(f, a.min(b), a.max(b), 1e-12, label)
    };
    let mut edge = start;
    let mut prev = cell(edge)?;
    let mut total = prev;
    let mut prev_ratio = f64::NAN;
    for level in 0..2000 {
        edge *= step;
        let c = cell(edge)?;
        total += c;
        if c <= 1e-15 * total || c == 0.0 {
            return Ok(total);
        }
        let ratio = c / prev;
        if level > 4 && ratio >= 1.0 - 1e-9 {
            return Err(Error::Divergent(format!(
                "{label}: (1 ∧ x^-1/2)|μ|(dx) does not decay on the dyadic grid"
            )));
        }
        if (ratio - prev_ratio).abs() < 1e-9 && ratio < 1.0 {
            return Ok(total + c * ratio / (1.0 - ratio));
        }
        prev = c;
        prev_ratio = ratio;
    }
    Err(Error::Divergent(format!(
        "{label}: (1 ∧ x^-1/2)|μ|(dx) not converged on the dyadic grid"
    )))
}

struct CellMoments {
    mass: DMatrix<f64>,
    first: DMatrix<f64>,
    weight: f64,
    weighted_first: f64,
}

impl CellMoments {
    fn zero(d: usize) -> Self {
        CellMoments {
            mass: DMatrix::zeros(d, d),
            first: DMatrix::zeros(d, d),
            weight: 0.0,
            weighted_first: 0.0,
        }
    }
}

/// Geometric partition `η_i = r^{i - n/2}`, `i = 0..=n`, centred at 1.
pub fn geometric_partition(ratio: f64, cells: usize) -> Result<Vec<f64>> {
    if !(ratio > 1.0) || cells == 0 {
        return Err(Error::domain(
            "geometric partition needs ratio > 1 and at least one cell",
        ));
    }
    let half = cells as f64 / 2.0;
    Ok((0..=cells).map(|i| ratio.powf(i as f64 - half)).collect())
}

/// Collapses a measure onto one atom per partition cell:
/// `c_i = μ([η_{i-1}, η_i))` and `x_i = ∫ x μ(dx) / c_i`.
///
/// For `d > 1` the rate is the first moment of the Frobenius weight `|μ|`,
/// so that a single scalar rate serves the whole matrix weight. Cells with
/// zero mass are dropped; signed weights pass through.
pub fn discretize_measure(spec: &MeasureSpec, partition: &[f64]) -> Result<ExpSumKernel> {
    if partition.len() < 2 {
        return Err(Error::domain("partition needs at least two points"));
    }
    if partition[0] < 0.0 {
        return Err(Error::domain("partition must lie in [0, ∞)"));
    }
    for w in partition.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::domain(format!(
                "partition cells must have positive width, got [{}, {}]",
                w[0], w[1]
            )));
        }
    }
    let d = spec.dim();
    let last = partition.len() - 2;
    let mut terms = Vec::new();
    for (i, w) in partition.windows(2).enumerate() {
        let m = spec.cell_moments(w[0], w[1], i == last)?;
        if m.mass.iter().all(|v| *v == 0.0) {
            continue;
        }
        let rate = if d == 1 {
            m.first[(0, 0)] / m.mass[(0, 0)]
        } else {
            m.weighted_first / m.weight
        };
        terms.push((m.mass, rate.max(0.0)));
    }
    if terms.is_empty() {
        return Err(Error::domain("measure has no mass on the partition"));
    }
    ExpSumKernel::new(terms)
}

/// Numerical check of the admissibility conditions on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    /// `sup_t ∫_0^T |K(t,s)|^2 ds` over the grid `t_i = i T / n`.
    pub sup_sq_norm: f64,
    /// `(h, max_u ∫ |K(u+h,s) - K(u,s)|^2 ds)` for shrinking `h`.
    pub continuity_modulus: Vec<(f64, f64)>,
    pub divergent: bool,
}

fn frob_sq(kernel: &VolterraKernel, t: f64, s: f64, lag: f64) -> f64 {
    if kernel.dim == 1 {
        kernel.scalar_lag(t, s, lag).powi(2)
    } else {
        kernel.value_lag(t, s, lag).norm_squared()
    }
}

fn frob_sq_diff(kernel: &VolterraKernel, t1: f64, t2: f64, s: f64, lag2: f64, h: f64) -> f64 {
    // |K(t1, s) - K(t2, s)|^2 with t1 = t2 + h and s < t2
    if kernel.dim == 1 {
        (kernel.scalar_lag(t1, s, lag2 + h) - kernel.scalar_lag(t2, s, lag2)).powi(2)
    } else {
        (kernel.value_lag(t1, s, lag2 + h) - kernel.value_lag(t2, s, lag2)).norm_squared()
    }
}

/// `∫_0^len f(v) dv` with a possible singularity at `v = 0`.
fn gap_integral(kernel: &VolterraKernel, f: impl Fn(f64) -> f64, len: f64, tol: f64, what: &str) -> Result<f64> {
    if len <= 0.0 {
        return Ok(0.0);
    }
    if kernel.singular_diagonal {
        integrate_singular_gap(&f, len, tol, what)
    } else {
        adaptive(&f, 0.0, len, tol, what)
    }
}

pub fn admissibility_report(kernel: &VolterraKernel, horizon: f64, n: usize) -> Result<AdmissibilityReport> {
    if n < 2 {
        return Err(Error::domain("admissibility grid needs n >= 2"));
    }
    if !(horizon > 0.0) {
        return Err(Error::domain("horizon must be positive"));
    }
    let mut sup = 0.0_f64;
    let mut divergent = false;
    for i in 1..=n {
        let t = horizon * i as f64 / n as f64;
        let f = |v: f64| frob_sq(kernel, t, t - v, v);
        match gap_integral(kernel, f, t, 1e-10, "sup |K|^2") {
            Ok(v) => sup = sup.max(v),
            Err(Error::Divergent(_)) => {
                divergent = true;
                sup = f64::INFINITY;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let mut modulus = Vec::new();
    if !divergent {
        let probes = n.min(16);
        for k in 1..=6 {
            let h = horizon / f64::from(1u32 << k);
            let mut worst = 0.0_f64;
            for j in 0..probes {
                let u = (horizon - h) * j as f64 / (probes - 1).max(1) as f64;
                // s in [0, u): both kernels live, singular at s = u
                let inner = gap_integral(
                    kernel,
                    |v: f64| frob_sq_diff(kernel, u + h, u, u - v, v, h),
                    u,
                    1e-8,
                    "L2 modulus",
                )?;
                // s in [u, u + h]: only K(u + h, s), singular at s = u + h
                let strip = gap_integral(
                    kernel,
                    |v: f64| frob_sq(kernel, u + h, u + h - v, v),
                    h,
                    1e-8,
                    "L2 modulus",
                )?;
                worst = worst.max(inner + strip);
            }
            modulus.push((h, worst));
        }
    }
    Ok(AdmissibilityReport {
        sup_sq_norm: sup,
        continuity_modulus: modulus,
        divergent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Γ(0.6) from a high-precision table, independent of statrs.
    const GAMMA_0_6: f64 = 1.489_192_248_812_817;

    #[test]
    fn constant_kernel_value_and_volterra_property() {
        let k = VolterraKernel::constant_scalar(1.0);
        assert_eq!(k.eval_kernel(0.7, 0.3).unwrap().finite().unwrap()[(0, 0)], 1.0);
        assert_eq!(k.eval_kernel(0.3, 0.9).unwrap().finite().unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn negative_times_are_domain_errors() {
        let k = VolterraKernel::constant_scalar(1.0);
        assert!(matches!(k.eval_kernel(-0.1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(k.eval_kernel(0.5, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn rl_kernel_values() {
        let k = make_rl_kernel(0.1).unwrap();
        assert!(k.singular_diagonal() && k.is_convolution());
        let v = k.eval_kernel(1.0, 0.0).unwrap().finite().unwrap()[(0, 0)];
        assert!((v - 1.0 / GAMMA_0_6).abs() < 1e-12);
        assert_eq!(k.eval_kernel(0.4, 0.4).unwrap(), KernelValue::Singular);

        let half = make_rl_kernel(0.5).unwrap();
        for t in [0.1, 0.5, 3.0] {
            assert!((half.eval_kernel(t, 0.0).unwrap().finite().unwrap()[(0, 0)] - 1.0).abs() < 1e-14);
        }
        let smooth = make_rl_kernel(0.9).unwrap();
        assert!(!smooth.singular_diagonal());
        assert_eq!(smooth.eval_kernel(0.3, 0.3).unwrap().finite().unwrap()[(0, 0)], 0.0);

        assert!(make_rl_kernel(0.0).is_err());
        assert!(make_rl_kernel(1.0).is_err());
    }

    #[test]
    fn bridge_kernel_values() {
        let k = make_bridge_kernel(2.0, 1.0).unwrap();
        let at = |t, s| k.eval_kernel(t, s).unwrap().finite().unwrap()[(0, 0)];
        assert_eq!(at(0.5, 0.5), 1.0);
        assert_eq!(at(1.0, 0.0), 0.5);
        assert_eq!(at(1.0, 1.5), 0.0);
        assert!(make_bridge_kernel(1.0, 1.0).is_err());
        assert!(make_bridge_kernel(0.5, 1.0).is_err());
    }

    #[test]
    fn exp_sum_validation() {
        assert!(ExpSumKernel::scalar(&[]).is_err());
        assert!(ExpSumKernel::scalar(&[(1.0, -0.5)]).is_err());
        let k = ExpSumKernel::scalar(&[(1.0, 0.0), (2.0, 3.0)]).unwrap();
        assert!((k.eval(0.5)[(0, 0)] - (1.0 + 2.0 * (-1.5f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn admissibility_constant_and_rl() {
        let c = admissibility_report(&VolterraKernel::constant_scalar(1.0), 1.0, 8).unwrap();
        assert!((c.sup_sq_norm - 1.0).abs() < 1e-12);
        assert!(!c.divergent);
        // shifting a constant kernel only adds the new strip [u, u+h]
        for (h, v) in &c.continuity_modulus {
            assert!((v - h).abs() < 1e-10);
        }

        let rl = admissibility_report(&make_rl_kernel(0.1).unwrap(), 1.0, 8).unwrap();
        let expected = 1.0 / (0.2 * GAMMA_0_6 * GAMMA_0_6);
        assert!(
            (rl.sup_sq_norm - expected).abs() < 1e-8 * expected,
            "{}",
            rl.sup_sq_norm
        );
        let moduli: Vec<f64> = rl.continuity_modulus.iter().map(|p| p.1).collect();
        assert!(moduli.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn admissibility_flags_non_square_integrable_kernel() {
        let k = VolterraKernel::custom(
            1,
            |t, s| DMatrix::from_element(1, 1, (t - s).powf(-0.5)),
            true,
            true,
            "(t-s)^-1/2",
        );
        let r = admissibility_report(&k, 1.0, 4).unwrap();
        assert!(r.divergent);
        assert!(r.sup_sq_norm.is_infinite());
    }

    #[test]
    fn point_masses_are_reproduced() {
        let spec = MeasureSpec::point_masses(vec![
            (DMatrix::from_element(1, 1, 0.7), 1.0),
            (DMatrix::from_element(1, 1, -0.2), 3.0),
        ])
        .unwrap();
        let k = discretize_measure(&spec, &[0.0, 2.0, 5.0]).unwrap();
        assert_eq!(k.len(), 2);
        assert_eq!(k.terms()[0].1, 1.0);
        assert!((k.terms()[1].1 - 3.0).abs() < 4.0 * f64::EPSILON);
        assert_eq!(k.terms()[1].0[(0, 0)], -0.2);

        // a partition with an empty cell drops it
        let k = discretize_measure(&spec, &[0.0, 0.5, 2.0, 5.0]).unwrap();
        assert_eq!(k.len(), 2);
        assert!(matches!(
            discretize_measure(&spec, &[0.0, 2.0, 2.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn measure_integrability() {
        let rl = MeasureSpec::riemann_liouville(0.1).unwrap();
        let v = rl.integrability().unwrap();
        // closed form: norm * (∫_0^1 x^{-0.6} + ∫_1^∞ x^{-1.1}) = norm * (2.5 + 10)
        let norm = 1.0 / (GAMMA_0_6 * gamma(0.4));
        assert!((v - 12.5 * norm).abs() < 1e-6 * v, "{v}");
        let heavy = MeasureSpec::density(1, |x| DMatrix::from_element(1, 1, x.powf(-0.5)), "x^-1/2");
        assert!(matches!(heavy.integrability(), Err(Error::Divergent(_))));
        assert!(MeasureSpec::riemann_liouville(0.5).is_err());
    }

    #[test]
    fn geometric_partition_is_centered() {
        let p = geometric_partition(2.0, 4).unwrap();
        assert_eq!(p, vec![0.25, 0.5, 1.0, 2.0, 4.0]);
        assert!(geometric_partition(1.0, 4).is_err());
    }
}
