//! Grid (Nyström) backend: Laplace transforms from the determinant and the
//! resolvent of the discretized covariance operator.
//!
//! With node weights `δ_i` and `S = (D^{1/2} ⊗ √w) C (D^{1/2} ⊗ √w)`,
//!
//! ```text
//! log L = -(m/2) log det(I + 2S) - h^T (I + 2S)^{-1} h,   h = (D^{1/2} ⊗ √w) g.
//! ```
//!
//! Determinants are computed from the symmetric spectrum of `2S`, never from
//! an LU factorization of the unsymmetric `I + 2 C w`.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::covariance::{DiscretizedProblem, GridRule};
use crate::error::{Error, Result};
use crate::kernels::VolterraKernel;
use crate::linalg::{check_psd, psd_sqrt, symmetrize, PSD_TOL};

/// Eigenvalues of `2S` below `-M_NEG_TOL * max(1, |2S|)` abort; smaller
/// negatives are round-off and are clipped to zero.
pub const M_NEG_TOL: f64 = 1e-8;

/// A Laplace transform value kept in the log domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceValue {
    pub log_value: f64,
    /// `-(m/2) log det(I + M)`.
    pub log_det_term: f64,
    /// Minus the quadratic form in the mean.
    pub quad_term: f64,
    /// Grid size (or number of time steps for the lift backend).
    pub n: usize,
}

impl LaplaceValue {
    pub fn new(log_det_term: f64, quad_term: f64, n: usize) -> Self {
        LaplaceValue {
            log_value: log_det_term + quad_term,
            log_det_term,
            quad_term,
            n,
        }
    }

    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// `(diag(a) ⊗ b) m`, and additionally `· (diag(a) ⊗ b)^T` when `both`.
fn scale_blocks(m: &DMatrix<f64>, a: &[f64], b: &DMatrix<f64>, both: bool) -> DMatrix<f64> {
    let d = b.nrows();
    if d == 1 {
        let s: Vec<f64> = a.iter().map(|v| v * b[(0, 0)]).collect();
        return DMatrix::from_fn(m.nrows(), m.ncols(), |i, k| {
            let right = if both { s[k] } else { 1.0 };
            s[i] * m[(i, k)] * right
        });
    }
    let mut out = m.clone();
    for (i, ai) in a.iter().enumerate() {
        let block = b * m.rows(i * d, d) * *ai;
        out.rows_mut(i * d, d).copy_from(&block);
    }
    if both {
        let bt = b.transpose();
        let tmp = out.clone();
        for (k, ak) in a.iter().enumerate() {
            let block = tmp.columns(k * d, d) * &bt * *ak;
            out.columns_mut(k * d, d).copy_from(&block);
        }
    }
    out
}

fn sqrt_weights(problem: &DiscretizedProblem) -> Vec<f64> {
    problem.weights.iter().map(|v| v.sqrt()).collect()
}

/// `S = (D^{1/2} ⊗ √w) C (D^{1/2} ⊗ √w)` and `h = (D^{1/2} ⊗ √w) g`.
fn weighted_system(problem: &DiscretizedProblem) -> (DMatrix<f64>, DMatrix<f64>) {
    let sw = psd_sqrt(&problem.w);
    let a = sqrt_weights(problem);
    let s = symmetrize(&scale_blocks(&problem.c_big, &a, &sw, true));
    let h = scale_blocks(&problem.g_stack, &a, &sw, false);
    (s, h)
}

fn checked_spectrum(raw: &[f64], what: &str) -> Result<Vec<f64>> {
    let top = raw.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let floor = -M_NEG_TOL * top.max(1.0);
    let min = raw.iter().fold(f64::INFINITY, |acc, v| acc.min(*v));
    if min < floor {
        return Err(Error::NotPsd(format!("{what} has eigenvalue {min:e}")));
    }
    Ok(raw.iter().map(|v| v.max(0.0)).collect())
}

fn log1p_sum(eigs: &[f64], z: f64) -> f64 {
    eigs.iter().map(|l| (z * l).ln_1p()).sum()
}

/// Discretized conditional Laplace transform `E[exp(-∫ tr(Z^T w Z))]` for a
/// `d x m` process whose columns are independent with common covariance.
pub fn laplace_fredholm(problem: &DiscretizedProblem, m: usize) -> Result<LaplaceValue> {
    if m == 0 {
        return Err(Error::domain("multiplicity must be >= 1"));
    }
    if !problem.g_is_zero && problem.cols() != m {
        return Err(Error::dim(format!(
            "mean has {} columns but the multiplicity is {m}",
            problem.cols()
        )));
    }
    let (s, h) = weighted_system(problem);
    let big_m = s * 2.0;
    let raw = big_m.clone().symmetric_eigenvalues();
    let eigs = checked_spectrum(raw.as_slice(), "2 √w C √w")?;
    let log_det_term = -0.5 * m as f64 * log1p_sum(&eigs, 1.0);
    let quad_term = if problem.g_is_zero {
        0.0
    } else {
        let a = DMatrix::identity(big_m.nrows(), big_m.nrows()) + big_m;
        let ch = Cholesky::new(a).ok_or_else(|| Error::Singular("I + 2 √w C √w".into()))?;
        let x = ch.solve(&h);
        -h.component_mul(&x).sum()
    };
    Ok(LaplaceValue::new(log_det_term, quad_term, problem.n))
}

/// One spectral decomposition reused for all scalings `z w` of a fixed
/// weight matrix: `log L(z) = -(m/2) Σ log(1 + z λ_k) - z Σ_k |p_k|^2 / (1 + z λ_k)`.
#[derive(Debug, Clone)]
pub struct ScaledLaplace {
    eigenvalues: Vec<f64>,
    /// Squared projections of `h` on the eigenvectors (summed over columns).
    proj_sq: Vec<f64>,
    m: usize,
    n: usize,
}

impl ScaledLaplace {
    pub fn new(problem: &DiscretizedProblem, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("multiplicity must be >= 1"));
        }
        let (s, h) = weighted_system(problem);
        let big_m = s * 2.0;
        let (eigs, proj_sq) = if problem.g_is_zero {
            let raw = big_m.symmetric_eigenvalues();
            (checked_spectrum(raw.as_slice(), "2 √w C √w")?, Vec::new())
        } else {
            let eig = SymmetricEigen::new(big_m);
            let eigs = checked_spectrum(eig.eigenvalues.as_slice(), "2 √w C √w")?;
            let p = eig.eigenvectors.transpose() * &h;
            let proj_sq = p.row_iter().map(|r| r.norm_squared()).collect();
            (eigs, proj_sq)
        };
        Ok(ScaledLaplace {
            eigenvalues: eigs,
            proj_sq,
            m,
            n: problem.n,
        })
    }

    pub fn eval(&self, z: f64) -> LaplaceValue {
        let log_det_term = -0.5 * self.m as f64 * log1p_sum(&self.eigenvalues, z);
        let quad_term = -z
            * self
                .proj_sq
                .iter()
                .zip(&self.eigenvalues)
                .map(|(p, l)| p / (1.0 + z * l))
                .sum::<f64>();
        LaplaceValue::new(log_det_term, quad_term, self.n)
    }
}

/// Discrete Mercer spectrum of `√w C √w` on the grid.
#[derive(Debug, Clone)]
pub struct MercerSpectrum {
    /// Non-increasing, clipped at zero.
    pub eigenvalues: Vec<f64>,
    /// Column `k` holds grid samples of the `k`-th eigenfunction, normalized
    /// so that `Σ_i δ_i |e_k(s_i)|^2 = 1`.
    pub eigenvectors: Option<DMatrix<f64>>,
    /// Smallest eigenvalue before clipping.
    pub min_raw: f64,
    pub delta: f64,
}

impl MercerSpectrum {
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let min_raw = eigenvalues.last().copied().unwrap_or(0.0);
        MercerSpectrum {
            eigenvalues: eigenvalues.into_iter().map(|v| v.max(0.0)).collect(),
            eigenvectors: None,
            min_raw,
            delta: f64::NAN,
        }
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `(1 + 2Σλ, Π(1 + 2λ), exp(2Σλ))`.
    pub fn determinant_bounds(&self) -> (f64, f64, f64) {
        let tr = self.trace();
        (1.0 + 2.0 * tr, fredholm_determinant(self), (2.0 * tr).exp())
    }
}

pub fn mercer_eigenvalues(problem: &DiscretizedProblem) -> Result<MercerSpectrum> {
    mercer_spectrum(problem, false)
}

pub fn mercer_spectrum(problem: &DiscretizedProblem, with_vectors: bool) -> Result<MercerSpectrum> {
    let (s, _) = weighted_system(problem);
    let (raw, vectors) = if with_vectors {
        let eig = SymmetricEigen::new(s);
        (eig.eigenvalues.as_slice().to_vec(), Some(eig.eigenvectors))
    } else {
        (s.symmetric_eigenvalues().as_slice().to_vec(), None)
    };
    let min_raw = raw.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    // same abort rule as for M = 2S
    let clipped: Vec<f64> = checked_spectrum(&raw.iter().map(|v| 2.0 * v).collect::<Vec<_>>(), "√w C √w")?
        .into_iter()
        .map(|v| 0.5 * v)
        .collect();
    let mut order: Vec<usize> = (0..clipped.len()).collect();
    order.sort_by(|&a, &b| clipped[b].total_cmp(&clipped[a]));
    let eigenvalues = order.iter().map(|&k| clipped[k]).collect();
    let eigenvectors = vectors.map(|v| {
        let d = problem.dim();
        let inv_sqrt: Vec<f64> = problem.weights.iter().map(|w| 1.0 / w.sqrt()).collect();
        DMatrix::from_fn(v.nrows(), order.len(), |i, k| v[(i, order[k])] * inv_sqrt[i / d])
    });
    Ok(MercerSpectrum {
        eigenvalues,
        eigenvectors,
        min_raw: if min_raw.is_finite() { min_raw } else { 0.0 },
        delta: problem.delta,
    })
}

/// `Π (1 + 2 λ_k)`, accumulated as `exp(Σ log1p(2 λ_k))`.
pub fn fredholm_determinant(spectrum: &MercerSpectrum) -> f64 {
    log1p_sum(&spectrum.eigenvalues, 2.0).exp()
}

/// Grid samples `R(s_i, s_j)` of the resolvent of `-2 √w C √w`.
#[derive(Debug, Clone)]
pub struct ResolventMatrix {
    pub values: DMatrix<f64>,
    pub delta: f64,
    pub weights: Vec<f64>,
}

impl ResolventMatrix {
    /// `max |R + 2C_w + 2 C_w D R|` and `max |R + 2C_w + 2 R D C_w|`.
    pub fn residuals(&self, problem: &DiscretizedProblem) -> (f64, f64) {
        let cw = pointwise_weighted_cov(problem);
        let d = problem.dim();
        let dr = scale_rows(&self.values, &self.weights, d);
        let dc = scale_rows(&cw, &self.weights, d);
        let base = &self.values + &cw * 2.0;
        let left = &base + (&cw * dr) * 2.0;
        let right = &base + (&self.values * dc) * 2.0;
        (max_abs(&left), max_abs(&right))
    }

    /// `max |(I + D R)(I + 2 D C_w) - I|`.
    pub fn inverse_identity_error(&self, problem: &DiscretizedProblem) -> f64 {
        let cw = pointwise_weighted_cov(problem);
        let d = problem.dim();
        let size = cw.nrows();
        let id = DMatrix::<f64>::identity(size, size);
        let a = &id + scale_rows(&self.values, &self.weights, d);
        let b = &id + scale_rows(&cw, &self.weights, d) * 2.0;
        max_abs(&(a * b - id))
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    crate::linalg::max_abs(m)
}

fn scale_rows(m: &DMatrix<f64>, weights: &[f64], d: usize) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, w) in weights.iter().enumerate() {
        out.rows_mut(i * d, d).scale_mut(*w);
    }
    out
}

/// `C_w = (I ⊗ √w) C (I ⊗ √w)` without node weights.
fn pointwise_weighted_cov(problem: &DiscretizedProblem) -> DMatrix<f64> {
    let sw = psd_sqrt(&problem.w);
    let ones = vec![1.0; problem.nodes()];
    symmetrize(&scale_blocks(&problem.c_big, &ones, &sw, true))
}

/// Solves `(I + 2 C_w D) R = -2 C_w`; with uniform weights this is
/// `(I + 2δ C_w) R = -2 C_w`.
pub fn discrete_resolvent(problem: &DiscretizedProblem) -> Result<ResolventMatrix> {
    let (s, _) = weighted_system(problem);
    let size = s.nrows();
    let a = DMatrix::identity(size, size) + &s * 2.0;
    let ch = Cholesky::<f64, Dyn>::new(a).ok_or_else(|| Error::Singular("I + 2 D^{1/2} C_w D^{1/2}".into()))?;
    // R~ = -2 (I + 2S)^{-1} S, then undo the node weights
    let r_tilde = ch.solve(&s) * -2.0;
    let inv_sqrt: Vec<f64> = problem.weights.iter().map(|w| 1.0 / w.sqrt()).collect();
    let d = problem.dim();
    let values = DMatrix::from_fn(size, size, |i, k| r_tilde[(i, k)] * inv_sqrt[i / d] * inv_sqrt[k / d]);
    Ok(ResolventMatrix {
        values: symmetrize(&values),
        delta: problem.delta,
        weights: problem.weights.clone(),
    })
}

/// `φ` and `Ψ = -w δ_{s=u} + ψ(s,u)` with `log L = φ + <g, Ψ g>`.
#[derive(Debug, Clone)]
pub struct CharacteristicExponent {
    pub phi: f64,
    /// Grid samples `ψ(s_i, s_j) = -√w R(s_i, s_j) √w`.
    pub psi_density: DMatrix<f64>,
    /// Weight of the atom of `Ψ` on the diagonal, `-w`.
    pub diagonal_weight: DMatrix<f64>,
    pub delta: f64,
}

impl CharacteristicExponent {
    /// `-δ Σ_i tr(g_i^T w g_i) + δ² Σ_{i,k} tr(g_i^T ψ_ik g_k)`.
    pub fn quadratic_form(&self, problem: &DiscretizedProblem) -> f64 {
        if problem.g_is_zero {
            return 0.0;
        }
        let d = problem.dim();
        let g = &problem.g_stack;
        let mut single = 0.0;
        for i in 0..problem.nodes() {
            let gi = g.rows(i * d, d);
            single += (gi.transpose() * &problem.w * gi).trace();
        }
        let double = (g.transpose() * &self.psi_density * g).trace();
        -self.delta * single + self.delta * self.delta * double
    }

    pub fn log_value(&self, problem: &DiscretizedProblem) -> f64 {
        self.phi + self.quadratic_form(problem)
    }
}

/// Characteristic exponent of a kernel-driven problem on a right-endpoint
/// grid.
///
/// `φ` is accumulated backwards over conditioning cells `[r_j, r_j + δ)`,
/// `r_j = t + j δ`: each cell adds the rank-`d` term `δ V_j V_j^T`
/// (`V_j` stacks `K(s_i, r_j)`, `i > j`) to the covariance, and by the
/// determinant lemma
///
/// ```text
/// φ += -(m/2) log det(I_d + 2δ Φ_j),   Φ_j = δ U^T U - δ² V^T ψ_j V,
/// ```
///
/// with `U = (I ⊗ √w) V_j` and `ψ_j` the resolvent term of the cells already
/// added, kept up to date by Woodbury updates of `(I + M)^{-1} = I - δ ψ`
/// (in the `√w`-weighted coordinates).
pub fn characteristic_exponent(
    problem: &DiscretizedProblem,
    kernel: &VolterraKernel,
    m: usize,
) -> Result<CharacteristicExponent> {
    if m == 0 {
        return Err(Error::domain("multiplicity must be >= 1"));
    }
    if problem.rule != GridRule::RightEndpoint {
        return Err(Error::domain("characteristic exponent needs a right-endpoint grid"));
    }
    let d = problem.dim();
    if kernel.dim() != d {
        return Err(Error::dim(format!(
            "kernel is {}x{} but w is {d}x{d}",
            kernel.dim(),
            kernel.dim()
        )));
    }
    check_psd("w", &problem.w, PSD_TOL)?;
    let n = problem.n;
    let delta = problem.delta;
    let size = n * d;
    let sw = psd_sqrt(&problem.w);

    let mut inv = DMatrix::<f64>::identity(size, size);
    let mut phi = 0.0;
    for j in (0..n).rev() {
        let r = problem.t + j as f64 * delta;
        // nodes i = j+1..n occupy rows j d .. n d
        let rows = size - j * d;
        let mut u = DMatrix::<f64>::zeros(rows, d);
        for (off, i) in (j + 1..=n).enumerate() {
            let s = problem.grid[i - 1];
            let lag = (i - j) as f64 * delta;
            let k = kernel.value_lag(s, r, lag);
            u.rows_mut(off * d, d).copy_from(&(&sw * k));
        }
        let inv_cols = inv.columns(j * d, rows);
        let iu = inv_cols * &u;
        let s_mat = symmetrize(&(u.transpose() * iu.rows(j * d, rows)));
        let core = DMatrix::<f64>::identity(d, d) + &s_mat * (2.0 * delta * delta);
        let ch = Cholesky::new(core.clone()).ok_or_else(|| Error::Singular("I_d + 2δΦ".into()))?;
        phi -= 0.5 * m as f64 * 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let right = ch.solve(&iu.transpose());
        inv.gemm(-2.0 * delta * delta, &iu, &right, 1.0);
    }

    let res = discrete_resolvent(problem)?;
    let ones = vec![1.0; problem.nodes()];
    let psi_density = -symmetrize(&scale_blocks(&res.values, &ones, &sw, true));
    Ok(CharacteristicExponent {
        phi,
        psi_density,
        diagonal_weight: -problem.w.clone(),
        delta,
    })
}

/// `E[exp(-tr(u X X^T))]` for `X ~ N(g, I_m ⊗ C)` (`d x m`):
/// `exp(-tr(u (I + 2Cu)^{-1} g g^T)) / det(I + 2Cu)^{m/2}`.
pub fn marginal_laplace(g: &DMatrix<f64>, c: &DMatrix<f64>, u: &DMatrix<f64>, m: usize) -> Result<f64> {
    Ok(log_marginal_laplace(g, c, u, m)?.exp())
}

pub fn log_marginal_laplace(g: &DMatrix<f64>, c: &DMatrix<f64>, u: &DMatrix<f64>, m: usize) -> Result<f64> {
    check_psd("C", c, PSD_TOL)?;
    check_psd("u", u, PSD_TOL)?;
    let d = c.nrows();
    if u.nrows() != d || g.nrows() != d || g.ncols() != m {
        return Err(Error::dim(format!(
            "need C, u of size {d}x{d} and g of size {d}x{m}, got u {}x{}, g {}x{}",
            u.nrows(),
            u.ncols(),
            g.nrows(),
            g.ncols()
        )));
    }
    let su = psd_sqrt(u);
    let a = DMatrix::identity(d, d) + symmetrize(&(&su * c * &su)) * 2.0;
    let ch = Cholesky::new(a).ok_or_else(|| Error::Singular("I + 2√u C √u".into()))?;
    let log_det: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let h = &su * g;
    let quad = h.component_mul(&ch.solve(&h)).sum();
    Ok(-0.5 * m as f64 * log_det - quad)
}

/// `E[exp(-w ∫_0^1 W_s² ds)] = cosh(√(2w))^{-1/2}`.
pub fn bm_closed_form(w: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::domain(format!("w must be >= 0, got {w}")));
    }
    Ok((2.0 * w).sqrt().cosh().powf(-0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{
        brownian_covariance, build_problem, build_problem_with_rule, conditional_cov_from_kernel, fbm_covariance,
        ForwardCurve,
    };
    use crate::kernels::make_rl_kernel;

    fn one() -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }

    fn fbm_problem(h: f64, w: f64, n: usize) -> DiscretizedProblem {
        build_problem(
            &fbm_covariance(h).unwrap(),
            &ForwardCurve::zero(1, 1),
            &DMatrix::from_element(1, 1, w),
            0.0,
            1.0,
            n,
        )
        .unwrap()
    }

    #[test]
    fn zero_weight_gives_one() {
        let p = fbm_problem(0.3, 0.0, 20);
        let v = laplace_fredholm(&p, 1).unwrap();
        assert_eq!(v.value(), 1.0);
        assert_eq!(v.quad_term, 0.0);
        let s = mercer_eigenvalues(&p).unwrap();
        assert!(s.eigenvalues.iter().all(|l| *l == 0.0));
    }

    #[test]
    fn rank_one_covariance_is_chi_square() {
        let cov = crate::covariance::CovarianceFn::closed_form(1, 0.0, "ones", |_, _| DMatrix::from_element(1, 1, 1.0));
        let p = build_problem(&cov, &ForwardCurve::zero(1, 1), &one(), 0.0, 1.0, 500).unwrap();
        let v = laplace_fredholm(&p, 1).unwrap().value();
        assert!((v - 3f64.powf(-0.5)).abs() < 1e-3);
        let s = mercer_eigenvalues(&p).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!(s.eigenvalues[1] < 1e-12);
    }

    #[test]
    fn brownian_spectrum_and_determinant() {
        let p = build_problem(
            &brownian_covariance(1, 0.0),
            &ForwardCurve::zero(1, 1),
            &one(),
            0.0,
            1.0,
            400,
        )
        .unwrap();
        let s = mercer_spectrum(&p, true).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        // right-endpoint bias is (2 + 1/n)^2 / π² - 4/π² ≈ 1e-3 at n = 400
        assert!((s.eigenvalues[0] - 4.0 / pi2).abs() < 1.5e-3);
        assert!((s.eigenvalues[1] - 4.0 / (9.0 * pi2)).abs() < 1.5e-3);
        assert!((fredholm_determinant(&s) - 2f64.sqrt().cosh()).abs() < 5e-3);
        // eigenfunction normalization
        let e0 = s.eigenvectors.as_ref().unwrap().column(0);
        assert!((e0.norm_squared() * p.delta - 1.0).abs() < 1e-12);
        // determinant consistency with the Laplace value
        let v = laplace_fredholm(&p, 1).unwrap();
        let from_laplace = (-2.0 * v.log_det_term).exp();
        assert!((fredholm_determinant(&s) / from_laplace - 1.0).abs() < 1e-10);
        let tr = p.delta * p.c_big.trace();
        assert!((s.trace() - tr).abs() < 1e-10 * tr);
    }

    #[test]
    fn determinant_small_cases() {
        assert_eq!(fredholm_determinant(&MercerSpectrum::from_eigenvalues(vec![])), 1.0);
        assert!((fredholm_determinant(&MercerSpectrum::from_eigenvalues(vec![0.5])) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn resolvent_single_point() {
        let cov = crate::covariance::CovarianceFn::closed_form(1, 0.0, "c", |_, _| DMatrix::from_element(1, 1, 0.7));
        let p = build_problem(&cov, &ForwardCurve::zero(1, 1), &one(), 0.0, 0.5, 1).unwrap();
        let r = discrete_resolvent(&p).unwrap();
        let expected = -2.0 * 0.7 / (1.0 + 2.0 * 0.7 * 0.5);
        assert!((r.values[(0, 0)] - expected).abs() < 1e-15);
        let zero = fbm_problem(0.4, 0.0, 5);
        assert_eq!(crate::linalg::max_abs(&discrete_resolvent(&zero).unwrap().values), 0.0);
    }

    #[test]
    fn resolvent_residuals_and_inverse() {
        for rule in [GridRule::RightEndpoint, GridRule::Trapezoid] {
            let p = build_problem_with_rule(
                &fbm_covariance(0.3).unwrap(),
                &ForwardCurve::zero(1, 1),
                &DMatrix::from_element(1, 1, 2.0),
                0.0,
                1.0,
                60,
                rule,
            )
            .unwrap();
            let r = discrete_resolvent(&p).unwrap();
            let (a, b) = r.residuals(&p);
            assert!(a < 1e-12 && b < 1e-12, "{a} {b}");
            assert!(r.inverse_identity_error(&p) < 1e-12);
        }
    }

    #[test]
    fn exponent_matches_laplace_for_constant_kernel() {
        let k = VolterraKernel::constant_scalar(1.0);
        let cov = conditional_cov_from_kernel(&k, 0.0).unwrap();
        let g = ForwardCurve::from_fn(1, 1, |s| DMatrix::from_element(1, 1, 0.3 + s));
        let p = build_problem(&cov, &g, &DMatrix::from_element(1, 1, 1.5), 0.0, 1.0, 40).unwrap();
        let ce = characteristic_exponent(&p, &k, 1).unwrap();
        let lv = laplace_fredholm(&p, 1).unwrap();
        assert!(
            (ce.phi - lv.log_det_term).abs() < 1e-12,
            "{} {}",
            ce.phi,
            lv.log_det_term
        );
        assert!((ce.quadratic_form(&p) - lv.quad_term).abs() < 1e-12);
        let a = crate::linalg::asymmetry(&ce.psi_density);
        assert!(a < 1e-12);
    }

    #[test]
    fn exponent_of_matrix_kernel() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8]);
        let k = VolterraKernel::constant(sigma).unwrap();
        let cov = conditional_cov_from_kernel(&k, 0.2).unwrap();
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.6]);
        let p = build_problem(&cov, &ForwardCurve::zero(2, 3), &w, 0.2, 1.0, 15).unwrap();
        let ce = characteristic_exponent(&p, &k, 3).unwrap();
        let lv = laplace_fredholm(&p, 3).unwrap();
        assert!((ce.phi - lv.log_value).abs() < 1e-11);
        assert_eq!(ce.diagonal_weight, -w);
    }

    #[test]
    fn exponent_for_rl_kernel_is_close() {
        let k = make_rl_kernel(0.3).unwrap();
        let cov = conditional_cov_from_kernel(&k, 0.0).unwrap();
        let p = build_problem(&cov, &ForwardCurve::zero(1, 1), &one(), 0.0, 1.0, 100).unwrap();
        let ce = characteristic_exponent(&p, &k, 1).unwrap();
        let lv = laplace_fredholm(&p, 1).unwrap();
        // left-rule conditioning cells differ from the exact covariance at O(δ^{2H})
        assert!((ce.phi - lv.log_value).abs() < 5e-2, "{} {}", ce.phi, lv.log_value);
    }

    #[test]
    fn scaled_laplace_matches_direct() {
        let g = ForwardCurve::from_fn(1, 1, |s| DMatrix::from_element(1, 1, 1.0 - s));
        let base = build_problem(&fbm_covariance(0.7).unwrap(), &g, &one(), 0.0, 1.0, 50).unwrap();
        let scaled = ScaledLaplace::new(&base, 1).unwrap();
        for z in [0.0, 0.3, 2.5] {
            let p = build_problem(
                &fbm_covariance(0.7).unwrap(),
                &g,
                &DMatrix::from_element(1, 1, z),
                0.0,
                1.0,
                50,
            )
            .unwrap();
            let direct = laplace_fredholm(&p, 1).unwrap();
            let fast = scaled.eval(z);
            assert!((direct.log_value - fast.log_value).abs() < 1e-12);
        }
    }

    #[test]
    fn marginal_transform_cases() {
        let half = DMatrix::from_element(1, 1, 0.5);
        let v = marginal_laplace(&DMatrix::zeros(1, 1), &one(), &half, 1).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-15);
        let g = DMatrix::from_row_slice(2, 1, &[0.5, -1.0]);
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let det = marginal_laplace(&g, &DMatrix::zeros(2, 2), &u, 1).unwrap();
        let expected = (-(g.transpose() * &u * &g)[(0, 0)]).exp();
        assert!((det - expected).abs() < 1e-15);
        assert_eq!(
            marginal_laplace(&g, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), 1).unwrap(),
            1.0
        );
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(marginal_laplace(&g, &asym, &u, 1).is_err());
    }

    #[test]
    fn brownian_closed_form() {
        assert!((bm_closed_form(1.0).unwrap() - 0.677_567_805_5).abs() < 1e-10);
        assert_eq!(bm_closed_form(0.0).unwrap(), 1.0);
        assert!((bm_closed_form(2.0).unwrap() - 2f64.cosh().powf(-0.5)).abs() < 1e-15);
        assert!(bm_closed_form(-1.0).is_err());
    }
}
