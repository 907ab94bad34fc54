//! Monte Carlo oracle: exact Gaussian sampling on a grid and OU factor paths.
//!
//! Paths are generated in fixed blocks of [`BLOCK_PATHS`]; block `b` draws from
//! a ChaCha8 stream keyed by `(seed, b)`, so results do not depend on how
//! blocks are scheduled across threads.

use nalgebra::{DMatrix, DMatrixView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{CovarianceFn, ForwardCurve};
use crate::error::{Error, Result};
use crate::kernels::ExpSumKernel;
use crate::linalg::{check_psd, pairwise_sum, psd_factor, PSD_TOL};

pub const BLOCK_PATHS: usize = 64;

/// Relative tolerance for clipping negative eigenvalues of grid covariances.
const CLIP_TOL: f64 = 1e-8;

const Z90: f64 = 1.645;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub ci90: (f64, f64),
}

impl MCEstimate {
    pub fn from_samples(samples: &[f64], steps: usize, seed: u64) -> Self {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let stderr = if n > 1 {
            let dev: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        MCEstimate {
            mean,
            stderr,
            paths: n,
            steps,
            seed,
            ci90: (mean - Z90 * stderr, mean + Z90 * stderr),
        }
    }

    /// `|mean - reference| <= k * stderr`.
    pub fn contains(&self, reference: f64, k: f64) -> bool {
        (self.mean - reference).abs() <= k * self.stderr
    }
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

fn normals(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(rows, cols);
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    z
}

fn block_sizes(paths: usize) -> Vec<(usize, usize)> {
    (0..paths.div_ceil(BLOCK_PATHS))
        .map(|b| (b, BLOCK_PATHS.min(paths - b * BLOCK_PATHS)))
        .collect()
}

/// Samples `paths` draws per block from `N(mean, L L^T)` with independent
/// columns.
struct GaussianSampler {
    factor: DMatrix<f64>,
    mean: DMatrix<f64>,
}

impl GaussianSampler {
    fn new(cov: &CovarianceFn, g: &ForwardCurve, grid: &[f64]) -> Result<Self> {
        let d = cov.dim();
        let (rows, m) = g.shape();
        if rows != d || m == 0 {
            return Err(Error::dim(format!(
                "mean curve is {rows}x{m}, expected {d}xm with m >= 1"
            )));
        }
        if grid.is_empty() {
            return Err(Error::domain("grid is empty"));
        }
        if grid.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::domain("grid must be strictly increasing"));
        }
        if !(grid[0] > cov.base_time()) {
            return Err(Error::domain(format!(
                "grid must lie after the conditioning time {}",
                cov.base_time()
            )));
        }
        let size = grid.len() * d;
        let mut c = DMatrix::zeros(size, size);
        for (i, s) in grid.iter().enumerate() {
            for (k, u) in grid.iter().enumerate().skip(i) {
                let block = cov.eval(*s, *u)?;
                c.view_mut((i * d, k * d), (d, d)).copy_from(&block);
                c.view_mut((k * d, i * d), (d, d)).copy_from(&block.transpose());
            }
        }
        let factor = psd_factor("grid covariance", &c, CLIP_TOL)?;
        let mut mean = DMatrix::zeros(size, m);
        if !g.is_zero() {
            for (i, s) in grid.iter().enumerate() {
                mean.rows_mut(i * d, d).copy_from(&g.eval(*s));
            }
        }
        Ok(GaussianSampler { factor, mean })
    }

    /// Returns an `N x (count m)` matrix; path `p` occupies columns
    /// `p m .. (p+1) m`.
    fn block(&self, seed: u64, block: usize, count: usize) -> DMatrix<f64> {
        let m = self.mean.ncols();
        let mut rng = block_rng(seed, block);
        let z = normals(&mut rng, self.factor.ncols(), count * m);
        let mut x = &self.factor * z;
        for p in 0..count {
            let mut cols = x.columns_mut(p * m, m);
            cols += &self.mean;
        }
        x
    }
}

/// Sampled grid paths of a `d x m` Gaussian process.
#[derive(Debug, Clone)]
pub struct PathBatch {
    /// Conditioning time; the first Riemann cell is `(start, grid[0]]`.
    pub start: f64,
    pub grid: Vec<f64>,
    pub dim: usize,
    pub cols: usize,
    pub paths: usize,
    pub seed: u64,
    /// Path `p` is the stacked `(steps d) x m` matrix, column-major, at
    /// offset `p * steps * d * m`.
    values: Vec<f64>,
}

impl PathBatch {
    pub fn steps(&self) -> usize {
        self.grid.len()
    }

    fn path_len(&self) -> usize {
        self.steps() * self.dim * self.cols
    }

    pub fn path(&self, p: usize) -> DMatrixView<'_, f64> {
        let len = self.path_len();
        DMatrixView::from_slice(&self.values[p * len..(p + 1) * len], self.steps() * self.dim, self.cols)
    }

    /// `Z_p(grid[i])` as a `d x m` matrix.
    pub fn value(&self, p: usize, i: usize) -> DMatrix<f64> {
        self.path(p).rows(i * self.dim, self.dim).into_owned()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn cell_widths(&self) -> Vec<f64> {
        cell_widths(self.start, &self.grid)
    }
}

fn cell_widths(start: f64, grid: &[f64]) -> Vec<f64> {
    let mut prev = start;
    grid.iter()
        .map(|s| {
            let w = s - prev;
            prev = *s;
            w
        })
        .collect()
}

/// Draws `paths` samples of `(Z(s))_{s in grid}` from `N(g, C)` using a
/// factor of the `(steps d)` grid covariance; columns are independent.
pub fn sample_gaussian_paths(
    cov: &CovarianceFn,
    g: &ForwardCurve,
    grid: &[f64],
    paths: usize,
    seed: u64,
) -> Result<PathBatch> {
    if paths == 0 {
        return Err(Error::domain("paths must be >= 1"));
    }
    let sampler = GaussianSampler::new(cov, g, grid)?;
    let blocks: Vec<DMatrix<f64>> = block_sizes(paths)
        .into_par_iter()
        .map(|(b, count)| sampler.block(seed, b, count))
        .collect();
    let mut values = Vec::with_capacity(paths * sampler.mean.len());
    for x in &blocks {
        values.extend_from_slice(x.as_slice());
    }
    Ok(PathBatch {
        start: cov.base_time(),
        grid: grid.to_vec(),
        dim: cov.dim(),
        cols: g.shape().1,
        paths,
        seed,
        values,
    })
}

/// `Σ_i δ_i tr(Z_i^T w Z_i)` for one stacked path.
fn riemann_quadratic(path: DMatrixView<'_, f64>, w: &DMatrix<f64>, widths: &[f64]) -> f64 {
    let d = w.nrows();
    let mut total = 0.0;
    for (i, delta) in widths.iter().enumerate() {
        let mut q = 0.0;
        for c in 0..path.ncols() {
            for a in 0..d {
                let za = path[(i * d + a, c)];
                for b in 0..d {
                    q += za * w[(a, b)] * path[(i * d + b, c)];
                }
            }
        }
        total += delta * q;
    }
    total
}

fn check_weight(w: &DMatrix<f64>, d: usize) -> Result<()> {
    check_psd("w", w, PSD_TOL)?;
    if w.nrows() != d {
        return Err(Error::dim(format!(
            "w is {}x{}, process dimension is {d}",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(())
}

/// Sample mean of `exp(-Σ_i δ_i tr(Z_i^T w Z_i))` with right-endpoint cells.
pub fn estimate_integrated_laplace(batch: &PathBatch, w: &DMatrix<f64>) -> Result<MCEstimate> {
    check_weight(w, batch.dim)?;
    let widths = batch.cell_widths();
    let samples: Vec<f64> = (0..batch.paths)
        .into_par_iter()
        .map(|p| (-riemann_quadratic(batch.path(p), w, &widths)).exp())
        .collect();
    Ok(MCEstimate::from_samples(&samples, batch.steps(), batch.seed))
}

/// Same estimate as sampling a [`PathBatch`] and calling
/// [`estimate_integrated_laplace`], without storing the paths.
pub fn mc_integrated_laplace(
    cov: &CovarianceFn,
    g: &ForwardCurve,
    grid: &[f64],
    w: &DMatrix<f64>,
    paths: usize,
    seed: u64,
) -> Result<MCEstimate> {
    if paths == 0 {
        return Err(Error::domain("paths must be >= 1"));
    }
    check_weight(w, cov.dim())?;
    let sampler = GaussianSampler::new(cov, g, grid)?;
    let widths = cell_widths(cov.base_time(), grid);
    let m = g.shape().1;
    let per_block: Vec<Vec<f64>> = block_sizes(paths)
        .into_par_iter()
        .map(|(b, count)| {
            let x = sampler.block(seed, b, count);
            (0..count)
                .map(|p| (-riemann_quadratic(x.columns(p * m, m), w, &widths)).exp())
                .collect()
        })
        .collect();
    let samples: Vec<f64> = per_block.concat();
    Ok(MCEstimate::from_samples(&samples, grid.len(), seed))
}

/// Functionals `f(X)` of a one-time batch, averaged.
pub fn estimate_marginal(batch: &PathBatch, f: impl Fn(&DMatrix<f64>) -> f64 + Sync) -> Result<MCEstimate> {
    if batch.steps() != 1 {
        return Err(Error::dim(format!(
            "expected a single-time batch, got {} times",
            batch.steps()
        )));
    }
    let samples: Vec<f64> = (0..batch.paths)
        .into_par_iter()
        .map(|p| f(&batch.value(p, 0)))
        .collect();
    Ok(MCEstimate::from_samples(&samples, 1, batch.seed))
}

/// Sample mean of `exp(-tr(u X X^T))`.
pub fn estimate_marginal_laplace(batch: &PathBatch, u: &DMatrix<f64>) -> Result<MCEstimate> {
    check_psd("u", u, PSD_TOL)?;
    if u.nrows() != batch.dim {
        return Err(Error::dim(format!(
            "u is {}x{}, process dimension is {}",
            u.nrows(),
            u.ncols(),
            batch.dim
        )));
    }
    estimate_marginal(batch, |x| (-(u * x * x.transpose()).trace()).exp())
}

/// Factor states of all paths at one time.
#[derive(Debug, Clone)]
pub struct FactorBatch {
    pub t: f64,
    /// `Ỹ_t` per path, stacking `c_i Y_t(x_i)` (`n d x m`).
    pub states: Vec<DMatrix<f64>>,
}

/// Joint covariance of `∫_0^δ e^{-x_i (δ-s)} dW_s` across rates.
fn ou_step_covariance(rates: &[f64], delta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rates.len(), rates.len(), |i, j| {
        let r = rates[i] + rates[j];
        if r == 0.0 {
            delta
        } else {
            -(-r * delta).exp_m1() / r
        }
    })
}

/// Exact recursion for `Y_t(x_i) = ∫_0^t e^{-x_i (t-s)} dW_s` with a shared
/// `d x m` Brownian motion, reported through `Ỹ`. `grid` starts at 0.
pub fn simulate_ou_factors(
    k: &ExpSumKernel,
    grid: &[f64],
    paths: usize,
    seed: u64,
    m: usize,
) -> Result<Vec<FactorBatch>> {
    if paths == 0 || m == 0 {
        return Err(Error::domain("paths and m must be >= 1"));
    }
    if grid.first() != Some(&0.0) {
        return Err(Error::domain("grid must start at 0"));
    }
    if grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::domain("grid must be strictly increasing"));
    }
    let rates = k.rates();
    let n = rates.len();
    let d = k.dim();
    let steps: Vec<(DMatrix<f64>, Vec<f64>)> = grid
        .windows(2)
        .map(|p| {
            let delta = p[1] - p[0];
            let l = psd_factor("OU step covariance", &ou_step_covariance(&rates, delta), CLIP_TOL)?;
            Ok((l, rates.iter().map(|x| (-x * delta).exp()).collect()))
        })
        .collect::<Result<_>>()?;
    let stack = |y: &[DMatrix<f64>]| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n * d, m);
        for (i, (c, _)) in k.terms().iter().enumerate() {
            out.rows_mut(i * d, d).copy_from(&(c * &y[i]));
        }
        out
    };

    let per_block: Vec<Vec<Vec<DMatrix<f64>>>> = block_sizes(paths)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = block_rng(seed, b);
            (0..count)
                .map(|_| {
                    let mut y = vec![DMatrix::zeros(d, m); n];
                    let mut traj = Vec::with_capacity(grid.len());
                    traj.push(stack(&y));
                    for (l, decay) in &steps {
                        let eps: Vec<DMatrix<f64>> = (0..n).map(|_| normals(&mut rng, d, m)).collect();
                        for i in 0..n {
                            y[i] *= decay[i];
                            for j in 0..n {
                                if l[(i, j)] != 0.0 {
                                    y[i] += &eps[j] * l[(i, j)];
                                }
                            }
                        }
                        traj.push(stack(&y));
                    }
                    traj
                })
                .collect()
        })
        .collect();

    let mut out: Vec<FactorBatch> = grid
        .iter()
        .map(|t| FactorBatch {
            t: *t,
            states: Vec::with_capacity(paths),
        })
        .collect();
    for traj in per_block.into_iter().flatten() {
        for (slot, state) in out.iter_mut().zip(traj) {
            slot.states.push(state);
        }
    }
    Ok(out)
}
