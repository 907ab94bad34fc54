//! JSON run configuration shared by all subcommands.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{brownian_covariance, fbm_covariance, ForwardCurve};
use crate::error::{Error, Result};
use crate::kernels::{make_bridge_kernel, make_rl_kernel, ExpSumKernel, VolterraKernel};
use crate::lift::DEFAULT_STEPS_PER_UNIT;
use crate::linalg::{check_psd, PSD_TOL};
use crate::pricing::{Backend, VolterraModel};

pub const DEFAULT_N: usize = 1000;
pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_MC_STEPS: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;

/// A scalar (`c I` for square matrices, all entries `c` otherwise) or a
/// matrix given as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    /// Parses `1.5` or `[[1,0],[0,2]]`.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text.trim()).map_err(|e| Error::Config(format!("bad matrix {text:?}: {e}")))
    }

    fn rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::Config(
                "matrix rows must be non-empty and of equal length".into(),
            ));
        }
        Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn square(&self, d: usize) -> Result<DMatrix<f64>> {
        let m = match self {
            MatrixSpec::Scalar(c) => DMatrix::identity(d, d) * *c,
            MatrixSpec::Rows(rows) => Self::rows(rows)?,
        };
        if m.shape() != (d, d) {
            return Err(Error::Config(format!(
                "expected a {d}x{d} matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }

    pub fn shaped(&self, d: usize, m: usize) -> Result<DMatrix<f64>> {
        let out = match self {
            MatrixSpec::Scalar(c) => DMatrix::from_element(d, m, *c),
            MatrixSpec::Rows(rows) => Self::rows(rows)?,
        };
        if out.shape() != (d, m) {
            return Err(Error::Config(format!(
                "expected a {d}x{m} matrix, got {}x{}",
                out.nrows(),
                out.ncols()
            )));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub c: MatrixSpec,
    pub x: f64,
}

/// Kernel or covariance of the driving process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    /// Riemann–Liouville kernel.
    Rl {
        hurst: f64,
    },
    Constant {
        #[serde(default = "one")]
        sigma: MatrixSpec,
        #[serde(default)]
        dim: Option<usize>,
    },
    Zero {
        #[serde(default)]
        dim: Option<usize>,
    },
    Expsum {
        terms: Vec<TermSpec>,
    },
    Bridge {
        t1: f64,
    },
    /// Fractional Brownian covariance.
    Fbm {
        hurst: f64,
    },
    /// Standard Brownian covariance.
    Bm {
        #[serde(default)]
        dim: Option<usize>,
    },
}

fn one() -> MatrixSpec {
    MatrixSpec::Scalar(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Lift for exponential-sum kernels, Fredholm otherwise.
    #[default]
    Auto,
    Fredholm,
    Lift,
}

/// All run parameters; command-line flags override the file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    pub g0: Option<MatrixSpec>,
    pub m: Option<usize>,
    pub w: Option<MatrixSpec>,
    #[serde(rename = "Q")]
    pub q_matrix: Option<MatrixSpec>,
    pub xi: Option<f64>,
    #[serde(rename = "spread_Q")]
    pub spread_q: Option<MatrixSpec>,
    pub spread_xi: Option<f64>,
    pub alpha: Option<Vec<f64>>,
    pub q: Option<f64>,
    pub eps: Option<f64>,
    pub t: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub backend: Option<BackendKind>,
    pub n: Option<usize>,
    pub steps: Option<usize>,
    pub cells: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub reference: Option<f64>,
    pub output: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` replace those of `self`.
    pub fn merge(mut self, other: RunConfig) -> Self {
        overlay!(
            self, other, model, g0, m, w, q_matrix, xi, spread_q, spread_xi, alpha, q, eps, t, horizon, backend, n,
            steps, cells, paths, seed, reference, output
        );
        self
    }

    pub fn t(&self) -> f64 {
        self.t.unwrap_or(0.0)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(1.0)
    }

    pub fn multiplicity(&self) -> usize {
        self.m.unwrap_or(1)
    }

    pub fn validate_times(&self) -> Result<()> {
        let (t, h) = (self.t(), self.horizon());
        if !(t >= 0.0 && h > t && h.is_finite()) {
            return Err(Error::Config(format!("need 0 <= t < T, got t={t}, T={h}")));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<VolterraModel> {
        let spec = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Config("no model given (use --kernel/--cov or a config file)".into()))?;
        let m = self.multiplicity();
        if m == 0 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        let g0 = |d: usize| -> Result<ForwardCurve> {
            Ok(match &self.g0 {
                None => ForwardCurve::zero(d, m),
                Some(spec) => ForwardCurve::constant(spec.shaped(d, m)?),
            })
        };
        let config_err = |e: Error| Error::Config(e.to_string());
        let kernel = |k: VolterraKernel| -> Result<VolterraModel> {
            let d = k.dim();
            VolterraModel::from_kernel(k, g0(d)?, m).map_err(config_err)
        };
        match spec {
            ModelSpec::Rl { hurst } => kernel(make_rl_kernel(*hurst).map_err(config_err)?),
            ModelSpec::Constant { sigma, dim } => {
                let sigma = match (sigma, dim) {
                    (MatrixSpec::Scalar(_), d) => sigma.square(d.unwrap_or(1))?,
                    (MatrixSpec::Rows(r), _) => MatrixSpec::Rows(r.clone()).square(r.len())?,
                };
                kernel(VolterraKernel::constant(sigma).map_err(config_err)?)
            }
            ModelSpec::Zero { dim } => kernel(VolterraKernel::zero(dim.unwrap_or(1)).map_err(config_err)?),
            ModelSpec::Expsum { terms } => {
                if terms.is_empty() {
                    return Err(Error::Config("expsum needs at least one term".into()));
                }
                let d = match &terms[0].c {
                    MatrixSpec::Scalar(_) => 1,
                    MatrixSpec::Rows(r) => r.len(),
                };
                let parsed = terms
                    .iter()
                    .map(|t| Ok((t.c.square(d)?, t.x)))
                    .collect::<Result<Vec<_>>>()?;
                kernel(VolterraKernel::exp_sum(ExpSumKernel::new(parsed).map_err(config_err)?))
            }
            ModelSpec::Bridge { t1 } => kernel(make_bridge_kernel(*t1, self.horizon()).map_err(config_err)?),
            ModelSpec::Fbm { hurst } => {
                let cov = fbm_covariance(*hurst).map_err(config_err)?;
                VolterraModel::from_covariance(cov, g0(1)?, m).map_err(config_err)
            }
            ModelSpec::Bm { dim } => {
                let d = dim.unwrap_or(1);
                VolterraModel::from_covariance(brownian_covariance(d, 0.0), g0(d)?, m).map_err(config_err)
            }
        }
    }

    /// A user-supplied PSD weight, `c I` for scalars.
    pub fn weight(&self, spec: Option<&MatrixSpec>, name: &str, d: usize) -> Result<DMatrix<f64>> {
        let spec = spec.ok_or_else(|| Error::Config(format!("missing --{name}")))?;
        let w = spec.square(d)?;
        check_psd(name, &w, PSD_TOL).map_err(|e| Error::Config(e.to_string()))?;
        Ok(w)
    }

    pub fn alpha(&self, d: usize) -> Result<DVector<f64>> {
        let a = self.alpha.clone().unwrap_or_else(|| vec![1.0; d]);
        if a.len() != d {
            return Err(Error::Config(format!(
                "alpha has {} entries, model dimension is {d}",
                a.len()
            )));
        }
        Ok(DVector::from_vec(a))
    }

    pub fn backend(&self, model: &VolterraModel) -> Backend {
        let n = self.n.unwrap_or(DEFAULT_N);
        let steps = self.steps.unwrap_or(DEFAULT_STEPS_PER_UNIT);
        match self.backend.unwrap_or_default() {
            BackendKind::Fredholm => Backend::fredholm(n),
            BackendKind::Lift => Backend::Lift { steps_per_unit: steps },
            BackendKind::Auto => match model.default_backend(n) {
                Backend::Lift { .. } => Backend::Lift { steps_per_unit: steps },
                other => other,
            },
        }
    }
}

/// Parses `"c@x,c@x,..."` into scalar exponential-sum terms.
pub fn parse_terms(text: &str) -> Result<Vec<TermSpec>> {
    text.split(',')
        .map(|item| {
            let (c, x) = item
                .split_once('@')
                .ok_or_else(|| Error::Config(format!("term {item:?} is not of the form c@x")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number {s:?} in term {item:?}: {e}")))
            };
            Ok(TermSpec {
                c: MatrixSpec::Scalar(num(c)?),
                x: num(x)?,
            })
        })
        .collect()
}
