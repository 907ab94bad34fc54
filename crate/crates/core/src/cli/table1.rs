//! Convergence table of `I^n(H) = E[exp(-Σ_i δ (W^H_{s_i})^2)]` towards the
//! integrated transform `I(H)` for fractional Brownian motion on `[0, 1]`.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{build_problem, fbm_covariance, ForwardCurve};
use crate::error::Result;
use crate::fredholm::laplace_fredholm;
use crate::montecarlo::{mc_integrated_laplace, MCEstimate};

pub const HURST: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const GRID_SIZES: [usize; 8] = [10, 20, 30, 50, 100, 200, 500, 1000];

/// Published Monte Carlo values of `I(H)`; the `H = 1/2` entry is the
/// closed form `cosh(√2)^{-1/2}`.
pub const REFERENCE: [(f64, f64); 5] = [
    (0.1, 0.50038),
    (0.3, 0.60748),
    (0.5, 0.67757),
    (0.7, 0.72506),
    (0.9, 0.76012),
];

pub fn reference(hurst: f64) -> Option<f64> {
    REFERENCE
        .iter()
        .find(|(h, _)| (*h - hurst).abs() < 1e-12)
        .map(|(_, v)| *v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    #[serde(rename = "H")]
    pub hurst: f64,
    pub n: usize,
    #[serde(rename = "In")]
    pub value: f64,
    #[serde(rename = "ref")]
    pub reference: f64,
    pub abs_err: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

/// `I^n(H)` on the right-endpoint grid of `(0, 1]`.
pub fn discrete_transform(hurst: f64, n: usize) -> Result<f64> {
    let p = build_problem(
        &fbm_covariance(hurst)?,
        &ForwardCurve::zero(1, 1),
        &DMatrix::from_element(1, 1, 1.0),
        0.0,
        1.0,
        n,
    )?;
    Ok(laplace_fredholm(&p, 1)?.value())
}

/// Monte Carlo budget used to replace the tabulated references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McBudget {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

pub fn mc_reference(hurst: f64, budget: McBudget) -> Result<MCEstimate> {
    let grid: Vec<f64> = (1..=budget.steps).map(|i| i as f64 / budget.steps as f64).collect();
    mc_integrated_laplace(
        &fbm_covariance(hurst)?,
        &ForwardCurve::zero(1, 1),
        &grid,
        &DMatrix::from_element(1, 1, 1.0),
        budget.paths,
        budget.seed,
    )
}

/// Rows ordered by `H` then `n`. Without a budget, `ref` is the tabulated
/// value (`NaN` for untabulated `H`); with one, it is a fresh Monte Carlo
/// estimate and `stderr` is filled in.
pub fn compute_table1(hursts: &[f64], sizes: &[usize], budget: Option<McBudget>) -> Result<Vec<Table1Row>> {
    let refs: Vec<(f64, Option<f64>)> = hursts
        .iter()
        .map(|h| match budget {
            Some(b) => mc_reference(*h, b).map(|e| (e.mean, Some(e.stderr))),
            None => Ok((reference(*h).unwrap_or(f64::NAN), None)),
        })
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..hursts.len())
        .flat_map(|i| (0..sizes.len()).map(move |j| (i, j)))
        .collect();
    cells
        .into_par_iter()
        .map(|(i, j)| {
            let value = discrete_transform(hursts[i], sizes[j])?;
            let (reference, stderr) = refs[i];
            Ok(Table1Row {
                hurst: hursts[i],
                n: sizes[j],
                value,
                reference,
                abs_err: (value - reference).abs(),
                stderr,
            })
        })
        .collect()
}

/// 17 significant digits, fixed notation for moderate magnitudes.
pub fn fmt17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..16).contains(&exp) {
        let prec = (16 - exp).max(0) as usize;
        format!("{x:.prec$}")
    } else {
        format!("{x:.16e}")
    }
}

/// Header `H,n,In,ref,abs_err`, plus `stderr` when any row carries one.
pub fn write_csv(rows: &[Table1Row], out: &mut impl Write) -> std::io::Result<()> {
    let with_se = rows.iter().any(|r| r.stderr.is_some());
    writeln!(out, "H,n,In,ref,abs_err{}", if with_se { ",stderr" } else { "" })?;
    for r in rows {
        write!(
            out,
            "{},{},{},{},{}",
            r.hurst,
            r.n,
            fmt17(r.value),
            fmt17(r.reference),
            fmt17(r.abs_err)
        )?;
        if with_se {
            write!(out, ",{}", r.stderr.map(fmt17).unwrap_or_default())?;
        }
        writeln!(out)?;
    }
    Ok(())
}
