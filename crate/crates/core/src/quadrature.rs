//! Gauss–Legendre rules, adaptive bisection, and a dyadically graded rule for
//! integrands with a power-law singularity at one endpoint.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Values that can be accumulated by the quadrature routines.
pub trait QuadValue: Clone {
    fn entries(&self) -> &[f64];
    fn entries_mut(&mut self) -> &mut [f64];

    fn scaled_zero(&self) -> Self {
        let mut z = self.clone();
        z.entries_mut().iter_mut().for_each(|v| *v = 0.0);
        z
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        for (y, x) in self.entries_mut().iter_mut().zip(x.entries()) {
            *y += a * x;
        }
    }

    fn max_abs(&self) -> f64 {
        self.entries().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl QuadValue for f64 {
    fn entries(&self) -> &[f64] {
        std::slice::from_ref(self)
    }
    fn entries_mut(&mut self) -> &mut [f64] {
        std::slice::from_mut(self)
    }
}

impl QuadValue for DMatrix<f64> {
    fn entries(&self) -> &[f64] {
        self.as_slice()
    }
    fn entries_mut(&mut self) -> &mut [f64] {
        self.as_mut_slice()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the `n`-point rule by Newton iteration on the Legendre
    /// polynomial, starting from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<V: QuadValue>(&self, f: &impl Fn(f64) -> V, a: f64, b: f64) -> V {
        let mut it = self.mapped(a, b);
        let (x0, w0) = it.next().expect("non-empty rule");
        let first = f(x0);
        let mut acc = first.scaled_zero();
        acc.axpy(w0, &first);
        for (x, w) in it {
            acc.axpy(w, &f(x));
        }
        acc
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

pub fn gl64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// Adaptive Gauss–Legendre: a 16-point panel is accepted when it agrees with
/// the sum over its two halves to `rel_tol` (relative to the running scale).
pub fn adaptive<V: QuadValue>(f: &impl Fn(f64) -> V, a: f64, b: f64, rel_tol: f64, what: &str) -> Result<V> {
    let rule = gl16();
    let whole = rule.integrate(f, a, b);
    let scale = whole.max_abs();
    let mut worst = 0.0_f64;
    let out = adaptive_rec(f, a, b, whole, rel_tol, scale, 0, &mut worst);
    out.ok_or_else(|| Error::Quadrature {
        what: what.to_string(),
        residual: worst,
    })
}

#[allow(clippy::too_many_arguments)]
fn adaptive_rec<V: QuadValue>(
    f: &impl Fn(f64) -> V,
    a: f64,
    b: f64,
    whole: V,
    rel_tol: f64,
    scale: f64,
    depth: usize,
    worst: &mut f64,
) -> Option<V> {
    let rule = gl16();
    let mid = 0.5 * (a + b);
    let left = rule.integrate(f, a, mid);
    let right = rule.integrate(f, mid, b);
    let mut halves = left.clone();
    halves.axpy(1.0, &right);
    let mut diff = halves.clone();
    diff.axpy(-1.0, &whole);
    let err = diff.max_abs();
    let scale = scale.max(halves.max_abs());
    if err <= rel_tol * scale.max(1e-300) || err <= 1e-15 * (b - a).abs() * scale {
        return Some(halves);
    }
    if depth >= 40 {
        *worst = worst.max(err);
        return None;
    }
    let l = adaptive_rec(f, a, mid, left, rel_tol, scale, depth + 1, worst)?;
    let r = adaptive_rec(f, mid, b, right, rel_tol, scale, depth + 1, worst)?;
    let mut out = l;
    out.axpy(1.0, &r);
    Some(out)
}

/// Integrates `f` over `[lo, hi]` when `f` may blow up like `(hi - r)^p`,
/// `p > -1`, as `r -> hi`. See [`integrate_singular_gap`].
pub fn integrate_singular_end<V: QuadValue>(
    f: &impl Fn(f64) -> V,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    what: &str,
) -> Result<V> {
    integrate_singular_gap(&|v: f64| f(hi - v), hi - lo, rel_tol, what)
}

/// Integrates `f(v)` over `v in [0, len]` when `f` may blow up like `v^p`,
/// `p > -1`, as `v -> 0`. Taking the distance to the singularity as the
/// variable avoids the cancellation in `hi - r` for tiny gaps.
///
/// The interval is split into dyadic panels `[L 2^-(k+1), L 2^-k]`. Once the
/// panel-to-panel ratio of every entry has stabilised (power-law regime), the
/// remaining cell is added through the geometric series of that ratio, which
/// is the exact primitive of a pure power law. A ratio `>= 1` means the
/// singularity is not integrable.
pub fn integrate_singular_gap<V: QuadValue>(f: &impl Fn(f64) -> V, len: f64, rel_tol: f64, what: &str) -> Result<V> {
    if len <= 0.0 {
        return Ok(f(1.0).scaled_zero());
    }
    let rule = gl16();
    let mut total = adaptive(f, 0.5 * len, len, rel_tol, what)?;
    let mut prev: Option<V> = None;
    let mut prev_ratio: Option<Vec<f64>> = None;
    let mut last_tail: Option<V> = None;
    let mut growing_levels = 0;
    let mut width = 0.5 * len;
    for level in 0..400 {
        let panel = rule.integrate(f, 0.5 * width, width);
        total.axpy(1.0, &panel);
        let scale = total.max_abs();
        if let Some(p) = &prev {
            let ratios: Vec<f64> = panel
                .entries()
                .iter()
                .zip(p.entries())
                .map(|(c, b)| if *b == 0.0 { 0.0 } else { c / b })
                .collect();
            let negligible = panel.max_abs() <= 1e-17 * scale.max(1e-300);
            let growing = ratios
                .iter()
                .zip(panel.entries())
                .any(|(r, c)| *r >= 1.0 - 1e-5 && c.abs() > 1e-14 * scale);
            // a non-integrable power law keeps the ratio >= 1 all the way down;
            // pre-asymptotic growth ends once the gap passes the inner scale
            growing_levels = if growing && !negligible { growing_levels + 1 } else { 0 };
            if growing_levels >= 30 {
                return Err(Error::Divergent(format!("{what}: non-integrable singularity")));
            }
            let mut tail = panel.scaled_zero();
            let mut stable = true;
            let mut tail_known = true;
            for (k, (t, (r, c))) in tail
                .entries_mut()
                .iter_mut()
                .zip(ratios.iter().zip(panel.entries()))
                .enumerate()
            {
                if *c == 0.0 {
                    continue;
                }
                if *r <= 0.0 || *r >= 1.0 {
                    stable = false;
                    tail_known = false;
                    continue;
                }
                *t = c * r / (1.0 - r);
                if let Some(pr) = &prev_ratio {
                    // error of the geometric tail caused by the ratio drift
                    let drift = c.abs() * (pr[k] - r).abs() / (1.0 - r).powi(2);
                    if drift > 0.1 * rel_tol * scale {
                        stable = false;
                    }
                } else {
                    stable = false;
                }
            }
            let tail_small = tail_known && tail.max_abs() <= rel_tol * 1e-2 * scale;
            if negligible || (stable && level >= 3) || tail_small && level >= 8 {
                total.axpy(1.0, &tail);
                return Ok(total);
            }
            prev_ratio = Some(ratios);
            last_tail = Some(tail);
        }
        prev = Some(panel);
        width *= 0.5;
        if width <= f64::MIN_POSITIVE * 1e10 * len {
            // panels can no longer be resolved in floating point: close with
            // the last available power-law tail estimate
            if let Some(t) = &last_tail {
                total.axpy(1.0, t);
            }
            return Ok(total);
        }
    }
    Err(Error::Quadrature {
        what: what.to_string(),
        residual: prev.map(|p| p.max_abs()).unwrap_or(f64::NAN),
    })
}

/// Composite Simpson rule on `npts` equispaced points (`npts` odd, >= 3).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, npts: usize) -> f64 {
    let npts = if npts.is_multiple_of(2) { npts + 1 } else { npts.max(3) };
    let h = (b - a) / (npts - 1) as f64;
    let mut acc = f(a) + f(b);
    for i in 1..npts - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
