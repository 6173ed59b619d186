//! Adaptive Gauss–Legendre quadrature with power-law endpoint substitution.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

const GL_ORDER: usize = 20;
const MAX_DEPTH: usize = 64;
const MAX_PANELS: usize = 200_000;

pub(crate) struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights on [-1, 1] by Newton iteration on P_n.
    pub(crate) fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    fn apply<F: FnMut(f64) -> Complex64>(&self, f: &mut F, lo: f64, hi: f64) -> Complex64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += f(mid + half * x) * *w;
        }
        acc * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub(crate) fn gauss_legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(GL_ORDER))
}

/// Integrate `f` over `[lo, hi]` by recursive bisection until each panel's
/// two-half estimate agrees with its one-panel estimate.
pub(crate) fn adaptive<F: FnMut(f64) -> Complex64>(
    mut f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Complex64> {
    if hi <= lo {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let rule = gauss_legendre();
    let whole = rule.apply(&mut f, lo, hi);
    let mut stack = vec![(lo, hi, whole, 0usize)];
    let mut total = Complex64::new(0.0, 0.0);
    let mut scale = whole.norm();
    let mut panels = 0usize;
    while let Some((a, b, est, depth)) = stack.pop() {
        panels += 1;
        if panels > MAX_PANELS {
            return Err(Error::Numerical(format!(
                "quadrature on [{lo}, {hi}] exceeded {MAX_PANELS} panels"
            )));
        }
        let m = 0.5 * (a + b);
        let left = rule.apply(&mut f, a, m);
        let right = rule.apply(&mut f, m, b);
        let refined = left + right;
        scale = scale.max(refined.norm());
        let width_share = (b - a) / (hi - lo);
        let tol = (rel_tol * scale).max(abs_tol) * width_share;
        let err = (refined - est).norm();
        let roundoff = 64.0 * f64::EPSILON * (left.norm() + right.norm());
        if !err.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if err <= tol || err <= roundoff || m <= a || m >= b {
            total += refined;
        } else if depth >= MAX_DEPTH {
            // a fractional power the substitution could not remove; the
            // remaining error is far below the global budget
            if err <= rel_tol * scale {
                total += refined;
                continue;
            }
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{a}, {b}] (error {err:e})"
            )));
        } else {
            stack.push((a, m, left, depth + 1));
            stack.push((m, b, right, depth + 1));
        }
    }
    Ok(total)
}

/// Position inside an interval with exact distances to both endpoints.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EdgePoint {
    pub t: f64,
    pub from_lo: f64,
    pub from_hi: f64,
}

/// Integrate `g` over `[lo, hi]` when `g(t)` behaves like `(t - lo)^beta_lo`
/// and `(hi - t)^beta_hi` at the endpoints (both exponents > -1).
///
/// The interval is cut into `cells` equal pieces (at least two). The two end
/// pieces are mapped through `t = edge ± d(s)` so that the endpoint power law
/// becomes a smooth integrand in `s`; interior pieces use plain quadrature.
pub(crate) fn integrate_power_edges<F: FnMut(EdgePoint) -> Complex64>(
    mut g: F,
    lo: f64,
    hi: f64,
    beta_lo: f64,
    beta_hi: f64,
    rel_tol: f64,
    cells: usize,
) -> Result<Complex64> {
    if !(beta_lo > -1.0 && beta_hi > -1.0) {
        return Err(Error::Numerical(format!(
            "edge exponents ({beta_lo}, {beta_hi}) are not integrable"
        )));
    }
    let cells = cells.max(2);
    let width = hi - lo;
    let h = width / cells as f64;
    let abs_tol = 1e-15 / cells as f64;
    let mut total = adaptive_edge(
        |d| g(EdgePoint { t: lo + d, from_lo: d, from_hi: width - d }),
        h,
        beta_lo,
        rel_tol,
        abs_tol,
    )?;
    total += adaptive_edge(
        |d| g(EdgePoint { t: hi - d, from_lo: width - d, from_hi: d }),
        h,
        beta_hi,
        rel_tol,
        abs_tol,
    )?;
    for i in 1..cells - 1 {
        let a = lo + h * i as f64;
        let b = if i + 1 == cells - 1 { hi - h } else { lo + h * (i + 1) as f64 };
        total += adaptive(|t| g(EdgePoint { t, from_lo: t - lo, from_hi: hi - t }), a, b, rel_tol, abs_tol)?;
    }
    Ok(total)
}

/// `∫_0^len g(d) dd` for `g(d) ~ d^beta` at `d = 0`.
fn adaptive_edge<F: FnMut(f64) -> Complex64>(
    mut g: F,
    len: f64,
    beta: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Complex64> {
    let q = edge_power(beta);
    if q == 1.0 {
        return adaptive(|d| if d <= 0.0 { Complex64::new(0.0, 0.0) } else { g(d) }, 0.0, len, rel_tol, abs_tol);
    }
    adaptive(
        |s| {
            if s <= 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let d = len * s.powf(q);
            let jac = len * q * s.powf(q - 1.0);
            g(d) * jac
        },
        0.0,
        1.0,
        rel_tol,
        abs_tol,
    )
}

/// Substitution power `q` in `d = s^q`. Integer exponents need none, half
/// integers become smooth under `q = 2`, anything else is made bounded.
fn edge_power(beta: f64) -> f64 {
    let near = |x: f64| (x - x.round()).abs() < 1e-12;
    if beta >= 0.0 && near(beta) {
        1.0
    } else if near(2.0 * beta) {
        2.0
    } else {
        1.0 / (1.0 + beta)
    }
}
