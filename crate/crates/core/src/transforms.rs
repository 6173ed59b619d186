//! Cauchy and T transforms, their edge limits and monotone inverses.
//!
//! `G(z) = ∫ dμ(t)/(z - t)` and `T(z) = ∫ t dμ(t)/(z - t) = z G(z) - 1`.
//! On every real interval outside the support both are strictly decreasing,
//! so the inverses are computed by bracketed bisection.

use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::measure::{mp_edges, support_bounds, MeasureKind, SpectralMeasure};
use crate::quadrature::EdgePoint;

/// Points closer than this to an atom or inside the continuous support are rejected.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Which transform to evaluate or invert.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    G,
    T,
}

/// Value or first derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    Derivative,
}

impl TryFrom<u8> for Order {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Order::Value),
            1 => Ok(Order::Derivative),
            _ => Err(domain(format!("transform order must be 0 or 1, got {v}"))),
        }
    }
}

/// Real interval on which a transform is inverted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    /// `(b, +∞)`, image `(0, F(b+))`.
    AboveB,
    /// `(-∞, a)`, image `(F(a-), 0)`.
    BelowA,
    /// A hole `(c, d)` of the support, image `(F(d-), F(c+))`.
    Gap(f64, f64),
}

/// Whether transition threshold and edge derivative are finite, given the
/// density's power-law exponent at the edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeClassification {
    pub threshold_finite: bool,
    pub derivative_infinite: bool,
}

pub fn classify_edge(alpha: f64) -> Result<EdgeClassification> {
    if !(alpha > -1.0) {
        return Err(domain(format!("edge exponent must exceed -1, got {alpha}")));
    }
    Ok(EdgeClassification { threshold_finite: alpha > 0.0, derivative_infinite: alpha <= 1.0 })
}

/// Edge limits of `G` and `T` in extended reals. `T` entries are `None`
/// when the measure is not supported on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformProfile {
    pub a: f64,
    pub b: f64,
    pub g_at_a_minus: f64,
    pub g_at_b_plus: f64,
    pub g_prime_at_a_minus: f64,
    pub g_prime_at_b_plus: f64,
    pub t_at_a_minus: Option<f64>,
    pub t_at_b_plus: Option<f64>,
    pub t_prime_at_a_minus: Option<f64>,
    pub t_prime_at_b_plus: Option<f64>,
}

impl TransformProfile {
    /// `F(b+)` for the chosen transform.
    pub fn upper(&self, which: Which) -> Option<f64> {
        match which {
            Which::G => Some(self.g_at_b_plus),
            Which::T => self.t_at_b_plus,
        }
    }

    pub fn lower(&self, which: Which) -> Option<f64> {
        match which {
            Which::G => Some(self.g_at_a_minus),
            Which::T => self.t_at_a_minus,
        }
    }

    pub fn upper_derivative(&self, which: Which) -> Option<f64> {
        match which {
            Which::G => Some(self.g_prime_at_b_plus),
            Which::T => self.t_prime_at_b_plus,
        }
    }

    pub fn lower_derivative(&self, which: Which) -> Option<f64> {
        match which {
            Which::G => Some(self.g_prime_at_a_minus),
            Which::T => self.t_prime_at_a_minus,
        }
    }
}

pub(crate) fn supports_t(measure: &SpectralMeasure) -> bool {
    let (a, b) = support_bounds(measure);
    a >= 0.0 && b > 0.0
}

fn check_outside(measure: &SpectralMeasure, z: Complex64) -> Result<()> {
    if z.im.abs() < SUPPORT_TOL && measure.in_support(z.re, SUPPORT_TOL) {
        return Err(domain(format!("z = {z} lies in the support of the measure")));
    }
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(domain(format!("z = {z} is not finite")));
    }
    Ok(())
}

fn is_real(z: Complex64) -> bool {
    z.im == 0.0
}

/// `sqrt(z - lo) sqrt(z - hi)`: the branch that behaves like `z` at infinity.
fn edge_root(z: Complex64, lo: f64, hi: f64) -> Complex64 {
    if is_real(z) {
        let x = z.re;
        let mag = ((x - lo).abs() * (x - hi).abs()).sqrt();
        let sign = if x >= hi { 1.0 } else { -1.0 };
        Complex64::new(sign * mag, 0.0)
    } else {
        (z - lo).sqrt() * (z - hi).sqrt()
    }
}

fn semicircle_g(sigma: f64, z: Complex64, order: Order) -> Complex64 {
    let s = edge_root(z, -2.0 * sigma, 2.0 * sigma);
    let g = 2.0 / (z + s);
    match order {
        Order::Value => g,
        Order::Derivative => -g / s,
    }
}

fn mp_g(c: f64, z: Complex64, order: Order) -> Complex64 {
    let (a, b) = mp_edges(c);
    let s = edge_root(z, a, b);
    let ds = (z - (1.0 + c)) / s;
    let plus = z + (c - 1.0) + s;
    let minus = z + (c - 1.0) - s;
    if plus.norm() >= minus.norm() {
        let g = 2.0 / plus;
        match order {
            Order::Value => g,
            Order::Derivative => -2.0 * (1.0 + ds) / (plus * plus),
        }
    } else {
        // near the atom at zero (c > 1): G = (z + c - 1 - s) / (2 c z)
        match order {
            Order::Value => minus / (2.0 * c * z),
            Order::Derivative => ((1.0 - ds) * z - minus) / (2.0 * c * z * z),
        }
    }
}

fn mp_t(c: f64, z: Complex64, order: Order) -> Complex64 {
    let (a, b) = mp_edges(c);
    let s = edge_root(z, a, b);
    let den = z - (c + 1.0) + s;
    match order {
        Order::Value => 2.0 / den,
        Order::Derivative => {
            let ds = (z - (1.0 + c)) / s;
            -2.0 * (1.0 + ds) / (den * den)
        }
    }
}

/// Sum/integral of `weight(t) * kernel(z - t)` over the measure, with
/// `kernel(u) = 1/u` (Value) or `-1/u^2` (Derivative) and `weight(t) = t^power`.
fn generic_transform(measure: &SpectralMeasure, z: Complex64, order: Order, power: i32) -> Result<Complex64> {
    let kernel = |u: Complex64| match order {
        Order::Value => 1.0 / u,
        Order::Derivative => -1.0 / (u * u),
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, w) in measure.point_masses() {
        if power > 0 && x == 0.0 {
            continue;
        }
        acc += w * x.powi(power) * kernel(z - x);
    }
    if let Some(c) = measure.continuous() {
        // offsets from the nearer edge keep z - t accurate when z hugs the support
        let (lo, hi) = (c.lo, c.hi);
        let offset = |p: EdgePoint| {
            if z.re >= hi {
                (z - hi) + p.from_hi
            } else if z.re <= lo {
                (z - lo) - p.from_lo
            } else {
                z - p.t
            }
        };
        acc += c.integrate(|p| kernel(offset(p)) * p.t.powi(power), 0.0, 0.0)?;
    }
    Ok(acc)
}

/// `G(z)` or `G'(z)` for `z` off the support.
pub fn cauchy_transform(measure: &SpectralMeasure, z: Complex64, order: Order) -> Result<Complex64> {
    check_outside(measure, z)?;
    let v = match measure.kind() {
        MeasureKind::Semicircle { sigma } => semicircle_g(*sigma, z, order),
        MeasureKind::MarchenkoPastur { ratio } => mp_g(*ratio, z, order),
        _ => generic_transform(measure, z, order, 0)?,
    };
    Ok(v)
}

/// `T(z)` or `T'(z)`; requires support in `[0, ∞)` and a measure other than `δ0`.
pub fn t_transform(measure: &SpectralMeasure, z: Complex64, order: Order) -> Result<Complex64> {
    if !supports_t(measure) {
        return Err(domain("T-transform needs a measure supported on [0, ∞), other than δ0"));
    }
    check_outside(measure, z)?;
    let v = match measure.kind() {
        MeasureKind::MarchenkoPastur { ratio } => mp_t(*ratio, z, order),
        _ => generic_transform(measure, z, order, 1)?,
    };
    Ok(v)
}

/// `G` or `T` at a real point, as a real number.
pub fn transform_real(measure: &SpectralMeasure, which: Which, x: f64, order: Order) -> Result<f64> {
    let z = Complex64::new(x, 0.0);
    let v = match which {
        Which::G => cauchy_transform(measure, z, order)?,
        Which::T => t_transform(measure, z, order)?,
    };
    Ok(v.re)
}

/// Edge limits, computed once per measure.
pub fn edge_limits(measure: &SpectralMeasure) -> Result<TransformProfile> {
    if let Some(p) = measure.profile_cell().get() {
        return Ok(*p);
    }
    let p = compute_profile(measure)?;
    let _ = measure.profile_cell().set(p);
    Ok(p)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Upper,
    Lower,
}

/// `(G, G')` limit at one hull edge from outside.
fn g_edge(measure: &SpectralMeasure, side: Side) -> Result<(f64, f64)> {
    let (a, b) = support_bounds(measure);
    let (edge, outward) = match side {
        Side::Upper => (b, 1.0),
        Side::Lower => (a, -1.0),
    };
    let atoms = measure.point_masses();
    if atoms.iter().any(|(x, w)| *w > 0.0 && *x == edge) {
        return Ok((outward * f64::INFINITY, f64::NEG_INFINITY));
    }
    let c = measure
        .continuous()
        .ok_or_else(|| Error::Numerical("hull edge is neither an atom nor a density edge".into()))?;
    let alpha = match side {
        Side::Upper => c.alpha_hi,
        Side::Lower => c.alpha_lo,
    };
    let class = classify_edge(alpha)?;
    let closed_form = matches!(measure.kind(), MeasureKind::Semicircle { .. } | MeasureKind::MarchenkoPastur { .. });
    let value = if !class.threshold_finite {
        outward * f64::INFINITY
    } else if closed_form {
        transform_at_edge(measure, edge, Which::G)
    } else {
        let (k_lo, k_hi) = if side == Side::Upper { (0.0, -1.0) } else { (-1.0, 0.0) };
        let cont = c
            .integrate(
                |p| {
                    let d = if side == Side::Upper { p.from_hi } else { -p.from_lo };
                    Complex64::new(1.0 / d, 0.0)
                },
                k_lo,
                k_hi,
            )?
            .re;
        cont + atoms.iter().map(|(x, w)| w / (edge - x)).sum::<f64>()
    };
    let deriv = if class.derivative_infinite {
        f64::NEG_INFINITY
    } else {
        let (k_lo, k_hi) = if side == Side::Upper { (0.0, -2.0) } else { (-2.0, 0.0) };
        let cont = c
            .integrate(
                |p| {
                    let d = if side == Side::Upper { p.from_hi } else { p.from_lo };
                    Complex64::new(-1.0 / (d * d), 0.0)
                },
                k_lo,
                k_hi,
            )?
            .re;
        cont - atoms.iter().map(|(x, w)| w / (edge - x).powi(2)).sum::<f64>()
    };
    Ok((value, deriv))
}

/// Closed-form families evaluated exactly at a square-root edge.
fn transform_at_edge(measure: &SpectralMeasure, edge: f64, which: Which) -> f64 {
    let z = Complex64::new(edge, 0.0);
    match (measure.kind(), which) {
        (MeasureKind::Semicircle { sigma }, Which::G) => semicircle_g(*sigma, z, Order::Value).re,
        (MeasureKind::MarchenkoPastur { ratio }, Which::G) => mp_g(*ratio, z, Order::Value).re,
        (MeasureKind::MarchenkoPastur { ratio }, Which::T) => mp_t(*ratio, z, Order::Value).re,
        _ => f64::NAN,
    }
}

/// `(T, T')` limits at one edge; `T = zG - 1` away from zero, and at a lower
/// edge located at the origin the factor `t` cancels the singularity.
fn t_edge(measure: &SpectralMeasure, side: Side, g: (f64, f64)) -> Result<(f64, f64)> {
    let (a, b) = support_bounds(measure);
    let edge = if side == Side::Upper { b } else { a };
    if edge != 0.0 {
        let value = if g.0.is_finite() { edge * g.0 - 1.0 } else { g.0 * edge.signum() };
        let deriv = if g.0.is_finite() && g.1.is_finite() { g.0 + edge * g.1 } else { f64::NEG_INFINITY };
        return Ok((value, deriv));
    }
    // lower edge at the origin
    let atoms = measure.point_masses();
    let w0: f64 = atoms.iter().filter(|(x, _)| *x == 0.0).map(|(_, w)| w).sum();
    if let MeasureKind::MarchenkoPastur { ratio } = measure.kind() {
        let z = Complex64::new(0.0, 0.0);
        let value = mp_t(*ratio, z, Order::Value).re;
        let deriv = if *ratio == 1.0 { f64::NEG_INFINITY } else { mp_t(*ratio, z, Order::Derivative).re };
        return Ok((value, deriv));
    }
    let value = -(1.0 - w0);
    let mut deriv = -atoms.iter().filter(|(x, _)| *x > 0.0).map(|(x, w)| w / x).sum::<f64>();
    if let Some(c) = measure.continuous() {
        if c.lo == 0.0 {
            if classify_edge(c.alpha_lo + 1.0)?.derivative_infinite {
                return Ok((value, f64::NEG_INFINITY));
            }
            deriv -= c.integrate(|p| Complex64::new(1.0 / p.from_lo, 0.0), -1.0, 0.0)?.re;
        } else {
            deriv -= c.integrate(|p| Complex64::new(1.0 / p.t, 0.0), 0.0, 0.0)?.re;
        }
    }
    Ok((value, deriv))
}

fn compute_profile(measure: &SpectralMeasure) -> Result<TransformProfile> {
    let (a, b) = support_bounds(measure);
    let upper = g_edge(measure, Side::Upper)?;
    let lower = g_edge(measure, Side::Lower)?;
    let (tu, tl) = if supports_t(measure) {
        (Some(t_edge(measure, Side::Upper, upper)?), Some(t_edge(measure, Side::Lower, lower)?))
    } else {
        (None, None)
    };
    Ok(TransformProfile {
        a,
        b,
        g_at_a_minus: lower.0,
        g_at_b_plus: upper.0,
        g_prime_at_a_minus: lower.1,
        g_prime_at_b_plus: upper.1,
        t_at_a_minus: tl.map(|v| v.0),
        t_at_b_plus: tu.map(|v| v.0),
        t_prime_at_a_minus: tl.map(|v| v.1),
        t_prime_at_b_plus: tu.map(|v| v.1),
    })
}

const MAX_BISECTIONS: usize = 400;
const MAX_GROWTH: usize = 2000;

/// Bisection on a strictly decreasing `f` with `f(lo) >= w >= f(hi)`.
fn bisect_decreasing(
    mut f: impl FnMut(f64) -> Result<f64>,
    w: f64,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        if v == w {
            return Ok(mid);
        }
        if v > w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f(lo)?, f(hi)?);
    Ok(if (flo - w).abs() <= (fhi - w).abs() { lo } else { hi })
}

/// The unique `z` on `branch` with `F(z) = w`, for `F` in {G, T}.
pub fn invert_transform(measure: &SpectralMeasure, w: f64, which: Which, branch: Branch) -> Result<f64> {
    if !w.is_finite() {
        return Err(domain(format!("cannot invert at non-finite value {w}")));
    }
    if which == Which::T && !supports_t(measure) {
        return Err(domain("T-transform needs a measure supported on [0, ∞), other than δ0"));
    }
    let f = |x: f64| transform_real(measure, which, x, Order::Value);
    let profile = edge_limits(measure)?;
    let (a, b) = (profile.a, profile.b);
    let scale = b - a + 1.0;
    match branch {
        Branch::AboveB => {
            let limit = profile.upper(which).unwrap_or(f64::NAN);
            if !(w > 0.0 && w < limit) {
                return Err(Error::OutOfRange { value: w, lo: 0.0, hi: limit });
            }
            let (lo, hi) = grow_bracket(&f, w, b, 1.0, 1e-9 * scale)?;
            bisect_decreasing(f, w, lo, hi)
        }
        Branch::BelowA => {
            let limit = profile.lower(which).unwrap_or(f64::NAN);
            if !(w < 0.0 && w > limit) {
                return Err(Error::OutOfRange { value: w, lo: limit, hi: 0.0 });
            }
            let (lo, hi) = grow_bracket(&f, w, a, -1.0, 1e-9 * scale)?;
            bisect_decreasing(f, w, lo, hi)
        }
        Branch::Gap(c, d) => {
            if !(c < d) || !measure.avoids_interval(c, d) {
                return Err(domain(format!("({c}, {d}) is not a hole of the support")));
            }
            let (lo, hi) = gap_bracket(measure, &f, w, c, d)?;
            bisect_decreasing(f, w, lo, hi)
        }
    }
}

/// Bracket for the outer branches: offsets from `edge` start at `delta0`
/// and double outward until `F` crosses `w`; shrink toward the edge when the
/// root is closer than `delta0`.
fn grow_bracket(
    f: &impl Fn(f64) -> Result<f64>,
    w: f64,
    edge: f64,
    dir: f64,
    delta0: f64,
) -> Result<(f64, f64)> {
    // on the upper branch F decreases with distance; on the lower one F(edge - δ)
    // increases toward 0 from below, i.e. F decreases along the real axis
    let crossed = |v: f64| if dir > 0.0 { v < w } else { v > w };
    let mut delta = delta0;
    let first = f(edge + dir * delta)?;
    if crossed(first) {
        let mut inner = 0.5 * delta;
        let mut k = 0;
        while crossed(f(edge + dir * inner)?) {
            inner *= 0.5;
            k += 1;
            if k > MAX_GROWTH || inner == 0.0 || edge + dir * inner == edge {
                return Err(Error::Numerical(format!("root for w = {w} is unresolvably close to the edge {edge}")));
            }
        }
        return Ok(order_pair(edge + dir * inner, edge + dir * delta));
    }
    for _ in 0..MAX_GROWTH {
        let next = 2.0 * delta;
        let v = f(edge + dir * next)?;
        if crossed(v) {
            return Ok(order_pair(edge + dir * delta, edge + dir * next));
        }
        delta = next;
        if !delta.is_finite() {
            break;
        }
    }
    Err(Error::Numerical(format!("could not bracket w = {w} from edge {edge}")))
}

fn order_pair(x: f64, y: f64) -> (f64, f64) {
    if x <= y { (x, y) } else { (y, x) }
}

fn gap_bracket(
    measure: &SpectralMeasure,
    f: &impl Fn(f64) -> Result<f64>,
    w: f64,
    c: f64,
    d: f64,
) -> Result<(f64, f64)> {
    let width = d - c;
    let c_open = measure.in_support(c, SUPPORT_TOL);
    let d_open = measure.in_support(d, SUPPORT_TOL);
    let mut lo = if c_open { c + 0.25 * width } else { c };
    let mut hi = if d_open { d - 0.25 * width } else { d };
    let mut shrink = 0.25 * width;
    for _ in 0..MAX_GROWTH {
        let (flo, fhi) = (f(lo)?, f(hi)?);
        if !(flo.is_finite() && fhi.is_finite()) {
            return Err(Error::Numerical(format!("non-finite transform on the hole ({c}, {d})")));
        }
        let lo_ok = flo >= w;
        let hi_ok = fhi <= w;
        if lo_ok && hi_ok {
            return Ok((lo, hi));
        }
        let stuck_lo = !lo_ok && (!c_open || lo - c <= f64::EPSILON * c.abs().max(width));
        let stuck_hi = !hi_ok && (!d_open || d - hi <= f64::EPSILON * d.abs().max(width));
        if stuck_lo || stuck_hi {
            return Err(Error::OutOfRange { value: w, lo: fhi, hi: flo });
        }
        shrink *= 0.5;
        if !lo_ok {
            lo = c + shrink;
        }
        if !hi_ok {
            hi = d - shrink;
        }
    }
    Err(Error::Numerical(format!("could not bracket w = {w} in ({c}, {d})")))
}

/// `R(w) = G^{-1}(w) - 1/w`, using the branch above `b` for `w > 0` and below `a` for `w < 0`.
pub fn r_transform(measure: &SpectralMeasure, w: f64) -> Result<f64> {
    let branch = if w > 0.0 { Branch::AboveB } else { Branch::BelowA };
    Ok(invert_transform(measure, w, Which::G, branch)? - 1.0 / w)
}

/// `S(w) = (1 + w) / (w T^{-1}(w))`.
pub fn s_transform(measure: &SpectralMeasure, w: f64) -> Result<f64> {
    let branch = if w > 0.0 { Branch::AboveB } else { Branch::BelowA };
    let z = invert_transform(measure, w, Which::T, branch)?;
    Ok((1.0 + w) / (w * z))
}
