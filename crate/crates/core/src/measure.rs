//! Compactly supported spectral measures on the real line.
//!
//! A [`SpectralMeasure`] is either a finite sum of point masses, a density on
//! an interval `[lo, hi]` with known power-law behaviour at both edges (plus an
//! optional atom at zero), or one of the two named families with closed form
//! transforms: the semicircle law and the Marchenko–Pastur law.
//!
//! Densities carry their edge exponents as metadata. An exponent `alpha` at
//! `hi` means `f(t) ~ C (hi - t)^alpha` as `t -> hi`; quadrature uses it to
//! absorb the endpoint singularity and the transforms module uses it to decide
//! whether edge limits are finite.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::{adaptive, integrate_power_edges, EdgePoint};

pub(crate) const QUAD_TOL: f64 = 1e-13;
const MASS_TOL: f64 = 1e-10;
const CDF_GRID: usize = 4096;
const MAX_MOMENT: u32 = 8;

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Finite collection of point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl AtomicMeasure {
    /// Atom locations in ascending order.
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Clone)]
enum DensityProfile {
    Closure(DensityFn),
    Grid(GridDensity),
}

/// Density sampled on a uniform grid. The smooth factor
/// `f(t) / ((t - lo)^a_lo (hi - t)^a_hi)` is interpolated, so the edge power
/// laws are reproduced exactly.
#[derive(Clone, Debug)]
struct GridDensity {
    smooth: Vec<f64>,
    scale: f64,
}

impl GridDensity {
    fn smooth_at(&self, u: f64) -> f64 {
        // u in [0, 1]; Catmull–Rom on the smooth factor
        let m = self.smooth.len() - 1;
        let x = (u * m as f64).clamp(0.0, m as f64);
        let i = (x.floor() as usize).min(m - 1);
        let s = x - i as f64;
        let at = |k: isize| -> f64 {
            let k = k.clamp(0, m as isize) as usize;
            self.smooth[k]
        };
        let i = i as isize;
        let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        let v = 0.5
            * (2.0 * p1
                + (-p0 + p2) * s
                + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s * s
                + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s * s * s);
        v.max(0.0)
    }
}

/// Density on `[lo, hi]` with edge exponents and an optional atom at zero.
#[derive(Clone)]
pub struct DensityMeasure {
    lo: f64,
    hi: f64,
    alpha_lo: f64,
    alpha_hi: f64,
    atom_at_zero: f64,
    profile: DensityProfile,
}

impl fmt::Debug for DensityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityMeasure")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("alpha_lo", &self.alpha_lo)
            .field("alpha_hi", &self.alpha_hi)
            .field("atom_at_zero", &self.atom_at_zero)
            .finish_non_exhaustive()
    }
}

impl DensityMeasure {
    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn edge_exponents(&self) -> (f64, f64) {
        (self.alpha_lo, self.alpha_hi)
    }

    pub fn atom_at_zero(&self) -> f64 {
        self.atom_at_zero
    }
}

#[derive(Debug, Clone)]
pub enum MeasureKind {
    Atomic(AtomicMeasure),
    SmoothDensity(DensityMeasure),
    /// Semicircle law on `[-2 sigma, 2 sigma]`.
    Semicircle { sigma: f64 },
    /// Marchenko–Pastur law with ratio `c`, including the atom
    /// `max(0, 1 - 1/c)` at zero.
    MarchenkoPastur { ratio: f64 },
}

struct Inner {
    kind: MeasureKind,
    cdf: OnceLock<Result<CdfTable, String>>,
    profile: OnceLock<crate::transforms::TransformProfile>,
}

/// Immutable, cheaply clonable spectral measure.
#[derive(Clone)]
pub struct SpectralMeasure {
    inner: Arc<Inner>,
}

impl fmt::Debug for SpectralMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.inner.kind.fmt(f)
    }
}

/// Read-only view of the absolutely continuous part of a measure.
#[derive(Clone, Copy)]
pub(crate) struct Continuous<'a> {
    pub lo: f64,
    pub hi: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    source: ContinuousSource<'a>,
}

#[derive(Clone, Copy)]
enum ContinuousSource<'a> {
    Semicircle { sigma: f64 },
    MarchenkoPastur { ratio: f64 },
    Closure(&'a DensityFn),
    Grid(&'a GridDensity),
}

impl Continuous<'_> {
    pub(crate) fn density(&self, p: EdgePoint) -> f64 {
        match self.source {
            ContinuousSource::Semicircle { sigma } => {
                (p.from_lo * p.from_hi).max(0.0).sqrt() / (2.0 * PI * sigma * sigma)
            }
            ContinuousSource::MarchenkoPastur { ratio } => {
                (p.from_lo * p.from_hi).max(0.0).sqrt() / (2.0 * PI * ratio * p.t)
            }
            ContinuousSource::Closure(f) => f(p.t),
            ContinuousSource::Grid(g) => {
                let u = p.from_lo / (self.hi - self.lo);
                g.scale
                    * g.smooth_at(u)
                    * p.from_lo.powf(self.alpha_lo)
                    * p.from_hi.powf(self.alpha_hi)
            }
        }
    }

    /// `∫ kernel(t) f(t) dt`, where the kernel contributes extra power-law
    /// exponents `k_lo`, `k_hi` at the two edges (e.g. -1 for `1/(hi - t)`).
    pub(crate) fn integrate<K: FnMut(EdgePoint) -> Complex64>(
        &self,
        mut kernel: K,
        k_lo: f64,
        k_hi: f64,
    ) -> Result<Complex64> {
        integrate_power_edges(
            |p| kernel(p) * self.density(p),
            self.lo,
            self.hi,
            self.alpha_lo + k_lo,
            self.alpha_hi + k_hi,
            QUAD_TOL,
            self.cells(self.hi - self.lo),
        )
    }

    /// Quadrature pieces for a span of length `len` starting at an edge, so
    /// that grid knots fall on piece boundaries.
    fn cells(&self, len: f64) -> usize {
        match self.source {
            ContinuousSource::Grid(g) => {
                let knots = (g.smooth.len() - 1) as f64;
                ((len / (self.hi - self.lo) * knots).round() as usize).max(2)
            }
            _ => 2,
        }
    }

    fn point(&self, t: f64) -> EdgePoint {
        EdgePoint { t, from_lo: t - self.lo, from_hi: self.hi - t }
    }

    /// Mass of `[lo, x]` for `x` inside the support, by direct quadrature.
    fn mass_below(&self, x: f64) -> Result<f64> {
        if x <= self.lo {
            return Ok(0.0);
        }
        let x = x.min(self.hi);
        let lo = self.lo;
        let v = integrate_power_edges(
            |p| {
                // keep the exact edge distance when the span ends at the support edge
                let q = if x >= self.hi { p } else { self.point(lo + p.from_lo) };
                Complex64::new(self.density(q), 0.0)
            },
            lo,
            x,
            self.alpha_lo,
            if x >= self.hi { self.alpha_hi } else { 0.0 },
            QUAD_TOL,
            self.cells(x - lo),
        )?;
        Ok(v.re)
    }

    fn mass_above(&self, x: f64) -> Result<f64> {
        if x >= self.hi {
            return Ok(0.0);
        }
        let x = x.max(self.lo);
        let hi = self.hi;
        let v = integrate_power_edges(
            |p| {
                let q = if x <= self.lo { p } else { self.point(hi - p.from_hi) };
                Complex64::new(self.density(q), 0.0)
            },
            x,
            hi,
            if x <= self.lo { self.alpha_lo } else { 0.0 },
            self.alpha_hi,
            QUAD_TOL,
            self.cells(hi - x),
        )?;
        Ok(v.re)
    }

    fn mass_between(&self, a: f64, b: f64) -> Result<f64> {
        let v = adaptive(
            |t| Complex64::new(self.density(self.point(t)), 0.0),
            a,
            b,
            QUAD_TOL,
            1e-16,
        )?;
        Ok(v.re)
    }
}

/// Cumulative mass of the continuous part on a uniform grid.
#[derive(Debug, Clone)]
struct CdfTable {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SpectralMeasure {
    fn from_kind(kind: MeasureKind) -> Self {
        Self {
            inner: Arc::new(Inner { kind, cdf: OnceLock::new(), profile: OnceLock::new() }),
        }
    }

    pub fn semicircle(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidMeasure(format!("semicircle sigma must be positive, got {sigma}")));
        }
        Ok(Self::from_kind(MeasureKind::Semicircle { sigma }))
    }

    pub fn marchenko_pastur(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "Marchenko-Pastur ratio must be positive, got {ratio}"
            )));
        }
        Ok(Self::from_kind(MeasureKind::MarchenkoPastur { ratio }))
    }

    /// Point masses; atoms are sorted and weights must sum to one.
    pub fn atomic(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "atomic measure needs matching non-empty atoms/weights, got {} and {}",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidMeasure("atom locations must be finite".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidMeasure("atom weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("atom weights sum to {total}, not 1")));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (atoms, weights) = pairs.into_iter().unzip();
        Ok(Self::from_kind(MeasureKind::Atomic(AtomicMeasure { atoms, weights })))
    }

    /// Density given as a closure on `[lo, hi]`. The closure must integrate to
    /// `1 - atom_at_zero` within 1e-10.
    pub fn density(
        lo: f64,
        hi: f64,
        density: DensityFn,
        alpha_lo: f64,
        alpha_hi: f64,
        atom_at_zero: f64,
    ) -> Result<Self> {
        check_density_shape(lo, hi, alpha_lo, alpha_hi, atom_at_zero)?;
        let m = Self::from_kind(MeasureKind::SmoothDensity(DensityMeasure {
            lo,
            hi,
            alpha_lo,
            alpha_hi,
            atom_at_zero,
            profile: DensityProfile::Closure(density),
        }));
        let mass = m.continuous().map(|c| c.mass_below(hi)).transpose()?.unwrap_or(0.0);
        if (mass + atom_at_zero - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "density mass {mass} plus atom {atom_at_zero} is not 1"
            )));
        }
        Ok(m)
    }

    /// Density from samples on the uniform grid `lo + i (hi - lo)/(N - 1)`.
    /// The samples are renormalized so the total mass is exactly one.
    pub fn density_grid(
        lo: f64,
        hi: f64,
        samples: &[f64],
        alpha_lo: f64,
        alpha_hi: f64,
        atom_at_zero: f64,
    ) -> Result<Self> {
        check_density_shape(lo, hi, alpha_lo, alpha_hi, atom_at_zero)?;
        if samples.len() < 4 {
            return Err(Error::InvalidMeasure("density grid needs at least 4 samples".into()));
        }
        if samples.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidMeasure("density samples must be finite and non-negative".into()));
        }
        let n = samples.len();
        let width = hi - lo;
        let mut smooth = vec![0.0; n];
        for i in 1..n - 1 {
            let d_lo = width * i as f64 / (n - 1) as f64;
            let d_hi = width - d_lo;
            smooth[i] = samples[i] / (d_lo.powf(alpha_lo) * d_hi.powf(alpha_hi));
        }
        smooth[0] = (2.0 * smooth[1] - smooth[2]).max(0.0);
        smooth[n - 1] = (2.0 * smooth[n - 2] - smooth[n - 3]).max(0.0);
        let grid = GridDensity { smooth, scale: 1.0 };
        let view = Continuous { lo, hi, alpha_lo, alpha_hi, source: ContinuousSource::Grid(&grid) };
        let raw = view.mass_below(hi)?;
        if !(raw > 0.0) {
            return Err(Error::InvalidMeasure("density grid has zero mass".into()));
        }
        let grid = GridDensity { scale: (1.0 - atom_at_zero) / raw, ..grid };
        Ok(Self::from_kind(MeasureKind::SmoothDensity(DensityMeasure {
            lo,
            hi,
            alpha_lo,
            alpha_hi,
            atom_at_zero,
            profile: DensityProfile::Grid(grid),
        })))
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.inner.kind
    }

    pub(crate) fn profile_cell(&self) -> &OnceLock<crate::transforms::TransformProfile> {
        &self.inner.profile
    }

    /// Absolutely continuous part, if any.
    pub(crate) fn continuous(&self) -> Option<Continuous<'_>> {
        match &self.inner.kind {
            MeasureKind::Atomic(_) => None,
            MeasureKind::Semicircle { sigma } => Some(Continuous {
                lo: -2.0 * sigma,
                hi: 2.0 * sigma,
                alpha_lo: 0.5,
                alpha_hi: 0.5,
                source: ContinuousSource::Semicircle { sigma: *sigma },
            }),
            MeasureKind::MarchenkoPastur { ratio } => {
                let (lo, hi) = mp_edges(*ratio);
                let alpha_lo = if (*ratio - 1.0).abs() < 1e-15 { -0.5 } else { 0.5 };
                Some(Continuous {
                    lo,
                    hi,
                    alpha_lo,
                    alpha_hi: 0.5,
                    source: ContinuousSource::MarchenkoPastur { ratio: *ratio },
                })
            }
            MeasureKind::SmoothDensity(d) => Some(Continuous {
                lo: d.lo,
                hi: d.hi,
                alpha_lo: d.alpha_lo,
                alpha_hi: d.alpha_hi,
                source: match &d.profile {
                    DensityProfile::Closure(f) => ContinuousSource::Closure(f),
                    DensityProfile::Grid(g) => ContinuousSource::Grid(g),
                },
            }),
        }
    }

    /// Point masses as `(location, weight)` pairs, ascending.
    pub(crate) fn point_masses(&self) -> Vec<(f64, f64)> {
        match &self.inner.kind {
            MeasureKind::Atomic(a) => a.atoms.iter().copied().zip(a.weights.iter().copied()).collect(),
            MeasureKind::Semicircle { .. } => Vec::new(),
            MeasureKind::MarchenkoPastur { ratio } => {
                let w = (1.0 - 1.0 / ratio).max(0.0);
                if w > 0.0 {
                    vec![(0.0, w)]
                } else {
                    Vec::new()
                }
            }
            MeasureKind::SmoothDensity(d) => {
                if d.atom_at_zero > 0.0 {
                    vec![(0.0, d.atom_at_zero)]
                } else {
                    Vec::new()
                }
            }
        }
    }

    /// Whether `t` belongs to the (closed) support, with a tolerance for atoms.
    pub(crate) fn in_support(&self, t: f64, atom_tol: f64) -> bool {
        if let Some(c) = self.continuous() {
            if t >= c.lo && t <= c.hi {
                return true;
            }
        }
        self.point_masses()
            .iter()
            .any(|(x, w)| *w > 0.0 && (t - x).abs() < atom_tol)
    }

    /// Whether the open interval `(c, d)` avoids the support.
    pub(crate) fn avoids_interval(&self, c: f64, d: f64) -> bool {
        if let Some(cont) = self.continuous() {
            if cont.hi > c && cont.lo < d {
                return false;
            }
        }
        self.point_masses().iter().all(|(x, w)| *w <= 0.0 || *x <= c || *x >= d)
    }

    /// Total mass of the measure, by weight sums and quadrature.
    pub fn total_mass(&self) -> Result<f64> {
        self.moment(0)
    }

    /// `∫ t^k dμ(t)` for `k <= 8`.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if k > MAX_MOMENT {
            return Err(domain(format!("moments above order {MAX_MOMENT} are not supported")));
        }
        let atoms: f64 = self.point_masses().iter().map(|(x, w)| w * x.powi(k as i32)).sum();
        let cont = match self.continuous() {
            Some(c) => c.integrate(|p| Complex64::new(p.t.powi(k as i32), 0.0), 0.0, 0.0)?.re,
            None => 0.0,
        };
        Ok(atoms + cont)
    }

    fn cdf_table(&self) -> Result<&CdfTable> {
        let entry = self.inner.cdf.get_or_init(|| {
            let Some(c) = self.continuous() else {
                return Ok(CdfTable { nodes: Vec::new(), cumulative: Vec::new() });
            };
            build_cdf_table(&c).map_err(|e| e.to_string())
        });
        entry.as_ref().map_err(|e| Error::Numerical(e.clone()))
    }

    /// Mass of `(-∞, x]`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let atoms: f64 = self.point_masses().iter().filter(|(a, _)| *a <= x).map(|(_, w)| w).sum();
        let cont = match self.continuous() {
            None => 0.0,
            Some(c) => {
                if x <= c.lo {
                    0.0
                } else if x >= c.hi {
                    *self.cdf_table()?.cumulative.last().unwrap_or(&0.0)
                } else {
                    let table = self.cdf_table()?;
                    let h = (c.hi - c.lo) / (CDF_GRID - 1) as f64;
                    let k = (((x - c.lo) / h).floor() as usize).min(CDF_GRID - 2);
                    if k == 0 {
                        c.mass_below(x)?
                    } else if k == CDF_GRID - 2 {
                        table.cumulative[CDF_GRID - 1] - c.mass_above(x)?
                    } else {
                        table.cumulative[k] + c.mass_between(table.nodes[k], x)?
                    }
                }
            }
        };
        Ok((atoms + cont).clamp(0.0, 1.0))
    }

    /// Weight of the atom exactly at `x` (zero for continuous points).
    pub fn atom_mass(&self, x: f64) -> f64 {
        self.point_masses().iter().filter(|(a, _)| *a == x).map(|(_, w)| w).sum()
    }

    /// Smallest `x` with `cdf(x) >= p`, by bisection.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(domain(format!("quantile level {p} outside [0, 1]")));
        }
        let (mut lo, mut hi) = support_bounds(self);
        if self.cdf(lo)? >= p {
            return Ok(lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid)? >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MeasureFile = serde_json::from_str(text)?;
        file.build()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

fn check_density_shape(lo: f64, hi: f64, alpha_lo: f64, alpha_hi: f64, w0: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidMeasure(format!("density support [{lo}, {hi}] is not a bounded interval")));
    }
    if !(alpha_lo > -1.0 && alpha_hi > -1.0) {
        return Err(Error::InvalidMeasure(format!(
            "edge exponents must exceed -1, got ({alpha_lo}, {alpha_hi})"
        )));
    }
    if !(0.0..1.0).contains(&w0) {
        return Err(Error::InvalidMeasure(format!("atom at zero must be in [0, 1), got {w0}")));
    }
    if w0 > 0.0 && lo < 0.0 && hi > 0.0 {
        return Err(Error::InvalidMeasure("atom at zero may not sit inside the density support".into()));
    }
    Ok(())
}

fn build_cdf_table(c: &Continuous<'_>) -> Result<CdfTable> {
    let h = (c.hi - c.lo) / (CDF_GRID - 1) as f64;
    let nodes: Vec<f64> = (0..CDF_GRID).map(|k| c.lo + h * k as f64).collect();
    let mut cumulative = vec![0.0; CDF_GRID];
    cumulative[1] = c.mass_below(nodes[1])?;
    for k in 1..CDF_GRID - 2 {
        cumulative[k + 1] = cumulative[k] + c.mass_between(nodes[k], nodes[k + 1])?;
    }
    cumulative[CDF_GRID - 1] = cumulative[CDF_GRID - 2] + c.mass_above(nodes[CDF_GRID - 2])?;
    Ok(CdfTable { nodes, cumulative })
}

pub(crate) fn mp_edges(ratio: f64) -> (f64, f64) {
    let r = ratio.sqrt();
    ((1.0 - r).powi(2), (1.0 + r).powi(2))
}

/// Convex hull `[a, b]` of the support, including any atom at zero.
pub fn support_bounds(measure: &SpectralMeasure) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    if let Some(c) = measure.continuous() {
        lo = c.lo;
        hi = c.hi;
    }
    for (x, w) in measure.point_masses() {
        if w > 0.0 {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo, hi)
}

/// `∫ t^k dμ(t)`.
pub fn moment(measure: &SpectralMeasure, k: u32) -> Result<f64> {
    measure.moment(k)
}

/// Eigenvalues of a finite matrix, kept in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSpectrum {
    values: Vec<f64>,
}

impl EmpiricalSpectrum {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(domain("empirical spectrum must be non-empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("empirical spectrum contains non-finite values"));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Kolmogorov (sup-norm) distance between the empirical CDF and `measure`'s CDF.
///
/// Both CDFs are right-continuous step/monotone functions, so the supremum is
/// attained at (or just left of) a sample point or an atom of the measure.
pub fn ks_distance(empirical: &EmpiricalSpectrum, measure: &SpectralMeasure) -> Result<f64> {
    let n = empirical.len() as f64;
    let mut asc: Vec<f64> = empirical.values.iter().rev().copied().collect();
    asc.dedup_by(|a, b| a == b);
    let mut points: Vec<f64> = asc;
    for (x, w) in measure.point_masses() {
        if w > 0.0 {
            points.push(x);
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();

    let sorted: Vec<f64> = empirical.values.iter().rev().copied().collect();
    let mut d: f64 = 0.0;
    let mut below = 0usize;
    for x in points {
        while below < sorted.len() && sorted[below] < x {
            below += 1;
        }
        let mut at_or_below = below;
        while at_or_below < sorted.len() && sorted[at_or_below] <= x {
            at_or_below += 1;
        }
        let f = measure.cdf(x)?;
        let f_left = (f - measure.atom_mass(x)).max(0.0);
        let e = at_or_below as f64 / n;
        let e_left = below as f64 / n;
        d = d.max((e - f).abs()).max((e_left - f_left).abs());
    }
    Ok(d.clamp(0.0, 1.0))
}

/// On-disk measure description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureFile {
    Semicircle {
        sigma: f64,
    },
    MarchenkoPastur {
        ratio: f64,
    },
    Atomic {
        atoms: Vec<f64>,
        weights: Vec<f64>,
    },
    DensityGrid {
        support: [f64; 2],
        samples: Vec<f64>,
        edge_exponents: [f64; 2],
        #[serde(default)]
        atom_at_zero: f64,
    },
}

impl MeasureFile {
    pub fn build(&self) -> Result<SpectralMeasure> {
        match self {
            MeasureFile::Semicircle { sigma } => SpectralMeasure::semicircle(*sigma),
            MeasureFile::MarchenkoPastur { ratio } => SpectralMeasure::marchenko_pastur(*ratio),
            MeasureFile::Atomic { atoms, weights } => SpectralMeasure::atomic(atoms.clone(), weights.clone()),
            MeasureFile::DensityGrid { support, samples, edge_exponents, atom_at_zero } => {
                SpectralMeasure::density_grid(
                    support[0],
                    support[1],
                    samples,
                    edge_exponents[0],
                    edge_exponents[1],
                    *atom_at_zero,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atoms() -> SpectralMeasure {
        SpectralMeasure::atomic(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap()
    }

    fn semicircle_samples(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = -2.0 + 4.0 * i as f64 / (n - 1) as f64;
                (4.0 - t * t).max(0.0).sqrt() / (2.0 * PI)
            })
            .collect()
    }

    #[test]
    fn support_of_named_families() {
        assert_eq!(support_bounds(&SpectralMeasure::semicircle(1.0).unwrap()), (-2.0, 2.0));
        let (a, b) = support_bounds(&SpectralMeasure::marchenko_pastur(0.25).unwrap());
        assert!((a - 0.25).abs() < 1e-15 && (b - 2.25).abs() < 1e-15);
        assert_eq!(support_bounds(&two_atoms()), (0.0, 2.0));
        // c > 1 includes the atom at zero
        let (a, b) = support_bounds(&SpectralMeasure::marchenko_pastur(4.0).unwrap());
        assert_eq!(a, 0.0);
        assert!((b - 9.0).abs() < 1e-14);
    }

    #[test]
    fn unit_mass_for_every_kind() {
        let measures = [
            SpectralMeasure::semicircle(1.0).unwrap(),
            SpectralMeasure::semicircle(0.3).unwrap(),
            SpectralMeasure::marchenko_pastur(0.25).unwrap(),
            SpectralMeasure::marchenko_pastur(1.0).unwrap(),
            SpectralMeasure::marchenko_pastur(4.0).unwrap(),
            two_atoms(),
            SpectralMeasure::density_grid(-2.0, 2.0, &semicircle_samples(401), 0.5, 0.5, 0.0).unwrap(),
        ];
        for m in &measures {
            let mass = m.moment(0).unwrap();
            assert!((mass - 1.0).abs() < 1e-10, "{m:?}: mass {mass}");
        }
    }

    fn riemann(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn semicircle_second_moment_matches_riemann_sum() {
        let oracle = riemann(|t| t * t * (4.0 - t * t).sqrt() / (2.0 * PI), -2.0, 2.0, 1_000_000);
        assert!((oracle - 1.0).abs() < 1e-6);
        let m2 = SpectralMeasure::semicircle(1.0).unwrap().moment(2).unwrap();
        assert!((m2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marchenko_pastur_unit_ratio_mean() {
        let oracle = riemann(|t| t * ((4.0 - t) * t).sqrt() / (2.0 * PI * t), 0.0, 4.0, 1_000_000);
        let m1 = SpectralMeasure::marchenko_pastur(1.0).unwrap().moment(1).unwrap();
        assert!((oracle - 1.0).abs() < 1e-6);
        assert!((m1 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn atomic_moments() {
        let m = two_atoms();
        assert_eq!(m.moment(0).unwrap(), 1.0);
        assert_eq!(m.moment(1).unwrap(), 1.0);
        assert!(matches!(m.moment(9), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_malformed_measures() {
        assert!(SpectralMeasure::semicircle(0.0).is_err());
        assert!(SpectralMeasure::atomic(vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(SpectralMeasure::atomic(vec![0.0], vec![-1.0]).is_err());
        let f: DensityFn = Arc::new(|_| 0.5);
        assert!(SpectralMeasure::density(0.0, 2.0, f.clone(), 0.0, 0.0, 0.0).is_ok());
        assert!(SpectralMeasure::density(0.0, 2.0, f.clone(), -1.0, 0.0, 0.0).is_err());
        assert!(SpectralMeasure::density(0.0, 3.0, f, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn cdf_of_semicircle_is_symmetric() {
        let m = SpectralMeasure::semicircle(1.0).unwrap();
        assert!((m.cdf(0.0).unwrap() - 0.5).abs() < 1e-12);
        for x in [-1.99, -1.3, -0.2, 0.7, 1.999] {
            let s = m.cdf(x).unwrap() + m.cdf(-x).unwrap();
            assert!((s - 1.0).abs() < 1e-11, "x={x}");
        }
        assert_eq!(m.cdf(-3.0).unwrap(), 0.0);
        assert_eq!(m.cdf(3.0).unwrap(), 1.0);
    }

    #[test]
    fn cdf_counts_atom_at_zero() {
        let m = SpectralMeasure::marchenko_pastur(4.0).unwrap();
        assert!((m.cdf(0.0).unwrap() - 0.75).abs() < 1e-12);
        assert!((m.cdf(0.5).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(m.atom_mass(0.0), 0.75);
    }

    #[test]
    fn ks_quantile_spectrum_is_close() {
        let m = SpectralMeasure::semicircle(1.0).unwrap();
        let n = 100;
        let values: Vec<f64> = (0..n).map(|i| m.quantile((i as f64 + 0.5) / n as f64).unwrap()).collect();
        let d = ks_distance(&EmpiricalSpectrum::new(values).unwrap(), &m).unwrap();
        assert!(d < 0.02, "{d}");
        assert!((d - 0.5 / n as f64).abs() < 1e-8);
    }

    #[test]
    fn ks_edge_concentrated_spectrum() {
        let m = SpectralMeasure::semicircle(1.0).unwrap();
        let n = 50;
        let d = ks_distance(&EmpiricalSpectrum::new(vec![2.0; n]).unwrap(), &m).unwrap();
        assert!((d - 1.0).abs() <= 1.0 / n as f64);
    }

    #[test]
    fn ks_against_atoms() {
        let m = two_atoms();
        let spectrum = EmpiricalSpectrum::new(vec![0.0, 0.0, 2.0, 2.0]).unwrap();
        assert!(ks_distance(&spectrum, &m).unwrap() < 1e-15);
        let spectrum = EmpiricalSpectrum::new(vec![0.0, 0.0, 0.0, 2.0]).unwrap();
        assert!((ks_distance(&spectrum, &m).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empirical_spectrum_sorted_descending() {
        let s = EmpiricalSpectrum::new(vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.values(), &[3.0, 2.0, 1.0]);
        assert!(EmpiricalSpectrum::new(vec![]).is_err());
    }

    #[test]
    fn measure_json_round_trip() {
        let text = r#"{"kind": "atomic", "atoms": [2.0, 0.0], "weights": [0.5, 0.5]}"#;
        let m = SpectralMeasure::from_json_str(text).unwrap();
        assert_eq!(support_bounds(&m), (0.0, 2.0));
        let bad = r#"{"kind": "semicircle", "sigma": 1.0, "extra": 3}"#;
        assert!(SpectralMeasure::from_json_str(bad).is_err());
        let grid = MeasureFile::DensityGrid {
            support: [-2.0, 2.0],
            samples: semicircle_samples(65),
            edge_exponents: [0.5, 0.5],
            atom_at_zero: 0.0,
        };
        let text = serde_json::to_string(&grid).unwrap();
        let back: MeasureFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, grid);
        assert!((back.build().unwrap().moment(2).unwrap() - 1.0).abs() < 1e-10);
    }
}
