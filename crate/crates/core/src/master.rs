//! Exact finite-n characterization of the outliers of a finite-rank
//! perturbation: `z` outside the spectrum of `X` is an eigenvalue of the
//! perturbed matrix iff the `r × r` matrix
//! `M(z) = I − U* (z − X)^{-1} U Θ` is singular.
//!
//! Everything is expressed in the eigenbasis of `X`, so `X = diag(λ)` and
//! the frame holds the coordinates of the spike directions in that basis.

use faer::{c64, Mat};
use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::prediction::Model;

const ORTHONORMAL_TOL: f64 = 1e-10;
const POLE_TOL: f64 = 1e-14;
const SCAN_CELLS: usize = 2048;
const CONTOUR_NODES: usize = 512;
const DIP_LEVEL: f64 = 1e-6;
const KERNEL_TOL: f64 = 1e-8;
const REFINE_DEPTH: usize = 6;
const REFINE_CELLS: usize = 64;

/// `μ_ij = Σ_k conj(u_ki) u_kj δ_{λ_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMeasure {
    pub atoms: Vec<f64>,
    pub weights: Vec<Complex64>,
}

impl WeightedMeasure {
    /// Measure of columns `i`, `j` of `frame` against the eigenvalues `lambdas`.
    pub fn from_frame(lambdas: &[f64], frame: &Mat<c64>, i: usize, j: usize) -> Result<Self> {
        if frame.nrows() != lambdas.len() || i >= frame.ncols() || j >= frame.ncols() {
            return Err(domain("frame shape does not match the eigenvalues"));
        }
        let weights = (0..lambdas.len()).map(|k| frame[(k, i)].conj() * frame[(k, j)]).collect();
        Ok(Self { atoms: lambdas.to_vec(), weights })
    }

    pub fn total_mass(&self) -> Complex64 {
        self.weights.iter().sum()
    }

    pub fn total_variation(&self) -> f64 {
        self.weights.iter().map(|w| w.norm()).sum()
    }

    pub fn cauchy(&self, z: Complex64) -> Complex64 {
        self.atoms.iter().zip(&self.weights).map(|(l, w)| w / (z - l)).sum()
    }
}

/// `M(z)` for a perturbation of `diag(lambdas)` by the frame `U` and strengths `Θ`.
#[derive(Debug, Clone)]
pub struct MasterEquationSystem {
    lambdas: Vec<f64>,
    frame: Mat<c64>,
    thetas: Vec<f64>,
    model: Model,
    // conj(u_ki) u_kj for every k, row-major in (i, j)
    products: Vec<Complex64>,
}

impl MasterEquationSystem {
    /// Rows of `frame` follow `lambdas`; both are reordered so that the
    /// eigenvalues are descending.
    pub fn new(lambdas: Vec<f64>, frame: Mat<c64>, thetas: Vec<f64>, model: Model) -> Result<Self> {
        let n = lambdas.len();
        let r = thetas.len();
        if n == 0 || r == 0 {
            return Err(domain("need at least one eigenvalue and one spike"));
        }
        if frame.nrows() != n || frame.ncols() != r {
            return Err(domain(format!(
                "frame is {}x{}, expected {n}x{r}",
                frame.nrows(),
                frame.ncols()
            )));
        }
        if lambdas.iter().any(|l| !l.is_finite()) {
            return Err(domain("eigenvalues must be finite"));
        }
        if let Some(t) = thetas.iter().find(|t| !t.is_finite() || **t == 0.0) {
            return Err(domain(format!("spike strengths must be finite and nonzero, got {t}")));
        }
        if model != Model::Additive && lambdas.iter().any(|l| *l < 0.0) {
            return Err(domain("multiplicative perturbation needs non-negative eigenvalues"));
        }
        let gram = frame.adjoint() * &frame;
        for i in 0..r {
            for j in 0..r {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - c64::new(target, 0.0)).norm() > ORTHONORMAL_TOL {
                    return Err(domain(format!("frame columns are not orthonormal (entry {i},{j})")));
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| lambdas[*b].total_cmp(&lambdas[*a]));
        let lambdas: Vec<f64> = order.iter().map(|k| lambdas[*k]).collect();
        let frame = Mat::from_fn(n, r, |k, j| frame[(order[k], j)]);
        let mut products = Vec::with_capacity(n * r * r);
        for k in 0..n {
            for i in 0..r {
                for j in 0..r {
                    products.push(frame[(k, i)].conj() * frame[(k, j)]);
                }
            }
        }
        Ok(Self { lambdas, frame, thetas, model, products })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn frame(&self) -> &Mat<c64> {
        &self.frame
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn rank(&self) -> usize {
        self.thetas.len()
    }

    pub fn weighted_measure(&self, i: usize, j: usize) -> Result<WeightedMeasure> {
        WeightedMeasure::from_frame(&self.lambdas, &self.frame, i, j)
    }

    fn kernel(&self, z: Complex64, lambda: f64) -> Complex64 {
        match self.model {
            Model::Additive => 1.0 / (z - lambda),
            Model::Multiplicative | Model::Similarity => lambda / (z - lambda),
        }
    }

    fn check_pole(&self, z: f64) -> Result<()> {
        for &l in &self.lambdas {
            if (z - l).abs() <= POLE_TOL * l.abs().max(1.0) {
                return Err(Error::Pole { z, lambda: l });
            }
        }
        Ok(())
    }

    /// Entries of `M(z)`, row-major.
    fn entries(&self, z: Complex64) -> Vec<Complex64> {
        let r = self.rank();
        let mut acc = vec![Complex64::new(0.0, 0.0); r * r];
        for (k, &l) in self.lambdas.iter().enumerate() {
            let kz = self.kernel(z, l);
            let block = &self.products[k * r * r..(k + 1) * r * r];
            for (a, p) in acc.iter_mut().zip(block) {
                *a += p * kz;
            }
        }
        for i in 0..r {
            for j in 0..r {
                let e = &mut acc[i * r + j];
                *e = -*e * self.thetas[j];
                if i == j {
                    *e += 1.0;
                }
            }
        }
        acc
    }

    /// `M(z)` at a real point outside the spectrum of `X`.
    pub fn eval_m(&self, z: f64) -> Result<Mat<c64>> {
        self.check_pole(z)?;
        Ok(self.eval_m_complex(Complex64::new(z, 0.0)))
    }

    /// `M(z)` for complex `z`; no pole check off the real axis.
    pub fn eval_m_complex(&self, z: Complex64) -> Mat<c64> {
        let r = self.rank();
        let e = self.entries(z);
        Mat::from_fn(r, r, |i, j| e[i * r + j])
    }

    fn det_complex(&self, z: Complex64) -> Complex64 {
        small_det(self.entries(z), self.rank())
    }

    /// `det M(z)` for real `z`; real because `M(z) = Θ^{-1}`-congruent to a Hermitian matrix.
    pub fn det(&self, z: f64) -> Result<f64> {
        self.check_pole(z)?;
        Ok(self.det_complex(Complex64::new(z, 0.0)).re)
    }

    fn scale(&self) -> f64 {
        self.lambdas[0] - self.lambdas[self.lambdas.len() - 1] + 1.0
    }

    /// Interval that contains every eigenvalue of the perturbed matrix.
    fn eigenvalue_bounds(&self) -> (f64, f64) {
        let top = self.lambdas[0];
        let bottom = self.lambdas[self.lambdas.len() - 1];
        let t_max = self.thetas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let t_min = self.thetas.iter().cloned().fold(f64::INFINITY, f64::min);
        let margin = 1e-6 * self.scale();
        match self.model {
            Model::Additive => (bottom + t_min.min(0.0) - margin, top + t_max.max(0.0) + margin),
            Model::Multiplicative | Model::Similarity => {
                let growth = self.thetas.iter().map(|t| (1.0 + t).abs()).fold(1.0, f64::max);
                if self.thetas.iter().all(|t| 1.0 + t >= 0.0) {
                    (bottom * (1.0 + t_min).min(1.0) - margin, top * growth + margin)
                } else {
                    (-top * growth - margin, top * growth + margin)
                }
            }
        }
    }

    /// Outliers above and below the spectrum of `X`, descending.
    pub fn outliers(&self) -> Result<Vec<f64>> {
        let top = self.lambdas[0];
        let bottom = self.lambdas[self.lambdas.len() - 1];
        let mut out = self.isolated_eigenvalues(top, f64::INFINITY)?;
        out.extend(self.isolated_eigenvalues(f64::NEG_INFINITY, bottom)?);
        out.sort_by(|a, b| b.total_cmp(a));
        Ok(out)
    }

    /// Every `z` in `(lo, hi)` where `M(z)` is singular, ascending, repeated
    /// by multiplicity. The interval may end at eigenvalues of `X` but must not
    /// contain any.
    pub fn isolated_eigenvalues(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if !(lo < hi) || lo.is_nan() || hi.is_nan() {
            return Err(domain(format!("empty search interval ({lo}, {hi})")));
        }
        if let Some(l) = self.lambdas.iter().find(|l| **l > lo && **l < hi) {
            return Err(domain(format!("search interval ({lo}, {hi}) contains the eigenvalue {l}")));
        }
        let scale = self.scale();
        let clip = 1e-9 * scale;
        let (lo_bound, hi_bound) = self.eigenvalue_bounds();
        // nearest poles at or beyond each end
        let pole_lo = self.lambdas.iter().cloned().filter(|l| *l <= lo).fold(f64::NEG_INFINITY, f64::max);
        let pole_hi = self.lambdas.iter().cloned().filter(|l| *l >= hi).fold(f64::INFINITY, f64::min);
        let a = lo.max(lo_bound).max(pole_lo + clip);
        let b = hi.min(hi_bound).min(pole_hi - clip);
        if !(a < b) {
            return Ok(Vec::new());
        }
        let grid = scan_grid(a, b, pole_lo, pole_hi, clip, scale);
        let mut roots = Vec::new();
        self.scan(&grid, 0, &mut roots)?;
        roots.sort_by(f64::total_cmp);
        Ok(roots)
    }

    fn scan(&self, grid: &[f64], depth: usize, roots: &mut Vec<f64>) -> Result<()> {
        let d: Vec<f64> = grid.iter().map(|z| self.det_complex(Complex64::new(*z, 0.0)).re).collect();
        let mut claimed = vec![false; grid.len().saturating_sub(1)];
        for i in 0..grid.len() {
            if d[i] == 0.0 {
                let c = grid[i.saturating_sub(1)];
                let e = grid[(i + 1).min(grid.len() - 1)];
                let count = if c < e { self.winding(c, e).max(1) } else { 1 };
                roots.extend(std::iter::repeat_n(grid[i], count));
                if i > 0 {
                    claimed[i - 1] = true;
                }
                if i < claimed.len() {
                    claimed[i] = true;
                }
            }
        }
        for i in 0..claimed.len() {
            if !claimed[i] && d[i].signum() != d[i + 1].signum() {
                roots.push(self.bisect(grid[i], grid[i + 1], d[i])?);
                claimed[i] = true;
            }
        }
        // dips of |det| without a sign change: possible pairs of close roots
        for i in 0..grid.len() {
            let left = if i > 0 { d[i - 1].abs() } else { f64::INFINITY };
            let right = if i + 1 < grid.len() { d[i + 1].abs() } else { f64::INFINITY };
            let v = d[i].abs();
            if !(v < DIP_LEVEL && v <= left && v <= right && v > 0.0) {
                continue;
            }
            let c = if i > 0 { grid[i - 1] } else { grid[i] };
            let e = if i + 1 < grid.len() { grid[i + 1] } else { grid[i] };
            let touched = (i > 0 && claimed[i - 1]) || (i < claimed.len() && claimed[i]);
            if touched || c == e {
                continue;
            }
            let count = self.winding(c, e);
            if count == 0 {
                continue;
            }
            if depth < REFINE_DEPTH {
                let fine: Vec<f64> =
                    (0..=REFINE_CELLS).map(|k| c + (e - c) * k as f64 / REFINE_CELLS as f64).collect();
                self.scan(&fine, depth + 1, roots)?;
            } else {
                // roots the grid cannot split: a multiple eigenvalue
                let z = self.argmin_singular(c, e, count);
                roots.extend(std::iter::repeat_n(z, count));
            }
            if i > 0 {
                claimed[i - 1] = true;
            }
            if i < claimed.len() {
                claimed[i] = true;
            }
        }
        Ok(())
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, d_lo: f64) -> Result<f64> {
        let s_lo = d_lo.signum();
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = self.det_complex(Complex64::new(mid, 0.0)).re;
            if v == 0.0 {
                return Ok(mid);
            }
            if v.signum() == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (vl, vh) = (
            self.det_complex(Complex64::new(lo, 0.0)).re.abs(),
            self.det_complex(Complex64::new(hi, 0.0)).re.abs(),
        );
        Ok(if vl <= vh { lo } else { hi })
    }

    /// Zeros of `det M` inside the circle with diameter `[c, e]`, from the
    /// winding of `det M` along the circle.
    fn winding(&self, c: f64, e: f64) -> usize {
        let center = 0.5 * (c + e);
        let radius = 0.5 * (e - c);
        let point = |k: usize| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / CONTOUR_NODES as f64;
            self.det_complex(Complex64::new(center + radius * phi.cos(), radius * phi.sin()))
        };
        let first = point(0);
        let mut prev = first;
        let mut total = 0.0;
        for k in 1..=CONTOUR_NODES {
            let cur = if k == CONTOUR_NODES { first } else { point(k) };
            total += (cur / prev).arg();
            prev = cur;
        }
        (total / (2.0 * std::f64::consts::PI)).round().max(0.0) as usize
    }

    /// Minimizer of the sum of the `count` smallest singular values of `M`,
    /// which vanish linearly at a multiple eigenvalue (unlike `det M`).
    fn argmin_singular(&self, mut a: f64, mut b: f64, count: usize) -> f64 {
        let r = self.rank();
        let f = |z: f64| -> f64 {
            match self.eval_m_complex(Complex64::new(z, 0.0)).singular_values() {
                Ok(s) => s[r.saturating_sub(count)..].iter().sum(),
                Err(_) => f64::INFINITY,
            }
        };
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let x1 = b - g * (b - a);
            let x2 = a + g * (b - a);
            if f(x1) <= f(x2) {
                b = x2;
            } else {
                a = x1;
            }
            if b - a <= f64::EPSILON * a.abs().max(b.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    }

    /// Number of singular values of `M(z)` below the kernel tolerance.
    pub fn kernel_dimension(&self, z: f64) -> Result<usize> {
        let m = self.eval_m(z)?;
        let s = m.singular_values().map_err(|e| Error::Numerical(format!("SVD of M({z}) failed: {e:?}")))?;
        Ok(s.iter().filter(|v| **v < KERNEL_TOL).count())
    }

    /// Unit eigenvector of the perturbed matrix at the isolated eigenvalue
    /// `z`, in the eigenbasis of `X`. For the multiplicative model this is the
    /// eigenvector of `X (I + P)`; for the similarity model, that of
    /// `(I + P)^{1/2} X (I + P)^{1/2}`.
    pub fn reconstruct_eigenvector(&self, z: f64) -> Result<Vec<Complex64>> {
        let m = self.eval_m(z)?;
        let r = self.rank();
        let svd = m.svd().map_err(|e| Error::Numerical(format!("SVD of M({z}) failed: {e:?}")))?;
        let s = svd.S().column_vector();
        let s_min = s[r - 1].re;
        if r >= 2 && s[r - 2].re < KERNEL_TOL {
            return Err(Error::Degenerate { z, s_min, s_next: s[r - 2].re });
        }
        let v = svd.V();
        let w: Vec<Complex64> = (0..r).map(|j| v[(j, r - 1)] * self.thetas[j]).collect();
        let zc = Complex64::new(z, 0.0);
        let mut x: Vec<Complex64> = (0..self.lambdas.len())
            .map(|k| {
                let uw: Complex64 = (0..r).map(|j| self.frame[(k, j)] * w[j]).sum();
                uw * self.kernel(zc, self.lambdas[k])
            })
            .collect();
        if self.model == Model::Similarity {
            let d: Vec<f64> = self.thetas.iter().map(|t| (1.0 + t).sqrt() - 1.0).collect();
            let proj = self.project(&x);
            for (k, xk) in x.iter_mut().enumerate() {
                *xk += (0..r).map(|j| self.frame[(k, j)] * proj[j] * d[j]).sum::<Complex64>();
            }
        }
        normalize(&mut x)?;
        Ok(x)
    }

    /// `U* x`.
    fn project(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.rank())
            .map(|j| x.iter().enumerate().map(|(k, xk)| self.frame[(k, j)].conj() * xk).sum())
            .collect()
    }

    /// `|<u_i, x>|²` for the reconstructed unit eigenvector at `z`.
    pub fn exact_overlaps(&self, z: f64) -> Result<Vec<f64>> {
        let x = self.reconstruct_eigenvector(z)?;
        Ok(self.project(&x).iter().map(|p| p.norm_sqr()).collect())
    }
}

fn normalize(x: &mut [Complex64]) -> Result<()> {
    let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Numerical("eigenvector reconstruction produced a zero vector".into()));
    }
    // fix the phase: largest entry real and positive
    let pivot = x.iter().cloned().fold(Complex64::new(0.0, 0.0), |m, v| if v.norm() > m.norm() { v } else { m });
    let phase = pivot.conj() / pivot.norm() / norm;
    for v in x.iter_mut() {
        *v *= phase;
    }
    Ok(())
}

/// Determinant of a small row-major matrix by partial-pivot elimination.
fn small_det(mut a: Vec<Complex64>, r: usize) -> Complex64 {
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..r {
        let p = (col..r).max_by(|x, y| a[x * r + col].norm().total_cmp(&a[y * r + col].norm())).unwrap();
        if a[p * r + col] == Complex64::new(0.0, 0.0) {
            return Complex64::new(0.0, 0.0);
        }
        if p != col {
            for j in 0..r {
                a.swap(p * r + j, col * r + j);
            }
            det = -det;
        }
        let piv = a[col * r + col];
        det *= piv;
        for i in col + 1..r {
            let f = a[i * r + col] / piv;
            for j in col..r {
                let v = a[col * r + j];
                a[i * r + j] -= f * v;
            }
        }
    }
    det
}

/// Uniform grid on `[a, b]` plus geometric points toward ends that sit next
/// to a pole.
fn scan_grid(a: f64, b: f64, pole_lo: f64, pole_hi: f64, clip: f64, scale: f64) -> Vec<f64> {
    let h = (b - a) / SCAN_CELLS as f64;
    let mut grid: Vec<f64> = (0..=SCAN_CELLS).map(|k| a + h * k as f64).collect();
    grid[SCAN_CELLS] = b;
    let near = 1e-3 * scale;
    if a - pole_lo < near {
        let mut d = 2.0 * (a - pole_lo).max(clip);
        while pole_lo + d < a + h {
            grid.push(pole_lo + d);
            d *= 2.0;
        }
    }
    if pole_hi - b < near {
        let mut d = 2.0 * (pole_hi - b).max(clip);
        while pole_hi - d > b - h {
            grid.push(pole_hi - d);
            d *= 2.0;
        }
    }
    grid.retain(|z| *z >= a && *z <= b);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Root of the rank-one secular equation `Σ w_k κ(z, λ_k) = 1/θ` on the
/// outer branch: above the spectrum for `θ > 0`, below it for `θ < 0`.
/// `κ = 1/(z − λ)` (additive) or `λ/(z − λ)` (multiplicative).
pub fn secular_rank_one(lambdas: &[f64], weights_sq: &[f64], theta: f64, model: Model) -> Result<f64> {
    check_weights(lambdas, weights_sq)?;
    if !theta.is_finite() || theta == 0.0 {
        return Err(domain(format!("spike strength must be finite and nonzero, got {theta}")));
    }
    let multiplicative = model != Model::Additive;
    if multiplicative && lambdas.iter().any(|l| *l < 0.0) {
        return Err(domain("multiplicative perturbation needs non-negative eigenvalues"));
    }
    let support = || lambdas.iter().zip(weights_sq).filter(|(_, w)| **w > 0.0).map(|(l, _)| *l);
    let top = support().fold(f64::NEG_INFINITY, f64::max);
    let bottom = support().fold(f64::INFINITY, f64::min);
    let target = 1.0 / theta;
    let f = |z: f64| -> f64 {
        let s: f64 = lambdas
            .iter()
            .zip(weights_sq)
            .filter(|(_, w)| **w > 0.0)
            .map(|(l, w)| if multiplicative { w * l / (z - l) } else { w / (z - l) })
            .sum();
        s - target
    };
    let out_of_range = |edge_value: f64| Error::OutOfRange {
        value: target,
        lo: if theta > 0.0 { 0.0 } else { edge_value },
        hi: if theta > 0.0 { edge_value } else { 0.0 },
    };
    let (lo, hi) = if theta > 0.0 {
        if multiplicative && top <= 0.0 {
            return Err(out_of_range(0.0));
        }
        let far = if multiplicative { top * (1.0 + theta) } else { top + theta };
        (top, far)
    } else if multiplicative && bottom == 0.0 {
        let edge: f64 = -weights_sq.iter().zip(lambdas).filter(|(_, l)| **l > 0.0).map(|(w, _)| w).sum::<f64>();
        if target <= edge {
            return Err(out_of_range(edge));
        }
        (grow_down(&f, bottom)?, bottom)
    } else if multiplicative {
        (grow_down(&f, bottom)?, bottom)
    } else {
        (bottom + theta, bottom)
    };
    // f decreases on the branch; the open end at a pole is never evaluated
    let (mut a, mut b) = (lo, hi);
    loop {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let at_pole = |z: f64| support().any(|l| l == z);
    Ok(if at_pole(a) {
        b
    } else if at_pole(b) || f(a).abs() <= f(b).abs() {
        a
    } else {
        b
    })
}

fn grow_down(f: &impl Fn(f64) -> f64, edge: f64) -> Result<f64> {
    let mut d = 1.0f64.max(edge.abs());
    for _ in 0..2000 {
        if f(edge - d) > 0.0 {
            return Ok(edge - d);
        }
        d *= 2.0;
    }
    Err(Error::Numerical("could not bracket the secular root".into()))
}

fn check_weights(lambdas: &[f64], weights_sq: &[f64]) -> Result<()> {
    if lambdas.is_empty() || lambdas.len() != weights_sq.len() {
        return Err(domain("eigenvalues and weights must be non-empty and of equal length"));
    }
    if weights_sq.iter().any(|w| !(*w >= 0.0)) {
        return Err(domain("weights must be non-negative"));
    }
    let total: f64 = weights_sq.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(domain(format!("weights must sum to 1, got {total}")));
    }
    Ok(())
}

/// `|<ũ, u>|² = 1 / (θ² Σ w_k / (z − λ_k)²)` at a root of the additive
/// rank-one secular equation.
pub fn rank_one_overlap(lambdas: &[f64], weights_sq: &[f64], theta: f64, z: f64) -> f64 {
    let s: f64 = lambdas.iter().zip(weights_sq).map(|(l, w)| w / ((z - l) * (z - l))).sum();
    1.0 / (theta * theta * s)
}
