//! Random matrix ensembles, Haar frames, low-rank deformations and the
//! dense eigensolver adapter used by the Monte Carlo side.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::time::Instant;

use faer::traits::ComplexField;
use faer::{c64, Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::master::WeightedMeasure;
use crate::measure::SpectralMeasure;
use crate::prediction::{Model, SpikeSpec};

/// Scalar field of a matrix or frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Real,
    Complex,
}

/// `f64` or `c64`, with the handful of operations the samplers need.
pub trait Scalar:
    ComplexField<Real = f64>
    + Copy
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    const FIELD: Field;
    /// Standard Gaussian with `E|x|² = 1`.
    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self;
    fn real(x: f64) -> Self;
    fn re(self) -> f64;
    fn conjugate(self) -> Self;
    fn abs2(self) -> f64;
    fn to_c64(self) -> c64;
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
    fn real(x: f64) -> Self {
        x
    }
    fn re(self) -> f64 {
        self
    }
    fn conjugate(self) -> Self {
        self
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn to_c64(self) -> c64 {
        c64::new(self, 0.0)
    }
}

impl Scalar for c64 {
    const FIELD: Field = Field::Complex;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64::new(h * re, h * im)
    }
    fn real(x: f64) -> Self {
        c64::new(x, 0.0)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn conjugate(self) -> Self {
        self.conj()
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn to_c64(self) -> c64 {
        self
    }
}

/// Dense matrix over either field.
#[derive(Debug, Clone)]
pub enum DenseMatrix {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

impl DenseMatrix {
    pub fn field(&self) -> Field {
        match self {
            DenseMatrix::Real(_) => Field::Real,
            DenseMatrix::Complex(_) => Field::Complex,
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            DenseMatrix::Real(m) => m.nrows(),
            DenseMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            DenseMatrix::Real(m) => m.ncols(),
            DenseMatrix::Complex(m) => m.ncols(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        match self {
            DenseMatrix::Real(m) => c64::new(m[(i, j)], 0.0),
            DenseMatrix::Complex(m) => m[(i, j)],
        }
    }

    pub fn to_complex(&self) -> Mat<c64> {
        match self {
            DenseMatrix::Real(m) => Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0)),
            DenseMatrix::Complex(m) => m.clone(),
        }
    }

    /// Eigenvalues of a symmetric/Hermitian matrix, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let v = match self {
            DenseMatrix::Real(m) => m.self_adjoint_eigenvalues(Side::Lower),
            DenseMatrix::Complex(m) => m.self_adjoint_eigenvalues(Side::Lower),
        };
        v.map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))
    }
}

fn gaussian_matrix<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat<T> {
    // column-major fill so the stream order is fixed
    let mut g = Mat::<T>::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            g[(i, j)] = T::gaussian(rng);
        }
    }
    g
}

fn haar<T: Scalar, R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Mat<T> {
    let g = gaussian_matrix::<T, R>(n, r, rng);
    let qr = g.qr();
    let mut q = qr.compute_thin_Q();
    let rr = qr.thin_R();
    for j in 0..r {
        let d = rr[(j, j)];
        let norm = d.abs2().sqrt();
        if norm == 0.0 {
            continue;
        }
        // Q diag(r_jj / |r_jj|) makes the triangular factor's diagonal positive
        let phase = d * T::real(1.0 / norm);
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `n × r` matrix with orthonormal columns, Haar distributed.
pub fn haar_frame<R: Rng + ?Sized>(n: usize, r: usize, field: Field, rng: &mut R) -> Result<DenseMatrix> {
    if r == 0 || r > n {
        return Err(domain(format!("frame needs 1 <= r <= n, got r = {r}, n = {n}")));
    }
    Ok(match field {
        Field::Real => DenseMatrix::Real(haar::<f64, R>(n, r, rng)),
        Field::Complex => DenseMatrix::Complex(haar::<c64, R>(n, r, rng)),
    })
}

/// Unperturbed matrix ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleSpec {
    /// Real symmetric Wigner matrix, limit Semicircle(sigma).
    Goe { n: usize, sigma: f64 },
    /// Complex Hermitian Wigner matrix, limit Semicircle(sigma).
    Gue { n: usize, sigma: f64 },
    /// `G Gᵀ / m` with `G` real `n × m`, limit MP(n/m).
    WishartReal { n: usize, m: usize },
    /// `G G* / m` with `G` complex `n × m`.
    WishartComplex { n: usize, m: usize },
    FixedDiagonal { values: Vec<f64> },
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        match self {
            EnsembleSpec::Goe { n, sigma } | EnsembleSpec::Gue { n, sigma } => {
                if *n == 0 {
                    return fail("ensemble size n must be positive".into());
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return fail(format!("sigma must be positive, got {sigma}"));
                }
            }
            EnsembleSpec::WishartReal { n, m } | EnsembleSpec::WishartComplex { n, m } => {
                if *n == 0 || *m == 0 {
                    return fail(format!("Wishart needs n, m >= 1, got n = {n}, m = {m}"));
                }
            }
            EnsembleSpec::FixedDiagonal { values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return fail("fixed diagonal needs a non-empty list of finite values".into());
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        match self {
            EnsembleSpec::Goe { n, .. }
            | EnsembleSpec::Gue { n, .. }
            | EnsembleSpec::WishartReal { n, .. }
            | EnsembleSpec::WishartComplex { n, .. } => *n,
            EnsembleSpec::FixedDiagonal { values } => values.len(),
        }
    }

    pub fn field(&self) -> Field {
        match self {
            EnsembleSpec::Gue { .. } | EnsembleSpec::WishartComplex { .. } => Field::Complex,
            _ => Field::Real,
        }
    }

    /// Limiting spectral measure as `n → ∞` (the empirical one for a fixed diagonal).
    pub fn limit_measure(&self) -> Result<SpectralMeasure> {
        match self {
            EnsembleSpec::Goe { sigma, .. } | EnsembleSpec::Gue { sigma, .. } => SpectralMeasure::semicircle(*sigma),
            EnsembleSpec::WishartReal { n, m } | EnsembleSpec::WishartComplex { n, m } => {
                SpectralMeasure::marchenko_pastur(*n as f64 / *m as f64)
            }
            EnsembleSpec::FixedDiagonal { values } => {
                let mut v = values.clone();
                v.sort_by(f64::total_cmp);
                let mut atoms: Vec<f64> = Vec::new();
                let mut weights: Vec<f64> = Vec::new();
                let w = 1.0 / v.len() as f64;
                for x in v {
                    if atoms.last() == Some(&x) {
                        *weights.last_mut().unwrap() += w;
                    } else {
                        atoms.push(x);
                        weights.push(w);
                    }
                }
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|x| *x /= total);
                SpectralMeasure::atomic(atoms, weights)
            }
        }
    }
}

fn wigner<T: Scalar, R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Mat<T> {
    // (G + G*) σ / √(2n): off-diagonal E|x|² = σ²/n
    let g = gaussian_matrix::<T, R>(n, n, rng);
    let s = sigma / (2.0 * n as f64).sqrt();
    Mat::from_fn(n, n, |i, j| (g[(i, j)] + g[(j, i)].conjugate()) * T::real(s))
}

fn wishart<T: Scalar, R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Mat<T> {
    let g = gaussian_matrix::<T, R>(n, m, rng);
    let mut x = &g * g.adjoint();
    let s = T::real(1.0 / m as f64);
    for j in 0..n {
        for i in 0..n {
            x[(i, j)] *= s;
        }
    }
    x
}

/// Draw one matrix from `spec`.
pub fn sample_ensemble<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> Result<DenseMatrix> {
    spec.validate()?;
    Ok(match spec {
        EnsembleSpec::Goe { n, sigma } => DenseMatrix::Real(wigner::<f64, R>(*n, *sigma, rng)),
        EnsembleSpec::Gue { n, sigma } => DenseMatrix::Complex(wigner::<c64, R>(*n, *sigma, rng)),
        EnsembleSpec::WishartReal { n, m } => DenseMatrix::Real(wishart::<f64, R>(*n, *m, rng)),
        EnsembleSpec::WishartComplex { n, m } => DenseMatrix::Complex(wishart::<c64, R>(*n, *m, rng)),
        EnsembleSpec::FixedDiagonal { values } => {
            let n = values.len();
            DenseMatrix::Real(Mat::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 }))
        }
    })
}

/// A perturbed matrix together with the perturbation that produced it.
///
/// For the multiplicative and similarity models `matrix` holds the
/// Hermitian `(I+P)^{1/2} X (I+P)^{1/2}`, which has the same eigenvalues as
/// `X (I + P)`.
#[derive(Debug, Clone)]
pub struct Deformed {
    pub matrix: DenseMatrix,
    pub frame: DenseMatrix,
    pub spikes: SpikeSpec,
    pub model: Model,
}

/// `X + P`, or the symmetrized `X (I + P)`, with `P = U Θ U*` for a Haar frame `U`
/// over the field of `x`.
pub fn deform<R: Rng + ?Sized>(x: &DenseMatrix, spikes: &SpikeSpec, model: Model, rng: &mut R) -> Result<Deformed> {
    let frame = haar_frame(x.nrows(), spikes.rank(), x.field(), rng)?;
    deform_with_frame(x, frame, spikes, model)
}

/// Same as [`deform`] with a given frame (same field as `x`).
pub fn deform_with_frame(x: &DenseMatrix, frame: DenseMatrix, spikes: &SpikeSpec, model: Model) -> Result<Deformed> {
    if x.nrows() != x.ncols() || frame.nrows() != x.nrows() || frame.ncols() != spikes.rank() {
        return Err(domain("matrix, frame and spike shapes do not agree"));
    }
    if model != Model::Additive {
        if let Some(t) = spikes.thetas().iter().find(|t| 1.0 + **t <= 0.0) {
            return Err(domain(format!("multiplicative spike needs 1 + θ > 0, got θ = {t}")));
        }
    }
    let matrix = match (x, &frame) {
        (DenseMatrix::Real(x), DenseMatrix::Real(u)) => DenseMatrix::Real(deform_typed(x, u, spikes.thetas(), model)?),
        (DenseMatrix::Complex(x), DenseMatrix::Complex(u)) => {
            DenseMatrix::Complex(deform_typed(x, u, spikes.thetas(), model)?)
        }
        _ => return Err(domain("matrix and frame must share a field")),
    };
    Ok(Deformed { matrix, frame, spikes: spikes.clone(), model })
}

fn scale_columns<T: Scalar>(u: &Mat<T>, d: &[f64]) -> Mat<T> {
    Mat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * T::real(d[j]))
}

fn check_nonnegative<T: Scalar>(x: &Mat<T>) -> Result<()> {
    let n = x.nrows();
    let trace: f64 = (0..n).map(|i| x[(i, i)].re()).sum();
    if (0..n).any(|i| x[(i, i)].re() < 0.0) {
        return Err(domain("multiplicative model needs a non-negative definite matrix"));
    }
    // a small shift separates "semidefinite" from "indefinite"
    let shift = 1e-10 * (trace.abs() / n as f64 + f64::MIN_POSITIVE);
    let mut shifted = x.clone();
    for i in 0..n {
        shifted[(i, i)] += T::real(shift);
    }
    shifted
        .llt(Side::Lower)
        .map(|_| ())
        .map_err(|_| domain("multiplicative model needs a non-negative definite matrix"))
}

fn deform_typed<T: Scalar>(x: &Mat<T>, u: &Mat<T>, thetas: &[f64], model: Model) -> Result<Mat<T>> {
    match model {
        Model::Additive => Ok(x + &scale_columns(u, thetas) * u.adjoint()),
        Model::Multiplicative | Model::Similarity => {
            check_nonnegative(x)?;
            let d: Vec<f64> = thetas.iter().map(|t| (1.0 + t).sqrt() - 1.0).collect();
            // (I + U D U*) X (I + U D U*), expanded to avoid n³ work
            let ud = scale_columns(u, &d);
            let y = x * u;
            let yd = scale_columns(&y, &d);
            let core = u.adjoint() * &y;
            let mut s = x + &ud * y.adjoint() + &yd * u.adjoint() + &ud * &core * ud.adjoint();
            // exact symmetry for the eigensolver
            let n = s.nrows();
            for j in 0..n {
                for i in j + 1..n {
                    s[(j, i)] = s[(i, j)].conjugate();
                }
                s[(j, j)] = T::real(s[(j, j)].re());
            }
            Ok(s)
        }
    }
}

/// Eigenvalues and spike eigenvector overlaps of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    /// Largest eigenvalues, descending.
    pub top_eigenvalues: Vec<f64>,
    /// Smallest eigenvalues, ascending.
    pub bottom_eigenvalues: Vec<f64>,
    /// Per spike: squared norm of the projection of its eigenvector onto the
    /// span of all frame columns sharing its θ.
    pub overlaps_sq: Vec<f64>,
    /// Multiplicative model only: the same projections for the eigenvectors
    /// of the symmetrized matrix.
    pub similarity_overlaps_sq: Option<Vec<f64>>,
    /// Per spike, per frame column: `|<u_j, ũ>|²`.
    pub column_overlaps_sq: Vec<Vec<f64>>,
    pub wallclock: f64,
}

impl TrialRecord {
    pub fn csv_header(&self, with_wallclock: bool) -> String {
        let mut cols = vec!["seed".to_string()];
        cols.extend((1..=self.top_eigenvalues.len()).map(|i| format!("lambda_{i}")));
        cols.extend((1..=self.bottom_eigenvalues.len()).map(|i| format!("mu_{i}")));
        cols.extend((1..=self.overlaps_sq.len()).map(|i| format!("overlap_{i}")));
        if let Some(s) = &self.similarity_overlaps_sq {
            cols.extend((1..=s.len()).map(|i| format!("similarity_overlap_{i}")));
        }
        if with_wallclock {
            cols.push("wallclock".into());
        }
        cols.join(",")
    }

    /// One CSV row; reals with 17 significant digits.
    pub fn csv_row(&self, with_wallclock: bool) -> String {
        let mut cols = vec![self.seed.to_string()];
        let mut push = |v: &[f64]| cols.extend(v.iter().map(|x| format!("{x:.16e}")));
        push(&self.top_eigenvalues);
        push(&self.bottom_eigenvalues);
        push(&self.overlaps_sq);
        if let Some(s) = &self.similarity_overlaps_sq {
            push(s);
        }
        if with_wallclock {
            push(&[self.wallclock]);
        }
        cols.join(",")
    }
}

/// Position (ascending order) of the eigenvalue attached to spike `i`: the
/// `i`-th largest for positive θ, the `(n − r + i)`-th largest otherwise.
fn spike_eigen_index(n: usize, r: usize, i: usize, theta: f64) -> usize {
    if theta > 0.0 {
        n - 1 - i
    } else {
        r - 1 - i
    }
}

/// Dense eigen-decomposition of the deformed matrix: extreme eigenvalues and
/// the spike eigenvector overlaps. `seed` is left at zero for the caller.
pub fn spectrum_and_overlaps(d: &Deformed, k_top: usize, k_bottom: usize) -> Result<TrialRecord> {
    let start = Instant::now();
    let mut rec = match (&d.matrix, &d.frame) {
        (DenseMatrix::Real(m), DenseMatrix::Real(u)) => spectrum_typed(m, u, d, k_top, k_bottom)?,
        (DenseMatrix::Complex(m), DenseMatrix::Complex(u)) => spectrum_typed(m, u, d, k_top, k_bottom)?,
        _ => return Err(domain("matrix and frame must share a field")),
    };
    rec.wallclock = start.elapsed().as_secs_f64();
    Ok(rec)
}

fn spectrum_typed<T: Scalar>(m: &Mat<T>, u: &Mat<T>, d: &Deformed, k_top: usize, k_bottom: usize) -> Result<TrialRecord> {
    let n = m.nrows();
    let thetas = d.spikes.thetas();
    let r = thetas.len();
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..n).map(|i| s[i].re()).collect();
    let vectors = evd.U();
    let k_top = k_top.min(n);
    let k_bottom = k_bottom.min(n);
    let top_eigenvalues: Vec<f64> = values.iter().rev().take(k_top).cloned().collect();
    let bottom_eigenvalues: Vec<f64> = values.iter().take(k_bottom).cloned().collect();

    // (I+P)^{-1/2} = I + U E U* maps symmetrized eigenvectors to those of X(I+P)
    let inv_half: Vec<f64> = thetas.iter().map(|t| 1.0 / (1.0 + t).sqrt() - 1.0).collect();
    let project = |x: &[T]| -> Vec<T> {
        (0..r).map(|j| (0..n).fold(T::real(0.0), |acc, k| acc + u[(k, j)].conjugate() * x[k])).collect()
    };
    let grouped = |cols: &[f64], i: usize| -> f64 {
        (0..r).filter(|j| thetas[*j] == thetas[i]).map(|j| cols[j]).sum()
    };
    let mut overlaps = Vec::with_capacity(r);
    let mut similarity = Vec::with_capacity(r);
    let mut columns = Vec::with_capacity(r);
    for (i, &theta) in thetas.iter().enumerate() {
        let idx = spike_eigen_index(n, r, i, theta);
        let v: Vec<T> = (0..n).map(|k| vectors[(k, idx)]).collect();
        let pv = project(&v);
        let sym_cols: Vec<f64> = pv.iter().map(|p| p.abs2()).collect();
        let cols = if d.model == Model::Multiplicative {
            // ũ ∝ v + U E U* v, and U* ũ ∝ (I + E) U* v
            let raw: Vec<T> = (0..n)
                .map(|k| {
                    let corr = (0..r).fold(T::real(0.0), |acc, j| acc + u[(k, j)] * pv[j] * T::real(inv_half[j]));
                    v[k] + corr
                })
                .collect();
            let norm_sq: f64 = raw.iter().map(|x| x.abs2()).sum();
            let pr = project(&raw);
            pr.iter().map(|p| p.abs2() / norm_sq).collect()
        } else {
            sym_cols.clone()
        };
        overlaps.push(grouped(&cols, i).min(1.0));
        similarity.push(grouped(&sym_cols, i).min(1.0));
        columns.push(cols);
    }
    Ok(TrialRecord {
        seed: 0,
        top_eigenvalues,
        bottom_eigenvalues,
        overlaps_sq: overlaps,
        similarity_overlaps_sq: (d.model == Model::Multiplicative).then_some(similarity),
        column_overlaps_sq: columns,
        wallclock: 0.0,
    })
}

/// `μ_ij = Σ_k conj(u_ki) u_kj δ_{λ_k}` for a frame given in the eigenbasis
/// belonging to `lambdas` (a single vector is a one-column frame).
pub fn weighted_measure(frame: &DenseMatrix, lambdas: &[f64], i: usize, j: usize) -> Result<WeightedMeasure> {
    WeightedMeasure::from_frame(lambdas, &frame.to_complex(), i, j)
}

/// Seed of trial `index` under `master`; the trial's generator is
/// `trial_rng(trial_seed(master, index))`, so any trial can be replayed alone.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the pair
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::MasterEquationSystem;

    fn rng(seed: u64) -> ChaCha8Rng {
        trial_rng(seed)
    }

    fn max_offset_from_identity(f: &DenseMatrix) -> f64 {
        let g = f.to_complex();
        let gram = g.adjoint() * &g;
        let mut worst: f64 = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let id = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - c64::new(id, 0.0)).norm());
            }
        }
        worst
    }

    #[test]
    fn frames_are_orthonormal() {
        let mut g = rng(1);
        for (n, r) in [(1, 1), (5, 5), (40, 3), (300, 7)] {
            for field in [Field::Real, Field::Complex] {
                let f = haar_frame(n, r, field, &mut g).unwrap();
                assert!(max_offset_from_identity(&f) < 1e-12);
            }
        }
        assert!(matches!(haar_frame(3, 4, Field::Real, &mut g), Err(Error::Domain(_))));
    }

    #[test]
    fn haar_column_moments_match_normalized_gaussian() {
        // both samplers draw a uniform point on the sphere; compare E[u^p], p=1..4
        let n = 8;
        let trials = 100_000;
        let mut g = rng(2);
        let mut qr = [0.0f64; 4];
        let mut direct = [0.0f64; 4];
        let mut qr_sq = [0.0f64; 4];
        let mut direct_sq = [0.0f64; 4];
        for _ in 0..trials {
            let DenseMatrix::Real(f) = haar_frame(n, 2, Field::Real, &mut g).unwrap() else { unreachable!() };
            let v: Vec<f64> = (0..n).map(|_| f64::gaussian(&mut g)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for p in 0..4 {
                let a = f[(0, 0)].powi(p as i32 + 1);
                let b = (v[0] / norm).powi(p as i32 + 1);
                qr[p] += a;
                qr_sq[p] += a * a;
                direct[p] += b;
                direct_sq[p] += b * b;
            }
        }
        let t = trials as f64;
        for p in 0..4 {
            let (ma, mb) = (qr[p] / t, direct[p] / t);
            let va = qr_sq[p] / t - ma * ma;
            let vb = direct_sq[p] / t - mb * mb;
            let se = ((va + vb) / t).sqrt();
            assert!((ma - mb).abs() < 3.0 * se + 1e-15, "moment {}: {ma} vs {mb} (se {se})", p + 1);
        }
        // E[u_1^4] = 3 / (n (n + 2)) on the real sphere
        assert!((qr[3] / t - 3.0 / 80.0).abs() < 0.002);
    }

    #[test]
    fn haar_first_coordinate_is_exchangeable() {
        let n = 2000;
        let mut g = rng(31);
        let mut mean = 0.0;
        for _ in 0..500 {
            let f = haar_frame(n, 1, Field::Real, &mut g).unwrap();
            let total: f64 = (0..n).map(|k| f.get(k, 0).norm_sqr()).sum();
            assert!((total - 1.0).abs() < 1e-12);
            mean += n as f64 * f.get(0, 0).norm_sqr() / 500.0;
        }
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn fixed_diagonal_is_exact() {
        let x = sample_ensemble(&EnsembleSpec::FixedDiagonal { values: vec![3.0, 2.0, 1.0] }, &mut rng(0)).unwrap();
        let DenseMatrix::Real(m) = x else { panic!() };
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[(i, j)], if i == j { 3.0 - i as f64 } else { 0.0 });
            }
        }
    }

    #[test]
    fn wigner_entry_variances() {
        let n = 400;
        let mut g = rng(4);
        for spec in [EnsembleSpec::Goe { n, sigma: 1.5 }, EnsembleSpec::Gue { n, sigma: 1.5 }] {
            let x = sample_ensemble(&spec, &mut g).unwrap();
            let (mut off, mut diag) = (0.0, 0.0);
            for i in 0..n {
                diag += x.get(i, i).norm_sqr();
                for j in 0..i {
                    off += x.get(i, j).norm_sqr();
                    assert_eq!(x.get(i, j), x.get(j, i).conj());
                }
            }
            let off = off / (n * (n - 1) / 2) as f64 * n as f64;
            // sum of n squared diagonal entries, each of variance want / n
            assert!((off - 2.25).abs() < 0.05, "{spec:?}: off-diagonal {off}");
            let want = if spec.field() == Field::Real { 4.5 } else { 2.25 };
            assert!((diag - want).abs() < 0.6, "{spec:?}: diagonal {diag}");
        }
    }

    #[test]
    fn deformation_has_rank_r() {
        let mut g = rng(5);
        let spec = EnsembleSpec::Goe { n: 60, sigma: 1.0 };
        let x = sample_ensemble(&spec, &mut g).unwrap();
        let spikes = SpikeSpec::new(vec![2.0, -1.0, 0.5]).unwrap();
        let d = deform(&x, &spikes, Model::Additive, &mut g).unwrap();
        let (DenseMatrix::Real(a), DenseMatrix::Real(b)) = (&d.matrix, &x) else { panic!() };
        let diff = a - b;
        let sv = diff.singular_values().unwrap();
        assert!(sv[2] > 0.4);
        assert!(sv[3..].iter().all(|s| *s < 1e-10 * sv[0]));
    }

    #[test]
    fn trivial_deformations() {
        let n = 30;
        let mut g = rng(6);
        let zero = DenseMatrix::Real(Mat::zeros(n, n));
        let d = deform(&zero, &SpikeSpec::new(vec![5.0]).unwrap(), Model::Additive, &mut g).unwrap();
        let ev = d.matrix.eigenvalues().unwrap();
        assert!((ev[n - 1] - 5.0).abs() < 1e-12);
        assert!(ev[..n - 1].iter().all(|v| v.abs() < 1e-12));

        let id = DenseMatrix::Complex(Mat::from_fn(n, n, |i, j| c64::new(if i == j { 1.0 } else { 0.0 }, 0.0)));
        let d = deform(&id, &SpikeSpec::new(vec![0.5]).unwrap(), Model::Multiplicative, &mut g).unwrap();
        let ev = d.matrix.eigenvalues().unwrap();
        assert!((ev[n - 1] - 1.5).abs() < 1e-12);
        assert!(ev[..n - 1].iter().all(|v| (v - 1.0).abs() < 1e-12));
        let rec = spectrum_and_overlaps(&d, 1, 1).unwrap();
        assert!((rec.overlaps_sq[0] - 1.0).abs() < 1e-12);
        assert!((rec.similarity_overlaps_sq.unwrap()[0] - 1.0).abs() < 1e-12);

        let w = sample_ensemble(&EnsembleSpec::WishartReal { n, m: 2 * n }, &mut g).unwrap();
        let d = deform(&w, &SpikeSpec::new(vec![1e-300]).unwrap(), Model::Similarity, &mut g).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((d.matrix.get(i, j) - w.get(i, j)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn positivity_is_required_for_multiplicative_models() {
        let mut g = rng(7);
        let x = sample_ensemble(&EnsembleSpec::Goe { n: 20, sigma: 1.0 }, &mut g).unwrap();
        let s = SpikeSpec::new(vec![1.0]).unwrap();
        assert!(matches!(deform(&x, &s, Model::Multiplicative, &mut g), Err(Error::Domain(_))));
        let w = sample_ensemble(&EnsembleSpec::WishartReal { n: 20, m: 10 }, &mut g).unwrap();
        assert!(deform(&w, &s, Model::Multiplicative, &mut g).is_ok());
        let bad = SpikeSpec::new(vec![-1.5]).unwrap();
        assert!(matches!(deform(&w, &bad, Model::Similarity, &mut g), Err(Error::Domain(_))));
    }

    #[test]
    fn scalar_matrix_overlap_is_one() {
        let n = 50;
        let x = sample_ensemble(&EnsembleSpec::FixedDiagonal { values: vec![2.0; n] }, &mut rng(0)).unwrap();
        let d = deform(&x, &SpikeSpec::new(vec![0.75]).unwrap(), Model::Additive, &mut rng(8)).unwrap();
        let rec = spectrum_and_overlaps(&d, 2, 1).unwrap();
        assert!((rec.top_eigenvalues[0] - 2.75).abs() < 1e-12);
        assert!((rec.overlaps_sq[0] - 1.0).abs() < 1e-12);
        assert!(rec.top_eigenvalues[0] >= rec.top_eigenvalues[1]);
    }

    #[test]
    fn dense_outliers_match_master_equation() {
        let n = 64;
        let mut g = rng(9);
        let values: Vec<f64> = (0..n).map(|_| g.random::<f64>() * 2.0 - 1.0).collect();
        let x = sample_ensemble(&EnsembleSpec::FixedDiagonal { values: values.clone() }, &mut g).unwrap();
        let spikes = SpikeSpec::new(vec![1.5, -2.0]).unwrap();
        let d = deform(&x, &spikes, Model::Additive, &mut g).unwrap();
        let rec = spectrum_and_overlaps(&d, 1, 1).unwrap();
        let sys = MasterEquationSystem::new(values, d.frame.to_complex(), spikes.thetas().to_vec(), Model::Additive).unwrap();
        let roots = sys.outliers().unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - rec.top_eigenvalues[0]).abs() < 1e-9);
        assert!((roots[1] - rec.bottom_eigenvalues[0]).abs() < 1e-9);
        let ov = sys.exact_overlaps(roots[0]).unwrap();
        assert!((ov[0] - rec.column_overlaps_sq[0][0]).abs() < 1e-9);
    }

    #[test]
    fn trials_are_reproducible() {
        let spec = EnsembleSpec::Gue { n: 40, sigma: 1.0 };
        let spikes = SpikeSpec::new(vec![2.0]).unwrap();
        let run = |seed| {
            let mut g = trial_rng(seed);
            let x = sample_ensemble(&spec, &mut g).unwrap();
            let d = deform(&x, &spikes, Model::Additive, &mut g).unwrap();
            let mut r = spectrum_and_overlaps(&d, 2, 2).unwrap();
            r.wallclock = 0.0;
            r
        };
        let s = trial_seed(42, 7);
        assert_eq!(run(s), run(s));
        assert_ne!(run(s), run(trial_seed(42, 8)));
        assert_eq!(run(s).csv_row(false), run(s).csv_row(false));
    }

    #[test]
    fn overlaps_are_invariant_under_rotation_of_x() {
        let n = 40;
        let trials = 200;
        let spec = EnsembleSpec::Goe { n, sigma: 1.0 };
        let spikes = SpikeSpec::new(vec![2.0]).unwrap();
        let DenseMatrix::Real(q) = haar_frame(n, n, Field::Real, &mut rng(100)).unwrap() else { panic!() };
        let (mut a, mut b, mut a2, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for t in 0..trials {
            let mut g = trial_rng(trial_seed(10, t));
            let DenseMatrix::Real(x) = sample_ensemble(&spec, &mut g).unwrap() else { panic!() };
            let rotated = DenseMatrix::Real(&q * &x * q.transpose());
            let plain = DenseMatrix::Real(x);
            let f = haar_frame(n, 1, Field::Real, &mut g).unwrap();
            let o1 = spectrum_and_overlaps(&deform_with_frame(&plain, f.clone(), &spikes, Model::Additive).unwrap(), 1, 1)
                .unwrap()
                .overlaps_sq[0];
            let f2 = haar_frame(n, 1, Field::Real, &mut g).unwrap();
            let o2 = spectrum_and_overlaps(&deform_with_frame(&rotated, f2, &spikes, Model::Additive).unwrap(), 1, 1)
                .unwrap()
                .overlaps_sq[0];
            a += o1;
            b += o2;
            a2 += o1 * o1;
            b2 += o2 * o2;
        }
        let t = trials as f64;
        let (ma, mb) = (a / t, b / t);
        let se = ((a2 / t - ma * ma + b2 / t - mb * mb) / t).sqrt();
        assert!((ma - mb).abs() < 3.0 * se, "{ma} vs {mb} (se {se})");
    }

    #[test]
    fn diagonal_weighted_measure_is_a_probability() {
        let f = haar_frame(30, 3, Field::Complex, &mut rng(11)).unwrap();
        let lambdas: Vec<f64> = (0..30).map(|k| k as f64).collect();
        let mu = weighted_measure(&f, &lambdas, 1, 1).unwrap();
        assert!((mu.total_mass().re - 1.0).abs() < 1e-12);
        let off = weighted_measure(&f, &lambdas, 0, 2).unwrap();
        assert!(off.total_mass().norm() < 1e-12);
        assert!(off.total_variation() <= 1.0 + 1e-12);
    }

    #[test]
    fn csv_columns() {
        let rec = TrialRecord {
            seed: 9,
            top_eigenvalues: vec![2.5, 2.0],
            bottom_eigenvalues: vec![-2.0],
            overlaps_sq: vec![0.75],
            similarity_overlaps_sq: None,
            column_overlaps_sq: vec![vec![0.75]],
            wallclock: 1.25,
        };
        assert_eq!(rec.csv_header(false), "seed,lambda_1,lambda_2,mu_1,overlap_1");
        assert_eq!(rec.csv_header(true), "seed,lambda_1,lambda_2,mu_1,overlap_1,wallclock");
        assert_eq!(
            rec.csv_row(false),
            "9,2.5000000000000000e0,2.0000000000000000e0,-2.0000000000000000e0,7.5000000000000000e-1"
        );
        let v: f64 = "0.1".parse().unwrap();
        assert_eq!(format!("{v:.16e}").parse::<f64>().unwrap(), v);
    }
}
