//! Asymptotic outlier locations and eigenvector overlaps for finite-rank
//! perturbations of a matrix with a known limiting spectral measure.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::measure::SpectralMeasure;
use crate::transforms::{edge_limits, invert_transform, supports_t, transform_real, Branch, Order, Which};

/// How the perturbation enters the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `X + P`
    Additive,
    /// `X (I + P)`, overlaps measured with its (non-orthogonal) eigenvectors
    Multiplicative,
    /// `(I + P)^{1/2} X (I + P)^{1/2}`, same eigenvalues as the multiplicative model
    Similarity,
}

impl Model {
    pub fn transform(self) -> Which {
        match self {
            Model::Additive => Which::G,
            Model::Multiplicative | Model::Similarity => Which::T,
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(Model::Additive),
            "multiplicative" => Ok(Model::Multiplicative),
            "similarity" => Ok(Model::Similarity),
            _ => Err(domain(format!("unknown model {s:?}"))),
        }
    }
}

/// Which overlap of the multiplicative family to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapVariant {
    Raw,
    Similarity,
}

/// Nonzero spike strengths in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpikeSpec {
    thetas: Vec<f64>,
}

impl SpikeSpec {
    /// Sorts the strengths in descending order; rejects zeros and non-finite values.
    pub fn new(mut thetas: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(domain("at least one spike is required"));
        }
        if let Some(t) = thetas.iter().find(|t| !t.is_finite() || **t == 0.0) {
            return Err(domain(format!("spike strengths must be finite and nonzero, got {t}")));
        }
        thetas.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { thetas })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn rank(&self) -> usize {
        self.thetas.len()
    }

    /// Number of positive strengths.
    pub fn positive(&self) -> usize {
        self.thetas.iter().filter(|t| **t > 0.0).count()
    }

    pub fn multiplicity(&self, theta: f64) -> usize {
        self.thetas.iter().filter(|t| **t == theta).count()
    }
}

impl TryFrom<Vec<f64>> for SpikeSpec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SpikeSpec> for Vec<f64> {
    fn from(s: SpikeSpec) -> Self {
        s.thetas
    }
}

/// Prediction for one spike. `overlap_sq` is `None` when the limit is not
/// determined (subcritical with a finite edge derivative, or exactly critical).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpikeOutcome {
    pub theta: f64,
    pub limit: f64,
    pub detectable: bool,
    pub overlap_sq: Option<f64>,
    #[serde(skip_serializing_if = "is_one")]
    pub multiplicity: usize,
}

fn is_one(m: &usize) -> bool {
    *m == 1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikePrediction {
    pub model: Model,
    pub spikes: Vec<SpikeOutcome>,
}

/// Where a spike of strength `theta` sits relative to the transition.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Regime {
    Super(f64),
    Critical,
    Sub,
}

fn regime(measure: &SpectralMeasure, theta: f64, which: Which) -> Result<Regime> {
    let profile = edge_limits(measure)?;
    let w = 1.0 / theta;
    let (limit, branch) = if theta > 0.0 {
        (profile.upper(which), Branch::AboveB)
    } else {
        (profile.lower(which), Branch::BelowA)
    };
    let limit = limit.ok_or_else(|| domain("T-transform limits need a measure on [0, ∞)"))?;
    let inside = if theta > 0.0 { w < limit } else { w > limit };
    if inside {
        Ok(Regime::Super(invert_transform(measure, w, which, branch)?))
    } else if w == limit {
        Ok(Regime::Critical)
    } else {
        Ok(Regime::Sub)
    }
}

fn edge_for(measure: &SpectralMeasure, theta: f64) -> Result<(f64, f64, f64)> {
    let p = edge_limits(measure)?;
    Ok((p.a, p.b, if theta > 0.0 { p.b } else { p.a }))
}

fn edge_derivative(measure: &SpectralMeasure, theta: f64, which: Which) -> Result<f64> {
    let p = edge_limits(measure)?;
    let d = if theta > 0.0 { p.upper_derivative(which) } else { p.lower_derivative(which) };
    d.ok_or_else(|| domain("T-transform limits need a measure on [0, ∞)"))
}

fn check_theta(theta: f64) -> Result<()> {
    if !theta.is_finite() || theta == 0.0 {
        return Err(domain(format!("spike strength must be finite and nonzero, got {theta}")));
    }
    Ok(())
}

fn check_multiplicative(measure: &SpectralMeasure, theta: f64) -> Result<()> {
    check_theta(theta)?;
    if !supports_t(measure) {
        return Err(domain("multiplicative model needs a measure on [0, ∞) other than δ0"));
    }
    if 1.0 + theta <= 0.0 {
        return Err(domain(format!("multiplicative spike needs 1 + θ > 0, got θ = {theta}")));
    }
    Ok(())
}

/// `lim |<ũ, u>|²` for `X + θ u u*`.
pub fn predict_additive_overlap(measure: &SpectralMeasure, theta: f64) -> Result<Option<f64>> {
    check_theta(theta)?;
    match regime(measure, theta, Which::G)? {
        Regime::Super(rho) => {
            let d = transform_real(measure, Which::G, rho, Order::Derivative)?;
            Ok(Some(clamp_unit(-1.0 / (theta * theta * d))))
        }
        Regime::Critical => Ok(None),
        Regime::Sub => Ok(zero_if_infinite(edge_derivative(measure, theta, Which::G)?)),
    }
}

/// Overlap limit for `X (I + θ u u*)`; `Raw` measures the eigenvector of
/// the product itself, `Similarity` that of `(I+P)^{1/2} X (I+P)^{1/2}`.
pub fn predict_multiplicative_overlap(
    measure: &SpectralMeasure,
    theta: f64,
    variant: OverlapVariant,
) -> Result<Option<f64>> {
    check_multiplicative(measure, theta)?;
    match regime(measure, theta, Which::T)? {
        Regime::Super(rho) => {
            let d = transform_real(measure, Which::T, rho, Order::Derivative)?;
            let raw = clamp_unit(-1.0 / (theta * theta * rho * d + theta));
            Ok(Some(match variant {
                OverlapVariant::Raw => raw,
                OverlapVariant::Similarity => clamp_unit(similarity_from_raw(theta, raw)),
            }))
        }
        Regime::Critical => Ok(None),
        Regime::Sub => Ok(zero_if_infinite(edge_derivative(measure, theta, Which::T)?)),
    }
}

/// Converts the raw multiplicative overlap into the overlap of the
/// symmetrized matrix: `(θ+1) x / (θ x + 1)`.
pub fn similarity_from_raw(theta: f64, raw: f64) -> f64 {
    (theta + 1.0) * raw / (theta * raw + 1.0)
}

fn zero_if_infinite(derivative: f64) -> Option<f64> {
    if derivative.is_infinite() {
        Some(0.0)
    } else {
        None
    }
}

// guards the last ulp; the formulas are in (0, 1] analytically
fn clamp_unit(x: f64) -> f64 {
    if x > 1.0 && x < 1.0 + 1e-12 {
        1.0
    } else {
        x
    }
}

fn predict_with(
    measure: &SpectralMeasure,
    spikes: &SpikeSpec,
    model: Model,
    overlap: impl Fn(f64) -> Result<Option<f64>>,
) -> Result<SpikePrediction> {
    let which = model.transform();
    let mut out = Vec::with_capacity(spikes.rank());
    for &theta in spikes.thetas() {
        if let Some(prev) = out.last().filter(|o: &&SpikeOutcome| o.theta == theta) {
            out.push(*prev);
            continue;
        }
        let (a, b, edge) = edge_for(measure, theta)?;
        let limit = match regime(measure, theta, which)? {
            Regime::Super(rho) => rho,
            _ => edge,
        };
        let detectable = limit > b || limit < a;
        out.push(SpikeOutcome {
            theta,
            limit,
            detectable,
            overlap_sq: overlap(theta)?,
            multiplicity: spikes.multiplicity(theta),
        });
    }
    Ok(SpikePrediction { model, spikes: out })
}

/// Outlier locations and overlaps for `X + Σ θ_i u_i u_i*`.
pub fn predict_additive(measure: &SpectralMeasure, spikes: &SpikeSpec) -> Result<SpikePrediction> {
    predict_with(measure, spikes, Model::Additive, |t| predict_additive_overlap(measure, t))
}

/// Outlier locations and raw overlaps for `X (I + Σ θ_i u_i u_i*)`.
pub fn predict_multiplicative(measure: &SpectralMeasure, spikes: &SpikeSpec) -> Result<SpikePrediction> {
    for &t in spikes.thetas() {
        check_multiplicative(measure, t)?;
    }
    predict_with(measure, spikes, Model::Multiplicative, |t| {
        predict_multiplicative_overlap(measure, t, OverlapVariant::Raw)
    })
}

/// Like [`predict_multiplicative`] with overlaps of the symmetrized matrix.
pub fn predict_similarity(measure: &SpectralMeasure, spikes: &SpikeSpec) -> Result<SpikePrediction> {
    for &t in spikes.thetas() {
        check_multiplicative(measure, t)?;
    }
    predict_with(measure, spikes, Model::Similarity, |t| {
        predict_multiplicative_overlap(measure, t, OverlapVariant::Similarity)
    })
}

pub fn predict(measure: &SpectralMeasure, spikes: &SpikeSpec, model: Model) -> Result<SpikePrediction> {
    match model {
        Model::Additive => predict_additive(measure, spikes),
        Model::Multiplicative => predict_multiplicative(measure, spikes),
        Model::Similarity => predict_similarity(measure, spikes),
    }
}

/// Additive outliers inside a hole `(c, d)` of the support: the solutions of
/// `G(z) = 1/θ` on that hole, for each spike whose `1/θ` is in the image.
pub fn predict_in_gap(measure: &SpectralMeasure, gap: (f64, f64), spikes: &SpikeSpec) -> Result<Vec<(f64, f64)>> {
    let (c, d) = gap;
    if !(c < d) || !measure.avoids_interval(c, d) {
        return Err(domain(format!("({c}, {d}) is not a hole of the support")));
    }
    let mut out = Vec::new();
    for &theta in spikes.thetas() {
        match invert_transform(measure, 1.0 / theta, Which::G, Branch::Gap(c, d)) {
            Ok(z) => out.push((theta, z)),
            Err(Error::OutOfRange { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spikes(t: &[f64]) -> SpikeSpec {
        SpikeSpec::new(t.to_vec()).unwrap()
    }

    #[test]
    fn spike_spec_sorts_and_rejects() {
        let s = spikes(&[-1.0, 3.0, 0.5, 3.0]);
        assert_eq!(s.thetas(), &[3.0, 3.0, 0.5, -1.0]);
        assert_eq!(s.positive(), 3);
        assert_eq!(s.multiplicity(3.0), 2);
        assert!(SpikeSpec::new(vec![1.0, 0.0]).is_err());
        assert!(SpikeSpec::new(vec![]).is_err());
        assert!(SpikeSpec::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn semicircle_examples() {
        let m = SpectralMeasure::semicircle(1.0).unwrap();
        let p = predict_additive(&m, &spikes(&[2.0, 0.5])).unwrap();
        assert!((p.spikes[0].limit - 2.5).abs() < 1e-12);
        assert!(p.spikes[0].detectable);
        assert!((p.spikes[0].overlap_sq.unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(p.spikes[1].limit, 2.0);
        assert!(!p.spikes[1].detectable);
        assert_eq!(p.spikes[1].overlap_sq, Some(0.0));
    }

    #[test]
    fn semicircle_negative_spike_mirrors() {
        let m = SpectralMeasure::semicircle(1.0).unwrap();
        let p = predict_additive(&m, &spikes(&[-3.0, -0.9])).unwrap();
        assert!((p.spikes[0].limit + 2.0).abs() < 1e-15);
        assert!(!p.spikes[0].detectable);
        assert!((p.spikes[1].limit + 3.0 + 1.0 / 3.0).abs() < 1e-12);
        assert!((p.spikes[1].overlap_sq.unwrap() - (1.0 - 1.0 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn limits_solve_the_transform_equation() {
        let cases = [
            (SpectralMeasure::semicircle(0.8).unwrap(), Model::Additive, vec![3.0, 1.2, -0.9, -2.5]),
            (SpectralMeasure::marchenko_pastur(0.5).unwrap(), Model::Additive, vec![2.0, -0.8]),
            (SpectralMeasure::marchenko_pastur(0.5).unwrap(), Model::Multiplicative, vec![4.0, 1.0, -0.8]),
            (SpectralMeasure::marchenko_pastur(2.0).unwrap(), Model::Multiplicative, vec![3.0]),
            (
                SpectralMeasure::atomic(vec![0.5, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap(),
                Model::Multiplicative,
                vec![0.7, -0.4],
            ),
        ];
        for (m, model, thetas) in cases {
            let p = predict(&m, &spikes(&thetas), model).unwrap();
            for o in p.spikes.iter().filter(|o| o.detectable) {
                let v = transform_real(&m, model.transform(), o.limit, Order::Value).unwrap();
                assert!((v - 1.0 / o.theta).abs() < 1e-9, "{model:?} θ={} F={v}", o.theta);
            }
        }
    }

    #[test]
    fn limits_approach_the_edge_monotonically() {
        let m = SpectralMeasure::marchenko_pastur(0.3).unwrap();
        let (_, b) = crate::measure::mp_edges(0.3);
        let crit = 1.0 / edge_limits(&m).unwrap().g_at_b_plus;
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let theta = crit * (1.0 + 2.0f64.powf(2.0 - 0.5 * k as f64));
            let limit = predict_additive(&m, &spikes(&[theta])).unwrap().spikes[0].limit;
            assert!(limit < prev && limit > b);
            prev = limit;
        }
        assert!(prev - b < 1e-6);
    }

    #[test]
    fn semicircle_overlap_increases_and_stays_in_unit_interval() {
        let m = SpectralMeasure::semicircle(1.3).unwrap();
        let mut prev = 0.0;
        for k in 1..60 {
            let theta = 1.3 + 0.1 * k as f64;
            let o = predict_additive_overlap(&m, theta).unwrap().unwrap();
            assert!(o > prev && o <= 1.0);
            prev = o;
        }
    }

    #[test]
    fn similarity_map_matches_closed_form_on_grid() {
        for c in [0.1, 0.25, 0.5, 0.8, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0] {
            let m = SpectralMeasure::marchenko_pastur(c).unwrap();
            let l = 1.0 + 1.5 * c.sqrt() + 0.2;
            let theta = l - 1.0;
            let sim = predict_multiplicative_overlap(&m, theta, OverlapVariant::Similarity).unwrap().unwrap();
            let raw = predict_multiplicative_overlap(&m, theta, OverlapVariant::Raw).unwrap().unwrap();
            let u = l - 1.0;
            let sim_closed = (1.0 - c / (u * u)) / (1.0 + c / u);
            let raw_closed = (u * u - c) / (u * (c * (l + 1.0) + l - 1.0));
            assert!((sim - sim_closed).abs() < 1e-10, "c={c}");
            assert!((raw - raw_closed).abs() < 1e-10, "c={c}");
        }
    }

    #[test]
    fn gap_outliers_of_two_atoms() {
        let m = SpectralMeasure::atomic(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        let g = predict_in_gap(&m, (0.01, 1.99), &spikes(&[1.0, -1.0])).unwrap();
        assert_eq!(g.len(), 2);
        assert!((g[0].1 - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((g[1].1 - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gap_requests() {
        let m = SpectralMeasure::marchenko_pastur(4.0).unwrap();
        assert!(predict_in_gap(&m, (0.01, 0.99), &spikes(&[0.001])).unwrap().is_empty());
        let sc = SpectralMeasure::semicircle(1.0).unwrap();
        assert!(matches!(predict_in_gap(&sc, (1.0, 4.0), &spikes(&[1.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn single_atom_is_exact() {
        let m = SpectralMeasure::atomic(vec![1.5], vec![1.0]).unwrap();
        for t in [-2.0, -0.1, 0.3, 4.0] {
            let p = predict_additive(&m, &spikes(&[t])).unwrap();
            assert!((p.spikes[0].limit - (1.5 + t)).abs() < 1e-12);
            assert!(p.spikes[0].detectable);
            assert!((p.spikes[0].overlap_sq.unwrap() - 1.0).abs() < 1e-12);
        }
        for t in [-0.5, 0.3, 4.0] {
            let p = predict_multiplicative(&m, &spikes(&[t])).unwrap();
            assert!((p.spikes[0].limit - 1.5 * (1.0 + t)).abs() < 1e-12);
            assert!((p.spikes[0].overlap_sq.unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn marchenko_pastur_examples() {
        let m = SpectralMeasure::marchenko_pastur(0.25).unwrap();
        let p = predict_multiplicative(&m, &spikes(&[1.0, 0.3])).unwrap();
        assert!((p.spikes[0].limit - 2.5).abs() < 1e-12);
        assert!(p.spikes[0].detectable);
        assert!((p.spikes[0].overlap_sq.unwrap() - 3.0 / 7.0).abs() < 1e-12);
        assert_eq!(p.spikes[1].limit, 2.25);
        assert!(!p.spikes[1].detectable);
        assert_eq!(p.spikes[1].overlap_sq, Some(0.0));
        let s = predict_multiplicative_overlap(&m, 1.0, OverlapVariant::Similarity).unwrap().unwrap();
        assert!((s - 0.6).abs() < 1e-12);
    }

    #[test]
    fn multiplicative_rejections() {
        let m = SpectralMeasure::marchenko_pastur(0.25).unwrap();
        assert!(matches!(predict_multiplicative(&m, &spikes(&[-1.0])), Err(Error::Domain(_))));
        let sc = SpectralMeasure::semicircle(1.0).unwrap();
        assert!(matches!(predict_multiplicative(&sc, &spikes(&[1.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn finite_edge_derivative_gives_unknown_overlap() {
        // density vanishing like (1-t)^2: finite threshold and finite G'(b+)
        let f: crate::measure::DensityFn = std::sync::Arc::new(|t| 30.0 * t * t * (1.0 - t) * (1.0 - t));
        let m = SpectralMeasure::density(0.0, 1.0, f, 2.0, 2.0, 0.0).unwrap();
        // G(1+) = 2.5, so θ_c = 0.4
        let p = predict_additive(&m, &spikes(&[0.3, 1.0])).unwrap();
        assert!(p.spikes[0].detectable);
        assert!(p.spikes[0].overlap_sq.unwrap() > 0.0);
        assert!(!p.spikes[1].detectable);
        assert_eq!(p.spikes[1].limit, 1.0);
        assert_eq!(p.spikes[1].overlap_sq, None);
    }
}
