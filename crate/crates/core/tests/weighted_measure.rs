use faer::Side;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spikelab::lab::{haar_frame, sample_ensemble, weighted_measure, DenseMatrix, EnsembleSpec, Field};

/// Moments of μ_11 over many frames on one GOE spectrum fluctuate around the
/// spectrum's own moments at the scale sqrt(2 Var(t^k) / n).
#[test]
fn diagonal_weighted_moments_fluctuate_at_the_predicted_scale() {
    let n = 400;
    let draws = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let DenseMatrix::Real(x) = sample_ensemble(&EnsembleSpec::Goe { n, sigma: 1.0 }, &mut rng).unwrap() else {
        unreachable!()
    };
    let lambdas: Vec<f64> = x.self_adjoint_eigenvalues(Side::Lower).unwrap();
    for k in 1..=3 {
        let powers: Vec<f64> = lambdas.iter().map(|t| t.powi(k)).collect();
        let mean = powers.iter().sum::<f64>() / n as f64;
        let var = powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n as f64;
        let predicted_sd = (2.0 * var / (n as f64 + 2.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let devs: Vec<f64> = (0..draws)
            .map(|_| {
                let u = haar_frame(n, 1, Field::Real, &mut rng).unwrap();
                let mu = weighted_measure(&u, &lambdas, 0, 0).unwrap();
                mu.atoms.iter().zip(&mu.weights).map(|(t, w)| w.re * t.powi(k)).sum::<f64>() - mean
            })
            .collect();
        let avg = devs.iter().sum::<f64>() / draws as f64;
        let sd = (devs.iter().map(|d| (d - avg).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
        assert!(avg.abs() < 4.0 * predicted_sd / (draws as f64).sqrt(), "k={k}: mean deviation {avg}");
        assert!((sd / predicted_sd - 1.0).abs() < 0.15, "k={k}: sd {sd} vs {predicted_sd}");
    }
}
