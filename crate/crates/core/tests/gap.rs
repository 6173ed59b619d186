use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spikelab::lab::{deform, sample_ensemble, EnsembleSpec};
use spikelab::{predict_in_gap, Model, SpikeSpec};

fn two_atoms(n: usize) -> EnsembleSpec {
    EnsembleSpec::FixedDiagonal { values: (0..n).map(|i| if i < n / 2 { 0.0 } else { 2.0 }).collect() }
}

#[test]
fn negative_spike_enters_the_gap_from_above() {
    let spec = two_atoms(400);
    let spikes = SpikeSpec::new(vec![-1.0]).unwrap();
    let target = (1.0 + 5f64.sqrt()) / 2.0;
    let predicted = predict_in_gap(&spec.limit_measure().unwrap(), (0.0, 2.0), &spikes).unwrap();
    assert_eq!(predicted.len(), 1);
    assert!((predicted[0].1 - target).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut found = Vec::new();
    for _ in 0..20 {
        let x = sample_ensemble(&spec, &mut rng).unwrap();
        let d = deform(&x, &spikes, Model::Additive, &mut rng).unwrap();
        found.extend(d.matrix.eigenvalues().unwrap().into_iter().filter(|v| *v > 0.05 && *v < 1.95));
    }
    assert_eq!(found.len(), 20);
    let mean = found.iter().sum::<f64>() / found.len() as f64;
    assert!((mean - target).abs() < 0.03, "{mean}");
}
