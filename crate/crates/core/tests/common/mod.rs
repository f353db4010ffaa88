#![allow(dead_code)]

use quadlin::synthetic::{random_case, RandomSpec};
use quadlin::PatientCase;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random case with 10..=`max_voxels` voxels and 2..=`max_beamlets` beamlets.
pub fn small_case(seed: u64, max_voxels: usize, max_beamlets: usize) -> PatientCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let spec = RandomSpec {
        n_voxels: rng.random_range(10..=max_voxels),
        n_beamlets: rng.random_range(2..=max_beamlets),
        density: 0.5,
    };
    random_case(&spec, seed)
}

/// Nonnegative fluence scaled so the mean dose over the first fifth of the
/// voxels (the PTV70 block of synthetic cases) lands uniformly in 30..100 Gy.
pub fn random_fluence(case: &PatientCase, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let x: Vec<f64> = (0..case.n_beamlets()).map(|_| rng.random::<f64>()).collect();
    let d = case.influence.dose(&x).unwrap();
    let k = (case.n_voxels() / 5).max(1);
    let mean = d[..k].iter().sum::<f64>() / k as f64;
    let target = rng.random_range(30.0..100.0);
    let s = if mean > 0.0 { target / mean } else { 1.0 };
    x.into_iter().map(|v| v * s).collect()
}
