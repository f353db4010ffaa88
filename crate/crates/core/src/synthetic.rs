//! Seeded synthetic patient cases for tests, demos and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::patient_io::{DoseVector, PatientCase, Roi, RoiKind, StructureSet, VoxelGrid};
use crate::sparse::DoseInfluenceMatrix;

/// Shape of a small random instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n_voxels: usize,
    pub n_beamlets: usize,
    /// Probability that a (voxel, beamlet) entry is non-zero.
    pub density: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            n_voxels: 20,
            n_beamlets: 8,
            density: 0.5,
        }
    }
}

/// Random case with a PTV70, a PTV56 overlapping it, a max-dose organ
/// (`brainstem`), a mean-dose organ (`larynx`) and a plain organ.
///
/// Voxels are split into five consecutive blocks; the PTV56 block shares one
/// voxel with the PTV70 block.
pub fn random_case(spec: &RandomSpec, seed: u64) -> PatientCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n_voxels.max(5);
    let nb = spec.n_beamlets.max(1);
    let mut triplets = Vec::new();
    for v in 0..n {
        for b in 0..nb {
            if rng.random::<f64>() < spec.density {
                triplets.push((v, b, rng.random_range(0.05..1.0)));
            }
        }
        // Keep every voxel reachable.
        if triplets.last().is_none_or(|t| t.0 != v) {
            triplets.push((v, rng.random_range(0..nb), rng.random_range(0.05..1.0)));
        }
    }
    let influence = DoseInfluenceMatrix::from_triplets(n, nb, triplets).expect("valid triplets");

    let cut = |k: usize| k * n / 5;
    let block = |k: usize| (cut(k)..cut(k + 1)).collect::<Vec<_>>();
    let mut ptv56 = block(1);
    ptv56.insert(0, cut(1) - 1);
    let rois = vec![
        roi("ptv70", RoiKind::Ptv { level_gy: 70.0 }, block(0)),
        roi("ptv56", RoiKind::Ptv { level_gy: 56.0 }, ptv56),
        roi("brainstem", RoiKind::OarMax, block(2)),
        roi("larynx", RoiKind::OarMean, block(3)),
        roi("body", RoiKind::Oar, block(4)),
    ];
    // Prediction: the dose of a random plan scaled to about 68 Gy over the
    // PTV70, jittered by up to 10% per voxel.
    let x0: Vec<f64> = (0..nb).map(|_| rng.random::<f64>()).collect();
    let d0 = influence.dose(&x0).expect("matching length");
    let ptv_mean = d0[..cut(1)].iter().sum::<f64>() / cut(1) as f64;
    let scale = if ptv_mean > 0.0 { 68.0 / ptv_mean } else { 1.0 };
    let pred: Vec<f64> = d0
        .iter()
        .map(|&d| d * scale * rng.random_range(0.9..1.1))
        .collect();
    PatientCase {
        id: format!("random-{seed}"),
        grid: VoxelGrid::new([n, 1, 1], [4.0, 4.0, 4.0]).expect("positive grid"),
        structures: StructureSet { rois },
        influence,
        predicted_dose: DoseVector(pred),
        reference_dose: None,
        feasible_mask: None,
        voxel_weights: vec![1.0; n],
    }
}

fn roi(name: &str, kind: RoiKind, voxels: Vec<usize>) -> Roi {
    Roi {
        name: name.into(),
        kind,
        voxels,
    }
}

/// Two-dimensional head-and-neck-like phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub voxel_mm: f64,
    pub beams: usize,
    pub strips_per_beam: usize,
    /// Mean predicted dose over the target (Gy).
    pub predicted_ptv_gy: f64,
    /// Relative half-width of the uniform per-voxel noise on the prediction.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            nx: 25,
            ny: 20,
            voxel_mm: 4.0,
            beams: 5,
            strips_per_beam: 10,
            predicted_ptv_gy: 63.0,
            jitter: 0.03,
            seed: 0,
        }
    }
}

/// Disk of radius `r` voxels centred at `(cx, cy)`.
fn disk(spec: &PhantomSpec, cx: f64, cy: f64, r: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for y in 0..spec.ny {
        for x in 0..spec.nx {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                out.push(y * spec.nx + x);
            }
        }
    }
    out
}

/// A PTV70 disk with a `right_parotid` disk touching it, inside a `body`
/// region, irradiated by equispaced coplanar beams split into parallel strips
/// with depth attenuation and Gaussian lateral falloff.
///
/// The prediction is the dose of the all-ones fluence, scaled to a target
/// mean of `predicted_ptv_gy` and jittered per voxel. With the defaults it
/// underdoses the target and overdoses the parotid, violating both clinical
/// criteria.
pub fn phantom_case(spec: &PhantomSpec) -> PatientCase {
    let n = spec.nx * spec.ny;
    let (cx, cy) = (spec.nx as f64 * 0.4, spec.ny as f64 / 2.0 - 0.5);
    let ptv_r = spec.nx as f64 * 0.2;
    let par_r = ptv_r * 0.7;
    let ptv = disk(spec, cx, cy, ptv_r);
    let parotid: Vec<usize> = disk(spec, cx + ptv_r + par_r + 0.5, cy, par_r)
        .into_iter()
        .filter(|v| !ptv.contains(v))
        .collect();
    let body: Vec<usize> = (0..n).filter(|v| !ptv.contains(v) && !parotid.contains(v)).collect();

    let mut triplets = Vec::new();
    let field = 2.0 * ptv_r + 2.0;
    let width = field / spec.strips_per_beam as f64;
    let sigma = width * 0.6;
    for beam in 0..spec.beams {
        // Half-circle arc of coplanar directions, opening away from the organ side.
        let angle = std::f64::consts::PI * (0.5 + beam as f64 / (spec.beams.max(2) - 1) as f64);
        let (ux, uy) = (angle.cos(), angle.sin());
        let (px, py) = (-uy, ux);
        for strip in 0..spec.strips_per_beam {
            let b = beam * spec.strips_per_beam + strip;
            let offset = -field / 2.0 + width * (strip as f64 + 0.5);
            for y in 0..spec.ny {
                for x in 0..spec.nx {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    let lateral = dx * px + dy * py - offset;
                    let along = dx * ux + dy * uy;
                    let depth = (along + spec.nx.max(spec.ny) as f64).max(0.0);
                    let value = (-(lateral / sigma).powi(2) / 2.0).exp() * (-0.03 * depth).exp();
                    if value > 1e-3 {
                        triplets.push((y * spec.nx + x, b, value));
                    }
                }
            }
        }
    }
    let nb = spec.beams * spec.strips_per_beam;
    let influence = DoseInfluenceMatrix::from_triplets(n, nb, triplets).expect("valid triplets");

    let flat = influence.dose(&vec![1.0; nb]).expect("matching length");
    let ptv_mean = ptv.iter().map(|&v| flat[v]).sum::<f64>() / ptv.len().max(1) as f64;
    let scale = if ptv_mean > 0.0 { spec.predicted_ptv_gy / ptv_mean } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pred: Vec<f64> = flat
        .iter()
        .map(|d| d * scale * (1.0 + spec.jitter * rng.random_range(-1.0..=1.0)))
        .collect();
    PatientCase {
        id: "phantom".into(),
        grid: VoxelGrid::new([spec.nx, spec.ny, 1], [spec.voxel_mm; 3]).expect("positive grid"),
        structures: StructureSet {
            rois: vec![
                roi("ptv70", RoiKind::Ptv { level_gy: 70.0 }, ptv),
                roi("right_parotid", RoiKind::OarMean, parotid),
                roi("body", RoiKind::Oar, body),
            ],
        },
        influence,
        predicted_dose: DoseVector(pred),
        reference_dose: None,
        feasible_mask: None,
        voxel_weights: vec![1.0; n],
    }
}

/// Large random case for throughput measurements: `nnz` entries spread
/// evenly over the rows of an `n_voxels x n_beamlets` matrix (distinct
/// beamlets per row), a PTV70 on the first tenth of the voxels, a spinal cord
/// and a parotid on the next two tenths. The prediction is the dose of a
/// random plan scaled to a 68 Gy target mean, jittered by up to 10%.
pub fn large_case(n_voxels: usize, n_beamlets: usize, nnz: usize, seed: u64) -> PatientCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_row = (nnz / n_voxels.max(1)).min(n_beamlets);
    let mut triplets = Vec::with_capacity(per_row * n_voxels);
    for v in 0..n_voxels {
        for b in rand::seq::index::sample(&mut rng, n_beamlets, per_row) {
            triplets.push((v, b, rng.random_range(0.0..0.05)));
        }
    }
    let influence = DoseInfluenceMatrix::from_triplets(n_voxels, n_beamlets, triplets).expect("valid triplets");
    let tenth = n_voxels / 10;
    let ptv: Vec<usize> = (0..tenth).collect();
    let cord: Vec<usize> = (tenth..2 * tenth).collect();
    let parotid: Vec<usize> = (2 * tenth..3 * tenth).collect();
    let body: Vec<usize> = (3 * tenth..n_voxels).collect();
    let x0: Vec<f64> = (0..n_beamlets).map(|_| rng.random::<f64>()).collect();
    let d0 = influence.dose(&x0).expect("matching length");
    let ptv_mean = d0[..tenth].iter().sum::<f64>() / tenth.max(1) as f64;
    let scale = if ptv_mean > 0.0 { 68.0 / ptv_mean } else { 1.0 };
    let pred: Vec<f64> = d0.iter().map(|&d| d * scale * rng.random_range(0.9..1.1)).collect();
    PatientCase {
        id: format!("large-{seed}"),
        grid: VoxelGrid::new([n_voxels, 1, 1], [2.5, 2.5, 2.5]).expect("positive grid"),
        structures: StructureSet {
            rois: vec![
                roi("ptv70", RoiKind::Ptv { level_gy: 70.0 }, ptv),
                roi("spinal_cord", RoiKind::OarMax, cord),
                roi("left_parotid", RoiKind::OarMean, parotid),
                roi("body", RoiKind::Oar, body),
            ],
        },
        influence,
        predicted_dose: DoseVector(pred),
        reference_dose: None,
        feasible_mask: None,
        voxel_weights: vec![1.0; n_voxels],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patient_io::validate_case;

    #[test]
    fn random_cases_are_valid_and_seeded() {
        let spec = RandomSpec::default();
        let a = random_case(&spec, 3);
        assert!(validate_case(&a).is_valid(), "{:?}", validate_case(&a).findings);
        assert_eq!(a, random_case(&spec, 3));
        assert_ne!(a.influence, random_case(&spec, 4).influence);
    }

    #[test]
    fn phantom_shape() {
        let c = phantom_case(&PhantomSpec::default());
        assert!(validate_case(&c).is_valid());
        assert_eq!((c.n_voxels(), c.n_beamlets()), (500, 50));
        let ptv = &c.structures.get("ptv70").unwrap().voxels;
        let par = &c.structures.get("right_parotid").unwrap().voxels;
        assert!(ptv.len() > 40 && par.len() > 15, "{} {}", ptv.len(), par.len());
        let mean = ptv.iter().map(|&v| c.predicted_dose[v]).sum::<f64>() / ptv.len() as f64;
        assert!((mean - 63.0).abs() < 1.0, "{mean}");
        assert_eq!(c, phantom_case(&PhantomSpec::default()));
    }
}
