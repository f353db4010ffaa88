mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{random_fluence, small_case};
use quadlin::model::{assemble_model, Coefficients};
use quadlin::patient_io::RoiKind;
use quadlin::PatientCase;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The constrained program evaluated term by term from the raw case, with
/// every auxiliary variable set by its own inner optimization:
/// underdose/overdose variables take the smallest value their constraint
/// allows, the max-structure credit takes the largest (clamped at zero).
fn constrained_objective(case: &PatientCase, x: &[f64], c: &Coefficients) -> f64 {
    let n = case.n_voxels();
    let mut d = vec![0.0; n];
    for (v, b, a) in case.influence.triplets() {
        d[v] += a * x[b];
    }
    let pred = &case.predicted_dose;
    let w = &case.voxel_weights;
    let mut pres = vec![0.0f64; n];
    let mut in_ptv = vec![false; n];
    for r in &case.structures.rois {
        if let RoiKind::Ptv { level_gy } = r.kind {
            for &v in &r.voxels {
                pres[v] = pres[v].max(level_gy);
                in_ptv[v] = true;
            }
        }
    }
    let organ_members = |r: &quadlin::patient_io::Roi| -> Vec<usize> {
        r.voxels.iter().copied().filter(|&v| !in_ptv[v]).collect::<BTreeSet<_>>().into_iter().collect()
    };

    let (mut z1, mut sw1) = (0.0, 0.0);
    for v in (0..n).filter(|&v| in_ptv[v]) {
        let lower = pred[v].min(pres[v]);
        let upper = pred[v].max(pres[v]);
        let ud = (lower - d[v]).max(0.0);
        let od = (d[v] - upper).max(0.0);
        assert!(d[v] >= lower - ud - 1e-9 && d[v] <= upper + od + 1e-9);
        z1 += w[v] * (c.psi1 * ud * ud + c.psi2 * od * od + c.xi1 * (pres[v] - d[v]).abs());
        sw1 += w[v];
    }
    let oar: BTreeSet<usize> = case
        .structures
        .rois
        .iter()
        .filter(|r| !r.kind.is_target())
        .flat_map(&organ_members)
        .collect();
    let (mut z2, mut sw2) = (0.0, 0.0);
    for &v in &oar {
        let od = (d[v] - pred[v]).max(0.0);
        z2 += w[v] * (c.psi3 * od * od + c.xi2 * d[v]);
        sw2 += w[v];
    }
    let (mut z3, mut sw3) = (0.0, 0.0);
    let mut z4 = 0.0;
    for r in &case.structures.rois {
        let members = organ_members(r);
        if members.is_empty() {
            continue;
        }
        match r.kind {
            RoiKind::OarMax => {
                let m = members.iter().map(|&v| pred[v]).fold(0.0, f64::max);
                for &v in &members {
                    let od = (d[v] - m).max(0.0);
                    let room = c.chi * m - (d[v] - c.zeta * m).max(0.0);
                    let ud = room.max(0.0);
                    z3 += w[v] * (c.psi4 * od - c.xi3 * ud);
                    sw3 += w[v];
                }
            }
            RoiKind::OarMean => {
                let ws: f64 = members.iter().map(|&v| w[v]).sum();
                let mean = members.iter().map(|&v| w[v] * d[v]).sum::<f64>() / ws;
                let meanp = members.iter().map(|&v| w[v] * pred[v]).sum::<f64>() / ws;
                let od = (mean - meanp).max(0.0);
                z4 += c.psi5 * od * od + c.xi4 * mean * mean;
            }
            _ => {}
        }
    }
    let part = |z: f64, s: f64| if s > 0.0 { z / s } else { 0.0 };
    part(z1, sw1) + part(z2, sw2) + part(z3, sw3) + z4
}

#[test]
fn reduced_objective_matches_constrained_program() {
    let c = Coefficients::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..100 {
        let mut case = small_case(seed, 30, 10);
        if seed % 3 == 0 {
            case.voxel_weights = (0..case.n_voxels()).map(|_| rng.random_range(0.5..2.0)).collect();
        }
        let m = assemble_model(&case, &case.predicted_dose, &c).unwrap();
        let x = random_fluence(&case, &mut rng);
        let got = m.objective(&x).unwrap();
        let want = constrained_objective(&case, &x, &c);
        assert!(
            (got.total - want).abs() <= 1e-10 * want.abs().max(1.0),
            "seed {seed}: {} vs {want}",
            got.total
        );
        assert_eq!(got.total, got.z1 + got.z2 + got.z3 + got.z4);
    }
}

#[test]
fn objective_is_convex_along_random_segments() {
    let c = Coefficients::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut violations = 0;
    for t in 0..1000u64 {
        let case = small_case(t % 50, 30, 10);
        let m = assemble_model(&case, &case.predicted_dose, &c).unwrap();
        let x1 = random_fluence(&case, &mut rng);
        let x2 = random_fluence(&case, &mut rng);
        let lam: f64 = rng.random();
        let xm: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let f1 = m.objective(&x1).unwrap().total;
        let f2 = m.objective(&x2).unwrap().total;
        let fm = m.objective(&xm).unwrap().total;
        if fm > lam * f1 + (1.0 - lam) * f2 + 1e-9 * (1.0 + f1.abs() + f2.abs()) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

/// Distance from every voxel dose to the nearest kink of its penalty terms.
fn kink_distance(m: &quadlin::QuadLinModel<'_>, dose: &[f64]) -> f64 {
    let mut dist = f64::INFINITY;
    for p in &m.ptv {
        for k in [p.lower, p.upper, p.pres] {
            dist = dist.min((dose[p.voxel] - k).abs());
        }
    }
    for p in &m.oar {
        dist = dist.min((dose[p.voxel] - p.pred).abs());
    }
    for p in &m.max_terms {
        for k in [p.zeta * p.max_pred, p.max_pred, (p.zeta + p.chi) * p.max_pred] {
            dist = dist.min((dose[p.voxel] - k).abs());
        }
    }
    for s in &m.mean_structures {
        dist = dist.min((s.mean(dose) - s.mean_pred).abs());
    }
    dist
}

#[test]
fn subgradient_matches_central_differences_off_kinks() {
    let c = Coefficients::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut checked = 0;
    let mut seed = 0;
    while checked < 50 {
        seed += 1;
        let case = small_case(seed, 30, 10);
        let m = assemble_model(&case, &case.predicted_dose, &c).unwrap();
        let x = random_fluence(&case, &mut rng);
        let h = 1e-6;
        let row_max = (0..case.n_voxels())
            .map(|v| case.influence.row(v).map(|(_, a)| a).sum::<f64>())
            .fold(0.0, f64::max);
        if kink_distance(&m, &m.compute_dose(&x).unwrap()) <= 10.0 * h * row_max {
            continue;
        }
        let g = m.subgradient(&x).unwrap();
        let mut fd = vec![0.0; x.len()];
        for b in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[b] += h;
            xm[b] -= h;
            fd[b] = (m.objective(&xp).unwrap().total - m.objective(&xm).unwrap().total) / (2.0 * h);
        }
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err <= 1e-5 * scale, "seed {seed}: error {err} at scale {scale}");
        checked += 1;
    }
}

#[test]
fn smoothed_gradient_matches_central_differences() {
    let c = Coefficients::default();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..20 {
        let case = small_case(seed, 30, 10);
        let m = assemble_model(&case, &case.predicted_dose, &c).unwrap();
        let x = random_fluence(&case, &mut rng);
        let delta = 0.5;
        let (_, g) = m.gradient(&x, delta).unwrap();
        let f = |x: &[f64]| m.gradient(x, delta).unwrap().0.total;
        let h = 1e-6;
        for b in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[b] += h;
            xm[b] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - g[b]).abs() <= 1e-4 * (1.0 + fd.abs()), "seed {seed} b {b}: {fd} vs {}", g[b]);
        }
    }
}

#[test]
fn scaling_coefficients_scales_objective_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for seed in 0..30 {
        let case = small_case(seed, 30, 10);
        let base = Coefficients::default();
        let m1 = assemble_model(&case, &case.predicted_dose, &base).unwrap();
        let m2 = assemble_model(&case, &case.predicted_dose, &base.scaled(2.0)).unwrap();
        let m4 = assemble_model(&case, &case.predicted_dose, &base.scaled(0.25)).unwrap();
        let x = random_fluence(&case, &mut rng);
        let (f1, g1) = m1.gradient(&x, 0.0).unwrap();
        let (f2, g2) = m2.gradient(&x, 0.0).unwrap();
        assert_eq!(f2.total, 2.0 * f1.total);
        assert_eq!(m4.objective(&x).unwrap().total, 0.25 * f1.total);
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(*b, 2.0 * a);
        }
    }
}

#[test]
fn dose_is_linear_and_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for seed in 0..30 {
        let case = small_case(seed, 30, 10);
        let x = random_fluence(&case, &mut rng);
        let d = quadlin::compute_dose(&case.influence, &x).unwrap();
        let mut dense = vec![vec![0.0; case.n_beamlets()]; case.n_voxels()];
        for (v, b, a) in case.influence.triplets() {
            dense[v][b] = a;
        }
        for v in 0..case.n_voxels() {
            let want: f64 = dense[v].iter().zip(&x).map(|(a, xb)| a * xb).sum();
            assert!((d[v] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
        for alpha in [0.0, 0.5, 2.0, 8.0] {
            let xa: Vec<f64> = x.iter().map(|v| alpha * v).collect();
            let da = quadlin::compute_dose(&case.influence, &xa).unwrap();
            for (a, b) in da.iter().zip(d.iter()) {
                assert!((a - alpha * b).abs() <= 1e-12 * (1.0 + (alpha * b).abs()));
            }
        }
    }
}

#[test]
fn single_precision_model_tracks_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let case = small_case(3, 30, 10);
    let case32 = case.cast::<f32>();
    let c = Coefficients::default();
    let m = assemble_model(&case, &case.predicted_dose, &c).unwrap();
    let m32 = assemble_model(&case32, &case32.predicted_dose, &c).unwrap();
    let x = random_fluence(&case, &mut rng);
    let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let f = m.objective(&x).unwrap().total;
    let f32v = m32.objective(&x32).unwrap().total as f64;
    assert!((f - f32v).abs() <= 1e-3 * f.abs(), "{f} vs {f32v}");
    let summary: BTreeMap<_, _> = m.summary().max_structures.iter().map(|s| (s.name.clone(), s.max_pred_gy)).collect();
    assert!(summary.contains_key("brainstem"));
}
