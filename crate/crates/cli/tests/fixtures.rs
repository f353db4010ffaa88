//! Checks that the checked-in fixtures match their generators.
//!
//! `cargo test -p quadlin-cli --test fixtures -- --ignored` rewrites the
//! oracle value of the 20x8 bundle.

use std::path::{Path, PathBuf};

use quadlin::patient_io::load_patient;
use quadlin::synthetic::{random_case, RandomSpec};
use serde::{Deserialize, Serialize};

pub const ORACLE_ITERS: usize = 1_000_000;

#[derive(Debug, Serialize, Deserialize)]
struct Oracle {
    bundle: String,
    method: String,
    iterations: usize,
    objective: f64,
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[test]
fn random_bundles_match_their_seeds() {
    for (dir, seed, voxels, beamlets) in [("random_20x8", 7, 20, 8), ("random_24x6", 8, 24, 6)] {
        let mut want = random_case(
            &RandomSpec {
                n_voxels: voxels,
                n_beamlets: beamlets,
                density: 0.5,
            },
            seed,
        );
        want.structures.canonicalize();
        assert_eq!(load_patient(fixtures().join(dir)).unwrap(), want, "{dir}");
    }
}

#[test]
#[ignore = "slow; rewrites tests/fixtures/random_20x8/oracle.json"]
fn regenerate_oracle() {
    let dir = fixtures().join("random_20x8");
    let case = load_patient(&dir).unwrap();
    let model = quadlin::assemble_model(&case, &case.predicted_dose, &quadlin::Coefficients::default()).unwrap();
    let r = quadlin::reference_solve(&model, ORACLE_ITERS).unwrap();
    let oracle = Oracle {
        bundle: "random_20x8".into(),
        method: "projected_subgradient_reference".into(),
        iterations: ORACLE_ITERS,
        objective: r.breakdown.total,
    };
    std::fs::write(dir.join("oracle.json"), serde_json::to_string_pretty(&oracle).unwrap() + "\n").unwrap();
}
