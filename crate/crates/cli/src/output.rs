//! Helpers shared by the commands for reading doses and writing artifacts.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use quadlin::patient_io::{load_prediction, read_dose_csv, DoseVector, PatientCase};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// Requested report formats; `csv` and `json` when none are given.
pub fn formats(requested: &[Format]) -> BTreeSet<Format> {
    if requested.is_empty() {
        [Format::Csv, Format::Json].into()
    } else {
        requested.iter().copied().collect()
    }
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Reads a dose file for a grid of `n` voxels.
///
/// Two layouts are accepted: sparse `voxel_id,dose_gy` rows (absent voxels
/// are 0 Gy) or a dense single `dose_gy` column with exactly `n` rows.
pub fn read_dose_file(path: &Path, n: usize) -> anyhow::Result<DoseVector> {
    let f = File::open(path).with_context(|| format!("opening dose file {}", path.display()))?;
    let mut first = String::new();
    BufReader::new(f).read_line(&mut first)?;
    if first.trim() != "dose_gy" {
        return Ok(read_dose_csv(path, n)?);
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut dose = Vec::with_capacity(n);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(0).unwrap_or_default().trim();
        let d: f64 = raw
            .parse()
            .with_context(|| format!("{}:{}: `{raw}` is not a number", path.display(), i + 2))?;
        if !d.is_finite() || d < 0.0 {
            bail!("{}:{}: dose must be finite and nonnegative, got {d}", path.display(), i + 2);
        }
        dose.push(d);
    }
    if dose.len() != n {
        bail!(
            "dose length mismatch: {} has {} values, the bundle has {n} voxels",
            path.display(),
            dose.len()
        );
    }
    Ok(DoseVector(dose))
}

/// Resolves a dose selector against a loaded bundle.
///
/// `reference` is the bundle's reference dose; an existing file is read with
/// [`read_dose_file`]; anything else goes through the bundle's prediction
/// lookup (`predicted`, an index or a set name).
pub fn resolve_dose(bundle: &Path, case: &PatientCase, selector: &str) -> anyhow::Result<DoseVector> {
    let n = case.n_voxels();
    if selector == "reference" {
        return case
            .reference_dose
            .clone()
            .with_context(|| format!("bundle {} has no reference dose", bundle.display()));
    }
    let path = PathBuf::from(selector);
    if path.is_file() {
        return read_dose_file(&path, n);
    }
    Ok(load_prediction(bundle, selector, n)?)
}

pub fn load_case(bundle: &Path) -> anyhow::Result<PatientCase> {
    quadlin::load_patient(bundle).with_context(|| format!("loading bundle {}", bundle.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_doses_must_match_the_grid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "dose_gy\n1.5\n0\n2\n").unwrap();
        assert_eq!(read_dose_file(&p, 3).unwrap().0, vec![1.5, 0.0, 2.0]);
        let err = read_dose_file(&p, 4).unwrap_err().to_string();
        assert!(err.contains("length mismatch"), "{err}");
        fs::write(&p, "voxel_id,dose_gy\n2,4.0\n").unwrap();
        assert_eq!(read_dose_file(&p, 3).unwrap().0, vec![0.0, 0.0, 4.0]);
        assert!(read_dose_file(&p, 2).is_err());
    }
}
