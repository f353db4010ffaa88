//! Canonical on-disk bundle layout.
//!
//! ```text
//! meta.json            {"id", "dims", "voxel_size_mm", "n_beamlets"?}
//! structures.csv       roi_name,roi_kind,level_gy,voxel_id
//! influence.csv        voxel_id,beamlet_id,value
//! predicted_dose.csv   voxel_id,dose_gy      (absent voxels are 0 Gy)
//! reference_dose.csv   voxel_id,dose_gy      optional
//! feasible_mask.csv    voxel_id              optional
//! predictions/*.csv    voxel_id,dose_gy      optional extra prediction sets
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};
use serde::{Deserialize, Serialize};

use super::{
    validate_case, DoseVector, LoadError, PatientCase, Roi, RoiKind, StructureSet, VoxelGrid,
};
use crate::sparse::DoseInfluenceMatrix;

pub const PREDICTIONS_DIR: &str = "predictions";

const META: &str = "meta.json";
const STRUCTURES: &str = "structures.csv";
const INFLUENCE: &str = "influence.csv";
const PREDICTED: &str = "predicted_dose.csv";
const REFERENCE: &str = "reference_dose.csv";
const MASK: &str = "feasible_mask.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub id: String,
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_beamlets: Option<usize>,
}

/// Loads and validates a bundle. Structures and sparse entries come back in canonical order.
pub fn load_patient(dir: impl AsRef<Path>) -> Result<PatientCase, LoadError> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    let grid = VoxelGrid::new(meta.dims, meta.voxel_size_mm).ok_or_else(|| LoadError::Json {
        file: display(&dir.join(META)),
        message: "dims and voxel sizes must be positive".into(),
    })?;
    let n_voxels = grid.n_voxels();

    let structures = read_structures(&require(dir, STRUCTURES)?, n_voxels)?;
    let influence = read_influence(&require(dir, INFLUENCE)?, n_voxels, meta.n_beamlets)?;
    let predicted_dose = read_dose_csv(require(dir, PREDICTED)?, n_voxels)?;
    let reference_dose = optional(dir, REFERENCE)
        .map(|p| read_dose_csv(p, n_voxels))
        .transpose()?;
    let feasible_mask = optional(dir, MASK)
        .map(|p| read_mask(&p, n_voxels))
        .transpose()?;

    let case = PatientCase {
        id: meta.id,
        grid,
        structures,
        influence,
        predicted_dose,
        reference_dose,
        feasible_mask,
        voxel_weights: vec![1.0; n_voxels],
    };
    let report = validate_case(&case);
    if report.is_valid() {
        Ok(case)
    } else {
        Err(LoadError::Invalid(report.findings))
    }
}

/// Writes `case` in canonical layout, creating `dir` if needed.
pub fn write_bundle(case: &PatientCase, dir: impl AsRef<Path>) -> Result<(), LoadError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let meta = BundleMeta {
        id: case.id.clone(),
        dims: case.grid.dims,
        voxel_size_mm: case.grid.voxel_size_mm,
        n_beamlets: Some(case.n_beamlets()),
    };
    let path = dir.join(META);
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))?;

    let path = dir.join(STRUCTURES);
    let mut w = csv_writer(&path)?;
    write_row(&mut w, &path, &["roi_name", "roi_kind", "level_gy", "voxel_id"])?;
    for roi in &case.structures.rois {
        let level = roi.kind.level_gy().map(|l| l.to_string()).unwrap_or_default();
        if roi.voxels.is_empty() {
            write_row(&mut w, &path, &[&roi.name, roi.kind.tag(), &level, ""])?;
        }
        for v in &roi.voxels {
            write_row(&mut w, &path, &[&roi.name, roi.kind.tag(), &level, &v.to_string()])?;
        }
    }
    flush(w, &path)?;

    let path = dir.join(INFLUENCE);
    let mut w = csv_writer(&path)?;
    write_row(&mut w, &path, &["voxel_id", "beamlet_id", "value"])?;
    for (v, b, a) in case.influence.triplets() {
        write_row(&mut w, &path, &[&v.to_string(), &b.to_string(), &a.to_string()])?;
    }
    flush(w, &path)?;

    write_dose_csv(dir.join(PREDICTED), &case.predicted_dose)?;
    if let Some(reference) = &case.reference_dose {
        write_dose_csv(dir.join(REFERENCE), reference)?;
    }
    if let Some(mask) = &case.feasible_mask {
        let path = dir.join(MASK);
        let mut w = csv_writer(&path)?;
        write_row(&mut w, &path, &["voxel_id"])?;
        for v in mask {
            write_row(&mut w, &path, &[&v.to_string()])?;
        }
        flush(w, &path)?;
    }
    Ok(())
}

/// Sparse dose file: one `voxel_id,dose_gy` row per non-zero voxel.
pub fn write_dose_csv(path: impl AsRef<Path>, dose: &[f64]) -> Result<(), LoadError> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, &["voxel_id", "dose_gy"])?;
    for (v, d) in dose.iter().enumerate() {
        if *d != 0.0 {
            write_row(&mut w, path, &[&v.to_string(), &d.to_string()])?;
        }
    }
    flush(w, path)
}

pub fn read_dose_csv(path: impl AsRef<Path>, n_voxels: usize) -> Result<DoseVector, LoadError> {
    let path = path.as_ref();
    let mut dose = vec![0.0; n_voxels];
    let mut seen = vec![false; n_voxels];
    for_each_record(path, &["voxel_id", "dose_gy"], |line, rec| {
        let v = parse_index(path, line, rec, 0, n_voxels)?;
        let d = parse_value(path, line, rec, 1)?;
        if seen[v] {
            return Err(malformed(path, line, format!("voxel {v} listed twice")));
        }
        seen[v] = true;
        dose[v] = d;
        Ok(())
    })?;
    Ok(DoseVector(dose))
}

/// Names of the extra prediction sets in `dir/predictions`, sorted.
pub fn list_predictions(dir: impl AsRef<Path>) -> Vec<String> {
    let pred_dir = dir.as_ref().join(PREDICTIONS_DIR);
    let mut names: Vec<String> = fs::read_dir(pred_dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| {
            let p = e.path();
            (p.extension()? == "csv").then(|| p.file_stem()?.to_str().map(str::to_owned))?
        })
        .collect();
    names.sort();
    names
}

/// Resolves a prediction selector against a bundle.
///
/// `predicted` (or an empty selector) is `predicted_dose.csv`; an integer picks from
/// the sorted `predictions/` listing; another name is `predictions/<name>.csv`;
/// anything else is treated as a dose file path.
pub fn load_prediction(
    dir: impl AsRef<Path>,
    selector: &str,
    n_voxels: usize,
) -> Result<DoseVector, LoadError> {
    let dir = dir.as_ref();
    let selector = selector.trim();
    if selector.is_empty() || selector == "predicted" {
        return read_dose_csv(require(dir, PREDICTED)?, n_voxels);
    }
    let names = list_predictions(dir);
    if let Ok(i) = selector.parse::<usize>() {
        if let Some(name) = names.get(i) {
            return read_dose_csv(dir.join(PREDICTIONS_DIR).join(format!("{name}.csv")), n_voxels);
        }
    }
    if names.iter().any(|n| n == selector) {
        return read_dose_csv(
            dir.join(PREDICTIONS_DIR).join(format!("{selector}.csv")),
            n_voxels,
        );
    }
    let path = PathBuf::from(selector);
    if path.is_file() {
        return read_dose_csv(path, n_voxels);
    }
    Err(LoadError::MissingFile(format!(
        "prediction `{selector}` (not a set in {} or a file)",
        display(&dir.join(PREDICTIONS_DIR))
    )))
}

pub fn write_prediction(dir: impl AsRef<Path>, name: &str, dose: &[f64]) -> Result<(), LoadError> {
    let pred_dir = dir.as_ref().join(PREDICTIONS_DIR);
    fs::create_dir_all(&pred_dir).map_err(|e| io_err(&pred_dir, e))?;
    write_dose_csv(pred_dir.join(format!("{name}.csv")), dose)
}

fn read_meta(dir: &Path) -> Result<BundleMeta, LoadError> {
    let path = require(dir, META)?;
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| LoadError::Json {
        file: display(&path),
        message: e.to_string(),
    })
}

fn read_structures(path: &Path, n_voxels: usize) -> Result<StructureSet, LoadError> {
    let mut rois: BTreeMap<String, Roi> = BTreeMap::new();
    for_each_record(path, &["roi_name", "roi_kind", "level_gy", "voxel_id"], |line, rec| {
        let name = field(path, line, rec, 0)?;
        if name.is_empty() {
            return Err(malformed(path, line, "empty roi_name".into()));
        }
        let kind = match field(path, line, rec, 1)? {
            "ptv" => {
                let level = parse_value(path, line, rec, 2)?;
                if level <= 0.0 {
                    return Err(malformed(path, line, "ptv level_gy must be positive".into()));
                }
                RoiKind::Ptv { level_gy: level }
            }
            "oar" => RoiKind::Oar,
            "oar_max" => RoiKind::OarMax,
            "oar_mean" => RoiKind::OarMean,
            other => return Err(malformed(path, line, format!("unknown roi_kind `{other}`"))),
        };
        let roi = rois.entry(name.to_owned()).or_insert_with(|| Roi {
            name: name.to_owned(),
            kind,
            voxels: Vec::new(),
        });
        if roi.kind != kind {
            return Err(malformed(
                path,
                line,
                format!("roi `{name}` declared as both {} and {kind}", roi.kind),
            ));
        }
        if !field(path, line, rec, 3)?.is_empty() {
            roi.voxels.push(parse_index(path, line, rec, 3, n_voxels)?);
        }
        Ok(())
    })?;
    let mut set = StructureSet {
        rois: rois.into_values().collect(),
    };
    set.canonicalize();
    Ok(set)
}

fn read_influence(
    path: &Path,
    n_voxels: usize,
    n_beamlets: Option<usize>,
) -> Result<DoseInfluenceMatrix<f64>, LoadError> {
    let mut triplets = Vec::new();
    let beam_limit = n_beamlets.unwrap_or(u32::MAX as usize);
    for_each_record(path, &["voxel_id", "beamlet_id", "value"], |line, rec| {
        let v = parse_index(path, line, rec, 0, n_voxels)?;
        let b = parse_index(path, line, rec, 1, beam_limit)?;
        let a = parse_value(path, line, rec, 2)?;
        triplets.push((v, b, a));
        Ok(())
    })?;
    let n_beamlets =
        n_beamlets.unwrap_or_else(|| triplets.iter().map(|t| t.1 + 1).max().unwrap_or(0));
    Ok(DoseInfluenceMatrix::from_triplets(n_voxels, n_beamlets, triplets)?)
}

fn read_mask(path: &Path, n_voxels: usize) -> Result<Vec<usize>, LoadError> {
    let mut mask = Vec::new();
    for_each_record(path, &["voxel_id"], |line, rec| {
        mask.push(parse_index(path, line, rec, 0, n_voxels)?);
        Ok(())
    })?;
    mask.sort_unstable();
    mask.dedup();
    Ok(mask)
}

fn for_each_record(
    path: &Path,
    header: &[&str],
    mut f: impl FnMut(u64, &StringRecord) -> Result<(), LoadError>,
) -> Result<(), LoadError> {
    let mut reader = ReaderBuilder::new()
        .trim(Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let found = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let found: Vec<&str> = found.iter().collect();
    if found != header {
        return Err(malformed(
            path,
            1,
            format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
        ));
    }
    let mut rec = StringRecord::new();
    loop {
        match reader.read_record(&mut rec) {
            Ok(true) => {
                let line = rec.position().map_or(0, |p| p.line());
                if rec.len() == 1 && rec[0].is_empty() {
                    continue;
                }
                if rec.len() != header.len() {
                    return Err(malformed(
                        path,
                        line,
                        format!("expected {} fields, found {}", header.len(), rec.len()),
                    ));
                }
                f(line, &rec)?;
            }
            Ok(false) => return Ok(()),
            Err(e) => return Err(csv_err(path, e)),
        }
    }
}

fn field<'r>(path: &Path, line: u64, rec: &'r StringRecord, i: usize) -> Result<&'r str, LoadError> {
    rec.get(i)
        .ok_or_else(|| malformed(path, line, format!("missing field {}", i + 1)))
}

fn parse_index(
    path: &Path,
    line: u64,
    rec: &StringRecord,
    i: usize,
    limit: usize,
) -> Result<usize, LoadError> {
    let raw = field(path, line, rec, i)?;
    let index: usize = raw
        .parse()
        .map_err(|_| malformed(path, line, format!("`{raw}` is not a voxel/beamlet index")))?;
    if index >= limit {
        return Err(LoadError::IndexOutOfRange {
            file: display(path),
            line,
            index,
            limit,
        });
    }
    Ok(index)
}

fn parse_value(path: &Path, line: u64, rec: &StringRecord, i: usize) -> Result<f64, LoadError> {
    let raw = field(path, line, rec, i)?;
    let value: f64 = raw
        .parse()
        .map_err(|_| malformed(path, line, format!("`{raw}` is not a number")))?;
    if !value.is_finite() {
        return Err(malformed(path, line, format!("non-finite value `{raw}`")));
    }
    if value < 0.0 {
        return Err(LoadError::NegativeValue {
            file: display(path),
            line,
            value,
        });
    }
    Ok(value)
}

fn require(dir: &Path, name: &str) -> Result<PathBuf, LoadError> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(LoadError::MissingFile(display(&path)))
    }
}

fn optional(dir: &Path, name: &str) -> Option<PathBuf> {
    let path = dir.join(name);
    path.is_file().then_some(path)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, LoadError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    Ok(WriterBuilder::new().from_writer(BufWriter::new(file)))
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, path: &Path, row: &[&str]) -> Result<(), LoadError> {
    w.write_record(row).map_err(|e| csv_err(path, e))
}

fn flush<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<(), LoadError> {
    w.flush().map_err(|e| io_err(path, e))
}

fn malformed(path: &Path, line: u64, message: String) -> LoadError {
    LoadError::MalformedRecord {
        file: display(path),
        line,
        message,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> LoadError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        kind => malformed(path, line, format!("{kind:?}")),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> LoadError {
    LoadError::Io {
        file: display(path),
        source,
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn minimal(dir: &Path) {
        write(dir, META, r#"{"id":"p1","dims":[1,1,1],"voxel_size_mm":[1,1,1]}"#);
        write(dir, STRUCTURES, "roi_name,roi_kind,level_gy,voxel_id\nptv70,ptv,70,0\n");
        write(dir, INFLUENCE, "voxel_id,beamlet_id,value\n0,0,1.0\n");
        write(dir, PREDICTED, "voxel_id,dose_gy\n0,70\n");
    }

    #[test]
    fn loads_smallest_bundle() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        let case = load_patient(tmp.path()).unwrap();
        assert_eq!(case.n_voxels(), 1);
        assert_eq!(case.n_beamlets(), 1);
        assert_eq!(case.predicted_dose.0, vec![70.0]);
        assert!(case.reference_dose.is_none());
    }

    #[test]
    fn reports_out_of_range_voxel() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        write(tmp.path(), META, r#"{"id":"p","dims":[10,10,1],"voxel_size_mm":[1,1,1]}"#);
        write(tmp.path(), INFLUENCE, "voxel_id,beamlet_id,value\n0,0,1\n999,0,1.0\n");
        match load_patient(tmp.path()) {
            Err(LoadError::IndexOutOfRange { index: 999, limit: 100, line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_missing_and_malformed_files() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        fs::remove_file(tmp.path().join(INFLUENCE)).unwrap();
        let err = load_patient(tmp.path()).unwrap_err();
        assert!(matches!(&err, LoadError::MissingFile(f) if f.ends_with(INFLUENCE)));

        minimal(tmp.path());
        write(tmp.path(), PREDICTED, "voxel_id,dose_gy\n0,abc\n");
        match load_patient(tmp.path()) {
            Err(LoadError::MalformedRecord { file, line: 2, .. }) => assert!(file.ends_with(PREDICTED)),
            other => panic!("unexpected {other:?}"),
        }

        minimal(tmp.path());
        write(tmp.path(), INFLUENCE, "0,0,1.0\n");
        assert!(matches!(load_patient(tmp.path()), Err(LoadError::MalformedRecord { line: 1, .. })));

        minimal(tmp.path());
        write(tmp.path(), PREDICTED, "voxel_id,dose_gy\n0,-3\n");
        assert!(matches!(load_patient(tmp.path()), Err(LoadError::NegativeValue { .. })));
    }

    #[test]
    fn rejects_invalid_structure_kinds() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        write(
            tmp.path(),
            STRUCTURES,
            "roi_name,roi_kind,level_gy,voxel_id\nptv70,ptv,70,0\nlarynx,oar_max,,0\n",
        );
        assert!(matches!(load_patient(tmp.path()), Err(LoadError::Invalid(_))));
    }

    #[test]
    fn prediction_selectors() {
        let tmp = tempfile::tempdir().unwrap();
        minimal(tmp.path());
        write_prediction(tmp.path(), "set_b", &[2.0]).unwrap();
        write_prediction(tmp.path(), "set_a", &[1.0]).unwrap();
        assert_eq!(list_predictions(tmp.path()), vec!["set_a", "set_b"]);
        assert_eq!(load_prediction(tmp.path(), "predicted", 1).unwrap().0, vec![70.0]);
        assert_eq!(load_prediction(tmp.path(), "1", 1).unwrap().0, vec![2.0]);
        assert_eq!(load_prediction(tmp.path(), "set_a", 1).unwrap().0, vec![1.0]);
        assert!(load_prediction(tmp.path(), "nope", 1).is_err());
    }
}
