//! Conversion from an OpenKBP-style patient folder to the canonical bundle layout.
//!
//! OpenKBP stores each quantity as a sparse CSV of flat voxel indices into a
//! 128³ grid (`,data` header, rows `index,value`; masks leave the value empty),
//! plus `voxel_dimensions.csv` with the three voxel sizes in mm.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    write_bundle, write_prediction, DoseVector, LoadError, PatientCase, Roi, RoiKind,
    StructureSet, VoxelGrid,
};
use crate::sparse::DoseInfluenceMatrix;

pub const OPENKBP_DIMS: [usize; 3] = [128, 128, 128];
pub const MANIFEST: &str = "manifest.json";

/// Dataset ROI file stems and their roles.
pub const OPENKBP_ROIS: [(&str, RoiKind); 10] = [
    ("Brainstem", RoiKind::OarMax),
    ("SpinalCord", RoiKind::OarMax),
    ("Mandible", RoiKind::OarMax),
    ("RightParotid", RoiKind::OarMean),
    ("LeftParotid", RoiKind::OarMean),
    ("Esophagus", RoiKind::OarMean),
    ("Larynx", RoiKind::OarMean),
    ("PTV56", RoiKind::Ptv { level_gy: 56.0 }),
    ("PTV63", RoiKind::Ptv { level_gy: 63.0 }),
    ("PTV70", RoiKind::Ptv { level_gy: 70.0 }),
];

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub id: Option<String>,
    pub dims: [usize; 3],
    /// Triplet CSV (`voxel,beamlet,value` with a header). Defaults to
    /// `dij.csv` or `influence.csv` inside the patient folder.
    pub influence: Option<PathBuf>,
    /// Named OpenKBP-format dose predictions. The first becomes `predicted_dose.csv`.
    pub predictions: Vec<(String, PathBuf)>,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            id: None,
            dims: OPENKBP_DIMS,
            influence: None,
            predictions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionManifest {
    pub id: String,
    pub dims: [usize; 3],
    pub voxel_size_mm: [f64; 3],
    pub n_voxels: usize,
    pub n_beamlets: usize,
    pub nnz: usize,
    pub roi_voxel_counts: BTreeMap<String, usize>,
    pub predictions: Vec<String>,
    /// `prediction` when a prediction was supplied, otherwise `reference`.
    pub predicted_dose_source: String,
}

/// Converts `src` into a canonical bundle at `out` and writes `manifest.json` there.
pub fn convert_openkbp(
    src: &Path,
    out: &Path,
    opts: &ConvertOptions,
) -> Result<ConversionManifest, LoadError> {
    let id = opts.id.clone().unwrap_or_else(|| {
        src.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "patient".into())
    });
    let voxel_size_mm = read_voxel_dimensions(&src.join("voxel_dimensions.csv"))?;
    let grid = VoxelGrid::new(opts.dims, voxel_size_mm).ok_or_else(|| LoadError::MalformedRecord {
        file: src.join("voxel_dimensions.csv").display().to_string(),
        line: 1,
        message: "grid dims and voxel sizes must be positive".into(),
    })?;
    let n = grid.n_voxels();

    let mut rois = Vec::new();
    for (stem, kind) in OPENKBP_ROIS {
        let path = src.join(format!("{stem}.csv"));
        if !path.is_file() {
            continue;
        }
        let mut voxels: Vec<usize> = read_sparse(&path, n)?.into_iter().map(|(v, _)| v).collect();
        voxels.sort_unstable();
        voxels.dedup();
        rois.push(Roi {
            name: super::canonical_roi_name(stem),
            kind,
            voxels,
        });
    }
    let mut structures = StructureSet { rois };
    structures.canonicalize();

    let dose_path = src.join("dose.csv");
    let reference_dose = dose_path
        .is_file()
        .then(|| read_sparse_dose(&dose_path, n))
        .transpose()?;
    let mask_path = src.join("possible_dose_mask.csv");
    let feasible_mask = if mask_path.is_file() {
        let mut m: Vec<usize> = read_sparse(&mask_path, n)?.into_iter().map(|(v, _)| v).collect();
        m.sort_unstable();
        m.dedup();
        Some(m)
    } else {
        None
    };

    let influence_path = opts
        .influence
        .clone()
        .or_else(|| {
            ["dij.csv", "influence.csv"]
                .iter()
                .map(|f| src.join(f))
                .find(|p| p.is_file())
        })
        .ok_or_else(|| LoadError::MissingFile(src.join("dij.csv").display().to_string()))?;
    let influence = read_triplets(&influence_path, n)?;

    let mut predictions = Vec::new();
    for (name, path) in &opts.predictions {
        predictions.push((name.clone(), read_sparse_dose(path, n)?));
    }
    let (predicted_dose, source) = match (predictions.first(), &reference_dose) {
        (Some((_, p)), _) => (p.clone(), "prediction"),
        (None, Some(r)) => {
            log::warn!("{id}: no prediction supplied, using the reference dose as prediction");
            (r.clone(), "reference")
        }
        (None, None) => return Err(LoadError::MissingFile(dose_path.display().to_string())),
    };

    let case = PatientCase {
        id: id.clone(),
        grid,
        structures,
        influence,
        predicted_dose,
        reference_dose,
        feasible_mask,
        voxel_weights: vec![1.0; n],
    };
    write_bundle(&case, out)?;
    for (name, dose) in &predictions {
        write_prediction(out, name, dose)?;
    }

    let manifest = ConversionManifest {
        id,
        dims: grid.dims,
        voxel_size_mm,
        n_voxels: n,
        n_beamlets: case.n_beamlets(),
        nnz: case.influence.nnz(),
        roi_voxel_counts: case
            .structures
            .rois
            .iter()
            .map(|r| (r.name.clone(), r.voxels.len()))
            .collect(),
        predictions: predictions.into_iter().map(|(n, _)| n).collect(),
        predicted_dose_source: source.into(),
    };
    let path = out.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|source| LoadError::Io {
        file: path.display().to_string(),
        source,
    })?;
    Ok(manifest)
}

fn read_text(path: &Path) -> Result<String, LoadError> {
    if !path.is_file() {
        return Err(LoadError::MissingFile(path.display().to_string()));
    }
    fs::read_to_string(path).map_err(|source| LoadError::Io {
        file: path.display().to_string(),
        source,
    })
}

fn bad(path: &Path, line: usize, message: String) -> LoadError {
    LoadError::MalformedRecord {
        file: path.display().to_string(),
        line: line as u64,
        message,
    }
}

fn read_voxel_dimensions(path: &Path) -> Result<[f64; 3], LoadError> {
    let text = read_text(path)?;
    let values: Vec<f64> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| bad(path, 1, format!("`{t}` is not a number"))))
        .collect::<Result<_, _>>()?;
    match values.as_slice() {
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(bad(path, 1, format!("expected 3 voxel sizes, found {}", values.len()))),
    }
}

/// Rows of `index[,value]`; a non-numeric first line is taken as the header.
fn read_sparse(path: &Path, n: usize) -> Result<Vec<(usize, Option<f64>)>, LoadError> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let head = parts.next().unwrap_or_default();
        let index = match head.parse::<f64>() {
            Ok(x) if x >= 0.0 && x.fract() == 0.0 => x as usize,
            _ if i == 0 => continue,
            _ => return Err(bad(path, line_no, format!("`{head}` is not a voxel index"))),
        };
        if index >= n {
            return Err(LoadError::IndexOutOfRange {
                file: path.display().to_string(),
                line: line_no as u64,
                index,
                limit: n,
            });
        }
        let value = match parts.next() {
            None | Some("") => None,
            Some(raw) => Some(
                raw.parse::<f64>()
                    .map_err(|_| bad(path, line_no, format!("`{raw}` is not a number")))?,
            ),
        };
        rows.push((index, value));
    }
    Ok(rows)
}

fn read_sparse_dose(path: &Path, n: usize) -> Result<DoseVector, LoadError> {
    let mut dose = vec![0.0; n];
    for (v, value) in read_sparse(path, n)? {
        let d = value.unwrap_or(0.0);
        if !d.is_finite() {
            return Err(bad(path, 0, format!("non-finite dose at voxel {v}")));
        }
        if d < 0.0 {
            return Err(LoadError::NegativeValue {
                file: path.display().to_string(),
                line: 0,
                value: d,
            });
        }
        dose[v] = d;
    }
    Ok(DoseVector(dose))
}

fn read_triplets(path: &Path, n: usize) -> Result<DoseInfluenceMatrix<f64>, LoadError> {
    let text = read_text(path)?;
    let mut triplets = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(bad(path, line_no, "expected voxel,beamlet,value".into()));
        }
        let parse_idx = |raw: &str| {
            raw.parse::<usize>()
                .map_err(|_| bad(path, line_no, format!("`{raw}` is not an index")))
        };
        let v = parse_idx(fields[0])?;
        let b = parse_idx(fields[1])?;
        let a: f64 = fields[2]
            .parse()
            .map_err(|_| bad(path, line_no, format!("`{}` is not a number", fields[2])))?;
        if v >= n {
            return Err(LoadError::IndexOutOfRange {
                file: path.display().to_string(),
                line: line_no as u64,
                index: v,
                limit: n,
            });
        }
        if a < 0.0 {
            return Err(LoadError::NegativeValue {
                file: path.display().to_string(),
                line: line_no as u64,
                value: a,
            });
        }
        triplets.push((v, b, a));
    }
    let n_beamlets = triplets.iter().map(|t| t.1 + 1).max().unwrap_or(0);
    Ok(DoseInfluenceMatrix::from_triplets(n, n_beamlets, triplets)?)
}
