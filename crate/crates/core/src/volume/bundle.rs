use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_json;

use super::grid::{ActivationMap, Grid, Volume};
use super::header::{DType, Orientation};
use super::io::{load_grid, save_grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Covid,
    Other,
}

impl ClassLabel {
    pub fn is_covid(self) -> bool {
        self == ClassLabel::Covid
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Covid => "covid",
            ClassLabel::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<ClassLabel> {
        match s {
            "covid" => Some(ClassLabel::Covid),
            "other" => Some(ClassLabel::Other),
            _ => None,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelRole {
    /// 0 background, 1 left lung, 2 right lung.
    Lungs,
    /// 0 background, 1..=5 lobe id.
    Lobes,
    Abnormality,
    /// 0 background, 1 GGO, 2 consolidation.
    Texture,
    Bronchial,
}

impl LabelRole {
    pub fn max_label(self) -> u8 {
        match self {
            LabelRole::Lungs | LabelRole::Texture => 2,
            LabelRole::Lobes => 5,
            LabelRole::Abnormality | LabelRole::Bronchial => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelRole::Lungs => "lungs",
            LabelRole::Lobes => "lobes",
            LabelRole::Abnormality => "abnormality",
            LabelRole::Texture => "texture",
            LabelRole::Bronchial => "bronchial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub role: LabelRole,
    pub grid: Grid<u8>,
}

impl LabelMap {
    pub fn new(role: LabelRole, grid: Grid<u8>) -> Self {
        LabelMap { role, grid }
    }

    pub fn voxels(&self) -> &[u8] {
        self.grid.voxels()
    }
}

/// One patient: CT volume, the upstream segmentation outputs and an optional label.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseBundle {
    pub case_id: String,
    pub volume: Volume,
    pub lungs: LabelMap,
    pub lobes: LabelMap,
    pub abnormality: LabelMap,
    pub texture: LabelMap,
    pub activation: ActivationMap,
    pub bronchial: Option<LabelMap>,
    pub label: Option<ClassLabel>,
}

impl CaseBundle {
    /// Bring every member grid into `target` orientation.
    pub fn reoriented(&self, target: Orientation) -> CaseBundle {
        let map = |m: &LabelMap| LabelMap::new(m.role, m.grid.reorient(target));
        CaseBundle {
            case_id: self.case_id.clone(),
            volume: self.volume.reorient(target),
            lungs: map(&self.lungs),
            lobes: map(&self.lobes),
            abnormality: map(&self.abnormality),
            texture: map(&self.texture),
            activation: self.activation.reorient(target),
            bronchial: self.bronchial.as_ref().map(map),
            label: self.label,
        }
    }

    fn label_maps(&self) -> impl Iterator<Item = &LabelMap> {
        [&self.lungs, &self.lobes, &self.abnormality, &self.texture]
            .into_iter()
            .chain(self.bronchial.as_ref())
    }
}

/// On-disk description of a case: file stems per role, relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseManifest {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ClassLabel>,
    pub volume: String,
    pub lungs: String,
    pub lobes: String,
    pub abnormality: String,
    pub texture: String,
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bronchial: Option<String>,
}

impl CaseManifest {
    /// Prefix every stem with `dir`.
    pub fn relocated(&self, dir: &str) -> CaseManifest {
        let join = |s: &String| format!("{dir}/{s}");
        CaseManifest {
            case_id: self.case_id.clone(),
            label: self.label,
            volume: join(&self.volume),
            lungs: join(&self.lungs),
            lobes: join(&self.lobes),
            abnormality: join(&self.abnormality),
            texture: join(&self.texture),
            activation: join(&self.activation),
            bronchial: self.bronchial.as_ref().map(join),
        }
    }
}

/// A list of case manifests sharing one base directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub cases: Vec<CaseManifest>,
}

/// Read either a single-case or a corpus manifest; returns the cases and their base directory.
pub fn read_manifest(path: &Path) -> Result<(Vec<CaseManifest>, PathBuf)> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let cases = if value.get("cases").is_some() {
        serde_json::from_value::<CorpusManifest>(value)?.cases
    } else {
        vec![serde_json::from_value::<CaseManifest>(value)?]
    };
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cases, base))
}

/// Load every map of a case and reorient it to RAI.
pub fn load_case(manifest: &CaseManifest, base: &Path) -> Result<CaseBundle> {
    let p = |stem: &str| base.join(stem);
    let label_map = |role: LabelRole, stem: &str| -> Result<LabelMap> {
        Ok(LabelMap::new(role, load_grid::<u8>(&p(stem))?))
    };
    let bundle = CaseBundle {
        case_id: manifest.case_id.clone(),
        volume: load_grid::<i16>(&p(&manifest.volume))?,
        lungs: label_map(LabelRole::Lungs, &manifest.lungs)?,
        lobes: label_map(LabelRole::Lobes, &manifest.lobes)?,
        abnormality: label_map(LabelRole::Abnormality, &manifest.abnormality)?,
        texture: label_map(LabelRole::Texture, &manifest.texture)?,
        activation: load_grid::<f32>(&p(&manifest.activation))?,
        bronchial: manifest
            .bronchial
            .as_deref()
            .map(|s| label_map(LabelRole::Bronchial, s))
            .transpose()?,
        label: manifest.label,
    };
    Ok(bundle.reoriented(Orientation::RAI))
}

/// Write a case into `dir` using role names as file stems.
pub fn save_case(bundle: &CaseBundle, dir: &Path) -> Result<CaseManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_grid(&bundle.volume, &dir.join("volume"))?;
    for m in bundle.label_maps() {
        save_grid(&m.grid, &dir.join(m.role.name()))?;
    }
    save_grid(&bundle.activation, &dir.join("activation"))?;
    let manifest = CaseManifest {
        case_id: bundle.case_id.clone(),
        label: bundle.label,
        volume: "volume".into(),
        lungs: "lungs".into(),
        lobes: "lobes".into(),
        abnormality: "abnormality".into(),
        texture: "texture".into(),
        activation: "activation".into(),
        bronchial: bundle.bronchial.as_ref().map(|_| "bronchial".into()),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Violation {
    GeometryMismatch { member: String },
    WrongDType { member: String, found: DType },
    IllegalLabel { role: LabelRole, value: u8, count: usize },
    TextureOutsideAbnormality { count: usize },
    InvalidActivation { count: usize },
    EmptyLungs,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub case_id: String,
    pub violations: Vec<Violation>,
    /// Abnormal voxels lying outside the lungs; ignored by extraction, not a violation.
    pub abnormal_outside_lungs: usize,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case {}: ", self.case_id)?;
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| format!("{v:?}")).collect();
        f.write_str(&parts.join("; "))
    }
}

pub fn validate_case(bundle: &CaseBundle) -> ValidationReport {
    let mut violations = Vec::new();
    let reference = bundle.volume.header();
    if reference.dtype != DType::Int16 {
        violations.push(Violation::WrongDType {
            member: "volume".into(),
            found: reference.dtype,
        });
    }
    let mut geometry_ok = true;
    for m in bundle.label_maps() {
        if !m.grid.header().same_geometry(reference) {
            geometry_ok = false;
            violations.push(Violation::GeometryMismatch {
                member: m.role.name().into(),
            });
        }
        if m.grid.header().dtype != DType::Uint8 {
            violations.push(Violation::WrongDType {
                member: m.role.name().into(),
                found: m.grid.header().dtype,
            });
        }
        let mut hist = [0usize; 256];
        for &v in m.voxels() {
            hist[v as usize] += 1;
        }
        for (value, &count) in hist.iter().enumerate().skip(m.role.max_label() as usize + 1) {
            if count > 0 {
                violations.push(Violation::IllegalLabel {
                    role: m.role,
                    value: value as u8,
                    count,
                });
            }
        }
    }
    if !bundle.activation.header().same_geometry(reference) {
        geometry_ok = false;
        violations.push(Violation::GeometryMismatch {
            member: "activation".into(),
        });
    }
    let bad_activation = bundle
        .activation
        .voxels()
        .iter()
        .filter(|a| !(a.is_finite() && **a >= 0.0))
        .count();
    if bad_activation > 0 {
        violations.push(Violation::InvalidActivation { count: bad_activation });
    }

    let mut abnormal_outside_lungs = 0;
    if geometry_ok {
        let outside = bundle
            .texture
            .voxels()
            .iter()
            .zip(bundle.abnormality.voxels())
            .filter(|(&t, &a)| t != 0 && a == 0)
            .count();
        if outside > 0 {
            violations.push(Violation::TextureOutsideAbnormality { count: outside });
        }
        abnormal_outside_lungs = bundle
            .abnormality
            .voxels()
            .iter()
            .zip(bundle.lungs.voxels())
            .filter(|(&a, &l)| a != 0 && l == 0)
            .count();
    }
    if bundle.lungs.voxels().iter().all(|&v| v == 0) {
        violations.push(Violation::EmptyLungs);
    }
    ValidationReport {
        case_id: bundle.case_id.clone(),
        violations,
        abnormal_outside_lungs,
    }
}
