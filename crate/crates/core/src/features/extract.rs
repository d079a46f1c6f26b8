use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{
    connected_components, max_axial_diameter, peripheral_shell, roundedness, BinaryMask, Connectivity,
};
use crate::volume::{validate_case, CaseBundle, DType};

use super::schema::{FeatureGroup, FeatureSchema, HuWindow, Structure, TextureClass};
use super::FeatureVector;

/// Focal GGO components must stay below this maximum axial diameter.
pub const FOCAL_MAX_DIAMETER_MM: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub shell_depth_mm: f64,
    pub bronchial_margin_mm: f64,
    pub roundedness_min: f64,
    pub laterality_min_cm3: f64,
    pub connectivity: Connectivity,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            shell_depth_mm: 15.0,
            bronchial_margin_mm: 10.0,
            roundedness_min: 0.5,
            laterality_min_cm3: 1.0,
            connectivity: Connectivity::Full26,
        }
    }
}

fn percent(count: u64, of: u64) -> f64 {
    if of == 0 {
        0.0
    } else {
        100.0 * count as f64 / of as f64
    }
}

/// Slots of `Structure::ALL` a lung voxel belongs to.
#[inline]
fn structure_slots(side: u8, lobe: u8) -> impl Iterator<Item = usize> {
    let side_slot = match side {
        1 => Some(Structure::LeftLung.slot()),
        2 => Some(Structure::RightLung.slot()),
        _ => None,
    };
    let lobe_slot = (1..=5).contains(&lobe).then(|| Structure::Lobe(lobe).slot());
    std::iter::once(Structure::BothLungs.slot())
        .chain(side_slot)
        .chain(lobe_slot)
}

fn structure_counts(bundle: &CaseBundle) -> [u64; 8] {
    let mut counts = [0u64; 8];
    for (&side, &lobe) in bundle.lungs.voxels().iter().zip(bundle.lobes.voxels()) {
        if side != 0 {
            for s in structure_slots(side, lobe) {
                counts[s] += 1;
            }
        }
    }
    counts
}

/// Volumes of the eight structures, then per structure and HU window the
/// windowed volume (cm³) and its share of the structure (%). 56 values.
pub fn lung_statistics(bundle: &CaseBundle) -> Vec<f64> {
    let vox = bundle.volume.header().voxel_volume_cm3();
    let counts = structure_counts(bundle);
    let mut windowed = [[0u64; 3]; 8];
    let lungs = bundle.lungs.voxels();
    let lobes = bundle.lobes.voxels();
    for (i, &hu) in bundle.volume.voxels().iter().enumerate() {
        if lungs[i] == 0 {
            continue;
        }
        if let Some(w) = HuWindow::of(hu) {
            for s in structure_slots(lungs[i], lobes[i]) {
                windowed[s][w.slot()] += 1;
            }
        }
    }
    for (s, &c) in counts.iter().enumerate().skip(3) {
        if c == 0 {
            log::warn!(
                "case {}: {} is empty, its features are set to 0",
                bundle.case_id,
                Structure::ALL[s].name()
            );
        }
    }
    let mut out: Vec<f64> = counts.iter().map(|&c| c as f64 * vox).collect();
    for s in 0..8 {
        for w in 0..3 {
            out.push(windowed[s][w] as f64 * vox);
            out.push(percent(windowed[s][w], counts[s]));
        }
    }
    out
}

fn abnormal_in_lungs(bundle: &CaseBundle) -> BinaryMask {
    let mut mask = bundle.abnormality.grid.map(|&a| a != 0, DType::Uint8);
    for (m, &l) in mask.voxels_mut().iter_mut().zip(bundle.lungs.voxels()) {
        *m &= l != 0;
    }
    mask
}

/// Abnormal volume and share per structure, `pos_ratio`, and the two
/// activation-map features. 19 values.
pub fn opacity_statistics(bundle: &CaseBundle, cfg: &ExtractConfig) -> Vec<f64> {
    let header = bundle.volume.header();
    let vox = header.voxel_volume_cm3();
    let counts = structure_counts(bundle);
    let abnormal = abnormal_in_lungs(bundle);
    let lungs = bundle.lungs.voxels();
    let lobes = bundle.lobes.voxels();

    let nz = header.dims[2];
    let per_slice = header.dims[0] * header.dims[1];
    let mut lung_slices = vec![false; nz];
    let mut abnormal_slices = vec![false; nz];
    let mut abn = [0u64; 8];
    for i in 0..lungs.len() {
        if lungs[i] == 0 {
            continue;
        }
        lung_slices[i / per_slice] = true;
        if abnormal.voxels()[i] {
            abnormal_slices[i / per_slice] = true;
            for s in structure_slots(lungs[i], lobes[i]) {
                abn[s] += 1;
            }
        }
    }
    let mut out = Vec::with_capacity(19);
    for s in 0..8 {
        out.push(abn[s] as f64 * vox);
        out.push(percent(abn[s], counts[s]));
    }
    let lung_n = lung_slices.iter().filter(|&&b| b).count();
    let abn_n = abnormal_slices.iter().filter(|&&b| b).count();
    out.push(if lung_n == 0 { 0.0 } else { abn_n as f64 / lung_n as f64 });

    let activation = bundle.activation.voxels();
    out.push(activation.iter().map(|&a| f64::from(a)).sum());

    let components = connected_components(&abnormal, cfg.connectivity);
    let weighted: f64 = components
        .members()
        .iter()
        .map(|c| {
            let volume = c.len() as f64 * vox;
            let mean = c.iter().map(|&i| f64::from(activation[i])).sum::<f64>() / c.len() as f64;
            volume * mean
        })
        .sum();
    out.push(weighted);
    out
}

/// Per texture class and structure volume and share (32 values), then the
/// GGO and consolidation fractions of the total abnormal volume. 34 values.
pub fn texture_features(bundle: &CaseBundle) -> Vec<f64> {
    let vox = bundle.volume.header().voxel_volume_cm3();
    let counts = structure_counts(bundle);
    let lungs = bundle.lungs.voxels();
    let lobes = bundle.lobes.voxels();
    let abnormality = bundle.abnormality.voxels();
    let texture = bundle.texture.voxels();
    let mut per_class = [[0u64; 8]; 2];
    let mut abnormal_total = 0u64;
    for i in 0..lungs.len() {
        if lungs[i] == 0 {
            continue;
        }
        abnormal_total += (abnormality[i] != 0) as u64;
        let class = match texture[i] {
            1 => 0,
            2 => 1,
            _ => continue,
        };
        for s in structure_slots(lungs[i], lobes[i]) {
            per_class[class][s] += 1;
        }
    }
    let mut out = Vec::with_capacity(34);
    for class in &per_class {
        for s in 0..8 {
            out.push(class[s] as f64 * vox);
            out.push(percent(class[s], counts[s]));
        }
    }
    for class in &per_class {
        let total = class[Structure::BothLungs.slot()];
        out.push(if abnormal_total == 0 {
            0.0
        } else {
            total as f64 / abnormal_total as f64
        });
    }
    out
}

/// Focal GGO flag, laterality one-hot (left, right, bilateral) and the
/// peripheral share of the abnormal volume (%). 5 values.
pub fn shape_location_features(bundle: &CaseBundle, cfg: &ExtractConfig) -> Result<Vec<f64>> {
    let header = bundle.volume.header();
    let vox = header.voxel_volume_cm3();
    let lungs = bundle.lungs.voxels();

    let ggo = bundle.texture.grid.map(|&t| t == TextureClass::Ggo.label(), DType::Uint8);
    let ggo = {
        let mut g = ggo;
        for (b, &l) in g.voxels_mut().iter_mut().zip(lungs) {
            *b &= l != 0;
        }
        g
    };
    let mut focal = false;
    for component in connected_components(&ggo, cfg.connectivity).members() {
        if max_axial_diameter(&component, header)? < FOCAL_MAX_DIAMETER_MM
            && roundedness(&component, header)? >= cfg.roundedness_min
        {
            focal = true;
            break;
        }
    }

    let abnormal = abnormal_in_lungs(bundle);
    let (mut left, mut right) = (0u64, 0u64);
    for (&a, &side) in abnormal.voxels().iter().zip(lungs) {
        if a {
            match side {
                1 => left += 1,
                2 => right += 1,
                _ => {}
            }
        }
    }
    let left_pos = left as f64 * vox > cfg.laterality_min_cm3;
    let right_pos = right as f64 * vox > cfg.laterality_min_cm3;

    let lung_mask = bundle.lungs.grid.map(|&l| l != 0, DType::Uint8);
    let bronchial = bundle
        .bronchial
        .as_ref()
        .map(|b| b.grid.map(|&v| v != 0, DType::Uint8));
    let shell = peripheral_shell(
        &lung_mask,
        cfg.shell_depth_mm,
        bronchial.as_ref(),
        cfg.bronchial_margin_mm,
    )?;
    let (mut abn, mut peripheral) = (0u64, 0u64);
    for (&a, &s) in abnormal.voxels().iter().zip(shell.voxels()) {
        if a {
            abn += 1;
            peripheral += s as u64;
        }
    }

    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(vec![
        flag(focal),
        flag(left_pos && !right_pos),
        flag(right_pos && !left_pos),
        flag(left_pos && right_pos),
        percent(peripheral, abn),
    ])
}

/// Validate the bundle and compute the full canonical feature vector.
pub fn extract_features(bundle: &CaseBundle, cfg: &ExtractConfig) -> Result<FeatureVector> {
    let report = validate_case(bundle);
    if !report.is_ok() {
        return Err(Error::ExtractionRejected(report));
    }
    let schema = FeatureSchema::canonical();
    let mut values = lung_statistics(bundle);
    values.extend(opacity_statistics(bundle, cfg));
    values.extend(texture_features(bundle));
    values.extend(shape_location_features(bundle, cfg)?);
    debug_assert_eq!(values.len(), schema.len());
    debug_assert_eq!(
        schema.group_indices(FeatureGroup::ShapeLocation).first(),
        Some(&(schema.len() - 5))
    );
    FeatureVector::new(schema, bundle.case_id.clone(), bundle.label, values)
}
