use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::ExtractConfig;
use crate::volume::{CaseBundle, DType, Grid, LabelMap, LabelRole, Orientation, VolumeHeader};

use super::spec::PhantomSpec;
use super::truth::GroundTruth;

/// Rasterize a spec into a bundle and compute its ground truth.
pub fn generate_case(spec: &PhantomSpec) -> Result<(CaseBundle, GroundTruth)> {
    let bundle = render(spec)?;
    let truth = GroundTruth::of(&bundle, &ExtractConfig::default())?;
    Ok((bundle, truth))
}

/// Rasterize a spec into a bundle (voxel centres at `index · spacing`).
pub fn render(spec: &PhantomSpec) -> Result<CaseBundle> {
    spec.check()?;
    let header = VolumeHeader::new(spec.dims, spec.spacing_mm, Orientation::RAI, DType::Int16)?;
    let n = header.voxel_count();
    let mut lungs = vec![0u8; n];
    let mut lobes = vec![0u8; n];
    let mut abnormal = vec![0u8; n];
    let mut texture = vec![0u8; n];
    let mut activation = vec![0f32; n];
    let mut base = vec![f64::from(spec.tissue_hu); n];

    let pos = |i: usize| -> [f64; 3] {
        let c = header.coords(i);
        std::array::from_fn(|a| c[a] as f64 * spec.spacing_mm[a])
    };
    for i in 0..n {
        let p = pos(i);
        if spec.left_lung.contains(p) {
            lungs[i] = 1;
            lobes[i] = if p[2] < spec.left_lobe_split_mm { 1 } else { 2 };
        } else if spec.right_lung.contains(p) {
            lungs[i] = 2;
            let [a, b] = spec.right_lobe_splits_mm;
            lobes[i] = if p[2] < a {
                3
            } else if p[2] < b {
                4
            } else {
                5
            };
        } else {
            continue;
        }
        base[i] = f64::from(spec.parenchyma_hu);
    }

    for (index, lesion) in spec.lesions.iter().enumerate() {
        let s = &lesion.shape;
        let range = |a: usize| {
            let lo = ((s.center_mm[a] - s.radii_mm[a]) / spec.spacing_mm[a]).floor().max(0.0) as usize;
            let hi = ((s.center_mm[a] + s.radii_mm[a]) / spec.spacing_mm[a]).ceil().max(0.0) as usize;
            lo..=hi.min(spec.dims[a] - 1)
        };
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    let i = header.index(x, y, z);
                    if !s.contains(pos(i)) {
                        continue;
                    }
                    if lungs[i] == 0 {
                        return Err(Error::LesionOutsideLungs { index });
                    }
                    abnormal[i] = 1;
                    texture[i] = lesion.texture.label();
                    activation[i] = lesion.activation;
                    base[i] = f64::from(lesion.hu);
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_hu).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let hu: Vec<i16> = base
        .iter()
        .map(|&b| (b + noise.sample(&mut rng)).round().clamp(-1024.0, 3071.0) as i16)
        .collect();

    let u8h = header.with_dtype(DType::Uint8);
    let map = |role, v: Vec<u8>| -> Result<LabelMap> { Ok(LabelMap::new(role, Grid::from_parts(u8h.clone(), v)?)) };
    Ok(CaseBundle {
        case_id: spec.case_id.clone(),
        volume: Grid::from_parts(header.clone(), hu)?,
        lungs: map(LabelRole::Lungs, lungs)?,
        lobes: map(LabelRole::Lobes, lobes)?,
        abnormality: map(LabelRole::Abnormality, abnormal)?,
        texture: map(LabelRole::Texture, texture)?,
        activation: Grid::from_parts(header.with_dtype(DType::Float32), activation)?,
        bronchial: None,
        label: Some(spec.class.label()),
    })
}
