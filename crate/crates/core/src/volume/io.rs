use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

use super::grid::{Grid, Volume, Voxel};
use super::header::VolumeHeader;

/// Resolve `<stem>.json` / `<stem>.raw` from a stem or either file name.
pub fn grid_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut json = stem.clone().into_os_string();
    json.push(".json");
    let mut raw = stem.into_os_string();
    raw.push(".raw");
    (json.into(), raw.into())
}

pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let (json_path, _) = grid_paths(path);
    if !json_path.is_file() {
        return Err(Error::MissingFile(json_path));
    }
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let header: VolumeHeader = serde_json::from_str(&text).map_err(|e| Error::HeaderParse {
        path: json_path.clone(),
        reason: e.to_string(),
    })?;
    header.check().map_err(|e| Error::HeaderParse {
        path: json_path,
        reason: e.to_string(),
    })?;
    Ok(header)
}

pub fn load_grid<T: Voxel>(path: &Path) -> Result<Grid<T>> {
    let header = read_header(path)?;
    let (_, raw_path) = grid_paths(path);
    if header.dtype != T::DTYPE {
        return Err(Error::DTypeMismatch {
            expected: T::DTYPE.to_string(),
            found: header.dtype.to_string(),
        });
    }
    if !raw_path.is_file() {
        return Err(Error::MissingFile(raw_path));
    }
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let size = T::DTYPE.size();
    let expected = (header.voxel_count() * size) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: raw_path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let voxels = bytes.chunks_exact(size).map(T::read_le).collect();
    Grid::from_parts(header, voxels)
}

pub fn save_grid<T: Voxel>(grid: &Grid<T>, path: &Path) -> Result<()> {
    let (json_path, raw_path) = grid_paths(path);
    let header = grid.header().with_dtype(T::DTYPE);
    let mut raw = Vec::with_capacity(grid.len() * T::DTYPE.size());
    for &v in grid.voxels() {
        v.write_le(&mut raw);
    }
    write_atomic(&raw_path, &raw)?;
    let mut json = serde_json::to_vec_pretty(&header)?;
    json.push(b'\n');
    write_atomic(&json_path, &json)
}

pub fn load_volume(path: &Path) -> Result<Volume> {
    load_grid(path)
}

pub fn save_volume(volume: &Volume, path: &Path) -> Result<()> {
    save_grid(volume, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{DType, Orientation};
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, header: &str, raw: &[u8]) -> PathBuf {
        fs::write(dir.join(format!("{name}.json")), header).unwrap();
        fs::write(dir.join(format!("{name}.raw")), raw).unwrap();
        dir.join(name)
    }

    const HEADER: &str = r#"{"dims":[2,2,1],"spacing_mm":[1,1,1],"orientation":"RAI","dtype":"int16"}"#;

    #[test]
    fn decodes_minus_700() {
        let dir = tempfile::tempdir().unwrap();
        let raw: Vec<u8> = (0..4).flat_map(|_| (-700i16).to_le_bytes()).collect();
        let p = write(dir.path(), "v", HEADER, &raw);
        let v = load_volume(&p).unwrap();
        assert_eq!(v.voxels(), &[-700; 4]);
        // .json and .raw spellings resolve to the same pair
        assert_eq!(load_volume(&p.with_extension("json")).unwrap(), v);
    }

    #[test]
    fn short_raw_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "v", HEADER, &[0u8; 6]);
        match load_volume(&p) {
            Err(Error::SizeMismatch { expected, actual, .. }) => assert_eq!((expected, actual), (8, 6)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_volume(&dir.path().join("nope")), Err(Error::MissingFile(_))));
        let p = write(dir.path(), "bad", "{\"dims\": [2,2]}", &[]);
        assert!(matches!(load_volume(&p), Err(Error::HeaderParse { .. })));
        let p = write(dir.path(), "wrongtype", HEADER, &[0u8; 8]);
        assert!(matches!(load_grid::<u8>(&p), Err(Error::DTypeMismatch { .. })));
    }

    #[test]
    fn single_voxel_file_size() {
        let dir = tempfile::tempdir().unwrap();
        let h = VolumeHeader::new([1, 1, 1], [0.7, 0.7, 5.0], Orientation::RAI, DType::Int16).unwrap();
        let v = Grid::from_parts(h, vec![-1i16]).unwrap();
        save_volume(&v, &dir.path().join("one")).unwrap();
        assert_eq!(fs::metadata(dir.path().join("one.raw")).unwrap().len(), 2);
    }

    #[test]
    fn unwritable_directory() {
        let h = VolumeHeader::new([1, 1, 1], [1.0; 3], Orientation::RAI, DType::Int16).unwrap();
        let v = Grid::from_parts(h, vec![0i16]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        assert!(matches!(save_volume(&v, &blocker.join("v")), Err(Error::Io { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn roundtrip_all_types(seed in any::<u64>(), dims in proptest::array::uniform3(1usize..17)) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dir = tempfile::tempdir().unwrap();
            let n: usize = dims.iter().product();
            let spacing = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(1.0..10.0)];

            let h = VolumeHeader::new(dims, spacing, "LPS".parse().unwrap(), DType::Int16).unwrap();
            let v = Grid::from_parts(h, (0..n).map(|_| rng.random::<i16>()).collect()).unwrap();
            save_grid(&v, &dir.path().join("a")).unwrap();
            prop_assert_eq!(load_grid::<i16>(&dir.path().join("a")).unwrap(), v);

            let h = VolumeHeader::new(dims, spacing, Orientation::RAI, DType::Uint8).unwrap();
            let m = Grid::from_parts(h, (0..n).map(|_| rng.random::<u8>()).collect()).unwrap();
            save_grid(&m, &dir.path().join("b")).unwrap();
            prop_assert_eq!(load_grid::<u8>(&dir.path().join("b")).unwrap(), m);

            let h = VolumeHeader::new(dims, spacing, Orientation::RAI, DType::Float32).unwrap();
            let a = Grid::from_parts(h, (0..n).map(|_| rng.random::<f32>()).collect()).unwrap();
            save_grid(&a, &dir.path().join("c")).unwrap();
            let back = load_grid::<f32>(&dir.path().join("c")).unwrap();
            prop_assert!(back.voxels().iter().zip(a.voxels()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
