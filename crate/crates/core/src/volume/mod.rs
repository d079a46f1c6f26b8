//! CT volumes, label maps and their on-disk form.
//!
//! Every grid is stored as a JSON header sidecar plus a raw little-endian
//! voxel file, X fastest. Bundles are reoriented to RAI when loaded, so code
//! downstream of [`load_case`] never has to look at orientation again.

mod bundle;
mod grid;
mod header;
mod io;

pub use bundle::{
    load_case, read_manifest, save_case, validate_case, CaseBundle, CaseManifest, ClassLabel, CorpusManifest,
    LabelMap, LabelRole, ValidationReport, Violation,
};
pub use grid::{clip_normalize, ActivationMap, Grid, NormalizedVolume, Volume, Voxel};
pub use header::{AxisDir, DType, Orientation, VolumeHeader};
pub use io::{grid_paths, load_grid, load_volume, read_header, save_grid, save_volume};
