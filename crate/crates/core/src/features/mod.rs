//! Clinical feature vectors computed from a case bundle.
//!
//! Four groups, in schema order: lungs statistics (structure volumes and HU
//! windows), opacity statistics (abnormal volume, `pos_ratio`, activation
//! features), opacity texture (GGO and consolidation split) and shape &
//! location (focal GGO, laterality, peripheral ratio).

mod extract;
mod schema;
mod table;

pub use extract::{
    extract_features, lung_statistics, opacity_statistics, shape_location_features, texture_features,
    ExtractConfig, FOCAL_MAX_DIAMETER_MM,
};
pub use schema::{
    FeatureDef, FeatureGroup, FeatureKind, FeatureSchema, HuWindow, Structure, TextureClass, SCHEMA_VERSION,
};
pub use table::{FeatureTable, FeatureVector};
