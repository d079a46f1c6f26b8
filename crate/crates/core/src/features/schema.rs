use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "ct-triage-features/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureGroup {
    LungsStats,
    OpacityStats,
    OpacityTexture,
    ShapeLocation,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::LungsStats,
        FeatureGroup::OpacityStats,
        FeatureGroup::OpacityTexture,
        FeatureGroup::ShapeLocation,
    ];

    /// Name used in ablation tables.
    pub fn title(self) -> &'static str {
        match self {
            FeatureGroup::LungsStats => "Lungs statistics",
            FeatureGroup::OpacityStats => "Opacities statistics",
            FeatureGroup::OpacityTexture => "Opacities texture",
            FeatureGroup::ShapeLocation => "Location & Shape",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            FeatureGroup::LungsStats => "lungs-stats",
            FeatureGroup::OpacityStats => "opacity-stats",
            FeatureGroup::OpacityTexture => "opacity-texture",
            FeatureGroup::ShapeLocation => "shape-location",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "lungsstats" | "lungsstatistics" | "lungs" => FeatureGroup::LungsStats,
            "opacitystats" | "opacitiesstatistics" | "opacitystatistics" => FeatureGroup::OpacityStats,
            "opacitytexture" | "opacitiestexture" | "texture" => FeatureGroup::OpacityTexture,
            "shapelocation" | "locationshape" | "shape" | "location" => FeatureGroup::ShapeLocation,
            _ => return Err(Error::InvalidParameter(format!("unknown feature group {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureDef {
    pub id: String,
    pub group: FeatureGroup,
    pub kind: FeatureKind,
}

/// The eight regions every per-structure feature is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    BothLungs,
    LeftLung,
    RightLung,
    Lobe(u8),
}

impl Structure {
    pub const ALL: [Structure; 8] = [
        Structure::BothLungs,
        Structure::LeftLung,
        Structure::RightLung,
        Structure::Lobe(1),
        Structure::Lobe(2),
        Structure::Lobe(3),
        Structure::Lobe(4),
        Structure::Lobe(5),
    ];

    pub fn slot(self) -> usize {
        match self {
            Structure::BothLungs => 0,
            Structure::LeftLung => 1,
            Structure::RightLung => 2,
            Structure::Lobe(k) => 2 + k as usize,
        }
    }

    pub fn name(self) -> String {
        match self {
            Structure::BothLungs => "total".into(),
            Structure::LeftLung => "left".into(),
            Structure::RightLung => "right".into(),
            Structure::Lobe(k) => format!("lobe{k}"),
        }
    }
}

/// HU windows. Low is closed; the others exclude their lower bound so the
/// three partition [-1000, -250].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HuWindow {
    Low,
    Functional,
    High,
}

impl HuWindow {
    pub const ALL: [HuWindow; 3] = [HuWindow::Low, HuWindow::Functional, HuWindow::High];

    pub fn of(hu: i16) -> Option<HuWindow> {
        match hu {
            -1000..=-950 => Some(HuWindow::Low),
            -949..=-600 => Some(HuWindow::Functional),
            -599..=-250 => Some(HuWindow::High),
            _ => None,
        }
    }

    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            HuWindow::Low => "low",
            HuWindow::Functional => "functional",
            HuWindow::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextureClass {
    Ggo,
    Consolidation,
}

impl TextureClass {
    pub const ALL: [TextureClass; 2] = [TextureClass::Ggo, TextureClass::Consolidation];

    pub fn label(self) -> u8 {
        match self {
            TextureClass::Ggo => 1,
            TextureClass::Consolidation => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TextureClass::Ggo => "GGO",
            TextureClass::Consolidation => "consolidation",
        }
    }
}

/// Ordered, versioned list of feature definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: String,
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn new(version: impl Into<String>, features: Vec<FeatureDef>) -> Result<Self> {
        let schema = FeatureSchema {
            version: version.into(),
            features,
        };
        let mut seen = std::collections::HashSet::new();
        for f in &schema.features {
            if !seen.insert(f.id.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate feature id {}", f.id)));
            }
        }
        Ok(schema)
    }

    /// The clinical feature schema produced by [`crate::features::extract_features`].
    pub fn canonical() -> &'static FeatureSchema {
        static SCHEMA: OnceLock<FeatureSchema> = OnceLock::new();
        SCHEMA.get_or_init(build_canonical)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.id.as_str())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.features.iter().position(|f| f.id == id)
    }

    pub fn group_indices(&self, group: FeatureGroup) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.features[i].group == group).collect()
    }

    /// Per-feature flag: true when the feature is NOT in any of `masked`.
    pub fn active_mask(&self, masked: &[FeatureGroup]) -> Vec<bool> {
        self.features.iter().map(|f| !masked.contains(&f.group)).collect()
    }
}

fn build_canonical() -> FeatureSchema {
    let mut f = Vec::new();
    let mut push = |id: String, group, kind| f.push(FeatureDef { id, group, kind });
    use FeatureGroup::*;
    use FeatureKind::*;

    for s in Structure::ALL {
        push(format!("{}_volume", s.name()), LungsStats, Continuous);
    }
    for s in Structure::ALL {
        for w in HuWindow::ALL {
            push(format!("{}_{}_hu_volume", s.name(), w.name()), LungsStats, Continuous);
            push(format!("{}_{}_hu_ratio", s.name(), w.name()), LungsStats, Continuous);
        }
    }

    for s in Structure::ALL {
        push(format!("abnormal_{}_volume", s.name()), OpacityStats, Continuous);
        push(format!("abnormal_{}_ratio", s.name()), OpacityStats, Continuous);
    }
    push("pos_ratio".into(), OpacityStats, Continuous);
    push("activation_sum".into(), OpacityStats, Continuous);
    push("activation_volume_weighted".into(), OpacityStats, Continuous);

    for c in TextureClass::ALL {
        for s in Structure::ALL {
            push(format!("{}_{}_volume", c.name(), s.name()), OpacityTexture, Continuous);
            push(format!("{}_{}_ratio", c.name(), s.name()), OpacityTexture, Continuous);
        }
    }
    for c in TextureClass::ALL {
        push(format!("{}_dominance", c.name()), OpacityTexture, Continuous);
    }

    push("focal_ggo".into(), ShapeLocation, Binary);
    push("laterality_unilateral_left".into(), ShapeLocation, Binary);
    push("laterality_unilateral_right".into(), ShapeLocation, Binary);
    push("laterality_bilateral".into(), ShapeLocation, Binary);
    push("peripheral_ratio".into(), ShapeLocation, Continuous);

    FeatureSchema::new(SCHEMA_VERSION, f).expect("canonical ids are unique")
}
