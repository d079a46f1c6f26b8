use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use triage_core::eval::{GridSpec, Refinement};
use triage_core::features::{ExtractConfig, FeatureGroup};
use triage_core::learn::{EnsembleKind, ModelParams};
use triage_core::phantom::{PhantomRanges, Profile};
use triage_core::DEFAULT_SEED;

use crate::CliError;

/// Prefix of every environment variable the CLI reads.
pub const ENV_PREFIX: &str = "TRIAGE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSettings {
    pub n: usize,
    pub covid_fraction: f64,
    pub profile: Profile,
    pub ranges: PhantomRanges,
}

impl Default for PhantomSettings {
    fn default() -> Self {
        PhantomSettings {
            n: 200,
            covid_fraction: 0.58,
            profile: Profile::Mixed,
            ranges: PhantomRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeSettings {
    /// Features to plot; empty means the `top` most important ones.
    pub features: Vec<String>,
    pub top: usize,
    pub grid_points: usize,
}

impl Default for KdeSettings {
    fn default() -> Self {
        KdeSettings {
            features: Vec::new(),
            top: 5,
            grid_points: 512,
        }
    }
}

/// Everything that influences results. Embedded verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Seeds fold assignment, forests and phantom sampling; copied into `model.seed`.
    pub seed: u64,
    pub folds: usize,
    pub model: ModelParams,
    pub mask_groups: Vec<FeatureGroup>,
    pub extract: ExtractConfig,
    pub phantom: PhantomSettings,
    /// Coarse grid; `None` skips the grid stage of `pipeline`.
    pub grid: Option<GridSpec>,
    pub refine: Refinement,
    /// Whether `pipeline` runs the ablation stage.
    pub ablation: bool,
    pub kde: KdeSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: DEFAULT_SEED,
            folds: 5,
            model: ModelParams::default(),
            mask_groups: Vec::new(),
            extract: ExtractConfig::default(),
            phantom: PhantomSettings::default(),
            grid: None,
            refine: Refinement::default(),
            ablation: true,
            kde: KdeSettings::default(),
        }
    }
}

/// Coarse grid used by `triage grid` when the config names none.
pub fn default_grid() -> GridSpec {
    GridSpec {
        n_estimators: vec![25, 50, 100, 200],
        learning_rate: vec![0.1, 0.5, 1.0],
        max_depth: vec![1, 2, 3],
        min_samples_split: vec![2, 4, 8],
    }
}

/// Fully resolved run configuration: settings plus run-local paths and parallelism.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub settings: Settings,
    pub jobs: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Values supplied by one source (flags or environment); `None` leaves the field alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub jobs: Option<usize>,
    pub model: Option<EnsembleKind>,
    pub n_estimators: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_depth: Option<usize>,
    pub min_samples_split: Option<usize>,
    pub mask_groups: Option<Vec<FeatureGroup>>,
    pub manifest: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub n: Option<usize>,
    pub covid_fraction: Option<f64>,
    pub profile: Option<Profile>,
}

pub fn parse_profile(s: &str) -> Result<Profile, String> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| format!("unknown profile {s:?}, expected mixed or peripheral-only"))
}

pub fn parse_group(s: &str) -> Result<FeatureGroup, String> {
    s.parse().map_err(|e: triage_core::Error| e.to_string())
}

pub fn parse_kind(s: &str) -> Result<EnsembleKind, String> {
    s.parse().map_err(|e: triage_core::Error| e.to_string())
}

impl Overrides {
    /// Read `TRIAGE_*` variables through `lookup`.
    pub fn from_env(lookup: &dyn Fn(&str) -> Option<String>) -> Result<Overrides, CliError> {
        fn get<T>(
            lookup: &dyn Fn(&str) -> Option<String>,
            name: &str,
            parse: impl Fn(&str) -> Result<T, String>,
        ) -> Result<Option<T>, CliError> {
            let key = format!("{ENV_PREFIX}{name}");
            match lookup(&key) {
                None => Ok(None),
                Some(v) if v.trim().is_empty() => Ok(None),
                Some(v) => parse(v.trim())
                    .map(Some)
                    .map_err(|e| CliError::Usage(format!("{key}: {e}"))),
            }
        }
        fn num<T: std::str::FromStr>(s: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            s.parse::<T>().map_err(|e| e.to_string())
        }
        let path = |s: &str| -> Result<PathBuf, String> { Ok(PathBuf::from(s)) };
        Ok(Overrides {
            seed: get(lookup, "SEED", num)?,
            folds: get(lookup, "FOLDS", num)?,
            jobs: get(lookup, "JOBS", num)?,
            model: get(lookup, "MODEL", parse_kind)?,
            n_estimators: get(lookup, "N_ESTIMATORS", num)?,
            learning_rate: get(lookup, "LEARNING_RATE", num)?,
            max_depth: get(lookup, "MAX_DEPTH", num)?,
            min_samples_split: get(lookup, "MIN_SAMPLES_SPLIT", num)?,
            mask_groups: get(lookup, "MASK_GROUP", |s| {
                s.split(',').filter(|p| !p.trim().is_empty()).map(|p| parse_group(p.trim())).collect()
            })?,
            manifest: get(lookup, "MANIFEST", path)?,
            features: get(lookup, "FEATURES", path)?,
            out: get(lookup, "OUT", path)?,
            n: None,
            covid_fraction: None,
            profile: None,
        })
    }

    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.settings;
        macro_rules! set {
            ($src:ident => $dst:expr) => {
                if let Some(v) = self.$src.clone() {
                    $dst = v;
                }
            };
        }
        set!(seed => s.seed);
        set!(folds => s.folds);
        set!(model => s.model.model);
        set!(n_estimators => s.model.n_estimators);
        set!(learning_rate => s.model.learning_rate);
        set!(max_depth => s.model.max_depth);
        set!(min_samples_split => s.model.min_samples_split);
        set!(mask_groups => s.mask_groups);
        set!(n => s.phantom.n);
        set!(covid_fraction => s.phantom.covid_fraction);
        set!(profile => s.phantom.profile);
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        if self.manifest.is_some() {
            cfg.manifest = self.manifest.clone();
        }
        if self.features.is_some() {
            cfg.features = self.features.clone();
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
    }
}

/// Recursive merge: objects merge key by key, anything else replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn apply_file(cfg: &mut RunConfig, path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::data("config", triage_core::Error::MissingFile(path.to_path_buf())));
    }
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::Usage(format!("invalid config {}: {e}", path.display()));
    let mut value: Value = serde_json::from_str(&text).map_err(bad)?;
    let Some(obj) = value.as_object_mut() else {
        return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
    };
    if let Some(v) = obj.remove("jobs") {
        cfg.jobs = serde_json::from_value(v).map_err(bad)?;
    }
    for (key, slot) in [
        ("manifest", &mut cfg.manifest),
        ("features", &mut cfg.features),
        ("out", &mut cfg.out),
    ] {
        if let Some(v) = obj.remove(key) {
            *slot = serde_json::from_value(v).map_err(bad)?;
        }
    }
    let mut settings = serde_json::to_value(&cfg.settings).map_err(bad)?;
    merge(&mut settings, value);
    cfg.settings = serde_json::from_value(settings).map_err(bad)?;
    Ok(())
}

impl RunConfig {
    /// Merge sources with precedence flags > config file > environment > defaults.
    pub fn resolve(
        flags: &Overrides,
        config_path: Option<&Path>,
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        Overrides::from_env(env)?.apply(&mut cfg);
        let env_config = env(&format!("{ENV_PREFIX}CONFIG")).filter(|s| !s.trim().is_empty());
        let file = config_path.map(Path::to_path_buf).or(env_config.map(PathBuf::from));
        if let Some(path) = file {
            apply_file(&mut cfg, &path)?;
        }
        flags.apply(&mut cfg);
        cfg.settings.model.seed = cfg.settings.seed;
        cfg.settings.mask_groups.sort();
        cfg.settings.mask_groups.dedup();
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let s = &self.settings;
        let fail = |m: &str| Err(CliError::Usage(m.to_string()));
        if s.folds < 2 {
            return fail("--folds must be at least 2");
        }
        if self.jobs == Some(0) {
            return fail("--jobs must be at least 1");
        }
        let m = &s.model;
        if m.n_estimators == 0 {
            return fail("--n-estimators must be at least 1");
        }
        if !(m.learning_rate.is_finite() && m.learning_rate > 0.0) {
            return fail("--learning-rate must be positive");
        }
        if m.max_depth == 0 {
            return fail("--max-depth must be at least 1");
        }
        if m.min_samples_split < 2 {
            return fail("--min-samples-split must be at least 2");
        }
        if s.kde.grid_points < 2 {
            return fail("kde.grid_points must be at least 2");
        }
        Ok(())
    }
}
