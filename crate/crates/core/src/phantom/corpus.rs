use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, FeatureTable, FeatureVector};
use crate::fsutil::write_json;
use crate::volume::{save_case, CaseBundle, CorpusManifest};

use super::render::generate_case;
use super::spec::{PhantomClass, PhantomRanges, PhantomSpec, Profile};
use super::truth::GroundTruth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusOptions {
    pub n: usize,
    /// Fraction of covid-like cases.
    pub covid_fraction: f64,
    pub seed: u64,
    pub profile: Profile,
    pub ranges: PhantomRanges,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            n: 200,
            covid_fraction: 0.58,
            seed: crate::DEFAULT_SEED,
            profile: Profile::Mixed,
            ranges: PhantomRanges::default(),
        }
    }
}

/// Sampled specs of a corpus; rendering happens on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub options: CorpusOptions,
    pub specs: Vec<PhantomSpec>,
}

pub struct GeneratedCase {
    pub spec: PhantomSpec,
    pub bundle: CaseBundle,
    pub truth: GroundTruth,
}

fn covid_count(n: usize, fraction: f64) -> usize {
    let k = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && fraction < 1.0 && n >= 2 {
        k.clamp(1, n - 1)
    } else {
        k.min(n)
    }
}

/// Sample `n` specs; case `i` uses seed `seed + i`. Class order is a seeded shuffle.
pub fn generate_corpus(options: &CorpusOptions) -> Result<Corpus> {
    if options.n < 2 || !(0.0..=1.0).contains(&options.covid_fraction) {
        return Err(Error::InvalidParameter(
            "a corpus needs n >= 2 and a covid fraction in [0, 1]".into(),
        ));
    }
    options.ranges.check()?;
    let n_covid = covid_count(options.n, options.covid_fraction);
    let mut classes: Vec<PhantomClass> = (0..options.n)
        .map(|i| {
            if i < n_covid {
                PhantomClass::CovidLike
            } else {
                PhantomClass::OtherLike
            }
        })
        .collect();
    classes.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed));
    let specs = classes
        .par_iter()
        .enumerate()
        .map(|(i, &class)| {
            PhantomSpec::sample(
                &format!("phantom-{i:04}"),
                class,
                options.profile,
                &options.ranges,
                options.seed.wrapping_add(i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        options: options.clone(),
        specs,
    })
}

impl Corpus {
    pub fn render(&self, index: usize) -> Result<GeneratedCase> {
        let spec = self.specs[index].clone();
        let (bundle, truth) = generate_case(&spec)?;
        Ok(GeneratedCase { spec, bundle, truth })
    }

    /// Ground-truth feature table, rendering each case in parallel.
    pub fn truth_table(&self) -> Result<FeatureTable> {
        let rows = (0..self.specs.len())
            .into_par_iter()
            .map(|i| self.render(i)?.truth.vector())
            .collect::<Result<Vec<FeatureVector>>>()?;
        FeatureTable::new(FeatureSchema::canonical().clone(), rows)
    }
}

/// Write every case under `out/cases/<id>/`, plus `manifest.json`,
/// `ground_truth.csv` and `phantom_specs.json`. Returns the manifest path.
pub fn write_corpus(corpus: &Corpus, out: &Path) -> Result<PathBuf> {
    let written = (0..corpus.specs.len())
        .into_par_iter()
        .map(|i| {
            let case = corpus.render(i)?;
            let rel = format!("cases/{}", case.spec.case_id);
            let manifest = save_case(&case.bundle, &out.join(&rel))?;
            Ok((manifest.relocated(&rel), case.truth.vector()?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (cases, rows): (Vec<_>, Vec<_>) = written.into_iter().unzip();
    let table = FeatureTable::new(FeatureSchema::canonical().clone(), rows)?;
    table.write_csv(&out.join("ground_truth.csv"))?;
    write_json(&out.join("phantom_specs.json"), corpus)?;
    let path = out.join("manifest.json");
    write_json(&path, &CorpusManifest { cases })?;
    Ok(path)
}

/// Features through which a profile encodes the class, grouped by signal:
/// features within a group carry the same information.
pub fn signal_channels(profile: Profile) -> Vec<Vec<&'static str>> {
    match profile {
        Profile::Mixed => vec![
            vec![
                "laterality_bilateral",
                "laterality_unilateral_left",
                "laterality_unilateral_right",
            ],
            vec!["peripheral_ratio"],
            vec![
                "GGO_dominance",
                "consolidation_dominance",
                "GGO_total_volume",
                "GGO_total_ratio",
                "consolidation_total_volume",
                "consolidation_total_ratio",
            ],
        ],
        Profile::PeripheralOnly => vec![vec!["peripheral_ratio"]],
    }
}
