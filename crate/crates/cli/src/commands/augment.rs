use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use rigmotion::augment::{derive_seed, AugmentContext, AugmentationPipeline, AugmentationRecord, AugmentationRegistry};
use rigmotion::bvh::{BvhDocument, DatasetManifest, ManifestEntry};
use serde::{Deserialize, Serialize};

use super::{load_manifest, read_bvh, say, unique_stems, write_doc, write_text, Command};
use crate::config::RunConfig;
use crate::error::CliError;

/// How one output file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub file: PathBuf,
    pub source: PathBuf,
    /// 0 for the unmodified source.
    pub variant: usize,
    pub records: Vec<AugmentationRecord>,
}

/// Expands every motion of a manifest into itself plus augmented variants.
pub struct Augment;

impl Command for Augment {
    fn name(&self) -> &'static str {
        "augment"
    }

    fn run(&self, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
        let manifest = load_manifest(RunConfig::require(&config.manifest, "manifest")?)?;
        let registry = AugmentationRegistry::builtin();
        let pipeline = AugmentationPipeline::from_policy(&config.augment.policy, &registry).map_err(|e| CliError::Config(e.to_string()))?;
        let dir = config.output_dir()?.to_path_buf();
        config.persist()?;
        let seed = config.seed();
        let variants = config.augment.variants;
        log::info!("augmenting {} motions x {variants} variants with {:?}", manifest.len(), pipeline.stage_names());

        let paths: Vec<_> = manifest.entries.iter().map(|e| manifest.resolve(e)).collect();
        let stems = unique_stems(&paths);
        let results: Vec<Result<Vec<(ManifestEntry, Provenance)>, CliError>> = manifest
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, entry)| {
                let path = &paths[i];
                let doc = read_bvh(path)?;
                let ctx = AugmentContext {
                    species: &entry.species_tag,
                };
                let expanded = pipeline
                    .expand(&doc.motion, &ctx, variants, derive_seed(seed, i as u64))
                    .map_err(|e| CliError::data(path, e))?;
                let mut written = Vec::with_capacity(expanded.len());
                for (k, (motion, records)) in expanded.into_iter().enumerate() {
                    let name = PathBuf::from(format!("{}_v{k:02}.bvh", stems[i]));
                    // the source keeps its own channel layout
                    let out_doc = if k == 0 { doc.clone() } else { BvhDocument::from_motion(motion) };
                    write_doc(&dir.join(&name), &out_doc)?;
                    written.push((
                        ManifestEntry {
                            bvh_path: name.clone(),
                            ..entry.clone()
                        },
                        Provenance {
                            file: name,
                            source: entry.bvh_path.clone(),
                            variant: k,
                            records,
                        },
                    ));
                }
                Ok(written)
            })
            .collect();

        let mut entries = Vec::new();
        let mut provenance = Vec::new();
        let mut failed = 0;
        for r in results {
            match r {
                Ok(v) => {
                    for (e, p) in v {
                        entries.push(e);
                        provenance.push(p);
                    }
                }
                Err(e) => {
                    failed += 1;
                    log::warn!("{e}");
                }
            }
        }
        let records_path = dir.join("records.json");
        let text = serde_json::to_string_pretty(&provenance).map_err(|e| CliError::Data(e.to_string()))?;
        write_text(&records_path, &(text + "\n"))?;
        let written = DatasetManifest {
            entries,
            base_dir: dir.clone(),
        };
        written.save(&dir.join("manifest.json")).map_err(|e| CliError::Data(e.to_string()))?;
        say(
            out,
            format!("wrote {} motions from {}/{} inputs into {}", written.len(), paths.len() - failed, paths.len(), dir.display()),
        )?;
        if failed > 0 {
            return Err(CliError::Failed {
                failed,
                total: paths.len(),
            });
        }
        Ok(())
    }
}
