use std::io::Write;

use rayon::prelude::*;
use rigmotion::bvh::{preprocess, DatasetManifest, ManifestEntry};

use super::{load_manifest, read_bvh, say, unique_stems, write_doc, Command};
use crate::config::RunConfig;
use crate::error::CliError;

/// Scales, centres and reorients every motion of a manifest.
pub struct Preprocess;

impl Command for Preprocess {
    fn name(&self) -> &'static str {
        "preprocess"
    }

    fn run(&self, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
        let manifest = load_manifest(RunConfig::require(&config.manifest, "manifest")?)?;
        config.preprocess.alignment().map_err(|e| CliError::Config(e.to_string()))?;
        let dir = config.output_dir()?.to_path_buf();
        config.persist()?;
        let paths: Vec<_> = manifest.entries.iter().map(|e| manifest.resolve(e)).collect();
        let stems = unique_stems(&paths);
        let results: Vec<Result<ManifestEntry, CliError>> = manifest
            .entries
            .par_iter()
            .zip(&paths)
            .zip(&stems)
            .map(|((entry, path), stem)| {
                let doc = preprocess(&read_bvh(path)?, &config.preprocess).map_err(|e| CliError::data(path, e))?;
                let name = format!("{stem}.bvh");
                write_doc(&dir.join(&name), &doc)?;
                Ok(ManifestEntry {
                    bvh_path: name.into(),
                    ..entry.clone()
                })
            })
            .collect();
        let mut entries = Vec::new();
        let mut failed = 0;
        for r in results {
            match r {
                Ok(e) => entries.push(e),
                Err(e) => {
                    failed += 1;
                    log::warn!("{e}");
                }
            }
        }
        let written = DatasetManifest {
            entries,
            base_dir: dir.clone(),
        };
        let path = dir.join("manifest.json");
        written.save(&path).map_err(|e| CliError::Data(e.to_string()))?;
        say(out, format!("preprocessed {}/{} motions into {}", written.len(), paths.len(), dir.display()))?;
        if failed > 0 {
            return Err(CliError::Failed {
                failed,
                total: paths.len(),
            });
        }
        Ok(())
    }
}
