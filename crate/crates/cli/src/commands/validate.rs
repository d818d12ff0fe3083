use std::io::Write;

use rayon::prelude::*;

use super::{load_manifest, read_bvh, say, Command};
use crate::config::RunConfig;
use crate::error::CliError;

/// Parses every BVH of a manifest and checks its rig.
pub struct Validate;

impl Command for Validate {
    fn name(&self) -> &'static str {
        "validate"
    }

    fn run(&self, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
        let manifest = load_manifest(RunConfig::require(&config.manifest, "manifest")?)?;
        if manifest.is_empty() {
            say(out, "0 files")?;
            return Ok(());
        }
        let results: Vec<Result<(), String>> = manifest
            .entries
            .par_iter()
            .map(|entry| {
                let path = manifest.resolve(entry);
                let doc = read_bvh(&path).map_err(|e| e.to_string())?;
                doc.rig().validate(config.max_joints).map_err(|e| format!("{}: {e}", path.display()))
            })
            .collect();
        let mut failed = 0;
        for (entry, r) in manifest.entries.iter().zip(&results) {
            let line = match r {
                Ok(()) => format!("OK   {}", entry.bvh_path.display()),
                Err(e) => {
                    failed += 1;
                    format!("FAIL {e}")
                }
            };
            say(out, line)?;
        }
        let total = results.len();
        say(out, format!("{}/{} OK", total - failed, total))?;
        log::info!("validated {total} files, {failed} failed");
        if failed > 0 {
            return Err(CliError::Failed { failed, total });
        }
        Ok(())
    }
}
