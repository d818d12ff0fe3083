//! Subcommands behind one trait, looked up by name.

pub mod augment;
pub mod eval;
pub mod preprocess;
pub mod sample;
pub mod train;
pub mod validate;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rigmotion::bvh::{parse_bvh, write_bvh, BvhDocument, DatasetManifest};
use rigmotion::skeleton::Motion;

use crate::config::RunConfig;
use crate::error::CliError;

pub trait Command: Send + Sync {
    fn name(&self) -> &'static str;

    /// Runs with a fully resolved config; human-readable results go to `out`.
    fn run(&self, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError>;
}

pub struct CommandRegistry {
    commands: BTreeMap<&'static str, Box<dyn Command>>,
}

impl CommandRegistry {
    pub fn empty() -> Self {
        Self {
            commands: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(validate::Validate));
        r.register(Box::new(preprocess::Preprocess));
        r.register(Box::new(augment::Augment));
        r.register(Box::new(train::Train));
        r.register(Box::new(sample::Sample));
        r.register(Box::new(sample::SampleLong));
        r.register(Box::new(eval::Eval));
        r
    }

    pub fn register(&mut self, command: Box<dyn Command>) {
        self.commands.insert(command.name(), command);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.commands.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Command, CliError> {
        self.commands
            .get(name)
            .map(|c| c.as_ref())
            .ok_or_else(|| CliError::Config(format!("unknown command `{name}`")))
    }

    pub fn run(&self, name: &str, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
        self.get(name)?.run(config, out)
    }
}

impl Default for CommandRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

pub(crate) fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("manifest {} does not exist", path.display())));
    }
    DatasetManifest::load(path).map_err(|e| CliError::Data(e.to_string()))
}

pub(crate) fn read_bvh(path: &Path) -> Result<BvhDocument, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_bvh(&text).map_err(|e| CliError::data(path, e))
}

pub(crate) fn write_doc(path: &Path, doc: &BvhDocument) -> Result<(), CliError> {
    let text = write_bvh(doc).map_err(|e| CliError::data(path, e))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// BVH paths listed by a manifest, or the `.bvh` files of a directory in
/// name order.
pub(crate) fn bvh_paths(source: &Path) -> Result<Vec<PathBuf>, CliError> {
    if source.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(source)
            .map_err(|e| CliError::io(source, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("bvh")))
            .collect();
        paths.sort();
        Ok(paths)
    } else {
        let m = load_manifest(source)?;
        Ok(m.entries.iter().map(|e| m.resolve(e)).collect())
    }
}

pub(crate) fn load_motions(source: &Path) -> Result<Vec<Motion>, CliError> {
    use rayon::prelude::*;
    let paths = bvh_paths(source)?;
    paths.par_iter().map(|p| read_bvh(p).map(|d| d.motion)).collect()
}

pub(crate) fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "motion".into())
}

pub(crate) fn say(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(|e| CliError::Data(format!("writing output: {e}")))
}

/// File stems made unique by suffixing later duplicates with their index.
pub(crate) fn unique_stems(paths: &[PathBuf]) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let stem = file_stem(p);
            if seen.insert(stem.clone()) {
                stem
            } else {
                let s = format!("{stem}_{i}");
                seen.insert(s.clone());
                s
            }
        })
        .collect()
}
