use std::io::Write;

use rigmotion::metrics::{evaluate, EmbeddingRegistry, MetricError};

use super::{load_motions, say, write_text, Command};
use crate::config::RunConfig;
use crate::error::CliError;

/// Scores generated motions against references; writes `report.json` and
/// `report.csv`.
pub struct Eval;

impl Command for Eval {
    fn name(&self) -> &'static str {
        "eval"
    }

    fn run(&self, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
        let e = &config.eval;
        let provider = EmbeddingRegistry::builtin()
            .create(&e.provider, config.max_joints)
            .map_err(|err| CliError::Config(err.to_string()))?;
        let references = load_motions(RunConfig::require(&e.reference, "reference set")?)?;
        let generated = load_motions(RunConfig::require(&e.generated, "generated set")?)?;
        let dir = config.output_dir()?.to_path_buf();
        config.persist()?;
        log::info!("evaluating {} generated against {} reference motions", generated.len(), references.len());
        let report = evaluate(&references, &generated, provider.as_ref(), &e.options).map_err(|err| match err {
            MetricError::InvalidArgument(_) | MetricError::UnknownProvider(_) => CliError::Config(err.to_string()),
            err => CliError::Data(err.to_string()),
        })?;
        write_text(&dir.join("report.json"), &(report.to_json() + "\n"))?;
        write_text(&dir.join("report.csv"), &report.to_csv())?;
        for (name, v) in report.auc.iter().chain(&report.scalars) {
            say(out, format!("{name:<24}{v:.6}"))?;
        }
        Ok(())
    }
}
