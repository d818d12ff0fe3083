use std::io::Write;

use log::{Level, LevelFilter, Log, Metadata, Record};

/// One JSON object per line on stderr, or bare warnings and errors with
/// `quiet`.
pub struct LineLogger {
    quiet: bool,
}

impl Log for LineLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        !self.quiet || metadata.level() <= Level::Warn
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let line = if self.quiet {
            format!("{}: {}", record.level().as_str().to_lowercase(), record.args())
        } else {
            serde_json::json!({
                "level": record.level().as_str().to_lowercase(),
                "target": record.target(),
                "msg": record.args().to_string(),
            })
            .to_string()
        };
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }

    fn flush(&self) {}
}

/// Installs the logger; later calls are no-ops.
pub fn init(quiet: bool) {
    if log::set_logger(Box::leak(Box::new(LineLogger { quiet }))).is_ok() {
        log::set_max_level(if quiet { LevelFilter::Warn } else { LevelFilter::Info });
    }
}
