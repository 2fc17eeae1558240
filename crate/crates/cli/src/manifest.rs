use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Record of one command run: enough to reproduce every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub regime: String,
    pub config: ExperimentConfig,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Result<Self, CliError> {
        Ok(RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            regime: cfg.regime()?.label().into(),
            config: cfg.clone(),
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn write_output(
        &mut self,
        dir: &Path,
        name: &str,
        contents: impl AsRef<[u8]>,
    ) -> Result<(), CliError> {
        std::fs::write(dir.join(name), contents)?;
        self.outputs.push(name.into());
        Ok(())
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        *self.timings.entry(phase.into()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        if let Some(missing) = self.outputs.iter().find(|o| !dir.join(o).exists()) {
            return Err(CliError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("listed output {missing} was not written"),
            )));
        }
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}
