//! Output files. Every file carries the schema version, the config hash and
//! the master seed; nothing time- or machine-dependent is written, so
//! reruns of one config are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Command, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub command: Command,
    pub config_hash: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Provenance {
            schema_version: SCHEMA_VERSION,
            command: cfg.command,
            config_hash: cfg.hash(),
            master_seed: cfg.seed,
            config: cfg.clone(),
        }
    }

    /// First line of every CSV output.
    pub fn csv_comment(&self) -> String {
        format!(
            "# fexpo {} schema_version={} config_hash={} master_seed={}\n",
            self.command, self.schema_version, self.config_hash, self.master_seed
        )
    }
}

/// CSV text with the provenance comment line and a header row.
pub fn csv_table<R: Serialize>(prov: &Provenance, header: &[&str], rows: impl IntoIterator<Item = R>) -> CliResult<Vec<u8>> {
    let mut out = prov.csv_comment().into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        w.write_record(header).map_err(|e| CliError::Output(e.to_string()))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Output(e.to_string()))?;
        }
        w.flush()?;
    }
    Ok(out)
}

/// Files produced by one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub json: Vec<u8>,
    pub csv: Vec<u8>,
    pub paths: Option<Vec<u8>>,
}

impl Outputs {
    pub fn new<T: Serialize>(report: &T, csv: Vec<u8>) -> CliResult<Self> {
        let mut json = serde_json::to_vec_pretty(report).map_err(|e| CliError::Output(e.to_string()))?;
        json.push(b'\n');
        Ok(Outputs { json, csv, paths: None })
    }

    /// Writes `report.json`, `report.csv` and, if present, `paths.bin`.
    pub fn write(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: &[u8]| -> CliResult<()> {
            let p = dir.join(name);
            fs::write(&p, bytes)?;
            written.push(p);
            Ok(())
        };
        put("report.json", &self.json)?;
        put("report.csv", &self.csv)?;
        if let Some(p) = &self.paths {
            put("paths.bin", p)?;
        }
        Ok(written)
    }
}
