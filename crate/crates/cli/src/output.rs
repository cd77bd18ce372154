//! Output files. CSVs start with `#` comment lines carrying the config hash
//! and seed; JSON files wrap their payload in an envelope with the same keys.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope<T> {
    pub config_hash: String,
    pub seed: u64,
    pub data: T,
}

pub struct Writer {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl Writer {
    pub fn new(dir: &Path, hash: String, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Writer { dir: dir.to_path_buf(), hash, seed })
    }

    pub fn header(&self) -> Vec<String> {
        vec![format!("config_hash={}", self.hash), format!("seed={}", self.seed)]
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    /// `body` must not carry its own metadata lines; the header is prepended.
    pub fn csv(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let mut out = String::new();
        for line in self.header() {
            out.push_str("# ");
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(body);
        self.write(name, &out)
    }

    pub fn json<T: Serialize>(&self, name: &str, data: T) -> Result<PathBuf, CliError> {
        let env = Envelope { config_hash: self.hash.clone(), seed: self.seed, data };
        let text = serde_json::to_string_pretty(&env).expect("output serializes");
        self.write(name, &(text + "\n"))
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Envelope<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
