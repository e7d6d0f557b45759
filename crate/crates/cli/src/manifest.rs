use std::path::Path;

use serde::Serialize;
use switchsos::io::sha256_hex;

/// What was run, with which inputs. The hash covers everything except timing.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub input: String,
    /// Arguments as given on the command line.
    pub arguments: Vec<String>,
    pub seed: u64,
    pub out_dir: String,
    pub toolkit_version: String,
    pub outputs: Vec<String>,
    #[serde(skip)]
    pub timing_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, input: &Path, arguments: &[String], seed: u64, out_dir: &Path) -> Self {
        Self {
            command: command.into(),
            input: input.display().to_string(),
            arguments: arguments.to_vec(),
            seed,
            out_dir: out_dir.display().to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
            timing_seconds: 0.0,
        }
    }

    /// SHA-256 of the invocation fields (outputs and timing excluded).
    pub fn hash(&self) -> String {
        let key = Self {
            outputs: Vec::new(),
            ..self.clone()
        };
        sha256_hex(toml::to_string(&key).expect("manifest serialises").as_bytes())
    }

    pub fn to_toml(&self) -> String {
        let mut t = toml::Table::try_from(self).expect("manifest serialises");
        t.insert("hash".into(), toml::Value::String(self.hash()));
        t.insert("timing_seconds".into(), toml::Value::Float(self.timing_seconds));
        toml::to_string(&t).expect("manifest serialises")
    }
}
