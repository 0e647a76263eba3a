//! Settings file for `--config`. Any key present replaces the matching flag.
//!
//! ```toml
//! predictor = "orderk:4"
//! chunk = 256
//! endpoint = "127.0.0.1:7878"
//! timeout = 10.0
//! verbosity = 1            # 0 quiet, 1 normal, 2+ verbose
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::Failure;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub predictor: Option<String>,
    pub chunk: Option<usize>,
    pub endpoint: Option<String>,
    pub timeout: Option<f64>,
    pub verbosity: Option<u8>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        Self::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(FileConfig::parse("predictor = \"uniform\"\nchunk = 4\n").is_ok());
        assert!(matches!(
            FileConfig::parse("chunks = 4\n"),
            Err(Failure::Usage(_))
        ));
    }
}
