//! Packaged experiment files, embedded at build time.

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct Entry {
    pub name: &'static str,
    pub source: &'static str,
}

impl Entry {
    pub fn config(&self) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::from_toml(self.source)
            .map_err(|e| CliError::Config(format!("packaged example {}: {e}", self.name)))
    }
}

macro_rules! entry {
    ($name:literal) => {
        Entry {
            name: $name,
            source: include_str!(concat!("../configs/", $name, ".toml")),
        }
    };
}

pub const CATALOG: &[Entry] = &[
    entry!("cubic-integrability"),
    entry!("cubic-euler-divergence"),
    entry!("cubic-strong-rate"),
    entry!("gbm-strong-rate"),
    entry!("lorenz-msq-stability"),
    entry!("vdp-exp-stability"),
    entry!("cubic-as-stability"),
    entry!("gbm-positivity"),
    entry!("gbm-euler-negativity"),
    entry!("linear-comparison"),
];

pub fn find(name: &str) -> Option<&'static Entry> {
    CATALOG.iter().find(|e| e.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_parses_and_matches_its_file_name() {
        assert!(CATALOG.len() >= 7);
        for e in CATALOG {
            let c = e.config().unwrap();
            assert_eq!(c.name, e.name);
            assert!(!c.description.is_empty(), "{}", e.name);
        }
    }
}
