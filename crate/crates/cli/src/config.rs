//! Optional TOML settings shared by all subcommands. Command-line flags
//! take precedence over the file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use exbody::rl::TrainConfig;
use exbody::stats::{Field, DEFAULT_HAND_SAMPLES};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub curate: CurateSection,
    pub retarget: RetargetSection,
    pub stats: StatsSection,
    pub train: TrainConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurateSection {
    pub include: Option<Vec<String>>,
    pub exclude: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetargetSection {
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub interval: f64,
    pub fields: Vec<Field>,
    pub hand_samples: usize,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection {
            interval: 1.0,
            fields: Field::ALL.to_vec(),
            hand_samples: DEFAULT_HAND_SAMPLES,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_are_optional() {
        let cfg: FileConfig = toml::from_str("[stats]\ninterval = 0.5\n[train]\niterations = 3\n").unwrap();
        assert_eq!(cfg.stats.interval, 0.5);
        assert_eq!(cfg.stats.hand_samples, 10_000);
        assert_eq!(cfg.train.iterations, 3);
        assert!(cfg.curate.include.is_none());
        assert!(toml::from_str::<FileConfig>("[stats]\nbins = 3\n").is_err());
    }
}
