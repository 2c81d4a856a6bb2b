//! Game config files.
//!
//! ```toml
//! [server]
//! alpha = 5.0
//! beta = 2.0
//! rho = 8.0
//! w = 10.0
//! r = 10.0
//! t = 5.0
//! k = 13.2
//! a = 0.7
//!
//! [device.1]
//! alpha = 2.1
//! beta = 0.8
//! psi_hi = 1.6
//! psi_lo = 0.3
//! lambda = 0.5
//! delta = 0.018
//! data_size = 750.0
//! ```
//!
//! Device sections are numbered `1..=n` without gaps.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{DeviceParams, GameConfig, GameError, ServerParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("writing config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("device sections must be numbered 1..=n, found `{0}`")]
    DeviceNumbering(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    server: ServerParams,
    device: BTreeMap<String, DeviceParams>,
}

pub fn parse_config(text: &str) -> Result<GameConfig, ConfigError> {
    let file: ConfigFile = toml::from_str(text)?;
    let mut numbered = Vec::with_capacity(file.device.len());
    for (key, dev) in file.device {
        let idx: usize = key.parse().map_err(|_| ConfigError::DeviceNumbering(key.clone()))?;
        numbered.push((idx, dev));
    }
    numbered.sort_by_key(|(idx, _)| *idx);
    for (pos, (idx, _)) in numbered.iter().enumerate() {
        if *idx != pos + 1 {
            return Err(ConfigError::DeviceNumbering(idx.to_string()));
        }
    }
    let devices = numbered.into_iter().map(|(_, d)| d).collect();
    Ok(GameConfig::new(file.server, devices)?)
}

pub fn config_to_toml(cfg: &GameConfig) -> Result<String, ConfigError> {
    // A map keyed by index strings would sort "10" before "2", so the device
    // tables are emitted one by one.
    let mut out = toml::to_string(&ServerOnly { server: &cfg.server })?;
    for (i, dev) in cfg.devices.iter().enumerate() {
        out.push_str(&format!("\n[device.{}]\n", i + 1));
        out.push_str(&toml::to_string(dev)?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct ServerOnly<'a> {
    server: &'a ServerParams,
}

pub fn load_config(path: &Path) -> Result<GameConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn save_config(cfg: &GameConfig, path: &Path) -> Result<(), ConfigError> {
    let text = config_to_toml(cfg)?;
    std::fs::write(path, text).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::tests::reference_config;

    #[test]
    fn round_trip_preserves_every_field() {
        for n in [1, 3, 11] {
            let mut cfg = reference_config(n);
            cfg.devices[0].alpha = 0.1 + 0.2;
            let text = config_to_toml(&cfg).unwrap();
            assert_eq!(parse_config(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn devices_in_numeric_order() {
        let text = config_to_toml(&reference_config(11)).unwrap();
        let p2 = text.find("[device.2]").unwrap();
        let p10 = text.find("[device.10]").unwrap();
        assert!(p2 < p10);
    }

    #[test]
    fn rejects_gaps_unknown_fields_and_bad_values() {
        let good = config_to_toml(&reference_config(2)).unwrap();
        let gap = good.replace("[device.2]", "[device.3]");
        assert!(matches!(parse_config(&gap), Err(ConfigError::DeviceNumbering(_))));
        let named = good.replace("[device.2]", "[device.b]");
        assert!(matches!(parse_config(&named), Err(ConfigError::DeviceNumbering(_))));
        let extra = good.replace("[server]\n", "[server]\ngamma = 1.0\n");
        assert!(matches!(parse_config(&extra), Err(ConfigError::Parse(_))));
        let swapped = good.replace("psi_lo = 0.4", "psi_lo = 1.95");
        assert!(matches!(parse_config(&swapped), Err(ConfigError::Game(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("game.toml");
        let cfg = reference_config(4);
        save_config(&cfg, &path).unwrap();
        assert_eq!(load_config(&path).unwrap(), cfg);
        assert!(matches!(load_config(&dir.path().join("missing.toml")), Err(ConfigError::Io { .. })));
    }
}
