//! Plain-text key=value run configuration. Flags override file values;
//! unknown keys are hard errors; every run writes its resolved snapshot
//! next to its outputs so results can be reproduced exactly.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::signal::{ChannelConfig, ModulationScheme};
use crate::training::TrainConfig;

pub const SEED_ENV: &str = "DKAMC_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub channel: ChannelConfig,
    pub train: TrainConfig,
    pub classes: Vec<ModulationScheme>,
    pub dataset_path: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
    pub pca_snr_db: i32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            train: TrainConfig::default(),
            classes: vec![
                ModulationScheme::Bpsk,
                ModulationScheme::Qpsk,
                ModulationScheme::Qam16,
                ModulationScheme::Qam64,
            ],
            dataset_path: PathBuf::from("dataset.dkm"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            report_dir: PathBuf::from("report"),
            pca_snr_db: 18,
        }
    }
}

/// Every accepted config key, in snapshot order.
pub const KEYS: [&str; 19] = [
    "classes",
    "snr_grid_db",
    "frames_per_class_per_snr",
    "samples_per_symbol",
    "pulse",
    "rng_seed",
    "lr",
    "momentum",
    "epochs_visual",
    "epochs_attr",
    "epochs_embed",
    "batch_size",
    "lambda_reg",
    "seed",
    "train_fraction",
    "dataset_path",
    "checkpoint_dir",
    "report_dir",
    "pca_snr_db",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value for {key}: {value:?}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "classes" => {
                self.classes = value
                    .split(',')
                    .map(|s| parse::<ModulationScheme>("classes", s))
                    .collect::<Result<_>>()?;
            }
            "snr_grid_db" => {
                self.channel.snr_grid_db = value
                    .split(',')
                    .map(|s| parse::<i32>("snr_grid_db", s))
                    .collect::<Result<_>>()?;
            }
            "frames_per_class_per_snr" => {
                self.channel.frames_per_class_per_snr = parse(key, value)?;
            }
            "samples_per_symbol" => self.channel.samples_per_symbol = parse(key, value)?,
            "pulse" => self.channel.pulse = parse(key, value)?,
            "rng_seed" => self.channel.rng_seed = parse(key, value)?,
            "lr" => self.train.lr = parse(key, value)?,
            "momentum" => self.train.momentum = parse(key, value)?,
            "epochs_visual" => self.train.epochs_visual = parse(key, value)?,
            "epochs_attr" => self.train.epochs_attr = parse(key, value)?,
            "epochs_embed" => self.train.epochs_embed = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "lambda_reg" => self.train.lambda_reg = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "train_fraction" => self.train.train_fraction = parse(key, value)?,
            "dataset_path" => self.dataset_path = PathBuf::from(value.trim()),
            "checkpoint_dir" => self.checkpoint_dir = PathBuf::from(value.trim()),
            "report_dir" => self.report_dir = PathBuf::from(value.trim()),
            "pca_snr_db" => self.pca_snr_db = parse(key, value)?,
            other => {
                return Err(Error::InvalidConfig(format!("unknown config key: {other}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        match key {
            "classes" => self
                .classes
                .iter()
                .map(|c| c.name())
                .collect::<Vec<_>>()
                .join(","),
            "snr_grid_db" => self
                .channel
                .snr_grid_db
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "frames_per_class_per_snr" => self.channel.frames_per_class_per_snr.to_string(),
            "samples_per_symbol" => self.channel.samples_per_symbol.to_string(),
            "pulse" => self.channel.pulse.to_string(),
            "rng_seed" => self.channel.rng_seed.to_string(),
            "lr" => self.train.lr.to_string(),
            "momentum" => self.train.momentum.to_string(),
            "epochs_visual" => self.train.epochs_visual.to_string(),
            "epochs_attr" => self.train.epochs_attr.to_string(),
            "epochs_embed" => self.train.epochs_embed.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "lambda_reg" => self.train.lambda_reg.to_string(),
            "seed" => self.train.seed.to_string(),
            "train_fraction" => self.train.train_fraction.to_string(),
            "dataset_path" => self.dataset_path.display().to_string(),
            "checkpoint_dir" => self.checkpoint_dir.display().to_string(),
            "report_dir" => self.report_dir.display().to_string(),
            "pca_snr_db" => self.pca_snr_db.to_string(),
            _ => String::new(),
        }
    }

    /// Parse `key=value` lines; '#' starts a comment, blank lines allowed.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key=value", lineno + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = Self::default();
        config.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(config)
    }

    /// DKAMC_SEED overrides both the dataset and training seeds.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(value) = std::env::var(SEED_ENV) {
            let seed: u64 = parse(SEED_ENV, &value)?;
            self.channel.rng_seed = seed;
            self.train.seed = seed;
        }
        Ok(())
    }

    /// Resolved config as key=value text, loadable via apply_text.
    pub fn snapshot(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k}={}\n", self.get(k)))
            .collect()
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.resolved"), self.snapshot())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.train.validate()?;
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig("classes must be non-empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_an_error_naming_the_key() {
        let mut c = RunConfig::default();
        let err = c.set("learning_rate", "0.1").unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn snapshot_roundtrips() {
        let mut c = RunConfig::default();
        c.set("lr", "0.005").unwrap();
        c.set("classes", "BPSK,8PSK,64QAM").unwrap();
        c.set("snr_grid_db", "-10,0,10").unwrap();
        c.set("pulse", "rrc:0.35").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.snapshot()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let mut c = RunConfig::default();
        c.apply_text("# a comment\n\nbatch_size=16 # trailing\n")
            .unwrap();
        assert_eq!(c.train.batch_size, 16);
    }

    #[test]
    fn bad_value_names_the_key() {
        let mut c = RunConfig::default();
        let err = c.set("batch_size", "many").unwrap_err();
        assert!(err.to_string().contains("batch_size"));
    }

    #[test]
    fn every_key_is_settable_and_gettable() {
        let c = RunConfig::default();
        for key in KEYS {
            let value = c.get(key);
            let mut d = RunConfig::default();
            d.set(key, &value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
