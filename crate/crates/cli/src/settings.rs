//! Config files. Every section is optional; command-line flags override
//! whatever the file sets.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use skyshield::eval::EvalConfig;
use skyshield::experiment::Split;
use skyshield::hough::HoughParams;
use skyshield::lunet::{LUnetConfig, TrainOptions};
use skyshield::synth::SceneDistribution;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub distribution: SceneDistribution,
    pub model: LUnetConfig,
    pub training: TrainOptions,
    pub hough: HoughParams,
    pub eval: EvalConfig,
    pub train: Option<Split>,
    pub dev: Option<Split>,
    pub test: Option<Split>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let settings = match ext.to_ascii_lowercase().as_str() {
            "toml" => {
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            "json" => serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?,
            _ => bail!("config must be .toml or .json: {}", path.display()),
        };
        Ok(settings)
    }

    pub fn split(&self, name: &str) -> Result<Split> {
        let split = match name {
            "train" => self.train,
            "dev" => self.dev,
            "test" => self.test,
            other => bail!("unknown split {other:?} (expected train, dev or test)"),
        };
        split.with_context(|| format!("config defines no {name} split"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("a.toml");
        fs::write(
            &toml_path,
            "[training]\nepochs = 3\nlr = 0.5\n\n[test]\nseed = 7\ncount = 2\n\n[distribution]\nwidth = 32\n",
        )
        .unwrap();
        let json_path = dir.path().join("a.json");
        fs::write(
            &json_path,
            r#"{"training":{"epochs":3,"lr":0.5},"test":{"seed":7,"count":2},"distribution":{"width":32}}"#,
        )
        .unwrap();
        let a = Settings::load(Some(&toml_path)).unwrap();
        assert_eq!(a, Settings::load(Some(&json_path)).unwrap());
        assert_eq!(a.training.epochs, 3);
        assert_eq!(a.training.batch_size, TrainOptions::default().batch_size);
        assert_eq!(a.distribution.height, 128);
        assert_eq!(a.split("test").unwrap(), Split { seed: 7, count: 2 });
        assert!(a.split("dev").is_err());
        assert!(Settings::load(Some(&dir.path().join("a.yaml"))).is_err());
    }
}
