//! The TOML run configuration and how command-line flags override it.

use std::path::{Path, PathBuf};

use dfcaptcha_core::catalog::default_catalog;
use dfcaptcha_core::detector::TrainConfig;
use dfcaptcha_core::sim::ScenarioConfig;
use dfcaptcha_core::Catalog;
use serde::{Deserialize, Serialize};

use crate::io::{read_text, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Catalog file; the built-in video catalog when absent.
    pub catalog: Option<PathBuf>,
    /// Model directory; `<output>/models` when absent.
    pub models: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            catalog: None,
            models: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds the experiment. A seed given on the command line or in the
    /// environment replaces both this and `train.seed`.
    pub base_seed: u64,
    /// Episodes per truth class.
    pub n_episodes: usize,
    /// Train one model for every challenge instead of one per challenge.
    pub shared_model: bool,
    pub paths: Paths,
    pub train: TrainConfig,
    pub scenario: ScenarioConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            base_seed: 42,
            n_episodes: 1000,
            shared_model: false,
            paths: Paths::default(),
            train: TrainConfig::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> CliResult<RunConfig> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
    }

    /// Loads the config file (or defaults), applies overrides and resolves
    /// relative paths against the config file's directory.
    pub fn load(o: &Overrides) -> CliResult<RunConfig> {
        let mut cfg = match &o.config {
            Some(path) => {
                let mut cfg = Self::parse(&read_text(path)?, &path.display().to_string())?;
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.paths.resolve(base);
                cfg
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = o.seed {
            cfg.base_seed = seed;
            cfg.train.seed = seed;
        }
        if let Some(out) = &o.out {
            cfg.paths.output = out.clone();
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> CliResult<()> {
        if self.n_episodes == 0 {
            return Err(CliError::Config("n_episodes must be at least 1".into()));
        }
        self.train.validate().map_err(|e| CliError::Config(format!("[train]: {e}")))?;
        if let Some(c) = &self.paths.catalog {
            if !c.is_file() {
                return Err(CliError::Config(format!("catalog file {} does not exist", c.display())));
            }
        }
        Ok(())
    }

    pub fn models_dir(&self) -> PathBuf {
        self.paths.models.clone().unwrap_or_else(|| self.paths.output.join("models"))
    }

    pub fn catalog(&self) -> CliResult<Catalog> {
        match &self.paths.catalog {
            None => Ok(default_catalog()),
            Some(path) => Catalog::from_json(&read_text(path)?)
                .map_err(|e| CliError::Domain(format!("{}: {e}", path.display()))),
        }
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(c) = &mut self.catalog {
            join(c);
        }
        if let Some(m) = &mut self.models {
            join(m);
        }
        join(&mut self.output);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::parse("", "t").unwrap(), RunConfig::default());
    }

    #[test]
    fn nested_sections_and_unknown_keys() {
        let cfg = RunConfig::parse(
            "n_episodes = 10\n[scenario.deepfake]\nartifact_amp = 2.5\ncoverage = [\"fold-ear\"]\n\
             [scenario.selection.min_quality]\ntechnology = 0.5\n",
            "t",
        )
        .unwrap();
        assert_eq!(cfg.n_episodes, 10);
        assert_eq!(cfg.scenario.deepfake.artifact_amp, 2.5);
        assert!(cfg.scenario.deepfake.coverage.contains("fold-ear"));
        assert_eq!(cfg.scenario.selection.min_quality.len(), 1);

        let err = RunConfig::parse("[scenario]\nartifact = 1\n", "run.toml").unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("run.toml"), "{err}");
    }

    #[test]
    fn seed_flag_wins_and_reaches_training() {
        let cfg = RunConfig::load(&Overrides {
            seed: Some(7),
            ..Default::default()
        })
        .unwrap();
        assert_eq!((cfg.base_seed, cfg.train.seed), (7, 7));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[paths]\noutput = \"results\"\n").unwrap();
        let cfg = RunConfig::load(&Overrides {
            config: Some(path),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.paths.output, dir.path().join("results"));
        assert_eq!(cfg.models_dir(), dir.path().join("results/models"));
    }

    #[test]
    fn missing_catalog_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[paths]\ncatalog = \"nope.json\"\n").unwrap();
        let err = RunConfig::load(&Overrides {
            config: Some(path),
            ..Default::default()
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
