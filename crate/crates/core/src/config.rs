//! Experiment configuration: one TOML file holding every tunable number,
//! with paths resolved relative to the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dataset::SplitKind;
use crate::error::{Error, Result};
use crate::fixation::FilterConfig;
use crate::gaze::ScreenGeometry;
use crate::scanpath::ScanpathConfig;
use crate::stimulus::CodePane;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    /// Method corpus JSONL (`method_id`, `source`).
    pub corpus: PathBuf,
    /// Gaze JSONL files; each is one trial batch.
    #[serde(default)]
    pub gaze: Vec<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_values: Vec<usize>,
    pub split_kinds: Vec<SplitKind>,
    /// SEQ length written into prompt files; unset keeps full scanpaths.
    pub prompt_n: Option<usize>,
    pub histogram_bin_width: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            n_values: vec![1, 2, 3, 4],
            split_kinds: SplitKind::ALL.to_vec(),
            prompt_n: None,
            histogram_bin_width: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub sampling_rate_hz: f64,
    pub dwell_ms_per_token: f64,
    pub saccade_ms: f64,
    pub noise_sd_norm: f64,
    pub seed: u64,
    /// Per gaze file sampling rates for generated data. Participant `i`
    /// goes to gaze file `i mod len`. Empty means `sampling_rate_hz` for
    /// every file.
    pub rates_hz: Vec<f64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            sampling_rate_hz: d.sampling_rate_hz,
            dwell_ms_per_token: d.dwell_ms_per_token,
            saccade_ms: d.saccade_ms,
            noise_sd_norm: d.noise_sd_norm,
            seed: d.seed,
            rates_hz: Vec::new(),
        }
    }
}

impl SynthSection {
    pub fn synth_config(&self, sampling_rate_hz: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            sampling_rate_hz,
            dwell_ms_per_token: self.dwell_ms_per_token,
            saccade_ms: self.saccade_ms,
            noise_sd_norm: self.noise_sd_norm,
            seed,
        }
    }

    pub fn rate_for_file(&self, file_index: usize) -> f64 {
        if self.rates_hz.is_empty() {
            self.sampling_rate_hz
        } else {
            self.rates_hz[file_index % self.rates_hz.len()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub pane: CodePane,
    #[serde(default)]
    pub screen: ScreenGeometry,
    #[serde(default)]
    pub scanpath: ScanpathConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub synth: SynthSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.corpus);
        fix(&mut self.paths.output);
        self.paths.gaze.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.pane.validate()?;
        self.screen.validate()?;
        let ev = &self.evaluation;
        if ev.n_values.is_empty() || ev.n_values.contains(&0) {
            return Err(Error::Config(
                "evaluation.n_values must be non-empty with every n >= 1".into(),
            ));
        }
        if ev.split_kinds.is_empty() {
            return Err(Error::Config(
                "evaluation.split_kinds must be non-empty".into(),
            ));
        }
        if ev.prompt_n == Some(0) {
            return Err(Error::Config("evaluation.prompt_n must be >= 1".into()));
        }
        if !(self.scanpath.tolerance_deg >= 0.0) {
            return Err(Error::Config("scanpath.tolerance_deg must be >= 0".into()));
        }
        if self.synth.rates_hz.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("synth.rates_hz entries must be > 0".into()));
        }
        Ok(())
    }

    /// Output locations shared by the subcommands.
    pub fn fixations_dir(&self) -> PathBuf {
        self.paths.output.join("fixations")
    }

    pub fn scanpaths_path(&self) -> PathBuf {
        self.paths.output.join("scanpaths.jsonl")
    }

    pub fn splits_dir(&self) -> PathBuf {
        self.paths.output.join("splits")
    }

    pub fn predictions_dir(&self) -> PathBuf {
        self.paths.output.join("predictions")
    }

    pub fn scores_dir(&self) -> PathBuf {
        self.paths.output.join("scores")
    }
}
