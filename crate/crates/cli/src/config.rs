//! Pipeline configuration file (TOML).
//!
//! ```toml
//! seed = 42
//! out = "out"
//!
//! [inputs]
//! notes = "notes.jsonl"            # with demographics, or
//! demographics = "demographics.csv"
//! cohort = "cohort.jsonl"          # an assembled cohort instead
//! lexicon = "lexicon.tsv"          # optional, built-in otherwise
//! patterns = "ampac_patterns.txt"  # optional, built-in otherwise
//!
//! [binning]
//! window_days = 15
//!
//! [outcomes]
//! mcid_factor = 0.2
//!
//! [screen]
//! p_threshold = 0.3
//! yates = true
//! cell_rule = "observed"            # or "expected"
//!
//! [models]
//! kinds = ["LR", "ADB", "SVM", "GB", "RF"]
//! folds = 3
//! weighting = "INVERSE_FREQUENCY"   # or "SUPPORT"
//!
//! [models.rf]
//! n_trees = 200
//!
//! [synth]
//! n_patients = 265
//! ```
//!
//! Relative input paths are resolved against the directory holding the
//! config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rehab_core::cohort::{BinningConfig, Stage};
use rehab_core::models::{
    AdbParams, CvConfig, GbParams, Hyperparameters, LrParams, ModelKind, ModelSpec, RfParams, SvmParams, Weighting,
};
use rehab_core::stats::{CellRule, ScreenConfig};
use rehab_core::synth::SynthConfig;
use rehab_core::Domain;

use crate::CliError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub notes: Option<PathBuf>,
    pub demographics: Option<PathBuf>,
    pub cohort: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub patterns: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeSettings {
    pub mcid_factor: f64,
}

impl Default for OutcomeSettings {
    fn default() -> Self {
        OutcomeSettings {
            mcid_factor: rehab_core::outcomes::DEFAULT_MCID_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub kinds: Vec<ModelKind>,
    pub domains: Vec<Domain>,
    pub stages: Vec<Stage>,
    pub folds: usize,
    pub oversample: bool,
    pub threshold: f64,
    pub weighting: Weighting,
    pub lr: LrParams,
    pub svm: SvmParams,
    pub adb: AdbParams,
    pub gb: GbParams,
    pub rf: RfParams,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            kinds: ModelKind::ALL.to_vec(),
            domains: Domain::ALL.to_vec(),
            stages: Stage::ALL.to_vec(),
            folds: 3,
            oversample: true,
            threshold: 0.5,
            weighting: Weighting::InverseFrequency,
            lr: LrParams::default(),
            svm: SvmParams::default(),
            adb: AdbParams::default(),
            gb: GbParams::default(),
            rf: RfParams::default(),
        }
    }
}

impl ModelSettings {
    pub fn spec(&self, kind: ModelKind, seed: u64) -> ModelSpec {
        let hyperparameters = match kind {
            ModelKind::Lr => Hyperparameters::Lr(self.lr),
            ModelKind::Svm => Hyperparameters::Svm(self.svm),
            ModelKind::Adb => Hyperparameters::Adb(self.adb),
            ModelKind::Gb => Hyperparameters::Gb(self.gb),
            ModelKind::Rf => Hyperparameters::Rf(self.rf),
        };
        ModelSpec { hyperparameters, seed }
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            k: self.folds,
            oversample: self.oversample,
            threshold: self.threshold,
            weighting: self.weighting,
            ..CvConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub inputs: Inputs,
    pub binning: BinningConfig,
    pub outcomes: OutcomeSettings,
    pub screen: ScreenConfig,
    pub models: ModelSettings,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: DEFAULT_SEED,
            out: None,
            inputs: Inputs::default(),
            binning: BinningConfig::default(),
            outcomes: OutcomeSettings::default(),
            screen: ScreenConfig::default(),
            models: ModelSettings::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = PipelineConfig::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.notes,
            &mut i.demographics,
            &mut i.cohort,
            &mut i.lexicon,
            &mut i.patterns,
        ] {
            fix(p);
        }
        fix(&mut self.out);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.outcomes.mcid_factor > 0.0 && self.outcomes.mcid_factor.is_finite()) {
            return bad(format!(
                "outcomes.mcid_factor must be positive, got {}",
                self.outcomes.mcid_factor
            ));
        }
        let t = self.screen.p_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return bad(format!("screen.p_threshold must be in (0, 1], got {t}"));
        }
        if !(self.screen.level > 0.0 && self.screen.level < 1.0) {
            return bad(format!("screen.level must be in (0, 1), got {}", self.screen.level));
        }
        if self.binning.window_days < 0 || self.binning.month_days <= 0 {
            return bad("binning.window_days must be >= 0 and binning.month_days > 0".into());
        }
        if self.models.folds < 2 {
            return bad("models.folds must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.models.threshold) {
            return bad("models.threshold must be in [0, 1]".into());
        }
        for kind in &self.models.kinds {
            self.models
                .spec(*kind, 0)
                .hyperparameters
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.synth.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn cell_rule_name(&self) -> &'static str {
        match self.screen.cell_rule {
            CellRule::Observed => "observed",
            CellRule::Expected => "expected",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn nested_sections_parse() {
        let cfg = PipelineConfig::from_toml_str(
            "seed = 7\n[screen]\ncell_rule = \"expected\"\n[models]\nkinds = [\"RF\"]\n[models.rf]\nn_trees = 10\n[synth]\nn_patients = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.screen.cell_rule, CellRule::Expected);
        assert_eq!(cfg.models.kinds, vec![ModelKind::Rf]);
        assert_eq!(cfg.models.rf.n_trees, 10);
        assert_eq!(cfg.synth.n_patients, 5);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "[outcomes]\nmcid_factor = 0.0",
            "[screen]\np_threshold = 1.5",
            "[models]\nfolds = 1",
            "[models.gb]\nlearning_rate = 3.0",
            "bogus = 1",
        ] {
            assert!(
                matches!(PipelineConfig::from_toml_str(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }
}
