//! Experiment configuration files (TOML).
//!
//! ```toml
//! n_list = [400, 800]
//! k_exponent = 0.7
//! trials = 10
//! base_seed = 42
//! epsilon_band = "auto"
//! output_dir = "out"
//!
//! [[spikes]]
//! re = 2.0
//! im = 0.0
//! multiplicity = 1
//! ```

use std::path::{Path, PathBuf};

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{KSchedule, LemmaSuiteConfig, StudyConfig, TrialOptions};
use crate::matrix_model::{EntryDistribution, default_k_schedule};
use crate::outlier::NewtonOptions;
use crate::perturbation::{Spike, SpikeSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeEntry {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    #[serde(default = "one")]
    pub multiplicity: usize,
}

fn one() -> usize {
    1
}

/// `"auto"` or a positive number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSetting {
    Value(f64),
    Keyword(String),
}

impl Default for EpsilonSetting {
    fn default() -> Self {
        EpsilonSetting::Keyword("auto".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSection {
    pub n: Option<usize>,
    pub k: Option<usize>,
    #[serde(default = "two")]
    pub z_re: f64,
    #[serde(default)]
    pub z_im: f64,
    #[serde(default = "dz_default")]
    pub dz_re: f64,
    #[serde(default)]
    pub dz_im: f64,
    #[serde(default = "rows_default")]
    pub rows: usize,
    #[serde(default = "seeds_default")]
    pub seeds: usize,
}

impl Default for LemmaSection {
    fn default() -> Self {
        Self { n: None, k: None, z_re: 2.0, z_im: 0.0, dz_re: 0.01, dz_im: 0.0, rows: 2, seeds: 20 }
    }
}

fn two() -> f64 {
    2.0
}
fn dz_default() -> f64 {
    0.01
}
fn rows_default() -> usize {
    2
}
fn seeds_default() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_list: Vec<usize>,
    pub k_exponent: Option<f64>,
    pub k_list: Option<Vec<usize>>,
    pub spikes: Vec<SpikeEntry>,
    #[serde(default)]
    pub non_normality_tau: f64,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub distribution: EntryDistribution,
    #[serde(default)]
    pub epsilon_band: EpsilonSetting,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Test hook: replace the random matrix by zero.
    #[serde(default)]
    pub zero_matrix: bool,
    /// Run the dense eigensolver in every trial for the outlier-set statistics.
    #[serde(default = "yes")]
    pub spectrum: bool,
    #[serde(default)]
    pub lemmas: LemmaSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn spike_spec(&self) -> Result<SpikeSpec> {
        let spikes = self.spikes.iter().map(|s| Spike::new(c64::new(s.re, s.im), s.multiplicity)).collect();
        SpikeSpec::new(spikes, self.non_normality_tau).map_err(|e| match e {
            Error::Config(msg) => field_err("spikes", msg),
            other => other,
        })
    }

    pub fn k_schedule(&self) -> Result<KSchedule> {
        match (&self.k_exponent, &self.k_list) {
            (Some(_), Some(_)) => Err(field_err("k_list", "give either k_exponent or k_list, not both")),
            (Some(a), None) => Ok(KSchedule::Exponent(*a)),
            (None, Some(ks)) => Ok(KSchedule::List(ks.clone())),
            (None, None) => Ok(KSchedule::Exponent(0.7)),
        }
    }

    pub fn epsilon(&self) -> Result<Option<f64>> {
        match &self.epsilon_band {
            EpsilonSetting::Value(v) if *v > 0.0 && v.is_finite() => Ok(Some(*v)),
            EpsilonSetting::Value(v) => Err(field_err("epsilon_band", format!("must be positive, got {v}"))),
            EpsilonSetting::Keyword(k) if k == "auto" => Ok(None),
            EpsilonSetting::Keyword(k) => Err(field_err("epsilon_band", format!("expected \"auto\" or a number, got {k:?}"))),
        }
    }

    pub fn trial_options(&self) -> Result<TrialOptions> {
        Ok(TrialOptions {
            zero_matrix: self.zero_matrix,
            epsilon_band: self.epsilon()?,
            newton: NewtonOptions::default(),
            with_spectrum: self.spectrum,
            health_norm_cap: 100.0,
        })
    }

    pub fn study_config(&self) -> Result<StudyConfig> {
        let study = StudyConfig {
            n_list: self.n_list.clone(),
            k_schedule: self.k_schedule()?,
            distribution: self.distribution,
            spike_spec: self.spike_spec()?,
            trials: self.trials,
            base_seed: self.base_seed,
            options: self.trial_options()?,
        };
        study.validate().map_err(|e| match e {
            Error::Config(msg) if !msg.starts_with("field") => field_err("n_list/k", msg),
            other => other,
        })?;
        Ok(study)
    }

    pub fn lemma_config(&self) -> Result<LemmaSuiteConfig> {
        let l = &self.lemmas;
        let n = l.n.unwrap_or(2000);
        let k = match (l.k, &self.k_schedule()?) {
            (Some(k), _) => k,
            (None, KSchedule::Exponent(a)) => default_k_schedule(n, *a)?,
            (None, KSchedule::List(_)) => default_k_schedule(n, 0.7)?,
        };
        let z = c64::new(l.z_re, l.z_im);
        let zn = z + c64::new(l.dz_re, l.dz_im);
        if z.norm() <= 1.0 || zn.norm() <= 1.0 {
            return Err(field_err("lemmas.z_re", "z and z + dz must lie outside the unit disk"));
        }
        if l.seeds == 0 {
            return Err(field_err("lemmas.seeds", "must be positive"));
        }
        if l.rows == 0 || 2 * l.rows > n {
            return Err(field_err("lemmas.rows", format!("must lie in 1..={}", n / 2)));
        }
        crate::matrix_model::SparseModelConfig::new(n, k, self.distribution, self.base_seed)
            .map_err(|e| field_err("lemmas", e))?;
        Ok(LemmaSuiteConfig {
            n,
            sparsity_k: k,
            distribution: self.distribution,
            z,
            dz: c64::new(l.dz_re, l.dz_im),
            rows: l.rows,
            seeds: l.seeds,
            base_seed: self.base_seed,
            zero_matrix: self.zero_matrix,
        })
    }

    /// Every cross-field rule that the downstream modules enforce.
    pub fn validate(&self) -> Result<()> {
        if self.spikes.is_empty() {
            return Err(field_err("spikes", "at least one spike is required"));
        }
        if self.trials == 0 {
            return Err(field_err("trials", "must be positive"));
        }
        if !(self.non_normality_tau >= 0.0) {
            return Err(field_err("non_normality_tau", "must be non-negative"));
        }
        if let Some(a) = self.k_exponent
            && !(a > 0.0 && a < 1.0)
        {
            return Err(field_err("k_exponent", format!("must lie in (0, 1), got {a}")));
        }
        self.study_config()?;
        self.lemma_config()?;
        Ok(())
    }
}
