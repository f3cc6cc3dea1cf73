//! Run configuration: a single TOML file, every field optional with the
//! defaults below.
//!
//! ```toml
//! d = 10000            # ambient dimension
//! n = 1000             # samples per run
//! s = 5.0              # expected nonzeros per sample (power law scale)
//! alpha = 1.5          # power-law exponent
//! sigma = 0.0          # label noise level, in [0, 1]
//! c_k = 10.0           # threshold target: smallest k with n * p_k <= c_k
//! beta_decay = 0.1     # ground truth beta*_i = i^(-beta_decay)
//! n_seeds = 50         # seeds 1..=n_seeds unless `seeds` is given
//! # seeds = [3, 14]    # explicit seed list (overrides n_seeds)
//! # mc_draws = 100000  # enable Monte Carlo loss validation
//! # explicit_p = [1.0, 0.5, 0.25]  # use these probabilities instead of
//! #                                # the power law (length must equal d)
//! # tol_rec = 1e-6     # recovery threshold override
//! sv_rel_tol = 1e-12   # solver rank cutoff, relative
//! output_dir = "out"
//!
//! [ood]
//! mode = "singletons"  # singletons | explicit | none
//! t = 2                # forced-set size for mode = "singletons"
//! # indices = [40, 71] # forced features for mode = "explicit"
//!
//! [sweep]
//! alphas = [1.0, 1.5, 2.0, 2.5]
//! sigmas = [0.0, 0.05, 0.1]
//! ```
//!
//! Environment overrides, applied by the CLI only: `LONGTAIL_OUTPUT_DIR`
//! replaces `output_dir`, `LONGTAIL_THREADS` caps the worker pool.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::solver::DEFAULT_SV_REL_TOL;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum OodMode {
    /// Force `t` random tail features that appeared exactly once.
    Singletons { t: usize },
    /// Force a fixed feature list.
    Explicit { indices: Vec<u32> },
    /// Skip the out-of-distribution evaluation.
    None,
}

impl Default for OodMode {
    fn default() -> Self {
        OodMode::Singletons { t: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
}

fn default_alphas() -> Vec<f64> {
    vec![1.0, 1.5, 2.0, 2.5]
}

fn default_sigmas() -> Vec<f64> {
    vec![0.0, 0.05, 0.1]
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid { alphas: default_alphas(), sigmas: default_sigmas() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub d: usize,
    pub n: usize,
    pub s: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub c_k: f64,
    pub beta_decay: f64,
    pub n_seeds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit_p: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_rec: Option<f64>,
    pub sv_rel_tol: f64,
    pub output_dir: String,
    pub ood: OodMode,
    pub sweep: SweepGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d: 10_000,
            n: 1_000,
            s: 5.0,
            alpha: 1.5,
            sigma: 0.0,
            c_k: 10.0,
            beta_decay: 0.1,
            n_seeds: 50,
            seeds: None,
            mc_draws: None,
            explicit_p: None,
            tol_rec: None,
            sv_rel_tol: DEFAULT_SV_REL_TOL,
            output_dir: "out".to_string(),
            ood: OodMode::default(),
            sweep: SweepGrid::default(),
        }
    }
}

fn config_err<T>(message: impl Into<String>) -> Result<T, HarnessError> {
    Err(HarnessError::Config(message.into()))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.d == 0 {
            return config_err("d must be at least 1");
        }
        if self.n == 0 {
            return config_err("n must be at least 1");
        }
        if !self.s.is_finite() || self.s <= 0.0 {
            return config_err(format!("s must be positive and finite, got {}", self.s));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return config_err(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if !self.sigma.is_finite() || !(0.0..=1.0).contains(&self.sigma) {
            return config_err(format!("sigma must lie in [0, 1], got {}", self.sigma));
        }
        if !self.c_k.is_finite() || self.c_k <= 0.0 {
            return config_err(format!("c_k must be positive and finite, got {}", self.c_k));
        }
        if !self.beta_decay.is_finite() {
            return config_err("beta_decay must be finite");
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return config_err("seeds list must not be empty");
            }
            let mut sorted = seeds.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return config_err("seeds list must not contain duplicates");
            }
        } else if self.n_seeds == 0 {
            return config_err("n_seeds must be at least 1");
        }
        if let Some(draws) = self.mc_draws {
            if draws < 2 {
                return config_err("mc_draws must be at least 2");
            }
        }
        if let Some(p) = &self.explicit_p {
            if p.len() != self.d {
                return config_err(format!(
                    "explicit_p has {} entries but d = {}",
                    p.len(),
                    self.d
                ));
            }
        }
        if let Some(tol) = self.tol_rec {
            if !tol.is_finite() || tol < 0.0 {
                return config_err(format!("tol_rec must be nonnegative, got {tol}"));
            }
        }
        if !self.sv_rel_tol.is_finite() || self.sv_rel_tol <= 0.0 || self.sv_rel_tol >= 1.0 {
            return config_err(format!("sv_rel_tol must lie in (0, 1), got {}", self.sv_rel_tol));
        }
        if self.output_dir.is_empty() {
            return config_err("output_dir must not be empty");
        }
        match &self.ood {
            OodMode::Singletons { t } => {
                if *t == 0 {
                    return config_err("ood t must be at least 1");
                }
            }
            OodMode::Explicit { indices } => {
                if indices.is_empty() {
                    return config_err("ood explicit indices must not be empty");
                }
                for &i in indices {
                    if i < 1 || i as usize > self.d {
                        return config_err(format!("ood index {i} outside 1..={}", self.d));
                    }
                }
            }
            OodMode::None => {}
        }
        if self.sweep.alphas.is_empty() || self.sweep.sigmas.is_empty() {
            return config_err("sweep grid must have at least one alpha and one sigma");
        }
        for &a in &self.sweep.alphas {
            if !a.is_finite() || a <= 0.0 {
                return config_err(format!("sweep alpha must be positive and finite, got {a}"));
            }
        }
        for &s in &self.sweep.sigmas {
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return config_err(format!("sweep sigma must lie in [0, 1], got {s}"));
            }
        }
        Ok(())
    }

    /// The seed list a run executes: the explicit list, or `1..=n_seeds`.
    pub fn effective_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(seeds) => seeds.clone(),
            None => (1..=self.n_seeds as u64).collect(),
        }
    }

    /// Recovery tolerance at a noise level, honoring the config override.
    pub fn recovery_tolerance(&self, sigma: f64) -> f64 {
        self.tol_rec.unwrap_or_else(|| crate::evaluation::default_recovery_tolerance(sigma))
    }
}
