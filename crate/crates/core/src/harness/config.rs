//! Flat TOML experiment configuration.
//!
//! ```toml
//! model_id = "I"              # I..XI
//! mechanism = "mcar"          # none | mcar | mar1 | mar2
//! tau = 0.4
//! engine = "fcs_homo"         # jm_gl | jm_norm | fcs_homo | fcs_hetero | fcs_norm | external
//! clusterer = "mixture"       # mixture | kmeans | pam | hc
//! k = 3                       # defaults to the model's cluster count
//! constraint = "homo"         # mixture only; defaults to the model's structure
//! m = 20
//! l = 200                     # FCS iterations
//! burn_in = 100               # JM chains
//! thin = 20
//! replicates = 30
//! seed = 1
//! instability_rounds = 0
//! report_single = false
//! results_path = "results.csv"
//! summary_path = "summary.csv"
//! external_dir = "imputations"
//! predictors_path = "predictors.csv"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::clustering::{ClustererSpec, Method};
use crate::engine::EngineKind;
use crate::error::{Error, Result};
use crate::gmm::Constraint;
use crate::mechanisms::MechanismSpec;

use super::experiment::ExperimentSpec;
use super::io::load_predictor_matrix;
use super::sim::{ModelId, SimModelSpec};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model_id: String,
    pub mechanism: Option<String>,
    pub tau: Option<f64>,
    pub engine: String,
    pub clusterer: Option<String>,
    pub k: Option<usize>,
    pub constraint: Option<String>,
    pub m: Option<usize>,
    pub l: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub instability_rounds: Option<usize>,
    pub report_single: Option<bool>,
    pub results_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    pub external_dir: Option<PathBuf>,
    pub predictors_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Build the experiment; relative paths resolve against `base`.
    pub fn to_spec(&self, base: &Path) -> Result<ExperimentSpec> {
        let model: ModelId = self.model_id.parse()?;
        let sim = SimModelSpec::new(model);
        let mechanism = match self.mechanism.as_deref().unwrap_or("none") {
            "none" | "full" => None,
            name => {
                let tau = self
                    .tau
                    .ok_or_else(|| Error::Config(format!("mechanism '{name}' needs tau")))?;
                Some(match name {
                    "mcar" => MechanismSpec::mcar(tau),
                    "mar1" => MechanismSpec::mar1(tau),
                    "mar2" => MechanismSpec::mar2(tau),
                    other => return Err(Error::Config(format!("unknown mechanism '{other}'"))),
                })
            }
        };
        let engine: EngineKind = self.engine.parse()?;
        let method: Method = self
            .clusterer
            .as_deref()
            .unwrap_or("mixture")
            .parse()
            .map_err(|e: Error| Error::Config(e.to_string()))?;
        let k = self.k.unwrap_or(sim.k());
        let mut clusterer = ClustererSpec::new(method, k);
        clusterer.constraint = match &self.constraint {
            Some(c) => c.parse::<Constraint>().map_err(|e| Error::Config(e.to_string()))?,
            None => sim.constraint(),
        };
        clusterer.validate().map_err(|e| Error::Config(e.to_string()))?;

        let mut spec = ExperimentSpec::new(model, mechanism, engine);
        spec.clusterer = clusterer;
        if let Some(m) = self.m {
            spec.m = m;
        }
        spec.engine_options.l = self.l;
        spec.engine_options.burn_in = self.burn_in;
        spec.engine_options.thin = self.thin;
        if let Some(p) = &self.predictors_path {
            spec.engine_options.predictors = Some(load_predictor_matrix(&base.join(p))?);
        }
        if let Some(r) = self.replicates {
            spec.replicates = r;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        spec.instability_rounds = self.instability_rounds.unwrap_or(0);
        spec.report_single = self.report_single.unwrap_or(false);
        spec.external_dir = self.external_dir.as_ref().map(|d| base.join(d));
        Ok(spec)
    }
}
