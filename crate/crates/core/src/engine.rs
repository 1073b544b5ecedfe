//! A single entry point over the imputation engines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impute_fcs::{fcs_hetero_impute, fcs_homo_impute, fcs_norm_impute, FcsSpec, PredictorMatrix};
use crate::impute_jm::{jm_gl_impute, jm_norm_impute, ChainSpec, ImputationResult};
use crate::linalg::Matrix;
use crate::mechanisms::Dataset;
use crate::rand_dist::RngSeed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    JmGl,
    JmNorm,
    FcsHomo,
    FcsHetero,
    FcsNorm,
    /// Imputations produced outside this crate.
    External,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::JmGl => "jm_gl",
            EngineKind::JmNorm => "jm_norm",
            EngineKind::FcsHomo => "fcs_homo",
            EngineKind::FcsHetero => "fcs_hetero",
            EngineKind::FcsNorm => "fcs_norm",
            EngineKind::External => "external",
        }
    }

    /// Whether the engine models the cluster structure.
    pub fn uses_k(self) -> bool {
        matches!(self, EngineKind::JmGl | EngineKind::FcsHomo | EngineKind::FcsHetero)
    }
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "jm_gl" => EngineKind::JmGl,
            "jm_norm" => EngineKind::JmNorm,
            "fcs_homo" => EngineKind::FcsHomo,
            "fcs_hetero" => EngineKind::FcsHetero,
            "fcs_norm" => EngineKind::FcsNorm,
            "external" => EngineKind::External,
            other => return Err(Error::Config(format!("unknown imputation engine '{other}'"))),
        };
        Ok(kind)
    }
}

/// Optional overrides of the per-engine chain lengths.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EngineOptions {
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub l: Option<usize>,
    pub predictors: Option<PredictorMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Engine {
    JmGl(ChainSpec),
    JmNorm(ChainSpec),
    FcsHomo(FcsSpec),
    FcsHetero(FcsSpec),
    FcsNorm(FcsSpec),
    External(Vec<Matrix>),
}

impl Engine {
    /// Engine of the given kind with its default chain lengths.
    pub fn new(kind: EngineKind, k: usize, m: usize, opts: &EngineOptions) -> Result<Self> {
        let chain = |mut spec: ChainSpec| {
            if let Some(b) = opts.burn_in {
                spec.burn_in = b;
            }
            if let Some(t) = opts.thin {
                spec.thin = t;
            }
            spec
        };
        let fcs = |mut spec: FcsSpec| {
            if let Some(l) = opts.l {
                spec.l = l;
            }
            spec.predictors = opts.predictors.clone();
            spec
        };
        Ok(match kind {
            EngineKind::JmGl => Engine::JmGl(chain(ChainSpec::jm_gl(k, m))),
            EngineKind::JmNorm => Engine::JmNorm(chain(ChainSpec::jm_norm(m))),
            EngineKind::FcsHomo => Engine::FcsHomo(fcs(FcsSpec::clustered(k, m))),
            EngineKind::FcsHetero => Engine::FcsHetero(fcs(FcsSpec::clustered(k, m))),
            EngineKind::FcsNorm => Engine::FcsNorm(fcs(FcsSpec::norm(m))),
            EngineKind::External => {
                return Err(Error::Config(
                    "external imputations must be loaded, not constructed".into(),
                ))
            }
        })
    }

    pub fn kind(&self) -> EngineKind {
        match self {
            Engine::JmGl(_) => EngineKind::JmGl,
            Engine::JmNorm(_) => EngineKind::JmNorm,
            Engine::FcsHomo(_) => EngineKind::FcsHomo,
            Engine::FcsHetero(_) => EngineKind::FcsHetero,
            Engine::FcsNorm(_) => EngineKind::FcsNorm,
            Engine::External(_) => EngineKind::External,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Engine::JmGl(s) | Engine::JmNorm(s) => s.m,
            Engine::FcsHomo(s) | Engine::FcsHetero(s) | Engine::FcsNorm(s) => s.m,
            Engine::External(c) => c.len(),
        }
    }

    /// Same engine with `k` classes; structure-blind engines are unchanged.
    pub fn with_k(&self, k: usize) -> Engine {
        match self {
            Engine::JmGl(s) => Engine::JmGl(ChainSpec { k, ..s.clone() }),
            Engine::FcsHomo(s) => Engine::FcsHomo(FcsSpec { k, ..s.clone() }),
            Engine::FcsHetero(s) => Engine::FcsHetero(FcsSpec { k, ..s.clone() }),
            other => other.clone(),
        }
    }

    /// Same engine producing `m` completed datasets.
    pub fn with_m(&self, m: usize) -> Result<Engine> {
        Ok(match self {
            Engine::JmGl(s) => Engine::JmGl(ChainSpec { m, ..s.clone() }),
            Engine::JmNorm(s) => Engine::JmNorm(ChainSpec { m, ..s.clone() }),
            Engine::FcsHomo(s) => Engine::FcsHomo(FcsSpec { m, ..s.clone() }),
            Engine::FcsHetero(s) => Engine::FcsHetero(FcsSpec { m, ..s.clone() }),
            Engine::FcsNorm(s) => Engine::FcsNorm(FcsSpec { m, ..s.clone() }),
            Engine::External(c) => {
                if m > c.len() {
                    return Err(Error::invalid(format!(
                        "only {} external imputations available",
                        c.len()
                    )));
                }
                Engine::External(c[..m].to_vec())
            }
        })
    }

    pub fn impute(&self, data: &Dataset, seed: RngSeed) -> Result<ImputationResult> {
        match self {
            Engine::JmGl(s) => jm_gl_impute(data, s, seed),
            Engine::JmNorm(s) => jm_norm_impute(data, s, seed),
            Engine::FcsHomo(s) => fcs_homo_impute(data, s, seed),
            Engine::FcsHetero(s) => fcs_hetero_impute(data, s, seed),
            Engine::FcsNorm(s) => fcs_norm_impute(data, s, seed),
            Engine::External(copies) => {
                for c in copies {
                    if c.nrows() != data.n() || c.ncols() != data.p() {
                        return Err(Error::DimensionMismatch {
                            expected: data.n() * data.p(),
                            got: c.nrows() * c.ncols(),
                        });
                    }
                    if c.as_slice().iter().any(|v| !v.is_finite()) {
                        return Err(Error::invalid("external imputation contains missing values"));
                    }
                }
                Ok(ImputationResult {
                    completed: copies.clone(),
                    diagnostics: Vec::new(),
                })
            }
        }
    }
}
