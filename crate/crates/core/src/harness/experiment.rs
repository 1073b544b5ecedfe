//! Replicated simulation experiments: generate, amputate, impute, cluster,
//! pool and score against the generating labels.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::{self, ClustererSpec};
use crate::engine::{Engine, EngineKind, EngineOptions};
use crate::error::{Error, Result};
use crate::mechanisms::{ampute, MechanismKind, MechanismSpec};
use crate::pooling::{ari, pool};
use crate::rand_dist::RngSeed;

use super::io::{format_value, load_imputations};
use super::sim::{ModelId, SimModelSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub model: ModelId,
    /// `None` clusters the complete data directly.
    pub mechanism: Option<MechanismSpec>,
    pub engine: EngineKind,
    pub m: usize,
    pub engine_options: EngineOptions,
    pub clusterer: ClustererSpec,
    pub replicates: usize,
    pub seed: u64,
    /// Bootstrap pairs per completed dataset for the instability; 0 skips it.
    pub instability_rounds: usize,
    /// Also report single imputation: the clustering of the first completed
    /// dataset alone.
    pub report_single: bool,
    /// Root of `replicate_<r>/imputation_<m>.csv` for the external engine.
    pub external_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Defaults for a model: 20 imputations, mixture clustering with the
    /// generating covariance structure and number of clusters, 30 replicates.
    pub fn new(model: ModelId, mechanism: Option<MechanismSpec>, engine: EngineKind) -> Self {
        let sim = SimModelSpec::new(model);
        ExperimentSpec {
            model,
            mechanism,
            engine,
            m: 20,
            engine_options: EngineOptions::default(),
            clusterer: ClustererSpec::mixture(sim.k(), sim.constraint()),
            replicates: 30,
            seed: 1,
            instability_rounds: 0,
            report_single: false,
            external_dir: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if self.engine == EngineKind::External && self.external_dir.is_none() {
            return Err(Error::Config("the external engine needs external_dir".into()));
        }
        Ok(())
    }
}

/// Name used in result tables for a mechanism.
pub fn mechanism_name(mechanism: Option<&MechanismSpec>) -> String {
    match mechanism.map(|m| m.kind) {
        None => "none".into(),
        Some(MechanismKind::Mcar) => "mcar".into(),
        Some(MechanismKind::Mar { driver_col: 0 }) => "mar1".into(),
        Some(MechanismKind::Mar { driver_col: 7 }) => "mar2".into(),
        Some(MechanismKind::Mar { driver_col }) => format!("mar_col{}", driver_col + 1),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub replicate: usize,
    pub engine: String,
    pub mechanism: String,
    pub tau: f64,
    pub clusterer: String,
    pub k: usize,
    pub ari: Option<f64>,
    pub total_instability: Option<f64>,
    pub status: String,
}

/// Number of successful replicates, median and interquartile range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub iqr: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarize an empty sample"));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(Summary {
        count: s.len(),
        median: quantile(&s, 0.5),
        iqr: quantile(&s, 0.75) - quantile(&s, 0.25),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResults {
    /// Sorted by replicate, multiple imputation before single imputation.
    pub rows: Vec<ResultRow>,
}

impl ExperimentResults {
    /// ARI summary per engine label, in order of first appearance.
    pub fn summaries(&self) -> Vec<(String, Summary)> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.engine) {
                names.push(r.engine.clone());
            }
        }
        names
            .into_iter()
            .filter_map(|name| {
                let v: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.engine == name)
                    .filter_map(|r| r.ari)
                    .collect();
                summarize(&v).ok().map(|s| (name, s))
            })
            .collect()
    }

    pub fn summary_for(&self, engine: &str) -> Option<Summary> {
        self.summaries().into_iter().find(|(n, _)| n == engine).map(|(_, s)| s)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "replicate",
            "engine",
            "mechanism",
            "tau",
            "clusterer",
            "k",
            "ari",
            "total_instability",
            "status",
        ])?;
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), format_value);
        for r in &self.rows {
            wtr.write_record([
                r.replicate.to_string(),
                r.engine.clone(),
                r.mechanism.clone(),
                format_value(r.tau),
                r.clusterer.clone(),
                r.k.to_string(),
                opt(r.ari),
                opt(r.total_instability),
                r.status.clone(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["engine", "count", "median_ari", "iqr_ari"])?;
        for (name, s) in self.summaries() {
            wtr.write_record([
                name,
                s.count.to_string(),
                format_value(s.median),
                format_value(s.iqr),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Run every replicate of `spec`. Imputation failures are recorded with
/// status `chain_failure` and do not stop the sweep.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    spec.validate()?;
    let master = RngSeed(spec.seed);
    let per_replicate: Vec<Vec<ResultRow>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| run_replicate(spec, r, master.derive("replicate", r as u64)))
        .collect::<Result<_>>()?;
    Ok(ExperimentResults {
        rows: per_replicate.into_iter().flatten().collect(),
    })
}

fn run_replicate(spec: &ExperimentSpec, r: usize, seed: RngSeed) -> Result<Vec<ResultRow>> {
    let sim = SimModelSpec::new(spec.model);
    let full = sim.generate(&mut seed.derive("generate", 0).rng())?;
    let truth = full.ref_labels().cloned().expect("simulated data carry labels");
    let row = |engine: String, ari: Option<f64>, t: Option<f64>, status: &str| ResultRow {
        replicate: r,
        engine,
        mechanism: mechanism_name(spec.mechanism.as_ref()),
        tau: spec.mechanism.map_or(0.0, |m| m.tau),
        clusterer: spec.clusterer.method.name().into(),
        k: spec.clusterer.k,
        ari,
        total_instability: t,
        status: status.into(),
    };

    let Some(mechanism) = spec.mechanism else {
        let res = pool(
            std::slice::from_ref(full.values()),
            &spec.clusterer,
            spec.instability_rounds,
            seed.derive("pool", 0),
        )?;
        let part = &res.copies[0];
        return Ok(vec![row("full".into(), Some(ari(part, &truth)?), res.total_instability, "ok")]);
    };

    let data = ampute(&full, &mechanism, &mut seed.derive("ampute", 0).rng())?.without_ref_labels();
    let engine = match spec.engine {
        EngineKind::External => {
            let dir = spec
                .external_dir
                .as_ref()
                .expect("validated")
                .join(format!("replicate_{r}"));
            Engine::External(load_imputations(&dir)?).with_m(spec.m)?
        }
        kind => Engine::new(kind, spec.clusterer.k, spec.m, &spec.engine_options)?,
    };
    let name = spec.engine.name().to_string();
    let imputed = match engine.impute(&data, seed.derive("impute", 0)) {
        Ok(res) => res,
        Err(e) if e.is_chain_failure() => {
            log::warn!("replicate {r}: {e}");
            let mut rows = vec![row(name.clone(), None, None, "chain_failure")];
            if spec.report_single {
                rows.push(row(format!("{name}_si"), None, None, "chain_failure"));
            }
            return Ok(rows);
        }
        Err(e) => return Err(e),
    };
    let res = pool(
        &imputed.completed,
        &spec.clusterer,
        spec.instability_rounds,
        seed.derive("pool", 0),
    )?;
    let mut rows = vec![row(
        name.clone(),
        Some(ari(&res.partition, &truth)?),
        res.total_instability,
        "ok",
    )];
    if spec.report_single {
        // pooling clusters copy 0 with the same stream an m = 1 run would use
        let single = &res.copies[0];
        let v = res.per_copy_instability.as_ref().map(|v| v[0]);
        rows.push(row(format!("{name}_si"), Some(ari(single, &truth)?), v, "ok"));
    }
    Ok(rows)
}

/// Cluster a complete matrix as an experiment would; exposed for checks that
/// labels never influence the pipeline.
pub fn cluster_only(
    data: &crate::linalg::Matrix,
    spec: &ClustererSpec,
    seed: RngSeed,
) -> Result<crate::gmm::Partition> {
    clustering::cluster(spec, data, &mut seed.rng())
}
