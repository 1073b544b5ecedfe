//! Joint-modelling multiple imputation by data augmentation.
//!
//! The general location engine treats the cluster variable as a latent
//! categorical with conditionally Gaussian continuous variables and a shared
//! covariance. Each iteration alternates
//!
//! - an imputation step drawing every row's class from its observed
//!   coordinates and then its missing coordinates from the within-class
//!   conditional normal, and
//! - a posterior step drawing the weights from a Dirichlet, the covariance
//!   from an inverse Wishart and the class means from normals.
//!
//! With one class the model is a single multivariate normal.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gmm::{self, draw_class, Constraint, Covariances, MixtureParams, PatternModel};
use crate::linalg::{add_outer_lower, mirror_lower, Cholesky, Matrix};
use crate::mechanisms::Dataset;
use crate::rand_dist::{
    draw_dirichlet, inverse_wishart_from_factor, mvnormal_row_major, ChainRng, CovMatrix, RngSeed,
};

/// Length and save schedule of a data-augmentation chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    /// Number of completed datasets to save.
    pub m: usize,
    /// Iterations before the first save.
    pub burn_in: usize,
    /// Iterations between consecutive saves.
    pub thin: usize,
    /// Number of latent classes.
    pub k: usize,
    /// Dirichlet prior on the class weights; defaults to the initial
    /// estimated class proportions.
    pub alpha: Option<Vec<f64>>,
}

impl ChainSpec {
    /// General location defaults: 100 burn-in iterations, 20 between saves.
    pub fn jm_gl(k: usize, m: usize) -> Self {
        ChainSpec {
            m,
            burn_in: 100,
            thin: 20,
            k,
            alpha: None,
        }
    }

    /// Single normal defaults: 500 burn-in iterations, 100 between saves.
    pub fn jm_norm(m: usize) -> Self {
        ChainSpec {
            m,
            burn_in: 500,
            thin: 100,
            k: 1,
            alpha: None,
        }
    }

    /// Iterations run in total; copy `c` (from 1) is saved after
    /// `burn_in + thin * c` iterations.
    pub fn total_iterations(&self) -> usize {
        self.burn_in + self.thin * self.m
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("at least one imputation is required"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thinning interval must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::invalid("at least one class is required"));
        }
        if let Some(a) = &self.alpha {
            if a.len() != self.k {
                return Err(Error::DimensionMismatch {
                    expected: self.k,
                    got: a.len(),
                });
            }
        }
        Ok(())
    }
}

/// Parameter summary recorded after each iteration of a chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Trace of each stored covariance (one entry when shared).
    pub cov_traces: Vec<f64>,
}

impl IterationRecord {
    pub(crate) fn from_params(iteration: usize, params: &MixtureParams) -> Self {
        IterationRecord {
            iteration,
            weights: params.weights().to_vec(),
            means: params.means().to_vec(),
            cov_traces: params.cov_traces(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainTrace {
    pub chain: usize,
    pub records: Vec<IterationRecord>,
}

/// Completed datasets with the diagnostics of the chains that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ImputationResult {
    pub completed: Vec<Matrix>,
    pub diagnostics: Vec<ChainTrace>,
}

/// Rows grouped by missingness pattern, in order of first appearance.
pub(crate) struct PatternGroups {
    pub(crate) groups: Vec<(Vec<bool>, Vec<usize>)>,
}

impl PatternGroups {
    pub(crate) fn new(data: &Dataset) -> Self {
        let mut index: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
        let mut groups: Vec<(Vec<bool>, Vec<usize>)> = Vec::new();
        for i in 0..data.n() {
            let pattern = data.observed_row(i).to_vec();
            let g = *index.entry(pattern.clone()).or_insert_with(|| {
                groups.push((pattern, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(i);
        }
        PatternGroups { groups }
    }
}

/// Checks shared by every engine: each row has an observed cell and every
/// column at least one observed value.
pub(crate) fn validate_incomplete(data: &Dataset) -> Result<()> {
    if let Some(&i) = data.fully_missing_rows().first() {
        return Err(Error::invalid(format!("row {i} has no observed value")));
    }
    for j in 0..data.p() {
        if (0..data.n()).all(|i| !data.is_observed(i, j)) {
            return Err(Error::invalid(format!("column {j} has no observed value")));
        }
    }
    Ok(())
}

/// Missing cells replaced by the observed column means.
pub(crate) fn mean_imputed(data: &Dataset) -> Matrix {
    let (n, p) = (data.n(), data.p());
    let mut sums = vec![0.0; p];
    let mut counts = vec![0usize; p];
    for i in 0..n {
        for j in 0..p {
            if data.is_observed(i, j) {
                sums[j] += data.values().get(i, j);
                counts[j] += 1;
            }
        }
    }
    let mut z = data.values().clone();
    for i in 0..n {
        for j in 0..p {
            if !data.is_observed(i, j) {
                z.set(i, j, sums[j] / counts[j].max(1) as f64);
            }
        }
    }
    z
}

pub(crate) fn chain_failure(context: &str, e: Error) -> Error {
    match e {
        Error::ChainFailure(_) => e,
        other => Error::ChainFailure(format!("{context}: {other}")),
    }
}

/// Draw a class for every row of `z` (given its observed pattern) and fill
/// the missing coordinates from the class-conditional normal.
pub(crate) fn impute_step(
    params: &MixtureParams,
    patterns: &PatternGroups,
    z: &mut Matrix,
    labels: &mut [usize],
    rng: &mut ChainRng,
) -> Result<()> {
    let p = z.ncols();
    let mut scratch = vec![0.0; p];
    let mut probs = vec![0.0; params.k()];
    for (pattern, rows) in &patterns.groups {
        let model = PatternModel::new(params, pattern)?;
        for &i in rows {
            let row = z.row_mut(i);
            model.probabilities(row, &mut scratch, &mut probs);
            let w = draw_class(&probs, rng);
            labels[i] = w;
            model.draw_missing(row, w, rng);
        }
    }
    Ok(())
}

/// General location imputation with `spec.k` latent classes.
pub fn jm_gl_impute(data: &Dataset, spec: &ChainSpec, seed: RngSeed) -> Result<ImputationResult> {
    spec.validate()?;
    validate_incomplete(data)?;
    let (n, p, k) = (data.n(), data.p(), spec.k);
    if n <= p + k {
        return Err(Error::invalid(format!(
            "data augmentation needs n > p + k (n = {n}, p = {p}, k = {k})"
        )));
    }
    let df = (n - p) as f64;
    if !(df > p as f64 - 1.0) {
        return Err(Error::ChainFailure(format!(
            "residual degrees of freedom {df} too small for p = {p}"
        )));
    }
    let mut rng = seed.derive("chain", 0).rng();
    let patterns = PatternGroups::new(data);
    let mut z = mean_imputed(data);
    let mut params = gmm::em_fit(&z, k, Constraint::Homo, &mut rng)
        .map_err(|e| chain_failure("initial fit", e))?;
    let alpha = spec.alpha.clone().unwrap_or_else(|| params.weights().to_vec());
    if alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::ChainFailure("initial fit left an empty class".into()));
    }

    let mut labels = vec![0usize; n];
    let mut records = Vec::with_capacity(spec.total_iterations());
    let mut completed = Vec::with_capacity(spec.m);
    for t in 1..=spec.total_iterations() {
        impute_step(&params, &patterns, &mut z, &mut labels, &mut rng)
            .map_err(|e| chain_failure("imputation step", e))?;
        params = posterior_step(&z, &labels, k, &alpha, df, &mut rng)?;
        records.push(IterationRecord::from_params(t, &params));
        if t > spec.burn_in && (t - spec.burn_in).is_multiple_of(spec.thin) {
            debug_assert!(data.check_completion(&z));
            completed.push(z.clone());
        }
    }
    Ok(ImputationResult {
        completed,
        diagnostics: vec![ChainTrace { chain: 0, records }],
    })
}

/// Single multivariate normal imputation: the general location engine with
/// one class.
pub fn jm_norm_impute(data: &Dataset, spec: &ChainSpec, seed: RngSeed) -> Result<ImputationResult> {
    if spec.k != 1 {
        return Err(Error::invalid("the single normal model has exactly one class"));
    }
    jm_gl_impute(data, spec, seed)
}

/// Draw `θ ~ Dir(α + x)`, `Σ ~ W⁻¹(df, ε'ε)` and `μ_w ~ N(μ̂_w, Σ / x_w)`.
fn posterior_step(
    z: &Matrix,
    labels: &[usize],
    k: usize,
    alpha: &[f64],
    df: f64,
    rng: &mut ChainRng,
) -> Result<MixtureParams> {
    let p = z.ncols();
    let mut counts = vec![0usize; k];
    let mut means = vec![vec![0.0; p]; k];
    for (row, &w) in z.rows().zip(labels) {
        counts[w] += 1;
        for (m, x) in means[w].iter_mut().zip(row) {
            *m += x;
        }
    }
    if let Some(w) = counts.iter().position(|c| *c == 0) {
        return Err(Error::ChainFailure(format!("class {w} lost all its rows")));
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c as f64);
    }

    let conc: Vec<f64> = alpha.iter().zip(&counts).map(|(a, &c)| a + c as f64).collect();
    let weights = draw_dirichlet(&conc, rng)?;

    let mut scatter = vec![0.0; p * p];
    let mut resid = vec![0.0; p];
    for (row, &w) in z.rows().zip(labels) {
        for j in 0..p {
            resid[j] = row[j] - means[w][j];
        }
        add_outer_lower(&mut scatter, &resid, 1.0);
    }
    mirror_lower(&mut scatter, p);
    let factor = Cholesky::new(&scatter, p)
        .ok_or_else(|| Error::ChainFailure("residual cross-product matrix is singular".into()))?;
    let sigma = inverse_wishart_from_factor(df, &factor, rng).map_err(|e| chain_failure("covariance draw", e))?;

    let mut mu = Vec::with_capacity(k);
    let mut scaled = vec![0.0; p * p];
    for (w, mean) in means.iter().enumerate() {
        let c = counts[w] as f64;
        for (s, v) in scaled.iter_mut().zip(&sigma) {
            *s = v / c;
        }
        mu.push(mvnormal_row_major(mean, &scaled, rng).map_err(|e| chain_failure("mean draw", e))?);
    }
    MixtureParams::new(
        weights,
        mu,
        Covariances::Shared(CovMatrix::from_row_major_unchecked(p, sigma)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{ampute, MechanismSpec};
    use crate::rand_dist::std_normal;

    fn gaussian(n: usize, seed: u64) -> Dataset {
        let mut rng = RngSeed(seed).rng();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c = if i % 2 == 0 { -3.0 } else { 3.0 };
                vec![c + std_normal(&mut rng), std_normal(&mut rng), c + std_normal(&mut rng)]
            })
            .collect();
        Dataset::complete(Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    fn occupancy(labels: &[usize], k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        labels.iter().for_each(|&l| c[l] += 1);
        c
    }

    fn short(k: usize) -> ChainSpec {
        ChainSpec {
            m: 3,
            burn_in: 5,
            thin: 2,
            k,
            alpha: None,
        }
    }

    #[test]
    fn complete_data_is_returned_unchanged() {
        let data = gaussian(60, 1);
        let res = jm_gl_impute(&data, &short(2), RngSeed(2)).unwrap();
        assert_eq!(res.completed.len(), 3);
        for c in &res.completed {
            assert_eq!(c, data.values());
        }
        assert_eq!(res.diagnostics[0].records.len(), 11);
    }

    #[test]
    fn observed_cells_preserved_and_chain_valid() {
        let full = gaussian(200, 3);
        let data = ampute(&full, &MechanismSpec::mcar(0.3), &mut RngSeed(4).rng()).unwrap();
        let res = jm_gl_impute(&data, &short(2), RngSeed(5)).unwrap();
        for c in &res.completed {
            assert!(data.check_completion(c));
        }
        for r in &res.diagnostics[0].records {
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.weights.iter().all(|w| *w >= 0.0));
            assert!(r.cov_traces[0] > 0.0);
        }
    }

    #[test]
    fn one_class_general_location_equals_single_normal() {
        let full = gaussian(100, 6);
        let data = ampute(&full, &MechanismSpec::mcar(0.2), &mut RngSeed(7).rng()).unwrap();
        let a = jm_gl_impute(&data, &short(1), RngSeed(8)).unwrap();
        let b = jm_norm_impute(&data, &short(1), RngSeed(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn same_seed_same_result() {
        let full = gaussian(100, 9);
        let data = ampute(&full, &MechanismSpec::mcar(0.2), &mut RngSeed(10).rng()).unwrap();
        let a = jm_gl_impute(&data, &short(2), RngSeed(11)).unwrap();
        let b = jm_gl_impute(&data, &short(2), RngSeed(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn univariate_imputations_center_on_observed_mean() {
        let mut rng = RngSeed(12).rng();
        // the second column is independent noise, always observed
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| vec![2.0 + std_normal(&mut rng), std_normal(&mut rng)])
            .collect();
        let full = Dataset::complete(Matrix::from_rows(&rows).unwrap()).unwrap();
        let mut mask = vec![true; 800];
        for i in (0..400).step_by(4) {
            mask[2 * i] = false;
        }
        let data = Dataset::new(full.values().clone(), mask.clone()).unwrap();
        let obs_mean = (0..400).filter(|i| mask[2 * *i]).map(|i| full.values().get(i, 0)).sum::<f64>() / 300.0;
        let spec = ChainSpec {
            m: 200,
            burn_in: 20,
            thin: 5,
            k: 1,
            alpha: None,
        };
        let res = jm_norm_impute(&data, &spec, RngSeed(13)).unwrap();
        let mut total = 0.0;
        let mut count = 0.0;
        for c in &res.completed {
            for i in (0..400).step_by(4) {
                total += c.get(i, 0);
                count += 1.0;
            }
        }
        assert!((total / count - obs_mean).abs() < 0.05, "{} vs {obs_mean}", total / count);
    }

    #[test]
    fn collinear_columns_impute_on_the_line() {
        let mut rng = RngSeed(14).rng();
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                let x = std_normal(&mut rng);
                vec![x, 2.0 * x + 1.0 + 1e-6 * std_normal(&mut rng)]
            })
            .collect();
        let full = Dataset::complete(Matrix::from_rows(&rows).unwrap()).unwrap();
        let mut mask = vec![true; 600];
        mask[1] = false;
        let data = Dataset::new(full.values().clone(), mask).unwrap();
        let res = jm_norm_impute(&data, &short(1), RngSeed(15)).unwrap();
        let expected = 2.0 * full.values().get(0, 0) + 1.0;
        for c in &res.completed {
            assert!((c.get(0, 1) - expected).abs() < 1e-3, "{} vs {expected}", c.get(0, 1));
        }
    }

    #[test]
    fn too_few_rows_fail() {
        let data = gaussian(4, 16);
        assert!(jm_gl_impute(&data, &short(2), RngSeed(1)).is_err());
    }

    #[test]
    fn classes_stay_occupied_on_separated_data() {
        let data = gaussian(200, 17);
        let patterns = PatternGroups::new(&data);
        let mut rng = RngSeed(18).rng();
        let mut z = data.values().clone();
        let params = gmm::em_fit(&z, 2, Constraint::Homo, &mut rng).unwrap();
        let mut labels = vec![0; 200];
        impute_step(&params, &patterns, &mut z, &mut labels, &mut rng).unwrap();
        assert_eq!(occupancy(&labels, 2), vec![100, 100]);
    }
}
