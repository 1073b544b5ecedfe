//! Fully conditional specification: each incomplete variable is imputed in
//! turn from a Bayesian linear regression on the other variables.
//!
//! The cluster-aware engines add the latent class to every regression. After
//! each sweep over the variables the mixture is refitted on a bootstrap
//! replicate of the completed data and the classes are redrawn from its
//! discriminant rule:
//!
//! - homoscedastic: the one-hot class indicators enter the design matrix and
//!   the mixture shares one covariance (linear discriminant);
//! - heteroscedastic: a separate regression is drawn within each class and
//!   the mixture has free covariances (quadratic discriminant).
//!
//! With no class variable the engine is plain chained normal regression.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmm::{self, draw_class, Constraint, EmOptions, MixtureParams};
use crate::impute_jm::{
    chain_failure, impute_step, mean_imputed, validate_incomplete, ChainTrace, ImputationResult,
    IterationRecord, PatternGroups,
};
use crate::linalg::{add_outer_lower, mirror_lower, trace, Cholesky, Matrix};
use crate::mechanisms::Dataset;
use crate::rand_dist::{draw_dirichlet, std_normal, ChainRng, RngSeed};

/// Which variables predict which: entry `(j, j')` set means `j'` enters the
/// regression imputing `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictorMatrix {
    p: usize,
    entries: Vec<bool>,
}

impl PredictorMatrix {
    /// Row-major `p x p` flags; the diagonal must be clear.
    pub fn new(p: usize, entries: Vec<bool>) -> Result<Self> {
        if entries.len() != p * p {
            return Err(Error::DimensionMismatch {
                expected: p * p,
                got: entries.len(),
            });
        }
        if let Some(j) = (0..p).find(|&j| entries[j * p + j]) {
            return Err(Error::invalid(format!("variable {j} cannot predict itself")));
        }
        Ok(PredictorMatrix { p, entries })
    }

    /// Every other variable predicts each target.
    pub fn all(p: usize) -> Self {
        let entries = (0..p * p).map(|e| e / p != e % p).collect();
        PredictorMatrix { p, entries }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn get(&self, target: usize, predictor: usize) -> bool {
        self.entries[target * self.p + predictor]
    }

    pub fn predictors(&self, target: usize) -> Vec<usize> {
        (0..self.p).filter(|&j| self.get(target, j)).collect()
    }
}

/// One posterior draw of regression coefficients and residual scale.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDraw {
    pub beta: Vec<f64>,
    pub sigma: f64,
}

impl RegressionDraw {
    #[inline]
    fn predict<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        let mean: f64 = self.beta.iter().zip(x).map(|(b, v)| b * v).sum();
        mean + self.sigma * std_normal(rng)
    }
}

/// Posterior draw for the normal linear model `y = x β + ε` under the
/// non-informative prior: `σ² = RSS / χ²(n - q)`, `β ~ N(β̂, σ² (x'x)⁻¹)`.
///
/// A rank-deficient Gram matrix gets a ridge of `1e-4 * trace / q` on its
/// diagonal.
pub fn draw_blr<R: Rng + ?Sized>(y: &[f64], x: &Matrix, rng: &mut R) -> Result<RegressionDraw> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: x.nrows(),
        });
    }
    blr(x.as_slice(), x.ncols(), y, rng)
}

fn blr<R: Rng + ?Sized>(design: &[f64], q: usize, y: &[f64], rng: &mut R) -> Result<RegressionDraw> {
    let n = y.len();
    if q == 0 {
        return Err(Error::invalid("regression design has no columns"));
    }
    if n <= q {
        return Err(Error::invalid(format!(
            "regression needs more rows than columns (rows = {n}, columns = {q})"
        )));
    }
    let mut xtx = vec![0.0; q * q];
    let mut xty = vec![0.0; q];
    for (row, &yi) in design.chunks_exact(q).zip(y) {
        add_outer_lower(&mut xtx, row, 1.0);
        for (a, x) in xty.iter_mut().zip(row) {
            *a += x * yi;
        }
    }
    mirror_lower(&mut xtx, q);
    let chol = match Cholesky::with_tolerance(&xtx, q, 1e-12) {
        Some(c) => c,
        None => {
            let lambda = 1e-4 * trace(&xtx, q) / q as f64;
            if !(lambda > 0.0) {
                return Err(Error::invalid("regression design is identically zero"));
            }
            for j in 0..q {
                xtx[j * q + j] += lambda;
            }
            Cholesky::with_tolerance(&xtx, q, 1e-12)
                .ok_or_else(|| Error::invalid("regression design is singular even with a ridge"))?
        }
    };
    let mut beta_hat = xty;
    chol.solve_in_place(&mut beta_hat);
    let rss: f64 = design
        .chunks_exact(q)
        .zip(y)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&beta_hat).map(|(a, b)| a * b).sum();
            (yi - fit) * (yi - fit)
        })
        .sum();
    let chi = rand_distr::ChiSquared::new((n - q) as f64).map_err(|e| Error::invalid(e.to_string()))?;
    let df: f64 = rand_distr::Distribution::sample(&chi, rng);
    let mut sigma = (rss / df).sqrt();
    if !(sigma > 0.0) || !sigma.is_finite() {
        sigma = f64::MIN_POSITIVE;
    }
    // β = β̂ + σ L'⁻¹ z has covariance σ² (LL')⁻¹
    let mut z: Vec<f64> = (0..q).map(|_| std_normal(rng)).collect();
    chol.solve_upper_in_place(&mut z);
    let beta = beta_hat.iter().zip(&z).map(|(b, e)| b + sigma * e).collect();
    Ok(RegressionDraw { beta, sigma })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Homo,
    Hetero,
    Norm,
}

/// Settings shared by the FCS engines.
#[derive(Clone, Debug, PartialEq)]
pub struct FcsSpec {
    /// Number of latent classes (1 for the structure-blind engine).
    pub k: usize,
    /// Iterations per chain; each chain yields one completed dataset.
    pub l: usize,
    /// Number of chains and completed datasets.
    pub m: usize,
    pub predictors: Option<PredictorMatrix>,
    /// Dirichlet prior on the class weights; defaults to the initial
    /// estimated class proportions.
    pub alpha: Option<Vec<f64>>,
}

impl FcsSpec {
    /// Cluster-aware defaults: 200 iterations per chain.
    pub fn clustered(k: usize, m: usize) -> Self {
        FcsSpec {
            k,
            l: 200,
            m,
            predictors: None,
            alpha: None,
        }
    }

    /// Structure-blind defaults: 20 iterations per chain.
    pub fn norm(m: usize) -> Self {
        FcsSpec {
            k: 1,
            l: 20,
            m,
            predictors: None,
            alpha: None,
        }
    }

    fn validate(&self, data: &Dataset) -> Result<()> {
        if self.m == 0 || self.l == 0 || self.k == 0 {
            return Err(Error::invalid("m, l and k must all be at least 1"));
        }
        if let Some(a) = &self.alpha {
            if a.len() != self.k {
                return Err(Error::DimensionMismatch {
                    expected: self.k,
                    got: a.len(),
                });
            }
        }
        if let Some(pred) = &self.predictors {
            if pred.dim() != data.p() {
                return Err(Error::DimensionMismatch {
                    expected: data.p(),
                    got: pred.dim(),
                });
            }
            for j in 0..data.p() {
                let incomplete = (0..data.n()).any(|i| !data.is_observed(i, j));
                if incomplete && pred.predictors(j).is_empty() {
                    return Err(Error::invalid(format!(
                        "incomplete variable {j} has no predictor"
                    )));
                }
            }
        }
        validate_incomplete(data)
    }
}

/// FCS with class indicators in every regression and a homoscedastic mixture.
pub fn fcs_homo_impute(data: &Dataset, spec: &FcsSpec, seed: RngSeed) -> Result<ImputationResult> {
    run(data, spec, Kind::Homo, seed)
}

/// FCS with within-class regressions and a heteroscedastic mixture.
pub fn fcs_hetero_impute(data: &Dataset, spec: &FcsSpec, seed: RngSeed) -> Result<ImputationResult> {
    run(data, spec, Kind::Hetero, seed)
}

/// Chained normal regressions without a class variable.
pub fn fcs_norm_impute(data: &Dataset, spec: &FcsSpec, seed: RngSeed) -> Result<ImputationResult> {
    if spec.k != 1 {
        return Err(Error::invalid("the structure-blind engine has exactly one class"));
    }
    run(data, spec, Kind::Norm, seed)
}

fn run(data: &Dataset, spec: &FcsSpec, kind: Kind, seed: RngSeed) -> Result<ImputationResult> {
    spec.validate(data)?;
    // with a single class every engine uses the same intercept-only class design
    let kind = if spec.k == 1 { Kind::Norm } else { kind };
    let chains: Vec<(Matrix, ChainTrace)> = (0..spec.m)
        .into_par_iter()
        .map(|c| Chain::new(data, spec, kind, c, seed).and_then(Chain::run))
        .collect::<Result<_>>()?;
    let (completed, diagnostics) = chains.into_iter().unzip();
    Ok(ImputationResult {
        completed,
        diagnostics,
    })
}

const BOOTSTRAP_ATTEMPTS: usize = 5;

struct Chain<'a> {
    data: &'a Dataset,
    spec: &'a FcsSpec,
    kind: Kind,
    index: usize,
    rng: ChainRng,
    z: Matrix,
    labels: Vec<usize>,
    params: MixtureParams,
    alpha: Vec<f64>,
    predictors: Vec<Vec<usize>>,
    /// Rows with variable `j` observed / missing.
    observed_rows: Vec<Vec<usize>>,
    missing_rows: Vec<Vec<usize>>,
}

impl<'a> Chain<'a> {
    fn new(data: &'a Dataset, spec: &'a FcsSpec, kind: Kind, index: usize, seed: RngSeed) -> Result<Self> {
        let (n, p) = (data.n(), data.p());
        let mut rng = seed.derive("chain", index as u64).rng();
        let constraint = match kind {
            Kind::Hetero => Constraint::Hetero,
            _ => Constraint::Homo,
        };
        let mut z = mean_imputed(data);
        let params = gmm::em_fit(&z, spec.k, constraint, &mut rng)
            .map_err(|e| chain_failure("initial fit", e))?;
        let alpha = spec.alpha.clone().unwrap_or_else(|| params.weights().to_vec());
        let mut labels = vec![0; n];
        impute_step(&params, &PatternGroups::new(data), &mut z, &mut labels, &mut rng)
            .map_err(|e| chain_failure("initial draw", e))?;
        let predictors = (0..p)
            .map(|j| match &spec.predictors {
                Some(pm) => pm.predictors(j),
                None => (0..p).filter(|&o| o != j).collect(),
            })
            .collect();
        let observed_rows = (0..p)
            .map(|j| (0..n).filter(|&i| data.is_observed(i, j)).collect())
            .collect();
        let missing_rows = (0..p)
            .map(|j| (0..n).filter(|&i| !data.is_observed(i, j)).collect())
            .collect();
        Ok(Chain {
            data,
            spec,
            kind,
            index,
            rng,
            z,
            labels,
            params,
            alpha,
            predictors,
            observed_rows,
            missing_rows,
        })
    }

    fn run(mut self) -> Result<(Matrix, ChainTrace)> {
        let mut records = Vec::with_capacity(self.spec.l);
        for it in 1..=self.spec.l {
            for j in 0..self.data.p() {
                if !self.missing_rows[j].is_empty() {
                    self.impute_variable(j)
                        .map_err(|e| chain_failure(&format!("regression of variable {j}"), e))?;
                }
            }
            let record = if self.kind == Kind::Norm {
                let z = &self.z;
                let cov = z.ml_covariance();
                IterationRecord {
                    iteration: it,
                    weights: vec![1.0],
                    means: vec![z.column_means()],
                    cov_traces: vec![trace(&cov, z.ncols())],
                }
            } else {
                self.update_classes()?;
                IterationRecord::from_params(it, &self.params)
            };
            records.push(record);
        }
        debug_assert!(self.data.check_completion(&self.z));
        Ok((
            self.z,
            ChainTrace {
                chain: self.index,
                records,
            },
        ))
    }

    /// Design row for row `i` when imputing variable `j`: class columns
    /// (one-hot, or a lone intercept) then the predictors.
    fn design_row(&self, i: usize, j: usize, class_cols: usize, out: &mut Vec<f64>) {
        if class_cols == 1 {
            out.push(1.0);
        } else {
            out.extend((0..class_cols).map(|w| if self.labels[i] == w { 1.0 } else { 0.0 }));
        }
        let row = self.z.row(i);
        out.extend(self.predictors[j].iter().map(|&o| row[o]));
    }

    fn draw_for(&mut self, rows: &[usize], j: usize, class_cols: usize) -> Result<RegressionDraw> {
        let q = class_cols + self.predictors[j].len();
        let mut design = Vec::with_capacity(rows.len() * q);
        for &i in rows {
            self.design_row(i, j, class_cols, &mut design);
        }
        let y: Vec<f64> = rows.iter().map(|&i| self.z.get(i, j)).collect();
        blr(&design, q, &y, &mut self.rng)
    }

    fn impute_variable(&mut self, j: usize) -> Result<()> {
        let k = self.spec.k;
        let observed = std::mem::take(&mut self.observed_rows[j]);
        let missing = std::mem::take(&mut self.missing_rows[j]);
        let result = match self.kind {
            Kind::Norm => self.draw_for(&observed, j, 1).map(|d| vec![Some(d)]),
            Kind::Homo => self.draw_for(&observed, j, k).map(|d| vec![Some(d)]),
            Kind::Hetero => self.hetero_draws(&observed, j),
        };
        let outcome = result.map(|draws| {
            let mut x = Vec::new();
            for &i in &missing {
                x.clear();
                let (draw, class_cols) = match self.kind {
                    Kind::Norm => (draws[0].as_ref().expect("single draw"), 1),
                    Kind::Homo => (draws[0].as_ref().expect("single draw"), k),
                    Kind::Hetero => match &draws[self.labels[i]] {
                        Some(d) => (d, 1),
                        None => (draws[k].as_ref().expect("pooled draw present"), k),
                    },
                };
                self.design_row(i, j, class_cols, &mut x);
                let v = draw.predict(&x, &mut self.rng);
                self.z.set(i, j, v);
            }
        });
        self.observed_rows[j] = observed;
        self.missing_rows[j] = missing;
        outcome
    }

    /// One draw per class (`None` when the class is too small) followed by
    /// the pooled class-indicator draw in slot `k` when any class needs it.
    fn hetero_draws(&mut self, observed: &[usize], j: usize) -> Result<Vec<Option<RegressionDraw>>> {
        let k = self.spec.k;
        let q = 1 + self.predictors[j].len();
        let mut draws = Vec::with_capacity(k + 1);
        for w in 0..k {
            let rows: Vec<usize> = observed.iter().copied().filter(|&i| self.labels[i] == w).collect();
            draws.push(if rows.len() >= q + 2 {
                Some(self.draw_for(&rows, j, 1)?)
            } else {
                None
            });
        }
        draws.push(if draws.iter().any(Option::is_none) {
            Some(self.draw_for(observed, j, k)?)
        } else {
            None
        });
        Ok(draws)
    }

    /// Refit the mixture on a bootstrap replicate, draw provisional classes,
    /// draw the weights, and redraw the classes with them.
    fn update_classes(&mut self) -> Result<()> {
        let n = self.data.n();
        let k = self.spec.k;
        let zeta = self.bootstrap_fit()?;

        let fm = zeta.factor().map_err(|e| chain_failure("bootstrap fit", e))?;
        let mut diff = vec![0.0; self.z.ncols()];
        let mut probs = vec![0.0; k];
        let mut counts = vec![0.0; k];
        for i in 0..n {
            fm.posterior(self.z.row(i), &mut diff, &mut probs);
            counts[draw_class(&probs, &mut self.rng)] += 1.0;
        }
        let conc: Vec<f64> = self.alpha.iter().zip(&counts).map(|(a, c)| a + c).collect();
        let theta = draw_dirichlet(&conc, &mut self.rng)?;

        let params = zeta.with_weights(theta)?;
        let fm = params.factor().map_err(|e| chain_failure("class draw", e))?;
        for i in 0..n {
            fm.posterior(self.z.row(i), &mut diff, &mut probs);
            self.labels[i] = draw_class(&probs, &mut self.rng);
        }
        drop(fm);
        self.params = params;
        Ok(())
    }

    /// ML mixture on a bootstrap replicate of the completed data, warm
    /// started from the current parameters; fresh replicates with fresh
    /// initialisations are tried on failure.
    fn bootstrap_fit(&mut self) -> Result<MixtureParams> {
        let n = self.data.n();
        let warm = EmOptions {
            restarts: 1,
            ..EmOptions::default()
        };
        let mut last = None;
        for attempt in 0..BOOTSTRAP_ATTEMPTS {
            let idx: Vec<usize> = (0..n).map(|_| self.rng.random_range(0..n)).collect();
            let boot = self.z.select_rows(&idx);
            let fit = if attempt == 0 {
                gmm::em_refine(&boot, &self.params, &warm)
            } else {
                let constraint = self.params.constraint();
                gmm::em_fit_with(&boot, self.spec.k, constraint, &EmOptions::default(), &mut self.rng)
            };
            match fit {
                Ok(f) => return Ok(f.params),
                Err(e) => last = Some(e),
            }
        }
        Err(chain_failure(
            "bootstrap fit",
            last.unwrap_or_else(|| Error::DegenerateFit("no attempt made".into())),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{ampute, MechanismSpec};

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = RngSeed(seed).rng();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c = [-3.0, 0.0, 3.0][i % 3];
                vec![
                    c + std_normal(&mut rng),
                    -c + std_normal(&mut rng),
                    std_normal(&mut rng),
                    c + 0.5 * std_normal(&mut rng),
                ]
            })
            .collect();
        Dataset::complete(Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    fn quick(k: usize) -> FcsSpec {
        FcsSpec {
            k,
            l: 4,
            m: 3,
            predictors: None,
            alpha: None,
        }
    }

    #[test]
    fn blr_recovers_exact_linear_relation() {
        let mut rng = RngSeed(1).rng();
        let n = 10_000;
        let mut x = Vec::with_capacity(2 * n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let v = std_normal(&mut rng);
            x.extend([1.0, v]);
            y.push(2.0 - 3.0 * v);
        }
        let design = Matrix::new(n, 2, x).unwrap();
        let d = draw_blr(&y, &design, &mut rng).unwrap();
        assert!((d.beta[0] - 2.0).abs() < 0.05 && (d.beta[1] + 3.0).abs() < 0.05);
        assert!(d.sigma > 0.0 && d.sigma < 1e-6);
    }

    #[test]
    fn blr_intercept_draws_center_on_sample_mean() {
        let mut rng = RngSeed(2).rng();
        let n = 10_000;
        let y: Vec<f64> = (0..n).map(|_| 5.0 + std_normal(&mut rng)).collect();
        let design = Matrix::new(n, 1, vec![1.0; n]).unwrap();
        let mean: f64 = (0..200)
            .map(|_| draw_blr(&y, &design, &mut rng).unwrap().beta[0])
            .sum::<f64>()
            / 200.0;
        assert!((mean - 5.0).abs() < 0.05);
    }

    #[test]
    fn blr_minimal_rows_and_ridge() {
        let mut rng = RngSeed(3).rng();
        let design = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let d = draw_blr(&[1.0, 2.0, 2.5], &design, &mut rng).unwrap();
        assert!(d.sigma.is_finite() && d.beta.iter().all(|b| b.is_finite()));
        // duplicated column: rank deficient, handled by the ridge
        let dup = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0], vec![4.0, 4.0]]).unwrap();
        let d = draw_blr(&[1.0, 2.0, 3.0, 4.1], &dup, &mut rng).unwrap();
        assert!(d.beta.iter().all(|b| b.is_finite()));
        assert!(draw_blr(&[1.0, 2.0], &design.select_rows(&[0, 1]), &mut rng).is_err());
    }

    #[test]
    fn predictor_matrix_rules() {
        assert!(PredictorMatrix::new(2, vec![true, false, false, false]).is_err());
        let all = PredictorMatrix::all(3);
        assert_eq!(all.predictors(1), vec![0, 2]);
    }

    #[test]
    fn complete_data_unchanged_for_every_engine() {
        let data = blobs(90, 4);
        for f in [fcs_homo_impute, fcs_hetero_impute] {
            let res = f(&data, &quick(3), RngSeed(5)).unwrap();
            assert!(res.completed.iter().all(|c| c == data.values()));
        }
        let res = fcs_norm_impute(&data, &quick(1), RngSeed(5)).unwrap();
        assert!(res.completed.iter().all(|c| c == data.values()));
    }

    #[test]
    fn observed_cells_preserved() {
        let full = blobs(150, 6);
        let data = ampute(&full, &MechanismSpec::mcar(0.3), &mut RngSeed(7).rng()).unwrap();
        for f in [fcs_homo_impute, fcs_hetero_impute] {
            let res = f(&data, &quick(3), RngSeed(8)).unwrap();
            for c in &res.completed {
                assert!(data.check_completion(c));
            }
            for trace in &res.diagnostics {
                for r in &trace.records {
                    assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn single_class_engines_coincide() {
        let full = blobs(120, 9);
        let data = ampute(&full, &MechanismSpec::mcar(0.25), &mut RngSeed(10).rng()).unwrap();
        let norm = fcs_norm_impute(&data, &quick(1), RngSeed(11)).unwrap();
        let hetero = fcs_hetero_impute(&data, &quick(1), RngSeed(11)).unwrap();
        let homo = fcs_homo_impute(&data, &quick(1), RngSeed(11)).unwrap();
        assert_eq!(norm.completed, hetero.completed);
        assert_eq!(norm.completed, homo.completed);
    }

    #[test]
    fn chains_are_exchangeable() {
        let full = blobs(90, 12);
        let data = ampute(&full, &MechanismSpec::mcar(0.2), &mut RngSeed(13).rng()).unwrap();
        let three = fcs_homo_impute(&data, &quick(3), RngSeed(14)).unwrap();
        let one = fcs_homo_impute(&data, &FcsSpec { m: 1, ..quick(3) }, RngSeed(14)).unwrap();
        assert_eq!(three.completed[0], one.completed[0]);
        assert_ne!(three.completed[0], three.completed[1]);
    }

    #[test]
    fn excluded_predictor_never_enters_design() {
        let full = blobs(120, 15);
        let data = ampute(&full, &MechanismSpec::mcar(0.2), &mut RngSeed(16).rng()).unwrap();
        let mut entries = vec![true; 16];
        for j in 0..4 {
            entries[j * 4 + j] = false;
            // variable 2 predicts nothing
            entries[j * 4 + 2] = false;
        }
        let pred = PredictorMatrix::new(4, entries).unwrap();
        let spec = FcsSpec {
            predictors: Some(pred),
            ..quick(3)
        };
        let chain = Chain::new(&data, &spec, Kind::Homo, 0, RngSeed(17)).unwrap();
        for j in 0..4 {
            assert!(!chain.predictors[j].contains(&2));
            let mut row = Vec::new();
            chain.design_row(0, j, 3, &mut row);
            assert_eq!(row.len(), 3 + chain.predictors[j].len());
        }
        let res = fcs_homo_impute(&data, &spec, RngSeed(18)).unwrap();
        assert_eq!(res.completed.len(), 3);
    }

    #[test]
    fn missing_predictor_row_rejected() {
        let full = blobs(60, 20);
        let data = ampute(&full, &MechanismSpec::mcar(0.2), &mut RngSeed(21).rng()).unwrap();
        let pred = PredictorMatrix::new(4, vec![false; 16]).unwrap();
        let spec = FcsSpec {
            predictors: Some(pred),
            ..quick(1)
        };
        assert!(fcs_norm_impute(&data, &spec, RngSeed(22)).is_err());
    }
}
