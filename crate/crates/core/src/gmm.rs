//! Gaussian mixture models: EM estimation, discriminant scoring on complete or
//! partially observed rows, classification and conditional draws of missing
//! coordinates.
//!
//! Two covariance structures are supported: one covariance shared by every
//! component (homoscedastic, giving linear discriminants) and a free covariance
//! per component (heteroscedastic, giving quadratic discriminants).

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add_outer_lower, mirror_lower, Cholesky, Matrix};
use crate::rand_dist::{jittered_cholesky, sample_weighted, std_normal, CovMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    /// One covariance matrix shared by all components.
    Homo,
    /// A free covariance matrix per component.
    Hetero,
}

impl std::str::FromStr for Constraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "homo" | "homoscedastic" => Ok(Constraint::Homo),
            "hetero" | "heteroscedastic" => Ok(Constraint::Hetero),
            other => Err(Error::Config(format!("unknown covariance constraint '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Covariances {
    Shared(CovMatrix),
    PerComponent(Vec<CovMatrix>),
}

/// Mixture weights, component means and covariance(s).
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Covariances,
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covs: Covariances) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        if means.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: means.len(),
            });
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("mixture weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        let p = means[0].len();
        if let Some(m) = means.iter().find(|m| m.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: m.len(),
            });
        }
        match &covs {
            Covariances::Shared(c) => check_dim(c, p)?,
            Covariances::PerComponent(cs) => {
                if cs.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        got: cs.len(),
                    });
                }
                for c in cs {
                    check_dim(c, p)?;
                }
            }
        }
        Ok(MixtureParams {
            weights,
            means,
            covs,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &Covariances {
        &self.covs
    }

    pub fn constraint(&self) -> Constraint {
        match self.covs {
            Covariances::Shared(_) => Constraint::Homo,
            Covariances::PerComponent(_) => Constraint::Hetero,
        }
    }

    /// Covariance of component `w`.
    pub fn cov(&self, w: usize) -> &CovMatrix {
        match &self.covs {
            Covariances::Shared(c) => c,
            Covariances::PerComponent(cs) => &cs[w],
        }
    }

    /// Traces of the stored covariance matrices (one entry when shared).
    pub fn cov_traces(&self) -> Vec<f64> {
        match &self.covs {
            Covariances::Shared(c) => vec![c.trace()],
            Covariances::PerComponent(cs) => cs.iter().map(CovMatrix::trace).collect(),
        }
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        MixtureParams::new(weights, self.means.clone(), self.covs.clone())
    }

    fn n_factors(&self) -> usize {
        match &self.covs {
            Covariances::Shared(_) => 1,
            Covariances::PerComponent(cs) => cs.len(),
        }
    }

    #[inline]
    fn factor_index(&self, w: usize) -> usize {
        match self.covs {
            Covariances::Shared(_) => 0,
            Covariances::PerComponent(_) => w,
        }
    }

    pub(crate) fn factor(&self) -> Result<FactoredMixture<'_>> {
        let p = self.dim();
        let mut chols = Vec::with_capacity(self.n_factors());
        for f in 0..self.n_factors() {
            let w = f;
            let c = Cholesky::new(self.cov(w).as_slice(), p)
                .ok_or(Error::SingularCovariance { component: w })?;
            chols.push(c);
        }
        let log_dets = chols.iter().map(Cholesky::log_det).collect();
        Ok(FactoredMixture {
            params: self,
            ln_weights: self.weights.iter().map(|w| w.ln()).collect(),
            chols,
            log_dets,
        })
    }
}

fn check_dim(c: &CovMatrix, p: usize) -> Result<()> {
    if c.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: c.dim(),
        });
    }
    Ok(())
}

/// Mixture with factored covariances, for repeated density evaluation on
/// complete rows.
pub(crate) struct FactoredMixture<'a> {
    params: &'a MixtureParams,
    ln_weights: Vec<f64>,
    chols: Vec<Cholesky>,
    log_dets: Vec<f64>,
}

impl FactoredMixture<'_> {
    /// `out[w] = ln θ_w + ln N(row | μ_w, Σ_w)`.
    #[inline]
    pub(crate) fn log_joint(&self, row: &[f64], diff: &mut [f64], out: &mut [f64]) {
        let p = row.len();
        let c0 = -0.5 * p as f64 * (2.0 * PI).ln();
        for (w, o) in out.iter_mut().enumerate() {
            let f = self.params.factor_index(w);
            let mean = &self.params.means[w];
            for j in 0..p {
                diff[j] = row[j] - mean[j];
            }
            self.chols[f].solve_lower_in_place(diff);
            let maha: f64 = diff.iter().map(|d| d * d).sum();
            *o = self.ln_weights[w] + c0 - 0.5 * self.log_dets[f] - 0.5 * maha;
        }
    }

    /// Posterior class probabilities of a complete row, written to `out`.
    #[inline]
    pub(crate) fn posterior(&self, row: &[f64], diff: &mut [f64], out: &mut [f64]) -> f64 {
        self.log_joint(row, diff, out);
        normalize_log(out)
    }
}

/// Replace log-weights by normalised probabilities; returns the log normaliser.
#[inline]
pub(crate) fn normalize_log(v: &mut [f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
        return f64::NEG_INFINITY;
    }
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
    max + s.ln()
}

/// Cluster label per row together with the number of clusters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("a partition needs k >= 1"));
        }
        if let Some(l) = labels.iter().find(|l| **l >= k) {
            return Err(Error::invalid(format!("label {l} out of range for k = {k}")));
        }
        Ok(Partition { labels, k })
    }

    /// Partition whose cluster count is one more than the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(1, |m| m + 1);
        Partition { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Number of non-empty clusters.
    pub fn occupied(&self) -> usize {
        self.counts().iter().filter(|c| **c > 0).count()
    }

    /// Relabel clusters in order of first appearance, dropping empty ones.
    pub fn canonical(&self) -> Partition {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        Partition {
            labels,
            k: next.max(1),
        }
    }
}

/// EM tuning.
#[derive(Clone, Debug)]
pub struct EmOptions {
    /// Independent k-means++ initialisations; the best log-likelihood wins.
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when the relative log-likelihood change falls below this.
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            restarts: 5,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

/// Result of one EM run.
#[derive(Clone, Debug)]
pub struct EmFit {
    pub params: MixtureParams,
    /// Observed-data log-likelihood of the returned parameters.
    pub loglik: f64,
    /// Log-likelihood evaluated at each E-step.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Components re-seeded after emptying.
    pub reseeds: usize,
}

const MAX_RESEEDS: usize = 20;

/// Maximum-likelihood mixture fit with the default [`EmOptions`].
pub fn em_fit<R: Rng + ?Sized>(
    data: &Matrix,
    k: usize,
    constraint: Constraint,
    rng: &mut R,
) -> Result<MixtureParams> {
    em_fit_with(data, k, constraint, &EmOptions::default(), rng).map(|f| f.params)
}

/// EM from `opts.restarts` k-means++ seedings, keeping the best log-likelihood.
pub fn em_fit_with<R: Rng + ?Sized>(
    data: &Matrix,
    k: usize,
    constraint: Constraint,
    opts: &EmOptions,
    rng: &mut R,
) -> Result<EmFit> {
    check_fit_input(data, k)?;
    if k == 1 {
        return single_component(data, constraint);
    }
    let mut best: Option<EmFit> = None;
    let mut last_err = None;
    for _ in 0..opts.restarts.max(1) {
        let seeds = crate::clustering::kmeanspp_seeds(data, k, rng);
        let labels = nearest_seed_labels(data, &seeds);
        let mut em = EmState::new(data, k, constraint);
        em.resp_from_labels(&labels);
        match em.m_step().and_then(|params| em.run(params, opts)) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::DegenerateFit("no EM run succeeded".into())))
}

/// A single EM run started from `init` (warm start).
pub fn em_refine(data: &Matrix, init: &MixtureParams, opts: &EmOptions) -> Result<EmFit> {
    let k = init.k();
    check_fit_input(data, k)?;
    if init.dim() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: data.ncols(),
            got: init.dim(),
        });
    }
    if k == 1 {
        return single_component(data, init.constraint());
    }
    let mut em = EmState::new(data, k, init.constraint());
    em.run(init.clone(), opts)
}

fn check_fit_input(data: &Matrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::DegenerateFit("k must be at least 1".into()));
    }
    let n = data.nrows();
    if n <= k {
        return Err(Error::DegenerateFit(format!("need n > k (n = {n}, k = {k})")));
    }
    if data.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("EM input contains missing or non-finite values"));
    }
    let first = data.row(0);
    if data.rows().all(|r| r == first) {
        return Err(Error::DegenerateFit("all rows are identical".into()));
    }
    Ok(())
}

/// Closed form for K = 1: column means and the ML covariance.
fn single_component(data: &Matrix, constraint: Constraint) -> Result<EmFit> {
    let p = data.ncols();
    let mean = data.column_means();
    let mut cov = data.ml_covariance();
    floor_covariance(&mut cov, p)?;
    let c = CovMatrix::from_row_major_unchecked(p, cov);
    let covs = match constraint {
        Constraint::Homo => Covariances::Shared(c),
        Constraint::Hetero => Covariances::PerComponent(vec![c]),
    };
    let params = MixtureParams::new(vec![1.0], vec![mean], covs)?;
    let loglik = loglik(data, &params)?;
    Ok(EmFit {
        params,
        loglik,
        trace: vec![loglik],
        converged: true,
        reseeds: 0,
    })
}

/// Observed-data log-likelihood of a complete matrix.
pub fn loglik(data: &Matrix, params: &MixtureParams) -> Result<f64> {
    let fm = params.factor()?;
    let mut diff = vec![0.0; data.ncols()];
    let mut buf = vec![0.0; params.k()];
    Ok(data
        .rows()
        .map(|row| fm.posterior(row, &mut diff, &mut buf))
        .sum())
}

/// Add `1e-6 * mean(diag)` to the diagonal until the matrix factors.
fn floor_covariance(cov: &mut [f64], p: usize) -> Result<()> {
    if Cholesky::new(cov, p).is_some() {
        return Ok(());
    }
    let mean_diag = crate::linalg::trace(cov, p) / p as f64;
    if !(mean_diag > 0.0) {
        return Err(Error::DegenerateFit("covariance has no variance".into()));
    }
    let mut eps = 1e-6 * mean_diag;
    for _ in 0..8 {
        for i in 0..p {
            cov[i * p + i] += eps;
        }
        if Cholesky::new(cov, p).is_some() {
            return Ok(());
        }
        eps *= 10.0;
    }
    Err(Error::DegenerateFit("covariance could not be regularised".into()))
}

fn nearest_seed_labels(data: &Matrix, seeds: &[usize]) -> Vec<usize> {
    data.rows()
        .map(|row| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &s) in seeds.iter().enumerate() {
                let d = sq_dist(row, data.row(s));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct EmState<'a> {
    data: &'a Matrix,
    k: usize,
    constraint: Constraint,
    resp: Vec<f64>,
    reseeds: usize,
}

impl<'a> EmState<'a> {
    fn new(data: &'a Matrix, k: usize, constraint: Constraint) -> Self {
        EmState {
            data,
            k,
            constraint,
            resp: vec![0.0; data.nrows() * k],
            reseeds: 0,
        }
    }

    fn resp_from_labels(&mut self, labels: &[usize]) {
        self.resp.iter_mut().for_each(|r| *r = 0.0);
        for (i, &l) in labels.iter().enumerate() {
            self.resp[i * self.k + l] = 1.0;
        }
    }

    /// Fills responsibilities and returns the log-likelihood.
    fn e_step(&mut self, params: &MixtureParams) -> Result<f64> {
        let fm = params.factor()?;
        let k = self.k;
        let mut diff = vec![0.0; self.data.ncols()];
        let mut ll = 0.0;
        for (i, row) in self.data.rows().enumerate() {
            let r = &mut self.resp[i * k..(i + 1) * k];
            ll += fm.posterior(row, &mut diff, r);
        }
        Ok(ll)
    }

    fn m_step(&mut self) -> Result<MixtureParams> {
        let data = self.data;
        let (n, p, k) = (data.nrows(), data.ncols(), self.k);
        let mut nk = vec![0.0; k];
        let mut means = vec![vec![0.0; p]; k];
        for (i, row) in data.rows().enumerate() {
            for w in 0..k {
                let r = self.resp[i * k + w];
                if r > 0.0 {
                    nk[w] += r;
                    for (m, x) in means[w].iter_mut().zip(row) {
                        *m += r * x;
                    }
                }
            }
        }
        let min_occupancy = match self.constraint {
            Constraint::Homo => 1.0,
            Constraint::Hetero => (p + 1) as f64,
        };
        let empty: Vec<usize> = (0..k).filter(|&w| nk[w] < min_occupancy).collect();
        for w in 0..k {
            if nk[w] > 0.0 {
                means[w].iter_mut().for_each(|m| *m /= nk[w]);
            }
        }

        let mut scatter = vec![vec![0.0; p * p]; match self.constraint {
            Constraint::Homo => 1,
            Constraint::Hetero => k,
        }];
        let mut diff = vec![0.0; p];
        for (i, row) in data.rows().enumerate() {
            for w in 0..k {
                let r = self.resp[i * k + w];
                if r > 1e-300 && !empty.contains(&w) {
                    for j in 0..p {
                        diff[j] = row[j] - means[w][j];
                    }
                    let s = match self.constraint {
                        Constraint::Homo => &mut scatter[0],
                        Constraint::Hetero => &mut scatter[w],
                    };
                    add_outer_lower(s, &diff, r);
                }
            }
        }
        let occupied_total: f64 = (0..k).filter(|w| !empty.contains(w)).map(|w| nk[w]).sum();
        let covs = match self.constraint {
            Constraint::Homo => {
                let mut s = std::mem::take(&mut scatter[0]);
                s.iter_mut().for_each(|v| *v /= occupied_total);
                mirror_lower(&mut s, p);
                floor_covariance(&mut s, p)?;
                Covariances::Shared(CovMatrix::from_row_major_unchecked(p, s))
            }
            Constraint::Hetero => {
                let mut cs = Vec::with_capacity(k);
                let mut fallback = None;
                for w in 0..k {
                    let mut s = std::mem::take(&mut scatter[w]);
                    if empty.contains(&w) {
                        let overall = fallback.get_or_insert_with(|| {
                            let mut c = data.ml_covariance();
                            let _ = floor_covariance(&mut c, p);
                            c
                        });
                        s = overall.clone();
                    } else {
                        s.iter_mut().for_each(|v| *v /= nk[w]);
                        mirror_lower(&mut s, p);
                        floor_covariance(&mut s, p)?;
                    }
                    cs.push(CovMatrix::from_row_major_unchecked(p, s));
                }
                Covariances::PerComponent(cs)
            }
        };

        let mut weights: Vec<f64> = nk.iter().map(|v| v / n as f64).collect();
        if !empty.is_empty() {
            self.reseeds += empty.len();
            if self.reseeds > MAX_RESEEDS {
                return Err(Error::DegenerateFit("components keep emptying".into()));
            }
            // Re-seed each empty component at the row with the lowest
            // maximum responsibility, i.e. the worst-explained point.
            let mut order: Vec<(f64, usize)> = (0..n)
                .map(|i| {
                    let m = self.resp[i * k..(i + 1) * k]
                        .iter()
                        .cloned()
                        .fold(0.0, f64::max);
                    (m, i)
                })
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (slot, &w) in empty.iter().enumerate() {
                means[w] = data.row(order[slot].1).to_vec();
                weights[w] = weights[w].max(1.0 / k as f64);
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|v| *v /= total);
        }
        MixtureParams::new(weights, means, covs)
    }

    fn run(&mut self, mut params: MixtureParams, opts: &EmOptions) -> Result<EmFit> {
        let mut trace = Vec::new();
        let mut converged = false;
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..opts.max_iter.max(1) {
            let ll = self.e_step(&params)?;
            if !ll.is_finite() {
                return Err(Error::DegenerateFit("log-likelihood is not finite".into()));
            }
            trace.push(ll);
            if (ll - prev).abs() <= opts.tol * ll.abs() {
                converged = true;
                break;
            }
            prev = ll;
            let reseeds_before = self.reseeds;
            params = self.m_step()?;
            if self.reseeds != reseeds_before {
                prev = f64::NEG_INFINITY;
            }
        }
        let loglik = *trace.last().unwrap_or(&f64::NEG_INFINITY);
        Ok(EmFit {
            params,
            loglik,
            trace,
            converged,
            reseeds: self.reseeds,
        })
    }
}

/// Posterior class probabilities of a row given its observed coordinates.
///
/// Means and covariance are restricted to the observed coordinates; a fully
/// missing row returns the mixture weights.
pub fn discriminant_scores(
    params: &MixtureParams,
    row: &[f64],
    observed: &[bool],
) -> Result<Vec<f64>> {
    let model = PatternModel::new(params, observed)?;
    let mut out = vec![0.0; params.k()];
    model.probabilities(row, &mut vec![0.0; row.len()], &mut out);
    Ok(out)
}

/// MAP classification of complete rows; ties go to the lowest index.
pub fn classify(params: &MixtureParams, data: &Matrix) -> Result<Partition> {
    if data.ncols() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: data.ncols(),
        });
    }
    let fm = params.factor()?;
    let mut diff = vec![0.0; data.ncols()];
    let mut buf = vec![0.0; params.k()];
    let labels = data
        .rows()
        .map(|row| {
            fm.log_joint(row, &mut diff, &mut buf);
            argmax(&buf)
        })
        .collect();
    Partition::new(labels, params.k())
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Complete a row by drawing its missing coordinates from the conditional
/// Gaussian of component `label` given the observed coordinates.
pub fn draw_conditional_missing<R: Rng + ?Sized>(
    params: &MixtureParams,
    row: &[f64],
    observed: &[bool],
    label: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if label >= params.k() {
        return Err(Error::invalid(format!("label {label} out of range")));
    }
    let model = PatternModel::new(params, observed)?;
    let mut out = row.to_vec();
    model.draw_missing(&mut out, label, rng);
    Ok(out)
}

/// Everything needed to score and complete rows sharing one missingness
/// pattern: factors of the observed block and the regression of missing on
/// observed coordinates, per distinct covariance.
pub(crate) struct PatternModel<'a> {
    params: &'a MixtureParams,
    obs: Vec<usize>,
    miss: Vec<usize>,
    ln_weights: Vec<f64>,
    factors: Vec<PatternFactor>,
}

struct PatternFactor {
    obs_chol: Option<Cholesky>,
    log_det: f64,
    /// `Σ_MO Σ_OO^{-1}`, `|M| x |O|` row-major.
    reg: Vec<f64>,
    /// Factor of the conditional covariance; `None` when it vanishes.
    cond_chol: Option<Cholesky>,
}

impl<'a> PatternModel<'a> {
    pub(crate) fn new(params: &'a MixtureParams, observed: &[bool]) -> Result<Self> {
        let p = params.dim();
        if observed.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: observed.len(),
            });
        }
        let obs: Vec<usize> = (0..p).filter(|&j| observed[j]).collect();
        let miss: Vec<usize> = (0..p).filter(|&j| !observed[j]).collect();
        let factors = (0..params.n_factors())
            .map(|f| PatternFactor::new(params.cov(f), &obs, &miss, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(PatternModel {
            params,
            obs,
            miss,
            ln_weights: params.weights.iter().map(|w| w.ln()).collect(),
            factors,
        })
    }

    /// Unnormalised log posterior of each class, written to `out`.
    pub(crate) fn log_scores(&self, row: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let q = self.obs.len();
        for (w, o) in out.iter_mut().enumerate() {
            let f = &self.factors[self.params.factor_index(w)];
            let mut s = self.ln_weights[w];
            if let Some(ch) = &f.obs_chol {
                let mean = &self.params.means[w];
                for (t, &j) in self.obs.iter().enumerate() {
                    scratch[t] = row[j] - mean[j];
                }
                ch.solve_lower_in_place(&mut scratch[..q]);
                let maha: f64 = scratch[..q].iter().map(|d| d * d).sum();
                s -= 0.5 * (f.log_det + maha);
            }
            *o = s;
        }
    }

    pub(crate) fn probabilities(&self, row: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.log_scores(row, scratch, out);
        normalize_log(out);
    }

    /// Overwrite the missing coordinates of `row` with a conditional draw.
    pub(crate) fn draw_missing<R: Rng + ?Sized>(&self, row: &mut [f64], w: usize, rng: &mut R) {
        let nm = self.miss.len();
        if nm == 0 {
            return;
        }
        let f = &self.factors[self.params.factor_index(w)];
        let mean = &self.params.means[w];
        let centred: Vec<f64> = self.obs.iter().map(|&j| row[j] - mean[j]).collect();
        let mut draw = vec![0.0; nm];
        if let Some(ch) = &f.cond_chol {
            let z: Vec<f64> = (0..nm).map(|_| std_normal(rng)).collect();
            ch.mul_lower(&z, &mut draw);
        }
        let q = self.obs.len();
        for (t, &j) in self.miss.iter().enumerate() {
            let reg = &f.reg[t * q..(t + 1) * q];
            let shift: f64 = reg.iter().zip(&centred).map(|(a, b)| a * b).sum();
            row[j] = mean[j] + shift + draw[t];
        }
    }
}

impl PatternFactor {
    fn new(cov: &CovMatrix, obs: &[usize], miss: &[usize], component: usize) -> Result<Self> {
        let q = obs.len();
        let nm = miss.len();
        let (obs_chol, log_det) = if q > 0 {
            let block: Vec<f64> = obs
                .iter()
                .flat_map(|&a| obs.iter().map(move |&b| cov.get(a, b)))
                .collect();
            let ch = Cholesky::new(&block, q).ok_or(Error::SingularCovariance { component })?;
            let ld = ch.log_det();
            (Some(ch), ld)
        } else {
            (None, 0.0)
        };
        let mut reg = vec![0.0; nm * q];
        let mut cond = vec![0.0; nm * nm];
        for (t, &m) in miss.iter().enumerate() {
            if let Some(ch) = &obs_chol {
                let mut x: Vec<f64> = obs.iter().map(|&o| cov.get(o, m)).collect();
                ch.solve_in_place(&mut x);
                reg[t * q..(t + 1) * q].copy_from_slice(&x);
            }
        }
        for (a, &ma) in miss.iter().enumerate() {
            for (b, &mb) in miss.iter().enumerate() {
                let adj: f64 = (0..q).map(|s| reg[a * q + s] * cov.get(obs[s], mb)).sum();
                cond[a * nm + b] = cov.get(ma, mb) - adj;
            }
        }
        // symmetrise against rounding in the Schur complement
        for a in 0..nm {
            for b in 0..a {
                let v = 0.5 * (cond[a * nm + b] + cond[b * nm + a]);
                cond[a * nm + b] = v;
                cond[b * nm + a] = v;
            }
        }
        let cond_chol = if nm == 0 {
            None
        } else {
            let marginal: f64 = miss.iter().map(|&m| cov.get(m, m)).sum();
            let ctr = crate::linalg::trace(&cond, nm);
            if ctr <= 1e-14 * marginal {
                None
            } else {
                Some(jittered_cholesky(&cond, nm).ok_or(Error::SingularCovariance { component })?)
            }
        };
        Ok(PatternFactor {
            obs_chol,
            log_det,
            reg,
            cond_chol,
        })
    }
}

/// Draw a class from the probabilities produced by a pattern model.
#[inline]
pub(crate) fn draw_class<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    sample_weighted(probs, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rand_dist::RngSeed;
    use statrs::distribution::{Continuous, Normal};

    fn two_component_homo() -> MixtureParams {
        let cov = CovMatrix::from_row_major(2, vec![1.0, 0.3, 0.3, 2.0]).unwrap();
        MixtureParams::new(
            vec![0.5, 0.5],
            vec![vec![-1.0, 0.0], vec![1.0, 2.0]],
            Covariances::Shared(cov),
        )
        .unwrap()
    }

    fn sample_1d(seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = RngSeed(seed).rng();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..400 {
            let l = i % 2;
            let mu = if l == 0 { -5.0 } else { 5.0 };
            rows.push(vec![mu + std_normal(&mut rng)]);
            labels.push(l);
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn single_component_is_closed_form() {
        let data = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 5.0], vec![4.0, 0.0]]).unwrap();
        let mut rng = RngSeed(1).rng();
        let p = em_fit(&data, 1, Constraint::Homo, &mut rng).unwrap();
        assert_eq!(p.weights(), &[1.0]);
        assert_eq!(p.means()[0], data.column_means());
        let cov = data.ml_covariance();
        for (a, b) in p.cov(0).as_slice().iter().zip(&cov) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_separated_means_in_one_dimension() {
        let (data, labels) = sample_1d(7);
        let truth: Vec<f64> = (0..2)
            .map(|l| {
                let xs: Vec<f64> = (0..400).filter(|i| labels[*i] == l).map(|i| data.get(i, 0)).collect();
                xs.iter().sum::<f64>() / xs.len() as f64
            })
            .collect();
        let mut rng = RngSeed(3).rng();
        let p = em_fit(&data, 2, Constraint::Homo, &mut rng).unwrap();
        let mut means: Vec<f64> = p.means().iter().map(|m| m[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] - truth[0]).abs() < 0.2 && (means[1] - truth[1]).abs() < 0.2);
        assert!((means[0] + 5.0).abs() < 0.2 && (means[1] - 5.0).abs() < 0.2);
    }

    #[test]
    fn loglik_is_monotone() {
        let mut rng = RngSeed(11).rng();
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|i| {
                let c = (i % 3) as f64 * 1.5;
                vec![c + std_normal(&mut rng), -c + std_normal(&mut rng)]
            })
            .collect();
        let data = Matrix::from_rows(&rows).unwrap();
        for constraint in [Constraint::Homo, Constraint::Hetero] {
            for seed in 0..5 {
                let mut r = RngSeed(seed).rng();
                let opts = EmOptions {
                    restarts: 1,
                    ..EmOptions::default()
                };
                let fit = em_fit_with(&data, 3, constraint, &opts, &mut r).unwrap();
                assert_eq!(fit.reseeds, 0);
                for w in fit.trace.windows(2) {
                    assert!(w[1] >= w[0] - 1e-8, "{:?}", fit.trace);
                }
            }
        }
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let mut rng = RngSeed(1).rng();
        let same = Matrix::from_rows(&vec![vec![1.0, 2.0]; 10]).unwrap();
        assert!(matches!(em_fit(&same, 2, Constraint::Homo, &mut rng), Err(Error::DegenerateFit(_))));
        let small = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(em_fit(&small, 2, Constraint::Homo, &mut rng).is_err());
        assert!(em_fit(&small, 0, Constraint::Homo, &mut rng).is_err());
    }

    #[test]
    fn fully_missing_row_returns_weights() {
        let params = two_component_homo().with_weights(vec![0.3, 0.7]).unwrap();
        let s = discriminant_scores(&params, &[f64::NAN, f64::NAN], &[false, false]).unwrap();
        assert_eq!(s, vec![0.3, 0.7]);
    }

    #[test]
    fn midpoint_is_ambiguous_under_homo() {
        let params = two_component_homo();
        let s = discriminant_scores(&params, &[0.0, 1.0], &[true, true]).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-9 && (s[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn masked_scores_match_marginal_density_ratio() {
        let params = two_component_homo().with_weights(vec![0.4, 0.6]).unwrap();
        let y = 1.3;
        let s = discriminant_scores(&params, &[f64::NAN, y], &[false, true]).unwrap();
        // oracle: densities of the observed coordinate only
        let sd = 2.0_f64.sqrt();
        let f0 = 0.4 * Normal::new(0.0, sd).unwrap().pdf(y);
        let f1 = 0.6 * Normal::new(2.0, sd).unwrap().pdf(y);
        assert!((s[0] - f0 / (f0 + f1)).abs() < 1e-12);
    }

    #[test]
    fn hetero_scores_use_quadratic_form() {
        let c0 = CovMatrix::from_row_major(1, vec![1.0]).unwrap();
        let c1 = CovMatrix::from_row_major(1, vec![4.0]).unwrap();
        let params = MixtureParams::new(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![0.0]],
            Covariances::PerComponent(vec![c0, c1]),
        )
        .unwrap();
        let s = discriminant_scores(&params, &[0.5], &[true]).unwrap();
        let f0 = Normal::new(0.0, 1.0).unwrap().pdf(0.5);
        let f1 = Normal::new(0.0, 2.0).unwrap().pdf(0.5);
        assert!((s[0] - f0 / (f0 + f1)).abs() < 1e-12);
    }

    #[test]
    fn scores_invariant_to_density_shift() {
        // multiplying every component density by a common constant (a shift
        // in log space) leaves the posterior unchanged
        let mut a = vec![-3.0, -1.0, -2.5];
        let mut b: Vec<f64> = a.iter().map(|x| x + 700.0).collect();
        normalize_log(&mut a);
        normalize_log(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_point_at_mean() {
        let params = two_component_homo();
        let data = Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(classify(&params, &data).unwrap().labels(), &[0, 1]);
    }

    #[test]
    fn classify_matches_brute_force_density() {
        let c0 = CovMatrix::from_row_major(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let c1 = CovMatrix::from_row_major(2, vec![2.0, -0.3, -0.3, 0.5]).unwrap();
        let params = MixtureParams::new(
            vec![0.35, 0.65],
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            Covariances::PerComponent(vec![c0.clone(), c1.clone()]),
        )
        .unwrap();
        let mut rng = RngSeed(21).rng();
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![1.5 * std_normal(&mut rng), 1.5 * std_normal(&mut rng)])
            .collect();
        let data = Matrix::from_rows(&rows).unwrap();
        let labels = classify(&params, &data).unwrap();
        let density = |x: &[f64], m: &[f64], c: &CovMatrix| {
            let (a, b, d) = (c.get(0, 0), c.get(0, 1), c.get(1, 1));
            let det = a * d - b * b;
            let (u, v) = (x[0] - m[0], x[1] - m[1]);
            let q = (d * u * u - 2.0 * b * u * v + a * v * v) / det;
            (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
        };
        for (i, row) in rows.iter().enumerate() {
            let f0 = 0.35 * density(row, &[0.0, 0.0], &c0);
            let f1 = 0.65 * density(row, &[1.0, 1.0], &c1);
            assert_eq!(labels.labels()[i], usize::from(f1 > f0));
        }
        // rescaling the weights by a common factor changes nothing
        let same = params.with_weights(vec![0.35, 0.65]).unwrap();
        assert_eq!(classify(&same, &data).unwrap(), labels);
    }

    #[test]
    fn conditional_draw_keeps_observed() {
        let params = two_component_homo();
        let mut rng = RngSeed(5).rng();
        let row = [0.123456789, f64::NAN];
        let out = draw_conditional_missing(&params, &row, &[true, false], 1, &mut rng).unwrap();
        assert_eq!(out[0].to_bits(), row[0].to_bits());
        assert!(out[1].is_finite());
        let full = [0.5, 0.25];
        let same = draw_conditional_missing(&params, &full, &[true, true], 0, &mut rng).unwrap();
        assert_eq!(same, full.to_vec());
        assert!(draw_conditional_missing(&params, &full, &[true, true], 2, &mut rng).is_err());
    }

    #[test]
    fn conditional_draw_diagonal_is_marginal() {
        let cov = CovMatrix::from_row_major(2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let params =
            MixtureParams::new(vec![1.0], vec![vec![0.0, 3.0]], Covariances::Shared(cov)).unwrap();
        let mut rng = RngSeed(6).rng();
        let n = 100_000;
        let mut mean = 0.0;
        for _ in 0..n {
            let out = draw_conditional_missing(&params, &[5.0, f64::NAN], &[true, false], 0, &mut rng)
                .unwrap();
            mean += out[1] / n as f64;
        }
        assert!((mean - 3.0).abs() < 2e-2);
    }

    #[test]
    fn conditional_draw_correlated_mean() {
        let (s1, s2, rho) = (1.0, 2.0, 0.9);
        let cov = CovMatrix::from_row_major(2, vec![s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2])
            .unwrap();
        let params =
            MixtureParams::new(vec![1.0], vec![vec![1.0, -1.0]], Covariances::Shared(cov)).unwrap();
        let x1 = 1.0 + 2.0 * s1;
        let expected = -1.0 + rho * 2.0 * s1 * (s2 / s1);
        let mut rng = RngSeed(7).rng();
        let n = 100_000;
        let mut mean = 0.0;
        for _ in 0..n {
            let out =
                draw_conditional_missing(&params, &[x1, f64::NAN], &[true, false], 0, &mut rng).unwrap();
            mean += out[1] / n as f64;
        }
        assert!((mean - expected).abs() < 2e-2, "{mean} vs {expected}");
    }

    #[test]
    fn singular_restricted_covariance_reports_component() {
        let c0 = CovMatrix::identity(1);
        // a valid parameter set whose observed block is fine; build an
        // invalid one by hand through the unchecked constructor
        let bad = CovMatrix::from_row_major_unchecked(1, vec![0.0]);
        let params = MixtureParams::new(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![1.0]],
            Covariances::PerComponent(vec![c0, bad]),
        )
        .unwrap();
        match discriminant_scores(&params, &[0.0], &[true]) {
            Err(Error::SingularCovariance { component }) => assert_eq!(component, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0, 1, 2], 2).is_err());
        let p = Partition::new(vec![2, 2, 0], 3).unwrap();
        assert_eq!(p.counts(), vec![1, 0, 2]);
        assert_eq!(p.occupied(), 2);
        assert_eq!(p.canonical().labels(), &[0, 0, 1]);
    }
}
