//! Cluster analyses applied to completed datasets: Gaussian mixture
//! classification, k-means, PAM and Ward hierarchical clustering.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{self, argmax, sq_dist, Constraint, MixtureParams, Partition};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mixture,
    Kmeans,
    Pam,
    Hc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mixture => "mixture",
            Method::Kmeans => "kmeans",
            Method::Pam => "pam",
            Method::Hc => "hc",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mixture" | "gmm" => Ok(Method::Mixture),
            "kmeans" | "k-means" => Ok(Method::Kmeans),
            "pam" => Ok(Method::Pam),
            "hc" | "ward" => Ok(Method::Hc),
            other => Err(Error::Config(format!("unknown clustering method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClustererSpec {
    pub method: Method,
    pub k: usize,
    /// Covariance structure of the mixture model; ignored by other methods.
    pub constraint: Constraint,
    /// Scale columns to zero mean and unit sample variance before clustering.
    pub standardize: bool,
}

impl ClustererSpec {
    /// Distance-based methods standardize by default, the mixture model does not.
    pub fn new(method: Method, k: usize) -> Self {
        ClustererSpec {
            method,
            k,
            constraint: Constraint::Homo,
            standardize: method != Method::Mixture,
        }
    }

    pub fn mixture(k: usize, constraint: Constraint) -> Self {
        ClustererSpec {
            constraint,
            ..ClustererSpec::new(Method::Mixture, k)
        }
    }

    pub fn with_k(self, k: usize) -> Self {
        ClustererSpec { k, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("clustering needs k >= 2, got {}", self.k)));
        }
        Ok(())
    }
}

/// Centre columns and scale by the sample standard deviation (`n - 1`).
pub fn standardize(data: &Matrix) -> Result<Matrix> {
    let (n, p) = (data.nrows(), data.ncols());
    if n < 2 {
        return Err(Error::invalid("standardization needs at least two rows"));
    }
    let means = data.column_means();
    let mut sds = vec![0.0; p];
    for row in data.rows() {
        for j in 0..p {
            let d = row[j] - means[j];
            sds[j] += d * d;
        }
    }
    for (j, s) in sds.iter_mut().enumerate() {
        *s = (*s / (n - 1) as f64).sqrt();
        if !(*s > 1e-300) || !s.is_finite() {
            return Err(Error::ZeroVariance {
                column: j,
                name: format!("V{}", j + 1),
            });
        }
    }
    let mut out = data.clone();
    for i in 0..n {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (*v - means[j]) / sds[j];
        }
    }
    Ok(out)
}

/// k-means++ seeding: row indices of `k` initial centres.
pub(crate) fn kmeanspp_seeds<R: Rng + ?Sized>(data: &Matrix, k: usize, rng: &mut R) -> Vec<usize> {
    let n = data.nrows();
    let mut seeds = Vec::with_capacity(k);
    seeds.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = data.rows().map(|r| sq_dist(r, data.row(seeds[0]))).collect();
    while seeds.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            crate::rand_dist::sample_weighted(&d2, rng)
        } else {
            // every row coincides with a seed: pick an unused index
            let free: Vec<usize> = (0..n).filter(|i| !seeds.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        seeds.push(next);
        for (i, row) in data.rows().enumerate() {
            let d = sq_dist(row, data.row(next));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    seeds
}

/// Index of the nearest centre; ties go to the lowest index.
pub(crate) fn nearest(row: &[f64], centres: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centres.iter().enumerate() {
        let d = sq_dist(row, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct KmeansFit {
    pub partition: Partition,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    /// Within-cluster sum of squares after each Lloyd update of the winning run.
    pub history: Vec<f64>,
}

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 300;

/// Lloyd's algorithm from 10 k-means++ starts; the lowest WCSS wins.
pub fn kmeans<R: Rng + ?Sized>(data: &Matrix, k: usize, rng: &mut R) -> Result<Partition> {
    kmeans_fit(data, k, rng).map(|f| f.partition)
}

pub fn kmeans_fit<R: Rng + ?Sized>(data: &Matrix, k: usize, rng: &mut R) -> Result<KmeansFit> {
    let n = data.nrows();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("k-means needs 1 <= k <= n (n = {n}, k = {k})")));
    }
    let mut best: Option<KmeansFit> = None;
    for _ in 0..KMEANS_RESTARTS {
        let seeds = kmeanspp_seeds(data, k, rng);
        let fit = lloyd(data, seeds.iter().map(|&s| data.row(s).to_vec()).collect());
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(data: &Matrix, mut centroids: Vec<Vec<f64>>) -> KmeansFit {
    let (n, p, k) = (data.nrows(), data.ncols(), centroids.len());
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, row) in data.rows().enumerate() {
            let (c, d) = nearest(row, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = d;
        }
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        // an empty cluster takes over the point farthest from its centroid
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .fold(None::<usize>, |acc, i| match acc {
                        Some(a) if dists[a] >= dists[i] => Some(a),
                        _ => Some(i),
                    });
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    labels[i] = c;
                    counts[c] = 1;
                    dists[i] = 0.0;
                    changed = true;
                }
            }
        }
        for c in centroids.iter_mut() {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        for (row, &l) in data.rows().zip(&labels) {
            for (c, x) in centroids[l].iter_mut().zip(row) {
                *c += x;
            }
        }
        for (c, &m) in centroids.iter_mut().zip(&counts) {
            if m > 0 {
                c.iter_mut().for_each(|v| *v /= m as f64);
            }
        }
        history.push(wcss(data, &labels, &centroids));
        if !changed {
            break;
        }
    }
    debug_assert_eq!(centroids[0].len(), p);
    let wcss = *history.last().unwrap_or(&0.0);
    KmeansFit {
        partition: Partition::new(labels, k).expect("labels below k"),
        centroids,
        wcss,
        history,
    }
}

/// Within-cluster sum of squared distances to the given centres.
pub fn wcss(data: &Matrix, labels: &[usize], centres: &[Vec<f64>]) -> f64 {
    data.rows()
        .zip(labels)
        .map(|(row, &l)| sq_dist(row, &centres[l]))
        .sum()
}

/// Cluster means of a labelled dataset (empty clusters get the zero vector).
pub fn cluster_means(data: &Matrix, partition: &Partition) -> Vec<Vec<f64>> {
    let p = data.ncols();
    let mut means = vec![vec![0.0; p]; partition.k()];
    let counts = partition.counts();
    for (row, &l) in data.rows().zip(partition.labels()) {
        for (m, x) in means[l].iter_mut().zip(row) {
            *m += x;
        }
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        if c > 0 {
            m.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    means
}

#[derive(Clone, Debug)]
pub struct PamFit {
    pub partition: Partition,
    /// Row indices of the medoids, in cluster order.
    pub medoids: Vec<usize>,
    /// Sum of Euclidean distances to the nearest medoid.
    pub cost: f64,
    /// Cost after BUILD and after every accepted swap.
    pub history: Vec<f64>,
}

/// Partitioning around medoids (BUILD then SWAP) on Euclidean distances.
/// Deterministic: ties go to the lowest index.
pub fn pam(data: &Matrix, k: usize) -> Result<Partition> {
    pam_fit(data, k).map(|f| f.partition)
}

pub fn pam_fit(data: &Matrix, k: usize) -> Result<PamFit> {
    let n = data.nrows();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("PAM needs 1 <= k <= n (n = {n}, k = {k})")));
    }
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let d = sq_dist(data.row(i), data.row(j)).sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let d = |i: usize, j: usize| dist[i * n + j];

    // BUILD
    let mut medoids = Vec::with_capacity(k);
    let mut near = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best = (usize::MAX, f64::INFINITY);
        for c in 0..n {
            if medoids.contains(&c) {
                continue;
            }
            let cost: f64 = (0..n).map(|j| near[j].min(d(c, j))).sum();
            if cost < best.1 {
                best = (c, cost);
            }
        }
        medoids.push(best.0);
        for j in 0..n {
            near[j] = near[j].min(d(best.0, j));
        }
    }

    // SWAP
    let assign = |medoids: &[usize]| -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        let mut lab = vec![0; n];
        let mut d1 = vec![f64::INFINITY; n];
        let mut d2 = vec![f64::INFINITY; n];
        for j in 0..n {
            for (c, &m) in medoids.iter().enumerate() {
                let v = d(m, j);
                if v < d1[j] {
                    d2[j] = d1[j];
                    d1[j] = v;
                    lab[j] = c;
                } else if v < d2[j] {
                    d2[j] = v;
                }
            }
        }
        (lab, d1, d2)
    };
    let (mut lab, mut d1, mut d2) = assign(&medoids);
    let mut cost: f64 = d1.iter().sum();
    let mut history = vec![cost];
    loop {
        let mut best = (0usize, 0usize, 0.0f64);
        for h in 0..n {
            if medoids.contains(&h) {
                continue;
            }
            for c in 0..k {
                let mut delta = 0.0;
                for j in 0..n {
                    let dh = d(h, j);
                    if lab[j] == c {
                        delta += dh.min(d2[j]) - d1[j];
                    } else if dh < d1[j] {
                        delta += dh - d1[j];
                    }
                }
                if delta < best.2 {
                    best = (c, h, delta);
                }
            }
        }
        if best.2 >= -1e-12 * cost.max(f64::MIN_POSITIVE) {
            break;
        }
        medoids[best.0] = best.1;
        (lab, d1, d2) = assign(&medoids);
        cost = d1.iter().sum();
        history.push(cost);
    }
    Ok(PamFit {
        partition: Partition::new(lab, k)?,
        medoids,
        cost,
        history,
    })
}

/// One agglomeration step of Ward's method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    /// Lowest original row index contained in each merged cluster.
    pub a: usize,
    pub b: usize,
    /// Increase in the total within-cluster sum of squares.
    pub height: f64,
}

/// Ward hierarchical clustering cut at `k` clusters.
pub fn ward_hclust(data: &Matrix, k: usize) -> Result<Partition> {
    let n = data.nrows();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("Ward clustering needs 1 <= k <= n (n = {n}, k = {k})")));
    }
    let (labels, _) = ward(data, k);
    Ok(Partition::new(labels, k)?.canonical_with_k(k))
}

/// Full merge sequence (`n - 1` steps) of Ward's method.
pub fn ward_merges(data: &Matrix) -> Vec<Merge> {
    ward(data, 1).1
}

/// Lance-Williams agglomeration on half squared Euclidean distances, so the
/// stored dissimilarity of two clusters is exactly the WCSS increase of
/// merging them. Stops at `k` clusters.
fn ward(data: &Matrix, k: usize) -> (Vec<usize>, Vec<Merge>) {
    let n = data.nrows();
    let mut dis = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * sq_dist(data.row(i), data.row(j));
            dis[i * n + j] = v;
            dis[j * n + i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active: Vec<bool> = vec![true; n];
    // cluster representative per row
    let mut owner: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut clusters = n;
    while clusters > k {
        let mut best = (0, 0, f64::INFINITY);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && dis[i * n + j] < best.2 {
                    best = (i, j, dis[i * n + j]);
                }
            }
        }
        let (i, j, h) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for m in 0..n {
            if !active[m] || m == i || m == j {
                continue;
            }
            let nm = size[m] as f64;
            let v = ((ni + nm) * dis[i * n + m] + (nj + nm) * dis[j * n + m] - nm * h)
                / (ni + nj + nm);
            dis[i * n + m] = v;
            dis[m * n + i] = v;
        }
        size[i] += size[j];
        active[j] = false;
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
        merges.push(Merge { a: i, b: j, height: h });
        clusters -= 1;
    }
    let mut map = vec![usize::MAX; n];
    let mut next = 0;
    let labels = owner
        .iter()
        .map(|&o| {
            if map[o] == usize::MAX {
                map[o] = next;
                next += 1;
            }
            map[o]
        })
        .collect();
    (labels, merges)
}

impl Partition {
    /// Canonical relabelling that keeps the declared cluster count.
    pub(crate) fn canonical_with_k(&self, k: usize) -> Partition {
        let c = self.canonical();
        Partition::new(c.into_labels(), k.max(1)).expect("canonical labels below k")
    }
}

/// Gaussian mixture fit followed by MAP classification.
pub fn mixture_cluster<R: Rng + ?Sized>(
    data: &Matrix,
    k: usize,
    constraint: Constraint,
    rng: &mut R,
) -> Result<Partition> {
    let params = gmm::em_fit(data, k, constraint, rng)?;
    gmm::classify(&params, data)
}

/// A clustering of some rows together with the rule that extends it to new rows.
#[derive(Clone, Debug)]
pub struct FittedClustering {
    pub partition: Partition,
    rule: Extension,
}

#[derive(Clone, Debug)]
enum Extension {
    Centres(Vec<Vec<f64>>),
    Mixture(MixtureParams),
}

impl FittedClustering {
    /// Label rows by nearest centre (distance methods) or maximum posterior
    /// (mixture).
    pub fn assign(&self, data: &Matrix) -> Result<Partition> {
        match &self.rule {
            Extension::Centres(c) => {
                let labels = data.rows().map(|r| nearest(r, c).0).collect();
                Partition::new(labels, c.len())
            }
            Extension::Mixture(params) => gmm::classify(params, data),
        }
    }
}

/// Fit `spec` to data that is already on the scale the method should see.
pub fn fit_prepared<R: Rng + ?Sized>(
    spec: &ClustererSpec,
    data: &Matrix,
    rng: &mut R,
) -> Result<FittedClustering> {
    spec.validate()?;
    let fitted = match spec.method {
        Method::Mixture => {
            let params = gmm::em_fit(data, spec.k, spec.constraint, rng)?;
            FittedClustering {
                partition: gmm::classify(&params, data)?,
                rule: Extension::Mixture(params),
            }
        }
        Method::Kmeans => {
            let fit = kmeans_fit(data, spec.k, rng)?;
            FittedClustering {
                partition: fit.partition,
                rule: Extension::Centres(fit.centroids),
            }
        }
        Method::Pam => {
            let fit = pam_fit(data, spec.k)?;
            let centres = fit.medoids.iter().map(|&m| data.row(m).to_vec()).collect();
            FittedClustering {
                partition: fit.partition,
                rule: Extension::Centres(centres),
            }
        }
        Method::Hc => {
            let partition = ward_hclust(data, spec.k)?;
            let centres = cluster_means(data, &partition);
            FittedClustering {
                partition,
                rule: Extension::Centres(centres),
            }
        }
    };
    Ok(fitted)
}

/// Apply the scaling requested by `spec`.
pub fn prepare(spec: &ClustererSpec, data: &Matrix) -> Result<Matrix> {
    if spec.standardize {
        standardize(data)
    } else {
        Ok(data.clone())
    }
}

/// Standardize when requested, then cluster.
pub fn cluster<R: Rng + ?Sized>(spec: &ClustererSpec, data: &Matrix, rng: &mut R) -> Result<Partition> {
    let prepared = prepare(spec, data)?;
    fit_prepared(spec, &prepared, rng).map(|f| f.partition)
}

/// Row-wise argmax of a row-major `n x k` score matrix.
pub(crate) fn harden(scores: &[f64], k: usize) -> Vec<usize> {
    scores.chunks(k).map(argmax).collect()
}
