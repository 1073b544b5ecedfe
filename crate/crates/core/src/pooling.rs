//! Pooling of partitions obtained on multiply imputed datasets: connectivity
//! matrices, Mirkin distance, adjusted Rand index, NMF consensus, bootstrap
//! instability and the choice of the number of clusters.

use rand::Rng;
use rayon::prelude::*;

use crate::clustering::{self, ClustererSpec};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::gmm::{argmax, Partition};
use crate::linalg::Matrix;
use crate::mechanisms::Dataset;
use crate::rand_dist::{ChainRng, RngSeed};

/// Same-cluster indicator matrix of a partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectivityMatrix {
    n: usize,
    data: Vec<bool>,
}

impl ConnectivityMatrix {
    /// Row-major `n x n` relation; not necessarily an equivalence.
    pub fn from_entries(n: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(ConnectivityMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n + j]
    }

    /// Partition whose connectivity is `self`, labelled by first appearance.
    /// Returns `None` when the relation is not an equivalence.
    pub fn to_partition(&self) -> Option<Partition> {
        let n = self.n;
        let mut labels = vec![usize::MAX; n];
        let mut next = 0;
        for i in 0..n {
            if labels[i] != usize::MAX {
                continue;
            }
            for j in i..n {
                if self.get(i, j) {
                    if labels[j] != usize::MAX {
                        return None;
                    }
                    labels[j] = next;
                }
            }
            next += 1;
        }
        let p = Partition::from_labels(labels);
        (connectivity(&p) == *self).then_some(p)
    }
}

pub fn connectivity(p: &Partition) -> ConnectivityMatrix {
    let l = p.labels();
    let n = l.len();
    let mut data = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = l[i] == l[j];
        }
    }
    ConnectivityMatrix { n, data }
}

fn check_same_n(a: &Partition, b: &Partition) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    Ok(())
}

/// Contingency table of two partitions plus row and column sums.
fn contingency(a: &Partition, b: &Partition) -> (Vec<u64>, Vec<u64>, Vec<u64>) {
    let (ka, kb) = (a.k(), b.k());
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        table[x * kb + y] += 1;
    }
    let rows = (0..ka).map(|r| table[r * kb..(r + 1) * kb].iter().sum()).collect();
    let cols = (0..kb).map(|c| (0..ka).map(|r| table[r * kb + c]).sum()).collect();
    (table, rows, cols)
}

/// Number of ordered pairs on which the two connectivity matrices disagree.
pub fn mirkin(a: &Partition, b: &Partition) -> Result<u64> {
    check_same_n(a, b)?;
    let (table, rows, cols) = contingency(a, b);
    let sq = |v: &[u64]| v.iter().map(|x| x * x).sum::<u64>();
    Ok(sq(&rows) + sq(&cols) - 2 * sq(&table))
}

/// Adjusted Rand index (Hubert and Arabie).
pub fn ari(a: &Partition, b: &Partition) -> Result<f64> {
    check_same_n(a, b)?;
    let n = a.n() as f64;
    let (table, rows, cols) = contingency(a, b);
    let pairs = |v: &[u64]| v.iter().map(|&x| (x * x.saturating_sub(1) / 2) as f64).sum::<f64>();
    let index = pairs(&table);
    let (sa, sb) = (pairs(&rows), pairs(&cols));
    let total = n * (n - 1.0) / 2.0;
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    let denom = max - expected;
    if denom.abs() < 1e-300 {
        // both partitions trivial (all singletons or one cluster)
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Average connectivity matrix (row-major `n x n`).
pub fn mean_connectivity(parts: &[Partition]) -> Result<Vec<f64>> {
    let first = parts.first().ok_or_else(|| Error::invalid("no partitions to pool"))?;
    let n = first.n();
    let mut m = vec![0.0; n * n];
    let w = 1.0 / parts.len() as f64;
    for p in parts {
        check_same_n(first, p)?;
        let l = p.labels();
        for i in 0..n {
            let row = &mut m[i * n..(i + 1) * n];
            for j in 0..n {
                if l[i] == l[j] {
                    row[j] += w;
                }
            }
        }
    }
    Ok(m)
}

/// `||M - H||^2` for the connectivity matrix `H` of `labels`.
pub fn consensus_objective(mean: &[f64], labels: &[usize]) -> f64 {
    let n = labels.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let h = if labels[i] == labels[j] { 1.0 } else { 0.0 };
            let d = mean[i * n + j] - h;
            s += d * d;
        }
    }
    s
}

#[derive(Clone, Debug)]
pub struct Consensus {
    pub partition: Partition,
    /// Average connectivity matrix, row-major `n x n`.
    pub mean_connectivity: Vec<f64>,
    pub objective: f64,
    /// False when the factorization hit the iteration cap before the
    /// tolerance; the best iterate is still used.
    pub nmf_converged: bool,
}

const NMF_MAX_ITER: usize = 500;
const NMF_TOL: f64 = 1e-7;
const RANDOM_STARTS: usize = 3;

/// Consensus partition with `k` clusters minimising `||M - H||^2`.
///
/// Symmetric NMF of the mean connectivity `M ≈ QQ'` is hardened by row
/// argmax and polished by single-row moves. The factorization is started
/// from k-means on the rows of `M` and from a few random matrices; the input
/// partitions themselves are also polished as candidates. The lowest
/// objective wins.
pub fn consensus<R: Rng + ?Sized>(parts: &[Partition], k: usize, rng: &mut R) -> Result<Consensus> {
    if k == 0 {
        return Err(Error::invalid("consensus needs k >= 1"));
    }
    let mean = mean_connectivity(parts)?;
    let n = parts[0].n();
    if n < k {
        return Err(Error::invalid(format!("cannot form {k} clusters from {n} rows")));
    }

    let mut candidates: Vec<Vec<usize>> = Vec::new();
    let mut converged = true;
    let norm_m: f64 = mean.iter().map(|v| v * v).sum();

    let mean_rows = Matrix::new(n, n, mean.clone())?;
    let km = clustering::kmeans(&mean_rows, k, rng)?;
    let mut q = vec![0.0; n * k];
    for (i, &l) in km.labels().iter().enumerate() {
        for c in 0..k {
            q[i * k + c] = if c == l { 1.0 } else { 0.0 } + 1e-3 * rng.random::<f64>();
        }
    }
    converged &= symmetric_nmf(parts, norm_m, k, &mut q);
    candidates.push(clustering::harden(&q, k));

    for part in parts {
        let mut c = part.canonical().into_labels();
        merge_down(&mean, n, k, &mut c);
        if !candidates.contains(&c) {
            candidates.push(c);
        }
    }

    for _ in 0..RANDOM_STARTS {
        let mut q: Vec<f64> = (0..n * k).map(|_| rng.random::<f64>()).collect();
        converged &= symmetric_nmf(parts, norm_m, k, &mut q);
        candidates.push(clustering::harden(&q, k));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for mut labels in candidates {
        local_search(&mean, n, k, &mut labels);
        let obj = consensus_objective(&mean, &labels);
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, labels));
        }
    }
    let (objective, labels) = best.expect("at least one candidate");
    Ok(Consensus {
        partition: Partition::new(labels, k)?.canonical_with_k(k),
        mean_connectivity: mean,
        objective,
        nmf_converged: converged,
    })
}

/// Multiplicative updates `Q <- Q * (1/2 + (MQ) / (2 QQ'Q))`. Returns whether
/// the relative objective change fell below the tolerance.
///
/// `M` is the mean of the connectivity matrices of `parts`, so `MQ` is
/// formed from per-cluster column sums of `Q` without touching `M`.
fn symmetric_nmf(parts: &[Partition], norm_m: f64, k: usize, q: &mut [f64]) -> bool {
    let n = parts[0].n();
    let w = 1.0 / parts.len() as f64;
    let mut mq = vec![0.0; n * k];
    let mut sums: Vec<f64> = Vec::new();
    let mut qtq = vec![0.0; k * k];
    let mut prev = f64::INFINITY;
    for _ in 0..NMF_MAX_ITER {
        mq.iter_mut().for_each(|v| *v = 0.0);
        for p in parts {
            let labels = p.labels();
            sums.clear();
            sums.resize(p.k() * k, 0.0);
            for (j, &l) in labels.iter().enumerate() {
                for c in 0..k {
                    sums[l * k + c] += q[j * k + c];
                }
            }
            for (i, &l) in labels.iter().enumerate() {
                for c in 0..k {
                    mq[i * k + c] += w * sums[l * k + c];
                }
            }
        }
        qtq.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            for a in 0..k {
                for b in 0..k {
                    qtq[a * k + b] += q[i * k + a] * q[i * k + b];
                }
            }
        }
        // ||M - QQ'||^2 = ||M||^2 - 2 tr(Q'MQ) + ||Q'Q||^2
        let cross: f64 = q.iter().zip(&mq).map(|(a, b)| a * b).sum();
        let quad: f64 = qtq.iter().map(|v| v * v).sum();
        let obj = norm_m - 2.0 * cross + quad;
        if (prev - obj).abs() <= NMF_TOL * obj.abs().max(1e-300) {
            return true;
        }
        prev = obj;
        for i in 0..n {
            for c in 0..k {
                let denom: f64 = (0..k).map(|b| q[i * k + b] * qtq[b * k + c]).sum();
                if denom > 0.0 {
                    q[i * k + c] *= 0.5 + 0.5 * mq[i * k + c] / denom;
                }
            }
        }
    }
    false
}

/// Merge clusters pairwise, cheapest first, until at most `k` remain.
/// Labels must be canonical.
fn merge_down(mean: &[f64], n: usize, k: usize, labels: &mut [usize]) {
    let mut count = labels.iter().max().map_or(0, |m| m + 1);
    while count > k {
        // b[a][c] = sum over i in a, j in c of (1 - 2 M_ij); merging a and c
        // changes the objective by 2 b[a][c]
        let mut b = vec![0.0; count * count];
        for i in 0..n {
            for j in 0..n {
                b[labels[i] * count + labels[j]] += 1.0 - 2.0 * mean[i * n + j];
            }
        }
        let mut best = (0, 1, f64::INFINITY);
        for a in 0..count {
            for c in (a + 1)..count {
                if b[a * count + c] < best.2 {
                    best = (a, c, b[a * count + c]);
                }
            }
        }
        let (a, c, _) = best;
        for l in labels.iter_mut() {
            if *l == c {
                *l = a;
            } else if *l > c {
                *l -= 1;
            }
        }
        count -= 1;
    }
}

/// Best-improvement single-row moves on `||M - H||^2`, keeping every one of
/// the `k` clusters non-empty.
fn local_search(mean: &[f64], n: usize, k: usize, labels: &mut [usize]) {
    let mut size = vec![0usize; k];
    labels.iter().for_each(|&l| size[l] += 1);
    // s[i*k + c] = sum over rows j != i in cluster c of (1 - 2 M_ij)
    let mut s = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s[i * k + labels[j]] += 1.0 - 2.0 * mean[i * n + j];
            }
        }
    }
    let move_row = |s: &mut [f64], i: usize, to: usize, labels: &mut [usize], size: &mut [usize]| {
        let from = labels[i];
        for j in 0..n {
            if j != i {
                let v = 1.0 - 2.0 * mean[j * n + i];
                s[j * k + from] -= v;
                s[j * k + to] += v;
            }
        }
        size[from] -= 1;
        size[to] += 1;
        labels[i] = to;
    };

    // fill empty clusters with the rows that are cheapest to move
    for c in 0..k {
        if size[c] == 0 {
            let mut best = (usize::MAX, f64::INFINITY);
            for i in 0..n {
                if size[labels[i]] > 1 {
                    let d = s[i * k + c] - s[i * k + labels[i]];
                    if d < best.1 {
                        best = (i, d);
                    }
                }
            }
            move_row(&mut s, best.0, c, labels, &mut size);
        }
    }

    loop {
        let mut best = (0, 0, -1e-12);
        for i in 0..n {
            let from = labels[i];
            if size[from] == 1 {
                continue;
            }
            for c in 0..k {
                if c != from {
                    // ordered pairs, hence the factor two
                    let d = 2.0 * (s[i * k + c] - s[i * k + from]);
                    if d < best.2 {
                        best = (i, c, d);
                    }
                }
            }
        }
        if best.2 >= -1e-12 {
            break;
        }
        move_row(&mut s, best.0, best.1, labels, &mut size);
    }
}

/// Bootstrap instability of a clustering method on one complete dataset.
///
/// In each of `rounds` rounds two bootstrap samples are clustered, both
/// clusterings are extended to every row, and the fraction of ordered row
/// pairs on which they disagree is recorded; the mean over rounds is returned.
pub fn instability_single<R: Rng + ?Sized>(
    data: &Matrix,
    spec: &ClustererSpec,
    rounds: usize,
    rng: &mut R,
) -> Result<f64> {
    if rounds == 0 {
        return Err(Error::invalid("instability needs at least one bootstrap round"));
    }
    let prepared = clustering::prepare(spec, data)?;
    let n = prepared.nrows();
    let mut total = 0.0;
    for _ in 0..rounds {
        let mut extended = Vec::with_capacity(2);
        for _ in 0..2 {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let sample = prepared.select_rows(&idx);
            let fit = clustering::fit_prepared(spec, &sample, rng)?;
            extended.push(fit.assign(&prepared)?);
        }
        total += mirkin(&extended[0], &extended[1])? as f64 / (n * n) as f64;
    }
    Ok(total / rounds as f64)
}

/// Mean per-copy instability plus the average pairwise Mirkin distance
/// between copies, scaled by `n^2`.
pub fn total_instability(parts: &[Partition], per_copy: &[f64]) -> Result<f64> {
    let m = parts.len();
    if m == 0 || per_copy.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: per_copy.len(),
        });
    }
    let n = parts[0].n() as f64;
    let within = per_copy.iter().sum::<f64>() / m as f64;
    let mut between = 0.0;
    for a in parts {
        for b in parts {
            between += mirkin(a, b)? as f64 / (n * n);
        }
    }
    Ok(within + between / (m * m) as f64)
}

#[derive(Clone, Debug)]
pub struct ConsensusResult {
    pub partition: Partition,
    pub mean_connectivity: Vec<f64>,
    /// Partitions of the individual completed datasets.
    pub copies: Vec<Partition>,
    /// `None` when instability was not requested.
    pub total_instability: Option<f64>,
    pub per_copy_instability: Option<Vec<f64>>,
    pub nmf_converged: bool,
}

/// Cluster each completed dataset, pool the partitions, and optionally
/// estimate the total instability with `instability_rounds` bootstrap pairs
/// per copy.
pub fn pool(
    completed: &[Matrix],
    spec: &ClustererSpec,
    instability_rounds: usize,
    seed: RngSeed,
) -> Result<ConsensusResult> {
    if completed.is_empty() {
        return Err(Error::invalid("no completed datasets to pool"));
    }
    let per_copy: Vec<(Partition, Option<f64>)> = completed
        .par_iter()
        .enumerate()
        .map(|(m, data)| -> Result<_> {
            let mut rng: ChainRng = seed.derive("cluster", m as u64).rng();
            let part = clustering::cluster(spec, data, &mut rng)?;
            let v = if instability_rounds > 0 {
                let mut rng = seed.derive("instability", m as u64).rng();
                Some(instability_single(data, spec, instability_rounds, &mut rng)?)
            } else {
                None
            };
            Ok((part, v))
        })
        .collect::<Result<_>>()?;
    let (copies, v): (Vec<Partition>, Vec<Option<f64>>) = per_copy.into_iter().unzip();
    let pooled = consensus(&copies, spec.k, &mut seed.derive("consensus", 0).rng())?;
    let per_copy_instability: Option<Vec<f64>> = v.into_iter().collect();
    let total_instability = match &per_copy_instability {
        Some(v) => Some(total_instability(&copies, v)?),
        None => None,
    };
    Ok(ConsensusResult {
        partition: pooled.partition,
        mean_connectivity: pooled.mean_connectivity,
        copies,
        total_instability,
        per_copy_instability,
        nmf_converged: pooled.nmf_converged,
    })
}

/// Total instability for each candidate number of clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct ChooseK {
    /// `(K, T_K)` for `K = 2..=k_max`.
    pub table: Vec<(usize, f64)>,
    /// Smallest `K` attaining the minimum instability.
    pub best_k: usize,
}

/// Impute, cluster and pool for every `K` in `2..=k_max` and report the
/// total instability of each.
pub fn choose_k(
    data: &Dataset,
    engine: &Engine,
    spec: &ClustererSpec,
    k_max: usize,
    instability_rounds: usize,
    seed: RngSeed,
) -> Result<ChooseK> {
    if k_max < 2 {
        return Err(Error::invalid("k_max must be at least 2"));
    }
    if instability_rounds == 0 {
        return Err(Error::invalid("choosing K needs instability rounds"));
    }
    let table = (2..=k_max)
        .map(|k| -> Result<(usize, f64)> {
            let imputed = engine.with_k(k).impute(data, seed.derive("impute", k as u64))?;
            let res = pool(
                &imputed.completed,
                &spec.with_k(k),
                instability_rounds,
                seed.derive("pool", k as u64),
            )?;
            Ok((k, res.total_instability.expect("instability requested")))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = table.iter().map(|t| -t.1).collect();
    let best_k = table[argmax(&values)].0;
    Ok(ChooseK { table, best_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::Method;
    use crate::rand_dist::std_normal;

    fn part(l: &[usize]) -> Partition {
        Partition::from_labels(l.to_vec())
    }

    #[test]
    fn connectivity_examples() {
        let c = connectivity(&part(&[0, 0, 1]));
        let expected = [[true, true, false], [true, true, false], [false, false, true]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c.get(i, j), expected[i][j]);
            }
        }
        assert_eq!(c, connectivity(&part(&[1, 1, 0])));
        let single = connectivity(&part(&[0, 1, 2, 3]));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(single.get(i, j), i == j);
            }
        }
        assert_eq!(c.to_partition().unwrap().labels(), &[0, 0, 1]);
    }

    #[test]
    fn mirkin_hand_values() {
        assert_eq!(mirkin(&part(&[0, 0, 1]), &part(&[0, 0, 1])).unwrap(), 0);
        assert_eq!(mirkin(&part(&[0, 0, 1]), &part(&[0, 1, 1])).unwrap(), 4);
        assert!(mirkin(&part(&[0, 1]), &part(&[0, 1, 1])).is_err());
    }

    #[test]
    fn ari_hand_values() {
        assert_eq!(ari(&part(&[0, 0, 1, 1]), &part(&[1, 1, 0, 0])).unwrap(), 1.0);
        // pair counts for (000111) vs (001111): together in both 4, only in the
        // first 2, only in the second 3, apart in both 6
        let v = ari(&part(&[0, 0, 0, 1, 1, 1]), &part(&[0, 0, 1, 1, 1, 1])).unwrap();
        let (a, b, c, d) = (4.0, 2.0, 3.0, 6.0);
        let n = a + b + c + d;
        let exp = (a + b) * (a + c) / n;
        let oracle = (a - exp) / (0.5 * ((a + b) + (a + c)) - exp);
        assert!((v - oracle).abs() < 1e-12, "{v} vs {oracle}");
        assert_eq!(ari(&part(&[0, 0, 0]), &part(&[0, 0, 0])).unwrap(), 1.0);
    }

    #[test]
    fn total_instability_hand_values() {
        let p = part(&[0, 0, 1]);
        assert_eq!(total_instability(std::slice::from_ref(&p), &[0.3]).unwrap(), 0.3);
        let t = total_instability(&[p.clone(), p.clone()], &[0.1, 0.3]).unwrap();
        assert!((t - 0.2).abs() < 1e-15);
        let t = total_instability(&[p, part(&[0, 1, 1])], &[0.0, 0.0]).unwrap();
        assert!((t - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn consensus_of_identical_inputs() {
        let p = part(&[0, 1, 1, 0, 2, 2, 1]);
        let c = consensus(&[p.clone(), p.clone(), p.clone()], 3, &mut RngSeed(1).rng()).unwrap();
        assert_eq!(ari(&c.partition, &p).unwrap(), 1.0);
        assert!(c.objective.abs() < 1e-12);
    }

    #[test]
    fn consensus_never_worse_than_best_input() {
        let mut rng = RngSeed(2).rng();
        for _ in 0..20 {
            let parts: Vec<Partition> = (0..5)
                .map(|_| Partition::new((0..30).map(|_| rng.random_range(0..3)).collect(), 3).unwrap())
                .collect();
            let c = consensus(&parts, 3, &mut rng).unwrap();
            let mean = mean_connectivity(&parts).unwrap();
            let best_input = parts
                .iter()
                .map(|p| consensus_objective(&mean, p.labels()))
                .fold(f64::INFINITY, f64::min);
            assert!(c.objective <= best_input + 1e-9);
            assert!((c.objective - consensus_objective(&mean, c.partition.labels())).abs() < 1e-9);
        }
    }

    #[test]
    fn instability_of_separated_blobs_is_small() {
        let mut rng = RngSeed(3).rng();
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|i| {
                let c = if i < 50 { 0.0 } else { 20.0 };
                vec![c + std_normal(&mut rng), std_normal(&mut rng)]
            })
            .collect();
        let data = Matrix::from_rows(&rows).unwrap();
        let spec = ClustererSpec::new(Method::Kmeans, 2);
        let v = instability_single(&data, &spec, 20, &mut rng).unwrap();
        assert!(v < 0.01, "{v}");
    }

    #[test]
    fn instability_of_structureless_data_is_large() {
        let mut rng = RngSeed(4).rng();
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![std_normal(&mut rng), std_normal(&mut rng)])
            .collect();
        let data = Matrix::from_rows(&rows).unwrap();
        let spec = ClustererSpec::new(Method::Kmeans, 2);
        let v = instability_single(&data, &spec, 20, &mut rng).unwrap();
        assert!(v > 0.1 && v <= 1.0, "{v}");
    }
}
