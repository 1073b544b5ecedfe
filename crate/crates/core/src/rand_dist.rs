//! Seeded random draws for the samplers.
//!
//! Every stream is a ChaCha8 generator seeded from a 64-bit [`RngSeed`].
//! Independent streams (per replicate, per chain, per bootstrap round) are
//! derived by hashing the parent seed with a tag and an index, so parallel
//! execution never changes results.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{mirror_lower, Cholesky};

pub type ChainRng = ChaCha8Rng;

/// A 64-bit master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChainRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Child seed for sub-stream `(tag, index)`.
    pub fn derive(self, tag: &str, index: u64) -> RngSeed {
        // FNV-1a over the tag keeps the derivation independent of std's hasher.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in tag.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        RngSeed(splitmix64(self.0 ^ splitmix64(h ^ splitmix64(index))))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Symmetric positive definite covariance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    /// Validates symmetry (relative tolerance 1e-10) and positive definiteness,
    /// then stores the exactly symmetrised matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("covariance matrix must be square"));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::invalid("covariance matrix is not symmetric"));
        }
        let sym = (&m + m.transpose()) * 0.5;
        if Cholesky::new(sym.as_slice(), sym.nrows()).is_none() {
            return Err(Error::invalid("covariance matrix is not positive definite"));
        }
        Ok(CovMatrix(sym))
    }

    pub fn from_row_major(p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != p * p {
            return Err(Error::DimensionMismatch {
                expected: p * p,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(p, p, &data))
    }

    /// Caller guarantees a symmetric positive definite row-major matrix.
    pub(crate) fn from_row_major_unchecked(p: usize, data: Vec<f64>) -> Self {
        CovMatrix(DMatrix::from_vec(p, p, data))
    }

    pub fn identity(p: usize) -> Self {
        CovMatrix(DMatrix::identity(p, p))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Entries in row-major order (identical to column-major by symmetry).
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.0 * c)
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::new(self.as_slice(), self.dim())
            .ok_or_else(|| Error::invalid("covariance lost positive definiteness"))
    }
}

#[inline]
pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw from a Dirichlet distribution with concentration `alpha`.
pub fn draw_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::invalid("Dirichlet needs at least one component"));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::invalid(format!("Dirichlet concentration {a} is not positive")));
    }
    // Work with log-gammas: for shape < 1, G(a) = G(a + 1) U^{1/a}, which
    // keeps tiny concentrations from underflowing to an all-zero draw.
    let mut logs = Vec::with_capacity(alpha.len());
    for &a in alpha {
        let lg = if a < 1.0 {
            let g: f64 = Gamma::new(a + 1.0, 1.0)
                .map_err(|e| Error::invalid(e.to_string()))?
                .sample(rng);
            let u: f64 = rng.random::<f64>();
            g.ln() + u.ln() / a
        } else {
            let g: f64 = Gamma::new(a, 1.0)
                .map_err(|e| Error::invalid(e.to_string()))?
                .sample(rng);
            g.ln()
        };
        logs.push(lg);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Draw from an inverse-Wishart distribution with `df` degrees of freedom and
/// scale matrix `scale`, parametrised so that `E[S] = scale / (df - p - 1)`.
///
/// Uses the Bartlett decomposition: with `scale = C C^T` and `A` the Bartlett
/// factor of a standard Wishart, `S = (C A^{-T}) (C A^{-T})^T`.
pub fn draw_inverse_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &CovMatrix,
    rng: &mut R,
) -> Result<CovMatrix> {
    let p = scale.dim();
    if !(df > p as f64 - 1.0) {
        return Err(Error::invalid(format!(
            "inverse-Wishart needs df > p - 1 (df = {df}, p = {p})"
        )));
    }
    let c = scale.cholesky()?;
    let data = inverse_wishart_from_factor(df, &c, rng)?;
    Ok(CovMatrix::from_row_major_unchecked(p, data))
}

pub(crate) fn inverse_wishart_from_factor<R: Rng + ?Sized>(
    df: f64,
    scale_factor: &Cholesky,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = scale_factor.dim();
    // Bartlett factor A (lower triangular, row-major).
    let mut a = vec![0.0; p * p];
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| Error::invalid(e.to_string()))?;
        let v: f64 = chi.sample(rng);
        a[i * p + i] = v.sqrt();
        for j in 0..i {
            a[i * p + j] = std_normal(rng);
        }
    }
    // Inverse of A, lower triangular.
    let mut ainv = vec![0.0; p * p];
    for j in 0..p {
        ainv[j * p + j] = 1.0 / a[j * p + j];
        for i in j + 1..p {
            let mut s = 0.0;
            for k in j..i {
                s -= a[i * p + k] * ainv[k * p + j];
            }
            ainv[i * p + j] = s / a[i * p + i];
        }
    }
    // T = C A^{-T}; (A^{-T})_{kj} = ainv[j][k], non-zero for k <= j.
    let cl = scale_factor.factor();
    let mut t = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..=i.min(j) {
                s += cl[i * p + k] * ainv[j * p + k];
            }
            t[i * p + j] = s;
        }
    }
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..p {
                s += t[i * p + k] * t[j * p + k];
            }
            out[i * p + j] = s;
        }
    }
    mirror_lower(&mut out, p);
    if Cholesky::new(&out, p).is_none() {
        return Err(Error::invalid("inverse-Wishart draw is numerically singular"));
    }
    Ok(out)
}

/// Draw from `N(mean, cov)`.
///
/// A zero covariance returns `mean` exactly. If the Cholesky factorisation
/// fails, `1e-8 * trace / p` is added to the diagonal once before giving up.
pub fn draw_mvnormal<R: Rng + ?Sized>(
    mean: &[f64],
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = mean.len();
    if cov.nrows() != p || cov.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: cov.nrows(),
        });
    }
    let sym = (cov + cov.transpose()) * 0.5;
    mvnormal_row_major(mean, sym.as_slice(), rng)
}

pub(crate) fn mvnormal_row_major<R: Rng + ?Sized>(
    mean: &[f64],
    cov: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = mean.len();
    if cov.iter().all(|&c| c == 0.0) {
        return Ok(mean.to_vec());
    }
    let chol = jittered_cholesky(cov, p)
        .ok_or_else(|| Error::invalid("covariance is not positive semi-definite"))?;
    let z: Vec<f64> = (0..p).map(|_| std_normal(rng)).collect();
    let mut out = vec![0.0; p];
    chol.mul_lower(&z, &mut out);
    for (o, m) in out.iter_mut().zip(mean) {
        *o += m;
    }
    Ok(out)
}

/// Cholesky with a single `1e-8 * trace / p` diagonal jitter on failure.
pub(crate) fn jittered_cholesky(cov: &[f64], p: usize) -> Option<Cholesky> {
    if let Some(c) = Cholesky::new(cov, p) {
        return Some(c);
    }
    let tr = crate::linalg::trace(cov, p);
    if !(tr > 0.0) {
        return None;
    }
    let mut jittered = cov.to_vec();
    let eps = 1e-8 * tr / p as f64;
    for i in 0..p {
        jittered[i * p + i] += eps;
    }
    Cholesky::new(&jittered, p)
}

/// Draw an index with probability proportional to `probs`.
pub fn draw_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::invalid("categorical needs at least one category"));
    }
    if probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(Error::invalid("categorical probabilities must be non-negative"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "categorical probabilities sum to {total}, not 1"
        )));
    }
    Ok(sample_weighted(probs, rng))
}

/// Unchecked categorical draw from non-negative weights with a positive sum.
#[inline]
pub(crate) fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
