//! Incomplete datasets and synthetic missingness (amputation).

use rand::Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::gmm::Partition;
use crate::linalg::Matrix;

/// A data matrix with its observation mask and optional reference labels.
///
/// Missing cells hold `NaN` in `values`; `mask` is row-major with `true`
/// marking an observed cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    values: Matrix,
    mask: Vec<bool>,
    names: Vec<String>,
    ref_labels: Option<Partition>,
}

impl Dataset {
    /// Fully observed dataset with generated column names `V1..Vp`.
    pub fn complete(values: Matrix) -> Result<Self> {
        let mask = vec![true; values.nrows() * values.ncols()];
        Dataset::new(values, mask)
    }

    /// Cells marked missing are overwritten with `NaN`; observed cells must be
    /// finite.
    pub fn new(mut values: Matrix, mask: Vec<bool>) -> Result<Self> {
        let (n, p) = (values.nrows(), values.ncols());
        if mask.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                got: mask.len(),
            });
        }
        for i in 0..n {
            for j in 0..p {
                if !mask[i * p + j] {
                    values.set(i, j, f64::NAN);
                } else if !values.get(i, j).is_finite() {
                    return Err(Error::invalid(format!(
                        "observed cell ({i}, {j}) is not finite"
                    )));
                }
            }
        }
        let names = (1..=p).map(|j| format!("V{j}")).collect();
        Ok(Dataset {
            values,
            mask,
            names,
            ref_labels: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: names.len(),
            });
        }
        self.names = names;
        Ok(self)
    }

    pub fn with_ref_labels(mut self, labels: Partition) -> Result<Self> {
        if labels.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: labels.n(),
            });
        }
        self.ref_labels = Some(labels);
        Ok(self)
    }

    pub fn without_ref_labels(mut self) -> Self {
        self.ref_labels = None;
        self
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Observation flags of row `i`.
    pub fn observed_row(&self, i: usize) -> &[bool] {
        let p = self.p();
        &self.mask[i * p..(i + 1) * p]
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.p() + j]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ref_labels(&self) -> Option<&Partition> {
        self.ref_labels.as_ref()
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|o| !**o).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / self.mask.len().max(1) as f64
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|o| *o)
    }

    /// Rows with no observed cell.
    pub fn fully_missing_rows(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.observed_row(i).iter().all(|o| !o))
            .collect()
    }

    /// Same mask and metadata with the given completed values; observed
    /// cells must agree exactly.
    pub(crate) fn check_completion(&self, completed: &Matrix) -> bool {
        completed.nrows() == self.n()
            && completed.ncols() == self.p()
            && completed
                .as_slice()
                .iter()
                .zip(self.values.as_slice())
                .zip(&self.mask)
                .all(|((c, v), o)| c.is_finite() && (!o || c.to_bits() == v.to_bits()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    /// Every cell missing independently with probability `tau`.
    Mcar,
    /// Cell `(i, j)`, `j != driver_col`, missing with probability
    /// `Φ(a + x[i, driver_col])`.
    Mar { driver_col: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    /// Target fraction of missing cells among maskable cells.
    pub tau: f64,
}

impl MechanismSpec {
    pub fn mcar(tau: f64) -> Self {
        MechanismSpec {
            kind: MechanismKind::Mcar,
            tau,
        }
    }

    pub fn mar(tau: f64, driver_col: usize) -> Self {
        MechanismSpec {
            kind: MechanismKind::Mar { driver_col },
            tau,
        }
    }

    /// MAR driven by the first column.
    pub fn mar1(tau: f64) -> Self {
        MechanismSpec::mar(tau, 0)
    }

    /// MAR driven by the eighth column.
    pub fn mar2(tau: f64) -> Self {
        MechanismSpec::mar(tau, 7)
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!(
                "missing fraction must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if let MechanismKind::Mar { driver_col } = self.kind {
            if driver_col >= p {
                return Err(Error::invalid(format!(
                    "driver column {driver_col} out of range for {p} columns"
                )));
            }
            if p < 2 {
                return Err(Error::invalid("MAR needs at least two columns"));
            }
        }
        Ok(())
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Intercept `a` such that the mean of `Φ(a + x_i)` is `tau`, by bisection
/// on `[-12, 12]`.
pub fn calibrate_intercept(tau: f64, driver_values: &[f64]) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("tau must lie in (0, 1), got {tau}")));
    }
    if driver_values.is_empty() {
        return Err(Error::invalid("no driver values"));
    }
    if driver_values.iter().any(|x| !x.is_finite()) {
        return Err(Error::Calibration("driver values must be finite".into()));
    }
    let n = driver_values.len() as f64;
    let rate = |a: f64| driver_values.iter().map(|x| std_normal_cdf(a + x)).sum::<f64>() / n;
    let (mut lo, mut hi) = (-12.0, 12.0);
    let (r_lo, r_hi) = (rate(lo), rate(hi));
    if r_lo > tau + 1e-4 || r_hi < tau - 1e-4 {
        return Err(Error::Calibration(format!(
            "rate {tau} unattainable, achievable range [{r_lo}, {r_hi}]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let a = 0.5 * (lo + hi);
    if (rate(a) - tau).abs() > 1e-4 {
        return Err(Error::Calibration(format!("bisection stalled at a = {a}")));
    }
    Ok(a)
}

/// Mask cells of a complete dataset under `spec`.
///
/// Rows left fully missing get one uniformly chosen cell restored; the MAR
/// driver column is never masked.
pub fn ampute<R: Rng + ?Sized>(data: &Dataset, spec: &MechanismSpec, rng: &mut R) -> Result<Dataset> {
    if !data.is_complete() {
        return Err(Error::invalid("amputation needs a complete dataset"));
    }
    let (n, p) = (data.n(), data.p());
    spec.validate(p)?;
    let mut mask = vec![true; n * p];
    match spec.kind {
        MechanismKind::Mcar => {
            for m in mask.iter_mut() {
                *m = rng.random::<f64>() >= spec.tau;
            }
        }
        MechanismKind::Mar { driver_col } => {
            let drivers = data.values.column(driver_col);
            let a = calibrate_intercept(spec.tau, &drivers)?;
            for (i, x) in drivers.iter().enumerate() {
                let prob = std_normal_cdf(a + x);
                for j in 0..p {
                    if j != driver_col {
                        mask[i * p + j] = rng.random::<f64>() >= prob;
                    }
                }
            }
        }
    }
    for i in 0..n {
        let row = &mut mask[i * p..(i + 1) * p];
        if row.iter().all(|o| !o) {
            row[rng.random_range(0..p)] = true;
        }
    }
    let mut out = Dataset::new(data.values.clone(), mask)?;
    out.names = data.names.clone();
    out.ref_labels = data.ref_labels.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rand_dist::{std_normal, RngSeed};

    fn gaussian_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = RngSeed(seed).rng();
        let data: Vec<f64> = (0..n * p).map(|_| std_normal(&mut rng)).collect();
        Dataset::complete(Matrix::new(n, p, data).unwrap()).unwrap()
    }

    #[test]
    fn cdf_reference_values() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf(1.96) - 0.975_002_104_851_779_5).abs() < 1e-14);
        assert!((std_normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-13);
    }

    #[test]
    fn calibrate_zero_drivers() {
        let a = calibrate_intercept(0.5, &[0.0; 10]).unwrap();
        assert!(a.abs() < 1e-4);
        let a = calibrate_intercept(0.25, &[0.0; 10]).unwrap();
        assert!((a + 0.674_489_750_196_081_7).abs() < 1e-3);
    }

    #[test]
    fn calibrate_normal_drivers() {
        let mut rng = RngSeed(1).rng();
        let x: Vec<f64> = (0..100_000).map(|_| std_normal(&mut rng)).collect();
        let a = calibrate_intercept(0.4, &x).unwrap();
        let rate = x.iter().map(|v| std_normal_cdf(a + v)).sum::<f64>() / x.len() as f64;
        assert!((0.399..=0.401).contains(&rate));
    }

    #[test]
    fn calibrate_rejects_unattainable() {
        assert!(matches!(
            calibrate_intercept(0.5, &[100.0, 100.0]),
            Err(Error::Calibration(_))
        ));
        assert!(calibrate_intercept(0.0, &[0.0]).is_err());
        assert!(calibrate_intercept(0.5, &[]).is_err());
    }

    #[test]
    fn vanishing_rate_masks_nothing() {
        let data = gaussian_data(1000, 8, 2);
        let out = ampute(&data, &MechanismSpec::mcar(1e-6), &mut RngSeed(3).rng()).unwrap();
        assert!(out.missing_count() <= 1);
    }

    #[test]
    fn mcar_fraction_and_preservation() {
        let data = gaussian_data(750, 8, 4);
        let out = ampute(&data, &MechanismSpec::mcar(0.25), &mut RngSeed(5).rng()).unwrap();
        let f = out.missing_fraction();
        assert!((0.23..=0.27).contains(&f), "{f}");
        assert!(out.fully_missing_rows().is_empty());
        for (i, row) in data.values().rows().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if out.is_observed(i, j) {
                    assert_eq!(out.values().get(i, j).to_bits(), v.to_bits());
                } else {
                    assert!(out.values().get(i, j).is_nan());
                }
            }
        }
    }

    #[test]
    fn mar_spares_driver() {
        let data = gaussian_data(1000, 8, 6);
        let out = ampute(&data, &MechanismSpec::mar2(0.4), &mut RngSeed(7).rng()).unwrap();
        assert!((0..1000).all(|i| out.is_observed(i, 7)));
        let maskable = 1000.0 * 7.0;
        let frac = out.missing_count() as f64 / maskable;
        assert!((frac - 0.4).abs() < 0.02, "{frac}");
    }

    #[test]
    fn rejects_bad_spec() {
        let data = gaussian_data(10, 3, 8);
        let mut rng = RngSeed(9).rng();
        assert!(ampute(&data, &MechanismSpec::mar(0.3, 3), &mut rng).is_err());
        assert!(ampute(&data, &MechanismSpec::mcar(1.0), &mut rng).is_err());
        let partial = ampute(&data, &MechanismSpec::mcar(0.3), &mut rng).unwrap();
        assert!(ampute(&partial, &MechanismSpec::mcar(0.3), &mut rng).is_err());
    }

    #[test]
    fn high_rate_leaves_no_empty_rows() {
        let data = gaussian_data(500, 2, 10);
        let out = ampute(&data, &MechanismSpec::mcar(0.9), &mut RngSeed(11).rng()).unwrap();
        assert!(out.fully_missing_rows().is_empty());
    }
}
