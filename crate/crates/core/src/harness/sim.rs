//! The eleven simulation designs: 8 variables, the first four pure noise,
//! cluster means differing on the last four.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{Constraint, Partition};
use crate::linalg::{Cholesky, Matrix};
use crate::mechanisms::Dataset;
use crate::rand_dist::std_normal;

/// Identifier of a simulation design, `I` to `XI`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
    IX,
    X,
    XI,
}

impl ModelId {
    pub const ALL: [ModelId; 11] = [
        ModelId::I,
        ModelId::II,
        ModelId::III,
        ModelId::IV,
        ModelId::V,
        ModelId::VI,
        ModelId::VII,
        ModelId::VIII,
        ModelId::IX,
        ModelId::X,
        ModelId::XI,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::I => "I",
            ModelId::II => "II",
            ModelId::III => "III",
            ModelId::IV => "IV",
            ModelId::V => "V",
            ModelId::VI => "VI",
            ModelId::VII => "VII",
            ModelId::VIII => "VIII",
            ModelId::IX => "IX",
            ModelId::X => "X",
            ModelId::XI => "XI",
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let t = t.strip_prefix("MODEL-").unwrap_or(&t);
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == t)
            .ok_or_else(|| Error::Config(format!("unknown simulation model '{s}'")))
    }
}

/// Covariance of one generating component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CovKind {
    /// Identity on all 8 variables.
    Identity,
    /// Identity on the first four variables, equicorrelation `rho` on the last four.
    Block(f64),
}

impl CovKind {
    pub fn matrix(self) -> Vec<f64> {
        let p = 8;
        let mut m = vec![0.0; p * p];
        for i in 0..p {
            m[i * p + i] = 1.0;
        }
        if let CovKind::Block(rho) = self {
            for i in 4..p {
                for j in 4..p {
                    if i != j {
                        m[i * p + j] = rho;
                    }
                }
            }
        }
        m
    }
}

/// Parameters of one simulation design.
#[derive(Clone, Debug, PartialEq)]
pub struct SimModelSpec {
    pub id: ModelId,
    pub sizes: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<CovKind>,
    pub delta: f64,
    pub rho: f64,
}

pub fn mu_a(d: f64) -> Vec<f64> {
    vec![0.0, 0.0, 0.0, 0.0, d, d, 0.0, d * d]
}

pub fn mu_b(d: f64) -> Vec<f64> {
    vec![0.0, 0.0, 0.0, 0.0, -d, -d, -d, 0.0]
}

pub fn mu_c(d: f64) -> Vec<f64> {
    vec![0.0, 0.0, 0.0, 0.0, -d, d, d, -d * d]
}

impl SimModelSpec {
    pub fn new(id: ModelId) -> Self {
        let rho = 0.3;
        let three = |d: f64| vec![mu_a(d), mu_b(d), mu_c(d)];
        let homo = |k: usize| vec![CovKind::Block(rho); k];
        let hetero = vec![CovKind::Identity, CovKind::Block(rho), CovKind::Block(-rho)];
        let (sizes, delta, means, covs) = match id {
            ModelId::I => (vec![250; 3], 2.0, three(2.0), homo(3)),
            ModelId::II => (vec![250; 3], 1.5, three(1.5), homo(3)),
            ModelId::III => (vec![250; 3], 2.5, three(2.5), homo(3)),
            ModelId::IV => (vec![250; 2], 2.0, vec![mu_a(2.0), mu_b(2.0)], homo(2)),
            ModelId::V => {
                let mut m = three(2.0);
                m.push(mu_c(2.0).iter().map(|v| -v).collect());
                (vec![250; 4], 2.0, m, homo(4))
            }
            ModelId::VI => (vec![400; 3], 2.0, three(2.0), homo(3)),
            ModelId::VII => (vec![100; 3], 2.0, three(2.0), homo(3)),
            ModelId::VIII => (vec![250, 250, 100], 2.0, three(2.0), homo(3)),
            ModelId::IX => (vec![400, 250, 250], 2.0, three(2.0), homo(3)),
            ModelId::X => (vec![250; 3], 2.0, three(2.0), hetero.clone()),
            ModelId::XI => (vec![250; 3], 1.5, three(1.5), hetero),
        };
        SimModelSpec {
            id,
            sizes,
            means,
            covs,
            delta,
            rho,
        }
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Covariance structure of the generating mixture.
    pub fn constraint(&self) -> Constraint {
        if self.covs.windows(2).all(|w| w[0] == w[1]) {
            Constraint::Homo
        } else {
            Constraint::Hetero
        }
    }

    /// Draw a complete dataset; rows are grouped by component and the
    /// reference labels record the generating component.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        let p = 8;
        let mut data = Vec::with_capacity(self.n() * p);
        let mut labels = Vec::with_capacity(self.n());
        let mut z = vec![0.0; p];
        let mut x = vec![0.0; p];
        for (w, &size) in self.sizes.iter().enumerate() {
            let chol = Cholesky::new(&self.covs[w].matrix(), p)
                .ok_or_else(|| Error::invalid("simulation covariance is not positive definite"))?;
            for _ in 0..size {
                z.iter_mut().for_each(|v| *v = std_normal(rng));
                chol.mul_lower(&z, &mut x);
                data.extend(x.iter().zip(&self.means[w]).map(|(a, b)| a + b));
                labels.push(w);
            }
        }
        let names = (1..=p).map(|j| format!("X{j}")).collect();
        Dataset::complete(Matrix::new(self.n(), p, data)?)?
            .with_names(names)?
            .with_ref_labels(Partition::new(labels, self.k())?)
    }
}

/// Convenience wrapper over [`SimModelSpec::generate`].
pub fn generate_model<R: Rng + ?Sized>(spec: &SimModelSpec, rng: &mut R) -> Result<Dataset> {
    spec.generate(rng)
}
