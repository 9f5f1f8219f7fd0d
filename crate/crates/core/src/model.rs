//! Class-conditional zero-mean Gaussian models on low-rank subspaces,
//! sampling from the observation model, and ML estimation with truncation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numlin::{self, Matrix, Vector, DEFAULT_RANK_TOL, PSD_SLACK};
use crate::subspace::Subspace;

/// How many leading eigenpairs of a covariance to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankSpec {
    Explicit(usize),
    /// Keep eigenvalues above `rel_tol * lambda_max`.
    Tolerance(f64),
}

impl Default for RankSpec {
    fn default() -> Self {
        RankSpec::Tolerance(DEFAULT_RANK_TOL)
    }
}

#[derive(Debug, Clone)]
pub struct ClassModel {
    pub prior: f64,
    /// Truncated covariance `U diag(lambda) U^T`.
    pub covariance: Matrix,
    pub basis: Subspace,
    /// Positive, descending.
    pub eigenvalues: Vec<f64>,
}

impl ClassModel {
    pub fn from_covariance(prior: f64, cov: &Matrix, rank: RankSpec) -> Result<Self> {
        if !(prior > 0.0 && prior <= 1.0) {
            return Err(Error::InvalidArgument(format!("prior {prior} outside (0, 1]")));
        }
        let n = cov.nrows();
        let eig = numlin::sym_eig(cov)?;
        let top = eig.max_eigenvalue().unwrap_or(0.0).max(0.0);
        let bottom = eig.min_eigenvalue().unwrap_or(0.0);
        if bottom < -PSD_SLACK * top || (top == 0.0 && bottom < 0.0) {
            return Err(Error::NotPsd(bottom));
        }
        let values: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let available = numlin::rank_with_tol(&values, DEFAULT_RANK_TOL);
        let r = match rank {
            RankSpec::Explicit(r) => {
                if r > n {
                    return Err(Error::RankExceedsAmbient { rank: r, ambient: n });
                }
                if r > available {
                    return Err(Error::RankDeficient { rank: r, available });
                }
                r
            }
            RankSpec::Tolerance(tol) => numlin::rank_with_tol(&values, tol),
        };
        let basis = eig.eigenvectors.columns(0, r).into_owned();
        let eigenvalues = values[..r].to_vec();
        Ok(Self::assemble(prior, basis, eigenvalues)?)
    }

    /// Model `basis diag(eigenvalues) basis^T` from an orthonormal basis.
    pub fn from_factors(prior: f64, basis: Subspace, eigenvalues: Vec<f64>) -> Result<Self> {
        if basis.dim() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: eigenvalues.len(),
            });
        }
        if eigenvalues.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument("eigenvalues must be positive".into()));
        }
        if !(prior > 0.0 && prior <= 1.0) {
            return Err(Error::InvalidArgument(format!("prior {prior} outside (0, 1]")));
        }
        // keep the descending order invariant
        let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
        let b = basis.basis();
        let sorted = Matrix::from_fn(b.nrows(), b.ncols(), |r, c| b[(r, order[c])]);
        let vals = order.iter().map(|&k| eigenvalues[k]).collect();
        Self::assemble(prior, sorted, vals)
    }

    fn assemble(prior: f64, basis: Matrix, eigenvalues: Vec<f64>) -> Result<Self> {
        let scaled = Matrix::from_fn(basis.nrows(), basis.ncols(), |r, c| basis[(r, c)] * eigenvalues[c]);
        let covariance = &scaled * basis.transpose();
        Ok(Self {
            prior,
            covariance,
            basis: Subspace::from_orthonormal(basis)?,
            eigenvalues,
        })
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.ambient_dim()
    }

    pub fn largest_eigenvalue(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }

    pub fn smallest_eigenvalue(&self) -> Option<f64> {
        self.eigenvalues.last().copied()
    }

    /// Log pseudo-determinant of the covariance (sum of log eigenvalues).
    pub fn log_pdet(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v.ln()).sum()
    }

    /// `log |Sigma + s2 I|` from the eigen-factors.
    pub fn logdet_plus_noise(&self, s2: f64) -> f64 {
        let n = self.ambient_dim();
        self.eigenvalues.iter().map(|l| (l + s2).ln()).sum::<f64>() + (n - self.rank()) as f64 * s2.ln()
    }

    /// `(Sigma + s2 I)^{-1}` assembled from the eigen-factors.
    pub fn inverse_plus_noise(&self, s2: f64) -> Matrix {
        let n = self.ambient_dim();
        let u = self.basis.basis();
        let mut out = Matrix::identity(n, n) / s2;
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let col = u.column(k);
            out += (1.0 / (l + s2) - 1.0 / s2) * &col * col.transpose();
        }
        out
    }

    /// `U diag(1 / (lambda + s2)) U^T`; `s2 = 0` gives the noiseless limit.
    pub fn range_inverse(&self, s2: f64) -> Matrix {
        let n = self.ambient_dim();
        let u = self.basis.basis();
        let mut out = Matrix::zeros(n, n);
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let col = u.column(k);
            out += (1.0 / (l + s2)) * &col * col.transpose();
        }
        out
    }

    /// Projector onto the kernel of the covariance.
    pub fn kernel_projector(&self) -> Matrix {
        let n = self.ambient_dim();
        Matrix::identity(n, n) - self.basis.projector()
    }
}

/// True and mismatched model families for the same `C` classes.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub ambient_dim: usize,
    pub true_models: Vec<ClassModel>,
    pub mismatched_models: Vec<ClassModel>,
}

impl ProblemInstance {
    pub fn new(true_models: Vec<ClassModel>, mismatched_models: Vec<ClassModel>) -> Result<Self> {
        let c = true_models.len();
        if c < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 classes, got {c}")));
        }
        if mismatched_models.len() != c {
            return Err(Error::InvalidInstance(format!(
                "{c} true models but {} mismatched models",
                mismatched_models.len()
            )));
        }
        let n = true_models[0].ambient_dim();
        if let Some(m) = true_models
            .iter()
            .chain(&mismatched_models)
            .find(|m| m.ambient_dim() != n)
        {
            return Err(Error::InvalidInstance(format!(
                "mixed ambient dimensions {n} and {}",
                m.ambient_dim()
            )));
        }
        for (name, family) in [("true", &true_models), ("mismatched", &mismatched_models)] {
            let total: f64 = family.iter().map(|m| m.prior).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInstance(format!("{name} priors sum to {total}")));
            }
        }
        Ok(Self {
            ambient_dim: n,
            true_models,
            mismatched_models,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.true_models.len()
    }

    /// Ordered pairs `(i, j)`, `i != j`, in row-major order.
    pub fn ordered_pairs(&self) -> Vec<(usize, usize)> {
        let c = self.num_classes();
        (0..c)
            .flat_map(|i| (0..c).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect()
    }

    /// Same instance with the mismatched family replaced by the true one.
    pub fn matched(&self) -> Self {
        Self {
            ambient_dim: self.ambient_dim,
            true_models: self.true_models.clone(),
            mismatched_models: self.true_models.clone(),
        }
    }
}

/// Generator for stream `stream` of the 64-bit master seed. Streams are
/// independent, so per-trial draws do not depend on scheduling.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Draws `(label, y)` with `y = x + n` from the true models.
pub fn sample<R: Rng + ?Sized>(instance: &ProblemInstance, s2: f64, rng: &mut R) -> (usize, Vector) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut label = instance.num_classes() - 1;
    for (k, m) in instance.true_models.iter().enumerate() {
        acc += m.prior;
        if u < acc {
            label = k;
            break;
        }
    }
    let y = sample_class(&instance.true_models[label], s2, rng);
    (label, y)
}

pub fn sample_class<R: Rng + ?Sized>(model: &ClassModel, s2: f64, rng: &mut R) -> Vector {
    let n = model.ambient_dim();
    let basis = model.basis.basis();
    let mut y = Vector::zeros(n);
    for (k, &l) in model.eigenvalues.iter().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        y.axpy(l.sqrt() * z, &basis.column(k), 1.0);
    }
    let sd = s2.sqrt();
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sd * e;
    }
    y
}

/// Zero-mean ML covariance `X^T X / n` of the sample rows, truncated to `rank`.
pub fn estimate_from_samples(samples: &Matrix, prior: f64, rank: usize) -> Result<ClassModel> {
    let (n, dim) = samples.shape();
    if n == 0 {
        return Err(Error::EmptySampleSet);
    }
    let limit = n.min(dim);
    if rank > limit {
        return Err(Error::RankTooLarge { rank, limit });
    }
    let second_moment = samples.transpose() * samples / n as f64;
    ClassModel::from_covariance(prior, &second_moment, RankSpec::Explicit(rank))
}
