//! Gaussian MAP rule evaluated with (possibly mismatched) model parameters,
//! and Monte Carlo estimation of its error probability.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ClassModel, ProblemInstance};
use crate::numlin::{Matrix, Vector};

#[derive(Debug, Clone)]
struct ClassTerms {
    offset: f64,
    basis: Matrix,
    /// `1 / (lambda_k + s2)`
    range_weights: Vec<f64>,
}

/// Per-class constants of the log discriminant at a fixed noise level.
#[derive(Debug, Clone)]
pub struct DiscriminantCache {
    s2: f64,
    dim: usize,
    classes: Vec<ClassTerms>,
}

impl DiscriminantCache {
    pub fn new(models: &[ClassModel], s2: f64) -> Result<Self> {
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::NonpositiveNoise(s2));
        }
        let dim = models.first().map_or(0, ClassModel::ambient_dim);
        let classes = models
            .iter()
            .map(|m| {
                if m.ambient_dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: m.ambient_dim(),
                    });
                }
                Ok(ClassTerms {
                    offset: m.prior.ln() - 0.5 * m.logdet_plus_noise(s2),
                    basis: m.basis.basis().clone(),
                    range_weights: m.eigenvalues.iter().map(|l| 1.0 / (l + s2)).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { s2, dim, classes })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// `y^T (Sigma + s2 I)^{-1} y`, with the kernel part taken from the
    /// explicit projection residual.
    fn quad_form(&self, k: usize, y: &Vector) -> f64 {
        let c = &self.classes[k];
        let coords = c.basis.tr_mul(y);
        let resid = y - &c.basis * &coords;
        let range: f64 = coords.iter().zip(&c.range_weights).map(|(a, w)| w * a * a).sum();
        resid.norm_squared() / self.s2 + range
    }

    pub fn discriminant(&self, k: usize, y: &Vector) -> Result<f64> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: y.len(),
            });
        }
        Ok(self.classes[k].offset - 0.5 * self.quad_form(k, y))
    }

    /// Arg-max of the discriminants; ties go to the smallest index.
    pub fn classify(&self, y: &Vector) -> Result<usize> {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for k in 0..self.classes.len() {
            let v = self.discriminant(k, y)?;
            if v > best_val {
                best = k;
                best_val = v;
            }
        }
        Ok(best)
    }
}

/// `log p - 1/2 log|Sigma + s2 I| - 1/2 y^T (Sigma + s2 I)^{-1} y`.
pub fn discriminant(y: &Vector, model: &ClassModel, s2: f64) -> Result<f64> {
    DiscriminantCache::new(std::slice::from_ref(model), s2)?.discriminant(0, y)
}

pub fn classify(y: &Vector, models: &[ClassModel], s2: f64) -> Result<usize> {
    DiscriminantCache::new(models, s2)?.classify(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub trials: u64,
    pub errors: u64,
    pub overall_error: f64,
    pub per_class_trials: Vec<u64>,
    pub per_class_error: Vec<f64>,
    /// `confusion[true][decided]`
    pub confusion: Vec<Vec<u64>>,
    pub std_error: f64,
}

impl ErrorEstimate {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let per_class_trials: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let trials: u64 = per_class_trials.iter().sum();
        let per_class_errors: Vec<u64> = confusion
            .iter()
            .enumerate()
            .map(|(k, r)| r.iter().sum::<u64>() - r[k])
            .collect();
        let errors: u64 = per_class_errors.iter().sum();
        let rate = |e: u64, n: u64| if n == 0 { 0.0 } else { e as f64 / n as f64 };
        let overall_error = rate(errors, trials);
        let std_error = if trials == 0 {
            0.0
        } else {
            (overall_error * (1.0 - overall_error) / trials as f64).sqrt()
        };
        Self {
            trials,
            errors,
            overall_error,
            per_class_error: per_class_errors
                .iter()
                .zip(&per_class_trials)
                .map(|(&e, &n)| rate(e, n))
                .collect(),
            per_class_trials,
            confusion,
            std_error,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn tsv_header() -> &'static str {
        "mc_error\tmc_stderr"
    }

    pub fn tsv_row(&self) -> String {
        format!("{:e}\t{:e}", self.overall_error, self.std_error)
    }
}

/// Draws from the true models and classifies with `decision_models`.
/// Trial `t` uses stream `t` of `master_seed`, so the result does not
/// depend on how trials are scheduled.
pub fn monte_carlo_with(
    instance: &ProblemInstance,
    decision_models: &[ClassModel],
    s2: f64,
    trials: u64,
    master_seed: u64,
) -> Result<ErrorEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if decision_models.len() != instance.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: instance.num_classes(),
            got: decision_models.len(),
        });
    }
    let cache = DiscriminantCache::new(decision_models, s2)?;
    let c = instance.num_classes();
    let base = ChaCha8Rng::seed_from_u64(master_seed);
    let confusion = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; c * c],
            |mut acc, t| {
                let mut rng = base.clone();
                rng.set_stream(t);
                let (label, y) = model::sample(instance, s2, &mut rng);
                let decided = cache.classify(&y).expect("dimensions checked");
                acc[label * c + decided] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; c * c],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(ErrorEstimate::from_confusion(
        confusion.chunks(c).map(<[u64]>::to_vec).collect(),
    ))
}

/// Error of the classifier built from the mismatched models.
pub fn monte_carlo_error(instance: &ProblemInstance, s2: f64, trials: u64, master_seed: u64) -> Result<ErrorEstimate> {
    monte_carlo_with(instance, &instance.mismatched_models, s2, trials, master_seed)
}

/// Error of the classifier that knows the true models.
pub fn monte_carlo_error_matched(
    instance: &ProblemInstance,
    s2: f64,
    trials: u64,
    master_seed: u64,
) -> Result<ErrorEstimate> {
    monte_carlo_with(instance, &instance.true_models, s2, trials, master_seed)
}

/// Classifies fixed labeled rows (no extra noise is added).
pub fn empirical_error(models: &[ClassModel], samples: &Matrix, labels: &[usize], s2: f64) -> Result<ErrorEstimate> {
    if samples.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.nrows(),
            got: labels.len(),
        });
    }
    let cache = DiscriminantCache::new(models, s2)?;
    let c = models.len();
    let mut confusion = vec![vec![0u64; c]; c];
    for (r, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::InvalidArgument(format!("label {label} out of range")));
        }
        let y = samples.row(r).transpose();
        confusion[label][cache.classify(&y)?] += 1;
    }
    Ok(ErrorEstimate::from_confusion(confusion))
}
