//! Instance JSON and labeled dataset CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassModel, ProblemInstance, RankSpec};
use crate::numlin::{self, Matrix};
use crate::subspace::Subspace;

/// A covariance given inline or as a path to a matrix CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Path(String),
    Rows(Vec<Vec<f64>>),
}

/// Eigen-factors `basis diag(eigenvalues) basis^T`; `basis` is N rows of r
/// entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factors {
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub prior: f64,
    /// Defaults to `prior`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatched_prior: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_cov: Option<MatrixSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatched_cov: Option<MatrixSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_factors: Option<Factors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatched_factors: Option<Factors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatched_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub ambient_dim: usize,
    pub classes: Vec<ClassSpec>,
}

fn load_matrix(src: &MatrixSource, base_dir: Option<&Path>) -> Result<Matrix> {
    match src {
        MatrixSource::Rows(rows) => numlin::matrix_from_rows(rows),
        MatrixSource::Path(p) => {
            let path = match base_dir {
                Some(d) if Path::new(p).is_relative() => d.join(p),
                _ => Path::new(p).to_path_buf(),
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            numlin::parse_matrix_csv(&text)
        }
    }
}

fn build_model(
    prior: f64,
    cov: Option<&MatrixSource>,
    factors: Option<&Factors>,
    rank: Option<usize>,
    n: usize,
    base_dir: Option<&Path>,
    what: &str,
) -> Result<ClassModel> {
    match (cov, factors) {
        (Some(src), None) => {
            let m = load_matrix(src, base_dir)?;
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidInstance(format!(
                    "{what} covariance is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let spec = rank.map_or_else(RankSpec::default, RankSpec::Explicit);
            ClassModel::from_covariance(prior, &m, spec)
        }
        (None, Some(f)) => {
            let basis = if f.basis.is_empty() {
                Matrix::zeros(n, 0)
            } else {
                numlin::matrix_from_rows(&f.basis)?
            };
            if basis.nrows() != n {
                return Err(Error::InvalidInstance(format!(
                    "{what} basis has {} rows, expected {n}",
                    basis.nrows()
                )));
            }
            if rank.is_some_and(|r| r != basis.ncols()) {
                return Err(Error::InvalidInstance(format!("{what} rank disagrees with its factors")));
            }
            ClassModel::from_factors(prior, Subspace::from_orthonormal(basis)?, f.eigenvalues.clone())
        }
        _ => Err(Error::InvalidInstance(format!(
            "{what} model needs exactly one of a covariance or factors"
        ))),
    }
}

impl InstanceSpec {
    /// Relative CSV paths are resolved against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<ProblemInstance> {
        let n = self.ambient_dim;
        let mut t = Vec::new();
        let mut m = Vec::new();
        for (k, c) in self.classes.iter().enumerate() {
            t.push(build_model(
                c.prior,
                c.true_cov.as_ref(),
                c.true_factors.as_ref(),
                c.rank,
                n,
                base_dir,
                &format!("class {k} true"),
            )?);
            m.push(build_model(
                c.mismatched_prior.unwrap_or(c.prior),
                c.mismatched_cov.as_ref(),
                c.mismatched_factors.as_ref(),
                c.mismatched_rank,
                n,
                base_dir,
                &format!("class {k} mismatched"),
            )?);
        }
        let inst = ProblemInstance::new(t, m)?;
        if inst.ambient_dim != n {
            return Err(Error::InvalidInstance(format!(
                "ambient_dim {n} disagrees with matrices of size {}",
                inst.ambient_dim
            )));
        }
        Ok(inst)
    }

    /// Factor form, which reloads to bit-identical models.
    pub fn from_instance(inst: &ProblemInstance) -> Self {
        let factors = |m: &ClassModel| Factors {
            basis: numlin::matrix_to_rows(m.basis.basis()),
            eigenvalues: m.eigenvalues.clone(),
        };
        let classes = inst
            .true_models
            .iter()
            .zip(&inst.mismatched_models)
            .map(|(t, m)| ClassSpec {
                prior: t.prior,
                mismatched_prior: Some(m.prior),
                true_cov: None,
                mismatched_cov: None,
                true_factors: Some(factors(t)),
                mismatched_factors: Some(factors(m)),
                rank: None,
                mismatched_rank: None,
            })
            .collect();
        Self {
            ambient_dim: inst.ambient_dim,
            classes,
        }
    }
}

pub fn parse_instance_json(text: &str, base_dir: Option<&Path>) -> Result<ProblemInstance> {
    let spec: InstanceSpec = serde_json::from_str(text)?;
    spec.build(base_dir)
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_instance_json(&text, path.parent())
}

pub fn instance_to_json(inst: &ProblemInstance) -> String {
    serde_json::to_string_pretty(&InstanceSpec::from_instance(inst)).expect("plain data serializes")
}

/// Labeled rows: `features` is n x N, `labels[k]` the 0-based class of row k.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Row indices of each class, in file order.
    pub fn class_rows(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (r, &l) in self.labels.iter().enumerate() {
            out[l].push(r);
        }
        out
    }

    pub fn select(&self, rows: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), self.features.ncols(), |r, c| self.features[(rows[r], c)])
    }
}

/// One sample per line: integer label, then the feature values.
pub fn parse_dataset_csv(text: &str) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let label = fields
            .next()
            .unwrap_or_default()
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("line {}: bad label: {e}", lineno + 1)))?;
        let row = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: bad number {f:?}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        labels.push(label);
        rows.push(row);
    }
    Ok(Dataset {
        features: numlin::matrix_from_rows(&rows)?,
        labels,
    })
}

pub fn write_dataset_csv(data: &Dataset) -> String {
    let mut out = String::new();
    for (r, label) in data.labels.iter().enumerate() {
        out.push_str(&label.to_string());
        for v in data.features.row(r).iter() {
            out.push(',');
            out.push_str(&format!("{v:e}"));
        }
        out.push('\n');
    }
    out
}
