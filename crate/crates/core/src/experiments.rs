//! Named instances, noise sweeps, decay-exponent fits, and the
//! training-set-size harness over labeled datasets.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{AlphaPolicy, BoundCurvePoint, BoundEvaluator, Tolerances};
use crate::classifier::{self, ErrorEstimate};
use crate::error::{Error, Result};
use crate::expansion::{self, Verdict};
use crate::io::Dataset;
use crate::model::{self, ClassModel, ProblemInstance};
use crate::numlin::{self, Matrix};
use crate::subspace::Subspace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedOutcome {
    pub verdict: Verdict,
    pub d: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NamedInstance {
    pub name: &'static str,
    pub instance: ProblemInstance,
    pub expected: Option<ExpectedOutcome>,
}

pub const CATALOG_NAMES: [&str; 10] = [
    "tableIII-a",
    "tableIII-b",
    "tableIII-c",
    "tableIII-d",
    "rob1",
    "rob2",
    "rob3",
    "example1",
    "example1-modified",
    "example2",
];

fn unit_model(prior: f64, basis: Subspace) -> ClassModel {
    let r = basis.dim();
    ClassModel::from_factors(prior, basis, vec![1.0; r]).expect("catalog bases are orthonormal")
}

fn line(theta: f64) -> Subspace {
    Subspace::from_orthonormal(Matrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]))
        .expect("unit vector")
}

/// Uniform priors and unit eigenvalues on the given bases.
fn uniform(true_bases: Vec<Subspace>, mismatched_bases: Vec<Subspace>) -> ProblemInstance {
    let p = 1.0 / true_bases.len() as f64;
    ProblemInstance::new(
        true_bases.into_iter().map(|b| unit_model(p, b)).collect(),
        mismatched_bases.into_iter().map(|b| unit_model(p, b)).collect(),
    )
    .expect("catalog instances are consistent")
}

fn diagonal_case(mismatched_2: &[usize]) -> ProblemInstance {
    let ax = |a: &[usize]| Subspace::axes(4, a);
    uniform(
        vec![ax(&[0, 1, 2]), ax(&[1, 2, 3])],
        vec![ax(&[0, 1]), ax(mismatched_2)],
    )
}

fn angle_case(theta_1: f64) -> ProblemInstance {
    uniform(
        vec![line(PI / 2.0), line(PI / 4.0)],
        vec![line(theta_1), line(PI / 4.0)],
    )
}

fn robustness_case(kept: usize) -> ProblemInstance {
    let ax = |a: &[usize]| Subspace::axes(6, a);
    uniform(
        vec![ax(&[0, 1, 2]), ax(&[3, 4, 5])],
        vec![ax(&[0, 1, 2][..kept]), ax(&[3, 4, 5][..kept])],
    )
}

fn expect(verdict: Verdict, d: Option<f64>) -> Option<ExpectedOutcome> {
    Some(ExpectedOutcome { verdict, d })
}

/// Looks up a catalog entry by name.
pub fn catalog_instance(name: &str) -> Result<NamedInstance> {
    let (name, instance, expected) = match name {
        "tableIII-a" | "example1" => (
            if name == "example1" { "example1" } else { "tableIII-a" },
            diagonal_case(&[1, 2]),
            expect(Verdict::FloorConditionsFail, None),
        ),
        "tableIII-b" | "example1-modified" => (
            if name == "example1-modified" { "example1-modified" } else { "tableIII-b" },
            diagonal_case(&[1, 3]),
            expect(Verdict::NoFloor, Some(0.5)),
        ),
        "tableIII-c" | "example2" => (
            if name == "example2" { "example2" } else { "tableIII-c" },
            angle_case(5.0 * PI / 6.0),
            expect(Verdict::FloorConditionsFail, None),
        ),
        "tableIII-d" => ("tableIII-d", angle_case(4.0 * PI / 6.0), expect(Verdict::NoFloor, Some(0.5))),
        "rob1" => ("rob1", robustness_case(1), expect(Verdict::NoFloor, Some(0.5))),
        "rob2" => ("rob2", robustness_case(2), expect(Verdict::NoFloor, Some(1.0))),
        "rob3" => ("rob3", robustness_case(3), expect(Verdict::NoFloor, Some(1.5))),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown catalog entry {other:?}; known: {}",
                CATALOG_NAMES.join(", ")
            )))
        }
    };
    Ok(NamedInstance {
        name,
        instance,
        expected,
    })
}

pub fn catalog() -> Vec<NamedInstance> {
    CATALOG_NAMES
        .iter()
        .map(|n| catalog_instance(n).expect("listed names resolve"))
        .collect()
}

/// `s2 = 10^(-dB/10)`.
pub fn db_to_sigma2(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn sigma2_to_db(s2: f64) -> f64 {
    -10.0 * s2.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub inv_sigma2_db: f64,
    pub bound: BoundCurvePoint,
    pub mc: Option<ErrorEstimate>,
}

fn check_grid(grid_db: &[f64]) -> Result<()> {
    if grid_db.is_empty() {
        return Err(Error::InvalidArgument("noise grid is empty".into()));
    }
    if let Some(v) = grid_db.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise grid value {v} is not finite")));
    }
    Ok(())
}

/// Bound only, one row per grid point (1/s2 in dB).
pub fn sweep_bound(
    instance: &ProblemInstance,
    grid_db: &[f64],
    policy: &AlphaPolicy,
    tol: &Tolerances,
) -> Result<Vec<SweepRow>> {
    check_grid(grid_db)?;
    let eval = BoundEvaluator::new(instance, policy, tol)?;
    grid_db
        .iter()
        .map(|&db| {
            Ok(SweepRow {
                inv_sigma2_db: db,
                bound: eval.at(db_to_sigma2(db))?,
                mc: None,
            })
        })
        .collect()
}

/// Bound plus Monte Carlo error at every grid point. Every point reuses
/// `seed`, so neighbouring rows share their random draws.
pub fn sweep_noise(
    instance: &ProblemInstance,
    grid_db: &[f64],
    trials: u64,
    seed: u64,
    policy: &AlphaPolicy,
    tol: &Tolerances,
) -> Result<Vec<SweepRow>> {
    let mut rows = sweep_bound(instance, grid_db, policy, tol)?;
    for row in rows.iter_mut() {
        row.mc = Some(classifier::monte_carlo_error(instance, row.bound.sigma2, trials, seed)?);
    }
    Ok(rows)
}

fn pair_columns(instance: &ProblemInstance) -> String {
    instance
        .ordered_pairs()
        .iter()
        .map(|(i, j)| format!("\tbound_{i}_{j}"))
        .collect()
}

fn pair_values(p: &BoundCurvePoint) -> String {
    p.pair_bounds().iter().map(|b| format!("\t{b:e}")).collect()
}

/// TSV with the bound only.
pub fn bound_tsv(instance: &ProblemInstance, rows: &[SweepRow]) -> String {
    let mut out = format!("inv_sigma2_db\tbound{}\n", pair_columns(instance));
    for r in rows {
        out.push_str(&format!("{}\t{:e}{}\n", r.inv_sigma2_db, r.bound.bound, pair_values(&r.bound)));
    }
    out
}

/// TSV with Monte Carlo and bound columns.
pub fn simulate_tsv(instance: &ProblemInstance, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "inv_sigma2_db\t{}\tbound{}\n",
        ErrorEstimate::tsv_header(),
        pair_columns(instance)
    );
    for r in rows {
        let mc = r.mc.as_ref().map_or_else(|| "nan\tnan".to_string(), ErrorEstimate::tsv_row);
        out.push_str(&format!(
            "{}\t{mc}\t{:e}{}\n",
            r.inv_sigma2_db,
            r.bound.bound,
            pair_values(&r.bound)
        ));
    }
    out
}

/// Least-squares slope of `log10(bound)` against `log10(s2)` over rows
/// with `s2` in `[lo, hi]` and a nontrivial bound.
pub fn fit_decay_exponent(points: &[BoundCurvePoint], lo: f64, hi: f64) -> Result<f64> {
    let slack = 1e-9;
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.sigma2 >= lo * (1.0 - slack) && p.sigma2 <= hi * (1.0 + slack))
        .filter(|p| p.bound < 1.0 && p.bound > 0.0)
        .map(|p| (p.sigma2.log10(), p.log10_bound))
        .collect();
    if xy.len() < 3 {
        return Err(Error::InsufficientPoints(xy.len()));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Union-of-subspaces generator: class `k` draws `U_k diag(sqrt(eig)) z +
/// noise`, with `U_k` random and, if `orthogonal`, mutually orthogonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub ambient_dim: usize,
    pub classes: usize,
    pub eigenvalues: Vec<f64>,
    pub samples_per_class: usize,
    pub noise_var: f64,
    pub orthogonal: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            ambient_dim: 30,
            classes: 3,
            eigenvalues: vec![1.0, 0.5, 0.2, 0.05],
            samples_per_class: 200,
            noise_var: 5e-3,
            orthogonal: true,
            seed: 1,
        }
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn synthetic_union_of_subspaces(cfg: &SynthConfig) -> Result<Dataset> {
    let r = cfg.eigenvalues.len();
    let n = cfg.ambient_dim;
    if cfg.classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if r == 0 || cfg.eigenvalues.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("eigenvalues must be positive and nonempty".into()));
    }
    if !(cfg.noise_var >= 0.0) {
        return Err(Error::InvalidArgument("noise variance must be nonnegative".into()));
    }
    let needed = if cfg.orthogonal { cfg.classes * r } else { r };
    if needed > n {
        return Err(Error::RankExceedsAmbient { rank: needed, ambient: n });
    }
    let mut rng = model::stream_rng(cfg.seed, 0);
    let bases: Vec<Matrix> = if cfg.orthogonal {
        let q = numlin::reorthonormalize(&gaussian_matrix(n, needed, &mut rng))?;
        (0..cfg.classes).map(|k| q.columns(k * r, r).into_owned()).collect()
    } else {
        (0..cfg.classes)
            .map(|_| numlin::reorthonormalize(&gaussian_matrix(n, r, &mut rng)))
            .collect::<Result<_>>()?
    };
    let p = 1.0 / cfg.classes as f64;
    let models: Vec<ClassModel> = bases
        .into_iter()
        .map(|b| ClassModel::from_factors(p, Subspace::from_orthonormal(b)?, cfg.eigenvalues.clone()))
        .collect::<Result<_>>()?;
    let total = cfg.classes * cfg.samples_per_class;
    let mut features = Matrix::zeros(total, n);
    let mut labels = Vec::with_capacity(total);
    for (k, m) in models.iter().enumerate() {
        for s in 0..cfg.samples_per_class {
            let row = k * cfg.samples_per_class + s;
            let y = model::sample_class(m, cfg.noise_var, &mut rng);
            features.row_mut(row).copy_from(&y.transpose());
            labels.push(k);
        }
    }
    Ok(Dataset { features, labels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    /// Rank of the models fitted to the whole training pool.
    pub rank: usize,
    /// Rank of the models fitted to the `n_i` training rows.
    pub mismatched_rank: usize,
    /// Training counts per class, one entry per cell.
    pub n_grid: Vec<Vec<usize>>,
    pub runs: usize,
    pub p_p: f64,
    pub sigma2_eval: f64,
    /// Held-out rows per class; the rest of each class is the training pool.
    pub test_per_class: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub counts: Vec<usize>,
    pub runs: usize,
    pub cond_pass_fraction: f64,
    pub quantile_error: f64,
    pub mean_error: f64,
}

/// The `ceil(p * len)`-th smallest value.
pub fn order_statistic(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

fn class_priors(rows: &[Vec<usize>]) -> Vec<f64> {
    let total: usize = rows.iter().map(Vec::len).sum();
    rows.iter().map(|r| r.len() as f64 / total as f64).collect()
}

/// For each cell and run: split each class into held-out test rows and a
/// training pool, fit the reference models on the whole pool and the
/// working models on `n_i` pool rows, then record whether the low-noise
/// analysis predicts a vanishing error and the test error of the working
/// classifier at `sigma2_eval`.
pub fn phase_transition(data: &Dataset, cfg: &PhaseConfig) -> Result<Vec<PhaseCell>> {
    if !(cfg.p_p > 0.0 && cfg.p_p <= 1.0) {
        return Err(Error::InvalidArgument(format!("p_p = {} outside (0, 1]", cfg.p_p)));
    }
    if cfg.runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if !(cfg.sigma2_eval > 0.0) {
        return Err(Error::NonpositiveNoise(cfg.sigma2_eval));
    }
    let rows = data.class_rows();
    let c = rows.len();
    if c < 2 {
        return Err(Error::InvalidArgument("dataset needs at least 2 classes".into()));
    }
    let priors = class_priors(&rows);
    for (k, counts) in cfg.n_grid.iter().enumerate() {
        if counts.len() != c {
            return Err(Error::InvalidArgument(format!(
                "cell {k} lists {} counts for {c} classes",
                counts.len()
            )));
        }
        for (class, &n) in counts.iter().enumerate() {
            let pool = rows[class].len().saturating_sub(cfg.test_per_class);
            if n < cfg.mismatched_rank || n > pool || pool < cfg.rank || cfg.test_per_class == 0 {
                return Err(Error::InsufficientSamples(format!(
                    "class {class}: {} rows cannot supply {} test rows, a pool of rank {}, and {n} training rows of rank {}",
                    rows[class].len(),
                    cfg.test_per_class,
                    cfg.rank,
                    cfg.mismatched_rank
                )));
            }
        }
    }
    let policy = AlphaPolicy::default();
    let tol = Tolerances::default();
    let mut cells = Vec::with_capacity(cfg.n_grid.len());
    for (cell, counts) in cfg.n_grid.iter().enumerate() {
        let outcomes = (0..cfg.runs)
            .into_par_iter()
            .map(|run| {
                let mut rng = model::stream_rng(cfg.seed, ((cell as u64) << 32) | run as u64);
                let mut true_models = Vec::with_capacity(c);
                let mut working = Vec::with_capacity(c);
                let mut test_rows = Vec::new();
                let mut test_labels = Vec::new();
                for (class, class_rows) in rows.iter().enumerate() {
                    let mut order = class_rows.clone();
                    order.shuffle(&mut rng);
                    let (test, pool) = order.split_at(cfg.test_per_class);
                    test_labels.extend(std::iter::repeat(class).take(test.len()));
                    test_rows.extend_from_slice(test);
                    true_models.push(model::estimate_from_samples(&data.select(pool), priors[class], cfg.rank)?);
                    working.push(model::estimate_from_samples(
                        &data.select(&pool[..counts[class]]),
                        priors[class],
                        cfg.mismatched_rank,
                    )?);
                }
                let inst = ProblemInstance::new(true_models, working)?;
                // a pair too close to call for K's rank counts as a failed check
                let pass = match expansion::expand(&inst, &policy, &tol) {
                    Ok(rep) => rep.verdict == Verdict::NoFloor,
                    Err(Error::KernelRankMismatch { .. } | Error::KernelDetNonpositive(..)) => false,
                    Err(e) => return Err(e),
                };
                let err = classifier::empirical_error(
                    &inst.mismatched_models,
                    &data.select(&test_rows),
                    &test_labels,
                    cfg.sigma2_eval,
                )?;
                Ok((pass, err.overall_error))
            })
            .collect::<Result<Vec<_>>>()?;
        let errors: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
        cells.push(PhaseCell {
            counts: counts.clone(),
            runs: cfg.runs,
            cond_pass_fraction: outcomes.iter().filter(|o| o.0).count() as f64 / cfg.runs as f64,
            quantile_error: order_statistic(&errors, cfg.p_p),
            mean_error: errors.iter().sum::<f64>() / cfg.runs as f64,
        });
    }
    Ok(cells)
}

pub fn phase_tsv(cells: &[PhaseCell]) -> String {
    let c = cells.first().map_or(0, |p| p.counts.len());
    let mut out: String = (0..c).map(|k| format!("n_{k}\t")).collect();
    out.push_str("runs\tcond_pass_fraction\tquantile_error\tmean_error\n");
    for p in cells {
        for n in &p.counts {
            out.push_str(&format!("{n}\t"));
        }
        out.push_str(&format!(
            "{}\t{}\t{:e}\t{:e}\n",
            p.runs, p.cond_pass_fraction, p.quantile_error, p.mean_error
        ));
    }
    out
}
