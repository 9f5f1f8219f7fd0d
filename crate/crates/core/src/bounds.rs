//! Pairwise Chernoff-type upper bound on the MMAP error probability, the
//! admissible tilting parameter, and the `Sigma_ij = L_ij + K_ij / s2` split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::numlin::{self, Matrix, DEFAULT_RANK_TOL};
use crate::subspace::{self, Subspace, DEFAULT_COS_TOL};

/// Containment test for `W_ij` against `U'_ji` (spectral norm).
pub const NEC_TOL: f64 = 1e-7;
/// Positive-definiteness margin on the compressed projector difference.
pub const SUFF_TOL: f64 = 1e-10;
/// Tilting parameter used when no admissible interval is known.
pub const FALLBACK_ALPHA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rank_rel: f64,
    pub cos: f64,
    /// Absolute PD threshold; `None` uses `1e-12 * max(1, lambda_max)`.
    pub pd: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rel: DEFAULT_RANK_TOL,
            cos: DEFAULT_COS_TOL,
            pd: None,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let pd_ok = self.pd.map_or(true, |v| v > 0.0);
        if !(self.rank_rel > 0.0 && self.cos > 0.0 && pd_ok) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// How `alpha_ij` is picked from the admissible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaPolicy {
    /// Fraction of the admissible upper end, in (0, 1).
    pub scale: f64,
    /// Use this value for every pair instead.
    pub fixed: Option<f64>,
}

impl Default for AlphaPolicy {
    fn default() -> Self {
        Self {
            scale: 0.5,
            fixed: None,
        }
    }
}

impl AlphaPolicy {
    pub fn scaled(scale: f64) -> Self {
        Self { scale, fixed: None }
    }

    pub fn fixed(alpha: f64) -> Self {
        Self {
            scale: 0.5,
            fixed: Some(alpha),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha scale {} outside (0, 1)", self.scale)));
        }
        if let Some(a) = self.fixed {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidArgument(format!("fixed alpha {a} must be positive")));
            }
        }
        Ok(())
    }

    /// `alpha_max` is the admissible upper end when known.
    pub fn choose(&self, alpha_max: Option<f64>, rank_gap: i64) -> f64 {
        if let Some(a) = self.fixed {
            return a;
        }
        match alpha_max {
            Some(a0) if a0 > 0.0 => {
                if rank_gap == 0 {
                    self.scale * a0
                } else {
                    self.scale * a0.min(1.0 / (2.0 * rank_gap.unsigned_abs() as f64))
                }
            }
            _ => FALLBACK_ALPHA,
        }
    }
}

/// Shared/exclusive decomposition of one ordered class pair plus the
/// quantities derived from it.
#[derive(Debug, Clone)]
pub struct PairGeometry {
    pub i: usize,
    pub j: usize,
    pub shared: Subspace,
    pub exclusive_ij: Subspace,
    pub exclusive_ji: Subspace,
    pub w: Subspace,
    pub v: Subspace,
    /// `|| U'_ji^T W_ij ||_2`.
    pub nec_residual: f64,
    /// Smallest eigenvalue of `V^T (P'_ij - P'_ji) V`; `None` when `s^V = 0`.
    pub c0: Option<f64>,
    /// Upper end of the admissible interval; `None` when the conditions
    /// fail or the mismatched class has rank zero.
    pub alpha_max: Option<f64>,
    pub alpha: f64,
}

impl PairGeometry {
    /// Geometry of `(U_i, U~_i, U~_j)` without any tilting parameter.
    pub fn from_subspaces(
        i: usize,
        j: usize,
        u_i: &Subspace,
        ut_i: &Subspace,
        ut_j: &Subspace,
        cos_tol: f64,
    ) -> Result<Self> {
        let pair = subspace::pair_decomposition(ut_i, ut_j, cos_tol)?;
        let split = subspace::mismatch_geometry(u_i, &pair.exclusive_i, cos_tol)?;
        let nec_residual = if split.w.is_trivial() || pair.exclusive_j.is_trivial() {
            0.0
        } else {
            numlin::spectral_norm(&(pair.exclusive_j.basis().transpose() * split.w.basis()))
        };
        let c0 = if split.v.is_trivial() {
            None
        } else {
            let diff = pair.exclusive_i.projector() - pair.exclusive_j.projector();
            let vb = split.v.basis();
            Some(numlin::min_eig_sym(&(vb.transpose() * diff * vb))?)
        };
        Ok(Self {
            i,
            j,
            shared: pair.shared,
            exclusive_ij: pair.exclusive_i,
            exclusive_ji: pair.exclusive_j,
            w: split.w,
            v: split.v,
            nec_residual,
            c0,
            alpha_max: None,
            alpha: 0.0,
        })
    }

    pub fn r_shared(&self) -> usize {
        self.shared.dim()
    }

    pub fn r_exclusive_ij(&self) -> usize {
        self.exclusive_ij.dim()
    }

    pub fn r_exclusive_ji(&self) -> usize {
        self.exclusive_ji.dim()
    }

    pub fn s_w(&self) -> usize {
        self.w.dim()
    }

    pub fn s_v(&self) -> usize {
        self.v.dim()
    }

    pub fn nec_holds(&self) -> bool {
        self.nec_residual <= NEC_TOL
    }

    pub fn suff_holds(&self) -> bool {
        self.c0.map_or(true, |c| c > SUFF_TOL)
    }

    pub fn conditions_hold(&self) -> bool {
        self.nec_holds() && self.suff_holds()
    }
}

/// Upper end of the admissible tilting interval for a pair.
///
/// `lambda1` is the largest true eigenvalue of class `i` (0 for rank zero),
/// `lambda_tilde_min` the smallest mismatched eigenvalue of class `i`.
pub fn alpha_max(geom: &PairGeometry, lambda1: f64, lambda_tilde_min: Option<f64>) -> Result<f64> {
    let lt = match lambda_tilde_min {
        Some(v) if v > 0.0 => v,
        _ => return Err(Error::DegenerateMismatchedRank(geom.i)),
    };
    let first = lt / (lambda1 + 1.0);
    let second = match geom.c0 {
        Some(c0) => c0 / (1.0 + c0 * (1.0 + 1.0 / lt)),
        None => lt / (lt + 1.0),
    };
    Ok(first.min(second).min(1.0))
}

/// Geometry of pair `(i, j)` with `alpha_ij` chosen by `policy`.
pub fn pair_geometry(
    instance: &ProblemInstance,
    i: usize,
    j: usize,
    policy: &AlphaPolicy,
    tol: &Tolerances,
) -> Result<PairGeometry> {
    check_pair(instance, i, j)?;
    let t = &instance.true_models[i];
    let mi = &instance.mismatched_models[i];
    let mj = &instance.mismatched_models[j];
    let mut geom = PairGeometry::from_subspaces(i, j, &t.basis, &mi.basis, &mj.basis, tol.cos)?;
    if geom.conditions_hold() {
        let lambda1 = t.largest_eigenvalue().unwrap_or(0.0);
        geom.alpha_max = alpha_max(&geom, lambda1, mi.smallest_eigenvalue()).ok();
    }
    let gap = mj.rank() as i64 - mi.rank() as i64;
    geom.alpha = policy.choose(geom.alpha_max, gap);
    Ok(geom)
}

fn check_pair(instance: &ProblemInstance, i: usize, j: usize) -> Result<()> {
    let c = instance.num_classes();
    if i >= c || j >= c || i == j {
        return Err(Error::InvalidArgument(format!("invalid class pair ({i}, {j}) for {c} classes")));
    }
    Ok(())
}

fn check_noise(s2: f64) -> Result<()> {
    if !(s2 > 0.0 && s2.is_finite()) {
        return Err(Error::NonpositiveNoise(s2));
    }
    Ok(())
}

fn symmetric_part(a: Matrix) -> Matrix {
    (&a + a.transpose()) * 0.5
}

/// `(Sigma_i + s2 I)^{-1} + alpha (Sigma~_j + s2 I)^{-1} - alpha (Sigma~_i + s2 I)^{-1}`.
pub fn sigma_ij(instance: &ProblemInstance, i: usize, j: usize, alpha: f64, s2: f64) -> Result<Matrix> {
    check_pair(instance, i, j)?;
    check_noise(s2)?;
    let m = instance.true_models[i].inverse_plus_noise(s2)
        + alpha
            * (instance.mismatched_models[j].inverse_plus_noise(s2)
                - instance.mismatched_models[i].inverse_plus_noise(s2));
    Ok(symmetric_part(m))
}

/// `K_ij = K_i + alpha (P'_ij - P'_ji)` from the pair's projectors.
pub fn k_ij(instance: &ProblemInstance, geom: &PairGeometry) -> Matrix {
    let ki = instance.true_models[geom.i].kernel_projector();
    symmetric_part(ki + geom.alpha * (geom.exclusive_ij.projector() - geom.exclusive_ji.projector()))
}

/// `L_ij = L_i + alpha L~_j - alpha L~_i`; `s2 = 0` gives the limit `L0_ij`.
pub fn l_ij(instance: &ProblemInstance, i: usize, j: usize, alpha: f64, s2: f64) -> Matrix {
    let m = instance.true_models[i].range_inverse(s2)
        + alpha
            * (instance.mismatched_models[j].range_inverse(s2)
                - instance.mismatched_models[i].range_inverse(s2));
    symmetric_part(m)
}

fn pd_threshold(eigs: &[f64], tol: Option<f64>) -> f64 {
    tol.unwrap_or_else(|| numlin::default_pd_tol(eigs.first().copied().unwrap_or(0.0)))
}

/// Natural log of the pairwise term `P(e_ij)` bound.
pub fn theorem1_pair_bound(
    instance: &ProblemInstance,
    i: usize,
    j: usize,
    alpha: f64,
    s2: f64,
    pd_tol: Option<f64>,
) -> Result<f64> {
    let sij = sigma_ij(instance, i, j, alpha, s2)?;
    let eig = numlin::sym_eig(&sij)?;
    let thresh = pd_threshold(&eig.eigenvalues, pd_tol);
    if eig.eigenvalues.iter().any(|&v| !(v > thresh)) {
        return Err(Error::SigmaNotPd(i, j));
    }
    let logdet_sij: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
    let t = &instance.true_models[i];
    let mi = &instance.mismatched_models[i];
    let mj = &instance.mismatched_models[j];
    Ok(alpha * (mj.prior.ln() - mi.prior.ln())
        + 0.5 * alpha * (mi.logdet_plus_noise(s2) - mj.logdet_plus_noise(s2))
        - 0.5 * t.logdet_plus_noise(s2)
        - 0.5 * logdet_sij)
}

/// One noise level of the union bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurvePoint {
    pub sigma2: f64,
    pub log10_bound: f64,
    pub bound: f64,
    /// `log P(e_ij)` per ordered pair (row-major); `None` where `Sigma_ij`
    /// is not positive definite.
    pub pair_log_terms: Vec<Option<f64>>,
}

impl BoundCurvePoint {
    /// Per-pair bound values; 1 where the pair term is unavailable.
    pub fn pair_bounds(&self) -> Vec<f64> {
        self.pair_log_terms.iter().map(|t| t.map_or(1.0, f64::exp)).collect()
    }
}

/// Union bound evaluator with the pair geometry computed once.
#[derive(Debug, Clone)]
pub struct BoundEvaluator<'a> {
    instance: &'a ProblemInstance,
    geometries: Vec<PairGeometry>,
    tol: Tolerances,
}

impl<'a> BoundEvaluator<'a> {
    pub fn new(instance: &'a ProblemInstance, policy: &AlphaPolicy, tol: &Tolerances) -> Result<Self> {
        policy.validate()?;
        tol.validate()?;
        let geometries = instance
            .ordered_pairs()
            .into_iter()
            .map(|(i, j)| pair_geometry(instance, i, j, policy, tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            instance,
            geometries,
            tol: *tol,
        })
    }

    pub fn geometries(&self) -> &[PairGeometry] {
        &self.geometries
    }

    pub fn at(&self, s2: f64) -> Result<BoundCurvePoint> {
        check_noise(s2)?;
        let mut terms = Vec::with_capacity(self.geometries.len());
        for g in &self.geometries {
            match theorem1_pair_bound(self.instance, g.i, g.j, g.alpha, s2, self.tol.pd) {
                Ok(v) => terms.push(Some(v)),
                Err(Error::SigmaNotPd(..)) => terms.push(None),
                Err(e) => return Err(e),
            }
        }
        if terms.iter().any(Option::is_none) {
            return Ok(BoundCurvePoint {
                sigma2: s2,
                log10_bound: 0.0,
                bound: 1.0,
                pair_log_terms: terms,
            });
        }
        let weighted: Vec<f64> = self
            .geometries
            .iter()
            .zip(&terms)
            .map(|(g, t)| self.instance.true_models[g.i].prior.ln() + t.expect("checked"))
            .collect();
        let log_total = log_sum_exp(&weighted).min(0.0);
        Ok(BoundCurvePoint {
            sigma2: s2,
            log10_bound: log_total / std::f64::consts::LN_10,
            bound: log_total.exp(),
            pair_log_terms: terms,
        })
    }
}

pub fn theorem1_bound(
    instance: &ProblemInstance,
    s2: f64,
    policy: &AlphaPolicy,
    tol: &Tolerances,
) -> Result<BoundCurvePoint> {
    BoundEvaluator::new(instance, policy, tol)?.at(s2)
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + values.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}
