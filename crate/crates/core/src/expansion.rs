//! Low-noise expansion `A (s2)^d` of the union bound, the sufficient
//! conditions for a vanishing error, and the closed-form checks built on them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bounds::{self, AlphaPolicy, PairGeometry, Tolerances};
use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::numlin::{self, Matrix};
use crate::subspace::{self, Subspace};

/// Strictness margin of the angle comparison in `check_corollary2`.
pub const COROLLARY2_MARGIN: f64 = 1e-10;
/// Pairs whose exponent is within this of the minimum share the leading term.
pub const EXPONENT_TIE_TOL: f64 = 1e-12;
/// Largest off-diagonal entry tolerated by the diagonal checker.
pub const DIAGONAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    NoFloor,
    FloorConditionsFail,
    FloorNonpositiveD,
}

impl Verdict {
    pub fn has_floor(self) -> bool {
        self != Verdict::NoFloor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub i: usize,
    pub j: usize,
    pub nec_holds: bool,
    pub suff_holds: bool,
    pub corollary2_holds: bool,
    pub nec_residual: f64,
    pub c0: Option<f64>,
    /// `d_max(U_i, U~_j) - d_min(U_i, U~_i)`; `None` if `U_i` is trivial.
    pub angle_margin: Option<f64>,
}

/// Sine of the largest angle between `im(U_i)` and `im(U~_i)` seen from
/// `U_i`: the worst-case distance of a unit vector of `U_i` to `U~_i`.
fn directed_d_min(u: &Subspace, ut: &Subspace) -> f64 {
    ut.containment_residual(u).min(1.0)
}

fn angle_margin(u: &Subspace, ut_i: &Subspace, ut_j: &Subspace) -> Result<Option<f64>> {
    if u.is_trivial() {
        return Ok(None);
    }
    let dmax = if ut_j.is_trivial() {
        1.0
    } else {
        subspace::d_max(u, ut_j)?
    };
    Ok(Some(dmax - directed_d_min(u, ut_i)))
}

pub fn check_conditions(instance: &ProblemInstance, geom: &PairGeometry) -> Result<ConditionReport> {
    let u = &instance.true_models[geom.i].basis;
    let margin = angle_margin(
        u,
        &instance.mismatched_models[geom.i].basis,
        &instance.mismatched_models[geom.j].basis,
    )?;
    Ok(ConditionReport {
        i: geom.i,
        j: geom.j,
        nec_holds: geom.nec_holds(),
        suff_holds: geom.suff_holds(),
        corollary2_holds: geom.s_v() > 0 && margin.is_some_and(|m| m > COROLLARY2_MARGIN),
        nec_residual: geom.nec_residual,
        c0: geom.c0,
        angle_margin: margin,
    })
}

/// `d_ij = (s^V + alpha (r~_j - r~_i)) / 2`.
pub fn d_exponent(geom: &PairGeometry, rt_i: usize, rt_j: usize) -> f64 {
    0.5 * (geom.s_v() as f64 + geom.alpha * (rt_j as f64 - rt_i as f64))
}

/// Leading coefficient of one pairwise term and the pieces it is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConstant {
    pub rank_k: usize,
    pub log_v_ij: f64,
    pub log_a_ij: f64,
}

/// `A_ij`, after checking that `K_ij` has the predicted rank `N + s^V - r_i`.
pub fn expansion_constant(instance: &ProblemInstance, geom: &PairGeometry, tol: &Tolerances) -> Result<PairConstant> {
    let (i, j) = (geom.i, geom.j);
    if !geom.conditions_hold() {
        return Err(Error::ConditionsFail(i, j));
    }
    let n = instance.ambient_dim;
    let t = &instance.true_models[i];
    let expected = n + geom.s_v() - t.rank();

    let k = bounds::k_ij(instance, geom);
    let eig = numlin::sym_eig(&k)?;
    let top = eig.max_eigenvalue().unwrap_or(0.0);
    if eig.min_eigenvalue().unwrap_or(0.0) < -numlin::PSD_SLACK * top.max(1.0) {
        return Err(Error::KernelDetNonpositive(i, j));
    }
    // on V the nonzero part of K is bounded below by about alpha * c0, which can
    // sit far under the default relative rank tolerance for nearly coincident
    // mismatched subspaces; never go below roundoff though
    let scale = top.max(f64::MIN_POSITIVE);
    let structural = 0.5 * geom.alpha * geom.c0.unwrap_or(1.0);
    let floor = 4.0 * f64::EPSILON * n as f64;
    let rel = (tol.rank_rel.min(structural / scale)).max(floor);
    let rank_k = numlin::rank_with_tol(&eig.eigenvalues, rel);
    if rank_k != expected {
        return Err(Error::KernelRankMismatch {
            i,
            j,
            found: rank_k,
            expected,
        });
    }
    let mut log_v_ij: f64 = eig.eigenvalues[..rank_k].iter().map(|v| v.ln()).sum();
    if rank_k < n {
        let kernel = eig.eigenvectors.columns(rank_k, n - rank_k).into_owned();
        let l0 = bounds::l_ij(instance, i, j, geom.alpha, 0.0);
        let compressed = kernel.transpose() * l0 * &kernel;
        log_v_ij += numlin::logdet_pd(&compressed).map_err(|_| Error::KernelDetNonpositive(i, j))?;
    }
    let mi = &instance.mismatched_models[i];
    let mj = &instance.mismatched_models[j];
    let a = geom.alpha;
    let log_a_ij = a * (mj.prior.ln() - mi.prior.ln()) + 0.5 * a * (mi.log_pdet() - mj.log_pdet())
        - 0.5 * (t.log_pdet() + log_v_ij);
    Ok(PairConstant {
        rank_k,
        log_v_ij,
        log_a_ij,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub i: usize,
    pub j: usize,
    pub d_ij: f64,
    pub nec_holds: bool,
    pub suff_holds: bool,
    pub corollary2_holds: bool,
    pub nec_residual: f64,
    pub c0: Option<f64>,
    pub alpha_max: Option<f64>,
    pub alpha: f64,
    pub angle_margin: Option<f64>,
    pub r_shared: usize,
    pub r_exclusive_ij: usize,
    pub r_exclusive_ji: usize,
    pub s_w: usize,
    pub s_v: usize,
    /// Set for pairs that carry the leading term of a vanishing bound.
    pub a_ij: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailingPair {
    pub i: usize,
    pub j: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub verdict: Verdict,
    pub d: f64,
    /// Leading constant; only for `NoFloor`.
    pub a: Option<f64>,
    pub log_a: Option<f64>,
    pub argmin_pairs: Vec<(usize, usize)>,
    pub pairs: Vec<PairReport>,
    pub failing_pairs: Vec<FailingPair>,
}

impl ExpansionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<&PairReport> {
        self.pairs.iter().find(|p| p.i == i && p.j == j)
    }
}

pub fn expand(instance: &ProblemInstance, policy: &AlphaPolicy, tol: &Tolerances) -> Result<ExpansionReport> {
    policy.validate()?;
    tol.validate()?;
    let mut pairs = Vec::new();
    let mut geoms = Vec::new();
    let mut failing_pairs = Vec::new();
    for (i, j) in instance.ordered_pairs() {
        let g = bounds::pair_geometry(instance, i, j, policy, tol)?;
        let cond = check_conditions(instance, &g)?;
        let rt_i = instance.mismatched_models[i].rank();
        let rt_j = instance.mismatched_models[j].rank();
        if !cond.nec_holds {
            failing_pairs.push(FailingPair {
                i,
                j,
                reason: format!(
                    "true subspace part orthogonal to U'_ij is not orthogonal to U'_ji (residual {:e})",
                    cond.nec_residual
                ),
            });
        }
        if !cond.suff_holds {
            failing_pairs.push(FailingPair {
                i,
                j,
                reason: format!(
                    "V^T (P'_ij - P'_ji) V is not positive definite (smallest eigenvalue {:e})",
                    cond.c0.unwrap_or(0.0)
                ),
            });
        }
        pairs.push(PairReport {
            i,
            j,
            d_ij: d_exponent(&g, rt_i, rt_j),
            nec_holds: cond.nec_holds,
            suff_holds: cond.suff_holds,
            corollary2_holds: cond.corollary2_holds,
            nec_residual: cond.nec_residual,
            c0: cond.c0,
            alpha_max: g.alpha_max,
            alpha: g.alpha,
            angle_margin: cond.angle_margin,
            r_shared: g.r_shared(),
            r_exclusive_ij: g.r_exclusive_ij(),
            r_exclusive_ji: g.r_exclusive_ji(),
            s_w: g.s_w(),
            s_v: g.s_v(),
            a_ij: None,
        });
        geoms.push(g);
    }
    let d = pairs.iter().map(|p| p.d_ij).fold(f64::INFINITY, f64::min);
    let argmin_pairs: Vec<(usize, usize)> = pairs
        .iter()
        .filter(|p| p.d_ij - d <= EXPONENT_TIE_TOL)
        .map(|p| (p.i, p.j))
        .collect();

    let verdict = if !failing_pairs.is_empty() {
        Verdict::FloorConditionsFail
    } else if d <= 0.0 {
        for p in pairs.iter().filter(|p| p.d_ij <= 0.0) {
            failing_pairs.push(FailingPair {
                i: p.i,
                j: p.j,
                reason: format!("s^V = {} with mismatched rank gap {}", p.s_v, p.r_exclusive_ji as i64 - p.r_exclusive_ij as i64),
            });
        }
        Verdict::FloorNonpositiveD
    } else {
        Verdict::NoFloor
    };

    let mut log_a = None;
    if verdict == Verdict::NoFloor {
        // Each union-bound term carries the true prior of class i.
        let mut logs = Vec::new();
        for (p, g) in pairs.iter_mut().zip(&geoms) {
            if argmin_pairs.contains(&(p.i, p.j)) {
                let c = expansion_constant(instance, g, tol)?;
                p.a_ij = Some(c.log_a_ij.exp());
                logs.push(instance.true_models[p.i].prior.ln() + c.log_a_ij);
            }
        }
        log_a = Some(bounds::log_sum_exp(&logs));
    }
    Ok(ExpansionReport {
        verdict,
        d,
        a: log_a.map(f64::exp),
        log_a,
        argmin_pairs,
        pairs,
        failing_pairs,
    })
}

fn all_geometries(instance: &ProblemInstance, tol: &Tolerances) -> Result<Vec<PairGeometry>> {
    instance
        .ordered_pairs()
        .into_iter()
        .map(|(i, j)| bounds::pair_geometry(instance, i, j, &AlphaPolicy::default(), tol))
        .collect()
}

/// Conditions hold for every pair, and `s^V > 0` wherever the mismatched
/// rank does not increase from `i` to `j`.
pub fn check_corollary1(instance: &ProblemInstance, tol: &Tolerances) -> Result<bool> {
    Ok(all_geometries(instance, tol)?.iter().all(|g| {
        let gap = instance.mismatched_models[g.j].rank() as i64 - instance.mismatched_models[g.i].rank() as i64;
        g.conditions_hold() && (gap > 0 || g.s_v() > 0)
    }))
}

/// Angle criterion: `d_min(U_i, U~_i) < d_max(U_i, U~_j)` and `s^V > 0`
/// for every ordered pair.
pub fn check_corollary2(instance: &ProblemInstance, tol: &Tolerances) -> Result<bool> {
    for g in all_geometries(instance, tol)? {
        if !check_conditions(instance, &g)?.corollary2_holds {
            return Ok(false);
        }
    }
    Ok(true)
}

fn diagonal_support(m: &Matrix) -> Result<BTreeSet<usize>> {
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    for r in 0..n {
        for c in 0..n {
            if r != c && m[(r, c)].abs() > DIAGONAL_TOL * scale {
                return Err(Error::DiagonalityViolated);
            }
        }
    }
    let top = (0..n).map(|k| m[(k, k)]).fold(0.0, f64::max);
    Ok((0..n)
        .filter(|&k| top > 0.0 && m[(k, k)] > numlin::DEFAULT_RANK_TOL * top)
        .collect())
}

/// Set-based check for diagonal covariances: every coordinate of class `i`
/// outside `U'_ij` must be outside `U'_ji`, plus the rank-gap condition.
pub fn check_corollary3(instance: &ProblemInstance) -> Result<bool> {
    let supports = |models: &[crate::model::ClassModel]| {
        models
            .iter()
            .map(|m| diagonal_support(&m.covariance))
            .collect::<Result<Vec<_>>>()
    };
    let s = supports(&instance.true_models)?;
    let t = supports(&instance.mismatched_models)?;
    for (i, j) in instance.ordered_pairs() {
        let excl_ij: BTreeSet<usize> = t[i].difference(&t[j]).copied().collect();
        let excl_ji: BTreeSet<usize> = t[j].difference(&t[i]).copied().collect();
        let w: BTreeSet<usize> = s[i].difference(&excl_ij).copied().collect();
        if !w.is_disjoint(&excl_ji) {
            return Ok(false);
        }
        let s_v = s[i].intersection(&excl_ij).count();
        if t[j].len() <= t[i].len() && s_v == 0 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationCheck {
    pub decision: bool,
    pub delta: f64,
    pub eps1: f64,
    pub eps2: f64,
}

fn orthogonality_error(q: &Matrix) -> Result<f64> {
    if q.nrows() != q.ncols() {
        return Err(Error::NonSquare {
            rows: q.nrows(),
            cols: q.ncols(),
        });
    }
    let n = q.nrows();
    Ok(numlin::spectral_norm(&(q.transpose() * q - Matrix::identity(n, n))))
}

/// Two classes whose mismatched subspaces are rotations `Q_i U_i` of the
/// true ones. `delta` is the largest cosine between `U_1` and `U_2`, `eps_i
/// = ||I - Q_i||_2`. With `strict` the right side is scaled by `N`.
pub fn rotation_mismatch_check(
    u1: &Subspace,
    u2: &Subspace,
    q1: &Matrix,
    q2: &Matrix,
    strict: bool,
) -> Result<RotationCheck> {
    let n = u1.ambient_dim();
    if u2.ambient_dim() != n {
        return Err(Error::AmbientMismatch(n, u2.ambient_dim()));
    }
    for q in [q1, q2] {
        if q.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q.nrows(),
            });
        }
        let e = orthogonality_error(q)?;
        if e > 1e-8 {
            return Err(Error::NotOrthogonal(e));
        }
    }
    let delta = subspace::principal_angles(u1, u2)?.cosines[0];
    let eye = Matrix::identity(n, n);
    let eps1 = numlin::spectral_norm(&(&eye - q1));
    let eps2 = numlin::spectral_norm(&(&eye - q2));
    let factor = if strict { n as f64 } else { 1.0 };
    let decision = 1.0 - delta > factor * (eps1 + eps2);
    // A positive decision also needs the rotated subspaces to keep s^V > 0.
    if decision {
        let ut1 = Subspace::from_orthonormal(numlin::reorthonormalize(&(q1 * u1.basis()))?)?;
        let ut2 = Subspace::from_orthonormal(numlin::reorthonormalize(&(q2 * u2.basis()))?)?;
        let cos = Tolerances::default().cos;
        let s12 = PairGeometry::from_subspaces(0, 1, u1, &ut1, &ut2, cos)?.s_v();
        let s21 = PairGeometry::from_subspaces(1, 0, u2, &ut2, &ut1, cos)?.s_v();
        if s12 == 0 || s21 == 0 {
            return Err(Error::DegenerateOverlap(s12, s21));
        }
    }
    Ok(RotationCheck {
        decision,
        delta,
        eps1,
        eps2,
    })
}
