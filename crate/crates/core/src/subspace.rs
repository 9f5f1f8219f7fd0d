//! Subspace geometry: principal angles, correlation distances, intersections
//! and relative complements.
//!
//! A [`Subspace`] is stored as a column-orthonormal basis. The trivial
//! subspace `{0}` is an ordinary value with zero columns.

use crate::error::{Error, Result};
use crate::numlin::{self, Matrix};

/// Singular values within this distance of 1 count as shared directions,
/// and values at or below it count as orthogonal directions.
pub const DEFAULT_COS_TOL: f64 = 1e-9;

const CONTAINMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: Matrix,
}

impl Subspace {
    /// Wraps a basis that must already be orthonormal (within 1e-8).
    pub fn from_orthonormal(basis: Matrix) -> Result<Self> {
        if basis.ncols() > basis.nrows() {
            return Err(Error::NotOrthonormal(f64::INFINITY));
        }
        let dev = numlin::orthonormality_error(&basis);
        if dev > 1e-8 {
            return Err(Error::NotOrthonormal(dev));
        }
        Ok(Self { basis })
    }

    /// Orthonormalizes an arbitrary full-column-rank spanning set.
    pub fn from_spanning(columns: &Matrix) -> Result<Self> {
        let s = numlin::svd(columns)?;
        let r = numlin::rank_with_tol(&s.singular_values, numlin::DEFAULT_RANK_TOL);
        Ok(Self {
            basis: s.left.columns(0, r).into_owned(),
        })
    }

    pub fn trivial(ambient_dim: usize) -> Self {
        Self {
            basis: Matrix::zeros(ambient_dim, 0),
        }
    }

    /// Span of the given standard basis vectors (0-based).
    pub fn axes(ambient_dim: usize, axes: &[usize]) -> Self {
        let mut basis = Matrix::zeros(ambient_dim, axes.len());
        for (c, &a) in axes.iter().enumerate() {
            basis[(a, c)] = 1.0;
        }
        Self { basis }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_trivial(&self) -> bool {
        self.dim() == 0
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn projector(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }

    /// Orthogonal complement in the ambient space.
    pub fn complement(&self) -> Result<Subspace> {
        Ok(Self {
            basis: numlin::orthonormal_complement(&self.basis)?,
        })
    }

    /// Spectral norm of `(I - P) other`, zero iff `other` lies inside `self`.
    pub fn containment_residual(&self, other: &Subspace) -> f64 {
        if other.is_trivial() {
            return 0.0;
        }
        let resid = other.basis() - &self.basis * (self.basis.transpose() * other.basis());
        numlin::spectral_norm(&resid)
    }
}

fn same_ambient(y: &Subspace, z: &Subspace) -> Result<()> {
    if y.ambient_dim() != z.ambient_dim() {
        return Err(Error::AmbientMismatch(y.ambient_dim(), z.ambient_dim()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngles {
    /// Descending, clamped into [0, 1].
    pub cosines: Vec<f64>,
    /// Sines of the same angles (ascending), computed from the projection
    /// residual so small angles keep full relative precision.
    pub sines: Vec<f64>,
    /// Ascending, radians.
    pub angles: Vec<f64>,
}

pub fn principal_angles(y: &Subspace, z: &Subspace) -> Result<PrincipalAngles> {
    same_ambient(y, z)?;
    if y.is_trivial() || z.is_trivial() {
        return Err(Error::TrivialSubspace);
    }
    let s = numlin::svd(&(y.basis().transpose() * z.basis()))?;
    let cosines: Vec<f64> = s.singular_values.iter().map(|v| v.clamp(0.0, 1.0)).collect();

    let (small, large) = if z.dim() <= y.dim() { (z, y) } else { (y, z) };
    let resid = small.basis() - large.basis() * (large.basis().transpose() * small.basis());
    let mut sines: Vec<f64> = numlin::svd(&resid)?
        .singular_values
        .iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    sines.reverse();

    let angles = cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| s.atan2(c))
        .collect();
    Ok(PrincipalAngles {
        cosines,
        sines,
        angles,
    })
}

/// Max correlation distance: sine of the smallest principal angle.
pub fn d_max(y: &Subspace, z: &Subspace) -> Result<f64> {
    let pa = principal_angles(y, z)?;
    Ok(pa.sines[0])
}

/// Min correlation distance: sine of the largest principal angle.
pub fn d_min(y: &Subspace, z: &Subspace) -> Result<f64> {
    let pa = principal_angles(y, z)?;
    Ok(*pa.sines.last().expect("nonempty"))
}

pub fn intersect(y: &Subspace, z: &Subspace, cos_tol: f64) -> Result<Subspace> {
    same_ambient(y, z)?;
    if y.is_trivial() || z.is_trivial() {
        return Ok(Subspace::trivial(y.ambient_dim()));
    }
    let s = numlin::svd(&(y.basis().transpose() * z.basis()))?;
    let shared = s
        .singular_values
        .iter()
        .take_while(|&&v| v >= 1.0 - cos_tol)
        .count();
    let mapped = y.basis() * s.left.columns(0, shared);
    Ok(Subspace {
        basis: numlin::reorthonormalize(&mapped)?,
    })
}

/// Orthogonal complement of `s` inside `y`; `s` must lie in `y`.
pub fn complement_within(y: &Subspace, s: &Subspace) -> Result<Subspace> {
    same_ambient(y, s)?;
    let resid = y.containment_residual(s);
    if resid > CONTAINMENT_TOL {
        return Err(Error::NotContained(resid));
    }
    if s.is_trivial() {
        return Ok(y.clone());
    }
    if s.dim() >= y.dim() {
        return Ok(Subspace::trivial(y.ambient_dim()));
    }
    let coords = numlin::reorthonormalize(&(y.basis().transpose() * s.basis()))?;
    let rest = numlin::orthonormal_complement(&coords)?;
    Ok(Subspace {
        basis: numlin::reorthonormalize(&(y.basis() * rest))?,
    })
}

/// `{x in im(y) : t^T x = 0}`.
pub fn intersect_with_kernel(y: &Subspace, t: &Subspace, cos_tol: f64) -> Result<Subspace> {
    same_ambient(y, t)?;
    if t.is_trivial() || y.is_trivial() {
        return Ok(y.clone());
    }
    let s = numlin::svd(&(t.basis().transpose() * y.basis()))?;
    let active = s.singular_values.iter().filter(|&&v| v > cos_tol).count();
    let active_right = numlin::reorthonormalize(&s.right.columns(0, active).into_owned())?;
    let kernel = numlin::orthonormal_complement(&active_right)?;
    Ok(Subspace {
        basis: numlin::reorthonormalize(&(y.basis() * kernel))?,
    })
}

/// Split of two mismatched class subspaces into shared and exclusive parts.
#[derive(Debug, Clone)]
pub struct PairDecomposition {
    pub shared: Subspace,
    pub exclusive_i: Subspace,
    pub exclusive_j: Subspace,
}

pub fn pair_decomposition(ui: &Subspace, uj: &Subspace, cos_tol: f64) -> Result<PairDecomposition> {
    let shared = intersect(ui, uj, cos_tol)?;
    let exclusive_i = complement_within(ui, &shared)?;
    let exclusive_j = complement_within(uj, &shared)?;
    Ok(PairDecomposition {
        shared,
        exclusive_i,
        exclusive_j,
    })
}

/// Split of a true class subspace into the part orthogonal to the class's
/// exclusive mismatched subspace (`w`) and its complement (`v`).
#[derive(Debug, Clone)]
pub struct MismatchSplit {
    pub w: Subspace,
    pub v: Subspace,
}

pub fn mismatch_geometry(u: &Subspace, exclusive: &Subspace, cos_tol: f64) -> Result<MismatchSplit> {
    let w = intersect_with_kernel(u, exclusive, cos_tol)?;
    let v = complement_within(u, &w)?;
    Ok(MismatchSplit { w, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(theta: f64) -> Subspace {
        Subspace::from_orthonormal(Matrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]))
            .unwrap()
    }

    fn same_span(a: &Subspace, b: &Subspace) -> bool {
        a.dim() == b.dim() && a.containment_residual(b) < 1e-10 && b.containment_residual(a) < 1e-10
    }

    #[test]
    fn angles_basic() {
        let y = Subspace::axes(3, &[0, 1]);
        let pa = principal_angles(&y, &y).unwrap();
        assert!(pa.angles.iter().all(|a| a.abs() < 1e-12));
        let pa = principal_angles(&Subspace::axes(2, &[0]), &Subspace::axes(2, &[1])).unwrap();
        assert!((pa.angles[0] - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn example_two_lines() {
        let y = Subspace::axes(2, &[1]);
        let z = line(5.0 * PI / 6.0);
        let pa = principal_angles(&y, &z).unwrap();
        assert!((pa.cosines[0] - 0.5).abs() < 1e-12);
        assert!((pa.angles[0] - PI / 3.0).abs() < 1e-12);
        assert!((d_max(&y, &z).unwrap() - (PI / 3.0).sin()).abs() < 1e-12);
        assert!((d_min(&y, &z).unwrap() - d_max(&y, &z).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn distances() {
        let y = Subspace::axes(3, &[0, 1]);
        let z = Subspace::axes(3, &[0, 2]);
        assert!(d_max(&y, &y).unwrap() < 1e-14);
        assert!(d_min(&y, &y).unwrap() < 1e-14);
        assert!((d_min(&y, &z).unwrap() - 1.0).abs() < 1e-12);
        assert!(d_max(&y, &z).unwrap() < 1e-14);
        assert!((d_max(&Subspace::axes(2, &[0]), &Subspace::axes(2, &[1])).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            principal_angles(&Subspace::trivial(3), &y),
            Err(Error::TrivialSubspace)
        ));
        assert!(matches!(
            principal_angles(&Subspace::axes(2, &[0]), &y),
            Err(Error::AmbientMismatch(2, 3))
        ));
    }

    #[test]
    fn example_one_decomposition() {
        let u1t = Subspace::axes(4, &[0, 1]);
        let u2t = Subspace::axes(4, &[1, 2]);
        let d = pair_decomposition(&u1t, &u2t, DEFAULT_COS_TOL).unwrap();
        assert!(same_span(&d.shared, &Subspace::axes(4, &[1])));
        assert!(same_span(&d.exclusive_i, &Subspace::axes(4, &[0])));
        assert!(same_span(&d.exclusive_j, &Subspace::axes(4, &[2])));

        let u1 = Subspace::axes(4, &[0, 1, 2]);
        let split = mismatch_geometry(&u1, &d.exclusive_i, DEFAULT_COS_TOL).unwrap();
        assert!(same_span(&split.w, &Subspace::axes(4, &[1, 2])));
        assert!(same_span(&split.v, &Subspace::axes(4, &[0])));
    }

    #[test]
    fn intersection_edge_cases() {
        let e1 = Subspace::axes(2, &[0]);
        let e2 = Subspace::axes(2, &[1]);
        assert!(intersect(&e1, &e2, DEFAULT_COS_TOL).unwrap().is_trivial());
        let y = Subspace::from_spanning(&Matrix::from_fn(5, 2, |r, c| ((r + 1) * (c + 2)) as f64 + (r * r) as f64))
            .unwrap();
        assert!(same_span(&intersect(&y, &y, DEFAULT_COS_TOL).unwrap(), &y));
    }

    #[test]
    fn complement_within_cases() {
        let y = Subspace::axes(3, &[0, 1]);
        let c = complement_within(&y, &Subspace::axes(3, &[1])).unwrap();
        assert!(same_span(&c, &Subspace::axes(3, &[0])));
        assert!(complement_within(&y, &y).unwrap().is_trivial());
        assert!(same_span(&complement_within(&y, &Subspace::trivial(3)).unwrap(), &y));
        assert!(matches!(
            complement_within(&y, &Subspace::axes(3, &[2])),
            Err(Error::NotContained(_))
        ));
    }

    #[test]
    fn kernel_intersection_cases() {
        let y = Subspace::axes(4, &[0, 1, 2]);
        let w = intersect_with_kernel(&y, &Subspace::axes(4, &[0]), DEFAULT_COS_TOL).unwrap();
        assert!(same_span(&w, &Subspace::axes(4, &[1, 2])));
        let w = intersect_with_kernel(&y, &Subspace::axes(4, &[3]), DEFAULT_COS_TOL).unwrap();
        assert!(same_span(&w, &y));
        let all = Subspace::axes(4, &[0, 1, 2, 3]);
        assert!(intersect_with_kernel(&y, &all, DEFAULT_COS_TOL).unwrap().is_trivial());
    }

    #[test]
    fn split_when_exclusive_part_covers_u() {
        // every direction of U has a nonzero projection onto the exclusive subspace
        let u = Subspace::axes(3, &[0, 1]);
        let ex = Subspace::from_spanning(&Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]))
            .unwrap();
        let split = mismatch_geometry(&u, &ex, DEFAULT_COS_TOL).unwrap();
        assert!(split.w.is_trivial());
        assert!(same_span(&split.v, &u));
        // brute-force: P_ex x = 0 for x in im(U) has only x = 0
        let m = ex.basis().transpose() * u.basis();
        assert!(numlin::svd(&m).unwrap().singular_values.iter().all(|&s| s > 1e-3));

        let split = mismatch_geometry(&u, &Subspace::trivial(3), DEFAULT_COS_TOL).unwrap();
        assert!(same_span(&split.w, &u));
        assert!(split.v.is_trivial());
    }

    #[test]
    fn pair_decomposition_extremes() {
        let a = Subspace::axes(4, &[0, 1]);
        let d = pair_decomposition(&a, &a, DEFAULT_COS_TOL).unwrap();
        assert!(same_span(&d.shared, &a));
        assert!(d.exclusive_i.is_trivial() && d.exclusive_j.is_trivial());
        let b = Subspace::axes(4, &[2, 3]);
        let d = pair_decomposition(&a, &b, DEFAULT_COS_TOL).unwrap();
        assert!(d.shared.is_trivial());
        assert!(same_span(&d.exclusive_i, &a) && same_span(&d.exclusive_j, &b));
    }
}
