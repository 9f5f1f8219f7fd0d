//! Dense real linear-algebra kernels.
//!
//! Everything here works on [`Matrix`] (a `nalgebra::DMatrix<f64>`) and is
//! sized for small ambient dimensions (up to a few hundred). Eigen-solves are
//! dense symmetric QR; no sparse or iterative path exists.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative tolerance used to decide numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Negative eigenvalues down to `-PSD_SLACK * lambda_max` are treated as roundoff.
pub const PSD_SLACK: f64 = 1e-10;

/// Eigen-factorization of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvectors.nrows();
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let v = self.eigenvectors.column(k);
            out += lam * &v * v.transpose();
        }
        out
    }

    pub fn min_eigenvalue(&self) -> Option<f64> {
        self.eigenvalues.last().copied()
    }

    pub fn max_eigenvalue(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }
}

/// Thin singular value decomposition `A = left * diag(s) * right^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub left: Matrix,
    pub singular_values: Vec<f64>,
    pub right: Matrix,
}

fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}

fn check_finite(a: &Matrix) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure("matrix has non-finite entries".into()))
    }
}

/// Average of `a` and its transpose, after checking the asymmetry is roundoff-sized.
pub fn symmetrize(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let asym = max_abs(&(a - a.transpose()));
    let tol = 1e-8 * max_abs(a).max(1.0);
    if asym > tol {
        return Err(Error::AsymmetryTooLarge {
            asymmetry: asym,
            tol,
        });
    }
    Ok((a + a.transpose()) * 0.5)
}

pub fn sym_eig(a: &Matrix) -> Result<SpectralDecomposition> {
    let sym = symmetrize(a)?;
    check_finite(&sym)?;
    let n = sym.nrows();
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: Matrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

pub fn svd(a: &Matrix) -> Result<Svd> {
    check_finite(a)?;
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(Svd {
            left: Matrix::zeros(m, 0),
            singular_values: Vec::new(),
            right: Matrix::zeros(n, 0),
        });
    }
    // nalgebra's bidiagonal QR SVD returns inaccurate factors on a few percent
    // of small well-conditioned inputs; one-sided Jacobi is exact enough here
    let out = jacobi_svd(a)?;
    if svd_is_accurate(a, &out) {
        Ok(out)
    } else {
        Err(Error::NumericalFailure("SVD did not converge".into()))
    }
}

fn svd_is_accurate(a: &Matrix, s: &Svd) -> bool {
    let (m, n) = a.shape();
    let k = s.singular_values.len();
    let tol = 64.0 * f64::EPSILON * (m + n) as f64;
    let mut rebuilt = s.left.clone();
    for (c, &sv) in s.singular_values.iter().enumerate() {
        rebuilt.column_mut(c).scale_mut(sv);
    }
    let rebuilt = rebuilt * s.right.transpose();
    let eye = Matrix::identity(k, k);
    max_abs(&(a - rebuilt)) <= tol * max_abs(a).max(1.0)
        && max_abs(&(s.left.transpose() * &s.left - &eye)) <= tol
        && max_abs(&(s.right.transpose() * &s.right - &eye)) <= tol
}

/// One-sided (Hestenes) Jacobi SVD.
fn jacobi_svd(a: &Matrix) -> Result<Svd> {
    if a.nrows() < a.ncols() {
        let t = jacobi_svd(&a.transpose())?;
        return Ok(Svd {
            left: t.right,
            singular_values: t.singular_values,
            right: t.left,
        });
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = Matrix::identity(n, n);
    let tol = 4.0 * n as f64 * f64::EPSILON;
    let mut converged = false;
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for r in 0..mat.nrows() {
                        let (xp, xq) = (mat[(r, p)], mat[(r, q)]);
                        mat[(r, p)] = c * xp - s * xq;
                        mat[(r, q)] = s * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure("Jacobi SVD did not converge".into()));
    }
    let norms: Vec<f64> = (0..n).map(|c| w.column(c).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let top = norms[order[0]];
    let mut left = Matrix::zeros(m, n);
    let mut live = 0;
    for (c, &o) in order.iter().enumerate() {
        if norms[o] > f64::EPSILON * top.max(f64::MIN_POSITIVE) * n as f64 {
            left.set_column(c, &(w.column(o) / norms[o]));
            live += 1;
        }
    }
    if live < n {
        // complete the left basis for (numerically) zero singular values
        let fill = orthonormal_complement(&left.columns(0, live).into_owned())?;
        for c in live..n {
            left.set_column(c, &fill.column(c - live));
        }
    }
    Ok(Svd {
        left,
        singular_values: order.iter().map(|&o| norms[o]).collect(),
        right: Matrix::from_fn(n, n, |r, c| v[(r, order[c])]),
    })
}

/// Number of `values` strictly above `rel_tol * values[0]`.
pub fn rank_with_tol(values: &[f64], rel_tol: f64) -> usize {
    match values.first() {
        Some(&top) if top > 0.0 => values.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    svd(a)
        .ok()
        .and_then(|s| s.singular_values.first().copied())
        .unwrap_or(f64::NAN)
}

/// Max-entry deviation of `b^T b` from the identity.
pub fn orthonormality_error(b: &Matrix) -> f64 {
    let g = b.transpose() * b;
    let k = g.nrows();
    max_abs(&(g - Matrix::identity(k, k)))
}

/// Orthonormal basis for the orthogonal complement of `im(b)`.
pub fn orthonormal_complement(b: &Matrix) -> Result<Matrix> {
    let (n, k) = b.shape();
    let dev = orthonormality_error(b);
    if k > n || dev > 1e-8 {
        return Err(Error::NotOrthonormal(dev));
    }
    if k == n {
        return Ok(Matrix::zeros(n, 0));
    }
    let proj = Matrix::identity(n, n) - b * b.transpose();
    let eig = sym_eig(&proj)?;
    Ok(eig.eigenvectors.columns(0, n - k).into_owned())
}

/// Closest column-orthonormal matrix with the same span (polar factor).
pub fn reorthonormalize(m: &Matrix) -> Result<Matrix> {
    if m.ncols() == 0 {
        return Ok(Matrix::zeros(m.nrows(), 0));
    }
    let s = svd(m)?;
    if s.singular_values.iter().any(|&v| v < 1e-6) {
        return Err(Error::NumericalFailure(
            "mapped basis lost rank during re-orthonormalization".into(),
        ));
    }
    Ok(&s.left * s.right.transpose())
}

/// Eigenvalues with roundoff negatives clamped to zero; errors on genuine negatives.
fn psd_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let eig = sym_eig(a)?;
    let top = eig.max_eigenvalue().unwrap_or(0.0).max(0.0);
    let bottom = eig.min_eigenvalue().unwrap_or(0.0);
    if bottom < -PSD_SLACK * top || (top == 0.0 && bottom < 0.0) {
        return Err(Error::NotPsd(bottom));
    }
    Ok(eig.eigenvalues.into_iter().map(|v| v.max(0.0)).collect())
}

/// Natural log of the pseudo-determinant (product of eigenvalues above `rel_tol * lambda_max`).
pub fn log_pdet(a: &Matrix, rel_tol: f64) -> Result<f64> {
    let vals = psd_eigenvalues(a)?;
    let r = rank_with_tol(&vals, rel_tol);
    Ok(vals[..r].iter().map(|v| v.ln()).sum())
}

/// Pseudo-determinant; 1 for the zero matrix.
pub fn pdet(a: &Matrix, rel_tol: f64) -> Result<f64> {
    log_pdet(a, rel_tol).map(f64::exp)
}

pub fn logdet_pd(a: &Matrix) -> Result<f64> {
    let eig = sym_eig(a)?;
    match eig.min_eigenvalue() {
        Some(min) if min <= 0.0 => Err(Error::NotPd(min)),
        _ => Ok(eig.eigenvalues.iter().map(|v| v.ln()).sum()),
    }
}

/// Default absolute tolerance for [`is_pd`]: `1e-12 * max(1, lambda_max)`.
pub fn default_pd_tol(lambda_max: f64) -> f64 {
    1e-12 * lambda_max.max(1.0)
}

/// True iff the smallest eigenvalue exceeds `abs_tol` (default [`default_pd_tol`]).
pub fn is_pd(a: &Matrix, abs_tol: Option<f64>) -> bool {
    match sym_eig(a) {
        Ok(eig) => {
            let (Some(max), Some(min)) = (eig.max_eigenvalue(), eig.min_eigenvalue()) else {
                return true;
            };
            min > abs_tol.unwrap_or_else(|| default_pd_tol(max))
        }
        Err(_) => false,
    }
}

pub fn min_eig_sym(a: &Matrix) -> Result<f64> {
    sym_eig(a)?
        .min_eigenvalue()
        .ok_or_else(|| Error::NumericalFailure("empty matrix has no eigenvalues".into()))
}

/// Parses the plain matrix CSV format: one row per line, comma-separated, no header.
pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| {
                    Error::Parse(format!("line {}: bad number {:?}: {e}", lineno + 1, f.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    matrix_from_rows(&rows)
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Parse(format!(
            "row {} has {} fields, expected {ncols}",
            i + 1,
            r.len()
        )));
    }
    let m = Matrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]);
    check_finite(&m).map_err(|_| Error::Parse("matrix has non-finite entries".into()))?;
    Ok(m)
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn write_matrix_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_column_slice(v))
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(e.eigenvalues.len(), 3);
        assert!(e.eigenvalues.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let e = sym_eig(&diag(&[0.0, 2.0, 1.0])).unwrap();
        let want = [2.0, 1.0, 0.0];
        for (a, b) in e.eigenvalues.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_rejects_bad_input() {
        assert!(matches!(
            sym_eig(&Matrix::zeros(2, 3)),
            Err(Error::NonSquare { .. })
        ));
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sym_eig(&m), Err(Error::AsymmetryTooLarge { .. })));
    }

    #[test]
    fn svd_of_basis_product_with_repeated_unit_values() {
        // product of two orthonormal 3-frames sharing a plane; a QR-based
        // solver returned a singular value above 1 for it
        let m = Matrix::from_column_slice(
            3,
            3,
            &[
                0.21865348196588222,
                -0.8401453624308945,
                -0.45080872352298773,
                0.4931866600459448,
                -0.3349185490187882,
                0.7842973928330796,
                -0.6412793715314425,
                -0.38134882115203206,
                0.09618584579390593,
            ],
        );
        let s = svd(&m).unwrap();
        assert!((s.singular_values[0] - 1.0).abs() < 1e-12);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-12);
        let gram = m.transpose() * &m;
        let third = gram.symmetric_eigenvalues().min().sqrt();
        assert!((s.singular_values[2] - third).abs() < 1e-12);
    }

    #[test]
    fn svd_small_cases() {
        let s = svd(&Matrix::identity(2, 2)).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0]);
        let s = svd(&Matrix::zeros(2, 3)).unwrap();
        assert_eq!(s.singular_values, vec![0.0, 0.0]);
        let p = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = svd(&p).unwrap();
        assert!(s.singular_values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn rank_thresholds() {
        assert_eq!(rank_with_tol(&[2.0, 1.0, 1e-15], 1e-10), 2);
        assert_eq!(rank_with_tol(&[0.0, 0.0, 0.0], 1e-10), 0);
        assert_eq!(rank_with_tol(&[1.0, 1e-9, 1e-12], 1e-10), 2);
        assert_eq!(rank_with_tol(&[], 1e-10), 0);
    }

    #[test]
    fn complement_edge_cases() {
        let e1 = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let c = orthonormal_complement(&e1).unwrap();
        assert_eq!(c.shape(), (2, 1));
        assert!(c[(0, 0)].abs() < 1e-14 && (c[(1, 0)].abs() - 1.0).abs() < 1e-14);
        let c = orthonormal_complement(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(c.shape(), (3, 0));
        let bad = Matrix::from_column_slice(2, 1, &[2.0, 0.0]);
        assert!(matches!(orthonormal_complement(&bad), Err(Error::NotOrthonormal(_))));
    }

    #[test]
    fn pdet_and_logdet() {
        assert!((pdet(&diag(&[1.0, 2.0, 0.0]), DEFAULT_RANK_TOL).unwrap() - 2.0).abs() < 1e-14);
        assert!((pdet(&Matrix::identity(4, 4), DEFAULT_RANK_TOL).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(pdet(&Matrix::zeros(3, 3), DEFAULT_RANK_TOL).unwrap(), 1.0);
        assert!(matches!(
            pdet(&diag(&[1.0, -0.5]), DEFAULT_RANK_TOL),
            Err(Error::NotPsd(_))
        ));
        assert!(logdet_pd(&Matrix::identity(5, 5)).unwrap().abs() < 1e-14);
        let e = std::f64::consts::E;
        assert!((logdet_pd(&diag(&[e, e])).unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(logdet_pd(&diag(&[1.0, 0.0])), Err(Error::NotPd(_))));
    }

    #[test]
    fn pd_checks() {
        assert!(is_pd(&Matrix::identity(2, 2), None));
        assert!(!is_pd(&diag(&[1.0, 0.0]), None));
        assert!(!is_pd(&diag(&[1.0, -1e-6]), None));
        assert_eq!(min_eig_sym(&diag(&[3.0, -2.0])).unwrap(), -2.0);
        assert_eq!(min_eig_sym(&Matrix::identity(3, 3)).unwrap(), 1.0);
    }

    #[test]
    fn csv_round_trip_and_rectangularity() {
        let m = parse_matrix_csv("1,2\n3, 4.5\n").unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.5]));
        assert_eq!(parse_matrix_csv(&write_matrix_csv(&m)).unwrap(), m);
        assert!(parse_matrix_csv("1,2\n3\n").is_err());
        assert!(parse_matrix_csv("1,x\n").is_err());
    }
}
