#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use submis::model::{ClassModel, ProblemInstance, RankSpec};
use submis::numlin::{Matrix, Vector};
use submis::subspace::Subspace;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Gram-Schmidt with re-orthogonalization; independent of the library.
pub fn gram_schmidt(a: &Matrix) -> Matrix {
    let mut q = Matrix::zeros(a.nrows(), a.ncols());
    for c in 0..a.ncols() {
        let mut v = a.column(c).into_owned();
        for _ in 0..2 {
            for k in 0..c {
                let qk = q.column(k).into_owned();
                let p = qk.dot(&v);
                v -= qk * p;
            }
        }
        let n = v.norm();
        q.set_column(c, &(v / n));
    }
    q
}

pub fn random_orthonormal(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    gram_schmidt(&gaussian(n, k, rng))
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det_lu(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut m = a.clone();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[(x, c)].abs().total_cmp(&m[(y, c)].abs())).unwrap();
        if m[(p, c)] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap_rows(p, c);
            det = -det;
        }
        det *= m[(c, c)];
        for r in c + 1..n {
            let f = m[(r, c)] / m[(c, c)];
            for k in c..n {
                let v = m[(c, k)];
                m[(r, k)] -= f * v;
            }
        }
    }
    det
}

pub fn diag(v: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(v))
}

pub fn model_from_basis(prior: f64, basis: &Matrix, eigs: &[f64]) -> ClassModel {
    ClassModel::from_factors(prior, Subspace::from_orthonormal(basis.clone()).unwrap(), eigs.to_vec()).unwrap()
}

pub fn diag_model(prior: f64, d: &[f64]) -> ClassModel {
    ClassModel::from_covariance(prior, &diag(d), RankSpec::default()).unwrap()
}

/// Random instance whose subspaces are spans of columns of a shared random
/// orthonormal frame, some of them slightly rotated, so that intersections,
/// containments and generic positions all occur.
pub fn random_instance(rng: &mut ChaCha8Rng) -> ProblemInstance {
    let n = rng.random_range(2..=8usize);
    let c = if n >= 4 && rng.random_bool(0.3) { 3 } else { 2 };
    let frame = random_orthonormal(n, n, rng);
    let pick = |rng: &mut ChaCha8Rng| -> (Matrix, Vec<f64>) {
        let r = rng.random_range(1..=3usize.min(n));
        let mut idx: Vec<usize> = (0..n).collect();
        for k in 0..r {
            let j = rng.random_range(k..n);
            idx.swap(k, j);
        }
        let mut b = Matrix::from_fn(n, r, |row, col| frame[(row, idx[col])]);
        match rng.random_range(0..3) {
            0 => {}
            1 => {
                let eps: f64 = rng.random_range(1e-3..0.5);
                b += gaussian(n, r, rng) * eps;
                b = gram_schmidt(&b);
            }
            _ => b = random_orthonormal(n, r, rng),
        }
        let eigs: Vec<f64> = (0..r).map(|_| rng.random_range(0.2..2.0)).collect();
        (b, eigs)
    };
    let p = 1.0 / c as f64;
    let mut t = Vec::new();
    let mut m = Vec::new();
    for _ in 0..c {
        let (b, e) = pick(rng);
        let tm = model_from_basis(p, &b, &e);
        // mismatched model: reuse, perturb, or redraw
        let mm = match rng.random_range(0..3) {
            0 => tm.clone(),
            1 => {
                let (b2, e2) = pick(rng);
                model_from_basis(p, &b2, &e2)
            }
            _ => {
                let keep = rng.random_range(1..=b.ncols());
                let sub = b.columns(0, keep).into_owned();
                model_from_basis(p, &sub, &e[..keep])
            }
        };
        t.push(tm);
        m.push(mm);
    }
    ProblemInstance::new(t, m).unwrap()
}

/// Random instance with diagonal covariances.
pub fn random_diagonal_instance(rng: &mut ChaCha8Rng) -> ProblemInstance {
    let n = rng.random_range(2..=8usize);
    let c = if n >= 4 && rng.random_bool(0.3) { 3 } else { 2 };
    let draw = |rng: &mut ChaCha8Rng| -> ClassModel {
        let r = rng.random_range(1..=3usize.min(n));
        let mut d = vec![0.0; n];
        let mut placed = 0;
        while placed < r {
            let k = rng.random_range(0..n);
            if d[k] == 0.0 {
                d[k] = rng.random_range(0.2..2.0);
                placed += 1;
            }
        }
        diag_model(1.0 / c as f64, &d)
    };
    let t = (0..c).map(|_| draw(rng)).collect();
    let m = (0..c).map(|_| draw(rng)).collect();
    ProblemInstance::new(t, m).unwrap()
}
