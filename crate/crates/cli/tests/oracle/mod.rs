//! Dense reference implementations on plain `Vec<Vec<f64>>` matrices,
//! written independently of the library's linear algebra.

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Mat {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn identity(n: usize) -> Mat {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn transpose(a: &Mat) -> Mat {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect()
}

pub fn scale(a: &Mat, s: f64) -> Mat {
    a.iter().map(|row| row.iter().map(|v| v * s).collect()).collect()
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

/// `A Σ Aᵀ + s I`.
pub fn congruence_plus(a: &Mat, sigma: &Mat, s: f64) -> Mat {
    let mut c = matmul(&matmul(a, sigma), &transpose(a));
    for (i, row) in c.iter_mut().enumerate() {
        row[i] += s;
    }
    c
}

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes.
pub fn jacobi_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.len();
    let mut m = a.clone();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let total: f64 = m.iter().flatten().map(|v| v * v).sum();
        if off <= 1e-30 * total.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Product of eigenvalues above `rel · λ_max`.
pub fn pseudo_det(a: &Mat, rel: f64) -> f64 {
    let eig = jacobi_eigenvalues(a);
    let max = eig.iter().copied().fold(0.0, f64::max);
    eig.iter().filter(|&&l| max > 0.0 && l > rel * max).product()
}

pub fn rank(a: &Mat, rel: f64) -> usize {
    let eig = jacobi_eigenvalues(a);
    let max = eig.iter().copied().fold(0.0, f64::max);
    eig.iter().filter(|&&l| max > 0.0 && l > rel * max).count()
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(a: &Mat) -> f64 {
    let n = a.len();
    let mut m = a.clone();
    let mut d = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            d = -d;
        }
        d *= m[col][col];
        for r in (col + 1)..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    d
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m = a.clone();
    let mut inv = identity(n);
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(pivot, col);
        inv.swap(pivot, col);
        let p = m[col][col];
        for c in 0..n {
            m[col][c] /= p;
            inv[col][c] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                for c in 0..n {
                    m[r][c] -= f * m[col][c];
                    inv[r][c] -= f * inv[col][c];
                }
            }
        }
    }
    inv
}

pub fn quad_form(a_inv: &Mat, v: &[f64]) -> f64 {
    v.iter().zip(matvec(a_inv, v)).map(|(x, y)| x * y).sum()
}

/// Gaussian log-density of `y` under `N(mean, cov)`.
pub fn log_density(y: &[f64], mean: &[f64], cov: &Mat) -> f64 {
    let r: Vec<f64> = y.iter().zip(mean).map(|(a, b)| a - b).collect();
    let m = y.len() as f64;
    -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + det(cov).ln() + quad_form(&inverse(cov), &r))
}

/// Bhattacharyya exponent between `N(m1, c1)` and `N(m2, c2)`.
pub fn bhattacharyya(m1: &[f64], c1: &Mat, m2: &[f64], c2: &Mat) -> f64 {
    let avg = scale(&add(c1, c2), 0.5);
    let d: Vec<f64> = m1.iter().zip(m2).map(|(a, b)| a - b).collect();
    0.125 * quad_form(&inverse(&avg), &d) + 0.5 * (det(&avg).ln() - 0.5 * det(c1).ln() - 0.5 * det(c2).ln())
}

/// Least-squares slope of `y` on `x`.
pub fn slope(xy: &[(f64, f64)]) -> f64 {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn correlation(xy: &[(f64, f64)]) -> f64 {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}
