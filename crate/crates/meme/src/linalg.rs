//! Small dense symmetric linear algebra: cyclic Jacobi eigendecomposition,
//! SPD matrix square roots, and the pieces of classical CCA built on them.
//! Dimensions here are latent/feature sized (tens), so an O(n³) Jacobi
//! sweep is plenty.

use ndarray::{Array1, Array2};

use crate::error::MemeError;

/// Eigendecomposition of a symmetric matrix: returns (eigenvalues, V) with
/// A = V diag(vals) Vᵀ, columns of V orthonormal.
pub fn sym_eig(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eig needs a square matrix");
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = Array1::from_iter((0..n).map(|i| m[[i, i]]));
    (vals, v)
}

/// Symmetric positive semi-definite square root via eigendecomposition.
pub fn spd_sqrt(a: &Array2<f64>) -> Array2<f64> {
    let (vals, v) = sym_eig(a);
    let n = a.nrows();
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v[[i, k]] * vals[k].max(0.0).sqrt() * v[[j, k]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// General-covariance squared 2-Wasserstein between Gaussians:
/// d² = ‖m₁ − m₂‖² + Tr(Σ₁ + Σ₂ − 2 (Σ₁^½ Σ₂ Σ₁^½)^½).
pub fn w2_gaussian_full(
    m1: &Array1<f64>,
    c1: &Array2<f64>,
    m2: &Array1<f64>,
    c2: &Array2<f64>,
) -> f64 {
    let dm = m1 - m2;
    let mean_part: f64 = dm.iter().map(|x| x * x).sum();
    let s1h = spd_sqrt(c1);
    let inner = s1h.dot(c2).dot(&s1h);
    let cross = spd_sqrt(&inner);
    let tr: f64 = (0..c1.nrows())
        .map(|i| c1[[i, i]] + c2[[i, i]] - 2.0 * cross[[i, i]])
        .sum();
    mean_part + tr
}

/// Leading canonical correlation between two feature matrices (rows are
/// observations). Covariances are ridge-regularized before whitening.
pub fn cca_correlation(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64, MemeError> {
    if a.nrows() != b.nrows() {
        return Err(MemeError::shape("CCA feature row counts differ"));
    }
    let n = a.nrows();
    if n < 2 {
        return Err(MemeError::Data("CCA needs at least 2 rows".into()));
    }
    let ridge = 1e-8;
    let ac = center(a);
    let bc = center(b);
    let denom = (n - 1) as f64;
    let caa = regularized_gram(&ac, ridge, denom);
    let cbb = regularized_gram(&bc, ridge, denom);
    let cab = ac.t().dot(&bc) / denom;
    let wa = inv_sqrt(&caa);
    let wb = inv_sqrt(&cbb);
    let m = wa.dot(&cab).dot(&wb);
    // top singular value of M via eigen of MᵀM
    let mtm = m.t().dot(&m);
    let (vals, _) = sym_eig(&mtm);
    let top = vals.iter().cloned().fold(0.0f64, f64::max);
    Ok(top.max(0.0).sqrt().min(1.0))
}

fn center(a: &Array2<f64>) -> Array2<f64> {
    let mean = a.mean_axis(ndarray::Axis(0)).unwrap();
    a - &mean
}

fn regularized_gram(c: &Array2<f64>, ridge: f64, denom: f64) -> Array2<f64> {
    let mut g = c.t().dot(c) / denom;
    let tr: f64 = (0..g.nrows()).map(|i| g[[i, i]]).sum();
    let eps = ridge * (tr / g.nrows() as f64).max(1.0);
    for i in 0..g.nrows() {
        g[[i, i]] += eps;
    }
    g
}

fn inv_sqrt(a: &Array2<f64>) -> Array2<f64> {
    let (vals, v) = sym_eig(a);
    let n = a.nrows();
    let mut out = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                let lam = vals[k].max(1e-300);
                acc += v[[i, k]] * lam.sqrt().recip() * v[[j, k]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eig_reconstructs_matrix() {
        let a = array![[2.0, 0.5, 0.1], [0.5, 1.0, -0.3], [0.1, -0.3, 0.7]];
        let (vals, v) = sym_eig(&a);
        let mut rec = Array2::<f64>::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    rec[[i, j]] += v[[i, k]] * vals[k] * v[[j, k]];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!((rec[[i, j]] - a[[i, j]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let a = array![[1.4, 0.3], [0.3, 0.9]];
        let r = spd_sqrt(&a);
        let sq = r.dot(&r);
        for i in 0..2 {
            for j in 0..2 {
                assert!((sq[[i, j]] - a[[i, j]]).abs() < 1e-10);
            }
        }
    }
}
