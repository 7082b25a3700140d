use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// How the support enters the Gaussian factor of a component.
#[derive(Clone, Copy, Debug)]
pub enum Gating<'a> {
    /// 0/1 gates: inactive coefficients decouple to their prior.
    Binary(&'a [f64]),
    /// Deterministic fractional gates `Z = diag(g)`.
    Scaled(&'a [f64]),
    /// Independent Bernoulli marginals, `E[Z G Z] = G ∘ (q qᵀ + diag(q - q²))`.
    MeanField(&'a [f64]),
}

#[derive(Clone, Debug)]
pub struct Moments {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub ln_det_sigma: f64,
}

fn min_eigenvalue(p: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(p)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn factor(p: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let backup = p.clone();
    Cholesky::new(p).ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: min_eigenvalue(backup),
    })
}

fn chol_ln_det(ch: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Gaussian factor `N(mu, Sigma)` with precision `diag(gamma) + alpha E[Z G Z]`
/// and mean `alpha Sigma E[Z] h`.
pub fn solve(
    gram: &DMatrix<f64>,
    h: &DVector<f64>,
    gamma: &[f64],
    alpha: f64,
    gating: Gating<'_>,
) -> Result<Moments> {
    let n = gamma.len();
    match gating {
        Gating::Binary(g) => {
            let active: Vec<usize> = (0..n).filter(|&i| g[i] > 0.5).collect();
            let mut sigma = DMatrix::zeros(n, n);
            let mut mu = DVector::zeros(n);
            let mut ln_det = 0.0;
            for i in 0..n {
                if g[i] <= 0.5 {
                    sigma[(i, i)] = 1.0 / gamma[i];
                    ln_det -= gamma[i].ln();
                }
            }
            if !active.is_empty() {
                let na = active.len();
                let p = DMatrix::from_fn(na, na, |a, b| {
                    let v = alpha * gram[(active[a], active[b])];
                    if a == b {
                        v + gamma[active[a]]
                    } else {
                        v
                    }
                });
                let ch = factor(p)?;
                ln_det -= chol_ln_det(&ch);
                let rhs = DVector::from_fn(na, |a, _| alpha * h[active[a]]);
                let m = ch.solve(&rhs);
                let mut s = ch.inverse();
                symmetrize(&mut s);
                for a in 0..na {
                    mu[active[a]] = m[a];
                    for b in 0..na {
                        sigma[(active[a], active[b])] = s[(a, b)];
                    }
                }
            }
            Ok(Moments {
                mu,
                sigma,
                ln_det_sigma: ln_det,
            })
        }
        Gating::Scaled(g) | Gating::MeanField(g) => {
            let mean_field = matches!(gating, Gating::MeanField(_));
            let p = DMatrix::from_fn(n, n, |i, j| {
                let mut v = alpha * gram[(i, j)] * g[i] * g[j];
                if i == j {
                    if mean_field {
                        v += alpha * gram[(i, i)] * (g[i] - g[i] * g[i]);
                    }
                    v += gamma[i];
                }
                v
            });
            let ch = factor(p)?;
            let ln_det_sigma = -chol_ln_det(&ch);
            let rhs = DVector::from_fn(n, |i, _| alpha * g[i] * h[i]);
            let mu = ch.solve(&rhs);
            let mut sigma = ch.inverse();
            symmetrize(&mut sigma);
            Ok(Moments {
                mu,
                sigma,
                ln_det_sigma,
            })
        }
    }
}
