//! Gauss–Legendre collocation tableaux on `[0, 1]`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Butcher tableau `(A, b, c)` of the `m`-stage Gauss method.
#[derive(Debug, Clone, PartialEq)]
pub struct Tableau {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl Tableau {
    pub fn stages(&self) -> usize {
        self.c.len()
    }

    /// Gauss nodes via the Golub–Welsch eigenproblem, weights and the
    /// collocation matrix `A_jk = ∫₀^{c_j} ℓ_k`.
    pub fn gauss(m: usize) -> Result<Self> {
        if !(1..=8).contains(&m) {
            return Err(Error::InvalidParameter(format!("collocation order {m} outside 1..=8")));
        }
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for k in 1..m {
            let kf = k as f64;
            let beta = kf / (4.0 * kf * kf - 1.0).sqrt();
            jac[(k - 1, k)] = beta;
            jac[(k, k - 1)] = beta;
        }
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..m)
            .map(|k| {
                let x = eig.eigenvalues[k];
                let v0 = eig.eigenvectors[(0, k)];
                (0.5 * (x + 1.0), v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let c: Vec<f64> = pairs.iter().map(|p| p.0).collect();

        // Lagrange basis coefficients from the inverse Vandermonde matrix.
        let v = DMatrix::from_fn(m, m, |j, n| c[j].powi(n as i32));
        let vinv = v.try_inverse().ok_or(Error::SingularJacobian)?;
        let a = (0..m)
            .map(|j| {
                (0..m)
                    .map(|k| (0..m).map(|n| vinv[(n, k)] * c[j].powi(n as i32 + 1) / (n as f64 + 1.0)).sum())
                    .collect()
            })
            .collect();
        let b = (0..m).map(|k| (0..m).map(|n| vinv[(n, k)] / (n as f64 + 1.0)).sum()).collect();
        Ok(Self { a, b, c })
    }
}
