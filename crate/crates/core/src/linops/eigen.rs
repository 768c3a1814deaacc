//! Dense eigensolves and subspace diagnostics.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DiscretizedOperator;
use crate::error::{Error, Result};
use crate::spectral::Field;

const MAX_DENSE: usize = 2048;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalues with `|λ|` below the near-zero threshold.
    pub near_zero: Vec<Complex64>,
    /// Largest real part among the remaining eigenvalues.
    pub max_re_rest: f64,
    /// Smallest modulus among the remaining eigenvalues.
    pub gap: f64,
    /// Sampled essential-spectrum curve, when supplied.
    pub essential_curve: Vec<Complex64>,
    /// Orthonormal basis of the numerical generalized kernel.
    #[serde(skip)]
    pub selected: Vec<Field>,
}

impl SpectrumReport {
    /// Distance from each eigenvalue outside the near-zero set to the sampled curve.
    pub fn curve_distances(&self) -> Vec<(Complex64, f64)> {
        self.eigenvalues
            .iter()
            .filter(|z| !self.near_zero.contains(z))
            .map(|z| {
                let d = self
                    .essential_curve
                    .iter()
                    .map(|w| (z - w).norm())
                    .fold(f64::INFINITY, f64::min);
                (*z, d)
            })
            .collect()
    }

    /// Largest curve distance over eigenvalues outside the near-zero set.
    pub fn distance_to_curve(&self) -> f64 {
        self.curve_distances()
            .into_iter()
            .map(|(_, d)| d)
            .fold(0.0, f64::max)
    }
}

/// Full spectrum of a dense operator, split at `|λ| < near_zero_tol`.
/// The near-zero generalized eigenspace is extracted from the null space of `A²`.
pub fn eigen_spectrum(
    op: &DiscretizedOperator,
    near_zero_tol: f64,
    essential_curve: Vec<Complex64>,
) -> Result<SpectrumReport> {
    let n = op.dim();
    if n > MAX_DENSE {
        return Err(Error::EigenSolve(format!(
            "dense eigensolve limited to n ≤ {MAX_DENSE}, got {n}"
        )));
    }
    let a = if op.basis == super::Basis::Periodic {
        op.matrix.clone()
    } else {
        op.periodic_block()
    };
    let eigenvalues: Vec<Complex64> = a.clone().complex_eigenvalues().iter().copied().collect();
    if eigenvalues.len() != a.nrows()
        || eigenvalues
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::EigenSolve(
            "eigenvalue iteration did not converge".into(),
        ));
    }
    let (near_zero, rest): (Vec<Complex64>, Vec<Complex64>) =
        eigenvalues.iter().partition(|z| z.norm() < near_zero_tol);
    let max_re_rest = rest.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let gap = rest.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let selected = if near_zero.is_empty() {
        Vec::new()
    } else {
        null_space(&(&a * &a), near_zero.len())?
            .into_iter()
            .map(|v| Field::from_raw(op.grid, v))
            .collect()
    };
    Ok(SpectrumReport {
        eigenvalues,
        near_zero,
        max_re_rest,
        gap,
        essential_curve,
        selected,
    })
}

/// Right singular vectors for the `count` smallest singular values.
fn null_space(a: &DMatrix<f64>, count: usize) -> Result<Vec<Vec<f64>>> {
    let svd = a
        .clone()
        .try_svd(false, true, 1e-14, 10_000)
        .ok_or_else(|| Error::EigenSolve("SVD failed".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::EigenSolve("SVD returned no vectors".into()))?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    Ok(idx[..count]
        .iter()
        .map(|&i| vt.row(i).iter().copied().collect())
        .collect())
}

/// Real eigenvalues of the symmetric part, ascending.
pub fn symmetric_eigenvalues(op: &DiscretizedOperator) -> Vec<f64> {
    let a = op.periodic_block();
    let sym = (&a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest principal angle between `span(a)` and its projection onto `span(b)`;
/// zero when `span(a) ⊂ span(b)`.
pub fn subspace_angle(a: &[Field], b: &[Field]) -> f64 {
    let qa = orthonormal(a);
    let qb = orthonormal(b);
    let m = qa.transpose() * qb;
    let smin = m
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    smin.clamp(-1.0, 1.0).acos()
}

fn orthonormal(fs: &[Field]) -> DMatrix<f64> {
    let n = fs[0].len();
    let m = DMatrix::from_fn(n, fs.len(), |i, j| fs[j].values()[i]);
    m.qr().q()
}
