//! Decay of `e^{tℒ_a}` on the complement of the generalized kernel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{build_weighted_jl1, spectral_projections};
use crate::error::{Error, Result};
use crate::soliton::SolitonProfile;
use crate::spectral::Field;
use crate::stats::linear_fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `ln‖w(t)‖_{H¹}` over `[T/2, T]`.
    pub rate: f64,
    pub r_squared: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
}

const CHECKPOINTS: usize = 40;

/// Evolve `w' = ℒ_a w` exactly at checkpoints and fit the exponential rate.
pub fn semigroup_decay_rate(
    p: &SolitonProfile,
    a: f64,
    w0: &Field,
    t_end: f64,
) -> Result<DecayFit> {
    if !(t_end >= 10.0) {
        return Err(Error::Parameter(format!("T = {t_end} must be at least 10")));
    }
    let proj = spectral_projections(p, a)?;
    let limit = 1e-6 * w0.l2_norm();
    let residual = proj.project(w0).l2_norm();
    if !(residual <= limit) {
        return Err(Error::Projection { residual, limit });
    }
    let la = build_weighted_jl1(p, a)?;
    let (times, norms) = norm_history(&la.matrix, w0, t_end)?;
    fit_tail(times, norms, t_end)
}

/// `‖e^{tA}w0‖_{H¹}` at evenly spaced checkpoints up to `t_end`.
pub(crate) fn norm_history(
    a: &DMatrix<f64>,
    w0: &Field,
    t_end: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dt = t_end / CHECKPOINTS as f64;
    let step = (a * dt).exp();
    let g = *w0.grid();
    let mut w = DVector::from_column_slice(w0.values());
    let mut times = vec![0.0];
    let mut norms = vec![w0.h1_norm()];
    for i in 1..=CHECKPOINTS {
        w = &step * w;
        times.push(i as f64 * dt);
        norms.push(Field::new(g, w.as_slice().to_vec())?.h1_norm());
    }
    Ok((times, norms))
}

/// Least-squares rate of `ln‖w‖` over `[T/2, T]`.
pub(crate) fn fit_tail(times: Vec<f64>, norms: Vec<f64>, t_end: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&norms)
        .filter(|(t, _)| **t >= 0.5 * t_end - 1e-12)
        .map(|(t, n)| (*t, n.ln()))
        .collect();
    let fit = linear_fit(&pts)?;
    Ok(DecayFit {
        rate: fit.slope,
        r_squared: fit.r_squared,
        times,
        norms,
    })
}
