//! The exponentially weighted operator `ℒ_a = e^{ax} J L₁ e^{-ax}` and the
//! Riesz projection onto its generalized kernel.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

use super::{Basis, DiscretizedOperator};
use crate::error::{Error, Result};
use crate::soliton::{build_profile, energy, SolitonProfile};
use crate::spectral::{Field, Grid};

/// Lower end `a₁ = -sqrt(1 - 2ω/c)` of the admissible weights.
pub fn weight_a1(c: f64, omega: f64) -> f64 {
    -(1.0 - 2.0 * omega / c).sqrt()
}

/// Weight `a*` at which `Λ(a)` is smallest.
pub fn weight_a_star(c: f64, omega: f64) -> f64 {
    let b = ((c + omega) - (4.0 * c * omega + omega * omega).sqrt()) / c;
    -b.sqrt()
}

/// `Λ = ac - 2aω/(1 - a²)`, the rightmost point of the weighted essential spectrum.
pub fn lambda_max(c: f64, omega: f64, a: f64) -> f64 {
    a * c - 2.0 * a * omega / (1.0 - a * a)
}

/// `z(k) = c(ik + a) - 2ω(ik + a)/(1 - (ik + a)²)`; poles are skipped.
pub fn essential_curve_weighted(
    c: f64,
    omega: f64,
    a: f64,
    kgrid: &[f64],
) -> Vec<(f64, Complex64)> {
    kgrid
        .iter()
        .filter_map(|&k| {
            let z = Complex64::new(a, k);
            let den = 1.0 - z * z;
            if den.norm() < 1e-14 {
                return None;
            }
            Some((k, c * z - 2.0 * omega * z / den))
        })
        .collect()
}

fn check_weight(c: f64, omega: f64, a: f64) -> Result<()> {
    let a1 = weight_a1(c, omega);
    if !(a > a1 && a <= 0.0) {
        return Err(Error::Parameter(format!(
            "weight a = {a} outside ({a1:.6}, 0]"
        )));
    }
    Ok(())
}

/// Dense circulant matrix of a Fourier multiplier with the Nyquist mode handled by `nyq`.
pub(crate) fn circulant(
    grid: &Grid,
    symbol: impl Fn(f64) -> Complex64,
    nyq: Complex64,
) -> DMatrix<f64> {
    let n = grid.n();
    let k_nyq = grid.wavenumbers()[n / 2];
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = Field::from_raw(*grid, e.clone()).apply_symbol(|k| {
            if k == k_nyq {
                nyq
            } else {
                symbol(k)
            }
        });
        for (i, v) in col.values().iter().enumerate() {
            m[(i, j)] = *v;
        }
        e[j] = 0.0;
    }
    m
}

/// `ℒ_a`, assembled by replacing `∂` with `∂ - a` in `J` and `L₁`.
/// `a = 0` gives the unweighted `J L₁`.
pub fn build_weighted_jl1(p: &SolitonProfile, a: f64) -> Result<DiscretizedOperator> {
    let (c, w) = (p.params.c, p.params.omega);
    check_weight(c, w, a)?;
    let g = *p.grid();
    let zeta = |k: f64| Complex64::new(-a, k);
    let za = Complex64::new(-a, 0.0);
    let d = circulant(&g, zeta, za);
    let jsym = |z: Complex64| -z / (1.0 - z * z);
    let j = circulant(&g, |k| jsym(zeta(k)), jsym(za));
    let coef = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        g.n(),
        p.phi.values().iter().map(|f| c - f),
    ));
    let pot = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        g.n(),
        p.phi
            .values()
            .iter()
            .zip(p.m.values())
            .map(|(f, m)| -3.0 * f + (f - m) + c - 2.0 * w),
    ));
    let l1 = -(&d * coef * &d) + pot;
    DiscretizedOperator::new(format!("L_a(a={a})"), g, Basis::Periodic, j * l1)
}

/// Generalized kernel of `ℒ_a` and of its adjoint, with the projections `P`, `Q = I - P`.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    pub f1: Field,
    pub f2: Field,
    pub g1: Field,
    pub g2: Field,
    /// `gram[j][k] = ⟨f_j, g_k⟩` before any correction.
    pub gram: [[f64; 2]; 2],
    pub p: DiscretizedOperator,
    pub q: DiscretizedOperator,
    /// `‖ℒ_a f₂ - f₁‖/‖f₁‖` and `‖ℒ_a* g₁ - g₂‖/‖g₂‖`.
    pub chain_residuals: [f64; 2],
}

impl ProjectionPair {
    pub fn biorthogonality_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for j in 0..2 {
            for k in 0..2 {
                let target = if j == k { 1.0 } else { 0.0 };
                e = e.max((self.gram[j][k] - target).abs());
            }
        }
        e
    }

    pub fn project(&self, v: &Field) -> Field {
        self.p.apply_field(v)
    }

    pub fn complement(&self, v: &Field) -> Field {
        self.q.apply_field(v)
    }
}

const FD_STEP: f64 = 1e-4;

pub fn spectral_projections(p: &SolitonProfile, a: f64) -> Result<ProjectionPair> {
    let (c, w, xp) = (p.params.c, p.params.omega, p.params.x_peak);
    check_weight(c, w, a)?;
    let g = *p.grid();
    let plus = build_profile(c + FD_STEP, w, &g, xp)?;
    let minus = build_profile(c - FD_STEP, w, &g, xp)?;
    let inv = 0.5 / FD_STEP;
    let dphi_dc = (&plus.phi - &minus.phi).scale(inv);
    let dm_dc = (&plus.m - &minus.m).scale(inv);
    let de_dc = (energy(&plus.phi) - energy(&minus.phi)) * inv;
    let dp_dc = (plus.phi.integrate() - minus.phi.integrate()) * inv;

    let c1 = -1.0 / de_dc;
    let c2 = -dp_dc * dp_dc / (2.0 * de_dc * de_dc);
    let total = dm_dc.integrate();
    let right_anchored = dm_dc.cumulative_integral().map(|v| v - total)?;
    let up = Field::from_fn(g, |x| (a * (x - xp)).exp())?;
    let down = Field::from_fn(g, |x| (-a * (x - xp)).exp())?;

    let f1 = up.pointwise(&p.dphi);
    let f2 = up.pointwise(&dphi_dc);
    let g1 = down.pointwise(&(&right_anchored.scale(c1) + &p.m.scale(c2)));
    let g2 = down.pointwise(&p.m.scale(1.0 / de_dc));

    let gram = [
        [f1.inner(&g1), f1.inner(&g2)],
        [f2.inner(&g1), f2.inner(&g2)],
    ];
    let gm = Matrix2::new(gram[0][0], gram[0][1], gram[1][0], gram[1][1]);
    let sv = gm.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond < 1e6) {
        return Err(Error::IllConditioned(cond));
    }
    let ginv_t = gm
        .try_inverse()
        .ok_or(Error::IllConditioned(f64::INFINITY))?
        .transpose();

    let n = g.n();
    let h = g.spacing();
    let fmat = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 {
            f1.values()[i]
        } else {
            f2.values()[i]
        }
    });
    let gmat = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 {
            g1.values()[i]
        } else {
            g2.values()[i]
        }
    });
    let pm = fmat * DMatrix::from_fn(2, 2, |i, j| ginv_t[(i, j)]) * gmat.transpose() * h;
    let qm = DMatrix::identity(n, n) - &pm;

    let la = build_weighted_jl1(p, a)?;
    let rel = |x: &Field, y: &Field| (x - y).l2_norm() / y.l2_norm();
    let lf2 = la.apply_field(&f2);
    let lt = la.matrix.transpose();
    let lg1 = Field::from_raw(
        g,
        (&lt * nalgebra::DVector::from_column_slice(g1.values()))
            .as_slice()
            .to_vec(),
    );

    Ok(ProjectionPair {
        chain_residuals: [rel(&lf2, &f1), rel(&lg1, &g2)],
        f1,
        f2,
        g1,
        g2,
        gram,
        p: DiscretizedOperator::new("P", g, Basis::Periodic, pm)?,
        q: DiscretizedOperator::new("Q", g, Basis::Periodic, qm)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::build_l1;

    fn profile() -> SolitonProfile {
        build_profile(4.0, 1.0, &Grid::centered(512, 80.0).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn closed_form_weights() {
        assert!((lambda_max(4.0, 1.0, -0.3) + 0.540659).abs() < 1e-6);
        assert!((weight_a1(4.0, 1.0) + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((weight_a_star(4.0, 1.0) + 0.468213).abs() < 1e-6);
    }

    #[test]
    fn essential_curve_shape() {
        let ks: Vec<f64> = (-2000..=2000).map(|i| i as f64 * 0.01).collect();
        let curve = essential_curve_weighted(4.0, 1.0, -0.3, &ks);
        let max_re = curve.iter().map(|(_, z)| z.re).fold(f64::MIN, f64::max);
        assert!((max_re - lambda_max(4.0, 1.0, -0.3)).abs() < 1e-10);
        let far = essential_curve_weighted(4.0, 1.0, -0.3, &[1e6])[0].1;
        assert!((far.re + 1.2).abs() < 1e-6);
        assert_eq!(essential_curve_weighted(4.0, 1.0, -1.0, &[0.0]).len(), 0);
    }

    #[test]
    fn rejects_bad_weight() {
        let p = profile();
        assert!(build_weighted_jl1(&p, -0.8).is_err());
        assert!(build_weighted_jl1(&p, 0.1).is_err());
    }

    #[test]
    fn zero_weight_is_unweighted() {
        let p = profile();
        let la = build_weighted_jl1(&p, 0.0).unwrap();
        let l1 = build_l1(&p).unwrap();
        let g = *p.grid();
        let n = g.n();
        let mut j = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            j.set_column(
                c,
                &nalgebra::DVector::from_vec(Field::from_raw(g, e).skew_j().into_values()),
            );
        }
        let jl1 = j * l1.matrix;
        assert!((&la.matrix - &jl1).norm() < 1e-12 * jl1.norm());
    }

    #[test]
    fn projections_biorthogonal() {
        let p = profile();
        let pp = spectral_projections(&p, -0.3).unwrap();
        assert!(pp.biorthogonality_error() < 1e-5, "{:?}", pp.gram);
        assert!(
            pp.chain_residuals[0] < 1e-4 && pp.chain_residuals[1] < 1e-4,
            "{:?}",
            pp.chain_residuals
        );
        let p2 = &pp.p.matrix * &pp.p.matrix;
        assert!((&p2 - &pp.p.matrix).norm() < 1e-8);
        let la = build_weighted_jl1(&p, -0.3).unwrap();
        let comm = &la.matrix * &pp.p.matrix - &pp.p.matrix * &la.matrix;
        assert!(
            comm.norm() < 1e-5 * la.matrix.norm(),
            "{}",
            comm.norm() / la.matrix.norm()
        );
    }
}
