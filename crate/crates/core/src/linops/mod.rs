//! Dense discretizations of the linearized, recursion and weighted operators
//! around a soliton.
//!
//! Operators that involve `∂^{-1}` act on an augmented basis: the `n` periodic
//! samples plus one coordinate holding the slope of the ramp `ρ = x - x0`.
//! Antiderivatives of integrands with nonzero mass are then represented
//! exactly and `∂∂^{-1} = I` holds on the grid.

mod eigen;
mod liouville;
mod semigroup;
mod weighted;

pub(crate) use semigroup::{fit_tail, norm_history};
pub(crate) use weighted::circulant;

pub use eigen::{eigen_spectrum, subspace_angle, symmetric_eigenvalues, SpectrumReport};
pub use liouville::{
    liouville_potential_closed_form, liouville_potential_reference, liouville_transform_potential,
};
pub use semigroup::{semigroup_decay_rate, DecayFit};
pub use weighted::{
    build_weighted_jl1, essential_curve_weighted, lambda_max, spectral_projections, weight_a1,
    weight_a_star, ProjectionPair,
};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturb::localized_random;
use crate::soliton::SolitonProfile;
use crate::spectral::{Field, Grid};

/// Coordinates an operator matrix acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    /// `n` periodic samples.
    Periodic,
    /// `n` periodic samples followed by the slope of `x - x0`.
    Ramp,
}

impl Basis {
    pub fn dim(&self, grid: &Grid) -> usize {
        match self {
            Basis::Periodic => grid.n(),
            Basis::Ramp => grid.n() + 1,
        }
    }
}

/// Dense real operator matrix on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedOperator {
    pub label: String,
    pub grid: Grid,
    pub basis: Basis,
    pub matrix: DMatrix<f64>,
}

impl DiscretizedOperator {
    pub fn new(
        label: impl Into<String>,
        grid: Grid,
        basis: Basis,
        matrix: DMatrix<f64>,
    ) -> Result<Self> {
        let d = basis.dim(&grid);
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Grid(format!(
                "matrix is {}x{}, basis needs {d}x{d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            label: label.into(),
            grid,
            basis,
            matrix,
        })
    }

    /// Assemble column by column from a matrix-free action.
    pub(crate) fn from_action(
        label: &str,
        grid: Grid,
        basis: Basis,
        action: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        let d = basis.dim(&grid);
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = action(&e);
            m.set_column(j, &DVector::from_vec(col));
            e[j] = 0.0;
        }
        Self {
            label: label.into(),
            grid,
            basis,
            matrix: m,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.basis != other.basis {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            label: format!("{}·{}", self.label, other.label),
            grid: self.grid,
            basis: self.basis,
            matrix: &self.matrix * &other.matrix,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(Self {
            label: format!("{}-{}", self.label, other.label),
            grid: self.grid,
            basis: self.basis,
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    /// Action on a field (ramp coordinate zero), returning the periodic part.
    pub fn apply_field(&self, f: &Field) -> Field {
        let mut v = f.values().to_vec();
        if self.basis == Basis::Ramp {
            v.push(0.0);
        }
        let out = self.apply(&DVector::from_vec(v));
        Field::from_raw(self.grid, out.as_slice()[..self.grid.n()].to_vec())
    }

    /// The `n × n` block acting on periodic samples.
    pub fn periodic_block(&self) -> DMatrix<f64> {
        let n = self.grid.n();
        self.matrix.view((0, 0), (n, n)).into_owned()
    }

    /// `‖A - Aᵀ‖_F / ‖A‖_F` on the periodic block.
    pub fn symmetry_residual(&self) -> f64 {
        let a = self.periodic_block();
        (&a - a.transpose()).norm() / a.norm()
    }

    /// `‖Vᵀ(A - Aᵀ)V‖_F / ‖VᵀAV‖_F` on the periodic block for test vectors `V`.
    pub fn symmetry_residual_on(&self, v: &DMatrix<f64>) -> f64 {
        let n = self.grid.n();
        let a = self.periodic_block();
        let vp = v.rows(0, n);
        let form = vp.transpose() * &a * vp;
        (&form - form.transpose()).norm() / form.norm()
    }

    /// Upcast a periodic operator to the ramp basis (ramp coordinate mapped to zero).
    pub fn to_ramp(&self) -> Self {
        if self.basis == Basis::Ramp {
            return self.clone();
        }
        let n = self.grid.n();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&self.matrix);
        Self {
            label: self.label.clone(),
            grid: self.grid,
            basis: Basis::Ramp,
            matrix: m,
        }
    }
}

/// Matrix-free operators on the ramp basis.
pub(crate) struct RampOps {
    grid: Grid,
    rho: Vec<f64>,
}

impl RampOps {
    pub(crate) fn new(grid: Grid) -> Self {
        let rho = (0..grid.n()).map(|i| grid.point(i) - grid.x0()).collect();
        Self { grid, rho }
    }

    fn n(&self) -> usize {
        self.grid.n()
    }

    fn per(&self, v: &[f64]) -> Field {
        Field::from_raw(self.grid, v[..self.n()].to_vec())
    }

    fn join(&self, f: Field, ramp: f64) -> Vec<f64> {
        let mut v = f.into_values();
        v.push(ramp);
        v
    }

    /// `∂`: the ramp contributes the constant slope.
    pub(crate) fn d(&self, v: &[f64]) -> Vec<f64> {
        let r = v[self.n()];
        let f = self.per(v).dx().map(|x| x + r).expect("finite");
        self.join(f, 0.0)
    }

    /// `(1 - ∂²)^{-1}`; the ramp is invariant.
    pub(crate) fn h(&self, v: &[f64]) -> Vec<f64> {
        self.join(self.per(v).helmholtz_inverse(), v[self.n()])
    }

    /// `(1 - ∂²)`.
    pub(crate) fn h_inv(&self, v: &[f64]) -> Vec<f64> {
        self.join(self.per(v).helmholtz(), v[self.n()])
    }

    /// Odd antiderivative `∫_{x0}^x f - ½∫f`; ramp input is dropped.
    pub(crate) fn s_odd(&self, v: &[f64]) -> Vec<f64> {
        let f = self.per(v);
        let mean = f.mean();
        let centered = f.map(|x| x - mean).expect("finite");
        let prim = centered
            .antiderivative_with_threshold(f64::INFINITY)
            .expect("mean removed")
            .field;
        let half = 0.5 * mean * self.grid.length();
        self.join(prim.map(|x| x - half).expect("finite"), mean)
    }

    /// Antiderivative `∫_{x0}^x f`, anchored at the left edge; ramp input is dropped.
    pub(crate) fn s_left(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.s_odd(v);
        let half = 0.5 * out[self.n()] * self.grid.length();
        for x in &mut out[..self.n()] {
            *x += half;
        }
        out
    }

    /// Multiplication by `constant + local(x)`, `local` decaying.
    pub(crate) fn mult(&self, local: &[f64], constant: f64, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let r = v[n];
        let mut out: Vec<f64> = (0..n)
            .map(|i| (local[i] + constant) * v[i] + local[i] * self.rho[i] * r)
            .collect();
        out.push(constant * r);
        out
    }

    /// Lift a field to the ramp basis.
    pub(crate) fn lift(&self, f: &Field) -> Vec<f64> {
        self.join(f.clone(), 0.0)
    }
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(p, q)| a * p + q).collect()
}

/// Matrix-free `R(u) = (2ω + m + ∂^{-1}m∂)(1 - ∂²)^{-1}` and relatives for a momentum `m`.
pub(crate) struct Recursion<'a> {
    ops: &'a RampOps,
    m: Vec<f64>,
    omega: f64,
}

impl<'a> Recursion<'a> {
    pub(crate) fn new(ops: &'a RampOps, m: &Field, omega: f64) -> Self {
        Self {
            ops,
            m: m.values().to_vec(),
            omega,
        }
    }

    /// `(2ω + m + ∂^{-1}m∂) t`.
    fn core(&self, t: &[f64]) -> Vec<f64> {
        let o = self.ops;
        let a = o.mult(&self.m, 2.0 * self.omega, t);
        let b = o.s_odd(&o.mult(&self.m, 0.0, &o.d(t)));
        axpy(1.0, &a, &b)
    }

    pub(crate) fn r(&self, v: &[f64]) -> Vec<f64> {
        self.core(&self.ops.h(v))
    }

    pub(crate) fn k(&self, v: &[f64]) -> Vec<f64> {
        self.ops.h(&self.core(v))
    }

    /// `(1 - ∂²)^{-1}(2ω + m + ∂ m ∂^{-1})`.
    pub(crate) fn r_star(&self, v: &[f64]) -> Vec<f64> {
        let o = self.ops;
        let a = o.mult(&self.m, 2.0 * self.omega, v);
        let b = o.d(&o.mult(&self.m, 0.0, &o.s_odd(v)));
        o.h(&axpy(1.0, &a, &b))
    }
}

/// `J = -∂(1 - ∂²)^{-1}` on the ramp basis.
pub(crate) fn j_ramp(ops: &RampOps, v: &[f64]) -> Vec<f64> {
    ops.d(&ops.h(v)).into_iter().map(|x| -x).collect()
}

/// `L₁ = -∂((c - φ)∂) - 3φ + φ'' + c - 2ω` on the ramp basis.
pub(crate) fn l1_ramp(ops: &RampOps, p: &SolitonProfile, v: &[f64]) -> Vec<f64> {
    let (c, w) = (p.params.c, p.params.omega);
    let neg_phi: Vec<f64> = p.phi.values().iter().map(|x| -x).collect();
    let pot: Vec<f64> = p
        .phi
        .values()
        .iter()
        .zip(p.m.values())
        .map(|(f, m)| -3.0 * f + (f - m))
        .collect();
    let a = ops.d(&ops.mult(&neg_phi, c, &ops.d(v)));
    let b = ops.mult(&pot, c - 2.0 * w, v);
    a.iter().zip(&b).map(|(x, y)| -x + y).collect()
}

/// `L₁` on periodic samples; symmetric by construction.
pub fn build_l1(p: &SolitonProfile) -> Result<DiscretizedOperator> {
    check_class(p)?;
    let g = *p.grid();
    let ops = RampOps::new(g);
    let op = DiscretizedOperator::from_action("L1", g, Basis::Ramp, |v| l1_ramp(&ops, p, v));
    let block = op.periodic_block();
    DiscretizedOperator::new("L1", g, Basis::Periodic, block)
}

fn check_class(p: &SolitonProfile) -> Result<()> {
    if p.params.c <= 2.0 * p.params.omega {
        return Err(Error::Parameter("c ≤ 2ω".into()));
    }
    if p.m.values().iter().any(|&m| m + p.params.omega <= 0.0) {
        return Err(Error::Domain("m + ω ≤ 0".into()));
    }
    Ok(())
}

/// Recursion operator `R`, its adjoint `R*` and `𝒦 = (1 - ∂²)^{-1}(2ω + m + ∂^{-1}m∂)`.
#[derive(Debug, Clone)]
pub struct RecursionOperators {
    pub r: DiscretizedOperator,
    pub r_star: DiscretizedOperator,
    pub k: DiscretizedOperator,
    /// `‖R - (1 - ∂²)𝒦(1 - ∂²)^{-1}‖_F / ‖R‖_F`.
    pub similarity_residual: f64,
}

pub fn build_recursion(p: &SolitonProfile) -> Result<RecursionOperators> {
    check_class(p)?;
    let g = *p.grid();
    let ops = RampOps::new(g);
    let rec = Recursion::new(&ops, &p.m, p.params.omega);
    let r = DiscretizedOperator::from_action("R", g, Basis::Ramp, |v| rec.r(v));
    let r_star = DiscretizedOperator::from_action("R*", g, Basis::Ramp, |v| rec.r_star(v));
    let k = DiscretizedOperator::from_action("K", g, Basis::Ramp, |v| rec.k(v));
    let sim = DiscretizedOperator::from_action("(1-∂²)K(1-∂²)^-1", g, Basis::Ramp, |v| {
        ops.h_inv(&rec.k(&ops.h(v)))
    });
    let similarity_residual = (&r.matrix - &sim.matrix).norm() / r.matrix.norm();
    Ok(RecursionOperators {
        r,
        r_star,
        k,
        similarity_residual,
    })
}

/// `J` on the ramp basis.
pub fn build_j(grid: &Grid) -> DiscretizedOperator {
    let ops = RampOps::new(*grid);
    DiscretizedOperator::from_action("J", *grid, Basis::Ramp, |v| j_ramp(&ops, v))
}

/// `L_n = R^{n-1} L₁` on the ramp basis.
pub fn build_ln(
    p: &SolitonProfile,
    n: usize,
    rec: &RecursionOperators,
) -> Result<DiscretizedOperator> {
    if n == 0 {
        return Err(Error::Parameter("L_n needs n ≥ 1".into()));
    }
    let mut l = build_l1(p)?.to_ramp();
    for _ in 1..n {
        l = rec.r.compose(&l)?;
    }
    l.label = format!("L{n}");
    Ok(l)
}

/// Seeded smooth test vectors localized in the middle half of the box.
pub fn smooth_test_vectors(grid: &Grid, count: usize, seed: u64) -> DMatrix<f64> {
    let n = grid.n();
    let center = grid.x0() + 0.5 * grid.length();
    let width = grid.length() / 8.0;
    let mut v = DMatrix::zeros(n + 1, count);
    for j in 0..count {
        let f = localized_random(grid, (n / 16).min(40), 1.0, center, width, seed + j as u64);
        for i in 0..n {
            v[(i, j)] = f.values()[i];
        }
    }
    v
}

fn rel_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorResiduals {
    /// `‖(L_n J R - R L_n J)V‖ / ‖L_n J R V‖`.
    pub r1: f64,
    /// `‖(J L_n R* - R* J L_n)V‖ / ‖J L_n R* V‖`.
    pub r2: f64,
    /// `‖(R* J - J R)V‖ / ‖J R V‖`.
    pub intertwining: f64,
}

/// Commutator identities measured on 32 smooth localized test functions.
pub fn commutator_residuals(p: &SolitonProfile, n: usize) -> Result<CommutatorResiduals> {
    let rec = build_recursion(p)?;
    let ln = build_ln(p, n, &rec)?;
    let j = build_j(p.grid());
    let v = smooth_test_vectors(p.grid(), 32, 1000);
    let (r, rs, l, j) = (&rec.r.matrix, &rec.r_star.matrix, &ln.matrix, &j.matrix);
    let jv = j * &v;
    let rv = r * &v;
    let rsv = rs * &v;
    let a1 = l * (j * &rv);
    let b1 = r * (l * &jv);
    let a2 = j * (l * &rsv);
    let b2 = rs * (j * (l * &v));
    let a3 = j * &rv;
    let b3 = rs * &jv;
    Ok(CommutatorResiduals {
        r1: rel_residual(&a1, &b1),
        r2: rel_residual(&a2, &b2),
        intertwining: rel_residual(&a3, &b3),
    })
}

/// Gradients `H_k'(u)` for `k = 0..=count-1`, generated by `H_{k+1}' = R(u)H_k'`
/// from `H_0' = (1 - ∂²)(1 - sqrt(ω/(m + ω)))`.
fn gradients(ops: &RampOps, u: &Field, omega: f64, count: usize) -> Vec<Vec<f64>> {
    let m = u.helmholtz();
    let rec = Recursion::new(ops, &m, omega);
    let g0 = m
        .map(|x| 1.0 - (omega / (x + omega)).sqrt())
        .expect("m + ω > 0")
        .helmholtz();
    let mut out = vec![ops.lift(&g0)];
    for _ in 1..count {
        let next = rec.r(out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

/// `L_n v = -H''_{n+1}v + cH''_n v` for `n = 0..=max_n` by fourth-order
/// differences of the gradient map in the direction `v`.
fn hessian_ln_columns(p: &SolitonProfile, max_n: usize, v: &Field) -> Vec<Vec<f64>> {
    let ops = RampOps::new(*p.grid());
    let w = p.params.omega;
    let eps = 1e-3;
    let grads = |s: f64| gradients(&ops, &(&p.phi + &v.scale(s)), w, max_n + 2);
    let (gp1, gm1, gp2, gm2) = (grads(eps), grads(-eps), grads(2.0 * eps), grads(-2.0 * eps));
    let dg: Vec<Vec<f64>> = (0..max_n + 2)
        .map(|k| {
            (0..gp1[k].len())
                .map(|i| (8.0 * (gp1[k][i] - gm1[k][i]) - (gp2[k][i] - gm2[k][i])) / (12.0 * eps))
                .collect()
        })
        .collect();
    (0..=max_n)
        .map(|n| {
            axpy(
                -1.0,
                &dg[n + 1],
                &dg[n].iter().map(|x| p.params.c * x).collect::<Vec<_>>(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    /// `‖(L_{n+1} - R L_n)V‖ / ‖L_{n+1}V‖` for `n = 0, 1, 2`, with each `L_n`
    /// obtained from second variations of the conserved quantities.
    pub recursion: Vec<f64>,
    /// `‖(L₁^{hess} - L₁)V‖ / ‖L₁V‖` against the explicit `L₁`.
    pub l1_consistency: f64,
}

/// Check `L_{n+1} = R L_n` with `L_n = -H''_{n+1} + cH''_n` computed independently of `R`.
pub fn hierarchy_residuals(p: &SolitonProfile, count: usize) -> Result<HierarchyReport> {
    let g = *p.grid();
    let rec = build_recursion(p)?;
    let l1 = build_l1(p)?;
    let vs = smooth_test_vectors(&g, count, 2000);
    let n = g.n();
    let max_n = 3;
    let mut num = vec![0.0; max_n];
    let mut den = vec![0.0; max_n];
    let (mut l1_num, mut l1_den) = (0.0, 0.0);
    for j in 0..count {
        let v = Field::from_raw(g, vs.column(j).as_slice()[..n].to_vec());
        let cols = hessian_ln_columns(p, max_n, &v);
        for k in 0..max_n {
            let rl = &rec.r.matrix * DVector::from_vec(cols[k].clone());
            let next = DVector::from_vec(cols[k + 1].clone());
            num[k] += (&next - &rl).norm_squared();
            den[k] += next.norm_squared();
        }
        let direct = l1.apply_field(&v);
        let hess = Field::from_raw(g, cols[1][..n].to_vec());
        l1_num += (&hess - &direct).l2_norm().powi(2);
        l1_den += direct.l2_norm().powi(2);
    }
    Ok(HierarchyReport {
        recursion: num.iter().zip(&den).map(|(a, b)| (a / b).sqrt()).collect(),
        l1_consistency: (l1_num / l1_den).sqrt(),
    })
}

/// `ϱ_{n,c}(ζ) = -2^{n-1}ω^{n-1} iζ(cζ² + c - 2ω)/(1 + ζ²)^n`.
pub fn symbol_curve(n: u32, c: f64, omega: f64, zeta: &[f64]) -> Result<Vec<Complex64>> {
    if !(omega > 0.0) || n == 0 {
        return Err(Error::Parameter("symbol needs ω > 0 and n ≥ 1".into()));
    }
    let pre = (2.0 * omega).powi(n as i32 - 1);
    Ok(zeta
        .iter()
        .map(|&z| {
            let v = -pre * z * (c * z * z + c - 2.0 * omega) / (1.0 + z * z).powi(n as i32);
            Complex64::new(0.0, v)
        })
        .collect())
}

/// Relative residual `‖Av - μv‖/‖v‖` of an expected eigenpair, measured on the
/// periodic part with the ramp coordinate folded in.
pub fn eigen_residual(op: &DiscretizedOperator, v: &Field, mu: f64) -> f64 {
    let out = apply_ramp_full(op, v);
    let n = op.grid.n();
    let h = op.grid.spacing();
    let mut s = 0.0;
    for (o, vi) in out.iter().zip(v.values()) {
        s += (o - mu * vi).powi(2) * h;
    }
    if op.basis == Basis::Ramp {
        s += out[n].powi(2);
    }
    s.sqrt() / v.l2_norm()
}

fn apply_ramp_full(op: &DiscretizedOperator, v: &Field) -> Vec<f64> {
    let mut x = v.values().to_vec();
    if op.basis == Basis::Ramp {
        x.push(0.0);
    }
    op.apply(&DVector::from_vec(x)).as_slice().to_vec()
}

/// `R v` for `v = (1 - ∂²)(m + ω)^{-1/2}`; the result is the constant `2√ω`.
pub fn recursion_on_inverse_sqrt(p: &SolitonProfile, rec: &RecursionOperators) -> Result<Field> {
    let w = p.params.omega;
    let y = p.m.map(|m| 1.0 / (m + w).sqrt())?;
    let out = apply_ramp_full(&rec.r, &y.helmholtz());
    let n = p.grid().n();
    Field::new(*p.grid(), out[..n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soliton::{build_profile, dphi_dc};

    fn profile(n: usize) -> SolitonProfile {
        build_profile(4.0, 1.0, &Grid::centered(n, 80.0).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn l1_kernel_and_symmetry() {
        let p = profile(512);
        let l1 = build_l1(&p).unwrap();
        assert!(l1.symmetry_residual() < 1e-10);
        assert!(eigen_residual(&l1, &p.dphi, 0.0) < 1e-6);
        let dc = dphi_dc(4.0, 1.0, p.grid(), 0.0, 1e-4).unwrap();
        let r = &l1.apply_field(&dc) + &p.m;
        assert!(r.l2_norm() < 1e-4, "{}", r.l2_norm());
    }

    #[test]
    fn recursion_eigenrelations() {
        let p = profile(512);
        let rec = build_recursion(&p).unwrap();
        assert!(eigen_residual(&rec.r, &p.m, 4.0) < 1e-5);
        assert!(eigen_residual(&rec.r_star, &p.dphi, 4.0) < 1e-5);
        assert!(
            rec.similarity_residual < 1e-8,
            "{}",
            rec.similarity_residual
        );
        let rv = recursion_on_inverse_sqrt(&p, &rec).unwrap();
        assert!(rv.values().iter().all(|v| (v - 2.0).abs() < 1e-5));
    }

    #[test]
    fn ln_reduces_and_keeps_kernel() {
        let p = profile(512);
        let rec = build_recursion(&p).unwrap();
        let l1 = build_ln(&p, 1, &rec).unwrap();
        assert_eq!(l1.periodic_block(), build_l1(&p).unwrap().matrix);
        let l2 = build_ln(&p, 2, &rec).unwrap();
        assert!(eigen_residual(&l2, &p.dphi, 0.0) < 1e-5);
        let dc = dphi_dc(4.0, 1.0, p.grid(), 0.0, 1e-4).unwrap();
        let r = &l2.apply_field(&dc) + &p.m.scale(4.0);
        assert!(r.l2_norm() < 1e-3, "{}", r.l2_norm());
    }

    #[test]
    fn commutators_small() {
        let p = profile(512);
        for n in 1..=2 {
            let r = commutator_residuals(&p, n).unwrap();
            assert!(r.r1 < 1e-6 && r.r2 < 1e-6, "n={n} {r:?}");
            assert!(r.intertwining < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn hierarchy_from_second_variations() {
        let p = profile(512);
        let h = hierarchy_residuals(&p, 4).unwrap();
        assert!(h.l1_consistency < 1e-8, "{h:?}");
        for r in &h.recursion {
            assert!(*r < 1e-8, "{h:?}");
        }
    }

    #[test]
    fn l1_coercive_off_constraints() {
        let p = profile(512);
        let l1 = build_l1(&p).unwrap();
        let dm = p.m.dx();
        for seed in 0..20 {
            let mut w = localized_random(p.grid(), 30, 1.0, 0.0, 10.0, seed);
            for b in [&p.m, &dm] {
                w = &w - &b.scale(w.inner(b) / b.inner(b));
            }
            assert!(l1.apply_field(&w).inner(&w) > 0.0, "seed {seed}");
        }
    }

    #[test]
    fn ln_symmetric() {
        let p = profile(512);
        let rec = build_recursion(&p).unwrap();
        let v = smooth_test_vectors(p.grid(), 32, 3000);
        for n in 2..=3 {
            let l = build_ln(&p, n, &rec).unwrap();
            let r = l.symmetry_residual_on(&v);
            assert!(r < 1e-8, "n={n} {r}");
        }
    }

    #[test]
    fn symbol_values() {
        let s = symbol_curve(1, 4.0, 1.0, &[0.0, 1.0, -2.5]).unwrap();
        assert_eq!(s[0], Complex64::new(0.0, 0.0));
        assert!((s[1] - Complex64::new(0.0, -3.0)).norm() < 1e-14);
        assert!(s.iter().all(|z| z.re == 0.0));
    }

    #[test]
    fn free_case_commutes() {
        let g = Grid::centered(128, 40.0).unwrap();
        let ops = RampOps::new(g);
        let zero = Field::zeros(g);
        let rec = Recursion::new(&ops, &zero, 1.0);
        let r = DiscretizedOperator::from_action("R", g, Basis::Ramp, |v| rec.r(v));
        let j = build_j(&g);
        let a = &r.matrix * &j.matrix;
        let b = &j.matrix * &r.matrix;
        assert!((&a - &b).norm() < 1e-12 * a.norm());
    }
}
