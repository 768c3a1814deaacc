//! gKdV toolkit for `u_t + (u_xx + u^p)_x = 0`, `p ∈ {2, 3}`: solitons,
//! Lenard recursion operators, explicit Jost solutions and a weighted
//! linear Liouville check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{
    circulant, fit_tail, norm_history, smooth_test_vectors, Basis, DecayFit, DiscretizedOperator,
    RampOps,
};
use crate::spectral::{ComplexField, Field, Grid};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn check_power(p: u32) -> Result<()> {
    if p == 2 || p == 3 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "p = {p} not supported (p ∈ {{2, 3}})"
        )))
    }
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// `Q(x) = ((p+1)/(2cosh²((p-1)x/2)))^{1/(p-1)}`.
pub fn q_base(p: u32, x: f64) -> f64 {
    let e = 1.0 / (p as f64 - 1.0);
    (0.5 * (p as f64 + 1.0) * sech(0.5 * (p as f64 - 1.0) * x).powi(2)).powf(e)
}

fn dq_base(p: u32, x: f64) -> f64 {
    -q_base(p, x) * (0.5 * (p as f64 - 1.0) * x).tanh()
}

/// Soliton `Q_c(x) = c^{1/(p-1)} Q(sqrt(c) x)` centered at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct GkdvProfile {
    pub p: u32,
    pub c: f64,
    pub q: Field,
    pub dq: Field,
    /// `(2/(p-1))Q_c + xQ_c'`.
    pub scaling: Field,
}

pub fn build_q(p: u32, c: f64, grid: &Grid) -> Result<GkdvProfile> {
    check_power(p)?;
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("speed c = {c} must be positive")));
    }
    if !(grid.x0() < 0.0 && grid.x0() + grid.length() > 0.0) {
        return Err(Error::GridTooSmall("grid must contain the origin".into()));
    }
    let amp = c.powf(1.0 / (p as f64 - 1.0));
    let s = c.sqrt();
    let q = Field::from_fn(*grid, |x| amp * q_base(p, s * x))?;
    let dq = Field::from_fn(*grid, |x| amp * s * dq_base(p, s * x))?;
    let k = 2.0 / (p as f64 - 1.0);
    let scaling = Field::from_fn(*grid, |x| {
        amp * (k * q_base(p, s * x) + s * x * dq_base(p, s * x))
    })?;
    Ok(GkdvProfile {
        p,
        c,
        q,
        dq,
        scaling,
    })
}

impl GkdvProfile {
    pub fn grid(&self) -> &Grid {
        self.q.grid()
    }

    /// Sup norm of `Q_c'' + Q_c^p - cQ_c`.
    pub fn ode_residual(&self) -> f64 {
        let p = self.p as i32;
        let qxx = self.q.dxx();
        qxx.values()
            .iter()
            .zip(self.q.values())
            .fold(0.0, |m: f64, (a, q)| {
                m.max((a + q.powi(p) - self.c * q).abs())
            })
    }

    fn power(&self, k: i32) -> Vec<f64> {
        self.q.values().iter().map(|q| q.powi(k)).collect()
    }
}

/// Matrix-free `𝒦(Q)`, `ℒ₁` and recursion operators on the ramp basis.
struct GkdvActions<'a> {
    ops: &'a RampOps,
    prof: &'a GkdvProfile,
    q: Vec<f64>,
    q2: Vec<f64>,
    dq: Vec<f64>,
    pot: Vec<f64>,
}

impl<'a> GkdvActions<'a> {
    fn new(ops: &'a RampOps, prof: &'a GkdvProfile) -> Self {
        let p = prof.p as f64;
        Self {
            ops,
            prof,
            q: prof.q.values().to_vec(),
            q2: prof.power(2),
            dq: prof.dq.values().to_vec(),
            pot: prof
                .power(prof.p as i32 - 1)
                .into_iter()
                .map(|v| -p * v)
                .collect(),
        }
    }

    fn k(&self, v: &[f64]) -> Vec<f64> {
        let o = self.ops;
        let dv = o.d(v);
        let d3 = o.d(&o.d(&dv));
        let (a, b) = if self.prof.p == 2 {
            (
                o.mult(&self.q, 0.0, &dv)
                    .iter()
                    .map(|x| 4.0 / 3.0 * x)
                    .collect::<Vec<_>>(),
                o.mult(&self.dq, 0.0, v)
                    .iter()
                    .map(|x| 2.0 / 3.0 * x)
                    .collect::<Vec<_>>(),
            )
        } else {
            let inner = o.s_left(&o.mult(&self.q, 0.0, &dv));
            (
                o.mult(&self.q2, 0.0, &dv).iter().map(|x| 2.0 * x).collect(),
                o.mult(&self.dq, 0.0, &inner)
                    .iter()
                    .map(|x| 2.0 * x)
                    .collect(),
            )
        };
        d3.iter()
            .zip(&a)
            .zip(&b)
            .map(|((d, a), b)| -d - a - b)
            .collect()
    }

    fn l1(&self, v: &[f64]) -> Vec<f64> {
        let o = self.ops;
        let dd = o.d(&o.d(v));
        o.mult(&self.pot, self.prof.c, v)
            .iter()
            .zip(&dd)
            .map(|(m, d)| m - d)
            .collect()
    }

    fn r(&self, v: &[f64]) -> Vec<f64> {
        self.ops.s_left(&self.k(v))
    }

    fn r_star(&self, v: &[f64]) -> Vec<f64> {
        self.k(&self.ops.s_left(v))
    }

    fn ln(&self, n: usize, v: &[f64]) -> Vec<f64> {
        let mut out = self.l1(v);
        for _ in 1..n {
            out = self.r(&out);
        }
        out
    }
}

fn check_order(n: usize) -> Result<()> {
    if n == 1 || n == 2 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "n = {n} not supported (n ∈ {{1, 2}})"
        )))
    }
}

/// Dense `ℛ_K = ∂^{-1}𝒦(Q)` and `ℛ_K* = 𝒦(Q)∂^{-1}`, with `∂^{-1}` anchored at the left edge.
#[derive(Debug, Clone)]
pub struct GkdvRecursion {
    pub r: DiscretizedOperator,
    pub r_star: DiscretizedOperator,
}

pub fn build_recursion_gkdv(prof: &GkdvProfile) -> Result<GkdvRecursion> {
    let g = *prof.grid();
    let ops = RampOps::new(g);
    let act = GkdvActions::new(&ops, prof);
    Ok(GkdvRecursion {
        r: DiscretizedOperator::from_action("R_K", g, Basis::Ramp, |v| act.r(v)),
        r_star: DiscretizedOperator::from_action("R_K*", g, Basis::Ramp, |v| act.r_star(v)),
    })
}

/// Dense `ℒ_n = ℛ_K^{n-1}ℒ₁`, `ℒ₁ = -∂² + c - pQ^{p-1}`.
pub fn build_ln_gkdv(prof: &GkdvProfile, n: usize) -> Result<DiscretizedOperator> {
    check_order(n)?;
    let g = *prof.grid();
    let ops = RampOps::new(g);
    let act = GkdvActions::new(&ops, prof);
    Ok(DiscretizedOperator::from_action(
        &format!("L{n}_K"),
        g,
        Basis::Ramp,
        |v| act.ln(n, v),
    ))
}

fn apply_lifted(ops: &RampOps, f: &Field, action: impl Fn(&[f64]) -> Vec<f64>) -> Field {
    let mut out = action(&ops.lift(f));
    out.truncate(f.len());
    Field::from_raw(*f.grid(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionIdentities {
    /// `‖ℛ_K Q + cQ‖ / ‖Q‖`.
    pub r_on_q: f64,
    /// `‖ℛ_K* Q' + cQ'‖ / ‖Q'‖`.
    pub r_star_on_dq: f64,
    /// `p = 3`: `‖ℛ_K*(Q + xQ') + c(Q + xQ') + 2sqrt(c)Q'‖ / ‖Q + xQ'‖`.
    pub r_star_on_dilation: Option<f64>,
}

pub fn recursion_identities(prof: &GkdvProfile) -> RecursionIdentities {
    let ops = RampOps::new(*prof.grid());
    let act = GkdvActions::new(&ops, prof);
    let c = prof.c;
    let rel = |a: Field, b: &Field| (&a + b).l2_norm() / b.l2_norm();
    let rq = apply_lifted(&ops, &prof.q, |v| act.r(v));
    let rdq = apply_lifted(&ops, &prof.dq, |v| act.r_star(v));
    let dil = (prof.p == 3).then(|| {
        let d = &prof.scaling;
        let target = &d.scale(c) + &prof.dq.scale(2.0 * c.sqrt());
        (&apply_lifted(&ops, d, |v| act.r_star(v)) + &target).l2_norm() / d.l2_norm()
    });
    RecursionIdentities {
        r_on_q: rel(rq, &prof.q.scale(c)),
        r_star_on_dq: rel(rdq, &prof.dq.scale(c)),
        r_star_on_dilation: dil,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LnIdentities {
    /// `‖ℒ_n Q'‖ / ‖Q'‖`.
    pub kernel: f64,
    /// `‖ℒ_n((2/(p-1))Q + xQ') - (-1)ⁿ2cⁿQ‖`.
    pub scaling: f64,
}

pub fn ln_identities(prof: &GkdvProfile, n: usize) -> Result<LnIdentities> {
    check_order(n)?;
    let ops = RampOps::new(*prof.grid());
    let act = GkdvActions::new(&ops, prof);
    let lq = apply_lifted(&ops, &prof.dq, |v| act.ln(n, v));
    let ls = apply_lifted(&ops, &prof.scaling, |v| act.ln(n, v));
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let target = prof.q.scale(sign * 2.0 * prof.c.powi(n as i32));
    Ok(LnIdentities {
        kernel: lq.l2_norm() / prof.dq.l2_norm(),
        scaling: (&ls - &target).l2_norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GkdvCommutators {
    /// `‖(ℛ_K ℒ_n∂ - ℒ_n∂ℛ_K)V‖ / ‖ℒ_n∂ℛ_K V‖`.
    pub recursion: f64,
    /// `‖(ℛ_K*∂ℒ_n - ∂ℒ_nℛ_K*)V‖ / ‖∂ℒ_nℛ_K* V‖`.
    pub adjoint: f64,
}

/// Commutation of the recursion operators with `ℒ_n∂` and `∂ℒ_n`, on 32 smooth test functions.
pub fn gkdv_commutators(prof: &GkdvProfile, n: usize) -> Result<GkdvCommutators> {
    let rec = build_recursion_gkdv(prof)?;
    let ln = build_ln_gkdv(prof, n)?;
    let g = *prof.grid();
    let ops = RampOps::new(g);
    let d = DiscretizedOperator::from_action("d", g, Basis::Ramp, |v| ops.d(v));
    let v = smooth_test_vectors(&g, 32, 2000);
    let (r, rs, l, d) = (&rec.r.matrix, &rec.r_star.matrix, &ln.matrix, &d.matrix);
    let a1 = l * (d * (r * &v));
    let b1 = r * (l * (d * &v));
    let a2 = d * (l * (rs * &v));
    let b2 = rs * (d * (l * &v));
    Ok(GkdvCommutators {
        recursion: (&a1 - &b1).norm() / a1.norm(),
        adjoint: (&a2 - &b2).norm() / a2.norm(),
    })
}

/// Lowest eigenvalue of `ℒ₁` and the relative odd part of its eigenvector.
pub fn l1_ground_state(prof: &GkdvProfile) -> Result<(f64, f64)> {
    let l1 = build_ln_gkdv(prof, 1)?.periodic_block();
    let sym = (&l1 + l1.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (i0, lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .ok_or_else(|| Error::EigenSolve("empty spectrum".into()))?;
    let v = Field::from_raw(
        *prof.grid(),
        eig.eigenvectors.column(i0).iter().copied().collect(),
    );
    let odd = (&v - &v.reflect()).l2_norm() / (2.0 * v.l2_norm());
    Ok((lam, odd))
}

fn fd1(f: &impl Fn(f64) -> Complex64, x: f64, h: f64) -> Complex64 {
    (f(x - 2.0 * h) - f(x - h) * 8.0 + f(x + h) * 8.0 - f(x + 2.0 * h)) / (12.0 * h)
}

fn fd2(f: &impl Fn(f64) -> Complex64, x: f64, h: f64) -> Complex64 {
    (-f(x - 2.0 * h) + f(x - h) * 16.0 - f(x) * 30.0 + f(x + h) * 16.0 - f(x + 2.0 * h))
        / (12.0 * h * h)
}

fn fd3(f: &impl Fn(f64) -> Complex64, x: f64, h: f64) -> Complex64 {
    (f(x - 3.0 * h) - f(x - 2.0 * h) * 8.0 + f(x - h) * 13.0 - f(x + h) * 13.0
        + f(x + 2.0 * h) * 8.0
        - f(x + 3.0 * h))
        / (8.0 * h * h * h)
}

fn sampled(grid: &Grid, f: impl Fn(f64) -> Complex64) -> Result<ComplexField> {
    ComplexField::from_fn(*grid, f)
}

fn check_kappa(kappa: Complex64) -> Result<()> {
    if (kappa + I).norm() < 1e-12 {
        return Err(Error::Parameter(
            "κ = -i is a pole of the Jost normalization".into(),
        ));
    }
    Ok(())
}

/// `ψ(x, κ) = (κ + i tanh x)/(κ + i) e^{iκx}`.
pub fn psi_kdv(x: f64, kappa: Complex64) -> Complex64 {
    (kappa + I * x.tanh()) / (kappa + I) * (I * kappa * x).exp()
}

/// `φ(x, κ) = (κ - i tanh x)/(κ + i) e^{-iκx}`.
pub fn phi_kdv(x: f64, kappa: Complex64) -> Complex64 {
    (kappa - I * x.tanh()) / (kappa + I) * (-I * kappa * x).exp()
}

/// Jost solutions of `v'' + ((4/3)Q(2x) + κ²)v = 0` for `p = 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct KdvJost {
    pub psi: ComplexField,
    pub phi: ComplexField,
}

pub fn jost_kdv(kappa: Complex64, grid: &Grid) -> Result<KdvJost> {
    check_kappa(kappa)?;
    Ok(KdvJost {
        psi: sampled(grid, |x| psi_kdv(x, kappa))?,
        phi: sampled(grid, |x| phi_kdv(x, kappa))?,
    })
}

const FD_H: f64 = 1e-3;

/// Largest relative residual of the Schrödinger equation over both Jost solutions.
pub fn schrodinger_residual(kappa: Complex64, grid: &Grid) -> Result<f64> {
    check_kappa(kappa)?;
    let pot = |x: f64| 4.0 / 3.0 * q_base(2, 2.0 * x);
    let mut worst: f64 = 0.0;
    for f in [
        |x: f64, k: Complex64| psi_kdv(x, k),
        |x: f64, k: Complex64| phi_kdv(x, k),
    ] {
        let g = |x: f64| f(x, kappa);
        let mut res: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for x in grid.points() {
            let v = g(x);
            res = res.max((fd2(&g, x, FD_H) + (pot(x) + kappa * kappa) * v).norm());
            scale = scale.max(v.norm() * (1.0 + kappa.norm_sqr()));
        }
        worst = worst.max(res / scale);
    }
    Ok(worst)
}

/// `φ²(x/2, κ)`.
pub fn kdv_squared_eigenfunction(x: f64, kappa: Complex64) -> Complex64 {
    phi_kdv(0.5 * x, kappa).powi(2)
}

/// `∂_x φ²(x/2, κ)`.
pub fn kdv_squared_eigenfunction_dx(x: f64, kappa: Complex64) -> Complex64 {
    let y = 0.5 * x;
    let e = (-I * kappa * y).exp() / (kappa + I);
    let ph = (kappa - I * y.tanh()) * e;
    let dph = (-I * sech(y).powi(2) - I * kappa * (kappa - I * y.tanh())) * e;
    ph * dph
}

/// `‖𝒦(Q)s - κ²s'‖ / ‖κ²s'‖` for `s = φ²(x/2, κ)`, i.e. the residual of `ℛ_K s = κ²s`, `p = 2`, `c = 1`.
pub fn kdv_eigen_residual(kappa: Complex64, grid: &Grid) -> Result<f64> {
    check_kappa(kappa)?;
    let s = |x: f64| kdv_squared_eigenfunction(x, kappa);
    let k2 = kappa * kappa;
    let (mut num, mut den) = (0.0, 0.0);
    for x in grid.points() {
        let q = q_base(2, x);
        let dq = dq_base(2, x);
        let ds = kdv_squared_eigenfunction_dx(x, kappa);
        let ks = -fd3(&s, x, 1e-2) - ds * (4.0 / 3.0 * q) - s(x) * (2.0 / 3.0 * dq);
        num += (ks - k2 * ds).norm_sqr();
        den += (k2 * ds).norm_sqr();
    }
    Ok((num / den).sqrt())
}

fn check_zeta(zeta: Complex64) -> Result<()> {
    if (2.0 * I * zeta - 1.0).norm() < 1e-12 || (2.0 * I * zeta + 1.0).norm() < 1e-12 {
        return Err(Error::Parameter(format!("ζ = {zeta} is a pole (2iζ = ±1)")));
    }
    Ok(())
}

/// `φ(x, ζ) = (tanh x + 2iζ, -sech x)e^{-iζx}/(2iζ - 1)`.
pub fn zs_phi(x: f64, zeta: Complex64) -> [Complex64; 2] {
    let e = (-I * zeta * x).exp() / (2.0 * I * zeta - 1.0);
    [(x.tanh() + 2.0 * I * zeta) * e, -sech(x) * e]
}

/// `ψ(x, ζ) = (sech x, tanh x - 2iζ)e^{iζx}/(1 - 2iζ)`.
pub fn zs_psi(x: f64, zeta: Complex64) -> [Complex64; 2] {
    let e = (I * zeta * x).exp() / (1.0 - 2.0 * I * zeta);
    [sech(x) * e, (x.tanh() - 2.0 * I * zeta) * e]
}

/// `φ̃(x, ζ) = (sech x, tanh x - 2iζ)e^{iζx}/(2iζ + 1)`.
pub fn zs_phi_tilde(x: f64, zeta: Complex64) -> [Complex64; 2] {
    let e = (I * zeta * x).exp() / (2.0 * I * zeta + 1.0);
    [sech(x) * e, (x.tanh() - 2.0 * I * zeta) * e]
}

/// `ψ̃(x, ζ) = (tanh x + 2iζ, -sech x)e^{-iζx}/(2iζ + 1)`.
pub fn zs_psi_tilde(x: f64, zeta: Complex64) -> [Complex64; 2] {
    let e = (-I * zeta * x).exp() / (2.0 * I * zeta + 1.0);
    [(x.tanh() + 2.0 * I * zeta) * e, -sech(x) * e]
}

type ZsFn = fn(f64, Complex64) -> [Complex64; 2];
const ZS_FAMILY: [ZsFn; 4] = [zs_phi, zs_phi_tilde, zs_psi, zs_psi_tilde];

/// Jost solutions of the Zakharov–Shabat system with `r = -q = (sqrt(2)/2)Q`, `p = 3`:
/// `φ, φ̃` normalized at `-∞`, `ψ, ψ̃` at `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZsJost {
    pub phi: [ComplexField; 2],
    pub phi_tilde: [ComplexField; 2],
    pub psi: [ComplexField; 2],
    pub psi_tilde: [ComplexField; 2],
}

pub fn jost_zs_mkdv(zeta: Complex64, grid: &Grid) -> Result<ZsJost> {
    check_zeta(zeta)?;
    let pair = |f: ZsFn| -> Result<[ComplexField; 2]> {
        Ok([
            sampled(grid, move |x| f(x, zeta)[0])?,
            sampled(grid, move |x| f(x, zeta)[1])?,
        ])
    };
    Ok(ZsJost {
        phi: pair(zs_phi)?,
        phi_tilde: pair(zs_phi_tilde)?,
        psi: pair(zs_psi)?,
        psi_tilde: pair(zs_psi_tilde)?,
    })
}

/// Largest relative residual of `v₁' + iζv₁ = qv₂`, `v₂' - iζv₂ = rv₁` over the four Jost solutions.
pub fn zs_residual(zeta: Complex64, grid: &Grid) -> Result<f64> {
    check_zeta(zeta)?;
    let mut worst: f64 = 0.0;
    for f in ZS_FAMILY {
        let (mut res, mut scale): (f64, f64) = (0.0, 0.0);
        for x in grid.points() {
            let v = f(x, zeta);
            let r = std::f64::consts::FRAC_1_SQRT_2 * q_base(3, x);
            let d0 = fd1(&|y| f(y, zeta)[0], x, FD_H);
            let d1 = fd1(&|y| f(y, zeta)[1], x, FD_H);
            res = res
                .max((d0 + I * zeta * v[0] + r * v[1]).norm())
                .max((d1 - I * zeta * v[1] - r * v[0]).norm());
            scale = scale.max(v[0].norm().max(v[1].norm()) * (1.0 + zeta.norm()));
        }
        worst = worst.max(res / scale);
    }
    Ok(worst)
}

/// `(φ₂² - φ₁²)(x, k/2) = ((tanh x + ik)² - sech²x)e^{-ikx}/(k + i)²`.
pub fn mkdv_squared_eigenfunction(x: f64, k: f64) -> Complex64 {
    let t = x.tanh();
    ((t + I * k).powi(2) - sech(x).powi(2)) * (-I * k * x).exp() / (k + I).powi(2)
}

/// `‖ℛ_K* f - k² f‖ / ‖k² f‖` for `f = (φ₂² - φ₁²)(·, k/2)`, `p = 3`, `c = 1`, `k ≠ 0`.
/// With `𝒦` normalized as above the eigenvalue is `k²`, matching the far-field limit `-g'''/g'`.
pub fn mkdv_eigen_residual(k: f64, grid: &Grid) -> Result<f64> {
    if k == 0.0 || !k.is_finite() {
        return Err(Error::Parameter("k must be finite and nonzero".into()));
    }
    // Primitive of f, so that ℛ_K* f = 𝒦(Q) g.
    let g = move |x: f64| {
        (-2.0 * x.tanh() - I * (k * k - 1.0) / k) * (-I * k * x).exp() / (k + I).powi(2)
    };
    let pts = grid.points();
    let qf: Vec<Complex64> = pts
        .iter()
        .map(|&x| q_base(3, x) * mkdv_squared_eigenfunction(x, k))
        .collect();
    let re = Field::from_raw(*grid, qf.iter().map(|z| z.re).collect()).cumulative_integral();
    let im = Field::from_raw(*grid, qf.iter().map(|z| z.im).collect()).cumulative_integral();
    let ev = k * k;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &x) in pts.iter().enumerate() {
        let (q, dq) = (q_base(3, x), dq_base(3, x));
        let f = mkdv_squared_eigenfunction(x, k);
        let inner = Complex64::new(re.values()[i], im.values()[i]);
        let kg = -fd3(&g, x, 1e-2) - f * (2.0 * q * q) - inner * (2.0 * dq);
        num += (kg - ev * f).norm_sqr();
        den += (ev * f).norm_sqr();
    }
    Ok((num / den).sqrt())
}

/// Least-squares expansion of `f` over the squared-eigenfunction continuum sampled on a
/// uniform `κ`-grid in `[-κ_max, κ_max]`, plus the two discrete modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub kappas: Vec<f64>,
    pub alpha: Vec<Complex64>,
    /// Coefficient of `Q'`.
    pub beta: Complex64,
    /// Coefficient of `2Q + xQ'` (`p = 2`) or `∂_c Q_c|_{c=1}` (`p = 3`).
    pub gamma: Complex64,
    pub relative_error: f64,
}

pub fn decompose_squared_eigenfunctions(
    p: u32,
    f: &Field,
    kappa_max: f64,
    count: usize,
) -> Result<Decomposition> {
    check_power(p)?;
    if count < 2 || !(kappa_max > 0.0) {
        return Err(Error::Parameter(
            "need at least two κ samples and κ_max > 0".into(),
        ));
    }
    let grid = *f.grid();
    let prof = build_q(p, 1.0, &grid)?;
    let kappas: Vec<f64> = (0..count)
        .map(|i| -kappa_max + 2.0 * kappa_max * i as f64 / (count - 1) as f64)
        .collect();
    let pts = grid.points();
    let n = pts.len();
    let discrete = if p == 2 {
        prof.scaling.clone()
    } else {
        prof.scaling.scale(0.5)
    };
    let mut a = DMatrix::<Complex64>::zeros(n, count + 2);
    for (j, &k) in kappas.iter().enumerate() {
        for (i, &x) in pts.iter().enumerate() {
            a[(i, j)] = if p == 2 {
                kdv_squared_eigenfunction_dx(x, Complex64::new(k, 0.0))
            } else {
                mkdv_squared_eigenfunction(x, k)
            };
        }
    }
    for i in 0..n {
        a[(i, count)] = prof.dq.values()[i].into();
        a[(i, count + 1)] = discrete.values()[i].into();
    }
    let b = DVector::from_iterator(n, f.values().iter().map(|v| Complex64::new(*v, 0.0)));
    let svd = a.clone().svd(true, true);
    let coef = svd
        .solve(&b, 1e-12 * svd.singular_values.max())
        .map_err(|e| Error::Internal(e.into()))?;
    let resid = (&a * &coef - &b).norm() / b.norm();
    Ok(Decomposition {
        alpha: coef.iter().take(count).copied().collect(),
        beta: coef[count],
        gamma: coef[count + 1],
        kappas,
        relative_error: resid,
    })
}

/// `e^{ax}∂(ℒ_n + sℒ₁)e^{-ax}`, assembled with `∂ → ∂ - a`; `∂^{-1}` becomes the bounded
/// inverse of `∂ - a`.
pub fn weighted_gkdv_generator(
    prof: &GkdvProfile,
    n: usize,
    a: f64,
    shift: f64,
) -> Result<DiscretizedOperator> {
    check_order(n)?;
    if !(a > 0.0 && a < prof.c.sqrt()) {
        return Err(Error::Parameter(format!(
            "weight a = {a} outside (0, sqrt(c))"
        )));
    }
    let g = *prof.grid();
    let nn = g.n();
    let zeta = |k: f64| Complex64::new(-a, k);
    let za = Complex64::new(-a, 0.0);
    let d = circulant(&g, zeta, za);
    let diag = |v: Vec<f64>| DMatrix::from_diagonal(&DVector::from_vec(v));
    let qd = diag(prof.q.values().to_vec());
    let dqd = diag(prof.dq.values().to_vec());
    let d3 = &d * &d * &d;
    let k = if prof.p == 2 {
        -(&d3) - &qd * &d * (4.0 / 3.0) - &dqd * (2.0 / 3.0)
    } else {
        let dinv = circulant(&g, |k| 1.0 / zeta(k), 1.0 / za);
        -(&d3) - diag(prof.power(2)) * &d * 2.0 - &dqd * dinv * &qd * &d * 2.0
    };
    let pot = diag(
        prof.power(prof.p as i32 - 1)
            .iter()
            .map(|v| prof.c - prof.p as f64 * v)
            .collect(),
    );
    let l1 = -(&d * &d) + pot;
    // ∂ℒ₂ = 𝒦ℒ₁, independent of how ∂^{-1} is anchored.
    let mut gen = &d * &l1 * shift;
    gen += if n == 1 { &d * &l1 } else { &k * &l1 };
    debug_assert_eq!(gen.nrows(), nn);
    DiscretizedOperator::new(
        format!("weighted dL{n}(a={a}, s={shift})"),
        g,
        Basis::Periodic,
        gen,
    )
}

/// Projection onto the generalized kernel `span{e^{ax}Q', e^{ax}((2/(p-1))Q + xQ')}` along
/// the complement of the adjoint generalized kernel.
#[derive(Debug, Clone)]
pub struct GkdvProjection {
    pub p: DiscretizedOperator,
    pub kernel: [Field; 2],
    pub dual: [Field; 2],
}

impl GkdvProjection {
    pub fn project(&self, v: &Field) -> Field {
        self.p.apply_field(v)
    }

    pub fn complement(&self, v: &Field) -> Field {
        v - &self.project(v)
    }
}

pub fn gkdv_projection(
    prof: &GkdvProfile,
    gen: &DiscretizedOperator,
    a: f64,
) -> Result<GkdvProjection> {
    let g = *prof.grid();
    let up = Field::from_fn(g, |x| (a * x).exp())?;
    let f1 = up.pointwise(&prof.dq);
    let f2 = up.pointwise(&prof.scaling);
    let at = gen.matrix.transpose();
    let svd = (&at * &at)
        .try_svd(false, true, 1e-14, 10_000)
        .ok_or_else(|| Error::EigenSolve("SVD failed".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::EigenSolve("SVD returned no vectors".into()))?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let dual: Vec<Field> = idx[..2]
        .iter()
        .map(|&i| Field::from_raw(g, vt.row(i).iter().copied().collect()))
        .collect();
    let gram = nalgebra::Matrix2::new(
        f1.inner(&dual[0]),
        f1.inner(&dual[1]),
        f2.inner(&dual[0]),
        f2.inner(&dual[1]),
    );
    let sv = gram.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond < 1e6) {
        return Err(Error::IllConditioned(cond));
    }
    let ginv_t = gram
        .try_inverse()
        .ok_or(Error::IllConditioned(f64::INFINITY))?
        .transpose();
    let n = g.n();
    let fm = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 {
            f1.values()[i]
        } else {
            f2.values()[i]
        }
    });
    let gm = DMatrix::from_fn(n, 2, |i, j| dual[j].values()[i]);
    let pm = fm * DMatrix::from_fn(2, 2, |i, j| ginv_t[(i, j)]) * gm.transpose() * g.spacing();
    let [d0, d1]: [Field; 2] = dual
        .try_into()
        .map_err(|_| Error::Internal("dual basis".into()))?;
    Ok(GkdvProjection {
        p: DiscretizedOperator::new("P_K", g, Basis::Periodic, pm)?,
        kernel: [f1, f2],
        dual: [d0, d1],
    })
}

/// `‖e^{tA}w₀‖_{H¹}` at 41 checkpoints for the weighted generator `A`, without projecting.
pub fn weighted_norm_history(
    prof: &GkdvProfile,
    n: usize,
    a: f64,
    shift: f64,
    w0: &Field,
    t_end: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let gen = weighted_gkdv_generator(prof, n, a, shift)?;
    norm_history(&gen.matrix, w0, t_end)
}

/// Exponential decay rate of `w' = Aw` for `w₀` in the complement of the generalized kernel.
pub fn liouville_decay_gkdv(
    prof: &GkdvProfile,
    n: usize,
    a: f64,
    shift: f64,
    w0: &Field,
    t_end: f64,
) -> Result<DecayFit> {
    if !(t_end >= 10.0) {
        return Err(Error::Parameter(format!("T = {t_end} must be at least 10")));
    }
    let gen = weighted_gkdv_generator(prof, n, a, shift)?;
    let proj = gkdv_projection(prof, &gen, a)?;
    let limit = 1e-6 * w0.l2_norm();
    let residual = proj.project(w0).l2_norm();
    if !(residual <= limit) {
        return Err(Error::Projection { residual, limit });
    }
    let (times, norms) = norm_history(&gen.matrix, w0, t_end)?;
    fit_tail(times, norms, t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::localized_random;

    fn grid() -> Grid {
        Grid::centered(512, 80.0).unwrap()
    }

    #[test]
    fn soliton_values() {
        let g = grid();
        for (p, q0) in [(2, 1.5), (3, 2f64.sqrt())] {
            let prof = build_q(p, 1.0, &g).unwrap();
            assert!((prof.q.values()[256] - q0).abs() < 1e-14);
            assert!(prof.ode_residual() < 1e-10, "{}", prof.ode_residual());
            assert!((&prof.q - &prof.q.reflect()).max_abs() < 1e-14);
            assert!(prof.q.values().iter().all(|v| *v > 0.0));
        }
        assert!(build_q(4, 1.0, &g).is_err());
        assert!(build_q(2, 2.0, &g).unwrap().ode_residual() < 1e-9);
    }

    #[test]
    fn recursion_relations() {
        for p in [2, 3] {
            let prof = build_q(p, 1.0, &grid()).unwrap();
            let id = recursion_identities(&prof);
            assert!(id.r_on_q < 1e-8 && id.r_star_on_dq < 1e-8, "{id:?}");
            if p == 3 {
                assert!(id.r_star_on_dilation.unwrap() < 1e-5, "{id:?}");
            }
        }
    }

    #[test]
    fn ln_identities_hold() {
        for p in [2, 3] {
            let prof = build_q(p, 1.0, &grid()).unwrap();
            for n in [1, 2] {
                let id = ln_identities(&prof, n).unwrap();
                assert!(id.kernel < 1e-6 && id.scaling < 1e-5, "p={p} n={n} {id:?}");
            }
        }
        assert!(build_ln_gkdv(&build_q(2, 1.0, &grid()).unwrap(), 3).is_err());
    }

    #[test]
    fn commutators_small() {
        for p in [2, 3] {
            let prof = build_q(p, 1.0, &grid()).unwrap();
            for n in [1, 2] {
                let c = gkdv_commutators(&prof, n).unwrap();
                assert!(c.recursion < 1e-6 && c.adjoint < 1e-6, "p={p} n={n} {c:?}");
            }
        }
    }

    #[test]
    fn l1_ground_state_even_negative() {
        let (lam, odd) = l1_ground_state(&build_q(2, 1.0, &grid()).unwrap()).unwrap();
        assert!((lam + 1.25).abs() < 1e-6, "{lam}");
        assert!(odd < 1e-8);
    }

    #[test]
    fn kdv_jost() {
        let g = grid();
        let j = jost_kdv(Complex64::new(1.0, 0.0), &g).unwrap();
        assert!((j.psi.values()[256] - Complex64::new(0.5, -0.5)).norm() < 1e-14);
        let far = psi_kdv(30.0, Complex64::new(1.0, 0.0)) * (-I * 30.0).exp();
        assert!((far.norm() - 1.0).abs() < 1e-12);
        for k in [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.3, 0.0),
            Complex64::new(0.5, 0.4),
        ] {
            assert!(schrodinger_residual(k, &g).unwrap() < 1e-8);
            assert!(
                kdv_eigen_residual(k, &g).unwrap() < 1e-5,
                "{}",
                kdv_eigen_residual(k, &g).unwrap()
            );
        }
        assert!(jost_kdv(-I, &g).is_err());
    }

    #[test]
    fn zs_jost() {
        let g = grid();
        let j = jost_zs_mkdv(Complex64::new(0.0, 0.0), &g).unwrap();
        assert!(
            (j.phi[0].values()[256]).norm() < 1e-14
                && (j.phi[1].values()[256] - 1.0).norm() < 1e-14
        );
        let z = Complex64::new(0.7, 0.0);
        let edge = zs_phi(g.x0(), z);
        let plane = (-I * z * g.x0()).exp();
        assert!((edge[0] - plane).norm() < 1e-6 && edge[1].norm() < 1e-6);
        let right = zs_psi(-g.x0(), z);
        assert!(right[0].norm() < 1e-6 && (right[1] - (-I * z * g.x0()).exp()).norm() < 1e-6);
        for z in [0.0, 0.7, -1.3] {
            assert!(zs_residual(Complex64::new(z, 0.0), &g).unwrap() < 1e-8);
        }
        assert!(jost_zs_mkdv(Complex64::new(0.0, 0.5), &g).is_err());
        for k in [0.5, 1.0, 2.0] {
            assert!(
                mkdv_eigen_residual(k, &g).unwrap() < 1e-5,
                "{}",
                mkdv_eigen_residual(k, &g).unwrap()
            );
        }
    }

    #[test]
    fn decomposition_converges() {
        let g = Grid::centered(512, 40.0).unwrap();
        let f = Field::from_fn(g, |x| {
            (-0.5 * x * x).exp() * (1.0 + 0.5 * x) + 0.5 * (-(x - 3.0) * (x - 3.0)).exp()
        })
        .unwrap();
        for p in [2, 3] {
            let coarse = decompose_squared_eigenfunctions(p, &f, 8.0, 64)
                .unwrap()
                .relative_error;
            let fine = decompose_squared_eigenfunctions(p, &f, 8.0, 256)
                .unwrap()
                .relative_error;
            assert!(fine < 1e-2 && fine < coarse, "p={p} {coarse} {fine}");
        }
    }

    #[test]
    fn weighted_decay() {
        let g = Grid::centered(256, 60.0).unwrap();
        let prof = build_q(2, 1.0, &g).unwrap();
        let gen = weighted_gkdv_generator(&prof, 1, 0.2, 0.0).unwrap();
        let proj = gkdv_projection(&prof, &gen, 0.2).unwrap();
        let w0 = proj.complement(&localized_random(&g, 20, 1.0, 0.0, 6.0, 3));
        let fit = liouville_decay_gkdv(&prof, 1, 0.2, 0.0, &w0, 20.0).unwrap();
        assert!(fit.rate <= -0.02, "{fit:?}");
        let scaled = liouville_decay_gkdv(&prof, 1, 0.2, 0.0, &w0.scale(3.0), 20.0).unwrap();
        assert!((scaled.rate - fit.rate).abs() < 1e-9);
        let (_, norms) = weighted_norm_history(&prof, 1, 0.2, 0.0, &proj.kernel[0], 20.0).unwrap();
        assert!(norms.iter().all(|v| (v / norms[0] - 1.0).abs() < 1e-6));
        assert!(matches!(
            liouville_decay_gkdv(&prof, 1, 0.2, 0.0, &proj.kernel[0], 20.0),
            Err(Error::Projection { .. })
        ));
        assert!(weighted_gkdv_generator(&prof, 1, -0.2, 0.0).is_err());
    }
}
