//! Direct scattering for the spectral problem `Ψ'' = (¼ + λ(m + ω))Ψ`,
//! `λ = -(k² + ¼)/ω`.
//!
//! Jost solutions are propagated with a fourth-order Magnus integrator on a
//! mesh `R` times finer than the grid. The potential is evaluated at the two
//! Gauss nodes of every fine step by trigonometric interpolation. Each step
//! propagator has unit determinant, so Wronskians are conserved to roundoff.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::soliton::{dphi_dc, SolitonProfile};
use crate::spectral::{ComplexField, Field, Grid};

/// Fine-mesh refinement factor for Jost integration.
pub const REFINE: usize = 8;

const GAUSS_LO: f64 = 0.5 - 0.288_675_134_594_812_9;
const GAUSS_HI: f64 = 0.5 + 0.288_675_134_594_812_9;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `λ(k) = -(k² + ¼)/ω`.
pub fn lambda_of_k(k: Complex64, omega: f64) -> Result<Complex64> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::Parameter("λ(k) needs ω ≠ 0".into()));
    }
    Ok(-(k * k + 0.25) / omega)
}

/// Momentum potential `m` together with `ω` and its fine-mesh Gauss-node samples.
#[derive(Debug, Clone)]
pub struct LaxPotential {
    m: Field,
    omega: f64,
    m_lo: Vec<f64>,
    m_hi: Vec<f64>,
}

impl LaxPotential {
    pub fn new(m: Field, omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::Parameter(format!("ω = {omega} must be positive")));
        }
        if let Some(v) = m.values().iter().find(|&&v| v + omega <= 0.0) {
            return Err(Error::Domain(format!("m + ω = {} ≤ 0", v + omega)));
        }
        let scale = m.max_abs().max(1e-300);
        let n = m.len();
        let edge = m.values()[0].abs().max(m.values()[n - 1].abs());
        if scale > 1e-300 && edge > 1e-8 * scale {
            return Err(Error::Domain(format!(
                "potential has not decayed at the box ends ({edge:.3e})"
            )));
        }
        let h = m.grid().spacing() / REFINE as f64;
        let m_lo = m.resample(REFINE, GAUSS_LO * h);
        let m_hi = m.resample(REFINE, GAUSS_HI * h);
        Ok(Self {
            m,
            omega,
            m_lo,
            m_hi,
        })
    }

    pub fn m(&self) -> &Field {
        &self.m
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn grid(&self) -> &Grid {
        self.m.grid()
    }

    fn fine_steps(&self) -> usize {
        self.m_lo.len()
    }

    fn fine_h(&self) -> f64 {
        self.grid().spacing() / REFINE as f64
    }

    /// Propagator over fine step `j` for the first-order system `(Ψ, Ψ')`.
    fn step(&self, j: usize, lambda: Complex64) -> [Complex64; 4] {
        let h = self.fine_h();
        let q1 = 0.25 + lambda * (self.m_lo[j] + self.omega);
        let q2 = 0.25 + lambda * (self.m_hi[j] + self.omega);
        let d = (3f64.sqrt() * h * h / 12.0) * (q1 - q2);
        let o12 = c(h, 0.0);
        let o21 = 0.5 * h * (q1 + q2);
        let mu2 = d * d + o12 * o21;
        let (ch, shc) = cosh_sinhc(mu2);
        [ch + shc * d, shc * o12, shc * o21, ch - shc * d]
    }
}

/// `cosh μ` and `sinh μ / μ` as functions of `z = μ²`.
fn cosh_sinhc(z: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 1e-6 {
        let ch = 1.0 + z / 2.0 + z * z / 24.0;
        let sh = 1.0 + z / 6.0 + z * z / 120.0;
        (ch, sh)
    } else {
        let mu = z.sqrt();
        (mu.cosh(), mu.sinh() / mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// `f⁻`, normalized by `e^{-ikx}` at the left end.
    Left,
    /// `f⁺`, normalized by `e^{ikx}` at the right end.
    Right,
}

/// Jost solution and its derivative sampled on the grid.
#[derive(Debug, Clone)]
pub struct JostSolution {
    pub k: Complex64,
    pub side: Side,
    pub f: ComplexField,
    pub df: ComplexField,
}

impl JostSolution {
    fn at(&self, i: usize) -> (Complex64, Complex64) {
        (self.f.values()[i], self.df.values()[i])
    }
}

fn wronskian_pair(a: (Complex64, Complex64), b: (Complex64, Complex64)) -> Complex64 {
    a.0 * b.1 - a.1 * b.0
}

/// `W(f, g) = f g' - g f'` at grid index `i`.
pub fn wronskian(f: &JostSolution, g: &JostSolution, i: usize) -> Complex64 {
    wronskian_pair(f.at(i), g.at(i))
}

/// Integrate to a single grid index without storing the path.
fn jost_at_index(
    pot: &LaxPotential,
    k: Complex64,
    side: Side,
    index: usize,
) -> Result<(Complex64, Complex64)> {
    let lambda = lambda_of_k(k, pot.omega)?;
    let g = pot.grid();
    let nf = pot.fine_steps();
    let target = index * REFINE;
    let mut y = initial(g, k, side);
    match side {
        Side::Right => {
            for j in (target..nf).rev() {
                y = step_back(pot.step(j, lambda), y);
            }
        }
        Side::Left => {
            for j in 0..target {
                y = step_fwd(pot.step(j, lambda), y);
            }
        }
    }
    finite_or_overflow(y)
}

fn initial(g: &Grid, k: Complex64, side: Side) -> (Complex64, Complex64) {
    let i = c(0.0, 1.0);
    match side {
        Side::Right => {
            let x = g.x0() + g.length();
            let e = (i * k * x).exp();
            (e, i * k * e)
        }
        Side::Left => {
            let x = g.x0();
            let e = (-i * k * x).exp();
            (e, -i * k * e)
        }
    }
}

fn step_fwd(p: [Complex64; 4], y: (Complex64, Complex64)) -> (Complex64, Complex64) {
    (p[0] * y.0 + p[1] * y.1, p[2] * y.0 + p[3] * y.1)
}

fn step_back(p: [Complex64; 4], y: (Complex64, Complex64)) -> (Complex64, Complex64) {
    (p[3] * y.0 - p[1] * y.1, -p[2] * y.0 + p[0] * y.1)
}

fn finite_or_overflow(y: (Complex64, Complex64)) -> Result<(Complex64, Complex64)> {
    if y.0.is_finite() && y.1.is_finite() {
        Ok(y)
    } else {
        Err(Error::Overflow(
            "Jost integration left the floating-point range".into(),
        ))
    }
}

/// Jost solution on the whole grid, integrated from its normalizing end.
pub fn jost(pot: &LaxPotential, k: Complex64, side: Side) -> Result<JostSolution> {
    let fine = jost_fine(pot, k, side)?;
    let n = pot.grid().n();
    let f = (0..n).map(|i| fine.0[i * REFINE]).collect();
    let df = (0..n).map(|i| fine.1[i * REFINE]).collect();
    Ok(JostSolution {
        k,
        side,
        f: ComplexField::new(*pot.grid(), f)?,
        df: ComplexField::new(*pot.grid(), df)?,
    })
}

/// Jost solution on every fine-mesh node `x0 + jH`, `j ≤ n·R`.
fn jost_fine(
    pot: &LaxPotential,
    k: Complex64,
    side: Side,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let lambda = lambda_of_k(k, pot.omega)?;
    let nf = pot.fine_steps();
    let mut f = vec![c(0.0, 0.0); nf + 1];
    let mut df = vec![c(0.0, 0.0); nf + 1];
    let mut y = initial(pot.grid(), k, side);
    match side {
        Side::Right => {
            f[nf] = y.0;
            df[nf] = y.1;
            for j in (0..nf).rev() {
                y = step_back(pot.step(j, lambda), y);
                f[j] = y.0;
                df[j] = y.1;
            }
        }
        Side::Left => {
            f[0] = y.0;
            df[0] = y.1;
            for j in 0..nf {
                y = step_fwd(pot.step(j, lambda), y);
                f[j + 1] = y.0;
                df[j + 1] = y.1;
            }
        }
    }
    finite_or_overflow((f[0], f[nf]))?;
    if f.iter().chain(&df).any(|z| !z.is_finite()) {
        return Err(Error::Overflow(
            "Jost integration left the floating-point range".into(),
        ));
    }
    Ok((f, df))
}

/// `a(k)` from the Wronskian of the two Jost solutions at grid index `i`.
fn a_at(pot: &LaxPotential, k: Complex64, i: usize) -> Result<Complex64> {
    let fm = jost_at_index(pot, k, Side::Left, i)?;
    let fp = jost_at_index(pot, k, Side::Right, i)?;
    Ok(wronskian_pair(fm, fp) / (2.0 * c(0.0, 1.0) * k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringCoeffs {
    pub k: Vec<f64>,
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
    /// `||a|² - |b|² - 1|` per wavenumber.
    pub unitarity: Vec<f64>,
}

impl ScatteringCoeffs {
    pub fn max_unitarity_error(&self) -> f64 {
        self.unitarity.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_abs_b(&self) -> f64 {
        self.b.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `256` midpoints of a uniform partition of `[-8, 8]`; zero is never a node.
pub fn default_kgrid() -> Vec<f64> {
    uniform_kgrid(256, 8.0)
}

/// `count` midpoints of a uniform partition of `[-kmax, kmax]`.
pub fn uniform_kgrid(count: usize, kmax: f64) -> Vec<f64> {
    let dk = 2.0 * kmax / count as f64;
    (0..count).map(|j| -kmax + (j as f64 + 0.5) * dk).collect()
}

/// `a(k)`, `b(k)` from mid-box Wronskians.
pub fn scattering_coeffs(pot: &LaxPotential, kgrid: &[f64]) -> Result<ScatteringCoeffs> {
    if kgrid.contains(&0.0) {
        return Err(Error::Parameter("k = 0 is excluded from the k-grid".into()));
    }
    let mid = pot.grid().n() / 2;
    let mut out = ScatteringCoeffs {
        k: kgrid.to_vec(),
        a: Vec::with_capacity(kgrid.len()),
        b: Vec::with_capacity(kgrid.len()),
        unitarity: Vec::with_capacity(kgrid.len()),
    };
    for &k in kgrid {
        let kc = c(k, 0.0);
        let two_ik = c(0.0, 2.0 * k);
        let fm = jost_at_index(pot, kc, Side::Left, mid)?;
        let fp = jost_at_index(pot, kc, Side::Right, mid)?;
        let fp_neg = jost_at_index(pot, -kc, Side::Right, mid)?;
        let a = wronskian_pair(fm, fp) / two_ik;
        let b = -wronskian_pair(fm, fp_neg) / two_ik;
        out.a.push(a);
        out.b.push(b);
        out.unitarity
            .push((a.norm_sqr() - b.norm_sqr() - 1.0).abs());
    }
    Ok(out)
}

/// Largest difference between `a(k)` evaluated at the quarter and three-quarter points.
pub fn wronskian_position_drift(pot: &LaxPotential, kgrid: &[f64]) -> Result<f64> {
    let n = pot.grid().n();
    let mut worst: f64 = 0.0;
    for &k in kgrid {
        let a1 = a_at(pot, c(k, 0.0), n / 4)?;
        let a2 = a_at(pot, c(k, 0.0), 3 * n / 4)?;
        worst = worst.max((a1 - a2).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSpectrum {
    pub kappas: Vec<f64>,
    /// `f⁻ = b_n f⁺` at `k = iκ_n`.
    pub b_n: Vec<f64>,
    /// `ȧ(iκ_n)` (purely imaginary).
    pub adot_n: Vec<Complex64>,
}

impl DiscreteSpectrum {
    pub fn len(&self) -> usize {
        self.kappas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappas.is_empty()
    }

    /// Norming constants `C_n = b_n / (i ȧ_n)`.
    pub fn norming_constants(&self) -> Vec<f64> {
        self.b_n
            .iter()
            .zip(&self.adot_n)
            .map(|(b, ad)| (b / (c(0.0, 1.0) * ad)).re)
            .collect()
    }
}

/// Real Wronskian `W(f⁻, f⁺)` at `k = iκ`, evaluated mid-box.
fn w_imag(pot: &LaxPotential, kappa: f64) -> Result<f64> {
    let mid = pot.grid().n() / 2;
    let k = c(0.0, kappa);
    let fm = jost_at_index(pot, k, Side::Left, mid)?;
    let fp = jost_at_index(pot, k, Side::Right, mid)?;
    Ok(wronskian_pair(fm, fp).re)
}

/// Zeros of `a(iκ)` on `(δ, ½ - δ)` by sign scan and bisection.
pub fn discrete_eigenvalues(pot: &LaxPotential, max_count: usize) -> Result<DiscreteSpectrum> {
    let delta = 1e-3;
    let scan = 400;
    let (lo, hi) = (delta, 0.5 - delta);
    let kap = |j: usize| lo + (hi - lo) * j as f64 / scan as f64;
    let mut roots = Vec::new();
    let mut prev = w_imag(pot, kap(0))?;
    for j in 1..=scan {
        let cur = w_imag(pot, kap(j))?;
        if prev == 0.0 || prev.signum() != cur.signum() {
            let (mut a, mut b) = (kap(j - 1), kap(j));
            let mut fa = prev;
            while b - a > 1e-13 {
                let mid = 0.5 * (a + b);
                let fm = w_imag(pot, mid)?;
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev = cur;
    }
    if roots.len() > max_count {
        return Err(Error::TooManyRoots {
            found: roots.len(),
            max: max_count,
        });
    }
    let mid = pot.grid().n() / 2;
    let mut b_n = Vec::new();
    let mut adot_n = Vec::new();
    for &kappa in &roots {
        let k = c(0.0, kappa);
        let fm = jost_at_index(pot, k, Side::Left, mid)?;
        let fp = jost_at_index(pot, k, Side::Right, mid)?;
        b_n.push((fm.0 / fp.0).re);
        // a(iκ) = -W/(2κ) is real; d/dk = -i d/dκ
        let h = 1e-5;
        let ap = -w_imag(pot, kappa + h)? / (2.0 * (kappa + h));
        let am = -w_imag(pot, kappa - h)? / (2.0 * (kappa - h));
        adot_n.push(c(0.0, -(ap - am) / (2.0 * h)));
    }
    Ok(DiscreteSpectrum {
        kappas: roots,
        b_n,
        adot_n,
    })
}

/// Squared Jost solutions `F^± = (f^±)²` at one spectral parameter.
#[derive(Debug, Clone)]
pub struct SquaredEigenfunction {
    pub k: Complex64,
    pub f_plus: ComplexField,
    pub f_minus: ComplexField,
    /// Relative residual of the third-order relation satisfied by `F⁺`.
    pub residual: f64,
}

/// Build `F^±` and measure how well `F⁺` satisfies
/// `-F''' + (1 + 4λω)F' + 2λ(m'F + 2mF') = 0`.
///
/// For imaginary `k` (decaying `F`) the residual is that of the integrated
/// eigenrelation `𝒦F = -F/(2λ)`, `𝒦 = (1 - ∂²)^{-1}(2ω + m + ∂^{-1} m ∂)`.
/// For real `k` the local form is checked with eighth-order differences on
/// the fine integration mesh, away from the box ends.
pub fn squared_eigenfunction(pot: &LaxPotential, k: Complex64) -> Result<SquaredEigenfunction> {
    let fp = jost(pot, k, Side::Right)?;
    let fm = jost(pot, k, Side::Left)?;
    let lambda = lambda_of_k(k, pot.omega)?;
    let residual = if k.re == 0.0 {
        integrated_residual(pot, &fp.f.squared(), lambda.re)?
    } else {
        local_residual(pot, k, lambda)?
    };
    Ok(SquaredEigenfunction {
        k,
        f_plus: fp.f.squared(),
        f_minus: fm.f.squared(),
        residual,
    })
}

fn integrated_residual(pot: &LaxPotential, f: &ComplexField, lambda: f64) -> Result<f64> {
    let f = f.re();
    let m = pot.m();
    let mfx = m.pointwise(&f.dx());
    let inner = &(&f.scale(2.0 * pot.omega) + &m.pointwise(&f)) + &mfx.cumulative_integral();
    let kf = inner.helmholtz_inverse();
    let r = &kf + &f.scale(1.0 / (2.0 * lambda));
    Ok(r.l2_norm() / f.l2_norm())
}

const FD8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

fn fd1(v: &[Complex64], j: usize, h: f64) -> Complex64 {
    let mut s = c(0.0, 0.0);
    for (p, w) in FD8.iter().enumerate() {
        s += *w * (v[j + p + 1] - v[j - p - 1]);
    }
    s / h
}

fn local_residual(pot: &LaxPotential, k: Complex64, lambda: Complex64) -> Result<f64> {
    let (f, df) = jost_fine(pot, k, Side::Right)?;
    let h = pot.fine_h();
    // F = f², F' = 2ff' exactly; F'' = 2f'² + 2qF from the ODE; F''' by differences of F''
    let m_fine = pot.m().resample(REFINE, 0.0);
    let dm_fine = pot.m().dx().resample(REFINE, 0.0);
    let nf = m_fine.len();
    let q = |j: usize| 0.25 + lambda * (m_fine[j % nf] + pot.omega);
    let ff: Vec<Complex64> = f.iter().map(|z| z * z).collect();
    let f1: Vec<Complex64> = f.iter().zip(&df).map(|(a, b)| 2.0 * a * b).collect();
    let f2: Vec<Complex64> = (0..=nf)
        .map(|j| 2.0 * df[j] * df[j] + 2.0 * q(j) * ff[j])
        .collect();
    let margin = nf / 16;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in margin..nf - margin {
        let f3 = fd1(&f2, j, h);
        let t1 = (1.0 + 4.0 * lambda * pot.omega) * f1[j];
        let t2 = 2.0 * lambda * (dm_fine[j] * ff[j] + 2.0 * m_fine[j] * f1[j]);
        worst = worst.max((-f3 + t1 + t2).norm());
        scale = scale.max(f3.norm()).max(t1.norm()).max(t2.norm());
    }
    Ok(worst / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    /// Relative L² error of the reconstruction.
    pub relative_error: f64,
    /// Relative L² size of the continuum contribution.
    pub continuum_fraction: f64,
    /// Set when the error exceeds 0.1 (k-grid too coarse).
    pub flagged: bool,
}

/// Discrete-pair data: `φ'`, `∂_cφ` and their duals.
struct DiscretePair {
    f1: Field,
    f2: Field,
    g1: Field,
    g2: Field,
}

fn discrete_pair(p: &SolitonProfile) -> Result<DiscretePair> {
    let g = *p.grid();
    let dc = dphi_dc(p.params.c, p.params.omega, &g, p.params.x_peak, 1e-4)?;
    let mu = dc.helmholtz();
    let ec = p.m.inner(&dc);
    // odd antiderivative of ∂_c m: anchored so it is antisymmetric about the peak
    let prim = mu.cumulative_integral();
    let total = mu.integrate();
    let odd = prim.map(|v| v - 0.5 * total)?;
    Ok(DiscretePair {
        f1: p.dphi.clone(),
        f2: dc,
        g1: odd.scale(-1.0 / ec),
        g2: p.m.scale(1.0 / ec),
    })
}

/// Expand `z` over `{(F⁺)_x(k)}`, `φ'` and `∂_cφ` and report the reconstruction error.
///
/// Continuum weights are `dk / (2πik(1 + 4k²)|a(k)|²)` against `(1 - ∂²)z`; the
/// discrete pair uses the biorthogonal duals `-(1/E_c)∂^{-1}∂_c m` and `m/E_c`
/// with `E_c = ⟨m, ∂_cφ⟩ = 4κc` and the antiderivative centered on the peak.
pub fn completeness_residual(
    p: &SolitonProfile,
    z: &Field,
    kgrid: &[f64],
) -> Result<CompletenessReport> {
    let g = *p.grid();
    if z.grid() != &g {
        return Err(Error::GridMismatch);
    }
    let zmax = z.max_abs();
    let n = g.n();
    let edge = z.values()[0].abs().max(z.values()[n - 1].abs());
    if zmax == 0.0 || edge > 1e-8 * zmax {
        return Err(Error::Domain(
            "test function must decay at the box ends".into(),
        ));
    }
    let pot = LaxPotential::new(p.m.clone(), p.params.omega)?;
    let zz = z.helmholtz();
    let h = g.spacing();
    let mid = n / 2;
    let dk = if kgrid.len() > 1 {
        kgrid[1] - kgrid[0]
    } else {
        1.0
    };
    let mut cont = vec![0.0; n];
    for &k in kgrid {
        if k == 0.0 {
            return Err(Error::Parameter("k = 0 is excluded from the k-grid".into()));
        }
        let kc = c(k, 0.0);
        let fp = jost(&pot, kc, Side::Right)?;
        let fm_mid = jost_at_index(&pot, kc, Side::Left, mid)?;
        let a = wronskian_pair(fm_mid, fp.at(mid)) / c(0.0, 2.0 * k);
        let fv = fp.f.values();
        let dfv = fp.df.values();
        let coef: Complex64 = fv
            .iter()
            .zip(zz.values())
            .map(|(f, w)| (f * f).conj() * w)
            .sum::<Complex64>()
            * h;
        let weight = dk * coef / (c(0.0, 2.0 * PI * k) * (1.0 + 4.0 * k * k) * a.norm_sqr());
        for i in 0..n {
            cont[i] += (2.0 * fv[i] * dfv[i] * weight).re;
        }
    }
    let cont = Field::new(g, cont)?;
    let dp = discrete_pair(p)?;
    let disc = &dp.f1.scale(dp.g1.inner(z)) + &dp.f2.scale(dp.g2.inner(z));
    let recon = &cont + &disc;
    let relative_error = (&recon - z).l2_norm() / z.l2_norm();
    Ok(CompletenessReport {
        relative_error,
        continuum_fraction: cont.l2_norm() / z.l2_norm(),
        flagged: relative_error > 0.1,
    })
}

/// Gram matrix `⟨f_j, g_k⟩` of the discrete pair used by [`completeness_residual`].
pub fn discrete_gram(p: &SolitonProfile) -> Result<[[f64; 2]; 2]> {
    let dp = discrete_pair(p)?;
    Ok([
        [dp.f1.inner(&dp.g1), dp.f1.inner(&dp.g2)],
        [dp.f2.inner(&dp.g1), dp.f2.inner(&dp.g2)],
    ])
}
