//! Smooth Camassa–Holm solitons built from their parametric representation.
//!
//! With `s = sqrt(1 - 2ω/c)` and `θ0 = atanh(s)` the profile is
//! `u(θ) = (c - 2ω) / (1 + (2ω/c) sinh²θ)` at distance
//! `x(θ) = 2θ/s + ln cosh(θ - θ0) - ln cosh(θ + θ0)` from the peak.
//! Each grid point is mapped back to `θ` by a safeguarded Newton solve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid};

/// Relative size of `φ` at half a box length above which the box is too small.
pub const TRUNCATION_THRESHOLD: f64 = 1e-8;

const IMAGES: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub c: f64,
    pub omega: f64,
    pub kappa: f64,
    pub x_peak: f64,
}

impl SolitonParams {
    pub fn new(c: f64, omega: f64, x_peak: f64) -> Result<Self> {
        check_speed(c, omega)?;
        if !x_peak.is_finite() {
            return Err(Error::Parameter("x_peak must be finite".into()));
        }
        Ok(Self {
            c,
            omega,
            kappa: kappa_of(c, omega),
            x_peak,
        })
    }

    /// Parameters from the discrete eigenvalue `κ ∈ (0, 1/2)` via `c = 2ω/(1 - 4κ²)`.
    pub fn from_kappa(kappa: f64, omega: f64, x_peak: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 0.5) {
            return Err(Error::Parameter(format!(
                "kappa = {kappa} outside (0, 1/2)"
            )));
        }
        Self::new(speed_of_kappa(kappa, omega)?, omega, x_peak)
    }

    /// Exponential decay rate `sqrt(1 - 2ω/c)` of the tails.
    pub fn decay_rate(&self) -> f64 {
        (1.0 - 2.0 * self.omega / self.c).sqrt()
    }

    pub fn theta0(&self) -> f64 {
        self.decay_rate().atanh()
    }

    pub fn peak_height(&self) -> f64 {
        self.c - 2.0 * self.omega
    }
}

fn check_speed(c: f64, omega: f64) -> Result<()> {
    if !(c.is_finite() && omega.is_finite()) {
        return Err(Error::Parameter("c and omega must be finite".into()));
    }
    if omega <= 0.0 {
        return Err(Error::Parameter(format!(
            "omega = {omega} must be positive (use build_peakon for omega = 0)"
        )));
    }
    if c <= 2.0 * omega {
        return Err(Error::Parameter(format!("c ≤ 2ω (c = {c}, ω = {omega})")));
    }
    Ok(())
}

/// `κ = ½ sqrt(1 - 2ω/c)`.
pub fn kappa_of(c: f64, omega: f64) -> f64 {
    0.5 * (1.0 - 2.0 * omega / c).sqrt()
}

/// `c = 2ω / (1 - 4κ²)`.
pub fn speed_of_kappa(kappa: f64, omega: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 0.5) || omega <= 0.0 {
        return Err(Error::Parameter(format!(
            "need 0 < κ < 1/2 and ω > 0 (κ = {kappa}, ω = {omega})"
        )));
    }
    Ok(2.0 * omega / (1.0 - 4.0 * kappa * kappa))
}

/// `ln cosh z` without overflow.
fn ln_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Distance from the peak as a function of the parameter `θ ≥ 0`.
fn x_of_theta(theta: f64, s: f64, theta0: f64) -> f64 {
    2.0 * theta / s + ln_cosh(theta - theta0) - ln_cosh(theta + theta0)
}

fn dx_dtheta(theta: f64, s: f64, theta0: f64) -> f64 {
    2.0 / s + (theta - theta0).tanh() - (theta + theta0).tanh()
}

fn u_of_theta(theta: f64, c: f64, omega: f64) -> f64 {
    // with q = e^{-2θ}: u = 4Aq / (4q + β(1 - q)²), A = c - 2ω, β = 2ω/c
    let (a, b) = (c - 2.0 * omega, 2.0 * omega / c);
    let q = (-2.0 * theta).exp();
    4.0 * a * q / (4.0 * q + b * (1.0 - q) * (1.0 - q))
}

/// `(φ, φ', φ'')` at signed offset `d` from the peak, by parametric differentiation.
fn jet_at(d: f64, c: f64, omega: f64, s: f64, theta0: f64) -> [f64; 3] {
    let th = theta_of_distance(d.abs(), s, theta0);
    let (a, b) = (c - 2.0 * omega, 2.0 * omega / c);
    let q = (-2.0 * th).exp();
    let den = 4.0 * q + b * (1.0 - q) * (1.0 - q);
    let den_q = 4.0 - 2.0 * b * (1.0 - q);
    let u = 4.0 * a * q / den;
    let u_t = -8.0 * a * b * q * (1.0 - q * q) / (den * den);
    let u_tt = 16.0
        * a
        * b
        * q
        * ((1.0 - 3.0 * q * q) / (den * den) - 2.0 * (q - q * q * q) * den_q / (den * den * den));
    let x_t = dx_dtheta(th, s, theta0);
    let x_tt = sech2(th - theta0) - sech2(th + theta0);
    let d1 = u_t / x_t;
    let d2 = (u_tt * x_t - u_t * x_tt) / (x_t * x_t * x_t);
    [u, if d < 0.0 { -d1 } else { d1 }, d2]
}

fn sech2(z: f64) -> f64 {
    let e = (-2.0 * z.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// Invert `x(θ) = d` for `d ≥ 0`.
fn theta_of_distance(d: f64, s: f64, theta0: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    // the root lies in [0, s(d + 2θ0)/2] because x(θ) ≥ 2θ/s - 2θ0
    let mut lo = 0.0;
    let mut hi = 0.5 * s * (d + 2.0 * theta0);
    let mut th = 0.5 * s * d;
    for _ in 0..200 {
        let f = x_of_theta(th, s, theta0) - d;
        if f > 0.0 {
            hi = th;
        } else {
            lo = th;
        }
        let step = f / dx_dtheta(th, s, theta0);
        let mut next = th - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - th).abs() <= 1e-15 * th.max(1.0) {
            return next;
        }
        th = next;
    }
    th
}

/// Value of the (non-periodized) soliton at distance `d` from its peak.
pub fn profile_at_distance(c: f64, omega: f64, d: f64) -> Result<f64> {
    check_speed(c, omega)?;
    let s = (1.0 - 2.0 * omega / c).sqrt();
    let theta0 = s.atanh();
    Ok(u_of_theta(theta_of_distance(d.abs(), s, theta0), c, omega))
}

/// Check that the parametric map is strictly increasing on a 4096-point θ-mesh.
fn verify_monotone(s: f64, theta0: f64, theta_max: f64) -> Result<()> {
    let m = 4096;
    let mut prev = x_of_theta(0.0, s, theta0);
    for i in 1..=m {
        let th = theta_max * i as f64 / m as f64;
        let x = x_of_theta(th, s, theta0);
        if !(x > prev) || dx_dtheta(th, s, theta0) <= 0.0 {
            return Err(Error::Internal(format!(
                "parametric map not monotone near θ = {th}"
            )));
        }
        prev = x;
    }
    Ok(())
}

/// Soliton profile with its derivative and momentum density `m = φ - φ''`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonProfile {
    pub params: SolitonParams,
    pub phi: Field,
    pub dphi: Field,
    pub m: Field,
}

impl SolitonProfile {
    pub fn grid(&self) -> &Grid {
        self.phi.grid()
    }
}

/// Build `φ_c(x - x_peak)` on the periodic box.
pub fn build_profile(c: f64, omega: f64, grid: &Grid, x_peak: f64) -> Result<SolitonProfile> {
    let params = SolitonParams::new(c, omega, x_peak)?;
    let [phi, dphi, d2phi] = soliton_jet(&params, grid)?;
    let m = &phi - &d2phi;
    Ok(SolitonProfile {
        params,
        phi,
        dphi,
        m,
    })
}

/// Samples of the soliton alone, without derivatives.
pub fn soliton_field(params: &SolitonParams, grid: &Grid) -> Result<Field> {
    let [phi, _, _] = soliton_jet(params, grid)?;
    Ok(phi)
}

/// Periodized samples of `φ`, `φ'` and `φ''`.
pub fn soliton_jet(params: &SolitonParams, grid: &Grid) -> Result<[Field; 3]> {
    let (c, omega) = (params.c, params.omega);
    let s = params.decay_rate();
    let theta0 = params.theta0();
    let half = 0.5 * grid.length();

    let edge = u_of_theta(theta_of_distance(half, s, theta0), c, omega);
    if edge > TRUNCATION_THRESHOLD * params.peak_height() {
        return Err(Error::GridTooSmall(format!(
            "soliton value {edge:.3e} at half box length {half}"
        )));
    }
    let theta_max = theta_of_distance(half, s, theta0);
    verify_monotone(s, theta0, theta_max.max(1.0))?;

    let mut out = [
        vec![0.0; grid.n()],
        vec![0.0; grid.n()],
        vec![0.0; grid.n()],
    ];
    for (i, x) in grid.points().into_iter().enumerate() {
        let d = grid.periodic_offset(x, params.x_peak);
        for j in -IMAGES..=IMAGES {
            let jet = jet_at(d + j as f64 * grid.length(), c, omega, s, theta0);
            for (o, v) in out.iter_mut().zip(jet) {
                o[i] += v;
            }
        }
    }
    let [a, b, c2] = out;
    Ok([
        Field::new(*grid, a)?,
        Field::new(*grid, b)?,
        Field::new(*grid, c2)?,
    ])
}

/// Periodized peakon `c·e^{-|x - x_peak|}`.
pub fn build_peakon(c: f64, grid: &Grid, x_peak: f64) -> Result<Field> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Parameter(format!(
            "peakon speed c = {c} must be positive"
        )));
    }
    let l = grid.length();
    Field::from_fn(*grid, |x| {
        let d = grid.periodic_offset(x, x_peak);
        // exact sum of all periodic images of e^{-|d|}, |d| ≤ L/2
        c * ((-d.abs()).exp() + 2.0 * d.cosh() * (-l).exp() / (1.0 - (-l).exp()))
    })
}

/// Sup-norm of `-cφ + cφ'' + (3/2)φ² + 2ωφ - φφ'' - ½(φ')²`.
pub fn stationary_residual_of(phi: &Field, c: f64, omega: f64) -> f64 {
    let d1 = phi.dx();
    let d2 = phi.dxx();
    phi.values()
        .iter()
        .zip(d1.values())
        .zip(d2.values())
        .map(|((&p, &p1), &p2)| {
            (-c * p + c * p2 + 1.5 * p * p + 2.0 * omega * p - p * p2 - 0.5 * p1 * p1).abs()
        })
        .fold(0.0, f64::max)
}

pub fn stationary_residual(p: &SolitonProfile) -> f64 {
    stationary_residual_of(&p.phi, p.params.c, p.params.omega)
}

/// Sup-norm of `(φ')²(c - φ) - φ²(c - 2ω - φ)`.
pub fn first_integral_residual_of(phi: &Field, c: f64, omega: f64) -> f64 {
    let d1 = phi.dx();
    phi.values()
        .iter()
        .zip(d1.values())
        .map(|(&p, &p1)| (p1 * p1 * (c - p) - p * p * (c - 2.0 * omega - p)).abs())
        .fold(0.0, f64::max)
}

pub fn first_integral_residual(p: &SolitonProfile) -> f64 {
    first_integral_residual_of(&p.phi, p.params.c, p.params.omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumCheck {
    pub min_m: f64,
    /// Sup-norm of `m - ωφ(2c - φ)/(c - φ)²`.
    pub identity_residual: f64,
}

pub fn momentum_positivity(p: &SolitonProfile) -> Result<MomentumCheck> {
    let (c, omega) = (p.params.c, p.params.omega);
    if omega <= 0.0 {
        return Err(Error::Parameter("momentum identity needs ω > 0".into()));
    }
    let min_m = p.m.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let identity_residual =
        p.m.values()
            .iter()
            .zip(p.phi.values())
            .map(|(&m, &f)| (m - omega * f * (2.0 * c - f) / ((c - f) * (c - f))).abs())
            .fold(0.0, f64::max);
    Ok(MomentumCheck {
        min_m,
        identity_residual,
    })
}

/// Largest violation of `|φ'| ≤ φ` (non-positive when the bound holds).
pub fn slope_bound_violation(p: &SolitonProfile) -> f64 {
    p.dphi
        .values()
        .iter()
        .zip(p.phi.values())
        .map(|(d, f)| d.abs() - f)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForms {
    pub kappa: f64,
    pub h1: f64,
    pub h2: f64,
    pub dh1_dc: f64,
    pub dh2_dc: f64,
}

/// Closed-form energies of the soliton and their speed derivatives.
pub fn closed_form_invariants(c: f64, omega: f64) -> Result<ClosedForms> {
    check_speed(c, omega)?;
    let k = kappa_of(c, omega);
    let k2 = k * k;
    let log = ((1.0 - 2.0 * k) / (1.0 + 2.0 * k)).ln();
    let q = 1.0 - 4.0 * k2;
    let h1 = omega.powi(2) * (log + 4.0 * k * (1.0 + 4.0 * k2) / (q * q));
    let h2 =
        omega.powi(3) * (log + 4.0 * k * (3.0 + 32.0 * k2 - 48.0 * k2 * k2) / (3.0 * q * q * q));
    Ok(ClosedForms {
        kappa: k,
        h1,
        h2,
        dh1_dc: 4.0 * k * c,
        dh2_dc: 4.0 * k * c * c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Invariants {
    /// `½∫(u² + u_x²)`.
    pub e: f64,
    /// `½∫(u³ + u u_x² + 2ωu²)`.
    pub f: f64,
    /// `∫(sqrt(m + ω) - sqrt(ω))²`.
    pub h0: f64,
    /// `∫(sqrt((m + ω)/ω) - 1)`.
    pub casimir: f64,
}

pub fn numeric_invariants(u: &Field, omega: f64) -> Result<Invariants> {
    if !(omega > 0.0) {
        return Err(Error::Parameter("invariants need ω > 0".into()));
    }
    let ux = u.dx();
    let m = u - &u.dxx();
    if m.values().iter().any(|&v| v + omega <= 0.0) {
        return Err(Error::Domain("m + ω ≤ 0 somewhere on the grid".into()));
    }
    let h = u.grid().spacing();
    let (mut e, mut f, mut h0, mut cas) = (0.0, 0.0, 0.0, 0.0);
    let sw = omega.sqrt();
    for i in 0..u.len() {
        let (v, vx, mv) = (u.values()[i], ux.values()[i], m.values()[i]);
        e += v * v + vx * vx;
        f += v * v * v + v * vx * vx + 2.0 * omega * v * v;
        h0 += ((mv + omega).sqrt() - sw).powi(2);
        cas += ((mv + omega) / omega).sqrt() - 1.0;
    }
    Ok(Invariants {
        e: 0.5 * e * h,
        f: 0.5 * f * h,
        h0: h0 * h,
        casimir: cas * h,
    })
}

/// Energy `E = ½∫(u² + u_x²)` only.
pub fn energy(u: &Field) -> f64 {
    0.5 * u.h1_norm_squared()
}

/// `∂φ/∂c` by centered differences of profiles at `c ± δ`.
pub fn dphi_dc(c: f64, omega: f64, grid: &Grid, x_peak: f64, delta: f64) -> Result<Field> {
    let plus = soliton_field(&SolitonParams::new(c + delta, omega, x_peak)?, grid)?;
    let minus = soliton_field(&SolitonParams::new(c - delta, omega, x_peak)?, grid)?;
    Ok((&plus - &minus).scale(0.5 / delta))
}

/// Decay rate from a least-squares fit of `ln φ` against distance on the right tail.
pub fn fit_decay_rate(p: &SolitonProfile) -> Result<f64> {
    let g = p.grid();
    let sigma = p.params.decay_rate();
    let lo = 5.0 / sigma;
    let hi = (15.0 / sigma).min(0.5 * g.length() - 5.0);
    if hi <= lo + 1.0 {
        return Err(Error::GridTooSmall(
            "tail window too short for a decay fit".into(),
        ));
    }
    let pts: Vec<(f64, f64)> = (0..g.n())
        .filter_map(|i| {
            let d = g.periodic_offset(g.point(i), p.params.x_peak);
            let v = p.phi.values()[i];
            (d >= lo && d <= hi && v > 0.0).then(|| (d, v.ln()))
        })
        .collect();
    Ok(-crate::stats::linear_fit(&pts)?.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Grid {
        Grid::default_box()
    }

    #[test]
    fn peak_height_and_evenness() {
        let p = build_profile(4.0, 1.0, &grid(), 0.0).unwrap();
        let g = grid();
        let ip = g.n() / 2;
        assert!((p.phi.values()[ip] - 2.0).abs() < 1e-12);
        for d in 1..g.n() / 2 {
            assert!((p.phi.values()[ip + d] - p.phi.values()[ip - d]).abs() < 1e-13);
        }
    }

    #[test]
    fn residuals_for_test_matrix() {
        for &(c, w) in &[(4.0, 1.0), (8.0 / 3.0, 1.0), (3.0, 0.5)] {
            let p = build_profile(c, w, &grid(), 0.0).unwrap();
            assert!(stationary_residual(&p) < 1e-7, "({c},{w})");
            assert!(first_integral_residual(&p) < 1e-7, "({c},{w})");
            assert!(slope_bound_violation(&p) <= 1e-12);
            let mc = momentum_positivity(&p).unwrap();
            assert!(mc.min_m > 0.0, "({c},{w}) min m = {}", mc.min_m);
            assert!(
                mc.identity_residual < 1e-7,
                "({c},{w}) {}",
                mc.identity_residual
            );
        }
    }

    #[test]
    fn parametric_derivatives_match_spectral() {
        for &(c, w) in &[(4.0, 1.0), (8.0 / 3.0, 1.0), (3.0, 0.5)] {
            let p = build_profile(c, w, &grid(), 0.3).unwrap();
            assert!((&p.phi.dx() - &p.dphi).max_abs() < 1e-10);
            assert!((&(&p.phi - &p.phi.dxx()) - &p.m).max_abs() < 1e-9);
        }
    }

    #[test]
    fn scaled_profile_violates_identities() {
        let p = build_profile(4.0, 1.0, &grid(), 0.0).unwrap();
        let s = p.phi.scale(1.01);
        assert!(stationary_residual_of(&s, 4.0, 1.0) > 1e-3);
        assert!(first_integral_residual_of(&s, 4.0, 1.0) > 1e-3);
        assert_eq!(stationary_residual_of(&Field::zeros(grid()), 4.0, 1.0), 0.0);
    }

    #[test]
    fn off_grid_peak_is_a_translate() {
        let g = grid();
        let a = build_profile(4.0, 1.0, &g, 0.0).unwrap();
        let b = build_profile(4.0, 1.0, &g, 0.37).unwrap();
        let t = a.phi.translate(0.37);
        assert!((&t - &b.phi).max_abs() < 1e-10);
        assert!(stationary_residual(&b) < 1e-7);
    }

    #[test]
    fn rejects_slow_speed() {
        assert!(build_profile(1.0, 1.0, &grid(), 0.0).is_err());
        assert!(build_profile(3.0, 0.0, &grid(), 0.0).is_err());
    }

    #[test]
    fn small_box_is_reported() {
        let g = Grid::centered(256, 20.0).unwrap();
        assert!(matches!(
            build_profile(2.2, 1.0, &g, 0.0),
            Err(Error::GridTooSmall(_))
        ));
    }

    #[test]
    fn closed_form_values() {
        let cf = closed_form_invariants(8.0 / 3.0, 1.0).unwrap();
        assert_relative_eq!(cf.kappa, 0.25, epsilon = 1e-14);
        assert_relative_eq!(cf.h1, 1.123609933, epsilon = 1e-8);
        assert_relative_eq!(cf.dh1_dc, 8.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(cf.dh2_dc, 64.0 / 9.0, epsilon = 1e-13);
        assert_relative_eq!(
            speed_of_kappa(0.25, 1.0).unwrap(),
            8.0 / 3.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        for &(c, w) in &[(4.0, 1.0), (8.0 / 3.0, 1.0), (3.0, 0.5)] {
            let p = build_profile(c, w, &grid(), 0.0).unwrap();
            let inv = numeric_invariants(&p.phi, w).unwrap();
            let cf = closed_form_invariants(c, w).unwrap();
            assert_relative_eq!(inv.e, cf.h1, max_relative = 1e-6);
            assert_relative_eq!(inv.f, cf.h2, max_relative = 1e-6);
        }
    }

    #[test]
    fn zero_field_invariants_vanish() {
        let inv = numeric_invariants(&Field::zeros(grid()), 1.0).unwrap();
        assert_eq!((inv.e, inv.f, inv.h0, inv.casimir), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn peakon_samples() {
        let g = Grid::centered(1024, 64.0).unwrap();
        let p = build_peakon(1.0, &g, 0.0).unwrap();
        let i0 = g.n() / 2;
        assert!((p.values()[i0] - 1.0).abs() < 1e-14);
        let j = (1.0 / g.spacing()).round() as usize;
        assert!((p.values()[i0 + j] - (-1.0f64).exp()).abs() < 1e-14);
        assert!((p.values()[i0 - j] - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn small_omega_approaches_peakon() {
        let g = grid();
        let peakon = build_peakon(1.0, &g, 0.0).unwrap();
        let mut last = f64::INFINITY;
        for &w in &[0.1, 0.01, 0.001] {
            let p = build_profile(1.0, w, &g, 0.0).unwrap();
            let dist = (&p.phi - &peakon).h1_norm();
            assert!(dist < last);
            last = dist;
        }
        let p = build_profile(1.0, 1e-3, &g, 0.0).unwrap();
        let sup = (0..g.n())
            .filter(|&i| g.point(i).abs() <= 5.0)
            .map(|i| (p.phi.values()[i] - peakon.values()[i]).abs())
            .fold(0.0, f64::max);
        assert!(sup < 0.02, "sup = {sup}");
    }

    #[test]
    fn decay_rate_fit() {
        let p = build_profile(4.0, 1.0, &grid(), 0.0).unwrap();
        let r = fit_decay_rate(&p).unwrap();
        assert_relative_eq!(r, p.params.decay_rate(), max_relative = 0.05);
    }
}
