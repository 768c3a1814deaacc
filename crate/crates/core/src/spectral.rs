//! Periodic grids, sampled fields and Fourier-collocation calculus.
//!
//! The real line is truncated to a periodic box `[x0, x0 + L)` sampled at
//! `n` equispaced points. Derivatives, `(1 - ∂²)^{-1}` and the skew operator
//! `J = -∂(1 - ∂²)^{-1}` act diagonally in Fourier space. Quadrature is the
//! trapezoid rule, which is spectrally accurate for smooth periodic data.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold on `|mean(f)| / max|f|` accepted by [`Field::antiderivative`].
pub const DEFAULT_MEAN_THRESHOLD: f64 = 1e-8;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward FFT (no normalization).
pub(crate) fn fft_in_place(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// In-place inverse FFT, normalized so that `ifft(fft(x)) == x`.
pub(crate) fn ifft_in_place(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub(crate) fn forward_real(values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    buf
}

pub(crate) fn inverse_to_real(mut spectrum: Vec<Complex64>) -> Vec<f64> {
    ifft_in_place(&mut spectrum);
    spectrum.into_iter().map(|z| z.re).collect()
}

/// Uniform periodic sampling of `[x0, x0 + length)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    length: f64,
    x0: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64, x0: f64) -> Result<Self> {
        if n < 64 || !n.is_power_of_two() {
            return Err(Error::Grid(format!("n = {n} must be a power of two >= 64")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Grid(format!("length = {length} must be positive")));
        }
        if !x0.is_finite() {
            return Err(Error::Grid("x0 must be finite".into()));
        }
        Ok(Self { n, length, x0 })
    }

    /// Box `[-length/2, length/2)`.
    pub fn centered(n: usize, length: f64) -> Result<Self> {
        Self::new(n, length, -0.5 * length)
    }

    /// The default box: `n = 1024`, `L = 80`, centered at the origin.
    pub fn default_box() -> Self {
        Self::centered(1024, 80.0).expect("default grid is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Angular wavenumbers in FFT order; index `n/2` holds the Nyquist mode `-π/h`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let dk = 2.0 * PI / self.length;
        let n = self.n as i64;
        (0..n)
            .map(|j| {
                if j < n / 2 {
                    j as f64 * dk
                } else {
                    (j - n) as f64 * dk
                }
            })
            .collect()
    }

    /// Wrap `x` into `[x0, x0 + L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        self.x0 + (x - self.x0).rem_euclid(self.length)
    }

    /// Signed periodic distance `x - y` reduced to `[-L/2, L/2)`.
    pub fn periodic_offset(&self, x: f64, y: f64) -> f64 {
        let half = 0.5 * self.length;
        (x - y + half).rem_euclid(self.length) - half
    }
}

/// Exponential weight `e^{a x}` used for the weighted norms and operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParam {
    a: f64,
}

impl WeightParam {
    pub fn new(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Parameter("weight rate must be finite".into()));
        }
        Ok(Self { a })
    }

    /// Weight admissible for the soliton of speed `c`: `-sqrt(1 - 2ω/c) < a < 0`.
    pub fn for_soliton(a: f64, c: f64, omega: f64) -> Result<Self> {
        let a1 = -(1.0 - 2.0 * omega / c).sqrt();
        if !(a > a1 && a < 0.0) {
            return Err(Error::Parameter(format!(
                "weight a = {a} outside ({a1:.6}, 0)"
            )));
        }
        Self::new(a)
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

/// Real samples of a function on a [`Grid`]. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

/// Result of [`Field::antiderivative`]: the primitive and the mean that was removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Antiderivative {
    pub field: Field,
    pub removed_mean: f64,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::Grid(format!(
                "expected {} samples, got {}",
                grid.n(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { grid, values })
    }

    /// Construction from values produced by this crate's own kernels.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_raw(grid, vec![0.0; grid.n()])
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self::from_raw(grid, vec![value; grid.n()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_grid(other)?;
        Self::new(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| v * s).collect())
    }

    /// Pointwise product without de-aliasing.
    pub fn pointwise(&self, other: &Field) -> Self {
        assert_eq!(self.grid, other.grid, "pointwise product across grids");
        Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        )
    }

    pub(crate) fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Multiply the spectrum by `symbol(k)`; the Nyquist mode keeps only the real part
    /// of the symbol so the output stays real.
    pub fn apply_symbol(&self, symbol: impl Fn(f64) -> Complex64) -> Self {
        let ks = self.grid.wavenumbers();
        let nyq = self.grid.n() / 2;
        let mut spec = forward_real(&self.values);
        for (j, z) in spec.iter_mut().enumerate() {
            let s = symbol(ks[j]);
            *z *= if j == nyq {
                Complex64::new(s.re, 0.0)
            } else {
                s
            };
        }
        Self::from_raw(self.grid, inverse_to_real(spec))
    }

    /// Spectral derivative of order 1, 2 or 3.
    pub fn derivative(&self, order: u32) -> Result<Self> {
        if order == 0 || order > 3 {
            return Err(Error::DerivativeOrder(order));
        }
        Ok(self.apply_symbol(|k| Complex64::new(0.0, k).powu(order)))
    }

    pub(crate) fn dx(&self) -> Self {
        self.apply_symbol(|k| Complex64::new(0.0, k))
    }

    pub(crate) fn dxx(&self) -> Self {
        self.apply_symbol(|k| Complex64::new(-k * k, 0.0))
    }

    /// `(1 - ∂²) f`.
    pub fn helmholtz(&self) -> Self {
        self.apply_symbol(|k| Complex64::new(1.0 + k * k, 0.0))
    }

    /// `(1 - ∂²)^{-1} f`.
    pub fn helmholtz_inverse(&self) -> Self {
        self.apply_symbol(|k| Complex64::new(1.0 / (1.0 + k * k), 0.0))
    }

    /// `J f = -∂(1 - ∂²)^{-1} f`.
    pub fn skew_j(&self) -> Self {
        self.apply_symbol(|k| Complex64::new(0.0, -k / (1.0 + k * k)))
    }

    /// Primitive vanishing at the left endpoint, for integrands with negligible mean.
    pub fn antiderivative(&self) -> Result<Antiderivative> {
        self.antiderivative_with_threshold(DEFAULT_MEAN_THRESHOLD)
    }

    pub fn antiderivative_with_threshold(&self, relative: f64) -> Result<Antiderivative> {
        let mean = self.mean();
        let threshold = relative * self.max_abs();
        if mean.abs() > threshold {
            return Err(Error::NonDecaying { mean, threshold });
        }
        Ok(Antiderivative {
            field: self.periodic_primitive(),
            removed_mean: mean,
        })
    }

    /// Mean-free periodic primitive, shifted to vanish at the left endpoint.
    fn periodic_primitive(&self) -> Self {
        let prim = self.apply_symbol(|k| {
            if k == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -1.0 / k)
            }
        });
        let base = prim.values[0];
        Self::from_raw(self.grid, prim.values.iter().map(|v| v - base).collect())
    }

    /// `∫_{x0}^x f` for integrands that decay at both box ends but may carry
    /// nonzero total mass. The result is not periodic.
    pub fn cumulative_integral(&self) -> Self {
        let mean = self.mean();
        let centered = Self::from_raw(self.grid, self.values.iter().map(|v| v - mean).collect());
        let prim = centered.periodic_primitive();
        let x0 = self.grid.x0();
        let vals = prim
            .values
            .iter()
            .enumerate()
            .map(|(i, p)| p + mean * (self.grid.point(i) - x0))
            .collect();
        Self::from_raw(self.grid, vals)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Trapezoid quadrature `∫ f`.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.spacing()
    }

    pub fn inner(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "inner product across grids");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.spacing()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `∫ (f² + f_x²)`.
    pub fn h1_norm_squared(&self) -> f64 {
        let fx = self.dx();
        self.inner(self) + fx.inner(&fx)
    }

    /// `(∫ (f² + f_x²))^{1/2}`.
    pub fn h1_norm(&self) -> f64 {
        self.h1_norm_squared().sqrt()
    }

    /// `(∫ e^{2ax} (f² + f_x²))^{1/2}` with `x` the grid coordinate.
    pub fn weighted_h1_norm(&self, w: WeightParam) -> f64 {
        let fx = self.dx();
        let h = self.grid.spacing();
        let s: f64 = (0..self.len())
            .map(|i| {
                let x = self.grid.point(i);
                (2.0 * w.a() * x).exp() * (self.values[i].powi(2) + fx.values[i].powi(2))
            })
            .sum();
        (s * h).sqrt()
    }

    /// H¹ norm restricted to the points where `mask(x)` holds.
    pub fn h1_norm_on(&self, mask: impl Fn(f64) -> bool) -> f64 {
        let fx = self.dx();
        let h = self.grid.spacing();
        let s: f64 = (0..self.len())
            .filter(|&i| mask(self.grid.point(i)))
            .map(|i| self.values[i].powi(2) + fx.values[i].powi(2))
            .sum();
        (s * h).sqrt()
    }

    /// Quadratic product evaluated on a 3/2-padded grid so no aliasing survives.
    pub fn dealiased_product(&self, other: &Field) -> Self {
        assert_eq!(self.grid, other.grid, "product across grids");
        let n = self.len();
        let m = 3 * n / 2;
        let a = pad_spectrum(&forward_real(&self.values), m);
        let b = pad_spectrum(&forward_real(&other.values), m);
        let pa = inverse_to_real(a);
        let pb = inverse_to_real(b);
        let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let spec = truncate_spectrum(&forward_real(&prod), n);
        Self::from_raw(self.grid, inverse_to_real(spec))
    }

    /// Spectral translation: returns `f(x - s)`.
    pub fn translate(&self, s: f64) -> Self {
        self.apply_symbol(|k| Complex64::from_polar(1.0, -k * s))
    }

    /// Mirror image about the box center: `x_i ↦ 2·x_mid - x_i`.
    pub fn reflect(&self) -> Self {
        let n = self.len();
        let vals = (0..n).map(|i| self.values[(n - i) % n]).collect();
        Self::from_raw(self.grid, vals)
    }

    /// Trigonometric interpolant sampled at `x0 + offset + j h / refine`, `j < n·refine`.
    pub fn resample(&self, refine: usize, offset: f64) -> Vec<f64> {
        let n = self.len();
        let m = n * refine;
        let ks = self.grid.wavenumbers();
        let mut spec = forward_real(&self.values);
        for (j, z) in spec.iter_mut().enumerate() {
            *z *= Complex64::from_polar(1.0, ks[j] * offset);
        }
        let padded = pad_spectrum(&spec, m);
        inverse_to_real(padded)
    }

    /// Value of the trigonometric interpolant at an arbitrary point.
    pub fn interpolate(&self, x: f64) -> f64 {
        let ks = self.grid.wavenumbers();
        let spec = forward_real(&self.values);
        let n = self.len();
        let t = x - self.grid.x0();
        let nyq = n / 2;
        let mut acc = 0.0;
        for (j, z) in spec.iter().enumerate() {
            if j == nyq {
                acc += z.re * (ks[j] * t).cos();
            } else {
                acc += (z * Complex64::from_polar(1.0, ks[j] * t)).re;
            }
        }
        acc / n as f64
    }
}

/// Zero-pad an FFT-ordered spectrum of length `n` to length `m > n`,
/// splitting the Nyquist mode and rescaling so samples keep their amplitude.
pub(crate) fn pad_spectrum(spec: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = spec.len();
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let half = n / 2;
    out[..half].copy_from_slice(&spec[..half]);
    for j in 1..half {
        out[m - j] = spec[n - j];
    }
    out[half] = 0.5 * spec[half];
    out[m - half] = 0.5 * spec[half];
    let scale = m as f64 / n as f64;
    for z in out.iter_mut() {
        *z *= scale;
    }
    out
}

/// Inverse of [`pad_spectrum`]: keep the lowest `n` modes of a length-`m` spectrum.
pub(crate) fn truncate_spectrum(spec: &[Complex64], n: usize) -> Vec<Complex64> {
    let m = spec.len();
    let half = n / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    out[..half].copy_from_slice(&spec[..half]);
    for j in 1..half {
        out[n - j] = spec[m - j];
    }
    out[half] = spec[half] + spec[m - half];
    let scale = n as f64 / m as f64;
    for z in out.iter_mut() {
        *z *= scale;
    }
    out
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        assert_eq!(self.grid, rhs.grid, "sum across grids");
        Field::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        assert_eq!(self.grid, rhs.grid, "difference across grids");
        Field::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scale(rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scale(-1.0)
    }
}

/// Complex samples on a grid (Jost solutions, squared eigenfunctions).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::Grid(format!(
                "expected {} samples, got {}",
                grid.n(),
                values.len()
            )));
        }
        if values
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn re(&self) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|z| z.re).collect())
    }

    pub fn im(&self) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|z| z.im).collect())
    }

    pub fn squared(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|z| z * z).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.spacing()).sqrt()
    }
}
