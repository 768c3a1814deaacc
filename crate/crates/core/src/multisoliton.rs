//! Multi-soliton data: superpositions, the reflectionless two-soliton built
//! from scattering data, and soliton-train stability runs.

use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, EvolutionConfig};
use crate::error::{Error, Result};
use crate::modulation::{decompose, track, ModulationState};
use crate::perturb::localized_random;
use crate::soliton::{
    build_profile, closed_form_invariants, kappa_of, soliton_field, SolitonParams,
};
use crate::spectral::{Field, Grid};
use crate::stats::linear_fit;

/// Sum of solitons with a record of how strongly they overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct Superposition {
    pub field: Field,
    pub min_gap: f64,
    /// Largest `|⟨(1 - ∂²)φ_j, φ_k⟩|` over pairs.
    pub cross_term: f64,
    /// Set when a gap is below 10 or the cross term exceeds 1e-5.
    pub overlap: bool,
}

pub const MIN_GAP: f64 = 10.0;
const CROSS_LIMIT: f64 = 1e-5;

/// `Σ_j φ_{c_j}(· - x_j)` for `(c_j, x_j)` pairs.
pub fn superposition(params: &[(f64, f64)], omega: f64, grid: &Grid) -> Result<Superposition> {
    if params.is_empty() {
        return Err(Error::Parameter("empty soliton list".into()));
    }
    let profs = params
        .iter()
        .map(|&(c, x)| build_profile(c, omega, grid, x))
        .collect::<Result<Vec<_>>>()?;
    let mut field = Field::zeros(*grid);
    for p in &profs {
        field = &field + &p.phi;
    }
    let mut xs: Vec<f64> = params.iter().map(|p| p.1).collect();
    xs.sort_by(f64::total_cmp);
    let min_gap = xs
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let mut cross: f64 = 0.0;
    for j in 0..profs.len() {
        for k in 0..profs.len() {
            if j != k {
                cross = cross.max(profs[j].m.inner(&profs[k].phi).abs());
            }
        }
    }
    Ok(Superposition {
        field,
        min_gap,
        cross_term: cross,
        overlap: min_gap < MIN_GAP || cross > CROSS_LIMIT,
    })
}

/// Discrete scattering data of a reflectionless potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSolitonSpec {
    pub kappas: Vec<f64>,
    /// Norming constants `C_n⁺(0) > 0`.
    pub norming: Vec<f64>,
    pub omega: f64,
}

impl NSolitonSpec {
    pub fn new(kappas: Vec<f64>, norming: Vec<f64>, omega: f64) -> Result<Self> {
        let s = Self {
            kappas,
            norming,
            omega,
        };
        s.validate()?;
        Ok(s)
    }

    /// Spec with `κ_n` matching the given speeds.
    pub fn from_speeds(speeds: &[f64], norming: Vec<f64>, omega: f64) -> Result<Self> {
        for &c in speeds {
            SolitonParams::new(c, omega, 0.0)?;
        }
        Self::new(
            speeds.iter().map(|&c| kappa_of(c, omega)).collect(),
            norming,
            omega,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(Error::Parameter("ω must be positive".into()));
        }
        if self.kappas.is_empty() || self.kappas.len() > 2 {
            return Err(Error::Parameter(format!(
                "N = {} not supported (1 ≤ N ≤ 2)",
                self.kappas.len()
            )));
        }
        if self.norming.len() != self.kappas.len() || self.norming.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Parameter(
                "one positive norming constant per eigenvalue".into(),
            ));
        }
        if self.kappas.iter().any(|k| !(*k > 0.0 && *k < 0.5))
            || self.kappas.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(Error::Parameter("need 0 < κ_1 < … < κ_N < 1/2".into()));
        }
        Ok(())
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.kappas
            .iter()
            .map(|k| 2.0 * self.omega / (1.0 - 4.0 * k * k))
            .collect()
    }

    /// `ln C_n⁺(t)`, with `C_n⁺(t) = C_n⁺(0)exp(4ωκ_n t/(1 - 4κ_n²))`.
    fn ln_norming(&self, t: f64) -> Vec<f64> {
        self.kappas
            .iter()
            .zip(&self.norming)
            .map(|(k, c)| c.ln() + 4.0 * self.omega * k * t / (1.0 - 4.0 * k * k))
            .collect()
    }

    /// `Σ_n ln((1 + 2κ_n)/(1 - 2κ_n))²`.
    pub fn lambda(&self) -> f64 {
        self.kappas
            .iter()
            .map(|k| 2.0 * ((1.0 + 2.0 * k) / (1.0 - 2.0 * k)).ln())
            .sum()
    }
}

/// The bracket `1 - Σ_{n,p} C_n y^{-2κ_n}(A^{-1})_{np}/(κ_n + ½)` at `y = e^s`,
/// in a closed form that stays finite for extreme `y`.
fn bracket(kappas: &[f64], ln_c: &[f64], s: f64) -> f64 {
    let q: Vec<f64> = kappas.iter().map(|k| 1.0 / (k + 0.5)).collect();
    match kappas.len() {
        1 => {
            let ly = ln_c[0] - 2.0 * kappas[0] * s;
            let k11 = 0.5 / kappas[0];
            let ratio = if ly > 0.0 {
                q[0] / ((-ly).exp() + k11)
            } else {
                let y = ly.exp();
                q[0] * y / (1.0 + y * k11)
            };
            1.0 - ratio
        }
        _ => {
            let (k1, k2) = (kappas[0], kappas[1]);
            let (a11, a22, a12) = (0.5 / k1, 0.5 / k2, 1.0 / (k1 + k2));
            let l1 = ln_c[0] - 2.0 * k1 * s;
            let l2 = ln_c[1] - 2.0 * k2 * s;
            let top = 0.0f64.max(l1).max(l2).max(l1 + l2);
            let e = |x: f64| (x - top).exp();
            let num = q[0] * e(l1)
                + q[1] * e(l2)
                + e(l1 + l2) * (q[0] * (a22 - a12) + q[1] * (a11 - a12));
            let den = e(0.0) + a11 * e(l1) + a22 * e(l2) + e(l1 + l2) * (a11 * a22 - a12 * a12);
            1.0 - num / den
        }
    }
}

const MARGIN: f64 = 40.0;
const BASE_STEP: f64 = 4e-3;
const MAX_LEVELS: usize = 5;

fn parametric_samples(spec: &NSolitonSpec, t: f64, grid: &Grid, ds: f64) -> Vec<f64> {
    let ln_c = spec.ln_norming(t);
    let lam = spec.lambda();
    let x_lo = grid.x0();
    let x_hi = grid.x0() + grid.length();
    let s0 = x_lo - MARGIN - lam;
    let s1 = x_hi + MARGIN + lam;
    let m = ((s1 - s0) / ds).ceil() as usize + 1;
    let s: Vec<f64> = (0..m).map(|i| s0 + i as f64 * ds).collect();
    let b: Vec<f64> = s
        .iter()
        .map(|&si| bracket(&spec.kappas, &ln_c, si))
        .collect();
    // I(s) = ∫_0^{e^s} B^{-2} dy, with B constant below s0.
    let dens: Vec<f64> = s
        .iter()
        .zip(&b)
        .map(|(si, bi)| si.exp() / (bi * bi))
        .collect();
    let mut big_i = vec![dens[0]; m];
    for i in 1..m {
        big_i[i] = big_i[i - 1] + 0.5 * ds * (dens[i - 1] + dens[i]);
    }
    let g: Vec<f64> = big_i.iter().map(|v| v.ln()).collect();
    let w: Vec<f64> = big_i.iter().zip(&dens).map(|(i, d)| i / d).collect();

    // Prefix sums of e^{g}w from the left and e^{-g}w from the right.
    let up: Vec<f64> = g.iter().zip(&w).map(|(g, w)| g.exp() * w).collect();
    let down: Vec<f64> = g.iter().zip(&w).map(|(g, w)| (-g).exp() * w).collect();
    let mut left = vec![0.0; m];
    for i in 1..m {
        left[i] = left[i - 1] + 0.5 * ds * (up[i - 1] + up[i]);
    }
    let mut right = vec![0.0; m];
    for i in (0..m - 1).rev() {
        right[i] = right[i + 1] + 0.5 * ds * (down[i] + down[i + 1]);
    }
    let left_tail = g[0].exp();
    let right_tail = (-g[m - 1]).exp() * w[m - 1] * w[m - 1];

    grid.points()
        .into_iter()
        .map(|x| {
            let j = g.partition_point(|&gi| gi <= x);
            let integral = if j == 0 {
                x.exp() * (right[0] + right_tail) + (g[0] - x).exp()
            } else if j == m {
                (-x).exp() * (left[m - 1] + left_tail) + right_tail * x.exp()
            } else {
                let i = j - 1;
                let frac = (x - g[i]) / (g[j] - g[i]);
                let ws = w[i] + frac * (w[j] - w[i]);
                let sl = frac * ds;
                let sr = ds - sl;
                let lower = left[i] + left_tail + 0.5 * sl * (up[i] + x.exp() * ws);
                let upper = right[j] + right_tail + 0.5 * sr * ((-x).exp() * ws + down[j]);
                (-x).exp() * lower + x.exp() * upper
            };
            0.5 * spec.omega * integral - spec.omega
        })
        .collect()
}

/// Evaluate `u(t, ·)` of the reflectionless solution on the grid by quadrature
/// in `s = ln ξ`, halving the step until successive results agree to 1e-6.
pub fn exact_n_soliton(spec: &NSolitonSpec, t: f64, grid: &Grid) -> Result<Field> {
    spec.validate()?;
    let mut ds = BASE_STEP;
    let mut prev = parametric_samples(spec, t, grid, ds);
    let mut diff = f64::INFINITY;
    for _ in 0..MAX_LEVELS {
        ds *= 0.5;
        let next = parametric_samples(spec, t, grid, ds);
        diff = prev
            .iter()
            .zip(&next)
            .fold(0.0, |a: f64, (p, q)| a.max((p - q).abs()));
        prev = next;
        if diff < 1e-6 {
            break;
        }
    }
    if !(diff <= 1e-4) {
        return Err(Error::Quadrature(format!(
            "refinement disagreement {diff:.3e}"
        )));
    }
    Field::new(*grid, prev)
}

/// Local maxima of `u`, highest first, returned as `(c, x)` guesses sorted by position.
pub fn peak_guesses(u: &Field, omega: f64, count: usize) -> Vec<(f64, f64)> {
    let n = u.len();
    let v = u.values();
    let g = u.grid();
    let mut peaks: Vec<(f64, f64)> = (0..n)
        .filter(|&i| v[i] > v[(i + n - 1) % n] && v[i] >= v[(i + 1) % n])
        .map(|i| (v[i], g.point(i)))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    peaks.truncate(count);
    let mut out: Vec<(f64, f64)> = peaks
        .into_iter()
        .map(|(h, x)| (h + 2.0 * omega, x))
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    out
}

/// Decompose into `count` modulated solitons seeded from the highest peaks.
pub fn fit_superposition(u: &Field, omega: f64, count: usize) -> Result<ModulationState> {
    let guesses = peak_guesses(u, omega, count);
    if guesses.len() < count {
        return Err(Error::ModulationTube(format!(
            "found {} peaks, need {count}",
            guesses.len()
        )));
    }
    decompose(u, omega, &guesses)
}

/// Random localized perturbation added to the initial train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Sup-norm relative to the tallest soliton.
    pub relative_amplitude: f64,
    pub max_mode: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub omega: f64,
    pub speeds: Vec<f64>,
    pub positions: Vec<f64>,
    /// Required minimal initial gap.
    pub min_gap: f64,
    pub perturbation: Option<Perturbation>,
    pub n: usize,
    pub length: f64,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_stride: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speeds.is_empty() || self.speeds.len() != self.positions.len() {
            return Err(Error::Parameter("one position per speed".into()));
        }
        if !(self.speeds[0] > 2.0 * self.omega) {
            return Err(Error::Parameter(format!(
                "c ≤ 2ω (c_1 = {})",
                self.speeds[0]
            )));
        }
        if self.speeds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Parameter(
                "speeds must be strictly increasing".into(),
            ));
        }
        if self
            .positions
            .windows(2)
            .any(|w| !(w[1] - w[0] >= self.min_gap))
        {
            return Err(Error::Parameter(format!(
                "positions must increase with gaps ≥ {}",
                self.min_gap
            )));
        }
        let max_gap = self
            .positions
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        let cmax = self.speeds[self.speeds.len() - 1];
        let need = 2.0 * (max_gap + cmax * self.t_end);
        if self.length < need {
            return Err(Error::GridTooSmall(format!(
                "box length {} < {need}",
                self.length
            )));
        }
        Ok(())
    }

    fn grid(&self) -> Result<Grid> {
        Grid::centered(self.n, self.length)
    }

    /// `σ₀ = ¼ min{2ω, 2sqrt(1 - 2ω/c₁), c₁ - 2ω, c_{j+1} - c_j}`.
    pub fn sigma0(&self) -> f64 {
        let c1 = self.speeds[0];
        let mut m = (2.0 * self.omega)
            .min(2.0 * (1.0 - 2.0 * self.omega / c1).sqrt())
            .min(c1 - 2.0 * self.omega);
        for w in self.speeds.windows(2) {
            m = m.min(w[1] - w[0]);
        }
        0.25 * m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub times: Vec<f64>,
    /// `c_j(t)` per snapshot.
    pub speeds: Vec<Vec<f64>>,
    pub positions: Vec<Vec<f64>>,
    /// `‖u(t) - Σ φ_{c_j⁰}(· - x_j(t))‖_{H¹}` per snapshot.
    pub distance: Vec<f64>,
    pub sup_distance: f64,
    /// `‖u(0) - Σ φ_{c_j⁰}(· - x_j⁰)‖_{H¹}`.
    pub epsilon: f64,
    pub min_gap: f64,
    pub gamma0: f64,
    /// `sup_t distance / (ε + e^{-γ₀L})`.
    pub fitted_a: f64,
    pub ordering_preserved: bool,
    /// Least-squares slopes of `x_{j+1}(t) - x_j(t)`.
    pub gap_slopes: Vec<f64>,
    /// `‖v(t)‖_{H¹(x > x_1⁰ + 2ωt)}` per snapshot.
    pub tail_norms: Vec<f64>,
    /// Largest rise of `F(φ_{c_j(t)})` above its past values, per soliton.
    pub f_rise: Vec<f64>,
    pub tube_exit: Option<f64>,
}

/// Evolve a perturbed train, track its modulation and measure the orbital bound.
pub fn train_experiment(cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let pairs: Vec<(f64, f64)> = cfg
        .speeds
        .iter()
        .copied()
        .zip(cfg.positions.iter().copied())
        .collect();
    let base = superposition(&pairs, cfg.omega, &grid)?;
    let mut u0 = base.field.clone();
    if let Some(p) = cfg.perturbation {
        let first = cfg.positions[0];
        let last = cfg.positions[cfg.positions.len() - 1];
        let height = cfg.speeds[cfg.speeds.len() - 1] - 2.0 * cfg.omega;
        let pert = localized_random(
            &grid,
            p.max_mode,
            p.relative_amplitude * height,
            0.5 * (first + last),
            0.5 * (last - first) + MIN_GAP,
            p.seed,
        );
        u0 = &u0 + &pert;
    }
    let epsilon = (&u0 - &base.field).h1_norm();
    let ecfg = EvolutionConfig::new(cfg.dt, cfg.t_end, cfg.omega).with_stride(cfg.snapshot_stride);
    let traj = evolve(&u0, &ecfg)?;
    let tr = track(&traj, cfg.omega, &pairs)?;

    let mut distance = Vec::with_capacity(tr.len());
    let mut tail_norms = Vec::with_capacity(tr.len());
    let mut ordering = true;
    for (i, s) in tr.states.iter().enumerate() {
        let at_initial: Vec<(f64, f64)> = cfg
            .speeds
            .iter()
            .copied()
            .zip(s.xs.iter().copied())
            .collect();
        let mut sum = Field::zeros(grid);
        for &(c, x) in &at_initial {
            sum = &sum + &soliton_field(&SolitonParams::new(c, cfg.omega, x)?, &grid)?;
        }
        distance.push((&traj.states[i] - &sum).h1_norm());
        let front = cfg.positions[0] + 2.0 * cfg.omega * tr.times[i];
        tail_norms.push(s.v.h1_norm_on(|x| x > front));
        ordering &= s.cs.windows(2).all(|w| w[0] < w[1]) && s.xs.windows(2).all(|w| w[0] < w[1]);
    }
    let sup_distance = distance.iter().copied().fold(0.0, f64::max);
    let min_gap = cfg
        .positions
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let min_gap = if min_gap.is_finite() { min_gap } else { 0.0 };
    let gamma0 = 0.25 * cfg.sigma0();
    let fitted_a = sup_distance / (epsilon + (-gamma0 * min_gap).exp());

    let n_sol = cfg.speeds.len();
    let mut gap_slopes = Vec::new();
    for j in 0..n_sol.saturating_sub(1) {
        let pts: Vec<(f64, f64)> = tr
            .times
            .iter()
            .zip(&tr.states)
            .map(|(t, s)| (*t, s.xs[j + 1] - s.xs[j]))
            .collect();
        gap_slopes.push(if pts.len() >= 2 {
            linear_fit(&pts)?.slope
        } else {
            f64::NAN
        });
    }
    let mut f_rise = Vec::with_capacity(n_sol);
    for j in 0..n_sol {
        let mut best = f64::INFINITY;
        let mut worst: f64 = 0.0;
        for s in &tr.states {
            let f = closed_form_invariants(s.cs[j], cfg.omega)?.h2;
            best = best.min(f);
            worst = worst.max(f - best);
        }
        f_rise.push(worst);
    }
    Ok(TrainReport {
        speeds: tr.states.iter().map(|s| s.cs.clone()).collect(),
        positions: tr.states.iter().map(|s| s.xs.clone()).collect(),
        times: tr.times,
        distance,
        sup_distance,
        epsilon,
        min_gap,
        gamma0,
        fitted_a,
        ordering_preserved: ordering,
        gap_slopes,
        tail_norms,
        f_rise,
        tube_exit: tr.tube_exit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::shift_minimized_distance;

    #[test]
    fn single_superposition_is_profile() {
        let g = Grid::centered(1024, 80.0).unwrap();
        let s = superposition(&[(4.0, 3.0)], 1.0, &g).unwrap();
        assert_eq!(s.field, build_profile(4.0, 1.0, &g, 3.0).unwrap().phi);
        assert!(!s.overlap);
    }

    #[test]
    fn separated_pair_barely_interacts() {
        let g = Grid::centered(2048, 160.0).unwrap();
        let s = superposition(&[(3.0, -15.0), (5.0, 15.0)], 1.0, &g).unwrap();
        assert!(s.cross_term < 1e-5, "{}", s.cross_term);
        for (c, x) in [(3.0, -15.0), (5.0, 15.0)] {
            assert!((s.field.interpolate(x) - (c - 2.0)).abs() < 1e-4);
        }
        assert!(
            superposition(&[(3.0, 0.0), (5.0, 5.0)], 1.0, &g)
                .unwrap()
                .overlap
        );
    }

    #[test]
    fn bracket_limits() {
        let k = 0.35;
        let b0 = bracket(&[k], &[0.0], -300.0);
        assert!((b0 - (0.5 - k) / (0.5 + k)).abs() < 1e-12);
        assert!((bracket(&[k], &[0.0], 300.0) - 1.0).abs() < 1e-12);
        let b2 = bracket(&[0.2, 0.4], &[0.0, 0.0], -400.0);
        assert!(b2.is_finite() && b2 > 0.0);
    }

    #[test]
    fn one_soliton_matches_profile() {
        let g = Grid::centered(1024, 80.0).unwrap();
        let spec = NSolitonSpec::from_speeds(&[4.0], vec![1.0], 1.0).unwrap();
        let u = exact_n_soliton(&spec, 0.0, &g).unwrap();
        let guess = peak_guesses(&u, 1.0, 1)[0];
        let phi = build_profile(4.0, 1.0, &g, guess.1).unwrap().phi;
        let (d, _) = shift_minimized_distance(&u, &phi, 0.0);
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn one_soliton_moves_at_speed_c() {
        let g = Grid::centered(1024, 80.0).unwrap();
        let spec = NSolitonSpec::from_speeds(&[4.0], vec![1.0], 1.0).unwrap();
        let a = fit_superposition(&exact_n_soliton(&spec, -2.0, &g).unwrap(), 1.0, 1).unwrap();
        let b = fit_superposition(&exact_n_soliton(&spec, 2.0, &g).unwrap(), 1.0, 1).unwrap();
        assert!(((b.xs[0] - a.xs[0]) / 4.0 - 4.0).abs() < 1e-4);
    }

    #[test]
    fn two_soliton_separates() {
        let spec = NSolitonSpec::from_speeds(&[3.0, 5.0], vec![1.0, 1.0], 1.0).unwrap();
        let mut fitted = Vec::new();
        for t in [-15.0, 15.0] {
            let g = Grid::new(2048, 160.0, 60.0 * t / 15.0 - 80.0).unwrap();
            let u = exact_n_soliton(&spec, t, &g).unwrap();
            let s = fit_superposition(&u, 1.0, 2).unwrap();
            assert!(s.v.h1_norm() < 5e-3, "t={t} {}", s.v.h1_norm());
            let mut cs = s.cs.clone();
            cs.sort_by(f64::total_cmp);
            fitted.push(cs);
        }
        for j in 0..2 {
            assert!((fitted[0][j] - fitted[1][j]).abs() < 1e-3, "{fitted:?}");
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(NSolitonSpec::new(vec![0.3, 0.2], vec![1.0, 1.0], 1.0).is_err());
        assert!(NSolitonSpec::new(vec![0.1, 0.2, 0.3], vec![1.0; 3], 1.0).is_err());
        let cfg = TrainConfig {
            omega: 1.0,
            speeds: vec![5.0, 3.0],
            positions: vec![-100.0, -70.0],
            min_gap: 10.0,
            perturbation: None,
            n: 4096,
            length: 320.0,
            dt: 0.01,
            t_end: 20.0,
            snapshot_stride: 100,
        };
        assert!(cfg.validate().is_err());
    }
}
