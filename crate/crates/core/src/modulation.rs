//! Modulated-soliton decomposition and localized energy functionals.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::soliton::{build_profile, SolitonProfile};
use crate::spectral::{Field, Grid};

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];
const PANELS: usize = 32;

/// Composite 8-point Gauss–Legendre rule on `[lo, hi]`.
fn gauss(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let w = (hi - lo) / PANELS as f64;
    let mut acc = 0.0;
    for p in 0..PANELS {
        let mid = lo + (p as f64 + 0.5) * w;
        for (x, wt) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
            let d = 0.5 * w * x;
            acc += wt * (f(mid - d) + f(mid + d));
        }
    }
    0.5 * w * acc
}

fn raw_bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Primitive of `e^{-|y|}` vanishing at `-∞`.
fn exp_primitive(z: f64) -> f64 {
    if z < 0.0 {
        z.exp()
    } else {
        2.0 - (-z).exp()
    }
}

/// The increasing profile `Ψ(z) = ∫_{-∞}^z (φ * e^{-|·|})`, with `φ` the even
/// bump on `[-1, 1]` of mass ½.
#[derive(Debug, Clone, Copy)]
struct PsiProfile {
    norm: f64,
    /// `∫φ(s)e^{s}ds`, equal to `∫φ(s)e^{-s}ds`.
    moment: f64,
}

impl PsiProfile {
    fn new() -> Self {
        let mass = gauss(-1.0, 0.0, raw_bump) + gauss(0.0, 1.0, raw_bump);
        let norm = 0.5 / mass;
        let moment = norm
            * (gauss(-1.0, 0.0, |s| raw_bump(s) * s.exp())
                + gauss(0.0, 1.0, |s| raw_bump(s) * s.exp()));
        Self { norm, moment }
    }

    fn value(&self, z: f64) -> f64 {
        if z <= -1.0 {
            self.moment * z.exp()
        } else if z >= 1.0 {
            1.0 - self.moment * (-z).exp()
        } else {
            let f = |s: f64| self.norm * raw_bump(s) * exp_primitive(z - s);
            gauss(-1.0, z, f) + gauss(z, 1.0, f)
        }
    }
}

/// Sampled `Ψ_K(x - center)` with `Ψ_K(x) = Ψ(x/K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiWeight {
    pub k: f64,
    pub center: f64,
    pub field: Field,
}

/// `Ψ_K(x - center)` on the grid; box coordinates are used without wrapping.
pub fn psi_weight(grid: &Grid, k: f64, center: f64) -> Result<PsiWeight> {
    if !(k >= 1.0) {
        return Err(Error::Parameter(format!("Ψ_K needs K ≥ 1, got {k}")));
    }
    let prof = PsiProfile::new();
    let field = Field::from_fn(*grid, |x| prof.value((x - center) / k))?;
    Ok(PsiWeight { k, center, field })
}

/// `Ψ_K(x)` at a single point.
pub fn psi_value(k: f64, x: f64) -> f64 {
    PsiProfile::new().value(x / k)
}

/// `u = Σ φ_{c_j}(· - x_j) + v` with the orthogonality conditions imposed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationState {
    pub cs: Vec<f64>,
    pub xs: Vec<f64>,
    pub v: Field,
    /// `max_j max(|⟨v, m_j⟩|, |⟨v, m_j'⟩|)`.
    pub ortho_residual: f64,
}

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX: usize = 50;
const FD_STEP: f64 = 1e-6;

struct Decomposer<'a> {
    u: &'a Field,
    omega: f64,
}

impl Decomposer<'_> {
    fn profiles(&self, params: &[f64]) -> Result<Vec<SolitonProfile>> {
        let n = params.len() / 2;
        (0..n)
            .map(|j| {
                let c = params[2 * j];
                if !(c > 2.0 * self.omega) {
                    return Err(Error::Parameter(format!(
                        "c ≤ 2ω (c = {c}) during modulation"
                    )));
                }
                build_profile(c, self.omega, self.u.grid(), params[2 * j + 1])
            })
            .collect()
    }

    fn residual(&self, params: &[f64]) -> Result<(Vec<f64>, Field)> {
        let profs = self.profiles(params)?;
        let mut v = self.u.clone();
        for p in &profs {
            v = &v - &p.phi;
        }
        let mut r = Vec::with_capacity(params.len());
        for p in &profs {
            r.push(v.inner(&p.m));
            r.push(v.inner(&p.m.dx()));
        }
        Ok((r, v))
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Newton iteration on the `2N` orthogonality conditions with a
/// finite-difference Jacobian, started from ordered `(c_j, x_j)` guesses.
pub fn decompose(u: &Field, omega: f64, guesses: &[(f64, f64)]) -> Result<ModulationState> {
    if guesses.is_empty() {
        return Err(Error::Parameter(
            "at least one soliton guess is required".into(),
        ));
    }
    if guesses.windows(2).any(|w| !(w[0].1 < w[1].1)) {
        return Err(Error::Parameter(
            "soliton guesses must have increasing positions".into(),
        ));
    }
    let dec = Decomposer { u, omega };
    let mut params: Vec<f64> = guesses.iter().flat_map(|&(c, x)| [c, x]).collect();
    let dim = params.len();
    for _ in 0..NEWTON_MAX {
        let (r, v) = dec.residual(&params)?;
        let res = max_abs(&r);
        if res < NEWTON_TOL {
            let n = dim / 2;
            let xs: Vec<f64> = (0..n).map(|j| params[2 * j + 1]).collect();
            if xs.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::ModulationTube(
                    "soliton positions lost their order".into(),
                ));
            }
            return Ok(ModulationState {
                cs: (0..n).map(|j| params[2 * j]).collect(),
                xs,
                v,
                ortho_residual: res,
            });
        }
        let mut jac = nalgebra::DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let mut pp = params.clone();
            let mut pm = params.clone();
            pp[k] += FD_STEP;
            pm[k] -= FD_STEP;
            let (rp, _) = dec.residual(&pp)?;
            let (rm, _) = dec.residual(&pm)?;
            for i in 0..dim {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * FD_STEP);
            }
        }
        let rhs = nalgebra::DVector::from_vec(r);
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::ModulationTube("singular modulation Jacobian".into()))?;
        for k in 0..dim {
            params[k] -= step[k];
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::ModulationTube("Newton iterate is not finite".into()));
        }
    }
    Err(Error::ModulationTube(format!(
        "Newton did not converge in {NEWTON_MAX} iterations"
    )))
}

/// Modulation parameters along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationTrack {
    pub times: Vec<f64>,
    pub states: Vec<ModulationState>,
    /// Centered differences of `c_j`, indexed `[snapshot][j]`.
    pub c_dot: Vec<Vec<f64>>,
    pub x_dot: Vec<Vec<f64>>,
    /// Time at which decomposition first failed.
    pub tube_exit: Option<f64>,
}

/// Ratios `|ċ|/‖v‖²_{H¹}` and `|ẋ - c|/‖v‖_{H¹}` along a track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationBounds {
    pub c_dot_ratio: f64,
    pub x_dot_ratio: f64,
    pub max_ortho_residual: f64,
}

impl ModulationTrack {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Position of soliton `j` at every tracked snapshot.
    pub fn positions(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.xs[j]).collect()
    }

    pub fn speeds(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.cs[j]).collect()
    }

    /// Largest ratios over snapshots where `‖v‖_{H¹} > floor`.
    pub fn bounds(&self, floor: f64) -> ModulationBounds {
        let mut out = ModulationBounds {
            c_dot_ratio: 0.0,
            x_dot_ratio: 0.0,
            max_ortho_residual: 0.0,
        };
        for (i, s) in self.states.iter().enumerate() {
            out.max_ortho_residual = out.max_ortho_residual.max(s.ortho_residual);
            let nv = s.v.h1_norm();
            if nv <= floor {
                continue;
            }
            for j in 0..s.cs.len() {
                out.c_dot_ratio = out.c_dot_ratio.max(self.c_dot[i][j].abs() / (nv * nv));
                out.x_dot_ratio = out.x_dot_ratio.max((self.x_dot[i][j] - s.cs[j]).abs() / nv);
            }
        }
        out
    }
}

fn derivative_series(times: &[f64], values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = times.len();
    (0..n)
        .map(|i| {
            let (a, b) = match n {
                0 | 1 => (i, i),
                _ if i == 0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            if a == b {
                return vec![0.0; values[i].len()];
            }
            let dt = times[b] - times[a];
            values[a]
                .iter()
                .zip(&values[b])
                .map(|(x, y)| (y - x) / dt)
                .collect()
        })
        .collect()
}

/// Decompose every snapshot, warm-starting from the previous parameters.
/// A failed decomposition truncates the series and records the time.
pub fn track(traj: &Trajectory, omega: f64, init: &[(f64, f64)]) -> Result<ModulationTrack> {
    let mut times = Vec::new();
    let mut states: Vec<ModulationState> = Vec::new();
    let mut tube_exit = None;
    let mut guess = init.to_vec();
    for (t, u) in traj.times.iter().zip(&traj.states) {
        if let (Some(last), Some(&tp)) = (states.last(), times.last()) {
            let dt: f64 = t - tp;
            guess = last
                .cs
                .iter()
                .zip(&last.xs)
                .map(|(&c, &x)| (c, x + c * dt))
                .collect();
        }
        match decompose(u, omega, &guess) {
            Ok(s) => {
                times.push(*t);
                states.push(s);
            }
            Err(Error::ModulationTube(_)) | Err(Error::Parameter(_)) => {
                tube_exit = Some(*t);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if states.is_empty() {
        return Err(Error::ModulationTube(
            "initial state is outside the modulation tube".into(),
        ));
    }
    let cs: Vec<Vec<f64>> = states.iter().map(|s| s.cs.clone()).collect();
    let xs: Vec<Vec<f64>> = states.iter().map(|s| s.xs.clone()).collect();
    Ok(ModulationTrack {
        c_dot: derivative_series(&times, &cs),
        x_dot: derivative_series(&times, &xs),
        times,
        states,
        tube_exit,
    })
}

/// Parameters of the localized functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalParams {
    pub x0: f64,
    pub k: f64,
    pub alpha: f64,
    /// Lower bound `c₁ > 2ω` for the soliton speeds.
    pub c1: f64,
    pub omega: f64,
}

impl FunctionalParams {
    /// Smallest admissible `K`: `sqrt((1-α)²c₁/((1-α)²c₁ - 2ω))`.
    pub fn k_min(&self) -> Result<f64> {
        let s = (1.0 - self.alpha).powi(2) * self.c1;
        if !(self.alpha > 0.0 && self.alpha < 1.0 && s > 2.0 * self.omega) {
            return Err(Error::Parameter(format!(
                "need 0 < α < 1 and (1-α)²c₁ > 2ω (α = {}, c₁ = {}, ω = {})",
                self.alpha, self.c1, self.omega
            )));
        }
        Ok((s / (s - 2.0 * self.omega)).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let kmin = self.k_min()?;
        if !(self.k > kmin) {
            return Err(Error::Parameter(format!(
                "K = {} must exceed sqrt((1-α)²c₁/((1-α)²c₁ - 2ω)) = {kmin:.6}",
                self.k
            )));
        }
        if !(self.x0 > 0.0) {
            return Err(Error::Parameter(format!(
                "x0 = {} must be positive",
                self.x0
            )));
        }
        Ok(())
    }
}

/// Localized energies along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSeries {
    pub params: FunctionalParams,
    pub times: Vec<f64>,
    /// `½∫(u² + u_x²)Ψ_K(x - x(t) + x0)`.
    pub e_r: Vec<f64>,
    /// `½∫(u² + u_x²)(1 - Ψ_K(x - x(t) + x0))`.
    pub e_l: Vec<f64>,
    /// `½∫(u³ + u u_x² + 2ωu²)Ψ_K(x - x(t) + x0)`.
    pub f_r: Vec<f64>,
    /// `E(u)` by the same quadrature.
    pub e_total: Vec<f64>,
}

fn densities(u: &Field, omega: f64) -> (Vec<f64>, Vec<f64>) {
    let ux = u.dx();
    let e = u
        .values()
        .iter()
        .zip(ux.values())
        .map(|(a, b)| 0.5 * (a * a + b * b))
        .collect();
    let f = u
        .values()
        .iter()
        .zip(ux.values())
        .map(|(a, b)| 0.5 * (a * a * a + a * b * b + 2.0 * omega * a * a))
        .collect();
    (e, f)
}

fn weighted_sum(density: &[f64], weight: &[f64], h: f64) -> f64 {
    density.iter().zip(weight).map(|(d, w)| d * w).sum::<f64>() * h
}

/// `E_R`, `E_L`, `F_R` at each snapshot with the weight centred at `x(t) - x0`.
pub fn functionals(
    traj: &Trajectory,
    x_of_t: &[f64],
    params: FunctionalParams,
) -> Result<FunctionalSeries> {
    params.validate()?;
    if x_of_t.len() > traj.len() {
        return Err(Error::Parameter("more positions than snapshots".into()));
    }
    let mut out = FunctionalSeries {
        params,
        times: Vec::new(),
        e_r: Vec::new(),
        e_l: Vec::new(),
        f_r: Vec::new(),
        e_total: Vec::new(),
    };
    for (i, &x) in x_of_t.iter().enumerate() {
        let u = &traj.states[i];
        let h = u.grid().spacing();
        let psi = psi_weight(u.grid(), params.k, x - params.x0)?;
        let (e, f) = densities(u, params.omega);
        let er = weighted_sum(&e, psi.field.values(), h);
        let total = e.iter().sum::<f64>() * h;
        let comp: Vec<f64> = psi.field.values().iter().map(|p| 1.0 - p).collect();
        out.times.push(traj.times[i]);
        out.e_r.push(er);
        out.e_l.push(weighted_sum(&e, &comp, h));
        out.f_r.push(weighted_sum(&f, psi.field.values(), h));
        out.e_total.push(total);
    }
    Ok(out)
}

/// `max_{t' ≤ t}(s(t) - s(t'))⁺`: how far a series rises above its past values.
fn rise(series: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    let mut worst: f64 = 0.0;
    for &v in series {
        best = best.min(v);
        worst = worst.max(v - best);
    }
    worst
}

impl FunctionalSeries {
    /// Smallest `C` with `E_R(t) ≤ E_R(t') + Ce^{-x0/K}` for all sampled `t' ≤ t`.
    pub fn e_r_constant(&self) -> f64 {
        rise(&self.e_r) * (self.params.x0 / self.params.k).exp()
    }

    /// Smallest `C` with `E_L(t) ≥ E_L(t') - Ce^{-x0/K}` for all sampled `t' ≤ t`.
    pub fn e_l_constant(&self) -> f64 {
        let neg: Vec<f64> = self.e_l.iter().map(|v| -v).collect();
        rise(&neg) * (self.params.x0 / self.params.k).exp()
    }

    /// Smallest `C` with `F_R(t) ≤ F_R(t') + Ce^{-x0/K}` for all sampled `t' ≤ t`.
    pub fn f_r_constant(&self) -> f64 {
        rise(&self.f_r) * (self.params.x0 / self.params.k).exp()
    }

    /// `max_t |E_R + E_L - E|/E`.
    pub fn split_error(&self) -> f64 {
        self.e_r
            .iter()
            .zip(&self.e_l)
            .zip(&self.e_total)
            .map(|((r, l), e)| ((r + l - e) / e).abs())
            .fold(0.0, f64::max)
    }
}

/// `E_{x0,t0}(t) = ∫(u² + u_x²)Ψ_K(x - x(t) - x0 - α(x(t0) - x(t)))` for every snapshot.
pub fn energy_window(
    traj: &Trajectory,
    x_of_t: &[f64],
    params: FunctionalParams,
    t0_index: usize,
) -> Result<Vec<f64>> {
    params.validate()?;
    let xt0 = *x_of_t
        .get(t0_index)
        .ok_or_else(|| Error::Parameter("t0 index out of range".into()))?;
    x_of_t
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let u = &traj.states[i];
            let psi = psi_weight(u.grid(), params.k, x + params.x0 + params.alpha * (xt0 - x))?;
            let (e, _) = densities(u, params.omega);
            Ok(2.0 * weighted_sum(&e, psi.field.values(), u.grid().spacing()))
        })
        .collect()
}

/// `F_{x0,t0}(t) = ½∫(u³ + u u_x² + 2ωu²)Ψ_K(x - x(t) + x0 - α(x(t0) - x(t)))`.
pub fn momentum_window(
    traj: &Trajectory,
    x_of_t: &[f64],
    params: FunctionalParams,
    t0_index: usize,
) -> Result<Vec<f64>> {
    params.validate()?;
    let xt0 = *x_of_t
        .get(t0_index)
        .ok_or_else(|| Error::Parameter("t0 index out of range".into()))?;
    x_of_t
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let u = &traj.states[i];
            let psi = psi_weight(u.grid(), params.k, x - params.x0 + params.alpha * (xt0 - x))?;
            let (_, f) = densities(u, params.omega);
            Ok(weighted_sum(&f, psi.field.values(), u.grid().spacing()))
        })
        .collect()
}

/// Radius outside which the H¹ norm stays below `eps` at every snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub radius: f64,
    pub per_snapshot: Vec<f64>,
}

/// Smallest `R` with `‖u(t)‖_{H¹(|x - x(t)| > R)} < eps` for one state.
fn radius_of(u: &Field, center: f64, eps: f64) -> f64 {
    let ux = u.dx();
    let g = u.grid();
    let h = g.spacing();
    let mut pts: Vec<(f64, f64)> = (0..u.len())
        .map(|i| {
            (
                (g.point(i) - center).abs(),
                (u.values()[i].powi(2) + ux.values()[i].powi(2)) * h,
            )
        })
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let target = eps * eps;
    let mut acc = 0.0;
    for (d, w) in pts {
        if acc + w >= target {
            return d;
        }
        acc += w;
    }
    0.0
}

pub fn localization_radius(traj: &Trajectory, x_of_t: &[f64], eps: f64) -> LocalizationReport {
    let per_snapshot: Vec<f64> = x_of_t
        .iter()
        .zip(&traj.states)
        .map(|(&x, u)| radius_of(u, x, eps))
        .collect();
    LocalizationReport {
        radius: per_snapshot.iter().copied().fold(0.0, f64::max),
        per_snapshot,
    }
}

/// Tail norms of a tracked run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSeries {
    pub times: Vec<f64>,
    /// `‖u‖_{H¹(x > origin + 2ωt)}`.
    pub u_far: Vec<f64>,
    /// `‖v‖_{H¹(x > origin + 2ωt)}`, i.e. the distance to the modulated soliton there.
    pub v_far: Vec<f64>,
    /// `‖v‖_{H¹(x > x(t) - offset)}`.
    pub v_near: Vec<f64>,
}

pub fn right_tail_decay(
    track: &ModulationTrack,
    traj: &Trajectory,
    omega: f64,
    origin: f64,
    offset: f64,
) -> TailSeries {
    let mut out = TailSeries {
        times: Vec::new(),
        u_far: Vec::new(),
        v_far: Vec::new(),
        v_near: Vec::new(),
    };
    for (i, s) in track.states.iter().enumerate() {
        let t = track.times[i];
        let u = &traj.states[i];
        let front = origin + 2.0 * omega * t;
        let xr = s.xs[s.xs.len() - 1] - offset;
        out.times.push(t);
        out.u_far.push(u.h1_norm_on(|x| x > front));
        out.v_far.push(s.v.h1_norm_on(|x| x > front));
        out.v_near.push(s.v.h1_norm_on(|x| x > xr));
    }
    out
}
