//! Pseudo-spectral RK4 integration of the Camassa–Holm equation in the
//! nonlocal form `u_t = -u u_x - ∂(1 - ∂²)^{-1}(u² + ½u_x² + 2ωu)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::soliton::{numeric_invariants, Invariants};
use crate::spectral::Field;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub dealias: bool,
    pub snapshot_stride: usize,
    pub omega: f64,
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_end: f64, omega: f64) -> Self {
        Self {
            dt,
            t_end,
            dealias: true,
            snapshot_stride: 100,
            omega,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn with_dealias(mut self, dealias: bool) -> Self {
        self.dealias = dealias;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Parameter(format!(
                "t_end = {} must be ≥ 0",
                self.t_end
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Parameter("snapshot_stride must be ≥ 1".into()));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::Parameter("omega must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Snapshots of an evolution with the conserved quantities at each stored time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub invariants: Vec<Invariants>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&Field> {
        self.states.last()
    }

    /// Largest relative drift of `E` and `F` from their initial values.
    pub fn invariant_drift(&self) -> (f64, f64) {
        let Some(first) = self.invariants.first() else {
            return (0.0, 0.0);
        };
        let rel = |a: f64, b: f64| {
            if b == 0.0 {
                a.abs()
            } else {
                (a - b).abs() / b.abs()
            }
        };
        self.invariants.iter().fold((0.0, 0.0), |(de, df), inv| {
            (de.max(rel(inv.e, first.e)), df.max(rel(inv.f, first.f)))
        })
    }
}

fn product(a: &Field, b: &Field, dealias: bool) -> Field {
    if dealias {
        a.dealiased_product(b)
    } else {
        a.pointwise(b)
    }
}

/// `-u u_x - ∂(1 - ∂²)^{-1}(u² + ½u_x² + 2ωu)`, with de-aliased quadratic products.
pub fn ch_rhs(u: &Field, omega: f64) -> Field {
    ch_rhs_with(u, omega, true)
}

pub fn ch_rhs_with(u: &Field, omega: f64, dealias: bool) -> Field {
    let ux = u.dx();
    let uux = product(u, &ux, dealias);
    let nl =
        &(&product(u, u, dealias) + &product(&ux, &ux, dealias).scale(0.5)) + &u.scale(2.0 * omega);
    let nonlocal = nl.helmholtz_inverse().dx();
    -&(&uux + &nonlocal)
}

/// The same vector field written as `J δH₂/δu` with
/// `δH₂/δu = (3/2)u² + ½u_x² + 2ωu - (u u_x)_x`.
pub fn ch_rhs_hamiltonian(u: &Field, omega: f64) -> Field {
    let ux = u.dx();
    let uux = u.dealiased_product(&ux);
    let grad = &(&(&u.dealiased_product(u).scale(1.5) + &ux.dealiased_product(&ux).scale(0.5))
        + &u.scale(2.0 * omega))
        - &uux.dx();
    grad.skew_j()
}

fn rk4_step(u: &Field, dt: f64, omega: f64, dealias: bool) -> Field {
    let k1 = ch_rhs_with(u, omega, dealias);
    let k2 = ch_rhs_with(&(u + &k1.scale(0.5 * dt)), omega, dealias);
    let k3 = ch_rhs_with(&(u + &k2.scale(0.5 * dt)), omega, dealias);
    let k4 = ch_rhs_with(&(u + &k3.scale(dt)), omega, dealias);
    let incr = &(&(&k1 + &k2.scale(2.0)) + &k3.scale(2.0)) + &k4;
    u + &incr.scale(dt / 6.0)
}

/// Time step limit `0.5·h / max|u|` enforced by [`evolve`].
pub fn cfl_limit(u: &Field) -> f64 {
    let umax = u.max_abs();
    if umax == 0.0 {
        f64::INFINITY
    } else {
        0.5 * u.grid().spacing() / umax
    }
}

/// Classical RK4 from `u0` to `cfg.t_end`, storing every `snapshot_stride`-th state
/// and the final one.
pub fn evolve(u0: &Field, cfg: &EvolutionConfig) -> Result<Trajectory> {
    evolve_with(u0, cfg, |_, _| Ok(()))
}

/// [`evolve`] with a callback invoked on every stored snapshot.
pub fn evolve_with(
    u0: &Field,
    cfg: &EvolutionConfig,
    mut on_snapshot: impl FnMut(f64, &Field) -> Result<()>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    if ((steps as f64) * cfg.dt - cfg.t_end).abs() > 1e-9 * cfg.t_end.max(1.0) {
        return Err(Error::Parameter(format!(
            "t_end = {} is not a multiple of dt = {}",
            cfg.t_end, cfg.dt
        )));
    }
    let sup0 = u0.max_abs();
    let guard = 2.0 * sup0;
    let inv = |u: &Field| -> Result<Invariants> {
        if cfg.omega > 0.0 {
            numeric_invariants(u, cfg.omega)
        } else {
            let e = crate::soliton::energy(u);
            Ok(Invariants {
                e,
                f: f64::NAN,
                h0: f64::NAN,
                casimir: f64::NAN,
            })
        }
    };

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![u0.clone()],
        invariants: vec![inv(u0)?],
    };
    on_snapshot(0.0, u0)?;
    let mut u = u0.clone();
    for step in 1..=steps {
        let limit = cfl_limit(&u) + 1e-12;
        if cfg.dt > limit {
            return Err(Error::Cfl { dt: cfg.dt, limit });
        }
        u = rk4_step(&u, cfg.dt, cfg.omega, cfg.dealias);
        let t = step as f64 * cfg.dt;
        let sup = u.max_abs();
        if !sup.is_finite() || (sup0 > 0.0 && sup > guard) {
            return Err(Error::BlowUp { t });
        }
        if step % cfg.snapshot_stride == 0 || step == steps {
            traj.times.push(t);
            traj.invariants.push(inv(&u)?);
            on_snapshot(t, &u)?;
            traj.states.push(u.clone());
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedFit {
    pub speed: f64,
    pub r_squared: f64,
}

/// Parabolic-refined location of the maximum, or an error when the field has no
/// single dominant peak.
pub fn peak_location(u: &Field) -> Result<f64> {
    let v = u.values();
    let n = v.len();
    let (imax, &vmax) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty field");
    if vmax <= 0.0 {
        return Err(Error::Domain("no positive peak".into()));
    }
    let g = u.grid();
    // any other local maximum of comparable height makes the peak ambiguous
    for i in 0..n {
        let (l, r) = (v[(i + n - 1) % n], v[(i + 1) % n]);
        if v[i] >= l && v[i] > r && i != imax && v[i] > 0.9 * vmax {
            let dist = g.periodic_offset(g.point(i), g.point(imax)).abs();
            if dist > 2.0 * g.spacing() {
                return Err(Error::Domain("no unique peak".into()));
            }
        }
    }
    let (ym, y0, yp) = (v[(imax + n - 1) % n], v[imax], v[(imax + 1) % n]);
    let den = ym - 2.0 * y0 + yp;
    let off = if den != 0.0 {
        0.5 * (ym - yp) / den
    } else {
        0.0
    };
    Ok(g.wrap(g.point(imax) + off * g.spacing()))
}

/// Least-squares speed of the dominant peak, unwrapping the periodic position.
pub fn peak_speed(traj: &Trajectory) -> Result<SpeedFit> {
    if traj.len() < 2 {
        return Err(Error::Parameter("need at least two snapshots".into()));
    }
    let g = *traj.states[0].grid();
    let mut pts = Vec::with_capacity(traj.len());
    let mut prev = peak_location(&traj.states[0])?;
    let mut unwrapped = prev;
    pts.push((traj.times[0], unwrapped));
    for (t, u) in traj.times.iter().zip(&traj.states).skip(1) {
        let x = peak_location(u)?;
        unwrapped += g.periodic_offset(x, prev);
        prev = x;
        pts.push((*t, unwrapped));
    }
    let fit = crate::stats::linear_fit(&pts)?;
    Ok(SpeedFit {
        speed: fit.slope,
        r_squared: fit.r_squared,
    })
}

/// Minimum over shifts `s` of `‖u - φ(· - s)‖_{H¹}`, searched around `s_guess`.
/// Returns `(distance, s)`.
pub fn shift_minimized_distance(u: &Field, phi: &Field, s_guess: f64) -> (f64, f64) {
    let dist = |s: f64| (u - &phi.translate(s)).h1_norm();
    let h = u.grid().spacing();
    let (mut a, mut b) = (s_guess - 2.0 * h, s_guess + 2.0 * h);
    // golden-section on a bracket around the guess
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (dist(c), dist(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = dist(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = dist(d);
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    let s = 0.5 * (a + b);
    (dist(s), s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::band_limited_random;
    use crate::soliton::build_profile;
    use crate::spectral::Grid;

    #[test]
    fn zero_is_a_fixed_point() {
        let g = Grid::centered(128, 40.0).unwrap();
        let z = Field::zeros(g);
        assert_eq!(ch_rhs(&z, 1.0).max_abs(), 0.0);
        let traj = evolve(&z, &EvolutionConfig::new(0.01, 0.5, 1.0)).unwrap();
        assert_eq!(traj.last().unwrap().max_abs(), 0.0);
    }

    #[test]
    fn soliton_is_traveling_wave() {
        let p = build_profile(4.0, 1.0, &Grid::default_box(), 0.0).unwrap();
        let r = &ch_rhs(&p.phi, 1.0) + &p.dphi.scale(4.0);
        assert!(r.max_abs() < 1e-6, "{}", r.max_abs());
    }

    #[test]
    fn two_forms_of_the_vector_field_agree() {
        let g = Grid::centered(256, 40.0).unwrap();
        for seed in 0..3 {
            let u = band_limited_random(&g, 12, 0.5, seed);
            let a = ch_rhs(&u, 1.0);
            let b = ch_rhs_hamiltonian(&u, 1.0);
            assert!((&a - &b).max_abs() < 1e-10 * a.max_abs().max(1.0));
        }
    }

    #[test]
    fn cfl_guard_trips() {
        let p = build_profile(4.0, 1.0, &Grid::default_box(), 0.0).unwrap();
        let err = evolve(&p.phi, &EvolutionConfig::new(0.05, 0.1, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
    }

    #[test]
    fn short_soliton_run_and_speed() {
        let p = build_profile(4.0, 1.0, &Grid::default_box(), 0.0).unwrap();
        let traj = evolve(
            &p.phi,
            &EvolutionConfig::new(2e-3, 1.0, 1.0).with_stride(50),
        )
        .unwrap();
        let fit = peak_speed(&traj).unwrap();
        assert!((fit.speed - 4.0).abs() < 4e-3, "{}", fit.speed);
        let (de, df) = traj.invariant_drift();
        assert!(de < 1e-8 && df < 1e-8);
    }

    #[test]
    fn identical_snapshots_give_zero_speed() {
        let p = build_profile(4.0, 1.0, &Grid::default_box(), 0.0).unwrap();
        let inv = numeric_invariants(&p.phi, 1.0).unwrap();
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![p.phi.clone(), p.phi.clone()],
            invariants: vec![inv, inv],
        };
        assert_eq!(peak_speed(&traj).unwrap().speed, 0.0);
    }

    #[test]
    fn two_equal_peaks_are_ambiguous() {
        let g = Grid::default_box();
        let a = build_profile(4.0, 1.0, &g, -15.0).unwrap();
        let b = build_profile(4.0, 1.0, &g, 15.0).unwrap();
        assert!(peak_location(&(&a.phi + &b.phi)).is_err());
    }
}
