use num_complex::Complex64;

use super::{
    EvolutionSettings, Experiment, ExperimentConfig, GridSettings, PhysicalParams, Recorder,
};
use crate::dynamics::{evolve, shift_minimized_distance, EvolutionConfig, Trajectory};
use crate::error::{Error, Result};
use crate::gkdv::{self, GkdvProfile};
use crate::linops::{self, eigen_residual};
use crate::modulation::{self, FunctionalParams, ModulationTrack};
use crate::multisoliton::{self, NSolitonSpec, Perturbation, TrainConfig};
use crate::perturb::{gaussian, localized_random};
use crate::scattering::{self, LaxPotential};
use crate::soliton::{self, build_profile};
use crate::spectral::{Field, Grid};

pub static REGISTRY: &[Experiment] = &[
    Experiment {
        name: "profile-identities",
        module: "soliton",
        description:
            "stationary ODE, first integral, slope bound, momentum sign and tail rate of φ_c",
        keys: &[
            "grid.n",
            "grid.length",
            "grid.center",
            "params.c",
            "params.omega",
        ],
        defaults: || cfg("profile-identities", grid(1024, 80.0), ch(4.0, 1.0), none()),
        validate: ok,
        run: profile_identities,
    },
    Experiment {
        name: "invariant-closed-forms",
        module: "soliton",
        description: "quadrature E, F against the closed forms H₁, H₂ and dH₁/dc = 4κc",
        keys: &[
            "grid.n",
            "grid.length",
            "grid.center",
            "params.c",
            "params.omega",
        ],
        defaults: || {
            cfg(
                "invariant-closed-forms",
                grid(1024, 80.0),
                ch(4.0, 1.0),
                none(),
            )
        },
        validate: ok,
        run: invariant_closed_forms,
    },
    Experiment {
        name: "evolve-soliton",
        module: "dynamics",
        description: "RK4 transport of a soliton: shape error, invariant drift and temporal order",
        keys: &[
            "grid.n",
            "grid.length",
            "grid.center",
            "params.c",
            "params.omega",
            "evolution.dt",
            "evolution.t_end",
            "evolution.stride",
        ],
        defaults: || {
            cfg(
                "evolve-soliton",
                grid(1024, 80.0),
                ch(4.0, 1.0),
                evo(1e-3, 10.0, 500),
            )
        },
        validate: ok,
        run: evolve_soliton,
    },
    Experiment {
        name: "scattering-unitarity",
        module: "scattering",
        description: "|a|² - |b|² = 1, reflectionlessness and κ₁ of the one-soliton potential",
        keys: &[
            "grid.n",
            "grid.length",
            "grid.center",
            "params.c",
            "params.omega",
        ],
        defaults: || {
            cfg(
                "scattering-unitarity",
                grid(1024, 80.0),
                ch(4.0, 1.0),
                none(),
            )
        },
        validate: ok,
        run: scattering_unitarity,
    },
    Experiment {
        name: "discrete-spectrum",
        module: "scattering",
        description: "eigenvalues iκ_n of a separated soliton pair against ½sqrt(1 - 2ω/c_n)",
        keys: &[
            "grid.n",
            "grid.length",
            "grid.center",
            "params.omega",
            "params.speeds",
            "params.positions",
        ],
        defaults: || {
            let mut c = cfg(
                "discrete-spectrum",
                grid(2048, 160.0),
                ch_omega(1.0),
                none(),
            );
            c.params.speeds = Some(vec![3.0, 5.0]);
            c.params.positions = Some(vec![-30.0, 30.0]);
            c
        },
        validate: separated_pair,
        run: discrete_spectrum,
    },
    Experiment {
        name: "completeness",
        module: "scattering",
        description: "squared-eigenfunction expansion of φ' and of localized test data",
        keys: &[
            "grid.n",
            "grid.length",
            "grid.center",
            "params.c",
            "params.omega",
        ],
        defaults: || cfg("completeness", grid(1024, 80.0), ch(4.0, 1.0), none()),
        validate: ok,
        run: completeness,
    },
    Experiment {
        name: "operator-algebra",
        module: "linops",
        description: "recursion eigenrelations, commutator identities and L_{n+1} = R L_n",
        keys: &[
            "grid.n",
            "grid.length",
            "grid.center",
            "params.c",
            "params.omega",
        ],
        defaults: || cfg("operator-algebra", grid(512, 80.0), ch(4.0, 1.0), none()),
        validate: ok,
        run: operator_algebra,
    },
    Experiment {
        name: "spectrum-weighted",
        module: "linops",
        description: "dense spectrum of ℒ_a: double zero eigenvalue, gap Λ/2 and dual basis",
        keys: &[
            "grid.n",
            "grid.length",
            "grid.center",
            "params.c",
            "params.omega",
            "params.a",
        ],
        defaults: || {
            let mut c = cfg("spectrum-weighted", grid(512, 80.0), ch(4.0, 1.0), none());
            c.params.a = Some(-0.3);
            c
        },
        validate: ch_weight,
        run: spectrum_weighted,
    },
    Experiment {
        name: "semigroup-decay",
        module: "linops",
        description: "H¹ decay rate of e^{tℒ_a} on seeded Q-projected data",
        keys: &[
            "grid.n",
            "grid.length",
            "grid.center",
            "params.c",
            "params.omega",
            "params.a",
            "params.max_mode",
            "evolution.t_end",
        ],
        defaults: || {
            let mut c = cfg("semigroup-decay", grid(512, 80.0), ch(4.0, 1.0), none());
            c.params.a = Some(-0.3);
            c.params.max_mode = Some(20);
            c.evolution.t_end = Some(20.0);
            c
        },
        validate: ch_decay,
        run: semigroup_decay,
    },
    Experiment {
        name: "liouville-potential",
        module: "linops",
        description:
            "Liouville-transform potential of L₁ at c = 6, ω = 1 against its rational forms",
        keys: &[],
        defaults: || {
            cfg(
                "liouville-potential",
                GridSettings::default(),
                PhysicalParams::default(),
                none(),
            )
        },
        validate: ok,
        run: liouville_potential,
    },
    Experiment {
        name: "modulation-track",
        module: "modulation",
        description:
            "modulated decomposition of a perturbed soliton: orthogonality and |ċ|, |ẋ - c| ratios",
        keys: MODULATION_KEYS,
        defaults: || modulation_defaults("modulation-track"),
        validate: ok,
        run: modulation_track,
    },
    Experiment {
        name: "monotonicity",
        module: "modulation",
        description: "localized energies E_R, E_L, F_R along a perturbed run with slack constants",
        keys: &[
            "grid.n",
            "grid.length",
            "grid.center",
            "params.c",
            "params.omega",
            "params.position",
            "params.amplitude",
            "params.x0",
            "params.k",
            "params.alpha",
            "params.c1",
            "evolution.dt",
            "evolution.t_end",
            "evolution.stride",
        ],
        defaults: || {
            let mut c = modulation_defaults("monotonicity");
            c.params.x0 = Some(10.0);
            c.params.k = Some(2.0);
            c.params.alpha = Some(0.1);
            c.params.c1 = Some(3.8);
            c
        },
        validate: functional_params,
        run: monotonicity,
    },
    Experiment {
        name: "asymptotic-single",
        module: "modulation",
        description: "decay of ‖v‖_{H¹(x > x(t) - 10)} behind a perturbed soliton",
        keys: MODULATION_KEYS,
        defaults: || modulation_defaults("asymptotic-single"),
        validate: ok,
        run: asymptotic_single,
    },
    Experiment {
        name: "train-stability",
        module: "multisoliton",
        description:
            "perturbed soliton train: ordering, gap growth and distance against A(ε + e^{-γ₀L})",
        keys: &[
            "grid.n",
            "grid.length",
            "params.omega",
            "params.speeds",
            "params.positions",
            "params.amplitude",
            "params.max_mode",
            "evolution.dt",
            "evolution.t_end",
            "evolution.stride",
        ],
        defaults: || {
            let mut c = cfg(
                "train-stability",
                grid(4096, 320.0),
                ch_omega(1.0),
                evo(0.01, 20.0, 50),
            );
            c.grid.center = None;
            c.params.speeds = Some(vec![3.0, 5.0]);
            c.params.positions = Some(vec![-100.0, -70.0]);
            c.params.amplitude = Some(0.01);
            c.params.max_mode = Some(40);
            c
        },
        validate: train_config_check,
        run: train_stability,
    },
    Experiment {
        name: "exact-two-soliton",
        module: "multisoliton",
        description:
            "parametric N-soliton: N = 1 against φ_c, N = 2 against fitted superpositions at ±t",
        keys: &[
            "grid.n",
            "grid.length",
            "params.c",
            "params.omega",
            "params.speeds",
            "params.time",
        ],
        defaults: || {
            let mut c = cfg("exact-two-soliton", grid(2048, 160.0), ch(4.0, 1.0), none());
            c.grid.center = None;
            c.params.speeds = Some(vec![3.0, 5.0]);
            c.params.time = Some(15.0);
            c
        },
        validate: two_speeds,
        run: exact_two_soliton,
    },
    Experiment {
        name: "kdv-toolkit",
        module: "gkdv",
        description:
            "KdV (p = 2): Jost solutions, squared eigenfunctions, recursion, L_n identities, decay",
        keys: GKDV_KEYS,
        defaults: || gkdv_defaults("kdv-toolkit"),
        validate: gkdv_check,
        run: kdv_toolkit,
    },
    Experiment {
        name: "mkdv-toolkit",
        module: "gkdv",
        description:
            "mKdV (p = 3): Zakharov–Shabat Jost vectors, squared eigenfunctions, identities, decay",
        keys: GKDV_KEYS,
        defaults: || gkdv_defaults("mkdv-toolkit"),
        validate: gkdv_check,
        run: mkdv_toolkit,
    },
];

const MODULATION_KEYS: &[&str] = &[
    "grid.n",
    "grid.length",
    "grid.center",
    "params.c",
    "params.omega",
    "params.position",
    "params.amplitude",
    "evolution.dt",
    "evolution.t_end",
    "evolution.stride",
];

const GKDV_KEYS: &[&str] = &[
    "grid.n",
    "grid.length",
    "grid.center",
    "params.c",
    "params.a",
    "params.shift",
    "params.max_mode",
    "evolution.t_end",
];

fn cfg(
    name: &str,
    grid: GridSettings,
    params: PhysicalParams,
    evolution: EvolutionSettings,
) -> ExperimentConfig {
    ExperimentConfig {
        experiment: name.into(),
        seed: None,
        output_dir: None,
        grid,
        params,
        evolution,
    }
}

fn grid(n: usize, length: f64) -> GridSettings {
    GridSettings {
        n: Some(n),
        length: Some(length),
        center: Some(0.0),
    }
}

fn ch(c: f64, omega: f64) -> PhysicalParams {
    PhysicalParams {
        c: Some(c),
        omega: Some(omega),
        ..PhysicalParams::default()
    }
}

fn ch_omega(omega: f64) -> PhysicalParams {
    PhysicalParams {
        omega: Some(omega),
        ..PhysicalParams::default()
    }
}

fn evo(dt: f64, t_end: f64, stride: usize) -> EvolutionSettings {
    EvolutionSettings {
        dt: Some(dt),
        t_end: Some(t_end),
        stride: Some(stride),
    }
}

fn none() -> EvolutionSettings {
    EvolutionSettings::default()
}

fn modulation_defaults(name: &str) -> ExperimentConfig {
    let mut c = cfg(name, grid(4096, 320.0), ch(4.0, 1.0), evo(0.01, 40.0, 50));
    c.params.position = Some(-80.0);
    c.params.amplitude = Some(0.01);
    c
}

fn gkdv_defaults(name: &str) -> ExperimentConfig {
    let mut c = cfg(name, grid(512, 80.0), PhysicalParams::default(), none());
    c.params.c = Some(1.0);
    c.params.a = Some(0.2);
    c.params.shift = Some(1.0);
    c.params.max_mode = Some(20);
    c.evolution.t_end = Some(20.0);
    c
}

fn ok(_: &ExperimentConfig) -> std::result::Result<(), String> {
    Ok(())
}

fn two_speeds(c: &ExperimentConfig) -> std::result::Result<(), String> {
    let s = c.params.speeds.as_deref().unwrap_or(&[]);
    let w = c.params.omega.unwrap_or(1.0);
    if s.is_empty() || s.len() > 2 {
        return Err(format!("need one or two speeds, got {}", s.len()));
    }
    NSolitonSpec::from_speeds(s, vec![1.0; s.len()], w)
        .map(|_| ())
        .map_err(|e| e.to_string())
}

fn separated_pair(c: &ExperimentConfig) -> std::result::Result<(), String> {
    let s = c.params.speeds.as_deref().unwrap_or(&[]);
    let x = c.params.positions.as_deref().unwrap_or(&[]);
    if s.is_empty() || s.len() != x.len() {
        return Err("need one position per speed".into());
    }
    if x.windows(2)
        .any(|w| !(w[1] - w[0] >= multisoliton::MIN_GAP))
    {
        return Err(format!(
            "positions must increase with gaps ≥ {}",
            multisoliton::MIN_GAP
        ));
    }
    Ok(())
}

fn ch_weight(c: &ExperimentConfig) -> std::result::Result<(), String> {
    let (cc, w, a) = (
        c.params.c.unwrap_or(0.0),
        c.params.omega.unwrap_or(0.0),
        c.params.a.unwrap_or(0.0),
    );
    let a1 = linops::weight_a1(cc, w);
    if !(a > a1 && a < 0.0) {
        return Err(format!("weight a = {a} outside ({a1:.6}, 0)"));
    }
    Ok(())
}

fn ch_decay(c: &ExperimentConfig) -> std::result::Result<(), String> {
    ch_weight(c)?;
    horizon(c)?;
    max_mode(c)
}

fn horizon(c: &ExperimentConfig) -> std::result::Result<(), String> {
    let t = c.evolution.t_end.unwrap_or(0.0);
    if !(t >= 10.0) {
        return Err(format!("t_end = {t} must be at least 10"));
    }
    Ok(())
}

fn max_mode(c: &ExperimentConfig) -> std::result::Result<(), String> {
    let (m, n) = (c.params.max_mode.unwrap_or(0), c.grid.n.unwrap_or(0));
    if m == 0 || m > n / 8 {
        return Err(format!("max_mode = {m} must lie in 1..={}", n / 8));
    }
    Ok(())
}

fn functional_params(c: &ExperimentConfig) -> std::result::Result<(), String> {
    let p = &c.params;
    let fp = FunctionalParams {
        x0: p.x0.unwrap_or(0.0),
        k: p.k.unwrap_or(0.0),
        alpha: p.alpha.unwrap_or(0.0),
        c1: p.c1.unwrap_or(0.0),
        omega: p.omega.unwrap_or(0.0),
    };
    fp.validate().map_err(|e| e.to_string())?;
    if fp.c1 > p.c.unwrap_or(0.0) {
        return Err(format!("c₁ = {} exceeds the soliton speed", fp.c1));
    }
    Ok(())
}

fn train_config(c: &ExperimentConfig) -> Result<TrainConfig> {
    let p = &c.params;
    let amp = req(p.amplitude, "amplitude")?;
    Ok(TrainConfig {
        omega: req(p.omega, "omega")?,
        speeds: p.speeds.clone().unwrap_or_default(),
        positions: p.positions.clone().unwrap_or_default(),
        min_gap: multisoliton::MIN_GAP,
        perturbation: (amp > 0.0).then(|| Perturbation {
            relative_amplitude: amp,
            max_mode: p.max_mode.unwrap_or(1),
            seed: c.seed(),
        }),
        n: req(c.grid.n, "n")?,
        length: req(c.grid.length, "length")?,
        dt: req(c.evolution.dt, "dt")?,
        t_end: req(c.evolution.t_end, "t_end")?,
        snapshot_stride: req(c.evolution.stride, "stride")?,
    })
}

fn train_config_check(c: &ExperimentConfig) -> std::result::Result<(), String> {
    max_mode(c)?;
    let amp = c.params.amplitude.unwrap_or(0.0);
    if !(amp >= 0.0) {
        return Err(format!("amplitude = {amp} must be non-negative"));
    }
    train_config(c)
        .and_then(|t| t.validate())
        .map_err(|e| e.to_string())
}

fn gkdv_check(c: &ExperimentConfig) -> std::result::Result<(), String> {
    let (cc, a) = (c.params.c.unwrap_or(0.0), c.params.a.unwrap_or(0.0));
    if !(cc > 0.0) {
        return Err(format!("c = {cc} must be positive"));
    }
    if !(a > 0.0 && a < cc.sqrt()) {
        return Err(format!("weight a = {a} outside (0, sqrt(c))"));
    }
    if !(c.params.shift.unwrap_or(0.0) >= 0.0) {
        return Err("shift must be non-negative".into());
    }
    horizon(c)?;
    max_mode(c)
}

fn req<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Internal(format!("unresolved setting `{name}`")))
}

fn make_grid(c: &ExperimentConfig) -> Result<Grid> {
    let (n, l) = (req(c.grid.n, "n")?, req(c.grid.length, "length")?);
    Grid::new(n, l, c.grid.center.unwrap_or(0.0) - 0.5 * l)
}

fn c_omega(c: &ExperimentConfig) -> Result<(f64, f64)> {
    Ok((req(c.params.c, "c")?, req(c.params.omega, "omega")?))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn profile_identities(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let (c, w) = c_omega(cfg)?;
    let p = build_profile(c, w, &g, 0.0)?;
    rec.below(
        "soliton.stationary_residual",
        soliton::stationary_residual(&p),
        1e-7,
    );
    rec.below(
        "soliton.first_integral_residual",
        soliton::first_integral_residual(&p),
        1e-7,
    );
    rec.below(
        "soliton.slope_bound",
        soliton::slope_bound_violation(&p),
        1e-12,
    );
    let mc = soliton::momentum_positivity(&p)?;
    rec.above("soliton.momentum_positive", mc.min_m, 0.0);
    rec.below("soliton.momentum_identity", mc.identity_residual, 1e-8);
    let rate = soliton::fit_decay_rate(&p)?;
    let expected = (1.0 - 2.0 * w / c).sqrt();
    rec.below("soliton.decay_rate", rel(rate, expected), 0.05);
    rec.constant("decay_rate_fit", rate);
    rec.constant("peak_height", p.params.peak_height());
    rec.columns(
        "profile",
        &["x", "phi", "dphi", "m"],
        &[&g.points(), p.phi.values(), p.dphi.values(), p.m.values()],
    );
    Ok(())
}

fn invariant_closed_forms(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let (c, w) = c_omega(cfg)?;
    let p = build_profile(c, w, &g, 0.0)?;
    let inv = soliton::numeric_invariants(&p.phi, w)?;
    let cf = soliton::closed_form_invariants(c, w)?;
    rec.below("soliton.h1_closed_form", rel(inv.e, cf.h1), 1e-6);
    rec.below("soliton.h2_closed_form", rel(inv.f, cf.h2), 1e-6);
    let d = 1e-3;
    let ep = soliton::energy(&build_profile(c + d, w, &g, 0.0)?.phi);
    let em = soliton::energy(&build_profile(c - d, w, &g, 0.0)?.phi);
    let de_dc = (ep - em) / (2.0 * d);
    rec.below("soliton.energy_derivative", rel(de_dc, cf.dh1_dc), 1e-3);
    rec.constant("kappa", cf.kappa);
    rec.table(
        "invariants",
        &[
            "c",
            "omega",
            "e_quadrature",
            "h1_closed",
            "f_quadrature",
            "h2_closed",
            "de_dc_fd",
            "dh1_dc_closed",
        ],
        vec![vec![c, w, inv.e, cf.h1, inv.f, cf.h2, de_dc, cf.dh1_dc]],
    );
    Ok(())
}

/// `‖u_T(dt) - u_T(ref)‖_{H¹}` for the coarse, half and reference steps.
fn rk4_order_factor(phi: &Field, w: f64, dt: f64) -> Result<(f64, f64)> {
    let horizon = 1024.0 * dt;
    let run = |h: f64| -> Result<Field> {
        let traj = evolve(
            phi,
            &EvolutionConfig::new(h, horizon, w).with_stride(usize::MAX),
        )?;
        traj.last()
            .cloned()
            .ok_or_else(|| Error::Internal("empty trajectory".into()))
    };
    let reference = run(dt)?;
    let coarse = (&run(16.0 * dt)? - &reference).h1_norm();
    let fine = (&run(8.0 * dt)? - &reference).h1_norm();
    Ok((coarse / fine, coarse))
}

fn evolve_soliton(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let (c, w) = c_omega(cfg)?;
    let e = &cfg.evolution;
    let (dt, t_end, stride) = (
        req(e.dt, "dt")?,
        req(e.t_end, "t_end")?,
        req(e.stride, "stride")?,
    );
    let p = build_profile(c, w, &g, 0.0)?;
    let traj = evolve(
        &p.phi,
        &EvolutionConfig::new(dt, t_end, w).with_stride(stride),
    )?;
    let mut dist = Vec::with_capacity(traj.len());
    for (t, u) in traj.times.iter().zip(&traj.states) {
        dist.push(shift_minimized_distance(u, &p.phi, c * t).0);
    }
    let final_dist = *dist.last().unwrap_or(&f64::NAN);
    rec.below("dynamics.shift_minimized_error", final_dist, 1e-4);
    let (de, df) = traj.invariant_drift();
    rec.below("dynamics.energy_drift", de, 1e-8);
    rec.below("dynamics.f_drift", df, 1e-8);
    let (factor, coarse) = rk4_order_factor(&p.phi, w, dt)?;
    rec.above("dynamics.rk4_order_factor", factor, 10.0);
    rec.constant("rk4_coarse_error", coarse);
    let es: Vec<f64> = traj.invariants.iter().map(|i| i.e).collect();
    let fs: Vec<f64> = traj.invariants.iter().map(|i| i.f).collect();
    rec.columns(
        "evolution",
        &["t", "energy", "f", "shift_minimized_distance"],
        &[&traj.times, &es, &fs, &dist],
    );
    Ok(())
}

fn scattering_unitarity(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let (c, w) = c_omega(cfg)?;
    let p = build_profile(c, w, &g, 0.0)?;
    let pot = LaxPotential::new(p.m.clone(), w)?;
    let coeffs = scattering::scattering_coeffs(&pot, &scattering::default_kgrid())?;
    rec.below("scattering.unitarity", coeffs.max_unitarity_error(), 1e-6);
    rec.below("scattering.reflectionless", coeffs.max_abs_b(), 1e-4);
    let spec = scattering::discrete_eigenvalues(&pot, 4)?;
    let kappa = soliton::kappa_of(c, w);
    let err = match spec.kappas.as_slice() {
        [k] => (k - kappa).abs(),
        _ => f64::INFINITY,
    };
    rec.below("scattering.kappa1", err, 1e-5);
    rec.constant("eigenvalue_count", spec.len() as f64);
    let abs_a: Vec<f64> = coeffs.a.iter().map(|z| z.norm()).collect();
    let abs_b: Vec<f64> = coeffs.b.iter().map(|z| z.norm()).collect();
    rec.columns(
        "coefficients",
        &["k", "abs_a", "abs_b", "unitarity_error"],
        &[&coeffs.k, &abs_a, &abs_b, &coeffs.unitarity],
    );
    Ok(())
}

fn discrete_spectrum(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let w = req(cfg.params.omega, "omega")?;
    let speeds = req(cfg.params.speeds.clone(), "speeds")?;
    let positions = req(cfg.params.positions.clone(), "positions")?;
    let mut m = Field::zeros(g);
    for (c, x) in speeds.iter().zip(&positions) {
        m = &m + &build_profile(*c, w, &g, *x)?.m;
    }
    let pot = LaxPotential::new(m, w)?;
    let found = scattering::discrete_eigenvalues(&pot, speeds.len() + 2)?;
    rec.below(
        "scattering.eigenvalue_count",
        (found.len() as f64 - speeds.len() as f64).abs(),
        0.5,
    );
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    let mut expected: Vec<f64> = speeds.iter().map(|c| soliton::kappa_of(*c, w)).collect();
    expected.sort_by(f64::total_cmp);
    let mut got = found.kappas.clone();
    got.sort_by(f64::total_cmp);
    for (j, k) in expected.iter().enumerate() {
        let g = got.get(j).copied().unwrap_or(f64::NAN);
        worst = worst.max((g - k).abs());
        rows.push(vec![j as f64, *k, g, soliton::speed_of_kappa(*k, w)?]);
    }
    if worst.is_nan() {
        worst = f64::INFINITY;
    }
    rec.below("scattering.discrete_eigenvalues", worst, 1e-4);
    let coeffs = scattering::scattering_coeffs(&pot, &scattering::uniform_kgrid(64, 8.0))?;
    rec.below("scattering.reflectionless", coeffs.max_abs_b(), 1e-4);
    rec.table(
        "eigenvalues",
        &["index", "kappa_closed", "kappa_found", "speed"],
        rows,
    );
    Ok(())
}

fn completeness(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let (c, w) = c_omega(cfg)?;
    let p = build_profile(c, w, &g, 0.0)?;
    let gram = scattering::discrete_gram(&p)?;
    let mut bi: f64 = 0.0;
    for (j, row) in gram.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            bi = bi.max((v - if j == k { 1.0 } else { 0.0 }).abs());
        }
    }
    rec.below("scattering.discrete_biorthogonality", bi, 1e-6);
    let kg = scattering::default_kgrid();
    let tests = [
        p.dphi.clone(),
        gaussian(&g, 1.0, 1.5, 1.0),
        gaussian(&g, -3.0, 2.5, 1.0),
    ];
    let mut rows = Vec::new();
    for (i, z) in tests.iter().enumerate() {
        let r = scattering::completeness_residual(&p, z, &kg)?;
        if i == 0 {
            rec.below("scattering.completeness_dphi", r.relative_error, 1e-6);
        } else {
            rec.below(
                &format!("scattering.completeness_gaussian_{i}"),
                r.relative_error,
                0.1,
            );
        }
        rows.push(vec![i as f64, r.relative_error, r.continuum_fraction]);
    }
    rec.table(
        "completeness",
        &["test_function", "relative_error", "continuum_fraction"],
        rows,
    );
    Ok(())
}

fn operator_algebra(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let (c, w) = c_omega(cfg)?;
    let p = build_profile(c, w, &g, 0.0)?;
    let r = linops::build_recursion(&p)?;
    rec.below(
        "linops.recursion_on_momentum",
        eigen_residual(&r.r, &p.m, c),
        1e-5,
    );
    rec.below(
        "linops.adjoint_on_derivative",
        eigen_residual(&r.r_star, &p.dphi, c),
        1e-5,
    );
    for n in 1..=2 {
        let cr = linops::commutator_residuals(&p, n)?;
        rec.below(&format!("linops.commutator_r1_n{n}"), cr.r1, 1e-6);
        rec.below(&format!("linops.commutator_r2_n{n}"), cr.r2, 1e-6);
        rec.below(&format!("linops.intertwining_n{n}"), cr.intertwining, 1e-6);
    }
    let h = linops::hierarchy_residuals(&p, 3)?;
    rec.below("linops.hierarchy_l1", h.l1_consistency, 1e-8);
    for (n, v) in h.recursion.iter().enumerate() {
        rec.below(&format!("linops.hierarchy_n{n}"), *v, 1e-8);
    }
    let rows = h
        .recursion
        .iter()
        .enumerate()
        .map(|(n, v)| vec![n as f64, *v])
        .collect();
    rec.table("hierarchy", &["n", "relative_residual"], rows);
    Ok(())
}

fn spectrum_weighted(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let (c, w) = c_omega(cfg)?;
    let a = req(cfg.params.a, "a")?;
    let p = build_profile(c, w, &g, 0.0)?;
    let la = linops::build_weighted_jl1(&p, a)?;
    let kmax = std::f64::consts::PI / g.spacing();
    let ks: Vec<f64> = (0..=4000)
        .map(|i| -kmax + 2.0 * kmax * i as f64 / 4000.0)
        .collect();
    let curve = linops::essential_curve_weighted(c, w, a, &ks);
    let rep = linops::eigen_spectrum(&la, 1e-4, curve.iter().map(|(_, z)| *z).collect())?;
    let lam = linops::lambda_max(c, w, a);
    rec.below(
        "linops.near_zero_count",
        (rep.near_zero.len() as f64 - 2.0).abs(),
        0.5,
    );
    rec.below("linops.spectral_gap", rep.max_re_rest, 0.5 * lam);
    let fine: Vec<f64> = (-20_000..=20_000).map(|i| i as f64 * 1e-3).collect();
    let sampled = linops::essential_curve_weighted(c, w, a, &fine)
        .into_iter()
        .map(|(_, z)| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    rec.below("linops.lambda_closed_form", (sampled - lam).abs(), 1e-5);
    let pp = linops::spectral_projections(&p, a)?;
    rec.below("linops.biorthogonality", pp.biorthogonality_error(), 1e-5);
    rec.constant("lambda", lam);
    rec.constant("max_re_rest", rep.max_re_rest);
    rec.constant("distance_to_curve", rep.distance_to_curve());
    let mut eig: Vec<Complex64> = rep.eigenvalues.clone();
    eig.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    rec.table(
        "eigenvalues",
        &["re", "im"],
        eig.iter().map(|z| vec![z.re, z.im]).collect(),
    );
    rec.table(
        "essential_curve",
        &["k", "re", "im"],
        curve.iter().map(|(k, z)| vec![*k, z.re, z.im]).collect(),
    );
    Ok(())
}

fn semigroup_decay(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let (c, w) = c_omega(cfg)?;
    let a = req(cfg.params.a, "a")?;
    let t_end = req(cfg.evolution.t_end, "t_end")?;
    let modes = req(cfg.params.max_mode, "max_mode")?;
    let p = build_profile(c, w, &g, 0.0)?;
    let proj = linops::spectral_projections(&p, a)?;
    let w0 = proj.complement(&localized_random(&g, modes, 1.0, 0.0, 10.0, cfg.seed()));
    let fit = linops::semigroup_decay_rate(&p, a, &w0, t_end)?;
    rec.below("linops.decay_rate", fit.rate, -0.05);
    rec.above("linops.decay_fit_r_squared", fit.r_squared, 0.99);
    rec.constant("rate", fit.rate);
    rec.columns("norms", &["t", "h1_norm"], &[&fit.times, &fit.norms]);
    Ok(())
}

fn liouville_potential(_: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let z: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.025).collect();
    let v = linops::liouville_transform_potential(6.0, 1.0, &z)?;
    let closed: Vec<f64> = z
        .iter()
        .map(|x| linops::liouville_potential_closed_form(*x))
        .collect();
    let shown: Vec<f64> = z
        .iter()
        .map(|x| linops::liouville_potential_reference(*x))
        .collect();
    let dev = |r: &[f64]| {
        v.iter()
            .zip(r)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    rec.below("linops.liouville_rational_form", dev(&closed), 1e-10);
    rec.below("linops.liouville_reference_form", dev(&shown), 1e-10);
    rec.constant("v_at_zero", v[400]);
    rec.columns(
        "potential",
        &["z", "v_transform", "v_rational", "v_reference"],
        &[&z, &v, &closed, &shown],
    );
    Ok(())
}

struct PerturbedRun {
    traj: Trajectory,
    track: ModulationTrack,
    epsilon: f64,
}

fn perturbed_run(cfg: &ExperimentConfig) -> Result<PerturbedRun> {
    let g = make_grid(cfg)?;
    let (c, w) = c_omega(cfg)?;
    let x = req(cfg.params.position, "position")?;
    let amp = req(cfg.params.amplitude, "amplitude")?;
    let e = &cfg.evolution;
    let phi = build_profile(c, w, &g, x)?.phi;
    let shape = gaussian(&g, x + 2.0, 2.0, 1.0).helmholtz_inverse();
    let bump = shape.scale(amp * phi.h1_norm() / shape.h1_norm());
    let u0 = &phi + &bump;
    let traj = evolve(
        &u0,
        &EvolutionConfig::new(req(e.dt, "dt")?, req(e.t_end, "t_end")?, w)
            .with_stride(req(e.stride, "stride")?),
    )?;
    let track = modulation::track(&traj, w, &[(c, x)])?;
    if let Some(t) = track.tube_exit {
        return Err(Error::ModulationTube(format!(
            "decomposition lost at t = {t}"
        )));
    }
    Ok(PerturbedRun {
        traj,
        track,
        epsilon: bump.h1_norm() / phi.h1_norm(),
    })
}

fn modulation_track(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let run = perturbed_run(cfg)?;
    let tr = &run.track;
    let b = tr.bounds(1e-8);
    rec.below("modulation.orthogonality", b.max_ortho_residual, 1e-10);
    rec.below("modulation.c_dot_constant_finite", b.c_dot_ratio, 1e3);
    rec.below("modulation.x_dot_constant_finite", b.x_dot_ratio, 1e3);
    rec.constant("epsilon", run.epsilon);
    rec.constant("c_dot_constant", b.c_dot_ratio);
    rec.constant("x_dot_constant", b.x_dot_ratio);
    let cs = tr.speeds(0);
    let xs = tr.positions(0);
    let v: Vec<f64> = tr.states.iter().map(|s| s.v.h1_norm()).collect();
    let cd: Vec<f64> = tr.c_dot.iter().map(|r| r[0]).collect();
    let xd: Vec<f64> = tr.x_dot.iter().map(|r| r[0]).collect();
    rec.columns(
        "track",
        &["t", "c", "x", "v_h1", "c_dot", "x_dot"],
        &[&tr.times, &cs, &xs, &v, &cd, &xd],
    );
    Ok(())
}

fn monotonicity(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let run = perturbed_run(cfg)?;
    let p = &cfg.params;
    let fp = FunctionalParams {
        x0: req(p.x0, "x0")?,
        k: req(p.k, "k")?,
        alpha: req(p.alpha, "alpha")?,
        c1: req(p.c1, "c1")?,
        omega: req(p.omega, "omega")?,
    };
    let xs = run.track.positions(0);
    let f = modulation::functionals(&run.traj, &xs, fp)?;
    rec.below("modulation.functional_split", f.split_error(), 1e-10);
    rec.below("modulation.e_r_slack_finite", f.e_r_constant(), 1e3);
    rec.below("modulation.f_r_slack_finite", f.f_r_constant(), 1e3);
    rec.constant("e_r_slack", f.e_r_constant());
    rec.constant("f_r_slack", f.f_r_constant());
    rec.constant("e_l_slack", f.e_l_constant());
    rec.constant("k_min", fp.k_min()?);
    rec.columns(
        "functionals",
        &["t", "e_r", "e_l", "f_r", "e_total"],
        &[&f.times, &f.e_r, &f.e_l, &f.f_r, &f.e_total],
    );
    Ok(())
}

fn asymptotic_single(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let run = perturbed_run(cfg)?;
    let w = req(cfg.params.omega, "omega")?;
    let origin = req(cfg.params.position, "position")?;
    let tails = modulation::right_tail_decay(&run.track, &run.traj, w, origin, 10.0);
    let first = tails.v_near.first().copied().unwrap_or(f64::NAN);
    let last = tails.v_near.last().copied().unwrap_or(f64::NAN);
    rec.below("modulation.near_tail_halving", last / first, 0.5);
    rec.constant("v_near_initial", first);
    rec.constant("v_near_final", last);
    rec.columns(
        "tails",
        &["t", "u_far", "v_far", "v_near"],
        &[&tails.times, &tails.u_far, &tails.v_far, &tails.v_near],
    );
    Ok(())
}

fn train_stability(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let tc = train_config(cfg)?;
    let r = multisoliton::train_experiment(&tc)?;
    rec.below(
        "multisoliton.ordering_violations",
        if r.ordering_preserved { 0.0 } else { 1.0 },
        0.5,
    );
    rec.below(
        "multisoliton.tube_exits",
        if r.tube_exit.is_some() { 1.0 } else { 0.0 },
        0.5,
    );
    rec.below("multisoliton.orbital_constant", r.fitted_a, 10.0);
    for (j, s) in r.gap_slopes.iter().enumerate() {
        rec.above(&format!("multisoliton.gap_growth_{j}"), *s, 0.0);
    }
    rec.constant("epsilon", r.epsilon);
    rec.constant("sup_distance", r.sup_distance);
    rec.constant("gamma0", r.gamma0);
    rec.constant("fitted_a", r.fitted_a);
    rec.constant("min_gap", r.min_gap);
    let mut header = vec!["t".to_string()];
    let count = tc.speeds.len();
    for j in 0..count {
        header.push(format!("c{}", j + 1));
    }
    for j in 0..count {
        header.push(format!("x{}", j + 1));
    }
    header.push("distance".into());
    let rows = (0..r.times.len())
        .map(|i| {
            let mut row = vec![r.times[i]];
            row.extend(&r.speeds[i]);
            row.extend(&r.positions[i]);
            row.push(r.distance[i]);
            row
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    rec.table("train", &h, rows);
    Ok(())
}

fn exact_two_soliton(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let (c, w) = c_omega(cfg)?;
    let speeds = req(cfg.params.speeds.clone(), "speeds")?;
    let t = req(cfg.params.time, "time")?;
    let (n, l) = (req(cfg.grid.n, "n")?, req(cfg.grid.length, "length")?);
    let g1 = Grid::centered(n, l)?;
    let one = NSolitonSpec::from_speeds(&[c], vec![1.0], w)?;
    let u1 = multisoliton::exact_n_soliton(&one, 0.0, &g1)?;
    let guess = multisoliton::peak_guesses(&u1, w, 1)[0];
    let phi = build_profile(c, w, &g1, guess.1)?.phi;
    rec.below(
        "multisoliton.one_soliton_profile",
        shift_minimized_distance(&u1, &phi, 0.0).0,
        1e-3,
    );

    let spec = NSolitonSpec::from_speeds(&speeds, vec![1.0; speeds.len()], w)?;
    let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
    let mut fitted = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (label, s) in [("minus", -t), ("plus", t)] {
        let g = Grid::new(n, l, mean * s - 0.5 * l)?;
        let u = multisoliton::exact_n_soliton(&spec, s, &g)?;
        let fit = multisoliton::fit_superposition(&u, w, speeds.len())?;
        rec.below(
            &format!("multisoliton.asymptotic_superposition_{label}"),
            fit.v.h1_norm(),
            5e-3,
        );
        let mut cs = fit.cs.clone();
        cs.sort_by(f64::total_cmp);
        fitted.push(cs);
        cols.push(g.points());
        cols.push(u.values().to_vec());
    }
    let shift = fitted[0]
        .iter()
        .zip(&fitted[1])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    rec.below("multisoliton.speed_persistence", shift, 1e-3);
    for (j, cj) in fitted[1].iter().enumerate() {
        rec.constant(&format!("fitted_speed_{}", j + 1), *cj);
    }
    rec.constant("lambda", spec.lambda());
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    rec.columns(
        "two_soliton",
        &["x_minus", "u_minus", "x_plus", "u_plus"],
        &refs,
    );
    Ok(())
}

fn gkdv_common(cfg: &ExperimentConfig, prof: &GkdvProfile, rec: &mut Recorder) -> Result<()> {
    let g = *prof.grid();
    rec.below("gkdv.soliton_ode", prof.ode_residual(), 1e-8);
    let id = gkdv::recursion_identities(prof);
    rec.below("gkdv.recursion_on_q", id.r_on_q, 1e-5);
    rec.below("gkdv.adjoint_on_dq", id.r_star_on_dq, 1e-5);
    if let Some(d) = id.r_star_on_dilation {
        rec.below("gkdv.adjoint_generalized_kernel", d, 1e-5);
    }
    let mut rows = Vec::new();
    for n in 1..=2 {
        let ln = gkdv::ln_identities(prof, n)?;
        rec.below(&format!("gkdv.ln_kernel_n{n}"), ln.kernel, 1e-5);
        rec.below(&format!("gkdv.ln_scaling_n{n}"), ln.scaling, 1e-5);
        let cm = gkdv::gkdv_commutators(prof, n)?;
        rec.below(&format!("gkdv.commutator_n{n}"), cm.recursion, 1e-6);
        rec.below(&format!("gkdv.adjoint_commutator_n{n}"), cm.adjoint, 1e-6);
        rows.push(vec![
            n as f64,
            ln.kernel,
            ln.scaling,
            cm.recursion,
            cm.adjoint,
        ]);
    }
    rec.table(
        "identities",
        &[
            "n",
            "ln_kernel",
            "ln_scaling",
            "commutator",
            "adjoint_commutator",
        ],
        rows,
    );

    let a = req(cfg.params.a, "a")?;
    let shift = req(cfg.params.shift, "shift")?;
    let t_end = req(cfg.evolution.t_end, "t_end")?;
    let modes = req(cfg.params.max_mode, "max_mode")?;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (n, k) in [(1, 0.0), (2, shift)] {
        let gen = gkdv::weighted_gkdv_generator(prof, n, a, k)?;
        let proj = gkdv::gkdv_projection(prof, &gen, a)?;
        let w0 = proj.complement(&localized_random(&g, modes, 1.0, 0.0, 6.0, cfg.seed()));
        let fit = gkdv::liouville_decay_gkdv(prof, n, a, k, &w0, t_end)?;
        rec.below(&format!("gkdv.decay_rate_n{n}"), fit.rate, 0.0);
        rec.constant(&format!("decay_rate_n{n}"), fit.rate);
        if cols.is_empty() {
            cols.push(fit.times.clone());
        }
        cols.push(fit.norms);
    }
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    rec.columns("decay", &["t", "norm_n1", "norm_n2"], &refs);

    let f = Field::from_fn(g, |x| {
        (-0.5 * x * x).exp() * (1.0 + 0.5 * x) + 0.5 * (-(x - 3.0) * (x - 3.0)).exp()
    })?;
    let dec = gkdv::decompose_squared_eigenfunctions(prof.p, &f, 8.0, 256)?;
    rec.below(
        "gkdv.squared_eigenfunction_expansion",
        dec.relative_error,
        1e-2,
    );
    Ok(())
}

fn kdv_toolkit(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let prof = gkdv::build_q(2, req(cfg.params.c, "c")?, &g)?;
    let ks = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.3, 0.0),
        Complex64::new(0.5, 0.4),
    ];
    let mut jost: f64 = 0.0;
    let mut eig: f64 = 0.0;
    let mut rows = Vec::new();
    for k in ks {
        let j = gkdv::schrodinger_residual(k, &g)?;
        let e = gkdv::kdv_eigen_residual(k, &g)?;
        jost = jost.max(j);
        eig = eig.max(e);
        rows.push(vec![k.re, k.im, j, e]);
    }
    rec.below("gkdv.kdv_jost_ode", jost, 1e-8);
    rec.below("gkdv.kdv_squared_eigenrelation", eig, 1e-5);
    rec.table(
        "kdv_jost",
        &["kappa_re", "kappa_im", "ode_residual", "eigen_residual"],
        rows,
    );
    let (lam, odd) = gkdv::l1_ground_state(&prof)?;
    rec.below("gkdv.ground_state_negative", lam, 0.0);
    rec.below("gkdv.ground_state_even", odd, 1e-8);
    gkdv_common(cfg, &prof, rec)
}

fn mkdv_toolkit(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let g = make_grid(cfg)?;
    let prof = gkdv::build_q(3, req(cfg.params.c, "c")?, &g)?;
    let mut jost: f64 = 0.0;
    let mut zs_rows = Vec::new();
    for z in [0.0, 0.7, -1.3] {
        let r = gkdv::zs_residual(Complex64::new(z, 0.0), &g)?;
        jost = jost.max(r);
        zs_rows.push(vec![z, r]);
    }
    let mut eig: f64 = 0.0;
    let mut eig_rows = Vec::new();
    for k in [0.5, 1.0, 2.0] {
        let e = gkdv::mkdv_eigen_residual(k, &g)?;
        eig = eig.max(e);
        eig_rows.push(vec![k, e]);
    }
    rec.below("gkdv.zs_jost_system", jost, 1e-8);
    rec.below("gkdv.mkdv_squared_eigenrelation", eig, 1e-5);
    rec.table("zs_jost", &["zeta", "system_residual"], zs_rows);
    rec.table("mkdv_eigen", &["k", "eigen_residual"], eig_rows);
    let (lam, odd) = gkdv::l1_ground_state(&prof)?;
    rec.below("gkdv.ground_state_negative", lam, 0.0);
    rec.below("gkdv.ground_state_even", odd, 1e-8);
    gkdv_common(cfg, &prof, rec)
}
