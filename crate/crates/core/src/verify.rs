//! Invariant suites run by `mond-equilib verify`.
//!
//! Every check yields one row `check,status,value,tolerance`. Setups are
//! fixed and seeded, so a report is reproducible.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    run_perturbation, sample_from_equilibrium, PerturbationKind, RunOptions, Shell, ShellEnsemble,
};
use crate::equilibrium::{
    lift_kinetic, mass_curve, reduce_phi_to_psi, shoot, solve_for_mass, EquilibriumModel, SolverOptions,
};
use crate::error::{Error, Result};
use crate::functionals::{
    bump_perturbation, casimir, distance_fluid, epot_newton, epot_q, epot_q_lower_bound,
    epotq_directional_derivative, h_fluid, numerical_floor, random_admissible, taylor_remainder,
    AnsatzFunction, ReferenceDensity,
};
use crate::interpolation::{check_hoelder, check_q_taylor, InterpolationFunction};
use crate::quad::{linear_fit, logspace};
use crate::radial_field::{
    potentials, qumond_direct, standard_grid, PotentialNormalization, QumondOptions, RadialDensity,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Potential,
    Functionals,
    Equilibrium,
    Dynamics,
    All,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Potential => "potential",
            Suite::Functionals => "functionals",
            Suite::Equilibrium => "equilibrium",
            Suite::Dynamics => "dynamics",
            Suite::All => "all",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "potential" => Ok(Suite::Potential),
            "functionals" => Ok(Suite::Functionals),
            "equilibrium" => Ok(Suite::Equilibrium),
            "dynamics" => Ok(Suite::Dynamics),
            "all" => Ok(Suite::All),
            _ => Err(Error::Parse(format!(
                "unknown suite `{s}` (expected potential, functionals, equilibrium, dynamics or all)"
            ))),
        }
    }
}

/// Acceptance region of a check value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
    Equals(f64),
}

impl Tolerance {
    pub fn accepts(&self, v: f64) -> bool {
        match *self {
            Tolerance::AtMost(t) => v <= t,
            Tolerance::AtLeast(t) => v >= t,
            Tolerance::Within(lo, hi) => lo <= v && v <= hi,
            Tolerance::Equals(t) => v == t,
        }
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::AtMost(t) => write!(f, "<={t:e}"),
            Tolerance::AtLeast(t) => write!(f, ">={t:e}"),
            Tolerance::Within(lo, hi) => write!(f, "[{lo:e};{hi:e}]"),
            Tolerance::Equals(t) => write!(f, "={t:e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub value: f64,
    pub tolerance: Tolerance,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.tolerance.accepts(self.value)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<CheckRow>,
}

impl Report {
    pub fn push(&mut self, check: impl Into<String>, value: f64, tolerance: Tolerance) {
        self.rows.push(CheckRow {
            check: check.into(),
            value,
            tolerance,
        });
    }

    pub fn extend(&mut self, other: Report) {
        self.rows.extend(other.rows);
    }

    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(CheckRow::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.passed())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,status,value,tolerance\n");
        for r in &self.rows {
            let status = if r.passed() { "pass" } else { "fail" };
            out.push_str(&format!("{},{status},{:.6e},{}\n", r.check, r.value, r.tolerance));
        }
        out
    }
}

/// Runs one suite, or all of them.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Report> {
    match suite {
        Suite::Potential => potential_suite(seed),
        Suite::Functionals => functionals_suite(seed),
        Suite::Equilibrium => equilibrium_suite(),
        Suite::Dynamics => dynamics_suite(seed),
        Suite::All => {
            let mut r = potential_suite(seed)?;
            r.extend(functionals_suite(seed)?);
            r.extend(equilibrium_suite()?);
            r.extend(dynamics_suite(seed)?);
            Ok(r)
        }
    }
}

/// Checks on a user-supplied equilibrium.
pub fn model_checks(eq: &EquilibriumModel) -> Result<Report> {
    let mut r = Report::default();
    r.push("model_el_residual", eq.el_residual(1e-3), Tolerance::AtMost(1e-6));
    r.push(
        "model_mass_consistent",
        (eq.density.total_mass() - eq.total_mass).abs() / eq.total_mass,
        Tolerance::AtMost(1e-5),
    );
    r.push(
        "model_distance_to_self",
        distance_fluid(&eq.density, eq)?,
        Tolerance::Equals(0.0),
    );
    Ok(r)
}

fn families() -> [InterpolationFunction; 2] {
    [InterpolationFunction::sqrt(), InterpolationFunction::simple()]
}

/// Densities with different shapes for the field checks.
fn test_densities() -> Result<[RadialDensity; 3]> {
    Ok([
        RadialDensity::uniform_ball(2.0, 0.8, 200)?,
        RadialDensity::from_fn(standard_grid(1.0, 300), |r| (1.0 - r * r).powi(2))?,
        RadialDensity::from_fn(standard_grid(2.0, 300), |r| {
            (-(r - 1.0).powi(2) * 20.0).exp() * (2.0 - r)
        })?,
    ])
}

fn potential_suite(seed: u64) -> Result<Report> {
    let mut rep = Report::default();
    let pts = logspace(1e-4, 1e2, 45);
    for f in families() {
        let fam = f.family;
        let q = f.kernel();
        // Q(u) − Q(v) against (2Λ/3)(u^{3/2} − v^{3/2}) on all ordered pairs
        let (mut upper, mut lower) = (0.0f64, f64::INFINITY);
        for (i, &u) in pts.iter().enumerate() {
            for &v in &pts[..i] {
                let dq = q.eval(u)? - q.eval(v)?;
                let d32 = u.powf(1.5) - v.powf(1.5);
                upper = upper.max(dq / (2.0 * f.lambda2() / 3.0 * d32));
                if u <= f.small_sigma_threshold() {
                    lower = lower.min(dq / (2.0 * f.lambda1() / 3.0 * d32));
                }
            }
        }
        rep.push(
            format!("q_bound_upper_{fam}"),
            upper,
            Tolerance::AtMost(1.0 + 1e-9),
        );
        rep.push(
            format!("q_bound_lower_{fam}"),
            lower,
            Tolerance::AtLeast(1.0 - 1e-9),
        );

        let mut worst = 0.0f64;
        for v in logspace(1e-7, 1e4, 100) {
            let a = q.value(v);
            worst = worst.max((a - q.quadrature(v)?).abs() / a);
        }
        rep.push(
            format!("q_closed_form_vs_quadrature_{fam}"),
            worst,
            Tolerance::AtMost(1e-9),
        );

        let sig = logspace(1e-8, 1e8, 400);
        let lam = sig.iter().map(|&s| f.lambda(s)).collect::<Result<Vec<f64>>>()?;
        let increases = lam.windows(2).filter(|w| w[1] > w[0]).count();
        rep.push(
            format!("lambda_monotone_{fam}"),
            increases as f64,
            Tolerance::Equals(0.0),
        );

        let c = check_hoelder(&f, 10_000, seed)?;
        let c2 = check_hoelder(&f, 20_000, seed + 1)?;
        rep.push(
            format!("hoelder_doubling_{fam}"),
            (c2 - c).abs() / c,
            Tolerance::AtMost(0.2),
        );
        let t = check_q_taylor(&q, 10_000, seed)?;
        let t2 = check_q_taylor(&q, 20_000, seed + 1)?;
        rep.push(
            format!("q_taylor_doubling_{fam}"),
            (t2 - t).abs() / t,
            Tolerance::AtMost(0.2),
        );
    }
    let c = check_hoelder(&InterpolationFunction::sqrt(), 20_000, seed)?;
    rep.push(
        "hoelder_constant_sqrt",
        c,
        Tolerance::AtMost(2f64.sqrt() * (1.0 + 1e-12)),
    );

    let dens = test_densities()?;
    let mut violations = 0;
    for d in &dens {
        let (rr, m) = (d.support_radius(), d.total_mass());
        for k in 1..=50 {
            let r = rr * (1.0 + 0.1 * k as f64);
            let g = d.gn_at(r);
            let lower = (1.0 - rr * rr / (r * r)).sqrt() * m / (r + rr).powi(2);
            let upper = m / (r - rr).powi(2);
            if !(lower <= g && g <= upper) {
                violations += 1;
            }
        }
    }
    rep.push(
        "field_bounds_violations",
        violations as f64,
        Tolerance::Equals(0.0),
    );

    // U^M(r) − U^M(2R) − Λ₁ √(M/2) log(r/2R), smallest over r ≥ 2R
    let mut margin = f64::INFINITY;
    for f in families() {
        for d in &dens {
            let p = potentials(d, &f, PotentialNormalization::default());
            let (r2, m) = (2.0 * d.support_radius(), d.total_mass());
            for k in 1..=40 {
                let r = r2 * 1.3f64.powi(k);
                let bound = p.um_at(r2) + f.lambda1() * (m / 2.0).sqrt() * (r / r2).ln();
                margin = margin.min(p.um_at(r) - bound);
            }
        }
    }
    rep.push("log_growth_margin", margin, Tolerance::AtLeast(-1e-12));

    let mut worst = 0.0f64;
    for (d, f) in dens.iter().zip([
        InterpolationFunction::sqrt(),
        InterpolationFunction::simple(),
        InterpolationFunction::sqrt(),
    ]) {
        let p = potentials(d, &f, PotentialNormalization::default());
        let rr = d.support_radius();
        let radii = [0.2 * rr, 0.5 * rr, 0.9 * rr, 1.5 * rr, 3.0 * rr];
        let direct = qumond_direct(d, &f, &radii, &QumondOptions::default())?;
        for (r, u) in radii.iter().zip(direct) {
            worst = worst.max((u - p.ulam_at(*r)).abs() / p.ulam_at(*r).abs());
        }
    }
    rep.push("qumond_direct_vs_radial", worst, Tolerance::AtMost(1e-3));

    let f = InterpolationFunction::sqrt();
    let um = |n: usize| -> Result<f64> {
        let d = RadialDensity::from_fn(standard_grid(1.0, n), |r| (1.0 - r * r).max(0.0).powi(2))?;
        Ok(potentials(&d, &f, PotentialNormalization::default()).um_at(0.6))
    };
    let exact = um(6400)?;
    let errs = [um(50)? - exact, um(100)? - exact, um(200)? - exact];
    let order = (errs[0].abs() / errs[1].abs())
        .min(errs[1].abs() / errs[2].abs())
        .log2();
    rep.push("potential_refinement_order", order, Tolerance::AtLeast(1.5));
    Ok(rep)
}

/// The quadratic-ansatz equilibrium at central density one.
fn unit_model() -> Result<EquilibriumModel> {
    shoot(
        &AnsatzFunction::quadratic(),
        1.0,
        &InterpolationFunction::sqrt(),
        &SolverOptions::default(),
    )
}

fn functionals_suite(seed: u64) -> Result<Report> {
    let mut rep = Report::default();
    let pi = std::f64::consts::PI;
    let ball = RadialDensity::uniform_ball(1.0, 1.0, 200)?;
    rep.push(
        "epot_newton_uniform_ball",
        (epot_newton(&ball) + 0.6).abs() / 0.6,
        Tolerance::AtMost(1e-12),
    );
    let c = casimir(&ball, &AnsatzFunction::quadratic())?;
    let exact = 3.0 / (8.0 * pi);
    rep.push(
        "casimir_uniform_ball",
        (c - exact).abs() / exact,
        Tolerance::AtMost(1e-12),
    );

    // −E_pot^Q ≤ ∫_{r ≤ R̄} r² Q(gN) dr on random mass-one profiles
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = ReferenceDensity::uniform_ball(1.0, 1.0)?;
    let mut excess = f64::NEG_INFINITY;
    for f in families() {
        let q = f.kernel();
        for _ in 0..10 {
            let radius: f64 = rng.gen_range(0.3..2.0);
            let p: f64 = rng.gen_range(0.5..3.0);
            let raw = RadialDensity::from_fn(standard_grid(radius, 400), |r| {
                (1.0 - (r / radius).powi(2)).max(0.0).powf(p)
            })?;
            let scale = 1.0 / raw.total_mass();
            let d = RadialDensity::new(raw.grid().to_vec(), raw.rho().iter().map(|x| x * scale).collect())?;
            let lhs = -epot_q(&d, &reference, &q)?;
            let rhs = epot_q_lower_bound(&d, &reference, &q);
            excess = excess.max((lhs - rhs) / rhs.abs().max(1e-300));
        }
    }
    rep.push("energy_chain_excess", excess, Tolerance::AtMost(1e-10));

    let eq = unit_model()?;
    let reference = ReferenceDensity::matching(&eq.density);
    rep.push(
        "distance_at_equilibrium",
        distance_fluid(&eq.density, &eq)?,
        Tolerance::Equals(0.0),
    );
    let mut min_d = f64::INFINITY;
    let mut min_gain = f64::INFINITY;
    let h0 = h_fluid(&eq.density, &eq.ansatz, &eq.interp, &reference, None)?.h_value;
    for i in 0..100 {
        let phi = random_admissible(&eq.density, &mut rng);
        let p = eq.density.perturbed(&phi, 1.0)?;
        if p.integrate_volume(|r| (p.rho_at(r) - eq.density.rho_at(r)).abs()) > 1e-6 {
            min_d = min_d.min(distance_fluid(&p, &eq)?);
        }
        if i < 50 {
            let h = h_fluid(&p, &eq.ansatz, &eq.interp, &reference, None)?.h_value;
            min_gain = min_gain.min(h - h0);
        }
    }
    rep.push(
        "distance_positive_min",
        min_d,
        Tolerance::AtLeast(f64::MIN_POSITIVE),
    );
    rep.push(
        "minimizer_gain_min",
        min_gain,
        Tolerance::AtLeast(-numerical_floor(h0)),
    );

    let phi = bump_perturbation(ball.grid(), 0.3, 0.75, 0.2);
    let dd = epotq_directional_derivative(
        &ball,
        &phi,
        &ReferenceDensity::matching(&ball),
        &InterpolationFunction::sqrt(),
        &[1e-2, 1e-3, 1e-4],
    )?;
    rep.push(
        "directional_derivative_order",
        dd.error_order.unwrap_or(f64::NAN),
        Tolerance::AtLeast(0.9),
    );

    let r0 = eq.support_radius;
    let phi = bump_perturbation(eq.density.grid(), 0.25 * r0, 0.6 * r0, 0.2 * r0);
    let amp = admissible_amplitude(&eq.density, &phi);
    let taus = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut rem = Vec::new();
    let mut identity = 0.0f64;
    for &tau in &taus {
        let p = eq.density.perturbed(&phi, tau * amp)?;
        let t = taylor_remainder(&p, &eq, &reference)?;
        rem.push(t.remainder.abs());
        // below τ = 10⁻² the Newtonian part is lost to cancellation
        if tau >= 1e-2 {
            identity = identity.max((t.newton_part - t.newton_identity).abs() / t.newton_identity.abs());
        }
    }
    rep.push("newtonian_remainder_identity", identity, Tolerance::AtMost(1e-8));
    let lt: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let lr: Vec<f64> = rem.iter().map(|r| r.ln()).collect();
    rep.push(
        "taylor_remainder_exponent",
        linear_fit(&lt, &lr).1,
        Tolerance::AtLeast(1.5),
    );
    Ok(rep)
}

/// Largest `τ` with `ρ + τφ ≥ 0`.
pub fn admissible_amplitude(rho: &RadialDensity, phi: &[f64]) -> f64 {
    phi.iter()
        .zip(rho.rho())
        .filter(|(p, _)| **p < 0.0)
        .map(|(p, r)| r / -p)
        .fold(f64::INFINITY, f64::min)
}

fn equilibrium_suite() -> Result<Report> {
    let mut rep = Report::default();
    let a = AnsatzFunction::quadratic();
    let f = InterpolationFunction::sqrt();
    let opts = SolverOptions::default();

    let res: Vec<f64> = [1000, 2000, 4000]
        .iter()
        .map(|&n| {
            let o = SolverOptions {
                grid_nodes: n,
                ..opts
            };
            shoot(&a, 1.0, &f, &o).map(|m| m.el_residual(1e-3))
        })
        .collect::<Result<_>>()?;
    rep.push("el_residual", res[2], Tolerance::AtMost(1e-6));
    let order = (res[0] / res[1]).min(res[1] / res[2]).log2();
    rep.push("el_residual_order", order, Tolerance::AtLeast(1.9));

    let scan = mass_curve(&a, &f, 1e-4, 1e3, 60, &opts)?;
    let drops = scan.masses.windows(2).filter(|w| w[1] <= w[0]).count();
    rep.push(
        "mass_curve_monotone_violations",
        drops as f64,
        Tolerance::Equals(0.0),
    );

    let deep = mass_curve(&a, &f, 1e-4, 1e-2, 12, &opts)?;
    let fit = deep
        .fit_deep
        .ok_or_else(|| Error::Validation("deep range has no fit".into()))?;
    rep.push("deep_slope", fit.exponent, Tolerance::Within(1.98, 2.02));
    let c = deep.deep_fixed().map_or(f64::NAN, |f| f.coefficient);
    rep.push("deep_coefficient", c, Tolerance::Within(1.0, 1.12));

    let newton = crate::equilibrium::shoot_surface(&a, 1e4, &f, &opts)?;
    let half_sqrt_pi = std::f64::consts::PI.sqrt() / 2.0;
    rep.push(
        "lane_emden_mass_ratio",
        (newton.mass / 1e4 - half_sqrt_pi).abs() / half_sqrt_pi,
        Tolerance::AtMost(0.05),
    );

    let s0 = 0.37;
    let target = crate::equilibrium::shoot_surface(&a, s0, &f, &opts)?.mass;
    let back = solve_for_mass(&a, &f, target, (1e-3, 1e3), &opts)?;
    rep.push(
        "solve_for_mass_round_trip",
        (back.central_value - s0).abs() / s0,
        Tolerance::AtMost(1e-6),
    );

    let phi = AnsatzFunction::kinetic(0.5, 1.0)?;
    let red = reduce_phi_to_psi(&phi, &[1e-4, 1e-2, 1.0, 1e2, 1e4])?;
    rep.push(
        "reduction_exponent",
        (red.fitted_n() - 2.0).abs(),
        Tolerance::AtMost(1e-3),
    );
    let km = lift_kinetic(&phi, &f, 1.0, &opts)?;
    rep.push(
        "lift_density_mismatch",
        km.density_mismatch(),
        Tolerance::AtMost(1e-6),
    );
    let (hb, he) = lift_energies(&km.base, &km)?;
    rep.push(
        "lift_hb_vs_he",
        (hb - he).abs() / he.abs(),
        Tolerance::AtMost(1e-6),
    );
    Ok(rep)
}

/// `(H_B(f₀), H_E(ρ₀))` against a unit-radius reference ball.
pub fn lift_energies(eq: &EquilibriumModel, km: &crate::equilibrium::KineticModel) -> Result<(f64, f64)> {
    let reference = ReferenceDensity::uniform_ball(eq.density.total_mass(), 1.0)?;
    let hb = km.h_b(1.0)?.h_value;
    let he = h_fluid(&eq.density, &eq.ansatz, &eq.interp, &reference, None)?.h_value;
    Ok((hb, he))
}

fn dynamics_suite(seed: u64) -> Result<Report> {
    let mut rep = Report::default();
    let f = InterpolationFunction::sqrt();

    // circular orbit in gM = 1/r² + 1/r around a unit point mass
    let mut e =
        ShellEnsemble::new(vec![1.0], vec![0.0], vec![2f64.sqrt()], vec![1e-12], 1e-9)?.with_point_mass(1.0);
    let period = std::f64::consts::TAU / 2f64.sqrt();
    for _ in 0..10_000 {
        e.step(&f, period / 1e4);
    }
    rep.push(
        "circular_orbit_radius_error",
        (e.shells()[0].r - 1.0).abs(),
        Tolerance::AtMost(1e-4),
    );

    let phi = AnsatzFunction::kinetic(0.5, 1.0)?;
    let km = lift_kinetic(&phi, &f, 1.0, &SolverOptions::default())?;
    let eq = &km.base;
    let n = 100_000;
    let ens = sample_from_equilibrium(&km, n, seed)?;
    rep.push(
        "sample_mass_error",
        (ens.total_mass() / eq.density.total_mass() - 1.0).abs(),
        Tolerance::AtMost(1e-10),
    );
    let unbound = ens
        .shells()
        .iter()
        .filter(|s| 0.5 * (s.v_r * s.v_r + (s.l / s.r).powi(2)) + eq.fields.um_at(s.r) >= eq.cutoff_energy)
        .count();
    rep.push("sample_unbound_shells", unbound as f64, Tolerance::Equals(0.0));
    let binned = ens.binned_density(eq.support_radius / crate::dynamics::BINS_PER_RADIUS as f64)?;
    let l1 = binned.integrate_volume(|r| (binned.rho_at(r) - eq.density.rho_at(r)).abs()) / eq.total_mass;
    rep.push("sample_binned_l1_error", l1, Tolerance::AtMost(0.05));

    let mut small = sample_from_equilibrium(&km, 1000, seed)?;
    let start = small.clone();
    let dt = eq.dynamical_time() / 400.0;
    for _ in 0..100 {
        small.step(&f, dt);
    }
    small.reverse();
    for _ in 0..100 {
        small.step(&f, dt);
    }
    small.reverse();
    let back = by_id(&start)
        .iter()
        .zip(by_id(&small))
        .map(|(s, t)| (t.r - s.r).abs().max((t.v_r - s.v_r).abs()))
        .fold(0.0, f64::max);
    rep.push("leapfrog_reversal_error", back, Tolerance::AtMost(1e-10));

    let opts = RunOptions {
        shells: 10_000,
        t_end_dyn: 2.0,
        seed,
        ..RunOptions::default()
    };
    let run = run_perturbation(&km, PerturbationKind::VelocityScale, 0.01, &opts)?;
    rep.push(
        "short_run_energy_drift",
        run.energy_drift(),
        Tolerance::AtMost(1e-3),
    );
    let l_change = start_l_change(&run.last, &km, &opts)?;
    rep.push("angular_momentum_change", l_change, Tolerance::Equals(0.0));
    Ok(rep)
}

/// Largest change of any shell's `L` over a run, against a fresh draw with
/// the same seed and perturbation.
fn start_l_change(
    last: &ShellEnsemble,
    km: &crate::equilibrium::KineticModel,
    opts: &RunOptions,
) -> Result<f64> {
    let mut first = sample_from_equilibrium(km, opts.shells, opts.seed)?;
    crate::dynamics::perturb(&mut first, PerturbationKind::VelocityScale, 0.01);
    Ok(by_id(&first)
        .iter()
        .zip(by_id(last))
        .map(|(s, t)| (t.l - s.l).abs())
        .fold(0.0, f64::max))
}

fn by_id(e: &ShellEnsemble) -> Vec<Shell> {
    let mut v = e.shells().to_vec();
    v.sort_by_key(|s| s.id);
    v
}
