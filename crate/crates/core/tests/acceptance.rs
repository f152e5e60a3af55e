//! Acceptance criteria, one line each.
//!
//! Runs as a plain binary (`harness = false`) so the report reads top to
//! bottom. Criteria listed in `KNOWN_BLOCKERS` are still evaluated and
//! reported as FAIL; only an unexpected failure fails the target.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mond_equilib::dynamics::{run_perturbation, PerturbationKind, RunOptions};
use mond_equilib::equilibrium::{
    fixed_power_coefficient, lift_kinetic, mass_curve, reduce_phi_to_psi, shoot, EquilibriumModel,
    SolverOptions,
};
use mond_equilib::functionals::{
    bump_perturbation, distance_fluid, epotq_directional_derivative, random_admissible, taylor_remainder,
    AnsatzFunction, ReferenceDensity,
};
use mond_equilib::quad::linear_fit;
use mond_equilib::radial_field::{
    potentials, qumond_direct, standard_grid, PotentialNormalization, QumondOptions,
};
use mond_equilib::verify::{admissible_amplitude, lift_energies, run_suite, Suite};
use mond_equilib::{InterpolationFunction, RadialDensity, Result};

/// Criteria that fail for documented physical or budget reasons.
const KNOWN_BLOCKERS: [u32; 2] = [3, 11];

type Criterion = (u32, &'static str, fn() -> Result<Outcome>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn sqrt_lambda() -> InterpolationFunction {
    InterpolationFunction::sqrt()
}

fn quadratic() -> AnsatzFunction {
    AnsatzFunction::quadratic()
}

fn deep_slope() -> Result<Outcome> {
    let t = Instant::now();
    let c = mass_curve(
        &quadratic(),
        &sqrt_lambda(),
        1e-4,
        1e-2,
        12,
        &SolverOptions::default(),
    )?;
    let p = c.fit_deep.map_or(f64::NAN, |f| f.exponent);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        (p - 2.0).abs() <= 0.02 && secs < 10.0,
        format!("slope {p:.4} (target 2.00 ± 0.02), {secs:.2} s (< 10 s)"),
    )
}

fn deep_coefficient() -> Result<Outcome> {
    let c = mass_curve(
        &quadratic(),
        &sqrt_lambda(),
        1e-4,
        1e-2,
        12,
        &SolverOptions::default(),
    )?;
    let log_c = c.deep_fixed().map_or(f64::NAN, |f| f.coefficient);
    let lin_c = fixed_power_coefficient(&c.s_values, &c.masses, 2.0);
    outcome(
        (1.0..=1.12).contains(&log_c),
        format!("c = {log_c:.4} from log-space least squares (target [1.00, 1.12]); linear least squares gives {lin_c:.4}"),
    )
}

fn newton_scaling() -> Result<Outcome> {
    let t = Instant::now();
    let opts = SolverOptions::default();
    let c = mass_curve(&quadratic(), &sqrt_lambda(), 1e2, 1e4, 2, &opts)?;
    let p = c.fit_newton.map_or(f64::NAN, |f| f.exponent);
    let ratio = c.masses[1] / 1e4;
    let half_sqrt_pi = PI.sqrt() / 2.0;
    let dev = (ratio / half_sqrt_pi - 1.0).abs();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        (p - 1.0).abs() <= 0.02 && dev <= 0.05 && secs < 30.0,
        format!(
            "slope {p:.4} (target 1.00 ± 0.02); M/s at 1e4 = {ratio:.4}, {:.2}% from √π/2 (≤ 5%); {secs:.2} s",
            100.0 * dev
        ),
    )
}

fn uniqueness() -> Result<Outcome> {
    let c = mass_curve(
        &quadratic(),
        &sqrt_lambda(),
        1e-4,
        1e3,
        60,
        &SolverOptions::default(),
    )?;
    let drops = c.masses.windows(2).filter(|w| w[1] <= w[0]).count();
    outcome(
        drops == 0,
        format!("{drops} non-increasing steps over 60 points on [1e-4, 1e3]"),
    )
}

fn el_residual() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut order = f64::INFINITY;
    for s in [1e-3, 1.0, 1e3] {
        let res: Vec<f64> = [1000, 2000, 4000]
            .iter()
            .map(|&n| {
                let o = SolverOptions {
                    grid_nodes: n,
                    ..SolverOptions::default()
                };
                shoot(&quadratic(), s, &sqrt_lambda(), &o).map(|m| m.el_residual(1e-3))
            })
            .collect::<Result<_>>()?;
        worst = worst.max(res[2]);
        order = order.min((res[0] / res[1]).log2()).min((res[1] / res[2]).log2());
    }
    outcome(
        worst <= 1e-6 && order >= 1.9,
        format!("residual {worst:.2e} at 4000 nodes (≤ 1e-6); order ≥ {order:.3} over 1000/2000/4000 nodes"),
    )
}

fn qumond_consistency() -> Result<Outcome> {
    let t = Instant::now();
    let dens = [
        (
            RadialDensity::uniform_ball(1.0, 1.0, 400)?,
            InterpolationFunction::sqrt(),
        ),
        (
            RadialDensity::from_fn(standard_grid(1.0, 300), |r| (1.0 - r * r).powi(2))?,
            InterpolationFunction::simple(),
        ),
        (
            RadialDensity::from_fn(standard_grid(2.0, 300), |r| {
                (-(r - 1.0).powi(2) * 20.0).exp() * (2.0 - r)
            })?,
            InterpolationFunction::sqrt(),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (d, f) in &dens {
        let p = potentials(d, f, PotentialNormalization::default());
        let r0 = d.support_radius();
        let radii = [0.2 * r0, 0.5 * r0, 0.9 * r0, 1.5 * r0, 3.0 * r0];
        for (r, u) in radii
            .iter()
            .zip(qumond_direct(d, f, &radii, &QumondOptions::default())?)
        {
            worst = worst.max((u / p.ulam_at(*r) - 1.0).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-3 && secs < 60.0,
        format!("max relative difference {worst:.2e} over 15 probes (≤ 1e-3), {secs:.2} s (< 60 s)"),
    )
}

fn directional_derivative() -> Result<Outcome> {
    let d = RadialDensity::uniform_ball(1.0, 1.0, 400)?;
    let phi = bump_perturbation(d.grid(), 0.3, 0.75, 0.2);
    let dd = epotq_directional_derivative(
        &d,
        &phi,
        &ReferenceDensity::matching(&d),
        &sqrt_lambda(),
        &[1e-2, 1e-3, 1e-4],
    )?;
    let order = dd.error_order.unwrap_or(f64::NAN);
    outcome(
        order >= 0.9,
        format!("error slope {order:.4} (≥ 0.9), limit {:.6e}", dd.limit),
    )
}

fn unit_model() -> Result<EquilibriumModel> {
    shoot(&quadratic(), 1.0, &sqrt_lambda(), &SolverOptions::default())
}

fn distance_positivity() -> Result<Outcome> {
    let eq = unit_model()?;
    let at_eq = distance_fluid(&eq.density, &eq)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut min_d = f64::INFINITY;
    for _ in 0..100 {
        let phi = random_admissible(&eq.density, &mut rng);
        min_d = min_d.min(distance_fluid(&eq.density.perturbed(&phi, 1.0)?, &eq)?);
    }
    outcome(
        at_eq == 0.0 && min_d > 0.0,
        format!("d(ρ₀, ρ₀) = {at_eq:e}; min d over 100 perturbations = {min_d:.3e} (> 0)"),
    )
}

fn lift_consistency() -> Result<Outcome> {
    let phi = AnsatzFunction::kinetic(0.5, 1.0)?;
    let n = reduce_phi_to_psi(&phi, &[1e-4, 1e-2, 1.0, 1e2, 1e4])?.fitted_n();
    let km = lift_kinetic(&phi, &sqrt_lambda(), 1.0, &SolverOptions::default())?;
    let (hb, he) = lift_energies(&km.base, &km)?;
    let rel = (hb / he - 1.0).abs();
    let mismatch = km.density_mismatch();
    outcome(
        rel <= 1e-6 && mismatch <= 1e-6 && (n - 2.0).abs() <= 1e-3,
        format!(
            "|H_B/H_E − 1| = {rel:.2e}, density mismatch {mismatch:.2e} (both ≤ 1e-6); n = {n:.6} (2 ± 1e-3)"
        ),
    )
}

fn taylor_remainder_scaling() -> Result<Outcome> {
    let eq = unit_model()?;
    let reference = ReferenceDensity::matching(&eq.density);
    let r0 = eq.support_radius;
    let phi = bump_perturbation(eq.density.grid(), 0.25 * r0, 0.6 * r0, 0.2 * r0);
    let amp = admissible_amplitude(&eq.density, &phi);
    let taus = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut rem = Vec::new();
    let mut identity = 0.0;
    for &tau in &taus {
        let t = taylor_remainder(&eq.density.perturbed(&phi, tau * amp)?, &eq, &reference)?;
        rem.push(t.remainder.abs().ln());
        if tau == taus[0] {
            identity = (t.newton_part / t.newton_identity - 1.0).abs();
        }
    }
    let lt: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let slope = linear_fit(&lt, &rem).1;
    outcome(
        slope >= 1.5 && identity <= 1e-8,
        format!("remainder exponent {slope:.4} (≥ 1.5); Newtonian identity relative error {identity:.2e} (≤ 1e-8)"),
    )
}

fn stability() -> Result<Outcome> {
    let t = Instant::now();
    let phi = AnsatzFunction::kinetic(0.5, 1.0)?;
    let km = lift_kinetic(&phi, &sqrt_lambda(), 1.0, &SolverOptions::default())?;
    let run = run_perturbation(&km, PerturbationKind::VelocityScale, 0.01, &RunOptions::default())?;
    let secs = t.elapsed().as_secs_f64();
    let (growth, drift) = (run.growth_factor(), run.energy_drift());
    outcome(
        growth <= 10.0 && drift <= 1e-3 && secs < 300.0,
        format!(
            "growth {growth:.2} (≤ 10), energy drift {drift:.2e} (≤ 1e-3), late/early mean {:.2}, {secs:.0} s (< 300 s)",
            run.secular_growth()
        ),
    )
}

fn bound_suites() -> Result<Outcome> {
    let t = Instant::now();
    let report = run_suite(Suite::All, 1)?;
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<&str> = report.failures().map(|r| r.check.as_str()).collect();
    outcome(
        failed.is_empty() && secs < 30.0,
        format!(
            "{} checks, failed: {failed:?}, {secs:.2} s (< 30 s)",
            report.rows.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        (1, "deep-MOND scaling", deep_slope),
        (2, "deep-MOND coefficient", deep_coefficient),
        (3, "Newtonian scaling", newton_scaling),
        (4, "uniqueness scan", uniqueness),
        (5, "Euler-Lagrange residual", el_residual),
        (6, "QUMOND consistency", qumond_consistency),
        (7, "variational derivative", directional_derivative),
        (8, "distance positivity", distance_positivity),
        (9, "lift consistency", lift_consistency),
        (10, "Taylor remainder", taylor_remainder_scaling),
        (11, "stability experiment", stability),
        (12, "bound suites", bound_suites),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| name.contains(f.as_str()) || id.to_string() == *f)
        {
            continue;
        }
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let blocker = KNOWN_BLOCKERS.contains(&id);
        let note = if !pass && blocker { " [known blocker]" } else { "" };
        println!(
            "criterion {id:>2} {:<4} {name}: {detail}{note}",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass && !blocker {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
