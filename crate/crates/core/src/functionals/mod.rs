//! Energy functionals of spherically symmetric densities.
//!
//! Every 3D integral is reduced to a radial one before quadrature:
//!
//! ```text
//! E_pot^N(ρ) = −½ ∫₀^∞ M(r)²/r² dr
//! E_pot^Q(ρ) = −∫₀^∞ r² (Q(gN) − Q(ḡN)) dr
//! C(ρ)       = 4π ∫₀^∞ r² Ψ(ρ) dr
//! ```
//!
//! `E_pot^Q` is measured against a reference density `ρ̄` of the same mass,
//! without which the Mondian energy of an isolated system diverges
//! logarithmically.

mod ansatz;
mod perturbation;

pub use ansatz::{AnsatzFunction, AnsatzKind};
pub use perturbation::{bump, bump_perturbation, random_admissible};

use std::fmt::Write as _;

use crate::equilibrium::EquilibriumModel;
use crate::error::{Error, Result};
use crate::interpolation::{InterpolationFunction, QKernel};
use crate::quad::{linear_fit, GaussLegendre};
use crate::radial_field::{fmt_f64, integrate_segment, merge_grids, net_mass, RadialDensity};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Relative mass mismatch tolerated between a density and its reference.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Radius of the default reference ball.
pub const DEFAULT_REFERENCE_RADIUS: f64 = 1.0;

/// Reference density `ρ̄` for `E_pot^Q`.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceDensity {
    /// Homogeneous ball, whose field is known in closed form.
    UniformBall {
        mass: f64,
        radius: f64,
    },
    Profile(RadialDensity),
}

impl ReferenceDensity {
    pub fn uniform_ball(mass: f64, radius: f64) -> Result<Self> {
        if !(mass >= 0.0 && radius > 0.0 && mass.is_finite() && radius.is_finite()) {
            return Err(Error::Domain(format!(
                "reference ball needs mass >= 0 and radius > 0, got {mass}, {radius}"
            )));
        }
        Ok(Self::UniformBall { mass, radius })
    }

    /// Uniform ball of radius [`DEFAULT_REFERENCE_RADIUS`] with the mass of `d`.
    pub fn matching(d: &RadialDensity) -> Self {
        Self::UniformBall {
            mass: d.total_mass(),
            radius: DEFAULT_REFERENCE_RADIUS,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Self::UniformBall { mass, .. } => *mass,
            Self::Profile(d) => d.total_mass(),
        }
    }

    pub fn support_radius(&self) -> f64 {
        match self {
            Self::UniformBall { radius, .. } => *radius,
            Self::Profile(d) => d.support_radius(),
        }
    }

    pub fn gn_at(&self, r: f64) -> f64 {
        match self {
            Self::UniformBall { mass, radius } => {
                if r <= 0.0 {
                    0.0
                } else if r < *radius {
                    mass * r / radius.powi(3)
                } else {
                    mass / (r * r)
                }
            }
            Self::Profile(d) => d.gn_at(r),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::UniformBall { radius, .. } => vec![0.0, *radius],
            Self::Profile(d) => d.grid().to_vec(),
        }
    }
}

fn check_masses(a: f64, b: f64, tol: f64) -> Result<()> {
    let scale = a.abs().max(b.abs());
    if (a - b).abs() > tol * scale {
        return Err(Error::Validation(format!(
            "masses must agree: {a:.17e} vs {b:.17e}"
        )));
    }
    Ok(())
}

/// `Σ` over segments of the merged breakpoints up to `upper`, with the
/// `√r` substitution on the segment touching the centre.
pub(crate) fn integrate_merged<F: Fn(f64) -> f64>(breaks: &[f64], upper: f64, f: F) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&r| r < upper).collect();
    pts.push(upper);
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let (mut a, b) = (w[0], w[1]);
        // long segments past the density grid see 1/r-type tails
        while a > 0.0 && b > MAX_SEGMENT_RATIO * a {
            acc += integrate_segment(&f, a, a * MAX_SEGMENT_RATIO);
            a *= MAX_SEGMENT_RATIO;
        }
        acc += integrate_segment(&f, a, b);
    }
    acc
}

const MAX_SEGMENT_RATIO: f64 = 1.05;

/// `E_pot^N(ρ) = −(1/8π) ∫ |∇U^N|² dx`.
pub fn epot_newton(d: &RadialDensity) -> f64 {
    let gl = GaussLegendre::five();
    let mut acc = 0.0;
    for w in d.grid().windows(2) {
        acc += gl.integrate(
            |r| {
                let m = d.mass_at(r);
                if r > 0.0 {
                    m * m / (r * r)
                } else {
                    0.0
                }
            },
            w[0],
            w[1],
        );
    }
    let m = d.total_mass();
    -0.5 * (acc + m * m / d.outer_radius())
}

/// `E_pot^Q(ρ) = −(1/4π) ∫ [Q(|∇U^N_ρ|) − Q(|∇Ū^N|)] dx`.
pub fn epot_q(d: &RadialDensity, reference: &ReferenceDensity, q: &QKernel) -> Result<f64> {
    check_masses(d.total_mass(), reference.total_mass(), MASS_TOLERANCE)?;
    let upper = d.support_radius().max(reference.support_radius());
    if upper == 0.0 {
        return Ok(0.0);
    }
    let breaks = merge_grids(d.grid(), &reference.breakpoints());
    Ok(-integrate_merged(&breaks, upper, |r| {
        r * r * (q.value(d.gn_at(r)) - q.value(reference.gn_at(r)))
    }))
}

/// `C(ρ) = ∫ Ψ(ρ) dx`.
pub fn casimir(d: &RadialDensity, a: &AnsatzFunction) -> Result<f64> {
    if a.kind != AnsatzKind::FluidPsi {
        return Err(Error::Domain("the fluid Casimir functional needs Ψ".into()));
    }
    Ok(d.integrate_volume(|r| a.value(d.rho_at(r))))
}

/// `‖gN_d − gN_base‖_p` over all of space; the masses must agree, otherwise
/// the exterior tail diverges for `p ≤ 3`.
pub fn grad_deviation(d: &RadialDensity, base: &RadialDensity, p: f64) -> Result<f64> {
    check_masses(d.total_mass(), base.total_mass(), MASS_TOLERANCE)?;
    let upper = d.support_radius().max(base.support_radius());
    if upper == 0.0 {
        return Ok(0.0);
    }
    let breaks = merge_grids(d.grid(), base.grid());
    let v = FOUR_PI
        * integrate_merged(&breaks, upper, |r| {
            r * r * (d.gn_at(r) - base.gn_at(r)).abs().powf(p)
        });
    Ok(v.powf(1.0 / p))
}

/// Energies and norms of one density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub epot_newton: f64,
    pub epot_q: f64,
    pub casimir: f64,
    pub ekin: f64,
    /// `epot_newton + epot_q + ekin + casimir`.
    pub h_value: f64,
    pub norm_l1: f64,
    pub norm_l65: f64,
    /// `‖ρ‖_{1+1/n}`.
    pub norm_lpsi: f64,
    pub grad_l2_dev: f64,
    pub grad_l32_dev: f64,
}

impl EnergyReport {
    pub fn epot_mond(&self) -> f64 {
        self.epot_newton + self.epot_q
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,value\n");
        for (k, v) in [
            ("epot_newton", self.epot_newton),
            ("epot_q", self.epot_q),
            ("casimir", self.casimir),
            ("ekin", self.ekin),
            ("h_value", self.h_value),
            ("norm_l1", self.norm_l1),
            ("norm_l65", self.norm_l65),
            ("grad_l2_dev", self.grad_l2_dev),
            ("grad_l32_dev", self.grad_l32_dev),
        ] {
            let _ = writeln!(out, "{k},{}", fmt_f64(v));
        }
        out
    }
}

/// `H_E(ρ) = E_pot^M(ρ) + C(ρ)` with all components. Gradient deviations
/// are taken against `baseline` when one is given and are zero otherwise.
pub fn h_fluid(
    d: &RadialDensity,
    a: &AnsatzFunction,
    f: &InterpolationFunction,
    reference: &ReferenceDensity,
    baseline: Option<&RadialDensity>,
) -> Result<EnergyReport> {
    let epot_newton = epot_newton(d);
    let epot_q = epot_q(d, reference, &f.kernel())?;
    let casimir = casimir(d, a)?;
    let (grad_l2_dev, grad_l32_dev) = match baseline {
        Some(b) => (grad_deviation(d, b, 2.0)?, grad_deviation(d, b, 1.5)?),
        None => (0.0, 0.0),
    };
    Ok(EnergyReport {
        epot_newton,
        epot_q,
        casimir,
        ekin: 0.0,
        h_value: epot_newton + epot_q + casimir,
        norm_l1: d.lp_norm(1.0),
        norm_l65: d.lp_norm(1.2),
        norm_lpsi: d.lp_norm(a.power()),
        grad_l2_dev,
        grad_l32_dev,
    })
}

/// Numerical floor for sign assertions on energies of size `h`.
pub fn numerical_floor(h: f64) -> f64 {
    1e-12 * (h.abs() + 1.0)
}

/// `d(ρ, ρ₀) = ∫ [Ψ(ρ) − Ψ(ρ₀) + (U^M₀ − E₀)(ρ − ρ₀)] dx`.
///
/// The `E₀` term integrates to zero for equal masses; keeping it makes the
/// integrand pointwise non-negative, so no large terms cancel.
pub fn distance_fluid(d: &RadialDensity, eq: &EquilibriumModel) -> Result<f64> {
    let rho0 = &eq.density;
    check_masses(d.total_mass(), rho0.total_mass(), MASS_TOLERANCE)?;
    let a = &eq.ansatz;
    let e0 = eq.cutoff_energy;
    let upper = d.outer_radius().max(rho0.outer_radius());
    let breaks = merge_grids(d.grid(), rho0.grid());
    Ok(FOUR_PI
        * integrate_merged(&breaks, upper, |r| {
            let (x, x0) = (d.rho_at(r), rho0.rho_at(r));
            r * r * (a.value(x) - a.value(x0) + (eq.fields.um_at(r) - e0) * (x - x0))
        }))
}

/// Finite-difference slopes of `E_pot^Q` along a mass-neutral direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalDerivative {
    pub taus: Vec<f64>,
    pub slopes: Vec<f64>,
    /// `∫ U^λ_ρ φ dx`.
    pub limit: f64,
    /// Log-log slope of `|slope − limit|` against `τ`; `None` when all
    /// errors vanish.
    pub error_order: Option<f64>,
}

impl DirectionalDerivative {
    pub fn errors(&self) -> Vec<f64> {
        self.slopes.iter().map(|s| (s - self.limit).abs()).collect()
    }
}

/// `[E_pot^Q(ρ + τφ) − E_pot^Q(ρ)]/τ` for each `τ`, compared with the
/// first variation `∫ U^λ_ρ φ dx`. `phi` holds nodal values on `d`'s grid.
pub fn epotq_directional_derivative(
    d: &RadialDensity,
    phi: &[f64],
    reference: &ReferenceDensity,
    f: &InterpolationFunction,
    taus: &[f64],
) -> Result<DirectionalDerivative> {
    if phi.len() != d.len() {
        return Err(Error::Validation(
            "perturbation needs one value per grid node".into(),
        ));
    }
    let scale = net_mass(d.grid(), &phi.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let net = net_mass(d.grid(), phi);
    if net.abs() > 1e-12 * scale.max(1e-300) {
        return Err(Error::Validation(format!(
            "perturbation must carry zero mass, carries {net:e}"
        )));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::Validation(format!("step sizes must be positive, got {t}")));
    }
    let q = f.kernel();
    let base = epot_q(d, reference, &q)?;
    let slopes = taus
        .iter()
        .map(|&t| {
            let p = d.perturbed(phi, t)?;
            Ok((epot_q(&p, reference, &q)? - base) / t)
        })
        .collect::<Result<Vec<f64>>>()?;
    let fields = crate::radial_field::potentials(d, f, Default::default());
    let grid = d.grid();
    let gl = GaussLegendre::five();
    let mut limit = 0.0;
    for (i, w) in grid.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        limit += gl.integrate(
            |r| {
                let t = (r - a) / (b - a);
                let ph = phi[i] + t * (phi[i + 1] - phi[i]);
                r * r * fields.ulam_at(r) * ph
            },
            a,
            b,
        );
    }
    limit *= FOUR_PI;
    let errs: Vec<f64> = slopes.iter().map(|s| (s - limit).abs()).collect();
    let error_order = if errs.iter().all(|e| *e > 0.0) && taus.len() >= 2 {
        let lt: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
        let le: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        Some(linear_fit(&lt, &le).1)
    } else {
        None
    };
    Ok(DirectionalDerivative {
        taus: taus.to_vec(),
        slopes,
        limit,
        error_order,
    })
}

/// Second-order remainder of `H_E` around an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorRemainder {
    /// `H_E(ρ) − H_E(ρ₀) − d(ρ, ρ₀)`.
    pub remainder: f64,
    /// `E_pot^N(ρ) − E_pot^N(ρ₀) − ∫ U^N₀ (ρ − ρ₀) dx`.
    pub newton_part: f64,
    /// `−(1/8π) ‖∇U^N − ∇U^N₀‖₂²`, computed from the mass difference.
    pub newton_identity: f64,
    /// `E_pot^Q(ρ) − E_pot^Q(ρ₀) − ∫ U^λ₀ (ρ − ρ₀) dx`.
    pub mond_part: f64,
    /// `‖∇U^N − ∇U^N₀‖₂²`.
    pub grad_l2_sq: f64,
    /// `‖∇U^N − ∇U^N₀‖_{3/2}^{3/2}`.
    pub grad_l32_pow: f64,
}

pub fn taylor_remainder(
    d: &RadialDensity,
    eq: &EquilibriumModel,
    reference: &ReferenceDensity,
) -> Result<TaylorRemainder> {
    let rho0 = &eq.density;
    let f = &eq.interp;
    let a = &eq.ansatz;
    check_masses(d.total_mass(), rho0.total_mass(), MASS_TOLERANCE)?;
    let h = h_fluid(d, a, f, reference, None)?.h_value;
    let h0 = h_fluid(rho0, a, f, reference, None)?.h_value;
    let dist = distance_fluid(d, eq)?;

    let q = f.kernel();
    let upper = d.outer_radius().max(rho0.outer_radius());
    let breaks = merge_grids(d.grid(), rho0.grid());
    let fields = &eq.fields;
    let lin_newton = FOUR_PI
        * integrate_merged(&breaks, upper, |r| {
            r * r * fields.un_at(r) * (d.rho_at(r) - rho0.rho_at(r))
        });
    let lin_mond = FOUR_PI
        * integrate_merged(&breaks, upper, |r| {
            r * r * fields.ulam_at(r) * (d.rho_at(r) - rho0.rho_at(r))
        });
    let newton_part = epot_newton(d) - epot_newton(rho0) - lin_newton;
    let mond_part = epot_q(d, reference, &q)? - epot_q(rho0, reference, &q)? - lin_mond;
    let newton_identity = -0.5
        * integrate_merged(&breaks, upper, |r| {
            if r > 0.0 {
                let dm = d.mass_at(r) - rho0.mass_at(r);
                dm * dm / (r * r)
            } else {
                0.0
            }
        });
    Ok(TaylorRemainder {
        remainder: h - h0 - dist,
        newton_part,
        newton_identity,
        mond_part,
        grad_l2_sq: grad_deviation(d, rho0, 2.0)?.powi(2),
        grad_l32_pow: grad_deviation(d, rho0, 1.5)?.powf(1.5),
    })
}

/// `(1/4π) ∫_{r ≤ R̄} 4π r² Q(gN) dr`, the bound on `−E_pot^Q` from the
/// first step of the energy estimate, with `R̄` the reference radius.
pub fn epot_q_lower_bound(d: &RadialDensity, reference: &ReferenceDensity, q: &QKernel) -> f64 {
    let upper = reference.support_radius();
    if upper == 0.0 {
        return 0.0;
    }
    integrate_merged(&merge_grids(d.grid(), &reference.breakpoints()), upper, |r| {
        r * r * q.value(d.gn_at(r))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{shoot, SolverOptions};
    use crate::quad::Adaptive;
    use crate::radial_field::standard_grid;
    use approx::assert_relative_eq;

    fn ball(m: f64, r: f64, n: usize) -> RadialDensity {
        RadialDensity::uniform_ball(m, r, n).unwrap()
    }

    fn model() -> EquilibriumModel {
        let o = SolverOptions {
            grid_nodes: 1000,
            exterior_nodes: 100,
            ..SolverOptions::default()
        };
        shoot(
            &AnsatzFunction::quadratic(),
            1.0,
            &InterpolationFunction::sqrt(),
            &o,
        )
        .unwrap()
    }

    #[test]
    fn newtonian_self_energy_of_ball() {
        assert_relative_eq!(epot_newton(&ball(1.0, 1.0, 100)), -0.6, max_relative = 1e-12);
        let zero =
            RadialDensity::new(standard_grid(1.0, 10), vec![0.0; standard_grid(1.0, 10).len()]).unwrap();
        assert_eq!(epot_newton(&zero), 0.0);
    }

    #[test]
    fn casimir_of_ball() {
        let rho = 3.0 / (4.0 * std::f64::consts::PI);
        let d = ball(1.0, 1.0, 100);
        let c = casimir(&d, &AnsatzFunction::quadratic()).unwrap();
        assert_relative_eq!(c, 3.0 / (8.0 * std::f64::consts::PI), max_relative = 1e-12);
        assert_relative_eq!(d.rho()[0], rho, max_relative = 1e-14);
        let kin = AnsatzFunction::kinetic(0.5, 1.0).unwrap();
        assert!(casimir(&d, &kin).is_err());
    }

    #[test]
    fn epot_q_between_two_balls() {
        // ∫₀² r² (Q(ḡ) − Q(g)) dr with both fields piecewise power laws
        let f = InterpolationFunction::sqrt();
        let q = f.kernel();
        let d = ball(1.0, 1.0, 400);
        let reference = ReferenceDensity::uniform_ball(1.0, 2.0).unwrap();
        let c = 2.0 / 3.0;
        let oracle = Adaptive::new(1e-13)
            .integrate(
                |r: f64| r * r * c * ((r / 8.0).powf(1.5) - (1.0 / (r * r)).powf(1.5)),
                1.0,
                2.0,
            )
            .unwrap()
            + Adaptive::new(1e-13)
                .integrate(|r: f64| r * r * c * ((r / 8.0).powf(1.5) - r.powf(1.5)), 0.0, 1.0)
                .unwrap();
        assert_relative_eq!(epot_q(&d, &reference, &q).unwrap(), oracle, max_relative = 1e-10);
        assert_eq!(
            epot_q(&d, &ReferenceDensity::Profile(d.clone()), &q).unwrap(),
            0.0
        );
        let heavy = ReferenceDensity::uniform_ball(1.1, 1.0).unwrap();
        assert!(epot_q(&d, &heavy, &q).unwrap_err().is_validation());
    }

    #[test]
    fn report_sums_components() {
        let f = InterpolationFunction::simple();
        let d = ball(2.0, 0.5, 200);
        let r = h_fluid(
            &d,
            &AnsatzFunction::quadratic(),
            &f,
            &ReferenceDensity::matching(&d),
            Some(&d),
        )
        .unwrap();
        assert!(r.epot_newton <= 0.0 && r.casimir >= 0.0 && r.ekin == 0.0);
        assert_relative_eq!(r.h_value, r.epot_newton + r.epot_q + r.casimir + r.ekin);
        assert_relative_eq!(r.norm_l1, 2.0, max_relative = 1e-12);
        assert_eq!((r.grad_l2_dev, r.grad_l32_dev), (0.0, 0.0));
        let csv = r.to_csv();
        let names: Vec<&str> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(
            names,
            [
                "epot_newton",
                "epot_q",
                "casimir",
                "ekin",
                "h_value",
                "norm_l1",
                "norm_l65",
                "grad_l2_dev",
                "grad_l32_dev"
            ]
        );
    }

    #[test]
    fn distance_vanishes_at_equilibrium_and_is_positive_nearby() {
        let eq = model();
        assert_eq!(distance_fluid(&eq.density, &eq).unwrap(), 0.0);
        let phi = bump_perturbation(
            eq.density.grid(),
            0.2 * eq.support_radius,
            0.7 * eq.support_radius,
            0.15 * eq.support_radius,
        );
        let p = eq.density.perturbed(&phi, 0.05).unwrap();
        assert!(distance_fluid(&p, &eq).unwrap() > 0.0);
        let ball = RadialDensity::uniform_ball(eq.density.total_mass(), eq.support_radius, 500).unwrap();
        assert!(distance_fluid(&ball, &eq).unwrap() > 0.0);
        let light = ball.perturbed(&vec![0.0; ball.len()], 0.0).unwrap();
        let light = RadialDensity::new(
            light.grid().to_vec(),
            light.rho().iter().map(|x| 0.9 * x).collect(),
        )
        .unwrap();
        assert!(distance_fluid(&light, &eq).unwrap_err().is_validation());
    }

    #[test]
    fn directional_derivative_converges() {
        let d = ball(1.0, 1.0, 400);
        let phi = bump_perturbation(d.grid(), 0.3, 0.75, 0.2);
        let reference = ReferenceDensity::matching(&d);
        let f = InterpolationFunction::sqrt();
        let dd = epotq_directional_derivative(&d, &phi, &reference, &f, &[1e-2, 1e-3, 1e-4]).unwrap();
        assert!(dd.error_order.unwrap() >= 0.9, "{dd:?}");
        assert!(dd.errors()[2] < 1e-3 * dd.limit.abs());
        let minus: Vec<f64> = phi.iter().map(|x| -x).collect();
        let neg = epotq_directional_derivative(&d, &minus, &reference, &f, &[1e-4]).unwrap();
        assert_relative_eq!(neg.limit, -dd.limit, max_relative = 1e-12);
        let zero = epotq_directional_derivative(&d, &vec![0.0; d.len()], &reference, &f, &[1e-2]).unwrap();
        assert_eq!((zero.slopes[0], zero.limit), (0.0, 0.0));
        let lopsided: Vec<f64> = phi.iter().map(|x| x.max(0.0)).collect();
        assert!(
            epotq_directional_derivative(&d, &lopsided, &reference, &f, &[1e-2])
                .unwrap_err()
                .is_validation()
        );
    }

    #[test]
    fn newtonian_part_of_remainder_is_field_energy() {
        let eq = model();
        let reference = ReferenceDensity::matching(&eq.density);
        let r = eq.support_radius;
        let phi = bump_perturbation(eq.density.grid(), 0.25 * r, 0.6 * r, 0.2 * r);
        let p = eq.density.perturbed(&phi, 0.1).unwrap();
        let t = taylor_remainder(&p, &eq, &reference).unwrap();
        assert_relative_eq!(t.newton_part, t.newton_identity, max_relative = 1e-8);
        assert_relative_eq!(
            t.newton_identity,
            -t.grad_l2_sq / (8.0 * std::f64::consts::PI),
            max_relative = 1e-6
        );
        let zero = taylor_remainder(&eq.density, &eq, &reference).unwrap();
        assert_eq!(zero.remainder, 0.0);
    }
}
