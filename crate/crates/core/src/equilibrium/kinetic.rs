//! Isotropic distribution functions lifted from fluid equilibria.
//!
//! For a fluid equilibrium whose `Ψ` is the reduction of `Φ`,
//! `f₀(x, v) = (Φ′)⁻¹((E₀ − E)₊)` with `E = |v|²/2 + U^M(r)` has `ρ₀` as its
//! velocity integral. Phase-space integrals are done as `(r, |v|)` double
//! integrals under isotropy.

use super::reduce::{reduce_phi_to_psi, speed_integral};
use super::{solve_for_mass, EquilibriumModel, SolverOptions};
use crate::error::{Error, Result};
use crate::functionals::{epot_newton, epot_q, AnsatzFunction, EnergyReport, ReferenceDensity};
use crate::interpolation::InterpolationFunction;
use crate::radial_field::RadialDensity;

/// Relative mass mismatch tolerated between two distribution functions.
const KINETIC_MASS_TOLERANCE: f64 = 1e-10;

/// Samples of `ρ` used to fit the reduced polytrope.
const REDUCTION_SAMPLES: [f64; 5] = [1e-4, 1e-2, 1.0, 1e2, 1e4];

/// A distribution function depending on `(r, |v|)` only.
pub trait IsotropicDf: Sync {
    fn value(&self, r: f64, v: f64) -> f64;
    /// Speed above which the distribution vanishes at radius `r`.
    fn speed_cutoff(&self, r: f64) -> f64;
}

/// `f₀` together with the fluid equilibrium it reproduces.
#[derive(Debug, Clone)]
pub struct KineticModel {
    pub phi: AnsatzFunction,
    pub base: EquilibriumModel,
    /// `R₁ = √(2(E₀ − min U^M))`.
    pub velocity_support: f64,
}

impl KineticModel {
    /// Wraps an equilibrium whose ansatz is the reduction of `phi`.
    pub fn from_equilibrium(phi: &AnsatzFunction, base: EquilibriumModel) -> Result<Self> {
        let fitted = reduce_phi_to_psi(phi, &REDUCTION_SAMPLES)?.fitted;
        let a = &base.ansatz;
        if (a.exponent - fitted.exponent).abs() > 1e-6 * fitted.exponent
            || (a.coefficient - fitted.coefficient).abs() > 1e-6 * fitted.coefficient
        {
            return Err(Error::Validation(format!(
                "equilibrium ansatz `{a}` is not the reduction `{fitted}` of `{phi}`"
            )));
        }
        let u_min = base.fields.um.iter().copied().fold(f64::INFINITY, f64::min);
        let velocity_support = (2.0 * (base.cutoff_energy - u_min)).max(0.0).sqrt();
        Ok(Self {
            phi: *phi,
            base,
            velocity_support,
        })
    }

    /// `E₀ − U^M(r)`, clipped at zero.
    pub fn binding(&self, r: f64) -> f64 {
        if r >= self.base.support_radius {
            return 0.0;
        }
        (self.base.cutoff_energy - self.base.fields.um_at(r)).max(0.0)
    }

    pub fn f0(&self, r: f64, v: f64) -> f64 {
        self.phi.inverse_derivative(self.binding(r) - 0.5 * v * v)
    }

    /// `∫ f₀(r, v) dv`.
    pub fn density_at(&self, r: f64) -> f64 {
        df_density(self, r)
    }

    /// `max |∫ f₀ dv − ρ₀| / ρ₀(0)` over the grid nodes.
    pub fn density_mismatch(&self) -> f64 {
        let d = &self.base.density;
        d.grid()
            .iter()
            .zip(d.rho())
            .map(|(&r, &rho)| (self.density_at(r) - rho).abs())
            .fold(0.0, f64::max)
            / self.base.central_value
    }

    pub fn mass(&self) -> f64 {
        df_mass(self, &self.base.density)
    }

    /// `∬ ½|v|² f₀ dv dx`.
    pub fn ekin(&self) -> f64 {
        phase_integral(&self.base.density, |r| {
            let b = self.binding(r);
            speed_integral((2.0 * b).sqrt(), |v| {
                0.5 * v * v * self.phi.inverse_derivative(b - 0.5 * v * v)
            })
        })
    }

    /// `∬ Φ(f₀) dv dx`.
    pub fn casimir(&self) -> f64 {
        phase_integral(&self.base.density, |r| {
            let b = self.binding(r);
            speed_integral((2.0 * b).sqrt(), |v| {
                self.phi.value(self.phi.inverse_derivative(b - 0.5 * v * v))
            })
        })
    }

    /// `H_B(f₀) = E_pot^M(ρ_{f₀}) + E_kin(f₀) + C(f₀)`, all from velocity
    /// quadratures. The potential energy is evaluated on `∫ f₀ dv` sampled
    /// at the equilibrium grid, against a uniform ball of radius
    /// `reference_radius` carrying that density's mass.
    pub fn h_b(&self, reference_radius: f64) -> Result<EnergyReport> {
        let d = &self.base.density;
        let rho_f = RadialDensity::new(
            d.grid().to_vec(),
            d.grid().iter().map(|&r| self.density_at(r)).collect(),
        )?;
        let reference = ReferenceDensity::uniform_ball(rho_f.total_mass(), reference_radius)?;
        let epot_newton = epot_newton(&rho_f);
        let epot_q = epot_q(&rho_f, &reference, &self.base.interp.kernel())?;
        let ekin = self.ekin();
        let casimir = self.casimir();
        Ok(EnergyReport {
            epot_newton,
            epot_q,
            casimir,
            ekin,
            h_value: epot_newton + epot_q + ekin + casimir,
            norm_l1: rho_f.lp_norm(1.0),
            norm_l65: rho_f.lp_norm(1.2),
            norm_lpsi: rho_f.lp_norm(self.base.ansatz.power()),
            grad_l2_dev: 0.0,
            grad_l32_dev: 0.0,
        })
    }
}

impl IsotropicDf for KineticModel {
    fn value(&self, r: f64, v: f64) -> f64 {
        self.f0(r, v)
    }

    fn speed_cutoff(&self, r: f64) -> f64 {
        (2.0 * self.binding(r)).sqrt()
    }
}

/// `4π ∫ r² F(r) dr` on the equilibrium grid.
fn phase_integral<F: Fn(f64) -> f64>(grid: &RadialDensity, f: F) -> f64 {
    grid.integrate_volume(f)
}

fn df_density<D: IsotropicDf + ?Sized>(df: &D, r: f64) -> f64 {
    speed_integral(df.speed_cutoff(r), |v| df.value(r, v))
}

fn df_mass<D: IsotropicDf + ?Sized>(df: &D, grid: &RadialDensity) -> f64 {
    phase_integral(grid, |r| df_density(df, r))
}

/// `f(r, v) = f₀(r, v/s)/s³`: velocities stretched by `s`, mass unchanged.
#[derive(Debug, Clone, Copy)]
pub struct VelocityScaled<'a> {
    pub model: &'a KineticModel,
    pub factor: f64,
}

impl IsotropicDf for VelocityScaled<'_> {
    fn value(&self, r: f64, v: f64) -> f64 {
        self.model.f0(r, v / self.factor) / self.factor.powi(3)
    }

    fn speed_cutoff(&self, r: f64) -> f64 {
        self.factor * self.model.speed_cutoff(r)
    }
}

/// `f₀` cut off at energy `E₀ − δ` and rescaled to the original mass.
#[derive(Debug, Clone, Copy)]
pub struct EnergyTruncated<'a> {
    pub model: &'a KineticModel,
    pub delta: f64,
    pub scale: f64,
}

impl<'a> EnergyTruncated<'a> {
    pub fn new(model: &'a KineticModel, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::Domain(format!(
                "truncation depth must be >= 0, got {delta}"
            )));
        }
        let mut t = Self {
            model,
            delta,
            scale: 1.0,
        };
        let m = df_mass(&t, &model.base.density);
        if !(m > 0.0) {
            return Err(Error::Domain(format!(
                "truncation at depth {delta} removes all mass"
            )));
        }
        t.scale = model.mass() / m;
        Ok(t)
    }
}

impl IsotropicDf for EnergyTruncated<'_> {
    fn value(&self, r: f64, v: f64) -> f64 {
        if 0.5 * v * v >= self.model.binding(r) - self.delta {
            0.0
        } else {
            self.scale * self.model.f0(r, v)
        }
    }

    fn speed_cutoff(&self, r: f64) -> f64 {
        (2.0 * (self.model.binding(r) - self.delta)).max(0.0).sqrt()
    }
}

/// `d(f, f₀) = ∬ [Φ(f) − Φ(f₀) + (E − E₀)(f − f₀)] dv dx`.
///
/// As for the fluid distance the `E₀` term integrates to zero for equal
/// masses and makes the integrand pointwise non-negative. `f` must vanish
/// outside the support radius of `eq`.
pub fn distance_kinetic<D: IsotropicDf + ?Sized>(f: &D, eq: &KineticModel) -> Result<f64> {
    let grid = &eq.base.density;
    let (m, m0) = (df_mass(f, grid), eq.mass());
    if (m - m0).abs() > KINETIC_MASS_TOLERANCE * m0 {
        return Err(Error::Validation(format!(
            "masses must agree: {m:.17e} vs {m0:.17e}"
        )));
    }
    let phi = &eq.phi;
    Ok(phase_integral(grid, |r| {
        let b = eq.binding(r);
        // E − E₀ = v²/2 − b
        let own = speed_integral(f.speed_cutoff(r), |v| {
            let x = f.value(r, v);
            phi.value(x) + (0.5 * v * v - b) * x
        });
        let base = speed_integral(eq.speed_cutoff(r), |v| {
            let x = eq.f0(r, v);
            phi.value(x) + (0.5 * v * v - b) * x
        });
        own - base
    }))
}

/// Solves the fluid problem for the reduction of `phi` at mass `mass` and
/// lifts the result to `f₀`.
pub fn lift_kinetic(
    phi: &AnsatzFunction,
    f: &InterpolationFunction,
    mass: f64,
    opts: &SolverOptions,
) -> Result<KineticModel> {
    let psi = reduce_phi_to_psi(phi, &REDUCTION_SAMPLES)?.fitted;
    let mut bracket = (1e-3, 1e3);
    let mut widenings = 0;
    let base = loop {
        match solve_for_mass(&psi, f, mass, bracket, opts) {
            Err(Error::NeedsWiderBracket { .. }) if widenings < 6 => {
                bracket = (bracket.0 * 1e-3, bracket.1 * 1e3);
                widenings += 1;
            }
            other => break other?,
        }
    };
    KineticModel::from_equilibrium(phi, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> KineticModel {
        let o = SolverOptions {
            grid_nodes: 600,
            exterior_nodes: 60,
            ..SolverOptions::default()
        };
        let phi = AnsatzFunction::kinetic(0.5, 1.0).unwrap();
        lift_kinetic(&phi, &InterpolationFunction::sqrt(), 1.0, &o).unwrap()
    }

    #[test]
    fn lift_reproduces_density_and_mass() {
        let m = model();
        assert_relative_eq!(m.base.total_mass, 1.0, max_relative = 1e-7);
        assert!(m.density_mismatch() < 1e-4, "{}", m.density_mismatch());
        assert_relative_eq!(m.mass(), m.base.density.total_mass(), max_relative = 1e-6);
        assert!(m.velocity_support > 0.0);
    }

    #[test]
    fn cutoff_support() {
        let m = model();
        let r = 0.3 * m.base.support_radius;
        let vc = m.speed_cutoff(r);
        assert!(m.f0(r, vc * 1.0001) == 0.0 && m.f0(r, vc * 0.999) > 0.0);
        assert_eq!(m.f0(1.01 * m.base.support_radius, 0.0), 0.0);
        assert!(vc <= m.velocity_support);
    }

    #[test]
    fn k_half_density_coefficient() {
        // ρ = (1/√3) 2^{5/2} π B(3/2, 3/2) (E₀ − U^M)², B(3/2, 3/2) = π/8
        let m = model();
        let coef = 2f64.powf(2.5) * std::f64::consts::PI.powi(2) / 8.0 / 3f64.sqrt();
        let r = 0.4 * m.base.support_radius;
        assert_relative_eq!(m.density_at(r), coef * m.binding(r).powi(2), max_relative = 1e-10);
    }

    #[test]
    fn kinetic_distance_sign() {
        let m = model();
        assert_eq!(distance_kinetic(&m, &m).unwrap(), 0.0);
        let stretched = VelocityScaled {
            model: &m,
            factor: 1.01,
        };
        assert!(distance_kinetic(&stretched, &m).unwrap() > 0.0);
        let cut = EnergyTruncated::new(&m, 0.05 * m.binding(0.0)).unwrap();
        assert!(distance_kinetic(&cut, &m).unwrap() > 0.0);
        let heavy = EnergyTruncated {
            model: &m,
            delta: 0.0,
            scale: 1.1,
        };
        assert!(distance_kinetic(&heavy, &m).unwrap_err().is_validation());
    }

    #[test]
    fn rejects_mismatched_base() {
        let m = model();
        let other = AnsatzFunction::kinetic(0.7, 1.0).unwrap();
        assert!(KineticModel::from_equilibrium(&other, m.base.clone())
            .unwrap_err()
            .is_validation());
    }
}
