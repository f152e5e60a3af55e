//! Steady states by shooting from the central density.
//!
//! On the support of an equilibrium the Euler–Lagrange identity
//! `Ψ′(ρ(r)) = E₀ − U^M(r)` holds. Differentiating it gives, for the
//! "enthalpy" `η = Ψ′(ρ)`,
//!
//! ```text
//! η′ = −(1 + λ(M/r²)) M/r²,     M′ = 4π r² (Ψ′)⁻¹(η),
//! ```
//!
//! which is integrated outward from `η(0) = Ψ′(s)`, `M(0) = 0` until `η`
//! reaches zero at the surface `R_s`. The independent variable is `u = √r`:
//! the Mondian term behaves like `√r` at the centre and is smooth in `u`.

mod kinetic;
mod mass_curve;
mod ode;
mod reduce;

pub use kinetic::{
    distance_kinetic, lift_kinetic, EnergyTruncated, IsotropicDf, KineticModel, VelocityScaled,
};
pub use mass_curve::{
    fixed_power_coefficient, log_fixed_power_coefficient, mass_curve, solve_for_mass, MassCurve, PowerLawFit,
    DEEP_THRESHOLD, NEWTON_THRESHOLD,
};
pub use reduce::{reduce_phi_to_psi, velocity_moment, PsiReduction};

use crate::error::{Error, Result};
use crate::functionals::{AnsatzFunction, AnsatzKind};
use crate::interpolation::{Family, InterpolationFunction};
use crate::quad::{bracketed_root, GaussLegendre};
use crate::radial_field::{
    grid_with_exterior, potentials, FieldProfile, PotentialNormalization, RadialDensity, Snapshot,
    FIRST_NODE_FRACTION,
};
use ode::{advance, dp_step, State, Tolerance};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative tolerance of the embedded Runge–Kutta pair.
    pub rtol: f64,
    /// Grid nodes on `[0, R_s]`.
    pub grid_nodes: usize,
    /// The grid continues with zero density up to `exterior_factor · R_s`.
    pub exterior_factor: f64,
    pub exterior_nodes: usize,
    pub normalization: PotentialNormalization,
    /// Give up if the density is still positive at this multiple of the
    /// a-priori radius scale.
    pub r_max_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            grid_nodes: 4000,
            exterior_factor: 2.0,
            exterior_nodes: 400,
            normalization: PotentialNormalization::default(),
            r_max_factor: 1e4,
        }
    }
}

/// Radius and mass of the solution with central density `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub central_value: f64,
    pub radius: f64,
    pub mass: f64,
}

struct Problem<'a> {
    ansatz: &'a AnsatzFunction,
    interp: &'a InterpolationFunction,
    s: f64,
    eta0: f64,
}

impl Problem<'_> {
    fn new<'a>(ansatz: &'a AnsatzFunction, interp: &'a InterpolationFunction, s: f64) -> Result<Problem<'a>> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!(
                "central density must be positive, got {s}"
            )));
        }
        if ansatz.kind != AnsatzKind::FluidPsi {
            return Err(Error::Domain("shooting needs a fluid ansatz Ψ".into()));
        }
        Ok(Problem {
            ansatz,
            interp,
            s,
            eta0: ansatz.derivative(s),
        })
    }

    /// Radius over which `η` would drop to zero for a constant-density core,
    /// taking the smaller of the Newtonian and the deep-MOND estimate.
    fn radius_scale(&self) -> f64 {
        let newton = (3.0 * self.eta0 / (2.0 * std::f64::consts::PI * self.s)).sqrt();
        // ∫₀^r Λ₂ √(4π s t / 3) dt = (2Λ₂/3) √(4π s / 3) r^{3/2}
        let coef = 2.0 * self.interp.lambda2() / 3.0 * (FOUR_PI * self.s / 3.0).sqrt();
        let mond = (self.eta0 / coef).powf(2.0 / 3.0);
        newton.min(mond)
    }

    fn rhs(&self, u: f64, y: &State) -> State {
        if u <= 0.0 {
            return [0.0, 0.0];
        }
        let r = u * u;
        let gn = y[1].max(0.0) / (r * r);
        let gm = self.interp.mond_acceleration(gn);
        let rho = self.ansatz.inverse_derivative(y[0]);
        [-2.0 * u * gm, 2.0 * FOUR_PI * u * r * r * rho]
    }

    /// Constant-density series on `[0, r]`.
    fn series(&self, r: f64) -> State {
        let k = FOUR_PI * self.s / 3.0;
        let drop = GaussLegendre::five().integrate(
            |w| 2.0 * w * self.interp.mond_acceleration(k * w * w),
            0.0,
            r.sqrt(),
        );
        [self.eta0 - drop, k * r * r * r]
    }

    fn tolerance(&self, rtol: f64, r_scale: f64) -> Tolerance {
        Tolerance {
            rtol,
            atol: [
                1e-3 * rtol * self.eta0,
                1e-3 * rtol * FOUR_PI / 3.0 * self.s * r_scale.powi(3),
            ],
        }
    }
}

fn surface_impl(problem: &Problem<'_>, opts: &SolverOptions) -> Result<Surface> {
    let r_scale = problem.radius_scale();
    let r1 = FIRST_NODE_FRACTION * r_scale;
    let u1 = r1.sqrt();
    let u_max = (opts.r_max_factor * r_scale).sqrt();
    let tol = problem.tolerance(opts.rtol, r_scale);
    let f = |u: f64, y: &State| problem.rhs(u, y);
    let y1 = problem.series(r1);
    let out = advance(&f, u1, y1, u_max, u1, &tol, |y| y[0] < 0.0).map_err(|e| match e {
        Error::Integrator { r, reason } => Error::Integrator { r: r * r, reason },
        e => e,
    })?;
    if !out.stopped {
        return Err(Error::NoCompactSupport {
            central: problem.s,
            r_max: u_max * u_max,
        });
    }
    // locate η = 0 inside the crossing step
    let (ua, ya) = (out.t, out.y);
    let eta_after = |h: f64| dp_step(&f, ua, &ya, h, &tol).0[0];
    let h_star = bracketed_root(eta_after, 0.0, out.h, 1e-15 * ua, 200)?;
    let y_end = dp_step(&f, ua, &ya, h_star, &tol).0;
    let u_end = ua + h_star;
    Ok(Surface {
        central_value: problem.s,
        radius: u_end * u_end,
        mass: y_end[1],
    })
}

/// Support radius and mass of the equilibrium with central density `s`,
/// without building the full model.
pub fn shoot_surface(
    ansatz: &AnsatzFunction,
    s: f64,
    f: &InterpolationFunction,
    opts: &SolverOptions,
) -> Result<Surface> {
    let problem = Problem::new(ansatz, f, s)?;
    surface_impl(&problem, opts)
}

/// A solved steady state.
#[derive(Debug, Clone)]
pub struct EquilibriumModel {
    pub density: RadialDensity,
    pub fields: FieldProfile,
    pub ansatz: AnsatzFunction,
    pub interp: InterpolationFunction,
    /// `s = ρ(0)`.
    pub central_value: f64,
    /// `E₀ = U^M(R₀)` under the profile's normalization.
    pub cutoff_energy: f64,
    pub support_radius: f64,
    /// Mass from the ODE integration, independent of the output grid.
    pub total_mass: f64,
}

/// Integrates the equilibrium with central density `s` and samples it on a grid.
pub fn shoot(
    ansatz: &AnsatzFunction,
    s: f64,
    f: &InterpolationFunction,
    opts: &SolverOptions,
) -> Result<EquilibriumModel> {
    let problem = Problem::new(ansatz, f, s)?;
    let surf = surface_impl(&problem, opts)?;
    let r_s = surf.radius;
    let grid = grid_with_exterior(
        r_s,
        opts.grid_nodes,
        opts.exterior_factor * r_s,
        opts.exterior_nodes,
    );

    let r_scale = problem.radius_scale();
    let r1 = FIRST_NODE_FRACTION * r_scale;
    let tol = problem.tolerance(opts.rtol, r_scale);
    let rhs = |u: f64, y: &State| problem.rhs(u, y);

    let mut rho = Vec::with_capacity(grid.len());
    let mut u = r1.sqrt();
    let mut y = problem.series(r1);
    let mut h = u;
    for &r in &grid {
        if r >= r_s {
            rho.push(0.0);
            continue;
        }
        let eta = if r <= r1 {
            problem.series(r)[0]
        } else {
            let target = r.sqrt();
            let out = advance(&rhs, u, y, target, h, &tol, |_| false)?;
            u = out.t;
            y = out.y;
            h = out.h;
            y[0]
        };
        rho.push(ansatz.inverse_derivative(eta));
    }
    rho[0] = s;

    let density = RadialDensity::new(grid, rho)?;
    let fields = potentials(&density, f, opts.normalization);
    let cutoff_energy = fields.um_at(r_s);
    Ok(EquilibriumModel {
        density,
        fields,
        ansatz: *ansatz,
        interp: *f,
        central_value: s,
        cutoff_energy,
        support_radius: r_s,
        total_mass: surf.mass,
    })
}

impl EquilibriumModel {
    /// `max |Ψ′(ρ) + U^M − E₀| / |E₀|` over grid nodes with `r ≤ (1 − margin) R₀`.
    pub fn el_residual(&self, margin: f64) -> f64 {
        let limit = self.support_radius * (1.0 - margin);
        let scale = self.cutoff_energy.abs();
        self.density
            .grid()
            .iter()
            .zip(self.density.rho())
            .zip(&self.fields.um)
            .filter(|((r, _), _)| **r <= limit)
            .map(|((_, rho), um)| (self.ansatz.derivative(*rho) + um - self.cutoff_energy).abs())
            .fold(0.0, f64::max)
            / scale
    }

    /// `T_dyn = 2π √(R₀³ / M)`.
    pub fn dynamical_time(&self) -> f64 {
        std::f64::consts::TAU * (self.support_radius.powi(3) / self.total_mass).sqrt()
    }

    pub fn to_snapshot(&self) -> Snapshot {
        Snapshot::from_profile(&self.fields)
            .with_meta("central_value", format!("{:.16e}", self.central_value))
            .with_meta("cutoff_energy", format!("{:.16e}", self.cutoff_energy))
            .with_meta("support_radius", format!("{:.16e}", self.support_radius))
            .with_meta("total_mass", format!("{:.16e}", self.total_mass))
            .with_meta("ansatz", self.ansatz)
            .with_meta("lambda.family", self.interp.family)
            .with_meta("lambda.a0", self.interp.a0)
            .with_meta("normalization", self.fields.normalization())
    }

    /// Rebuilds a model from a snapshot, recomputing the fields and checking
    /// them against the stored columns.
    pub fn from_snapshot(snap: &Snapshot) -> Result<Self> {
        let family: Family = snap
            .get("lambda.family")
            .ok_or_else(|| Error::Parse("snapshot lacks `lambda.family`".into()))?
            .parse()?;
        let interp = InterpolationFunction::new(family, snap.get_f64("lambda.a0")?)?;
        let ansatz: AnsatzFunction = snap
            .get("ansatz")
            .ok_or_else(|| Error::Parse("snapshot lacks `ansatz`".into()))?
            .parse()?;
        let normalization = match snap.get("normalization") {
            Some(n) => n.parse()?,
            None => PotentialNormalization::default(),
        };
        let grid = snap.column("r").expect("fixed columns").to_vec();
        let rho = snap.column("rho").expect("fixed columns").to_vec();
        let density = RadialDensity::new(grid, rho)?;
        let fields = potentials(&density, &interp, normalization);
        for (name, stored, fresh) in [
            ("M", snap.column("M"), density.mass_cum()),
            ("UM", snap.column("UM"), fields.um.as_slice()),
        ] {
            let stored = stored.expect("fixed columns");
            let scale = fresh.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
            if let Some((i, (a, b))) = stored
                .iter()
                .zip(fresh)
                .enumerate()
                .find(|(_, (a, b))| (*a - *b).abs() > 1e-9 * scale)
            {
                return Err(Error::Validation(format!(
                    "snapshot column {name} row {i} is {a:e}, recomputed {b:e}"
                )));
            }
        }
        let support_radius = snap.get_f64("support_radius")?;
        Ok(Self {
            cutoff_energy: fields.um_at(support_radius),
            total_mass: snap.get_f64("total_mass")?,
            central_value: snap.get_f64("central_value")?,
            density,
            fields,
            ansatz,
            interp,
            support_radius,
        })
    }
}
