//! Run configuration as flat `key = value` text with dotted keys.
//!
//! ```text
//! # comments and blank lines are ignored
//! lambda.family = sqrt
//! ansatz.kind = fluid
//! ansatz.exponent = 1
//! dynamics.n = 100000
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::dynamics::RunOptions;
use crate::equilibrium::{reduce_phi_to_psi, SolverOptions};
use crate::error::{Error, Result};
use crate::functionals::{AnsatzFunction, AnsatzKind, DEFAULT_REFERENCE_RADIUS};
use crate::interpolation::{Family, InterpolationFunction};
use crate::radial_field::PotentialNormalization;

/// Density samples used to reduce a kinetic ansatz for the fluid commands.
const REDUCTION_SAMPLES: [f64; 5] = [1e-4, 1e-2, 1.0, 1e2, 1e4];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub a0: f64,
    pub ansatz_kind: AnsatzKind,
    pub ansatz_exponent: f64,
    pub ansatz_coefficient: f64,
    /// Used by `lift` and `perturb` when the ansatz itself is a fluid one.
    pub kinetic_exponent: f64,
    pub kinetic_coefficient: f64,
    /// Target mass of lifted models.
    pub mass: f64,
    pub grid_resolution: usize,
    /// Outer grid radius in units of the support radius.
    pub grid_outer_radius: f64,
    pub exterior_nodes: usize,
    pub normalization: PotentialNormalization,
    pub reference_radius: f64,
    pub solver_rtol: f64,
    pub dynamics_n: usize,
    pub dt_frac: f64,
    pub t_end_dyn: f64,
    pub samples_per_dyn: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        let run = RunOptions::default();
        let psi = AnsatzFunction::quadratic();
        Self {
            family: Family::Sqrt,
            a0: 1.0,
            ansatz_kind: psi.kind,
            ansatz_exponent: psi.exponent,
            ansatz_coefficient: psi.coefficient,
            kinetic_exponent: 0.5,
            kinetic_coefficient: 1.0,
            mass: 1.0,
            grid_resolution: solver.grid_nodes,
            grid_outer_radius: solver.exterior_factor,
            exterior_nodes: solver.exterior_nodes,
            normalization: solver.normalization,
            reference_radius: DEFAULT_REFERENCE_RADIUS,
            solver_rtol: solver.rtol,
            dynamics_n: run.shells,
            dt_frac: run.dt_frac,
            t_end_dyn: run.t_end_dyn,
            samples_per_dyn: run.samples_per_dyn,
            seed: run.seed,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("`{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`, got `{line}`", i + 1))
            })?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lambda.family" => self.family = value.parse()?,
            "lambda.a0" => self.a0 = parse_value(key, value)?,
            "ansatz.kind" => {
                self.ansatz_kind = match value {
                    "fluid" => AnsatzKind::FluidPsi,
                    "kinetic" => AnsatzKind::KineticPhi,
                    _ => {
                        return Err(Error::Parse(format!(
                            "`ansatz.kind` must be fluid or kinetic, got `{value}`"
                        )))
                    }
                }
            }
            "ansatz.exponent" => self.ansatz_exponent = parse_value(key, value)?,
            "ansatz.coefficient" => self.ansatz_coefficient = parse_value(key, value)?,
            "kinetic.exponent" => self.kinetic_exponent = parse_value(key, value)?,
            "kinetic.coefficient" => self.kinetic_coefficient = parse_value(key, value)?,
            "model.mass" => self.mass = parse_value(key, value)?,
            "grid.resolution" => self.grid_resolution = parse_value(key, value)?,
            "grid.outer_radius" => self.grid_outer_radius = parse_value(key, value)?,
            "grid.exterior_nodes" => self.exterior_nodes = parse_value(key, value)?,
            "potential.normalization" => self.normalization = value.parse()?,
            "reference.radius" => self.reference_radius = parse_value(key, value)?,
            "solver.rtol" => self.solver_rtol = parse_value(key, value)?,
            "dynamics.n" => self.dynamics_n = parse_value(key, value)?,
            "dynamics.dt_frac" => self.dt_frac = parse_value(key, value)?,
            "dynamics.t_end_dyn" => self.t_end_dyn = parse_value(key, value)?,
            "dynamics.samples_per_dyn" => self.samples_per_dyn = parse_value(key, value)?,
            "dynamics.seed" => self.seed = parse_value(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(Error::Parse(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(self.a0 > 0.0 && self.a0.is_finite()) {
            return bad(format!("lambda.a0 must be positive, got {}", self.a0));
        }
        self.ansatz().map_err(|e| Error::Validation(e.to_string()))?;
        self.kinetic_ansatz()
            .map_err(|e| Error::Validation(e.to_string()))?;
        for (name, v) in [
            ("model.mass", self.mass),
            ("reference.radius", self.reference_radius),
            ("solver.rtol", self.solver_rtol),
            ("dynamics.dt_frac", self.dt_frac),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.grid_outer_radius > 1.0) {
            return bad(format!(
                "grid.outer_radius must exceed 1, got {}",
                self.grid_outer_radius
            ));
        }
        if self.grid_resolution < 10 || self.exterior_nodes < 2 {
            return bad("grid.resolution >= 10 and grid.exterior_nodes >= 2 required".into());
        }
        if !(self.t_end_dyn >= 0.0) || self.samples_per_dyn == 0 {
            return bad("dynamics.t_end_dyn >= 0 and dynamics.samples_per_dyn >= 1 required".into());
        }
        Ok(())
    }

    pub fn interpolation(&self) -> Result<InterpolationFunction> {
        InterpolationFunction::new(self.family, self.a0)
    }

    /// The configured ansatz as given.
    pub fn ansatz(&self) -> Result<AnsatzFunction> {
        match self.ansatz_kind {
            AnsatzKind::FluidPsi => AnsatzFunction::fluid(self.ansatz_exponent, self.ansatz_coefficient),
            AnsatzKind::KineticPhi => AnsatzFunction::kinetic(self.ansatz_exponent, self.ansatz_coefficient),
        }
    }

    /// The fluid ansatz of the equilibrium problem; a kinetic ansatz is
    /// replaced by its reduction.
    pub fn fluid_ansatz(&self) -> Result<AnsatzFunction> {
        let a = self.ansatz()?;
        match a.kind {
            AnsatzKind::FluidPsi => Ok(a),
            AnsatzKind::KineticPhi => Ok(reduce_phi_to_psi(&a, &REDUCTION_SAMPLES)?.fitted),
        }
    }

    /// The kinetic ansatz: the configured one if kinetic, else the
    /// `kinetic.*` keys.
    pub fn kinetic_ansatz(&self) -> Result<AnsatzFunction> {
        let a = self.ansatz()?;
        match a.kind {
            AnsatzKind::KineticPhi => Ok(a),
            AnsatzKind::FluidPsi => AnsatzFunction::kinetic(self.kinetic_exponent, self.kinetic_coefficient),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            rtol: self.solver_rtol,
            grid_nodes: self.grid_resolution,
            exterior_factor: self.grid_outer_radius,
            exterior_nodes: self.exterior_nodes,
            normalization: self.normalization,
            ..SolverOptions::default()
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            shells: self.dynamics_n,
            dt_frac: self.dt_frac,
            t_end_dyn: self.t_end_dyn,
            samples_per_dyn: self.samples_per_dyn,
            seed: self.seed,
            reference_radius: self.reference_radius,
        }
    }

    /// The configuration as parseable text.
    pub fn to_text(&self) -> String {
        let kind = match self.ansatz_kind {
            AnsatzKind::FluidPsi => "fluid",
            AnsatzKind::KineticPhi => "kinetic",
        };
        let mut out = String::new();
        for (k, v) in [
            ("lambda.family", self.family.to_string()),
            ("lambda.a0", self.a0.to_string()),
            ("ansatz.kind", kind.to_string()),
            ("ansatz.exponent", self.ansatz_exponent.to_string()),
            ("ansatz.coefficient", self.ansatz_coefficient.to_string()),
            ("kinetic.exponent", self.kinetic_exponent.to_string()),
            ("kinetic.coefficient", self.kinetic_coefficient.to_string()),
            ("model.mass", self.mass.to_string()),
            ("grid.resolution", self.grid_resolution.to_string()),
            ("grid.outer_radius", self.grid_outer_radius.to_string()),
            ("grid.exterior_nodes", self.exterior_nodes.to_string()),
            ("potential.normalization", self.normalization.to_string()),
            ("reference.radius", self.reference_radius.to_string()),
            ("solver.rtol", self.solver_rtol.to_string()),
            ("dynamics.n", self.dynamics_n.to_string()),
            ("dynamics.dt_frac", self.dt_frac.to_string()),
            ("dynamics.t_end_dyn", self.t_end_dyn.to_string()),
            ("dynamics.samples_per_dyn", self.samples_per_dyn.to_string()),
            ("dynamics.seed", self.seed.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
