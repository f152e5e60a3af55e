use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnsatzKind {
    /// Fluid Casimir density Ψ(ρ), polytropic index `n ∈ (0, 3)`.
    FluidPsi,
    /// Kinetic Casimir density Φ(f), exponent `k ∈ (0, 3/2)`.
    KineticPhi,
}

/// Polytropic Casimir density `c · x^{1 + 1/exponent}`.
///
/// Strictly convex with value and slope zero at the origin; `x` is a mass
/// density for [`AnsatzKind::FluidPsi`] and a phase-space density for
/// [`AnsatzKind::KineticPhi`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnsatzFunction {
    pub kind: AnsatzKind,
    pub exponent: f64,
    pub coefficient: f64,
}

impl AnsatzFunction {
    pub fn fluid(n: f64, c: f64) -> Result<Self> {
        if !(n > 0.0 && n < 3.0) {
            return Err(Error::Domain(format!(
                "fluid exponent n must lie in (0, 3), got {n}"
            )));
        }
        Self::checked(AnsatzKind::FluidPsi, n, c)
    }

    pub fn kinetic(k: f64, c: f64) -> Result<Self> {
        if !(k > 0.0 && k < 1.5) {
            return Err(Error::Domain(format!(
                "kinetic exponent k must lie in (0, 3/2), got {k}"
            )));
        }
        Self::checked(AnsatzKind::KineticPhi, k, c)
    }

    fn checked(kind: AnsatzKind, exponent: f64, coefficient: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(Error::Domain(format!(
                "ansatz coefficient must be positive, got {coefficient}"
            )));
        }
        Ok(Self {
            kind,
            exponent,
            coefficient,
        })
    }

    /// Ψ(ρ) = ρ²/2, the polytrope used for the fluid mass-curve study.
    pub fn quadratic() -> Self {
        Self {
            kind: AnsatzKind::FluidPsi,
            exponent: 1.0,
            coefficient: 0.5,
        }
    }

    /// Power `1 + 1/exponent`.
    pub fn power(&self) -> f64 {
        1.0 + 1.0 / self.exponent
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.coefficient * x.powf(self.power())
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.coefficient * self.power() * x.powf(1.0 / self.exponent)
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let p = self.power();
        self.coefficient * p * (p - 1.0) * x.powf(1.0 / self.exponent - 1.0)
    }

    /// `(Ψ′)⁻¹(η)` for `η > 0`, and `0` for `η ≤ 0`.
    pub fn inverse_derivative(&self, eta: f64) -> f64 {
        if eta <= 0.0 {
            0.0
        } else {
            (eta / (self.coefficient * self.power())).powf(self.exponent)
        }
    }
}

impl fmt::Display for AnsatzFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AnsatzKind::FluidPsi => write!(f, "fluid n={} c={}", self.exponent, self.coefficient),
            AnsatzKind::KineticPhi => {
                write!(f, "kinetic k={} c={}", self.exponent, self.coefficient)
            }
        }
    }
}

impl FromStr for AnsatzFunction {
    type Err = Error;

    /// Parses the `Display` form, e.g. `fluid n=1 c=0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("cannot parse ansatz `{s}`"));
        let mut parts = s.split_whitespace();
        let kind = parts.next().ok_or_else(bad)?;
        let mut exponent = None;
        let mut coefficient = None;
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(bad)?;
            let v: f64 = v.parse().map_err(|_| bad())?;
            match k {
                "n" | "k" => exponent = Some(v),
                "c" => coefficient = Some(v),
                _ => return Err(bad()),
            }
        }
        let (e, c) = (exponent.ok_or_else(bad)?, coefficient.ok_or_else(bad)?);
        match kind {
            "fluid" => Self::fluid(e, c),
            "kinetic" => Self::kinetic(e, c),
            _ => Err(bad()),
        }
    }
}
