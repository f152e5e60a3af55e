//! Reduction of a kinetic Casimir `Φ(f)` to the fluid `Ψ(ρ)` it induces.
//!
//! `Ψ(ρ) = inf { ∫ (½|v|² g + Φ(g)) dv : ∫ g dv = ρ }`. The infimum is
//! attained by `g(v) = (Φ′)⁻¹((μ − |v|²/2)₊)` with the multiplier `μ` set by
//! the density constraint, so each table entry costs one root find over
//! velocity quadratures.

use super::{Error, Result};
use crate::functionals::{AnsatzFunction, AnsatzKind};
use crate::quad::{bracketed_root, linear_fit, Adaptive};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// `4π ∫₀^{vc} v² G(v) dv`, written in `v = vc cos θ` so that a
/// `(vc² − v²)^k` edge becomes a power of `sin θ`.
pub(crate) fn speed_integral<G: Fn(f64) -> f64>(vc: f64, g: G) -> f64 {
    if !(vc > 0.0) {
        return 0.0;
    }
    let vc3 = vc * vc * vc;
    let v = Adaptive {
        rel_tol: 1e-13,
        abs_tol: 0.0,
        max_panels: 500,
    }
    .integrate_with_error(
        &|t: f64| {
            let (s, c) = t.sin_cos();
            g(vc * c) * c * c * s
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
    )
    .0;
    FOUR_PI * vc3 * v
}

/// `∫ (Φ′)⁻¹((μ − |v|²/2)₊) |v|^m dv`.
pub fn velocity_moment(phi: &AnsatzFunction, mu: f64, m: i32) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    speed_integral((2.0 * mu).sqrt(), |v| {
        phi.inverse_derivative(mu - 0.5 * v * v) * v.powi(m)
    })
}

/// `∫ (½|v|² g + Φ(g)) dv` for the minimizing profile at multiplier `μ`.
fn reduced_energy(phi: &AnsatzFunction, mu: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    speed_integral((2.0 * mu).sqrt(), |v| {
        let g = phi.inverse_derivative(mu - 0.5 * v * v);
        0.5 * v * v * g + phi.value(g)
    })
}

/// Effective fluid ansatz of a kinetic one.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiReduction {
    pub phi: AnsatzFunction,
    pub rho: Vec<f64>,
    /// Multiplier `μ = Ψ′(ρ)` per sample.
    pub mu: Vec<f64>,
    pub psi: Vec<f64>,
    /// Least-squares polytrope `c′ ρ^{1 + 1/n}` through the positive samples.
    pub fitted: AnsatzFunction,
}

impl PsiReduction {
    pub fn fitted_n(&self) -> f64 {
        self.fitted.exponent
    }
}

pub fn reduce_phi_to_psi(phi: &AnsatzFunction, rho_samples: &[f64]) -> Result<PsiReduction> {
    if phi.kind != AnsatzKind::KineticPhi {
        return Err(Error::Domain("the reduction needs a kinetic ansatz Φ".into()));
    }
    if !(phi.exponent > 0.0 && phi.exponent < 1.5) {
        return Err(Error::Domain(format!(
            "kinetic exponent k must lie in (0, 3/2), got {}",
            phi.exponent
        )));
    }
    if let Some(r) = rho_samples.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::Domain(format!("density samples must be >= 0, got {r}")));
    }
    let mut mu = Vec::with_capacity(rho_samples.len());
    let mut psi = Vec::with_capacity(rho_samples.len());
    for &rho in rho_samples {
        if rho == 0.0 {
            mu.push(0.0);
            psi.push(0.0);
            continue;
        }
        // ρ(μ) is a power of μ; bracket ln μ by doubling outward
        let g = |x: f64| velocity_moment(phi, x.exp(), 0).ln() - rho.ln();
        let (mut lo, mut hi) = (-1.0, 1.0);
        while g(lo) > 0.0 {
            lo *= 2.0;
        }
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        let x = bracketed_root(g, lo, hi, 1e-14, 300)?;
        mu.push(x.exp());
        psi.push(reduced_energy(phi, x.exp()));
    }
    let (lr, lp): (Vec<f64>, Vec<f64>) = rho_samples
        .iter()
        .zip(&psi)
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, p)| (r.ln(), p.ln()))
        .unzip();
    if lr.len() < 2 {
        return Err(Error::Validation(
            "the polytrope fit needs two positive density samples".into(),
        ));
    }
    let (intercept, slope) = linear_fit(&lr, &lp);
    let fitted = AnsatzFunction::fluid(1.0 / (slope - 1.0), intercept.exp())?;
    Ok(PsiReduction {
        phi: *phi,
        rho: rho_samples.to_vec(),
        mu,
        psi,
        fitted,
    })
}
