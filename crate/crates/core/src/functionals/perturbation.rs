//! Smooth, compactly supported, mass-neutral perturbation profiles.

use rand::Rng;

use crate::radial_field::RadialDensity;

/// `(1 − ((r − c)/w)²)³` on `|r − c| < w`, zero elsewhere.
pub fn bump(r: f64, c: f64, w: f64) -> f64 {
    let x = (r - c) / w;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - x * x).powi(3)
    }
}

use crate::radial_field::net_mass as nodal_mass;

/// Nodal values of `bump(c₁) − γ · bump(c₂)`, both of width `w`, with `γ`
/// chosen so the piecewise-linear profile carries zero mass.
pub fn bump_perturbation(grid: &[f64], c1: f64, c2: f64, w: f64) -> Vec<f64> {
    let b1: Vec<f64> = grid.iter().map(|&r| bump(r, c1, w)).collect();
    let b2: Vec<f64> = grid.iter().map(|&r| bump(r, c2, w)).collect();
    let gamma = nodal_mass(grid, &b1) / nodal_mass(grid, &b2);
    b1.iter().zip(&b2).map(|(a, b)| a - gamma * b).collect()
}

/// A random mass-neutral perturbation `φ` with `ρ₀ + φ ≥ 0`.
///
/// The negative bump sits inside the support of `ρ₀` and the positive one
/// anywhere in `[0, 1.5 R₀]`, so `φ ≥ 0` where `ρ₀ = 0`. The amplitude is a
/// random fraction of the largest one keeping the sum non-negative.
pub fn random_admissible<R: Rng>(rho0: &RadialDensity, rng: &mut R) -> Vec<f64> {
    let r0 = rho0.support_radius();
    let grid = rho0.grid();
    loop {
        let c2 = rng.gen_range(0.05..0.8) * r0;
        let w = rng.gen_range(0.05..0.4) * r0;
        let w = w.min(0.95 * r0 - c2).max(0.02 * r0);
        let c1 = rng.gen_range(0.0..1.5) * r0;
        let phi = bump_perturbation(grid, c1, c2, w);
        if phi.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let max_amp = phi
            .iter()
            .zip(rho0.rho())
            .filter(|(p, _)| **p < 0.0)
            .map(|(p, r)| r / -p)
            .fold(f64::INFINITY, f64::min);
        if !(max_amp.is_finite() && max_amp > 0.0) {
            continue;
        }
        let amp = rng.gen_range(0.01..0.99) * max_amp;
        return phi.iter().map(|p| amp * p).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial_field::standard_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bump_shape() {
        assert_eq!(bump(1.0, 1.0, 0.5), 1.0);
        assert_eq!(bump(1.5, 1.0, 0.5), 0.0);
        assert!(bump(1.2, 1.0, 0.5) > 0.0);
    }

    #[test]
    fn perturbations_are_neutral_and_admissible() {
        let d = RadialDensity::from_fn(standard_grid(1.5, 600), |r| (1.0 - r * r).max(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let phi = random_admissible(&d, &mut rng);
            let scale: f64 = nodal_mass(d.grid(), &phi.iter().map(|x| x.abs()).collect::<Vec<_>>());
            assert!(nodal_mass(d.grid(), &phi).abs() <= 1e-13 * scale);
            let p = d.perturbed(&phi, 1.0).unwrap();
            assert!(p.rho().iter().all(|&x| x >= 0.0));
        }
    }
}
