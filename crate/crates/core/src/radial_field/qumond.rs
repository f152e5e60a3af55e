//! Direct evaluation of the QUMOND correction potential
//!
//! `U^λ(x) = (1/4π) ∫ λ(|∇U^N(y)|) ∇U^N(y) · ((x−y)/|x−y|³ + y/|y|³) dy`
//!
//! as a genuine 3D integral, independent of the radial formula used by
//! [`potentials`](super::potentials). With `x` on the polar axis the azimuth
//! integrates to `2π`, leaving nested adaptive rules in `s = |y|` and
//! `μ = cos θ`. The kernel is singular at `y = x`; the radial integral is
//! split at `s = |x|` and the angular one uses `μ = 1 − t²`, which removes the
//! `(1 − μ)^{-1/2}` behaviour on the diagonal.

use std::cell::RefCell;

use rayon::prelude::*;

use super::RadialDensity;
use crate::error::{Error, Result};
use crate::interpolation::InterpolationFunction;
use crate::quad::Adaptive;

#[derive(Debug, Clone, Copy)]
pub struct QumondOptions {
    /// Relative tolerance on each `U^λ(x)`.
    pub rel_tol: f64,
    /// Radial integration runs to `outer_factor · max(|x|, grid edge)`.
    pub outer_factor: f64,
    pub max_panels: usize,
}

impl Default for QumondOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            outer_factor: 2.0,
            max_panels: 4000,
        }
    }
}

/// `U^λ` at each radius in `radii` by 3D quadrature; `U^λ(0) = 0`.
pub fn qumond_direct(
    d: &RadialDensity,
    f: &InterpolationFunction,
    radii: &[f64],
    opts: &QumondOptions,
) -> Result<Vec<f64>> {
    if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::Domain(format!(
            "probe radius must be finite and >= 0, got {r}"
        )));
    }
    radii.par_iter().map(|&x| single_radius(d, f, x, opts)).collect()
}

fn single_radius(d: &RadialDensity, f: &InterpolationFunction, x: f64, opts: &QumondOptions) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    let edge = d.outer_radius();
    let s_max = opts.outer_factor * x.max(edge);
    let mut breaks = vec![0.0, x, s_max];
    let support = d.support_radius();
    if support > 0.0 && support < s_max && (support - x).abs() > 1e-12 * x {
        breaks.push(support);
    }
    breaks.sort_by(f64::total_cmp);
    let mut inner_abs = opts.rel_tol * 1e-3;
    for retry in 0..3 {
        let (total, outer_err, inner_err) = radial_pass(d, f, x, &breaks, inner_abs, opts);
        let err = outer_err + inner_err;
        let requested = opts.rel_tol * total.abs();
        if err <= requested.max(1e-14) {
            return Ok(total);
        }
        if retry == 2 || outer_err > 0.5 * requested || inner_abs < 1e-15 {
            return Err(Error::ToleranceNotMet {
                estimate: total,
                error: err,
                requested,
            });
        }
        // a small result from cancelling contributions: tighten the angular
        // integrals against the size of the result
        inner_abs *= (0.1 * requested / inner_err).min(0.5);
    }
    unreachable!()
}

/// `(U^λ(x), outer error, propagated angular error)` for one angular tolerance.
fn radial_pass(
    d: &RadialDensity,
    f: &InterpolationFunction,
    x: f64,
    breaks: &[f64],
    inner_abs: f64,
    opts: &QumondOptions,
) -> (f64, f64, f64) {
    let inner_rule = Adaptive {
        rel_tol: opts.rel_tol * 1e-2,
        abs_tol: inner_abs,
        max_panels: opts.max_panels,
    };
    let inner_errors = RefCell::new(Vec::new());

    // s² ∫ [(xμ − s)/|x−y|³ + 1/s²] dμ, written in t with μ = 1 − t²
    let angular = |s: f64| -> f64 {
        if s == 0.0 {
            return 2.0;
        }
        let dx = x - s;
        let integrand = |t: f64| {
            let mu = 1.0 - t * t;
            let dist2 = dx * dx + 2.0 * x * s * t * t;
            let kern = if dist2 > 0.0 {
                s * s * (x * mu - s) / (dist2 * dist2.sqrt())
            } else {
                // isolated point y = x, never hit by interior Kronrod nodes
                0.0
            };
            2.0 * t * (kern + 1.0)
        };
        let (v, e) = inner_rule.integrate_with_error(&integrand, 0.0, std::f64::consts::SQRT_2);
        inner_errors.borrow_mut().push((s, e));
        v
    };
    let radial = |s: f64| 0.5 * f.boost(d.gn_at(s)) * angular(s);

    let outer_rule = Adaptive {
        rel_tol: opts.rel_tol * 0.1,
        abs_tol: 0.0,
        max_panels: opts.max_panels,
    };
    let mut total = 0.0;
    let mut err = 0.0;
    for w in breaks.windows(2) {
        let (v, e) = outer_rule.integrate_with_error(&radial, w[0], w[1]);
        total += v;
        err += e;
    }
    // angular errors weighted by ½ λ(gN) gN, trapezoid over the visited radii
    let mut pts = inner_errors.into_inner();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let inner: f64 = pts
        .windows(2)
        .map(|w| {
            let h = |(s, e): (f64, f64)| 0.5 * f.boost(d.gn_at(s)) * e;
            0.5 * (w[1].0 - w[0].0) * (h(w[0]) + h(w[1]))
        })
        .sum();
    (total, err, inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial_field::{potentials, standard_grid, PotentialNormalization};
    use approx::assert_relative_eq;

    #[test]
    fn origin_is_zero() {
        let d = RadialDensity::uniform_ball(1.0, 1.0, 100).unwrap();
        let v = qumond_direct(
            &d,
            &InterpolationFunction::sqrt(),
            &[0.0],
            &QumondOptions::default(),
        )
        .unwrap();
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn uniform_ball_matches_radial_integral() {
        let d = RadialDensity::uniform_ball(1.0, 1.0, 400).unwrap();
        let f = InterpolationFunction::sqrt();
        let p = potentials(&d, &f, PotentialNormalization::default());
        let v = qumond_direct(&d, &f, &[0.7, 5.0], &QumondOptions::default()).unwrap();
        assert_relative_eq!(v[0], p.ulam_at(0.7), max_relative = 1e-3);
        // exterior: U^λ(R₀) + √M log(5/R₀)
        assert_relative_eq!(v[1], p.ulam_at(1.0) + 5f64.ln(), max_relative = 1e-3);
    }

    #[test]
    fn simple_family_smooth_profile() {
        let d = RadialDensity::from_fn(standard_grid(1.0, 300), |r| (1.0 - r * r).powi(2)).unwrap();
        let f = InterpolationFunction::simple();
        let p = potentials(&d, &f, PotentialNormalization::default());
        let radii = [0.2, 0.55, 1.0, 3.0];
        let v = qumond_direct(&d, &f, &radii, &QumondOptions::default()).unwrap();
        for (r, u) in radii.iter().zip(v) {
            assert_relative_eq!(u, p.ulam_at(*r), max_relative = 1e-3);
        }
    }

    #[test]
    fn rejects_bad_radius() {
        let d = RadialDensity::uniform_ball(1.0, 1.0, 50).unwrap();
        assert!(qumond_direct(
            &d,
            &InterpolationFunction::sqrt(),
            &[-1.0],
            &QumondOptions::default()
        )
        .is_err());
    }
}
