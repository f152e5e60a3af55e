use std::fmt::Write as _;

use rayon::prelude::*;

use super::{shoot, shoot_surface, EquilibriumModel, SolverOptions};
use crate::error::{Error, Result};
use crate::functionals::AnsatzFunction;
use crate::interpolation::InterpolationFunction;
use crate::quad::{bracketed_root, linear_fit, logspace};
use crate::radial_field::fmt_f64;

/// Scan points with `s` at or below this value enter the deep-MOND fit.
pub const DEEP_THRESHOLD: f64 = 1e-2;
/// Scan points with `s` at or above this value enter the Newtonian fit.
pub const NEWTON_THRESHOLD: f64 = 1e2;

/// Least-squares fit of `M = coefficient · s^exponent` in log-log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub coefficient: f64,
    pub exponent: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
}

impl PowerLawFit {
    pub fn fit(s: &[f64], m: &[f64]) -> Option<Self> {
        if s.len() < 2 {
            return None;
        }
        let ls: Vec<f64> = s.iter().map(|x| x.ln()).collect();
        let lm: Vec<f64> = m.iter().map(|x| x.ln()).collect();
        let (b, a) = linear_fit(&ls, &lm);
        Some(Self {
            coefficient: b.exp(),
            exponent: a,
            s_min: s[0],
            s_max: s[s.len() - 1],
            points: s.len(),
        })
    }
}

/// Least-squares `c` in `M ≈ c · s^p` for a fixed power `p`.
pub fn fixed_power_coefficient(s: &[f64], m: &[f64], p: f64) -> f64 {
    let num: f64 = s.iter().zip(m).map(|(s, m)| s.powf(p) * m).sum();
    let den: f64 = s.iter().map(|s| s.powf(2.0 * p)).sum();
    num / den
}

/// Least-squares `c` in `ln M ≈ ln c + p ln s`, the geometric mean of `M / s^p`.
pub fn log_fixed_power_coefficient(s: &[f64], m: &[f64], p: f64) -> f64 {
    let mean = s.iter().zip(m).map(|(s, m)| m.ln() - p * s.ln()).sum::<f64>() / s.len() as f64;
    mean.exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassCurve {
    pub s_values: Vec<f64>,
    pub masses: Vec<f64>,
    pub radii: Vec<f64>,
    pub fit_deep: Option<PowerLawFit>,
    pub fit_newton: Option<PowerLawFit>,
}

impl MassCurve {
    pub fn is_strictly_increasing(&self) -> bool {
        self.masses.windows(2).all(|w| w[1] > w[0])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,M_s,R_s\n");
        for ((s, m), r) in self.s_values.iter().zip(&self.masses).zip(&self.radii) {
            let _ = writeln!(out, "{},{},{}", fmt_f64(*s), fmt_f64(*m), fmt_f64(*r));
        }
        out
    }

    /// Scan points inside `[lo, hi]`.
    fn range(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        self.s_values
            .iter()
            .zip(&self.masses)
            .filter(|(s, _)| **s >= lo * (1.0 - 1e-12) && **s <= hi * (1.0 + 1e-12))
            .map(|(s, m)| (*s, *m))
            .unzip()
    }

    /// Deep-regime fit with the exponent pinned to 2.
    pub fn deep_fixed(&self) -> Option<PowerLawFit> {
        self.fixed(0.0, DEEP_THRESHOLD, 2.0)
    }

    /// Newtonian-regime fit with the exponent pinned to 1.
    pub fn newton_fixed(&self) -> Option<PowerLawFit> {
        self.fixed(NEWTON_THRESHOLD, f64::INFINITY, 1.0)
    }

    fn fixed(&self, lo: f64, hi: f64, p: f64) -> Option<PowerLawFit> {
        let (s, m) = self.range(lo, hi);
        (s.len() >= 2).then(|| PowerLawFit {
            coefficient: log_fixed_power_coefficient(&s, &m, p),
            exponent: p,
            s_min: s[0],
            s_max: s[s.len() - 1],
            points: s.len(),
        })
    }

    /// `regime,s_min,s_max,points,coefficient,exponent`; the `_fixed` rows
    /// pin the exponent and fit only the coefficient.
    pub fn fits_csv(&self) -> String {
        let mut out = String::from("regime,s_min,s_max,points,coefficient,exponent\n");
        for (name, fit) in [
            ("deep", self.fit_deep),
            ("deep_fixed", self.deep_fixed()),
            ("newton", self.fit_newton),
            ("newton_fixed", self.newton_fixed()),
        ] {
            if let Some(f) = fit {
                let _ = writeln!(
                    out,
                    "{name},{},{},{},{},{}",
                    fmt_f64(f.s_min),
                    fmt_f64(f.s_max),
                    f.points,
                    fmt_f64(f.coefficient),
                    fmt_f64(f.exponent)
                );
            }
        }
        out
    }
}

fn validate_scan(s_min: f64, s_max: f64, points: usize) -> Result<()> {
    if !(s_min > 0.0 && s_max > s_min && s_max.is_finite()) {
        return Err(Error::Validation(format!(
            "need 0 < s_min < s_max, got s_min = {s_min}, s_max = {s_max}"
        )));
    }
    if points < 2 {
        return Err(Error::Validation(format!(
            "a mass curve needs at least 2 points, got {points}"
        )));
    }
    Ok(())
}

/// Shoots at `points` log-spaced central densities and fits both regimes.
pub fn mass_curve(
    ansatz: &AnsatzFunction,
    f: &InterpolationFunction,
    s_min: f64,
    s_max: f64,
    points: usize,
    opts: &SolverOptions,
) -> Result<MassCurve> {
    validate_scan(s_min, s_max, points)?;
    let s_values = logspace(s_min, s_max, points);
    let surfaces = s_values
        .par_iter()
        .map(|&s| {
            shoot_surface(ansatz, s, f, opts).map_err(|e| Error::AtCentralValue {
                s,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let masses: Vec<f64> = surfaces.iter().map(|x| x.mass).collect();
    let radii = surfaces.iter().map(|x| x.radius).collect();
    let select = |keep: &dyn Fn(f64) -> bool| {
        let (s, m): (Vec<f64>, Vec<f64>) = s_values
            .iter()
            .zip(&masses)
            .filter(|(s, _)| keep(**s))
            .map(|(s, m)| (*s, *m))
            .unzip();
        PowerLawFit::fit(&s, &m)
    };
    let fit_deep = select(&|s| s <= DEEP_THRESHOLD * (1.0 + 1e-12));
    let fit_newton = select(&|s| s >= NEWTON_THRESHOLD * (1.0 - 1e-12));
    Ok(MassCurve {
        s_values,
        masses,
        radii,
        fit_deep,
        fit_newton,
    })
}

/// Finds the central density whose equilibrium has mass `target` and
/// returns that model. `bracket` is a range of central densities.
pub fn solve_for_mass(
    ansatz: &AnsatzFunction,
    f: &InterpolationFunction,
    target: f64,
    bracket: (f64, f64),
    opts: &SolverOptions,
) -> Result<EquilibriumModel> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::Domain(format!(
            "target mass must be positive, got {target}"
        )));
    }
    let (lo, hi) = bracket;
    validate_scan(lo, hi, 2)?;
    let mass = |s: f64| -> Result<f64> {
        shoot_surface(ansatz, s, f, opts)
            .map(|x| x.mass)
            .map_err(|e| Error::AtCentralValue {
                s,
                source: Box::new(e),
            })
    };
    let (mass_lo, mass_hi) = (mass(lo)?, mass(hi)?);
    if !(mass_lo <= target && target <= mass_hi) {
        return Err(Error::NeedsWiderBracket {
            lo,
            hi,
            mass_lo,
            mass_hi,
            target,
        });
    }
    // root in ln s of ln M_s − ln M, which is close to linear on either regime
    let mut failure = None;
    let g = |x: f64| match mass(x.exp()) {
        Ok(m) => m.ln() - target.ln(),
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let x = bracketed_root(g, lo.ln(), hi.ln(), 1e-12, 200)?;
    if let Some(e) = failure {
        return Err(e);
    }
    shoot(ansatz, x.exp(), f, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_law_fit_recovers_exact_law() {
        let s = logspace(1e-3, 1.0, 7);
        let m: Vec<f64> = s.iter().map(|s| 3.0 * s.powf(1.7)).collect();
        let fit = PowerLawFit::fit(&s, &m).unwrap();
        assert_relative_eq!(fit.exponent, 1.7, max_relative = 1e-12);
        assert_relative_eq!(fit.coefficient, 3.0, max_relative = 1e-12);
        assert_relative_eq!(fixed_power_coefficient(&s, &m, 1.7), 3.0, max_relative = 1e-12);
        assert_relative_eq!(
            log_fixed_power_coefficient(&s, &m, 1.7),
            3.0,
            max_relative = 1e-12
        );
        // geometric mean: M/s² = 1 and 4 give 2
        assert_relative_eq!(
            log_fixed_power_coefficient(&[1.0, 2.0], &[1.0, 16.0], 2.0),
            2.0,
            max_relative = 1e-15
        );
        assert!(PowerLawFit::fit(&s[..1], &m[..1]).is_none());
    }

    #[test]
    fn scan_validation() {
        let a = AnsatzFunction::quadratic();
        let f = InterpolationFunction::sqrt();
        let o = SolverOptions::default();
        assert!(mass_curve(&a, &f, 1e-3, 1.0, 1, &o).unwrap_err().is_validation());
        assert!(mass_curve(&a, &f, 0.0, 1.0, 5, &o).unwrap_err().is_validation());
        assert!(mass_curve(&a, &f, 2.0, 1.0, 5, &o).unwrap_err().is_validation());
    }

    #[test]
    fn csv_layout() {
        let a = AnsatzFunction::quadratic();
        let f = InterpolationFunction::sqrt();
        let c = mass_curve(&a, &f, 1e-3, 1e3, 7, &SolverOptions::default()).unwrap();
        assert!(c.is_strictly_increasing());
        let csv = c.to_csv();
        assert!(csv.starts_with("s,M_s,R_s\n"));
        assert_eq!(csv.lines().count(), 8);
        let fits = c.fits_csv();
        assert!(fits.contains("\ndeep,") && fits.contains("\nnewton,"));
        assert!(fits.contains("\ndeep_fixed,") && fits.contains("\nnewton_fixed,"));
    }

    #[test]
    fn target_mass_round_trip() {
        let a = AnsatzFunction::quadratic();
        let f = InterpolationFunction::simple();
        let o = SolverOptions {
            grid_nodes: 400,
            exterior_nodes: 50,
            ..SolverOptions::default()
        };
        let s0 = 0.37;
        let m0 = shoot_surface(&a, s0, &f, &o).unwrap().mass;
        let model = solve_for_mass(&a, &f, m0, (1e-3, 1e2), &o).unwrap();
        assert_relative_eq!(model.central_value, s0, max_relative = 1e-6);
        assert!(matches!(
            solve_for_mass(&a, &f, 0.0, (1e-3, 1e2), &o),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            solve_for_mass(&a, &f, 1e9, (1e-3, 1e2), &o),
            Err(Error::NeedsWiderBracket { .. })
        ));
    }
}
